//! Image-method impulse responses for a fixed room at several RT60 targets,
//! with the Schroeder T20 measured on each.

use teapse::datagen::{estimate_rt60, generate_rir_detailed, rt60_to_reflection, simulate_rir, RoomSpec};

fn main() -> teapse::Result<()> {
    let dims = [6.0, 5.0, 3.0];
    let (src, mic) = ([2.0, 3.5, 1.7], [4.3, 1.6, 1.2]);
    println!("target  sabine_beta  sabine_t20  beta      t20");
    for rt60 in [0.2, 0.5, 0.9] {
        let room = RoomSpec::new(dims, src, mic, rt60);
        let sabine = rt60_to_reflection(&room)?;
        let plain = estimate_rt60(&simulate_rir(&room, sabine, None)?)?;
        let g = generate_rir_detailed(&room)?;
        println!(
            "{rt60:<6.1}  {sabine:<11.4}  {plain:<10.3}  {:<8.4}  {:.3}",
            g.beta,
            g.t20.unwrap_or(f64::NAN)
        );
    }

    let room = RoomSpec::new(dims, src, mic, 0.5);
    let anechoic = simulate_rir(&room, 0.0, None)?;
    let d = src.iter().zip(&mic).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let (peak_at, peak) = anechoic
        .samples
        .iter()
        .enumerate()
        .fold((0, 0.0f32), |m, (i, &v)| if v.abs() > m.1.abs() { (i, v) } else { m });
    println!("anechoic: peak {peak:.5} at sample {peak_at}; 1/(4 pi d) = {:.5}", 1.0 / (4.0 * std::f64::consts::PI * d));
    Ok(())
}
