use super::*;
use crate::dsp::MODEL_SAMPLE_RATE;
use rand::{Rng, SeedableRng};

fn noise(n: usize, seed: u64, amp: f32) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioBuffer::new((0..n).map(|_| rng.gen_range(-amp..amp)).collect(), MODEL_SAMPLE_RATE).unwrap()
}

fn toy(seed: u64) -> Model {
    build_model(&ModelConfig { com_head_init: HeadInit::Random, ..ModelConfig::toy() }, seed).unwrap()
}

fn embedding(dim: usize, seed: u64) -> SpeakerEmbedding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SpeakerEmbedding::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn default_registry_has_every_group_trainable() {
    let m = build_model(&ModelConfig::default(), 0).unwrap();
    let mut fams: Vec<&str> = m.registry().groups().into_iter().map(Group::family).collect();
    fams.sort();
    fams.dedup();
    assert_eq!(fams, ["com_net", "fusion", "mag_net", "spk_enc_com", "spk_enc_mag"]);
    assert!(m.registry().entries().all(|e| e.trainable));
}

#[test]
fn same_seed_gives_identical_parameters() {
    let (a, b) = (toy(11), toy(11));
    for (x, y) in a.registry().entries().zip(b.registry().entries()) {
        assert_eq!(x.name, y.name);
        assert_eq!(x.tensor.data(), y.tensor.data());
    }
    let c = toy(12);
    assert!(a.registry().entries().zip(c.registry().entries()).any(|(x, y)| x.tensor != y.tensor));
}

#[test]
fn toy_parameter_count_matches_hand_ledger() {
    // Layer by layer for C=4, D=4*121=484, S-TCM channels 4, H=8, speaker BLSTM 4 per direction:
    //   FD(1->4)=68, FD(5->4)=260, FD(4->4)=212, FU(8->4)=404, head=5
    //   S-TCM=4468, LSTM=15776, LSTM projection=4356, group=2*4468+15776+4356=29068
    //   speaker encoder = 15552 + 4329 + 17 = 19898, fusion = 8*484+484 = 4356
    let m = toy(0);
    let r = m.registry();
    assert_eq!(count_params(r, Some("mag_net")).unwrap(), 68 + 260 + 29068 + 2 * 404 + 5);
    assert_eq!(count_params(r, Some("com_net")).unwrap(), 212 + 260 + 29068 + 2 * (2 * 404 + 5));
    assert_eq!(count_params(r, Some("spk_enc_mag")).unwrap(), 19898);
    assert_eq!(count_params(r, Some("spk_enc_com")).unwrap(), 19898);
    assert_eq!(count_params(r, Some("fusion")).unwrap(), 2 * 4356);
    assert_eq!(count_params(r, None).unwrap(), 109_883);
    assert!(matches!(count_params(r, Some("decoder")), Err(Error::UnknownGroup(_))));
}

#[test]
fn toy_runs_end_to_end() {
    let m = toy(1);
    let e = embedding(8, 2);
    let out = m.enhance_offline(&noise(9600, 3, 0.5), &noise(4800, 4, 0.5), &e).unwrap();
    assert_eq!(out.len(), 9600);
    assert!(out.samples.iter().all(|v| v.is_finite()));
}

#[test]
fn magnet_shapes_zero_input_and_mask_bound() {
    let m = toy(5);
    let cond = m.condition(&noise(4800, 6, 0.3), &embedding(8, 7)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for t in [1usize, 7, 100] {
        let x = Tensor::from_vec(&[t, 481], (0..t * 481).map(|_| rng.gen_range(0.0..3.0)).collect()).unwrap();
        let y = m.magnet_forward(&x, &cond).unwrap();
        assert_eq!(y.shape(), &[t, 481]);
        assert!(y.data().iter().zip(x.data()).all(|(a, b)| a <= b && *a >= 0.0));
        let z = m.magnet_forward(&Tensor::zeros(&[t, 481]), &cond).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }
    assert!(m.magnet_forward(&Tensor::zeros(&[3, 480]), &cond).is_err());
}

#[test]
fn zero_com_heads_pass_stage_one_through() {
    let m = build_model(&ModelConfig::toy(), 9).unwrap();
    let cond = m.condition(&noise(4800, 10, 0.3), &embedding(8, 11)).unwrap();
    let d = m.enhance_detailed(&noise(4800, 12, 0.3), &cond).unwrap();
    assert_eq!(d.output_spec, d.stage1_spec);
    assert_eq!(d.output_spec.bins(), 481);
    // ceil(4800 / 480) hops plus the tail frame
    assert_eq!(d.output_spec.frames(), 11);
}

#[test]
fn comnet_rejects_mismatched_configs() {
    let m = toy(13);
    let cond = m.condition(&noise(4800, 14, 0.3), &embedding(8, 15)).unwrap();
    let a = ComplexSpectrogram::zeros(4, m.config().stft);
    let b = ComplexSpectrogram::zeros(4, crate::dsp::StftConfig::single_resolution());
    assert!(m.comnet_forward(&a, &b, &cond).is_err());
    assert!(m.comnet_forward(&a, &ComplexSpectrogram::zeros(5, m.config().stft), &cond).is_err());
}

#[test]
fn output_length_and_determinism() {
    let m = toy(16);
    let e = embedding(8, 17);
    let enroll = noise(4800, 18, 0.3);
    for n in [4800usize, 48000, 48001] {
        let x = noise(n, 19, 0.3);
        let a = m.enhance_offline(&x, &enroll, &e).unwrap();
        let b = m.enhance_offline(&x, &enroll, &e).unwrap();
        assert_eq!(a.len(), n);
        assert_eq!(a.samples, b.samples);
    }
    let silent = m.enhance_offline(&AudioBuffer::zeros(4800, MODEL_SAMPLE_RATE), &enroll, &e).unwrap();
    assert!(silent.samples.iter().all(|v| v.is_finite()));
}

#[test]
fn short_enrollment_and_wrong_embedding_are_errors() {
    let m = toy(20);
    assert!(matches!(
        m.condition(&noise(959, 1, 0.3), &embedding(8, 1)),
        Err(Error::InputTooShort(_))
    ));
    assert!(matches!(m.condition(&noise(4800, 1, 0.3), &embedding(7, 1)), Err(Error::Shape { .. })));
}

#[test]
fn streaming_matches_offline_and_replays_after_reset() {
    let m = toy(21);
    let e = embedding(8, 22);
    let enroll = noise(9600, 23, 0.3);
    let x = noise(48000, 24, 0.5);
    let off = m.enhance_offline(&x, &enroll, &e).unwrap();
    let mut s = m.stream(&enroll, &e).unwrap();
    let lat = s.latency();
    let mut flushed = x.samples.clone();
    flushed.resize(48000 + lat, 0.0);
    let stream = s.process(&flushed).unwrap();
    let mut worst = 0.0f32;
    for i in 0..48000 {
        worst = worst.max((stream[i + lat] - off.samples[i]).abs());
    }
    assert!(worst <= 1e-4, "{worst}");
    s.reset();
    assert_eq!(s.process(&flushed).unwrap(), stream);
    assert!(s.push(&[0.0; 479]).is_err());
}

#[test]
fn every_parameter_is_read_by_a_forward_pass() {
    let m = toy(25);
    m.registry().reset_read_counts();
    m.enhance_offline(&noise(4800, 26, 0.3), &noise(4800, 27, 0.3), &embedding(8, 28)).unwrap();
    let unread: Vec<&str> = m.registry().read_counts().into_iter().filter(|(_, n)| *n == 0).map(|(s, _)| s).collect();
    assert!(unread.is_empty(), "{unread:?}");
}

#[test]
fn two_enrollments_give_identical_conditioning() {
    let m = toy(29);
    let enroll = noise(4800, 30, 0.3);
    let e = embedding(8, 31);
    assert_eq!(m.condition(&enroll, &e).unwrap(), m.condition(&enroll, &e).unwrap());
}
