//! Line-oriented recipe manifest.
//!
//! One recipe per line, comma separated:
//! `seed,target,noise,interferer,snr_db,sir_db,rt60`.
//! `-` marks an absent noise or interferer path and `0` for `rt60` means
//! anechoic. Blank lines and `#` comments are skipped.

use std::path::PathBuf;

use crate::datagen::rir::RT60_RANGE;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub seed: u64,
    pub target: PathBuf,
    pub noise: Option<PathBuf>,
    pub interferer: Option<PathBuf>,
    pub snr_db: f64,
    pub sir_db: f64,
    /// `None` for an anechoic target.
    pub rt60: Option<f64>,
}

fn optional_path(s: &str) -> Option<PathBuf> {
    (s != "-").then(|| PathBuf::from(s))
}

fn number<T: std::str::FromStr>(line: usize, what: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Manifest(format!("line {line}: cannot parse {what} `{s}`")))
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let f: Vec<&str> = body.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(Error::Manifest(format!("line {line}: expected 7 fields, found {}", f.len())));
        }
        if f[1].is_empty() || f[1] == "-" {
            return Err(Error::Manifest(format!("line {line}: target path is required")));
        }
        let rt60: f64 = number(line, "rt60", f[6])?;
        let rt60 = if rt60 == 0.0 {
            None
        } else if (RT60_RANGE.0..=RT60_RANGE.1).contains(&rt60) {
            Some(rt60)
        } else {
            return Err(Error::Manifest(format!(
                "line {line}: rt60 {rt60} outside [{}, {}] (use 0 for anechoic)",
                RT60_RANGE.0, RT60_RANGE.1
            )));
        };
        out.push(ManifestEntry {
            seed: number(line, "seed", f[0])?,
            target: PathBuf::from(f[1]),
            noise: optional_path(f[2]),
            interferer: optional_path(f[3]),
            snr_db: number(line, "snr", f[4])?,
            sir_db: number(line, "sir", f[5])?,
            rt60,
        });
    }
    Ok(out)
}

impl ManifestEntry {
    pub fn to_line(&self) -> String {
        let p = |o: &Option<PathBuf>| o.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        format!(
            "{},{},{},{},{},{},{}",
            self.seed,
            self.target.display(),
            p(&self.noise),
            p(&self.interferer),
            self.snr_db,
            self.sir_db,
            self.rt60.unwrap_or(0.0)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_optional_fields() {
        let text = "# seed,target,noise,interferer,snr,sir,rt60\n\n7,a.wav,n.wav,-,5,10,0.4\n8, b.wav ,-,i.wav,-5,0,0 # dry\n";
        let m = parse_manifest(text).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].noise, Some(PathBuf::from("n.wav")));
        assert_eq!(m[0].interferer, None);
        assert_eq!(m[0].rt60, Some(0.4));
        assert_eq!(m[1].target, PathBuf::from("b.wav"));
        assert_eq!(m[1].rt60, None);
        assert_eq!(parse_manifest(&m[0].to_line()).unwrap()[0], m[0]);
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in ["1,a.wav,-,-,5,5", "x,a.wav,-,-,5,5,0.3", "1,-,-,-,5,5,0.3", "1,a.wav,-,-,5,5,2.0"] {
            let e = parse_manifest(bad).unwrap_err();
            assert!(matches!(e, Error::Manifest(ref m) if m.starts_with("line 1")), "{bad}: {e}");
        }
    }
}
