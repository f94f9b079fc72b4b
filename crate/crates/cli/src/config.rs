use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Fully resolved experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: u32,
    pub a: f64,
    pub sigma: f64,
    pub rho: f64,
    /// `None` picks the default horizon from the closed-loop poles.
    pub t_end: Option<f64>,
    pub dt: f64,
    /// `None` means noiseless.
    pub seed: Option<u64>,
    pub paths: usize,
    pub output: Option<PathBuf>,
    pub seed_stride: u64,
    pub figure: Option<u8>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 1,
            m: 0,
            a: 1.0,
            sigma: 1.0,
            rho: 1.0,
            t_end: None,
            dt: 1e-3,
            seed: None,
            paths: 500,
            output: None,
            seed_stride: 1,
            figure: None,
        }
    }
}

/// Partial settings from one source; later sources win field by field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub n: Option<usize>,
    pub m: Option<u32>,
    pub a: Option<f64>,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = &o.$f { self.$f = v.clone(); } )* };
        }
        take!(n, m, a, sigma, rho, dt, paths);
        if o.t_end.is_some() {
            self.t_end = o.t_end;
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.output.is_some() {
            self.output = o.output.clone();
        }
    }

    /// Figure presets. All use a = 1, σ = ρ = 1 and the default horizon.
    /// 1: n = 1, m = 0, noiseless. 2: n = 1, m = 1, noiseless.
    /// 3: n = 1, m = 0, seed 1, 500 paths.
    pub fn preset(figure: u8) -> Result<Self, CliError> {
        let base = Self { figure: Some(figure), ..Self::default() };
        match figure {
            1 => Ok(base),
            2 => Ok(Self { m: 1, ..base }),
            3 => Ok(Self { seed: Some(1), paths: 500, ..base }),
            other => Err(CliError::Config(format!("unknown figure preset {other}, expected 1, 2 or 3"))),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !self.a.is_finite() {
            return bad(format!("a must be finite, got {}", self.a));
        }
        for (name, v) in [("sigma", self.sigma), ("rho", self.rho), ("dt", self.dt)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if let Some(t) = self.t_end {
            if !(t.is_finite() && t > self.dt) {
                return bad(format!("t_end must be finite and larger than dt, got {t}"));
            }
        }
        Ok(())
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("line {line}: cannot parse {key} = {value}")))
}

/// `key = value` lines, `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Overrides, CliError> {
    let mut o = Overrides::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {lineno}: expected key = value")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "n" => o.n = Some(parse(key, value, lineno)?),
            "m" => o.m = Some(parse(key, value, lineno)?),
            "a" => o.a = Some(parse(key, value, lineno)?),
            "sigma" => o.sigma = Some(parse(key, value, lineno)?),
            "rho" => o.rho = Some(parse(key, value, lineno)?),
            "t_end" => o.t_end = Some(parse(key, value, lineno)?),
            "dt" => o.dt = Some(parse(key, value, lineno)?),
            "seed" => o.seed = Some(parse(key, value, lineno)?),
            "paths" => o.paths = Some(parse(key, value, lineno)?),
            "output" => o.output = Some(PathBuf::from(value)),
            other => return Err(CliError::Config(format!("line {lineno}: unknown key {other}"))),
        }
    }
    Ok(o)
}

pub fn read_config(path: &Path) -> Result<Overrides, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let o = parse_config("# header\nn = 2\n  a=-0.5   # trailing\n\nseed = 7\noutput = out/x.csv\n").unwrap();
        assert_eq!(o.n, Some(2));
        assert_eq!(o.a, Some(-0.5));
        assert_eq!(o.seed, Some(7));
        assert_eq!(o.output, Some(PathBuf::from("out/x.csv")));
        assert_eq!(o.m, None);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_config("n 2").is_err());
        assert!(parse_config("n = two").is_err());
        assert!(parse_config("colour = red").is_err());
    }

    #[test]
    fn later_sources_win() {
        let mut c = ExperimentConfig::preset(2).unwrap();
        c.apply(&Overrides { a: Some(3.0), ..Default::default() });
        c.apply(&Overrides { n: Some(2), ..Default::default() });
        assert_eq!((c.n, c.m, c.a), (2, 1, 3.0));
        assert!(ExperimentConfig::preset(4).is_err());
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        assert!(ExperimentConfig { n: 0, ..Default::default() }.validate().is_err());
        assert!(ExperimentConfig { rho: 0.0, ..Default::default() }.validate().is_err());
        assert!(ExperimentConfig { t_end: Some(-1.0), ..Default::default() }.validate().is_err());
    }
}
