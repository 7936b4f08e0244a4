//! Run configuration: a flat `key = value` file, command-line overrides,
//! documented defaults, and the echo embedded in every output artifact.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::basis::{default_l_max, default_l_min, BasisSpec, LSector, DEFAULT_BASIS_CAP};
use crate::eigensolver::{SolverConfig, DEFAULT_DENSE_CAP};
use crate::error::{ConfigError, Error, Result};

/// Environment variable consulted when `threads` is not configured.
pub const THREADS_ENV: &str = "VORTEXED_THREADS";

pub const DEFAULT_ANISOTROPY: f64 = 0.03;
pub const DEFAULT_OMEGA_LO: f64 = 0.5;
pub const DEFAULT_OMEGA_HI: f64 = 0.99;
pub const DEFAULT_OMEGA_STEPS: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_SEED: u64 = 1;

/// Recognized keys, in echo order.
pub const KEYS: [&str; 17] = [
    "n",
    "g",
    "a",
    "n_ll",
    "l_min",
    "l_max",
    "sector",
    "omega",
    "omega_lo",
    "omega_hi",
    "omega_steps",
    "tol",
    "seed",
    "threads",
    "out_dir",
    "dense_cap",
    "basis_cap",
];

/// Every field is optional until [`RunConfig::resolved`] fills defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub n: Option<usize>,
    pub g: Option<f64>,
    pub a: Option<f64>,
    pub n_ll: Option<u32>,
    pub l_min: Option<i32>,
    pub l_max: Option<i32>,
    pub sector: Option<LSector>,
    pub omega: Option<f64>,
    pub omega_lo: Option<f64>,
    pub omega_hi: Option<f64>,
    pub omega_steps: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub dense_cap: Option<usize>,
    pub basis_cap: Option<usize>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Parse {
        key: key.to_string(),
        value: value.to_string(),
    })
}

fn out_of_range(key: &str, reason: &str) -> ConfigError {
    ConfigError::OutOfRange {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

impl RunConfig {
    /// Parses flat `key = value` text; `#` starts a comment.
    pub fn parse_str(text: &str) -> std::result::Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::parse_str(&text)?)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), ConfigError> {
        match key {
            "n" => self.n = Some(parse_value(key, value)?),
            "g" => self.g = Some(parse_value(key, value)?),
            "a" => self.a = Some(parse_value(key, value)?),
            "n_ll" => self.n_ll = Some(parse_value(key, value)?),
            "l_min" => self.l_min = Some(parse_value(key, value)?),
            "l_max" => self.l_max = Some(parse_value(key, value)?),
            "sector" => self.sector = Some(parse_value(key, value)?),
            "omega" => self.omega = Some(parse_value(key, value)?),
            "omega_lo" => self.omega_lo = Some(parse_value(key, value)?),
            "omega_hi" => self.omega_hi = Some(parse_value(key, value)?),
            "omega_steps" => self.omega_steps = Some(parse_value(key, value)?),
            "tol" => self.tol = Some(parse_value(key, value)?),
            "seed" => self.seed = Some(parse_value(key, value)?),
            "threads" => self.threads = Some(parse_value(key, value)?),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "dense_cap" => self.dense_cap = Some(parse_value(key, value)?),
            "basis_cap" => self.basis_cap = Some(parse_value(key, value)?),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merged(mut self, over: &RunConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f.clone(); } )* };
        }
        take!(
            n,
            g,
            a,
            n_ll,
            l_min,
            l_max,
            sector,
            omega,
            omega_lo,
            omega_hi,
            omega_steps,
            tol,
            seed,
            threads,
            out_dir,
            dense_cap,
            basis_cap
        );
        self
    }

    /// Checks ranges and conflicts without filling defaults.
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        if self.omega.is_some() {
            if self.omega_lo.is_some() {
                return Err(ConfigError::Conflict("omega".into(), "omega_lo".into()));
            }
            if self.omega_hi.is_some() {
                return Err(ConfigError::Conflict("omega".into(), "omega_hi".into()));
            }
        }
        if let Some(n) = self.n {
            if !(2..=255).contains(&n) {
                return Err(out_of_range("n", "must be between 2 and 255"));
            }
        }
        if let Some(g) = self.g {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(out_of_range("g", "must be finite and >= 0"));
            }
        }
        if let Some(a) = self.a {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(out_of_range("a", "must be finite and >= 0"));
            }
        }
        if self.n_ll == Some(0) {
            return Err(out_of_range("n_ll", "must be at least 1"));
        }
        if let (Some(lo), Some(hi)) = (self.l_min, self.l_max) {
            if lo > hi {
                return Err(out_of_range("l_min", "must not exceed l_max"));
            }
        }
        if let Some(w) = self.omega {
            if !(w > 0.0 && w < 1.0) {
                return Err(out_of_range("omega", "must lie in (0, 1)"));
            }
        }
        if let Some(w) = self.omega_lo {
            if !(0.0..1.0).contains(&w) {
                return Err(out_of_range("omega_lo", "must lie in [0, 1)"));
            }
        }
        if let Some(w) = self.omega_hi {
            if !(w > 0.0 && w < 1.0) {
                return Err(out_of_range("omega_hi", "must lie in (0, 1)"));
            }
        }
        if let (Some(lo), Some(hi)) = (self.omega_lo, self.omega_hi) {
            if lo >= hi {
                return Err(out_of_range("omega_lo", "must be below omega_hi"));
            }
        }
        if let Some(s) = self.omega_steps {
            if s < 2 {
                return Err(out_of_range("omega_steps", "must be at least 2"));
            }
        }
        if let Some(t) = self.tol {
            if !(t > 0.0 && t < 1.0) {
                return Err(out_of_range("tol", "must lie in (0, 1)"));
            }
        }
        for (key, v) in [
            ("threads", self.threads),
            ("dense_cap", self.dense_cap),
            ("basis_cap", self.basis_cap),
        ] {
            if v == Some(0) {
                return Err(out_of_range(key, "must be positive"));
            }
        }
        Ok(())
    }

    /// Validated copy with every defaulted field filled in.
    ///
    /// `n` and `g` are required. A rotation range is filled only when no
    /// single `omega` was given.
    pub fn resolved(&self) -> std::result::Result<Self, ConfigError> {
        self.validate()?;
        let n = self.n.ok_or_else(|| ConfigError::MissingKey("n".into()))?;
        self.g.ok_or_else(|| ConfigError::MissingKey("g".into()))?;
        let n_ll = self.n_ll.unwrap_or(1);
        let mut out = self.clone();
        out.a = Some(self.a.unwrap_or(DEFAULT_ANISOTROPY));
        out.n_ll = Some(n_ll);
        out.l_min = Some(self.l_min.unwrap_or(default_l_min(n_ll)));
        out.l_max = Some(self.l_max.unwrap_or(default_l_max(n)));
        out.sector = Some(self.sector.unwrap_or(LSector::Even));
        if self.omega.is_none() {
            out.omega_lo = Some(self.omega_lo.unwrap_or(DEFAULT_OMEGA_LO));
            out.omega_hi = Some(self.omega_hi.unwrap_or(DEFAULT_OMEGA_HI));
        }
        out.omega_steps = Some(self.omega_steps.unwrap_or(DEFAULT_OMEGA_STEPS));
        out.tol = Some(self.tol.unwrap_or(DEFAULT_TOL));
        out.seed = Some(self.seed.unwrap_or(DEFAULT_SEED));
        out.dense_cap = Some(self.dense_cap.unwrap_or(DEFAULT_DENSE_CAP));
        out.basis_cap = Some(self.basis_cap.unwrap_or(DEFAULT_BASIS_CAP));
        out.validate()?;
        Ok(out)
    }

    /// `key = value` lines for every set field, in [`KEYS`] order.
    pub fn to_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                lines.push(format!("{k} = {v}"));
            }
        };
        push("n", self.n.map(|v| v.to_string()));
        push("g", self.g.map(|v| v.to_string()));
        push("a", self.a.map(|v| v.to_string()));
        push("n_ll", self.n_ll.map(|v| v.to_string()));
        push("l_min", self.l_min.map(|v| v.to_string()));
        push("l_max", self.l_max.map(|v| v.to_string()));
        push("sector", self.sector.map(|v| v.to_string()));
        push("omega", self.omega.map(|v| v.to_string()));
        push("omega_lo", self.omega_lo.map(|v| v.to_string()));
        push("omega_hi", self.omega_hi.map(|v| v.to_string()));
        push("omega_steps", self.omega_steps.map(|v| v.to_string()));
        push("tol", self.tol.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("threads", self.threads.map(|v| v.to_string()));
        push("out_dir", self.out_dir.as_ref().map(|p| p.display().to_string()));
        push("dense_cap", self.dense_cap.map(|v| v.to_string()));
        push("basis_cap", self.basis_cap.map(|v| v.to_string()));
        lines
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for line in self.to_lines() {
            let _ = writeln!(s, "{line}");
        }
        s
    }

    /// Basis truncation of a resolved config.
    pub fn basis_spec(&self) -> Result<BasisSpec> {
        let n = self.n.ok_or_else(|| ConfigError::MissingKey("n".into()))?;
        let n_ll = self.n_ll.unwrap_or(1);
        let spec = BasisSpec::new(
            n,
            n_ll,
            self.l_min.unwrap_or(default_l_min(n_ll)),
            self.l_max.unwrap_or(default_l_max(n)),
        )?;
        Ok(spec.with_sector(self.sector.unwrap_or(LSector::Even)))
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol.unwrap_or(DEFAULT_TOL),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            ..SolverConfig::default()
        }
    }

    /// Rotation bracket `(lo, hi)`.
    pub fn omega_range(&self) -> (f64, f64) {
        (
            self.omega_lo.unwrap_or(DEFAULT_OMEGA_LO),
            self.omega_hi.unwrap_or(DEFAULT_OMEGA_HI),
        )
    }

    /// Worker count from the config, else from [`THREADS_ENV`].
    pub fn thread_count(&self) -> Result<Option<usize>> {
        if let Some(t) = self.threads {
            return Ok(Some(t));
        }
        match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(t) if t > 0 => Ok(Some(t)),
                _ => Err(Error::InvalidArgument(format!(
                    "{THREADS_ENV} must be a positive integer, got `{v}`"
                ))),
            },
            Err(_) => Ok(None),
        }
    }
}

/// Dimensionless coupling `g = √(8π) a / λ_z` from the scattering length
/// and the axial oscillator length, in the same unit.
pub fn convert_g(scattering_length: f64, axial_length: f64) -> Result<f64> {
    if !(scattering_length > 0.0 && scattering_length.is_finite()) {
        return Err(Error::InvalidArgument("scattering length must be positive".into()));
    }
    if !(axial_length > 0.0 && axial_length.is_finite()) {
        return Err(Error::InvalidArgument("axial length must be positive".into()));
    }
    Ok((8.0 * std::f64::consts::PI).sqrt() * scattering_length / axial_length)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_overrides_file() {
        let file = RunConfig::parse_str("n = 12\ng = 0.5\na = 0.03\nn_ll = 1\n").unwrap();
        let flags = RunConfig {
            n_ll: Some(2),
            ..RunConfig::default()
        };
        let cfg = file.merged(&flags).resolved().unwrap();
        assert_eq!(cfg.n_ll, Some(2));
        assert_eq!(cfg.l_min, Some(-2));
        assert_eq!(cfg.l_max, Some(16));
    }

    #[test]
    fn negative_anisotropy_names_key() {
        let cfg = RunConfig::parse_str("n = 4\ng = 0.5\na = -0.01").unwrap();
        match cfg.resolved() {
            Err(ConfigError::OutOfRange { key, .. }) => assert_eq!(key, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn omega_conflicts_with_range() {
        let cfg = RunConfig::parse_str("n = 4\ng = 0.5\nomega = 0.776\nomega_lo = 0.7").unwrap();
        assert_eq!(
            cfg.resolved(),
            Err(ConfigError::Conflict("omega".into(), "omega_lo".into()))
        );
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(RunConfig::parse_str("q = 1"), Err(ConfigError::UnknownKey("q".into())));
        assert_eq!(
            RunConfig::parse_str("g = 1").unwrap().resolved(),
            Err(ConfigError::MissingKey("n".into()))
        );
        assert_eq!(
            RunConfig::parse_str("n = 4").unwrap().resolved(),
            Err(ConfigError::MissingKey("g".into()))
        );
        assert_eq!(
            RunConfig::parse_str("n = four"),
            Err(ConfigError::Parse {
                key: "n".into(),
                value: "four".into()
            })
        );
        assert_eq!(RunConfig::parse_str("n 4"), Err(ConfigError::Syntax { line: 1 }));
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = RunConfig::parse_str("# header\n\nn = 6   # particles\ng=0.2\n").unwrap();
        assert_eq!(cfg.n, Some(6));
        assert_eq!(cfg.g, Some(0.2));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::parse_str("n = 12\ng = 0.1\nomega_lo = 0.7\nout_dir = runs/x\nthreads = 2\ntol = 1e-11")
            .unwrap()
            .resolved()
            .unwrap();
        let again = RunConfig::parse_str(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.resolved().unwrap(), cfg);
    }

    #[test]
    fn coupling_conversion() {
        let lz = 2.5;
        let a = lz / (8.0 * std::f64::consts::PI).sqrt();
        assert!((convert_g(a, lz).unwrap() - 1.0).abs() < 1e-15);
        let g = convert_g(0.0997, 1.0).unwrap();
        assert!((g - 0.499_822).abs() < 1e-6);
        assert!(convert_g(0.1, 0.0).is_err());
        assert!(convert_g(-0.1, 1.0).is_err());
    }
}
