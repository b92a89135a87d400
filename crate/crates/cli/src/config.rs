//! Flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pkslab_core::evolution::Scheme;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Initial datum family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum U0Spec {
    /// `m x`
    Linear,
    /// `m x^p`, `p >= 1`
    Power(f64),
    /// `U_a + eps * phi` with a seeded smooth `phi` vanishing at both ends.
    SteadyPerturbed(f64),
}

impl FromStr for U0Spec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CliError::Config(format!("u0 must be linear, power:<p> or steady-perturbed:<eps>, got '{s}'"));
        let number = |v: &str| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad);
        match s.trim().split_once(':') {
            None if s.trim() == "linear" => Ok(U0Spec::Linear),
            Some(("power", p)) => {
                let p = number(p)?;
                if p < 1.0 {
                    return Err(CliError::Config(format!("power exponent must be >= 1, got {p}")));
                }
                Ok(U0Spec::Power(p))
            }
            Some(("steady-perturbed", e)) => Ok(U0Spec::SteadyPerturbed(number(e)?)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for U0Spec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            U0Spec::Linear => write!(f, "linear"),
            U0Spec::Power(p) => write!(f, "power:{p}"),
            U0Spec::SteadyPerturbed(e) => write!(f, "steady-perturbed:{e}"),
        }
    }
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Imex => "imex",
        Scheme::Explicit => "explicit",
    }
}

/// Parameters of one `evolve` run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    #[serde(rename = "N")]
    pub dim: u32,
    pub m: f64,
    #[serde(serialize_with = "as_display")]
    pub u0: U0Spec,
    pub n: usize,
    pub grading: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(serialize_with = "scheme_as_str")]
    pub scheme: Scheme,
    pub seed: u64,
    pub out: PathBuf,
    /// Write `snapshots/u_<t>.csv` at each multiple of this; 0 keeps only
    /// the first and last states.
    pub snapshot_interval: f64,
    /// `sup u/x` level flagged as supercritical growth; capped at
    /// [`GRID_CEILING_FRACTION`]` * m / x_1` on the actual grid.
    pub blowup_threshold: f64,
}

/// On a grid `u/x <= m / x_1`, and a concentrating solution levels off at
/// roughly a third of that, so a fixed threshold can be out of reach.
pub const GRID_CEILING_FRACTION: f64 = 0.2;

fn as_display<S: serde::Serializer, T: fmt::Display>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn scheme_as_str<S: serde::Serializer>(v: &Scheme, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(scheme_name(*v))
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            m: 1.0,
            u0: U0Spec::Linear,
            n: 512,
            grading: 1.0,
            dt: 1e-4,
            t_end: 10.0,
            scheme: Scheme::Imex,
            seed: 0,
            out: PathBuf::from("run"),
            snapshot_interval: 0.0,
            blowup_threshold: 1e3,
        }
    }
}

pub const KEYS: [&str; 12] = [
    "N",
    "m",
    "u0",
    "n",
    "grading",
    "dt",
    "t_end",
    "scheme",
    "seed",
    "out",
    "snapshot_interval",
    "blowup_threshold",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse '{value}'")))
}

impl RunConfig {
    /// Set one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "N" => self.dim = parse_num(key, value)?,
            "m" => self.m = parse_num(key, value)?,
            "u0" => self.u0 = value.parse()?,
            "n" => self.n = parse_num(key, value)?,
            "grading" => self.grading = parse_num(key, value)?,
            "dt" => self.dt = parse_num(key, value)?,
            "t_end" => self.t_end = parse_num(key, value)?,
            "scheme" => {
                self.scheme = match value {
                    "imex" => Scheme::Imex,
                    "explicit" => Scheme::Explicit,
                    _ => return Err(CliError::Config(format!("scheme must be imex or explicit, got '{value}'"))),
                }
            }
            "seed" => self.seed = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "snapshot_interval" => self.snapshot_interval = parse_num(key, value)?,
            "blowup_threshold" => self.blowup_threshold = parse_num(key, value)?,
            other => {
                return Err(CliError::Config(format!(
                    "unknown key '{other}' (expected one of {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Apply every `key = value` line of `text`. Blank lines and `#`
    /// comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected 'key = value', got '{raw}'", idx + 1)))?;
            self.set(k, v)
                .map_err(|e| CliError::Config(format!("line {}: {}", idx + 1, strip_prefix(&e))))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Reject out-of-range values before anything is computed.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.dim < 2 {
            return fail(format!("N must be >= 2, got {}", self.dim));
        }
        if !(self.m >= 0.0) || !self.m.is_finite() {
            return fail(format!("m must be finite and >= 0, got {}", self.m));
        }
        if self.n < 8 {
            return fail(format!("n must be >= 8, got {}", self.n));
        }
        if !(self.grading >= 1.0) || !self.grading.is_finite() {
            return fail(format!("grading must be finite and >= 1, got {}", self.grading));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return fail(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return fail(format!("t_end must be finite and >= dt, got {}", self.t_end));
        }
        if !(self.snapshot_interval >= 0.0) || !self.snapshot_interval.is_finite() {
            return fail(format!("snapshot_interval must be >= 0, got {}", self.snapshot_interval));
        }
        if !(self.blowup_threshold > 1.0) {
            return fail(format!("blowup_threshold must exceed 1, got {}", self.blowup_threshold));
        }
        Ok(())
    }

    /// Threshold passed to the stepper for a uniform grid of `n` cells.
    pub fn effective_blowup_threshold(&self) -> f64 {
        let ceiling = GRID_CEILING_FRACTION * self.m * self.n as f64;
        if ceiling > 1.0 {
            self.blowup_threshold.min(ceiling)
        } else {
            self.blowup_threshold
        }
    }

    /// `key = value` text that reproduces this configuration.
    pub fn to_text(&self) -> String {
        format!(
            "N = {}\nm = {}\nu0 = {}\nn = {}\ngrading = {}\ndt = {}\nt_end = {}\nscheme = {}\nseed = {}\nout = {}\nsnapshot_interval = {}\nblowup_threshold = {}\n",
            self.dim,
            self.m,
            self.u0,
            self.n,
            self.grading,
            self.dt,
            self.t_end,
            scheme_name(self.scheme),
            self.seed,
            self.out.display(),
            self.snapshot_interval,
            self.blowup_threshold
        )
    }
}

fn strip_prefix(e: &CliError) -> String {
    match e {
        CliError::Config(m) => m.clone(),
        other => other.to_string(),
    }
}
