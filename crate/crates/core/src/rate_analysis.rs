//! Exponential rate fits of `||u(t) - U_a||` and the smoothing check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::profiles::SteadyProfile;
use crate::spectrum::SpectralResult;
use crate::weighted_norms::{norm_c1, norm_l, GridFn};

/// Samples at or below this value are treated as numerical noise.
pub const NOISE_FLOOR: f64 = 1e-11;
/// Minimum number of usable samples in a fit window.
pub const MIN_SAMPLES: usize = 10;

/// Which norm a fit refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L,
    C1,
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Norm::L => "L",
            Norm::C1 => "C1",
        })
    }
}

/// Distance to equilibrium over time.
#[derive(Debug, Clone, PartialEq)]
pub struct NormSeries {
    times: Vec<f64>,
    norm_l: Vec<f64>,
    norm_c1: Vec<f64>,
    pub floor: f64,
}

impl NormSeries {
    pub fn new(times: Vec<f64>, norm_l: Vec<f64>, norm_c1: Vec<f64>) -> Result<Self> {
        if times.len() != norm_l.len() || times.len() != norm_c1.len() {
            return Err(Error::InvalidParameter(format!(
                "series lengths differ: {} times, {} L, {} C1",
                times.len(),
                norm_l.len(),
                norm_c1.len()
            )));
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(format!(
                "times not strictly increasing at index {}",
                k + 1
            )));
        }
        Ok(Self {
            times,
            norm_l,
            norm_c1,
            floor: NOISE_FLOOR,
        })
    }

    /// Norms of `u(t) - reference` over the snapshots of `traj`.
    pub fn from_trajectory(traj: &Trajectory, reference: &GridFn) -> Result<Self> {
        let q = traj.params.q();
        let mut l = Vec::with_capacity(traj.snapshots.len());
        let mut c1 = Vec::with_capacity(traj.snapshots.len());
        for k in 0..traj.snapshots.len() {
            let e = traj.grid_fn(k).sub(reference)?;
            l.push(norm_l(&e, q)?);
            c1.push(norm_c1(&e));
        }
        Self::new(traj.times(), l, c1)
    }

    /// Read the `t`, `normL`, `normC1` columns of a `series.csv` file.
    pub fn from_series_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let find = |name: &str| {
            cols.iter().position(|c| *c == name).ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("missing column `{name}`"),
            })
        };
        let (it, il, ic) = (find("t")?, find("normL")?, find("normC1")?);
        let (mut t, mut l, mut c) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |k: usize| -> Result<f64> {
                let s = fields.get(k).ok_or_else(|| Error::Parse {
                    line: i + 1,
                    msg: format!("expected {} fields, found {}", cols.len(), fields.len()),
                })?;
                s.parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("not a number: `{s}`"),
                })
            };
            t.push(get(it)?);
            l.push(get(il)?);
            c.push(get(ic)?);
        }
        Self::new(t, l, c)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self, which: Norm) -> &[f64] {
        match which {
            Norm::L => &self.norm_l,
            Norm::C1 => &self.norm_c1,
        }
    }

    /// `[max(1, first t with norm < 1e-2 * initial), last t above the
    /// cutoff]`. The cutoff is the floor, raised to ten times the smallest
    /// sample so that a roundoff plateau above the floor stays out.
    pub fn default_window(&self, which: Norm) -> Result<(f64, f64)> {
        let v = self.values(which);
        let smallest = v.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        let cutoff = self.floor.max(10.0 * smallest);
        let last = v
            .iter()
            .rposition(|&x| x > cutoff)
            .ok_or(Error::AllBelowFloor)?;
        let start = v
            .iter()
            .position(|&x| x < 1e-2 * v[0])
            .map_or(self.times[0], |k| self.times[k]);
        Ok((start.max(1.0), self.times[last]))
    }
}

/// Least-squares fit of `ln ||.||` against `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub which: Norm,
    /// Decay rate, positive when decaying.
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Fit `ln ||.|| = intercept - slope t` over `window` (default window when
/// `None`), discarding samples at or below the floor.
pub fn fit_rate(s: &NormSeries, which: Norm, window: Option<(f64, f64)>) -> Result<RateFit> {
    let window = match window {
        Some(w) => w,
        None => s.default_window(which)?,
    };
    let v = s.values(which);
    let in_window: Vec<(f64, f64)> = s
        .times
        .iter()
        .zip(v)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(t, x)| (*t, *x))
        .collect();
    let pts: Vec<(f64, f64)> = in_window
        .iter()
        .filter(|(_, x)| *x > s.floor)
        .map(|(t, x)| (*t, x.ln()))
        .collect();
    if !in_window.is_empty() && pts.is_empty() {
        return Err(Error::AllBelowFloor);
    }
    if pts.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            found: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - ym).powi(2)).sum();
    let b = sxy / sxx;
    let intercept = ym - b * tm;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - b * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    Ok(RateFit {
        which,
        slope: -b,
        stderr,
        intercept,
        r_squared,
        window,
        samples: pts.len(),
    })
}

/// `lambda_frac (lambda_1 - 1) U_a'(1)^q`, the guaranteed decay rate.
pub fn theoretical_rate(a: f64, lambda_frac: f64, spectral: &SpectralResult, profile: &SteadyProfile) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda_frac) {
        return Err(Error::InvalidParameter(format!(
            "lambda_frac must lie in [0, 1), got {lambda_frac}"
        )));
    }
    if !(spectral.lambda1 > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda1 = {} does not exceed 1",
            spectral.lambda1
        )));
    }
    Ok(lambda_frac * (spectral.lambda1 - 1.0) * boundary_slope_q(a, profile)?)
}

/// `U_a'(1)^q`.
pub fn boundary_slope_q(a: f64, profile: &SteadyProfile) -> Result<f64> {
    Ok(profile.eval_du(a, 1.0)?.powf(profile.q()))
}

/// Outcome of comparing the `L` and `C^1` rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    pub difference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `|slope_L - slope_C1| <= 3 max(stderr)`.
pub fn rate_consistency(fit_l: &RateFit, fit_c1: &RateFit) -> ConsistencyReport {
    let difference = (fit_l.slope - fit_c1.slope).abs();
    let tolerance = 3.0 * fit_l.stderr.max(fit_c1.stderr);
    ConsistencyReport {
        difference,
        tolerance,
        pass: difference <= tolerance,
    }
}

/// Smoothing exponent `1 + N/4`.
pub fn smoothing_exponent(n: u32) -> f64 {
    1.0 + n as f64 / 4.0
}

/// Ratio series `||u(t0+t) - U||_{C^1} t^beta / ||u(t0) - U||_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSeries {
    pub t0: f64,
    pub beta: f64,
    pub points: Vec<(f64, f64)>,
    /// Set when samples were dropped because a norm fell below the floor.
    pub truncated: bool,
}

impl SmoothingSeries {
    pub fn max_ratio(&self) -> f64 {
        self.points.iter().fold(0.0f64, |m, p| m.max(p.1))
    }
}

/// Smoothing ratios for snapshots in `(t0, t0 + t_max]`. The start is the
/// first snapshot at or after `t0`.
pub fn smoothing_check(traj: &Trajectory, t0: f64, reference: &GridFn, t_max: f64) -> Result<SmoothingSeries> {
    if !(t0 >= 1.0) {
        return Err(Error::InvalidParameter(format!("t0 must be >= 1, got {t0}")));
    }
    let beta = smoothing_exponent(traj.params.dim());
    let start = traj
        .snapshots
        .iter()
        .position(|s| s.t >= t0 - 1e-12)
        .ok_or_else(|| Error::InvalidParameter(format!("no snapshot at or after t0 = {t0}")))?;
    let ts = traj.snapshots[start].t;
    let base = norm_l(&traj.grid_fn(start).sub(reference)?, traj.params.q())?;
    let mut series = SmoothingSeries {
        t0: ts,
        beta,
        points: Vec::new(),
        truncated: false,
    };
    if base == 0.0 {
        // started on the reference itself: 0/0 reads as 0
        for s in traj.snapshots[start + 1..].iter().take_while(|s| s.t - ts <= t_max + 1e-12) {
            series.points.push((s.t - ts, 0.0));
        }
        return Ok(series);
    }
    for k in start + 1..traj.snapshots.len() {
        let t = traj.snapshots[k].t - ts;
        if t > t_max + 1e-12 {
            break;
        }
        let c1 = norm_c1(&traj.grid_fn(k).sub(reference)?);
        if c1 <= NOISE_FLOOR || base <= NOISE_FLOOR {
            series.truncated = true;
            break;
        }
        series.points.push((t, c1 * t.powf(beta) / base));
    }
    Ok(series)
}

/// One entry of `ratefit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFitRecord {
    pub which: Norm,
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub r2: f64,
    pub window: [f64; 2],
    /// `lambda U_a'(1)^q` with `lambda = 0.9 (lambda_1 - 1)`.
    pub comparator: f64,
    pub lambda1: f64,
    #[serde(rename = "dUa1")]
    pub d_ua1: f64,
}

impl RateFitRecord {
    pub fn new(fit: &RateFit, comparator: f64, lambda1: f64, d_ua1: f64) -> Self {
        Self {
            which: fit.which,
            slope: fit.slope,
            stderr: fit.stderr,
            intercept: fit.intercept,
            r2: fit.r_squared,
            window: [fit.window.0, fit.window.1],
            comparator,
            lambda1,
            d_ua1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{run, validate_initial, EvolveConfig, NoHook};
    use crate::params::ModelParams;
    use crate::weighted_norms::Grid;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn synthetic(rate: f64, noise: f64, seed: u64) -> NormSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<f64> = (0..=200).map(|k| k as f64 * 0.05).collect();
        let mut v = |t: &f64| 3.0 * (-rate * t).exp() * (1.0 + noise * rng.gen_range(-1.0..1.0));
        let l: Vec<f64> = t.iter().map(&mut v).collect();
        let c: Vec<f64> = t.iter().map(|t| 7.0 * (-rate * t).exp()).collect();
        NormSeries::new(t, l, c).unwrap()
    }

    #[test]
    fn exact_exponential_is_recovered() {
        let s = synthetic(0.7, 0.0, 0);
        let fit = fit_rate(&s, Norm::L, Some((0.0, 10.0))).unwrap();
        assert!((fit.slope - 0.7).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.stderr < 1e-12);
        assert_eq!(fit.samples, 201);
    }

    #[test]
    fn noisy_exponential_stays_within_tolerance() {
        for seed in 0..50 {
            let fit = fit_rate(&synthetic(0.7, 0.01, seed), Norm::L, Some((0.0, 10.0))).unwrap();
            assert!((fit.slope - 0.7).abs() < 0.02, "seed {seed}: {}", fit.slope);
        }
    }

    #[test]
    fn default_window_skips_transient_and_floor() {
        let t: Vec<f64> = (0..=300).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| (-2.0 * t).exp().max(1e-13)).collect();
        let s = NormSeries::new(t, v.clone(), v).unwrap();
        let (a, b) = s.default_window(Norm::L).unwrap();
        // 1e-2 of the initial value is reached at t = ln(100)/2
        assert!((a - 2.4).abs() < 1e-9);
        // e^{-2t} > 1e-11 up to t = 12.66
        assert!((b - 12.6).abs() < 1e-9, "{b}");
        let fit = fit_rate(&s, Norm::C1, None).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-9);
    }

    #[test]
    fn sample_count_errors() {
        let t: Vec<f64> = (0..5).map(|k| k as f64).collect();
        let v = vec![1.0, 0.5, 0.25, 0.125, 0.0625];
        let s = NormSeries::new(t.clone(), v.clone(), v).unwrap();
        assert_eq!(
            fit_rate(&s, Norm::L, Some((0.0, 4.0))),
            Err(Error::InsufficientSamples { needed: 10, found: 5 })
        );
        let tiny = vec![1e-12; 5];
        let s = NormSeries::new(t, tiny.clone(), tiny).unwrap();
        assert_eq!(fit_rate(&s, Norm::L, Some((0.0, 4.0))), Err(Error::AllBelowFloor));
        assert_eq!(fit_rate(&s, Norm::L, None), Err(Error::AllBelowFloor));
    }

    #[test]
    fn times_must_increase() {
        assert!(NormSeries::new(vec![0.0, 1.0, 1.0], vec![1.0; 3], vec![1.0; 3]).is_err());
        assert!(NormSeries::new(vec![0.0, 1.0], vec![1.0; 3], vec![1.0; 3]).is_err());
    }

    #[test]
    fn theoretical_rate_is_linear_in_fraction() {
        let prof = SteadyProfile::build(2, 1e-10).unwrap();
        let g = Arc::new(Grid::uniform(256).unwrap());
        let sp = crate::spectrum::lambda1(2.0, g, &prof).unwrap();
        assert_eq!(theoretical_rate(2.0, 0.0, &sp, &prof).unwrap(), 0.0);
        let r9 = theoretical_rate(2.0, 0.9, &sp, &prof).unwrap();
        let r3 = theoretical_rate(2.0, 0.3, &sp, &prof).unwrap();
        assert!((r9 - 3.0 * r3).abs() < 1e-14);
        assert!((r9 - 0.9 * (sp.lambda1 - 1.0) * 0.5).abs() < 1e-8);
        assert!(theoretical_rate(2.0, 1.0, &sp, &prof).is_err());
    }

    #[test]
    fn consistency_of_equal_rates() {
        let s = synthetic(0.7, 0.01, 3);
        let l = fit_rate(&s, Norm::L, Some((0.0, 10.0))).unwrap();
        let c = fit_rate(&s, Norm::C1, Some((0.0, 10.0))).unwrap();
        assert!(rate_consistency(&l, &c).pass);
        let mut off = c.clone();
        off.slope += 1.0;
        assert!(!rate_consistency(&l, &off).pass);
    }

    #[test]
    fn smoothing_ratios() {
        assert_eq!(smoothing_exponent(2), 1.5);
        assert_eq!(smoothing_exponent(3), 1.75);
        let params = ModelParams::new(2, 1.0).unwrap();
        let g = Arc::new(Grid::uniform(128).unwrap());
        let s = validate_initial(GridFn::from_fn(g.clone(), |x| x), params).unwrap();
        let cfg = EvolveConfig { t_end: 1.5, dt: 1e-3, dense_until: 1.5, ..Default::default() };
        let tr = run(&s, &cfg, &mut NoHook).unwrap();
        let fixed = crate::evolution::discrete_steady_state(&g, &params, s.u.values()).unwrap();
        let reference = GridFn::new(g, fixed).unwrap();
        let sm = smoothing_check(&tr, 1.0, &reference, 0.5).unwrap();
        assert_eq!(sm.points.len(), 50);
        assert!(!sm.truncated);
        assert!(sm.points.iter().all(|p| p.1.is_finite() && p.1 > 0.0));
        // the start itself as reference: 0/0 guarded to 0
        let start = tr.grid_fn(tr.snapshots.iter().position(|s| s.t >= 1.0 - 1e-12).unwrap());
        let frozen = smoothing_check(&tr, 1.0, &start, 0.5).unwrap();
        assert!(frozen.points.iter().all(|p| p.1 == 0.0));
        assert!(smoothing_check(&tr, 0.5, &reference, 0.5).is_err());
    }

    #[test]
    fn series_csv_round_trip_and_errors() {
        let text = "t,normL,normC1,lyapunov,min_ux,sup_ratio\n0,1,2,0,1,1\n1.5e0,0.5,1,nan,1,1\n";
        let s = NormSeries::from_series_csv(text).unwrap();
        assert_eq!(s.times(), &[0.0, 1.5]);
        assert_eq!(s.values(Norm::C1), &[2.0, 1.0]);
        let bad = "t,normL,normC1\n0,1,2\n1,x,3\n";
        assert_eq!(
            NormSeries::from_series_csv(bad),
            Err(Error::Parse { line: 3, msg: "not a number: `x`".into() })
        );
        assert!(matches!(NormSeries::from_series_csv("t,normL\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(NormSeries::from_series_csv("t,normL,normC1\n0,1\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn record_serializes_expected_keys() {
        let s = synthetic(0.7, 0.0, 0);
        let fit = fit_rate(&s, Norm::L, Some((0.0, 10.0))).unwrap();
        let json = serde_json::to_value(RateFitRecord::new(&fit, 0.4, 2.0, 0.5)).unwrap();
        for key in ["which", "slope", "stderr", "intercept", "r2", "window", "comparator", "lambda1", "dUa1"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["which"], "L");
    }
}
