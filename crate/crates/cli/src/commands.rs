use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pkslab_core::evolution::{
    discrete_steady_state, run, series_csv, snapshot_csv, validate_initial, EvolveConfig, NoHook, PdeState, RunStatus,
    Trajectory,
};
use pkslab_core::rate_analysis::{
    boundary_slope_q, fit_rate, theoretical_rate, Norm, NormSeries, RateFit, RateFitRecord,
};
use pkslab_core::spectrum::{lambda1, lambda1_csv, phi1_csv, SpectralResult};
use pkslab_core::{Grid, GridFn, ModelParams, SteadyProfile};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{RunConfig, U0Spec};
use crate::error::{CliError, Result};
use crate::manifest::{RunDir, RunManifest, TerminalStatus};

/// Tolerance used when a command builds a profile on its own.
pub const PROFILE_TOL: f64 = 1e-10;

fn say(w: &mut dyn Write, line: String) -> Result<()> {
    writeln!(w, "{line}").map_err(|e| CliError::io("<stdout>", e))
}

fn grid(n: usize, grading: f64) -> Result<Arc<Grid>> {
    let g = if grading == 1.0 { Grid::uniform(n)? } else { Grid::graded(n, grading)? };
    Ok(Arc::new(g))
}

fn fmt_threshold(a: f64) -> String {
    if a.is_infinite() {
        "inf".into()
    } else {
        format!("{a:.12}")
    }
}

pub fn cmd_steady(dim: u32, tol: f64, out: &Path, w: &mut dyn Write) -> Result<SteadyProfile> {
    let mut dir = RunDir::open(out)?;
    let profile = SteadyProfile::build(dim, tol)?;
    dir.write("profile.csv", &profile.to_csv())?;
    dir.finish(
        "steady",
        json!({ "N": dim, "tol": tol, "out": out }),
        TerminalStatus::Completed,
        None,
    )?;
    say(
        w,
        format!(
            "N={dim} A={} M={:.12}",
            fmt_threshold(profile.threshold()),
            profile.critical_mass()
        ),
    )?;
    Ok(profile)
}

/// Which dilations `lambda1` evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum DilationChoice {
    Mass(f64),
    Direct(f64),
    /// `lo:hi:step`, as fractions of the threshold `A`.
    Fractions(f64, f64, f64),
}

impl DilationChoice {
    pub fn parse_grid(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| CliError::Config(format!("a-grid must be lo:hi:step, got '{s}'")))?;
        match parts[..] {
            [lo, hi, step] if step > 0.0 && lo > 0.0 && hi >= lo && hi < 1.0 => Ok(Self::Fractions(lo, hi, step)),
            _ => Err(CliError::Config(format!(
                "a-grid must be lo:hi:step with 0 < lo <= hi < 1 and step > 0, got '{s}'"
            ))),
        }
    }

    fn dilations(&self, profile: &SteadyProfile) -> Result<Vec<f64>> {
        let a = match *self {
            Self::Mass(m) => vec![profile.solve_a_of_m(m)?],
            Self::Direct(a) => vec![a],
            Self::Fractions(lo, hi, step) => {
                let big_a = profile.threshold();
                if big_a.is_infinite() {
                    return Err(CliError::Config(format!(
                        "a-grid is relative to A, which is infinite for N = {}; use --a",
                        profile.dim()
                    )));
                }
                let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
                (0..count).map(|k| (lo + k as f64 * step) * big_a).collect()
            }
        };
        if let Some(bad) = a.iter().find(|a| !(**a > 0.0)) {
            return Err(CliError::Config(format!(
                "dilation a = {bad} is excluded: a must lie in (0, A) (m = 0 gives a = 0)"
            )));
        }
        Ok(a)
    }
}

#[derive(Debug, Clone)]
pub struct Lambda1Args {
    pub dim: u32,
    pub choice: DilationChoice,
    pub n: usize,
    pub grading: f64,
    pub tol: f64,
    pub out: PathBuf,
}

pub fn cmd_lambda1(args: &Lambda1Args, w: &mut dyn Write) -> Result<Vec<(f64, SpectralResult)>> {
    if args.n < 8 {
        return Err(CliError::Config(format!("n must be >= 8, got {}", args.n)));
    }
    let profile = SteadyProfile::build(args.dim, args.tol)?;
    let dilations = args.choice.dilations(&profile)?;
    let g = grid(args.n, args.grading)?;
    let results = dilations
        .iter()
        .map(|&a| Ok((a, lambda1(a, g.clone(), &profile)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut dir = RunDir::open(&args.out)?;
    let rows: Vec<_> = results.iter().map(|(a, r)| (args.dim, *a, args.n, r)).collect();
    dir.write("lambda1.csv", &lambda1_csv(&rows))?;
    if results.len() == 1 {
        dir.write("phi1.csv", &phi1_csv(&results[0].1.phi1))?;
    } else {
        for (k, (_, r)) in results.iter().enumerate() {
            dir.write(&format!("phi1_{k:03}.csv"), &phi1_csv(&r.phi1))?;
        }
    }
    let choice = match args.choice {
        DilationChoice::Mass(m) => json!({ "m": m }),
        DilationChoice::Direct(a) => json!({ "a": a }),
        DilationChoice::Fractions(lo, hi, step) => json!({ "a_grid": [lo, hi, step] }),
    };
    dir.finish(
        "lambda1",
        json!({ "N": args.dim, "dilation": choice, "n": args.n, "grading": args.grading, "tol": args.tol, "out": args.out }),
        TerminalStatus::Completed,
        None,
    )?;
    for (a, r) in &results {
        say(w, format!("a={a:.12} lambda1={:.12} gap={:.3e}", r.lambda1, r.refinement_gap))?;
    }
    Ok(results)
}

/// Smooth perturbation direction vanishing at both ends, drawn from `seed`.
fn perturbation(seed: u64) -> impl Fn(f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    move |x| {
        c.iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * x).sin() / (k + 1) as f64)
            .sum()
    }
}

fn steady_samples(profile: &SteadyProfile, m: f64, g: &Arc<Grid>) -> Result<GridFn> {
    let a = profile.solve_a_of_m(m)?;
    let mut u = GridFn::try_from_fn(g.clone(), |x| profile.eval_u(a, x))?;
    let last = u.values().len() - 1;
    u.values_mut()[last] = m;
    Ok(u)
}

fn initial_datum(cfg: &RunConfig, profile: &SteadyProfile, g: &Arc<Grid>) -> Result<GridFn> {
    let m = cfg.m;
    Ok(match cfg.u0 {
        U0Spec::Linear => GridFn::from_fn(g.clone(), |x| m * x),
        U0Spec::Power(p) => GridFn::from_fn(g.clone(), |x| m * x.powf(p)),
        U0Spec::SteadyPerturbed(eps) => {
            if !(m > 0.0) {
                return Err(CliError::Config("steady-perturbed needs m > 0".into()));
            }
            let base = steady_samples(profile, m, g)?;
            let phi = perturbation(cfg.seed);
            let mut u = base.clone();
            let n = u.values().len() - 1;
            for (i, x) in g.nodes().iter().enumerate().take(n).skip(1) {
                u.values_mut()[i] += eps * phi(*x);
            }
            u
        }
    })
}

/// Norms are measured against the discrete steady state when one exists,
/// otherwise against zero.
fn reference(cfg: &RunConfig, profile: &SteadyProfile, params: &ModelParams, g: &Arc<Grid>) -> Result<(GridFn, &'static str)> {
    if cfg.m > 0.0 && cfg.m < profile.critical_mass() {
        let guess = steady_samples(profile, cfg.m, g)?;
        let u = discrete_steady_state(g, params, guess.values())?;
        Ok((GridFn::new(g.clone(), u)?, "discrete steady state"))
    } else {
        Ok((GridFn::zeros(g.clone()), "zero"))
    }
}

/// Snapshot indices written as files: first, last, and the first snapshot
/// at or after each multiple of `interval`.
fn snapshot_picks(traj: &Trajectory, interval: f64) -> Vec<usize> {
    let times = traj.times();
    let last = times.len() - 1;
    let mut picks = vec![0];
    if interval > 0.0 {
        let mut k = 1.0;
        while k * interval <= times[last] + 1e-12 {
            let target = k * interval;
            if let Some(i) = times.iter().position(|t| *t >= target - 1e-9) {
                picks.push(i);
            }
            k += 1.0;
        }
    }
    picks.push(last);
    picks.dedup();
    picks.sort_unstable();
    picks.dedup();
    picks
}

/// Evolve in pieces of length `snapshot_interval` so that snapshot files
/// fall exactly on its multiples. Snapshots are dense on `[0, 1]` and
/// geometrically spaced within each piece afterwards.
fn run_segments(state: PdeState, cfg: &RunConfig) -> Result<Trajectory> {
    let piece = if cfg.snapshot_interval > 0.0 { cfg.snapshot_interval } else { cfg.t_end };
    let total_steps = (cfg.t_end / cfg.dt).round().max(1.0) as usize;
    let piece_steps = ((piece / cfg.dt).round() as usize).max(1);
    let mut current = state;
    let mut done = 0usize;
    let mut traj: Option<Trajectory> = None;
    while done < total_steps {
        let steps = piece_steps.min(total_steps - done);
        let t_start = done as f64 * cfg.dt;
        let evolve = EvolveConfig {
            dt: cfg.dt,
            t_end: steps as f64 * cfg.dt,
            scheme: cfg.scheme,
            dense_until: (1.0 - t_start).max(0.0),
            blowup_threshold: cfg.effective_blowup_threshold(),
            record_increments: false,
            ..Default::default()
        };
        let part = run(&current, &evolve, &mut NoHook)?;
        done += steps;
        let status = part.status.clone();
        let last = part.grid_fn(part.snapshots.len() - 1);
        let t_last = part.snapshots.last().map(|s| s.t).unwrap_or(current.t);
        traj = Some(match traj {
            None => part,
            Some(mut acc) => {
                acc.snapshots.extend(part.snapshots.into_iter().skip(1));
                acc.status = status.clone();
                acc
            }
        });
        if status != RunStatus::Completed {
            break;
        }
        current = PdeState {
            params: current.params,
            t: done as f64 * cfg.dt,
            u: last,
        };
        debug_assert!((t_last - current.t).abs() < 1e-9 * (1.0 + t_last));
    }
    Ok(traj.expect("at least one piece runs"))
}

#[derive(Debug)]
pub struct EvolveReport {
    pub status: TerminalStatus,
    pub manifest: RunManifest,
    pub final_norm_l: f64,
}

pub fn cmd_evolve(cfg: &RunConfig, w: &mut dyn Write) -> Result<EvolveReport> {
    cfg.validate()?;
    if cfg.grading != 1.0 {
        return Err(CliError::Config("evolve needs a uniform grid (grading = 1)".into()));
    }
    let params = ModelParams::new(cfg.dim, cfg.m)?;
    let profile = SteadyProfile::build(cfg.dim, PROFILE_TOL)?;
    let g = grid(cfg.n, 1.0)?;
    let state = validate_initial(initial_datum(cfg, &profile, &g)?, params)?;
    let (reference, against) = reference(cfg, &profile, &params, &g)?;
    let mut dir = RunDir::open(&cfg.out)?;
    let stale = cfg.out.join("snapshots");
    if stale.is_dir() {
        std::fs::remove_dir_all(&stale).map_err(|e| CliError::io(&stale, e))?;
    }
    let traj = run_segments(state, cfg)?;
    let series = series_csv(&traj, &reference)?;
    dir.write("series.csv", &series)?;
    for k in snapshot_picks(&traj, cfg.snapshot_interval) {
        let s = &traj.snapshots[k];
        dir.write(&format!("snapshots/u_{:.6}.csv", s.t), &snapshot_csv(g.nodes(), &s.u))?;
    }
    let last = traj.grid_fn(traj.snapshots.len() - 1);
    let final_norm_l = pkslab_core::weighted_norms::norm_l(&last.sub(&reference)?, params.q())?;
    let (status, detail) = match traj.status {
        RunStatus::Completed => (TerminalStatus::Completed, None),
        // Below the critical mass solutions stay bounded, so growth past
        // the threshold can only be a numerical artifact.
        RunStatus::SupercriticalDetected { t, sup_ratio } if cfg.m < profile.critical_mass() => (
            TerminalStatus::Unstable,
            Some(format!("sup u/x = {sup_ratio:.6e} at t = {t} with subcritical m")),
        ),
        RunStatus::SupercriticalDetected { t, sup_ratio } => (
            TerminalStatus::SupercriticalDetected,
            Some(format!("sup u/x = {sup_ratio:.6e} at t = {t}")),
        ),
        RunStatus::Unstable { t, min, max } => (
            TerminalStatus::Unstable,
            Some(format!("non-finite or runaway state at t = {t} (min {min}, max {max})")),
        ),
    };
    let detail = Some(match detail {
        Some(d) => format!("{d}; norms against {against}"),
        None => format!("norms against {against}"),
    });
    let config = serde_json::to_value(cfg)?;
    let manifest = dir.finish("evolve", config, status, detail)?;
    say(
        w,
        format!(
            "status={} t={} normL={final_norm_l:.6e} snapshots={}",
            serde_json::to_value(status)?.as_str().unwrap_or("?"),
            traj.snapshots.last().map(|s| s.t).unwrap_or(0.0),
            traj.snapshots.len()
        ),
    )?;
    Ok(EvolveReport {
        status,
        manifest,
        final_norm_l,
    })
}

#[derive(Debug, Clone)]
pub struct RateArgs {
    pub run_dir: PathBuf,
    /// Override `N`, `m` from the run manifest.
    pub dim: Option<u32>,
    pub m: Option<f64>,
    pub norm: Norm,
    pub window: Option<(f64, f64)>,
    pub n: usize,
    pub grading: f64,
}

pub fn parse_window(s: &str) -> Result<(f64, f64)> {
    let bad = || CliError::Config(format!("window must be t0:t1 with t0 < t1, got '{s}'"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if a < b {
        Ok((a, b))
    } else {
        Err(bad())
    }
}

pub fn parse_norm(s: &str) -> Result<Norm> {
    match s {
        "L" | "l" => Ok(Norm::L),
        "C1" | "c1" => Ok(Norm::C1),
        _ => Err(CliError::Config(format!("norm must be L or C1, got '{s}'"))),
    }
}

fn run_params(args: &RateArgs) -> Result<(u32, f64)> {
    if let (Some(d), Some(m)) = (args.dim, args.m) {
        return Ok((d, m));
    }
    let manifest = RunManifest::read(&args.run_dir)?;
    let dim = match args.dim {
        Some(d) => d,
        None => manifest.config["N"]
            .as_u64()
            .ok_or_else(|| CliError::Config("manifest config has no N".into()))? as u32,
    };
    let m = match args.m {
        Some(m) => m,
        None => manifest.config["m"]
            .as_f64()
            .ok_or_else(|| CliError::Config("manifest config has no m".into()))?,
    };
    Ok((dim, m))
}

pub fn cmd_rate(args: &RateArgs, w: &mut dyn Write) -> Result<RateFitRecord> {
    let path = args.run_dir.join("series.csv");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let series = NormSeries::from_series_csv(&text)?;
    let (dim, m) = run_params(args)?;
    let profile = SteadyProfile::build(dim, PROFILE_TOL)?;
    let a = profile.solve_a_of_m(m)?;
    if !(a > 0.0) {
        return Err(CliError::Config("m = 0 has no rate comparator".into()));
    }
    let spectral = lambda1(a, grid(args.n, args.grading)?, &profile)?;
    let comparator = theoretical_rate(a, 0.9, &spectral, &profile)?;
    let d_ua1 = profile.eval_du(a, 1.0)?;
    let fits: Vec<(Norm, pkslab_core::Result<RateFit>)> = [Norm::L, Norm::C1]
        .into_iter()
        .map(|which| (which, fit_rate(&series, which, args.window)))
        .collect();
    say(w, format!("{:<4} {:>12} {:>10} {:>10} {:>21} {:>12}", "norm", "slope", "stderr", "r2", "window", "comparator"))?;
    for (which, fit) in &fits {
        match fit {
            Ok(f) => say(
                w,
                format!(
                    "{:<4} {:>12.6} {:>10.2e} {:>10.6} {:>10.4}:{:<10.4} {:>12.6}",
                    which.to_string(),
                    f.slope,
                    f.stderr,
                    f.r_squared,
                    f.window.0,
                    f.window.1,
                    comparator
                ),
            )?,
            Err(e) => say(w, format!("{:<4} fit failed: {e}", which.to_string()))?,
        }
    }
    say(
        w,
        format!(
            "lambda1={:.10} dUa(1)={d_ua1:.10} dUa(1)^q={:.10}",
            spectral.lambda1,
            boundary_slope_q(a, &profile)?
        ),
    )?;
    let chosen = fits
        .into_iter()
        .find(|(which, _)| *which == args.norm)
        .map(|(_, f)| f)
        .expect("both norms are fitted")?;
    let record = RateFitRecord::new(&chosen, comparator, spectral.lambda1, d_ua1);
    let mut json = serde_json::to_string_pretty(&record)?;
    json.push('\n');
    let out = args.run_dir.join("ratefit.json");
    std::fs::write(&out, json).map_err(|e| CliError::io(&out, e))?;
    Ok(record)
}

#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub base: RunConfig,
    pub key: String,
    pub values: Vec<String>,
    pub workers: usize,
    pub out: PathBuf,
}

#[derive(Debug)]
pub struct SweepRow {
    pub value: String,
    pub dir: String,
    pub outcome: Result<EvolveReport>,
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// One `evolve` run per value of `key`, each in its own subdirectory.
pub fn cmd_sweep(args: &SweepArgs, w: &mut dyn Write) -> Result<Vec<SweepRow>> {
    if args.values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    if args.key == "out" {
        return Err(CliError::Config("cannot sweep over 'out'".into()));
    }
    if args.workers == 0 {
        return Err(CliError::Config("workers must be >= 1".into()));
    }
    let mut configs = Vec::with_capacity(args.values.len());
    for v in &args.values {
        let mut c = args.base.clone();
        c.set(&args.key, v)?;
        let sub = format!("{}_{}", sanitize(&args.key), sanitize(v));
        c.out = args.out.join(&sub);
        c.validate()?;
        configs.push((v.clone(), sub, c));
    }
    let mut unique: Vec<&String> = configs.iter().map(|c| &c.1).collect();
    unique.sort();
    unique.dedup();
    if unique.len() != configs.len() {
        return Err(CliError::Config("sweep values map to the same directory".into()));
    }
    let mut dir = RunDir::open(&args.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        configs
            .into_par_iter()
            .map(|(value, sub, c)| SweepRow {
                value,
                dir: sub,
                outcome: cmd_evolve(&c, &mut std::io::sink()),
            })
            .collect()
    });
    let mut csv = format!("{},status,final_normL,dir\n", args.key);
    for r in &rows {
        let (status, norm) = match &r.outcome {
            Ok(rep) => (
                serde_json::to_value(rep.status)?.as_str().unwrap_or("?").to_string(),
                format!("{:.16e}", rep.final_norm_l),
            ),
            Err(e) => (format!("error({})", e.exit_code()), "NaN".into()),
        };
        csv.push_str(&format!("{},{status},{norm},{}\n", r.value, r.dir));
        say(w, format!("{}={} status={status} normL={norm}", args.key, r.value))?;
    }
    dir.write("sweep.csv", &csv)?;
    for r in &rows {
        if r.outcome.is_ok() {
            dir.adopt(&format!("{}/{}", r.dir, crate::manifest::MANIFEST));
        }
    }
    let worst = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|rep| rep.status))
        .fold(TerminalStatus::Completed, |acc, s| match (acc, s) {
            (TerminalStatus::Unstable, _) | (_, TerminalStatus::Unstable) => TerminalStatus::Unstable,
            (TerminalStatus::SupercriticalDetected, _) | (_, TerminalStatus::SupercriticalDetected) => {
                TerminalStatus::SupercriticalDetected
            }
            _ => TerminalStatus::Completed,
        });
    let failures = rows.iter().filter(|r| r.outcome.is_err()).count();
    let detail = (failures > 0).then(|| format!("{failures} run(s) failed before producing a manifest"));
    dir.finish(
        "sweep",
        json!({ "base": serde_json::to_value(&args.base)?, "key": args.key, "values": args.values, "workers": args.workers }),
        worst,
        detail,
    )?;
    Ok(rows)
}
