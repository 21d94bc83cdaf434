//! Experiment orchestration: run artifacts, hypothesis validation,
//! convergence sweeps over particle counts or mollifier exponents, and
//! trajectory comparison. This is the library behind the `vnsflow` CLI.
//!
//! Artifact layout of one run directory:
//! * `config.json` — the exact configuration, for reproduction;
//! * `diagnostics.csv` — one row per step;
//! * `frames/frame_XXXXXXXX.bin` — versioned binary checkpoints;
//! * `summary.json` — checksums and aggregate statistics.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentPlan, RunConfig, SweepAxis, SystemKind};
use crate::coupled::{
    self, energy_report, initial_fluid, DiagnosticsRow, EnergyReport, Frame, Matter, Trajectory,
};
use crate::error::{Result, VnsError};
use crate::fluid::FluidState;
use crate::kinetic;
use crate::metrics::{
    fit_rate, marginal_inequality_report, sup_gap, wasserstein1_estimate,
    wasserstein1_estimate_v_marginal, RateFit,
};
use crate::mollifier::{make_mollifier_pair, scale_for, validate_velocity_kernel};
use crate::particles::ParticleEnsemble;
use crate::spectral::{Grid2D, SpectralField};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Threads to use: explicit flag, then `VNSFLOW_THREADS`, then the
/// machine parallelism.
pub fn resolve_threads(flag: Option<usize>) -> usize {
    if let Some(n) = flag {
        return n.max(1);
    }
    if let Ok(s) = std::env::var("VNSFLOW_THREADS") {
        if let Ok(n) = s.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Installs the global rayon pool. A second call with a different width
/// is ignored (the pool is process-wide), which keeps library use safe.
pub fn init_thread_pool(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let config: RunConfig = serde_json::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

pub fn load_plan(path: &Path) -> Result<ExperimentPlan> {
    let text = fs::read_to_string(path)?;
    let plan: ExperimentPlan = serde_json::from_str(&text)?;
    plan.validate()?;
    Ok(plan)
}

// ---------------------------------------------------------------------
// frame checkpoints
// ---------------------------------------------------------------------

const FRAME_MAGIC: &[u8; 4] = b"VNSF";
const FRAME_VERSION: u8 = 1;

pub fn frame_to_bytes(frame: &Frame) -> Vec<u8> {
    let matter_kind: u8 = match frame.matter {
        Matter::Particles(_) => 0,
        Matter::Kinetic(_) => 1,
    };
    let blob = frame.matter.checkpoint_bytes();
    let n = frame.fluid.omega.grid().n();
    let mut out = Vec::with_capacity(32 + 3 * n * n * 8 + blob.len());
    out.extend_from_slice(FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.push(matter_kind);
    out.extend_from_slice(&(frame.step as u64).to_le_bytes());
    out.extend_from_slice(&frame.fluid.time.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    // omega plus the derived u, so reloads are bitwise identical (the
    // Biot-Savart inversion is an FFT round trip with last-bit noise)
    for v in frame.fluid.omega.component(0) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for c in 0..2 {
        for v in frame.fluid.u.component(c) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    out.extend_from_slice(&blob);
    out
}

pub fn frame_from_bytes(bytes: &[u8]) -> Result<Frame> {
    let bad = |msg: &str| VnsError::Config(format!("frame checkpoint: {msg}"));
    if bytes.len() < 26 || &bytes[0..4] != FRAME_MAGIC {
        return Err(bad("missing magic"));
    }
    if bytes[4] != FRAME_VERSION {
        return Err(bad("unknown version"));
    }
    let matter_kind = bytes[5];
    let step = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
    let time = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let n = u32::from_le_bytes(bytes[22..26].try_into().unwrap()) as usize;
    let need = 26 + 3 * n * n * 8 + 8;
    if bytes.len() < need {
        return Err(bad("truncated"));
    }
    let grid = Grid2D::new(n)?;
    let mut omega = SpectralField::zeros(grid, 1);
    for (k, v) in omega.data_mut().iter_mut().enumerate() {
        let off = 26 + k * 8;
        *v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    }
    let mut u = SpectralField::zeros(grid, 2);
    for (k, v) in u.data_mut().iter_mut().enumerate() {
        let off = 26 + (n * n + k) * 8;
        *v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    }
    let off = 26 + 3 * n * n * 8;
    let blob_len = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize;
    let blob = &bytes[off + 8..];
    if blob.len() != blob_len {
        return Err(bad("matter blob length mismatch"));
    }
    let matter = match matter_kind {
        0 => Matter::Particles(ParticleEnsemble::from_bytes(blob)?),
        1 => Matter::Kinetic(kinetic::from_bytes(blob)?),
        _ => return Err(bad("unknown matter kind")),
    };
    Ok(Frame {
        step,
        fluid: FluidState { omega, u, time },
        matter,
    })
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub config_checksum: String,
    pub trajectory_checksum: String,
    pub chi_min: f64,
    pub chi_always_one: bool,
    pub resolved_r: f64,
    pub ku_hat: Option<f64>,
    pub steps: usize,
    pub frames: usize,
    pub final_time: f64,
    pub final_energy: f64,
    pub energy: EnergyReport,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn write_run_artifacts(
    config: &RunConfig,
    traj: &Trajectory,
    out: &Path,
) -> Result<RunSummary> {
    fs::create_dir_all(out.join("frames"))?;
    let config_json = serde_json::to_string_pretty(config)?;
    fs::write(out.join("config.json"), &config_json)?;

    let mut csv = String::from(DiagnosticsRow::CSV_HEADER);
    csv.push('\n');
    for row in &traj.diagnostics {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    fs::write(out.join("diagnostics.csv"), csv)?;

    for frame in &traj.frames {
        let path = out.join("frames").join(format!("frame_{:08}.bin", frame.step));
        fs::write(path, frame_to_bytes(frame))?;
    }

    let last = traj.diagnostics.last();
    let summary = RunSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        config_checksum: sha256_hex(config_json.as_bytes()),
        trajectory_checksum: traj.checksum.clone(),
        chi_min: traj.chi_min,
        chi_always_one: traj.chi_always_one,
        resolved_r: traj.resolved_r,
        ku_hat: traj.ku_hat,
        steps: traj.diagnostics.len(),
        frames: traj.frames.len(),
        final_time: last.map_or(0.0, |d| d.t),
        final_energy: last.map_or(0.0, |d| d.energy),
        energy: energy_report(&traj.diagnostics),
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<RunSummary> {
    let traj = coupled::run(config)?;
    write_run_artifacts(config, &traj, out)
}

/// Loads all frames of a run directory, ordered by step.
pub fn load_frames(dir: &Path) -> Result<Vec<Frame>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.join("frames"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "bin"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(VnsError::Config(format!(
            "{}: no frame checkpoints found",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| frame_from_bytes(&fs::read(p)?))
        .collect()
}

// ---------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub checks: Vec<HypothesisCheck>,
    pub all_pass: bool,
}

/// Numerical sixth moment of the per-axis velocity marginal over
/// [-hw, hw]; used to probe M6 finiteness by doubling the window.
fn axis_m6(config: &RunConfig, hw: f64) -> f64 {
    let m = 20_000;
    let h = 2.0 * hw / m as f64;
    (0..m)
        .map(|i| {
            let v = -hw + (i as f64 + 0.5) * h;
            v.powi(6) * config.f0.v_density(v) * h
        })
        .sum()
}

pub fn cmd_validate(config: &RunConfig) -> ValidationReport {
    let mut checks = Vec::new();

    let beta_ok = config.beta > 0.0 && config.beta <= 0.25;
    checks.push(HypothesisCheck {
        name: "beta_range",
        pass: beta_ok,
        detail: format!("beta = {} (requires 0 < beta <= 1/4)", config.beta),
    });

    checks.push(HypothesisCheck {
        name: "sigma_positive",
        pass: config.sigma > 0.0,
        detail: format!("sigma = {}", config.sigma),
    });

    // mollifier hypotheses at the scale the run would use (particle
    // systems take eps = N^{-beta}; kinetic runs are probed at a
    // representative resolved scale)
    let eps = if config.system.is_particle() && config.n_particles > 0 {
        scale_for(config.n_particles, config.beta, true).unwrap_or(0.1)
    } else {
        4.0 / config.grid_n as f64
    };
    let moll_check = Grid2D::new(config.grid_n)
        .and_then(|grid| make_mollifier_pair(eps, config.mollifier_kind, grid))
        .and_then(|moll| {
            validate_velocity_kernel(&|v| moll.theta1_eval(v), moll.eps())?;
            if !moll.is_resolved() {
                return Err(VnsError::MollifierHypothesis(format!(
                    "eps = {} under-resolved on an n = {} grid",
                    moll.eps(),
                    config.grid_n
                )));
            }
            Ok(())
        });
    checks.push(HypothesisCheck {
        name: "mollifier_pair",
        pass: moll_check.is_ok(),
        detail: match moll_check {
            Ok(()) => format!("eps = {eps}: mass, symmetry, support and resolution hold"),
            Err(e) => e.to_string(),
        },
    });

    // M6 F0 < infinity: the window-doubling probe must saturate
    let m6_a = axis_m6(config, config.vmax.max(config.f0.v_support().min(1e6)));
    let m6_b = axis_m6(config, 2.0 * config.vmax.max(config.f0.v_support().min(1e6)));
    let m6_ok = m6_a.is_finite() && m6_b <= m6_a * 1.05 + 1e-12;
    checks.push(HypothesisCheck {
        name: "m6_finite",
        pass: m6_ok,
        detail: format!(
            "per-axis sixth moment: {m6_a:.6e} on the base window, {m6_b:.6e} after doubling"
        ),
    });

    // u0 smoothness proxy: spectral mass outside |k| <= n/4 must be tiny
    let smooth = initial_fluid(config).map(|fluid| {
        let spec = fluid.omega.spectrum(0);
        let grid = fluid.omega.grid();
        let n = grid.n();
        let cut = (n / 4) as i64;
        let mut total = 0.0;
        let mut high = 0.0;
        for i in 0..n {
            for j in 0..n {
                let e = spec[i * n + j].norm_sqr();
                total += e;
                if grid.freq(i).abs() > cut || grid.freq(j).abs() > cut {
                    high += e;
                }
            }
        }
        if total == 0.0 {
            0.0
        } else {
            high / total
        }
    });
    checks.push(HypothesisCheck {
        name: "u0_smoothness",
        pass: smooth.as_ref().map(|&f| f <= 1e-10).unwrap_or(false),
        detail: match smooth {
            Ok(f) => format!("high-frequency enstrophy fraction = {f:.3e}"),
            Err(e) => e.to_string(),
        },
    });

    let all_pass = checks.iter().all(|c| c.pass);
    ValidationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        checks,
        all_pass,
    }
}

// ---------------------------------------------------------------------
// estimate-ku
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct KuReport {
    pub schema_version: u32,
    pub ku_hat: f64,
    pub r: f64,
}

pub fn cmd_estimate_ku(config: &RunConfig) -> Result<KuReport> {
    config.validate()?;
    let ku = coupled::estimate_ku(config)?;
    Ok(KuReport {
        schema_version: REPORT_SCHEMA_VERSION,
        ku_hat: ku,
        r: ku + 1.0,
    })
}

// ---------------------------------------------------------------------
// converge / sweep-beta
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    /// Particle count, or the value of beta for beta sweeps.
    pub axis: f64,
    pub n_particles: usize,
    pub beta: f64,
    pub w1_mean: f64,
    pub w1_stderr: f64,
    pub w1_floor: f64,
    pub w1_v_mean: f64,
    pub w1_v_stderr: f64,
    pub sup_gap_mean: f64,
    pub sup_gap_stderr: f64,
    pub chi_always_one: bool,
    pub seeds: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub schema_version: u32,
    pub reference_checksum: String,
    pub reference_config_checksum: String,
    pub points: Vec<SweepPoint>,
    /// Log-log fit of (floor-subtracted) W1 means against the axis.
    pub w1_rate: Option<RateFit>,
    pub sup_gap_rate: Option<RateFit>,
    /// Marginal-inequality violations over all saved reference frames.
    pub inequality_violations: usize,
    pub inequality_checks: usize,
}

fn kinetic_counterpart(base: &RunConfig) -> RunConfig {
    let mut reference = base.clone();
    reference.system = if base.system.has_cutoff() {
        SystemKind::KineticCutoff
    } else {
        SystemKind::Kinetic
    };
    reference.n_particles = 0;
    reference
}

/// Runs the kinetic reference, reusing an existing artifact directory
/// keyed by the content hash of the reference config.
pub fn reference_run(base: &RunConfig, out: &Path) -> Result<(PathBuf, Vec<Frame>, String)> {
    let reference = kinetic_counterpart(base);
    let config_json = serde_json::to_string_pretty(&reference)?;
    let hash = sha256_hex(config_json.as_bytes());
    let dir = out.join(format!("reference_{}", &hash[..16]));
    let summary_path = dir.join("summary.json");
    if summary_path.exists() {
        let frames = load_frames(&dir)?;
        let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(summary_path)?)?;
        let checksum = summary["trajectory_checksum"]
            .as_str()
            .unwrap_or_default()
            .to_string();
        return Ok((dir, frames, checksum));
    }
    let traj = coupled::run(&reference)?;
    let summary = write_run_artifacts(&reference, &traj, &dir)?;
    Ok((dir, traj.frames, summary.trajectory_checksum))
}

fn point_config(base: &RunConfig, axis: &SweepAxis, idx: usize, seed: u64) -> RunConfig {
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.system = if base.system.has_cutoff() {
        SystemKind::ParticleCutoff
    } else {
        SystemKind::Particle
    };
    match axis {
        SweepAxis::ParticleCounts(ns) => cfg.n_particles = ns[idx],
        SweepAxis::Betas(bs) => cfg.beta = bs[idx],
    }
    cfg
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Runs the full sweep of an experiment plan against its kinetic
/// reference. Handles both N-sweeps (`converge`) and beta sweeps
/// (`sweep-beta`).
pub fn cmd_converge(plan: &ExperimentPlan, out: &Path) -> Result<ConvergenceReport> {
    plan.validate()?;
    fs::create_dir_all(out)?;
    let (_, ref_frames, ref_checksum) = reference_run(&plan.base, out)?;
    let reference_config = kinetic_counterpart(&plan.base);
    let ref_config_checksum =
        sha256_hex(serde_json::to_string_pretty(&reference_config)?.as_bytes());
    let final_f = match &ref_frames.last().unwrap().matter {
        Matter::Kinetic(f) => f.clone(),
        _ => unreachable!("reference run is kinetic"),
    };

    // marginal inequalities on every saved reference frame
    let mut violations = 0usize;
    let mut total_checks = 0usize;
    for frame in &ref_frames {
        if let Matter::Kinetic(f) = &frame.matter {
            for check in marginal_inequality_report(f) {
                total_checks += 1;
                if !check.ok {
                    violations += 1;
                }
            }
        }
    }

    let axis_len = match &plan.sweep {
        SweepAxis::ParticleCounts(ns) => ns.len(),
        SweepAxis::Betas(bs) => bs.len(),
    };

    let mut points = Vec::with_capacity(axis_len);
    for idx in 0..axis_len {
        // seeds are an embarrassingly parallel job pool; each job owns
        // its output directory
        let per_seed: Vec<(f64, f64, f64, f64, bool)> = plan
            .seeds
            .par_iter()
            .map(|&seed| {
                let cfg = point_config(&plan.base, &plan.sweep, idx, seed);
                let traj = coupled::run(&cfg).map_err(|e| {
                    VnsError::Config(format!(
                        "sweep point {idx} seed {seed} failed: {e}"
                    ))
                })?;
                let dir = out.join(format!("point_{idx:02}_seed_{seed}"));
                write_run_artifacts(&cfg, &traj, &dir)?;
                let ens = match &traj.frames.last().unwrap().matter {
                    Matter::Particles(e) => e,
                    _ => unreachable!("sweep runs are particle systems"),
                };
                let w1 = wasserstein1_estimate(
                    ens,
                    &final_f,
                    plan.w1_samples,
                    plan.w1_resamples,
                    seed,
                )?;
                let w1v = wasserstein1_estimate_v_marginal(
                    ens,
                    &final_f,
                    plan.w1_samples,
                    plan.w1_resamples,
                    seed,
                )?;
                let mut gap = 0.0f64;
                for (a, b) in traj.frames.iter().zip(ref_frames.iter()) {
                    if a.step == b.step {
                        gap = gap.max(sup_gap(&a.fluid.u, &b.fluid.u)?);
                    }
                }
                Ok((w1.mean, w1.floor, w1v.mean, gap, traj.chi_always_one))
            })
            .collect::<Result<Vec<_>>>()?;

        let (w1_mean, w1_stderr) =
            mean_stderr(&per_seed.iter().map(|p| p.0).collect::<Vec<_>>());
        let (w1_floor, _) = mean_stderr(&per_seed.iter().map(|p| p.1).collect::<Vec<_>>());
        let (w1_v_mean, w1_v_stderr) =
            mean_stderr(&per_seed.iter().map(|p| p.2).collect::<Vec<_>>());
        let (gap_mean, gap_stderr) =
            mean_stderr(&per_seed.iter().map(|p| p.3).collect::<Vec<_>>());
        let chi_always_one = per_seed.iter().all(|p| p.4);

        let (axis, n_particles, beta) = match &plan.sweep {
            SweepAxis::ParticleCounts(ns) => (ns[idx] as f64, ns[idx], plan.base.beta),
            SweepAxis::Betas(bs) => (bs[idx], plan.base.n_particles, bs[idx]),
        };
        points.push(SweepPoint {
            axis,
            n_particles,
            beta,
            w1_mean,
            w1_stderr,
            w1_floor,
            w1_v_mean,
            w1_v_stderr,
            sup_gap_mean: gap_mean,
            sup_gap_stderr: gap_stderr,
            chi_always_one,
            seeds: plan.seeds.len(),
        });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.axis).collect();
    let w1_excess: Vec<f64> = points
        .iter()
        .map(|p| (p.w1_mean - p.w1_floor).max(1e-12))
        .collect();
    let gaps: Vec<f64> = points.iter().map(|p| p.sup_gap_mean.max(1e-15)).collect();
    let w1_rate = fit_rate(&xs, &w1_excess).ok();
    let sup_gap_rate = fit_rate(&xs, &gaps).ok();

    let report = ConvergenceReport {
        schema_version: REPORT_SCHEMA_VERSION,
        reference_checksum: ref_checksum,
        reference_config_checksum: ref_config_checksum,
        points,
        w1_rate,
        sup_gap_rate,
        inequality_violations: violations,
        inequality_checks: total_checks,
    };
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    fs::write(out.join("report.txt"), render_report(&report))?;
    Ok(report)
}

/// Human-readable table for a convergence report.
pub fn render_report(report: &ConvergenceReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:>10} {:>8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>6}\n",
        "axis", "N", "W1", "stderr", "floor", "W1(v)", "sup_gap", "chi=1"
    ));
    for p in &report.points {
        s.push_str(&format!(
            "{:>10.4} {:>8} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>6}\n",
            p.axis,
            p.n_particles,
            p.w1_mean,
            p.w1_stderr,
            p.w1_floor,
            p.w1_v_mean,
            p.sup_gap_mean,
            p.chi_always_one
        ));
    }
    if let Some(r) = &report.w1_rate {
        s.push_str(&format!(
            "W1 rate (floor-subtracted): slope {:+.3} +- {:.3}\n",
            r.slope, r.slope_stderr
        ));
    }
    if let Some(r) = &report.sup_gap_rate {
        s.push_str(&format!(
            "sup-gap rate: slope {:+.3} +- {:.3}\n",
            r.slope, r.slope_stderr
        ));
    }
    s.push_str(&format!(
        "marginal inequalities: {} violations out of {} checks\n",
        report.inequality_violations, report.inequality_checks
    ));
    s
}

// ---------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub step: usize,
    pub t: f64,
    pub u_l2_gap: f64,
    pub u_sup_gap: f64,
    /// Weighted kinetic gap; NaN when either side is a particle run.
    pub gronwall: f64,
}

/// Per-frame gaps between two run directories with matching save steps.
pub fn cmd_compare(dir_a: &Path, dir_b: &Path, k: f64) -> Result<Vec<GapRow>> {
    let a = load_frames(dir_a)?;
    let b = load_frames(dir_b)?;
    let mut rows = Vec::new();
    for (fa, fb) in a.iter().zip(b.iter()) {
        if fa.step != fb.step {
            return Err(VnsError::Config(format!(
                "frame steps diverge: {} vs {}",
                fa.step, fb.step
            )));
        }
        let n = fa.fluid.u.grid().n();
        if n != fb.fluid.u.grid().n() {
            return Err(VnsError::GridMismatch("compared fluid grids differ".into()));
        }
        let hx2 = 1.0 / (n * n) as f64;
        let mut du2 = 0.0;
        for c in 0..2 {
            for (x, y) in fa.fluid.u.component(c).iter().zip(fb.fluid.u.component(c)) {
                du2 += (x - y) * (x - y);
            }
        }
        let gronwall = match (&fa.matter, &fb.matter) {
            (Matter::Kinetic(ka), Matter::Kinetic(kb)) => {
                coupled::gronwall_gap((&fa.fluid, ka), (&fb.fluid, kb), k)?
            }
            _ => f64::NAN,
        };
        rows.push(GapRow {
            step: fa.step,
            t: fa.fluid.time,
            u_l2_gap: (du2 * hx2).sqrt(),
            u_sup_gap: sup_gap(&fa.fluid.u, &fb.fluid.u)?,
            gronwall,
        });
    }
    if rows.is_empty() {
        return Err(VnsError::Config("no common frames to compare".into()));
    }
    Ok(rows)
}

pub fn gap_rows_to_csv(rows: &[GapRow]) -> String {
    let mut s = String::from("step,t,u_l2_gap,u_sup_gap,gronwall\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step, r.t, r.u_l2_gap, r.u_sup_gap, r.gronwall
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{InitialDensity, InitialVelocity, RSetting, VMarginal, XMarginal};
    use tempfile::tempdir;

    fn small_config(system: SystemKind) -> RunConfig {
        RunConfig {
            system,
            grid_n: 16,
            nv: 24,
            vmax: 2.0,
            n_particles: 48,
            beta: 0.25,
            allow_large_beta: false,
            r: RSetting::default(),
            sigma: 0.4,
            allow_zero_sigma: false,
            nu: 1.0,
            t_end: 0.05,
            dt: 0.01,
            seed: 7,
            save_every: 2,
            noise_substeps: 1,
            mollifier_kind: crate::mollifier::KernelKind::VonmisesBump,
            h_norm_alpha: 0.25,
            u0: InitialVelocity::TaylorGreen { amplitude: 0.2 },
            f0: InitialDensity {
                x: XMarginal::Uniform,
                v: VMarginal::Gaussian {
                    std: 0.3,
                    trunc: 1.0,
                },
            },
        }
    }

    #[test]
    fn simulate_artifacts_and_determinism() {
        let dir = tempdir().unwrap();
        let cfg = small_config(SystemKind::Kinetic);
        let a = cmd_simulate(&cfg, &dir.path().join("a")).unwrap();
        let b = cmd_simulate(&cfg, &dir.path().join("b")).unwrap();
        assert_eq!(a.trajectory_checksum, b.trajectory_checksum);

        let csv = fs::read_to_string(dir.path().join("a/diagnostics.csv")).unwrap();
        assert!(csv.starts_with(DiagnosticsRow::CSV_HEADER));
        assert_eq!(csv.lines().count(), 1 + a.steps);
        assert!(dir.path().join("a/config.json").exists());
        assert!(dir.path().join("a/summary.json").exists());

        // the stored config reproduces the run
        let reloaded = load_run_config(&dir.path().join("a/config.json")).unwrap();
        let c = cmd_simulate(&reloaded, &dir.path().join("c")).unwrap();
        assert_eq!(a.trajectory_checksum, c.trajectory_checksum);
    }

    #[test]
    fn frame_checkpoints_round_trip() {
        let dir = tempdir().unwrap();
        let cfg = small_config(SystemKind::Particle);
        cmd_simulate(&cfg, dir.path()).unwrap();
        let frames = load_frames(dir.path()).unwrap();
        assert!(frames.len() >= 2);
        assert_eq!(frames[0].step, 0);
        match &frames[0].matter {
            Matter::Particles(e) => assert_eq!(e.len(), 48),
            _ => panic!("expected a particle frame"),
        }
        // re-encode is byte-identical
        let raw = fs::read(dir.path().join("frames/frame_00000000.bin")).unwrap();
        assert_eq!(raw, frame_to_bytes(&frames[0]));
    }

    #[test]
    fn validate_default_passes_and_heavy_tail_flagged() {
        let cfg = small_config(SystemKind::Kinetic);
        let report = cmd_validate(&cfg);
        assert!(report.all_pass, "{report:?}");

        let mut heavy = cfg.clone();
        heavy.f0.v = VMarginal::HeavyTail {
            scale: 0.3,
            power: 5.0,
        };
        let report = cmd_validate(&heavy);
        assert!(!report.all_pass);
        let m6 = report.checks.iter().find(|c| c.name == "m6_finite").unwrap();
        assert!(!m6.pass, "divergent sixth moment must be flagged");
    }

    #[test]
    fn compare_detects_seed_divergence() {
        let dir = tempdir().unwrap();
        let cfg = small_config(SystemKind::Particle);
        cmd_simulate(&cfg, &dir.path().join("a")).unwrap();
        let mut other = cfg.clone();
        other.seed = 8;
        cmd_simulate(&other, &dir.path().join("b")).unwrap();
        let rows = cmd_compare(&dir.path().join("a"), &dir.path().join("b"), 2.25).unwrap();
        assert_eq!(rows[0].u_l2_gap, 0.0, "identical initial fluid");
        assert!(rows.last().unwrap().u_l2_gap > 0.0, "seeds must diverge");
        assert!(rows.iter().all(|r| r.gronwall.is_nan()));
    }

    #[test]
    fn converge_reuses_cached_reference() {
        let dir = tempdir().unwrap();
        let plan = ExperimentPlan {
            base: small_config(SystemKind::Particle),
            sweep: SweepAxis::ParticleCounts(vec![32, 64, 128]),
            seeds: vec![1, 2],
            w1_samples: 32,
            w1_resamples: 8,
            common_random_numbers: true,
        };
        let a = cmd_converge(&plan, dir.path()).unwrap();
        assert_eq!(a.points.len(), 3);
        assert!(a.inequality_checks > 0);
        assert_eq!(a.inequality_violations, 0);
        assert!(dir.path().join("report.json").exists());

        // second invocation must hit the reference cache and reproduce
        // the report bit for bit
        let before = fs::read_to_string(dir.path().join("report.json")).unwrap();
        let b = cmd_converge(&plan, dir.path()).unwrap();
        assert_eq!(a.reference_checksum, b.reference_checksum);
        let after = fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn resolve_threads_priority() {
        assert_eq!(resolve_threads(Some(3)), 3);
        assert!(resolve_threads(None) >= 1);
    }
}
