//! Distances and diagnostics used to quantify convergence: exact
//! Wasserstein-1 between weighted point sets on the phase space
//! `T^2 x R^2`, a Monte-Carlo subsampling estimator against kinetic
//! densities, sup-norm gaps of velocity fields, log-log rate fits, and
//! the moment inequalities satisfied by nonnegative densities.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, VnsError};
use crate::kinetic::KineticDensity;
use crate::particles::ParticleEnsemble;
use crate::rng;
use crate::spectral::SpectralField;

/// A point of the phase space `T^2 x R^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub x: [f64; 2],
    pub v: [f64; 2],
}

/// Geodesic distance on the unit torus, per axis.
#[inline]
fn torus_axis(a: f64, b: f64) -> f64 {
    // |a - b| first: bitwise symmetric in the arguments
    let d = (a - b).abs().rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Ground metric: geodesic torus distance plus Euclidean velocity
/// distance. The sum (rather than the max) keeps transport costs
/// additive.
pub fn ground_distance(a: &PhasePoint, b: &PhasePoint) -> f64 {
    let dx = torus_axis(a.x[0], b.x[0]);
    let dy = torus_axis(a.x[1], b.x[1]);
    let dv0 = a.v[0] - b.v[0];
    let dv1 = a.v[1] - b.v[1];
    (dx * dx + dy * dy).sqrt() + (dv0 * dv0 + dv1 * dv1).sqrt()
}

/// Hard cap on the combined support of the exact solver.
pub const EXACT_SUPPORT_LIMIT: usize = 4096;

/// Exact Wasserstein-1 between two weighted point sets by min-cost flow
/// (successive shortest augmenting paths with node potentials) on the
/// complete bipartite graph. Weights must each sum to 1 (checked to
/// 1e-9 and renormalized).
pub fn wasserstein1_exact(
    mu: &[PhasePoint],
    wmu: &[f64],
    nu: &[PhasePoint],
    wnu: &[f64],
) -> Result<f64> {
    let m = mu.len();
    let n = nu.len();
    if m == 0 || n == 0 || m != wmu.len() || n != wnu.len() {
        return Err(VnsError::ShapeMismatch(
            "wasserstein1_exact: empty or mismatched point/weight lists".into(),
        ));
    }
    if m + n > EXACT_SUPPORT_LIMIT {
        return Err(VnsError::TransportTooLarge {
            points: m + n,
            limit: EXACT_SUPPORT_LIMIT,
        });
    }
    let smu: f64 = wmu.iter().sum();
    let snu: f64 = wnu.iter().sum();
    if (smu - 1.0).abs() > 1e-9 || (snu - 1.0).abs() > 1e-9 || wmu.iter().any(|w| *w < 0.0)
        || wnu.iter().any(|w| *w < 0.0)
    {
        return Err(VnsError::ShapeMismatch(
            "wasserstein1_exact: weights must be nonnegative and sum to 1".into(),
        ));
    }

    // dense cost matrix
    let cost: Vec<f64> = (0..m * n)
        .into_par_iter()
        .map(|idx| ground_distance(&mu[idx / n], &nu[idx % n]))
        .collect();

    let mut supply: Vec<f64> = wmu.iter().map(|w| w / smu).collect();
    let mut demand: Vec<f64> = wnu.iter().map(|w| w / snu).collect();
    let mut flow = vec![0.0f64; m * n];
    // Johnson potentials over all nodes: sources 0..m, sinks m..m+n;
    // invariant: every residual arc has nonnegative reduced cost
    let tot = m + n;
    let mut pot = vec![0.0f64; tot];

    let weight_floor = 1e-15;
    for s in 0..m {
        // drain source s by successive shortest augmenting paths
        while supply[s] > weight_floor {
            let mut dist = vec![f64::INFINITY; tot];
            let mut parent = vec![usize::MAX; tot];
            let mut done = vec![false; tot];
            dist[s] = 0.0;
            loop {
                let mut u = usize::MAX;
                let mut bd = f64::INFINITY;
                for k in 0..tot {
                    if !done[k] && dist[k] < bd {
                        bd = dist[k];
                        u = k;
                    }
                }
                if u == usize::MAX {
                    break;
                }
                done[u] = true;
                if u < m {
                    // forward arcs i -> j (uncapacitated)
                    let base = u * n;
                    for j in 0..n {
                        let rc = (cost[base + j] + pot[u] - pot[m + j]).max(0.0);
                        if dist[u] + rc < dist[m + j] {
                            dist[m + j] = dist[u] + rc;
                            parent[m + j] = u;
                        }
                    }
                } else {
                    // backward arcs j -> i where flow is positive
                    let j = u - m;
                    for i in 0..m {
                        if flow[i * n + j] > weight_floor {
                            let rc = (-cost[i * n + j] + pot[u] - pot[i]).max(0.0);
                            if dist[u] + rc < dist[i] {
                                dist[i] = dist[u] + rc;
                                parent[i] = u;
                            }
                        }
                    }
                }
            }
            // nearest sink with remaining demand
            let mut target = usize::MAX;
            let mut td = f64::INFINITY;
            for j in 0..n {
                if demand[j] > weight_floor && dist[m + j] < td {
                    td = dist[m + j];
                    target = j;
                }
            }
            if target == usize::MAX {
                break; // numerically exhausted
            }
            for k in 0..tot {
                pot[k] += dist[k].min(td);
            }
            // trace the augmenting path back to s, find the bottleneck
            let mut path = Vec::new();
            let mut node = m + target;
            while node != s {
                let p = parent[node];
                path.push((p, node));
                node = p;
            }
            let mut bottleneck = supply[s].min(demand[target]);
            for (a, b) in &path {
                if *a >= m {
                    bottleneck = bottleneck.min(flow[*b * n + (*a - m)]);
                }
            }
            if !(bottleneck > weight_floor) {
                break;
            }
            for (a, b) in &path {
                if *a < m {
                    flow[*a * n + (*b - m)] += bottleneck;
                } else {
                    flow[*b * n + (*a - m)] -= bottleneck;
                }
            }
            supply[s] -= bottleneck;
            demand[target] -= bottleneck;
        }
    }

    Ok(flow
        .iter()
        .zip(cost.iter())
        .map(|(f, c)| f * c)
        .sum::<f64>())
}

/// Deterministic i.i.d. samples from a kinetic density by inverse-CDF on
/// the flattened cell probabilities, jittered uniformly within the cell.
pub struct KineticSampler {
    cum: Vec<f64>,
    nx: usize,
    nv: usize,
    vmax: f64,
}

impl KineticSampler {
    pub fn new(f: &KineticDensity) -> Self {
        let mut cum = Vec::with_capacity(f.values.len());
        let mut acc = 0.0;
        for v in &f.values {
            acc += v.max(0.0);
            cum.push(acc);
        }
        let total = acc.max(f64::MIN_POSITIVE);
        for c in cum.iter_mut() {
            *c /= total;
        }
        KineticSampler {
            cum,
            nx: f.nx,
            nv: f.nv,
            vmax: f.vmax,
        }
    }

    /// Sample `draw` of stream `stream` under master seed `seed`.
    pub fn sample(&self, seed: u64, stream: u64, draw: u64) -> PhasePoint {
        let u = rng::uniform(seed, stream, draw, 0);
        let cell = self.cum.partition_point(|c| *c < u).min(self.cum.len() - 1);
        let nv2 = self.nv * self.nv;
        let space = cell / nv2;
        let vel = cell % nv2;
        let (ix, iy) = (space / self.nx, space % self.nx);
        let (jx, jy) = (vel / self.nv, vel % self.nv);
        let hx = 1.0 / self.nx as f64;
        let hv = 2.0 * self.vmax / self.nv as f64;
        PhasePoint {
            x: [
                (ix as f64 + rng::uniform(seed, stream, draw, 1)) * hx,
                (iy as f64 + rng::uniform(seed, stream, draw, 2)) * hx,
            ],
            v: [
                -self.vmax + (jx as f64 + rng::uniform(seed, stream, draw, 3)) * hv,
                -self.vmax + (jy as f64 + rng::uniform(seed, stream, draw, 4)) * hv,
            ],
        }
    }
}

/// Subsampled Wasserstein estimate with its Monte-Carlo floor.
#[derive(Debug, Clone, Serialize)]
pub struct W1Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub resamples: usize,
    pub samples: usize,
    /// Self-distance of two independent subsample sets of the kinetic
    /// density: the resolution limit of the estimator at this sample
    /// size. Gaps below the floor are not distinguishable from zero.
    pub floor: f64,
    pub floor_stderr: f64,
}

/// Estimates `W1(S^N, F)` by drawing `samples` points from `F`
/// (inverse-CDF) and subsampling the ensemble to the same size, averaged
/// over `resamples` independent repetitions. Also measures the
/// self-distance floor `W1(F-sample, F-sample')` with fresh draws.
pub fn wasserstein1_estimate(
    ens: &ParticleEnsemble,
    f: &KineticDensity,
    samples: usize,
    resamples: usize,
    seed: u64,
) -> Result<W1Estimate> {
    wasserstein1_estimate_mapped(ens, f, samples, resamples, seed, |p| p)
}

/// Same estimator on the velocity marginals only: both measures are
/// projected to v before transport (the spatial coordinate is zeroed, so
/// the ground metric reduces to the Euclidean one on velocities).
pub fn wasserstein1_estimate_v_marginal(
    ens: &ParticleEnsemble,
    f: &KineticDensity,
    samples: usize,
    resamples: usize,
    seed: u64,
) -> Result<W1Estimate> {
    wasserstein1_estimate_mapped(ens, f, samples, resamples, seed, |p| PhasePoint {
        x: [0.0, 0.0],
        v: p.v,
    })
}

fn wasserstein1_estimate_mapped(
    ens: &ParticleEnsemble,
    f: &KineticDensity,
    samples: usize,
    resamples: usize,
    seed: u64,
    map: impl Fn(PhasePoint) -> PhasePoint + Sync,
) -> Result<W1Estimate> {
    if samples == 0 || 2 * samples > EXACT_SUPPORT_LIMIT {
        return Err(VnsError::Config(format!(
            "w1 samples must lie in 1..={}",
            EXACT_SUPPORT_LIMIT / 2
        )));
    }
    if resamples < 8 {
        return Err(VnsError::Config("w1 resamples must be >= 8".into()));
    }
    let sampler = KineticSampler::new(f);
    let uniform_w = vec![1.0 / samples as f64; samples];
    let n = ens.len() as f64;

    // streams: resample r uses stream 2r for the kinetic draw and the
    // ensemble subsample, stream 2r+1 for the second kinetic draw of the
    // floor measurement
    let results: Vec<(f64, f64)> = (0..resamples as u64)
        .into_par_iter()
        .map(|r| {
            let kin: Vec<PhasePoint> = (0..samples as u64)
                .map(|d| map(sampler.sample(seed, 2 * r, d)))
                .collect();
            let sub: Vec<PhasePoint> = (0..samples as u64)
                .map(|d| {
                    let u = rng::uniform(seed, 2 * r, d, 7);
                    let idx = ((u * n) as usize).min(ens.len() - 1);
                    map(PhasePoint {
                        x: ens.x[idx],
                        v: ens.v[idx],
                    })
                })
                .collect();
            let kin2: Vec<PhasePoint> = (0..samples as u64)
                .map(|d| map(sampler.sample(seed, 2 * r + 1, d)))
                .collect();
            let w = wasserstein1_exact(&sub, &uniform_w, &kin, &uniform_w)?;
            let w0 = wasserstein1_exact(&kin2, &uniform_w, &kin, &uniform_w)?;
            Ok((w, w0))
        })
        .collect::<Result<Vec<_>>>()?;

    let k = results.len() as f64;
    let mean = results.iter().map(|r| r.0).sum::<f64>() / k;
    let floor = results.iter().map(|r| r.1).sum::<f64>() / k;
    let var = results.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let var0 = results.iter().map(|r| (r.1 - floor).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(W1Estimate {
        mean,
        stderr: (var / k).sqrt(),
        resamples,
        samples,
        floor,
        floor_stderr: (var0 / k).sqrt(),
    })
}

/// Max over nodes of the Euclidean gap between two velocity fields.
pub fn sup_gap(u1: &SpectralField, u2: &SpectralField) -> Result<f64> {
    if u1.grid().n() != u2.grid().n() || u1.ncomp() != u2.ncomp() {
        return Err(VnsError::GridMismatch(
            "sup_gap requires matching grids and components".into(),
        ));
    }
    let n = u1.grid().n();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for c in 0..u1.ncomp() {
                let d = u1.at(c, i, j) - u2.at(c, i, j);
                s += d * d;
            }
            worst = worst.max(s);
        }
    }
    Ok(worst.sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Least-squares slope of `log(error)` against `log(n)`.
pub fn fit_rate(ns: &[f64], errors: &[f64]) -> Result<RateFit> {
    if ns.len() != errors.len() || ns.len() < 3 {
        return Err(VnsError::ShapeMismatch(
            "fit_rate needs at least 3 matching points".into(),
        ));
    }
    for &e in errors {
        if !(e > 0.0) {
            return Err(VnsError::NonPositiveError(e));
        }
    }
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / k;
    let ybar = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let dof = (k - 2.0).max(1.0);
    Ok(RateFit {
        slope,
        intercept,
        slope_stderr: (ss_res / dof / sxx).sqrt(),
    })
}

/// One moment-inequality check; `ratio = lhs / rhs <= 1` when satisfied.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub ok: bool,
}

/// Constant in `||m0 F||_{L2}^2 <= c (||F||_inf + 1)^2 M2 F`, from the
/// optimal split radius `r(x)^4 = m2 F / (pi ||F||_inf)`.
pub const C_M0_L2: f64 = 4.0 * std::f64::consts::PI;
/// Constant in `||m1 F||_{L2}^2 <= c (||F||_inf + 1)^2 M4 F`.
pub const C_M1_L2: f64 = 8.0 * std::f64::consts::PI / 3.0;

/// Constant in `||m0 F||_{L4}^4 <= c (||F||_inf + 1)^4 M6 F`:
/// `(3^{1/4} + 3^{-3/4})^4 pi^3`.
pub fn c_m0_l4() -> f64 {
    let c = 3f64.powf(0.25) + 3f64.powf(-0.75);
    c.powi(4) * std::f64::consts::PI.powi(3)
}

/// Shared factor `(2^{1/3} + 2^{-2/3})^2` of the L4-based inequalities.
fn c_holder_sq() -> f64 {
    let c = 2f64.powf(1.0 / 3.0) + 2f64.powf(-2.0 / 3.0);
    c * c
}

/// Constant in `||m0 F||_{L2}^2 <= c (||F||_{L4}^4 + M3 F)`.
pub fn c_m0_l4_route() -> f64 {
    c_holder_sq() * std::f64::consts::PI
}

/// Constant in `||m1 F||_{L2}^2 <= c (||F||_{L4}^4 + M6 F)`.
pub fn c_m1_l4_route() -> f64 {
    c_holder_sq() * 3.0 * std::f64::consts::PI / 5.0
}

/// Evaluates the five moment inequalities on a density frame. All
/// quantities use the same grid quadrature, so the bounds hold up to the
/// quadrature's own consistency.
pub fn marginal_inequality_report(f: &KineticDensity) -> Vec<InequalityCheck> {
    let sup = f.sup_norm();
    let l1 = f.lp_norm(1.0);
    let l4_4 = f.lp_norm(4.0).powi(4);
    let (m0_field, m0_total) = f.moments(0);
    let (m1_field, _) = f.moments(1);
    let (_, m2) = f.moments(2);
    let (_, m3) = f.moments(3);
    let (_, m4) = f.moments(4);
    let (_, m6) = f.moments(6);
    let hx2 = f.hx() * f.hx();
    let m0_l2_sq: f64 = m0_field.iter().map(|a| a * a).sum::<f64>() * hx2;
    let m0_l4_4: f64 = m0_field.iter().map(|a| a.powi(4)).sum::<f64>() * hx2;
    let m1_l2_sq: f64 = m1_field.iter().map(|a| a * a).sum::<f64>() * hx2;
    let supp1 = (sup + 1.0).powi(2);

    let mk = |name: &'static str, lhs: f64, rhs: f64| InequalityCheck {
        name,
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { f64::INFINITY },
        ok: lhs <= rhs * (1.0 + 1e-12),
    };

    vec![
        mk("m0_L2_vs_M2", m0_l2_sq, C_M0_L2 * supp1 * m2),
        mk("m0_L4_vs_M6", m0_l4_4, c_m0_l4() * supp1 * supp1 * m6),
        mk("m1_L2_vs_M4", m1_l2_sq, C_M1_L2 * supp1 * m4),
        mk("m0_L2_vs_F4_M3", m0_l2_sq, c_m0_l4_route() * (l4_4 + m3)),
        mk("m1_L2_vs_F4_M6", m1_l2_sq, c_m1_l4_route() * (l4_4 + m6)),
        mk("M2_vs_L1_M4", m2, l1 + m4),
        mk("M3_vs_L1_M6", m3, l1 + m6),
        mk("M0_vs_L1_M2", m0_total, l1 + m2),
    ]
}
