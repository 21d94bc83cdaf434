//! The interacting particle system: `N` phase-space particles driven by
//! mollified fluid drag and independent Brownian noise.
//!
//! The velocity update is the exact one-step law of the linear SDE
//! `dV = (chi u_eps(X) - V) dt + sigma dB` with the drag center frozen at
//! the step start, so with `u = 0` the scheme reproduces the
//! Ornstein-Uhlenbeck transition density exactly. All randomness is
//! counter-based (see [`crate::rng`]): trajectories depend only on the
//! master seed and the particle index, never on thread count.

use rayon::prelude::*;

use crate::config::{InitialDensity, VMarginal, XMarginal};
use crate::error::{Result, VnsError};
use crate::kinetic::KineticDensity;
use crate::mollifier::MollifierPair;
use crate::rng;
use crate::spectral::{wrap, SpectralField};

/// Reserved fine-step index for the initial-condition draws; the dynamics
/// never reach it because fine steps count up from zero.
const INIT_STEP: u64 = u64::MAX;

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub x: Vec<[f64; 2]>,
    pub v: Vec<[f64; 2]>,
    pub seed: u64,
    pub time: f64,
    /// Index of the next fine noise step to consume.
    pub fine_step: u64,
    /// Fine noise steps per macro step (fixed for the life of the run).
    pub substeps: usize,
}

/// Inverse CDF of the per-axis spatial marginal.
fn invert_x(m: XMarginal, u: f64) -> f64 {
    match m {
        XMarginal::Uniform => u,
        XMarginal::Trig { amp } => {
            // solve x + amp sin(2 pi x) / (2 pi) = u; the CDF derivative
            // 1 + amp cos(2 pi x) is positive for |amp| < 1
            let two_pi = 2.0 * std::f64::consts::PI;
            let mut x = u;
            for _ in 0..50 {
                let g = x + amp * (two_pi * x).sin() / two_pi - u;
                let dg = 1.0 + amp * (two_pi * x).cos();
                let step = g / dg;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            wrap(x)
        }
    }
}

/// Inverse CDF of the per-axis velocity marginal.
fn invert_v(m: VMarginal, u: f64) -> f64 {
    match m {
        VMarginal::Gaussian { std, trunc } => {
            use statrs::distribution::{ContinuousCDF, Normal};
            let n = Normal::new(0.0, std).unwrap();
            let lo = n.cdf(-trunc);
            let hi = n.cdf(trunc);
            n.inverse_cdf(lo + u * (hi - lo)).clamp(-trunc, trunc)
        }
        VMarginal::HeavyTail { scale, power } => {
            let w = 2.0 * u - 1.0;
            let mag = scale * ((1.0 - w.abs()).powf(1.0 / (1.0 - power)) - 1.0);
            mag.copysign(w)
        }
    }
}

impl ParticleEnsemble {
    /// Draws `n` i.i.d. particles from the product initial density by
    /// per-coordinate inverse-CDF sampling. Particle `i` always receives
    /// the same draws for a fixed seed, independent of `n` — the basis of
    /// the common-random-numbers coupling across particle counts.
    pub fn sample_initial(n: usize, f0: &InitialDensity, seed: u64, substeps: usize) -> Self {
        let pairs: Vec<([f64; 2], [f64; 2])> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let x = [
                    invert_x(f0.x, rng::uniform(seed, i, INIT_STEP, 0)),
                    invert_x(f0.x, rng::uniform(seed, i, INIT_STEP, 1)),
                ];
                let v = [
                    invert_v(f0.v, rng::uniform(seed, i, INIT_STEP, 2)),
                    invert_v(f0.v, rng::uniform(seed, i, INIT_STEP, 3)),
                ];
                (x, v)
            })
            .collect();
        ParticleEnsemble {
            x: pairs.iter().map(|p| p.0).collect(),
            v: pairs.iter().map(|p| p.1).collect(),
            seed,
            time: 0.0,
            fine_step: 0,
            substeps,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Mean kinetic energy `(1 / 2N) sum |V_i|^2`.
    pub fn kinetic_energy(&self) -> f64 {
        self.v
            .iter()
            .map(|v| v[0] * v[0] + v[1] * v[1])
            .sum::<f64>()
            / (2.0 * self.len() as f64)
    }

    pub fn max_speed(&self) -> f64 {
        self.v
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
            .fold(0.0, f64::max)
    }

    /// One macro step of length `dt`. `drag_u` is the (already mollified
    /// and cut-off-weighted) drag center field `chi u_eps`; the noise
    /// consumes `substeps` fine Brownian increments so dyadic refinements
    /// of `dt` ride the same Brownian path.
    pub fn step(&mut self, drag_u: &SpectralField, dt: f64, sigma: f64) -> Result<()> {
        let decay = (-dt).exp();
        let noise_scale = sigma * ((1.0 - (-2.0 * dt).exp()) / 2.0).sqrt();
        let dt_fine = dt / self.substeps as f64;
        let seed = self.seed;
        let first = self.fine_step;
        let count = self.substeps as u64;
        let sqrt_dt = dt.sqrt();

        let updated: Vec<([f64; 2], [f64; 2])> = self
            .x
            .par_iter()
            .zip(self.v.par_iter())
            .enumerate()
            .map(|(i, (x, v))| {
                let center = drag_u.interpolate(*x);
                let db = rng::brownian_increment(seed, i as u64, first, count, dt_fine);
                let mut vn = [0.0f64; 2];
                for c in 0..2 {
                    let xi = db[c] / sqrt_dt;
                    vn[c] = decay * v[c] + (1.0 - decay) * center[c] + noise_scale * xi;
                }
                let xn = [
                    wrap(x[0] + 0.5 * (v[0] + vn[0]) * dt),
                    wrap(x[1] + 0.5 * (v[1] + vn[1]) * dt),
                ];
                (xn, vn)
            })
            .collect();

        for (i, (xn, vn)) in updated.into_iter().enumerate() {
            if !(xn[0].is_finite() && xn[1].is_finite() && vn[0].is_finite() && vn[1].is_finite()) {
                return Err(VnsError::NanDetected {
                    context: format!("particle {i}"),
                    step: (self.fine_step / count) as usize,
                });
            }
            self.x[i] = xn;
            self.v[i] = vn;
        }
        self.fine_step += count;
        self.time += dt;
        Ok(())
    }

    /// Empirical spatial moments of the mollified empirical measure:
    /// `m0(x) = (1/N) sum theta0(x - X_i)` and
    /// `m1(x) = (1/N) sum V_i theta0(x - X_i)`.
    ///
    /// These equal the zeroth and first velocity moments of the full
    /// mollified density because the velocity kernel is symmetric.
    pub fn moment_fields(&self, moll: &MollifierPair) -> (SpectralField, SpectralField) {
        let grid = moll.grid();
        let n = grid.n();
        let norm0 = moll.theta0_norm();
        let inv_n = 1.0 / self.len() as f64;

        // theta0 is a product of axis factors, so each particle deposits
        // an outer product of two length-n vectors; precompute them once
        let fx: Vec<Vec<f64>> = self.x.par_iter().map(|x| moll.axis_factors(x[0])).collect();
        let fy: Vec<Vec<f64>> = self.x.par_iter().map(|x| moll.axis_factors(x[1])).collect();

        // parallelize over output rows: every row sums the particles in
        // index order, so the result is bitwise independent of the thread
        // count
        let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut r0 = vec![0.0; n];
                let mut r1a = vec![0.0; n];
                let mut r1b = vec![0.0; n];
                for (p, v) in self.v.iter().enumerate() {
                    let wx = norm0 * fx[p][i];
                    let row_fy = &fy[p];
                    for j in 0..n {
                        let w = wx * row_fy[j];
                        r0[j] += w;
                        r1a[j] += w * v[0];
                        r1b[j] += w * v[1];
                    }
                }
                (r0, r1a, r1b)
            })
            .collect();

        let mut m0 = vec![0.0; n * n];
        let mut m1 = vec![0.0; 2 * n * n];
        for (i, (r0, r1a, r1b)) in rows.into_iter().enumerate() {
            for j in 0..n {
                m0[i * n + j] = r0[j] * inv_n;
                m1[i * n + j] = r1a[j] * inv_n;
                m1[n * n + i * n + j] = r1b[j] * inv_n;
            }
        }
        (
            SpectralField::from_raw(grid, 1, m0),
            SpectralField::from_raw(grid, 2, m1),
        )
    }

    /// Drag force density exerted on the fluid,
    /// `chi (u(x) m0(x) - m1(x))`, on the fluid grid (not dealiased).
    pub fn deposit_drag(
        &self,
        moll: &MollifierPair,
        u: &SpectralField,
        chi: f64,
    ) -> Result<SpectralField> {
        let grid = moll.grid();
        if grid.n() != u.grid().n() {
            return Err(VnsError::GridMismatch(
                "mollifier and fluid grids differ".into(),
            ));
        }
        let (m0, m1) = self.moment_fields(moll);
        let n = grid.n();
        let mut force = SpectralField::zeros(grid, 2);
        for c in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    let val = chi * (u.at(c, i, j) * m0.at(0, i, j) - m1.at(c, i, j));
                    force.set(c, i, j, val);
                }
            }
        }
        Ok(force)
    }

    /// Per-particle drag deposit computed without the moment shortcut:
    /// `(1/N) sum_i chi (u(x) - V_i) theta0(x - X_i)`. Used as the oracle
    /// for the moment-representation identity.
    pub fn deposit_drag_direct(
        &self,
        moll: &MollifierPair,
        u: &SpectralField,
        chi: f64,
    ) -> SpectralField {
        let grid = moll.grid();
        let n = grid.n();
        let norm0 = moll.theta0_norm();
        let inv_n = 1.0 / self.len() as f64;
        let mut force = SpectralField::zeros(grid, 2);
        for (x, v) in self.x.iter().zip(self.v.iter()) {
            let fx = moll.axis_factors(x[0]);
            let fy = moll.axis_factors(x[1]);
            for i in 0..n {
                let wx = norm0 * fx[i];
                for j in 0..n {
                    let w = wx * fy[j];
                    for c in 0..2 {
                        let cur = force.at(c, i, j);
                        force.set(c, i, j, cur + chi * w * (u.at(c, i, j) - v[c]) * inv_n);
                    }
                }
            }
        }
        force
    }

    /// Full mollified empirical density
    /// `F^N(x, v) = (1/N) sum theta0(x - X_i) theta1(v - V_i)` on a
    /// kinetic grid. Fails if any particle's kernel support leaves the
    /// velocity box.
    pub fn mollified_density(
        &self,
        moll: &MollifierPair,
        nv: usize,
        vmax: f64,
    ) -> Result<KineticDensity> {
        let eps = moll.eps();
        for (i, v) in self.v.iter().enumerate() {
            if v[0].abs() + eps > vmax || v[1].abs() + eps > vmax {
                return Err(VnsError::VelocityOutsideGrid {
                    index: i,
                    v: *v,
                    vmax,
                });
            }
        }
        let grid = moll.grid();
        let nx = grid.n();
        let hv = 2.0 * vmax / nv as f64;
        if eps < 2.0 * hv {
            return Err(VnsError::UnderResolvedKernel {
                support: eps,
                cell: hv,
            });
        }
        let norm0 = moll.theta0_norm();
        let inv_n = 1.0 / self.len() as f64;
        let mut f = KineticDensity {
            nx,
            nv,
            vmax,
            time: self.time,
            values: vec![0.0; nx * nx * nv * nv],
        };
        let v_node = |j: usize| -vmax + (j as f64 + 0.5) * hv;
        let nv2 = nv * nv;
        for (x, v) in self.x.iter().zip(self.v.iter()) {
            let fx = moll.axis_factors(x[0]);
            let fy = moll.axis_factors(x[1]);
            // compact support: only velocity nodes within eps contribute
            let j0 = (((v[0] - eps + vmax) / hv).floor().max(0.0)) as usize;
            let j1 = ((((v[0] + eps + vmax) / hv).ceil()) as usize).min(nv);
            let k0 = (((v[1] - eps + vmax) / hv).floor().max(0.0)) as usize;
            let k1 = ((((v[1] + eps + vmax) / hv).ceil()) as usize).min(nv);
            let mut theta1 = vec![0.0; nv2];
            let mut kernel_mass = 0.0;
            for j in j0..j1 {
                for k in k0..k1 {
                    let w = moll.theta1_eval([v_node(j) - v[0], v_node(k) - v[1]]);
                    if w != 0.0 {
                        theta1[j * nv + k] = w;
                        kernel_mass += w;
                    }
                }
            }
            if kernel_mass == 0.0 {
                continue;
            }
            // renormalize under grid quadrature so each particle deposits
            // exactly unit mass regardless of the velocity resolution
            let scale = 1.0 / (kernel_mass * hv * hv);
            for w in theta1.iter_mut() {
                *w *= scale;
            }
            for i in 0..nx {
                let wx = norm0 * fx[i] * inv_n;
                for jy in 0..nx {
                    let w0 = wx * fy[jy];
                    let block = &mut f.values[(i * nx + jy) * nv2..(i * nx + jy + 1) * nv2];
                    for j in j0..j1 {
                        for k in k0..k1 {
                            let t = theta1[j * nv + k];
                            if t != 0.0 {
                                block[j * nv + k] += w0 * t;
                            }
                        }
                    }
                }
            }
        }
        Ok(f)
    }

    /// Versioned binary checkpoint.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(48 + 32 * self.len());
        out.extend_from_slice(b"VNSP");
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.time.to_le_bytes());
        out.extend_from_slice(&self.fine_step.to_le_bytes());
        out.extend_from_slice(&(self.substeps as u64).to_le_bytes());
        for p in self.x.iter().chain(self.v.iter()) {
            out.extend_from_slice(&p[0].to_le_bytes());
            out.extend_from_slice(&p[1].to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| VnsError::Config(format!("particle checkpoint: {m}"));
        if bytes.len() < 48 || &bytes[0..4] != b"VNSP" {
            return Err(bad("bad magic"));
        }
        if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != 1 {
            return Err(bad("unsupported version"));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let seed = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let time = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
        let fine_step = u64::from_le_bytes(bytes[32..40].try_into().unwrap());
        let substeps = u64::from_le_bytes(bytes[40..48].try_into().unwrap()) as usize;
        if bytes.len() != 48 + 32 * n {
            return Err(bad("length mismatch"));
        }
        let mut pts = bytes[48..]
            .chunks_exact(16)
            .map(|c| {
                [
                    f64::from_le_bytes(c[0..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..16].try_into().unwrap()),
                ]
            })
            .collect::<Vec<_>>();
        let v = pts.split_off(n);
        Ok(ParticleEnsemble {
            x: pts,
            v,
            seed,
            time,
            fine_step,
            substeps,
        })
    }
}
