//! Reference solver for the Vlasov-Fokker-Planck component on the
//! truncated velocity domain `[-vmax, vmax]^2`.
//!
//! The transport pieces use conservative semi-Lagrangian remapping of the
//! cumulative mass function along one axis at a time: the drag field
//! `chi u(x) - v` is affine in `v`, so its characteristics (and the
//! `e^{2 dt}` compression Jacobian) are handled exactly by the remap.
//! Velocity diffusion is Crank-Nicolson with reflecting fluxes at the
//! domain edge. Total mass is conserved to round-off by construction;
//! truncation error is monitored through the boundary-layer mass.

use rayon::prelude::*;

use crate::config::InitialDensity;
use crate::error::{Result, VnsError};
use crate::spectral::SpectralField;

/// Phase-space density on the tensor grid. Spatial nodes sit at
/// `i / nx` (periodic); velocity nodes are cell centers
/// `-vmax + (j + 1/2) hv` with `hv = 2 vmax / nv`.
#[derive(Debug, Clone)]
pub struct KineticDensity {
    pub nx: usize,
    pub nv: usize,
    pub vmax: f64,
    pub time: f64,
    /// Row-major `[ix][iy][jx][jy]`; the `nv x nv` velocity block of one
    /// spatial node is contiguous.
    pub values: Vec<f64>,
}

impl KineticDensity {
    pub fn hx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn hv(&self) -> f64 {
        2.0 * self.vmax / self.nv as f64
    }

    pub fn v_node(&self, j: usize) -> f64 {
        -self.vmax + (j as f64 + 0.5) * self.hv()
    }

    pub fn x_node(&self, i: usize) -> f64 {
        i as f64 / self.nx as f64
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize, jx: usize, jy: usize) -> f64 {
        self.values[((ix * self.nx + iy) * self.nv + jx) * self.nv + jy]
    }

    /// Samples a closed-form density and normalizes it to unit mass.
    pub fn from_density(
        nx: usize,
        nv: usize,
        vmax: f64,
        f: impl Fn([f64; 2], [f64; 2]) -> f64,
    ) -> Self {
        let mut out = Self {
            nx,
            nv,
            vmax,
            time: 0.0,
            values: vec![0.0; nx * nx * nv * nv],
        };
        let mut idx = 0;
        for ix in 0..nx {
            for iy in 0..nx {
                let x = [out.x_node(ix), out.x_node(iy)];
                for jx in 0..nv {
                    for jy in 0..nv {
                        out.values[idx] = f(x, [out.v_node(jx), out.v_node(jy)]);
                        idx += 1;
                    }
                }
            }
        }
        let mass = out.mass();
        if mass > 0.0 {
            for v in &mut out.values {
                *v /= mass;
            }
        }
        out
    }

    pub fn from_initial(nx: usize, nv: usize, vmax: f64, f0: &InitialDensity) -> Self {
        Self::from_density(nx, nv, vmax, |x, v| f0.density(x, v))
    }

    /// Total mass by grid quadrature.
    pub fn mass(&self) -> f64 {
        let cell = self.hx() * self.hx() * self.hv() * self.hv();
        self.values.iter().sum::<f64>() * cell
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// L^p norm by grid quadrature (p finite).
    pub fn lp_norm(&self, p: f64) -> f64 {
        let cell = self.hx() * self.hx() * self.hv() * self.hv();
        (self
            .values
            .iter()
            .map(|v| v.abs().powf(p))
            .sum::<f64>()
            * cell)
            .powf(1.0 / p)
    }

    /// Mass carried by the layer `max(|v1|, |v2|) >= 0.9 vmax`.
    pub fn boundary_layer_mass(&self) -> f64 {
        let cell = self.hx() * self.hx() * self.hv() * self.hv();
        let cut = 0.9 * self.vmax;
        let mut acc = 0.0;
        for ix in 0..self.nx {
            for iy in 0..self.nx {
                for jx in 0..self.nv {
                    let v1 = self.v_node(jx);
                    for jy in 0..self.nv {
                        let v2 = self.v_node(jy);
                        if v1.abs() >= cut || v2.abs() >= cut {
                            acc += self.at(ix, iy, jx, jy);
                        }
                    }
                }
            }
        }
        acc * cell
    }

    /// `m_k F(x) = int |v|^k F dv` per spatial node, and its integral `M_k F`.
    pub fn moments(&self, k: u32) -> (Vec<f64>, f64) {
        assert!(k <= 6, "moment order out of range");
        let hv2 = self.hv() * self.hv();
        let speeds: Vec<f64> = (0..self.nv * self.nv)
            .map(|idx| {
                let v1 = self.v_node(idx / self.nv);
                let v2 = self.v_node(idx % self.nv);
                (v1 * v1 + v2 * v2).sqrt().powi(k as i32)
            })
            .collect();
        let field: Vec<f64> = self
            .values
            .par_chunks(self.nv * self.nv)
            .map(|block| {
                block
                    .iter()
                    .zip(speeds.iter())
                    .map(|(f, s)| f * s)
                    .sum::<f64>()
                    * hv2
            })
            .collect();
        let total = field.iter().sum::<f64>() * self.hx() * self.hx();
        (field, total)
    }

    /// Zeroth moment and signed first moment `int v F dv` per spatial node.
    pub fn vector_moments(&self) -> (Vec<f64>, Vec<[f64; 2]>) {
        let hv2 = self.hv() * self.hv();
        let nv = self.nv;
        let vnodes: Vec<f64> = (0..nv).map(|j| self.v_node(j)).collect();
        let out: Vec<(f64, [f64; 2])> = self
            .values
            .par_chunks(nv * nv)
            .map(|block| {
                let mut m0 = 0.0;
                let mut m1 = [0.0f64; 2];
                for jx in 0..nv {
                    for jy in 0..nv {
                        let f = block[jx * nv + jy];
                        m0 += f;
                        m1[0] += vnodes[jx] * f;
                        m1[1] += vnodes[jy] * f;
                    }
                }
                (m0 * hv2, [m1[0] * hv2, m1[1] * hv2])
            })
            .collect();
        (
            out.iter().map(|(a, _)| *a).collect(),
            out.iter().map(|(_, b)| *b).collect(),
        )
    }

    /// v-marginal density on the velocity grid (integrated over x).
    pub fn v_marginal(&self) -> Vec<f64> {
        let nv2 = self.nv * self.nv;
        let mut marg = vec![0.0; nv2];
        for block in self.values.chunks(nv2) {
            for (m, f) in marg.iter_mut().zip(block.iter()) {
                *m += f;
            }
        }
        let hx2 = self.hx() * self.hx();
        for m in &mut marg {
            *m *= hx2;
        }
        marg
    }
}

/// Conservative remap of every column of an `nv x nv` block along its
/// first index, all columns sharing one backtrace map. The edge
/// positions, stencil indices and Hermite/Lagrange bases are computed
/// once per edge; the inner loops run over contiguous rows. The density
/// is extended by zero outside the block (non-periodic).
#[allow(clippy::too_many_arguments)]
fn remap_block_columns(
    block: &mut [f64],
    nv: usize,
    h: f64,
    xmin: f64,
    backtrace: impl Fn(f64) -> f64,
    periodic: bool,
    monotone: bool,
    cum: &mut [f64],
    rows: &mut [f64],
) {
    let n = nv;
    // cumulative mass per column: cum[k * nv + m], k = 0..=n
    for c in cum[..nv].iter_mut() {
        *c = 0.0;
    }
    for k in 0..n {
        for m in 0..nv {
            cum[(k + 1) * nv + m] = cum[k * nv + m] + block[k * nv + m] * h;
        }
    }
    // rows: two row buffers for M at consecutive edges
    for j in 0..=n {
        let (a, b) = rows.split_at_mut(nv);
        let (prev, cur) = if j % 2 == 0 { (b, a) } else { (a, b) };
        let edge = xmin + j as f64 * h;
        let p = backtrace(edge);
        let (s, wraps) = if periodic {
            let rel = (p - xmin) / (n as f64 * h);
            let w = rel.floor();
            ((rel - w) * n as f64, w)
        } else {
            ((p - xmin) / h, 0.0)
        };
        if s <= 0.0 {
            cur.copy_from_slice(&cum[..nv]);
        } else if s >= n as f64 {
            cur.copy_from_slice(&cum[n * nv..(n + 1) * nv]);
        } else {
            let k = (s.floor() as usize).min(n - 1);
            let t = s - k as f64;
            if monotone {
                let t2 = t * t;
                let t3 = t2 * t;
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + t;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                let rk = &cum[k * nv..(k + 1) * nv];
                let rk1 = &cum[(k + 1) * nv..(k + 2) * nv];
                let rkm = if k > 0 {
                    &cum[(k - 1) * nv..k * nv]
                } else {
                    rk
                };
                let rk2 = if k + 2 <= n {
                    &cum[(k + 2) * nv..(k + 3) * nv]
                } else {
                    rk1
                };
                let slope = |a: f64, b: f64| {
                    if a * b <= 0.0 {
                        0.0
                    } else {
                        2.0 * a * b / (a + b)
                    }
                };
                for m in 0..nv {
                    let d0 = rk1[m] - rk[m];
                    let dm = if k > 0 { rk[m] - rkm[m] } else { d0 };
                    let dp = if k + 2 <= n { rk2[m] - rk1[m] } else { d0 };
                    cur[m] =
                        h00 * rk[m] + h10 * slope(dm, d0) + h01 * rk1[m] + h11 * slope(d0, dp);
                }
            } else {
                let k0 = k.saturating_sub(1).min(n.saturating_sub(3));
                let u = s - k0 as f64;
                let mut w = [0.0f64; 4];
                for (a, wa) in w.iter_mut().enumerate() {
                    let mut acc = 1.0;
                    for b in 0..4 {
                        if a != b {
                            acc *= (u - b as f64) / (a as f64 - b as f64);
                        }
                    }
                    *wa = acc;
                }
                let r0 = &cum[k0 * nv..(k0 + 1) * nv];
                let r1 = &cum[(k0 + 1) * nv..(k0 + 2) * nv];
                let r2 = &cum[(k0 + 2) * nv..(k0 + 3) * nv];
                let r3 = &cum[(k0 + 3) * nv..(k0 + 4) * nv];
                for m in 0..nv {
                    cur[m] = w[0] * r0[m] + w[1] * r1[m] + w[2] * r2[m] + w[3] * r3[m];
                }
            }
        }
        if wraps != 0.0 {
            let total = &cum[n * nv..(n + 1) * nv];
            for m in 0..nv {
                cur[m] += wraps * total[m];
            }
        }
        if j > 0 {
            let out = &mut block[(j - 1) * nv..j * nv];
            for m in 0..nv {
                out[m] = (cur[m] - prev[m]) / h;
            }
        }
    }
}

/// In-place transpose of a square `nv x nv` block.
fn transpose_block(block: &mut [f64], nv: usize) {
    for i in 0..nv {
        for j in 0..i {
            block.swap(i * nv + j, j * nv + i);
        }
    }
}

/// Crank-Nicolson diffusion of every column of a block along its first
/// index, reflecting boundaries, vectorized over columns (the Thomas
/// coefficients depend only on the row).
fn diffuse_block_columns(block: &mut [f64], nv: usize, r: f64, c_star: &[f64], rhs: &mut [f64]) {
    let n = nv;
    let c_off = -r;
    // rhs = (I + r L) f, row-wise
    for i in 0..n {
        let lo = if i > 0 { i - 1 } else { i };
        let hi = if i + 1 < n { i + 1 } else { i };
        for m in 0..nv {
            let f = block[i * nv + m];
            rhs[i * nv + m] =
                f + r * (block[lo * nv + m] - 2.0 * f + block[hi * nv + m]);
        }
    }
    // forward elimination with precomputed c_star
    let diag0 = 1.0 + r;
    for m in 0..nv {
        rhs[m] /= diag0;
    }
    for i in 1..n {
        let diag = if i == n - 1 { 1.0 + r } else { 1.0 + 2.0 * r };
        let inv_m = 1.0 / (diag - c_off * c_star[i - 1]);
        for m in 0..nv {
            rhs[i * nv + m] = (rhs[i * nv + m] - c_off * rhs[(i - 1) * nv + m]) * inv_m;
        }
    }
    // back substitution
    for m in 0..nv {
        block[(n - 1) * nv + m] = rhs[(n - 1) * nv + m];
    }
    for i in (0..n - 1).rev() {
        for m in 0..nv {
            block[i * nv + m] = rhs[i * nv + m] - c_star[i] * block[(i + 1) * nv + m];
        }
    }
}

/// Thomas forward-sweep coefficients for `diffuse_block_columns`; they
/// depend only on the row index, so they are shared by every block.
fn thomas_c_star(nv: usize, r: f64) -> Vec<f64> {
    let n = nv;
    let c_off = -r;
    let mut c_star = vec![0.0; n];
    c_star[0] = c_off / (1.0 + r);
    for i in 1..n {
        let diag = if i == n - 1 { 1.0 + r } else { 1.0 + 2.0 * r };
        c_star[i] = c_off / (diag - c_off * c_star[i - 1]);
    }
    c_star
}

/// Solver options; the monotone limiter keeps the density nonnegative at
/// the cost of some extra smoothing.
#[derive(Debug, Clone, Copy)]
pub struct VfpOptions {
    pub monotone: bool,
}

impl Default for VfpOptions {
    fn default() -> Self {
        Self { monotone: true }
    }
}

/// Spatial transport for time `tau`: shifts each velocity slice by
/// `-v tau` along both spatial axes (periodic). Transport never mixes
/// velocity indices, so the work is done in a transposed
/// `[velocity][space]` layout where each velocity block is small enough
/// to stay in cache.
fn transport_x(state: &KineticDensity, tau: f64, opts: VfpOptions) -> Vec<f64> {
    let (nx, nv) = (state.nx, state.nv);
    let hx = state.hx();
    let nx2 = nx * nx;
    let nv2 = nv * nv;
    let mut t = vec![0.0; state.values.len()];
    transpose::transpose(&state.values, &mut t, nv2, nx2);
    t.par_chunks_mut(nx2).enumerate().for_each(|(j, block)| {
        let shift0 = state.v_node(j / nv) * tau;
        let shift1 = state.v_node(j % nv) * tau;
        let mut cum = vec![0.0; (nx + 1) * nx];
        let mut rows = vec![0.0; 2 * nx];
        // axis x1 (first index), then x2 via transposition
        remap_block_columns(
            block,
            nx,
            hx,
            0.0,
            |edge| edge - shift0,
            true,
            opts.monotone,
            &mut cum,
            &mut rows,
        );
        transpose_block(block, nx);
        remap_block_columns(
            block,
            nx,
            hx,
            0.0,
            |edge| edge - shift1,
            true,
            opts.monotone,
            &mut cum,
            &mut rows,
        );
        transpose_block(block, nx);
    });
    let mut out = vec![0.0; state.values.len()];
    transpose::transpose(&t, &mut out, nx2, nv2);
    out
}

/// One Strang-split step of the kinetic equation
/// `d_t F + v . grad_x F + div_v((chi u - v) F) = (sigma^2 / 2) Lap_v F`.
pub fn vfp_step(
    state: &KineticDensity,
    u: &SpectralField,
    chi: f64,
    dt: f64,
    sigma: f64,
    opts: VfpOptions,
) -> Result<KineticDensity> {
    if u.ncomp() != 2 {
        return Err(VnsError::ShapeMismatch("vfp_step needs a velocity field".into()));
    }
    let cfl = state.vmax * dt / state.hx();
    if cfl > 1.0 {
        return Err(VnsError::CflViolation { cfl, limit: 1.0 });
    }
    let (nx, nv) = (state.nx, state.nv);
    let nv2 = nv * nv;
    let hv = state.hv();
    let vmin = -state.vmax;

    // drag centers chi u at each spatial node (exact when the grids match)
    let centers: Vec<[f64; 2]> = (0..nx * nx)
        .map(|i| {
            let p = [state.x_node(i / nx), state.x_node(i % nx)];
            let uv = u.interpolate(p);
            [chi * uv[0], chi * uv[1]]
        })
        .collect();

    let mut next = state.clone();
    next.values = transport_x(state, 0.5 * dt, opts);

    // v-operations on contiguous velocity blocks, per spatial node;
    // every kernel runs row-wise over the block with the backtrace and
    // Thomas coefficients hoisted out of the column loops
    let growth = (0.5 * dt).exp(); // backtrace scale of the half drift
    let r = sigma * sigma * 0.5 * dt / (2.0 * hv * hv);
    let c_star = thomas_c_star(nv, r);
    next.values
        .par_chunks_mut(nv2)
        .enumerate()
        .for_each(|(node, block)| {
            let c = centers[node];
            let mut cum = vec![0.0; (nv + 1) * nv];
            let mut rows = vec![0.0; 2 * nv];
            let mut rhs = vec![0.0; nv2];

            let drift_half = |block: &mut [f64], cum: &mut [f64], rows: &mut [f64]| {
                // axis v1 (first index), then v2 via transposition
                remap_block_columns(
                    block,
                    nv,
                    hv,
                    vmin,
                    |edge| (edge - c[0]) * growth + c[0],
                    false,
                    opts.monotone,
                    cum,
                    rows,
                );
                transpose_block(block, nv);
                remap_block_columns(
                    block,
                    nv,
                    hv,
                    vmin,
                    |edge| (edge - c[1]) * growth + c[1],
                    false,
                    opts.monotone,
                    cum,
                    rows,
                );
                transpose_block(block, nv);
            };

            drift_half(block, &mut cum, &mut rows);
            if sigma > 0.0 {
                diffuse_block_columns(block, nv, r, &c_star, &mut rhs);
                transpose_block(block, nv);
                diffuse_block_columns(block, nv, r, &c_star, &mut rhs);
                transpose_block(block, nv);
            }
            drift_half(block, &mut cum, &mut rows);
        });

    let transported = transport_x(&next, 0.5 * dt, opts);
    next.values = transported;
    next.time = state.time + dt;

    if next.values.iter().any(|v| !v.is_finite()) {
        return Err(VnsError::NanDetected {
            context: "kinetic density".into(),
            step: 0,
        });
    }
    let blm = next.boundary_layer_mass();
    if blm > 1e-4 {
        return Err(VnsError::BoundaryMass {
            mass: blm,
            limit: 1e-4,
        });
    }
    Ok(next)
}

/// Drag force exerted on the fluid: `chi (u(x) m0F(x) - m1F(x))` on the
/// fluid grid (which must match the kinetic spatial grid).
pub fn drag_force_field(
    state: &KineticDensity,
    u: &SpectralField,
    chi: f64,
) -> Result<SpectralField> {
    let grid = u.grid();
    if grid.n() != state.nx {
        return Err(VnsError::GridMismatch(format!(
            "kinetic nx = {} vs fluid grid n = {}",
            state.nx,
            grid.n()
        )));
    }
    let (m0, m1) = state.vector_moments();
    let mut force = SpectralField::zeros(grid, 2);
    let nx = state.nx;
    for ix in 0..nx {
        for iy in 0..nx {
            let node = ix * nx + iy;
            for c in 0..2 {
                let val = chi * (u.at(c, ix, iy) * m0[node] - m1[node][c]);
                force.set(c, ix, iy, val);
            }
        }
    }
    Ok(force)
}

/// Sup-norm history compared against the `e^{2t}` compression bound from
/// the drift Jacobian.
#[derive(Debug, Clone, Serialize)]
pub struct MaxPrincipleReport {
    pub sup_ratio: f64,
    pub elapsed: f64,
    pub bound: f64,
    pub within_bound: bool,
}

use serde::Serialize;

pub fn max_principle_report(history: &[KineticDensity]) -> MaxPrincipleReport {
    assert!(!history.is_empty());
    let f0 = history[0].sup_norm();
    let mut ratio: f64 = 0.0;
    let mut elapsed: f64 = 0.0;
    for f in history {
        ratio = ratio.max(f.sup_norm() / f0);
        elapsed = elapsed.max(f.time - history[0].time);
    }
    let bound = (2.0 * elapsed).exp();
    MaxPrincipleReport {
        sup_ratio: ratio,
        elapsed,
        bound,
        within_bound: ratio <= bound * 1.05,
    }
}

/// Versioned binary checkpoint: magic, version, dims, vmax, time, then
/// row-major little-endian values.
pub fn to_bytes(state: &KineticDensity) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + 8 * state.values.len());
    out.extend_from_slice(b"VNSK");
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&(state.nx as u64).to_le_bytes());
    out.extend_from_slice(&(state.nv as u64).to_le_bytes());
    out.extend_from_slice(&state.vmax.to_le_bytes());
    out.extend_from_slice(&state.time.to_le_bytes());
    for v in &state.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<KineticDensity> {
    let bad = |m: &str| VnsError::Config(format!("kinetic checkpoint: {m}"));
    if bytes.len() < 40 || &bytes[0..4] != b"VNSK" {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != 1 {
        return Err(bad("unsupported version"));
    }
    let nx = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let nv = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let vmax = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let time = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
    let count = nx * nx * nv * nv;
    if bytes.len() != 40 + 8 * count {
        return Err(bad("length mismatch"));
    }
    let values = bytes[40..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(KineticDensity {
        nx,
        nv,
        vmax,
        time,
        values,
    })
}
