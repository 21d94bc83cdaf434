//! The mollifier pair: a periodic position kernel and a compactly
//! supported velocity kernel, with the structural hypotheses validated
//! at construction.
//!
//! The position kernel is a von-Mises product
//! `theta0(x) = c * exp(kappa (cos 2 pi x1 + cos 2 pi x2 - 2))`,
//! which is smooth, strictly positive and satisfies a gradient bound
//! `|grad theta0| <= C theta0` with a finite measured constant. The
//! velocity kernel is the standard bump `exp(-1/(1-|v|^2))` scaled to
//! the ball of radius `eps`, which is symmetric and compactly supported.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VnsError};
use crate::spectral::{Grid2D, SpectralField, TWO_PI};

/// Kernel family, selectable by the config key `mollifier.kind`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    VonmisesBump,
}

/// Unit-mass normalization of the unscaled bump on B(0,1),
/// `Z = pi * int_0^1 exp(-1/(1-s)) ds`, by Simpson quadrature.
fn bump_unit_mass() -> f64 {
    let m = 200_000usize;
    let h = 1.0 / m as f64;
    let f = |s: f64| {
        if s >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - s)).exp()
        }
    };
    let mut acc = f(0.0) + f(1.0);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    std::f64::consts::PI * acc * h / 3.0
}

/// Scaled mollifier pair `theta = theta0(x) theta1(v)` at width `eps`.
#[derive(Debug, Clone)]
pub struct MollifierPair {
    eps: f64,
    kind: KernelKind,
    kappa: f64,
    /// Grid-quadrature normalization of the position kernel.
    norm0: f64,
    /// `1 / (eps^2 Z)` normalization of the velocity bump.
    norm1: f64,
    grid: Grid2D,
    theta0_grid: SpectralField,
    grad_bound_const: f64,
}

impl MollifierPair {
    #[inline]
    pub fn eps(&self) -> f64 {
        self.eps
    }

    #[inline]
    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    #[inline]
    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// Measured constant `C` in `|grad theta0| <= C theta0`.
    #[inline]
    pub fn grad_bound_const(&self) -> f64 {
        self.grad_bound_const
    }

    /// Position kernel sampled on the grid, unit mass under grid quadrature.
    #[inline]
    pub fn theta0_field(&self) -> &SpectralField {
        &self.theta0_grid
    }

    /// Closed-form position kernel at a torus displacement.
    #[inline]
    pub fn theta0_eval(&self, dx: f64, dy: f64) -> f64 {
        self.norm0 * self.axis_factor(dx) * self.axis_factor(dy)
    }

    /// Separable 1-D factor `exp(kappa (cos 2 pi d - 1))`.
    #[inline]
    pub fn axis_factor(&self, d: f64) -> f64 {
        (self.kappa * ((TWO_PI * d).cos() - 1.0)).exp()
    }

    #[inline]
    pub fn theta0_norm(&self) -> f64 {
        self.norm0
    }

    /// Axis factors of `theta0` at every grid node relative to `coord`.
    pub fn axis_factors(&self, coord: f64) -> Vec<f64> {
        let n = self.grid.n();
        let h = self.grid.h();
        (0..n).map(|i| self.axis_factor(i as f64 * h - coord)).collect()
    }

    /// Closed-form velocity kernel; zero outside B(0, eps).
    #[inline]
    pub fn theta1_eval(&self, v: [f64; 2]) -> f64 {
        let r2 = (v[0] * v[0] + v[1] * v[1]) / (self.eps * self.eps);
        if r2 >= 1.0 {
            0.0
        } else {
            self.norm1 * (-1.0 / (1.0 - r2)).exp()
        }
    }

    /// True when the kernel width covers at least two grid cells.
    pub fn is_resolved(&self) -> bool {
        self.eps >= 2.0 * self.grid.h()
    }
}

/// Scaling hypothesis `eps_N = N^{-beta}` with `beta <= 1/4`.
/// `allow_large_beta` is the explicit research override.
pub fn scale_for(n_particles: usize, beta: f64, allow_large_beta: bool) -> Result<f64> {
    if n_particles == 0 {
        return Err(VnsError::Config("particle count must be >= 1".into()));
    }
    if beta <= 0.0 || (beta > 0.25 && !allow_large_beta) {
        return Err(VnsError::BetaOutOfRange { beta });
    }
    Ok((n_particles as f64).powf(-beta))
}

/// Construct and validate the scaled pair on a grid.
pub fn make_mollifier_pair(eps: f64, kind: KernelKind, grid: Grid2D) -> Result<MollifierPair> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(VnsError::MollifierHypothesis(format!(
            "scale eps must lie in (0, 0.5], got {eps}"
        )));
    }
    let KernelKind::VonmisesBump = kind;

    // von Mises concentration chosen so the small-eps Gaussian limit of the
    // kernel has standard deviation eps per axis
    let kappa = 1.0 / (4.0 * std::f64::consts::PI.powi(2) * eps * eps);
    let n = grid.n();
    let h = grid.h();
    let raw = |d: f64| (kappa * ((TWO_PI * d).cos() - 1.0)).exp();
    let z1: f64 = (0..n).map(|i| raw(i as f64 * h)).sum::<f64>() * h;
    let norm0 = 1.0 / (z1 * z1);

    let mut theta0_grid = SpectralField::zeros(grid, 1);
    for i in 0..n {
        for j in 0..n {
            theta0_grid.set(0, i, j, norm0 * raw(i as f64 * h) * raw(j as f64 * h));
        }
    }
    let mass0 = theta0_grid.mean(0);
    if (mass0 - 1.0).abs() > 1e-8 {
        return Err(VnsError::MollifierHypothesis(format!(
            "position kernel mass {mass0} differs from 1"
        )));
    }

    // |grad theta0| / theta0 = 2 pi kappa |(sin 2 pi x1, sin 2 pi x2)|,
    // measured over the grid
    let mut grad_bound_const = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let sx = (TWO_PI * i as f64 * h).sin();
            let sy = (TWO_PI * j as f64 * h).sin();
            grad_bound_const =
                grad_bound_const.max(TWO_PI * kappa * (sx * sx + sy * sy).sqrt());
        }
    }
    if !grad_bound_const.is_finite() {
        return Err(VnsError::MollifierHypothesis(
            "gradient bound constant is not finite".into(),
        ));
    }

    let norm1 = 1.0 / (eps * eps * bump_unit_mass());
    let pair = MollifierPair {
        eps,
        kind,
        kappa,
        norm0,
        norm1,
        grid,
        theta0_grid,
        grad_bound_const,
    };

    validate_velocity_kernel(&|v| pair.theta1_eval(v), eps)?;
    Ok(pair)
}

/// Checks unit mass, symmetry and support of a velocity kernel by
/// midpoint quadrature on `[-eps, eps]^2`. Exposed so the validation
/// report can also probe externally supplied kernels.
pub fn validate_velocity_kernel(eval: &dyn Fn([f64; 2]) -> f64, eps: f64) -> Result<()> {
    let m = 512usize;
    let hv = 2.0 * eps / m as f64;
    let mut mass = 0.0;
    let mut mv = [0.0f64; 2];
    for i in 0..m {
        for j in 0..m {
            let v = [
                -eps + (i as f64 + 0.5) * hv,
                -eps + (j as f64 + 0.5) * hv,
            ];
            let w = eval(v);
            if w < 0.0 {
                return Err(VnsError::MollifierHypothesis(
                    "velocity kernel takes negative values".into(),
                ));
            }
            mass += w;
            mv[0] += w * v[0];
            mv[1] += w * v[1];
        }
    }
    let cell = hv * hv;
    mass *= cell;
    mv[0] *= cell;
    mv[1] *= cell;
    if (mass - 1.0).abs() > 1e-8 {
        return Err(VnsError::MollifierHypothesis(format!(
            "velocity kernel mass {mass:.12} differs from 1 beyond 1e-8"
        )));
    }
    if mv[0].abs() > 1e-10 || mv[1].abs() > 1e-10 {
        return Err(VnsError::MollifierHypothesis(format!(
            "velocity kernel first moment ({:.3e}, {:.3e}) violates the symmetry assumption",
            mv[0], mv[1]
        )));
    }
    // support check on a ring just outside the ball
    for k in 0..64 {
        let phi = TWO_PI * k as f64 / 64.0;
        let v = [1.0001 * eps * phi.cos(), 1.0001 * eps * phi.sin()];
        if eval(v) != 0.0 {
            return Err(VnsError::MollifierHypothesis(
                "velocity kernel support exceeds B(0, eps)".into(),
            ));
        }
    }
    Ok(())
}
