//! 2-D incompressible Navier-Stokes in vorticity form with an external
//! drag forcing and a smooth sup-norm cut-off.
//!
//! The vorticity equation `d_t omega = nu Lap omega - u . grad omega -
//! perp_div(drag)` is advanced with an integrating factor for the
//! diffusion (exact) and Heun's method for the advection and forcing.
//! The pressure never appears: the velocity is recovered from the
//! vorticity by Biot-Savart at every step.

use num_complex::Complex;

use crate::error::{Result, VnsError};
use crate::spectral::{
    curl_inverse, derivative, perp_div, SpectralField, TWO_PI,
};

/// Fluid state; `u` is kept consistent with `omega`.
#[derive(Debug, Clone)]
pub struct FluidState {
    pub omega: SpectralField,
    pub u: SpectralField,
    pub time: f64,
}

impl FluidState {
    /// Builds a state from a vorticity field, projecting out the mean.
    pub fn from_vorticity(mut omega: SpectralField, time: f64) -> Result<Self> {
        project_zero_mean(&mut omega);
        omega.dealias();
        let u = curl_inverse(&omega)?;
        Ok(Self { omega, u, time })
    }

    pub fn energy(&self) -> f64 {
        0.5 * self.u.l2_norm().powi(2)
    }

    pub fn enstrophy(&self) -> f64 {
        self.omega.l2_norm().powi(2)
    }
}

fn project_zero_mean(omega: &mut SpectralField) {
    let m = omega.mean(0);
    for v in omega.component_mut(0) {
        *v -= m;
    }
}

/// Smooth velocity cut-off profile: 1 below `r - 1`, 0 above `r`,
/// a C-infinity partition-of-unity transition in between. `r = inf`
/// disables the cut-off.
#[derive(Debug, Clone, Copy)]
pub struct CutoffRule {
    pub r: f64,
}

impl CutoffRule {
    pub fn disabled() -> Self {
        Self { r: f64::INFINITY }
    }

    pub fn new(r: f64) -> Self {
        Self { r }
    }

    pub fn is_disabled(&self) -> bool {
        !self.r.is_finite()
    }

    /// The scalar profile chi0_R.
    pub fn profile(&self, x: f64) -> f64 {
        if self.is_disabled() || x <= self.r - 1.0 {
            return 1.0;
        }
        if x >= self.r {
            return 0.0;
        }
        let f = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
        let a = f(self.r - x);
        let b = f(x - (self.r - 1.0));
        a / (a + b)
    }
}

/// chi_R(u) = chi0_R(||u||_inf), with the sup-norm taken as the grid
/// maximum of the Euclidean magnitude.
pub fn cutoff_value(u: &SpectralField, rule: &CutoffRule) -> f64 {
    rule.profile(u.max_magnitude())
}

/// Advection plus forcing term of the vorticity equation, dealiased:
/// `-u . grad omega - perp_div(drag)`.
fn nonlinear_rhs(
    omega: &SpectralField,
    u: &SpectralField,
    drag_curl_hat: &[Complex<f64>],
) -> Vec<Complex<f64>> {
    let grid = omega.grid();
    let n = grid.n();
    let dwx = derivative(omega, 0, 0);
    let dwy = derivative(omega, 0, 1);
    let mut adv = SpectralField::zeros(grid, 1);
    {
        let u1 = u.component(0);
        let u2 = u.component(1);
        let gx = dwx.component(0);
        let gy = dwy.component(0);
        let out = adv.component_mut(0);
        for idx in 0..n * n {
            out[idx] = u1[idx] * gx[idx] + u2[idx] * gy[idx];
        }
    }
    let mut rhs = adv.spectrum(0);
    for i in 0..n {
        for j in 0..n {
            let idx = i * n + j;
            if grid.keep(grid.freq(i), grid.freq(j)) {
                rhs[idx] = -rhs[idx] - drag_curl_hat[idx];
            } else {
                rhs[idx] = Complex::default();
            }
        }
    }
    rhs
}

/// One time step of the forced vorticity equation. `drag` is the force
/// density acting on the fluid (it enters with a minus sign, and through
/// `perp_div` in vorticity form).
pub fn ns_step(
    state: &FluidState,
    drag: &SpectralField,
    dt: f64,
    nu: f64,
) -> Result<FluidState> {
    let grid = state.omega.grid();
    let n = grid.n();
    let cfl = state.u.max_magnitude() * dt / grid.h();
    if cfl > 0.5 {
        return Err(VnsError::CflViolation { cfl, limit: 0.5 });
    }

    let mut drag_curl_hat = perp_div(drag)?.spectrum(0);
    for i in 0..n {
        for j in 0..n {
            if !grid.keep(grid.freq(i), grid.freq(j)) {
                drag_curl_hat[i * n + j] = Complex::default();
            }
        }
    }

    let what = state.omega.spectrum(0);
    let decay: Vec<f64> = (0..n * n)
        .map(|idx| {
            let kx = grid.freq(idx / n) as f64 * TWO_PI;
            let ky = grid.freq(idx % n) as f64 * TWO_PI;
            (-nu * (kx * kx + ky * ky) * dt).exp()
        })
        .collect();

    let n1 = nonlinear_rhs(&state.omega, &state.u, &drag_curl_hat);

    // predictor: exact diffusion of the Euler update
    let mut pred_hat = vec![Complex::default(); n * n];
    for idx in 0..n * n {
        pred_hat[idx] = decay[idx] * (what[idx] + dt * n1[idx]);
    }
    pred_hat[0] = Complex::default();
    let pred = SpectralField::from_spectra(grid, vec![pred_hat.clone()]);
    let u_pred = curl_inverse(&pred)?;
    let n2 = nonlinear_rhs(&pred, &u_pred, &drag_curl_hat);

    let mut new_hat = vec![Complex::default(); n * n];
    for idx in 0..n * n {
        new_hat[idx] = decay[idx] * (what[idx] + 0.5 * dt * n1[idx]) + 0.5 * dt * n2[idx];
    }
    new_hat[0] = Complex::default();

    let omega = SpectralField::from_spectra(grid, vec![new_hat]);
    if omega.has_nan() {
        return Err(VnsError::NanDetected {
            context: "vorticity".into(),
            step: 0,
        });
    }
    let u = curl_inverse(&omega)?;
    Ok(FluidState {
        omega,
        u,
        time: state.time + dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid2D;

    #[test]
    fn zero_stays_zero() {
        let grid = Grid2D::new(16).unwrap();
        let state =
            FluidState::from_vorticity(SpectralField::zeros(grid, 1), 0.0).unwrap();
        let drag = SpectralField::zeros(grid, 2);
        let next = ns_step(&state, &drag, 1e-2, 1.0).unwrap();
        assert!(next.omega.max_magnitude() < 1e-15);
    }

    #[test]
    fn single_mode_heat_decay() {
        // omega = sin(2 pi y): advection vanishes, amplitude decays as
        // exp(-4 pi^2 nu t)
        let grid = Grid2D::new(32).unwrap();
        let nu = 1.0;
        let omega0 = SpectralField::scalar_from_fn(grid, |_, y| (TWO_PI * y).sin());
        let mut state = FluidState::from_vorticity(omega0, 0.0).unwrap();
        let drag = SpectralField::zeros(grid, 2);
        let dt = 1e-3;
        for _ in 0..100 {
            state = ns_step(&state, &drag, dt, nu).unwrap();
        }
        let expect = (-4.0 * std::f64::consts::PI.powi(2) * nu * state.time).exp();
        let n = grid.n();
        for j in 0..n {
            let [_, y] = grid.node(0, j);
            let got = state.omega.at(0, 0, j);
            assert!(
                (got - expect * (TWO_PI * y).sin()).abs() < 1e-8,
                "heat decay at y={y}: {got}"
            );
        }
    }

    #[test]
    fn taylor_green_decay() {
        // omega0 = -4 pi cos(2 pi x) cos(2 pi y) decays self-similarly with
        // rate exp(-8 pi^2 nu t)
        let grid = Grid2D::new(64).unwrap();
        let nu = 1.0;
        let omega0 = SpectralField::scalar_from_fn(grid, |x, y| {
            -2.0 * TWO_PI * (TWO_PI * x).cos() * (TWO_PI * y).cos()
        });
        let mut state = FluidState::from_vorticity(omega0.clone(), 0.0).unwrap();
        let drag = SpectralField::zeros(grid, 2);
        let dt = 1e-4;
        for _ in 0..1000 {
            state = ns_step(&state, &drag, dt, nu).unwrap();
        }
        let factor = (-8.0 * std::f64::consts::PI.powi(2) * nu * state.time).exp();
        let mut diff = state.omega.clone();
        for (d, o) in diff
            .component_mut(0)
            .iter_mut()
            .zip(omega0.component(0).iter())
        {
            *d -= factor * o;
        }
        let rel = diff.l2_norm() / (factor * omega0.l2_norm());
        assert!(rel <= 1e-6, "relative L2 error {rel}");
    }

    #[test]
    fn enstrophy_nonincreasing() {
        let grid = Grid2D::new(32).unwrap();
        let omega0 = SpectralField::scalar_from_fn(grid, |x, y| {
            (TWO_PI * x).sin() * (TWO_PI * y).cos() + 0.5 * (2.0 * TWO_PI * (x + y)).sin()
        });
        let mut state = FluidState::from_vorticity(omega0, 0.0).unwrap();
        let drag = SpectralField::zeros(grid, 2);
        let mut prev = state.enstrophy();
        for _ in 0..50 {
            state = ns_step(&state, &drag, 5e-4, 1.0).unwrap();
            let now = state.enstrophy();
            assert!(now <= prev * (1.0 + 1e-13), "enstrophy grew: {prev} -> {now}");
            prev = now;
        }
    }

    #[test]
    fn cfl_rejection() {
        let grid = Grid2D::new(32).unwrap();
        let omega0 = SpectralField::scalar_from_fn(grid, |_, y| 50.0 * (TWO_PI * y).sin());
        let state = FluidState::from_vorticity(omega0, 0.0).unwrap();
        let drag = SpectralField::zeros(grid, 2);
        assert!(matches!(
            ns_step(&state, &drag, 0.1, 1.0),
            Err(VnsError::CflViolation { .. })
        ));
    }

    #[test]
    fn energy_identity_residual_order() {
        // d/dt (E) + nu ||grad u||^2 = -<u, drag>; the discrete residual
        // over one interval must shrink at least linearly in dt.
        let grid = Grid2D::new(32).unwrap();
        let nu = 1.0;
        let omega0 = SpectralField::scalar_from_fn(grid, |x, y| {
            (TWO_PI * x).sin() * (TWO_PI * y).cos() + 0.3 * (2.0 * TWO_PI * y).sin()
        });
        let drag = SpectralField::vector_from_fn(grid, |x, y| {
            [0.1 * (TWO_PI * y).sin(), 0.05 * (TWO_PI * x).cos()]
        });
        let t_end = 0.02;
        let mut residuals = Vec::new();
        for &m in &[20usize, 40, 80] {
            let dt = t_end / m as f64;
            let mut state = FluidState::from_vorticity(omega0.clone(), 0.0).unwrap();
            let mut dissipation = 0.0;
            let mut work = 0.0;
            for _ in 0..m {
                let next = ns_step(&state, &drag, dt, nu).unwrap();
                dissipation += dt * nu * crate::spectral::grad_l2_norm_sq(&next.u);
                let h2 = grid.h() * grid.h();
                let mut w = 0.0;
                for c in 0..2 {
                    for (uu, dd) in next
                        .u
                        .component(c)
                        .iter()
                        .zip(drag.component(c).iter())
                    {
                        w += uu * dd;
                    }
                }
                work += dt * w * h2;
                state = next;
            }
            let e0 = FluidState::from_vorticity(omega0.clone(), 0.0)
                .unwrap()
                .energy();
            let res = (state.energy() - e0) + dissipation + work;
            residuals.push(res.abs());
        }
        let slope = (residuals[0] / residuals[2]).log2() / 2.0;
        assert!(slope >= 0.9, "residuals {residuals:?}, slope {slope}");
    }

    #[test]
    fn cutoff_profile() {
        let rule = CutoffRule::new(5.0);
        assert_eq!(rule.profile(3.5), 1.0);
        assert_eq!(rule.profile(6.0), 0.0);
        // monotone over the whole ramp, strictly decreasing away from the
        // endpoints (where the profile saturates in double precision)
        let mut prev = 1.0;
        for k in 1..50 {
            let x = 4.0 + k as f64 / 50.0;
            let v = rule.profile(x);
            assert!(v <= prev, "profile must be nonincreasing on (R-1, R)");
            if (4.2..4.8).contains(&x) {
                assert!(v < prev, "profile must be strictly decreasing mid-ramp");
            }
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
        // product bound ||u chi|| <= R over the sweep
        for k in 0..200 {
            let x = k as f64 * 0.05;
            assert!(x * rule.profile(x) <= 5.0 + 1e-12);
        }
        assert_eq!(CutoffRule::disabled().profile(1e9), 1.0);
    }

    #[test]
    fn cutoff_of_field() {
        let grid = Grid2D::new(16).unwrap();
        let u = SpectralField::vector_from_fn(grid, |_, _| [3.5, 0.0]);
        assert_eq!(cutoff_value(&u, &CutoffRule::new(5.0)), 1.0);
        assert_eq!(cutoff_value(&u, &CutoffRule::new(3.0)), 0.0);
    }
}
