//! Run configuration, experiment plans and initial-data definitions.
//!
//! Configs are serialized verbatim into every output directory so a run
//! can be reproduced from its artifacts alone.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VnsError};

/// Which of the four coupled systems to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// Particle SDEs coupled to the fluid, no velocity cut-off.
    Particle,
    /// Particle SDEs with the sup-norm cut-off chi_R.
    ParticleCutoff,
    /// Kinetic PDE coupled to the fluid, no cut-off.
    Kinetic,
    /// Kinetic PDE with the cut-off.
    KineticCutoff,
}

impl SystemKind {
    pub fn is_particle(&self) -> bool {
        matches!(self, SystemKind::Particle | SystemKind::ParticleCutoff)
    }

    pub fn has_cutoff(&self) -> bool {
        matches!(self, SystemKind::ParticleCutoff | SystemKind::KineticCutoff)
    }
}

/// Cut-off threshold: a number, or "auto" to set R = K_u + 1 from an
/// estimation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, rename_all = "snake_case")]
pub enum RSetting {
    Auto(AutoTag),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

impl Default for RSetting {
    fn default() -> Self {
        RSetting::Auto(AutoTag::Auto)
    }
}

/// Per-axis spatial marginal of the initial phase-space density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XMarginal {
    Uniform,
    /// Density `1 + amp cos(2 pi x)` per axis, |amp| < 1.
    Trig { amp: f64 },
}

/// Per-axis velocity marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VMarginal {
    /// Gaussian with standard deviation `std`, truncated at `|v| <= trunc`.
    Gaussian { std: f64, trunc: f64 },
    /// Heavy polynomial tail `c (1 + |v|/scale)^{-power}` per axis;
    /// exists for hypothesis probing (M6 diverges when power <= 7).
    HeavyTail { scale: f64, power: f64 },
}

/// Product-form initial density `F0(x, v) = px(x1) px(x2) pv(v1) pv(v2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialDensity {
    pub x: XMarginal,
    pub v: VMarginal,
}

impl InitialDensity {
    /// Per-axis spatial density at a point in [0, 1).
    pub fn x_density(&self, x: f64) -> f64 {
        match self.x {
            XMarginal::Uniform => 1.0,
            XMarginal::Trig { amp } => 1.0 + amp * (2.0 * std::f64::consts::PI * x).cos(),
        }
    }

    /// Per-axis velocity density.
    pub fn v_density(&self, v: f64) -> f64 {
        match self.v {
            VMarginal::Gaussian { std, trunc } => {
                if v.abs() > trunc {
                    return 0.0;
                }
                let c = erf(trunc / (std * std::f64::consts::SQRT_2));
                let g = (-0.5 * (v / std).powi(2)).exp()
                    / (std * (2.0 * std::f64::consts::PI).sqrt());
                g / c
            }
            VMarginal::HeavyTail { scale, power } => {
                // normalization of c (1 + |v|/s)^{-p} over R: 2 s / (p - 1)
                let c = (power - 1.0) / (2.0 * scale);
                c * (1.0 + v.abs() / scale).powf(-power)
            }
        }
    }

    pub fn density(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        self.x_density(x[0]) * self.x_density(x[1]) * self.v_density(v[0]) * self.v_density(v[1])
    }

    /// Largest velocity the density can place mass at (infinite for
    /// heavy tails).
    pub fn v_support(&self) -> f64 {
        match self.v {
            VMarginal::Gaussian { trunc, .. } => trunc,
            VMarginal::HeavyTail { .. } => f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.x {
            XMarginal::Trig { amp } if amp.abs() >= 1.0 => {
                return Err(VnsError::Config(format!(
                    "f0.x.amp: |{amp}| must be < 1 for a positive density"
                )))
            }
            _ => {}
        }
        match self.v {
            VMarginal::Gaussian { std, trunc } => {
                if std <= 0.0 || trunc <= 0.0 {
                    return Err(VnsError::Config(
                        "f0.v: std and trunc must be positive".into(),
                    ));
                }
            }
            VMarginal::HeavyTail { scale, power } => {
                if scale <= 0.0 || power <= 1.0 {
                    return Err(VnsError::Config(
                        "f0.v: heavy tail needs scale > 0 and power > 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Error function via Abramowitz-Stegun 7.1.26 with a Horner refinement;
/// accurate to ~1e-7, used only for truncation normalization.
fn erf(x: f64) -> f64 {
    // statrs provides the precise CDF where sampling accuracy matters;
    // this is only a normalization constant, but use statrs for it too.
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).unwrap();
    2.0 * n.cdf(x * std::f64::consts::SQRT_2) - 1.0
}

/// Initial fluid velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialVelocity {
    Zero,
    /// Taylor-Green cell `amplitude * (cos 2pix sin 2piy, -sin 2pix cos 2piy)`.
    TaylorGreen { amplitude: f64 },
}

fn default_nu() -> f64 {
    1.0
}
fn default_save_every() -> usize {
    10
}
fn default_noise_substeps() -> usize {
    1
}
fn default_mollifier_kind() -> crate::mollifier::KernelKind {
    crate::mollifier::KernelKind::VonmisesBump
}
fn default_alpha() -> f64 {
    0.25
}

/// Full description of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: SystemKind,
    /// Fluid grid points per axis (power of two >= 8).
    pub grid_n: usize,
    /// Kinetic velocity points per axis.
    pub nv: usize,
    /// Velocity-domain half width.
    pub vmax: f64,
    /// Particle count (particle systems only).
    #[serde(default)]
    pub n_particles: usize,
    /// Mollifier scaling exponent, eps_N = N^{-beta}.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub allow_large_beta: bool,
    #[serde(default)]
    pub r: RSetting,
    pub sigma: f64,
    /// sigma = 0 needs this research flag.
    #[serde(default)]
    pub allow_zero_sigma: bool,
    #[serde(default = "default_nu")]
    pub nu: f64,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    #[serde(default = "default_save_every")]
    pub save_every: usize,
    /// Brownian path resolution: each macro step draws this many fine
    /// increments; refine dyadically to keep the noise path fixed across
    /// dt studies.
    #[serde(default = "default_noise_substeps")]
    pub noise_substeps: usize,
    #[serde(default = "default_mollifier_kind")]
    pub mollifier_kind: crate::mollifier::KernelKind,
    /// Exponent alpha in the monitored H^{1+2 alpha} norm.
    #[serde(default = "default_alpha")]
    pub h_norm_alpha: f64,
    pub u0: InitialVelocity,
    pub f0: InitialDensity,
}

fn default_beta() -> f64 {
    0.25
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 8 || !self.grid_n.is_power_of_two() {
            return Err(VnsError::Config(format!(
                "grid_n: must be a power of two >= 8, got {}",
                self.grid_n
            )));
        }
        if self.nv < 8 {
            return Err(VnsError::Config(format!("nv: must be >= 8, got {}", self.nv)));
        }
        if self.vmax <= 0.0 {
            return Err(VnsError::Config("vmax: must be positive".into()));
        }
        if self.system.is_particle() && self.n_particles == 0 {
            return Err(VnsError::Config(
                "n_particles: particle systems need at least one particle".into(),
            ));
        }
        if self.beta <= 0.0 || (self.beta > 0.25 && !self.allow_large_beta) {
            return Err(VnsError::Config(format!(
                "beta: {} violates the scaling hypothesis β ≤ 1/4 (set allow_large_beta to override)",
                self.beta
            )));
        }
        if self.sigma < 0.0 {
            return Err(VnsError::Config("sigma: must be nonnegative".into()));
        }
        if self.sigma == 0.0 && !self.allow_zero_sigma {
            return Err(VnsError::Config(
                "sigma: the theory requires sigma > 0; set allow_zero_sigma to override".into(),
            ));
        }
        if self.nu <= 0.0 {
            return Err(VnsError::Config("nu: must be positive".into()));
        }
        if self.dt <= 0.0 || self.t_end <= 0.0 {
            return Err(VnsError::Config("dt and t_end must be positive".into()));
        }
        if self.save_every == 0 {
            return Err(VnsError::Config("save_every: must be >= 1".into()));
        }
        if self.noise_substeps == 0 {
            return Err(VnsError::Config("noise_substeps: must be >= 1".into()));
        }
        if let RSetting::Value(r) = self.r {
            if r <= 1.0 {
                return Err(VnsError::Config(format!(
                    "r: cut-off threshold must exceed 1, got {r}"
                )));
            }
        }
        self.f0.validate()?;
        if self.f0.v_support() > self.vmax {
            return Err(VnsError::Config(format!(
                "f0: velocity support {} exceeds vmax {}",
                self.f0.v_support(),
                self.vmax
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

/// Sweep axis of an experiment plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    ParticleCounts(Vec<usize>),
    Betas(Vec<f64>),
}

fn default_samples() -> usize {
    256
}
fn default_resamples() -> usize {
    8
}

/// N- or beta-sweep against a kinetic reference run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub base: RunConfig,
    pub sweep: SweepAxis,
    pub seeds: Vec<u64>,
    /// Subsample size for the Wasserstein estimator.
    #[serde(default = "default_samples")]
    pub w1_samples: usize,
    #[serde(default = "default_resamples")]
    pub w1_resamples: usize,
    /// Reuse particle stream (seed, i) across different N so sweeps are
    /// positively correlated.
    #[serde(default)]
    pub common_random_numbers: bool,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.seeds.len() < 2 {
            return Err(VnsError::Config(
                "seeds: at least 2 seeds are required (stderr undefined otherwise)".into(),
            ));
        }
        match &self.sweep {
            SweepAxis::ParticleCounts(ns) => {
                if ns.len() < 3 {
                    return Err(VnsError::Config(
                        "sweep: at least 3 particle counts are required".into(),
                    ));
                }
            }
            SweepAxis::Betas(bs) => {
                if bs.is_empty() {
                    return Err(VnsError::Config("sweep: empty beta list".into()));
                }
            }
        }
        if self.w1_samples == 0 || self.w1_samples > 4096 {
            return Err(VnsError::Config(
                "w1_samples: must lie in 1..=4096".into(),
            ));
        }
        if self.w1_resamples < 8 {
            return Err(VnsError::Config("w1_resamples: must be >= 8".into()));
        }
        Ok(())
    }
}
