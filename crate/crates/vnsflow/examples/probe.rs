//! Rough single-thread timing probe for the heavy kernels; used to size
//! test budgets. Not part of the test suite.

use std::time::Instant;

use vnsflow::config::{InitialDensity, VMarginal, XMarginal};
use vnsflow::kinetic::{vfp_step, KineticDensity, VfpOptions};
use vnsflow::metrics::{wasserstein1_exact, PhasePoint};
use vnsflow::rng;
use vnsflow::spectral::{Grid2D, SpectralField, TWO_PI};

fn main() {
    let f0 = InitialDensity {
        x: XMarginal::Uniform,
        v: VMarginal::Gaussian {
            std: 0.3,
            trunc: 1.0,
        },
    };
    let grid = Grid2D::new(32).unwrap();
    let u = SpectralField::vector_from_fn(grid, |x, y| {
        [
            0.2 * (TWO_PI * x).cos() * (TWO_PI * y).sin(),
            -0.2 * (TWO_PI * x).sin() * (TWO_PI * y).cos(),
        ]
    });

    let mut f = KineticDensity::from_initial(32, 64, 2.0, &f0);
    let t = Instant::now();
    for _ in 0..5 {
        f = vfp_step(&f, &u, 1.0, 0.01, 0.5, VfpOptions::default()).unwrap();
    }
    println!("vfp 32x32x64x64: {:?} / step", t.elapsed() / 5);

    let mut f0s = KineticDensity::from_initial(32, 64, 2.0, &f0);
    let t = Instant::now();
    for _ in 0..5 {
        f0s = vfp_step(&f0s, &u, 1.0, 0.01, 0.0, VfpOptions::default()).unwrap();
    }
    println!("vfp 32x32x64x64 sigma=0: {:?} / step", t.elapsed() / 5);

    let mut fnm = KineticDensity::from_initial(32, 64, 2.0, &f0);
    let t = Instant::now();
    for _ in 0..5 {
        fnm = vfp_step(&fnm, &u, 1.0, 0.01, 0.5, VfpOptions { monotone: false }).unwrap();
    }
    println!("vfp 32x32x64x64 plain cubic: {:?} / step", t.elapsed() / 5);

    let mut f48 = KineticDensity::from_initial(32, 48, 2.0, &f0);
    let t = Instant::now();
    for _ in 0..5 {
        f48 = vfp_step(&f48, &u, 1.0, 0.01, 0.5, VfpOptions::default()).unwrap();
    }
    println!("vfp 32x32x48x48: {:?} / step", t.elapsed() / 5);

    for m in [128usize, 256, 512] {
        let a: Vec<PhasePoint> = (0..m as u64)
            .map(|i| PhasePoint {
                x: [rng::uniform(1, i, 0, 0), rng::uniform(1, i, 0, 1)],
                v: [
                    rng::uniform(1, i, 0, 2) - 0.5,
                    rng::uniform(1, i, 0, 3) - 0.5,
                ],
            })
            .collect();
        let b: Vec<PhasePoint> = (0..m as u64)
            .map(|i| PhasePoint {
                x: [rng::uniform(2, i, 0, 0), rng::uniform(2, i, 0, 1)],
                v: [
                    rng::uniform(2, i, 0, 2) - 0.5,
                    rng::uniform(2, i, 0, 3) - 0.5,
                ],
            })
            .collect();
        let w = vec![1.0 / m as f64; m];
        let t = Instant::now();
        let d = wasserstein1_exact(&a, &w, &b, &w).unwrap();
        println!("w1 exact {m} vs {m}: {:?} (d = {d:.4})", t.elapsed());
    }
}
