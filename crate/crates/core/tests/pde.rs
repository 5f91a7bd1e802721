use ksmv::constants::chi_max;
use ksmv::grid::{Grid, GridField};
use ksmv::kernels::{GaussianComponent, GaussianMixture, InitialData, MixtureRole, ModelParams};
use ksmv::pde::{run, PdeConfig, PdeSolver};
use ksmv::special::c2;

fn admissible(horizon: f64, dt: f64, g: usize) -> PdeConfig {
    let init = InitialData::standard(1.0);
    let chi = 0.5 * chi_max(&init, 3.0).unwrap();
    PdeConfig::new(Grid::new(10.0, g).unwrap(), dt, ModelParams::new(chi, 1.0, 0.0, horizon).unwrap(), init)
}

fn terminal(c: &PdeConfig) -> GridField {
    let mut s = PdeSolver::new(c).unwrap();
    for _ in 0..c.steps() {
        s.step().unwrap();
    }
    s.rho().clone()
}

#[test]
fn first_order_in_time() {
    // self-differences at dt, dt/2, dt/4
    let f: Vec<GridField> = [0.02, 0.01, 0.005].iter().map(|&dt| terminal(&admissible(0.4, dt, 64))).collect();
    let d1 = f[0].difference(&f[1]).unwrap().max_abs();
    let d2 = f[1].difference(&f[2]).unwrap().max_abs();
    let ratio = d1 / d2;
    assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
}

#[test]
fn spatial_resolution_converged() {
    let mut a = admissible(0.5, 0.01, 128);
    a.save_times = vec![0.1, 0.25, 0.5];
    let mut b = a.clone();
    b.grid = Grid::new(10.0, 256).unwrap();
    let (ra, rb) = (run(&a).unwrap(), run(&b).unwrap());
    for (x, y) in ra.rho_curves[0].samples.iter().zip(&rb.rho_curves[0].samples) {
        assert!((x.1 - y.1).abs() < 1e-6, "{x:?} vs {y:?}");
    }
}

#[test]
fn admissible_run_stays_under_the_bound() {
    let mut c = admissible(1.0, 0.005, 128);
    c.save_times = ksmv::pde::uniform_times(1.0, 20)[1..].to_vec();
    let r = run(&c).unwrap();
    let curve = &r.rho_curves[0];
    assert!(curve.max_value() <= curve.bound.unwrap());
    for d in &r.drift_curves {
        assert!(d.samples.iter().all(|s| s.1.is_finite()));
    }
}

#[test]
fn heat_curve_approaches_the_heat_constant_from_below() {
    let init = InitialData::standard(0.0);
    let mut c = PdeConfig::new(Grid::new(20.0, 256).unwrap(), 0.01, ModelParams::new(0.0, 1.0, 0.0, 10.0).unwrap(), init);
    c.save_times = vec![0.01, 1.0, 5.0, 10.0];
    let r = run(&c).unwrap();
    let s = &r.rho_curves[0].samples;
    let limit = c2(3.0).unwrap();
    assert!(s.windows(2).all(|w| w[1].1 > w[0].1));
    assert!(s.iter().all(|p| p.1 < limit));
    // t^{2/3}‖g_{1+t}‖₃ = C₂(3)(t/(1+t))^{2/3}
    for &(t, v) in s {
        assert!((v - limit * (t / (1.0 + t)).powf(2.0 / 3.0)).abs() < 1e-9 * limit);
    }
    assert!(s[0].1 < 0.05 * limit);
}

#[test]
fn lattice_translation_commutes() {
    let grid = Grid::new(10.0, 64).unwrap();
    let shift = 4.0 * grid.spacing();
    let mk = |dx: f64| {
        let rho0 = GaussianMixture::new(
            vec![GaussianComponent { weight: 1.0, center: [dx - 0.5, 0.3], variance: 1.2 }],
            MixtureRole::Density,
        )
        .unwrap();
        let c0 = GaussianMixture::new(
            vec![GaussianComponent { weight: 0.8, center: [dx + 0.4, -0.2], variance: 0.9 }],
            MixtureRole::ChemoInitial,
        )
        .unwrap();
        InitialData::new(rho0, c0).unwrap()
    };
    let p = ModelParams::new(0.02, 1.0, 0.0, 0.2).unwrap();
    let a = terminal(&PdeConfig::new(grid, 0.01, p, mk(0.0)));
    let b = terminal(&PdeConfig::new(grid, 0.01, p, mk(shift)));
    let g = grid.points();
    let mut worst: f64 = 0.0;
    for iy in 0..g {
        for ix in 0..g {
            worst = worst.max((b.at((ix + 4) % g, iy) - a.at(ix, iy)).abs());
        }
    }
    assert!(worst < 1e-12, "{worst}");
}
