use ksmv::analysis::{blowup_indicator, marginal_distance, nq_functional, BlowupClass, ComparisonReport, SweepRow};
use ksmv::constants::chi_max;
use ksmv::grid::{Grid, GridField};
use ksmv::kernels::{InitialData, ModelParams};
use ksmv::pde::{run, uniform_times, PdeConfig};

#[test]
fn disjoint_unit_masses_are_two_apart() {
    let grid = Grid::new(5.0, 64).unwrap();
    let bump = |c: f64| {
        move |p: [f64; 2]| {
            let r2 = (p[0] - c).powi(2) + p[1] * p[1];
            if r2 < 1.0 { 1.0 } else { 0.0 }
        }
    };
    let mut a = GridField::from_fn(grid, bump(-2.0));
    let mut b = GridField::from_fn(grid, bump(2.0));
    let (ma, mb) = (a.mass(), b.mass());
    a.scale(1.0 / ma);
    b.scale(1.0 / mb);
    let (l1, _) = marginal_distance(&a, &b).unwrap();
    assert!((l1 - 2.0).abs() < 1e-10);
    assert_eq!(marginal_distance(&a, &a).unwrap(), (0.0, 0.0));
    let other = GridField::zeros(Grid::new(5.0, 32).unwrap());
    assert!(marginal_distance(&a, &other).is_err());
}

#[test]
fn heat_functional_vanishes_at_small_times() {
    let init = InitialData::standard(0.0);
    let mut c = PdeConfig::new(Grid::new(10.0, 128).unwrap(), 1e-4, ModelParams::new(0.0, 1.0, 0.0, 0.01).unwrap(), init);
    c.save_times = vec![1e-4, 1e-3, 1e-2];
    let r = run(&c).unwrap();
    let raw: Vec<(f64, f64)> = r.states.iter().map(|s| (s.t, s.rho.lq_norm(3.0).unwrap())).collect();
    let n = nq_functional(&raw, 3.0, None).unwrap();
    // the curve scales like t^{2/3} near 0
    assert!(n.samples[0].1 < 0.1 * n.samples[2].1);
    assert!(n.samples.windows(2).all(|w| w[1].1 >= w[0].1));
    assert!(nq_functional(&[], 3.0, None).is_err());
}

#[test]
fn classifier_on_reference_runs() {
    let heat = {
        let mut c = PdeConfig::new(
            Grid::new(10.0, 64).unwrap(),
            0.01,
            ModelParams::new(0.0, 1.0, 0.0, 1.0).unwrap(),
            InitialData::standard(0.0),
        );
        c.save_times = uniform_times(1.0, 10);
        run(&c).unwrap()
    };
    let r = blowup_indicator(&heat.trace);
    assert_eq!(r.classification, BlowupClass::Stable);
    assert!(r.sup_norm_trajectory.windows(2).all(|w| w[1].1 <= w[0].1));
    assert!((r.second_moment_rate - 2.0).abs() < 1e-6);

    let init = InitialData::standard(1.0);
    let chi = 0.5 * chi_max(&init, 3.0).unwrap();
    let mut c = PdeConfig::new(Grid::new(10.0, 64).unwrap(), 0.01, ModelParams::new(chi, 1.0, 0.0, 1.0).unwrap(), init);
    c.save_times = uniform_times(1.0, 10);
    assert_eq!(blowup_indicator(&run(&c).unwrap().trace).classification, BlowupClass::Stable);
}

#[test]
fn comparison_report_roundtrips() {
    let r = ComparisonReport {
        times: vec![0.1, 0.2],
        l1_distance: vec![0.3, 0.25],
        linf_distance: vec![0.01, 0.02],
        n_particles: 16000,
        grid: Grid::new(10.0, 128).unwrap(),
        sweep: vec![SweepRow { n_particles: 16000, bandwidth: 0.2, l1: 0.25, linf: 0.02 }],
        notes: vec!["note".into()],
    };
    let s = serde_json::to_string(&r).unwrap();
    assert_eq!(serde_json::from_str::<ComparisonReport>(&s).unwrap(), r);
}
