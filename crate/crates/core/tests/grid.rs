mod common;

use ksmv::grid::{
    chemo_source_multiplier, deposit, grad_heat_multiplier, heat_multiplier, integrated_grad_multiplier, kde, lq_norm,
    Grid, GridField, VectorField,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn random_field(grid: Grid, seed: u64) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..grid.len()).map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5).collect();
    GridField::new(grid, v).unwrap()
}

#[test]
fn chemo_source_matches_quadrature() {
    let grid = Grid::new(5.0, 32).unwrap();
    let (dt, lambda) = (0.07, 1.3);
    let m = chemo_source_multiplier(&grid, dt, lambda).unwrap();
    let g = grid.points();
    for &(ix, iy) in &[(0usize, 0usize), (1, 0), (3, 7), (16, 16), (31, 2)] {
        let (kx, ky) = (grid.wavenumber(ix), grid.wavenumber(iy));
        let want = common::integrate(&|u: f64| (-(lambda + (kx * kx + ky * ky) / 2.0) * u).exp(), 0.0, dt, 1e-15);
        let got = m.coeffs()[iy * g + ix];
        assert!((got.re - want).abs() < 1e-12 * want.max(1e-300) + 1e-18 && got.im == 0.0);
    }
}

#[test]
fn discretized_heat_kernel_l2_norm() {
    let grid = Grid::new(8.0, 256).unwrap();
    let f = GridField::from_fn(grid, |p| (-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp() / (2.0 * std::f64::consts::PI));
    let want = 1.0 / (2.0 * std::f64::consts::PI.sqrt());
    assert!((lq_norm(f.values(), &grid, 2.0).unwrap() - want).abs() < 1e-6);
}

#[test]
fn kde_consistency_across_sample_sizes() {
    let grid = Grid::new(8.0, 128).unwrap();
    let exact = GridField::from_fn(grid, |p| (-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp() / (2.0 * std::f64::consts::PI));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut normal = || {
        let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut last = f64::INFINITY;
    for &n in &[1000usize, 4000, 16000] {
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [normal(), normal()]).collect();
        let h = ksmv::grid::default_bandwidth(n);
        let d = kde(&pts, &grid, h).unwrap().difference(&exact).unwrap();
        let l1 = d.values().iter().map(|v| v.abs()).sum::<f64>() * grid.cell_area();
        assert!(l1 < 1.2 * last, "N = {n}: {l1} vs {last}");
        last = l1;
    }
}

#[test]
fn multiplier_consistency() {
    let grid = Grid::new(6.0, 32).unwrap();
    let t = 0.3;
    let heat = heat_multiplier(&grid, t);
    for axis in 0..2 {
        let grad = grad_heat_multiplier(&grid, t, axis).unwrap();
        let g = grid.points();
        for iy in 0..g {
            for ix in 0..g {
                let k = grid.derivative_wavenumber(if axis == 0 { ix } else { iy });
                let want = Complex64::new(0.0, k) * heat.coeffs()[iy * g + ix];
                assert_eq!(grad.coeffs()[iy * g + ix], want);
            }
        }
        assert_eq!(integrated_grad_multiplier(&grid, 0.1, axis).unwrap().k0(), Complex64::new(0.0, 0.0));
    }
}

#[test]
fn interpolation_of_constant_field() {
    let grid = Grid::new(3.0, 16).unwrap();
    let v = VectorField::new(grid, vec![1.5; grid.len()], vec![-2.0; grid.len()]).unwrap();
    for i in 0..50 {
        let p = [-7.0 + 0.3 * i as f64, 4.0 - 0.17 * i as f64];
        let b = v.interpolate(p);
        assert!((b[0] - 1.5).abs() < 1e-14 && (b[1] + 2.0).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transform_roundtrip_and_parseval(seed in any::<u64>(), log_g in 4u32..7) {
        let grid = Grid::new(4.0, 1 << log_g).unwrap();
        let f = random_field(grid, seed);
        let s = f.transform();
        let back = s.inverse();
        prop_assert!(back.difference(&f).unwrap().max_abs() < 1e-12);
        let l2 = f.lq_norm(2.0).unwrap();
        prop_assert!((s.l2_norm() - l2).abs() < 1e-12 * l2.max(1.0));
    }

    #[test]
    fn heat_semigroup(seed in any::<u64>(), t in 0.0f64..1.0, s in 0.0f64..1.0) {
        let grid = Grid::new(4.0, 32).unwrap();
        let f = random_field(grid, seed).transform();
        let a = f.applied(&heat_multiplier(&grid, t)).unwrap().applied(&heat_multiplier(&grid, s)).unwrap();
        let b = f.applied(&heat_multiplier(&grid, t + s)).unwrap();
        prop_assert!(a.inverse().difference(&b.inverse()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn mass_is_preserved_by_multipliers(seed in any::<u64>(), t in 0.0f64..2.0) {
        let grid = Grid::new(4.0, 32).unwrap();
        let f = random_field(grid, seed).transform();
        let m0 = f.k0();
        let mut g = f.applied(&heat_multiplier(&grid, t)).unwrap();
        let flux = f.applied(&integrated_grad_multiplier(&grid, 0.1, 0).unwrap()).unwrap();
        for (c, d) in g.coeffs_mut().iter_mut().zip(flux.coeffs()) {
            *c -= d;
        }
        prop_assert!((g.k0() - m0).norm() < 1e-13);
    }

    #[test]
    fn deposit_and_kde_have_unit_mass(pts in proptest::collection::vec((-9.0f64..9.0, -9.0f64..9.0), 1..200), h in 0.05f64..1.0) {
        let grid = Grid::new(5.0, 32).unwrap();
        let p: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        let d = deposit(&p, &grid).unwrap();
        prop_assert!((d.mass() - 1.0).abs() < 1e-12);
        prop_assert!(d.min() >= 0.0);
        prop_assert!((kde(&p, &grid, h).unwrap().mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lq_norm_is_homogeneous(seed in any::<u64>(), alpha in 0.01f64..100.0, q in 1.0f64..8.0) {
        let grid = Grid::new(4.0, 16).unwrap();
        let f = random_field(grid, seed);
        let mut g = f.clone();
        g.scale(alpha);
        let (a, b) = (g.lq_norm(q).unwrap(), alpha * f.lq_norm(q).unwrap());
        prop_assert!((a - b).abs() < 1e-12 * b);
    }
}
