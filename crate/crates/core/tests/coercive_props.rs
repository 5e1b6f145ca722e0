use convexdecomp::coercive::{
    build_witness, directional_verdict, separable_strict_minimizer, separation_rank, strict_minimum_witness,
    strict_minimizer_for_slope, trace_subgradients_valid, verify_witness, RayScan, BOUNDARY_TOL,
};
use convexdecomp::corpus::{make_example33, make_example_gamma, make_graded_corpus};
use convexdecomp::decomp::decompose;
use convexdecomp::{ConvexFunction, DecompConfig, Matrix, Vector, VerdictStatus, Witness};
use convexdecomp_testkit::{grid_argmin, ray_table, shifted};

fn v(x: &[f64]) -> Vector {
    Vector::new(x.to_vec()).unwrap()
}

#[test]
fn refuting_rays_hold_up_on_recomputation() {
    let scan = RayScan { rays: 200, seed: 4, max_t: 1e4 };
    let mut refuted = 0;
    for e in make_graded_corpus(0) {
        let verdict = directional_verdict(&e.f, &scan).unwrap();
        if verdict.status != VerdictStatus::Refuted {
            continue;
        }
        refuted += 1;
        let ray = verdict.refuting_ray.unwrap();
        let table = ray_table(&e.f, &ray.origin, &ray.direction, &[0.0, scan.max_t]).unwrap();
        assert!(table[1].1 - table[0].1 <= 1.0, "{}", e.name);
    }
    assert!(refuted >= 10);
}

#[test]
fn flat_directions_are_refuted() {
    let scan = RayScan { rays: 50, seed: 1, max_t: 1e4 };
    for e in make_graded_corpus(0).into_iter().filter(|e| e.has_tag("flat-directions")) {
        let verdict = directional_verdict(&e.f, &scan).unwrap();
        assert_eq!(verdict.status, VerdictStatus::Refuted, "{}", e.name);
    }
}

#[test]
fn coercive_tag_entries_are_certified() {
    let scan = RayScan { rays: 10, seed: 1, max_t: 1e4 };
    for e in make_graded_corpus(0).into_iter().filter(|e| e.has_tag("coercive")) {
        assert_eq!(directional_verdict(&e.f, &scan).unwrap().status, VerdictStatus::Certified, "{}", e.name);
    }
}

fn check_witness_invariants(name: &str, f: &ConvexFunction, w: &Witness) {
    let mut sum = Vector::zeros(f.dim());
    for (i, entry) in w.trace.iter().enumerate() {
        let psi = w.psi(f, &entry.point).unwrap();
        assert!((psi - 1.0).abs() <= 1e-8, "{name}: psi(x_{}) = {psi}", i + 1);
        assert!((entry.psi - 1.0).abs() <= BOUNDARY_TOL, "{name}");
        let norm = entry.xi.norm();
        let target = 0.5f64.powi(i as i32 + 2);
        let scaled = entry.weight * norm.max(1.0);
        if norm <= 1.0 {
            assert_eq!(scaled, target, "{name}: weight {}", i + 1);
        } else {
            assert!((scaled - target).abs() <= 1e-15 * target, "{name}: weight {}", i + 1);
        }
        sum = sum.add_scaled(entry.weight, &entry.xi);
    }
    assert!((&sum - &w.xi).norm() <= 1e-12, "{name}: xi is not the weighted sum");
    assert!(w.xi.norm() <= 0.5 + 1e-12, "{name}");
    assert!(trace_subgradients_valid(f, w, 3).unwrap(), "{name}");
}

#[test]
fn witnesses_satisfy_their_invariants() {
    for e in make_graded_corpus(0) {
        let d = decompose(&e.f, &DecompConfig::with_seed(0)).unwrap();
        if !d.y_space.is_zero() || e.dim() > 8 {
            continue;
        }
        let w = build_witness(&e.f, 2 * e.dim(), 7).unwrap();
        check_witness_invariants(&e.name, &e.f, &w);
        let check = verify_witness(&e.f, &w, &RayScan { rays: 100, seed: 7, max_t: 1e4 }).unwrap();
        assert!(check.envelope_violation <= 1e-8, "{}: {}", e.name, check.envelope_violation);
        assert_ne!(check.verdict.status, VerdictStatus::Refuted, "{}", e.name);
    }
}

#[test]
fn coercive_quadratic_stays_coercive_after_shift() {
    let f = ConvexFunction::quadratic(Matrix::identity(3), Vector::zeros(3), 0.0).unwrap();
    let w = build_witness(&f, 5, 0).unwrap();
    check_witness_invariants("identity", &f, &w);
    let check = verify_witness(&f, &w, &RayScan { rays: 200, seed: 0, max_t: 1e4 }).unwrap();
    assert_ne!(check.verdict.status, VerdictStatus::Refuted);
}

#[test]
fn gamma_witness_must_cover_every_coordinate() {
    let f = make_example_gamma(4).f;
    let w = build_witness(&f, 8, 0).unwrap();
    assert!(w.xi.as_slice().iter().all(|c| *c > 0.0));
    assert_eq!(separation_rank(&w), 4);

    let mut dropped = w.xi.clone().into_vec();
    dropped[0] = 0.0;
    let g = shifted(&f, &v(&dropped)).unwrap();
    for (_, value) in ray_table(&g, &Vector::zeros(4), &v(&[-1.0, 0.0, 0.0, 0.0]), &[1.0, 10.0, 100.0, 1e4]).unwrap() {
        assert_eq!(value, 0.0);
    }
    let verdict = directional_verdict(&g, &RayScan { rays: 20, seed: 0, max_t: 1e4 }).unwrap();
    assert_eq!(verdict.status, VerdictStatus::Refuted);
    assert_eq!(verdict.refuting_ray.unwrap().direction, v(&[-1.0, 0.0, 0.0, 0.0]));
}

#[test]
fn strict_minimizers_agree_with_exhaustive_grid() {
    let theta = make_example_gamma(1).f;
    let cases = [
        (ConvexFunction::quadratic(Matrix::diagonal(&[2.0, 1.0]), v(&[0.5, -1.0]), 0.0).unwrap(), 2.0, 161),
        (theta.clone(), 4.0, 801),
        (make_example33(2).f, 4.0, 161),
        (make_example_gamma(3).f, 2.0, 81),
    ];
    let mut found = Vec::new();
    for (f, radius, grid) in cases {
        let m = strict_minimum_witness(&f, grid, radius).unwrap();
        found.push(m.is_some());
        let Some(m) = m else { continue };
        let (gx, _) = grid_argmin(&shifted(&f, &m.xi0).unwrap(), radius, grid).unwrap();
        let step = 2.0 * radius / (grid - 1) as f64;
        assert!((&gx - &m.minimizer).norm() <= 2.0 * step * (f.dim() as f64).sqrt(), "{f:?}");
    }
    assert!(found[0] && found[1] && found[2], "{found:?}");
}

#[test]
fn example33_minimizer_norm_grows_with_truncation() {
    let mut last = 0.0;
    for n in [1, 2, 4, 8, 16] {
        let f = make_example33(n).f;
        let xi = v(&(1..=n).map(|k| 0.5f64.powi(k as i32)).collect::<Vec<_>>());
        let m = separable_strict_minimizer(&f, &xi).unwrap().unwrap();
        let closed: f64 = (1..=n).map(|k| (k as f64 + 0.5).powi(2)).sum::<f64>().sqrt();
        assert!((m.norm() - closed).abs() <= 1e-9 * closed);
        assert!(m.norm() > last);
        last = m.norm();
    }
    let f = make_example33(2).f;
    let grid = strict_minimizer_for_slope(&f, &v(&[0.5, 0.25]), 161, 4.0).unwrap().unwrap();
    assert!((grid[0] - 1.5).abs() <= 0.01 && (grid[1] - 2.5).abs() <= 0.01);
}

#[test]
fn abs_composite_certification_matches_scan() {
    let e = make_graded_corpus(0).into_iter().find(|e| e.name.starts_with("abs-composite-n4-k4")).unwrap();
    let verdict = directional_verdict(&e.f, &RayScan::default()).unwrap();
    assert_eq!(verdict.status, VerdictStatus::Certified);
}
