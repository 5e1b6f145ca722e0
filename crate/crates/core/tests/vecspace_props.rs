use convexdecomp::vecspace::subspace_distance;
use convexdecomp::{Subspace, Vector};
use proptest::prelude::*;

fn vector(dim: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(
        prop_oneof![4 => -10.0f64..10.0, 1 => -1e-6f64..1e-6, 1 => Just(0.0)],
        dim,
    )
    .prop_map(|v| Vector::new(v).unwrap())
}

fn family() -> impl Strategy<Value = (usize, Vec<Vector>, Vector)> {
    (1usize..7).prop_flat_map(|n| (Just(n), prop::collection::vec(vector(n), 0..7), vector(n)))
}

fn span(n: usize, vs: &[Vector]) -> Subspace {
    Subspace::span(n, vs, 1e-9).unwrap()
}

proptest! {
    #[test]
    fn basis_is_orthonormal((n, vs, _) in family()) {
        let s = span(n, &vs);
        prop_assert!(s.dim() <= n);
        for (i, a) in s.basis().iter().enumerate() {
            for (j, b) in s.basis().iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((a.dot(b) - target).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn span_is_monotone((n, vs, extra) in family()) {
        let mut more = vs.clone();
        more.push(extra);
        prop_assert!(span(n, &more).dim() >= span(n, &vs).dim());
    }

    #[test]
    fn duplicates_do_not_change_span((n, vs, _) in family()) {
        let mut doubled = vs.clone();
        doubled.extend(vs.iter().cloned());
        let a = span(n, &vs);
        let b = span(n, &doubled);
        prop_assert_eq!(a.dim(), b.dim());
        prop_assert!(subspace_distance(&a, &b).unwrap() <= 1e-10);
    }

    #[test]
    fn respanning_a_basis_is_idempotent((n, vs, _) in family()) {
        let a = span(n, &vs);
        let b = span(n, a.basis());
        prop_assert!(subspace_distance(&a, &b).unwrap() <= 1e-10);
    }

    #[test]
    fn projections_split_identity((n, vs, z) in family()) {
        let s = span(n, &vs);
        let p = s.project(&z).unwrap();
        let q = s.complement_project(&z).unwrap();
        let zn = z.norm();
        prop_assert!((&(&p + &q) - &z).norm() <= 1e-12 * zn.max(f64::MIN_POSITIVE));
        prop_assert!(p.dot(&q).abs() <= 1e-10 * zn * zn);
        for b in s.basis() {
            prop_assert!(q.dot(b).abs() <= 1e-10 * zn);
        }
        let pp = s.project(&p).unwrap();
        prop_assert!((&pp - &p).norm() <= 1e-12 * (1.0 + zn));
    }

    #[test]
    fn projection_is_linear((n, vs, z) in family(), w in vector(6), a in -3.0f64..3.0) {
        let s = span(n, &vs);
        let w = Vector::new(w.as_slice()[..n].to_vec()).unwrap();
        let lhs = s.project(&z.add_scaled(a, &w)).unwrap();
        let rhs = s.project(&z).unwrap().add_scaled(a, &s.project(&w).unwrap());
        prop_assert!((&lhs - &rhs).norm() <= 1e-12 * (1.0 + z.norm() + a.abs() * w.norm()));
    }

    #[test]
    fn complement_is_orthogonal_and_fills((n, vs, _) in family()) {
        let s = span(n, &vs);
        let c = s.orthogonal_complement();
        prop_assert_eq!(s.dim() + c.dim(), n);
        for a in s.basis() {
            for b in c.basis() {
                prop_assert!(a.dot(b).abs() <= 1e-12);
            }
        }
        prop_assert!(subspace_distance(&c.orthogonal_complement(), &s).unwrap() <= 1e-10);
    }

    #[test]
    fn distance_is_a_symmetric_fraction((n, vs, _) in family(), (_, ws, _) in family()) {
        let a = span(n, &vs);
        let ws: Vec<Vector> = ws.into_iter().filter(|w| w.dim() == n).collect();
        let b = span(n, &ws);
        let ab = subspace_distance(&a, &b).unwrap();
        let ba = subspace_distance(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert_eq!(subspace_distance(&a, &a).unwrap() <= 1e-12, true);
        if a.dim() != b.dim() {
            prop_assert_eq!(ab, 1.0);
        }
    }
}

#[test]
fn distance_matches_direct_minimization() {
    // dist(e1, line through b) = min_s |e1 - s b|, scanned over a fine grid of s
    for angle in [1e-2, 0.1, 0.7, 1.5] {
        let b = Vector::new(vec![f64::cos(angle), f64::sin(angle)]).unwrap();
        let a_space = Subspace::span(2, &[Vector::unit(2, 0)], 1e-9).unwrap();
        let b_space = Subspace::span(2, std::slice::from_ref(&b), 1e-9).unwrap();
        let brute = (0..=400_000)
            .map(|k| {
                let s = -1.5 + 3.0 * k as f64 / 400_000.0;
                (&Vector::unit(2, 0) - &b.scaled(s)).norm()
            })
            .fold(f64::INFINITY, f64::min);
        let d = subspace_distance(&a_space, &b_space).unwrap();
        assert!((d - brute).abs() <= 1e-8, "angle {angle}: {d} vs {brute}");
    }
}
