mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use tubempc::geometry::{solve_lp, HPolytope, IntervalBox, LpStatus, SupportFunction};

fn polygon(seed: u64, radius: f64) -> Vec<P2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_polygon(&mut rng, 7, radius, [0.0, 0.0])
}

fn dir(angle: f64) -> DVector<f64> {
    DVector::from_vec(vec![angle.cos(), angle.sin()])
}

fn vertex_support(v: &[P2], d: &DVector<f64>) -> f64 {
    v.iter()
        .map(|p| p[0] * d[0] + p[1] * d[1])
        .fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lp_support_matches_vertices(seed in 0u64..10_000, angle in 0.0..std::f64::consts::TAU) {
        let h = polygon(seed, 1.5);
        let p = hull_polytope(&h);
        let d = dir(angle);
        prop_assert!((p.support(&d).unwrap() - vertex_support(&h, &d)).abs() < 1e-9);
    }

    #[test]
    fn minkowski_support_is_additive(s1 in 0u64..10_000, s2 in 0u64..10_000, angle in 0.0..std::f64::consts::TAU) {
        let (a, b) = (polygon(s1, 1.0), polygon(s2, 0.4));
        let sum = hull_polytope(&a).minkowski_sum(&hull_polytope(&b)).unwrap();
        let d = dir(angle);
        let expect = vertex_support(&a, &d) + vertex_support(&b, &d);
        prop_assert!((sum.support(&d).unwrap() - expect).abs() < 1e-8);
    }

    #[test]
    fn pontryagin_then_minkowski_is_inside(seed in 0u64..10_000, hw in 0.01..0.3f64) {
        let p = hull_polytope(&polygon(seed, 1.5));
        let q = IntervalBox::symmetric(&[hw, hw / 2.0]);
        let r = p.pontryagin_diff(&q).unwrap();
        prop_assume!(!r.is_empty().unwrap());
        let back = r.minkowski_sum(&q.to_polytope()).unwrap();
        prop_assert!(back.is_subset_of(&p, 1e-8).unwrap());
        // box support is exact for every row of the difference
        for i in 0..r.num_rows() {
            let g = r.normals().row(i).transpose();
            prop_assert!((r.support(&g).unwrap() + q.support(&g).unwrap() - p.support(&g).unwrap()) < 1e-8);
        }
    }

    #[test]
    fn redundant_rows_are_removed(seed in 0u64..10_000, extra in 1usize..6) {
        let h = polygon(seed, 1.0);
        let p = hull_polytope(&h);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 77);
        let mut g = p.normals().clone();
        let mut o = p.offsets().clone();
        for _ in 0..extra {
            let a: f64 = rand::Rng::gen_range(&mut rng, 0.0..std::f64::consts::TAU);
            let d = dir(a);
            let off = p.support(&d).unwrap() + rand::Rng::gen_range(&mut rng, 0.01..1.0);
            let last = g.nrows();
            g = g.insert_row(last, 0.0);
            g[(last, 0)] = d[0];
            g[(last, 1)] = d[1];
            o = o.push(off);
        }
        let reduced = HPolytope::new(g, o).unwrap().remove_redundancy().unwrap();
        prop_assert_eq!(reduced.num_rows(), h.len());
        prop_assert!(reduced.set_equal(&p, 1e-9).unwrap());
    }

    #[test]
    fn lp_optimum_is_best_vertex(seed in 0u64..10_000, angle in 0.0..std::f64::consts::TAU) {
        let h = polygon(seed, 2.0);
        let p = hull_polytope(&h);
        let c = dir(angle);
        let r = solve_lp(&c, &p, None).unwrap();
        prop_assert!(r.status == LpStatus::Optimal);
        let best = h.iter().map(|v| c[0] * v[0] + c[1] * v[1]).fold(f64::INFINITY, f64::min);
        prop_assert!((r.objective.unwrap() - best).abs() < 1e-9);
    }
}

/// Cube `[-1, 1]^3` cut by four random planes.
fn cut_cube(seed: u64) -> HPolytope {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = HPolytope::from_box(&[-1.0; 3], &[1.0; 3]);
    for _ in 0..4 {
        let n: Vec<f64> = (0..3).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        let g = DMatrix::from_row_slice(1, 3, &n);
        let off = rand::Rng::gen_range(&mut rng, 0.3..1.0);
        p = p
            .stack(&HPolytope::new(g, DVector::from_vec(vec![off])).unwrap())
            .unwrap();
    }
    p
}

fn vertices_3d(p: &HPolytope) -> Vec<DVector<f64>> {
    let (g, o) = (p.normals(), p.offsets());
    let m = g.nrows();
    let mut out = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                let a = DMatrix::from_rows(&[g.row(i).into_owned(), g.row(j).into_owned(), g.row(k).into_owned()]);
                let b = DVector::from_vec(vec![o[i], o[j], o[k]]);
                if a.determinant().abs() < 1e-10 {
                    continue;
                }
                let x = a.lu().solve(&b).unwrap();
                if p.max_violation(&x) <= 1e-9 {
                    out.push(x);
                }
            }
        }
    }
    out
}

#[test]
fn projection_matches_vertex_shadow() {
    for seed in 0..20 {
        let p = cut_cube(seed);
        let shadow = hull(&vertices_3d(&p).iter().map(|v| [v[0], v[1]]).collect::<Vec<_>>());
        let proj = p.project(&[0, 1]).unwrap();
        for v in &shadow {
            assert!(proj.max_violation(&v2(*v)) < 1e-8, "seed {seed}: shadow vertex outside");
        }
        for v in vertices(&proj, 1e-9) {
            assert!(
                hull_margin(&shadow, v) < 1e-8,
                "seed {seed}: projection vertex outside shadow"
            );
        }
    }
}

#[test]
fn pontryagin_can_empty_a_set() {
    let p = HPolytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]);
    let r = p.pontryagin_diff(&IntervalBox::symmetric(&[1.5, 0.1])).unwrap();
    assert!(r.is_empty().unwrap());
}

#[test]
fn json_round_trip_keeps_universe_dimension() {
    let u = HPolytope::universe(3);
    let s = serde_json::to_string(&u).unwrap();
    let back: HPolytope = serde_json::from_str(&s).unwrap();
    assert_eq!(back.dim(), 3);
    assert_eq!(back.num_rows(), 0);
}
