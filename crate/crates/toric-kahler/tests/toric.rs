use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;

use toric_kahler::toric::{extremal_affine_of_vertices, rat_string, LatticePolytope};
use toric_kahler::Error;

const FIXTURES: [&str; 6] = ["cp1", "cp2", "cp1xcp1", "bl1", "bl2", "bl3"];

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn strs(v: &[BigRational]) -> Vec<String> {
    v.iter().map(rat_string).collect()
}

#[test]
fn fixture_volumes() {
    let cases = [
        ("cp1", q(2, 1)),
        ("cp2", q(9, 2)),
        ("cp1xcp1", q(4, 1)),
        ("bl1", q(4, 1)),
        ("bl2", q(7, 2)),
        ("bl3", q(3, 1)),
    ];
    for (key, vol) in cases {
        let p = LatticePolytope::fixture(key).unwrap();
        assert_eq!(p.moments(0).volume(), &vol, "{key}");
    }
}

#[test]
fn segment_moments() {
    let p = LatticePolytope::fixture("cp1").unwrap();
    let m = p.moments(2);
    assert_eq!(m.get(&[0]), &q(2, 1));
    assert_eq!(m.get(&[1]), &q(0, 1));
    assert_eq!(m.get(&[2]), &q(2, 3));
}

#[test]
fn triangle_moments_are_centered() {
    let p = LatticePolytope::fixture("cp2").unwrap();
    let m = p.moments(2);
    assert!(m.get(&[1, 0]).is_zero());
    assert!(m.get(&[0, 1]).is_zero());
    // ∫ p₁² over the triangle (−1,−1), (2,−1), (−1,2)
    assert_eq!(m.get(&[2, 0]), &q(9, 4));
}

#[test]
fn loads_vertex_document() {
    let p =
        LatticePolytope::from_json(r#"{"name": "sq", "dim": 2, "vertices": [[1,1],[-1,1],[-1,-1],[1,-1]]}"#).unwrap();
    assert_eq!(p.vertices.len(), 4);
    assert_eq!(p.facets.len(), 4);
    assert!(p.facets.iter().all(|f| f.offset == 1));
    for (i, f) in p.facets.iter().enumerate() {
        let a = &p.vertices[i];
        let b = &p.vertices[(i + 1) % 4];
        for v in [a, b] {
            assert_eq!(f.normal[0] * v[0] + f.normal[1] * v[1], -1);
        }
    }
}

#[test]
fn rejects_bad_documents() {
    assert!(matches!(LatticePolytope::from_json("{\"name\": 3}"), Err(Error::Parse(_))));
    // [−2, 1] is not reflexive
    let e = LatticePolytope::from_vertices("seg", 1, vec![vec![-2], vec![1]]).unwrap_err();
    assert!(matches!(e, Error::InvalidPolytope(ref s) if s.contains("reflexive")), "{e}");
    let e = LatticePolytope::from_vertices("line", 2, vec![vec![-1, -1], vec![0, 0], vec![1, 1]]).unwrap_err();
    assert!(matches!(e, Error::InvalidPolytope(_)));
    let e =
        LatticePolytope::from_vertices("big", 2, vec![vec![-2, -2], vec![2, -2], vec![2, 2], vec![-2, 2]]).unwrap_err();
    assert!(matches!(e, Error::InvalidPolytope(_)));
    assert!(LatticePolytope::from_vertices("x", 3, vec![vec![0, 0, 0]]).is_err());
    assert!(LatticePolytope::fixture("cp3").is_err());
}

#[test]
fn demazure_root_counts() {
    for (key, roots) in [("cp1", 2), ("cp2", 6), ("cp1xcp1", 4), ("bl1", 4), ("bl2", 2), ("bl3", 0)] {
        let p = LatticePolytope::fixture(key).unwrap();
        assert_eq!(p.demazure_roots().len(), roots, "{key}");
        assert_eq!(p.dim_automorphisms(), p.dim + roots);
    }
}

#[test]
fn demazure_roots_have_the_root_property() {
    for key in FIXTURES {
        let p = LatticePolytope::fixture(key).unwrap();
        for r in p.demazure_roots() {
            for (i, f) in p.facets.iter().enumerate() {
                let s: i64 = f.normal.iter().zip(&r.weight).map(|(u, a)| u * a).sum();
                if i == r.facet_index {
                    assert_eq!(s, -1);
                } else {
                    assert!(s >= 0, "{key} {:?}", r.weight);
                }
            }
        }
    }
}

#[test]
fn symmetric_polytopes_have_no_obstruction() {
    for key in ["cp1", "cp2", "cp1xcp1", "bl3"] {
        let ex = LatticePolytope::fixture(key).unwrap().extremal_affine();
        assert!(ex.ell_exact.iter().all(Zero::is_zero), "{key}");
        assert_eq!(ex.margin_exact, q(1, 1));
        assert!(ex.predicted_lambdas.iter().all(|(_, l)| *l == 0.0));
    }
}

#[test]
fn blowup_extremal_data() {
    let ex = LatticePolytope::fixture("bl1").unwrap().extremal_affine();
    assert_eq!(strs(&ex.barycenter_exact), ["-1/6", "1/12"]);
    assert_eq!(strs(&ex.ell_exact), ["-1/11", "-6/11", "0"]);
    assert_eq!(rat_string(&ex.margin_exact), "6/11");
    assert_eq!(rat_string(&ex.norm_sq_exact), "4/11");

    let ex = LatticePolytope::fixture("bl2").unwrap().extremal_affine();
    assert_eq!(strs(&ex.barycenter_exact), ["2/21", "2/21"]);
    assert_eq!(strs(&ex.ell_exact), ["-32/409", "168/409", "168/409"]);
    assert_eq!(rat_string(&ex.margin_exact), "105/409");
    assert_eq!(rat_string(&ex.norm_sq_exact), "112/409");
}

#[test]
fn predicted_lambdas_pair_the_gradient_with_roots() {
    let p = LatticePolytope::fixture("bl1").unwrap();
    let ex = p.extremal_affine();
    assert_eq!(ex.predicted_lambdas.len(), 4);
    for (w, l) in &ex.predicted_lambdas {
        let dot: f64 = ex.ell.gradient.iter().zip(w).map(|(b, &a)| b * a as f64).sum();
        assert_eq!(l.abs(), dot.abs());
    }
}

#[test]
fn ell_has_zero_mean() {
    for key in FIXTURES {
        let p = LatticePolytope::fixture(key).unwrap();
        let ex = p.extremal_affine();
        let m = p.moments(1);
        let mut s = &ex.ell_exact[0] * m.volume();
        for j in 0..p.dim {
            let mut beta = vec![0u32; p.dim];
            beta[j] = 1;
            s += &ex.ell_exact[j + 1] * m.get(&beta);
        }
        assert!(s.is_zero(), "{key}");
    }
}

proptest! {
    #[test]
    fn ell_follows_lattice_translations(key in 0usize..6, tx in -3i64..=3, ty in -3i64..=3) {
        let p = LatticePolytope::fixture(FIXTURES[key]).unwrap();
        let t: Vec<i64> = if p.dim == 1 { vec![tx] } else { vec![tx, ty] };
        let moved: Vec<Vec<i64>> = p.vertices.iter().map(|v| v.iter().zip(&t).map(|(a, b)| a + b).collect()).collect();
        let center: Vec<BigRational> = t.iter().map(|&a| q(a, 1)).collect();
        let base = p.extremal_affine();
        let shifted = extremal_affine_of_vertices(p.dim, &moved, &center);
        // ℓ'(p + t) = ℓ(p): same gradient, constant moved by −⟨b, t⟩
        let mut c = base.ell_exact[0].clone();
        for j in 0..p.dim {
            prop_assert_eq!(&shifted.ell_exact[j + 1], &base.ell_exact[j + 1]);
            c -= &base.ell_exact[j + 1] * &center[j];
        }
        prop_assert_eq!(&shifted.ell_exact[0], &c);
        prop_assert_eq!(&shifted.margin_exact, &base.margin_exact);
        prop_assert_eq!(&shifted.norm_sq_exact, &base.norm_sq_exact);
    }

    #[test]
    fn moments_scale_under_reflection(key in 0usize..6, a in 0u32..=3, b in 0u32..=3) {
        let p = LatticePolytope::fixture(FIXTURES[key]).unwrap();
        prop_assume!(p.dim == 2 || b == 0);
        let flipped: Vec<Vec<i64>> = p.vertices.iter().map(|v| v.iter().map(|c| -c).collect()).collect();
        let beta: Vec<u32> = if p.dim == 1 { vec![a] } else { vec![a, b] };
        let m = p.moments(6);
        let mf = toric_kahler::toric::moments_of_vertices(p.dim, &flipped, 6);
        let sign = if beta.iter().sum::<u32>() % 2 == 0 { q(1, 1) } else { q(-1, 1) };
        prop_assert_eq!(mf.get(&beta), &(m.get(&beta) * sign));
    }
}
