use proptest::prelude::*;

use toric_kahler::mesh::{fd_weights, Grid, QuadratureRule};
use toric_kahler::Error;

fn rule(simpson: bool) -> QuadratureRule {
    if simpson {
        QuadratureRule::Simpson
    } else {
        QuadratureRule::Trapezoid
    }
}

#[test]
fn grid_examples() {
    let g = Grid::new(1, 8.0, 1025, QuadratureRule::Trapezoid).unwrap();
    assert_eq!(g.spacing, 16.0 / 1024.0);
    assert_eq!(g.len(), 1025);
    let g = Grid::new(2, 6.0, 129, QuadratureRule::Simpson).unwrap();
    assert_eq!(g.len(), 129 * 129);
    assert!(matches!(Grid::new(1, 8.0, 4, QuadratureRule::Simpson), Err(Error::InvalidGrid(_))));
    assert!(Grid::new(1, 8.0, 3, QuadratureRule::Simpson).is_err());
    assert!(Grid::new(3, 8.0, 9, QuadratureRule::Simpson).is_err());
    assert!(Grid::new(1, -1.0, 9, QuadratureRule::Simpson).is_err());
}

#[test]
fn rule_names_roundtrip() {
    for r in [QuadratureRule::Trapezoid, QuadratureRule::Simpson] {
        assert_eq!(QuadratureRule::parse(r.name()).unwrap(), r);
    }
    assert!(QuadratureRule::parse("gauss").is_err());
}

#[test]
fn quadratic_field_has_constant_second_derivative() {
    let g = Grid::new(1, 4.0, 65, QuadratureRule::Simpson).unwrap();
    let f: Vec<f64> = g.axis.iter().map(|x| x * x).collect();
    for acc in [2, 4] {
        let d = g.differentiate(&f, &[2], acc).unwrap();
        assert!(d.iter().all(|v| (v - 2.0).abs() < 1e-10), "accuracy {acc}");
    }
}

#[test]
fn fourth_order_stencil_error_scales_like_h4() {
    let err = |n: usize| {
        let g = Grid::new(1, 3.0, n, QuadratureRule::Trapezoid).unwrap();
        let f: Vec<f64> = g.axis.iter().map(|x| x.sin()).collect();
        let d = g.differentiate(&f, &[1], 4).unwrap();
        g.axis.iter().zip(&d).map(|(x, v)| (v - x.cos()).abs()).fold(0.0, f64::max)
    };
    let (e1, e2) = (err(65), err(129));
    assert!(e1 < 1e-4, "{e1}");
    let ratio = e1 / e2;
    assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
}

#[test]
fn mixed_derivative_in_two_dimensions() {
    let g = Grid::new(2, 2.0, 41, QuadratureRule::Simpson).unwrap();
    let f: Vec<f64> = g.points().iter().map(|p| p[0] * p[0] * p[1]).collect();
    let d = g.differentiate(&f, &[1, 1], 2).unwrap();
    for (k, p) in g.points().iter().enumerate() {
        assert!((d[k] - 2.0 * p[0]).abs() < 1e-10);
    }
}

#[test]
fn differentiate_rejects_bad_input() {
    let g = Grid::new(1, 2.0, 9, QuadratureRule::Simpson).unwrap();
    assert!(matches!(g.differentiate(&[0.0; 8], &[1], 2), Err(Error::Shape { expected: 9, got: 8 })));
    assert!(g.differentiate(&[0.0; 9], &[3], 2).is_err());
    assert!(g.differentiate(&[0.0; 9], &[1], 3).is_err());
}

#[test]
fn weights_integrate_gaussian() {
    for simpson in [false, true] {
        let g = Grid::new(1, 8.0, 257, rule(simpson)).unwrap();
        let f: Vec<f64> = g.axis.iter().map(|x| (-x * x).exp()).collect();
        assert!((g.integrate(&f) - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }
}

#[test]
fn fd_weights_reproduce_classical_stencils() {
    let w = fd_weights(&[-1, 0, 1], 2);
    for (a, b) in w.iter().zip([1.0, -2.0, 1.0]) {
        assert!((a - b).abs() < 1e-14);
    }
    let w = fd_weights(&[-2, -1, 0, 1, 2], 1);
    for (a, b) in w.iter().zip([1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0]) {
        assert!((a - b).abs() < 1e-14);
    }
}

proptest! {
    #[test]
    fn weights_positive_and_sum_to_box_volume(
        dim in 1usize..=2,
        half in 0.5f64..12.0,
        k in 2usize..40,
        simpson: bool,
    ) {
        let n = 2 * k + 1;
        let g = Grid::new(dim, half, n, rule(simpson)).unwrap();
        prop_assert!(g.weights.iter().all(|&w| w > 0.0));
        let total: f64 = g.weights.iter().sum();
        let vol = (2.0 * half).powi(dim as i32);
        prop_assert!((total - vol).abs() <= 1e-12 * vol);
        for (i, x) in g.axis.iter().enumerate() {
            prop_assert!((x + g.axis[n - 1 - i]).abs() < 1e-12 * half);
        }
    }

    #[test]
    fn stencils_are_exact_on_polynomials(
        acc in prop::sample::select(vec![2usize, 4, 6, 8]),
        d in 0usize..=2,
        coeffs in prop::collection::vec(-2.0f64..2.0, 9),
    ) {
        let g = Grid::new(1, 1.5, 33, QuadratureRule::Simpson).unwrap();
        // polynomial of degree acc + d − 1 keeps every stencil exact, including one-sided rows
        let deg = (acc + d - 1).min(8);
        let poly = |x: f64, der: usize| -> f64 {
            (der..=deg).map(|j| {
                let fall: f64 = (0..der).map(|i| (j - i) as f64).product();
                coeffs[j] * fall * x.powi((j - der) as i32)
            }).sum()
        };
        let f: Vec<f64> = g.axis.iter().map(|&x| poly(x, 0)).collect();
        let out = g.differentiate(&f, &[d], acc).unwrap();
        for (x, v) in g.axis.iter().zip(&out) {
            prop_assert!((v - poly(*x, d)).abs() < 1e-8 * poly(*x, d).abs().max(1.0) + 1e-6, "x {} got {} want {}", x, v, poly(*x, d));
        }
    }

    #[test]
    fn constants_have_zero_derivatives(c in -1e3f64..1e3, o0 in 0usize..=2, o1 in 0usize..=2) {
        prop_assume!(o0 + o1 > 0 && o0 + o1 <= 2);
        let g = Grid::new(2, 3.0, 17, QuadratureRule::Trapezoid).unwrap();
        let f = vec![c; g.len()];
        let d = g.differentiate(&f, &[o0, o1], 4).unwrap();
        prop_assert!(d.iter().all(|v| v.abs() <= 1e-9 * c.abs().max(1.0)));
    }
}
