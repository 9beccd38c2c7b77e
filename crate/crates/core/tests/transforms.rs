use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use sigsel_core::params::{Block, ParameterSpace, PriorSpec};
use sigsel_core::rng::stream;

fn interval(low: f64, high: f64, count: usize) -> ParameterSpace {
    ParameterSpace::new(vec![Block::Interval {
        label: "x".into(),
        low,
        high,
        count,
        prior: PriorSpec::Flat,
    }])
    .unwrap()
}

fn spaces() -> Vec<(&'static str, ParameterSpace)> {
    vec![
        ("bounded", interval(-1.0, 1.0, 3)),
        ("lower", interval(0.5, f64::INFINITY, 2)),
        ("upper", interval(f64::NEG_INFINITY, 2.0, 2)),
        ("real", interval(f64::NEG_INFINITY, f64::INFINITY, 2)),
        ("simplex", ParameterSpace::new(vec![Block::dirichlet("h", 4, 0.25)]).unwrap()),
        (
            "mixed",
            ParameterSpace::new(vec![Block::uniform("s", -1.0, 1.0, 2), Block::dirichlet("h", 8, 0.25)]).unwrap(),
        ),
    ]
}

/// Coordinates of theta that form a chart: every simplex block drops its last
/// component, which the others determine.
fn chart(space: &ParameterSpace, theta: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut at = 0;
    for b in space.blocks() {
        let n = b.constrained_dim();
        let tb = &theta[at..at + n];
        at += n;
        match b {
            Block::Interval { .. } => out.extend_from_slice(tb),
            Block::Simplex { dim, .. } => {
                out.extend_from_slice(&tb[..dim - 1]);
                out.push(tb[*dim]);
            }
        }
    }
    out
}

fn fd_log_det(space: &ParameterSpace, z: &[f64]) -> f64 {
    let n = z.len();
    let h = 1e-6;
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for c in 0..n {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[c] += h;
        zm[c] -= h;
        let fp = chart(space, &space.constrain(&zp).unwrap().0);
        let fm = chart(space, &space.constrain(&zm).unwrap().0);
        for r in 0..n {
            jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac.determinant().abs().ln()
}

#[test]
fn log_jacobian_matches_finite_differences() {
    let mut rng = stream(2024, &[]);
    for (name, space) in spaces() {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let z: Vec<f64> = (0..space.unconstrained_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (_, analytic) = space.constrain(&z).unwrap();
            worst = worst.max((analytic - fd_log_det(&space, &z)).abs());
        }
        assert!(worst < 1e-6, "{name}: worst log-Jacobian error {worst:e}");
    }
}

#[test]
fn simplex_log_jacobian_closed_form() {
    // K components: log K + r - K * logsumexp(t)
    let space = ParameterSpace::new(vec![Block::dirichlet("h", 5, 1.0)]).unwrap();
    let t = [0.3, -1.2, 0.7, 0.0, 2.1];
    let (theta, lj) = space.constrain(&t).unwrap();
    let r: f64 = t.iter().sum();
    let lse = t.iter().map(|v| v.exp()).sum::<f64>().ln();
    approx::assert_abs_diff_eq!(lj, 5f64.ln() + r - 5.0 * lse, epsilon = 1e-12);
    approx::assert_abs_diff_eq!(theta[5], r, epsilon = 1e-15);
}

fn round_trip(space: &ParameterSpace, z: &[f64]) -> f64 {
    let (theta, _) = space.constrain(z).unwrap();
    let back = space.unconstrain(&theta).unwrap();
    let (theta2, _) = space.constrain(&back).unwrap();
    theta.iter().zip(&theta2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn round_trip_identity(zs in prop::collection::vec(-3.0f64..3.0, 10)) {
        for (name, space) in spaces() {
            let z = &zs[..space.unconstrained_dim()];
            let err = round_trip(&space, z);
            prop_assert!(err < 1e-12, "{}: {:e}", name, err);
        }
    }

    #[test]
    fn samples_respect_constraints(zs in prop::collection::vec(-8.0f64..8.0, 10)) {
        for (_, space) in spaces() {
            let (theta, lj) = space.constrain(&zs[..space.unconstrained_dim()]).unwrap();
            prop_assert!(lj.is_finite());
            prop_assert!(space.contains(&theta));
        }
    }

    #[test]
    fn simplex_sums_to_one(t in prop::collection::vec(-20.0f64..20.0, 8)) {
        let space = ParameterSpace::new(vec![Block::dirichlet("h", 8, 0.25)]).unwrap();
        let (theta, _) = space.constrain(&t).unwrap();
        let total: f64 = theta[..8].iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(theta[..8].iter().all(|x| *x > 0.0));
    }

    #[test]
    fn interval_inverse_from_theta(x in -0.999f64..0.999) {
        let space = interval(-1.0, 1.0, 1);
        let z = space.unconstrain(&[x]).unwrap();
        let (back, _) = space.constrain(&z).unwrap();
        prop_assert!((back[0] - x).abs() < 1e-12);
    }
}
