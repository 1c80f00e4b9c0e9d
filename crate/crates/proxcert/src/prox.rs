//! The s-prox machinery: soft-thresholding, the proximal point map
//! `P_s(x) = prox_{s g}(x - s * grad f(x))`, and the prox subgradient
//! `G_s(x) = (x - P_s(x)) / s` that plays the role of the gradient in every
//! rate statement.

use nalgebra::DVector;

use crate::problem::CompositeProblem;
use crate::{Error, Result};

/// Vectors at least this long are soft-thresholded in parallel chunks when
/// the `parallel` feature is on. Elementwise, so the result is identical
/// either way.
const SOFT_THRESHOLD_PAR_LEN: usize = 1 << 15;

#[inline]
fn shrink(z: f64, theta: f64) -> f64 {
    if z > theta {
        z - theta
    } else if z < -theta {
        z + theta
    } else {
        0.0
    }
}

/// Componentwise soft-thresholding `(|z_i| - theta)_+ * sgn(z_i)`, the
/// closed-form prox of `theta * ||.||_1`.
///
/// Total for `theta >= 0` (asserted); `theta = 0` is the identity.
pub fn soft_threshold(z: &DVector<f64>, theta: f64) -> DVector<f64> {
    assert!(theta >= 0.0, "soft threshold needs theta >= 0, got {theta}");
    #[cfg(feature = "parallel")]
    if z.len() >= SOFT_THRESHOLD_PAR_LEN {
        use rayon::prelude::*;
        let out: Vec<f64> = z.as_slice().par_iter().map(|&v| shrink(v, theta)).collect();
        return DVector::from_vec(out);
    }
    soft_threshold_seq(z, theta)
}

/// Always-sequential soft-threshold kernel. [`soft_threshold`] delegates
/// here below the parallel cutoff; benches compare the two directly.
pub fn soft_threshold_seq(z: &DVector<f64>, theta: f64) -> DVector<f64> {
    assert!(theta >= 0.0, "soft threshold needs theta >= 0, got {theta}");
    DVector::from_iterator(z.len(), z.iter().map(|&v| shrink(v, theta)))
}

/// One evaluation of the s-prox map at `input_point` with step `step`:
/// `mapped_point = P_s(input)` and the subgradient
/// `subgradient = (input - mapped) / step`, stored exactly as computed.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxEvaluation {
    pub input_point: DVector<f64>,
    pub step: f64,
    pub mapped_point: DVector<f64>,
    pub subgradient: DVector<f64>,
}

fn check_step(s: f64) -> Result<()> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "prox step must be finite and positive, got {s}"
        )));
    }
    Ok(())
}

/// The proximal point `P_s(x) = prox_{s g}(x - s * grad f(x))`.
///
/// Costs exactly one gradient and one prox oracle call.
pub fn prox_point(problem: &CompositeProblem, x: &DVector<f64>, s: f64) -> Result<DVector<f64>> {
    check_step(s)?;
    let grad = problem.gradient(x)?;
    let forward = x - grad * s;
    problem.prox(&forward, s)
}

/// The s-prox subgradient `G_s(x) = (x - P_s(x)) / s` together with the
/// points it was built from. `G_s(x) = 0` if and only if `x` minimizes
/// `Phi` (fixed-point characterization of `P_s`).
pub fn prox_subgradient(
    problem: &CompositeProblem,
    x: &DVector<f64>,
    s: f64,
) -> Result<ProxEvaluation> {
    let mapped = prox_point(problem, x, s)?;
    let subgradient = (x - &mapped) / s;
    Ok(ProxEvaluation {
        input_point: x.clone(),
        step: s,
        mapped_point: mapped,
        subgradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_lasso, LinearOperator};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn soft_threshold_examples() {
        let z = DVector::from_vec(vec![3.0, -0.5, 0.0]);
        let out = soft_threshold(&z, 1.0);
        assert_eq!(out, DVector::from_vec(vec![2.0, 0.0, 0.0]));
    }

    #[test]
    fn soft_threshold_zero_theta_is_identity() {
        let z = DVector::from_vec(vec![1.5, -2.25, 0.0, 1e-300]);
        assert_eq!(soft_threshold(&z, 0.0), z);
    }

    #[test]
    fn soft_threshold_large_theta_annihilates() {
        let z = DVector::from_vec(vec![1.5, -2.25, 0.0]);
        assert_eq!(soft_threshold(&z, 2.25), DVector::zeros(3));
    }

    #[test]
    #[should_panic]
    fn soft_threshold_rejects_negative_theta() {
        soft_threshold(&DVector::zeros(1), -0.1);
    }

    #[test]
    fn parallel_and_seq_kernels_agree_bitwise() {
        let n = SOFT_THRESHOLD_PAR_LEN + 17;
        let z = DVector::from_fn(n, |i, _| ((i as f64) * 0.37).sin() * 3.0);
        let a = soft_threshold(&z, 0.8);
        let b = soft_threshold_seq(&z, 0.8);
        assert_eq!(a, b);
    }

    fn identity_lasso(dim: usize, b: Vec<f64>, lambda: f64) -> CompositeProblem {
        let a = LinearOperator::dense(DMatrix::identity(dim, dim)).unwrap();
        make_lasso(a, DVector::from_vec(b), lambda, 1.0, 1.0).unwrap()
    }

    #[test]
    fn prox_point_identity_quadratic() {
        // f = 0.5||x - b||^2, g = ||.||_1: P_1(0) = soft(b, 1).
        let p = identity_lasso(2, vec![2.0, -0.3], 1.0);
        let x = DVector::zeros(2);
        let mapped = prox_point(&p, &x, 1.0).unwrap();
        assert_eq!(mapped, DVector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn subgradient_identity_is_exact() {
        let p = identity_lasso(3, vec![1.0, -4.0, 0.25], 0.5);
        let x = DVector::from_vec(vec![0.1, 0.2, -0.3]);
        let s = 0.7;
        let eval = prox_subgradient(&p, &x, s).unwrap();
        let recomputed = (&eval.input_point - &eval.mapped_point) / eval.step;
        assert_eq!(eval.subgradient, recomputed);
        assert_eq!(eval.input_point, x);
        assert_eq!(eval.step, s);
    }

    #[test]
    fn rejects_bad_steps() {
        let p = identity_lasso(1, vec![1.0], 0.0);
        let x = DVector::zeros(1);
        assert!(prox_point(&p, &x, 0.0).is_err());
        assert!(prox_point(&p, &x, -1.0).is_err());
        assert!(prox_point(&p, &x, f64::NAN).is_err());
        assert!(prox_point(&p, &x, f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn shrinkage_never_grows_magnitude(
            z in proptest::collection::vec(-1e6_f64..1e6, 1..40),
            theta in 0.0_f64..1e3,
        ) {
            let z = DVector::from_vec(z);
            let out = soft_threshold(&z, theta);
            for i in 0..z.len() {
                prop_assert!(out[i].abs() <= z[i].abs());
                prop_assert!(out[i] * z[i] >= 0.0, "sign flipped at {i}");
                if z[i].abs() > theta {
                    prop_assert!((z[i].abs() - out[i].abs() - theta).abs() < 1e-9);
                } else {
                    prop_assert!(out[i] == 0.0);
                }
            }
        }

        #[test]
        fn soft_threshold_is_nonexpansive(
            pair in proptest::collection::vec((-1e5_f64..1e5, -1e5_f64..1e5), 1..30),
            theta in 0.0_f64..1e3,
        ) {
            let a = DVector::from_iterator(pair.len(), pair.iter().map(|p| p.0));
            let b = DVector::from_iterator(pair.len(), pair.iter().map(|p| p.1));
            let d_out = (soft_threshold(&a, theta) - soft_threshold(&b, theta)).norm();
            let d_in = (&a - &b).norm();
            prop_assert!(d_out <= d_in * (1.0 + 1e-12) + 1e-12);
        }
    }
}
