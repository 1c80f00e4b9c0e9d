//! Problem definitions: composite objectives `Phi = f + g` exposed through
//! first-order oracles, plus the spectral helpers that supply the strong
//! convexity and smoothness constants the certificates depend on.

mod linop;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::prox::soft_threshold;
use crate::{Error, Result};

pub use linop::LinearOperator;

type ValueFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type ProxFn = Arc<dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync>;

/// First-order oracle for the smooth part `f`: value, gradient, and the
/// convexity/smoothness constants `0 <= mu <= L`.
#[derive(Clone)]
pub struct SmoothOracle {
    value_fn: ValueFn,
    gradient_fn: GradientFn,
    /// Strong convexity modulus of `f` (0 means merely convex).
    pub mu: f64,
    /// Lipschitz constant of the gradient of `f`.
    pub lipschitz: f64,
}

impl SmoothOracle {
    pub fn new(
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        mu: f64,
        lipschitz: f64,
    ) -> Result<Self> {
        validate_constants(mu, lipschitz)?;
        Ok(SmoothOracle {
            value_fn: Arc::new(value),
            gradient_fn: Arc::new(gradient),
            mu,
            lipschitz,
        })
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value_fn)(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient_fn)(x)
    }
}

impl fmt::Debug for SmoothOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothOracle")
            .field("mu", &self.mu)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

/// Oracle for the nonsmooth part `g`: value and the scaled proximal map
/// `prox(z, theta) = argmin_y { ||y - z||^2 / (2 theta) + g(y) }`.
#[derive(Clone)]
pub struct NonsmoothOracle {
    value_fn: ValueFn,
    prox_fn: ProxFn,
    /// Human-readable tag (`"l1(lambda)"`, `"zero"`, `"custom"`).
    pub kind: String,
    /// The l1 weight when `g = lambda * ||.||_1` (0 for `g = 0`), `None`
    /// for custom oracles. Carried into trace metadata.
    pub l1_weight: Option<f64>,
}

impl NonsmoothOracle {
    pub fn new(
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        prox: impl Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        NonsmoothOracle {
            value_fn: Arc::new(value),
            prox_fn: Arc::new(prox),
            kind: "custom".into(),
            l1_weight: None,
        }
    }

    /// `g = lambda * ||.||_1` with the closed-form soft-threshold prox.
    pub fn l1(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "l1 weight must be finite and nonnegative, got {lambda}"
            )));
        }
        Ok(NonsmoothOracle {
            value_fn: Arc::new(move |x: &DVector<f64>| lambda * x.iter().map(|v| v.abs()).sum::<f64>()),
            prox_fn: Arc::new(move |z: &DVector<f64>, theta: f64| soft_threshold(z, lambda * theta)),
            kind: format!("l1({lambda})"),
            l1_weight: Some(lambda),
        })
    }

    /// `g = 0`: the prox is the identity.
    pub fn zero() -> Self {
        NonsmoothOracle {
            value_fn: Arc::new(|_: &DVector<f64>| 0.0),
            prox_fn: Arc::new(|z: &DVector<f64>, _| z.clone()),
            kind: "zero".into(),
            l1_weight: Some(0.0),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value_fn)(x)
    }

    /// Evaluates the scaled prox at `z` with scale `theta > 0`.
    pub fn prox(&self, z: &DVector<f64>, theta: f64) -> DVector<f64> {
        (self.prox_fn)(z, theta)
    }
}

impl fmt::Debug for NonsmoothOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonsmoothOracle")
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

/// Cumulative oracle-call counts for a problem (one counter set per
/// problem, shared across clones).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OracleCounts {
    pub objective: u64,
    pub gradient: u64,
    pub prox: u64,
}

#[derive(Default)]
struct Counters {
    objective: AtomicU64,
    gradient: AtomicU64,
    prox: AtomicU64,
}

/// The composite problem `Phi(x) = f(x) + g(x)` over `R^dimension`.
///
/// All evaluations route through this struct so oracle calls can be counted;
/// solvers are audited to spend exactly one gradient and one prox evaluation
/// per recorded iterate.
#[derive(Clone)]
pub struct CompositeProblem {
    pub smooth: SmoothOracle,
    pub nonsmooth: NonsmoothOracle,
    pub dimension: usize,
    counters: Arc<Counters>,
}

impl CompositeProblem {
    pub fn new(smooth: SmoothOracle, nonsmooth: NonsmoothOracle, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        Ok(CompositeProblem {
            smooth,
            nonsmooth,
            dimension,
            counters: Arc::new(Counters::default()),
        })
    }

    /// Strong convexity modulus of `Phi` inherited from `f`.
    pub fn mu(&self) -> f64 {
        self.smooth.mu
    }

    /// Gradient Lipschitz constant of `f`.
    pub fn lipschitz(&self) -> f64 {
        self.smooth.lipschitz
    }

    fn check_dim(&self, x: &DVector<f64>, context: &'static str) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Shape {
                context,
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `Phi(x) = f(x) + g(x)`.
    pub fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x, "objective")?;
        self.counters.objective.fetch_add(1, Ordering::Relaxed);
        Ok(self.smooth.value(x) + self.nonsmooth.value(x))
    }

    /// `grad f(x)`.
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x, "gradient")?;
        self.counters.gradient.fetch_add(1, Ordering::Relaxed);
        Ok(self.smooth.gradient(x))
    }

    /// Scaled prox of `g` at `z` with scale `theta > 0`.
    pub fn prox(&self, z: &DVector<f64>, theta: f64) -> Result<DVector<f64>> {
        self.check_dim(z, "prox")?;
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prox scale must be finite and positive, got {theta}"
            )));
        }
        self.counters.prox.fetch_add(1, Ordering::Relaxed);
        Ok(self.nonsmooth.prox(z, theta))
    }

    /// Snapshot of cumulative oracle-call counts.
    pub fn oracle_counts(&self) -> OracleCounts {
        OracleCounts {
            objective: self.counters.objective.load(Ordering::Relaxed),
            gradient: self.counters.gradient.load(Ordering::Relaxed),
            prox: self.counters.prox.load(Ordering::Relaxed),
        }
    }

    pub fn reset_oracle_counts(&self) {
        self.counters.objective.store(0, Ordering::Relaxed);
        self.counters.gradient.store(0, Ordering::Relaxed);
        self.counters.prox.store(0, Ordering::Relaxed);
    }
}

impl fmt::Debug for CompositeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompositeProblem")
            .field("dimension", &self.dimension)
            .field("mu", &self.smooth.mu)
            .field("lipschitz", &self.smooth.lipschitz)
            .field("nonsmooth", &self.nonsmooth.kind)
            .finish_non_exhaustive()
    }
}

/// Assembles the lasso `Phi(x) = 0.5 * ||A x - b||^2 + lambda * ||x||_1`.
///
/// `mu` and `lipschitz` are the extreme eigenvalues of `A^T A` supplied by
/// the caller (from [`tridiagonal_spectrum`], [`dense_gram_spectrum`], or
/// [`estimate_lipschitz`]); they are carried, not recomputed.
pub fn make_lasso(
    a: LinearOperator,
    b: DVector<f64>,
    lambda: f64,
    mu: f64,
    lipschitz: f64,
) -> Result<CompositeProblem> {
    if a.nrows() != b.len() {
        return Err(Error::Shape {
            context: "make_lasso rhs",
            expected: a.nrows(),
            got: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("rhs entries must be finite".into()));
    }
    validate_constants(mu, lipschitz)?;
    let dimension = a.ncols();
    let a = Arc::new(a);
    let a_value = Arc::clone(&a);
    let b_value = b.clone();
    let value = move |x: &DVector<f64>| {
        let r = a_value.apply(x) - &b_value;
        0.5 * r.norm_squared()
    };
    let a_grad = Arc::clone(&a);
    let gradient = move |x: &DVector<f64>| {
        let r = a_grad.apply(x) - &b;
        a_grad.apply_transpose(&r)
    };
    let smooth = SmoothOracle::new(value, gradient, mu, lipschitz)?;
    let nonsmooth = NonsmoothOracle::l1(lambda)?;
    CompositeProblem::new(smooth, nonsmooth, dimension)
}

/// Extreme eigenvalues `(mu, L)` of `A^T A` for the symmetric tridiagonal
/// Toeplitz matrix `A = tridiag(offdiag, diag, offdiag)` of order `n`.
///
/// The eigenvalues of `A` are `sigma_j = diag + 2*offdiag*cos(j*pi/(n+1))`
/// for `j = 1..n`; since `A^T A = A^2`, the Gram spectrum is `sigma_j^2` and
/// the extremes are scanned over all `j` (the minimizer of `sigma^2` need
/// not sit at an endpoint when `sigma` changes sign).
pub fn tridiagonal_spectrum(n: usize, diag: f64, offdiag: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidParameter("spectrum needs n >= 1".into()));
    }
    if !diag.is_finite() || !offdiag.is_finite() {
        return Err(Error::InvalidParameter(
            "tridiagonal coefficients must be finite".into(),
        ));
    }
    if n == 1 {
        // A 1x1 matrix has no off-diagonal entries; avoid the cos(pi/2)
        // rounding residue of the general formula.
        return Ok((diag * diag, diag * diag));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let denom = (n + 1) as f64;
    for j in 1..=n {
        let sigma = diag + 2.0 * offdiag * (std::f64::consts::PI * j as f64 / denom).cos();
        let lam = sigma * sigma;
        lo = lo.min(lam);
        hi = hi.max(lam);
    }
    Ok((lo, hi))
}

/// Dense-eigendecomposition route for `(mu, L)` of `A^T A`, guarded to
/// operators of order at most 1000.
pub fn dense_gram_spectrum(a: &LinearOperator) -> Result<(f64, f64)> {
    let dense = a.to_dense(1000)?;
    let gram = dense.transpose() * &dense;
    let eig = gram.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for lam in eig.eigenvalues.iter() {
        // Clamp the tiny negative roundoff a Gram eigenvalue can pick up.
        let lam = lam.max(0.0);
        lo = lo.min(lam);
        hi = hi.max(lam);
    }
    Ok((lo, hi))
}

/// Seed for the power-iteration start vector: fixed so the estimate is a
/// deterministic function of the operator.
const POWER_ITERATION_SEED: u64 = 0x70_77_65_72; // "powr"

/// Estimates the largest eigenvalue `L` of `A^T A` by power iteration with
/// Rayleigh-quotient stagnation stopping.
///
/// Returns an estimate `ell <= L` (a Rayleigh quotient never exceeds the top
/// eigenvalue). Stops after `iters` rounds or when the relative change of
/// the quotient drops below `tol`. A zero operator yields 0.
pub fn estimate_lipschitz(a: &LinearOperator, iters: usize, tol: f64) -> Result<f64> {
    if iters == 0 {
        return Err(Error::InvalidParameter("power iteration needs iters >= 1".into()));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "power iteration tol must be finite and positive, got {tol}"
        )));
    }
    let n = a.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let norm = v.norm();
    if norm == 0.0 {
        // Astronomically unlikely; keep the estimator total.
        v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    } else {
        v /= norm;
    }
    let mut rayleigh = 0.0_f64;
    for _ in 0..iters {
        let w = a.apply_transpose(&a.apply(&v));
        let next = v.dot(&w); // ||v|| = 1, so this is the Rayleigh quotient
        let wnorm = w.norm();
        if wnorm == 0.0 {
            return Ok(0.0);
        }
        let stalled = (next - rayleigh).abs() <= tol * next.abs().max(f64::MIN_POSITIVE);
        rayleigh = next;
        v = w / wnorm;
        if stalled {
            break;
        }
    }
    Ok(rayleigh.max(0.0))
}

/// Condition number `L / mu` of the smooth part.
///
/// `mu == 0` signals an infinite condition number by returning
/// `f64::INFINITY` rather than failing: merely convex problems are legal,
/// they just have no linear rate.
pub fn condition_number(mu: f64, lipschitz: f64) -> f64 {
    assert!(
        mu >= 0.0 && lipschitz >= mu && lipschitz.is_finite(),
        "condition_number needs 0 <= mu <= L < inf, got mu={mu}, L={lipschitz}"
    );
    if mu == 0.0 {
        f64::INFINITY
    } else {
        lipschitz / mu
    }
}

fn validate_constants(mu: f64, lipschitz: f64) -> Result<()> {
    if !mu.is_finite() || !lipschitz.is_finite() || mu < 0.0 || lipschitz < mu {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= mu <= L with both finite, got mu={mu}, L={lipschitz}"
        )));
    }
    Ok(())
}
