//! Worst-case expectation over a KL ball, `inf { Q.V : KL(Q || P0) <= sigma }`,
//! computed through its one-dimensional concave dual
//!
//! ```text
//! sup_{lambda >= 0}  -lambda * log( P0 . exp(-V / lambda) ) - lambda * sigma
//! ```
//!
//! Everything here works on plain slices: a probability row `p0` and a value
//! vector `v` of the same length. Entries where `p0` is zero never influence
//! the result.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ROW_SUM_TOL;

/// Default bracket tolerance for the dual line search.
pub const DEFAULT_DUAL_TOL: f64 = 1e-10;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// A probability vector with nonempty support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::OutOfRange("probabilities must be finite and nonnegative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::OutOfRange(format!("probabilities sum to {sum}")));
        }
        if !probs.iter().any(|&p| p > 0.0) {
            return Err(Error::EmptySupport);
        }
        Ok(Self(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Indices of strictly positive entries.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(p, x)| p * x).sum()
    }
}

/// `x log(x / y)` with `0 log 0 = 0`.
#[inline]
fn xlogx_over(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// `KL(Ber(p) || Ber(q))`. Infinite when `q` is 0 or 1 and `p` differs.
/// Returns NaN for arguments outside `[0, 1]`.
pub fn kl_bernoulli(p: f64, q: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return f64::NAN;
    }
    if (q == 0.0 && p > 0.0) || (q == 1.0 && p < 1.0) {
        return f64::INFINITY;
    }
    xlogx_over(p, q) + xlogx_over(1.0 - p, 1.0 - q)
}

/// `KL(p || q)` summed over the support of `p`; infinite without absolute continuity.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p, q)?;
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            total += pi * (pi / qi).ln();
        }
    }
    Ok(total.max(0.0))
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Minimum of `v` over the support of `p0`; `None` for an empty support.
#[inline]
fn support_min(p0: &[f64], v: &[f64]) -> Option<f64> {
    p0.iter()
        .zip(v)
        .filter(|(&p, _)| p > 0.0)
        .map(|(_, &x)| x)
        .reduce(f64::min)
}

/// Minimum of `v` restricted to the support of `p0`.
pub fn essinf_over_support(p0: &[f64], v: &[f64]) -> Result<f64> {
    check_len(p0, v)?;
    support_min(p0, v).ok_or(Error::EmptySupport)
}

/// `P0`-mass of the set where `v` attains its essential infimum.
#[inline]
fn essinf_mass(p0: &[f64], v: &[f64], vmin: f64) -> f64 {
    p0.iter()
        .zip(v)
        .filter(|(&p, &x)| p > 0.0 && x == vmin)
        .map(|(&p, _)| p)
        .sum()
}

/// Whether the dual optimum sits at `lambda = 0`:
/// `log(P0{v = essinf}) + sigma >= 0`. Equality counts as the boundary.
pub fn lambda_zero_condition(p0: &[f64], v: &[f64], sigma: f64) -> Result<bool> {
    let vmin = essinf_over_support(p0, v)?;
    Ok(essinf_mass(p0, v, vmin).ln() + sigma >= 0.0)
}

/// `f(lambda) = vmin - lambda log(sum_supp P0_i exp(-(v_i - vmin)/lambda)) - lambda sigma`,
/// evaluated with the exponentials shifted by the support minimum.
///
/// The log is taken as `ln_1p` of `sum P0_i expm1(.)` (normalized by the row
/// mass) so that large `lambda`, where the sum is close to one, keeps full
/// relative precision.
#[inline]
fn dual_value_shifted(p0: &[f64], v: &[f64], vmin: f64, sigma: f64, lambda: f64) -> f64 {
    let mut acc = 0.0;
    let mut mass = 0.0;
    for (&p, &x) in p0.iter().zip(v) {
        if p > 0.0 {
            acc += p * (-(x - vmin) / lambda).exp_m1();
            mass += p;
        }
    }
    vmin - lambda * (acc / mass).ln_1p() - lambda * sigma
}

/// `KL(Q_lambda || P0)` for the tilt `Q_lambda ∝ P0 exp(-(v - vmin)/lambda)`.
#[inline]
fn tilt_kl_shifted(p0: &[f64], v: &[f64], vmin: f64, lambda: f64) -> f64 {
    let (mut z, mut mass, mut moment) = (0.0, 0.0, 0.0);
    for (&p, &x) in p0.iter().zip(v) {
        if p > 0.0 {
            let d = (x - vmin) / lambda;
            let w = p * (-d).exp();
            z += w;
            mass += p;
            moment += w * d;
        }
    }
    (-(moment / z) - (z / mass).ln()).max(0.0)
}

/// The dual objective at a single `lambda > 0`.
pub fn dual_objective(lambda: f64, p0: &[f64], v: &[f64], sigma: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let vmin = essinf_over_support(p0, v)?;
    Ok(dual_value_shifted(p0, v, vmin, sigma, lambda))
}

/// Scalar outcome of one robust backup, without the worst-case distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Backup {
    pub value: f64,
    /// Maximizing `lambda`; 0 on the boundary branch and when `sigma == 0`.
    pub lambda_star: f64,
    pub at_boundary: bool,
    pub sigma_zero: bool,
    pub iterations: usize,
    /// Final width of the golden-section bracket (0 when no search ran).
    pub bracket_width: f64,
}

/// Robust expectation with no input validation and no allocation; used by the
/// solvers on rows they already know to be proper distributions.
pub(crate) fn robust_backup(p0: &[f64], v: &[f64], sigma: f64, tol: f64) -> Backup {
    if sigma == 0.0 {
        let value = p0.iter().zip(v).map(|(p, x)| p * x).sum();
        return Backup {
            value,
            lambda_star: 0.0,
            at_boundary: false,
            sigma_zero: true,
            iterations: 0,
            bracket_width: 0.0,
        };
    }
    let vmin = support_min(p0, v).expect("robust backup over an empty support");
    let boundary = Backup {
        value: vmin,
        lambda_star: 0.0,
        at_boundary: true,
        sigma_zero: false,
        iterations: 0,
        bracket_width: 0.0,
    };
    if essinf_mass(p0, v, vmin).ln() + sigma >= 0.0 {
        return boundary;
    }

    // Shift by vmin: the shifted values live in [0, span] and the optimal
    // lambda lies in [0, span / sigma].
    let span = p0
        .iter()
        .zip(v)
        .filter(|(&p, _)| p > 0.0)
        .map(|(_, &x)| x - vmin)
        .fold(0.0, f64::max);
    let hi = span / sigma;
    let lo = tol * hi;
    let width = tol * (1.0 + hi);
    let f = |lambda: f64| dual_value_shifted(p0, v, vmin, sigma, lambda);

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    let f_hi = f(hi);
    if f_hi > best.1 {
        best = (hi, f_hi);
    }
    let mut iterations = 0;
    while b - a > width {
        iterations += 1;
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd > best.1 {
                best = (d, fd);
            }
        }
    }

    // Near its peak f is flat to rounding, so golden-section pins lambda* only
    // to about sqrt(eps). f'(lambda) = KL(Q_lambda || P0) - sigma is
    // decreasing: widen the bracket until f' changes sign, then bisect it so
    // the reported lambda gives a feasible tilt.
    let g = |lambda: f64| tilt_kl_shifted(p0, v, vmin, lambda) - sigma;
    let mut step = (b - a).max(width);
    for _ in 0..64 {
        let (ga, gb) = (g(a), g(b));
        if (ga >= 0.0 || a <= lo) && (gb <= 0.0 || b >= hi) {
            break;
        }
        if ga < 0.0 {
            a = (a - step).max(lo);
        }
        if gb > 0.0 {
            b = (b + step).min(hi);
        }
        step *= 2.0;
    }
    if g(a) >= 0.0 && g(b) <= 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if g(mid) > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        best = (b, f(b).max(best.1));
    }

    let mean: f64 = p0.iter().zip(v).map(|(p, x)| p * x).sum();
    Backup {
        value: best.1.max(vmin).min(mean),
        lambda_star: best.0,
        at_boundary: false,
        sigma_zero: false,
        iterations,
        bracket_width: b - a,
    }
}

/// Full result of [`robust_inf_expectation`].
#[derive(Clone, Debug, PartialEq)]
pub struct DualResult {
    pub value: f64,
    pub lambda_star: f64,
    pub at_boundary: bool,
    /// Set when `sigma == 0` and the ball is the single point `P0`.
    pub sigma_zero: bool,
    /// Minimizing distribution, supported on `supp(P0)`.
    pub worst_case: ProbVector,
    pub iterations: usize,
    pub bracket_width: f64,
}

/// `inf_{Q : KL(Q||P0) <= sigma} Q.V` by maximizing the concave dual over
/// `lambda in (0, M/sigma]` (golden-section search), compared against the
/// `lambda -> 0` limit `essinf V`.
pub fn robust_inf_expectation(p0: &[f64], v: &[f64], sigma: f64, tol: f64) -> Result<DualResult> {
    check_len(p0, v)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be nonnegative, got {sigma}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("value vector".into()));
    }
    let p0 = ProbVector::new(p0.to_vec())?;
    let backup = robust_backup(p0.as_slice(), v, sigma, tol);

    let worst_case = if backup.sigma_zero {
        p0.clone()
    } else if backup.at_boundary {
        let vmin = backup.value;
        let mut q: Vec<f64> = p0
            .as_slice()
            .iter()
            .zip(v)
            .map(|(&p, &x)| if p > 0.0 && x == vmin { p } else { 0.0 })
            .collect();
        let mass: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= mass);
        ProbVector(q)
    } else {
        tilt(p0.as_slice(), v, backup.lambda_star)
    };

    Ok(DualResult {
        value: backup.value,
        lambda_star: backup.lambda_star,
        at_boundary: backup.at_boundary,
        sigma_zero: backup.sigma_zero,
        worst_case,
        iterations: backup.iterations,
        bracket_width: backup.bracket_width,
    })
}

fn tilt(p0: &[f64], v: &[f64], lambda: f64) -> ProbVector {
    let vmin = support_min(p0, v).unwrap_or(0.0);
    let mut q: Vec<f64> = p0
        .iter()
        .zip(v)
        .map(|(&p, &x)| if p > 0.0 { p * (-(x - vmin) / lambda).exp() } else { 0.0 })
        .collect();
    let z: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= z);
    ProbVector(q)
}

/// Exponential tilting `Q_i ∝ P0_i exp(-V_i / lambda)` over `supp(P0)`.
pub fn worst_case_distribution(p0: &[f64], v: &[f64], lambda_star: f64) -> Result<ProbVector> {
    check_len(p0, v)?;
    if !(lambda_star > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda_star must be positive, got {lambda_star}"
        )));
    }
    let p0 = ProbVector::new(p0.to_vec())?;
    Ok(tilt(p0.as_slice(), v, lambda_star))
}
