//! Concentration bounds for norms of sums of random vectors, and the
//! golden-ratio two-point law that drives them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chernoff::BoundError;
use crate::expr::{Expr, ExprError};
use crate::model::InequalityResult;
use crate::search::{golden_section, grid_scan};

pub const PHI: f64 = 1.618_033_988_749_894_8;
const SQRT5: f64 = 2.236_067_977_499_79;

/// The zero-mean law with `Pr{Z = phi} = 1/(sqrt5 phi)` and
/// `Pr{Z = -1/phi} = phi/sqrt5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoldenDistribution {
    pub phi: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub value_plus: f64,
    pub value_minus: f64,
}

impl Default for GoldenDistribution {
    fn default() -> Self {
        Self {
            phi: PHI,
            p_plus: 1.0 / (SQRT5 * PHI),
            p_minus: PHI / SQRT5,
            value_plus: PHI,
            value_minus: -1.0 / PHI,
        }
    }
}

impl GoldenDistribution {
    /// `(L_Z, U_Z)`, the support endpoints.
    pub fn range(&self) -> (f64, f64) {
        (self.value_minus, self.value_plus)
    }

    /// `E[Z^k]` by direct summation over the two atoms.
    pub fn moment(&self, k: u32) -> f64 {
        let k = k as i32;
        self.p_plus * self.value_plus.powi(k) + self.p_minus * self.value_minus.powi(k)
    }
}

/// `E[Z^k] = (phi^(k-1) + (-1)^k phi^(1-k)) / sqrt5`.
pub fn golden_moment(k: u32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let k = k as i32;
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    (PHI.powi(k - 1) + sign * PHI.powi(1 - k)) / SQRT5
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn require(ok: bool, what: impl FnOnce() -> String) -> Result<(), BoundError> {
    if ok {
        Ok(())
    } else {
        Err(BoundError::ParamOutOfRange(what()))
    }
}

fn from_log(log_bound: f64, zeta: Option<f64>, n: u64) -> InequalityResult {
    InequalityResult::new(log_bound.exp(), zeta, log_bound / n as f64)
}

const MGF_GRID: usize = 64;

/// `5^(-n/2) inf_{0<t<tau} h(t, eps, n)` where `g` is the MGF of `||X||`
/// (an expression in `s`). `zeta` reports the minimizing `t`.
pub fn mgf_vector_bound(g: &Expr, tau: f64, eps: f64, n: u64) -> Result<InequalityResult, BoundError> {
    if !(tau > 0.0) {
        return Err(BoundError::TauNonpositive(tau));
    }
    require(eps > 0.0, || format!("eps = {eps} must be positive"))?;
    require(n >= 1, || "n must be at least 1".into())?;
    let nf = n as f64;
    let gs = |s: f64| g.eval(&[s]);
    // both brackets are divided by sqrt5 so they tend to 1 as t -> 0
    let log_h = |t: f64| -> Result<f64, ExprError> {
        let up = (gs(PHI * t)? / PHI + PHI * gs(-t / PHI)?) / SQRT5;
        let down = (gs(-PHI * t)? / PHI + PHI * gs(t / PHI)?) / SQRT5;
        if !(up > 0.0 && down > 0.0) {
            return Err(ExprError::Domain {
                subtree: g.render(),
                message: format!("moment generating function is not positive near t = {t}"),
            });
        }
        Ok(-nf * t * eps + ln_add_exp(nf * up.ln(), nf * down.ln()))
    };
    let lo = tau * 1e-12;
    let hi = tau * (1.0 - 1e-12);
    let (scan, bl, bh) = grid_scan(log_h, lo, hi, MGF_GRID)?;
    let mut best = golden_section(log_h, lo, hi, 1e-12, 400)?;
    if scan.value < best.value - 1e-9 {
        // the function is not unimodal numerically; polish around the grid point
        best = golden_section(log_h, bl.max(lo), bh.min(hi), 1e-12, 400)?;
        if scan.value < best.value {
            best.x = scan.x;
            best.value = scan.value;
        }
    }
    Ok(from_log(best.value, Some(best.x), n))
}

/// `2 exp(-2 n eps^2 / (5 V))` for independent zero-mean vectors with
/// `V` the mean squared radius (or diameter).
pub fn iid_bounded_bound(v: f64, n: u64, eps: f64) -> Result<InequalityResult, BoundError> {
    require(v > 0.0 && v.is_finite(), || format!("V = {v} must be positive"))?;
    require(n >= 1, || "n must be at least 1".into())?;
    require(eps > 0.0, || format!("eps = {eps} must be positive"))?;
    let log_bound = 2f64.ln() - 2.0 * n as f64 * eps * eps / (5.0 * v);
    Ok(from_log(log_bound, None, n))
}

/// Mean of squares, the `V` of [`iid_bounded_bound`], from per-sample
/// radii or support diameters.
pub fn mean_square(values: &[f64]) -> Result<f64, BoundError> {
    require(!values.is_empty(), || "at least one radius is required".into())?;
    require(values.iter().all(|r| *r > 0.0 && r.is_finite()), || {
        "radii and diameters must be positive".into()
    })?;
    Ok(values.iter().map(|r| r * r).sum::<f64>() / values.len() as f64)
}

/// `Pr{||X_n - X_0|| >= eps} <= 2 exp(-2 eps^2 / (5 sum c_k^2))` for a
/// martingale with increments bounded by `c_k`.
pub fn martingale_bound(increments: &[f64], eps: f64) -> Result<InequalityResult, BoundError> {
    let v = mean_square(increments)?;
    let n = increments.len() as u64;
    iid_bounded_bound(v, n, eps / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentBounds {
    /// `|x_i| <= r_i` with `E||X||^2 <= sigma2`.
    Radii { radii: Vec<f64>, sigma2: f64 },
    /// `a_i <= x_i <= b_i`; `sigma2 = sum |a_i b_i|`.
    Ranges { ranges: Vec<(f64, f64)> },
}

/// `exp(-2 (eps^2 - sigma^2)^2 / denom)` for vectors with independent
/// bounded components.
pub fn componentwise_tail(spec: &ComponentBounds, eps: f64) -> Result<InequalityResult, BoundError> {
    let (sigma2, denom) = match spec {
        ComponentBounds::Radii { radii, sigma2 } => {
            require(!radii.is_empty() && radii.iter().all(|r| *r > 0.0), || {
                "radii must be positive".into()
            })?;
            require(*sigma2 >= 0.0, || format!("sigma2 = {sigma2} must be nonnegative"))?;
            (*sigma2, radii.iter().map(|r| r.powi(4)).sum::<f64>())
        }
        ComponentBounds::Ranges { ranges } => {
            require(!ranges.is_empty() && ranges.iter().all(|(a, b)| a <= &0.0 && b >= &0.0 && a < b), || {
                "each range must satisfy a <= 0 <= b with a < b".into()
            })?;
            (
                ranges.iter().map(|(a, b)| (a * b).abs()).sum::<f64>(),
                ranges.iter().map(|(a, b)| (b - a).powi(4)).sum::<f64>(),
            )
        }
    };
    let sigma = sigma2.sqrt();
    if !(eps > sigma) {
        return Err(BoundError::EpsNotAboveSigma { sigma });
    }
    let gap = eps * eps - sigma2;
    let rate = -2.0 * gap * gap / denom;
    Ok(InequalityResult::new(rate.exp(), None, rate))
}

/// The four nested bounds for vectors with `||X_i|| <= r` and average
/// second moment `sigma^2`, tightest first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRangeBound {
    /// The optimized two-term MGF expression; `zeta` holds the minimizing `t`.
    pub tier1: InequalityResult,
    pub tier2: InequalityResult,
    /// `tier2` with `(1 - eps/(phi r))` factor replaced by `exp(phi r eps)`.
    pub tier2_relaxed: InequalityResult,
    /// Bernstein form `2 exp(-n eps^2 / (2 (sigma^2 + phi r eps / 3)))`.
    pub tier3: InequalityResult,
    /// Set when `eps > r`, where the probability is exactly zero.
    pub beyond_range: bool,
}

pub fn variance_range_bound(sigma: f64, r: f64, n: u64, eps: f64) -> Result<VarianceRangeBound, BoundError> {
    require(sigma >= 0.0 && sigma.is_finite(), || format!("sigma = {sigma} must be nonnegative"))?;
    require(r > 0.0 && r.is_finite(), || format!("r = {r} must be positive"))?;
    require(n >= 1, || "n must be at least 1".into())?;
    require(eps > 0.0, || format!("eps = {eps} must be positive"))?;
    if eps > r {
        let zero = InequalityResult::new(0.0, None, f64::NEG_INFINITY);
        return Ok(VarianceRangeBound {
            tier1: zero,
            tier2: zero,
            tier2_relaxed: zero,
            tier3: zero,
            beyond_range: true,
        });
    }
    let nf = n as f64;
    let s2 = sigma * sigma;
    let pr = PHI * r;
    let ln2 = 2f64.ln();

    let tier1 = if s2 == 0.0 {
        // both brackets equal 1 and the exponential prefactor drives the inf to 0
        InequalityResult::new(0.0, Some(f64::INFINITY), f64::NEG_INFINITY)
    } else {
        let w_a = s2 / (s2 + pr * pr);
        let w_b = PHI * PHI * s2 / (r * r + PHI * PHI * s2);
        let log_bracket = |t: f64| {
            let a = ln_add_exp((1.0 - w_a).ln() - t * s2 / pr, w_a.ln() + t * pr);
            let b = ln_add_exp((1.0 - w_b).ln() - t * PHI * s2 / r, w_b.ln() + t * r / PHI);
            -nf * t * eps + ln_add_exp(nf * a, nf * b)
        };
        // unimodal in log t; scan decades then polish
        let on_log = |u: f64| Ok::<f64, std::convert::Infallible>(log_bracket(u.exp()));
        let (lo_u, hi_u) = ((1e-9 / r).ln(), (1e4 / r).ln());
        let (_, bl, bh) = grid_scan(on_log, lo_u, hi_u, 160).unwrap_or_else(|e| match e {});
        let m = golden_section(on_log, bl, bh, 1e-13, 400).unwrap_or_else(|e| match e {});
        from_log(m.value, Some(m.x.exp()), n)
    };

    let q = s2 + pr * eps;
    let tier2_log = if s2 == 0.0 {
        f64::NEG_INFINITY
    } else {
        ln2 + nf / (s2 + pr * pr) * (q * (s2 / q).ln() + (pr * eps - pr * pr) * (1.0 - eps / pr).ln())
    };
    let tier2_relaxed_log = if s2 == 0.0 {
        f64::NEG_INFINITY
    } else {
        ln2 + nf / (pr * pr) * (q * (s2 / q).ln() + pr * eps)
    };
    let tier3_log = ln2 - nf * eps * eps / (2.0 * (s2 + pr * eps / 3.0));
    Ok(VarianceRangeBound {
        tier1,
        tier2: from_log(tier2_log, None, n),
        tier2_relaxed: from_log(tier2_relaxed_log, None, n),
        tier3: from_log(tier3_log, None, n),
        beyond_range: false,
    })
}

/// `2 exp(-(x^2/2)(1 - x phi c_n / 2))` for the maximal partial sum
/// exceeding `x s_n`.
pub fn small_deviation_bound(c_n: f64, x: f64) -> Result<InequalityResult, BoundError> {
    require(c_n > 0.0 && c_n.is_finite(), || format!("c_n = {c_n} must be positive"))?;
    let limit = 1.0 / (PHI * c_n);
    if !(x > 0.0 && x < limit) {
        return Err(BoundError::XOutOfRange { x, limit });
    }
    let exponent = -(x * x / 2.0) * (1.0 - x * PHI * c_n / 2.0);
    Ok(InequalityResult::new(2.0 * exponent.exp(), None, exponent))
}

/// Support `||A X + b|| <= c` with mean `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidSpec {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
    pub mu: DVector<f64>,
}

impl EllipsoidSpec {
    /// Builds the spec from row-major `a`.
    pub fn from_rows(a: &[Vec<f64>], b: Vec<f64>, c: f64, mu: Vec<f64>) -> Result<Self, BoundError> {
        let d = a.len();
        if d == 0 || a.iter().any(|r| r.len() != d) || b.len() != d || mu.len() != d {
            return Err(BoundError::ParamOutOfRange(format!(
                "A must be square and match b and mu (A has {d} rows, b {}, mu {})",
                b.len(),
                mu.len()
            )));
        }
        Ok(Self {
            a: DMatrix::from_fn(d, d, |i, j| a[i][j]),
            b: DVector::from_vec(b),
            c,
            mu: DVector::from_vec(mu),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvelopeSpec {
    Diameter(f64),
    Ellipsoid(EllipsoidSpec),
}

/// Bounds on `||X - mu||` and `E||X - mu||^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEnvelope {
    pub norm_bound: f64,
    pub second_moment_bound: f64,
}

const CONDITION_LIMIT: f64 = 1e12;

/// Largest singular value by power iteration on `M^T M`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let n = gram.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for i in 0..200 {
        let mut w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            // started in the null space; perturb deterministically
            if i == 0 {
                v = DVector::from_fn(n, |j, _| (j + 1) as f64);
                v /= v.norm();
                continue;
            }
            return 0.0;
        }
        w /= norm;
        let next = w.dot(&(&gram * &w));
        let done = (next - lambda).abs() <= 1e-10 * next.abs();
        lambda = next;
        v = w;
        if done {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

pub fn moment_envelope(spec: &EnvelopeSpec) -> Result<MomentEnvelope, BoundError> {
    match spec {
        EnvelopeSpec::Diameter(d) => {
            require(*d > 0.0 && d.is_finite(), || format!("diameter {d} must be positive"))?;
            Ok(MomentEnvelope {
                norm_bound: *d,
                second_moment_bound: d * d / 2.0,
            })
        }
        EnvelopeSpec::Ellipsoid(e) => {
            let d = e.a.nrows();
            require(e.a.is_square() && e.b.len() == d && e.mu.len() == d, || {
                "A must be square and b, mu must match its size".into()
            })?;
            require(e.c >= 0.0, || format!("c = {} must be nonnegative", e.c))?;
            let inv = e
                .a
                .clone()
                .try_inverse()
                .ok_or(BoundError::SingularA(f64::INFINITY))?;
            let inv_norm = spectral_norm(&inv);
            let condition = spectral_norm(&e.a) * inv_norm;
            if !(condition < CONDITION_LIMIT) {
                return Err(BoundError::SingularA(condition));
            }
            let offset = (&e.a * &e.mu + &e.b).norm();
            require(offset <= e.c * (1.0 + 1e-12), || {
                format!("mean violates the support: ||A mu + b|| = {offset} > c = {}", e.c)
            })?;
            Ok(MomentEnvelope {
                norm_bound: inv_norm * (e.c + offset),
                second_moment_bound: inv_norm * (e.c * e.c - offset * offset),
            })
        }
    }
}
