//! Uniform exponential inequalities for sums of independent variables.
//!
//! Every bound here controls the probability that the path `S_n` ever
//! crosses the curved boundary `m*theta + (n - m) * phi(zeta)/zeta` (upper
//! deviations, `zeta > 0`), not only the fixed-time event `S_m >= m*theta`.
//! The generic engine [`chernoff_inf`] minimizes `phi(s) - eps*s` for any
//! convex cumulant bound `phi`; the closed forms below are its
//! specializations for bounded, bounded-variance, normal and Poisson
//! increments.

use serde::{Deserialize, Serialize};

use crate::expr::{Expr, ExprError};
use crate::model::InequalityResult;
use crate::search::{bisect_sign, golden_section};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundError {
    #[error("eps = {eps} outside the admissible range ({lo}, {hi})")]
    EpsOutOfRange { eps: f64, lo: f64, hi: f64 },
    #[error("cumulant bound is not convex near s = {at}")]
    NonconvexPhi { at: f64 },
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
    #[error("eps must exceed sqrt(sigma^2) = {sigma}")]
    EpsNotAboveSigma { sigma: f64 },
    #[error("x = {x} outside (0, {limit})")]
    XOutOfRange { x: f64, limit: f64 },
    #[error("tau must be positive, got {0}")]
    TauNonpositive(f64),
    #[error("matrix is singular or badly conditioned (condition estimate {0:e})")]
    SingularA(f64),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

impl BoundError {
    pub fn code(&self) -> &'static str {
        match self {
            BoundError::EpsOutOfRange { .. } => "EPS_OUT_OF_RANGE",
            BoundError::NonconvexPhi { .. } => "NONCONVEX_PHI",
            BoundError::ParamOutOfRange(_) => "PARAM_OUT_OF_RANGE",
            BoundError::EpsNotAboveSigma { .. } => "EPS_NOT_ABOVE_SIGMA",
            BoundError::XOutOfRange { .. } => "X_OUT_OF_RANGE",
            BoundError::TauNonpositive(_) => "TAU_NONPOSITIVE",
            BoundError::SingularA(_) => "SINGULAR_A",
            BoundError::Expr(e) => e.code(),
        }
    }
}

fn param(ok: bool, what: impl FnOnce() -> String) -> Result<(), BoundError> {
    if ok {
        Ok(())
    } else {
        Err(BoundError::ParamOutOfRange(what()))
    }
}

/// `phi(s)` bounding the log-MGF of one increment on the open interval
/// `(lower, upper)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantSpec {
    pub phi: Expr,
    pub lower: f64,
    pub upper: f64,
}

const CONVEXITY_GRID: usize = 257;
const EDGE_SHRINK: f64 = 1e-9;

impl CumulantSpec {
    /// Parses `phi` in the variable `s` and checks convexity on a grid.
    pub fn new(phi: &str, lower: f64, upper: f64) -> Result<Self, BoundError> {
        let phi = Expr::parse_with(phi, &["s"])?;
        Self::from_expr(phi, lower, upper)
    }

    pub fn from_expr(phi: Expr, lower: f64, upper: f64) -> Result<Self, BoundError> {
        param(lower.is_finite() && upper.is_finite() && lower < upper, || {
            format!("cumulant domain ({lower}, {upper}) must be a finite nonempty interval")
        })?;
        param(lower <= 0.0 && upper > 0.0, || {
            format!("cumulant domain ({lower}, {upper}) must contain (0, upper)")
        })?;
        let spec = Self { phi, lower, upper };
        spec.check_convex()?;
        Ok(spec)
    }

    pub fn phi(&self, s: f64) -> Result<f64, ExprError> {
        self.phi.eval(&[s])
    }

    fn shrunk(&self) -> (f64, f64) {
        let delta = EDGE_SHRINK * (self.upper - self.lower);
        (self.lower + delta, self.upper - delta)
    }

    fn check_convex(&self) -> Result<(), BoundError> {
        let (lo, hi) = self.shrunk();
        let h = (hi - lo) / (CONVEXITY_GRID - 1) as f64;
        let values: Vec<f64> = (0..CONVEXITY_GRID)
            .map(|i| self.phi(lo + h * i as f64))
            .collect::<Result<_, _>>()?;
        for i in 1..CONVEXITY_GRID - 1 {
            let second = values[i - 1] - 2.0 * values[i] + values[i + 1];
            let scale = values[i].abs().max(1.0);
            if second < -1e-8 * scale {
                return Err(BoundError::NonconvexPhi {
                    at: lo + h * i as f64,
                });
            }
        }
        Ok(())
    }

    /// `(lim_{s->lower} phi(s)/s, lim_{s->upper} phi(s)/s)` at the shrunk edges.
    pub fn admissible_range(&self) -> Result<(f64, f64), ExprError> {
        let (lo, hi) = self.shrunk();
        Ok((self.phi(lo)? / lo, self.phi(hi)? / hi))
    }

    fn derivative(&self, s: f64, lo: f64, hi: f64) -> Result<f64, ExprError> {
        let mut h = 1e-5 * s.abs().max(1.0);
        h = h.min(0.5 * (s - lo)).min(0.5 * (hi - s));
        if h <= 0.0 {
            h = f64::EPSILON * s.abs().max(1.0);
        }
        Ok((self.phi(s + h)? - self.phi(s - h)?) / (2.0 * h))
    }
}

/// Minimizer of `phi(s) - eps*s` with the boundary-slope quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernoffInfimum {
    pub zeta: f64,
    pub phi_zeta: f64,
    /// `phi(zeta) - eps*zeta`.
    pub rate: f64,
    /// `phi(zeta)/zeta`, the slope of the crossing boundary.
    pub ratio_phi_zeta: f64,
}

impl ChernoffInfimum {
    /// Bound for `m` samples: `exp(m * rate)`.
    pub fn for_samples(&self, m: u64) -> InequalityResult {
        let rate = self.rate;
        InequalityResult::new((m as f64 * rate).exp(), Some(self.zeta), rate)
    }
}

/// `inf_s exp(phi(s) - eps*s)` over the cumulant domain.
pub fn chernoff_inf(c: &CumulantSpec, eps: f64) -> Result<ChernoffInfimum, BoundError> {
    let (lo_slope, hi_slope) = c.admissible_range()?;
    if !(eps > lo_slope && eps < hi_slope) {
        return Err(BoundError::EpsOutOfRange {
            eps,
            lo: lo_slope,
            hi: hi_slope,
        });
    }
    let (lo, hi) = c.shrunk();
    let psi = |s: f64| -> Result<f64, ExprError> { Ok(c.phi(s)? - eps * s) };
    let coarse = golden_section(psi, lo, hi, 1e-12, 400)?;

    // refine on the sign of psi'(s) = phi'(s) - eps
    let dpsi = |s: f64| -> Result<f64, ExprError> { Ok(c.derivative(s, lo, hi)? - eps) };
    let x = coarse.x;
    let mut width = 1e-4 * x.abs().max(1.0);
    let mut left = (x - width).max(lo);
    let mut right = (x + width).min(hi);
    for _ in 0..200 {
        let l_ok = left <= lo || dpsi(left)? < 0.0;
        let r_ok = right >= hi || dpsi(right)? > 0.0;
        if l_ok && r_ok {
            break;
        }
        width *= 2.0;
        if !l_ok {
            left = (x - width).max(lo);
        }
        if !r_ok {
            right = (x + width).min(hi);
        }
    }
    let refined = bisect_sign(dpsi, left, right, 1e-12, 200)?;
    // the objective is flat near its minimum, so ties within rounding go to
    // the root of the derivative
    let (zeta, rate) = {
        let r = psi(refined)?;
        let slack = 8.0 * f64::EPSILON * (1.0 + r.abs().max(c.phi(refined)?.abs()));
        if r <= coarse.value + slack {
            (refined, r)
        } else {
            (coarse.x, coarse.value)
        }
    };
    let phi_zeta = c.phi(zeta)?;
    Ok(ChernoffInfimum {
        zeta,
        phi_zeta,
        rate,
        ratio_phi_zeta: phi_zeta / zeta,
    })
}

/// Bounded `[0, 1]` increments with average mean `mu_bar`.
pub fn uniform_bound_bernoulli(mu_bar: f64, theta: f64, m: u64) -> Result<InequalityResult, BoundError> {
    param(mu_bar > 0.0 && mu_bar < 1.0, || format!("mu_bar = {mu_bar} not in (0, 1)"))?;
    param(theta > 0.0 && theta < 1.0, || format!("theta = {theta} not in (0, 1)"))?;
    param(m >= 1, || "m must be at least 1".into())?;
    let rate = theta * (mu_bar / theta).ln() + (1.0 - theta) * ((1.0 - mu_bar) / (1.0 - theta)).ln();
    let zeta = (theta * (1.0 - mu_bar) / (mu_bar * (1.0 - theta))).ln();
    Ok(InequalityResult::new((m as f64 * rate).exp(), Some(zeta), rate))
}

/// Zero-mean increments bounded above by `b` with average variance `nu_m`.
///
/// `eps = b` is accepted and evaluated as the limit (`0^0 = 1`).
pub fn uniform_bound_bounded_variance(
    b: f64,
    nu_m: f64,
    eps: f64,
    m: u64,
) -> Result<InequalityResult, BoundError> {
    param(b > 0.0, || format!("b = {b} must be positive"))?;
    param(nu_m > 0.0, || format!("nu_m = {nu_m} must be positive"))?;
    param(eps > 0.0 && eps <= b, || format!("eps = {eps} not in (0, {b}]"))?;
    param(m >= 1, || "m must be at least 1".into())?;
    let denom = b * b + nu_m;
    let first = -(nu_m + b * eps) / denom * (b * eps / nu_m).ln_1p();
    let tail_base = 1.0 - eps / b;
    let tail_exp = (b * b - b * eps) / denom;
    let second = if tail_exp == 0.0 { 0.0 } else { -tail_exp * tail_base.ln() };
    let rate = first + second;
    let zeta = if tail_base > 0.0 {
        b / denom * ((eps * b / nu_m).ln_1p() - tail_base.ln())
    } else {
        f64::INFINITY
    };
    Ok(InequalityResult::new((m as f64 * rate).exp(), Some(zeta), rate))
}

/// Independent normal increments with average mean `mu_bar` and variance `nu_bar`.
pub fn uniform_bound_normal(mu_bar: f64, nu_bar: f64, theta: f64, m: u64) -> Result<InequalityResult, BoundError> {
    param(nu_bar > 0.0, || format!("nu_bar = {nu_bar} must be positive"))?;
    param(mu_bar.is_finite() && theta.is_finite(), || "mu_bar and theta must be finite".into())?;
    param(m >= 1, || "m must be at least 1".into())?;
    let dev = theta - mu_bar;
    let rate = -dev * dev / (2.0 * nu_bar);
    Ok(InequalityResult::new((m as f64 * rate).exp(), Some(dev / nu_bar), rate))
}

/// Independent Poisson increments with average rate `lambda_bar`.
pub fn uniform_bound_poisson(lambda_bar: f64, theta: f64, m: u64) -> Result<InequalityResult, BoundError> {
    param(lambda_bar > 0.0, || format!("lambda_bar = {lambda_bar} must be positive"))?;
    param(theta > 0.0, || format!("theta = {theta} must be positive"))?;
    param(m >= 1, || "m must be at least 1".into())?;
    let rate = theta - lambda_bar + theta * (lambda_bar / theta).ln();
    Ok(InequalityResult::new((m as f64 * rate).exp(), Some((theta / lambda_bar).ln()), rate))
}

/// Small-deviation diagnostics for one `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub epsilon: f64,
    pub zeta: f64,
    pub rate: f64,
    /// `-eps^2 / (2 sigma^2)`.
    pub gaussian_rate: f64,
    /// `gaussian_rate + nu eps^3 / (6 sigma^6)`.
    pub skew_corrected_rate: f64,
    pub ratio_phi_zeta: f64,
    pub sigma2: f64,
    pub nu: f64,
}

pub fn asymptotic_check(
    c: &CumulantSpec,
    sigma2: f64,
    nu: f64,
    eps_list: &[f64],
) -> Result<Vec<AsymptoticReport>, BoundError> {
    param(sigma2 > 0.0, || format!("sigma2 = {sigma2} must be positive"))?;
    eps_list
        .iter()
        .map(|&eps| {
            let inf = chernoff_inf(c, eps)?;
            let gaussian_rate = -eps * eps / (2.0 * sigma2);
            Ok(AsymptoticReport {
                epsilon: eps,
                zeta: inf.zeta,
                rate: inf.rate,
                gaussian_rate,
                skew_corrected_rate: gaussian_rate + nu * eps.powi(3) / (6.0 * sigma2.powi(3)),
                ratio_phi_zeta: inf.ratio_phi_zeta,
                sigma2,
                nu,
            })
        })
        .collect()
}

/// Cumulant bound of a `[0, 1]` variable with mean `mu`: `ln(mu e^s + 1 - mu)`.
pub fn bernoulli_cumulant(mu: f64, half_width: f64) -> Result<CumulantSpec, BoundError> {
    CumulantSpec::new(
        &format!("ln({mu:?} * exp(s) + {:?})", 1.0 - mu),
        -half_width,
        half_width,
    )
}

/// Cumulant bound of zero-mean increments `<= b` with variance `nu`.
pub fn bounded_variance_cumulant(b: f64, nu: f64, half_width: f64) -> Result<CumulantSpec, BoundError> {
    let d = b * b + nu;
    CumulantSpec::new(
        &format!(
            "ln({:?} * exp({:?} * s) + {:?} * exp({b:?} * s))",
            b * b / d,
            -nu / b,
            nu / d
        ),
        -half_width,
        half_width,
    )
}

pub fn normal_cumulant(mu: f64, nu: f64, half_width: f64) -> Result<CumulantSpec, BoundError> {
    CumulantSpec::new(&format!("{mu:?} * s + {:?} * s^2", nu / 2.0), -half_width, half_width)
}

pub fn poisson_cumulant(lambda: f64, half_width: f64) -> Result<CumulantSpec, BoundError> {
    CumulantSpec::new(&format!("{lambda:?} * (exp(s) - 1)"), -half_width, half_width)
}

/// `ln cosh(s/2)`, the centered fair coin on `{-1/2, 1/2}`.
pub fn centered_coin_cumulant(half_width: f64) -> Result<CumulantSpec, BoundError> {
    CumulantSpec::new("ln(0.5 * exp(0.5 * s) + 0.5 * exp(-0.5 * s))", -half_width, half_width)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn quadratic_cumulant() {
        let c = CumulantSpec::new("s^2 / 2", -10.0, 10.0).unwrap();
        let r = chernoff_inf(&c, 1.0).unwrap();
        assert!(close(r.zeta, 1.0, 1e-9), "{}", r.zeta);
        assert!(close(r.for_samples(1).bound, (-0.5f64).exp(), 1e-12));
        assert!(close(r.ratio_phi_zeta, 0.5, 1e-9));
    }

    #[test]
    fn bernoulli_cumulant_matches_closed_form_value() {
        let c = CumulantSpec::new("ln(0.5*exp(s) + 0.5)", -10.0, 10.0).unwrap();
        let r = chernoff_inf(&c, 0.6).unwrap();
        assert!(close(r.zeta, 1.5f64.ln(), 1e-8));
        // 30-digit evaluation of the closed form
        assert!(close(r.for_samples(1).bound, 0.980_065_852_103_894_7, 1e-12));
    }

    #[test]
    fn poisson_cumulant_value() {
        let c = CumulantSpec::new("exp(s) - 1", -10.0, 10.0).unwrap();
        let r = chernoff_inf(&c, 2.0).unwrap();
        assert!(close(r.zeta, 2f64.ln(), 1e-8));
        assert!(close(r.for_samples(1).bound, 0.679_570_457_114_761_3, 1e-12));
    }

    #[test]
    fn eps_and_convexity_errors() {
        let c = CumulantSpec::new("s^2 / 2", -10.0, 10.0).unwrap();
        assert_eq!(chernoff_inf(&c, 6.0).unwrap_err().code(), "EPS_OUT_OF_RANGE");
        assert_eq!(
            CumulantSpec::new("-s^2", -1.0, 1.0).unwrap_err().code(),
            "NONCONVEX_PHI"
        );
        assert_eq!(CumulantSpec::new("s", 1.0, 2.0).unwrap_err().code(), "PARAM_OUT_OF_RANGE");
    }

    #[test]
    fn bernoulli_closed_form() {
        let r = uniform_bound_bernoulli(0.5, 0.5, 7).unwrap();
        assert_eq!(r.bound, 1.0);
        assert_eq!(r.zeta, Some(0.0));
        let r = uniform_bound_bernoulli(0.5, 0.6, 10).unwrap();
        assert!(close(r.bound, 0.817_622_013_379_844_0, 1e-12));
        assert!(close(r.zeta.unwrap(), 0.405_465_108_108_164_4, 1e-12));
        let r = uniform_bound_bernoulli(0.5, 0.9, 1).unwrap();
        assert!(close(r.bound, 0.692_072_744_230_842_9, 1e-12));
        assert_eq!(
            uniform_bound_bernoulli(0.0, 0.5, 1).unwrap_err().code(),
            "PARAM_OUT_OF_RANGE"
        );
    }

    #[test]
    fn bounded_variance_closed_form() {
        let r = uniform_bound_bounded_variance(1.0, 1.0, 0.5, 1).unwrap();
        assert!(close(r.bound, 0.877_382_675_301_661_6, 1e-12));
        assert!(close(r.zeta.unwrap(), 0.549_306_144_334_054_8, 1e-12));
        let r = uniform_bound_bounded_variance(2.0, 0.7, 1e-9, 3).unwrap();
        assert!(close(r.bound, 1.0, 1e-8));
        let r = uniform_bound_bounded_variance(1.0, 1.0, 1.0 - 1e-12, 1).unwrap();
        assert!(r.bound.is_finite() && close(r.bound, 0.5, 1e-9));
        let r = uniform_bound_bounded_variance(1.0, 1.0, 1.0, 1).unwrap();
        assert_eq!(r.bound, 0.5);
        assert!(uniform_bound_bounded_variance(1.0, 1.0, 1.5, 1).is_err());
    }

    #[test]
    fn normal_and_poisson_closed_forms() {
        let r = uniform_bound_normal(0.3, 2.0, 0.3, 5).unwrap();
        assert_eq!((r.bound, r.zeta), (1.0, Some(0.0)));
        let r = uniform_bound_normal(0.0, 1.0, 1.0, 1).unwrap();
        assert!(close(r.bound, 0.606_530_659_712_633_4, 1e-15) && r.zeta == Some(1.0));
        let r = uniform_bound_normal(0.0, 1.0, 1.0, 4).unwrap();
        assert!(close(r.bound, 0.135_335_283_236_612_7, 1e-15));
        let r = uniform_bound_poisson(1.5, 1.5, 9).unwrap();
        assert_eq!((r.bound, r.zeta), (1.0, Some(0.0)));
        let r = uniform_bound_poisson(1.0, 2.0, 1).unwrap();
        assert!(close(r.bound, 0.679_570_457_114_761_3, 1e-15));
        let r = uniform_bound_poisson(2.0, 1.0, 1).unwrap();
        assert!(close(r.bound, 0.735_758_882_342_884_6, 1e-15));
        assert!(close(r.zeta.unwrap(), -(2f64.ln()), 1e-15));
        assert!(uniform_bound_normal(0.0, 0.0, 1.0, 1).is_err());
        assert!(uniform_bound_poisson(1.0, 0.0, 1).is_err());
    }

    #[test]
    fn gaussian_cumulant_asymptotics_are_exact() {
        let sigma2 = 0.7;
        let c = CumulantSpec::new(&format!("{:?} * s^2", sigma2 / 2.0), -20.0, 20.0).unwrap();
        for r in asymptotic_check(&c, sigma2, 0.0, &[0.4, 0.1, -0.2]).unwrap() {
            assert!(close(r.zeta, r.epsilon / sigma2, 1e-9));
            assert!(close(r.ratio_phi_zeta, r.epsilon / 2.0, 1e-9));
            assert!(close(r.rate, r.gaussian_rate, 1e-14));
            assert_eq!(r.zeta.signum(), r.epsilon.signum());
        }
    }

    #[test]
    fn centered_coin_root() {
        let c = centered_coin_cumulant(20.0).unwrap();
        let r = &asymptotic_check(&c, 0.25, 0.0, &[0.05]).unwrap()[0];
        // root of tanh(zeta/2)/2 = 0.05 at 30 digits, then direct evaluation
        assert!(close(r.zeta, 0.200_670_695_462_151_2, 1e-9), "{r:?}");
        assert!(close(r.rate, -0.005_008_366_846_356_837, 1e-14));
        assert!(close(r.ratio_phi_zeta, 0.025_041_862_316_655_63, 1e-10));
        assert!(close(r.gaussian_rate, -0.005, 1e-18));
    }

    #[test]
    fn stationarity_and_slope_sandwich() {
        let specs = [
            CumulantSpec::new("ln(0.3*exp(s) + 0.7)", -15.0, 15.0).unwrap(),
            CumulantSpec::new("exp(s) - 1 - s", -5.0, 5.0).unwrap(),
            centered_coin_cumulant(30.0).unwrap(),
        ];
        for (c, eps) in specs.iter().zip([0.55, 0.8, 0.2]) {
            let r = chernoff_inf(c, eps).unwrap();
            let h = 1e-5;
            let d = (c.phi(r.zeta + h).unwrap() - c.phi(r.zeta - h).unwrap()) / (2.0 * h);
            assert!((d - eps).abs() <= 1e-6 * eps.abs().max(1.0), "{d} vs {eps}");
            assert!(r.ratio_phi_zeta >= 0.0 && r.ratio_phi_zeta <= eps);
        }
    }

    #[test]
    fn bounds_shrink_with_samples_and_deviation() {
        let mut prev = f64::INFINITY;
        for m in 1..30 {
            let b = uniform_bound_poisson(2.0, 3.0, m).unwrap().bound;
            assert!(b <= prev);
            prev = b;
        }
        let mut prev = f64::INFINITY;
        for i in 1..40 {
            let theta = 0.5 + 0.012 * i as f64;
            let b = uniform_bound_bernoulli(0.5, theta, 20).unwrap().bound;
            assert!(b <= prev);
            prev = b;
        }
        let mut prev = f64::INFINITY;
        for i in 1..40 {
            let theta = 0.5 - 0.012 * i as f64;
            let b = uniform_bound_bernoulli(0.5, theta, 20).unwrap().bound;
            assert!(b <= prev);
            prev = b;
        }
    }
}
