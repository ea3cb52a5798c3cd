//! Routh stability tests and the uncertain feedback-loop case study.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::expr::{self, Expr};
use crate::model::{BoxRegion, MomentProblem, Objective};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RouthError {
    #[error("leading coefficient is zero")]
    ZeroLeadingCoeff,
    #[error("polynomial must have degree at least 1 and finite coefficients")]
    BadPolynomial,
}

impl RouthError {
    pub fn code(&self) -> &'static str {
        match self {
            RouthError::ZeroLeadingCoeff => "ZERO_LEADING_COEFF",
            RouthError::BadPolynomial => "PARAM_OUT_OF_RANGE",
        }
    }
}

/// Coefficients from the highest degree down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, RouthError> {
        if coeffs.len() < 2 || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(RouthError::BadPolynomial);
        }
        if coeffs[0] == 0.0 {
            return Err(RouthError::ZeroLeadingCoeff);
        }
        Ok(Self { coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, c| acc * s + c)
    }

    /// Polynomial product, highest degree first.
    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial { coeffs: out }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// For quartics `{a1, a4, a1 a2 - a3, (a1 a2 - a3) a3 - a1^2 a4}` of the
    /// monic form; otherwise the first column of the Routh table below the
    /// leading entry.
    pub margins: Vec<f64>,
    pub margin_min: f64,
    /// A zero appeared in the first column.
    pub marginal: bool,
    pub first_column: Vec<f64>,
}

/// First column of the Routh array; stops early at a zero pivot.
fn routh_first_column(c: &[f64]) -> (Vec<f64>, bool) {
    let n = c.len();
    let width = n.div_ceil(2);
    let row = |start: usize| -> Vec<f64> {
        (0..width).map(|j| c.get(start + 2 * j).copied().unwrap_or(0.0)).collect()
    };
    let mut prev = row(0);
    let mut cur = row(1);
    let mut column = vec![prev[0]];
    for _ in 1..n {
        column.push(cur[0]);
        if column.len() == n {
            break;
        }
        if cur[0] == 0.0 {
            return (column, true);
        }
        let next: Vec<f64> = (0..width)
            .map(|j| {
                let a = prev.get(j + 1).copied().unwrap_or(0.0);
                let b = cur.get(j + 1).copied().unwrap_or(0.0);
                (cur[0] * a - prev[0] * b) / cur[0]
            })
            .collect();
        prev = cur;
        cur = next;
    }
    let marginal = column.iter().any(|v| *v == 0.0);
    (column, marginal)
}

pub fn routh_stable(p: &Polynomial) -> Result<StabilityReport, RouthError> {
    let p = Polynomial::new(p.coeffs.clone())?;
    let lead = p.coeffs[0];
    let monic: Vec<f64> = p.coeffs.iter().map(|c| c / lead).collect();
    let (first_column, marginal) = routh_first_column(&monic);
    let margins = if p.degree() == 4 {
        quartic_margins(monic[1], monic[2], monic[3], monic[4]).to_vec()
    } else {
        first_column[1..].to_vec()
    };
    let margin_min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let column_positive = first_column.len() == monic.len() && first_column.iter().all(|v| *v > 0.0);
    let stable = !marginal && column_positive && margin_min > 0.0;
    Ok(StabilityReport {
        stable,
        margins,
        margin_min,
        marginal,
        first_column,
    })
}

/// Positivity conditions of `s^4 + a1 s^3 + a2 s^2 + a3 s + a4`.
pub fn quartic_margins(a1: f64, a2: f64, a3: f64, a4: f64) -> [f64; 4] {
    let m2 = a1 * a2 - a3;
    [a1, a4, m2, m2 * a3 - a1 * a1 * a4]
}

/// Coefficients of the closed-loop characteristic polynomial for the plant
/// with gain, pole and pole perturbations `eta`.
pub fn plant_coefficients(eta: [f64; 3]) -> [f64; 4] {
    let [e1, e2, e3] = eta;
    let p2 = 4.0 + 0.2 * e2;
    let p3 = 6.0 + 0.3 * e3;
    let gain = 800.0 * (1.0 + 0.1 * e1);
    [
        20.0 + 0.2 * e2 + 0.3 * e3,
        p2 * p3 + 10.0 * (10.0 + 0.2 * e2 + 0.3 * e3),
        10.0 * p2 * p3 + gain,
        1600.0 * (1.0 + 0.1 * e1),
    ]
}

/// `h(eta)`, the smallest quartic margin; the loop is stable iff `h > 0`.
pub fn plant_margin(eta: [f64; 3]) -> f64 {
    let [a1, a2, a3, a4] = plant_coefficients(eta);
    quartic_margins(a1, a2, a3, a4)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

pub const PLANT_PERTURBATION: f64 = 0.16;
pub const PLANT_MEAN_LIMIT: f64 = 0.05;

/// Sparse polynomial in three variables, used to expand the margins into
/// the expression language.
#[derive(Debug, Clone, PartialEq, Default)]
struct Poly3 {
    terms: BTreeMap<[u32; 3], f64>,
}

impl Poly3 {
    fn constant(c: f64) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert([0, 0, 0], c);
        Self { terms }
    }

    fn linear(c: f64, coeffs: [f64; 3]) -> Self {
        let mut p = Self::constant(c);
        for (i, a) in coeffs.into_iter().enumerate() {
            if a != 0.0 {
                let mut e = [0; 3];
                e[i] = 1;
                p.terms.insert(e, a);
            }
        }
        p
    }

    fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &o.terms {
            *out.terms.entry(*e).or_insert(0.0) += c;
        }
        out
    }

    fn scale(&self, k: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|(e, c)| (*e, c * k)).collect(),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    fn mul(&self, o: &Self) -> Self {
        let mut out = Self::default();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &o.terms {
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
                *out.terms.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        out
    }

    fn render(&self) -> String {
        let mut s = String::new();
        // key order puts the constant term first
        for (e, c) in &self.terms {
            if *c == 0.0 {
                continue;
            }
            let mut monomial = String::new();
            for (i, p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(monomial, "*x{}", i + 1).unwrap(),
                    _ => write!(monomial, "*x{}^{}", i + 1, p).unwrap(),
                }
            }
            if s.is_empty() {
                if *c < 0.0 {
                    s.push('-');
                }
            } else {
                s.push_str(if *c < 0.0 { " - " } else { " + " });
            }
            write!(s, "{:?}{}", c.abs(), monomial).unwrap();
        }
        if s.is_empty() {
            s.push('0');
        }
        s
    }
}

fn plant_margin_polys() -> [Poly3; 4] {
    let p2 = Poly3::linear(4.0, [0.0, 0.2, 0.0]);
    let p3 = Poly3::linear(6.0, [0.0, 0.0, 0.3]);
    let a1 = Poly3::linear(20.0, [0.0, 0.2, 0.3]);
    let a2 = p2.mul(&p3).add(&Poly3::linear(100.0, [0.0, 2.0, 3.0]));
    let a3 = p2.mul(&p3).scale(10.0).add(&Poly3::linear(800.0, [80.0, 0.0, 0.0]));
    let a4 = Poly3::linear(1600.0, [160.0, 0.0, 0.0]);
    let m2 = a1.mul(&a2).sub(&a3);
    let m4 = m2.mul(&a3).sub(&a1.mul(&a1).mul(&a4));
    [a1, a4, m2, m4]
}

/// `h(eta)` written in the expression language over `x1, x2, x3`, with each
/// margin fully expanded.
pub fn plant_margin_expression() -> String {
    let parts: Vec<String> = plant_margin_polys().iter().map(Poly3::render).collect();
    format!("min({})", parts.join(", "))
}

/// Worst-case instability probability of the loop: support
/// `|eta_i| <= 0.16`, means `|E eta_i| <= 0.05`, event `h(eta) <= 0`.
pub fn build_stability_problem() -> MomentProblem {
    let domain = BoxRegion::cube(3, -PLANT_PERTURBATION, PLANT_PERTURBATION).expect("valid box");
    let moment_set = BoxRegion::cube(3, -PLANT_MEAN_LIMIT, PLANT_MEAN_LIMIT).expect("valid box");
    let moment_map = (1..=3)
        .map(|i| expr::parse(&format!("x{i}"), 3).expect("identity moment"))
        .collect();
    let event: Expr = expr::parse(&plant_margin_expression(), 3).expect("generated expression parses");
    MomentProblem {
        domain,
        moment_map,
        moment_set,
        event,
        objective: Objective::IndicatorOfEvent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_problem;
    use crate::oracle::constructed_quartic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poly(c: &[f64]) -> Polynomial {
        Polynomial::new(c.to_vec()).unwrap()
    }

    #[test]
    fn routh_examples() {
        assert!(routh_stable(&poly(&[1.0, 4.0, 6.0, 4.0, 1.0])).unwrap().stable);
        let r = routh_stable(&poly(&[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        assert!(!r.stable);
        assert_eq!(r.margins[3], -12.0);
        let r = routh_stable(&poly(&[1.0, 20.0, 124.0, 1040.0, 1600.0])).unwrap();
        assert!(r.stable);
        assert_eq!(r.margins, vec![20.0, 1600.0, 1440.0, 857_600.0]);
        assert_eq!(
            routh_stable(&Polynomial { coeffs: vec![0.0, 1.0] }).unwrap_err().code(),
            "ZERO_LEADING_COEFF"
        );
    }

    #[test]
    fn marginal_and_general_degree() {
        // s^3 + s^2 + s + 1 has roots on the imaginary axis
        let r = routh_stable(&poly(&[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert!(!r.stable && r.marginal);
        assert!(routh_stable(&poly(&[2.0, 3.0])).unwrap().stable);
        assert!(!routh_stable(&poly(&[-2.0, 3.0])).unwrap().stable);
        // (s+1)(s+2)(s+3)(s+4)(s+5)
        let p = [1.0, 2.0, 3.0, 4.0, 5.0]
            .iter()
            .fold(Polynomial { coeffs: vec![1.0] }, |acc, r| acc.mul(&poly(&[1.0, *r])));
        assert!(routh_stable(&p).unwrap().stable);
        let q = p.mul(&poly(&[1.0, -0.5]));
        assert!(!routh_stable(&q).unwrap().stable);
    }

    #[test]
    fn nominal_plant() {
        assert_eq!(plant_coefficients([0.0; 3]), [20.0, 124.0, 1040.0, 1600.0]);
        assert_eq!(plant_margin([0.0; 3]), 20.0);
        let a = plant_coefficients([0.0, -0.16, -0.16]);
        assert!((a[0] - 19.92).abs() < 1e-12);
        let a = plant_coefficients([-0.16, 0.0, 0.0]);
        assert!((a[3] - 1574.4).abs() < 1e-9);
    }

    #[test]
    fn stability_problem_is_consistent() {
        let p = validate_problem(build_stability_problem()).unwrap();
        assert_eq!(p.event.eval(&[0.0, 0.0, 0.0]).unwrap(), 20.0);
        let range = p.event.eval_interval(&p.domain).unwrap();
        assert!(range.lo < 20.0 && 20.0 < range.hi);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let eta = [0; 3].map(|_: i32| rng.gen_range(-0.16..=0.16));
            let direct = plant_margin(eta);
            let via_expr = p.event.eval(&eta).unwrap();
            assert!((direct - via_expr).abs() <= 1e-9 * direct.abs().max(1.0), "{eta:?}");
        }
    }

    #[test]
    fn margin_is_lipschitz_at_every_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut fitted = Vec::new();
        for scale in [1e-2, 1e-4, 1e-6] {
            let mut l: f64 = 0.0;
            for _ in 0..2000 {
                let eta = [0; 3].map(|_: i32| rng.gen_range(-0.15..0.15));
                let dir = [0; 3].map(|_: i32| rng.gen_range(-1.0..1.0) * scale);
                let other = [eta[0] + dir[0], eta[1] + dir[1], eta[2] + dir[2]];
                let dist = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
                l = l.max((plant_margin(eta) - plant_margin(other)).abs() / dist);
            }
            fitted.push(l);
        }
        let max = fitted.iter().copied().fold(0.0, f64::max);
        let min = fitted.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(max <= 1.5 * min, "{fitted:?}");
    }

    #[test]
    fn agrees_with_constructed_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut checked = 0;
        while checked < 500 {
            let (p, truth) = constructed_quartic(&mut rng, 0.05);
            let r = routh_stable(&p).unwrap();
            if r.margins.iter().any(|m| m.abs() < 1e-9) {
                continue;
            }
            assert_eq!(r.stable, truth, "{:?} {:?}", p.coeffs, r);
            checked += 1;
        }
    }
}
