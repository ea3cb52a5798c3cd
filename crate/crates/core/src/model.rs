//! Problem and result types shared by the solvers, evaluators and the CLI.

use serde::{Deserialize, Serialize};

use crate::expr::{self, Expr, ExprError};

pub const SCHEMA_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("empty box: lower[{index}] = {lower} > upper[{index}] = {upper}")]
    EmptyBox { index: usize, lower: f64, upper: f64 },
    #[error("box has non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("bad expression '{text}': {source}")]
    BadExpr { text: String, source: ExprError },
    #[error("unsupported schema version '{0}'")]
    Schema(String),
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::EmptyBox { .. } => "EMPTY_BOX",
            ModelError::NonFinite { .. } => "EMPTY_BOX",
            ModelError::DimMismatch(_) => "DIM_MISMATCH",
            ModelError::BadExpr { .. } => "BAD_EXPR",
            ModelError::Schema(_) => "BAD_SCHEMA",
        }
    }
}

/// Axis-aligned box `[lower, upper]` in R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ModelError> {
        let b = Self { lower, upper };
        b.check()?;
        Ok(b)
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self, ModelError> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.lower.len() != self.upper.len() {
            return Err(ModelError::DimMismatch(format!(
                "box lower has {} entries, upper has {}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.lower.is_empty() {
            return Err(ModelError::DimMismatch("box of dimension 0".into()));
        }
        for (i, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(ModelError::NonFinite { index: i });
            }
            if lo > hi {
                return Err(ModelError::EmptyBox {
                    index: i,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo)
    }

    pub fn max_width(&self) -> f64 {
        self.widths().fold(0.0, f64::max)
    }

    /// Bisects the widest coordinate (lowest index on ties).
    pub fn bisect(&self) -> (BoxRegion, BoxRegion) {
        let mut axis = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, w) in self.widths().enumerate() {
            if w > best {
                best = w;
                axis = i;
            }
        }
        let mid = 0.5 * (self.lower[axis] + self.upper[axis]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[axis] = mid;
        right.lower[axis] = mid;
        (left, right)
    }

    /// Regular grid of `per_axis^d` sub-boxes.
    pub fn grid(&self, per_axis: usize) -> Vec<BoxRegion> {
        let d = self.dim();
        let mut out = Vec::with_capacity(per_axis.pow(d as u32));
        let mut idx = vec![0usize; d];
        loop {
            let mut lower = Vec::with_capacity(d);
            let mut upper = Vec::with_capacity(d);
            for (axis, &i) in idx.iter().enumerate() {
                let w = (self.upper[axis] - self.lower[axis]) / per_axis as f64;
                lower.push(self.lower[axis] + w * i as f64);
                upper.push(if i + 1 == per_axis {
                    self.upper[axis]
                } else {
                    self.lower[axis] + w * (i + 1) as f64
                });
            }
            out.push(BoxRegion { lower, upper });
            let mut axis = 0;
            loop {
                if axis == d {
                    return out;
                }
                idx[axis] += 1;
                if idx[axis] < per_axis {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    }

    /// Box inflated by `tol` on every side.
    pub fn inflate(&self, tol: f64) -> BoxRegion {
        BoxRegion {
            lower: self.lower.iter().map(|v| v - tol).collect(),
            upper: self.upper.iter().map(|v| v + tol).collect(),
        }
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (&lo, &hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(lo, hi);
        }
    }
}

/// What is maximized: a general expression, or the probability of the event.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Expectation(Expr),
    IndicatorOfEvent,
}

/// Support box, moment map with its admissible box, event `{event <= 0}`
/// and the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentProblem {
    pub domain: BoxRegion,
    pub moment_map: Vec<Expr>,
    pub moment_set: BoxRegion,
    pub event: Expr,
    pub objective: Objective,
}

impl MomentProblem {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn moment_count(&self) -> usize {
        self.moment_map.len()
    }

    pub fn moments_at(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.moment_map.iter().map(|f| f.eval(x)).collect()
    }

    pub fn from_document(doc: &ProblemDocument) -> Result<Self, ModelError> {
        if let Some(schema) = &doc.schema {
            if schema != SCHEMA_VERSION {
                return Err(ModelError::Schema(schema.clone()));
            }
        }
        let d = doc.domain.lower.len();
        let parse = |text: &str| {
            expr::parse(text, d).map_err(|source| ModelError::BadExpr {
                text: text.to_string(),
                source,
            })
        };
        let moment_map = doc
            .moments
            .iter()
            .map(|m| parse(m))
            .collect::<Result<Vec<_>, _>>()?;
        let event = parse(doc.event.as_deref().unwrap_or("1"))?;
        let objective = match doc.objective.trim() {
            "indicator" => Objective::IndicatorOfEvent,
            text => Objective::Expectation(parse(text)?),
        };
        validate_problem(MomentProblem {
            domain: doc.domain.clone(),
            moment_map,
            moment_set: doc.moment_set.clone(),
            event,
            objective,
        })
    }

    pub fn to_document(&self) -> ProblemDocument {
        ProblemDocument {
            schema: Some(SCHEMA_VERSION.to_string()),
            domain: self.domain.clone(),
            moments: self.moment_map.iter().map(Expr::render).collect(),
            moment_set: self.moment_set.clone(),
            event: Some(self.event.render()),
            objective: match &self.objective {
                Objective::IndicatorOfEvent => "indicator".to_string(),
                Objective::Expectation(e) => e.render(),
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ProblemLoadError> {
        let doc: ProblemDocument = serde_json::from_str(text)?;
        Ok(Self::from_document(&doc)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("problem document serializes")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProblemLoadError {
    #[error("malformed problem JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Wire form of [`MomentProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub domain: BoxRegion,
    pub moments: Vec<String>,
    pub moment_set: BoxRegion,
    /// Defaults to `"1"` (empty event) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    pub objective: String,
}

/// Checks every structural invariant and returns the problem unchanged.
pub fn validate_problem(p: MomentProblem) -> Result<MomentProblem, ModelError> {
    p.domain.check()?;
    p.moment_set.check()?;
    if p.moment_map.is_empty() {
        return Err(ModelError::DimMismatch("at least one moment function is required".into()));
    }
    if p.moment_map.len() != p.moment_set.dim() {
        return Err(ModelError::DimMismatch(format!(
            "{} moment functions but moment set has dimension {}",
            p.moment_map.len(),
            p.moment_set.dim()
        )));
    }
    let d = p.domain.dim();
    let mut exprs: Vec<&Expr> = p.moment_map.iter().collect();
    exprs.push(&p.event);
    if let Objective::Expectation(g) = &p.objective {
        exprs.push(g);
    }
    for e in exprs {
        if let Some(i) = e.max_var() {
            if i >= d {
                return Err(ModelError::BadExpr {
                    text: e.render(),
                    source: ExprError::Dimension {
                        index: i + 1,
                        available: d,
                    },
                });
            }
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    #[serde(rename = "x")]
    pub location: Vec<f64>,
    #[serde(rename = "w")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub points: Vec<SupportPoint>,
}

impl DiscreteDistribution {
    pub fn point_mass(x: Vec<f64>) -> Self {
        Self {
            points: vec![SupportPoint {
                location: x,
                weight: 1.0,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    pub fn expectation(&self, f: &Expr) -> Result<f64, ExprError> {
        let mut acc = 0.0;
        for p in &self.points {
            acc += p.weight * f.eval(&p.location)?;
        }
        Ok(acc)
    }

    /// Probability mass on `{event <= 0}`.
    pub fn event_mass(&self, event: &Expr) -> Result<f64, ExprError> {
        let mut acc = 0.0;
        for p in &self.points {
            if event.eval(&p.location)? <= 0.0 {
                acc += p.weight;
            }
        }
        Ok(acc)
    }

    /// Shared feasibility assertion: weights, support, moment constraints.
    ///
    /// `max_points` is `k + 1` for solver output.
    pub fn check_feasible(
        &self,
        problem: &MomentProblem,
        tol: f64,
        max_points: Option<usize>,
    ) -> Result<(), String> {
        if self.points.is_empty() {
            return Err("empty distribution".into());
        }
        for (i, p) in self.points.iter().enumerate() {
            if !(p.weight >= 0.0) {
                return Err(format!("point {i} has negative weight {}", p.weight));
            }
            if !problem.domain.contains(&p.location, tol) {
                return Err(format!("point {i} at {:?} lies outside the domain", p.location));
            }
        }
        let total = self.total_weight();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("weights sum to {total}"));
        }
        if let Some(max) = max_points {
            let positive = self.points.iter().filter(|p| p.weight > 0.0).count();
            if positive > max {
                return Err(format!("{positive} support points exceed the limit {max}"));
            }
        }
        let moment_box = problem.moment_set.inflate(tol);
        for (j, f) in problem.moment_map.iter().enumerate() {
            let m = self.expectation(f).map_err(|e| e.to_string())?;
            if m < moment_box.lower[j] || m > moment_box.upper[j] {
                return Err(format!(
                    "moment {j} = {m} outside [{}, {}]",
                    problem.moment_set.lower[j], problem.moment_set.upper[j]
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CertificateStatus {
    Certified,
    HeuristicOnly,
    Infeasible,
}

impl CertificateStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CertificateStatus::Certified => "CERTIFIED",
            CertificateStatus::HeuristicOnly => "HEURISTIC_ONLY",
            CertificateStatus::Infeasible => "INFEASIBLE",
        }
    }
}

/// Certified upper bound, best feasible value and the distribution attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub schema: String,
    pub upper: f64,
    pub lower: f64,
    pub status: CertificateStatus,
    pub witness: DiscreteDistribution,
    pub boxes_explored: u64,
    pub iterations: u64,
    pub tolerance_used: f64,
}

impl BoundCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Value of a closed-form or optimized exponential bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityResult {
    pub bound: f64,
    /// Optimizer of the exponent, when the bound has one.
    pub zeta: Option<f64>,
    /// Per-sample exponent: `bound = prefactor * exp(m * rate)`.
    pub rate: f64,
    pub clipped_bound: f64,
}

impl InequalityResult {
    pub fn new(bound: f64, zeta: Option<f64>, rate: f64) -> Self {
        Self {
            bound,
            zeta,
            rate,
            clipped_bound: bound.min(1.0),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stability_doc() -> ProblemDocument {
        ProblemDocument {
            schema: None,
            domain: BoxRegion::cube(3, -0.16, 0.16).unwrap(),
            moments: vec!["x1".into(), "x2".into(), "x3".into()],
            moment_set: BoxRegion::cube(3, -0.05, 0.05).unwrap(),
            event: Some("20 + 0.2*x2 + 0.3*x3".into()),
            objective: "indicator".into(),
        }
    }

    #[test]
    fn valid_problem_passes_and_is_idempotent() {
        let p = MomentProblem::from_document(&stability_doc()).unwrap();
        let once = validate_problem(p.clone()).unwrap();
        let twice = validate_problem(once.clone()).unwrap();
        assert_eq!(once, p);
        assert_eq!(twice, once);
    }

    #[test]
    fn inverted_domain_is_empty_box() {
        let mut doc = stability_doc();
        doc.domain = BoxRegion {
            lower: vec![1.0],
            upper: vec![0.0],
        };
        doc.moments = vec!["x1".into()];
        doc.moment_set = BoxRegion::cube(1, 0.0, 1.0).unwrap();
        doc.event = None;
        let err = MomentProblem::from_document(&doc).unwrap_err();
        assert_eq!(err.code(), "EMPTY_BOX");
    }

    #[test]
    fn moment_count_must_match_set() {
        let mut doc = stability_doc();
        doc.moment_set = BoxRegion::cube(2, -0.05, 0.05).unwrap();
        assert_eq!(MomentProblem::from_document(&doc).unwrap_err().code(), "DIM_MISMATCH");
    }

    #[test]
    fn unknown_variable_is_bad_expr() {
        let mut doc = stability_doc();
        doc.objective = "x4".into();
        assert_eq!(MomentProblem::from_document(&doc).unwrap_err().code(), "BAD_EXPR");
        doc.objective = "min(x1,".into();
        assert_eq!(MomentProblem::from_document(&doc).unwrap_err().code(), "BAD_EXPR");
    }

    #[test]
    fn document_round_trip() {
        let p = MomentProblem::from_document(&stability_doc()).unwrap();
        let again = MomentProblem::from_json(&p.to_json()).unwrap();
        assert_eq!(p, again);
        let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(v["schema"], "v1");
        assert_eq!(v["objective"], "indicator");
    }

    #[test]
    fn grid_and_bisect_cover_the_box() {
        let b = BoxRegion::new(vec![0.0, -1.0], vec![1.0, 3.0]).unwrap();
        let g = b.grid(4);
        assert_eq!(g.len(), 16);
        let vol: f64 = g.iter().map(|c| c.widths().product::<f64>()).sum();
        assert!((vol - 4.0).abs() < 1e-12);
        let (l, r) = b.bisect();
        assert_eq!(l.upper, vec![1.0, 1.0]);
        assert_eq!(r.lower, vec![0.0, 1.0]);
    }

    #[test]
    fn feasibility_check_rejects_bad_witnesses() {
        let p = MomentProblem::from_document(&stability_doc()).unwrap();
        assert!(DiscreteDistribution::point_mass(vec![0.0; 3])
            .check_feasible(&p, 1e-9, Some(4))
            .is_ok());
        assert!(DiscreteDistribution::point_mass(vec![0.1; 3])
            .check_feasible(&p, 1e-9, Some(4))
            .is_err());
        assert!(DiscreteDistribution::point_mass(vec![0.2, 0.0, 0.0])
            .check_feasible(&p, 1e-9, Some(4))
            .is_err());
    }
}
