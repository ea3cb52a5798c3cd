//! Worst-case moment-constrained bounds, Chernoff-type uniform bounds,
//! vector concentration inequalities, Routh-Hurwitz stability tests and
//! Monte Carlo oracles that check them.

pub mod chernoff;
pub mod expr;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod routh;
pub mod search;
pub mod vecbounds;
pub mod worstcase;

pub use chernoff::{chernoff_inf, BoundError, ChernoffInfimum, CumulantSpec};
pub use expr::{Expr, ExprError, Interval};
pub use lp::{solve_lp, LpSolution, LpStatus, RelaxedThetaLP, ThetaLP};
pub use model::{
    BoundCertificate, BoxRegion, CertificateStatus, DiscreteDistribution, InequalityResult, ModelError,
    MomentProblem, Objective, ProblemDocument, SupportPoint, SCHEMA_VERSION,
};
pub use routh::{routh_stable, Polynomial, RouthError, StabilityReport};
pub use worstcase::{
    classify_box, sup_expectation, sup_probability, BoxClassification, SolverSettings, WorstCaseError,
};
