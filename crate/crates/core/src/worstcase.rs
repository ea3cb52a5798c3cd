//! Worst-case expectation and event probability over all distributions on
//! a box with moments in a box.
//!
//! The supremum is attained by a distribution with at most `k + 1` atoms,
//! so the search works over `k + 1` support locations with optimal weights
//! from the weight program. Each local search follows the Lagrangian
//! gradient of that program from a low-discrepancy start.
//!
//! The upper bound comes from a partition of the domain into boxes. Mass on
//! a box may realize any objective value up to the box's interval bound and
//! any moment vector in its interval enclosure, which gives a linear
//! relaxation. It is solved by column generation, and its dual multipliers
//! certify a bound over every box of the partition. Boxes carrying mass are
//! bisected until the bracket closes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expr::{Expr, ExprError, Interval};
use crate::lp::{solve_lp, LpSolution, RelaxedThetaLP, ThetaLP};
use crate::model::{
    BoundCertificate, BoxRegion, CertificateStatus, DiscreteDistribution, MomentProblem, Objective, SupportPoint,
    SCHEMA_VERSION,
};
use crate::oracle::in_pool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub multistarts: usize,
    pub gradient_iters: usize,
    pub gradient_tol: f64,
    /// Absolute tolerance on `upper - lower`.
    pub bnb_tol: f64,
    pub bnb_max_boxes: usize,
    pub seed: u64,
    /// Worker threads for the multistart search; `0` uses all cores.
    pub threads: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            multistarts: 64,
            gradient_iters: 200,
            gradient_tol: 1e-8,
            bnb_tol: 1e-5,
            bnb_max_boxes: 200_000,
            seed: 0,
            threads: 0,
        }
    }
}

impl SolverSettings {
    fn validate(&self) -> Result<(), WorstCaseError> {
        let ok = self.multistarts > 0
            && self.gradient_iters > 0
            && self.gradient_tol > 0.0
            && self.bnb_tol > 0.0
            && self.bnb_max_boxes > 0;
        if ok {
            Ok(())
        } else {
            Err(WorstCaseError::BadSettings(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorstCaseError {
    #[error("no distribution satisfies the moment constraints")]
    Infeasible,
    #[error("objective mismatch: {0}")]
    ObjectiveMismatch(&'static str),
    #[error("invalid solver settings: {0}")]
    BadSettings(String),
    #[error("interval enclosure is unbounded on {0}")]
    UnboundedEnclosure(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

impl WorstCaseError {
    pub fn code(&self) -> &'static str {
        match self {
            WorstCaseError::Infeasible => "INFEASIBLE",
            WorstCaseError::ObjectiveMismatch(_) => "OBJECTIVE_MISMATCH",
            WorstCaseError::BadSettings(_) => "BAD_SETTINGS",
            WorstCaseError::UnboundedEnclosure(_) => "DOMAIN_ERROR",
            WorstCaseError::Expr(e) => e.code(),
        }
    }
}

/// Position of a box relative to the event `{h <= 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoxClassification {
    InsideC,
    OutsideC,
    Mixed,
}

pub fn classify_box(event: &Expr, region: &BoxRegion) -> Result<BoxClassification, ExprError> {
    let range = event.eval_interval(region)?;
    Ok(if range.hi <= 0.0 {
        BoxClassification::InsideC
    } else if range.lo > 0.0 {
        BoxClassification::OutsideC
    } else {
        BoxClassification::Mixed
    })
}

/// Dispatches on the problem's objective.
pub fn solve(p: &MomentProblem, s: &SolverSettings) -> Result<BoundCertificate, WorstCaseError> {
    match p.objective {
        Objective::Expectation(_) => sup_expectation(p, s),
        Objective::IndicatorOfEvent => sup_probability(p, s),
    }
}

/// `sup E[g(X)]` for the problem's expectation objective.
pub fn sup_expectation(p: &MomentProblem, s: &SolverSettings) -> Result<BoundCertificate, WorstCaseError> {
    if !matches!(p.objective, Objective::Expectation(_)) {
        return Err(WorstCaseError::ObjectiveMismatch("expected an expression objective"));
    }
    s.validate()?;
    in_pool(s.threads, || Solver::new(p, s).run())
}

/// `sup Pr{h(X) <= 0}`; points outside the event are taken from the
/// closure `{h >= 0}`, which can only raise the bound.
pub fn sup_probability(p: &MomentProblem, s: &SolverSettings) -> Result<BoundCertificate, WorstCaseError> {
    if !matches!(p.objective, Objective::IndicatorOfEvent) {
        return Err(WorstCaseError::ObjectiveMismatch("expected the event indicator objective"));
    }
    s.validate()?;
    in_pool(s.threads, || Solver::new(p, s).run())
}

#[derive(Debug, Clone)]
struct Candidate {
    points: Vec<Vec<f64>>,
    inside: Vec<bool>,
    solution: LpSolution,
}

impl Candidate {
    fn value(&self) -> f64 {
        self.solution.value
    }
}

struct Cell {
    region: BoxRegion,
    objective_hi: f64,
    moment_lo: Vec<f64>,
    moment_hi: Vec<f64>,
    slope: Option<Slopes>,
}

/// Center values and gradient enclosures of the objective (expectation
/// problems only) followed by the moment functions.
struct Slopes {
    center: Vec<Interval>,
    gradient: Vec<Vec<Interval>>,
    offset: Vec<Interval>,
}

struct Solver<'a> {
    p: &'a MomentProblem,
    s: &'a SolverSettings,
    probability: bool,
    k: usize,
}

const FIRST_PRIMES: [u32; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107,
    109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn prime(j: usize) -> u64 {
    if j < FIRST_PRIMES.len() {
        return FIRST_PRIMES[j] as u64;
    }
    let mut count = FIRST_PRIMES.len();
    let mut c = *FIRST_PRIMES.last().unwrap() as u64;
    loop {
        c += 2;
        if (2..).take_while(|d| d * d <= c).all(|d| c % d != 0) {
            if count == j {
                return c;
            }
            count += 1;
        }
    }
}

/// Shifted Halton point `index` in `[0, 1)^dim`.
fn halton(index: u64, shift: &[f64]) -> Vec<f64> {
    shift
        .iter()
        .enumerate()
        .map(|(j, off)| (radical_inverse(index, prime(j)) + off).fract())
        .collect()
}

impl<'a> Solver<'a> {
    fn new(p: &'a MomentProblem, s: &'a SolverSettings) -> Self {
        Self {
            p,
            s,
            probability: matches!(p.objective, Objective::IndicatorOfEvent),
            k: p.moment_count(),
        }
    }

    fn in_event(&self, x: &[f64]) -> Result<bool, ExprError> {
        Ok(self.p.event.eval(x)? <= 0.0)
    }

    fn objective_expr(&self) -> Option<&Expr> {
        match &self.p.objective {
            Objective::Expectation(g) => Some(g),
            Objective::IndicatorOfEvent => None,
        }
    }

    fn point_lp(&self, points: &[Vec<f64>], inside: &[bool]) -> Result<LpSolution, ExprError> {
        let mut c = Vec::with_capacity(points.len());
        for (x, ins) in points.iter().zip(inside) {
            c.push(match self.objective_expr() {
                Some(g) => g.eval(x)?,
                None => {
                    if *ins {
                        1.0
                    } else {
                        0.0
                    }
                }
            });
        }
        let mut f = vec![Vec::with_capacity(points.len()); self.k];
        for x in points {
            for (j, m) in self.p.moments_at(x)?.into_iter().enumerate() {
                f[j].push(m);
            }
        }
        Ok(solve_lp(&ThetaLP {
            objective_coeffs: c,
            moment_matrix: f,
            moment_box: self.p.moment_set.clone(),
        }))
    }

    fn evaluate(&self, points: Vec<Vec<f64>>, inside: Vec<bool>) -> Result<Candidate, ExprError> {
        let solution = self.point_lp(&points, &inside)?;
        Ok(Candidate { points, inside, solution })
    }

    fn run(&self) -> Result<BoundCertificate, WorstCaseError> {
        let mut iterations = 0u64;
        let mut incumbent: Option<Candidate> = None;

        if self.probability && classify_box(&self.p.event, &self.p.domain)? == BoxClassification::OutsideC {
            // the event cannot occur; only a feasible witness is needed
            let (best, iters) = self.multistart()?;
            iterations += iters;
            let root = self.root_cells()?;
            if best.is_none() && self.relaxation(&root)?.is_none() {
                return Err(WorstCaseError::Infeasible);
            }
            return Ok(self.certificate(0.0, best, root.len() as u64, iterations));
        }

        let (best, iters) = self.multistart()?;
        iterations += iters;
        self.offer(&mut incumbent, best);

        let (upper, explored, rounds) = self.branch_and_bound(&mut incumbent, &mut iterations)?;
        iterations += rounds;
        Ok(self.certificate(upper, incumbent, explored, iterations))
    }

    fn offer(&self, incumbent: &mut Option<Candidate>, c: Option<Candidate>) {
        if let Some(c) = c {
            if incumbent.as_ref().is_none_or(|i| c.value() > i.value()) {
                *incumbent = Some(c);
            }
        }
    }

    fn certificate(&self, upper: f64, best: Option<Candidate>, boxes: u64, iterations: u64) -> BoundCertificate {
        let witness = best.map(|c| self.witness(&c)).unwrap_or_default();
        let upper = if self.probability { upper.min(1.0) } else { upper };
        let lower = if witness.is_empty() {
            match self.objective_expr() {
                // no feasible point was found; fall back to the trivial bound
                Some(g) => g.eval_interval(&self.p.domain).map(|i| i.lo).unwrap_or(f64::MIN),
                None => 0.0,
            }
        } else {
            match self.objective_expr() {
                Some(g) => witness.expectation(g).unwrap_or(f64::MIN),
                None => witness.event_mass(&self.p.event).unwrap_or(0.0).min(1.0),
            }
        };
        let status = if !witness.is_empty() && upper - lower <= self.s.bnb_tol {
            CertificateStatus::Certified
        } else {
            CertificateStatus::HeuristicOnly
        };
        BoundCertificate {
            schema: SCHEMA_VERSION.to_string(),
            upper,
            lower,
            status,
            witness,
            boxes_explored: boxes,
            iterations,
            tolerance_used: self.s.bnb_tol,
        }
    }

    fn witness(&self, c: &Candidate) -> DiscreteDistribution {
        let kept: Vec<(usize, f64)> = c
            .solution
            .theta
            .iter()
            .enumerate()
            .filter(|(_, t)| **t > 1e-15)
            .map(|(i, t)| (i, *t))
            .collect();
        let total: f64 = kept.iter().map(|(_, t)| t).sum();
        DiscreteDistribution {
            points: kept
                .into_iter()
                .map(|(i, t)| SupportPoint {
                    location: c.points[i].clone(),
                    weight: t / total,
                })
                .collect(),
        }
    }

    // ---- local search ----

    fn multistart(&self) -> Result<(Option<Candidate>, u64), WorstCaseError> {
        let d = self.p.dim();
        let m = self.k + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.s.seed);
        let shift: Vec<f64> = (0..m * d).map(|_| rng.gen::<f64>()).collect();
        let domain = &self.p.domain;
        let starts: Vec<Vec<Vec<f64>>> = (0..self.s.multistarts as u64)
            .map(|i| {
                let u = halton(i + 1, &shift);
                (0..m)
                    .map(|l| {
                        (0..d)
                            .map(|a| domain.lower[a] + u[l * d + a] * (domain.upper[a] - domain.lower[a]))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let results: Vec<Result<(Option<Candidate>, u64), ExprError>> =
            starts.into_par_iter().map(|x| self.start(x)).collect();
        let mut best: Option<Candidate> = None;
        let mut iterations = 0;
        for r in results {
            let (c, it) = match r {
                Ok(v) => v,
                // a start that meets a domain error is dropped
                Err(_) => continue,
            };
            iterations += it;
            self.offer(&mut best, c);
        }
        Ok((best, iterations))
    }

    fn start(&self, mut points: Vec<Vec<f64>>) -> Result<(Option<Candidate>, u64), ExprError> {
        let mut iterations = 0;
        let mut inside = vec![false; points.len()];
        if self.probability {
            for (x, ins) in points.iter().zip(inside.iter_mut()) {
                *ins = self.in_event(x)?;
            }
            if !inside.iter().any(|b| *b) {
                let (found, it) = self.seek_event(&mut points)?;
                iterations += it;
                if let Some(i) = found {
                    inside[i] = true;
                }
            }
        }
        let (c, it) = self.local_search(points, inside)?;
        Ok((c, iterations + it))
    }

    /// Pushes the point with the smallest `h` downhill until it enters the
    /// event; returns its index on success.
    fn seek_event(&self, points: &mut [Vec<f64>]) -> Result<(Option<usize>, u64), ExprError> {
        let h = &self.p.event;
        let mut idx = 0;
        let mut best = f64::INFINITY;
        for (i, x) in points.iter().enumerate() {
            let v = h.eval(x)?;
            if v < best {
                best = v;
                idx = i;
            }
        }
        let mut x = points[idx].clone();
        let mut step = 0.25 * self.p.domain.max_width();
        let mut iterations = 0;
        for _ in 0..self.s.gradient_iters {
            iterations += 1;
            let g = h.grad_fd_default(&x)?;
            let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if scale == 0.0 || !scale.is_finite() {
                break;
            }
            let mut moved = false;
            for _ in 0..40 {
                let mut y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b / scale).collect();
                self.p.domain.clamp(&mut y);
                let v = h.eval(&y)?;
                if v < best {
                    best = v;
                    x = y;
                    moved = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if best <= 0.0 {
                points[idx] = x;
                return Ok((Some(idx), iterations));
            }
            if !moved {
                break;
            }
        }
        Ok((None, iterations))
    }

    fn project(&self, points: &[Vec<f64>], dir: &[Vec<f64>], alpha: f64, inside: &[bool]) -> Result<Option<Vec<Vec<f64>>>, ExprError> {
        let mut out = Vec::with_capacity(points.len());
        for (l, (x, g)) in points.iter().zip(dir).enumerate() {
            let mut y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a + alpha * b).collect();
            self.p.domain.clamp(&mut y);
            if self.probability && g.iter().any(|v| *v != 0.0) && self.in_event(&y)? != inside[l] {
                return Ok(None);
            }
            out.push(y);
        }
        Ok(Some(out))
    }

    fn lagrangian_direction(&self, c: &Candidate) -> Result<Vec<Vec<f64>>, ExprError> {
        let prices = c.solution.moment_prices();
        let mut dir = Vec::with_capacity(c.points.len());
        for (x, &theta) in c.points.iter().zip(&c.solution.theta) {
            let mut g = vec![0.0; x.len()];
            if theta > 0.0 {
                if let Some(obj) = self.objective_expr() {
                    for (a, v) in g.iter_mut().zip(obj.grad_fd_default(x)?) {
                        *a += v;
                    }
                }
                for (f, price) in self.p.moment_map.iter().zip(&prices) {
                    if *price != 0.0 {
                        for (a, v) in g.iter_mut().zip(f.grad_fd_default(x)?) {
                            *a -= price * v;
                        }
                    }
                }
                g.iter_mut().for_each(|a| *a *= theta);
            }
            dir.push(g);
        }
        Ok(dir)
    }

    fn infeasibility_direction(&self, c: &Candidate) -> Result<Vec<Vec<f64>>, ExprError> {
        let base = self.p.domain.max_width().max(1.0) * 1e-6;
        let mut dir = Vec::with_capacity(c.points.len());
        for l in 0..c.points.len() {
            let mut g = vec![0.0; c.points[l].len()];
            for a in 0..g.len() {
                let mut plus = c.points.clone();
                let mut minus = c.points.clone();
                plus[l][a] = (plus[l][a] + base).min(self.p.domain.upper[a]);
                minus[l][a] = (minus[l][a] - base).max(self.p.domain.lower[a]);
                let span = plus[l][a] - minus[l][a];
                if span <= 0.0 {
                    continue;
                }
                let rp = self.point_lp(&plus, &c.inside)?.infeasibility;
                let rm = self.point_lp(&minus, &c.inside)?.infeasibility;
                g[a] = -(rp - rm) / span;
            }
            dir.push(g);
        }
        Ok(dir)
    }

    /// Projected ascent on the weight-program value, preceded by descent on
    /// the phase-one residual while the support cannot meet the moments.
    fn local_search(&self, points: Vec<Vec<f64>>, inside: Vec<bool>) -> Result<(Option<Candidate>, u64), ExprError> {
        let mut cur = self.evaluate(points, inside)?;
        let width = self.p.domain.max_width().max(f64::MIN_POSITIVE);
        let mut alpha = 0.25 * width;
        let mut iterations = 0;
        while iterations < self.s.gradient_iters as u64 {
            iterations += 1;
            let feasible = cur.solution.is_optimal();
            let dir = if feasible {
                self.lagrangian_direction(&cur)?
            } else {
                self.infeasibility_direction(&cur)?
            };
            let scale = dir.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            if scale == 0.0 || !scale.is_finite() {
                break;
            }
            let dir: Vec<Vec<f64>> = dir.into_iter().map(|g| g.into_iter().map(|v| v / scale).collect()).collect();
            let mut step = (2.0 * alpha).min(0.5 * width);
            let mut accepted = None;
            for _ in 0..48 {
                if let Some(y) = self.project(&cur.points, &dir, step, &cur.inside)? {
                    let next = self.evaluate(y, cur.inside.clone())?;
                    let better = if feasible {
                        next.solution.is_optimal() && next.value() > cur.value()
                    } else {
                        next.solution.is_optimal() || next.solution.infeasibility < cur.solution.infeasibility
                    };
                    if better {
                        accepted = Some(next);
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some(next) = accepted else { break };
            alpha = step;
            let gain = if feasible && next.solution.is_optimal() {
                next.value() - cur.value()
            } else {
                f64::INFINITY
            };
            cur = next;
            if gain < self.s.gradient_tol {
                break;
            }
        }
        Ok((cur.solution.is_optimal().then_some(cur), iterations))
    }

    // ---- branch and bound ----

    fn cell(&self, region: BoxRegion) -> Result<Cell, WorstCaseError> {
        let objective_hi = match self.objective_expr() {
            Some(g) => g.eval_interval(&region)?.hi,
            None => match classify_box(&self.p.event, &region)? {
                BoxClassification::OutsideC => 0.0,
                _ => 1.0,
            },
        };
        let mut moment_lo = Vec::with_capacity(self.k);
        let mut moment_hi = Vec::with_capacity(self.k);
        for f in &self.p.moment_map {
            let r = f.eval_interval(&region)?;
            moment_lo.push(r.lo);
            moment_hi.push(r.hi);
        }
        if !objective_hi.is_finite() || moment_lo.iter().chain(&moment_hi).any(|v| !v.is_finite()) {
            return Err(WorstCaseError::UnboundedEnclosure(format!(
                "[{:?}, {:?}]",
                region.lower, region.upper
            )));
        }
        let slope = self.slopes(&region);
        Ok(Cell {
            region,
            objective_hi,
            moment_lo,
            moment_hi,
            slope,
        })
    }

    fn slopes(&self, region: &BoxRegion) -> Option<Slopes> {
        let center = region.center();
        let point: Vec<Interval> = center.iter().map(|v| Interval::point(*v)).collect();
        let whole: Vec<Interval> = region
            .lower
            .iter()
            .zip(&region.upper)
            .map(|(a, b)| Interval::new(*a, *b))
            .collect();
        let offset = whole.iter().zip(&point).map(|(w, m)| w.sub(*m)).collect();
        let mut values = Vec::with_capacity(self.k + 1);
        let mut gradient = Vec::with_capacity(self.k + 1);
        for e in self.objective_expr().into_iter().chain(&self.p.moment_map) {
            values.push(e.eval_intervals(&point).ok()?);
            let (_, g) = e.eval_gradient_intervals(&whole).ok()?;
            if g.iter().any(|v| !v.lo.is_finite() || !v.hi.is_finite()) {
                return None;
            }
            gradient.push(g);
        }
        Some(Slopes {
            center: values,
            gradient,
            offset,
        })
    }

    /// Upper bound of `objective - prices . moments` over the cell: the
    /// smaller of the natural enclosure and the mean-value form.
    fn lagrangian_score(&self, cell: &Cell, prices: &[f64]) -> f64 {
        let mut natural = Interval::point(cell.objective_hi);
        for (j, price) in prices.iter().enumerate() {
            let m = Interval::new(cell.moment_lo[j], cell.moment_hi[j]);
            natural = natural.sub(m.mul(Interval::point(*price)));
        }
        let Some(sl) = &cell.slope else {
            return natural.hi;
        };
        let d = sl.offset.len();
        let (mut value, mut grad, first) = match self.objective_expr() {
            Some(_) => (sl.center[0], sl.gradient[0].clone(), 1),
            None => (Interval::point(cell.objective_hi), vec![Interval::point(0.0); d], 0),
        };
        for (j, price) in prices.iter().enumerate() {
            let w = Interval::point(*price);
            value = value.sub(sl.center[first + j].mul(w));
            for (g, h) in grad.iter_mut().zip(&sl.gradient[first + j]) {
                *g = g.sub(h.mul(w));
            }
        }
        for (g, o) in grad.iter().zip(&sl.offset) {
            value = value.add(g.mul(*o));
        }
        natural.hi.min(value.hi)
    }

    /// Weak-duality bound for the moment prices `prices`, valid for the
    /// whole partition.
    fn partition_bound(&self, cells: &[Cell], prices: &[f64]) -> (f64, Vec<f64>) {
        let mut constant = Interval::point(0.0);
        for (j, price) in prices.iter().enumerate() {
            let rhs = if *price >= 0.0 {
                self.p.moment_set.upper[j]
            } else {
                self.p.moment_set.lower[j]
            };
            constant = constant.add(Interval::point(*price).mul(Interval::point(rhs)));
        }
        let scores: Vec<f64> = cells.iter().map(|c| self.lagrangian_score(c, prices)).collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (constant.add(Interval::point(best)).hi, scores)
    }

    fn root_cells(&self) -> Result<Vec<Cell>, WorstCaseError> {
        let d = self.p.dim();
        let mut per_axis = 4usize;
        while per_axis > 1 && (per_axis as f64).powi(d as i32) > self.s.bnb_max_boxes as f64 {
            per_axis /= 2;
        }
        self.p.domain.grid(per_axis).into_iter().map(|b| self.cell(b)).collect()
    }

    fn relaxed_lp(&self, cells: &[Cell], columns: &[usize]) -> RelaxedThetaLP {
        RelaxedThetaLP {
            objective_coeffs: columns.iter().map(|&i| cells[i].objective_hi).collect(),
            moment_lo: (0..self.k).map(|j| columns.iter().map(|&i| cells[i].moment_lo[j]).collect()).collect(),
            moment_hi: (0..self.k).map(|j| columns.iter().map(|&i| cells[i].moment_hi[j]).collect()).collect(),
            moment_box: self.p.moment_set.clone(),
        }
    }

    /// Relaxation over all cells; `None` when infeasible.
    fn relaxation(&self, cells: &[Cell]) -> Result<Option<LpSolution>, WorstCaseError> {
        let all: Vec<usize> = (0..cells.len()).collect();
        let s = self.relaxed_lp(cells, &all).solve();
        Ok(s.is_optimal().then_some(s))
    }

    fn reduced_cost(&self, cell: &Cell, s: &LpSolution) -> f64 {
        let mut v = cell.objective_hi - s.dual_total;
        for j in 0..self.k {
            v += -s.dual_upper[j] * cell.moment_lo[j] + s.dual_lower[j] * cell.moment_hi[j];
        }
        v
    }

    /// Solves the relaxation over `working`, adding priced-out cells until
    /// no cell has positive reduced cost. Returns the solution indexed by
    /// `working`.
    fn column_generation(&self, cells: &[Cell], working: &mut Vec<usize>) -> Result<LpSolution, WorstCaseError> {
        let batch = 4 * (self.k + 1);
        for _ in 0..10_000 {
            let s = self.relaxed_lp(cells, working).solve();
            if !s.is_optimal() {
                let Some(full) = self.relaxation(cells)? else {
                    return Err(WorstCaseError::Infeasible);
                };
                *working = (0..cells.len()).collect();
                return Ok(full);
            }
            let threshold = 1e-10 * (1.0 + s.dual_total.abs());
            let mut candidates: Vec<(f64, usize)> = cells
                .iter()
                .enumerate()
                .map(|(i, c)| (self.reduced_cost(c, &s), i))
                .filter(|(r, _)| *r > threshold)
                .collect();
            candidates.retain(|(_, i)| !working.contains(i));
            if candidates.is_empty() {
                return Ok(s);
            }
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            working.extend(candidates.into_iter().take(batch).map(|(_, i)| i));
        }
        let full = self.relaxation(cells)?.ok_or(WorstCaseError::Infeasible)?;
        *working = (0..cells.len()).collect();
        Ok(full)
    }

    /// Representative support for the boxes carrying mass, re-weighted by
    /// the exact weight program.
    fn candidate_from_cells(&self, cells: &[Cell], active: &[usize]) -> Result<Option<Candidate>, ExprError> {
        let mut points = Vec::new();
        let mut inside = Vec::new();
        for &i in active {
            let region = &cells[i].region;
            let mut probes = vec![region.center()];
            let d = region.dim();
            if d <= 6 {
                for mask in 0..(1usize << d) {
                    probes.push(
                        (0..d)
                            .map(|a| if mask >> a & 1 == 1 { region.upper[a] } else { region.lower[a] })
                            .collect(),
                    );
                }
            }
            if self.probability {
                if cells[i].objective_hi > 0.0 {
                    if let Some(x) = probes.iter().find(|x| self.in_event(x).unwrap_or(false)) {
                        points.push(x.clone());
                        inside.push(true);
                        continue;
                    }
                }
                points.push(probes[0].clone());
                inside.push(false);
                if self.in_event(&probes[0])? {
                    // the center lies in the event but the box was priced at 0
                    *inside.last_mut().unwrap() = true;
                }
            } else if let Some(g) = self.objective_expr() {
                let mut best = probes[0].clone();
                let mut best_v = g.eval(&best)?;
                for x in probes.into_iter().skip(1) {
                    let v = g.eval(&x)?;
                    if v > best_v {
                        best_v = v;
                        best = x;
                    }
                }
                points.push(best);
                inside.push(false);
            }
        }
        if points.is_empty() {
            return Ok(None);
        }
        let c = self.evaluate(points, inside)?;
        if !c.solution.is_optimal() {
            return Ok(None);
        }
        let positive = c.solution.theta.iter().filter(|t| **t > 1e-15).count();
        if positive > self.k + 1 {
            return Ok(None);
        }
        Ok(Some(c))
    }

    fn branch_and_bound(
        &self,
        incumbent: &mut Option<Candidate>,
        iterations: &mut u64,
    ) -> Result<(f64, u64, u64), WorstCaseError> {
        let mut cells = self.root_cells()?;
        if self.relaxation(&cells)?.is_none() {
            return Err(WorstCaseError::Infeasible);
        }
        let mut explored = cells.len() as u64;
        let mut working: Vec<usize> = (0..cells.len()).collect();
        let mut upper = f64::INFINITY;
        let min_width = 1e-12 * self.p.domain.max_width().max(1.0);
        let mut rounds = 0u64;
        loop {
            rounds += 1;
            let s = self.column_generation(&cells, &mut working)?;
            let prices = s.moment_prices();
            let (bound, scores) = self.partition_bound(&cells, &prices);
            upper = upper.min(bound);
            if self.probability {
                upper = upper.min(1.0);
            }

            let mut active: Vec<(f64, usize)> = working
                .iter()
                .zip(&s.theta)
                .filter(|(_, t)| **t > 1e-14)
                .map(|(&i, &t)| (t * cells[i].objective_hi.abs().max(1e-300), i))
                .collect();
            active.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let active_ids: Vec<usize> = active.iter().map(|(_, i)| *i).collect();

            let lower = incumbent.as_ref().map_or(f64::NEG_INFINITY, |c| c.value());
            if let Some(c) = self.candidate_from_cells(&cells, &active_ids)? {
                if c.value() > lower {
                    let (polished, it) = self.local_search(c.points.clone(), c.inside.clone())?;
                    *iterations += it;
                    self.offer(incumbent, Some(c));
                    self.offer(incumbent, polished);
                }
            }
            let lower = incumbent.as_ref().map_or(f64::NEG_INFINITY, |c| c.value());
            if upper - lower <= self.s.bnb_tol || cells.len() >= self.s.bnb_max_boxes {
                break;
            }

            // every cell whose score could hold the bound above the target is
            // refined, at most doubling the partition per round
            let best_score = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let target = lower + 0.5 * self.s.bnb_tol - (bound - best_score);
            let mut by_score: Vec<usize> = (0..cells.len()).filter(|&i| scores[i] > target).collect();
            by_score.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let room = (self.s.bnb_max_boxes - cells.len()).min(cells.len());
            let mut to_split = active_ids.clone();
            let mut chosen: std::collections::HashSet<usize> = to_split.iter().copied().collect();
            for i in by_score {
                if to_split.len() >= room.max(active_ids.len()) {
                    break;
                }
                if chosen.insert(i) {
                    to_split.push(i);
                }
            }
            let mut next_working: Vec<usize> = Vec::new();
            let mut split_any = false;
            let seeded = active_ids.len() + 2 * (self.k + 1);
            for (pos, &i) in to_split.iter().enumerate() {
                if cells.len() >= self.s.bnb_max_boxes || cells[i].region.max_width() <= min_width {
                    if pos < seeded {
                        next_working.push(i);
                    }
                    continue;
                }
                let (a, b) = cells[i].region.bisect();
                cells[i] = self.cell(a)?;
                cells.push(self.cell(b)?);
                explored += 2;
                if pos < seeded {
                    next_working.push(i);
                    next_working.push(cells.len() - 1);
                }
                split_any = true;
            }
            if !split_any {
                break;
            }
            working = next_working;
        }
        Ok((upper, explored, rounds))
    }
}
