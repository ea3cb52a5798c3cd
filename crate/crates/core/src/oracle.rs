//! Independent checks for the solvers and bounds: exhaustive grid search
//! for worst-case problems, vertex enumeration for the weight program, and
//! seeded Monte Carlo estimates of tail and path-crossing probabilities.
//!
//! Replicate `i` of a simulation draws from ChaCha stream `i` of the seed,
//! and hit counts are reduced as integers, so results do not depend on the
//! number of worker threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chernoff::{self, BoundError};
use crate::expr::{Expr, ExprError};
use crate::lp::{solve_lp, ThetaLP};
use crate::model::{BoxRegion, MomentProblem, Objective};
use crate::routh::{self, Polynomial};
use crate::vecbounds::{self, ComponentBounds, GoldenDistribution, PHI};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("problem too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("invalid sampler: {0}")]
    BadSpec(String),
    #[error("unknown suite '{0}'")]
    UnknownSuite(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

impl OracleError {
    pub fn code(&self) -> &'static str {
        match self {
            OracleError::TooLarge(_) => "TOO_LARGE",
            OracleError::BadSpec(_) => "PARAM_OUT_OF_RANGE",
            OracleError::UnknownSuite(_) => "UNKNOWN_SUITE",
            OracleError::Expr(e) => e.code(),
            OracleError::Bound(e) => e.code(),
        }
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (`0` = rayon default).
pub fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

pub const GRID_MAX_RESOLUTION: usize = 101;
pub const GRID_COMBINATION_BUDGET: u128 = 2_000_000;

fn binomial(n: u128, k: u128) -> u128 {
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

fn grid_points(domain: &BoxRegion, resolution: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = (0..domain.dim())
        .map(|i| {
            let (lo, hi) = (domain.lower[i], domain.upper[i]);
            if resolution == 1 || lo == hi {
                return vec![0.5 * (lo + hi)];
            }
            (0..resolution)
                .map(|j| {
                    if j + 1 == resolution {
                        hi
                    } else {
                        lo + (hi - lo) * j as f64 / (resolution - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let mut points = vec![Vec::new()];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    points
}

/// Best value over every support of at most `k + 1` grid points, each
/// weighted by the optimal weight program.
pub fn grid_bruteforce(p: &MomentProblem, resolution: usize) -> Result<f64, OracleError> {
    let d = p.dim();
    let k = p.moment_count();
    if d > 2 || k > 2 {
        return Err(OracleError::TooLarge(format!("dimension {d} and {k} moments exceed the 2/2 limit")));
    }
    if resolution == 0 || resolution > GRID_MAX_RESOLUTION {
        return Err(OracleError::TooLarge(format!(
            "resolution {resolution} outside 1..={GRID_MAX_RESOLUTION}"
        )));
    }
    let points = grid_points(&p.domain, resolution);
    let n = points.len();
    let combos: u128 = (1..=k + 1).map(|s| binomial(n as u128, s as u128)).sum();
    if combos > GRID_COMBINATION_BUDGET {
        return Err(OracleError::TooLarge(format!("{combos} support combinations")));
    }
    let values: Vec<f64> = points
        .iter()
        .map(|x| match &p.objective {
            Objective::Expectation(g) => g.eval(x),
            Objective::IndicatorOfEvent => Ok(if p.event.eval(x)? <= 0.0 { 1.0 } else { 0.0 }),
        })
        .collect::<Result<_, _>>()?;
    let moments: Vec<Vec<f64>> = points.iter().map(|x| p.moments_at(x)).collect::<Result<_, _>>()?;

    let mut best = f64::NEG_INFINITY;
    for size in 1..=(k + 1).min(n) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let lp = ThetaLP {
                objective_coeffs: idx.iter().map(|&i| values[i]).collect(),
                moment_matrix: (0..k).map(|j| idx.iter().map(|&i| moments[i][j]).collect()).collect(),
                moment_box: p.moment_set.clone(),
            };
            let s = solve_lp(&lp);
            if s.is_optimal() && s.value > best {
                best = s.value;
            }
            // next combination in lexicographic order
            let mut pos = size;
            while pos > 0 && idx[pos - 1] == n - size + pos - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            idx[pos - 1] += 1;
            for j in pos..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    Ok(best)
}

/// Optimal value of the weight program by enumerating every basic
/// solution; `None` when no vertex is feasible.
pub fn lp_vertex_max(p: &ThetaLP) -> Option<f64> {
    let l = p.objective_coeffs.len();
    let k = p.moment_matrix.len();
    // candidate active rows: theta_j = 0, F_i theta = lower_i, F_i theta = upper_i
    let mut rows: Vec<(Vec<f64>, f64)> = (0..l)
        .map(|j| {
            let mut r = vec![0.0; l];
            r[j] = 1.0;
            (r, 0.0)
        })
        .collect();
    for i in 0..k {
        rows.push((p.moment_matrix[i].clone(), p.moment_box.lower[i]));
        rows.push((p.moment_matrix[i].clone(), p.moment_box.upper[i]));
    }
    let feasible = |theta: &[f64]| {
        let tol = 1e-9;
        theta.iter().all(|t| *t >= -tol)
            && (theta.iter().sum::<f64>() - 1.0).abs() <= tol
            && (0..k).all(|i| {
                let m: f64 = p.moment_matrix[i].iter().zip(theta).map(|(a, b)| a * b).sum();
                m >= p.moment_box.lower[i] - tol && m <= p.moment_box.upper[i] + tol
            })
    };
    let mut best: Option<f64> = None;
    let choose = l - 1;
    let mut idx: Vec<usize> = (0..choose).collect();
    loop {
        if choose <= rows.len() {
            let mut a = DMatrix::zeros(l, l);
            let mut b = DVector::zeros(l);
            for c in 0..l {
                a[(0, c)] = 1.0;
            }
            b[0] = 1.0;
            for (r, &ri) in idx.iter().enumerate() {
                for c in 0..l {
                    a[(r + 1, c)] = rows[ri].0[c];
                }
                b[r + 1] = rows[ri].1;
            }
            if let Some(theta) = a.lu().solve(&b) {
                let theta: Vec<f64> = theta.iter().copied().collect();
                if theta.iter().all(|t| t.is_finite()) && feasible(&theta) {
                    let v: f64 = theta.iter().zip(&p.objective_coeffs).map(|(a, b)| a * b).sum();
                    best = Some(best.map_or(v, |x| x.max(v)));
                }
            }
        } else {
            break;
        }
        let mut pos = choose;
        while pos > 0 && idx[pos - 1] == rows.len() - choose + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        idx[pos - 1] += 1;
        for j in pos..choose {
            idx[j] = idx[j - 1] + 1;
        }
    }
    best
}

/// Random monic quartic built from linear and quadratic factors whose root
/// real parts are at least `gap` from zero; the flag is the true stability.
pub fn constructed_quartic<R: Rng>(rng: &mut R, gap: f64) -> (Polynomial, bool) {
    let mut p = Polynomial { coeffs: vec![1.0] };
    let mut stable = true;
    let mut degree = 0;
    while degree < 4 {
        let sign = if rng.gen_bool(0.7) { -1.0 } else { 1.0 };
        let re = sign * rng.gen_range(gap..3.0);
        stable &= re < 0.0;
        if degree <= 2 && rng.gen_bool(0.5) {
            let im: f64 = rng.gen_range(0.1..4.0);
            p = p.mul(&Polynomial {
                coeffs: vec![1.0, -2.0 * re, re * re + im * im],
            });
            degree += 2;
        } else {
            p = p.mul(&Polynomial { coeffs: vec![1.0, -re] });
            degree += 1;
        }
    }
    (p, stable)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SamplerFamily {
    Bernoulli { p: f64 },
    /// `+-1/2` with equal probability.
    CenteredCoin,
    Normal { mu: f64, nu: f64 },
    Poisson { lambda: f64 },
    SphereUniform { d: usize },
    BallUniform { d: usize },
    /// Independent uniform components on `[-1, 1]`.
    CubeUniform { d: usize },
    GoldenZ,
}

impl SamplerFamily {
    pub fn dim(&self) -> usize {
        match self {
            SamplerFamily::SphereUniform { d } | SamplerFamily::BallUniform { d } | SamplerFamily::CubeUniform { d } => *d,
            _ => 1,
        }
    }

    fn is_vector(&self) -> bool {
        matches!(
            self,
            SamplerFamily::SphereUniform { .. } | SamplerFamily::BallUniform { .. } | SamplerFamily::CubeUniform { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    #[serde(flatten)]
    pub family: SamplerFamily,
    /// Path length.
    pub n: usize,
    pub reps: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub reps: u64,
    pub hits: u64,
}

impl McEstimate {
    fn from_hits(hits: u64, reps: u64) -> Self {
        let p_hat = hits as f64 / reps as f64;
        Self {
            p_hat,
            stderr: (p_hat * (1.0 - p_hat) / reps as f64).sqrt(),
            reps,
            hits,
        }
    }
}

enum Sampler {
    Bernoulli(f64),
    Coin,
    Normal(Normal<f64>),
    Poisson(Poisson<f64>),
    Sphere(usize),
    Ball(usize),
    Cube,
    Golden(GoldenDistribution),
}

impl Sampler {
    fn new(f: &SamplerFamily) -> Result<Self, OracleError> {
        let bad = |m: String| Err(OracleError::BadSpec(m));
        Ok(match *f {
            SamplerFamily::Bernoulli { p } if (0.0..=1.0).contains(&p) => Sampler::Bernoulli(p),
            SamplerFamily::Bernoulli { p } => return bad(format!("Bernoulli p = {p}")),
            SamplerFamily::CenteredCoin => Sampler::Coin,
            SamplerFamily::Normal { mu, nu } => match Normal::new(mu, nu.sqrt()) {
                Ok(n) if nu > 0.0 => Sampler::Normal(n),
                _ => return bad(format!("normal variance {nu}")),
            },
            SamplerFamily::Poisson { lambda } => match Poisson::new(lambda) {
                Ok(p) => Sampler::Poisson(p),
                Err(_) => return bad(format!("Poisson rate {lambda}")),
            },
            SamplerFamily::SphereUniform { d } if d >= 1 => Sampler::Sphere(d),
            SamplerFamily::BallUniform { d } if d >= 1 => Sampler::Ball(d),
            SamplerFamily::CubeUniform { d } if d >= 1 => Sampler::Cube,
            SamplerFamily::SphereUniform { .. } | SamplerFamily::BallUniform { .. } | SamplerFamily::CubeUniform { .. } => {
                return bad("vector dimension must be at least 1".into())
            }
            SamplerFamily::GoldenZ => Sampler::Golden(GoldenDistribution::default()),
        })
    }

    /// Adds one increment to `acc`.
    fn step(&self, rng: &mut ChaCha8Rng, acc: &mut [f64]) {
        match self {
            Sampler::Bernoulli(p) => {
                if rng.gen::<f64>() < *p {
                    acc[0] += 1.0;
                }
            }
            Sampler::Coin => acc[0] += if rng.gen::<bool>() { 0.5 } else { -0.5 },
            Sampler::Normal(n) => acc[0] += n.sample(rng),
            Sampler::Poisson(p) => acc[0] += p.sample(rng),
            Sampler::Golden(z) => {
                acc[0] += if rng.gen::<f64>() < z.p_plus {
                    z.value_plus
                } else {
                    z.value_minus
                }
            }
            Sampler::Sphere(d) | Sampler::Ball(d) => {
                let mut buf = [0.0f64; 16];
                let v = &mut buf[..*d];
                loop {
                    v.iter_mut().for_each(|x| *x = StandardNormal.sample(rng));
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        let radius = match self {
                            Sampler::Ball(_) => rng.gen::<f64>().powf(1.0 / *d as f64),
                            _ => 1.0,
                        };
                        v.iter().zip(acc.iter_mut()).for_each(|(x, a)| *a += radius * x / norm);
                        break;
                    }
                }
            }
            Sampler::Cube => acc.iter_mut().for_each(|a| *a += rng.gen_range(-1.0..=1.0)),
        }
    }
}

const MAX_VECTOR_DIM: usize = 16;

fn check_spec(spec: &SamplerSpec) -> Result<Sampler, OracleError> {
    if spec.n == 0 || spec.reps == 0 {
        return Err(OracleError::BadSpec("n and reps must be at least 1".into()));
    }
    if spec.family.dim() > MAX_VECTOR_DIM {
        return Err(OracleError::BadSpec(format!("dimension above {MAX_VECTOR_DIM}")));
    }
    Sampler::new(&spec.family)
}

/// Side of the boundary that counts as a crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `S_n >= boundary(n)`; for vectors `||S_n|| >= boundary(n)`.
    Upper,
    /// `S_n <= boundary(n)`.
    Lower,
}

fn count_hits<F>(spec: &SamplerSpec, sampler: &Sampler, steps: usize, crossed: F) -> u64
where
    F: Fn(usize, &[f64]) -> bool + Sync,
{
    let d = spec.family.dim();
    let vector = spec.family.is_vector();
    (0..spec.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(rep);
            let mut acc = [0.0f64; MAX_VECTOR_DIM];
            let acc = &mut acc[..d];
            for n in 1..=steps {
                sampler.step(&mut rng, acc);
                let stat = if vector {
                    acc.iter().map(|x| x * x).sum::<f64>().sqrt()
                } else {
                    acc[0]
                };
                if crossed(n, std::slice::from_ref(&stat)) {
                    return 1u64;
                }
            }
            0
        })
        .sum()
}

/// `Pr{S_n >= n * threshold}` (or `||S_n||` for vector families).
pub fn mc_tail(spec: &SamplerSpec, threshold_per_sample: f64) -> Result<McEstimate, OracleError> {
    let sampler = check_spec(spec)?;
    let target = spec.n as f64 * threshold_per_sample;
    let n = spec.n;
    let hits = count_hits(spec, &sampler, n, |step, s| step == n && s[0] >= target);
    Ok(McEstimate::from_hits(hits, spec.reps))
}

/// Probability that the path crosses `boundary(n)` at some `n <= horizon`.
///
/// The estimate is truncated at `horizon`, so it never exceeds the
/// probability of the unrestricted event.
pub fn mc_sup_crossing(
    spec: &SamplerSpec,
    boundary: &Expr,
    horizon: usize,
    direction: Direction,
) -> Result<McEstimate, OracleError> {
    let sampler = check_spec(spec)?;
    if horizon == 0 {
        return Err(OracleError::BadSpec("horizon must be at least 1".into()));
    }
    let levels: Vec<f64> = (1..=horizon)
        .map(|n| boundary.eval(&[n as f64]))
        .collect::<Result<_, _>>()?;
    let hits = count_hits(spec, &sampler, horizon, |n, s| match direction {
        Direction::Upper => s[0] >= levels[n - 1],
        Direction::Lower => s[0] <= levels[n - 1],
    });
    Ok(McEstimate::from_hits(hits, spec.reps))
}

/// Line through `(m, m * theta)` with slope `slope`, as an expression in `n`.
pub fn crossing_boundary(m: u64, theta: f64, slope: f64) -> Expr {
    let text = format!("{:?} + (n - {m}) * ({slope:?})", m as f64 * theta);
    Expr::parse_with(&text, &["n"]).expect("boundary expression is well formed")
}

/// One row of a verification suite.
///
/// Dominance rows hold the Monte Carlo frequency in `value`, the bound in
/// `reference` and three standard errors in `tolerance`; other suites hold
/// a computed quantity, its target and the allowed deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub label: String,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub cells: Vec<CellReport>,
    pub violations: usize,
}

impl SuiteReport {
    fn new(suite: &str, cells: Vec<CellReport>) -> Self {
        let violations = cells.iter().filter(|c| !c.ok).count();
        Self {
            suite: suite.to_string(),
            cells,
            violations,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub reps: u64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            reps: 100_000,
            seed: 20_240_601,
        }
    }
}

fn dominance_cell(label: String, bound: f64, est: McEstimate) -> CellReport {
    let tolerance = 3.0 * est.stderr;
    CellReport {
        ok: bound + tolerance >= est.p_hat,
        label,
        value: est.p_hat,
        reference: bound,
        tolerance,
    }
}

fn cell_seed(cfg: &SuiteConfig, suite: u64, cell: usize) -> u64 {
    cfg.seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(suite << 32)
        .wrapping_add(cell as u64)
}

const SAMPLE_SIZES: [u64; 4] = [5, 10, 20, 40];

fn scalar_crossing_cell(
    cfg: &SuiteConfig,
    suite: u64,
    cell: usize,
    family: SamplerFamily,
    m: u64,
    theta: f64,
    zeta: f64,
    slope: f64,
    bound: f64,
    label: String,
) -> Result<CellReport, OracleError> {
    let horizon = 20 * m as usize;
    let spec = SamplerSpec {
        family,
        n: horizon,
        reps: cfg.reps,
        seed: cell_seed(cfg, suite, cell),
    };
    let direction = if zeta >= 0.0 { Direction::Upper } else { Direction::Lower };
    let est = mc_sup_crossing(&spec, &crossing_boundary(m, theta, slope), horizon, direction)?;
    Ok(dominance_cell(label, bound, est))
}

fn bernoulli_suite(cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    let mu: f64 = 0.5;
    let mut cells = Vec::new();
    for (i, (m, theta)) in grid(&SAMPLE_SIZES, &[0.3, 0.4, 0.6, 0.7, 0.8]).enumerate() {
        let r = chernoff::uniform_bound_bernoulli(mu, theta, m)?;
        let zeta = r.zeta.unwrap_or(0.0);
        let slope = (mu * zeta.exp() + 1.0 - mu).ln() / zeta;
        cells.push(scalar_crossing_cell(
            cfg,
            1,
            i,
            SamplerFamily::Bernoulli { p: mu },
            m,
            theta,
            zeta,
            slope,
            r.bound,
            format!("mu={mu} theta={theta} m={m}"),
        )?);
    }
    Ok(SuiteReport::new("chernoff-bernoulli", cells))
}

fn bounded_variance_suite(cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    // the centered coin is zero-mean, bounded by 1/2, with variance 1/4
    let b: f64 = 0.5;
    let mut cells = Vec::new();
    for (i, (m, (nu, eps))) in grid(
        &SAMPLE_SIZES,
        &[(0.25, 0.1), (0.25, 0.2), (0.25, 0.3), (0.3, 0.15), (0.3, 0.25)],
    )
    .enumerate()
    {
        let r = chernoff::uniform_bound_bounded_variance(b, nu, eps, m)?;
        let zeta = r.zeta.unwrap_or(0.0);
        let d = b * b + nu;
        let phi = (b * b / d * (-nu / b * zeta).exp() + nu / d * (b * zeta).exp()).ln();
        cells.push(scalar_crossing_cell(
            cfg,
            2,
            i,
            SamplerFamily::CenteredCoin,
            m,
            eps,
            zeta,
            phi / zeta,
            r.bound,
            format!("b={b} nu={nu} eps={eps} m={m}"),
        )?);
    }
    Ok(SuiteReport::new("chernoff-bounded-variance", cells))
}

fn normal_suite(cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    let (mu, nu) = (0.0, 1.0);
    let mut cells = Vec::new();
    for (i, (m, theta)) in grid(&SAMPLE_SIZES, &[-0.6, -0.3, 0.3, 0.6, 1.0]).enumerate() {
        let r = chernoff::uniform_bound_normal(mu, nu, theta, m)?;
        let zeta = r.zeta.unwrap_or(0.0);
        let slope = mu + nu * zeta / 2.0;
        cells.push(scalar_crossing_cell(
            cfg,
            3,
            i,
            SamplerFamily::Normal { mu, nu },
            m,
            theta,
            zeta,
            slope,
            r.bound,
            format!("mu={mu} nu={nu} theta={theta} m={m}"),
        )?);
    }
    Ok(SuiteReport::new("chernoff-normal", cells))
}

fn poisson_suite(cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    let lambda: f64 = 1.0;
    let mut cells = Vec::new();
    for (i, (m, theta)) in grid(&SAMPLE_SIZES, &[0.4, 0.7, 1.4, 1.7, 2.0]).enumerate() {
        let r = chernoff::uniform_bound_poisson(lambda, theta, m)?;
        let zeta = r.zeta.unwrap_or(0.0);
        let slope = lambda * zeta.exp_m1() / zeta;
        cells.push(scalar_crossing_cell(
            cfg,
            4,
            i,
            SamplerFamily::Poisson { lambda },
            m,
            theta,
            zeta,
            slope,
            r.bound,
            format!("lambda={lambda} theta={theta} m={m}"),
        )?);
    }
    Ok(SuiteReport::new("chernoff-poisson", cells))
}

fn generic_cumulant_suite(cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    let p = 0.3;
    let spec = chernoff::bernoulli_cumulant(p, 30.0)?;
    let mut cells = Vec::new();
    for (i, (m, theta)) in grid(&SAMPLE_SIZES, &[0.1, 0.2, 0.45, 0.55, 0.7]).enumerate() {
        let inf = chernoff::chernoff_inf(&spec, theta)?;
        let r = inf.for_samples(m);
        cells.push(scalar_crossing_cell(
            cfg,
            5,
            i,
            SamplerFamily::Bernoulli { p },
            m,
            theta,
            inf.zeta,
            inf.ratio_phi_zeta,
            r.bound,
            format!("cumulant ln({p} e^s + {}) theta={theta} m={m}", 1.0 - p),
        )?);
    }
    Ok(SuiteReport::new("chernoff-generic", cells))
}

fn grid<A: Copy, B: Copy>(a: &[A], b: &[B]) -> impl Iterator<Item = (A, B)> {
    let b = b.to_vec();
    a.to_vec().into_iter().flat_map(move |x| b.clone().into_iter().map(move |y| (x, y)))
}

fn max_norm_crossing(
    cfg: &SuiteConfig,
    suite: u64,
    cell: usize,
    family: SamplerFamily,
    n: usize,
    level: f64,
) -> Result<McEstimate, OracleError> {
    let spec = SamplerSpec {
        family,
        n,
        reps: cfg.reps,
        seed: cell_seed(cfg, suite, cell),
    };
    let boundary = Expr::parse_with(&format!("{level:?}"), &["n"])?;
    mc_sup_crossing(&spec, &boundary, n, Direction::Upper)
}

const VECTOR_DIM: usize = 3;

fn bounded_vector_suite(cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    let mut cells = Vec::new();
    let families = [
        ("sphere", SamplerFamily::SphereUniform { d: VECTOR_DIM }),
        ("ball", SamplerFamily::BallUniform { d: VECTOR_DIM }),
    ];
    let mut i = 0;
    for (name, family) in &families {
        for (n, eps) in grid(&[10usize, 25], &[0.3, 0.4, 0.5, 0.6, 0.8]) {
            let est = max_norm_crossing(cfg, 6, i, family.clone(), n, n as f64 * eps)?;
            let by_radius = vecbounds::iid_bounded_bound(vecbounds::mean_square(&vec![1.0; n])?, n as u64, eps)?;
            let by_diameter = vecbounds::iid_bounded_bound(vecbounds::mean_square(&vec![2.0; n])?, n as u64, eps)?;
            let mut c = dominance_cell(format!("{name} d={VECTOR_DIM} n={n} eps={eps}"), by_radius.bound, est);
            c.ok &= by_diameter.bound + c.tolerance >= c.value;
            cells.push(c);
            i += 1;
        }
    }
    Ok(SuiteReport::new("vec-bounded", cells))
}

fn martingale_suite(cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    let mut cells = Vec::new();
    for (i, (n, eps)) in grid(&[4usize, 9, 16, 25], &[1.5, 2.0, 2.5, 3.0, 3.5]).enumerate() {
        let eps = eps * (n as f64).sqrt();
        let spec = SamplerSpec {
            family: SamplerFamily::SphereUniform { d: VECTOR_DIM },
            n,
            reps: cfg.reps,
            seed: cell_seed(cfg, 7, i),
        };
        let est = mc_tail(&spec, eps / n as f64)?;
        let bound = vecbounds::martingale_bound(&vec![1.0; n], eps)?.bound;
        cells.push(dominance_cell(format!("sphere n={n} eps={eps:.4}"), bound, est));
    }
    Ok(SuiteReport::new("vec-martingale", cells))
}

fn mgf_suite(cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    // unit-norm increments: E exp(s ||X||) = e^s
    let g = Expr::parse_with("exp(s)", &["s"])?;
    let mut cells = Vec::new();
    for (i, (n, eps)) in grid(&[10usize, 20, 40, 80], &[0.2, 0.3, 0.4, 0.5, 0.7]).enumerate() {
        let bound = vecbounds::mgf_vector_bound(&g, 5.0, eps, n as u64)?.bound;
        let est = max_norm_crossing(cfg, 8, i, SamplerFamily::SphereUniform { d: VECTOR_DIM }, n, n as f64 * eps)?;
        cells.push(dominance_cell(format!("sphere d={VECTOR_DIM} n={n} eps={eps}"), bound, est));
    }
    Ok(SuiteReport::new("vec-mgf", cells))
}

fn ball_second_moment(d: usize) -> f64 {
    d as f64 / (d as f64 + 2.0)
}

fn variance_range_suite(cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    let sigma = ball_second_moment(VECTOR_DIM).sqrt();
    let mut cells = Vec::new();
    for (i, (n, eps)) in grid(&[10usize, 20, 40, 80], &[0.15, 0.25, 0.35, 0.5, 0.7]).enumerate() {
        let t = vecbounds::variance_range_bound(sigma, 1.0, n as u64, eps)?;
        let est = max_norm_crossing(cfg, 9, i, SamplerFamily::BallUniform { d: VECTOR_DIM }, n, n as f64 * eps)?;
        let mut c = dominance_cell(format!("ball d={VECTOR_DIM} n={n} eps={eps}"), t.tier1.bound, est);
        for tier in [t.tier2, t.tier2_relaxed, t.tier3] {
            c.ok &= tier.bound + c.tolerance >= c.value;
        }
        cells.push(c);
    }
    Ok(SuiteReport::new("vec-variance-range", cells))
}

fn small_deviation_suite(cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    let var = ball_second_moment(VECTOR_DIM);
    let mut cells = Vec::new();
    for (i, (n, frac)) in grid(&[10usize, 20, 40, 80], &[0.2, 0.4, 0.6, 0.8, 0.95]).enumerate() {
        let s_n = (n as f64 * var).sqrt();
        let c_n = 1.0 / s_n;
        let x = frac / (PHI * c_n);
        let bound = vecbounds::small_deviation_bound(c_n, x)?.bound;
        let est = max_norm_crossing(cfg, 10, i, SamplerFamily::BallUniform { d: VECTOR_DIM }, n, x * s_n)?;
        cells.push(dominance_cell(format!("ball d={VECTOR_DIM} n={n} x={x:.4}"), bound, est));
    }
    Ok(SuiteReport::new("vec-small-deviation", cells))
}

fn componentwise_suite(cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    let mut cells = Vec::new();
    for (i, (d, frac)) in grid(&[1usize, 2, 3, 4], &[0.1, 0.3, 0.5, 0.7, 0.9]).enumerate() {
        // uniform components on [-1, 1]: E||X||^2 = d/3 and ||X|| <= sqrt(d)
        let (low, high) = ((d as f64 / 3.0).sqrt(), (d as f64).sqrt());
        let eps = low + frac * (high - low);
        let spec = SamplerSpec {
            family: SamplerFamily::CubeUniform { d },
            n: 1,
            reps: cfg.reps,
            seed: cell_seed(cfg, 11, i),
        };
        let est = mc_tail(&spec, eps)?;
        let radii = ComponentBounds::Radii {
            radii: vec![1.0; d],
            sigma2: d as f64 / 3.0,
        };
        let bound = vecbounds::componentwise_tail(&radii, eps)?.bound;
        let mut c = dominance_cell(format!("cube d={d} eps={eps:.4}"), bound, est);
        if eps > high * 0.999 {
            let ranges = ComponentBounds::Ranges {
                ranges: vec![(-1.0, 1.0); d],
            };
            c.ok &= vecbounds::componentwise_tail(&ranges, eps)?.bound + c.tolerance >= c.value;
        }
        cells.push(c);
    }
    Ok(SuiteReport::new("vec-componentwise", cells))
}

fn golden_scalar_suite(cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    // |Z| <= phi, so the bounded-vector bound applies in one dimension
    let mut cells = Vec::new();
    for (i, (n, eps)) in grid(&[10usize, 20, 40, 80], &[0.3, 0.5, 0.7, 0.9, 1.1]).enumerate() {
        let est = max_norm_crossing_scalar_abs(cfg, 12, i, n, n as f64 * eps)?;
        let bound = vecbounds::iid_bounded_bound(PHI * PHI, n as u64, eps)?.bound;
        cells.push(dominance_cell(format!("golden n={n} eps={eps}"), bound, est));
    }
    Ok(SuiteReport::new("vec-golden-scalar", cells))
}

fn max_norm_crossing_scalar_abs(
    cfg: &SuiteConfig,
    suite: u64,
    cell: usize,
    n: usize,
    level: f64,
) -> Result<McEstimate, OracleError> {
    let spec = SamplerSpec {
        family: SamplerFamily::GoldenZ,
        n,
        reps: cfg.reps,
        seed: cell_seed(cfg, suite, cell),
    };
    let sampler = check_spec(&spec)?;
    let hits = count_hits(&spec, &sampler, n, |_, s| s[0].abs() >= level);
    Ok(McEstimate::from_hits(hits, spec.reps))
}

pub const DOMINANCE_SUITES: [&str; 12] = [
    "chernoff-bernoulli",
    "chernoff-bounded-variance",
    "chernoff-normal",
    "chernoff-poisson",
    "chernoff-generic",
    "vec-bounded",
    "vec-martingale",
    "vec-mgf",
    "vec-variance-range",
    "vec-small-deviation",
    "vec-componentwise",
    "vec-golden-scalar",
];

pub const CHECK_SUITES: [&str; 4] = ["golden", "asymptotic", "routh", "lp"];

/// Runs a named suite; see [`DOMINANCE_SUITES`] and [`CHECK_SUITES`].
pub fn run_suite(name: &str, cfg: &SuiteConfig) -> Result<SuiteReport, OracleError> {
    match name {
        "chernoff-bernoulli" => bernoulli_suite(cfg),
        "chernoff-bounded-variance" => bounded_variance_suite(cfg),
        "chernoff-normal" => normal_suite(cfg),
        "chernoff-poisson" => poisson_suite(cfg),
        "chernoff-generic" => generic_cumulant_suite(cfg),
        "vec-bounded" => bounded_vector_suite(cfg),
        "vec-martingale" => martingale_suite(cfg),
        "vec-mgf" => mgf_suite(cfg),
        "vec-variance-range" => variance_range_suite(cfg),
        "vec-small-deviation" => small_deviation_suite(cfg),
        "vec-componentwise" => componentwise_suite(cfg),
        "vec-golden-scalar" => golden_scalar_suite(cfg),
        "golden" => Ok(golden_suite()),
        "asymptotic" => asymptotic_suite(),
        "routh" => Ok(routh_suite(cfg.seed, 500)),
        "lp" => Ok(lp_suite(cfg.seed, 500)),
        other => Err(OracleError::UnknownSuite(other.to_string())),
    }
}

fn check(label: &str, value: f64, reference: f64, tolerance: f64) -> CellReport {
    CellReport {
        label: label.to_string(),
        value,
        reference,
        tolerance,
        ok: (value - reference).abs() <= tolerance,
    }
}

fn at_least(label: &str, value: f64, floor: f64) -> CellReport {
    CellReport {
        label: label.to_string(),
        value,
        reference: floor,
        tolerance: 0.0,
        ok: value >= floor,
    }
}

/// Moment and range identities of the golden law.
pub fn golden_suite() -> SuiteReport {
    let z = GoldenDistribution::default();
    let (lo, hi) = z.range();
    let mut cells = vec![
        check("E[Z]", vecbounds::golden_moment(1), 0.0, 1e-15),
        check("E[Z^2]", vecbounds::golden_moment(2), 1.0, 1e-14),
        check("direct E[Z]", z.moment(1), 0.0, 1e-15),
        check("total mass", z.p_plus + z.p_minus, 1.0, 1e-15),
    ];
    for k in 2..=20 {
        cells.push(at_least(&format!("E[Z^{k}]"), vecbounds::golden_moment(k), 1.0 - 1e-12));
    }
    cells.push(check("U_Z - L_Z", hi - lo, 5f64.sqrt(), 1e-15));
    cells.push(check("max(U_Z, |L_Z|)", hi.max(lo.abs()), PHI, 1e-15));
    SuiteReport::new("golden", cells)
}

/// Contraction of the rate and boundary-slope errors for the centered coin
/// as the deviation halves.
pub fn asymptotic_suite() -> Result<SuiteReport, OracleError> {
    let c = chernoff::centered_coin_cumulant(20.0)?;
    let eps = [0.1, 0.05, 0.025];
    let reports = chernoff::asymptotic_check(&c, 0.25, 0.0, &eps)?;
    let rate_err: Vec<f64> = reports.iter().map(|r| (r.rate - r.gaussian_rate).abs()).collect();
    let slope_err: Vec<f64> = reports
        .iter()
        .map(|r| (r.ratio_phi_zeta - r.epsilon / 2.0).abs())
        .collect();
    let mut cells = Vec::new();
    for i in 0..2 {
        cells.push(at_least(
            &format!("rate error contraction {} -> {}", eps[i], eps[i + 1]),
            rate_err[i] / rate_err[i + 1],
            6.0,
        ));
        cells.push(at_least(
            &format!("slope error contraction {} -> {}", eps[i], eps[i + 1]),
            slope_err[i] / slope_err[i + 1],
            3.0,
        ));
    }
    for r in &reports {
        cells.push(at_least(&format!("zeta sign at eps={}", r.epsilon), r.zeta * r.epsilon.signum(), 0.0));
    }
    Ok(SuiteReport::new("asymptotic", cells))
}

/// Routh classification of constructed quartics against their roots, plus
/// the nominal plant margins.
pub fn routh_suite(seed: u64, count: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut disagreements = 0usize;
    let mut checked = 0usize;
    while checked < count {
        let (p, truth) = constructed_quartic(&mut rng, 0.05);
        let Ok(r) = routh::routh_stable(&p) else {
            disagreements += 1;
            checked += 1;
            continue;
        };
        if r.margins.iter().any(|m| m.abs() < 1e-9) {
            continue;
        }
        if r.stable != truth {
            disagreements += 1;
        }
        checked += 1;
    }
    let mut cells = vec![check(
        &format!("disagreements over {count} quartics"),
        disagreements as f64,
        0.0,
        0.0,
    )];
    let [a1, a2, a3, a4] = routh::plant_coefficients([0.0; 3]);
    let m = routh::quartic_margins(a1, a2, a3, a4);
    for (name, (got, want)) in ["a1", "a4", "a1a2-a3", "(a1a2-a3)a3-a1^2a4"]
        .iter()
        .zip(m.iter().zip([20.0, 1600.0, 1440.0, 857_600.0]))
    {
        cells.push(check(&format!("nominal {name}"), *got, want, 0.0));
    }
    SuiteReport::new("routh", cells)
}

/// Random weight programs with at most 6 points and 3 moments: simplex
/// value against vertex enumeration.
pub fn lp_suite(seed: u64, count: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut worst: f64 = 0.0;
    let mut status_mismatch = 0usize;
    for _ in 0..count {
        let l = rng.gen_range(1..=6);
        let k = rng.gen_range(1..=3);
        let lower: Vec<f64> = (0..k).map(|_| rng.gen_range(-0.6..0.3)).collect();
        let upper: Vec<f64> = lower.iter().map(|lo| lo + rng.gen_range(0.0..0.6)).collect();
        let p = ThetaLP {
            objective_coeffs: (0..l).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            moment_matrix: (0..k).map(|_| (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            moment_box: BoxRegion::new(lower, upper).expect("ordered bounds"),
        };
        let s = solve_lp(&p);
        match lp_vertex_max(&p) {
            Some(v) if s.is_optimal() => worst = worst.max((v - s.value).abs()),
            None if !s.is_optimal() => {}
            _ => status_mismatch += 1,
        }
    }
    SuiteReport::new(
        "lp",
        vec![
            check(&format!("max |simplex - vertex| over {count} programs"), worst, 0.0, 1e-8),
            check("feasibility disagreements", status_mismatch as f64, 0.0, 0.0),
        ],
    )
}
