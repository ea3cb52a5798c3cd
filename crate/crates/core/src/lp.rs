//! Dense two-phase simplex for the weight program over fixed support points.
//!
//! For support points `y_1..y_L` the program is
//!
//! ```text
//! maximize   sum_l c_l theta_l
//! subject to theta >= 0,  sum_l theta_l = 1,  lower <= F theta <= upper
//! ```
//!
//! with `F[j][l] = f_j(y_l)`. Bland's rule is used in both phases, so the
//! method terminates on degenerate instances. Rows are scaled to unit
//! infinity norm before pivoting.

use crate::model::BoxRegion;

pub const PIVOT_TOL: f64 = 1e-10;
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    /// Never expected for weight programs; signals an internal error.
    UnboundedGuard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaLP {
    pub objective_coeffs: Vec<f64>,
    /// `k` rows of `L` entries.
    pub moment_matrix: Vec<Vec<f64>>,
    pub moment_box: BoxRegion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub theta: Vec<f64>,
    pub value: f64,
    pub status: LpStatus,
    /// Multipliers of `F theta <= upper` (nonnegative).
    pub dual_upper: Vec<f64>,
    /// Multipliers of `F theta >= lower` (nonnegative).
    pub dual_lower: Vec<f64>,
    /// Multiplier of `sum theta = 1`.
    pub dual_total: f64,
    /// Phase-one residual (scaled units); zero when feasible.
    pub infeasibility: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// `upper_j - lower_j` multipliers, i.e. the price of moment `j`.
    pub fn moment_prices(&self) -> Vec<f64> {
        self.dual_upper
            .iter()
            .zip(&self.dual_lower)
            .map(|(u, l)| u - l)
            .collect()
    }
}

pub fn solve_lp(p: &ThetaLP) -> LpSolution {
    solve_weight_program(
        &p.objective_coeffs,
        &p.moment_matrix,
        &p.moment_matrix,
        &p.moment_box,
    )
}

// rows: lo.theta <= upper, hi.theta >= lower, sum theta = 1
fn solve_weight_program(
    c: &[f64],
    lo: &[Vec<f64>],
    hi: &[Vec<f64>],
    moment_box: &BoxRegion,
) -> LpSolution {
    let l = c.len();
    let k = lo.len();
    let mut rows = Vec::with_capacity(2 * k + 1);
    for j in 0..k {
        rows.push(Row {
            coeffs: lo[j].clone(),
            kind: RowKind::Le,
            rhs: moment_box.upper[j],
        });
        rows.push(Row {
            coeffs: hi[j].clone(),
            kind: RowKind::Ge,
            rhs: moment_box.lower[j],
        });
    }
    rows.push(Row {
        coeffs: vec![1.0; l],
        kind: RowKind::Eq,
        rhs: 1.0,
    });
    let sol = DenseLp {
        objective: c.to_vec(),
        rows,
    }
    .solve();
    let mut dual_upper = Vec::with_capacity(k);
    let mut dual_lower = Vec::with_capacity(k);
    for j in 0..k {
        dual_upper.push(sol.duals[2 * j].max(0.0));
        dual_lower.push((-sol.duals[2 * j + 1]).max(0.0));
    }
    LpSolution {
        theta: sol.x,
        value: sol.value,
        status: sol.status,
        dual_upper,
        dual_lower,
        dual_total: sol.duals[2 * k],
        infeasibility: sol.infeasibility,
    }
}

/// Weight program whose columns carry interval coefficients: mass in column
/// `l` may realize any moment vector in `[f_lo[.][l], f_hi[.][l]]`.
///
/// Feasibility reduces to `F_lo theta <= upper` and `F_hi theta >= lower`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedThetaLP {
    pub objective_coeffs: Vec<f64>,
    pub moment_lo: Vec<Vec<f64>>,
    pub moment_hi: Vec<Vec<f64>>,
    pub moment_box: BoxRegion,
}

impl RelaxedThetaLP {
    pub fn solve(&self) -> LpSolution {
        solve_weight_program(
            &self.objective_coeffs,
            &self.moment_lo,
            &self.moment_hi,
            &self.moment_box,
        )
    }

    /// Upper bound on the relaxation valid for any nonnegative multipliers:
    /// `mu.upper - nu.lower + max_l (c_l - mu.F_lo[l] + nu.F_hi[l])`.
    ///
    /// Evaluated with upward-biased rounding so floating-point error in the
    /// multipliers cannot make it invalid.
    pub fn dual_bound(&self, mu: &[f64], nu: &[f64]) -> f64 {
        let k = self.moment_lo.len();
        let slack = |x: f64| x + x.abs() * 4.0 * f64::EPSILON + f64::MIN_POSITIVE;
        let mut constant = 0.0;
        for j in 0..k {
            constant += slack(mu[j] * self.moment_box.upper[j]);
            constant += slack(-nu[j] * self.moment_box.lower[j]);
        }
        let mut best = f64::NEG_INFINITY;
        for (col, &c) in self.objective_coeffs.iter().enumerate() {
            let mut v = c;
            for j in 0..k {
                v += slack(-mu[j] * self.moment_lo[j][col]);
                v += slack(nu[j] * self.moment_hi[j][col]);
            }
            best = best.max(v);
        }
        slack(constant + best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub coeffs: Vec<f64>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// `maximize c.x  s.t.  rows, x >= 0`.
#[derive(Debug, Clone)]
pub(crate) struct DenseLp {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub(crate) struct DenseSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub value: f64,
    /// Lagrange multipliers in the original row orientation:
    /// `>= 0` for `Le`, `<= 0` for `Ge`, free for `Eq`.
    pub duals: Vec<f64>,
    pub infeasibility: f64,
}

struct Tableau {
    // m rows of (ncols + 1) entries; last entry is the rhs
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.ncols + 1;
        let p = self.t[row][col];
        {
            let r = &mut self.t[row];
            for v in r.iter_mut() {
                *v /= p;
            }
            r[col] = 1.0;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for j in 0..w {
                    r[j] -= f * pivot_row[j];
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Reduced costs `c_j - c_B B^-1 A_j` for a maximization objective.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (i, r) in self.t.iter().enumerate() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..self.ncols {
                    d[j] -= cb * r[j];
                }
            }
        }
        d
    }

    fn objective_value(&self, cost: &[f64]) -> f64 {
        self.t
            .iter()
            .enumerate()
            .map(|(i, r)| cost[self.basis[i]] * r[self.ncols])
            .sum()
    }

    /// Bland's rule. Returns false when unbounded or out of iterations.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool], max_iter: usize) -> bool {
        for _ in 0..max_iter {
            let d = self.reduced_costs(cost);
            let entering = (0..self.ncols).find(|&j| allowed[j] && d[j] > PIVOT_TOL);
            let Some(col) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, r) in self.t.iter().enumerate() {
                let a = r[col];
                if a > PIVOT_TOL {
                    let ratio = r[self.ncols] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-14
                                || (ratio <= br + 1e-14 && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((row, _)) => self.pivot(row, col),
                None => return false,
            }
        }
        false
    }
}

impl DenseLp {
    pub(crate) fn solve(&self) -> DenseSolution {
        let n = self.objective.len();
        let m = self.rows.len();

        // scale and orient rows so that rhs >= 0
        let mut scale = vec![1.0; m];
        let mut sign = vec![1.0; m];
        let mut kinds = Vec::with_capacity(m);
        let mut a: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        for (i, row) in self.rows.iter().enumerate() {
            let norm = row.coeffs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if norm > 0.0 {
                scale[i] = 1.0 / norm;
            }
            let mut coeffs: Vec<f64> = row.coeffs.iter().map(|v| v * scale[i]).collect();
            let mut rhs = row.rhs * scale[i];
            let mut kind = row.kind;
            if rhs < 0.0 {
                sign[i] = -1.0;
                coeffs.iter_mut().for_each(|v| *v = -*v);
                rhs = -rhs;
                kind = match kind {
                    RowKind::Le => RowKind::Ge,
                    RowKind::Ge => RowKind::Le,
                    RowKind::Eq => RowKind::Eq,
                };
            }
            a.push(coeffs);
            b.push(rhs);
            kinds.push(kind);
        }

        // column layout: structural | slack/surplus | artificial
        let n_slack = kinds.iter().filter(|k| **k != RowKind::Eq).count();
        let n_art = kinds.iter().filter(|k| **k != RowKind::Le).count();
        let ncols = n + n_slack + n_art;
        let mut t = vec![vec![0.0; ncols + 1]; m];
        let mut basis = vec![0; m];
        let mut unit_col = vec![0; m];
        let mut is_art = vec![false; ncols];
        let mut next_slack = n;
        let mut next_art = n + n_slack;
        for i in 0..m {
            t[i][..n].copy_from_slice(&a[i]);
            t[i][ncols] = b[i];
            match kinds[i] {
                RowKind::Le => {
                    t[i][next_slack] = 1.0;
                    basis[i] = next_slack;
                    unit_col[i] = next_slack;
                    next_slack += 1;
                }
                RowKind::Ge => {
                    t[i][next_slack] = -1.0;
                    next_slack += 1;
                    t[i][next_art] = 1.0;
                    basis[i] = next_art;
                    unit_col[i] = next_art;
                    is_art[next_art] = true;
                    next_art += 1;
                }
                RowKind::Eq => {
                    t[i][next_art] = 1.0;
                    basis[i] = next_art;
                    unit_col[i] = next_art;
                    is_art[next_art] = true;
                    next_art += 1;
                }
            }
        }
        let mut tab = Tableau { t, basis, ncols };
        let max_iter = 50 * (ncols + m) + 1000;

        // phase one: maximize -sum(artificials)
        let phase1_cost: Vec<f64> = (0..ncols).map(|j| if is_art[j] { -1.0 } else { 0.0 }).collect();
        let all = vec![true; ncols];
        if n_art > 0 {
            if !tab.optimize(&phase1_cost, &all, max_iter) {
                return self.failed(LpStatus::UnboundedGuard, f64::NAN);
            }
            let residual = -tab.objective_value(&phase1_cost);
            if residual > FEAS_TOL {
                return self.failed(LpStatus::Infeasible, residual);
            }
            // drive zero-level artificials out of the basis
            for i in 0..m {
                if is_art[tab.basis[i]] {
                    if let Some(col) = (0..ncols).find(|&j| !is_art[j] && tab.t[i][j].abs() > PIVOT_TOL) {
                        tab.pivot(i, col);
                    }
                }
            }
        }

        // phase two
        let mut cost = vec![0.0; ncols];
        cost[..n].copy_from_slice(&self.objective);
        let allowed: Vec<bool> = (0..ncols).map(|j| !is_art[j]).collect();
        if !tab.optimize(&cost, &allowed, max_iter) {
            return self.failed(LpStatus::UnboundedGuard, 0.0);
        }

        let mut x = vec![0.0; n];
        for (i, &col) in tab.basis.iter().enumerate() {
            if col < n {
                x[col] = tab.t[i][ncols].max(0.0);
            }
        }
        // y = c_B B^-1: B^-1 sits under the initial unit columns
        let mut duals = vec![0.0; m];
        for r in 0..m {
            let col = unit_col[r];
            let y: f64 = (0..m).map(|i| cost[tab.basis[i]] * tab.t[i][col]).sum();
            duals[r] = y * sign[r] * scale[r];
        }
        let value = x.iter().zip(&self.objective).map(|(a, b)| a * b).sum();
        DenseSolution {
            status: LpStatus::Optimal,
            x,
            value,
            duals,
            infeasibility: 0.0,
        }
    }

    fn failed(&self, status: LpStatus, residual: f64) -> DenseSolution {
        DenseSolution {
            status,
            x: vec![0.0; self.objective.len()],
            value: f64::NEG_INFINITY,
            duals: vec![0.0; self.rows.len()],
            infeasibility: residual,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::lp_vertex_max as enumerate_vertices;
    use proptest::prelude::*;

    fn one_dim(points: &[f64], b: (f64, f64), c: &[f64]) -> ThetaLP {
        ThetaLP {
            objective_coeffs: c.to_vec(),
            moment_matrix: vec![points.to_vec()],
            moment_box: BoxRegion::new(vec![b.0], vec![b.1]).unwrap(),
        }
    }

    #[test]
    fn two_point_markov_vertex() {
        let s = solve_lp(&one_dim(&[0.0, 0.9], (0.5, 0.5), &[0.0, 1.0]));
        assert!(s.is_optimal());
        assert!((s.theta[0] - 4.0 / 9.0).abs() < 1e-12);
        assert!((s.theta[1] - 5.0 / 9.0).abs() < 1e-12);
        assert!((s.value - 5.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn forced_single_point() {
        let g = 0.5f64 * 0.5;
        let s = solve_lp(&one_dim(&[0.5], (0.5, 0.5), &[g]));
        assert!(s.is_optimal());
        assert_eq!(s.theta, vec![1.0]);
        assert!((s.value - g).abs() < 1e-15);
    }

    #[test]
    fn unreachable_moment_is_infeasible() {
        let s = solve_lp(&one_dim(&[0.0, 0.1], (0.5, 0.5), &[0.0, 1.0]));
        assert_eq!(s.status, LpStatus::Infeasible);
        assert!(s.infeasibility > 0.0);
    }

    #[test]
    fn strong_duality_on_markov() {
        let p = one_dim(&[0.0, 0.9, 0.3], (0.4, 0.6), &[0.0, 1.0, 0.0]);
        let s = solve_lp(&p);
        let dual_obj = s.dual_total + s.dual_upper[0] * 0.6 - s.dual_lower[0] * 0.4;
        assert!((dual_obj - s.value).abs() < 1e-12, "{dual_obj} vs {}", s.value);
        assert!((s.value - 0.6 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn relaxed_dual_bound_dominates() {
        let r = RelaxedThetaLP {
            objective_coeffs: vec![0.0, 0.0, 1.0],
            moment_lo: vec![vec![0.0, 0.4, 0.85]],
            moment_hi: vec![vec![0.4, 0.85, 1.0]],
            moment_box: BoxRegion::new(vec![0.5], vec![0.5]).unwrap(),
        };
        let s = r.solve();
        assert!(s.is_optimal());
        let bound = r.dual_bound(&s.dual_upper, &s.dual_lower);
        assert!(bound >= s.value && bound - s.value < 1e-10);
        assert!((s.value - 0.5 / 0.85).abs() < 1e-12);
    }

    fn instance() -> impl Strategy<Value = ThetaLP> {
        (1usize..=6, 1usize..=3).prop_flat_map(|(l, k)| {
            (
                prop::collection::vec(-2.0f64..2.0, l),
                prop::collection::vec(prop::collection::vec(-1.0f64..1.0, l), k),
                prop::collection::vec((-0.6f64..0.3, 0.0f64..0.6), k),
            )
                .prop_map(|(c, f, b)| ThetaLP {
                    objective_coeffs: c,
                    moment_matrix: f,
                    moment_box: BoxRegion::new(
                        b.iter().map(|x| x.0).collect(),
                        b.iter().map(|x| x.0 + x.1).collect(),
                    )
                    .unwrap(),
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn matches_vertex_enumeration(p in instance()) {
            let s = solve_lp(&p);
            let brute = enumerate_vertices(&p);
            match brute {
                None => prop_assert_eq!(s.status, LpStatus::Infeasible),
                Some(v) => {
                    prop_assert!(s.is_optimal(), "solver {:?} but vertex value {}", s.status, v);
                    prop_assert!((s.value - v).abs() < 1e-8, "{} vs {}", s.value, v);
                    let total: f64 = s.theta.iter().sum();
                    prop_assert!(s.theta.iter().all(|t| *t >= -1e-12));
                    prop_assert!((total - 1.0).abs() < 1e-9);
                    for (j, row) in p.moment_matrix.iter().enumerate() {
                        let m: f64 = row.iter().zip(&s.theta).map(|(a, b)| a * b).sum();
                        prop_assert!(m >= p.moment_box.lower[j] - 1e-9 && m <= p.moment_box.upper[j] + 1e-9);
                    }
                }
            }
        }

        #[test]
        fn objective_scaling(p in instance(), lambda in 0.1f64..10.0) {
            let s = solve_lp(&p);
            prop_assume!(s.is_optimal());
            let mut scaled = p.clone();
            scaled.objective_coeffs.iter_mut().for_each(|c| *c *= lambda);
            let t = solve_lp(&scaled);
            prop_assert!(t.is_optimal());
            prop_assert!((t.value - lambda * s.value).abs() < 1e-8 * lambda.max(1.0));
            // the returned argmax stays optimal for the unscaled objective
            let v: f64 = t.theta.iter().zip(&p.objective_coeffs).map(|(a, b)| a * b).sum();
            prop_assert!((v - s.value).abs() < 1e-8);
        }
    }
}
