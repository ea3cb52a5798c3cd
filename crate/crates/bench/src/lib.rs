//! Fixtures shared by the benchmarks.

use momentbound_core::expr;
use momentbound_core::lp::ThetaLP;
use momentbound_core::model::{BoxRegion, MomentProblem, Objective};

/// `sup Pr{X >= 0.9}` over `[0, 1]` with mean `0.5`.
pub fn markov_problem() -> MomentProblem {
    MomentProblem {
        domain: BoxRegion::new(vec![0.0], vec![1.0]).unwrap(),
        moment_map: vec![expr::parse("x1", 1).unwrap()],
        moment_set: BoxRegion::new(vec![0.5], vec![0.5]).unwrap(),
        event: expr::parse("0.9 - x1", 1).unwrap(),
        objective: Objective::IndicatorOfEvent,
    }
}

/// Two-dimensional event problem with a curved boundary.
pub fn hyperbola_problem() -> MomentProblem {
    MomentProblem {
        domain: BoxRegion::cube(2, 0.0, 1.0).unwrap(),
        moment_map: vec![expr::parse("x1 + x2", 2).unwrap()],
        moment_set: BoxRegion::new(vec![0.6], vec![0.6]).unwrap(),
        event: expr::parse("0.5 - x1*x2", 2).unwrap(),
        objective: Objective::IndicatorOfEvent,
    }
}

/// Weight program over `points` support locations with `k` moment rows.
pub fn theta_lp(points: usize, k: usize) -> ThetaLP {
    let x: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1).max(1) as f64).collect();
    ThetaLP {
        objective_coeffs: x.iter().map(|v| (3.0 * v).sin()).collect(),
        moment_matrix: (1..=k).map(|j| x.iter().map(|v| v.powi(j as i32)).collect()).collect(),
        moment_box: BoxRegion::new(
            (1..=k).map(|j| 0.9 / (j + 1) as f64).collect(),
            (1..=k).map(|j| 1.1 / (j + 1) as f64).collect(),
        )
        .unwrap(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use momentbound_core::lp::solve_lp;

    #[test]
    fn fixtures_are_feasible() {
        assert!(solve_lp(&theta_lp(16, 3)).is_optimal());
        assert_eq!(markov_problem().dim(), 1);
        assert_eq!(hyperbola_problem().moment_count(), 1);
    }
}
