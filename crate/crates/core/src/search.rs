//! One-dimensional minimization and root bracketing used by the bound
//! evaluators.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
///
/// Stops when the bracket is narrower than `tol * max(1, |x|)` or after
/// `max_iter` reductions.
pub fn golden_section<E, F>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Result<Minimum, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut evaluations = 2;
    for _ in 0..max_iter {
        if hi - lo <= tol * x1.abs().max(1.0) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
        evaluations += 1;
    }
    // endpoints are never evaluated by the interior probes
    let mut best = if f1 <= f2 {
        Minimum { x: x1, value: f1, evaluations }
    } else {
        Minimum { x: x2, value: f2, evaluations }
    };
    for edge in [a, b] {
        let v = f(edge)?;
        best.evaluations += 1;
        if v < best.value {
            best.x = edge;
            best.value = v;
        }
    }
    Ok(best)
}

/// Bisection on the sign of `g` over `[lo, hi]`, where `g(lo) <= 0 <= g(hi)`
/// is expected. Returns the midpoint of the final bracket.
pub fn bisect_sign<E, G>(mut g: G, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> Result<f64, E>
where
    G: FnMut(f64) -> Result<f64, E>,
{
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol * mid.abs().max(1.0) || mid == lo || mid == hi {
            break;
        }
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Grid scan over `[a, b]` with `points` samples; returns the best sample
/// and its neighbours as a bracket.
pub fn grid_scan<E, F>(mut f: F, a: f64, b: f64, points: usize) -> Result<(Minimum, f64, f64), E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let n = points.max(2);
    let step = (b - a) / (n - 1) as f64;
    let mut best = Minimum {
        x: a,
        value: f64::INFINITY,
        evaluations: 0,
    };
    let mut best_i = 0;
    for i in 0..n {
        let x = if i + 1 == n { b } else { a + step * i as f64 };
        let v = f(x)?;
        best.evaluations += 1;
        if v < best.value {
            best.value = v;
            best.x = x;
            best_i = i;
        }
    }
    let lo = a + step * best_i.saturating_sub(1) as f64;
    let hi = (a + step * (best_i + 1) as f64).min(b);
    Ok((best, lo, hi))
}
