//! Scalar minimization helpers.

use crate::num::Scalar;

/// Outcome of a bracketed scalar minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketMin<S> {
    pub x: S,
    pub value: S,
    /// Final bracket width when the search stopped.
    pub bracket_width: S,
}

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `tol` (or after `max_iters`
/// shrink steps). Fully deterministic.
pub fn golden_section_min<S: Scalar>(
    f: impl Fn(S) -> S,
    mut lo: S,
    mut hi: S,
    tol: S,
    max_iters: usize,
) -> BracketMin<S> {
    // 2 - phi, the golden-section step ratio.
    let ratio = S::from_f64_lossy(2.0 - 1.618_033_988_749_895);

    let mut x1 = lo + ratio * (hi - lo);
    let mut x2 = hi - ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);

    for _ in 0..max_iters {
        if hi - lo <= tol {
            break;
        }
        // Ties keep the lower half, so plateaus (e.g. an objective that
        // saturates numerically) resolve to the smallest argument.
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = lo + ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = hi - ratio * (hi - lo);
            f2 = f(x2);
        }
    }

    let (x, value) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    BracketMin {
        x,
        value,
        bracket_width: hi - lo,
    }
}
