//! Bisection-deflation search for all discoverable roots of a scalar
//! continuous equation `omega(x) = 0`.
//!
//! A grid scan brackets a sign change, a Dekker-style secant/bisection
//! iteration collapses the bracket, and the found root `x*` is deflated by
//! multiplying the function with `psi(x, x*) = 1/|x - x*|^2 + 1` before the
//! scan restarts. Deflation keeps iterations away from known roots; since a
//! simple root still flips the sign of the deflated product across `x*`,
//! brackets containing an already-known root are skipped during the scan so
//! the search always terminates. Two roots inside one grid cell are beyond
//! the scan resolution; the caller sizes the grid from the growth of the
//! underlying nonlinearity.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RootFindError {
    #[error("grid search needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("search interval is empty: [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },
}

/// Relative accuracy at `b`: machine-epsilon-scaled spacing
/// `eps(b) = eps * max(|b|, 1)`.
pub fn eps_at(b: f64) -> f64 {
    f64::EPSILON * b.abs().max(1.0)
}

/// Secant step from the two best iterates, or the infinity flag.
///
/// Returns `b - omega(b) (b - a)/(omega(b) - omega(a))` when `a != b` and
/// the values differ; `infinity` when `a != b` with equal nonzero values;
/// `b` otherwise.
pub fn secant_or_flag(b: f64, a: f64, omega: &mut impl FnMut(f64) -> f64) -> f64 {
    secant_from_values(b, omega(b), a, omega(a))
}

fn secant_from_values(b: f64, wb: f64, a: f64, wa: f64) -> f64 {
    if a != b && wb != wa {
        b - wb * (b - a) / (wb - wa)
    } else if a != b && wb == wa && wb != 0.0 {
        f64::INFINITY
    } else {
        b
    }
}

/// Guard a candidate step: keep it if it lies strictly between the minimal
/// step `b + sign(c-b) eps(b)` and the midpoint `(b+c)/2`; take the minimal
/// step when the candidate stagnates at `b`; fall back to the midpoint
/// otherwise.
pub fn guarded_step(candidate: f64, b: f64, c: f64) -> f64 {
    debug_assert!(b != c);
    let tiny = b + (c - b).signum() * eps_at(b);
    let mid = 0.5 * (b + c);
    let (lo, hi) = if tiny < mid { (tiny, mid) } else { (mid, tiny) };
    if candidate > lo && candidate < hi {
        candidate
    } else if (candidate - b).abs() <= eps_at(b) {
        tiny
    } else {
        mid
    }
}

/// Bracket state of the Dekker iteration; `b` keeps the smaller `|omega|`
/// and `omega(b) * omega(c) <= 0` throughout.
#[derive(Debug, Clone)]
pub struct BracketState {
    pub b: f64,
    pub a: f64,
    pub c: f64,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct DekkerResult {
    pub root: f64,
    /// `|omega(root)|` of the function handed to the iteration.
    pub residual: f64,
    pub iterations: usize,
    /// Best iterates `b_k`, for convergence-order checks.
    pub iterates: Vec<f64>,
    /// Enclosure widths `|b_k - c_k|` per iteration.
    pub widths: Vec<f64>,
}

/// Collapse a sign-change bracket `(x0, x1)` to a root of `omega`.
///
/// Iterates until `|b - c| <= 2 eps(b)` with one function evaluation per
/// step; after 80 steps only midpoint steps are taken so termination is
/// guaranteed for continuous functions.
pub fn dekker_solve(omega: &mut impl FnMut(f64) -> f64, x0: f64, x1: f64) -> DekkerResult {
    const MAX_ITER: usize = 500;
    const FORCE_BISECT_AFTER: usize = 80;

    let w0 = omega(x0);
    let w1 = omega(x1);
    debug_assert!(w0 * w1 <= 0.0, "dekker_solve needs a sign change");
    let (mut st, mut wb, mut wa, mut wc) = if w1.abs() <= w0.abs() {
        (BracketState { b: x1, a: x0, c: x0, k: 1 }, w1, w0, w0)
    } else {
        (BracketState { b: x0, a: x1, c: x1, k: 1 }, w0, w1, w1)
    };
    let mut iterates = vec![st.b];
    let mut widths = vec![(st.b - st.c).abs()];

    while wb != 0.0 && (st.b - st.c).abs() > 2.0 * eps_at(st.b) && st.k < MAX_ITER {
        let candidate = if st.k >= FORCE_BISECT_AFTER {
            0.5 * (st.b + st.c)
        } else {
            secant_from_values(st.b, wb, st.a, wa)
        };
        let x_new = guarded_step(candidate, st.b, st.c);
        let w_new = omega(x_new);
        // x_j: the most recent point with sign opposite to x_new; under the
        // bracket invariant this is b or c, so no further history is kept.
        let (xj, wj) = if w_new * wb <= 0.0 { (st.b, wb) } else { (st.c, wc) };
        if w_new.abs() <= wj.abs() {
            st = BracketState { b: x_new, c: xj, a: st.b, k: st.k + 1 };
            wa = wb;
            wb = w_new;
            wc = wj;
        } else {
            st = BracketState { b: xj, a: x_new, c: x_new, k: st.k + 1 };
            wa = w_new;
            wb = wj;
            wc = w_new;
        }
        debug_assert!(wb * wc <= 0.0, "bracket invariant violated");
        iterates.push(st.b);
        widths.push((st.b - st.c).abs());
    }

    DekkerResult {
        root: st.b,
        residual: wb.abs(),
        iterations: st.k,
        iterates,
        widths,
    }
}

/// Search interval and scan density for [`find_all_roots`]; the region is
/// sized by the caller from the growth of the nonlinearity.
#[derive(Debug, Clone)]
pub struct GridSearchSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Residual bound on `|omega(x*)|` above which a root is flagged.
    pub residual_tol: f64,
}

impl Default for GridSearchSpec {
    fn default() -> Self {
        Self {
            lo: -50.0,
            hi: 50.0,
            points: 400,
            residual_tol: 1e-9,
        }
    }
}

impl GridSearchSpec {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Self {
            lo,
            hi,
            points,
            ..Self::default()
        }
    }
}

/// A root with its achieved residual against the undeflated function.
#[derive(Debug, Clone)]
pub struct RootRecord {
    pub x: f64,
    pub residual: f64,
    /// Residual exceeded `residual_tol`; kept for inspection rather than
    /// silently accepted.
    pub flagged: bool,
}

/// All roots found, ascending in `x` and pairwise distinct under the dedup
/// tolerance `|x1 - x2| <= 1e-8 max(1, |x1|)`.
#[derive(Debug, Clone, Default)]
pub struct RootSet {
    pub roots: Vec<RootRecord>,
}

impl RootSet {
    pub fn values(&self) -> Vec<f64> {
        self.roots.iter().map(|r| r.x).collect()
    }

    pub fn unflagged_values(&self) -> Vec<f64> {
        self.roots
            .iter()
            .filter(|r| !r.flagged)
            .map(|r| r.x)
            .collect()
    }

    fn contains(&self, x: f64) -> bool {
        self.roots
            .iter()
            .any(|r| (r.x - x).abs() <= 1e-8 * r.x.abs().max(1.0))
    }
}

/// Multiply a base value by the deflation factors
/// `psi(x, x*) = 1/|x - x*|^2 + 1` of every known root, in log-magnitude so
/// poles never overflow.
fn deflate(base: f64, roots: &[f64], x: f64) -> f64 {
    if base == 0.0 || roots.is_empty() {
        return base;
    }
    let mut log_mag = base.abs().ln();
    for &r in roots {
        let d2 = (x - r) * (x - r);
        let factor = if d2 < 1e-24 { 1e24 } else { 1.0 / d2 + 1.0 };
        log_mag += factor.ln();
    }
    let sign = base.signum();
    if log_mag > 700.0 {
        sign * f64::MAX
    } else {
        sign * log_mag.exp()
    }
}

/// Run the full bisection-deflation search and return every discoverable
/// root of the original function.
pub fn find_all_roots(
    mut omega: impl FnMut(f64) -> f64,
    search: &GridSearchSpec,
) -> Result<RootSet, RootFindError> {
    if search.points < 2 {
        return Err(RootFindError::TooFewPoints(search.points));
    }
    if !(search.hi > search.lo) {
        return Err(RootFindError::EmptyInterval {
            lo: search.lo,
            hi: search.hi,
        });
    }
    let grid: Vec<f64> = (0..search.points)
        .map(|k| search.lo + (search.hi - search.lo) * k as f64 / (search.points - 1) as f64)
        .collect();
    let base_vals: Vec<f64> = grid.iter().map(|&x| omega(x)).collect();

    let mut set = RootSet::default();
    // brackets whose iteration converged onto an already-known root
    let mut consumed: Vec<usize> = Vec::new();

    'outer: loop {
        let known = set.values();
        let vals: Vec<f64> = grid
            .iter()
            .zip(&base_vals)
            .map(|(&x, &b)| deflate(b, &known, x))
            .collect();

        for w in 0..grid.len() - 1 {
            let (x0, x1) = (grid[w], grid[w + 1]);
            if vals[w] * vals[w + 1] > 0.0 {
                continue;
            }
            if known.iter().any(|&r| r >= x0 - 1e-8 && r <= x1 + 1e-8) {
                continue;
            }
            if consumed.contains(&w) {
                continue;
            }
            // exact zero at a grid point
            if vals[w] == 0.0 || vals[w + 1] == 0.0 {
                let x = if vals[w] == 0.0 { x0 } else { x1 };
                if !set.contains(x) {
                    let residual = omega(x).abs();
                    set.roots.push(RootRecord {
                        x,
                        residual,
                        flagged: residual > search.residual_tol,
                    });
                    continue 'outer;
                }
                consumed.push(w);
                continue;
            }

            let mut deflated = |x: f64| deflate(omega(x), &known, x);
            let result = dekker_solve(&mut deflated, x0, x1);
            if set.contains(result.root) {
                consumed.push(w);
                continue;
            }
            let residual = omega(result.root).abs();
            set.roots.push(RootRecord {
                x: result.root,
                residual,
                flagged: residual > search.residual_tol,
            });
            continue 'outer;
        }
        break;
    }

    set.roots.sort_by(|p, q| p.x.partial_cmp(&q.x).unwrap());
    Ok(set)
}
