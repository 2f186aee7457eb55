//! Legendre polynomial kernels, Gauss quadrature and the compact radial
//! basis functions with their closed-form one-dimensional matrices.
//!
//! The radial bases on `t in [-1, 1]` are built from Legendre polynomials
//! `L_n`:
//!
//! * `phi_j(t) = c_j (L_j(t) - L_{j+2}(t))` with `c_j = 1/sqrt(4j+6)`
//!   vanishes at both endpoints,
//! * `phihat_l(t) = L_l(t) - L_{l+1}(t)` vanishes at `t = 1` only.
//!
//! Five banded matrices of weighted products of these functions have closed
//! forms (see [`matrix_entry`]); everything else is integrated exactly with
//! Gauss-Legendre rules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LegendreError {
    #[error("quadrature order must be >= 1, got {0}")]
    InvalidOrder(usize),
    #[error("Newton iteration for Gauss node {node} of rule {order} did not reach 1e-15")]
    NodeNonConvergence { order: usize, node: usize },
}

/// Evaluate `(L_n(t), L_n'(t))` by the three-term recurrence.
///
/// Exact at the endpoints: `L_n(1) = 1`, `L_n(-1) = (-1)^n`. The degree is
/// unsigned by construction, so the "negative degree" argument error cannot
/// arise in this signature.
pub fn legendre_eval(degree: usize, t: f64) -> (f64, f64) {
    debug_assert!(t.abs() <= 1.0 + 1e-12, "legendre_eval outside [-1,1]: {t}");
    if degree == 0 {
        return (1.0, 0.0);
    }
    if degree == 1 {
        return (t, 1.0);
    }
    let mut p_prev = 1.0; // L_0
    let mut p_curr = t; // L_1
    for k in 1..degree {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * t * p_curr - kf * p_prev) / (kf + 1.0);
        p_prev = p_curr;
        p_curr = p_next;
    }
    let n = degree as f64;
    // L_n'(t) = n (t L_n - L_{n-1}) / (t^2 - 1), with endpoint limits.
    let dp = if (t.abs() - 1.0).abs() < 1e-14 {
        let end = n * (n + 1.0) / 2.0;
        if t > 0.0 {
            end
        } else if degree % 2 == 0 {
            -end
        } else {
            end
        }
    } else {
        n * (t * p_curr - p_prev) / (t * t - 1.0)
    };
    (p_curr, dp)
}

/// `[L_0(t), ..., L_max(t)]` in a single recurrence sweep.
pub fn legendre_sequence(max_degree: usize, t: f64) -> Vec<f64> {
    let mut seq = Vec::with_capacity(max_degree + 1);
    seq.push(1.0);
    if max_degree == 0 {
        return seq;
    }
    seq.push(t);
    for k in 1..max_degree {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * t * seq[k] - kf * seq[k - 1]) / (kf + 1.0);
        seq.push(next);
    }
    seq
}

/// An `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Nodes are the roots of `L_n`, symmetric about 0; the rule integrates
/// polynomials of degree `2n - 1` exactly.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    /// Apply the rule to a function on `[-1, 1]`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }
}

/// Build the `n`-point Gauss-Legendre rule.
///
/// Newton iteration on `L_n` from the Tricomi/Chebyshev initial guesses,
/// tolerance 1e-15, at most 100 iterations per node.
pub fn gauss_rule(n: usize) -> Result<QuadratureRule, LegendreError> {
    if n == 0 {
        return Err(LegendreError::InvalidOrder(n));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n / 2;
    for k in 0..half {
        // k-th root counted from t = 1 downwards.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, d) = legendre_eval(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(LegendreError::NodeNonConvergence { order: n, node: k });
        }
        let (_, dp) = legendre_eval(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - k] = x;
        nodes[k] = -x;
        weights[n - 1 - k] = w;
        weights[k] = w;
    }
    if n % 2 == 1 {
        let (_, d) = legendre_eval(n, 0.0);
        nodes[half] = 0.0;
        weights[half] = 2.0 / (d * d);
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        order: n,
    })
}

/// The five closed-form matrices of weighted radial-basis products.
///
/// With `p_j = L_j - L_{j+2}` (no normalization) and `q_l = L_l - L_{l+1}`:
///
/// * `A`: `int (t+1) p_i' p_j' dt`, bandwidth 1
/// * `B`: `int p_i p_j / (t+1) dt`, bandwidth 1
/// * `C`: `int (t+1) p_i p_j dt`, bandwidth 3
/// * `D`: `int (t+1) q_i' q_j' dt`, diagonal
/// * `E`: `int (t+1) q_i q_j dt`, bandwidth 2
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    A,
    B,
    C,
    D,
    E,
}

/// Closed-form entry of one of the five radial matrices, symmetrized.
///
/// Entries are for the unnormalized functions `L_j - L_{j+2}` and
/// `L_l - L_{l+1}`; the `c_j` normalization is applied by the caller where
/// the normalized basis is in play.
pub fn matrix_entry(which: MatrixKind, i: usize, j: usize) -> f64 {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    let band = hi - lo;
    let i = lo as f64;
    match which {
        MatrixKind::A => match band {
            0 => 4.0 * i + 6.0,
            1 => 2.0 * i + 4.0,
            _ => 0.0,
        },
        MatrixKind::B => match band {
            0 => 2.0 * (2.0 * i + 3.0) / ((i + 1.0) * (i + 2.0)),
            1 => -2.0 / (i + 2.0),
            _ => 0.0,
        },
        MatrixKind::C => match band {
            0 => 2.0 / (2.0 * i + 1.0) + 2.0 / (2.0 * i + 5.0),
            1 => {
                2.0 / ((2.0 * i + 1.0) * (2.0 * i + 5.0))
                    + 2.0 * (i + 3.0) / ((2.0 * i + 5.0) * (2.0 * i + 7.0))
            }
            2 => -2.0 / (2.0 * i + 5.0),
            3 => -2.0 * (i + 3.0) / ((2.0 * i + 5.0) * (2.0 * i + 7.0)),
            _ => 0.0,
        },
        MatrixKind::D => match band {
            0 => 2.0 * i + 2.0,
            _ => 0.0,
        },
        MatrixKind::E => match band {
            0 => 4.0 * (i + 1.0) / ((2.0 * i + 1.0) * (2.0 * i + 3.0)),
            // Positive: direct integration gives +4/15 at i = 0.
            1 => 4.0 / ((2.0 * i + 1.0) * (2.0 * i + 3.0) * (2.0 * i + 5.0)),
            2 => -2.0 * (i + 2.0) / ((2.0 * i + 3.0) * (2.0 * i + 5.0)),
            _ => 0.0,
        },
    }
}

/// Normalization constant `c_j = 1/sqrt(4j+6)` of the two-endpoint basis.
pub fn phi_normalization(j: usize) -> f64 {
    1.0 / (4.0 * j as f64 + 6.0).sqrt()
}

/// Which combination of endpoint constraints a radial family satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialBasisKind {
    /// `phi_j = c_j (L_j - L_{j+2})`: zero at both `t = -1` (polar axis) and
    /// `t = 1` (outer boundary).
    InteriorDirichlet,
    /// `phihat_l = L_l - L_{l+1}`: zero at `t = 1` only.
    OuterDirichlet,
    /// Raw Legendre polynomials, no endpoint constraint (natural outer
    /// boundary, axisymmetric block).
    Unconstrained,
    /// `L_j + L_{j+1}` scaled to unit stiffness diagonal: zero at `t = -1`
    /// only. This is the unconstrained family with the essential polar
    /// condition imposed, used by the nonzero Fourier modes under a natural
    /// outer boundary condition.
    PolarConstrained,
}

/// A family of radial basis functions on `t in [-1, 1]`.
#[derive(Debug, Clone)]
pub struct RadialBasis {
    pub kind: RadialBasisKind,
    count: usize,
    /// Per-member scale factor applied to the raw Legendre combination.
    scale: Vec<f64>,
}

impl RadialBasis {
    pub fn new(kind: RadialBasisKind, count: usize) -> Self {
        let scale = match kind {
            RadialBasisKind::InteriorDirichlet => (0..count).map(phi_normalization).collect(),
            RadialBasisKind::OuterDirichlet | RadialBasisKind::Unconstrained => {
                vec![1.0; count]
            }
            RadialBasisKind::PolarConstrained => {
                // Scale to unit diagonal of int (t+1) m' m' dt, computed once
                // by exact quadrature; matches the c_j convention of the
                // Dirichlet family.
                let rule = gauss_rule(count + 3).expect("count + 3 >= 1");
                (0..count)
                    .map(|j| {
                        let a_jj = rule.integrate(|t| {
                            let d = legendre_eval(j, t).1 + legendre_eval(j + 1, t).1;
                            (t + 1.0) * d * d
                        });
                        1.0 / a_jj.sqrt()
                    })
                    .collect()
            }
        };
        Self { kind, count, scale }
    }

    /// Number of member functions.
    pub fn len(&self) -> usize {
        self.count
    }

    /// Scale factor applied to member `j` on top of the raw Legendre
    /// combination (`c_j` for the two-endpoint family).
    pub fn scale(&self, j: usize) -> f64 {
        self.scale[j]
    }

    /// Values of every member at `t` in one recurrence sweep.
    pub fn eval_all(&self, t: f64) -> Vec<f64> {
        let seq = legendre_sequence(self.max_degree(), t);
        (0..self.count)
            .map(|j| {
                self.scale[j]
                    * match self.kind {
                        RadialBasisKind::InteriorDirichlet => seq[j] - seq[j + 2],
                        RadialBasisKind::OuterDirichlet => seq[j] - seq[j + 1],
                        RadialBasisKind::Unconstrained => seq[j],
                        RadialBasisKind::PolarConstrained => seq[j] + seq[j + 1],
                    }
            })
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// `(value, d/dt)` of member `j` at `t`.
    pub fn eval(&self, j: usize, t: f64) -> (f64, f64) {
        assert!(j < self.count, "radial member {j} out of range {}", self.count);
        let s = self.scale[j];
        let (v, d) = match self.kind {
            RadialBasisKind::InteriorDirichlet => {
                let (p0, d0) = legendre_eval(j, t);
                let (p2, d2) = legendre_eval(j + 2, t);
                (p0 - p2, d0 - d2)
            }
            RadialBasisKind::OuterDirichlet => {
                let (p0, d0) = legendre_eval(j, t);
                let (p1, d1) = legendre_eval(j + 1, t);
                (p0 - p1, d0 - d1)
            }
            RadialBasisKind::Unconstrained => legendre_eval(j, t),
            RadialBasisKind::PolarConstrained => {
                let (p0, d0) = legendre_eval(j, t);
                let (p1, d1) = legendre_eval(j + 1, t);
                (p0 + p1, d0 + d1)
            }
        };
        (s * v, s * d)
    }

    /// Maximum polynomial degree present in the family.
    pub fn max_degree(&self) -> usize {
        match self.kind {
            RadialBasisKind::InteriorDirichlet => self.count + 1,
            RadialBasisKind::OuterDirichlet | RadialBasisKind::PolarConstrained => self.count,
            RadialBasisKind::Unconstrained => self.count.saturating_sub(1),
        }
    }

    /// True when every member vanishes at `t = -1`; the integrand of the
    /// `1/(t+1)` weighted products is then again a polynomial.
    pub fn vanishes_at_center(&self) -> bool {
        matches!(
            self.kind,
            RadialBasisKind::InteriorDirichlet | RadialBasisKind::PolarConstrained
        )
    }
}
