//! Legendre-Fourier Galerkin discretization on the mapped disk.
//!
//! The unknown field is expanded as
//!
//! ```text
//! u(t, theta) = sum_{i=1..M} sum_{j=0..N-2} (alpha_ij sin(i theta) + beta_ij cos(i theta)) phi_j(t)
//!             + sum_{l=0..N-1} gamma_l phihat_l(t)
//! ```
//!
//! with `t = 2r - 1`. Multiplying `eps2 laplace(u) + f = 0` by a test
//! function and the physical measure `a b r dr dtheta` gives the residual
//!
//! ```text
//! F_p(xi) = eps2 * a b * int [ w1 (t+1) u_t v_t - w3/2 (u_t v_th + u_th v_t)
//!                              + w2/(t+1) u_th v_th ] dt dth
//!           - a b / 4 * int f(u) v (t+1) dt dth
//! ```
//!
//! so that `F` is exactly the gradient of the energy functional `J`. The
//! linear part is assembled from the closed-form radial matrices combined
//! with exact trigonometric couplings of `w1, w2, w3`; the nonlinear part is
//! evaluated pseudo-spectrally on a Gauss x equispaced tensor grid with
//! dealiasing margins `n_theta >= 3M + 2`, `n_t >= ceil(3N/2) + 2`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::EllipseDomain;
use crate::legendre::{gauss_rule, matrix_entry, MatrixKind, QuadratureRule, RadialBasis, RadialBasisKind};
use crate::problems::ProblemSpec;

use std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum GalerkinError {
    #[error("coefficient vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("resolution too low: M must be >= 1 and N >= 2, got M = {m}, N = {n}")]
    ResolutionTooLow { m: usize, n: usize },
    #[error("quadrature sizes below dealiasing floor: need n_t >= {need_t}, n_theta >= {need_theta}")]
    QuadratureTooCoarse { need_t: usize, need_theta: usize },
    #[error("problem `{0}` does not supply the u-derivative of f")]
    MissingDerivative(String),
    #[error("problem `{0}` does not supply the potential V")]
    MissingPotential(String),
    #[error("eigenvalue solve failed: {0}")]
    EigenFailure(String),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Legendre(#[from] crate::legendre::LegendreError),
}

/// Outer boundary condition of the discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

/// The unknown vector `(alpha_ij, beta_ij, gamma_l)` of the expansion,
/// stored flat in that order (`alpha` and `beta` are mode-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoefficients {
    m: usize,
    n: usize,
    data: DVector<f64>,
}

/// Flat length of the unknown vector: `2 M (N-1) + N`.
pub fn dof_count(m: usize, n: usize) -> usize {
    2 * m * (n - 1) + n
}

impl SpectralCoefficients {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            data: DVector::zeros(dof_count(m, n)),
        }
    }

    pub fn from_vec(m: usize, n: usize, data: DVector<f64>) -> Result<Self, GalerkinError> {
        let expected = dof_count(m, n);
        if data.len() != expected {
            return Err(GalerkinError::DimensionMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(Self { m, n, data })
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn idx_alpha(&self, i: usize, j: usize) -> usize {
        debug_assert!((1..=self.m).contains(&i) && j <= self.n - 2);
        (i - 1) * (self.n - 1) + j
    }

    fn idx_beta(&self, i: usize, j: usize) -> usize {
        self.m * (self.n - 1) + self.idx_alpha(i, j)
    }

    fn idx_gamma(&self, l: usize) -> usize {
        debug_assert!(l < self.n);
        2 * self.m * (self.n - 1) + l
    }

    /// Sine-mode radial coefficient, `1 <= i <= M`, `0 <= j <= N-2`.
    pub fn alpha(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx_alpha(i, j)]
    }

    pub fn beta(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx_beta(i, j)]
    }

    pub fn gamma(&self, l: usize) -> f64 {
        self.data[self.idx_gamma(l)]
    }

    pub fn set_alpha(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx_alpha(i, j);
        self.data[k] = v;
    }

    pub fn set_beta(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx_beta(i, j);
        self.data[k] = v;
    }

    pub fn set_gamma(&mut self, l: usize, v: f64) {
        let k = self.idx_gamma(l);
        self.data[k] = v;
    }

    /// Flatten to the paper's ordering; `unflatten` of the result is the
    /// identity.
    pub fn flatten(&self) -> DVector<f64> {
        self.data.clone()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }

    pub fn unflatten(m: usize, n: usize, flat: &[f64]) -> Result<Self, GalerkinError> {
        Self::from_vec(m, n, DVector::from_column_slice(flat))
    }

    /// Rotate the represented field by `beta`: `u(r, theta) -> u(r, theta - beta)`.
    /// Realized exactly as a per-mode 2x2 rotation of `(alpha_i, beta_i)`.
    pub fn rotate(&self, beta: f64) -> Self {
        let mut out = self.clone();
        for i in 1..=self.m {
            let (s, c) = (i as f64 * beta).sin_cos();
            for j in 0..=self.n - 2 {
                let a = self.alpha(i, j);
                let b = self.beta(i, j);
                out.set_alpha(i, j, a * c + b * s);
                out.set_beta(i, j, -a * s + b * c);
            }
        }
        out
    }

    /// Rotation by 90 degrees with exact integer trigonometry.
    pub fn rotate_quarter(&self) -> Self {
        let mut out = self.clone();
        for i in 1..=self.m {
            let (s, c) = match i % 4 {
                0 => (0.0, 1.0),
                1 => (1.0, 0.0),
                2 => (0.0, -1.0),
                _ => (-1.0, 0.0),
            };
            for j in 0..=self.n - 2 {
                let a = self.alpha(i, j);
                let b = self.beta(i, j);
                out.set_alpha(i, j, a * c + b * s);
                out.set_beta(i, j, -a * s + b * c);
            }
        }
        out
    }
}

/// Trigonometric factor of a degree-of-freedom block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trig {
    Sin(usize),
    Cos(usize),
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FamId {
    /// Radial family of the nonzero Fourier modes (length N-1).
    Angular,
    /// Radial family of the axisymmetric block (length N).
    Axisym,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    trig: Trig,
    fam: FamId,
    offset: usize,
    len: usize,
}

/// Exact integrals over `[0, 2pi)` of the omega coefficients against
/// trigonometric products, written with `w1 = p + q cos 2th`,
/// `w2 = p - q cos 2th`, `w3 = 2 q sin 2th`.
struct ThetaCoupling {
    p: f64,
    q: f64,
}

impl ThetaCoupling {
    fn delta(a: usize, b: usize) -> f64 {
        if a == b {
            1.0
        } else {
            0.0
        }
    }

    /// `(pi/2) (delta_{|i-i'|,2} - delta_{i+i',2})` for sin-sin products.
    fn x_ss(i: usize, k: usize) -> f64 {
        0.5 * PI * (Self::delta(i.abs_diff(k), 2) - Self::delta(i + k, 2))
    }

    fn x_cc(i: usize, k: usize) -> f64 {
        0.5 * PI * (Self::delta(i.abs_diff(k), 2) + Self::delta(i + k, 2))
    }

    /// `int sin(2th) sin(i th) cos(k th) dth`, `i >= 1`, `k >= 1`.
    fn y(i: usize, k: usize) -> f64 {
        let sgn = match i.cmp(&k) {
            std::cmp::Ordering::Greater => 1.0,
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => -1.0,
        };
        0.5 * PI * (Self::delta(i + k, 2) + sgn * Self::delta(i.abs_diff(k), 2))
    }

    /// `int w1 T_u T_v dth`.
    fn w1(&self, u: Trig, v: Trig) -> f64 {
        match (u, v) {
            (Trig::Sin(i), Trig::Sin(k)) => self.p * PI * Self::delta(i, k) + self.q * Self::x_ss(i, k),
            (Trig::Cos(i), Trig::Cos(k)) => self.p * PI * Self::delta(i, k) + self.q * Self::x_cc(i, k),
            (Trig::One, Trig::One) => 2.0 * PI * self.p,
            (Trig::One, Trig::Cos(k)) => self.q * PI * Self::delta(k, 2),
            (Trig::Cos(i), Trig::One) => self.q * PI * Self::delta(i, 2),
            _ => 0.0,
        }
    }

    /// `int w2 T_u' T_v' dth`.
    fn w2_deriv(&self, u: Trig, v: Trig) -> f64 {
        match (u, v) {
            (Trig::Sin(i), Trig::Sin(k)) => {
                (i * k) as f64 * (self.p * PI * Self::delta(i, k) - self.q * Self::x_cc(i, k))
            }
            (Trig::Cos(i), Trig::Cos(k)) => {
                (i * k) as f64 * (self.p * PI * Self::delta(i, k) - self.q * Self::x_ss(i, k))
            }
            _ => 0.0,
        }
    }

    /// `int w3 T_u T_v' dth`.
    fn w3_cross(&self, u: Trig, v: Trig) -> f64 {
        match (u, v) {
            (Trig::Sin(i), Trig::Sin(k)) => 2.0 * self.q * k as f64 * Self::y(i, k),
            (Trig::Cos(i), Trig::Cos(k)) => -2.0 * self.q * k as f64 * Self::y(k, i),
            (Trig::One, Trig::Cos(k)) => -2.0 * self.q * k as f64 * PI * Self::delta(k, 2),
            _ => 0.0,
        }
    }
}

/// Which inner product the driver-level orthogonalization uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerProduct {
    /// Plain l2 product of flattened coefficient vectors.
    #[default]
    CoefficientL2,
    /// L2(Omega) product realized through the mass matrix.
    FieldL2,
}

/// Immutable discretization of a problem on a domain: quadrature grids,
/// radial families, stiffness and mass matrices.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    domain: EllipseDomain,
    problem: ProblemSpec,
    m: usize,
    n: usize,
    n_t: usize,
    n_theta: usize,
    rule_t: QuadratureRule,
    theta_nodes: Vec<f64>,
    fam_angular: RadialBasis,
    fam_axisym: RadialBasis,
    blocks: Vec<Block>,
    /// Radial member values/derivatives at the Gauss nodes,
    /// `n_t x len(family)`.
    rv_angular: DMatrix<f64>,
    rv_axisym: DMatrix<f64>,
    /// Trig values at the theta nodes, `n_modes x n_theta`, rows in block
    /// order Sin(1..M), Cos(1..M), One.
    trig_vals: DMatrix<f64>,
    /// Physical quadrature weight `w_q * (t_q + 1) * (2pi/n_theta) * a b / 4`
    /// per radial node (the theta factor is uniform).
    mu_weight: Vec<f64>,
    /// Physical coordinates of the tensor grid, `n_t x n_theta` each.
    grid_x: DMatrix<f64>,
    grid_y: DMatrix<f64>,
    /// Laplacian stiffness (no eps2 factor), physical measure included.
    stiffness: DMatrix<f64>,
    mass: DMatrix<f64>,
}

impl DiscreteProblem {
    /// Build with default dealiased quadrature sizes `n_t = 2N + 4`,
    /// `n_theta = 4M + 4` (cubic nonlinearities integrate exactly; the
    /// theta count is divisible by 4 so quarter-turn rotations permute the
    /// grid).
    pub fn new(
        domain: EllipseDomain,
        problem: ProblemSpec,
        m: usize,
        n: usize,
    ) -> Result<Self, GalerkinError> {
        Self::with_quadrature(domain, problem, m, n, 2 * n + 4, 4 * m + 4)
    }

    pub fn with_quadrature(
        domain: EllipseDomain,
        problem: ProblemSpec,
        m: usize,
        n: usize,
        n_t: usize,
        n_theta: usize,
    ) -> Result<Self, GalerkinError> {
        if m < 1 || n < 2 {
            return Err(GalerkinError::ResolutionTooLow { m, n });
        }
        let need_t = (3 * n).div_ceil(2) + 2;
        let need_theta = 3 * m + 2;
        if n_t < need_t || n_theta < need_theta {
            return Err(GalerkinError::QuadratureTooCoarse { need_t, need_theta });
        }

        let (fam_angular, fam_axisym) = match problem.bc {
            BoundaryKind::Dirichlet => (
                RadialBasis::new(RadialBasisKind::InteriorDirichlet, n - 1),
                RadialBasis::new(RadialBasisKind::OuterDirichlet, n),
            ),
            BoundaryKind::Neumann => (
                RadialBasis::new(RadialBasisKind::PolarConstrained, n - 1),
                RadialBasis::new(RadialBasisKind::Unconstrained, n),
            ),
        };

        let mut blocks = Vec::with_capacity(2 * m + 1);
        let mut offset = 0;
        for i in 1..=m {
            blocks.push(Block {
                trig: Trig::Sin(i),
                fam: FamId::Angular,
                offset,
                len: n - 1,
            });
            offset += n - 1;
        }
        for i in 1..=m {
            blocks.push(Block {
                trig: Trig::Cos(i),
                fam: FamId::Angular,
                offset,
                len: n - 1,
            });
            offset += n - 1;
        }
        blocks.push(Block {
            trig: Trig::One,
            fam: FamId::Axisym,
            offset,
            len: n,
        });
        offset += n;
        debug_assert_eq!(offset, dof_count(m, n));

        let rule_t = gauss_rule(n_t)?;
        let theta_nodes: Vec<f64> = (0..n_theta)
            .map(|s| 2.0 * PI * s as f64 / n_theta as f64)
            .collect();

        let eval_family = |fam: &RadialBasis| {
            let mut vals = DMatrix::zeros(n_t, fam.len());
            for (q, &t) in rule_t.nodes.iter().enumerate() {
                for (j, v) in fam.eval_all(t).into_iter().enumerate() {
                    vals[(q, j)] = v;
                }
            }
            vals
        };
        let rv_angular = eval_family(&fam_angular);
        let rv_axisym = eval_family(&fam_axisym);

        let mut trig_vals = DMatrix::zeros(blocks.len(), n_theta);
        for (bi, b) in blocks.iter().enumerate() {
            for (s, &th) in theta_nodes.iter().enumerate() {
                trig_vals[(bi, s)] = match b.trig {
                    Trig::Sin(i) => (i as f64 * th).sin(),
                    Trig::Cos(i) => (i as f64 * th).cos(),
                    Trig::One => 1.0,
                };
            }
        }

        let ab = domain.a() * domain.b();
        let theta_w = 2.0 * PI / n_theta as f64;
        let mu_weight: Vec<f64> = rule_t
            .nodes
            .iter()
            .zip(&rule_t.weights)
            .map(|(&t, &w)| w * (t + 1.0) * theta_w * ab / 4.0)
            .collect();

        let mut grid_x = DMatrix::zeros(n_t, n_theta);
        let mut grid_y = DMatrix::zeros(n_t, n_theta);
        for (q, &t) in rule_t.nodes.iter().enumerate() {
            let r = 0.5 * (t + 1.0);
            for (s, &th) in theta_nodes.iter().enumerate() {
                let (x, y) = domain.map_to_cartesian(r, th)?;
                grid_x[(q, s)] = x;
                grid_y[(q, s)] = y;
            }
        }

        let mut dp = Self {
            domain,
            problem,
            m,
            n,
            n_t,
            n_theta,
            rule_t,
            theta_nodes,
            fam_angular,
            fam_axisym,
            blocks,
            rv_angular,
            rv_axisym,
            trig_vals,
            mu_weight,
            grid_x,
            grid_y,
            stiffness: DMatrix::zeros(0, 0),
            mass: DMatrix::zeros(0, 0),
        };
        dp.stiffness = dp.assemble_stiffness();
        dp.mass = dp.assemble_mass();
        Ok(dp)
    }

    /// Same problem and resolution on a different domain (geometry
    /// continuation).
    pub fn with_domain(&self, domain: EllipseDomain) -> Result<Self, GalerkinError> {
        Self::with_quadrature(
            domain,
            self.problem.clone(),
            self.m,
            self.n,
            self.n_t,
            self.n_theta,
        )
    }

    pub fn domain(&self) -> &EllipseDomain {
        &self.domain
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn dof(&self) -> usize {
        dof_count(self.m, self.n)
    }

    pub fn quadrature_sizes(&self) -> (usize, usize) {
        (self.n_t, self.n_theta)
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    /// Physical coordinates of tensor-grid node `(q, s)`.
    pub(crate) fn grid_point(&self, q: usize, s: usize) -> (f64, f64) {
        (self.grid_x[(q, s)], self.grid_y[(q, s)])
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    fn family(&self, id: FamId) -> &RadialBasis {
        match id {
            FamId::Angular => &self.fam_angular,
            FamId::Axisym => &self.fam_axisym,
        }
    }

    fn radial_values(&self, id: FamId) -> &DMatrix<f64> {
        match id {
            FamId::Angular => &self.rv_angular,
            FamId::Axisym => &self.rv_axisym,
        }
    }

    /// `int (t+1) R_i' P_j' dt` between two families; closed forms where the
    /// pair has one.
    fn radial_stiff(&self, fu: FamId, fv: FamId) -> DMatrix<f64> {
        let (bu, bv) = (self.family(fu), self.family(fv));
        match (bu.kind, bv.kind) {
            (RadialBasisKind::InteriorDirichlet, RadialBasisKind::InteriorDirichlet) => {
                DMatrix::from_fn(bu.len(), bv.len(), |i, j| {
                    bu.scale(i) * bv.scale(j) * matrix_entry(MatrixKind::A, i, j)
                })
            }
            (RadialBasisKind::OuterDirichlet, RadialBasisKind::OuterDirichlet) => {
                DMatrix::from_fn(bu.len(), bv.len(), |i, j| matrix_entry(MatrixKind::D, i, j))
            }
            _ => DMatrix::from_fn(bu.len(), bv.len(), |i, j| {
                self.rule_t
                    .integrate(|t| (t + 1.0) * bu.eval(i, t).1 * bv.eval(j, t).1)
            }),
        }
    }

    /// `int (t+1) R_i P_j dt`.
    fn radial_mass(&self, fu: FamId, fv: FamId) -> DMatrix<f64> {
        let (bu, bv) = (self.family(fu), self.family(fv));
        match (bu.kind, bv.kind) {
            (RadialBasisKind::InteriorDirichlet, RadialBasisKind::InteriorDirichlet) => {
                DMatrix::from_fn(bu.len(), bv.len(), |i, j| {
                    bu.scale(i) * bv.scale(j) * matrix_entry(MatrixKind::C, i, j)
                })
            }
            (RadialBasisKind::OuterDirichlet, RadialBasisKind::OuterDirichlet) => {
                DMatrix::from_fn(bu.len(), bv.len(), |i, j| matrix_entry(MatrixKind::E, i, j))
            }
            _ => DMatrix::from_fn(bu.len(), bv.len(), |i, j| {
                self.rule_t
                    .integrate(|t| (t + 1.0) * bu.eval(i, t).0 * bv.eval(j, t).0)
            }),
        }
    }

    /// `int R_i P_j / (t+1) dt`; both families vanish at the center so the
    /// integrand is a polynomial and the endpoint-free Gauss nodes integrate
    /// it exactly.
    fn radial_mass_singular(&self, fu: FamId, fv: FamId) -> DMatrix<f64> {
        let (bu, bv) = (self.family(fu), self.family(fv));
        debug_assert!(bu.vanishes_at_center() && bv.vanishes_at_center());
        match (bu.kind, bv.kind) {
            (RadialBasisKind::InteriorDirichlet, RadialBasisKind::InteriorDirichlet) => {
                DMatrix::from_fn(bu.len(), bv.len(), |i, j| {
                    bu.scale(i) * bv.scale(j) * matrix_entry(MatrixKind::B, i, j)
                })
            }
            _ => DMatrix::from_fn(bu.len(), bv.len(), |i, j| {
                self.rule_t
                    .integrate(|t| bu.eval(i, t).0 * bv.eval(j, t).0 / (t + 1.0))
            }),
        }
    }

    /// `int R_i' P_j dt` (no weight), for the w3 cross terms.
    fn radial_deriv_cross(&self, fu: FamId, fv: FamId) -> DMatrix<f64> {
        let (bu, bv) = (self.family(fu), self.family(fv));
        DMatrix::from_fn(bu.len(), bv.len(), |i, j| {
            self.rule_t
                .integrate(|t| bu.eval(i, t).1 * bv.eval(j, t).0)
        })
    }

    fn assemble_stiffness(&self) -> DMatrix<f64> {
        let n_dof = self.dof();
        let mut s = DMatrix::zeros(n_dof, n_dof);
        let (p, q) = self.domain.omega_fourier();
        let coupling = ThetaCoupling { p, q };
        let ab = self.domain.a() * self.domain.b();

        for bu in &self.blocks {
            for bv in &self.blocks {
                let w1 = coupling.w1(bu.trig, bv.trig);
                let w2 = coupling.w2_deriv(bu.trig, bv.trig);
                let w3_uv = coupling.w3_cross(bu.trig, bv.trig);
                let w3_vu = coupling.w3_cross(bv.trig, bu.trig);
                if w1 == 0.0 && w2 == 0.0 && w3_uv == 0.0 && w3_vu == 0.0 {
                    continue;
                }
                let a_mat = if w1 != 0.0 {
                    Some(self.radial_stiff(bu.fam, bv.fam))
                } else {
                    None
                };
                let b_mat = if w2 != 0.0 {
                    Some(self.radial_mass_singular(bu.fam, bv.fam))
                } else {
                    None
                };
                let k_uv = if w3_uv != 0.0 {
                    Some(self.radial_deriv_cross(bu.fam, bv.fam))
                } else {
                    None
                };
                let k_vu = if w3_vu != 0.0 {
                    Some(self.radial_deriv_cross(bv.fam, bu.fam))
                } else {
                    None
                };
                for ju in 0..bu.len {
                    for jv in 0..bv.len {
                        let mut val = 0.0;
                        if let Some(a) = &a_mat {
                            val += w1 * a[(ju, jv)];
                        }
                        if let Some(b) = &b_mat {
                            val += w2 * b[(ju, jv)];
                        }
                        if let Some(k) = &k_uv {
                            val -= 0.5 * w3_uv * k[(ju, jv)];
                        }
                        if let Some(k) = &k_vu {
                            val -= 0.5 * w3_vu * k[(jv, ju)];
                        }
                        s[(bv.offset + jv, bu.offset + ju)] += ab * val;
                    }
                }
            }
        }
        s
    }

    fn assemble_mass(&self) -> DMatrix<f64> {
        let n_dof = self.dof();
        let mut mm = DMatrix::zeros(n_dof, n_dof);
        let ab = self.domain.a() * self.domain.b();
        for b in &self.blocks {
            let theta_factor = match b.trig {
                Trig::One => 2.0 * PI,
                _ => PI,
            };
            let rmass = self.radial_mass(b.fam, b.fam);
            for ju in 0..b.len {
                for jv in 0..b.len {
                    mm[(b.offset + jv, b.offset + ju)] =
                        theta_factor * ab / 4.0 * rmass[(ju, jv)];
                }
            }
        }
        mm
    }

    /// Values of the represented field on the quadrature tensor grid,
    /// `n_t x n_theta`.
    pub fn field_on_grid(&self, xi: &DVector<f64>) -> DMatrix<f64> {
        let mut profiles = DMatrix::zeros(self.n_t, self.blocks.len());
        for (bi, b) in self.blocks.iter().enumerate() {
            let coef = xi.rows(b.offset, b.len);
            let vals = self.radial_values(b.fam);
            profiles.column_mut(bi).gemv(1.0, vals, &coef, 0.0);
        }
        &profiles * &self.trig_vals
    }

    /// Pointwise map applied on the grid, weighted with the physical
    /// measure. Output entry `(q, s)` is `g(x_qs, u_qs) * mu_qs`.
    pub(crate) fn weighted_pointwise(
        &self,
        u: &DMatrix<f64>,
        mut g: impl FnMut((f64, f64), f64) -> f64,
    ) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n_t, self.n_theta);
        for s in 0..self.n_theta {
            for q in 0..self.n_t {
                let x = (self.grid_x[(q, s)], self.grid_y[(q, s)]);
                w[(q, s)] = g(x, u[(q, s)]) * self.mu_weight[q];
            }
        }
        w
    }

    /// Galerkin projection of a weighted grid function onto every basis
    /// member: `out_p = sum_qs w_qs R_p(t_q) T_p(theta_s)`.
    pub(crate) fn project_grid(&self, w: &DMatrix<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dof());
        // radial reduction per family, then trig contraction
        let vk = self.rv_angular.transpose() * w; // (N-1) x n_theta
        let v0 = self.rv_axisym.transpose() * w; // N x n_theta
        for (bi, b) in self.blocks.iter().enumerate() {
            let v = match b.fam {
                FamId::Angular => &vk,
                FamId::Axisym => &v0,
            };
            for j in 0..b.len {
                let mut acc = 0.0;
                for s in 0..self.n_theta {
                    acc += v[(j, s)] * self.trig_vals[(bi, s)];
                }
                out[b.offset + j] = acc;
            }
        }
        out
    }

    fn check_dim(&self, xi: &DVector<f64>) -> Result<(), GalerkinError> {
        if xi.len() != self.dof() {
            return Err(GalerkinError::DimensionMismatch {
                expected: self.dof(),
                got: xi.len(),
            });
        }
        Ok(())
    }

    /// Residual `F(xi) = eps2 * S xi - proj(f(u))`; `F` is the exact
    /// gradient of [`Self::functional_value`].
    pub fn assemble_residual(&self, xi: &DVector<f64>) -> Result<DVector<f64>, GalerkinError> {
        self.check_dim(xi)?;
        let u = self.field_on_grid(xi);
        let w = self.weighted_pointwise(&u, |x, v| self.problem.f(x, v));
        let nl = self.project_grid(&w);
        Ok(self.problem.stiffness_scale * (&self.stiffness * xi) - nl)
    }

    /// Exact Galerkin Jacobian `eps2 * S - M_{f_u}`.
    pub fn assemble_jacobian(&self, xi: &DVector<f64>) -> Result<DMatrix<f64>, GalerkinError> {
        self.check_dim(xi)?;
        if !self.problem.has_f_u() {
            return Err(GalerkinError::MissingDerivative(self.problem.name.clone()));
        }
        let u = self.field_on_grid(xi);
        let w = self.weighted_pointwise(&u, |x, v| self.problem.f_u(x, v).unwrap());
        let m_fu = self.weighted_mass_matrix(&w);
        Ok(self.problem.stiffness_scale * &self.stiffness - m_fu)
    }

    /// `sum_i F_i(xi) hess(F_i)` contracted residual curvature for the full
    /// Newton model: `-int f_uu(u) w_F psi_p psi_q dmu` with
    /// `w_F = sum_i F_i psi_i`.
    pub fn residual_hessian_term(
        &self,
        xi: &DVector<f64>,
        f_at_xi: &DVector<f64>,
    ) -> Result<DMatrix<f64>, GalerkinError> {
        self.check_dim(xi)?;
        self.check_dim(f_at_xi)?;
        if self.problem.f_uu((0.0, 0.0), 0.0).is_none() {
            return Err(GalerkinError::MissingDerivative(self.problem.name.clone()));
        }
        let u = self.field_on_grid(xi);
        let wf = self.field_on_grid(f_at_xi);
        let mut w = DMatrix::zeros(self.n_t, self.n_theta);
        for s in 0..self.n_theta {
            for q in 0..self.n_t {
                let x = (self.grid_x[(q, s)], self.grid_y[(q, s)]);
                w[(q, s)] =
                    -self.problem.f_uu(x, u[(q, s)]).unwrap() * wf[(q, s)] * self.mu_weight[q];
            }
        }
        Ok(self.weighted_mass_matrix(&w))
    }

    /// Assemble `out[p, q] = sum_grid w * R_p R_q T_p T_q` for an already
    /// measure-weighted grid function `w`. Tensor contraction through
    /// per-angle radial Gram matrices.
    pub fn weighted_mass_matrix(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let nk = self.fam_angular.len();
        let ktot = nk + self.fam_axisym.len();
        let n_dof = self.dof();

        // stacked radial values: n_t x ktot, angular family first
        let mut stack = DMatrix::zeros(self.n_t, ktot);
        stack.view_mut((0, 0), (self.n_t, nk)).copy_from(&self.rv_angular);
        stack
            .view_mut((0, nk), (self.n_t, self.fam_axisym.len()))
            .copy_from(&self.rv_axisym);

        // per-dof lookup tables
        let mut mode_of = vec![0usize; n_dof];
        let mut rad_of = vec![0usize; n_dof];
        for (bi, b) in self.blocks.iter().enumerate() {
            for j in 0..b.len {
                mode_of[b.offset + j] = bi;
                rad_of[b.offset + j] = match b.fam {
                    FamId::Angular => j,
                    FamId::Axisym => nk + j,
                };
            }
        }

        let mut out = DMatrix::zeros(n_dof, n_dof);
        let mut gs = DMatrix::zeros(ktot, ktot);
        let mut tvs = vec![0.0; n_dof];
        for s in 0..self.n_theta {
            gs.fill(0.0);
            for q in 0..self.n_t {
                let wv = w[(q, s)];
                if wv == 0.0 {
                    continue;
                }
                for a in 0..ktot {
                    let wa = wv * stack[(q, a)];
                    if wa == 0.0 {
                        continue;
                    }
                    for b in 0..ktot {
                        gs[(b, a)] += wa * stack[(q, b)];
                    }
                }
            }
            for (p, tv) in tvs.iter_mut().enumerate() {
                *tv = self.trig_vals[(mode_of[p], s)];
            }
            // lower triangle accumulation; gs is symmetric
            for qc in 0..n_dof {
                let tq = tvs[qc];
                if tq == 0.0 {
                    continue;
                }
                let jq = rad_of[qc];
                let gcol = gs.column(jq);
                let mut col = out.column_mut(qc);
                for p in qc..n_dof {
                    col[p] += tvs[p] * tq * gcol[rad_of[p]];
                }
            }
        }
        // mirror to the upper triangle
        for qc in 0..n_dof {
            for p in (qc + 1)..n_dof {
                out[(qc, p)] = out[(p, qc)];
            }
        }
        out
    }

    /// Energy functional over the physical ellipse:
    /// `J(u) = int (eps2/2 |grad u|^2 - V(x, u)) dx`.
    pub fn functional_value(&self, xi: &DVector<f64>) -> Result<f64, GalerkinError> {
        self.check_dim(xi)?;
        if !self.problem.has_potential() {
            return Err(GalerkinError::MissingPotential(self.problem.name.clone()));
        }
        let grad = 0.5 * self.problem.stiffness_scale * (xi.dot(&(&self.stiffness * xi)));
        let u = self.field_on_grid(xi);
        let mut pot = 0.0;
        for s in 0..self.n_theta {
            for q in 0..self.n_t {
                let x = (self.grid_x[(q, s)], self.grid_y[(q, s)]);
                pot += self.problem.potential(x, u[(q, s)]).unwrap() * self.mu_weight[q];
            }
        }
        Ok(grad - pot)
    }

    /// Functional on a quadrature grid with both sizes doubled, for
    /// convergence checks of emitted solutions.
    pub fn functional_value_refined(&self, xi: &DVector<f64>) -> Result<f64, GalerkinError> {
        let fine = Self::with_quadrature(
            self.domain,
            self.problem.clone(),
            self.m,
            self.n,
            2 * self.n_t,
            2 * self.n_theta,
        )?;
        fine.functional_value(xi)
    }

    /// Evaluate the expansion at arbitrary `(r, theta)` points.
    pub fn evaluate_field(
        &self,
        xi: &DVector<f64>,
        grid: &[(f64, f64)],
    ) -> Result<Vec<f64>, GalerkinError> {
        self.check_dim(xi)?;
        let mut out = Vec::with_capacity(grid.len());
        for &(r, theta) in grid {
            if !(0.0..=1.0).contains(&r) {
                return Err(GalerkinError::Geometry(
                    crate::geometry::GeometryError::RadiusOutOfRange(r),
                ));
            }
            let t = 2.0 * r - 1.0;
            let vals_angular = self.fam_angular.eval_all(t);
            let vals_axisym = self.fam_axisym.eval_all(t);
            let mut acc = 0.0;
            for b in &self.blocks {
                let tv = match b.trig {
                    Trig::Sin(i) => (i as f64 * theta).sin(),
                    Trig::Cos(i) => (i as f64 * theta).cos(),
                    Trig::One => 1.0,
                };
                if tv == 0.0 {
                    continue;
                }
                let vals = match b.fam {
                    FamId::Angular => &vals_angular,
                    FamId::Axisym => &vals_axisym,
                };
                let mut radial = 0.0;
                for j in 0..b.len {
                    radial += xi[b.offset + j] * vals[j];
                }
                acc += tv * radial;
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Project a smooth field onto the basis: solves `Mass xi = proj(f)`.
    pub fn interpolate_field(&self, f: impl Fn(f64, f64) -> f64) -> DVector<f64> {
        let mut w = DMatrix::zeros(self.n_t, self.n_theta);
        for s in 0..self.n_theta {
            for q in 0..self.n_t {
                let r = 0.5 * (self.rule_t.nodes[q] + 1.0);
                w[(q, s)] = f(r, self.theta_nodes[s]) * self.mu_weight[q];
            }
        }
        let rhs = self.project_grid(&w);
        self.mass
            .clone()
            .cholesky()
            .expect("mass matrix is SPD")
            .solve(&rhs)
    }

    /// Coefficient vector representing the constant field `c`, when the
    /// basis contains constants (Neumann axisymmetric block).
    pub fn constant_field(&self, c: f64) -> Option<DVector<f64>> {
        if self.problem.bc != BoundaryKind::Neumann {
            return None;
        }
        // Unconstrained family member 0 is L_0 = 1 with unit scale.
        let mut xi = DVector::zeros(self.dof());
        let one_block = self.blocks.last().unwrap();
        xi[one_block.offset] = c;
        Some(xi)
    }

    /// Inner product used by the basis driver.
    pub fn inner_product(&self, x: &DVector<f64>, y: &DVector<f64>, ip: InnerProduct) -> f64 {
        match ip {
            InnerProduct::CoefficientL2 => x.dot(y),
            InnerProduct::FieldL2 => x.dot(&(&self.mass * y)),
        }
    }

    /// Smallest `count` eigenvalues of `-laplace` on the domain with the
    /// given boundary condition, from the generalized symmetric problem
    /// `S x = lambda Mass x` in the same basis.
    pub fn linear_eigenvalues(
        domain: EllipseDomain,
        bc: BoundaryKind,
        m: usize,
        n: usize,
        count: usize,
    ) -> Result<Vec<f64>, GalerkinError> {
        // zero nonlinearity; the stiffness/mass pair is all that is used
        let prob = ProblemSpec::from_parts("eigen", 1.0, 1.0, bc, |_, _| 0.0, None, None, None);
        let dp = Self::new(domain, prob, m, n)?;
        let chol = nalgebra::Cholesky::new(dp.mass.clone())
            .ok_or_else(|| GalerkinError::EigenFailure("mass matrix not SPD".into()))?;
        let l = chol.l();
        let t1 = l
            .solve_lower_triangular(&dp.stiffness)
            .ok_or_else(|| GalerkinError::EigenFailure("singular Cholesky factor".into()))?;
        let a = l
            .solve_lower_triangular(&t1.transpose())
            .ok_or_else(|| GalerkinError::EigenFailure("singular Cholesky factor".into()))?;
        let sym = 0.5 * (&a + a.transpose());
        let eig = sym.symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        vals.truncate(count);
        if vals.len() < count {
            return Err(GalerkinError::EigenFailure(format!(
                "requested {count} eigenvalues, basis provides {}",
                eig.eigenvalues.len()
            )));
        }
        Ok(vals)
    }
}
