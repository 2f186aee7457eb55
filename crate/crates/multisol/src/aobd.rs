//! Adaptive orthogonal basis deflation driver.
//!
//! Solutions of the discretized system are located in rounds:
//!
//! 1. a first trust-region solve from a low-mode random guess yields a
//!    nontrivial solution, normalized into the first basis direction `chi0`;
//! 2. the scalar equation `omega(alpha) = <F(alpha chi0), chi0> = 0` is
//!    handed to the bisection-deflation root finder, every root seeding a
//!    full solve;
//! 3. the basis is enriched by solving the augmented system
//!    `F(a0 chi0 + a1 chi)/a1 = 0, (chi0, chi) = 0, (chi, chi) = 1` from
//!    randomized starts in the orthogonal complement;
//! 4. Gram-Schmidt keeps the basis orthonormal;
//! 5. each new basis direction gets its amplitude roots with the previous
//!    amplitudes frozen, the small system over all amplitudes is re-solved,
//!    and every surviving amplitude tuple is polished at full resolution
//!    into a [`SolutionRecord`].
//!
//! Enrichment rounds continue until the basis budget is reached or two
//! consecutive rounds produce no new deduplicated records.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::galerkin::{
    BoundaryKind, DiscreteProblem, GalerkinError, InnerProduct, SpectralCoefficients,
};
use crate::geometry::EllipseDomain;
use crate::rootfind::{find_all_roots, GridSearchSpec, RootFindError};
use crate::trustregion::{
    minimize, objective_of, MinimizeReport, ResidualSystem, TrustRegionConfig, TrustRegionError,
};

#[derive(Debug, Error)]
pub enum AobdError {
    #[error("no nontrivial seed solution found after {attempts} trust-region attempts")]
    SeedFailed { attempts: usize },
    #[error("geometry continuation target b = {target} not in (0, {current}]")]
    BadContinuationTarget { target: f64, current: f64 },
    #[error(transparent)]
    Galerkin(#[from] GalerkinError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    TrustRegion(#[from] TrustRegionError),
    #[error(transparent)]
    RootFind(#[from] RootFindError),
}

/// Driver settings. The whole driver is deterministic given `seed`.
#[derive(Debug, Clone)]
pub struct AobdConfig {
    /// Trust-region settings for full-resolution solves.
    pub trust_region: TrustRegionConfig,
    /// Amplitude search region and density.
    pub search: GridSearchSpec,
    pub inner_product: InnerProduct,
    /// Randomized starts per enrichment round.
    pub enrich_starts: usize,
    /// Maximum number of orthonormal basis members.
    pub basis_budget: usize,
    /// Residual bound `||F||_inf` for a record to count as converged.
    pub record_tol: f64,
    /// Coefficient-space distance below which two records are the same.
    pub dedup_tol: f64,
    /// Cap on amplitude tuples carried from one refinement stage to the
    /// next (ranked by residual).
    pub max_seeds_per_stage: usize,
    pub seed: u64,
    /// Step-1 retries before giving up.
    pub max_seed_attempts: usize,
    /// Amplitude of the low-mode random initial guesses.
    pub seed_amplitude: f64,
    /// Extra deterministic initial guesses tried before the random ones.
    pub structured_seeds: Vec<SeedShape>,
}

impl Default for AobdConfig {
    fn default() -> Self {
        let trust_region = TrustRegionConfig {
            max_iter: 120,
            eps_f_inf: Some(1e-11),
            ..TrustRegionConfig::default()
        };
        Self {
            trust_region,
            search: GridSearchSpec::default(),
            inner_product: InnerProduct::CoefficientL2,
            enrich_starts: 8,
            basis_budget: 8,
            record_tol: 1e-8,
            dedup_tol: 1e-6,
            max_seeds_per_stage: 12,
            seed: 0,
            max_seed_attempts: 12,
            seed_amplitude: 1.0,
            structured_seeds: Vec::new(),
        }
    }
}

/// Deterministic initial-guess shapes for the first solve.
#[derive(Debug, Clone, PartialEq)]
pub enum SeedShape {
    /// `amp * exp(-r^2/width^2)` bump at the center.
    CenterBump { amp: f64, width: f64 },
    /// `count` bumps of height `amp` on the ring `r = r0`, at angles
    /// `2 pi k / count`.
    RingBumps { count: usize, amp: f64, r0: f64, width: f64 },
    /// Axisymmetric profile `amp * (1 - r^2)`.
    Paraboloid { amp: f64 },
}

impl SeedShape {
    pub fn build(&self, dp: &DiscreteProblem) -> DVector<f64> {
        match *self {
            SeedShape::CenterBump { amp, width } => {
                dp.interpolate_field(|r, _| amp * (-r * r / (width * width)).exp())
            }
            SeedShape::RingBumps { count, amp, r0, width } => dp.interpolate_field(move |r, th| {
                let mut v = 0.0;
                for k in 0..count {
                    let thk = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                    // squared chord distance on the reference disk
                    let d2 = r * r + r0 * r0 - 2.0 * r * r0 * (th - thk).cos();
                    v += amp * (-d2 / (width * width)).exp();
                }
                v
            }),
            SeedShape::Paraboloid { amp } => dp.interpolate_field(move |r, _| amp * (1.0 - r * r)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            SeedShape::CenterBump { .. } => "center-bump".into(),
            SeedShape::RingBumps { count, .. } => format!("ring-bumps-{count}"),
            SeedShape::Paraboloid { .. } => "paraboloid".into(),
        }
    }
}

/// The discretized PDE as a least-squares system for the trust region.
pub struct GalerkinSystem<'a> {
    dp: &'a DiscreteProblem,
}

impl<'a> GalerkinSystem<'a> {
    pub fn new(dp: &'a DiscreteProblem) -> Self {
        Self { dp }
    }
}

impl ResidualSystem for GalerkinSystem<'_> {
    fn dim(&self) -> usize {
        self.dp.dof()
    }

    fn residual_len(&self) -> usize {
        self.dp.dof()
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        self.dp
            .assemble_residual(x)
            .expect("dimension fixed by construction")
    }

    fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.dp.assemble_jacobian(x).ok()
    }

    fn residual_hessian_term(&self, x: &DVector<f64>, f: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.dp.residual_hessian_term(x, f).ok()
    }
}

/// Precomputed evaluator for the scalar ray projection
/// `omega(alpha) = <F(xi_fixed + alpha chi), chi>`: the linear part reduces
/// to two scalars, the nonlinear part to a weighted grid sum.
pub struct RayProjection {
    lin_const: f64,
    lin_slope: f64,
    u_fixed: DMatrix<f64>,
    chi_grid: DMatrix<f64>,
    chi_weighted: DMatrix<f64>,
    grid_xy: Vec<(f64, f64)>,
    problem: crate::problems::ProblemSpec,
}

impl RayProjection {
    pub fn new(dp: &DiscreteProblem, xi_fixed: &DVector<f64>, chi: &DVector<f64>) -> Self {
        let s_chi = dp.problem().stiffness_scale * (dp.stiffness() * chi);
        let lin_const = xi_fixed.dot(&s_chi);
        let lin_slope = chi.dot(&s_chi);
        let u_fixed = dp.field_on_grid(xi_fixed);
        let chi_grid = dp.field_on_grid(chi);
        let chi_weighted = dp.weighted_pointwise(&chi_grid, |_, v| v);
        let (n_t, n_theta) = dp.quadrature_sizes();
        let mut grid_xy = Vec::with_capacity(n_t * n_theta);
        // column-major to match matrix storage
        for s in 0..n_theta {
            for q in 0..n_t {
                grid_xy.push(dp.grid_point(q, s));
            }
        }
        Self {
            lin_const,
            lin_slope,
            u_fixed,
            chi_grid,
            chi_weighted,
            grid_xy,
            problem: dp.problem().clone(),
        }
    }

    pub fn eval(&self, alpha: f64) -> f64 {
        let uf = self.u_fixed.as_slice();
        let cg = self.chi_grid.as_slice();
        let cw = self.chi_weighted.as_slice();
        let mut nl = 0.0;
        for i in 0..uf.len() {
            let u = uf[i] + alpha * cg[i];
            nl += self.problem.f(self.grid_xy[i], u) * cw[i];
        }
        self.lin_const + alpha * self.lin_slope - nl
    }
}

/// `F(sum_i a_i chi_i)` as a least-squares system over the amplitudes.
pub struct SpanSystem<'a> {
    dp: &'a DiscreteProblem,
    s_chis: Vec<DVector<f64>>,
    chi_grids: Vec<DMatrix<f64>>,
}

impl<'a> SpanSystem<'a> {
    pub fn new(dp: &'a DiscreteProblem, chis: &[DVector<f64>]) -> Self {
        let scale = dp.problem().stiffness_scale;
        let s_chis = chis.iter().map(|c| scale * (dp.stiffness() * c)).collect();
        let chi_grids = chis.iter().map(|c| dp.field_on_grid(c)).collect();
        Self { dp, s_chis, chi_grids }
    }

    fn grid_from_amplitudes(&self, a: &DVector<f64>) -> DMatrix<f64> {
        let mut u = &self.chi_grids[0] * a[0];
        for i in 1..a.len() {
            u += &self.chi_grids[i] * a[i];
        }
        u
    }
}

impl ResidualSystem for SpanSystem<'_> {
    fn dim(&self) -> usize {
        self.s_chis.len()
    }

    fn residual_len(&self) -> usize {
        self.dp.dof()
    }

    fn residual(&self, a: &DVector<f64>) -> DVector<f64> {
        let u = self.grid_from_amplitudes(a);
        let w = self
            .dp
            .weighted_pointwise(&u, |x, v| self.dp.problem().f(x, v));
        let mut out = -self.dp.project_grid(&w);
        for i in 0..a.len() {
            out += &self.s_chis[i] * a[i];
        }
        out
    }

    fn jacobian(&self, a: &DVector<f64>) -> Option<DMatrix<f64>> {
        if !self.dp.problem().has_f_u() {
            return None;
        }
        let u = self.grid_from_amplitudes(a);
        let fu_w = self
            .dp
            .weighted_pointwise(&u, |x, v| self.dp.problem().f_u(x, v).unwrap());
        let mut jac = DMatrix::zeros(self.dp.dof(), a.len());
        for i in 0..a.len() {
            let col =
                &self.s_chis[i] - self.dp.project_grid(&fu_w.component_mul(&self.chi_grids[i]));
            jac.set_column(i, &col);
        }
        Some(jac)
    }
}

/// The augmented enrichment system in the unknowns `(chi, a0, a1)`:
/// `F(a0 chi0 + a1 chi)/a1 = 0`, `(chi0, chi) = 0`, `(chi, chi) = 1`.
/// Dividing by `a1` bars collapse onto the known `chi0` ray.
struct EnrichSystem<'a> {
    dp: &'a DiscreteProblem,
    chi0: &'a DVector<f64>,
    ip: InnerProduct,
}

impl EnrichSystem<'_> {
    fn split(&self, z: &DVector<f64>) -> (DVector<f64>, f64, f64) {
        let n = self.dp.dof();
        (z.rows(0, n).into_owned(), z[n], z[n + 1])
    }
}

fn guard_div(a1: f64) -> f64 {
    if a1.abs() < 1e-300 {
        1e-300
    } else {
        a1
    }
}

impl ResidualSystem for EnrichSystem<'_> {
    fn dim(&self) -> usize {
        self.dp.dof() + 2
    }

    fn residual_len(&self) -> usize {
        self.dp.dof() + 2
    }

    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.dp.dof();
        let (chi, a0, a1) = self.split(z);
        let u = self.chi0 * a0 + &chi * a1;
        let f = self.dp.assemble_residual(&u).expect("dimension fixed");
        let mut out = DVector::zeros(n + 2);
        out.rows_mut(0, n).copy_from(&(f / guard_div(a1)));
        out[n] = self.dp.inner_product(self.chi0, &chi, self.ip);
        out[n + 1] = self.dp.inner_product(&chi, &chi, self.ip) - 1.0;
        out
    }

    fn jacobian(&self, z: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.dp.dof();
        let (chi, a0, a1) = self.split(z);
        let a1 = guard_div(a1);
        let u = self.chi0 * a0 + &chi * a1;
        let jf = self.dp.assemble_jacobian(&u).ok()?;
        let f = self.dp.assemble_residual(&u).ok()?;
        let mut jac = DMatrix::zeros(n + 2, n + 2);
        // d/dchi of F(u)/a1 with du/dchi = a1: exactly J_F
        jac.view_mut((0, 0), (n, n)).copy_from(&jf);
        jac.view_mut((0, n), (n, 1))
            .copy_from(&((&jf * self.chi0) / a1));
        jac.view_mut((0, n + 1), (n, 1))
            .copy_from(&((&jf * &chi) / a1 - &f / (a1 * a1)));
        let m_chi0 = match self.ip {
            InnerProduct::CoefficientL2 => self.chi0.clone(),
            InnerProduct::FieldL2 => self.dp.mass() * self.chi0,
        };
        let m_chi = match self.ip {
            InnerProduct::CoefficientL2 => chi.clone(),
            InnerProduct::FieldL2 => self.dp.mass() * &chi,
        };
        jac.view_mut((n, 0), (1, n)).copy_from(&m_chi0.transpose());
        jac.view_mut((n + 1, 0), (1, n))
            .copy_from(&(2.0 * m_chi.transpose()));
        Some(jac)
    }
}

/// Ordered orthonormal basis grown from previously found solutions.
#[derive(Debug, Clone, Default)]
pub struct AdaptiveBasis {
    pub members: Vec<DVector<f64>>,
}

impl AdaptiveBasis {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `(worst off-diagonal product, worst unit-norm defect)`.
    pub fn orthonormality_defect(&self, dp: &DiscreteProblem, ip: InnerProduct) -> (f64, f64) {
        let mut off = 0.0f64;
        let mut diag = 0.0f64;
        for (i, u) in self.members.iter().enumerate() {
            for (j, v) in self.members.iter().enumerate() {
                let p = dp.inner_product(u, v, ip);
                if i == j {
                    diag = diag.max((p - 1.0).abs());
                } else {
                    off = off.max(p.abs());
                }
            }
        }
        (off, diag)
    }
}

/// One converged solution with its provenance.
#[derive(Debug, Clone)]
pub struct SolutionRecord {
    pub xi: SpectralCoefficients,
    /// `||F||_inf` recomputed by direct assembly at the stored coefficients.
    pub residual_inf: f64,
    pub j_value: f64,
    /// Amplitude path through the adaptive basis that seeded this record.
    pub amplitudes: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub origin: String,
    /// Per-iteration trace of the final polish solve.
    pub trace: Vec<crate::trustregion::IterationRecord>,
}

/// Solve the full system from `xi0` and normalize the result into the first
/// basis direction: `alpha0 = ||u||_2`, `chi0 = u / alpha0`.
pub fn seed_basis(
    dp: &DiscreteProblem,
    xi0: &DVector<f64>,
    cfg: &AobdConfig,
) -> Result<(DVector<f64>, f64, MinimizeReport), AobdError> {
    let sys = GalerkinSystem::new(dp);
    let (xi, report) = minimize(&sys, xi0, &cfg.trust_region)?;
    if !report.converged() || report.final_norm_f_inf > cfg.record_tol {
        return Err(AobdError::SeedFailed { attempts: 1 });
    }
    let alpha0 = xi.norm();
    if alpha0 < 1e-6 {
        return Err(AobdError::SeedFailed { attempts: 1 });
    }
    Ok((&xi / alpha0, alpha0, report))
}

/// All amplitudes `alpha` with `<F(sum fixed + alpha free), free> = 0` in
/// the search box. An empty list is a legitimate outcome (no sign change).
pub fn amplitude_roots(
    dp: &DiscreteProblem,
    fixed: &[(DVector<f64>, f64)],
    free: &DVector<f64>,
    search: &GridSearchSpec,
) -> Result<Vec<f64>, AobdError> {
    let mut xi_fixed = DVector::zeros(dp.dof());
    for (chi, a) in fixed {
        xi_fixed += chi * *a;
    }
    let ray = RayProjection::new(dp, &xi_fixed, free);
    let set = find_all_roots(|alpha| ray.eval(alpha), search)?;
    Ok(set.unflagged_values())
}

/// Modified Gram-Schmidt with a re-orthogonalization pass; members whose
/// residual norm falls below `drop_tol` are linearly dependent and dropped.
pub fn gram_schmidt(
    dp: &DiscreteProblem,
    vectors: &[DVector<f64>],
    ip: InnerProduct,
    drop_tol: f64,
) -> AdaptiveBasis {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _pass in 0..2 {
            for b in &basis {
                let p = dp.inner_product(&w, b, ip);
                w -= b * p;
            }
        }
        let norm = dp.inner_product(&w, &w, ip).sqrt();
        if norm < drop_tol {
            continue;
        }
        w /= norm;
        // deterministic sign: largest-magnitude entry positive
        if w[w.iamax()] < 0.0 {
            w = -w;
        }
        basis.push(w);
    }
    AdaptiveBasis { members: basis }
}

/// Candidate triples `(a0, a1, chi)` from the enrichment system, solved
/// from randomized starts in the orthogonal complement of the basis.
pub fn enrich_basis(
    dp: &DiscreteProblem,
    basis: &AdaptiveBasis,
    amp_hints: &[f64],
    cfg: &AobdConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, f64, DVector<f64>)>, AobdError> {
    assert!(!basis.is_empty(), "enrichment needs a seeded basis");
    let chi0 = &basis.members[0];
    let sys = EnrichSystem {
        dp,
        chi0,
        ip: cfg.inner_product,
    };
    let n = dp.dof();
    let mut out: Vec<(f64, f64, DVector<f64>)> = Vec::new();

    let tr = TrustRegionConfig {
        max_iter: 60,
        // the extended residual holds F/a1 and the two constraints; its
        // max-norm is the meaningful convergence measure here
        eps_f_inf: Some(1e-10),
        stall_window: 15,
        ..cfg.trust_region.clone()
    };
    let warm_tr = TrustRegionConfig {
        max_iter: 100,
        stall_window: 25,
        ..cfg.trust_region.clone()
    };
    let amp_scale = amp_hints
        .iter()
        .fold(0.0f64, |acc, a| acc.max(a.abs()))
        .max(1.0);
    // physical amplitude of the seed solution, used to calibrate the
    // complement amplitudes in field units
    let seed_field_amp = dp.field_on_grid(&(chi0 * amp_scale)).amax().max(1e-12);
    let full_sys = GalerkinSystem::new(dp);

    for start in 0..cfg.enrich_starts {
        // smooth band-limited random direction orthogonal to the basis
        // (white-noise coefficient vectors represent rough fields that
        // rarely sit in a solution basin)
        let imax = dp.modes().min(1 + start % 6);
        let jmax = (dp.degree() - 2).min(2 + start % 3);
        let mut chi_start = band_limited_random(dp, imax, jmax, 1.0, rng);
        for b in &basis.members {
            let p = dp.inner_product(&chi_start, b, cfg.inner_product);
            chi_start -= b * p;
        }
        let norm = dp
            .inner_product(&chi_start, &chi_start, cfg.inner_product)
            .sqrt();
        if norm < 1e-12 {
            continue;
        }
        chi_start /= norm;

        // anchor amplitudes cycle over zero (pure complement starts) and
        // the known roots; the complement amplitude is calibrated so the
        // start's field amplitude is a chosen multiple of the seed
        // solution's
        let a0_start = if start % (amp_hints.len() + 1) == 0 || amp_hints.is_empty() {
            0.0
        } else {
            amp_hints[(start - 1) % amp_hints.len()]
        };
        let chi_field_amp = dp.field_on_grid(&chi_start).amax().max(1e-12);
        let rel = [0.8, -0.8, 1.5, -1.5, 2.2, -2.2, 3.0, -3.0][start % 8];
        let a1_start = rel * seed_field_amp / chi_field_amp;

        // initial-guess preparation: run the plain system from the
        // composite field; an off-ray solution decomposes into an exact
        // solution of the augmented system, a collapse onto the known ray
        // leaves the cold start in place
        let mut z0 = DVector::zeros(n + 2);
        z0.rows_mut(0, n).copy_from(&chi_start);
        z0[n] = a0_start;
        z0[n + 1] = a1_start;
        let composite = chi0 * a0_start + &chi_start * a1_start;
        if let Ok((u, rep)) = minimize(&full_sys, &composite, &warm_tr) {
            if rep.converged() {
                let along = dp.inner_product(&u, chi0, cfg.inner_product);
                let perp = &u - chi0 * along;
                let a1 = dp.inner_product(&perp, &perp, cfg.inner_product).sqrt();
                if a1 > cfg.dedup_tol.max(1e-3) {
                    z0.rows_mut(0, n).copy_from(&(&perp / a1));
                    z0[n] = along;
                    z0[n + 1] = a1;
                }
            }
        }

        let Ok((z, report)) = minimize(&sys, &z0, &tr) else {
            continue;
        };
        if !report.converged() {
            continue;
        }
        let chi = z.rows(0, n).into_owned();
        let (a0, a1) = (z[n], z[n + 1]);
        if a1.abs() < cfg.dedup_tol {
            continue;
        }
        let ortho = dp.inner_product(chi0, &chi, cfg.inner_product).abs();
        let unit = (dp.inner_product(&chi, &chi, cfg.inner_product) - 1.0).abs();
        if ortho > 1e-8 || unit > 1e-8 {
            continue;
        }
        // drop directions equal to a known one up to sign
        let near = |c: &DVector<f64>, d: &DVector<f64>| {
            (c - d).norm().min((c + d).norm()) <= 1e-6 * c.norm().max(1.0)
        };
        let dup = out.iter().any(|(_, _, c)| near(c, &chi))
            || basis.members.iter().any(|c| near(c, &chi));
        if !dup {
            out.push((a0, a1, chi));
        }
    }
    Ok(out)
}

/// Remove near-identical records, keeping the lower-residual
/// representative. Records are compared as coefficient vectors without sign
/// flips: `u` and `-u` are different fields and both stay.
pub fn dedup(records: Vec<SolutionRecord>, tol: f64) -> Vec<SolutionRecord> {
    let mut kept: Vec<SolutionRecord> = Vec::new();
    for rec in records {
        let mut verdict = None;
        for (i, k) in kept.iter().enumerate() {
            let d = (rec.xi.as_vector() - k.xi.as_vector()).norm();
            if d <= tol * rec.xi.as_vector().norm().max(1.0) {
                verdict = Some(if rec.residual_inf < k.residual_inf {
                    Some(i)
                } else {
                    None
                });
                break;
            }
        }
        match verdict {
            Some(Some(i)) => kept[i] = rec,
            Some(None) => {}
            None => kept.push(rec),
        }
    }
    kept
}

fn dedup_tuples(tuples: Vec<DVector<f64>>, tol: f64) -> Vec<DVector<f64>> {
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for t in tuples {
        if !kept
            .iter()
            .any(|k| (k - &t).norm() <= tol * t.norm().max(1.0))
        {
            kept.push(t);
        }
    }
    kept
}

/// Polish a coefficient seed at full resolution into a record.
fn polish(
    dp: &DiscreteProblem,
    xi0: &DVector<f64>,
    amplitudes: Vec<f64>,
    origin: &str,
    cfg: &AobdConfig,
) -> Result<SolutionRecord, AobdError> {
    let sys = GalerkinSystem::new(dp);
    let (xi, report) = minimize(&sys, xi0, &cfg.trust_region)?;
    let residual_inf = dp.assemble_residual(&xi)?.amax();
    let j_value = if dp.problem().has_potential() {
        dp.functional_value(&xi)?
    } else {
        f64::NAN
    };
    Ok(SolutionRecord {
        xi: SpectralCoefficients::from_vec(dp.modes(), dp.degree(), xi)?,
        residual_inf,
        j_value,
        amplitudes,
        iterations: report.iterations,
        converged: residual_inf <= cfg.record_tol,
        origin: origin.to_string(),
        trace: report.trace,
    })
}

/// Refinement sweep: extend amplitude tuples over each basis member in
/// turn, re-solving the small all-amplitudes system after each extension,
/// and polish every surviving tuple at full resolution.
pub fn refine(
    dp: &DiscreteProblem,
    basis: &AdaptiveBasis,
    initial_tuples: &[Vec<f64>],
    cfg: &AobdConfig,
) -> Result<Vec<SolutionRecord>, AobdError> {
    let mut stage_tuples: Vec<DVector<f64>> = initial_tuples
        .iter()
        .map(|t| DVector::from_column_slice(t))
        .collect();
    let mut polish_seeds: Vec<(DVector<f64>, String)> = stage_tuples
        .iter()
        .map(|t| (t.clone(), "stage0".to_string()))
        .collect();

    for m in 1..basis.len() {
        let span: Vec<DVector<f64>> = basis.members[..=m].to_vec();
        let span_sys = SpanSystem::new(dp, &span);
        let small_tr = TrustRegionConfig {
            max_iter: 60,
            ..cfg.trust_region.clone()
        };
        let mut next: Vec<DVector<f64>> = Vec::new();
        for tuple in &stage_tuples {
            let fixed: Vec<(DVector<f64>, f64)> = (0..m)
                .map(|i| {
                    let a = if i < tuple.len() { tuple[i] } else { 0.0 };
                    (basis.members[i].clone(), a)
                })
                .collect();
            let roots = amplitude_roots(dp, &fixed, &basis.members[m], &cfg.search)?;
            for alpha in roots {
                let mut a0 = DVector::zeros(m + 1);
                for i in 0..m {
                    a0[i] = if i < tuple.len() { tuple[i] } else { 0.0 };
                }
                a0[m] = alpha;
                let Ok((a, _report)) = minimize(&span_sys, &a0, &small_tr) else {
                    continue;
                };
                if a.iter().all(|v| v.is_finite()) {
                    next.push(a);
                }
            }
        }
        let mut next = dedup_tuples(next, cfg.dedup_tol);
        // rank by small-system objective, keep the most promising
        next.sort_by(|a, b| {
            let qa = objective_of(&span_sys.residual(a));
            let qb = objective_of(&span_sys.residual(b));
            qa.partial_cmp(&qb).unwrap_or(std::cmp::Ordering::Equal)
        });
        next.truncate(cfg.max_seeds_per_stage);
        polish_seeds.extend(next.iter().map(|t| (t.clone(), format!("stage{m}"))));
        stage_tuples = next;
    }

    let mut records = Vec::new();
    for (tuple, origin) in polish_seeds {
        let mut xi0 = DVector::zeros(dp.dof());
        for (i, a) in tuple.iter().enumerate() {
            xi0 += &basis.members[i] * *a;
        }
        if xi0.norm() < 1e-9 {
            continue;
        }
        let rec = polish(dp, &xi0, tuple.iter().copied().collect(), &origin, cfg)?;
        if rec.converged {
            records.push(rec);
        }
    }
    Ok(dedup(records, cfg.dedup_tol))
}

/// Output of a full driver run.
#[derive(Debug)]
pub struct DriverOutput {
    pub records: Vec<SolutionRecord>,
    pub basis: AdaptiveBasis,
    /// Roots of the first amplitude equation on `chi0`.
    pub amplitude_roots0: Vec<f64>,
    pub seed_attempts: usize,
    pub log: Vec<String>,
}

/// Random coefficients restricted to modes `i <= imax`, radial `j <= jmax`.
pub fn band_limited_random(
    dp: &DiscreteProblem,
    imax: usize,
    jmax: usize,
    amp: f64,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    let mut xi = SpectralCoefficients::zeros(dp.modes(), dp.degree());
    let imax = dp.modes().min(imax);
    let jmax = (dp.degree() - 2).min(jmax);
    for i in 1..=imax {
        for j in 0..=jmax {
            xi.set_alpha(i, j, amp * (rng.gen::<f64>() * 2.0 - 1.0));
            xi.set_beta(i, j, amp * (rng.gen::<f64>() * 2.0 - 1.0));
        }
    }
    for l in 0..=jmax {
        xi.set_gamma(l, amp * (rng.gen::<f64>() * 2.0 - 1.0));
    }
    xi.into_vector()
}

/// Low-mode random coefficients (modes `i <= 2`, radial `j <= 2`).
pub fn low_mode_random_guess(
    dp: &DiscreteProblem,
    amp: f64,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    band_limited_random(dp, 2, 2, amp, rng)
}

/// Numerical check that the nonlinearity is odd in `u` at sample points.
fn problem_is_odd(dp: &DiscreteProblem) -> bool {
    let p = dp.problem();
    for &(x, y) in &[(0.0, 0.0), (0.3, -0.2), (-0.5, 0.1)] {
        for &u in &[0.3, 1.1, 2.9, 4.2] {
            let s = p.f((x, y), u) + p.f((x, y), -u);
            if s.abs() > 1e-12 * p.f((x, y), u).abs().max(1.0) {
                return false;
            }
        }
    }
    true
}

/// For odd nonlinearities, `-u` solves whenever `u` does; close the record
/// set under negation.
fn mirror_records(
    dp: &DiscreteProblem,
    records: &[SolutionRecord],
    cfg: &AobdConfig,
) -> Result<Vec<SolutionRecord>, AobdError> {
    let mut out = Vec::new();
    for rec in records {
        let neg = -rec.xi.as_vector();
        let residual_inf = dp.assemble_residual(&neg)?.amax();
        if residual_inf > cfg.record_tol {
            continue;
        }
        let j_value = if dp.problem().has_potential() {
            dp.functional_value(&neg)?
        } else {
            f64::NAN
        };
        out.push(SolutionRecord {
            xi: SpectralCoefficients::from_vec(dp.modes(), dp.degree(), neg)?,
            residual_inf,
            j_value,
            amplitudes: rec.amplitudes.iter().map(|a| -a).collect(),
            iterations: 0,
            converged: true,
            origin: format!("{}-mirror", rec.origin),
            trace: vec![],
        });
    }
    Ok(out)
}

fn is_constant_field(dp: &DiscreteProblem, xi: &DVector<f64>) -> bool {
    let pts: Vec<(f64, f64)> = (0..25)
        .map(|k| (k as f64 / 24.0, 2.399963 * k as f64))
        .collect();
    let vals = dp.evaluate_field(xi, &pts).expect("grid in range");
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo < 1e-6 * hi.abs().max(1.0)
}

/// The full driver: seed, amplitude roots, enrichment rounds, refinement,
/// dedup.
pub fn run_driver(dp: &DiscreteProblem, cfg: &AobdConfig) -> Result<DriverOutput, AobdError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::new();

    // Step 1: a nontrivial (for Neumann also nonconstant) solution seeds
    // the basis. Zero and constants span already-known rays and are
    // rejected here; retries draw fresh low-mode guesses.
    let mut seed_attempts = 0;
    let mut seeded = None;
    let structured: Vec<DVector<f64>> = cfg.structured_seeds.iter().map(|s| s.build(dp)).collect();
    for attempt in 0..cfg.max_seed_attempts {
        seed_attempts = attempt + 1;
        let xi0 = if attempt < structured.len() {
            structured[attempt].clone()
        } else {
            low_mode_random_guess(dp, cfg.seed_amplitude, &mut rng)
        };
        match seed_basis(dp, &xi0, cfg) {
            Ok((chi0, alpha0, report)) => {
                let solution = &chi0 * alpha0;
                if dp.problem().bc == BoundaryKind::Neumann && is_constant_field(dp, &solution) {
                    log.push(format!("seed attempt {attempt}: constant solution, retrying"));
                    continue;
                }
                log.push(format!(
                    "seed attempt {attempt}: converged in {} iterations, alpha0 = {alpha0:.6e}",
                    report.iterations
                ));
                seeded = Some((chi0, alpha0));
                break;
            }
            Err(_) => {
                log.push(format!("seed attempt {attempt}: no nontrivial solution"));
            }
        }
    }
    let Some((chi0, alpha0)) = seeded else {
        return Err(AobdError::SeedFailed {
            attempts: seed_attempts,
        });
    };

    // Step 2: amplitude roots along chi0.
    let roots0 = amplitude_roots(dp, &[], &chi0, &cfg.search)?;
    log.push(format!("amplitude roots on chi0: {roots0:?}"));
    let nonzero_roots: Vec<f64> = roots0
        .iter()
        .copied()
        .filter(|a| a.abs() > cfg.dedup_tol.max(1e-6))
        .collect();
    let mut tuples: Vec<Vec<f64>> = nonzero_roots.iter().map(|&a| vec![a]).collect();
    if tuples.is_empty() {
        tuples.push(vec![alpha0]);
    }

    let mut basis = AdaptiveBasis {
        members: vec![chi0.clone()],
    };
    let mut records: Vec<SolutionRecord> = Vec::new();
    let mut rounds_without_progress = 0;

    loop {
        let before = records.len();
        if basis.len() < cfg.basis_budget {
            let triples = enrich_basis(dp, &basis, &nonzero_roots, cfg, &mut rng)?;
            log.push(format!(
                "enrichment produced {} candidate directions",
                triples.len()
            ));
            let mut vecs = basis.members.clone();
            for (a0, a1, chi) in &triples {
                // the enriched pair is itself a solution candidate
                let xi0 = &chi0 * *a0 + chi * *a1;
                if let Ok(rec) = polish(dp, &xi0, vec![*a0, *a1], "enrich", cfg) {
                    if rec.converged {
                        records.push(rec);
                    }
                }
                vecs.push(chi.clone());
            }
            records = dedup(std::mem::take(&mut records), cfg.dedup_tol);
            basis = gram_schmidt(dp, &vecs, cfg.inner_product, 1e-8);
            if basis.len() > cfg.basis_budget {
                basis.members.truncate(cfg.basis_budget);
            }
        }

        let new_records = refine(dp, &basis, &tuples, cfg)?;
        let merged = dedup(
            records.iter().cloned().chain(new_records).collect(),
            cfg.dedup_tol,
        );
        let progressed = merged.len() > before;
        records = merged;
        log.push(format!(
            "refinement over {} basis members: {} records total",
            basis.len(),
            records.len()
        ));

        if basis.len() >= cfg.basis_budget {
            break;
        }
        if progressed {
            rounds_without_progress = 0;
        } else {
            rounds_without_progress += 1;
            if rounds_without_progress >= 2 {
                break;
            }
        }
    }

    if problem_is_odd(dp) {
        let mirrors = mirror_records(dp, &records, cfg)?;
        records = dedup(records.into_iter().chain(mirrors).collect(), cfg.dedup_tol);
        log.push(format!(
            "odd nonlinearity: record set closed under negation ({} records)",
            records.len()
        ));
    }

    records.sort_by(|a, b| {
        a.j_value
            .partial_cmp(&b.j_value)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(DriverOutput {
        records,
        basis,
        amplitude_roots0: roots0,
        seed_attempts,
        log,
    })
}

/// One point of a geometry-continuation path.
#[derive(Debug, Clone)]
pub struct ContinuationStep {
    pub b: f64,
    pub j_value: f64,
    pub residual_inf: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuationPath {
    pub record_index: usize,
    pub steps: Vec<ContinuationStep>,
    /// Convergence was lost partway; the path stops at the last converged
    /// geometry (candidate fold or bifurcation).
    pub truncated: bool,
    pub final_xi: SpectralCoefficients,
}

/// Walk the semi-axis `b` from the records' domain down to `b_target`,
/// re-polishing every record at each intermediate geometry and logging
/// `J(u)` along the way.
pub fn continue_in_geometry(
    dp: &DiscreteProblem,
    records: &[SolutionRecord],
    b_target: f64,
    steps: usize,
    cfg: &AobdConfig,
) -> Result<Vec<ContinuationPath>, AobdError> {
    let b_start = dp.domain().b();
    if !(b_target > 0.0) || b_target > b_start {
        return Err(AobdError::BadContinuationTarget {
            target: b_target,
            current: b_start,
        });
    }

    let mut paths = Vec::new();
    for (idx, rec) in records.iter().enumerate() {
        let mut path = ContinuationPath {
            record_index: idx,
            steps: vec![ContinuationStep {
                b: b_start,
                j_value: rec.j_value,
                residual_inf: rec.residual_inf,
            }],
            truncated: false,
            final_xi: rec.xi.clone(),
        };
        let mut xi = rec.xi.as_vector().clone();
        for k in 1..=steps {
            let b = b_start + (b_target - b_start) * k as f64 / steps.max(1) as f64;
            let dom = EllipseDomain::new(dp.domain().a(), b)?;
            let dpb = dp.with_domain(dom)?;
            let sys = GalerkinSystem::new(&dpb);
            let Ok((next, report)) = minimize(&sys, &xi, &cfg.trust_region) else {
                path.truncated = true;
                break;
            };
            let res = dpb.assemble_residual(&next)?.amax();
            if !report.converged() || res > cfg.record_tol {
                path.truncated = true;
                break;
            }
            let j = dpb.functional_value(&next)?;
            path.steps.push(ContinuationStep {
                b,
                j_value: j,
                residual_inf: res,
            });
            path.final_xi =
                SpectralCoefficients::from_vec(dpb.modes(), dpb.degree(), next.clone())?;
            xi = next;
        }
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests;
