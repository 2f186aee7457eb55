//! Dogleg trust-region minimization of `Q(xi) = 1/2 ||F(xi)||^2`.
//!
//! Each iteration minimizes the local quadratic model
//! `q(s) = Q + g's + 1/2 s'Gs` over the ball `||s|| <= h` with the classical
//! dogleg step, accepts the step when the agreement ratio
//! `r = (Q - Q_new) / (q(0) - q(s))` is at least `delta1`, and adapts the
//! radius: shrink by `tau1` when `r < delta1`, grow by `tau2` when
//! `r > delta2` and the step hit the boundary. Iteration starts from
//! `h_0 = ||g_0||` and stops once `||g|| <= eps_g` and `|Q| <= eps_v`.
//!
//! The model Hessian is `G = J'J` by default (Gauss-Newton, positive
//! semidefinite so the Newton branch stays well posed far from roots), with
//! the full `J'J + sum_i F_i hess(F_i)` and a finite-difference fallback as
//! alternatives.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrustRegionError {
    #[error("model decrease must be positive, got {0} (broken quadratic model)")]
    NonPositiveModelDecrease(f64),
    #[error("initial point contains non-finite entries")]
    NonFiniteStart,
}

/// How the model Hessian of `Q` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HessianMode {
    /// `G = J'J` (default).
    #[default]
    GaussNewton,
    /// `G = J'J + sum_i F_i hess(F_i)` when the system supplies the
    /// second-order term.
    Full,
    /// Central differences of `Q` itself.
    FiniteDifference,
}

#[derive(Debug, Clone)]
pub struct TrustRegionConfig {
    pub eps_g: f64,
    pub eps_v: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub max_iter: usize,
    pub hessian_mode: HessianMode,
    /// Practical extra stop: quit once `||F||_inf` falls below this, on top
    /// of the gradient/value tests. `None` keeps the two-test rule only.
    pub eps_f_inf: Option<f64>,
    /// Abort as stalled when `Q` improved by less than 1% over this many
    /// iterations while still far from zero. `0` disables the check.
    pub stall_window: usize,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            eps_g: 1e-13,
            eps_v: 1e-13,
            delta1: 0.25,
            delta2: 0.75,
            tau1: 0.5,
            tau2: 2.0,
            max_iter: 100,
            hessian_mode: HessianMode::GaussNewton,
            eps_f_inf: None,
            stall_window: 0,
        }
    }
}

/// A least-squares system `F : R^m -> R^k`. The Jacobian is optional; when
/// absent (or in [`HessianMode::FiniteDifference`]) derivatives fall back to
/// central differences with steps `sqrt(eps) max(1, ||x||)` for the gradient
/// and `cbrt(eps) max(1, ||x||)` for the Hessian.
pub trait ResidualSystem {
    fn dim(&self) -> usize;
    fn residual_len(&self) -> usize;
    fn residual(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
    /// `sum_i F_i(x) hess(F_i)(x)` for the full Newton model.
    fn residual_hessian_term(&self, _x: &DVector<f64>, _f: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// Wrap a closure as a residual system without analytic derivatives.
pub struct FnSystem<F> {
    pub dim: usize,
    pub residual_len: usize,
    pub f: F,
}

impl<F: Fn(&DVector<f64>) -> DVector<f64>> ResidualSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn residual_len(&self) -> usize {
        self.residual_len
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }
}

/// `Q(xi) = 1/2 ||F(xi)||^2`.
pub fn objective(sys: &dyn ResidualSystem, x: &DVector<f64>) -> f64 {
    objective_of(&sys.residual(x))
}

pub fn objective_of(f: &DVector<f64>) -> f64 {
    0.5 * f.norm_squared()
}

/// Agreement ratio `r = (Q_old - Q_new) / model_decrease`.
pub fn ratio(q_old: f64, q_new: f64, model_decrease: f64) -> Result<f64, TrustRegionError> {
    if !(model_decrease > 0.0) {
        return Err(TrustRegionError::NonPositiveModelDecrease(model_decrease));
    }
    Ok((q_old - q_new) / model_decrease)
}

/// Which branch of the dogleg produced the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoglegBranch {
    NewtonInterior,
    SteepestDescent,
    Interpolated,
}

/// Solve the trust-region subproblem with the dogleg path.
///
/// Newton step inside the ball is taken as is; if the unconstrained Cauchy
/// point already leaves the ball the scaled steepest-descent step
/// `-(g/||g||) h` is used; otherwise the segment from the Cauchy point to
/// the Newton point is intersected with the sphere, giving a step of norm
/// exactly `h`. A Hessian whose Cholesky factorization fails is regularized
/// by adding `mu I`, `mu = 1e-10 trace(G)/n`, doubled until success (at most
/// 10 times) before falling back to steepest descent.
pub fn dogleg_step(g: &DVector<f64>, hess: &DMatrix<f64>, h: f64) -> (DVector<f64>, DoglegBranch) {
    let n = g.len();
    if g.norm() == 0.0 {
        return (DVector::zeros(n), DoglegBranch::NewtonInterior);
    }
    let newton = regularized_solve(hess, g);
    if let Some(p_newton) = &newton {
        if p_newton.norm() <= h {
            return (p_newton.clone(), DoglegBranch::NewtonInterior);
        }
    }
    let g_hess_g = g.dot(&(hess * g));
    if g_hess_g <= 0.0 || newton.is_none() {
        return (-(h / g.norm()) * g, DoglegBranch::SteepestDescent);
    }
    let p_cauchy = -(g.norm_squared() / g_hess_g) * g;
    if p_cauchy.norm() >= h {
        return (-(h / g.norm()) * g, DoglegBranch::SteepestDescent);
    }
    let p_newton = newton.unwrap();
    let d = &p_newton - &p_cauchy;
    let dd = d.norm_squared();
    if dd == 0.0 {
        return (-(h / g.norm()) * g, DoglegBranch::SteepestDescent);
    }
    let c = p_cauchy.dot(&d);
    let disc = (c * c + dd * (h * h - p_cauchy.norm_squared())).max(0.0);
    let lambda = (-c + disc.sqrt()) / dd;
    (p_cauchy + lambda * d, DoglegBranch::Interpolated)
}

fn regularized_solve(hess: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = hess.clone().cholesky() {
        return Some(-ch.solve(g));
    }
    let n = hess.nrows();
    let mut mu = 1e-10 * hess.trace().abs().max(1e-300) / n as f64;
    for _ in 0..10 {
        let reg = hess + DMatrix::identity(n, n) * mu;
        if let Some(ch) = reg.cholesky() {
            return Some(-ch.solve(g));
        }
        mu *= 2.0;
    }
    None
}

/// One row of the per-iteration trace (CSV-exportable).
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k: usize,
    pub q: f64,
    pub norm_f_inf: f64,
    pub norm_g: f64,
    pub h: f64,
    pub r: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Both `||g|| <= eps_g` and `|Q| <= eps_v`.
    Converged,
    /// `||F||_inf` fell below the configured practical floor.
    ResidualFloor,
    MaxIterations,
    /// Radius shrank below `1e-15 max(1, ||x||)`.
    RadiusCollapsed,
    /// No meaningful decrease of `Q` over the stall window.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub termination: Termination,
    pub iterations: usize,
    pub final_q: f64,
    pub final_norm_f_inf: f64,
    pub final_norm_g: f64,
    pub trace: Vec<IterationRecord>,
}

impl MinimizeReport {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::Converged | Termination::ResidualFloor
        )
    }

    /// `||F||_inf` at the end of iteration `k` (1-based count), for
    /// residual-decay tables.
    pub fn norm_f_inf_after(&self, iterations: usize) -> Option<f64> {
        if iterations == 0 {
            return None;
        }
        self.trace.get(iterations - 1).map(|row| row.norm_f_inf)
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("k,Q,normF_inf,h,r,accepted\n");
        for row in &self.trace {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{}\n",
                row.k, row.q, row.norm_f_inf, row.h, row.r, row.accepted as u8
            ));
        }
        out
    }
}

fn fd_gradient(sys: &dyn ResidualSystem, x: &DVector<f64>) -> DVector<f64> {
    let eps = f64::EPSILON.sqrt() * x.norm().max(1.0);
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        xp[i] = x[i] + eps;
        let qp = objective(sys, &xp);
        xp[i] = x[i] - eps;
        let qm = objective(sys, &xp);
        xp[i] = x[i];
        g[i] = (qp - qm) / (2.0 * eps);
    }
    g
}

fn fd_hessian(sys: &dyn ResidualSystem, x: &DVector<f64>, q0: f64) -> DMatrix<f64> {
    let eps = f64::EPSILON.cbrt() * x.norm().max(1.0);
    let n = x.len();
    let mut qi = vec![0.0; n];
    let mut xp = x.clone();
    for i in 0..n {
        xp[i] = x[i] + eps;
        qi[i] = objective(sys, &xp);
        xp[i] = x[i];
    }
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            xp[i] += eps;
            xp[j] += eps;
            let qij = objective(sys, &xp);
            xp[i] = x[i];
            xp[j] = x[j];
            let v = (qij - qi[i] - qi[j] + q0) / (eps * eps);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Gradient and model Hessian of `Q` at `x` under the configured mode.
pub fn derivatives(
    sys: &dyn ResidualSystem,
    x: &DVector<f64>,
    f: &DVector<f64>,
    mode: HessianMode,
) -> (DVector<f64>, DMatrix<f64>) {
    match mode {
        HessianMode::FiniteDifference => {
            let g = fd_gradient(sys, x);
            let hess = fd_hessian(sys, x, objective_of(f));
            (g, hess)
        }
        HessianMode::GaussNewton | HessianMode::Full => match sys.jacobian(x) {
            Some(jac) => {
                let g = jac.transpose() * f;
                let mut hess = jac.transpose() * &jac;
                if mode == HessianMode::Full {
                    if let Some(extra) = sys.residual_hessian_term(x, f) {
                        hess += extra;
                    }
                }
                (g, hess)
            }
            None => {
                // FD Jacobian of the residual, column by column.
                let eps = f64::EPSILON.sqrt() * x.norm().max(1.0);
                let mut jac = DMatrix::zeros(sys.residual_len(), x.len());
                let mut xp = x.clone();
                for i in 0..x.len() {
                    xp[i] = x[i] + eps;
                    let fp = sys.residual(&xp);
                    xp[i] = x[i] - eps;
                    let fm = sys.residual(&xp);
                    xp[i] = x[i];
                    jac.set_column(i, &((fp - fm) / (2.0 * eps)));
                }
                let g = jac.transpose() * f;
                let hess = jac.transpose() * &jac;
                (g, hess)
            }
        },
    }
}

/// Minimize `Q = 1/2 ||F||^2` from `x0`. Non-convergence is reported in the
/// `MinimizeReport`, not as an error.
pub fn minimize(
    sys: &dyn ResidualSystem,
    x0: &DVector<f64>,
    cfg: &TrustRegionConfig,
) -> Result<(DVector<f64>, MinimizeReport), TrustRegionError> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(TrustRegionError::NonFiniteStart);
    }
    let mut x = x0.clone();
    let mut f = sys.residual(&x);
    let mut q = objective_of(&f);
    let mut trace = Vec::new();

    let (mut g, mut hess) = derivatives(sys, &x, &f, cfg.hessian_mode);
    let mut h = g.norm();
    if h == 0.0 {
        h = 1.0;
    }
    let mut derivatives_fresh = true;
    let mut termination = None;
    let mut iterations = 0;

    for k in 0..cfg.max_iter {
        if !derivatives_fresh {
            let (gg, hh) = derivatives(sys, &x, &f, cfg.hessian_mode);
            g = gg;
            hess = hh;
            derivatives_fresh = true;
        }
        if g.norm() <= cfg.eps_g && q.abs() <= cfg.eps_v {
            termination = Some(Termination::Converged);
            break;
        }
        if let Some(floor) = cfg.eps_f_inf {
            if f.amax() <= floor {
                termination = Some(Termination::ResidualFloor);
                break;
            }
        }
        if h < 1e-15 * x.norm().max(1.0) {
            termination = Some(Termination::RadiusCollapsed);
            break;
        }

        let (step, _) = dogleg_step(&g, &hess, h);
        let model_decrease = -(g.dot(&step) + 0.5 * step.dot(&(&hess * &step)));
        let x_new = &x + &step;
        let f_new = sys.residual(&x_new);
        let q_new = objective_of(&f_new);
        let r = if model_decrease > 0.0 {
            (q - q_new) / model_decrease
        } else {
            // roundoff-degenerate model near stationarity: force a shrink
            -1.0
        };

        let step_norm = step.norm();
        let accepted = r >= cfg.delta1;
        if accepted {
            x = x_new;
            f = f_new;
            q = q_new;
            derivatives_fresh = false;
        }
        if r < cfg.delta1 {
            h *= cfg.tau1;
        } else if r > cfg.delta2 && step_norm >= (1.0 - 1e-10) * h {
            h *= cfg.tau2;
        }
        iterations = k + 1;
        trace.push(IterationRecord {
            k,
            q,
            norm_f_inf: f.amax(),
            norm_g: g.norm(),
            h,
            r,
            accepted,
        });
        if cfg.stall_window > 0 && trace.len() > cfg.stall_window && q > cfg.eps_v {
            let prev = trace[trace.len() - 1 - cfg.stall_window].q;
            if prev - q <= 0.01 * q {
                termination = Some(Termination::Stalled);
                break;
            }
        }
    }

    let report = MinimizeReport {
        termination: termination.unwrap_or(Termination::MaxIterations),
        iterations,
        final_q: q,
        final_norm_f_inf: f.amax(),
        final_norm_g: g.norm(),
        trace,
    };
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Identity;

    impl ResidualSystem for Identity {
        fn dim(&self) -> usize {
            2
        }
        fn residual_len(&self) -> usize {
            2
        }
        fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
        fn jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
            Some(DMatrix::identity(2, 2))
        }
    }

    struct Rosenbrock;

    impl ResidualSystem for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn residual_len(&self) -> usize {
            2
        }
        fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![1.0 - x[0], 10.0 * (x[1] - x[0] * x[0])])
        }
        fn jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
            Some(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -20.0 * x[0], 10.0]))
        }
    }

    #[test]
    fn objective_examples() {
        let sys = Identity;
        let x = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(objective(&sys, &x), 12.5);
        assert_eq!(objective(&sys, &DVector::zeros(2)), 0.0);

        // summation oracle
        let x = DVector::from_vec(vec![0.3, -1.7]);
        let manual: f64 = 0.5 * x.iter().map(|v| v * v).sum::<f64>();
        assert!((objective(&sys, &x) - manual).abs() < 1e-15);
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(ratio(1.0, 0.5, 1.0).unwrap(), 0.5);
        // exact quadratic: actual decrease equals model decrease
        assert_eq!(ratio(2.0, 1.25, 0.75).unwrap(), 1.0);
        assert!(ratio(1.0, 0.5, 0.0).is_err());
        assert!(ratio(1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn dogleg_branches() {
        let g = DVector::from_vec(vec![1.0, 0.0]);
        let eye = DMatrix::identity(2, 2);
        let (s, b) = dogleg_step(&g, &eye, 10.0);
        assert_eq!(b, DoglegBranch::NewtonInterior);
        assert!((s[0] + 1.0).abs() < 1e-15 && s[1].abs() < 1e-15);

        let (s, b) = dogleg_step(&g, &eye, 0.5);
        assert_eq!(b, DoglegBranch::SteepestDescent);
        assert!((s[0] + 0.5).abs() < 1e-15 && s[1].abs() < 1e-15);
    }

    #[test]
    fn dogleg_boundary_step_is_model_near_optimal() {
        // G = diag(1, 4), g = (1, 1); pick h between the Cauchy and Newton
        // step lengths so that the interpolated branch triggers.
        let g = DVector::from_vec(vec![1.0, 1.0]);
        let hess = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let p_newton = -DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.25]) * &g;
        let scale: f64 = g.norm_squared() / g.dot(&(&hess * &g));
        let p_cauchy = -scale * &g;
        let h = 0.5 * (p_cauchy.norm() + p_newton.norm());
        let (s, b) = dogleg_step(&g, &hess, h);
        assert_eq!(b, DoglegBranch::Interpolated);
        assert!((s.norm() - h).abs() < 1e-12, "step norm {} vs h {h}", s.norm());

        // brute-force near-optimality of the model value over the ball
        let model = |p: &DVector<f64>| g.dot(p) + 0.5 * p.dot(&(&hess * p));
        let q_step = model(&s);
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut best = f64::INFINITY;
        for _ in 0..10_000 {
            let v = DVector::from_vec(vec![2.0 * next() - 1.0, 2.0 * next() - 1.0]);
            if v.norm() > 1.0 {
                continue;
            }
            best = best.min(model(&(h * v)));
        }
        // the dogleg path is not globally optimal, but must be close
        assert!(
            q_step <= best + 0.05 * best.abs(),
            "dogleg model value {q_step} worse than sampled best {best}"
        );
    }

    #[test]
    fn minimize_linear_residual() {
        struct Shift;
        impl ResidualSystem for Shift {
            fn dim(&self) -> usize {
                3
            }
            fn residual_len(&self) -> usize {
                3
            }
            fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
                x - DVector::from_vec(vec![1.0, -2.0, 0.5])
            }
            fn jacobian(&self, _: &DVector<f64>) -> Option<DMatrix<f64>> {
                Some(DMatrix::identity(3, 3))
            }
        }
        let (x, report) = minimize(&Shift, &DVector::zeros(3), &TrustRegionConfig::default()).unwrap();
        assert!(report.converged());
        assert!(report.iterations <= 3, "took {} iterations", report.iterations);
        assert!((x - DVector::from_vec(vec![1.0, -2.0, 0.5])).amax() < 1e-12);
    }

    #[test]
    fn minimize_rosenbrock_quadratic_tail() {
        let x0 = DVector::from_vec(vec![-1.2, 1.0]);
        let (x, report) = minimize(&Rosenbrock, &x0, &TrustRegionConfig::default()).unwrap();
        assert!(report.converged(), "termination {:?}", report.termination);
        assert!(report.final_q <= 1e-20, "Q = {}", report.final_q);
        assert!((x[0] - 1.0).abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9);

        // local quadratic rate: log-log slope of the error over the last
        // accepted steps with nonzero error
        let sol = DVector::from_vec(vec![1.0, 1.0]);
        let mut errs: Vec<f64> = Vec::new();
        let mut xk = x0.clone();
        for row in &report.trace {
            if row.accepted {
                // replay to recover iterates: rerun with max_iter = k+1
                let cfg = TrustRegionConfig {
                    max_iter: row.k + 1,
                    ..TrustRegionConfig::default()
                };
                let (xi, _) = minimize(&Rosenbrock, &x0, &cfg).unwrap();
                xk = xi;
                let e = (&xk - &sol).norm();
                if e > 1e-14 {
                    errs.push(e);
                }
            }
        }
        let _ = xk;
        // slope of log e_{k+1} vs log e_k over the final iterations
        let tail: Vec<f64> = errs.iter().rev().take(5).copied().collect();
        let mut slopes = Vec::new();
        for w in tail.windows(2) {
            // tail is reversed: w[0] is later than w[1]
            slopes.push(w[0].ln() / w[1].ln());
        }
        let avg = slopes.iter().sum::<f64>() / slopes.len() as f64;
        assert!(avg >= 1.8, "convergence order estimate {avg} from {errs:?}");
    }

    #[test]
    fn accepted_steps_decrease_q_and_stay_in_ball() {
        let x0 = DVector::from_vec(vec![-1.2, 1.0]);
        let (_, report) = minimize(&Rosenbrock, &x0, &TrustRegionConfig::default()).unwrap();
        let mut last_q = f64::INFINITY;
        for row in &report.trace {
            if row.accepted {
                assert!(row.q <= last_q + 1e-15, "Q increased at k = {}", row.k);
                last_q = row.q;
            }
        }
    }

    #[test]
    fn hessian_modes_agree_on_gradient() {
        let x = DVector::from_vec(vec![-0.7, 0.4]);
        let f = Rosenbrock.residual(&x);
        let (g_an, h_gn) = derivatives(&Rosenbrock, &x, &f, HessianMode::GaussNewton);
        let (g_fd, h_fd) = derivatives(&Rosenbrock, &x, &f, HessianMode::FiniteDifference);
        let (g_full, _) = derivatives(&Rosenbrock, &x, &f, HessianMode::Full);
        assert!((&g_an - &g_fd).norm() <= 1e-6 * g_an.norm());
        assert!((&g_an - &g_full).norm() <= 1e-12 * g_an.norm());
        // FD Hessian approximates the full Hessian, which differs from
        // Gauss-Newton by the residual curvature term
        assert!(h_fd.shape() == h_gn.shape());
    }

    #[test]
    fn reports_non_convergence_at_max_iter() {
        let cfg = TrustRegionConfig {
            max_iter: 2,
            ..TrustRegionConfig::default()
        };
        let x0 = DVector::from_vec(vec![-1.2, 1.0]);
        let (_, report) = minimize(&Rosenbrock, &x0, &cfg).unwrap();
        assert_eq!(report.termination, Termination::MaxIterations);
        assert_eq!(report.trace.len(), 2);
    }

    #[test]
    fn rejects_non_finite_start() {
        let x0 = DVector::from_vec(vec![f64::NAN, 1.0]);
        assert!(minimize(&Rosenbrock, &x0, &TrustRegionConfig::default()).is_err());
    }
}
