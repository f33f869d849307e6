//! Accelerated proximal gradient (APGM) and ADMM drivers for
//! `f(x) = g(x) + λ·tv(x)` with a pluggable TV proximal step.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::exact::{fpg_prox_warm, OracleConfig};
use crate::shrink::{approx_prox, ProxParams};
use crate::signal::{l2_norm, rel_change, NdSignal};
use crate::tv::{tv, TvMode};

/// The smooth data-fidelity term `g`.
pub trait Problem: Sync {
    fn shape(&self) -> &[usize];
    /// `g(x)`.
    fn value(&self, x: &NdSignal) -> f64;
    /// `∇g(x)`.
    fn gradient(&self, x: &NdSignal) -> NdSignal;
    /// `prox_{γg}(v)`.
    fn prox(&self, v: &NdSignal, gamma: f64) -> Result<NdSignal>;
    /// Lipschitz constant of `∇g`, when known.
    fn lipschitz(&self) -> Option<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProxChoice {
    /// Closed-form `S_τ`.
    Approximate,
    /// Dual FPG. With `warm_start` each call starts from the previous call's
    /// dual field instead of zero.
    Exact { oracle: OracleConfig, warm_start: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Step size (APGM) or penalty parameter (ADMM).
    pub gamma: f64,
    pub lambda: f64,
    pub mode: TvMode,
    pub prox: ProxChoice,
    pub stop_tol: f64,
    pub max_iter: usize,
    /// Every this many iterations, check that the approximate prox did not
    /// increase TV. `None` disables the check.
    pub descent_check_every: Option<usize>,
}

impl SolverConfig {
    pub fn new(gamma: f64, lambda: f64, mode: TvMode) -> Self {
        Self {
            gamma,
            lambda,
            mode,
            prox: ProxChoice::Approximate,
            stop_tol: 5e-6,
            max_iter: 20_000,
            descent_check_every: Some(100),
        }
    }

    pub fn with_prox(mut self, prox: ProxChoice) -> Self {
        self.prox = prox;
        self
    }

    pub fn with_stop_tol(mut self, tol: f64) -> Self {
        self.stop_tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    /// Scale at which the TV prox is applied, `τ = γλ`.
    pub fn tau(&self) -> f64 {
        self.gamma * self.lambda
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.stop_tol.is_finite() && self.stop_tol > 0.0) {
            return Err(Error::InvalidParameter(format!("stop_tol must be positive, got {}", self.stop_tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if let ProxChoice::Exact { oracle, .. } = &self.prox {
            oracle.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub final_x: NdSignal,
    /// `f(x^k)` for every iteration `k`.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub wall_time: f64,
    /// ADMM only: `‖x − z‖` at exit.
    pub primal_residual: Option<f64>,
    /// ADMM only: largest `‖s‖` seen.
    pub max_dual_norm: Option<f64>,
    pub descent_checks: usize,
    pub descent_violations: usize,
}

/// `(1 + √(1 + 4q²)) / 2`.
pub fn fista_momentum(q_prev: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * q_prev * q_prev).sqrt()) / 2.0
}

/// `f(x) = g(x) + λ·tv(x)`.
pub fn objective(problem: &dyn Problem, cfg: &SolverConfig, x: &NdSignal) -> f64 {
    problem.value(x) + cfg.lambda * tv(x, cfg.mode)
}

/// Applies the configured TV prox at scale `τ`, carrying the FPG dual field
/// between calls when warm starts are enabled.
struct TvProx {
    choice: ProxChoice,
    mode: TvMode,
    dual: Option<Vec<f64>>,
    check_every: Option<usize>,
    checks: usize,
    violations: usize,
}

impl TvProx {
    fn new(cfg: &SolverConfig) -> Self {
        Self {
            choice: cfg.prox,
            mode: cfg.mode,
            dual: None,
            check_every: cfg.descent_check_every,
            checks: 0,
            violations: 0,
        }
    }

    fn apply(&mut self, v: &NdSignal, tau: f64, iteration: usize) -> Result<NdSignal> {
        if tau == 0.0 {
            return Ok(v.clone());
        }
        match self.choice {
            ProxChoice::Approximate => {
                let out = approx_prox(v, &ProxParams::new(tau, self.mode)?);
                if matches!(self.check_every, Some(every) if every > 0 && iteration % every == 1 % every) {
                    let before = tv(v, self.mode);
                    let after = tv(&out, self.mode);
                    self.checks += 1;
                    if after > before + 1e-10 * before.max(1.0) {
                        self.violations += 1;
                        log::warn!("approximate prox increased TV at iteration {iteration}: {before} -> {after}");
                    }
                }
                Ok(out)
            }
            ProxChoice::Exact { oracle, warm_start } => {
                let start = if warm_start { self.dual.as_deref() } else { None };
                let out = fpg_prox_warm(v, tau, &oracle, start)?;
                if warm_start {
                    self.dual = Some(out.dual);
                }
                Ok(out.x)
            }
        }
    }
}

fn stop_measure(x: &NdSignal, x_prev: &NdSignal) -> f64 {
    match rel_change(x, x_prev) {
        Ok(r) => r,
        // previous iterate is zero: any movement counts as infinite change
        Err(_) => {
            if l2_norm(x) == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }
    }
}

fn check_shape(problem: &dyn Problem, x0: &NdSignal) -> Result<()> {
    if problem.shape() != x0.shape() {
        return Err(Error::ShapeMismatch {
            left: problem.shape().to_vec(),
            right: x0.shape().to_vec(),
        });
    }
    Ok(())
}

/// Accelerated proximal gradient:
///
/// ```text
/// z = s − γ∇g(s);  x = prox_{γλ·tv}(z);  s = x + ((q_{k−1} − 1)/q_k)(x − x_prev)
/// ```
///
/// stopping once `‖x^k − x^{k−1}‖/‖x^{k−1}‖ ≤ stop_tol`.
pub fn apgm(problem: &dyn Problem, cfg: &SolverConfig, x0: &NdSignal) -> Result<RunReport> {
    cfg.validate()?;
    check_shape(problem, x0)?;
    if let Some(l) = problem.lipschitz() {
        if cfg.gamma > 1.0 / l * (1.0 + 1e-12) {
            log::warn!("step size {} exceeds 1/L = {}", cfg.gamma, 1.0 / l);
        }
    }
    let start = Instant::now();
    let tau = cfg.tau();
    let mut prox = TvProx::new(cfg);
    let mut x_prev = x0.clone();
    let mut s = x0.clone();
    let mut q = 1.0;
    let mut trace = Vec::new();
    let mut stop_reason = StopReason::MaxIter;

    for k in 1..=cfg.max_iter {
        let grad = problem.gradient(&s);
        let z = s.lincomb(1.0, &grad, -cfg.gamma)?;
        let x = prox.apply(&z, tau, k)?;
        let q_next = fista_momentum(q);
        let beta = (q - 1.0) / q_next;
        s = x.lincomb(1.0 + beta, &x_prev, -beta)?;
        q = q_next;

        let f = objective(problem, cfg, &x);
        if !f.is_finite() {
            return Err(Error::Diverged { iteration: k, value: f });
        }
        trace.push(f);
        let change = stop_measure(&x, &x_prev);
        x_prev = x;
        if change <= cfg.stop_tol {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    Ok(RunReport {
        iterations: trace.len(),
        objective_trace: trace,
        final_x: x_prev,
        stop_reason,
        wall_time: start.elapsed().as_secs_f64(),
        primal_residual: None,
        max_dual_norm: None,
        descent_checks: prox.checks,
        descent_violations: prox.violations,
    })
}

/// Scaled ADMM for `min g(z) + λ·tv(x)` subject to `z = x`:
///
/// ```text
/// z = prox_{γg}(x − s);  x = prox_{γλ·tv}(z + s);  s = s + z − x
/// ```
///
/// The x-update reads the freshly computed `z`, and the scaled dual `s` is
/// updated with the constraint residual `z − x`, so that at a fixed point `s`
/// is `γλ` times a subgradient of TV at `x`.
pub fn admm(problem: &dyn Problem, cfg: &SolverConfig, x0: &NdSignal) -> Result<RunReport> {
    cfg.validate()?;
    check_shape(problem, x0)?;
    let start = Instant::now();
    let tau = cfg.tau();
    let mut prox = TvProx::new(cfg);
    let mut x_prev = x0.clone();
    let mut s = x0.zeros_like();
    let mut trace = Vec::new();
    let mut stop_reason = StopReason::MaxIter;
    let mut primal_residual = 0.0;
    let mut max_dual: f64 = 0.0;

    for k in 1..=cfg.max_iter {
        let z = problem.prox(&x_prev.sub(&s)?, cfg.gamma)?;
        let x = prox.apply(&z.add(&s)?, tau, k)?;
        let r = z.sub(&x)?;
        s = s.add(&r)?;
        primal_residual = l2_norm(&r);
        max_dual = max_dual.max(l2_norm(&s));

        let f = objective(problem, cfg, &x);
        if !f.is_finite() {
            return Err(Error::Diverged { iteration: k, value: f });
        }
        trace.push(f);
        let change = stop_measure(&x, &x_prev);
        x_prev = x;
        if change <= cfg.stop_tol {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    Ok(RunReport {
        iterations: trace.len(),
        objective_trace: trace,
        final_x: x_prev,
        stop_reason,
        wall_time: start.elapsed().as_secs_f64(),
        primal_residual: Some(primal_residual),
        max_dual_norm: Some(max_dual),
        descent_checks: prox.checks,
        descent_violations: prox.violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::fpg_prox;
    use crate::forward::{add_awgn, DenoiseProblem, IdentityOp, LeastSquaresProblem};
    use crate::tv::tv;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn step_signal() -> NdSignal {
        let clean = NdSignal::new(&[8], vec![0.0, 0.0, 1.0, 1.0, 1.0, 0.2, 0.2, 0.0]).unwrap();
        add_awgn(&clean, 0.1, 3).unwrap()
    }

    fn exact(tol: f64) -> ProxChoice {
        ProxChoice::Exact {
            oracle: OracleConfig::new(TvMode::Anisotropic).with_tol(tol).with_max_iter(100_000),
            warm_start: false,
        }
    }

    #[test]
    fn momentum_recurrence() {
        assert!((fista_momentum(1.0) - 1.618034).abs() < 1e-6);
        let mut q = 1.0;
        for _ in 0..10_000 {
            let next = fista_momentum(q);
            assert!(next > q);
            let next2 = fista_momentum(next);
            let ratio = (next - 1.0) / next2;
            assert!((0.0..1.0).contains(&ratio));
            q = next;
        }
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig::new(0.1, 0.5, TvMode::Isotropic);
        assert_eq!(cfg.stop_tol, 5e-6);
        assert_eq!(cfg.max_iter, 20_000);
        assert!((cfg.tau() - 0.05).abs() < 1e-16);
        assert!(cfg.validate().is_ok());
        assert!(SolverConfig::new(0.0, 0.5, TvMode::Isotropic).validate().is_err());
        assert!(SolverConfig::new(0.1, -0.5, TvMode::Isotropic).validate().is_err());
        assert!(SolverConfig::new(0.1, f64::NAN, TvMode::Isotropic).validate().is_err());
        assert!(cfg.with_stop_tol(0.0).validate().is_err());
        assert!(cfg.with_max_iter(0).validate().is_err());
    }

    #[test]
    fn objective_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let y = NdSignal::from_fn(&[6, 5], |_| rng.random_range(-1.0..1.0)).unwrap();
        let problem = DenoiseProblem { y: y.clone() };
        let cfg = SolverConfig::new(0.1, 0.0, TvMode::Anisotropic);
        assert_eq!(objective(&problem, &cfg, &y), 0.0);

        let c = NdSignal::filled(&[6, 5], 0.3).unwrap();
        let cfg = SolverConfig::new(0.1, 2.0, TvMode::Isotropic);
        let fit = 0.5 * y.as_slice().iter().map(|v| (v - 0.3).powi(2)).sum::<f64>();
        assert_eq!(objective(&problem, &cfg, &c), fit);

        let x = NdSignal::from_fn(&[6, 5], |_| rng.random_range(-1.0..1.0)).unwrap();
        for mode in TvMode::ALL {
            let cfg = SolverConfig::new(0.1, 0.7, mode);
            let parts = problem.value(&x) + 0.7 * tv(&x, mode);
            assert!((objective(&problem, &cfg, &x) - parts).abs() <= 1e-12);
        }
    }

    #[test]
    fn no_regularisation_recovers_data() {
        let y = step_signal();
        let problem = DenoiseProblem { y: y.clone() };
        let cfg = SolverConfig::new(1.0, 0.0, TvMode::Anisotropic);
        let x0 = y.zeros_like();
        for report in [apgm(&problem, &cfg, &x0).unwrap(), admm(&problem, &cfg, &x0).unwrap()] {
            assert_eq!(report.stop_reason, StopReason::Tolerance);
            assert!(l2_norm(&report.final_x.sub(&y).unwrap()) <= 1e-5 * l2_norm(&y));
        }
        let apgm_x = apgm(&problem, &cfg, &x0).unwrap().final_x;
        assert!(l2_norm(&apgm_x.sub(&y).unwrap()) <= 1e-8);
    }

    #[test]
    fn exact_apgm_matches_long_run_prox_gradient() {
        let y = step_signal();
        let problem = DenoiseProblem { y: y.clone() };
        let lambda = 0.5;
        let oracle = OracleConfig::new(TvMode::Anisotropic).with_tol(1e-15).with_max_iter(100_000);

        // plain proximal gradient, γ = 0.5
        let mut x = y.clone();
        for _ in 0..2_000 {
            let z = x.lincomb(0.5, &y, 0.5).unwrap();
            x = fpg_prox(&z, 0.5 * lambda, &oracle).unwrap().x;
        }
        let cfg = SolverConfig::new(1.0, lambda, TvMode::Anisotropic)
            .with_prox(exact(1e-15))
            .with_stop_tol(1e-12);
        let f_star = objective(&problem, &cfg, &x);

        let report = apgm(&problem, &cfg, &y).unwrap();
        assert_eq!(report.objective_trace.len(), report.iterations);
        let f_hat = *report.objective_trace.last().unwrap();
        assert!((f_hat - f_star).abs() <= 1e-8, "{f_hat} vs {f_star}");
    }

    #[test]
    fn approximate_gap_shrinks_with_step() {
        let y = step_signal();
        let problem = DenoiseProblem { y: y.clone() };
        let lambda = 0.5;
        let base = SolverConfig::new(1.0, lambda, TvMode::Anisotropic).with_prox(exact(1e-15)).with_stop_tol(1e-12);
        let f_star = *apgm(&problem, &base, &y).unwrap().objective_trace.last().unwrap();
        let mut last = f64::INFINITY;
        for gamma in [1e-1, 1e-2, 1e-3] {
            let cfg = SolverConfig::new(gamma, lambda, TvMode::Anisotropic);
            let report = apgm(&problem, &cfg, &y).unwrap();
            let gap = (report.objective_trace.last().unwrap() - f_star) / f_star;
            assert!(gap >= -1e-12 && gap < last, "gamma {gamma}: {gap} after {last}");
            last = gap;
        }
    }

    #[test]
    fn exact_prox_beats_approximate() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let y = NdSignal::from_fn(&[10, 10], |_| rng.random_range(0.0..1.0)).unwrap();
        let problem = DenoiseProblem { y: y.clone() };
        for mode in TvMode::ALL {
            let oracle = OracleConfig::new(mode).with_tol(1e-13).with_max_iter(50_000);
            let approx = apgm(&problem, &SolverConfig::new(0.1, 0.3, mode), &y).unwrap();
            let cfg = SolverConfig::new(0.1, 0.3, mode).with_prox(ProxChoice::Exact {
                oracle,
                warm_start: true,
            });
            let ex = apgm(&problem, &cfg, &y).unwrap();
            let mut best = f64::INFINITY;
            for &f in &ex.objective_trace {
                best = best.min(f);
            }
            assert!(ex.objective_trace.last().unwrap() <= &(approx.objective_trace.last().unwrap() + 1e-12));
            assert!(best <= ex.objective_trace[0]);
            assert_eq!(approx.descent_violations, 0);
            assert!(approx.descent_checks >= 1);
        }
    }

    #[test]
    fn admm_on_identity_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let y = NdSignal::from_fn(&[8, 8], |_| rng.random_range(0.0..1.0)).unwrap();
        let op = IdentityOp { len: 64 };
        let problem = LeastSquaresProblem::new(&op, y.as_slice().to_vec(), &[8, 8]).unwrap();
        let cfg = SolverConfig::new(0.5, 0.0, TvMode::Isotropic);
        let report = admm(&problem, &cfg, &y.zeros_like()).unwrap();
        assert_eq!(report.stop_reason, StopReason::Tolerance);
        assert!(report.final_x.max_abs_diff(&y).unwrap() <= 1e-4);

        let cfg = SolverConfig::new(0.5, 0.2, TvMode::Isotropic);
        let report = admm(&problem, &cfg, &y.zeros_like()).unwrap();
        assert_eq!(report.stop_reason, StopReason::Tolerance);
        assert!(report.primal_residual.unwrap() <= 1e-4);
        assert!(report.max_dual_norm.unwrap() <= 1e3 * l2_norm(&y));
    }

    #[test]
    fn admm_toy_ct_gap_shrinks_with_penalty() {
        use crate::experiments::gen_foam_phantom;
        use crate::forward::{add_awgn_sinogram, lipschitz_power_iter, radon_forward, CtGeometry, RadonOp};
        let geo = CtGeometry::new(16, 8).unwrap();
        let op = RadonOp::new(geo.clone()).unwrap();
        let truth = gen_foam_phantom(16, 4, 10).unwrap();
        let y = add_awgn_sinogram(&radon_forward(&truth, &geo).unwrap(), 0.2, 5).unwrap();
        let l = lipschitz_power_iter(&op, 500, 1e-10, 1).value;
        let problem = LeastSquaresProblem::new(&op, y.data, &[16, 16]).unwrap().with_lipschitz(l);
        let x0 = truth.zeros_like();
        let mode = TvMode::Anisotropic;
        let base = SolverConfig::new(1.0 / l, 2.0, mode)
            .with_prox(ProxChoice::Exact {
                oracle: OracleConfig::new(mode).with_tol(1e-10).with_max_iter(100_000),
                warm_start: true,
            })
            .with_stop_tol(1e-9)
            .with_max_iter(100_000);
        let f_star = *apgm(&problem, &base, &x0).unwrap().objective_trace.last().unwrap();
        let gap = |gamma: f64| {
            let report = admm(&problem, &SolverConfig::new(gamma, 2.0, mode), &x0).unwrap();
            assert_eq!(report.stop_reason, StopReason::Tolerance);
            assert!(report.primal_residual.unwrap() < 1e-4);
            (report.objective_trace.last().unwrap() - f_star) / f_star
        };
        let (coarse, fine) = (gap(1e-2), gap(1e-4));
        assert!(fine >= -1e-9 && fine < coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn shape_mismatch_and_max_iter() {
        let y = step_signal();
        let problem = DenoiseProblem { y: y.clone() };
        let cfg = SolverConfig::new(0.1, 0.5, TvMode::Anisotropic);
        assert!(apgm(&problem, &cfg, &NdSignal::zeros(&[4, 2]).unwrap()).is_err());
        assert!(admm(&problem, &cfg, &NdSignal::zeros(&[9]).unwrap()).is_err());
        let report = apgm(&problem, &cfg.with_max_iter(3), &y.zeros_like()).unwrap();
        assert_eq!(report.stop_reason, StopReason::MaxIter);
        assert_eq!(report.iterations, 3);
    }
}
