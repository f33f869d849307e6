//! Reference solvers for `prox_{τ·tv}(z) = argmin_x ½‖x − z‖² + τ·tv(x)`.
//!
//! [`fpg_prox`] is the accelerated projected gradient method on the dual
//! problem
//!
//! ```text
//! min_{p ∈ B} ½‖z − τDᵀp‖²,   x = z − τDᵀp,
//! ```
//!
//! where `B` is the unit ball field of the dual group norm (`‖·‖_∞ ≤ 1` per
//! entry for anisotropic TV, `‖·‖₂ ≤ 1` per location for isotropic TV). The
//! duality gap at a dual-feasible `p` is `τ·Σ_i (‖(Dx)_i‖ − ⟨(Dx)_i, p_i⟩)`,
//! a sum of non-negative terms, and bounds `½‖x − x*‖²` from above.
//!
//! [`tautstring_prox_1d`] is the direct (taut-string) algorithm for the
//! free-boundary 1D problem, used to cross-validate the iterative method.

use crate::error::{Error, Result};
use crate::signal::{norm_slice, NdSignal};
use crate::tv::{gradient, gradient_adjoint, Boundary, TvMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub max_iter: usize,
    /// Stop once the duality gap is below `tol · max(1, objective)`.
    pub tol: f64,
    pub mode: TvMode,
    pub boundary: Boundary,
}

impl OracleConfig {
    pub fn new(mode: TvMode) -> Self {
        Self {
            max_iter: 500,
            tol: 1e-10,
            mode,
            boundary: Boundary::Circular,
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FpgOutcome {
    pub x: NdSignal,
    /// Dual field `p` (`d` blocks of `n`), feasible by construction.
    pub dual: Vec<f64>,
    /// Final duality gap (objective units).
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project_dual(p: &mut [f64], n: usize, d: usize, mode: TvMode) {
    match mode {
        TvMode::Anisotropic => {
            for v in p.iter_mut() {
                *v = v.clamp(-1.0, 1.0);
            }
        }
        TvMode::Isotropic => {
            for i in 0..n {
                let norm = (0..d).map(|j| p[j * n + i].powi(2)).sum::<f64>().sqrt();
                if norm > 1.0 {
                    for j in 0..d {
                        p[j * n + i] /= norm;
                    }
                }
            }
        }
    }
}

/// `Σ_i (‖g_i‖ − ⟨g_i, p_i⟩)`, each term non-negative for feasible `p`.
fn pairing_gap(g: &[f64], p: &[f64], n: usize, d: usize, mode: TvMode) -> f64 {
    match mode {
        TvMode::Anisotropic => g.iter().zip(p).map(|(a, b)| (a.abs() - a * b).max(0.0)).sum(),
        TvMode::Isotropic => (0..n)
            .map(|i| {
                let mut norm = 0.0;
                let mut inner = 0.0;
                for j in 0..d {
                    norm += g[j * n + i] * g[j * n + i];
                    inner += g[j * n + i] * p[j * n + i];
                }
                (norm.sqrt() - inner).max(0.0)
            })
            .sum(),
    }
}

fn primal_from_dual(z: &[f64], p: &[f64], shape: &[usize], tau: f64, boundary: Boundary) -> Vec<f64> {
    let dtp = gradient_adjoint(p, shape, boundary);
    z.iter().zip(dtp).map(|(a, b)| a - tau * b).collect()
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    Ok(())
}

pub fn fpg_prox(z: &NdSignal, tau: f64, cfg: &OracleConfig) -> Result<FpgOutcome> {
    fpg_prox_warm(z, tau, cfg, None)
}

/// [`fpg_prox`] started from a given dual field instead of zero.
pub fn fpg_prox_warm(z: &NdSignal, tau: f64, cfg: &OracleConfig, dual0: Option<&[f64]>) -> Result<FpgOutcome> {
    check_tau(tau)?;
    cfg.validate()?;
    let shape = z.shape();
    let n = z.len();
    let d = z.ndim();
    let zs = z.as_slice();
    let step = 1.0 / (4.0 * d as f64 * tau);

    let mut p = match dual0 {
        Some(p0) if p0.len() == n * d => {
            let mut p = p0.to_vec();
            project_dual(&mut p, n, d, cfg.mode);
            p
        }
        Some(p0) => {
            return Err(Error::LengthMismatch {
                len: p0.len(),
                shape: shape.to_vec(),
            })
        }
        None => vec![0.0; n * d],
    };
    let mut p_prev = p.clone();
    let mut r = p.clone();
    let mut t = 1.0f64;

    let mut x = primal_from_dual(zs, &p, shape, tau, cfg.boundary);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for k in 1..=cfg.max_iter {
        iterations = k;
        let xr = primal_from_dual(zs, &r, shape, tau, cfg.boundary);
        let g = gradient(&xr, shape, cfg.boundary);
        std::mem::swap(&mut p_prev, &mut p);
        for ((pv, rv), gv) in p.iter_mut().zip(&r).zip(&g) {
            *pv = rv + step * gv;
        }
        project_dual(&mut p, n, d, cfg.mode);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        for ((rv, pv), qv) in r.iter_mut().zip(&p).zip(&p_prev) {
            *rv = pv + beta * (pv - qv);
        }
        t = t_next;

        x = primal_from_dual(zs, &p, shape, tau, cfg.boundary);
        let gx = gradient(&x, shape, cfg.boundary);
        gap = tau * pairing_gap(&gx, &p, n, d, cfg.mode);
        let fit: f64 = x.iter().zip(zs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * 0.5;
        let objective = fit + tau * crate::tv::group_sum(&gx, n, d, cfg.mode);
        if gap <= cfg.tol * objective.max(1.0) {
            converged = true;
            break;
        }
    }

    Ok(FpgOutcome {
        x: z.with_data(x),
        dual: p,
        gap,
        iterations,
        converged,
    })
}

/// Exact minimiser of `½‖x − z‖² + τ Σ_k |x_{k+1} − x_k|` (free boundary) by
/// the direct taut-string algorithm. Linear time in practice.
pub fn tautstring_prox_1d(z: &NdSignal, tau: f64) -> Result<NdSignal> {
    check_tau(tau)?;
    if z.ndim() != 1 {
        return Err(Error::InvalidParameter(format!(
            "taut-string prox needs a 1D signal, got shape {:?}",
            z.shape()
        )));
    }
    let y = z.as_slice();
    let n = y.len();
    let lambda = tau;
    let mut out = vec![0.0; n];

    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = y[0] - lambda;
    let mut vmax = y[0] + lambda;

    loop {
        while k == n - 1 {
            if umin < 0.0 {
                loop {
                    out[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = y[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    out[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = y[k0];
                umax = -lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                out[k0..=k].fill(vmin);
                return Ok(z.with_data(out));
            }
        }
        umin += y[k + 1] - vmin;
        if umin < -lambda {
            out[k0..=kminus].fill(vmin);
            k0 = kminus + 1;
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = y[k0];
            vmax = vmin + 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        umax += y[k + 1] - vmax;
        if umax > lambda {
            out[k0..=kplus].fill(vmax);
            k0 = kplus + 1;
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = y[k0];
            vmin = vmax - 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
        } else {
            k += 1;
            if umin >= lambda {
                kminus = k;
                vmin += (umin - lambda) / (k - k0 + 1) as f64;
                umin = lambda;
            }
            if umax <= -lambda {
                kplus = k;
                vmax += (umax + lambda) / (k - k0 + 1) as f64;
                umax = -lambda;
            }
        }
    }
}

/// Optimality residual of a candidate `x` for `prox_{τ·tv}(z)`.
///
/// A dual certificate `p̂` is computed for `z` with [`fpg_prox`] and the
/// returned value is `P(x) − D(p̂)`, the primal-dual gap of the pair, evaluated
/// as `½‖x − x̂‖² + τ Σ_i (‖(Dx)_i‖ − ⟨(Dx)_i, p̂_i⟩)` with `x̂ = z − τDᵀp̂`.
/// It is zero iff `x` is optimal (up to the certificate's own gap) and bounds
/// `½‖x − prox(z)‖²` from above.
pub fn prox_residual(z: &NdSignal, x: &NdSignal, tau: f64, mode: TvMode) -> Result<f64> {
    let cfg = OracleConfig::new(mode).with_tol(1e-13).with_max_iter(20_000);
    prox_residual_with(z, x, tau, &cfg)
}

pub fn prox_residual_with(z: &NdSignal, x: &NdSignal, tau: f64, cfg: &OracleConfig) -> Result<f64> {
    z.check_same_shape(x)?;
    let cert = fpg_prox(z, tau, cfg)?;
    let n = z.len();
    let d = z.ndim();
    let diff: Vec<f64> = x.as_slice().iter().zip(cert.x.as_slice()).map(|(a, b)| a - b).collect();
    let gx = gradient(x.as_slice(), x.shape(), cfg.boundary);
    let dist = norm_slice(&diff);
    Ok(0.5 * dist * dist + tau * pairing_gap(&gx, &cert.dual, n, d, cfg.mode))
}

/// `½‖x − z‖² + τ·tv(x)` under the given boundary convention.
pub fn prox_objective(z: &NdSignal, x: &NdSignal, tau: f64, mode: TvMode, boundary: Boundary) -> f64 {
    let fit: f64 = x
        .as_slice()
        .iter()
        .zip(z.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        * 0.5;
    fit + tau * crate::tv::tv_with_boundary(x, mode, boundary)
}
