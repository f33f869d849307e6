//! Parameter sweeps over `(λ, γ)` on seeded phantoms, with tables, objective
//! traces and images written to disk.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{fpg_prox, OracleConfig};
use crate::experiments::config::{ExperimentConfig, ProxKind, SolverKind, Task};
use crate::experiments::metrics::{cost_accuracy, psnr};
use crate::experiments::phantom::gen_foam_phantom;
use crate::forward::{
    add_awgn, add_awgn_sinogram, lipschitz_power_iter, radon_forward, CtGeometry, DenoiseProblem,
    LeastSquaresProblem, RadonOp,
};
use crate::signal::NdSignal;
use crate::solvers::{admm, apgm, objective, Problem, ProxChoice, RunReport, SolverConfig, StopReason};
use crate::tv::TvMode;

pub const TABLE_HEADER: &str = "lambda,gamma,cost_acc,psnr_tv,psnr_gt,iters,seconds";
pub const BUDGET_TABLE_HEADER: &str = "lambda,gamma,cost_acc_fpg50,psnr_tv_fpg50";

/// One `(λ, γ)` cell averaged over phantoms.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub lambda: f64,
    pub gamma: f64,
    pub cost_accuracy: f64,
    pub psnr_vs_tv: f64,
    pub psnr_vs_gt: f64,
    pub iterations: f64,
    pub wall_time: f64,
    pub failed: bool,
    /// Every run in the cell ended through the relative-change rule.
    pub all_converged: bool,
}

/// The same cell measured against the fixed-budget exact-prox reference.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRow {
    pub lambda: f64,
    pub gamma: f64,
    pub cost_accuracy: f64,
    pub psnr_vs_tv: f64,
}

#[derive(Debug, Clone)]
pub struct ModeSweep {
    pub mode: TvMode,
    pub rows: Vec<MetricsRow>,
    pub budget_rows: Vec<BudgetRow>,
    /// CT only: the power-iteration estimate of `‖A‖²`.
    pub lipschitz: Option<f64>,
    /// Largest ADMM dual norm divided by the data norm, over all runs.
    pub max_dual_ratio: Option<f64>,
    pub descent_violations: usize,
}

impl ModeSweep {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.failed)
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.6e}")
    }
}

pub fn table_csv(rows: &[MetricsRow], timing: bool) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    for r in rows {
        let seconds = if timing && !r.failed { fmt_value(r.wall_time) } else { "nan".into() };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.lambda,
            r.gamma,
            fmt_value(r.cost_accuracy),
            fmt_value(r.psnr_vs_tv),
            fmt_value(r.psnr_vs_gt),
            fmt_value(r.iterations),
            seconds
        );
    }
    out
}

pub fn budget_table_csv(rows: &[BudgetRow]) -> String {
    let mut out = format!("{BUDGET_TABLE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.lambda,
            r.gamma,
            fmt_value(r.cost_accuracy),
            fmt_value(r.psnr_vs_tv)
        );
    }
    out
}

/// Plain 8-bit PGM (`P2`), min-max scaled; a constant image maps to zero.
pub fn write_pgm(path: impl AsRef<Path>, img: &NdSignal) -> Result<()> {
    if img.ndim() != 2 {
        return Err(Error::InvalidShape(img.shape().to_vec()));
    }
    let (rows, cols) = (img.shape()[0], img.shape()[1]);
    let (lo, hi) = (img.min(), img.max());
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let mut text = format!("P2\n{cols} {rows}\n255\n");
    for row in img.as_slice().chunks(cols) {
        let line: Vec<String> = row
            .iter()
            .map(|v| (((v - lo) * scale).round() as u8).to_string())
            .collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_image_pair(dir: &Path, name: &str, img: &NdSignal) -> Result<()> {
    write_pgm(dir.join(format!("{name}.pgm")), img)?;
    img.save_csv(dir.join(format!("{name}.csv")))
}

/// `(f̂ − f*)/f*`, or the plain difference when the optimum is zero (as in
/// unregularised problems with exactly fitted data).
fn relative_gap(f_hat: f64, f_star: f64) -> f64 {
    if f_star > 0.0 {
        cost_accuracy(f_hat, f_star).unwrap_or(f64::NAN)
    } else {
        f_hat - f_star
    }
}

/// Per-phantom measurement data.
struct Instance {
    truth: NdSignal,
    data: Data,
}

enum Data {
    Image(NdSignal),
    Sinogram(Vec<f64>),
}

struct Setup {
    instances: Vec<Instance>,
    radon: Option<RadonOp>,
    lipschitz: Option<f64>,
}

impl Setup {
    fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let phantoms: Vec<NdSignal> = (0..cfg.n_phantoms)
            .map(|k| gen_foam_phantom(cfg.image_size, cfg.seed.wrapping_add(k as u64), cfg.n_disks))
            .collect::<Result<_>>()?;
        let noise_seed = |k: usize| cfg.seed.wrapping_add(1_000_003).wrapping_add(k as u64);
        match cfg.task {
            Task::Denoise => {
                let instances = phantoms
                    .into_iter()
                    .enumerate()
                    .map(|(k, truth)| {
                        let y = add_awgn(&truth, cfg.noise_sigma, noise_seed(k))?;
                        Ok(Instance {
                            truth,
                            data: Data::Image(y),
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(Self {
                    instances,
                    radon: None,
                    lipschitz: Some(1.0),
                })
            }
            Task::Ct => {
                let geo = CtGeometry::new(cfg.image_size, cfg.n_angles)?;
                let op = RadonOp::new(geo.clone())?;
                let l = lipschitz_power_iter(&op, 1000, 1e-10, cfg.seed).value;
                let instances = phantoms
                    .into_iter()
                    .enumerate()
                    .map(|(k, truth)| {
                        let clean = radon_forward(&truth, &geo)?;
                        let y = add_awgn_sinogram(&clean, cfg.noise_sigma, noise_seed(k))?;
                        Ok(Instance {
                            truth,
                            data: Data::Sinogram(y.data),
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(Self {
                    instances,
                    radon: Some(op),
                    lipschitz: Some(l),
                })
            }
        }
    }

    fn problem(&self, k: usize) -> Result<Box<dyn Problem + '_>> {
        match (&self.instances[k].data, &self.radon) {
            (Data::Image(y), _) => Ok(Box::new(DenoiseProblem { y: y.clone() })),
            (Data::Sinogram(y), Some(op)) => {
                let shape = self.instances[k].truth.shape();
                let mut p = LeastSquaresProblem::new(op, y.clone(), shape)?;
                p.lipschitz = self.lipschitz;
                Ok(Box::new(p))
            }
            (Data::Sinogram(_), None) => Err(Error::Geometry("sinogram data without a projector".into())),
        }
    }

    fn x0(&self, k: usize) -> NdSignal {
        match &self.instances[k].data {
            Data::Image(y) => y.clone(),
            Data::Sinogram(_) => self.instances[k].truth.zeros_like(),
        }
    }

    fn data_norm(&self, k: usize) -> f64 {
        match &self.instances[k].data {
            Data::Image(y) => crate::signal::l2_norm(y),
            Data::Sinogram(y) => y.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

struct Baseline {
    x: NdSignal,
    f: f64,
}

fn exact_choice(mode: TvMode, tol: f64, max_iter: usize, warm_start: bool) -> ProxChoice {
    ProxChoice::Exact {
        oracle: OracleConfig::new(mode).with_tol(tol).with_max_iter(max_iter),
        warm_start,
    }
}

fn tight_baseline(cfg: &ExperimentConfig, setup: &Setup, k: usize, lambda: f64, mode: TvMode) -> Result<Baseline> {
    let problem = setup.problem(k)?;
    let b = &cfg.baseline;
    let x = match (&setup.instances[k].data, cfg.task) {
        // the minimiser of ½‖x − y‖² + λ·tv(x) is the prox of y itself
        (Data::Image(y), Task::Denoise) => {
            if lambda == 0.0 {
                y.clone()
            } else {
                let oracle = OracleConfig::new(mode).with_tol(b.fpg_tol).with_max_iter(b.fpg_max_iter);
                let out = fpg_prox(y, lambda, &oracle)?;
                if !out.converged {
                    log::warn!("baseline FPG stopped at gap {:e}", out.gap);
                }
                out.x
            }
        }
        _ => {
            let l = setup.lipschitz.unwrap_or(1.0);
            let scfg = SolverConfig::new(1.0 / l, lambda, mode)
                .with_prox(exact_choice(mode, b.fpg_tol, b.fpg_max_iter, true))
                .with_stop_tol(b.stop_tol)
                .with_max_iter(b.max_iter);
            let report = apgm(problem.as_ref(), &scfg, &setup.x0(k))?;
            if report.stop_reason != StopReason::Tolerance {
                log::warn!("baseline reconstruction hit the iteration cap");
            }
            report.final_x
        }
    };
    let f = objective(problem.as_ref(), &SolverConfig::new(1.0, lambda, mode), &x);
    Ok(Baseline { x, f })
}

fn run_solver(kind: SolverKind, problem: &dyn Problem, cfg: &SolverConfig, x0: &NdSignal) -> Result<RunReport> {
    match kind {
        SolverKind::Apgm => apgm(problem, cfg, x0),
        SolverKind::Admm => admm(problem, cfg, x0),
    }
}

struct Cell {
    report: RunReport,
    f_hat: f64,
    /// Objective and iterate of the fixed-budget exact-prox run.
    budget: Option<(f64, NdSignal)>,
    dual_ratio: Option<f64>,
}

fn run_cell(
    cfg: &ExperimentConfig,
    setup: &Setup,
    k: usize,
    lambda: f64,
    gamma: f64,
    mode: TvMode,
) -> Result<Cell> {
    let problem = setup.problem(k)?;
    let x0 = setup.x0(k);
    let abs_gamma = match (cfg.task, cfg.solver) {
        (Task::Ct, SolverKind::Apgm) => gamma / setup.lipschitz.unwrap_or(1.0),
        _ => gamma,
    };
    let prox = match cfg.prox {
        ProxKind::Approx => ProxChoice::Approximate,
        ProxKind::Exact => exact_choice(mode, cfg.baseline.fpg_tol, cfg.baseline.fpg_max_iter, true),
    };
    let scfg = SolverConfig::new(abs_gamma, lambda, mode)
        .with_prox(prox)
        .with_stop_tol(cfg.stop_tol)
        .with_max_iter(cfg.max_iter);
    let report = run_solver(cfg.solver, problem.as_ref(), &scfg, &x0)?;
    let f_hat = objective(problem.as_ref(), &scfg, &report.final_x);
    let dual_ratio = report.max_dual_norm.map(|s| s / setup.data_norm(k).max(f64::MIN_POSITIVE));

    let budget = if cfg.baseline.fpg_budget > 0 {
        // a fixed number of FPG iterations per prox call, cold started
        let bcfg = scfg.with_prox(exact_choice(mode, f64::MIN_POSITIVE, cfg.baseline.fpg_budget, false));
        let b = run_solver(cfg.solver, problem.as_ref(), &bcfg, &x0)?;
        Some((objective(problem.as_ref(), &bcfg, &b.final_x), b.final_x))
    } else {
        None
    };
    Ok(Cell {
        report,
        f_hat,
        budget,
        dual_ratio,
    })
}

fn fmt_dir(prefix: &str, v: f64) -> String {
    format!("{prefix}_{v:e}")
}

fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut out = String::from("iteration,objective\n");
    for (i, f) in trace.iter().enumerate() {
        let _ = writeln!(out, "{},{:e}", i + 1, f);
    }
    fs::write(path, out)?;
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Runs one TV mode of the sweep and writes its outputs under
/// `output_dir/<mode>/`.
pub fn run_mode(cfg: &ExperimentConfig, mode: TvMode) -> Result<ModeSweep> {
    cfg.validate()?;
    let setup = Setup::build(cfg)?;
    let np = cfg.n_phantoms;
    let dir = cfg.output_dir.join(mode.tag());
    fs::create_dir_all(&dir)?;

    // tight references, one per (λ, phantom)
    let jobs: Vec<(usize, usize)> = (0..cfg.lambda_grid.len()).flat_map(|li| (0..np).map(move |k| (li, k))).collect();
    let baselines: Vec<Result<Baseline>> = jobs
        .par_iter()
        .map(|&(li, k)| tight_baseline(cfg, &setup, k, cfg.lambda_grid[li], mode))
        .collect();

    let cells_idx: Vec<(usize, usize, usize)> = (0..cfg.lambda_grid.len())
        .flat_map(|li| (0..cfg.gamma_grid.len()).flat_map(move |gi| (0..np).map(move |k| (li, gi, k))))
        .collect();
    let cells: Vec<Result<Cell>> = cells_idx
        .par_iter()
        .map(|&(li, gi, k)| run_cell(cfg, &setup, k, cfg.lambda_grid[li], cfg.gamma_grid[gi], mode))
        .collect();

    let mut rows = Vec::new();
    let mut budget_rows = Vec::new();
    let mut max_dual_ratio: Option<f64> = None;
    let mut descent_violations = 0;

    if cfg.write_images {
        for (k, inst) in setup.instances.iter().enumerate() {
            let pdir = dir.join(format!("phantom_{k}"));
            fs::create_dir_all(&pdir)?;
            write_image_pair(&pdir, "truth", &inst.truth)?;
            if let Data::Image(y) = &inst.data {
                write_image_pair(&pdir, "noisy", y)?;
            }
        }
    }

    for (li, &lambda) in cfg.lambda_grid.iter().enumerate() {
        let base: Vec<&Result<Baseline>> = (0..np).map(|k| &baselines[li * np + k]).collect();
        for (k, b) in base.iter().enumerate() {
            match b {
                Ok(b) if cfg.write_images => {
                    let bdir = dir.join(fmt_dir("lambda", lambda)).join(format!("phantom_{k}"));
                    fs::create_dir_all(&bdir)?;
                    write_image_pair(&bdir, "baseline", &b.x)?;
                }
                Ok(_) => {}
                Err(e) => log::error!("{mode} λ={lambda} phantom {k}: baseline failed: {e}"),
            }
        }
        for (gi, &gamma) in cfg.gamma_grid.iter().enumerate() {
            let mut failed = false;
            let mut all_converged = true;
            let (mut acc, mut ptv, mut pgt, mut its, mut secs) = (vec![], vec![], vec![], vec![], vec![]);
            let (mut bacc, mut bptv) = (vec![], vec![]);
            for k in 0..np {
                let cell = &cells[(li * cfg.gamma_grid.len() + gi) * np + k];
                let (cell, baseline) = match (cell, base[k]) {
                    (Ok(c), Ok(b)) => (c, b),
                    (Err(e), _) => {
                        log::error!("{mode} λ={lambda} γ={gamma} phantom {k}: solver failed: {e}");
                        failed = true;
                        continue;
                    }
                    (_, Err(_)) => {
                        failed = true;
                        continue;
                    }
                };
                let x = &cell.report.final_x;
                acc.push(relative_gap(cell.f_hat, baseline.f));
                ptv.push(psnr(&baseline.x, x, 1.0)?);
                pgt.push(psnr(&setup.instances[k].truth, x, 1.0)?);
                its.push(cell.report.iterations as f64);
                secs.push(cell.report.wall_time);
                all_converged &= cell.report.stop_reason == StopReason::Tolerance;
                descent_violations += cell.report.descent_violations;
                if let Some(r) = cell.dual_ratio {
                    max_dual_ratio = Some(max_dual_ratio.map_or(r, |m| m.max(r)));
                }
                if let Some((fb, xb)) = &cell.budget {
                    bacc.push(relative_gap(cell.f_hat, *fb));
                    bptv.push(psnr(xb, x, 1.0)?);
                }
                if cfg.write_images {
                    let rdir = dir
                        .join(fmt_dir("lambda", lambda))
                        .join(fmt_dir("gamma", gamma))
                        .join(format!("phantom_{k}"));
                    fs::create_dir_all(&rdir)?;
                    write_trace(&rdir.join("trace.csv"), &cell.report.objective_trace)?;
                    write_image_pair(&rdir, "recon", x)?;
                    write_image_pair(&rdir, "diff_tv", &x.sub(&baseline.x)?)?;
                    write_image_pair(&rdir, "diff_gt", &x.sub(&setup.instances[k].truth)?)?;
                }
            }
            if !all_converged {
                log::warn!("{mode} λ={lambda} γ={gamma}: some runs hit the iteration cap");
            }
            let pick = |v: &Vec<f64>| if failed { f64::NAN } else { mean(v.iter().copied()) };
            rows.push(MetricsRow {
                lambda,
                gamma,
                cost_accuracy: pick(&acc),
                psnr_vs_tv: pick(&ptv),
                psnr_vs_gt: pick(&pgt),
                iterations: pick(&its),
                wall_time: pick(&secs),
                failed,
                all_converged: all_converged && !failed,
            });
            if cfg.baseline.fpg_budget > 0 {
                budget_rows.push(BudgetRow {
                    lambda,
                    gamma,
                    cost_accuracy: pick(&bacc),
                    psnr_vs_tv: pick(&bptv),
                });
            }
        }
    }

    let mut f = fs::File::create(dir.join("table.csv"))?;
    f.write_all(table_csv(&rows, cfg.timing).as_bytes())?;
    if !budget_rows.is_empty() {
        fs::write(dir.join("table_fpg50.csv"), budget_table_csv(&budget_rows))?;
    }
    if descent_violations > 0 {
        log::warn!("{mode}: {descent_violations} prox steps increased TV");
    }
    Ok(ModeSweep {
        mode,
        rows,
        budget_rows,
        lipschitz: if cfg.task == Task::Ct { setup.lipschitz } else { None },
        max_dual_ratio,
        descent_violations,
    })
}

/// Runs every configured TV mode.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ModeSweep>> {
    cfg.modes.iter().map(|&mode| run_mode(cfg, mode)).collect()
}

/// Path of the table written for `mode`.
pub fn table_path(cfg: &ExperimentConfig, mode: TvMode) -> PathBuf {
    cfg.output_dir.join(mode.tag()).join("table.csv")
}
