//! Measurement operators (identity and parallel-beam CT), the smooth
//! data-fidelity terms built on them, and helpers around them: power
//! iteration for `‖A‖²`, conjugate gradients and seeded Gaussian noise.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::signal::{dot_slices, norm_slice, NdSignal};
use crate::solvers::Problem;

/// A real matrix given only through its action and the action of its
/// transpose, both on flat buffers.
pub trait LinearOperator: Sync {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, r: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityOp {
    pub len: usize,
}

impl LinearOperator for IdentityOp {
    fn input_len(&self) -> usize {
        self.len
    }
    fn output_len(&self) -> usize {
        self.len
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
    fn adjoint(&self, r: &[f64]) -> Vec<f64> {
        r.to_vec()
    }
}

#[derive(Debug, Clone)]
pub struct DiagonalOp {
    pub diag: Vec<f64>,
}

impl LinearOperator for DiagonalOp {
    fn input_len(&self) -> usize {
        self.diag.len()
    }
    fn output_len(&self) -> usize {
        self.diag.len()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.diag).map(|(a, b)| a * b).collect()
    }
    fn adjoint(&self, r: &[f64]) -> Vec<f64> {
        self.apply(r)
    }
}

/// Parallel-beam geometry for a square image with unit-spaced detectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CtGeometry {
    pub n_pixels: usize,
    pub angles: Vec<f64>,
    pub n_detectors: usize,
    pub pixel_size: f64,
}

impl CtGeometry {
    /// `n_angles` views equispaced over `[0, π)` and enough detector bins to
    /// cover the image diagonal. The bin count is `⌈side·√2⌉`, bumped by one
    /// when needed so that it has the parity of `side`; bin centres then line
    /// up with pixel centres at 0°.
    pub fn new(n_pixels: usize, n_angles: usize) -> Result<Self> {
        if n_pixels < 2 || n_angles == 0 {
            return Err(Error::Geometry(format!(
                "need at least a 2x2 image and one view, got side {n_pixels} with {n_angles} views"
            )));
        }
        let mut n_detectors = (n_pixels as f64 * std::f64::consts::SQRT_2).ceil() as usize;
        if n_detectors % 2 != n_pixels % 2 {
            n_detectors += 1;
        }
        let angles = (0..n_angles).map(|k| PI * k as f64 / n_angles as f64).collect();
        Ok(Self {
            n_pixels,
            angles,
            n_detectors,
            pixel_size: 1.0,
        })
    }

    pub fn with_angles(n_pixels: usize, angles: Vec<f64>) -> Result<Self> {
        let mut geo = Self::new(n_pixels, angles.len().max(1))?;
        geo.angles = angles;
        geo.validate()?;
        Ok(geo)
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.is_empty() {
            return Err(Error::Geometry("no projection angles".into()));
        }
        if self.angles.windows(2).any(|w| w[1] <= w[0]) || self.angles[0] < 0.0 || *self.angles.last().unwrap() >= PI {
            return Err(Error::Geometry("angles must be strictly increasing within [0, π)".into()));
        }
        if self.n_detectors == 0 || self.pixel_size.is_nan() || self.pixel_size <= 0.0 {
            return Err(Error::Geometry("need a positive detector count and pixel size".into()));
        }
        Ok(())
    }
}

/// Sinogram laid out as `n_angles` rows of `n_detectors` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_angles: usize,
    pub n_detectors: usize,
    pub data: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(geo: &CtGeometry) -> Self {
        Self {
            n_angles: geo.n_angles(),
            n_detectors: geo.n_detectors,
            data: vec![0.0; geo.n_angles() * geo.n_detectors],
        }
    }

    pub fn view(&self, angle: usize) -> &[f64] {
        &self.data[angle * self.n_detectors..(angle + 1) * self.n_detectors]
    }

    fn check(&self, geo: &CtGeometry) -> Result<()> {
        if self.n_angles != geo.n_angles() || self.n_detectors != geo.n_detectors {
            return Err(Error::Geometry(format!(
                "sinogram is {}x{}, geometry expects {}x{}",
                self.n_angles,
                self.n_detectors,
                geo.n_angles(),
                geo.n_detectors
            )));
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!("angles={},detectors={}\n", self.n_angles, self.n_detectors);
        for row in self.data.chunks(self.n_detectors) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty sinogram".into()))?;
        let mut n_angles = None;
        let mut n_detectors = None;
        for field in header.split(',') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad sinogram header {header:?}")))?;
            let value: usize = value
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("bad count {value:?}: {e}")))?;
            match key.trim() {
                "angles" => n_angles = Some(value),
                "detectors" => n_detectors = Some(value),
                other => return Err(Error::Parse(format!("unknown header key {other:?}"))),
            }
        }
        let (n_angles, n_detectors) = n_angles
            .zip(n_detectors)
            .ok_or_else(|| Error::Parse("header needs angles= and detectors=".into()))?;
        let mut data = Vec::with_capacity(n_angles * n_detectors);
        for line in lines {
            for field in line.split(',') {
                data.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad value {field:?}: {e}")))?,
                );
            }
        }
        if data.len() != n_angles * n_detectors {
            return Err(Error::Parse(format!(
                "expected {} values, found {}",
                n_angles * n_detectors,
                data.len()
            )));
        }
        Ok(Self {
            n_angles,
            n_detectors,
            data,
        })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

/// Pixel-driven parallel-beam projector: every pixel centre is projected onto
/// the detector line of each view and its value is split linearly between the
/// two nearest bins. The adjoint uses the same weights.
#[derive(Debug, Clone)]
pub struct RadonOp {
    geo: CtGeometry,
    // per view: (cos θ, sin θ)
    trig: Vec<(f64, f64)>,
}

impl RadonOp {
    pub fn new(geo: CtGeometry) -> Result<Self> {
        geo.validate()?;
        let trig = geo.angles.iter().map(|a| (a.cos(), a.sin())).collect();
        Ok(Self { geo, trig })
    }

    pub fn geometry(&self) -> &CtGeometry {
        &self.geo
    }

    /// Calls `f(pixel, bin, weight)` for every non-zero weight of one view, in
    /// a fixed order.
    fn for_each_weight(&self, view: usize, mut f: impl FnMut(usize, usize, f64)) {
        let side = self.geo.n_pixels;
        let centre = (side as f64 - 1.0) / 2.0;
        let offset = (self.geo.n_detectors as f64 - 1.0) / 2.0;
        let (c, s) = self.trig[view];
        let w = self.geo.pixel_size;
        for row in 0..side {
            let y = centre - row as f64;
            for col in 0..side {
                let x = col as f64 - centre;
                let pos = x * c + y * s + offset;
                let base = pos.floor();
                let frac = pos - base;
                let k = base as isize;
                let pixel = row * side + col;
                if k >= 0 && (k as usize) < self.geo.n_detectors {
                    f(pixel, k as usize, w * (1.0 - frac));
                }
                if frac > 0.0 && k + 1 >= 0 && ((k + 1) as usize) < self.geo.n_detectors {
                    f(pixel, (k + 1) as usize, w * frac);
                }
            }
        }
    }
}

impl LinearOperator for RadonOp {
    fn input_len(&self) -> usize {
        self.geo.n_pixels * self.geo.n_pixels
    }

    fn output_len(&self) -> usize {
        self.geo.n_angles() * self.geo.n_detectors
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let nd = self.geo.n_detectors;
        let mut out = vec![0.0; self.output_len()];
        for view in 0..self.geo.n_angles() {
            let row = &mut out[view * nd..(view + 1) * nd];
            self.for_each_weight(view, |p, k, w| row[k] += w * x[p]);
        }
        out
    }

    fn adjoint(&self, r: &[f64]) -> Vec<f64> {
        let nd = self.geo.n_detectors;
        let mut out = vec![0.0; self.input_len()];
        for view in 0..self.geo.n_angles() {
            let row = &r[view * nd..(view + 1) * nd];
            self.for_each_weight(view, |p, k, w| out[p] += w * row[k]);
        }
        out
    }
}

fn check_image(img: &NdSignal, geo: &CtGeometry) -> Result<()> {
    if img.shape() != [geo.n_pixels, geo.n_pixels] {
        return Err(Error::Geometry(format!(
            "image shape {:?} does not match a {}x{} geometry",
            img.shape(),
            geo.n_pixels,
            geo.n_pixels
        )));
    }
    Ok(())
}

pub fn radon_forward(img: &NdSignal, geo: &CtGeometry) -> Result<Sinogram> {
    check_image(img, geo)?;
    let op = RadonOp::new(geo.clone())?;
    Ok(Sinogram {
        n_angles: geo.n_angles(),
        n_detectors: geo.n_detectors,
        data: op.apply(img.as_slice()),
    })
}

pub fn radon_adjoint(sino: &Sinogram, geo: &CtGeometry) -> Result<NdSignal> {
    sino.check(geo)?;
    let op = RadonOp::new(geo.clone())?;
    NdSignal::new(&[geo.n_pixels, geo.n_pixels], op.adjoint(&sino.data))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    /// Estimate of the largest eigenvalue of `AᵀA`.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration on `AᵀA` from a seeded Gaussian start. Stops when the
/// eigen-residual `‖AᵀAv − ρv‖` drops below `tol·ρ`.
pub fn lipschitz_power_iter(op: &dyn LinearOperator, iters: usize, tol: f64, seed: u64) -> LipschitzEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..op.input_len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = norm_slice(&v);
    v.iter_mut().for_each(|e| *e /= norm);

    let mut rho = 0.0;
    for k in 1..=iters {
        let w = op.adjoint(&op.apply(&v));
        rho = dot_slices(&v, &w);
        let resid = w.iter().zip(&v).map(|(a, b)| (a - rho * b).powi(2)).sum::<f64>().sqrt();
        let wn = norm_slice(&w);
        if wn == 0.0 {
            return LipschitzEstimate {
                value: 0.0,
                iterations: k,
                converged: true,
            };
        }
        if resid <= tol * rho.abs() {
            return LipschitzEstimate {
                value: rho,
                iterations: k,
                converged: true,
            };
        }
        v = w.into_iter().map(|e| e / wn).collect();
    }
    LipschitzEstimate {
        value: rho,
        iterations: iters,
        converged: false,
    }
}

pub fn add_awgn(x: &NdSignal, sigma: f64, seed: u64) -> Result<NdSignal> {
    Ok(x.with_data(awgn_slice(x.as_slice(), sigma, seed)?))
}

pub fn add_awgn_sinogram(y: &Sinogram, sigma: f64, seed: u64) -> Result<Sinogram> {
    Ok(Sinogram {
        data: awgn_slice(&y.data, sigma, seed)?,
        ..y.clone()
    })
}

fn awgn_slice(x: &[f64], sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise level must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(x
        .iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + sigma * e
        })
        .collect())
}

/// `argmin_x ½‖x − v‖² + γ·½‖x − y‖² = (v + γy)/(1 + γ)`.
pub fn prox_g_denoise(v: &NdSignal, gamma: f64, y: &NdSignal) -> Result<NdSignal> {
    v.check_same_shape(y)?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let s = 1.0 / (1.0 + gamma);
    Ok(v.with_data(
        v.as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(a, b)| (a + gamma * b) * s)
            .collect(),
    ))
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: NdSignal,
    /// `‖(I + γAᵀA)x − rhs‖ / ‖rhs‖` at exit.
    pub rel_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves `(I + γAᵀA)x = v + γAᵀy` by conjugate gradients started at `v`.
pub fn prox_g_ct(
    v: &NdSignal,
    gamma: f64,
    y: &[f64],
    op: &dyn LinearOperator,
    cg_tol: f64,
    cg_max: usize,
) -> Result<CgOutcome> {
    if v.len() != op.input_len() || y.len() != op.output_len() {
        return Err(Error::Geometry(format!(
            "operator maps {} -> {}, got image of {} and data of {}",
            op.input_len(),
            op.output_len(),
            v.len(),
            y.len()
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let normal = |x: &[f64]| -> Vec<f64> {
        let ata = op.adjoint(&op.apply(x));
        x.iter().zip(ata).map(|(a, b)| a + gamma * b).collect()
    };
    let aty = op.adjoint(y);
    let rhs: Vec<f64> = v.as_slice().iter().zip(&aty).map(|(a, b)| a + gamma * b).collect();
    let (x, rel_residual, iterations, converged) = conjugate_gradient(normal, &rhs, v.as_slice().to_vec(), cg_tol, cg_max);
    Ok(CgOutcome {
        x: NdSignal::new(v.shape(), x)?,
        rel_residual,
        iterations,
        converged,
    })
}

/// Plain CG for a symmetric positive definite operator.
fn conjugate_gradient(
    op: impl Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    mut x: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, usize, bool) {
    let bnorm = norm_slice(rhs);
    if bnorm == 0.0 {
        return (vec![0.0; rhs.len()], 0.0, 0, true);
    }
    let ax = op(&x);
    let mut r: Vec<f64> = rhs.iter().zip(ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot_slices(&r, &r);
    let mut iterations = 0;
    while rr.sqrt() > tol * bnorm && iterations < max_iter {
        iterations += 1;
        let ap = op(&p);
        let alpha = rr / dot_slices(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot_slices(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    // report the true residual rather than the recursively updated one
    let ax = op(&x);
    let res = rhs.iter().zip(ax).map(|(b, a)| (b - a).powi(2)).sum::<f64>().sqrt() / bnorm;
    (x, res, iterations, res <= tol)
}

/// `g(x) = ½‖x − y‖²`.
#[derive(Debug, Clone)]
pub struct DenoiseProblem {
    pub y: NdSignal,
}

impl Problem for DenoiseProblem {
    fn shape(&self) -> &[usize] {
        self.y.shape()
    }

    fn value(&self, x: &NdSignal) -> f64 {
        0.5 * x.as_slice().iter().zip(self.y.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    }

    fn gradient(&self, x: &NdSignal) -> NdSignal {
        x.sub(&self.y).expect("iterate has the problem's shape")
    }

    fn prox(&self, v: &NdSignal, gamma: f64) -> Result<NdSignal> {
        prox_g_denoise(v, gamma, &self.y)
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `g(x) = ½‖Ax − y‖²` for a matrix-free `A`.
pub struct LeastSquaresProblem<'a> {
    pub op: &'a dyn LinearOperator,
    pub y: Vec<f64>,
    pub shape: Vec<usize>,
    pub lipschitz: Option<f64>,
    pub cg_tol: f64,
    pub cg_max: usize,
}

impl<'a> LeastSquaresProblem<'a> {
    pub fn new(op: &'a dyn LinearOperator, y: Vec<f64>, shape: &[usize]) -> Result<Self> {
        if y.len() != op.output_len() || shape.iter().product::<usize>() != op.input_len() {
            return Err(Error::Geometry("data or image shape does not fit the operator".into()));
        }
        Ok(Self {
            op,
            y,
            shape: shape.to_vec(),
            lipschitz: None,
            cg_tol: 1e-10,
            cg_max: 200,
        })
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    fn residual(&self, x: &NdSignal) -> Vec<f64> {
        self.op.apply(x.as_slice()).into_iter().zip(&self.y).map(|(a, b)| a - b).collect()
    }
}

impl Problem for LeastSquaresProblem<'_> {
    fn shape(&self) -> &[usize] {
        &self.shape
    }

    fn value(&self, x: &NdSignal) -> f64 {
        0.5 * self.residual(x).iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &NdSignal) -> NdSignal {
        x.with_data(self.op.adjoint(&self.residual(x)))
    }

    fn prox(&self, v: &NdSignal, gamma: f64) -> Result<NdSignal> {
        let out = prox_g_ct(v, gamma, &self.y, self.op, self.cg_tol, self.cg_max)?;
        if !out.converged {
            log::debug!(
                "CG stopped after {} iterations at relative residual {:e}",
                out.iterations,
                out.rel_residual
            );
        }
        Ok(out.x)
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }
}
