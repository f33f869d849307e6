//! Anisotropic and isotropic total variation, the lifted functional ĥ on frame
//! coefficients, and a canonical subgradient selection for ĥ.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::haar::{stencil, CoeffStack};
use crate::signal::NdSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TvMode {
    Anisotropic,
    Isotropic,
}

impl TvMode {
    pub const ALL: [TvMode; 2] = [TvMode::Anisotropic, TvMode::Isotropic];

    pub fn tag(self) -> &'static str {
        match self {
            TvMode::Anisotropic => "aniso",
            TvMode::Isotropic => "iso",
        }
    }

    /// Norm of one per-location group of `d` differences.
    pub fn group_norm(self, group: &[f64]) -> f64 {
        match self {
            TvMode::Anisotropic => group.iter().map(|v| v.abs()).sum(),
            TvMode::Isotropic => group.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

impl fmt::Display for TvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for TvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aniso" | "anisotropic" => Ok(TvMode::Anisotropic),
            "iso" | "isotropic" => Ok(TvMode::Isotropic),
            other => Err(Error::Parse(format!("unknown TV mode {other:?}"))),
        }
    }
}

/// Boundary convention for the discrete gradient. Everything in this crate
/// uses `Circular`; `Free` (no difference across the last sample) exists to
/// cross-check against the classical 1D solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    #[default]
    Circular,
    Free,
}

/// Discrete gradient `D x`: `d` blocks of `n` forward differences
/// `x_i − x_{i+e_j}`, laid out like the difference half of a [`CoeffStack`].
pub fn gradient(x: &[f64], shape: &[usize], boundary: Boundary) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * shape.len());
    for axis in 0..shape.len() {
        let mut block = stencil(x, shape, axis, -1.0, true);
        if boundary == Boundary::Free {
            for_last_along(shape, axis, |i| block[i] = 0.0);
        }
        out.extend(block);
    }
    out
}

/// Adjoint of [`gradient`].
pub fn gradient_adjoint(g: &[f64], shape: &[usize], boundary: Boundary) -> Vec<f64> {
    let n: usize = shape.iter().product();
    let mut out = vec![0.0; n];
    let mut masked;
    for axis in 0..shape.len() {
        let mut block = &g[axis * n..(axis + 1) * n];
        if boundary == Boundary::Free {
            masked = block.to_vec();
            for_last_along(shape, axis, |i| masked[i] = 0.0);
            block = &masked;
        }
        let part = stencil(block, shape, axis, -1.0, false);
        for (o, p) in out.iter_mut().zip(part) {
            *o += p;
        }
    }
    out
}

fn for_last_along(shape: &[usize], axis: usize, mut f: impl FnMut(usize)) {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    for o in 0..outer {
        let row = (o * len + len - 1) * inner;
        for i in 0..inner {
            f(row + i);
        }
    }
}

/// `Σ_i ‖g_i‖` where `g_i` collects entry `i` of each of the `d` blocks.
pub(crate) fn group_sum(blocks: &[f64], n: usize, d: usize, mode: TvMode) -> f64 {
    match mode {
        TvMode::Anisotropic => blocks.iter().map(|v| v.abs()).sum(),
        TvMode::Isotropic => (0..n)
            .map(|i| (0..d).map(|j| blocks[j * n + i].powi(2)).sum::<f64>().sqrt())
            .sum(),
    }
}

pub fn tv(x: &NdSignal, mode: TvMode) -> f64 {
    tv_with_boundary(x, mode, Boundary::Circular)
}

pub fn tv_with_boundary(x: &NdSignal, mode: TvMode, boundary: Boundary) -> f64 {
    let g = gradient(x.as_slice(), x.shape(), boundary);
    group_sum(&g, x.len(), x.ndim(), mode)
}

/// `ĥ(u) = 2√d ‖u^dif‖_{p,1}`; satisfies `ĥ(Wz) = tv(z)`.
pub fn h_hat(u: &CoeffStack, mode: TvMode) -> f64 {
    let d = u.ndim();
    2.0 * (d as f64).sqrt() * group_sum(u.dif_half(), u.block_len(), d, mode)
}

/// A deterministic element of `∂ĥ(u)`: zero on the averaging half,
/// `2√d·sign` per difference entry (anisotropic) or `2√d·g/‖g‖` per non-zero
/// group (isotropic). Zero entries and zero groups map to zero.
pub fn h_hat_subgradient(u: &CoeffStack, mode: TvMode) -> CoeffStack {
    let d = u.ndim();
    let n = u.block_len();
    let c = 2.0 * (d as f64).sqrt();
    let mut g = CoeffStack::zeros(u.shape()).expect("stack shape already validated");
    let src = u.dif_half();
    let dst = g.dif_half_mut();
    match mode {
        TvMode::Anisotropic => {
            for (o, &v) in dst.iter_mut().zip(src) {
                *o = if v > 0.0 {
                    c
                } else if v < 0.0 {
                    -c
                } else {
                    0.0
                };
            }
        }
        TvMode::Isotropic => {
            for i in 0..n {
                let norm = (0..d).map(|j| src[j * n + i].powi(2)).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for j in 0..d {
                        dst[j * n + i] = c * src[j * n + i] / norm;
                    }
                }
            }
        }
    }
    g
}
