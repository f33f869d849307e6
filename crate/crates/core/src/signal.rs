//! Dense d-dimensional real signals (d = 1, 2 or 3) stored row-major with the
//! last axis varying fastest.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAX_DIMS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct NdSignal {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_DIMS || shape.iter().any(|&e| e < 2) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

impl NdSignal {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_shape(shape)?;
        if data.len() != n {
            return Err(Error::LengthMismatch {
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self> {
        let n = check_shape(shape)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(0));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        let n = check_shape(shape)?;
        Self::new(shape, (0..n).map(&mut f).collect())
    }

    /// Builds a signal with the same shape as `self`. The caller guarantees
    /// `data.len() == self.len()`; finiteness is still checked in debug builds.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            shape: self.shape.clone(),
            data,
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.with_data(vec![0.0; self.data.len()])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Distance between consecutive samples along `axis` in the flat buffer.
    pub fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    pub fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.ndim() {
            return Err(Error::InvalidAxis {
                axis,
                ndim: self.ndim(),
            });
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    /// `alpha * self + beta * other`.
    pub fn lincomb(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(self.with_data(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes the signal as text: a `shape=e1xe2` header line followed by one
    /// comma-separated row per index of the last axis.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.shape.iter().map(|e| e.to_string()).collect();
        let _ = writeln!(out, "shape={}", header.join("x"));
        let row = *self.shape.last().unwrap();
        for chunk in self.data.chunks(row) {
            let line: Vec<String> = chunk.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty input".into()))?;
        let dims = header
            .trim()
            .strip_prefix("shape=")
            .ok_or_else(|| Error::Parse(format!("bad header {header:?}")))?;
        let shape = dims
            .split(['x', ','])
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("bad extent {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::new();
        for line in lines {
            for field in line.split(',') {
                let v = field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad value {field:?}: {e}")))?;
                data.push(v);
            }
        }
        Self::new(&shape, data)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

pub fn dot(a: &NdSignal, b: &NdSignal) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(dot_slices(a.as_slice(), b.as_slice()))
}

pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &NdSignal) -> f64 {
    norm_slice(a.as_slice())
}

pub(crate) fn norm_slice(a: &[f64]) -> f64 {
    dot_slices(a, a).sqrt()
}

/// `‖x_t − x_prev‖₂ / ‖x_prev‖₂`, the relative-change stopping measure.
pub fn rel_change(x_t: &NdSignal, x_prev: &NdSignal) -> Result<f64> {
    x_t.check_same_shape(x_prev)?;
    let denom = l2_norm(x_prev);
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let num: f64 = x_t
        .as_slice()
        .iter()
        .zip(x_prev.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

pub fn mean(a: &NdSignal) -> f64 {
    a.sum() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> NdSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NdSignal::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    // pairwise (tree) summation, independent of the sequential fold
    fn pairwise(v: &[f64]) -> f64 {
        match v.len() {
            0 => 0.0,
            1 => v[0],
            n => pairwise(&v[..n / 2]) + pairwise(&v[n / 2..]),
        }
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(NdSignal::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(NdSignal::new(&[1, 4], vec![0.0; 4]).is_err());
        assert!(NdSignal::new(&[2, 2, 2, 2], vec![0.0; 16]).is_err());
        assert!(NdSignal::new(&[], vec![]).is_err());
        assert!(matches!(
            NdSignal::new(&[2], vec![1.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
        assert!(NdSignal::new(&[2, 3, 2], vec![0.0; 12]).is_ok());
    }

    #[test]
    fn dot_examples() {
        let a = NdSignal::new(&[2], vec![1.0, 2.0]).unwrap();
        let b = NdSignal::new(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(dot(&a, &b).unwrap(), 11.0);
        let x = random(&[5, 3], 1);
        assert_eq!(dot(&x, &x.zeros_like()).unwrap(), 0.0);

        let a = random(&[8], 2);
        let b = random(&[8], 3);
        let prods: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).collect();
        assert!((dot(&a, &b).unwrap() - pairwise(&prods)).abs() <= 1e-12);

        let c = random(&[3], 4);
        assert!(matches!(dot(&a, &c), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn dot_symmetric_and_bilinear() {
        for seed in 0..50 {
            let a = random(&[4, 5], seed);
            let b = random(&[4, 5], seed + 100);
            let c = random(&[4, 5], seed + 200);
            let ab = dot(&a, &b).unwrap();
            assert!((ab - dot(&b, &a).unwrap()).abs() <= 1e-12 * ab.abs().max(1.0));
            let lhs = dot(&a.lincomb(2.5, &c, -0.75).unwrap(), &b).unwrap();
            let rhs = 2.5 * ab - 0.75 * dot(&c, &b).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn l2_norm_examples() {
        let a = NdSignal::new(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(l2_norm(&a), 5.0);
        assert_eq!(l2_norm(&a.zeros_like()), 0.0);
        let r = random(&[6, 6], 9);
        assert!((l2_norm(&r) - dot(&r, &r).unwrap().sqrt()).abs() <= 1e-14);

        let b = random(&[6, 6], 10);
        assert!(l2_norm(&r.sub(&b).unwrap()) > 0.0);
        assert_eq!(l2_norm(&r.sub(&r.clone()).unwrap()), 0.0);
    }

    #[test]
    fn rel_change_examples() {
        let x = random(&[7], 5);
        assert_eq!(rel_change(&x, &x).unwrap(), 0.0);
        let a = NdSignal::new(&[2], vec![2.0, 0.0]).unwrap();
        let b = NdSignal::new(&[2], vec![1.0, 0.0]).unwrap();
        assert_eq!(rel_change(&a, &b).unwrap(), 1.0);
        assert!(matches!(
            rel_change(&a, &a.zeros_like()),
            Err(Error::ZeroDenominator)
        ));

        let p = random(&[3, 4], 6);
        let q = random(&[3, 4], 7);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..p.len() {
            num += (p.as_slice()[i] - q.as_slice()[i]).powi(2);
            den += q.as_slice()[i].powi(2);
        }
        let expected = num.sqrt() / den.sqrt();
        assert!((rel_change(&p, &q).unwrap() - expected).abs() <= 1e-14);
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean(&NdSignal::filled(&[2, 2], 1.0).unwrap()), 1.0);
        assert_eq!(mean(&NdSignal::new(&[2], vec![0.0, 2.0]).unwrap()), 1.0);
        let r = random(&[5, 4], 8);
        let naive = r.as_slice().iter().fold(0.0, |acc, v| acc + v) / 20.0;
        assert!((mean(&r) - naive).abs() <= 1e-14);
    }

    #[test]
    fn csv_round_trip() {
        let r = random(&[3, 4, 2], 11);
        let text = r.to_csv_string();
        assert!(text.starts_with("shape=3x4x2\n"));
        let back = NdSignal::from_csv_str(&text).unwrap();
        assert_eq!(back.shape(), r.shape());
        for (a, b) in back.as_slice().iter().zip(r.as_slice()) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }
        assert!(NdSignal::from_csv_str("shape=2\n1,2,3\n").is_err());
        assert!(NdSignal::from_csv_str("2,3\n").is_err());
    }
}
