//! First-level Haar frame built from circular averaging and differencing
//! along each axis.
//!
//! `W z = (1/(2√d)) [A_1 z; …; A_d z; D_1 z; …; D_d z]` with
//! `(A_j x)_i = x_i + x_{i+e_j}` and `(D_j x)_i = x_i − x_{i+e_j}`, indices
//! wrapping around along axis `j`. Under circular boundaries
//! `A_jᵀA_j + D_jᵀD_j = 4I`, hence `WᵀW = I` exactly while `WWᵀ` is only a
//! projection onto the range of `W`.

use crate::error::{Error, Result};
use crate::signal::NdSignal;

/// Applies `out_i = x_i + sign * x_{i±e_axis}` (circular). `ahead` selects the
/// `+e_axis` neighbour used by the forward kernels; the adjoints look behind.
pub(crate) fn stencil(x: &[f64], shape: &[usize], axis: usize, sign: f64, ahead: bool) -> Vec<f64> {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        let base = o * len * inner;
        for k in 0..len {
            let nb = if ahead { (k + 1) % len } else { (k + len - 1) % len };
            let row = base + k * inner;
            let nrow = base + nb * inner;
            for i in 0..inner {
                out[row + i] = x[row + i] + sign * x[nrow + i];
            }
        }
    }
    out
}

fn per_axis(x: &NdSignal, axis: usize, sign: f64, ahead: bool) -> Result<NdSignal> {
    x.check_axis(axis)?;
    Ok(x.with_data(stencil(x.as_slice(), x.shape(), axis, sign, ahead)))
}

pub fn avg_axis(x: &NdSignal, axis: usize) -> Result<NdSignal> {
    per_axis(x, axis, 1.0, true)
}

pub fn diff_axis(x: &NdSignal, axis: usize) -> Result<NdSignal> {
    per_axis(x, axis, -1.0, true)
}

pub fn avg_axis_adjoint(t: &NdSignal, axis: usize) -> Result<NdSignal> {
    per_axis(t, axis, 1.0, false)
}

pub fn diff_axis_adjoint(t: &NdSignal, axis: usize) -> Result<NdSignal> {
    per_axis(t, axis, -1.0, false)
}

/// `1/(2√d)`, the normalisation that makes `W` a Parseval frame.
pub fn frame_scale(ndim: usize) -> f64 {
    1.0 / (2.0 * (ndim as f64).sqrt())
}

/// Frame coefficients: `d` averaging blocks followed by `d` difference
/// blocks, each holding `n` values in the signal's own layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffStack {
    shape: Vec<usize>,
    n: usize,
    data: Vec<f64>,
}

impl CoeffStack {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let probe = NdSignal::zeros(shape)?;
        let n = probe.len();
        Ok(Self {
            shape: shape.to_vec(),
            n,
            data: vec![0.0; 2 * n * shape.len()],
        })
    }

    /// Assembles a stack from `d` averaging and `d` difference blocks.
    pub fn from_blocks(shape: &[usize], avg: Vec<Vec<f64>>, dif: Vec<Vec<f64>>) -> Result<Self> {
        let mut out = Self::zeros(shape)?;
        let d = shape.len();
        if avg.len() != d || dif.len() != d {
            return Err(Error::InvalidParameter(format!(
                "expected {d} averaging and {d} difference blocks"
            )));
        }
        for (j, block) in avg.into_iter().chain(dif).enumerate() {
            if block.len() != out.n {
                return Err(Error::LengthMismatch {
                    len: block.len(),
                    shape: shape.to_vec(),
                });
            }
            out.data[j * out.n..(j + 1) * out.n].copy_from_slice(&block);
        }
        Ok(out)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Samples per block (`n`).
    pub fn block_len(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn avg(&self, axis: usize) -> &[f64] {
        &self.data[axis * self.n..(axis + 1) * self.n]
    }

    pub fn dif(&self, axis: usize) -> &[f64] {
        let d = self.ndim();
        &self.data[(d + axis) * self.n..(d + axis + 1) * self.n]
    }

    /// All averaging blocks as one contiguous slice.
    pub fn avg_half(&self) -> &[f64] {
        &self.data[..self.ndim() * self.n]
    }

    /// All difference blocks as one contiguous slice.
    pub fn dif_half(&self) -> &[f64] {
        &self.data[self.ndim() * self.n..]
    }

    pub fn dif_half_mut(&mut self) -> &mut [f64] {
        let split = self.ndim() * self.n;
        &mut self.data[split..]
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

    pub fn norm(&self) -> f64 {
        crate::signal::norm_slice(&self.data)
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(crate::signal::dot_slices(&self.data, &other.data))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        Ok(out)
    }
}

pub fn w_forward(z: &NdSignal) -> CoeffStack {
    let d = z.ndim();
    let n = z.len();
    let c = frame_scale(d);
    let mut data = Vec::with_capacity(2 * n * d);
    for sign in [1.0, -1.0] {
        for axis in 0..d {
            let block = stencil(z.as_slice(), z.shape(), axis, sign, true);
            data.extend(block.into_iter().map(|v| c * v));
        }
    }
    CoeffStack {
        shape: z.shape().to_vec(),
        n,
        data,
    }
}

pub fn w_adjoint(u: &CoeffStack) -> NdSignal {
    let d = u.ndim();
    let mut acc = vec![0.0; u.n];
    for axis in 0..d {
        let a = stencil(u.avg(axis), &u.shape, axis, 1.0, false);
        let b = stencil(u.dif(axis), &u.shape, axis, -1.0, false);
        for ((s, x), y) in acc.iter_mut().zip(a).zip(b) {
            *s += x + y;
        }
    }
    let c = frame_scale(d);
    for s in &mut acc {
        *s *= c;
    }
    NdSignal::new(&u.shape, acc).expect("coefficient stack shape is valid and values finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{dot, l2_norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sig(v: &[f64]) -> NdSignal {
        NdSignal::new(&[v.len()], v.to_vec()).unwrap()
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> NdSignal {
        NdSignal::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
    }

    // Explicit multi-index loop, independent of the strided implementation.
    #[allow(clippy::needless_range_loop)]
    fn loop_oracle(x: &NdSignal, axis: usize, sign: f64) -> Vec<f64> {
        let shape = x.shape();
        let d = shape.len();
        let mut out = vec![0.0; x.len()];
        let mut idx = vec![0usize; d];
        for flat in 0..x.len() {
            let mut rem = flat;
            for k in (0..d).rev() {
                idx[k] = rem % shape[k];
                rem /= shape[k];
            }
            let mut nb = idx.clone();
            nb[axis] = (idx[axis] + 1) % shape[axis];
            let mut nflat = 0;
            for k in 0..d {
                nflat = nflat * shape[k] + nb[k];
            }
            out[flat] = x.as_slice()[flat] + sign * x.as_slice()[nflat];
        }
        out
    }

    #[test]
    fn avg_axis_examples() {
        let x = sig(&[4.0, 0.0, 0.0, 0.0]);
        assert_eq!(avg_axis(&x, 0).unwrap().as_slice(), &[4.0, 0.0, 0.0, 4.0]);
        let c = NdSignal::filled(&[3, 5], 1.5).unwrap();
        assert!(avg_axis(&c, 1).unwrap().as_slice().iter().all(|&v| v == 3.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random(&[6], &mut rng);
        assert_eq!(avg_axis(&r, 0).unwrap().as_slice(), loop_oracle(&r, 0, 1.0).as_slice());
        assert!(matches!(avg_axis(&r, 1), Err(Error::InvalidAxis { .. })));
    }

    #[test]
    fn diff_axis_examples() {
        let x = sig(&[4.0, 0.0, 0.0, 0.0]);
        assert_eq!(diff_axis(&x, 0).unwrap().as_slice(), &[4.0, 0.0, 0.0, -4.0]);
        let c = NdSignal::filled(&[3, 5], -2.0).unwrap();
        assert!(diff_axis(&c, 0).unwrap().as_slice().iter().all(|&v| v == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = random(&[4, 4], &mut rng);
        // axis 2 in one-based numbering is the last axis
        assert_eq!(diff_axis(&r, 1).unwrap().as_slice(), loop_oracle(&r, 1, -1.0).as_slice());
        let r3 = random(&[3, 4, 2], &mut rng);
        for axis in 0..3 {
            assert_eq!(
                diff_axis(&r3, axis).unwrap().as_slice(),
                loop_oracle(&r3, axis, -1.0).as_slice()
            );
            assert_eq!(
                avg_axis(&r3, axis).unwrap().as_slice(),
                loop_oracle(&r3, axis, 1.0).as_slice()
            );
        }
    }

    #[test]
    fn adjoint_examples() {
        let t = sig(&[2.0, 0.0, 0.0, 2.0]);
        assert_eq!(avg_axis_adjoint(&t, 0).unwrap().as_slice(), &[4.0, 2.0, 0.0, 2.0]);
        let c = NdSignal::filled(&[4, 3], 0.7).unwrap();
        for axis in 0..2 {
            assert!(diff_axis_adjoint(&c, axis).unwrap().as_slice().iter().all(|&v| v == 0.0));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for shape in [vec![7], vec![4, 5], vec![3, 2, 4]] {
            for axis in 0..shape.len() {
                let x = random(&shape, &mut rng);
                let t = random(&shape, &mut rng);
                let scale = l2_norm(&x) * l2_norm(&t);
                let lhs = dot(&avg_axis(&x, axis).unwrap(), &t).unwrap();
                let rhs = dot(&x, &avg_axis_adjoint(&t, axis).unwrap()).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * scale);
                let lhs = dot(&diff_axis(&x, axis).unwrap(), &t).unwrap();
                let rhs = dot(&x, &diff_axis_adjoint(&t, axis).unwrap()).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn w_forward_examples() {
        let u = w_forward(&sig(&[4.0, 0.0, 0.0, 0.0]));
        assert_eq!(u.avg(0), &[2.0, 0.0, 0.0, 2.0]);
        assert_eq!(u.dif(0), &[2.0, 0.0, 0.0, -2.0]);
        assert_eq!(u.as_slice().len(), 2 * 4);

        let c = w_forward(&NdSignal::filled(&[3, 3, 3], 5.0).unwrap());
        assert!(c.dif_half().iter().all(|&v| v == 0.0));
        assert_eq!(c.as_slice().len(), 2 * 27 * 3);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for shape in [vec![9], vec![6, 7], vec![4, 3, 5]] {
            let z = random(&shape, &mut rng);
            assert!((w_forward(&z).norm() - l2_norm(&z)).abs() <= 1e-12 * l2_norm(&z));
        }
    }

    #[test]
    fn w_adjoint_examples() {
        let u = CoeffStack::from_blocks(&[4], vec![vec![2.0, 0.0, 0.0, 2.0]], vec![vec![1.0, 0.0, 0.0, -1.0]])
            .unwrap();
        assert_eq!(w_adjoint(&u).as_slice(), &[3.0, 0.5, 0.0, 0.5]);
        let zero = CoeffStack::zeros(&[5, 2]).unwrap();
        assert!(w_adjoint(&zero).as_slice().iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..60 {
            let shape = match k % 3 {
                0 => vec![rng.random_range(2..40)],
                1 => vec![rng.random_range(2..12), rng.random_range(2..12)],
                _ => vec![rng.random_range(2..7), rng.random_range(2..7), rng.random_range(2..7)],
            };
            let z = random(&shape, &mut rng);
            assert!(w_adjoint(&w_forward(&z)).max_abs_diff(&z).unwrap() < 1e-12);
        }
    }

    #[test]
    fn w_is_adjoint_of_wt() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for shape in [vec![8], vec![5, 6], vec![3, 4, 3]] {
            let z = random(&shape, &mut rng);
            let mut u = CoeffStack::zeros(&shape).unwrap();
            for v in u.as_mut_slice() {
                *v = rng.random_range(-1.0..1.0);
            }
            let lhs = w_forward(&z).dot(&u).unwrap();
            let rhs = dot(&z, &w_adjoint(&u)).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * l2_norm(&z) * u.norm());
        }
    }

    #[test]
    fn range_projection_is_not_identity() {
        // A single difference impulse is far from the range of W.
        let mut u = CoeffStack::zeros(&[8, 8]).unwrap();
        u.dif_half_mut()[10] = 1.0;
        let projected = w_forward(&w_adjoint(&u));
        let residual = projected.sub(&u).unwrap().norm();
        assert!(residual > 0.1 * u.norm());

        // ... while anything of the form Wz is left unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let wz = w_forward(&random(&[8, 8], &mut rng));
        let back = w_forward(&w_adjoint(&wz));
        assert!(back.sub(&wz).unwrap().norm() < 1e-10 * wz.norm());
    }
}
