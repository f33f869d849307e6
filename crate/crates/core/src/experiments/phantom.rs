use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::NdSignal;

/// Piecewise-constant foam-like test image: a disk of value 1 on a zero
/// background, punched with `n_disks` circular voids whose values are drawn
/// from `[0, 1)`. Voids avoid each other where a few rejection attempts allow.
pub fn gen_foam_phantom(size: usize, seed: u64, n_disks: usize) -> Result<NdSignal> {
    if size < 16 {
        return Err(Error::InvalidParameter(format!("phantom side must be >= 16, got {size}")));
    }
    const OUTER: f64 = 0.9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut voids: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(n_disks);
    for _ in 0..n_disks {
        let mut candidate = None;
        for _ in 0..50 {
            let r = rng.random_range(0.06..0.22);
            let rho = rng.random_range(0.0..(OUTER - r));
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let (cx, cy) = (rho * phi.cos(), rho * phi.sin());
            let clear = voids
                .iter()
                .all(|&(x, y, rr, _)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() >= r + rr);
            candidate = Some((cx, cy, r));
            if clear {
                break;
            }
        }
        let (cx, cy, r) = candidate.expect("at least one attempt");
        voids.push((cx, cy, r, rng.random_range(0.0..1.0)));
    }

    let half = size as f64 / 2.0;
    NdSignal::from_fn(&[size, size], |i| {
        let (row, col) = (i / size, i % size);
        let x = (col as f64 + 0.5 - half) / half;
        let y = (half - row as f64 - 0.5) / half;
        if x * x + y * y > OUTER * OUTER {
            return 0.0;
        }
        voids
            .iter()
            .rev()
            .find(|&&(cx, cy, r, _)| (x - cx).powi(2) + (y - cy).powi(2) <= r * r)
            .map_or(1.0, |&(_, _, _, v)| v)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tv::{tv, TvMode};

    #[test]
    fn deterministic_per_seed() {
        let a = gen_foam_phantom(32, 7, 30).unwrap();
        let b = gen_foam_phantom(32, 7, 30).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_foam_phantom(32, 8, 30).unwrap());
    }

    #[test]
    fn construction_properties() {
        for seed in 0..5 {
            let p = gen_foam_phantom(48, seed, 30).unwrap();
            assert!(p.min() >= 0.0 && p.max() <= 1.0);
            assert!(tv(&p, TvMode::Anisotropic) > 0.0);
            let mut values: Vec<u64> = p.as_slice().iter().map(|v| v.to_bits()).collect();
            values.sort_unstable();
            values.dedup();
            assert!(values.len() <= 30 + 2);
        }
        assert!(gen_foam_phantom(8, 0, 3).is_err());
    }
}
