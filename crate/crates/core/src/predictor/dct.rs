//! Orthonormal DCT-II / DCT-III pair used to move joint trajectories
//! between the temporal and trajectory (frequency) representations.
//!
//! With the orthonormal scaling the inverse transform is the transpose of
//! the forward one, so round-trips are exact up to rounding and Parseval
//! holds: `sum(x^2) == sum(coeff^2)`.

use crate::scalar::Real;

/// Forward orthonormal DCT-II of a length-L series.
///
/// Coefficient 0 of a constant series `c` is `c * sqrt(L)`; all others are 0.
pub fn dct_forward<T: Real>(series: &[T]) -> Vec<T> {
    let len = series.len();
    assert!(len >= 1, "dct_forward requires a nonempty series");
    let l = T::from_usize(len);
    let w0 = (T::one() / l).sqrt();
    let wk = (T::from_f64(2.0) / l).sqrt();
    let half_pi_over_l = T::PI() / (T::from_f64(2.0) * l);
    let mut coeffs = Vec::with_capacity(len);
    for k in 0..len {
        let kk = T::from_usize(k);
        let mut acc = T::zero();
        for (n, &x) in series.iter().enumerate() {
            let angle = half_pi_over_l * T::from_usize(2 * n + 1) * kk;
            acc = acc + x * angle.cos();
        }
        let w = if k == 0 { w0 } else { wk };
        coeffs.push(w * acc);
    }
    coeffs
}

/// Inverse of [`dct_forward`] (orthonormal DCT-III).
pub fn idct<T: Real>(coeffs: &[T]) -> Vec<T> {
    let len = coeffs.len();
    assert!(len >= 1, "idct requires a nonempty coefficient vector");
    let l = T::from_usize(len);
    let w0 = (T::one() / l).sqrt();
    let wk = (T::from_f64(2.0) / l).sqrt();
    let half_pi_over_l = T::PI() / (T::from_f64(2.0) * l);
    let mut series = Vec::with_capacity(len);
    for n in 0..len {
        let phase = half_pi_over_l * T::from_usize(2 * n + 1);
        let mut acc = T::zero();
        for (k, &c) in coeffs.iter().enumerate() {
            let w = if k == 0 { w0 } else { wk };
            acc = acc + w * c * (phase * T::from_usize(k)).cos();
        }
        series.push(acc);
    }
    series
}

/// Keeps the `m` lowest-frequency coefficients.
pub fn dct_truncate<T: Real>(coeffs: &[T], m: usize) -> Vec<T> {
    assert!(
        m >= 1 && m <= coeffs.len(),
        "truncation width must be in 1..=len"
    );
    coeffs[..m].to_vec()
}

/// Zero-pads a truncated coefficient vector back to length `len`.
pub fn dct_zero_pad<T: Real>(coeffs: &[T], len: usize) -> Vec<T> {
    assert!(coeffs.len() <= len, "cannot pad to a shorter length");
    let mut out = coeffs.to_vec();
    out.resize(len, T::zero());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn constant_series_is_dc_only() {
        let c = 3.25f64;
        for l in [1usize, 2, 7, 16] {
            let series = vec![c; l];
            let coeffs = dct_forward(&series);
            assert!((coeffs[0] - c * (l as f64).sqrt()).abs() < 1e-9);
            for &k in &coeffs[1..] {
                assert!(k.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for l in [1usize, 3, 8, 25, 50] {
            let x: Vec<f64> = (0..l).map(|_| rng.gen_range(-100.0..100.0)).collect();
            let c = dct_forward(&x);
            let back = idct(&c);
            for (a, b) in x.iter().zip(back.iter()) {
                assert!((a - b).abs() < 1e-9, "round trip at L={l}");
            }
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ec: f64 = c.iter().map(|v| v * v).sum();
            assert!((ex - ec).abs() <= 1e-9 * ex.max(1.0), "parseval at L={l}");
        }
    }

    #[test]
    fn truncate_keeps_low_frequencies() {
        let coeffs = vec![5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(dct_truncate(&coeffs, 2), vec![5.0, 4.0]);
        assert_eq!(dct_truncate(&coeffs, 5), coeffs);
        assert_eq!(dct_zero_pad(&[5.0, 4.0], 4), vec![5.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn works_in_f32() {
        let x: Vec<f32> = vec![1.0, -2.0, 0.5, 3.0];
        let back = idct(&dct_forward(&x));
        for (a, b) in x.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
