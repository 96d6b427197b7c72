//! Orthonormal DCT-II along the leading (time) axis.

use alloc::format;

use super::tensor::Tensor;
use crate::{Error, Result};

/// The `[t, t]` orthonormal DCT-II basis; row `k` is frequency `k`.
///
/// `dct(x) = B x` and `idct(c) = Bᵀ c`.
pub fn dct_matrix(t: usize) -> Tensor {
    assert!(t > 0, "dct of length 0");
    let n = t as f64;
    let s0 = libm::sqrt(1.0 / n);
    let s = libm::sqrt(2.0 / n);
    Tensor::from_fn(&[t, t], |i| {
        let (k, j) = (i / t, i % t);
        let scale = if k == 0 { s0 } else { s };
        scale * libm::cos(core::f64::consts::PI * (j as f64 + 0.5) * k as f64 / n)
    })
}

fn as_series(x: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    if x.rank() == 0 {
        return Err(Error::arg(format!("{op} needs at least one (time) axis")));
    }
    let t = x.shape()[0];
    Ok((t, x.len() / t))
}

fn apply(basis: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (t, d) = (x.shape()[0], x.len() / x.shape()[0]);
    let flat = x.clone().reshape(&[t, d])?;
    basis.matmul(&flat)?.reshape(x.shape())
}

/// DCT-II coefficients of every channel of a `[t, ...]` series.
pub fn dct_forward(series: &Tensor) -> Result<Tensor> {
    let (t, _) = as_series(series, "dct_forward")?;
    apply(&dct_matrix(t), series)
}

/// Inverse of [`dct_forward`].
pub fn idct_inverse(coeffs: &Tensor) -> Result<Tensor> {
    let (t, _) = as_series(coeffs, "idct_inverse")?;
    apply(&dct_matrix(t).t(), coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    // Direct summation, independent of the basis matrix.
    fn dct_sum(x: &[f64]) -> alloc::vec::Vec<f64> {
        let n = x.len() as f64;
        (0..x.len())
            .map(|k| {
                let s: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * libm::cos(core::f64::consts::PI / n * (j as f64 + 0.5) * k as f64))
                    .sum();
                s * if k == 0 { libm::sqrt(1.0 / n) } else { libm::sqrt(2.0 / n) }
            })
            .collect()
    }

    #[test]
    fn constant_series_is_all_dc() {
        let x = Tensor::full(&[7, 2], 3.0);
        let c = dct_forward(&x).unwrap();
        for k in 1..7 {
            assert!(c.at(&[k, 0]).abs() < 1e-12 && c.at(&[k, 1]).abs() < 1e-12);
        }
        assert!((c.at(&[0, 0]) - 3.0 * libm::sqrt(7.0)).abs() < 1e-12);
    }

    #[test]
    fn ramp_matches_summation() {
        let x = Tensor::new(&[4], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let c = dct_forward(&x).unwrap();
        let want = dct_sum(&[0.0, 1.0, 2.0, 3.0]);
        for (a, b) in c.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        // Frozen from the summation oracle: 3, -2.2304424973876635, 0, -0.15851266778110737
        assert!((c.data()[0] - 3.0).abs() < 1e-12);
        assert!((c.data()[1] + 2.230_442_497_387_663_5).abs() < 1e-12);
        assert!(c.data()[2].abs() < 1e-12);
        assert!((c.data()[3] + 0.158_512_667_781_107_37).abs() < 1e-12);
    }

    #[test]
    fn unit_impulse_inverts_to_constant() {
        let mut c = Tensor::zeros(&[5]);
        c.data_mut()[0] = 1.0;
        let x = idct_inverse(&c).unwrap();
        for v in x.data() {
            assert!((v - 1.0 / libm::sqrt(5.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_rejected() {
        assert!(dct_forward(&Tensor::scalar(1.0)).is_err());
        assert!(idct_inverse(&Tensor::scalar(1.0)).is_err());
    }
}
