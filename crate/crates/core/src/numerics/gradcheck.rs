//! Central finite-difference gradient checking.

use alloc::format;
use alloc::vec::Vec;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

pub const FD_STEP: f64 = 1e-5;

/// Worst coordinate found by a gradient check.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub input: usize,
    pub coord: usize,
    pub checked: usize,
}

fn eval<F>(f: &F, points: &[Tensor]) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = points.iter().map(|p| tape.constant(p.clone())).collect();
    let out = f(&tape, &vars)?;
    let v = out.item();
    if !v.is_finite() || tape.ensure_finite().is_err() {
        return Err(Error::Evaluation(format!("non-finite function value {v}")));
    }
    Ok(v)
}

/// Max over coordinates of `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(f: F, point: &Tensor) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    let report = grad_check_many(|tape, vars| f(tape, vars[0]), core::slice::from_ref(point), None)?;
    Ok(report.max_rel_error)
}

/// Gradient check over several inputs at once.
///
/// With `max_coords` set, at most that many coordinates per input are probed,
/// spread evenly over the flat index range.
pub fn grad_check_many<F>(f: F, points: &[Tensor], max_coords: Option<usize>) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = points.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&tape, &vars)?;
        if !out.item().is_finite() {
            return Err(Error::Evaluation(format!("non-finite function value {}", out.item())));
        }
        let grads = tape.backward(out).map_err(|e| Error::Evaluation(format!("{e}")))?;
        vars.iter().map(|&v| grads.wrt(v)).collect()
    };

    let mut report = GradCheckReport::default();
    let mut probe: Vec<Tensor> = points.to_vec();
    for (input, grad) in analytic.iter().enumerate() {
        let n = grad.len();
        let stride = match max_coords {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        for coord in (0..n).step_by(stride) {
            let orig = probe[input].data()[coord];
            probe[input].data_mut()[coord] = orig + FD_STEP;
            let up = eval(&f, &probe)?;
            probe[input].data_mut()[coord] = orig - FD_STEP;
            let down = eval(&f, &probe)?;
            probe[input].data_mut()[coord] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = grad.data()[coord];
            let err = libm::fabs(a - numeric) / libm::fabs(a).max(1.0);
            report.checked += 1;
            if err > report.max_rel_error {
                report = GradCheckReport { max_rel_error: err, input, coord, checked: report.checked };
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn square_at_one() {
        let err = grad_check(|_, x| Ok(x.square().sum()), &Tensor::scalar(1.0)).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn linear_function() {
        let w = Tensor::vector(vec![0.5, -1.5, 2.0]);
        let err = grad_check(
            move |tape, x| {
                let w = tape.constant(w.clone());
                Ok(x.mul(w)?.sum().offset(3.0))
            },
            &Tensor::vector(vec![0.1, 0.2, 0.3]),
        )
        .unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn sigmoid_matmul_chain() {
        let x = Tensor::from_fn(&[3, 4], |i| libm::sin(i as f64 * 0.7));
        let w = Tensor::from_fn(&[4, 2], |i| libm::cos(i as f64 * 1.3) * 0.8);
        let r = grad_check_many(|_, v| Ok(v[0].matmul(v[1])?.sigmoid().square().sum()), &[x, w], None).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn non_finite_value_is_evaluation_error() {
        let r = grad_check(|_, x| Ok(x.ln().sum()), &Tensor::vector(vec![-1.0]));
        assert!(matches!(r, Err(Error::Evaluation(_))));
    }
}
