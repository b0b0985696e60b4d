//! Central finite-difference validation of analytic gradients.

use super::{Float, Tensor};
use crate::error::Result;

/// Magnitudes below this are compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamError {
    pub name: String,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub params: Vec<ParamError>,
    pub coordinates: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares the gradient of `loss_fn` with respect to every coordinate of
/// `params` against `(L(p + h) - L(p - h)) / 2h`.
///
/// `loss_fn` must be a deterministic function of the parameter values.
pub fn grad_check<F: Float>(
    params: &[(String, Tensor<F>)],
    mut loss_fn: impl FnMut() -> Result<Tensor<F>>,
    h: f64,
) -> Result<GradCheckReport> {
    if params.is_empty() {
        return Ok(GradCheckReport::default());
    }
    params.iter().for_each(|(_, p)| p.zero_grad());
    loss_fn()?.backward()?;
    let analytic: Vec<Vec<F>> = params
        .iter()
        .map(|(_, p)| p.grad().unwrap_or_else(|| vec![F::zero(); p.numel()]))
        .collect();

    let mut report = GradCheckReport::default();
    for ((name, p), grad) in params.iter().zip(&analytic) {
        let mut worst = ParamError {
            name: name.clone(),
            max_relative_error: 0.0,
            max_abs_error: 0.0,
        };
        for i in 0..p.numel() {
            let orig = p.values()[i];
            p.values_mut()[i] = F::c(orig.f64() + h);
            let plus = super::no_grad(|| loss_fn())?.item().f64();
            p.values_mut()[i] = F::c(orig.f64() - h);
            let minus = super::no_grad(|| loss_fn())?.item().f64();
            p.values_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad[i].f64();
            worst.max_abs_error = worst.max_abs_error.max((a - numeric).abs());
            worst.max_relative_error = worst.max_relative_error.max(relative_error(a, numeric));
            report.coordinates += 1;
        }
        report.max_relative_error = report.max_relative_error.max(worst.max_relative_error);
        report.params.push(worst);
    }
    params.iter().for_each(|(_, p)| p.zero_grad());
    Ok(report)
}
