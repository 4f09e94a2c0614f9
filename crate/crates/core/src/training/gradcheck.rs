//! Analytic gradients against central finite differences.

use ndarray::Array2;

use super::loss::LossKind;
use crate::error::Result;
use crate::model::{CovariateBundle, MtFusionNet};

const STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub size: usize,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
    pub max_rel_error: f64,
}

fn norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Loss and analytic parameter gradients for one scaled sample, inference mode.
pub fn loss_and_grads(
    model: &MtFusionNet,
    input: &Array2<f64>,
    target: &Array2<f64>,
    cov: &CovariateBundle,
    loss: LossKind,
) -> Result<(f64, crate::model::NetParams)> {
    let (out, cache) = model.forward_scaled_cached(input.view(), cov, None)?;
    let (value, d_out) = loss.value_and_grad(out.view(), target.view())?;
    Ok((value, model.backward(&cache, cov, &d_out)))
}

/// Relative error `‖a − f‖ / max(‖a‖, ‖f‖)` per parameter tensor; groups
/// whose gradients both vanish count as exact and empty groups are skipped.
pub fn grad_check(
    model: &MtFusionNet,
    input: &Array2<f64>,
    target: &Array2<f64>,
    cov: &CovariateBundle,
    loss: LossKind,
) -> Result<GradCheckReport> {
    let (_, analytic) = loss_and_grads(model, input, target, cov, loss)?;
    let analytic: Vec<(String, Array2<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, a)| (n, a.clone()))
        .collect();

    let mut probe = model.clone();
    let eval = |m: &MtFusionNet| -> Result<f64> {
        let out = m.forward_scaled(input.view(), cov, None)?;
        loss.value(out.view(), target.view())
    };

    let mut groups = Vec::new();
    for (g, (name, grad)) in analytic.iter().enumerate() {
        if grad.is_empty() {
            continue;
        }
        let mut numeric = Array2::zeros(grad.dim());
        for idx in 0..grad.len() {
            let (r, c) = (idx / grad.ncols(), idx % grad.ncols());
            let orig = probe.params().tensors()[g].1[[r, c]];
            probe.params_mut().tensors_mut()[g][[r, c]] = orig + STEP;
            let up = eval(&probe)?;
            probe.params_mut().tensors_mut()[g][[r, c]] = orig - STEP;
            let dn = eval(&probe)?;
            probe.params_mut().tensors_mut()[g][[r, c]] = orig;
            numeric[[r, c]] = (up - dn) / (2.0 * STEP);
        }
        let scale = norm(grad).max(norm(&numeric));
        let rel_error = if scale < 1e-10 {
            0.0
        } else {
            norm(&(grad - &numeric)) / scale
        };
        groups.push(GroupError {
            name: name.clone(),
            size: grad.len(),
            rel_error,
        });
    }
    let max_rel_error = groups.iter().map(|g| g.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        groups,
        max_rel_error,
    })
}
