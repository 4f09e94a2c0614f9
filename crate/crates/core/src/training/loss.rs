use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Squared error of the newest (last) column only.
    Utilitarian,
    /// Squared error over every column.
    Mse,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Utilitarian => "utilitarian",
            LossKind::Mse => "mse",
        })
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "utilitarian" => Ok(LossKind::Utilitarian),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::InvalidConfig(format!("unknown loss `{other}`"))),
        }
    }
}

fn check(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::ShapeMismatch("empty prediction".into()));
    }
    Ok(())
}

/// `(1/n) Σ_i (pred[i, k−1] − target[i, k−1])²`.
pub fn utilitarian_loss(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    check(pred, target)?;
    let k = pred.ncols();
    let n = pred.nrows() as f64;
    Ok(pred
        .column(k - 1)
        .iter()
        .zip(target.column(k - 1))
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

pub fn mse_loss(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    check(pred, target)?;
    let len = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / len)
}

impl LossKind {
    pub fn value(self, pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
        match self {
            LossKind::Utilitarian => utilitarian_loss(pred, target),
            LossKind::Mse => mse_loss(pred, target),
        }
    }

    /// Loss and its gradient with respect to `pred`.
    pub fn value_and_grad(
        self,
        pred: ArrayView2<'_, f64>,
        target: ArrayView2<'_, f64>,
    ) -> Result<(f64, Array2<f64>)> {
        let value = self.value(pred, target)?;
        let (n, k) = pred.dim();
        let grad = match self {
            LossKind::Utilitarian => {
                let mut g = Array2::zeros((n, k));
                let diff = &pred.slice(s![.., k - 1]) - &target.slice(s![.., k - 1]);
                g.column_mut(k - 1).assign(&(diff * (2.0 / n as f64)));
                g
            }
            LossKind::Mse => (&pred - &target) * (2.0 / (n * k) as f64),
        };
        Ok((value, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn utilitarian_examples() {
        let pred = array![[9.0, 1.0], [-4.0, 3.0]];
        let target = array![[0.0, 0.0], [0.0, 1.0]];
        assert_eq!(utilitarian_loss(pred.view(), target.view()).unwrap(), 2.5);
        let garbage = array![[1e9, 0.0], [f64::MAX, 1.0]];
        assert_eq!(utilitarian_loss(garbage.view(), target.view()).unwrap(), 0.0);
        let single = array![[1.0], [2.0]];
        let zero = Array2::zeros((2, 1));
        assert_eq!(
            utilitarian_loss(single.view(), zero.view()).unwrap(),
            mse_loss(single.view(), zero.view()).unwrap()
        );
    }

    #[test]
    fn mse_examples() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert_eq!(mse_loss(a.view(), a.view()).unwrap(), 0.0);
        assert_eq!(mse_loss(array![[2.0]].view(), array![[0.0]].view()).unwrap(), 4.0);
        assert_eq!(mse_loss(a.view(), Array2::zeros((2, 2)).view()).unwrap(), 1.0);
        assert!(matches!(
            mse_loss(a.view(), Array2::zeros((2, 3)).view()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn gradients_match_differences() {
        let pred = array![[0.3, -1.2, 0.5], [2.0, 0.1, -0.7]];
        let target = array![[0.0, 1.0, 0.2], [1.5, 0.0, 0.4]];
        for kind in [LossKind::Utilitarian, LossKind::Mse] {
            let (_, g) = kind.value_and_grad(pred.view(), target.view()).unwrap();
            for idx in [(0, 0), (1, 2), (0, 2), (1, 1)] {
                let h = 1e-6;
                let mut up = pred.clone();
                up[idx] += h;
                let mut dn = pred.clone();
                dn[idx] -= h;
                let fd = (kind.value(up.view(), target.view()).unwrap()
                    - kind.value(dn.view(), target.view()).unwrap())
                    / (2.0 * h);
                assert!((fd - g[idx]).abs() < 1e-8, "{kind} {idx:?}");
            }
        }
    }
}
