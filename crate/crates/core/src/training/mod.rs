//! Losses, Adam, the mini-batch training loop with early stopping, and the
//! gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod loss;
pub mod split;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, OptimizerConfig};
pub use gradcheck::{grad_check, loss_and_grads, GradCheckReport, GroupError};
pub use loss::{mse_loss, utilitarian_loss, LossKind};
pub use split::{Part, TemporalSplit};

use crate::error::{Error, Result};
use crate::ltv::HolidayCalendar;
use crate::model::{CovariateBundle, MtFusionNet, ScaledWindow};
use crate::trapezoid::TrapezoidWindow;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub val_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_kind: LossKind::Utilitarian,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            optimizer: OptimizerConfig::default(),
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        let OptimizerConfig::Adam {
            beta1,
            beta2,
            epsilon,
        } = self.optimizer;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
            return bad("adam needs beta1, beta2 in [0, 1) and epsilon > 0");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("train config serialises")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when there is no validation window; early stopping then
    /// follows the training loss.
    pub val_loss: Option<f64>,
}

impl EpochRecord {
    pub fn monitored(&self) -> f64 {
        self.val_loss.unwrap_or(self.train_loss)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub chosen_epoch: Option<usize>,
    pub steps: usize,
    pub train_windows: usize,
    pub val_windows: usize,
    pub wall_time_secs: f64,
    pub param_hash: String,
}

impl TrainReport {
    /// Equality on everything except wall time.
    pub fn same_outcome(&self, other: &TrainReport) -> bool {
        let strip = |r: &TrainReport| TrainReport {
            wall_time_secs: 0.0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn write_epochs_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_loss")?;
        for e in &self.epochs {
            match e.val_loss {
                Some(v) => writeln!(w, "{},{},{}", e.epoch, e.train_loss, v)?,
                None => writeln!(w, "{},{},", e.epoch, e.train_loss)?,
            }
        }
        Ok(())
    }
}

/// A scaled window with its covariates, as consumed by the optimiser.
#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub input: Array2<f64>,
    pub target: Array2<f64>,
    pub cov: CovariateBundle,
}

impl TrainingSample {
    pub fn new(model: &MtFusionNet, window: &TrapezoidWindow, calendar: &HolidayCalendar) -> Result<Self> {
        if window.spec != model.config().spec {
            return Err(Error::ShapeMismatch(format!(
                "window spec {:?} differs from model spec {:?}",
                window.spec,
                model.config().spec
            )));
        }
        let scaled = ScaledWindow::from_window(window)?;
        let target = scaled.target.ok_or_else(|| {
            Error::InvalidValue(format!(
                "window {} {} has no target",
                window.channel, window.start_day
            ))
        })?;
        if target.iter().any(|v| !v.is_finite()) || scaled.input.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "window {} {} contains non-finite values",
                window.channel, window.start_day
            )));
        }
        let cov = model.config().covariates.build(window, calendar);
        Ok(TrainingSample {
            input: scaled.input,
            target,
            cov,
        })
    }
}

/// Splits `windows` into fit and validation parts by the last
/// `val_fraction` of forecast origins per channel, then trains.
pub fn train(
    model: MtFusionNet,
    windows: &[TrapezoidWindow],
    calendar: &HolidayCalendar,
    cfg: &TrainConfig,
) -> Result<(MtFusionNet, TrainReport)> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::EmptyDataset("no training windows".into()));
    }
    let split = TemporalSplit::from_windows(windows, cfg.val_fraction)?;
    let (mut fit, mut val) = split.partition(windows);
    if fit.is_empty() || val.is_empty() {
        fit = (0..windows.len()).collect();
        val.clear();
    }
    let prep = |idx: &[usize]| -> Result<Vec<TrainingSample>> {
        idx.iter()
            .map(|&i| TrainingSample::new(&model, &windows[i], calendar))
            .collect()
    };
    let fit = prep(&fit)?;
    let val = prep(&val)?;
    train_samples(model, &fit, &val, cfg)
}

fn mean_loss(model: &MtFusionNet, samples: &[TrainingSample], loss: LossKind) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let out = model.forward_scaled(s.input.view(), &s.cov, None)?;
        total += loss.value(out.view(), s.target.view())?;
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch Adam on prepared samples. Early stopping watches the
/// validation loss, or the training loss when `val` is empty, and the
/// best-scoring parameters are returned.
pub fn train_samples(
    mut model: MtFusionNet,
    fit: &[TrainingSample],
    val: &[TrainingSample],
    cfg: &TrainConfig,
) -> Result<(MtFusionNet, TrainReport)> {
    cfg.validate()?;
    if fit.is_empty() {
        return Err(Error::EmptyDataset("no training windows".into()));
    }
    let started = Instant::now();
    let mut report = TrainReport {
        epochs: Vec::new(),
        chosen_epoch: None,
        steps: 0,
        train_windows: fit.len(),
        val_windows: val.len(),
        wall_time_secs: 0.0,
        param_hash: String::new(),
    };
    if cfg.max_epochs == 0 {
        report.param_hash = model.content_hash();
        return Ok((model, report));
    }

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut adam = Adam::new(cfg.learning_rate, cfg.optimizer);
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut best: Option<(f64, usize, crate::model::NetParams)> = None;
    let mut stale = 0;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = model.params().zeros_like();
            let weight = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &fit[i];
                let (out, cache) =
                    model.forward_scaled_cached(s.input.view(), &s.cov, Some(&mut dropout_rng))?;
                let (value, d_out) = cfg.loss_kind.value_and_grad(out.view(), s.target.view())?;
                if !value.is_finite() {
                    return Err(Error::DivergenceDetected { epoch, loss: value });
                }
                epoch_loss += value;
                grads.add_scaled(&model.backward(&cache, &s.cov, &d_out), weight);
            }
            let grad_refs: Vec<&Array2<f64>> = grads.tensors().into_iter().map(|(_, g)| g).collect();
            adam.step(model.params_mut().tensors_mut(), grad_refs);
            report.steps += 1;
        }
        let train_loss = epoch_loss / fit.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(mean_loss(&model, val, cfg.loss_kind)?)
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
        };
        let monitored = record.monitored();
        if !monitored.is_finite() {
            return Err(Error::DivergenceDetected {
                epoch,
                loss: monitored,
            });
        }
        report.epochs.push(record);
        if best.as_ref().map_or(true, |(b, _, _)| monitored < *b) {
            best = Some((monitored, epoch, model.params().clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    if let Some((_, epoch, params)) = best {
        *model.params_mut() = params;
        report.chosen_epoch = Some(epoch);
    }
    report.param_hash = model.content_hash();
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((model, report))
}
