use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::PredictionRecord;
use super::report::{predict_records, EvalReport};
use crate::error::{Error, Result};
use crate::ltv::LtvDataset;
use crate::model::{BackboneKind, CovariateConfig, ModelConfig, MtFusionNet};
use crate::preprocess::SmoothScales;
use crate::training::{train, LossKind, TemporalSplit, TrainConfig, TrainReport};
use crate::trapezoid::{enumerate_windows, TrapezoidWindow, WindowSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "k")]
pub enum InputMode {
    /// `k = 1` windows with the same `m`, `n`.
    Single,
    Trapezoidal(usize),
}

impl InputMode {
    pub fn k(self) -> usize {
        match self {
            InputMode::Single => 1,
            InputMode::Trapezoidal(k) => k,
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputMode::Single => f.write_str("Single"),
            InputMode::Trapezoidal(k) => write!(f, "Trapezoidal (k={k})"),
        }
    }
}

/// Axes are crossed in the order input, scales, loss, positional encoding,
/// backbone. `template` supplies every other model setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub m: usize,
    pub n: usize,
    pub inputs: Vec<InputMode>,
    pub scales: Vec<SmoothScales>,
    pub losses: Vec<LossKind>,
    pub positional_encoding: Vec<bool>,
    pub backbones: Vec<BackboneKind>,
    pub template: ModelConfig,
    pub train: TrainConfig,
    /// Fraction of each channel's forecast origins held out for scoring.
    pub test_fraction: f64,
    /// Keeps every `train_stride`-th fitting window per channel.
    pub train_stride: usize,
    /// Adds the channel one-hot and calendar covariates.
    pub covariates: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub input: InputMode,
    pub scales: SmoothScales,
    pub loss: LossKind,
    pub positional_encoding: bool,
    pub backbone: BackboneKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub report: EvalReport,
    pub training: TrainReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationGrid {
    pub fn cells(&self) -> Vec<AblationCell> {
        let mut out = Vec::new();
        for &input in &self.inputs {
            for scales in &self.scales {
                for &loss in &self.losses {
                    for &pe in &self.positional_encoding {
                        for &backbone in &self.backbones {
                            out.push(AblationCell {
                                input,
                                scales: scales.clone(),
                                loss,
                                positional_encoding: pe,
                                backbone,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let empty = self.inputs.is_empty()
            || self.scales.is_empty()
            || self.losses.is_empty()
            || self.positional_encoding.is_empty()
            || self.backbones.is_empty();
        if empty {
            return Err(Error::InvalidConfig("every ablation axis needs a value".into()));
        }
        if self.train_stride == 0 {
            return Err(Error::InvalidConfig("train_stride must be positive".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, cell: &AblationCell, data: &LtvDataset) -> Result<ModelConfig> {
        let mut cfg = self.template.clone();
        cfg.spec = WindowSpec::new(self.m, self.n, cell.input.k(), 1)?;
        cfg.scales = cell.scales.clone();
        cfg.backbone = cell.backbone;
        cfg.positional_encoding = cell.positional_encoding;
        cfg.covariates = if self.covariates {
            CovariateConfig::full(data.channels())
        } else {
            CovariateConfig::none()
        };
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self, cell: &AblationCell) -> TrainConfig {
        TrainConfig {
            loss_kind: cell.loss,
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

fn thin(windows: &[TrapezoidWindow], idx: &[usize], stride: usize) -> Vec<TrapezoidWindow> {
    let mut out = Vec::new();
    let mut run = 0;
    let mut last = None;
    for &i in idx {
        let w = &windows[i];
        if last != Some(&w.channel) {
            run = 0;
            last = Some(&w.channel);
        }
        if run % stride == 0 {
            out.push(w.clone());
        }
        run += 1;
    }
    out
}

pub fn fingerprint(model: &ModelConfig, train: &TrainConfig) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(model).expect("config serialises"));
    h.update(serde_json::to_vec(train).expect("config serialises"));
    hex::encode(h.finalize())[..16].to_string()
}

/// A model fitted before a temporal cut and scored on the cohorts after it.
#[derive(Clone, Debug)]
pub struct HoldoutRun {
    pub model: MtFusionNet,
    pub training: TrainReport,
    pub records: Vec<PredictionRecord>,
    pub report: EvalReport,
    pub split: TemporalSplit,
}

/// Fits on windows whose targets end before each channel's cut (keeping
/// every `stride`-th per channel) and scores the newest column of every
/// held-out window.
pub fn fit_holdout(
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    data: &LtvDataset,
    test_fraction: f64,
    stride: usize,
) -> Result<HoldoutRun> {
    if stride == 0 {
        return Err(Error::InvalidConfig("train_stride must be positive".into()));
    }
    let spec = mcfg.spec;
    let split = TemporalSplit::from_dataset(data, spec.m, spec.n, test_fraction)?;
    let windows = enumerate_windows(data, spec, true).windows;
    let (fit, test) = split.partition(&windows);
    if test.is_empty() {
        return Err(Error::EmptyDataset("no held-out windows".into()));
    }
    let fit = thin(&windows, &fit, stride);
    let test: Vec<TrapezoidWindow> = test.into_iter().map(|i| windows[i].clone()).collect();
    let model = MtFusionNet::new(mcfg.clone())?;
    let (model, training) = train(model, &fit, data.calendar(), tcfg)?;
    let records = predict_records(&model, &test, data.calendar())?;
    let report = EvalReport::from_records(&records, spec.m + spec.n, fingerprint(mcfg, tcfg))?;
    Ok(HoldoutRun {
        model,
        training,
        records,
        report,
        split,
    })
}

/// Trains and scores one cell on the grid's shared split.
pub fn run_cell(grid: &AblationGrid, cell: &AblationCell, data: &LtvDataset) -> Result<AblationRow> {
    let mcfg = grid.model_config(cell, data)?;
    let tcfg = grid.train_config(cell);
    let run = fit_holdout(&mcfg, &tcfg, data, grid.test_fraction, grid.train_stride)?;
    Ok(AblationRow {
        cell: cell.clone(),
        report: run.report,
        training: run.training,
    })
}

pub fn run_ablation(grid: &AblationGrid, data: &LtvDataset) -> Result<AblationTable> {
    grid.validate()?;
    let rows = grid
        .cells()
        .iter()
        .map(|cell| run_cell(grid, cell, data))
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { rows })
}

impl AblationTable {
    /// Aligned plaintext, metrics in percent.
    pub fn render(&self) -> String {
        let header = ["Input", "Scales", "Loss", "PE", "Backbone", "MAPE_p", "MAPE_a"];
        let mut rows: Vec<[String; 7]> = vec![header.map(String::from)];
        for r in &self.rows {
            let c = &r.cell;
            let scales: Vec<String> = c.scales.as_slice().iter().map(|s| s.to_string()).collect();
            rows.push([
                c.input.to_string(),
                format!("[{}]", scales.join(",")),
                c.loss.to_string(),
                if c.positional_encoding { "w" } else { "w/o" }.to_string(),
                c.backbone.to_string(),
                format!("{:.2}%", 100.0 * r.report.mape_p),
                format!("{:.2}%", 100.0 * r.report.mape_a),
            ]);
        }
        let widths: Vec<usize> = (0..7).map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (s, w))| if j >= 5 { format!("{s:>w$}") } else { format!("{s:<w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }
}
