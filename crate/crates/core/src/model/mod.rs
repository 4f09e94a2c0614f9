//! MT-FusionNet: robust scaling, `d + 1` smoothing towers with independent
//! backbones, positional encoding, time-axis concatenation and an FFN fusion
//! head, followed by the inverse scaling.

pub mod artifact;
pub mod backbone;
pub mod covariates;
pub mod layers;
pub mod positional;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backbone::{BackboneHparams, BackboneKind, BackboneParams, MixerBlock, TowerDims, TowerParams};
pub use covariates::{CovariateBundle, CovariateConfig};
pub use layers::Activation;
pub use positional::positional_encoding;

use crate::error::{Error, Result};
use crate::preprocess::{moving_average, robust_scale_columns, scale_columns, unscale_columns, RobustScaleParams, SmoothScales};
use crate::trapezoid::{TrapezoidWindow, WindowSpec};
use backbone::{tower_backward, tower_forward, TowerCache};
use layers::{affine, affine_param_grads, apply_mask, init_uniform, maybe_mask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub spec: WindowSpec,
    pub scales: SmoothScales,
    pub backbone: BackboneKind,
    #[serde(default)]
    pub backbone_hparams: BackboneHparams,
    #[serde(default)]
    pub covariates: CovariateConfig,
    /// Hidden width of the fusion head; defaults to `n`.
    pub fusion_hidden: usize,
    #[serde(default = "default_true")]
    pub positional_encoding: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    /// Mixer backbone, scales `[1, 3, 7, 14]`, no covariates.
    pub fn new(spec: WindowSpec) -> Self {
        ModelConfig {
            spec,
            scales: SmoothScales::default(),
            backbone: BackboneKind::Mixer,
            backbone_hparams: BackboneHparams::default(),
            covariates: CovariateConfig::none(),
            fusion_hidden: spec.n,
            positional_encoding: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let l = self.spec.input_len();
        if let Some(&w) = self.scales.as_slice().iter().find(|&&w| w > l) {
            return Err(Error::ScaleTooLarge { scale: w, len: l });
        }
        let hp = &self.backbone_hparams;
        if !(0.0..1.0).contains(&hp.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} outside [0, 1)", hp.dropout)));
        }
        if self.fusion_hidden == 0 {
            return Err(Error::InvalidConfig("fusion_hidden must be ≥ 1".into()));
        }
        match self.backbone {
            BackboneKind::Mixer if hp.hidden == 0 => {
                return Err(Error::InvalidConfig("mixer hidden width must be ≥ 1".into()))
            }
            BackboneKind::Dlinear if hp.trend_kernel == 0 || hp.trend_kernel > l => {
                return Err(Error::ScaleTooLarge {
                    scale: hp.trend_kernel,
                    len: l,
                })
            }
            _ => {}
        }
        Ok(())
    }

    pub fn tower_dims(&self) -> TowerDims {
        let (c_sta, c_dyn) = self.covariates.widths();
        TowerDims {
            l: self.spec.input_len(),
            n: self.spec.n,
            k: self.spec.k,
            c_sta,
            c_dyn,
        }
    }

    pub fn towers(&self) -> usize {
        self.scales.towers()
    }
}

/// Fusion head applied per column: `(d+1)·n → hidden → n`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionParams {
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    pub towers: Vec<TowerParams>,
    pub fusion: FusionParams,
}

impl NetParams {
    /// Named tensors in a fixed order shared with [`NetParams::tensors_mut`].
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for (q, t) in self.towers.iter().enumerate() {
            out.extend(t.tensors().into_iter().map(|(name, a)| (format!("tower{q}.{name}"), a)));
        }
        out.push(("fusion.w1".into(), &self.fusion.w1));
        out.push(("fusion.b1".into(), &self.fusion.b1));
        out.push(("fusion.w2".into(), &self.fusion.w2));
        out.push(("fusion.b2".into(), &self.fusion.b2));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::new();
        for t in self.towers.iter_mut() {
            out.extend(t.tensors_mut());
        }
        out.push(&mut self.fusion.w1);
        out.push(&mut self.fusion.b1);
        out.push(&mut self.fusion.w2);
        out.push(&mut self.fusion.b2);
        out
    }

    pub fn zeros_like(&self) -> NetParams {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// `self += alpha · other`.
    pub fn add_scaled(&mut self, other: &NetParams, alpha: f64) {
        let src: Vec<&Array2<f64>> = other.tensors().into_iter().map(|(_, a)| a).collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            dst.scaled_add(alpha, src);
        }
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|(_, a)| a.len()).sum()
    }
}

/// A window after robust scaling, ready for the network.
#[derive(Clone, Debug)]
pub struct ScaledWindow {
    pub input: Array2<f64>,
    pub target: Option<Array2<f64>>,
    pub params: Vec<RobustScaleParams>,
}

impl ScaledWindow {
    /// Per-column scaling over each column's observed rows only.
    pub fn from_window(window: &TrapezoidWindow) -> Result<Self> {
        let spec = window.spec;
        let valid_from: Vec<usize> = (0..spec.k).map(|j| spec.zero_prefix(j)).collect();
        let (input, params) = robust_scale_columns(window.input.view(), &valid_from)?;
        let target = window.target.as_ref().map(|t| scale_columns(t.view(), &params));
        Ok(ScaledWindow {
            input,
            target,
            params,
        })
    }
}

pub(crate) struct ForwardCache {
    towers: Vec<TowerCache>,
    stacked: Array2<f64>,
    pre_hidden: Array2<f64>,
    hidden: Array2<f64>,
    mask: Option<Array2<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MtFusionNet {
    config: ModelConfig,
    params: NetParams,
}

impl MtFusionNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let dims = config.tower_dims();
        let towers = (0..config.towers())
            .map(|_| TowerParams::init(config.backbone, &config.backbone_hparams, dims, &mut rng))
            .collect();
        let stacked = config.towers() * dims.n;
        let h = config.fusion_hidden;
        let fusion = FusionParams {
            w1: init_uniform((h, stacked), stacked, &mut rng),
            b1: init_uniform((h, 1), stacked, &mut rng),
            w2: init_uniform((dims.n, h), h, &mut rng),
            b2: init_uniform((dims.n, 1), h, &mut rng),
        };
        Ok(MtFusionNet {
            config,
            params: NetParams { towers, fusion },
        })
    }

    /// Reassembles a model from stored parameters, checking every shape.
    pub fn from_parts(config: ModelConfig, params: NetParams) -> Result<Self> {
        let reference = MtFusionNet::new(config.clone())?;
        let want = reference.params.tensors();
        let got = params.tensors();
        if want.len() != got.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} tensors, got {}",
                want.len(),
                got.len()
            )));
        }
        for ((wn, wa), (gn, ga)) in want.iter().zip(&got) {
            if wn != gn || wa.dim() != ga.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {gn} {:?} does not match {wn} {:?}",
                    ga.dim(),
                    wa.dim()
                )));
            }
        }
        Ok(MtFusionNet { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &NetParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut NetParams {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// SHA-256 over config and every tensor's name, shape and bytes.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config).expect("config serialises"));
        for (name, a) in self.params.tensors() {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            h.update((a.nrows() as u64).to_le_bytes());
            h.update((a.ncols() as u64).to_le_bytes());
            for v in a.iter() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn check_input(&self, input: ArrayView2<'_, f64>, cov: &CovariateBundle) -> Result<()> {
        let dims = self.config.tower_dims();
        if input.dim() != (dims.l, dims.k) {
            return Err(Error::ShapeMismatch(format!(
                "window input is {:?}, model expects ({}, {})",
                input.dim(),
                dims.l,
                dims.k
            )));
        }
        cov.check(dims.l, dims.n, dims.c_sta, dims.c_dyn)
    }

    /// Smoothed tower inputs: scale 1 (identity) for tower 0, then each `w_q`.
    pub fn smoothed_inputs(&self, scaled_input: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
        self.config
            .scales
            .as_slice()
            .iter()
            .map(|&w| moving_average(scaled_input, w))
            .collect()
    }

    /// Raw tower outputs `P_q` (before positional encoding), inference mode.
    pub fn tower_outputs(&self, scaled_input: ArrayView2<'_, f64>, cov: &CovariateBundle) -> Result<Vec<Array2<f64>>> {
        self.check_input(scaled_input, cov)?;
        let hp = &self.config.backbone_hparams;
        self.smoothed_inputs(scaled_input)?
            .iter()
            .zip(&self.params.towers)
            .map(|(x, tp)| tower_forward(tp, hp, x, cov, None).map(|(o, _)| o))
            .collect()
    }

    /// Scaled-space forward pass. Dropout is active iff `rng` is given.
    pub(crate) fn forward_scaled_cached(
        &self,
        scaled_input: ArrayView2<'_, f64>,
        cov: &CovariateBundle,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(scaled_input, cov)?;
        let hp = &self.config.backbone_hparams;
        let dims = self.config.tower_dims();
        let pe = self
            .config
            .positional_encoding
            .then(|| positional_encoding(dims.n, dims.k));

        let mut outputs = Vec::with_capacity(self.config.towers());
        let mut caches = Vec::with_capacity(self.config.towers());
        for (x, tp) in self.smoothed_inputs(scaled_input)?.iter().zip(&self.params.towers) {
            let (mut p, cache) = tower_forward(tp, hp, x, cov, rng.as_deref_mut())?;
            if let Some(pe) = &pe {
                p += pe;
            }
            outputs.push(p);
            caches.push(cache);
        }
        let views: Vec<_> = outputs.iter().map(|o| o.view()).collect();
        let stacked = concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;

        let f = &self.params.fusion;
        let pre_hidden = affine(&f.w1, &f.b1, stacked.view());
        let mut hidden = hp.activation.forward(&pre_hidden);
        let mask = maybe_mask(hidden.dim(), hp.dropout, rng);
        apply_mask(&mut hidden, mask.as_ref());
        let out = affine(&f.w2, &f.b2, hidden.view());
        Ok((
            out,
            ForwardCache {
                towers: caches,
                stacked,
                pre_hidden,
                hidden,
                mask,
            },
        ))
    }

    pub fn forward_scaled(
        &self,
        scaled_input: ArrayView2<'_, f64>,
        cov: &CovariateBundle,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Array2<f64>> {
        self.forward_scaled_cached(scaled_input, cov, rng).map(|(o, _)| o)
    }

    /// Gradients of a scalar loss w.r.t. every parameter, given `d_out`, the
    /// loss gradient w.r.t. the scaled `n × k` output.
    pub(crate) fn backward(&self, cache: &ForwardCache, cov: &CovariateBundle, d_out: &Array2<f64>) -> NetParams {
        let hp = &self.config.backbone_hparams;
        let f = &self.params.fusion;
        let (w2, b2) = affine_param_grads(d_out, cache.hidden.view());
        let mut d_hidden = f.w2.t().dot(d_out);
        apply_mask(&mut d_hidden, cache.mask.as_ref());
        let d_pre = hp.activation.backward(&cache.pre_hidden, &d_hidden);
        let (w1, b1) = affine_param_grads(&d_pre, cache.stacked.view());
        let d_stacked = f.w1.t().dot(&d_pre);

        let n = self.config.spec.n;
        let towers = self
            .params
            .towers
            .iter()
            .zip(&cache.towers)
            .enumerate()
            .map(|(q, (tp, tc))| {
                let d_p = d_stacked.slice(s![q * n..(q + 1) * n, ..]).to_owned();
                tower_backward(tp, hp, tc, cov, &d_p)
            })
            .collect();
        NetParams {
            towers,
            fusion: FusionParams { w1, b1, w2, b2 },
        }
    }

    /// Prediction in original units: robust scale → towers → fusion →
    /// inverse scale. Dropout is active iff `rng` is given.
    pub fn forward(
        &self,
        window: &TrapezoidWindow,
        cov: &CovariateBundle,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Array2<f64>> {
        if window.spec != self.config.spec {
            return Err(Error::ShapeMismatch(format!(
                "window spec {:?} differs from model spec {:?}",
                window.spec, self.config.spec
            )));
        }
        let scaled = ScaledWindow::from_window(window)?;
        let out = self.forward_scaled(scaled.input.view(), cov, rng)?;
        Ok(unscale_columns(out.view(), &scaled.params))
    }
}
