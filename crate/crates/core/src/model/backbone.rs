//! Per-tower backbones (linear, DLinear, TSMixer-style mixer) and the
//! covariate injection shared by all of them.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::covariates::CovariateBundle;
use super::layers::{affine, affine_param_grads, apply_mask, init_uniform, maybe_mask, row_sums, Activation};
use crate::error::{Error, Result};
use crate::preprocess::moving_average;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Linear,
    Dlinear,
    Mixer,
}

impl FromStr for BackboneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(BackboneKind::Linear),
            "dlinear" => Ok(BackboneKind::Dlinear),
            "mixer" | "tsmixer" => Ok(BackboneKind::Mixer),
            _ => Err(Error::UnknownBackbone(s.to_string())),
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackboneKind::Linear => "linear",
            BackboneKind::Dlinear => "dlinear",
            BackboneKind::Mixer => "mixer",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneHparams {
    /// Hidden width of the mixer's feature MLP.
    pub hidden: usize,
    /// Mixer block count.
    pub blocks: usize,
    pub dropout: f64,
    pub activation: Activation,
    /// DLinear trend kernel.
    pub trend_kernel: usize,
}

impl Default for BackboneHparams {
    fn default() -> Self {
        BackboneHparams {
            hidden: 32,
            blocks: 2,
            dropout: 0.1,
            activation: Activation::Gelu,
            trend_kernel: 7,
        }
    }
}

/// Shapes a tower is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TowerDims {
    pub l: usize,
    pub n: usize,
    pub k: usize,
    pub c_sta: usize,
    pub c_dyn: usize,
}

impl TowerDims {
    /// Mixer feature count: series plus past dynamic covariates.
    pub fn features(&self) -> usize {
        self.k + self.c_dyn
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixerBlock {
    pub time_w: Array2<f64>,
    pub time_b: Array2<f64>,
    pub feat_w1: Array2<f64>,
    pub feat_b1: Array2<f64>,
    pub feat_w2: Array2<f64>,
    pub feat_b2: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BackboneParams {
    Linear {
        w: Array2<f64>,
        b: Array2<f64>,
    },
    Dlinear {
        trend_w: Array2<f64>,
        trend_b: Array2<f64>,
        resid_w: Array2<f64>,
        resid_b: Array2<f64>,
    },
    Mixer {
        blocks: Vec<MixerBlock>,
        proj_w: Array2<f64>,
        proj_b: Array2<f64>,
    },
}

impl BackboneParams {
    pub fn kind(&self) -> BackboneKind {
        match self {
            BackboneParams::Linear { .. } => BackboneKind::Linear,
            BackboneParams::Dlinear { .. } => BackboneKind::Dlinear,
            BackboneParams::Mixer { .. } => BackboneKind::Mixer,
        }
    }
}

/// One tower's parameters: its backbone plus its covariate projections.
#[derive(Clone, Debug, PartialEq)]
pub struct TowerParams {
    pub backbone: BackboneParams,
    /// `n × C_sta`: static embedding, added to every column.
    pub static_w: Array2<f64>,
    /// `C_dyn × k`: maps future covariates at each horizon step onto the columns.
    pub future_w: Array2<f64>,
}

impl TowerParams {
    pub fn init(kind: BackboneKind, hp: &BackboneHparams, dims: TowerDims, rng: &mut ChaCha8Rng) -> Self {
        let TowerDims { l, n, k, c_sta, c_dyn } = dims;
        let backbone = match kind {
            BackboneKind::Linear => BackboneParams::Linear {
                w: init_uniform((n, l), l, rng),
                b: init_uniform((n, 1), l, rng),
            },
            BackboneKind::Dlinear => BackboneParams::Dlinear {
                trend_w: init_uniform((n, l), l, rng),
                trend_b: init_uniform((n, 1), l, rng),
                resid_w: init_uniform((n, l), l, rng),
                resid_b: init_uniform((n, 1), l, rng),
            },
            BackboneKind::Mixer => {
                let f = dims.features();
                let blocks = (0..hp.blocks)
                    .map(|_| MixerBlock {
                        time_w: init_uniform((l, l), l, rng),
                        time_b: init_uniform((l, 1), l, rng),
                        feat_w1: init_uniform((hp.hidden, f), f, rng),
                        feat_b1: init_uniform((hp.hidden, 1), f, rng),
                        feat_w2: init_uniform((f, hp.hidden), hp.hidden, rng),
                        feat_b2: init_uniform((f, 1), hp.hidden, rng),
                    })
                    .collect();
                BackboneParams::Mixer {
                    blocks,
                    proj_w: init_uniform((n, l), l, rng),
                    proj_b: init_uniform((n, 1), l, rng),
                }
            }
        };
        TowerParams {
            backbone,
            static_w: init_uniform((n, c_sta), c_sta, rng),
            future_w: init_uniform((c_dyn, k), c_dyn, rng),
        }
    }

    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out: Vec<(String, &Array2<f64>)> = Vec::new();
        match &self.backbone {
            BackboneParams::Linear { w, b } => {
                out.push(("linear.w".into(), w));
                out.push(("linear.b".into(), b));
            }
            BackboneParams::Dlinear {
                trend_w,
                trend_b,
                resid_w,
                resid_b,
            } => {
                out.push(("dlinear.trend_w".into(), trend_w));
                out.push(("dlinear.trend_b".into(), trend_b));
                out.push(("dlinear.resid_w".into(), resid_w));
                out.push(("dlinear.resid_b".into(), resid_b));
            }
            BackboneParams::Mixer {
                blocks,
                proj_w,
                proj_b,
            } => {
                for (i, blk) in blocks.iter().enumerate() {
                    out.push((format!("mixer.block{i}.time_w"), &blk.time_w));
                    out.push((format!("mixer.block{i}.time_b"), &blk.time_b));
                    out.push((format!("mixer.block{i}.feat_w1"), &blk.feat_w1));
                    out.push((format!("mixer.block{i}.feat_b1"), &blk.feat_b1));
                    out.push((format!("mixer.block{i}.feat_w2"), &blk.feat_w2));
                    out.push((format!("mixer.block{i}.feat_b2"), &blk.feat_b2));
                }
                out.push(("mixer.proj_w".into(), proj_w));
                out.push(("mixer.proj_b".into(), proj_b));
            }
        }
        out.push(("cov.static_w".into(), &self.static_w));
        out.push(("cov.future_w".into(), &self.future_w));
        out
    }

    /// Mutable views in the same order as [`TowerParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = Vec::new();
        match &mut self.backbone {
            BackboneParams::Linear { w, b } => {
                out.push(w);
                out.push(b);
            }
            BackboneParams::Dlinear {
                trend_w,
                trend_b,
                resid_w,
                resid_b,
            } => {
                out.push(trend_w);
                out.push(trend_b);
                out.push(resid_w);
                out.push(resid_b);
            }
            BackboneParams::Mixer {
                blocks,
                proj_w,
                proj_b,
            } => {
                for blk in blocks.iter_mut() {
                    out.push(&mut blk.time_w);
                    out.push(&mut blk.time_b);
                    out.push(&mut blk.feat_w1);
                    out.push(&mut blk.feat_b1);
                    out.push(&mut blk.feat_w2);
                    out.push(&mut blk.feat_b2);
                }
                out.push(proj_w);
                out.push(proj_b);
            }
        }
        out.push(&mut self.static_w);
        out.push(&mut self.future_w);
        out
    }
}

pub(crate) struct BlockCache {
    x_in: Array2<f64>,
    u: Array2<f64>,
    time_mask: Option<Array2<f64>>,
    x_mid: Array2<f64>,
    v: Array2<f64>,
    g: Array2<f64>,
    feat_mask: Option<Array2<f64>>,
}

pub(crate) enum BackboneCache {
    Linear { x: Array2<f64> },
    Dlinear { trend: Array2<f64>, resid: Array2<f64> },
    Mixer { blocks: Vec<BlockCache>, x_final: Array2<f64> },
}

pub(crate) struct TowerCache {
    backbone: BackboneCache,
    k: usize,
}

/// Runs one tower on a smoothed `l × k` input; returns `n × k`.
///
/// Past dynamic covariates join the mixer as extra feature columns; linear
/// and DLinear maps are column-independent, so only the static and future
/// covariate paths reach their outputs.
pub(crate) fn tower_forward(
    params: &TowerParams,
    hp: &BackboneHparams,
    smoothed: &Array2<f64>,
    cov: &CovariateBundle,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Array2<f64>, TowerCache)> {
    let k = smoothed.ncols();
    let act = hp.activation;
    let (mut out, cache) = match &params.backbone {
        BackboneParams::Linear { w, b } => {
            let out = affine(w, b, smoothed.view());
            (out, BackboneCache::Linear { x: smoothed.clone() })
        }
        BackboneParams::Dlinear {
            trend_w,
            trend_b,
            resid_w,
            resid_b,
        } => {
            let trend = moving_average(smoothed.view(), hp.trend_kernel)?;
            let resid = smoothed - &trend;
            let out = affine(trend_w, trend_b, trend.view()) + affine(resid_w, resid_b, resid.view());
            (out, BackboneCache::Dlinear { trend, resid })
        }
        BackboneParams::Mixer {
            blocks,
            proj_w,
            proj_b,
        } => {
            let mut x = concatenate(Axis(1), &[smoothed.view(), cov.dyn_past.view()])
                .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
            let mut caches = Vec::with_capacity(blocks.len());
            for blk in blocks {
                let u = affine(&blk.time_w, &blk.time_b, x.view());
                let mut a = act.forward(&u);
                let time_mask = maybe_mask(a.dim(), hp.dropout, rng.as_deref_mut());
                apply_mask(&mut a, time_mask.as_ref());
                let x_mid = &x + &a;

                let v = affine(&blk.feat_w1, &blk.feat_b1, x_mid.t());
                let mut g = act.forward(&v);
                let feat_mask = maybe_mask(g.dim(), hp.dropout, rng.as_deref_mut());
                apply_mask(&mut g, feat_mask.as_ref());
                let q = affine(&blk.feat_w2, &blk.feat_b2, g.view());
                let x_out = &x_mid + &q.t();

                caches.push(BlockCache {
                    x_in: x,
                    u,
                    time_mask,
                    x_mid,
                    v,
                    g,
                    feat_mask,
                });
                x = x_out;
            }
            let full = affine(proj_w, proj_b, x.view());
            let out = full.slice(s![.., ..k]).to_owned();
            (
                out,
                BackboneCache::Mixer {
                    blocks: caches,
                    x_final: x,
                },
            )
        }
    };

    if params.static_w.ncols() > 0 {
        out += &params.static_w.dot(&cov.static_cov);
    }
    if params.future_w.nrows() > 0 {
        out += &cov.dyn_future.dot(&params.future_w);
    }
    Ok((out, TowerCache { backbone: cache, k }))
}

/// Parameter gradients of one tower given `d_out` (`n × k`).
pub(crate) fn tower_backward(
    params: &TowerParams,
    hp: &BackboneHparams,
    cache: &TowerCache,
    cov: &CovariateBundle,
    d_out: &Array2<f64>,
) -> TowerParams {
    let act = hp.activation;
    let backbone = match (&params.backbone, &cache.backbone) {
        (BackboneParams::Linear { .. }, BackboneCache::Linear { x }) => {
            let (w, b) = affine_param_grads(d_out, x.view());
            BackboneParams::Linear { w, b }
        }
        (BackboneParams::Dlinear { .. }, BackboneCache::Dlinear { trend, resid }) => {
            let (trend_w, trend_b) = affine_param_grads(d_out, trend.view());
            let (resid_w, resid_b) = affine_param_grads(d_out, resid.view());
            BackboneParams::Dlinear {
                trend_w,
                trend_b,
                resid_w,
                resid_b,
            }
        }
        (
            BackboneParams::Mixer { blocks, proj_w, .. },
            BackboneCache::Mixer {
                blocks: caches,
                x_final,
            },
        ) => {
            let (n, f) = (proj_w.nrows(), x_final.ncols());
            let mut d_full = Array2::zeros((n, f));
            d_full.slice_mut(s![.., ..cache.k]).assign(d_out);
            let (g_proj_w, g_proj_b) = affine_param_grads(&d_full, x_final.view());
            let mut dx = proj_w.t().dot(&d_full);

            let mut grads = Vec::with_capacity(blocks.len());
            for (blk, c) in blocks.iter().zip(caches).rev() {
                let dq = dx.t().to_owned();
                let (feat_w2, feat_b2) = affine_param_grads(&dq, c.g.view());
                let mut dg = blk.feat_w2.t().dot(&dq);
                apply_mask(&mut dg, c.feat_mask.as_ref());
                let dv = act.backward(&c.v, &dg);
                let (feat_w1, feat_b1) = affine_param_grads(&dv, c.x_mid.t());
                let dx_mid = &dx + &blk.feat_w1.t().dot(&dv).t();

                let mut da = dx_mid.clone();
                apply_mask(&mut da, c.time_mask.as_ref());
                let du = act.backward(&c.u, &da);
                let (time_w, time_b) = affine_param_grads(&du, c.x_in.view());
                dx = dx_mid + blk.time_w.t().dot(&du);

                grads.push(MixerBlock {
                    time_w,
                    time_b,
                    feat_w1,
                    feat_b1,
                    feat_w2,
                    feat_b2,
                });
            }
            grads.reverse();
            BackboneParams::Mixer {
                blocks: grads,
                proj_w: g_proj_w,
                proj_b: g_proj_b,
            }
        }
        _ => unreachable!("tower cache does not match its parameters"),
    };

    TowerParams {
        backbone,
        static_w: row_sums(d_out).dot(&cov.static_cov.t()),
        future_w: cov.dyn_future.t().dot(d_out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn dims() -> TowerDims {
        TowerDims {
            l: 6,
            n: 6,
            k: 3,
            c_sta: 0,
            c_dyn: 0,
        }
    }

    fn input() -> Array2<f64> {
        Array2::from_shape_fn((6, 3), |(p, j)| (p as f64 * 0.7 + j as f64).sin())
    }

    #[test]
    fn identity_linear_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tp = TowerParams::init(BackboneKind::Linear, &BackboneHparams::default(), dims(), &mut rng);
        tp.backbone = BackboneParams::Linear {
            w: Array2::eye(6),
            b: Array2::zeros((6, 1)),
        };
        let x = input();
        let cov = CovariateBundle::empty(6, 6);
        let (out, _) = tower_forward(&tp, &BackboneHparams::default(), &x, &cov, None).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn zeroed_mixer_blocks_reduce_to_projection() {
        let hp = BackboneHparams {
            dropout: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tp = TowerParams::init(BackboneKind::Mixer, &hp, dims(), &mut rng);
        let (proj_w, proj_b) = match &mut tp.backbone {
            BackboneParams::Mixer {
                blocks,
                proj_w,
                proj_b,
            } => {
                for blk in blocks.iter_mut() {
                    for t in [
                        &mut blk.time_w,
                        &mut blk.time_b,
                        &mut blk.feat_w1,
                        &mut blk.feat_b1,
                        &mut blk.feat_w2,
                        &mut blk.feat_b2,
                    ] {
                        t.fill(0.0);
                    }
                }
                (proj_w.clone(), proj_b.clone())
            }
            _ => unreachable!(),
        };
        let x = input();
        let cov = CovariateBundle::empty(6, 6);
        let (out, _) = tower_forward(&tp, &hp, &x, &cov, None).unwrap();
        let expect = proj_w.dot(&x) + &proj_b;
        assert!(out.iter().zip(expect.iter()).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn empty_covariates_contribute_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hp = BackboneHparams {
            trend_kernel: 3,
            ..Default::default()
        };
        let tp = TowerParams::init(BackboneKind::Dlinear, &hp, dims(), &mut rng);
        assert_eq!(tp.static_w.len() + tp.future_w.len(), 0);
        let x = input();
        let cov = CovariateBundle::empty(6, 6);
        let (out, _) = tower_forward(&tp, &hp, &x, &cov, None).unwrap();
        let BackboneParams::Dlinear { trend_w, trend_b, resid_w, resid_b } = &tp.backbone else {
            unreachable!()
        };
        let trend = moving_average(x.view(), 3).unwrap();
        let resid = &x - &trend;
        let expect = trend_w.dot(&trend) + trend_b + resid_w.dot(&resid) + resid_b;
        assert!(out.iter().zip(expect.iter()).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn unknown_backbone() {
        assert!(matches!("tide".parse::<BackboneKind>(), Err(Error::UnknownBackbone(_))));
        assert_eq!("TSMixer".parse::<BackboneKind>().unwrap(), BackboneKind::Mixer);
    }
}
