//! Training loops for the joint model, the baselines and the frozen swap.
//!
//! Each batch runs one forward pass per sample, accumulates gradients for
//! every trainable network, and then applies one Adam step per network.
//! Batches are drawn from a permutation seeded by `(seed, epoch)`, and the
//! parameters with the lowest validation RMSE are returned.

pub mod config;
pub mod log;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{TrainConfig, TrainMode};
pub use log::{EpochLog, TrainLog, LOG_HEADER};

use crate::data::{check_disjoint_subjects, Dataset, DatasetSplit, TrialRecord, WindowedExample};
use crate::error::{Error, Result};
use crate::model::baseline::BaselineNet;
use crate::model::gmf::{GmfNets, DECODER, ESTIMATOR, GENERATOR};
use crate::model::{Architecture, BaselineModel, GmfModel, Model, ModelFamily, Normalization, FRAME_DIM};
use crate::nn::{AdamState, GradientSet, ParamSet};

/// Training and validation windows.
#[derive(Debug, Clone)]
pub struct TrainData<'a> {
    pub train: Vec<WindowedExample<'a>>,
    pub validation: Vec<WindowedExample<'a>>,
}

impl<'a> TrainData<'a> {
    pub fn from_split(dataset: &'a Dataset, split: &DatasetSplit, train_stride: usize, val_stride: usize) -> Result<Self> {
        let data = TrainData {
            train: dataset.windows(&split.train, train_stride)?,
            validation: dataset.windows(&split.validation, val_stride)?,
        };
        let test = dataset.windows(&split.test, usize::MAX)?;
        check_disjoint_subjects(&data.train, &test)?;
        check_disjoint_subjects(&data.validation, &test)?;
        Ok(data)
    }

    fn check(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::Config("the training split has no windows".into()));
        }
        if self.validation.is_empty() {
            return Err(Error::Config("the validation split has no windows".into()));
        }
        Ok(())
    }

    /// Statistics over every frame and label of the training trials.
    pub fn fit_normalization(&self) -> Normalization {
        let mut trials: Vec<&TrialRecord> = Vec::new();
        for w in &self.train {
            if !trials.iter().any(|t| std::ptr::eq(*t, w.trial)) {
                trials.push(w.trial);
            }
        }
        let bodies: Vec<_> = self.train.iter().map(|w| w.body).collect();
        Normalization::fit(
            trials.iter().flat_map(|t| t.frames.iter()),
            bodies.iter().copied(),
            trials.iter().flat_map(|t| t.moment.iter().copied()),
        )
    }
}

/// A window with everything the networks consume already normalized.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub x: Vec<[f64; FRAME_DIM]>,
    pub body: [f64; 2],
    pub moment_norm: f64,
    pub moment: f64,
}

fn prepare(examples: &[WindowedExample<'_>], norm: &Normalization) -> Vec<Prepared> {
    examples
        .iter()
        .map(|w| Prepared {
            x: w.window().frames().iter().map(|f| norm.frame(f)).collect(),
            body: norm.body(&w.body),
            moment_norm: norm.moment.apply(w.label()),
            moment: w.label(),
        })
        .collect()
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

fn divergence(cfg: &TrainConfig, epoch: usize, batch: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss > cfg.divergence_limit {
        return Err(Error::Diverged {
            epoch,
            batch,
            detail: format!("batch loss {loss} (limit {})", cfg.divergence_limit),
        });
    }
    Ok(())
}

/// Parameters of the three networks, each with its own optimizer.
struct JointParams {
    generator: ParamSet,
    estimator: ParamSet,
    decoder: ParamSet,
}

impl JointParams {
    fn split(model: &GmfModel) -> Self {
        JointParams {
            generator: model.network_params(GENERATOR),
            estimator: model.network_params(ESTIMATOR),
            decoder: model.network_params(DECODER),
        }
    }

    fn merged(&self) -> ParamSet {
        let mut p = self.generator.clone();
        p.extend(self.estimator.clone());
        p.extend(self.decoder.clone());
        p
    }
}

/// Per-batch sums and gradients of the joint loss.
pub(crate) struct JointBatch {
    pub l1_sum: f64,
    pub l2_sum: f64,
    pub pred_sq_sum: f64,
    pub generator: GradientSet,
    pub estimator: GradientSet,
    pub decoder: GradientSet,
}

/// Gradients of `w1·L1 + w2·L2` for one batch, where
/// `L1 = mean (E(x) − G(q, m))²` and `L2 = mean (R(q, G(q, m)) − m)²`.
/// The generator receives both terms; with `frozen` only the estimator does.
fn joint_batch(
    nets: &GmfNets,
    p: &JointParams,
    batch: &[&Prepared],
    w1: f64,
    w2: f64,
    frozen: bool,
) -> Result<JointBatch> {
    let mut out = JointBatch {
        l1_sum: 0.0,
        l2_sum: 0.0,
        pred_sq_sum: 0.0,
        generator: p.generator.zeros_like(),
        estimator: p.estimator.zeros_like(),
        decoder: p.decoder.zeros_like(),
    };
    let scale = 2.0 / batch.len() as f64;
    for s in batch {
        let [qm, qh] = s.body;
        let (g, gen_cache) = nets.generator.forward(&p.generator, &[qm, qh, s.moment_norm])?;
        let g = g[0];
        let (g_hat, est_cache) = nets.estimator.forward(&p.estimator, &s.x)?;
        let (decoded, dec_cache) = nets.decoder.forward(&p.decoder, &[qm, qh, g])?;
        let decoded = decoded[0];
        let pred = nets.decoder.predict(&p.decoder, &[qm, qh, g_hat])?[0];

        let e1 = g_hat - g;
        let e2 = decoded - s.moment;
        out.l1_sum += e1 * e1;
        out.l2_sum += e2 * e2;
        out.pred_sq_sum += (pred - s.moment).powi(2);

        nets.estimator
            .backward(&p.estimator, &est_cache, w1 * scale * e1, &mut out.estimator)?;
        if !frozen {
            let dx = nets
                .decoder
                .backward(&p.decoder, &dec_cache, &[w2 * scale * e2], &mut out.decoder)?;
            let dg = -w1 * scale * e1 + dx[2];
            nets.generator.backward(&p.generator, &gen_cache, &[dg], &mut out.generator)?;
        }
    }
    Ok(out)
}

/// Value and full parameter gradient of `w1·L1 + w2·L2` over `examples`,
/// evaluated at the model's current parameters. Training uses the same
/// computation per batch; this entry point exists for gradient checking.
pub fn joint_gradient(model: &GmfModel, examples: &[WindowedExample<'_>], w1: f64, w2: f64) -> Result<(f64, GradientSet)> {
    if examples.is_empty() {
        return Err(Error::usage("joint_gradient", "no examples"));
    }
    let prepared = prepare(examples, model.norm());
    let batch: Vec<&Prepared> = prepared.iter().collect();
    let p = JointParams::split(model);
    let r = joint_batch(model.nets(), &p, &batch, w1, w2, false)?;
    let n = batch.len() as f64;
    let mut grads = r.generator;
    grads.extend(r.estimator);
    grads.extend(r.decoder);
    Ok((w1 * r.l1_sum / n + w2 * r.l2_sum / n, grads))
}

fn gmf_val_rmse(nets: &GmfNets, p: &JointParams, val: &[Prepared]) -> Result<f64> {
    let mut sq = 0.0;
    for s in val {
        let g_hat = nets.estimator.predict(&p.estimator, &s.x)?;
        let pred = nets.decoder.predict(&p.decoder, &[s.body[0], s.body[1], g_hat])?[0];
        sq += (pred - s.moment).powi(2);
    }
    Ok((sq / val.len() as f64).sqrt())
}

fn run_gmf(model: GmfModel, data: &TrainData<'_>, cfg: &TrainConfig, frozen: bool) -> Result<(GmfModel, TrainLog)> {
    data.check()?;
    let nets = model.nets().clone();
    let train = prepare(&data.train, model.norm());
    let val = prepare(&data.validation, model.norm());
    let mut p = JointParams::split(&model);
    let mut opt_g = AdamState::new(&p.generator, cfg.adam());
    let mut opt_e = AdamState::new(&p.estimator, cfg.adam());
    let mut opt_r = AdamState::new(&p.decoder, cfg.adam());

    let mut log = TrainLog::default();
    let mut best: Option<ParamSet> = None;
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let order = epoch_order(train.len(), cfg.seed, epoch);
        let (mut l1, mut l2, mut pred_sq) = (0.0, 0.0, 0.0);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &train[i]).collect();
            let r = joint_batch(&nets, &p, &batch, cfg.w1, cfg.w2, frozen)?;
            let n = batch.len() as f64;
            divergence(cfg, epoch, b, cfg.w1 * r.l1_sum / n + cfg.w2 * r.l2_sum / n)?;
            opt_e.step(&mut p.estimator, &r.estimator)?;
            if !frozen {
                opt_g.step(&mut p.generator, &r.generator)?;
                opt_r.step(&mut p.decoder, &r.decoder)?;
            }
            l1 += r.l1_sum;
            l2 += r.l2_sum;
            pred_sq += r.pred_sq_sum;
        }
        let n = train.len() as f64;
        let (l1, l2) = (l1 / n, l2 / n);
        let val_rmse = gmf_val_rmse(&nets, &p, &val)?;
        log.push(EpochLog {
            epoch,
            l1,
            l2,
            total: cfg.w1 * l1 + cfg.w2 * l2,
            train_rmse: (pred_sq / n).sqrt(),
            val_rmse,
            seconds: start.elapsed().as_secs_f64(),
        });
        if log.best_val_rmse.is_none_or(|b| val_rmse < b) {
            log.best_val_rmse = Some(val_rmse);
            log.best_epoch = Some(epoch);
            best = Some(p.merged());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if epoch % 100 == 0 || epoch == cfg.epochs {
            ::log::info!("epoch {epoch}: L1 {l1:.6} L2 {l2:.6} val RMSE {val_rmse:.5}");
        }
        if cfg.patience.is_some_and(|pat| since_best >= pat) {
            ::log::info!("no validation improvement for {since_best} epochs, stopping at epoch {epoch}");
            break;
        }
    }
    let params = best.unwrap_or_else(|| p.merged());
    let model = GmfModel::from_parts(model.arch().clone(), params, *model.norm())?;
    Ok((model, log))
}

/// Trains generator, estimator and decoder together from a seeded initialization.
pub fn train_joint(data: &TrainData<'_>, cfg: &TrainConfig) -> Result<(GmfModel, TrainLog)> {
    cfg.validate()?;
    data.check()?;
    let mut arch = Architecture::new(ModelFamily::Gmf, cfg.backbone);
    arch.tcn_channels = cfg.tcn_channels;
    let model = GmfModel::init(arch, data.fit_normalization(), cfg.seed)?;
    run_gmf(model, data, cfg, false)
}

/// Trains a fresh estimator of `new_backbone` against the frozen generator and
/// decoder of `pretrained`. Zero epochs return `pretrained` unchanged.
pub fn train_frozen_swap(
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    pretrained: &GmfModel,
    new_backbone: crate::model::BackboneKind,
) -> Result<(GmfModel, TrainLog)> {
    TrainConfig {
        mode: TrainMode::FrozenGmfSwap,
        ..cfg.clone()
    }
    .validate()?;
    if cfg.epochs == 0 {
        return Ok((pretrained.clone(), TrainLog::default()));
    }
    let model = pretrained.with_new_estimator(new_backbone, cfg.tcn_channels, cfg.seed)?;
    run_gmf(model, data, cfg, true)
}

fn baseline_val_rmse(net: &BaselineNet, params: &ParamSet, val: &[Prepared]) -> Result<f64> {
    let mut sq = 0.0;
    for s in val {
        sq += (net.predict(params, &s.x, s.body)? - s.moment).powi(2);
    }
    Ok((sq / val.len() as f64).sqrt())
}

/// Trains a direct-regression baseline on the squared moment error.
pub fn train_baseline(data: &TrainData<'_>, cfg: &TrainConfig, family: ModelFamily) -> Result<(BaselineModel, TrainLog)> {
    cfg.validate()?;
    data.check()?;
    let mut arch = Architecture::new(family, cfg.backbone);
    arch.tcn_channels = cfg.tcn_channels;
    let model = BaselineModel::init(arch, data.fit_normalization(), cfg.seed)?;
    let net = model.net().clone();
    let uses_q = model.uses_body_params();
    let mut train = prepare(&data.train, model.norm());
    let mut val = prepare(&data.validation, model.norm());
    if !uses_q {
        for s in train.iter_mut().chain(val.iter_mut()) {
            s.body = [0.0; 2];
        }
    }
    let mut params = model.params().clone();
    let mut opt = AdamState::new(&params, cfg.adam());

    let mut log = TrainLog::default();
    let mut best: Option<ParamSet> = None;
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let order = epoch_order(train.len(), cfg.seed, epoch);
        let mut sq = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let scale = 2.0 / chunk.len() as f64;
            let mut grads = params.zeros_like();
            let mut batch_sq = 0.0;
            for &i in chunk {
                let s = &train[i];
                let (y, cache) = net.forward(&params, &s.x, s.body)?;
                let e = y - s.moment;
                batch_sq += e * e;
                net.backward(&params, &cache, scale * e, &mut grads)?;
            }
            divergence(cfg, epoch, b, batch_sq / chunk.len() as f64)?;
            opt.step(&mut params, &grads)?;
            sq += batch_sq;
        }
        let l1 = sq / train.len() as f64;
        let val_rmse = baseline_val_rmse(&net, &params, &val)?;
        log.push(EpochLog {
            epoch,
            l1,
            l2: 0.0,
            total: l1,
            train_rmse: l1.sqrt(),
            val_rmse,
            seconds: start.elapsed().as_secs_f64(),
        });
        if log.best_val_rmse.is_none_or(|b| val_rmse < b) {
            log.best_val_rmse = Some(val_rmse);
            log.best_epoch = Some(epoch);
            best = Some(params.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if epoch % 100 == 0 || epoch == cfg.epochs {
            ::log::info!("epoch {epoch}: loss {l1:.6} val RMSE {val_rmse:.5}");
        }
        if cfg.patience.is_some_and(|pat| since_best >= pat) {
            break;
        }
    }
    let model = BaselineModel::from_parts(model.arch().clone(), best.unwrap_or(params), *model.norm())?;
    Ok((model, log))
}

/// Dispatches on `cfg.mode`. Frozen-swap mode needs `pretrained`.
pub fn train(data: &TrainData<'_>, cfg: &TrainConfig, pretrained: Option<&GmfModel>) -> Result<(Model, TrainLog)> {
    match cfg.mode {
        TrainMode::Joint => train_joint(data, cfg).map(|(m, l)| (m.into(), l)),
        TrainMode::BaselineNoQ => train_baseline(data, cfg, ModelFamily::BaselineNoQ).map(|(m, l)| (m.into(), l)),
        TrainMode::BaselineFusion => {
            train_baseline(data, cfg, ModelFamily::BaselineFusion).map(|(m, l)| (m.into(), l))
        }
        TrainMode::FrozenGmfSwap => {
            let pre = pretrained
                .ok_or_else(|| Error::Config("frozen_gmf_swap mode needs a pretrained GMF checkpoint".into()))?;
            train_frozen_swap(data, cfg, pre, cfg.backbone).map(|(m, l)| (m.into(), l))
        }
    }
}

/// `cfg.repetitions` runs with seeds `seed, seed + 1, …`.
pub fn train_repetitions(
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    pretrained: Option<&GmfModel>,
) -> Result<Vec<(Model, TrainLog)>> {
    (0..cfg.repetitions as u64)
        .map(|r| {
            let c = TrainConfig {
                seed: cfg.seed.wrapping_add(r),
                ..cfg.clone()
            };
            train(data, &c, pretrained)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_corpus, PipelineConfig, SplitSpec, SynthConfig};
    use crate::model::BackboneKind;

    fn dataset() -> Dataset {
        let (raw, subjects) = synth_corpus(&SynthConfig {
            n_subjects: 3,
            speeds: vec![0.8, 1.4],
            duration_s: 1.2,
            ..SynthConfig::default()
        })
        .unwrap();
        Dataset::from_raw(raw, subjects, &PipelineConfig::default()).unwrap()
    }

    fn split(ds: &Dataset) -> DatasetSplit {
        let spec = SplitSpec {
            train: vec!["S01".into(), "S02".into()],
            test: vec!["S03".into()],
            validation_fraction: 0.25,
            seed: 0,
        };
        ds.split(&spec).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 1,
            batch_size: 1024,
            train_stride: 20,
            val_stride: 40,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn one_epoch_logs_loss_identity() {
        let ds = dataset();
        let sp = split(&ds);
        let cfg = small_cfg();
        let data = TrainData::from_split(&ds, &sp, cfg.train_stride, cfg.val_stride).unwrap();
        let (_, log) = train_joint(&data, &cfg).unwrap();
        assert_eq!(log.len(), 1);
        let e = log.epochs[0];
        assert!((e.total - (cfg.w1 * e.l1 + cfg.w2 * e.l2)).abs() <= 1e-12);
    }

    #[test]
    fn gradient_flow_follows_loss_weights() {
        let ds = dataset();
        let sp = split(&ds);
        let data = TrainData::from_split(&ds, &sp, 30, 40).unwrap();
        let model = GmfModel::init(Architecture::gmf(), data.fit_normalization(), 1).unwrap();
        let prepared = prepare(&data.train, model.norm());
        let batch: Vec<&Prepared> = prepared.iter().collect();
        let p = JointParams::split(&model);
        let norm = |g: &GradientSet| g.iter().map(|(_, p)| p.as_slice().iter().map(|v| v.abs()).sum::<f64>()).sum::<f64>();

        let no_l2 = joint_batch(model.nets(), &p, &batch, 1.0, 0.0, false).unwrap();
        assert_eq!(norm(&no_l2.decoder), 0.0);
        assert!(norm(&no_l2.estimator) > 0.0 && norm(&no_l2.generator) > 0.0);

        let no_l1 = joint_batch(model.nets(), &p, &batch, 0.0, 1.0, false).unwrap();
        assert_eq!(norm(&no_l1.estimator), 0.0);
        assert!(norm(&no_l1.decoder) > 0.0 && norm(&no_l1.generator) > 0.0);
    }

    #[test]
    fn frozen_swap_keeps_generator_and_decoder() {
        let ds = dataset();
        let sp = split(&ds);
        let cfg = TrainConfig {
            epochs: 2,
            ..small_cfg()
        };
        let data = TrainData::from_split(&ds, &sp, cfg.train_stride, cfg.val_stride).unwrap();
        let (pre, _) = train_joint(&data, &cfg).unwrap();
        let (swapped, log) = train_frozen_swap(&data, &cfg, &pre, BackboneKind::Ffn).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(swapped.arch().backbone, BackboneKind::Ffn);
        for net in [GENERATOR, DECODER] {
            assert_eq!(swapped.network_params(net).to_le_bytes(), pre.network_params(net).to_le_bytes());
        }
        let zero = TrainConfig { epochs: 0, ..cfg };
        assert_eq!(train_frozen_swap(&data, &zero, &pre, BackboneKind::Ffn).unwrap().0, pre);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = dataset();
        let sp = split(&ds);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            ..small_cfg()
        };
        let data = TrainData::from_split(&ds, &sp, cfg.train_stride, cfg.val_stride).unwrap();
        let (a, la) = train_joint(&data, &cfg).unwrap();
        let (b, lb) = train_joint(&data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la.to_csv(false), lb.to_csv(false));
        let (c, _) = train_baseline(&data, &cfg, ModelFamily::BaselineFusion).unwrap();
        let (d, _) = train_baseline(&data, &cfg, ModelFamily::BaselineFusion).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn empty_validation_is_an_error() {
        let ds = dataset();
        let mut sp = split(&ds);
        sp.validation.clear();
        let data = TrainData::from_split(&ds, &sp, 20, 20).unwrap();
        assert!(train_joint(&data, &small_cfg()).is_err());
    }
}
