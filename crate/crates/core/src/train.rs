//! Minibatch sampling, RMSProp, and the two-phase training schedule:
//! supervised pre-initialization on the pairs alone, then joint training on
//! the blended objective with one paired batch and one independently drawn
//! unpaired batch pair per step.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::train_val_split;
use crate::error::{Error, Result};
use crate::kernel::{mmd_u2, mmd_u2_grad, KernelSpec};
use crate::loss::{alignment_loss, AlignmentMode, BlendConfig};
use crate::model::{backward, forward, ModelParams};
use crate::rng::{seeded, STREAM_EVAL, STREAM_PAIRED, STREAM_UNPAIRED};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub blend: BlendConfig,
    pub batch_paired: usize,
    pub batch_unpaired: usize,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    pub epochs_pretrain: usize,
    pub epochs_joint: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    /// When false, biases stay at their initial value.
    pub fit_bias: bool,
    /// Joint-phase early stop on the validation metric; 0 disables it.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            blend: BlendConfig::default(),
            batch_paired: 200,
            batch_unpaired: 200,
            learning_rate: 1e-3,
            rms_decay: 0.9,
            rms_epsilon: 1e-8,
            epochs_pretrain: 4000,
            epochs_joint: 250,
            seed: 0,
            validation_fraction: 0.1,
            fit_bias: true,
            early_stop_patience: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.blend.validate()?;
        if self.batch_paired == 0 {
            return Err(Error::invalid("batch_paired must be at least 1"));
        }
        if self.batch_unpaired < 2 {
            return Err(Error::invalid("batch_unpaired must be at least 2"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.rms_decay > 0.0 && self.rms_decay < 1.0) {
            return Err(Error::invalid("rms_decay must lie in (0, 1)"));
        }
        if !(self.rms_epsilon > 0.0) {
            return Err(Error::invalid("rms_epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Running mean of squared gradients, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsState {
    pub mean_square: ModelParams,
}

impl RmsState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            mean_square: params.zeros_like(),
        }
    }
}

/// `state ← ρ·state + (1-ρ)·g²`, then `θ ← θ - lr·g / √(state + ε)`.
pub fn rmsprop_step(params: &mut ModelParams, grads: &ModelParams, state: &mut RmsState, cfg: &TrainConfig) -> Result<()> {
    params.check_same_shape(grads)?;
    params.check_same_shape(&state.mean_square)?;
    let (rho, lr, eps) = (cfg.rms_decay, cfg.learning_rate, cfg.rms_epsilon);
    for ((p, g), s) in params.iter_mut().zip(grads.iter()).zip(state.mean_square.iter_mut()) {
        *s = rho * *s + (1.0 - rho) * g * g;
        *p -= lr * g / (*s + eps).sqrt();
    }
    Ok(())
}

/// Draws `size` row-aligned pairs without replacement (all pairs, shuffled,
/// when `size` exceeds the set).
pub fn sample_paired_batch<R: Rng + ?Sized>(
    xp: ArrayView2<f64>,
    yp: ArrayView2<f64>,
    size: usize,
    rng: &mut R,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if xp.nrows() != yp.nrows() {
        return Err(Error::DimensionMismatch {
            expected: xp.nrows(),
            got: yp.nrows(),
        });
    }
    let idx = index::sample(rng, xp.nrows(), size.min(xp.nrows())).into_vec();
    Ok((xp.select(Axis(0), &idx), yp.select(Axis(0), &idx)))
}

fn draw_rows<R: Rng + ?Sized>(pool: ArrayView2<f64>, size: usize, rng: &mut R) -> Array2<f64> {
    let n = pool.nrows();
    let idx: Vec<usize> = if size <= n {
        index::sample(rng, n, size).into_vec()
    } else {
        (0..size).map(|_| rng.random_range(0..n)).collect()
    };
    pool.select(Axis(0), &idx)
}

/// Independent draws from the two pools; a pool smaller than `size` is
/// sampled with replacement.
pub fn sample_unpaired_batches<R: Rng + ?Sized>(
    s: ArrayView2<f64>,
    t: ArrayView2<f64>,
    size: usize,
    rng: &mut R,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if size < 2 {
        return Err(Error::invalid("unpaired batches need at least 2 rows"));
    }
    if s.nrows() == 0 || t.nrows() == 0 {
        return Err(Error::invalid("unpaired pools must be nonempty"));
    }
    let sb = draw_rows(s, size, rng);
    let tb = draw_rows(t, size, rng);
    Ok((sb, tb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Joint,
}

/// End-of-epoch evaluation. Terms that the phase does not use are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub alignment_loss: Option<f64>,
    pub mmd_loss: Option<f64>,
    pub blended_loss: f64,
    pub validation_metric: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// CSV with columns epoch, alignment_loss, mmd_loss, blended_loss,
    /// validation_metric. Unevaluated values are left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "alignment_loss", "mmd_loss", "blended_loss", "validation_metric"])?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                fmt_opt(r.alignment_loss),
                fmt_opt(r.mmd_loss),
                r.blended_loss.to_string(),
                fmt_opt(r.validation_metric),
            ])?;
        }
        w.flush().map_err(|e| Error::io("writing history", e))
    }
}

/// Counters recorded while training.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainStats {
    pub pretrain_steps: usize,
    pub joint_steps: usize,
    pub mmd_gradient_evaluations: usize,
    /// Step index (0-based, over both phases) of the first MMD gradient.
    pub first_mmd_gradient_step: Option<usize>,
    /// Paired-set reads during the joint phase (batch draws and evaluations).
    pub joint_paired_accesses: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Parameters at the end of the supervised phase.
    pub pretrained: ModelParams,
    /// Validation MSE of `params`; `None` without a validation split.
    pub final_validation: Option<f64>,
    pub history: TrainHistory,
    pub stats: TrainStats,
}

/// Training inputs. Paired rows are row-aligned; the unpaired pools are
/// only used by the MMD term.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub paired_source: ArrayView2<'a, f64>,
    pub paired_target: ArrayView2<'a, f64>,
    pub unpaired_source: ArrayView2<'a, f64>,
    pub unpaired_target: ArrayView2<'a, f64>,
}

struct Pairs {
    source: Array2<f64>,
    target: Array2<f64>,
}

impl Pairs {
    fn len(&self) -> usize {
        self.source.nrows()
    }
}

fn split_pairs(xp: ArrayView2<f64>, yp: ArrayView2<f64>, cfg: &TrainConfig) -> Result<(Pairs, Pairs)> {
    if xp.nrows() != yp.nrows() {
        return Err(Error::DimensionMismatch {
            expected: xp.nrows(),
            got: yp.nrows(),
        });
    }
    let (train_idx, val_idx) = train_val_split(xp.nrows(), cfg.validation_fraction, cfg.seed)?;
    let take = |idx: &[usize]| Pairs {
        source: xp.select(Axis(0), idx),
        target: yp.select(Axis(0), idx),
    };
    Ok((take(&train_idx), take(&val_idx)))
}

/// Mean squared error on held-out pairs, `None` when there are none.
pub fn validation_mse(params: &ModelParams, xv: ArrayView2<f64>, yv: ArrayView2<f64>) -> Result<Option<f64>> {
    if xv.nrows() == 0 {
        return Ok(None);
    }
    alignment_loss(params, xv, yv, AlignmentMode::MeanSquared).map(Some)
}

fn check_finite(value: f64, what: &str, epoch: usize) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::Numerical(format!("{what} is {value} at epoch {epoch}")));
    }
    Ok(())
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    spec: &'a KernelSpec,
    params: ModelParams,
    state: RmsState,
    paired_rng: ChaCha8Rng,
    unpaired_rng: ChaCha8Rng,
    history: TrainHistory,
    stats: TrainStats,
    epoch: usize,
    pretrained: Option<ModelParams>,
}

impl<'a> Trainer<'a> {
    fn new(params: ModelParams, spec: &'a KernelSpec, cfg: &'a TrainConfig) -> Self {
        Self {
            state: RmsState::new(&params),
            params,
            cfg,
            spec,
            paired_rng: seeded(cfg.seed, STREAM_PAIRED),
            unpaired_rng: seeded(cfg.seed, STREAM_UNPAIRED),
            history: TrainHistory::default(),
            stats: TrainStats::default(),
            epoch: 0,
            pretrained: None,
        }
    }

    fn total_steps(&self) -> usize {
        self.stats.pretrain_steps + self.stats.joint_steps
    }

    fn apply(&mut self, mut grads: ModelParams) -> Result<()> {
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient at epoch {}", self.epoch + 1)));
        }
        if !self.cfg.fit_bias {
            grads.zero_biases();
        }
        rmsprop_step(&mut self.params, &grads, &mut self.state, self.cfg)
    }

    fn alignment_grads(&self, xb: &Array2<f64>, yb: &Array2<f64>) -> Result<ModelParams> {
        let out = forward(&self.params, xb.view())?;
        let r = out - yb;
        let upstream = match self.cfg.blend.alignment_mode {
            AlignmentMode::MeanSquared => r * (2.0 / xb.nrows() as f64),
            AlignmentMode::SumL2 => {
                let mut up = r;
                for mut row in up.rows_mut() {
                    let norm = row.dot(&row).sqrt();
                    if norm > 0.0 {
                        row /= norm;
                    } else {
                        row.fill(0.0);
                    }
                }
                up
            }
        };
        Ok(backward(&self.params, xb.view(), upstream.view())?.params)
    }

    fn mmd_grads(&mut self, sb: &Array2<f64>, tb: &Array2<f64>) -> Result<ModelParams> {
        if self.stats.first_mmd_gradient_step.is_none() {
            self.stats.first_mmd_gradient_step = Some(self.total_steps());
        }
        self.stats.mmd_gradient_evaluations += 1;
        let mapped = forward(&self.params, sb.view())?;
        let upstream = mmd_u2_grad(mapped.view(), tb.view(), self.spec)?;
        Ok(backward(&self.params, sb.view(), upstream.view())?.params)
    }

    fn pretrain(&mut self, train: &Pairs, val: &Pairs) -> Result<()> {
        self.run_pretrain(train, val)?;
        self.pretrained = Some(self.params.clone());
        Ok(())
    }

    fn run_pretrain(&mut self, train: &Pairs, val: &Pairs) -> Result<()> {
        if self.cfg.epochs_pretrain == 0 {
            return Ok(());
        }
        if train.len() == 0 {
            return Err(Error::invalid("pretraining needs at least one training pair"));
        }
        let steps = train.len().div_ceil(self.cfg.batch_paired);
        for _ in 0..self.cfg.epochs_pretrain {
            for _ in 0..steps {
                let (xb, yb) =
                    sample_paired_batch(train.source.view(), train.target.view(), self.cfg.batch_paired, &mut self.paired_rng)?;
                let g = self.alignment_grads(&xb, &yb)?;
                self.apply(g)?;
                self.stats.pretrain_steps += 1;
            }
            self.epoch += 1;
            let align = alignment_loss(&self.params, train.source.view(), train.target.view(), self.cfg.blend.alignment_mode)?;
            check_finite(align, "alignment loss", self.epoch)?;
            let validation = validation_mse(&self.params, val.source.view(), val.target.view())?;
            self.history.records.push(EpochRecord {
                epoch: self.epoch,
                phase: Phase::Pretrain,
                alignment_loss: Some(align),
                mmd_loss: None,
                blended_loss: align,
                validation_metric: validation,
            });
        }
        Ok(())
    }

    fn joint(&mut self, train: &Pairs, val: &Pairs, s: ArrayView2<f64>, t: ArrayView2<f64>) -> Result<()> {
        if self.cfg.epochs_joint == 0 {
            return Ok(());
        }
        let blend = self.cfg.blend;
        let use_pairs = blend.alpha_pair > 0.0;
        let use_mmd = blend.alpha_pair < 1.0;
        if use_pairs && train.len() == 0 {
            return Err(Error::invalid("alpha_pair > 0 needs at least one training pair"));
        }
        if use_mmd && (s.nrows() == 0 || t.nrows() == 0) {
            return Err(Error::invalid("alpha_pair < 1 needs nonempty unpaired pools"));
        }
        // Fixed evaluation batch so that per-epoch MMD values are comparable.
        let eval_batch = if use_mmd {
            let mut rng = seeded(self.cfg.seed, STREAM_EVAL);
            Some(sample_unpaired_batches(s, t, self.cfg.batch_unpaired, &mut rng)?)
        } else {
            None
        };
        let steps = s.nrows().max(t.nrows()).div_ceil(self.cfg.batch_unpaired).max(1);
        let mut best: Option<(f64, ModelParams)> = None;
        let mut since_best = 0;

        for _ in 0..self.cfg.epochs_joint {
            for _ in 0..steps {
                let mut grads = self.params.zeros_like();
                if use_pairs {
                    self.stats.joint_paired_accesses += 1;
                    let (xb, yb) = sample_paired_batch(
                        train.source.view(),
                        train.target.view(),
                        self.cfg.batch_paired,
                        &mut self.paired_rng,
                    )?;
                    grads.add_scaled(blend.alpha_pair, &self.alignment_grads(&xb, &yb)?)?;
                }
                if use_mmd {
                    let (sb, tb) = sample_unpaired_batches(s, t, self.cfg.batch_unpaired, &mut self.unpaired_rng)?;
                    let g = self.mmd_grads(&sb, &tb)?;
                    grads.add_scaled(1.0 - blend.alpha_pair, &g)?;
                }
                self.apply(grads)?;
                self.stats.joint_steps += 1;
            }
            self.epoch += 1;

            let align = if use_pairs {
                self.stats.joint_paired_accesses += 1;
                let v = alignment_loss(&self.params, train.source.view(), train.target.view(), blend.alignment_mode)?;
                check_finite(v, "alignment loss", self.epoch)?;
                Some(v)
            } else {
                None
            };
            let mmd = match &eval_batch {
                Some((sb, tb)) => {
                    let mapped = forward(&self.params, sb.view())?;
                    let v = mmd_u2(mapped.view(), tb.view(), self.spec)?;
                    check_finite(v, "MMD loss", self.epoch)?;
                    Some(v)
                }
                None => None,
            };
            let blended = match (align, mmd) {
                (Some(a), Some(m)) => blend.alpha_pair * a + (1.0 - blend.alpha_pair) * m,
                (Some(a), None) => a,
                (None, Some(m)) => m,
                (None, None) => unreachable!("alpha_pair lies in [0, 1]"),
            };
            let validation = validation_mse(&self.params, val.source.view(), val.target.view())?;
            self.history.records.push(EpochRecord {
                epoch: self.epoch,
                phase: Phase::Joint,
                alignment_loss: align,
                mmd_loss: mmd,
                blended_loss: blended,
                validation_metric: validation,
            });

            if self.cfg.early_stop_patience > 0 {
                if let Some(v) = validation {
                    match &best {
                        Some((b, _)) if v >= *b => since_best += 1,
                        _ => {
                            best = Some((v, self.params.clone()));
                            since_best = 0;
                        }
                    }
                    if since_best >= self.cfg.early_stop_patience {
                        self.stats.stopped_early = true;
                        break;
                    }
                }
            }
        }
        if let Some((_, params)) = best.filter(|_| self.stats.stopped_early) {
            self.params = params;
        }
        Ok(())
    }

    fn finish(self) -> TrainOutcome {
        TrainOutcome {
            pretrained: self.pretrained.unwrap_or_else(|| self.params.clone()),
            final_validation: None,
            params: self.params,
            history: self.history,
            stats: self.stats,
        }
    }
}

fn finish_with_validation(trainer: Trainer<'_>, val: &Pairs) -> Result<TrainOutcome> {
    let mut out = trainer.finish();
    out.final_validation = validation_mse(&out.params, val.source.view(), val.target.view())?;
    Ok(out)
}

/// Supervised pre-initialization alone: `epochs_pretrain` epochs of RMSProp
/// on the alignment loss. A validation split is held out when
/// `validation_fraction > 0`.
pub fn pretrain(params: ModelParams, xp: ArrayView2<f64>, yp: ArrayView2<f64>, spec: &KernelSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (train, val) = split_pairs(xp, yp, cfg)?;
    let mut trainer = Trainer::new(params, spec, cfg);
    trainer.pretrain(&train, &val)?;
    finish_with_validation(trainer, &val)
}

/// Pre-initialization followed by `epochs_joint` epochs on the blended loss.
/// A joint epoch is ⌈max(|S|, |T|) / batch_unpaired⌉ steps.
pub fn train(params: ModelParams, data: &TrainData<'_>, spec: &KernelSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.unpaired_source.ncols() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            got: data.unpaired_source.ncols(),
        });
    }
    if data.unpaired_target.ncols() != params.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.output_dim(),
            got: data.unpaired_target.ncols(),
        });
    }
    let (train, val) = split_pairs(data.paired_source, data.paired_target, cfg)?;
    let mut trainer = Trainer::new(params, spec, cfg);
    trainer.pretrain(&train, &val)?;
    trainer.joint(&train, &val, data.unpaired_source, data.unpaired_target)?;
    finish_with_validation(trainer, &val)
}
