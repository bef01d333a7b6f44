//! Supervised alignment loss, unsupervised MMD loss and their blend
//!
//! ```text
//! l = α_pair · l_alignment(Xp, Yp) + (1 - α_pair) · MMD²_u(N(S), T)
//! ```
//!
//! The two terms see different data: row-aligned pairs for the alignment
//! term and independently drawn batches for the MMD term.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{mmd_u2, mmd_u2_grad, mmd_u2_with_grad, KernelSpec};
use crate::model::{backward, forward, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignmentMode {
    /// (1/k) Σ ‖N(x_i) - y_i‖².
    #[default]
    MeanSquared,
    /// Σ ‖N(x_i) - y_i‖.
    SumL2,
}

impl fmt::Display for AlignmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlignmentMode::MeanSquared => "mean_squared",
            AlignmentMode::SumL2 => "sum_l2",
        })
    }
}

impl FromStr for AlignmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_squared" => Ok(AlignmentMode::MeanSquared),
            "sum_l2" => Ok(AlignmentMode::SumL2),
            other => Err(Error::invalid(format!("unknown alignment mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendConfig {
    pub alpha_pair: f64,
    pub alignment_mode: AlignmentMode,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self {
            alpha_pair: 0.01,
            alignment_mode: AlignmentMode::MeanSquared,
        }
    }
}

impl BlendConfig {
    pub fn new(alpha_pair: f64, alignment_mode: AlignmentMode) -> Result<Self> {
        let cfg = Self {
            alpha_pair,
            alignment_mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha_pair) {
            return Err(Error::invalid(format!("alpha_pair must lie in [0, 1], got {}", self.alpha_pair)));
        }
        Ok(())
    }

    fn uses_alignment(&self) -> bool {
        self.alpha_pair > 0.0
    }

    fn uses_mmd(&self) -> bool {
        self.alpha_pair < 1.0
    }
}

fn check_pairs(xp: ArrayView2<f64>, yp: ArrayView2<f64>) -> Result<()> {
    if xp.nrows() == 0 {
        return Err(Error::invalid("alignment loss needs at least one pair"));
    }
    check_dim(xp.nrows(), yp.nrows())
}

/// Per-row residuals N(x_i) - y_i.
fn residuals(params: &ModelParams, xp: ArrayView2<f64>, yp: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_pairs(xp, yp)?;
    check_dim(params.output_dim(), yp.ncols())?;
    Ok(forward(params, xp)? - &yp)
}

fn alignment_from_residuals(r: &Array2<f64>, mode: AlignmentMode) -> f64 {
    let sq = r.map_axis(Axis(1), |row| row.dot(&row));
    match mode {
        AlignmentMode::MeanSquared => sq.sum() / r.nrows() as f64,
        AlignmentMode::SumL2 => sq.iter().map(|v| v.sqrt()).sum(),
    }
}

/// ∂ alignment / ∂ N(x_i).
fn alignment_upstream(r: &Array2<f64>, mode: AlignmentMode) -> Array2<f64> {
    match mode {
        AlignmentMode::MeanSquared => r * (2.0 / r.nrows() as f64),
        AlignmentMode::SumL2 => {
            let mut up = r.clone();
            for mut row in up.rows_mut() {
                let norm = row.dot(&row).sqrt();
                // Subgradient 0 at an exact match.
                if norm > 0.0 {
                    row /= norm;
                } else {
                    row.fill(0.0);
                }
            }
            up
        }
    }
}

pub fn alignment_loss(
    params: &ModelParams,
    xp: ArrayView2<f64>,
    yp: ArrayView2<f64>,
    mode: AlignmentMode,
) -> Result<f64> {
    Ok(alignment_from_residuals(&residuals(params, xp, yp)?, mode))
}

pub fn alignment_loss_grad(
    params: &ModelParams,
    xp: ArrayView2<f64>,
    yp: ArrayView2<f64>,
    mode: AlignmentMode,
) -> Result<ModelParams> {
    let r = residuals(params, xp, yp)?;
    Ok(backward(params, xp, alignment_upstream(&r, mode).view())?.params)
}

/// MMD²_u(N(S), T).
pub fn mmd_loss(params: &ModelParams, s_batch: ArrayView2<f64>, t_batch: ArrayView2<f64>, spec: &KernelSpec) -> Result<f64> {
    let mapped = forward(params, s_batch)?;
    mmd_u2(mapped.view(), t_batch, spec)
}

pub fn mmd_loss_grad(
    params: &ModelParams,
    s_batch: ArrayView2<f64>,
    t_batch: ArrayView2<f64>,
    spec: &KernelSpec,
) -> Result<ModelParams> {
    let mapped = forward(params, s_batch)?;
    let upstream = mmd_u2_grad(mapped.view(), t_batch, spec)?;
    Ok(backward(params, s_batch, upstream.view())?.params)
}

/// Inputs to the blended objective for one step.
#[derive(Debug, Clone, Copy)]
pub struct LossBatch<'a> {
    pub paired_source: ArrayView2<'a, f64>,
    pub paired_target: ArrayView2<'a, f64>,
    pub unpaired_source: ArrayView2<'a, f64>,
    pub unpaired_target: ArrayView2<'a, f64>,
}

pub fn blended_loss(params: &ModelParams, batch: &LossBatch<'_>, spec: &KernelSpec, blend: &BlendConfig) -> Result<f64> {
    blend.validate()?;
    let a = blend.alpha_pair;
    if !blend.uses_mmd() {
        return alignment_loss(params, batch.paired_source, batch.paired_target, blend.alignment_mode);
    }
    if !blend.uses_alignment() {
        return mmd_loss(params, batch.unpaired_source, batch.unpaired_target, spec);
    }
    let align = alignment_loss(params, batch.paired_source, batch.paired_target, blend.alignment_mode)?;
    let mmd = mmd_loss(params, batch.unpaired_source, batch.unpaired_target, spec)?;
    Ok(a * align + (1.0 - a) * mmd)
}

pub fn blended_loss_grad(
    params: &ModelParams,
    batch: &LossBatch<'_>,
    spec: &KernelSpec,
    blend: &BlendConfig,
) -> Result<ModelParams> {
    Ok(blended_value_and_grad(params, Some((batch.paired_source, batch.paired_target)), Some((batch.unpaired_source, batch.unpaired_target)), spec, blend)?.grads)
}

/// Loss components evaluated in one step. A component is `None` when its
/// weight in the blend is zero and it was not evaluated.
#[derive(Debug, Clone)]
pub struct StepEvaluation {
    pub alignment: Option<f64>,
    pub mmd: Option<f64>,
    pub blended: f64,
    pub grads: ModelParams,
}

type Pair<'a> = (ArrayView2<'a, f64>, ArrayView2<'a, f64>);

/// Value and gradient of the blend. Terms with zero weight are skipped and
/// their batches may be `None`.
pub fn blended_value_and_grad(
    params: &ModelParams,
    paired: Option<Pair<'_>>,
    unpaired: Option<Pair<'_>>,
    spec: &KernelSpec,
    blend: &BlendConfig,
) -> Result<StepEvaluation> {
    blend.validate()?;
    let a = blend.alpha_pair;
    let mut grads = params.zeros_like();

    let alignment = if blend.uses_alignment() {
        let (xp, yp) = paired.ok_or_else(|| Error::invalid("alignment term needs a paired batch"))?;
        let r = residuals(params, xp, yp)?;
        let g = backward(params, xp, alignment_upstream(&r, blend.alignment_mode).view())?.params;
        grads.add_scaled(a, &g)?;
        Some(alignment_from_residuals(&r, blend.alignment_mode))
    } else {
        None
    };

    let mmd = if blend.uses_mmd() {
        let (s, t) = unpaired.ok_or_else(|| Error::invalid("MMD term needs unpaired batches"))?;
        let mapped = forward(params, s)?;
        let (value, upstream) = mmd_u2_with_grad(mapped.view(), t, spec)?;
        let g = backward(params, s, upstream.view())?.params;
        grads.add_scaled(1.0 - a, &g)?;
        Some(value)
    } else {
        None
    };

    let blended = match (alignment, mmd) {
        (Some(al), Some(m)) => a * al + (1.0 - a) * m,
        (Some(al), None) => al,
        (None, Some(m)) => m,
        (None, None) => unreachable!("alpha_pair lies in [0, 1]"),
    };
    Ok(StepEvaluation {
        alignment,
        mmd,
        blended,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, Activation};
    use ndarray::{array, Array1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
    }

    fn identity(d: usize) -> ModelParams {
        ModelParams::linear(Array2::eye(d), Array1::zeros(d)).unwrap()
    }

    #[test]
    fn alignment_zero_for_exact_map() {
        let x = randn(4, 3, 1);
        for mode in [AlignmentMode::MeanSquared, AlignmentMode::SumL2] {
            assert_eq!(alignment_loss(&identity(3), x.view(), x.view(), mode).unwrap(), 0.0);
        }
    }

    #[test]
    fn alignment_three_four_five() {
        let x = array![[0.0, 0.0]];
        let y = array![[-3.0, -4.0]];
        assert_eq!(alignment_loss(&identity(2), x.view(), y.view(), AlignmentMode::SumL2).unwrap(), 5.0);
        assert_eq!(alignment_loss(&identity(2), x.view(), y.view(), AlignmentMode::MeanSquared).unwrap(), 25.0);
    }

    #[test]
    fn alignment_matches_per_row_recomputation() {
        let p = init_params(3, 2, &[4], Activation::Tanh, 2).unwrap();
        let x = randn(7, 3, 3);
        let y = randn(7, 2, 4);
        let mut sum_sq = 0.0;
        let mut sum_norm = 0.0;
        for i in 0..7 {
            let out = forward(&p, x.slice(ndarray::s![i..i + 1, ..])).unwrap();
            let d: f64 = out.row(0).iter().zip(y.row(i)).map(|(a, b)| (a - b) * (a - b)).sum();
            sum_sq += d;
            sum_norm += d.sqrt();
        }
        let ms = alignment_loss(&p, x.view(), y.view(), AlignmentMode::MeanSquared).unwrap();
        let l2 = alignment_loss(&p, x.view(), y.view(), AlignmentMode::SumL2).unwrap();
        assert!((ms - sum_sq / 7.0).abs() < 1e-12);
        assert!((l2 - sum_norm).abs() < 1e-12);
    }

    #[test]
    fn alignment_rejects_mismatch_and_empty() {
        let p = identity(2);
        assert!(alignment_loss(&p, randn(3, 2, 1).view(), randn(2, 2, 1).view(), AlignmentMode::MeanSquared).is_err());
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(alignment_loss(&p, empty.view(), empty.view(), AlignmentMode::MeanSquared).is_err());
    }

    #[test]
    fn mmd_loss_identity_network() {
        let spec = KernelSpec::single_scale(1.0).unwrap();
        let s = array![[0.0, 0.0], [0.6, 0.8]];
        let v = mmd_loss(&identity(2), s.view(), s.view(), &spec).unwrap();
        assert!((v - ((-0.5f64).exp() - 1.0)).abs() < 1e-15);
    }

    fn within_mean(a: &Array2<f64>, spec: &KernelSpec) -> f64 {
        let k = crate::kernel::kernel_matrix(a.view(), a.view(), spec).unwrap();
        let m = a.nrows() as f64;
        (k.sum() - k.diag().sum()) / (m * (m - 1.0))
    }

    #[test]
    fn mmd_loss_far_away_keeps_within_terms() {
        let spec = KernelSpec::single_scale(1.0).unwrap();
        let s = randn(5, 2, 7);
        let t = randn(6, 2, 8) + 1e3;
        let v = mmd_loss(&identity(2), s.view(), t.view(), &spec).unwrap();
        assert!((v - (within_mean(&s, &spec) + within_mean(&t, &spec))).abs() < 1e-12);
    }

    #[test]
    fn mmd_loss_symmetric_under_swap() {
        let spec = KernelSpec::multiscale(1.0).unwrap();
        let p = init_params(2, 2, &[], Activation::Identity, 3).unwrap();
        let s = randn(6, 2, 1);
        let t = randn(5, 2, 2);
        let mapped = forward(&p, s.view()).unwrap();
        let a = mmd_loss(&p, s.view(), t.view(), &spec).unwrap();
        let b = mmd_u2(t.view(), mapped.view(), &spec).unwrap();
        assert_eq!(a, b);
    }

    fn sample_batch(d: usize, e: usize) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
        (randn(6, d, 31), randn(6, e, 32), randn(8, d, 33), randn(7, e, 34))
    }

    #[test]
    fn blend_boundaries_and_midpoint() {
        let spec = KernelSpec::multiscale(1.0).unwrap();
        let p = init_params(3, 2, &[], Activation::Identity, 4).unwrap();
        let (xp, yp, s, t) = sample_batch(3, 2);
        let batch = LossBatch {
            paired_source: xp.view(),
            paired_target: yp.view(),
            unpaired_source: s.view(),
            unpaired_target: t.view(),
        };
        let align = alignment_loss(&p, xp.view(), yp.view(), AlignmentMode::MeanSquared).unwrap();
        let mmd = mmd_loss(&p, s.view(), t.view(), &spec).unwrap();
        let at = |alpha| blended_loss(&p, &batch, &spec, &BlendConfig::new(alpha, AlignmentMode::MeanSquared).unwrap()).unwrap();
        assert_eq!(at(1.0), align);
        assert_eq!(at(0.0), mmd);
        assert!((at(0.5) - 0.5 * (align + mmd)).abs() < 1e-15);
        // Affine in alpha.
        let values: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|a| at(*a)).collect();
        for (i, v) in values.iter().enumerate() {
            let alpha = i as f64 * 0.25;
            assert!((v - (values[0] + alpha * (values[4] - values[0]))).abs() < 1e-12);
        }
        assert!(BlendConfig::new(1.5, AlignmentMode::MeanSquared).is_err());
    }

    fn check_blend_gradient(p: &ModelParams, blend: BlendConfig, spec: &KernelSpec) {
        let (d, e) = (p.input_dim(), p.output_dim());
        let (xp, yp, s, t) = sample_batch(d, e);
        let batch = LossBatch {
            paired_source: xp.view(),
            paired_target: yp.view(),
            unpaired_source: s.view(),
            unpaired_target: t.view(),
        };
        let g = blended_loss_grad(p, &batch, spec, &blend).unwrap().to_flat();
        let flat = p.to_flat();
        let h = 1e-5;
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let fp = blended_loss(&p.with_flat(&plus).unwrap(), &batch, spec, &blend).unwrap();
            let fm = blended_loss(&p.with_flat(&minus).unwrap(), &batch, spec, &blend).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {} numeric {fd}", g[i]);
        }
    }

    #[test]
    fn blend_gradient_matches_finite_differences() {
        let spec = KernelSpec::multiscale(1.0).unwrap();
        for mode in [AlignmentMode::MeanSquared, AlignmentMode::SumL2] {
            for alpha in [0.0, 0.3, 1.0] {
                let blend = BlendConfig::new(alpha, mode).unwrap();
                check_blend_gradient(&init_params(3, 2, &[], Activation::Identity, 5).unwrap(), blend, &spec);
                check_blend_gradient(&init_params(3, 2, &[4], Activation::Tanh, 6).unwrap(), blend, &spec);
            }
        }
    }

    #[test]
    fn supervised_gradient_is_least_squares() {
        let p = init_params(3, 2, &[], Activation::Identity, 8).unwrap();
        let x = randn(5, 3, 9);
        let y = randn(5, 2, 10);
        let g = alignment_loss_grad(&p, x.view(), y.view(), AlignmentMode::MeanSquared).unwrap();
        let w = &p.layers()[0].weight;
        let r = x.dot(&w.t()) - &y;
        let expected_w = r.t().dot(&x) * (2.0 / 5.0);
        let expected_b = r.sum_axis(Axis(0)) * (2.0 / 5.0);
        for (a, b) in g.layers()[0].weight.iter().zip(expected_w.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in g.layers()[0].bias.iter().zip(expected_b.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_at_noiseless_truth() {
        let w = randn(3, 3, 12);
        let p = ModelParams::linear(w.clone(), Array1::zeros(3)).unwrap();
        let x = randn(10, 3, 13);
        let y = x.dot(&w.t());
        let g = alignment_loss_grad(&p, x.view(), y.view(), AlignmentMode::MeanSquared).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn skipped_terms_report_none() {
        let spec = KernelSpec::multiscale(1.0).unwrap();
        let p = init_params(2, 2, &[], Activation::Identity, 1).unwrap();
        let (xp, yp, s, t) = sample_batch(2, 2);
        let only_pairs = blended_value_and_grad(&p, Some((xp.view(), yp.view())), None, &spec, &BlendConfig::new(1.0, AlignmentMode::MeanSquared).unwrap()).unwrap();
        assert!(only_pairs.mmd.is_none() && only_pairs.alignment.is_some());
        let only_mmd = blended_value_and_grad(&p, None, Some((s.view(), t.view())), &spec, &BlendConfig::new(0.0, AlignmentMode::MeanSquared).unwrap()).unwrap();
        assert!(only_mmd.alignment.is_none() && only_mmd.mmd.is_some());
        assert!(blended_value_and_grad(&p, None, None, &spec, &BlendConfig::default()).is_err());
    }
}
