use std::path::Path;

use crate::baseline::least_squares;
use crate::config::{Command, RunConfig};
use crate::data::gen_synthetic;
use crate::error::Result;
use crate::loss::{alignment_loss, AlignmentMode};
use crate::model::{init_params, ModelParams};
use crate::report::{write_report, write_table};
use crate::train::{train, TrainData, TrainHistory};

use super::RunSummary;

/// Rows of the metrics report, in this order.
pub const SYNTH_METHODS: [&str; 4] = ["paired_only_ls", "pretrain_only", "mmd_blended", "oracle_ls"];

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    /// Held-out MSE per entry of [`SYNTH_METHODS`].
    pub test_mse: Vec<(String, f64)>,
    pub validation_metric: Option<f64>,
    pub history: TrainHistory,
    pub params: ModelParams,
}

impl SynthOutcome {
    pub fn mse(&self, method: &str) -> Option<f64> {
        self.test_mse.iter().find(|(m, _)| m == method).map(|(_, v)| *v)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            validation_metric: self.validation_metric,
            test_metric: self.mse("mmd_blended"),
        }
    }
}

/// Generates the task, trains, and scores every method on a fresh test
/// draw. Least-squares baselines use all revealed pairs; the network holds
/// out `train.validation_fraction` of them for validation.
pub fn run_synth(cfg: &RunConfig) -> Result<SynthOutcome> {
    let s = &cfg.synth;
    let task = gen_synthetic(s.dim, s.points, s.noise_std, s.num_paired, cfg.seed)?;
    let (xp, yp) = task.paired();
    let (xt, yt) = task.draw_fresh(s.test_points, 0);
    let spec = cfg.kernel.spec()?;
    let tc = cfg.train_config();
    let init = init_params(s.dim, s.dim, &cfg.model.hidden, cfg.model.activation, cfg.seed)?;
    let data = TrainData {
        paired_source: xp.view(),
        paired_target: yp.view(),
        unpaired_source: task.source.view(),
        unpaired_target: task.target.view(),
    };
    let out = train(init, &data, &spec, &tc)?;
    let paired_ls = least_squares(xp.view(), yp.view(), tc.fit_bias)?;
    let oracle = least_squares(task.source.view(), task.target.view(), tc.fit_bias)?;
    let models = [&paired_ls, &out.pretrained, &out.params, &oracle];
    let test_mse = SYNTH_METHODS
        .iter()
        .zip(models)
        .map(|(name, p)| Ok((name.to_string(), alignment_loss(p, xt.view(), yt.view(), AlignmentMode::MeanSquared)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthOutcome {
        test_mse,
        validation_metric: out.final_validation,
        history: out.history,
        params: out.params,
    })
}

/// [`run_synth`], then `metrics.csv`, `history.csv` and `model.ckpt`.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<SynthOutcome> {
    let result = run_synth(cfg)?;
    let d = cfg.synth.dim.to_string();
    let k = cfg.synth.num_paired.to_string();
    let rows: Vec<Vec<String>> = result
        .test_mse
        .iter()
        .map(|(m, v)| vec![m.clone(), d.clone(), k.clone(), v.to_string()])
        .collect();
    let notes = vec![format!(
        "validation_metric: {}",
        result.validation_metric.map(|v| v.to_string()).unwrap_or_default()
    )];
    write_table(
        &out.join("metrics.csv"),
        cfg,
        Command::Synth,
        &notes,
        &["method", "d", "num_paired", "test_mse"],
        &rows,
    )?;
    write_report(&out.join("history.csv"), cfg, Command::Synth, &[], |w| result.history.write_csv(w))?;
    crate::model::save_checkpoint(&result.params, &out.join("model.ckpt"))?;
    Ok(result)
}
