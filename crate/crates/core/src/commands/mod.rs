//! The experiment commands behind the command-line interface. Each one
//! writes its reports into an output directory and returns its results.

mod sweep;
mod synth;
mod toy;
mod translate;

use std::fs;
use std::path::Path;

pub use sweep::{cmd_sweep, SweepCell, SweepOutcome};
pub use synth::{cmd_synth, run_synth, SynthOutcome, SYNTH_METHODS};
pub use toy::{angle_gap, cmd_toy_rotation, scan_rotation, RotationScan};
pub use translate::{cmd_translate, run_translate, EvalRow, TranslateOutcome};

use crate::config::{Command, RunConfig};
use crate::error::{Error, Result};

/// Validation and headline test metric of one run, as used by sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub validation_metric: Option<f64>,
    pub test_metric: Option<f64>,
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

/// Runs `command` with `cfg`, writing reports under `out`.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    ensure_dir(out)?;
    match command {
        Command::Synth => cmd_synth(cfg, out).map(|o| o.summary()),
        Command::ToyRotation => cmd_toy_rotation(cfg, out).map(|_| RunSummary {
            validation_metric: None,
            test_metric: None,
        }),
        Command::Translate => cmd_translate(cfg, out).map(|o| o.summary()),
        Command::Sweep => cmd_sweep(cfg, out).map(|o| o.summary()),
    }
}
