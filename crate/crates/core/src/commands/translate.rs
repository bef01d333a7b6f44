use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::config::{Command, RunConfig};
use crate::data::{build_splits, load_embeddings, load_lexicon, EmbeddingTable, Lexicon};
use crate::error::{Error, Result};
use crate::model::{init_params, save_checkpoint};
use crate::report::{write_report, write_table};
use crate::retrieval::{precision_at_ns, GcPool, GcTable, Method, RetrievalIndex};
use crate::train::{train, TrainData, TrainOutcome};

use super::RunSummary;

/// One line of the evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub bin: String,
    /// `<model>/<retrieval>`, e.g. `mmd/gc`.
    pub method: String,
    pub n: usize,
    pub precision: f64,
    /// Training pairs behind the model.
    pub num_pairs: usize,
}

#[derive(Debug, Clone)]
pub struct TranslateOutcome {
    pub rows: Vec<EvalRow>,
    /// Per requested train size.
    pub runs: Vec<(usize, TrainOutcome)>,
    pub notes: Vec<String>,
}

impl TranslateOutcome {
    /// Mean validation MSE over the train sizes.
    pub fn validation_metric(&self) -> Option<f64> {
        let vals: Vec<f64> = self.runs.iter().filter_map(|(_, r)| r.final_validation).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Mean `mmd/nn` precision at the smallest requested N.
    pub fn headline_precision(&self) -> Option<f64> {
        let n = self.rows.iter().map(|r| r.n).min()?;
        let sel: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == "mmd/nn" && r.n == n)
            .map(|r| r.precision)
            .collect();
        (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            validation_metric: self.validation_metric(),
            test_metric: self.headline_precision(),
        }
    }
}

fn rows_of(table: &EmbeddingTable, words: impl Iterator<Item = String>) -> Array2<f64> {
    let rows: Vec<usize> = words
        .map(|w| table.frequency_rank(&w).expect("lexicon words are in the table"))
        .collect();
    table.vectors().select(ndarray::Axis(0), &rows)
}

/// Splits, trains one model per train size, and scores the pretrained
/// (`linear`) and jointly trained (`mmd`) networks with NN and GC
/// retrieval over the whole target table.
pub fn run_translate(
    cfg: &RunConfig,
    source: &EmbeddingTable,
    target: &EmbeddingTable,
    lexicon: &Lexicon,
) -> Result<TranslateOutcome> {
    let tr = &cfg.translate;
    if tr.eval_n.is_empty() || tr.eval_n.contains(&0) {
        return Err(Error::Config("translate.eval_n must list positive values".into()));
    }
    let splits = build_splits(lexicon, source, &tr.train_sizes, &tr.bin_edges, tr.test_per_bin, cfg.seed)?;
    let spec = cfg.kernel.spec()?;
    let tc = cfg.train_config();
    let index = RetrievalIndex::with_labels(target.vectors().clone(), target.vocab().to_vec())?;
    let pool = GcPool::sample(target.len(), cfg.retrieval.gc_pool_size, cfg.seed)?;
    let gc = GcTable::new(&index, &pool, cfg.retrieval.gc_cosine)?;

    let mut notes = vec![format!("lexicon_pairs: {} (dropped {} out of vocabulary)", lexicon.len(), lexicon.dropped_oov)];
    for bin in &splits.bins {
        notes.push(format!(
            "bin {}: {} test words{}",
            bin.label(),
            bin.items.len(),
            if bin.shortfall { " (short)" } else { "" }
        ));
    }

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for set in &splits.train {
        let xp = rows_of(source, set.pairs.iter().map(|(s, _)| s.clone()));
        let yp = rows_of(target, set.pairs.iter().map(|(_, t)| t.clone()));
        let init = init_params(source.dim(), target.dim(), &cfg.model.hidden, cfg.model.activation, cfg.seed)?;
        let data = TrainData {
            paired_source: xp.view(),
            paired_target: yp.view(),
            unpaired_source: source.vectors().view(),
            unpaired_target: target.vectors().view(),
        };
        let outcome = train(init, &data, &spec, &tc)?;
        for bin in splits.bins.iter().filter(|b| !b.items.is_empty()) {
            let queries = rows_of(source, bin.items.iter().map(|i| i.source.clone()));
            let gold: Vec<Vec<usize>> = bin
                .items
                .iter()
                .map(|i| i.targets.iter().filter_map(|t| target.frequency_rank(t)).collect())
                .collect();
            for (model, params) in [("linear", &outcome.pretrained), ("mmd", &outcome.params)] {
                for method in [Method::Nn, Method::Gc(&gc)] {
                    let ps = precision_at_ns(params, queries.view(), &gold, &index, method, &tr.eval_n)?;
                    for (&n, p) in tr.eval_n.iter().zip(ps) {
                        rows.push(EvalRow {
                            bin: bin.label(),
                            method: format!("{model}/{}", method.name()),
                            n,
                            precision: p,
                            num_pairs: set.pairs.len(),
                        });
                    }
                }
            }
        }
        runs.push((set.requested_words, outcome));
    }
    Ok(TranslateOutcome { rows, runs, notes })
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("{key} is not set")))
}

/// Loads the configured files, runs [`run_translate`], and writes
/// `evaluation.csv` plus a history and checkpoint per train size.
pub fn cmd_translate(cfg: &RunConfig, out: &Path) -> Result<TranslateOutcome> {
    let tr = &cfg.translate;
    let source = load_embeddings(required(&tr.source_embeddings, "translate.source_embeddings")?)?;
    let target = load_embeddings(required(&tr.target_embeddings, "translate.target_embeddings")?)?;
    let lexicon = load_lexicon(required(&tr.lexicon, "translate.lexicon")?, &source, &target)?;
    let result = run_translate(cfg, &source, &target, &lexicon)?;
    let rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| vec![r.bin.clone(), r.method.clone(), r.n.to_string(), r.precision.to_string(), r.num_pairs.to_string()])
        .collect();
    write_table(
        &out.join("evaluation.csv"),
        cfg,
        Command::Translate,
        &result.notes,
        &["bin", "method", "N", "precision", "num_pairs"],
        &rows,
    )?;
    for (size, run) in &result.runs {
        write_report(&out.join(format!("history_{size}.csv")), cfg, Command::Translate, &[], |w| run.history.write_csv(w))?;
        save_checkpoint(&run.params, &out.join(format!("model_{size}.ckpt")))?;
    }
    Ok(result)
}
