#![allow(dead_code)]

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use mmdnet::config::RunConfig;
use mmdnet::data::{gen_synthetic, write_embeddings};

/// Writes a 100-word noiseless linear embedding pair plus its identity
/// lexicon under `dir` and points a config at them.
pub fn linear_fixture(dir: &Path, seed: u64) -> RunConfig {
    let task = gen_synthetic(8, 100, 0.0, 1, seed).unwrap();
    let (source, target, lexicon) = task.to_embeddings();
    let src = dir.join("source.vec");
    let tgt = dir.join("target.vec");
    let lex = dir.join("lexicon.tsv");
    write_embeddings(&source, File::create(&src).unwrap()).unwrap();
    write_embeddings(&target, File::create(&tgt).unwrap()).unwrap();
    let text: String = lexicon.pairs.iter().map(|(s, t)| format!("{s}\t{t}\n")).collect();
    fs::write(&lex, text).unwrap();

    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.translate.source_embeddings = Some(src);
    cfg.translate.target_embeddings = Some(tgt);
    cfg.translate.lexicon = Some(lex);
    cfg.translate.train_sizes = vec![60];
    cfg.translate.bin_edges = vec![0, 100];
    cfg.translate.test_per_bin = 40;
    cfg.translate.eval_n = vec![1, 5];
    cfg.train.epochs_pretrain = 2000;
    cfg.train.epochs_joint = 20;
    cfg
}

/// Every regular file below `dir`, as sorted paths relative to it.
pub fn report_files(dir: &Path) -> Vec<PathBuf> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
