//! Training sets by source-word frequency, frequency-binned test sets, and
//! random validation splits.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index;

use super::{EmbeddingTable, Lexicon};
use crate::error::{Error, Result};
use crate::rng::{seeded, STREAM_BINS, STREAM_SPLIT};

/// The most frequent source words that have a translation, with every
/// translation of each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainSet {
    pub requested_words: usize,
    pub words: Vec<String>,
    pub pairs: Vec<(String, String)>,
}

/// A test query and all of its gold translations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestItem {
    pub source: String,
    pub targets: Vec<String>,
    pub frequency_rank: usize,
}

/// Test items whose source rank lies in `[lower, upper)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyBin {
    pub lower: usize,
    pub upper: usize,
    pub requested: usize,
    pub items: Vec<TestItem>,
    /// Fewer eligible words than requested.
    pub shortfall: bool,
}

impl FrequencyBin {
    /// Label such as `0-5k` or `100k-200k`.
    pub fn label(&self) -> String {
        fn short(n: usize) -> String {
            if n >= 1000 && n % 1000 == 0 {
                format!("{}k", n / 1000)
            } else {
                n.to_string()
            }
        }
        format!("{}-{}", short(self.lower), short(self.upper))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    /// One per requested size, in request order. Smaller sets are prefixes
    /// of larger ones.
    pub train: Vec<TrainSet>,
    pub bins: Vec<FrequencyBin>,
}

/// Training sets take the most frequent translated source words. Test bins
/// sample `test_per_bin` words uniformly from each rank interval
/// `[bin_edges[i], bin_edges[i+1])`, excluding every training word.
pub fn build_splits(
    lexicon: &Lexicon,
    source: &EmbeddingTable,
    train_sizes: &[usize],
    bin_edges: &[usize],
    test_per_bin: usize,
    seed: u64,
) -> Result<Splits> {
    if bin_edges.len() == 1 || bin_edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!(
            "bin edges must be strictly ascending with at least two entries, got {bin_edges:?}"
        )));
    }
    // Source words by rank, each with its translations in lexicon order.
    let mut by_rank: BTreeMap<usize, (String, Vec<String>)> = BTreeMap::new();
    for (s, t) in &lexicon.pairs {
        let rank = source
            .frequency_rank(s)
            .ok_or_else(|| Error::invalid(format!("lexicon word {s:?} missing from the source table")))?;
        let entry = by_rank.entry(rank).or_insert_with(|| (s.clone(), Vec::new()));
        if !entry.1.contains(t) {
            entry.1.push(t.clone());
        }
    }
    let ranked: Vec<(usize, &(String, Vec<String>))> = by_rank.iter().map(|(r, e)| (*r, e)).collect();

    let mut train = Vec::with_capacity(train_sizes.len());
    for &size in train_sizes {
        let chosen = &ranked[..size.min(ranked.len())];
        if chosen.len() < size {
            log::warn!("only {} translated source words for a training set of {size}", chosen.len());
        }
        train.push(TrainSet {
            requested_words: size,
            words: chosen.iter().map(|(_, (w, _))| w.clone()).collect(),
            pairs: chosen
                .iter()
                .flat_map(|(_, (w, ts))| ts.iter().map(move |t| (w.clone(), t.clone())))
                .collect(),
        });
    }
    let largest = train_sizes.iter().copied().max().unwrap_or(0).min(ranked.len());
    let excluded: HashSet<usize> = ranked[..largest].iter().map(|(r, _)| *r).collect();

    let mut rng = seeded(seed, STREAM_BINS);
    let mut bins = Vec::with_capacity(bin_edges.len().saturating_sub(1));
    for w in bin_edges.windows(2) {
        let (lower, upper) = (w[0], w[1]);
        let eligible: Vec<(usize, &(String, Vec<String>))> = by_rank
            .range(lower..upper)
            .filter(|(r, _)| !excluded.contains(r))
            .map(|(r, e)| (*r, e))
            .collect();
        let take = test_per_bin.min(eligible.len());
        let mut picked = index::sample(&mut rng, eligible.len(), take).into_vec();
        picked.sort_unstable();
        let shortfall = take < test_per_bin;
        if shortfall {
            log::warn!("bin {lower}-{upper}: {take} of {test_per_bin} requested test words available");
        }
        bins.push(FrequencyBin {
            lower,
            upper,
            requested: test_per_bin,
            items: picked
                .into_iter()
                .map(|i| {
                    let (rank, (w, ts)) = eligible[i];
                    TestItem {
                        source: w.clone(),
                        targets: ts.clone(),
                        frequency_rank: rank,
                    }
                })
                .collect(),
            shortfall,
        });
    }
    Ok(Splits { train, bins })
}

/// Splits `0..n` into sorted training and validation index lists, with
/// `round(fraction · n)` validation items chosen uniformly.
pub fn train_val_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!("validation fraction must lie in [0, 1), got {fraction}")));
    }
    let n_val = ((fraction * n as f64).round() as usize).min(n);
    let mut rng = seeded(seed, STREAM_SPLIT);
    let mut val = index::sample(&mut rng, n, n_val).into_vec();
    val.sort_unstable();
    let in_val: HashSet<usize> = val.iter().copied().collect();
    let train = (0..n).filter(|i| !in_val.contains(i)).collect();
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    /// Source words "0".."n" with a single translation "t<i>", plus a
    /// second translation for every seventh word.
    fn fixture(n: usize) -> (Lexicon, EmbeddingTable) {
        let source = EmbeddingTable::with_integer_vocab(Array2::zeros((n, 1)));
        let mut pairs = Vec::new();
        for i in (0..n).rev() {
            if i % 3 == 2 {
                continue;
            }
            pairs.push((i.to_string(), format!("t{i}")));
            if i % 7 == 0 {
                pairs.push((i.to_string(), format!("u{i}")));
            }
        }
        (Lexicon { pairs, dropped_oov: 0 }, source)
    }

    #[test]
    fn train_sets_are_most_frequent_translated_words() {
        let (lex, src) = fixture(100);
        let s = build_splits(&lex, &src, &[3, 10], &[0, 50, 100], 5, 0).unwrap();
        assert_eq!(s.train[0].words, ["0", "1", "3"]);
        assert_eq!(s.train[0].pairs.len(), 4);
        assert_eq!(s.train[0].pairs[1], ("0".to_string(), "u0".to_string()));
        assert_eq!(&s.train[1].words[..3], s.train[0].words.as_slice());
        assert_eq!(s.train[1].words.len(), 10);
    }

    #[test]
    fn bins_are_disjoint_from_train_and_each_other() {
        let (lex, src) = fixture(300);
        let s = build_splits(&lex, &src, &[20, 40], &[0, 50, 120, 300], 25, 3).unwrap();
        let train: HashSet<&str> = s.train[1].words.iter().map(String::as_str).collect();
        let mut seen = HashSet::new();
        for bin in &s.bins {
            assert_eq!(bin.items.len(), 25.min(bin.items.len()));
            for item in &bin.items {
                assert!(!train.contains(item.source.as_str()));
                assert!(seen.insert(item.source.clone()));
                assert!((bin.lower..bin.upper).contains(&item.frequency_rank));
                assert!(!item.targets.is_empty());
            }
        }
        // Ranks 0..50 hold 34 translated words, 40 of which train takes
        // (spilling past 50), so the first bin comes up short.
        assert!(s.bins[0].shortfall);
        assert!(s.bins[0].items.is_empty());
        assert!(!s.bins[2].shortfall);
        assert_eq!(s.bins[2].label(), "120-300");
    }

    #[test]
    fn splits_are_deterministic_per_seed() {
        let (lex, src) = fixture(1000);
        let edges = [0, 200, 1000];
        let a = build_splits(&lex, &src, &[50], &edges, 30, 9).unwrap();
        let b = build_splits(&lex, &src, &[50], &edges, 30, 9).unwrap();
        let c = build_splits(&lex, &src, &[50], &edges, 30, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.bins, c.bins);
    }

    #[test]
    fn bin_edges_must_ascend() {
        let (lex, src) = fixture(10);
        assert!(build_splits(&lex, &src, &[1], &[0, 5, 5], 1, 0).is_err());
        assert!(build_splits(&lex, &src, &[1], &[5], 1, 0).is_err());
        assert_eq!(
            FrequencyBin { lower: 5000, upper: 20000, requested: 0, items: vec![], shortfall: false }.label(),
            "5k-20k"
        );
    }

    #[test]
    fn validation_split_sizes_and_partition() {
        let (t, v) = train_val_split(5000, 0.1, 1).unwrap();
        assert_eq!(v.len(), 500);
        assert_eq!(t.len(), 4500);
        let all: HashSet<usize> = t.iter().chain(&v).copied().collect();
        assert_eq!(all.len(), 5000);
        let (t, v) = train_val_split(40, 0.0, 1).unwrap();
        assert!(v.is_empty());
        assert_eq!(t, (0..40).collect::<Vec<_>>());
        assert_ne!(train_val_split(100, 0.2, 1).unwrap(), train_val_split(100, 0.2, 2).unwrap());
        assert!(train_val_split(10, 1.0, 0).is_err());
    }
}
