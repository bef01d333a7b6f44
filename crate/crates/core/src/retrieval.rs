//! Cosine nearest-neighbour and globally corrected (GC) retrieval over a
//! fixed target matrix, and precision@N.
//!
//! Every similarity goes through [`cosine_similarity`]'s arithmetic, so two
//! code paths comparing the same pair of vectors agree bitwise.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index;

use crate::error::{Error, Result};
use crate::model::{forward, ModelParams};
use crate::rng::{seeded, STREAM_POOL};

fn dot(u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    u.iter().zip(v.iter()).fold(0.0, |acc, (a, b)| acc + a * b)
}

fn norm(u: ArrayView1<f64>) -> f64 {
    dot(u, u).sqrt()
}

fn cos_with_norms(u: ArrayView1<f64>, nu: f64, v: ArrayView1<f64>, nv: f64) -> f64 {
    dot(u, v) / (nu * nv)
}

/// `⟨u, v⟩ / (‖u‖·‖v‖)`. Exactly symmetric in its arguments.
pub fn cosine_similarity(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    Ok(cos_with_norms(u, nu, v, nv))
}

/// Target rows with cached norms. Zero rows are rejected.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    targets: Array2<f64>,
    norms: Array1<f64>,
    labels: Option<Vec<String>>,
}

impl RetrievalIndex {
    pub fn new(targets: Array2<f64>) -> Result<Self> {
        let norms: Array1<f64> = targets.rows().into_iter().map(norm).collect();
        if let Some(i) = norms.iter().position(|n| !(*n > 0.0) || !n.is_finite()) {
            return Err(Error::invalid(format!("target row {i} has zero or non-finite norm")));
        }
        Ok(Self {
            targets,
            norms,
            labels: None,
        })
    }

    pub fn with_labels(targets: Array2<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != targets.nrows() {
            return Err(Error::DimensionMismatch {
                expected: targets.nrows(),
                got: labels.len(),
            });
        }
        let mut idx = Self::new(targets)?;
        idx.labels = Some(labels);
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.targets.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }

    pub fn label(&self, i: usize) -> Option<&str> {
        self.labels.as_ref().and_then(|l| l.get(i)).map(String::as_str)
    }

    fn check_query(&self, y_hat: ArrayView1<f64>) -> Result<f64> {
        if y_hat.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: y_hat.len(),
            });
        }
        let n = norm(y_hat);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("query has zero or non-finite norm"));
        }
        Ok(n)
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n > self.len() {
            return Err(Error::invalid(format!("cannot retrieve {n} of {} targets", self.len())));
        }
        Ok(())
    }

    /// Cosine similarity of every target row to `y_hat`.
    pub fn similarities(&self, y_hat: ArrayView1<f64>) -> Result<Array1<f64>> {
        let nq = self.check_query(y_hat)?;
        Ok(self.sims_with_norm(y_hat, nq))
    }

    fn sims_with_norm(&self, y_hat: ArrayView1<f64>, nq: f64) -> Array1<f64> {
        self.targets
            .rows()
            .into_iter()
            .zip(self.norms.iter())
            .map(|(t, nt)| cos_with_norms(t, *nt, y_hat, nq))
            .collect()
    }

    fn row_cos(&self, i: usize, j: usize) -> f64 {
        cos_with_norms(self.targets.row(i), self.norms[i], self.targets.row(j), self.norms[j])
    }
}

/// Descending similarity, lower index first on ties.
fn by_similarity(sims: &Array1<f64>) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |a, b| sims[*b].total_cmp(&sims[*a]).then(a.cmp(b))
}

/// Ascending score, lower index first on ties.
fn by_score(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |a, b| scores[*a].total_cmp(&scores[*b]).then(a.cmp(b))
}

fn top_n(len: usize, n: usize, cmp: impl Fn(&usize, &usize) -> Ordering) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    if n == 0 {
        return Vec::new();
    }
    if n < len {
        order.select_nth_unstable_by(n - 1, &cmp);
        order.truncate(n);
    }
    order.sort_unstable_by(cmp);
    order
}

/// 1 + number of targets ranked ahead of `target_index` for `y_hat`.
pub fn rank_in_targets(y_hat: ArrayView1<f64>, target_index: usize, index: &RetrievalIndex) -> Result<usize> {
    if target_index >= index.len() {
        return Err(Error::invalid(format!("target {target_index} out of range 0..{}", index.len())));
    }
    let sims = index.similarities(y_hat)?;
    let cmp = by_similarity(&sims);
    Ok(1 + (0..index.len())
        .filter(|j| cmp(j, &target_index) == Ordering::Less)
        .count())
}

/// The `n` targets most cosine-similar to `y_hat`, best first.
pub fn nn_retrieve(y_hat: ArrayView1<f64>, index: &RetrievalIndex, n: usize) -> Result<Vec<usize>> {
    index.check_n(n)?;
    let sims = index.similarities(y_hat)?;
    Ok(top_n(index.len(), n, by_similarity(&sims)))
}

/// Reference points `P ⊆ T` against which GC ranks the query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GcPool {
    indices: Vec<usize>,
}

impl GcPool {
    pub fn new(mut indices: Vec<usize>, num_targets: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("GC pool must be nonempty"));
        }
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("GC pool repeats target {}", w[0])));
        }
        if let Some(&last) = indices.last().filter(|&&i| i >= num_targets) {
            return Err(Error::invalid(format!("GC pool index {last} out of range 0..{num_targets}")));
        }
        Ok(Self { indices })
    }

    /// Every target row.
    pub fn all(num_targets: usize) -> Result<Self> {
        Self::new((0..num_targets).collect(), num_targets)
    }

    /// `size` distinct rows drawn uniformly; `size = 0` or `size ≥ V` means all.
    pub fn sample(num_targets: usize, size: usize, seed: u64) -> Result<Self> {
        if size == 0 || size >= num_targets {
            return Self::all(num_targets);
        }
        let mut rng = seeded(seed, STREAM_POOL);
        Self::new(index::sample(&mut rng, num_targets, size).into_vec(), num_targets)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// The `cos` term subtracted from the GC rank.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum GcCosine {
    /// `rank − cos(ŷ, y)`: closer candidates win rank ties.
    #[default]
    Similarity,
    /// `rank − (1 − cos(ŷ, y))`.
    Distance,
}

impl fmt::Display for GcCosine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GcCosine::Similarity => "similarity",
            GcCosine::Distance => "distance",
        })
    }
}

impl FromStr for GcCosine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity" => Ok(GcCosine::Similarity),
            "distance" => Ok(GcCosine::Distance),
            other => Err(Error::Config(format!("unknown GC cosine mode {other:?}"))),
        }
    }
}

impl GcCosine {
    fn term(self, cos: f64) -> f64 {
        match self {
            GcCosine::Similarity => cos,
            GcCosine::Distance => 1.0 - cos,
        }
    }
}

/// For each candidate, the sorted similarities to every pool point. Built
/// once per index and pool, then shared by all queries.
#[derive(Debug, Clone)]
pub struct GcTable {
    pool_sims: Vec<Vec<f64>>,
    pool_len: usize,
    cosine: GcCosine,
}

impl GcTable {
    pub fn new(index: &RetrievalIndex, pool: &GcPool, cosine: GcCosine) -> Result<Self> {
        if let Some(&last) = pool.indices().last().filter(|&&i| i >= index.len()) {
            return Err(Error::invalid(format!("GC pool index {last} out of range 0..{}", index.len())));
        }
        let pool_sims = (0..index.len())
            .map(|y| {
                let mut s: Vec<f64> = pool.indices().iter().map(|&p| index.row_cos(y, p)).collect();
                s.sort_unstable_by(f64::total_cmp);
                s
            })
            .collect();
        Ok(Self {
            pool_sims,
            pool_len: pool.len(),
            cosine,
        })
    }

    /// `Rank_P(y, ŷ) − cos` for every candidate `y`, given `cos(ŷ, y)`.
    fn scores(&self, sims: &Array1<f64>) -> Vec<f64> {
        sims.iter()
            .zip(&self.pool_sims)
            .map(|(&c, sorted)| {
                let not_above = sorted.partition_point(|p| p.total_cmp(&c) != Ordering::Greater);
                let rank = 1 + self.pool_len - not_above;
                rank as f64 - self.cosine.term(c)
            })
            .collect()
    }
}

/// GC scores of every target for `y_hat`; lower is better.
pub fn gc_scores(y_hat: ArrayView1<f64>, index: &RetrievalIndex, table: &GcTable) -> Result<Vec<f64>> {
    if table.pool_sims.len() != index.len() {
        return Err(Error::DimensionMismatch {
            expected: index.len(),
            got: table.pool_sims.len(),
        });
    }
    let sims = index.similarities(y_hat)?;
    Ok(table.scores(&sims))
}

/// The `n` targets with the lowest GC score, best first.
pub fn gc_retrieve_with(y_hat: ArrayView1<f64>, index: &RetrievalIndex, table: &GcTable, n: usize) -> Result<Vec<usize>> {
    index.check_n(n)?;
    let scores = gc_scores(y_hat, index, table)?;
    Ok(top_n(index.len(), n, by_score(&scores)))
}

/// One-shot GC retrieval with similarity tiebreak; builds the pool table.
pub fn gc_retrieve(y_hat: ArrayView1<f64>, index: &RetrievalIndex, pool: &GcPool, n: usize) -> Result<Vec<usize>> {
    let table = GcTable::new(index, pool, GcCosine::Similarity)?;
    gc_retrieve_with(y_hat, index, &table, n)
}

#[derive(Debug, Clone, Copy)]
pub enum Method<'a> {
    Nn,
    Gc(&'a GcTable),
}

impl Method<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Nn => "nn",
            Method::Gc(_) => "gc",
        }
    }
}

/// Fraction of queries whose top-`n` list holds a gold target, one value
/// per entry of `ns`. Rows of `sources` are mapped through `params` first.
pub fn precision_at_ns(
    params: &ModelParams,
    sources: ArrayView2<f64>,
    gold: &[Vec<usize>],
    index: &RetrievalIndex,
    method: Method<'_>,
    ns: &[usize],
) -> Result<Vec<f64>> {
    if sources.nrows() == 0 {
        return Err(Error::invalid("precision needs at least one test pair"));
    }
    if sources.nrows() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: sources.nrows(),
            got: gold.len(),
        });
    }
    let max_n = ns.iter().copied().max().unwrap_or(0);
    index.check_n(max_n)?;
    let mapped = forward(params, sources)?;
    let mut hits = vec![0usize; ns.len()];
    for (y_hat, gold) in mapped.rows().into_iter().zip(gold) {
        let top = match method {
            Method::Nn => nn_retrieve(y_hat, index, max_n)?,
            Method::Gc(table) => gc_retrieve_with(y_hat, index, table, max_n)?,
        };
        for (h, &n) in hits.iter_mut().zip(ns) {
            if top[..n].iter().any(|t| gold.contains(t)) {
                *h += 1;
            }
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / gold.len() as f64).collect())
}

/// [`precision_at_ns`] for a single `n`.
pub fn precision_at_n(
    params: &ModelParams,
    sources: ArrayView2<f64>,
    gold: &[Vec<usize>],
    index: &RetrievalIndex,
    method: Method<'_>,
    n: usize,
) -> Result<f64> {
    Ok(precision_at_ns(params, sources, gold, index, method, &[n])?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::model::Activation;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn cosine_examples() {
        let u = array![1.0, 0.0];
        assert_eq!(cosine_similarity(u.view(), u.view()).unwrap(), 1.0);
        assert_eq!(cosine_similarity(u.view(), array![0.0, 2.0].view()).unwrap(), 0.0);
        let c = cosine_similarity(u.view(), array![1.0, 1.0].view()).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(cosine_similarity(u.view(), array![0.0, 0.0].view()).is_err());
    }

    #[test]
    fn index_rejects_zero_rows() {
        assert!(RetrievalIndex::new(array![[1.0, 0.0], [0.0, 0.0]]).is_err());
    }

    #[test]
    fn ranks_are_a_permutation() {
        let idx = RetrievalIndex::new(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let q = array![1.0, 0.2];
        let mut ranks: Vec<usize> = (0..3).map(|i| rank_in_targets(q.view(), i, &idx).unwrap()).collect();
        assert_eq!(rank_in_targets(q.view(), 0, &idx).unwrap(), 1);
        ranks.sort_unstable();
        assert_eq!(ranks, [1, 2, 3]);
        assert!(rank_in_targets(q.view(), 3, &idx).is_err());
    }

    #[test]
    fn nn_ties_prefer_lower_index() {
        let idx = RetrievalIndex::new(array![[0.0, 1.0], [2.0, 0.0], [1.0, 0.0], [3.0, 0.0]]).unwrap();
        assert_eq!(nn_retrieve(array![1.0, 0.0].view(), &idx, 4).unwrap(), [1, 2, 3, 0]);
        assert!(nn_retrieve(array![1.0, 0.0].view(), &idx, 5).is_err());
        assert!(nn_retrieve(array![0.0, 0.0].view(), &idx, 1).is_err());
    }

    #[test]
    fn gc_single_candidate_and_pool_validation() {
        let idx = RetrievalIndex::new(array![[1.0, 2.0]]).unwrap();
        let pool = GcPool::all(1).unwrap();
        assert_eq!(gc_retrieve(array![-1.0, 0.0].view(), &idx, &pool, 1).unwrap(), [0]);
        assert!(GcPool::new(vec![], 3).is_err());
        assert!(GcPool::new(vec![0, 0], 3).is_err());
        assert!(GcPool::new(vec![3], 3).is_err());
        let p = GcPool::sample(100, 10, 4).unwrap();
        assert_eq!(p.len(), 10);
        assert_eq!(p, GcPool::sample(100, 10, 4).unwrap());
        assert_eq!(GcPool::sample(5, 0, 4).unwrap().len(), 5);
    }

    #[test]
    fn gc_distance_variant_flips_the_tiebreak() {
        // The pool point is far from both candidates, so each ranks the
        // query first and only the cosine term separates them. Under the
        // distance variant the far pool point itself wins.
        let idx = RetrievalIndex::new(array![[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]).unwrap();
        let pool = GcPool::new(vec![2], 3).unwrap();
        let q = array![1.0, 0.5];
        let c0 = cosine_similarity(q.view(), idx.targets().row(0)).unwrap();
        let c1 = cosine_similarity(q.view(), idx.targets().row(1)).unwrap();
        let sim = GcTable::new(&idx, &pool, GcCosine::Similarity).unwrap();
        let s = gc_scores(q.view(), &idx, &sim).unwrap();
        assert_eq!(&s[..2], &[1.0 - c0, 1.0 - c1]);
        assert_eq!(gc_retrieve_with(q.view(), &idx, &sim, 2).unwrap(), [0, 1]);
        let dist = GcTable::new(&idx, &pool, GcCosine::Distance).unwrap();
        let d = gc_scores(q.view(), &idx, &dist).unwrap();
        assert_eq!(&d[..2], &[1.0 - (1.0 - c0), 1.0 - (1.0 - c1)]);
        assert_eq!(gc_retrieve_with(q.view(), &idx, &dist, 2).unwrap(), [2, 1]);
        assert_eq!("distance".parse::<GcCosine>().unwrap(), GcCosine::Distance);
        assert!("cos".parse::<GcCosine>().is_err());
    }

    #[test]
    fn precision_identity_map_is_perfect() {
        let mut rng = seeded(3, 0);
        let t = Array2::from_shape_simple_fn((30, 4), || StandardNormal.sample(&mut rng));
        let idx = RetrievalIndex::new(t.clone()).unwrap();
        let p = ModelParams::linear(Array2::eye(4), Array1::zeros(4)).unwrap();
        let gold: Vec<Vec<usize>> = (0..30).map(|i| vec![i]).collect();
        assert_eq!(precision_at_n(&p, t.view(), &gold, &idx, Method::Nn, 1).unwrap(), 1.0);
        let table = GcTable::new(&idx, &GcPool::all(30).unwrap(), GcCosine::Similarity).unwrap();
        let ps = precision_at_ns(&p, t.view(), &gold, &idx, Method::Gc(&table), &[1, 5, 30]).unwrap();
        assert_eq!(ps[2], 1.0);
        assert!(ps[0] <= ps[1] && ps[1] <= ps[2]);
        assert!(precision_at_n(&p, t.slice(ndarray::s![..0, ..]), &[], &idx, Method::Nn, 1).is_err());
    }

    #[test]
    fn random_map_precision_is_near_chance() {
        let v = 50;
        let mut total = 0.0;
        let trials = 40;
        for seed in 0..trials {
            let mut rng = seeded(seed, 9);
            let t = Array2::from_shape_simple_fn((v, 5), || StandardNormal.sample(&mut rng));
            let src = Array2::from_shape_simple_fn((v, 5), || StandardNormal.sample(&mut rng));
            let idx = RetrievalIndex::new(t).unwrap();
            let p = init_params(5, 5, &[], Activation::Identity, seed).unwrap();
            let gold: Vec<Vec<usize>> = (0..v).map(|_| vec![rng.random_range(0..v)]).collect();
            total += precision_at_n(&p, src.view(), &gold, &idx, Method::Nn, 1).unwrap();
        }
        // Mean of 2000 Bernoulli(1/50) draws: sd ≈ 0.003.
        let mean = total / trials as f64;
        assert!((mean - 1.0 / v as f64).abs() < 0.012, "{mean}");
    }
}
