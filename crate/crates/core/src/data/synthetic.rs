use ndarray::{array, Array2, Axis};
use rand::seq::index;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use super::{EmbeddingTable, Lexicon};
use crate::error::{Error, Result};
use crate::rng::{seeded, STREAM_FRESH};

/// Noise standard deviation for the linear-map task (variance 0.1).
pub const SYNTHETIC_NOISE_STD: f64 = 0.316_227_766_016_837_94;
/// Noise standard deviation for the rotation toy.
pub const TOY_NOISE_STD: f64 = 0.1;

/// A source cloud, its noisy image under a known linear map, and the
/// indices of the rows whose pairing is revealed to the learner.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub source: Array2<f64>,
    pub target: Array2<f64>,
    /// `d × d`; targets are `ground_truth · source_i + noise`.
    pub ground_truth: Array2<f64>,
    pub noise_sigma: f64,
    pub paired_indices: Vec<usize>,
    seed: u64,
}

impl SyntheticTask {
    pub fn dim(&self) -> usize {
        self.source.ncols()
    }

    pub fn len(&self) -> usize {
        self.source.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.source.nrows() == 0
    }

    /// Rows selected by `paired_indices`, in that order.
    pub fn paired(&self) -> (Array2<f64>, Array2<f64>) {
        (
            self.source.select(Axis(0), &self.paired_indices),
            self.target.select(Axis(0), &self.paired_indices),
        )
    }

    /// Source and target as embedding tables with words "0", "1", …, and
    /// the lexicon pairing each row with its own image.
    pub fn to_embeddings(&self) -> (EmbeddingTable, EmbeddingTable, Lexicon) {
        let source = EmbeddingTable::with_integer_vocab(self.source.clone());
        let target = EmbeddingTable::with_integer_vocab(self.target.clone());
        let pairs = source.vocab().iter().map(|w| (w.clone(), w.clone())).collect();
        (source, target, Lexicon { pairs, dropped_oov: 0 })
    }

    /// Fresh Gaussian source rows pushed through the same map and noise,
    /// for held-out evaluation. Only meaningful for the linear-map task.
    pub fn draw_fresh(&self, n: usize, stream_offset: u64) -> (Array2<f64>, Array2<f64>) {
        let mut rng = seeded(self.seed, STREAM_FRESH + stream_offset);
        let d = self.dim();
        let source = Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng));
        let target = apply_with_noise(&source, &self.ground_truth, self.noise_sigma, &mut rng);
        (source, target)
    }
}

fn apply_with_noise(source: &Array2<f64>, map: &Array2<f64>, noise_sigma: f64, rng: &mut impl rand::Rng) -> Array2<f64> {
    let mut target = source.dot(&map.t());
    if noise_sigma > 0.0 {
        let noise = Normal::new(0.0, noise_sigma).expect("finite std");
        target.mapv_inplace(|v| v + noise.sample(rng));
    }
    target
}

/// Standard-normal source in `d` dimensions, standard-normal `d × d`
/// ground truth, Gaussian noise of standard deviation `noise_sigma`.
pub fn gen_synthetic(d: usize, n: usize, noise_sigma: f64, num_paired: usize, seed: u64) -> Result<SyntheticTask> {
    if d == 0 {
        return Err(Error::invalid("synthetic dimension must be positive"));
    }
    if num_paired > n {
        return Err(Error::invalid(format!("cannot pair {num_paired} of {n} points")));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::invalid(format!("noise std must be nonnegative, got {noise_sigma}")));
    }
    let mut rng = seeded(seed, 0);
    let ground_truth = Array2::from_shape_simple_fn((d, d), || StandardNormal.sample(&mut rng));
    let source = Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng));
    let target = apply_with_noise(&source, &ground_truth, noise_sigma, &mut rng);
    let paired_indices = index::sample(&mut rng, n, num_paired).into_vec();
    Ok(SyntheticTask {
        source,
        target,
        ground_truth,
        noise_sigma,
        paired_indices,
        seed,
    })
}

/// Matrix of a clockwise rotation by `degrees`, acting on column vectors.
pub fn rotation_clockwise(degrees: f64) -> Array2<f64> {
    let (s, c) = degrees.to_radians().sin_cos();
    array![[c, s], [-s, c]]
}

/// Uniform points on the unit square centred at the origin, rotated
/// clockwise by `theta_star_degrees` plus Gaussian noise. Only the first
/// point's pairing is revealed.
pub fn gen_rotation_toy(n_points: usize, theta_star_degrees: f64, noise_sigma: f64, seed: u64) -> Result<SyntheticTask> {
    if n_points < 2 {
        return Err(Error::invalid("rotation toy needs at least 2 points"));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::invalid(format!("noise std must be nonnegative, got {noise_sigma}")));
    }
    let mut rng = seeded(seed, 0);
    let uniform = Uniform::new(-0.5, 0.5).expect("valid range");
    let source = Array2::from_shape_simple_fn((n_points, 2), || uniform.sample(&mut rng));
    let ground_truth = rotation_clockwise(theta_star_degrees);
    let target = apply_with_noise(&source, &ground_truth, noise_sigma, &mut rng);
    Ok(SyntheticTask {
        source,
        target,
        ground_truth,
        noise_sigma,
        paired_indices: vec![0],
        seed,
    })
}
