//! Seeded paired-modality data and brute-force oracles.
//!
//! Each identity `i` draws a shared latent `z ~ N(0, I_s)` plus private
//! latents `p_x`, `p_y`. Each view perturbs the shared part,
//! `z_v = z + τ·n_v`, and every sample is
//!
//! ```text
//! x = A [z_v; p_x] + σ_x ε_x
//! y = g B [z_v; p_y] + σ_y ε_y
//! ```
//!
//! with fixed standard-normal mixings `A`, `B` and language gain `g`.
//! Randomness comes from [`CounterRng`] streams: one for the mixings, one per
//! identity and one for the attributes, so identities can be generated in any
//! order. Attribute vectors are distinct per identity.
//!
//! The oracles share nothing with the modules they check except [`Matrix`]
//! storage.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dataset::{random_splits, Dataset, Sample, SplitAssignment, View};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, CounterRng, RngExt};

const MIXING_STREAM: u64 = u64::MAX;
const ATTRIBUTE_STREAM: u64 = u64::MAX - 1;
const SPLIT_STREAM: u64 = u64::MAX - 2;

/// Largest pair count the enumeration oracle accepts.
pub const MAX_ORACLE_PAIRS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(&'static str),
    #[error("grid oracle needs 2-D inputs, got {0} and {1}")]
    DimensionNotTwo(usize, usize),
    #[error("need at least 2 paired samples")]
    TooFewSamples,
    #[error("{0} pairs exceed the enumeration limit")]
    TooLarge(usize),
    #[error("need at least 2 identities, got {0}")]
    TooFewIdentities(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub identities: usize,
    pub samples_per_view: usize,
    pub shared_dim: usize,
    pub vision_private_dim: usize,
    pub language_private_dim: usize,
    pub vision_dim: usize,
    pub language_dim: usize,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub language_gain: f64,
    pub view_shift: f64,
    pub attribute_bits: usize,
    pub splits: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// 50 identities, 4 samples per view, `s = 5`, `d_x = 32`, `d_y = 16`, σ = 0.5.
    pub fn cca_reference() -> Self {
        Self {
            identities: 50,
            samples_per_view: 4,
            shared_dim: 5,
            vision_private_dim: 0,
            language_private_dim: 0,
            vision_dim: 32,
            language_dim: 16,
            sigma_x: 0.5,
            sigma_y: 0.5,
            language_gain: 1.0,
            view_shift: 0.0,
            attribute_bits: 15,
            splits: 20,
            seed: 42,
        }
    }

    /// Configuration behind the scenario ordering benchmark. Language is
    /// twice as noisy as vision and each modality carries identity
    /// information the other lacks.
    pub fn scenario_reference() -> Self {
        Self {
            identities: 100,
            samples_per_view: 4,
            shared_dim: 5,
            vision_private_dim: 4,
            language_private_dim: 1,
            vision_dim: 32,
            language_dim: 16,
            sigma_x: 3.0,
            sigma_y: 6.0,
            language_gain: 3.0,
            view_shift: 0.0,
            attribute_bits: 15,
            splits: 20,
            seed: 42,
        }
    }

    /// Configuration behind the attribute-flip sweep.
    pub fn attribute_reference() -> Self {
        Self {
            identities: 100,
            samples_per_view: 2,
            shared_dim: 5,
            vision_private_dim: 0,
            language_private_dim: 0,
            vision_dim: 32,
            language_dim: 16,
            sigma_x: 3.0,
            sigma_y: 3.0,
            language_gain: 1.0,
            view_shift: 0.5,
            attribute_bits: 15,
            splits: 10,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let scales = [self.sigma_x, self.sigma_y, self.language_gain, self.view_shift];
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(SynthError::InvalidConfig("scales must be finite and non-negative"));
        }
        if self.identities < 1 || self.samples_per_view < 1 || self.shared_dim < 1 {
            return Err(SynthError::InvalidConfig("counts must be at least 1"));
        }
        if self.vision_dim < 1 || self.language_dim < 1 {
            return Err(SynthError::InvalidConfig("feature dimensions must be at least 1"));
        }
        if self.attribute_bits > 63 || (self.attribute_bits < 64 && (self.identities as u64) > (1u64 << self.attribute_bits))
        {
            return Err(SynthError::InvalidConfig("too few attribute bits for distinct identity vectors"));
        }
        Ok(())
    }

    pub fn identity_name(i: usize) -> String {
        format!("id{i:04}")
    }
}

fn normal_matrix(rows: usize, cols: usize, scale: f64, rng: &mut CounterRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.normal())
}

fn normals(n: usize, rng: &mut CounterRng) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Generates the full dataset: identities in order, view 1 before view 2.
pub fn gen_paired(config: &SynthConfig) -> Result<Dataset, SynthError> {
    config.validate()?;
    let c = config;
    let s = c.shared_dim;
    let mut mix = CounterRng::new(derive_seed(c.seed, MIXING_STREAM));
    let a = normal_matrix(c.vision_dim, s + c.vision_private_dim, 1.0, &mut mix);
    let b = normal_matrix(c.language_dim, s + c.language_private_dim, c.language_gain, &mut mix);

    let mut attr_rng = CounterRng::new(derive_seed(c.seed, ATTRIBUTE_STREAM));
    let codes: Vec<usize> = if c.attribute_bits > 0 {
        attr_rng.distinct_indices(1usize << c.attribute_bits, c.identities)
    } else {
        vec![0; c.identities]
    };

    let mut samples = Vec::with_capacity(c.identities * 2 * c.samples_per_view);
    for i in 0..c.identities {
        let mut rng = CounterRng::new(derive_seed(c.seed, i as u64));
        let z = normals(s, &mut rng);
        let px = normals(c.vision_private_dim, &mut rng);
        let py = normals(c.language_private_dim, &mut rng);
        let bits: Vec<bool> = (0..c.attribute_bits).map(|j| (codes[i] >> j) & 1 == 1).collect();
        for view in [View::One, View::Two] {
            let zv: Vec<f64> = z.iter().map(|v| v + c.view_shift * rng.normal()).collect();
            let lx = [zv.as_slice(), px.as_slice()].concat();
            let ly = [zv.as_slice(), py.as_slice()].concat();
            let (clean_x, clean_y) = (a.matvec(&lx), b.matvec(&ly));
            for _ in 0..c.samples_per_view {
                let x = clean_x.iter().map(|v| v + c.sigma_x * rng.normal()).collect();
                let y = clean_y.iter().map(|v| v + c.sigma_y * rng.normal()).collect();
                samples.push(
                    Sample::new(SynthConfig::identity_name(i), view)
                        .with_vision(x)
                        .with_language(y)
                        .with_attributes(bits.clone()),
                );
            }
        }
    }
    Dataset::new(samples).map_err(|_| SynthError::InvalidConfig("generated an inconsistent dataset"))
}

/// `config.splits` random half/half identity splits.
pub fn gen_splits(config: &SynthConfig) -> Vec<SplitAssignment> {
    let ids: Vec<String> = (0..config.identities).map(SynthConfig::identity_name).collect();
    let mut rng = CounterRng::new(derive_seed(config.seed, SPLIT_STREAM));
    random_splits(&ids, config.splits, config.identities / 2, &mut rng)
}

/// Largest correlation between `X u` and `Y v` over unit directions on a
/// 0.5° grid. Correlation is scale free, so each projection is implicitly
/// normalized to unit variance.
pub fn oracle_cca_grid(x: &Matrix, y: &Matrix) -> Result<f64, SynthError> {
    if x.cols() != 2 || y.cols() != 2 {
        return Err(SynthError::DimensionNotTwo(x.cols(), y.cols()));
    }
    if x.rows() != y.rows() {
        return Err(SynthError::ShapeMismatch("X and Y differ in sample count"));
    }
    let n = x.rows();
    if n < 2 {
        return Err(SynthError::TooFewSamples);
    }
    let mean = |m: &Matrix, j: usize| (0..n).map(|i| m[(i, j)]).sum::<f64>() / n as f64;
    let (mx, my) = ([mean(x, 0), mean(x, 1)], [mean(y, 0), mean(y, 1)]);
    let mut cxx = [[0.0; 2]; 2];
    let mut cyy = [[0.0; 2]; 2];
    let mut cxy = [[0.0; 2]; 2];
    for i in 0..n {
        let dx = [x[(i, 0)] - mx[0], x[(i, 1)] - mx[1]];
        let dy = [y[(i, 0)] - my[0], y[(i, 1)] - my[1]];
        for a in 0..2 {
            for b in 0..2 {
                cxx[a][b] += dx[a] * dx[b];
                cyy[a][b] += dy[a] * dy[b];
                cxy[a][b] += dx[a] * dy[b];
            }
        }
    }
    let quad = |c: &[[f64; 2]; 2], u: [f64; 2], v: [f64; 2]| {
        u[0] * (c[0][0] * v[0] + c[0][1] * v[1]) + u[1] * (c[1][0] * v[0] + c[1][1] * v[1])
    };
    let dir = |step: usize| {
        let t = (step as f64 * 0.5).to_radians();
        [libm::cos(t), libm::sin(t)]
    };
    let mut best = f64::NEG_INFINITY;
    for i in 0..360 {
        let u = dir(i);
        let vu = quad(&cxx, u, u);
        if vu <= 0.0 {
            continue;
        }
        for j in 0..720 {
            let v = dir(j);
            let vv = quad(&cyy, v, v);
            if vv <= 0.0 {
                continue;
            }
            let r = quad(&cxy, u, v) / libm::sqrt(vu * vv);
            if r > best {
                best = r;
            }
        }
    }
    Ok(best.max(0.0))
}

/// `(Σ_I, Σ_E)` by looping over every cross-view pair: second moments of
/// `x_view1 − x_view2`, each divided by its pair count.
pub fn oracle_pairwise_covariances<S: AsRef<str>>(
    features: &Matrix,
    identities: &[S],
    views: &[View],
) -> Result<(Matrix, Matrix), SynthError> {
    let n = features.rows();
    if identities.len() != n || views.len() != n {
        return Err(SynthError::ShapeMismatch("identities and views must match the feature rows"));
    }
    let mut distinct: Vec<&str> = identities.iter().map(AsRef::as_ref).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(SynthError::TooFewIdentities(distinct.len()));
    }
    let ones = views.iter().filter(|v| **v == View::One).count();
    let pairs = ones * (n - ones);
    if pairs > MAX_ORACLE_PAIRS {
        return Err(SynthError::TooLarge(pairs));
    }
    let d = features.cols();
    let mut intra = vec![0.0; d * d];
    let mut extra = vec![0.0; d * d];
    let (mut ni, mut ne) = (0usize, 0usize);
    for g in (0..n).filter(|&i| views[i] == View::One) {
        for q in (0..n).filter(|&i| views[i] == View::Two) {
            let diff: Vec<f64> = (0..d).map(|j| features[(g, j)] - features[(q, j)]).collect();
            let same = identities[g].as_ref() == identities[q].as_ref();
            let acc = if same { &mut intra } else { &mut extra };
            for a in 0..d {
                for b in 0..d {
                    acc[a * d + b] += diff[a] * diff[b];
                }
            }
            if same {
                ni += 1;
            } else {
                ne += 1;
            }
        }
    }
    let finish = |mut v: Vec<f64>, count: usize| {
        if count > 0 {
            v.iter_mut().for_each(|x| *x /= count as f64);
        }
        Matrix::new(d, d, v).expect("finite moments")
    };
    Ok((finish(intra, ni), finish(extra, ne)))
}

/// Monte Carlo CMC under i.i.d. uniform scores with the true match at a
/// random gallery slot. The analytic value at rank `K` is `K / G`.
pub fn oracle_cmc_chance(gallery: usize, probes: usize, trials: usize, rng: &mut CounterRng) -> Vec<f64> {
    assert!(gallery >= 1 && trials >= 1);
    let mut hits = vec![0u64; gallery];
    let mut scores = vec![0.0; gallery];
    for _ in 0..trials {
        for _ in 0..probes.max(1) {
            scores.iter_mut().for_each(|s| *s = rng.unit_f64());
            let truth = rng.below(gallery);
            let better = scores.iter().enumerate().filter(|(j, s)| **s < scores[truth] || (**s == scores[truth] && *j < truth)).count();
            hits[better] += 1;
        }
    }
    let total = (trials * probes.max(1)) as f64;
    let mut acc = 0u64;
    hits.into_iter()
        .map(|h| {
            acc += h;
            acc as f64 / total
        })
        .collect()
}
