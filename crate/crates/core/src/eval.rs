//! Score matrices, CMC curves and multi-split scenario evaluation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::cca::{fit_cca, fuse, CcaError, CcaModel, FeatureSide, Modalities, Scenario};
use crate::dataset::{Dataset, Sample, SplitAssignment, View};
use crate::features::Standardizer;
use crate::linalg::Matrix;
use crate::rng::{derive_seed, CounterRng, RngExt};
use crate::xqda::{fit_xqda, XqdaConfig, XqdaError, XqdaModel};

const GALLERY_STREAM: u64 = 1;
const FLIP_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("no probes to evaluate")]
    NoProbes,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("probe identity {0:?} has no gallery entry")]
    ProbeIdentityAbsent(String),
    #[error("cannot flip {n} of {bits} bits")]
    NOutOfRange { n: usize, bits: usize },
    #[error("scenario {0} needs {1} for every sample")]
    MissingModality(Scenario, &'static str),
    #[error("split {0} has no training identities with both views")]
    EmptyTrainingSet(usize),
    #[error("no results to aggregate")]
    NothingToAggregate,
    #[error(transparent)]
    Cca(#[from] CcaError),
    #[error(transparent)]
    Xqda(#[from] XqdaError),
}

/// Cumulative match characteristic of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CmcResult {
    /// `accuracies[K-1]` is the fraction of probes matched within the top `K`.
    pub accuracies: Vec<f64>,
    /// 1-based rank of the first correct match, per probe.
    pub ranks: Vec<usize>,
    pub gallery_size: usize,
}

impl CmcResult {
    pub fn probes(&self) -> usize {
        self.ranks.len()
    }

    /// Rank-`k` accuracy; 1 beyond the gallery size.
    pub fn rank_at(&self, k: usize) -> f64 {
        assert!(k >= 1);
        self.accuracies.get(k - 1).copied().unwrap_or(1.0)
    }
}

/// Per-split curves with their mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport {
    pub label: String,
    pub splits: Vec<CmcResult>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SplitReport {
    pub fn mean_at(&self, k: usize) -> f64 {
        self.mean.get(k - 1).copied().unwrap_or(1.0)
    }

    pub fn std_at(&self, k: usize) -> f64 {
        self.std.get(k - 1).copied().unwrap_or(0.0)
    }
}

/// `P × G` matrix with entry `(p, g) = scorer(gallery[g], probes[p])`.
pub fn score_matrix<G, P, F>(gallery: &[G], probes: &[P], scorer: F) -> Result<Matrix, EvalError>
where
    G: AsRef<[f64]>,
    P: AsRef<[f64]>,
    F: Fn(&[f64], &[f64]) -> f64,
{
    if gallery.is_empty() {
        return Err(EvalError::EmptyGallery);
    }
    let d = gallery[0].as_ref().len();
    if gallery.iter().any(|g| g.as_ref().len() != d) || probes.iter().any(|p| p.as_ref().len() != d) {
        return Err(EvalError::ShapeMismatch("gallery and probe features differ in length"));
    }
    Ok(Matrix::from_fn(probes.len(), gallery.len(), |p, g| scorer(gallery[g].as_ref(), probes[p].as_ref())))
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// CMC of a `P × G` score matrix (lower is better). Gallery entries are
/// ranked by ascending score with ties broken by gallery index.
pub fn cmc<S: AsRef<str>>(scores: &Matrix, gallery_ids: &[S], probe_ids: &[S]) -> Result<CmcResult, EvalError> {
    let g = gallery_ids.len();
    if g == 0 {
        return Err(EvalError::EmptyGallery);
    }
    if scores.rows() != probe_ids.len() || scores.cols() != g {
        return Err(EvalError::ShapeMismatch("score matrix does not match the id lists"));
    }
    let mut ranks = Vec::with_capacity(probe_ids.len());
    for (p, pid) in probe_ids.iter().enumerate() {
        let pid = pid.as_ref();
        let row = scores.row(p);
        let mut order: Vec<usize> = (0..g).collect();
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        let pos = order
            .iter()
            .position(|&j| gallery_ids[j].as_ref() == pid)
            .ok_or_else(|| EvalError::ProbeIdentityAbsent(pid.into()))?;
        ranks.push(pos + 1);
    }
    let mut hits = vec![0usize; g];
    for &r in &ranks {
        hits[r - 1] += 1;
    }
    let total = ranks.len().max(1) as f64;
    let mut acc = 0usize;
    let accuracies = hits
        .into_iter()
        .map(|h| {
            acc += h;
            acc as f64 / total
        })
        .collect();
    Ok(CmcResult { accuracies, ranks, gallery_size: g })
}

/// Collapses a multi-image gallery to one column per identity holding the
/// minimum score; identities are returned in first-appearance order.
pub fn collapse_min<S: AsRef<str>>(scores: &Matrix, gallery_ids: &[S]) -> (Matrix, Vec<String>) {
    let mut ids: Vec<String> = Vec::new();
    let mut column: Vec<usize> = Vec::with_capacity(gallery_ids.len());
    for id in gallery_ids {
        let id = id.as_ref();
        match ids.iter().position(|x| x == id) {
            Some(c) => column.push(c),
            None => {
                column.push(ids.len());
                ids.push(id.into());
            }
        }
    }
    let mut out = Matrix::from_fn(scores.rows(), ids.len(), |_, _| f64::INFINITY);
    for p in 0..scores.rows() {
        let row = out.row_mut(p);
        for (j, &c) in column.iter().enumerate() {
            row[c] = row[c].min(scores[(p, j)]);
        }
    }
    (out, ids)
}

/// Mean and population standard deviation at each rank. Curves of different
/// gallery sizes are padded with 1.
pub fn aggregate(label: impl Into<String>, splits: Vec<CmcResult>) -> Result<SplitReport, EvalError> {
    if splits.is_empty() {
        return Err(EvalError::NothingToAggregate);
    }
    let g = splits.iter().map(|c| c.gallery_size).max().unwrap_or(0);
    let n = splits.len() as f64;
    let mut mean = vec![0.0; g];
    let mut std = vec![0.0; g];
    for k in 1..=g {
        let m = splits.iter().map(|c| c.rank_at(k)).sum::<f64>() / n;
        let v = splits.iter().map(|c| (c.rank_at(k) - m) * (c.rank_at(k) - m)).sum::<f64>() / n;
        mean[k - 1] = m;
        std[k - 1] = libm::sqrt(v);
    }
    Ok(SplitReport { label: label.into(), splits, mean, std })
}

/// Inverts exactly `n` distinct, uniformly chosen positions.
pub fn flip_attributes(bits: &[bool], n: usize, rng: &mut CounterRng) -> Result<Vec<bool>, EvalError> {
    if n > bits.len() {
        return Err(EvalError::NOutOfRange { n, bits: bits.len() });
    }
    let mut out = bits.to_vec();
    for i in rng.distinct_indices(bits.len(), n) {
        out[i] = !out[i];
    }
    Ok(out)
}

/// Seed of split `index` under `master`.
pub fn split_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, index as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GalleryMode {
    /// One randomly chosen view-1 image per test identity.
    SingleShot,
    /// Every view-1 image; an identity scores as its best image.
    MultiShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Xqda,
    Euclidean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Canonical pairs kept; `None` means `min(d_x, d_y, 128)`.
    pub cca_k: Option<usize>,
    pub cca_eps: f64,
    /// Standardize CCA inputs with training statistics.
    pub cca_zscore: bool,
    pub xqda: XqdaConfig,
    /// Standardize matching features with training statistics before XQDA.
    pub xqda_zscore: bool,
    pub metric: Metric,
    pub gallery: GalleryMode,
    /// Attribute bits flipped per (identity, view).
    pub attribute_flips: usize,
    /// Used as-is instead of fitting CCA on each split.
    pub cca_model: Option<CcaModel>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cca_k: None,
            cca_eps: crate::cca::DEFAULT_EPS,
            cca_zscore: false,
            xqda: XqdaConfig::default(),
            xqda_zscore: false,
            metric: Metric::Xqda,
            gallery: GalleryMode::SingleShot,
            attribute_flips: 0,
            cca_model: None,
        }
    }
}

/// Checks that every sample carries the modalities `scenario` needs.
pub fn check_modalities(dataset: &Dataset, scenario: Scenario) -> Result<(), EvalError> {
    if scenario.needs_vision() && !dataset.all_have_vision() {
        return Err(EvalError::MissingModality(scenario, "vision features"));
    }
    if scenario.needs_language() && !dataset.all_have_language() {
        return Err(EvalError::MissingModality(scenario, "language features"));
    }
    if scenario.needs_attributes() && !dataset.all_have_attributes() {
        return Err(EvalError::MissingModality(scenario, "attributes"));
    }
    Ok(())
}

/// Per-(identity, view) flip masks drawn in identity order, view 1 first.
fn flip_masks(
    dataset: &Dataset,
    n: usize,
    seed: u64,
) -> Result<BTreeMap<(String, View), Vec<bool>>, EvalError> {
    let bits = dataset.attribute_len().unwrap_or(0);
    let mut rng = CounterRng::new(derive_seed(seed, FLIP_STREAM));
    let zeros = vec![false; bits];
    let mut masks = BTreeMap::new();
    for id in dataset.identities() {
        for view in [View::One, View::Two] {
            masks.insert((id.clone(), view), flip_attributes(&zeros, n, &mut rng)?);
        }
    }
    Ok(masks)
}

fn fit_split_cca(train: &[&Sample], config: &PipelineConfig) -> Result<CcaModel, EvalError> {
    let xs: Vec<&[f64]> = train.iter().map(|s| s.vision.as_deref().unwrap_or(&[])).collect();
    let ys: Vec<&[f64]> = train.iter().map(|s| s.language.as_deref().unwrap_or(&[])).collect();
    let k = config.cca_k.unwrap_or_else(|| xs[0].len().min(ys[0].len()).min(crate::cca::DEFAULT_RANK_BUDGET));
    if config.cca_zscore {
        let sx = Standardizer::fit(&xs);
        let sy = Standardizer::fit(&ys);
        let zx: Vec<Vec<f64>> = xs.iter().map(|r| sx.apply(r)).collect();
        let zy: Vec<Vec<f64>> = ys.iter().map(|r| sy.apply(r)).collect();
        let m = fit_cca(&rows(&zx)?, &rows(&zy)?, k, config.cca_eps)?;
        Ok(m.compose_input_scaling(&sx, &sy))
    } else {
        Ok(fit_cca(&rows(&xs)?, &rows(&ys)?, k, config.cca_eps)?)
    }
}

fn rows<R: AsRef<[f64]>>(r: &[R]) -> Result<Matrix, EvalError> {
    Matrix::from_rows(r).map_err(|e| EvalError::Cca(CcaError::Linalg(e)))
}

/// One split: fit on training identities, match view-1 gallery against view-2 probes.
pub fn evaluate_split(
    dataset: &Dataset,
    split: &SplitAssignment,
    scenario: Scenario,
    config: &PipelineConfig,
    seed: u64,
) -> Result<CmcResult, EvalError> {
    check_modalities(dataset, scenario)?;
    let samples = dataset.samples();
    let masks = if scenario.needs_attributes() { Some(flip_masks(dataset, config.attribute_flips, seed)?) } else { None };
    let attributes = |s: &Sample| -> Option<Vec<bool>> {
        let bits = s.attributes.as_ref()?;
        match &masks {
            Some(m) => {
                let mask = &m[&(s.identity.clone(), s.view)];
                Some(bits.iter().zip(mask).map(|(b, f)| b ^ f).collect())
            }
            None => Some(bits.clone()),
        }
    };
    let feature = |s: &Sample, model: Option<&CcaModel>, side: FeatureSide| -> Result<Vec<f64>, EvalError> {
        let attrs = attributes(s);
        let m = Modalities { vision: s.vision.as_deref(), language: s.language.as_deref(), attributes: attrs.as_deref() };
        Ok(fuse(scenario, m, model, side)?)
    };
    let side_of = |s: &Sample| if s.view == View::One { FeatureSide::Gallery } else { FeatureSide::Query };

    let train: Vec<&Sample> = samples.iter().filter(|s| split.is_train(&s.identity)).collect();
    let fitted;
    let cca = if scenario.needs_cca() {
        match &config.cca_model {
            Some(m) => Some(m),
            None => {
                if train.len() < 2 {
                    return Err(EvalError::EmptyTrainingSet(split.index));
                }
                fitted = fit_split_cca(&train, config)?;
                Some(&fitted)
            }
        }
    } else {
        None
    };

    // Matching features for training and test samples.
    let train_feats: Vec<Vec<f64>> = train.iter().map(|s| feature(s, cca, side_of(s))).collect::<Result<_, _>>()?;
    // Attribute bits are always balanced against vision by joint z-scoring.
    let standardize = config.xqda_zscore || scenario == Scenario::VAxVA;
    let zscore = if standardize && !train_feats.is_empty() { Some(Standardizer::fit(&train_feats)) } else { None };
    let finish = |v: Vec<f64>| match &zscore {
        Some(z) => z.apply(&v),
        None => v,
    };

    let scorer: XqdaOrEuclid = match config.metric {
        Metric::Euclidean => XqdaOrEuclid::Euclidean,
        Metric::Xqda => {
            let xs: Vec<Vec<f64>> = train_feats.iter().cloned().map(&finish).collect();
            if xs.is_empty() {
                return Err(EvalError::EmptyTrainingSet(split.index));
            }
            let ids: Vec<&str> = train.iter().map(|s| s.identity.as_str()).collect();
            let views: Vec<View> = train.iter().map(|s| s.view).collect();
            XqdaOrEuclid::Xqda(fit_xqda(&rows(&xs)?, &ids, &views, &config.xqda)?)
        }
    };

    let mut gallery_pool: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
    for s in samples.iter().filter(|s| split.is_test(&s.identity) && s.view == View::One) {
        gallery_pool.entry(s.identity.as_str()).or_default().push(s);
    }
    let mut pick = CounterRng::new(derive_seed(seed, GALLERY_STREAM));
    let gallery: Vec<&Sample> = match config.gallery {
        GalleryMode::SingleShot => gallery_pool.values().map(|v| v[pick.below(v.len())]).collect(),
        GalleryMode::MultiShot => gallery_pool.values().flatten().copied().collect(),
    };
    let probes: Vec<&Sample> =
        samples.iter().filter(|s| split.is_test(&s.identity) && s.view == View::Two).collect();
    if probes.is_empty() {
        return Err(EvalError::NoProbes);
    }

    let gfeat: Vec<Vec<f64>> =
        gallery.iter().map(|s| feature(s, cca, FeatureSide::Gallery).map(&finish)).collect::<Result<_, _>>()?;
    let pfeat: Vec<Vec<f64>> =
        probes.iter().map(|s| feature(s, cca, FeatureSide::Query).map(&finish)).collect::<Result<_, _>>()?;
    let scores = match &scorer {
        XqdaOrEuclid::Euclidean => score_matrix(&gfeat, &pfeat, squared_euclidean)?,
        XqdaOrEuclid::Xqda(m) => score_matrix(&gfeat, &pfeat, |g, q| m.score(g, q).unwrap_or(f64::NAN))?,
    };
    let gids: Vec<&str> = gallery.iter().map(|s| s.identity.as_str()).collect();
    let pids: Vec<&str> = probes.iter().map(|s| s.identity.as_str()).collect();
    match config.gallery {
        GalleryMode::SingleShot => cmc(&scores, &gids, &pids),
        GalleryMode::MultiShot => {
            let (collapsed, ids) = collapse_min(&scores, &gids);
            let pids: Vec<String> = pids.iter().map(|s| String::from(*s)).collect();
            cmc(&collapsed, &ids, &pids)
        }
    }
}

enum XqdaOrEuclid {
    Xqda(XqdaModel),
    Euclidean,
}

/// Runs every split sequentially, deriving each split's seed from `master`.
pub fn evaluate_scenario(
    dataset: &Dataset,
    splits: &[SplitAssignment],
    scenario: Scenario,
    config: &PipelineConfig,
    master: u64,
) -> Result<SplitReport, EvalError> {
    let results = splits
        .iter()
        .enumerate()
        .map(|(i, s)| evaluate_split(dataset, s, scenario, config, split_seed(master, i)))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate(scenario.name(), results)
}

/// VAxVA evaluation for each flip count.
pub fn attribute_degradation_sweep(
    dataset: &Dataset,
    splits: &[SplitAssignment],
    flips: &[usize],
    config: &PipelineConfig,
    master: u64,
) -> Result<Vec<(usize, SplitReport)>, EvalError> {
    flips
        .iter()
        .map(|&n| {
            let cfg = PipelineConfig { attribute_flips: n, ..config.clone() };
            let mut report = evaluate_scenario(dataset, splits, Scenario::VAxVA, &cfg, master)?;
            report.label = alloc::format!("VAxVA N={n}");
            Ok((n, report))
        })
        .collect()
}
