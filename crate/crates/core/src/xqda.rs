//! Cross-view quadratic discriminant analysis.
//!
//! Intra- and extra-personal models are built from differences `x - z`
//! between a view-1 sample `x` and a view-2 sample `z`, over every
//! same-identity (intra) or different-identity (extra) pair. The second
//! moments are accumulated per identity and never enumerate pairs:
//!
//! ```text
//! n_I Σ_I = Σ_k [ n_k Σ_x xxᵀ + m_k Σ_z zzᵀ − S_xk S_zkᵀ − S_zk S_xkᵀ ]
//! ```
//!
//! where identity `k` has `m_k` view-1 samples summing to `S_xk` and `n_k`
//! view-2 samples summing to `S_zk`. The same formula on global totals gives
//! all cross-view pairs, and the extra-personal moment is the remainder.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dataset::View;
use crate::linalg::{gen_eigh, sym_pinv, LinalgError, Matrix};

pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_MAX_RANK: usize = 64;
const PINV_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum XqdaError {
    #[error("need at least 2 identities, got {0}")]
    TooFewIdentities(usize),
    #[error("an identity has no samples in view {0}")]
    MissingView(u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("intra- and extra-personal covariances both vanish")]
    DegenerateMetric,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XqdaConfig {
    /// Ridge `ε (tr/d) I` added to both covariances.
    pub eps: f64,
    pub max_rank: usize,
}

impl Default for XqdaConfig {
    fn default() -> Self {
        Self { eps: DEFAULT_EPS, max_rank: DEFAULT_MAX_RANK }
    }
}

/// Intra- and extra-personal difference moments with their pair counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceCovariances {
    pub intra: Matrix,
    pub extra: Matrix,
    pub intra_pairs: usize,
    pub extra_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XqdaModel {
    /// `d × r`.
    pub w: Matrix,
    /// `r × r`, symmetric.
    pub m: Matrix,
    pub mean: Vec<f64>,
    /// Generalized eigenvalues of the retained directions.
    pub eigenvalues: Vec<f64>,
    /// Set when no eigenvalue exceeded 1 and the leading direction was kept anyway.
    pub fallback: bool,
}

struct Moments {
    count: usize,
    sum: Vec<f64>,
    outer: Matrix,
}

impl Moments {
    fn new(d: usize) -> Self {
        Self { count: 0, sum: vec![0.0; d], outer: Matrix::zeros(d, d) }
    }

    fn push(&mut self, v: &[f64]) {
        self.count += 1;
        let d = v.len();
        for (s, x) in self.sum.iter_mut().zip(v) {
            *s += x;
        }
        for i in 0..d {
            let row = self.outer.row_mut(i);
            for j in 0..d {
                row[j] += v[i] * v[j];
            }
        }
    }
}

/// `n_z Q_x + n_x Q_z − S_x S_zᵀ − S_z S_xᵀ`: the summed outer products of
/// all differences between the two groups.
fn pair_moment(x: &Moments, z: &Moments) -> Matrix {
    let d = x.sum.len();
    Matrix::from_fn(d, d, |i, j| {
        z.count as f64 * x.outer[(i, j)] + x.count as f64 * z.outer[(i, j)]
            - x.sum[i] * z.sum[j]
            - z.sum[i] * x.sum[j]
    })
}

fn check_inputs<S: AsRef<str>>(features: &Matrix, identities: &[S], views: &[View]) -> Result<(), XqdaError> {
    if identities.len() != features.rows() || views.len() != features.rows() {
        return Err(XqdaError::ShapeMismatch("identities and views must match the feature rows"));
    }
    Ok(())
}

fn column_means(x: &Matrix) -> Vec<f64> {
    let mut m = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for (acc, v) in m.iter_mut().zip(x.row(i)) {
            *acc += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= x.rows() as f64);
    m
}

/// Closed-form `(Σ_I, Σ_E)` over cross-view differences, each divided by its
/// pair count. Features are centered on their global mean first, which leaves
/// every difference unchanged.
pub fn build_difference_covariances<S: AsRef<str>>(
    features: &Matrix,
    identities: &[S],
    views: &[View],
) -> Result<DifferenceCovariances, XqdaError> {
    check_inputs(features, identities, views)?;
    let d = features.cols();
    let mean = column_means(features);
    let mut groups: BTreeMap<&str, (Moments, Moments)> = BTreeMap::new();
    let mut total = (Moments::new(d), Moments::new(d));
    for i in 0..features.rows() {
        let v: Vec<f64> = features.row(i).iter().zip(&mean).map(|(a, b)| a - b).collect();
        let entry = groups.entry(identities[i].as_ref()).or_insert_with(|| (Moments::new(d), Moments::new(d)));
        match views[i] {
            View::One => {
                entry.0.push(&v);
                total.0.push(&v);
            }
            View::Two => {
                entry.1.push(&v);
                total.1.push(&v);
            }
        }
    }
    if groups.len() < 2 {
        return Err(XqdaError::TooFewIdentities(groups.len()));
    }
    let mut intra = Matrix::zeros(d, d);
    let mut intra_pairs = 0;
    for (x, z) in groups.values() {
        if x.count == 0 {
            return Err(XqdaError::MissingView(1));
        }
        if z.count == 0 {
            return Err(XqdaError::MissingView(2));
        }
        intra = intra.add(&pair_moment(x, z));
        intra_pairs += x.count * z.count;
    }
    let all = pair_moment(&total.0, &total.1);
    let extra = all.sub(&intra);
    let extra_pairs = total.0.count * total.1.count - intra_pairs;
    Ok(DifferenceCovariances {
        intra: intra.scale(1.0 / intra_pairs as f64).symmetric_part(),
        extra: extra.scale(1.0 / extra_pairs as f64).symmetric_part(),
        intra_pairs,
        extra_pairs,
    })
}

fn ridged(a: &Matrix, eps: f64) -> Matrix {
    let mut out = a.clone();
    out.add_diag(eps * a.trace() / a.rows() as f64);
    out
}

/// Learns the subspace from `gen_eigh(Σ_E', Σ_I')`, keeping directions whose
/// extra/intra variance ratio exceeds 1, and the kernel
/// `M = (Wᵀ Σ_I' W)⁻¹ − (Wᵀ Σ_E' W)⁻¹`.
pub fn fit_xqda<S: AsRef<str>>(
    features: &Matrix,
    identities: &[S],
    views: &[View],
    config: &XqdaConfig,
) -> Result<XqdaModel, XqdaError> {
    let cov = build_difference_covariances(features, identities, views)?;
    let scale = cov.intra.max_abs().max(cov.extra.max_abs());
    if scale <= f64::MIN_POSITIVE {
        return Err(XqdaError::DegenerateMetric);
    }
    let si = ridged(&cov.intra, config.eps);
    let se = ridged(&cov.extra, config.eps);
    let eig = gen_eigh(&se, &si)?;
    let above = eig.values.iter().take_while(|&&l| l > 1.0).count().min(config.max_rank.max(1));
    let fallback = above == 0;
    let r = above.max(1);
    let w = eig.vectors.leading_cols(r);
    let pi = sym_pinv(&w.t_matmul(&si.matmul(&w)).symmetric_part(), PINV_CUTOFF)?;
    let pe = sym_pinv(&w.t_matmul(&se.matmul(&w)).symmetric_part(), PINV_CUTOFF)?;
    let m = pi.sub(&pe).symmetric_part();
    Ok(XqdaModel { w, m, mean: column_means(features), eigenvalues: eig.values[..r].to_vec(), fallback })
}

impl XqdaModel {
    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    pub fn rank(&self) -> usize {
        self.w.cols()
    }

    /// `(g − q)ᵀ W M Wᵀ (g − q)`; lower is more similar.
    pub fn score(&self, gallery: &[f64], query: &[f64]) -> Result<f64, XqdaError> {
        if gallery.len() != self.dim() || query.len() != self.dim() {
            return Err(XqdaError::ShapeMismatch("feature length differs from the model"));
        }
        let diff: Vec<f64> = gallery.iter().zip(query).map(|(g, q)| g - q).collect();
        Ok(quadratic(&self.m, &self.w.t_matvec(&diff)))
    }
}

fn quadratic(m: &Matrix, u: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..u.len() {
        for j in 0..u.len() {
            s += u[i] * m[(i, j)] * u[j];
        }
    }
    s
}
