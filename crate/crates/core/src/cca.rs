//! Regularized canonical correlation analysis and scenario feature fusion.
//!
//! `fit_cca` maximizes `tr(W_xᵀ Σ_xy W_y)` subject to
//! `W_xᵀ Σ̂_xx W_x = W_yᵀ Σ̂_yy W_y = I`. Both views are whitened with
//! `Σ̂^{-1/2}` (pseudo-inverse below `1e-10 λ_max`), and the whitened
//! cross-covariance `T = Σ̂_xx^{-1/2} Σ_xy Σ̂_yy^{-1/2}` is diagonalized through
//! the Gram matrix of its smaller side. Canonical correlations are the square
//! roots of the Gram eigenvalues.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::features::{concat, signed_bits, Standardizer};
use crate::linalg::{eigh, sym_inv_sqrt, LinalgError, Matrix};

/// Default relative ridge on both covariances.
pub const DEFAULT_EPS: f64 = 1e-4;
/// Default cap on the number of retained canonical pairs.
pub const DEFAULT_RANK_BUDGET: usize = 128;
/// Whitening drops eigenvalues at or below this fraction of the largest.
pub const WHITENING_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CcaError {
    #[error("need at least 2 paired samples, got {0}")]
    TooFewSamples(usize),
    #[error("k = {k} outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("scenario {0} needs the {1} modality")]
    MissingModality(Scenario, &'static str),
    #[error("scenario {0} needs a fitted CCA model")]
    MissingModel(Scenario),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Paired projections and canonical correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct CcaModel {
    /// `d_x × k`.
    pub wx: Matrix,
    /// `d_y × k`.
    pub wy: Matrix,
    /// Descending, each in `[0, 1]`.
    pub correlations: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub eps: f64,
}

/// Which view a feature belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Vision.
    X,
    /// Language.
    Y,
}

/// `(1/n) X_cᵀ X_c + ε (tr/d) I` for samples in rows.
pub fn regularized_cov(x: &Matrix, eps: f64) -> Result<Matrix, CcaError> {
    let n = x.rows();
    if n < 2 {
        return Err(CcaError::TooFewSamples(n));
    }
    let xc = centered(x, &column_means(x));
    let mut cov = xc.t_matmul(&xc).scale(1.0 / n as f64);
    let ridge = eps * cov.trace() / cov.rows() as f64;
    cov.add_diag(ridge);
    Ok(cov.symmetric_part())
}

/// Fits `k` canonical pairs on row-aligned samples `x` (n × d_x) and `y` (n × d_y).
pub fn fit_cca(x: &Matrix, y: &Matrix, k: usize, eps: f64) -> Result<CcaModel, CcaError> {
    let n = x.rows();
    if y.rows() != n {
        return Err(CcaError::ShapeMismatch("X and Y must have the same number of rows"));
    }
    if n < 2 {
        return Err(CcaError::TooFewSamples(n));
    }
    let (dx, dy) = (x.cols(), y.cols());
    let kmax = dx.min(dy);
    if k == 0 || k > kmax {
        return Err(CcaError::KOutOfRange { k, max: kmax });
    }

    let mean_x = column_means(x);
    let mean_y = column_means(y);
    let xc = centered(x, &mean_x);
    let yc = centered(y, &mean_y);
    let sxx = regularized_cov(x, eps)?;
    let syy = regularized_cov(y, eps)?;
    let sxy = xc.t_matmul(&yc).scale(1.0 / n as f64);

    let kx = sym_inv_sqrt(&sxx, WHITENING_CUTOFF)?;
    let ky = sym_inv_sqrt(&syy, WHITENING_CUTOFF)?;
    let t = kx.matmul(&sxy).matmul(&ky);

    // Diagonalize through the smaller Gram matrix; the other side follows
    // from v = Tᵀ u / ρ (or u = T v / ρ).
    let (small, large) = if dx <= dy { (t.clone(), t.transpose()) } else { (t.transpose(), t.clone()) };
    let gram = small.matmul(&large);
    let eig = eigh(&gram)?;
    let correlations: Vec<f64> = eig.values[..k].iter().map(|&l| libm::sqrt(l.max(0.0)).min(1.0)).collect();
    let u_small = eig.vectors.leading_cols(k);
    let u_large = partner_vectors(&large, &u_small, &correlations);

    let (ux, uy) = if dx <= dy { (u_small, u_large) } else { (u_large, u_small) };
    Ok(CcaModel { wx: kx.matmul(&ux), wy: ky.matmul(&uy), correlations, mean_x, mean_y, eps })
}

/// Columns `large_op * u_i / ρ_i`; columns with vanishing `ρ_i` are filled by
/// Gram-Schmidt completion so the result stays orthonormal.
fn partner_vectors(large_op: &Matrix, u: &Matrix, rho: &[f64]) -> Matrix {
    let d = large_op.rows();
    let k = u.cols();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let mut v = if rho[i] > 1e-10 {
            let mut v = large_op.matvec(&u.col(i));
            v.iter_mut().for_each(|x| *x /= rho[i]);
            v
        } else {
            vec![0.0; d]
        };
        if rho[i] <= 1e-10 {
            v = completion_vector(d, &out);
        }
        out.push(v);
    }
    Matrix::from_fn(d, k, |r, c| out[c][r])
}

fn completion_vector(d: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    for e in 0..d {
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        for b in basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
    vec![0.0; d]
}

fn column_means(x: &Matrix) -> Vec<f64> {
    let mut m = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for (acc, v) in m.iter_mut().zip(x.row(i)) {
            *acc += v;
        }
    }
    let n = x.rows() as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

fn centered(x: &Matrix, mean: &[f64]) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] - mean[j])
}

impl CcaModel {
    pub fn k(&self) -> usize {
        self.correlations.len()
    }

    pub fn dim_x(&self) -> usize {
        self.wx.rows()
    }

    pub fn dim_y(&self) -> usize {
        self.wy.rows()
    }

    /// `Wᵀ (f - μ)` for the chosen side.
    pub fn project(&self, side: Side, feature: &[f64]) -> Result<Vec<f64>, CcaError> {
        let (w, mu) = match side {
            Side::X => (&self.wx, &self.mean_x),
            Side::Y => (&self.wy, &self.mean_y),
        };
        if feature.len() != w.rows() {
            return Err(CcaError::ShapeMismatch("feature length differs from the model side"));
        }
        let c: Vec<f64> = feature.iter().zip(mu).map(|(f, m)| f - m).collect();
        Ok(w.t_matvec(&c))
    }

    /// Folds input standardization into the model, so that projecting raw
    /// features equals projecting standardized ones with `self`.
    pub fn compose_input_scaling(&self, sx: &Standardizer, sy: &Standardizer) -> CcaModel {
        let fold = |w: &Matrix, mu: &[f64], s: &Standardizer| {
            let w2 = Matrix::from_fn(w.rows(), w.cols(), |i, j| w[(i, j)] / s.scale[i]);
            let mu2 = mu.iter().enumerate().map(|(i, m)| s.mean[i] + s.scale[i] * m).collect();
            (w2, mu2)
        };
        let (wx, mean_x) = fold(&self.wx, &self.mean_x, sx);
        let (wy, mean_y) = fold(&self.wy, &self.mean_y, sy);
        CcaModel { wx, wy, correlations: self.correlations.clone(), mean_x, mean_y, eps: self.eps }
    }
}

/// Gallery × query modality combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    VxV,
    LxL,
    VxL,
    VxVL,
    VLxVL,
    VAxVA,
}

impl Scenario {
    pub const ALL: [Scenario; 6] =
        [Scenario::VxV, Scenario::LxL, Scenario::VxL, Scenario::VxVL, Scenario::VLxVL, Scenario::VAxVA];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::VxV => "VxV",
            Scenario::LxL => "LxL",
            Scenario::VxL => "VxL",
            Scenario::VxVL => "VxVL",
            Scenario::VLxVL => "VLxVL",
            Scenario::VAxVA => "VAxVA",
        }
    }

    pub fn needs_vision(self) -> bool {
        !matches!(self, Scenario::LxL)
    }

    pub fn needs_language(self) -> bool {
        matches!(self, Scenario::LxL | Scenario::VxL | Scenario::VxVL | Scenario::VLxVL)
    }

    pub fn needs_attributes(self) -> bool {
        matches!(self, Scenario::VAxVA)
    }

    pub fn needs_cca(self) -> bool {
        matches!(self, Scenario::VxL | Scenario::VxVL)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = CcaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL.into_iter().find(|sc| sc.name() == s).ok_or_else(|| CcaError::UnknownScenario(s.into()))
    }
}

/// Whether a feature is built for the gallery or for the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSide {
    Gallery,
    Query,
}

/// Modalities available for one sample.
#[derive(Debug, Clone, Copy, Default)]
pub struct Modalities<'a> {
    pub vision: Option<&'a [f64]>,
    pub language: Option<&'a [f64]>,
    pub attributes: Option<&'a [bool]>,
}

/// Builds the matching feature for `scenario` on one side.
///
/// VxL maps gallery vision and query language into the canonical space;
/// VxVL keeps vision on both sides and appends the canonical projection of
/// gallery vision or query language; VLxVL concatenates both modalities;
/// VAxVA appends attribute bits as `±1`.
pub fn fuse(
    scenario: Scenario,
    m: Modalities<'_>,
    model: Option<&CcaModel>,
    side: FeatureSide,
) -> Result<Vec<f64>, CcaError> {
    let vision = || m.vision.ok_or(CcaError::MissingModality(scenario, "vision"));
    let language = || m.language.ok_or(CcaError::MissingModality(scenario, "language"));
    let model = || model.ok_or(CcaError::MissingModel(scenario));
    match (scenario, side) {
        (Scenario::VxV, _) => Ok(vision()?.to_vec()),
        (Scenario::LxL, _) => Ok(language()?.to_vec()),
        (Scenario::VxL, FeatureSide::Gallery) => model()?.project(Side::X, vision()?),
        (Scenario::VxL, FeatureSide::Query) => model()?.project(Side::Y, language()?),
        (Scenario::VxVL, FeatureSide::Gallery) => {
            let x = vision()?;
            Ok(concat(x, &model()?.project(Side::X, x)?))
        }
        (Scenario::VxVL, FeatureSide::Query) => {
            let x = vision()?;
            Ok(concat(x, &model()?.project(Side::Y, language()?)?))
        }
        (Scenario::VLxVL, _) => Ok(concat(vision()?, language()?)),
        (Scenario::VAxVA, _) => {
            let bits = m.attributes.ok_or(CcaError::MissingModality(scenario, "attribute"))?;
            Ok(concat(vision()?, &signed_bits(bits)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{CounterRng, RngExt};

    fn random_matrix(n: usize, d: usize, rng: &mut CounterRng) -> Matrix {
        Matrix::from_fn(n, d, |_, _| rng.normal())
    }

    fn identity_model(d: usize) -> CcaModel {
        CcaModel {
            wx: Matrix::identity(d),
            wy: Matrix::identity(d),
            correlations: vec![1.0; d],
            mean_x: vec![0.0; d],
            mean_y: vec![0.0; d],
            eps: 0.0,
        }
    }

    #[test]
    fn population_covariance() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(regularized_cov(&x, 0.0).unwrap(), Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap());
    }

    #[test]
    fn relative_ridge() {
        // Four points with identity population covariance.
        let x = Matrix::from_rows(&[[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]).unwrap();
        let c = regularized_cov(&x, 0.1).unwrap();
        assert!(c.sub(&Matrix::identity(2).scale(1.1)).max_abs() < 1e-15);
    }

    #[test]
    fn single_sample_is_rejected() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(regularized_cov(&x, 0.0), Err(CcaError::TooFewSamples(1)));
        assert_eq!(fit_cca(&x, &x, 1, 0.0), Err(CcaError::TooFewSamples(1)));
    }

    #[test]
    fn k_range_is_checked() {
        let mut rng = CounterRng::new(1);
        let x = random_matrix(10, 3, &mut rng);
        let y = random_matrix(10, 2, &mut rng);
        assert_eq!(fit_cca(&x, &y, 3, 0.0), Err(CcaError::KOutOfRange { k: 3, max: 2 }));
        assert_eq!(fit_cca(&x, &y, 0, 0.0), Err(CcaError::KOutOfRange { k: 0, max: 2 }));
    }

    #[test]
    fn self_and_negated_correlation() {
        let mut rng = CounterRng::new(2);
        let x = random_matrix(50, 3, &mut rng);
        let m = fit_cca(&x, &x, 3, 1e-6).unwrap();
        assert!(m.correlations.iter().all(|&r| r >= 0.999), "{:?}", m.correlations);
        let neg = x.scale(-1.0);
        let m = fit_cca(&x, &neg, 3, 1e-6).unwrap();
        assert!(m.correlations.iter().all(|&r| r >= 0.999), "{:?}", m.correlations);
    }

    #[test]
    fn unit_variance_constraints() {
        let mut rng = CounterRng::new(3);
        let x = random_matrix(40, 6, &mut rng);
        let y = random_matrix(40, 4, &mut rng);
        let m = fit_cca(&x, &y, 4, DEFAULT_EPS).unwrap();
        let cx = m.wx.t_matmul(&regularized_cov(&x, DEFAULT_EPS).unwrap().matmul(&m.wx));
        let cy = m.wy.t_matmul(&regularized_cov(&y, DEFAULT_EPS).unwrap().matmul(&m.wy));
        assert!(cx.sub(&Matrix::identity(4)).max_abs() < 1e-8);
        assert!(cy.sub(&Matrix::identity(4)).max_abs() < 1e-8);
        assert!(m.correlations.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn projection_rules() {
        let mut rng = CounterRng::new(4);
        let x = random_matrix(30, 3, &mut rng);
        let y = random_matrix(30, 3, &mut rng);
        let m = fit_cca(&x, &y, 2, DEFAULT_EPS).unwrap();
        assert!(m.project(Side::X, &m.mean_x).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(m.project(Side::Y, &[1.0]), Err(CcaError::ShapeMismatch(_))));

        let id = identity_model(3);
        let a = [1.0, -2.0, 0.5];
        let b = [0.25, 4.0, -1.0];
        assert_eq!(id.project(Side::X, &a).unwrap(), a.to_vec());
        let sum: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
        let lhs = id.project(Side::Y, &sum).unwrap();
        let rhs: Vec<f64> =
            id.project(Side::Y, &a).unwrap().iter().zip(id.project(Side::Y, &b).unwrap()).map(|(p, q)| p + q).collect();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn folded_scaling_matches_explicit_standardization() {
        let mut rng = CounterRng::new(5);
        let x = random_matrix(30, 3, &mut rng);
        let y = random_matrix(30, 2, &mut rng);
        let rows_x: Vec<Vec<f64>> = (0..30).map(|i| x.row(i).iter().map(|v| 3.0 * v + 1.0).collect()).collect();
        let rows_y: Vec<Vec<f64>> = (0..30).map(|i| y.row(i).to_vec()).collect();
        let sx = Standardizer::fit(&rows_x);
        let sy = Standardizer::fit(&rows_y);
        let zx: Vec<Vec<f64>> = rows_x.iter().map(|r| sx.apply(r)).collect();
        let zy: Vec<Vec<f64>> = rows_y.iter().map(|r| sy.apply(r)).collect();
        let m = fit_cca(&Matrix::from_rows(&zx).unwrap(), &Matrix::from_rows(&zy).unwrap(), 2, 0.0).unwrap();
        let folded = m.compose_input_scaling(&sx, &sy);
        let p1 = m.project(Side::X, &zx[7]).unwrap();
        let p2 = folded.project(Side::X, &rows_x[7]).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_dimensions_and_errors() {
        let x = vec![0.5; 2048];
        let y = vec![0.25; 1024];
        let m = Modalities { vision: Some(&x), language: Some(&y), attributes: None };
        assert_eq!(fuse(Scenario::VLxVL, m, None, FeatureSide::Gallery).unwrap().len(), 3072);

        let id = identity_model(2);
        let (xv, yv) = ([1.0, 2.0], [3.0, 4.0]);
        let m = Modalities { vision: Some(&xv), language: Some(&yv), attributes: None };
        assert_eq!(fuse(Scenario::VxL, m, Some(&id), FeatureSide::Gallery).unwrap(), xv.to_vec());
        assert_eq!(fuse(Scenario::VxL, m, Some(&id), FeatureSide::Query).unwrap(), yv.to_vec());
        assert_eq!(fuse(Scenario::VxVL, m, Some(&id), FeatureSide::Query).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);

        let only_vision = Modalities { vision: Some(&xv), ..Modalities::default() };
        assert_eq!(
            fuse(Scenario::VxL, only_vision, Some(&id), FeatureSide::Query),
            Err(CcaError::MissingModality(Scenario::VxL, "language"))
        );
        assert_eq!(fuse(Scenario::VxL, m, None, FeatureSide::Gallery), Err(CcaError::MissingModel(Scenario::VxL)));

        let bits = [true, false, true];
        let va = Modalities { vision: Some(&xv), attributes: Some(&bits), ..Modalities::default() };
        assert_eq!(fuse(Scenario::VAxVA, va, None, FeatureSide::Query).unwrap(), vec![1.0, 2.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert!("VxA".parse::<Scenario>().is_err());
    }
}
