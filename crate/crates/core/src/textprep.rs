//! Tokenization, embedding lookup into fixed-size description tensors, and
//! the three augmentation schemes used to enlarge the language training set:
//! random word dropping, rank-weighted synonym replacement and Gaussian noise
//! on the embedded tensor.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand_core::RngCore;
use thiserror::Error;

use crate::dataset::View;
use crate::rng::RngExt;

/// Default description length in words.
pub const DEFAULT_MAX_LEN: usize = 70;
/// Word2vec dimensionality of the pre-trained Google News vectors.
pub const DEFAULT_EMBEDDING_DIM: usize = 300;
/// Upper end of the uniform draw for the number of dropped words.
pub const MAX_DROPPED_WORDS: usize = 10;
/// Per-token replacement probability for synonym augmentation.
pub const SYNONYM_REPLACE_PROB: f64 = 0.25;
/// Standard deviation of the embedding-space Gaussian augmentation.
pub const GAUSSIAN_SIGMA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("unknown augmentation method {0:?}")]
    UnknownMethod(String),
    #[error("token {0:?} appears more than once")]
    DuplicateToken(String),
    #[error("vector for {token:?} has length {found}, expected {expected}")]
    DimensionMismatch { token: String, expected: usize, found: usize },
    #[error("synonym list for {0:?} is empty or has duplicates")]
    BadSynonymList(String),
    #[error("augmentation factor must be at least 1")]
    ZeroFactor,
}

/// Lowercases and splits on every character that is not a letter or digit.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.chars().flat_map(char::to_lowercase).collect())
        .collect()
}

/// Token to vector map with a fixed dimensionality.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: BTreeMap::new() }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<(), TextError> {
        let token = token.into();
        if vector.len() != self.dim {
            return Err(TextError::DimensionMismatch { token, expected: self.dim, found: vector.len() });
        }
        if self.vectors.contains_key(&token) {
            return Err(TextError::DuplicateToken(token));
        }
        self.vectors.insert(token, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Column-per-word embedding matrix of one description.
///
/// `values` is row-major `dim × max_len`; columns at index `>= used` are
/// padding and hold zeros unless noise was added deliberately.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptionTensor {
    dim: usize,
    max_len: usize,
    used: usize,
    values: Vec<f64>,
}

impl DescriptionTensor {
    pub fn zeros(dim: usize, max_len: usize) -> Self {
        Self { dim, max_len, used: 0, values: vec![0.0; dim * max_len] }
    }

    /// Builds a tensor from row-major values, e.g. for hand-made test inputs.
    pub fn from_values(dim: usize, max_len: usize, used: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), dim * max_len, "tensor value count");
        assert!(used <= max_len);
        Self { dim, max_len, used, values }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    #[inline]
    pub fn used(&self) -> usize {
        self.used
    }

    #[inline]
    pub fn get(&self, e: usize, t: usize) -> f64 {
        self.values[e * self.max_len + t]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.dim).map(|e| self.get(e, t)).collect()
    }
}

/// Embeds in-vocabulary tokens column by column. Unknown tokens are skipped,
/// then the sequence is truncated to `max_len` and zero-padded.
pub fn to_tensor<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable, max_len: usize) -> DescriptionTensor {
    assert!(max_len >= 1, "max_len must be positive");
    let mut tensor = DescriptionTensor::zeros(table.dim(), max_len);
    let kept = tokens.iter().filter_map(|t| table.get(t.as_ref())).take(max_len);
    for (t, vec) in kept.enumerate() {
        for (e, &v) in vec.iter().enumerate() {
            tensor.values[e * max_len + t] = v;
        }
        tensor.used = t + 1;
    }
    tensor
}

/// Token to ranked synonyms; rank 1 is the most frequent sense.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynonymMap {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: impl Into<String>, ranked: Vec<String>) -> Result<(), TextError> {
        let token = token.into();
        let mut seen = ranked.clone();
        seen.sort();
        seen.dedup();
        if ranked.is_empty() || seen.len() != ranked.len() {
            return Err(TextError::BadSynonymList(token));
        }
        if self.entries.contains_key(&token) {
            return Err(TextError::DuplicateToken(token));
        }
        self.entries.insert(token, ranked);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[String]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Drops `D ~ U{0..=10}` distinct words (capped at `len - 1`), keeping order.
pub fn augment_drop<S: Clone, R: RngCore>(tokens: &[S], rng: &mut R) -> Vec<S> {
    let drawn = rng.below(MAX_DROPPED_WORDS + 1);
    let d = drawn.min(tokens.len().saturating_sub(1));
    if d == 0 {
        return tokens.to_vec();
    }
    let mut removed = vec![false; tokens.len()];
    for i in rng.distinct_indices(tokens.len(), d) {
        removed[i] = true;
    }
    tokens.iter().zip(&removed).filter(|(_, &r)| !r).map(|(t, _)| t.clone()).collect()
}

/// Replaces each token that has synonyms with probability `p_replace`; the
/// synonym of rank `r` is picked with probability proportional to `1/r`.
pub fn augment_synonym<R: RngCore>(tokens: &[String], map: &SynonymMap, p_replace: f64, rng: &mut R) -> Vec<String> {
    tokens
        .iter()
        .map(|tok| match map.get(tok) {
            Some(ranked) if rng.bernoulli(p_replace) => ranked[pick_rank(ranked.len(), rng)].clone(),
            _ => tok.clone(),
        })
        .collect()
}

/// Index in `0..n` with `P(i) ∝ 1/(i+1)`.
fn pick_rank<R: RngCore>(n: usize, rng: &mut R) -> usize {
    let total: f64 = (1..=n).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.unit_f64() * total;
    for i in 0..n {
        u -= 1.0 / (i + 1) as f64;
        if u < 0.0 {
            return i;
        }
    }
    n - 1
}

/// Adds i.i.d. `N(0, sigma²)` noise to the used columns only.
pub fn augment_gaussian<R: RngCore>(tensor: &DescriptionTensor, sigma: f64, rng: &mut R) -> DescriptionTensor {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    let mut out = tensor.clone();
    if sigma == 0.0 {
        return out;
    }
    for e in 0..out.dim {
        for t in 0..out.used {
            out.values[e * out.max_len + t] += sigma * rng.normal();
        }
    }
    out
}

/// One labelled description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Description {
    pub identity: String,
    pub view: View,
    pub tokens: Vec<String>,
}

/// Token-level augmentation schemes. Gaussian noise acts on embedded tensors
/// and is applied through [`augment_gaussian`] instead.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentMethod {
    Drop,
    Synonym { map: SynonymMap, p_replace: f64 },
}

/// Names accepted by [`AugmentMethod`] parsers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentKind {
    Drop,
    Synonym,
    Gaussian,
}

impl FromStr for AugmentKind {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop" => Ok(Self::Drop),
            "synonym" => Ok(Self::Synonym),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(TextError::UnknownMethod(other.into())),
        }
    }
}

/// Original descriptions each followed by `factor - 1` augmented variants
/// carrying the source identity and view.
pub fn augment_corpus<R: RngCore>(
    corpus: &[Description],
    method: &AugmentMethod,
    factor: usize,
    rng: &mut R,
) -> Result<Vec<Description>, TextError> {
    if factor == 0 {
        return Err(TextError::ZeroFactor);
    }
    let mut out = Vec::with_capacity(corpus.len() * factor);
    for d in corpus {
        out.push(d.clone());
        for _ in 1..factor {
            let tokens = match method {
                AugmentMethod::Drop => augment_drop(&d.tokens, rng),
                AugmentMethod::Synonym { map, p_replace } => augment_synonym(&d.tokens, map, *p_replace, rng),
            };
            out.push(Description { identity: d.identity.clone(), view: d.view, tokens });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{CounterRng, RngExt};
    use alloc::format;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn one_hot_table(words: &[&str]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(words.len());
        for (i, w) in words.iter().enumerate() {
            let mut v = vec![0.0; words.len()];
            v[i] = 1.0;
            t.insert(*w, v).unwrap();
        }
        t
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("A short, slim woman."), strings(&["a", "short", "slim", "woman"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("ice-blue jeans"), strings(&["ice", "blue", "jeans"]));
        assert_eq!(tokenize("He's  wearing\tX2"), strings(&["he", "s", "wearing", "x2"]));
    }

    #[test]
    fn tensor_pads_and_truncates() {
        let table = one_hot_table(&["a", "b", "c"]);
        let t = to_tensor(&strings(&["a", "b", "c"]), &table, 70);
        assert_eq!(t.used(), 3);
        assert!((3..70).all(|c| t.column(c).iter().all(|&v| v == 0.0)));
        assert_eq!(t.column(1), vec![0.0, 1.0, 0.0]);

        let long: Vec<String> = (0..75).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
        let t = to_tensor(&long, &table, 70);
        assert_eq!(t.used(), 70);
        assert_eq!(t.column(69), table.get(&long[69]).unwrap().to_vec());

        let t = to_tensor(&strings(&["x", "y"]), &table, 70);
        assert_eq!(t.used(), 0);
        assert!(t.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oov_tokens_are_skipped_not_zeroed() {
        let table = one_hot_table(&["a", "b"]);
        let t = to_tensor(&strings(&["a", "zzz", "b"]), &table, 4);
        assert_eq!(t.used(), 2);
        assert_eq!(t.column(1), vec![0.0, 1.0]);
    }

    #[test]
    fn table_errors() {
        let mut t = EmbeddingTable::new(2);
        t.insert("a", vec![1.0, 2.0]).unwrap();
        assert_eq!(t.insert("a", vec![1.0, 2.0]), Err(TextError::DuplicateToken("a".into())));
        assert!(matches!(t.insert("b", vec![1.0]), Err(TextError::DimensionMismatch { .. })));
    }

    #[test]
    fn drop_caps_and_identity() {
        // Find seeds whose first draw is 0 and 10 under the pinned generator.
        let first_draw = |seed| CounterRng::new(seed).below(MAX_DROPPED_WORDS + 1);
        let zero_seed = (0..).find(|&s| first_draw(s) == 0).unwrap();
        let ten_seed = (0..).find(|&s| first_draw(s) == 10).unwrap();
        let toks = strings(&["a", "b", "c", "d", "e"]);
        assert_eq!(augment_drop(&toks, &mut CounterRng::new(zero_seed)), toks);
        assert_eq!(augment_drop(&toks, &mut CounterRng::new(ten_seed)).len(), 1);
        assert!(augment_drop::<String, _>(&[], &mut CounterRng::new(ten_seed)).is_empty());
        assert_eq!(augment_drop(&strings(&["solo"]), &mut CounterRng::new(ten_seed)).len(), 1);
    }

    #[test]
    fn drop_mean_matches_uniform_law() {
        let toks: Vec<usize> = (0..40).collect();
        let mut rng = CounterRng::new(2024);
        let n = 100_000;
        let removed: usize = (0..n).map(|_| 40 - augment_drop(&toks, &mut rng).len()).sum();
        let mean = removed as f64 / n as f64;
        assert!((mean - 5.0).abs() < 0.05, "mean removed {mean}");
    }

    #[test]
    fn synonym_rank_weighting() {
        let mut map = SynonymMap::new();
        map.insert("glasses", strings(&["spectacles", "eyewear"])).unwrap();
        let mut rng = CounterRng::new(11);
        let toks = strings(&["glasses"]);
        let (mut first, mut total) = (0usize, 0usize);
        while total < 100_000 {
            let out = augment_synonym(&toks, &map, 1.0, &mut rng);
            total += 1;
            if out[0] == "spectacles" {
                first += 1;
            }
        }
        let frac = first as f64 / total as f64;
        assert!((frac - 2.0 / 3.0).abs() < 0.01, "rank-1 fraction {frac}");
    }

    #[test]
    fn synonym_leaves_unknown_tokens_and_is_deterministic() {
        let mut map = SynonymMap::new();
        map.insert("shirt", strings(&["top", "blouse", "tee"])).unwrap();
        let toks = strings(&["red", "shirt", "and", "shirt"]);
        let a = augment_synonym(&toks, &map, SYNONYM_REPLACE_PROB, &mut CounterRng::new(5));
        let b = augment_synonym(&toks, &map, SYNONYM_REPLACE_PROB, &mut CounterRng::new(5));
        assert_eq!(a, b);
        assert_eq!(a[0], "red");
        assert_eq!(a[2], "and");
    }

    #[test]
    fn synonym_list_validation() {
        let mut map = SynonymMap::new();
        assert!(map.insert("a", vec![]).is_err());
        assert!(map.insert("a", strings(&["b", "b"])).is_err());
    }

    #[test]
    fn gaussian_noise_scope_and_scale() {
        let table = one_hot_table(&["a", "b", "c", "d"]);
        let t = to_tensor(&strings(&["a", "b"]), &table, 6);
        assert_eq!(augment_gaussian(&t, 0.0, &mut CounterRng::new(1)), t);
        let noisy = augment_gaussian(&t, 0.5, &mut CounterRng::new(1));
        assert!((2..6).all(|c| noisy.column(c).iter().all(|&v| v == 0.0)));
        assert_ne!(noisy.column(0), t.column(0));

        // 10^6 perturbed entries: 1000 x 1000 tensor fully used.
        let dim = 1000;
        let mut big = EmbeddingTable::new(dim);
        big.insert("w", vec![0.0; dim]).unwrap();
        let toks: Vec<&str> = vec!["w"; 1000];
        let base = to_tensor(&toks, &big, 1000);
        let noisy = augment_gaussian(&base, GAUSSIAN_SIGMA, &mut CounterRng::new(77));
        let n = noisy.values().len() as f64;
        let mean = noisy.values().iter().sum::<f64>() / n;
        let var = noisy.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!((libm::sqrt(var) - 0.05).abs() < 0.001);
    }

    #[test]
    fn corpus_factor_and_labels() {
        let corpus: Vec<Description> = (0..4)
            .map(|i| Description {
                identity: format!("id{i}"),
                view: if i % 2 == 0 { View::One } else { View::Two },
                tokens: strings(&["a", "man", "in", "a", "red", "coat"]),
            })
            .collect();
        let mut rng = CounterRng::new(3);
        assert_eq!(augment_corpus(&corpus, &AugmentMethod::Drop, 1, &mut rng).unwrap(), corpus);
        let out = augment_corpus(&corpus, &AugmentMethod::Drop, 3, &mut rng).unwrap();
        assert_eq!(out.len(), 12);
        for (k, d) in out.iter().enumerate() {
            assert_eq!(d.identity, corpus[k / 3].identity);
            assert_eq!(d.view, corpus[k / 3].view);
        }
        assert_eq!(augment_corpus(&corpus, &AugmentMethod::Drop, 0, &mut rng), Err(TextError::ZeroFactor));
    }

    #[test]
    fn corpus_factor_500() {
        let corpus: Vec<Description> = (0..2520)
            .map(|i| Description { identity: format!("{}", i / 2), view: View::One, tokens: strings(&["w"]) })
            .collect();
        let out = augment_corpus(&corpus, &AugmentMethod::Drop, 500, &mut CounterRng::new(0)).unwrap();
        assert_eq!(out.len(), 1_260_000);
        assert!(out.chunks(500).zip(&corpus).all(|(c, src)| c.iter().all(|d| d.identity == src.identity)));
    }

    #[test]
    fn method_names() {
        assert_eq!("drop".parse::<AugmentKind>(), Ok(AugmentKind::Drop));
        assert_eq!("gaussian".parse::<AugmentKind>(), Ok(AugmentKind::Gaussian));
        assert_eq!("shuffle".parse::<AugmentKind>(), Err(TextError::UnknownMethod("shuffle".into())));
    }

    proptest! {
        #[test]
        fn drop_keeps_a_subsequence(len in 0usize..60, seed in any::<u64>()) {
            let toks: Vec<usize> = (0..len).collect();
            let out = augment_drop(&toks, &mut CounterRng::new(seed));
            prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(out.len() + MAX_DROPPED_WORDS >= len);
            prop_assert!(len == 0 || !out.is_empty());
        }

        #[test]
        fn tensor_is_deterministic(words in proptest::collection::vec("[a-d]", 0..20)) {
            let table = one_hot_table(&["a", "b", "c"]);
            prop_assert_eq!(to_tensor(&words, &table, 8), to_tensor(&words, &table, 8));
        }
    }
}
