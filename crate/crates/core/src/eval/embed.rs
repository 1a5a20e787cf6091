use thiserror::Error;

/// Maps text to a fixed-length vector. Must be deterministic per instance.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector")]
    ZeroVector,
}

/// `dot(a, b) / (|a| |b|)`, clamped to [-1, 1] against rounding.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the UTF-8 bytes.
pub fn fnv1a(text: &str) -> u64 {
    text.bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased runs of alphanumeric characters.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Hashed bag of words: each token adds 1.0 to bucket `fnv1a(token) % dimension`.
///
/// Small enough to evaluate by hand, which is the point: alignment oracles in
/// tests are computed from the token counts directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashedBagOfWords {
    dimension: usize,
}

pub const DEFAULT_DIMENSION: usize = 256;

impl HashedBagOfWords {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self { dimension }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token) % self.dimension as u64) as usize
    }
}

impl Default for HashedBagOfWords {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl Embedder for HashedBagOfWords {
    fn name(&self) -> &str {
        "hashed-bow"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for t in tokens(text) {
            v[self.bucket(&t)] += 1.0;
        }
        v
    }
}

/// Returns the same vector for every input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEmbedder {
    vector: Vec<f64>,
}

impl ConstantEmbedder {
    pub fn new(vector: Vec<f64>) -> Self {
        assert!(!vector.is_empty(), "dimension must be positive");
        Self { vector }
    }
}

impl Embedder for ConstantEmbedder {
    fn name(&self) -> &str {
        "constant"
    }

    fn dimension(&self) -> usize {
        self.vector.len()
    }

    fn embed(&self, _text: &str) -> Vec<f64> {
        self.vector.clone()
    }
}
