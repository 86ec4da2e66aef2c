//! The trainable projection head and everything needed to fit it.
//!
//! Context vectors come from an external language-model encoder. The head
//! maps them to the final representation, `ψ(x) = tanh(Wᵀx + b)`, and is
//! shared between queries and passages.

mod sampling;
mod similarity;
mod train;

pub use sampling::{sample_negatives, NegativeSampler};
pub use similarity::{angular_similarity, batch_loss, triplet_loss, TripleReps};
pub use train::{train, AdamW, LrSchedule, TrainConfig, TrainReport};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;

use crate::corpus::{decode_matrix, encode_matrix, read_u32_at, ContextEmbeddingStore, IdMap};
use crate::error::{Error, Result};
use similarity::batch_loss_with_grads;

pub const HEAD_MAGIC: &[u8; 8] = b"CORTHEAD";

/// Linear layer followed by `tanh`. `weights` is `h × e`, row-major, so
/// output `j` is `tanh(Σ_i weights[i·e + j]·x[i] + bias[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    context_dim: usize,
    repr_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ProjectionHead {
    pub fn new(context_dim: usize, repr_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if context_dim == 0 || repr_dim == 0 {
            return Err(Error::invalid("head dimensions must be positive"));
        }
        if weights.len() != context_dim * repr_dim {
            return Err(Error::DimensionMismatch {
                expected: context_dim * repr_dim,
                got: weights.len(),
            });
        }
        if bias.len() != repr_dim {
            return Err(Error::DimensionMismatch {
                expected: repr_dim,
                got: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0 });
        }
        Ok(Self {
            context_dim,
            repr_dim,
            weights,
            bias,
        })
    }

    pub fn zeros(context_dim: usize, repr_dim: usize) -> Result<Self> {
        Self::new(
            context_dim,
            repr_dim,
            vec![0.0; context_dim * repr_dim],
            vec![0.0; repr_dim],
        )
    }

    /// Weights uniform in `(−1/√h, 1/√h)`, bias zero.
    pub fn init(context_dim: usize, repr_dim: usize, seed: u64) -> Result<Self> {
        if context_dim == 0 {
            return Err(Error::invalid("head dimensions must be positive"));
        }
        let bound = 1.0 / (context_dim as f64).sqrt();
        let dist = Uniform::new(-bound, bound);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..context_dim * repr_dim).map(|_| dist.sample(&mut rng)).collect();
        Self::new(context_dim, repr_dim, weights, vec![0.0; repr_dim])
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn repr_dim(&self) -> usize {
        self.repr_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn apply(&self, context: &[f32]) -> Result<Vec<f64>> {
        if context.len() != self.context_dim {
            return Err(Error::DimensionMismatch {
                expected: self.context_dim,
                got: context.len(),
            });
        }
        let mut z = self.bias.clone();
        for (x, row) in context.iter().zip(self.weights.chunks_exact(self.repr_dim)) {
            let x = f64::from(*x);
            for (acc, w) in z.iter_mut().zip(row) {
                *acc += w * x;
            }
        }
        z.iter_mut().for_each(|v| *v = v.tanh());
        Ok(z)
    }

    /// `ψ(x) / ‖ψ(x)‖₂` as `f32`.
    pub fn encode_normalized(&self, context: &[f32]) -> Result<Vec<f32>> {
        let repr = self.apply(context)?;
        let n = similarity::norm(&repr);
        if n == 0.0 {
            return Err(Error::ZeroVector("projection output is all zeros".into()));
        }
        Ok(repr.iter().map(|v| (v / n) as f32).collect())
    }

    /// Parameters rounded to `f32`, i.e. exactly what a checkpoint stores.
    pub fn rounded_to_f32(&self) -> Self {
        let round = |v: &Vec<f64>| v.iter().map(|&x| f64::from(x as f32)).collect();
        Self {
            context_dim: self.context_dim,
            repr_dim: self.repr_dim,
            weights: round(&self.weights),
            bias: round(&self.bias),
        }
    }

    /// `CORTHEAD | u32 h | u32 e | W (h×e, row-major) | b (e)`, values as f32 LE.
    pub fn save(&self, path: &Path) -> Result<()> {
        let values: Vec<f32> = self.weights.iter().chain(&self.bias).map(|&v| v as f32).collect();
        let bytes = encode_matrix(HEAD_MAGIC, &[], self.context_dim, self.repr_dim, &values)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 8 || &bytes[..8] != HEAD_MAGIC {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(HEAD_MAGIC).into_owned(),
                found: String::from_utf8_lossy(&bytes[..bytes.len().min(8)]).into_owned(),
            });
        }
        if bytes.len() < 16 {
            return Err(Error::SizeMismatch("head checkpoint shorter than header".into()));
        }
        let h = read_u32_at(&bytes, 8) as usize;
        let e = read_u32_at(&bytes, 12) as usize;
        let expected = h
            .checked_add(1)
            .and_then(|r| r.checked_mul(e))
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(16))
            .ok_or_else(|| Error::SizeMismatch(format!("h {h} x e {e} overflows")))?;
        if bytes.len() != expected {
            return Err(Error::SizeMismatch(format!(
                "expected {expected} bytes for a {h}x{e} head, found {}",
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes[16..]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let (w, b) = values.split_at(h * e);
        Self::new(h, e, w.to_vec(), b.to_vec())
    }
}

/// Context vectors of one training triple.
#[derive(Debug, Clone, Copy)]
pub struct TrainTriple<'a> {
    pub query: &'a [f32],
    pub positive: &'a [f32],
    pub negative: &'a [f32],
}

/// Gradient of the batch loss with respect to the head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl HeadGradient {
    pub fn zeros_like(head: &ProjectionHead) -> Self {
        Self {
            weights: vec![0.0; head.weights.len()],
            bias: vec![0.0; head.bias.len()],
        }
    }

    pub(crate) fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += scale * b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += scale * b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|&v| v == 0.0)
    }
}

fn project_batch(head: &ProjectionHead, batch: &[TrainTriple<'_>]) -> Result<Vec<TripleReps>> {
    batch
        .iter()
        .map(|t| {
            Ok(TripleReps {
                query: head.apply(t.query)?,
                positive: head.apply(t.positive)?,
                negative: head.apply(t.negative)?,
            })
        })
        .collect()
}

/// Batch loss of the projected triples.
pub fn head_batch_loss(head: &ProjectionHead, batch: &[TrainTriple<'_>], margin: f64) -> Result<f64> {
    batch_loss(&project_batch(head, batch)?, margin)
}

/// Loss and its analytic gradient with respect to `W` and `b`. Inactive
/// hinge terms (including the kink itself) contribute nothing.
pub fn batch_loss_gradient(
    head: &ProjectionHead,
    batch: &[TrainTriple<'_>],
    margin: f64,
) -> Result<(f64, HeadGradient)> {
    let reps = project_batch(head, batch)?;
    let (loss, rep_grads) = batch_loss_with_grads(&reps, margin)?;
    let mut grad = HeadGradient::zeros_like(head);
    let e = head.repr_dim;
    for (i, t) in batch.iter().enumerate() {
        let pairs = [
            (t.query, &reps[i].query, &rep_grads.query[i]),
            (t.positive, &reps[i].positive, &rep_grads.positive[i]),
            (t.negative, &reps[i].negative, &rep_grads.negative[i]),
        ];
        for (x, out, g_out) in pairs {
            if g_out.iter().all(|&g| g == 0.0) {
                continue;
            }
            // d tanh(z) / dz = 1 − tanh²(z)
            let g_z: Vec<f64> = out.iter().zip(g_out).map(|(y, g)| g * (1.0 - y * y)).collect();
            for (xi, row) in x.iter().zip(grad.weights.chunks_exact_mut(e)) {
                let xi = f64::from(*xi);
                for (w, gz) in row.iter_mut().zip(&g_z) {
                    *w += xi * gz;
                }
            }
            for (b, gz) in grad.bias.iter_mut().zip(&g_z) {
                *b += gz;
            }
        }
    }
    Ok((loss, grad))
}

/// Unit-norm representations, one per row of a context store.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationStore {
    dim: usize,
    rows: Vec<f32>,
    ids: IdMap,
}

pub const UNIT_NORM_TOLERANCE: f32 = 1e-5;

impl RepresentationStore {
    /// Validates that every row is unit norm within [`UNIT_NORM_TOLERANCE`].
    pub fn new(dim: usize, rows: Vec<f32>, ids: IdMap) -> Result<Self> {
        if dim == 0 || rows.len() != dim * ids.len() {
            return Err(Error::SizeMismatch(format!(
                "{} values for {} ids of dim {dim}",
                rows.len(),
                ids.len()
            )));
        }
        for (row, v) in rows.chunks_exact(dim).enumerate() {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { row });
            }
            let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::invalid(format!("row {row} has norm {n}, expected 1")));
            }
        }
        Ok(Self { dim, rows, ids })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &IdMap {
        &self.ids
    }

    pub fn row(&self, internal: u32) -> &[f32] {
        let s = internal as usize * self.dim;
        &self.rows[s..s + self.dim]
    }

    pub fn get(&self, external: &str) -> Option<&[f32]> {
        self.ids.internal(external).map(|i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.rows
    }

    pub fn into_parts(self) -> (usize, Vec<f32>, IdMap) {
        (self.dim, self.rows, self.ids)
    }

    /// Same `CORTEMB1` layout as context embeddings.
    pub fn save(&self, vec_path: &Path, id_path: &Path) -> Result<()> {
        let bytes = encode_matrix(crate::corpus::EMBEDDING_MAGIC, &[], self.len(), self.dim, &self.rows)?;
        std::fs::write(vec_path, bytes).map_err(|e| Error::io(vec_path, e))?;
        self.ids.write(id_path)
    }

    pub fn load(vec_path: &Path, id_path: &Path) -> Result<Self> {
        let bytes = std::fs::read(vec_path).map_err(|e| Error::io(vec_path, e))?;
        let (count, dim, rows) = decode_matrix(&bytes, crate::corpus::EMBEDDING_MAGIC, 0)?;
        let ids = IdMap::read(id_path)?;
        if ids.len() != count {
            return Err(Error::SizeMismatch(format!("{} ids for {count} rows", ids.len())));
        }
        Self::new(dim, rows, ids)
    }
}

/// Projects and L2-normalizes every row. Rows are independent and encoded in
/// parallel; the output does not depend on the thread count.
pub fn encode_store(head: &ProjectionHead, store: &ContextEmbeddingStore) -> Result<RepresentationStore> {
    if store.dim() != head.context_dim {
        return Err(Error::DimensionMismatch {
            expected: head.context_dim,
            got: store.dim(),
        });
    }
    let rows: Vec<Vec<f32>> = (0..store.len() as u32)
        .into_par_iter()
        .map(|i| {
            head.encode_normalized(store.row(i)).map_err(|err| match err {
                Error::ZeroVector(_) => Error::ZeroVector(format!(
                    "row {i} ({}) projects to the zero vector",
                    store.ids().external(i)
                )),
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    RepresentationStore::new(head.repr_dim, rows.concat(), store.ids().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EmbeddingKind;

    #[test]
    fn zero_head_outputs_zero() {
        let head = ProjectionHead::zeros(3, 2).unwrap();
        assert_eq!(head.apply(&[1.0, -2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        assert!(head.encode_normalized(&[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn identity_head_saturates() {
        let head = ProjectionHead::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2]).unwrap();
        let out = head.apply(&[50.0, 80.0]).unwrap();
        assert!(out.iter().all(|&v| v <= 1.0 && v > 1.0 - 1e-12));
    }

    #[test]
    fn dimension_mismatch() {
        let head = ProjectionHead::zeros(3, 2).unwrap();
        assert!(matches!(head.apply(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.bin");
        let head = ProjectionHead::init(5, 3, 11).unwrap().rounded_to_f32();
        head.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], HEAD_MAGIC);
        assert_eq!(bytes.len(), 16 + 4 * (5 * 3 + 3));
        assert_eq!(ProjectionHead::load(&path).unwrap(), head);
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let a = ProjectionHead::init(16, 4, 3).unwrap();
        let b = ProjectionHead::init(16, 4, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.weights().iter().all(|w| w.abs() < 0.25));
        assert!(a.bias().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn encoded_rows_are_unit_norm() {
        let ids = IdMap::from_ids(["a", "b", "c"]).unwrap();
        let rows = vec![0.5, -1.0, 2.0, 0.5, -1.0, 2.0, 3.0, 0.1, -0.4];
        let store = ContextEmbeddingStore::new(3, rows, ids, EmbeddingKind::Passage).unwrap();
        let head = ProjectionHead::init(3, 4, 1).unwrap();
        let reps = encode_store(&head, &store).unwrap();
        for i in 0..3 {
            let n: f32 = reps.row(i).iter().map(|x| x * x).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
        assert_eq!(reps.row(0), reps.row(1));
    }

    #[test]
    fn inactive_hinges_have_zero_gradient() {
        let head = ProjectionHead::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2]).unwrap();
        let q = [1.0f32, 0.0];
        let p = [1.0f32, 0.05];
        let n = [-1.0f32, 0.1];
        let batch = [TrainTriple {
            query: &q,
            positive: &p,
            negative: &n,
        }];
        let (loss, grad) = batch_loss_gradient(&head, &batch, 0.1).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.is_zero());
    }
}
