//! Link predictors: scoring functions over (subject, relation, object)
//! triples, a trainable complex-embedding model, and simple baselines.
//!
//! The trained model represents entities and relations as complex vectors
//! and scores a triple as `Re(<e_s ⊙ w_r, conj(e_o)>)`. Training minimizes
//! full-softmax cross-entropy over the object slot with a cubed-magnitude
//! weight penalty, using Adagrad updates. Everything is f64, single
//! threaded, and fully determined by the seed.

use std::collections::HashMap;
use std::io::{Read as _, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};

/// Anything that can score triples and rank candidate objects.
pub trait TripleScorer {
    fn entity_count(&self) -> usize;
    fn score(&self, s: EntityId, r: RelationId, o: EntityId) -> f64;
    /// Scores of `(s, r, o)` for every object `o`, indexed by entity id.
    fn score_all(&self, s: EntityId, r: RelationId) -> Vec<f64> {
        (0..self.entity_count())
            .map(|o| self.score(s, r, EntityId(o as u32)))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint corrupt: {0}")]
    Corrupt(String),
    #[error("scores contain non-finite values")]
    NonFinite,
    #[error("bad configuration: {0}")]
    BadConfig(String),
}

/// Upper bound of the normalized score range. Keeping it strictly below
/// the 1.0 assigned to known training edges lets exact knowledge dominate
/// predicted scores during hybrid query answering.
pub const NORMALIZED_MAX: f64 = 0.9;

/// Min-max rescaling of a score row into `[0, NORMALIZED_MAX]`.
///
/// A constant row maps to all zeros; non-finite inputs are an error.
pub fn normalize_scores(scores: &[f64]) -> Result<Vec<f64>, PredictorError> {
    if scores.iter().any(|x| !x.is_finite()) {
        return Err(PredictorError::NonFinite);
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if scores.is_empty() || hi == lo {
        return Ok(vec![0.0; scores.len()]);
    }
    Ok(scores.iter().map(|&x| (x - lo) / (hi - lo) * NORMALIZED_MAX).collect())
}

/// Complex-embedding link predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplEx {
    entity_count: usize,
    relation_count: usize,
    rank: usize,
    /// Entity embeddings, `2 * rank` per entity: real parts then imaginary.
    ent: Vec<f64>,
    /// Relation embeddings, same layout.
    rel: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Complex dimension of every embedding.
    pub rank: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the cubed-magnitude penalty on the three embeddings of
    /// each training triple.
    pub reg_weight: f64,
    /// Parameters start uniform in `[-init_scale, init_scale)`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rank: 32,
            epochs: 50,
            batch_size: 128,
            learning_rate: 0.1,
            reg_weight: 1e-3,
            init_scale: 1e-1,
            seed: 0,
        }
    }
}

/// Dense gradient buffers matching the model layout.
struct Grads {
    ent: Vec<f64>,
    rel: Vec<f64>,
}

/// Adds the cubed-magnitude penalty gradient of one embedding in place.
fn add_penalty_grad(v: &[f64], grad: &mut [f64], rank: usize, idx: usize, weight: f64) {
    let g = &mut grad[idx * 2 * rank..(idx + 1) * 2 * rank];
    for k in 0..rank {
        let m = (v[k] * v[k] + v[rank + k] * v[rank + k]).sqrt();
        g[k] += weight * 3.0 * m * v[k];
        g[rank + k] += weight * 3.0 * m * v[rank + k];
    }
}

impl ComplEx {
    pub fn new_random(
        entity_count: usize,
        relation_count: usize,
        rank: usize,
        init_scale: f64,
        seed: u64,
    ) -> Result<Self, PredictorError> {
        if entity_count == 0 || relation_count == 0 || rank == 0 {
            return Err(PredictorError::BadConfig(
                "entity count, relation count and rank must be positive".into(),
            ));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| rng.gen_range(-init_scale..init_scale)).collect()
        };
        let ent = draw(entity_count * 2 * rank);
        let rel = draw(relation_count * 2 * rank);
        Ok(ComplEx { entity_count, relation_count, rank, ent, rel })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    fn ent_at<'a>(ent: &'a [f64], rank: usize, e: usize) -> &'a [f64] {
        &ent[e * 2 * rank..(e + 1) * 2 * rank]
    }

    fn score_parts(&self, s: usize, r: usize, o: usize) -> f64 {
        let rank = self.rank;
        let es = Self::ent_at(&self.ent, rank, s);
        let wr = Self::ent_at(&self.rel, rank, r);
        let eo = Self::ent_at(&self.ent, rank, o);
        let mut total = 0.0;
        for k in 0..rank {
            let (sr, si) = (es[k], es[rank + k]);
            let (rr, ri) = (wr[k], wr[rank + k]);
            let (or_, oi) = (eo[k], eo[rank + k]);
            let qr = sr * rr - si * ri;
            let qi = sr * ri + si * rr;
            total += qr * or_ + qi * oi;
        }
        total
    }

    /// Softmax cross-entropy over the object slot, plus the weight penalty,
    /// averaged over the batch.
    pub fn batch_loss(&self, batch: &[Triple], reg: f64) -> f64 {
        let mut total = 0.0;
        for t in batch {
            let logits = self.score_all(t.subject, t.relation);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            total += log_z - logits[t.object.index()];
            total += reg * self.penalty(t);
        }
        total / batch.len() as f64
    }

    /// Mutable access to the flat parameter buffers (entities, then
    /// relations), each `2 * rank` values per item: real parts first, then
    /// imaginary. Exposed so numerical gradient probes can perturb single
    /// parameters.
    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.ent, &mut self.rel)
    }

    /// Loss on `batch` together with its full analytic gradient, laid out
    /// like [`ComplEx::params_mut`]. Used by gradient diagnostics; training
    /// uses the same computation internally.
    pub fn batch_gradients(&self, batch: &[Triple], reg: f64) -> (f64, Vec<f64>, Vec<f64>) {
        let (loss, grads) = self.batch_loss_grad(batch, reg);
        (loss, grads.ent, grads.rel)
    }

    fn penalty(&self, t: &Triple) -> f64 {
        let rank = self.rank;
        let mut p = 0.0;
        for (buf, idx) in [
            (&self.ent, t.subject.index()),
            (&self.rel, t.relation.index()),
            (&self.ent, t.object.index()),
        ] {
            let v = Self::ent_at(buf, rank, idx);
            for k in 0..rank {
                p += (v[k] * v[k] + v[rank + k] * v[rank + k]).sqrt().powi(3);
            }
        }
        p
    }

    fn batch_loss_grad(&self, batch: &[Triple], reg: f64) -> (f64, Grads) {
        let rank = self.rank;
        let inv = 1.0 / batch.len() as f64;
        let mut grads =
            Grads { ent: vec![0.0; self.ent.len()], rel: vec![0.0; self.rel.len()] };
        let mut loss = 0.0;
        for t in batch {
            let (s, r, o) = (t.subject.index(), t.relation.index(), t.object.index());
            let logits = self.score_all(t.subject, t.relation);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|&x| (x - max).exp()).sum();
            let log_z = max + z.ln();
            loss += (log_z - logits[o]) * inv;

            let es = Self::ent_at(&self.ent, rank, s).to_vec();
            let wr = Self::ent_at(&self.rel, rank, r).to_vec();
            // Accumulated softmax-weighted candidate embedding X = Σ_x g_x e_x,
            // where g_x = p_x − [x = o]; each candidate also receives g_x · q.
            let mut xr = vec![0.0; rank];
            let mut xi = vec![0.0; rank];
            let mut q = vec![0.0; 2 * rank];
            for k in 0..rank {
                q[k] = es[k] * wr[k] - es[rank + k] * wr[rank + k];
                q[rank + k] = es[k] * wr[rank + k] + es[rank + k] * wr[k];
            }
            for x in 0..self.entity_count {
                let mut g = (logits[x] - max).exp() / z;
                if x == o {
                    g -= 1.0;
                }
                let ex = Self::ent_at(&self.ent, rank, x);
                let gx = &mut grads.ent[x * 2 * rank..(x + 1) * 2 * rank];
                for k in 0..rank {
                    xr[k] += g * ex[k];
                    xi[k] += g * ex[rank + k];
                    gx[k] += inv * g * q[k];
                    gx[rank + k] += inv * g * q[rank + k];
                }
            }
            let gs = &mut grads.ent[s * 2 * rank..(s + 1) * 2 * rank];
            for k in 0..rank {
                gs[k] += inv * (wr[k] * xr[k] + wr[rank + k] * xi[k]);
                gs[rank + k] += inv * (-wr[rank + k] * xr[k] + wr[k] * xi[k]);
            }
            let gr = &mut grads.rel[r * 2 * rank..(r + 1) * 2 * rank];
            for k in 0..rank {
                gr[k] += inv * (es[k] * xr[k] + es[rank + k] * xi[k]);
                gr[rank + k] += inv * (-es[rank + k] * xr[k] + es[k] * xi[k]);
            }

            loss += reg * self.penalty(t) * inv;
            add_penalty_grad(Self::ent_at(&self.ent, rank, s), &mut grads.ent, rank, s, reg * inv);
            add_penalty_grad(Self::ent_at(&self.rel, rank, r), &mut grads.rel, rank, r, reg * inv);
            add_penalty_grad(Self::ent_at(&self.ent, rank, o), &mut grads.ent, rank, o, reg * inv);
        }
        (loss, grads)
    }

    /// Writes a self-verifying checkpoint: header, dimensions, parameters,
    /// then a digest of everything before it.
    pub fn save(&self, path: &Path) -> Result<(), PredictorError> {
        let mut payload = Vec::new();
        payload.extend_from_slice(b"CQACPLX1");
        for dim in [self.entity_count, self.relation_count, self.rank] {
            payload.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for buf in [&self.ent, &self.rel] {
            for &x in buf.iter() {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&payload);
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(&payload)?;
        file.write_all(&digest)?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PredictorError> {
        let mut bytes = Vec::new();
        std::io::BufReader::new(std::fs::File::open(path)?).read_to_end(&mut bytes)?;
        if bytes.len() < 8 + 12 + 32 {
            return Err(PredictorError::Corrupt("file too short".into()));
        }
        let (payload, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(payload).as_slice() != digest {
            return Err(PredictorError::Corrupt("digest mismatch".into()));
        }
        if &payload[..8] != b"CQACPLX1" {
            return Err(PredictorError::Corrupt("unrecognized header".into()));
        }
        let dim = |i: usize| -> usize {
            u32::from_le_bytes(payload[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize
        };
        let (entity_count, relation_count, rank) = (dim(0), dim(1), dim(2));
        let ent_len = entity_count * 2 * rank;
        let rel_len = relation_count * 2 * rank;
        let expect = 20 + 8 * (ent_len + rel_len);
        if payload.len() != expect {
            return Err(PredictorError::Corrupt(format!(
                "expected {expect} payload bytes, found {}",
                payload.len()
            )));
        }
        let mut floats = payload[20..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let ent: Vec<f64> = floats.by_ref().take(ent_len).collect();
        let rel: Vec<f64> = floats.collect();
        Ok(ComplEx { entity_count, relation_count, rank, ent, rel })
    }
}

impl TripleScorer for ComplEx {
    fn entity_count(&self) -> usize {
        self.entity_count
    }

    fn score(&self, s: EntityId, r: RelationId, o: EntityId) -> f64 {
        self.score_parts(s.index(), r.index(), o.index())
    }

    fn score_all(&self, s: EntityId, r: RelationId) -> Vec<f64> {
        let rank = self.rank;
        let es = Self::ent_at(&self.ent, rank, s.index());
        let wr = Self::ent_at(&self.rel, rank, r.index());
        let mut q = vec![0.0; 2 * rank];
        for k in 0..rank {
            q[k] = es[k] * wr[k] - es[rank + k] * wr[rank + k];
            q[rank + k] = es[k] * wr[rank + k] + es[rank + k] * wr[k];
        }
        (0..self.entity_count)
            .map(|o| {
                let eo = Self::ent_at(&self.ent, rank, o);
                let mut total = 0.0;
                for k in 0..rank {
                    total += q[k] * eo[k] + q[rank + k] * eo[rank + k];
                }
                total
            })
            .collect()
    }
}

/// Trains on every edge of `graph` (augment with inverse edges first if
/// subject-side ranking should be learned too). Returns the model and the
/// mean loss per epoch.
pub fn train(
    graph: &KnowledgeGraph,
    cfg: &TrainConfig,
) -> Result<(ComplEx, Vec<f64>), PredictorError> {
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(PredictorError::BadConfig("epochs and batch size must be positive".into()));
    }
    let triples: Vec<Triple> = graph.triples().collect();
    if triples.is_empty() {
        return Err(PredictorError::BadConfig("training graph has no edges".into()));
    }
    let mut model = ComplEx::new_random(
        graph.entity_count(),
        graph.relation_count(),
        cfg.rank,
        cfg.init_scale,
        cfg.seed,
    )?;
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut acc = Grads { ent: vec![0.0; model.ent.len()], rel: vec![0.0; model.rel.len()] };
    let mut losses = Vec::with_capacity(cfg.epochs);
    const EPS: f64 = 1e-10;
    for _ in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Triple> = chunk.iter().map(|&i| triples[i]).collect();
            let (loss, grads) = model.batch_loss_grad(&batch, cfg.reg_weight);
            epoch_loss += loss;
            batches += 1;
            for (theta, g, a) in [
                (&mut model.ent, &grads.ent, &mut acc.ent),
                (&mut model.rel, &grads.rel, &mut acc.rel),
            ] {
                for i in 0..theta.len() {
                    a[i] += g[i] * g[i];
                    theta[i] -= cfg.learning_rate * g[i] / (a[i].sqrt() + EPS);
                }
            }
        }
        losses.push(epoch_loss / batches as f64);
    }
    Ok((model, losses))
}

/// Object-popularity baseline: the score of `(s, r, o)` is how often
/// `(·, r, o)` occurs in the training graph, ignoring the subject.
#[derive(Debug, Clone)]
pub struct FrequencyScorer {
    entity_count: usize,
    counts: HashMap<(RelationId, EntityId), f64>,
}

impl FrequencyScorer {
    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        let mut counts: HashMap<(RelationId, EntityId), f64> = HashMap::new();
        for t in graph.triples() {
            *counts.entry((t.relation, t.object)).or_default() += 1.0;
        }
        FrequencyScorer { entity_count: graph.entity_count(), counts }
    }
}

impl TripleScorer for FrequencyScorer {
    fn entity_count(&self) -> usize {
        self.entity_count
    }

    fn score(&self, _s: EntityId, r: RelationId, o: EntityId) -> f64 {
        self.counts.get(&(r, o)).copied().unwrap_or(0.0)
    }
}

/// Perfect-knowledge scorer: 1.0 exactly when the edge is in the graph.
#[derive(Debug, Clone, Copy)]
pub struct GraphScorer<'g> {
    pub graph: &'g KnowledgeGraph,
}

impl TripleScorer for GraphScorer<'_> {
    fn entity_count(&self) -> usize {
        self.graph.entity_count()
    }

    fn score(&self, s: EntityId, r: RelationId, o: EntityId) -> f64 {
        if self.graph.contains(s, r, o) {
            1.0
        } else {
            0.0
        }
    }
}
