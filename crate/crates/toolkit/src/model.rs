//! The two CBOW models over a shared embedding table: Gumbel boxes scored by
//! intersection log-volume with a max-margin loss, and the vector baseline
//! scored by dot product with the sigmoid negative-sampling loss.
//!
//! Parameters are stored as `f32` behind relaxed atomics so parallel trainers
//! can apply sparse row updates lock-free; all arithmetic happens in `f64`.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};
use std::sync::atomic::{AtomicU32, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use boxword_core::math::{sigmoid, softplus, softplus_inv};
use boxword_core::{score_with_grad, GumbelBox, GumbelParams};

use crate::corpus::{CorpusError, Vocab};

pub const MODEL_MAGIC: &[u8; 4] = b"W2BX";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    BadVersion(u32),
    #[error("unknown embedding kind tag {0}")]
    BadKind(u8),
    #[error("model file truncated or size mismatch")]
    SizeMismatch,
    #[error("embedded vocabulary is invalid: {0}")]
    BadVocab(#[from] CorpusError),
    #[error("embedded vocabulary has {vocab} entries, header says {header}")]
    VocabMismatch { vocab: usize, header: u64 },
}

/// Which representation a table stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Vector,
    Box,
}

impl Kind {
    pub fn tag(self) -> u8 {
        match self {
            Kind::Vector => 0,
            Kind::Box => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Kind, ModelError> {
        match tag {
            0 => Ok(Kind::Vector),
            1 => Ok(Kind::Box),
            other => Err(ModelError::BadKind(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Vector => "vector",
            Kind::Box => "box",
        }
    }
}

/// The two embedding roles every word has, as in Word2Vec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Center,
    Context,
}

/// An `f32` cell updatable through a shared reference.
#[derive(Debug)]
struct Cell(AtomicU32);

impl Cell {
    fn new(v: f32) -> Self {
        Cell(AtomicU32::new(v.to_bits()))
    }

    #[inline]
    fn get(&self) -> f32 {
        f32::from_bits(self.0.load(Ordering::Relaxed))
    }

    #[inline]
    fn set(&self, v: f32) {
        self.0.store(v.to_bits(), Ordering::Relaxed);
    }

    #[inline]
    fn add(&self, delta: f64) {
        let _ = self.0.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |bits| {
            Some(((f32::from_bits(bits) as f64 + delta) as f32).to_bits())
        });
    }
}

/// Dense parameter store for one model: a center block and a context block,
/// `row_width` floats per word each (`d` for vectors, `2d` as `[centers...,
/// raw widths...]` for boxes).
#[derive(Debug)]
pub struct EmbeddingTable {
    kind: Kind,
    dim: usize,
    vocab_size: usize,
    center: Vec<Cell>,
    context: Vec<Cell>,
}

impl EmbeddingTable {
    pub fn new(kind: Kind, dim: usize, vocab_size: usize) -> Self {
        assert!(dim >= 1 && vocab_size >= 1);
        let width = match kind {
            Kind::Vector => dim,
            Kind::Box => 2 * dim,
        };
        let n = width * vocab_size;
        let mut center = Vec::with_capacity(n);
        let mut context = Vec::with_capacity(n);
        center.resize_with(n, || Cell::new(0.0));
        context.resize_with(n, || Cell::new(0.0));
        EmbeddingTable { kind, dim, vocab_size, center, context }
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn row_width(&self) -> usize {
        match self.kind {
            Kind::Vector => self.dim,
            Kind::Box => 2 * self.dim,
        }
    }

    fn block(&self, role: Role) -> &[Cell] {
        match role {
            Role::Center => &self.center,
            Role::Context => &self.context,
        }
    }

    /// Snapshot one word's parameters as `f64`.
    pub fn row(&self, role: Role, id: u32) -> Vec<f64> {
        let w = self.row_width();
        let base = id as usize * w;
        self.block(role)[base..base + w].iter().map(|c| c.get() as f64).collect()
    }

    /// Overwrite one word's parameters.
    pub fn set_row(&self, role: Role, id: u32, values: &[f64]) {
        let w = self.row_width();
        assert_eq!(values.len(), w);
        let base = id as usize * w;
        for (cell, &v) in self.block(role)[base..base + w].iter().zip(values) {
            cell.set(v as f32);
        }
    }

    /// Atomically add `delta` to one word's parameters (lock-free; concurrent
    /// adds may interleave but each element update is a CAS).
    pub fn add_to_row(&self, role: Role, id: u32, delta: &[f64]) {
        let w = self.row_width();
        assert_eq!(delta.len(), w);
        let base = id as usize * w;
        for (cell, &d) in self.block(role)[base..base + w].iter().zip(delta) {
            if d != 0.0 {
                cell.add(d);
            }
        }
    }

    /// Deterministic parameter initialization. Vectors fill every coordinate
    /// with `U(-0.5/d, 0.5/d) * init_scale`; boxes draw centers from
    /// `U(-0.1, 0.1) * init_scale` and raw widths so the materialized width
    /// is `0.2 * init_scale` with 10% jitter.
    pub fn init(&self, seed: u64, init_scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in [&self.center, &self.context] {
            match self.kind {
                Kind::Vector => {
                    let half = 0.5 / self.dim as f64 * init_scale;
                    for cell in block.iter() {
                        cell.set(rng.gen_range(-half..half) as f32);
                    }
                }
                Kind::Box => {
                    let w = 2 * self.dim;
                    for word in 0..self.vocab_size {
                        let base = word * w;
                        for i in 0..self.dim {
                            let c = rng.gen_range(-0.1..0.1) * init_scale;
                            block[base + i].set(c as f32);
                        }
                        for i in 0..self.dim {
                            let width = 0.2 * init_scale * rng.gen_range(0.9..1.1);
                            block[base + self.dim + i].set(softplus_inv(width) as f32);
                        }
                    }
                }
            }
        }
    }

    /// Materialize one word's box: `min = c - softplus(r)/2`,
    /// `max = c + softplus(r)/2`. Panics for vector tables.
    pub fn as_box(&self, role: Role, id: u32) -> GumbelBox {
        assert_eq!(self.kind, Kind::Box, "as_box requires a box table");
        let params = self.row(role, id);
        box_from_params(&params[..self.dim], &params[self.dim..])
    }

    /// Mean of the context-role centers and raw widths over `ids`.
    /// Averaging happens in raw (pre-softplus) width space.
    pub fn pooled_context_params(&self, ids: &[u32]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(self.kind, Kind::Box, "pooling requires a box table");
        assert!(!ids.is_empty(), "cannot pool an empty context");
        let d = self.dim;
        let mut c = vec![0.0; d];
        let mut r = vec![0.0; d];
        for &id in ids {
            let row = self.row(Role::Context, id);
            for i in 0..d {
                c[i] += row[i];
                r[i] += row[d + i];
            }
        }
        let n = ids.len() as f64;
        for i in 0..d {
            c[i] /= n;
            r[i] /= n;
        }
        (c, r)
    }

    /// The pooled context box for a window of context words.
    pub fn pool_context_box(&self, ids: &[u32]) -> GumbelBox {
        let (c, r) = self.pooled_context_params(ids);
        box_from_params(&c, &r)
    }

    /// Mean of the context-role vectors. Panics for box tables or empty ids.
    pub fn pooled_context_vector(&self, ids: &[u32]) -> Vec<f64> {
        assert_eq!(self.kind, Kind::Vector, "vector pooling requires a vector table");
        assert!(!ids.is_empty(), "cannot pool an empty context");
        let d = self.dim;
        let mut v = vec![0.0; d];
        for &id in ids {
            let row = self.row(Role::Context, id);
            for i in 0..d {
                v[i] += row[i];
            }
        }
        for x in v.iter_mut() {
            *x /= ids.len() as f64;
        }
        v
    }

    fn write_block<W: Write>(&self, block: &[Cell], w: &mut W) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(block.len() * 4);
        for cell in block {
            buf.extend_from_slice(&cell.get().to_le_bytes());
        }
        w.write_all(&buf)
    }
}

/// Build a box from per-word parameters `(centers, raw widths)`.
pub fn box_from_params(c: &[f64], r: &[f64]) -> GumbelBox {
    let min_loc = c.iter().zip(r).map(|(&ci, &ri)| ci - softplus(ri) / 2.0).collect();
    let max_loc = c.iter().zip(r).map(|(&ci, &ri)| ci + softplus(ri) / 2.0).collect();
    GumbelBox::new(min_loc, max_loc)
}

/// Hyperparameters of the box loss.
#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    pub margin: f64,
    pub negatives_k: usize,
    pub beta: f64,
}

impl LossConfig {
    pub fn new(margin: f64, negatives_k: usize, beta: f64) -> Self {
        assert!(margin > 0.0, "margin must be positive");
        assert!(negatives_k >= 1, "need at least one negative");
        LossConfig { margin, negatives_k, beta }
    }
}

/// Sparse gradient accumulator keyed by (role, word id). Rows touched by
/// several examples in a batch are summed before the SGD step.
#[derive(Debug, Default)]
pub struct GradAccum {
    map: HashMap<(Role, u32), Vec<f64>>,
}

impl GradAccum {
    pub fn new() -> Self {
        GradAccum::default()
    }

    pub fn clear(&mut self) {
        self.map.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    fn row(&mut self, role: Role, id: u32, width: usize) -> &mut Vec<f64> {
        self.map.entry((role, id)).or_insert_with(|| vec![0.0; width])
    }

    pub fn get(&self, role: Role, id: u32) -> Option<&[f64]> {
        self.map.get(&(role, id)).map(|v| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (Role, u32, &[f64])> {
        self.map.iter().map(|(&(role, id), g)| (role, id, g.as_slice()))
    }

    /// One SGD step: `p -= lr * g` for every accumulated row.
    pub fn apply(&self, table: &EmbeddingTable, lr: f64) {
        let w = table.row_width();
        let mut delta = vec![0.0; w];
        for (&(role, id), grad) in &self.map {
            for (d, &g) in delta.iter_mut().zip(grad) {
                *d = -lr * g;
            }
            table.add_to_row(role, id, &delta);
        }
    }
}

/// Convert a score gradient on a box's (min, max) locations into a gradient
/// on its (center, raw width) parameters and add it into `out`, scaled.
fn fold_box_grad(
    out: &mut [f64],
    d_min: &[f64],
    d_max: &[f64],
    raw_widths: &[f64],
    scale: f64,
) {
    let d = d_min.len();
    for i in 0..d {
        out[i] += scale * (d_min[i] + d_max[i]);
        out[d + i] += scale * (d_max[i] - d_min[i]) * sigmoid(raw_widths[i]) / 2.0;
    }
}

/// Max-margin box loss for one CBOW example: per negative,
/// `max(0, margin - s_pos + s_neg)`, where scores are intersection
/// log-volumes against the pooled context box. Gradients accumulate for the
/// center word, every negative, and every context word (through the mean).
pub fn box_loss(
    table: &EmbeddingTable,
    center: u32,
    context: &[u32],
    negatives: &[u32],
    cfg: &LossConfig,
    grads: &mut GradAccum,
) -> f64 {
    assert_eq!(table.kind(), Kind::Box);
    assert!(!context.is_empty(), "box_loss: empty context");
    assert!(!negatives.is_empty(), "box_loss: empty negative set");

    let d = table.dim();
    let width = table.row_width();
    let params = GumbelParams::new(cfg.beta);

    let (pooled_c, pooled_r) = table.pooled_context_params(context);
    let pooled_box = box_from_params(&pooled_c, &pooled_r);

    let center_params = table.row(Role::Center, center);
    let center_box = box_from_params(&center_params[..d], &center_params[d..]);

    let (s_pos, g_pos) = score_with_grad(&center_box, &pooled_box, &params);

    // Accumulated d(loss)/d(pooled box locations).
    let mut pooled_d_min = vec![0.0; d];
    let mut pooled_d_max = vec![0.0; d];

    let mut loss = 0.0;
    let mut active = 0usize;

    let mut neg_params_buf: Vec<f64>;
    for &neg in negatives {
        neg_params_buf = table.row(Role::Center, neg);
        let neg_box = box_from_params(&neg_params_buf[..d], &neg_params_buf[d..]);
        let (s_neg, g_neg) = score_with_grad(&neg_box, &pooled_box, &params);
        let hinge = cfg.margin - s_pos + s_neg;
        if hinge > 0.0 {
            loss += hinge;
            active += 1;
            // d(loss)/d(s_neg) = +1 for this active hinge.
            fold_box_grad(
                grads.row(Role::Center, neg, width),
                &g_neg.word_min,
                &g_neg.word_max,
                &neg_params_buf[d..],
                1.0,
            );
            for i in 0..d {
                pooled_d_min[i] += g_neg.context_min[i];
                pooled_d_max[i] += g_neg.context_max[i];
            }
        }
    }

    if active > 0 {
        // d(loss)/d(s_pos) = -active.
        let scale = -(active as f64);
        fold_box_grad(
            grads.row(Role::Center, center, width),
            &g_pos.word_min,
            &g_pos.word_max,
            &center_params[d..],
            scale,
        );
        for i in 0..d {
            pooled_d_min[i] += scale * g_pos.context_min[i];
            pooled_d_max[i] += scale * g_pos.context_max[i];
        }

        // Through the mean: each context word sees 1/n of the pooled
        // gradient, folded at the pooled raw width.
        let inv_n = 1.0 / context.len() as f64;
        let mut pooled_fold = vec![0.0; width];
        fold_box_grad(&mut pooled_fold, &pooled_d_min, &pooled_d_max, &pooled_r, 1.0);
        for &ctx in context {
            let row = grads.row(Role::Context, ctx, width);
            for (o, &g) in row.iter_mut().zip(&pooled_fold) {
                *o += g * inv_n;
            }
        }
    }

    loss
}

/// Sigmoid negative-sampling CBOW loss for the vector baseline:
/// `-ln s(u_c . v) - sum_j ln s(-u_j . v)` with `v` the mean context vector.
pub fn vector_loss(
    table: &EmbeddingTable,
    center: u32,
    context: &[u32],
    negatives: &[u32],
    grads: &mut GradAccum,
) -> f64 {
    assert_eq!(table.kind(), Kind::Vector);
    assert!(!context.is_empty(), "vector_loss: empty context");
    assert!(!negatives.is_empty(), "vector_loss: empty negative set");

    let d = table.dim();
    let pooled = table.pooled_context_vector(context);
    let center_vec = table.row(Role::Center, center);

    // -ln sigmoid(x) = softplus(-x)
    let x = dot(&center_vec, &pooled);
    let mut loss = softplus(-x);
    let mut d_pooled = vec![0.0; d];

    let coeff_pos = sigmoid(x) - 1.0;
    axpy(grads.row(Role::Center, center, d), coeff_pos, &pooled);
    axpy(&mut d_pooled, coeff_pos, &center_vec);

    for &neg in negatives {
        let neg_vec = table.row(Role::Center, neg);
        let y = dot(&neg_vec, &pooled);
        loss += softplus(y);
        let coeff = sigmoid(y);
        axpy(grads.row(Role::Center, neg, d), coeff, &pooled);
        axpy(&mut d_pooled, coeff, &neg_vec);
    }

    let inv_n = 1.0 / context.len() as f64;
    for &ctx in context {
        axpy(grads.row(Role::Context, ctx, d), inv_n, &d_pooled);
    }

    loss
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero if either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, &xi) in out.iter_mut().zip(x) {
        *o += a * xi;
    }
}

/// A trained (or initialized) model: the parameter table plus the vocabulary
/// it was built over.
#[derive(Debug)]
pub struct Model {
    pub table: EmbeddingTable,
    pub vocab: Vocab,
}

impl Model {
    /// Serialize in the binary model format: magic, version, kind, dim,
    /// vocab size, the two little-endian f32 blocks, then the vocab TSV
    /// embedded as length-prefixed UTF-8.
    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let t = &self.table;
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&[t.kind().tag()])?;
        w.write_all(&(t.dim() as u32).to_le_bytes())?;
        w.write_all(&(t.vocab_size() as u64).to_le_bytes())?;
        t.write_block(&t.center, w)?;
        t.write_block(&t.context, w)?;
        let mut vocab_tsv = Vec::new();
        self.vocab.write_tsv(&mut vocab_tsv)?;
        w.write_all(&(vocab_tsv.len() as u64).to_le_bytes())?;
        w.write_all(&vocab_tsv)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("in-memory write cannot fail");
        buf
    }

    pub fn read<R: Read + BufRead>(r: &mut R) -> Result<Model, ModelError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != MODEL_VERSION {
            return Err(ModelError::BadVersion(version));
        }
        let mut kind_tag = [0u8; 1];
        r.read_exact(&mut kind_tag)?;
        let kind = Kind::from_tag(kind_tag[0])?;
        let dim = read_u32(r)? as usize;
        let vocab_size = read_u64(r)? as usize;
        if dim == 0 || vocab_size == 0 {
            return Err(ModelError::SizeMismatch);
        }

        let table = EmbeddingTable::new(kind, dim, vocab_size);
        read_block(r, &table.center)?;
        read_block(r, &table.context)?;

        let vocab_len = read_u64(r)? as usize;
        let mut vocab_tsv = vec![0u8; vocab_len];
        r.read_exact(&mut vocab_tsv)?;
        let vocab = Vocab::read_tsv(&vocab_tsv[..])?;
        if vocab.len() != vocab_size {
            return Err(ModelError::VocabMismatch { vocab: vocab.len(), header: vocab_size as u64 });
        }
        Ok(Model { table, vocab })
    }

    pub fn read_from_path(path: &std::path::Path) -> Result<Model, ModelError> {
        let file = std::fs::File::open(path)?;
        Model::read(&mut std::io::BufReader::new(file))
    }

    pub fn write_to_path(&self, path: &std::path::Path) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w)?;
        w.flush()
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_block<R: Read>(r: &mut R, block: &[Cell]) -> Result<(), ModelError> {
    let mut buf = vec![0u8; block.len() * 4];
    r.read_exact(&mut buf).map_err(|_| ModelError::SizeMismatch)?;
    for (cell, chunk) in block.iter().zip(buf.chunks_exact(4)) {
        cell.set(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocab;

    fn tiny_vocab(n: usize) -> Vocab {
        let counts = (0..n).map(|i| (format!("w{i:03}"), (n - i) as u64 * 10));
        Vocab::from_counts(counts, 1).unwrap()
    }

    #[test]
    fn as_box_matches_softplus_parameterization() {
        let t = EmbeddingTable::new(Kind::Box, 1, 2);
        // softplus_inv(2) = ln(e^2 - 1), frozen from a high-precision eval.
        // Storage is f32, so agreement is to f32 precision.
        t.set_row(Role::Center, 0, &[0.0, 1.854_586_542_131_141]);
        let b = t.as_box(Role::Center, 0);
        assert!((b.min_loc[0] + 1.0).abs() < 1e-6);
        assert!((b.max_loc[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn as_box_degenerates_to_point_for_tiny_width() {
        let t = EmbeddingTable::new(Kind::Box, 1, 1);
        t.set_row(Role::Center, 0, &[5.0, -80.0]);
        let b = t.as_box(Role::Center, 0);
        assert!((b.min_loc[0] - 5.0).abs() < 1e-12);
        assert!((b.max_loc[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn as_box_arithmetic() {
        let t = EmbeddingTable::new(Kind::Box, 1, 1);
        t.set_row(Role::Center, 0, &[5.0, softplus_inv(0.5)]);
        let b = t.as_box(Role::Center, 0);
        assert!((b.min_loc[0] - 4.75).abs() < 1e-9);
        assert!((b.max_loc[0] - 5.25).abs() < 1e-9);
    }

    #[test]
    fn pooling_averages_centers_and_raw_widths() {
        let t = EmbeddingTable::new(Kind::Box, 1, 2);
        let r = softplus_inv(1.0);
        t.set_row(Role::Context, 0, &[0.0, r]);
        t.set_row(Role::Context, 1, &[2.0, r]);
        let b = t.pool_context_box(&[0, 1]);
        assert!((b.min_loc[0] - 0.5).abs() < 1e-6);
        assert!((b.max_loc[0] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn pooling_single_context_is_identity() {
        let t = EmbeddingTable::new(Kind::Box, 2, 3);
        t.init(5, 1.0);
        let direct = t.as_box(Role::Context, 1);
        let pooled = t.pool_context_box(&[1]);
        assert_eq!(direct, pooled);
    }

    #[test]
    fn pooling_width_averages_in_raw_space() {
        // softplus(mean(softplus_inv(1), softplus_inv(3))) = 1.906074796...,
        // frozen from a high-precision eval; notably not the arithmetic mean 2.
        let t = EmbeddingTable::new(Kind::Box, 1, 2);
        t.set_row(Role::Context, 0, &[0.0, softplus_inv(1.0)]);
        t.set_row(Role::Context, 1, &[0.0, softplus_inv(3.0)]);
        let b = t.pool_context_box(&[0, 1]);
        let width = b.max_loc[0] - b.min_loc[0];
        assert!((width - 1.906_074_796_116_330).abs() < 1e-6, "width = {width}");
    }

    #[test]
    fn pooling_identical_contexts_returns_that_box() {
        let t = EmbeddingTable::new(Kind::Box, 2, 2);
        t.init(11, 1.0);
        let direct = t.as_box(Role::Context, 0);
        let pooled = t.pool_context_box(&[0, 0, 0]);
        for i in 0..2 {
            assert!((direct.min_loc[i] - pooled.min_loc[i]).abs() < 1e-12);
            assert!((direct.max_loc[i] - pooled.max_loc[i]).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic(expected = "as_box requires a box table")]
    fn as_box_rejects_vector_tables() {
        let t = EmbeddingTable::new(Kind::Vector, 2, 2);
        t.as_box(Role::Center, 0);
    }

    #[test]
    fn init_is_deterministic_and_in_bounds() {
        let a = EmbeddingTable::new(Kind::Vector, 8, 50);
        let b = EmbeddingTable::new(Kind::Vector, 8, 50);
        a.init(42, 1.0);
        b.init(42, 1.0);
        let bound = 0.5 / 8.0;
        for id in 0..50 {
            let ra = a.row(Role::Center, id);
            assert_eq!(ra, b.row(Role::Center, id));
            assert!(ra.iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn init_box_widths_near_target() {
        let t = EmbeddingTable::new(Kind::Box, 4, 30);
        t.init(3, 1.0);
        for id in 0..30 {
            let b = t.as_box(Role::Center, id);
            for i in 0..4 {
                let w = b.max_loc[i] - b.min_loc[i];
                assert!(w > 0.2 * 0.9 - 1e-6 && w < 0.2 * 1.1 + 1e-6, "width {w}");
            }
        }
    }

    #[test]
    fn box_loss_inactive_hinge_is_zero() {
        let t = EmbeddingTable::new(Kind::Box, 2, 4);
        // Center 0 sits on the context box; negative 3 is far away.
        t.set_row(Role::Center, 0, &[0.0, 0.0, 1.0, 1.0]);
        t.set_row(Role::Center, 3, &[50.0, 50.0, 1.0, 1.0]);
        t.set_row(Role::Context, 1, &[0.0, 0.0, 1.0, 1.0]);
        let cfg = LossConfig::new(1.0, 1, 1.0);
        let mut g = GradAccum::new();
        let loss = box_loss(&t, 0, &[1], &[3], &cfg, &mut g);
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|(_, _, grad)| grad.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn box_loss_boundary_hinge_equals_margin() {
        // Negative identical to the center: s_neg == s_pos, loss == margin.
        let t = EmbeddingTable::new(Kind::Box, 2, 4);
        let row = [0.1, -0.2, 0.5, 0.5];
        t.set_row(Role::Center, 0, &row);
        t.set_row(Role::Center, 3, &row);
        t.set_row(Role::Context, 1, &[0.0, 0.0, 0.5, 0.5]);
        let cfg = LossConfig::new(1.0, 1, 1.0);
        let mut g = GradAccum::new();
        let loss = box_loss(&t, 0, &[1], &[3], &cfg, &mut g);
        assert!((loss - 1.0).abs() < 1e-9);
    }

    #[test]
    fn vector_loss_at_zero_scores() {
        let t = EmbeddingTable::new(Kind::Vector, 3, 4);
        // All zero vectors: every dot product is 0, loss = 2 ln 2.
        let mut g = GradAccum::new();
        let loss = vector_loss(&t, 0, &[1], &[2], &mut g);
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn vector_loss_saturates_to_zero() {
        let t = EmbeddingTable::new(Kind::Vector, 1, 3);
        t.set_row(Role::Center, 0, &[100.0]);
        t.set_row(Role::Center, 2, &[-100.0]);
        t.set_row(Role::Context, 1, &[1.0]);
        let mut g = GradAccum::new();
        let loss = vector_loss(&t, 0, &[1], &[2], &mut g);
        assert!(loss < 1e-10);
    }

    #[test]
    fn gradients_touch_only_involved_rows() {
        let t = EmbeddingTable::new(Kind::Box, 2, 10);
        t.init(9, 1.0);
        let cfg = LossConfig::new(5.0, 2, 1.0);
        let mut g = GradAccum::new();
        box_loss(&t, 0, &[1, 2], &[3, 4], &cfg, &mut g);
        let mut touched: Vec<_> = g.iter().map(|(role, id, _)| (role, id)).collect();
        touched.sort();
        assert_eq!(
            touched,
            vec![
                (Role::Center, 0),
                (Role::Center, 3),
                (Role::Center, 4),
                (Role::Context, 1),
                (Role::Context, 2),
            ]
        );
    }

    fn finite_difference_check(kind: Kind, seed: u64) {
        let d = 8;
        let t = EmbeddingTable::new(kind, d, 12);
        t.init(seed, 1.0);
        let cfg = LossConfig::new(5.0, 3, 1.0);
        let center = 0u32;
        let context = [1u32, 2, 3];
        let negatives = [4u32, 5, 6];

        let loss_fn = |t: &EmbeddingTable| {
            let mut g = GradAccum::new();
            match kind {
                Kind::Box => box_loss(t, center, &context, &negatives, &cfg, &mut g),
                Kind::Vector => vector_loss(t, center, &context, &negatives, &mut g),
            }
        };

        let mut grads = GradAccum::new();
        let _ = match kind {
            Kind::Box => box_loss(&t, center, &context, &negatives, &cfg, &mut grads),
            Kind::Vector => vector_loss(&t, center, &context, &negatives, &mut grads),
        };

        let h = 1e-5;
        for (role, id) in [(Role::Center, 0u32), (Role::Center, 4), (Role::Context, 2)] {
            let base = t.row(role, id);
            let analytic = grads.get(role, id).map(|g| g.to_vec()).unwrap_or(vec![0.0; base.len()]);
            for j in 0..base.len() {
                let mut hi = base.clone();
                let mut lo = base.clone();
                hi[j] += h;
                lo[j] -= h;
                t.set_row(role, id, &hi);
                let hi_val = t.row(role, id)[j];
                let f_hi = loss_fn(&t);
                t.set_row(role, id, &lo);
                let lo_val = t.row(role, id)[j];
                let f_lo = loss_fn(&t);
                t.set_row(role, id, &base);
                // Use the f32-quantized step actually applied.
                let fd = (f_hi - f_lo) / (hi_val - lo_val);
                let denom = fd.abs().max(analytic[j].abs()).max(1e-8);
                assert!(
                    (fd - analytic[j]).abs() / denom < 1e-4,
                    "{kind:?} {role:?} row {id} coord {j}: fd {fd} vs analytic {}",
                    analytic[j]
                );
            }
        }
    }

    #[test]
    fn box_loss_gradient_matches_finite_differences() {
        finite_difference_check(Kind::Box, 17);
    }

    #[test]
    fn vector_loss_gradient_matches_finite_differences() {
        finite_difference_check(Kind::Vector, 18);
    }

    #[test]
    fn single_step_decreases_loss() {
        for (kind, seed) in [(Kind::Box, 31u64), (Kind::Vector, 32)] {
            let t = EmbeddingTable::new(kind, 8, 12);
            t.init(seed, 1.0);
            let cfg = LossConfig::new(5.0, 1, 1.0);
            let run = |t: &EmbeddingTable, g: &mut GradAccum| match kind {
                Kind::Box => box_loss(t, 0, &[1, 2], &[4], &cfg, g),
                Kind::Vector => vector_loss(t, 0, &[1, 2], &[4], g),
            };
            let mut g = GradAccum::new();
            let before = run(&t, &mut g);
            assert!(before > 0.0, "want an active example for {kind:?}");
            g.apply(&t, 1e-3);
            let mut g2 = GradAccum::new();
            let after = run(&t, &mut g2);
            assert!(after < before, "{kind:?}: {after} !< {before}");
        }
    }

    #[test]
    fn model_file_round_trip_is_bitwise() {
        for kind in [Kind::Vector, Kind::Box] {
            let vocab = tiny_vocab(7);
            let table = EmbeddingTable::new(kind, 5, 7);
            table.init(23, 1.0);
            let model = Model { table, vocab };
            let bytes = model.to_bytes();
            let back = Model::read(&mut &bytes[..]).unwrap();
            assert_eq!(back.to_bytes(), bytes);
            assert_eq!(back.table.kind(), kind);
            assert_eq!(back.vocab.tokens(), model.vocab.tokens());
        }
    }

    #[test]
    fn model_read_rejects_garbage() {
        let err = Model::read(&mut &b"NOPE...."[..]).unwrap_err();
        assert!(matches!(err, ModelError::BadMagic));
        let vocab = tiny_vocab(3);
        let table = EmbeddingTable::new(Kind::Box, 2, 3);
        let model = Model { table, vocab };
        let mut bytes = model.to_bytes();
        bytes.truncate(bytes.len() - 10);
        let err = Model::read(&mut &bytes[..]).unwrap_err();
        assert!(matches!(err, ModelError::SizeMismatch | ModelError::Io(_)));
    }
}
