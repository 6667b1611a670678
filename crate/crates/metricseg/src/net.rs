//! Small fully connected network mapping conditioned voxel features to a
//! d-dimensional embedding plus semantic logits, with hand-written exact
//! backpropagation and an ADAM optimizer. Checkpoints round-trip bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetConfig {
    pub input_width: usize,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub class_count: usize,
    /// When set, the semantic head gets its own hidden stack instead of
    /// sharing the embedding trunk.
    pub separate_semantic_trunk: bool,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.embed_dim == 0 || self.class_count < 2 {
            return Err(Error::Config(
                "net widths must be positive (and at least 2 classes)".into(),
            ));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    w: Array2<f64>,
    b: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }
}

/// One gradient (or moment) block per dense layer, in the model's canonical
/// block order.
#[derive(Debug, Clone)]
pub struct Gradients {
    blocks: Vec<Dense>,
}

impl Gradients {
    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Gradients) {
        assert_eq!(self.blocks.len(), other.blocks.len());
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for b in self.blocks.iter_mut() {
            b.w *= factor;
            b.b *= factor;
        }
    }
}

/// Network parameters plus optimizer state; the serializable checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: NetConfig,
    trunk: Vec<Dense>,
    embed_head: Dense,
    semantic_trunk: Vec<Dense>,
    semantic_head: Dense,
    adam_m: Vec<Dense>,
    adam_v: Vec<Dense>,
    pub step: u64,
    pub seed: u64,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Dense {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Dense {
        w: Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound)),
        b: Array1::zeros(cols),
    }
}

impl ModelState {
    /// Uniform Glorot weights, zero biases, zero optimizer moments.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = |rng: &mut ChaCha8Rng| {
            let mut layers = Vec::new();
            let mut prev = config.input_width;
            for &width in &config.hidden {
                layers.push(glorot(rng, prev, width));
                prev = width;
            }
            (layers, prev)
        };
        let (trunk, trunk_out) = stack(&mut rng);
        let embed_head = glorot(&mut rng, trunk_out, config.embed_dim);
        let (semantic_trunk, sem_out) = if config.separate_semantic_trunk {
            stack(&mut rng)
        } else {
            (Vec::new(), trunk_out)
        };
        let semantic_head = glorot(&mut rng, sem_out, config.class_count);
        let mut state = ModelState {
            config,
            trunk,
            embed_head,
            semantic_trunk,
            semantic_head,
            adam_m: Vec::new(),
            adam_v: Vec::new(),
            step: 0,
            seed,
        };
        state.adam_m = state.blocks().iter().map(|(_, d)| d.zeros_like()).collect();
        state.adam_v = state.adam_m.clone();
        Ok(state)
    }

    /// Canonical block order used by gradients, moments and checkpoints.
    fn blocks(&self) -> Vec<(String, &Dense)> {
        let mut out = Vec::new();
        for (i, l) in self.trunk.iter().enumerate() {
            out.push((format!("trunk{i}"), l));
        }
        out.push(("embed_head".into(), &self.embed_head));
        for (i, l) in self.semantic_trunk.iter().enumerate() {
            out.push((format!("sem_trunk{i}"), l));
        }
        out.push(("sem_head".into(), &self.semantic_head));
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut Dense> {
        let mut out: Vec<&mut Dense> = Vec::new();
        for l in self.trunk.iter_mut() {
            out.push(l);
        }
        out.push(&mut self.embed_head);
        for l in self.semantic_trunk.iter_mut() {
            out.push(l);
        }
        out.push(&mut self.semantic_head);
        out
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            blocks: self.blocks().iter().map(|(_, d)| d.zeros_like()).collect(),
        }
    }

    fn check_input(&self, features: ArrayView2<f64>) -> Result<()> {
        if features.ncols() != self.config.input_width {
            return Err(Error::ShapeMismatch {
                expected: format!("feature width {}", self.config.input_width),
                actual: format!("{}", features.ncols()),
            });
        }
        Ok(())
    }
}

struct Trace {
    /// Pre-activations per hidden layer.
    zs: Vec<Array2<f64>>,
    /// Post-ReLU activations per hidden layer.
    acts: Vec<Array2<f64>>,
}

fn stack_forward(layers: &[Dense], input: ArrayView2<f64>) -> Trace {
    let mut zs = Vec::with_capacity(layers.len());
    let mut acts = Vec::with_capacity(layers.len());
    let mut current = input.to_owned();
    for layer in layers {
        let mut z = current.dot(&layer.w);
        z += &layer.b;
        let a = z.mapv(|v| v.max(0.0));
        zs.push(z);
        acts.push(a.clone());
        current = a;
    }
    Trace { zs, acts }
}

fn head_forward(head: &Dense, input: ArrayView2<f64>) -> Array2<f64> {
    let mut out = input.dot(&head.w);
    out += &head.b;
    out
}

/// Maps `n` feature rows to `(embeddings, semantic_logits)`. Pointwise:
/// each output row depends only on its own input row.
pub fn forward(state: &ModelState, features: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    state.check_input(features)?;
    let trace = stack_forward(&state.trunk, features);
    let trunk_out = trace.acts.last().map_or(features.to_owned(), |a| a.clone());
    let embeddings = head_forward(&state.embed_head, trunk_out.view());
    let logits = if state.config.separate_semantic_trunk {
        let sem = stack_forward(&state.semantic_trunk, features);
        let sem_out = sem.acts.last().map_or(features.to_owned(), |a| a.clone());
        head_forward(&state.semantic_head, sem_out.view())
    } else {
        head_forward(&state.semantic_head, trunk_out.view())
    };
    Ok((embeddings, logits))
}

/// Backpropagates through a hidden stack given the gradient at its output;
/// appends per-layer gradients (first layer first) and returns nothing
/// useful about the input gradient because callers never need it.
fn stack_backward(
    layers: &[Dense],
    input: ArrayView2<'_, f64>,
    trace: &Trace,
    mut d_out: Array2<f64>,
    grads: &mut [Dense],
) {
    for l in (0..layers.len()).rev() {
        // ReLU derivative: 1 for z > 0, 0 at and below 0.
        Zip::from(&mut d_out).and(&trace.zs[l]).for_each(|g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        let below = if l == 0 {
            input.view()
        } else {
            trace.acts[l - 1].view()
        };
        grads[l].w = below.t().dot(&d_out);
        grads[l].b = d_out.sum_axis(Axis(0));
        if l > 0 {
            d_out = d_out.dot(&layers[l].w.t());
        }
    }
}

/// Exact reverse-mode gradients of `forward` for the functional
/// `sum(embeddings * grad_embeddings) + sum(logits * grad_logits)`.
pub fn backward(
    state: &ModelState,
    features: ArrayView2<f64>,
    grad_embeddings: ArrayView2<f64>,
    grad_logits: ArrayView2<f64>,
) -> Result<Gradients> {
    state.check_input(features)?;
    let n = features.nrows();
    let expect_emb = (n, state.config.embed_dim);
    if grad_embeddings.dim() != expect_emb {
        return Err(Error::ShapeMismatch {
            expected: format!("{expect_emb:?}"),
            actual: format!("{:?}", grad_embeddings.dim()),
        });
    }
    let expect_sem = (n, state.config.class_count);
    if grad_logits.dim() != expect_sem {
        return Err(Error::ShapeMismatch {
            expected: format!("{expect_sem:?}"),
            actual: format!("{:?}", grad_logits.dim()),
        });
    }

    let trace = stack_forward(&state.trunk, features);
    let trunk_out = trace.acts.last().map_or(features.to_owned(), |a| a.clone());

    let mut grads = state.zero_gradients();
    let trunk_len = state.trunk.len();

    // Embedding head.
    let embed_idx = trunk_len;
    grads.blocks[embed_idx].w = trunk_out.t().dot(&grad_embeddings);
    grads.blocks[embed_idx].b = grad_embeddings.sum_axis(Axis(0));
    let mut d_trunk_out = grad_embeddings.dot(&state.embed_head.w.t());

    if state.config.separate_semantic_trunk {
        let sem_trace = stack_forward(&state.semantic_trunk, features);
        let sem_out = sem_trace.acts.last().map_or(features.to_owned(), |a| a.clone());
        let sem_head_idx = trunk_len + 1 + state.semantic_trunk.len();
        grads.blocks[sem_head_idx].w = sem_out.t().dot(&grad_logits);
        grads.blocks[sem_head_idx].b = grad_logits.sum_axis(Axis(0));
        let d_sem_out = grad_logits.dot(&state.semantic_head.w.t());
        stack_backward(
            &state.semantic_trunk,
            features,
            &sem_trace,
            d_sem_out,
            &mut grads.blocks[trunk_len + 1..sem_head_idx],
        );
    } else {
        let sem_head_idx = trunk_len + 1;
        grads.blocks[sem_head_idx].w = trunk_out.t().dot(&grad_logits);
        grads.blocks[sem_head_idx].b = grad_logits.sum_axis(Axis(0));
        d_trunk_out += &grad_logits.dot(&state.semantic_head.w.t());
    }

    stack_backward(
        &state.trunk,
        features,
        &trace,
        d_trunk_out,
        &mut grads.blocks[..trunk_len],
    );
    Ok(grads)
}

/// Learning rate decayed by 0.8 for every 10k steps.
pub fn lr_schedule(base_lr: f64, step: u64) -> f64 {
    base_lr * 0.8f64.powi((step / 10_000) as i32)
}

/// One ADAM update (beta1 0.9, beta2 0.999, eps 1e-8); increments the step
/// counter. Rejects non-finite gradients, naming the offending block.
pub fn adam_step(state: &mut ModelState, grads: &Gradients, lr: f64) -> Result<()> {
    let names: Vec<String> = state.blocks().iter().map(|(n, _)| n.clone()).collect();
    if grads.blocks.len() != names.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} gradient blocks", names.len()),
            actual: format!("{}", grads.blocks.len()),
        });
    }
    for (name, g) in names.iter().zip(&grads.blocks) {
        if g.w.iter().any(|v| !v.is_finite()) || g.b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                block: name.clone(),
            });
        }
    }

    let t = state.step + 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);

    // Split borrows: moments move out, parameters update, moments move back.
    let mut m = std::mem::take(&mut state.adam_m);
    let mut v = std::mem::take(&mut state.adam_v);
    for (((param, g), m), v) in state
        .blocks_mut()
        .into_iter()
        .zip(&grads.blocks)
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        };
        Zip::from(&mut param.w)
            .and(&g.w)
            .and(&mut m.w)
            .and(&mut v.w)
            .for_each(|p, &g, m, v| update(p, g, m, v));
        Zip::from(&mut param.b)
            .and(&g.b)
            .and(&mut m.b)
            .and(&mut v.b)
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
    state.adam_m = m;
    state.adam_v = v;
    state.step = t;
    Ok(())
}

/// Mean softmax cross-entropy over rows, with the gradient wrt logits.
pub fn softmax_cross_entropy(
    logits: ArrayView2<f64>,
    targets: &[u32],
) -> Result<(f64, Array2<f64>)> {
    let (n, c) = logits.dim();
    if targets.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: targets.len(),
        });
    }
    let mut grad = Array2::zeros((n, c));
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let target = targets[i] as usize;
        if target >= c {
            return Err(Error::Config(format!(
                "semantic target {target} out of range for {c} classes"
            )));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &l in row {
            denom += (l - max).exp();
        }
        loss -= ((row[target] - max).exp() / denom).max(1e-300).ln() * inv_n;
        for k in 0..c {
            let p = (row[k] - max).exp() / denom;
            grad[[i, k]] = (p - if k == target { 1.0 } else { 0.0 }) * inv_n;
        }
    }
    Ok((loss, grad))
}

// --- checkpoint I/O -------------------------------------------------------

const CKPT_MAGIC: &[u8; 9] = b"MSEGCKPT1";

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

fn corrupt(offset: u64, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        offset,
        msg: msg.into(),
    }
}

fn write_block<W: Write>(w: &mut W, d: &Dense) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(d.w.nrows() as u32)?;
    w.write_u32::<LittleEndian>(d.w.ncols() as u32)?;
    for v in d.w.iter() {
        w.write_f64::<LittleEndian>(*v)?;
    }
    w.write_u32::<LittleEndian>(d.b.len() as u32)?;
    for v in d.b.iter() {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn read_block<R: Read>(r: &mut CountingReader<R>) -> Result<Dense> {
    let fail = |r: &CountingReader<R>, e: std::io::Error| corrupt(r.offset, e.to_string());
    let rows = r.read_u32::<LittleEndian>().map_err(|e| fail(r, e))? as usize;
    let cols = r.read_u32::<LittleEndian>().map_err(|e| fail(r, e))? as usize;
    if rows == 0 || cols == 0 || rows.saturating_mul(cols) > 64_000_000 {
        return Err(corrupt(r.offset, format!("implausible block shape {rows}x{cols}")));
    }
    let mut w = Array2::zeros((rows, cols));
    for v in w.iter_mut() {
        *v = r.read_f64::<LittleEndian>().map_err(|e| fail(r, e))?;
    }
    let blen = r.read_u32::<LittleEndian>().map_err(|e| fail(r, e))? as usize;
    if blen != cols {
        return Err(corrupt(r.offset, format!("bias length {blen} != {cols}")));
    }
    let mut b = Array1::zeros(blen);
    for v in b.iter_mut() {
        *v = r.read_f64::<LittleEndian>().map_err(|e| fail(r, e))?;
    }
    Ok(Dense { w, b })
}

/// Writes the full model (parameters, moments, step, seed) to `path`.
pub fn checkpoint_save(state: &ModelState, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io_at(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(CKPT_MAGIC)?;
    w.write_u32::<LittleEndian>(1)?;
    let cfg = &state.config;
    w.write_u8(cfg.separate_semantic_trunk as u8)?;
    w.write_u32::<LittleEndian>(cfg.input_width as u32)?;
    w.write_u32::<LittleEndian>(cfg.hidden.len() as u32)?;
    for &h in &cfg.hidden {
        w.write_u32::<LittleEndian>(h as u32)?;
    }
    w.write_u32::<LittleEndian>(cfg.embed_dim as u32)?;
    w.write_u32::<LittleEndian>(cfg.class_count as u32)?;
    w.write_u64::<LittleEndian>(state.step)?;
    w.write_u64::<LittleEndian>(state.seed)?;
    for (_, block) in state.blocks() {
        write_block(&mut w, block)?;
    }
    for block in state.adam_m.iter().chain(state.adam_v.iter()) {
        write_block(&mut w, block)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a checkpoint written by [`checkpoint_save`]. Corrupt or truncated
/// files report the byte offset of the failure.
pub fn checkpoint_load(path: &Path) -> Result<ModelState> {
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut r = CountingReader {
        inner: BufReader::new(file),
        offset: 0,
    };
    let fail = |r: &CountingReader<BufReader<File>>, e: std::io::Error| corrupt(r.offset, e.to_string());

    let mut magic = [0u8; 9];
    r.read_exact(&mut magic).map_err(|e| fail(&r, e))?;
    if &magic != CKPT_MAGIC {
        return Err(corrupt(0, "bad magic"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|e| fail(&r, e))?;
    if version != 1 {
        return Err(corrupt(r.offset, format!("unsupported version {version}")));
    }
    let separate = r.read_u8().map_err(|e| fail(&r, e))? != 0;
    let input_width = r.read_u32::<LittleEndian>().map_err(|e| fail(&r, e))? as usize;
    let hidden_len = r.read_u32::<LittleEndian>().map_err(|e| fail(&r, e))? as usize;
    if hidden_len > 64 {
        return Err(corrupt(r.offset, format!("implausible hidden stack {hidden_len}")));
    }
    let mut hidden = Vec::with_capacity(hidden_len);
    for _ in 0..hidden_len {
        hidden.push(r.read_u32::<LittleEndian>().map_err(|e| fail(&r, e))? as usize);
    }
    let embed_dim = r.read_u32::<LittleEndian>().map_err(|e| fail(&r, e))? as usize;
    let class_count = r.read_u32::<LittleEndian>().map_err(|e| fail(&r, e))? as usize;
    let step = r.read_u64::<LittleEndian>().map_err(|e| fail(&r, e))?;
    let seed = r.read_u64::<LittleEndian>().map_err(|e| fail(&r, e))?;

    let config = NetConfig {
        input_width,
        hidden,
        embed_dim,
        class_count,
        separate_semantic_trunk: separate,
    };
    config.validate().map_err(|e| corrupt(r.offset, e.to_string()))?;

    let mut template = ModelState::init(config.clone(), seed)
        .map_err(|e| corrupt(r.offset, e.to_string()))?;
    let block_count = template.blocks().len();
    let mut params = Vec::with_capacity(block_count);
    for _ in 0..block_count {
        params.push(read_block(&mut r)?);
    }
    let mut adam_m = Vec::with_capacity(block_count);
    for _ in 0..block_count {
        adam_m.push(read_block(&mut r)?);
    }
    let mut adam_v = Vec::with_capacity(block_count);
    for _ in 0..block_count {
        adam_v.push(read_block(&mut r)?);
    }
    // Shape agreement with the declared config.
    for (slot, (expected, got)) in template.blocks().iter().zip(&params).enumerate() {
        if expected.1.w.dim() != got.w.dim() {
            return Err(corrupt(
                r.offset,
                format!("block {slot} shape {:?} != {:?}", got.w.dim(), expected.1.w.dim()),
            ));
        }
    }
    let mut leftover = [0u8; 1];
    if r.read(&mut leftover).map_err(|e| fail(&r, e))? != 0 {
        return Err(corrupt(r.offset, "trailing bytes"));
    }

    for (dst, src) in template.blocks_mut().into_iter().zip(params) {
        *dst = src;
    }
    template.adam_m = adam_m;
    template.adam_v = adam_v;
    template.step = step;
    template.seed = seed;
    Ok(template)
}
