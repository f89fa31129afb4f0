//! Single-task (STL) and multi-task (MTL) essay grading networks.
//!
//! Each head owns a full grading stack: embedding lookup (shared), word
//! convolution, word-level attention pooling to sentence vectors, a
//! recurrent layer over sentences, sentence-level attention pooling to an
//! essay vector, and a sigmoid dense layer. In MTL mode the overall head's
//! dense layer reads its essay vector concatenated with the M predicted
//! trait scores.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{PromptSpec, ScoreRange, OVERALL};
use crate::error::{Error, Result};
use crate::glove::{apply_glove, GloveVectors};
use crate::layers::{
    self, AttentionParams, ConvParams, DenseParams, Dims, DropoutPlacement, LstmParams, Mode,
};
use crate::tensor::{Float, Graph, ParamId, ParamStore, Tensor, Var};
use crate::text::{EncodedEssay, Vocabulary};

pub const VOCAB_SIZE: usize = 4002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recurrent {
    Lstm,
    Bilstm,
}

impl Recurrent {
    pub fn directions(self) -> usize {
        match self {
            Recurrent::Lstm => 1,
            Recurrent::Bilstm => 2,
        }
    }
}

impl std::str::FromStr for Recurrent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(Recurrent::Lstm),
            "bilstm" => Ok(Recurrent::Bilstm),
            other => Err(Error::config(format!("unknown recurrent layer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskMode {
    Stl,
    Mtl,
}

impl std::str::FromStr for TaskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stl" => Ok(TaskMode::Stl),
            "mtl" => Ok(TaskMode::Mtl),
            other => Err(Error::config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: TaskMode,
    pub recurrent: Recurrent,
    /// Head trained in STL mode: `"overall"` or a trait name.
    pub stl_target: String,
    pub prompt: PromptSpec,
    pub dims: Dims,
    pub vocab_size: usize,
    pub dropout: Float,
    pub dropout_placement: DropoutPlacement,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(mode: TaskMode, recurrent: Recurrent, prompt: PromptSpec) -> Self {
        ModelConfig {
            mode,
            recurrent,
            stl_target: OVERALL.to_string(),
            prompt,
            dims: Dims::default(),
            vocab_size: VOCAB_SIZE,
            dropout: 0.5,
            dropout_placement: DropoutPlacement::default(),
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.vocab_size < 2 {
            return Err(Error::config(
                "vocabulary must hold at least the two specials",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.mode == TaskMode::Stl {
            self.prompt.range_of(&self.stl_target)?;
        }
        Ok(())
    }

    /// Head names in output order. MTL: traits in prompt order, then overall.
    pub fn heads(&self) -> Vec<String> {
        match self.mode {
            TaskMode::Stl => vec![self.stl_target.clone()],
            TaskMode::Mtl => {
                let mut h = self.prompt.traits.clone();
                h.push(OVERALL.to_string());
                h
            }
        }
    }

    pub fn head_range(&self, head: &str) -> Result<ScoreRange> {
        self.prompt.range_of(head)
    }

    /// Short label such as `stl-lstm` or `mtl-bilstm`.
    pub fn label(&self) -> String {
        let m = match self.mode {
            TaskMode::Stl => "stl",
            TaskMode::Mtl => "mtl",
        };
        let r = match self.recurrent {
            Recurrent::Lstm => "lstm",
            Recurrent::Bilstm => "bilstm",
        };
        format!("{m}-{r}")
    }

    /// Width of the recurrent output and of the essay vector.
    pub fn essay_dim(&self) -> usize {
        self.dims.hidden * self.recurrent.directions()
    }
}

/// Parameters of one grading stack (everything but the shared embedding and
/// the dense head).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackParams {
    pub conv: ConvParams,
    pub word_attn: AttentionParams,
    pub forward: LstmParams,
    pub backward: Option<LstmParams>,
    pub sent_attn: AttentionParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub name: String,
    pub stack: StackParams,
    pub dense: DenseParams,
}

/// A built network: configuration, parameters, and the head layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub embedding: ParamId,
    pub heads: Vec<HeadParams>,
}

/// FNV-1a, used to derive per-component seeds so that a component's initial
/// weights depend only on (seed, component name).
fn component_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn register_stack(
    store: &mut ParamStore,
    prefix: &str,
    config: &ModelConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StackParams> {
    let d = config.dims;
    let conv = ConvParams::register(
        store,
        &format!("{prefix}.conv"),
        d.embed_dim,
        d.window,
        d.filters,
        rng,
    )?;
    let word_attn =
        AttentionParams::register(store, &format!("{prefix}.word_attn"), d.filters, rng)?;
    let forward = LstmParams::register(
        store,
        &format!("{prefix}.lstm_fwd"),
        d.filters,
        d.hidden,
        rng,
    )?;
    let backward = match config.recurrent {
        Recurrent::Lstm => None,
        Recurrent::Bilstm => Some(LstmParams::register(
            store,
            &format!("{prefix}.lstm_bwd"),
            d.filters,
            d.hidden,
            rng,
        )?),
    };
    let sent_attn = AttentionParams::register(
        store,
        &format!("{prefix}.sent_attn"),
        config.essay_dim(),
        rng,
    )?;
    Ok(StackParams {
        conv,
        word_attn,
        forward,
        backward,
        sent_attn,
    })
}

/// One essay as the network consumes it, optionally padded. Padded tokens
/// and sentences are excluded through the masks.
#[derive(Debug, Clone, Copy)]
pub struct EssayInput<'a> {
    pub sentences: &'a [Vec<usize>],
    pub token_mask: Option<&'a [Vec<bool>]>,
    pub sentence_mask: Option<&'a [bool]>,
}

impl<'a> From<&'a EncodedEssay> for EssayInput<'a> {
    fn from(e: &'a EncodedEssay) -> Self {
        EssayInput {
            sentences: &e.sentences,
            token_mask: None,
            sentence_mask: None,
        }
    }
}

impl EssayInput<'_> {
    fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() || self.sentences.iter().any(Vec::is_empty) {
            return Err(Error::EmptyEssay);
        }
        if let Some(m) = self.sentence_mask {
            if m.len() != self.sentences.len() {
                return Err(Error::arg(
                    "sentence mask length differs from sentence count",
                ));
            }
            if !m.iter().any(|b| *b) {
                return Err(Error::EmptyEssay);
            }
        }
        if let Some(tm) = self.token_mask {
            if tm.len() != self.sentences.len()
                || tm
                    .iter()
                    .zip(self.sentences)
                    .any(|(m, s)| m.len() != s.len())
            {
                return Err(Error::arg("token mask shape differs from sentences"));
            }
        }
        Ok(())
    }
}

/// Trainable parameter counts, total and per component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub total: usize,
    pub breakdown: Vec<(String, usize)>,
}

/// Linear trait-to-holistic aggregation for pipelined scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aggregation {
    pub weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub rounding: Rounding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    #[default]
    HalfAwayFromZero,
    Floor,
    Ceil,
}

impl Aggregation {
    pub fn sum_of(traits: &[&str]) -> Self {
        Aggregation {
            weights: traits.iter().map(|t| (t.to_string(), 1.0)).collect(),
            intercept: 0.0,
            rounding: Rounding::HalfAwayFromZero,
        }
    }
}

/// Holistic score computed from predicted trait scores: a weighted sum plus
/// intercept, rounded, then clamped to the prompt's overall range.
pub fn pipeline_holistic(
    trait_preds: &BTreeMap<String, i64>,
    aggregation: &Aggregation,
    prompt: &PromptSpec,
) -> Result<i64> {
    let mut total = aggregation.intercept;
    for (name, w) in &aggregation.weights {
        if !prompt.has_trait(name) {
            return Err(Error::config(format!(
                "aggregation uses trait {name:?}, not scored in prompt {}",
                prompt.prompt_id
            )));
        }
        let v = trait_preds
            .get(name)
            .ok_or_else(|| Error::arg(format!("no prediction for trait {name}")))?;
        total += w * *v as f64;
    }
    let rounded = match aggregation.rounding {
        Rounding::HalfAwayFromZero => total.round(),
        Rounding::Floor => total.floor(),
        Rounding::Ceil => total.ceil(),
    } as i64;
    Ok(rounded.clamp(prompt.overall_range.min, prompt.overall_range.max))
}

/// Per-head squared errors averaged with uniform weights.
pub fn mtl_loss(g: &mut Graph<'_>, preds: &[Var], golds: &[Float]) -> Result<Var> {
    if preds.len() != golds.len() {
        return Err(Error::arg(format!(
            "{} heads but {} gold scores",
            preds.len(),
            golds.len()
        )));
    }
    layers::mse_loss(g, preds, golds)
}

impl ModelGraph {
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(component_seed(config.seed, "embedding"));
        let embedding = params.add(
            "embedding",
            layers::init_embedding(&mut rng, config.vocab_size, config.dims.embed_dim)?,
        )?;
        let names = config.heads();
        let num_traits = names.len() - 1;
        let mut heads = Vec::with_capacity(names.len());
        for name in names {
            let mut rng = ChaCha8Rng::seed_from_u64(component_seed(config.seed, &name));
            let stack = register_stack(&mut params, &name, &config, &mut rng)?;
            let in_dim = if config.mode == TaskMode::Mtl && name == OVERALL {
                config.essay_dim() + num_traits
            } else {
                config.essay_dim()
            };
            let dense =
                DenseParams::register(&mut params, &format!("{name}.dense"), in_dim, &mut rng)?;
            heads.push(HeadParams { name, stack, dense });
        }
        Ok(ModelGraph {
            config,
            params,
            embedding,
            heads,
        })
    }

    pub fn head_names(&self) -> Vec<String> {
        self.heads.iter().map(|h| h.name.clone()).collect()
    }

    pub fn head(&self, name: &str) -> Option<&HeadParams> {
        self.heads.iter().find(|h| h.name == name)
    }

    /// Copies pretrained vectors into the shared embedding table.
    pub fn apply_glove(&mut self, vocab: &Vocabulary, glove: &GloveVectors) -> Result<usize> {
        apply_glove(self.params.get_mut(self.embedding), vocab, glove)
    }

    fn stack_forward<R: Rng>(
        &self,
        g: &mut Graph<'_>,
        stack: &StackParams,
        input: &EssayInput<'_>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let cfg = &self.config;
        let mut sent_vecs = Vec::with_capacity(input.sentences.len());
        for (s, ids) in input.sentences.iter().enumerate() {
            let mut e = g.embed(self.embedding, ids)?;
            let tmask = input.token_mask.map(|m| m[s].as_slice());
            if let Some(m) = tmask {
                let d = cfg.dims.embed_dim;
                let factors = m
                    .iter()
                    .flat_map(|keep| std::iter::repeat_n(if *keep { 1.0 } else { 0.0 }, d))
                    .collect();
                e = g.mul_const(e, factors)?;
            }
            let c = layers::conv1d(g, &stack.conv, e)?;
            sent_vecs.push(layers::attention_pool(g, &stack.word_attn, c, tmask)?);
        }
        let mut sents = g.stack_rows(&sent_vecs)?;
        if cfg.dropout_placement.before_recurrent {
            sents = layers::dropout(g, sents, cfg.dropout, mode, rng)?;
        }
        let smask = input.sentence_mask;
        let states = match &stack.backward {
            None => layers::lstm_forward(g, &stack.forward, sents, smask, false)?,
            Some(bw) => layers::bilstm_forward(g, &stack.forward, bw, sents, smask)?,
        };
        let mut essay = layers::attention_pool(g, &stack.sent_attn, states, smask)?;
        if cfg.dropout_placement.before_head {
            essay = layers::dropout(g, essay, cfg.dropout, mode, rng)?;
        }
        Ok(essay)
    }

    /// Builds all heads on `g` and returns one `[1]` score node per head, in
    /// [`ModelConfig::heads`] order.
    pub fn forward<R: Rng>(
        &self,
        g: &mut Graph<'_>,
        input: &EssayInput<'_>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Vec<Var>> {
        input.validate()?;
        match self.config.mode {
            TaskMode::Stl => {
                let h = &self.heads[0];
                let essay = self.stack_forward(g, &h.stack, input, mode, rng)?;
                Ok(vec![layers::dense_sigmoid(g, &h.dense, essay)?])
            }
            TaskMode::Mtl => {
                let (overall, traits) = self.heads.split_last().expect("MTL has an overall head");
                let mut outs = Vec::with_capacity(self.heads.len());
                for h in traits {
                    let essay = self.stack_forward(g, &h.stack, input, mode, rng)?;
                    outs.push(layers::dense_sigmoid(g, &h.dense, essay)?);
                }
                let essay = self.stack_forward(g, &overall.stack, input, mode, rng)?;
                let mut parts = vec![essay];
                parts.extend(outs.iter().copied());
                let joined = g.concat(&parts)?;
                outs.push(layers::dense_sigmoid(g, &overall.dense, joined)?);
                Ok(outs)
            }
        }
    }

    /// STL score node.
    pub fn forward_stl<R: Rng>(
        &self,
        g: &mut Graph<'_>,
        input: &EssayInput<'_>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        if self.config.mode != TaskMode::Stl {
            return Err(Error::config("forward_stl on an MTL model"));
        }
        Ok(self.forward(g, input, mode, rng)?[0])
    }

    /// MTL `(overall, traits)` score nodes.
    pub fn forward_mtl<R: Rng>(
        &self,
        g: &mut Graph<'_>,
        input: &EssayInput<'_>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Var, Vec<Var>)> {
        if self.config.mode != TaskMode::Mtl {
            return Err(Error::config("forward_mtl on an STL model"));
        }
        let mut outs = self.forward(g, input, mode, rng)?;
        let overall = outs.pop().expect("overall head");
        Ok((overall, outs))
    }

    /// Eval-mode normalized scores per head.
    pub fn predict(&self, input: &EssayInput<'_>) -> Result<Vec<Float>> {
        let mut g = Graph::new(&self.params);
        // eval mode never draws from the rng
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let outs = self.forward(&mut g, input, Mode::Eval, &mut rng)?;
        Ok(outs.iter().map(|v| g.scalar(*v)).collect())
    }

    pub fn count_params(&self) -> ParamCount {
        let mut groups: Vec<(String, usize)> = Vec::new();
        for (_, name, t) in self.params.iter() {
            if !t.requires_grad() {
                continue;
            }
            let key = match name.match_indices('.').nth(1) {
                Some((i, _)) => &name[..i],
                None => name,
            };
            match groups.iter_mut().find(|(k, _)| k == key) {
                Some((_, n)) => *n += t.numel(),
                None => groups.push((key.to_string(), t.numel())),
            }
        }
        ParamCount {
            total: groups.iter().map(|(_, n)| n).sum(),
            breakdown: groups,
        }
    }

    /// The MTL model with one trait's stack, head, and concatenation slot
    /// removed. All remaining parameters are copied unchanged.
    pub fn without_trait(&self, name: &str) -> Result<ModelGraph> {
        if self.config.mode != TaskMode::Mtl {
            return Err(Error::config("trait removal needs an MTL model"));
        }
        let slot = self
            .config
            .prompt
            .traits
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| Error::config(format!("model has no trait {name:?}")))?;
        let mut config = self.config.clone();
        config.prompt = config.prompt.without_trait(name)?;
        let mut out = ModelGraph::build(config)?;
        let r = self.config.essay_dim();
        for id in out.params.ids().collect::<Vec<_>>() {
            let pname = out.params.name(id).to_string();
            let src = self
                .params
                .by_name(&pname)
                .ok_or_else(|| Error::arg(format!("missing parameter {pname}")))?;
            let dst = out.params.get_mut(id);
            if pname == format!("{OVERALL}.dense.w") {
                let kept: Vec<Float> = src
                    .data()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != r + slot)
                    .map(|(_, v)| *v)
                    .collect();
                dst.data_mut().copy_from_slice(&kept);
            } else {
                dst.data_mut().copy_from_slice(src.data());
            }
            dst.set_requires_grad(src.requires_grad());
        }
        Ok(out)
    }

    /// Overwrites parameter values from another model with the same layout.
    pub fn copy_params_from(&mut self, other: &ParamStore) -> Result<()> {
        for id in self.params.ids().collect::<Vec<_>>() {
            let name = self.params.name(id).to_string();
            let src = other
                .by_name(&name)
                .ok_or_else(|| Error::arg(format!("missing parameter {name}")))?;
            let dst = self.params.get_mut(id);
            if src.shape() != dst.shape() {
                return Err(Error::Shape {
                    op: "copy_params_from",
                    left: dst.shape().to_vec(),
                    right: src.shape().to_vec(),
                });
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}

pub fn build_model(config: ModelConfig) -> Result<ModelGraph> {
    ModelGraph::build(config)
}

pub fn count_params(model: &ModelGraph) -> ParamCount {
    model.count_params()
}

const MAGIC: &[u8; 8] = b"TGCKPT\0\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    vocab: Vocabulary,
    dtype: String,
    params: Vec<(String, Vec<usize>)>,
}

const DTYPE: &str = if cfg!(feature = "f32") { "f32" } else { "f64" };

/// Serializes config, vocabulary, and every parameter array. Values are
/// stored as raw little-endian floats, so a round trip is bit-exact.
pub fn write_checkpoint<W: Write>(
    model: &ModelGraph,
    vocab: &Vocabulary,
    mut out: W,
) -> Result<()> {
    let header = CheckpointHeader {
        config: model.config.clone(),
        vocab: vocab.clone(),
        dtype: DTYPE.to_string(),
        params: model
            .params
            .iter()
            .map(|(_, n, t)| (n.to_string(), t.shape().to_vec()))
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let io = |e| Error::io("<checkpoint>", e);
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&(json.len() as u64).to_le_bytes())
        .map_err(io)?;
    out.write_all(&json).map_err(io)?;
    for (_, _, t) in model.params.iter() {
        let mut buf = Vec::with_capacity(t.numel() * std::mem::size_of::<Float>());
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf).map_err(io)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(ModelGraph, Vocabulary)> {
    let bad = |m: &str| Error::Format {
        what: "checkpoint",
        message: m.to_string(),
    };
    let io = |e| Error::io("<checkpoint>", e);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4).map_err(io)?;
    if u32::from_le_bytes(b4) != FORMAT_VERSION {
        return Err(bad("unsupported version"));
    }
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8).map_err(io)?;
    let mut json = vec![0u8; u64::from_le_bytes(b8) as usize];
    input.read_exact(&mut json).map_err(io)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    if header.dtype != DTYPE {
        return Err(bad(&format!(
            "stored as {}, this build uses {DTYPE}",
            header.dtype
        )));
    }
    let mut model = ModelGraph::build(header.config)?;
    if model.params.len() != header.params.len() {
        return Err(bad(
            "parameter list does not match the configured architecture",
        ));
    }
    for (id, (name, shape)) in model
        .params
        .ids()
        .collect::<Vec<_>>()
        .into_iter()
        .zip(&header.params)
    {
        let t = model.params.get_mut(id);
        if model_name_mismatch(name, shape, t) {
            return Err(bad(&format!("unexpected parameter {name} {shape:?}")));
        }
        let width = std::mem::size_of::<Float>();
        let mut raw = vec![0u8; t.numel() * width];
        input.read_exact(&mut raw).map_err(io)?;
        for (dst, chunk) in t.data_mut().iter_mut().zip(raw.chunks_exact(width)) {
            *dst = Float::from_le_bytes(chunk.try_into().expect("chunk width"));
        }
    }
    Ok((model, header.vocab))
}

fn model_name_mismatch(_name: &str, shape: &[usize], t: &Tensor) -> bool {
    t.shape() != shape
}

pub fn save_checkpoint(path: &Path, model: &ModelGraph, vocab: &Vocabulary) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, vocab, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelGraph, Vocabulary)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(bytes.as_slice())
}

#[cfg(all(test, not(feature = "f32")))]
mod tests {
    use super::*;

    fn small(mode: TaskMode, rec: Recurrent, prompt: u8) -> ModelConfig {
        let mut c = ModelConfig::new(mode, rec, PromptSpec::new(prompt).unwrap());
        c.dims = Dims {
            embed_dim: 4,
            window: 3,
            filters: 5,
            hidden: 3,
        };
        c.vocab_size = 12;
        c
    }

    fn essay() -> EncodedEssay {
        EncodedEssay::new(vec![vec![2, 3, 4], vec![5, 1], vec![7, 8, 9, 10]]).unwrap()
    }

    #[test]
    fn heads_in_order() {
        let m = ModelGraph::build(small(TaskMode::Mtl, Recurrent::Lstm, 8)).unwrap();
        assert_eq!(m.head_names().len(), 7);
        assert_eq!(m.head_names().last().unwrap(), OVERALL);
        let overall = m.head(OVERALL).unwrap();
        assert_eq!(m.params.get(overall.dense.w).numel(), 3 + 6);
    }

    #[test]
    fn stl_target_must_exist() {
        let mut c = small(TaskMode::Stl, Recurrent::Lstm, 3);
        c.stl_target = "voice".into();
        assert!(matches!(ModelGraph::build(c), Err(Error::Config(_))));
    }

    #[test]
    fn outputs_in_unit_interval_and_degenerate_essay() {
        for rec in [Recurrent::Lstm, Recurrent::Bilstm] {
            for mode in [TaskMode::Stl, TaskMode::Mtl] {
                let m = ModelGraph::build(small(mode, rec, 3)).unwrap();
                for e in [essay(), EncodedEssay::new(vec![vec![4]]).unwrap()] {
                    for p in m.predict(&(&e).into()).unwrap() {
                        assert!(p > 0.0 && p < 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn empty_essay_is_rejected() {
        let m = ModelGraph::build(small(TaskMode::Stl, Recurrent::Lstm, 3)).unwrap();
        let sentences: Vec<Vec<usize>> = vec![];
        let input = EssayInput {
            sentences: &sentences,
            token_mask: None,
            sentence_mask: None,
        };
        assert!(matches!(m.predict(&input), Err(Error::EmptyEssay)));
    }

    #[test]
    fn count_breakdown_sums_to_total() {
        let m = ModelGraph::build(small(TaskMode::Mtl, Recurrent::Bilstm, 1)).unwrap();
        let c = m.count_params();
        assert_eq!(c.breakdown.iter().map(|(_, n)| n).sum::<usize>(), c.total);
        assert_eq!(c.total, m.params.num_trainable());
        assert_eq!(c.breakdown[0], ("embedding".to_string(), 12 * 4));
    }

    #[test]
    fn mtl_loss_is_mean_of_head_errors() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let preds: Vec<Var> = [0.2, 0.4, 0.6, 0.8, 1.0]
            .iter()
            .map(|v| g.scalar_constant(*v))
            .collect();
        let l = mtl_loss(&mut g, &preds, &[0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        assert_eq!(g.scalar(l), 0.0);
        let l = mtl_loss(&mut g, &preds, &[0.2, 0.4, 0.6, 0.8, 0.0]).unwrap();
        assert!((g.scalar(l) - 0.2).abs() < 1e-15);
        let golds = [0.1, 0.9, 0.3, 0.3, 0.5];
        let l = mtl_loss(&mut g, &preds, &golds).unwrap();
        let per_head: Vec<f64> = (0..5)
            .map(|i| {
                let one = layers::mse_loss(&mut g, &preds[i..i + 1], &golds[i..i + 1]).unwrap();
                g.scalar(one)
            })
            .collect();
        let mean = per_head.iter().sum::<f64>() / 5.0;
        assert!((g.scalar(l) - mean).abs() < 1e-15);
        assert!(mtl_loss(&mut g, &preds, &golds[..4]).is_err());
    }

    #[test]
    fn pipeline_aggregation() {
        let p7 = PromptSpec::new(7).unwrap();
        let preds: BTreeMap<String, i64> = [
            ("content", 3),
            ("organization", 4),
            ("style", 2),
            ("conventions", 5),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
        let sum = Aggregation::sum_of(&["content", "organization", "style", "conventions"]);
        assert_eq!(pipeline_holistic(&preds, &sum, &p7).unwrap(), 14);

        let mut big = sum.clone();
        big.intercept = 100.0;
        assert_eq!(pipeline_holistic(&preds, &big, &p7).unwrap(), 30);
        big.intercept = -100.0;
        assert_eq!(pipeline_holistic(&preds, &big, &p7).unwrap(), 0);

        let bad = Aggregation::sum_of(&["voice"]);
        assert!(matches!(
            pipeline_holistic(&preds, &bad, &p7),
            Err(Error::Config(_))
        ));

        let p3 = PromptSpec::new(3).unwrap();
        let one: BTreeMap<String, i64> = [("content".to_string(), 2)].into_iter().collect();
        assert_eq!(
            pipeline_holistic(&one, &Aggregation::sum_of(&["content"]), &p3).unwrap(),
            2
        );
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = ModelGraph::build(small(TaskMode::Mtl, Recurrent::Bilstm, 3)).unwrap();
        let vocab = Vocabulary::from_tokens(["a", "b", "c"]);
        let mut buf = Vec::new();
        write_checkpoint(&m, &vocab, &mut buf).unwrap();
        let (back, v) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(v, vocab);
        assert_eq!(back.config, m.config);
        for ((_, _, a), (_, _, b)) in m.params.iter().zip(back.params.iter()) {
            let ab: Vec<u64> = a.data().iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u64> = b.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        let mut again = Vec::new();
        write_checkpoint(&back, &v, &mut again).unwrap();
        assert_eq!(buf, again);
        buf[0] = b'X';
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }

    #[test]
    fn seeded_builds_are_identical() {
        let a = ModelGraph::build(small(TaskMode::Mtl, Recurrent::Lstm, 1)).unwrap();
        let b = ModelGraph::build(small(TaskMode::Mtl, Recurrent::Lstm, 1)).unwrap();
        assert_eq!(a.params, b.params);
        let mut c = small(TaskMode::Mtl, Recurrent::Lstm, 1);
        c.seed = 43;
        assert_ne!(a.params, ModelGraph::build(c).unwrap().params);
    }

    #[test]
    fn trait_removal_drops_stack_and_slot() {
        let m = ModelGraph::build(small(TaskMode::Mtl, Recurrent::Lstm, 3)).unwrap();
        let a = m.without_trait("language").unwrap();
        let content_w = a.params.by_name("content.dense.w").unwrap();
        assert_eq!(content_w, m.params.by_name("content.dense.w").unwrap());
        assert!(a.params.by_name("language.conv.kernel").is_none());
        assert!(m.without_trait("voice").is_err());
    }
}
