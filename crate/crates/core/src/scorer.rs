//! Path encoding, path scores and candidate probabilities.
//!
//! Every path gets two scores. The context score composes implicit relation
//! vectors read off entity boundary states; the passage score composes
//! question-attended summaries of the passages the path visits and matches
//! them against the candidate encoding. `z = z_ctx + z_psg`, normalised over
//! all paths of the instance.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autograd::{log_sum_exp, softmax, Graph, ParamId, ParamStore, Tensor, Var};
use crate::embedding::{EmbeddingTable, DEFAULT_DIM};
use crate::encoders::{
    aggregate_question, attention_matrix, attentive_pool, boundary_vector, embed_tokens, encode_sequence, init_weight,
    question_weighted_passage, BiLstm, GruCell, LstmCell,
};
use crate::error::{Error, Result};
use crate::instance::QuestionInstance;
use crate::paths::{key_occurrences, Path};
use crate::rng::Rng;
use crate::text::{MentionSpan, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    #[default]
    Ffl,
    /// FFL composition with one relation extractor for every hop.
    FflShared,
    Gru,
    Lstm,
}

impl Composition {
    pub const ALL: [Composition; 4] = [Self::Ffl, Self::FflShared, Self::Gru, Self::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ffl => "ffl",
            Self::FflShared => "ffl_shared",
            Self::Gru => "gru",
            Self::Lstm => "lstm",
        }
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, Self::Gru | Self::Lstm)
    }
}

impl core::str::FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown composition `{s}` (ffl, ffl_shared, gru, lstm)")))
    }
}

/// Which score components enter `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Full,
    CtxOnly,
    PsgOnly,
}

impl ScoreMode {
    pub fn uses_context(self) -> bool {
        self != Self::PsgOnly
    }

    pub fn uses_passage(self) -> bool {
        self != Self::CtxOnly
    }
}

impl core::str::FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "ctx_only" => Ok(Self::CtxOnly),
            "psg_only" => Ok(Self::PsgOnly),
            _ => Err(Error::Config(format!("unknown mode `{s}` (full, ctx_only, psg_only)"))),
        }
    }
}

/// How path scores become candidate probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// One softmax over every path of the instance.
    #[default]
    Joint,
    /// Candidate logit `ln Σ_j exp(z_kj) − ln n_k`, softmax over candidates.
    PerCandidate,
}

impl core::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Self::Joint),
            "per_candidate" => Ok(Self::PerCandidate),
            _ => Err(Error::Config(format!("unknown normalization `{s}` (joint, per_candidate)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    /// Units per LSTM direction; contextual states have twice this width.
    pub hidden_per_direction: usize,
    pub composition: Composition,
    pub mode: ScoreMode,
    pub normalization: Normalization,
    pub share_candidate_encoder: bool,
    pub dropout: f64,
    pub dropout_encoder_inputs: bool,
    pub dropout_ffl_inputs: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: DEFAULT_DIM,
            hidden_per_direction: 50,
            composition: Composition::Ffl,
            mode: ScoreMode::Full,
            normalization: Normalization::Joint,
            share_candidate_encoder: true,
            dropout: 0.25,
            dropout_encoder_inputs: true,
            dropout_ffl_inputs: true,
        }
    }
}

impl ModelConfig {
    /// Width `H` of contextual states.
    pub fn hidden(&self) -> usize {
        2 * self.hidden_per_direction
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden_per_direction == 0 {
            return Err(Error::Config("embedding_dim and hidden_per_direction must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// `tanh(a W_a + b W_b + bias)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ffl {
    pub w_a: ParamId,
    pub w_b: ParamId,
    pub bias: ParamId,
}

impl Ffl {
    pub fn register(store: &mut ParamStore, prefix: &str, a: usize, b: usize, out: usize, rng: &mut Rng) -> Self {
        Self {
            w_a: store.add(format!("{prefix}.w_a"), init_weight(a, out, a, rng)),
            w_b: store.add(format!("{prefix}.w_b"), init_weight(b, out, b, rng)),
            bias: store.add(format!("{prefix}.b"), Tensor::zeros(1, out)),
        }
    }
}

/// `tanh(a W_a + b W_b + bias)` on row vectors.
pub fn ffl(g: &mut Graph, store: &ParamStore, layer: &Ffl, a: Var, b: Var) -> Result<Var> {
    let (w_a, w_b, bias) = (g.param(store, layer.w_a), g.param(store, layer.w_b), g.param(store, layer.bias));
    let aw = g.matmul(a, w_a)?;
    let bw = g.matmul(b, w_b)?;
    let s = g.add(aw, bw)?;
    let s = g.add_row(s, bias)?;
    Ok(g.tanh(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composer {
    Ffl(Ffl),
    Gru(GruCell),
    Lstm(LstmCell),
}

impl Composer {
    fn register(
        store: &mut ParamStore,
        prefix: &str,
        method: Composition,
        input: usize,
        out: usize,
        rng: &mut Rng,
    ) -> Self {
        match method {
            Composition::Ffl | Composition::FflShared => Self::Ffl(Ffl::register(store, prefix, input, input, out, rng)),
            Composition::Gru => Self::Gru(GruCell::register(store, prefix, input, out, rng)),
            Composition::Lstm => Self::Lstm(LstmCell::register(store, prefix, input, out, rng)),
        }
    }
}

/// Parameter handles of the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelParams {
    pub encoder: BiLstm,
    pub candidate_encoder: BiLstm,
    pub pool_passage: ParamId,
    pub pool_candidate: ParamId,
    pub w_q: ParamId,
    pub null_boundary: ParamId,
    pub null_passage: ParamId,
    /// Relation extractor for the first hop (and middle hops of longer paths).
    pub rel_head: Ffl,
    /// Relation extractor for the hop ending at the candidate. Equal to
    /// `rel_head` under [`Composition::FflShared`].
    pub rel_tail: Ffl,
    pub comp_ctx: Composer,
    pub comp_psg: Composer,
    pub score_ctx: Ffl,
    pub w_ctx: ParamId,
}

impl ModelParams {
    fn register(store: &mut ParamStore, config: &ModelConfig, rng: &mut Rng) -> Self {
        let (d, h) = (config.embedding_dim, config.hidden());
        let encoder = BiLstm::register(store, "encoder", d, config.hidden_per_direction, rng);
        let candidate_encoder = if config.share_candidate_encoder {
            encoder
        } else {
            BiLstm::register(store, "encoder.candidate", d, config.hidden_per_direction, rng)
        };
        let pool_passage = store.add("pool.passage", init_weight(1, 2 * h, 2 * h, rng));
        let pool_candidate = store.add("pool.candidate", init_weight(1, h, h, rng));
        let w_q = store.add("question.w_q", init_weight(2 * h, h, 2 * h, rng));
        let null_boundary = store.add("null.boundary", init_weight(1, 2 * h, 2 * h, rng));
        let null_passage = store.add("null.passage", init_weight(1, 2 * h, 2 * h, rng));
        let rel_head = Ffl::register(store, "rel.head", 2 * h, 2 * h, h, rng);
        let rel_tail = if config.composition == Composition::FflShared {
            rel_head
        } else {
            Ffl::register(store, "rel.tail", 2 * h, 2 * h, h, rng)
        };
        let comp_ctx = Composer::register(store, "comp.ctx", config.composition, h, h, rng);
        let comp_psg = Composer::register(store, "comp.psg", config.composition, 2 * h, h, rng);
        let score_ctx = Ffl::register(store, "score.ctx_ffl", h, h, h, rng);
        let w_ctx = store.add("score.w_ctx", init_weight(1, h, h, rng));
        Self {
            encoder,
            candidate_encoder,
            pool_passage,
            pool_candidate,
            w_q,
            null_boundary,
            null_passage,
            rel_head,
            rel_tail,
            comp_ctx,
            comp_psg,
            score_ctx,
            w_ctx,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub params: ModelParams,
}

impl Model {
    /// Freshly initialised model; the same `(config, seed)` always yields the
    /// same weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = Rng::derived(seed, "init");
        let params = ModelParams::register(&mut store, &config, &mut rng);
        Ok(Self { config, store, params })
    }

    /// Overwrites every parameter. `entries` must name each parameter of the
    /// model exactly once, with matching shapes.
    pub fn set_params(&mut self, entries: Vec<(String, Tensor)>) -> Result<()> {
        if entries.len() != self.store.len() {
            let known: Vec<&str> = self.store.iter().map(|(_, n, _)| n).collect();
            let missing = known
                .into_iter()
                .find(|n| !entries.iter().any(|(e, _)| e == n))
                .map(String::from)
                .unwrap_or_else(|| String::from("(extra entries)"));
            return Err(Error::UnknownParam(missing));
        }
        for (name, value) in entries {
            self.store.set(&name, value)?;
        }
        Ok(())
    }
}

/// Differentiable scores of one path.
#[derive(Debug, Clone, Copy)]
pub struct PathVars {
    pub z: Var,
    pub z_ctx: Option<Var>,
    pub z_psg: Option<Var>,
}

/// Graph outputs for one instance.
#[derive(Debug, Clone)]
pub struct InstanceVars {
    pub paths: Vec<PathVars>,
    /// `1 × P` path logits, in path order.
    pub logits: Var,
}

struct Forward<'a> {
    g: &'a mut Graph,
    model: &'a Model,
    table: &'a EmbeddingTable,
    instance: &'a QuestionInstance,
    rng: Option<&'a mut Rng>,
    encoded: BTreeMap<usize, Var>,
    summaries: BTreeMap<usize, Var>,
    boundaries: BTreeMap<(usize, String), Var>,
    candidates: BTreeMap<usize, Var>,
    question: Option<Var>,
    question_summary: Option<Var>,
}

impl<'a> Forward<'a> {
    fn store(&self) -> &'a ParamStore {
        &self.model.store
    }

    fn param(&mut self, id: ParamId) -> Var {
        self.g.param(&self.model.store, id)
    }

    fn dropout(&mut self, v: Var, enabled: bool) -> Result<Var> {
        match self.rng.as_deref_mut() {
            Some(rng) if enabled => self.g.dropout(v, self.model.config.dropout, rng),
            _ => Ok(v),
        }
    }

    fn ffl(&mut self, layer: &Ffl, a: Var, b: Var) -> Result<Var> {
        let flag = self.model.config.dropout_ffl_inputs;
        let a = self.dropout(a, flag)?;
        let b = self.dropout(b, flag)?;
        ffl(self.g, self.store(), layer, a, b)
    }

    fn encode(&mut self, tokens: &[Token], encoder: &BiLstm) -> Result<Var> {
        let x = embed_tokens(self.table, tokens)?;
        let x = self.g.constant(x);
        let x = self.dropout(x, self.model.config.dropout_encoder_inputs)?;
        encode_sequence(self.g, self.store(), encoder, x)
    }

    fn question(&mut self) -> Result<Var> {
        if let Some(q) = self.question {
            return Ok(q);
        }
        let encoder = self.model.params.encoder;
        let q = self.encode(&self.instance.query_tokens, &encoder)?;
        self.question = Some(q);
        Ok(q)
    }

    /// `q̃`.
    fn question_summary(&mut self) -> Result<Var> {
        if let Some(q) = self.question_summary {
            return Ok(q);
        }
        let q = self.question()?;
        let w_q = self.param(self.model.params.w_q);
        let out = aggregate_question(self.g, q, w_q)?;
        self.question_summary = Some(out);
        Ok(out)
    }

    fn passage(&mut self, pid: usize) -> Result<Var> {
        if let Some(&s) = self.encoded.get(&pid) {
            return Ok(s);
        }
        let encoder = self.model.params.encoder;
        let s = self.encode(&self.instance.passages[pid].tokens, &encoder)?;
        self.encoded.insert(pid, s);
        Ok(s)
    }

    /// `s̃_p`: the pooled question-aware passage states (1 × 2H).
    fn passage_summary(&mut self, pid: usize) -> Result<Var> {
        if let Some(&s) = self.summaries.get(&pid) {
            return Ok(s);
        }
        let s = self.passage(pid)?;
        let q = self.question()?;
        let attn = attention_matrix(self.g, s, q)?;
        let w = question_weighted_passage(self.g, &attn, q, s)?;
        let sq = self.g.concat_cols(&[w.s_q1, w.s_q2])?;
        let pool = self.param(self.model.params.pool_passage);
        let out = attentive_pool(self.g, sq, pool)?;
        self.summaries.insert(pid, out);
        Ok(out)
    }

    /// `c̃_k` (1 × H).
    fn candidate(&mut self, k: usize) -> Result<Var> {
        if let Some(&c) = self.candidates.get(&k) {
            return Ok(c);
        }
        let encoder = self.model.params.candidate_encoder;
        let c = self.encode(&self.instance.candidates[k], &encoder)?;
        let pool = self.param(self.model.params.pool_candidate);
        let out = attentive_pool(self.g, c, pool)?;
        self.candidates.insert(k, out);
        Ok(out)
    }

    /// Mean boundary vector over every occurrence of the mention's entity in
    /// its passage.
    fn boundary(&mut self, pid: usize, mention: &MentionSpan) -> Result<Var> {
        let key = (pid, mention.entity_key.clone());
        if let Some(&v) = self.boundaries.get(&key) {
            return Ok(v);
        }
        let mut spans: Vec<(usize, usize)> = key_occurrences(&self.instance.passages[pid], &mention.entity_key)
            .iter()
            .map(|m| (m.start, m.end))
            .collect();
        if spans.is_empty() {
            spans.push((mention.start, mention.end));
        }
        let s = self.passage(pid)?;
        let v = boundary_vector(self.g, s, &spans)?;
        self.boundaries.insert(key, v);
        Ok(v)
    }

    fn compose(&mut self, composer: &Composer, inputs: &[Var], null_second: Option<ParamId>) -> Result<Var> {
        match composer {
            Composer::Ffl(layer) => {
                let (a, b) = match (inputs, null_second) {
                    ([a, b], _) => (*a, *b),
                    ([a], Some(null)) => (*a, self.param(null)),
                    _ => {
                        return Err(Error::CompositionArity {
                            method: self.model.config.composition.name(),
                            got: inputs.len(),
                        })
                    }
                };
                self.ffl(layer, a, b)
            }
            Composer::Gru(cell) => cell.fold(self.g, self.store(), inputs),
            Composer::Lstm(cell) => cell.fold(self.g, self.store(), inputs),
        }
    }

    /// Implicit relations along the path. A single-passage path goes through
    /// the learned null boundary, so it also yields two relations.
    fn relations(&mut self, path: &Path) -> Result<Vec<Var>> {
        let p = &self.model.params;
        let (rel_head, rel_tail) = (p.rel_head, p.rel_tail);
        let pids = &path.passage_ids;
        let head = self.boundary(pids[0], &path.head)?;
        let last = pids[pids.len() - 1];
        let tail = self.boundary(last, &path.tail)?;
        if path.links.is_empty() {
            let null = self.param(p.null_boundary);
            let r1 = self.ffl(&rel_head, head, null)?;
            let r2 = self.ffl(&rel_tail, null, tail)?;
            return Ok(alloc::vec![r1, r2]);
        }
        let mut relations = Vec::with_capacity(path.links.len() + 1);
        let mut from = head;
        for (i, link) in path.links.iter().enumerate() {
            let to = self.boundary(pids[i], &link.source)?;
            relations.push(self.ffl(&rel_head, from, to)?);
            from = self.boundary(pids[i + 1], &link.target)?;
        }
        relations.push(self.ffl(&rel_tail, from, tail)?);
        Ok(relations)
    }

    fn context_score(&mut self, path: &Path) -> Result<Var> {
        let relations = self.relations(path)?;
        let comp = self.model.params.comp_ctx;
        let x_ctx = self.compose(&comp, &relations, None)?;
        let q = self.question_summary()?;
        let layer = self.model.params.score_ctx;
        let y = self.ffl(&layer, x_ctx, q)?;
        let w = self.param(self.model.params.w_ctx);
        self.g.dot(y, w)
    }

    fn passage_score(&mut self, path: &Path) -> Result<Var> {
        let summaries = path
            .passage_ids
            .iter()
            .map(|&pid| self.passage_summary(pid))
            .collect::<Result<Vec<_>>>()?;
        let comp = self.model.params.comp_psg;
        let x_psg = self.compose(&comp, &summaries, Some(self.model.params.null_passage))?;
        let c = self.candidate(path.candidate_index)?;
        self.g.dot(c, x_psg)
    }
}

/// Adds the scores of every path of `instance` to `g`. With `dropout_rng`
/// the model runs in training mode.
pub fn forward_instance(
    g: &mut Graph,
    model: &Model,
    table: &EmbeddingTable,
    instance: &QuestionInstance,
    paths: &[Path],
    dropout_rng: Option<&mut Rng>,
) -> Result<InstanceVars> {
    if paths.is_empty() {
        return Err(Error::Config(format!("instance {} has no paths to score", instance.id)));
    }
    if table.dim() != model.config.embedding_dim {
        return Err(Error::Config(format!(
            "embedding table has {} dims, model expects {}",
            table.dim(),
            model.config.embedding_dim
        )));
    }
    let mut f = Forward {
        g,
        model,
        table,
        instance,
        rng: dropout_rng,
        encoded: BTreeMap::new(),
        summaries: BTreeMap::new(),
        boundaries: BTreeMap::new(),
        candidates: BTreeMap::new(),
        question: None,
        question_summary: None,
    };
    let mode = model.config.mode;
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let z_ctx = if mode.uses_context() { Some(f.context_score(path)?) } else { None };
        let z_psg = if mode.uses_passage() { Some(f.passage_score(path)?) } else { None };
        let z = match (z_ctx, z_psg) {
            (Some(a), Some(b)) => f.g.add(a, b)?,
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => unreachable!("every mode scores something"),
        };
        out.push(PathVars { z, z_ctx, z_psg });
    }
    let zs: Vec<Var> = out.iter().map(|p| p.z).collect();
    let logits = f.g.concat_cols(&zs)?;
    Ok(InstanceVars { paths: out, logits })
}

/// Cross-entropy of the answer, `None` when no path reaches it.
pub fn instance_loss(
    g: &mut Graph,
    vars: &InstanceVars,
    paths: &[Path],
    answer: usize,
    normalization: Normalization,
) -> Result<Option<Var>> {
    let answer_z: Vec<Var> = vars
        .paths
        .iter()
        .zip(paths)
        .filter(|(_, p)| p.candidate_index == answer)
        .map(|(v, _)| v.z)
        .collect();
    if answer_z.is_empty() {
        return Ok(None);
    }
    match normalization {
        Normalization::Joint => {
            let all = g.log_sum_exp(vars.logits);
            let ans = g.concat_cols(&answer_z)?;
            let ans = g.log_sum_exp(ans);
            Ok(Some(g.sub(all, ans)?))
        }
        Normalization::PerCandidate => {
            let mut by_candidate: BTreeMap<usize, Vec<Var>> = BTreeMap::new();
            for (v, p) in vars.paths.iter().zip(paths) {
                by_candidate.entry(p.candidate_index).or_default().push(v.z);
            }
            let mut logits = Vec::with_capacity(by_candidate.len());
            let mut answer_logit = None;
            for (k, zs) in by_candidate {
                let n = zs.len() as f64;
                let cat = g.concat_cols(&zs)?;
                let lse = g.log_sum_exp(cat);
                let offset = g.constant(Tensor::scalar(libm::log(n)));
                let logit = g.sub(lse, offset)?;
                if k == answer {
                    answer_logit = Some(logit);
                }
                logits.push(logit);
            }
            let cat = g.concat_cols(&logits)?;
            let all = g.log_sum_exp(cat);
            let ans = answer_logit.expect("answer has paths");
            Ok(Some(g.sub(all, ans)?))
        }
    }
}

/// Normalised path scores and candidate probabilities from raw path logits.
/// Candidates without paths get probability 0.
pub fn normalize_scores(
    z: &[f64],
    candidate_of: &[usize],
    num_candidates: usize,
    normalization: Normalization,
) -> (Vec<f64>, Vec<f64>) {
    let mut probs = alloc::vec![0.0; num_candidates];
    match normalization {
        Normalization::Joint => {
            let scores = softmax(z);
            for (s, &k) in scores.iter().zip(candidate_of) {
                probs[k] += s;
            }
            (scores, probs)
        }
        Normalization::PerCandidate => {
            let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); num_candidates];
            for (i, &k) in candidate_of.iter().enumerate() {
                members[k].push(i);
            }
            let present: Vec<usize> = (0..num_candidates).filter(|&k| !members[k].is_empty()).collect();
            let logits: Vec<f64> = present
                .iter()
                .map(|&k| {
                    let zs: Vec<f64> = members[k].iter().map(|&i| z[i]).collect();
                    log_sum_exp(&zs) - libm::log(zs.len() as f64)
                })
                .collect();
            let cand = softmax(&logits);
            let mut scores = alloc::vec![0.0; z.len()];
            for (&k, &pk) in present.iter().zip(&cand) {
                probs[k] = pk;
                let zs: Vec<f64> = members[k].iter().map(|&i| z[i]).collect();
                for (&i, w) in members[k].iter().zip(softmax(&zs)) {
                    scores[i] = w * pk;
                }
            }
            (scores, probs)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathScore {
    pub path_index: usize,
    pub candidate_index: usize,
    pub z_ctx: f64,
    pub z_psg: f64,
    pub z: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScores {
    pub paths: Vec<PathScore>,
    /// All zero when the instance has no path.
    pub candidate_probs: Vec<f64>,
}

impl InstanceScores {
    pub fn answerable(&self) -> bool {
        !self.paths.is_empty()
    }

    /// Highest-probability candidate, lowest index on ties.
    pub fn prediction(&self) -> Option<usize> {
        if !self.answerable() {
            return None;
        }
        let mut best = 0;
        for (k, &p) in self.candidate_probs.iter().enumerate() {
            if p > self.candidate_probs[best] {
                best = k;
            }
        }
        Some(best)
    }
}

/// Inference-mode scores for one instance.
pub fn score_instance(
    model: &Model,
    table: &EmbeddingTable,
    instance: &QuestionInstance,
    paths: &[Path],
) -> Result<InstanceScores> {
    let n = instance.num_candidates();
    if paths.is_empty() {
        return Ok(InstanceScores {
            paths: Vec::new(),
            candidate_probs: alloc::vec![0.0; n],
        });
    }
    let mut g = Graph::inference();
    let vars = forward_instance(&mut g, model, table, instance, paths, None)?;
    let value = |v: Option<Var>| v.map_or(0.0, |v| g.scalar(v));
    let z: Vec<f64> = vars.paths.iter().map(|p| g.scalar(p.z)).collect();
    let cands: Vec<usize> = paths.iter().map(|p| p.candidate_index).collect();
    let (scores, candidate_probs) = normalize_scores(&z, &cands, n, model.config.normalization);
    let paths = vars
        .paths
        .iter()
        .enumerate()
        .map(|(i, p)| PathScore {
            path_index: i,
            candidate_index: cands[i],
            z_ctx: value(p.z_ctx),
            z_psg: value(p.z_psg),
            z: z[i],
            score: scores[i],
        })
        .collect();
    Ok(InstanceScores { paths, candidate_probs })
}
