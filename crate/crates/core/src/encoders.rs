//! Recurrent encoders, passage/question attention and attentive pooling.
//!
//! All functions add nodes to a caller-owned [`Graph`]. Sequences are
//! `T × d` tensors whose row `t` is token `t`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autograd::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::text::Token;

/// Uniform `±sqrt(1 / fan_in)` initialisation.
pub fn init_weight(rows: usize, cols: usize, fan_in: usize, rng: &mut Rng) -> Tensor {
    Tensor::uniform(rows, cols, libm::sqrt(1.0 / fan_in.max(1) as f64), rng)
}

/// Stacks the embedding rows of `tokens` into a `T × dim` tensor.
pub fn embed_tokens(table: &EmbeddingTable, tokens: &[Token]) -> Result<Tensor> {
    if tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    let dim = table.dim();
    let mut data = alloc::vec![0.0; tokens.len() * dim];
    for (t, chunk) in tokens.iter().zip(data.chunks_mut(dim)) {
        table.write_vector(&t.lowercase, chunk);
    }
    Tensor::from_vec(tokens.len(), dim, data)
}

/// LSTM cell with packed gates in the order input, forget, output, cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn register(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            w_x: store.add(format!("{prefix}.w_x"), init_weight(input, 4 * hidden, input, rng)),
            w_h: store.add(format!("{prefix}.w_h"), init_weight(hidden, 4 * hidden, hidden, rng)),
            b: store.add(format!("{prefix}.b"), Tensor::zeros(1, 4 * hidden)),
            input,
            hidden,
        }
    }

    /// One step given the precomputed input projection `x W_x + b` (1 × 4h).
    fn step(&self, g: &mut Graph, store: &ParamStore, xw: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let n = self.hidden;
        let w_h = g.param(store, self.w_h);
        let hw = g.matmul(h, w_h)?;
        let gates = g.add(xw, hw)?;
        let i = g.slice_cols(gates, 0, n)?;
        let f = g.slice_cols(gates, n, n)?;
        let o = g.slice_cols(gates, 2 * n, n)?;
        let u = g.slice_cols(gates, 3 * n, n)?;
        let (i, f, o, u) = (g.sigmoid(i), g.sigmoid(f), g.sigmoid(o), g.tanh(u));
        let keep = g.mul(f, c)?;
        let write = g.mul(i, u)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok((h, c))
    }

    /// Runs over the rows of `xs` (T × input) from a zero state and returns
    /// the hidden state after each row, in input order. With `reverse` the
    /// rows are consumed last to first, but the result is still indexed by
    /// input row.
    pub fn run(&self, g: &mut Graph, store: &ParamStore, xs: Var, reverse: bool) -> Result<Vec<Var>> {
        let t = g.shape(xs)[0];
        if t == 0 {
            return Err(Error::EmptySequence);
        }
        let w_x = g.param(store, self.w_x);
        let b = g.param(store, self.b);
        let proj = g.matmul(xs, w_x)?;
        let proj = g.add_row(proj, b)?;
        let mut h = g.constant(Tensor::zeros(1, self.hidden));
        let mut c = h;
        let mut states = alloc::vec![h; t];
        for k in 0..t {
            let row = if reverse { t - 1 - k } else { k };
            let xw = g.slice_row(proj, row)?;
            (h, c) = self.step(g, store, xw, h, c)?;
            states[row] = h;
        }
        Ok(states)
    }

    /// Final hidden state after consuming `inputs` (each 1 × input) in order.
    pub fn fold(&self, g: &mut Graph, store: &ParamStore, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::EmptySequence);
        }
        let xs = g.concat_rows(inputs)?;
        let states = self.run(g, store, xs, false)?;
        Ok(states[states.len() - 1])
    }
}

/// GRU cell with packed gates in the order update, reset, candidate. The
/// reset gate multiplies the projected previous state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn register(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            w_x: store.add(format!("{prefix}.w_x"), init_weight(input, 3 * hidden, input, rng)),
            w_h: store.add(format!("{prefix}.w_h"), init_weight(hidden, 3 * hidden, hidden, rng)),
            b: store.add(format!("{prefix}.b"), Tensor::zeros(1, 3 * hidden)),
            input,
            hidden,
        }
    }

    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var) -> Result<Var> {
        let n = self.hidden;
        let (w_x, w_h, b) = (g.param(store, self.w_x), g.param(store, self.w_h), g.param(store, self.b));
        let xw = g.matmul(x, w_x)?;
        let xw = g.add_row(xw, b)?;
        let hw = g.matmul(h, w_h)?;
        let xz = g.slice_cols(xw, 0, n)?;
        let hz = g.slice_cols(hw, 0, n)?;
        let xr = g.slice_cols(xw, n, n)?;
        let hr = g.slice_cols(hw, n, n)?;
        let xn = g.slice_cols(xw, 2 * n, n)?;
        let hn = g.slice_cols(hw, 2 * n, n)?;
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z);
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);
        let rh = g.mul(r, hn)?;
        let cand = g.add(xn, rh)?;
        let cand = g.tanh(cand);
        // h' = (1 - z) * cand + z * h = cand + z * (h - cand)
        let diff = g.sub(h, cand)?;
        let gated = g.mul(z, diff)?;
        g.add(cand, gated)
    }

    pub fn fold(&self, g: &mut Graph, store: &ParamStore, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut h = g.constant(Tensor::zeros(1, self.hidden));
        for &x in inputs {
            h = self.step(g, store, x, h)?;
        }
        Ok(h)
    }
}

/// Bidirectional LSTM. Output width is twice the per-direction size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

impl BiLstm {
    pub fn register(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            forward: LstmCell::register(store, &format!("{prefix}.fwd"), input, hidden, rng),
            backward: LstmCell::register(store, &format!("{prefix}.bwd"), input, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden + self.backward.hidden
    }
}

/// Contextual states of a `T × input` sequence, as `T × 2h`: row `t` is the
/// forward state at `t` followed by the backward state at `t`.
pub fn encode_sequence(g: &mut Graph, store: &ParamStore, encoder: &BiLstm, inputs: Var) -> Result<Var> {
    let fwd = encoder.forward.run(g, store, inputs, false)?;
    let bwd = encoder.backward.run(g, store, inputs, true)?;
    let f = g.concat_rows(&fwd)?;
    let b = g.concat_rows(&bwd)?;
    g.concat_cols(&[f, b])
}

/// Mean over spans of `[row(start) | row(end)]`, as `1 × 2H`. Spans are
/// inclusive `(start, end)` token ranges; a span listed twice is one mention
/// and counts once.
pub fn boundary_vector(g: &mut Graph, enc: Var, spans: &[(usize, usize)]) -> Result<Var> {
    let len = g.shape(enc)[0];
    if spans.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut distinct: Vec<(usize, usize)> = Vec::with_capacity(spans.len());
    for s in spans {
        if !distinct.contains(s) {
            distinct.push(*s);
        }
    }
    let mut rows = Vec::with_capacity(distinct.len());
    for &(start, end) in &distinct {
        if start > end || end >= len {
            return Err(Error::SpanOutOfBounds { start, end, len });
        }
        let a = g.slice_row(enc, start)?;
        let b = g.slice_row(enc, end)?;
        rows.push(g.concat_cols(&[a, b])?);
    }
    if rows.len() == 1 {
        return Ok(rows[0]);
    }
    let stacked = g.concat_rows(&rows)?;
    Ok(g.mean_rows(stacked))
}

/// Passage-over-question attention.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    /// `T × U`, each row a distribution over question tokens.
    pub rows: Var,
    /// `T × U`, each column a distribution over passage tokens.
    pub cols: Var,
}

/// Scaled dot-product scores `S Qᵀ / sqrt(H)`, normalised both ways.
pub fn attention_matrix(g: &mut Graph, s: Var, q: Var) -> Result<Attention> {
    let (ss, qs) = (g.shape(s), g.shape(q));
    if ss[1] != qs[1] {
        return Err(Error::Shape {
            op: "attention_matrix",
            lhs: ss,
            rhs: qs,
        });
    }
    let qt = g.transpose(q);
    let raw = g.matmul(s, qt)?;
    let raw = g.scale(raw, 1.0 / libm::sqrt(ss[1] as f64));
    Ok(Attention {
        rows: g.row_softmax(raw),
        cols: g.col_softmax(raw),
    })
}

/// The three question-aware products: `A Q` (T × H), the passage-aware
/// question `Q_p` (U × H) and `A Q_p` (T × H).
#[derive(Debug, Clone, Copy)]
pub struct QuestionWeighted {
    pub s_q1: Var,
    pub q_p: Var,
    pub s_q2: Var,
}

pub fn question_weighted_passage(g: &mut Graph, attn: &Attention, q: Var, s: Var) -> Result<QuestionWeighted> {
    let s_q1 = g.matmul(attn.rows, q)?;
    let ct = g.transpose(attn.cols);
    let q_p = g.matmul(ct, s)?;
    let s_q2 = g.matmul(attn.rows, q_p)?;
    Ok(QuestionWeighted { s_q1, q_p, s_q2 })
}

/// `softmax(X wᵀ)ᵀ X`: a convex combination of the rows of `x` (n × D) with
/// weights from the `1 × D` vector `w`.
pub fn attentive_pool(g: &mut Graph, x: Var, w: Var) -> Result<Var> {
    let scores = g.dot(w, x)?; // 1 × n
    let weights = g.row_softmax(scores);
    g.matmul(weights, x)
}

/// `[q_0 | q_{U-1}] W_q`.
pub fn aggregate_question(g: &mut Graph, q: Var, w_q: Var) -> Result<Var> {
    let u = g.shape(q)[0];
    if u == 0 {
        return Err(Error::EmptySequence);
    }
    let first = g.slice_row(q, 0)?;
    let last = g.slice_row(q, u - 1)?;
    let cat = g.concat_cols(&[first, last])?;
    g.matmul(cat, w_q)
}

/// Name of every parameter in `store` starting with `prefix`.
pub fn params_with_prefix<'a>(store: &'a ParamStore, prefix: &'a str) -> impl Iterator<Item = String> + 'a {
    store
        .iter()
        .filter(move |(_, n, _)| n.starts_with(prefix))
        .map(|(_, n, _)| String::from(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::finite_diff_check;
    use alloc::vec;

    fn tensor(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn setup(input: usize, hidden: usize, seed: u64) -> (ParamStore, BiLstm) {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(seed);
        let enc = BiLstm::register(&mut store, "encoder", input, hidden, &mut rng);
        (store, enc)
    }

    #[test]
    fn shapes_and_empty_input() {
        let (store, enc) = setup(3, 2, 1);
        let mut g = Graph::new();
        let x = g.constant(Tensor::uniform(1, 3, 1.0, &mut Rng::new(0)));
        let out = encode_sequence(&mut g, &store, &enc, x).unwrap();
        assert_eq!(g.shape(out), [1, 4]);
        let empty = g.constant(Tensor::zeros(0, 3));
        assert_eq!(encode_sequence(&mut g, &store, &enc, empty), Err(Error::EmptySequence));
        assert_eq!(
            params_with_prefix(&store, "encoder.fwd").collect::<Vec<_>>(),
            vec!["encoder.fwd.w_x", "encoder.fwd.w_h", "encoder.fwd.b"]
        );
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let (mut store, enc) = setup(3, 2, 1);
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new();
        let x = g.constant(Tensor::uniform(4, 3, 1.0, &mut Rng::new(0)));
        let out = encode_sequence(&mut g, &store, &enc, x).unwrap();
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reversal_swaps_directions() {
        let (mut store, enc) = setup(3, 2, 7);
        // tie the directions so reversal symmetry is exact
        for (f, b) in [
            (enc.forward.w_x, enc.backward.w_x),
            (enc.forward.w_h, enc.backward.w_h),
        ] {
            let v = store.get(f).clone();
            *store.get_mut(b) = v;
        }
        let x = Tensor::uniform(5, 3, 1.0, &mut Rng::new(3));
        let mut rev = Vec::new();
        for r in (0..5).rev() {
            rev.extend_from_slice(x.row(r));
        }
        let xr = tensor(5, 3, &rev);
        let mut g = Graph::new();
        let (a, b) = (g.constant(x), g.constant(xr));
        let ea = encode_sequence(&mut g, &store, &enc, a).unwrap();
        let eb = encode_sequence(&mut g, &store, &enc, b).unwrap();
        let (ea, eb) = (g.value(ea), g.value(eb));
        for t in 0..5 {
            let ra = ea.row(t);
            let rb = eb.row(4 - t);
            assert!(close(&ra[..2], &rb[2..], 1e-15));
            assert!(close(&ra[2..], &rb[..2], 1e-15));
        }
    }

    #[test]
    fn no_leakage_from_trailing_content() {
        let (store, enc) = setup(3, 2, 2);
        let x = Tensor::uniform(6, 3, 1.0, &mut Rng::new(9));
        let mut g = Graph::new();
        let full = g.constant(x.clone());
        let prefix = g.slice_rows(full, 0, 4).unwrap();
        let a = encode_sequence(&mut g, &store, &enc, prefix).unwrap();
        let b = encode_sequence(&mut g, &store, &enc, prefix).unwrap();
        assert_eq!(g.value(a), g.value(b));
    }

    #[test]
    fn boundary_vectors() {
        let mut g = Graph::new();
        let enc = g.constant(tensor(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let single = boundary_vector(&mut g, enc, &[(1, 1)]).unwrap();
        assert_eq!(g.value(single).data(), &[3.0, 4.0, 3.0, 4.0]);
        let twice = boundary_vector(&mut g, enc, &[(1, 1), (1, 1)]).unwrap();
        assert_eq!(g.value(twice).data(), g.value(single).data());
        // mean of [1,2,5,6] and [3,4,5,6]
        let two = boundary_vector(&mut g, enc, &[(0, 2), (1, 2)]).unwrap();
        assert_eq!(g.value(two).data(), &[2.0, 3.0, 5.0, 6.0]);
        assert_eq!(
            boundary_vector(&mut g, enc, &[(1, 3)]),
            Err(Error::SpanOutOfBounds { start: 1, end: 3, len: 3 })
        );
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn attention_matches_hand_softmax() {
        let mut g = Graph::new();
        // T = 2, U = 3, H = 2
        let s = g.constant(tensor(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        let q = g.constant(tensor(3, 2, &[1.0, 1.0, 0.0, 1.0, -1.0, 0.0]));
        let attn = attention_matrix(&mut g, s, q).unwrap();
        let k = 1.0 / 2f64.sqrt();
        let raw = [[k, 0.0, -k], [2.0 * k, 2.0 * k, 0.0]];
        for (r, row) in raw.iter().enumerate() {
            let e: Vec<f64> = row.iter().map(|v| v.exp()).collect();
            let z: f64 = e.iter().sum();
            let want: Vec<f64> = e.iter().map(|v| v / z).collect();
            assert!(close(g.value(attn.rows).row(r), &want, 1e-12));
        }
        for c in 0..3 {
            let e = [raw[0][c].exp(), raw[1][c].exp()];
            let z = e[0] + e[1];
            assert!((g.value(attn.cols).get(0, c) - e[0] / z).abs() < 1e-12);
            assert!((g.value(attn.cols).get(1, c) - e[1] / z).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_states_attend_uniformly() {
        let mut g = Graph::new();
        let s = g.constant(tensor(2, 2, &[0.3, -0.2, 0.3, -0.2]));
        let attn = attention_matrix(&mut g, s, s).unwrap();
        assert!(g.value(attn.rows).data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn question_weighted_products_by_hand() {
        let mut g = Graph::new();
        let s = g.constant(tensor(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let q = g.constant(tensor(2, 2, &[2.0, 0.0, 0.0, 2.0]));
        let attn = attention_matrix(&mut g, s, q).unwrap();
        let out = question_weighted_passage(&mut g, &attn, q, s).unwrap();

        // raw = [[a, 0], [0, a]] with a = 2 / sqrt(2)
        let a = 2.0 / 2f64.sqrt();
        let p = a.exp() / (a.exp() + 1.0);
        let m = [p, 1.0 - p, 1.0 - p, p];
        // row and column softmax coincide for this symmetric raw matrix
        assert!(close(g.value(attn.rows).data(), &m, 1e-12));
        assert!(close(g.value(attn.cols).data(), &m, 1e-12));
        let s_q1 = [2.0 * p, 2.0 * (1.0 - p), 2.0 * (1.0 - p), 2.0 * p];
        assert!(close(g.value(out.s_q1).data(), &s_q1, 1e-12));
        // Q_p = colsoftᵀ S = m (symmetric, S = I)
        assert!(close(g.value(out.q_p).data(), &m, 1e-12));
        let m2 = [
            p * p + (1.0 - p) * (1.0 - p),
            2.0 * p * (1.0 - p),
            2.0 * p * (1.0 - p),
            p * p + (1.0 - p) * (1.0 - p),
        ];
        assert!(close(g.value(out.s_q2).data(), &m2, 1e-12));
    }

    #[test]
    fn single_question_token() {
        let mut g = Graph::new();
        let s = g.constant(Tensor::uniform(3, 2, 1.0, &mut Rng::new(1)));
        let q = g.constant(tensor(1, 2, &[0.4, -0.7]));
        let attn = attention_matrix(&mut g, s, q).unwrap();
        let out = question_weighted_passage(&mut g, &attn, q, s).unwrap();
        assert_eq!(g.shape(out.s_q1), [3, 2]);
        assert_eq!(g.shape(out.q_p), [1, 2]);
        assert_eq!(g.shape(out.s_q2), [3, 2]);
        for r in 0..3 {
            assert!(close(g.value(out.s_q1).row(r), &[0.4, -0.7], 1e-15));
        }
    }

    #[test]
    fn pooling() {
        let mut g = Graph::new();
        let w = g.constant(tensor(1, 2, &[1.0, -1.0]));
        let one = g.constant(tensor(1, 2, &[0.5, 0.25]));
        let p = attentive_pool(&mut g, one, w).unwrap();
        assert_eq!(g.value(p).data(), &[0.5, 0.25]);

        let same = g.constant(tensor(3, 2, &[0.5, 0.25, 0.5, 0.25, 0.5, 0.25]));
        let p = attentive_pool(&mut g, same, w).unwrap();
        assert!(close(g.value(p).data(), &[0.5, 0.25], 1e-15));

        let x = g.constant(tensor(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, 2.0]));
        let p = attentive_pool(&mut g, x, w).unwrap();
        // scores 1, -1, 0
        let e = [1f64.exp(), (-1f64).exp(), 1.0];
        let z: f64 = e.iter().sum();
        let want = [(e[0] + 2.0 * e[2]) / z, (e[1] + 2.0 * e[2]) / z];
        assert!(close(g.value(p).data(), &want, 1e-12));
    }

    #[test]
    fn question_aggregation() {
        let mut g = Graph::new();
        let q = g.constant(tensor(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        // [I; I] sums the first and last rows
        let w = g.constant(tensor(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]));
        let out = aggregate_question(&mut g, q, w).unwrap();
        assert_eq!(g.value(out).data(), &[4.0, 6.0]);
        let single = g.constant(tensor(1, 2, &[1.0, 2.0]));
        let out = aggregate_question(&mut g, single, w).unwrap();
        assert_eq!(g.value(out).data(), &[2.0, 4.0]);
        let zero = g.constant(Tensor::zeros(4, 2));
        let out = aggregate_question(&mut g, q, zero).unwrap();
        assert_eq!(g.value(out).data(), &[0.0, 0.0]);
    }

    #[test]
    fn gru_single_step_from_zero() {
        let mut store = ParamStore::new();
        let cell = GruCell::register(&mut store, "gru", 2, 2, &mut Rng::new(4));
        let x = tensor(1, 2, &[0.3, -0.8]);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let h = cell.fold(&mut g, &store, &[xv]).unwrap();
        // from h = 0 with zero bias: h' = (1 - z) * tanh(x W_n)
        let xw = x.matmul(store.get(cell.w_x)).unwrap();
        let want: Vec<f64> = (0..2)
            .map(|j| {
                let z = 1.0 / (1.0 + (-xw.get(0, j)).exp());
                (1.0 - z) * xw.get(0, 4 + j).tanh()
            })
            .collect();
        assert!(close(g.value(h).data(), &want, 1e-14));
    }

    #[test]
    fn encoder_stack_gradients() {
        let (mut store, enc) = setup(3, 2, 5);
        let mut rng = Rng::new(8);
        store.add("pool.w", Tensor::uniform(1, 8, 1.0, &mut rng));
        let xs = Tensor::uniform(3, 3, 1.0, &mut rng);
        let qs = Tensor::uniform(2, 3, 1.0, &mut rng);
        let report = finite_diff_check(
            &mut store,
            |g, st| {
                let x = g.constant(xs.clone());
                let q = g.constant(qs.clone());
                let s = encode_sequence(g, st, &enc, x)?;
                let q = encode_sequence(g, st, &enc, q)?;
                let attn = attention_matrix(g, s, q)?;
                let w = attn_products(g, &attn, q, s)?;
                let pw = g.param(st, st.id("pool.w").unwrap());
                let pooled = attentive_pool(g, w, pw)?;
                let sq = g.mul(pooled, pooled)?;
                Ok(g.sum(sq))
            },
            1e-5,
            50,
            &mut rng,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");

        fn attn_products(g: &mut Graph, a: &Attention, q: Var, s: Var) -> Result<Var> {
            let out = question_weighted_passage(g, a, q, s)?;
            g.concat_cols(&[out.s_q1, out.s_q2])
        }
    }
}
