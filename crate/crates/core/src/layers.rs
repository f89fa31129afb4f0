//! Layers of one essay grading stack: embedding lookup, word-level 1-D
//! convolution, attention pooling, (Bi)LSTM, dropout, the sigmoid head and
//! the squared-error loss.
//!
//! Every layer is a function over a [`Graph`] plus a small struct of
//! [`ParamId`]s naming its weights in a [`ParamStore`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Float, Graph, ParamId, ParamStore, Tensor, Var};

/// Layer dimensions. Defaults are the full-size network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Dims {
    pub embed_dim: usize,
    pub window: usize,
    pub filters: usize,
    pub hidden: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            embed_dim: 50,
            window: 5,
            filters: 100,
            hidden: 100,
        }
    }
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.window == 0 || self.filters == 0 || self.hidden == 0 {
            return Err(Error::config(format!(
                "layer dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Where dropout is applied. Recorded in model configs and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropoutPlacement {
    /// On sentence vectors entering the recurrent layer.
    pub before_recurrent: bool,
    /// On the essay vector entering the dense head.
    pub before_head: bool,
}

impl Default for DropoutPlacement {
    fn default() -> Self {
        DropoutPlacement {
            before_recurrent: true,
            before_head: true,
        }
    }
}

fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<Float> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n)
        .map(|_| rng.gen_range(-limit..limit) as Float)
        .collect()
}

fn matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Result<Tensor> {
    Tensor::matrix(rows, cols, glorot(rng, rows, cols, rows * cols))
}

/// Uniform(-0.05, 0.05) rows for a `[vocab, dim]` embedding table.
pub fn init_embedding<R: Rng>(rng: &mut R, vocab: usize, dim: usize) -> Result<Tensor> {
    let data = (0..vocab * dim)
        .map(|_| rng.gen_range(-0.05..0.05) as Float)
        .collect();
    Tensor::matrix(vocab, dim, data)
}

pub fn embed(g: &mut Graph<'_>, table: ParamId, ids: &[usize]) -> Result<Var> {
    g.embed(table, ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvParams {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub window: usize,
}

impl ConvParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        window: usize,
        filters: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let kernel = store.add(
            format!("{prefix}.kernel"),
            Tensor::matrix(
                window * in_dim,
                filters,
                glorot(rng, window * in_dim, filters, window * in_dim * filters),
            )?,
        )?;
        let bias = store.add(format!("{prefix}.bias"), Tensor::zeros(vec![filters])?)?;
        Ok(ConvParams {
            kernel,
            bias,
            window,
        })
    }
}

/// Same-padded 1-D convolution over the rows of `x: [T, d]`, giving `[T, f]`.
/// No activation.
pub fn conv1d(g: &mut Graph<'_>, p: &ConvParams, x: Var) -> Result<Var> {
    let windows = g.unfold(x, p.window)?;
    let k = g.param(p.kernel);
    let y = g.matmul(windows, k)?;
    let b = g.param(p.bias);
    g.add_bias(y, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub w: ParamId,
    pub b: ParamId,
    pub v: ParamId,
}

impl AttentionParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.add(format!("{prefix}.w"), matrix(rng, dim, dim)?)?;
        let b = store.add(format!("{prefix}.b"), Tensor::zeros(vec![dim])?)?;
        let v = store.add(
            format!("{prefix}.v"),
            Tensor::vector(glorot(rng, dim, 1, dim))?,
        )?;
        Ok(AttentionParams { w, b, v })
    }
}

/// Attention pooling of the rows of `h: [n, r]`:
/// `u_i = v · tanh(W h_i + b)`, `a = softmax(u)`, result `Σ a_i h_i`.
/// Rows with `mask[i] == false` get weight 0.
pub fn attention_pool(
    g: &mut Graph<'_>,
    p: &AttentionParams,
    h: Var,
    mask: Option<&[bool]>,
) -> Result<Var> {
    match g.shape(h) {
        [0, _] => return Err(Error::arg("attention over zero rows")),
        [_, _] => {}
        other => {
            return Err(Error::Shape {
                op: "attention_pool",
                left: other.to_vec(),
                right: vec![],
            })
        }
    }
    let w = g.param(p.w);
    let proj = g.matmul(h, w)?;
    let b = g.param(p.b);
    let proj = g.add_bias(proj, b)?;
    let act = g.tanh(proj);
    let v = g.param(p.v);
    let scores = g.matmul(act, v)?;
    let weights = g.masked_softmax(scores, mask)?;
    g.matmul(weights, h)
}

/// Gate order: input, forget, output, cell candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
    pub hidden: usize,
}

const GATES: [&str; 4] = ["input", "forget", "output", "cell"];

impl LstmParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut w = [ParamId(0); 4];
        let mut u = [ParamId(0); 4];
        let mut b = [ParamId(0); 4];
        for (k, gate) in GATES.iter().enumerate() {
            w[k] = store.add(format!("{prefix}.{gate}.w"), matrix(rng, in_dim, hidden)?)?;
            u[k] = store.add(format!("{prefix}.{gate}.u"), matrix(rng, hidden, hidden)?)?;
            let fill = if *gate == "forget" { 1.0 } else { 0.0 };
            b[k] = store.add(
                format!("{prefix}.{gate}.b"),
                Tensor::vector(vec![fill; hidden])?,
            )?;
        }
        Ok(LstmParams { w, u, b, hidden })
    }
}

/// Runs an LSTM over the rows of `xs: [n, r_in]` from zero initial state and
/// returns all hidden states as `[n, h]`, in input order. With `reverse` the
/// recurrence starts at the last row. Steps with `mask[t] == false` carry the
/// previous state through unchanged.
pub fn lstm_forward(
    g: &mut Graph<'_>,
    p: &LstmParams,
    xs: Var,
    mask: Option<&[bool]>,
    reverse: bool,
) -> Result<Var> {
    let steps = match g.shape(xs) {
        [n, _] => *n,
        other => {
            return Err(Error::Shape {
                op: "lstm_forward",
                left: other.to_vec(),
                right: vec![],
            })
        }
    };
    if steps == 0 {
        return Err(Error::arg("lstm over an empty sequence"));
    }
    if let Some(m) = mask {
        if m.len() != steps {
            return Err(Error::Shape {
                op: "lstm mask",
                left: vec![steps],
                right: vec![m.len()],
            });
        }
    }
    let mut projected = [xs; 4];
    for (k, slot) in projected.iter_mut().enumerate() {
        let w = g.param(p.w[k]);
        let xw = g.matmul(xs, w)?;
        let b = g.param(p.b[k]);
        *slot = g.add_bias(xw, b)?;
    }
    let u: Vec<Var> = p.u.iter().map(|id| g.param(*id)).collect();

    let mut h: Option<Var> = None;
    let mut c: Option<Var> = None;
    let zero = g.constant(vec![p.hidden], vec![0.0; p.hidden])?;
    let mut outputs = vec![zero; steps];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    for t in order {
        if mask.is_some_and(|m| !m[t]) {
            outputs[t] = h.unwrap_or(zero);
            continue;
        }
        let mut pre = [zero; 4];
        for k in 0..4 {
            let x_t = g.row(projected[k], t)?;
            pre[k] = match h {
                Some(hp) => {
                    let rec = g.matmul(hp, u[k])?;
                    g.add(x_t, rec)?
                }
                None => x_t,
            };
        }
        let i = g.sigmoid(pre[0]);
        let f = g.sigmoid(pre[1]);
        let o = g.sigmoid(pre[2]);
        let cand = g.tanh(pre[3]);
        let ic = g.mul(i, cand)?;
        let c_t = match c {
            Some(cp) => {
                let fc = g.mul(f, cp)?;
                g.add(fc, ic)?
            }
            None => ic,
        };
        let tc = g.tanh(c_t);
        let h_t = g.mul(o, tc)?;
        outputs[t] = h_t;
        h = Some(h_t);
        c = Some(c_t);
    }
    g.stack_rows(&outputs)
}

/// Forward and reversed LSTM passes, concatenated per step into `[n, 2h]`.
pub fn bilstm_forward(
    g: &mut Graph<'_>,
    forward: &LstmParams,
    backward: &LstmParams,
    xs: Var,
    mask: Option<&[bool]>,
) -> Result<Var> {
    let fwd = lstm_forward(g, forward, xs, mask, false)?;
    let bwd = lstm_forward(g, backward, xs, mask, true)?;
    let n = g.shape(fwd)[0];
    let mut rows = Vec::with_capacity(n);
    for t in 0..n {
        let a = g.row(fwd, t)?;
        let b = g.row(bwd, t)?;
        rows.push(g.concat(&[a, b])?);
    }
    g.stack_rows(&rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl DenseParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.add(
            format!("{prefix}.w"),
            Tensor::vector(glorot(rng, in_dim, 1, in_dim))?,
        )?;
        let b = store.add(format!("{prefix}.b"), Tensor::zeros(vec![1])?)?;
        Ok(DenseParams { w, b })
    }
}

/// `σ(w · x + b)` as a `[1]` node.
pub fn dense_sigmoid(g: &mut Graph<'_>, p: &DenseParams, x: Var) -> Result<Var> {
    let w = g.param(p.w);
    let z = g.matmul(x, w)?;
    let b = g.param(p.b);
    let z = g.add(z, b)?;
    Ok(g.sigmoid(z))
}

/// Mean squared error between scalar prediction nodes and gold values.
pub fn mse_loss(g: &mut Graph<'_>, preds: &[Var], gold: &[Float]) -> Result<Var> {
    if preds.len() != gold.len() {
        return Err(Error::arg(format!(
            "mse over {} predictions and {} gold values",
            preds.len(),
            gold.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::arg("mse over no values"));
    }
    let p = g.concat(preds)?;
    let y = g.constant(vec![gold.len()], gold.to_vec())?;
    let d = g.sub(p, y)?;
    let sq = g.mul(d, d)?;
    let s = g.sum(sq);
    Ok(g.scale(s, 1.0 / gold.len() as Float))
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask<R: Rng>(n: usize, rate: Float, rng: &mut R) -> Vec<Float> {
    let keep = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| {
            if (rng.gen::<f64>() as Float) < rate {
                0.0
            } else {
                keep
            }
        })
        .collect()
}

pub fn dropout<R: Rng>(
    g: &mut Graph<'_>,
    x: Var,
    rate: Float,
    mode: Mode,
    rng: &mut R,
) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::arg(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(x);
    }
    let mask = dropout_mask(g.value(x).len(), rate, rng);
    g.mul_const(x, mask)
}

#[cfg(all(test, not(feature = "f32")))]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, GradCheck};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Vec<Float> {
        (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn embed_duplicate_ids_give_identical_rows() {
        let mut store = ParamStore::new();
        let t = store
            .add("e", init_embedding(&mut rng(), 4, 3).unwrap())
            .unwrap();
        let mut g = Graph::new(&store);
        let e = embed(&mut g, t, &[0, 0]).unwrap();
        let v = g.value(e);
        assert_eq!(v[..3], v[3..]);
    }

    #[test]
    fn embed_one_hot_table_recovers_one_hot_rows() {
        let mut store = ParamStore::new();
        let eye = Tensor::matrix(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let t = store.add("e", eye).unwrap();
        let mut g = Graph::new(&store);
        let e = embed(&mut g, t, &[2, 0]).unwrap();
        assert_eq!(g.value(e), &[0., 0., 1., 1., 0., 0.]);
    }

    #[test]
    fn embed_gradient_counts_occurrences() {
        let mut store = ParamStore::new();
        let t = store
            .add("e", init_embedding(&mut rng(), 5, 2).unwrap())
            .unwrap();
        let mut g = Graph::new(&store);
        let e = embed(&mut g, t, &[3, 1, 3, 3]).unwrap();
        let s = g.sum(e);
        let grads = g.backward(s).unwrap();
        let gt = grads.get(t).unwrap();
        assert_eq!(gt, &[0., 0., 1., 1., 0., 0., 3., 3., 0., 0.]);
    }

    #[test]
    fn conv_with_zero_kernel_outputs_bias() {
        let mut store = ParamStore::new();
        let p = ConvParams::register(&mut store, "c", 2, 5, 3, &mut rng()).unwrap();
        store.get_mut(p.kernel).data_mut().fill(0.0);
        store
            .get_mut(p.bias)
            .data_mut()
            .copy_from_slice(&[0.5, -1.0, 2.0]);
        let mut g = Graph::new(&store);
        let x = g.constant(vec![4, 2], vec![1.0; 8]).unwrap();
        let y = conv1d(&mut g, &p, x).unwrap();
        assert_eq!(g.shape(y), &[4, 3]);
        for row in g.value(y).chunks(3) {
            assert_eq!(row, &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn conv_of_ones_matches_hand_convolution() {
        // d=2, w=5, T=5, one filter of ones, zero bias, input of ones.
        // Row t sees min(t+3, 5) - max(t-2, 0) real rows of two ones each.
        let mut store = ParamStore::new();
        let p = ConvParams::register(&mut store, "c", 2, 5, 1, &mut rng()).unwrap();
        store.get_mut(p.kernel).data_mut().fill(1.0);
        let mut g = Graph::new(&store);
        let x = g.constant(vec![5, 2], vec![1.0; 10]).unwrap();
        let y = conv1d(&mut g, &p, x).unwrap();
        assert_eq!(g.value(y), &[6.0, 8.0, 10.0, 8.0, 6.0]);
    }

    #[test]
    fn conv_is_linear_without_bias() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let p = ConvParams::register(&mut store, "c", 3, 5, 4, &mut r).unwrap();
        let xa = random_matrix(&mut r, 6, 3);
        let xb = random_matrix(&mut r, 6, 3);
        let (alpha, beta) = (0.7, -1.3);
        let mix: Vec<Float> = xa
            .iter()
            .zip(&xb)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let mut g = Graph::new(&store);
        let run = |g: &mut Graph<'_>, x: Vec<Float>| {
            let x = g.constant(vec![6, 3], x).unwrap();
            let y = conv1d(g, &p, x).unwrap();
            g.value(y).to_vec()
        };
        let ya = run(&mut g, xa);
        let yb = run(&mut g, xb);
        let ym = run(&mut g, mix);
        for i in 0..ym.len() {
            assert!((ym[i] - (alpha * ya[i] + beta * yb[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_single_row_and_identical_rows() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let p = AttentionParams::register(&mut store, "a", 3, &mut r).unwrap();
        let mut g = Graph::new(&store);
        let one = g.constant(vec![1, 3], vec![0.2, -0.4, 1.1]).unwrap();
        let out = attention_pool(&mut g, &p, one, None).unwrap();
        assert_eq!(g.value(out), &[0.2, -0.4, 1.1]);

        let same = g.constant(vec![4, 3], [0.2, -0.4, 1.1].repeat(4)).unwrap();
        let out = attention_pool(&mut g, &p, same, None).unwrap();
        for (a, b) in g.value(out).iter().zip([0.2, -0.4, 1.1]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_param_count() {
        let mut store = ParamStore::new();
        AttentionParams::register(&mut store, "a", 100, &mut rng()).unwrap();
        assert_eq!(store.num_trainable(), 10_200);
    }

    #[test]
    fn attention_output_is_convex_combination() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let p = AttentionParams::register(&mut store, "a", 2, &mut r).unwrap();
        let rows = random_matrix(&mut r, 5, 2);
        let mut g = Graph::new(&store);
        let h = g.constant(vec![5, 2], rows.clone()).unwrap();
        let out = attention_pool(&mut g, &p, h, None).unwrap();
        for d in 0..2 {
            let col: Vec<Float> = rows.iter().skip(d).step_by(2).copied().collect();
            let lo = col.iter().cloned().fold(Float::INFINITY, Float::min);
            let hi = col.iter().cloned().fold(Float::NEG_INFINITY, Float::max);
            let v = g.value(out)[d];
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn lstm_zero_params_give_zero_states() {
        let mut store = ParamStore::new();
        let p = LstmParams::register(&mut store, "l", 3, 4, &mut rng()).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let mut g = Graph::new(&store);
        let xs = g.constant(vec![3, 3], vec![0.9; 9]).unwrap();
        let h = lstm_forward(&mut g, &p, xs, None, false).unwrap();
        assert!(g.value(h).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lstm_single_step_matches_hand_evaluation() {
        // in_dim = 1, hidden = 1. Gate pre-activations are w*x + b.
        let mut store = ParamStore::new();
        let p = LstmParams::register(&mut store, "l", 1, 1, &mut rng()).unwrap();
        let ws = [0.5, -0.3, 0.8, 0.2];
        let bs = [0.1, 1.0, -0.2, 0.05];
        for k in 0..4 {
            store.get_mut(p.w[k]).data_mut()[0] = ws[k];
            store.get_mut(p.u[k]).data_mut()[0] = 0.7;
            store.get_mut(p.b[k]).data_mut()[0] = bs[k];
        }
        let x = 1.5;
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let i = sig(ws[0] * x + bs[0]);
        let o = sig(ws[2] * x + bs[2]);
        let cand = (ws[3] * x + bs[3]).tanh();
        let expected = o * (i * cand).tanh();

        let mut g = Graph::new(&store);
        let xs = g.constant(vec![1, 1], vec![x]).unwrap();
        let h = lstm_forward(&mut g, &p, xs, None, false).unwrap();
        assert!((g.value(h)[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn lstm_fully_masked_sequence_stays_at_zero_state() {
        let mut store = ParamStore::new();
        let p = LstmParams::register(&mut store, "l", 2, 2, &mut rng()).unwrap();
        let mut g = Graph::new(&store);
        let xs = g.constant(vec![2, 2], vec![0.4; 4]).unwrap();
        let h = lstm_forward(&mut g, &p, xs, Some(&[false, false]), false).unwrap();
        assert!(g.value(h).iter().all(|v| *v == 0.0));
        assert!(lstm_forward(&mut g, &p, xs, Some(&[true]), false).is_err());
    }

    #[test]
    fn bilstm_with_zeroed_reverse_matches_lstm() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let f = LstmParams::register(&mut store, "f", 3, 4, &mut r).unwrap();
        let b = LstmParams::register(&mut store, "b", 3, 4, &mut r).unwrap();
        for id in b.w.iter().chain(&b.u).chain(&b.b) {
            store.get_mut(*id).data_mut().fill(0.0);
        }
        let xs_data = random_matrix(&mut r, 4, 3);
        let mut g = Graph::new(&store);
        let xs = g.constant(vec![4, 3], xs_data).unwrap();
        let uni = lstm_forward(&mut g, &f, xs, None, false).unwrap();
        let bi = bilstm_forward(&mut g, &f, &b, xs, None).unwrap();
        assert_eq!(g.shape(bi), &[4, 8]);
        let uni_v = g.value(uni).to_vec();
        for (t, row) in g.value(bi).chunks(8).enumerate() {
            assert_eq!(&row[..4], &uni_v[t * 4..(t + 1) * 4]);
            assert!(row[4..].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn dense_head_range() {
        let mut store = ParamStore::new();
        let p = DenseParams::register(&mut store, "d", 3, &mut rng()).unwrap();
        store.get_mut(p.w).data_mut().fill(0.0);
        let mut g = Graph::new(&store);
        let x = g.constant(vec![3], vec![5.0, -2.0, 9.0]).unwrap();
        let y = dense_sigmoid(&mut g, &p, x).unwrap();
        assert_eq!(g.value(y), &[0.5]);
        drop(g);

        store.get_mut(p.w).data_mut().fill(3.0);
        let mut g = Graph::new(&store);
        for scale in [-100.0, -1.0, 0.0, 1.0, 100.0] {
            let x = g.constant(vec![3], vec![scale; 3]).unwrap();
            let y = dense_sigmoid(&mut g, &p, x).unwrap();
            let v = g.scalar(y);
            assert!((0.0..=1.0).contains(&v));
            if scale.abs() <= 1.0 {
                assert!(v > 0.0 && v < 1.0);
            }
        }
    }

    #[test]
    fn mse_values_and_errors() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.scalar_constant(1.0);
        let b = g.scalar_constant(0.0);
        let l = mse_loss(&mut g, &[a, b], &[0.0, 0.0]).unwrap();
        assert_eq!(g.scalar(l), 0.5);
        let l = mse_loss(&mut g, &[a, b], &[1.0, 0.0]).unwrap();
        assert_eq!(g.scalar(l), 0.0);
        assert!(mse_loss(&mut g, &[a], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn mse_gradient_wrt_predictions() {
        let mut store = ParamStore::new();
        let p = store
            .add("p", Tensor::vector(vec![0.3, 0.9, 0.1]).unwrap())
            .unwrap();
        let gold = [0.5, 0.2, 0.1];
        let mut g = Graph::new(&store);
        let pv = g.param(p);
        let preds: Vec<Var> = (0..3)
            .map(|i| {
                let r = g.reshape(pv, vec![1, 3]).unwrap();
                let row = g.row(r, 0).unwrap();
                let oh = g
                    .constant(vec![3], (0..3).map(|j| (i == j) as u8 as Float).collect())
                    .unwrap();
                let m = g.mul(row, oh).unwrap();
                g.sum(m)
            })
            .collect();
        let l = mse_loss(&mut g, &preds, &gold).unwrap();
        let grads = g.backward(l).unwrap();
        let vals = [0.3, 0.9, 0.1];
        for i in 0..3 {
            let expected = 2.0 * (vals[i] - gold[i]) / 3.0;
            assert!((grads.get(p).unwrap()[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn dropout_modes() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut r = rng();
        let e = dropout(&mut g, x, 0.5, Mode::Eval, &mut r).unwrap();
        assert_eq!(g.value(e), &[1.0, 2.0, 3.0, 4.0]);
        let z = dropout(&mut g, x, 0.0, Mode::Train, &mut r).unwrap();
        assert_eq!(g.value(z), &[1.0, 2.0, 3.0, 4.0]);
        assert!(dropout(&mut g, x, 1.0, Mode::Train, &mut r).is_err());
    }

    #[test]
    fn dropout_monte_carlo_statistics() {
        let n = 1_000_000;
        let mask = dropout_mask(n, 0.5, &mut rng());
        let zeros = mask.iter().filter(|m| **m == 0.0).count() as f64 / n as f64;
        assert!((0.498..=0.502).contains(&zeros), "zero fraction {zeros}");
        let mean: f64 = mask.iter().map(|m| *m as f64).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean multiplier {mean}");
    }

    fn assert_check(c: GradCheck) {
        assert!(c.max_rel_err <= 1e-4, "{c:?}");
    }

    #[test]
    fn layer_gradients_match_finite_differences() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let table = store
            .add("e", init_embedding(&mut r, 6, 3).unwrap())
            .unwrap();
        let conv = ConvParams::register(&mut store, "c", 3, 5, 4, &mut r).unwrap();
        let att = AttentionParams::register(&mut store, "a", 4, &mut r).unwrap();
        let fw = LstmParams::register(&mut store, "f", 4, 3, &mut r).unwrap();
        let bw = LstmParams::register(&mut store, "b", 4, 3, &mut r).unwrap();
        let att2 = AttentionParams::register(&mut store, "a2", 6, &mut r).unwrap();
        let head = DenseParams::register(&mut store, "d", 6, &mut r).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            for v in store.get_mut(id).data_mut() {
                *v += r.gen_range(-0.3..0.3);
            }
        }
        let ids = [1usize, 4, 2, 2, 5];
        let forward = |g: &mut Graph<'_>| -> Result<Var> {
            let e = embed(g, table, &ids)?;
            let c = conv1d(g, &conv, e)?;
            // three "sentences" pooled from overlapping slices of the conv output
            let mut sents = Vec::new();
            for s in 0..3 {
                let rows: Vec<Var> = (s..s + 3).map(|t| g.row(c, t).unwrap()).collect();
                let m = g.stack_rows(&rows)?;
                sents.push(attention_pool(g, &att, m, None)?);
            }
            let seq = g.stack_rows(&sents)?;
            let h = bilstm_forward(g, &fw, &bw, seq, None)?;
            let essay = attention_pool(g, &att2, h, None)?;
            let y = dense_sigmoid(g, &head, essay)?;
            mse_loss(g, &[y], &[0.3])
        };
        assert_check(check_gradients(&mut store, 1e-4, forward).unwrap());
    }

    #[test]
    fn matmul_gradients_match_finite_differences() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let a = store
            .add(
                "a",
                Tensor::matrix(3, 4, random_matrix(&mut r, 3, 4)).unwrap(),
            )
            .unwrap();
        let b = store
            .add(
                "b",
                Tensor::matrix(4, 2, random_matrix(&mut r, 4, 2)).unwrap(),
            )
            .unwrap();
        let c = check_gradients(&mut store, 1e-4, |g| {
            let (av, bv) = (g.param(a), g.param(b));
            let p = g.matmul(av, bv)?;
            Ok(g.sum(p))
        })
        .unwrap();
        assert!(c.max_rel_err <= 1e-5, "{c:?}");
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::vector(vec![0.0]).unwrap()).unwrap();
        let analytic = {
            let mut g = Graph::new(&store);
            let v = g.param(x);
            let s = g.sigmoid(v);
            let s = g.sum(s);
            g.backward(s).unwrap().get(x).unwrap()[0]
        };
        assert_eq!(analytic, 0.25);
        let c = check_gradients(&mut store, 1e-4, |g| {
            let v = g.param(x);
            let s = g.sigmoid(v);
            Ok(g.sum(s))
        })
        .unwrap();
        assert!(c.max_rel_err <= 1e-6, "{c:?}");
    }
}
