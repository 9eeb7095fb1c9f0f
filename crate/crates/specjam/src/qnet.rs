//! From-scratch recurrent dueling Q-network.
//!
//! An LSTM layer consumes the observation history (oldest to newest) from a
//! zero initial state; its final hidden vector feeds two small tanh MLP
//! heads. The value head produces a scalar V, the advantage head one output
//! per action, and the two combine as Q(a) = V + Adv(a) - mean_a Adv(a).
//! Training is one-step Q-learning on replayed minibatches: the bootstrap
//! target `reward + gamma * max_a Q(next_history, a)` is held constant (no
//! gradient flows through it) and parameters move by one plain
//! gradient-descent step on the batch mean-squared error, with the global
//! gradient norm clipped.
//!
//! Everything is plain `f64` with no hidden state outside the structs, so
//! identical inputs produce bit-identical outputs and updates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::replay::{ObservationHistory, TransitionRecord};

/// Gate order inside the packed LSTM tensors.
const GATE_INPUT: usize = 0;
const GATE_FORGET: usize = 1;
const GATE_CELL: usize = 2;
const GATE_OUTPUT: usize = 3;

const INIT_WEIGHT_RANGE: f64 = 0.1;
const FORGET_BIAS: f64 = 1.0;

/// Network shape. Immutable after construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QNetDims {
    /// Width of one observation vector.
    pub input: usize,
    /// LSTM hidden size.
    pub hidden: usize,
    /// Hidden size of each dueling head.
    pub duel_hidden: usize,
    /// Number of actions (advantage outputs).
    pub actions: usize,
    /// Observations per history.
    pub history: usize,
}

impl QNetDims {
    pub fn param_count(&self) -> usize {
        let (i, h, d, a) = (self.input, self.hidden, self.duel_hidden, self.actions);
        4 * h * i + 4 * h * h + 4 * h   // LSTM
            + d * h + d + d + 1         // value head
            + d * h + d + a * d + a     // advantage head
    }
}

/// All weights and biases; the unit of cloning, snapshotting and reloading.
///
/// Tensor order (also the serialized order): `w_x`, `w_h`, `b`, `value_w1`,
/// `value_b1`, `value_w2`, `value_b2`, `adv_w1`, `adv_b1`, `adv_w2`,
/// `adv_b2`. LSTM tensors pack the four gates [input, forget, cell, output]
/// along the row dimension; all matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetworkParams {
    dims: QNetDims,
    /// [4H x I] input weights.
    w_x: Vec<f64>,
    /// [4H x H] recurrent weights.
    w_h: Vec<f64>,
    /// [4H] gate biases.
    b: Vec<f64>,
    /// [D x H], [D], [D], scalar.
    value_w1: Vec<f64>,
    value_b1: Vec<f64>,
    value_w2: Vec<f64>,
    value_b2: f64,
    /// [D x H], [D], [A x D], [A].
    adv_w1: Vec<f64>,
    adv_b1: Vec<f64>,
    adv_w2: Vec<f64>,
    adv_b2: Vec<f64>,
}

/// Forward output split into its dueling parts.
#[derive(Debug, Clone)]
pub struct QOutput {
    pub q: Vec<f64>,
    pub value: f64,
    pub advantages: Vec<f64>,
}

/// Non-finite loss out of a training step.
#[derive(Debug, Clone, Copy)]
pub struct DivergedLoss(pub f64);

impl QNetworkParams {
    /// Uniform [-0.1, 0.1] weights, zero biases, forget-gate bias +1.
    pub fn init(dims: QNetDims, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(dims);
        let mut fill = |v: &mut [f64]| {
            for w in v {
                *w = rng.gen_range(-INIT_WEIGHT_RANGE..=INIT_WEIGHT_RANGE);
            }
        };
        fill(&mut p.w_x);
        fill(&mut p.w_h);
        fill(&mut p.value_w1);
        fill(&mut p.value_w2);
        fill(&mut p.adv_w1);
        fill(&mut p.adv_w2);
        let h = dims.hidden;
        p.b[GATE_FORGET * h..(GATE_FORGET + 1) * h].fill(FORGET_BIAS);
        p
    }

    pub fn zeros(dims: QNetDims) -> Self {
        let (i, h, d, a) = (dims.input, dims.hidden, dims.duel_hidden, dims.actions);
        assert!(i >= 1 && h >= 1 && d >= 1 && a >= 1 && dims.history >= 1);
        QNetworkParams {
            dims,
            w_x: vec![0.0; 4 * h * i],
            w_h: vec![0.0; 4 * h * h],
            b: vec![0.0; 4 * h],
            value_w1: vec![0.0; d * h],
            value_b1: vec![0.0; d],
            value_w2: vec![0.0; d],
            value_b2: 0.0,
            adv_w1: vec![0.0; d * h],
            adv_b1: vec![0.0; d],
            adv_w2: vec![0.0; a * d],
            adv_b2: vec![0.0; a],
        }
    }

    pub fn dims(&self) -> QNetDims {
        self.dims
    }

    /// Flattened view of every parameter in serialized order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dims.param_count());
        out.extend_from_slice(&self.w_x);
        out.extend_from_slice(&self.w_h);
        out.extend_from_slice(&self.b);
        out.extend_from_slice(&self.value_w1);
        out.extend_from_slice(&self.value_b1);
        out.extend_from_slice(&self.value_w2);
        out.push(self.value_b2);
        out.extend_from_slice(&self.adv_w1);
        out.extend_from_slice(&self.adv_b1);
        out.extend_from_slice(&self.adv_w2);
        out.extend_from_slice(&self.adv_b2);
        out
    }

    /// Inverse of [`to_flat`]; `flat` must have exactly `param_count`
    /// entries.
    pub fn set_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.dims.param_count(), "flat length mismatch");
        fn take(dst: &mut [f64], flat: &[f64], cursor: &mut usize) {
            dst.copy_from_slice(&flat[*cursor..*cursor + dst.len()]);
            *cursor += dst.len();
        }
        let mut cursor = 0usize;
        take(&mut self.w_x, flat, &mut cursor);
        take(&mut self.w_h, flat, &mut cursor);
        take(&mut self.b, flat, &mut cursor);
        take(&mut self.value_w1, flat, &mut cursor);
        take(&mut self.value_b1, flat, &mut cursor);
        take(&mut self.value_w2, flat, &mut cursor);
        self.value_b2 = flat[cursor];
        cursor += 1;
        take(&mut self.adv_w1, flat, &mut cursor);
        take(&mut self.adv_b1, flat, &mut cursor);
        take(&mut self.adv_w2, flat, &mut cursor);
        take(&mut self.adv_b2, flat, &mut cursor);
    }

    pub fn all_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }

    /// Q-values for every action given an observation history.
    pub fn forward(&self, history: &ObservationHistory) -> Vec<f64> {
        self.forward_parts(history).q
    }

    /// Forward pass exposing the dueling decomposition.
    pub fn forward_parts(&self, history: &ObservationHistory) -> QOutput {
        let d = self.dims;
        assert_eq!(history.width(), d.input, "observation width mismatch");
        assert_eq!(history.len(), d.history, "history length mismatch");
        let h = d.hidden;
        let mut hidden = vec![0.0; h];
        let mut cell = vec![0.0; h];
        let mut z = vec![0.0; 4 * h];
        for t in 0..d.history {
            self.lstm_step(history.entry(t), &mut hidden, &mut cell, &mut z);
        }
        self.heads(&hidden)
    }

    /// One LSTM step; `z` is scratch for the packed gate pre-activations.
    /// On return `hidden`/`cell` hold the new state and `z` the
    /// post-activation gate values.
    fn lstm_step(&self, x: &[f64], hidden: &mut [f64], cell: &mut [f64], z: &mut [f64]) {
        let h = self.dims.hidden;
        let i_w = self.dims.input;
        for u in 0..4 * h {
            let wx = &self.w_x[u * i_w..(u + 1) * i_w];
            let wh = &self.w_h[u * h..(u + 1) * h];
            let mut acc = self.b[u];
            acc += dot(wx, x);
            acc += dot(wh, hidden);
            z[u] = acc;
        }
        let (zi, rest) = z.split_at_mut(h);
        let (zf, rest) = rest.split_at_mut(h);
        let (zg, zo) = rest.split_at_mut(h);
        for u in 0..h {
            let gi = sigmoid(zi[u]);
            let gf = sigmoid(zf[u]);
            let gg = zg[u].tanh();
            let go = sigmoid(zo[u]);
            cell[u] = gf * cell[u] + gi * gg;
            hidden[u] = go * cell[u].tanh();
            zi[u] = gi;
            zf[u] = gf;
            zg[u] = gg;
            zo[u] = go;
        }
    }

    fn heads(&self, hidden: &[f64]) -> QOutput {
        let d = self.dims.duel_hidden;
        let a = self.dims.actions;
        let mut vh = vec![0.0; d];
        let mut ah = vec![0.0; d];
        for j in 0..d {
            vh[j] = relu(self.value_b1[j] + dot(row(&self.value_w1, j, hidden.len()), hidden));
            ah[j] = relu(self.adv_b1[j] + dot(row(&self.adv_w1, j, hidden.len()), hidden));
        }
        let value = self.value_b2 + dot(&self.value_w2, &vh);
        let mut advantages = vec![0.0; a];
        for (k, adv) in advantages.iter_mut().enumerate() {
            *adv = self.adv_b2[k] + dot(row(&self.adv_w2, k, d), &ah);
        }
        let mean_adv = advantages.iter().sum::<f64>() / a as f64;
        let q = advantages.iter().map(|x| value + x - mean_adv).collect();
        QOutput {
            q,
            value,
            advantages,
        }
    }

    /// Greedy action: argmax over Q, ties broken by lowest index.
    pub fn greedy_action(&self, history: &ObservationHistory) -> usize {
        argmax(&self.forward(history))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn row(m: &[f64], r: usize, width: usize) -> &[f64] {
    &m[r * width..(r + 1) * width]
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dueling-head hidden activation.
#[inline]
fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Index of the maximum element; first occurrence wins.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Gradient accumulator with the same shape as the parameters.
#[derive(Debug, Clone)]
struct Gradients {
    flat: Vec<f64>,
}

/// Offsets of each tensor inside the flat layout.
#[derive(Debug, Clone, Copy)]
struct Offsets {
    w_x: usize,
    w_h: usize,
    b: usize,
    value_w1: usize,
    value_b1: usize,
    value_w2: usize,
    value_b2: usize,
    adv_w1: usize,
    adv_b1: usize,
    adv_w2: usize,
    adv_b2: usize,
}

impl Offsets {
    fn new(d: QNetDims) -> Self {
        let (i, h, dd, a) = (d.input, d.hidden, d.duel_hidden, d.actions);
        let w_x = 0;
        let w_h = w_x + 4 * h * i;
        let b = w_h + 4 * h * h;
        let value_w1 = b + 4 * h;
        let value_b1 = value_w1 + dd * h;
        let value_w2 = value_b1 + dd;
        let value_b2 = value_w2 + dd;
        let adv_w1 = value_b2 + 1;
        let adv_b1 = adv_w1 + dd * h;
        let adv_w2 = adv_b1 + dd;
        let adv_b2 = adv_w2 + a * dd;
        Offsets {
            w_x,
            w_h,
            b,
            value_w1,
            value_b1,
            value_w2,
            value_b2,
            adv_w1,
            adv_b1,
            adv_w2,
            adv_b2,
        }
    }
}

/// Reusable backpropagation-through-time workspace. One instance per agent;
/// cloneable so whole worlds can be forked cheaply.
#[derive(Debug, Clone)]
pub struct Trainer {
    dims: QNetDims,
    offsets: Offsets,
    grads: Gradients,
    // Per-step forward caches (history length x width each).
    gates: Vec<f64>,  // N x 4H, post-activation
    cells: Vec<f64>,  // N x H
    tanh_c: Vec<f64>, // N x H
    hiddens: Vec<f64>, // N x H
    // Backward scratch.
    dh: Vec<f64>,
    dc: Vec<f64>,
    dz: Vec<f64>,
}

impl Trainer {
    pub fn new(dims: QNetDims) -> Self {
        let h = dims.hidden;
        let n = dims.history;
        Trainer {
            dims,
            offsets: Offsets::new(dims),
            grads: Gradients {
                flat: vec![0.0; dims.param_count()],
            },
            gates: vec![0.0; n * 4 * h],
            cells: vec![0.0; n * h],
            tanh_c: vec![0.0; n * h],
            hiddens: vec![0.0; n * h],
            dh: vec![0.0; h],
            dc: vec![0.0; h],
            dz: vec![0.0; 4 * h],
        }
    }

    /// One Q-learning update. Computes the frozen bootstrap targets, takes a
    /// single gradient-descent step of size `lr` on the batch MSE (global
    /// gradient norm clipped to `grad_clip`), and returns the pre-update
    /// loss. A non-finite loss leaves the parameters untouched.
    pub fn train_step(
        &mut self,
        params: &mut QNetworkParams,
        batch: &[&TransitionRecord],
        gamma: f64,
        lr: f64,
        grad_clip: f64,
    ) -> Result<f64, DivergedLoss> {
        assert!(!batch.is_empty(), "empty minibatch");
        assert!((0.0..1.0).contains(&gamma), "gamma out of range");
        assert!(lr > 0.0, "non-positive learning rate");
        let targets: Vec<f64> = batch
            .iter()
            .map(|r| {
                let bootstrap = if gamma > 0.0 {
                    let q_next = params.forward(&r.next_history);
                    q_next[argmax(&q_next)]
                } else {
                    0.0
                };
                r.reward + gamma * bootstrap
            })
            .collect();
        let loss = self.loss_and_gradients(params, batch, &targets);
        if !loss.is_finite() {
            return Err(DivergedLoss(loss));
        }
        let norm = self.grads.flat.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if norm > grad_clip && norm > 0.0 {
            grad_clip / norm
        } else {
            1.0
        };
        let step = lr * scale;
        let mut flat = params.to_flat();
        for (p, g) in flat.iter_mut().zip(&self.grads.flat) {
            *p -= step * g;
        }
        params.set_from_flat(&flat);
        Ok(loss)
    }

    /// Batch MSE against fixed targets, accumulating analytic gradients into
    /// the internal buffer. Exposed (with [`Self::gradients_flat`] and
    /// [`batch_loss_fixed_targets`]) so the analytic gradient can be checked
    /// against finite differences of the same objective.
    pub fn loss_and_gradients(
        &mut self,
        params: &QNetworkParams,
        batch: &[&TransitionRecord],
        targets: &[f64],
    ) -> f64 {
        assert_eq!(batch.len(), targets.len());
        self.grads.flat.fill(0.0);
        let m = batch.len() as f64;
        let mut loss = 0.0;
        for (record, &target) in batch.iter().zip(targets) {
            let out = self.forward_cached(params, &record.history);
            let err = out.q[record.action] - target;
            loss += err * err;
            // d(batch MSE)/dq[action]
            let gq = 2.0 * err / m;
            self.backward(params, &record.history, record.action, gq);
        }
        loss / m
    }

    pub fn gradients_flat(&self) -> &[f64] {
        &self.grads.flat
    }

    /// Forward pass that fills the BPTT caches.
    fn forward_cached(&mut self, params: &QNetworkParams, history: &ObservationHistory) -> QOutput {
        let d = self.dims;
        let h = d.hidden;
        let mut hidden = vec![0.0; h];
        let mut cell = vec![0.0; h];
        for t in 0..d.history {
            let z = &mut self.gates[t * 4 * h..(t + 1) * 4 * h];
            params.lstm_step(history.entry(t), &mut hidden, &mut cell, z);
            self.cells[t * h..(t + 1) * h].copy_from_slice(&cell);
            for u in 0..h {
                self.tanh_c[t * h + u] = cell[u].tanh();
            }
            self.hiddens[t * h..(t + 1) * h].copy_from_slice(&hidden);
        }
        params.heads(&hidden)
    }

    /// Backpropagate d(loss)/dq[action] = `gq` through the heads and the
    /// unrolled LSTM, accumulating into `self.grads`.
    fn backward(&mut self, params: &QNetworkParams, history: &ObservationHistory, action: usize, gq: f64) {
        let d = self.dims;
        let (h, dd, a, n) = (d.hidden, d.duel_hidden, d.actions, d.history);
        let off = self.offsets;
        let g = &mut self.grads.flat;
        let h_final = &self.hiddens[(n - 1) * h..n * h];

        // Dueling combination: dq/dV = 1; dq/dAdv[a'] = delta - 1/A.
        let dv = gq;
        let inv_a = 1.0 / a as f64;

        // Recompute head hidden activations (cheap relative to caching them).
        let mut vh = vec![0.0; dd];
        let mut ah = vec![0.0; dd];
        for j in 0..dd {
            vh[j] = relu(params.value_b1[j] + dot(row(&params.value_w1, j, h), h_final));
            ah[j] = relu(params.adv_b1[j] + dot(row(&params.adv_w1, j, h), h_final));
        }

        self.dh.fill(0.0);
        // Value head.
        g[off.value_b2] += dv;
        for j in 0..dd {
            g[off.value_w2 + j] += dv * vh[j];
            if vh[j] <= 0.0 {
                continue; // inactive unit: no gradient past the kink
            }
            let dpre = dv * params.value_w2[j];
            g[off.value_b1 + j] += dpre;
            for (u, hf) in h_final.iter().enumerate() {
                g[off.value_w1 + j * h + u] += dpre * hf;
            }
            for (u, dhu) in self.dh.iter_mut().enumerate() {
                *dhu += dpre * params.value_w1[j * h + u];
            }
        }
        // Advantage head.
        let mut dah = vec![0.0; dd];
        for k in 0..a {
            let dadv = gq * (if k == action { 1.0 } else { 0.0 } - inv_a);
            g[off.adv_b2 + k] += dadv;
            for j in 0..dd {
                g[off.adv_w2 + k * dd + j] += dadv * ah[j];
                dah[j] += dadv * params.adv_w2[k * dd + j];
            }
        }
        for j in 0..dd {
            if ah[j] <= 0.0 {
                continue;
            }
            let dpre = dah[j];
            g[off.adv_b1 + j] += dpre;
            for (u, hf) in h_final.iter().enumerate() {
                g[off.adv_w1 + j * h + u] += dpre * hf;
            }
            for (u, dhu) in self.dh.iter_mut().enumerate() {
                *dhu += dpre * params.adv_w1[j * h + u];
            }
        }

        // Through time.
        self.dc.fill(0.0);
        for t in (0..n).rev() {
            let gates = &self.gates[t * 4 * h..(t + 1) * 4 * h];
            let (gi, rest) = gates.split_at(h);
            let (gf, rest) = rest.split_at(h);
            let (gg, go) = rest.split_at(h);
            let tc = &self.tanh_c[t * h..(t + 1) * h];
            for u in 0..h {
                let dho = self.dh[u];
                // Output gate and cell.
                let d_o = dho * tc[u];
                self.dc[u] += dho * go[u] * (1.0 - tc[u] * tc[u]);
                let c_prev = if t == 0 { 0.0 } else { self.cells[(t - 1) * h + u] };
                let d_i = self.dc[u] * gg[u];
                let d_f = self.dc[u] * c_prev;
                let d_g = self.dc[u] * gi[u];
                self.dz[GATE_INPUT * h + u] = d_i * gi[u] * (1.0 - gi[u]);
                self.dz[GATE_FORGET * h + u] = d_f * gf[u] * (1.0 - gf[u]);
                self.dz[GATE_CELL * h + u] = d_g * (1.0 - gg[u] * gg[u]);
                self.dz[GATE_OUTPUT * h + u] = d_o * go[u] * (1.0 - go[u]);
                // Cell carry to t-1.
                self.dc[u] *= gf[u];
            }
            let x = history.entry(t);
            let h_prev_start = if t == 0 { 0 } else { (t - 1) * h };
            for u in 0..4 * h {
                let dzu = self.dz[u];
                if dzu == 0.0 {
                    continue;
                }
                g[off.b + u] += dzu;
                let wx = off.w_x + u * d.input;
                for (j, xv) in x.iter().enumerate() {
                    g[wx + j] += dzu * xv;
                }
                if t > 0 {
                    let wh = off.w_h + u * h;
                    let h_prev = &self.hiddens[h_prev_start..h_prev_start + h];
                    for (j, hv) in h_prev.iter().enumerate() {
                        g[wh + j] += dzu * hv;
                    }
                }
            }
            // dh for t-1.
            self.dh.fill(0.0);
            if t > 0 {
                for u in 0..4 * h {
                    let dzu = self.dz[u];
                    if dzu == 0.0 {
                        continue;
                    }
                    let wh = &params.w_h[u * h..(u + 1) * h];
                    for (j, w) in wh.iter().enumerate() {
                        self.dh[j] += dzu * w;
                    }
                }
            }
        }
    }
}

/// Forward-only batch MSE against fixed targets. Finite-difference oracle
/// companion to [`Trainer::loss_and_gradients`].
pub fn batch_loss_fixed_targets(
    params: &QNetworkParams,
    batch: &[&TransitionRecord],
    targets: &[f64],
) -> f64 {
    assert_eq!(batch.len(), targets.len());
    let mut loss = 0.0;
    for (record, &target) in batch.iter().zip(targets) {
        let q = params.forward(&record.history);
        let err = q[record.action] - target;
        loss += err * err;
    }
    loss / batch.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeeder;

    fn small_dims() -> QNetDims {
        QNetDims {
            input: 4,
            hidden: 4,
            duel_hidden: 3,
            actions: 3,
            history: 3,
        }
    }

    fn random_history(dims: QNetDims, rng: &mut ChaCha8Rng) -> ObservationHistory {
        let mut h = ObservationHistory::zeros(dims.history, dims.input);
        for _ in 0..dims.history {
            let obs: Vec<f64> = (0..dims.input).map(|_| rng.gen_range(-1.0..1.0)).collect();
            h.push(&obs);
        }
        h
    }

    fn random_record(dims: QNetDims, rng: &mut ChaCha8Rng) -> TransitionRecord {
        let history = random_history(dims, rng);
        let mut next = history.clone();
        let obs: Vec<f64> = (0..dims.input).map(|_| rng.gen_range(-1.0..1.0)).collect();
        next.push(&obs);
        TransitionRecord {
            history,
            action: rng.gen_range(0..dims.actions),
            reward: rng.gen_range(-5.0..5.0),
            next_history: next,
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let dims = small_dims();
        let p = QNetworkParams::zeros(dims);
        let mut rng = StreamSeeder::new(1).stream("t");
        let h = random_history(dims, &mut rng);
        assert!(p.forward(&h).iter().all(|&q| q == 0.0));
    }

    #[test]
    fn dueling_identity() {
        let dims = small_dims();
        let mut rng = StreamSeeder::new(2).stream("t");
        for _ in 0..20 {
            let p = QNetworkParams::init(dims, &mut rng);
            let h = random_history(dims, &mut rng);
            let out = p.forward_parts(&h);
            let residual: f64 = out.q.iter().map(|q| q - out.value).sum();
            assert!(residual.abs() < 1e-9, "sum of (Q - V) = {residual}");
            // max_a Q == V + max_a Adv - mean Adv, by construction.
            let mean = out.advantages.iter().sum::<f64>() / dims.actions as f64;
            let max_adv = out.advantages.iter().cloned().fold(f64::MIN, f64::max);
            let max_q = out.q.iter().cloned().fold(f64::MIN, f64::max);
            assert!((max_q - (out.value + max_adv - mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn advantage_bias_shift_cancels() {
        let dims = small_dims();
        let mut rng = StreamSeeder::new(3).stream("t");
        let p = QNetworkParams::init(dims, &mut rng);
        let h = random_history(dims, &mut rng);
        let q0 = p.forward(&h);
        let mut shifted = p.clone();
        for b in &mut shifted.adv_b2 {
            *b += 0.37;
        }
        let q1 = shifted.forward(&h);
        for (a, b) in q0.iter().zip(&q1) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn clone_is_deep() {
        let dims = small_dims();
        let mut rng = StreamSeeder::new(4).stream("t");
        let mut p = QNetworkParams::init(dims, &mut rng);
        let copy = p.clone();
        p.w_x[0] += 1.0;
        assert_ne!(p.w_x[0], copy.w_x[0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let dims = small_dims();
        let mut rng = StreamSeeder::new(5).stream("t");
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let mut params = QNetworkParams::init(dims, &mut rng);
            // Larger weights than init exercise the nonlinear regions.
            let mut flat = params.to_flat();
            for w in &mut flat {
                *w += rng.gen_range(-0.4..0.4);
            }
            params.set_from_flat(&flat);
            let records: Vec<TransitionRecord> =
                (0..4).map(|_| random_record(dims, &mut rng)).collect();
            let batch: Vec<&TransitionRecord> = records.iter().collect();
            let targets: Vec<f64> = batch.iter().map(|r| r.reward).collect();

            let mut trainer = Trainer::new(dims);
            trainer.loss_and_gradients(&params, &batch, &targets);
            let analytic = trainer.gradients_flat().to_vec();

            let base = params.to_flat();
            for i in 0..base.len() {
                let mut plus = base.clone();
                plus[i] += eps;
                let mut minus = base.clone();
                minus[i] -= eps;
                let mut p_plus = params.clone();
                p_plus.set_from_flat(&plus);
                let mut p_minus = params.clone();
                p_minus.set_from_flat(&minus);
                let numeric = (batch_loss_fixed_targets(&p_plus, &batch, &targets)
                    - batch_loss_fixed_targets(&p_minus, &batch, &targets))
                    / (2.0 * eps);
                // The denominator floor keeps central-difference roundoff
                // (~1e-10 absolute here) from dominating near-zero
                // gradients; below the floor the test still demands 1e-8
                // absolute agreement.
                let denom = (analytic[i].abs() + numeric.abs()).max(1e-4);
                let rel = (analytic[i] - numeric).abs() / denom;
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "max relative gradient error {worst}");
    }

    #[test]
    fn zero_everything_is_a_fixed_point() {
        let dims = small_dims();
        let mut rng = StreamSeeder::new(6).stream("t");
        let mut params = QNetworkParams::zeros(dims);
        let mut record = random_record(dims, &mut rng);
        record.reward = 0.0;
        let before = params.to_flat();
        let mut trainer = Trainer::new(dims);
        let loss = trainer
            .train_step(&mut params, &[&record], 0.0, 0.1, 5.0)
            .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(params.to_flat(), before);
    }

    #[test]
    fn single_transition_converges_to_reward() {
        let dims = small_dims();
        let mut rng = StreamSeeder::new(7).stream("t");
        let mut params = QNetworkParams::init(dims, &mut rng);
        let mut record = random_record(dims, &mut rng);
        record.reward = 2.5;
        let mut trainer = Trainer::new(dims);
        let mut converged = false;
        for _ in 0..20_000 {
            trainer
                .train_step(&mut params, &[&record], 0.0, 0.05, 5.0)
                .unwrap();
            let q = params.forward(&record.history)[record.action];
            if (q - record.reward).abs() < 1e-3 {
                converged = true;
                break;
            }
        }
        assert!(converged, "Q did not reach the reward");
    }

    #[test]
    fn training_is_deterministic() {
        let dims = small_dims();
        let run = || {
            let mut rng = StreamSeeder::new(8).stream("t");
            let mut params = QNetworkParams::init(dims, &mut rng);
            let records: Vec<TransitionRecord> =
                (0..6).map(|_| random_record(dims, &mut rng)).collect();
            let batch: Vec<&TransitionRecord> = records.iter().collect();
            let mut trainer = Trainer::new(dims);
            for _ in 0..10 {
                trainer
                    .train_step(&mut params, &batch, 0.9, 0.05, 5.0)
                    .unwrap();
            }
            params.to_flat()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn gradient_clip_bounds_update() {
        let dims = small_dims();
        let mut rng = StreamSeeder::new(9).stream("t");
        let mut params = QNetworkParams::init(dims, &mut rng);
        let mut record = random_record(dims, &mut rng);
        record.reward = 1e6; // enormous target forces clipping
        let before = params.to_flat();
        let mut trainer = Trainer::new(dims);
        let lr = 0.1;
        let clip = 5.0;
        trainer
            .train_step(&mut params, &[&record], 0.0, lr, clip)
            .unwrap();
        let after = params.to_flat();
        let step_norm: f64 = before
            .iter()
            .zip(&after)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(step_norm <= lr * clip + 1e-9, "step norm {step_norm}");
    }
}
