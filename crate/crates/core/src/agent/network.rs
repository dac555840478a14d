//! Shared actor-critic: two tanh embedding layers, one LSTM cell, and
//! actor/critic heads. The actor also adds, to the logit of each BS, a
//! learned weighting of that BS's own three input features. All users of all environments use one parameter
//! set; per-user recurrent state lives outside the parameters.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Observation;

use super::mask::{masked_softmax, top_n_mask};

/// Network dimensions: `input = 3 |B|`, `actions = |B|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub hidden: usize,
    pub actions: usize,
}

impl NetShape {
    pub fn for_base_stations(n_bs: usize, hidden: usize) -> Self {
        NetShape {
            input: 3 * n_bs,
            hidden,
            actions: n_bs,
        }
    }

    /// (name, rows, cols) of every tensor in storage order. Biases are
    /// single-row matrices.
    pub fn tensors(&self) -> [(&'static str, usize, usize); 12] {
        let (d, h, a) = (self.input, self.hidden, self.actions);
        [
            ("embed1.weight", d, h),
            ("embed1.bias", 1, h),
            ("embed2.weight", h, h),
            ("embed2.bias", 1, h),
            ("lstm.input_weight", h, 4 * h),
            ("lstm.hidden_weight", h, 4 * h),
            ("lstm.bias", 1, 4 * h),
            ("actor.weight", h, a),
            ("actor.bias", 1, a),
            ("critic.weight", h, 1),
            ("critic.bias", 1, 1),
            ("actor.feature_weight", 1, FEATURES_PER_BS),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.1 * t.2).sum()
    }
}

pub(crate) const W1: usize = 0;
pub(crate) const B1: usize = 1;
pub(crate) const W2: usize = 2;
pub(crate) const B2: usize = 3;
pub(crate) const WX: usize = 4;
pub(crate) const WH: usize = 5;
pub(crate) const BL: usize = 6;
pub(crate) const WA: usize = 7;
pub(crate) const BA: usize = 8;
pub(crate) const WV: usize = 9;
pub(crate) const BV: usize = 10;
pub(crate) const WF: usize = 11;

/// Input features per BS: relative SINR, load, serving flag.
pub const FEATURES_PER_BS: usize = 3;

/// Parameters stored in one flat buffer; also used for gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    shape: NetShape,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(shape: NetShape) -> Self {
        let mut offsets = Vec::with_capacity(13);
        let mut off = 0;
        for (_, r, c) in shape.tensors() {
            offsets.push(off);
            off += r * c;
        }
        offsets.push(off);
        PolicyParams {
            shape,
            offsets,
            data: vec![0.0; off],
        }
    }

    /// Glorot-uniform weights, zero biases except a forget-gate bias of 1;
    /// the actor head starts small so the first policy is near uniform.
    pub fn init<R: Rng + ?Sized>(shape: NetShape, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        for (k, (_, r, c)) in shape.tensors().into_iter().enumerate() {
            if r == 1 {
                continue;
            }
            let gain = match k {
                WA => 0.01,
                _ => 1.0,
            };
            let lim = gain * (6.0 / (r + c) as f64).sqrt();
            for w in p.slice_mut(k) {
                *w = rng.random_range(-lim..lim);
            }
        }
        let h = shape.hidden;
        p.view_mut(BL).slice_mut(s![0, h..2 * h]).fill(1.0);
        p
    }

    pub fn from_data(shape: NetShape, data: Vec<f64>) -> Option<Self> {
        let mut p = Self::zeros(shape);
        if data.len() != p.data.len() {
            return None;
        }
        p.data = data;
        Some(p)
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.data[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn view(&self, k: usize) -> ArrayView2<'_, f64> {
        let (_, r, c) = self.shape.tensors()[k];
        ArrayView2::from_shape((r, c), self.slice(k)).expect("layout")
    }

    pub fn view_mut(&mut self, k: usize) -> ArrayViewMut2<'_, f64> {
        let (_, r, c) = self.shape.tensors()[k];
        ArrayViewMut2::from_shape((r, c), self.slice_mut(k)).expect("layout")
    }

    fn bias(&self, k: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(self.slice(k))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_scaled(&mut self, other: &PolicyParams, scale: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Network input for one observation, written into `out` (length `3 |B|`):
/// `log10` SINR relative to the serving BS (the strongest BS when there is
/// none), clamped to +-5; `ln(1 + load) / 2`; one-hot previous association.
pub fn featurize_into(obs: &Observation, out: &mut [f64]) {
    let n = obs.sinr.len();
    debug_assert_eq!(out.len(), 3 * n);
    let lg = |s: f64| s.max(1e-30).log10();
    let reference = match obs.prev_assoc {
        Some(j) => lg(obs.sinr[j]),
        None => obs.sinr.iter().map(|&s| lg(s)).fold(f64::NEG_INFINITY, f64::max),
    };
    for j in 0..n {
        out[j] = (lg(obs.sinr[j]) - reference).clamp(-5.0, 5.0);
        out[n + j] = (obs.prev_loads[j] as f64).ln_1p() / 2.0;
        out[2 * n + j] = if obs.prev_assoc == Some(j) { 1.0 } else { 0.0 };
    }
}

pub fn featurize(obs: &Observation) -> Vec<f64> {
    let mut v = vec![0.0; 3 * obs.sinr.len()];
    featurize_into(obs, &mut v);
    v
}

/// Activations of one batched recurrent step, kept for backprop.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Array2<f64>,
    pub e1: Array2<f64>,
    pub e2: Array2<f64>,
    /// gate activations, columns `[i | f | g | o]`
    pub gates: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub c_prev: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
    pub logits: Array2<f64>,
    pub values: Array1<f64>,
}

impl PolicyParams {
    /// One recurrent step for a batch of rows.
    pub fn step(&self, x: Array2<f64>, h_prev: Array2<f64>, c_prev: Array2<f64>) -> StepCache {
        let hd = self.shape.hidden;
        let mut e1 = x.dot(&self.view(W1)) + &self.bias(B1);
        e1.mapv_inplace(f64::tanh);
        let mut e2 = e1.dot(&self.view(W2)) + &self.bias(B2);
        e2.mapv_inplace(f64::tanh);
        let mut gates = e2.dot(&self.view(WX)) + h_prev.dot(&self.view(WH)) + &self.bias(BL);
        gates.slice_mut(s![.., 0..2 * hd]).mapv_inplace(sigmoid);
        gates.slice_mut(s![.., 2 * hd..3 * hd]).mapv_inplace(f64::tanh);
        gates.slice_mut(s![.., 3 * hd..]).mapv_inplace(sigmoid);
        let i = gates.slice(s![.., 0..hd]);
        let f = gates.slice(s![.., hd..2 * hd]);
        let g = gates.slice(s![.., 2 * hd..3 * hd]);
        let o = gates.slice(s![.., 3 * hd..]);
        let c = &f * &c_prev + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        let h = &o * &tanh_c;
        let mut logits = h.dot(&self.view(WA)) + &self.bias(BA);
        let na = self.shape.actions;
        for (f, &u) in self.slice(WF).iter().enumerate() {
            logits.scaled_add(u, &x.slice(s![.., f * na..(f + 1) * na]));
        }
        let values = (h.dot(&self.view(WV)) + &self.bias(BV)).index_axis_move(Axis(1), 0);
        StepCache {
            x,
            e1,
            e2,
            gates,
            h_prev,
            c_prev,
            c,
            tanh_c,
            h,
            logits,
            values,
        }
    }
}

/// Per-user recurrent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Memory {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl Memory {
    pub fn zeros(hidden: usize) -> Self {
        Memory {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Masked action distributions and values for a batch of users.
#[derive(Debug, Clone)]
pub struct PolicyOutput {
    pub probs: Array2<f64>,
    pub logp: Array2<f64>,
    pub entropy: Vec<f64>,
    pub values: Vec<f64>,
    pub memory: Vec<Memory>,
}

impl PolicyParams {
    /// Batched forward pass over observations, their recurrent state and
    /// action masks. Masked actions get probability exactly 0.
    pub fn forward(&self, obs: &[Observation], memory: &[Memory], masks: &[Vec<bool>]) -> PolicyOutput {
        let n = obs.len();
        let sh = self.shape;
        let mut x = Array2::zeros((n, sh.input));
        let mut h = Array2::zeros((n, sh.hidden));
        let mut c = Array2::zeros((n, sh.hidden));
        for k in 0..n {
            featurize_into(&obs[k], x.row_mut(k).as_slice_mut().expect("contiguous"));
            h.row_mut(k).assign(&ArrayView1::from(&memory[k].h));
            c.row_mut(k).assign(&ArrayView1::from(&memory[k].c));
        }
        self.forward_features(x, h, c, masks)
    }

    pub fn forward_features(&self, x: Array2<f64>, h: Array2<f64>, c: Array2<f64>, masks: &[Vec<bool>]) -> PolicyOutput {
        let n = x.nrows();
        let a = self.shape.actions;
        let st = self.step(x, h, c);
        let mut probs = Array2::zeros((n, a));
        let mut logp = Array2::zeros((n, a));
        let mut entropy = Vec::with_capacity(n);
        for k in 0..n {
            let e = masked_softmax(
                st.logits.row(k).as_slice().expect("contiguous"),
                &masks[k],
                probs.row_mut(k).into_slice().expect("contiguous"),
                logp.row_mut(k).into_slice().expect("contiguous"),
            );
            entropy.push(e);
        }
        let memory = (0..n)
            .map(|k| Memory {
                h: st.h.row(k).to_vec(),
                c: st.c.row(k).to_vec(),
            })
            .collect();
        PolicyOutput {
            probs,
            logp,
            entropy,
            values: st.values.to_vec(),
            memory,
        }
    }
}

/// Draw from a discrete distribution by inversion; zero-probability
/// entries are never returned.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = j;
            if u < acc {
                return j;
            }
        }
    }
    last
}

/// Index of the most probable action, lowest index on ties.
pub fn greedy_index(probs: &[f64]) -> usize {
    crate::env::argmax(probs)
}

/// Masks for a batch of observations.
pub fn masks_for(obs: &[Observation], n: usize) -> Vec<Vec<bool>> {
    obs.iter().map(|o| top_n_mask(&o.sinr, n)).collect()
}

/// One sampled decision per user.
#[derive(Debug, Clone)]
pub struct ActOutput {
    pub actions: Vec<usize>,
    pub logp: Vec<f64>,
    pub values: Vec<f64>,
    pub entropy: Vec<f64>,
    pub memory: Vec<Memory>,
}

impl PolicyParams {
    /// Sample an action per user from the masked policy.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[Observation], memory: &[Memory], masks: &[Vec<bool>], rng: &mut R) -> ActOutput {
        let out = self.forward(obs, memory, masks);
        let mut actions = Vec::with_capacity(obs.len());
        let mut logp = Vec::with_capacity(obs.len());
        for k in 0..obs.len() {
            let j = sample_index(out.probs.row(k).as_slice().expect("contiguous"), rng);
            actions.push(j);
            logp.push(out.logp[[k, j]]);
        }
        ActOutput {
            actions,
            logp,
            values: out.values,
            entropy: out.entropy,
            memory: out.memory,
        }
    }
}
