//! Peephole LSTM cell, stacked layers and backpropagation through time.
//!
//! Gate equations for one step, with `m` the hidden output and `c` the cell:
//!
//! ```text
//! i_t = sigmoid(W_ix x_t + W_im m_{t-1} + w_ic * c_{t-1} + b_i)
//! f_t = sigmoid(W_fx x_t + W_fm m_{t-1} + w_fc * c_{t-1} + b_f)
//! c_t = f_t * c_{t-1} + i_t * tanh(W_cx x_t + W_cm m_{t-1} + b_c)
//! o_t = sigmoid(W_ox x_t + W_om m_{t-1} + w_oc * c_t + b_o)
//! m_t = o_t * tanh(c_t)
//! ```
//!
//! Peephole weights `w_ic`, `w_fc`, `w_oc` are diagonal and act element-wise.

use rand::Rng;

use super::activation::sigmoid;
use super::dropout::{dropout, Mode};
use super::{Matrix, Parameterized};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub w_ix: Matrix,
    pub w_im: Matrix,
    pub w_ic: Matrix,
    pub b_i: Matrix,
    pub w_fx: Matrix,
    pub w_fm: Matrix,
    pub w_fc: Matrix,
    pub b_f: Matrix,
    pub w_cx: Matrix,
    pub w_cm: Matrix,
    pub b_c: Matrix,
    pub w_ox: Matrix,
    pub w_om: Matrix,
    pub w_oc: Matrix,
    pub b_o: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub m: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            m: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activations of one forward step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub m_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub o: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let mx = || Matrix::zeros(hidden, input);
        let mh = || Matrix::zeros(hidden, hidden);
        let v = || Matrix::zeros(hidden, 1);
        Self {
            w_ix: mx(),
            w_im: mh(),
            w_ic: v(),
            b_i: v(),
            w_fx: mx(),
            w_fm: mh(),
            w_fc: v(),
            b_f: v(),
            w_cx: mx(),
            w_cm: mh(),
            b_c: v(),
            w_ox: mx(),
            w_om: mh(),
            w_oc: v(),
            b_o: v(),
        }
    }

    /// Every entry uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` with
    /// `fan_in = input + hidden`.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden);
        let bound = 1.0 / ((input + hidden) as f64).sqrt();
        for t in p.tensors_mut() {
            *t = Matrix::uniform(t.rows(), t.cols(), bound, rng);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_ix.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_ix.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim())
    }

    fn check_shapes(&self) -> Result<()> {
        let (h, n) = (self.hidden_dim(), self.input_dim());
        for (name, t) in self.named() {
            let expect = match name.as_bytes()[name.len() - 1] {
                b'x' => (h, n),
                b'm' => (h, h),
                _ => (h, 1),
            };
            if t.shape() != expect {
                return Err(Error::Shape(format!(
                    "{name} is {:?}, expected {expect:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, &Matrix); 15] {
        [
            ("w_ix", &self.w_ix),
            ("w_im", &self.w_im),
            ("w_ic", &self.w_ic),
            ("b_i", &self.b_i),
            ("w_fx", &self.w_fx),
            ("w_fm", &self.w_fm),
            ("w_fc", &self.w_fc),
            ("b_f", &self.b_f),
            ("w_cx", &self.w_cx),
            ("w_cm", &self.w_cm),
            ("b_c", &self.b_c),
            ("w_ox", &self.w_ox),
            ("w_om", &self.w_om),
            ("w_oc", &self.w_oc),
            ("b_o", &self.b_o),
        ]
    }
}

impl Parameterized for LstmCellParams {
    fn tensors(&self) -> Vec<&Matrix> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_ix,
            &mut self.w_im,
            &mut self.w_ic,
            &mut self.b_i,
            &mut self.w_fx,
            &mut self.w_fm,
            &mut self.w_fc,
            &mut self.b_f,
            &mut self.w_cx,
            &mut self.w_cm,
            &mut self.b_c,
            &mut self.w_ox,
            &mut self.w_om,
            &mut self.w_oc,
            &mut self.b_o,
        ]
    }
}

fn pre_activation(wx: &Matrix, wm: &Matrix, b: &Matrix, x: &[f64], m: &[f64]) -> Vec<f64> {
    let mut a = b.as_slice().to_vec();
    wx.matvec_acc(x, &mut a);
    wm.matvec_acc(m, &mut a);
    a
}

/// One step of the peephole LSTM.
pub fn lstm_cell_forward(
    x: &[f64],
    prev: &LstmState,
    p: &LstmCellParams,
) -> Result<(LstmState, LstmCache)> {
    let h = p.hidden_dim();
    if x.len() != p.input_dim() || prev.m.len() != h || prev.c.len() != h {
        return Err(Error::Shape(format!(
            "lstm cell ({} -> {h}) given input {} and state ({}, {})",
            p.input_dim(),
            x.len(),
            prev.m.len(),
            prev.c.len()
        )));
    }
    let c_prev = &prev.c;

    let mut i = pre_activation(&p.w_ix, &p.w_im, &p.b_i, x, &prev.m);
    let mut f = pre_activation(&p.w_fx, &p.w_fm, &p.b_f, x, &prev.m);
    let mut g = pre_activation(&p.w_cx, &p.w_cm, &p.b_c, x, &prev.m);
    let mut o = pre_activation(&p.w_ox, &p.w_om, &p.b_o, x, &prev.m);
    let (w_ic, w_fc, w_oc) = (p.w_ic.as_slice(), p.w_fc.as_slice(), p.w_oc.as_slice());

    let mut c = vec![0.0; h];
    let mut tanh_c = vec![0.0; h];
    let mut m = vec![0.0; h];
    for k in 0..h {
        i[k] = sigmoid(i[k] + w_ic[k] * c_prev[k]);
        f[k] = sigmoid(f[k] + w_fc[k] * c_prev[k]);
        g[k] = g[k].tanh();
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        o[k] = sigmoid(o[k] + w_oc[k] * c[k]);
        tanh_c[k] = c[k].tanh();
        m[k] = o[k] * tanh_c[k];
    }

    let cache = LstmCache {
        x: x.to_vec(),
        m_prev: prev.m.clone(),
        c_prev: c_prev.clone(),
        i,
        f,
        g,
        c: c.clone(),
        o,
        tanh_c,
    };
    Ok((LstmState { m, c }, cache))
}

/// Gradients flowing out of one backward cell step.
#[derive(Debug, Clone)]
pub struct CellGrads {
    pub dx: Vec<f64>,
    pub dm_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

/// Reverse-mode step: `dm` and `dc` are the total gradients on `m_t` and
/// `c_t` (the latter from step `t + 1` only). Parameter gradients are added
/// into `grads`.
pub fn lstm_cell_backward(
    dm: &[f64],
    dc_next: &[f64],
    cache: &LstmCache,
    p: &LstmCellParams,
    grads: &mut LstmCellParams,
) -> CellGrads {
    let h = p.hidden_dim();
    let mut da_i = vec![0.0; h];
    let mut da_f = vec![0.0; h];
    let mut da_g = vec![0.0; h];
    let mut da_o = vec![0.0; h];
    let mut dc_prev = vec![0.0; h];
    let (w_ic, w_fc, w_oc) = (p.w_ic.as_slice(), p.w_fc.as_slice(), p.w_oc.as_slice());

    for k in 0..h {
        let (i, f, g, o, tc) = (
            cache.i[k],
            cache.f[k],
            cache.g[k],
            cache.o[k],
            cache.tanh_c[k],
        );
        let d_o = dm[k] * tc;
        da_o[k] = d_o * o * (1.0 - o);
        let dc = dc_next[k] + dm[k] * o * (1.0 - tc * tc) + da_o[k] * w_oc[k];
        let di = dc * g;
        let df = dc * cache.c_prev[k];
        let dg = dc * i;
        da_i[k] = di * i * (1.0 - i);
        da_f[k] = df * f * (1.0 - f);
        da_g[k] = dg * (1.0 - g * g);
        dc_prev[k] = dc * f + da_i[k] * w_ic[k] + da_f[k] * w_fc[k];
    }

    let gate_terms: [(&[f64], &Matrix, &Matrix); 4] = [
        (&da_i, &p.w_ix, &p.w_im),
        (&da_f, &p.w_fx, &p.w_fm),
        (&da_g, &p.w_cx, &p.w_cm),
        (&da_o, &p.w_ox, &p.w_om),
    ];
    let mut dx = vec![0.0; p.input_dim()];
    let mut dm_prev = vec![0.0; h];
    for (da, wx, wm) in gate_terms {
        wx.matvec_t_acc(da, &mut dx);
        wm.matvec_t_acc(da, &mut dm_prev);
    }

    grads.w_ix.add_outer(&da_i, &cache.x);
    grads.w_im.add_outer(&da_i, &cache.m_prev);
    grads.b_i.add_vec(&da_i);
    grads.w_fx.add_outer(&da_f, &cache.x);
    grads.w_fm.add_outer(&da_f, &cache.m_prev);
    grads.b_f.add_vec(&da_f);
    grads.w_cx.add_outer(&da_g, &cache.x);
    grads.w_cm.add_outer(&da_g, &cache.m_prev);
    grads.b_c.add_vec(&da_g);
    grads.w_ox.add_outer(&da_o, &cache.x);
    grads.w_om.add_outer(&da_o, &cache.m_prev);
    grads.b_o.add_vec(&da_o);
    for (k, v) in grads.w_ic.as_mut_slice().iter_mut().enumerate() {
        *v += da_i[k] * cache.c_prev[k];
    }
    for (k, v) in grads.w_fc.as_mut_slice().iter_mut().enumerate() {
        *v += da_f[k] * cache.c_prev[k];
    }
    for (k, v) in grads.w_oc.as_mut_slice().iter_mut().enumerate() {
        *v += da_o[k] * cache.c[k];
    }

    CellGrads {
        dx,
        dm_prev,
        dc_prev,
    }
}

/// Backpropagation through time for one layer.
///
/// `loss_grads[t]` is the gradient of the loss with respect to `m_t` coming
/// from outside the recurrence. `resets[t]` marks steps whose incoming state
/// was reset to zero, which cuts the recurrent gradient there. Returns the
/// gradient with respect to each step's input.
pub fn lstm_sequence_backward(
    loss_grads: &[Vec<f64>],
    caches: &[LstmCache],
    resets: &[bool],
    p: &LstmCellParams,
    grads: &mut LstmCellParams,
) -> Result<Vec<Vec<f64>>> {
    if caches.len() != loss_grads.len() {
        return Err(Error::Shape(format!(
            "{} upstream gradients but {} cached steps",
            loss_grads.len(),
            caches.len()
        )));
    }
    let h = p.hidden_dim();
    let mut dm_rec = vec![0.0; h];
    let mut dc_rec = vec![0.0; h];
    let mut dxs = vec![Vec::new(); caches.len()];
    for t in (0..caches.len()).rev() {
        let dm: Vec<f64> = loss_grads[t]
            .iter()
            .zip(&dm_rec)
            .map(|(a, b)| a + b)
            .collect();
        let step = lstm_cell_backward(&dm, &dc_rec, &caches[t], p, grads);
        dxs[t] = step.dx;
        if resets.get(t).copied().unwrap_or(false) {
            dm_rec.iter_mut().for_each(|v| *v = 0.0);
            dc_rec.iter_mut().for_each(|v| *v = 0.0);
        } else {
            dm_rec = step.dm_prev;
            dc_rec = step.dc_prev;
        }
    }
    Ok(dxs)
}

/// Stacked LSTM layers; layer `l > 0` consumes `dropout(relu(m^{l-1}))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStack {
    pub layers: Vec<LstmCellParams>,
}

/// Forward activations of a whole stack over a sequence.
#[derive(Debug, Clone)]
pub struct StackCache {
    /// `caches[layer][t]`
    pub caches: Vec<Vec<LstmCache>>,
    /// Dropout multipliers applied to layer `l + 1`'s input, `masks[l][t]`.
    pub masks: Vec<Vec<Vec<f64>>>,
    pub resets: Vec<bool>,
}

impl LstmStack {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, layers: usize, rng: &mut R) -> Self {
        let layers = (0..layers)
            .map(|l| LstmCellParams::init(if l == 0 { input } else { hidden }, hidden, rng))
            .collect();
        Self { layers }
    }

    pub fn zeros(input: usize, hidden: usize, layers: usize) -> Self {
        let layers = (0..layers)
            .map(|l| LstmCellParams::zeros(if l == 0 { input } else { hidden }, hidden))
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| l.zeros_like()).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.hidden_dim())
    }

    pub fn zero_state(&self) -> Vec<LstmState> {
        self.layers
            .iter()
            .map(|l| LstmState::zeros(l.hidden_dim()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("LSTM stack has no layers".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            layer.check_shapes()?;
            if l > 0 && layer.input_dim() != self.layers[l - 1].hidden_dim() {
                return Err(Error::Shape(format!(
                    "layer {l} input {} does not match previous hidden {}",
                    layer.input_dim(),
                    self.layers[l - 1].hidden_dim()
                )));
            }
        }
        Ok(())
    }

    /// Runs the stack over `inputs` from `init` states. When `resets[t]` is
    /// set, every layer restarts from the zero state before step `t`.
    /// Dropout between layers is active only when `dropout` is given.
    pub fn forward_sequence(
        &self,
        inputs: &[Vec<f64>],
        init: &[LstmState],
        resets: &[bool],
        mut dropout_cfg: Option<(f64, &mut dyn rand::RngCore)>,
    ) -> Result<(Vec<Vec<f64>>, Vec<LstmState>, StackCache)> {
        if init.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "{} initial states for {} layers",
                init.len(),
                self.layers.len()
            )));
        }
        let resets: Vec<bool> = (0..inputs.len())
            .map(|t| resets.get(t).copied().unwrap_or(false))
            .collect();
        let mut layer_input: Vec<Vec<f64>> = inputs.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut finals = Vec::with_capacity(self.layers.len());

        for (l, layer) in self.layers.iter().enumerate() {
            let mut state = init[l].clone();
            let mut layer_caches = Vec::with_capacity(inputs.len());
            let mut outputs = Vec::with_capacity(inputs.len());
            for (t, x) in layer_input.iter().enumerate() {
                if resets[t] {
                    state = LstmState::zeros(layer.hidden_dim());
                }
                let (next, cache) = lstm_cell_forward(x, &state, layer)?;
                outputs.push(next.m.clone());
                layer_caches.push(cache);
                state = next;
            }
            finals.push(state);
            caches.push(layer_caches);

            if l + 1 < self.layers.len() {
                let mut next_input = Vec::with_capacity(outputs.len());
                let mut layer_masks = Vec::with_capacity(outputs.len());
                for m in &outputs {
                    let relu: Vec<f64> = m.iter().map(|v| v.max(0.0)).collect();
                    let (out, mask) = match dropout_cfg.as_mut() {
                        Some((rate, rng)) => dropout(&relu, *rate, Mode::Train, &mut **rng)?,
                        None => (relu.clone(), vec![1.0; relu.len()]),
                    };
                    next_input.push(out);
                    layer_masks.push(mask);
                }
                masks.push(layer_masks);
                layer_input = next_input;
            } else {
                layer_input = outputs;
            }
        }
        Ok((
            layer_input,
            finals,
            StackCache {
                caches,
                masks,
                resets,
            },
        ))
    }

    /// Backpropagates gradients on the top layer's outputs through the whole
    /// stack and returns the gradients on the stack's inputs.
    pub fn backward_sequence(
        &self,
        d_top: &[Vec<f64>],
        cache: &StackCache,
        grads: &mut LstmStack,
    ) -> Result<Vec<Vec<f64>>> {
        if cache.caches.len() != self.layers.len() || grads.layers.len() != self.layers.len() {
            return Err(Error::Shape("stack cache does not match the model".into()));
        }
        let mut upstream: Vec<Vec<f64>> = d_top.to_vec();
        for l in (0..self.layers.len()).rev() {
            let dx = lstm_sequence_backward(
                &upstream,
                &cache.caches[l],
                &cache.resets,
                &self.layers[l],
                &mut grads.layers[l],
            )?;
            if l == 0 {
                return Ok(dx);
            }
            // through dropout and relu back onto layer l-1's m_t
            upstream = dx
                .iter()
                .zip(&cache.masks[l - 1])
                .zip(&cache.caches[l - 1])
                .map(|((d, mask), below)| {
                    d.iter()
                        .zip(mask)
                        .zip(&below_m(below))
                        .map(|((d, k), m)| if *m > 0.0 { d * k } else { 0.0 })
                        .collect()
                })
                .collect();
        }
        Ok(Vec::new())
    }
}

fn below_m(cache: &LstmCache) -> Vec<f64> {
    cache
        .o
        .iter()
        .zip(&cache.tanh_c)
        .map(|(o, t)| o * t)
        .collect()
}

impl Parameterized for LstmStack {
    fn tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.tensors_mut())
            .collect()
    }
}
