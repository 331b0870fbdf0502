//! LSTM cell with a forget gate: single-sample step plus batched
//! forward/backward passes over whole sequences.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which nonlinearity is used for the candidate and for squashing the cell
/// state before the output gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Activation {
    /// Logistic sigmoid on the candidate and the output.
    Sigmoid,
    #[default]
    StandardTanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::StandardTanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::StandardTanh => 1.0 - y * y,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" | "standard_tanh" | "standard" => Ok(Activation::StandardTanh),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Output = 2,
    Candidate = 3,
}

/// Gate weights stacked in the order forget, input, output, candidate:
/// `w` is `4h x d`, `u` is `4h x h`, `b` has `4h` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmCellParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            w: Array2::zeros((4 * hidden, input)),
            u: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    /// Uniform in `+-1/sqrt(h)`.
    pub fn random<R: Rng>(hidden: usize, input: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(hidden, input);
        for v in p.w.iter_mut().chain(p.u.iter_mut()).chain(p.b.iter_mut()) {
            *v = rng.random_range(-k..k);
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.u.ncols()
    }

    pub fn input(&self) -> usize {
        self.w.ncols()
    }

    fn rows(&self, g: Gate) -> std::ops::Range<usize> {
        let h = self.hidden();
        g as usize * h..(g as usize + 1) * h
    }

    pub fn gate_w(&self, g: Gate) -> ArrayView2<'_, f64> {
        self.w.slice(s![self.rows(g), ..])
    }

    pub fn gate_u(&self, g: Gate) -> ArrayView2<'_, f64> {
        self.u.slice(s![self.rows(g), ..])
    }

    pub fn gate_b(&self, g: Gate) -> ndarray::ArrayView1<'_, f64> {
        self.b.slice(s![self.rows(g)])
    }

    pub fn set_gate(&mut self, g: Gate, w: &Array2<f64>, u: &Array2<f64>, b: &Array1<f64>) {
        let r = self.rows(g);
        self.w.slice_mut(s![r.clone(), ..]).assign(w);
        self.u.slice_mut(s![r.clone(), ..]).assign(u);
        self.b.slice_mut(s![r]).assign(b);
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.u).chain(&self.b).all(|v| v.is_finite())
    }
}

/// Gate values of one step, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGates {
    pub forget: Array1<f64>,
    pub input: Array1<f64>,
    pub output: Array1<f64>,
    pub candidate: Array1<f64>,
}

/// One step for a single sample; returns `(h_t, c_t, gates)`.
pub fn cell_step(
    params: &LstmCellParams,
    activation: Activation,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, StepGates)> {
    let (h, d) = (params.hidden(), params.input());
    for (what, want, got) in [("input", d, x.len()), ("h_prev", h, h_prev.len()), ("c_prev", h, c_prev.len())] {
        if want != got {
            return Err(Error::DimensionMismatch {
                context: what_static(what),
                expected: want,
                got,
            });
        }
    }
    let z = params.w.dot(&Array1::from(x.to_vec())) + params.u.dot(&Array1::from(h_prev.to_vec())) + &params.b;
    let f = z.slice(s![0..h]).mapv(sigmoid);
    let i = z.slice(s![h..2 * h]).mapv(sigmoid);
    let o = z.slice(s![2 * h..3 * h]).mapv(sigmoid);
    let g = z.slice(s![3 * h..4 * h]).mapv(|v| activation.apply(v));
    let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let hn: Vec<f64> = (0..h).map(|k| o[k] * activation.apply(c[k])).collect();
    Ok((
        hn,
        c,
        StepGates {
            forget: f,
            input: i,
            output: o,
            candidate: g,
        },
    ))
}

fn what_static(what: &str) -> &'static str {
    match what {
        "input" => "cell input",
        "h_prev" => "previous hidden state",
        _ => "previous cell state",
    }
}

/// Activations cached by [`forward`] for backpropagation.
#[derive(Debug, Clone)]
pub struct SequenceCache {
    /// Inputs per step, each `B x d`.
    pub xs: Vec<Array2<f64>>,
    /// Hidden states `h_0..h_T`, each `B x h` (`h_0` is zero).
    pub hs: Vec<Array2<f64>>,
    /// Cell states `c_0..c_T`.
    pub cs: Vec<Array2<f64>>,
    /// Activated gates per step, `B x 4h`.
    gates: Vec<Array2<f64>>,
    /// Squashed cell states per step.
    squashed: Vec<Array2<f64>>,
}

impl SequenceCache {
    pub fn last_hidden(&self) -> &Array2<f64> {
        self.hs.last().expect("h_0 always present")
    }
}

/// Runs the cell over `xs` (one `B x d` matrix per step) from zero state.
pub fn forward(params: &LstmCellParams, activation: Activation, xs: Vec<Array2<f64>>) -> SequenceCache {
    let h = params.hidden();
    let batch = xs.first().map_or(0, |x| x.nrows());
    let mut hs = vec![Array2::zeros((batch, h))];
    let mut cs = vec![Array2::zeros((batch, h))];
    let mut gates = Vec::with_capacity(xs.len());
    let mut squashed = Vec::with_capacity(xs.len());
    let wt = params.w.t();
    let ut = params.u.t();
    for x in &xs {
        let mut z = x.dot(&wt) + hs.last().unwrap().dot(&ut);
        z += &params.b;
        let c_prev = cs.last().unwrap();
        let mut c = Array2::zeros((batch, h));
        let mut sq = Array2::zeros((batch, h));
        let mut hn = Array2::zeros((batch, h));
        for r in 0..batch {
            let mut zr = z.row_mut(r);
            for k in 0..3 * h {
                zr[k] = sigmoid(zr[k]);
            }
            for k in 3 * h..4 * h {
                zr[k] = activation.apply(zr[k]);
            }
            for k in 0..h {
                let cv = zr[k] * c_prev[[r, k]] + zr[h + k] * zr[3 * h + k];
                let sv = activation.apply(cv);
                c[[r, k]] = cv;
                sq[[r, k]] = sv;
                hn[[r, k]] = zr[2 * h + k] * sv;
            }
        }
        gates.push(z);
        cs.push(c);
        squashed.push(sq);
        hs.push(hn);
    }
    SequenceCache {
        xs,
        hs,
        cs,
        gates,
        squashed,
    }
}

/// Backpropagates `dh_ext[t]` (loss gradient w.r.t. `h_{t+1}`, `None` when a
/// step has no direct loss term) through time, accumulating into `grad`.
pub fn backward(
    params: &LstmCellParams,
    activation: Activation,
    cache: &SequenceCache,
    dh_ext: &[Option<Array2<f64>>],
    grad: &mut LstmCellParams,
) {
    let h = params.hidden();
    let steps = cache.xs.len();
    let batch = cache.hs[0].nrows();
    let mut dh_next: Array2<f64> = Array2::zeros((batch, h));
    let mut dc_next: Array2<f64> = Array2::zeros((batch, h));
    let mut dz = Array2::zeros((batch, 4 * h));
    for t in (0..steps).rev() {
        let a = &cache.gates[t];
        let sq = &cache.squashed[t];
        let c_prev = &cache.cs[t];
        if let Some(ext) = &dh_ext[t] {
            dh_next += ext;
        }
        for r in 0..batch {
            for k in 0..h {
                let (f, i, o, g) = (a[[r, k]], a[[r, h + k]], a[[r, 2 * h + k]], a[[r, 3 * h + k]]);
                let dh = dh_next[[r, k]];
                let s = sq[[r, k]];
                let dc = dc_next[[r, k]] + dh * o * activation.grad_from_output(s);
                dz[[r, k]] = dc * c_prev[[r, k]] * f * (1.0 - f);
                dz[[r, h + k]] = dc * g * i * (1.0 - i);
                dz[[r, 2 * h + k]] = dh * s * o * (1.0 - o);
                dz[[r, 3 * h + k]] = dc * i * activation.grad_from_output(g);
                dc_next[[r, k]] = dc * f;
            }
        }
        let dzt = dz.t();
        grad.w += &dzt.dot(&cache.xs[t]);
        grad.u += &dzt.dot(&cache.hs[t]);
        grad.b += &dz.sum_axis(Axis(0));
        dh_next = dz.dot(&params.u);
    }
}
