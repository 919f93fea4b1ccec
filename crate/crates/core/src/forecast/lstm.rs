//! Single-layer LSTM with a linear head producing one day of hourly loads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hub::HOURS;

/// Gate order used everywhere: forget, input, output, candidate.
pub const GATES: usize = 4;
const F: usize = 0;
const I: usize = 1;
const O: usize = 2;
const G: usize = 3;

/// Per-sector min-max scaling to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    pub fn fit(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !min.is_finite() {
            return Self { min: 0.0, max: 1.0 };
        }
        Self { min, max }
    }

    pub fn span(&self) -> f64 {
        let s = self.max - self.min;
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    pub fn scale(&self, kw: f64) -> f64 {
        (kw - self.min) / self.span()
    }

    pub fn unscale(&self, v: f64) -> f64 {
        self.min + self.span() * v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden: usize,
    /// `hidden × input_dim`, one per gate.
    pub w_x: [DMatrix<f64>; GATES],
    /// `hidden × hidden`, one per gate.
    pub w_h: [DMatrix<f64>; GATES],
    pub b: [DVector<f64>; GATES],
    /// `24 × hidden`.
    pub head_w: DMatrix<f64>,
    pub head_b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: DVector<f64>,
    pub c: DVector<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: DVector::zeros(hidden),
            c: DVector::zeros(hidden),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let m = |r, c| DMatrix::zeros(r, c);
        Self {
            input_dim,
            hidden,
            w_x: std::array::from_fn(|_| m(hidden, input_dim)),
            w_h: std::array::from_fn(|_| m(hidden, hidden)),
            b: std::array::from_fn(|_| DVector::zeros(hidden)),
            head_w: m(HOURS, hidden),
            head_b: DVector::zeros(HOURS),
        }
    }

    /// Uniform in `±1/√hidden`.
    pub fn init(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(input_dim, hidden);
        let a = 1.0 / (hidden as f64).sqrt();
        let mut flat = p.to_flat();
        for v in flat.iter_mut() {
            *v = rng.gen_range(-a..=a);
        }
        p.set_flat(&flat).expect("length matches");
        p
    }

    pub fn n_params(&self) -> usize {
        let h = self.hidden;
        GATES * (h * self.input_dim + h * h + h) + HOURS * h + HOURS
    }

    /// Layout: `W_x[f,i,o,g]`, `W_h[f,i,o,g]`, `b[f,i,o,g]`, head weights,
    /// head bias; matrices row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        let push_m = |out: &mut Vec<f64>, m: &DMatrix<f64>| {
            for r in 0..m.nrows() {
                out.extend(m.row(r).iter());
            }
        };
        for m in &self.w_x {
            push_m(&mut out, m);
        }
        for m in &self.w_h {
            push_m(&mut out, m);
        }
        for b in &self.b {
            out.extend(b.iter());
        }
        push_m(&mut out, &self.head_w);
        out.extend(self.head_b.iter());
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Forecast(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        let mut fill_m = |m: &mut DMatrix<f64>| {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    m[(r, c)] = it.next().unwrap();
                }
            }
        };
        for m in self.w_x.iter_mut() {
            fill_m(m);
        }
        for m in self.w_h.iter_mut() {
            fill_m(m);
        }
        let mut bias = DMatrix::zeros(GATES, self.hidden);
        fill_m(&mut bias);
        fill_m(&mut self.head_w);
        let mut hb = DMatrix::zeros(1, HOURS);
        fill_m(&mut hb);
        for (k, b) in self.b.iter_mut().enumerate() {
            *b = bias.row(k).transpose();
        }
        self.head_b = hb.row(0).transpose();
        Ok(())
    }

    pub fn from_flat(input_dim: usize, hidden: usize, flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(input_dim, hidden);
        p.set_flat(flat)?;
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// `self − lr·grad`.
    pub fn step(&mut self, grad: &LstmParams, lr: f64) {
        for k in 0..GATES {
            self.w_x[k] -= &grad.w_x[k] * lr;
            self.w_h[k] -= &grad.w_h[k] * lr;
            self.b[k] -= &grad.b[k] * lr;
        }
        self.head_w -= &grad.head_w * lr;
        self.head_b -= &grad.head_b * lr;
    }

    pub fn add_scaled(&mut self, other: &LstmParams, a: f64) {
        self.step(other, -a);
    }
}

/// Gate activations of one cell step.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTrace {
    pub x: DVector<f64>,
    pub h_prev: DVector<f64>,
    pub c_prev: DVector<f64>,
    /// `[F, I, O, g]` after their nonlinearities.
    pub gates: [DVector<f64>; GATES],
    pub c: DVector<f64>,
    pub tanh_c: DVector<f64>,
}

/// One step: `F = σ(W_xf x + W_hf h + b_f)`, likewise `I`, `O`,
/// `g = tanh(W_xg x + W_hg h + b_g)`, `c = F⊗c_prev + I⊗g`,
/// `h = O⊗tanh(c)`. Returns the new state and `y = h`.
pub fn lstm_cell_forward(
    x: &DVector<f64>,
    prev: &LstmState,
    p: &LstmParams,
) -> Result<(LstmState, DVector<f64>)> {
    let tr = cell_trace(x, prev, p)?;
    let h = tr.gates[O].component_mul(&tr.tanh_c);
    Ok((LstmState { h: h.clone(), c: tr.c }, h))
}

fn cell_trace(x: &DVector<f64>, prev: &LstmState, p: &LstmParams) -> Result<CellTrace> {
    if x.len() != p.input_dim || prev.h.len() != p.hidden || prev.c.len() != p.hidden {
        return Err(Error::Forecast(format!(
            "cell expects input {} and state {}, got {} and {}/{}",
            p.input_dim,
            p.hidden,
            x.len(),
            prev.h.len(),
            prev.c.len()
        )));
    }
    let pre = |k: usize| &p.w_x[k] * x + &p.w_h[k] * &prev.h + &p.b[k];
    let gates = [
        pre(F).map(sigmoid),
        pre(I).map(sigmoid),
        pre(O).map(sigmoid),
        pre(G).map(f64::tanh),
    ];
    let c = gates[F].component_mul(&prev.c) + gates[I].component_mul(&gates[G]);
    let tanh_c = c.map(f64::tanh);
    Ok(CellTrace {
        x: x.clone(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        gates,
        c,
        tanh_c,
    })
}

/// Everything `backward_day` needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DayCache {
    pub steps: Vec<CellTrace>,
    pub h_last: DVector<f64>,
    /// Head output before de-normalization.
    pub raw: DVector<f64>,
    /// Forecast in kW after clamping at zero.
    pub forecast: Vec<f64>,
    /// `true` where the forecast was clamped.
    pub clamped: Vec<bool>,
    pub norm: Normalization,
}

/// Runs the cell over the `window × input_dim` feature rows from a zero
/// state and maps the last hidden state to 24 loads in kW.
pub fn forward_day(window: &DMatrix<f64>, p: &LstmParams, norm: &Normalization, expected_rows: usize) -> Result<DayCache> {
    if window.nrows() != expected_rows || window.ncols() != p.input_dim {
        return Err(Error::Forecast(format!(
            "window is {}×{}, expected {expected_rows}×{}",
            window.nrows(),
            window.ncols(),
            p.input_dim
        )));
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(Error::Forecast("non-finite value in features".into()));
    }
    let mut state = LstmState::zeros(p.hidden);
    let mut steps = Vec::with_capacity(window.nrows());
    for r in 0..window.nrows() {
        let x = window.row(r).transpose();
        let tr = cell_trace(&x, &state, p)?;
        state = LstmState {
            h: tr.gates[O].component_mul(&tr.tanh_c),
            c: tr.c.clone(),
        };
        steps.push(tr);
    }
    let raw = &p.head_w * &state.h + &p.head_b;
    let mut forecast = Vec::with_capacity(HOURS);
    let mut clamped = Vec::with_capacity(HOURS);
    for &v in raw.iter() {
        let kw = norm.unscale(v);
        clamped.push(kw < 0.0);
        forecast.push(kw.max(0.0));
    }
    Ok(DayCache {
        steps,
        h_last: state.h,
        raw,
        forecast,
        clamped,
        norm: *norm,
    })
}

/// Gradient of `forecastᵀ·d_forecast` (forecast in kW) with respect to
/// every parameter, by backpropagation through time.
pub fn backward_day(cache: &DayCache, p: &LstmParams, d_forecast: &[f64]) -> Result<LstmParams> {
    if d_forecast.len() != HOURS {
        return Err(Error::Forecast(format!("expected {HOURS} output gradients, got {}", d_forecast.len())));
    }
    if cache.steps.is_empty() || cache.h_last.len() != p.hidden {
        return Err(Error::Forecast("forward cache does not match these parameters".into()));
    }
    let span = cache.norm.span();
    let d_raw = DVector::from_iterator(
        HOURS,
        d_forecast
            .iter()
            .zip(&cache.clamped)
            .map(|(&g, &cl)| if cl { 0.0 } else { g * span }),
    );
    backward_raw(cache, p, &d_raw)
}

/// Same as [`backward_day`] with the gradient given on the normalized head
/// output (clamping already applied by the caller).
pub fn backward_raw(cache: &DayCache, p: &LstmParams, d_raw: &DVector<f64>) -> Result<LstmParams> {
    let mut g = LstmParams::zeros(p.input_dim, p.hidden);
    g.head_w = d_raw * cache.h_last.transpose();
    g.head_b = d_raw.clone();
    let mut dh = p.head_w.transpose() * d_raw;
    let mut dc = DVector::zeros(p.hidden);
    for tr in cache.steps.iter().rev() {
        let [f, i, o, gg] = &tr.gates;
        let d_o = dh.component_mul(&tr.tanh_c);
        dc += dh.component_mul(o).component_mul(&tr.tanh_c.map(|t| 1.0 - t * t));
        let d_f = dc.component_mul(&tr.c_prev);
        let d_i = dc.component_mul(gg);
        let d_g = dc.component_mul(i);
        let da = [
            d_f.component_mul(&f.map(|v| v * (1.0 - v))),
            d_i.component_mul(&i.map(|v| v * (1.0 - v))),
            d_o.component_mul(&o.map(|v| v * (1.0 - v))),
            d_g.component_mul(&gg.map(|v| 1.0 - v * v)),
        ];
        let mut dh_prev = DVector::zeros(p.hidden);
        for k in 0..GATES {
            g.w_x[k] += &da[k] * tr.x.transpose();
            g.w_h[k] += &da[k] * tr.h_prev.transpose();
            g.b[k] += &da[k];
            dh_prev += p.w_h[k].transpose() * &da[k];
        }
        dc = dc.component_mul(f);
        dh = dh_prev;
    }
    Ok(g)
}
