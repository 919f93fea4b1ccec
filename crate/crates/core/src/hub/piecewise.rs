//! Piecewise-linear input/output curves with explicit segment binaries.

use super::config::ConverterSpec;
use crate::error::{Error, Result};
use crate::lp::{LpBuilder, RowSense, VarId};

/// Breakpoints of the linearized curve: rated output `P_k` and input `F_k`,
/// `k = 0..=segments`, evenly spaced in load fraction from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseBlock {
    pub outputs: Vec<f64>,
    pub inputs: Vec<f64>,
    /// Load fractions and efficiencies of the source curve.
    pub curve: Vec<[f64; 2]>,
    pub capacity: f64,
}

/// Weight and selector variables of one emitted block.
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedBlock {
    pub weights: Vec<VarId>,
    /// Empty for a single segment, which needs no selection.
    pub selectors: Vec<VarId>,
}

fn efficiency_at(curve: &[[f64; 2]], frac: f64) -> f64 {
    if frac <= curve[0][0] {
        return curve[0][1];
    }
    for w in curve.windows(2) {
        if frac <= w[1][0] {
            let t = (frac - w[0][0]) / (w[1][0] - w[0][0]);
            return w[0][1] + t * (w[1][1] - w[0][1]);
        }
    }
    curve[curve.len() - 1][1]
}

pub fn piecewise_linearize(curve: &[[f64; 2]], capacity: f64, segments: usize) -> Result<PiecewiseBlock> {
    if segments < 1 {
        return Err(Error::Hub("piecewise linearization needs at least one segment".into()));
    }
    if curve.len() < 2 {
        return Err(Error::Hub("piecewise linearization needs at least two breakpoints".into()));
    }
    if curve.windows(2).any(|w| w[1][0] <= w[0][0]) || curve.iter().any(|p| p[1] <= 0.0) {
        return Err(Error::Hub("efficiency curve must be increasing in load with positive efficiency".into()));
    }
    let fmax = curve[curve.len() - 1][0];
    let mut outputs = Vec::with_capacity(segments + 1);
    let mut inputs = Vec::with_capacity(segments + 1);
    for k in 0..=segments {
        let f = fmax * k as f64 / segments as f64;
        let p = capacity * f;
        outputs.push(p);
        inputs.push(if k == 0 { 0.0 } else { p / efficiency_at(curve, f) });
    }
    Ok(PiecewiseBlock {
        outputs,
        inputs,
        curve: curve.to_vec(),
        capacity,
    })
}

pub fn linearize_converter(spec: &ConverterSpec) -> Result<PiecewiseBlock> {
    piecewise_linearize(&spec.efficiency_curve, spec.capacity, spec.segments)
}

impl PiecewiseBlock {
    pub fn segments(&self) -> usize {
        self.outputs.len() - 1
    }

    pub fn max_output(&self) -> f64 {
        self.outputs[self.segments()]
    }

    /// Input required by the source curve at rated output `p`.
    pub fn true_input(&self, p: f64) -> f64 {
        if p <= 0.0 {
            0.0
        } else {
            p / efficiency_at(&self.curve, p / self.capacity)
        }
    }

    /// Input of the linearized curve at rated output `p`.
    pub fn approx_input(&self, p: f64) -> f64 {
        let k = self
            .outputs
            .windows(2)
            .position(|w| p <= w[1])
            .unwrap_or(self.segments() - 1);
        let (p0, p1) = (self.outputs[k], self.outputs[k + 1]);
        let t = (p - p0) / (p1 - p0);
        self.inputs[k] + t * (self.inputs[k + 1] - self.inputs[k])
    }

    /// Adds weights `λ_k ∈ [0, 1]` with `Σλ = 1` and, for more than one
    /// segment, binaries `y_s` with `Σy = 1`, `λ_0 ≤ y_1`,
    /// `λ_k ≤ y_k + y_{k+1}`, `λ_S ≤ y_S`.
    pub fn emit(&self, b: &mut LpBuilder, prefix: &str) -> EmittedBlock {
        let s = self.segments();
        let weights: Vec<VarId> = (0..=s).map(|k| b.add_var(format!("{prefix}.w{k}"), 0.0, 1.0, 0.0)).collect();
        let all: Vec<(VarId, f64)> = weights.iter().map(|&w| (w, 1.0)).collect();
        b.add_row(&all, RowSense::Eq, 1.0, &[]);
        if s == 1 {
            return EmittedBlock {
                weights,
                selectors: Vec::new(),
            };
        }
        let selectors: Vec<VarId> = (1..=s).map(|k| b.add_var(format!("{prefix}.y{k}"), 0.0, 1.0, 0.0)).collect();
        let sel: Vec<(VarId, f64)> = selectors.iter().map(|&y| (y, 1.0)).collect();
        b.add_row(&sel, RowSense::Eq, 1.0, &[]);
        for k in 0..=s {
            let mut terms = vec![(weights[k], 1.0)];
            if k >= 1 {
                terms.push((selectors[k - 1], -1.0));
            }
            if k < s {
                terms.push((selectors[k], -1.0));
            }
            b.add_row(&terms, RowSense::Le, 0.0, &[]);
        }
        EmittedBlock { weights, selectors }
    }

    /// `Σ_k F_k λ_k`.
    pub fn input_terms(&self, e: &EmittedBlock) -> Vec<(VarId, f64)> {
        e.weights.iter().zip(&self.inputs).map(|(&w, &f)| (w, f)).collect()
    }

    /// `scale · Σ_k P_k λ_k`.
    pub fn output_terms(&self, e: &EmittedBlock, scale: f64) -> Vec<(VarId, f64)> {
        e.weights.iter().zip(&self.outputs).map(|(&w, &p)| (w, scale * p)).collect()
    }
}
