use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LpStandardForm;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct PendingRow {
    terms: Vec<(usize, f64)>,
    rhs: f64,
    params: Vec<(usize, f64)>,
}

/// Incremental, index-based construction of an [`LpStandardForm`].
///
/// Rows are kept in declaration order within their block (≤ rows, then = rows).
/// `≥` rows are negated into `≤` rows, parameter terms included.
#[derive(Debug, Clone, Default)]
pub struct LpBuilder {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    cost_offset: f64,
    ineq: Vec<PendingRow>,
    eq: Vec<PendingRow>,
    param_dim: usize,
}

impl LpBuilder {
    pub fn new(param_dim: usize) -> Self {
        Self {
            param_dim,
            ..Default::default()
        }
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.push(cost);
        VarId(self.names.len() - 1)
    }

    pub fn add_cost(&mut self, var: VarId, cost: f64) {
        self.cost[var.0] += cost;
    }

    pub fn add_offset(&mut self, offset: f64) {
        self.cost_offset += offset;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        self.lower[var.0] = lower;
        self.upper[var.0] = upper;
    }

    /// Adds `Σ terms  (sense)  rhs + Σ coeff·M[slot]`. Returns the index of
    /// the row within its block.
    pub fn add_row(
        &mut self,
        terms: &[(VarId, f64)],
        sense: RowSense,
        rhs: f64,
        params: &[(usize, f64)],
    ) -> usize {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for &(v, a) in terms {
            match merged.iter_mut().find(|(j, _)| *j == v.0) {
                Some(entry) => entry.1 += a,
                None => merged.push((v.0, a)),
            }
        }
        let row = PendingRow {
            terms: merged,
            rhs,
            params: params.to_vec(),
        };
        match sense {
            RowSense::Le => {
                self.ineq.push(row);
                self.ineq.len() - 1
            }
            RowSense::Ge => {
                self.ineq.push(PendingRow {
                    terms: row.terms.iter().map(|&(j, a)| (j, -a)).collect(),
                    rhs: -row.rhs,
                    params: row.params.iter().map(|&(k, a)| (k, -a)).collect(),
                });
                self.ineq.len() - 1
            }
            RowSense::Eq => {
                self.eq.push(row);
                self.eq.len() - 1
            }
        }
    }

    pub fn build(&self) -> LpStandardForm {
        let n = self.n_vars();
        let p = self.param_dim;
        let block = |rows: &[PendingRow]| {
            let mut a = DMatrix::zeros(rows.len(), n);
            let mut b = DVector::zeros(rows.len());
            let mut jac = DMatrix::zeros(rows.len(), p);
            for (r, row) in rows.iter().enumerate() {
                for &(j, v) in &row.terms {
                    a[(r, j)] += v;
                }
                b[r] = row.rhs;
                for &(k, v) in &row.params {
                    jac[(r, k)] += v;
                }
            }
            (a, b, jac)
        };
        let (a_ineq, b_ineq, jac_ineq) = block(&self.ineq);
        let (a_eq, b_eq, jac_eq) = block(&self.eq);
        LpStandardForm {
            var_names: self.names.clone(),
            cost: DVector::from_vec(self.cost.clone()),
            cost_offset: self.cost_offset,
            a_ineq,
            b_ineq,
            jac_ineq,
            a_eq,
            b_eq,
            jac_eq,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            param_dim: p,
        }
    }
}

/// A named variable declaration. Missing bounds default to `[0, +∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSpec {
    pub name: String,
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
    #[serde(default)]
    pub cost: f64,
}

/// A named row: `Σ terms (sense) rhs + Σ param_terms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowSpec {
    pub terms: Vec<(String, f64)>,
    pub sense: RowSense,
    #[serde(default)]
    pub rhs: f64,
    /// `(parameter slot, coefficient)` pairs added to the right-hand side.
    #[serde(default)]
    pub params: Vec<(usize, f64)>,
}

/// Structured, name-based LP description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LpSpec {
    pub vars: Vec<VarSpec>,
    pub rows: Vec<RowSpec>,
    #[serde(default)]
    pub param_dim: usize,
    #[serde(default)]
    pub objective_offset: f64,
}

impl LpSpec {
    pub fn to_standard_form(&self) -> Result<LpStandardForm> {
        let mut builder = LpBuilder::new(self.param_dim);
        let mut ids: HashMap<&str, VarId> = HashMap::new();
        for v in &self.vars {
            let lower = v.lower.unwrap_or(0.0);
            let upper = v.upper.unwrap_or(f64::INFINITY);
            if lower > upper {
                return Err(Error::InvertedBounds {
                    name: v.name.clone(),
                    lower,
                    upper,
                });
            }
            if ids.contains_key(v.name.as_str()) {
                return Err(Error::DuplicateVariable(v.name.clone()));
            }
            ids.insert(&v.name, builder.add_var(v.name.clone(), lower, upper, v.cost));
        }
        for row in &self.rows {
            let mut terms = Vec::with_capacity(row.terms.len());
            for (name, a) in &row.terms {
                let id = ids
                    .get(name.as_str())
                    .ok_or_else(|| Error::UndeclaredVariable(name.clone()))?;
                terms.push((*id, *a));
            }
            if let Some(&(slot, _)) = row.params.iter().find(|(k, _)| *k >= self.param_dim) {
                return Err(Error::Dimension(format!(
                    "parameter slot {slot} outside param_dim {}",
                    self.param_dim
                )));
            }
            builder.add_row(&terms, row.sense, row.rhs, &row.params);
        }
        builder.add_offset(self.objective_offset);
        Ok(builder.build())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(name: &str, lower: Option<f64>) -> VarSpec {
        VarSpec {
            name: name.into(),
            lower,
            upper: None,
            cost: 1.0,
        }
    }

    #[test]
    fn ge_row_with_parameter_slot() {
        let spec = LpSpec {
            vars: vec![var("x", Some(f64::NEG_INFINITY))],
            rows: vec![RowSpec {
                terms: vec![("x".into(), 1.0)],
                sense: RowSense::Ge,
                rhs: 0.0,
                params: vec![(0, 1.0)],
            }],
            param_dim: 1,
            objective_offset: 0.0,
        };
        let lp = spec.to_standard_form().unwrap();
        assert_eq!(lp.a_ineq[(0, 0)], -1.0);
        assert_eq!(lp.jac_ineq[(0, 0)], -1.0);
        assert_eq!(lp.b_ineq[0], 0.0);
    }

    #[test]
    fn equality_transcribed() {
        let spec = LpSpec {
            vars: vec![var("x", None), var("y", None)],
            rows: vec![RowSpec {
                terms: vec![("x".into(), 2.0), ("y".into(), 1.0)],
                sense: RowSense::Eq,
                rhs: 5.0,
                params: vec![],
            }],
            ..Default::default()
        };
        let lp = spec.to_standard_form().unwrap();
        assert_eq!(lp.a_eq.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 1.0]);
        assert_eq!(lp.b_eq[0], 5.0);
        assert_eq!(lp.n_ineq(), 0);
    }

    #[test]
    fn rejects_bad_specs() {
        let dup = LpSpec {
            vars: vec![var("x", None), var("x", None)],
            ..Default::default()
        };
        assert!(matches!(dup.to_standard_form(), Err(Error::DuplicateVariable(n)) if n == "x"));

        let undeclared = LpSpec {
            vars: vec![var("x", None)],
            rows: vec![RowSpec {
                terms: vec![("z".into(), 1.0)],
                sense: RowSense::Le,
                rhs: 1.0,
                params: vec![],
            }],
            ..Default::default()
        };
        assert!(matches!(undeclared.to_standard_form(), Err(Error::UndeclaredVariable(n)) if n == "z"));

        let inverted = LpSpec {
            vars: vec![VarSpec {
                name: "x".into(),
                lower: Some(2.0),
                upper: Some(1.0),
                cost: 0.0,
            }],
            ..Default::default()
        };
        assert!(matches!(inverted.to_standard_form(), Err(Error::InvertedBounds { .. })));
    }

    #[test]
    fn repeated_terms_merge() {
        let mut b = LpBuilder::new(0);
        let x = b.add_var("x", 0.0, 1.0, 0.0);
        b.add_row(&[(x, 1.0), (x, 2.0)], RowSense::Le, 1.0, &[]);
        assert_eq!(b.build().a_ineq[(0, 0)], 3.0);
    }
}
