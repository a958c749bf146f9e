//! Exact error of approximation by linear programming.
//!
//! The simplex is run on the dual form: maximize `Σ w(x) h(x)` over signed
//! point weights with `Σ |w| ≤ 1` and zero mass on every class of every
//! factor. Its optimal weights are an annihilating functional attaining the
//! error, and its simplex multipliers are the optimal per-class components of
//! the primal problem `min t s.t. |h − Σ c_i∘class_i| ≤ t`. The class-0 row of
//! every factor after the first is dropped, which fixes the constant shared by
//! all algebras at `c_i(0) = 0` for `i ≥ 1`.

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::Result;
use crate::levelling::{lift, FactorFunction, Field};
use crate::simplex::{self, LinearProgram, SimplexError, SimplexOptions};

/// Tolerance for the primal norm check.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Tolerance for annihilation, dual norm and duality gap checks.
pub const DUALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleStatus {
    Optimal,
    InfeasibleImpossible,
    NumericalTrouble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub error: f64,
    /// One value vector per factor.
    #[serde(with = "component_values")]
    pub components: Vec<FactorFunction>,
    pub dual_weights: Vec<f64>,
    pub status: OracleStatus,
    #[serde(default, skip_serializing)]
    pub pivots: usize,
}

mod component_values {
    use super::FactorFunction;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(c: &[FactorFunction], s: S) -> Result<S::Ok, S::Error> {
        c.iter().map(|f| &f.values).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<FactorFunction>, D::Error> {
        let v: Vec<Vec<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter()
            .enumerate()
            .map(|(factor, values)| FactorFunction { factor, values })
            .collect())
    }
}

impl OracleResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// `h − Σ lift(components)`.
    pub fn residual(&self, d: &Domain, h: &Field) -> Result<Field> {
        let mut r = h.clone();
        for c in &self.components {
            r = r.sub(&lift(c, d)?);
        }
        Ok(r)
    }
}

/// Error of approximation from the sum of the first two factor algebras.
pub fn lp_exact_error(d: &Domain, h: &Field) -> Result<OracleResult> {
    let two = if d.num_factors() == 2 {
        d.clone()
    } else {
        d.select_factors(&[0, 1])?
    };
    n_factor_error(&two, h)
}

/// Error of approximation from the sum of all factor algebras of `d`.
pub fn n_factor_error(d: &Domain, h: &Field) -> Result<OracleResult> {
    n_factor_error_with(d, h, &SimplexOptions::default())
}

pub fn n_factor_error_with(d: &Domain, h: &Field, opts: &SimplexOptions) -> Result<OracleResult> {
    h.check(d)?;
    let p = d.num_points();
    // (factor, class) for each class row
    let class_rows: Vec<(usize, usize)> = (0..d.num_factors())
        .flat_map(|i| {
            let start = usize::from(i > 0);
            (start..d.class_counts()[i]).map(move |c| (i, c))
        })
        .collect();
    let cols = 2 * p + 1;
    let mut rows = Vec::with_capacity(class_rows.len() + 1);
    for &(i, c) in &class_rows {
        let mut row = vec![0.0; cols];
        for &x in d.members(i, c) {
            row[x] = 1.0;
            row[p + x] = -1.0;
        }
        rows.push(row);
    }
    rows.push(vec![1.0; cols]);
    let mut rhs = vec![0.0; class_rows.len()];
    rhs.push(1.0);
    let mut costs: Vec<f64> = h.values().iter().map(|v| -v).collect();
    costs.extend(h.values().iter().copied());
    costs.push(0.0);

    let zero_components = || -> Vec<FactorFunction> {
        (0..d.num_factors())
            .map(|i| FactorFunction::zeros(d, i))
            .collect()
    };
    let sol = match simplex::solve(&LinearProgram { costs, rows, rhs }, opts) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("oracle LP failed: {e}");
            let status = match e {
                SimplexError::Infeasible(_) | SimplexError::Unbounded => {
                    OracleStatus::InfeasibleImpossible
                }
                _ => OracleStatus::NumericalTrouble,
            };
            return Ok(OracleResult {
                error: f64::NAN,
                components: zero_components(),
                dual_weights: vec![0.0; p],
                status,
                pivots: 0,
            });
        }
    };
    let mut components = zero_components();
    for (&(i, c), y) in class_rows.iter().zip(&sol.duals) {
        components[i].values[c] = -y;
    }
    let dual_weights = (0..p).map(|x| sol.x[x] - sol.x[p + x]).collect();
    Ok(OracleResult {
        error: (-sol.objective).max(0.0),
        components,
        dual_weights,
        status: OracleStatus::Optimal,
        pivots: sol.pivots,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum CertificateCheck {
    Pass,
    Fail(String),
}

impl CertificateCheck {
    pub fn passed(&self) -> bool {
        matches!(self, CertificateCheck::Pass)
    }
}

/// Recheck an oracle result from scratch: primal norm, annihilation of every
/// class indicator, dual norm, and the duality gap.
pub fn verify_certificate(d: &Domain, h: &Field, r: &OracleResult) -> CertificateCheck {
    use CertificateCheck::Fail;
    if r.status != OracleStatus::Optimal {
        return Fail(format!("status {:?}", r.status));
    }
    if r.dual_weights.len() != d.num_points() || h.len() != d.num_points() {
        return Fail("length mismatch".into());
    }
    if r.components.len() != d.num_factors() {
        return Fail("component count mismatch".into());
    }
    let residual = match r.residual(d, h) {
        Ok(v) => v,
        Err(e) => return Fail(format!("components: {e}")),
    };
    let norm = residual.sup_norm();
    if (norm - r.error).abs() > FEASIBILITY_TOL {
        return Fail(format!(
            "primal norm mismatch: ‖h − Σ components‖ = {norm}, error = {}",
            r.error
        ));
    }
    for i in 0..d.num_factors() {
        for c in 0..d.class_counts()[i] {
            let mass: f64 = d.members(i, c).iter().map(|&x| r.dual_weights[x]).sum();
            if mass.abs() > DUALITY_TOL {
                return Fail(format!(
                    "annihilation: factor {i} class {c} carries mass {mass:e}"
                ));
            }
        }
    }
    let l1: f64 = r.dual_weights.iter().map(|w| w.abs()).sum();
    if l1 > 1.0 + DUALITY_TOL {
        return Fail(format!("dual norm {l1} exceeds 1"));
    }
    let value: f64 = r
        .dual_weights
        .iter()
        .zip(h.values())
        .map(|(w, v)| w * v)
        .sum();
    if (value.abs() - r.error).abs() > DUALITY_TOL {
        return Fail(format!(
            "duality gap: |Σ w·h| = {}, error = {}",
            value.abs(),
            r.error
        ));
    }
    CertificateCheck::Pass
}
