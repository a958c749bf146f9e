//! Midrange proximity operators and the alternating levelling iteration.
//!
//! For a factor `i`, the proximity operator replaces a field by its best
//! uniform constant on every class: `(max + min) / 2`. Levelling subtracts
//! that correction from the residual, one factor at a time. With two factors
//! and strict alternation the residual norms decrease to the error of
//! approximation; with more factors the same loop applies the cyclic product
//! of the single-factor corrections.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};

/// Real value per point, index-aligned with point ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Field(pub Vec<f64>);

impl Field {
    /// Check length and finiteness against a domain.
    pub fn new(d: &Domain, values: Vec<f64>) -> Result<Field> {
        let f = Field(values);
        f.check(d)?;
        Ok(f)
    }

    pub fn zeros(d: &Domain) -> Field {
        Field(vec![0.0; d.num_points()])
    }

    pub fn check(&self, d: &Domain) -> Result<()> {
        if self.0.len() != d.num_points() {
            return Err(Error::FieldLength {
                got: self.0.len(),
                expected: d.num_points(),
            });
        }
        if let Some(j) = self.0.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(j));
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.0)
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        Field(self.0.iter().map(|v| alpha * v).collect())
    }

    pub fn add(&self, other: &Field) -> Field {
        Field(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Field) -> Field {
        Field(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// Parse a JSON array of reals, or CSV with header `id,value`.
    pub fn parse(text: &str) -> Result<Field> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('[') {
            return Ok(Field(serde_json::from_str(trimmed)?));
        }
        #[derive(Deserialize)]
        struct Row {
            id: usize,
            value: f64,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["id", "value"] {
            return Err(Error::Schema(format!(
                "field CSV header must be `id,value`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows: Vec<Row> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        rows.sort_by_key(|r| r.id);
        for (j, r) in rows.iter().enumerate() {
            if r.id != j {
                return Err(Error::Schema(format!("field CSV ids must be 0..n, missing {j}")));
            }
        }
        Ok(Field(rows.into_iter().map(|r| r.value).collect()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Field> {
        let mut s = String::new();
        std::fs::File::open(path)?.read_to_string(&mut s)?;
        Field::parse(&s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.0)?)
    }
}

pub fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// Real value per class of one factor: an element of that factor's algebra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorFunction {
    pub factor: usize,
    pub values: Vec<f64>,
}

impl FactorFunction {
    pub fn zeros(d: &Domain, factor: usize) -> FactorFunction {
        FactorFunction {
            factor,
            values: vec![0.0; d.class_counts()[factor]],
        }
    }

    pub fn check(&self, d: &Domain) -> Result<()> {
        d.check_factor(self.factor)?;
        let expected = d.class_counts()[self.factor];
        if self.values.len() != expected {
            return Err(Error::ClassCountMismatch {
                factor: self.factor,
                got: self.values.len(),
                expected,
            });
        }
        if let Some(j) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(j));
        }
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    fn add_assign(&mut self, other: &FactorFunction) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }
}

/// View a factor function as a field on the whole domain.
pub fn lift(ff: &FactorFunction, d: &Domain) -> Result<Field> {
    ff.check(d)?;
    Ok(lift_unchecked(ff, d))
}

fn lift_unchecked(ff: &FactorFunction, d: &Domain) -> Field {
    Field(d.factor(ff.factor).iter().map(|&c| ff.values[c]).collect())
}

/// Per-class midrange `(max + min) / 2` of `h` on the level sets of `factor`.
pub fn proximity_op(h: &Field, d: &Domain, factor: usize) -> Result<FactorFunction> {
    d.check_factor(factor)?;
    h.check(d)?;
    Ok(midrange(h, d, factor))
}

fn midrange(h: &Field, d: &Domain, factor: usize) -> FactorFunction {
    let k = d.class_counts()[factor];
    let mut hi = vec![f64::NEG_INFINITY; k];
    let mut lo = vec![f64::INFINITY; k];
    for (&c, &v) in d.factor(factor).iter().zip(&h.0) {
        hi[c] = hi[c].max(v);
        lo[c] = lo[c].min(v);
    }
    FactorFunction {
        factor,
        values: hi.iter().zip(&lo).map(|(a, b)| 0.5 * (a + b)).collect(),
    }
}

/// `| ‖h − Fh − f‖ − ‖h − Fh + f‖ |` for the proximity operator `F` of
/// `ff.factor`. Zero up to rounding because every levelled class has
/// `max = −min`.
pub fn central_symmetry_gap(d: &Domain, h: &Field, ff: &FactorFunction) -> Result<f64> {
    ff.check(d)?;
    let fh = proximity_op(h, d, ff.factor)?;
    let levelled = h.sub(&lift_unchecked(&fh, d));
    let f = lift_unchecked(ff, d);
    Ok((levelled.sub(&f).sup_norm() - levelled.add(&f).sup_norm()).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    /// Stop once the norm drops by less than `tol` over `window` steps.
    pub tol: f64,
    pub window: usize,
    pub max_steps: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            tol: 1e-9,
            window: 8,
            max_steps: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxSteps,
}

/// Residual recomputation period, in steps.
const RESYNC_PERIOD: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevellingState {
    /// The approximated function `h`.
    pub target: Field,
    pub residual: Field,
    /// Accumulated correction per factor; `target = residual + Σ lift`.
    pub components: Vec<FactorFunction>,
    pub step_count: usize,
    /// `‖h‖` followed by the residual norm after every step.
    pub norm_history: Vec<f64>,
    /// Factor visit order, repeated cyclically by [`run_levelling`].
    pub schedule: Vec<usize>,
    /// Factor used at each step.
    pub visited: Vec<usize>,
    /// Every correction `q_n`, when recording is enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrections: Option<Vec<FactorFunction>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
}

impl LevellingState {
    pub fn new(d: &Domain, h: &Field) -> Result<LevellingState> {
        h.check(d)?;
        Ok(LevellingState {
            target: h.clone(),
            residual: h.clone(),
            components: (0..d.num_factors())
                .map(|i| FactorFunction::zeros(d, i))
                .collect(),
            step_count: 0,
            norm_history: vec![h.sup_norm()],
            schedule: (0..d.num_factors()).collect(),
            visited: Vec::new(),
            corrections: None,
            termination: None,
        })
    }

    pub fn recording(mut self) -> Self {
        self.corrections = Some(Vec::new());
        self
    }

    pub fn norm(&self) -> f64 {
        *self.norm_history.last().expect("history starts with ‖h‖")
    }

    /// One levelling step on `factor`.
    pub fn step(&mut self, d: &Domain, factor: usize) -> Result<()> {
        d.check_factor(factor)?;
        let q = midrange(&self.residual, d, factor);
        for (r, &c) in self.residual.0.iter_mut().zip(d.factor(factor)) {
            *r -= q.values[c];
        }
        self.components[factor].add_assign(&q);
        if let Some(h) = self.corrections.as_mut() {
            h.push(q);
        }
        self.step_count += 1;
        self.visited.push(factor);
        if self.step_count % RESYNC_PERIOD == 0 {
            self.resync(d);
        }
        self.norm_history.push(self.residual.sup_norm());
        Ok(())
    }

    /// Recompute the residual as `h − Σ lift(components)`.
    fn resync(&mut self, d: &Domain) {
        let mut r = self.target.clone();
        for c in &self.components {
            for (v, &k) in r.0.iter_mut().zip(d.factor(c.factor)) {
                *v -= c.values[k];
            }
        }
        self.residual = r;
    }

    /// `‖h − residual − Σ lift(components)‖`.
    pub fn conservation_error(&self, d: &Domain) -> f64 {
        let mut r = self.target.sub(&self.residual);
        for c in &self.components {
            for (v, &k) in r.0.iter_mut().zip(d.factor(c.factor)) {
                *v -= c.values[k];
            }
        }
        r.sup_norm()
    }

    /// Number of steps after which the norm is within `tol` of its final value.
    pub fn effective_steps(&self, tol: f64) -> usize {
        let last = self.norm();
        self.norm_history
            .iter()
            .position(|&v| v - last <= tol)
            .unwrap_or(0)
    }

    /// The approximant `h − residual`.
    pub fn approximant(&self) -> Field {
        self.target.sub(&self.residual)
    }
}

/// Apply one step to a state, returning the updated state.
pub fn levelling_step(mut st: LevellingState, d: &Domain, factor: usize) -> Result<LevellingState> {
    st.step(d, factor)?;
    Ok(st)
}

/// Run cyclic levelling over all factors in index order.
pub fn run_levelling(d: &Domain, h: &Field, stop: &StoppingRule) -> Result<LevellingState> {
    let schedule: Vec<usize> = (0..d.num_factors()).collect();
    run_levelling_with(d, h, stop, &schedule, false, |_| {})
}

/// Run levelling along a cyclic `schedule`, calling `observe` after every step.
pub fn run_levelling_with<F>(
    d: &Domain,
    h: &Field,
    stop: &StoppingRule,
    schedule: &[usize],
    record: bool,
    mut observe: F,
) -> Result<LevellingState>
where
    F: FnMut(&LevellingState),
{
    if schedule.is_empty() {
        return Err(Error::Schema("empty factor schedule".into()));
    }
    for &f in schedule {
        d.check_factor(f)?;
    }
    let window = stop.window.max(1);
    let max_steps = stop.max_steps.max(1);
    let mut st = LevellingState::new(d, h)?;
    if record {
        st = st.recording();
    }
    st.schedule = schedule.to_vec();
    loop {
        let factor = schedule[st.step_count % schedule.len()];
        st.step(d, factor)?;
        observe(&st);
        let k = st.step_count;
        if k >= window && st.norm_history[k - window] - st.norm_history[k] < stop.tol {
            st.termination = Some(Termination::Converged);
            break;
        }
        if k >= max_steps {
            st.termination = Some(Termination::MaxSteps);
            break;
        }
    }
    Ok(st)
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub factor: usize,
    pub norm: f64,
    pub lower_bound: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{generate_domain, Region};

    fn grid2() -> Domain {
        generate_domain(&Region::ProductGrid(vec![2, 2]), 1).unwrap()
    }

    fn xy() -> Field {
        Field(vec![0.0, 0.0, 0.0, 1.0])
    }

    #[test]
    fn sup_norm_examples() {
        assert_eq!(Field(vec![0.0, 0.0, 0.0, 1.0]).sup_norm(), 1.0);
        assert_eq!(Field(vec![-3.0; 5]).sup_norm(), 3.0);
    }

    #[test]
    fn lift_examples() {
        let d = grid2();
        let ff = FactorFunction {
            factor: 0,
            values: vec![1.0, 2.0],
        };
        assert_eq!(lift(&ff, &d).unwrap().0, vec![1.0, 1.0, 2.0, 2.0]);
        assert_eq!(lift(&FactorFunction::zeros(&d, 1), &d).unwrap(), Field::zeros(&d));
        assert_eq!(proximity_op(&lift(&ff, &d).unwrap(), &d, 0).unwrap(), ff);
        let bad = FactorFunction {
            factor: 0,
            values: vec![1.0],
        };
        assert!(matches!(lift(&bad, &d), Err(Error::ClassCountMismatch { .. })));
    }

    #[test]
    fn midrange_examples() {
        let d = grid2();
        let f = proximity_op(&xy(), &d, 0).unwrap();
        assert_eq!(f.values, vec![0.0, 0.5]);
        let c = proximity_op(&Field(vec![1.5; 4]), &d, 1).unwrap();
        assert_eq!(c.values, vec![1.5, 1.5]);
        let levelled = xy().sub(&lift(&f, &d).unwrap());
        assert!(proximity_op(&levelled, &d, 0).unwrap().is_zero());
    }

    #[test]
    fn two_by_two_steps() {
        let d = grid2();
        let st = LevellingState::new(&d, &xy()).unwrap();
        let st = levelling_step(st, &d, 0).unwrap();
        assert_eq!(st.residual.0, vec![0.0, 0.0, -0.5, 0.5]);
        assert_eq!(st.norm(), 0.5);
        let st = levelling_step(st, &d, 1).unwrap();
        assert_eq!(st.residual.0, vec![0.25, -0.25, -0.25, 0.25]);
        assert_eq!(st.norm(), 0.25);
        assert_eq!(st.step_count, 2);
    }

    #[test]
    fn zero_residual_step() {
        let d = grid2();
        let st = LevellingState::new(&d, &Field::zeros(&d)).unwrap();
        let after = levelling_step(st.clone(), &d, 1).unwrap();
        assert_eq!(after.residual, st.residual);
        assert_eq!(after.components, st.components);
        assert_eq!(after.step_count, 1);
    }

    #[test]
    fn run_two_by_two() {
        let d = grid2();
        let st = run_levelling(&d, &xy(), &StoppingRule::default()).unwrap();
        assert_eq!(st.termination, Some(Termination::Converged));
        assert_eq!(st.norm(), 0.25);
        assert_eq!(st.effective_steps(1e-9), 2);
    }

    #[test]
    fn representable_field_levels_to_zero() {
        let d = generate_domain(&Region::ProductGrid(vec![4, 3]), 1).unwrap();
        let f = lift(
            &FactorFunction {
                factor: 0,
                values: vec![0.3, -1.0, 2.0, 0.7],
            },
            &d,
        )
        .unwrap();
        let g = lift(
            &FactorFunction {
                factor: 1,
                values: vec![1.0, 0.25, -0.5],
            },
            &d,
        )
        .unwrap();
        let st = run_levelling(&d, &f.add(&g), &StoppingRule::default()).unwrap();
        assert!(st.norm() <= 1e-12, "{}", st.norm());
    }

    #[test]
    fn max_steps_termination() {
        let d = grid2();
        let stop = StoppingRule {
            max_steps: 1,
            ..Default::default()
        };
        let st = run_levelling(&d, &xy(), &stop).unwrap();
        assert_eq!(st.termination, Some(Termination::MaxSteps));
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn central_gap_examples() {
        let d = grid2();
        let ff = FactorFunction {
            factor: 0,
            values: vec![1.0, -2.0],
        };
        assert_eq!(central_symmetry_gap(&d, &xy(), &ff).unwrap(), 0.0);
        assert_eq!(
            central_symmetry_gap(&d, &xy(), &FactorFunction::zeros(&d, 1)).unwrap(),
            0.0
        );
    }

    #[test]
    fn field_parsing() {
        assert_eq!(Field::parse("[1.0, 2.5]").unwrap().0, vec![1.0, 2.5]);
        assert_eq!(
            Field::parse("id,value\n1,2.0\n0,-1\n").unwrap().0,
            vec![-1.0, 2.0]
        );
        assert!(Field::parse("id,val\n0,1\n").is_err());
        assert!(Field::parse("id,value\n0,1\n2,3\n").is_err());
    }

    #[test]
    fn field_length_checked() {
        let d = grid2();
        assert!(matches!(
            LevellingState::new(&d, &Field(vec![1.0])),
            Err(Error::FieldLength { .. })
        ));
    }
}
