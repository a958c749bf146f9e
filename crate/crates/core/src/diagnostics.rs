//! Finite-resolution experiments on region families.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bolts::{max_irreducible_bolt_length, IrreducibleMax};
use crate::domain::{generate_domain, inner_product_factor, Domain, Region};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::levelling::{lift, run_levelling_with, sup_norm, Field, LevellingState, StoppingRule, Termination};
use crate::oracle::{n_factor_error, OracleStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub resolutions: Vec<u32>,
    /// metric name → one value per resolution
    pub metrics: BTreeMap<String, Vec<f64>>,
    pub verdicts: Vec<String>,
    pub summary: String,
}

impl SweepReport {
    fn new(resolutions: &[u32]) -> Self {
        SweepReport {
            resolutions: resolutions.to_vec(),
            metrics: BTreeMap::new(),
            verdicts: Vec::new(),
            summary: String::new(),
        }
    }

    fn push(&mut self, name: &str, v: f64) {
        self.metrics.entry(name.to_string()).or_default().push(v);
    }

    pub fn metric(&self, name: &str) -> Option<&[f64]> {
        self.metrics.get(name).map(Vec::as_slice)
    }

    /// Rows `resolution,metric,value`, resolutions in order, metrics by name.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("resolution,metric,value\n");
        for (k, n) in self.resolutions.iter().enumerate() {
            for (name, vals) in &self.metrics {
                s.push_str(&format!("{n},{name},{:?}\n", vals[k]));
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Largest jump between adjacent classes of a per-class extreme function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub value: f64,
    /// Representative coordinates of the two classes.
    pub between: (f64, f64),
}

/// Jumps of the per-class max and min of `h` over the classes of `factor`,
/// classes ordered by their coordinate on axis `factor`.
pub fn class_extreme_jumps(d: &Domain, h: &Field, factor: usize) -> Result<(Jump, Jump)> {
    d.check_factor(factor)?;
    h.check(d)?;
    let k = d.class_counts()[factor];
    let mut classes: Vec<(f64, f64, f64)> = Vec::with_capacity(k);
    for c in 0..k {
        let members = d.members(factor, c);
        let rep = d
            .coords(members[0])
            .and_then(|v| v.get(factor).copied())
            .ok_or(Error::MissingCoordinates)?;
        let vals = members.iter().map(|&x| h.values()[x]);
        let hi = vals.clone().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.fold(f64::INFINITY, f64::min);
        classes.push((rep, hi, lo));
    }
    classes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut hi_jump = Jump {
        value: 0.0,
        between: (classes[0].0, classes[0].0),
    };
    let mut lo_jump = hi_jump;
    for w in classes.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (b.1 - a.1).abs() > hi_jump.value {
            hi_jump = Jump {
                value: (b.1 - a.1).abs(),
                between: (a.0, b.0),
            };
        }
        if (b.2 - a.2).abs() > lo_jump.value {
            lo_jump = Jump {
                value: (b.2 - a.2).abs(),
                between: (a.0, b.0),
            };
        }
    }
    Ok((hi_jump, lo_jump))
}

/// Per resolution, the largest adjacent-class jumps of the per-class max and
/// min functions on both factors.
pub fn cproperty_jump(region: &Region, h: &Expr, resolutions: &[u32]) -> Result<SweepReport> {
    let mut rep = SweepReport::new(resolutions);
    let rows: Vec<Result<(usize, [Jump; 4])>> = resolutions
        .par_iter()
        .map(|&n| {
            let d = generate_domain(region, n)?;
            let f = h.field(&d)?;
            let (a, b) = class_extreme_jumps(&d, &f, 0)?;
            let (c, e) = class_extreme_jumps(&d, &f, 1)?;
            Ok((d.num_points(), [a, b, c, e]))
        })
        .collect();
    let mut worst = 0.0f64;
    for row in rows {
        let (points, [a, b, c, e]) = row?;
        rep.push("points", points as f64);
        rep.push("max_jump_f0", a.value);
        rep.push("min_jump_f0", b.value);
        rep.push("max_jump_f1", c.value);
        rep.push("min_jump_f1", e.value);
        worst = worst.max(a.value.max(b.value).max(c.value).max(e.value));
        rep.verdicts.push(format!(
            "factor-0 max jumps by {:.6} between classes at {} and {}",
            a.value, a.between.0, a.between.1
        ));
    }
    let last = |m: &str| rep.metric(m).and_then(|v| v.last().copied()).unwrap_or(0.0);
    let finest = last("max_jump_f0")
        .max(last("min_jump_f0"))
        .max(last("max_jump_f1"))
        .max(last("min_jump_f1"));
    let coarsest_n = resolutions.last().copied().unwrap_or(1);
    rep.summary = if worst == 0.0 {
        "flat".into()
    } else if finest * f64::from(coarsest_n) <= 4.0 {
        "jumps shrink like 1/N".into()
    } else {
        format!("jump persists ({finest:.6} at the finest resolution)")
    };
    Ok(rep)
}

/// Per resolution, the maximum shortest-bolt length over all point pairs.
pub fn medvedev_sweep(region: &Region, resolutions: &[u32], cap: usize) -> Result<SweepReport> {
    let mut rep = SweepReport::new(resolutions);
    let rows: Vec<Result<(usize, IrreducibleMax)>> = resolutions
        .iter()
        .map(|&n| {
            let d = generate_domain(region, n)?;
            Ok((d.num_points(), max_irreducible_bolt_length(&d, cap)))
        })
        .collect();
    let mut maxima = Vec::new();
    for row in rows {
        let (points, m) = row?;
        rep.push("points", points as f64);
        match m {
            IrreducibleMax::Max(v) => {
                rep.push("max_irreducible_len", v as f64);
                rep.verdicts.push(format!("max={v}"));
                maxima.push(Some(v));
            }
            IrreducibleMax::ExceedsCap => {
                rep.push("max_irreducible_len", f64::NAN);
                rep.verdicts.push("exceeds_cap".into());
                maxima.push(None);
            }
        }
    }
    rep.summary = growth_verdict(&maxima).into();
    Ok(rep)
}

/// `growing` if strictly increasing, `bounded-looking` if it stops
/// increasing, `exceeds_cap` if any entry blew the cap.
pub fn growth_verdict(maxima: &[Option<usize>]) -> &'static str {
    if maxima.iter().any(Option::is_none) {
        return "exceeds_cap";
    }
    let v: Vec<usize> = maxima.iter().flatten().copied().collect();
    if v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0]) {
        "growing"
    } else {
        "bounded-looking"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosednessReport {
    /// `max_n (‖u_n‖ + ‖v_{n−1}‖) / ‖u_n + v_{n−1}‖`, a lower estimate of K.
    pub k_estimate: f64,
    pub ratios: Vec<f64>,
    /// `max_n ‖u_n + v_{n−1}‖`.
    pub max_sum_norm: f64,
    pub two_h_norm: f64,
    /// Whether every `‖u_n + v_{n−1}‖ ≤ 2‖h‖ + 1e−12`.
    pub sum_bound_holds: bool,
}

/// Empirical decomposition constant from the correction history of a
/// strictly alternating two-factor run starting with factor 0.
///
/// `u_n` sums the factor-0 corrections `q_1, q_3, …, q_{2n−1}` and `v_n` the
/// factor-1 corrections `q_2, …, q_{2n}`.
pub fn closedness_constant(st: &LevellingState, d: &Domain) -> Result<ClosednessReport> {
    let history = st.corrections.as_ref().ok_or(Error::NeedsAlternatingHistory)?;
    if d.num_factors() != 2 || st.components.len() != 2 || st.schedule != [0, 1] {
        return Err(Error::NeedsAlternatingHistory);
    }
    if history.is_empty() {
        return Err(Error::NeedsAlternatingHistory);
    }
    let mut u = vec![0.0; d.class_counts()[0]];
    let mut v = vec![0.0; d.class_counts()[1]];
    let mut ratios = Vec::new();
    let mut max_sum = 0.0f64;
    for (k, q) in history.iter().enumerate() {
        if q.factor != k % 2 {
            return Err(Error::NeedsAlternatingHistory);
        }
        if k % 2 == 0 {
            for (a, b) in u.iter_mut().zip(&q.values) {
                *a += b;
            }
            // u_n with v_{n−1}
            let sum: Vec<f64> = d
                .factor(0)
                .iter()
                .zip(d.factor(1))
                .map(|(&a, &b)| u[a] + v[b])
                .collect();
            let s = sup_norm(&sum);
            max_sum = max_sum.max(s);
            ratios.push((sup_norm(&u) + sup_norm(&v)) / s.max(1e-15));
        } else {
            for (a, b) in v.iter_mut().zip(&q.values) {
                *a += b;
            }
        }
    }
    let two_h = 2.0 * st.target.sup_norm();
    Ok(ClosednessReport {
        k_estimate: ratios.iter().copied().fold(0.0, f64::max),
        ratios,
        max_sum_norm: max_sum,
        two_h_norm: two_h,
        sum_bound_holds: max_sum <= two_h + 1e-12,
    })
}

/// Closedness estimates for `h` levelled on a region at several resolutions.
pub fn closedness_sweep(
    region: &Region,
    h: &Expr,
    resolutions: &[u32],
    stop: &StoppingRule,
) -> Result<SweepReport> {
    let mut rep = SweepReport::new(resolutions);
    let rows: Vec<Result<(usize, ClosednessReport, f64)>> = resolutions
        .par_iter()
        .map(|&n| {
            let d = generate_domain(region, n)?.select_factors(&[0, 1])?;
            let f = h.field(&d)?;
            let st = run_levelling_with(&d, &f, stop, &[0, 1], true, |_| {})?;
            Ok((d.num_points(), closedness_constant(&st, &d)?, st.norm()))
        })
        .collect();
    let mut ks = Vec::new();
    for row in rows {
        let (points, r, norm) = row?;
        rep.push("points", points as f64);
        rep.push("k_estimate", r.k_estimate);
        rep.push("max_sum_norm", r.max_sum_norm);
        rep.push("terminal_norm", norm);
        rep.verdicts.push(if r.sum_bound_holds {
            "sum bound holds".into()
        } else {
            "sum bound violated".into()
        });
        ks.push(r.k_estimate);
    }
    rep.summary = if ks.windows(2).all(|w| w[1] >= w[0] - 1e-12) {
        "estimates nondecreasing in N".into()
    } else {
        "estimates not monotone in N".into()
    };
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    /// Factor-1 classes met by each slice.
    pub projection_a: Vec<usize>,
    pub projection_b: Vec<usize>,
    pub comparable: bool,
    /// Midrange of `h` over each slice.
    pub midrange_a: f64,
    pub midrange_b: f64,
    /// `|M f_a − M f_b|`
    pub lhs: f64,
    /// `sup |f_a − f_b|` over the factor-1 classes both slices meet
    /// (`NaN` if there are none).
    pub rhs: f64,
    pub holds: bool,
    pub flag: String,
}

/// Compare midrange averaging over two factor-0 classes (slices), indexing
/// each slice by factor-1 class.
pub fn slice_averaging_check(d: &Domain, h: &Field, class_a: usize, class_b: usize) -> Result<SliceReport> {
    h.check(d)?;
    for c in [class_a, class_b] {
        if c >= d.class_counts()[0] {
            return Err(Error::ClassOutOfRange {
                factor: 0,
                class: c,
                count: d.class_counts()[0],
            });
        }
    }
    // factor-1 class → midrange of h over the slice points in it
    let slice = |c: usize| -> BTreeMap<usize, f64> {
        let mut acc: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for &x in d.members(0, c) {
            let v = h.values()[x];
            let e = acc.entry(d.class_of(1, x)).or_insert((v, v));
            e.0 = e.0.max(v);
            e.1 = e.1.min(v);
        }
        acc.into_iter().map(|(k, (a, b))| (k, 0.5 * (a + b))).collect()
    };
    let fa = slice(class_a);
    let fb = slice(class_b);
    let mid = |f: &BTreeMap<usize, f64>| {
        let hi = f.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = f.values().copied().fold(f64::INFINITY, f64::min);
        0.5 * (hi + lo)
    };
    let (ma, mb) = (mid(&fa), mid(&fb));
    let common: Vec<f64> = fa
        .iter()
        .filter_map(|(k, a)| fb.get(k).map(|b| (a - b).abs()))
        .collect();
    let rhs = if common.is_empty() {
        f64::NAN
    } else {
        common.iter().copied().fold(0.0, f64::max)
    };
    let projection_a: Vec<usize> = fa.keys().copied().collect();
    let projection_b: Vec<usize> = fb.keys().copied().collect();
    let comparable = projection_a == projection_b;
    let lhs = (ma - mb).abs();
    let holds = lhs <= rhs + 1e-12;
    let flag = match (comparable, holds) {
        (true, true) => "inequality holds",
        (true, false) => "inequality violated",
        (false, true) => "incomparable slices",
        (false, false) => "incomparable slices; inequality fails on the common part",
    }
    .to_string();
    Ok(SliceReport {
        projection_a,
        projection_b,
        comparable,
        midrange_a: ma,
        midrange_b: mb,
        lhs,
        rhs,
        holds,
        flag,
    })
}

/// Gap above which a long run counts as a stall witness.
pub const STALL_GAP: f64 = 1e-3;
/// Minimum number of full cycles before a gap counts as a stall.
pub const STALL_CYCLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiFactorGap {
    pub factors: usize,
    pub terminal_norm: f64,
    pub oracle_error: f64,
    pub gap: f64,
    pub steps: usize,
    pub cycles: usize,
    pub termination: Termination,
    pub oracle_status: OracleStatus,
    pub stall_witness: bool,
}

/// Cyclic levelling over all factors against the exact error of the full sum.
pub fn multi_factor_gap(d: &Domain, h: &Field, stop: &StoppingRule) -> Result<MultiFactorGap> {
    let n = d.num_factors();
    let schedule: Vec<usize> = (0..n).collect();
    let st = run_levelling_with(d, h, stop, &schedule, false, |_| {})?;
    let oracle = n_factor_error(d, h)?;
    let gap = st.norm() - oracle.error;
    let cycles = st.step_count / n;
    Ok(MultiFactorGap {
        factors: n,
        terminal_norm: st.norm(),
        oracle_error: oracle.error,
        gap,
        steps: st.step_count,
        cycles,
        termination: st.termination.unwrap_or(Termination::MaxSteps),
        oracle_status: oracle.status,
        stall_witness: gap > STALL_GAP && cycles >= STALL_CYCLES,
    })
}

/// A seeded random three-factor instance: either a product grid with one
/// factor per axis or a planar grid with a binned `x + y` factor appended.
pub fn random_three_factor_instance(rng: &mut impl Rng) -> Result<(Domain, Field)> {
    let d = if rng.gen_bool(0.5) {
        let sizes: Vec<usize> = (0..3).map(|_| rng.gen_range(2..=4)).collect();
        generate_domain(&Region::ProductGrid(sizes), 1)?
    } else {
        let (a, b) = (rng.gen_range(2..=5), rng.gen_range(2..=5));
        let g = generate_domain(&Region::ProductGrid(vec![a, b]), 1)?;
        let diag = inner_product_factor(&g, &[1.0, 1.0], 1.0)?;
        g.with_factor(&diag)?
    };
    let h = Field((0..d.num_points()).map(|_| rng.gen_range(-1.0..=1.0)).collect());
    Ok((d, h))
}

/// Gap distribution over `count` seeded random three-factor instances.
pub fn multifactor_search(seed: u64, count: usize, stop: &StoppingRule) -> Result<Vec<MultiFactorGap>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let (d, h) = random_three_factor_instance(&mut rng)?;
            multi_factor_gap(&d, &h, stop)
        })
        .collect()
}

/// Lift helper for callers assembling representable fields.
pub fn representable(d: &Domain, parts: &[crate::levelling::FactorFunction]) -> Result<Field> {
    let mut f = Field::zeros(d);
    for p in parts {
        f = f.add(&lift(p, d)?);
    }
    Ok(f)
}
