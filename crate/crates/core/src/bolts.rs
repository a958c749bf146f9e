//! Bolts and their alternating-sign functionals.
//!
//! A bolt is a sequence of points in which consecutive points share a class,
//! alternately under factor 0 and factor 1. The functional of a bolt of
//! length `m` is `(1/m) Σ ±h(x_i)` with signs `+, −, +, …`. For a closed bolt
//! it annihilates every function constant on the classes of either factor, so
//! `|r(h)| / ‖r‖` is a certified lower bound on the error of approximation.
//!
//! Bolts always use the first two factors of a domain.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::levelling::{run_levelling, Field, LevellingState, StoppingRule};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bolt {
    /// Factor (0 or 1) linking `points[0]` and `points[1]`.
    pub start_relation: usize,
    pub points: Vec<usize>,
}

impl Bolt {
    pub fn new(start_relation: usize, points: Vec<usize>) -> Bolt {
        Bolt {
            start_relation,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Factor linking `points[i]` and `points[i + 1]` (and, for `i = m − 1`,
    /// the closing pair).
    pub fn relation_at(&self, i: usize) -> usize {
        if i % 2 == 0 {
            self.start_relation
        } else {
            1 - self.start_relation
        }
    }

    /// Net signed multiplicity per point: `+1` per visit at an even 0-based
    /// position, `−1` per visit at an odd one.
    pub fn multiplicities(&self) -> BTreeMap<usize, i64> {
        let mut m = BTreeMap::new();
        for (i, &x) in self.points.iter().enumerate() {
            *m.entry(x).or_insert(0) += if i % 2 == 0 { 1 } else { -1 };
        }
        m
    }

    /// Whether points at odd and even positions form disjoint sets.
    pub fn parity_sets_disjoint(&self) -> bool {
        let even: BTreeSet<usize> = self.points.iter().step_by(2).copied().collect();
        self.points.iter().skip(1).step_by(2).all(|x| !even.contains(x))
    }

    /// The same closed bolt started at position `k`.
    fn rotated(&self, k: usize) -> Bolt {
        let mut p = self.points.clone();
        p.rotate_left(k);
        Bolt::new(self.relation_at(k), p)
    }

    fn reversed(&self) -> Bolt {
        let mut p = self.points.clone();
        p.reverse();
        // for even length the first reversed pair is original pair m − 2
        Bolt::new(self.start_relation, p)
    }

    /// Lexicographically smallest `(points, start_relation)` over rotations
    /// and reversal of a closed bolt.
    pub fn canonical(&self) -> Bolt {
        let key = |b: &Bolt| (b.points.clone(), b.start_relation);
        let rev = self.reversed();
        (0..self.len())
            .flat_map(|k| [self.rotated(k), rev.rotated(k)])
            .min_by_key(key)
            .unwrap_or_else(|| self.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason", rename_all = "snake_case")]
pub enum BoltStatus {
    Open,
    Closed,
    Invalid(String),
}

impl BoltStatus {
    pub fn is_valid(&self) -> bool {
        !matches!(self, BoltStatus::Invalid(_))
    }
}

fn shares(d: &Domain, rel: usize, a: usize, b: usize) -> bool {
    d.class_of(rel, a) == d.class_of(rel, b)
}

pub fn validate_bolt(d: &Domain, b: &Bolt) -> Result<BoltStatus> {
    for &x in &b.points {
        d.check_point(x)?;
    }
    if b.start_relation > 1 {
        return Ok(BoltStatus::Invalid(format!(
            "start relation {} is not 0 or 1",
            b.start_relation
        )));
    }
    let m = b.len();
    if m < 2 {
        return Ok(BoltStatus::Invalid("a bolt needs at least two points".into()));
    }
    for i in 0..m - 1 {
        let (a, c) = (b.points[i], b.points[i + 1]);
        if a == c {
            return Ok(BoltStatus::Invalid(format!(
                "positions {i} and {} repeat point {a}",
                i + 1
            )));
        }
        let rel = b.relation_at(i);
        if !shares(d, rel, a, c) {
            return Ok(BoltStatus::Invalid(format!(
                "points {a} and {c} at positions {i},{} share no factor-{rel} class",
                i + 1
            )));
        }
    }
    let (last, first) = (b.points[m - 1], b.points[0]);
    if m % 2 == 0 && last != first && shares(d, b.relation_at(m - 1), last, first) {
        Ok(BoltStatus::Closed)
    } else {
        Ok(BoltStatus::Open)
    }
}

fn require_valid(d: &Domain, b: &Bolt) -> Result<BoltStatus> {
    match validate_bolt(d, b)? {
        BoltStatus::Invalid(reason) => Err(Error::InvalidBolt(reason)),
        ok => Ok(ok),
    }
}

/// A bolt with its merged point coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoltFunctional {
    pub bolt: Bolt,
    pub coefficients: BTreeMap<usize, f64>,
}

impl BoltFunctional {
    pub fn new(d: &Domain, bolt: Bolt) -> Result<BoltFunctional> {
        require_valid(d, &bolt)?;
        let m = bolt.len() as f64;
        let coefficients = bolt
            .multiplicities()
            .into_iter()
            .filter(|&(_, k)| k != 0)
            .map(|(x, k)| (x, k as f64 / m))
            .collect();
        Ok(BoltFunctional { bolt, coefficients })
    }

    pub fn apply(&self, h: &Field) -> f64 {
        functional_value(&self.bolt, h.values())
    }

    pub fn norm(&self) -> f64 {
        functional_norm(&self.bolt)
    }
}

fn functional_value(b: &Bolt, h: &[f64]) -> f64 {
    let s: f64 = b
        .points
        .iter()
        .enumerate()
        .map(|(i, &x)| if i % 2 == 0 { h[x] } else { -h[x] })
        .sum();
    s / b.len() as f64
}

fn functional_norm(b: &Bolt) -> f64 {
    let mass: i64 = b.multiplicities().values().map(|k| k.abs()).sum();
    mass as f64 / b.len() as f64
}

/// `r_l(h) = (1/m) Σ_{i=1..m} (−1)^{i+1} h(x_i)`.
pub fn bolt_functional(d: &Domain, b: &Bolt, h: &Field) -> Result<f64> {
    require_valid(d, b)?;
    h.check(d)?;
    Ok(functional_value(b, h.values()))
}

/// ℓ1 mass of the merged coefficients; exactly 1 iff the odd and even
/// position point sets are disjoint.
pub fn bolt_functional_norm(d: &Domain, b: &Bolt) -> Result<f64> {
    require_valid(d, b)?;
    Ok(functional_norm(b))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortestBolt {
    /// `from == to`; no bolt is needed.
    SamePoint,
    Found(Bolt),
    Unreachable,
}

const UNSET: u32 = u32::MAX;

/// Breadth-first search over states `(point, next relation)`.
///
/// Each class of each relation is scanned at most twice: the first expansion
/// labels every other member, and a second one from a different source can
/// only add the first source itself.
struct BoltBfs<'a> {
    d: &'a Domain,
    // dist[rel][point]: points on a shortest bolt ending at `point` with
    // `rel` as the next relation
    dist: [Vec<u32>; 2],
    parent: [Vec<u32>; 2],
    // first expanding source per class, or FULL once scanned twice
    expanded: [Vec<u32>; 2],
}

const FULL: u32 = u32::MAX - 1;

impl<'a> BoltBfs<'a> {
    fn new(d: &'a Domain) -> Self {
        let n = d.num_points();
        BoltBfs {
            d,
            dist: [vec![UNSET; n], vec![UNSET; n]],
            parent: [vec![UNSET; n], vec![UNSET; n]],
            expanded: [vec![UNSET; d.class_counts()[0]], vec![UNSET; d.class_counts()[1]]],
        }
    }

    /// Run from `from`, stopping early when `target` is reached.
    fn run(&mut self, from: usize, target: Option<usize>) -> Option<(usize, usize)> {
        let mut queue = VecDeque::new();
        for rel in 0..2 {
            self.dist[rel][from] = 1;
            queue.push_back((from, rel));
        }
        while let Some((x, rel)) = queue.pop_front() {
            let c = self.d.class_of(rel, x);
            let state = self.expanded[rel][c];
            if state == FULL || state == x as u32 {
                continue;
            }
            let next = 1 - rel;
            let dx = self.dist[rel][x];
            let (candidates, extra): (&[usize], Option<usize>) = if state == UNSET {
                self.expanded[rel][c] = x as u32;
                (self.d.members(rel, c), None)
            } else {
                self.expanded[rel][c] = FULL;
                (&[], Some(state as usize))
            };
            for y in candidates.iter().copied().chain(extra) {
                if y == x || self.dist[next][y] != UNSET {
                    continue;
                }
                self.dist[next][y] = dx + 1;
                self.parent[next][y] = x as u32;
                if Some(y) == target {
                    return Some((y, next));
                }
                queue.push_back((y, next));
            }
        }
        None
    }

    fn path(&self, mut x: usize, mut rel: usize) -> Bolt {
        let mut pts = vec![x];
        while self.dist[rel][x] > 1 {
            let p = self.parent[rel][x] as usize;
            rel = 1 - rel;
            x = p;
            pts.push(x);
        }
        pts.reverse();
        // `rel` is now the next relation at the start point
        Bolt::new(rel, pts)
    }

    fn min_dist(&self, y: usize) -> u32 {
        self.dist[0][y].min(self.dist[1][y])
    }
}

/// A minimum-length bolt from `from` to `to`.
pub fn shortest_bolt(d: &Domain, from: usize, to: usize) -> Result<ShortestBolt> {
    d.check_point(from)?;
    d.check_point(to)?;
    if from == to {
        return Ok(ShortestBolt::SamePoint);
    }
    let mut bfs = BoltBfs::new(d);
    Ok(match bfs.run(from, Some(to)) {
        Some((y, rel)) => ShortestBolt::Found(bfs.path(y, rel)),
        None => ShortestBolt::Unreachable,
    })
}

/// Shortest bolt lengths from `from` to every point (`None` if unreachable;
/// `Some(1)` for `from` itself).
pub fn bolt_distances(d: &Domain, from: usize) -> Result<Vec<Option<usize>>> {
    d.check_point(from)?;
    let mut bfs = BoltBfs::new(d);
    bfs.run(from, None);
    Ok((0..d.num_points())
        .map(|y| match bfs.min_dist(y) {
            UNSET => None,
            v => Some(v as usize),
        })
        .collect())
}

/// Points that share no class with any other point. No bolt passes through
/// them, so they are left out of the all-pairs maximum.
pub fn isolated_points(d: &Domain) -> Vec<usize> {
    (0..d.num_points())
        .filter(|&x| (0..2).all(|f| d.members(f, d.class_of(f, x)).len() == 1))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrreducibleMax {
    Max(usize),
    /// Some pair needs more than `cap` points or is not connected.
    ExceedsCap,
}

impl IrreducibleMax {
    pub fn value(&self) -> Option<usize> {
        match self {
            IrreducibleMax::Max(v) => Some(*v),
            IrreducibleMax::ExceedsCap => None,
        }
    }
}

/// Maximum over ordered pairs of distinct non-isolated points of the shortest
/// bolt length between them.
pub fn max_irreducible_bolt_length(d: &Domain, cap: usize) -> IrreducibleMax {
    let isolated: BTreeSet<usize> = isolated_points(d).into_iter().collect();
    if !isolated.is_empty() {
        log::info!("skipping {} isolated point(s)", isolated.len());
    }
    let sources: Vec<usize> = (0..d.num_points()).filter(|x| !isolated.contains(x)).collect();
    let per_source: Vec<Option<usize>> = sources
        .par_iter()
        .map(|&x| {
            let mut bfs = BoltBfs::new(d);
            bfs.run(x, None);
            let mut worst = 1usize;
            for &y in &sources {
                match bfs.min_dist(y) {
                    UNSET => return None,
                    v if v as usize > cap => return None,
                    v => worst = worst.max(v as usize),
                }
            }
            Some(worst)
        })
        .collect();
    per_source
        .into_iter()
        .try_fold(1usize, |m, v| v.map(|v| m.max(v)))
        .map_or(IrreducibleMax::ExceedsCap, IrreducibleMax::Max)
}

/// Longest bolt accepted by [`enumerate_closed_bolts`].
pub const ENUMERATION_MAX_LEN: usize = 10;

fn extend_all<F>(d: &Domain, seq: &mut Vec<usize>, start: usize, max_len: usize, visit: &mut F)
where
    F: FnMut(&[usize], usize),
{
    visit(seq, start);
    if seq.len() == max_len {
        return;
    }
    let i = seq.len() - 1;
    let rel = if i % 2 == 0 { start } else { 1 - start };
    let x = seq[i];
    for &y in d.members(rel, d.class_of(rel, x)) {
        if y != x {
            seq.push(y);
            extend_all(d, seq, start, max_len, visit);
            seq.pop();
        }
    }
}

/// Every valid bolt (open or closed) with `2 ≤ len ≤ max_len`.
pub fn enumerate_bolts(d: &Domain, max_len: usize) -> Vec<Bolt> {
    let mut out = Vec::new();
    for x in 0..d.num_points() {
        for start in 0..2 {
            let mut seq = vec![x];
            extend_all(d, &mut seq, start, max_len, &mut |s, r| {
                if s.len() >= 2 {
                    out.push(Bolt::new(r, s.to_vec()));
                }
            });
        }
    }
    out
}

/// All closed bolts with at most `max_len` points, one canonical
/// representative per rotation/reversal class, in sorted order.
pub fn enumerate_closed_bolts(d: &Domain, max_len: usize) -> Result<Vec<Bolt>> {
    if max_len % 2 != 0 || !(2..=ENUMERATION_MAX_LEN).contains(&max_len) {
        return Err(Error::BadEnumerationLength(max_len));
    }
    let found: BTreeSet<Bolt> = (0..d.num_points())
        .into_par_iter()
        .flat_map_iter(|x0| {
            let mut local = BTreeSet::new();
            for start in 0..2 {
                let mut seq = vec![x0];
                closed_from(d, &mut seq, start, max_len, &mut local);
            }
            local
        })
        .collect();
    Ok(found.into_iter().collect())
}

// Every closed bolt has a rotation starting at its smallest point id, so only
// sequences whose first element is their minimum are explored.
fn closed_from(d: &Domain, seq: &mut Vec<usize>, start: usize, max_len: usize, out: &mut BTreeSet<Bolt>) {
    let m = seq.len();
    let rel_at = |i: usize| if i % 2 == 0 { start } else { 1 - start };
    if m >= 2 && m % 2 == 0 {
        let (last, first) = (seq[m - 1], seq[0]);
        if last != first && shares(d, rel_at(m - 1), last, first) {
            out.insert(Bolt::new(start, seq.clone()).canonical());
        }
    }
    if m == max_len {
        return;
    }
    let x = seq[m - 1];
    let rel = rel_at(m - 1);
    for &y in d.members(rel, d.class_of(rel, x)) {
        if y != x && y >= seq[0] {
            seq.push(y);
            closed_from(d, seq, start, max_len, out);
            seq.pop();
        }
    }
}

/// Greedy construction of a closed bolt on which the residual alternates
/// between `≥ M − slack` and `≤ −M + slack`, `M = ‖residual‖`.
///
/// Walks start at every near-extremal point, with either relation and either
/// sign. Each step moves within the current class to the point with the
/// extreme residual of the required sign (smallest id on ties). A walk closes
/// when it can return to its start, or when it revisits a state, in which case
/// the repeated segment is returned. Walks are cut after `2k + 2` points.
pub fn extract_bolt_from_residual(
    st: &LevellingState,
    d: &Domain,
    k: usize,
    slack: f64,
) -> Result<Option<Bolt>> {
    if !(slack > 0.0) {
        return Err(Error::BadSlack(slack));
    }
    st.residual.check(d)?;
    let r = st.residual.values();
    let big_m = st.residual.sup_norm();
    if big_m == 0.0 {
        return Ok(None);
    }
    let limit = 2 * k + 2;
    let hi = big_m - slack;
    for sign in [1.0, -1.0] {
        let v = |x: usize| sign * r[x];
        for x0 in (0..d.num_points()).filter(|&x| v(x) >= hi) {
            for start in 0..2 {
                if let Some(b) = greedy_walk(d, &v, x0, start, hi, limit) {
                    return Ok(Some(b));
                }
            }
        }
    }
    Ok(None)
}

fn greedy_walk<V: Fn(usize) -> f64>(
    d: &Domain,
    v: &V,
    x0: usize,
    start: usize,
    hi: f64,
    limit: usize,
) -> Option<Bolt> {
    let rel_at = |i: usize| if i % 2 == 0 { start } else { 1 - start };
    let mut seq = vec![x0];
    // (point, position parity) -> first position; parity fixes next relation
    let mut seen: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    seen.insert((x0, 0), 0);
    while seq.len() < limit {
        let i = seq.len() - 1;
        let x = seq[i];
        let rel = rel_at(i);
        let want_high = (i + 1) % 2 == 0;
        let score = |y: usize| if want_high { v(y) } else { -v(y) };
        let best = d
            .members(rel, d.class_of(rel, x))
            .iter()
            .copied()
            .filter(|&y| y != x)
            .fold(None, |acc: Option<usize>, y| match acc {
                Some(b) if score(b) >= score(y) => Some(b),
                _ => Some(y),
            })?;
        if score(best) < hi {
            return None;
        }
        seq.push(best);
        let j = seq.len() - 1;
        if seq.len() % 2 == 0 && best != x0 && shares(d, rel_at(j), best, x0) {
            return Some(Bolt::new(start, seq));
        }
        if let Some(&first) = seen.get(&(best, j % 2)) {
            return Some(Bolt::new(rel_at(first), seq[first..j].to_vec()));
        }
        seen.insert((best, j % 2), j);
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundBudget {
    /// Enumerate closed bolts up to this length (0 disables enumeration).
    pub enumerate_max_len: usize,
    /// Skip enumeration on domains with more points than this.
    pub enumerate_max_points: usize,
    pub stop: StoppingRule,
    /// Walk length parameter `k` for extraction (walks stop at `2k + 2`).
    pub extract_k: usize,
}

impl Default for LowerBoundBudget {
    fn default() -> Self {
        LowerBoundBudget {
            enumerate_max_len: 8,
            enumerate_max_points: 16,
            stop: StoppingRule::default(),
            extract_k: 4096,
        }
    }
}

/// Slacks tried by [`best_lower_bound`] on the levelled residual.
pub const EXTRACTION_SLACKS: &[f64] = &[1e-2, 1e-3, 1e-4, 1e-6, 1e-8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub value: f64,
    pub witness: Option<Bolt>,
}

/// `|r_l(h)| / ‖r_l‖` for a closed bolt; 0 when every coefficient cancels.
pub fn certified_value(b: &Bolt, h: &Field) -> f64 {
    let norm = functional_norm(b);
    if norm == 0.0 {
        return 0.0;
    }
    functional_value(b, h.values()).abs() / norm
}

/// Best certified lower bound on the error of approximation from closed bolts,
/// found by enumeration (small domains) and by extraction from a levelling run.
pub fn best_lower_bound(d: &Domain, h: &Field, budget: &LowerBoundBudget) -> Result<LowerBound> {
    h.check(d)?;
    let mut best = LowerBound {
        value: 0.0,
        witness: None,
    };
    let consider = |b: Bolt, best: &mut LowerBound| {
        let v = certified_value(&b, h);
        if v > best.value {
            *best = LowerBound {
                value: v,
                witness: Some(b),
            };
        }
    };
    if budget.enumerate_max_len >= 2 && d.num_points() <= budget.enumerate_max_points {
        let len = budget.enumerate_max_len.min(ENUMERATION_MAX_LEN) & !1;
        for b in enumerate_closed_bolts(d, len)? {
            consider(b, &mut best);
        }
    }
    let two = if d.num_factors() == 2 {
        d.clone()
    } else {
        d.select_factors(&[0, 1])?
    };
    let st = run_levelling(&two, h, &budget.stop)?;
    for &slack in EXTRACTION_SLACKS {
        if let Some(b) = extract_bolt_from_residual(&st, &two, budget.extract_k, slack)? {
            consider(b, &mut best);
        }
    }
    Ok(best)
}
