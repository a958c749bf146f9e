//! Finite domains with factor partitions.
//!
//! A domain is a finite point set where every point carries one class id per
//! factor. Factor `i` stands for the quotient map onto the level sets of the
//! `i`-th algebra: two points share a class exactly when every function of
//! that algebra takes the same value on them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for half-plane membership tests, in coordinate units.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<f64>>,
}

/// Unvalidated domain data, as read from a file or built in memory.
///
/// `factors[i][j]` is the class of point `j` under factor `i`; class ids may be
/// arbitrary integers and are renumbered on validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDomain {
    pub points: Vec<Point>,
    pub factors: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    points: Vec<Point>,
    factors: Vec<Vec<usize>>,
    class_counts: Vec<usize>,
    // members[factor][class] = sorted point ids
    members: Vec<Vec<Vec<usize>>>,
}

/// The level sets of one factor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSetIndex {
    pub factor: usize,
    pub classes: Vec<Vec<usize>>,
}

/// Renumber arbitrary class labels to `0..k` in ascending label order.
/// Returns the new labels and whether anything changed.
fn renumber(labels: &[i64]) -> (Vec<usize>, bool) {
    let distinct: BTreeSet<i64> = labels.iter().copied().collect();
    let map: BTreeMap<i64, usize> = distinct.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let out: Vec<usize> = labels.iter().map(|v| map[v]).collect();
    let changed = out.iter().zip(labels).any(|(&a, &b)| a as i64 != b);
    (out, changed)
}

impl Domain {
    /// Validate raw point/factor data, renumbering point ids and class ids to
    /// contiguous form when needed.
    pub fn validate(raw: RawDomain) -> Result<Self> {
        let RawDomain { mut points, factors } = raw;
        if points.is_empty() {
            return Err(Error::EmptyDomain);
        }
        if factors.len() < 2 {
            return Err(Error::TooFewFactors);
        }
        let n = points.len();
        let mut seen = BTreeSet::new();
        for p in &points {
            if !seen.insert(p.id) {
                return Err(Error::DuplicatePointId(p.id));
            }
        }
        if points.iter().enumerate().any(|(j, p)| p.id != j) {
            log::warn!("point ids are not 0..{n} in order; reassigning by position");
            for (j, p) in points.iter_mut().enumerate() {
                p.id = j;
            }
        }
        let dim = points.iter().find_map(|p| p.coords.as_ref().map(Vec::len));
        for (j, p) in points.iter().enumerate() {
            if let Some(c) = &p.coords {
                if Some(c.len()) != dim {
                    return Err(Error::Schema(format!(
                        "point {j} has {} coordinates, expected {}",
                        c.len(),
                        dim.unwrap_or(0)
                    )));
                }
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(j));
                }
            }
        }
        let mut out = Vec::with_capacity(factors.len());
        for (i, labels) in factors.iter().enumerate() {
            if labels.len() != n {
                return Err(Error::FactorLength {
                    factor: i,
                    got: labels.len(),
                    expected: n,
                });
            }
            let (classes, changed) = renumber(labels);
            if changed {
                log::warn!("factor {i}: class ids were not contiguous; renumbered");
            }
            out.push(classes);
        }
        Ok(Self::from_contiguous(points, out))
    }

    /// Build a domain from factor assignments that are already valid class
    /// labels (any non-negative integers; they are renumbered silently).
    pub fn from_factors(coords: Option<Vec<Vec<f64>>>, factors: Vec<Vec<usize>>) -> Result<Self> {
        let n = factors.first().map_or(0, Vec::len);
        let points = match coords {
            Some(c) => c
                .into_iter()
                .enumerate()
                .map(|(id, v)| Point { id, coords: Some(v) })
                .collect(),
            None => (0..n).map(|id| Point { id, coords: None }).collect(),
        };
        let factors = factors
            .into_iter()
            .map(|f| f.into_iter().map(|c| c as i64).collect())
            .collect();
        Self::validate(RawDomain { points, factors })
    }

    fn from_contiguous(points: Vec<Point>, factors: Vec<Vec<usize>>) -> Self {
        let class_counts: Vec<usize> = factors
            .iter()
            .map(|f| f.iter().max().map_or(0, |m| m + 1))
            .collect();
        let members = factors
            .iter()
            .zip(&class_counts)
            .map(|(f, &k)| {
                let mut m = vec![Vec::new(); k];
                for (j, &c) in f.iter().enumerate() {
                    m[c].push(j);
                }
                m
            })
            .collect();
        Domain {
            points,
            factors,
            class_counts,
            members,
        }
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Class assignment of every point under `factor`.
    pub fn factor(&self, factor: usize) -> &[usize] {
        &self.factors[factor]
    }

    pub fn factors(&self) -> &[Vec<usize>] {
        &self.factors
    }

    pub fn class_of(&self, factor: usize, point: usize) -> usize {
        self.factors[factor][point]
    }

    /// Sorted point ids in one class.
    pub fn members(&self, factor: usize, class: usize) -> &[usize] {
        &self.members[factor][class]
    }

    pub fn coords(&self, point: usize) -> Option<&[f64]> {
        self.points[point].coords.as_deref()
    }

    pub fn has_coords(&self) -> bool {
        self.points.iter().all(|p| p.coords.is_some())
    }

    pub fn check_factor(&self, factor: usize) -> Result<()> {
        if factor < self.num_factors() {
            Ok(())
        } else {
            Err(Error::FactorOutOfRange {
                factor,
                count: self.num_factors(),
            })
        }
    }

    pub fn check_point(&self, point: usize) -> Result<()> {
        if point < self.num_points() {
            Ok(())
        } else {
            Err(Error::PointOutOfRange {
                point,
                count: self.num_points(),
            })
        }
    }

    pub fn level_sets(&self, factor: usize) -> Result<LevelSetIndex> {
        self.check_factor(factor)?;
        Ok(LevelSetIndex {
            factor,
            classes: self.members[factor].clone(),
        })
    }

    /// A copy of this domain with one more factor appended.
    pub fn with_factor(&self, partition: &[usize]) -> Result<Domain> {
        let mut raw = self.to_raw();
        if partition.len() != self.num_points() {
            return Err(Error::FactorLength {
                factor: self.num_factors(),
                got: partition.len(),
                expected: self.num_points(),
            });
        }
        raw.factors.push(partition.iter().map(|&c| c as i64).collect());
        Domain::validate(raw)
    }

    /// A copy keeping only the listed factors, in the given order.
    pub fn select_factors(&self, keep: &[usize]) -> Result<Domain> {
        for &f in keep {
            self.check_factor(f)?;
        }
        let mut raw = self.to_raw();
        raw.factors = keep.iter().map(|&f| raw.factors[f].clone()).collect();
        Domain::validate(raw)
    }

    /// The factor class whose members have coordinate `axis` equal to `value`
    /// (within [`MEMBERSHIP_TOL`]).
    pub fn class_at_coordinate(&self, factor: usize, axis: usize, value: f64) -> Option<usize> {
        (0..self.num_points()).find_map(|j| {
            let c = self.coords(j)?;
            ((c.get(axis)? - value).abs() <= MEMBERSHIP_TOL).then(|| self.class_of(factor, j))
        })
    }

    pub fn to_raw(&self) -> RawDomain {
        RawDomain {
            points: self.points.clone(),
            factors: self
                .factors
                .iter()
                .map(|f| f.iter().map(|&c| c as i64).collect())
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_raw())?)
    }

    pub fn from_json(s: &str) -> Result<Domain> {
        let raw: RawDomain = serde_json::from_str(s)?;
        Domain::validate(raw)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, &self.to_raw())?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Domain> {
        let raw: RawDomain = serde_json::from_reader(r)?;
        Domain::validate(raw)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_json(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Domain> {
        let f = std::fs::File::open(path)?;
        Domain::read_json(std::io::BufReader::new(f))
    }
}

/// Region families for lattice discretization.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// `[x0,x1] × [y0,y1]`
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    /// `[0,1]×[0,½] ∪ [0,½]×[0,1]`
    LShapeK1,
    /// `[0,1]×[0,2] ∪ [1,2]×[0,1]`
    UnionNcu,
    /// Triangle with vertices (0,0), (2,2), (1,0).
    TriangleAbc,
    ConvexPolygon(Vec<[f64; 2]>),
    /// Axis `i` has `sizes[i]` lattice points `0, 1/N, …`; one factor per axis.
    ProductGrid(Vec<usize>),
}

pub const REGION_NAMES: &[&str] = &[
    "rectangle",
    "lshape_K1",
    "union_ncu",
    "triangle_abc",
    "convex_polygon",
    "product_grid",
];

impl Region {
    /// Parse a region from its name and a flat parameter list.
    ///
    /// `rectangle` takes `x0,x1,y0,y1`; `convex_polygon` takes `x,y` pairs;
    /// `product_grid` takes the per-axis sizes.
    pub fn parse(name: &str, params: &[f64]) -> Result<Region> {
        let region = match name {
            "rectangle" => match params {
                [] => Region::Rectangle {
                    x0: 0.0,
                    x1: 1.0,
                    y0: 0.0,
                    y1: 1.0,
                },
                &[x0, x1, y0, y1] => Region::Rectangle { x0, x1, y0, y1 },
                _ => return Err(Error::BadRegion("rectangle takes x0,x1,y0,y1".into())),
            },
            "lshape_K1" | "lshape_k1" => Region::LShapeK1,
            "union_ncu" => Region::UnionNcu,
            "triangle_abc" => Region::TriangleAbc,
            "convex_polygon" => {
                if params.len() < 6 || params.len() % 2 != 0 {
                    return Err(Error::BadRegion(
                        "convex_polygon takes at least three x,y pairs".into(),
                    ));
                }
                Region::ConvexPolygon(params.chunks(2).map(|c| [c[0], c[1]]).collect())
            }
            "product_grid" => {
                if params.len() < 2 || params.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
                    return Err(Error::BadRegion(
                        "product_grid takes at least two positive integer sizes".into(),
                    ));
                }
                Region::ProductGrid(params.iter().map(|&v| v as usize).collect())
            }
            _ => {
                return Err(Error::UnknownRegion {
                    name: name.to_string(),
                    known: REGION_NAMES.join(", "),
                })
            }
        };
        Ok(region)
    }
}

/// Closed convex polygon given by its vertices in either orientation.
struct Polygon {
    vertices: Vec<[f64; 2]>,
    orientation: f64,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl Polygon {
    fn convex(vertices: Vec<[f64; 2]>) -> Result<Polygon> {
        let m = vertices.len();
        if m < 3 {
            return Err(Error::NonConvexPolygon);
        }
        let mut sign = 0.0;
        for i in 0..m {
            let c = cross(vertices[i], vertices[(i + 1) % m], vertices[(i + 2) % m]);
            if c.abs() <= 1e-12 {
                continue;
            }
            if sign == 0.0 {
                sign = c.signum();
            } else if c.signum() != sign {
                return Err(Error::NonConvexPolygon);
            }
        }
        if sign == 0.0 {
            return Err(Error::NonConvexPolygon);
        }
        // a star-shaped vertex order can keep every turn the same sign
        let winding: f64 = (0..m)
            .map(|i| {
                let a = vertices[i];
                let b = vertices[(i + 1) % m];
                let c = vertices[(i + 2) % m];
                let t1 = (b[1] - a[1]).atan2(b[0] - a[0]);
                let t2 = (c[1] - b[1]).atan2(c[0] - b[0]);
                let mut d = t2 - t1;
                while d > std::f64::consts::PI {
                    d -= 2.0 * std::f64::consts::PI;
                }
                while d < -std::f64::consts::PI {
                    d += 2.0 * std::f64::consts::PI;
                }
                d
            })
            .sum();
        if (winding.abs() - 2.0 * std::f64::consts::PI).abs() > 1e-6 {
            return Err(Error::NonConvexPolygon);
        }
        Ok(Polygon {
            vertices,
            orientation: sign,
        })
    }

    fn contains(&self, q: [f64; 2]) -> bool {
        let m = self.vertices.len();
        (0..m).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % m];
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            if len == 0.0 {
                return true;
            }
            self.orientation * cross(a, b, q) / len >= -MEMBERSHIP_TOL
        })
    }

    fn bbox(&self) -> [f64; 4] {
        let xs = self.vertices.iter().map(|v| v[0]);
        let ys = self.vertices.iter().map(|v| v[1]);
        [
            xs.clone().fold(f64::INFINITY, f64::min),
            xs.fold(f64::NEG_INFINITY, f64::max),
            ys.clone().fold(f64::INFINITY, f64::min),
            ys.fold(f64::NEG_INFINITY, f64::max),
        ]
    }
}

fn in_rect(r: [f64; 4], q: [f64; 2]) -> bool {
    q[0] >= r[0] - MEMBERSHIP_TOL
        && q[0] <= r[1] + MEMBERSHIP_TOL
        && q[1] >= r[2] - MEMBERSHIP_TOL
        && q[1] <= r[3] + MEMBERSHIP_TOL
}

/// Lattice points (as integer index pairs) of a union of closed pieces.
fn lattice_points(pieces: &[Polygon], n: u32, rects: &[[f64; 4]]) -> BTreeSet<(i64, i64)> {
    let nf = f64::from(n);
    let mut out = BTreeSet::new();
    let boxes: Vec<[f64; 4]> = pieces
        .iter()
        .map(Polygon::bbox)
        .chain(rects.iter().copied())
        .collect();
    for (k, b) in boxes.iter().enumerate() {
        let ix0 = (b[0] * nf - 1e-6).ceil() as i64;
        let ix1 = (b[1] * nf + 1e-6).floor() as i64;
        let iy0 = (b[2] * nf - 1e-6).ceil() as i64;
        let iy1 = (b[3] * nf + 1e-6).floor() as i64;
        for ix in ix0..=ix1 {
            for iy in iy0..=iy1 {
                let q = [ix as f64 / nf, iy as f64 / nf];
                let inside = if k < pieces.len() {
                    pieces[k].contains(q)
                } else {
                    in_rect(rects[k - pieces.len()], q)
                };
                if inside {
                    out.insert((ix, iy));
                }
            }
        }
    }
    out
}

fn domain_from_lattice(keys: Vec<Vec<i64>>, n: u32) -> Result<Domain> {
    if keys.is_empty() {
        return Err(Error::NoLatticePoints(n));
    }
    let nf = f64::from(n);
    let dim = keys[0].len();
    let coords: Vec<Vec<f64>> = keys
        .iter()
        .map(|k| k.iter().map(|&i| i as f64 / nf).collect())
        .collect();
    // classes keyed by exact lattice index
    let factors = (0..dim)
        .map(|axis| renumber(&keys.iter().map(|k| k[axis]).collect::<Vec<_>>()).0)
        .collect();
    Domain::from_factors(Some(coords), factors)
}

/// Discretize a region at lattice step `1/n`. Factor `i` groups points by their
/// `i`-th lattice coordinate. Points are ordered lexicographically by lattice
/// index, so a product grid has row-major ids with the first axis slowest.
pub fn generate_domain(region: &Region, n: u32) -> Result<Domain> {
    if n == 0 {
        return Err(Error::BadResolution);
    }
    let set = match region {
        Region::Rectangle { x0, x1, y0, y1 } => {
            if !(x0 <= x1 && y0 <= y1) {
                return Err(Error::BadRegion(format!(
                    "rectangle needs x0 <= x1 and y0 <= y1, got {x0},{x1},{y0},{y1}"
                )));
            }
            lattice_points(&[], n, &[[*x0, *x1, *y0, *y1]])
        }
        Region::LShapeK1 => lattice_points(&[], n, &[[0.0, 1.0, 0.0, 0.5], [0.0, 0.5, 0.0, 1.0]]),
        Region::UnionNcu => lattice_points(&[], n, &[[0.0, 1.0, 0.0, 2.0], [1.0, 2.0, 0.0, 1.0]]),
        Region::TriangleAbc => {
            let tri = Polygon::convex(vec![[0.0, 0.0], [2.0, 2.0], [1.0, 0.0]])?;
            lattice_points(&[tri], n, &[])
        }
        Region::ConvexPolygon(v) => lattice_points(&[Polygon::convex(v.clone())?], n, &[]),
        Region::ProductGrid(sizes) => {
            if sizes.len() < 2 {
                return Err(Error::TooFewFactors);
            }
            if sizes.contains(&0) {
                return Err(Error::NoLatticePoints(n));
            }
            let mut keys: Vec<Vec<i64>> = vec![vec![]];
            for &s in sizes {
                keys = keys
                    .into_iter()
                    .flat_map(|k| {
                        (0..s as i64).map(move |i| {
                            let mut k = k.clone();
                            k.push(i);
                            k
                        })
                    })
                    .collect();
            }
            return domain_from_lattice(keys, n);
        }
    };
    domain_from_lattice(set.into_iter().map(|(a, b)| vec![a, b]).collect(), n)
}

/// Partition points by `floor(direction·x / bin_width)`, renumbered to
/// contiguous class ids. Append the result with [`Domain::with_factor`].
pub fn inner_product_factor(d: &Domain, direction: &[f64], bin_width: f64) -> Result<Vec<usize>> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::BadBinWidth(bin_width));
    }
    if direction.iter().all(|&a| a == 0.0) {
        return Err(Error::ZeroDirection);
    }
    let mut bins = Vec::with_capacity(d.num_points());
    for j in 0..d.num_points() {
        let c = d.coords(j).ok_or(Error::MissingCoordinates)?;
        if c.len() != direction.len() {
            return Err(Error::DimensionMismatch {
                got: direction.len(),
                expected: c.len(),
            });
        }
        let t: f64 = c.iter().zip(direction).map(|(x, a)| x * a).sum();
        // lattice values land on bin edges up to rounding
        bins.push((t / bin_width + 1e-9).floor() as i64);
    }
    Ok(renumber(&bins).0)
}
