//! The 60-element rotation group of the icosahedron with vertices
//! `(±1, 0, ±α), (±α, ±1, 0), (0, ±α, ±1)`, `α = (√5 − 1)/2`, and orbits of
//! points on the sphere under it.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::DomainError;
use crate::harmonics::Direction;

/// `(√5 − 1)/2`
pub const ALPHA: f64 = 0.618_033_988_749_894_9;

/// Points closer than this (chordal) are the same point.
pub const DEDUP_TOL: f64 = 1e-9;

const MATRIX_TOL: f64 = 1e-10;

/// Generic reference point whose Dirichlet cell serves as fundamental domain.
const REFERENCE: [f64; 3] = [0.231_617_8, 0.312_541_9, 0.921_239_4];

/// The twelve icosahedron vertices scaled to unit length.
pub fn icosahedron_vertices() -> Vec<Vector3<f64>> {
    let a = ALPHA;
    let mut v = Vec::with_capacity(12);
    for s1 in [1.0, -1.0] {
        for s2 in [1.0, -1.0] {
            v.push(Vector3::new(s1, 0.0, s2 * a));
            v.push(Vector3::new(s1 * a, s2, 0.0));
            v.push(Vector3::new(0.0, s1 * a, s2));
        }
    }
    v.into_iter().map(|x| x.normalize()).collect()
}

/// A finite group of proper rotations, stored as matrices.
#[derive(Debug, Clone)]
pub struct RotationGroup {
    elements: Vec<Matrix3<f64>>,
}

impl RotationGroup {
    pub fn elements(&self) -> &[Matrix3<f64>] {
        &self.elements
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    /// Index of the element equal to `m` within `tol` entrywise.
    pub fn find(&self, m: &Matrix3<f64>, tol: f64) -> Option<usize> {
        self.elements.iter().position(|e| (e - m).amax() <= tol)
    }
}

/// Builds the icosahedral rotation group by closing two generators: the
/// 5-fold turn about the vertex `(1, 0, α)` and the half-turn about the
/// z-axis (an edge midpoint axis).
pub fn build_group() -> Result<RotationGroup, DomainError> {
    let axis = Unit::new_normalize(Vector3::new(1.0, 0.0, ALPHA));
    let five = Rotation3::from_axis_angle(&axis, 2.0 * PI / 5.0).into_inner();
    let two = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
    let generators = [five, two];

    let mut group = RotationGroup {
        elements: vec![Matrix3::identity()],
    };
    let mut frontier = 0;
    while frontier < group.elements.len() {
        let e = group.elements[frontier];
        for g in &generators {
            let prod = g * e;
            if group.find(&prod, MATRIX_TOL).is_none() {
                if group.elements.len() == 60 {
                    return Err(DomainError::Invalid(
                        "icosahedral group closure exceeded 60 elements".into(),
                    ));
                }
                group.elements.push(prod);
            }
        }
        frontier += 1;
    }
    if group.elements.len() != 60 {
        return Err(DomainError::Invalid(format!(
            "icosahedral group closed at {} elements",
            group.elements.len()
        )));
    }
    Ok(group)
}

/// Shared instance of the icosahedral group.
pub fn icosahedral_group() -> &'static RotationGroup {
    static GROUP: OnceLock<RotationGroup> = OnceLock::new();
    GROUP.get_or_init(|| build_group().expect("icosahedral group construction"))
}

/// Orbit class by stabilizer size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OrbitType {
    /// 12 points, stabilizer of order 5.
    Vertex,
    /// 30 points, stabilizer of order 2.
    Edge,
    /// 20 points, stabilizer of order 3.
    Face,
    /// 60 points, trivial stabilizer.
    Generic,
}

impl OrbitType {
    pub fn size(self) -> usize {
        match self {
            OrbitType::Vertex => 12,
            OrbitType::Edge => 30,
            OrbitType::Face => 20,
            OrbitType::Generic => 60,
        }
    }

    pub fn from_size(n: usize) -> Option<Self> {
        match n {
            12 => Some(OrbitType::Vertex),
            30 => Some(OrbitType::Edge),
            20 => Some(OrbitType::Face),
            60 => Some(OrbitType::Generic),
            _ => None,
        }
    }

    /// A fixed point of the stabilizer for the non-generic types.
    pub fn special_seed(self) -> Option<Direction> {
        let a = ALPHA;
        match self {
            OrbitType::Vertex => Some(Direction::from_xyz(1.0, 0.0, a)),
            OrbitType::Edge => Some(Direction::from_xyz(0.0, 0.0, 1.0)),
            // face {(0, α, 1), (0, −α, 1), (1, 0, α)}
            OrbitType::Face => Some(Direction::from_xyz(1.0, 0.0, 2.0 + a)),
            OrbitType::Generic => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OrbitType::Vertex => "vertex",
            OrbitType::Edge => "edge",
            OrbitType::Face => "face",
            OrbitType::Generic => "generic",
        }
    }
}

impl fmt::Display for OrbitType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OrbitType {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vertex" => Ok(OrbitType::Vertex),
            "edge" => Ok(OrbitType::Edge),
            "face" => Ok(OrbitType::Face),
            "generic" => Ok(OrbitType::Generic),
            other => Err(DomainError::Invalid(format!("unknown orbit type '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Orbit {
    pub representative: Direction,
    pub points: Vec<Direction>,
    pub orbit_type: OrbitType,
}

/// Images of `v` under every group element, in element order, without deduplication.
pub fn images(group: &RotationGroup, v: &Vector3<f64>) -> Vec<Vector3<f64>> {
    group.elements.iter().map(|g| g * v).collect()
}

/// The orbit `{g·seed}` with coincident images merged.
pub fn orbit(group: &RotationGroup, seed: &Direction) -> Orbit {
    let v = seed.unit_vector();
    let mut pts: Vec<Vector3<f64>> = Vec::with_capacity(group.order());
    for img in images(group, &v) {
        if pts.iter().all(|p| (p - img).norm() > DEDUP_TOL) {
            pts.push(img);
        }
    }
    let orbit_type = OrbitType::from_size(pts.len()).unwrap_or(OrbitType::Generic);
    Orbit {
        representative: *seed,
        points: pts.into_iter().map(Direction::from_vector).collect(),
        orbit_type,
    }
}

/// The orbit member of `p` closest to a fixed generic reference point; a
/// canonical representative used to pin orbit seeds to one fundamental domain.
pub fn canonical_representative(group: &RotationGroup, p: &Direction) -> Direction {
    let r = Vector3::from(REFERENCE);
    let v = p.unit_vector();
    let mut best = v;
    let mut best_dot = f64::NEG_INFINITY;
    for g in &group.elements {
        let w = g * v;
        let d = w.dot(&r);
        if d > best_dot {
            best_dot = d;
            best = w;
        }
    }
    Direction::from_vector(best)
}

/// Sorted-by-z lookup of points on the sphere.
pub(crate) struct PointIndex {
    order: Vec<usize>,
    z: Vec<f64>,
    points: Vec<Vector3<f64>>,
}

impl PointIndex {
    pub(crate) fn new(points: Vec<Vector3<f64>>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].z.total_cmp(&points[b].z));
        let z = order.iter().map(|&i| points[i].z).collect();
        PointIndex { order, z, points }
    }

    /// All indices within chordal distance `tol` of `q`.
    pub(crate) fn near(&self, q: &Vector3<f64>, tol: f64) -> Vec<usize> {
        let lo = self.z.partition_point(|&z| z < q.z - tol);
        let mut out = Vec::new();
        for (pos, &z) in self.z.iter().enumerate().skip(lo) {
            if z > q.z + tol {
                break;
            }
            let i = self.order[pos];
            if (self.points[i] - q).norm() <= tol {
                out.push(i);
            }
        }
        out
    }
}

/// Outcome of checking the two pairing conditions of the reduction theorem.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingReport {
    pub ok: bool,
    /// Nodes without a unique equal-weight partner under `(θ, φ+π)`.
    pub azimuthal_failures: Vec<usize>,
    /// Nodes without a unique equal-weight partner under `(θ+π, π−φ)`.
    pub flip_failures: Vec<usize>,
}

impl PairingReport {
    pub fn offending(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .azimuthal_failures
            .iter()
            .chain(&self.flip_failures)
            .copied()
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Condition (i): every node has exactly one partner at `(θ, φ+π)`, i.e. the
/// half-turn about z, `(−x, −y, z)`, carrying the same weight.
/// Condition (ii): the same for `(θ+π, π−φ)`, the half-turn about x,
/// `(x, −y, −z)`.
pub fn check_pairing_conditions(nodes: &[(Direction, f64)]) -> PairingReport {
    let idx = PointIndex::new(nodes.iter().map(|(d, _)| d.unit_vector()).collect());
    let wmax = nodes.iter().map(|(_, w)| w.abs()).fold(0.0, f64::max);
    let wtol = 1e-12 * wmax.max(1e-300);
    let check = |map: fn(Vector3<f64>) -> Vector3<f64>| -> Vec<usize> {
        let mut bad = Vec::new();
        for (k, (d, w)) in nodes.iter().enumerate() {
            let target = map(d.unit_vector());
            let hits = idx.near(&target, DEDUP_TOL);
            let good = hits.len() == 1 && (nodes[hits[0]].1 - w).abs() <= wtol;
            if !good {
                bad.push(k);
            }
        }
        bad
    };
    let azimuthal_failures = check(|v| Vector3::new(-v.x, -v.y, v.z));
    let flip_failures = check(|v| Vector3::new(v.x, -v.y, -v.z));
    PairingReport {
        ok: azimuthal_failures.is_empty() && flip_failures.is_empty(),
        azimuthal_failures,
        flip_failures,
    }
}

/// Splits a weighted node set into group orbits with constant weights.
///
/// Returns the orbit type of each orbit (in order of first appearance) or
/// `None` if the node set is not a disjoint union of orbits with orbit-constant
/// weights.
pub fn decompose(group: &RotationGroup, nodes: &[Direction], weights: &[f64]) -> Option<Vec<OrbitType>> {
    if nodes.len() != weights.len() {
        return None;
    }
    let idx = PointIndex::new(nodes.iter().map(|d| d.unit_vector()).collect());
    let wmax = weights.iter().map(|w| w.abs()).fold(0.0, f64::max);
    let wtol = 1e-10 * wmax.max(1e-300);
    let mut assigned = vec![false; nodes.len()];
    let mut out = Vec::new();
    for k in 0..nodes.len() {
        if assigned[k] {
            continue;
        }
        let orb = orbit(group, &nodes[k]);
        for p in &orb.points {
            let hits = idx.near(&p.unit_vector(), DEDUP_TOL);
            if hits.len() != 1 {
                return None;
            }
            let j = hits[0];
            if assigned[j] || (weights[j] - weights[k]).abs() > wtol {
                return None;
            }
            assigned[j] = true;
        }
        out.push(orb.orbit_type);
    }
    Some(out)
}

/// `(type, count)` pairs sorted by type.
pub fn summarize(types: &[OrbitType]) -> Vec<(OrbitType, usize)> {
    let mut out: Vec<(OrbitType, usize)> = Vec::new();
    let mut sorted = types.to_vec();
    sorted.sort();
    for t in sorted {
        match out.last_mut() {
            Some((lt, c)) if *lt == t => *c += 1,
            _ => out.push((t, 1)),
        }
    }
    out
}
