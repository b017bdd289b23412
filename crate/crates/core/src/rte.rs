//! Steady 3D radiative transport on a voxel grid:
//!
//! ```text
//! ξ·∇I + (μ_a + μ_s) I − μ_s Σ_j w_j p(ξ, ξ_j) I(x, ξ_j) = q     in Ω × S²
//! I = I₁                                                       on Γ₋
//! ```
//!
//! discretized with first-order upwind differences in space and a quadrature
//! rule in angle, and solved by Gauss–Seidel sweeps. Each sweep visits the
//! directions in order and, for each direction, the voxels in the order the
//! light travels, so upwind neighbours are already updated.
//!
//! The scattering sum for a block of directions is formed with one dense
//! matrix product at the start of the block, then corrected for the
//! directions of the same block that have already been updated. This gives
//! the point Gauss–Seidel iterate (up to summation order) at GEMM speed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::bench::hg_kernel;
use crate::error::{DomainError, FormatError, RteError};
use crate::exec::Exec;
use crate::harmonics::Direction;
use crate::rules::QuadratureRule;

/// Refuse problems above this many unknowns unless explicitly overridden.
pub const DESK_SCALE_CAP: u64 = 100_000_000;

const DIRECTION_BLOCK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Voxel edge length in mm.
    pub h: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, nz: usize, h: f64) -> Result<Self, DomainError> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(DomainError::Invalid(format!("empty grid {nx}x{ny}x{nz}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(DomainError::OutOfRange {
                name: "h",
                value: h,
                expected: "h > 0",
            });
        }
        Ok(Grid { nx, ny, nz, h })
    }

    pub fn voxels(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// x-fastest linear index.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::XMin, Face::XMax, Face::YMin, Face::YMax, Face::ZMin, Face::ZMax];

    /// Inward unit normal.
    pub fn inward_normal(self) -> [f64; 3] {
        match self {
            Face::XMin => [1.0, 0.0, 0.0],
            Face::XMax => [-1.0, 0.0, 0.0],
            Face::YMin => [0.0, 1.0, 0.0],
            Face::YMax => [0.0, -1.0, 0.0],
            Face::ZMin => [0.0, 0.0, 1.0],
            Face::ZMax => [0.0, 0.0, -1.0],
        }
    }

    fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    /// The face through which light travelling along `+axis` (or `−axis`) enters.
    fn entry(axis: usize, positive: bool) -> Face {
        match (axis, positive) {
            (0, true) => Face::XMin,
            (0, false) => Face::XMax,
            (1, true) => Face::YMin,
            (1, false) => Face::YMax,
            (2, true) => Face::ZMin,
            _ => Face::ZMax,
        }
    }
}

impl std::str::FromStr for Face {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "xmin" => Face::XMin,
            "xmax" => Face::XMax,
            "ymin" => Face::YMin,
            "ymax" => Face::YMax,
            "zmin" => Face::ZMin,
            "zmax" => Face::ZMax,
            other => return Err(DomainError::Invalid(format!("unknown face '{other}'"))),
        })
    }
}

/// User-supplied inflow: `(voxel (i, j, k), entry face, direction index, direction) -> I₁`.
pub type InflowFn = dyn Fn([usize; 3], Face, usize, &Direction) -> f64 + Send + Sync;

/// Boundary intensity `I₁` on the inflow part of the boundary.
#[derive(Clone, Default)]
pub enum Inflow {
    /// `I₁ = 0`.
    #[default]
    Vacuum,
    /// A rectangle of boundary voxels `lo..=hi` (in the two in-face
    /// coordinates, ordered x, y, z) with constant intensity. When
    /// `collimated`, only the rule direction closest to the inward normal
    /// carries it.
    Patch {
        face: Face,
        lo: [usize; 2],
        hi: [usize; 2],
        intensity: f64,
        collimated: bool,
    },
    Custom(Arc<InflowFn>),
}

impl fmt::Debug for Inflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Inflow::Vacuum => f.write_str("Vacuum"),
            Inflow::Patch {
                face,
                lo,
                hi,
                intensity,
                collimated,
            } => f
                .debug_struct("Patch")
                .field("face", face)
                .field("lo", lo)
                .field("hi", hi)
                .field("intensity", intensity)
                .field("collimated", collimated)
                .finish(),
            Inflow::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Inflow {
    /// Diffuse inflow of constant intensity over a whole face.
    pub fn face(face: Face, intensity: f64) -> Self {
        Inflow::Patch {
            face,
            lo: [0, 0],
            hi: [usize::MAX, usize::MAX],
            intensity,
            collimated: false,
        }
    }
}

/// Volume source `q`.
#[derive(Debug, Clone, Default)]
pub enum Source {
    #[default]
    Zero,
    /// Per-voxel, the same for every direction.
    Isotropic(Vec<f64>),
    /// Per (voxel, direction), `voxels × K`.
    Full(DMatrix<f64>),
}

/// Discrete phase function `P[k][j] ≈ p(ξ_k, ξ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMatrix {
    /// Row-major `K × K`.
    p: Vec<f64>,
    k: usize,
    row_normalized: bool,
}

impl PhaseMatrix {
    pub fn size(&self) -> usize {
        self.k
    }

    pub fn row_normalized(&self) -> bool {
        self.row_normalized
    }

    #[inline]
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.p[k * self.k + j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.p[k * self.k..(k + 1) * self.k]
    }

    /// `Σ_j w_j P[k][j]`.
    pub fn row_sum(&self, k: usize, weights: &[f64]) -> f64 {
        self.row(k).iter().zip(weights).map(|(p, w)| p * w).sum()
    }

    /// `A^T` with `A[k][j] = w_j P[k][j]`, column-major, for `S = I · A^T`.
    fn weighted_transpose(&self, weights: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.k, self.k, |j, k| weights[j] * self.get(k, j))
    }
}

/// HG phase matrix on the rule's nodes. With `normalize`, row `k` is scaled
/// so that `Σ_j w_j P[k][j] = 1`.
pub fn build_phase_matrix(rule: &QuadratureRule, g: f64, normalize: bool, exec: Exec) -> Result<PhaseMatrix, DomainError> {
    if !(g.abs() < 1.0) {
        return Err(DomainError::OutOfRange {
            name: "g",
            value: g,
            expected: "(-1, 1)",
        });
    }
    let nodes = rule.nodes();
    let w = rule.weights();
    let k = nodes.len();
    let rows = exec.map(k, |a| {
        let mut row: Vec<f64> = nodes.iter().map(|b| hg_kernel(g, nodes[a].dot(b))).collect();
        if normalize {
            let s: f64 = row.iter().zip(w).map(|(p, w)| p * w).sum();
            if s > 0.0 {
                let inv = 1.0 / s;
                row.iter_mut().for_each(|v| *v *= inv);
            }
        }
        row
    });
    Ok(PhaseMatrix {
        p: rows.into_iter().flatten().collect(),
        k,
        row_normalized: normalize,
    })
}

/// One optical material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub mu_a: f64,
    pub mu_s: f64,
    pub g: f64,
}

/// A discretized transport problem.
#[derive(Debug, Clone)]
pub struct RteProblem {
    grid: Grid,
    mu_a: Vec<f64>,
    mu_s: Vec<f64>,
    /// Which phase matrix each voxel uses.
    phase_of: Vec<usize>,
    phase_g: Vec<f64>,
    phases: Vec<PhaseMatrix>,
    rule: QuadratureRule,
    pub inflow: Inflow,
    pub source: Source,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemOptions {
    pub normalize_phase: bool,
    pub allow_large: bool,
    pub exec: Exec,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions {
            normalize_phase: true,
            allow_large: false,
            exec: Exec::default(),
        }
    }
}

fn check_rule(rule: &QuadratureRule) -> Result<(), DomainError> {
    if let Some(w) = rule.weights().iter().find(|&&w| w < 0.0) {
        return Err(DomainError::Invalid(format!("negative quadrature weight {w}")));
    }
    Ok(())
}

fn check_size(grid: &Grid, rule: &QuadratureRule, allow_large: bool) -> Result<(), RteError> {
    let unknowns = grid.voxels() as u64 * rule.len() as u64;
    if unknowns > DESK_SCALE_CAP && !allow_large {
        return Err(RteError::TooLarge {
            unknowns,
            cap: DESK_SCALE_CAP,
        });
    }
    Ok(())
}

impl RteProblem {
    /// Constant coefficients everywhere.
    pub fn homogeneous(
        grid: Grid,
        material: Material,
        rule: QuadratureRule,
        opts: ProblemOptions,
    ) -> Result<Self, RteError> {
        let labels = vec![0u8; grid.voxels()];
        Self::from_labels(grid, &labels, &[(0, material)], rule, opts)
    }

    /// Per-voxel materials from a label volume and a `label → material` table.
    pub fn from_labels(
        grid: Grid,
        labels: &[u8],
        table: &[(u8, Material)],
        rule: QuadratureRule,
        opts: ProblemOptions,
    ) -> Result<Self, RteError> {
        if labels.len() != grid.voxels() {
            return Err(RteError::Dimension(format!(
                "{} labels for a grid of {} voxels",
                labels.len(),
                grid.voxels()
            )));
        }
        for (label, m) in table {
            if !(m.mu_a > 0.0) {
                return Err(RteError::NonPositiveAbsorption { label: *label, mu_a: m.mu_a });
            }
            if !(m.mu_s >= 0.0) {
                return Err(DomainError::OutOfRange {
                    name: "mu_s",
                    value: m.mu_s,
                    expected: "mu_s >= 0",
                }
                .into());
            }
            if !(m.g.abs() < 1.0) {
                return Err(DomainError::OutOfRange {
                    name: "g",
                    value: m.g,
                    expected: "(-1, 1)",
                }
                .into());
            }
        }
        check_rule(&rule)?;
        check_size(&grid, &rule, opts.allow_large)?;

        let mut lookup: [Option<Material>; 256] = [None; 256];
        for (label, m) in table {
            lookup[*label as usize] = Some(*m);
        }
        let mut phase_g: Vec<f64> = Vec::new();
        let mut mu_a = Vec::with_capacity(labels.len());
        let mut mu_s = Vec::with_capacity(labels.len());
        let mut phase_of = Vec::with_capacity(labels.len());
        for &l in labels {
            let m = lookup[l as usize].ok_or(RteError::UnknownLabel(l))?;
            mu_a.push(m.mu_a);
            mu_s.push(m.mu_s);
            let p = match phase_g.iter().position(|&g| g == m.g) {
                Some(p) => p,
                None => {
                    phase_g.push(m.g);
                    phase_g.len() - 1
                }
            };
            phase_of.push(p);
        }
        let phases = phase_g
            .iter()
            .map(|&g| build_phase_matrix(&rule, g, opts.normalize_phase, opts.exec))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RteProblem {
            grid,
            mu_a,
            mu_s,
            phase_of,
            phase_g,
            phases,
            rule,
            inflow: Inflow::Vacuum,
            source: Source::Zero,
        })
    }

    pub fn with_inflow(mut self, inflow: Inflow) -> Self {
        self.inflow = inflow;
        self
    }

    pub fn with_source(mut self, source: Source) -> Result<Self, RteError> {
        match &source {
            Source::Isotropic(q) if q.len() != self.grid.voxels() => {
                return Err(RteError::Dimension(format!("source has {} voxels", q.len())))
            }
            Source::Full(q) if q.nrows() != self.grid.voxels() || q.ncols() != self.rule.len() => {
                return Err(RteError::Dimension(format!("source is {}x{}", q.nrows(), q.ncols())))
            }
            _ => {}
        }
        self.source = source;
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn mu_a(&self) -> &[f64] {
        &self.mu_a
    }

    pub fn mu_s(&self) -> &[f64] {
        &self.mu_s
    }

    pub fn phases(&self) -> &[PhaseMatrix] {
        &self.phases
    }

    pub fn phase_g(&self) -> &[f64] {
        &self.phase_g
    }

    pub fn phase_of(&self) -> &[usize] {
        &self.phase_of
    }

    pub fn unknowns(&self) -> u64 {
        self.grid.voxels() as u64 * self.rule.len() as u64
    }

    #[inline]
    fn source_at(&self, x: usize, k: usize) -> f64 {
        match &self.source {
            Source::Zero => 0.0,
            Source::Isotropic(q) => q[x],
            Source::Full(q) => q[(x, k)],
        }
    }

    /// Index of the rule direction closest to `n`.
    fn closest_direction(&self, n: [f64; 3]) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (k, d) in self.rule.nodes().iter().enumerate() {
            let v = d.unit_vector();
            let dot = v.x * n[0] + v.y * n[1] + v.z * n[2];
            if dot > best_dot {
                best_dot = dot;
                best = k;
            }
        }
        best
    }

    /// `I₁` seen by voxel `(i, j, k)` entering through `face` along direction `dir`.
    fn inflow_at(&self, voxel: [usize; 3], face: Face, dir: usize, collimated_dir: Option<usize>) -> f64 {
        match &self.inflow {
            Inflow::Vacuum => 0.0,
            Inflow::Patch {
                face: f,
                lo,
                hi,
                intensity,
                collimated,
            } => {
                if *f != face || (*collimated && collimated_dir != Some(dir)) {
                    return 0.0;
                }
                let axis = face.axis();
                let coords: Vec<usize> = (0..3).filter(|&a| a != axis).map(|a| voxel[a]).collect();
                if (0..2).all(|c| coords[c] >= lo[c] && coords[c] <= hi[c]) {
                    *intensity
                } else {
                    0.0
                }
            }
            Inflow::Custom(f) => f(voxel, face, dir, &self.rule.nodes()[dir]),
        }
    }

    fn collimated_direction(&self) -> Option<usize> {
        match &self.inflow {
            Inflow::Patch {
                face, collimated: true, ..
            } => Some(self.closest_direction(face.inward_normal())),
            _ => None,
        }
    }
}

/// Intensity unknowns and the iteration history.
#[derive(Debug, Clone)]
pub struct RteField {
    /// `voxels × K`, column `k` holds direction `k`.
    pub intensity: DMatrix<f64>,
    /// `(sweep, relative residual in max norm)`.
    pub residual_history: Vec<(usize, f64)>,
}

impl RteField {
    pub fn zeros(problem: &RteProblem) -> Self {
        RteField {
            intensity: DMatrix::zeros(problem.grid.voxels(), problem.rule.len()),
            residual_history: Vec::new(),
        }
    }

    /// `φ(x) = Σ_k w_k I(x, ξ_k)`.
    pub fn fluence(&self, rule: &QuadratureRule) -> Vec<f64> {
        let n = self.intensity.nrows();
        let mut phi = vec![0.0; n];
        for (k, w) in rule.weights().iter().enumerate() {
            for (p, v) in phi.iter_mut().zip(self.intensity.column(k).iter()) {
                *p += w * v;
            }
        }
        phi
    }

    pub fn residual_csv(&self) -> String {
        let mut s = String::from("iteration,relative_residual\n");
        for (i, r) in &self.residual_history {
            s.push_str(&format!("{i},{r:.16e}\n"));
        }
        s
    }
}

/// How directions inside a block see each other's updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepMode {
    /// Point Gauss–Seidel over (direction, voxel).
    #[default]
    GaussSeidel,
    /// Directions of a block are swept concurrently from the block-start
    /// scattering source. Changes the iteration count, not the fixed point.
    BlockJacobi,
}

/// Per-direction streaming geometry.
#[derive(Debug, Clone, Copy)]
struct Stream {
    /// `|ξ_a| / h`
    coef: [f64; 3],
    positive: [bool; 3],
}

fn streams(problem: &RteProblem) -> Vec<Stream> {
    let h = problem.grid.h;
    problem
        .rule
        .nodes()
        .iter()
        .map(|d| {
            let v = d.unit_vector();
            let c = [v.x, v.y, v.z];
            Stream {
                coef: [c[0].abs() / h, c[1].abs() / h, c[2].abs() / h],
                positive: [c[0] >= 0.0, c[1] >= 0.0, c[2] >= 0.0],
            }
        })
        .collect()
}

/// Transport sweep of one direction over all voxels in upwind order.
/// `scatter[x]` is `Σ_j w_j P[k][j] I[x, j]` for the voxel's phase.
fn sweep_direction(
    problem: &RteProblem,
    st: &Stream,
    dir: usize,
    collimated: Option<usize>,
    scatter: &dyn Fn(usize) -> f64,
    column: &mut [f64],
) {
    let g = &problem.grid;
    let dims = [g.nx, g.ny, g.nz];
    let order = |axis: usize, n: usize| -> usize {
        if st.positive[axis] {
            n
        } else {
            dims[axis] - 1 - n
        }
    };
    let stream_sum = st.coef[0] + st.coef[1] + st.coef[2];
    for kk in 0..g.nz {
        let k = order(2, kk);
        for jj in 0..g.ny {
            let j = order(1, jj);
            for ii in 0..g.nx {
                let i = order(0, ii);
                let x = g.index(i, j, k);
                let idx = [i, j, k];
                let mut upwind = 0.0;
                for a in 0..3 {
                    let c = st.coef[a];
                    if c == 0.0 {
                        continue;
                    }
                    let at_entry = if st.positive[a] { idx[a] == 0 } else { idx[a] == dims[a] - 1 };
                    let value = if at_entry {
                        problem.inflow_at(idx, Face::entry(a, st.positive[a]), dir, collimated)
                    } else {
                        let mut nb = idx;
                        if st.positive[a] {
                            nb[a] -= 1;
                        } else {
                            nb[a] += 1;
                        }
                        column[g.index(nb[0], nb[1], nb[2])]
                    };
                    upwind += c * value;
                }
                let mu_a = problem.mu_a[x];
                let mu_s = problem.mu_s[x];
                let diag = stream_sum + mu_a + mu_s;
                column[x] = (upwind + mu_s * scatter(x) + problem.source_at(x, dir)) / diag;
            }
        }
    }
}

/// `S[x, k] = Σ_j A[k][j] I[x, j]` for every phase and the directions `k0..k1`.
fn scattering_block(field: &DMatrix<f64>, weighted_t: &[DMatrix<f64>], k0: usize, k1: usize) -> Vec<DMatrix<f64>> {
    weighted_t
        .iter()
        .map(|at| {
            let mut s = DMatrix::zeros(field.nrows(), k1 - k0);
            s.gemm(1.0, field, &at.columns(k0, k1 - k0), 0.0);
            s
        })
        .collect()
}

/// Precomputed per-problem data reused across sweeps.
pub struct Sweeper<'a> {
    problem: &'a RteProblem,
    streams: Vec<Stream>,
    weighted_t: Vec<DMatrix<f64>>,
    collimated: Option<usize>,
    mode: SweepMode,
    exec: Exec,
    rhs_max: f64,
}

impl<'a> Sweeper<'a> {
    pub fn new(problem: &'a RteProblem, mode: SweepMode, exec: Exec) -> Self {
        let weighted_t = problem
            .phases
            .iter()
            .map(|p| p.weighted_transpose(problem.rule.weights()))
            .collect();
        let mut s = Sweeper {
            problem,
            streams: streams(problem),
            weighted_t,
            collimated: problem.collimated_direction(),
            mode,
            exec,
            rhs_max: 0.0,
        };
        s.rhs_max = s.rhs_max_norm();
        s
    }

    /// One full sweep over all directions, in place.
    pub fn sweep(&self, field: &mut DMatrix<f64>) {
        let p = self.problem;
        let nvox = p.grid.voxels();
        let kk = p.rule.len();
        let mut k0 = 0;
        while k0 < kk {
            let k1 = (k0 + DIRECTION_BLOCK).min(kk);
            let s = scattering_block(field, &self.weighted_t, k0, k1);
            match self.mode {
                SweepMode::GaussSeidel => {
                    let old = field.columns(k0, k1 - k0).into_owned();
                    // change of the block's already-swept columns, reused by later directions
                    let mut delta = vec![0.0; nvox * (k1 - k0)];
                    let mut corr: Vec<Vec<f64>> = vec![vec![0.0; nvox]; self.weighted_t.len()];
                    for k in k0..k1 {
                        for (c, at) in corr.iter_mut().zip(&self.weighted_t) {
                            c.fill(0.0);
                            let coeffs = &at.as_slice()[k * kk + k0..k * kk + k];
                            for (a, dj) in coeffs.iter().zip(delta.chunks_exact(nvox)) {
                                for (v, d) in c.iter_mut().zip(dj) {
                                    *v += a * d;
                                }
                            }
                        }
                        let column = &mut field.as_mut_slice()[k * nvox..(k + 1) * nvox];
                        let sk: Vec<&[f64]> = s.iter().map(|m| &m.as_slice()[(k - k0) * nvox..(k - k0 + 1) * nvox]).collect();
                        let scatter = |x: usize| {
                            let ph = p.phase_of[x];
                            sk[ph][x] + corr[ph][x]
                        };
                        sweep_direction(p, &self.streams[k], k, self.collimated, &scatter, column);
                        let c = k - k0;
                        let prev = &old.as_slice()[c * nvox..(c + 1) * nvox];
                        for ((d, new), prev) in delta[c * nvox..(c + 1) * nvox].iter_mut().zip(column.iter()).zip(prev) {
                            *d = new - prev;
                        }
                    }
                }
                SweepMode::BlockJacobi => {
                    let block = &mut field.as_mut_slice()[k0 * nvox..k1 * nvox];
                    self.exec.for_each_chunk_mut(block, nvox, |c, column| {
                        let k = k0 + c;
                        let scatter = |x: usize| s[p.phase_of[x]][(x, c)];
                        sweep_direction(p, &self.streams[k], k, self.collimated, &scatter, column);
                    });
                }
            }
            k0 = k1;
        }
    }

    /// Right-hand side `b[x, k] = q + Σ_a (|ξ_a|/h) I₁` (boundary terms only).
    fn rhs(&self, x: usize, k: usize) -> f64 {
        let p = self.problem;
        let g = &p.grid;
        let i = x % g.nx;
        let j = (x / g.nx) % g.ny;
        let kz = x / (g.nx * g.ny);
        let idx = [i, j, kz];
        let dims = [g.nx, g.ny, g.nz];
        let st = &self.streams[k];
        let mut b = p.source_at(x, k);
        for a in 0..3 {
            if st.coef[a] == 0.0 {
                continue;
            }
            let at_entry = if st.positive[a] { idx[a] == 0 } else { idx[a] == dims[a] - 1 };
            if at_entry {
                b += st.coef[a] * p.inflow_at(idx, Face::entry(a, st.positive[a]), k, self.collimated);
            }
        }
        b
    }

    fn rhs_max_norm(&self) -> f64 {
        let p = self.problem;
        let nvox = p.grid.voxels();
        let maxes = self.exec.map(p.rule.len(), |k| {
            (0..nvox).map(|x| self.rhs(x, k).abs()).fold(0.0, f64::max)
        });
        maxes.into_iter().fold(0.0, f64::max)
    }

    /// `max |b − A I|`.
    pub fn defect_max_norm(&self, field: &DMatrix<f64>) -> f64 {
        let p = self.problem;
        let g = &p.grid;
        let nvox = g.voxels();
        let kk = p.rule.len();
        let s = scattering_block(field, &self.weighted_t, 0, kk);
        let dims = [g.nx, g.ny, g.nz];
        let maxes = self.exec.map(kk, |k| {
            let st = &self.streams[k];
            let stream_sum = st.coef[0] + st.coef[1] + st.coef[2];
            let col = field.column(k);
            let mut worst: f64 = 0.0;
            for x in 0..nvox {
                let idx = [x % g.nx, (x / g.nx) % g.ny, x / (g.nx * g.ny)];
                let mut off = 0.0;
                for a in 0..3 {
                    if st.coef[a] == 0.0 {
                        continue;
                    }
                    let at_entry = if st.positive[a] { idx[a] == 0 } else { idx[a] == dims[a] - 1 };
                    if !at_entry {
                        let mut nb = idx;
                        if st.positive[a] {
                            nb[a] -= 1;
                        } else {
                            nb[a] += 1;
                        }
                        off += st.coef[a] * col[g.index(nb[0], nb[1], nb[2])];
                    }
                }
                let diag = stream_sum + p.mu_a[x] + p.mu_s[x];
                let ax = diag * col[x] - off - p.mu_s[x] * s[p.phase_of[x]][(x, k)];
                worst = worst.max((self.rhs(x, k) - ax).abs());
            }
            worst
        });
        maxes.into_iter().fold(0.0, f64::max)
    }

    /// Relative defect `max|b − A I| / max|b|` (absolute when `b = 0`).
    pub fn relative_residual(&self, field: &DMatrix<f64>) -> f64 {
        let d = self.defect_max_norm(field);
        if self.rhs_max > 0.0 {
            d / self.rhs_max
        } else {
            d
        }
    }
}

/// One in-place Gauss–Seidel sweep; returns the relative residual afterwards.
pub fn gauss_seidel_sweep(problem: &RteProblem, field: &mut RteField) -> f64 {
    let sw = Sweeper::new(problem, SweepMode::GaussSeidel, Exec::default());
    sw.sweep(&mut field.intensity);
        let r = sw.relative_residual(&field.intensity);
    let it = field.residual_history.len() + 1;
    field.residual_history.push((it, r));
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RteSolveOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub mode: SweepMode,
    pub exec: Exec,
    /// Consecutive residual increases that count as divergence.
    pub divergence_window: usize,
}

impl Default for RteSolveOptions {
    fn default() -> Self {
        RteSolveOptions {
            max_iters: 5000,
            tol: 1e-8,
            mode: SweepMode::GaussSeidel,
            exec: Exec::default(),
            divergence_window: 10,
        }
    }
}

/// Sweeps from a zero field until the relative residual reaches `tol` or the
/// budget runs out.
pub fn solve(problem: &RteProblem, opts: &RteSolveOptions) -> Result<RteField, RteError> {
    solve_from(problem, RteField::zeros(problem), opts)
}

pub fn solve_from(problem: &RteProblem, mut field: RteField, opts: &RteSolveOptions) -> Result<RteField, RteError> {
    let sw = Sweeper::new(problem, opts.mode, opts.exec);
    let mut rising = 0;
    let mut last = f64::INFINITY;
    for it in 1..=opts.max_iters {
        sw.sweep(&mut field.intensity);
        let r = sw.relative_residual(&field.intensity);
        field.residual_history.push((it, r));
        if !r.is_finite() {
            return Err(RteError::Divergence { sweeps: rising, residual: r });
        }
        if r > last {
            rising += 1;
            if rising >= opts.divergence_window {
                return Err(RteError::Divergence { sweeps: rising, residual: r });
            }
        } else {
            rising = 0;
        }
        last = r;
        if r <= opts.tol {
            break;
        }
    }
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceReport {
    /// Smallest `(diag − Σ|off-diagonal|) / μ_a` over all rows.
    pub worst_ratio: f64,
    pub rows: usize,
}

impl DominanceReport {
    /// `diag >= Σ|off| + μ_a (1 − ε)` on every row.
    pub fn holds(&self, eps: f64) -> bool {
        self.worst_ratio >= 1.0 - eps
    }
}

/// Row-by-row diagonal-dominance margin of the discrete operator.
pub fn dominance_certificate(problem: &RteProblem) -> DominanceReport {
    let g = &problem.grid;
    let st = streams(problem);
    let w = problem.rule.weights();
    let dims = [g.nx, g.ny, g.nz];
    let mut worst = f64::INFINITY;
    let mut rows = 0;
    let row_info: Vec<Vec<(f64, f64)>> = problem
        .phases
        .iter()
        .map(|ph| {
            (0..ph.size())
                .map(|k| {
                    let self_term = w[k] * ph.get(k, k);
                    let others: f64 = (0..ph.size()).filter(|&j| j != k).map(|j| (w[j] * ph.get(k, j)).abs()).sum();
                    (self_term, others)
                })
                .collect()
        })
        .collect();
    for x in 0..g.voxels() {
        let idx = [x % g.nx, (x / g.nx) % g.ny, x / (g.nx * g.ny)];
        let mu_a = problem.mu_a[x];
        let mu_s = problem.mu_s[x];
        let info = &row_info[problem.phase_of[x]];
        for (k, s) in st.iter().enumerate() {
            let mut interior = 0.0;
            for a in 0..3 {
                let at_entry = if s.positive[a] { idx[a] == 0 } else { idx[a] == dims[a] - 1 };
                if !at_entry {
                    interior += s.coef[a];
                }
            }
            let (self_term, others) = info[k];
            let diag = s.coef.iter().sum::<f64>() + mu_a + mu_s - mu_s * self_term;
            let off = interior + mu_s * others;
            worst = worst.min((diag - off) / mu_a);
            rows += 1;
        }
    }
    DominanceReport { worst_ratio: worst, rows }
}

// ---------------------------------------------------------------------------
// File formats

/// Contents of a `.hdr` volume header.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing: f64,
    pub data: PathBuf,
    pub element: ElementType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    U8,
    F64,
}

pub fn parse_header(text: &str, origin: &Path) -> Result<VolumeHeader, FormatError> {
    let err = |line: usize, m: String| FormatError::parse(origin, line, m);
    let mut dims = None;
    let mut spacing = None;
    let mut data = None;
    let mut element = ElementType::U8;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let key = it.next().unwrap_or("");
        let rest: Vec<&str> = it.collect();
        match key {
            "dims" => {
                if rest.len() != 3 {
                    return Err(err(i + 1, "dims needs three integers".into()));
                }
                let mut d = [0usize; 3];
                for (slot, v) in d.iter_mut().zip(&rest) {
                    *slot = v.parse().map_err(|e| err(i + 1, format!("bad dimension '{v}': {e}")))?;
                }
                dims = Some(d);
            }
            "spacing" => {
                let v = rest.first().ok_or_else(|| err(i + 1, "spacing needs a value".into()))?;
                spacing = Some(v.parse::<f64>().map_err(|e| err(i + 1, format!("bad spacing: {e}")))?);
            }
            "data" => {
                let v = rest.first().ok_or_else(|| err(i + 1, "data needs a file name".into()))?;
                data = Some(PathBuf::from(v));
            }
            "type" => {
                element = match rest.first().copied() {
                    Some("u8") => ElementType::U8,
                    Some("f64") => ElementType::F64,
                    other => return Err(err(i + 1, format!("unsupported element type {other:?}"))),
                }
            }
            other => return Err(err(i + 1, format!("unknown header key '{other}'"))),
        }
    }
    let last = text.lines().count().max(1);
    Ok(VolumeHeader {
        dims: dims.ok_or_else(|| err(last, "missing 'dims'".into()))?,
        spacing: spacing.ok_or_else(|| err(last, "missing 'spacing'".into()))?,
        data: data.ok_or_else(|| err(last, "missing 'data'".into()))?,
        element,
    })
}

pub fn header_to_string(h: &VolumeHeader) -> String {
    let mut s = format!(
        "dims {} {} {}\nspacing {}\ndata {}\n",
        h.dims[0],
        h.dims[1],
        h.dims[2],
        h.spacing,
        h.data.display()
    );
    if h.element == ElementType::F64 {
        s.push_str("type f64\n");
    }
    s
}

/// Reads a header plus its raw 8-bit label array (resolved relative to the header).
pub fn read_label_volume(hdr: impl AsRef<Path>) -> Result<(Grid, Vec<u8>), RteError> {
    let hdr = hdr.as_ref();
    let text = fs::read_to_string(hdr).map_err(|e| FormatError::io(hdr, e))?;
    let h = parse_header(&text, hdr)?;
    if h.element != ElementType::U8 {
        return Err(FormatError::parse(hdr, 1, "label volumes must be u8").into());
    }
    let grid = Grid::new(h.dims[0], h.dims[1], h.dims[2], h.spacing)?;
    let data_path = hdr.parent().unwrap_or(Path::new(".")).join(&h.data);
    let bytes = fs::read(&data_path).map_err(|e| FormatError::io(&data_path, e))?;
    if bytes.len() != grid.voxels() {
        return Err(RteError::Dimension(format!(
            "{} holds {} bytes, header declares {} voxels",
            data_path.display(),
            bytes.len(),
            grid.voxels()
        )));
    }
    Ok((grid, bytes))
}

/// Parses a `label,mu_a,mu_s,g` CSV (header row required).
pub fn parse_materials(text: &str, origin: &Path) -> Result<Vec<(u8, Material)>, FormatError> {
    let err = |line: usize, m: String| FormatError::parse(origin, line, m);
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == "label,mu_a,mu_s,g" => {}
        Some((i, h)) => return Err(err(i + 1, format!("expected header 'label,mu_a,mu_s,g', found '{h}'"))),
        None => return Err(err(1, "empty material table".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err(i + 1, format!("expected 4 fields, found {}", f.len())));
        }
        let label: u8 = f[0].parse().map_err(|e| err(i + 1, format!("bad label '{}': {e}", f[0])))?;
        let mut v = [0.0; 3];
        for (slot, s) in v.iter_mut().zip(&f[1..]) {
            *slot = s.parse().map_err(|e| err(i + 1, format!("bad number '{s}': {e}")))?;
        }
        if out.iter().any(|(l, _)| *l == label) {
            return Err(err(i + 1, format!("duplicate label {label}")));
        }
        out.push((
            label,
            Material {
                mu_a: v[0],
                mu_s: v[1],
                g: v[2],
            },
        ));
    }
    Ok(out)
}

/// Builds a problem from a label volume header and a material CSV.
pub fn load_voxel_problem(
    label_file: impl AsRef<Path>,
    material_table: impl AsRef<Path>,
    rule: QuadratureRule,
    opts: ProblemOptions,
) -> Result<RteProblem, RteError> {
    let (grid, labels) = read_label_volume(label_file)?;
    let mt = material_table.as_ref();
    let text = fs::read_to_string(mt).map_err(|e| FormatError::io(mt, e))?;
    let table = parse_materials(&text, mt)?;
    RteProblem::from_labels(grid, &labels, &table, rule, opts)
}

/// Writes `<stem>.hdr` and `<stem>.raw` (little-endian f64, x fastest).
pub fn write_f64_volume(stem: impl AsRef<Path>, grid: &Grid, values: &[f64]) -> Result<(), FormatError> {
    let stem = stem.as_ref();
    let raw = stem.with_extension("raw");
    let hdr = stem.with_extension("hdr");
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&raw, bytes).map_err(|e| FormatError::io(&raw, e))?;
    let header = VolumeHeader {
        dims: [grid.nx, grid.ny, grid.nz],
        spacing: grid.h,
        data: PathBuf::from(raw.file_name().expect("file name")),
        element: ElementType::F64,
    };
    fs::write(&hdr, header_to_string(&header)).map_err(|e| FormatError::io(&hdr, e))
}

/// Reads a volume written by [`write_f64_volume`].
pub fn read_f64_volume(hdr: impl AsRef<Path>) -> Result<(Grid, Vec<f64>), RteError> {
    let hdr = hdr.as_ref();
    let text = fs::read_to_string(hdr).map_err(|e| FormatError::io(hdr, e))?;
    let h = parse_header(&text, hdr)?;
    let grid = Grid::new(h.dims[0], h.dims[1], h.dims[2], h.spacing)?;
    let data_path = hdr.parent().unwrap_or(Path::new(".")).join(&h.data);
    let bytes = fs::read(&data_path).map_err(|e| FormatError::io(&data_path, e))?;
    if bytes.len() != 8 * grid.voxels() {
        return Err(RteError::Dimension(format!("{} has {} bytes", data_path.display(), bytes.len())));
    }
    let vals = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((grid, vals))
}
