//! Construction of icosahedrally invariant rules by moment matching.
//!
//! The unknowns are one weight per orbit plus the seed angles `(θ, φ)` of each
//! generic orbit. Because every rule built from icosahedral orbits is
//! invariant under the half-turns about the x- and z-axes, the complex
//! conditions `Q_K(Y_n^m) = √(4π) δ_{n0} δ_{m0}` reduce to one real equation
//! per index in [`index_set`]: the real part for even `n`, the imaginary part
//! for odd `n`, even `m` only.
//!
//! The reduced system is heavily overdetermined (most equations are implied by
//! invariance), so it is solved as a nonlinear least-squares problem with an
//! SVD-based Levenberg–Marquardt iteration on log-weights, continued upward in
//! degree one generic orbit at a time.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DomainError, SolveError};
use crate::exec::Exec;
use crate::harmonics::{harmonics_upto, tri_index, Direction, LegendreTable};
use crate::icosahedral::{
    canonical_representative, icosahedral_group, orbit, summarize, OrbitType, PointIndex, RotationGroup, DEDUP_TOL,
};
use crate::rules::{QuadratureRule, RuleKind, RuleMeta, FOUR_PI};

/// The reduced index set: `(2ν, 2μ)` with `0 <= 2μ <= 2ν <= N` and
/// `(2ν+1, 2μ)` with `0 < 2μ <= 2ν+1 <= N`, sorted by `(n, m)`.
pub fn index_set(degree: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for n in 0..=degree {
        let start = if n % 2 == 0 { 0 } else { 2 };
        for m in (start..=n).step_by(2) {
            out.push((n, m));
        }
    }
    out
}

/// Dimension of the icosahedrally invariant harmonics of exact degree `n`,
/// from the generating function `(1 + t^15) / ((1 − t^6)(1 − t^10))`.
pub fn invariant_dimension(n: usize) -> usize {
    let count = |k: usize| (0..=k / 10).filter(|b| (k - 10 * b) % 6 == 0).count();
    count(n) + if n >= 15 { count(n - 15) } else { 0 }
}

/// Number of independent invariant conditions through degree `n`.
pub fn invariant_conditions(n: usize) -> usize {
    (0..=n).map(invariant_dimension).sum()
}

/// Highest degree whose invariant condition count does not exceed `dof`.
pub fn max_degree_for_dof(dof: usize) -> usize {
    let mut d = 0;
    while invariant_conditions(d + 1) <= dof {
        d += 1;
    }
    d
}

/// Heuristic recipe for degree `n`: one vertex orbit plus enough generic
/// orbits that the unknown count reaches the invariant condition count.
pub fn suggest_recipe(degree: usize) -> Vec<OrbitType> {
    let need = invariant_conditions(degree).saturating_sub(1);
    let mut r = vec![OrbitType::Vertex];
    r.extend(std::iter::repeat(OrbitType::Generic).take(need.div_ceil(3)));
    r
}

/// Parses `vertex,face,genericx32`-style recipes (or `auto`).
pub fn parse_recipe(text: &str, degree: usize) -> Result<Vec<OrbitType>, DomainError> {
    let text = text.trim();
    if text == "auto" {
        return Ok(suggest_recipe(degree));
    }
    let mut out = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        let (name, count) = match item.rsplit_once('x') {
            Some((n, c)) if n.parse::<OrbitType>().is_ok() => (
                n,
                c.parse::<usize>()
                    .map_err(|_| DomainError::Invalid(format!("bad repeat count in '{item}'")))?,
            ),
            _ => (item, 1),
        };
        let t: OrbitType = name.parse()?;
        out.extend(std::iter::repeat(t).take(count));
    }
    if out.is_empty() {
        return Err(DomainError::Invalid("empty recipe".into()));
    }
    Ok(out)
}

pub fn recipe_to_string(recipe: &[OrbitType]) -> String {
    summarize(recipe)
        .iter()
        .map(|(t, c)| if *c == 1 { t.to_string() } else { format!("{t}x{c}") })
        .collect::<Vec<_>>()
        .join(",")
}

/// One orbit's parameters. `seed` is present only for generic orbits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitParam {
    pub orbit_type: OrbitType,
    pub seed: Option<(f64, f64)>,
    pub weight: f64,
}

impl OrbitParam {
    pub fn fixed(orbit_type: OrbitType, weight: f64) -> Self {
        OrbitParam {
            orbit_type,
            seed: None,
            weight,
        }
    }

    pub fn generic(theta: f64, phi: f64, weight: f64) -> Self {
        OrbitParam {
            orbit_type: OrbitType::Generic,
            seed: Some((theta, phi)),
            weight,
        }
    }

    pub fn dof(&self) -> usize {
        if self.seed.is_some() {
            3
        } else {
            1
        }
    }
}

/// Per-orbit sums `Σ_{p in orbit} f_nm(p)` and their seed derivatives.
struct OrbitSums {
    value: Vec<f64>,
    d_theta: Vec<f64>,
    d_phi: Vec<f64>,
}

fn seed_vector(theta: f64, phi: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (
        Vector3::new(st * cp, st * sp, ct),
        Vector3::new(ct * cp, ct * sp, -st),
        Vector3::new(-st * sp, st * cp, 0.0),
    )
}

/// The reduced moment system for a fixed degree and orbit configuration.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    degree: usize,
    index: Vec<(usize, usize)>,
    params: Vec<OrbitParam>,
    group: &'static RotationGroup,
    exec: Exec,
}

impl MomentSystem {
    pub fn new(degree: usize, params: Vec<OrbitParam>) -> Self {
        MomentSystem {
            degree,
            index: index_set(degree),
            params,
            group: icosahedral_group(),
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn index(&self) -> &[(usize, usize)] {
        &self.index
    }

    pub fn params(&self) -> &[OrbitParam] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [OrbitParam] {
        &mut self.params
    }

    pub fn equations(&self) -> usize {
        self.index.len()
    }

    pub fn dof(&self) -> usize {
        self.params.iter().map(OrbitParam::dof).sum()
    }

    pub fn node_count(&self) -> usize {
        self.params.iter().map(|p| p.orbit_type.size()).sum()
    }

    /// Unknowns in natural form `(w, [θ, φ])` per orbit.
    pub fn unknowns(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.dof());
        for p in &self.params {
            v.push(p.weight);
            if let Some((t, f)) = p.seed {
                v.push(t);
                v.push(f);
            }
        }
        DVector::from_vec(v)
    }

    pub fn set_unknowns(&mut self, x: &DVector<f64>) {
        let mut i = 0;
        for p in &mut self.params {
            p.weight = x[i];
            i += 1;
            if p.seed.is_some() {
                p.seed = Some((x[i], x[i + 1]));
                i += 2;
            }
        }
    }

    fn orbit_points(&self, p: &OrbitParam) -> Vec<Vector3<f64>> {
        match p.seed {
            Some((t, f)) => {
                let (v, _, _) = seed_vector(t, f);
                self.group.elements().iter().map(|g| g * v).collect()
            }
            None => orbit(self.group, &p.orbit_type.special_seed().expect("special orbit"))
                .points
                .iter()
                .map(Direction::unit_vector)
                .collect(),
        }
    }

    fn orbit_sums(&self, p: &OrbitParam, derivatives: bool) -> OrbitSums {
        let rows = self.index.len();
        let want_d = derivatives && p.seed.is_some();
        let mut out = OrbitSums {
            value: vec![0.0; rows],
            d_theta: if want_d { vec![0.0; rows] } else { Vec::new() },
            d_phi: if want_d { vec![0.0; rows] } else { Vec::new() },
        };
        let (_, dv_t, dv_f) = match p.seed {
            Some((t, f)) => seed_vector(t, f),
            None => (Vector3::zeros(), Vector3::zeros(), Vector3::zeros()),
        };
        let n_max = self.degree;
        let mut cosm = vec![0.0; n_max + 1];
        let mut sinm = vec![0.0; n_max + 1];
        let members: Vec<(Vector3<f64>, Vector3<f64>, Vector3<f64>)> = match p.seed {
            Some(_) => self
                .group
                .elements()
                .iter()
                .zip(self.orbit_points(p))
                .map(|(g, v)| (v, g * dv_t, g * dv_f))
                .collect(),
            None => self
                .orbit_points(p)
                .into_iter()
                .map(|v| (v, Vector3::zeros(), Vector3::zeros()))
                .collect(),
        };
        for (v, dp_t, dp_f) in members {
            let d = Direction::from_vector(v);
            let theta = d.theta();
            let phi = d.phi();
            let table = if want_d {
                LegendreTable::with_derivative(n_max, theta)
            } else {
                LegendreTable::new(n_max, theta)
            };
            for m in (0..=n_max).step_by(2) {
                let (s, c) = (m as f64 * phi).sin_cos();
                cosm[m] = c;
                sinm[m] = s;
            }
            let (a_t, b_t, a_f, b_f, inv_sin) = if want_d {
                let (e_th, e_ph) = d.tangent_frame();
                let st = theta.sin();
                (
                    e_th.dot(&dp_t),
                    e_ph.dot(&dp_t),
                    e_th.dot(&dp_f),
                    e_ph.dot(&dp_f),
                    if st > 1e-12 { 1.0 / st } else { 0.0 },
                )
            } else {
                (0.0, 0.0, 0.0, 0.0, 0.0)
            };
            for (r, &(n, m)) in self.index.iter().enumerate() {
                let pbar = table.get(n, m);
                let (trig, dtrig) = if n % 2 == 0 {
                    (cosm[m], -(m as f64) * sinm[m])
                } else {
                    (sinm[m], m as f64 * cosm[m])
                };
                out.value[r] += pbar * trig;
                if want_d {
                    let f_t = table.dtheta(n, m) * trig;
                    let f_f = pbar * dtrig * inv_sin;
                    out.d_theta[r] += f_t * a_t + f_f * b_t;
                    out.d_phi[r] += f_t * a_f + f_f * b_f;
                }
            }
        }
        out
    }

    fn all_sums(&self, derivatives: bool) -> Vec<OrbitSums> {
        self.exec
            .map(self.params.len(), |o| self.orbit_sums(&self.params[o], derivatives))
    }

    fn residual_from(&self, sums: &[OrbitSums]) -> DVector<f64> {
        let mut r = DVector::zeros(self.index.len());
        r[0] = -FOUR_PI.sqrt();
        for (p, s) in self.params.iter().zip(sums) {
            for (ri, v) in r.iter_mut().zip(&s.value) {
                *ri += p.weight * v;
            }
        }
        r
    }

    fn jacobian_from(&self, sums: &[OrbitSums]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.index.len(), self.dof());
        let mut c = 0;
        for (p, s) in self.params.iter().zip(sums) {
            j.column_mut(c).copy_from_slice(&s.value);
            c += 1;
            if p.seed.is_some() {
                for (r, v) in s.d_theta.iter().enumerate() {
                    j[(r, c)] = p.weight * v;
                }
                for (r, v) in s.d_phi.iter().enumerate() {
                    j[(r, c + 1)] = p.weight * v;
                }
                c += 2;
            }
        }
        j
    }

    /// Reduced residual, one entry per index-set element.
    pub fn residual(&self) -> DVector<f64> {
        self.residual_from(&self.all_sums(false))
    }

    /// Jacobian of [`residual`](Self::residual) with respect to [`unknowns`](Self::unknowns).
    pub fn jacobian(&self) -> DMatrix<f64> {
        self.jacobian_from(&self.all_sums(true))
    }

    pub fn residual_and_jacobian(&self) -> (DVector<f64>, DMatrix<f64>) {
        let sums = self.all_sums(true);
        (self.residual_from(&sums), self.jacobian_from(&sums))
    }

    /// Expands the orbits into a rule (generic seeds replaced by their
    /// canonical representative).
    pub fn to_rule(&self) -> QuadratureRule {
        let mut nodes = Vec::with_capacity(self.node_count());
        let mut weights = Vec::with_capacity(self.node_count());
        let mut types = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let seed = match p.seed {
                Some((t, f)) => canonical_representative(self.group, &Direction::from_angles(t, f)),
                None => p.orbit_type.special_seed().expect("special orbit"),
            };
            let pts = match p.orbit_type {
                OrbitType::Generic => self
                    .group
                    .elements()
                    .iter()
                    .map(|g| Direction::from_vector(g * seed.unit_vector()))
                    .collect(),
                _ => orbit(self.group, &seed).points,
            };
            for d in pts {
                nodes.push(d);
                weights.push(p.weight);
            }
            types.push(p.orbit_type);
        }
        QuadratureRule::new(
            nodes,
            weights,
            RuleMeta {
                kind: RuleKind::Riqs20,
                degree: Some(self.degree),
                orbits: Some(summarize(&types)),
            },
        )
        .expect("orbit expansion yields a valid rule")
    }
}

/// `max |Q_K(Y_n^m) − √(4π) δ_{n0} δ_{m0}|` over all `|m| <= n <= degree`.
///
/// Independent of the reduction: every complex moment is formed. For real
/// weights `Q(Y_n^{−m}) = (−1)^m conj Q(Y_n^m)`, so negative orders share
/// the modulus of the positive ones.
pub fn verify_exactness(rule: &QuadratureRule, degree: usize, exec: Exec) -> f64 {
    const CHUNK: usize = 64;
    let len = tri_index(degree, degree) + 1;
    let nodes = rule.nodes();
    let weights = rule.weights();
    let chunks = nodes.len().div_ceil(CHUNK);
    let partials = exec.map(chunks, |c| {
        let mut acc = vec![num_complex::Complex64::new(0.0, 0.0); len];
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(nodes.len());
        for k in lo..hi {
            let y = harmonics_upto(degree, &nodes[k]);
            for (a, v) in acc.iter_mut().zip(&y) {
                *a += weights[k] * v;
            }
        }
        acc
    });
    let mut total = vec![num_complex::Complex64::new(0.0, 0.0); len];
    for p in partials {
        for (t, v) in total.iter_mut().zip(&p) {
            *t += v;
        }
    }
    total[0] -= FOUR_PI.sqrt();
    total.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest defect of the reduced real system over [`index_set`]: real parts
/// for even `n`, imaginary parts for odd `n`. For a rule that is not
/// invariant under the half-turns this can be far smaller than
/// [`verify_exactness`].
pub fn reduced_residual(rule: &QuadratureRule, degree: usize) -> f64 {
    let len = tri_index(degree, degree) + 1;
    let mut total = vec![num_complex::Complex64::new(0.0, 0.0); len];
    for (p, w) in rule.nodes().iter().zip(rule.weights()) {
        for (t, y) in total.iter_mut().zip(harmonics_upto(degree, p)) {
            *t += w * y;
        }
    }
    index_set(degree)
        .into_iter()
        .map(|(n, m)| {
            let z = total[tri_index(n, m)];
            let part = if n % 2 == 0 { z.re } else { z.im };
            let target = if n == 0 { FOUR_PI.sqrt() } else { 0.0 };
            (part - target).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub step_tol: f64,
    pub restarts: usize,
    pub verify_tol: f64,
    pub exec: Exec,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 200,
            tol: 1e-12,
            step_tol: 1e-14,
            restarts: 16,
            verify_tol: 1e-10,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSpec {
    pub degree: usize,
    pub recipe: Vec<OrbitType>,
    pub seed: u64,
    pub opts: SolveOptions,
}

/// One Levenberg–Marquardt iteration, as written to the convergence log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub step: usize,
    pub degree: usize,
    pub residual_inf: f64,
    pub damping: f64,
    pub dof: usize,
    pub equations: usize,
}

#[derive(Debug, Clone)]
pub struct Construction {
    pub rule: QuadratureRule,
    pub params: Vec<OrbitParam>,
    pub log: Vec<IterationRecord>,
    pub exactness: f64,
}

impl Construction {
    pub fn log_csv(&self) -> String {
        log_to_csv(&self.log)
    }
}

pub fn log_to_csv(log: &[IterationRecord]) -> String {
    let mut s = String::from("step,N,residual_inf,damping,dof,equations\n");
    for r in log {
        s.push_str(&format!(
            "{},{},{:.6e},{:.6e},{},{}\n",
            r.step, r.degree, r.residual_inf, r.damping, r.dof, r.equations
        ));
    }
    s
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// Levenberg–Marquardt on `(log w, θ, φ)`. Returns the final residual ∞-norm.
fn levenberg_marquardt(
    sys: &mut MomentSystem,
    opts: &SolveOptions,
    log: &mut Vec<IterationRecord>,
) -> Result<f64, SolveError> {
    let to_log = |x: &DVector<f64>, sys: &MomentSystem| {
        let mut y = x.clone();
        let mut i = 0;
        for p in sys.params() {
            y[i] = y[i].ln();
            i += p.dof();
        }
        y
    };
    let from_log = |y: &DVector<f64>, sys: &MomentSystem| {
        let mut x = y.clone();
        let mut i = 0;
        for p in sys.params() {
            x[i] = x[i].exp();
            i += p.dof();
        }
        x
    };

    let mut y = to_log(&sys.unknowns(), sys);
    let (mut r, mut jac) = sys.residual_and_jacobian();
    let mut cost = r.norm_squared();
    let mut lambda_rel = 1e-3;
    for _ in 0..opts.max_iters {
        let res_inf = inf_norm(&r);
        log.push(IterationRecord {
            step: log.len(),
            degree: sys.degree(),
            residual_inf: res_inf,
            damping: lambda_rel,
            dof: sys.dof(),
            equations: sys.equations(),
        });
        if res_inf <= opts.tol {
            return Ok(res_inf);
        }
        // chain rule for log-weights
        let mut i = 0;
        for p in sys.params() {
            let w = p.weight;
            jac.column_mut(i).scale_mut(w);
            i += p.dof();
        }
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::RankDeficiency { degree: sys.degree() });
        }
        let svd = jac.clone().svd(true, true);
        let u = svd.u.as_ref().expect("U requested");
        let vt = svd.v_t.as_ref().expect("V^T requested");
        let sigma = &svd.singular_values;
        let smax = sigma.max();
        if smax == 0.0 || !smax.is_finite() {
            return Err(SolveError::RankDeficiency { degree: sys.degree() });
        }
        let utr = u.transpose() * &r;
        let mut accepted = false;
        for _ in 0..40 {
            let lambda = lambda_rel * smax * smax;
            let mut coef = DVector::zeros(sigma.len());
            for k in 0..sigma.len() {
                let s = sigma[k];
                coef[k] = -s / (s * s + lambda) * utr[k];
            }
            let step = vt.transpose() * coef;
            let y_new = &y + &step;
            let x_new = from_log(&y_new, sys);
            if x_new.iter().any(|v| !v.is_finite()) {
                lambda_rel *= 10.0;
                continue;
            }
            let mut trial = sys.clone();
            trial.set_unknowns(&x_new);
            let r_new = trial.residual();
            let cost_new = r_new.norm_squared();
            if cost_new < cost {
                *sys = trial;
                y = y_new;
                lambda_rel = (lambda_rel * 0.2).max(1e-18);
                let (r2, j2) = sys.residual_and_jacobian();
                r = r2;
                jac = j2;
                cost = cost_new;
                accepted = true;
                if step.norm() <= opts.step_tol {
                    let res = inf_norm(&r);
                    return Ok(res);
                }
                break;
            }
            lambda_rel *= 5.0;
            if step.norm() <= opts.step_tol * 1e-3 {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    Ok(inf_norm(&r))
}

/// Points of a golden-angle spiral, used as low-discrepancy seed candidates.
fn spiral_point(k: usize, total: usize) -> Direction {
    let golden = PI * (3.0 - 5.0f64.sqrt());
    let z = 1.0 - (2.0 * k as f64 + 1.0) / total as f64;
    let r = (1.0 - z * z).sqrt();
    let phi = golden * k as f64;
    Direction::from_xyz(r * phi.cos(), r * phi.sin(), z)
}

/// Picks the canonical candidate whose orbit stays farthest from `existing`.
fn farthest_seed(group: &RotationGroup, existing: &[Vector3<f64>], candidates: &[Direction]) -> Direction {
    let mut best = candidates[0];
    let mut best_d = -1.0;
    for c in candidates {
        let c = canonical_representative(group, c);
        let imgs: Vec<Vector3<f64>> = group.elements().iter().map(|g| g * c.unit_vector()).collect();
        let mut dmin = f64::INFINITY;
        for (i, a) in imgs.iter().enumerate() {
            for b in existing.iter().chain(&imgs[..i]) {
                dmin = dmin.min((a - b).norm());
            }
        }
        if dmin > best_d {
            best_d = dmin;
            best = c;
        }
    }
    best
}

fn expanded_points(sys: &MomentSystem) -> Vec<Vector3<f64>> {
    sys.params().iter().flat_map(|p| sys.orbit_points(p)).collect()
}

/// Adds a generic orbit at a well separated position and rescales the
/// weights back to a total of 4π.
fn add_generic(sys: &mut MomentSystem, candidates: &[Direction]) {
    let existing = expanded_points(sys);
    let seed = farthest_seed(sys.group, &existing, candidates);
    let k_new = sys.node_count() + 60;
    let w_new = FOUR_PI / k_new as f64;
    let old_total: f64 = sys.params.iter().map(|p| p.weight * p.orbit_type.size() as f64).sum();
    let scale = if old_total > 0.0 {
        (FOUR_PI - 60.0 * w_new) / old_total
    } else {
        1.0
    };
    for p in &mut sys.params {
        p.weight *= scale;
    }
    sys.params
        .push(OrbitParam::generic(seed.theta(), seed.phi(), w_new));
}

/// Checks weights, orbit genericity and disjointness. Returns the offending
/// orbit on failure.
fn validate_configuration(sys: &MomentSystem) -> Result<(), SolveError> {
    let mean = FOUR_PI / sys.node_count() as f64;
    for (o, p) in sys.params().iter().enumerate() {
        if !(p.weight > 1e-8 * mean) {
            return Err(SolveError::NegativeWeight {
                orbit: o,
                weight: p.weight,
            });
        }
    }
    let pts = expanded_points(sys);
    let index = PointIndex::new(pts.clone());
    for (i, p) in pts.iter().enumerate() {
        if index.near(p, DEDUP_TOL).iter().any(|&j| j != i) {
            let mut acc = 0;
            let orbit_of = sys
                .params()
                .iter()
                .position(|q| {
                    acc += q.orbit_type.size();
                    i < acc
                })
                .unwrap_or(0);
            return Err(SolveError::NegativeWeight {
                orbit: orbit_of,
                weight: 0.0,
            });
        }
    }
    Ok(())
}

/// Continuation plan: `(active generic orbits, degree)` pairs with strictly
/// increasing degree, ending at the target.
fn ladder(fixed_dof: usize, generics: usize, degree: usize) -> Vec<(usize, usize)> {
    let mut steps = Vec::new();
    let mut last = None;
    for g in 0..generics {
        if fixed_dof + g == 0 {
            continue;
        }
        let d = max_degree_for_dof(fixed_dof + 3 * g).min(degree);
        if d >= degree {
            break;
        }
        if last.is_some_and(|l| d <= l) {
            continue;
        }
        steps.push((g, d));
        last = Some(d);
    }
    steps.push((generics, degree));
    steps
}

/// Builds an invariant rule exact through `spec.degree` from the orbit recipe.
pub fn solve(spec: &SolveSpec) -> Result<Construction, SolveError> {
    if spec.recipe.is_empty() {
        return Err(DomainError::Invalid("empty orbit recipe".into()).into());
    }
    let opts = spec.opts;
    let group = icosahedral_group();
    let fixed: Vec<OrbitType> = spec
        .recipe
        .iter()
        .copied()
        .filter(|t| *t != OrbitType::Generic)
        .collect();
    let generics = spec.recipe.len() - fixed.len();
    let fixed_nodes: usize = fixed.iter().map(|t| t.size()).sum();
    let candidates: Vec<Direction> = (0..256).map(|k| spiral_point(k, 256)).collect();

    let mut base = MomentSystem::new(0, Vec::new()).with_exec(opts.exec);
    let k0 = fixed_nodes.max(1);
    for t in &fixed {
        base.params.push(OrbitParam::fixed(*t, FOUR_PI / k0 as f64));
    }

    let mut log = Vec::new();
    let mut current = base;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for &(g, degree) in ladder(fixed.len(), generics, spec.degree).iter() {
        let previous = current.clone();
        let mut last_err = None;
        let mut solved = None;
        for attempt in 0..=opts.restarts {
            let mut sys = previous.clone();
            sys.degree = degree;
            sys.index = index_set(degree);
            let active_before = sys.params.iter().filter(|p| p.seed.is_some()).count();
            for _ in active_before..g {
                if attempt == 0 {
                    add_generic(&mut sys, &candidates);
                } else {
                    let pool: Vec<Direction> = (0..64)
                        .map(|_| {
                            let z: f64 = rng.gen_range(-1.0..1.0);
                            let a: f64 = rng.gen_range(0.0..2.0 * PI);
                            let r = (1.0 - z * z).sqrt();
                            Direction::from_xyz(r * a.cos(), r * a.sin(), z)
                        })
                        .collect();
                    add_generic(&mut sys, &pool);
                }
            }
            if attempt > 0 {
                // jiggle every seed a little so restarts explore new basins
                let amp = 0.02 * attempt as f64;
                for p in &mut sys.params {
                    if let Some((t, f)) = p.seed {
                        p.seed = Some((t + amp * rng.gen_range(-1.0..1.0), f + amp * rng.gen_range(-1.0..1.0)));
                    }
                    p.weight *= 1.0 + 0.1 * amp * rng.gen_range(-1.0..1.0);
                }
            }
            let res = match levenberg_marquardt(&mut sys, &opts, &mut log) {
                Ok(r) => r,
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            };
            if res > opts.tol.max(opts.verify_tol * 0.1) {
                last_err = Some(SolveError::NonConvergence {
                    degree,
                    iterations: opts.max_iters,
                    residual: res,
                });
                continue;
            }
            if let Err(e) = validate_configuration(&sys) {
                last_err = Some(e);
                continue;
            }
            solved = Some(sys);
            break;
        }
        match solved {
            Some(sys) => current = sys,
            None => {
                return Err(last_err.unwrap_or(SolveError::NonConvergence {
                    degree,
                    iterations: opts.max_iters,
                    residual: f64::NAN,
                }))
            }
        }
    }
    // canonical seeds
    for p in &mut current.params {
        if let Some((t, f)) = p.seed {
            let c = canonical_representative(group, &Direction::from_angles(t, f));
            p.seed = Some((c.theta(), c.phi()));
        }
    }
    let rule = current.to_rule();
    let exactness = verify_exactness(&rule, spec.degree, opts.exec);
    if exactness > opts.verify_tol {
        return Err(SolveError::NonConvergence {
            degree: spec.degree,
            iterations: log.len(),
            residual: exactness,
        });
    }
    Ok(Construction {
        rule,
        params: current.params,
        log,
        exactness,
    })
}

impl fmt::Display for OrbitParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.seed {
            Some((t, p)) => write!(f, "{}(θ={t:.6}, φ={p:.6}, w={:.6e})", self.orbit_type, self.weight),
            None => write!(f, "{}(w={:.6e})", self.orbit_type, self.weight),
        }
    }
}
