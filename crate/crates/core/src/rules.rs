//! Quadrature rules on the sphere, the two classical product rules, and the
//! text file format used to persist rules.
//!
//! File layout (UTF-8, LF):
//!
//! ```text
//! # sphquad-rule v1
//! # kind riqs20
//! # degree 11
//! # count 72
//! # orbits vertex:1,generic:1
//! <theta> <phi> <weight>      (K lines, 17 significant digits)
//! ```

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{DomainError, FormatError};
use crate::harmonics::Direction;
use crate::icosahedral::OrbitType;

pub const FOUR_PI: f64 = 4.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Riqs20,
    TrapezoidTrapezoid,
    GaussLegendreTrapezoid,
    Custom,
}

impl RuleKind {
    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Riqs20 => "riqs20",
            RuleKind::TrapezoidTrapezoid => "trapezoid_trapezoid",
            RuleKind::GaussLegendreTrapezoid => "gauss_legendre_trapezoid",
            RuleKind::Custom => "custom",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleKind {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "riqs20" => Ok(RuleKind::Riqs20),
            "trapezoid_trapezoid" => Ok(RuleKind::TrapezoidTrapezoid),
            "gauss_legendre_trapezoid" => Ok(RuleKind::GaussLegendreTrapezoid),
            "custom" => Ok(RuleKind::Custom),
            other => Err(DomainError::Invalid(format!("unknown rule kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleMeta {
    pub kind: RuleKind,
    pub degree: Option<usize>,
    pub orbits: Option<Vec<(OrbitType, usize)>>,
}

impl RuleMeta {
    pub fn custom() -> Self {
        RuleMeta {
            kind: RuleKind::Custom,
            degree: None,
            orbits: None,
        }
    }
}

/// Nodes and weights of `Q_K(f) = Σ w_k f(ξ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<Direction>,
    weights: Vec<f64>,
    pub meta: RuleMeta,
}

impl QuadratureRule {
    pub fn new(nodes: Vec<Direction>, weights: Vec<f64>, meta: RuleMeta) -> Result<Self, DomainError> {
        if nodes.is_empty() {
            return Err(DomainError::Invalid("a rule needs at least one node".into()));
        }
        if nodes.len() != weights.len() {
            return Err(DomainError::Invalid(format!(
                "{} nodes but {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(DomainError::Invalid(format!("non-finite weight {w}")));
        }
        Ok(QuadratureRule { nodes, weights, meta })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Direction] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ w_k f(ξ_k)` summed in node order.
    pub fn apply<F: FnMut(&Direction) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = 0.0;
        for (d, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(d);
        }
        acc
    }

    pub fn apply_complex<F: FnMut(&Direction) -> Complex64>(&self, mut f: F) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (d, w) in self.nodes.iter().zip(&self.weights) {
            acc += *w * f(d);
        }
        acc
    }

    /// Fallible integrand; the first error aborts the sum.
    pub fn try_apply<E, F: FnMut(&Direction) -> Result<f64, E>>(&self, mut f: F) -> Result<f64, E> {
        let mut acc = 0.0;
        for (d, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(d)?;
        }
        Ok(acc)
    }

    /// Non-fatal problems: weight sum far from 4π, non-positive weights.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let dev = self.weight_sum() - FOUR_PI;
        if dev.abs() > 1e-6 {
            out.push(format!("weight sum deviates from 4π by {dev:.3e}"));
        }
        let nonpos = self.weights.iter().filter(|&&w| w <= 0.0).count();
        if nonpos > 0 {
            out.push(format!("{nonpos} non-positive weights"));
        }
        out
    }
}

/// Trapezoid in θ (with `sin θ`) times trapezoid in φ. The `M_φ` coincident
/// copies of each pole collapse to one zero-weight node, so the rule has
/// `(M_θ − 1)·M_φ + 2` nodes.
pub fn product_trapezoid(m_theta: usize, m_phi: usize) -> Result<QuadratureRule, DomainError> {
    if m_theta < 2 || m_phi < 2 {
        return Err(DomainError::Invalid(format!(
            "trapezoid product rule needs M_theta >= 2 and M_phi >= 2, got ({m_theta}, {m_phi})"
        )));
    }
    let h = (PI / m_theta as f64) * (2.0 * PI / m_phi as f64);
    let k = (m_theta - 1) * m_phi + 2;
    let mut nodes = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    nodes.push(Direction::from_angles(0.0, 0.0));
    weights.push(0.0);
    for m in 1..m_theta {
        let theta = m as f64 * PI / m_theta as f64;
        let w = h * theta.sin();
        for n in 0..m_phi {
            nodes.push(Direction::from_angles(theta, 2.0 * PI * n as f64 / m_phi as f64));
            weights.push(w);
        }
    }
    nodes.push(Direction::from_angles(PI, 0.0));
    weights.push(0.0);
    QuadratureRule::new(
        nodes,
        weights,
        RuleMeta {
            kind: RuleKind::TrapezoidTrapezoid,
            degree: None,
            orbits: None,
        },
    )
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes in decreasing order.
///
/// Newton iteration on `P_n` from the Tricomi-type initial guess
/// `cos(π(i + 3/4)/(n + 1/2))`, exploiting the symmetry `x ↦ −x`.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>), DomainError> {
    if n == 0 {
        return Err(DomainError::Invalid("Gauss-Legendre rule needs n >= 1".into()));
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let eval = |t: f64| -> (f64, f64) {
        // P_n(t) and P_n'(t)
        let mut p0 = 1.0;
        let mut p1 = t;
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        if n == 1 {
            return (t, 1.0);
        }
        (p1, nf * (t * p1 - p0) / (t * t - 1.0))
    };
    for i in 0..n.div_ceil(2) {
        let mut t = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        if 2 * i + 1 == n {
            t = 0.0;
        }
        let mut converged = false;
        for _ in 0..100 {
            let (p, dp) = eval(t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() <= 1e-15 {
                if converged {
                    break;
                }
                converged = true;
            }
        }
        let (_, dp) = eval(t);
        let wt = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = t;
        w[i] = wt;
        x[n - 1 - i] = -t;
        w[n - 1 - i] = wt;
    }
    Ok((x, w))
}

/// Gauss–Legendre in `μ = cos θ` times the `M_φ`-point trapezoid in φ;
/// `M_θ · M_φ` nodes.
pub fn product_gauss_legendre(m_theta: usize, m_phi: usize) -> Result<QuadratureRule, DomainError> {
    if m_theta < 1 || m_phi < 2 {
        return Err(DomainError::Invalid(format!(
            "Gauss-Legendre product rule needs M_theta >= 1 and M_phi >= 2, got ({m_theta}, {m_phi})"
        )));
    }
    let (mu, wgl) = gauss_legendre(m_theta)?;
    let dphi = 2.0 * PI / m_phi as f64;
    let mut nodes = Vec::with_capacity(m_theta * m_phi);
    let mut weights = Vec::with_capacity(m_theta * m_phi);
    for (x, wx) in mu.iter().zip(&wgl) {
        let theta = x.acos();
        for n in 0..m_phi {
            nodes.push(Direction::from_angles(theta, dphi * n as f64));
            weights.push(wx * dphi);
        }
    }
    QuadratureRule::new(
        nodes,
        weights,
        RuleMeta {
            kind: RuleKind::GaussLegendreTrapezoid,
            degree: Some((2 * m_theta - 1).min(m_phi - 1)),
            orbits: None,
        },
    )
}

/// Serializes in the text format; floats carry 17 significant digits.
pub fn rule_to_string(rule: &QuadratureRule) -> String {
    let mut s = String::with_capacity(64 * rule.len() + 128);
    s.push_str("# sphquad-rule v1\n");
    let _ = writeln!(s, "# kind {}", rule.meta.kind);
    match rule.meta.degree {
        Some(d) => {
            let _ = writeln!(s, "# degree {d}");
        }
        None => s.push_str("# degree none\n"),
    }
    let _ = writeln!(s, "# count {}", rule.len());
    if let Some(orbits) = &rule.meta.orbits {
        let list: Vec<String> = orbits.iter().map(|(t, c)| format!("{t}:{c}")).collect();
        let _ = writeln!(s, "# orbits {}", list.join(","));
    }
    for (d, w) in rule.nodes.iter().zip(&rule.weights) {
        let _ = writeln!(s, "{:.16e} {:.16e} {:.16e}", d.theta(), d.phi(), w);
    }
    s
}

pub fn write_rule(rule: &QuadratureRule, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    fs::write(path, rule_to_string(rule)).map_err(|e| FormatError::io(path, e))
}

/// Parses the text format. `origin` is only used in error messages.
pub fn parse_rule(text: &str, origin: &Path) -> Result<QuadratureRule, FormatError> {
    let err = |line: usize, msg: String| FormatError::parse(origin, line, msg);
    let mut kind = None;
    let mut degree = None;
    let mut count = None;
    let mut orbits = None;
    let mut saw_magic = false;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            let mut parts = h.split_whitespace();
            let key = parts.next().unwrap_or("");
            let val = parts.next();
            match (key, val) {
                ("sphquad-rule", Some("v1")) => saw_magic = true,
                ("sphquad-rule", v) => return Err(err(lineno, format!("unsupported version {v:?}"))),
                ("kind", Some(v)) => kind = Some(v.parse::<RuleKind>().map_err(|e| err(lineno, e.to_string()))?),
                ("degree", Some("none")) => degree = Some(None),
                ("degree", Some(v)) => {
                    degree = Some(Some(v.parse::<usize>().map_err(|e| err(lineno, format!("bad degree: {e}")))?))
                }
                ("count", Some(v)) => {
                    count = Some(v.parse::<usize>().map_err(|e| err(lineno, format!("bad count: {e}")))?)
                }
                ("orbits", Some(v)) => {
                    let mut list = Vec::new();
                    for item in v.split(',') {
                        let (t, c) = item
                            .split_once(':')
                            .ok_or_else(|| err(lineno, format!("bad orbit entry '{item}'")))?;
                        let t = t.parse::<OrbitType>().map_err(|e| err(lineno, e.to_string()))?;
                        let c = c.parse::<usize>().map_err(|e| err(lineno, format!("bad orbit count: {e}")))?;
                        list.push((t, c));
                    }
                    orbits = Some(list);
                }
                _ => {}
            }
            continue;
        }
        if !saw_magic {
            return Err(err(lineno, "data before '# sphquad-rule v1' header".into()));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err(lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let mut vals = [0.0; 3];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f.parse::<f64>().map_err(|e| err(lineno, format!("bad number '{f}': {e}")))?;
        }
        nodes.push(Direction::from_angles(vals[0], vals[1]));
        weights.push(vals[2]);
    }
    let last = text.lines().count().max(1);
    if !saw_magic {
        return Err(err(1, "missing '# sphquad-rule v1' header".into()));
    }
    let count = count.ok_or_else(|| err(last, "missing '# count' header".into()))?;
    if count != nodes.len() {
        return Err(err(last, format!("header declares {count} nodes, found {}", nodes.len())));
    }
    let meta = RuleMeta {
        kind: kind.ok_or_else(|| err(last, "missing '# kind' header".into()))?,
        degree: degree.ok_or_else(|| err(last, "missing '# degree' header".into()))?,
        orbits,
    };
    QuadratureRule::new(nodes, weights, meta).map_err(|e| err(last, e.to_string()))
}

pub fn read_rule(path: impl AsRef<Path>) -> Result<QuadratureRule, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_rule(&text, path)
}
