//! Accuracy benchmarks: the Henyey–Greenstein test integrand, error sweeps
//! across rules, and weight-distribution statistics.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::DomainError;
use crate::exec::Exec;
use crate::harmonics::Direction;
use crate::rules::QuadratureRule;

/// `f(ξ) = (1/4π) (1 − g²) / (1 − 2g ξ·ξ' + g²)^{3/2}`; integrates to 1 over
/// the sphere for every `g` and axis `ξ'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HgIntegrand {
    g: f64,
    axis: Direction,
}

impl HgIntegrand {
    pub fn new(g: f64, axis: Direction) -> Result<Self, DomainError> {
        if !(g.abs() < 1.0) {
            return Err(DomainError::OutOfRange {
                name: "g",
                value: g,
                expected: "(-1, 1)",
            });
        }
        Ok(HgIntegrand { g, axis })
    }

    /// The benchmark setting: `g = 1/2`, `ξ' = (1/9, 4/9, 8/9)`.
    pub fn reference() -> Self {
        HgIntegrand {
            g: 0.5,
            axis: Direction::from_xyz(1.0 / 9.0, 4.0 / 9.0, 8.0 / 9.0),
        }
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn axis(&self) -> Direction {
        self.axis
    }

    pub fn value(&self, xi: &Direction) -> f64 {
        hg_kernel(self.g, xi.dot(&self.axis))
    }
}

/// The HG phase function as a function of the scattering cosine.
#[inline]
pub fn hg_kernel(g: f64, mu: f64) -> f64 {
    let g2 = g * g;
    let denom = 1.0 - 2.0 * g * mu + g2;
    (1.0 - g2) / (4.0 * PI * denom * denom.sqrt())
}

pub fn hg_value(k: &HgIntegrand, xi: &Direction) -> f64 {
    k.value(xi)
}

/// `Σ_{n>N} (2n+1)|g|^n`: bounds `|Q_K(f) − 1|` for any rule with positive
/// weights that is exact through degree `N`, since the integrand expands as
/// `Σ (2n+1)/(4π) gⁿ P_n(ξ·ξ')` and `|P_n| <= 1`.
pub fn hg_tail_bound(g: f64, degree: usize) -> f64 {
    let g = g.abs();
    if g == 0.0 {
        return 0.0;
    }
    // closed form of Σ_{n>=M} (2n+1) g^n with M = N+1
    let m = (degree + 1) as f64;
    let gm = g.powf(m);
    gm * ((2.0 * m + 1.0) / (1.0 - g) + 2.0 * g / ((1.0 - g) * (1.0 - g)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub rule_id: String,
    pub node_count: usize,
    pub abs_error: f64,
}

/// `|Q_K(f) − 1|` for every rule; rules run in parallel, each sum is sequential.
pub fn error_sweep(rules: &[(String, QuadratureRule)], k: &HgIntegrand, exec: Exec) -> Vec<ErrorRow> {
    exec.map(rules.len(), |i| {
        let (id, rule) = &rules[i];
        ErrorRow {
            rule_id: id.clone(),
            node_count: rule.len(),
            abs_error: (rule.apply(|d| k.value(d)) - 1.0).abs(),
        }
    })
}

pub fn error_csv(rows: &[ErrorRow]) -> String {
    let mut s = String::from("rule_id,node_count,abs_error\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.16e}", r.rule_id, r.node_count, r.abs_error);
    }
    s
}

/// Weights equal within this tolerance form one multiplicity class.
pub const WEIGHT_GROUP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightStats {
    /// Smallest positive weight and how many nodes carry it.
    pub min: (f64, usize),
    pub max: (f64, usize),
    pub histogram: Vec<HistogramBin>,
    sorted: Vec<f64>,
}

impl WeightStats {
    /// Fraction of all nodes whose weight lies in `[lo, hi]`.
    pub fn band_fraction(&self, lo: f64, hi: f64) -> f64 {
        self.band_count(lo, hi) as f64 / self.sorted.len() as f64
    }

    pub fn band_count(&self, lo: f64, hi: f64) -> usize {
        let a = self.sorted.partition_point(|&w| w < lo);
        let b = self.sorted.partition_point(|&w| w <= hi);
        b - a
    }

    pub fn node_count(&self) -> usize {
        self.sorted.len()
    }
}

/// Extremes with multiplicity, a 20-bin histogram over the positive range,
/// and band counts. Zero-weight nodes (product-rule poles) never count as
/// the minimum.
pub fn weight_stats(rule: &QuadratureRule) -> WeightStats {
    let mut sorted = rule.weights().to_vec();
    sorted.sort_by(f64::total_cmp);
    let wmax = *sorted.last().expect("rules are non-empty");
    let wmin = sorted.iter().copied().find(|&w| w > 0.0).unwrap_or(wmax);
    let count_near = |x: f64| sorted.iter().filter(|&&w| (w - x).abs() <= WEIGHT_GROUP_TOL).count();
    let bins = 20;
    let width = (wmax - wmin) / bins as f64;
    let mut histogram: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lo: wmin + width * b as f64,
            hi: if b + 1 == bins { wmax } else { wmin + width * (b + 1) as f64 },
            count: 0,
        })
        .collect();
    for &w in sorted.iter().filter(|&&w| w > 0.0) {
        let b = if width > 0.0 {
            (((w - wmin) / width) as usize).min(bins - 1)
        } else {
            0
        };
        histogram[b].count += 1;
    }
    WeightStats {
        min: (wmin, count_near(wmin)),
        max: (wmax, count_near(wmax)),
        histogram,
        sorted,
    }
}

pub fn weight_stats_csv(rows: &[(String, WeightStats)], band_lo: f64, band_hi: f64) -> String {
    let mut s = String::from("rule_id,w_min,w_min_count,w_max,w_max_count,band_lo,band_hi,band_fraction\n");
    for (id, st) in rows {
        let _ = writeln!(
            s,
            "{},{:.16e},{},{:.16e},{},{:e},{:e},{:.16e}",
            id,
            st.min.0,
            st.min.1,
            st.max.0,
            st.max.1,
            band_lo,
            band_hi,
            st.band_fraction(band_lo, band_hi)
        );
    }
    s
}
