//! Associated Legendre functions, complex spherical harmonics and the
//! reflection symmetries used to reduce the moment equations.
//!
//! Conventions: `P_n^m` is phase-free (no Condon–Shortley factor); the
//! `(-1)^m` sign sits in the harmonic itself,
//!
//! ```text
//! Y_n^m(θ, φ) = (-1)^m sqrt((2n+1)/(4π) (n-m)!/(n+m)!) P_n^m(cos θ) e^{imφ},
//! Y_n^{-m}    = (-1)^m conj(Y_n^m),
//! ```
//!
//! which is the usual physics convention.

use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::error::DomainError;

const TWO_PI: f64 = 2.0 * PI;

/// Below this `sin θ` a direction is treated as a pole and gets `φ = 0`.
pub const POLE_EPS: f64 = 1e-14;

/// A point on the unit sphere in canonical polar form.
///
/// `theta ∈ [0, π]`, `phi ∈ [0, 2π)`, and `phi == 0` at the poles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    theta: f64,
    phi: f64,
    v: Vector3<f64>,
}

impl Direction {
    /// Canonicalizes an arbitrary `(θ, φ)` pair. Already-canonical inputs are
    /// kept bit-for-bit.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let mut t = theta.rem_euclid(TWO_PI);
        let mut p = phi;
        if t > PI {
            t = TWO_PI - t;
            p += PI;
        }
        let mut p = wrap_2pi(p);
        if t.sin() < POLE_EPS {
            p = 0.0;
        }
        let (st, ct) = t.sin_cos();
        let (sp, cp) = p.sin_cos();
        Direction {
            theta: t,
            phi: p,
            v: Vector3::new(st * cp, st * sp, ct),
        }
    }

    /// Builds a direction from any non-zero vector (it is normalized first).
    pub fn from_vector(v: Vector3<f64>) -> Self {
        let v = v.normalize();
        let rho = v.x.hypot(v.y);
        let theta = rho.atan2(v.z);
        let phi = if rho < POLE_EPS {
            0.0
        } else {
            wrap_2pi(v.y.atan2(v.x))
        };
        Direction { theta, phi, v }
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Self {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn unit_vector(&self) -> Vector3<f64> {
        self.v
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.v.dot(&other.v)
    }

    /// Euclidean distance between the two points in R³.
    pub fn chordal_distance(&self, other: &Direction) -> f64 {
        (self.v - other.v).norm()
    }

    /// Unit tangent vectors `(e_θ, e_φ)` at this point.
    pub fn tangent_frame(&self) -> (Vector3<f64>, Vector3<f64>) {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        (
            Vector3::new(ct * cp, ct * sp, -st),
            Vector3::new(-sp, cp, 0.0),
        )
    }
}

fn wrap_2pi(p: f64) -> f64 {
    let w = p.rem_euclid(TWO_PI);
    if w >= TWO_PI {
        0.0
    } else {
        w
    }
}

/// Degree/order pair with `|m| <= n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HarmonicIndex {
    n: usize,
    m: i64,
}

impl HarmonicIndex {
    pub fn new(n: usize, m: i64) -> Result<Self, DomainError> {
        if m.unsigned_abs() as usize > n {
            return Err(DomainError::BadIndex { n: n as i64, m });
        }
        Ok(HarmonicIndex { n, m })
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> i64 {
        self.m
    }
}

/// Phase-free associated Legendre function `P_n^m(x)`, unnormalized.
///
/// Closed product for `P_m^m`, then upward recurrence in `n`. Values stay in
/// range of `f64` up to roughly `n = 150`.
pub fn assoc_legendre(n: usize, m: i64, x: f64) -> Result<f64, DomainError> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(DomainError::OutOfRange {
            name: "x",
            value: x,
            expected: "[-1, 1]",
        });
    }
    if m < 0 || m as usize > n {
        return Err(DomainError::BadIndex { n: n as i64, m });
    }
    let m = m as usize;
    let s = ((1.0 - x) * (1.0 + x)).sqrt();
    let mut pmm = 1.0;
    for i in 1..=m {
        pmm *= (2 * i - 1) as f64 * s;
    }
    if n == m {
        return Ok(pmm);
    }
    let mut prev = pmm;
    let mut cur = x * (2 * m + 1) as f64 * pmm;
    for k in (m + 2)..=n {
        let next = ((2 * k - 1) as f64 * x * cur - (k + m - 1) as f64 * prev) / (k - m) as f64;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Triangular storage offset of `(n, m)`, `0 <= m <= n`.
#[inline]
pub fn tri_index(n: usize, m: usize) -> usize {
    n * (n + 1) / 2 + m
}

/// Fully normalized functions
/// `P̄_n^m(cos θ) = sqrt((2n+1)/(4π) (n-m)!/(n+m)!) P_n^m(cos θ)` for all
/// `0 <= m <= n <= degree`, optionally with their θ-derivatives.
///
/// The normalization is folded into the recurrence, so no factorials are
/// formed and high degrees do not overflow.
#[derive(Debug, Clone)]
pub struct LegendreTable {
    degree: usize,
    values: Vec<f64>,
    dtheta: Vec<f64>,
}

impl LegendreTable {
    pub fn new(degree: usize, theta: f64) -> Self {
        let (s, x) = theta.sin_cos();
        Self::build(degree, x, s, false)
    }

    pub fn with_derivative(degree: usize, theta: f64) -> Self {
        let (s, x) = theta.sin_cos();
        Self::build(degree, x, s, true)
    }

    fn build(degree: usize, x: f64, s: f64, derivative: bool) -> Self {
        let len = tri_index(degree, degree) + 1;
        let mut p = vec![0.0; len];
        p[0] = 0.5 / PI.sqrt();
        for m in 1..=degree {
            let r = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
            p[tri_index(m, m)] = r * s * p[tri_index(m - 1, m - 1)];
        }
        for m in 0..degree {
            p[tri_index(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * x * p[tri_index(m, m)];
        }
        for m in 0..=degree {
            let mf = (m * m) as f64;
            for n in (m + 2)..=degree {
                let nf = n as f64;
                let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf)).sqrt();
                let n1 = nf - 1.0;
                let b = ((n1 * n1 - mf) / (4.0 * n1 * n1 - 1.0)).sqrt();
                p[tri_index(n, m)] = a * (x * p[tri_index(n - 1, m)] - b * p[tri_index(n - 2, m)]);
            }
        }
        let mut dtheta = Vec::new();
        if derivative {
            dtheta = vec![0.0; len];
            for n in 1..=degree {
                let nf = n as f64;
                dtheta[tri_index(n, 0)] = -(nf * (nf + 1.0)).sqrt() * p[tri_index(n, 1)];
                for m in 1..=n {
                    let mf = m as f64;
                    let lower = ((nf + mf) * (nf - mf + 1.0)).sqrt() * p[tri_index(n, m - 1)];
                    let upper = if m < n {
                        ((nf - mf) * (nf + mf + 1.0)).sqrt() * p[tri_index(n, m + 1)]
                    } else {
                        0.0
                    };
                    dtheta[tri_index(n, m)] = 0.5 * (lower - upper);
                }
            }
        }
        LegendreTable {
            degree,
            values: p,
            dtheta,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.values[tri_index(n, m)]
    }

    /// `d/dθ P̄_n^m(cos θ)`; panics if built without derivatives.
    #[inline]
    pub fn dtheta(&self, n: usize, m: usize) -> f64 {
        self.dtheta[tri_index(n, m)]
    }
}

#[inline]
fn parity(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Complex spherical harmonic `Y_n^m` at `p`.
pub fn sph_harm(idx: HarmonicIndex, p: &Direction) -> Complex64 {
    let table = LegendreTable::new(idx.n, p.theta);
    harmonic_from_table(&table, idx, p.phi)
}

pub(crate) fn harmonic_from_table(table: &LegendreTable, idx: HarmonicIndex, phi: f64) -> Complex64 {
    let ma = idx.m.unsigned_abs() as usize;
    let val = parity(ma as i64) * table.get(idx.n, ma);
    let y = Complex64::from_polar(val, ma as f64 * phi);
    if idx.m < 0 {
        parity(ma as i64) * y.conj()
    } else {
        y
    }
}

/// All `Y_n^m` with `0 <= m <= n <= degree` at one point, stored triangularly.
pub fn harmonics_upto(degree: usize, p: &Direction) -> Vec<Complex64> {
    let table = LegendreTable::new(degree, p.theta);
    let mut out = Vec::with_capacity(tri_index(degree, degree) + 1);
    for n in 0..=degree {
        for m in 0..=n {
            let v = parity(m as i64) * table.get(n, m);
            out.push(Complex64::from_polar(v, m as f64 * p.phi));
        }
    }
    out
}

/// Residuals of the three reflection identities of `Y_n^m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryResiduals {
    /// `|Y(θ, φ+π) − (−1)^m Y(θ, φ)|`
    pub azimuthal: f64,
    /// `|Y(θ+π, π−φ) − (−1)^{n+m} conj Y(θ, φ)|`
    pub flip: f64,
    /// `|Y_n^{−m}(θ+π, π−φ) − (−1)^n Y_n^m(θ, φ)|`
    pub flip_negative_order: f64,
}

impl SymmetryResiduals {
    pub fn max(&self) -> f64 {
        self.azimuthal.max(self.flip).max(self.flip_negative_order)
    }
}

fn symmetry_residuals(idx: HarmonicIndex, p: &Direction, flip_sign: f64, flip_neg_sign: f64) -> SymmetryResiduals {
    let m = idx.m;
    let y = sph_harm(idx, p);
    let shifted = Direction::from_angles(p.theta, p.phi + PI);
    let flipped = Direction::from_angles(p.theta + PI, PI - p.phi);
    let neg = HarmonicIndex { n: idx.n, m: -m };
    SymmetryResiduals {
        azimuthal: (sph_harm(idx, &shifted) - parity(m) * y).norm(),
        flip: (sph_harm(idx, &flipped) - flip_sign * y.conj()).norm(),
        flip_negative_order: (sph_harm(neg, &flipped) - flip_neg_sign * y).norm(),
    }
}

/// Checks the reflection identities that hold for every order `m`.
///
/// The point `(θ+π, π−φ)` is the image of `(x, y, z)` under the half-turn
/// about the x-axis, `(x, −y, −z)`; the shifted arguments are canonicalized
/// before evaluation.
pub fn symmetry_check(idx: HarmonicIndex, p: &Direction) -> SymmetryResiduals {
    let n = idx.n as i64;
    symmetry_residuals(idx, p, parity(n + idx.m), parity(n))
}

/// Same three residuals, but using the even-order forms
/// `Y(θ+π, π−φ) = (−1)^n conj Y` and `Y_n^{−m}(θ+π, π−φ) = (−1)^{n+m} Y_n^m`.
/// These agree with [`symmetry_check`] for even `m` and are off by the sign
/// `(−1)^m` otherwise.
pub fn symmetry_check_even_order_form(idx: HarmonicIndex, p: &Direction) -> SymmetryResiduals {
    let n = idx.n as i64;
    symmetry_residuals(idx, p, parity(n), parity(n + idx.m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_small_cases() {
        assert_eq!(assoc_legendre(0, 0, 0.7).unwrap(), 1.0);
        assert_eq!(assoc_legendre(1, 0, 0.5).unwrap(), 0.5);
        let expect = 3.0 * 0.3 * (1.0f64 - 0.09).sqrt();
        assert_relative_eq!(assoc_legendre(2, 1, 0.3).unwrap(), expect, max_relative = 1e-15);
        assert_relative_eq!(expect, 0.858_545_281_275_251, max_relative = 1e-14);
    }

    #[test]
    fn legendre_domain_errors() {
        assert!(assoc_legendre(3, 1, 1.5).is_err());
        assert!(assoc_legendre(3, 4, 0.1).is_err());
        assert!(assoc_legendre(3, -1, 0.1).is_err());
        assert!(HarmonicIndex::new(2, -3).is_err());
    }

    #[test]
    fn harmonic_examples() {
        let p = Direction::from_angles(1.1, 2.3);
        let y00 = sph_harm(HarmonicIndex::new(0, 0).unwrap(), &p);
        assert_relative_eq!(y00.re, 0.282_094_791_773_878_14, max_relative = 1e-15);
        assert_eq!(y00.im, 0.0);

        let north = Direction::from_angles(0.0, 0.0);
        let y10 = sph_harm(HarmonicIndex::new(1, 0).unwrap(), &north);
        assert_relative_eq!(y10.re, 0.488_602_511_9, max_relative = 1e-10);

        let eq = Direction::from_angles(PI / 2.0, 0.0);
        let y22 = sph_harm(HarmonicIndex::new(2, 2).unwrap(), &eq);
        assert_relative_eq!(y22.re, 0.25 * (15.0 / (2.0 * PI)).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(y22.re, 0.386_274_202_4, max_relative = 1e-9);
    }

    #[test]
    fn odd_order_sign_follows_physics_convention() {
        // Y_1^1 = -sqrt(3/8π) sinθ e^{iφ}
        let p = Direction::from_angles(0.7, 0.0);
        let y11 = sph_harm(HarmonicIndex::new(1, 1).unwrap(), &p);
        assert_relative_eq!(y11.re, -(3.0 / (8.0 * PI)).sqrt() * 0.7f64.sin(), max_relative = 1e-14);
        let y1m1 = sph_harm(HarmonicIndex::new(1, -1).unwrap(), &p);
        assert_relative_eq!(y1m1.re, (3.0 / (8.0 * PI)).sqrt() * 0.7f64.sin(), max_relative = 1e-14);
    }

    #[test]
    fn canonicalization() {
        let d = Direction::from_angles(-0.3, 7.0);
        assert!((0.0..=PI).contains(&d.theta()));
        assert!((0.0..TWO_PI).contains(&d.phi()));
        let v = d.unit_vector();
        let w = Vector3::new((-0.3f64).sin() * 7.0f64.cos(), (-0.3f64).sin() * 7.0f64.sin(), (-0.3f64).cos());
        assert!((v - w).norm() < 1e-14);

        let pole = Direction::from_angles(PI, 1.234);
        assert_eq!(pole.phi(), 0.0);
        let pole = Direction::from_angles(2.0 * PI, 1.234);
        assert_eq!(pole.phi(), 0.0);

        let c = Direction::from_angles(1.0, 2.0);
        let again = Direction::from_angles(c.theta(), c.phi());
        assert_eq!(c, again);
    }

    #[test]
    fn symmetry_examples() {
        let p = Direction::from_angles(0.81, 4.2);
        let r = symmetry_check(HarmonicIndex::new(3, 2).unwrap(), &p);
        assert!(r.max() <= 1e-13, "{r:?}");
        let r = symmetry_check(HarmonicIndex::new(0, 0).unwrap(), &p);
        assert!(r.max() <= 1e-15);
        // even order: both forms coincide
        let r = symmetry_check_even_order_form(HarmonicIndex::new(3, 2).unwrap(), &p);
        assert!(r.max() <= 1e-13);
        // odd order: the even-order form is off by a sign
        let r = symmetry_check_even_order_form(HarmonicIndex::new(7, 5).unwrap(), &p);
        assert!(r.flip > 1e-3);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let theta = 0.913;
        let h = 1e-6;
        let t = LegendreTable::with_derivative(30, theta);
        let tp = LegendreTable::new(30, theta + h);
        let tm = LegendreTable::new(30, theta - h);
        for n in 0..=30 {
            for m in 0..=n {
                let fd = (tp.get(n, m) - tm.get(n, m)) / (2.0 * h);
                assert!((fd - t.dtheta(n, m)).abs() < 1e-7 * (1.0 + fd.abs()), "n={n} m={m}");
            }
        }
    }

    #[test]
    fn table_matches_unnormalized() {
        let x: f64 = 0.37;
        let t = LegendreTable::new(20, x.acos());
        for n in 0..=20usize {
            for m in 0..=n {
                let mut ratio = 1.0;
                for k in (n - m + 1)..=(n + m) {
                    ratio /= k as f64;
                }
                let norm = ((2 * n + 1) as f64 / (4.0 * PI) * ratio).sqrt();
                let expect = norm * assoc_legendre(n, m as i64, x).unwrap();
                assert_relative_eq!(t.get(n, m), expect, max_relative = 1e-12, epsilon = 1e-300);
            }
        }
    }
}
