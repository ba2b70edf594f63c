//! Moebius transformations and the Poincare ball model of hyperbolic 3-space.
//!
//! Group elements are normalized matrices in `SL(2, C)` acting on the Riemann
//! sphere and, through the Poincare extension, on the upper half-space
//! `{(z, t) : t > 0}`. The half-space is identified with the unit ball by a
//! fixed inversion that sends the point `(0, 1)` to the origin `o` and the
//! point at infinity to the north pole `e3`. The boundary identification is
//! stereographic projection from the north pole, so the extended real line
//! maps to the great circle `{x2 = 0}` ("the real circle").

use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Complex = Complex64;

/// Maximum deviation of `ad - bc` from one after normalization.
pub const DET_TOL: f64 = 1e-12;
/// Points closer than this (in `1 - |x|`) to the sphere are rejected by the ball action.
pub const BOUNDARY_GUARD: f64 = 1e-14;
/// Band on `|tr^2 - 4|` inside which a map counts as parabolic.
pub const PARABOLIC_TOL: f64 = 1e-9;
/// Radius of the interior probes used by [`visual_distance`].
pub const VISUAL_PROBE_RADIUS: f64 = 1.0 - 1e-6;

pub(crate) type Vec3 = [f64; 3];

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm_sq(a: Vec3) -> f64 {
    dot(a, a)
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale(k: f64, a: Vec3) -> Vec3 {
    [k * a[0], k * a[1], k * a[2]]
}

pub(crate) fn normalize(a: Vec3) -> Vec3 {
    let n = norm_sq(a).sqrt();
    scale(1.0 / n, a)
}

/// A point of the open unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallPoint([f64; 3]);

impl BallPoint {
    pub const ORIGIN: BallPoint = BallPoint([0.0; 3]);

    pub fn new(x: [f64; 3]) -> Result<Self> {
        if !x.iter().all(|c| c.is_finite()) || norm_sq(x) >= 1.0 {
            return Err(Error::Invalid(format!("ball point {x:?} is not inside the unit ball")));
        }
        Ok(BallPoint(x))
    }

    pub fn coords(&self) -> [f64; 3] {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm_sq(self.0).sqrt()
    }

    /// `1 - |x|^2`, the conformal factor of the ball metric.
    pub fn conformal_factor(&self) -> f64 {
        1.0 - norm_sq(self.0)
    }

    /// Radial projection to the sphere. `None` at the origin.
    pub fn radial_projection(&self) -> Option<SpherePoint> {
        let n = self.norm();
        (n > 0.0).then(|| SpherePoint(scale(1.0 / n, self.0)))
    }
}

/// A point of the ideal boundary, the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint([f64; 3]);

impl SpherePoint {
    pub const NORTH: SpherePoint = SpherePoint([0.0, 0.0, 1.0]);

    pub fn new(eta: [f64; 3]) -> Result<Self> {
        if !eta.iter().all(|c| c.is_finite()) || (norm_sq(eta).sqrt() - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("{eta:?} is not a unit vector")));
        }
        Ok(SpherePoint(eta))
    }

    /// Rescales any nonzero vector onto the sphere.
    pub fn from_direction(v: [f64; 3]) -> Result<Self> {
        let n = norm_sq(v).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Invalid(format!("cannot normalize {v:?}")));
        }
        Ok(SpherePoint(scale(1.0 / n, v)))
    }

    pub fn coords(&self) -> [f64; 3] {
        self.0
    }

    /// Inverse stereographic image of `z` in the Riemann sphere chart.
    pub fn from_complex(z: Complex) -> Self {
        Self::from_homogeneous(z, Complex::new(1.0, 0.0))
    }

    /// The boundary point `[w1 : w2]` of the projective line.
    pub fn from_homogeneous(w1: Complex, w2: Complex) -> Self {
        let n1 = w1.norm_sqr();
        let n2 = w2.norm_sqr();
        let cross = w1 * w2.conj();
        if n2 == 0.0 {
            return SpherePoint::NORTH;
        }
        let s = n1 + n2;
        SpherePoint(normalize([2.0 * cross.re / s, 2.0 * cross.im / s, (n1 - n2) / s]))
    }

    /// Homogeneous coordinates `[w1 : w2]` with `w1 / w2 = z`, chosen to avoid `0/0`.
    pub fn to_homogeneous(&self) -> (Complex, Complex) {
        let [x, y, z] = self.0;
        if z <= 0.0 {
            (Complex::new(x, y), Complex::new(1.0 - z, 0.0))
        } else {
            (Complex::new(1.0 + z, 0.0), Complex::new(x, -y))
        }
    }

    /// Stereographic coordinate; `None` at the north pole.
    pub fn to_complex(&self) -> Option<Complex> {
        let (w1, w2) = self.to_homogeneous();
        (w2.norm_sqr() > 0.0).then(|| w1 / w2)
    }

    /// Great-circle distance in radians.
    pub fn angle_to(&self, other: &SpherePoint) -> f64 {
        // atan2 form keeps precision for nearly equal and nearly antipodal pairs
        let chord = norm_sq(sub(self.0, other.0)).sqrt();
        let sum = norm_sq(add(self.0, other.0)).sqrt();
        2.0 * chord.atan2(sum)
    }
}

/// Parameters shared by the coarse hyperbolic-geometry checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub delta_hyp: f64,
    pub eps_visual: f64,
    pub tol: f64,
}

impl AnalysisParams {
    pub fn new(delta_hyp: f64, eps_visual: f64, tol: f64) -> Result<Self> {
        if !(delta_hyp >= 0.0) || !(eps_visual > 0.0) || !(tol > 0.0) {
            return Err(Error::Invalid(format!(
                "analysis parameters require delta_hyp >= 0, eps_visual > 0, tol > 0 (got {delta_hyp}, {eps_visual}, {tol})"
            )));
        }
        Ok(AnalysisParams { delta_hyp, eps_visual, tol })
    }
}

impl Default for AnalysisParams {
    /// `delta_hyp = ln(1 + sqrt 2)`, the thin-triangle constant of `H^3`.
    fn default() -> Self {
        AnalysisParams { delta_hyp: (1.0 + 2f64.sqrt()).ln(), eps_visual: 1.0, tol: 1e-9 }
    }
}

/// A Moebius map `z -> (az + b) / (cz + d)` normalized to determinant one.
///
/// Of the two representatives `+-M` the one whose first entry of
/// non-negligible modulus (in the order `a, b, c, d`) has positive real part
/// is kept; on a zero real part the imaginary part decides.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoebiusMap {
    pub a: Complex,
    pub b: Complex,
    pub c: Complex,
    pub d: Complex,
}

impl fmt::Debug for MoebiusMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

impl MoebiusMap {
    pub const IDENTITY: MoebiusMap = MoebiusMap {
        a: Complex::new(1.0, 0.0),
        b: Complex::new(0.0, 0.0),
        c: Complex::new(0.0, 0.0),
        d: Complex::new(1.0, 0.0),
    };

    pub fn new(a: Complex, b: Complex, c: Complex, d: Complex) -> Result<Self> {
        let det = a * d - b * c;
        if !(det.norm() > 0.0) || !det.is_finite() {
            return Err(Error::Invalid("singular matrix".into()));
        }
        Ok(Self::normalize_raw(a, b, c, d))
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::new(a.into(), b.into(), c.into(), d.into())
    }

    fn normalize_raw(a: Complex, b: Complex, c: Complex, d: Complex) -> Self {
        let det = a * d - b * c;
        let k = det.sqrt().inv();
        Self::sign_normalized(a * k, b * k, c * k, d * k)
    }

    /// Normalization for products and inverses of unimodular matrices.
    ///
    /// The determinant is only recomputed while `ad - bc` is free of
    /// cancellation; for large entries it is one up to rounding already.
    fn renormalized(a: Complex, b: Complex, c: Complex, d: Complex) -> Self {
        let (ad, bc) = (a * d, b * c);
        if ad.norm() + bc.norm() < 1e4 {
            Self::normalize_raw(a, b, c, d)
        } else {
            Self::sign_normalized(a, b, c, d)
        }
    }

    fn sign_normalized(mut a: Complex, mut b: Complex, mut c: Complex, mut d: Complex) -> Self {
        let scale = [a, b, c, d].iter().map(|e| e.norm()).fold(0.0, f64::max);
        let eps = 1e-12 * scale;
        if let Some(lead) = [a, b, c, d].into_iter().find(|e| e.norm() > eps) {
            let flip = if lead.re.abs() > eps { lead.re < 0.0 } else { lead.im < 0.0 };
            if flip {
                a = -a;
                b = -b;
                c = -c;
                d = -d;
            }
        }
        MoebiusMap { a, b, c, d }
    }

    pub fn entries(&self) -> [Complex; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn det(&self) -> Complex {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> Complex {
        self.a + self.d
    }

    pub fn inverse(&self) -> MoebiusMap {
        Self::renormalized(self.d, -self.b, -self.c, self.a)
    }

    /// Squared Frobenius norm, equal to `2 cosh d(o, M o)`.
    pub fn frobenius_sq(&self) -> f64 {
        self.a.norm_sqr() + self.b.norm_sqr() + self.c.norm_sqr() + self.d.norm_sqr()
    }

    /// Hyperbolic displacement `d(o, M o)` of the basepoint.
    pub fn displacement(&self) -> f64 {
        (0.5 * self.frobenius_sq()).max(1.0).acosh()
    }

    /// Entrywise distance to `other` as elements of `PSL(2, C)` (minimum over the sign).
    pub fn psl_distance(&self, other: &MoebiusMap) -> f64 {
        let plus = self.entries().iter().zip(other.entries()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        let minus = self.entries().iter().zip(other.entries()).map(|(x, y)| (x + y).norm()).fold(0.0, f64::max);
        plus.min(minus)
    }

    pub fn approx_eq(&self, other: &MoebiusMap, tol: f64) -> bool {
        self.psl_distance(other) <= tol
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.approx_eq(&MoebiusMap::IDENTITY, tol)
    }

    /// Integer power by repeated squaring; negative exponents use the inverse.
    pub fn pow(&self, n: i64) -> MoebiusMap {
        let mut base = if n < 0 { self.inverse() } else { *self };
        let mut e = n.unsigned_abs();
        let mut acc = MoebiusMap::IDENTITY;
        while e > 0 {
            if e & 1 == 1 {
                acc = compose(&acc, &base);
            }
            e >>= 1;
            if e > 0 {
                base = compose(&base, &base);
            }
        }
        acc
    }

    /// Image of the upper half-space point `(z, t)`.
    pub fn apply_half_space(&self, z: Complex, t: f64) -> (Complex, f64) {
        let MoebiusMap { a, b, c, d } = *self;
        let czd = c * z + d;
        let denom = czd.norm_sqr() + c.norm_sqr() * t * t;
        let num = (a * z + b) * czd.conj() + a * c.conj() * (t * t);
        (num / denom, t / denom)
    }

    /// Direction of `M o` seen from the origin, together with `d(o, M o)`.
    ///
    /// Stable for arbitrarily large displacements, unlike [`apply_ball`].
    pub fn orbit_point(&self) -> (SpherePoint, f64) {
        let (z, t) = self.apply_half_space(Complex::new(0.0, 0.0), 1.0);
        let dist = self.displacement();
        let p2 = z.norm_sqr() + t * t;
        let v = [2.0 * z.re, 2.0 * z.im, p2 - 1.0];
        let n = norm_sq(v).sqrt();
        if n == 0.0 {
            return (SpherePoint::NORTH, dist);
        }
        (SpherePoint(scale(1.0 / n, v)), dist)
    }

    /// `M o` as a ball point; fails once the image is too close to the sphere.
    pub fn orbit_ball_point(&self) -> Result<BallPoint> {
        let (dir, dist) = self.orbit_point();
        let r = (0.5 * dist).tanh();
        if 1.0 - r < BOUNDARY_GUARD {
            return Err(Error::Range(format!(
                "orbit point at hyperbolic radius {dist:.3} is numerically on the sphere"
            )));
        }
        BallPoint::new(scale(r, dir.0))
    }
}

impl Mul for MoebiusMap {
    type Output = MoebiusMap;

    fn mul(self, rhs: MoebiusMap) -> MoebiusMap {
        compose(&self, &rhs)
    }
}

/// Normalized product `M N`.
pub fn compose(m: &MoebiusMap, n: &MoebiusMap) -> MoebiusMap {
    MoebiusMap::renormalized(m.a * n.a + m.b * n.c, m.a * n.b + m.b * n.d, m.c * n.a + m.d * n.c, m.c * n.b + m.d * n.d)
}

/// Conformal action on the sphere, computed in homogeneous coordinates so
/// that the point at infinity needs no special case.
pub fn apply_boundary(m: &MoebiusMap, eta: &SpherePoint) -> SpherePoint {
    let (z1, z2) = eta.to_homogeneous();
    let w1 = m.a * z1 + m.b * z2;
    let w2 = m.c * z1 + m.d * z2;
    SpherePoint::from_homogeneous(w1, w2)
}

/// Ball point to upper half-space `(z, t)`.
pub fn ball_to_half_space(x: &BallPoint) -> (Complex, f64) {
    let [x1, x2, x3] = x.0;
    let n = x1 * x1 + x2 * x2 + (1.0 - x3) * (1.0 - x3);
    (Complex::new(2.0 * x1 / n, 2.0 * x2 / n), x.conformal_factor() / n)
}

/// Upper half-space `(z, t)` to ball coordinates.
pub fn half_space_to_ball(z: Complex, t: f64) -> [f64; 3] {
    let p2 = z.norm_sqr() + t * t;
    let d = p2 + 2.0 * t + 1.0;
    [2.0 * z.re / d, 2.0 * z.im / d, (p2 - 1.0) / d]
}

/// Isometric action on the ball.
pub fn apply_ball(m: &MoebiusMap, x: &BallPoint) -> Result<BallPoint> {
    if 1.0 - x.norm() < BOUNDARY_GUARD {
        return Err(Error::Range(format!("ball point with 1 - |x| = {:e} is too close to the sphere", 1.0 - x.norm())));
    }
    let (z, t) = ball_to_half_space(x);
    let (z2, t2) = m.apply_half_space(z, t);
    let y = half_space_to_ball(z2, t2);
    if 1.0 - norm_sq(y).sqrt() < BOUNDARY_GUARD {
        return Err(Error::Range("image is numerically on the sphere".into()));
    }
    BallPoint::new(y)
}

/// Hyperbolic distance in the ball, `cosh d = 1 + 2|x-y|^2 / ((1-|x|^2)(1-|y|^2))`.
pub fn dist_h3(x: &BallPoint, y: &BallPoint) -> f64 {
    let num = norm_sq(sub(x.0, y.0));
    let den = x.conformal_factor() * y.conformal_factor();
    2.0 * (num / den).sqrt().asinh()
}

/// Gromov product `(y|z)_x = (d(x,y) + d(x,z) - d(y,z)) / 2`.
pub fn gromov_product(x: &BallPoint, y: &BallPoint, z: &BallPoint) -> f64 {
    0.5 * (dist_h3(x, y) + dist_h3(x, z) - dist_h3(y, z))
}

/// Poisson kernel `(1 - |x|^2) / |x - eta|^2`.
pub fn poisson_kernel(x: &BallPoint, eta: &SpherePoint) -> f64 {
    x.conformal_factor() / norm_sq(sub(x.0, eta.0))
}

/// Busemann function `b_{x,eta}(y) = log P(x,eta) - log P(y,eta)`, zero at `y = x`.
pub fn busemann(x: &BallPoint, eta: &SpherePoint, y: &BallPoint) -> f64 {
    poisson_kernel(x, eta).ln() - poisson_kernel(y, eta).ln()
}

/// The ball isometry `y -> x (+) y` (Moebius addition), sending `o` to `x`.
///
/// Also valid for `|y| = 1`, where it gives the boundary extension.
pub fn ball_translate(x: [f64; 3], y: [f64; 3]) -> [f64; 3] {
    let xy = dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);
    let den = 1.0 + 2.0 * xy + x2 * y2;
    add(scale((1.0 + 2.0 * xy + y2) / den, x), scale((1.0 - x2) / den, y))
}

fn neg(v: [f64; 3]) -> [f64; 3] {
    [-v[0], -v[1], -v[2]]
}

/// Closest point to `x` on the geodesic joining `eta1` and `eta2`.
pub fn geodesic_foot(x: &BallPoint, eta1: &SpherePoint, eta2: &SpherePoint) -> Result<BallPoint> {
    let z1 = normalize(ball_translate(neg(x.0), eta1.0));
    let z2 = normalize(ball_translate(neg(x.0), eta2.0));
    let theta = SpherePoint(z1).angle_to(&SpherePoint(z2));
    if !(theta > 1e-9) {
        return Err(Error::Domain("geodesic endpoints coincide (diagonal pair)".into()));
    }
    let s = add(z1, z2);
    let sn = norm_sq(s).sqrt();
    let m = if sn < 1e-15 {
        [0.0; 3]
    } else {
        // Euclidean radius of the foot point in the frame centered at x
        let r = (std::f64::consts::FRAC_PI_4 - 0.25 * theta).tan();
        scale(r / sn, s)
    };
    BallPoint::new(ball_translate(x.0, m))
}

/// Point at signed distance `s` from the foot of `o` on the geodesic `(eta1, eta2)`,
/// moving toward `eta2` for positive `s`.
pub fn geodesic_point(eta1: &SpherePoint, eta2: &SpherePoint, s: f64) -> Result<BallPoint> {
    let m = geodesic_foot(&BallPoint::ORIGIN, eta1, eta2)?;
    let w2 = normalize(ball_translate(neg(m.0), eta2.0));
    BallPoint::new(ball_translate(m.0, scale((0.5 * s).tanh(), w2)))
}

/// `-(b_{x,eta1}(y) + b_{x,eta2}(y))` evaluated at an arbitrary `y`.
///
/// The value does not depend on `y` as long as `y` lies on the geodesic `(eta1, eta2)`.
pub fn busemann_cocycle_at(x: &BallPoint, eta1: &SpherePoint, eta2: &SpherePoint, y: &BallPoint) -> f64 {
    -(busemann(x, eta1, y) + busemann(x, eta2, y))
}

/// Horoball overlap length `B_x(eta1, eta2)`: the length of the part of the
/// geodesic `(eta1, eta2)` lying in both horoballs through `x` centered at the
/// endpoints. Non-negative, zero exactly when `x` is on the geodesic.
pub fn busemann_cocycle(x: &BallPoint, eta1: &SpherePoint, eta2: &SpherePoint) -> Result<f64> {
    let y = geodesic_foot(x, eta1, eta2)?;
    Ok(busemann_cocycle_at(x, eta1, eta2, &y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Identity,
    Parabolic,
    Elliptic,
    Loxodromic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub kind: MapKind,
    /// Empty for the identity, one point for parabolics, two otherwise.
    pub fixed_points: Vec<SpherePoint>,
}

fn eigen_fixed_point(m: &MoebiusMap, lambda: Complex) -> SpherePoint {
    let v1 = (m.b, lambda - m.a);
    let v2 = (lambda - m.d, m.c);
    let n1 = v1.0.norm_sqr() + v1.1.norm_sqr();
    let n2 = v2.0.norm_sqr() + v2.1.norm_sqr();
    let (w1, w2) = if n1 >= n2 { v1 } else { v2 };
    SpherePoint::from_homogeneous(w1, w2)
}

/// Trace classification with fixed points on the sphere.
pub fn classify(m: &MoebiusMap) -> Classification {
    if m.is_identity(PARABOLIC_TOL) {
        return Classification { kind: MapKind::Identity, fixed_points: Vec::new() };
    }
    let tr = m.trace();
    let tr2 = tr * tr;
    let four = Complex::new(4.0, 0.0);
    if (tr2 - four).norm() <= PARABOLIC_TOL {
        let lambda = tr / 2.0;
        return Classification { kind: MapKind::Parabolic, fixed_points: vec![eigen_fixed_point(m, lambda)] };
    }
    let kind = if tr2.im.abs() <= PARABOLIC_TOL && tr2.re >= 0.0 && tr2.re < 4.0 {
        MapKind::Elliptic
    } else {
        MapKind::Loxodromic
    };
    let disc = (tr2 - four).sqrt();
    let l1 = (tr + disc) / 2.0;
    let l2 = (tr - disc) / 2.0;
    Classification { kind, fixed_points: vec![eigen_fixed_point(m, l1), eigen_fixed_point(m, l2)] }
}

/// Visual quasi-distance `exp(-eps (eta1|eta2)_o)`, the boundary Gromov
/// product being approximated by the probes at radius [`VISUAL_PROBE_RADIUS`]
/// on the radii toward `eta1` and `eta2`.
pub fn visual_distance(eta1: &SpherePoint, eta2: &SpherePoint, params: &AnalysisParams) -> Result<f64> {
    if eta1.angle_to(eta2) <= params.tol {
        return Err(Error::Domain("visual distance is undefined on the diagonal".into()));
    }
    let y = BallPoint::new(scale(VISUAL_PROBE_RADIUS, eta1.0))?;
    let z = BallPoint::new(scale(VISUAL_PROBE_RADIUS, eta2.0))?;
    let gp = gromov_product(&BallPoint::ORIGIN, &y, &z);
    Ok((-params.eps_visual * gp).exp())
}
