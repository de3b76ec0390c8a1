//! Stokes vectors, Mueller matrices and their frames.
//!
//! A Stokes vector's numbers only mean something together with a frame whose
//! `z` axis is the propagation direction. Rotating that frame by `ϑ` about `z`
//! turns `s1 + i s2` into `e^{-2iϑ}(s1 + i s2)`; `s0` and `s3` do not change.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Sub};

use num_complex::Complex64;

use crate::geom::{
    dir_to_sph, frame_theta_phi, frame_theta_phi_at, gauss_legendre, Direction, Frame, QuadratureGrid, Rotation, Vec3,
};
use crate::{Error, Result};

/// Row-major 4×4 real matrix.
pub type Mat4 = [[f64; 4]; 4];

pub const MAT4_IDENTITY: Mat4 =
    [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];

pub fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            for j in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

pub fn mat4_scale(a: &Mat4, s: f64) -> Mat4 {
    let mut c = *a;
    c.iter_mut().flatten().for_each(|v| *v *= s);
    c
}

pub fn mat4_add(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = *a;
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] += b[i][j];
        }
    }
    c
}

/// `(s0, s1, s2, s3)` in some frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StokesComponents {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesComponents {
    pub const ZERO: StokesComponents = StokesComponents { s0: 0.0, s1: 0.0, s2: 0.0, s3: 0.0 };

    pub const fn new(s0: f64, s1: f64, s2: f64, s3: f64) -> Self {
        StokesComponents { s0, s1, s2, s3 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.s0, self.s1, self.s2, self.s3]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        StokesComponents::new(a[0], a[1], a[2], a[3])
    }

    /// Linear part as `s1 + i s2`.
    pub fn linear(self) -> Complex64 {
        Complex64::new(self.s1, self.s2)
    }

    pub fn with_linear(self, z: Complex64) -> Self {
        StokesComponents { s1: z.re, s2: z.im, ..self }
    }

    pub fn dot(self, o: StokesComponents) -> f64 {
        self.s0 * o.s0 + self.s1 * o.s1 + self.s2 * o.s2 + self.s3 * o.s3
    }

    pub fn max_abs_diff(self, o: StokesComponents) -> f64 {
        let (a, b) = (self.to_array(), o.to_array());
        (0..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
    }

    /// Degree of polarization; zero for zero intensity.
    pub fn dop(self) -> f64 {
        if self.s0 == 0.0 {
            0.0
        } else {
            (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt() / self.s0
        }
    }

    pub fn is_physical(self) -> bool {
        self.s0 >= (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }
}

impl Add for StokesComponents {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        StokesComponents::new(self.s0 + o.s0, self.s1 + o.s1, self.s2 + o.s2, self.s3 + o.s3)
    }
}

impl AddAssign for StokesComponents {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for StokesComponents {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        StokesComponents::new(self.s0 - o.s0, self.s1 - o.s1, self.s2 - o.s2, self.s3 - o.s3)
    }
}

impl Mul<f64> for StokesComponents {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        StokesComponents::new(self.s0 * k, self.s1 * k, self.s2 * k, self.s3 * k)
    }
}

pub fn mat4_apply(m: &Mat4, s: StokesComponents) -> StokesComponents {
    let v = s.to_array();
    let mut o = [0.0; 4];
    for i in 0..4 {
        o[i] = (0..4).map(|j| m[i][j] * v[j]).sum();
    }
    StokesComponents::from_array(o)
}

/// Stokes components tied to their frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricStokes {
    pub components: StokesComponents,
    pub frame: Frame,
}

impl GeometricStokes {
    pub fn new(components: StokesComponents, frame: Frame) -> Self {
        GeometricStokes { components, frame }
    }

    pub fn direction(&self) -> Direction {
        self.frame.z
    }

    /// Components measured in `to`.
    pub fn in_frame(&self, to: &Frame) -> Result<StokesComponents> {
        stokes_reframe(self.components, &self.frame, to)
    }

    /// Components measured in the θφ frame at the propagation direction.
    pub fn in_theta_phi(&self) -> StokesComponents {
        let f = frame_theta_phi_at(self.frame.z);
        stokes_reframe(self.components, &self.frame, &f).expect("same propagation direction")
    }

    /// Equality modulo frame, within `tol` per component.
    pub fn approx_eq(&self, o: &GeometricStokes, tol: f64) -> bool {
        if (self.frame.z - o.frame.z).norm() > 1e-9 {
            return false;
        }
        match o.in_frame(&self.frame) {
            Ok(c) => c.max_abs_diff(self.components) <= tol,
            Err(_) => false,
        }
    }
}

/// Stokes rotator for a frame turned by `ϑ` about `z`.
pub fn stokes_rotator(vartheta: f64) -> Mat4 {
    let (s, c) = (2.0 * vartheta).sin_cos();
    [[1.0, 0.0, 0.0, 0.0], [0.0, c, s, 0.0], [0.0, -s, c, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

fn check_same_z(a: &Frame, b: &Frame) -> Result<()> {
    let d = (a.z - b.z).norm();
    if d > 1e-9 {
        Err(Error::FrameMismatch(d))
    } else {
        Ok(())
    }
}

/// Conversion matrix `C_{from→to}` for frames sharing `z`.
pub fn reframe_matrix(from: &Frame, to: &Frame) -> Result<Mat4> {
    check_same_z(from, to)?;
    Ok(stokes_rotator(from.angle_to(to)))
}

/// [`reframe_matrix`] without the shared-axis check; callers guarantee it.
pub(crate) fn reframe_matrix_unchecked(from: &Frame, to: &Frame) -> Mat4 {
    stokes_rotator(from.angle_to(to))
}

/// Re-expresses components measured in `from` in `to`.
pub fn stokes_reframe(s: StokesComponents, from: &Frame, to: &Frame) -> Result<StokesComponents> {
    check_same_z(from, to)?;
    let e = Complex64::from_polar(1.0, -2.0 * from.angle_to(to));
    Ok(s.with_linear(e * s.linear()))
}

/// Rotates a geometric Stokes vector: same components in the rotated frame.
pub fn stokes_rotate(s: &GeometricStokes, r: &Rotation) -> GeometricStokes {
    GeometricStokes { components: s.components, frame: s.frame.rotated(r) }
}

/// Frame-independent inner product of two Stokes vectors on the same ray.
pub fn stokes_inner(s: &GeometricStokes, t: &GeometricStokes) -> Result<f64> {
    Ok(s.components.dot(t.in_frame(&s.frame)?))
}

/// Euclidean projection onto the physical cone `s0 ≥ |(s1, s2, s3)|` restricted to
/// uniform scaling of the polarized part; `s0 ≤ 0` maps to zero.
pub fn clamp_valid_range(s: StokesComponents) -> StokesComponents {
    let p = (s.s1 * s.s1 + s.s2 * s.s2 + s.s3 * s.s3).sqrt();
    if s.s0 <= 0.0 {
        return StokesComponents::ZERO;
    }
    if p <= s.s0 {
        return s;
    }
    let k = s.s0 / p;
    StokesComponents::new(s.s0, s.s1 * k, s.s2 * k, s.s3 * k)
}

/// Mueller matrix with its input and output frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuellerMatrix {
    pub m: Mat4,
    pub frame_in: Frame,
    pub frame_out: Frame,
}

impl MuellerMatrix {
    pub fn new(m: Mat4, frame_in: Frame, frame_out: Frame) -> Self {
        MuellerMatrix { m, frame_in, frame_out }
    }

    /// Applies to a geometric Stokes vector on the input ray.
    pub fn apply(&self, s: &GeometricStokes) -> Result<GeometricStokes> {
        let c = s.in_frame(&self.frame_in)?;
        Ok(GeometricStokes::new(mat4_apply(&self.m, c), self.frame_out))
    }
}

/// `N = C_{out→new_out} M C_{new_in→in}`.
pub fn mueller_reframe(m: &MuellerMatrix, new_in: &Frame, new_out: &Frame) -> Result<MuellerMatrix> {
    let co = reframe_matrix(&m.frame_out, new_out)?;
    let ci = reframe_matrix(new_in, &m.frame_in)?;
    Ok(MuellerMatrix { m: mat4_mul(&co, &mat4_mul(&m.m, &ci)), frame_in: *new_in, frame_out: *new_out })
}

/// Mueller transform field `P(ω_i, ω_o)` expressed in the θφ frames at `ω_i` and `ω_o`
/// (angles from [`dir_to_sph`]).
pub trait MuellerField: Sync {
    fn mueller(&self, wi: Direction, wo: Direction) -> Mat4;

    /// The same with explicit frames attached.
    fn mueller_framed(&self, wi: Direction, wo: Direction) -> MuellerMatrix {
        MuellerMatrix::new(self.mueller(wi, wo), frame_theta_phi_at(wi), frame_theta_phi_at(wo))
    }
}

impl<F> MuellerField for F
where
    F: Fn(Direction, Direction) -> Mat4 + Sync,
{
    fn mueller(&self, wi: Direction, wo: Direction) -> Mat4 {
        self(wi, wo)
    }
}

/// Sample placement of a [`StokesField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Gauss–Legendre nodes in `cosθ`, `φ_j = 2πj/n_phi`.
    Quadrature,
    /// Equirectangular pixel centers, `θ_i = π(i+½)/n_theta`, `φ_j = 2π(j+½)/n_phi`.
    PixelCenters,
}

impl Sampling {
    pub fn name(self) -> &'static str {
        match self {
            Sampling::Quadrature => "gl",
            Sampling::PixelCenters => "pixel",
        }
    }
}

/// Stokes values on a θ × φ grid, each measured in the θφ frame of its sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesField {
    pub n_theta: usize,
    pub n_phi: usize,
    pub sampling: Sampling,
    pub thetas: Vec<f64>,
    /// θ-major: `data[i * n_phi + j]`.
    pub data: Vec<StokesComponents>,
}

impl StokesField {
    pub fn zeros(n_theta: usize, n_phi: usize, sampling: Sampling) -> Self {
        let thetas = match sampling {
            Sampling::Quadrature => gauss_legendre(n_theta).0.iter().rev().map(|c| c.acos()).collect(),
            Sampling::PixelCenters => (0..n_theta).map(|i| PI * (i as f64 + 0.5) / n_theta as f64).collect(),
        };
        StokesField { n_theta, n_phi, sampling, thetas, data: vec![StokesComponents::ZERO; n_theta * n_phi] }
    }

    /// Field on the nodes of `grid`, filled from `f(θ, φ)`.
    pub fn on_grid(grid: &QuadratureGrid, f: impl Fn(f64, f64) -> StokesComponents + Sync) -> Self {
        let mut out = StokesField {
            n_theta: grid.n_theta(),
            n_phi: grid.n_phi,
            sampling: Sampling::Quadrature,
            thetas: grid.theta_nodes.clone(),
            data: Vec::new(),
        };
        out.data = out.fill(f);
        out
    }

    /// Equirectangular pixel-center field filled from `f(θ, φ)`.
    pub fn pixels(n_theta: usize, n_phi: usize, f: impl Fn(f64, f64) -> StokesComponents + Sync) -> Self {
        let mut out = StokesField::zeros(n_theta, n_phi, Sampling::PixelCenters);
        out.data = out.fill(f);
        out
    }

    fn fill(&self, f: impl Fn(f64, f64) -> StokesComponents + Sync) -> Vec<StokesComponents> {
        use rayon::prelude::*;
        (0..self.n_theta * self.n_phi)
            .into_par_iter()
            .map(|k| f(self.thetas[k / self.n_phi], self.phi(k % self.n_phi)))
            .collect()
    }

    pub fn phi(&self, j: usize) -> f64 {
        let off = match self.sampling {
            Sampling::Quadrature => 0.0,
            Sampling::PixelCenters => 0.5,
        };
        2.0 * PI * (j as f64 + off) / self.n_phi as f64
    }

    pub fn get(&self, i: usize, j: usize) -> StokesComponents {
        self.data[i * self.n_phi + j]
    }

    /// Quadrature grid matching the samples; `None` for pixel sampling.
    pub fn grid(&self) -> Option<QuadratureGrid> {
        if self.sampling != Sampling::Quadrature || self.n_theta == 0 || self.n_phi < 2 {
            return None;
        }
        let (x, w) = gauss_legendre(self.n_theta);
        let band = (self.n_theta - 1).min((self.n_phi - 2) / 2);
        Some(QuadratureGrid {
            theta_nodes: x.iter().rev().map(|c| c.acos()).collect(),
            theta_weights: w.iter().rev().copied().collect(),
            n_phi: self.n_phi,
            band,
        })
    }

    /// Largest absolute component difference.
    pub fn max_abs_diff(&self, o: &StokesField) -> f64 {
        self.data.iter().zip(&o.data).map(|(a, b)| a.max_abs_diff(*b)).fold(0.0, f64::max)
    }

    /// Zeroes `s3` everywhere.
    pub fn without_circular(mut self) -> Self {
        self.data.iter_mut().for_each(|s| s.s3 = 0.0);
        self
    }
}

/// Fresnel amplitude coefficients `(r_s, r_p)` for a dielectric of relative index `eta`.
pub fn fresnel_amplitudes(cos_i: f64, eta: f64) -> (f64, f64) {
    let cos_i = cos_i.clamp(0.0, 1.0);
    let sin_t2 = (1.0 - cos_i * cos_i) / (eta * eta);
    let cos_t = (1.0 - sin_t2).max(0.0).sqrt();
    let rs = (cos_i - eta * cos_t) / (cos_i + eta * cos_t);
    let rp = (eta * cos_i - cos_t) / (eta * cos_i + cos_t);
    (rs, rp)
}

/// Fresnel reflection Mueller matrix in `s`/`p` aligned frames.
pub fn fresnel_mueller(cos_i: f64, eta: f64) -> Mat4 {
    let (rs, rp) = fresnel_amplitudes(cos_i, eta);
    let a = 0.5 * (rs * rs + rp * rp);
    let b = 0.5 * (rs * rs - rp * rp);
    let c = rs * rp;
    [[a, b, 0.0, 0.0], [b, a, 0.0, 0.0], [0.0, 0.0, c, 0.0], [0.0, 0.0, 0.0, c]]
}

/// Analytic isotropic pBRDF: a Gaussian lobe about the mirror direction times the
/// Fresnel Mueller matrix at the half vector, cosine weighted, under θφ frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticPbrdf {
    pub normal: Direction,
    pub roughness: f64,
    pub ior: f64,
}

/// Builds a [`SyntheticPbrdf`]; `roughness > 0`, `ior > 1`.
pub fn synthetic_pbrdf(normal: Direction, roughness: f64, ior: f64) -> Result<SyntheticPbrdf> {
    if !(roughness > 0.0) || !(ior > 1.0) {
        return Err(Error::Domain(format!("roughness {roughness} must be > 0 and ior {ior} > 1")));
    }
    Ok(SyntheticPbrdf { normal: normal.normalize(), roughness, ior })
}

impl SyntheticPbrdf {
    /// Mueller matrix in the `s`/`p` frames `(e_s, ω × e_s, ω)` of the scattering plane.
    pub fn local(&self, wi: Direction, wo: Direction) -> Option<(Mat4, Vec3)> {
        let n = self.normal;
        let (ci, co) = (n.dot(wi), n.dot(wo));
        if ci <= 0.0 || co <= 0.0 {
            return None;
        }
        let r = n * (2.0 * ci) - wi;
        let lobe = (-(1.0 - r.dot(wo)) / (self.roughness * self.roughness)).exp() * ci;
        let h = (wi + wo).normalize();
        let f = fresnel_mueller(wi.dot(h), self.ior);
        let es = wi.cross(wo);
        let es = if es.norm() < 1e-12 { frame_theta_phi_at(wi).y } else { es.normalize() };
        Some((mat4_scale(&f, lobe), es))
    }
}

impl MuellerField for SyntheticPbrdf {
    fn mueller(&self, wi: Direction, wo: Direction) -> Mat4 {
        let Some((m, es)) = self.local(wi, wo) else {
            return [[0.0; 4]; 4];
        };
        let fi = Frame::new(es, wi.cross(es), wi);
        let fo = Frame::new(es, wo.cross(es), wo);
        let (ti, pi) = dir_to_sph(wi);
        let (to, po) = dir_to_sph(wo);
        let ci = reframe_matrix_unchecked(&frame_theta_phi(ti, pi), &fi);
        let co = reframe_matrix_unchecked(&fo, &frame_theta_phi(to, po));
        mat4_mul(&co, &mat4_mul(&m, &ci))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{rotation_zyz, sph_to_dir};
    use proptest::prelude::*;

    fn stokes() -> impl Strategy<Value = StokesComponents> {
        prop::array::uniform4(-2.0..2.0f64).prop_map(StokesComponents::from_array)
    }

    #[test]
    fn reframe_examples() {
        let f = frame_theta_phi(0.8, 0.3);
        let s = StokesComponents::new(1.0, 1.0, 0.0, 0.0);
        assert_eq!(stokes_reframe(s, &f, &f).unwrap(), s);
        let r = stokes_reframe(s, &f, &f.rotated_about_z(PI / 2.0)).unwrap();
        assert!(r.max_abs_diff(StokesComponents::new(1.0, -1.0, 0.0, 0.0)) < 1e-15);
        let t = StokesComponents::new(1.0, 0.3, -0.5, 0.2);
        let r = stokes_reframe(t, &f, &f.rotated_about_z(PI)).unwrap();
        assert!(r.max_abs_diff(t) < 1e-15);
        assert!(matches!(stokes_reframe(s, &f, &frame_theta_phi(0.1, 0.3)), Err(Error::FrameMismatch(_))));
    }

    #[test]
    fn rotation_about_own_axis_is_reframing() {
        let f = frame_theta_phi(1.2, 2.0);
        let s = GeometricStokes::new(StokesComponents::new(1.0, 0.4, 0.3, 0.1), f);
        let psi = 0.7;
        let rs = stokes_rotate(&s, &crate::geom::Rotation::axis_angle(f.z, psi));
        let back = rs.in_frame(&f).unwrap();
        let expect = stokes_reframe(s.components, &f, &f.rotated_about_z(-psi)).unwrap();
        assert!(back.max_abs_diff(expect) < 1e-14);
        assert_eq!(stokes_rotate(&s, &crate::geom::Rotation::IDENTITY).components, s.components);
    }

    #[test]
    fn clamp_examples() {
        let v = StokesComponents::new(1.0, 0.3, 0.2, 0.1);
        assert_eq!(clamp_valid_range(v), v);
        assert_eq!(
            clamp_valid_range(StokesComponents::new(1.0, 2.0, 0.0, 0.0)),
            StokesComponents::new(1.0, 1.0, 0.0, 0.0)
        );
        assert_eq!(clamp_valid_range(StokesComponents::new(0.0, 1.0, 0.0, 0.0)), StokesComponents::ZERO);
    }

    #[test]
    fn mueller_reframe_spin2_phases() {
        let m = [[1.0, 0.2, 0.1, 0.0], [0.3, 0.5, -0.4, 0.0], [0.1, 0.7, 0.2, 0.3], [0.0, 0.1, 0.0, 0.9]];
        let fi = frame_theta_phi(0.5, 0.1);
        let fo = frame_theta_phi(2.1, 1.4);
        let mm = MuellerMatrix::new(m, fi, fo);
        let (a, b) = (0.4, -1.1);
        let n = mueller_reframe(&mm, &fi.rotated_about_z(a), &fo.rotated_about_z(b)).unwrap();
        let blk = |x: &Mat4| [[x[1][1], x[1][2]], [x[2][1], x[2][2]]];
        let p = crate::geom::complex_pair_separate(&blk(&m));
        let q = crate::geom::complex_pair_separate(&blk(&n.m));
        let iso = p.iso * Complex64::from_polar(1.0, 2.0 * (a - b));
        let conj = p.conj * Complex64::from_polar(1.0, -2.0 * (a + b));
        assert!((q.iso - iso).norm() < 1e-14 && (q.conj - conj).norm() < 1e-14);
        let back = mueller_reframe(&n, &fi, &fo).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((back.m[i][j] - m[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pbrdf_limits() {
        assert!(synthetic_pbrdf(Vec3::Z, 0.0, 1.5).is_err());
        assert!(synthetic_pbrdf(Vec3::Z, 0.3, 1.0).is_err());
        let f = fresnel_mueller(1.0, 1.5);
        assert!(f[0][1].abs() < 1e-15 && f[1][0].abs() < 1e-15);
        let p = synthetic_pbrdf(Vec3::Z, 0.4, 1.5).unwrap();
        let wi = sph_to_dir(0.6, 0.2);
        let wo = sph_to_dir(0.9, 2.5);
        let out = mat4_apply(&p.mueller(wi, wo), StokesComponents::new(1.0, 0.0, 0.0, 0.0));
        assert!(out.s3.abs() < 1e-15 && out.s0 > 0.0);
        assert_eq!(p.mueller(sph_to_dir(2.0, 0.0), wo), [[0.0; 4]; 4]);
    }

    #[test]
    fn pbrdf_isotropy() {
        let p = synthetic_pbrdf(Vec3::Z, 0.5, 1.6).unwrap();
        let (wi, wo) = (sph_to_dir(0.7, 0.4), sph_to_dir(1.0, 2.9));
        let base = p.mueller_framed(wi, wo);
        for &psi in &[0.3, 1.7, 4.0] {
            let r = crate::geom::Rotation::rz(psi);
            let rot = p.mueller_framed(r.apply(wi), r.apply(wo));
            // express in the rotated copies of the original frames
            let n = mueller_reframe(&rot, &base.frame_in.rotated(&r), &base.frame_out.rotated(&r)).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    assert!((n.m[i][j] - base.m[i][j]).abs() < 1e-10);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn twice_rotation(s in stokes(), t in 0.0..PI, p in 0.0..6.3f64, v in -4.0..4.0f64) {
            let f = frame_theta_phi(t, p);
            let a = stokes_reframe(s, &f, &f.rotated_about_z(v)).unwrap();
            let b = stokes_reframe(s, &f, &f.rotated_about_z(v + PI)).unwrap();
            prop_assert!(a.max_abs_diff(b) < 1e-12);
        }

        #[test]
        fn inner_is_frame_free(s in stokes(), q in stokes(), v in -4.0..4.0f64, a in -3.0..3.0f64, b in 0.1..3.0f64) {
            let f = frame_theta_phi(1.0, 0.5);
            let gs = GeometricStokes::new(s, f);
            let gt = GeometricStokes::new(q, f.rotated_about_z(v));
            let r = rotation_zyz(a, b, 0.3);
            let i0 = stokes_inner(&gs, &gt).unwrap();
            let i1 = stokes_inner(&stokes_rotate(&gs, &r), &stokes_rotate(&gt, &r)).unwrap();
            prop_assert!((i0 - i1).abs() < 1e-12);
            let gs2 = GeometricStokes::new(gs.in_frame(&f.rotated_about_z(1.0)).unwrap(), f.rotated_about_z(1.0));
            prop_assert!((stokes_inner(&gs2, &gt).unwrap() - i0).abs() < 1e-12);
            prop_assert!(gs.approx_eq(&gs2, 1e-12));
        }

        #[test]
        fn mueller_action_equivalence(s in stokes(), v in -4.0..4.0f64, u in -4.0..4.0f64) {
            let m = [[1.0, 0.2, 0.1, 0.0], [0.3, 0.5, -0.4, 0.0], [0.1, 0.7, 0.2, 0.3], [0.0, 0.1, 0.0, 0.9]];
            let mm = MuellerMatrix::new(m, frame_theta_phi(0.5, 0.1), frame_theta_phi(2.0, 1.0));
            let n = mueller_reframe(&mm, &mm.frame_in.rotated_about_z(v), &mm.frame_out.rotated_about_z(u)).unwrap();
            let gs = GeometricStokes::new(s, frame_theta_phi(0.5, 0.1));
            let a = mm.apply(&gs).unwrap();
            let b = n.apply(&gs).unwrap();
            prop_assert!(a.approx_eq(&b, 1e-12));
        }

        #[test]
        fn clamp_is_physical(s in stokes()) {
            let c = clamp_valid_range(s);
            prop_assert!(c.s0 >= (c.s1 * c.s1 + c.s2 * c.s2 + c.s3 * c.s3).sqrt() - 1e-12);
        }
    }
}
