//! Directions, frames, rotations, quadrature grids and the complex helpers
//! used to move between `C` and `R^2`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

/// A 3-vector in global coordinates. Unit vectors double as directions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Unit vector on the sphere.
pub type Direction = Vec3;

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    /// Builds a unit vector pointing along `(x, y, z)`.
    pub fn normalized(x: f64, y: f64, z: f64) -> Self {
        Vec3::new(x, y, z).normalize()
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalize(self) -> Vec3 {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self * (1.0 / n)
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Vec3 {
        Vec3::new(a[0], a[1], a[2])
    }

    /// Some unit vector orthogonal to `self`.
    pub fn any_orthogonal(self) -> Vec3 {
        let a = if self.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        self.cross(a).normalize()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// `(sinθ cosφ, sinθ sinφ, cosθ)`.
pub fn sph_to_dir(theta: f64, phi: f64) -> Direction {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(st * cp, st * sp, ct)
}

/// Inverse of [`sph_to_dir`]. Returns `θ ∈ [0, π]`, `φ ∈ [0, 2π)`; `φ = 0` at the poles.
pub fn dir_to_sph(d: Direction) -> (f64, f64) {
    let rho = d.x.hypot(d.y);
    let theta = rho.atan2(d.z);
    if rho == 0.0 {
        return (theta, 0.0);
    }
    let mut phi = d.y.atan2(d.x);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    if phi >= 2.0 * PI {
        phi -= 2.0 * PI;
    }
    (theta, phi)
}

/// Right-handed orthonormal frame; `z` is the propagation direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x: Vec3,
    pub y: Vec3,
    pub z: Vec3,
}

impl Frame {
    pub const GLOBAL: Frame = Frame { x: Vec3::X, y: Vec3::Y, z: Vec3::Z };

    pub fn new(x: Vec3, y: Vec3, z: Vec3) -> Self {
        Frame { x, y, z }
    }

    /// Frame with the given `z` axis and `x` axis taken from the projection of `hint`.
    pub fn from_z_and_x_hint(z: Vec3, hint: Vec3) -> Frame {
        let mut x = hint - z * hint.dot(z);
        if x.norm() < 1e-12 {
            x = z.any_orthogonal();
        }
        let x = x.normalize();
        Frame { x, y: z.cross(x), z }
    }

    pub fn det(&self) -> f64 {
        self.x.cross(self.y).dot(self.z)
    }

    /// Frame rotated about its own z axis: `x' = cosψ x + sinψ y`.
    pub fn rotated_about_z(&self, psi: f64) -> Frame {
        let (s, c) = psi.sin_cos();
        Frame { x: self.x * c + self.y * s, y: self.y * c - self.x * s, z: self.z }
    }

    /// Angle `ϑ` such that `other = self.rotated_about_z(ϑ)`; both frames must share `z`.
    pub fn angle_to(&self, other: &Frame) -> f64 {
        other.x.dot(self.y).atan2(other.x.dot(self.x))
    }

    /// Applies a rotation to every axis.
    pub fn rotated(&self, r: &Rotation) -> Frame {
        Frame { x: r.apply(self.x), y: r.apply(self.y), z: r.apply(self.z) }
    }
}

/// The θφ frame: `x = ∂ω/∂θ`, `y = φ̂`, `z = ω`. Well defined at the poles
/// because `θ` and `φ` are given explicitly.
pub fn frame_theta_phi(theta: f64, phi: f64) -> Frame {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Frame { x: Vec3::new(ct * cp, ct * sp, -st), y: Vec3::new(-sp, cp, 0.0), z: Vec3::new(st * cp, st * sp, ct) }
}

/// θφ frame at a direction, using [`dir_to_sph`] to pick the angles.
pub fn frame_theta_phi_at(d: Direction) -> Frame {
    let (t, p) = dir_to_sph(d);
    frame_theta_phi(t, p)
}

/// Camera-style frame: `x = normalize(up × ω)`, `y = ω × x`, `z = ω`.
pub fn frame_perspective(d: Direction, up: Vec3) -> Frame {
    let x = up.cross(d);
    let x = if x.norm() < 1e-12 { d.any_orthogonal() } else { x.normalize() };
    Frame { x, y: d.cross(x), z: d }
}

/// Proper rotation as a 3×3 row-major matrix acting on column vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    pub m: [[f64; 3]; 3],
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };

    pub fn rz(a: f64) -> Rotation {
        let (s, c) = a.sin_cos();
        Rotation { m: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]] }
    }

    pub fn ry(b: f64) -> Rotation {
        let (s, c) = b.sin_cos();
        Rotation { m: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]] }
    }

    /// Rotation by `angle` about the unit `axis` (right-hand rule).
    pub fn axis_angle(axis: Vec3, angle: f64) -> Rotation {
        let a = axis.normalize();
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Rotation {
            m: [
                [c + a.x * a.x * t, a.x * a.y * t - a.z * s, a.x * a.z * t + a.y * s],
                [a.y * a.x * t + a.z * s, c + a.y * a.y * t, a.y * a.z * t - a.x * s],
                [a.z * a.x * t - a.y * s, a.z * a.y * t + a.x * s, c + a.z * a.z * t],
            ],
        }
    }

    /// Rotation whose columns are the axes of `f`, i.e. `R F_g = F`.
    pub fn from_frame(f: &Frame) -> Rotation {
        Rotation { m: [[f.x.x, f.y.x, f.z.x], [f.x.y, f.y.y, f.z.y], [f.x.z, f.y.z, f.z.z]] }
    }

    pub fn to_frame(&self) -> Frame {
        Frame {
            x: Vec3::new(self.m[0][0], self.m[1][0], self.m[2][0]),
            y: Vec3::new(self.m[0][1], self.m[1][1], self.m[2][1]),
            z: Vec3::new(self.m[0][2], self.m[1][2], self.m[2][2]),
        }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn compose(&self, o: &Rotation) -> Rotation {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        Rotation { m }
    }

    pub fn inverse(&self) -> Rotation {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[j][i];
            }
        }
        Rotation { m }
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// ZYZ Euler angles `(α, β, γ)` with `R = Rz(α) Ry(β) Rz(γ)`.
    pub fn to_zyz(&self) -> (f64, f64, f64) {
        let m = &self.m;
        let sb = m[0][2].hypot(m[1][2]);
        let beta = sb.atan2(m[2][2]);
        if sb > 1e-14 {
            let alpha = m[1][2].atan2(m[0][2]);
            let gamma = m[2][1].atan2(-m[2][0]);
            (alpha, beta, gamma)
        } else if m[2][2] > 0.0 {
            (m[1][0].atan2(m[0][0]), 0.0, 0.0)
        } else {
            ((-m[1][0]).atan2(-m[0][0]), PI, 0.0)
        }
    }

    /// Max deviation from orthogonality, `|RᵀR - I|_max`.
    pub fn orthogonality_error(&self) -> f64 {
        let p = self.inverse().compose(self);
        let mut e: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let t = if i == j { 1.0 } else { 0.0 };
                e = e.max((p.m[i][j] - t).abs());
            }
        }
        e
    }
}

/// `Rz(α) Ry(β) Rz(γ)`.
pub fn rotation_zyz(alpha: f64, beta: f64, gamma: f64) -> Rotation {
    Rotation::rz(alpha).compose(&Rotation::ry(beta)).compose(&Rotation::rz(gamma))
}

/// Rotation sending `ẑ` to `d` whose image of the global frame is the θφ frame at `d`.
pub fn rotation_to_dir(d: Direction) -> Rotation {
    let (t, p) = dir_to_sph(d);
    rotation_zyz(p, t, 0.0)
}

/// Tensor-product quadrature on the sphere: Gauss–Legendre in `cosθ`, trapezoid in `φ`.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub theta_nodes: Vec<f64>,
    /// Gauss–Legendre weights for the `cosθ` measure (sum to 2).
    pub theta_weights: Vec<f64>,
    pub n_phi: usize,
    /// Largest `l_max` for which products of two band-`l_max` functions integrate exactly.
    pub band: usize,
}

impl QuadratureGrid {
    pub fn n_theta(&self) -> usize {
        self.theta_nodes.len()
    }

    pub fn len(&self) -> usize {
        self.n_theta() * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phi(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_phi as f64
    }

    /// Solid-angle weight of node `(i, j)`.
    pub fn weight(&self, i: usize) -> f64 {
        self.theta_weights[i] * 2.0 * PI / self.n_phi as f64
    }

    /// All nodes as `(θ, φ, weight)`, θ-major.
    pub fn nodes(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.n_theta() {
            for j in 0..self.n_phi {
                out.push((self.theta_nodes[i], self.phi(j), self.weight(i)));
            }
        }
        out
    }

    pub fn directions(&self) -> Vec<Direction> {
        self.nodes().iter().map(|&(t, p, _)| sph_to_dir(t, p)).collect()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// Grid integrating products of two band-`l_max` functions exactly:
/// `l_max + 1` nodes in `cosθ` and `2 l_max + 2` samples in `φ`.
pub fn gauss_legendre_grid(l_max: usize) -> QuadratureGrid {
    let n = l_max + 1;
    let (x, w) = gauss_legendre(n);
    // θ ascending means cosθ descending
    let theta_nodes: Vec<f64> = x.iter().rev().map(|c| c.acos()).collect();
    let theta_weights: Vec<f64> = w.iter().rev().copied().collect();
    QuadratureGrid { theta_nodes, theta_weights, n_phi: 2 * l_max + 2, band: l_max }
}

/// Upper-hemisphere grid: `l_max + 1` Gauss–Legendre nodes in `cosθ ∈ (0, 1)` and
/// `2 l_max + 2` samples in `φ`. Only for integrands that vanish where `cosθ < 0`; for
/// those that are smooth on the closed hemisphere it converges spectrally.
pub fn gauss_legendre_hemisphere_grid(l_max: usize) -> QuadratureGrid {
    let (x, w) = gauss_legendre(l_max + 1);
    let theta_nodes: Vec<f64> = x.iter().rev().map(|c| (0.5 * (c + 1.0)).acos()).collect();
    let theta_weights: Vec<f64> = w.iter().rev().map(|v| 0.5 * v).collect();
    QuadratureGrid { theta_nodes, theta_weights, n_phi: 2 * l_max + 2, band: l_max }
}

/// Spherical Fibonacci point set.
pub fn fibonacci_sphere(n: usize) -> Vec<Direction> {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let phi = 2.0 * PI * (i as f64 / golden).fract();
            let r = (1.0 - z * z).max(0.0).sqrt();
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// 2×2 real matrix, row-major.
pub type Mat2 = [[f64; 2]; 2];

/// `x + iy ↦ (x, y)`.
pub fn c_to_r2(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

/// `(x, y) ↦ x + iy`.
pub fn r2_to_c(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

/// `x + iy ↦ [[x, -y], [y, x]]`.
pub fn c_to_r22(z: Complex64) -> Mat2 {
    [[z.re, -z.im], [z.im, z.re]]
}

/// `diag(1, -1)`: complex conjugation on `R^2`.
pub const J: Mat2 = [[1.0, 0.0], [0.0, -1.0]];

/// Isomorphic and conjugation parts of a 2×2 real matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexPair {
    pub iso: Complex64,
    pub conj: Complex64,
}

impl ComplexPair {
    /// Action on `R^2(z)` expressed in `C`: `iso z + conj z*`.
    pub fn apply(&self, z: Complex64) -> Complex64 {
        self.iso * z + self.conj * z.conj()
    }
}

pub fn complex_pair_separate(m: &Mat2) -> ComplexPair {
    ComplexPair {
        iso: Complex64::new((m[0][0] + m[1][1]) / 2.0, (m[1][0] - m[0][1]) / 2.0),
        conj: Complex64::new((m[0][0] - m[1][1]) / 2.0, (m[1][0] + m[0][1]) / 2.0),
    }
}

/// `R^{2×2}(iso) + R^{2×2}(conj) J`.
pub fn complex_pair_compose(p: &ComplexPair) -> Mat2 {
    let a = c_to_r22(p.iso);
    let b = c_to_r22(p.conj);
    [[a[0][0] + b[0][0], a[0][1] - b[0][1]], [a[1][0] + b[1][0], a[1][1] - b[1][1]]]
}

pub fn mat2_mul_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}
