//! S2L2: a frame-free encoding of single spin-2 Stokes vectors.
//!
//! `r_{2(m+2)+p-1} = √(4π/5) <Y⃗_{2mp}(ω), s>` for `m = -2..2`, `p = 1, 2`: the band-2
//! spin-2 coefficients of a Dirac-delta Stokes field. The map is linear, isometric
//! on the linear part, and needs no frame field, so it interpolates cleanly across
//! frame-field singularities.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::geom::{
    dir_to_sph, fibonacci_sphere, frame_perspective, frame_theta_phi_at, Direction, Frame, Rotation, Vec3,
};
use crate::polar::{stokes_reframe, stokes_rotate, GeometricStokes, StokesComponents};
use crate::psh::s2sh_all;
use crate::{Error, Result};

/// Ten reals `(Re r̃_m, Im r̃_m)` for `m = -2..2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct S2L2Vector(pub [f64; 10]);

impl S2L2Vector {
    pub fn complex(&self, m: i64) -> Complex64 {
        let k = 2 * (m + 2) as usize;
        Complex64::new(self.0[k], self.0[k + 1])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, o: &S2L2Vector) -> f64 {
        self.0.iter().zip(&o.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// `a·self + b·o`.
    pub fn combine(&self, a: f64, o: &S2L2Vector, b: f64) -> S2L2Vector {
        let mut r = [0.0; 10];
        for (k, v) in r.iter_mut().enumerate() {
            *v = a * self.0[k] + b * o.0[k];
        }
        S2L2Vector(r)
    }
}

fn scale() -> f64 {
    (4.0 * PI / 5.0).sqrt()
}

fn band2(d: Direction) -> [Complex64; 5] {
    let (t, p) = dir_to_sph(d);
    let y = s2sh_all(2, t, p);
    [y[4], y[5], y[6], y[7], y[8]]
}

/// Encodes the linear part of `s`; `s0` and `s3` are ignored.
pub fn s2l2(s: &GeometricStokes) -> S2L2Vector {
    let z = s.in_theta_phi().linear();
    let y = band2(s.direction());
    let mut r = [0.0; 10];
    for (k, ym) in y.iter().enumerate() {
        let c = ym.conj() * z * scale();
        r[2 * k] = c.re;
        r[2 * k + 1] = c.im;
    }
    S2L2Vector(r)
}

/// Spin-2 Stokes vector at `omega` (θφ frame) from `r`. Out-of-range `r` is projected:
/// `s2l2 ∘ s2l2_inv` is the orthogonal projection of `ℝ¹⁰` onto the image at `omega`.
pub fn s2l2_inv(r: &S2L2Vector, omega: Direction) -> GeometricStokes {
    let y = band2(omega);
    let z: Complex64 = (0..5).map(|k| r.complex(k as i64 - 2) * y[k]).sum::<Complex64>() * scale();
    GeometricStokes::new(StokesComponents::ZERO.with_linear(z), frame_theta_phi_at(omega))
}

/// `‖S2L2(s) - S2L2(t)‖₂`; the directions may differ.
pub fn s2l2_distance(s: &GeometricStokes, t: &GeometricStokes) -> f64 {
    s2l2(s).distance(&s2l2(t))
}

/// `S2L2Inv((1-α) r_s + α r_t; ω(α))` with `ω(α) = normalize((1-α) ω_s + α ω_t)`.
pub fn s2l2_interpolate(s: &GeometricStokes, t: &GeometricStokes, alpha: f64) -> Result<GeometricStokes> {
    let (a, b) = (s.direction(), t.direction());
    if a.dot(b) <= -1.0 + 1e-9 {
        return Err(Error::Domain("cannot interpolate between antipodal directions".into()));
    }
    let w = (a * (1.0 - alpha) + b * alpha).normalize();
    Ok(s2l2_inv(&s2l2(s).combine(1.0 - alpha, &s2l2(t), alpha), w))
}

/// Orthonormal frame from Duff et al.'s branchless construction (used by Mitsuba 3).
pub fn frame_duff(n: Direction) -> Frame {
    let sign = 1f64.copysign(n.z);
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    Frame::new(
        Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x),
        Vec3::new(b, sign + n.y * n.y * a, -n.y),
        n,
    )
}

/// Distance between component vectors measured under a frame field.
pub fn frame_field_distance(s: &GeometricStokes, t: &GeometricStokes, field: impl Fn(Direction) -> Frame) -> f64 {
    let a = s.in_frame(&field(s.direction())).expect("field frame shares z").linear();
    let b = t.in_frame(&field(t.direction())).expect("field frame shares z").linear();
    (a - b).norm()
}

/// Unit spin-2 Stokes vectors `(±1, 0)`, `(0, ±1)` in θφ frames at `n` Fibonacci directions.
pub fn perturbation_set(n: usize) -> (Vec<Direction>, Vec<GeometricStokes>) {
    let dirs = fibonacci_sphere(n);
    let mut set = Vec::with_capacity(4 * n);
    for &d in &dirs {
        let f = frame_theta_phi_at(d);
        for (a, b) in [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)] {
            set.push(GeometricStokes::new(StokesComponents::new(0.0, a, b, 0.0), f));
        }
    }
    (dirs, set)
}

/// Bins of [`PerturbationReport::histograms`], uniform over `[0, 2]`.
pub const HIST_BINS: usize = 40;

fn bin(d: f64) -> usize {
    ((d / 2.0 * HIST_BINS as f64) as usize).min(HIST_BINS - 1)
}

/// `d(s, R s)` for `R = R_{ω_j}(angle)` over all vectors and axes, for three distances
/// (S2L2, θφ-frame components, Duff frame components).
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    pub angle: f64,
    /// Per-vector maxima over the axes.
    pub s2l2: Vec<f64>,
    pub theta_phi: Vec<f64>,
    pub duff: Vec<f64>,
    /// Counts over every (vector, axis) pair, in the order above.
    pub histograms: [Vec<u64>; 3],
}

impl PerturbationReport {
    pub fn spread(v: &[f64]) -> (f64, f64) {
        v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)))
    }

    /// Counts of the per-vector maxima.
    pub fn max_histograms(&self) -> [Vec<u64>; 3] {
        [&self.s2l2, &self.theta_phi, &self.duff].map(|v| {
            let mut h = vec![0; HIST_BINS];
            v.iter().for_each(|d| h[bin(*d)] += 1);
            h
        })
    }
}

/// Perturbs every vector of [`perturbation_set`]`(n)` about each of the `n` axes.
pub fn perturbation_study(n: usize, angle: f64) -> PerturbationReport {
    let (dirs, set) = perturbation_set(n);
    let rots: Vec<Rotation> = dirs.iter().map(|&a| Rotation::axis_angle(a, angle)).collect();
    let rows: Vec<([f64; 3], [Vec<u64>; 3])> = set
        .par_iter()
        .map(|s| {
            let r0 = s2l2(s);
            let mut m = [0.0f64; 3];
            let mut h = [vec![0u64; HIST_BINS], vec![0u64; HIST_BINS], vec![0u64; HIST_BINS]];
            for r in &rots {
                let t = stokes_rotate(s, r);
                let d = [
                    r0.distance(&s2l2(&t)),
                    frame_field_distance(s, &t, frame_theta_phi_at),
                    frame_field_distance(s, &t, frame_duff),
                ];
                for k in 0..3 {
                    m[k] = m[k].max(d[k]);
                    h[k][bin(d[k])] += 1;
                }
            }
            (m, h)
        })
        .collect();
    let mut histograms = [vec![0u64; HIST_BINS], vec![0u64; HIST_BINS], vec![0u64; HIST_BINS]];
    for (_, h) in &rows {
        for k in 0..3 {
            histograms[k].iter_mut().zip(&h[k]).for_each(|(a, b)| *a += b);
        }
    }
    PerturbationReport {
        angle,
        s2l2: rows.iter().map(|r| r.0[0]).collect(),
        theta_phi: rows.iter().map(|r| r.0[1]).collect(),
        duff: rows.iter().map(|r| r.0[2]).collect(),
        histograms,
    }
}

/// Per-vector maxima of `|d(Rs, Rt) - d(s, t)|` over `R = R_{ω_j}(2πk/n_angles)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationReport {
    pub s2l2: Vec<f64>,
    pub theta_phi: Vec<f64>,
    pub duff: Vec<f64>,
}

/// Rotation sweep over every `axis_stride`-th axis of the `n`-point set and `n_angles`
/// angles; each vector is paired with `partners` others spread through the set.
pub fn rotation_study(n: usize, axis_stride: usize, n_angles: usize, partners: usize) -> RotationReport {
    let (dirs, set) = perturbation_set(n);
    let mut rots = Vec::new();
    for a in dirs.iter().step_by(axis_stride.max(1)) {
        for k in 0..n_angles {
            rots.push(Rotation::axis_angle(*a, 2.0 * PI * k as f64 / n_angles as f64));
        }
    }
    let len = set.len();
    let step = (len / partners.max(1)).max(1);
    let measure = |s: &GeometricStokes| {
        let d = s.direction();
        let tp = s.in_frame(&frame_theta_phi_at(d)).expect("field frame shares z").linear();
        let duff = s.in_frame(&frame_duff(d)).expect("field frame shares z").linear();
        (s2l2(s), tp, duff)
    };
    let base: Vec<(S2L2Vector, Complex64, Complex64)> = set.par_iter().map(measure).collect();
    let mut acc = vec![(0.0f64, 0.0f64, 0.0f64); len];
    for r in &rots {
        let enc: Vec<_> = set.par_iter().map(|s| measure(&stokes_rotate(s, r))).collect();
        acc.par_iter_mut().enumerate().for_each(|(i, a)| {
            for q in 1..=partners {
                let j = (i + q * step + q) % len;
                let (b0, b1) = (&base[i], &base[j]);
                let (e0, e1) = (&enc[i], &enc[j]);
                a.0 = a.0.max((e0.0.distance(&e1.0) - b0.0.distance(&b1.0)).abs());
                a.1 = a.1.max(((e0.1 - e1.1).norm() - (b0.1 - b1.1).norm()).abs());
                a.2 = a.2.max(((e0.2 - e1.2).norm() - (b0.2 - b1.2).norm()).abs());
            }
        });
    }
    RotationReport {
        s2l2: acc.iter().map(|a| a.0).collect(),
        theta_phi: acc.iter().map(|a| a.1).collect(),
        duff: acc.iter().map(|a| a.2).collect(),
    }
}

/// Image geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViewKind {
    /// `θ = π(i+½)/H`, `φ = 2π(j+½)/W` in the pose frame; θφ frame field.
    Equirect,
    /// One face (0..6 for `+x, -x, +y, -y, +z, -z`) of a cube map: a 90° square perspective view.
    CubeFace(usize),
    /// Pinhole camera looking along the pose's `+z` with up `+y`; `fov_deg` is vertical.
    Perspective { fov_deg: f64 },
}

/// A view: geometry, resolution and pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewSpec {
    pub kind: ViewKind,
    pub width: usize,
    pub height: usize,
    pub pose: Rotation,
}

fn face_rotation(k: usize) -> Rotation {
    let (f, u) = match k {
        0 => (Vec3::X, Vec3::Z),
        1 => (-Vec3::X, Vec3::Z),
        2 => (Vec3::Y, Vec3::Z),
        3 => (-Vec3::Y, Vec3::Z),
        4 => (Vec3::Z, Vec3::Y),
        _ => (-Vec3::Z, Vec3::Y),
    };
    Rotation::from_frame(&Frame::new(u.cross(f), u, f))
}

impl ViewSpec {
    pub fn equirect(width: usize, height: usize) -> Self {
        ViewSpec { kind: ViewKind::Equirect, width, height, pose: Rotation::IDENTITY }
    }

    /// The six faces of a cube map of the given edge size.
    pub fn cube(size: usize) -> Vec<ViewSpec> {
        (0..6)
            .map(|k| ViewSpec { kind: ViewKind::CubeFace(k), width: size, height: size, pose: Rotation::IDENTITY })
            .collect()
    }

    pub fn perspective(width: usize, height: usize, fov_deg: f64, pose: Rotation) -> Self {
        ViewSpec { kind: ViewKind::Perspective { fov_deg }, width, height, pose }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Camera rotation (local `+z` forward, `+y` up) for pinhole kinds.
    fn camera(&self) -> Rotation {
        match self.kind {
            ViewKind::CubeFace(k) => self.pose.compose(&face_rotation(k)),
            _ => self.pose,
        }
    }

    fn tan_half(&self) -> f64 {
        match self.kind {
            ViewKind::Perspective { fov_deg } => (0.5 * fov_deg.to_radians()).tan(),
            _ => 1.0,
        }
    }

    pub fn pixel_dir(&self, i: usize, j: usize) -> Direction {
        match self.kind {
            ViewKind::Equirect => {
                let t = PI * (i as f64 + 0.5) / self.height as f64;
                let p = 2.0 * PI * (j as f64 + 0.5) / self.width as f64;
                self.pose.apply(crate::geom::sph_to_dir(t, p))
            }
            _ => {
                let t = self.tan_half();
                let a = self.width as f64 / self.height as f64;
                let u = 2.0 * (j as f64 + 0.5) / self.width as f64 - 1.0;
                let v = 1.0 - 2.0 * (i as f64 + 0.5) / self.height as f64;
                self.camera().apply(Vec3::new(-u * t * a, v * t, 1.0).normalize())
            }
        }
    }

    /// Native frame at any direction.
    pub fn frame_at(&self, d: Direction) -> Frame {
        match self.kind {
            ViewKind::Equirect => frame_theta_phi_at(self.pose.inverse().apply(d)).rotated(&self.pose),
            _ => frame_perspective(d, self.camera().apply(Vec3::Y)),
        }
    }

    /// Continuous pixel coordinates `(x, y)` of `d` and a coverage score; `None` outside.
    pub fn locate(&self, d: Direction) -> Option<(f64, f64, f64)> {
        match self.kind {
            ViewKind::Equirect => {
                let (t, p) = dir_to_sph(self.pose.inverse().apply(d));
                Some((p / (2.0 * PI) * self.width as f64 - 0.5, t / PI * self.height as f64 - 0.5, 0.0))
            }
            _ => {
                let l = self.camera().inverse().apply(d);
                if l.z <= 1e-12 {
                    return None;
                }
                let t = self.tan_half();
                let a = self.width as f64 / self.height as f64;
                let u = -(l.x / l.z) / (t * a);
                let v = (l.y / l.z) / t;
                if u.abs() > 1.0 + 1e-12 || v.abs() > 1.0 + 1e-12 {
                    return None;
                }
                Some(((u + 1.0) * 0.5 * self.width as f64 - 0.5, (1.0 - v) * 0.5 * self.height as f64 - 0.5, l.z))
            }
        }
    }

    /// Four bilinear taps `(pixel index, weight)` around continuous coordinates.
    fn taps(&self, x: f64, y: f64) -> [(usize, f64); 4] {
        let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
        let (x, y) = (snap(x), snap(y));
        let (w, h) = (self.width as i64, self.height as i64);
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let wrap = matches!(self.kind, ViewKind::Equirect);
        let col = |c: i64| if wrap { c.rem_euclid(w) } else { c.clamp(0, w - 1) };
        let row = |r: i64| r.clamp(0, h - 1);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let at = |r: i64, c: i64| (row(r) * w + col(c)) as usize;
        [
            (at(y0, x0), (1.0 - fx) * (1.0 - fy)),
            (at(y0, x0 + 1), fx * (1.0 - fy)),
            (at(y0 + 1, x0), (1.0 - fx) * fy),
            (at(y0 + 1, x0 + 1), fx * fy),
        ]
    }
}

/// Stokes image; each pixel is measured in its view's native frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesImage {
    pub view: ViewSpec,
    pub data: Vec<StokesComponents>,
    pub valid: Vec<bool>,
}

impl StokesImage {
    /// Samples `f(direction, native frame)` at every pixel center.
    pub fn from_fn(view: ViewSpec, f: impl Fn(Direction, &Frame) -> StokesComponents + Sync) -> Self {
        let data = (0..view.len())
            .into_par_iter()
            .map(|k| {
                let d = view.pixel_dir(k / view.width, k % view.width);
                f(d, &view.frame_at(d))
            })
            .collect();
        StokesImage { view, data, valid: vec![true; view.len()] }
    }

    pub fn get(&self, i: usize, j: usize) -> StokesComponents {
        self.data[i * self.view.width + j]
    }

    fn geometric(&self, k: usize) -> GeometricStokes {
        let d = self.view.pixel_dir(k / self.view.width, k % self.view.width);
        GeometricStokes::new(self.data[k], self.view.frame_at(d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMethod {
    /// Bilinear through iterated S2L2 interpolation.
    S2l2,
    /// Bilinear on linear components under the destination frame field.
    ComponentBilinear,
}

/// Resamples `src` views onto `dst`. Each destination pixel reads the covering source
/// with the best score; pixels no source covers are flagged invalid. Identical views
/// are copied.
pub fn resample(src: &[StokesImage], dst: &ViewSpec, method: ResampleMethod) -> StokesImage {
    if let Some(s) = src.iter().find(|s| s.view == *dst) {
        return s.clone();
    }
    let out: Vec<Option<StokesComponents>> = (0..dst.len())
        .into_par_iter()
        .map(|k| {
            let d = dst.pixel_dir(k / dst.width, k % dst.width);
            let (img, x, y) = src
                .iter()
                .filter_map(|s| s.view.locate(d).map(|(x, y, sc)| (s, x, y, sc)))
                .max_by(|a, b| a.3.total_cmp(&b.3))
                .map(|(s, x, y, _)| (s, x, y))?;
            let taps = img.view.taps(x, y);
            let fd = dst.frame_at(d);
            let (mut s0, mut s3) = (0.0, 0.0);
            for &(p, w) in &taps {
                s0 += w * img.data[p].s0;
                s3 += w * img.data[p].s3;
            }
            let z = match method {
                ResampleMethod::S2l2 => {
                    let g: Vec<GeometricStokes> = taps.iter().map(|&(p, _)| img.geometric(p)).collect();
                    let (fx, fy) = (taps[1].1 + taps[3].1, taps[2].1 + taps[3].1);
                    let a = s2l2_interpolate(&g[0], &g[1], fx).ok()?;
                    let b = s2l2_interpolate(&g[2], &g[3], fx).ok()?;
                    let r = s2l2(&a).combine(1.0 - fy, &s2l2(&b), fy);
                    let s = s2l2_inv(&r, d);
                    s.in_frame(&fd).ok()?.linear()
                }
                ResampleMethod::ComponentBilinear => {
                    let mut z = Complex64::default();
                    for &(p, w) in &taps {
                        let g = img.geometric(p);
                        let c = stokes_reframe(g.components, &g.frame, &dst.frame_at(g.direction())).ok()?;
                        z += c.linear() * w;
                    }
                    z
                }
            };
            Some(StokesComponents::new(s0, z.re, z.im, s3))
        })
        .collect();
    StokesImage {
        view: *dst,
        valid: out.iter().map(Option::is_some).collect(),
        data: out.into_iter().map(|v| v.unwrap_or(StokesComponents::ZERO)).collect(),
    }
}

/// Largest linear-part deviation on row `row` relative to the largest reference magnitude,
/// against `truth(direction, native frame)`.
pub fn row_linear_deviation(
    img: &StokesImage,
    row: usize,
    truth: impl Fn(Direction, &Frame) -> StokesComponents,
) -> f64 {
    let mut dev: f64 = 0.0;
    let mut mag: f64 = 0.0;
    for j in 0..img.view.width {
        let d = img.view.pixel_dir(row, j);
        let t = truth(d, &img.view.frame_at(d)).linear();
        dev = dev.max((img.get(row, j).linear() - t).norm());
        mag = mag.max(t.norm());
    }
    dev / mag
}
