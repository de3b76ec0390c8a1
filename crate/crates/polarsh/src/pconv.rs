//! Polarized spherical convolution.
//!
//! A rotation-equivariant Mueller operator is fixed by a kernel `k(θ)`: the Mueller
//! matrix taking light at `ω_i` to `ω_o` at angle `θ`, with both frames aligned to
//! the great circle through `ω_i` and `ω_o` ([`kernel_frames`]). In PSH it acts per
//! `l` through a handful of convolution coefficients, coupling only `±m`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::geom::{
    complex_pair_separate, dir_to_sph, fibonacci_sphere, frame_theta_phi_at, gauss_legendre, rotation_to_dir,
    sph_to_dir, Direction, Frame, Rotation,
};
use crate::operators::{band_range, PshCoeffMatrix};
use crate::polar::{mat4_apply, mat4_mul, reframe_matrix_unchecked, Mat4, MuellerField, StokesComponents, StokesField};
use crate::psh::{psh_index, s2sh_eval, PshCoeffVector, PshRotation};
use crate::sh::{complex_to_real_matrix, sh_complex};
use crate::{parity, Error, Result};

/// Kernel `θ ↦ k(θ)` in the aligned great-circle frames.
#[derive(Clone)]
pub struct PolarConvKernel {
    f: Arc<dyn Fn(f64) -> Mat4 + Send + Sync>,
}

impl std::fmt::Debug for PolarConvKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PolarConvKernel")
    }
}

impl PolarConvKernel {
    pub fn new(f: impl Fn(f64) -> Mat4 + Send + Sync + 'static) -> Self {
        PolarConvKernel { f: Arc::new(f) }
    }

    /// `diag(π-θ)`.
    pub fn pi_minus_theta() -> Self {
        PolarConvKernel::new(|t| {
            let v = PI - t;
            [[v, 0.0, 0.0, 0.0], [0.0, v, 0.0, 0.0], [0.0, 0.0, v, 0.0], [0.0, 0.0, 0.0, v]]
        })
    }

    /// Normalized Gaussian lobe of width `sigma` times the identity; tends to the identity operator.
    pub fn gaussian_identity(sigma: f64) -> Self {
        let n = gaussian_norm(sigma);
        PolarConvKernel::new(move |t| {
            let v = (-(t * t) / (2.0 * sigma * sigma)).exp() / n;
            [[v, 0.0, 0.0, 0.0], [0.0, v, 0.0, 0.0], [0.0, 0.0, v, 0.0], [0.0, 0.0, 0.0, v]]
        })
    }

    pub fn eval(&self, theta: f64) -> Mat4 {
        (self.f)(theta)
    }

    /// The kernel as a Mueller field in θφ frames.
    pub fn as_field(&self) -> KernelField<'_> {
        KernelField { k: self }
    }
}

fn gaussian_norm(sigma: f64) -> f64 {
    let (x, w) = gauss_legendre(200);
    x.iter()
        .zip(&w)
        .map(|(xi, wi)| {
            let t = 0.5 * PI * (xi + 1.0);
            2.0 * PI * 0.5 * PI * wi * t.sin() * (-(t * t) / (2.0 * sigma * sigma)).exp()
        })
        .sum()
}

/// Input and output frames for the pair `(ω_i, ω_o)`: `x` along the great circle
/// from `ω_i` toward `ω_o`, `y` its common normal.
pub fn kernel_frames(wi: Direction, wo: Direction) -> (Frame, Frame, f64) {
    let c = wi.dot(wo).clamp(-1.0, 1.0);
    let theta = c.acos();
    let mut t = wo - wi * c;
    if t.norm() < 1e-12 {
        t = frame_theta_phi_at(wi).x;
    }
    let t = t.normalize();
    let y = wi.cross(t);
    let fi = Frame::new(t, y, wi);
    let fo = Frame::new(t * theta.cos() - wi * theta.sin(), y, wo);
    (fi, fo, theta)
}

/// [`PolarConvKernel`] viewed as a [`MuellerField`].
#[derive(Debug, Clone, Copy)]
pub struct KernelField<'a> {
    k: &'a PolarConvKernel,
}

impl MuellerField for KernelField<'_> {
    fn mueller(&self, wi: Direction, wo: Direction) -> Mat4 {
        let (fi, fo, theta) = kernel_frames(wi, wo);
        let a = reframe_matrix_unchecked(&frame_theta_phi_at(wi), &fi);
        let b = reframe_matrix_unchecked(&fo, &frame_theta_phi_at(wo));
        mat4_mul(&b, &mat4_mul(&self.k.eval(theta), &a))
    }
}

/// Convolution coefficients of one band.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelBand {
    pub k00: f64,
    pub k03: f64,
    pub k30: f64,
    pub k33: f64,
    /// spin-2 → `s0`
    pub k0p: Complex64,
    /// spin-2 → `s3`
    pub k3p: Complex64,
    /// `s0` → spin-2
    pub kp0: Complex64,
    /// `s3` → spin-2
    pub kp3: Complex64,
    pub iso: Complex64,
    pub conj: Complex64,
}

pub const KERNEL_BAND_PARAMS: usize = 16;

impl KernelBand {
    pub fn to_params(&self) -> [f64; KERNEL_BAND_PARAMS] {
        [
            self.k00,
            self.k03,
            self.k30,
            self.k33,
            self.k0p.re,
            self.k0p.im,
            self.k3p.re,
            self.k3p.im,
            self.kp0.re,
            self.kp0.im,
            self.kp3.re,
            self.kp3.im,
            self.iso.re,
            self.iso.im,
            self.conj.re,
            self.conj.im,
        ]
    }

    pub fn from_params(p: &[f64]) -> Self {
        let c = |i: usize| Complex64::new(p[i], p[i + 1]);
        KernelBand {
            k00: p[0],
            k03: p[1],
            k30: p[2],
            k33: p[3],
            k0p: c(4),
            k3p: c(6),
            kp0: c(8),
            kp3: c(10),
            iso: c(12),
            conj: c(14),
        }
    }

    fn scalar(&self, q: usize, p: usize) -> f64 {
        match (q, p) {
            (0, 0) => self.k00,
            (0, 3) => self.k03,
            (3, 0) => self.k30,
            _ => self.k33,
        }
    }

    /// spin-2 → scalar `q`
    fn spin_to_scalar(&self, q: usize) -> Complex64 {
        if q == 0 {
            self.k0p
        } else {
            self.k3p
        }
    }

    /// scalar `p` → spin-2
    fn scalar_to_spin(&self, p: usize) -> Complex64 {
        if p == 0 {
            self.kp0
        } else {
            self.kp3
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarConvKernelCoeffs {
    pub l_max: usize,
    pub bands: Vec<KernelBand>,
}

impl PolarConvKernelCoeffs {
    pub fn zeros(l_max: usize) -> Self {
        PolarConvKernelCoeffs { l_max, bands: vec![KernelBand::default(); l_max + 1] }
    }

    pub fn max_abs_diff(&self, o: &PolarConvKernelCoeffs) -> f64 {
        self.bands
            .iter()
            .zip(&o.bands)
            .flat_map(|(a, b)| a.to_params().into_iter().zip(b.to_params()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Coefficients by Gauss–Legendre in `θ` with `4 l_max` nodes (at least 16).
pub fn kernel_coeffs(k: &PolarConvKernel, l_max: usize) -> PolarConvKernelCoeffs {
    kernel_coeffs_at(k, l_max, 0.0, (4 * l_max).max(16))
}

/// [`kernel_coeffs`] from the kernel response along the meridian at azimuth `phi`,
/// with an explicit node count.
///
/// The response to a unit input at `ẑ` is read off the full frame machinery in θφ
/// frames, so the result does not depend on `phi`.
pub fn kernel_coeffs_at(k: &PolarConvKernel, l_max: usize, phi: f64, n_nodes: usize) -> PolarConvKernelCoeffs {
    let (x, w) = gauss_legendre(n_nodes);
    let field = k.as_field();
    let bands = (0..=l_max)
        .into_par_iter()
        .map(|l| {
            let mut b = KernelBand::default();
            for (xi, wi) in x.iter().zip(&w) {
                let theta = 0.5 * PI * (xi + 1.0);
                let wt = 2.0 * PI * 0.5 * PI * wi * theta.sin();
                let p = field.mueller(Direction::Z, sph_to_dir(theta, phi));
                let y0 = sh_complex(l, 0, theta, phi).re;
                b.k00 += wt * y0 * p[0][0];
                b.k03 += wt * y0 * p[0][3];
                b.k30 += wt * y0 * p[3][0];
                b.k33 += wt * y0 * p[3][3];
                if l < 2 {
                    continue;
                }
                let ym2 = sh_complex(l, -2, theta, phi);
                b.k0p += ym2 * Complex64::new(p[0][1], p[0][2]) * wt;
                b.k3p += ym2 * Complex64::new(p[3][1], p[3][2]) * wt;
                let s0 = s2sh_eval(l, 0, theta, phi).conj();
                b.kp0 += s0 * Complex64::new(p[1][0], p[2][0]) * wt;
                b.kp3 += s0 * Complex64::new(p[1][3], p[2][3]) * wt;
                let pair = complex_pair_separate(&[[p[1][1], p[1][2]], [p[2][1], p[2][2]]]);
                b.iso += s2sh_eval(l, -2, theta, phi).conj() * pair.iso * wt;
                b.conj += s2sh_eval(l, 2, theta, phi).conj() * pair.conj * wt;
            }
            b
        })
        .collect();
    PolarConvKernelCoeffs { l_max, bands }
}

/// `(W^{2→0}_{mm'}, W^{0→2}_{mm'})`; zero unless `|m| = |m'|`.
///
/// With `Y^R = M Y`: `W^{2→0}_{mm'} = M_{m m'}`, `W^{0→2}_{mm'} = M_{m' m}`.
pub fn phase_weights(m: i64, m_prime: i64) -> (Complex64, Complex64) {
    if m.abs() != m_prime.abs() {
        return (Complex64::default(), Complex64::default());
    }
    let l = m.unsigned_abs() as usize;
    let n = 2 * l + 1;
    let mm = complex_to_real_matrix(l);
    let at = |a: i64, b: i64| mm[((a + l as i64) as usize) * n + (b + l as i64) as usize];
    (at(m, m_prime), at(m_prime, m))
}

fn partners(m: i64) -> &'static [i64] {
    if m == 0 {
        &[1]
    } else {
        &[1, -1]
    }
}

/// Frequency-domain convolution.
pub fn pconv_apply(kc: &PolarConvKernelCoeffs, f: &PshCoeffVector) -> Result<PshCoeffVector> {
    if kc.l_max < f.l_max {
        return Err(Error::DimensionMismatch { expected: f.l_max, got: kc.l_max });
    }
    let mut out = PshCoeffVector::zeros(f.l_max);
    for l in 0..=f.l_max {
        let b = &kc.bands[l];
        let c = (4.0 * PI / (2 * l + 1) as f64).sqrt();
        let li = l as i64;
        for m in -li..=li {
            for q in [0, 3] {
                let mut v: f64 = [0, 3].iter().map(|&p| b.scalar(q, p) * f.get(l, m, p)).sum();
                if l >= 2 {
                    for s in partners(m) {
                        let mp = s * m;
                        let (w20, _) = phase_weights(m, mp);
                        v += ((w20 * b.spin_to_scalar(q)).conj() * f.spin2(l, mp)).re;
                    }
                }
                out.set(l, m, q, c * v);
            }
            if l < 2 {
                continue;
            }
            let mut z = Complex64::default();
            for p in [0, 3] {
                for s in partners(m) {
                    let mp = s * m;
                    let (_, w02) = phase_weights(m, mp);
                    z += w02 * b.scalar_to_spin(p) * f.get(l, mp, p);
                }
            }
            z += b.iso * f.spin2(l, m) + b.conj * f.spin2(l, -m).conj() * parity(m);
            out.set_spin2(l, m, z * c);
        }
    }
    Ok(out)
}

/// One `l` block of [`conv_expand_to_matrix`], indexed locally from `band_range(l).start`.
fn band_block(b: &KernelBand, l: usize) -> Vec<f64> {
    let start = band_range(l).start;
    let n = band_range(l).len();
    let mut blk = vec![0.0; n * n];
    let mut put = |r: usize, col: usize, v: f64| blk[(r - start) * n + (col - start)] += v;
    let c = (4.0 * PI / (2 * l + 1) as f64).sqrt();
    let li = l as i64;
    for m in -li..=li {
        for q in [0, 3] {
            for p in [0, 3] {
                put(psh_index(l, m, q), psh_index(l, m, p), c * b.scalar(q, p));
            }
        }
        if l < 2 {
            continue;
        }
        for s in partners(m) {
            let mp = s * m;
            let (w20, w02) = phase_weights(m, mp);
            for q in [0, 3] {
                let u = w20 * b.spin_to_scalar(q) * c;
                put(psh_index(l, m, q), psh_index(l, mp, 1), u.re);
                put(psh_index(l, m, q), psh_index(l, mp, 2), u.im);
            }
            for p in [0, 3] {
                let u = w02 * b.scalar_to_spin(p) * c;
                put(psh_index(l, m, 1), psh_index(l, mp, p), u.re);
                put(psh_index(l, m, 2), psh_index(l, mp, p), u.im);
            }
        }
        // ℝ²ˣ²(c k_iso) on (m, m), ℝ²ˣ²(c (-1)^m k_conj) J on (m, -m)
        let i = b.iso * c;
        let (r1, c1) = (psh_index(l, m, 1), psh_index(l, m, 1));
        put(r1, c1, i.re);
        put(r1, c1 + 1, -i.im);
        put(r1 + 1, c1, i.im);
        put(r1 + 1, c1 + 1, i.re);
        let j = b.conj * (c * parity(m));
        let c2 = psh_index(l, -m, 1);
        put(r1, c2, j.re);
        put(r1, c2 + 1, j.im);
        put(r1 + 1, c2, j.im);
        put(r1 + 1, c2 + 1, -j.re);
    }
    blk
}

/// Sparse-in-structure coefficient matrix with the same action as [`pconv_apply`].
pub fn conv_expand_to_matrix(kc: &PolarConvKernelCoeffs, l_max: usize) -> PshCoeffMatrix {
    let mut out = PshCoeffMatrix::zeros(l_max);
    let n = out.dim();
    for l in 0..=l_max.min(kc.l_max) {
        let rg = band_range(l);
        let k = rg.len();
        let blk = band_block(&kc.bands[l], l);
        for r in 0..k {
            for c in 0..k {
                out.data[(rg.start + r) * n + rg.start + c] = blk[r * k + c];
            }
        }
    }
    out
}

/// Least-squares convolution fit of a matrix and what it leaves over.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvProjection {
    pub coeffs: PolarConvKernelCoeffs,
    /// RMS of the residual over all entries.
    pub residual: f64,
    /// `‖M - fit‖_F / ‖M‖_F`.
    pub relative: f64,
    /// RMS per spin block: 0→0, 0→2, 2→0, 2→2.
    pub by_block: [f64; 4],
    /// RMS over entries with `|m_i| = |m_o|` and with `|m_i| ≠ |m_o|`.
    pub same_abs_m: f64,
    pub diff_abs_m: f64,
}

/// Projects `M` onto the convolution structure (unweighted Frobenius norm, per `l`).
pub fn conv_project_operator(m: &PshCoeffMatrix) -> ConvProjection {
    let l_max = m.l_max;
    let n = m.dim();
    let mut coeffs = PolarConvKernelCoeffs::zeros(l_max);
    for l in 0..=l_max {
        let rg = band_range(l);
        let k = rg.len();
        let np = if l >= 2 { KERNEL_BAND_PARAMS } else { 4 };
        let design: Vec<Vec<f64>> = (0..np)
            .map(|j| {
                let mut p = [0.0; KERNEL_BAND_PARAMS];
                p[j] = 1.0;
                band_block(&KernelBand::from_params(&p), l)
            })
            .collect();
        let target: Vec<f64> = (0..k * k).map(|e| m.data[(rg.start + e / k) * n + rg.start + e % k]).collect();
        let mut g = vec![0.0; np * np];
        let mut rhs = vec![0.0; np];
        for a in 0..np {
            rhs[a] = design[a].iter().zip(&target).map(|(x, y)| x * y).sum();
            for b in 0..np {
                g[a * np + b] = design[a].iter().zip(&design[b]).map(|(x, y)| x * y).sum();
            }
        }
        let sol = solve_dense(g, rhs, np).expect("convolution design is full rank");
        let mut p = [0.0; KERNEL_BAND_PARAMS];
        p[..np].copy_from_slice(&sol);
        coeffs.bands[l] = KernelBand::from_params(&p);
    }
    let fit = conv_expand_to_matrix(&coeffs, l_max);
    let idx = crate::psh::psh_indices(l_max);
    let mut block = [(0.0, 0usize); 4];
    let mut same = (0.0, 0usize);
    let mut diff = (0.0, 0usize);
    let mut total = 0.0;
    for (r, ri) in idx.iter().enumerate() {
        for (c, ci) in idx.iter().enumerate() {
            let e = m.data[r * n + c] - fit.data[r * n + c];
            let e2 = e * e;
            total += e2;
            let spin = |p: usize| p == 1 || p == 2;
            let b = match (spin(ri.p), spin(ci.p)) {
                (false, false) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (true, true) => 3,
            };
            block[b].0 += e2;
            block[b].1 += 1;
            let g = if ri.m.abs() == ci.m.abs() { &mut same } else { &mut diff };
            g.0 += e2;
            g.1 += 1;
        }
    }
    let rms = |(s, c): (f64, usize)| if c == 0 { 0.0 } else { (s / c as f64).sqrt() };
    let norm = m.frobenius();
    ConvProjection {
        coeffs,
        residual: rms((total, n * n)),
        relative: if norm > 0.0 { total.sqrt() / norm } else { 0.0 },
        by_block: block.map(rms),
        same_abs_m: rms(same),
        diff_abs_m: rms(diff),
    }
}

/// Gaussian elimination with partial pivoting on a dense `n × n` system.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r * n + k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    Some(x)
}

/// Angular convolution on the field's own quadrature grid (`O(N²)`).
pub fn pconv_angular(k: &PolarConvKernel, field: &StokesField) -> Result<StokesField> {
    let grid = field.grid().ok_or_else(|| Error::Domain("angular convolution needs quadrature sampling".into()))?;
    let nodes = grid.nodes();
    let dirs: Vec<Direction> = nodes.iter().map(|&(t, p, _)| sph_to_dir(t, p)).collect();
    let kf = k.as_field();
    let data: Vec<StokesComponents> = dirs
        .par_iter()
        .map(|&wo| {
            let mut acc = StokesComponents::ZERO;
            for ((wi, s), nd) in dirs.iter().zip(&field.data).zip(&nodes) {
                acc += mat4_apply(&kf.mueller(*wi, wo), *s) * nd.2;
            }
            acc
        })
        .collect();
    Ok(StokesField { data, ..field.clone() })
}

/// Angular convolution at one direction on a polar Gauss–Legendre grid centred on `wo`,
/// for a field given pointwise in θφ components.
pub fn pconv_angular_at(
    k: &PolarConvKernel,
    f: &(dyn Fn(Direction) -> StokesComponents + Sync),
    wo: Direction,
    n_theta: usize,
    n_phi: usize,
) -> StokesComponents {
    let (x, w) = gauss_legendre(n_theta);
    let e1 = wo.any_orthogonal().normalize();
    let e2 = wo.cross(e1);
    let kf = k.as_field();
    let mut acc = StokesComponents::ZERO;
    for (xi, wi) in x.iter().zip(&w) {
        let t = 0.5 * PI * (xi + 1.0);
        let wt = 0.5 * PI * wi * t.sin() * 2.0 * PI / n_phi as f64;
        for j in 0..n_phi {
            let p = 2.0 * PI * j as f64 / n_phi as f64;
            let d = wo * t.cos() + (e1 * p.cos() + e2 * p.sin()) * t.sin();
            acc += mat4_apply(&kf.mueller(d, wo), f(d)) * wt;
        }
    }
    acc
}

/// [`pconv_angular_at`] for a band-limited field, with grid sizes chosen from `l_max`.
pub fn pconv_angular_coeffs_at(k: &PolarConvKernel, f: &PshCoeffVector, wo: Direction) -> StokesComponents {
    let eval = |d: Direction| {
        let (t, p) = dir_to_sph(d);
        crate::psh::psh_reconstruct(f, t, p)
    };
    pconv_angular_at(k, &eval, wo, f.l_max + 24, 2 * f.l_max + 12)
}

/// Rotations used to average an operator at resolution `n`: `n²` Fibonacci normals,
/// each with an in-plane angle from the additive `√2` sequence.
pub fn averaging_rotations(n: usize) -> Vec<Rotation> {
    let pts = fibonacci_sphere(n * n);
    pts.iter()
        .enumerate()
        .map(|(k, &d)| {
            let psi = 2.0 * PI * ((k as f64 + 0.5) * std::f64::consts::SQRT_2).fract();
            rotation_to_dir(d).compose(&Rotation::rz(psi))
        })
        .collect()
}

/// Average of rotated copies of a Mueller field.
#[derive(Debug, Clone)]
pub struct RotationAveraged<F> {
    pub inner: F,
    pub rotations: Vec<Rotation>,
}

impl<F: MuellerField> MuellerField for RotationAveraged<F> {
    fn mueller(&self, wi: Direction, wo: Direction) -> Mat4 {
        let mut acc = [[0.0; 4]; 4];
        let s = 1.0 / self.rotations.len() as f64;
        let (fi, fo) = (frame_theta_phi_at(wi), frame_theta_phi_at(wo));
        for r in &self.rotations {
            let inv = r.inverse();
            let (ri, ro) = (inv.apply(wi), inv.apply(wo));
            let a = reframe_matrix_unchecked(&fi, &frame_theta_phi_at(ri).rotated(r));
            let b = reframe_matrix_unchecked(&frame_theta_phi_at(ro).rotated(r), &fo);
            let m = mat4_mul(&b, &mat4_mul(&self.inner.mueller(ri, ro), &a));
            for (x, y) in acc.iter_mut().flatten().zip(m.iter().flatten()) {
                *x += s * y;
            }
        }
        acc
    }
}

/// `R_F`-conjugated copies of `field` averaged over [`averaging_rotations`]`(n)`.
pub fn rotation_average_operator<F: MuellerField>(field: F, n: usize) -> Result<RotationAveraged<F>> {
    if n < 2 {
        return Err(Error::Domain(format!("averaging resolution {n} < 2")));
    }
    Ok(RotationAveraged { inner: field, rotations: averaging_rotations(n) })
}

/// The same average in coefficient space: `(1/N) Σ D M Dᵀ`.
pub fn rotation_average_matrix(m: &PshCoeffMatrix, n: usize) -> Result<PshCoeffMatrix> {
    if n < 2 {
        return Err(Error::Domain(format!("averaging resolution {n} < 2")));
    }
    let rots = averaging_rotations(n);
    let s = 1.0 / rots.len() as f64;
    let sum = rots.par_iter().map(|r| m.rotated(&PshRotation::new(m.l_max, r))).reduce(
        || PshCoeffMatrix::zeros(m.l_max),
        |mut a, b| {
            a.data.iter_mut().zip(b.data).for_each(|(x, y)| *x += y);
            a
        },
    );
    Ok(sum.scaled(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{complex_pair_compose, gauss_legendre_grid, rotation_zyz, ComplexPair};
    use crate::operators::{operator_apply, operator_project};
    use crate::psh::{psh_len, psh_project, psh_reconstruct, psh_rotate_coeffs};
    use crate::sh::{sh_convolve, zonal_coeffs};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(l_max: usize, seed: u64) -> PshCoeffVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PshCoeffVector::from_values(l_max, (0..psh_len(l_max)).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Every block populated; `0↔2 ∝ sinθ`, iso `∝ π-θ`, conj `∝ θ`.
    pub(crate) fn random_kernel(seed: u64) -> PolarConvKernel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = [0.0; 24];
        c.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        PolarConvKernel::new(move |t| {
            let (s, q) = (t.sin(), t.cos());
            let mut m = [[0.0; 4]; 4];
            m[0][0] = c[0] + c[1] * q;
            m[0][3] = c[2] * t;
            m[3][0] = c[3] + c[4] * q * q;
            m[3][3] = c[5] * (PI - t);
            m[0][1] = c[6] * s;
            m[0][2] = c[7] * s * q;
            m[3][1] = c[8] * s;
            m[3][2] = c[9] * s * t;
            m[1][0] = c[10] * s;
            m[2][0] = c[11] * s * (1.0 + q);
            m[1][3] = c[12] * s * t;
            m[2][3] = c[13] * s;
            let pair = ComplexPair {
                iso: Complex64::new(c[14] + c[15] * q, c[16]) * (PI - t),
                conj: Complex64::new(c[17], c[18] + c[19] * q) * t,
            };
            let b = complex_pair_compose(&pair);
            m[1][1] = b[0][0];
            m[1][2] = b[0][1];
            m[2][1] = b[1][0];
            m[2][2] = b[1][1];
            m
        })
    }

    fn compare_with_angular(k: &PolarConvKernel, l_max: usize, seed: u64, n_dirs: usize) -> f64 {
        let f = random_vec(l_max, seed);
        let kc = kernel_coeffs(k, l_max);
        let g = pconv_apply(&kc, &f).unwrap();
        let dirs = fibonacci_sphere(n_dirs);
        dirs.par_iter()
            .map(|&d| {
                let (t, p) = dir_to_sph(d);
                let a = pconv_angular_coeffs_at(k, &f, d);
                a.max_abs_diff(psh_reconstruct(&g, t, p))
            })
            .reduce(|| 0.0, f64::max)
    }

    #[test]
    fn phase_weight_examples() {
        assert_eq!(phase_weights(0, 0), (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)));
        assert_eq!(phase_weights(2, 1), (Complex64::default(), Complex64::default()));
        for m in [-3i64, -1, 1, 2] {
            for mp in [m, -m] {
                let (a, b) = phase_weights(m, mp);
                assert!((a.norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
                assert!((b.norm() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
                assert!(a.re.abs() < 1e-15 || a.im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn scalar_kernel_reduces_to_sh_convolve() {
        let l_max = 6;
        let g = |t: f64| (1.0 + t.cos()).powi(2);
        let k = PolarConvKernel::new(move |t| {
            let mut m = [[0.0; 4]; 4];
            m[0][0] = g(t);
            m
        });
        let kc = kernel_coeffs(&k, l_max);
        for (l, b) in kc.bands.iter().enumerate().skip(2) {
            assert!(b.iso.norm() < 1e-14 && b.kp0.norm() < 1e-14 && b.k33 == 0.0, "l={l}");
        }
        let f = random_vec(l_max, 2);
        let out = pconv_apply(&kc, &f).unwrap();
        let z = zonal_coeffs(g, l_max, 40);
        let expect = sh_convolve(&z, &f.scalar_part(0)).unwrap();
        let got = out.scalar_part(0);
        for (a, b) in got.values.iter().zip(&expect.values) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(out.values.iter().enumerate().all(|(i, v)| crate::psh::psh_indices(l_max)[i].p == 0 || *v == 0.0));
    }

    #[test]
    fn coefficients_do_not_depend_on_meridian() {
        let k = random_kernel(7);
        let a = kernel_coeffs_at(&k, 8, 0.0, 48);
        for phi in [1.0, 2.0] {
            let b = kernel_coeffs_at(&k, 8, phi, 48);
            assert!(a.max_abs_diff(&b) < 1e-12, "{:e}", a.max_abs_diff(&b));
        }
        assert!(a.bands[3].kp0.norm() > 1e-3 && a.bands[3].conj.norm() > 1e-3 && a.bands[4].k0p.norm() > 1e-3);
    }

    #[test]
    fn theorem_matches_angular_for_pi_minus_theta() {
        let e = compare_with_angular(&PolarConvKernel::pi_minus_theta(), 8, 3, 12);
        assert!(e < 1e-8, "{e:e}");
    }

    #[test]
    fn theorem_matches_angular_for_general_kernel() {
        let e = compare_with_angular(&random_kernel(11), 6, 4, 12);
        assert!(e < 1e-8, "{e:e}");
    }

    #[test]
    fn zero_to_two_term_alone() {
        let k = PolarConvKernel::new(|t| {
            let mut m = [[0.0; 4]; 4];
            m[1][0] = t.sin() * (1.0 + t.cos());
            m[2][0] = 0.5 * t.sin();
            m
        });
        let kc = kernel_coeffs(&k, 5);
        let mut f = PshCoeffVector::zeros(5);
        f.set(3, 2, 0, 1.0);
        f.set(3, -2, 0, 0.5);
        let g = pconv_apply(&kc, &f).unwrap();
        let c = (4.0 * PI / 7.0).sqrt();
        for m in [-2i64, 2] {
            let mut z = Complex64::default();
            for mp in [m, -m] {
                z += phase_weights(m, mp).1 * kc.bands[3].kp0 * f.get(3, mp, 0);
            }
            assert!((g.spin2(3, m) - z * c).norm() < 1e-14);
        }
        assert!(g.get(3, 2, 0).abs() < 1e-14);
    }

    #[test]
    fn expanded_matrix_matches_apply_and_projection() {
        let l_max = 5;
        let k = random_kernel(5);
        let kc = kernel_coeffs(&k, l_max);
        let m = conv_expand_to_matrix(&kc, l_max);
        let f = random_vec(l_max, 9);
        let a = operator_apply(&m, &f).unwrap();
        let b = pconv_apply(&kc, &f).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
        let fit = conv_project_operator(&m);
        assert!(fit.residual < 1e-12);
        assert!(fit.coeffs.max_abs_diff(&kc) < 1e-12);
        // projecting the kernel field as a general operator lands on the same structure
        let p = operator_project(&k.as_field(), l_max, &gauss_legendre_grid(40)).unwrap();
        assert!(p.max_abs_diff(&m) < 2e-2, "{:e}", p.max_abs_diff(&m));
        let pf = conv_project_operator(&p);
        assert!(pf.coeffs.max_abs_diff(&kc) < 2e-2);
    }

    #[test]
    fn random_matrix_is_far_from_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l_max = 3;
        let n = psh_len(l_max);
        let m = PshCoeffMatrix::from_data(l_max, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let p = conv_project_operator(&m);
        assert!(p.relative > 0.8, "{}", p.relative);
    }

    #[test]
    fn angular_equivariance() {
        let k = random_kernel(3);
        let f = random_vec(5, 6);
        let r = rotation_zyz(0.4, 1.1, -0.7);
        let fr = psh_rotate_coeffs(&f, &r);
        for d in fibonacci_sphere(5) {
            let a = pconv_angular_coeffs_at(&k, &fr, d);
            // (R g)(d) from g at R⁻¹ d, reframed
            let src = r.inverse().apply(d);
            let g = pconv_angular_coeffs_at(&k, &f, src);
            let from = frame_theta_phi_at(src).rotated(&r);
            let b = crate::polar::stokes_reframe(g, &from, &frame_theta_phi_at(d)).unwrap();
            assert!(a.max_abs_diff(b) < 1e-8);
        }
    }

    #[test]
    fn narrow_kernel_is_near_identity() {
        let k = PolarConvKernel::gaussian_identity(0.02);
        let f = random_vec(4, 8);
        for d in fibonacci_sphere(6) {
            let (t, p) = dir_to_sph(d);
            let eval = |x: Direction| {
                let (a, b) = dir_to_sph(x);
                psh_reconstruct(&f, a, b)
            };
            let a = pconv_angular_at(&k, &eval, d, 400, 24);
            assert!(a.max_abs_diff(psh_reconstruct(&f, t, p)) < 1e-2);
        }
    }

    #[test]
    fn grid_angular_matches_local_oracle_roughly() {
        let k = PolarConvKernel::pi_minus_theta();
        let f = random_vec(4, 12);
        let grid = gauss_legendre_grid(24);
        let field = crate::psh::psh_synthesize(&f, &grid);
        let g = pconv_angular(&k, &field).unwrap();
        let out = psh_project(&g, 4).unwrap();
        let exact = pconv_apply(&kernel_coeffs(&k, 4), &f).unwrap();
        assert!(out.max_abs_diff(&exact) < 5e-3, "{:e}", out.max_abs_diff(&exact));
    }

    /// Band-limited operator field `Σ v Y⃗_a(ω_o) Y⃗_b(ω_i)ᵀ`.
    fn outer_field(l_max: usize, seed: u64) -> impl Fn(Direction, Direction) -> Mat4 + Sync {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = crate::psh::psh_indices(l_max);
        let terms: Vec<_> = (0..12)
            .map(|_| (idx[rng.gen_range(0..idx.len())], idx[rng.gen_range(0..idx.len())], rng.gen_range(-1.0..1.0)))
            .collect();
        move |wi: Direction, wo: Direction| {
            let (ti, pi) = dir_to_sph(wi);
            let (to, po) = dir_to_sph(wo);
            let mut m = [[0.0; 4]; 4];
            for &(a, b, v) in &terms {
                let ya = crate::psh::psh_basis_eval(a, to, po).to_array();
                let yb = crate::psh::psh_basis_eval(b, ti, pi).to_array();
                for r in 0..4 {
                    for c in 0..4 {
                        m[r][c] += v * ya[r] * yb[c];
                    }
                }
            }
            m
        }
    }

    #[test]
    fn angular_and_coefficient_averaging_agree() {
        let l_max = 3;
        let field = outer_field(l_max, 4);
        let g = gauss_legendre_grid(l_max + 1);
        let m = operator_project(&field, l_max, &g).unwrap();
        let avg = rotation_average_operator(&field, 2).unwrap();
        let ma = operator_project(&avg, l_max, &g).unwrap();
        let mc = rotation_average_matrix(&m, 2).unwrap();
        assert!(ma.max_abs_diff(&mc) < 1e-10, "{:e}", ma.max_abs_diff(&mc));
        let before = conv_project_operator(&m).relative;
        let after = conv_project_operator(&rotation_average_matrix(&m, 16).unwrap()).relative;
        assert!(after < before);
    }

    #[test]
    fn averaging_keeps_a_convolution() {
        let kc = kernel_coeffs(&random_kernel(2), 4);
        let m = conv_expand_to_matrix(&kc, 4);
        let a = rotation_average_matrix(&m, 3).unwrap();
        assert!(a.max_abs_diff(&m) < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn apply_is_linear(s in -3.0..3.0f64, seed in 0u64..1000) {
            let kc = kernel_coeffs(&random_kernel(seed), 4);
            let f = random_vec(4, seed + 1);
            let h = random_vec(4, seed + 2);
            let mut sum = f.clone();
            sum.values.iter_mut().zip(&h.values).for_each(|(a, b)| *a = s * *a + b);
            let lhs = pconv_apply(&kc, &sum).unwrap();
            let a = pconv_apply(&kc, &f).unwrap();
            let b = pconv_apply(&kc, &h).unwrap();
            for i in 0..lhs.values.len() {
                prop_assert!((lhs.values[i] - (s * a.values[i] + b.values[i])).abs() < 1e-10);
            }
        }
    }
}
