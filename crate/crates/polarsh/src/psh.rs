//! Spin-2 harmonics and the polarized spherical harmonics (PSH) basis.
//!
//! `₂Y_lm(θ, φ) = √((2l+1)/4π) e^{imφ} d^l_{m,-2}(θ)` is the `s1 + i s2` part of a
//! Stokes field under the θφ frame field; it is regular at both poles. The PSH
//! basis has four real members per `(l, m)`:
//!
//! | p | Stokes components        |
//! |---|--------------------------|
//! | 0 | `(Y^R, 0, 0, 0)`         |
//! | 1 | `(0, Re ₂Y, Im ₂Y, 0)`   |
//! | 2 | `(0, -Im ₂Y, Re ₂Y, 0)`  |
//! | 3 | `(0, 0, 0, Y^R)`         |
//!
//! `p = 1, 2` exist only for `l ≥ 2`. The complex pair `f̃_lm = f_lm1 + i f_lm2`
//! equals `∫ conj(₂Y_lm) (s1 + i s2) dω`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::geom::{QuadratureGrid, Rotation};
use crate::polar::{Mat4, StokesComponents, StokesField};
use crate::sh::{
    self, sh_index, sh_len, sh_real_all, small_d_seq, wigner3j, wigner_d_complex_all, wigner_real_from_complex,
    ShCoeffVector, WignerBlock,
};
use crate::{parity, Error, Result};

/// Number of PSH coefficients up to `l_max`: `4(l_max+1)² - 8` once `l_max ≥ 1`.
pub fn psh_len(l_max: usize) -> usize {
    if l_max == 0 {
        2
    } else {
        4 * (l_max + 1) * (l_max + 1) - 8
    }
}

/// Flat position of `(l, m, p)`; `(l, m, p)` lexicographic over the index set.
#[inline]
pub fn psh_index(l: usize, m: i64, p: usize) -> usize {
    debug_assert!(p < 4 && (l >= 2 || p == 0 || p == 3) && m.unsigned_abs() as usize <= l);
    let ml = (m + l as i64) as usize;
    if l < 2 {
        2 * l * l + ml * 2 + usize::from(p == 3)
    } else {
        4 * l * l - 8 + ml * 4 + p
    }
}

/// Number of PSH components `p` present at band `l`.
#[inline]
pub fn components_at(l: usize) -> &'static [usize] {
    if l < 2 {
        &[0, 3]
    } else {
        &[0, 1, 2, 3]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PshIndex {
    pub l: usize,
    pub m: i64,
    pub p: usize,
}

impl PshIndex {
    pub fn new(l: usize, m: i64, p: usize) -> Result<Self> {
        if p > 3 || m.unsigned_abs() as usize > l || (l < 2 && (p == 1 || p == 2)) {
            return Err(Error::Domain(format!("({l}, {m}, {p}) is not a PSH index")));
        }
        Ok(PshIndex { l, m, p })
    }

    pub fn flat(&self) -> usize {
        psh_index(self.l, self.m, self.p)
    }
}

/// All indices up to `l_max` in storage order.
pub fn psh_indices(l_max: usize) -> Vec<PshIndex> {
    let mut v = Vec::with_capacity(psh_len(l_max));
    for l in 0..=l_max {
        for m in -(l as i64)..=l as i64 {
            for &p in components_at(l) {
                v.push(PshIndex { l, m, p });
            }
        }
    }
    v
}

/// Real PSH coefficients over the index set up to `l_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PshCoeffVector {
    pub l_max: usize,
    pub values: Vec<f64>,
}

impl PshCoeffVector {
    pub fn zeros(l_max: usize) -> Self {
        PshCoeffVector { l_max, values: vec![0.0; psh_len(l_max)] }
    }

    pub fn from_values(l_max: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != psh_len(l_max) {
            return Err(Error::DimensionMismatch { expected: psh_len(l_max), got: values.len() });
        }
        Ok(PshCoeffVector { l_max, values })
    }

    pub fn get(&self, l: usize, m: i64, p: usize) -> f64 {
        self.values[psh_index(l, m, p)]
    }

    pub fn set(&mut self, l: usize, m: i64, p: usize, v: f64) {
        self.values[psh_index(l, m, p)] = v;
    }

    /// `f̃_lm = f_lm1 + i f_lm2`; zero for `l < 2`.
    pub fn spin2(&self, l: usize, m: i64) -> Complex64 {
        if l < 2 {
            return Complex64::default();
        }
        let i = psh_index(l, m, 1);
        Complex64::new(self.values[i], self.values[i + 1])
    }

    pub fn set_spin2(&mut self, l: usize, m: i64, z: Complex64) {
        let i = psh_index(l, m, 1);
        self.values[i] = z.re;
        self.values[i + 1] = z.im;
    }

    /// Scalar coefficients of component `p ∈ {0, 3}`.
    pub fn scalar_part(&self, p: usize) -> ShCoeffVector<f64> {
        let mut out = ShCoeffVector::zeros(self.l_max);
        for l in 0..=self.l_max {
            for m in -(l as i64)..=l as i64 {
                out.set(l, m, self.get(l, m, p));
            }
        }
        out
    }

    pub fn set_scalar_part(&mut self, p: usize, c: &ShCoeffVector<f64>) {
        for l in 0..=self.l_max.min(c.l_max) {
            for m in -(l as i64)..=l as i64 {
                self.set(l, m, p, c.get(l, m));
            }
        }
    }

    /// Copy truncated or zero-padded to `l_max`.
    pub fn resized(&self, l_max: usize) -> Self {
        let mut out = PshCoeffVector::zeros(l_max);
        let n = psh_len(l_max.min(self.l_max));
        out.values[..n].copy_from_slice(&self.values[..n]);
        out
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, o: &PshCoeffVector) -> f64 {
        self.values.iter().zip(&o.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Zeroes all `p = 3` coefficients.
    pub fn without_circular(mut self) -> Self {
        for l in 0..=self.l_max {
            for m in -(l as i64)..=l as i64 {
                self.set(l, m, 3, 0.0);
            }
        }
        self
    }
}

#[inline]
fn spin2_norm(l: usize) -> f64 {
    ((2 * l + 1) as f64 / (4.0 * PI)).sqrt()
}

/// `₂Y_lm(θ, φ)`; zero for `l < 2`.
pub fn s2sh_eval(l: usize, m: i64, theta: f64, phi: f64) -> Complex64 {
    if l < 2 || m.unsigned_abs() as usize > l {
        return Complex64::default();
    }
    let d = small_d_seq(l, theta, m, -2)[l];
    Complex64::from_polar(spin2_norm(l) * d, m as f64 * phi)
}

/// All `₂Y_lm` up to `l_max` at `(θ, φ)`, indexed by [`sh_index`]; zero for `l < 2`.
pub fn s2sh_all(l_max: usize, theta: f64, phi: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); sh_len(l_max)];
    if l_max < 2 {
        return out;
    }
    let lm = l_max as i64;
    for m in -lm..=lm {
        let d = small_d_seq(l_max, theta, m, -2);
        let e = Complex64::from_polar(1.0, m as f64 * phi);
        for l in 2.max(m.unsigned_abs() as usize)..=l_max {
            out[sh_index(l, m)] = e * (spin2_norm(l) * d[l]);
        }
    }
    out
}

/// `₂Y_lm` through scalar harmonics `Y_lm`, `Y_{l-1,m}`; singular at the poles, so
/// `sinθ` must exceed `1e-6`.
pub fn s2sh_eval_direct(l: usize, m: i64, theta: f64, phi: f64) -> Result<Complex64> {
    if l < 2 || m.unsigned_abs() as usize > l {
        return Err(Error::Domain(format!("no spin-2 harmonic at (l, m) = ({l}, {m})")));
    }
    let (s, c) = theta.sin_cos();
    if s.abs() <= 1e-6 {
        return Err(Error::Domain(format!("θ = {theta} is too close to a pole; use s2sh_eval")));
    }
    let (lf, mf) = (l as f64, m as f64);
    let cot = c / s;
    let alpha =
        (2.0 * mf * mf - lf * (lf + 1.0)) / (s * s) - 2.0 * mf * (lf - 1.0) * cot / s + lf * (lf - 1.0) * cot * cot;
    let beta = 2.0 * ((2.0 * lf + 1.0) / (2.0 * lf - 1.0) * (lf * lf - mf * mf)).sqrt() * (mf / (s * s) + cot / s);
    let y1 = sh::sh_complex(l, m, theta, phi);
    let y0 = if (m.unsigned_abs() as usize) < l { sh::sh_complex(l - 1, m, theta, phi) } else { Complex64::default() };
    let norm = (0.5 * (sh::ln_factorial(l as i64 - 2) - sh::ln_factorial(l as i64 + 2))).exp();
    Ok((y1 * alpha + y0 * beta) * norm)
}

/// Basis element `Y⃗_lmp` under the θφ frame at `(θ, φ)`.
pub fn psh_basis_eval(idx: PshIndex, theta: f64, phi: f64) -> StokesComponents {
    match idx.p {
        0 => StokesComponents::new(sh::sh_real(idx.l, idx.m, theta, phi), 0.0, 0.0, 0.0),
        3 => StokesComponents::new(0.0, 0.0, 0.0, sh::sh_real(idx.l, idx.m, theta, phi)),
        p => {
            let y = s2sh_eval(idx.l, idx.m, theta, phi);
            let z = if p == 1 { y } else { y * Complex64::i() };
            StokesComponents::new(0.0, z.re, z.im, 0.0)
        }
    }
}

/// `Σ_j z_j e^{-imφ_j}` for `m = -l_max..=l_max`, indexed `m + l_max`.
fn row_dft(row: &[Complex64], phis: &[f64], l_max: usize) -> Vec<Complex64> {
    let lm = l_max as i64;
    (-lm..=lm)
        .map(|m| row.iter().zip(phis).map(|(z, &p)| z * Complex64::from_polar(1.0, -(m as f64) * p)).sum())
        .collect()
}

/// Spin-2 coefficients `∫ conj(₂Y_lm) z dω` of complex samples on `grid`.
pub fn spin2_project(grid: &QuadratureGrid, samples: &[Complex64], l_max: usize) -> Result<ShCoeffVector<Complex64>> {
    if grid.band < l_max {
        return Err(Error::GridTooCoarse { grid: grid.band, requested: l_max });
    }
    if samples.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: samples.len() });
    }
    let phis: Vec<f64> = (0..grid.n_phi).map(|j| grid.phi(j)).collect();
    let lm = l_max as i64;
    let rows: Vec<ShCoeffVector<Complex64>> = (0..grid.n_theta())
        .into_par_iter()
        .map(|i| {
            let mut acc = ShCoeffVector::zeros(l_max);
            if l_max < 2 {
                return acc;
            }
            let theta = grid.theta_nodes[i];
            let w = grid.weight(i);
            let f = row_dft(&samples[i * grid.n_phi..(i + 1) * grid.n_phi], &phis, l_max);
            for m in -lm..=lm {
                let d = small_d_seq(l_max, theta, m, -2);
                let fm = f[(m + lm) as usize];
                for l in 2.max(m.unsigned_abs() as usize)..=l_max {
                    acc.values[sh_index(l, m)] += fm * (w * spin2_norm(l) * d[l]);
                }
            }
            acc
        })
        .collect();
    let mut out = ShCoeffVector::zeros(l_max);
    for r in rows {
        for (o, v) in out.values.iter_mut().zip(r.values) {
            *o += v;
        }
    }
    Ok(out)
}

/// Projects a quadrature-sampled Stokes field: `f_lmp = <Y⃗_lmp, f⃗>`.
pub fn psh_project(field: &StokesField, l_max: usize) -> Result<PshCoeffVector> {
    let grid = field.grid().ok_or_else(|| Error::Domain("projection needs a quadrature-sampled field".into()))?;
    if grid.band < l_max {
        return Err(Error::GridTooCoarse { grid: grid.band, requested: l_max });
    }
    let s0: Vec<f64> = field.data.iter().map(|s| s.s0).collect();
    let s3: Vec<f64> = field.data.iter().map(|s| s.s3).collect();
    let z: Vec<Complex64> = field.data.iter().map(|s| s.linear()).collect();
    let c0 = sh::sh_project_real(&grid, &s0, l_max)?;
    let c3 = sh::sh_project_real(&grid, &s3, l_max)?;
    let c2 = spin2_project(&grid, &z, l_max)?;
    let mut out = PshCoeffVector::zeros(l_max);
    out.set_scalar_part(0, &c0);
    out.set_scalar_part(3, &c3);
    for l in 2..=l_max {
        for m in -(l as i64)..=l as i64 {
            out.set_spin2(l, m, c2.get(l, m));
        }
    }
    Ok(out)
}

/// `Σ f_lmp Y⃗_lmp(θ, φ)` under the θφ frame.
pub fn psh_reconstruct(coeffs: &PshCoeffVector, theta: f64, phi: f64) -> StokesComponents {
    let l_max = coeffs.l_max;
    let yr = sh_real_all(l_max, theta, phi);
    let y2 = s2sh_all(l_max, theta, phi);
    let mut s = StokesComponents::ZERO;
    let mut z = Complex64::default();
    for l in 0..=l_max {
        for m in -(l as i64)..=l as i64 {
            let k = sh_index(l, m);
            s.s0 += coeffs.get(l, m, 0) * yr[k];
            s.s3 += coeffs.get(l, m, 3) * yr[k];
            if l >= 2 {
                z += coeffs.spin2(l, m) * y2[k];
            }
        }
    }
    s.with_linear(z)
}

/// Reconstructs on every node of `grid`.
pub fn psh_synthesize(coeffs: &PshCoeffVector, grid: &QuadratureGrid) -> StokesField {
    StokesField::on_grid(grid, |t, p| psh_reconstruct(coeffs, t, p))
}

/// Per-`l` Wigner blocks of a rotation: real for `p = 0, 3`, complex for the spin-2 pair.
#[derive(Debug, Clone)]
pub struct PshRotation {
    pub real: Vec<WignerBlock<f64>>,
    pub complex: Vec<WignerBlock<Complex64>>,
}

impl PshRotation {
    pub fn new(l_max: usize, r: &Rotation) -> Self {
        let complex = wigner_d_complex_all(l_max, r);
        let real = complex.iter().map(wigner_real_from_complex).collect();
        PshRotation { real, complex }
    }

    pub fn l_max(&self) -> usize {
        self.real.len() - 1
    }

    /// 4×4 sub-block `(m_o, m_i)` of band `l`: `diag(D^R, ℝ²ˣ²(D), D^R)`.
    pub fn sub_block(&self, l: usize, m_o: i64, m_i: i64) -> Mat4 {
        let r = self.real[l].get(m_o, m_i);
        let mut b = [[0.0; 4]; 4];
        b[0][0] = r;
        b[3][3] = r;
        if l >= 2 {
            let c = self.complex[l].get(m_o, m_i);
            b[1][1] = c.re;
            b[1][2] = -c.im;
            b[2][1] = c.im;
            b[2][2] = c.re;
        }
        b
    }

    pub fn apply(&self, f: &PshCoeffVector) -> PshCoeffVector {
        let mut out = PshCoeffVector::zeros(f.l_max);
        for l in 0..=f.l_max.min(self.l_max()) {
            let li = l as i64;
            for p in [0usize, 3] {
                let v: Vec<f64> = (-li..=li).map(|m| f.get(l, m, p)).collect();
                for (k, x) in self.real[l].apply(&v).into_iter().enumerate() {
                    out.set(l, k as i64 - li, p, x);
                }
            }
            if l >= 2 {
                let v: Vec<Complex64> = (-li..=li).map(|m| f.spin2(l, m)).collect();
                for (k, x) in self.complex[l].apply(&v).into_iter().enumerate() {
                    out.set_spin2(l, k as i64 - li, x);
                }
            }
        }
        out
    }

    /// Dense `psh_len × psh_len` matrix, row-major.
    pub fn dense(&self, l_max: usize) -> Vec<f64> {
        let n = psh_len(l_max);
        let mut d = vec![0.0; n * n];
        for l in 0..=l_max {
            let li = l as i64;
            for mo in -li..=li {
                for mi in -li..=li {
                    let b = self.sub_block(l, mo, mi);
                    for &po in components_at(l) {
                        for &pi in components_at(l) {
                            d[psh_index(l, mo, po) * n + psh_index(l, mi, pi)] = b[po][pi];
                        }
                    }
                }
            }
        }
        d
    }
}

/// The `(2l+1)²` sub-blocks of the PSH rotation matrix at band `l`, row-major in `(m_o, m_i)`.
pub fn psh_rotation_block(l: usize, r: &Rotation) -> Vec<Mat4> {
    let rot = PshRotation::new(l, r);
    let li = l as i64;
    let mut out = Vec::with_capacity((2 * l + 1) * (2 * l + 1));
    for mo in -li..=li {
        for mi in -li..=li {
            out.push(rot.sub_block(l, mo, mi));
        }
    }
    out
}

/// Rotates PSH coefficients band by band.
pub fn psh_rotate_coeffs(coeffs: &PshCoeffVector, r: &Rotation) -> PshCoeffVector {
    PshRotation::new(coeffs.l_max, r).apply(coeffs)
}

/// `∫ conj(₂Y_{l1m1}) Y_{l2m2} ₂Y_{l3m3} dω`.
pub fn triple_product_022(l1: usize, m1: i64, l2: usize, m2: i64, l3: usize, m3: i64) -> f64 {
    if l1 < 2 || l3 < 2 || m1 != m2 + m3 {
        return 0.0;
    }
    let (a, b, c) = (l1 as i64, l2 as i64, l3 as i64);
    let pre = ((2 * a + 1) as f64 * (2 * b + 1) as f64 * (2 * c + 1) as f64 / (4.0 * PI)).sqrt();
    parity(m1) * pre * wigner3j(a, b, c, -m1, m2, m3) * wigner3j(a, b, c, 2, 0, -2)
}
