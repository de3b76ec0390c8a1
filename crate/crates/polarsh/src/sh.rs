//! Scalar spherical harmonics.
//!
//! `Y_lm(θ, φ) = A_lm P_l^m(cosθ) e^{imφ}` with the Condon–Shortley phase inside
//! `P_l^m`. Real harmonics use `√2 Re Y_lm` for `m > 0` and `√2 Im Y_l|m|` for
//! `m < 0`. Coefficients are stored flat, `l` ascending then `m` ascending; see
//! [`sh_index`].
//!
//! Wigner blocks follow `D^l_{mm'}(R) = <Y_lm, R Y_lm'>`, where `(R f)(ω) = f(R⁻¹ω)`.

use std::f64::consts::PI;
use std::ops::{Add, Mul};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::geom::{QuadratureGrid, Rotation};
use crate::{parity, Error, Result};

/// Flat position of `(l, m)`.
#[inline]
pub fn sh_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Number of coefficients up to band `l_max`.
#[inline]
pub fn sh_len(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// `(l, m)` of a flat position.
pub fn sh_lm(i: usize) -> (usize, i64) {
    let l = (i as f64).sqrt() as usize;
    let l = if (l + 1) * (l + 1) <= i {
        l + 1
    } else if l * l > i {
        l - 1
    } else {
        l
    };
    (l, i as i64 - (l * l + l) as i64)
}

/// Coefficients over `(l, m)` up to `l_max`; `T` is `f64` for real harmonics and
/// [`Complex64`] for complex ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoeffVector<T> {
    pub l_max: usize,
    pub values: Vec<T>,
}

impl<T: Copy + Default> ShCoeffVector<T> {
    pub fn zeros(l_max: usize) -> Self {
        ShCoeffVector { l_max, values: vec![T::default(); sh_len(l_max)] }
    }

    pub fn from_values(l_max: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != sh_len(l_max) {
            return Err(Error::DimensionMismatch { expected: sh_len(l_max), got: values.len() });
        }
        Ok(ShCoeffVector { l_max, values })
    }

    pub fn get(&self, l: usize, m: i64) -> T {
        self.values[sh_index(l, m)]
    }

    pub fn set(&mut self, l: usize, m: i64, v: T) {
        self.values[sh_index(l, m)] = v;
    }

    /// Copy truncated or zero-padded to `l_max`.
    pub fn resized(&self, l_max: usize) -> Self {
        let mut out = Self::zeros(l_max);
        let n = sh_len(l_max.min(self.l_max));
        out.values[..n].copy_from_slice(&self.values[..n]);
        out
    }
}

fn ln_factorials() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![0.0; 1024];
        for i in 1..t.len() {
            t[i] = t[i - 1] + (i as f64).ln();
        }
        t
    })
}

/// `ln n!`.
pub(crate) fn ln_factorial(n: i64) -> f64 {
    let t = ln_factorials();
    if (n as usize) < t.len() {
        t[n as usize]
    } else {
        t[t.len() - 1] + ((t.len() as i64)..=n).map(|k| (k as f64).ln()).sum::<f64>()
    }
}

/// Position of `N_lm` (`m ≥ 0`) in a table from [`legendre_normalized`].
#[inline]
pub fn legendre_index(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// `N_lm = A_lm P_l^m(cosθ)` for `0 ≤ m ≤ l ≤ l_max`, from `x = cosθ`, `s = sinθ`.
pub fn legendre_normalized(l_max: usize, x: f64, s: f64) -> Vec<f64> {
    let mut t = vec![0.0; legendre_index(l_max, l_max) + 1];
    t[0] = (0.25 / PI).sqrt();
    for m in 1..=l_max {
        let mf = m as f64;
        t[legendre_index(m, m)] = -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * t[legendre_index(m - 1, m - 1)];
    }
    for m in 0..l_max {
        t[legendre_index(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * t[legendre_index(m, m)];
    }
    for m in 0..=l_max {
        let m2 = (m * m) as f64;
        for l in m + 2..=l_max {
            let lf = l as f64;
            let l1 = lf - 1.0;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - m2)).sqrt();
            let b = ((l1 * l1 - m2) / (4.0 * l1 * l1 - 1.0)).sqrt();
            t[legendre_index(l, m)] = a * (x * t[legendre_index(l - 1, m)] - b * t[legendre_index(l - 2, m)]);
        }
    }
    t
}

fn sh_norm(l: usize, m: i64) -> f64 {
    let lf = l as f64;
    ((2.0 * lf + 1.0) / (4.0 * PI)).sqrt() * (0.5 * (ln_factorial(l as i64 - m) - ln_factorial(l as i64 + m))).exp()
}

/// Associated Legendre function `P_l^m(x)` including the Condon–Shortley phase.
/// Negative `m` uses `P_l^{-m} = (-1)^m (l-m)!/(l+m)! P_l^m`.
pub fn assoc_legendre(l: usize, m: i64, x: f64) -> Result<f64> {
    if m.unsigned_abs() as usize > l {
        return Err(Error::Domain(format!("|m| = {} exceeds l = {l}", m.abs())));
    }
    if !(x.abs() <= 1.0 + 1e-12) {
        return Err(Error::Domain(format!("x = {x} outside [-1, 1]")));
    }
    let x = x.clamp(-1.0, 1.0);
    let mu = m.unsigned_abs() as usize;
    let s = (1.0 - x * x).sqrt();
    let n = legendre_normalized(l, x, s)[legendre_index(l, mu)];
    let p = n / sh_norm(l, mu as i64);
    if m >= 0 {
        Ok(p)
    } else {
        let r = (ln_factorial(l as i64 - mu as i64) - ln_factorial(l as i64 + mu as i64)).exp();
        Ok(parity(mu as i64) * r * p)
    }
}

/// Complex `Y_lm(θ, φ)`.
pub fn sh_complex(l: usize, m: i64, theta: f64, phi: f64) -> Complex64 {
    let mu = m.unsigned_abs() as usize;
    let n = legendre_normalized(l, theta.cos(), theta.sin())[legendre_index(l, mu)];
    let y = Complex64::from_polar(n, mu as f64 * phi);
    if m >= 0 {
        y
    } else {
        y.conj() * parity(m)
    }
}

/// Real `Y^R_lm(θ, φ)`.
pub fn sh_real(l: usize, m: i64, theta: f64, phi: f64) -> f64 {
    let mu = m.unsigned_abs() as usize;
    let n = legendre_normalized(l, theta.cos(), theta.sin())[legendre_index(l, mu)];
    real_from_legendre(n, m, phi)
}

#[inline]
fn real_from_legendre(n: f64, m: i64, phi: f64) -> f64 {
    use std::f64::consts::SQRT_2;
    match m {
        0 => n,
        m if m > 0 => SQRT_2 * n * (m as f64 * phi).cos(),
        m => SQRT_2 * n * (-(m as f64) * phi).sin(),
    }
}

/// All complex harmonics up to `l_max` at `(θ, φ)`, flat order.
pub fn sh_complex_all(l_max: usize, theta: f64, phi: f64) -> Vec<Complex64> {
    let t = legendre_normalized(l_max, theta.cos(), theta.sin());
    let mut out = vec![Complex64::default(); sh_len(l_max)];
    for l in 0..=l_max {
        for mu in 0..=l {
            let y = Complex64::from_polar(t[legendre_index(l, mu)], mu as f64 * phi);
            out[sh_index(l, mu as i64)] = y;
            if mu > 0 {
                out[sh_index(l, -(mu as i64))] = y.conj() * parity(mu as i64);
            }
        }
    }
    out
}

/// All real harmonics up to `l_max` at `(θ, φ)`, flat order.
pub fn sh_real_all(l_max: usize, theta: f64, phi: f64) -> Vec<f64> {
    let t = legendre_normalized(l_max, theta.cos(), theta.sin());
    let mut out = vec![0.0; sh_len(l_max)];
    for l in 0..=l_max {
        for m in -(l as i64)..=l as i64 {
            out[sh_index(l, m)] = real_from_legendre(t[legendre_index(l, m.unsigned_abs() as usize)], m, phi);
        }
    }
    out
}

fn check_grid(grid: &QuadratureGrid, l_max: usize, n_samples: usize) -> Result<()> {
    if grid.band < l_max {
        return Err(Error::GridTooCoarse { grid: grid.band, requested: l_max });
    }
    if n_samples != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: n_samples });
    }
    Ok(())
}

/// `F_i(m) = Σ_j f(θ_i, φ_j) e^{-imφ_j}` for `0 ≤ m ≤ l_max` on one θ row.
fn row_fourier(grid: &QuadratureGrid, row: &[Complex64], l_max: usize) -> Vec<Complex64> {
    (0..=l_max)
        .map(|m| row.iter().enumerate().map(|(j, &v)| v * Complex64::from_polar(1.0, -(m as f64) * grid.phi(j))).sum())
        .collect()
}

/// `f_lm = <Y_lm, f>` for a complex field sampled θ-major on `grid`.
pub fn sh_project_complex(
    grid: &QuadratureGrid,
    samples: &[Complex64],
    l_max: usize,
) -> Result<ShCoeffVector<Complex64>> {
    check_grid(grid, l_max, samples.len())?;
    let mut out = ShCoeffVector::zeros(l_max);
    for (i, &theta) in grid.theta_nodes.iter().enumerate() {
        let w = grid.weight(i);
        let row = &samples[i * grid.n_phi..(i + 1) * grid.n_phi];
        let fp = row_fourier(grid, row, l_max);
        // negative frequencies: e^{+iμφ}
        let conj_row: Vec<Complex64> = row.iter().map(|v| v.conj()).collect();
        let fm = row_fourier(grid, &conj_row, l_max);
        let t = legendre_normalized(l_max, theta.cos(), theta.sin());
        for l in 0..=l_max {
            for mu in 0..=l {
                let n = t[legendre_index(l, mu)] * w;
                out.values[sh_index(l, mu as i64)] += fp[mu] * n;
                if mu > 0 {
                    // conj(Y_{l,-μ}) = (-1)^μ N e^{iμφ}
                    out.values[sh_index(l, -(mu as i64))] += fm[mu].conj() * (n * parity(mu as i64));
                }
            }
        }
    }
    Ok(out)
}

/// `f_lm = <Y^R_lm, f>` for a real field sampled θ-major on `grid`.
pub fn sh_project_real(grid: &QuadratureGrid, samples: &[f64], l_max: usize) -> Result<ShCoeffVector<f64>> {
    use std::f64::consts::SQRT_2;
    check_grid(grid, l_max, samples.len())?;
    let mut out = ShCoeffVector::zeros(l_max);
    for (i, &theta) in grid.theta_nodes.iter().enumerate() {
        let w = grid.weight(i);
        let row: Vec<Complex64> =
            samples[i * grid.n_phi..(i + 1) * grid.n_phi].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let f = row_fourier(grid, &row, l_max);
        let t = legendre_normalized(l_max, theta.cos(), theta.sin());
        for l in 0..=l_max {
            out.values[sh_index(l, 0)] += t[legendre_index(l, 0)] * w * f[0].re;
            for mu in 1..=l {
                let n = t[legendre_index(l, mu)] * w * SQRT_2;
                out.values[sh_index(l, mu as i64)] += n * f[mu].re;
                out.values[sh_index(l, -(mu as i64))] -= n * f[mu].im;
            }
        }
    }
    Ok(out)
}

/// `Σ f_lm Y_lm(θ, φ)`.
pub fn sh_reconstruct_complex(coeffs: &ShCoeffVector<Complex64>, theta: f64, phi: f64) -> Complex64 {
    sh_complex_all(coeffs.l_max, theta, phi).iter().zip(&coeffs.values).map(|(y, c)| y * c).sum()
}

/// `Σ f_lm Y^R_lm(θ, φ)`.
pub fn sh_reconstruct_real(coeffs: &ShCoeffVector<f64>, theta: f64, phi: f64) -> f64 {
    sh_real_all(coeffs.l_max, theta, phi).iter().zip(&coeffs.values).map(|(y, c)| y * c).sum()
}

/// Samples of a real expansion on every node of `grid`, θ-major.
pub fn sh_synthesize_real(coeffs: &ShCoeffVector<f64>, grid: &QuadratureGrid) -> Vec<f64> {
    grid.nodes().iter().map(|&(t, p, _)| sh_reconstruct_real(coeffs, t, p)).collect()
}

/// Real coefficients to complex ones: `f^C = Mᵀ f^R`.
pub fn real_to_complex(f: &ShCoeffVector<f64>) -> ShCoeffVector<Complex64> {
    use std::f64::consts::FRAC_1_SQRT_2;
    let mut out = ShCoeffVector::zeros(f.l_max);
    for l in 0..=f.l_max {
        out.set(l, 0, Complex64::new(f.get(l, 0), 0.0));
        for mu in 1..=l as i64 {
            let (a, b) = (f.get(l, mu), f.get(l, -mu));
            out.set(l, mu, Complex64::new(a, -b) * FRAC_1_SQRT_2);
            out.set(l, -mu, Complex64::new(a, b) * (FRAC_1_SQRT_2 * parity(mu)));
        }
    }
    out
}

/// Complex coefficients of a real function to real ones: `f^R = conj(M) f^C`.
pub fn complex_to_real(f: &ShCoeffVector<Complex64>) -> ShCoeffVector<f64> {
    use std::f64::consts::FRAC_1_SQRT_2;
    let mut out = ShCoeffVector::zeros(f.l_max);
    for l in 0..=f.l_max {
        out.set(l, 0, f.get(l, 0).re);
        for mu in 1..=l as i64 {
            let (p, n) = (f.get(l, mu), f.get(l, -mu) * parity(mu));
            out.set(l, mu, ((p + n) * FRAC_1_SQRT_2).re);
            out.set(l, -mu, ((p - n) * Complex64::new(0.0, FRAC_1_SQRT_2)).re);
        }
    }
    out
}

/// Unitary change of basis `Y^R = M Y` on band `l`, dense `(2l+1)²` row-major.
pub fn complex_to_real_matrix(l: usize) -> Vec<Complex64> {
    use std::f64::consts::FRAC_1_SQRT_2 as H;
    let n = 2 * l + 1;
    let li = l as i64;
    let mut m = vec![Complex64::default(); n * n];
    let at = |a: i64, b: i64| ((a + li) as usize) * n + (b + li) as usize;
    m[at(0, 0)] = Complex64::new(1.0, 0.0);
    for mu in 1..=li {
        m[at(mu, mu)] = Complex64::new(H, 0.0);
        m[at(mu, -mu)] = Complex64::new(H * parity(mu), 0.0);
        m[at(-mu, mu)] = Complex64::new(0.0, -H);
        m[at(-mu, -mu)] = Complex64::new(0.0, H * parity(mu));
    }
    m
}

/// One Wigner block, `(2l+1)²` entries row-major in `(m, m')`, both ascending from `-l`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerBlock<T> {
    pub l: usize,
    pub entries: Vec<T>,
}

impl<T: Copy> WignerBlock<T> {
    pub fn dim(&self) -> usize {
        2 * self.l + 1
    }

    pub fn get(&self, m: i64, mp: i64) -> T {
        let li = self.l as i64;
        self.entries[((m + li) as usize) * self.dim() + (mp + li) as usize]
    }

    /// `D v` for a vector over `m' = -l..l`.
    pub fn apply<V>(&self, v: &[V]) -> Vec<V>
    where
        V: Copy + Default + Add<Output = V>,
        T: Mul<V, Output = V>,
    {
        let n = self.dim();
        (0..n).map(|i| (0..n).fold(V::default(), |acc, j| acc + self.entries[i * n + j] * v[j])).collect()
    }
}

impl WignerBlock<Complex64> {
    pub fn identity(l: usize) -> Self {
        let n = 2 * l + 1;
        let mut entries = vec![Complex64::default(); n * n];
        for i in 0..n {
            entries[i * n + i] = Complex64::new(1.0, 0.0);
        }
        WignerBlock { l, entries }
    }

    pub fn mul(&self, o: &Self) -> Self {
        WignerBlock { l: self.l, entries: cmatmul(&self.entries, &o.entries, self.dim()) }
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim();
        let mut entries = vec![Complex64::default(); n * n];
        for i in 0..n {
            for j in 0..n {
                entries[j * n + i] = self.entries[i * n + j].conj();
            }
        }
        WignerBlock { l: self.l, entries }
    }
}

impl WignerBlock<f64> {
    pub fn mul(&self, o: &Self) -> Self {
        let n = self.dim();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.entries[i * n + k];
                for j in 0..n {
                    entries[i * n + j] += a * o.entries[k * n + j];
                }
            }
        }
        WignerBlock { l: self.l, entries }
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[j * n + i] = self.entries[i * n + j];
            }
        }
        WignerBlock { l: self.l, entries }
    }
}

fn cmatmul(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut c = vec![Complex64::default(); n * n];
    for i in 0..n {
        for k in 0..n {
            let x = a[i * n + k];
            if x == Complex64::default() {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += x * b[k * n + j];
            }
        }
    }
    c
}

/// Maps `(m, m')` to a pair with `m ≥ |m'|` and the sign relating the two entries.
fn small_d_canonical(m: i64, mp: i64) -> (i64, i64, f64) {
    if m.abs() >= mp.abs() {
        if m >= 0 {
            (m, mp, 1.0)
        } else {
            (-m, -mp, parity(m - mp))
        }
    } else if mp >= 0 {
        (mp, m, parity(m - mp))
    } else {
        (-mp, -m, 1.0)
    }
}

/// Small-d blocks `d^l_{mm'}(β)` for `l = 0..=l_max`, by the three-term recurrence in `l`.
pub fn small_d_blocks(l_max: usize, beta: f64) -> Vec<WignerBlock<f64>> {
    let mut blocks: Vec<WignerBlock<f64>> =
        (0..=l_max).map(|l| WignerBlock { l, entries: vec![0.0; (2 * l + 1) * (2 * l + 1)] }).collect();
    let (sh, ch) = (beta / 2.0).sin_cos();
    let cb = beta.cos();
    let lmax = l_max as i64;
    let idx = |l: i64, m: i64, mp: i64| ((m + l) * (2 * l + 1) + mp + l) as usize;
    for m in 0..=lmax {
        for mp in -m..=m {
            let lnc = 0.5 * (ln_factorial(2 * m) - ln_factorial(m + mp) - ln_factorial(m - mp));
            let seed = lnc.exp() * ch.powi((m + mp) as i32) * (-sh).powi((m - mp) as i32);
            blocks[m as usize].entries[idx(m, m, mp)] = seed;
            let (mf, mpf) = (m as f64, mp as f64);
            let (mut d2, mut d1) = (0.0, seed);
            for l in m + 1..=lmax {
                let lf = l as f64;
                let a = lf * (2.0 * lf - 1.0) / ((lf * lf - mf * mf) * (lf * lf - mpf * mpf)).sqrt();
                let c = if m * mp == 0 { 0.0 } else { mf * mpf / (lf * (lf - 1.0)) };
                let b = if l == m + 1 {
                    0.0
                } else {
                    let l1 = lf - 1.0;
                    ((l1 * l1 - mf * mf) * (l1 * l1 - mpf * mpf)).sqrt() / (l1 * (2.0 * lf - 1.0))
                };
                let d = a * ((cb - c) * d1 - b * d2);
                blocks[l as usize].entries[idx(l, m, mp)] = d;
                d2 = d1;
                d1 = d;
            }
        }
    }
    for blk in blocks.iter_mut() {
        let l = blk.l as i64;
        for m in -l..=l {
            for mp in -l..=l {
                let (a, b, s) = small_d_canonical(m, mp);
                if (a, b) != (m, mp) {
                    blk.entries[idx(l, m, mp)] = s * blk.entries[idx(l, a, b)];
                }
            }
        }
    }
    blocks
}

/// `d^l_{mm'}(β)` for one `(m, m')` pair and `l = 0..=l_max` (zero below `max(|m|, |m'|)`).
pub fn small_d_seq(l_max: usize, beta: f64, m: i64, mp: i64) -> Vec<f64> {
    let mut out = vec![0.0; l_max + 1];
    let l0 = m.abs().max(mp.abs());
    if l0 as usize > l_max {
        return out;
    }
    let (a, b, sign) = small_d_canonical(m, mp);
    let (sh, ch) = (beta / 2.0).sin_cos();
    let lnc = 0.5 * (ln_factorial(2 * a) - ln_factorial(a + b) - ln_factorial(a - b));
    out[l0 as usize] = sign * lnc.exp() * ch.powi((a + b) as i32) * (-sh).powi((a - b) as i32);
    let cb = beta.cos();
    let (mf, mpf) = (m as f64, mp as f64);
    for l in l0 as usize + 1..=l_max {
        let lf = l as f64;
        let k = lf * (2.0 * lf - 1.0) / ((lf * lf - mf * mf) * (lf * lf - mpf * mpf)).sqrt();
        let c = if m * mp == 0 { 0.0 } else { mf * mpf / (lf * (lf - 1.0)) };
        let prev2 = if l == l0 as usize + 1 {
            0.0
        } else {
            let l1 = lf - 1.0;
            ((l1 * l1 - mf * mf) * (l1 * l1 - mpf * mpf)).sqrt() / (l1 * (2.0 * lf - 1.0)) * out[l - 2]
        };
        out[l] = k * ((cb - c) * out[l - 1] - prev2);
    }
    out
}

/// Complex Wigner blocks `D^l(R)` for `l = 0..=l_max`.
pub fn wigner_d_complex_all(l_max: usize, r: &Rotation) -> Vec<WignerBlock<Complex64>> {
    let (alpha, beta, gamma) = r.to_zyz();
    wigner_d_complex_zyz(l_max, alpha, beta, gamma)
}

/// Complex Wigner blocks from ZYZ angles: `e^{-imα} d^l_{mm'}(β) e^{-im'γ}`.
pub fn wigner_d_complex_zyz(l_max: usize, alpha: f64, beta: f64, gamma: f64) -> Vec<WignerBlock<Complex64>> {
    small_d_blocks(l_max, beta)
        .into_iter()
        .map(|d| {
            let l = d.l as i64;
            let n = d.dim();
            let mut entries = Vec::with_capacity(n * n);
            for m in -l..=l {
                for mp in -l..=l {
                    let ph = -(m as f64) * alpha - (mp as f64) * gamma;
                    entries.push(Complex64::from_polar(d.get(m, mp), ph));
                }
            }
            WignerBlock { l: d.l, entries }
        })
        .collect()
}

/// Complex Wigner block `D^l(R)`.
pub fn wigner_d_complex(l: usize, r: &Rotation) -> WignerBlock<Complex64> {
    wigner_d_complex_all(l, r).pop().expect("at least one block")
}

/// Real block from a complex one: `D^R = conj(M) D Mᵀ`.
pub fn wigner_real_from_complex(d: &WignerBlock<Complex64>) -> WignerBlock<f64> {
    let n = d.dim();
    let m = complex_to_real_matrix(d.l);
    let mc: Vec<Complex64> = m.iter().map(|v| v.conj()).collect();
    let mut mt = vec![Complex64::default(); n * n];
    for i in 0..n {
        for j in 0..n {
            mt[j * n + i] = m[i * n + j];
        }
    }
    let p = cmatmul(&cmatmul(&mc, &d.entries, n), &mt, n);
    WignerBlock { l: d.l, entries: p.iter().map(|v| v.re).collect() }
}

/// Real Wigner blocks `D^{l,R}(R)` for `l = 0..=l_max`.
pub fn wigner_d_real_all(l_max: usize, r: &Rotation) -> Vec<WignerBlock<f64>> {
    wigner_d_complex_all(l_max, r).iter().map(wigner_real_from_complex).collect()
}

/// Real Wigner block `D^{l,R}(R)`.
pub fn wigner_d_real(l: usize, r: &Rotation) -> WignerBlock<f64> {
    wigner_real_from_complex(&wigner_d_complex(l, r))
}

/// Rotates complex coefficients: `f'_l = D^l(R) f_l`.
pub fn sh_rotate_coeffs_complex(coeffs: &ShCoeffVector<Complex64>, r: &Rotation) -> ShCoeffVector<Complex64> {
    let blocks = wigner_d_complex_all(coeffs.l_max, r);
    let mut values = Vec::with_capacity(coeffs.values.len());
    for b in &blocks {
        values.extend(b.apply(&coeffs.values[b.l * b.l..(b.l + 1) * (b.l + 1)]));
    }
    ShCoeffVector { l_max: coeffs.l_max, values }
}

/// Rotates real coefficients: `f'_l = D^{l,R}(R) f_l`.
pub fn sh_rotate_coeffs_real(coeffs: &ShCoeffVector<f64>, r: &Rotation) -> ShCoeffVector<f64> {
    let blocks = wigner_d_real_all(coeffs.l_max, r);
    let mut values = Vec::with_capacity(coeffs.values.len());
    for b in &blocks {
        values.extend(b.apply(&coeffs.values[b.l * b.l..(b.l + 1) * (b.l + 1)]));
    }
    ShCoeffVector { l_max: coeffs.l_max, values }
}

/// Convolution with a zonal kernel: `f'_lm = √(4π/(2l+1)) k_l0 f_lm`.
/// Errors if the kernel has an entry with `m ≠ 0` above `1e-12`.
pub fn sh_convolve<T>(kernel: &ShCoeffVector<f64>, coeffs: &ShCoeffVector<T>) -> Result<ShCoeffVector<T>>
where
    T: Copy + Default + Mul<f64, Output = T>,
{
    for (i, v) in kernel.values.iter().enumerate() {
        let (l, m) = sh_lm(i);
        if m != 0 && v.abs() > 1e-12 {
            return Err(Error::Domain(format!("kernel is not zonal: k({l},{m}) = {v:e}")));
        }
    }
    let mut out = ShCoeffVector::zeros(coeffs.l_max);
    for l in 0..=coeffs.l_max {
        let k = if l <= kernel.l_max { kernel.get(l, 0) } else { 0.0 };
        let s = (4.0 * PI / (2 * l + 1) as f64).sqrt() * k;
        for m in -(l as i64)..=l as i64 {
            out.set(l, m, coeffs.get(l, m) * s);
        }
    }
    Ok(out)
}

/// Zonal coefficient `k_l0 = 2π ∫ Y_l0(θ) k(θ) sinθ dθ` by Gauss–Legendre in `cosθ`.
pub fn zonal_coeffs(k: impl Fn(f64) -> f64, l_max: usize, n_nodes: usize) -> ShCoeffVector<f64> {
    let (x, w) = crate::geom::gauss_legendre(n_nodes);
    let mut out = ShCoeffVector::zeros(l_max);
    for (xi, wi) in x.iter().zip(&w) {
        let t = legendre_normalized(l_max, *xi, (1.0 - xi * xi).sqrt());
        let kv = k(xi.acos());
        for l in 0..=l_max {
            out.values[sh_index(l, 0)] += 2.0 * PI * wi * kv * t[legendre_index(l, 0)];
        }
    }
    out
}

/// Coefficient of the reflection `z ↦ -z` on `Y_lm` (either basis): `(-1)^{l+m}`.
pub fn reflection_coeff_scalar(l: usize, m: i64) -> f64 {
    parity(l as i64 + m)
}

/// Wigner 3-j symbol by the Racah sum; zero when selection rules fail.
pub fn wigner3j(l1: i64, l2: i64, l3: i64, m1: i64, m2: i64, m3: i64) -> f64 {
    if m1 + m2 + m3 != 0 || m1.abs() > l1 || m2.abs() > l2 || m3.abs() > l3 || l3 < (l1 - l2).abs() || l3 > l1 + l2 {
        return 0.0;
    }
    let lf = ln_factorial;
    let ln_tri = 0.5 * (lf(l1 + l2 - l3) + lf(l1 - l2 + l3) + lf(-l1 + l2 + l3) - lf(l1 + l2 + l3 + 1));
    let ln_m = 0.5 * (lf(l1 + m1) + lf(l1 - m1) + lf(l2 + m2) + lf(l2 - m2) + lf(l3 + m3) + lf(l3 - m3));
    let kmin = 0.max(l2 - l3 - m1).max(l1 - l3 + m2);
    let kmax = (l1 + l2 - l3).min(l1 - m1).min(l2 + m2);
    let mut sum = 0.0;
    for k in kmin..=kmax {
        let d = lf(k)
            + lf(l1 + l2 - l3 - k)
            + lf(l1 - m1 - k)
            + lf(l2 + m2 - k)
            + lf(l3 - l2 + m1 + k)
            + lf(l3 - l1 - m2 + k);
        sum += parity(k) * (ln_tri + ln_m - d).exp();
    }
    parity(l1 - l2 - m3) * sum
}

/// `∫ Y*_{l1m1} Y_{l2m2} Y_{l3m3} dω` (complex harmonics).
pub fn triple_product_000(l1: usize, m1: i64, l2: usize, m2: i64, l3: usize, m3: i64) -> f64 {
    let (a, b, c) = (l1 as i64, l2 as i64, l3 as i64);
    if (a + b + c) % 2 == 1 || m1 != m2 + m3 {
        return 0.0;
    }
    let pre = ((2 * a + 1) as f64 * (2 * b + 1) as f64 * (2 * c + 1) as f64 / (4.0 * PI)).sqrt();
    parity(m1) * pre * wigner3j(a, b, c, -m1, m2, m3) * wigner3j(a, b, c, 0, 0, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{dir_to_sph, gauss_legendre_grid, rotation_zyz, sph_to_dir};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fact(n: i64) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// `d^l_{m'm}` by the explicit factorial sum.
    fn small_d_racah(l: i64, mp: i64, m: i64, beta: f64) -> f64 {
        let (s, c) = (beta / 2.0).sin_cos();
        let pre = (fact(l + m) * fact(l - m) * fact(l + mp) * fact(l - mp)).sqrt();
        let mut sum = 0.0;
        for k in 0..=2 * l {
            if l + m - k < 0 || l - k - mp < 0 || k - m + mp < 0 {
                continue;
            }
            let den = fact(l + m - k) * fact(k) * fact(l - k - mp) * fact(k - m + mp);
            sum += parity(k - m + mp) / den * c.powi((2 * l - 2 * k + m - mp) as i32) * s.powi((2 * k - m + mp) as i32);
        }
        pre * sum
    }

    /// `P_l^m` from the explicit power series of `d^m/dx^m P_l`.
    fn legendre_series(l: usize, m: usize, x: f64) -> f64 {
        // P_l(x) = 2^-l Σ_k (-1)^k C(l,k) C(2l-2k, l) x^{l-2k}
        let l = l as i64;
        let mut der = 0.0;
        for k in 0..=l / 2 {
            let pow = l - 2 * k;
            if pow < m as i64 {
                continue;
            }
            let c = parity(k) * fact(l) / (fact(k) * fact(l - k)) * fact(2 * l - 2 * k) / (fact(l) * fact(l - 2 * k));
            let falling = fact(pow) / fact(pow - m as i64);
            der += c * falling * x.powi((pow - m as i64) as i32);
        }
        parity(m as i64) * (1.0 - x * x).powf(m as f64 / 2.0) * der / 2f64.powi(l as i32)
    }

    fn quad<F: Fn(f64, f64) -> Complex64>(grid: &QuadratureGrid, f: F) -> Complex64 {
        grid.nodes().iter().map(|&(t, p, w)| f(t, p) * w).sum()
    }

    #[test]
    fn index_round_trip() {
        for i in 0..400 {
            let (l, m) = sh_lm(i);
            assert_eq!(sh_index(l, m), i);
        }
    }

    #[test]
    fn legendre_matches_series() {
        assert_eq!(assoc_legendre(0, 0, 0.4).unwrap(), 1.0);
        assert!((assoc_legendre(1, 0, 0.4).unwrap() - 0.4).abs() < 1e-15);
        let p22 = assoc_legendre(2, 2, 0.3).unwrap();
        assert!((p22 - 3.0 * (1.0 - 0.09)).abs() < 1e-13);
        assert!((p22 - legendre_series(2, 2, 0.3)).abs() < 1e-13);
        for l in 0..=10 {
            for m in 0..=l {
                for &x in &[-0.9, -0.2, 0.0, 0.35, 0.8] {
                    let a = assoc_legendre(l, m as i64, x).unwrap();
                    let b = legendre_series(l, m, x);
                    assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "l={l} m={m} x={x}");
                }
            }
        }
        let p = assoc_legendre(3, -2, 0.3).unwrap();
        assert!((p - assoc_legendre(3, 2, 0.3).unwrap() / 120.0).abs() < 1e-14);
        assert!(assoc_legendre(2, 1, 1.1).is_err());
        assert!(assoc_legendre(2, 3, 0.1).is_err());
    }

    #[test]
    fn closed_forms() {
        let y00 = sh_complex(0, 0, 0.3, 1.2);
        assert!((y00.re - (0.25 / PI).sqrt()).abs() < 1e-15 && y00.im == 0.0);
        let y10 = sh_complex(1, 0, 0.7, 2.0);
        assert!((y10.re - (3.0 / (4.0 * PI)).sqrt() * 0.7f64.cos()).abs() < 1e-15);
        let y11 = sh_complex(1, 1, 0.7, 0.4);
        let expect = -(3.0 / (8.0 * PI)).sqrt() * 0.7f64.sin() * Complex64::from_polar(1.0, 0.4);
        assert!((y11 - expect).norm() < 1e-15);
        assert!((sh_real(1, 1, 0.7, 0.4) - 2f64.sqrt() * y11.re).abs() < 1e-15);
        assert!((sh_real(3, 0, 0.7, 0.4) - sh_complex(3, 0, 0.7, 0.4).re).abs() < 1e-15);
    }

    #[test]
    fn orthonormality_both_bases() {
        let g = gauss_legendre_grid(8);
        let nodes = g.nodes();
        let yc: Vec<Vec<Complex64>> = nodes.iter().map(|&(t, p, _)| sh_complex_all(8, t, p)).collect();
        let yr: Vec<Vec<f64>> = nodes.iter().map(|&(t, p, _)| sh_real_all(8, t, p)).collect();
        let n = sh_len(8);
        let mut ec: f64 = 0.0;
        let mut er: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let d = if a == b { 1.0 } else { 0.0 };
                let c: Complex64 = nodes.iter().zip(&yc).map(|(nd, y)| y[a].conj() * y[b] * nd.2).sum();
                let r: f64 = nodes.iter().zip(&yr).map(|(nd, y)| y[a] * y[b] * nd.2).sum();
                ec = ec.max((c - d).norm());
                er = er.max((r - d).abs());
            }
        }
        assert!(ec < 1e-12 && er < 1e-12, "{ec:e} {er:e}");
    }

    #[test]
    fn y00_integral() {
        let g = gauss_legendre_grid(3);
        let v = quad(&g, |t, p| sh_complex(0, 0, t, p));
        assert!((v.re - (4.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn project_examples() {
        let g = gauss_legendre_grid(6);
        let samples: Vec<Complex64> = g.nodes().iter().map(|&(t, p, _)| sh_complex(2, 1, t, p)).collect();
        let c = sh_project_complex(&g, &samples, 6).unwrap();
        for (i, v) in c.values.iter().enumerate() {
            let expect = if i == sh_index(2, 1) { 1.0 } else { 0.0 };
            assert!((v - expect).norm() < 1e-12);
        }
        let consts = vec![2.5; g.len()];
        let c = sh_project_real(&g, &consts, 6).unwrap();
        assert!((c.values[0] - 2.5 * (4.0 * PI).sqrt()).abs() < 1e-12);
        assert!(c.values[1..].iter().all(|v| v.abs() < 1e-12));
        let mut one = ShCoeffVector::zeros(3);
        one.values[0] = (4.0 * PI).sqrt();
        assert!((sh_reconstruct_real(&one, 0.4, 0.2) - 1.0).abs() < 1e-14);
        assert_eq!(sh_reconstruct_real(&ShCoeffVector::zeros(3), 0.4, 0.2), 0.0);
        assert!(matches!(sh_project_real(&g, &consts, 7), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn real_project_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l_max = 7;
        let coeffs =
            ShCoeffVector::from_values(l_max, (0..sh_len(l_max)).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let g = gauss_legendre_grid(l_max);
        let samples = sh_synthesize_real(&coeffs, &g);
        let back = sh_project_real(&g, &samples, l_max).unwrap();
        for (a, b) in back.values.iter().zip(&coeffs.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let cc = real_to_complex(&coeffs);
        let samples_c: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let pc = sh_project_complex(&g, &samples_c, l_max).unwrap();
        for (a, b) in pc.values.iter().zip(&cc.values) {
            assert!((a - b).norm() < 1e-12);
        }
        let rr = complex_to_real(&cc);
        for (a, b) in rr.values.iter().zip(&coeffs.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn small_d_matches_racah() {
        for &beta in &[0.0, 0.3, 1.1, 2.0, PI - 1e-3, PI] {
            let blocks = small_d_blocks(10, beta);
            for b in &blocks {
                let l = b.l as i64;
                for m in -l..=l {
                    for mp in -l..=l {
                        let o = small_d_racah(l, m, mp, beta);
                        assert!((b.get(m, mp) - o).abs() < 1e-11, "l={l} m={m} mp={mp} beta={beta}");
                    }
                }
            }
        }
        for &(m, mp) in &[(0, 0), (-2, 2), (3, -2), (-1, -2), (2, 5), (-4, 1)] {
            let seq = small_d_seq(9, 1.3, m, mp);
            for l in 0..=9i64 {
                let o = if l < m.abs().max(mp.abs()) { 0.0 } else { small_d_racah(l, m, mp, 1.3) };
                assert!((seq[l as usize] - o).abs() < 1e-12, "l={l} m={m} mp={mp}");
            }
        }
        let d = small_d_blocks(1, 0.8);
        assert!((d[1].get(1, 0) + 0.8f64.sin() / 2f64.sqrt()).abs() < 1e-15);
        assert!((d[1].get(0, 0) - 0.8f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn small_d_high_band_stays_orthogonal() {
        let d = small_d_blocks(64, 1.3);
        let b = &d[64];
        let p = b.mul(&b.transpose());
        let n = b.dim();
        let mut e: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                e = e.max((p.entries[i * n + j] - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        assert!(e < 1e-11, "{e:e}");
    }

    #[test]
    fn wigner_matches_quadrature() {
        let r = rotation_zyz(0.4, 1.2, -0.7);
        let rinv = r.inverse();
        let g = gauss_legendre_grid(6);
        let blocks = wigner_d_complex_all(4, &r);
        let real_blocks = wigner_d_real_all(4, &r);
        for l in 0..=4usize {
            let li = l as i64;
            for m in -li..=li {
                for mp in -li..=li {
                    let v = quad(&g, |t, p| {
                        let (t2, p2) = dir_to_sph(rinv.apply(sph_to_dir(t, p)));
                        sh_complex(l, m, t, p).conj() * sh_complex(l, mp, t2, p2)
                    });
                    assert!((v - blocks[l].get(m, mp)).norm() < 1e-10);
                    let vr = quad(&g, |t, p| {
                        let (t2, p2) = dir_to_sph(rinv.apply(sph_to_dir(t, p)));
                        Complex64::new(sh_real(l, m, t, p) * sh_real(l, mp, t2, p2), 0.0)
                    });
                    assert!((vr.re - real_blocks[l].get(m, mp)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn wigner_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let mut ang = || (rng.gen_range(-PI..PI), rng.gen_range(0.0..PI), rng.gen_range(-PI..PI));
            let (a1, b1, c1) = ang();
            let (a2, b2, c2) = ang();
            let r1 = rotation_zyz(a1, b1, c1);
            let r2 = rotation_zyz(a2, b2, c2);
            let d1 = wigner_d_complex_all(6, &r1);
            let d2 = wigner_d_complex_all(6, &r2);
            let d12 = wigner_d_complex_all(6, &r1.compose(&r2));
            let dinv = wigner_d_complex_all(6, &r1.inverse());
            for l in 0..=6 {
                let li = l as i64;
                let p = d1[l].mul(&d2[l]);
                let u = d1[l].mul(&d1[l].adjoint());
                let id = WignerBlock::identity(l);
                for i in 0..p.entries.len() {
                    assert!((p.entries[i] - d12[l].entries[i]).norm() < 1e-12);
                    assert!((u.entries[i] - id.entries[i]).norm() < 1e-12);
                    assert!((dinv[l].entries[i] - d1[l].adjoint().entries[i]).norm() < 1e-12);
                }
                for m in -li..=li {
                    for mp in -li..=li {
                        let lhs = d1[l].get(m, mp).conj();
                        let rhs = d1[l].get(-m, -mp) * parity(m - mp);
                        assert!((lhs - rhs).norm() < 1e-12);
                    }
                    // zonal relation
                    let psi = 0.37;
                    let z = wigner_d_complex(l, &rotation_zyz(a1, b1, psi)).get(m, 0);
                    let y = sh_complex(l, m, b1, a1).conj() * (4.0 * PI / (2 * l + 1) as f64).sqrt();
                    assert!((z - y).norm() < 1e-12);
                }
            }
        }
        let id = wigner_d_complex(3, &Rotation::IDENTITY);
        assert_eq!(id.entries.len(), 49);
        for (i, v) in id.entries.iter().enumerate() {
            let e = if i % 8 == 0 { 1.0 } else { 0.0 };
            assert!((v - e).norm() < 1e-15);
        }
        let d = wigner_d_complex(1, &rotation_zyz(0.3, 0.9, 1.4));
        assert!((d.get(0, 0).re - 0.9f64.cos()).abs() < 1e-15 && d.get(0, 0).im.abs() < 1e-15);
    }

    #[test]
    fn rotation_commutes_with_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l_max = 6;
        let coeffs =
            ShCoeffVector::from_values(l_max, (0..sh_len(l_max)).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let r = rotation_zyz(1.0, 0.6, -2.2);
        let rinv = r.inverse();
        let g = gauss_legendre_grid(l_max);
        let rotated: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&(t, p, _)| {
                let (t2, p2) = dir_to_sph(rinv.apply(sph_to_dir(t, p)));
                sh_reconstruct_real(&coeffs, t2, p2)
            })
            .collect();
        let a = sh_project_real(&g, &rotated, l_max).unwrap();
        let b = sh_rotate_coeffs_real(&coeffs, &r);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-10);
        }
        let n0: f64 = coeffs.values.iter().map(|v| v * v).sum();
        let n1: f64 = b.values.iter().map(|v| v * v).sum();
        assert!((n0 - n1).abs() < 1e-12 * n0);
        assert_eq!(sh_rotate_coeffs_real(&coeffs, &Rotation::IDENTITY).values.len(), coeffs.values.len());
    }

    #[test]
    fn convolution_matches_angular() {
        let l_max = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coeffs =
            ShCoeffVector::from_values(l_max, (0..sh_len(l_max)).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let kfun = |t: f64| (-2.0 * (1.0 - t.cos())).exp();
        let kc = zonal_coeffs(kfun, l_max, 64);
        let freq = sh_convolve(&kc, &coeffs).unwrap();
        // angular: band-limited kernel projection integrates exactly on the grid
        let kband = |t: f64| sh_reconstruct_real(&kc, t, 0.0);
        let g = gauss_legendre_grid(l_max);
        let samples = sh_synthesize_real(&coeffs, &g);
        let nodes = g.nodes();
        for &(t, p) in &[(0.3, 0.2), (1.7, 4.0), (2.9, 1.0)] {
            let w0 = sph_to_dir(t, p);
            let ang: f64 = nodes
                .iter()
                .zip(&samples)
                .map(|(&(ti, pi, w), f)| kband(w0.dot(sph_to_dir(ti, pi)).clamp(-1.0, 1.0).acos()) * f * w)
                .sum();
            let fr = sh_reconstruct_real(&freq, t, p);
            assert!((ang - fr).abs() < 1e-8, "{ang} {fr}");
        }
        let mut delta = ShCoeffVector::zeros(l_max);
        for l in 0..=l_max {
            delta.set(l, 0, ((2 * l + 1) as f64 / (4.0 * PI)).sqrt());
        }
        let same = sh_convolve(&delta, &coeffs).unwrap();
        for (a, b) in same.values.iter().zip(&coeffs.values) {
            assert!((a - b).abs() < 1e-14);
        }
        let mut bad = delta.clone();
        bad.set(2, 1, 0.5);
        assert!(sh_convolve(&bad, &coeffs).is_err());
    }

    #[test]
    fn reflection_matches_quadrature() {
        let g = gauss_legendre_grid(6);
        assert_eq!(reflection_coeff_scalar(0, 0), 1.0);
        assert_eq!(reflection_coeff_scalar(1, 0), -1.0);
        for l in 0..=5usize {
            for m in -(l as i64)..=l as i64 {
                let v = quad(&g, |t, p| Complex64::new(sh_real(l, m, t, p) * sh_real(l, m, PI - t, p), 0.0));
                assert!((v.re - reflection_coeff_scalar(l, m)).abs() < 1e-10);
            }
        }
    }

    /// Racah formula with exact integer factorials.
    fn wigner3j_exact(l1: i64, l2: i64, l3: i64, m1: i64, m2: i64, m3: i64) -> f64 {
        fn f(n: i64) -> u128 {
            (1..=n as u128).product()
        }
        if m1 + m2 + m3 != 0 || l3 < (l1 - l2).abs() || l3 > l1 + l2 {
            return 0.0;
        }
        let tri =
            f(l1 + l2 - l3) as f64 * f(l1 - l2 + l3) as f64 * f(-l1 + l2 + l3) as f64 / f(l1 + l2 + l3 + 1) as f64;
        let ms = [l1 + m1, l1 - m1, l2 + m2, l2 - m2, l3 + m3, l3 - m3].iter().map(|&k| f(k) as f64).product::<f64>();
        let mut pos: u128 = 0;
        let mut neg: u128 = 0;
        let mut terms = Vec::new();
        for k in 0..=(l1 + l2 + l3) {
            let args = [k, l1 + l2 - l3 - k, l1 - m1 - k, l2 + m2 - k, l3 - l2 + m1 + k, l3 - l1 - m2 + k];
            if args.iter().any(|&a| a < 0) {
                continue;
            }
            terms.push((k, args.iter().map(|&a| f(a)).product::<u128>()));
        }
        // each denominator is a multinomial divisor of (l1+l2+l3)!
        let big = f(l1 + l2 + l3);
        for (k, d) in &terms {
            let term = big / d;
            if k % 2 == 0 {
                pos += term
            } else {
                neg += term
            }
        }
        let s = (pos as i128 - neg as i128) as f64 / big as f64;
        parity(l1 - l2 - m3) * (tri * ms).sqrt() * s
    }

    #[test]
    fn wigner3j_examples() {
        assert!((wigner3j(0, 0, 0, 0, 0, 0) - 1.0).abs() < 1e-15);
        assert_eq!(wigner3j(1, 1, 1, 1, 1, 0), 0.0);
        assert!((wigner3j(1, 1, 0, 1, -1, 0) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((wigner3j(2, 2, 2, 0, 0, 0) + (2.0 / 35.0f64).sqrt()).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut checked = 0;
        while checked < 300 {
            let l1 = rng.gen_range(0..6i64);
            let l2 = rng.gen_range(0..6i64);
            let l3 = rng.gen_range((l1 - l2).abs()..=l1 + l2);
            let m1 = rng.gen_range(-l1..=l1);
            let m2 = rng.gen_range(-l2..=l2);
            let m3 = -m1 - m2;
            if m3.abs() > l3 {
                continue;
            }
            let a = wigner3j(l1, l2, l3, m1, m2, m3);
            let b = wigner3j_exact(l1, l2, l3, m1, m2, m3);
            assert!((a - b).abs() < 1e-12, "({l1},{l2},{l3};{m1},{m2},{m3}) {a} {b}");
            checked += 1;
        }
    }

    #[test]
    fn triple_products_match_quadrature() {
        let g = gauss_legendre_grid(8);
        let nodes = g.nodes();
        let y: Vec<Vec<Complex64>> = nodes.iter().map(|&(t, p, _)| sh_complex_all(4, t, p)).collect();
        let mut e: f64 = 0.0;
        for a in 0..sh_len(4) {
            for b in 0..sh_len(4) {
                for c in 0..sh_len(4) {
                    let (l1, m1) = sh_lm(a);
                    let (l2, m2) = sh_lm(b);
                    let (l3, m3) = sh_lm(c);
                    let q: Complex64 = nodes.iter().zip(&y).map(|(n, y)| y[a].conj() * y[b] * y[c] * n.2).sum();
                    e = e.max((q - triple_product_000(l1, m1, l2, m2, l3, m3)).norm());
                }
            }
        }
        assert!(e < 1e-10, "{e:e}");
        assert!((triple_product_000(3, 1, 0, 0, 3, 1) - (0.25 / PI).sqrt()).abs() < 1e-14);
        assert_eq!(triple_product_000(1, 0, 1, 0, 1, 0), 0.0);
    }

    proptest! {
        #[test]
        fn conjugate_symmetry(l in 0usize..12, mf in 0.0..1.0f64, t in 0.0..PI, p in 0.0..6.3f64) {
            let m = ((2 * l + 1) as f64 * mf).floor() as i64 - l as i64;
            let m = m.clamp(-(l as i64), l as i64);
            let a = sh_complex(l, m, t, p).conj();
            let b = sh_complex(l, -m, t, p) * parity(m);
            prop_assert!((a - b).norm() < 1e-12);
        }

        #[test]
        fn real_wigner_orthogonal(a in -PI..PI, b in 0.0..PI, c in -PI..PI) {
            for blk in wigner_d_real_all(6, &rotation_zyz(a, b, c)) {
                let p = blk.mul(&blk.transpose());
                let n = blk.dim();
                for i in 0..n { for j in 0..n {
                    let e = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((p.entries[i * n + j] - e).abs() < 1e-12);
                }}
            }
        }
    }
}
