//! PSH coefficient matrices of Mueller-valued linear operators.
//!
//! `P_{o,i} = <Y⃗_o, P[Y⃗_i]>` with `P[f](ω_o) = ∫ P(ω_i, ω_o) f(ω_i) dω_i`. Rows
//! index output `(l_o, m_o, p_o)`, columns input `(l_i, m_i, p_i)`, both in
//! [`psh_index`] order.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::geom::{sph_to_dir, Direction, QuadratureGrid, Vec3};
use crate::polar::{Mat4, MuellerField};
use crate::psh::triple_product_022;
use crate::psh::{components_at, psh_index, psh_len, s2sh_all, PshCoeffVector, PshRotation};
use crate::sh::{
    complex_to_real_matrix, real_to_complex, sh_index, sh_len, sh_lm, sh_project_real, sh_real_all, triple_product_000,
    ShCoeffVector,
};
use crate::{parity, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sparsity {
    General,
    Isotropic,
}

/// Dense real matrix over PSH indices, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PshCoeffMatrix {
    pub l_max: usize,
    pub data: Vec<f64>,
    pub sparsity: Sparsity,
}

/// Index range of band `l` in PSH order.
pub fn band_range(l: usize) -> std::ops::Range<usize> {
    let start = if l == 0 { 0 } else { psh_len(l - 1) };
    start..psh_len(l)
}

impl PshCoeffMatrix {
    pub fn zeros(l_max: usize) -> Self {
        let n = psh_len(l_max);
        PshCoeffMatrix { l_max, data: vec![0.0; n * n], sparsity: Sparsity::General }
    }

    pub fn identity(l_max: usize) -> Self {
        let mut m = Self::zeros(l_max);
        let n = m.dim();
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_data(l_max: usize, data: Vec<f64>) -> Result<Self> {
        let n = psh_len(l_max);
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: data.len() });
        }
        Ok(PshCoeffMatrix { l_max, data, sparsity: Sparsity::General })
    }

    pub fn dim(&self) -> usize {
        psh_len(self.l_max)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dim() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let n = self.dim();
        self.data[r * n + c] = v;
    }

    /// 4×4 sub-block `(l_o, m_o) × (l_i, m_i)`; absent `p` entries read as zero.
    pub fn sub_block(&self, lo: usize, mo: i64, li: usize, mi: i64) -> Mat4 {
        let mut b = [[0.0; 4]; 4];
        for &po in components_at(lo) {
            for &pi in components_at(li) {
                b[po][pi] = self.get(psh_index(lo, mo, po), psh_index(li, mi, pi));
            }
        }
        b
    }

    pub fn set_sub_block(&mut self, lo: usize, mo: i64, li: usize, mi: i64, b: &Mat4) {
        for &po in components_at(lo) {
            for &pi in components_at(li) {
                self.set(psh_index(lo, mo, po), psh_index(li, mi, pi), b[po][pi]);
            }
        }
    }

    /// Leading `l_max` bands.
    pub fn truncated(&self, l_max: usize) -> Self {
        let n = psh_len(l_max);
        let mut out = PshCoeffMatrix::zeros(l_max);
        for r in 0..n.min(self.dim()) {
            for c in 0..n.min(self.dim()) {
                out.data[r * n + c] = self.get(r, c);
            }
        }
        out.sparsity = self.sparsity;
        out
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim();
        let mut out = self.clone();
        for r in 0..n {
            for c in 0..n {
                out.data[c * n + r] = self.data[r * n + c];
            }
        }
        out
    }

    pub fn matmul(&self, o: &PshCoeffMatrix) -> Result<Self> {
        if o.l_max != self.l_max {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: o.dim() });
        }
        let n = self.dim();
        let data: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|r| {
                let mut row = vec![0.0; n];
                for k in 0..n {
                    let a = self.data[r * n + k];
                    if a != 0.0 {
                        for (x, b) in row.iter_mut().zip(&o.data[k * n..(k + 1) * n]) {
                            *x += a * b;
                        }
                    }
                }
                row
            })
            .collect();
        Ok(PshCoeffMatrix { l_max: self.l_max, data, sparsity: Sparsity::General })
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn max_abs_diff(&self, o: &PshCoeffMatrix) -> f64 {
        self.data.iter().zip(&o.data).fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `D M Dᵀ`: the operator conjugated by a rotation.
    pub fn rotated(&self, rot: &PshRotation) -> Self {
        let n = self.dim();
        let d = rot.dense(self.l_max);
        let ranges: Vec<_> = (0..=self.l_max).map(band_range).collect();
        // X = M Dᵀ, both block diagonal in l on the D side
        let mut x = vec![0.0; n * n];
        x.par_chunks_mut(n).enumerate().for_each(|(r, row)| {
            for rg in &ranges {
                for c in rg.clone() {
                    row[c] = rg.clone().map(|k| self.data[r * n + k] * d[c * n + k]).sum();
                }
            }
        });
        let mut y = vec![0.0; n * n];
        y.par_chunks_mut(n).enumerate().for_each(|(r, row)| {
            let rg = ranges.iter().find(|g| g.contains(&r)).expect("row in some band").clone();
            for k in rg {
                let a = d[r * n + k];
                if a != 0.0 {
                    for (v, b) in row.iter_mut().zip(&x[k * n..(k + 1) * n]) {
                        *v += a * b;
                    }
                }
            }
        });
        PshCoeffMatrix { l_max: self.l_max, data: y, sparsity: self.sparsity }
    }
}

/// `M f`.
pub fn operator_apply(m: &PshCoeffMatrix, f: &PshCoeffVector) -> Result<PshCoeffVector> {
    let n = m.dim();
    if f.values.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: f.values.len() });
    }
    let values = (0..n)
        .into_par_iter()
        .map(|r| m.data[r * n..(r + 1) * n].iter().zip(&f.values).map(|(a, b)| a * b).sum())
        .collect();
    Ok(PshCoeffVector { l_max: m.l_max, values })
}

/// One 4×4 sub-block split by spin: entries indexed `[output][input]` with scalar
/// slots `(0, 3)` and spin-2 slots `(1, 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlockDecomposition {
    pub scalar: [[f64; 2]; 2],
    pub to_spin2: [[f64; 2]; 2],
    pub from_spin2: [[f64; 2]; 2],
    pub spin2: [[f64; 2]; 2],
}

const SCALAR_P: [usize; 2] = [0, 3];
const SPIN_P: [usize; 2] = [1, 2];

impl BlockDecomposition {
    pub fn decompose(b: &Mat4) -> Self {
        let mut d = BlockDecomposition::default();
        for r in 0..2 {
            for c in 0..2 {
                d.scalar[r][c] = b[SCALAR_P[r]][SCALAR_P[c]];
                d.to_spin2[r][c] = b[SPIN_P[r]][SCALAR_P[c]];
                d.from_spin2[r][c] = b[SCALAR_P[r]][SPIN_P[c]];
                d.spin2[r][c] = b[SPIN_P[r]][SPIN_P[c]];
            }
        }
        d
    }

    pub fn assemble(&self) -> Mat4 {
        let mut b = [[0.0; 4]; 4];
        for r in 0..2 {
            for c in 0..2 {
                b[SCALAR_P[r]][SCALAR_P[c]] = self.scalar[r][c];
                b[SPIN_P[r]][SCALAR_P[c]] = self.to_spin2[r][c];
                b[SCALAR_P[r]][SPIN_P[c]] = self.from_spin2[r][c];
                b[SPIN_P[r]][SPIN_P[c]] = self.spin2[r][c];
            }
        }
        b
    }
}

struct NodeBasis {
    w: f64,
    dir: Direction,
    yr: Vec<f64>,
    y2: Vec<Complex64>,
}

fn node_bases(grid: &QuadratureGrid, l_max: usize) -> Vec<NodeBasis> {
    grid.nodes()
        .into_par_iter()
        .map(|(t, p, w)| NodeBasis {
            w,
            dir: sph_to_dir(t, p),
            yr: sh_real_all(l_max, t, p),
            y2: s2sh_all(l_max, t, p),
        })
        .collect()
}

/// Per-output-node responses; see [`operator_project`].
struct Response {
    /// scalar → scalar, `[q][p][lm]`
    ss: [[Vec<f64>; 2]; 2],
    /// scalar → spin-2 (`s1 + i s2`), `[p][lm]`
    sz: [Vec<Complex64>; 2],
    /// spin-2 → scalar, `[q][lm]`; `Re` gives the `p = 1` column, `-Im` the `p = 2` one
    zs: [Vec<Complex64>; 2],
    iso: Vec<Complex64>,
    conj: Vec<Complex64>,
}

/// Projects a Mueller field: `P_{o,i} = ∫∫ Y⃗_o(ω_o) · P(ω_i, ω_o) Y⃗_i(ω_i) dω_i dω_o`.
///
/// The spin 2-to-2 blocks come from two complex integrals, one of the isomorphic part
/// against `₂Y_i` and one of the conjugation part against `conj(₂Y_i)`.
pub fn operator_project(field: &dyn MuellerField, l_max: usize, grid: &QuadratureGrid) -> Result<PshCoeffMatrix> {
    if grid.band < l_max {
        return Err(Error::GridTooCoarse { grid: grid.band, requested: l_max });
    }
    let nodes = node_bases(grid, l_max);
    let sl = sh_len(l_max);
    let n = psh_len(l_max);
    let data = nodes
        .par_iter()
        .fold(
            || vec![0.0; n * n],
            |mut acc, out| {
                let mut rsp = Response {
                    ss: [[vec![0.0; sl], vec![0.0; sl]], [vec![0.0; sl], vec![0.0; sl]]],
                    sz: [vec![Complex64::default(); sl], vec![Complex64::default(); sl]],
                    zs: [vec![Complex64::default(); sl], vec![Complex64::default(); sl]],
                    iso: vec![Complex64::default(); sl],
                    conj: vec![Complex64::default(); sl],
                };
                for inp in &nodes {
                    let m = field.mueller(inp.dir, out.dir);
                    if m.iter().flatten().all(|v| *v == 0.0) {
                        continue;
                    }
                    let w = inp.w;
                    for (a, &p) in SCALAR_P.iter().enumerate() {
                        let z = Complex64::new(m[1][p], m[2][p]) * w;
                        for (b, &q) in SCALAR_P.iter().enumerate() {
                            let s = m[q][p] * w;
                            for (x, y) in rsp.ss[b][a].iter_mut().zip(&inp.yr) {
                                *x += s * y;
                            }
                        }
                        for (x, y) in rsp.sz[a].iter_mut().zip(&inp.yr) {
                            *x += z * y;
                        }
                    }
                    if l_max < 2 {
                        continue;
                    }
                    for (b, &q) in SCALAR_P.iter().enumerate() {
                        let c = Complex64::new(m[q][1], -m[q][2]) * w;
                        for (x, y) in rsp.zs[b].iter_mut().zip(&inp.y2) {
                            *x += c * y;
                        }
                    }
                    let pair = crate::geom::complex_pair_separate(&[[m[1][1], m[1][2]], [m[2][1], m[2][2]]]);
                    let (iso, cj) = (pair.iso * w, pair.conj * w);
                    for k in 4..sl {
                        let y = inp.y2[k];
                        rsp.iso[k] += iso * y;
                        rsp.conj[k] += cj * y.conj();
                    }
                }
                accumulate_output(&mut acc, out, &rsp, l_max);
                acc
            },
        )
        .reduce(
            || vec![0.0; n * n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(PshCoeffMatrix { l_max, data, sparsity: Sparsity::General })
}

fn accumulate_output(acc: &mut [f64], out: &NodeBasis, rsp: &Response, l_max: usize) {
    let n = psh_len(l_max);
    let sl = sh_len(l_max);
    let w = out.w;
    for ko in 0..sl {
        let (lo, mo) = sh_lm(ko);
        let yo = out.yr[ko] * w;
        let y2o = out.y2[ko].conj() * w;
        for ki in 0..sl {
            let (li, mi) = sh_lm(ki);
            for (b, &q) in SCALAR_P.iter().enumerate() {
                let row = psh_index(lo, mo, q) * n;
                for (a, &p) in SCALAR_P.iter().enumerate() {
                    acc[row + psh_index(li, mi, p)] += yo * rsp.ss[b][a][ki];
                }
                if li >= 2 {
                    let g = rsp.zs[b][ki] * yo;
                    let c = psh_index(li, mi, 1);
                    acc[row + c] += g.re;
                    acc[row + c + 1] -= g.im;
                }
            }
            if lo < 2 {
                continue;
            }
            let r1 = psh_index(lo, mo, 1) * n;
            let r2 = r1 + n;
            for (a, &p) in SCALAR_P.iter().enumerate() {
                let f = y2o * rsp.sz[a][ki];
                let c = psh_index(li, mi, p);
                acc[r1 + c] += f.re;
                acc[r2 + c] += f.im;
            }
            if li >= 2 {
                let i1 = y2o * rsp.iso[ki];
                let i2 = y2o * rsp.conj[ki];
                let c = psh_index(li, mi, 1);
                acc[r1 + c] += i1.re + i2.re;
                acc[r1 + c + 1] += -i1.im + i2.im;
                acc[r2 + c] += i1.im + i2.im;
                acc[r2 + c + 1] += i1.re - i2.re;
            }
        }
    }
}

/// Isotropic storage: only entries with `|m_i| = |m_o|`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropicCompact {
    pub l_max: usize,
    /// `(row, col, value)` in row-major order.
    pub entries: Vec<(usize, usize, f64)>,
    /// Largest `|entry|` with `|m_i| ≠ |m_o|`.
    pub max_m_violation: f64,
    /// Largest spin-2 isomorphic part with `m_i ≠ m_o` or conjugation part with `m_i ≠ -m_o`.
    pub max_pair_violation: f64,
}

impl IsotropicCompact {
    pub fn to_dense(&self) -> PshCoeffMatrix {
        let mut m = PshCoeffMatrix::zeros(self.l_max);
        for &(r, c, v) in &self.entries {
            m.set(r, c, v);
        }
        m.sparsity = Sparsity::Isotropic;
        m
    }
}

/// Number of stored entries of [`IsotropicCompact`] at `l_max`.
pub fn isotropic_entry_count(l_max: usize) -> usize {
    let np = |l: usize| components_at(l).len();
    let mut c = 0;
    for lo in 0..=l_max {
        for li in 0..=l_max {
            c += (1 + 4 * lo.min(li)) * np(lo) * np(li);
        }
    }
    c
}

/// Keeps the `|m_i| = |m_o|` entries and reports how far `m` is from isotropic.
pub fn isotropic_compact(m: &PshCoeffMatrix) -> IsotropicCompact {
    let l_max = m.l_max;
    let sl = sh_len(l_max);
    let mut entries = Vec::with_capacity(isotropic_entry_count(l_max));
    let (mut vm, mut vp): (f64, f64) = (0.0, 0.0);
    for ko in 0..sl {
        let (lo, mo) = sh_lm(ko);
        for &po in components_at(lo) {
            let r = psh_index(lo, mo, po);
            for ki in 0..sl {
                let (li, mi) = sh_lm(ki);
                for &pi in components_at(li) {
                    let c = psh_index(li, mi, pi);
                    let v = m.get(r, c);
                    if mo.abs() == mi.abs() {
                        entries.push((r, c, v));
                    } else {
                        vm = vm.max(v.abs());
                    }
                }
            }
        }
    }
    for ko in 0..sl {
        let (lo, mo) = sh_lm(ko);
        for ki in 0..sl {
            let (li, mi) = sh_lm(ki);
            if lo < 2 || li < 2 || mo.abs() != mi.abs() || mo == 0 {
                continue;
            }
            let b = BlockDecomposition::decompose(&m.sub_block(lo, mo, li, mi)).spin2;
            let pair = crate::geom::complex_pair_separate(&b);
            if mi != mo {
                vp = vp.max(pair.iso.norm());
            }
            if mi != -mo {
                vp = vp.max(pair.conj.norm());
            }
        }
    }
    IsotropicCompact { l_max, entries, max_m_violation: vm, max_pair_violation: vp }
}

/// Real SH coefficients of a visibility (or any scalar) function.
pub fn visibility_project(
    v: impl Fn(Direction) -> f64 + Sync,
    l_max: usize,
    grid: &QuadratureGrid,
) -> Result<ShCoeffVector<f64>> {
    let samples: Vec<f64> = grid.nodes().par_iter().map(|&(t, p, _)| v(sph_to_dir(t, p))).collect();
    sh_project_real(grid, &samples, l_max)
}

/// One nonzero triple product: `(row, column, visibility index, value)`.
type TripleEntry = (usize, usize, usize, f64);

/// Sparse triple-product tables used to expand a visibility into a shadow matrix.
#[derive(Debug, Clone)]
pub struct ShadowExpander {
    pub l_max: usize,
    pub l_vis: usize,
    /// `(row lm, col lm, visibility lm, ∫ Y^R_row Y^R_vis Y^R_col)`.
    scalar: Vec<TripleEntry>,
    /// `(row lm, col lm, visibility lm (complex), ∫ conj(₂Y_row) Y_vis ₂Y_col)`.
    spin2: Vec<TripleEntry>,
}

impl ShadowExpander {
    /// Tables for shadow matrices up to `l_max` from visibilities up to `l_vis`.
    pub fn new(l_max: usize, l_vis: usize) -> Self {
        let sl = sh_len(l_max);
        let rows: Vec<(Vec<TripleEntry>, Vec<TripleEntry>)> = (0..sl)
            .into_par_iter()
            .map(|a| {
                let (l1, m1) = sh_lm(a);
                let mut sc = Vec::new();
                let mut s2 = Vec::new();
                for c in 0..sl {
                    let (l3, m3) = sh_lm(c);
                    for l2 in l1.abs_diff(l3)..=(l1 + l3).min(l_vis) {
                        for m2 in real_partner_ms(m1, m3) {
                            if m2.unsigned_abs() as usize > l2 {
                                continue;
                            }
                            let g = real_gaunt(l1, m1, l2, m2, l3, m3);
                            if g.abs() > 1e-15 {
                                sc.push((a, c, sh_index(l2, m2), g));
                            }
                        }
                        if l1 >= 2 && l3 >= 2 {
                            let m2 = m1 - m3;
                            if m2.unsigned_abs() as usize <= l2 {
                                let g = triple_product_022(l1, m1, l2, m2, l3, m3);
                                if g.abs() > 1e-15 {
                                    s2.push((a, c, sh_index(l2, m2), g));
                                }
                            }
                        }
                    }
                }
                (sc, s2)
            })
            .collect();
        let mut scalar = Vec::new();
        let mut spin2 = Vec::new();
        for (a, b) in rows {
            scalar.extend(a);
            spin2.extend(b);
        }
        ShadowExpander { l_max, l_vis, scalar, spin2 }
    }

    /// Shadow matrix `V_{o,i} = <Y⃗_o, V Y⃗_i>` for real visibility coefficients `v`.
    pub fn expand(&self, v: &ShCoeffVector<f64>) -> PshCoeffMatrix {
        let v = v.resized(self.l_vis);
        let vc = real_to_complex(&v);
        let l_max = self.l_max;
        let sl = sh_len(l_max);
        let mut s = vec![0.0; sl * sl];
        for &(a, c, k, g) in &self.scalar {
            s[a * sl + c] += g * v.values[k];
        }
        let mut z = vec![Complex64::default(); sl * sl];
        for &(a, c, k, g) in &self.spin2 {
            z[a * sl + c] += vc.values[k] * g;
        }
        let mut out = PshCoeffMatrix::zeros(l_max);
        for a in 0..sl {
            let (lo, mo) = sh_lm(a);
            for c in 0..sl {
                let (li, mi) = sh_lm(c);
                let x = s[a * sl + c];
                if x != 0.0 {
                    out.set(psh_index(lo, mo, 0), psh_index(li, mi, 0), x);
                    out.set(psh_index(lo, mo, 3), psh_index(li, mi, 3), x);
                }
                let w = z[a * sl + c];
                if lo >= 2 && li >= 2 && w != Complex64::default() {
                    let (r, col) = (psh_index(lo, mo, 1), psh_index(li, mi, 1));
                    out.set(r, col, w.re);
                    out.set(r, col + 1, -w.im);
                    out.set(r + 1, col, w.im);
                    out.set(r + 1, col + 1, w.re);
                }
            }
        }
        out
    }
}

/// Real-basis `m2` values that can couple `m1` and `m3`.
fn real_partner_ms(m1: i64, m3: i64) -> Vec<i64> {
    let a = m1.abs();
    let c = m3.abs();
    let mut v = vec![a + c, (a - c).abs()];
    v.dedup();
    let mut out = Vec::new();
    for x in v {
        out.push(x);
        if x != 0 {
            out.push(-x);
        }
    }
    out
}

/// `∫ Y^R_{l1m1} Y^R_{l2m2} Y^R_{l3m3} dω` through the complex triple product.
pub fn real_gaunt(l1: usize, m1: i64, l2: usize, m2: i64, l3: usize, m3: i64) -> f64 {
    let row = |l: usize, m: i64| -> Vec<(i64, Complex64)> {
        let mm = complex_to_real_matrix(l);
        let n = 2 * l as i64 + 1;
        let r = (m + l as i64) as usize;
        (0..n as usize)
            .filter(|&k| mm[r * n as usize + k] != Complex64::default())
            .map(|k| (k as i64 - l as i64, mm[r * n as usize + k]))
            .collect()
    };
    let mut s = Complex64::default();
    for (a, ma) in row(l1, m1) {
        for (b, mb) in row(l2, m2) {
            for (c, mc) in row(l3, m3) {
                // ∫ conj(Y_a) Y_b Y_c with conj(Y^R_1) = Σ conj(M_1a) conj(Y_a)
                s += ma.conj() * mb * mc * triple_product_000(l1, a, l2, b, l3, c);
            }
        }
    }
    s.re
}

/// Shadow matrix through the triple-product tables; [`ShadowExpander`] caches them.
pub fn shadow_expand(v: &ShCoeffVector<f64>, l_max: usize) -> PshCoeffMatrix {
    ShadowExpander::new(l_max, v.l_max).expand(v)
}

/// Shadow matrix by direct quadrature of `<Y⃗_o, V Y⃗_i>`.
pub fn shadow_matrix_quadrature(
    v: impl Fn(Direction) -> f64 + Sync,
    l_max: usize,
    grid: &QuadratureGrid,
) -> Result<PshCoeffMatrix> {
    if grid.band < l_max {
        return Err(Error::GridTooCoarse { grid: grid.band, requested: l_max });
    }
    let nodes = node_bases(grid, l_max);
    let sl = sh_len(l_max);
    let n = psh_len(l_max);
    let mut out = PshCoeffMatrix::zeros(l_max);
    for nd in &nodes {
        let vw = v(nd.dir) * nd.w;
        if vw == 0.0 {
            continue;
        }
        for a in 0..sl {
            let (lo, mo) = sh_lm(a);
            for c in 0..sl {
                let (li, mi) = sh_lm(c);
                let s = vw * nd.yr[a] * nd.yr[c];
                out.data[psh_index(lo, mo, 0) * n + psh_index(li, mi, 0)] += s;
                out.data[psh_index(lo, mo, 3) * n + psh_index(li, mi, 3)] += s;
                if lo >= 2 && li >= 2 {
                    let w = nd.y2[a].conj() * nd.y2[c] * vw;
                    let (r, col) = (psh_index(lo, mo, 1), psh_index(li, mi, 1));
                    out.data[r * n + col] += w.re;
                    out.data[r * n + col + 1] -= w.im;
                    out.data[(r + 1) * n + col] += w.im;
                    out.data[(r + 1) * n + col + 1] += w.re;
                }
            }
        }
    }
    Ok(out)
}

/// Coefficient matrix of the reflection `z ↦ -z` of Stokes fields, taken as
/// `f(θ, φ) ↦ f(π-θ, φ)` on `s0`, `s3` and `z ↦ conj(z(π-θ, φ))` on `s1 + i s2`.
pub fn reflection_matrix_psh(l_max: usize) -> PshCoeffMatrix {
    let mut out = PshCoeffMatrix::zeros(l_max);
    for l in 0..=l_max {
        let li = l as i64;
        for m in -li..=li {
            let s = parity(li + m);
            out.set(psh_index(l, m, 0), psh_index(l, m, 0), s);
            out.set(psh_index(l, m, 3), psh_index(l, m, 3), s);
            if l >= 2 {
                let t = parity(li);
                out.set(psh_index(l, m, 1), psh_index(l, -m, 1), t);
                out.set(psh_index(l, m, 2), psh_index(l, -m, 2), -t);
            }
        }
    }
    out
}

/// Spherical occluder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occluder {
    pub center: Vec3,
    pub radius: f64,
}

/// `1` if the ray from `origin` along `dir` misses every occluder, `0` otherwise.
pub fn visibility_from_spheres(occluders: &[Occluder], origin: Vec3, dir: Direction) -> f64 {
    for o in occluders {
        let oc = o.center - origin;
        let t = oc.dot(dir);
        let d2 = oc.dot(oc) - t * t;
        let r2 = o.radius * o.radius;
        if d2 > r2 {
            continue;
        }
        let inside = oc.dot(oc) < r2;
        let far = t + (r2 - d2).sqrt();
        if inside || (t > 0.0 && far > 0.0) {
            return 0.0;
        }
    }
    1.0
}

/// Solid angle of the cap an occluder subtends from `origin`.
pub fn occluder_solid_angle(o: &Occluder, origin: Vec3) -> f64 {
    let d = (o.center - origin).norm();
    if d <= o.radius {
        return 4.0 * PI;
    }
    2.0 * PI * (1.0 - (1.0 - (o.radius / d).powi(2)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{dir_to_sph, gauss_legendre_grid};
    use crate::polar::{mat4_apply, synthetic_pbrdf, StokesComponents, StokesField};
    use crate::psh::{psh_basis_eval, psh_indices, psh_project, PshIndex};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(l_max: usize, seed: u64) -> PshCoeffVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PshCoeffVector::from_values(l_max, (0..psh_len(l_max)).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// A smooth, anisotropic test field mixing every block.
    fn smooth_field(wi: Direction, wo: Direction) -> Mat4 {
        let k = 1.0 + wi.dot(wo) + 0.3 * wi.x * wo.z;
        let mut m = [[0.0; 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = k * (0.1 * (r as f64 + 1.0) - 0.07 * c as f64) + 0.05 * wi.y * (r == c) as i32 as f64;
            }
        }
        m
    }

    #[test]
    fn project_matches_angular_application() {
        let l_max = 4;
        let g = gauss_legendre_grid(l_max + 2);
        let p = synthetic_pbrdf(Vec3::Z, 0.5, 1.5).unwrap();
        let m = operator_project(&p, l_max, &g).unwrap();
        let f = random_vec(l_max, 1);
        let out = operator_apply(&m, &f).unwrap();
        // pointwise angular integration with the same quadrature, projected afterwards
        let nodes = g.nodes();
        let fin: Vec<StokesComponents> = nodes.iter().map(|&(t, q, _)| crate::psh::psh_reconstruct(&f, t, q)).collect();
        let field = StokesField::on_grid(&g, |t, q| {
            let wo = sph_to_dir(t, q);
            let mut acc = StokesComponents::ZERO;
            for (k, &(ti, pi, w)) in nodes.iter().enumerate() {
                acc += mat4_apply(&p.mueller(sph_to_dir(ti, pi), wo), fin[k]) * w;
            }
            acc
        });
        let oracle = psh_project(&field, l_max).unwrap();
        assert!(out.max_abs_diff(&oracle) < 1e-6, "{:e}", out.max_abs_diff(&oracle));
    }

    #[test]
    fn depolarizer_has_only_scalar_blocks() {
        let l_max = 3;
        let g = gauss_legendre_grid(4);
        let dep = |wi: Direction, wo: Direction| {
            let mut m = [[0.0; 4]; 4];
            m[0][0] = (wi.dot(wo)).exp();
            m
        };
        let m = operator_project(&dep, l_max, &g).unwrap();
        for (r, ri) in psh_indices(l_max).iter().enumerate() {
            for (c, ci) in psh_indices(l_max).iter().enumerate() {
                if ri.p != 0 || ci.p != 0 {
                    assert_eq!(m.get(r, c), 0.0);
                }
            }
        }
        assert!(m.get(0, 0).abs() > 0.1);
    }

    #[test]
    fn block_separation() {
        let l_max = 3;
        let g = gauss_legendre_grid(5);
        let full = operator_project(&smooth_field, l_max, &g).unwrap();
        let cut = |wi: Direction, wo: Direction| {
            let mut m = smooth_field(wi, wo);
            m[1][0] = 0.0;
            m[2][0] = 0.0;
            m[1][3] = 0.0;
            m[2][3] = 0.0;
            m
        };
        let part = operator_project(&cut, l_max, &g).unwrap();
        for (r, ri) in psh_indices(l_max).iter().enumerate() {
            for (c, ci) in psh_indices(l_max).iter().enumerate() {
                let in_block = (ri.p == 1 || ri.p == 2) && (ci.p == 0 || ci.p == 3);
                if in_block {
                    assert!(part.get(r, c).abs() < 1e-9);
                } else {
                    assert!((part.get(r, c) - full.get(r, c)).abs() < 1e-9);
                }
            }
        }
        assert!(full.max_abs() > 0.01);
    }

    #[test]
    fn spin2_entries_match_general_quadrature() {
        let l_max = 3;
        let g = gauss_legendre_grid(4);
        let m = operator_project(&smooth_field, l_max, &g).unwrap();
        let nodes = g.nodes();
        let idx = psh_indices(l_max);
        let basis: Vec<Vec<StokesComponents>> =
            nodes.iter().map(|&(t, p, _)| idx.iter().map(|&i| psh_basis_eval(i, t, p)).collect()).collect();
        let dirs: Vec<Direction> = nodes.iter().map(|&(t, p, _)| sph_to_dir(t, p)).collect();
        for &(r, c) in &[(10usize, 11usize), (9, 10), (20, 9), (3, 12), (12, 3), (27, 27)] {
            let mut s = 0.0;
            for (o, no) in nodes.iter().enumerate() {
                for (i, ni) in nodes.iter().enumerate() {
                    let y = mat4_apply(&smooth_field(dirs[i], dirs[o]), basis[i][c]);
                    s += no.2 * ni.2 * basis[o][r].dot(y);
                }
            }
            assert!((s - m.get(r, c)).abs() < 1e-10, "{r},{c}");
        }
    }

    #[test]
    fn isotropy_of_synthetic_pbrdf() {
        let l_max = 4;
        let g = gauss_legendre_grid(6);
        let p = synthetic_pbrdf(Vec3::Z, 0.4, 1.5).unwrap();
        let m = operator_project(&p, l_max, &g).unwrap();
        let c = isotropic_compact(&m);
        assert!(
            c.max_m_violation < 1e-9 && c.max_pair_violation < 1e-9,
            "{:e} {:e}",
            c.max_m_violation,
            c.max_pair_violation
        );
        assert_eq!(c.entries.len(), isotropic_entry_count(l_max));
        let back = c.to_dense();
        assert!(back.max_abs_diff(&m) < 1e-9);
        let tilted = synthetic_pbrdf(Vec3::normalized(0.5, 0.0, 1.0), 0.4, 1.5).unwrap();
        let t = isotropic_compact(&operator_project(&tilted, l_max, &g).unwrap());
        assert!(t.max_m_violation > 1e-3);
    }

    #[test]
    fn visibility_examples() {
        let g = gauss_legendre_grid(8);
        let one = visibility_project(|_| 1.0, 4, &g).unwrap();
        assert!((one.values[0] - (4.0 * PI).sqrt()).abs() < 1e-12);
        assert!(one.values[1..].iter().all(|v| v.abs() < 1e-12));
        let zero = visibility_project(|_| 0.0, 4, &g).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        // upper hemisphere: v_l0 = 2π ∫_0^1 N_l0(x) dx, checked against Legendre integrals
        let g = gauss_legendre_grid(201);
        let hemi = visibility_project(|d| if d.z > 0.0 { 1.0 } else { 0.0 }, 3, &g).unwrap();
        let exact = [(PI).sqrt(), (3.0 * PI).sqrt() / 2.0, 0.0, -(7.0 * PI).sqrt() / 8.0];
        for l in 0..4 {
            assert!((hemi.get(l, 0) - exact[l]).abs() < 2e-2, "l={l} {} {}", hemi.get(l, 0), exact[l]);
        }
    }

    #[test]
    fn shadow_identity_and_structure() {
        let mut v = ShCoeffVector::zeros(8);
        v.values[0] = (4.0 * PI).sqrt();
        let s = shadow_expand(&v, 4);
        assert!(s.max_abs_diff(&PshCoeffMatrix::identity(4)) < 1e-10);
        let g = gauss_legendre_grid(12);
        let hemi = |d: Direction| if d.z > 0.2 * d.x { 1.0 } else { 0.0 };
        let vis = visibility_project(hemi, 8, &g).unwrap();
        let s = shadow_expand(&vis, 4);
        let band = |d: Direction| {
            let (t, p) = dir_to_sph(d);
            crate::sh::sh_reconstruct_real(&vis, t, p)
        };
        let q = shadow_matrix_quadrature(band, 4, &g).unwrap();
        assert!(s.max_abs_diff(&q) < 1e-8, "{:e}", s.max_abs_diff(&q));
        for (r, ri) in psh_indices(4).iter().enumerate() {
            for (c, ci) in psh_indices(4).iter().enumerate() {
                let scalar = |p: usize| p == 0 || p == 3;
                if scalar(ri.p) != scalar(ci.p) {
                    assert_eq!(s.get(r, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn reflection_examples() {
        let r = reflection_matrix_psh(4);
        let sq = r.matmul(&r).unwrap();
        assert!(sq.max_abs_diff(&PshCoeffMatrix::identity(4)) < 1e-12);
        assert_eq!(r.get(psh_index(1, 0, 0), psh_index(1, 0, 0)), -1.0);
        let g = gauss_legendre_grid(5);
        for idx in psh_indices(4) {
            let f = StokesField::on_grid(&g, |t, p| {
                let s = psh_basis_eval(idx, PI - t, p);
                StokesComponents::new(s.s0, s.s1, -s.s2, s.s3)
            });
            let c = psh_project(&f, 4).unwrap();
            for (k, v) in c.values.iter().enumerate() {
                assert!((v - r.get(k, idx.flat())).abs() < 1e-9, "{idx:?} row {k}");
            }
        }
    }

    #[test]
    fn sphere_visibility() {
        assert_eq!(visibility_from_spheres(&[], Vec3::Z, Vec3::X), 1.0);
        let o = Occluder { center: Vec3::new(0.0, 0.0, 3.0), radius: 1.0 };
        assert_eq!(visibility_from_spheres(&[o], Vec3::default(), Vec3::Z), 0.0);
        assert_eq!(visibility_from_spheres(&[o], Vec3::default(), -Vec3::Z), 1.0);
        // off-axis so the cap edge does not follow a quadrature ring
        let o = Occluder { center: Vec3::new(2.0, 1.0, 1.5), radius: 1.0 };
        let g = gauss_legendre_grid(160);
        let v = visibility_project(|d| visibility_from_spheres(&[o], Vec3::default(), d), 16, &g).unwrap();
        let deficit = (4.0 * PI).sqrt() - v.values[0];
        let expect = occluder_solid_angle(&o, Vec3::default()) / (4.0 * PI).sqrt();
        assert!((deficit - expect).abs() < 1e-3, "{deficit} {expect}");
    }

    #[test]
    fn rotated_operator_matches_projection() {
        let l_max = 3;
        let g = gauss_legendre_grid(5);
        let m = operator_project(&smooth_field, l_max, &g).unwrap();
        let r = crate::geom::rotation_zyz(0.3, 0.8, -0.5);
        let rot = PshRotation::new(l_max, &r);
        let a = m.rotated(&rot);
        let d = PshCoeffMatrix::from_data(l_max, rot.dense(l_max)).unwrap();
        let b = d.matmul(&m).unwrap().matmul(&d.transpose()).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
        let f = random_vec(l_max, 3);
        let ab = operator_apply(&m.matmul(&d).unwrap(), &f).unwrap();
        let seq = operator_apply(&m, &operator_apply(&d, &f).unwrap()).unwrap();
        assert!(ab.max_abs_diff(&seq) < 1e-12);
        let _ = PshIndex::new(2, 0, 1).unwrap();
    }
}
