//! Binary and ASCII file formats. Layouts are described in `docs/formats.md`.
//!
//! Every `encode_*` has a matching `decode_*` over byte slices; `read`/`write` wrap
//! them for paths. Decoders reject bad magic, truncated payloads and trailing bytes.

use std::path::Path;

use num_complex::Complex64;

use crate::geom::{Rotation, Vec3};
use crate::operators::{PshCoeffMatrix, Sparsity};
use crate::pconv::{KernelBand, PolarConvKernelCoeffs, KERNEL_BAND_PARAMS};
use crate::polar::{Sampling, StokesComponents, StokesField};
use crate::psh::{psh_len, PshCoeffVector};
use crate::s2l2::{StokesImage, ViewKind, ViewSpec};
use crate::sh::{sh_len, ShCoeffVector};
use crate::{Error, Result};

pub const PSHC_VERSION: u32 = 1;
const MAX_L: usize = 1024;
const MAX_PIXELS: usize = 1 << 28;

fn fmt(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| fmt(format!("truncated at byte {} (need {n} more)", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, m: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != m {
            return Err(fmt(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                std::str::from_utf8(m).unwrap()
            )));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn l_max(&mut self) -> Result<usize> {
        let l = self.u32()? as usize;
        if l > MAX_L {
            return Err(fmt(format!("l_max {l} exceeds {MAX_L}")));
        }
        Ok(l)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| fmt("payload size overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| fmt("payload size overflow"))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.buf[self.pos..];
        let n = rest.iter().take(4096).position(|b| *b == b'\n').ok_or_else(|| fmt("missing header line"))?;
        let s = std::str::from_utf8(&rest[..n]).map_err(|_| fmt("header is not ASCII"))?;
        self.pos += n + 1;
        Ok(s)
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(fmt(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn put_f64s(out: &mut Vec<u8>, v: impl IntoIterator<Item = f64>) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Scalar coefficient kinds stored in a `PSHC` file.
#[derive(Debug, Clone, PartialEq)]
pub enum ShCoeffs {
    Real(ShCoeffVector<f64>),
    Complex(ShCoeffVector<Complex64>),
}

pub fn encode_pshc(c: &ShCoeffs) -> Vec<u8> {
    let mut out = b"PSHC".to_vec();
    out.extend_from_slice(&PSHC_VERSION.to_le_bytes());
    match c {
        ShCoeffs::Real(v) => {
            out.push(0);
            out.extend_from_slice(&(v.l_max as u32).to_le_bytes());
            put_f64s(&mut out, v.values.iter().copied());
        }
        ShCoeffs::Complex(v) => {
            out.push(1);
            out.extend_from_slice(&(v.l_max as u32).to_le_bytes());
            put_f64s(&mut out, v.values.iter().flat_map(|z| [z.re, z.im]));
        }
    }
    out
}

pub fn decode_pshc(buf: &[u8]) -> Result<ShCoeffs> {
    let mut r = Reader::new(buf);
    r.magic(b"PSHC")?;
    let ver = r.u32()?;
    if ver != PSHC_VERSION {
        return Err(fmt(format!("unsupported PSHC version {ver}")));
    }
    let kind = r.u8()?;
    let l = r.l_max()?;
    let out = match kind {
        0 => ShCoeffs::Real(ShCoeffVector::from_values(l, r.f64s(sh_len(l))?)?),
        1 => {
            let v = r.f64s(2 * sh_len(l))?;
            ShCoeffs::Complex(ShCoeffVector::from_values(
                l,
                v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect(),
            )?)
        }
        k => return Err(fmt(format!("unknown PSHC kind {k}"))),
    };
    r.finish()?;
    Ok(out)
}

pub fn encode_psh4(c: &PshCoeffVector) -> Vec<u8> {
    let mut out = b"PSH4".to_vec();
    out.extend_from_slice(&(c.l_max as u32).to_le_bytes());
    put_f64s(&mut out, c.values.iter().copied());
    out
}

pub fn decode_psh4(buf: &[u8]) -> Result<PshCoeffVector> {
    let mut r = Reader::new(buf);
    r.magic(b"PSH4")?;
    let l = r.l_max()?;
    let v = PshCoeffVector::from_values(l, r.f64s(psh_len(l))?)?;
    r.finish()?;
    Ok(v)
}

pub fn encode_pshm(m: &PshCoeffMatrix) -> Vec<u8> {
    let mut out = b"PSHM".to_vec();
    out.extend_from_slice(&(m.l_max as u32).to_le_bytes());
    out.push(match m.sparsity {
        Sparsity::General => 0,
        Sparsity::Isotropic => 1,
    });
    put_f64s(&mut out, m.data.iter().copied());
    out
}

pub fn decode_pshm(buf: &[u8]) -> Result<PshCoeffMatrix> {
    let mut r = Reader::new(buf);
    r.magic(b"PSHM")?;
    let l = r.l_max()?;
    if l > 64 {
        return Err(fmt(format!("matrix l_max {l} too large")));
    }
    let sparsity = match r.u8()? {
        0 => Sparsity::General,
        1 => Sparsity::Isotropic,
        t => return Err(fmt(format!("unknown sparsity tag {t}"))),
    };
    let n = psh_len(l);
    let mut m = PshCoeffMatrix::from_data(l, r.f64s(n * n)?)?;
    m.sparsity = sparsity;
    r.finish()?;
    Ok(m)
}

pub fn encode_pshk(k: &PolarConvKernelCoeffs) -> Vec<u8> {
    let mut out = b"PSHK".to_vec();
    out.extend_from_slice(&(k.l_max as u32).to_le_bytes());
    for b in &k.bands {
        put_f64s(&mut out, b.to_params());
    }
    out
}

pub fn decode_pshk(buf: &[u8]) -> Result<PolarConvKernelCoeffs> {
    let mut r = Reader::new(buf);
    r.magic(b"PSHK")?;
    let l = r.l_max()?;
    let v = r.f64s((l + 1) * KERNEL_BAND_PARAMS)?;
    r.finish()?;
    Ok(PolarConvKernelCoeffs {
        l_max: l,
        bands: v.chunks_exact(KERNEL_BAND_PARAMS).map(KernelBand::from_params).collect(),
    })
}

fn put_f32_stokes(out: &mut Vec<u8>, data: &[StokesComponents], valid: Option<&[bool]>) {
    for (k, s) in data.iter().enumerate() {
        let ok = valid.is_none_or(|v| v[k]);
        for c in s.to_array() {
            let x = if ok { c as f32 } else { f32::NAN };
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
}

fn dims(a: &str, b: &str) -> Result<(usize, usize)> {
    let p = |s: &str| s.parse::<usize>().map_err(|_| fmt(format!("bad dimension {s:?}")));
    let (h, w) = (p(a)?, p(b)?);
    if h == 0 || w == 0 || h.saturating_mul(w) > MAX_PIXELS {
        return Err(fmt(format!("unsupported dimensions {h} x {w}")));
    }
    Ok((h, w))
}

/// Payload precision of S4EM field files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    /// Marked by a trailing `f64` header token.
    F64,
}

pub fn encode_s4em_field(f: &StokesField) -> Vec<u8> {
    encode_s4em_field_with(f, Precision::F32)
}

pub fn encode_s4em_field_with(f: &StokesField, precision: Precision) -> Vec<u8> {
    let mut head = format!("S4EM {} {} {}", f.n_theta, f.n_phi, f.sampling.name());
    if precision == Precision::F64 {
        head += " f64";
    }
    head += "\n";
    let mut out = head.into_bytes();
    match precision {
        Precision::F32 => put_f32_stokes(&mut out, &f.data, None),
        Precision::F64 => put_f64s(&mut out, f.data.iter().flat_map(|s| s.to_array())),
    }
    out
}

fn stokes_payload(r: &mut Reader, n: usize) -> Result<Vec<StokesComponents>> {
    let v = r.f32s(4 * n)?;
    Ok(v.chunks_exact(4).map(|c| StokesComponents::new(c[0] as f64, c[1] as f64, c[2] as f64, c[3] as f64)).collect())
}

pub fn decode_s4em_field(buf: &[u8]) -> Result<StokesField> {
    let mut r = Reader::new(buf);
    let t: Vec<&str> = r.line()?.split_whitespace().collect();
    if !(t.len() == 4 || t.len() == 5 && t[4] == "f64") || t[0] != "S4EM" {
        return Err(fmt("expected header `S4EM <n_theta> <n_phi> <sampling> [f64]`"));
    }
    let (h, w) = dims(t[1], t[2])?;
    let sampling = match t[3] {
        "gl" => Sampling::Quadrature,
        "pixel" => Sampling::PixelCenters,
        s => return Err(fmt(format!("unknown sampling {s:?} (image files use `read_stokes_image`)"))),
    };
    let mut f = StokesField::zeros(h, w, sampling);
    f.data = if t.len() == 5 {
        r.f64s(4 * h * w)?.chunks_exact(4).map(|c| StokesComponents::new(c[0], c[1], c[2], c[3])).collect()
    } else {
        stokes_payload(&mut r, h * w)?
    };
    if f.data.iter().any(|s| s.to_array().iter().any(|c| !c.is_finite())) {
        return Err(fmt("non-finite Stokes value"));
    }
    r.finish()?;
    Ok(f)
}

fn view_token(k: ViewKind) -> String {
    match k {
        ViewKind::Equirect => "equirect".into(),
        ViewKind::CubeFace(i) => format!("cube{i}"),
        ViewKind::Perspective { .. } => "perspective".into(),
    }
}

/// Image variant: `S4EM <h> <w> <equirect|cube0..cube5|perspective>`, then `FOV <deg>`
/// for perspective views and a `POSE` line with the row-major 3×3 pose. Invalid pixels
/// are NaN.
pub fn encode_s4em_image(img: &StokesImage) -> Vec<u8> {
    let v = &img.view;
    let mut head = format!("S4EM {} {} {}\n", v.height, v.width, view_token(v.kind));
    if let ViewKind::Perspective { fov_deg } = v.kind {
        head += &format!("FOV {fov_deg:?}\n");
    }
    head += "POSE";
    for row in v.pose.m {
        for x in row {
            head += &format!(" {x:?}");
        }
    }
    head += "\n";
    let mut out = head.into_bytes();
    put_f32_stokes(&mut out, &img.data, Some(&img.valid));
    out
}

pub fn decode_s4em_image(buf: &[u8]) -> Result<StokesImage> {
    let mut r = Reader::new(buf);
    let t: Vec<&str> = r.line()?.split_whitespace().collect();
    if t.len() != 4 || t[0] != "S4EM" {
        return Err(fmt("expected header `S4EM <h> <w> <view>`"));
    }
    let (h, w) = dims(t[1], t[2])?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| fmt(format!("bad number {s:?}")));
    let mut kind = match t[3] {
        "equirect" => ViewKind::Equirect,
        "perspective" => ViewKind::Perspective { fov_deg: f64::NAN },
        s => match s.strip_prefix("cube").and_then(|k| k.parse::<usize>().ok()) {
            Some(k) if k < 6 => ViewKind::CubeFace(k),
            _ => return Err(fmt(format!("unknown view kind {s:?}"))),
        },
    };
    if let ViewKind::Perspective { .. } = kind {
        let f: Vec<&str> = r.line()?.split_whitespace().collect();
        if f.len() != 2 || f[0] != "FOV" {
            return Err(fmt("perspective image needs a `FOV <deg>` line"));
        }
        let fov = num(f[1])?;
        if !(fov > 0.0 && fov < 180.0) {
            return Err(fmt(format!("field of view {fov} outside (0, 180)")));
        }
        kind = ViewKind::Perspective { fov_deg: fov };
    }
    let p: Vec<&str> = r.line()?.split_whitespace().collect();
    if p.len() != 10 || p[0] != "POSE" {
        return Err(fmt("expected `POSE` line with 9 numbers"));
    }
    let mut m = [[0.0; 3]; 3];
    for k in 0..9 {
        m[k / 3][k % 3] = num(p[k + 1])?;
    }
    let pose = Rotation { m };
    if pose.orthogonality_error() > 1e-6 || pose.det() < 0.0 {
        return Err(fmt("pose is not a rotation"));
    }
    let view = ViewSpec { kind, width: w, height: h, pose };
    let data = stokes_payload(&mut r, h * w)?;
    r.finish()?;
    let valid: Vec<bool> = data.iter().map(|s| s.to_array().iter().all(|c| c.is_finite())).collect();
    let data = data.into_iter().zip(&valid).map(|(s, v)| if *v { s } else { StokesComponents::ZERO }).collect();
    Ok(StokesImage { view, data, valid })
}

/// Whether the header of an S4EM buffer names an image view rather than a field sampling.
pub fn s4em_is_image(buf: &[u8]) -> bool {
    let head = buf.split(|b| *b == b'\n').next().unwrap_or_default();
    let tag = String::from_utf8_lossy(head).split_whitespace().nth(3).unwrap_or_default().to_string();
    !matches!(tag.as_str(), "gl" | "pixel")
}

/// `std::fs::read` with the path in the error message.
pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

macro_rules! file_pair {
    ($read:ident, $write:ident, $dec:ident, $enc:ident, $t:ty) => {
        pub fn $read(path: impl AsRef<Path>) -> Result<$t> {
            $dec(&read_bytes(path.as_ref())?)
        }

        pub fn $write(path: impl AsRef<Path>, v: &$t) -> Result<()> {
            Ok(std::fs::write(path, $enc(v))?)
        }
    };
}

file_pair!(read_pshc, write_pshc, decode_pshc, encode_pshc, ShCoeffs);
file_pair!(read_psh4, write_psh4, decode_psh4, encode_psh4, PshCoeffVector);
file_pair!(read_pshm, write_pshm, decode_pshm, encode_pshm, PshCoeffMatrix);
file_pair!(read_pshk, write_pshk, decode_pshk, encode_pshk, PolarConvKernelCoeffs);
file_pair!(read_stokes_field, write_stokes_field, decode_s4em_field, encode_s4em_field, StokesField);
file_pair!(read_stokes_image, write_stokes_image, decode_s4em_image, encode_s4em_image, StokesImage);

/// Triangle mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    /// Checks unit normals, matching lengths and index bounds.
    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.normals.len() {
            return Err(Error::DimensionMismatch { expected: self.positions.len(), got: self.normals.len() });
        }
        if let Some(n) = self.normals.iter().find(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(fmt(format!("normal {n:?} is not unit length")));
        }
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i >= self.positions.len())) {
            return Err(fmt(format!("triangle {t:?} indexes past {} vertices", self.positions.len())));
        }
        Ok(())
    }
}

/// Parses the `v` / `vn` / `f` subset of Wavefront OBJ. Face corners `a/b/c` or `a//c`
/// take their normal index from `c`; each vertex keeps the last normal assigned to it.
/// Vertices without one take the `vn` of the same index when there are as many `vn` as
/// `v` lines (point clouds), and otherwise the normalized area-weighted normal of their faces.
/// Polygons are fan-triangulated.
pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut pos = Vec::new();
    let mut nrm = Vec::new();
    let mut faces: Vec<Vec<(usize, Option<usize>)>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let bad = |what: &str| fmt(format!("line {}: {what}", ln + 1));
        let mut t = line.split_whitespace();
        let Some(tag) = t.next() else { continue };
        let floats = |t: std::str::SplitWhitespace| -> Result<Vec3> {
            let v: Vec<f64> = t
                .take(3)
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad number"))?;
            if v.len() != 3 || v.iter().any(|x| !x.is_finite()) {
                return Err(bad("expected three finite numbers"));
            }
            Ok(Vec3::new(v[0], v[1], v[2]))
        };
        match tag {
            "v" => pos.push(floats(t)?),
            "vn" => nrm.push(floats(t)?),
            "f" => {
                let idx = |s: &str, n: usize| -> Result<usize> {
                    let i: i64 = s.parse().map_err(|_| bad("bad index"))?;
                    let k = if i < 0 { n as i64 + i } else { i - 1 };
                    if k < 0 || k >= n as i64 {
                        return Err(bad("index out of range"));
                    }
                    Ok(k as usize)
                };
                let mut f = Vec::new();
                for c in t {
                    let parts: Vec<&str> = c.split('/').collect();
                    let v = idx(parts[0], pos.len())?;
                    let n = match parts.get(2) {
                        Some(s) if !s.is_empty() => Some(idx(s, nrm.len())?),
                        _ => None,
                    };
                    f.push((v, n));
                }
                if f.len() < 3 {
                    return Err(bad("face with fewer than 3 corners"));
                }
                faces.push(f);
            }
            _ => {}
        }
    }
    let mut normals: Vec<Option<Vec3>> = vec![None; pos.len()];
    let mut acc = vec![Vec3::ZERO; pos.len()];
    let mut triangles = Vec::new();
    for f in &faces {
        for &(v, n) in f {
            if let Some(n) = n {
                normals[v] = Some(nrm[n].normalize());
            }
        }
        for k in 1..f.len() - 1 {
            let t = [f[0].0, f[k].0, f[k + 1].0];
            let a = (pos[t[1]] - pos[t[0]]).cross(pos[t[2]] - pos[t[0]]);
            for &i in &t {
                acc[i] = acc[i] + a;
            }
            triangles.push(t);
        }
    }
    let normals = normals
        .into_iter()
        .zip(acc)
        .enumerate()
        .map(|(i, (n, a))| match n {
            Some(n) => Ok(n),
            None if nrm.len() == pos.len() => Ok(nrm[i].normalize()),
            None if a.norm() > 0.0 => Ok(a.normalize()),
            None => Err(fmt(format!("vertex {} has no normal", i + 1))),
        })
        .collect::<Result<Vec<_>>>()?;
    let mesh = Mesh { positions: pos, normals, triangles };
    mesh.validate()?;
    Ok(mesh)
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<Mesh> {
    let text = String::from_utf8(read_bytes(path.as_ref())?).map_err(|_| fmt("OBJ file is not UTF-8"))?;
    parse_obj(&text)
}

/// OBJ text with one `vn` per `v` and `f a//a b//b c//c` faces.
pub fn format_obj(m: &Mesh) -> String {
    let mut s = String::new();
    for p in &m.positions {
        s += &format!("v {:?} {:?} {:?}\n", p.x, p.y, p.z);
    }
    for n in &m.normals {
        s += &format!("vn {:?} {:?} {:?}\n", n.x, n.y, n.z);
    }
    for t in &m.triangles {
        s += &format!("f {0}//{0} {1}//{1} {2}//{2}\n", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

/// Per-vertex Stokes values as CSV with header `vertex,s0,s1,s2,s3`.
pub fn format_vertex_csv(values: &[StokesComponents]) -> String {
    let mut s = String::from("vertex,s0,s1,s2,s3\n");
    for (i, v) in values.iter().enumerate() {
        s += &format!("{i},{:?},{:?},{:?},{:?}\n", v.s0, v.s1, v.s2, v.s3);
    }
    s
}

/// Per-vertex Stokes values as `"PSV4"`, `n: u32`, then `4n` `f32`.
pub fn encode_vertex_binary(values: &[StokesComponents]) -> Vec<u8> {
    let mut out = b"PSV4".to_vec();
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    put_f32_stokes(&mut out, values, None);
    out
}

pub fn decode_vertex_binary(buf: &[u8]) -> Result<Vec<StokesComponents>> {
    let mut r = Reader::new(buf);
    r.magic(b"PSV4")?;
    let n = r.u32()? as usize;
    let v = stokes_payload(&mut r, n)?;
    r.finish()?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rotation_zyz;
    use crate::pconv::{kernel_coeffs, PolarConvKernel};
    use crate::polar::Sampling;
    use proptest::prelude::*;

    #[test]
    fn coefficient_round_trips() {
        let v = PshCoeffVector::from_values(3, (0..psh_len(3)).map(|i| (i as f64).sin()).collect()).unwrap();
        assert_eq!(decode_psh4(&encode_psh4(&v)).unwrap(), v);
        let r = ShCoeffs::Real(ShCoeffVector::from_values(2, (0..9).map(|i| i as f64 * 0.5).collect()).unwrap());
        assert_eq!(decode_pshc(&encode_pshc(&r)).unwrap(), r);
        let c = ShCoeffs::Complex(
            ShCoeffVector::from_values(1, (0..4).map(|i| Complex64::new(i as f64, -1.0)).collect()).unwrap(),
        );
        assert_eq!(decode_pshc(&encode_pshc(&c)).unwrap(), c);
        let mut m = PshCoeffMatrix::identity(2);
        m.sparsity = Sparsity::Isotropic;
        assert_eq!(decode_pshm(&encode_pshm(&m)).unwrap(), m);
        let k = kernel_coeffs(&PolarConvKernel::pi_minus_theta(), 4);
        assert_eq!(decode_pshk(&encode_pshk(&k)).unwrap(), k);
        let s = vec![StokesComponents::new(1.0, 0.5, -0.25, 0.0); 3];
        assert_eq!(decode_vertex_binary(&encode_vertex_binary(&s)).unwrap(), s);
    }

    #[test]
    fn header_layout() {
        let v = PshCoeffVector::zeros(2);
        let b = encode_psh4(&v);
        assert_eq!(&b[..4], b"PSH4");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 2);
        assert_eq!(b.len(), 8 + 8 * psh_len(2));
        let c = encode_pshc(&ShCoeffs::Real(ShCoeffVector::zeros(1)));
        assert_eq!(&c[..13], &[b'P', b'S', b'H', b'C', 1, 0, 0, 0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let good = encode_psh4(&PshCoeffVector::zeros(2));
        assert!(decode_psh4(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(decode_psh4(&extra).is_err());
        assert!(decode_psh4(b"PSHX\0\0\0\0").is_err());
        assert!(decode_psh4(&[b'P', b'S', b'H', b'4', 255, 255, 255, 255]).is_err());
        assert!(decode_pshc(b"PSHC\x02\0\0\0\0\0\0\0\0").is_err());
        assert!(decode_s4em_field(b"S4EM 2 x gl\n").is_err());
        assert!(decode_s4em_field(b"S4EM 1 1 gl\n\0\0").is_err());
        assert!(decode_s4em_image(b"S4EM 1 1 cube9\nPOSE 1 0 0 0 1 0 0 0 1\n").is_err());
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 3\n").is_err());
        assert!(parse_obj("v 0 0 nan\n").is_err());
    }

    #[test]
    fn stokes_files_round_trip_in_f32() {
        let f = StokesField::pixels(4, 8, |t, p| StokesComponents::new(1.0 + t, p.cos() * 0.3, 0.25, -0.125));
        let g = decode_s4em_field(&encode_s4em_field(&f)).unwrap();
        assert_eq!(g.sampling, Sampling::PixelCenters);
        assert!(f.max_abs_diff(&g) < 1e-6);
        let exact = decode_s4em_field(&encode_s4em_field_with(&f, Precision::F64)).unwrap();
        assert_eq!(exact, f);
        let view = ViewSpec::perspective(6, 4, 45.0, rotation_zyz(0.1, 0.2, 0.3));
        let mut img = StokesImage::from_fn(view, |d, _| StokesComponents::new(1.0, d.x * 0.5, d.y * 0.5, 0.0));
        img.valid[3] = false;
        img.data[3] = StokesComponents::ZERO;
        let bytes = encode_s4em_image(&img);
        assert!(s4em_is_image(&bytes) && !s4em_is_image(&encode_s4em_field(&f)));
        let back = decode_s4em_image(&bytes).unwrap();
        assert_eq!(back.view, img.view);
        assert_eq!(back.valid, img.valid);
        assert!(back.data.iter().zip(&img.data).all(|(a, b)| a.max_abs_diff(*b) < 1e-6));
    }

    #[test]
    fn obj_subset() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 2\nf 1//1 2//1 3//1 4//1\n";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert!(m.normals.iter().all(|n| (*n - Vec3::Z).norm() < 1e-15));
        let implicit = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert!((implicit.normals[0] - Vec3::Z).norm() < 1e-15);
        assert_eq!(parse_obj(&format_obj(&m)).unwrap(), m);
        let cloud = parse_obj("v 0 0 1\nv 1 0 0\nvn 0 0 3\nvn 1 0 0\n").unwrap();
        assert_eq!(cloud.normals, vec![Vec3::Z, Vec3::X]);
        assert!(parse_obj("v 0 0 1\nv 1 0 0\nvn 0 0 1\n").is_err());
    }

    proptest! {
        #[test]
        fn psh4_bytes_round_trip(vals in proptest::collection::vec(-1e6..1e6f64, psh_len(2))) {
            let v = PshCoeffVector::from_values(2, vals).unwrap();
            prop_assert_eq!(decode_psh4(&encode_psh4(&v)).unwrap(), v);
        }

        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_psh4(&bytes);
            let _ = decode_pshm(&bytes);
            let _ = decode_pshk(&bytes);
            let _ = decode_pshc(&bytes);
            let _ = decode_s4em_field(&bytes);
            let _ = decode_s4em_image(&bytes);
        }
    }
}
