//! Polarized precomputed radiance transfer on mesh vertices.
//!
//! Low bands (`l ≤ l_low`) go through a per-vertex transfer matrix: the material's
//! PSH matrix rotated to the vertex normal times the vertex shadow matrix. High bands
//! (`l_low < l ≤ l_high`) go through one convolution kernel per material, fitted to the
//! reflected material matrix, and are evaluated at the view direction reflected across
//! the tangent plane. Visibility only affects the low bands.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::geom::{
    dir_to_sph, fibonacci_sphere, frame_theta_phi_at, gauss_legendre_grid, gauss_legendre_hemisphere_grid,
    rotation_to_dir, sph_to_dir, Direction, Frame, Vec3,
};
use crate::io::Mesh;
use crate::operators::{
    operator_apply, operator_project, reflection_matrix_psh, visibility_from_spheres, visibility_project, Occluder,
    PshCoeffMatrix, ShadowExpander,
};
use crate::pconv::{conv_project_operator, pconv_apply, ConvProjection, KernelBand, PolarConvKernelCoeffs};
use crate::polar::{mat4_apply, stokes_reframe, synthetic_pbrdf, MuellerField, StokesComponents, SyntheticPbrdf};
use crate::psh::{psh_reconstruct, psh_rotate_coeffs, PshCoeffVector, PshRotation};
use crate::sh::{sh_real_all, ShCoeffVector};
use crate::{Error, Result};

/// The synthetic pBRDF parameters plus the band of the hemisphere grid used to project it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub roughness: f64,
    pub ior: f64,
    pub grid_band: usize,
}

impl Default for Material {
    fn default() -> Self {
        Material { roughness: 0.4, ior: 1.5, grid_band: 32 }
    }
}

impl Material {
    pub fn pbrdf(&self, normal: Direction) -> Result<SyntheticPbrdf> {
        synthetic_pbrdf(normal, self.roughness, self.ior)
    }
}

/// Per-vertex visibility `V(vertex, ω)`.
pub type VisibilityFn = Arc<dyn Fn(usize, Direction) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Occlusion {
    None,
    /// Analytic sphere occluders, projected on a Gauss–Legendre grid.
    Spheres(Vec<Occluder>),
    /// Rays cast against the mesh's own triangles from Fibonacci directions.
    MeshRays {
        rays: usize,
    },
    /// Arbitrary visibility, projected on a Gauss–Legendre grid.
    Custom(VisibilityFn),
}

impl std::fmt::Debug for Occlusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Occlusion::None => write!(f, "None"),
            Occlusion::Spheres(s) => f.debug_tuple("Spheres").field(s).finish(),
            Occlusion::MeshRays { rays } => write!(f, "MeshRays {{ rays: {rays} }}"),
            Occlusion::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PprtConfig {
    pub l_low: usize,
    pub l_high: usize,
    /// Visibility band; `None` means `2 l_low`.
    pub l_vis: Option<usize>,
    /// Grid band for projecting analytic visibilities.
    pub vis_band: usize,
    pub occlusion: Occlusion,
}

impl Default for PprtConfig {
    fn default() -> Self {
        PprtConfig { l_low: 4, l_high: 9, l_vis: None, vis_band: 64, occlusion: Occlusion::None }
    }
}

/// Transfer data of one vertex.
#[derive(Debug, Clone)]
pub struct TransferRecord {
    pub normal: Direction,
    /// `l ≤ l_low`: rotated material matrix times shadow matrix.
    pub transfer: PshCoeffMatrix,
    /// `l_low < l ≤ l_high` (lower bands zero), shared by all vertices of the material.
    pub kernel: Arc<PolarConvKernelCoeffs>,
}

#[derive(Debug, Clone)]
pub struct TransferSet {
    pub l_low: usize,
    pub l_high: usize,
    pub records: Vec<TransferRecord>,
    /// Fit of the reflected material matrix; `None` when `l_low = l_high`.
    pub kernel_fit: Option<ConvProjection>,
}

/// A sphere mesh of `n` Fibonacci vertices (no triangles) with outward normals.
pub fn fibonacci_sphere_mesh(n: usize, radius: f64) -> Mesh {
    let d = fibonacci_sphere(n);
    Mesh { positions: d.iter().map(|v| *v * radius).collect(), normals: d, triangles: Vec::new() }
}

/// Möller–Trumbore hit distance of the ray `o + t d`, `t > 0`.
pub fn ray_triangle(o: Vec3, d: Direction, a: Vec3, b: Vec3, c: Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = d.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = d.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > 1e-9).then_some(t)
}

fn mesh_scale(mesh: &Mesh) -> f64 {
    mesh.positions.iter().fold(0.0f64, |a, p| a.max(p.norm())).max(1.0)
}

/// Visibility of `occlusion` for the vertices of `mesh`.
pub fn visibility_fn(mesh: &Mesh, occlusion: &Occlusion) -> VisibilityFn {
    match occlusion {
        Occlusion::None => Arc::new(|_, _| 1.0),
        Occlusion::Custom(f) => f.clone(),
        Occlusion::Spheres(s) => {
            let s = s.clone();
            let pos = mesh.positions.clone();
            Arc::new(move |i, d| visibility_from_spheres(&s, pos[i], d))
        }
        Occlusion::MeshRays { .. } => {
            let m = mesh.clone();
            let eps = 1e-6 * mesh_scale(mesh);
            Arc::new(move |i, d| {
                let o = m.positions[i] + m.normals[i] * eps;
                let hit = m
                    .triangles
                    .iter()
                    .any(|t| ray_triangle(o, d, m.positions[t[0]], m.positions[t[1]], m.positions[t[2]]).is_some());
                if hit {
                    0.0
                } else {
                    1.0
                }
            })
        }
    }
}

fn project_vertex_visibility(
    vis: &VisibilityFn,
    i: usize,
    occlusion: &Occlusion,
    l_vis: usize,
    vis_band: usize,
) -> Result<ShCoeffVector<f64>> {
    match occlusion {
        Occlusion::None => {
            let mut v = ShCoeffVector::zeros(l_vis);
            v.values[0] = (4.0 * PI).sqrt();
            Ok(v)
        }
        Occlusion::MeshRays { rays } => {
            let w = 4.0 * PI / *rays as f64;
            let mut v = ShCoeffVector::zeros(l_vis);
            for d in fibonacci_sphere(*rays) {
                let x = vis(i, d);
                if x != 0.0 {
                    let (t, p) = dir_to_sph(d);
                    for (c, y) in v.values.iter_mut().zip(sh_real_all(l_vis, t, p)) {
                        *c += w * x * y;
                    }
                }
            }
            Ok(v)
        }
        _ => visibility_project(|d| vis(i, d), l_vis, &gauss_legendre_grid(vis_band.max(l_vis))),
    }
}

/// Per-vertex transfer records for `mesh` with `material` under `config`.
pub fn pprt_precompute(mesh: &Mesh, material: &Material, config: &PprtConfig) -> Result<TransferSet> {
    mesh.validate()?;
    let (l_low, l_high) = (config.l_low, config.l_high);
    if l_low > l_high {
        return Err(Error::Domain(format!("l_low {l_low} exceeds l_high {l_high}")));
    }
    let l_vis = config.l_vis.unwrap_or(2 * l_low);
    let base = material.pbrdf(Vec3::Z)?;
    let m0 = operator_project(&base, l_high, &gauss_legendre_hemisphere_grid(material.grid_band.max(l_high)))?;
    let (kernel, kernel_fit) = if l_high > l_low {
        let fit = conv_project_operator(&reflection_matrix_psh(l_high).matmul(&m0)?);
        let mut k = fit.coeffs.clone();
        k.bands.iter_mut().take(l_low + 1).for_each(|b| *b = KernelBand::default());
        (k, Some(fit))
    } else {
        (PolarConvKernelCoeffs::zeros(l_high), None)
    };
    let kernel = Arc::new(kernel);
    let low = m0.truncated(l_low);
    let shadow = ShadowExpander::new(l_low, l_vis);
    let vis = visibility_fn(mesh, &config.occlusion);
    let records = (0..mesh.positions.len())
        .into_par_iter()
        .map(|i| {
            let n = mesh.normals[i].normalize();
            let rotated = low.rotated(&PshRotation::new(l_low, &rotation_to_dir(n)));
            let v = project_vertex_visibility(&vis, i, &config.occlusion, l_vis, config.vis_band)?;
            let transfer = match config.occlusion {
                Occlusion::None => rotated,
                _ => rotated.matmul(&shadow.expand(&v))?,
            };
            Ok(TransferRecord { normal: n, transfer, kernel: kernel.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferSet { l_low, l_high, records, kernel_fit })
}

/// `ω - 2(ω·n)n`.
pub fn reflect_across_plane(w: Direction, n: Direction) -> Direction {
    w - n * (2.0 * w.dot(n))
}

/// Value at `w` of the field `f` mirrored across the plane with normal `n`, in the θφ frame.
/// Mirroring maps the frame `(x, y, ω')` to `(Hx, -Hy, Hω')` and negates `s2`.
pub fn psh_eval_reflected(f: &PshCoeffVector, n: Direction, w: Direction) -> StokesComponents {
    let wr = reflect_across_plane(w, n);
    let (t, p) = dir_to_sph(wr);
    let s = psh_reconstruct(f, t, p);
    let fr = frame_theta_phi_at(wr);
    let mirrored = Frame::new(reflect_across_plane(fr.x, n), -reflect_across_plane(fr.y, n), w);
    let c = StokesComponents::new(s.s0, s.s1, -s.s2, s.s3);
    stokes_reframe(c, &mirrored, &frame_theta_phi_at(w)).expect("mirrored frame shares z")
}

/// Coefficients of `f` mirrored across the plane with normal `n`.
pub fn psh_reflect_coeffs(f: &PshCoeffVector, n: Direction) -> Result<PshCoeffVector> {
    let r = rotation_to_dir(n);
    let local = psh_rotate_coeffs(f, &r.inverse());
    let mirrored = operator_apply(&reflection_matrix_psh(f.l_max), &local)?;
    Ok(psh_rotate_coeffs(&mirrored, &r))
}

/// Shades every vertex for `lighting` seen from `view_dirs` (outgoing directions).
pub fn pprt_shade(
    set: &TransferSet,
    lighting: &PshCoeffVector,
    view_dirs: &[Direction],
) -> Result<Vec<StokesComponents>> {
    if lighting.l_max < set.l_high {
        return Err(Error::DimensionMismatch { expected: set.l_high, got: lighting.l_max });
    }
    if view_dirs.len() != set.records.len() {
        return Err(Error::DimensionMismatch { expected: set.records.len(), got: view_dirs.len() });
    }
    let low = lighting.resized(set.l_low);
    let high = match set.records.first() {
        Some(r) if set.l_high > set.l_low => Some(pconv_apply(&r.kernel, &lighting.resized(set.l_high))?),
        _ => None,
    };
    set.records
        .par_iter()
        .zip(view_dirs)
        .map(|(r, &w)| {
            let (t, p) = dir_to_sph(w);
            let mut s = psh_reconstruct(&operator_apply(&r.transfer, &low)?, t, p);
            if let Some(h) = &high {
                s += psh_eval_reflected(h, r.normal, w);
            }
            Ok(s)
        })
        .collect()
}

/// Brute-force `∫ P_n(ω_i, ω_o) V(ω_i) L(ω_i) dω_i` on the hemisphere grid of `band`
/// rotated to each vertex normal.
pub fn pprt_reference(
    mesh: &Mesh,
    material: &Material,
    vis: &VisibilityFn,
    lighting: &PshCoeffVector,
    view_dirs: &[Direction],
    band: usize,
) -> Result<Vec<StokesComponents>> {
    let local: Vec<(Direction, f64)> =
        gauss_legendre_hemisphere_grid(band).nodes().iter().map(|&(t, p, w)| (sph_to_dir(t, p), w)).collect();
    (0..mesh.positions.len())
        .into_par_iter()
        .map(|i| {
            let pb = material.pbrdf(mesh.normals[i])?;
            let r = rotation_to_dir(pb.normal);
            let wo = view_dirs[i];
            let mut s = StokesComponents::ZERO;
            for &(d, w) in &local {
                let d = r.apply(d);
                let v = vis(i, d);
                if v != 0.0 {
                    let (t, p) = dir_to_sph(d);
                    s += mat4_apply(&pb.mueller(d, wo), psh_reconstruct(lighting, t, p)) * (w * v);
                }
            }
            Ok(s)
        })
        .collect()
}

/// Root mean square over all four components of all vertices.
pub fn stokes_rmse(a: &[StokesComponents], b: &[StokesComponents]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (*x - *y).dot(*x - *y)).sum();
    (s / (4 * a.len().max(1)) as f64).sqrt()
}

/// View directions toward a camera at `eye`.
pub fn view_dirs_toward(mesh: &Mesh, eye: Vec3) -> Vec<Direction> {
    mesh.positions.iter().map(|p| (eye - *p).normalize()).collect()
}
