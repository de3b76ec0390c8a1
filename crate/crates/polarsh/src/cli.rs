//! Command-line front end. `polarsh <subcommand> --help` lists the flags.
//!
//! Set `POLARSH_THREADS` to cap the worker threads.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::geom::{gauss_legendre_grid, rotation_zyz, Rotation, Vec3};
use crate::io::{self, Precision};
use crate::operators::Occluder;
use crate::pconv::{kernel_coeffs, pconv_apply, PolarConvKernel};
use crate::polar::{Sampling, StokesField};
use crate::pprt::{
    fibonacci_sphere_mesh, pprt_precompute, pprt_shade, view_dirs_toward, Material, Occlusion, PprtConfig,
};
use crate::psh::{psh_project, psh_rotate_coeffs, psh_synthesize, PshCoeffVector};
use crate::s2l2::{
    perturbation_study, resample, rotation_study, PerturbationReport, ResampleMethod, StokesImage, ViewSpec, HIST_BINS,
};
use crate::synth::{synth_envmap, EnvKind, EnvResolution};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "polarsh", version, about = "Polarized spherical harmonics toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct InOut {
    /// Input file (or use --in)
    pub input: Option<PathBuf>,
    /// Output file (or use --out)
    pub output: Option<PathBuf>,
    #[arg(long = "in", value_name = "FILE")]
    pub in_flag: Option<PathBuf>,
    #[arg(long = "out", value_name = "FILE")]
    pub out_flag: Option<PathBuf>,
}

impl InOut {
    fn paths(&self) -> Result<(PathBuf, PathBuf)> {
        let i = self.in_flag.clone().or_else(|| self.input.clone());
        let o = self.out_flag.clone().or_else(|| {
            if self.in_flag.is_some() {
                self.input.clone()
            } else {
                self.output.clone()
            }
        });
        match (i, o) {
            (Some(i), Some(o)) => Ok((i, o)),
            _ => Err(Error::Domain("need an input and an output path".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    S2l2,
    Naive,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Project a quadrature-sampled S4EM map to PSH coefficients (PSH4).
    Project {
        #[arg(long)]
        lmax: usize,
        /// Drop the circular component.
        #[arg(long)]
        zero_s3: bool,
        #[command(flatten)]
        io: InOut,
    },
    /// Evaluate PSH coefficients on a Gauss–Legendre grid (S4EM).
    Reconstruct {
        /// Grid band; defaults to the coefficient l_max.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, value_enum, default_value = "f32")]
        precision: PrecisionArg,
        #[command(flatten)]
        io: InOut,
    },
    /// Rotate PSH coefficients by ZYZ Euler angles (radians).
    Rotate {
        #[arg(long, value_name = "A,B,G", allow_hyphen_values = true)]
        rotation: String,
        #[command(flatten)]
        io: InOut,
    },
    /// Convolve PSH coefficients with a kernel (PSHK file or builtin:pi-minus-theta).
    Convolve {
        #[arg(long)]
        kernel: String,
        #[command(flatten)]
        io: InOut,
    },
    /// Resample Stokes images into another view.
    Resample {
        #[arg(long, value_enum, default_value = "s2l2")]
        method: MethodArg,
        /// equirect:WxH, cube:N (six outputs `<stem>_face<k>`), cube:N:K, or perspective:WxH:FOV
        #[arg(long)]
        view: String,
        /// Pose of the destination view (ZYZ, radians).
        #[arg(long, value_name = "A,B,G", allow_hyphen_values = true)]
        rotation: Option<String>,
        #[arg(long = "out", value_name = "FILE")]
        out: PathBuf,
        /// Source images, or pixel-sampled field files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Print the S2L2 perturbation and rotation tables.
    S2l2Validate {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        angle: f64,
        /// Use every k-th Fibonacci direction as a rotation axis in the rotation sweep.
        #[arg(long, default_value_t = 10)]
        axis_stride: usize,
        #[arg(long, default_value_t = 10)]
        angles: usize,
        #[arg(long, default_value_t = 8)]
        partners: usize,
    },
    /// Write a seeded synthetic environment map.
    Synth {
        #[arg(long, value_parser = parse_kind)]
        kind: EnvKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gauss–Legendre grid band.
        #[arg(long, conflicts_with = "pixels")]
        grid: Option<usize>,
        /// Equirectangular HxW.
        #[arg(long)]
        pixels: Option<String>,
        /// Band limit of band-limited-random.
        #[arg(long, default_value_t = 8)]
        lmax: usize,
        #[arg(long, value_enum, default_value = "f32")]
        precision: PrecisionArg,
        #[arg(long = "out", value_name = "FILE")]
        out: PathBuf,
    },
    /// Precompute and shade per-vertex polarized transfer.
    Pprt {
        /// OBJ file or sphere:N
        #[arg(long)]
        mesh: String,
        /// PSH4 lighting with l_max at least --l-high.
        #[arg(long)]
        lighting: PathBuf,
        #[arg(long, value_name = "X,Y,Z", allow_hyphen_values = true, default_value = "0,0,4")]
        eye: String,
        #[arg(long, default_value_t = 4)]
        l_low: usize,
        #[arg(long, default_value_t = 9)]
        l_high: usize,
        #[arg(long, default_value_t = 0.4)]
        roughness: f64,
        #[arg(long, default_value_t = 1.5)]
        ior: f64,
        /// Sphere occluder cx,cy,cz,r (repeatable).
        #[arg(long, value_name = "CX,CY,CZ,R", allow_hyphen_values = true)]
        occluder: Vec<String>,
        /// Cast this many rays against the mesh's triangles instead.
        #[arg(long, conflicts_with = "occluder")]
        rays: Option<usize>,
        #[arg(long)]
        zero_s3: bool,
        /// CSV output; a PSV4 binary is written next to it.
        #[arg(long = "out", value_name = "FILE")]
        out: PathBuf,
    },
}

fn parse_kind(s: &str) -> std::result::Result<EnvKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn floats(s: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Domain(format!("{what}: expected {n} comma-separated numbers, got {s:?}")))?;
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("{what}: expected {n} finite numbers, got {s:?}")));
    }
    Ok(v)
}

/// `a,b,g` as a ZYZ rotation.
pub fn parse_rotation(s: &str) -> Result<Rotation> {
    let v = floats(s, 3, "rotation")?;
    Ok(rotation_zyz(v[0], v[1], v[2]))
}

/// `AxB` as `(A, B)`.
fn parse_dims(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once('x').ok_or_else(|| Error::Domain(format!("expected AxB, got {s:?}")))?;
    let p =
        |t: &str| t.parse::<usize>().ok().filter(|v| *v > 0).ok_or_else(|| Error::Domain(format!("bad size {s:?}")));
    Ok((p(a)?, p(b)?))
}

/// Destination views of `resample --view`.
pub fn parse_views(s: &str, pose: Rotation) -> Result<Vec<ViewSpec>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Domain(format!("unknown view {s:?}"));
    match parts.as_slice() {
        ["equirect", d] => {
            let (w, h) = parse_dims(d)?;
            Ok(vec![ViewSpec { pose, ..ViewSpec::equirect(w, h) }])
        }
        ["cube", n] | ["cube", n, _] => {
            let n: usize = n.parse().ok().filter(|v| *v > 0).ok_or_else(bad)?;
            let faces: Vec<ViewSpec> = ViewSpec::cube(n).into_iter().map(|v| ViewSpec { pose, ..v }).collect();
            match parts.get(2) {
                Some(k) => {
                    let k: usize = k.parse().ok().filter(|k| *k < 6).ok_or_else(bad)?;
                    Ok(vec![faces[k]])
                }
                None => Ok(faces),
            }
        }
        ["perspective", d, fov] => {
            let (w, h) = parse_dims(d)?;
            let fov: f64 = fov.parse().ok().filter(|f: &f64| *f > 0.0 && *f < 180.0).ok_or_else(bad)?;
            Ok(vec![ViewSpec::perspective(w, h, fov, pose)])
        }
        _ => Err(bad()),
    }
}

fn precision(p: PrecisionArg) -> Precision {
    match p {
        PrecisionArg::F32 => Precision::F32,
        PrecisionArg::F64 => Precision::F64,
    }
}

fn read_image(path: &Path) -> Result<StokesImage> {
    let bytes = io::read_bytes(path)?;
    if io::s4em_is_image(&bytes) {
        return io::decode_s4em_image(&bytes);
    }
    let f = io::decode_s4em_field(&bytes)?;
    if f.sampling != Sampling::PixelCenters {
        return Err(Error::Domain(format!("{}: resampling needs pixel-sampled maps", path.display())));
    }
    let view = ViewSpec::equirect(f.n_phi, f.n_theta);
    Ok(StokesImage { view, valid: vec![true; f.data.len()], data: f.data })
}

fn face_path(out: &Path, k: usize) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    out.with_file_name(format!("{stem}_face{k}{ext}"))
}

fn write_perturbation(w: &mut dyn Write, r: &PerturbationReport, n: usize) -> std::io::Result<()> {
    writeln!(w, "# perturbation: {} vectors, {n} axes, angle {}", r.s2l2.len(), r.angle)?;
    writeln!(w, "distance,per_vector_min,per_vector_max,vectors_above_1.9")?;
    for (name, v) in [("s2l2", &r.s2l2), ("theta_phi", &r.theta_phi), ("duff", &r.duff)] {
        let (lo, hi) = PerturbationReport::spread(v);
        writeln!(w, "{name},{lo:.15},{hi:.15},{}", v.iter().filter(|d| **d > 1.9).count())?;
    }
    let maxes = r.max_histograms();
    for (title, h) in [("per-vector maxima", &maxes), ("all vector-axis pairs", &r.histograms)] {
        writeln!(w, "# histogram of {title}")?;
        writeln!(w, "bin_lo,bin_hi,s2l2,theta_phi,duff")?;
        for b in 0..HIST_BINS {
            let lo = 2.0 * b as f64 / HIST_BINS as f64;
            writeln!(w, "{lo:.3},{:.3},{},{},{}", lo + 2.0 / HIST_BINS as f64, h[0][b], h[1][b], h[2][b])?;
        }
    }
    Ok(())
}

/// Runs one invocation; `args` includes the program name.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Domain(e.to_string()))?;
    execute(cli.command, out)
}

pub fn execute(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Project { lmax, zero_s3, io: p } => {
            let (i, o) = p.paths()?;
            let mut f = io::read_stokes_field(&i)?;
            if zero_s3 {
                f = f.without_circular();
            }
            io::write_psh4(o, &psh_project(&f, lmax)?)
        }
        Command::Reconstruct { grid, precision: pr, io: p } => {
            let (i, o) = p.paths()?;
            let c = io::read_psh4(&i)?;
            let g = gauss_legendre_grid(grid.unwrap_or(c.l_max));
            Ok(std::fs::write(o, io::encode_s4em_field_with(&psh_synthesize(&c, &g), precision(pr)))?)
        }
        Command::Rotate { rotation, io: p } => {
            let (i, o) = p.paths()?;
            let r = parse_rotation(&rotation)?;
            io::write_psh4(o, &psh_rotate_coeffs(&io::read_psh4(&i)?, &r))
        }
        Command::Convolve { kernel, io: p } => {
            let (i, o) = p.paths()?;
            let f = io::read_psh4(&i)?;
            let kc = match kernel.strip_prefix("builtin:") {
                Some("pi-minus-theta") => kernel_coeffs(&PolarConvKernel::pi_minus_theta(), f.l_max),
                Some(other) => return Err(Error::Domain(format!("unknown builtin kernel {other:?}"))),
                None => io::read_pshk(&kernel)?,
            };
            io::write_psh4(o, &pconv_apply(&kc, &f)?)
        }
        Command::Resample { method, view, rotation, out: o, inputs } => {
            let pose = rotation.as_deref().map(parse_rotation).transpose()?.unwrap_or(Rotation::IDENTITY);
            let views = parse_views(&view, pose)?;
            let srcs = inputs.iter().map(|p| read_image(p)).collect::<Result<Vec<_>>>()?;
            let m = match method {
                MethodArg::S2l2 => ResampleMethod::S2l2,
                MethodArg::Naive => ResampleMethod::ComponentBilinear,
            };
            let many = views.len() > 1;
            for (k, v) in views.iter().enumerate() {
                let img = resample(&srcs, v, m);
                let bad = img.valid.iter().filter(|x| !**x).count();
                if bad > 0 {
                    writeln!(out, "{bad} destination pixels not covered by any source")?;
                }
                let path = if many { face_path(&o, k) } else { o.clone() };
                io::write_stokes_image(path, &img)?;
            }
            Ok(())
        }
        Command::S2l2Validate { n, angle, axis_stride, angles, partners } => {
            if n == 0 || angles == 0 {
                return Err(Error::Domain("n and angles must be positive".into()));
            }
            write_perturbation(out, &perturbation_study(n, angle), n)?;
            let r = rotation_study(n, axis_stride, angles, partners);
            writeln!(out, "# rotation: every {axis_stride}-th axis, {angles} angles, {partners} partners per vector")?;
            writeln!(out, "distance,max_abs_change,mean_abs_change")?;
            for (name, v) in [("s2l2", &r.s2l2), ("theta_phi", &r.theta_phi), ("duff", &r.duff)] {
                let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
                writeln!(out, "{name},{:.3e},{mean:.3e}", v.iter().fold(0.0f64, |a, b| a.max(*b)))?;
            }
            Ok(())
        }
        Command::Synth { kind, seed, grid, pixels, lmax, precision: pr, out: o } => {
            let res = match (grid, pixels) {
                (_, Some(p)) => {
                    let (h, w) = parse_dims(&p)?;
                    EnvResolution::Pixels(h, w)
                }
                (g, None) => EnvResolution::Band(g.unwrap_or(lmax)),
            };
            let f: StokesField = synth_envmap(kind, lmax, res, seed);
            Ok(std::fs::write(o, io::encode_s4em_field_with(&f, precision(pr)))?)
        }
        Command::Pprt { mesh, lighting, eye, l_low, l_high, roughness, ior, occluder, rays, zero_s3, out: o } => {
            let m = match mesh.strip_prefix("sphere:") {
                Some(n) => {
                    fibonacci_sphere_mesh(n.parse().map_err(|_| Error::Domain(format!("bad mesh {mesh:?}")))?, 1.0)
                }
                None => io::read_obj(&mesh)?,
            };
            let occlusion = match rays {
                Some(r) => Occlusion::MeshRays { rays: r },
                None if occluder.is_empty() => Occlusion::None,
                None => Occlusion::Spheres(
                    occluder
                        .iter()
                        .map(|s| {
                            let v = floats(s, 4, "occluder")?;
                            Ok(Occluder { center: Vec3::new(v[0], v[1], v[2]), radius: v[3] })
                        })
                        .collect::<Result<_>>()?,
                ),
            };
            let mut light: PshCoeffVector = io::read_psh4(&lighting)?;
            if zero_s3 {
                for l in 0..=light.l_max {
                    for mm in -(l as i64)..=l as i64 {
                        light.set(l, mm, 3, 0.0);
                    }
                }
            }
            let e = floats(&eye, 3, "eye")?;
            let cfg = PprtConfig { l_low, l_high, occlusion, ..Default::default() };
            let mat = Material { roughness, ior, ..Default::default() };
            let set = pprt_precompute(&m, &mat, &cfg)?;
            let views = view_dirs_toward(&m, Vec3::new(e[0], e[1], e[2]));
            let mut v = pprt_shade(&set, &light, &views)?;
            if zero_s3 {
                v.iter_mut().for_each(|s| s.s3 = 0.0);
            }
            if let Some(fit) = &set.kernel_fit {
                writeln!(out, "convolution fit relative residual {:.3e}", fit.relative)?;
            }
            std::fs::write(&o, io::format_vertex_csv(&v))?;
            Ok(std::fs::write(o.with_extension("psv4"), io::encode_vertex_binary(&v))?)
        }
    }
}

/// Applies `POLARSH_THREADS` to the global worker pool.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("POLARSH_THREADS") {
        let n: usize =
            v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| Error::Domain(format!("POLARSH_THREADS={v:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Domain(e.to_string()))?;
    }
    Ok(())
}
