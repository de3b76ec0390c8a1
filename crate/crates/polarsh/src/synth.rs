//! Seeded synthetic environment maps.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{dir_to_sph, frame_theta_phi_at, gauss_legendre_grid, sph_to_dir, Direction, Frame, Vec3};
use crate::polar::{stokes_reframe, StokesComponents, StokesField};
use crate::psh::{psh_indices, psh_reconstruct, PshCoeffVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    /// Rayleigh-like sky: polarization perpendicular to the sun plane.
    SkyAnalytic,
    /// Random PSH coefficients with `1/(1+l)` amplitude decay.
    BandLimitedRandom,
    /// Two polarized lobes with fixed orientation vectors.
    TwoLobePolarized,
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sky-analytic" => Ok(EnvKind::SkyAnalytic),
            "band-limited-random" => Ok(EnvKind::BandLimitedRandom),
            "two-lobe-polarized" => Ok(EnvKind::TwoLobePolarized),
            _ => Err(Error::Domain(format!("unknown env map kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lobe {
    pub center: Direction,
    pub sharpness: f64,
    pub weight: f64,
    pub orient: Vec3,
}

/// A closed-form environment map, evaluable in any frame at any direction.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvMap {
    Sky { sun: Direction, base: f64, rayleigh: f64, dop: f64, sun_weight: f64, sun_sharpness: f64 },
    Lobes { ambient: f64, lobes: Vec<Lobe> },
    Coeffs(PshCoeffVector),
}

fn unit(rng: &mut ChaCha8Rng) -> Direction {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let p: f64 = rng.gen_range(0.0..2.0 * PI);
    sph_to_dir(z.acos(), p)
}

/// `(v·x + i v·y)²`: the spin-2 value of a line field along `v`, weighted by `|v_⊥|²`.
fn line_field(v: Vec3, f: &Frame) -> Complex64 {
    Complex64::new(v.dot(f.x), v.dot(f.y)).powi(2)
}

impl EnvMap {
    /// Map of `kind` drawn from `seed`; `l_max` bounds the random kind.
    pub fn new(kind: EnvKind, l_max: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match kind {
            EnvKind::SkyAnalytic => {
                let mut sun = unit(&mut rng);
                sun.z = sun.z.abs().max(0.2);
                EnvMap::Sky {
                    sun: sun.normalize(),
                    base: rng.gen_range(0.05..0.2),
                    rayleigh: rng.gen_range(0.3..0.6),
                    dop: rng.gen_range(0.6..0.9),
                    sun_weight: rng.gen_range(1.0..3.0),
                    sun_sharpness: rng.gen_range(20.0..60.0),
                }
            }
            EnvKind::TwoLobePolarized => EnvMap::Lobes {
                ambient: 0.05,
                lobes: (0..2)
                    .map(|_| {
                        let center = unit(&mut rng);
                        let orient = unit(&mut rng) * rng.gen_range(0.5..1.0);
                        Lobe { center, sharpness: rng.gen_range(2.0..8.0), weight: rng.gen_range(0.5..1.5), orient }
                    })
                    .collect(),
            },
            EnvKind::BandLimitedRandom => {
                let mut c = PshCoeffVector::zeros(l_max);
                for ix in psh_indices(l_max) {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    c.set(ix.l, ix.m, ix.p, v / (1.0 + ix.l as f64));
                }
                EnvMap::Coeffs(c)
            }
        }
    }

    /// Stokes value at `d` measured in `f` (which must have `f.z = d`).
    pub fn eval_in(&self, d: Direction, f: &Frame) -> StokesComponents {
        match self {
            EnvMap::Sky { sun, base, rayleigh, dop, sun_weight, sun_sharpness } => {
                let c = sun.dot(d);
                let s0 = base + rayleigh * (1.0 + c * c) + sun_weight * (sun_sharpness * (c - 1.0)).exp();
                let z = line_field(sun.cross(d), f) * (rayleigh * dop);
                StokesComponents::new(s0, z.re, z.im, 0.0)
            }
            EnvMap::Lobes { ambient, lobes } => {
                let mut s = StokesComponents::new(*ambient, 0.0, 0.0, 0.0);
                for l in lobes {
                    let w = l.weight * (l.sharpness * (l.center.dot(d) - 1.0)).exp();
                    let z = line_field(l.orient, f) * w;
                    s += StokesComponents::new(w, z.re, z.im, 0.0);
                }
                s
            }
            EnvMap::Coeffs(c) => {
                let (t, p) = dir_to_sph(d);
                let s = psh_reconstruct(c, t, p);
                stokes_reframe(s, &frame_theta_phi_at(d), f).expect("frame shares z")
            }
        }
    }

    /// Value in the θφ frame.
    pub fn eval(&self, theta: f64, phi: f64) -> StokesComponents {
        let d = sph_to_dir(theta, phi);
        self.eval_in(d, &frame_theta_phi_at(d))
    }
}

/// Grid of a synthesized map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvResolution {
    /// Gauss–Legendre grid resolving band `l`.
    Band(usize),
    /// Equirectangular pixel centers `(n_theta, n_phi)`.
    Pixels(usize, usize),
}

/// Samples [`EnvMap::new`]`(kind, l_max, seed)` at `res`.
pub fn synth_envmap(kind: EnvKind, l_max: usize, res: EnvResolution, seed: u64) -> StokesField {
    let map = EnvMap::new(kind, l_max, seed);
    match res {
        EnvResolution::Band(b) => StokesField::on_grid(&gauss_legendre_grid(b), |t, p| map.eval(t, p)),
        EnvResolution::Pixels(h, w) => StokesField::pixels(h, w, |t, p| map.eval(t, p)),
    }
}
