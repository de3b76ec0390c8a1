//! Precomputed polarized radiance transfer on a sphere with one occluder.

use std::time::Instant;

use polarsh::operators::Occluder;
use polarsh::pprt::{
    fibonacci_sphere_mesh, pprt_precompute, pprt_reference, pprt_shade, stokes_rmse, view_dirs_toward, visibility_fn,
    Material, Occlusion, PprtConfig,
};
use polarsh::synth::{EnvKind, EnvMap};
use polarsh::Vec3;

fn main() -> polarsh::Result<()> {
    let mesh = fibonacci_sphere_mesh(200, 1.0);
    let occlusion = Occlusion::Spheres(vec![Occluder { center: Vec3::new(1.4, 0.0, 0.6), radius: 0.6 }]);
    let EnvMap::Coeffs(mut light) = EnvMap::new(EnvKind::BandLimitedRandom, 8, 4) else { unreachable!() };
    light.set(0, 0, 0, 4.0);
    let views = view_dirs_toward(&mesh, Vec3::new(0.0, -4.0, 2.0));
    let mat = Material::default();

    let t = Instant::now();
    let oracle = pprt_reference(&mesh, &mat, &visibility_fn(&mesh, &occlusion), &light, &views, 48)?;
    println!("brute force: {:.1} s", t.elapsed().as_secs_f64());

    for (l_low, l_high) in [(3, 3), (4, 8), (6, 8)] {
        let cfg = PprtConfig { l_low, l_high, occlusion: occlusion.clone(), ..Default::default() };
        let t = Instant::now();
        let set = pprt_precompute(&mesh, &mat, &cfg)?;
        let pre = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let out = pprt_shade(&set, &light, &views)?;
        let shade = t.elapsed().as_secs_f64() * 1e3;
        let lin = out.iter().map(|s| s.linear().norm()).fold(0.0, f64::max);
        println!(
            "l_low {l_low}, l_high {l_high}: precompute {pre:.1} s, shade {shade:.1} ms, RMSE {:.5}, max |s1 + i s2| {lin:.4}",
            stokes_rmse(&out, &oracle)
        );
    }
    Ok(())
}
