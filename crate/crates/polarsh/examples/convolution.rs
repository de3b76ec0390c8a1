//! Frequency-domain polarized convolution against the angular integral.

use std::time::Instant;

use polarsh::dir_to_sph;
use polarsh::geom::fibonacci_sphere;
use polarsh::pconv::{kernel_coeffs, pconv_angular_coeffs_at, pconv_apply, PolarConvKernel};
use polarsh::psh::psh_reconstruct;
use polarsh::synth::{EnvKind, EnvMap};

fn main() -> polarsh::Result<()> {
    let l_max = 16;
    let EnvMap::Coeffs(f) = EnvMap::new(EnvKind::BandLimitedRandom, l_max, 1) else { unreachable!() };
    let k = PolarConvKernel::pi_minus_theta();
    let kc = kernel_coeffs(&k, l_max);

    let t = Instant::now();
    let g = pconv_apply(&kc, &f)?;
    println!("frequency domain: {:.2} ms", t.elapsed().as_secs_f64() * 1e3);

    for d in fibonacci_sphere(4) {
        let (th, ph) = dir_to_sph(d);
        let t = Instant::now();
        let a = pconv_angular_coeffs_at(&k, &f, d);
        let ms = t.elapsed().as_secs_f64() * 1e3;
        let b = psh_reconstruct(&g, th, ph);
        println!("({th:.2}, {ph:.2}) angular {ms:.1} ms, |diff| = {:.2e}", a.max_abs_diff(b));
    }
    Ok(())
}
