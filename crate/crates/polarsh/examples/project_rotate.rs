//! Project a sky map to PSH coefficients, rotate them, and check against rotating the map.

use polarsh::psh::{psh_project, psh_reconstruct, psh_rotate_coeffs};
use polarsh::synth::{synth_envmap, EnvKind, EnvResolution};
use polarsh::{dir_to_sph, rotation_zyz, sph_to_dir};

fn main() -> polarsh::Result<()> {
    let l_max = 12;
    let field = synth_envmap(EnvKind::TwoLobePolarized, 0, EnvResolution::Band(l_max), 7);
    let coeffs = psh_project(&field, l_max)?;
    println!("projected {} coefficients at l_max = {l_max}", coeffs.values.len());

    let r = rotation_zyz(0.3, 1.0, -0.5);
    let rotated = psh_rotate_coeffs(&coeffs, &r);
    println!("norm before {:.6}, after {:.6}", coeffs.norm(), rotated.norm());

    // intensity is a scalar: the rotated map at R w equals the original at w
    for (t, p) in [(0.4, 1.0), (1.7, 4.0), (2.9, 0.2)] {
        let w = sph_to_dir(t, p);
        let (tr, pr) = dir_to_sph(r.apply(w));
        let a = psh_reconstruct(&coeffs, t, p).s0;
        let b = psh_reconstruct(&rotated, tr, pr).s0;
        println!("s0 at ({t:.1}, {p:.1}): {a:+.6}  rotated copy: {b:+.6}");
    }
    Ok(())
}
