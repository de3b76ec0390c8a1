//! Scalar harmonics: projection, Wigner D rotation, zonal convolution and 3-j symbols.

use polarsh::sh::{
    sh_convolve, sh_project_real, sh_reconstruct_real, sh_rotate_coeffs_real, triple_product_000, wigner3j,
    zonal_coeffs,
};
use polarsh::{dir_to_sph, gauss_legendre_grid, rotation_zyz, sph_to_dir, Vec3};

fn main() -> polarsh::Result<()> {
    let l_max = 10;
    let g = gauss_legendre_grid(l_max);
    let f = |t: f64, p: f64| (3.0 * sph_to_dir(t, p).dot(Vec3::normalized(1.0, 2.0, 2.0))).exp();
    let samples: Vec<f64> = g.nodes().iter().map(|&(t, p, _)| f(t, p)).collect();
    let c = sh_project_real(&g, &samples, l_max)?;
    println!("f(0.7, 2.0) = {:.6}, band-{l_max} reconstruction {:.6}", f(0.7, 2.0), sh_reconstruct_real(&c, 0.7, 2.0));

    let r = rotation_zyz(1.0, 0.5, -2.0);
    let rc = sh_rotate_coeffs_real(&c, &r);
    let (t, p) = dir_to_sph(r.apply(sph_to_dir(0.7, 2.0)));
    println!("rotated expansion at R w: {:.6}", sh_reconstruct_real(&rc, t, p));

    // cosine lobe: the diffuse irradiance filter
    let k = zonal_coeffs(|t| t.cos().max(0.0), l_max, 200);
    let e = sh_convolve(&k, &c)?;
    println!("irradiance at the north pole: {:.6}", sh_reconstruct_real(&e, 0.0, 0.0));

    println!("(1 1 2; 0 0 0) = {:.6}", wigner3j(1, 1, 2, 0, 0, 0));
    println!("int conj(Y_20) Y_10 Y_10 = {:.6}", triple_product_000(2, 0, 1, 0, 1, 0));
    Ok(())
}
