//! Resample a polarized cube map to an equirectangular map and compare against ground truth near the pole.

use polarsh::s2l2::{resample, row_linear_deviation, ResampleMethod, StokesImage, ViewSpec};
use polarsh::{Complex64, Direction, Frame, StokesComponents, Vec3};

fn line_field(_: Direction, f: &Frame) -> StokesComponents {
    let a = Vec3::new(0.3, 0.5, 0.1);
    let z = Complex64::new(a.dot(f.x), a.dot(f.y)).powi(2);
    StokesComponents::new(1.0, z.re, z.im, 0.0)
}

fn main() {
    let faces: Vec<StokesImage> = ViewSpec::cube(32).into_iter().map(|v| StokesImage::from_fn(v, line_field)).collect();
    let dst = ViewSpec::equirect(128, 64);
    for (name, method) in [("s2l2", ResampleMethod::S2l2), ("component bilinear", ResampleMethod::ComponentBilinear)] {
        let img = resample(&faces, &dst, method);
        let worst = (0..4).map(|k| row_linear_deviation(&img, dst.height - 1 - k, line_field)).fold(0.0, f64::max);
        let mid = row_linear_deviation(&img, dst.height / 2, line_field);
        println!("{name:>18}: relative error {mid:.4} at the equator, {worst:.4} next to the pole");
    }
}
