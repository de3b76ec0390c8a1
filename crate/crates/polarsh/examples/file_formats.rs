//! Write and read back every file format.

use polarsh::io::{
    decode_psh4, decode_pshm, decode_s4em_field, decode_vertex_binary, encode_psh4, encode_pshm,
    encode_s4em_field_with, encode_vertex_binary, format_obj, parse_obj, Precision,
};
use polarsh::operators::PshCoeffMatrix;
use polarsh::pprt::fibonacci_sphere_mesh;
use polarsh::synth::{synth_envmap, EnvKind, EnvMap, EnvResolution};
use polarsh::StokesComponents;

fn main() -> polarsh::Result<()> {
    let EnvMap::Coeffs(c) = EnvMap::new(EnvKind::BandLimitedRandom, 6, 2) else { unreachable!() };
    let b = encode_psh4(&c);
    println!("PSH4: {} bytes, exact: {}", b.len(), decode_psh4(&b)? == c);

    let m = PshCoeffMatrix::identity(3);
    let b = encode_pshm(&m);
    println!("PSHM: {} bytes, exact: {}", b.len(), decode_pshm(&b)?.max_abs_diff(&m) == 0.0);

    let f = synth_envmap(EnvKind::SkyAnalytic, 0, EnvResolution::Pixels(16, 32), 1);
    for p in [Precision::F32, Precision::F64] {
        let b = encode_s4em_field_with(&f, p);
        println!("S4EM {p:?}: {} bytes, max error {:.1e}", b.len(), decode_s4em_field(&b)?.max_abs_diff(&f));
    }

    let mesh = fibonacci_sphere_mesh(8, 1.0);
    let back = parse_obj(&format_obj(&mesh))?;
    println!("OBJ: {} vertices back", back.positions.len());

    let v = vec![StokesComponents::new(1.0, 0.2, -0.1, 0.0); 3];
    println!("PSV4: {} values back", decode_vertex_binary(&encode_vertex_binary(&v))?.len());

    match decode_psh4(b"PSH4\x01") {
        Err(e) => println!("truncated PSH4 rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
