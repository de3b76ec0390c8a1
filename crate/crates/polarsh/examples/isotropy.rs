//! Coefficient matrix of a synthetic pBRDF: isotropic sparsity, shadowing and the convolution fit.

use polarsh::geom::gauss_legendre_hemisphere_grid;
use polarsh::operators::{
    isotropic_compact, isotropic_entry_count, operator_project, shadow_expand, visibility_project,
};
use polarsh::pconv::{conv_project_operator, rotation_average_matrix};
use polarsh::polar::synthetic_pbrdf;
use polarsh::{gauss_legendre_grid, Vec3};

fn main() -> polarsh::Result<()> {
    let l_max = 4;
    let pbrdf = synthetic_pbrdf(Vec3::Z, 0.4, 1.5)?;
    let m = operator_project(&pbrdf, l_max, &gauss_legendre_grid(12))?;
    let c = isotropic_compact(&m);
    println!(
        "{} of {} entries kept; violations {:.1e} (|m|), {:.1e} (complex pairs)",
        c.entries.len(),
        m.dim() * m.dim(),
        c.max_m_violation,
        c.max_pair_violation
    );
    assert_eq!(c.entries.len(), isotropic_entry_count(l_max));

    for n in [4, 8, 16, 32] {
        let fit = conv_project_operator(&rotation_average_matrix(&m, n)?);
        let b = fit.by_block.map(|v| format!("{v:.2e}"));
        println!(
            "averaged over {:>4} rotations: residual 0->0 {}, 0->2 {}, 2->0 {}, 2->2 {}",
            n * n,
            b[0],
            b[1],
            b[2],
            b[3]
        );
    }

    // a wall covering the lower half of the sky
    let hemi = gauss_legendre_hemisphere_grid(8);
    let v = visibility_project(|_| 1.0, 8, &hemi)?;
    let s = shadow_expand(&v, l_max);
    println!("hemisphere shadow: <Y_00, V Y_00> = {:.12}", s.get(0, 0));
    Ok(())
}
