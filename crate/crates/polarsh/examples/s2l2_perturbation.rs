//! Frame-free S2L2 distance against frame-field component distances under small rotations.

use polarsh::s2l2::{perturbation_study, rotation_study, PerturbationReport};

fn main() {
    let n = 300;
    let p = perturbation_study(n, 0.1);
    for (name, v) in [("s2l2", &p.s2l2), ("theta-phi", &p.theta_phi), ("duff", &p.duff)] {
        let (lo, hi) = PerturbationReport::spread(v);
        let jumps = v.iter().filter(|d| **d > 1.9).count();
        println!("{name:>9}: max distance per vector in [{lo:.6}, {hi:.6}], {jumps} vectors above 1.9");
    }
    println!("2 sin(0.1) = {:.6}", 2.0 * 0.1f64.sin());

    let r = rotation_study(n, 10, 10, 4);
    for (name, v) in [("s2l2", &r.s2l2), ("theta-phi", &r.theta_phi), ("duff", &r.duff)] {
        println!("{name:>9}: max |d(Rs,Rt) - d(s,t)| = {:.2e}", PerturbationReport::spread(v).1);
    }
}
