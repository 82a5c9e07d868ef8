use je_lab::kernel::{KernelContext, QuadConfig};
use je_lab::measure::{Density, Measure};
use je_lab::spectral::{AmplitudeProfile, ProfileKind, RoofMode, SpectralDomain};
use std::time::Instant;

fn main() {
    let profile = AmplitudeProfile::new(ProfileKind::Constant { b_squared: 1.0 }, 0.5, 0.05).unwrap();
    let domain = SpectralDomain::new(profile, RoofMode::TangencyLocus, (-0.5, 0.5)).unwrap();
    let measure = Measure { atoms: vec![], density: Density::GaussP { scale: 12.0 } };
    for t in [5.0, 100.0, 1000.0] {
        let t0 = Instant::now();
        let ctx = KernelContext::new(&measure, &domain, 0.0, t, QuadConfig::default()).unwrap();
        let build = t0.elapsed();
        let front = t;
        let f = ctx.eval(front - 4.0, front - 4.0).unwrap();
        println!("t={t}: panels={} nodes={} build={:?} F(front-4)={:.6e} err={:.2e}",
            ctx.panel_count(), ctx.density_node_count(), build, f.value.re, f.quad_error);
        // gram timing for a 97-point set
        let pts: Vec<f64> = (0..97).map(|i| front - 8.0 + 22.0 * i as f64 / 96.0).collect();
        let t1 = Instant::now();
        let g = ctx.gram(&pts).unwrap();
        println!("  gram 97x97 in {:?}, g[0,0]={:.6e}", t1.elapsed(), g[(0,0)].re);
    }
}
