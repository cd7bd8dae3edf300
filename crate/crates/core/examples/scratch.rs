use num_complex::Complex64;
use qdlab::bethe::*;
use qdlab::numeric::pairwise_sum;

fn main() {
    let spec = BetheModelSpec::uniform(2, 0.2);
    let zeta = Complex64::new(0.0, 1e-3);
    let controls = PopulationControls::fast();
    let stats = pool_statistics(&spec, zeta, &controls, 17).unwrap();
    println!("pool mean_log_abs = {:.5} (gens {})", stats.mean_log_abs, stats.convergence.generations);

    // rebuild ensemble and look at chain factor stats by depth
    let (ens, _) = equilibrate(&spec, zeta, &controls, 17).unwrap();
    let pool_logs: Vec<f64> = ens.pool.iter().map(|g| g.norm().ln()).collect();
    println!("pool E ln|g| = {:.5}", pairwise_sum(&pool_logs)/pool_logs.len() as f64);

    // root_green closed form at lambda=0 check
    let spec0 = BetheModelSpec::uniform(2, 0.0);
    let z0 = Complex64::new(0.0, 1e-3);
    let st = root_green(&spec0, z0, &controls, RootMode::FullDegree, 3).unwrap();
    let g = free_fixed_point(2, z0);
    let want = Complex64::new(1.0, 0.0) / (-z0 - 3.0 * g);
    println!("root mean=({:.6},{:.6}) want=({:.6},{:.6}) gens={}", st.mean_re, st.mean_im, want.re, want.im, st.convergence.generations);
    println!("median_im {:.6} ac_density {:.6} want_density {:.6}", st.median_im, st.ac_density, want.im/std::f64::consts::PI);
}
