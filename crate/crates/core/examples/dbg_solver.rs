use plumbline_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let config = SamplerConfig::default();
    let pinhole = config.source_pinhole();
    for seed in 0..10u64 {
        let truth = sample_params(seed, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_5CE_E5);
        let segments = random_segments(&mut rng, 320, 320, 12, 120.0);
        let (polylines, _) = distort_segments(&segments, &truth, &pinhole, (320, 320)).unwrap();
        let observations: Vec<Vec<(f64,f64)>> = polylines.into_iter().map(|p| p.points).collect();
        let n_lines = observations.len();
        let init = init_params(320, 320, 1.2, (truth.mu, truth.mv));
        let problem = CalibProblem::new(observations, (320, 320), (truth.mu, truth.mv), init, SolveOptions::default());
        let result = estimate_params(&problem).unwrap();
        let domain = valid_pixel_domain(&[&truth, &result.params], 320, 320);
        let rpe = evaluate_rpe(&result.params, &truth, &domain, &pinhole).unwrap();
        eprintln!("SEED {seed}");
        println!("seed {seed}: lines={n_lines} conv={} iters={} rms={:.2e} rpe={:.3e}", result.converged, result.iterations, result.rms_residual, rpe.rms);
        println!("   est k={:?} u0={:.2} v0={:.2}", result.params.k, result.params.u0, result.params.v0);
        println!("   gt  k={:?} u0={:.2} v0={:.2} m={:.1}", truth.k, truth.u0, truth.v0, truth.mu);
    }
}
