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
        let init = init_params(320, 320, 1.2, (truth.mu, truth.mv));
        let problem = CalibProblem::new(observations, (320, 320), (truth.mu, truth.mv), init, SolveOptions::default());
        let result = estimate_params(&problem).unwrap();
        let est = result.params;
        let full_domain = valid_pixel_domain(&[&truth, &est], 320, 320);
        // Image-content domain: pixels whose truth rectification lands in
        // the source raster.
        let content: Vec<(f64,f64)> = full_domain.iter().copied().filter(|&(u,v)| {
            match rectify_point(u, v, &truth, &pinhole) {
                Ok((x, y)) => x >= 0.0 && y >= 0.0 && x <= 319.0 && y <= 319.0,
                Err(_) => false,
            }
        }).collect();
        let rpe_disk = evaluate_rpe(&est, &truth, &full_domain, &pinhole).unwrap().rms;
        let rpe_content = evaluate_rpe(&est, &truth, &content, &pinhole).unwrap().rms;
        println!("seed {seed}: disk rpe {rpe_disk:9.3e}  content rpe {rpe_content:9.3e}  (content {} of {})", content.len(), full_domain.len());
    }
}
