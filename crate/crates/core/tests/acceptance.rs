//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the report.

use plumbline_core::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fs;
use std::time::Instant;

fn report(number: u8, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {number} ({name}): {verdict} [{detail}]");
    assert!(pass, "acceptance {number} ({name}) failed: {detail}");
}

#[test]
fn criterion_1_round_trip_fidelity() {
    let started = Instant::now();
    let config = SamplerConfig::default();
    let pinhole = config.source_pinhole();
    let mut worst_psnr = f64::INFINITY;
    let mut worst_ssim = f64::INFINITY;
    let mut all_pass = true;
    for seed in 0..20u64 {
        let params = sample_params(seed, &config).unwrap();
        let src = test_pattern_rgb(320, 320, 9000 + seed);
        let fisheye = distort_image(&src, &params, &pinhole, (320, 320)).unwrap();
        let grid = build_remap(&params, &pinhole, (320, 320)).unwrap();
        let back = rectify_image(&fisheye, &grid).unwrap();
        let p = psnr(&back, &src).unwrap();
        let s = ssim(&back, &src).unwrap();
        worst_psnr = worst_psnr.min(p);
        worst_ssim = worst_ssim.min(s);
        if !(p >= 30.0 && s >= 0.95) {
            all_pass = false;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = all_pass && elapsed < 30.0;
    report(
        1,
        "round-trip fidelity",
        pass,
        format!("20 seeds, worst PSNR {worst_psnr:.2} dB, worst SSIM {worst_ssim:.4}, {elapsed:.1} s"),
    );
}

fn calibration_scene(
    seed: u64,
    lines: usize,
    noise_sigma: f64,
) -> (CalibProblem, FisheyeParams, VirtualPinhole) {
    let config = SamplerConfig::default();
    let truth = sample_params(seed, &config).unwrap();
    let pinhole = config.source_pinhole();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_5CE_E5);
    let segments = random_segments(&mut rng, 320, 320, lines, 120.0);
    let (polylines, _) = distort_segments(&segments, &truth, &pinhole, (320, 320)).unwrap();
    let mut observations: Vec<Vec<(f64, f64)>> =
        polylines.into_iter().map(|p| p.points).collect();
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).unwrap();
        for line in observations.iter_mut() {
            for p in line.iter_mut() {
                p.0 += normal.sample(&mut rng);
                p.1 += normal.sample(&mut rng);
            }
        }
    }
    let init = init_params(320, 320, 1.2, (truth.mu, truth.mv));
    let problem = CalibProblem::new(
        observations,
        (320, 320),
        (truth.mu, truth.mv),
        init,
        SolveOptions::default(),
    );
    (problem, truth, pinhole)
}

fn recovery_rpe(seed: u64, noise_sigma: f64) -> f64 {
    let (problem, truth, pinhole) = calibration_scene(seed, 12, noise_sigma);
    let result = estimate_params(&problem).unwrap();
    let domain = valid_pixel_domain(&[&truth, &result.params], 320, 320);
    evaluate_rpe(&result.params, &truth, &domain, &pinhole)
        .unwrap()
        .rms
}

#[test]
fn criterion_2_plumb_line_recovery() {
    let mut rms_values: Vec<f64> = (0..10u64).map(|seed| recovery_rpe(seed, 0.0)).collect();
    let within = rms_values.iter().filter(|r| **r < 1.0).count();
    rms_values.sort_by(f64::total_cmp);
    let median = 0.5 * (rms_values[4] + rms_values[5]);
    let pass = within >= 9 && median < 0.25;
    report(
        2,
        "plumb-line recovery",
        pass,
        format!("{within}/10 scenes under 1 px, median {median:.3e} px"),
    );
}

#[test]
fn criterion_3_noise_robustness() {
    let rms_values: Vec<f64> = (0..10u64).map(|seed| recovery_rpe(seed, 0.25)).collect();
    let within = rms_values.iter().filter(|r| **r < 2.0).count();
    let worst = rms_values.iter().cloned().fold(0.0f64, f64::max);
    let pass = within >= 8;
    report(
        3,
        "noise robustness",
        pass,
        format!("{within}/10 scenes under 2 px at 0.25 px noise, worst {worst:.3} px"),
    );
}

#[test]
fn criterion_4_inversion_oracle() {
    let config = SamplerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for k_seed in 0..100u64 {
        let params = sample_params(k_seed, &config).unwrap();
        let r_max = params.max_radius();
        for _ in 0..1000 {
            let r_d = rng.random_range(0.0..=r_max);
            let got = params.radial_inverse(r_d).unwrap();
            // Plain bisection oracle.
            let mut lo = 0.0f64;
            let mut hi = params.theta_max;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if params.radial_profile(mid).unwrap() < r_d {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let oracle = 0.5 * (lo + hi);
            let diff = (got - oracle).abs();
            worst = worst.max(diff);
            if diff > 1e-10 {
                failures += 1;
            }
        }
    }
    report(
        4,
        "inversion oracle",
        failures == 0,
        format!("100000 pairs, {failures} failures, worst gap {worst:.2e} rad"),
    );
}

#[test]
fn criterion_5_geometry_round_trips() {
    let config = SamplerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut worst_pixel = 0.0f64;
    let mut worst_rect = 0.0f64;
    for k_seed in [2u64, 13, 29, 47, 83] {
        let params = sample_params(k_seed, &config).unwrap();
        let pinhole = config.source_pinhole();
        for _ in 0..10_000 {
            let theta = rng.random_range(0.0..params.theta_max * 0.999);
            let phi = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let (u, v) = params.project_ray(Angle::new(theta, phi)).unwrap();

            let ray = params.unproject_pixel(u, v).unwrap();
            let (u2, v2) = params.project_ray(ray).unwrap();
            worst_pixel = worst_pixel.max((u2 - u).abs()).max((v2 - v).abs());

            let (x, y) = rectify_point(u, v, &params, &pinhole).unwrap();
            let (u3, v3) = params.forward_map(x, y, &pinhole).unwrap();
            worst_rect = worst_rect.max((u3 - u).abs()).max((v3 - v).abs());
        }
    }
    let pass = worst_pixel < 1e-8 && worst_rect < 1e-8;
    report(
        5,
        "geometry round-trips",
        pass,
        format!("project/unproject {worst_pixel:.2e} px, rectify/forward {worst_rect:.2e} px"),
    );
}

#[test]
fn criterion_6_loss_correctness() {
    let mut checks: Vec<(String, bool)> = Vec::new();
    let mut check = |name: &str, ok: bool| checks.push((name.into(), ok));

    // Hand-evaluated line-map loss.
    let h_hat = LineMap {
        width: 4,
        height: 1,
        data: vec![5.0, 0.0, 0.0, 0.0],
    };
    let h = LineMap {
        width: 4,
        height: 1,
        data: vec![5.0, 1.0, 0.0, 0.0],
    };
    let lm = line_map_loss(&h, &h_hat).unwrap().value;
    check("line_map 0.25", (lm - 0.25).abs() < 1e-9);

    // Parameter losses against hand arithmetic.
    let gt = [1.3, 0.05, 0.01, 0.002, 0.0, 110.0, 108.0, 160.0, 161.0];
    let weights = LossWeights::default();
    let mut e1 = gt;
    e1[0] += 1.0;
    check(
        "global unit-w 1/9",
        (global_param_loss(&e1, &gt, &[1.0; 9]) - 1.0 / 9.0).abs() < 1e-9,
    );
    let mut all5 = gt;
    for slot in all5.iter_mut().take(5) {
        *slot += 1.0;
    }
    check(
        "global paper-w 0.3",
        (global_param_loss(&all5, &gt, &weights.w) - 0.3).abs() < 1e-9,
    );
    let gt5 = [gt[0], gt[1], gt[2], gt[3], gt[4]];
    let w5 = [0.1, 0.1, 0.5, 1.0, 1.0];
    let mut e3 = gt5;
    e3[2] += 1.0;
    check("local e3 0.1", (local_param_loss(&e3, &gt5, &w5) - 0.1).abs() < 1e-9);

    // Curvature equals the reprojection formula on the same domain.
    let config = SamplerConfig::default();
    let truth = sample_params(6, &config).unwrap();
    let pinhole = config.source_pinhole();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let segments = random_segments(&mut rng, 320, 320, 8, 100.0);
    let (polylines, _) = distort_segments(&segments, &truth, &pinhole, (320, 320)).unwrap();
    let map = render_polyline_map(&polylines, (320, 320));
    let mut omega = Vec::new();
    for y in 0..320usize {
        for x in 0..320usize {
            if map.at(x, y) > 0.0 {
                omega.push((x as f64, y as f64));
            }
        }
    }
    let mut near = truth;
    near.u0 += 0.3;
    let lc = curvature_loss(&near, &truth, &omega, &pinhole).unwrap();
    let rpe = evaluate_rpe(&near, &truth, &omega, &pinhole).unwrap();
    check(
        "curvature == rpe on omega+",
        rpe.skipped == 0 && (lc - rpe.mse).abs() < 1e-9,
    );
    check("curvature zero at truth", curvature_loss(&truth, &truth, &omega, &pinhole).unwrap() == 0.0);

    // Finite-difference gradients: analytic for the parameter losses.
    let x0: Vec<f64> = gt.iter().map(|v| v + 0.2).collect();
    let g = finite_diff_grad(
        |x| {
            let mut k = [0.0; 9];
            k.copy_from_slice(x);
            global_param_loss(&k, &gt, &weights.w)
        },
        &x0,
        1e-6,
    );
    let mut global_grad_ok = true;
    for i in 0..9 {
        let analytic = 2.0 * weights.w[i] * (x0[i] - gt[i]) / 9.0;
        if ((g[i] - analytic) / analytic.abs().max(1e-12)).abs() > 1e-4 {
            global_grad_ok = false;
        }
    }
    check("grad L_g analytic", global_grad_ok);

    let x5: Vec<f64> = gt5.iter().map(|v| v + 0.2).collect();
    let g5 = finite_diff_grad(
        |x| {
            let mut k = [0.0; 5];
            k.copy_from_slice(x);
            local_param_loss(&k, &gt5, &w5)
        },
        &x5,
        1e-6,
    );
    let mut local_grad_ok = true;
    for i in 0..5 {
        let analytic = 2.0 * w5[i] * (x5[i] - gt5[i]) / 5.0;
        if ((g5[i] - analytic) / analytic.abs().max(1e-12)).abs() > 1e-4 {
            local_grad_ok = false;
        }
    }
    check("grad L_loc analytic", local_grad_ok);

    // Curvature gradient: symmetric-step self-consistency (Richardson).
    let omega_thin: Vec<(f64, f64)> = omega.iter().step_by(7).copied().collect();
    let lc_at = |du0: f64| {
        let moved = FisheyeParams {
            u0: truth.u0 + du0,
            ..truth
        };
        curvature_loss(&moved, &truth, &omega_thin, &pinhole).unwrap()
    };
    let grad_h = (lc_at(0.3 + 1e-4) - lc_at(0.3 - 1e-4)) / 2e-4;
    let grad_h2 = (lc_at(0.3 + 5e-5) - lc_at(0.3 - 5e-5)) / 1e-4;
    check(
        "grad L_c symmetric-step",
        ((grad_h - grad_h2) / grad_h2.abs().max(1e-12)).abs() < 1e-4,
    );

    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(name, _)| name.as_str())
        .collect();
    report(
        6,
        "loss correctness",
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} checks", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    );
}

#[test]
fn criterion_7_metric_correctness() {
    let mut checks: Vec<(String, bool)> = Vec::new();
    let mut check = |name: &str, ok: bool| checks.push((name.into(), ok));

    let img = test_pattern_rgb(64, 64, 70);
    check("ssim self 1", (ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);

    let a = ImageBuffer::new(16, 16, 1).unwrap();
    let mut b = ImageBuffer::new(16, 16, 1).unwrap();
    b.data.fill(0.5);
    check(
        "psnr closed form",
        (psnr(&a, &b).unwrap() - 10.0 * 4.0f64.log10()).abs() < 1e-9,
    );

    let mut truth_map = LineMap::new(32, 32);
    for x in 4..28 {
        truth_map.set_max(x, 9, 24.0);
    }
    let pr = line_map_pr(&truth_map, &truth_map, 1).unwrap();
    check(
        "pr identity",
        pr.precision == 1.0 && pr.recall == 1.0 && pr.f_value == 1.0,
    );

    // One-pixel shift: perfect at tolerance 1, brute-force overlap at 0.
    let mut shifted = LineMap::new(32, 32);
    for x in 4..28 {
        shifted.set_max(x, 10, 24.0);
    }
    let tolerant = line_map_pr(&shifted, &truth_map, 1).unwrap();
    check("pr shifted tol 1", tolerant.precision == 1.0 && tolerant.recall == 1.0);
    let strict = line_map_pr(&shifted, &truth_map, 0).unwrap();
    let pred_set: std::collections::HashSet<(usize, usize)> = (4..28).map(|x| (x, 10)).collect();
    let truth_set: std::collections::HashSet<(usize, usize)> = (4..28).map(|x| (x, 9)).collect();
    let overlap = pred_set.intersection(&truth_set).count();
    check(
        "pr shifted tol 0 == brute force",
        strict.matched_pred == overlap
            && strict.precision == overlap as f64 / pred_set.len() as f64
            && strict.matched_truth == overlap,
    );

    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(name, _)| name.as_str())
        .collect();
    report(
        7,
        "metric correctness",
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} checks", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    );
}

#[test]
fn criterion_8_line_map_target_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let mut mismatches = 0usize;
    for _scene in 0..50 {
        let segments = random_segments(&mut rng, 64, 64, 5, 12.0);
        let map = render_segment_map(&segments, (64, 64));
        for y in 0..64usize {
            for x in 0..64usize {
                // Brute-force full scan with an independently written
                // point-to-segment distance.
                let mut covered = false;
                for seg in &segments {
                    let (ax, ay) = seg.a;
                    let (bx, by) = seg.b;
                    let (dx, dy) = (bx - ax, by - ay);
                    let t = (((x as f64 - ax) * dx + (y as f64 - ay) * dy) / (dx * dx + dy * dy))
                        .clamp(0.0, 1.0);
                    let (px, py) = (ax + t * dx, ay + t * dy);
                    if (x as f64 - px).hypot(y as f64 - py) < 0.5 {
                        covered = true;
                        break;
                    }
                }
                if covered != (map.at(x, y) > 0.0) {
                    mismatches += 1;
                }
            }
        }
    }
    report(
        8,
        "line-map target oracle",
        mismatches == 0,
        format!("50 scenes x 64x64 px, {mismatches} set mismatches"),
    );
}

#[test]
fn criterion_9_dataset_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    fs::create_dir_all(&images).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let mut annotations = Vec::new();
    for i in 0..2 {
        let name = format!("img{i}.png");
        test_pattern_rgb(320, 320, 900 + i as u64)
            .save_png(images.join(&name))
            .unwrap();
        let segments = random_segments(&mut rng, 320, 320, 8, 90.0);
        annotations.push(serde_json::json!({
            "filename": name,
            "lines": segments.iter().map(|s| s.as_array()).collect::<Vec<_>>(),
        }));
    }
    let ann = dir.path().join("ann.json");
    fs::write(&ann, serde_json::to_string(&annotations).unwrap()).unwrap();

    let sha = |path: &std::path::Path| -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(fs::read(path).unwrap())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    };
    let config = SamplerConfig::default();
    let m1 = build_dataset(&images, &ann, &config, 7, "train", dir.path().join("a")).unwrap();
    let m2 = build_dataset(&images, &ann, &config, 7, "train", dir.path().join("b")).unwrap();
    let (h1, h2) = (sha(&m1), sha(&m2));
    report(
        9,
        "dataset determinism",
        h1 == h2,
        format!("manifest sha256 {}…", &h1[..16]),
    );
}
