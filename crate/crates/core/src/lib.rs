//! Fisheye distortion toolkit: a polynomial radial camera model, synthetic
//! distorted-line dataset generation, bilinear rectification, plumb-line
//! parameter estimation, and an evaluation metric suite.

pub mod calib;
pub mod camera;
mod error;
pub mod losses;
pub mod metrics;
pub mod raster;
pub mod rectify;
pub mod synth;

pub use calib::{
    estimate_params, evaluate_rpe, fit_line_tls, init_params, straightness_residuals,
    valid_pixel_domain, CalibProblem, CalibResult, LineFit, RpeResult, SolveOptions,
    DOMAIN_EXIT_PENALTY_PX,
};
pub use camera::{normalize_phi, Angle, FisheyeParams, VirtualPinhole, DEFAULT_THETA_MAX};
pub use error::{Error, Result};
pub use losses::{
    combine_params, curvature_loss, finite_diff_grad, global_param_loss, line_map_loss,
    local_param_loss, total_loss, LineMapLoss, LossBreakdown, LossWeights, ParamHeads,
};
pub use metrics::{line_map_pr, psnr, ssim, PRResult};
pub use raster::{test_pattern_rgb, ImageBuffer, LineMap};
pub use rectify::{
    build_remap, rectify_image, rectify_line_map, rectify_point, rectify_points, RemapGrid,
};
pub use synth::{
    build_dataset, derive_seed, distort_image, distort_segments, generate_sample,
    load_annotations, point_segment_distance, random_segments, render_polyline_map,
    render_segment_map, sample_params, AnnotationRecord, DatasetSample, GenConfig, LineSegment,
    Manifest, Polyline, SampleRecord, SamplerConfig,
};
