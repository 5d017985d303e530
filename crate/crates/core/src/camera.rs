//! Polynomial fisheye projection model.
//!
//! The radial profile is an odd polynomial of degree nine,
//! `r(θ) = k1·θ + k2·θ³ + k3·θ⁵ + k4·θ⁷ + k5·θ⁹`, mapping the incidence
//! angle θ (radians from the optical axis) to a distance in image units.
//! Pixel coordinates follow `u = m_u · r·cosφ + u0`, `v = m_v · r·sinφ + v0`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Deserialize;

use crate::error::{Error, Result};

/// Default upper incidence angle (about 77°, a 155° field of view).
pub const DEFAULT_THETA_MAX: f64 = 1.35;

/// Incidence/azimuth pair describing a viewing ray.
///
/// `theta` is the angle from the optical axis, `phi` the in-plane azimuth
/// about the principal point, kept in `(-π, π]`. The ray through the axis
/// (`theta == 0`) carries `phi == 0` by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angle {
    pub theta: f64,
    pub phi: f64,
}

impl Angle {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self {
            theta,
            phi: normalize_phi(phi),
        }
    }
}

/// Wrap an azimuth into `(-π, π]`.
pub fn normalize_phi(phi: f64) -> f64 {
    let wrapped = phi.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Distortion-free perspective frame used as the rectification target.
///
/// The principal point sits at the raster center `(width/2, height/2)`;
/// a point at angle θ lands at radius `f·tanθ` from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualPinhole {
    /// Focal length in pixels of the rectified raster.
    pub f: f64,
    pub width: usize,
    pub height: usize,
}

impl VirtualPinhole {
    pub fn new(f: f64, width: usize, height: usize) -> Result<Self> {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::InvalidParams(format!("focal length {f} must be positive")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidParams("raster must be at least 1x1".into()));
        }
        Ok(Self { f, width, height })
    }

    /// Focal length such that rays up to `theta_span` fit inside the
    /// smaller half-extent of a `width`x`height` raster.
    pub fn fitting_fov(theta_span: f64, width: usize, height: usize) -> Self {
        let half = 0.5 * width.min(height) as f64;
        let span = theta_span.clamp(0.05, 1.49);
        Self {
            f: half / span.tan(),
            width,
            height,
        }
    }

    /// Principal point of the rectified raster.
    pub fn center(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }
}

fn default_theta_max() -> f64 {
    DEFAULT_THETA_MAX
}

/// The nine-parameter fisheye model: five radial coefficients, the pixel
/// densities `m_u`/`m_v` (pixels per image unit), and the principal point.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct FisheyeParams {
    /// Radial polynomial coefficients `k1..k5`.
    pub k: [f64; 5],
    pub mu: f64,
    pub mv: f64,
    pub u0: f64,
    pub v0: f64,
    /// Largest incidence angle the profile is declared (and checked) on.
    #[serde(default = "default_theta_max")]
    pub theta_max: f64,
}

impl FisheyeParams {
    /// Pure equidistant model `r = k1·θ`.
    pub fn equidistant(k1: f64, mu: f64, mv: f64, u0: f64, v0: f64, theta_max: f64) -> Self {
        Self {
            k: [k1, 0.0, 0.0, 0.0, 0.0],
            mu,
            mv,
            u0,
            v0,
            theta_max,
        }
    }

    /// Degree-nine approximation of the perspective law `r = f·tanθ`
    /// (the truncated tangent series), with unit pixel density. Useful as
    /// a zero-distortion gauge: for small θ it reproduces a pinhole view.
    pub fn perspective_gauge(f: f64, u0: f64, v0: f64, theta_max: f64) -> Self {
        Self {
            k: [
                f,
                f / 3.0,
                f * 2.0 / 15.0,
                f * 17.0 / 315.0,
                f * 62.0 / 2835.0,
            ],
            mu: 1.0,
            mv: 1.0,
            u0,
            v0,
            theta_max,
        }
    }

    /// Parameter vector in the order `(k1..k5, m_u, m_v, u0, v0)`.
    pub fn as_vector(&self) -> [f64; 9] {
        [
            self.k[0], self.k[1], self.k[2], self.k[3], self.k[4], self.mu, self.mv, self.u0,
            self.v0,
        ]
    }

    pub fn from_vector(v: &[f64; 9], theta_max: f64) -> Self {
        Self {
            k: [v[0], v[1], v[2], v[3], v[4]],
            mu: v[5],
            mv: v[6],
            u0: v[7],
            v0: v[8],
            theta_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.as_vector().iter().all(|x| x.is_finite()) && self.theta_max.is_finite();
        if !finite {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if !(self.mu > 0.0 && self.mv > 0.0) {
            return Err(Error::InvalidParams("pixel densities must be positive".into()));
        }
        if !(self.k[0] > 0.0) {
            return Err(Error::InvalidParams("k1 must be positive".into()));
        }
        if !(self.theta_max > 0.0 && self.theta_max < FRAC_PI_2) {
            return Err(Error::InvalidParams(format!(
                "theta_max {} outside (0, pi/2)",
                self.theta_max
            )));
        }
        Ok(())
    }

    fn radial_unchecked(&self, theta: f64) -> f64 {
        let t = theta * theta;
        theta * (self.k[0] + t * (self.k[1] + t * (self.k[2] + t * (self.k[3] + t * self.k[4]))))
    }

    /// `r(θ)` in image units. Errors outside `[0, theta_max]`.
    pub fn radial_profile(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() || theta < 0.0 || theta > self.theta_max {
            return Err(Error::ThetaOutOfRange {
                theta,
                theta_max: self.theta_max,
            });
        }
        Ok(self.radial_unchecked(theta))
    }

    /// `dr/dθ = k1 + 3k2θ² + 5k3θ⁴ + 7k4θ⁶ + 9k5θ⁸`.
    pub fn radial_derivative(&self, theta: f64) -> f64 {
        let t = theta * theta;
        self.k[0]
            + t * (3.0 * self.k[1] + t * (5.0 * self.k[2] + t * (7.0 * self.k[3] + t * 9.0 * self.k[4])))
    }

    /// Largest representable radius, `r(theta_max)`, in image units.
    pub fn max_radius(&self) -> f64 {
        self.radial_unchecked(self.theta_max)
    }

    /// True iff the radial profile is strictly increasing on `[0, theta_max]`.
    ///
    /// Checks the derivative on a 1e-3 rad grid and at the interior critical
    /// points of the derivative polynomial (exact in θ², so no sign dip can
    /// hide between grid nodes).
    pub fn check_monotonic(&self, theta_max: f64) -> bool {
        if !(theta_max > 0.0 && theta_max < FRAC_PI_2) {
            return false;
        }
        if !(self.k[0] > 0.0) || self.k.iter().any(|x| !x.is_finite()) {
            return false;
        }
        let steps = (theta_max / 1e-3).ceil() as usize;
        for i in 0..=steps {
            let theta = theta_max * i as f64 / steps as f64;
            if self.radial_derivative(theta) <= 0.0 {
                return false;
            }
        }
        // dr/dθ is q(s) = k1 + 3k2·s + 5k3·s² + 7k4·s³ + 9k5·s⁴ with s = θ².
        // Its interior minima sit at the real roots of q'(s).
        let s_max = theta_max * theta_max;
        let roots = real_roots_cubic(
            36.0 * self.k[4],
            21.0 * self.k[3],
            10.0 * self.k[2],
            3.0 * self.k[1],
        );
        for s in roots {
            if s > 0.0 && s < s_max && self.radial_derivative(s.sqrt()) <= 0.0 {
                return false;
            }
        }
        true
    }

    /// Convenience for [`check_monotonic`](Self::check_monotonic) at the
    /// model's own `theta_max`.
    pub fn is_monotonic(&self) -> bool {
        self.check_monotonic(self.theta_max)
    }

    /// Invert the radial profile: the unique θ with `r(θ) = r_d`.
    ///
    /// Newton iteration seeded at `r_d/k1` with a bisection fallback that
    /// keeps the iterate bracketed in `[0, theta_max]`.
    pub fn radial_inverse(&self, r_d: f64) -> Result<f64> {
        if !self.is_monotonic() {
            return Err(Error::NonMonotonicProfile);
        }
        let max_radius = self.max_radius();
        if !r_d.is_finite() || r_d < 0.0 || r_d > max_radius {
            return Err(Error::RadiusOutOfRange {
                radius: r_d,
                max_radius,
            });
        }
        if r_d == 0.0 {
            return Ok(0.0);
        }
        let tol = 1e-14 * r_d.max(1.0);
        let mut lo = 0.0_f64;
        let mut hi = self.theta_max;
        let mut theta = (r_d / self.k[0]).clamp(0.0, self.theta_max);
        for _ in 0..100 {
            let f = self.radial_unchecked(theta) - r_d;
            if f.abs() <= tol {
                return Ok(theta);
            }
            if f > 0.0 {
                hi = theta;
            } else {
                lo = theta;
            }
            let df = self.radial_derivative(theta);
            let mut next = theta - f / df;
            if !(df > 0.0) || !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - theta).abs() < 1e-13 {
                return Ok(next);
            }
            theta = next;
        }
        Ok(theta)
    }

    /// Project a viewing ray to fisheye pixel coordinates.
    pub fn project_ray(&self, ray: Angle) -> Result<(f64, f64)> {
        let r = self.radial_profile(ray.theta)?;
        Ok((
            self.mu * r * ray.phi.cos() + self.u0,
            self.mv * r * ray.phi.sin() + self.v0,
        ))
    }

    /// Recover the viewing ray behind a fisheye pixel.
    pub fn unproject_pixel(&self, u: f64, v: f64) -> Result<Angle> {
        let dx = (u - self.u0) / self.mu;
        let dy = (v - self.v0) / self.mv;
        let r_d = dx.hypot(dy);
        let theta = self.radial_inverse(r_d)?;
        let phi = if r_d == 0.0 { 0.0 } else { dy.atan2(dx) };
        Ok(Angle::new(theta, phi))
    }

    /// Map a rectified-raster pixel to the fisheye pixel it distorts to.
    ///
    /// The rectified pixel is recentered on the pinhole principal point,
    /// read as a perspective observation (`θ = arctan(ρ/f)`), and projected
    /// through the fisheye model.
    pub fn forward_map(&self, x: f64, y: f64, pinhole: &VirtualPinhole) -> Result<(f64, f64)> {
        let (cx, cy) = pinhole.center();
        let px = x - cx;
        let py = y - cy;
        let rho = px.hypot(py);
        let theta = (rho / pinhole.f).atan();
        let phi = if rho == 0.0 { 0.0 } else { py.atan2(px) };
        self.project_ray(Angle::new(theta, phi))
    }

    /// Serialize to the canonical JSON object with doubles rendered at 17
    /// significant digits (lossless for IEEE-754 binary64).
    pub fn to_json_string(&self) -> String {
        let f = fmt_f64_17;
        format!(
            r#"{{"k":[{},{},{},{},{}],"mu":{},"mv":{},"u0":{},"v0":{},"theta_max":{}}}"#,
            f(self.k[0]),
            f(self.k[1]),
            f(self.k[2]),
            f(self.k[3]),
            f(self.k[4]),
            f(self.mu),
            f(self.mv),
            f(self.u0),
            f(self.v0),
            f(self.theta_max)
        )
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let params: FisheyeParams = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }
}

/// One-before-the-point scientific notation with 16 fractional digits,
/// i.e. 17 significant digits. Valid as a JSON number for finite inputs.
pub fn fmt_f64_17(x: f64) -> String {
    format!("{x:.16e}")
}

fn real_roots_quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    const EPS: f64 = 1e-300;
    if a.abs() < EPS {
        if b.abs() < EPS {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    // Citardauq order for the smaller-magnitude root.
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = vec![q / a];
    if q.abs() > EPS {
        roots.push(c / q);
    } else {
        roots.push(0.0);
    }
    roots
}

/// Real roots of `a·s³ + b·s² + c·s + d`.
fn real_roots_cubic(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    const EPS: f64 = 1e-300;
    if a.abs() < EPS {
        return real_roots_quadratic(b, c, d);
    }
    let b = b / a;
    let c = c / a;
    let d = d / a;
    // Depress: s = t - b/3 gives t³ + p·t + q.
    let p = c - b * b / 3.0;
    let q = 2.0 * b.powi(3) / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if disc > 0.0 {
        let sq = disc.sqrt();
        vec![(-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt() + shift]
    } else {
        let r = (-p / 3.0).max(0.0).sqrt();
        if r < 1e-150 {
            return vec![shift];
        }
        let phi = (-q / (2.0 * r.powi(3))).clamp(-1.0, 1.0).acos();
        (0..3)
            .map(|k| 2.0 * r * ((phi + 2.0 * PI * k as f64) / 3.0).cos() + shift)
            .collect()
    }
}
