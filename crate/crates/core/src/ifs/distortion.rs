//! Sampled distortion constants and the ball-inclusion checks they feed.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::IFSystem;
use crate::error::{Error, Result};
use crate::linalg;
use crate::symbolic::{limit_point, Word};

/// Estimated constants of bounded distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistortionConstants {
    /// Lipschitz constant of `log φ_w′`, as `|φ_w′(x) − φ_w′(y)| / (|φ_w′(x)||x − y|)`.
    pub c_hat: f64,
    /// `sup |φ_w′(x)| / |φ_w′(y)⁻¹|⁻¹`.
    pub k0_hat: f64,
    /// `sup diam φ_w(X) / ‖φ_w′‖`, at least 1.
    pub d_hat: f64,
    pub depth: usize,
    pub sample_count: usize,
}

impl DistortionConstants {
    /// Same constants with `k0_hat` multiplied by `factor`.
    pub fn inflated(mut self, factor: f64) -> Self {
        self.k0_hat *= factor;
        self
    }

    /// The bounded-distortion function `K(t) = 1 + c·K₀·t` used as a proxy
    /// for the distortion at scale `t`.
    pub fn k_proxy(&self, t: f64) -> f64 {
        1.0 + self.c_hat * self.k0_hat * t
    }
}

fn random_word<R: Rng>(system: &IFSystem, max_len: usize, rng: &mut R) -> Word {
    let len = rng.random_range(1..=max_len);
    system.alphabet().random_word(len, rng)
}

/// Exact for similarity systems; otherwise the maximum over `sample_count`
/// random words of length `1..=depth` and random pairs of points of `Ω`.
pub fn distortion_constants(
    system: &IFSystem,
    depth: usize,
    sample_count: usize,
    seed: u64,
) -> Result<DistortionConstants> {
    if depth == 0 {
        return Err(Error::Precondition("depth must be at least 1".into()));
    }
    if system.is_similarity() {
        return Ok(DistortionConstants {
            c_hat: 0.0,
            k0_hat: 1.0,
            d_hat: system.region().base().diameter().max(1.0),
            depth,
            sample_count,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let region = system.region();
    let inputs: Vec<(Word, DVector<f64>, DVector<f64>)> = (0..sample_count)
        .map(|_| {
            let w = random_word(system, depth, &mut rng);
            (w, region.sample_omega(&mut rng), region.sample_omega(&mut rng))
        })
        .collect();
    let seed_pts: Vec<DVector<f64>> = region
        .base()
        .grid(3)
        .iter()
        .map(|p| region.chart().eval(p))
        .collect();

    let per_sample = inputs
        .par_iter()
        .map(|(w, x, y)| -> Result<(f64, f64, f64)> {
            let jx = system.word_jacobian(w, x)?;
            let jy = system.word_jacobian(w, y)?;
            let (nx, cx) = linalg::norm_pair(&jx);
            let (ny, cy) = linalg::norm_pair(&jy);
            let gap = (x - y).norm();
            let c = if gap > 0.0 {
                linalg::op_norm(&(&jx - &jy)) / (nx * gap)
            } else {
                0.0
            };
            let k0 = (nx / cy).max(ny / cx);
            let imgs = seed_pts
                .iter()
                .map(|p| system.eval_word(w, p))
                .collect::<Result<Vec<_>>>()?;
            let mut diam: f64 = 0.0;
            for (i, a) in imgs.iter().enumerate() {
                for b in &imgs[i + 1..] {
                    diam = diam.max((a - b).norm());
                }
            }
            Ok((c, k0, diam / system.sup_norm(w)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let (mut c_hat, mut k0_hat, mut d_raw) = (0.0_f64, 1.0_f64, 0.0_f64);
    for (c, k, d) in per_sample {
        c_hat = c_hat.max(c);
        k0_hat = k0_hat.max(k);
        d_raw = d_raw.max(d);
    }
    Ok(DistortionConstants {
        c_hat,
        k0_hat,
        d_hat: (d_raw * 1.05).max(1.0),
        depth,
        sample_count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InclusionKind {
    /// The inner ball `B(φ_w(x), K₀⁻¹|φ_w′(x)|r)` is not inside `φ_w(B(x,r))`.
    Inner,
    /// `φ_w(B(x,r))` leaves `B(φ_w(x), ‖φ_w′‖r)`.
    Outer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallViolation {
    pub kind: InclusionKind,
    pub word: Word,
    pub x: Vec<f64>,
    pub r: f64,
    /// Relative amount by which the inclusion fails.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallInclusionReport {
    pub trials: usize,
    pub k0_used: f64,
    pub violations: Vec<BallViolation>,
    pub seed: u64,
}

const SPHERE_SAMPLES: usize = 12;
const BALL_SAMPLES: usize = 12;
const SLACK: f64 = 1e-12;

/// Random trials of both ball inclusions around points of the limit set.
/// The inner inclusion is tested through the image of the sphere
/// `∂B(x, r)`, which must stay outside the claimed inner ball.
pub fn check_ball_inclusions(
    system: &IFSystem,
    constants: &DistortionConstants,
    trial_count: usize,
    seed: u64,
) -> Result<BallInclusionReport> {
    let d = system.dim();
    let r_max = system.boundary_distance();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trials: Vec<(Word, Word, f64, u64)> = (0..trial_count)
        .map(|_| {
            let w = random_word(system, 3, &mut rng);
            let code = system.alphabet().random_word(16, &mut rng);
            let r = r_max * rng.random_range(0.01..0.99);
            (w, code, r, rng.random())
        })
        .collect();
    let k0 = constants.k0_hat;

    let found = trials
        .par_iter()
        .map(|(w, code, r, sub_seed)| -> Result<Vec<BallViolation>> {
            let mut rng = ChaCha8Rng::seed_from_u64(*sub_seed);
            let x = limit_point(system, code)?;
            let (fx, jx) = (system.eval_word(w, &x)?, system.word_jacobian(w, &x)?);
            let inner = linalg::op_norm(&jx) * r / k0;
            let outer = system.sup_norm(w)? * r;
            let mut out = Vec::new();
            // Rounding in the coordinates, not in r, dominates for tiny balls.
            let fuzz = 16.0 * f64::EPSILON * (1.0 + fx.amax());
            let mut worst_inner: f64 = 0.0;
            let mut worst_outer: f64 = 0.0;
            for k in 0..SPHERE_SAMPLES + BALL_SAMPLES {
                let dir = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut rng))).normalize();
                let on_sphere = k < SPHERE_SAMPLES;
                let rad = if on_sphere { *r } else { r * rng.random::<f64>().powf(1.0 / d as f64) };
                let img = system.eval_word(w, &(&x + dir * rad))?;
                let dist = (img - &fx).norm();
                if on_sphere {
                    worst_inner = worst_inner.max((inner - dist - fuzz) / inner);
                }
                worst_outer = worst_outer.max((dist - outer - fuzz) / outer);
            }
            let at = x.iter().copied().collect::<Vec<_>>();
            if worst_inner > SLACK {
                out.push(BallViolation {
                    kind: InclusionKind::Inner,
                    word: w.clone(),
                    x: at.clone(),
                    r: *r,
                    excess: worst_inner,
                });
            }
            if worst_outer > SLACK {
                out.push(BallViolation {
                    kind: InclusionKind::Outer,
                    word: w.clone(),
                    x: at,
                    r: *r,
                    excess: worst_outer,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BallInclusionReport {
        trials: trial_count,
        k0_used: k0,
        violations: found.into_iter().flatten().collect(),
        seed,
    })
}
