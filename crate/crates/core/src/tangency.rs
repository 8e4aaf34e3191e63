//! Tangent planes of limit sets: weak `(t,l)`-tangent ratios, cone
//! containment, images of small cones, spread witnesses, C¹ compatibility
//! and the rigidity classifier built from them.
//!
//! Masses here are point masses: a cylinder counts when its representative
//! satisfies the condition. Radii are always kept above the cylinder
//! resolution so this is a fair surrogate for `m`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grassmann::{self, fit_plane, map_subspace, Cone, Subspace};
use crate::ifs::{distortion_constants, DistortionConstants, IFSystem};
use crate::linalg;
use crate::measure::{
    ahlfors_constant, conformal_weights, estimate_dimension, weight_exponent, CylinderWeights, MassOracle,
    DEFAULT_DIMENSION_TOL, RESOLUTION_FACTOR,
};
use crate::symbolic::{limit_point, Word};

/// Default δ-grid of the classifier.
pub const DEFAULT_DELTAS: [f64; 4] = [0.04, 0.1, 0.25, 0.5];

/// A plane is tangent-like when its ratios fall this far below the ratio of
/// a random plane at the largest radius.
pub const DEFAULT_THRESHOLD_FACTOR: f64 = 1e-3;

/// Points closer than this to the moving vertex are skipped in the C¹ check.
const C1_EXCLUSION: f64 = 1e-9;

fn to_vec(x: &DVector<f64>) -> Vec<f64> {
    x.iter().copied().collect()
}

/// `|Q x|` for a precomputed complement projection.
fn apply_norm(q: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (q * x).norm()
}

/// `r_k = r_max·2^{−k}` down to `floor`.
pub fn radius_grid(r_max: f64, floor: f64) -> Vec<f64> {
    let mut radii = Vec::new();
    let mut r = r_max;
    while r >= floor && radii.len() < 64 {
        radii.push(r);
        r *= 0.5;
    }
    radii
}

/// Candidate planes: evenly spaced lines in the plane, otherwise the
/// coordinate planes followed by random ones.
pub fn plane_grid<R: Rng + ?Sized>(d: usize, l: usize, count: usize, rng: &mut R) -> Result<Vec<Subspace>> {
    if d == 2 && l == 1 {
        return Ok((0..count)
            .map(|k| Subspace::line_2d(std::f64::consts::PI * k as f64 / count as f64))
            .collect());
    }
    let mut planes = Vec::with_capacity(count);
    if l == 1 || l == d - 1 {
        for axis in 0..d {
            let axes: Vec<usize> = if l == 1 {
                vec![axis]
            } else {
                (0..d).filter(|&k| k != axis).collect()
            };
            planes.push(Subspace::coordinate(d, &axes)?);
        }
    }
    while planes.len() < count {
        planes.push(Subspace::random(d, l, rng)?);
    }
    planes.truncate(count.max(1));
    Ok(planes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakTangentResult {
    pub apex: Vec<f64>,
    pub plane: Subspace,
    pub delta: f64,
    pub t: f64,
    /// `(r, m_n(B(a,r) ∖ V_a(δr)) / r^t)` for decreasing `r`.
    pub ratios: Vec<(f64, f64)>,
    pub min_ratio: f64,
}

fn check_radii(radii: &[f64], floor: f64) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::Precondition("empty radius grid".into()));
    }
    if radii.windows(2).any(|w| !(w[1] < w[0])) || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Precondition("radii must be positive and strictly decreasing".into()));
    }
    let smallest = *radii.last().expect("nonempty");
    if smallest < floor {
        return Err(Error::Resolution { radius: smallest, floor });
    }
    Ok(())
}

/// Representatives near an apex, as offsets with their weights.
struct Neighbourhood {
    offsets: Vec<DVector<f64>>,
    dists: Vec<f64>,
    weights: Vec<f64>,
}

impl Neighbourhood {
    fn new(weights: &CylinderWeights, apex: &DVector<f64>, radius: f64) -> Self {
        let mut hood = Self {
            offsets: Vec::new(),
            dists: Vec::new(),
            weights: Vec::new(),
        };
        for (p, w) in weights.points().iter().zip(weights.weights()) {
            let o = p - apex;
            let dist = o.norm();
            if dist < radius {
                hood.offsets.push(o);
                hood.dists.push(dist);
                hood.weights.push(*w);
            }
        }
        hood
    }

    /// Ratios for every `(δ, r)`: `out[i][k]` is δ = `deltas[i]`, r = `radii[k]`.
    fn ratio_table(&self, plane: &Subspace, deltas: &[f64], radii: &[f64], t: f64) -> Vec<Vec<f64>> {
        let q = plane.complement_projection();
        let off: Vec<f64> = self.offsets.iter().map(|o| apply_norm(&q, o)).collect();
        deltas
            .iter()
            .map(|&delta| {
                radii
                    .iter()
                    .map(|&r| {
                        let mass: f64 = self
                            .dists
                            .iter()
                            .zip(&off)
                            .zip(&self.weights)
                            .filter(|((&dist, &o), _)| dist < r && o >= delta * r)
                            .fold(0.0, |acc, (_, w)| acc + w);
                        mass / r.powf(t)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Point-mass weak tangent quotients on a radius grid.
pub fn weak_tangent_ratios(
    weights: &CylinderWeights,
    a: &DVector<f64>,
    v: &Subspace,
    delta: f64,
    t: f64,
    radii: &[f64],
) -> Result<WeakTangentResult> {
    if a.len() != weights.dim() || v.dim_ambient() != weights.dim() {
        return Err(Error::Dimension("apex, plane and weights differ in dimension".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Precondition(format!("δ = {delta} not in (0,1)")));
    }
    check_radii(radii, weights.max_radius_bound())?;
    let hood = Neighbourhood::new(weights, a, radii[0]);
    let row = hood.ratio_table(v, &[delta], radii, t).remove(0);
    let min_ratio = row.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(WeakTangentResult {
        apex: to_vec(a),
        plane: v.clone(),
        delta,
        t,
        ratios: radii.iter().copied().zip(row).collect(),
        min_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub holds: bool,
    pub checked: usize,
    pub skipped_near_apex: usize,
    pub violator_count: usize,
    /// The first few violators.
    pub violators: Vec<Vec<f64>>,
    /// Whether `exclusion ≤ r/10`, i.e. the points resolve the ball.
    pub resolved: bool,
}

const MAX_LISTED_VIOLATORS: usize = 16;

/// Tests `E ∩ B(a,r) ⊂ X(a,V,δ)` on a point sample, skipping points within
/// `exclusion` of the apex where the open cone is undecidable.
pub fn cone_containment_check(
    points: &[DVector<f64>],
    exclusion: f64,
    a: &DVector<f64>,
    v: &Subspace,
    delta: f64,
    r: f64,
) -> Result<ContainmentReport> {
    let cone = Cone::new(a, v.clone(), delta, None)?;
    let mut report = ContainmentReport {
        holds: true,
        checked: 0,
        skipped_near_apex: 0,
        violator_count: 0,
        violators: Vec::new(),
        resolved: exclusion <= r / 10.0,
    };
    for p in points {
        let dist = (p - a).norm();
        if dist >= r {
            continue;
        }
        if dist <= exclusion {
            report.skipped_near_apex += 1;
            continue;
        }
        report.checked += 1;
        if !cone.contains(p) {
            report.holds = false;
            report.violator_count += 1;
            if report.violators.len() < MAX_LISTED_VIOLATORS {
                report.violators.push(to_vec(p));
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneAssignment {
    pub point: Vec<f64>,
    pub plane: Subspace,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentialityCertificate {
    pub delta: f64,
    pub r: f64,
    pub l: usize,
    pub depth: usize,
    pub assignments: Vec<PlaneAssignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentialityFailure {
    pub delta: f64,
    /// Smallest radius tried.
    pub r: f64,
    pub point: Vec<f64>,
    pub best_plane: Option<Subspace>,
    pub violator_count: usize,
    pub violators: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TangentialityOutcome {
    Certified(TangentialityCertificate),
    Failed(TangentialityFailure),
}

/// Limit points `π(code, 0, 0, …)` of random codes, with their codes.
pub fn sample_limit_points(system: &IFSystem, count: usize, seed: u64) -> Result<Vec<(Word, DVector<f64>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let code = system.alphabet().random_word(24, &mut rng);
            let x = limit_point(system, &code)?;
            Ok((code, x))
        })
        .collect()
}

fn fitted_plane(
    weights: &CylinderWeights,
    a: &DVector<f64>,
    r: f64,
    exclusion: f64,
    l: usize,
) -> Result<Option<Subspace>> {
    let hood = Neighbourhood::new(weights, a, r);
    let (pts, ws): (Vec<DVector<f64>>, Vec<f64>) = hood
        .offsets
        .iter()
        .zip(&hood.weights)
        .zip(&hood.dists)
        .filter(|(_, d)| **d > exclusion)
        .map(|((o, w), _)| (o + a, *w))
        .unzip();
    match fit_plane(&pts, &ws, a, l) {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateCloud { rank: 0, .. }) => Ok(None),
        Err(Error::DegenerateCloud { .. }) => {
            // Too few directions to pin an l-plane; complete the fit of lower rank.
            let lower = fit_plane(&pts, &ws, a, 1)?;
            let mut basis = lower.basis().clone();
            let d = a.len();
            for axis in 0..d {
                if basis.ncols() == l {
                    break;
                }
                let mut e = DVector::zeros(d);
                e[axis] = 1.0;
                let cand = basis.clone().insert_column(basis.ncols(), 0.0);
                let mut m = cand;
                m.set_column(basis.ncols(), &e);
                if linalg::orthonormalize_columns(&m, 1e-9).is_some() {
                    basis = m;
                }
            }
            Subspace::new(basis).map(Some)
        }
        Err(e) => Err(e),
    }
}

/// Searches the radius grid from the top for a scale where every sampled
/// apex has a fitted plane whose cone holds all nearby representatives.
pub fn uniform_tangentiality(
    system: &IFSystem,
    weights: &CylinderWeights,
    l: usize,
    delta: f64,
    apex_sample: usize,
    seed: u64,
) -> Result<TangentialityOutcome> {
    let d = system.dim();
    if l == 0 || l >= d {
        return Err(Error::Dimension(format!("need 0 < l < d, got l = {l}, d = {d}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Precondition(format!("δ = {delta} not in (0,1)")));
    }
    let exclusion = weights.max_radius_bound();
    let radii = radius_grid(system.rho0(), RESOLUTION_FACTOR * exclusion);
    check_radii(&radii, exclusion)?;
    let apexes = sample_limit_points(system, apex_sample.max(1), seed)?;

    let mut last_failure = None;
    for &r in &radii {
        let results = apexes
            .par_iter()
            .map(|(_, a)| -> Result<(Option<Subspace>, ContainmentReport)> {
                let plane = fitted_plane(weights, a, r, exclusion, l)?;
                let probe = plane.clone().unwrap_or(Subspace::coordinate(d, &(0..l).collect::<Vec<_>>())?);
                let rep = cone_containment_check(weights.points(), exclusion, a, &probe, delta, r)?;
                Ok((Some(probe), rep))
            })
            .collect::<Result<Vec<_>>>()?;
        match results.iter().position(|(_, rep)| !rep.holds) {
            None => {
                return Ok(TangentialityOutcome::Certified(TangentialityCertificate {
                    delta,
                    r,
                    l,
                    depth: weights.depth(),
                    assignments: apexes
                        .iter()
                        .zip(results)
                        .map(|((_, a), (plane, rep))| PlaneAssignment {
                            point: to_vec(a),
                            plane: plane.expect("probe plane"),
                            checked: rep.checked,
                        })
                        .collect(),
                }));
            }
            Some(k) => {
                let (plane, rep) = &results[k];
                last_failure = Some(TangentialityFailure {
                    delta,
                    r,
                    point: to_vec(&apexes[k].1),
                    best_plane: plane.clone(),
                    violator_count: rep.violator_count,
                    violators: rep.violators.clone(),
                });
            }
        }
    }
    Ok(TangentialityOutcome::Failed(last_failure.expect("at least one radius")))
}

/// `δ`, `ϱ` and the admissible radius `r₀` of the small-angle lemma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallAngleParams {
    pub delta: f64,
    pub rho: f64,
    pub r0: f64,
}

impl SmallAngleParams {
    /// `r₀` is the least of `dist(E, ∂Ω)`, `δ^{1/2}c⁻¹(((ϱ+1)/2)^{1/2} − ϱ^{1/2})`
    /// and the largest `t` with `K(t) ≤ (2/(ϱ+1))^{1/2}`; only the first
    /// applies when `c = 0`.
    pub fn new(delta: f64, rho: f64, constants: &DistortionConstants, boundary_distance: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Precondition(format!("δ = {delta} not in (0,1)")));
        }
        if !(0.5..1.0).contains(&rho) {
            return Err(Error::Precondition(format!("ϱ = {rho} not in [1/2, 1)")));
        }
        let mut r0 = boundary_distance;
        let c = constants.c_hat;
        if c > 0.0 {
            r0 = r0.min(delta.sqrt() / c * (((rho + 1.0) / 2.0).sqrt() - rho.sqrt()));
            let k_cap = (2.0 / (rho + 1.0)).sqrt();
            r0 = r0.min((k_cap - 1.0) / (c * constants.k0_hat));
        }
        Ok(Self { delta, rho, r0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallAngleViolation {
    pub word: Word,
    pub apex: Vec<f64>,
    pub point: Vec<f64>,
    pub r: f64,
    /// `|Q_{V′}(φ(x) − φ(a))| / |φ(x) − φ(a)| − δ^{1/2}`, or the relative
    /// excess over the radius when the image leaves the ball.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallAngleReport {
    pub trials: usize,
    pub params: SmallAngleParams,
    pub violations: Vec<SmallAngleViolation>,
}

const CONE_SLACK: f64 = 1e-12;

fn random_in_cone<R: Rng + ?Sized>(a: &DVector<f64>, v: &Subspace, delta: f64, r: f64, rng: &mut R) -> DVector<f64> {
    let d = a.len();
    let q = v.complement_projection();
    loop {
        let dir = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng))).normalize();
        if apply_norm(&q, &dir) < delta.sqrt() {
            let len = r * rng.random::<f64>().powf(1.0 / d as f64);
            if len > 0.0 {
                return a + dir * len;
            }
        }
    }
}

fn image_violation(
    system: &IFSystem,
    word: &Word,
    a: &DVector<f64>,
    v: &Subspace,
    delta: f64,
    r: f64,
    x: &DVector<f64>,
) -> Result<Option<f64>> {
    let fa = system.eval_word(word, a)?;
    let fx = system.eval_word(word, x)?;
    let image_plane = map_subspace(&system.word_jacobian(word, a)?, v)?;
    let radius = system.sup_norm(word)? * r;
    let diff = &fx - &fa;
    let len = diff.norm();
    let fuzz = 16.0 * f64::EPSILON * (1.0 + fx.amax());
    if len - fuzz > radius * (1.0 + CONE_SLACK) {
        return Ok(Some((len - radius) / radius));
    }
    if len == 0.0 {
        return Ok(None);
    }
    let angle = image_plane.distance_norm(&diff) / len;
    let excess = angle - delta.sqrt();
    Ok((excess > CONE_SLACK + fuzz / len).then_some(excess))
}

/// Maps random points of `X(a, r, V, ϱδ)` by `φ_word` and checks them
/// against `X(φ(a), ‖φ′‖r, φ′(a)V, δ)`.
#[allow(clippy::too_many_arguments)]
pub fn small_angle_image_check(
    system: &IFSystem,
    word: &Word,
    a: &DVector<f64>,
    v: &Subspace,
    params: &SmallAngleParams,
    r: f64,
    trials: usize,
    seed: u64,
) -> Result<SmallAngleReport> {
    if !(r > 0.0 && r < params.r0) {
        return Err(Error::Precondition(format!("need 0 < r < r0 = {}, got r = {r}", params.r0)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    for _ in 0..trials {
        let x = random_in_cone(a, v, params.rho * params.delta, r, &mut rng);
        if let Some(excess) = image_violation(system, word, a, v, params.delta, r, &x)? {
            violations.push(SmallAngleViolation {
                word: word.clone(),
                apex: to_vec(a),
                point: to_vec(&x),
                r,
                excess,
            });
        }
    }
    Ok(SmallAngleReport {
        trials,
        params: *params,
        violations,
    })
}

/// Random `(word, apex, plane, r, point)` trials of the small-angle lemma:
/// words of length 1..=3, apexes in `E`, uniform planes of dimension `l`
/// and `r` uniform in `(0, r0)`.
pub fn small_angle_trials(
    system: &IFSystem,
    params: &SmallAngleParams,
    l: usize,
    trials: usize,
    seed: u64,
) -> Result<SmallAngleReport> {
    let d = system.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<(Word, Word, Subspace, f64, u64)> = (0..trials)
        .map(|_| -> Result<_> {
            let len = rng.random_range(1..=3);
            let word = system.alphabet().random_word(len, &mut rng);
            let code = system.alphabet().random_word(16, &mut rng);
            let v = Subspace::random(d, l, &mut rng)?;
            let r = params.r0 * rng.random_range(1e-3..1.0);
            Ok((word, code, v, r, rng.random()))
        })
        .collect::<Result<_>>()?;
    let found = inputs
        .par_iter()
        .map(|(word, code, v, r, sub)| -> Result<Option<SmallAngleViolation>> {
            let a = limit_point(system, code)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*sub);
            let x = random_in_cone(&a, v, params.rho * params.delta, *r, &mut rng);
            Ok(image_violation(system, word, &a, v, params.delta, *r, &x)?.map(|excess| SmallAngleViolation {
                word: word.clone(),
                apex: to_vec(&a),
                point: to_vec(&x),
                r: *r,
                excess,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SmallAngleReport {
        trials,
        params: *params,
        violations: found.into_iter().flatten().collect(),
    })
}

/// The ball `B(φ_{i|n}(z), λr/8)` that keeps mass away from the plane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpreadWitness {
    pub apex: Vec<f64>,
    pub plane: Subspace,
    pub r: f64,
    pub delta: f64,
    pub rho: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `V` pulled back to `x` along the code of the apex.
    pub pulled_back_plane: Subspace,
    pub z: String,
    pub n: usize,
    pub word: Word,
    pub eta: f64,
    pub lambda: f64,
    pub center: Vec<f64>,
    pub radius: f64,
    /// `|Q_V(φ_{i|n}(z) − a)|`, to be compared with `λr/2`.
    pub separation: f64,
    pub inside_ball: bool,
    pub avoids_tube: bool,
    pub t: f64,
    pub ahlfors_constant: f64,
    pub mass: f64,
    pub mass_floor: f64,
    pub mass_ok: bool,
}

impl SpreadWitness {
    pub fn is_valid(&self) -> bool {
        self.inside_ball && self.avoids_tube && self.mass_ok
    }
}

/// `η = min{1/2, (1 − ϱ^{1/2})δ^{1/2}/2}`.
pub fn spread_eta(delta: f64, rho: f64) -> f64 {
    (0.5f64).min((1.0 - rho.sqrt()) * delta.sqrt() / 2.0)
}

/// Builds the ball of the spreading argument at apex `a = π(code_of_a, 0, 0, …)`
/// from a pair `x, y ∈ E` with `y` outside the pulled-back cone at `x`.
#[allow(clippy::too_many_arguments)]
pub fn spread_witness(
    system: &IFSystem,
    weights: &CylinderWeights,
    constants: &DistortionConstants,
    a: &DVector<f64>,
    code_of_a: &Word,
    v: &Subspace,
    r: f64,
    delta: f64,
    rho: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<SpreadWitness> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Precondition(format!("δ = {delta} not in (0,1)")));
    }
    if !(rho < 1.0 && rho > 1.0 / (delta + 1.0)) {
        return Err(Error::Precondition(format!("need 1/(δ+1) < ϱ < 1, got ϱ = {rho}")));
    }
    if !(r > 0.0) {
        return Err(Error::Precondition(format!("radius {r} must be positive")));
    }
    let t = weights.t();
    let d_const = system.diameter_constant();
    let target = r / (2.0 * d_const);
    let mut n = 0;
    let word = loop {
        n += 1;
        let word = code_of_a.padded(n).prefix(n);
        if system.sup_norm(&word)? < target {
            break word;
        }
        if n > 200 {
            return Err(Error::Precondition(format!("no level reaches ‖φ′‖ < {target}")));
        }
    };
    let code_point = limit_point(system, code_of_a)?;
    if (code_point - a).norm() > 1e-9 * (1.0 + a.amax()) {
        return Err(Error::Precondition("apex is not π(code_of_a, 0, 0, …)".into()));
    }

    let jx = system.word_jacobian(&word, x)?;
    let back = jx
        .clone()
        .try_inverse()
        .ok_or(Error::Singular { ratio: 0.0 })?;
    let w_plane = map_subspace(&back, v)?;
    if Cone::new(x, w_plane.clone(), delta, None)?.contains(y) || (x - y).norm() == 0.0 {
        return Err(Error::InvalidWitness(format!(
            "y lies in the cone X(x, W, {delta}) around the pulled-back plane"
        )));
    }

    let eta = spread_eta(delta, rho);
    let r_prime = 2.0 * (x - y).norm();
    let mut min_deriv = f64::INFINITY;
    for s in 0..system.alphabet().size() as u32 {
        min_deriv = min_deriv.min(linalg::op_norm(&system.word_jacobian(&Word::from(vec![s]), y)?));
    }
    let lambda = 0.5 * (delta - (1.0 / rho - 1.0)).sqrt() * constants.k0_hat.powi(-2) * eta * r_prime * min_deriv
        / d_const
        / 2.0;

    let q = v.complement_projection();
    let images = [("x", system.eval_word(&word, x)?), ("y", system.eval_word(&word, y)?)];
    let (label, center) = images
        .iter()
        .max_by(|p, q2| apply_norm(&q, &(&p.1 - a)).total_cmp(&apply_norm(&q, &(&q2.1 - a))))
        .expect("two candidates");
    let separation = apply_norm(&q, &(center - a));
    let radius = lambda * r / 8.0;
    let c_formula = ahlfors_constant(system, constants, t)?;
    let mass = MassOracle::new(system, t)?.ball_mass(center, radius)?;
    let mass_floor = c_formula * radius.powf(t);
    Ok(SpreadWitness {
        apex: to_vec(a),
        plane: v.clone(),
        r,
        delta,
        rho,
        x: to_vec(x),
        y: to_vec(y),
        pulled_back_plane: w_plane,
        z: label.to_string(),
        n,
        word,
        eta,
        lambda,
        center: to_vec(center),
        radius,
        separation,
        inside_ball: (center - a).norm() + radius < r,
        avoids_tube: separation >= lambda * r / 2.0,
        t,
        ahlfors_constant: c_formula,
        mass,
        mass_floor,
        mass_ok: mass >= mass_floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C1Report {
    pub pairwise_ok: bool,
    pub containment_ok: bool,
    /// Largest `metric(V_x, V_a)` over pairs closer than `r0`.
    pub max_plane_distance: f64,
    pub pairs_checked: usize,
    pub triples_checked: usize,
}

impl C1Report {
    pub fn passed(&self) -> bool {
        self.pairwise_ok && self.containment_ok
    }
}

/// `metric(V_x, V_a) < 8^{−1/2}` for close pairs, and
/// `p ∈ X(x, V_a, 1/2)` for all `p, x` in `B(a, r0)`.
pub fn c1_compatibility_check(points: &[(DVector<f64>, Subspace)], r0: f64) -> Result<C1Report> {
    let bound = 8f64.sqrt().recip();
    let mut report = C1Report {
        pairwise_ok: true,
        containment_ok: true,
        max_plane_distance: 0.0,
        pairs_checked: 0,
        triples_checked: 0,
    };
    for (a, va) in points {
        let near: Vec<&DVector<f64>> = points
            .iter()
            .map(|(p, _)| p)
            .filter(|p| (*p - a).norm() < r0)
            .collect();
        for (x, vx) in points {
            if (x - a).norm() >= r0 {
                continue;
            }
            let m = grassmann::metric(vx, va)?;
            report.pairs_checked += 1;
            report.max_plane_distance = report.max_plane_distance.max(m);
            if m >= bound {
                report.pairwise_ok = false;
            }
            let cone = Cone::new(x, va.clone(), 0.5, None)?;
            for p in &near {
                if (*p - x).norm() <= C1_EXCLUSION {
                    continue;
                }
                report.triples_checked += 1;
                if !cone.contains(p) {
                    report.containment_ok = false;
                }
            }
        }
    }
    Ok(report)
}

/// Settings of [`rigidity_classify`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierConfig {
    /// Weight-table depth; by default the largest `n ≤ 7` with at most
    /// 16384 cylinders.
    pub depth: Option<usize>,
    pub deltas: Vec<f64>,
    pub apex_count: usize,
    /// Planes per apex; 180 for lines in the plane, 500 otherwise.
    pub plane_count: Option<usize>,
    pub threshold_factor: f64,
    pub spread_delta: f64,
    pub spread_rho: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            depth: None,
            deltas: DEFAULT_DELTAS.to_vec(),
            apex_count: 12,
            plane_count: None,
            threshold_factor: DEFAULT_THRESHOLD_FACTOR,
            spread_delta: 0.2,
            spread_rho: 0.9,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn resolved_depth(&self, alphabet_size: usize) -> usize {
        self.depth.unwrap_or_else(|| {
            let mut n = 1;
            while n < 7 && alphabet_size.pow(n as u32 + 1) <= 16384 {
                n += 1;
            }
            n
        })
    }

    pub fn resolved_plane_count(&self, d: usize, l: usize) -> usize {
        self.plane_count
            .unwrap_or(if d == 2 && l == 1 { 180 } else { 500 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictKind {
    Tangential,
    Spread,
    Inconclusive,
}

/// What each apex looked like over the plane grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApexSummary {
    pub apex: Vec<f64>,
    pub best_plane: Subspace,
    /// Per δ: the min-over-grid ratio of the best plane.
    pub best_ratios: Vec<f64>,
    /// Per δ: the largest-radius ratio averaged over the plane grid and a
    /// random plane; thresholds are a fixed fraction of it.
    pub reference_ratios: Vec<f64>,
    pub tangent_like: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    Certificate {
        certificates: Vec<TangentialityCertificate>,
        compatibility: C1Report,
    },
    Witness(Box<SpreadWitness>),
    Diagnostics { reasons: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictParameters {
    pub deltas: Vec<f64>,
    pub depth: usize,
    pub seed: u64,
    pub t: f64,
    pub bracket_width: f64,
    pub apex_count: usize,
    pub plane_count: usize,
    pub radii: Vec<f64>,
    pub threshold_factor: f64,
    pub spread_delta: f64,
    pub spread_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidityVerdict {
    pub kind: VerdictKind,
    pub l: usize,
    pub evidence: Evidence,
    pub parameters: VerdictParameters,
    pub apexes: Vec<ApexSummary>,
}

fn summarize_apex(
    weights: &CylinderWeights,
    a: &DVector<f64>,
    planes: &[Subspace],
    reference: &Subspace,
    deltas: &[f64],
    radii: &[f64],
    threshold_factor: f64,
    l: usize,
) -> Result<ApexSummary> {
    let t = weights.t();
    let hood = Neighbourhood::new(weights, a, radii[0]);
    // A single random plane can sit inside a thin set's tube at large δ,
    // so the reference averages it with the grid.
    let mut reference_ratios = vec![0.0; deltas.len()];
    for plane in planes.iter().chain(std::iter::once(reference)) {
        for (acc, row) in reference_ratios.iter_mut().zip(hood.ratio_table(plane, deltas, &radii[..1], t)) {
            *acc += row[0] / (planes.len() + 1) as f64;
        }
    }
    let mut candidates: Vec<Subspace> = planes.to_vec();
    if let Some(fit) = fitted_plane(weights, a, radii[0], weights.max_radius_bound(), l)? {
        candidates.push(fit);
    }
    // Score: the worst δ, measured against its threshold.
    let mut best: Option<(f64, Subspace, Vec<f64>)> = None;
    for plane in candidates {
        let table = hood.ratio_table(&plane, deltas, radii, t);
        let mins: Vec<f64> = table
            .iter()
            .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let score = mins
            .iter()
            .zip(&reference_ratios)
            .filter(|(_, r)| **r > 0.0)
            .map(|(m, r)| m / (threshold_factor * r))
            .fold(f64::NEG_INFINITY, f64::max);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, plane, mins));
        }
    }
    let (score, best_plane, best_ratios) = best.expect("at least one plane");
    Ok(ApexSummary {
        apex: to_vec(a),
        best_plane,
        best_ratios,
        reference_ratios,
        // No informative δ at all leaves the apex undecided.
        tangent_like: score.is_finite() && score < 1.0,
    })
}

/// Empirical side of the tangent-plane dichotomy for the limit set.
pub fn rigidity_classify(system: &IFSystem, l: usize, config: &ClassifierConfig) -> Result<RigidityVerdict> {
    let d = system.dim();
    if l == 0 || l >= d {
        return Err(Error::Dimension(format!("need 0 < l < d, got l = {l}, d = {d}")));
    }
    if config.deltas.is_empty() || config.deltas.iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
        return Err(Error::Precondition("δ-grid must be nonempty and inside (0,1)".into()));
    }
    let depth = config.resolved_depth(system.alphabet().size());
    let plane_count = config.resolved_plane_count(d, l);
    let bracket = estimate_dimension(system, depth.min(6), DEFAULT_DIMENSION_TOL)?;
    let t = weight_exponent(&bracket);
    let weights = conformal_weights(system, t, depth)?;
    let radii = radius_grid(system.rho0(), RESOLUTION_FACTOR * weights.max_radius_bound());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let planes = plane_grid(d, l, plane_count, &mut rng)?;
    let reference = Subspace::random(d, l, &mut rng)?;
    let apexes = sample_limit_points(system, config.apex_count.max(1), rng.random())?;
    let parameters = VerdictParameters {
        deltas: config.deltas.clone(),
        depth,
        seed: config.seed,
        t,
        bracket_width: bracket.width(),
        apex_count: apexes.len(),
        plane_count,
        radii: radii.clone(),
        threshold_factor: config.threshold_factor,
        spread_delta: config.spread_delta,
        spread_rho: config.spread_rho,
    };
    let inconclusive = |reasons: Vec<String>, apexes: Vec<ApexSummary>, parameters: VerdictParameters| RigidityVerdict {
        kind: VerdictKind::Inconclusive,
        l,
        evidence: Evidence::Diagnostics { reasons },
        parameters,
        apexes,
    };
    if radii.is_empty() {
        return Ok(inconclusive(
            vec![format!(
                "no radius between the cylinder resolution {} and rho0 = {}",
                RESOLUTION_FACTOR * weights.max_radius_bound(),
                system.rho0()
            )],
            Vec::new(),
            parameters,
        ));
    }

    let summaries = apexes
        .par_iter()
        .map(|(_, a)| {
            summarize_apex(&weights, a, &planes, &reference, &config.deltas, &radii, config.threshold_factor, l)
        })
        .collect::<Result<Vec<_>>>()?;

    if summaries.iter().any(|s| s.tangent_like) {
        let mut certificates = Vec::new();
        let mut reasons = Vec::new();
        for (k, &delta) in config.deltas.iter().enumerate() {
            match uniform_tangentiality(system, &weights, l, delta, config.apex_count, config.seed.wrapping_add(k as u64))? {
                TangentialityOutcome::Certified(c) => certificates.push(c),
                TangentialityOutcome::Failed(f) => reasons.push(format!(
                    "uniform tangentiality failed at δ = {delta}: {} violators near {:?}",
                    f.violator_count, f.point
                )),
            }
        }
        if reasons.is_empty() {
            let finest = certificates
                .iter()
                .min_by(|a, b| a.delta.total_cmp(&b.delta))
                .expect("nonempty δ-grid");
            let pairs: Vec<(DVector<f64>, Subspace)> = finest
                .assignments
                .iter()
                .map(|p| (DVector::from_column_slice(&p.point), p.plane.clone()))
                .collect();
            let compatibility = c1_compatibility_check(&pairs, finest.r)?;
            if compatibility.passed() {
                return Ok(RigidityVerdict {
                    kind: VerdictKind::Tangential,
                    l,
                    evidence: Evidence::Certificate {
                        certificates,
                        compatibility,
                    },
                    parameters,
                    apexes: summaries,
                });
            }
            reasons.push(format!(
                "certificate planes are not C¹-compatible (max plane distance {})",
                compatibility.max_plane_distance
            ));
        }
        return Ok(inconclusive(reasons, summaries, parameters));
    }

    match search_spread_witness(system, &weights, &apexes, &summaries, &radii, config)? {
        Some(w) => Ok(RigidityVerdict {
            kind: VerdictKind::Spread,
            l,
            evidence: Evidence::Witness(Box::new(w)),
            parameters,
            apexes: summaries,
        }),
        None => Ok(inconclusive(
            vec!["no apex looked tangent and no spread witness passed its checks".into()],
            summaries,
            parameters,
        )),
    }
}

const MAX_X_CANDIDATES: usize = 256;

fn search_spread_witness(
    system: &IFSystem,
    weights: &CylinderWeights,
    apexes: &[(Word, DVector<f64>)],
    summaries: &[ApexSummary],
    radii: &[f64],
    config: &ClassifierConfig,
) -> Result<Option<SpreadWitness>> {
    let (delta, rho) = (config.spread_delta, config.spread_rho);
    let constants = distortion_constants(system, 3, 500, config.seed)?;
    let lemma = SmallAngleParams::new(1.0 / rho - delta, rho, &constants, system.boundary_distance())?;
    let reach = 0.99 * lemma.r0 / 2.0;

    let size = system.alphabet().size();
    let mut sample_depth = 1;
    while size.pow(sample_depth as u32 + 1) <= 32768 {
        sample_depth += 1;
    }
    let cloud: Vec<DVector<f64>> = system.map_words(sample_depth, |v| v.word().clone())?
        .iter()
        .map(|w| limit_point(system, w))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed));
    order.truncate(MAX_X_CANDIDATES);

    // Apexes furthest from tangent-like first.
    let mut ranked: Vec<usize> = (0..apexes.len()).collect();
    let score = |s: &ApexSummary| s.best_ratios.iter().copied().fold(f64::INFINITY, f64::min);
    ranked.sort_by(|&i, &j| score(&summaries[j]).total_cmp(&score(&summaries[i])).then(i.cmp(&j)));

    for &k in &ranked {
        let (code, a) = &apexes[k];
        let v = &summaries[k].best_plane;
        let r = radii[0];
        for &ix in &order {
            let x = &cloud[ix];
            // The pulled-back plane depends on the level chosen in the witness;
            // a first pass with the level-1 prefix picks a promising y.
            let probe = match spread_witness_probe(system, code, v, r, x) {
                Some(p) => p,
                None => continue,
            };
            let q = probe.complement_projection();
            let best_y = cloud
                .iter()
                .filter(|y| {
                    let gap = (*y - x).norm();
                    gap > 0.0 && gap < reach
                })
                .max_by(|p, q2| {
                    let f = |y: &DVector<f64>| apply_norm(&q, &(y - x)) / (y - x).norm();
                    f(p).total_cmp(&f(q2))
                });
            let Some(y) = best_y else { continue };
            match spread_witness(system, weights, &constants, a, code, v, r, delta, rho, x, y) {
                Ok(w) if w.is_valid() => return Ok(Some(w)),
                Ok(_) | Err(Error::InvalidWitness(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(None)
}

/// The plane `W = φ_{i|n}′(x)⁻¹V` that [`spread_witness`] will use.
fn spread_witness_probe(system: &IFSystem, code: &Word, v: &Subspace, r: f64, x: &DVector<f64>) -> Option<Subspace> {
    let target = r / (2.0 * system.diameter_constant());
    let mut n = 1;
    let word = loop {
        let w = code.padded(n).prefix(n);
        if system.sup_norm(&w).ok()? < target || n > 200 {
            break w;
        }
        n += 1;
    };
    let back = system.word_jacobian(&word, x).ok()?.try_inverse()?;
    map_subspace(&back, v).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::measure::weight_exponent;
    use proptest::prelude::*;

    fn table(system: &IFSystem, depth: usize) -> CylinderWeights {
        let t = weight_exponent(&estimate_dimension(system, 2, 1e-10).unwrap());
        conformal_weights(system, t, depth).unwrap()
    }

    fn v2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    #[test]
    fn line_cantor_ratios_vanish_on_the_axis() {
        let sys = fixtures::line_cantor();
        let w = table(&sys, 7);
        let a = limit_point(&sys, &Word::from(vec![0, 1, 1, 0])).unwrap();
        let radii = radius_grid(sys.rho0(), 10.0 * w.max_radius_bound());
        for delta in DEFAULT_DELTAS {
            let res = weak_tangent_ratios(&w, &a, &Subspace::line_2d(0.0), delta, w.t(), &radii).unwrap();
            assert!(res.ratios.iter().all(|(_, q)| *q == 0.0));
            assert_eq!(res.min_ratio, 0.0);
        }
        let res = weak_tangent_ratios(&w, &a, &Subspace::line_2d(1.0), 0.25, w.t(), &radii).unwrap();
        assert!(res.min_ratio > 0.0);
    }

    #[test]
    fn ratio_grid_is_validated() {
        let sys = fixtures::line_cantor();
        let w = table(&sys, 4);
        let a = v2(0.0, 0.0);
        let v = Subspace::line_2d(0.0);
        assert!(matches!(
            weak_tangent_ratios(&w, &a, &v, 0.2, w.t(), &[0.1, 0.2]),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            weak_tangent_ratios(&w, &a, &v, 0.2, w.t(), &[0.1, 1e-4]),
            Err(Error::Resolution { .. })
        ));
    }

    #[test]
    fn lower_exponent_scales_ratios() {
        let sys = fixtures::koch();
        let w = table(&sys, 5);
        let a = limit_point(&sys, &Word::from(vec![1, 3])).unwrap();
        let radii = radius_grid(sys.rho0(), 10.0 * w.max_radius_bound());
        let v = Subspace::line_2d(0.3);
        let full = weak_tangent_ratios(&w, &a, &v, 0.25, w.t(), &radii).unwrap();
        let low = weak_tangent_ratios(&w, &a, &v, 0.25, w.t() - 0.2, &radii).unwrap();
        for ((r, q), (_, q_low)) in full.ratios.iter().zip(&low.ratios) {
            assert!((q_low - q * r.powf(0.2)).abs() <= 1e-12 * q.max(1.0));
        }
    }

    #[test]
    fn cone_examples() {
        let sys = fixtures::line_cantor();
        let w = table(&sys, 7);
        let a = limit_point(&sys, &Word::from(vec![1, 0, 1])).unwrap();
        let ex = w.max_radius_bound();
        let ok = cone_containment_check(w.points(), ex, &a, &Subspace::line_2d(0.0), 0.04, 0.3).unwrap();
        assert!(ok.holds && ok.checked > 0);
        let bad = cone_containment_check(w.points(), ex, &a, &Subspace::line_2d(std::f64::consts::FRAC_PI_2), 0.25, 0.1)
            .unwrap();
        assert!(!bad.holds && bad.violators.iter().all(|p| p[1] == 0.0));
    }

    #[test]
    fn koch_spike_rejects_every_narrow_cone() {
        let sys = fixtures::koch();
        let w = table(&sys, 7);
        // π(1,3,3,…) = φ_1(1,0).
        let spike = sys.eval_word(&Word::from(vec![1]), &v2(1.0, 0.0)).unwrap();
        assert!((spike[0] - 0.5).abs() < 1e-12 && (spike[1] - 3f64.sqrt() / 6.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for v in plane_grid(2, 1, 180, &mut rng).unwrap() {
            let rep = cone_containment_check(w.points(), w.max_radius_bound(), &spike, &v, 0.04, 0.05).unwrap();
            assert!(!rep.holds);
        }
    }

    #[test]
    fn uniform_tangentiality_examples() {
        let sys = fixtures::line_cantor();
        let w = table(&sys, 7);
        match uniform_tangentiality(&sys, &w, 1, 0.1, 8, 3).unwrap() {
            TangentialityOutcome::Certified(c) => {
                assert_eq!(c.r, sys.rho0());
                for p in &c.assignments {
                    let axis = Subspace::line_2d(0.0);
                    assert!(grassmann::metric(&p.plane, &axis).unwrap() < 1e-12);
                }
            }
            other => panic!("{other:?}"),
        }
        let sys = fixtures::dust();
        let w = table(&sys, 4);
        assert!(matches!(
            uniform_tangentiality(&sys, &w, 2, 0.1, 6, 3).unwrap(),
            TangentialityOutcome::Failed(_)
        ));
        let sys = fixtures::koch();
        let w = table(&sys, 6);
        assert!(matches!(
            uniform_tangentiality(&sys, &w, 1, 0.04, 6, 3).unwrap(),
            TangentialityOutcome::Failed(_)
        ));
    }

    #[test]
    fn small_angle_params() {
        let sim = DistortionConstants {
            c_hat: 0.0,
            k0_hat: 1.0,
            d_hat: 1.0,
            depth: 1,
            sample_count: 1,
        };
        assert_eq!(SmallAngleParams::new(0.3, 0.75, &sim, 0.05).unwrap().r0, 0.05);
        let curved = DistortionConstants { c_hat: 2.0, k0_hat: 1.1, ..sim };
        let p = SmallAngleParams::new(0.3, 0.75, &curved, 1.0).unwrap();
        let lemma = 0.3f64.sqrt() / 2.0 * (0.875f64.sqrt() - 0.75f64.sqrt());
        let k = ((2.0 / 1.75f64).sqrt() - 1.0) / (2.0 * 1.1);
        assert!((p.r0 - lemma.min(k)).abs() < 1e-15);
        assert!(1.0 + curved.c_hat * curved.k0_hat * p.r0 <= (2.0 / 1.75f64).sqrt() + 1e-15);
        assert!(SmallAngleParams::new(0.3, 0.4, &sim, 1.0).is_err());
        assert!(SmallAngleParams::new(1.3, 0.6, &sim, 1.0).is_err());
    }

    #[test]
    fn small_angle_images() {
        let sys = fixtures::dust();
        let c = distortion_constants(&sys, 2, 1, 0).unwrap();
        let p = SmallAngleParams::new(0.3, 0.75, &c, sys.boundary_distance()).unwrap();
        assert!(small_angle_trials(&sys, &p, 2, 500, 1).unwrap().violations.is_empty());
        let a = limit_point(&sys, &Word::from(vec![3, 5])).unwrap();
        let v = Subspace::coordinate(3, &[0]).unwrap();
        let rep = small_angle_image_check(&sys, &Word::from(vec![2, 7]), &a, &v, &p, 0.5 * p.r0, 200, 2).unwrap();
        assert!(rep.violations.is_empty());
        assert!(small_angle_image_check(&sys, &Word::from(vec![2]), &a, &v, &p, p.r0, 10, 2).is_err());

        let sys = fixtures::conjugated_dust();
        let c = distortion_constants(&sys, 3, 400, 5).unwrap();
        let p = SmallAngleParams::new(0.3, 0.75, &c, sys.boundary_distance()).unwrap();
        assert!(small_angle_trials(&sys, &p, 1, 300, 2).unwrap().violations.is_empty());
        // Outside the hypothesis the checker still reports.
        let wide = SmallAngleParams { r0: 10.0 * p.r0, ..p };
        assert!(small_angle_trials(&sys, &wide, 2, 50, 3).is_ok());
    }

    #[test]
    fn c1_examples() {
        let axis = Subspace::line_2d(0.0);
        let pts: Vec<(DVector<f64>, Subspace)> =
            (0..5).map(|k| (v2(0.1 * k as f64, 0.0), axis.clone())).collect();
        assert!(c1_compatibility_check(&pts, 1.0).unwrap().passed());
        let alternating: Vec<(DVector<f64>, Subspace)> = (0..4)
            .map(|k| (v2(0.1 * k as f64, 0.0), Subspace::line_2d(if k % 2 == 0 { 0.0 } else { std::f64::consts::FRAC_PI_2 })))
            .collect();
        let rep = c1_compatibility_check(&alternating, 1.0).unwrap();
        assert!(!rep.pairwise_ok && (rep.max_plane_distance - 1.0).abs() < 1e-12);
        assert!(c1_compatibility_check(&pts[..1], 1.0).unwrap().passed());
    }

    #[test]
    fn spread_witness_on_koch() {
        let sys = fixtures::koch();
        let w = table(&sys, 6);
        let c = distortion_constants(&sys, 2, 1, 0).unwrap();
        let code = Word::from(vec![0, 2, 1]);
        let a = limit_point(&sys, &code).unwrap();
        let x = limit_point(&sys, &Word::from(vec![0])).unwrap();
        // φ_0 of the spike, 30° above the axis seen from x.
        let y = sys.eval_word(&Word::from(vec![0, 1]), &v2(1.0, 0.0)).unwrap();
        let v = Subspace::line_2d(0.0);
        let wit = spread_witness(&sys, &w, &c, &a, &code, &v, 0.1, 0.2, 0.9, &x, &y).unwrap();
        assert!(wit.lambda > 0.0 && wit.inside_ball, "{wit:?}");
        assert!(wit.mass_ok, "{} < {}", wit.mass, wit.mass_floor);
        // λ has no r in it; n adapts instead.
        let wider = spread_witness(&sys, &w, &c, &a, &code, &v, 0.3, 0.2, 0.9, &x, &y).unwrap();
        assert_eq!(wider.lambda, wit.lambda);
        assert_eq!(wit.n - wider.n, 1);
    }

    #[test]
    fn spread_witness_rejects_points_in_the_cone() {
        let sys = fixtures::line_cantor();
        let w = table(&sys, 5);
        let c = distortion_constants(&sys, 2, 1, 0).unwrap();
        let code = Word::from(vec![1, 0]);
        let a = limit_point(&sys, &code).unwrap();
        let v = Subspace::line_2d(0.0);
        for (xs, ys) in [(vec![0], vec![1]), (vec![0, 0], vec![0, 1, 1]), (vec![1, 1, 0], vec![1, 0])] {
            let x = limit_point(&sys, &Word::from(xs)).unwrap();
            let y = limit_point(&sys, &Word::from(ys)).unwrap();
            assert!(matches!(
                spread_witness(&sys, &w, &c, &a, &code, &v, 0.1, 0.2, 0.9, &x, &y),
                Err(Error::InvalidWitness(_))
            ));
        }
    }

    #[test]
    fn classifier_on_line_cantor() {
        let v = rigidity_classify(&fixtures::line_cantor(), 1, &ClassifierConfig::default()).unwrap();
        assert_eq!(v.kind, VerdictKind::Tangential, "{:?}", v.evidence);
        let Evidence::Certificate { compatibility, .. } = &v.evidence else {
            panic!("{:?}", v.evidence)
        };
        assert!(compatibility.passed() && compatibility.max_plane_distance <= 1e-9);
    }

    #[test]
    fn plane_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lines = plane_grid(2, 1, 180, &mut rng).unwrap();
        assert_eq!(lines.len(), 180);
        let planes = plane_grid(3, 2, 20, &mut rng).unwrap();
        assert_eq!(planes.len(), 20);
        assert!(planes.iter().all(|p| p.dim() == 2));
        assert_eq!(radius_grid(1.0, 0.2), vec![1.0, 0.5, 0.25]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn zero_tube_law(delta in 0.01f64..0.99, t in 0.1f64..1.5, code in proptest::collection::vec(0u32..2, 1..6)) {
            let sys = fixtures::line_cantor();
            let w = table(&sys, 6);
            let a = limit_point(&sys, &Word::from(code)).unwrap();
            let radii = radius_grid(sys.rho0(), 10.0 * w.max_radius_bound());
            let res = weak_tangent_ratios(&w, &a, &Subspace::line_2d(0.0), delta, t, &radii).unwrap();
            prop_assert!(res.ratios.iter().all(|(_, q)| *q == 0.0));
        }

        #[test]
        fn cone_evidence_moves_forward(
            code in proptest::collection::vec(0u32..3, 2..5),
            theta in 0.0f64..std::f64::consts::PI,
            map in 0u32..3,
            delta in 0.1f64..0.9,
        ) {
            let sys = fixtures::sierpinski();
            let w = table(&sys, 5);
            let rho = 0.75;
            let a = limit_point(&sys, &Word::from(code)).unwrap();
            let v = Subspace::line_2d(theta);
            let r = 0.08;
            let ex = w.max_radius_bound();
            let here = cone_containment_check(w.points(), ex, &a, &v, rho * delta, r).unwrap();
            let word = Word::from(vec![map]);
            let near: Vec<DVector<f64>> = w.points().iter().filter(|p| (*p - &a).norm() < r).cloned().collect();
            let moved: Vec<DVector<f64>> = near.iter().map(|p| sys.eval_word(&word, p).unwrap()).collect();
            let fa = sys.eval_word(&word, &a).unwrap();
            let fv = map_subspace(&sys.word_jacobian(&word, &a).unwrap(), &v).unwrap();
            let scale = sys.sup_norm(&word).unwrap();
            let there = cone_containment_check(&moved, ex * scale, &fa, &fv, delta, scale * r).unwrap();
            if here.holds {
                prop_assert!(there.holds);
            }
        }

        #[test]
        fn rotation_moves_certificates(angle in 0.0f64..std::f64::consts::TAU) {
            let (c, s) = (angle.cos(), angle.sin());
            let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
            let sys = fixtures::line_cantor().rotated(&rot).unwrap();
            let w = table(&sys, 6);
            let TangentialityOutcome::Certified(cert) = uniform_tangentiality(&sys, &w, 1, 0.1, 4, 1).unwrap() else {
                return Err(TestCaseError::fail("rotated line-Cantor lost its certificate"));
            };
            let image = map_subspace(&rot, &Subspace::line_2d(0.0)).unwrap();
            for p in &cert.assignments {
                prop_assert!(grassmann::metric(&p.plane, &image).unwrap() < 1e-9);
            }
        }
    }
}
