//! Finite-depth conformal measure, pressure-sum dimension brackets and the
//! lower Ahlfors-regularity check.
//!
//! The measure `m` is approximated by normalized depth-`n` cylinder weights
//! `|φ_w′(anchor)|^t`. For similarity systems at the exact exponent these are
//! the products `Π r_{w_k}^t`, which already sum to one.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Mutex;

use nalgebra::DVector;
use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ifs::{DistortionConstants, IFSystem, SamplePoint};
use crate::linalg;
use crate::symbolic::{limit_point, Alphabet, Word};

/// Bisection step limit for every root search in this module.
pub const MAX_BISECTION_STEPS: usize = 200;

/// Default tolerance of [`estimate_dimension`].
pub const DEFAULT_DIMENSION_TOL: f64 = 1e-10;

/// Smallest Ahlfors radius, in units of the largest cylinder radius bound.
pub const RESOLUTION_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimensionMethod {
    /// Root of `Σ r_i^t = 1`.
    ExactSimilarity,
    /// Roots of the depth-`n` sums of sup- and inf-norms.
    SupInfNorms,
}

/// Bracket `t_minus ≤ dim_H E ≤ t_plus`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimensionBracket {
    pub t_minus: f64,
    pub t_plus: f64,
    pub depth: usize,
    pub method: DimensionMethod,
    pub tol: f64,
}

impl DimensionBracket {
    pub fn width(&self) -> f64 {
        self.t_plus - self.t_minus
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.t_minus + self.t_plus)
    }

    pub fn contains(&self, t: f64) -> bool {
        self.t_minus <= t && t <= self.t_plus
    }
}

/// Per-word `(ln inf-norm, ln sup-norm)` at depth `n`.
fn log_norms(system: &IFSystem, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Precondition("depth must be at least 1".into()));
    }
    if system.is_similarity() {
        let logs = system.map_words(n, |v| v.model_ratio().expect("similarity word").ln())?;
        return Ok((logs.clone(), logs));
    }
    let samples = system.seed_sample_points();
    let k0 = system.k0_bound();
    let pairs = system.map_words(n, |v| -> Result<(f64, f64)> {
        let mut inf = f64::INFINITY;
        for s in &samples {
            inf = inf.min(linalg::co_norm(&v.jacobian_at(s)?));
        }
        Ok(((inf / k0).ln(), v.sup_norm()?.ln()))
    })?;
    let mut lower = Vec::with_capacity(pairs.len());
    let mut upper = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (lo, hi) = p?;
        lower.push(lo);
        upper.push(hi);
    }
    Ok((lower, upper))
}

/// `ln Σ exp(t·l)`, summed in index order.
fn log_sum(logs: &[f64], t: f64) -> f64 {
    let top = logs.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(t * l));
    top + logs.iter().map(|&l| (t * l - top).exp()).sum::<f64>().ln()
}

/// `(Σ inf-norm^t, Σ ‖φ_w′‖^t)` over the words of length `n`.
pub fn pressure_sums(system: &IFSystem, t: f64, n: usize) -> Result<(f64, f64)> {
    check_exponent(t)?;
    let (lower, upper) = log_norms(system, n)?;
    Ok((log_sum(&lower, t).exp(), log_sum(&upper, t).exp()))
}

fn check_exponent(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Precondition(format!("exponent t = {t} must be finite and ≥ 0")));
    }
    Ok(())
}

/// Root in `[lo, hi]` of a decreasing function, by bisection until the
/// interval is below `tol` or stops shrinking.
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    if f(lo) < 0.0 || f(hi) > 0.0 {
        return Err(Error::RootNotBracketed { lo, hi });
    }
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Root of `Σ r_i^t = 1`, to full double precision.
pub fn similarity_dimension(ratios: &[f64], d: usize) -> Result<f64> {
    let logs: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    bisect(|t| log_sum(&logs, t), 0.0, d as f64, 0.0)
}

/// Dimension bracket from depth-`n` pressure sums.
pub fn estimate_dimension(system: &IFSystem, n: usize, tol: f64) -> Result<DimensionBracket> {
    if n == 0 {
        return Err(Error::Precondition("depth must be at least 1".into()));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Precondition(format!("tolerance {tol} must be positive")));
    }
    let d = system.dim() as f64;
    if let Some(sims) = system.similarities() {
        let ratios: Vec<f64> = sims.iter().map(|s| s.scale()).collect();
        let t = similarity_dimension(&ratios, system.dim())?;
        return Ok(DimensionBracket {
            t_minus: t,
            t_plus: t,
            depth: n,
            method: DimensionMethod::ExactSimilarity,
            tol,
        });
    }
    let (lower, upper) = log_norms(system, n)?;
    let t_plus = bisect(|t| log_sum(&upper, t), 0.0, d, tol)?;
    let t_minus = bisect(|t| log_sum(&lower, t), 0.0, d, tol)?.min(t_plus);
    Ok(DimensionBracket {
        t_minus,
        t_plus,
        depth: n,
        method: DimensionMethod::SupInfNorms,
        tol,
    })
}

/// The exponent used for weights: the exact root for similarities, the
/// bracket midpoint otherwise.
pub fn weight_exponent(bracket: &DimensionBracket) -> f64 {
    match bracket.method {
        DimensionMethod::ExactSimilarity => bracket.t_minus,
        DimensionMethod::SupInfNorms => bracket.midpoint(),
    }
}

/// Depth-`n` approximation of the conformal measure. Entries are indexed in
/// lexicographic word order.
#[derive(Debug, Clone)]
pub struct CylinderWeights {
    alphabet: Alphabet,
    depth: usize,
    t: f64,
    weights: Vec<f64>,
    points: Vec<DVector<f64>>,
    radius_bounds: Vec<f64>,
    raw_total: f64,
}

impl CylinderWeights {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cylinder representatives `φ_w(anchor)`.
    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    /// Radii `D·‖φ_w′‖` around the representatives that cover each cylinder.
    pub fn radius_bounds(&self) -> &[f64] {
        &self.radius_bounds
    }

    pub fn max_radius_bound(&self) -> f64 {
        self.radius_bounds.iter().fold(0.0, |m, &r| m.max(r))
    }

    /// Sum of the unnormalized weights.
    pub fn raw_total(&self) -> f64 {
        self.raw_total
    }

    pub fn word(&self, k: usize) -> Word {
        self.alphabet.word_at(self.depth, k)
    }

    pub fn weight(&self, word: &Word) -> Option<f64> {
        (word.len() == self.depth && self.alphabet.check(word).is_ok())
            .then(|| self.weights[self.alphabet.index_of(word)])
    }

    /// `m_n(prefix)`: total weight of the words starting with `prefix`.
    pub fn prefix_mass(&self, prefix: &Word) -> Result<f64> {
        self.alphabet.check(prefix)?;
        if prefix.len() > self.depth {
            return Err(Error::Precondition(format!(
                "prefix of length {} is deeper than the table ({})",
                prefix.len(),
                self.depth
            )));
        }
        let block = self.alphabet.size().pow((self.depth - prefix.len()) as u32);
        let start = self.alphabet.index_of(prefix) * block;
        Ok(self.weights[start..start + block].iter().sum())
    }

    /// Conservative `m_n(B(center, radius))`: the weight of cylinders whose
    /// representative ball lies inside the open ball.
    pub fn inner_ball_mass(&self, center: &DVector<f64>, radius: f64) -> f64 {
        self.points
            .iter()
            .zip(&self.radius_bounds)
            .zip(&self.weights)
            .filter(|((p, rb), _)| (*p - center).norm() + **rb < radius)
            .map(|(_, w)| *w)
            .sum()
    }

    /// CSV with columns `word,weight,x1..xd`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "word,weight")?;
        for i in 1..=self.dim() {
            write!(out, ",x{i}")?;
        }
        writeln!(out)?;
        for (k, (w, p)) in self.weights.iter().zip(&self.points).enumerate() {
            write!(out, "{},{w}", self.word(k).dotted())?;
            for c in p.iter() {
                write!(out, ",{c}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Unnormalized weight `σ_max(φ_w′(anchor))^t` of one word.
fn raw_weight(system: &IFSystem, v: &crate::ifs::WordView<'_>, anchor: &SamplePoint, t: f64) -> Result<f64> {
    match v.model_ratio() {
        Some(r) if system.is_similarity() => Ok(r.powf(t)),
        _ => Ok(linalg::op_norm(&v.jacobian_at(anchor)?).powf(t)),
    }
}

/// Normalized depth-`n` cylinder weights at exponent `t`.
pub fn conformal_weights(system: &IFSystem, t: f64, n: usize) -> Result<CylinderWeights> {
    check_exponent(t)?;
    if n == 0 {
        return Err(Error::Precondition("depth must be at least 1".into()));
    }
    let anchor = system.sample_point(system.anchor());
    let rows = system.map_words(n, |v| -> Result<(f64, DVector<f64>, f64)> {
        Ok((raw_weight(system, v, &anchor, t)?, v.at_anchor()?, v.radius_bound()?))
    })?;
    let mut raw = Vec::with_capacity(rows.len());
    let mut points = Vec::with_capacity(rows.len());
    let mut radius_bounds = Vec::with_capacity(rows.len());
    for row in rows {
        let (w, p, rb) = row?;
        raw.push(w);
        points.push(p);
        radius_bounds.push(rb);
    }
    let raw_total: f64 = raw.iter().sum();
    Ok(CylinderWeights {
        alphabet: system.alphabet(),
        depth: n,
        t,
        weights: raw.iter().map(|w| w / raw_total).collect(),
        points,
        radius_bounds,
        raw_total,
    })
}

/// Residuals of the identity `m(φ_w E) = ∫ |φ_w′|^t dm` for one weight
/// table, caching the deeper normalizations across words.
pub struct ConformalIdentity<'a> {
    system: &'a IFSystem,
    weights: &'a CylinderWeights,
    anchor: SamplePoint,
    reps: Vec<SamplePoint>,
    totals: Mutex<BTreeMap<usize, f64>>,
}

impl<'a> ConformalIdentity<'a> {
    pub fn new(system: &'a IFSystem, weights: &'a CylinderWeights) -> Result<Self> {
        if weights.alphabet() != system.alphabet() || weights.dim() != system.dim() {
            return Err(Error::Precondition("weights belong to a different system".into()));
        }
        Ok(Self {
            system,
            weights,
            anchor: system.sample_point(system.anchor()),
            reps: weights.points.par_iter().map(|p| system.sample_point(p)).collect(),
            totals: Mutex::new(BTreeMap::new()),
        })
    }

    fn total_at(&self, depth: usize) -> Result<f64> {
        if depth == self.weights.depth {
            return Ok(self.weights.raw_total);
        }
        if let Some(z) = self.totals.lock().expect("cache lock").get(&depth) {
            return Ok(*z);
        }
        let t = self.weights.t;
        let raw = self.system.map_words(depth, |v| raw_weight(self.system, v, &self.anchor, t))?;
        let mut z = 0.0;
        for r in raw {
            z += r?;
        }
        self.totals.lock().expect("cache lock").insert(depth, z);
        Ok(z)
    }

    /// `|m_{p+n}(word) − Σ_k W_k·σ_max(φ_word′(x_k))^t|` with `p = |word|`.
    pub fn residual(&self, word: &Word) -> Result<f64> {
        let n = self.weights.depth;
        let t = self.weights.t;
        self.system.alphabet().count_at_depth(word.len() + n)?;
        let sub = self
            .system
            .map_subtree(word, n, |v| raw_weight(self.system, v, &self.anchor, t))?;
        let mut lhs = 0.0;
        for r in sub {
            lhs += r?;
        }
        let lhs = lhs / self.total_at(word.len() + n)?;

        let rhs = self.system.map_subtree(word, 0, |v| -> Result<f64> {
            if let (Some(r), true) = (v.model_ratio(), self.system.is_similarity()) {
                return Ok(r.powf(t) * self.weights.weights.iter().sum::<f64>());
            }
            let terms = self
                .reps
                .par_iter()
                .zip(&self.weights.weights)
                .map(|(s, w)| Ok(w * linalg::op_norm(&v.jacobian_at(s)?).powf(t)))
                .collect::<Result<Vec<f64>>>()?;
            Ok(terms.iter().sum())
        })?;
        let rhs = rhs.into_iter().next().expect("one word")?;
        Ok((lhs - rhs).abs())
    }

    /// Largest residual over all words of length `p`.
    pub fn max_residual(&self, p: usize) -> Result<f64> {
        let count = self.system.alphabet().count_at_depth(p)?;
        let mut worst: f64 = 0.0;
        for k in 0..count {
            worst = worst.max(self.residual(&self.system.alphabet().word_at(p, k))?);
        }
        Ok(worst)
    }
}

/// One-shot [`ConformalIdentity::residual`].
pub fn verify_conformal_identity(system: &IFSystem, weights: &CylinderWeights, word: &Word) -> Result<f64> {
    ConformalIdentity::new(system, weights)?.residual(word)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiiGrid {
    pub min: f64,
    pub max: f64,
    pub per_sample: usize,
    pub spacing: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AhlforsReport {
    pub t: f64,
    pub c_formula: f64,
    pub min_observed_ratio: f64,
    pub worst_point: Vec<f64>,
    pub worst_radius: f64,
    pub samples: usize,
    pub radii: RadiiGrid,
    pub depth: usize,
    pub seed: u64,
    pub passed: bool,
}

/// `D^{−t}·K₀^{−2t}·(min_i inf-norm φ_i′)^t`.
pub fn ahlfors_constant(system: &IFSystem, constants: &DistortionConstants, t: f64) -> Result<f64> {
    check_exponent(t)?;
    let mut smallest = f64::INFINITY;
    for s in 0..system.alphabet().size() as u32 {
        smallest = smallest.min(system.inf_norm(&Word::from(vec![s]))?);
    }
    Ok(constants.d_hat.powf(-t) * constants.k0_hat.powf(-2.0 * t) * smallest.powf(t))
}

/// Samples `m_n(B(x,r))/r^t` at limit points `x` and log-uniform radii in
/// `[10·max radius bound, ϱ₀]`, and compares the minimum with the constant.
pub fn ahlfors_lower_check(
    system: &IFSystem,
    weights: &CylinderWeights,
    constants: &DistortionConstants,
    sample_count: usize,
    radii_per_sample: usize,
    seed: u64,
) -> Result<AhlforsReport> {
    if sample_count == 0 || radii_per_sample == 0 {
        return Err(Error::Precondition("need at least one sample and one radius".into()));
    }
    let t = weights.t();
    let c_formula = ahlfors_constant(system, constants, t)?;
    let r_max = system.rho0();
    let r_min = RESOLUTION_FACTOR * weights.max_radius_bound();
    if r_min >= r_max {
        return Err(Error::Resolution {
            radius: r_max,
            floor: r_min,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(sample_count * radii_per_sample);
    for _ in 0..sample_count {
        let x = limit_point(system, &system.alphabet().random_word(24, &mut rng))?;
        for _ in 0..radii_per_sample {
            let r = (r_min.ln() + rng.random::<f64>() * (r_max / r_min).ln()).exp();
            probes.push((x.clone(), r));
        }
    }
    let ratios: Vec<f64> = probes
        .par_iter()
        .map(|(x, r)| weights.inner_ball_mass(x, *r) / r.powf(t))
        .collect();
    let (worst, &min_ratio) = ratios
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    Ok(AhlforsReport {
        t,
        c_formula,
        min_observed_ratio: min_ratio,
        worst_point: probes[worst].0.iter().copied().collect(),
        worst_radius: probes[worst].1,
        samples: probes.len(),
        radii: RadiiGrid {
            min: r_min,
            max: r_max,
            per_sample: radii_per_sample,
            spacing: "log-uniform",
        },
        depth: weights.depth(),
        seed,
        passed: min_ratio >= c_formula,
    })
}

/// Cylinder masses `m(φ_w E)` at arbitrary depth, and conservative ball
/// masses found by descending the cylinder tree.
pub struct MassOracle<'a> {
    system: &'a IFSystem,
    t: f64,
    quadrature: Option<(Vec<SamplePoint>, Vec<f64>)>,
}

/// Node budget of [`MassOracle::ball_mass`].
const DESCENT_BUDGET: usize = 2_000_000;

impl<'a> MassOracle<'a> {
    /// For similarity systems masses are exact products `r_w^t`; otherwise
    /// `m(φ_w E) ≈ Σ_k W_k σ_max(φ_w′(x_k))^t` over a small weight table.
    pub fn new(system: &'a IFSystem, t: f64) -> Result<Self> {
        check_exponent(t)?;
        let quadrature = if system.is_similarity() {
            None
        } else {
            let size = system.alphabet().size();
            let depth = if size >= 16 { 1 } else { 2 };
            let table = conformal_weights(system, t, depth)?;
            let pts = table.points.iter().map(|p| system.sample_point(p)).collect();
            Some((pts, table.weights))
        };
        Ok(Self { system, t, quadrature })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn cylinder_mass(&self, word: &Word) -> Result<f64> {
        match &self.quadrature {
            None => Ok(self.system.sup_norm(word)?.powf(self.t)),
            Some((pts, w)) => {
                let mut total = 0.0;
                for (p, wk) in pts.iter().zip(w) {
                    total += wk * linalg::op_norm(&self.system.word_jacobian(word, &p.actual)?).powf(self.t);
                }
                Ok(total)
            }
        }
    }

    /// Lower estimate of `m(B(center, radius))`: cylinders whose covering
    /// ball is inside are counted, those meeting the sphere are refined
    /// until they are `1e−3·radius` small and then dropped.
    pub fn ball_mass(&self, center: &DVector<f64>, radius: f64) -> Result<f64> {
        let d_const = self.system.diameter_constant();
        let size = self.system.alphabet().size() as u32;
        let mut stack: Vec<Word> = (0..size).map(|s| Word::from(vec![s])).collect();
        let mut mass = 0.0;
        let mut visited = 0usize;
        while let Some(w) = stack.pop() {
            visited += 1;
            if visited > DESCENT_BUDGET {
                break;
            }
            let rb = d_const * self.system.sup_norm(&w)?;
            let gap = (self.system.word_value_at_anchor(&w)? - center).norm();
            if gap + rb < radius {
                mass += self.cylinder_mass(&w)?;
            } else if gap - rb < radius && rb >= 1e-3 * radius {
                for s in 0..size {
                    stack.push(w.join(&Word::from(vec![s])));
                }
            }
        }
        Ok(mass)
    }
}
