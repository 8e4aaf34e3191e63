//! Iterated function systems: the map class, validation of the standing
//! conditions, distortion constants and the conjugated-system builder.

pub mod chart;
pub mod conjugate;
pub mod distortion;
pub mod maps;
pub mod region;
pub mod validate;
pub mod words;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use chart::{Chart, Deformation, Isometry};
pub use conjugate::{build_conjugated, chart_norms, ChartNorms, ConjugationCheck};
pub use distortion::{check_ball_inclusions, distortion_constants, BallInclusionReport, DistortionConstants};
pub use maps::{AffineMap, C2Map, Conjugated, Similarity, SmoothMap};
pub use region::{AxisBox, SeedRegion};
pub use validate::{
    validate_boundary_density, validate_f1, validate_f3, validate_osc, BoundaryDensityReport,
    F1Report, F3Report, OscReport,
};
pub use words::WordSimilarity;

use crate::error::{Error, Result};
use crate::linalg;
use crate::symbolic::{Alphabet, Word};

/// Grid resolution used for chart norms when a conjugated system is
/// assembled without going through [`build_conjugated`].
pub const DEFAULT_CHART_GRID: usize = 21;

/// Closed-form evaluation for systems that are similarities in some chart.
#[derive(Debug, Clone)]
struct FastPath {
    sims: Vec<Similarity>,
    chart: Chart,
}

/// A finite family of contractions on a seed region, with the constants of
/// the standing two-sided derivative bound.
#[derive(Debug, Clone)]
pub struct IFSystem {
    alphabet: Alphabet,
    maps: Vec<SmoothMap>,
    region: SeedRegion,
    s_low: f64,
    s_up: f64,
    rho0: f64,
    fast: Option<FastPath>,
    chart_norms: Option<ChartNorms>,
    conjugation: Option<ConjugationCheck>,
    diameter_constant: f64,
    k0_bound: f64,
    anchor: DVector<f64>,
    fixed_point: DVector<f64>,
}

impl IFSystem {
    /// Similarity system on an axis-aligned seed box.
    pub fn similarity(
        sims: Vec<Similarity>,
        seed: AxisBox,
        omega_margin: f64,
        s_low: f64,
        s_up: f64,
    ) -> Result<Self> {
        let region = SeedRegion::boxed(seed, omega_margin)?;
        Self::new(sims.into_iter().map(SmoothMap::from).collect(), region, s_low, s_up)
    }

    pub fn new(maps: Vec<SmoothMap>, region: SeedRegion, s_low: f64, s_up: f64) -> Result<Self> {
        Self::assemble(maps, region, s_low, s_up, None)
    }

    pub(crate) fn assemble(
        maps: Vec<SmoothMap>,
        region: SeedRegion,
        s_low: f64,
        s_up: f64,
        conjugation: Option<ConjugationCheck>,
    ) -> Result<Self> {
        let alphabet = Alphabet::new(maps.len())?;
        let d = region.dim();
        if let Some(bad) = maps.iter().find(|m| m.dim() != d) {
            return Err(Error::Dimension(format!(
                "map of dimension {} on a seed region of dimension {d}",
                bad.dim()
            )));
        }
        check_contraction_constants(s_low, s_up)?;

        let fast = detect_fast_path(&maps, &region);
        let chart_norms = match (&conjugation, &fast) {
            (Some(c), _) => Some(c.norms),
            (None, Some(FastPath { chart: Chart::Radial(h), .. })) => {
                Some(chart_norms(h, &region, DEFAULT_CHART_GRID))
            }
            _ => None,
        };

        let anchor = region.anchor();
        let mut system = Self {
            alphabet,
            maps,
            rho0: 0.5 * region.base().shortest_side(),
            region,
            s_low,
            s_up,
            fast,
            chart_norms,
            conjugation,
            diameter_constant: 1.0,
            k0_bound: 1.0,
            fixed_point: anchor.clone(),
            anchor,
        };
        system.check_invariance()?;
        system.fixed_point = system.compute_fixed_point();
        system.diameter_constant = system.compute_diameter_constant()?;
        system.k0_bound = system.compute_k0_bound()?;
        Ok(system)
    }

    /// Overrides the boundary-density scale `ϱ₀`.
    pub fn with_rho0(mut self, rho0: f64) -> Result<Self> {
        if !(rho0 > 0.0 && rho0.is_finite()) {
            return Err(Error::InvalidSystem(format!("rho0 = {rho0} must be positive")));
        }
        self.rho0 = rho0;
        Ok(self)
    }

    /// Replaces `s_low`, `s_up` after checking `s_up² ≤ s_low`.
    pub fn with_contraction_bounds(mut self, s_low: f64, s_up: f64) -> Result<Self> {
        check_contraction_constants(s_low, s_up)?;
        self.s_low = s_low;
        self.s_up = s_up;
        Ok(self)
    }

    /// The system conjugated by the rotation `x ↦ R x`. Only similarity
    /// systems are supported.
    pub fn rotated(&self, rotation: &DMatrix<f64>) -> Result<Self> {
        let sims = self
            .similarities()
            .ok_or_else(|| Error::Precondition("rotation needs a similarity system".into()))?;
        let zero = DVector::zeros(self.dim());
        let maps = sims
            .iter()
            .map(|s| s.conjugate_rigid(rotation, &zero).map(SmoothMap::from))
            .collect::<Result<Vec<_>>>()?;
        let outer = Isometry::new(rotation.clone(), zero.clone())?;
        let chart = match self.region.chart() {
            Chart::Identity => Chart::Rigid(outer),
            Chart::Rigid(iso) => Chart::Rigid(iso.then(&outer)),
            Chart::Radial(_) => unreachable!("similarity systems have affine charts"),
        };
        let region = SeedRegion::new(self.region.base().clone(), chart, self.region.margin())?;
        Self::new(maps, region, self.s_low, self.s_up)?.with_rho0(self.rho0)
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    pub fn maps(&self) -> &[SmoothMap] {
        &self.maps
    }

    pub fn region(&self) -> &SeedRegion {
        &self.region
    }

    pub fn s_low(&self) -> f64 {
        self.s_low
    }

    pub fn s_up(&self) -> f64 {
        self.s_up
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    pub fn omega_margin(&self) -> f64 {
        self.region.margin()
    }

    /// `D ≥ 1` with `diam φ_w(X) ≤ D·‖φ_w′‖`.
    pub fn diameter_constant(&self) -> f64 {
        self.diameter_constant
    }

    /// Upper bound for `|φ_w′(x)| / |φ_w′(y)⁻¹|⁻¹` over words and points of
    /// the working domain.
    pub fn k0_bound(&self) -> f64 {
        self.k0_bound
    }

    pub fn chart_norms(&self) -> Option<ChartNorms> {
        self.chart_norms
    }

    pub fn conjugation(&self) -> Option<&ConjugationCheck> {
        self.conjugation.as_ref()
    }

    /// The representative point of `X` that words are applied to.
    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    /// Fixed point of `φ_0`, i.e. `π(0,0,…)`.
    pub fn fixed_point(&self) -> &DVector<f64> {
        &self.fixed_point
    }

    /// The maps as plain similarities, when every map is one.
    pub fn similarities(&self) -> Option<&[Similarity]> {
        match &self.fast {
            Some(FastPath {
                sims,
                chart: Chart::Identity,
            }) => Some(sims),
            _ => None,
        }
    }

    pub fn is_similarity(&self) -> bool {
        self.similarities().is_some()
    }

    pub fn deformation(&self) -> Option<Deformation> {
        match &self.fast {
            Some(FastPath {
                chart: Chart::Radial(h),
                ..
            }) => Some(*h),
            _ => None,
        }
    }

    /// Similarity ratios in the model chart, when the system has one.
    pub fn model_ratios(&self) -> Option<Vec<f64>> {
        self.fast
            .as_ref()
            .map(|f| f.sims.iter().map(Similarity::scale).collect())
    }

    /// Lower bound for `dist(E, ∂Ω)`.
    pub fn boundary_distance(&self) -> f64 {
        let m = self.region.margin();
        match (&self.fast, self.chart_norms) {
            (Some(f), _) if f.chart.is_affine() => m,
            (_, Some(n)) => (m / n.h_inv_norm).max(0.5 * m),
            _ => 0.5 * m,
        }
    }

    /// `(φ_w(x), φ_w′(x))` by the chain rule, checking that every
    /// intermediate point stays in `Ω′`.
    pub fn compose(&self, word: &Word, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.alphabet.check(word)?;
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point of length {} for a system in dimension {}",
                x.len(),
                self.dim()
            )));
        }
        if !self.region.in_omega_prime(x) {
            return Err(self.escape(word, x));
        }
        let mut y = x.clone();
        let mut jac = DMatrix::identity(self.dim(), self.dim());
        for &s in word.symbols().iter().rev() {
            let map = &self.maps[s as usize];
            jac = map.jacobian(&y) * jac;
            y = map.eval(&y);
            if !self.region.in_omega_prime(&y) {
                return Err(self.escape(word, &y));
            }
        }
        Ok((y, jac))
    }

    fn escape(&self, word: &Word, y: &DVector<f64>) -> Error {
        Error::DomainEscape {
            word: word.to_string(),
            point: y.iter().copied().collect(),
        }
    }

    /// `φ_w(x)`, in closed form when available.
    pub fn eval_word(&self, word: &Word, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.alphabet.check(word)?;
        match &self.fast {
            Some(f) => Ok(fast_eval(f, &WordSimilarity::of_word(&f.sims, word), x)),
            None => self.compose(word, x).map(|(v, _)| v),
        }
    }

    /// `φ_w′(x)`, in closed form when available.
    pub fn word_jacobian(&self, word: &Word, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.alphabet.check(word)?;
        match &self.fast {
            Some(f) => Ok(fast_jacobian(f, &WordSimilarity::of_word(&f.sims, word), x)),
            None => self.compose(word, x).map(|(_, j)| j),
        }
    }

    pub fn word_value_at_anchor(&self, word: &Word) -> Result<DVector<f64>> {
        self.eval_word(word, &self.anchor)
    }

    /// Upper bound for `‖φ_w′‖ = sup_Ω |φ_w′|`.
    pub fn sup_norm(&self, word: &Word) -> Result<f64> {
        self.alphabet.check(word)?;
        match (&self.fast, self.chart_norms) {
            (Some(f), norms) => {
                let ratio: f64 = word.symbols().iter().map(|&s| f.sims[s as usize].scale()).product();
                Ok(match (&f.chart, norms) {
                    (Chart::Radial(_), Some(n)) => ratio * n.h_norm * n.h_inv_norm,
                    _ => ratio,
                })
            }
            _ => {
                let mut best: f64 = 0.0;
                for x in self.region.omega_grid(3) {
                    let (_, j) = self.compose(word, &x)?;
                    best = best.max(linalg::op_norm(&j));
                }
                Ok(best * 1.01)
            }
        }
    }

    /// Lower estimate of `inf |φ_w′(x)⁻¹|⁻¹` over `X`: the smallest co-norm at
    /// the box corners and center, deflated by [`k0_bound`](Self::k0_bound).
    pub fn inf_norm(&self, word: &Word) -> Result<f64> {
        if self.is_similarity() {
            let sims = self.similarities().unwrap();
            return Ok(word.symbols().iter().map(|&s| sims[s as usize].scale()).product());
        }
        let mut worst = f64::INFINITY;
        for x in self.region.seed_corners_and_center() {
            worst = worst.min(linalg::co_norm(&self.word_jacobian(word, &x)?));
        }
        Ok(worst / self.k0_bound)
    }

    /// Applies `f` to every word of length `n` in lexicographic order,
    /// handing it a [`WordView`] that evaluates `φ_w` and `φ_w′`.
    pub fn map_words<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&WordView<'_>) -> T + Sync,
    {
        self.map_subtree(&Word::empty(), n, f)
    }

    /// As [`map_words`](Self::map_words), over the words `prefix·j` with `|j| = n`.
    pub fn map_subtree<T, F>(&self, prefix: &Word, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&WordView<'_>) -> T + Sync,
    {
        self.alphabet.check(prefix)?;
        let count = self.alphabet.count_at_depth(prefix.len() + n).map(|_| self.alphabet.size().pow(n as u32))?;
        Ok(match &self.fast {
            Some(fp) => {
                let root = WordSimilarity::of_word(&fp.sims, prefix);
                words::map_subtree_similarities(&fp.sims, prefix, &root, n, |w, ws| {
                    f(&WordView {
                        system: self,
                        word: w,
                        sim: Some(ws),
                    })
                })
            }
            None => (0..count)
                .into_par_iter()
                .map(|k| {
                    let w = prefix.join(&self.alphabet.word_at(n, k));
                    f(&WordView {
                        system: self,
                        word: &w,
                        sim: None,
                    })
                })
                .collect(),
        })
    }

    /// Precomputes what [`WordView::jacobian_at`] needs at `x`.
    pub fn sample_point(&self, x: &DVector<f64>) -> SamplePoint {
        match &self.fast {
            Some(FastPath { chart: Chart::Identity, .. }) | None => SamplePoint {
                actual: x.clone(),
                model: x.clone(),
                chart_jac_inv: None,
            },
            Some(FastPath { chart, .. }) => {
                let model = chart.inverse(x);
                let inv = chart
                    .jacobian(&model)
                    .try_inverse()
                    .expect("chart jacobian is invertible");
                SamplePoint {
                    actual: x.clone(),
                    model,
                    chart_jac_inv: Some(inv),
                }
            }
        }
    }

    /// The box corners and center of `X`, used for cylinder inf-norms.
    pub fn seed_sample_points(&self) -> Vec<SamplePoint> {
        self.region
            .seed_corners_and_center()
            .iter()
            .map(|x| self.sample_point(x))
            .collect()
    }

    fn check_invariance(&self) -> Result<()> {
        const TOL: f64 = 1e-9;
        let offending = match &self.fast {
            Some(FastPath {
                sims,
                chart: Chart::Radial(_),
            }) => {
                let base = self.region.base();
                sims.iter().position(|s| {
                    base.corners()
                        .iter()
                        .any(|c| !base.contains_with_tol(&s.apply(c), TOL))
                })
            }
            _ => {
                let pts = if self.region.chart().is_affine() && self.fast.is_some() {
                    self.region.seed_corners_and_center()
                } else {
                    self.region
                        .base()
                        .grid(5)
                        .iter()
                        .map(|p| self.region.chart().eval(p))
                        .collect()
                };
                self.maps
                    .iter()
                    .position(|m| pts.iter().any(|p| !self.region.in_seed(&m.eval(p), TOL)))
            }
        };
        match offending {
            Some(i) => Err(Error::InvalidSystem(format!("map {i} does not send X into X"))),
            None => Ok(()),
        }
    }

    fn compute_fixed_point(&self) -> DVector<f64> {
        match &self.fast {
            Some(f) => {
                let s = &f.sims[0];
                let mut p = f.chart.inverse(&self.anchor);
                for _ in 0..10_000 {
                    let next = s.apply(&p);
                    let step = (&next - &p).norm();
                    p = next;
                    if step < 1e-16 {
                        break;
                    }
                }
                f.chart.eval(&p)
            }
            None => {
                let mut p = self.anchor.clone();
                for _ in 0..10_000 {
                    let next = self.maps[0].eval(&p);
                    let step = (&next - &p).norm();
                    p = next;
                    if step < 1e-16 {
                        break;
                    }
                }
                p
            }
        }
    }

    fn compute_diameter_constant(&self) -> Result<f64> {
        let diam = self.region.base().diameter();
        match (&self.fast, self.chart_norms) {
            (Some(f), _) if f.chart.is_affine() => Ok(diam.max(1.0)),
            (_, Some(n)) => Ok((diam * n.h_norm * n.h_norm * n.h_inv_norm).max(1.0)),
            _ => {
                let grid = self.region.base().grid(4);
                let pts: Vec<_> = grid.iter().map(|p| self.region.chart().eval(p)).collect();
                let mut best: f64 = 1.0;
                for n in 1..=2 {
                    let ratios = self.map_words(n, |v| -> Result<f64> {
                        let imgs = pts.iter().map(|p| v.eval(p)).collect::<Result<Vec<_>>>()?;
                        let mut diam: f64 = 0.0;
                        for (i, a) in imgs.iter().enumerate() {
                            for b in &imgs[i + 1..] {
                                diam = diam.max((a - b).norm());
                            }
                        }
                        Ok(diam / self.sup_norm(v.word())?)
                    })?;
                    for r in ratios {
                        best = best.max(r? * 1.05);
                    }
                }
                Ok(best)
            }
        }
    }

    fn compute_k0_bound(&self) -> Result<f64> {
        match (&self.fast, self.chart_norms) {
            (Some(f), _) if f.chart.is_affine() => Ok(1.0),
            (_, Some(n)) => Ok((n.h_norm * n.h_inv_norm).powi(2)),
            _ => {
                let grid = self.region.omega_grid(3);
                let mut best: f64 = 1.0;
                for n in 1..=2 {
                    let vals = self.map_words(n, |v| -> Result<f64> {
                        let mut hi: f64 = 0.0;
                        let mut lo = f64::INFINITY;
                        for x in &grid {
                            let (a, b) = linalg::norm_pair(&v.jacobian(x)?);
                            hi = hi.max(a);
                            lo = lo.min(b);
                        }
                        Ok(hi / lo)
                    })?;
                    for v in vals {
                        best = best.max(v? * 1.05);
                    }
                }
                Ok(best)
            }
        }
    }
}

fn check_contraction_constants(s_low: f64, s_up: f64) -> Result<()> {
    if !(s_low > 0.0 && s_low <= s_up && s_up < 1.0) {
        return Err(Error::InvalidSystem(format!(
            "need 0 < s_low ≤ s_up < 1, got s_low = {s_low}, s_up = {s_up}"
        )));
    }
    if s_up * s_up > s_low {
        return Err(Error::InvalidSystem(format!(
            "s_up² = {} exceeds s_low = {s_low}",
            s_up * s_up
        )));
    }
    Ok(())
}

fn detect_fast_path(maps: &[SmoothMap], region: &SeedRegion) -> Option<FastPath> {
    if let Some(sims) = maps
        .iter()
        .map(|m| m.as_similarity().cloned())
        .collect::<Option<Vec<_>>>()
    {
        return region.chart().is_affine().then_some(FastPath {
            sims,
            chart: Chart::Identity,
        });
    }
    let Chart::Radial(h) = region.chart() else {
        return None;
    };
    let sims = maps
        .iter()
        .map(|m| match m {
            SmoothMap::Conjugated(c) if c.chart == Chart::Radial(*h) => c.inner.as_similarity().cloned(),
            _ => None,
        })
        .collect::<Option<Vec<_>>>()?;
    Some(FastPath {
        sims,
        chart: Chart::Radial(*h),
    })
}

fn fast_eval(f: &FastPath, ws: &WordSimilarity, x: &DVector<f64>) -> DVector<f64> {
    match &f.chart {
        Chart::Identity => ws.apply(x),
        chart => chart.eval(&ws.apply(&chart.inverse(x))),
    }
}

fn fast_jacobian(f: &FastPath, ws: &WordSimilarity, x: &DVector<f64>) -> DMatrix<f64> {
    match &f.chart {
        Chart::Identity => ws.linear(),
        chart => {
            let p = chart.inverse(x);
            let q = ws.apply(&p);
            let back = chart
                .jacobian(&p)
                .try_inverse()
                .expect("chart jacobian is invertible");
            chart.jacobian(&q) * ws.linear() * back
        }
    }
}

/// A point of `Ω` with its model-chart coordinates cached.
#[derive(Debug, Clone)]
pub struct SamplePoint {
    pub actual: DVector<f64>,
    model: DVector<f64>,
    chart_jac_inv: Option<DMatrix<f64>>,
}

/// Evaluation handle for one word during an enumeration.
pub struct WordView<'a> {
    system: &'a IFSystem,
    word: &'a Word,
    sim: Option<&'a WordSimilarity>,
}

impl WordView<'_> {
    pub fn word(&self) -> &Word {
        self.word
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match (self.sim, &self.system.fast) {
            (Some(ws), Some(f)) => Ok(fast_eval(f, ws, x)),
            _ => self.system.compose(self.word, x).map(|(v, _)| v),
        }
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match (self.sim, &self.system.fast) {
            (Some(ws), Some(f)) => Ok(fast_jacobian(f, ws, x)),
            _ => self.system.compose(self.word, x).map(|(_, j)| j),
        }
    }

    /// `φ_w′` at a precomputed sample point.
    pub fn jacobian_at(&self, s: &SamplePoint) -> Result<DMatrix<f64>> {
        match (self.sim, &self.system.fast) {
            (Some(ws), Some(f)) => Ok(match (&f.chart, &s.chart_jac_inv) {
                (Chart::Identity, _) | (_, None) => ws.linear(),
                (chart, Some(inv)) => chart.jacobian(&ws.apply(&s.model)) * ws.linear() * inv,
            }),
            _ => self.jacobian(&s.actual),
        }
    }

    /// `φ_w` at a precomputed sample point.
    pub fn eval_at(&self, s: &SamplePoint) -> Result<DVector<f64>> {
        match (self.sim, &self.system.fast) {
            (Some(ws), Some(f)) => Ok(match &f.chart {
                Chart::Identity => ws.apply(&s.actual),
                chart => chart.eval(&ws.apply(&s.model)),
            }),
            _ => self.eval(&s.actual),
        }
    }

    /// `φ_w` at the anchor of `X`.
    pub fn at_anchor(&self) -> Result<DVector<f64>> {
        match (self.sim, &self.system.fast) {
            (Some(ws), Some(f)) => Ok(match &f.chart {
                Chart::Identity => ws.apply(&self.system.anchor),
                chart => chart.eval(&ws.apply(&self.system.region.base().center())),
            }),
            _ => self.eval(&self.system.anchor),
        }
    }

    /// Upper bound for `‖φ_w′‖`, as [`IFSystem::sup_norm`].
    pub fn sup_norm(&self) -> Result<f64> {
        match (self.sim, self.system.chart_norms) {
            (Some(ws), Some(n)) => Ok(ws.scale * n.h_norm * n.h_inv_norm),
            (Some(ws), None) => Ok(ws.scale),
            _ => self.system.sup_norm(self.word),
        }
    }

    /// Closed-form similarity ratio in the model chart, if any.
    pub fn model_ratio(&self) -> Option<f64> {
        self.sim.map(|ws| ws.scale)
    }

    /// Radius bounding the cylinder around [`at_anchor`](Self::at_anchor).
    pub fn radius_bound(&self) -> Result<f64> {
        Ok(self.system.diameter_constant * self.sup_norm()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{limit_point, project};
    use proptest::prelude::*;

    pub(crate) fn cantor() -> IFSystem {
        IFSystem::similarity(
            vec![
                Similarity::scaling(1.0 / 3.0, &[0.0]).unwrap(),
                Similarity::scaling(1.0 / 3.0, &[2.0 / 3.0]).unwrap(),
            ],
            AxisBox::unit(1),
            0.1,
            0.3,
            0.35,
        )
        .unwrap()
    }

    pub(crate) fn dust() -> IFSystem {
        let mut sims = Vec::new();
        for k in 0..8 {
            let b: Vec<f64> = (0..3).map(|i| if k >> (2 - i) & 1 == 1 { 2.0 / 3.0 } else { 0.0 }).collect();
            sims.push(Similarity::scaling(1.0 / 3.0, &b).unwrap());
        }
        IFSystem::similarity(sims, AxisBox::unit(3), 0.05, 0.3, 0.5).unwrap()
    }

    fn w(s: &[u32]) -> Word {
        Word::from(s.to_vec())
    }

    #[test]
    fn compose_examples() {
        let sys = cantor();
        let (v, j) = sys.compose(&w(&[0, 1]), &DVector::from_vec(vec![0.0])).unwrap();
        assert!((v[0] - 2.0 / 9.0).abs() < 1e-15);
        assert!((j[(0, 0)] - 1.0 / 9.0).abs() < 1e-15);

        let x = DVector::from_vec(vec![0.4]);
        let (v, j) = sys.compose(&Word::empty(), &x).unwrap();
        assert_eq!(v, x);
        assert_eq!(j, DMatrix::identity(1, 1));

        let d = dust();
        let (_, j) = d.compose(&w(&[3, 7, 0, 5]), &DVector::from_element(3, 0.5)).unwrap();
        for s in linalg::singular_values(&j) {
            assert!((s - 3f64.powi(-4)).abs() < 1e-15);
        }
    }

    #[test]
    fn compose_reports_domain_escape() {
        let sys = cantor();
        let far = DVector::from_vec(vec![5.0]);
        assert!(matches!(sys.compose(&w(&[0]), &far), Err(Error::DomainEscape { .. })));
    }

    #[test]
    fn constraint_checks() {
        let sims = vec![
            Similarity::scaling(1.0 / 3.0, &[0.0]).unwrap(),
            Similarity::scaling(1.0 / 3.0, &[2.0 / 3.0]).unwrap(),
        ];
        // s_up² > s_low
        assert!(IFSystem::similarity(sims.clone(), AxisBox::unit(1), 0.1, 0.2, 0.5).is_err());
        // a map leaving X
        let bad = vec![sims[0].clone(), Similarity::scaling(1.0 / 3.0, &[0.9]).unwrap()];
        assert!(IFSystem::similarity(bad, AxisBox::unit(1), 0.1, 0.3, 0.35).is_err());
        assert!(IFSystem::similarity(vec![sims[0].clone()], AxisBox::unit(1), 0.1, 0.3, 0.35).is_err());
    }

    #[test]
    fn project_examples() {
        let sys = cantor();
        let p = project(&sys, &w(&[0, 0, 0, 0])).unwrap();
        assert!(p.radius_bound <= 3f64.powi(-4) + 1e-15);
        assert!(p.point[0].abs() <= p.radius_bound);

        // φ_0 applied to the fixed point 1 of φ_1.
        let p = project(&sys, &w(&[0, 1, 1, 1, 1, 1])).unwrap();
        assert!((p.point[0] - 1.0 / 3.0).abs() <= 3f64.powi(-6));

        for n in 1..10 {
            let p = project(&sys, &Word::from(vec![1; n])).unwrap();
            assert!((p.point[0] - 1.0).abs() <= 3f64.powi(-(n as i32)));
        }
        assert!(project(&sys, &Word::empty()).is_err());
    }

    #[test]
    fn fixed_point_and_limit_points() {
        let sys = cantor();
        assert!(sys.fixed_point()[0].abs() < 1e-15);
        let p = limit_point(&sys, &w(&[1])).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_preserves_limit_set_geometry() {
        let sys = dust();
        let (s, c) = 0.4f64.sin_cos();
        let r = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        let rot = sys.rotated(&r).unwrap();
        let word = w(&[1, 6, 3]);
        let a = sys.word_value_at_anchor(&word).unwrap();
        let b = rot.word_value_at_anchor(&word).unwrap();
        assert!((&r * a - b).norm() < 1e-14);
        assert!(rot.is_similarity());
    }

    fn word_strategy(size: u32, max_len: usize) -> impl Strategy<Value = Word> {
        proptest::collection::vec(0..size, 0..=max_len).prop_map(Word::from)
    }

    proptest! {
        #[test]
        fn chain_rule(i in word_strategy(8, 3), j in word_strategy(8, 3), x in proptest::collection::vec(0.0..1.0f64, 3)) {
            let sys = dust();
            let x = DVector::from_vec(x);
            let (_, jij) = sys.compose(&i.join(&j), &x).unwrap();
            let (y, jj) = sys.compose(&j, &x).unwrap();
            let (_, ji) = sys.compose(&i, &y).unwrap();
            let prod = ji * jj;
            prop_assert!((&jij - &prod).amax() <= 1e-10 * prod.amax());
        }

        #[test]
        fn nested_projections(i in word_strategy(2, 6), j in word_strategy(2, 6)) {
            prop_assume!(!i.is_empty());
            let sys = cantor();
            let outer = project(&sys, &i).unwrap();
            let inner = project(&sys, &i.join(&j)).unwrap();
            prop_assert!((&outer.point - &inner.point).norm() <= outer.radius_bound + inner.radius_bound + 1e-15);
            let n = (i.len() + j.len()) as i32;
            prop_assert!(inner.radius_bound <= sys.s_up().powi(n) * sys.diameter_constant() + 1e-15);
        }
    }
}
