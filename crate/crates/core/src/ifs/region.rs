use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use super::chart::Chart;
use crate::error::{Error, Result};

/// A closed axis-aligned box `[min, max] ⊂ ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisBox {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl AxisBox {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::Dimension(format!(
                "box corners have lengths {} and {}",
                min.len(),
                max.len()
            )));
        }
        if min.iter().zip(&max).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidSystem("seed box is degenerate".into()));
        }
        Ok(Self { min, max })
    }

    /// The unit cube `[0,1]^d`.
    pub fn unit(d: usize) -> Self {
        Self {
            min: vec![0.0; d],
            max: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.min.iter().zip(&self.max).map(|(a, b)| 0.5 * (a + b)),
        )
    }

    pub fn sides(&self) -> impl Iterator<Item = f64> + '_ {
        self.min.iter().zip(&self.max).map(|(a, b)| b - a)
    }

    pub fn shortest_side(&self) -> f64 {
        self.sides().fold(f64::INFINITY, f64::min)
    }

    pub fn diameter(&self) -> f64 {
        self.sides().map(|s| s * s).sum::<f64>().sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.sides().product()
    }

    pub fn dilate(&self, margin: f64) -> Self {
        Self {
            min: self.min.iter().map(|a| a - margin).collect(),
            max: self.max.iter().map(|b| b + margin).collect(),
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.contains_with_tol(x, 0.0)
    }

    pub fn contains_with_tol(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.min.iter().zip(&self.max))
                .all(|(v, (a, b))| *v >= a - tol && *v <= b + tol)
    }

    /// Whether `x` lies in the open interior.
    pub fn interior_contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(v, (a, b))| *v > *a && *v < *b)
    }

    /// Euclidean distance from `x` to the box (zero inside).
    pub fn distance_to(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (a, b))| {
                let gap = (a - v).max(v - b).max(0.0);
                gap * gap
            })
            .sum::<f64>()
            .sqrt()
    }

    /// All `2^d` vertices.
    pub fn corners(&self) -> Vec<DVector<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                DVector::from_iterator(
                    d,
                    (0..d).map(|k| if mask >> k & 1 == 1 { self.max[k] } else { self.min[k] }),
                )
            })
            .collect()
    }

    /// Corners plus the center, the fixed sample used for cylinder inf-norms.
    pub fn corners_and_center(&self) -> Vec<DVector<f64>> {
        let mut pts = self.corners();
        pts.push(self.center());
        pts
    }

    /// Uniform tensor grid with `res` nodes per axis, endpoints included.
    pub fn grid(&self, res: usize) -> Vec<DVector<f64>> {
        let d = self.dim();
        let res = res.max(2);
        let total = res.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                DVector::from_iterator(
                    d,
                    (0..d).map(|k| {
                        let i = idx % res;
                        idx /= res;
                        self.min[k] + (self.max[k] - self.min[k]) * i as f64 / (res - 1) as f64
                    }),
                )
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.min
                .iter()
                .zip(&self.max)
                .map(|(a, b)| rng.random_range(*a..*b)),
        )
    }

    /// Whether the open interiors of two boxes meet.
    pub fn interiors_overlap(&self, other: &AxisBox) -> bool {
        self.min
            .iter()
            .zip(&self.max)
            .zip(other.min.iter().zip(&other.max))
            .all(|((a0, a1), (b0, b1))| a0.max(*b0) < a1.min(*b1))
    }

    /// Smallest box containing `points`.
    pub fn bounding(points: &[DVector<f64>]) -> Option<Self> {
        let first = points.first()?;
        let mut min: Vec<f64> = first.iter().copied().collect();
        let mut max = min.clone();
        for p in &points[1..] {
            for k in 0..min.len() {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        Some(Self { min, max })
    }
}

/// The seed set `X = chart(box)` together with the working domains
/// `Ω = chart(box + margin)` and `Ω′ = chart(box + 2·margin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRegion {
    base: AxisBox,
    chart: Chart,
    margin: f64,
}

impl SeedRegion {
    pub fn new(base: AxisBox, chart: Chart, margin: f64) -> Result<Self> {
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::InvalidSystem(format!("omega_margin {margin} must be positive")));
        }
        Ok(Self {
            base,
            chart,
            margin,
        })
    }

    pub fn boxed(base: AxisBox, margin: f64) -> Result<Self> {
        Self::new(base, Chart::Identity, margin)
    }

    pub fn base(&self) -> &AxisBox {
        &self.base
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn omega_box(&self) -> AxisBox {
        self.base.dilate(self.margin)
    }

    pub fn omega_prime_box(&self) -> AxisBox {
        self.base.dilate(2.0 * self.margin)
    }

    pub fn in_seed(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.base.contains_with_tol(&self.chart.inverse(x), tol)
    }

    pub fn in_omega(&self, x: &DVector<f64>) -> bool {
        self.omega_box().contains(&self.chart.inverse(x))
    }

    pub fn in_omega_prime(&self, x: &DVector<f64>) -> bool {
        self.omega_prime_box().contains(&self.chart.inverse(x))
    }

    /// Image under the chart of the box center.
    pub fn anchor(&self) -> DVector<f64> {
        self.chart.eval(&self.base.center())
    }

    pub fn sample_omega<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.chart.eval(&self.omega_box().sample(rng))
    }

    pub fn sample_seed<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.chart.eval(&self.base.sample(rng))
    }

    /// Grid of `Ω` pushed through the chart.
    pub fn omega_grid(&self, res: usize) -> Vec<DVector<f64>> {
        self.omega_box()
            .grid(res)
            .into_iter()
            .map(|p| self.chart.eval(&p))
            .collect()
    }

    pub fn seed_corners_and_center(&self) -> Vec<DVector<f64>> {
        self.base
            .corners_and_center()
            .into_iter()
            .map(|p| self.chart.eval(&p))
            .collect()
    }
}
