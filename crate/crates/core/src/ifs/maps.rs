use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::chart::Chart;
use crate::error::{Error, Result};

/// Evaluation contract for a user-supplied `C²` map on an open set of `ℝ^d`.
pub trait C2Map: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// Inverse image, when the map can provide one. Used by the sampled
    /// open-set-condition check.
    fn inverse(&self, _y: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
}

/// `x ↦ scale · orthogonal · x + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct Similarity {
    scale: f64,
    orthogonal: DMatrix<f64>,
    translation: DVector<f64>,
}

impl Similarity {
    pub fn new(scale: f64, orthogonal: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        let d = translation.len();
        if orthogonal.shape() != (d, d) {
            return Err(Error::Dimension(format!(
                "orthogonal part is {:?}, translation has length {d}",
                orthogonal.shape()
            )));
        }
        if !(scale > 0.0 && scale < 1.0) {
            return Err(Error::InvalidSystem(format!("similarity ratio {scale} not in (0,1)")));
        }
        let defect = (orthogonal.transpose() * &orthogonal - DMatrix::identity(d, d)).amax();
        if defect > 1e-12 {
            return Err(Error::InvalidSystem(format!(
                "linear part is not orthogonal (|QᵀQ - I| = {defect:e})"
            )));
        }
        Ok(Self {
            scale,
            orthogonal,
            translation,
        })
    }

    /// Pure scaling about the origin followed by a translation.
    pub fn scaling(scale: f64, translation: &[f64]) -> Result<Self> {
        let d = translation.len();
        Self::new(
            scale,
            DMatrix::identity(d, d),
            DVector::from_column_slice(translation),
        )
    }

    /// Planar similarity rotating by `angle` radians.
    pub fn planar(scale: f64, angle: f64, translation: [f64; 2]) -> Result<Self> {
        let (s, c) = angle.sin_cos();
        Self::new(
            scale,
            DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
            DVector::from_column_slice(&translation),
        )
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn orthogonal(&self) -> &DMatrix<f64> {
        &self.orthogonal
    }

    pub fn translation(&self) -> &DVector<f64> {
        &self.translation
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.orthogonal * x) * self.scale + &self.translation
    }

    pub fn linear(&self) -> DMatrix<f64> {
        &self.orthogonal * self.scale
    }

    pub fn inverse_apply(&self, y: &DVector<f64>) -> DVector<f64> {
        self.orthogonal.transpose() * (y - &self.translation) / self.scale
    }

    /// Whether the linear part permutes coordinate axes up to sign, so that
    /// axis-aligned boxes map to axis-aligned boxes.
    pub fn is_axis_aligned(&self) -> bool {
        self.orthogonal.row_iter().all(|row| {
            let big = row.iter().filter(|v| (v.abs() - 1.0).abs() < 1e-12).count();
            let zero = row.iter().filter(|v| v.abs() < 1e-12).count();
            big == 1 && zero + 1 == row.len()
        })
    }

    /// Conjugate by the rigid motion `x ↦ R x + shift`.
    pub fn conjugate_rigid(&self, rotation: &DMatrix<f64>, shift: &DVector<f64>) -> Result<Self> {
        // R φ(Rᵀ(y - s)) + s
        let orth = rotation * &self.orthogonal * rotation.transpose();
        let lin = &orth * self.scale;
        let translation = rotation * &self.translation + shift - lin * shift;
        Self::new(self.scale, orth, translation)
    }
}

/// `x ↦ linear · x + translation` with a nonsingular linear part.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    linear: DMatrix<f64>,
    translation: DVector<f64>,
}

impl AffineMap {
    pub fn new(linear: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        let d = translation.len();
        if linear.shape() != (d, d) {
            return Err(Error::Dimension(format!(
                "linear part is {:?}, translation has length {d}",
                linear.shape()
            )));
        }
        if linear.clone().try_inverse().is_none() {
            return Err(Error::Singular { ratio: 0.0 });
        }
        Ok(Self {
            linear,
            translation,
        })
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }
}

/// A map `chart ∘ inner ∘ chart⁻¹`.
#[derive(Debug, Clone)]
pub struct Conjugated {
    pub inner: Box<SmoothMap>,
    pub chart: Chart,
}

/// The map class handled by [`IFSystem`](super::IFSystem).
#[derive(Clone)]
pub enum SmoothMap {
    Similarity(Similarity),
    Affine(AffineMap),
    Conjugated(Conjugated),
    Custom(Arc<dyn C2Map>),
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmoothMap::Similarity(s) => f.debug_tuple("Similarity").field(s).finish(),
            SmoothMap::Affine(a) => f.debug_tuple("Affine").field(a).finish(),
            SmoothMap::Conjugated(c) => f.debug_tuple("Conjugated").field(c).finish(),
            SmoothMap::Custom(c) => write!(f, "Custom(dim = {})", c.dim()),
        }
    }
}

impl From<Similarity> for SmoothMap {
    fn from(s: Similarity) -> Self {
        SmoothMap::Similarity(s)
    }
}

impl From<AffineMap> for SmoothMap {
    fn from(a: AffineMap) -> Self {
        SmoothMap::Affine(a)
    }
}

impl SmoothMap {
    pub fn dim(&self) -> usize {
        match self {
            SmoothMap::Similarity(s) => s.dim(),
            SmoothMap::Affine(a) => a.translation.len(),
            SmoothMap::Conjugated(c) => c.inner.dim(),
            SmoothMap::Custom(c) => c.dim(),
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            SmoothMap::Similarity(s) => s.apply(x),
            SmoothMap::Affine(a) => &a.linear * x + &a.translation,
            SmoothMap::Conjugated(c) => c.chart.eval(&c.inner.eval(&c.chart.inverse(x))),
            SmoothMap::Custom(c) => c.eval(x),
        }
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            SmoothMap::Similarity(s) => s.linear(),
            SmoothMap::Affine(a) => a.linear.clone(),
            SmoothMap::Conjugated(c) => {
                let p = c.chart.inverse(x);
                let q = c.inner.eval(&p);
                let outer = c.chart.jacobian(&q);
                let inner = c.inner.jacobian(&p);
                let back = c
                    .chart
                    .jacobian(&p)
                    .try_inverse()
                    .expect("chart jacobian is invertible");
                outer * inner * back
            }
            SmoothMap::Custom(c) => c.jacobian(x),
        }
    }

    pub fn inverse(&self, y: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            SmoothMap::Similarity(s) => Some(s.inverse_apply(y)),
            SmoothMap::Affine(a) => a
                .linear
                .clone()
                .try_inverse()
                .map(|inv| inv * (y - &a.translation)),
            SmoothMap::Conjugated(c) => {
                let p = c.chart.inverse(y);
                c.inner.inverse(&p).map(|q| c.chart.eval(&q))
            }
            SmoothMap::Custom(c) => c.inverse(y),
        }
    }

    pub fn as_similarity(&self) -> Option<&Similarity> {
        match self {
            SmoothMap::Similarity(s) => Some(s),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_rejects_non_orthogonal() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(Similarity::new(0.5, m, DVector::zeros(2)).is_err());
        assert!(Similarity::scaling(1.0, &[0.0]).is_err());
    }

    #[test]
    fn rigid_conjugation_matches_direct_composition() {
        let s = Similarity::planar(0.4, 0.3, [0.2, -0.1]).unwrap();
        let (sn, cs) = 0.7f64.sin_cos();
        let r = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
        let shift = DVector::from_vec(vec![1.0, 2.0]);
        let conj = s.conjugate_rigid(&r, &shift).unwrap();
        let y = DVector::from_vec(vec![0.3, -0.8]);
        let direct = &r * s.apply(&(r.transpose() * (&y - &shift))) + &shift;
        assert!((conj.apply(&y) - direct).norm() < 1e-14);
    }

    #[test]
    fn axis_alignment() {
        assert!(Similarity::scaling(0.5, &[0.0, 0.0]).unwrap().is_axis_aligned());
        let flip = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(Similarity::new(0.5, flip, DVector::zeros(2)).unwrap().is_axis_aligned());
        assert!(!Similarity::planar(0.5, 0.3, [0.0, 0.0]).unwrap().is_axis_aligned());
    }
}
