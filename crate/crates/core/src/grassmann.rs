//! Linear subspaces of `ℝ^d`, the projection metric on `G(d, l)`, cones
//! and tubes around affine planes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;

/// Columns collapsing below this fraction of the largest one are treated as
/// linearly dependent.
const RANK_TOL: f64 = 1e-12;

/// An `l`-dimensional linear subspace `V ⊂ ℝ^d`, `0 < l < d`, stored as a
/// `d × l` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Serialize for Subspace {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let cols: Vec<Vec<f64>> = self
            .basis
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        let mut st = s.serialize_struct("Subspace", 3)?;
        st.serialize_field("ambient", &self.dim_ambient())?;
        st.serialize_field("dim", &self.dim())?;
        st.serialize_field("basis", &cols)?;
        st.end()
    }
}

impl Subspace {
    /// Span of the columns of `spanning`, which must be linearly independent.
    pub fn new(spanning: DMatrix<f64>) -> Result<Self> {
        let (d, l) = spanning.shape();
        if l == 0 || l >= d {
            return Err(Error::Dimension(format!("need 0 < l < d, got l = {l}, d = {d}")));
        }
        let basis = linalg::orthonormalize_columns(&spanning, RANK_TOL).ok_or(Error::DegenerateCloud {
            rank: l - 1,
            needed: l,
        })?;
        Ok(Self { basis })
    }

    /// Span of the given vectors.
    pub fn span(vectors: &[&[f64]]) -> Result<Self> {
        let d = vectors.first().map_or(0, |v| v.len());
        if vectors.iter().any(|v| v.len() != d) {
            return Err(Error::Dimension("spanning vectors differ in length".into()));
        }
        Self::new(DMatrix::from_fn(d, vectors.len(), |i, j| vectors[j][i]))
    }

    /// The coordinate plane spanned by the listed axes.
    pub fn coordinate(d: usize, axes: &[usize]) -> Result<Self> {
        if axes.iter().any(|&k| k >= d) {
            return Err(Error::Dimension(format!("axis out of range for d = {d}")));
        }
        Self::new(DMatrix::from_fn(d, axes.len(), |i, j| if i == axes[j] { 1.0 } else { 0.0 }))
    }

    /// The line through the origin of `ℝ²` at angle `theta` to the x-axis.
    pub fn line_2d(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            basis: DMatrix::from_column_slice(2, 1, &[c, s]),
        }
    }

    /// Uniformly distributed element of `G(d, l)`: orthonormalized Gaussian frame.
    pub fn random<R: Rng + ?Sized>(d: usize, l: usize, rng: &mut R) -> Result<Self> {
        loop {
            let g = DMatrix::from_fn(d, l, |_, _| StandardNormal.sample(rng));
            match Self::new(g) {
                Err(Error::DegenerateCloud { .. }) => continue,
                other => return other,
            }
        }
    }

    pub fn dim_ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `P_V = B Bᵀ`.
    pub fn projection(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// `Q_V = I − P_V`.
    pub fn complement_projection(&self) -> DMatrix<f64> {
        let d = self.dim_ambient();
        DMatrix::identity(d, d) - self.projection()
    }

    /// `Q_V v`, computed as `v − B(Bᵀv)`.
    pub fn reject(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.basis * (self.basis.transpose() * v)
    }

    /// `|Q_V v|`.
    pub fn distance_norm(&self, v: &DVector<f64>) -> f64 {
        self.reject(v).norm()
    }

    /// `|P_V v|`.
    pub fn along_norm(&self, v: &DVector<f64>) -> f64 {
        (self.basis.transpose() * v).norm()
    }

    /// `V⊥`, from the eigenvectors of `Q_V` with eigenvalue one.
    pub fn orthogonal_complement(&self) -> Subspace {
        let eig = SymmetricEigen::new(self.complement_projection());
        let cols: Vec<DVector<f64>> = (0..eig.eigenvalues.len())
            .filter(|&k| eig.eigenvalues[k] > 0.5)
            .map(|k| eig.eigenvectors.column(k).clone_owned())
            .collect();
        let spanning = DMatrix::from_columns(&cols);
        Subspace {
            basis: linalg::orthonormalize_columns(&spanning, RANK_TOL).expect("complement has full rank"),
        }
    }

    fn same_shape(&self, other: &Subspace) -> Result<()> {
        if self.dim_ambient() != other.dim_ambient() || self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "G({}, {}) vs G({}, {})",
                self.dim_ambient(),
                self.dim(),
                other.dim_ambient(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// `d(V, W) = |Q_V − Q_W|`.
pub fn metric(v: &Subspace, w: &Subspace) -> Result<f64> {
    v.same_shape(w)?;
    Ok(linalg::op_norm(&(v.complement_projection() - w.complement_projection())))
}

/// `sup { |Q_W x| : x ∈ V, |x| = 1 }`, the largest singular value of `Q_W B_V`.
pub fn salli_distance(v: &Subspace, w: &Subspace) -> Result<f64> {
    v.same_shape(w)?;
    Ok(linalg::op_norm(&(w.complement_projection() * &v.basis)))
}

/// Principal angles between `V` and `W`, from the sines `σ(Q_W B_V)`, in
/// decreasing order.
pub fn principal_angles(v: &Subspace, w: &Subspace) -> Result<Vec<f64>> {
    v.same_shape(w)?;
    Ok(linalg::singular_values(&(w.complement_projection() * &v.basis))
        .into_iter()
        .map(|s| s.clamp(0.0, 1.0).asin())
        .collect())
}

/// `A V`, orthonormalized.
pub fn map_subspace(a: &DMatrix<f64>, v: &Subspace) -> Result<Subspace> {
    let d = v.dim_ambient();
    if a.shape() != (d, d) {
        return Err(Error::Dimension(format!("{:?} matrix acting on ℝ^{d}", a.shape())));
    }
    let (big, small) = linalg::norm_pair(a);
    if !(small > RANK_TOL * big) {
        return Err(Error::Singular {
            ratio: if big > 0.0 { small / big } else { 0.0 },
        });
    }
    Subspace::new(a * &v.basis)
}

/// The cone `X(a, V, δ) = { x : |Q_V(x − a)| < δ^{1/2}|x − a| }`, optionally
/// truncated to `|x − a| < r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cone {
    pub apex: Vec<f64>,
    pub plane: Subspace,
    pub delta: f64,
    pub radius: Option<f64>,
}

impl Cone {
    pub fn new(apex: &DVector<f64>, plane: Subspace, delta: f64, radius: Option<f64>) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Precondition(format!("cone opening δ = {delta} not in (0,1)")));
        }
        if let Some(r) = radius {
            if !(r > 0.0) {
                return Err(Error::Precondition(format!("cone radius {r} must be positive")));
            }
        }
        if apex.len() != plane.dim_ambient() {
            return Err(Error::Dimension("cone apex and plane differ in dimension".into()));
        }
        Ok(Self {
            apex: apex.iter().copied().collect(),
            plane,
            delta,
            radius,
        })
    }

    pub fn apex(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.apex)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        let v = x - self.apex();
        let n = v.norm();
        if self.radius.is_some_and(|r| n >= r) {
            return false;
        }
        self.plane.distance_norm(&v) < self.delta.sqrt() * n
    }
}

/// The tube `V_a(δ) = { x : |Q_V(x − a)| < δ }`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tube {
    pub apex: Vec<f64>,
    pub plane: Subspace,
    pub width: f64,
}

impl Tube {
    pub fn new(apex: &DVector<f64>, plane: Subspace, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Precondition(format!("tube width {width} must be positive")));
        }
        if apex.len() != plane.dim_ambient() {
            return Err(Error::Dimension("tube apex and plane differ in dimension".into()));
        }
        Ok(Self {
            apex: apex.iter().copied().collect(),
            plane,
            width,
        })
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.plane
            .distance_norm(&(x - DVector::from_column_slice(&self.apex)))
            < self.width
    }
}

pub fn cone_contains(cone: &Cone, x: &DVector<f64>) -> bool {
    cone.contains(x)
}

pub fn tube_contains(tube: &Tube, x: &DVector<f64>) -> bool {
    tube.contains(x)
}

/// The `l`-plane minimizing `Σ w_k |Q_V(p_k − apex)|²`: top eigenvectors of
/// the weighted second-moment matrix about the apex.
pub fn fit_plane(
    points: &[DVector<f64>],
    weights: &[f64],
    apex: &DVector<f64>,
    l: usize,
) -> Result<Subspace> {
    let d = apex.len();
    if points.len() != weights.len() {
        return Err(Error::Dimension(format!(
            "{} points but {} weights",
            points.len(),
            weights.len()
        )));
    }
    if l == 0 || l >= d {
        return Err(Error::Dimension(format!("need 0 < l < d, got l = {l}, d = {d}")));
    }
    let mut moment = DMatrix::zeros(d, d);
    for (p, &w) in points.iter().zip(weights) {
        if w > 0.0 {
            let v = p - apex;
            moment += &v * v.transpose() * w;
        }
    }
    let eig = SymmetricEigen::new(moment);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = eig.eigenvalues[order[0]];
    let rank = order
        .iter()
        .filter(|&&k| top > 0.0 && eig.eigenvalues[k] > RANK_TOL * top)
        .count();
    if rank < l {
        return Err(Error::DegenerateCloud { rank, needed: l });
    }
    let cols: Vec<DVector<f64>> = order[..l]
        .iter()
        .map(|&k| eig.eigenvectors.column(k).clone_owned())
        .collect();
    Subspace::new(DMatrix::from_columns(&cols))
}

/// `Σ w_k |Q_V(p_k − apex)|²`.
pub fn plane_residual(points: &[DVector<f64>], weights: &[f64], apex: &DVector<f64>, v: &Subspace) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(p, w)| w * v.distance_norm(&(p - apex)).powi(2))
        .sum()
}
