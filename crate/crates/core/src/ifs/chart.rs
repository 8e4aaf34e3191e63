//! Global diffeomorphisms used to conjugate a system: rigid motions and the
//! height-dependent radial deformation `h(p) = g(p_d)·p`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Bisection tolerance when inverting the deformation.
pub const INVERSE_TOL: f64 = 1e-12;
const INVERSE_MAX_ITER: usize = 200;

/// Quintic smoothstep `6u⁵ − 15u⁴ + 10u³` clamped to `[0,1]`.
fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (u * (6.0 * u - 15.0) + 10.0)
}

fn smoothstep_d1(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        return 0.0;
    }
    30.0 * u * u * (1.0 - u) * (1.0 - u)
}

fn smoothstep_d2(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        return 0.0;
    }
    60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
}

/// The deformation `h(p) = g(z)·p` where `z` is the last coordinate of `p`
/// and `g` climbs from 1 (for `z ≤ 1/3`) to the plateau `c2` (for `z ≥ 2/3`)
/// along a quintic smoothstep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deformation {
    c2: f64,
}

impl Deformation {
    /// `c2 = 1` gives the identity.
    pub fn new(c2: f64) -> Result<Self> {
        if !(c2 >= 1.0 && c2.is_finite()) {
            return Err(Error::InvalidSystem(format!("plateau value c2 = {c2} must be ≥ 1")));
        }
        Ok(Self { c2 })
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn g(&self, z: f64) -> f64 {
        1.0 + (self.c2 - 1.0) * smoothstep(3.0 * z - 1.0)
    }

    pub fn g_prime(&self, z: f64) -> f64 {
        3.0 * (self.c2 - 1.0) * smoothstep_d1(3.0 * z - 1.0)
    }

    pub fn g_second(&self, z: f64) -> f64 {
        9.0 * (self.c2 - 1.0) * smoothstep_d2(3.0 * z - 1.0)
    }

    /// `sup g′ = (c2 − 1)·45/8`, attained at `z = 1/2`.
    pub fn sup_g_prime(&self) -> f64 {
        (self.c2 - 1.0) * 45.0 / 8.0
    }

    pub fn eval(&self, p: &DVector<f64>) -> DVector<f64> {
        p * self.g(p[p.len() - 1])
    }

    pub fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let d = p.len();
        let z = p[d - 1];
        let mut j = DMatrix::identity(d, d) * self.g(z);
        let gp = self.g_prime(z);
        if gp != 0.0 {
            for row in 0..d {
                j[(row, d - 1)] += gp * p[row];
            }
        }
        j
    }

    /// Solves `g(z)·p = q` for `p`. The last coordinate satisfies
    /// `z·g(z) = q_d`, which is strictly increasing in `z`.
    pub fn inverse(&self, q: &DVector<f64>) -> DVector<f64> {
        let target = q[q.len() - 1];
        let z = if target <= 1.0 / 3.0 {
            target
        } else if target >= 2.0 / 3.0 * self.c2 {
            target / self.c2
        } else {
            let (mut lo, mut hi) = (1.0 / 3.0, 2.0 / 3.0);
            for _ in 0..INVERSE_MAX_ITER {
                let mid = 0.5 * (lo + hi);
                if mid * self.g(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= INVERSE_TOL {
                    break;
                }
            }
            0.5 * (lo + hi)
        };
        q / self.g(z)
    }
}

/// `x ↦ rotation · x + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct Isometry {
    pub rotation: DMatrix<f64>,
    pub translation: DVector<f64>,
}

impl Isometry {
    pub fn new(rotation: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        let d = translation.len();
        if rotation.shape() != (d, d) {
            return Err(Error::Dimension("isometry shape".into()));
        }
        if (rotation.transpose() * &rotation - DMatrix::identity(d, d)).amax() > 1e-12 {
            return Err(Error::InvalidSystem("isometry is not orthogonal".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn then(&self, outer: &Isometry) -> Isometry {
        Isometry {
            rotation: &outer.rotation * &self.rotation,
            translation: &outer.rotation * &self.translation + &outer.translation,
        }
    }
}

/// Coordinate change from a "model" space to the space the system lives in.
#[derive(Debug, Clone, PartialEq)]
pub enum Chart {
    Identity,
    Rigid(Isometry),
    Radial(Deformation),
}

impl Chart {
    pub fn eval(&self, p: &DVector<f64>) -> DVector<f64> {
        match self {
            Chart::Identity => p.clone(),
            Chart::Rigid(iso) => &iso.rotation * p + &iso.translation,
            Chart::Radial(h) => h.eval(p),
        }
    }

    pub fn inverse(&self, q: &DVector<f64>) -> DVector<f64> {
        match self {
            Chart::Identity => q.clone(),
            Chart::Rigid(iso) => iso.rotation.transpose() * (q - &iso.translation),
            Chart::Radial(h) => h.inverse(q),
        }
    }

    pub fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Chart::Identity => DMatrix::identity(p.len(), p.len()),
            Chart::Rigid(iso) => iso.rotation.clone(),
            Chart::Radial(h) => h.jacobian(p),
        }
    }

    /// Whether the chart is affine, so that convex sets stay convex.
    pub fn is_affine(&self) -> bool {
        !matches!(self, Chart::Radial(_))
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Chart::Identity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn profile_plateaus_and_monotone() {
        let h = Deformation::new(1.5).unwrap();
        assert_eq!(h.g(-1.0), 1.0);
        assert_eq!(h.g(1.0 / 3.0), 1.0);
        assert_eq!(h.g(2.0 / 3.0), 1.5);
        assert_eq!(h.g(5.0), 1.5);
        let mut prev = h.g(0.0);
        for k in 1..=300 {
            let g = h.g(k as f64 / 300.0);
            assert!(g >= prev);
            prev = g;
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = Deformation::new(1.2).unwrap();
        for k in 0..=40 {
            let z = -0.1 + 1.2 * k as f64 / 40.0;
            assert!((h.g_prime(z) - finite_diff(|s| h.g(s), z)).abs() < 1e-7);
            assert!((h.g_second(z) - finite_diff(|s| h.g_prime(s), z)).abs() < 1e-5);
        }
        // C² junctions: first and second derivatives vanish at both ends.
        for z in [1.0 / 3.0, 2.0 / 3.0] {
            assert!(h.g_prime(z).abs() < 1e-12);
            assert!(h.g_second(z).abs() < 1e-12);
        }
    }

    #[test]
    fn sup_of_g_prime() {
        let h = Deformation::new(1.005).unwrap();
        let grid_max = (0..=3000)
            .map(|k| h.g_prime(k as f64 / 3000.0))
            .fold(0.0, f64::max);
        assert!((grid_max - h.sup_g_prime()).abs() < 1e-12);
        assert!((h.g_prime(0.5) - 0.005 * 45.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let h = Deformation::new(1.3).unwrap();
        let p = DVector::from_vec(vec![0.4, -0.2, 0.5]);
        let j = h.jacobian(&p);
        for col in 0..3 {
            let mut e = DVector::zeros(3);
            e[col] = 1e-6;
            let fd = (h.eval(&(&p + &e)) - h.eval(&(&p - &e))) / 2e-6;
            for row in 0..3 {
                assert!((fd[row] - j[(row, col)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        let h = Deformation::new(1.7).unwrap();
        for k in 0..50 {
            let z = -0.2 + 1.4 * k as f64 / 49.0;
            let p = DVector::from_vec(vec![0.3, 0.9, z]);
            let back = h.inverse(&h.eval(&p));
            assert!((back - p).norm() < 1e-11);
        }
    }
}
