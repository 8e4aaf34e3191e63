//! Conjugation of a similarity system by the radial deformation
//! `h(p) = g(p_d)·p`, gated by the norm-product admissibility bound.

use serde::Serialize;

use super::chart::{Chart, Deformation};
use super::maps::{Conjugated, SmoothMap};
use super::region::SeedRegion;
use super::IFSystem;
use crate::error::{Error, Result};
use crate::linalg;

/// Relative inflation applied to grid maxima of the chart norms.
pub const NORM_INFLATION: f64 = 1.01;

/// `sup |h′|` and `sup |(h′)⁻¹|` over `Ω′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChartNorms {
    pub h_norm: f64,
    pub h_inv_norm: f64,
}

impl ChartNorms {
    pub fn product(&self) -> f64 {
        self.h_norm * self.h_inv_norm
    }
}

/// The measured side and the admissible side of the norm-product gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConjugationCheck {
    pub c2: f64,
    pub grid_resolution: usize,
    pub norms: ChartNorms,
    pub product: f64,
    pub bound: f64,
}

/// Grid maximization of the chart norms over the model box of `Ω′`, with
/// the plane through the middle of the transition band added to the grid.
/// The identity deformation is exact and is not inflated.
pub fn chart_norms(h: &Deformation, region: &SeedRegion, grid_resolution: usize) -> ChartNorms {
    if h.c2() == 1.0 {
        return ChartNorms {
            h_norm: 1.0,
            h_inv_norm: 1.0,
        };
    }
    let omega = region.omega_prime_box();
    let d = omega.dim();
    let mut points = omega.grid(grid_resolution);
    points.extend(omega.grid(grid_resolution).into_iter().map(|mut p| {
        p[d - 1] = 0.5;
        p
    }));
    let (mut hs, mut hi) = (0.0_f64, 0.0_f64);
    for p in &points {
        let (big, small) = linalg::norm_pair(&h.jacobian(p));
        hs = hs.max(big);
        hi = hi.max(1.0 / small);
    }
    ChartNorms {
        h_norm: hs * NORM_INFLATION,
        h_inv_norm: hi * NORM_INFLATION,
    }
}

/// The system `{h ∘ φ_i ∘ h⁻¹}` on `h(X)` for a similarity system `base`.
///
/// Accepted only when `sup|h′|·sup|(h⁻¹)′| ≤ min{s_up / max r_i, min r_i / s_low}`;
/// otherwise the measured norms are returned inside
/// [`Error::ConstructionRejected`].
pub fn build_conjugated(
    base: &IFSystem,
    c2: f64,
    s_low: f64,
    s_up: f64,
    grid_resolution: usize,
) -> Result<IFSystem> {
    let sims = base
        .similarities()
        .filter(|_| base.region().chart().is_identity())
        .ok_or_else(|| Error::Precondition("conjugation needs a similarity system on a plain box".into()))?;
    if grid_resolution < 2 {
        return Err(Error::Precondition("grid_resolution must be at least 2".into()));
    }
    if !(s_up * s_up < s_low) {
        return Err(Error::InvalidSystem(format!(
            "conjugation needs s_up² < s_low (s_low = {s_low}, s_up = {s_up})"
        )));
    }
    let h = Deformation::new(c2)?;
    let region = SeedRegion::new(base.region().base().clone(), Chart::Radial(h), base.omega_margin())?;
    let norms = chart_norms(&h, &region, grid_resolution);

    let r_max = sims.iter().map(|s| s.scale()).fold(0.0, f64::max);
    let r_min = sims.iter().map(|s| s.scale()).fold(1.0, f64::min);
    let bound = (s_up / r_max).min(r_min / s_low);
    let product = norms.product();
    if product > bound {
        return Err(Error::ConstructionRejected {
            product,
            bound,
            h_norm: norms.h_norm,
            h_inv_norm: norms.h_inv_norm,
        });
    }

    let maps = sims
        .iter()
        .map(|s| {
            SmoothMap::Conjugated(Conjugated {
                inner: Box::new(SmoothMap::Similarity(s.clone())),
                chart: Chart::Radial(h),
            })
        })
        .collect();
    let check = ConjugationCheck {
        c2,
        grid_resolution,
        norms,
        product,
        bound,
    };
    IFSystem::assemble(maps, region, s_low, s_up, Some(check))?.with_rho0(base.rho0())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::dust;
    use crate::symbolic::Word;
    use nalgebra::DVector;

    #[test]
    fn accepts_small_deformation() {
        let sys = build_conjugated(&dust(), 1.005, 0.3, 0.5, 21).unwrap();
        let check = sys.conjugation().unwrap();
        assert!((check.bound - 1.0 / 0.9).abs() < 1e-12);
        assert!(check.product <= 1.11);
        assert!(check.product >= 1.0);
        assert_eq!(sys.alphabet().size(), 8);
    }

    #[test]
    fn rejects_large_deformation() {
        match build_conjugated(&dust(), 2.0, 0.3, 0.5, 21) {
            Err(Error::ConstructionRejected { product, bound, .. }) => {
                assert!(product > 1.2);
                assert!(product > bound);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn identity_limit() {
        let sys = build_conjugated(&dust(), 1.0, 0.3, 0.5, 11).unwrap();
        assert_eq!(sys.conjugation().unwrap().product, 1.0);
    }

    #[test]
    fn fast_path_matches_chain_rule() {
        let sys = build_conjugated(&dust(), 1.005, 0.3, 0.5, 11).unwrap();
        let word = Word::from(vec![4, 1, 7, 2, 6]);
        for x in [
            DVector::from_vec(vec![0.2, 0.5, 0.45]),
            DVector::from_vec(vec![0.9, 0.1, 0.8]),
            sys.anchor().clone(),
        ] {
            let (v, j) = sys.compose(&word, &x).unwrap();
            assert!((sys.eval_word(&word, &x).unwrap() - v).norm() < 1e-9);
            assert!((sys.word_jacobian(&word, &x).unwrap() - j).amax() < 1e-9);
        }
    }

    #[test]
    fn image_of_base_points() {
        let base = dust();
        let sys = build_conjugated(&base, 1.005, 0.3, 0.5, 11).unwrap();
        let h = sys.deformation().unwrap();
        let word = Word::from(vec![7, 7, 3, 0]);
        let direct = h.eval(&base.word_value_at_anchor(&word).unwrap());
        assert!((sys.word_value_at_anchor(&word).unwrap() - direct).norm() < 1e-15);
    }
}
