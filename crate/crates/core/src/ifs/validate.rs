//! Checks of the standing assumptions on a system: two-sided derivative
//! bounds, conformality on the limit set, the open set condition and the
//! boundary density of the seed box.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::chart::Chart;
use super::region::AxisBox;
use super::IFSystem;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Report {
    pub ok: bool,
    /// Largest `|φ_i′(x)|` seen.
    pub worst_upper: f64,
    /// Smallest `|φ_i′(x)⁻¹|⁻¹` seen.
    pub worst_lower: f64,
    pub s_low: f64,
    pub s_up: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Samples `Ω` and checks `s_low ≤ |φ_i′(x)⁻¹|⁻¹ ≤ |φ_i′(x)| ≤ s_up` for every
/// map, together with `s_up² ≤ s_low`. The corners of `Ω` are always
/// included in the sample.
pub fn validate_f1(system: &IFSystem, sample_count: usize, seed: u64) -> Result<F1Report> {
    if sample_count == 0 {
        return Err(Error::Precondition("sample_count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let region = system.region();
    let mut points: Vec<DVector<f64>> = region
        .omega_box()
        .corners()
        .iter()
        .map(|p| region.chart().eval(p))
        .collect();
    points.extend((0..sample_count).map(|_| region.sample_omega(&mut rng)));

    let (mut upper, mut lower) = (0.0_f64, f64::INFINITY);
    for x in &points {
        for map in system.maps() {
            let (big, small) = linalg::norm_pair(&map.jacobian(x));
            if small <= 1e-14 * big {
                return Err(Error::Singular { ratio: small / big });
            }
            upper = upper.max(big);
            lower = lower.min(small);
        }
    }
    let (s_low, s_up) = (system.s_low(), system.s_up());
    let ok = upper <= s_up && lower >= s_low && s_up * s_up <= s_low;
    Ok(F1Report {
        ok,
        worst_upper: upper,
        worst_lower: lower,
        s_low,
        s_up,
        samples: points.len(),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F3Report {
    pub ok: bool,
    pub max_defect: f64,
    pub tol: f64,
    pub depth: usize,
    pub points: usize,
}

/// `σ_max/σ_min − 1`, zero exactly for conformal matrices.
pub fn conformality_defect(jac: &nalgebra::DMatrix<f64>) -> f64 {
    let (big, small) = linalg::norm_pair(jac);
    big / small - 1.0
}

/// Conformality defect of every map at the depth-`depth` cylinder
/// representatives.
pub fn validate_f3(system: &IFSystem, depth: usize, tol: f64) -> Result<F3Report> {
    if depth == 0 {
        return Err(Error::Precondition("depth must be at least 1".into()));
    }
    if system.is_similarity() {
        return Ok(F3Report {
            ok: true,
            max_defect: 0.0,
            tol,
            depth,
            points: system.alphabet().count_at_depth(depth)?,
        });
    }
    let defects = system.map_words(depth, |v| -> Result<f64> {
        let x = v.at_anchor()?;
        Ok(system
            .maps()
            .iter()
            .map(|m| conformality_defect(&m.jacobian(&x)))
            .fold(0.0, f64::max))
    })?;
    let mut max_defect: f64 = 0.0;
    for d in &defects {
        max_defect = max_defect.max(*d.as_ref().map_err(Clone::clone)?);
    }
    Ok(F3Report {
        ok: max_defect <= tol,
        max_defect,
        tol,
        depth,
        points: defects.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Overlap {
    pub pair: (usize, usize),
    /// A point in both images (certified) or a sampled witness.
    pub witness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscReport {
    pub ok: bool,
    /// `true` when the verdict comes from exact box intersection.
    pub certified: bool,
    pub method: &'static str,
    pub overlap_pairs: Vec<Overlap>,
}

/// Open set condition with `int X` as the open set. Axis-aligned similarity
/// systems (in any chart) are decided exactly; anything else is probed on an
/// interior grid, which can witness overlaps but never rule them out.
pub fn validate_osc(system: &IFSystem, grid_resolution: usize) -> Result<OscReport> {
    if grid_resolution < 2 {
        return Err(Error::Precondition("grid_resolution must be at least 2".into()));
    }
    let n = system.alphabet().size();
    let base = system.region().base();

    if let Some(boxes) = model_image_boxes(system) {
        let mut overlaps = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if boxes[i].interiors_overlap(&boxes[j]) {
                    let lo: Vec<f64> = boxes[i].min().iter().zip(boxes[j].min()).map(|(a, b)| a.max(*b)).collect();
                    let hi: Vec<f64> = boxes[i].max().iter().zip(boxes[j].max()).map(|(a, b)| a.min(*b)).collect();
                    let mid = DVector::from_iterator(lo.len(), lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)));
                    overlaps.push(Overlap {
                        pair: (i, j),
                        witness: model_chart(system).eval(&mid).iter().copied().collect(),
                    });
                }
            }
        }
        return Ok(OscReport {
            ok: overlaps.is_empty(),
            certified: true,
            method: "certified",
            overlap_pairs: overlaps,
        });
    }

    // Cell-centred interior grid of the seed box.
    let res = grid_resolution;
    let d = base.dim();
    let interior: Vec<DVector<f64>> = (0..res.pow(d as u32))
        .map(|mut idx| {
            DVector::from_iterator(
                d,
                (0..d).map(|k| {
                    let i = idx % res;
                    idx /= res;
                    base.min()[k] + (base.max()[k] - base.min()[k]) * (i as f64 + 0.5) / res as f64
                }),
            )
        })
        .map(|p| system.region().chart().eval(&p))
        .collect();
    let maps = system.maps();
    let mut overlaps = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || overlaps.iter().any(|o: &Overlap| o.pair == (i.min(j), i.max(j))) {
                continue;
            }
            let hit = interior.iter().find_map(|p| {
                let y = maps[i].eval(p);
                let back = maps[j].inverse(&y)?;
                let model = system.region().chart().inverse(&back);
                base.interior_contains(&model).then_some(y)
            });
            if let Some(y) = hit {
                overlaps.push(Overlap {
                    pair: (i.min(j), i.max(j)),
                    witness: y.iter().copied().collect(),
                });
            }
        }
    }
    Ok(OscReport {
        ok: overlaps.is_empty(),
        certified: false,
        method: "sampled",
        overlap_pairs: overlaps,
    })
}

/// The chart in which the maps are plain similarities.
fn model_chart(system: &IFSystem) -> Chart {
    match system.deformation() {
        Some(h) => Chart::Radial(h),
        None => Chart::Identity,
    }
}

/// Images of the seed box in the model chart, when they are boxes.
fn model_image_boxes(system: &IFSystem) -> Option<Vec<AxisBox>> {
    let base = system.region().base();
    let (sims, chart_ok) = match (system.similarities(), system.deformation()) {
        (Some(s), _) => (s.to_vec(), system.region().chart().is_identity()),
        (None, Some(_)) => (
            system
                .maps()
                .iter()
                .map(|m| match m {
                    super::SmoothMap::Conjugated(c) => c.inner.as_similarity().cloned(),
                    _ => None,
                })
                .collect::<Option<Vec<_>>>()?,
            true,
        ),
        _ => return None,
    };
    if !chart_ok || !sims.iter().all(|s| s.is_axis_aligned()) {
        return None;
    }
    sims.iter()
        .map(|s| AxisBox::bounding(&base.corners().iter().map(|c| s.apply(c)).collect::<Vec<_>>()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryDensityReport {
    pub ok: bool,
    pub min_ratio: f64,
    /// `2^{-d}·(1 − ε_mc)`.
    pub floor: f64,
    pub eps_mc: f64,
    pub rho0: f64,
    pub exact: bool,
    pub boundary_points: usize,
    pub radii: Vec<f64>,
    pub seed: u64,
}

/// Fraction of `B(x, r)` inside the open box, by Monte Carlo.
pub fn ball_fraction_in_box<R: Rng + ?Sized>(
    b: &AxisBox,
    x: &DVector<f64>,
    r: f64,
    samples: usize,
    rng: &mut R,
) -> f64 {
    let d = b.dim();
    let mut hits = 0usize;
    for _ in 0..samples {
        let dir = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        let radius = r * rng.random::<f64>().powf(1.0 / d as f64);
        let p = x + dir.normalize() * radius;
        if b.interior_contains(&p) {
            hits += 1;
        }
    }
    hits as f64 / samples as f64
}

/// Exact fraction of `[x − r, x + r]` inside the interval `b`.
fn interval_fraction(b: &AxisBox, x: f64, r: f64) -> f64 {
    let lo = (x - r).max(b.min()[0]);
    let hi = (x + r).min(b.max()[0]);
    ((hi - lo).max(0.0)) / (2.0 * r)
}

/// Lower density of the seed box at its boundary, over radii below `ϱ₀`.
/// Curved seed regions are measured on their model box.
pub fn validate_boundary_density(
    system: &IFSystem,
    radius_count: usize,
    sample_count: usize,
    seed: u64,
) -> Result<BoundaryDensityReport> {
    if radius_count == 0 || sample_count == 0 {
        return Err(Error::Precondition("radius_count and sample_count must be positive".into()));
    }
    let b = system.region().base();
    let d = b.dim();
    let rho0 = system.rho0();
    let radii: Vec<f64> = (1..=radius_count)
        .map(|k| rho0 * k as f64 / (radius_count + 1) as f64)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Corners are the extremal boundary points; add random face points.
    let mut points = b.corners();
    for _ in 0..4 * d {
        let mut p = b.sample(&mut rng);
        let axis = rng.random_range(0..d);
        p[axis] = if rng.random::<bool>() { b.max()[axis] } else { b.min()[axis] };
        points.push(p);
    }

    let p_floor = 0.5f64.powi(d as i32);
    let (exact, eps_mc) = if d == 1 {
        (true, 0.0)
    } else {
        (false, 4.0 * ((1.0 - p_floor) / (p_floor * sample_count as f64)).sqrt())
    };
    let mut min_ratio = f64::INFINITY;
    for x in &points {
        for &r in &radii {
            let ratio = if exact {
                interval_fraction(b, x[0], r)
            } else {
                ball_fraction_in_box(b, x, r, sample_count, &mut rng)
            };
            min_ratio = min_ratio.min(ratio);
        }
    }
    let floor = p_floor * (1.0 - eps_mc);
    Ok(BoundaryDensityReport {
        ok: min_ratio > 0.0 && min_ratio >= floor * (1.0 - 1e-12),
        min_ratio,
        floor,
        eps_mc,
        rho0,
        exact,
        boundary_points: points.len(),
        radii,
        seed,
    })
}
