//! The reference systems used throughout the tests, the guide and the
//! bundled JSON configs.

use std::f64::consts::FRAC_PI_3;

use crate::ifs::{build_conjugated, AxisBox, IFSystem, Similarity};

fn sim(scale: f64, t: &[f64]) -> Similarity {
    Similarity::scaling(scale, t).expect("valid fixture map")
}

/// Middle-third Cantor set: `x/3` and `x/3 + 2/3` on `[0, 1]`.
pub fn cantor() -> IFSystem {
    IFSystem::similarity(
        vec![sim(1.0 / 3.0, &[0.0]), sim(1.0 / 3.0, &[2.0 / 3.0])],
        AxisBox::unit(1),
        0.1,
        0.3,
        0.35,
    )
    .expect("valid fixture")
}

/// Two ratios: `x/2` and `x/4 + 3/4` on `[0, 1]`.
pub fn two_ratio() -> IFSystem {
    IFSystem::similarity(
        vec![sim(0.5, &[0.0]), sim(0.25, &[0.75])],
        AxisBox::unit(1),
        0.1,
        0.25,
        0.5,
    )
    .expect("valid fixture")
}

/// The Cantor set placed on the segment `y = 0` of the plane:
/// `(x, y) ↦ (x/3 + b, y/3)` on `[0, 1] × [−1/2, 1/2]`.
pub fn line_cantor() -> IFSystem {
    IFSystem::similarity(
        vec![sim(1.0 / 3.0, &[0.0, 0.0]), sim(1.0 / 3.0, &[2.0 / 3.0, 0.0])],
        AxisBox::new(vec![0.0, -0.5], vec![1.0, 0.5]).expect("valid box"),
        0.1,
        0.3,
        0.35,
    )
    .expect("valid fixture")
}

/// The von Koch curve on `[0, 1]`, seeded with the box `[0, 1] × [0, 0.35]`.
pub fn koch() -> IFSystem {
    let h = 3f64.sqrt() / 6.0;
    IFSystem::similarity(
        vec![
            sim(1.0 / 3.0, &[0.0, 0.0]),
            Similarity::planar(1.0 / 3.0, FRAC_PI_3, [1.0 / 3.0, 0.0]).expect("valid map"),
            Similarity::planar(1.0 / 3.0, -FRAC_PI_3, [0.5, h]).expect("valid map"),
            sim(1.0 / 3.0, &[2.0 / 3.0, 0.0]),
        ],
        AxisBox::new(vec![0.0, 0.0], vec![1.0, 0.35]).expect("valid box"),
        0.05,
        0.3,
        0.35,
    )
    .expect("valid fixture")
}

/// Right-angled Sierpiński gasket: three maps of ratio 1/2 on `[0, 1]²`.
pub fn sierpinski() -> IFSystem {
    IFSystem::similarity(
        vec![
            sim(0.5, &[0.0, 0.0]),
            sim(0.5, &[0.5, 0.0]),
            sim(0.5, &[0.0, 0.5]),
        ],
        AxisBox::unit(2),
        0.1,
        0.25,
        0.5,
    )
    .expect("valid fixture")
}

/// Cantor dust in `ℝ³`: the eight corner sub-cubes of ratio 1/3.
pub fn dust() -> IFSystem {
    let sims = (0..8u32)
        .map(|k| {
            let t: Vec<f64> = (0..3)
                .map(|i| if k >> (2 - i) & 1 == 1 { 2.0 / 3.0 } else { 0.0 })
                .collect();
            sim(1.0 / 3.0, &t)
        })
        .collect();
    IFSystem::similarity(sims, AxisBox::unit(3), 0.05, 0.3, 0.5).expect("valid fixture")
}

/// [`dust`] conjugated by the radial deformation with plateau `c2 = 1.005`.
pub fn conjugated_dust() -> IFSystem {
    build_conjugated(&dust(), 1.005, 0.3, 0.5, 21).expect("admissible deformation")
}
