//! The JSON system description and its translation into an [`IFSystem`].
//!
//! Field names are fixed and unknown fields are rejected. Every invariant
//! is checked here, before any numerics run, and each diagnostic names the
//! offending field.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rigidlim::ifs::{build_conjugated, AxisBox, IFSystem, Similarity};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub d: usize,
    pub alphabet_size: usize,
    pub maps: Vec<MapSpec>,
    pub seed_box: BoxSpec,
    pub omega_margin: f64,
    pub s_low: f64,
    pub s_up: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Similarity {
        scale: f64,
        /// Row-major `d × d`.
        orthogonal: Vec<f64>,
        translation: Vec<f64>,
    },
    /// The similarity maps in `base` conjugated by the radial deformation
    /// with plateau `c2`.
    Conjugated {
        base: Vec<MapSpec>,
        c2: f64,
        grid_resolution: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid `{field}`: {message}")]
    Field { field: String, message: String },

    /// The conjugation gate failed; this is a validation outcome, not a
    /// malformed file.
    #[error("`maps[0].c2`: {0}")]
    Rejected(rigidlim::Error),
}

fn field(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

/// A parsed config together with the SHA-256 of its bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub config: SystemConfig,
    pub digest: String,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config = SystemConfig::parse(&bytes).map_err(|e| match e {
            ConfigError::Parse { line, column, message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                line,
                column,
                message,
            },
            other => other,
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            config,
            digest: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

fn check_finite(name: &str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(field(name, format!("{x} is not finite")))
    }
}

impl SystemConfig {
    /// Parses and checks every invariant.
    pub fn parse(bytes: &[u8]) -> Result<Self, ConfigError> {
        let config: SystemConfig = serde_json::from_slice(bytes).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<config>"),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        config.check()?;
        Ok(config)
    }

    /// The similarity maps at the bottom of the description and, for a
    /// conjugated system, the deformation parameters.
    fn layers(&self) -> Result<(Vec<(String, &MapSpec)>, Option<(f64, usize)>), ConfigError> {
        match self.maps.as_slice() {
            [MapSpec::Conjugated { base, c2, grid_resolution }] => {
                let specs = base
                    .iter()
                    .enumerate()
                    .map(|(i, m)| (format!("maps[0].base[{i}]"), m))
                    .collect();
                Ok((specs, Some((*c2, *grid_resolution))))
            }
            maps => {
                if maps.len() > 1 && maps.iter().any(|m| matches!(m, MapSpec::Conjugated { .. })) {
                    return Err(field(
                        "maps",
                        "a conjugated system is a single `conjugated` entry wrapping its base maps",
                    ));
                }
                Ok((maps.iter().enumerate().map(|(i, m)| (format!("maps[{i}]"), m)).collect(), None))
            }
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        let d = self.d;
        if d == 0 {
            return Err(field("d", "must be at least 1"));
        }
        if self.alphabet_size < 2 {
            return Err(field("alphabet_size", "must be at least 2"));
        }
        let (specs, conj) = self.layers()?;
        if specs.len() != self.alphabet_size {
            return Err(field(
                "maps",
                format!("{} maps for alphabet_size {}", specs.len(), self.alphabet_size),
            ));
        }
        for (name, spec) in &specs {
            match spec {
                MapSpec::Similarity { scale, orthogonal, translation } => {
                    check_finite(&format!("{name}.scale"), *scale)?;
                    if !(*scale > 0.0 && *scale < 1.0) {
                        return Err(field(format!("{name}.scale"), format!("{scale} not in (0,1)")));
                    }
                    if orthogonal.len() != d * d {
                        return Err(field(
                            format!("{name}.orthogonal"),
                            format!("expected {} entries (row-major {d}×{d}), got {}", d * d, orthogonal.len()),
                        ));
                    }
                    if translation.len() != d {
                        return Err(field(
                            format!("{name}.translation"),
                            format!("expected {d} entries, got {}", translation.len()),
                        ));
                    }
                    for (k, x) in orthogonal.iter().enumerate() {
                        check_finite(&format!("{name}.orthogonal[{k}]"), *x)?;
                    }
                    for (k, x) in translation.iter().enumerate() {
                        check_finite(&format!("{name}.translation[{k}]"), *x)?;
                    }
                    let q = DMatrix::from_row_slice(d, d, orthogonal);
                    let defect = (q.transpose() * &q - DMatrix::identity(d, d)).amax();
                    if defect > 1e-12 {
                        return Err(field(
                            format!("{name}.orthogonal"),
                            format!("not orthogonal (|QᵀQ − I| = {defect:e})"),
                        ));
                    }
                }
                MapSpec::Conjugated { .. } => {
                    return Err(field(name.to_string(), "conjugated maps cannot be nested"));
                }
            }
        }
        if let Some((c2, grid)) = conj {
            check_finite("maps[0].c2", c2)?;
            if !(c2 > 0.0) {
                return Err(field("maps[0].c2", format!("{c2} must be positive")));
            }
            if grid < 2 {
                return Err(field("maps[0].grid_resolution", "must be at least 2"));
            }
            if d < 2 {
                return Err(field("d", "the radial deformation needs d ≥ 2"));
            }
        }
        if self.seed_box.min.len() != d {
            return Err(field("seed_box.min", format!("expected {d} entries")));
        }
        if self.seed_box.max.len() != d {
            return Err(field("seed_box.max", format!("expected {d} entries")));
        }
        for k in 0..d {
            let (lo, hi) = (self.seed_box.min[k], self.seed_box.max[k]);
            check_finite(&format!("seed_box.min[{k}]"), lo)?;
            check_finite(&format!("seed_box.max[{k}]"), hi)?;
            if !(lo < hi) {
                return Err(field("seed_box", format!("degenerate along axis {k}: min {lo} ≥ max {hi}")));
            }
        }
        check_finite("omega_margin", self.omega_margin)?;
        if !(self.omega_margin > 0.0) {
            return Err(field("omega_margin", "must be positive"));
        }
        check_finite("s_low", self.s_low)?;
        check_finite("s_up", self.s_up)?;
        if !(self.s_low > 0.0 && self.s_low <= self.s_up && self.s_up < 1.0) {
            return Err(field("s_low", format!("need 0 < s_low ≤ s_up < 1, got {} and {}", self.s_low, self.s_up)));
        }
        if self.s_up * self.s_up > self.s_low {
            return Err(field("s_up", format!("s_up² = {} exceeds s_low = {}", self.s_up * self.s_up, self.s_low)));
        }
        if let Some(r) = self.rho0 {
            check_finite("rho0", r)?;
            if !(r > 0.0) {
                return Err(field("rho0", "must be positive"));
            }
        }
        Ok(())
    }

    /// Builds the system. Invariance failures are attributed to `maps`;
    /// a failed conjugation gate comes back as [`ConfigError::Rejected`].
    pub fn build(&self) -> Result<IFSystem, ConfigError> {
        self.check()?;
        let d = self.d;
        let (specs, conj) = self.layers()?;
        let sims = specs
            .iter()
            .map(|(name, spec)| match spec {
                MapSpec::Similarity { scale, orthogonal, translation } => Similarity::new(
                    *scale,
                    DMatrix::from_row_slice(d, d, orthogonal),
                    DVector::from_column_slice(translation),
                )
                .map_err(|e| field(name.clone(), e.to_string())),
                MapSpec::Conjugated { .. } => unreachable!("rejected by check"),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let seed = AxisBox::new(self.seed_box.min.clone(), self.seed_box.max.clone())
            .map_err(|e| field("seed_box", e.to_string()))?;
        let mut system = IFSystem::similarity(sims, seed, self.omega_margin, self.s_low, self.s_up)
            .map_err(|e| field("maps", e.to_string()))?;
        if let Some((c2, grid)) = conj {
            system = build_conjugated(&system, c2, self.s_low, self.s_up, grid).map_err(|e| match e {
                rigidlim::Error::ConstructionRejected { .. } => ConfigError::Rejected(e),
                other => field("maps[0]", other.to_string()),
            })?;
        }
        if let Some(r) = self.rho0 {
            system = system.with_rho0(r).map_err(|e| field("rho0", e.to_string()))?;
        }
        Ok(system)
    }
}
