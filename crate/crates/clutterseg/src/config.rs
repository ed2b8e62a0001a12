//! Pipeline configuration.
//!
//! All tunables live here with their defaults. A TOML file can override any
//! subset; unknown keys are rejected, out-of-range values are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point-cloud fusion and super-voxel construction parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryParams {
    /// Voxel edge for fusion downsampling, meters.
    pub voxel_size_m: f64,
    /// Minimum points per voxel to keep it (noise-robust aggregation).
    pub min_occupancy: usize,
    /// Euclidean term weight in the pair distance.
    pub alpha: f64,
    /// Normal term weight in the pair distance.
    pub beta: f64,
    /// Contraction threshold on the pair distance.
    pub tau_merge: f64,
    /// Neighborhood size for normal estimation and clustering.
    pub k_nn: usize,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            voxel_size_m: 0.005,
            min_occupancy: 3,
            alpha: 0.5,
            beta: 1.0,
            tau_merge: 0.01,
            k_nn: 16,
        }
    }
}

/// Mask hierarchy and cross-view grouping parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupingParams {
    /// Pixel containment ratio for parent/child mask relations.
    pub tau_contain: f64,
    /// Stage-1 spatial similarity threshold.
    pub tau_spat: f64,
    /// Stage-2 semantic similarity threshold.
    pub tau_sem: f64,
    /// Stabilizer in the weighted Jaccard denominator.
    pub epsilon: f64,
    /// Depth-visibility margin for occupancy projection, meters.
    pub visibility_margin_m: f64,
    /// Run residual-node parent substitution after grouping.
    pub enable_substitution: bool,
    /// Minimum constituent masks for a group to become an instance.
    pub min_group_size: usize,
}

impl Default for GroupingParams {
    fn default() -> Self {
        Self {
            tau_contain: 0.95,
            tau_spat: 0.5,
            tau_sem: 0.65,
            epsilon: 1e-8,
            visibility_margin_m: 0.02,
            enable_substitution: true,
            min_group_size: 2,
        }
    }
}

/// Loss weights for one optimization stage.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageWeights {
    pub chamfer: f64,
    pub photo: f64,
    pub reg_z: f64,
    pub iterations: usize,
    pub step_size: f64,
}

impl Default for StageWeights {
    fn default() -> Self {
        // stage-1 defaults; stage 2 overridden in UpdateParams::default
        Self {
            chamfer: 50.0,
            photo: 0.5,
            reg_z: 10.0,
            iterations: 200,
            step_size: 0.01,
        }
    }
}

/// Post-interaction change detection and pose refinement parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdateParams {
    /// Projection IoU below which an instance counts as displaced.
    pub tau_iou: f64,
    /// Coarse stage: chamfer-dominated alignment.
    pub stage1: StageWeights,
    /// Fine stage: photometric refinement.
    pub stage2: StageWeights,
    /// Central finite-difference step.
    pub fd_step: f64,
    /// Momentum coefficient of the descent.
    pub momentum: f64,
    /// Initialize translation from footprint/mask centroid offset.
    pub centroid_init: bool,
    /// Cap on contour points per side in the chamfer evaluation.
    pub contour_samples: usize,
    /// Cap on instance points in the photometric evaluation.
    pub photo_samples: usize,
}

impl Default for UpdateParams {
    fn default() -> Self {
        Self {
            tau_iou: 0.75,
            stage1: StageWeights::default(),
            stage2: StageWeights {
                chamfer: 10.0,
                photo: 2.0,
                reg_z: 1.0,
                iterations: 100,
                step_size: 0.005,
            },
            fd_step: 1e-4,
            momentum: 0.9,
            centroid_init: true,
            contour_samples: 256,
            photo_samples: 2000,
        }
    }
}

/// Average-precision interpolation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApInterpolation {
    /// 101-point interpolation.
    Points101,
    /// All-points (envelope area) interpolation.
    AllPoints,
}

/// Evaluation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Voxel grid edge for 3D IoU, meters.
    pub voxel_edge_m: f64,
    pub ap_interpolation: ApInterpolation,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            voxel_edge_m: 0.010,
            ap_interpolation: ApInterpolation::Points101,
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub geometry: GeometryParams,
    pub grouping: GroupingParams,
    pub update: UpdateParams,
    pub eval: EvalParams,
}

impl PipelineConfig {
    /// Load configuration from a TOML file, or defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config = match path {
            None => PipelineConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::io_ctx(format!("reading config {}", p.display()), e))?;
                toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        fn unit_range(key: &str, v: f64) -> Result<()> {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::ConfigOutOfRange {
                    key: key.into(),
                    value: v.to_string(),
                    expected: "must lie in [0, 1]".into(),
                });
            }
            Ok(())
        }
        fn positive(key: &str, v: f64) -> Result<()> {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::ConfigOutOfRange {
                    key: key.into(),
                    value: v.to_string(),
                    expected: "must be > 0".into(),
                });
            }
            Ok(())
        }
        fn non_negative(key: &str, v: f64) -> Result<()> {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::ConfigOutOfRange {
                    key: key.into(),
                    value: v.to_string(),
                    expected: "must be >= 0".into(),
                });
            }
            Ok(())
        }

        let g = &self.geometry;
        positive("geometry.voxel_size_m", g.voxel_size_m)?;
        if g.min_occupancy < 1 {
            return Err(Error::ConfigOutOfRange {
                key: "geometry.min_occupancy".into(),
                value: g.min_occupancy.to_string(),
                expected: "must be >= 1".into(),
            });
        }
        non_negative("geometry.alpha", g.alpha)?;
        non_negative("geometry.beta", g.beta)?;
        positive("geometry.tau_merge", g.tau_merge)?;
        if g.k_nn < 3 {
            return Err(Error::ConfigOutOfRange {
                key: "geometry.k_nn".into(),
                value: g.k_nn.to_string(),
                expected: "must be >= 3".into(),
            });
        }

        let gr = &self.grouping;
        unit_range("grouping.tau_contain", gr.tau_contain)?;
        unit_range("grouping.tau_spat", gr.tau_spat)?;
        unit_range("grouping.tau_sem", gr.tau_sem)?;
        positive("grouping.epsilon", gr.epsilon)?;
        non_negative("grouping.visibility_margin_m", gr.visibility_margin_m)?;

        let u = &self.update;
        if !(u.tau_iou > 0.0 && u.tau_iou < 1.0) {
            return Err(Error::ConfigOutOfRange {
                key: "update.tau_iou".into(),
                value: u.tau_iou.to_string(),
                expected: "must lie in (0, 1)".into(),
            });
        }
        for (name, s) in [("stage1", &u.stage1), ("stage2", &u.stage2)] {
            non_negative(&format!("update.{name}.chamfer"), s.chamfer)?;
            non_negative(&format!("update.{name}.photo"), s.photo)?;
            non_negative(&format!("update.{name}.reg_z"), s.reg_z)?;
            positive(&format!("update.{name}.step_size"), s.step_size)?;
        }
        positive("update.fd_step", u.fd_step)?;
        unit_range("update.momentum", u.momentum)?;

        positive("eval.voxel_edge_m", self.eval.voxel_edge_m)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_match_documented_values() {
        let c = PipelineConfig::load(None).unwrap();
        assert_eq!(c.geometry.voxel_size_m, 0.005);
        assert_eq!(c.geometry.min_occupancy, 3);
        assert_eq!(c.geometry.alpha, 0.5);
        assert_eq!(c.geometry.beta, 1.0);
        assert_eq!(c.geometry.tau_merge, 0.01);
        assert_eq!(c.grouping.tau_spat, 0.5);
        assert_eq!(c.grouping.tau_sem, 0.65);
        assert_eq!(c.update.tau_iou, 0.75);
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[update]\ntau_iou = 0.6").unwrap();
        let c = PipelineConfig::load(Some(f.path())).unwrap();
        assert_eq!(c.update.tau_iou, 0.6);
        assert_eq!(c.grouping.tau_spat, 0.5);
        assert_eq!(c.grouping.tau_sem, 0.65);
    }

    #[test]
    fn unknown_key_is_rejected_with_its_name() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[grouping]\ntau_spurious = 0.3").unwrap();
        let err = PipelineConfig::load(Some(f.path())).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("tau_spurious"), "message was: {msg}");
    }

    #[test]
    fn out_of_range_threshold_is_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[grouping]\ntau_spat = 1.5").unwrap();
        let err = PipelineConfig::load(Some(f.path())).unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }
}
