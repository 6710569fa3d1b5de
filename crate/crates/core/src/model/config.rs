use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyper-parameters. Every parameter shape is a function of
/// this struct alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub t_in: usize,
    pub t_out: usize,
    /// Per-step feature width `F`; the graph stage emits `F * t_in` values
    /// per subject, reshaped to `(t_in, F)` for the CNN.
    pub features_per_step: usize,
    pub embed_dim: usize,
    pub mlp_hidden: usize,
    pub conv_channels: [usize; 3],
    pub cbam_reduction: usize,
    pub spatial_kernel: usize,
}

pub const DEFAULT_FEATURES_PER_STEP: usize = 8;

impl ModelConfig {
    /// Default widths for the given window geometry: `embed_dim = F * t_in`,
    /// `mlp_hidden = 2 * F * t_in`, channels `(16, 32, 32)`, reduction 8.
    pub fn for_windows(t_in: usize, t_out: usize) -> Self {
        let f = DEFAULT_FEATURES_PER_STEP;
        Self {
            t_in,
            t_out,
            features_per_step: f,
            embed_dim: f * t_in,
            mlp_hidden: 2 * f * t_in,
            conv_channels: [16, 32, 32],
            cbam_reduction: 8,
            spatial_kernel: 7,
        }
    }

    pub fn vehicle() -> Self {
        Self::for_windows(15, 25)
    }

    pub fn pedestrian() -> Self {
        Self::for_windows(8, 12)
    }

    pub fn gin_out(&self) -> usize {
        self.features_per_step * self.t_in
    }

    /// Width of the per-subject CNN map: GIN features plus the relative
    /// coordinate pair.
    pub fn map_width(&self) -> usize {
        self.features_per_step + 2
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("features_per_step", self.features_per_step),
            ("embed_dim", self.embed_dim),
            ("mlp_hidden", self.mlp_hidden),
            ("cbam_reduction", self.cbam_reduction),
        ];
        if self.t_in < 2 {
            return Err(Error::config("t_in", "must be at least 2"));
        }
        if self.t_out < 1 {
            return Err(Error::config("t_out", "must be at least 1"));
        }
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        for &c in &self.conv_channels {
            if c == 0 {
                return Err(Error::config("conv_channels", "widths must be at least 1"));
            }
            if c % self.cbam_reduction != 0 {
                return Err(Error::config(
                    "cbam_reduction",
                    format!("{c} channels are not divisible by {}", self.cbam_reduction),
                ));
            }
        }
        if self.spatial_kernel != 7 {
            return Err(Error::config("spatial_kernel", "spatial attention uses a 7x7 kernel"));
        }
        Ok(())
    }
}
