use serde::{Deserialize, Serialize};

use super::Vec2;

pub const STANDARD_GRAVITY: f64 = 9.81;

/// Regular grid of friction coefficients over an axis-aligned rectangle.
///
/// Values are sampled with bilinear interpolation; queries outside the
/// rectangle are clamped to the border.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrictionField {
    pub origin: [f64; 2],
    /// Grid spacing in meters.
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `values[iy * nx + ix]`.
    pub values: Vec<f64>,
}

impl FrictionField {
    pub fn constant(origin: [f64; 2], spacing: f64, nx: usize, ny: usize, mu: f64) -> Self {
        Self {
            origin,
            spacing,
            nx,
            ny,
            values: vec![mu; nx * ny],
        }
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    pub fn sample(&self, p: Vec2) -> f64 {
        let gx = ((p.x - self.origin[0]) / self.spacing).clamp(0.0, (self.nx - 1) as f64);
        let gy = ((p.y - self.origin[1]) / self.spacing).clamp(0.0, (self.ny - 1) as f64);
        let ix = (gx.floor() as usize).min(self.nx.saturating_sub(2));
        let iy = (gy.floor() as usize).min(self.ny.saturating_sub(2));
        let fx = gx - ix as f64;
        let fy = gy - iy as f64;
        if self.nx < 2 || self.ny < 2 {
            return self.values[0];
        }
        let v00 = self.value(ix, iy);
        let v10 = self.value(ix + 1, iy);
        let v01 = self.value(ix, iy + 1);
        let v11 = self.value(ix + 1, iy + 1);
        let a = v00 + (v10 - v00) * fx;
        let b = v01 + (v11 - v01) * fx;
        a + (b - a) * fy
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceMode {
    Uniform,
    SpatialField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceModel {
    pub mode: SurfaceMode,
    pub mu_nominal: f64,
    /// Only consulted in `SpatialField` mode.
    pub mu_field: Option<FrictionField>,
    /// m/s^2
    pub gravity: f64,
}

impl SurfaceModel {
    pub fn uniform(mu: f64) -> Self {
        Self {
            mode: SurfaceMode::Uniform,
            mu_nominal: mu,
            mu_field: None,
            gravity: STANDARD_GRAVITY,
        }
    }

    pub fn spatial(field: FrictionField, mu_nominal: f64) -> Self {
        Self {
            mode: SurfaceMode::SpatialField,
            mu_nominal,
            mu_field: Some(field),
            gravity: STANDARD_GRAVITY,
        }
    }

    /// Friction coefficient under a point of the workspace.
    pub fn mu_at(&self, p: Vec2) -> f64 {
        match (self.mode, &self.mu_field) {
            (SurfaceMode::SpatialField, Some(field)) => field.sample(p),
            _ => self.mu_nominal,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let in_range = |mu: f64| mu > 0.0 && mu < 1.0;
        if !in_range(self.mu_nominal) {
            return Err(format!("mu_nominal {} outside (0, 1)", self.mu_nominal));
        }
        if self.mode == SurfaceMode::SpatialField {
            let field = self
                .mu_field
                .as_ref()
                .ok_or("spatial surface without a friction field")?;
            if field.nx * field.ny != field.values.len() || field.nx == 0 || field.ny == 0 {
                return Err("friction field shape does not match its values".into());
            }
            if let Some(bad) = field.values.iter().find(|&&v| !in_range(v)) {
                return Err(format!("friction field value {bad} outside (0, 1)"));
            }
        }
        Ok(())
    }
}
