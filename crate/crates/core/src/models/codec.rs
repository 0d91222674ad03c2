use serde::{Deserialize, Serialize};

use super::ModelKind;
use crate::neural::Standardizer;
use crate::sim::{DiskKinematics, Pose2, Twist2};

/// Width of the per-pair effect vector.
pub const EFFECT_WIDTH: usize = 16;
pub const HIDDEN_WIDTHS: [usize; 4] = [128, 64, 32, 16];
pub const DYN_OUTPUT_WIDTH: usize = 3;

/// Offset of the effect sum inside a dynamics input row.
pub const DYN_EFFECT_OFFSET: usize = 7;

/// Distance slack (m) within which the pusher counts as touching a disk.
pub const CONTACT_GATE_MARGIN: f64 = 5e-4;

pub fn rel_width(kind: ModelKind) -> usize {
    match kind {
        ModelKind::In => 14,
        ModelKind::Sain => 17,
    }
}

pub fn dyn_width(kind: ModelKind) -> usize {
    match kind {
        ModelKind::In => 23,
        ModelKind::Sain => 27,
    }
}

/// Widths of one network, input to output.
pub fn rel_layer_widths(kind: ModelKind) -> Vec<usize> {
    let mut w = vec![rel_width(kind)];
    w.extend(HIDDEN_WIDTHS);
    w.push(EFFECT_WIDTH);
    w
}

pub fn dyn_layer_widths(kind: ModelKind) -> Vec<usize> {
    let mut w = vec![dyn_width(kind)];
    w.extend(HIDDEN_WIDTHS);
    w.push(DYN_OUTPUT_WIDTH);
    w
}

/// Input encodings and their statistics.
///
/// Relation rows, receiver `i` and sender `j`:
///
/// | cols  | content                                 |
/// |-------|-----------------------------------------|
/// | 0..3  | `v_i` (vx, vy, omega)                   |
/// | 3..5  | `p_i - p_j` (x, y)                      |
/// | 5..7  | sin, cos of `theta_i - theta_j`         |
/// | 7..10 | `v_i - v_j`                             |
/// | 10..14| `m_i, m_j, r_i, r_j`                    |
/// | 14..17| engine velocity change of `i` (SAIN)    |
///
/// Dynamics rows for object `i`:
///
/// | cols  | content                                        |
/// |-------|------------------------------------------------|
/// | 0..3  | `v_i`                                          |
/// | 3..5  | action                                         |
/// | 5..7  | `m_i, r_i`                                     |
/// | 7..23 | effect sum (not standardized)                  |
/// | 23..27| engine pose change: dx, dy, sin, cos (SAIN)    |
///
/// The dynamics output is a standardized acceleration; multiplying by
/// `accel_scale` gives m/s^2 and rad/s^2. There is no mean shift, so a
/// zero output means constant velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureCodec {
    pub kind: ModelKind,
    pub rel: Standardizer,
    /// Covers the dynamics columns outside the effect block, in order.
    pub dynamics: Standardizer,
    pub accel_scale: [f64; 3],
}

impl FeatureCodec {
    pub fn identity(kind: ModelKind) -> Self {
        Self {
            kind,
            rel: Standardizer::identity(rel_width(kind)),
            dynamics: Standardizer::identity(dyn_width(kind) - EFFECT_WIDTH),
            accel_scale: [1.0; 3],
        }
    }

    pub fn rel_width(&self) -> usize {
        rel_width(self.kind)
    }

    pub fn dyn_width(&self) -> usize {
        dyn_width(self.kind)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.rel.width() != self.rel_width() {
            return Err(format!(
                "relation standardizer width {} != {}",
                self.rel.width(),
                self.rel_width()
            ));
        }
        if self.dynamics.width() != self.dyn_width() - EFFECT_WIDTH {
            return Err(format!(
                "dynamics standardizer width {} != {}",
                self.dynamics.width(),
                self.dyn_width() - EFFECT_WIDTH
            ));
        }
        if !self.accel_scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err("acceleration scale must be positive".into());
        }
        Ok(())
    }
}

/// Raw (unstandardized) relation row.
#[allow(clippy::too_many_arguments)]
pub(crate) fn write_rel_row(
    row: &mut [f64],
    pi: &[f64; 3],
    vi: &[f64; 3],
    pj: &[f64; 3],
    vj: &[f64; 3],
    si: [f64; 2],
    sj: [f64; 2],
    engine_dv: Option<&[f64; 3]>,
) {
    let dth = pi[2] - pj[2];
    row[0..3].copy_from_slice(vi);
    row[3] = pi[0] - pj[0];
    row[4] = pi[1] - pj[1];
    row[5] = dth.sin();
    row[6] = dth.cos();
    for k in 0..3 {
        row[7 + k] = vi[k] - vj[k];
    }
    row[10] = si[0];
    row[11] = sj[0];
    row[12] = si[1];
    row[13] = sj[1];
    if let Some(dv) = engine_dv {
        row[14..17].copy_from_slice(dv);
    }
}

/// Raw dynamics row without the effect block.
pub(crate) fn write_dyn_row(row: &mut [f64], v: &[f64; 3], action: [f64; 2], statics: [f64; 2], engine_dp: Option<&[f64; 4]>) {
    row[0..3].copy_from_slice(v);
    row[3] = action[0];
    row[4] = action[1];
    row[5] = statics[0];
    row[6] = statics[1];
    if let Some(dp) = engine_dp {
        row[7..11].copy_from_slice(dp);
    }
}

/// Engine pose change between consecutive shadow states.
pub(crate) fn engine_pose_delta(prev: &[f64; 6], next: &[f64; 6]) -> [f64; 4] {
    let dth = next[2] - prev[2];
    [next[0] - prev[0], next[1] - prev[1], dth.sin(), dth.cos()]
}

pub(crate) fn engine_velocity_delta(prev: &[f64; 6], next: &[f64; 6]) -> [f64; 3] {
    [next[3] - prev[3], next[4] - prev[4], next[5] - prev[5]]
}

/// Pose and twist as `[x, y, sin theta, cos theta, vx, vy, omega]`.
pub fn encode_kinematics(k: &DiskKinematics) -> [f64; 7] {
    [
        k.pose.x,
        k.pose.y,
        k.pose.theta.sin(),
        k.pose.theta.cos(),
        k.twist.vx,
        k.twist.vy,
        k.twist.omega,
    ]
}

pub fn decode_kinematics(e: &[f64; 7]) -> DiskKinematics {
    DiskKinematics {
        pose: Pose2::new(e[0], e[1], e[2].atan2(e[3])),
        twist: Twist2::new(e[4], e[5], e[6]),
    }
}
