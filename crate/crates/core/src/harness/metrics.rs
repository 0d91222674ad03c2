use serde::{Deserialize, Serialize};

use crate::sim::wrap_angle;

/// Displacements below this count as no motion for the relative metric (m).
pub const MIN_DISPLACEMENT: f64 = 1e-9;

/// Errors of one object, averaged over trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectMetrics {
    pub object: usize,
    /// Final position error over the object's true displacement, in percent;
    /// trajectories where the object did not move are left out.
    pub trans_pct: Option<f64>,
    pub pos_mm: f64,
    pub rot_deg: f64,
    pub trajectories: usize,
    /// Trajectories that entered `trans_pct`.
    pub trans_trajectories: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub dataset: String,
    pub horizon: usize,
    pub objects: Vec<ObjectMetrics>,
}

impl MetricsReport {
    /// Position error averaged over objects (mm).
    pub fn mean_pos_mm(&self) -> f64 {
        self.objects.iter().map(|o| o.pos_mm).sum::<f64>() / self.objects.len().max(1) as f64
    }
}

/// End-of-horizon comparison of one trajectory: `[x, y, theta]` per object
/// for the prediction, the true start and the true end.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalPoses {
    pub predicted: Vec<[f64; 3]>,
    pub initial: Vec<[f64; 3]>,
    pub truth: Vec<[f64; 3]>,
}

#[derive(Debug, thiserror::Error)]
#[error("trajectory {index} has {found} objects, expected {expected}")]
pub struct ObjectCountMismatch {
    pub index: usize,
    pub found: usize,
    pub expected: usize,
}

pub fn compute_metrics(model: &str, dataset: &str, horizon: usize, poses: &[FinalPoses]) -> Result<MetricsReport, ObjectCountMismatch> {
    let n = poses.first().map_or(0, |p| p.truth.len());
    let mut pos = vec![0.0; n];
    let mut rot = vec![0.0; n];
    let mut trans = vec![(0.0, 0usize); n];
    for (index, p) in poses.iter().enumerate() {
        for found in [p.predicted.len(), p.initial.len(), p.truth.len()] {
            if found != n {
                return Err(ObjectCountMismatch { index, found, expected: n });
            }
        }
        for i in 0..n {
            let (a, b, s) = (p.predicted[i], p.truth[i], p.initial[i]);
            let err = (a[0] - b[0]).hypot(a[1] - b[1]);
            pos[i] += err;
            rot[i] += wrap_angle(a[2] - b[2]).abs();
            let moved = (b[0] - s[0]).hypot(b[1] - s[1]);
            if moved >= MIN_DISPLACEMENT {
                trans[i].0 += err / moved;
                trans[i].1 += 1;
            }
        }
    }
    let count = poses.len().max(1) as f64;
    let objects = (0..n)
        .map(|i| ObjectMetrics {
            object: i,
            trans_pct: (trans[i].1 > 0).then(|| 100.0 * trans[i].0 / trans[i].1 as f64),
            pos_mm: 1e3 * pos[i] / count,
            rot_deg: rot[i].to_degrees() / count,
            trajectories: poses.len(),
            trans_trajectories: trans[i].1,
        })
        .collect();
    Ok(MetricsReport {
        model: model.into(),
        dataset: dataset.into(),
        horizon,
        objects,
    })
}
