//! Evaluation metrics and heuristic baselines.

use alloc::format;
use alloc::vec::Vec;

use crate::datamodel::{FutureStates, ObservationWindow, Window};
use crate::decoder::Prediction;
use crate::dyngcn::{gaze_geometry, position_object_weights};
use crate::numerics::linalg::{self, Mat3, Vec3};
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Aggregated evaluation metrics. Distances in millimeters, angles in
/// degrees, AP in percent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub hand_mm: f64,
    pub head_dist_mm: f64,
    pub head_dir_deg: f64,
    pub gaze_deg: f64,
    pub object_center_mm: f64,
    /// `None` when the evaluated windows hold no positive label.
    pub object_ap: Option<f64>,
    pub windows: usize,
}

fn row(t: &Tensor, r: usize) -> Vec3 {
    let d = &t.data()[r * 3..r * 3 + 3];
    [d[0], d[1], d[2]]
}

fn mat(t: &Tensor, r: usize) -> Mat3 {
    let mut m = [0.0; 9];
    m.copy_from_slice(&t.data()[r * 9..r * 9 + 9]);
    m
}

fn mean_dist(a: &Tensor, b: &Tensor) -> f64 {
    let n = a.len() / 3;
    (0..n).map(|r| linalg::dist(row(a, r), row(b, r))).sum::<f64>() / n as f64
}

/// `(hand_mm, head_dist_mm, object_center_mm)`. Object errors compare each
/// reported object against the same object's ground truth.
pub fn l2_metrics(pred: &Prediction, gt: &FutureStates) -> Result<(f64, f64, f64)> {
    let f = &pred.future;
    if f.hand_pos.shape() != gt.hand_pos.shape() || f.head_pos.shape() != gt.head_pos.shape() {
        return Err(Error::shape("l2_metrics", format!("{:?} vs {:?}", f.hand_pos.shape(), gt.hand_pos.shape())));
    }
    let gt_centers = crate::objective::gather_centers(&gt.object_centers, &pred.indices)?;
    if gt_centers.shape() != f.object_centers.shape() {
        return Err(Error::shape("l2_metrics", format!("{:?} vs {:?}", f.object_centers.shape(), gt_centers.shape())));
    }
    Ok((
        1000.0 * mean_dist(&f.hand_pos, &gt.hand_pos),
        1000.0 * mean_dist(&f.head_pos, &gt.head_pos),
        1000.0 * mean_dist(&f.object_centers, &gt_centers),
    ))
}

/// Geodesic angle between two rotations, radians.
pub fn rotation_angle(a: &Mat3, b: &Mat3) -> f64 {
    let c = (linalg::trace(&linalg::mat_mul(&linalg::mat_t(a), b)) - 1.0) / 2.0;
    libm::acos(c.clamp(-1.0, 1.0))
}

/// Angle between two directions, radians.
pub fn direction_angle(a: Vec3, b: Vec3) -> f64 {
    let c = linalg::dot(a, b) / (linalg::norm(a) * linalg::norm(b));
    libm::acos(c.clamp(-1.0, 1.0))
}

/// `(head_dir_deg, gaze_deg)`; predicted head matrices are first projected
/// to the nearest rotation.
pub fn angular_metrics(pred: &FutureStates, gt: &FutureStates) -> Result<(f64, f64)> {
    for (name, t) in [("head_rot", &pred.head_rot), ("gaze", &pred.gaze), ("gt.head_rot", &gt.head_rot), ("gt.gaze", &gt.gaze)] {
        t.ensure_finite(name)?;
    }
    let t = gt.horizon();
    if pred.horizon() != t {
        return Err(Error::shape("angular_metrics", format!("{} vs {t} frames", pred.horizon())));
    }
    let mut head = 0.0;
    let mut gaze = 0.0;
    for f in 0..t {
        head += rotation_angle(&linalg::nearest_rotation(&mat(&pred.head_rot, f)), &mat(&gt.head_rot, f));
        gaze += direction_angle(row(&pred.gaze, f), row(&gt.gaze, f));
    }
    Ok((head.to_degrees() / t as f64, gaze.to_degrees() / t as f64))
}

/// Average precision in percent over pooled `(score, label)` pairs.
///
/// Pairs are ranked by descending score. A run of tied scores is taken as
/// one threshold step, so the result does not depend on input order.
pub fn average_precision(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("average_precision", format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) || labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::arg("scores must be finite and labels binary"));
    }
    let positives = labels.iter().filter(|&&y| y == 1.0).count();
    if positives == 0 {
        return Err(Error::Evaluation("average precision undefined without positive labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let mut group_tp = 0;
        while k < order.len() && scores[order[k]] == s {
            group_tp += labels[order[k]] as usize;
            seen += 1;
            k += 1;
        }
        tp += group_tp;
        ap += group_tp as f64 * tp as f64 / seen as f64;
    }
    Ok(100.0 * ap / positives as f64)
}

/// Extrapolates the last observed velocity; gaze and head rotation held.
/// Interaction scores are `exp(−d_p)` for every object.
pub fn baseline_constant_velocity(obs: &ObservationWindow, t_f: usize) -> Result<Prediction> {
    let t = obs.history();
    if t < 2 {
        return Err(Error::arg("constant-velocity baseline needs two history frames"));
    }
    let n = obs.n_objects();
    let extrapolate = |series: &Tensor, width: usize| -> Result<Tensor> {
        let d = series.data();
        let last = &d[(t - 1) * width..t * width];
        let prev = &d[(t - 2) * width..(t - 1) * width];
        let mut out = Vec::with_capacity(t_f * width);
        for k in 1..=t_f {
            out.extend(last.iter().zip(prev).map(|(l, p)| l + (l - p) * k as f64));
        }
        let mut shape = series.shape().to_vec();
        shape[0] = t_f;
        Tensor::new(&shape, out)
    };
    let hold = |series: &Tensor, width: usize| -> Result<Tensor> {
        let d = &series.data()[(t - 1) * width..t * width];
        let mut shape = series.shape().to_vec();
        shape[0] = t_f;
        Tensor::new(&shape, d.repeat(t_f))
    };
    let (_, a_p) = position_object_weights(&obs.head_pos, &obs.hand_pos, &obs.centers)?;
    Ok(Prediction {
        future: FutureStates {
            gaze: hold(&obs.gaze, 3)?,
            head_rot: hold(&obs.head_rot, 9)?,
            head_pos: extrapolate(&obs.head_pos, 3)?,
            hand_pos: extrapolate(&obs.hand_pos, 6)?,
            object_centers: extrapolate(&obs.centers, n * 3)?,
            interaction: a_p.clone(),
        },
        indices: (0..n).collect(),
        object_scores: a_p,
    })
}

/// `exp(−mean_t θ_g(t, i))` per object.
pub fn baseline_gaze_ranking(obs: &ObservationWindow) -> Result<Vec<f64>> {
    let geom = gaze_geometry(&obs.gaze, &obs.head_pos, &obs.centers)?;
    let (t, n) = (obs.history(), obs.n_objects());
    Ok((0..n).map(|i| libm::exp(-(0..t).map(|f| geom.theta.data()[f * n + i]).sum::<f64>() / t as f64)).collect())
}

/// Running sums over evaluated windows.
#[derive(Clone, Debug, Default)]
pub struct MetricsAccumulator {
    sums: [f64; 5],
    trajectories: usize,
    scores: Vec<f64>,
    labels: Vec<f64>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one window's prediction.
    pub fn add(&mut self, pred: &Prediction, window: &Window) -> Result<()> {
        let (hand, head, center) = l2_metrics(pred, &window.future)?;
        let (dir, gaze) = angular_metrics(&pred.future, &window.future)?;
        for (s, v) in self.sums.iter_mut().zip([hand, head, dir, gaze, center]) {
            *s += v;
        }
        self.trajectories += 1;
        self.add_scores(&pred.object_scores, &window.future.interaction)
    }

    /// Add interaction scores only.
    pub fn add_scores(&mut self, scores: &[f64], labels: &[f64]) -> Result<()> {
        if scores.len() != labels.len() {
            return Err(Error::shape("add_scores", format!("{} scores, {} labels", scores.len(), labels.len())));
        }
        self.scores.extend_from_slice(scores);
        self.labels.extend_from_slice(labels);
        Ok(())
    }

    pub fn finish(&self) -> Result<MetricsReport> {
        let n = self.trajectories.max(1) as f64;
        let m = self.sums.map(|s| s / n);
        let object_ap = match average_precision(&self.scores, &self.labels) {
            Ok(ap) => Some(ap),
            Err(Error::Evaluation(_)) => None,
            Err(e) => return Err(e),
        };
        let report = MetricsReport {
            hand_mm: m[0],
            head_dist_mm: m[1],
            head_dir_deg: m[2],
            gaze_deg: m[3],
            object_center_mm: m[4],
            object_ap,
            windows: self.trajectories.max(self.scores.len().min(1)),
        };
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "metrics".into() });
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn worked_ap_example() {
        let ap = average_precision(&[0.9, 0.8, 0.3], &[1.0, 0.0, 1.0]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0 * 100.0).abs() < 1e-12);
        assert_eq!(format!("{ap:.2}"), "83.33");
        assert_eq!(average_precision(&[0.9, 0.2, 0.1], &[1.0, 1.0, 0.0]).unwrap(), 100.0);
        assert!(matches!(average_precision(&[0.5], &[0.0]), Err(Error::Evaluation(_))));
    }

    #[test]
    fn ties_are_order_free() {
        let a = average_precision(&[0.5; 4], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        let b = average_precision(&[0.5; 4], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(a, 50.0);
        assert_eq!(a, b);
    }

    #[test]
    fn rotation_angles() {
        let i = linalg::rot_z(0.0);
        assert_eq!(rotation_angle(&i, &i), 0.0);
        let r = linalg::rot_z(core::f64::consts::FRAC_PI_2);
        assert!((rotation_angle(&r, &i).to_degrees() - 90.0).abs() < 1e-9);
        assert_eq!(rotation_angle(&r, &i), rotation_angle(&i, &r));
    }

    #[test]
    fn constant_velocity_continues_lines() {
        let cfg = crate::decoder::ModelConfig::tiny();
        let mut w = crate::testutil::random_window(&cfg, 1);
        let t = cfg.t_h;
        for f in 0..t {
            for c in 0..3 {
                w.obs.head_pos.set(&[f, c], 0.1 * f as f64 + c as f64);
            }
        }
        let p = baseline_constant_velocity(&w.obs, 3).unwrap();
        for k in 0..3 {
            assert!((p.future.head_pos.at(&[k, 0]) - 0.1 * (t + k) as f64).abs() < 1e-12);
        }
        assert_eq!(p.future.gaze.at(&[2, 1]), w.obs.gaze.at(&[t - 1, 1]));
        assert_eq!(p.object_scores.len(), cfg.n_objects);
    }

    #[test]
    fn perfect_prediction_has_zero_error() {
        let cfg = crate::decoder::ModelConfig::tiny();
        let w = crate::testutil::random_window(&cfg, 8);
        let pred = Prediction {
            future: FutureStates {
                object_centers: crate::objective::gather_centers(&w.future.object_centers, &[1, 0]).unwrap(),
                interaction: vec![0.5, 0.5],
                ..w.future.clone()
            },
            indices: vec![1, 0],
            object_scores: vec![0.0; cfg.n_objects],
        };
        assert_eq!(l2_metrics(&pred, &w.future).unwrap(), (0.0, 0.0, 0.0));
        let (h, g) = angular_metrics(&pred.future, &w.future).unwrap();
        assert!(h < 1e-6 && g < 1e-6);
        let mut shifted = pred.clone();
        shifted.future.hand_pos = shifted.future.hand_pos.map(|v| v + 0.1 / 3f64.sqrt());
        assert!((l2_metrics(&shifted, &w.future).unwrap().0 - 100.0).abs() < 1e-9);
    }
}
