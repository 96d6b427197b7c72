//! Random but valid windows for tests, gradient checks and benchmarks.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::datamodel::{FutureStates, ObservationWindow, Window};
use crate::decoder::ModelConfig;
use crate::encoder::{embed_labels, LabelEmbeddingTable};
use crate::numerics::linalg::{self, Vec3};
use crate::numerics::{Tensor, XorShift64Star};

fn unit(rng: &mut XorShift64Star) -> Vec3 {
    loop {
        let v = [rng.normal(), rng.normal(), rng.normal()];
        if linalg::norm(v) > 1e-3 {
            return linalg::normalize(v);
        }
    }
}

fn push_states(rng: &mut XorShift64Star, frames: usize, n: usize, centers: &mut [Vec3]) -> [Tensor; 5] {
    let mut gaze = Vec::new();
    let mut rot = Vec::new();
    let mut head = Vec::new();
    let mut hands = Vec::new();
    let mut cs = Vec::new();
    let h0 = [rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), 1.6];
    for f in 0..frames {
        gaze.extend(unit(rng));
        rot.extend(linalg::axis_angle(unit(rng), rng.range(0.0, 3.0)));
        let h = linalg::add(h0, [0.02 * f as f64, 0.0, rng.range(-0.01, 0.01)]);
        head.extend(h);
        for _ in 0..2 {
            hands.extend(linalg::add(h, [rng.range(-0.4, 0.4), rng.range(-0.4, 0.4), -0.5]));
        }
        for c in centers.iter_mut() {
            *c = linalg::add(*c, [rng.range(-0.01, 0.01), rng.range(-0.01, 0.01), 0.0]);
            cs.extend(*c);
        }
    }
    let mk = |s: &[usize], d: Vec<f64>| Tensor::new(s, d).expect("sized by construction");
    [
        mk(&[frames, 3], gaze),
        mk(&[frames, 3, 3], rot),
        mk(&[frames, 3], head),
        mk(&[frames, 2, 3], hands),
        mk(&[frames, n, 3], cs),
    ]
}

/// A window whose shapes follow `cfg` and whose values satisfy every
/// datamodel invariant. Labels are random with at least one positive.
pub fn random_window(cfg: &ModelConfig, seed: u64) -> Window {
    let mut rng = XorShift64Star::new(seed ^ 0x5EED);
    let (t, tf, n) = (cfg.t_h, cfg.t_f, cfg.n_objects);
    let mut centers: Vec<Vec3> = (0..n).map(|_| [rng.range(-2.0, 2.0), rng.range(-2.0, 2.0), rng.range(0.5, 1.5)]).collect();
    let half: Vec<Vec3> = (0..n).map(|_| [rng.range(0.02, 0.1), rng.range(0.02, 0.1), rng.range(0.02, 0.1)]).collect();
    let [gaze, head_rot, head_pos, hand_pos, cs] = push_states(&mut rng, t, n, &mut centers);
    let mut bbox = Vec::with_capacity(t * n * 24);
    for f in 0..t {
        for (i, hs) in half.iter().enumerate() {
            let c = [cs.at(&[f, i, 0]), cs.at(&[f, i, 1]), cs.at(&[f, i, 2])];
            for v in 0..8 {
                let s = |bit: usize| if v >> bit & 1 == 1 { 1.0 } else { -1.0 };
                bbox.extend([c[0] + s(0) * hs[0], c[1] + s(1) * hs[1], c[2] + s(2) * hs[2]]);
            }
        }
    }
    let labels: Vec<String> = (0..n).map(|i| format!("item{}", i % 5)).collect();
    let semantic = embed_labels(&labels, &LabelEmbeddingTable::new(cfg.d_clip));
    let [fgaze, frot, fhead, fhands, fcs] = push_states(&mut rng, tf, n, &mut centers);
    let mut interaction: Vec<f64> = (0..n).map(|_| if rng.uniform() < 0.3 { 1.0 } else { 0.0 }).collect();
    interaction[rng.below(n)] = 1.0;
    let history_flags = (0..t).map(|_| (0..n).map(|_| rng.uniform() < 0.2).collect()).collect();
    let future_flags = (0..tf).map(|_| interaction.iter().map(|&y| y == 1.0).collect()).collect();
    Window {
        obs: ObservationWindow {
            gaze,
            head_rot,
            head_pos,
            hand_pos,
            bbox: Tensor::new(&[t, n, 8, 3], bbox).expect("sized by construction"),
            centers: cs,
            semantic,
            labels,
        },
        future: FutureStates { gaze: fgaze, head_rot: frot, head_pos: fhead, hand_pos: fhands, object_centers: fcs, interaction },
        history_flags,
        future_flags,
        start: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_windows_are_valid() {
        for seed in 0..5 {
            let w = random_window(&ModelConfig::tiny(), seed);
            w.obs.validate().unwrap();
            w.future.validate().unwrap();
        }
    }
}
