use proptest::prelude::*;

use situate_core::datamodel::{ObservationWindow, WindowSpec};
use situate_core::decoder::{forward, top_k_indices, ModelConfig};
use situate_core::dyngcn::{normalize_adjacency, window_dynamic_adjacency};
use situate_core::evalkit::{average_precision, direction_angle, rotation_angle};
use situate_core::numerics::linalg::{self, symmetric_eigen};
use situate_core::numerics::{dct_forward, dct_matrix, idct_inverse, Tape, Tensor};
use situate_core::pipeline::init_params;
use situate_core::testutil::random_window;

/// Precision at every distinct threshold, recall-weighted.
fn threshold_ap(scores: &[f64], labels: &[f64]) -> f64 {
    let positives = labels.iter().filter(|&&y| y == 1.0).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for th in thresholds {
        let picked: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= th).collect();
        let tp = picked.iter().filter(|&&i| labels[i] == 1.0).count() as f64;
        let recall = tp / positives;
        ap += (recall - prev_recall) * tp / picked.len() as f64;
        prev_recall = recall;
    }
    100.0 * ap
}

fn permute_objects(obs: &ObservationWindow, perm: &[usize]) -> ObservationWindow {
    let per_object = |t: &Tensor| {
        let s = t.shape();
        let (frames, n) = (s[0], s[1]);
        let inner: usize = s[2..].iter().product();
        let mut out = Vec::with_capacity(t.len());
        for f in 0..frames {
            for &i in perm {
                out.extend_from_slice(&t.data()[(f * n + i) * inner..(f * n + i + 1) * inner]);
            }
        }
        Tensor::new(s, out).unwrap()
    };
    let d = obs.semantic.shape()[1];
    let semantic: Vec<f64> = perm.iter().flat_map(|&i| obs.semantic.data()[i * d..(i + 1) * d].to_vec()).collect();
    ObservationWindow {
        bbox: per_object(&obs.bbox),
        centers: per_object(&obs.centers),
        semantic: Tensor::new(obs.semantic.shape(), semantic).unwrap(),
        labels: perm.iter().map(|&i| obs.labels[i].clone()).collect(),
        ..obs.clone()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dct_round_trip(t in 1usize..=30, d in 1usize..=144, seed in any::<u64>()) {
        let mut rng = situate_core::numerics::XorShift64Star::new(seed);
        let x = Tensor::from_fn(&[t, d], |_| rng.range(-10.0, 10.0));
        let back = idct_inverse(&dct_forward(&x).unwrap()).unwrap();
        let err = x.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9);
    }

    #[test]
    fn dct_basis_orthonormal(t in 1usize..=30) {
        let b = dct_matrix(t);
        let g = b.t().matmul(&b).unwrap();
        for i in 0..t {
            for j in 0..t {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g.at(&[i, j]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ap_matches_threshold_sweep(
        items in prop::collection::vec((0u8..20, prop::bool::ANY), 1..40),
    ) {
        let scores: Vec<f64> = items.iter().map(|(s, _)| *s as f64 / 20.0).collect();
        let mut labels: Vec<f64> = items.iter().map(|(_, y)| if *y { 1.0 } else { 0.0 }).collect();
        labels[0] = 1.0;
        let ap = average_precision(&scores, &labels).unwrap();
        prop_assert!((ap - threshold_ap(&scores, &labels)).abs() < 1e-12);
        // reversing the input order must not matter
        let rs: Vec<f64> = scores.iter().rev().copied().collect();
        let rl: Vec<f64> = labels.iter().rev().copied().collect();
        prop_assert!((ap - average_precision(&rs, &rl).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn top_k_ignores_shift(values in prop::collection::btree_set(0u32..1_000_000, 4..30), shift in -3i32..3, k in 1usize..4) {
        let probs: Vec<f64> = values.iter().rev().enumerate().map(|(i, &v)| if i % 2 == 0 { v as f64 * 1e-6 } else { -(v as f64) * 1e-6 }).collect();
        let shifted: Vec<f64> = probs.iter().map(|p| p + shift as f64).collect();
        prop_assert_eq!(top_k_indices(&probs, k).unwrap(), top_k_indices(&shifted, k).unwrap());
    }

    #[test]
    fn angles_are_symmetric(a in prop::array::uniform3(-1.0f64..1.0), b in prop::array::uniform3(-1.0f64..1.0), angle in 0.0f64..3.0) {
        prop_assume!(linalg::norm(a) > 1e-3 && linalg::norm(b) > 1e-3);
        prop_assert!((direction_angle(a, b) - direction_angle(b, a)).abs() < 1e-12);
        let r1 = linalg::axis_angle(linalg::normalize(a), angle);
        let r2 = linalg::axis_angle(linalg::normalize(b), angle * 0.5);
        prop_assert!((rotation_angle(&r1, &r2) - rotation_angle(&r2, &r1)).abs() < 1e-9);
        prop_assert!(rotation_angle(&r1, &r1) < 1e-6);
    }

    #[test]
    fn normalized_adjacency_spectrum_in_unit_interval(seed in any::<u64>()) {
        let cfg = ModelConfig::tiny();
        let w = random_window(&cfg, seed);
        let params = init_params(&cfg, seed).unwrap();
        let adj = window_dynamic_adjacency(&w.obs, &params).unwrap();
        let tape = Tape::new();
        let norm = normalize_adjacency(tape.constant(adj.matrix.clone())).unwrap().value();
        let n = norm.shape()[0];
        let (eig, _) = symmetric_eigen(norm.data(), n);
        for l in eig {
            prop_assert!(l.abs() <= 1.0 + 1e-9, "eigenvalue {}", l);
        }
    }

    #[test]
    fn intention_scores_follow_object_permutation(seed in any::<u64>(), rot in 1usize..4) {
        let cfg = ModelConfig::tiny();
        let w = random_window(&cfg, seed);
        let params = init_params(&cfg, seed ^ 1).unwrap();
        let n = cfg.n_objects;
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let (base, _) = forward(&w.obs, &params).unwrap();
        let (moved, _) = forward(&permute_objects(&w.obs, &perm), &params).unwrap();
        let (base, moved) = (base.unwrap().p_int, moved.unwrap().p_int);
        for (new_i, &old_i) in perm.iter().enumerate() {
            prop_assert!((moved[new_i] - base[old_i]).abs() < 1e-10);
        }
    }

    #[test]
    fn predicted_gaze_is_unit(seed in any::<u64>()) {
        let cfg = ModelConfig::tiny();
        let w = random_window(&cfg, seed);
        let params = init_params(&cfg, seed).unwrap();
        let (_, pred) = forward(&w.obs, &params).unwrap();
        for f in 0..cfg.t_f {
            let g = [pred.future.gaze.at(&[f, 0]), pred.future.gaze.at(&[f, 1]), pred.future.gaze.at(&[f, 2])];
            prop_assert!((linalg::norm(g) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn window_count_formula(frames in 0usize..400, stride in 1usize..4, history in 1usize..20, horizon in 1usize..20) {
        let spec = WindowSpec { history, horizon, stride, source_hz: 30.0 };
        let sampled = frames.div_ceil(stride);
        let want = (sampled + 1).saturating_sub(history + horizon);
        prop_assert_eq!(spec.window_count(frames), want);
    }
}
