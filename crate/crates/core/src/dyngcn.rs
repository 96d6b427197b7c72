//! Dynamic graph over the pose/global node, the gaze node and all
//! objects. Edge weights come from gaze angles, hand and head proximity
//! and object-object distances of the observed window.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::datamodel::ObservationWindow;
use crate::decoder::{BoundParams, Init, ModelConfig, ParamSpec};
use crate::encoder::{self, push_mlp, spatial_step, temporal_step};
use crate::numerics::linalg::{self, Vec3};
use crate::numerics::{Tape, Tensor, Var};
use crate::{Error, Result};

/// acos argument bound.
pub const ACOS_CLAMP: f64 = 1.0 - 1e-12;

/// Node index of the pose/global node.
pub const POSE: usize = 0;
/// Node index of the gaze node.
pub const GAZE: usize = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct GazeGeometry {
    /// `[T, N]` radians
    pub theta: Tensor,
    /// `[T, N, 3]` center minus head
    pub offset: Tensor,
    /// `[T, N]` meters
    pub distance: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProximityGeometry {
    /// `[N]`
    pub d_p: Vec<f64>,
    /// `[N, N]`
    pub d_o: Tensor,
}

/// Angle between the gaze ray and the head-to-object vector.
pub fn gaze_angle(gaze: Vec3, offset: Vec3) -> f64 {
    let n = linalg::norm(offset) * linalg::norm(gaze);
    if n == 0.0 {
        return core::f64::consts::FRAC_PI_2;
    }
    libm::acos((linalg::dot(gaze, offset) / n).clamp(-ACOS_CLAMP, ACOS_CLAMP))
}

pub fn gaze_geometry(gaze: &Tensor, head_pos: &Tensor, centers: &Tensor) -> Result<GazeGeometry> {
    let t = gaze.shape()[0];
    let n = centers.shape()[1];
    if head_pos.shape() != [t, 3] || centers.shape() != [t, n, 3] || gaze.shape() != [t, 3] {
        return Err(Error::shape("gaze_geometry", format!("{:?} {:?} {:?}", gaze.shape(), head_pos.shape(), centers.shape())));
    }
    let mut theta = Tensor::zeros(&[t, n]);
    let mut offset = Tensor::zeros(&[t, n, 3]);
    let mut distance = Tensor::zeros(&[t, n]);
    for f in 0..t {
        let g = row(gaze, f);
        let h = row(head_pos, f);
        for i in 0..n {
            let d = linalg::sub(row(centers, f * n + i), h);
            theta.data_mut()[f * n + i] = gaze_angle(g, d);
            distance.data_mut()[f * n + i] = linalg::norm(d);
            offset.data_mut()[(f * n + i) * 3..(f * n + i) * 3 + 3].copy_from_slice(&d);
        }
    }
    Ok(GazeGeometry { theta, offset, distance })
}

fn row(t: &Tensor, r: usize) -> Vec3 {
    let d = &t.data()[r * 3..r * 3 + 3];
    [d[0], d[1], d[2]]
}

/// Per-object `[θ over T, ‖d_g‖ over T]` rows, `[N, 2T]`.
pub fn gaze_features(geom: &GazeGeometry) -> Tensor {
    let (t, n) = (geom.theta.shape()[0], geom.theta.shape()[1]);
    Tensor::from_fn(&[n, 2 * t], |k| {
        let (i, c) = (k / (2 * t), k % (2 * t));
        if c < t {
            geom.theta.data()[c * n + i]
        } else {
            geom.distance.data()[(c - t) * n + i]
        }
    })
}

/// `A_g = softplus(f_g([θ, ‖d_g‖]))`, one weight per object.
pub fn gaze_object_weights<'t>(tape: &'t Tape, p: &BoundParams<'_, 't>, geom: &GazeGeometry) -> Result<Var<'t>> {
    let feats = tape.constant(gaze_features(geom));
    let n = feats.shape()[0];
    encoder::mlp(p, "dgcn.fg", feats)?.softplus().reshape(&[n])
}

/// Per-object mean distance to its nearest keypoint track, and `A_p = exp(−d_p)`.
pub fn position_object_weights(head_pos: &Tensor, hand_pos: &Tensor, centers: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = head_pos.shape()[0];
    let n = centers.shape()[1];
    if hand_pos.shape() != [t, 2, 3] || centers.shape() != [t, n, 3] {
        return Err(Error::shape("position_object_weights", format!("{:?} {:?}", hand_pos.shape(), centers.shape())));
    }
    let mut d_p = Vec::with_capacity(n);
    for i in 0..n {
        let mut sums = [0.0; 3];
        for f in 0..t {
            let c = row(centers, f * n + i);
            sums[0] += linalg::dist(c, row(head_pos, f));
            sums[1] += linalg::dist(c, row(hand_pos, f * 2));
            sums[2] += linalg::dist(c, row(hand_pos, f * 2 + 1));
        }
        d_p.push(sums.iter().copied().fold(f64::INFINITY, f64::min) / t as f64);
    }
    let a_p = d_p.iter().map(|d| libm::exp(-d)).collect();
    Ok((d_p, a_p))
}

/// Mean pairwise center distance and `A_o = exp(−d_o)`.
pub fn object_object_weights(centers: &Tensor) -> Result<(Tensor, Tensor)> {
    if centers.rank() != 3 || centers.shape()[2] != 3 {
        return Err(Error::shape("object_object_weights", format!("{:?}", centers.shape())));
    }
    let (t, n) = (centers.shape()[0], centers.shape()[1]);
    let mut d_o = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i + 1..n {
            let mut s = 0.0;
            for f in 0..t {
                s += linalg::dist(row(centers, f * n + i), row(centers, f * n + j));
            }
            let d = s / t as f64;
            d_o.data_mut()[i * n + j] = d;
            d_o.data_mut()[j * n + i] = d;
        }
    }
    let a_o = d_o.map(|d| libm::exp(-d));
    Ok((d_o, a_o))
}

pub fn proximity_geometry(obs: &ObservationWindow) -> Result<ProximityGeometry> {
    let (d_p, _) = position_object_weights(&obs.head_pos, &obs.hand_pos, &obs.centers)?;
    let (d_o, _) = object_object_weights(&obs.centers)?;
    Ok(ProximityGeometry { d_p, d_o })
}

/// The assembled `(N+2)×(N+2)` weight matrix with its components.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicAdjacency {
    pub a_g: Vec<f64>,
    pub a_p: Vec<f64>,
    pub a_o: Tensor,
    pub matrix: Tensor,
}

/// Fixed part: pose-gaze link, human self-loops, `A_p` and `A_o` blocks.
fn fixed_part(a_p: &[f64], a_o: &Tensor) -> Result<Tensor> {
    let n = a_p.len();
    if a_o.shape() != [n, n] {
        return Err(Error::shape("assemble", format!("A_p {n}, A_o {:?}", a_o.shape())));
    }
    let m = n + 2;
    let mut a = Tensor::zeros(&[m, m]);
    {
        let d = a.data_mut();
        d[POSE * m + POSE] = 1.0;
        d[GAZE * m + GAZE] = 1.0;
        d[POSE * m + GAZE] = 1.0;
        d[GAZE * m + POSE] = 1.0;
        for i in 0..n {
            d[POSE * m + 2 + i] = a_p[i];
            d[(2 + i) * m + POSE] = a_p[i];
            for j in 0..n {
                // symmetrized; A_o is symmetric already when built from distances
                d[(2 + i) * m + 2 + j] = 0.5 * (a_o.data()[i * n + j] + a_o.data()[j * n + i]);
            }
        }
    }
    Ok(a)
}

/// Flat positions of the gaze-object entries, `[gaze→i ..., i→gaze ...]`.
fn gaze_slots(n: usize) -> Vec<usize> {
    let m = n + 2;
    (0..n).map(|i| GAZE * m + 2 + i).chain((0..n).map(|i| (2 + i) * m + GAZE)).collect()
}

impl DynamicAdjacency {
    pub fn assemble(a_g: &[f64], a_p: &[f64], a_o: &Tensor) -> Result<Self> {
        if a_g.len() != a_p.len() {
            return Err(Error::shape("assemble", format!("A_g {} vs A_p {}", a_g.len(), a_p.len())));
        }
        for (name, ok) in
            [("A_g", a_g.iter().all(|v| v.is_finite())), ("A_p", a_p.iter().all(|v| v.is_finite())), ("A_o", a_o.is_finite())]
        {
            if !ok {
                return Err(Error::NonFinite { op: format!("assemble({name})") });
            }
        }
        let mut matrix = fixed_part(a_p, a_o)?;
        for (k, slot) in gaze_slots(a_g.len()).into_iter().enumerate() {
            matrix.data_mut()[slot] = a_g[k % a_g.len()];
        }
        Ok(DynamicAdjacency { a_g: a_g.to_vec(), a_p: a_p.to_vec(), a_o: a_o.clone(), matrix })
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.matrix.rows().map(|r| r.iter().sum()).collect()
    }

    /// Row-per-line CSV of the full matrix.
    pub fn to_csv(&self) -> alloc::string::String {
        let mut s = alloc::string::String::new();
        for r in self.matrix.rows() {
            let line: Vec<alloc::string::String> = r.iter().map(|v| format!("{v:.17e}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

/// Taped assembly: `A_g` stays differentiable, the rest is constant.
pub fn assemble_var<'t>(a_g: Var<'t>, a_p: &[f64], a_o: &Tensor) -> Result<Var<'t>> {
    let n = a_p.len();
    if a_g.shape() != [n] {
        return Err(Error::shape("assemble", format!("A_g {:?} vs {n} objects", a_g.shape())));
    }
    let tape = a_g.tape();
    let fixed = tape.constant(fixed_part(a_p, a_o)?);
    let both = tape.concat(&[a_g, a_g])?;
    let gaze = both.scatter_add(gaze_slots(n), &[n + 2, n + 2])?;
    fixed.add(gaze)
}

/// `D^{-1/2} A D^{-1/2}`.
pub fn normalize_adjacency<'t>(a: Var<'t>) -> Result<Var<'t>> {
    let deg = a.sum_last()?;
    if let Some(i) = deg.value().data().iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Singular(format!("node {i} has non-positive degree")));
    }
    let dinv = deg.powf(-0.5);
    a.mul(dinv.outer(dinv)?)
}

/// One normalized spatial update `D^{-1/2} A D^{-1/2} X W` on `x: [n, d]`.
pub fn sgcn_update_var<'t>(x: Var<'t>, a: Var<'t>, w: Var<'t>) -> Result<Var<'t>> {
    normalize_adjacency(a)?.matmul(x)?.matmul(w)
}

pub fn sgcn_update(x: &Tensor, a: &Tensor, w: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let out = sgcn_update_var(tape.constant(x.clone()), tape.constant(a.clone()), tape.constant(w.clone()))?;
    Ok(out.value())
}

pub(crate) fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let (t, d, h) = (cfg.t_h, cfg.d, cfg.hidden);
    let mut s = Vec::new();
    if cfg.flags.vanilla_gcn {
        let m = cfg.n_objects + 2;
        s.push(ParamSpec::new("dgcn.vanilla.phi".into(), &[m, m], Init::Constant(libm::log(core::f64::consts::E - 1.0))));
    } else {
        push_mlp(&mut s, "dgcn.fg", 2 * t, h, 1);
    }
    for l in 0..cfg.l_i {
        let p = format!("dgcn.l{l}");
        encoder::push_temporal(&mut s, &p, t, d);
        s.push(ParamSpec::new(format!("{p}.w"), &[d, d], Init::Uniform { fan_in: d }));
        s.push(ParamSpec::new(format!("{p}.b"), &[d], Init::Uniform { fan_in: d }));
    }
    s
}

/// Updated `(H_global [D], H_gaze [T, D], H_obj [T, N, D])`.
#[derive(Clone, Copy, Debug)]
pub struct DynamicOutput<'t> {
    pub global: Var<'t>,
    pub gaze: Var<'t>,
    pub objects: Var<'t>,
}

/// Normalized adjacency for one window: dynamic, or the learnable
/// all-ones matrix of the vanilla ablation.
pub fn window_adjacency<'t>(
    tape: &'t Tape,
    p: &BoundParams<'_, 't>,
    obs: &ObservationWindow,
    cfg: &ModelConfig,
) -> Result<Var<'t>> {
    if cfg.flags.vanilla_gcn {
        return normalize_adjacency(p.get("dgcn.vanilla.phi")?.softplus());
    }
    let geom = gaze_geometry(&obs.gaze, &obs.head_pos, &obs.centers)?;
    let a_g = gaze_object_weights(tape, p, &geom)?;
    let (_, a_p) = position_object_weights(&obs.head_pos, &obs.hand_pos, &obs.centers)?;
    let (_, a_o) = object_object_weights(&obs.centers)?;
    normalize_adjacency(assemble_var(a_g, &a_p, &a_o)?)
}

/// Plain adjacency of one window (components and matrix) for inspection.
pub fn window_dynamic_adjacency(obs: &ObservationWindow, params: &crate::decoder::ModelParams) -> Result<DynamicAdjacency> {
    let tape = Tape::new();
    let p = params.bind_constant(&tape);
    let geom = gaze_geometry(&obs.gaze, &obs.head_pos, &obs.centers)?;
    let a_g = if params.config().flags.vanilla_gcn {
        vec![1.0; obs.n_objects()]
    } else {
        gaze_object_weights(&tape, &p, &geom)?.value().into_data()
    };
    let (_, a_p) = position_object_weights(&obs.head_pos, &obs.hand_pos, &obs.centers)?;
    let (_, a_o) = object_object_weights(&obs.centers)?;
    DynamicAdjacency::assemble(&a_g, &a_p, &a_o)
}

pub fn dynamic_gcn_forward<'t>(
    tape: &'t Tape,
    p: &BoundParams<'_, 't>,
    global: Var<'t>,
    gaze: Var<'t>,
    objects: Var<'t>,
    obs: &ObservationWindow,
    cfg: &ModelConfig,
) -> Result<DynamicOutput<'t>> {
    let (t, d, n) = (cfg.t_h, cfg.d, cfg.n_objects);
    let a = window_adjacency(tape, p, obs, cfg)?;
    let g = global.repeat0(t)?.reshape(&[1, t, d])?;
    let z = gaze.reshape(&[1, t, d])?;
    let o = objects.permute(&[1, 0, 2])?;
    let mut x = tape.concat(&[g, z, o])?;
    for l in 0..cfg.l_i {
        let pre = format!("dgcn.l{l}");
        let y = temporal_step(p, &pre, x)?;
        x = spatial_step(a, y, p.get(&format!("{pre}.w"))?, p.get(&format!("{pre}.b"))?)?;
    }
    let global = encoder::time_mean(x.select0(&[POSE])?.reshape(&[t, d])?)?;
    let gaze = x.select0(&[GAZE])?.reshape(&[t, d])?;
    let objects = x.slice0(2, n + 2)?.permute(&[1, 0, 2])?;
    Ok(DynamicOutput { global, gaze, objects })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3(v: &[[f64; 3]]) -> Tensor {
        Tensor::new(&[v.len(), 3], v.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn gaze_angles_at_extremes() {
        let gaze = t3(&[[1.0, 0.0, 0.0]]);
        let head = t3(&[[0.0, 0.0, 0.0]]);
        let centers = Tensor::new(&[1, 3, 3], vec![2.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let g = gaze_geometry(&gaze, &head, &centers).unwrap();
        assert!(g.theta.data()[0] < 1e-5);
        assert!((g.theta.data()[1] - core::f64::consts::PI).abs() < 1e-5);
        assert_eq!(g.theta.data()[2], core::f64::consts::FRAC_PI_2);
        assert_eq!(g.distance.data()[2], 0.0);
    }

    #[test]
    fn proximity_closed_forms() {
        let head = t3(&[[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]);
        let hands = Tensor::new(&[2, 2, 3], vec![5.0; 12]).unwrap();
        let ln2 = core::f64::consts::LN_2;
        let centers = Tensor::new(&[2, 2, 3], vec![0.0, 0.0, 1.0, ln2, 0.0, 1.0, 0.0, 0.0, 1.0, ln2, 0.0, 1.0]).unwrap();
        let (d_p, a_p) = position_object_weights(&head, &hands, &centers).unwrap();
        assert_eq!(d_p[0], 0.0);
        assert_eq!(a_p[0], 1.0);
        assert!((a_p[1] - 0.5).abs() < 1e-15);
        let (_, a_o) = object_object_weights(&centers).unwrap();
        assert_eq!(a_o.at(&[0, 0]), 1.0);
        assert_eq!(a_o.at(&[0, 1]), a_o.at(&[1, 0]));
    }

    #[test]
    fn static_objects_one_meter_apart() {
        let c = Tensor::new(&[3, 2, 3], [0.0, 0.0, 0.0, 1.0, 0.0, 0.0].repeat(3)).unwrap();
        let (_, a_o) = object_object_weights(&c).unwrap();
        assert!((a_o.at(&[0, 1]) - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn assembled_layout() {
        let a_o = Tensor::new(&[2, 2], vec![1.0, 0.3, 0.3, 1.0]).unwrap();
        let adj = DynamicAdjacency::assemble(&[0.7, 0.2], &[0.9, 0.4], &a_o).unwrap();
        let m = &adj.matrix;
        assert_eq!(m.at(&[0, 1]), 1.0);
        assert_eq!(m.at(&[1, 2]), 0.7);
        assert_eq!(m.at(&[3, 0]), 0.4);
        assert_eq!(m.at(&[3, 2]), 0.3);
        assert_eq!(m.t(), *m);
        assert_eq!(
            adj.degrees(),
            vec![1.0 + 1.0 + 0.9 + 0.4, 1.0 + 1.0 + 0.7 + 0.2, 0.9 + 0.7 + 1.0 + 0.3, 0.4 + 0.2 + 0.3 + 1.0]
        );
        assert!(DynamicAdjacency::assemble(&[f64::NAN, 0.2], &[0.9, 0.4], &a_o).is_err());
    }

    #[test]
    fn taped_assembly_matches_plain() {
        let a_o = Tensor::new(&[2, 2], vec![1.0, 0.3, 0.3, 1.0]).unwrap();
        let plain = DynamicAdjacency::assemble(&[0.7, 0.2], &[0.9, 0.4], &a_o).unwrap();
        let tape = Tape::new();
        let v = assemble_var(tape.constant(Tensor::vector(vec![0.7, 0.2])), &[0.9, 0.4], &a_o).unwrap();
        assert_eq!(v.value(), plain.matrix);
    }

    #[test]
    fn identity_propagation_and_scale_invariance() {
        let x = Tensor::from_fn(&[3, 2], |i| i as f64 - 2.5);
        assert_eq!(sgcn_update(&x, &Tensor::eye(3), &Tensor::eye(2)).unwrap(), x);
        let a = Tensor::new(&[3, 3], vec![1.0, 0.5, 0.2, 0.5, 1.0, 0.0, 0.2, 0.0, 1.0]).unwrap();
        let w = Tensor::from_fn(&[2, 2], |i| 0.3 * i as f64 + 0.1);
        let y1 = sgcn_update(&x, &a, &w).unwrap();
        let y2 = sgcn_update(&x, &a.scale(7.0), &w).unwrap();
        for (p, q) in y1.data().iter().zip(y2.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_degree_is_singular() {
        let x = Tensor::eye(2);
        let a = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(sgcn_update(&x, &a, &x), Err(Error::Singular(_))));
    }
}
