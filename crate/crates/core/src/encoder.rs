//! Observation encoding: frequency-domain inputs, per-modality MLPs, a
//! spatio-temporal GCN over head, hands and a global node, and fused
//! object features.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::datamodel::ObservationWindow;
use crate::decoder::{BoundParams, Init, ModelConfig, ModelParams, ParamSpec};
use crate::numerics::rng::{fnv1a, XorShift64Star};
use crate::numerics::{dct_forward, Tape, Tensor, Var};
use crate::{Error, Result};

/// Default width of the label embedding.
pub const DEFAULT_CLIP_DIM: usize = 32;

/// Deterministic label → unit-vector table standing in for a frozen
/// text encoder. Any string embeds; the table only caches.
#[derive(Clone, Debug)]
pub struct LabelEmbeddingTable {
    dim: usize,
    cache: Vec<(String, Vec<f64>)>,
}

impl LabelEmbeddingTable {
    pub fn new(dim: usize) -> Self {
        LabelEmbeddingTable { dim, cache: Vec::new() }
    }

    /// Table pre-populated with `vocab`.
    pub fn with_vocabulary(dim: usize, vocab: &[&str]) -> Self {
        let cache = vocab.iter().map(|w| (String::from(*w), hash_embedding(w, dim))).collect();
        LabelEmbeddingTable { dim, cache }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, label: &str) -> Vec<f64> {
        match self.cache.iter().find(|(w, _)| w == label) {
            Some((_, v)) => v.clone(),
            None => hash_embedding(label, self.dim),
        }
    }
}

/// Gaussian draws seeded by the FNV-1a hash of the label, normalized.
fn hash_embedding(label: &str, dim: usize) -> Vec<f64> {
    let mut rng = XorShift64Star::new(fnv1a(label.as_bytes()));
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = libm::sqrt(v.iter().map(|x| x * x).sum());
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `[N, D_clip]` unit rows, one per label.
pub fn embed_labels(labels: &[String], table: &LabelEmbeddingTable) -> Tensor {
    let dim = table.dim();
    let mut data = Vec::with_capacity(labels.len() * dim);
    for l in labels {
        data.extend(table.embed(l));
    }
    Tensor::new(&[labels.len().max(1), dim], data).unwrap_or_else(|_| Tensor::zeros(&[1, dim]))
}

/// Encoder outputs as plain tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedObservation {
    /// `[T_h, D]`
    pub gaze: Tensor,
    /// `[T_h, D]`
    pub head_rot: Tensor,
    /// `[T_h, D]`
    pub head_pos: Tensor,
    /// `[T_h, 2, D]`
    pub hand_pos: Tensor,
    /// `[D]`
    pub global: Tensor,
    /// `[T_h, N, D]`
    pub objects: Tensor,
}

/// Encoder outputs recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct EncodedVars<'t> {
    pub gaze: Var<'t>,
    pub head_rot: Var<'t>,
    pub head_pos: Var<'t>,
    pub hand_pos: Var<'t>,
    pub global: Var<'t>,
    pub objects: Var<'t>,
}

impl EncodedVars<'_> {
    pub fn values(&self) -> EncodedObservation {
        EncodedObservation {
            gaze: self.gaze.value(),
            head_rot: self.head_rot.value(),
            head_pos: self.head_pos.value(),
            hand_pos: self.hand_pos.value(),
            global: self.global.value(),
            objects: self.objects.value(),
        }
    }
}

fn mlp_specs(out: &mut Vec<ParamSpec>, prefix: &str, input: usize, hidden: usize, output: usize) {
    out.push(ParamSpec::new(format!("{prefix}.w0"), &[input, hidden], Init::Uniform { fan_in: input }));
    out.push(ParamSpec::new(format!("{prefix}.b0"), &[hidden], Init::Uniform { fan_in: input }));
    out.push(ParamSpec::new(format!("{prefix}.w1"), &[hidden, output], Init::Uniform { fan_in: hidden }));
    out.push(ParamSpec::new(format!("{prefix}.b1"), &[output], Init::Uniform { fan_in: hidden }));
}

pub(crate) fn push_mlp(out: &mut Vec<ParamSpec>, prefix: &str, input: usize, hidden: usize, output: usize) {
    mlp_specs(out, prefix, input, hidden, output)
}

/// Temporal half of a spatio-temporal layer.
pub(crate) fn push_temporal(out: &mut Vec<ParamSpec>, prefix: &str, t: usize, d: usize) {
    out.push(ParamSpec::new(format!("{prefix}.at"), &[t, t], Init::Identity { noise: 0.01 }));
    out.push(ParamSpec::new(format!("{prefix}.wt"), &[d, d], Init::Uniform { fan_in: d }));
    out.push(ParamSpec::new(format!("{prefix}.bt"), &[d], Init::Uniform { fan_in: d }));
}

pub(crate) fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let (t, d, h) = (cfg.t_h, cfg.d, cfg.hidden);
    let mut s = Vec::new();
    mlp_specs(&mut s, "enc.gaze", 3, h, d);
    mlp_specs(&mut s, "enc.rot", 9, h, d);
    s.push(ParamSpec::new("enc.pos.w".into(), &[3, d], Init::Uniform { fan_in: 3 }));
    s.push(ParamSpec::new("enc.pos.b".into(), &[d], Init::Uniform { fan_in: 3 }));
    for l in 0..cfg.l_e {
        let p = format!("enc.st{l}");
        push_temporal(&mut s, &p, t, d);
        s.push(ParamSpec::new(format!("{p}.as"), &[4, 4], Init::Identity { noise: 0.01 }));
        s.push(ParamSpec::new(format!("{p}.ws"), &[d, d], Init::Uniform { fan_in: d }));
        s.push(ParamSpec::new(format!("{p}.bs"), &[d], Init::Uniform { fan_in: d }));
    }
    mlp_specs(&mut s, "enc.bbox", 24, h, d);
    mlp_specs(&mut s, "enc.center", 3, h, d);
    s.push(ParamSpec::new("enc.sem.w".into(), &[cfg.d_clip, d], Init::Uniform { fan_in: cfg.d_clip }));
    s.push(ParamSpec::new("enc.sem.b".into(), &[d], Init::Uniform { fan_in: cfg.d_clip }));
    s
}

pub(crate) fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    x.matmul(w)?.add_row(b)
}

/// Two-layer perceptron with a tanh hidden layer over the rows of `x`.
pub(crate) fn mlp<'t>(p: &BoundParams<'_, 't>, prefix: &str, x: Var<'t>) -> Result<Var<'t>> {
    let h = linear(x, p.get(&format!("{prefix}.w0"))?, p.get(&format!("{prefix}.b0"))?)?.tanh();
    linear(h, p.get(&format!("{prefix}.w1"))?, p.get(&format!("{prefix}.b1"))?)
}

/// Mean over axis 0 of `[T, ...]`.
pub(crate) fn time_mean<'t>(x: Var<'t>) -> Result<Var<'t>> {
    let shape = x.shape();
    let t = shape[0];
    let rest: Vec<usize> = shape[1..].to_vec();
    let inner: usize = rest.iter().product();
    let avg = x.tape().constant(Tensor::full(&[1, t], 1.0 / t as f64));
    let out = avg.matmul(x.reshape(&[t, inner])?)?;
    if rest.is_empty() {
        out.reshape(&[1])
    } else {
        out.reshape(&rest)
    }
}

/// `Y = tanh(A_T · X · W_t + b_t) + X` for node features `x: [n, T, D]`.
pub(crate) fn temporal_step<'t>(p: &BoundParams<'_, 't>, prefix: &str, x: Var<'t>) -> Result<Var<'t>> {
    let s = x.shape();
    let (n, t, d) = (s[0], s[1], s[2]);
    let mixed = p.get(&format!("{prefix}.at"))?.bmm_left(x)?.reshape(&[n * t, d])?;
    let y = linear(mixed, p.get(&format!("{prefix}.wt"))?, p.get(&format!("{prefix}.bt"))?)?.tanh();
    y.reshape(&[n, t, d])?.add(x)
}

/// `Z = tanh(A · Y · W + b) + Y` with a node adjacency `a: [n, n]`.
pub(crate) fn spatial_step<'t>(a: Var<'t>, y: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let s = y.shape();
    let (n, t, d) = (s[0], s[1], s[2]);
    let mixed = a.matmul(y.reshape(&[n, t * d])?)?.reshape(&[n * t, d])?;
    let z = linear(mixed, w, b)?.tanh();
    z.reshape(&[n, t, d])?.add(y)
}

fn check_obs(obs: &ObservationWindow, cfg: &ModelConfig) -> Result<()> {
    let s = obs.centers.shape();
    if obs.gaze.shape() != [cfg.t_h, 3] || s != [cfg.t_h, cfg.n_objects, 3] || obs.semantic.shape() != [cfg.n_objects, cfg.d_clip]
    {
        return Err(Error::arg(format!(
            "observation (T_h={}, N={}, D_clip={}) does not match model (T_h={}, N={}, D_clip={})",
            obs.gaze.shape()[0],
            s.get(1).copied().unwrap_or(0),
            obs.semantic.shape()[1],
            cfg.t_h,
            cfg.n_objects,
            cfg.d_clip
        )));
    }
    Ok(())
}

/// Positions relative to the last observed head position.
fn relative(t: &Tensor, origin: [f64; 3]) -> Tensor {
    let mut out = t.clone();
    for (k, v) in out.data_mut().iter_mut().enumerate() {
        *v -= origin[k % 3];
    }
    out
}

pub(crate) fn origin(obs: &ObservationWindow) -> [f64; 3] {
    obs.head_pos_at(obs.history() - 1)
}

/// Fused object features `[T_h, N, D]`.
pub fn encode_objects_taped<'t>(
    tape: &'t Tape,
    p: &BoundParams<'_, 't>,
    bbox: &Tensor,
    centers: &Tensor,
    semantic: &Tensor,
    origin: [f64; 3],
) -> Result<Var<'t>> {
    let (t, n) = (centers.shape()[0], centers.shape()[1]);
    if bbox.shape() != [t, n, 8, 3] || semantic.shape()[0] != n {
        return Err(Error::shape(
            "encode_objects",
            format!("bbox {:?}, centers {:?}, semantic {:?}", bbox.shape(), centers.shape(), semantic.shape()),
        ));
    }
    let b = dct_forward(&relative(bbox, origin))?.reshape(&[t * n, 24])?;
    let c = dct_forward(&relative(centers, origin))?.reshape(&[t * n, 3])?;
    let fb = mlp(p, "enc.bbox", tape.constant(b))?;
    let fc = mlp(p, "enc.center", tape.constant(c))?;
    let fs = linear(tape.constant(semantic.clone()), p.get("enc.sem.w")?, p.get("enc.sem.b")?)?;
    let d = fs.shape()[1];
    let fs = fs.repeat0(t)?.reshape(&[t * n, d])?;
    fb.add(fc)?.add(fs)?.reshape(&[t, n, d])
}

/// Plain-tensor form of [`encode_objects_taped`].
pub fn encode_objects(
    bbox: &Tensor,
    centers: &Tensor,
    semantic: &Tensor,
    params: &ModelParams,
    origin: [f64; 3],
) -> Result<Tensor> {
    let tape = Tape::new();
    let p = params.bind_constant(&tape);
    Ok(encode_objects_taped(&tape, &p, bbox, centers, semantic, origin)?.value())
}

pub fn encode_taped<'t>(
    tape: &'t Tape,
    p: &BoundParams<'_, 't>,
    obs: &ObservationWindow,
    cfg: &ModelConfig,
) -> Result<EncodedVars<'t>> {
    check_obs(obs, cfg)?;
    let t = cfg.t_h;
    let d = cfg.d;
    let org = origin(obs);

    let gaze = mlp(p, "enc.gaze", tape.constant(dct_forward(&obs.gaze)?))?;
    let rot = dct_forward(&obs.head_rot.clone().reshape(&[t, 9])?)?;
    let head_rot = mlp(p, "enc.rot", tape.constant(rot))?;

    // nodes [head, left, right] × time × xyz
    let mut nodes = Vec::with_capacity(3 * t * 3);
    let head = relative(&obs.head_pos, org);
    let hands = relative(&obs.hand_pos, org);
    nodes.extend_from_slice(head.data());
    for h in 0..2 {
        for f in 0..t {
            nodes.extend_from_slice(&hands.data()[(f * 2 + h) * 3..(f * 2 + h) * 3 + 3]);
        }
    }
    let nodes = Tensor::new(&[3, t, 3], nodes)?;
    let mut coeffs = Vec::with_capacity(nodes.len());
    for k in 0..3 {
        let series = Tensor::new(&[t, 3], nodes.data()[k * t * 3..(k + 1) * t * 3].to_vec())?;
        coeffs.extend(dct_forward(&series)?.into_data());
    }
    let coeffs = tape.constant(Tensor::new(&[3 * t, 3], coeffs)?);
    let joints = linear(coeffs, p.get("enc.pos.w")?, p.get("enc.pos.b")?)?.reshape(&[3, t * d])?;
    let global = tape.constant(Tensor::full(&[1, 3], 1.0 / 3.0)).matmul(joints)?;
    let mut x = tape.concat(&[joints, global])?.reshape(&[4, t, d])?;
    for l in 0..cfg.l_e {
        let pre = format!("enc.st{l}");
        let y = temporal_step(p, &pre, x)?;
        x = spatial_step(p.get(&format!("{pre}.as"))?, y, p.get(&format!("{pre}.ws"))?, p.get(&format!("{pre}.bs"))?)?;
    }
    let head_pos = x.select0(&[0])?.reshape(&[t, d])?;
    let hand_pos = x.select0(&[1, 2])?.permute(&[1, 0, 2])?;
    let global = time_mean(x.select0(&[3])?.reshape(&[t, d])?)?;

    let objects = encode_objects_taped(tape, p, &obs.bbox, &obs.centers, &obs.semantic, org)?;
    Ok(EncodedVars { gaze, head_rot, head_pos, hand_pos, global, objects })
}

/// Encode one observation window with fixed parameters.
pub fn encode(obs: &ObservationWindow, params: &ModelParams) -> Result<EncodedObservation> {
    let tape = Tape::new();
    let p = params.bind_constant(&tape);
    let enc = encode_taped(&tape, &p, obs, params.config())?;
    tape.ensure_finite()?;
    Ok(enc.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::init_params;
    use crate::testutil::random_window;

    const VOCAB: [&str; 3] = ["kettle", "dish", "can"];

    #[test]
    fn label_embeddings_are_stable_unit_vectors() {
        let table = LabelEmbeddingTable::with_vocabulary(DEFAULT_CLIP_DIM, &VOCAB);
        let a = table.embed("kettle");
        assert_eq!(a, LabelEmbeddingTable::new(DEFAULT_CLIP_DIM).embed("kettle"));
        let n: f64 = a.iter().map(|x| x * x).sum();
        assert!((n.sqrt() - 1.0).abs() < 1e-9);
        let b = table.embed("dish");
        let c = table.embed("can");
        let cos: f64 = b.iter().zip(&c).map(|(x, y)| x * y).sum();
        assert!(cos < 0.99);
    }

    #[test]
    fn encode_shapes_match_full_config() {
        let cfg = ModelConfig::default();
        let params = init_params(&cfg, 3).unwrap();
        let w = random_window(&cfg, 11);
        let e = encode(&w.obs, &params).unwrap();
        assert_eq!(e.gaze.shape(), &[15, 16]);
        assert_eq!(e.head_rot.shape(), &[15, 16]);
        assert_eq!(e.head_pos.shape(), &[15, 16]);
        assert_eq!(e.hand_pos.shape(), &[15, 2, 16]);
        assert_eq!(e.global.shape(), &[16]);
        assert_eq!(e.objects.shape(), &[15, 48, 16]);
    }

    #[test]
    fn zero_weights_give_bias_features() {
        let cfg = ModelConfig::tiny();
        let mut params = init_params(&cfg, 5).unwrap();
        for (name, t) in params.iter_mut() {
            if name.contains(".w") || name.ends_with(".at") || name.ends_with(".as") {
                *t = Tensor::zeros(t.shape());
            }
        }
        let w = random_window(&cfg, 2);
        let e = encode(&w.obs, &params).unwrap();
        let b1 = params.get("enc.gaze.b1").unwrap();
        for row in e.gaze.rows() {
            assert_eq!(row, b1.data());
        }
        assert!(e.objects.is_finite());
    }

    #[test]
    fn mismatched_object_count_is_rejected() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg, 5).unwrap();
        let mut other = cfg.clone();
        other.n_objects += 1;
        let w = random_window(&other, 2);
        assert!(matches!(encode(&w.obs, &params), Err(Error::Argument(_))));
    }
}
