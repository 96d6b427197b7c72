//! Model configuration and parameters, the intention stage with hard top-K
//! selection, and next-state decoding in the DCT domain.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::datamodel::{FutureStates, ObservationWindow};
use crate::dyngcn;
use crate::encoder::{self, mlp, push_mlp, spatial_step, temporal_step, EncodedVars};
use crate::numerics::{dct_forward, dct_matrix, Tape, Tensor, Var};
use crate::pipeline::AblationFlags;
use crate::{Error, Result};

/// Human nodes of the decoder graph: gaze, global, head position, left
/// hand, right hand, head rotation.
pub const HUMAN_NODES: usize = 6;
const NODE_GAZE: usize = 0;
const NODE_HEAD_POS: usize = 2;
const NODE_HANDS: [usize; 2] = [3, 4];
const NODE_HEAD_ROT: usize = 5;
/// Length of the tied decoder adjacency vector.
pub const DECODER_ADJ_LEN: usize = HUMAN_NODES * HUMAN_NODES + 2 * HUMAN_NODES + 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub t_h: usize,
    pub t_f: usize,
    pub n_objects: usize,
    pub top_k: usize,
    pub d: usize,
    pub l_e: usize,
    pub l_i: usize,
    pub l_d: usize,
    pub d_clip: usize,
    /// Hidden width of every two-layer MLP.
    pub hidden: usize,
    pub flags: AblationFlags,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            t_h: 15,
            t_f: 15,
            n_objects: 48,
            top_k: 12,
            d: 16,
            l_e: 4,
            l_i: 4,
            l_d: 16,
            d_clip: encoder::DEFAULT_CLIP_DIM,
            hidden: 32,
            flags: AblationFlags::default(),
        }
    }
}

impl ModelConfig {
    /// Smallest configuration used by gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            t_h: 4,
            t_f: 4,
            n_objects: 4,
            top_k: 2,
            d: 4,
            l_e: 1,
            l_i: 1,
            l_d: 1,
            d_clip: 4,
            hidden: 4,
            flags: AblationFlags::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("t_h", self.t_h),
            ("n_objects", self.n_objects),
            ("top_k", self.top_k),
            ("d", self.d),
            ("d_clip", self.d_clip),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.t_f < 2 {
            return Err(Error::Config(format!("t_f = {} but velocities need at least 2 future frames", self.t_f)));
        }
        if self.top_k > self.n_objects {
            return Err(Error::Config(format!("top_k = {} exceeds n_objects = {}", self.top_k, self.n_objects)));
        }
        Ok(())
    }

    /// Number of objects the decoder sees.
    pub fn decoded_objects(&self) -> usize {
        if self.flags.no_hierarchy {
            self.n_objects
        } else {
            self.top_k
        }
    }
}

/// How a parameter is initialized.
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `±1/√fan_in`.
    Uniform {
        fan_in: usize,
    },
    /// Identity matrix plus uniform noise in `±noise`.
    Identity {
        noise: f64,
    },
    /// Given values plus uniform noise in `±noise`.
    Values {
        base: Vec<f64>,
        noise: f64,
    },
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: String, shape: &[usize], init: Init) -> Self {
        ParamSpec { name, shape: shape.to_vec(), init }
    }
}

/// Every parameter of a configuration, in canonical order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut s = encoder::param_specs(cfg);
    if !cfg.flags.no_hierarchy {
        s.extend(dyngcn::param_specs(cfg));
        push_mlp(&mut s, "int.fp", cfg.d, cfg.hidden, 1);
    }
    let (t, d, h) = (cfg.t_h, cfg.d, cfg.hidden);
    let mut adj_base = vec![0.0; DECODER_ADJ_LEN];
    for i in 0..HUMAN_NODES {
        adj_base[i * HUMAN_NODES + i] = 1.0;
    }
    adj_base[DECODER_ADJ_LEN - 2] = 1.0;
    for l in 0..cfg.l_d {
        let p = format!("dec.l{l}");
        encoder::push_temporal(&mut s, &p, t, d);
        s.push(ParamSpec::new(format!("{p}.adj"), &[DECODER_ADJ_LEN], Init::Values { base: adj_base.clone(), noise: 0.01 }));
        s.push(ParamSpec::new(format!("{p}.ws"), &[d, d], Init::Uniform { fan_in: d }));
        s.push(ParamSpec::new(format!("{p}.bs"), &[d], Init::Uniform { fan_in: d }));
    }
    for (head, c) in HEADS {
        let p = format!("dec.head.{head}");
        s.push(ParamSpec::new(format!("{p}.pt"), &[t + cfg.t_f, t], Init::Uniform { fan_in: t }));
        push_mlp(&mut s, &p, d, h, c);
    }
    push_mlp(&mut s, "dec.state", d, h, 1);
    s
}

const HEADS: [(&str, usize); 5] = [("gaze", 3), ("rot", 9), ("headpos", 3), ("hand", 3), ("center", 3)];

/// Named parameter tensors of one model configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ModelParams {
    /// Build from named tensors; names and shapes must match the
    /// configuration's parameter list exactly.
    pub fn new(config: ModelConfig, entries: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != entries.len() {
            return Err(Error::Config(format!("expected {} parameters, got {}", specs.len(), entries.len())));
        }
        for (spec, (name, t)) in specs.iter().zip(&entries) {
            if spec.name != *name || spec.shape != t.shape() {
                return Err(Error::Config(format!(
                    "parameter {name} {:?} does not match expected {} {:?}",
                    t.shape(),
                    spec.name,
                    spec.shape
                )));
            }
            t.ensure_finite(name)?;
        }
        let (names, tensors): (Vec<String>, Vec<Tensor>) = entries.into_iter().unzip();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(ModelParams { config, names, tensors, index })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Record every tensor as a differentiable leaf.
    pub fn bind<'p, 't>(&'p self, tape: &'t Tape) -> BoundParams<'p, 't> {
        BoundParams { params: self, vars: self.tensors.iter().map(|t| tape.param(t.clone())).collect() }
    }

    /// Record every tensor as a constant (inference).
    pub fn bind_constant<'p, 't>(&'p self, tape: &'t Tape) -> BoundParams<'p, 't> {
        BoundParams { params: self, vars: self.tensors.iter().map(|t| tape.constant(t.clone())).collect() }
    }

    /// Use caller-recorded vars, one per tensor in order, in place of the
    /// stored values.
    pub fn bind_vars<'p, 't>(&'p self, vars: Vec<Var<'t>>) -> Result<BoundParams<'p, 't>> {
        if vars.len() != self.tensors.len() || vars.iter().zip(&self.tensors).any(|(v, t)| v.shape() != t.shape()) {
            return Err(Error::shape("bind_vars", format!("{} vars for {} parameters", vars.len(), self.tensors.len())));
        }
        Ok(BoundParams { params: self, vars })
    }
}

/// Parameters recorded on a tape.
pub struct BoundParams<'p, 't> {
    params: &'p ModelParams,
    vars: Vec<Var<'t>>,
}

impl<'t> BoundParams<'_, 't> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.params.index.get(name).map(|&i| self.vars[i]).ok_or_else(|| Error::MissingParam(name.into()))
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }
}

/// Indices of the `k` largest values, largest first; ties go to the lower index.
pub fn top_k_indices(probs: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > probs.len() {
        return Err(Error::Config(format!("K = {k} exceeds {} objects", probs.len())));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    order.truncate(k);
    Ok(order)
}

/// Intention stage outputs as plain values.
#[derive(Clone, Debug, PartialEq)]
pub struct IntentionOutput {
    pub p_int: Vec<f64>,
    pub top_k: Vec<usize>,
    /// `[T_h, K, D]`
    pub f_k: Tensor,
    /// `[D]`
    pub h_global: Tensor,
    /// `[T_h, D]`
    pub h_gaze: Tensor,
    /// `[T_h, N, D]`
    pub h_obj: Tensor,
}

#[derive(Clone, Debug)]
pub struct IntentionVars<'t> {
    /// `[N]`
    pub p_int: Var<'t>,
    /// `[N]`, pre-sigmoid
    pub int_logits: Var<'t>,
    pub top_k: Vec<usize>,
    pub f_k: Var<'t>,
    pub h_global: Var<'t>,
    pub h_gaze: Var<'t>,
    pub h_obj: Var<'t>,
}

impl IntentionVars<'_> {
    pub fn values(&self) -> IntentionOutput {
        IntentionOutput {
            p_int: self.p_int.value().into_data(),
            top_k: self.top_k.clone(),
            f_k: self.f_k.value(),
            h_global: self.h_global.value(),
            h_gaze: self.h_gaze.value(),
            h_obj: self.h_obj.value(),
        }
    }
}

pub fn predict_intention<'t>(
    tape: &'t Tape,
    p: &BoundParams<'_, 't>,
    enc: &EncodedVars<'t>,
    obs: &ObservationWindow,
    cfg: &ModelConfig,
) -> Result<IntentionVars<'t>> {
    cfg.validate()?;
    let out = dyngcn::dynamic_gcn_forward(tape, p, enc.global, enc.gaze, enc.objects, obs, cfg)?;
    let pooled = encoder::time_mean(out.objects)?;
    let int_logits = mlp(p, "int.fp", pooled)?.reshape(&[cfg.n_objects])?;
    let p_int = int_logits.sigmoid();
    let top_k = top_k_indices(p_int.value().data(), cfg.top_k)?;
    let f_k = out.objects.permute(&[1, 0, 2])?.select0(&top_k)?.permute(&[1, 0, 2])?;
    Ok(IntentionVars { p_int, int_logits, top_k, f_k, h_global: out.global, h_gaze: out.gaze, h_obj: out.objects })
}

/// Flat gather index and scale mask for the tied decoder adjacency over
/// `6 + m` nodes. Aggregation over objects is averaged.
fn decoder_adjacency_layout(m: usize) -> (Vec<usize>, Tensor) {
    let n = HUMAN_NODES + m;
    let h = HUMAN_NODES;
    let mut index = Vec::with_capacity(n * n);
    let mut scale = Tensor::full(&[n, n], 1.0);
    for i in 0..n {
        for j in 0..n {
            let slot = match (i < h, j < h) {
                (true, true) => i * h + j,
                (true, false) => h * h + i,
                (false, true) => h * h + h + j,
                (false, false) if i == j => h * h + 2 * h,
                (false, false) => h * h + 2 * h + 1,
            };
            index.push(slot);
            let averaged = (i < h && j >= h) || (i >= h && j >= h && i != j);
            if averaged {
                scale.data_mut()[i * n + j] = 1.0 / m as f64;
            }
        }
    }
    (index, scale)
}

fn decoder_adjacency<'t>(tied: Var<'t>, m: usize) -> Result<Var<'t>> {
    let n = HUMAN_NODES + m;
    let (index, scale) = decoder_adjacency_layout(m);
    tied.gather(index, &[n, n])?.mul(tied.tape().constant(scale))
}

/// History `[r, T_h, C]` padded with its last frame and DCT'd to `[r, T_h+T_f, C]`.
fn padded_coefficients(hist: &Tensor, t_f: usize) -> Result<Tensor> {
    let s = hist.shape();
    let (r, t, c) = (s[0], s[1], s[2]);
    let tt = t + t_f;
    let mut out = Vec::with_capacity(r * tt * c);
    for k in 0..r {
        let rows = &hist.data()[k * t * c..(k + 1) * t * c];
        let last = &rows[(t - 1) * c..];
        let mut padded = rows.to_vec();
        for _ in 0..t_f {
            padded.extend_from_slice(last);
        }
        out.extend(dct_forward(&Tensor::new(&[tt, c], padded)?)?.into_data());
    }
    Tensor::new(&[r, tt, c], out)
}

/// Inverse-DCT rows that produce the last `t_f` frames, `[T_f, T_h+T_f]`.
fn idct_tail(t_h: usize, t_f: usize) -> Tensor {
    let tt = t_h + t_f;
    let b = dct_matrix(tt);
    Tensor::from_fn(&[t_f, tt], |i| {
        let (row, k) = (i / tt, i % tt);
        b.data()[k * tt + t_h + row]
    })
}

/// One prediction head: temporal projection, MLP to residual
/// coefficients, base plus residual, inverse DCT tail. `[r, T_f, C]`.
fn decode_head<'t>(p: &BoundParams<'_, 't>, head: &str, x: Var<'t>, hist: &Tensor, t_f: usize) -> Result<Var<'t>> {
    let tape = x.tape();
    let s = x.shape();
    let (r, t, d) = (s[0], s[1], s[2]);
    let c = hist.shape()[2];
    let tt = t + t_f;
    let prefix = format!("dec.head.{head}");
    let z = p.get(&format!("{prefix}.pt"))?.bmm_left(x)?.reshape(&[r * tt, d])?;
    let residual = mlp(p, &prefix, z)?.reshape(&[r, tt, c])?;
    let coeffs = tape.constant(padded_coefficients(hist, t_f)?).add(residual)?;
    tape.constant(idct_tail(t, t_f)).bmm_left(coeffs)
}

/// Future trajectories and interaction estimates recorded on a tape.
#[derive(Clone, Debug)]
pub struct ForwardVars<'t> {
    pub intention: Option<IntentionVars<'t>>,
    /// `[T_f, 3]`, unit rows
    pub gaze: Var<'t>,
    /// `[T_f, 3, 3]`
    pub head_rot: Var<'t>,
    /// `[T_f, 3]`
    pub head_pos: Var<'t>,
    /// `[T_f, 2, 3]`
    pub hand_pos: Var<'t>,
    /// `[T_f, M, 3]` for the decoded objects
    pub centers: Var<'t>,
    /// `[M]`
    pub p_hat: Var<'t>,
    /// `[M]`, pre-sigmoid
    pub state_logits: Var<'t>,
    /// Object indices the decoder saw, in node order.
    pub decoded: Vec<usize>,
}

fn gather_objects(t: &Tensor, objects: &[usize]) -> Result<Tensor> {
    // [T, N, C] → [M, T, C]
    let s = t.shape();
    let (tt, n, c) = (s[0], s[1], s[2]);
    let mut out = Vec::with_capacity(objects.len() * tt * c);
    for &i in objects {
        for f in 0..tt {
            out.extend_from_slice(&t.data()[(f * n + i) * c..(f * n + i + 1) * c]);
        }
    }
    Tensor::new(&[objects.len(), tt, c], out)
}

/// Decode next states from the human features and `objects: [T_h, M, D]`.
/// The last output holds the interaction logits.
#[allow(clippy::too_many_arguments)]
pub fn decode_next_states<'t>(
    tape: &'t Tape,
    p: &BoundParams<'_, 't>,
    enc: &EncodedVars<'t>,
    h_global: Var<'t>,
    h_gaze: Var<'t>,
    objects: Var<'t>,
    decoded: &[usize],
    obs: &ObservationWindow,
    cfg: &ModelConfig,
) -> Result<(Var<'t>, Var<'t>, Var<'t>, Var<'t>, Var<'t>, Var<'t>)> {
    let (t, d, t_f) = (cfg.t_h, cfg.d, cfg.t_f);
    let m = decoded.len();
    let node = |v: Var<'t>| v.reshape(&[1, t, d]);
    let mut x = tape.concat(&[
        node(h_gaze)?,
        node(h_global.repeat0(t)?)?,
        node(enc.head_pos)?,
        enc.hand_pos.permute(&[1, 0, 2])?,
        node(enc.head_rot)?,
        objects.permute(&[1, 0, 2])?,
    ])?;
    for l in 0..cfg.l_d {
        let pre = format!("dec.l{l}");
        let y = temporal_step(p, &pre, x)?;
        let a = decoder_adjacency(p.get(&format!("{pre}.adj"))?, m)?;
        x = spatial_step(a, y, p.get(&format!("{pre}.ws"))?, p.get(&format!("{pre}.bs"))?)?;
    }

    let one = |tensor: &Tensor, c: usize| tensor.clone().reshape(&[1, t, c]);
    let gaze = decode_head(p, "gaze", x.select0(&[NODE_GAZE])?, &one(&obs.gaze, 3)?, t_f)?.reshape(&[t_f, 3])?;
    let gaze = gaze.mul_col(gaze.norm_last()?.recip())?;
    let head_rot = decode_head(p, "rot", x.select0(&[NODE_HEAD_ROT])?, &one(&obs.head_rot, 9)?, t_f)?.reshape(&[t_f, 3, 3])?;
    let head_pos = decode_head(p, "headpos", x.select0(&[NODE_HEAD_POS])?, &one(&obs.head_pos, 3)?, t_f)?.reshape(&[t_f, 3])?;
    let hand_hist = gather_objects(&obs.hand_pos, &[0, 1])?;
    let hand_pos = decode_head(p, "hand", x.select0(&NODE_HANDS)?, &hand_hist, t_f)?.permute(&[1, 0, 2])?;
    let obj_nodes = x.slice0(HUMAN_NODES, HUMAN_NODES + m)?;
    let center_hist = gather_objects(&obs.centers, decoded)?;
    let centers = decode_head(p, "center", obj_nodes, &center_hist, t_f)?.permute(&[1, 0, 2])?;
    let pooled = encoder::time_mean(obj_nodes.permute(&[1, 0, 2])?)?;
    let state_logits = mlp(p, "dec.state", pooled)?.reshape(&[m])?;
    Ok((gaze, head_rot, head_pos, hand_pos, centers, state_logits))
}

/// Encoder → intention → decoder on one tape.
pub fn forward_taped<'t>(
    tape: &'t Tape,
    p: &BoundParams<'_, 't>,
    obs: &ObservationWindow,
    cfg: &ModelConfig,
) -> Result<ForwardVars<'t>> {
    cfg.validate()?;
    let enc = encoder::encode_taped(tape, p, obs, cfg)?;
    let (intention, global, gaze, objects, decoded) = if cfg.flags.no_hierarchy {
        (None, enc.global, enc.gaze, enc.objects, (0..cfg.n_objects).collect::<Vec<_>>())
    } else {
        let it = predict_intention(tape, p, &enc, obs, cfg)?;
        let parts = (it.h_global, it.h_gaze, it.f_k, it.top_k.clone());
        (Some(it), parts.0, parts.1, parts.2, parts.3)
    };
    let (gaze, head_rot, head_pos, hand_pos, centers, state_logits) =
        decode_next_states(tape, p, &enc, global, gaze, objects, &decoded, obs, cfg)?;
    let p_hat = state_logits.sigmoid();
    Ok(ForwardVars { intention, gaze, head_rot, head_pos, hand_pos, centers, p_hat, state_logits, decoded })
}

/// Model output for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Future states; object centers and interaction cover the `K` reported objects.
    pub future: FutureStates,
    /// Observation object index of each reported object.
    pub indices: Vec<usize>,
    /// One score per observed object; unreported objects score 0.
    pub object_scores: Vec<f64>,
}

impl ForwardVars<'_> {
    pub fn to_prediction(&self, cfg: &ModelConfig) -> Result<Prediction> {
        let p_hat = self.p_hat.value().into_data();
        let centers = self.centers.value();
        let (t_f, m) = (centers.shape()[0], centers.shape()[1]);
        // rank among decoded objects; identity order when the decoder saw exactly K
        let local: Vec<usize> = if m == cfg.top_k { (0..m).collect() } else { top_k_indices(&p_hat, cfg.top_k)? };
        let mut sel = Vec::with_capacity(t_f * local.len() * 3);
        for f in 0..t_f {
            for &j in &local {
                sel.extend_from_slice(&centers.data()[(f * m + j) * 3..(f * m + j + 1) * 3]);
            }
        }
        let mut object_scores = vec![0.0; cfg.n_objects];
        for (j, &obj) in self.decoded.iter().enumerate() {
            object_scores[obj] = p_hat[j];
        }
        Ok(Prediction {
            future: FutureStates {
                gaze: self.gaze.value(),
                head_rot: self.head_rot.value(),
                head_pos: self.head_pos.value(),
                hand_pos: self.hand_pos.value(),
                object_centers: Tensor::new(&[t_f, local.len(), 3], sel)?,
                interaction: local.iter().map(|&j| p_hat[j]).collect(),
            },
            indices: local.iter().map(|&j| self.decoded[j]).collect(),
            object_scores,
        })
    }
}

/// Deterministic inference on one window.
pub fn forward(obs: &ObservationWindow, params: &ModelParams) -> Result<(Option<IntentionOutput>, Prediction)> {
    let tape = Tape::new();
    let p = params.bind_constant(&tape);
    let out = forward_taped(&tape, &p, obs, params.config())?;
    tape.ensure_finite()?;
    Ok((out.intention.as_ref().map(IntentionVars::values), out.to_prediction(params.config())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::init_params;
    use crate::testutil::random_window;

    #[test]
    fn top_k_order_and_ties() {
        assert_eq!(top_k_indices(&[0.9, 0.1, 0.5, 0.7], 2).unwrap(), vec![0, 3]);
        assert_eq!(top_k_indices(&[0.5, 0.5, 0.1], 2).unwrap(), vec![0, 1]);
        assert!(matches!(top_k_indices(&[0.5], 2), Err(Error::Config(_))));
    }

    #[test]
    fn tied_adjacency_layout() {
        let (index, scale) = decoder_adjacency_layout(3);
        let n = 9;
        assert_eq!(index[0], 0);
        assert_eq!(index[2 * n + 7], 36 + 2);
        assert_eq!(index[7 * n + 4], 42 + 4);
        assert_eq!(index[7 * n + 7], 48);
        assert_eq!(index[7 * n + 8], 49);
        assert_eq!(scale.at(&[7, 8]), 1.0 / 3.0);
        assert_eq!(scale.at(&[7, 2]), 1.0);
        assert_eq!(scale.at(&[2, 7]), 1.0 / 3.0);
    }

    #[test]
    fn full_config_shapes() {
        let cfg = ModelConfig::default();
        let params = init_params(&cfg, 1).unwrap();
        let w = random_window(&cfg, 4);
        let (intent, pred) = forward(&w.obs, &params).unwrap();
        let intent = intent.unwrap();
        assert_eq!(intent.p_int.len(), 48);
        assert!(intent.p_int.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(intent.f_k.shape(), &[15, 12, 16]);
        let f = &pred.future;
        assert_eq!(f.gaze.shape(), &[15, 3]);
        assert_eq!(f.head_rot.shape(), &[15, 3, 3]);
        assert_eq!(f.head_pos.shape(), &[15, 3]);
        assert_eq!(f.hand_pos.shape(), &[15, 2, 3]);
        assert_eq!(f.object_centers.shape(), &[15, 12, 3]);
        assert_eq!(f.interaction.len(), 12);
        assert_eq!(pred.indices, intent.top_k);
        for row in f.gaze.rows() {
            let n: f64 = row.iter().map(|v| v * v).sum();
            assert!((n.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_heads_replicate_last_frame() {
        let cfg = ModelConfig::tiny();
        let mut params = init_params(&cfg, 9).unwrap();
        for (name, t) in params.iter_mut() {
            if name.starts_with("dec.head.") && (name.ends_with(".w1") || name.ends_with(".b1")) {
                *t = Tensor::zeros(t.shape());
            }
        }
        let w = random_window(&cfg, 6);
        let (_, pred) = forward(&w.obs, &params).unwrap();
        let last = cfg.t_h - 1;
        for f in 0..cfg.t_f {
            for c in 0..3 {
                assert!((pred.future.head_pos.at(&[f, c]) - w.obs.head_pos.at(&[last, c])).abs() < 1e-12);
                assert!((pred.future.gaze.at(&[f, c]) - w.obs.gaze.at(&[last, c])).abs() < 1e-12);
                assert!((pred.future.hand_pos.at(&[f, 1, c]) - w.obs.hand_pos.at(&[last, 1, c])).abs() < 1e-12);
                for (k, &obj) in pred.indices.iter().enumerate() {
                    assert!((pred.future.object_centers.at(&[f, k, c]) - w.obs.centers.at(&[last, obj, c])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn no_hierarchy_reports_top_k_of_all_objects() {
        let mut cfg = ModelConfig::tiny();
        cfg.flags.no_hierarchy = true;
        let params = init_params(&cfg, 2).unwrap();
        assert!(params.names().iter().all(|n| !n.starts_with("dgcn.") && !n.starts_with("int.")));
        let w = random_window(&cfg, 3);
        let (intent, pred) = forward(&w.obs, &params).unwrap();
        assert!(intent.is_none());
        assert_eq!(pred.indices.len(), cfg.top_k);
        assert!(pred.object_scores.iter().all(|&s| s > 0.0));
        assert_eq!(pred.indices, top_k_indices(&pred.object_scores, cfg.top_k).unwrap());
    }
}
