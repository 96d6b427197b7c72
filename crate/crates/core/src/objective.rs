//! Training losses and their weighted sum.

use alloc::format;
use alloc::vec::Vec;

use crate::datamodel::Window;
use crate::decoder::ForwardVars;
use crate::numerics::{Tensor, Var};
use crate::{Error, Result};

/// Probability clamp used by the cross-entropy terms.
pub const PROB_EPS: f64 = 1e-7;

pub const TERM_NAMES: [&str; 7] = ["gaze", "rot", "pos", "center", "vel", "int", "state"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub gaze: f64,
    pub rot: f64,
    pub pos: f64,
    pub center: f64,
    pub vel: f64,
    pub int: f64,
    pub state: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { gaze: 5.0, rot: 5.0, pos: 1.0, center: 10.0, vel: 1.0, int: 1.0, state: 1.0 }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 7] {
        [self.gaze, self.rot, self.pos, self.center, self.vel, self.int, self.state]
    }

    pub fn validate(&self) -> Result<()> {
        match self.as_array().iter().zip(TERM_NAMES).find(|(w, _)| !(**w >= 0.0 && w.is_finite())) {
            Some((w, name)) => Err(Error::Config(format!("loss weight {name} = {w} must be a finite value ≥ 0"))),
            None => Ok(()),
        }
    }
}

/// Scalar loss values, in [`TERM_NAMES`] order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms(pub [f64; 7]);

impl LossTerms {
    pub fn weighted_total(&self, w: &LossWeights) -> Result<f64> {
        let mut total = 0.0;
        for ((v, lambda), name) in self.0.iter().zip(w.as_array()).zip(TERM_NAMES) {
            if !v.is_finite() {
                return Err(Error::NonFinite { op: format!("loss term {name}") });
            }
            total += lambda * v;
        }
        Ok(total)
    }
}

/// Loss terms recorded on a tape. `int` is absent without the intention stage.
#[derive(Clone, Copy, Debug)]
pub struct TermVars<'t> {
    pub gaze: Var<'t>,
    pub rot: Var<'t>,
    pub pos: Var<'t>,
    pub center: Var<'t>,
    pub vel: Var<'t>,
    pub int: Option<Var<'t>>,
    pub state: Var<'t>,
}

impl<'t> TermVars<'t> {
    fn list(&self) -> [Option<Var<'t>>; 7] {
        [Some(self.gaze), Some(self.rot), Some(self.pos), Some(self.center), Some(self.vel), self.int, Some(self.state)]
    }

    pub fn values(&self) -> LossTerms {
        LossTerms(self.list().map(|v| v.map_or(0.0, |v| v.item())))
    }
}

fn same(op: &'static str, a: Var<'_>, b: Var<'_>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean over frames of `1 − cos(ĝ, g)`.
pub fn loss_gaze<'t>(pred: Var<'t>, gt: Var<'t>) -> Result<Var<'t>> {
    same("loss_gaze", pred, gt)?;
    let (np, ng) = (pred.norm_last()?, gt.norm_last()?);
    if np.value().data().iter().chain(ng.value().data()).any(|&n| n == 0.0) {
        return Err(Error::arg("loss_gaze: zero-norm gaze vector"));
    }
    let cos = pred.mul(gt)?.sum_last()?.mul(np.mul(ng)?.recip())?;
    Ok(cos.neg().offset(1.0).mean())
}

/// Mean over frames of the squared Frobenius error.
pub fn loss_rot<'t>(pred: Var<'t>, gt: Var<'t>) -> Result<Var<'t>> {
    same("loss_rot", pred, gt)?;
    let t = pred.shape()[0];
    Ok(pred.sub(gt)?.reshape(&[t, 9])?.square().sum_last()?.mean())
}

/// Mean L2 error over all leading axes of `[.., 3]` points.
pub fn mean_l2<'t>(pred: Var<'t>, gt: Var<'t>) -> Result<Var<'t>> {
    same("mean_l2", pred, gt)?;
    Ok(pred.sub(gt)?.norm_last()?.mean())
}

/// Mean head L2 plus mean hand L2.
pub fn loss_pos<'t>(head: Var<'t>, head_gt: Var<'t>, hands: Var<'t>, hands_gt: Var<'t>) -> Result<Var<'t>> {
    mean_l2(head, head_gt)?.add(mean_l2(hands, hands_gt)?)
}

/// Ground-truth centers `[T, N, 3]` of the given objects as `[T, M, 3]`.
pub fn gather_centers(gt: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let s = gt.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::shape("gather_centers", format!("{s:?}")));
    }
    let (t, n) = (s[0], s[1]);
    let mut seen = alloc::vec![false; n];
    for &i in indices {
        if i >= n || core::mem::replace(&mut seen[i], true) {
            return Err(Error::arg(format!("object index {i} invalid or repeated for {n} objects")));
        }
    }
    let mut out = Vec::with_capacity(t * indices.len() * 3);
    for f in 0..t {
        for &i in indices {
            out.extend_from_slice(&gt.data()[(f * n + i) * 3..(f * n + i + 1) * 3]);
        }
    }
    Tensor::new(&[t, indices.len(), 3], out)
}

/// Mean L2 over the decoded objects against the same objects' ground truth.
pub fn loss_center<'t>(pred: Var<'t>, gt_all: &Tensor, indices: &[usize]) -> Result<Var<'t>> {
    if pred.shape().get(1) != Some(&indices.len()) {
        return Err(Error::arg(format!("{} indices for predicted centers {:?}", indices.len(), pred.shape())));
    }
    let gt = pred.tape().constant(gather_centers(gt_all, indices)?);
    mean_l2(pred, gt)
}

/// Consecutive-frame differences along axis 0.
pub fn velocities(x: Var<'_>) -> Result<Var<'_>> {
    let t = x.shape()[0];
    if t < 2 {
        return Err(Error::arg("velocities need at least two frames"));
    }
    x.slice0(1, t)?.sub(x.slice0(0, t - 1)?)
}

/// Sum over (head, hands, centers) of mean L2 velocity error.
pub fn loss_vel<'t>(pred: [Var<'t>; 3], gt: [Var<'t>; 3]) -> Result<Var<'t>> {
    let mut total: Option<Var<'t>> = None;
    for (p, g) in pred.into_iter().zip(gt) {
        let term = mean_l2(velocities(p)?, velocities(g)?)?;
        total = Some(match total {
            Some(acc) => acc.add(term)?,
            None => term,
        });
    }
    Ok(total.expect("three series"))
}

/// Mean binary cross-entropy with probabilities clamped to `[ε, 1−ε]`.
pub fn loss_bce<'t>(probs: Var<'t>, labels: &[f64]) -> Result<Var<'t>> {
    if probs.len() != labels.len() {
        return Err(Error::shape("loss_bce", format!("{} probabilities, {} labels", probs.len(), labels.len())));
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::arg("labels must be 0 or 1"));
    }
    let tape = probs.tape();
    let shape = probs.shape();
    let y = tape.constant(Tensor::new(&shape, labels.to_vec())?);
    let not_y = tape.constant(Tensor::new(&shape, labels.iter().map(|y| 1.0 - y).collect())?);
    let p = probs.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let ll = y.mul(p.ln())?.add(not_y.mul(p.neg().offset(1.0).ln())?)?;
    Ok(ll.mean().neg())
}

/// Mean binary cross-entropy of `σ(logits)`, as `softplus(z) − y·z`.
/// Matches [`loss_bce`] away from saturation and keeps a gradient of
/// `σ(z) − y` everywhere.
pub fn loss_bce_logits<'t>(logits: Var<'t>, labels: &[f64]) -> Result<Var<'t>> {
    if logits.len() != labels.len() {
        return Err(Error::shape("loss_bce_logits", format!("{} logits, {} labels", logits.len(), labels.len())));
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::arg("labels must be 0 or 1"));
    }
    let y = logits.tape().constant(Tensor::new(&logits.shape(), labels.to_vec())?);
    Ok(logits.softplus().sub(y.mul(logits)?)?.mean())
}

/// Weighted sum of the terms; a non-finite term is named in the error.
pub fn total_loss<'t>(terms: &TermVars<'t>, w: &LossWeights) -> Result<Var<'t>> {
    let mut total: Option<Var<'t>> = None;
    for ((term, lambda), name) in terms.list().into_iter().zip(w.as_array()).zip(TERM_NAMES) {
        let Some(v) = term else { continue };
        if !v.item().is_finite() {
            return Err(Error::NonFinite { op: format!("loss term {name}") });
        }
        let scaled = v.scale(lambda);
        total = Some(match total {
            Some(acc) => acc.add(scaled)?,
            None => scaled,
        });
    }
    Ok(total.expect("at least six terms"))
}

/// All loss terms of one forward pass against its window.
pub fn window_terms<'t>(out: &ForwardVars<'t>, window: &Window) -> Result<TermVars<'t>> {
    let tape = out.gaze.tape();
    let f = &window.future;
    let c = |t: &Tensor| tape.constant(t.clone());
    let gt_centers = c(&gather_centers(&f.object_centers, &out.decoded)?);
    let labels: Vec<f64> = out.decoded.iter().map(|&i| f.interaction[i]).collect();
    Ok(TermVars {
        gaze: loss_gaze(out.gaze, c(&f.gaze))?,
        rot: loss_rot(out.head_rot, c(&f.head_rot))?,
        pos: loss_pos(out.head_pos, c(&f.head_pos), out.hand_pos, c(&f.hand_pos))?,
        center: mean_l2(out.centers, gt_centers)?,
        vel: loss_vel([out.head_pos, out.hand_pos, out.centers], [c(&f.head_pos), c(&f.hand_pos), gt_centers])?,
        int: match &out.intention {
            Some(it) => Some(loss_bce_logits(it.int_logits, &f.interaction)?),
            None => None,
        },
        state: loss_bce_logits(out.state_logits, &labels)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;
    use alloc::vec;

    fn v<'t>(tape: &'t Tape, shape: &[usize], d: &[f64]) -> Var<'t> {
        tape.constant(Tensor::new(shape, d.to_vec()).unwrap())
    }

    #[test]
    fn gaze_loss_closed_forms() {
        let tape = Tape::new();
        let x = v(&tape, &[1, 3], &[1.0, 0.0, 0.0]);
        let y = v(&tape, &[1, 3], &[0.0, 1.0, 0.0]);
        let z = v(&tape, &[1, 3], &[-1.0, 0.0, 0.0]);
        assert_eq!(loss_gaze(x, x).unwrap().item(), 0.0);
        assert_eq!(loss_gaze(x, y).unwrap().item(), 1.0);
        assert_eq!(loss_gaze(x, z).unwrap().item(), 2.0);
        let zero = v(&tape, &[1, 3], &[0.0; 3]);
        assert!(matches!(loss_gaze(x, zero), Err(Error::Argument(_))));
    }

    #[test]
    fn three_four_five() {
        let tape = Tape::new();
        let head = v(&tape, &[2, 3], &[3.0, 4.0, 0.0, 3.0, 4.0, 0.0]);
        let origin = v(&tape, &[2, 3], &[0.0; 6]);
        let hands = v(&tape, &[2, 2, 3], &[0.5; 12]);
        assert_eq!(loss_pos(head, origin, hands, hands).unwrap().item(), 5.0);
        let r = v(&tape, &[1, 3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(loss_rot(r, r).unwrap().item(), 0.0);
        assert_eq!(loss_center(hands, &Tensor::zeros(&[2, 2, 3]), &[1, 0]).unwrap().item(), 0.5 * 3f64.sqrt());
    }

    #[test]
    fn velocity_loss_ramp_and_offset() {
        let tape = Tape::new();
        let t = 4;
        let ramp =
            |slope: f64, off: f64| v(&tape, &[t, 3], &(0..t * 3).map(|k| off + slope * (k / 3) as f64).collect::<Vec<_>>());
        let constant = ramp(0.0, 2.0);
        let shifted = ramp(0.0, -1.0);
        let hands = v(&tape, &[t, 2, 3], &[0.0; 24]);
        let c = v(&tape, &[t, 1, 3], &[0.0; 12]);
        assert_eq!(loss_vel([constant, hands, c], [shifted, hands, c]).unwrap().item(), 0.0);
        // slope 0.1 vs 0.3 per axis: |Δv| = 0.2·√3 on the head only
        let l = loss_vel([ramp(0.1, 0.0), hands, c], [ramp(0.3, 0.0), hands, c]).unwrap().item();
        assert!((l - 0.2 * 3f64.sqrt()).abs() < 1e-12);
        let one = v(&tape, &[1, 3], &[0.0; 3]);
        assert!(velocities(one).is_err());
    }

    #[test]
    fn bce_values() {
        let tape = Tape::new();
        let half = v(&tape, &[1], &[0.5]);
        assert!((loss_bce(half, &[1.0]).unwrap().item() - core::f64::consts::LN_2).abs() < 1e-15);
        let sure = v(&tape, &[1], &[1.0]);
        assert!(loss_bce(sure, &[1.0]).unwrap().item() < 1e-6);
        assert!(matches!(loss_bce(half, &[0.5]), Err(Error::Argument(_))));
    }

    #[test]
    fn bce_logits_matches_and_keeps_gradient() {
        let tape = Tape::new();
        let z = [-3.0, -0.2, 0.0, 1.5, 4.0];
        let y = [1.0, 0.0, 1.0, 1.0, 0.0];
        let a = loss_bce_logits(v(&tape, &[5], &z), &y).unwrap().item();
        let b = loss_bce(v(&tape, &[5], &z).sigmoid(), &y).unwrap().item();
        assert!((a - b).abs() < 1e-12);

        let tape = Tape::new();
        let wrong = tape.param(Tensor::new(&[1], vec![40.0]).unwrap());
        let g = tape.backward(loss_bce_logits(wrong, &[0.0]).unwrap()).unwrap();
        assert!((g.wrt(wrong).data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_terms_total_24_and_linearity() {
        let w = LossWeights::default();
        assert_eq!(LossTerms([1.0; 7]).weighted_total(&w).unwrap(), 24.0);
        assert_eq!(LossTerms([0.0; 7]).weighted_total(&w).unwrap(), 0.0);
        let terms = LossTerms([0.3, 0.1, 0.7, 0.2, 0.05, 0.4, 0.9]);
        let mut w2 = w;
        w2.center *= 2.0;
        let diff = terms.weighted_total(&w2).unwrap() - terms.weighted_total(&w).unwrap();
        assert!((diff - 10.0 * 0.2).abs() < 1e-15);
        let mut bad = terms;
        bad.0[3] = f64::NAN;
        assert_eq!(bad.weighted_total(&w), Err(Error::NonFinite { op: "loss term center".into() }));
    }

    #[test]
    fn taped_total_names_bad_term() {
        let tape = Tape::new();
        let one = tape.scalar(1.0);
        let nan = tape.scalar(f64::NAN);
        let terms = TermVars { gaze: one, rot: one, pos: one, center: one, vel: nan, int: Some(one), state: one };
        let err = total_loss(&terms, &LossWeights::default()).unwrap_err();
        assert_eq!(err, Error::NonFinite { op: "loss term vel".into() });
        let terms = TermVars { vel: one, ..terms };
        assert_eq!(total_loss(&terms, &LossWeights::default()).unwrap().item(), 24.0);
    }

    #[test]
    fn center_gather_walk() {
        let gt = Tensor::from_fn(&[2, 4, 3], |i| i as f64);
        let g = gather_centers(&gt, &[3, 1]).unwrap();
        let mut walk = vec![];
        for f in 0..2 {
            for &i in &[3usize, 1] {
                for c in 0..3 {
                    walk.push(gt.at(&[f, i, c]));
                }
            }
        }
        assert_eq!(g.data(), walk.as_slice());
        assert!(gather_centers(&gt, &[1, 1]).is_err());
        assert!(gather_centers(&gt, &[4]).is_err());
    }
}
