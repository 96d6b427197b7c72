//! Finite-difference check of every loss term and layer, plus the whole
//! model on a tiny configuration.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::decoder::{forward_taped, ModelConfig, ModelParams};
use crate::encoder::{encode_taped, mlp, spatial_step, temporal_step};
use crate::numerics::{grad_check_many, Tape, Tensor, Var, XorShift64Star};
use crate::objective::{self, LossWeights};
use crate::pipeline::{init_params, AblationFlags};
use crate::testutil::random_window;
use crate::{dyngcn, Error, Result};

/// Pass threshold for every component.
pub const GRAD_TOL: f64 = 1e-4;

/// Coordinates probed per input tensor.
const PROBES: usize = 48;

/// Deliberate bugs, for checking that the suite catches them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Negate the gradient flowing out of the gaze loss.
    LossGazeSign,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentResult {
    pub name: &'static str,
    pub max_rel_error: f64,
}

impl ComponentResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_TOL
    }
}

fn random(rng: &mut XorShift64Star, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.range(-1.0, 1.0)).collect()).expect("sized by construction")
}

/// Sum of squares of every value, to reduce a layer output to a scalar.
fn energy<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let mut acc: Option<Var<'t>> = None;
    for p in parts {
        let s = p.square().sum();
        acc = Some(match acc {
            Some(a) => a.add(s)?,
            None => s,
        });
    }
    acc.ok_or_else(|| Error::arg("nothing to reduce"))
}

fn sabotage<'t>(loss: Var<'t>, fault: Option<Fault>) -> Var<'t> {
    match fault {
        Some(Fault::LossGazeSign) => {
            let value = loss.value();
            loss.tape().custom(&[loss], value, alloc::boxed::Box::new(|g, _, _| vec![g.scale(-1.0)]))
        }
        None => loss,
    }
}

fn check<F>(name: &'static str, f: F, points: &[Tensor]) -> Result<ComponentResult>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let report = grad_check_many(f, points, Some(PROBES)).map_err(|e| Error::Evaluation(format!("{name}: {e}")))?;
    Ok(ComponentResult { name, max_rel_error: report.max_rel_error })
}

/// Check a function of the model parameters on one window.
fn check_params<F>(name: &'static str, params: &ModelParams, f: F) -> Result<ComponentResult>
where
    F: for<'t> Fn(&'t Tape, &crate::decoder::BoundParams<'_, 't>) -> Result<Var<'t>>,
{
    check(name, |tape, vars| f(tape, &params.bind_vars(vars.to_vec())?), params.tensors())
}

/// Run every component. Results come back in a fixed order; an error means
/// a component could not be evaluated at all.
pub fn run_gradient_suite(seed: u64, fault: Option<Fault>) -> Result<Vec<ComponentResult>> {
    let mut rng = XorShift64Star::new(seed);
    let (t, n) = (4, 4);
    let mut out = Vec::new();

    let unit_rows = |rng: &mut XorShift64Star, rows: usize| {
        let mut g = random(rng, &[rows, 3]);
        for r in 0..rows {
            let s = libm::sqrt((0..3).map(|c| g.at(&[r, c]) * g.at(&[r, c])).sum::<f64>());
            for c in 0..3 {
                g.set(&[r, c], g.at(&[r, c]) / s);
            }
        }
        g
    };
    let gaze_gt = unit_rows(&mut rng, t);
    out.push(check(
        "loss_gaze",
        |tape, v| Ok(sabotage(objective::loss_gaze(v[0], tape.constant(gaze_gt.clone()))?, fault)),
        &[random(&mut rng, &[t, 3])],
    )?);
    let rot_gt = random(&mut rng, &[t, 3, 3]);
    out.push(check(
        "loss_rot",
        |tape, v| objective::loss_rot(v[0], tape.constant(rot_gt.clone())),
        &[random(&mut rng, &[t, 3, 3])],
    )?);
    let (head_gt, hands_gt) = (random(&mut rng, &[t, 3]), random(&mut rng, &[t, 2, 3]));
    out.push(check(
        "loss_pos",
        |tape, v| objective::loss_pos(v[0], tape.constant(head_gt.clone()), v[1], tape.constant(hands_gt.clone())),
        &[random(&mut rng, &[t, 3]), random(&mut rng, &[t, 2, 3])],
    )?);
    let centers_gt = random(&mut rng, &[t, n, 3]);
    out.push(check("loss_center", |_, v| objective::loss_center(v[0], &centers_gt, &[2, 0]), &[random(&mut rng, &[t, 2, 3])])?);
    let vel_gt = [random(&mut rng, &[t, 3]), random(&mut rng, &[t, 2, 3]), random(&mut rng, &[t, 2, 3])];
    out.push(check(
        "loss_vel",
        |tape, v| {
            let c = |x: &Tensor| tape.constant(x.clone());
            objective::loss_vel([v[0], v[1], v[2]], [c(&vel_gt[0]), c(&vel_gt[1]), c(&vel_gt[2])])
        },
        &[random(&mut rng, &[t, 3]), random(&mut rng, &[t, 2, 3]), random(&mut rng, &[t, 2, 3])],
    )?);
    let labels = [1.0, 0.0, 0.0, 1.0];
    out.push(check("loss_bce", |_, v| objective::loss_bce(v[0].sigmoid(), &labels), &[random(&mut rng, &[n])])?);
    out.push(check("loss_bce_logits", |_, v| objective::loss_bce_logits(v[0], &labels), &[random(&mut rng, &[n])])?);
    let weights = LossWeights::default();
    out.push(check(
        "total_loss",
        |_, v| {
            let terms =
                objective::TermVars { gaze: v[0], rot: v[1], pos: v[2], center: v[3], vel: v[4], int: Some(v[5]), state: v[6] };
            objective::total_loss(&terms, &weights)
        },
        &(0..7).map(|_| random(&mut rng, &[])).collect::<Vec<_>>(),
    )?);

    let cfg = ModelConfig::tiny();
    let params = init_params(&cfg, seed)?;
    let window = random_window(&cfg, seed);
    let obs = &window.obs;

    out.push(check_params("mlp", &params, |tape, p| energy(&[mlp(p, "enc.gaze", tape.constant(obs.gaze.clone()))?]))?);
    let nodes = random(&mut rng, &[4, t, cfg.d]);
    out.push(check_params("temporal_gcn", &params, |tape, p| {
        energy(&[temporal_step(p, "enc.st0", tape.constant(nodes.clone()))?])
    })?);
    out.push(check_params("spatial_gcn", &params, |tape, p| {
        let y = tape.constant(nodes.clone());
        energy(&[spatial_step(p.get("enc.st0.as")?, y, p.get("enc.st0.ws")?, p.get("enc.st0.bs")?)?])
    })?);
    out.push(check_params("encoder", &params, |tape, p| {
        let e = encode_taped(tape, p, obs, &cfg)?;
        energy(&[e.gaze, e.head_rot, e.head_pos, e.hand_pos, e.global, e.objects])
    })?);
    for (name, flags) in
        [("dynamic_gcn", AblationFlags::default()), ("vanilla_gcn", AblationFlags { vanilla_gcn: true, no_hierarchy: false })]
    {
        let cfg = ModelConfig { flags, ..cfg.clone() };
        let params = init_params(&cfg, seed)?;
        out.push(check_params(name, &params, |tape, p| {
            let e = encode_taped(tape, p, obs, &cfg)?;
            let d = dyngcn::dynamic_gcn_forward(tape, p, e.global, e.gaze, e.objects, obs, &cfg)?;
            energy(&[d.global, d.gaze, d.objects])
        })?);
    }
    out.push(check_params("decoder", &params, |tape, p| {
        let f = forward_taped(tape, p, obs, &cfg)?;
        energy(&[f.gaze, f.head_rot, f.head_pos, f.hand_pos, f.centers, f.p_hat])
    })?);

    for (name, flags) in [
        ("full_model", AblationFlags::default()),
        ("full_model_no_hierarchy", AblationFlags { no_hierarchy: true, vanilla_gcn: false }),
    ] {
        let cfg = ModelConfig { flags, ..cfg.clone() };
        let params = init_params(&cfg, seed)?;
        out.push(check_params(name, &params, |tape, p| {
            let f = forward_taped(tape, p, obs, &cfg)?;
            let mut terms = objective::window_terms(&f, &window)?;
            terms.gaze = sabotage(terms.gaze, fault);
            objective::total_loss(&terms, &weights)
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_catches_sign_fault() {
        let clean = run_gradient_suite(3, None).unwrap();
        for c in &clean {
            assert!(c.passed(), "{c:?}");
        }
        let broken = run_gradient_suite(3, Some(Fault::LossGazeSign)).unwrap();
        let failing: Vec<&str> = broken.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
        assert!(failing.contains(&"loss_gaze"), "{failing:?}");
    }
}
