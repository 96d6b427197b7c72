//! Initialization, the training loop, evaluation and the ablation suite.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::datamodel::{make_hard_split, Window};
use crate::decoder::{forward, forward_taped, param_specs, Init, ModelConfig, ModelParams};
use crate::evalkit::{baseline_constant_velocity, baseline_gaze_ranking, MetricsAccumulator, MetricsReport};
use crate::numerics::rng::{splitmix64, XorShift64Star};
use crate::numerics::{AdamConfig, AdamState, Tape, Tensor};
use crate::objective::{total_loss, window_terms, LossTerms, LossWeights};
use crate::{Error, Result};

/// Architecture switches for the ablation study.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AblationFlags {
    /// Drop the intention stage and dynamic GCN; decode all objects directly.
    pub no_hierarchy: bool,
    /// Replace the dynamic adjacency by a learnable all-ones matrix.
    pub vanilla_gcn: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub decay: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub model: ModelConfig,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            lr: 0.01,
            decay: 0.95,
            seed: 0,
            weights: LossWeights::default(),
            model: ModelConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        if !(self.lr > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "need lr > 0, 0 < decay ≤ 1, batch ≥ 1 (got {}, {}, {})",
                self.lr, self.decay, self.batch_size
            )));
        }
        Ok(())
    }

    /// Learning rate of a zero-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * libm::pow(self.decay, epoch as f64)
    }
}

/// Seeded initialization following each parameter's [`Init`] rule.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = XorShift64Star::new(seed);
    let mut entries = Vec::new();
    for spec in param_specs(cfg) {
        let n: usize = spec.shape.iter().product();
        let data: Vec<f64> = match &spec.init {
            Init::Uniform { fan_in } => {
                let b = 1.0 / libm::sqrt(*fan_in as f64);
                (0..n).map(|_| rng.range(-b, b)).collect()
            }
            Init::Identity { noise } => {
                let side = spec.shape[0];
                (0..n).map(|k| if k / side == k % side { 1.0 } else { 0.0 } + rng.range(-noise, *noise)).collect()
            }
            Init::Values { base, noise } => base.iter().map(|b| b + rng.range(-noise, *noise)).collect(),
            Init::Constant(c) => alloc::vec![*c; n],
        };
        entries.push((spec.name, Tensor::new(&spec.shape, data)?));
    }
    ModelParams::new(cfg.clone(), entries)
}

/// Mean losses of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f64,
    pub terms: LossTerms,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochReport>,
}

/// Loss and parameter gradients of one window.
pub fn window_gradients(params: &ModelParams, window: &Window, weights: &LossWeights) -> Result<(f64, LossTerms, Vec<Tensor>)> {
    let tape = Tape::new();
    let p = params.bind(&tape);
    let out = forward_taped(&tape, &p, &window.obs, params.config())?;
    let terms = window_terms(&out, window)?;
    let total = total_loss(&terms, weights)?;
    let grads = tape.backward(total)?;
    Ok((total.item(), terms.values(), p.vars().iter().map(|v| grads.wrt(*v)).collect()))
}

/// Deterministic minibatch Adam training.
///
/// The window order is reshuffled every epoch from the seed. `on_epoch`
/// runs after each epoch and may abort training by returning an error.
pub fn train<F>(windows: &[Window], cfg: &TrainConfig, init: Option<ModelParams>, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochReport, &ModelParams) -> Result<()>,
{
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::arg("training needs at least one window"));
    }
    let mut params = match init {
        Some(p) if *p.config() == cfg.model => p,
        Some(p) => return Err(Error::Config(format!("initial parameters are for {:?}", p.config()))),
        None => init_params(&cfg.model, cfg.seed)?,
    };
    let mut adam = AdamState::new(params.tensors(), cfg.adam);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut order: Vec<usize> = (0..windows.len()).collect();
        let mut rng = XorShift64Star::new(splitmix64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9)));
        for i in (1..order.len()).rev() {
            order.swap(i, rng.below(i + 1));
        }
        let mut sums = [0.0; 7];
        let mut total = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let diverged = |detail: String| Error::Diverged { epoch, batch, detail };
            let mut acc: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
            for &i in chunk {
                let (loss, terms, grads) = match window_gradients(&params, &windows[i], &cfg.weights) {
                    Ok(r) => r,
                    Err(Error::NonFinite { op }) => return Err(diverged(format!("window {i}: non-finite {op}"))),
                    Err(e) => return Err(e),
                };
                if !loss.is_finite() {
                    return Err(diverged(format!("window {i}: loss {loss}")));
                }
                total += loss;
                for (s, v) in sums.iter_mut().zip(terms.0) {
                    *s += v;
                }
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.add_assign(g);
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            let acc: Vec<Tensor> = acc.iter().map(|a| a.scale(scale)).collect();
            if acc.iter().any(|a| !a.is_finite()) {
                return Err(diverged("non-finite gradient".into()));
            }
            adam.step(params.tensors_mut(), &acc, lr)?;
        }
        let n = windows.len() as f64;
        let report = EpochReport { epoch, lr, terms: LossTerms(sums.map(|s| s / n)), total: total / n };
        on_epoch(&report, &params)?;
        history.push(report);
    }
    Ok(TrainOutcome { params, history })
}

/// Metrics of the model over `windows`.
pub fn evaluate(params: &ModelParams, windows: &[Window]) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::new();
    for w in windows {
        let (_, pred) = forward(&w.obs, params)?;
        acc.add(&pred, w)?;
    }
    acc.finish()
}

/// Constant-velocity metrics and gaze-ranking metrics (AP only meaningful).
pub fn evaluate_baselines(windows: &[Window], t_f: usize) -> Result<(MetricsReport, MetricsReport)> {
    let mut cv = MetricsAccumulator::new();
    let mut gaze = MetricsAccumulator::new();
    for w in windows {
        cv.add(&baseline_constant_velocity(&w.obs, t_f)?, w)?;
        gaze.add_scores(&baseline_gaze_ranking(&w.obs)?, &w.future.interaction)?;
    }
    Ok((cv.finish()?, gaze.finish()?))
}

/// One ablation configuration evaluated on the full and hard test sets.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub all: MetricsReport,
    pub hard: MetricsReport,
}

impl AblationRow {
    pub const COLUMNS: [&'static str; 8] =
        ["Hand", "Head Dist", "Head Dir", "Gaze", "Object Center", "Object AP", "Hard Center", "Hard AP"];

    pub fn columns(&self) -> [Option<f64>; 8] {
        let a = &self.all;
        [
            Some(a.hand_mm),
            Some(a.head_dist_mm),
            Some(a.head_dir_deg),
            Some(a.gaze_deg),
            Some(a.object_center_mm),
            a.object_ap,
            Some(self.hard.object_center_mm),
            self.hard.object_ap,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KSweepRow {
    pub k: usize,
    pub hand_mm: f64,
    pub object_center_mm: f64,
    pub object_ap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationSuite {
    pub rows: Vec<AblationRow>,
    pub k_sweep: Vec<KSweepRow>,
}

/// Options for [`run_ablation_suite`].
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOptions {
    pub k_values: Vec<usize>,
    /// Epochs for the K-sweep runs; `None` uses the base config.
    pub k_epochs: Option<usize>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { k_values: alloc::vec![4, 8, 12, 16], k_epochs: None }
    }
}

pub const ABLATIONS: [(&str, AblationFlags); 3] = [
    ("full", AblationFlags { no_hierarchy: false, vanilla_gcn: false }),
    ("no_hierarchy", AblationFlags { no_hierarchy: true, vanilla_gcn: false }),
    ("vanilla_gcn", AblationFlags { no_hierarchy: false, vanilla_gcn: true }),
];

/// Train and evaluate the three architectures and the K-sweep. A K-sweep
/// entry equal to the base K reuses the full run when epochs agree.
pub fn run_ablation_suite<P>(
    train_windows: &[Window],
    test_windows: &[Window],
    base: &TrainConfig,
    opts: &SuiteOptions,
    mut progress: P,
) -> Result<AblationSuite>
where
    P: FnMut(&str, &EpochReport),
{
    let hard = make_hard_split(test_windows);
    let mut rows = Vec::new();
    let mut full_params = None;
    for (name, flags) in ABLATIONS {
        let mut cfg = base.clone();
        cfg.model.flags = flags;
        let out = train(train_windows, &cfg, None, |r, _| {
            progress(name, r);
            Ok(())
        })?;
        let all = evaluate(&out.params, test_windows)?;
        let hard_report = if hard.is_empty() { all_empty_report() } else { evaluate(&out.params, &hard)? };
        rows.push(AblationRow { name: name.into(), all, hard: hard_report });
        if name == "full" {
            full_params = Some(out.params);
        }
    }
    let mut k_sweep = Vec::new();
    for &k in &opts.k_values {
        let mut cfg = base.clone();
        cfg.model.flags = AblationFlags::default();
        cfg.model.top_k = k;
        if let Some(e) = opts.k_epochs {
            cfg.epochs = e;
        }
        let params = match &full_params {
            Some(p) if *p.config() == cfg.model && cfg.epochs == base.epochs => p.clone(),
            _ => {
                let label = format!("k={k}");
                train(train_windows, &cfg, None, |r, _| {
                    progress(&label, r);
                    Ok(())
                })?
                .params
            }
        };
        let m = evaluate(&params, test_windows)?;
        k_sweep.push(KSweepRow { k, hand_mm: m.hand_mm, object_center_mm: m.object_center_mm, object_ap: m.object_ap });
    }
    Ok(AblationSuite { rows, k_sweep })
}

fn all_empty_report() -> MetricsReport {
    MetricsReport {
        hand_mm: 0.0,
        head_dist_mm: 0.0,
        head_dir_deg: 0.0,
        gaze_deg: 0.0,
        object_center_mm: 0.0,
        object_ap: None,
        windows: 0,
    }
}
