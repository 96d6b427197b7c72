//! Deterministic synthetic sessions: a person walks between tables, looks
//! at an object, reaches for it, carries it to a free spot and returns the
//! hand. Gaze reaches each target a fixed number of frames before the hand.
//!
//! All randomness comes from one xorshift64* stream seeded by the config.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::datamodel::{Frame, SessionFile, SessionHeader};
use crate::encoder::DEFAULT_CLIP_DIM;
use crate::numerics::linalg::{self, Mat3, Vec3};
use crate::numerics::rng::splitmix64;
use crate::numerics::XorShift64Star;
use crate::{Error, Result};

/// Object labels.
pub const VOCABULARY: [&str; 32] = [
    "cup", "mug", "plate", "dish", "bowl", "kettle", "can", "bottle", "jar", "spoon", "fork", "knife", "pan", "pot", "book",
    "lamp", "vase", "remote", "phone", "box", "basket", "towel", "sponge", "glass", "teapot", "board", "cushion", "candle",
    "clock", "keys", "wallet", "apple",
];

pub const SESSION_VERSION: u8 = 1;

const TABLES: usize = 4;
const GRID: [usize; 2] = [6, 3];
const CELL: f64 = 0.18;
const HEAD_HEIGHT: f64 = 1.6;
const STAND_OFFSET: f64 = 0.2;
const WALK_SPEED: f64 = 0.9;
const TURN_RIM_SPEED: f64 = 0.5;
const REACH_SPEED: f64 = 1.2;
const CARRY_SPEED: f64 = 1.0;
const CARRY_LIFT: f64 = 0.2;
const REACH_LIFT: f64 = 0.1;
const SACCADE: usize = 3;
const REST: Vec3 = [0.15, 0.2, -0.65];
/// Peak speed of a minimum-jerk segment is this factor times mean speed.
const MIN_JERK_PEAK: f64 = 1.875;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub seed: u64,
    pub n_objects: usize,
    /// Floor extents `[x, y]` in meters, centered on the origin.
    pub room: [f64; 2],
    pub episodes: usize,
    /// Frames between the gaze reaching a target and the hand reaching it.
    pub gaze_lag: usize,
    pub gaze_noise_deg: f64,
    /// Standard deviation of head and hand position noise, meters.
    pub position_noise: f64,
    pub frame_rate_hz: f64,
    pub d_clip: usize,
    pub max_hand_speed: f64,
    pub grasp_radius: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 0,
            n_objects: 48,
            room: [4.0, 4.0],
            episodes: 3,
            gaze_lag: 5,
            gaze_noise_deg: 1.0,
            position_noise: 0.002,
            frame_rate_hz: 30.0,
            d_clip: DEFAULT_CLIP_DIM,
            max_hand_speed: 2.0,
            grasp_radius: 0.08,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.room.iter().all(|r| r.is_finite() && *r >= 3.0) {
            return Err(Error::arg(format!("room extents {:?} too small (need ≥ 3 m each)", self.room)));
        }
        let capacity = TABLES * (GRID[0] * GRID[1] - 2);
        if self.n_objects == 0 || self.n_objects > capacity {
            return Err(Error::arg(format!("n_objects must be in 1..={capacity}")));
        }
        if self.episodes == 0 || self.gaze_lag > 8 || self.d_clip == 0 {
            return Err(Error::arg("need episodes ≥ 1, gaze_lag ≤ 8, d_clip ≥ 1"));
        }
        for (name, v) in [("gaze_noise_deg", self.gaze_noise_deg), ("position_noise", self.position_noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::arg(format!("{name} must be ≥ 0")));
            }
        }
        if !(self.frame_rate_hz > 0.0) || !(self.grasp_radius > 0.0) || !(self.max_hand_speed > REACH_SPEED) {
            return Err(Error::arg("frame rate, grasp radius and hand speed cap must be positive"));
        }
        Ok(())
    }

    /// Also require at least `k` objects for top-K selection.
    pub fn validate_for(&self, k: usize) -> Result<()> {
        self.validate()?;
        if self.n_objects < k {
            return Err(Error::Config(format!("{} objects cannot feed top-{k} selection", self.n_objects)));
        }
        Ok(())
    }
}

fn min_jerk(tau: f64) -> f64 {
    tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau))
}

fn frames_for(distance: f64, speed: f64, fps: f64, min: usize) -> usize {
    let n = libm::ceil(MIN_JERK_PEAK * distance / speed * fps) as usize;
    n.max(min)
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut a = libm::fmod(a + core::f64::consts::PI, two_pi);
    if a < 0.0 {
        a += two_pi;
    }
    a - core::f64::consts::PI
}

struct Table {
    center: Vec3,
    /// +1 when the standing side is toward +y.
    side: f64,
    /// Occupant of each grid cell.
    cells: Vec<Option<usize>>,
}

impl Table {
    fn cell_pos(&self, c: usize) -> Vec3 {
        let (ix, iy) = (c % GRID[0], c / GRID[0]);
        [
            self.center[0] + (ix as f64 - (GRID[0] - 1) as f64 / 2.0) * CELL,
            self.center[1] + (iy as f64 - (GRID[1] - 1) as f64 / 2.0) * CELL,
            self.center[2],
        ]
    }

    fn stand_point(&self, x: f64) -> Vec3 {
        let half_depth = GRID[1] as f64 * CELL / 2.0;
        [x, self.center[1] + self.side * (half_depth + STAND_OFFSET), HEAD_HEIGHT]
    }
}

struct Object {
    table: usize,
    cell: usize,
    half: Vec3,
    yaw: f64,
}

#[derive(Clone)]
struct TrueFrame {
    head: Vec3,
    yaw: f64,
    hands: [Vec3; 2],
    centers: Vec<Vec3>,
}

#[derive(Clone, Copy)]
enum LookAt {
    Point(Vec3),
    Object(usize),
}

struct Fixation {
    start: usize,
    target: LookAt,
}

fn rest_hand(head: Vec3, yaw: f64, hand: usize) -> Vec3 {
    let side = if hand == 0 { 1.0 } else { -1.0 };
    let r = linalg::rot_z(yaw);
    linalg::add(head, linalg::mat_vec(&r, [REST[0], side * REST[1], REST[2]]))
}

/// Head orientation looking along `dir`; pitch is half the gaze pitch.
fn look_rotation(dir: Vec3) -> Mat3 {
    let yaw = libm::atan2(dir[1], dir[0]);
    let pitch = 0.5 * libm::asin(dir[2].clamp(-1.0, 1.0));
    let f = [libm::cos(pitch) * libm::cos(yaw), libm::cos(pitch) * libm::sin(yaw), libm::sin(pitch)];
    let l = [-libm::sin(yaw), libm::cos(yaw), 0.0];
    let u = linalg::cross(f, l);
    [f[0], l[0], u[0], f[1], l[1], u[1], f[2], l[2], u[2]]
}

struct Sim<'a> {
    cfg: &'a SceneConfig,
    rng: XorShift64Star,
    tables: Vec<Table>,
    objects: Vec<Object>,
    frames: Vec<TrueFrame>,
    fixations: Vec<Fixation>,
}

impl Sim<'_> {
    fn last(&self) -> TrueFrame {
        self.frames.last().expect("simulation starts with one frame").clone()
    }

    fn object_center(&self, i: usize) -> Vec3 {
        let o = &self.objects[i];
        let mut p = self.tables[o.table].cell_pos(o.cell);
        p[2] += o.half[2];
        p
    }

    fn idle(&mut self, n: usize) {
        let f = self.last();
        for _ in 0..n {
            self.frames.push(f.clone());
        }
    }

    fn walk(&mut self, to: Vec3, yaw_to: f64) {
        let start = self.last();
        let dist = linalg::dist(start.head, to);
        let turn = wrap_angle(yaw_to - start.yaw);
        let fps = self.cfg.frame_rate_hz;
        let rim = linalg::norm([REST[0], REST[1], 0.0]);
        let n = frames_for(dist, WALK_SPEED, fps, 20).max(frames_for(libm::fabs(turn) * rim, TURN_RIM_SPEED, fps, 20));
        for k in 1..=n {
            let s = min_jerk(k as f64 / n as f64);
            let head = linalg::lerp(start.head, to, s);
            let yaw = start.yaw + turn * s;
            let mut f = start.clone();
            f.head = head;
            f.yaw = yaw;
            f.hands = [rest_hand(head, yaw, 0), rest_hand(head, yaw, 1)];
            self.frames.push(f);
        }
    }

    /// Move one hand to `to` along an arc, optionally carrying an object.
    /// Returns the number of frames.
    fn move_hand(&mut self, hand: usize, to: Vec3, speed: f64, carry: Option<usize>) -> usize {
        let start = self.last();
        let from = start.hands[hand];
        let (lift, min) = if carry.is_some() { (CARRY_LIFT, 20) } else { (REACH_LIFT, 15) };
        let n = frames_for(linalg::dist(from, to), speed, self.cfg.frame_rate_hz, min);
        for k in 1..=n {
            let tau = k as f64 / n as f64;
            let mut p = linalg::lerp(from, to, min_jerk(tau));
            p[2] += lift * libm::sin(core::f64::consts::PI * min_jerk(tau));
            let mut f = start.clone();
            f.hands[hand] = p;
            if let Some(i) = carry {
                f.centers[i] = p;
            }
            self.frames.push(f);
        }
        n
    }

    fn episode(&mut self, previous: Option<usize>) {
        let n_obj = self.objects.len();
        let target = match previous {
            Some(p) if n_obj > 1 && self.rng.uniform() < 0.5 => {
                let same: Vec<usize> = (0..n_obj).filter(|&i| i != p && self.objects[i].table == self.objects[p].table).collect();
                if same.is_empty() {
                    self.pick_other(Some(p))
                } else {
                    same[self.rng.below(same.len())]
                }
            }
            _ => self.pick_other(previous),
        };
        let walk_start = self.frames.len();
        let table = self.objects[target].table;
        let center = self.object_center(target);
        let stand = self.tables[table].stand_point(center[0]);
        let facing = libm::atan2(center[1] - stand[1], center[0] - stand[0]);

        let first = if n_obj > 1 && self.rng.uniform() < 0.5 {
            LookAt::Object(self.pick_other(Some(target)))
        } else {
            LookAt::Point([stand[0], stand[1], 0.8])
        };
        self.fixations.push(Fixation { start: walk_start, target: first });

        self.walk(stand, facing);
        let body = self.last();
        let d0 = linalg::dist(body.hands[0], center);
        let d1 = linalg::dist(body.hands[1], center);
        let hand = if d0 <= d1 { 0 } else { 1 };
        self.move_hand(hand, center, REACH_SPEED, None);
        let contact = self.frames.len() - 1;
        let lag = self.cfg.gaze_lag;
        let look_start = (contact - lag - SACCADE).max(walk_start + 1);
        self.fixations.push(Fixation { start: look_start, target: LookAt::Object(target) });

        self.idle(4);
        let dest_cell = self.free_cell(table, stand[0]);
        let old_cell = self.objects[target].cell;
        self.tables[table].cells[old_cell] = None;
        self.tables[table].cells[dest_cell] = Some(target);
        self.objects[target].cell = dest_cell;
        let dest = self.object_center(target);
        let carry_start = self.frames.len();
        self.move_hand(hand, dest, CARRY_SPEED, Some(target));
        let placed = self.frames.len() - 1;
        let place_look = (placed - lag - SACCADE).max(carry_start);
        self.fixations.push(Fixation { start: place_look, target: LookAt::Point(dest) });

        self.idle(3);
        let rest = rest_hand(body.head, body.yaw, hand);
        self.move_hand(hand, rest, REACH_SPEED, None);
        let pause = 3 + self.rng.below(8);
        self.idle(pause);
    }

    fn pick_other(&mut self, not: Option<usize>) -> usize {
        let n = self.objects.len();
        loop {
            let i = self.rng.below(n);
            if Some(i) != not || n == 1 {
                return i;
            }
        }
    }

    /// A free cell within reach of a person standing at `x`.
    fn free_cell(&mut self, table: usize, x: f64) -> usize {
        let t = &self.tables[table];
        let free: Vec<usize> =
            (0..t.cells.len()).filter(|&c| t.cells[c].is_none() && libm::fabs(t.cell_pos(c)[0] - x) <= 0.4 + 1e-9).collect();
        free[self.rng.below(free.len())]
    }

    fn look_point(&self, f: usize, target: LookAt) -> Vec3 {
        match target {
            LookAt::Point(p) => p,
            LookAt::Object(i) => self.frames[f].centers[i],
        }
    }

    /// Noise-free gaze direction of every frame.
    fn gaze_directions(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(self.frames.len());
        let mut j = 0;
        for (f, fr) in self.frames.iter().enumerate() {
            while j + 1 < self.fixations.len() && self.fixations[j + 1].start <= f {
                j += 1;
            }
            let fix = &self.fixations[j];
            let mut p = self.look_point(f, fix.target);
            if j > 0 && f < fix.start + SACCADE {
                let prev = self.look_point(f, self.fixations[j - 1].target);
                p = linalg::lerp(prev, p, min_jerk((f - fix.start) as f64 / SACCADE as f64));
            }
            let d = linalg::sub(p, fr.head);
            out.push(if linalg::norm(d) > 1e-9 { linalg::normalize(d) } else { [libm::cos(fr.yaw), libm::sin(fr.yaw), 0.0] });
        }
        out
    }
}

fn bbox(center: Vec3, half: Vec3, yaw: f64) -> [Vec3; 8] {
    let r = linalg::rot_z(yaw);
    let mut b = [[0.0; 3]; 8];
    for (v, bv) in b.iter_mut().enumerate() {
        let s = |bit: usize| if v >> bit & 1 == 1 { 1.0 } else { -1.0 };
        *bv = linalg::add(center, linalg::mat_vec(&r, [s(0) * half[0], s(1) * half[1], s(2) * half[2]]));
    }
    b
}

fn noisy_direction(rng: &mut XorShift64Star, g: Vec3, sigma: f64) -> Vec3 {
    if sigma == 0.0 {
        return g;
    }
    let s = sigma / core::f64::consts::SQRT_2;
    linalg::normalize(linalg::add(g, [s * rng.normal(), s * rng.normal(), s * rng.normal()]))
}

/// Generate one session. The output is a pure function of `cfg`.
pub fn generate_session(cfg: &SceneConfig) -> Result<SessionFile> {
    cfg.validate()?;
    let mut rng = XorShift64Star::new(cfg.seed);
    let (w, h) = (cfg.room[0], cfg.room[1]);
    let tables: Vec<Table> = (0..TABLES)
        .map(|k| {
            let sx = if k % 2 == 0 { -1.0 } else { 1.0 };
            let sy = if k < 2 { -1.0 } else { 1.0 };
            let height = rng.range(0.7, 0.95);
            Table { center: [sx * w / 4.0, sy * h / 4.0, height], side: -sy, cells: vec![None; GRID[0] * GRID[1]] }
        })
        .collect();
    let mut sim = Sim { cfg, rng, tables, objects: Vec::new(), frames: Vec::new(), fixations: Vec::new() };
    for i in 0..cfg.n_objects {
        let table = i % TABLES;
        let free: Vec<usize> = (0..GRID[0] * GRID[1]).filter(|&c| sim.tables[table].cells[c].is_none()).collect();
        let cell = free[sim.rng.below(free.len())];
        sim.tables[table].cells[cell] = Some(i);
        let half = [sim.rng.range(0.025, 0.06), sim.rng.range(0.025, 0.06), sim.rng.range(0.03, 0.1)];
        let yaw = sim.rng.range(-core::f64::consts::PI, core::f64::consts::PI);
        sim.objects.push(Object { table, cell, half, yaw });
    }
    let labels: Vec<String> = (0..cfg.n_objects).map(|_| String::from(VOCABULARY[sim.rng.below(VOCABULARY.len())])).collect();

    let head = [sim.rng.range(-0.4, 0.4), sim.rng.range(-0.4, 0.4), HEAD_HEIGHT];
    let yaw = sim.rng.range(-core::f64::consts::PI, core::f64::consts::PI);
    let centers = (0..cfg.n_objects).map(|i| sim.object_center(i)).collect();
    sim.frames.push(TrueFrame { head, yaw, hands: [rest_hand(head, yaw, 0), rest_hand(head, yaw, 1)], centers });
    sim.fixations.push(Fixation { start: 0, target: LookAt::Point(linalg::add(head, [libm::cos(yaw), libm::sin(yaw), -0.5])) });
    let lead = 5 + sim.rng.below(10);
    sim.idle(lead);
    let mut previous = None;
    for _ in 0..cfg.episodes {
        let before = sim.fixations.len();
        sim.episode(previous);
        if let LookAt::Object(t) = sim.fixations[before + 1].target {
            previous = Some(t);
        }
    }

    let dirs = sim.gaze_directions();
    let sigma = cfg.gaze_noise_deg.to_radians();
    let mut rng = sim.rng.clone();
    let mut frames = Vec::with_capacity(sim.frames.len());
    for (f, (tf, dir)) in sim.frames.iter().zip(&dirs).enumerate() {
        let jitter = |rng: &mut XorShift64Star, p: Vec3| {
            if cfg.position_noise == 0.0 {
                p
            } else {
                let s = cfg.position_noise;
                linalg::add(p, [s * rng.normal(), s * rng.normal(), s * rng.normal()])
            }
        };
        let gaze = noisy_direction(&mut rng, *dir, sigma);
        let head_pos = jitter(&mut rng, tf.head);
        let hands = [jitter(&mut rng, tf.hands[0]), jitter(&mut rng, tf.hands[1])];
        let interacting = tf.centers.iter().map(|c| hands.iter().any(|hp| linalg::dist(*hp, *c) < cfg.grasp_radius)).collect();
        frames.push(Frame {
            index: f as u64,
            gaze,
            head_rot: look_rotation(*dir),
            head_pos,
            hands,
            bboxes: tf.centers.iter().zip(&sim.objects).map(|(c, o)| bbox(*c, o.half, o.yaw)).collect(),
            centers: tf.centers.clone(),
            interacting,
        });
    }
    let session = SessionFile {
        header: SessionHeader {
            version: SESSION_VERSION,
            frame_rate_hz: cfg.frame_rate_hz,
            n_objects: cfg.n_objects,
            d_clip: cfg.d_clip,
            labels,
        },
        frames,
    };
    session.validate()?;
    Ok(session)
}

/// Sessions of one split with their seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSplit {
    pub name: &'static str,
    pub seeds: Vec<u64>,
    pub sessions: Vec<SessionFile>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub master_seed: u64,
    pub train: CorpusSplit,
    pub test: CorpusSplit,
}

/// Seeds of both splits: one contiguous range starting at a hash of the
/// master seed, train first, so the splits cannot overlap.
pub fn corpus_seeds(master_seed: u64, n_train: usize, n_test: usize) -> (Vec<u64>, Vec<u64>) {
    let base = splitmix64(master_seed);
    let at = |k: usize| base.wrapping_add(k as u64);
    ((0..n_train).map(at).collect(), (n_train..n_train + n_test).map(at).collect())
}

pub fn generate_corpus(cfg: &SceneConfig, n_train: usize, n_test: usize) -> Result<Corpus> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::arg("both splits need at least one session"));
    }
    let (train_seeds, test_seeds) = corpus_seeds(cfg.seed, n_train, n_test);
    let gen = |seeds: &[u64]| -> Result<Vec<SessionFile>> {
        seeds.iter().map(|&seed| generate_session(&SceneConfig { seed, ..cfg.clone() })).collect()
    };
    Ok(Corpus {
        master_seed: cfg.seed,
        train: CorpusSplit { name: "train", sessions: gen(&train_seeds)?, seeds: train_seeds },
        test: CorpusSplit { name: "test", sessions: gen(&test_seeds)?, seeds: test_seeds },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneConfig {
        SceneConfig { n_objects: 12, episodes: 2, ..SceneConfig::default() }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_session(&small()).unwrap();
        assert_eq!(a, generate_session(&small()).unwrap());
        let b = generate_session(&SceneConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn degenerate_room_rejected() {
        let cfg = SceneConfig { room: [1.0, 4.0], ..small() };
        assert!(matches!(generate_session(&cfg), Err(Error::Argument(_))));
        assert!(SceneConfig { n_objects: 8, ..small() }.validate_for(12).is_err());
    }

    fn quiet(lag: usize, seed: u64) -> (SceneConfig, SessionFile) {
        let cfg = SceneConfig { gaze_lag: lag, seed, gaze_noise_deg: 0.0, position_noise: 0.0, ..small() };
        let s = generate_session(&cfg).unwrap();
        (cfg, s)
    }

    /// Per-frame indicator of "this frame starts a run at the minimum".
    fn minimum_onsets(signal: &[f64], tol: f64) -> Vec<f64> {
        let lo = signal.iter().cloned().fold(f64::INFINITY, f64::min);
        (0..signal.len())
            .map(|t| {
                let at = |k: usize| signal[k] - lo <= tol;
                if at(t) && (t == 0 || !at(t - 1)) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Sustained grasps in order: `(object, previous grasp onset, onset)`.
    fn grasped(s: &SessionFile) -> Vec<(usize, usize, usize)> {
        let mut out: Vec<(usize, usize, usize)> = Vec::new();
        let held = |f: usize, i: usize| (f..f + 10).all(|k| k < s.frames.len() && s.frames[k].interacting[i]);
        for (f, fr) in s.frames.iter().enumerate() {
            for i in 0..fr.interacting.len() {
                if held(f, i) && (f == 0 || !s.frames[f - 1].interacting[i]) {
                    let from = out.last().map_or(0, |e| e.2);
                    out.push((i, from, f));
                }
            }
        }
        out
    }

    #[test]
    fn gaze_leads_hand_by_lag() {
        for lag in [0, 3, 5, 8] {
            let (cfg, s) = quiet(lag, 11);
            let episodes = grasped(&s);
            assert_eq!(episodes.len(), cfg.episodes);
            for &(i, from, onset) in &episodes {
                // the segment ends shortly after grasp onset, where contact is
                let to = (onset + 10).min(s.frames.len());
                let fr = &s.frames[from..to];
                let angle: Vec<f64> =
                    fr.iter().map(|f| crate::dyngcn::gaze_angle(f.gaze, linalg::sub(f.centers[i], f.head_pos))).collect();
                let reach: Vec<f64> = fr
                    .iter()
                    .map(|f| f.hands.iter().map(|h| linalg::dist(*h, f.centers[i])).fold(f64::INFINITY, f64::min))
                    .collect();
                let a = minimum_onsets(&angle, 1e-5);
                let h = minimum_onsets(&reach, 1e-9);
                let n = a.len() as isize;
                let corr = |tau: isize| -> f64 {
                    (0..n).filter(|t| (0..n).contains(&(t + tau))).map(|t| a[t as usize] * h[(t + tau) as usize]).sum()
                };
                let best = (-n + 1..n).max_by(|&x, &y| corr(x).total_cmp(&corr(y))).unwrap();
                assert!(corr(best) > 0.0);
                assert!((best - lag as isize).abs() <= 1, "lag {lag}: offset {best}");
            }
        }
    }

    #[test]
    fn gaze_ray_hits_target_at_grasp_onset() {
        let (_, s) = quiet(5, 3);
        for (i, _, flagged) in grasped(&s) {
            // the grasp starts when the hand comes to rest on the object
            let mut onset = flagged;
            while s.frames[onset].hands.iter().all(|h| linalg::dist(*h, s.frames[onset].centers[i]) > 1e-9) {
                onset += 1;
            }
            let f = &s.frames[onset];
            let off = linalg::sub(f.centers[i], f.head_pos);
            let along = linalg::dot(off, f.gaze);
            let miss = linalg::norm(linalg::sub(off, linalg::scale(f.gaze, along)));
            assert!(along > 0.0 && miss < 1e-3, "miss {miss} at frame {onset}");
        }
    }

    #[test]
    fn physical_limits_hold() {
        let cfg = SceneConfig { position_noise: 0.0, ..small() };
        let s = generate_session(&cfg).unwrap();
        let dt = 1.0 / cfg.frame_rate_hz;
        for pair in s.frames.windows(2) {
            for h in 0..2 {
                assert!(linalg::dist(pair[0].hands[h], pair[1].hands[h]) / dt <= cfg.max_hand_speed);
            }
        }
        for f in &s.frames {
            for h in &f.hands {
                assert!(linalg::dist(*h, f.head_pos) <= 1.2);
            }
        }
    }

    #[test]
    fn labels_follow_grasp_radius() {
        let s = generate_session(&small()).unwrap();
        let mut any = false;
        for f in &s.frames {
            for (i, c) in f.centers.iter().enumerate() {
                let near = f.hands.iter().any(|h| linalg::dist(*h, *c) < 0.08);
                assert_eq!(near, f.interacting[i]);
                any |= near;
            }
        }
        assert!(any);
    }

    #[test]
    fn corpus_splits_are_disjoint() {
        let (tr, te) = corpus_seeds(7, 60, 10);
        assert_eq!((tr.len(), te.len()), (60, 10));
        assert!(tr.iter().all(|s| !te.contains(s)));
        assert_eq!(corpus_seeds(7, 60, 10), (tr, te));
    }
}
