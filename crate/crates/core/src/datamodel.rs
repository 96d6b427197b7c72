//! Typed containers for observation windows, future states and recorded
//! sessions, plus window slicing and the hard-split filter.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::encoder::{embed_labels, LabelEmbeddingTable};
use crate::numerics::linalg::{self, Mat3, Vec3};
use crate::numerics::Tensor;
use crate::{Error, Result};

pub const GAZE_NORM_TOL: f64 = 1e-6;
pub const ROTATION_TOL: f64 = 1e-6;
pub const BBOX_CENTER_TOL: f64 = 1e-4;

/// History/future lengths and temporal subsampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowSpec {
    pub history: usize,
    pub horizon: usize,
    pub stride: usize,
    pub source_hz: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { history: 15, horizon: 15, stride: 2, source_hz: 30.0 }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.history == 0 || self.horizon == 0 {
            return Err(Error::Config(format!("invalid window spec {self:?}")));
        }
        Ok(())
    }

    pub fn span(&self) -> usize {
        self.history + self.horizon
    }

    /// Number of frames kept after stride sampling.
    pub fn sampled_len(&self, raw_frames: usize) -> usize {
        raw_frames.div_ceil(self.stride)
    }

    /// Closed-form window count for a session of `raw_frames`.
    pub fn window_count(&self, raw_frames: usize) -> usize {
        let l = self.sampled_len(raw_frames);
        if l >= self.span() {
            l - self.span() + 1
        } else {
            0
        }
    }
}

/// Session metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionHeader {
    pub version: u8,
    pub frame_rate_hz: f64,
    pub n_objects: usize,
    pub d_clip: usize,
    pub labels: Vec<String>,
}

/// One recorded frame. Rotations are row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub index: u64,
    pub gaze: Vec3,
    pub head_rot: Mat3,
    pub head_pos: Vec3,
    /// `[left, right]`
    pub hands: [Vec3; 2],
    pub centers: Vec<Vec3>,
    pub bboxes: Vec<[Vec3; 8]>,
    pub interacting: Vec<bool>,
}

/// A full multi-frame recording.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionFile {
    pub header: SessionHeader,
    pub frames: Vec<Frame>,
}

pub(crate) fn check_gaze(frame: usize, g: Vec3) -> Result<()> {
    let n = linalg::norm(g);
    if !(libm::fabs(n - 1.0) <= GAZE_NORM_TOL) {
        return Err(Error::Invariant { frame, what: format!("gaze norm {n} is not 1") });
    }
    Ok(())
}

pub(crate) fn check_rotation(frame: usize, r: &Mat3) -> Result<()> {
    let ortho = linalg::orthogonality_error(r);
    let det = linalg::det(r);
    if !(ortho <= ROTATION_TOL) || !(libm::fabs(det - 1.0) <= ROTATION_TOL) {
        return Err(Error::Invariant { frame, what: format!("head rotation not proper (|RᵀR−I| = {ortho:e}, det = {det})") });
    }
    Ok(())
}

pub(crate) fn check_bbox(frame: usize, obj: usize, bbox: &[Vec3; 8], center: Vec3) -> Result<()> {
    let mut mean = [0.0; 3];
    for v in bbox {
        mean = linalg::add(mean, *v);
    }
    let off = linalg::dist(linalg::scale(mean, 0.125), center);
    if !(off <= BBOX_CENTER_TOL) {
        return Err(Error::Invariant { frame, what: format!("object {obj}: bbox vertex mean is {off} m from its center") });
    }
    Ok(())
}

impl SessionFile {
    /// Check every per-frame invariant; the error names the first bad frame.
    pub fn validate(&self) -> Result<()> {
        let n = self.header.n_objects;
        if self.header.labels.len() != n {
            return Err(Error::Invariant { frame: 0, what: format!("{} labels for {n} objects", self.header.labels.len()) });
        }
        let mut prev: Option<u64> = None;
        for (f, fr) in self.frames.iter().enumerate() {
            if fr.centers.len() != n || fr.bboxes.len() != n || fr.interacting.len() != n {
                return Err(Error::Invariant { frame: f, what: format!("object arrays do not have {n} entries") });
            }
            if prev.is_some_and(|p| fr.index <= p) {
                return Err(Error::Invariant { frame: f, what: "frame indices not increasing".into() });
            }
            prev = Some(fr.index);
            let finite =
                fr.gaze.iter().chain(&fr.head_rot).chain(&fr.head_pos).chain(fr.hands.iter().flatten()).all(|v| v.is_finite())
                    && fr.centers.iter().flatten().all(|v| v.is_finite())
                    && fr.bboxes.iter().flatten().flatten().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Invariant { frame: f, what: "non-finite value".into() });
            }
            check_gaze(f, fr.gaze)?;
            check_rotation(f, &fr.head_rot)?;
            for (i, (b, c)) in fr.bboxes.iter().zip(&fr.centers).enumerate() {
                check_bbox(f, i, b, *c)?;
            }
        }
        Ok(())
    }
}

/// Everything observed over the history span.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationWindow {
    /// `[T_h, 3]` unit vectors
    pub gaze: Tensor,
    /// `[T_h, 3, 3]`
    pub head_rot: Tensor,
    /// `[T_h, 3]` meters
    pub head_pos: Tensor,
    /// `[T_h, 2, 3]` meters, `[left, right]`
    pub hand_pos: Tensor,
    /// `[T_h, N, 8, 3]` meters
    pub bbox: Tensor,
    /// `[T_h, N, 3]` meters
    pub centers: Tensor,
    /// `[N, D_clip]`
    pub semantic: Tensor,
    pub labels: Vec<String>,
}

impl ObservationWindow {
    pub fn history(&self) -> usize {
        self.gaze.shape()[0]
    }

    pub fn n_objects(&self) -> usize {
        self.centers.shape()[1]
    }

    pub fn clip_dim(&self) -> usize {
        self.semantic.shape()[1]
    }

    pub fn gaze_at(&self, t: usize) -> Vec3 {
        row3(&self.gaze, t)
    }

    pub fn head_pos_at(&self, t: usize) -> Vec3 {
        row3(&self.head_pos, t)
    }

    pub fn hand_at(&self, t: usize, hand: usize) -> Vec3 {
        row3(&self.hand_pos, t * 2 + hand)
    }

    pub fn center_at(&self, t: usize, obj: usize) -> Vec3 {
        row3(&self.centers, t * self.n_objects() + obj)
    }

    pub fn head_rot_at(&self, t: usize) -> Mat3 {
        let mut r = [0.0; 9];
        r.copy_from_slice(&self.head_rot.data()[t * 9..t * 9 + 9]);
        r
    }

    /// Check extents and every geometric invariant.
    pub fn validate(&self) -> Result<()> {
        let t = self.history();
        let n = self.n_objects();
        let dc = self.clip_dim();
        let expect = [
            ("gaze", &self.gaze, alloc::vec![t, 3]),
            ("head_rot", &self.head_rot, alloc::vec![t, 3, 3]),
            ("head_pos", &self.head_pos, alloc::vec![t, 3]),
            ("hand_pos", &self.hand_pos, alloc::vec![t, 2, 3]),
            ("bbox", &self.bbox, alloc::vec![t, n, 8, 3]),
            ("centers", &self.centers, alloc::vec![t, n, 3]),
            ("semantic", &self.semantic, alloc::vec![n, dc]),
        ];
        for (name, tensor, shape) in expect {
            if tensor.shape() != shape.as_slice() {
                return Err(Error::shape("observation", format!("{name}: {:?}, expected {shape:?}", tensor.shape())));
            }
            if !tensor.is_finite() {
                return Err(Error::NonFinite { op: format!("observation.{name}") });
            }
        }
        if self.labels.len() != n {
            return Err(Error::shape("observation", format!("{} labels for {n} objects", self.labels.len())));
        }
        for f in 0..t {
            check_gaze(f, self.gaze_at(f))?;
            check_rotation(f, &self.head_rot_at(f))?;
            for i in 0..n {
                let mut b = [[0.0; 3]; 8];
                for (v, bv) in b.iter_mut().enumerate() {
                    *bv = row3(&self.bbox, (f * n + i) * 8 + v);
                }
                check_bbox(f, i, &b, self.center_at(f, i))?;
            }
        }
        for row in self.semantic.rows() {
            let nrm = libm::sqrt(row.iter().map(|v| v * v).sum());
            if libm::fabs(nrm - 1.0) > 1e-6 {
                return Err(Error::arg(format!("semantic row norm {nrm}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn row3(t: &Tensor, row: usize) -> Vec3 {
    let d = &t.data()[row * 3..row * 3 + 3];
    [d[0], d[1], d[2]]
}

/// Future human and object states, either ground truth (all `N` objects,
/// labels in {0, 1}) or a prediction (selected objects, probabilities).
#[derive(Clone, Debug, PartialEq)]
pub struct FutureStates {
    /// `[T_f, 3]`
    pub gaze: Tensor,
    /// `[T_f, 3, 3]`
    pub head_rot: Tensor,
    /// `[T_f, 3]`
    pub head_pos: Tensor,
    /// `[T_f, 2, 3]`
    pub hand_pos: Tensor,
    /// `[T_f, M, 3]`
    pub object_centers: Tensor,
    /// length `M`
    pub interaction: Vec<f64>,
}

impl FutureStates {
    pub fn horizon(&self) -> usize {
        self.gaze.shape()[0]
    }

    pub fn n_objects(&self) -> usize {
        self.object_centers.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.horizon();
        let m = self.n_objects();
        let expect = [
            ("gaze", &self.gaze, alloc::vec![t, 3]),
            ("head_rot", &self.head_rot, alloc::vec![t, 3, 3]),
            ("head_pos", &self.head_pos, alloc::vec![t, 3]),
            ("hand_pos", &self.hand_pos, alloc::vec![t, 2, 3]),
            ("object_centers", &self.object_centers, alloc::vec![t, m, 3]),
        ];
        for (name, tensor, shape) in expect {
            if tensor.shape() != shape.as_slice() {
                return Err(Error::shape("future", format!("{name}: {:?}, expected {shape:?}", tensor.shape())));
            }
        }
        if self.interaction.len() != m || self.interaction.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::arg("interaction values must be in [0, 1], one per object"));
        }
        for f in 0..t {
            check_gaze(f, row3(&self.gaze, f))?;
        }
        Ok(())
    }
}

/// A training/evaluation sample cut from a session.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub obs: ObservationWindow,
    pub future: FutureStates,
    /// `[T_h][N]` per-frame interaction flags over the history.
    pub history_flags: Vec<Vec<bool>>,
    /// `[T_f][N]` per-frame interaction flags over the future.
    pub future_flags: Vec<Vec<bool>>,
    /// First sampled frame of the window.
    pub start: usize,
}

impl Window {
    /// Window-level ground truth: interacted in any future frame.
    pub fn labels(&self) -> &[f64] {
        &self.future.interaction
    }
}

fn stack_frames(frames: &[&Frame], n: usize) -> [Tensor; 6] {
    let t = frames.len();
    let mut gaze = Vec::with_capacity(t * 3);
    let mut rot = Vec::with_capacity(t * 9);
    let mut head = Vec::with_capacity(t * 3);
    let mut hands = Vec::with_capacity(t * 6);
    let mut bbox = Vec::with_capacity(t * n * 24);
    let mut centers = Vec::with_capacity(t * n * 3);
    for f in frames {
        gaze.extend_from_slice(&f.gaze);
        rot.extend_from_slice(&f.head_rot);
        head.extend_from_slice(&f.head_pos);
        hands.extend(f.hands.iter().flatten());
        bbox.extend(f.bboxes.iter().flatten().flatten());
        centers.extend(f.centers.iter().flatten());
    }
    let mk = |shape: &[usize], d: Vec<f64>| Tensor::new(shape, d).expect("frame arrays sized by header");
    [
        mk(&[t, 3], gaze),
        mk(&[t, 3, 3], rot),
        mk(&[t, 3], head),
        mk(&[t, 2, 3], hands),
        mk(&[t, n, 8, 3], bbox),
        mk(&[t, n, 3], centers),
    ]
}

/// Position of padding objects, far enough that every proximity weight
/// underflows to zero.
pub const PAD_POSITION: Vec3 = [1.0e3, 1.0e3, 0.0];
pub const PAD_LABEL: &str = "<pad>";

/// Extend a session to `n` objects with inert, never-interacted objects at
/// [`PAD_POSITION`].
pub fn pad_session(session: &SessionFile, n: usize) -> Result<SessionFile> {
    let have = session.header.n_objects;
    if n < have {
        return Err(Error::arg(format!("cannot pad {have} objects down to {n}")));
    }
    let mut out = session.clone();
    out.header.n_objects = n;
    out.header.labels.resize(n, String::from(PAD_LABEL));
    let corners = [PAD_POSITION; 8];
    for fr in &mut out.frames {
        fr.centers.resize(n, PAD_POSITION);
        fr.bboxes.resize(n, corners);
        fr.interacting.resize(n, false);
    }
    Ok(out)
}

/// Observation from frames that are already stride-sampled, such as one
/// streamed window. The frame count sets `T_h`.
pub fn observation_from_frames(header: &SessionHeader, frames: &[Frame]) -> Result<ObservationWindow> {
    if frames.is_empty() {
        return Err(Error::arg("a window needs at least one frame"));
    }
    let session = SessionFile { header: header.clone(), frames: frames.to_vec() };
    session.validate()?;
    let refs: Vec<&Frame> = frames.iter().collect();
    let [gaze, head_rot, head_pos, hand_pos, bbox, centers] = stack_frames(&refs, header.n_objects);
    Ok(ObservationWindow {
        gaze,
        head_rot,
        head_pos,
        hand_pos,
        bbox,
        centers,
        semantic: embed_labels(&header.labels, &LabelEmbeddingTable::new(header.d_clip)),
        labels: header.labels.clone(),
    })
}

/// Cut stride-sampled sliding windows (window step 1 over the sampled
/// sequence). Returns an empty list for sessions too short to hold one.
pub fn slice_windows(session: &SessionFile, spec: &WindowSpec) -> Result<Vec<Window>> {
    spec.validate()?;
    let n = session.header.n_objects;
    let sampled: Vec<&Frame> = session.frames.iter().step_by(spec.stride).collect();
    if sampled.len() < spec.span() {
        return Ok(Vec::new());
    }
    let table = LabelEmbeddingTable::new(session.header.d_clip);
    let semantic = embed_labels(&session.header.labels, &table);
    let mut out = Vec::with_capacity(sampled.len() - spec.span() + 1);
    for start in 0..=sampled.len() - spec.span() {
        let hist = &sampled[start..start + spec.history];
        let fut = &sampled[start + spec.history..start + spec.span()];
        let [gaze, head_rot, head_pos, hand_pos, bbox, centers] = stack_frames(hist, n);
        let obs = ObservationWindow {
            gaze,
            head_rot,
            head_pos,
            hand_pos,
            bbox,
            centers,
            semantic: semantic.clone(),
            labels: session.header.labels.clone(),
        };
        let [fgaze, frot, fhead, fhands, _fbbox, fcenters] = stack_frames(fut, n);
        let future_flags: Vec<Vec<bool>> = fut.iter().map(|f| f.interacting.clone()).collect();
        let interaction = (0..n).map(|i| if future_flags.iter().any(|fl| fl[i]) { 1.0 } else { 0.0 }).collect();
        out.push(Window {
            obs,
            future: FutureStates {
                gaze: fgaze,
                head_rot: frot,
                head_pos: fhead,
                hand_pos: fhands,
                object_centers: fcenters,
                interaction,
            },
            history_flags: hist.iter().map(|f| f.interacting.clone()).collect(),
            future_flags,
            start,
        });
    }
    Ok(out)
}

/// True when some object's interaction flag in a future frame differs from
/// its flag in some history frame.
pub fn state_changes(w: &Window) -> bool {
    let n = w.history_flags.first().map_or(0, |f| f.len());
    (0..n).any(|i| w.future_flags.iter().any(|ff| w.history_flags.iter().any(|hf| hf[i] != ff[i])))
}

/// Keep the windows whose interaction state changes between history and future.
pub fn make_hard_split(windows: &[Window]) -> Vec<Window> {
    windows.iter().filter(|w| state_changes(w)).cloned().collect()
}
