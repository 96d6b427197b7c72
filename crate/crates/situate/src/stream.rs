//! Line-delimited window streams for `predict`.
//!
//! Each input line is the base64 (standard alphabet) encoding of a session
//! file holding exactly `T_h` already stride-sampled frames. Each output
//! line is one JSON object: a prediction, or `{"window": i, "error": ...}`.

use std::io::{BufRead, Write};
use std::time::Instant;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::{json, Value};
use situate_core::datamodel::{
    observation_from_frames, pad_session, Frame, ObservationWindow, SessionFile, SessionHeader, WindowSpec,
};
use situate_core::decoder::{forward, ModelParams, Prediction};
use situate_core::numerics::Tensor;

use crate::error::{Error, Result};
use crate::session_io::{session_from_bytes_unchecked, session_to_bytes};

pub fn encode_window(header: &SessionHeader, frames: &[Frame]) -> Result<String> {
    let s = SessionFile { header: header.clone(), frames: frames.to_vec() };
    Ok(STANDARD.encode(session_to_bytes(&s)?))
}

/// History windows of a session as stream lines, one per sliding window
/// that also has a full future (the same windows training and `eval` use).
pub fn session_window_lines(session: &SessionFile, spec: &WindowSpec) -> Result<Vec<String>> {
    spec.validate()?;
    let sampled: Vec<Frame> = session.frames.iter().step_by(spec.stride).cloned().collect();
    (0..spec.window_count(session.frames.len()))
        .map(|start| encode_window(&session.header, &sampled[start..start + spec.history]))
        .collect()
}

/// Decode one line into an observation sized for `params`.
pub fn decode_window(line: &str, params: &ModelParams) -> Result<ObservationWindow> {
    let cfg = params.config();
    let bytes = STANDARD.decode(line.trim()).map_err(|e| Error::format("window line", e.to_string()))?;
    let mut s = session_from_bytes_unchecked(&bytes)?;
    if s.frames.len() != cfg.t_h {
        return Err(Error::format("window line", format!("{} frames, model expects {}", s.frames.len(), cfg.t_h)));
    }
    if s.header.n_objects < cfg.n_objects {
        s = pad_session(&s, cfg.n_objects)?;
    }
    Ok(observation_from_frames(&s.header, &s.frames)?)
}

fn rows(t: &Tensor, width: usize) -> Vec<&[f64]> {
    t.data().chunks_exact(width).collect()
}

pub fn prediction_json(window: usize, pred: &Prediction) -> Value {
    let f = &pred.future;
    let k = pred.indices.len();
    let t_f = f.horizon();
    let hands: Vec<Vec<&[f64]>> = rows(&f.hand_pos, 6).iter().map(|r| vec![&r[..3], &r[3..]]).collect();
    let centers: Vec<Vec<&[f64]>> = if k == 0 {
        vec![Vec::new(); t_f]
    } else {
        rows(&f.object_centers, 3 * k).iter().map(|r| r.chunks_exact(3).collect()).collect()
    };
    json!({
        "window": window,
        "indices": pred.indices,
        "interaction": f.interaction,
        "object_scores": pred.object_scores,
        "gaze": rows(&f.gaze, 3),
        "head_rot": rows(&f.head_rot, 9),
        "head_pos": rows(&f.head_pos, 3),
        "hands": hands,
        "object_centers": centers,
    })
}

pub fn error_json(window: usize, err: &dyn std::fmt::Display) -> Value {
    json!({ "window": window, "error": err.to_string() })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StreamSummary {
    pub predicted: usize,
    pub failed: usize,
    /// Forward-pass wall time per predicted window, milliseconds.
    pub latencies_ms: Vec<f64>,
}

fn write_line(out: &mut dyn Write, v: &Value) -> Result<()> {
    writeln!(out, "{v}").map_err(|e| Error::io("<stdout>", e))
}

/// Predict every line of `input` in order. Malformed windows produce an
/// error record and the stream continues; only output failures and
/// `inspect` errors abort. `inspect` sees each decoded window.
pub fn predict_stream(
    input: impl BufRead,
    out: &mut dyn Write,
    params: &ModelParams,
    mut timing: Option<&mut dyn Write>,
    mut inspect: impl FnMut(usize, &ObservationWindow) -> Result<()>,
) -> Result<StreamSummary> {
    let mut summary = StreamSummary::default();
    let mut index = 0;
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<stdin>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let started = Instant::now();
        let result = match decode_window(&line, params) {
            Ok(obs) => {
                let pred = forward(&obs, params).map(|(_, p)| p);
                let ms = started.elapsed().as_secs_f64() * 1e3;
                inspect(index, &obs)?;
                pred.map(|p| (p, ms)).map_err(Error::from)
            }
            Err(e) => Err(e),
        };
        match result {
            Ok((pred, ms)) => {
                write_line(out, &prediction_json(index, &pred))?;
                summary.predicted += 1;
                summary.latencies_ms.push(ms);
                if let Some(t) = timing.as_deref_mut() {
                    writeln!(t, "window {index}: {ms:.3} ms").map_err(|e| Error::io("<stderr>", e))?;
                }
            }
            Err(e) => {
                write_line(out, &error_json(index, &e))?;
                summary.failed += 1;
            }
        }
        index += 1;
    }
    out.flush().map_err(|e| Error::io("<stdout>", e))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use situate_core::decoder::ModelConfig;
    use situate_core::pipeline::init_params;
    use situate_core::scenegen::{generate_session, SceneConfig};

    #[test]
    fn bad_line_yields_error_record_in_place() {
        let cfg = ModelConfig { n_objects: 6, top_k: 3, l_e: 1, l_i: 1, l_d: 1, ..ModelConfig::default() };
        let params = init_params(&cfg, 2).unwrap();
        let session = generate_session(&SceneConfig { n_objects: 5, episodes: 1, ..SceneConfig::default() }).unwrap();
        let mut lines = session_window_lines(&session, &WindowSpec::default()).unwrap();
        lines.truncate(4);
        lines[2] = "not base64!".into();
        let input = lines.join("\n");
        let mut out = Vec::new();
        let mut err = Vec::new();
        let s = predict_stream(input.as_bytes(), &mut out, &params, Some(&mut err), |_, _| Ok(())).unwrap();
        assert_eq!((s.predicted, s.failed), (3, 1));
        let records: Vec<Value> = String::from_utf8(out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(records.iter().map(|r| r["window"].as_u64().unwrap()).collect::<Vec<_>>(), [0, 1, 2, 3]);
        assert!(records[2]["error"].is_string());
        assert_eq!(records[3]["indices"].as_array().unwrap().len(), 3);
        assert_eq!(records[3]["hands"][14][1].as_array().unwrap().len(), 3);
        assert_eq!(String::from_utf8(err).unwrap().lines().count(), 3);
    }
}
