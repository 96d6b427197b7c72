//! Session files: magic, version byte, one JSON header line, then
//! fixed-size little-endian frame records.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use situate_core::datamodel::{Frame, SessionFile, SessionHeader};

use crate::error::{Error, Result};

pub const SESSION_MAGIC: &[u8; 7] = b"SITSESS";
pub const SESSION_VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    frame_rate_hz: f64,
    n_objects: usize,
    d_clip: usize,
    labels: Vec<String>,
    frames: usize,
}

/// Bytes of one frame record for `n` objects.
pub fn frame_record_len(n: usize) -> usize {
    8 + 21 * 8 + n * 3 * 8 + n * 24 * 8 + n
}

fn put(out: &mut Vec<u8>, vals: &[f64]) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn session_to_bytes(s: &SessionFile) -> Result<Vec<u8>> {
    let n = s.header.n_objects;
    let header = HeaderLine {
        frame_rate_hz: s.header.frame_rate_hz,
        n_objects: n,
        d_clip: s.header.d_clip,
        labels: s.header.labels.clone(),
        frames: s.frames.len(),
    };
    let json = serde_json::to_string(&header).map_err(|e| Error::format("session header", e.to_string()))?;
    let mut out = Vec::with_capacity(8 + json.len() + 1 + s.frames.len() * frame_record_len(n));
    out.extend_from_slice(SESSION_MAGIC);
    out.push(SESSION_VERSION);
    out.extend_from_slice(json.as_bytes());
    out.push(b'\n');
    for (f, fr) in s.frames.iter().enumerate() {
        if fr.centers.len() != n || fr.bboxes.len() != n || fr.interacting.len() != n {
            return Err(Error::format("session", format!("frame {f} does not hold {n} objects")));
        }
        out.extend_from_slice(&fr.index.to_le_bytes());
        put(&mut out, &fr.gaze);
        put(&mut out, &fr.head_rot);
        put(&mut out, &fr.head_pos);
        put(&mut out, &fr.hands[0]);
        put(&mut out, &fr.hands[1]);
        for c in &fr.centers {
            put(&mut out, c);
        }
        for b in &fr.bboxes {
            for v in b {
                put(&mut out, v);
            }
        }
        out.extend(fr.interacting.iter().map(|&x| u8::from(x)));
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: impl FnOnce() -> String) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated { what: what() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f64s<const K: usize>(&mut self, frame: usize) -> Result<[f64; K]> {
        let raw = self.take(8 * K, || format!("frame {frame}"))?;
        let mut out = [0.0; K];
        for (o, c) in out.iter_mut().zip(raw.chunks_exact(8)) {
            *o = f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        }
        Ok(out)
    }
}

/// Parse without checking frame invariants.
pub fn session_from_bytes_unchecked(bytes: &[u8]) -> Result<SessionFile> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(7, || "magic".into())? != SESSION_MAGIC {
        return Err(Error::Magic { expected: "SITSESS" });
    }
    let version = r.take(1, || "version byte".into())?[0];
    if version != SESSION_VERSION {
        return Err(Error::Version { found: version, supported: SESSION_VERSION });
    }
    let rest = &bytes[r.pos..];
    let eol = rest.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Truncated { what: "header line".into() })?;
    let header: HeaderLine = serde_json::from_slice(&rest[..eol]).map_err(|e| Error::format("session header", e.to_string()))?;
    r.pos += eol + 1;
    let n = header.n_objects;
    if header.labels.len() != n {
        return Err(Error::format("session header", format!("{} labels for {n} objects", header.labels.len())));
    }
    let mut frames = Vec::with_capacity(header.frames);
    for f in 0..header.frames {
        let index = u64::from_le_bytes(r.take(8, || format!("frame {f}"))?.try_into().expect("8 bytes"));
        let gaze = r.f64s::<3>(f)?;
        let head_rot = r.f64s::<9>(f)?;
        let head_pos = r.f64s::<3>(f)?;
        let hands = [r.f64s::<3>(f)?, r.f64s::<3>(f)?];
        let centers = (0..n).map(|_| r.f64s::<3>(f)).collect::<Result<Vec<_>>>()?;
        let mut bboxes = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = [[0.0; 3]; 8];
            for v in &mut b {
                *v = r.f64s::<3>(f)?;
            }
            bboxes.push(b);
        }
        let flags = r.take(n, || format!("frame {f}"))?;
        let interacting = flags
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::format("session", format!("frame {f}: interaction flag byte {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        frames.push(Frame { index, gaze, head_rot, head_pos, hands, centers, bboxes, interacting });
    }
    if r.pos != bytes.len() {
        return Err(Error::format("session", format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(SessionFile {
        header: SessionHeader {
            version,
            frame_rate_hz: header.frame_rate_hz,
            n_objects: n,
            d_clip: header.d_clip,
            labels: header.labels,
        },
        frames,
    })
}

/// Parse and validate every frame.
pub fn session_from_bytes(bytes: &[u8]) -> Result<SessionFile> {
    let s = session_from_bytes_unchecked(bytes)?;
    s.validate()?;
    Ok(s)
}

pub fn write_session(path: &Path, s: &SessionFile) -> Result<()> {
    let bytes = session_to_bytes(s)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_session(path: &Path) -> Result<SessionFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    session_from_bytes(&bytes)
}
