//! Corpus directories: one session file per seed plus a tab-separated
//! manifest of `split<TAB>seed<TAB>file` lines.

use std::fs;
use std::path::{Path, PathBuf};

use situate_core::datamodel::{pad_session, slice_windows, SessionFile, Window, WindowSpec};
use situate_core::scenegen::{Corpus, CorpusSplit};

use crate::error::{Error, Result};
use crate::session_io::{read_session, write_session};

pub const MANIFEST_NAME: &str = "manifest.tsv";
pub const SESSION_EXT: &str = "sits";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub split: String,
    pub seed: u64,
    /// Relative to the corpus directory.
    pub file: PathBuf,
}

pub fn session_file_name(split: &str, index: usize) -> String {
    format!("{split}_{index:03}.{SESSION_EXT}")
}

/// Write every session and the manifest. Returns the manifest entries.
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for split in [&corpus.train, &corpus.test] {
        entries.extend(write_split(dir, split)?);
    }
    let mut text = format!("# master_seed={}\n", corpus.master_seed);
    for e in &entries {
        text.push_str(&format!("{}\t{}\t{}\n", e.split, e.seed, e.file.display()));
    }
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

fn write_split(dir: &Path, split: &CorpusSplit) -> Result<Vec<ManifestEntry>> {
    split
        .sessions
        .iter()
        .zip(&split.seeds)
        .enumerate()
        .map(|(i, (s, &seed))| {
            let file = PathBuf::from(session_file_name(split.name, i));
            write_session(&dir.join(&file), s)?;
            Ok(ManifestEntry { split: split.name.into(), seed, file })
        })
        .collect()
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = || Error::format("manifest", format!("line {}: {line:?}", ln + 1));
        let mut parts = line.split('\t');
        let (Some(split), Some(seed), Some(file), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let seed = seed.parse().map_err(|_| bad())?;
        out.push(ManifestEntry { split: split.into(), seed, file: file.into() });
    }
    Ok(out)
}

/// Sessions of one split, in manifest order.
pub fn load_split(dir: &Path, split: &str) -> Result<Vec<SessionFile>> {
    let entries: Vec<_> = read_manifest(dir)?.into_iter().filter(|e| e.split == split).collect();
    if entries.is_empty() {
        return Err(Error::format("manifest", format!("no {split} sessions in {}", dir.display())));
    }
    entries.iter().map(|e| read_session(&dir.join(&e.file))).collect()
}

/// Windows of sessions padded to `n_objects`, keeping every `step`-th
/// window of each session.
pub fn windows_of(sessions: &[SessionFile], spec: &WindowSpec, n_objects: usize, step: usize) -> Result<Vec<Window>> {
    if step == 0 {
        return Err(Error::Config("window step must be at least 1".into()));
    }
    let mut out = Vec::new();
    for s in sessions {
        if s.header.n_objects > n_objects {
            return Err(Error::Config(format!("session holds {} objects but the model takes {n_objects}", s.header.n_objects)));
        }
        let padded;
        let s = if s.header.n_objects < n_objects {
            padded = pad_session(s, n_objects)?;
            &padded
        } else {
            s
        };
        out.extend(slice_windows(s, spec)?.into_iter().step_by(step));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use situate_core::scenegen::{generate_corpus, SceneConfig};

    #[test]
    fn corpus_round_trip_and_padding() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SceneConfig { seed: 5, n_objects: 6, episodes: 1, ..SceneConfig::default() };
        let corpus = generate_corpus(&cfg, 2, 1).unwrap();
        let entries = write_corpus(dir.path(), &corpus).unwrap();
        assert_eq!(read_manifest(dir.path()).unwrap(), entries);
        assert_eq!(entries[2].file, PathBuf::from("test_000.sits"));
        let train = load_split(dir.path(), "train").unwrap();
        assert_eq!(train, corpus.train.sessions);

        let spec = WindowSpec::default();
        let all = windows_of(&train, &spec, 8, 1).unwrap();
        let every_third = windows_of(&train, &spec, 8, 3).unwrap();
        let expect: usize = train.iter().map(|s| spec.window_count(s.frames.len())).sum();
        assert_eq!(all.len(), expect);
        assert_eq!(every_third.len(), train.iter().map(|s| spec.window_count(s.frames.len()).div_ceil(3)).sum::<usize>());
        assert!(all.iter().all(|w| w.obs.n_objects() == 8 && w.labels()[6] == 0.0));
        assert!(windows_of(&train, &spec, 4, 1).is_err());
    }

    #[test]
    fn malformed_manifest_names_line() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(MANIFEST_NAME), "# x\ntrain\t1\ta.sits\ntrain\tnope\tb.sits\n").unwrap();
        let err = read_manifest(dir.path()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }
}
