use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Engine, EngineError, EngineState, RunResult};
use crate::phenotype::{export_json, render, NetworkDescriptor};
use crate::stats::{write_stats_header, write_stats_rows, GenerationStats};

/// One generation's full engine state plus the hash of the setup that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub state: EngineState,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary sibling and a rename so readers never see a
/// partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), EngineError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        let bytes = serde_json::to_vec(self).map_err(|source| EngineError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        serde_json::from_slice(&bytes).map_err(|source| EngineError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// The state, provided the checkpoint was written under `expected`.
    pub fn into_state(self, expected: &str) -> Result<EngineState, EngineError> {
        if self.config_hash != expected {
            return Err(EngineError::ConfigMismatch {
                expected: expected.to_string(),
                found: self.config_hash,
            });
        }
        Ok(self.state)
    }
}

/// Layout of a run directory:
///
/// ```text
/// stats.csv                one row per completed generation
/// gen_<n>.json             checkpoint after generation n
/// best_descriptor.txt      rendered best-so-far network
/// best_descriptor.json     the same network in the JSON hand-off format
/// ```
#[derive(Debug, Clone)]
pub struct RunDirectory {
    root: PathBuf,
}

impl RunDirectory {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDirectory { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create(&self) -> Result<(), EngineError> {
        fs::create_dir_all(&self.root).map_err(io_err(&self.root))
    }

    pub fn stats_path(&self) -> PathBuf {
        self.root.join("stats.csv")
    }

    pub fn checkpoint_path(&self, generation: usize) -> PathBuf {
        self.root.join(format!("gen_{generation}.json"))
    }

    /// Checkpoints present, by ascending generation.
    pub fn checkpoints(&self) -> Result<Vec<(usize, PathBuf)>, EngineError> {
        let mut found = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            let generation = name
                .strip_prefix("gen_")
                .and_then(|r| r.strip_suffix(".json"))
                .and_then(|n| n.parse::<usize>().ok());
            if let Some(g) = generation {
                found.push((g, entry.path()));
            }
        }
        found.sort();
        Ok(found)
    }

    pub fn latest_checkpoint(&self) -> Result<Option<(usize, PathBuf)>, EngineError> {
        Ok(self.checkpoints()?.pop())
    }

    pub fn write_stats(&self, stats: &[GenerationStats]) -> Result<(), EngineError> {
        let mut buf = Vec::new();
        write_stats_header(&mut buf)?;
        write_stats_rows(&mut buf, stats)?;
        write_atomic(&self.stats_path(), &buf)
    }

    pub fn write_best(&self, nd: &NetworkDescriptor) -> Result<(), EngineError> {
        write_atomic(&self.root.join("best_descriptor.txt"), render(nd).as_bytes())?;
        let mut json = serde_json::to_string_pretty(&export_json(nd)).expect("json value");
        json.push('\n');
        write_atomic(&self.root.join("best_descriptor.json"), json.as_bytes())
    }

    /// Persists one completed generation and returns the checkpoint path.
    pub fn record(&self, engine: &Engine<'_>, hash: &str, state: &EngineState) -> Result<PathBuf, EngineError> {
        let path = self.checkpoint_path(state.generation);
        Checkpoint {
            config_hash: hash.to_string(),
            state: state.clone(),
        }
        .save(&path)?;
        self.write_stats(&state.stats)?;
        self.write_best(&engine.decode(&state.best)?)?;
        Ok(path)
    }
}

/// Runs an evolution persisting every generation into `dir`.
///
/// With `resume` the latest checkpoint is loaded (its hash must match the
/// engine's setup) and the run continues from there; stats are rewritten
/// from the checkpoint so they never hold rows past it. `stop_after` ends
/// the run once that generation is complete, as an interruption would.
pub fn run_in_directory(
    engine: &Engine<'_>,
    dir: &RunDirectory,
    resume: bool,
    stop_after: Option<usize>,
) -> Result<RunResult, EngineError> {
    let hash = engine.run_hash();
    let mut written = Vec::new();
    let mut state = if resume {
        let (_, path) = dir
            .latest_checkpoint()?
            .ok_or_else(|| EngineError::NoCheckpoint(dir.root().to_path_buf()))?;
        let state = Checkpoint::load(&path)?.into_state(&hash)?;
        dir.write_stats(&state.stats)?;
        state
    } else {
        dir.create()?;
        let state = engine.initialize()?;
        written.push(dir.record(engine, &hash, &state)?);
        state
    };
    if stop_after.is_none_or(|s| state.generation < s) {
        engine.run_from(&mut state, &mut |st| {
            written.push(dir.record(engine, &hash, st)?);
            Ok(stop_after.is_none_or(|s| st.generation < s))
        })?;
    }
    engine.result(&state, written)
}
