use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use neurogram::engine::EvolutionConfig;
use neurogram::evaluator::{EvaluatorRegistry, FitnessEvaluator};
use neurogram::{parse_grammar, parse_structure, GaStructure, Grammar};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// A run configuration file. Relative paths resolve against the file's
/// directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub grammar_file: PathBuf,
    pub structure_file: PathBuf,
    pub out_dir: PathBuf,
    /// `{"kind": ..., ...}`, interpreted by the evaluator registry.
    pub evaluator: Value,
    #[serde(default)]
    pub evolution: EvolutionConfig,
}

/// Everything a run needs, loaded and validated.
pub struct Loaded {
    pub file: RunConfigFile,
    pub grammar: Grammar,
    pub structure: GaStructure,
    pub evaluator: Arc<dyn FitnessEvaluator>,
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    let joined = base.join(p);
    joined.canonicalize().unwrap_or(joined)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        let mut file: RunConfigFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = absolute(Path::new("."), base);
        file.grammar_file = absolute(&base, &file.grammar_file);
        file.structure_file = absolute(&base, &file.structure_file);
        file.out_dir = absolute(&base, &file.out_dir);
        // a dense evaluator's csv file is the only path inside the evaluator object
        if let Some(csv) = file.evaluator.pointer_mut("/dataset/csv") {
            if let Some(p) = csv.as_str() {
                *csv = Value::String(absolute(&base, Path::new(p)).display().to_string());
            }
        }
        Ok(file)
    }

    pub fn resolve(self) -> Result<Loaded, CliError> {
        let grammar = parse_grammar(&read(&self.grammar_file)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", self.grammar_file.display())))?;
        let structure = parse_structure(&read(&self.structure_file)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", self.structure_file.display())))?;
        let evaluator = EvaluatorRegistry::standard()
            .build(&self.evaluator, Path::new("."))
            .map_err(|e| CliError::Config(format!("evaluator: {e}")))?;
        Ok(Loaded {
            file: self,
            grammar,
            structure,
            evaluator,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
