//! Experiment configuration: defaults, JSON config files, and flag
//! merging. Flags given on the command line win over config-file values,
//! which win over the built-in defaults.

use serde::Deserialize;
use treetower::perm::PermGroupSpec;
use treetower::words::FreeWord;

#[derive(Clone, Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub group: Option<String>,
    pub arity: Option<usize>,
    pub rank: Option<usize>,
    pub words: Option<Vec<String>>,
    pub depth: Option<usize>,
    pub k: Option<usize>,
    pub trunc: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub samples: Option<usize>,
    pub out: Option<String>,
    pub jobs: Option<usize>,
}

/// Fully resolved experiment parameters.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub group_kind: String,
    pub arity: usize,
    pub rank: usize,
    pub word_texts: Vec<String>,
    pub depth: usize,
    pub k: usize,
    pub trunc: usize,
    pub seeds: Vec<u64>,
    pub samples: usize,
    pub out: Option<String>,
    pub jobs: usize,
    /// Optional edge-list CSV export path (tower).
    pub edges: Option<String>,
}

impl Experiment {
    pub fn group(&self) -> Result<PermGroupSpec, String> {
        match self.group_kind.as_str() {
            "cyclic" => PermGroupSpec::cyclic(self.arity).map_err(|e| e.to_string()),
            "sym" => PermGroupSpec::symmetric(self.arity).map_err(|e| e.to_string()),
            other => Err(format!("unknown group kind '{other}' (expected sym or cyclic)")),
        }
    }

    pub fn words(&self) -> Result<Vec<FreeWord>, String> {
        self.word_texts
            .iter()
            .map(|t| FreeWord::parse(t, self.rank).map_err(|e| e.to_string()))
            .collect()
    }
}

pub fn parse_seed_list(text: &str) -> Result<Vec<u64>, String> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("bad seed '{t}': {e}")))
        .collect()
}

pub fn parse_word_list(text: &str) -> Vec<String> {
    if text.trim().is_empty() {
        return Vec::new();
    }
    text.split(',').map(|t| t.trim().to_string()).collect()
}
