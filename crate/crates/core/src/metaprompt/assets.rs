//! Driver templates and demonstration banks. Bundled copies ship in
//! the binary; a config-pointed directory can override them. Every
//! asset's content hash is exposed for episode traces.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::metaprompt::TaskKind;
use crate::provider::sha256_hex;

/// A curated input/expected-output pair shown to the actor model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demonstration {
    pub priority: u32,
    #[serde(default)]
    pub title: String,
    pub input: String,
    pub expected: Value,
}

const FILE_NAMES: [&str; 7] = [
    "best_practice.txt",
    "clarity.txt",
    "feedback_critique.txt",
    "feedback_rewrite.txt",
    "fewshot_header.txt",
    "demos/schema_build.json",
    "demos/data_extract.json",
];

#[derive(Debug, Clone)]
pub struct DriverAssets {
    pub best_practice: String,
    pub clarity: String,
    pub feedback_critique: String,
    pub feedback_rewrite: String,
    pub fewshot_header: String,
    schema_demos: Vec<Demonstration>,
    data_demos: Vec<Demonstration>,
    hashes: BTreeMap<String, String>,
}

impl DriverAssets {
    /// The copies compiled into the binary.
    pub fn bundled() -> Self {
        Self::from_parts([
            include_str!("../../assets/metaprompt/best_practice.txt"),
            include_str!("../../assets/metaprompt/clarity.txt"),
            include_str!("../../assets/metaprompt/feedback_critique.txt"),
            include_str!("../../assets/metaprompt/feedback_rewrite.txt"),
            include_str!("../../assets/metaprompt/fewshot_header.txt"),
            include_str!("../../assets/metaprompt/demos/schema_build.json"),
            include_str!("../../assets/metaprompt/demos/data_extract.json"),
        ])
        .expect("bundled meta-prompt assets are valid")
    }

    /// Loads the same file set from a directory, for edited templates.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut raw = Vec::with_capacity(FILE_NAMES.len());
        for name in FILE_NAMES {
            let path = dir.join(name);
            raw.push(std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?);
        }
        let refs: [&str; 7] = [
            &raw[0], &raw[1], &raw[2], &raw[3], &raw[4], &raw[5], &raw[6],
        ];
        Self::from_parts(refs)
    }

    fn from_parts(raw: [&str; 7]) -> Result<Self> {
        let mut hashes = BTreeMap::new();
        for (name, content) in FILE_NAMES.iter().zip(raw.iter()) {
            hashes.insert(name.to_string(), sha256_hex(content.as_bytes()));
        }
        for (name, content) in FILE_NAMES.iter().take(5).zip(raw.iter()) {
            if content.trim().is_empty() {
                return Err(Error::Config(format!("driver template {name} is empty")));
            }
        }
        Ok(DriverAssets {
            best_practice: raw[0].to_string(),
            clarity: raw[1].to_string(),
            feedback_critique: raw[2].to_string(),
            feedback_rewrite: raw[3].to_string(),
            fewshot_header: raw[4].trim_end().to_string(),
            schema_demos: parse_bank(raw[5], "demos/schema_build.json")?,
            data_demos: parse_bank(raw[6], "demos/data_extract.json")?,
            hashes,
        })
    }

    /// Curated demonstrations for a task, in priority order.
    pub fn demonstrations(&self, kind: TaskKind) -> &[Demonstration] {
        match kind {
            TaskKind::SchemaBuild => &self.schema_demos,
            TaskKind::DataExtract => &self.data_demos,
        }
    }

    /// Asset file name -> content hash, for reproducibility records.
    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }
}

fn parse_bank(raw: &str, name: &str) -> Result<Vec<Demonstration>> {
    let mut demos: Vec<Demonstration> =
        serde_json::from_str(raw).map_err(|e| Error::parse_json(name, &e))?;
    if demos.len() < 3 {
        return Err(Error::Config(format!(
            "demonstration bank {name} has {} demos, need at least 3",
            demos.len()
        )));
    }
    if demos.iter().any(|d| d.input.trim().is_empty()) {
        return Err(Error::Config(format!("demonstration bank {name} has an empty input")));
    }
    demos.sort_by_key(|d| d.priority);
    Ok(demos)
}
