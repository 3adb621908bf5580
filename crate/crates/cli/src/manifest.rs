use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use spa_core::SpaError;

#[derive(Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

/// Record of one command invocation. `config` holds every effective flag
/// value, so `spa <cmd> --config <manifest>` repeats the run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub timings: Vec<StageTiming>,
    pub flags: BTreeMap<String, Value>,
}

pub struct Run {
    manifest: RunManifest,
    path: Option<PathBuf>,
}

impl Run {
    pub fn new(command: &str, config: BTreeMap<String, String>) -> Self {
        Self {
            manifest: RunManifest {
                tool: "spa",
                version: env!("CARGO_PKG_VERSION"),
                command: command.to_owned(),
                config,
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings: Vec::new(),
                flags: BTreeMap::new(),
            },
            path: None,
        }
    }

    /// Manifest destination; a later call does not override an earlier one.
    pub fn manifest_at(&mut self, path: PathBuf) {
        self.path.get_or_insert(path);
    }

    pub fn input(&mut self, p: &Path) {
        self.manifest.inputs.push(p.display().to_string());
    }

    pub fn output(&mut self, p: &Path) {
        self.manifest.outputs.push(p.display().to_string());
    }

    pub fn flag(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("manifest values serialize");
        self.manifest.flags.insert(key.to_owned(), v);
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.manifest.timings.push(StageTiming {
            stage: name.to_owned(),
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
        out
    }

    pub fn finish(self) -> Result<(), SpaError> {
        match &self.path {
            Some(p) => write_json(p, &self.manifest),
            None => Ok(()),
        }
    }
}

/// `<file>.manifest.json` next to an output file.
pub fn beside(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), SpaError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON output serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| SpaError::Io {
        path: path.to_owned(),
        source,
    })
}
