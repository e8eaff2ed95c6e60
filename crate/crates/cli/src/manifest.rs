use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Result;
use flexhull::model::SCHEMA_VERSION;
use flexhull::policies::Diagnostics;
use serde::{Deserialize, Serialize};

use crate::files::{absolute, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub schema: String,
    pub command: String,
    /// Parsed arguments; `rerun` replays these.
    pub arguments: serde_json::Value,
    pub inputs: Vec<InputFile>,
    pub settings: serde_json::Value,
    pub seed: u64,
    pub diagnostics: Vec<Diagnostics>,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub started_unix: f64,
    pub wall_seconds: f64,
    pub solve_seconds: f64,
    pub exit_code: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Accumulates a manifest while a command runs.
pub struct Run {
    manifest: RunManifest,
    path: Option<PathBuf>,
    clock: Instant,
}

impl Run {
    pub fn start() -> Self {
        let started = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        Run {
            manifest: RunManifest {
                tool: format!("flexhull {}", env!("CARGO_PKG_VERSION")),
                schema: SCHEMA_VERSION.to_string(),
                command: String::new(),
                arguments: serde_json::Value::Null,
                inputs: Vec::new(),
                settings: serde_json::Value::Null,
                seed: 0,
                diagnostics: Vec::new(),
                outputs: Vec::new(),
                warnings: Vec::new(),
                started_unix: started,
                wall_seconds: 0.0,
                solve_seconds: 0.0,
                exit_code: 0,
                error: None,
            },
            path: None,
            clock: Instant::now(),
        }
    }

    pub fn begin<A: Serialize>(&mut self, command: &str, args: &A, seed: u64, manifest: PathBuf) {
        self.manifest.command = command.to_string();
        self.manifest.arguments = serde_json::to_value(args).unwrap_or_default();
        self.manifest.seed = seed;
        self.path = Some(manifest);
    }

    pub fn settings<S: Serialize>(&mut self, settings: &S) {
        self.manifest.settings = serde_json::to_value(settings).unwrap_or_default();
    }

    pub fn input(&mut self, path: &Path, sha256: &str) {
        self.manifest.inputs.push(InputFile {
            path: absolute(path),
            sha256: sha256.to_string(),
        });
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(absolute(path));
    }

    pub fn diagnostics(&mut self, d: &Diagnostics, seconds: f64) {
        self.manifest.diagnostics.push(d.clone());
        self.manifest.solve_seconds += seconds;
    }

    pub fn warn(&mut self, msg: String) {
        eprintln!("warning: {msg}");
        self.manifest.warnings.push(msg);
    }

    /// Writes the manifest if the command got far enough to choose where.
    pub fn finish(mut self, code: u8, err: Option<anyhow::Error>) -> Result<()> {
        let Some(path) = self.path.take() else {
            return Ok(());
        };
        self.manifest.exit_code = code;
        self.manifest.error = err.map(|e| format!("{e:#}"));
        self.manifest.wall_seconds = self.clock.elapsed().as_secs_f64();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let text = serde_json::to_string_pretty(&self.manifest)?;
        write_atomic(&path, &(text + "\n"))
    }
}
