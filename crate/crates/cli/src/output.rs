use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;

/// Collects a command's report and tables and writes them out.
pub struct Output {
    command: String,
    dir: Option<PathBuf>,
}

impl Output {
    pub fn new(command: &str, dir: Option<PathBuf>) -> Self {
        Self { command: command.to_string(), dir }
    }

    /// Prints the JSON report; with an output directory also writes it and each table.
    pub fn emit<C: Serialize>(&self, config: &C, result: Value, tables: &[(&str, String)]) -> Result<(), CliError> {
        let mut files = Vec::new();
        if let Some(dir) = &self.dir {
            std::fs::create_dir_all(dir).map_err(|e| CliError::user(format!("{}: {e}", dir.display())))?;
            for (name, text) in tables {
                let path = dir.join(name);
                std::fs::write(&path, text).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
                files.push(name.to_string());
            }
        }
        let report = json!({
            "schema_version": ercce::SCHEMA_VERSION,
            "command": self.command,
            "config": config,
            "result": result,
            "files": files,
        });
        let text = ercce::io::to_json(&report)?;
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{}.json", self.command));
            std::fs::write(&path, &text).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        }
        print!("{text}");
        Ok(())
    }
}

/// Reads an input file, attributing failures to the path.
pub fn read_input(path: &std::path::Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))
}
