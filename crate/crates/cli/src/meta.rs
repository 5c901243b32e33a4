use std::fmt::{Display, Write as _};
use std::path::{Path, PathBuf};

use anyhow::Context;
use flowguard_core::container::FORMAT_VERSION;
use flowguard_core::evalkit::config_fingerprint;
use flowguard_core::features::FEATURE_SCHEMA_VERSION;

/// Run record written next to a command's outputs as
/// `run_meta_<command>.txt`. Paths are left out so the same run in another
/// directory produces the same file.
pub struct RunMeta {
    command: &'static str,
    seed: u64,
    settings: Vec<(String, String)>,
    outputs: Vec<String>,
}

impl RunMeta {
    pub fn new(command: &'static str, seed: u64) -> Self {
        RunMeta {
            command,
            seed,
            settings: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.settings.push((key.to_string(), value.to_string()));
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        let name = path.file_name().map_or_else(
            || path.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        );
        self.outputs.push(name);
        self
    }

    fn canonical(&self) -> String {
        let mut s = format!("command={}\nseed={}\n", self.command, self.seed);
        for (k, v) in &self.settings {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn fingerprint(&self) -> String {
        config_fingerprint(&self.canonical())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tool=flowguard");
        let _ = writeln!(s, "tool_version={}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "container_format={FORMAT_VERSION}");
        let _ = writeln!(s, "feature_schema={FEATURE_SCHEMA_VERSION}");
        let _ = writeln!(s, "command={}", self.command);
        let _ = writeln!(s, "seed={}", self.seed);
        for (k, v) in &self.settings {
            let _ = writeln!(s, "config.{k}={v}");
        }
        let _ = writeln!(s, "config_fingerprint={}", self.fingerprint());
        let _ = writeln!(s, "outputs={}", self.outputs.join(","));
        s
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(format!("run_meta_{}.txt", self.command.replace('-', "_")));
        std::fs::write(&path, self.render()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
