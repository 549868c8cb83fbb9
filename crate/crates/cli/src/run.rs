//! Per-run output directory, resolved settings and manifest.

use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::time::Instant;

use crate::config::{load_config, Resolver, UsageError};
use crate::GlobalArgs;

pub struct RunContext {
    pub command: String,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub omit_timing: bool,
    pub settings: Resolver,
    started: Instant,
}

impl RunContext {
    /// Reads the config file (if any), resolves the seed and creates the
    /// output directory (default `runs/<command>`).
    pub fn new(global: &GlobalArgs, command: &str, threads: usize) -> Result<Self, UsageError> {
        let file = match &global.config {
            Some(p) => load_config(p)?,
            None => Default::default(),
        };
        let mut settings = Resolver::new(file);
        let seed = settings.value("seed", global.seed, 0u64)?;
        let out_dir = global
            .out_dir
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(command.replace(' ', "-")));
        fs::create_dir_all(&out_dir)
            .map_err(|e| UsageError(format!("cannot create output directory {}: {e}", out_dir.display())))?;
        Ok(Self {
            command: command.to_string(),
            out_dir,
            seed,
            threads,
            omit_timing: global.omit_timing,
            settings,
            started: Instant::now(),
        })
    }

    /// `name` inside the output directory. Names with directory components
    /// are refused so nothing is written elsewhere.
    pub fn artifact(&self, name: &str) -> Result<PathBuf, UsageError> {
        let p = Path::new(name);
        let plain = p.components().count() == 1 && matches!(p.components().next(), Some(Component::Normal(_)));
        if !plain {
            return Err(UsageError(format!(
                "output name {name:?} must be a plain file name; use --out-dir to choose the directory"
            )));
        }
        Ok(self.out_dir.join(p))
    }

    /// Subdirectory of the output directory, created on demand.
    pub fn subdir(&self, name: &str) -> std::io::Result<PathBuf> {
        let p = self.out_dir.join(name);
        fs::create_dir_all(&p)?;
        Ok(p)
    }

    /// Writes `manifest.txt`: metadata as comments, then every resolved
    /// setting, so the file can be passed back through `--config`.
    pub fn write_manifest(&self) -> std::io::Result<PathBuf> {
        let path = self.out_dir.join("manifest.txt");
        let mut f = fs::File::create(&path)?;
        writeln!(f, "# command: inn {}", self.command)?;
        writeln!(f, "# version: {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(f, "# seed: {}", self.seed)?;
        writeln!(f, "# threads: {}", self.threads)?;
        writeln!(f, "# wall_ms: {}", self.started.elapsed().as_millis())?;
        for (k, v) in self.settings.resolved() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(path)
    }
}
