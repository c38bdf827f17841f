//! Command-line front end. `run` takes the full argument vector and returns
//! the process exit code.

pub mod args;
mod commands;
mod repl;

use std::ffi::OsString;
use std::fmt;
use std::path::{Component, Path, PathBuf};

use clap::{CommandFactory, Parser};
use serde::Serialize;
use xattr::report::Report;

use args::{Cli, Command, Invocation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_METHOD: i32 = 4;

/// Environment variable that replaces `--seed` when set.
pub const SEED_ENV: &str = "XATTR_SEED";

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn method(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_METHOD,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<xattr::Error> for Failure {
    fn from(e: xattr::Error) -> Self {
        match e {
            xattr::Error::Diverged { .. } => Failure::method(e.to_string()),
            _ => Failure::data(e.to_string()),
        }
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

/// The output directory of one run. Every write goes through here so no
/// file lands outside it.
pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: &Path) -> Outcome<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::data(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    /// `name` relative to the output directory; absolute paths and `..`
    /// are refused.
    pub fn path(&self, name: &str) -> Outcome<PathBuf> {
        let rel = Path::new(name);
        if name.is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(Failure::usage(format!("'{name}' must be a relative path inside the output directory")));
        }
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Failure::data(format!("cannot create {}: {e}", parent.display())))?;
        }
        Ok(path)
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Outcome<PathBuf> {
        let path = self.path(name)?;
        std::fs::write(&path, bytes).map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn report<T: Serialize>(&self, cmd: &Command, body: T) -> Outcome<()> {
        let report = Report::new(cmd.name(), cmd.seed(), cmd, body)?;
        self.write("report.json", report.to_json()?)?;
        Ok(())
    }
}

/// Fills in the seed and makes input paths absolute. Missing inputs are a
/// data error.
pub fn resolve(mut cmd: Command, env_seed: Option<&str>) -> Outcome<Command> {
    if let Some(slot) = cmd.seed_mut() {
        if let Some(text) = env_seed {
            let seed = text
                .trim()
                .parse()
                .map_err(|_| Failure::usage(format!("{SEED_ENV}={text:?} is not an unsigned integer")))?;
            *slot = Some(seed);
        } else if slot.is_none() {
            *slot = Some(0);
        }
    }
    for p in cmd.paths_mut() {
        *p = std::fs::canonicalize(&*p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
    }
    Ok(cmd)
}

pub fn config_json(cmd: &Command) -> Outcome<String> {
    let mut s = serde_json::to_string_pretty(cmd).map_err(xattr::Error::from)?;
    s.push('\n');
    Ok(s)
}

/// Runs a resolved command, writing `config.json` and its outputs to `out`.
pub fn execute(cmd: &Command, out: &Path) -> Outcome<()> {
    let out = Output::new(out)?;
    out.write("config.json", config_json(cmd)?)?;
    commands::dispatch(cmd, &out)
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    if argv.len() <= 1 {
        eprintln!("{}", Cli::command().render_long_help());
        return EXIT_USAGE;
    }
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let resolved = match cli.command {
        Invocation::Run(cmd) => resolve(cmd, std::env::var(SEED_ENV).ok().as_deref()),
        // a saved config is already resolved; only paths are rechecked
        Invocation::Rerun { config } => load_config(&config).and_then(|c| resolve(c, None)),
    };
    let outcome = resolved.and_then(|cmd| execute(&cmd, &cli.out));
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}

fn load_config(path: &Path) -> Outcome<Command> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}
