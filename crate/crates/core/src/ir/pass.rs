//! Pass manager: parses textual pipelines and runs passes on a copy of the
//! module, verifying after every step.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::{verify_module, Diagnostic, Module};

/// Failure reported by a single pass.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{message}")]
pub struct PassError {
    pub message: String,
}

impl PassError {
    pub fn new(message: impl Into<String>) -> Self {
        PassError { message: message.into() }
    }
}

#[derive(Debug, Clone, Error)]
pub enum PipelineError {
    #[error("malformed pipeline: {0}")]
    Syntax(String),
    #[error("unknown pass '{0}'")]
    UnknownPass(String),
    #[error("pass '{pass}' rejected option '{option}'")]
    UnknownOption { pass: String, option: String },
    #[error("pass '{pass}' failed: {error}")]
    PassFailed { pass: String, error: PassError },
    #[error("module does not verify after '{pass}':\n{}", join_diags(.diagnostics))]
    Verification { pass: String, diagnostics: Vec<Diagnostic> },
}

fn join_diags(d: &[Diagnostic]) -> String {
    d.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

/// `key=value` options of one pipeline entry.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PassOptions {
    values: BTreeMap<String, String>,
}

impl PassOptions {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.values.insert(key.into(), value.into());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool, PassError> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(other) => Err(PassError::new(format!("option {key} expects a boolean, got '{other}'"))),
        }
    }

    pub fn get_i64(&self, key: &str) -> Result<Option<i64>, PassError> {
        self.get(key)
            .map(|s| s.parse::<i64>().map_err(|_| PassError::new(format!("option {key} expects an integer, got '{s}'"))))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassSpec {
    pub name: String,
    pub options: PassOptions,
}

impl fmt::Display for PassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for (k, v) in &self.options.values {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Parses `"a,b opt=1,c{x=2 y=3}"`. Entries are comma-separated; options
/// follow the name either space-separated or inside braces.
pub fn parse_pipeline(text: &str) -> Result<Vec<PassSpec>, PipelineError> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut entries = Vec::new();
    for (i, c) in text.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth = depth.checked_sub(1).ok_or_else(|| PipelineError::Syntax("unbalanced '}'".into()))?;
            }
            ',' if depth == 0 => {
                entries.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(PipelineError::Syntax("unbalanced '{'".into()));
    }
    entries.push(&text[start..]);
    for entry in entries {
        let entry = entry.trim();
        if entry.is_empty() {
            continue;
        }
        let normalized = entry.replace(['{', '}'], " ");
        let mut words = normalized.split_whitespace();
        let name = words.next().unwrap().to_string();
        let mut options = PassOptions::default();
        for w in words {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| PipelineError::Syntax(format!("option '{w}' of '{name}' is not key=value")))?;
            options.set(k, v);
        }
        out.push(PassSpec { name, options });
    }
    Ok(out)
}

pub type PassFn = fn(&mut Module, &PassOptions) -> Result<(), PassError>;

pub struct PassInfo {
    pub name: &'static str,
    pub options: &'static [&'static str],
    pub run: PassFn,
    pub summary: &'static str,
}

#[derive(Default)]
pub struct PassRegistry {
    passes: BTreeMap<&'static str, PassInfo>,
}

impl PassRegistry {
    pub fn register(&mut self, info: PassInfo) {
        self.passes.insert(info.name, info);
    }

    pub fn get(&self, name: &str) -> Option<&PassInfo> {
        self.passes.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &&'static str> {
        self.passes.keys()
    }

    /// Runs `pipeline` on a copy of `m`. The input is never modified; on
    /// failure the caller still holds the original module.
    pub fn run(&self, m: &Module, pipeline: &[PassSpec]) -> Result<Module, PipelineError> {
        let mut resolved = Vec::with_capacity(pipeline.len());
        for spec in pipeline {
            let info = self.get(&spec.name).ok_or_else(|| PipelineError::UnknownPass(spec.name.clone()))?;
            if let Some(bad) = spec.options.keys().find(|k| !info.options.contains(k)) {
                return Err(PipelineError::UnknownOption { pass: spec.name.clone(), option: bad.to_string() });
            }
            resolved.push((info, spec));
        }
        let mut work = m.clone();
        for (info, spec) in resolved {
            (info.run)(&mut work, &spec.options)
                .map_err(|error| PipelineError::PassFailed { pass: spec.name.clone(), error })?;
            verify_module(&work)
                .map_err(|diagnostics| PipelineError::Verification { pass: spec.name.clone(), diagnostics })?;
        }
        Ok(work)
    }
}
