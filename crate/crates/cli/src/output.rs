//! Output files. Every file carries the tool version, the effective
//! configuration and its hash: CSV as leading `#` lines, JSON as a `meta`
//! object, SVG as an XML comment.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Formats {
    pub fn parse(list: &str) -> Result<Self> {
        let mut f = Formats {
            csv: false,
            json: false,
            svg: false,
        };
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "csv" => f.csv = true,
                "json" => f.json = true,
                "svg" => f.svg = true,
                other => return Err(CliError::Config(format!("unknown output format '{other}'"))),
            }
        }
        if !(f.csv || f.json || f.svg) {
            return Err(CliError::Config("no output format selected".into()));
        }
        Ok(f)
    }
}

/// Destination directory plus the provenance stamped on each file.
pub struct Sink {
    dir: PathBuf,
    command: String,
    preset: String,
    config: RunConfig,
    hash: String,
    pub formats: Formats,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, command: &str, preset: &str, config: &RunConfig, formats: Formats) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            preset: preset.to_string(),
            hash: config.sha256(),
            config: config.clone(),
            formats,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("hdblind {VERSION}"),
            format!("command: {}", self.command),
            format!("preset: {}", self.preset),
            format!("seed: {}", self.config.sim.seed),
            format!("config_sha256: {}", self.hash),
        ];
        lines.extend(
            self.config
                .canonical_lines()
                .into_iter()
                .map(|l| format!("config: {l}")),
        );
        lines
    }

    fn meta(&self) -> Value {
        let config: serde_json::Map<String, Value> = self.config.flatten().into_iter().collect();
        json!({
            "tool": "hdblind",
            "version": VERSION,
            "command": self.command,
            "preset": self.preset,
            "seed": self.config.sim.seed,
            "config_sha256": self.hash,
            "config": config,
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        log::info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }

    /// Writes `rows` under a header row of `columns`.
    pub fn csv<R: Serialize>(&mut self, name: &str, columns: &[&str], rows: &[R]) -> Result<()> {
        if !self.formats.csv {
            return Ok(());
        }
        let mut buf = Vec::new();
        for line in self.header_lines() {
            writeln!(buf, "# {line}").expect("write to memory");
        }
        {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut buf);
            let err = |e: csv::Error| CliError::Numerical(format!("csv encoding failed: {e}"));
            w.write_record(columns).map_err(err)?;
            for row in rows {
                w.serialize(row).map_err(err)?;
            }
            w.flush().map_err(|e| CliError::io(self.dir.join(name), e))?;
        }
        self.write(name, &buf)
    }

    /// Writes `{ "meta": ..., <body fields> }`.
    pub fn json<B: Serialize>(&mut self, name: &str, body: &B) -> Result<()> {
        if !self.formats.json {
            return Ok(());
        }
        let mut doc = serde_json::Map::new();
        doc.insert("meta".into(), self.meta());
        match serde_json::to_value(body).map_err(|e| CliError::Numerical(e.to_string()))? {
            Value::Object(fields) => doc.extend(fields),
            other => {
                doc.insert("result".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("json encodes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn svg(&mut self, name: &str, document: &str) -> Result<()> {
        if !self.formats.svg {
            return Ok(());
        }
        let comment: String = self
            .header_lines()
            .iter()
            .map(|l| format!("  {}\n", l.replace("--", "- -")))
            .collect();
        let text = document.replacen("\n", &format!("\n<!--\n{comment}-->\n"), 1);
        self.write(name, text.as_bytes())
    }
}

#[cfg(test)]
/// Splits a file's leading `#` header from its CSV body.
pub fn csv_body(text: &str) -> &str {
    let mut rest = text;
    while rest.starts_with('#') {
        rest = rest.split_once('\n').map_or("", |(_, tail)| tail);
    }
    rest
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_parse() {
        assert_eq!(
            Formats::parse("csv").unwrap(),
            Formats {
                csv: true,
                json: false,
                svg: false
            }
        );
        assert_eq!(
            Formats::parse("csv,svg,json").unwrap(),
            Formats {
                csv: true,
                json: true,
                svg: true
            }
        );
        assert!(Formats::parse("png").is_err());
        assert!(Formats::parse("").is_err());
    }

    #[test]
    fn header_is_stripped() {
        assert_eq!(csv_body("# a\n# b\nx,y\n1,2\n"), "x,y\n1,2\n");
        assert_eq!(csv_body("x\n"), "x\n");
    }
}
