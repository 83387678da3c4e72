use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde_json::json;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

/// One finished artifact. Every rendering embeds the tool version, the base
/// seed and the resolved configuration, so reruns with an identical header
/// are byte-identical apart from wall-time fields.
pub struct Report {
    pub seed: u64,
    pub config: serde_json::Value,
    pub result: serde_json::Value,
    pub text: String,
    /// CSV payload; falls back to the text payload when a command has no
    /// natural tabular form.
    pub csv: Option<String>,
}

pub fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Json => {
            let doc = json!({
                "version": VERSION,
                "seed": report.seed,
                "config": report.config,
                "result": report.result,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("JSON value renders");
            s.push('\n');
            s
        }
        Format::Text => format!("{}{}", header(report), with_newline(&report.text)),
        Format::Csv => {
            let body = report.csv.as_deref().unwrap_or(&report.text);
            format!("{}{}", header(report), with_newline(body))
        }
    }
}

fn header(report: &Report) -> String {
    format!(
        "# steer {VERSION}\n# seed: {}\n# config: {}\n",
        report.seed, report.config
    )
}

fn with_newline(s: &str) -> String {
    if s.ends_with('\n') {
        s.to_string()
    } else {
        format!("{s}\n")
    }
}

pub fn write_artifact(out: Option<&Path>, content: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, content),
        None => std::io::stdout().lock().write_all(content.as_bytes()),
    }
}
