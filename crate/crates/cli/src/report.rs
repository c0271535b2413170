use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use dispatch_core::eval::{read_points_csv, write_points_csv};
use dispatch_core::{DispatchError, EvalPoint};

use crate::{ensure_dir, write_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Gnuplot,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Gnuplot => "dat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
pub struct ReportArgs {
    /// Front file: JSON when the extension is `.json`, CSV otherwise.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
    /// Write `front.<ext>` here instead of printing to stdout.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn read_front(path: &Path) -> Result<Vec<EvalPoint>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| {
            DispatchError::Parse {
                what: format!("front file {}", path.display()),
                value: e.to_string(),
            }
            .into()
        })
    } else {
        Ok(read_points_csv(text.as_bytes())?)
    }
}

/// One gnuplot data block: `mflops accuracy "tag"` rows sorted by MFLOPs.
pub fn render_gnuplot_block(series: &str, points: &[EvalPoint]) -> String {
    let mut sorted: Vec<&EvalPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.mflops_per_image.total_cmp(&b.mflops_per_image));
    let mut out = format!("# {series}\n# mflops_per_image accuracy tag\n");
    for p in sorted {
        let _ = writeln!(out, "{} {} \"{}\"", p.mflops_per_image, p.accuracy, p.tag);
    }
    out
}

pub fn render(points: &[EvalPoint], format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            write_points_csv(points, &mut buf)?;
            String::from_utf8(buf).context("csv output is not UTF-8")?
        }
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(points)?;
            text.push('\n');
            text
        }
        ReportFormat::Gnuplot => render_gnuplot_block("front", points),
    })
}

/// Converts a front file. Returns the rendered text and, when written to
/// disk, the output file name.
pub fn cmd_report(args: &ReportArgs) -> Result<(String, Option<String>)> {
    let points = read_front(&args.input)?;
    let text = render(&points, args.format)?;
    match &args.out_dir {
        Some(dir) => {
            ensure_dir(dir)?;
            let name = format!("front.{}", args.format.extension());
            write_text(&dir.join(&name), &text)?;
            Ok((text, Some(name)))
        }
        None => Ok((text, None)),
    }
}
