//! Evaluation of a directory of fused pairs laid out as `<id>_a.png`,
//! `<id>_b.png`, `<id>_fused.png`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use transfuse_core::loss::LossConfig;
use transfuse_core::metrics::{evaluate_pair, FusionReport};

use crate::error::{Error, Result};
use crate::io::{has_image_extension, load_image};

#[derive(Debug, Default)]
struct PairFiles {
    a: Option<PathBuf>,
    b: Option<PathBuf>,
    fused: Option<PathBuf>,
}

fn role_of(stem: &str) -> Option<(&str, &'static str)> {
    for role in ["_fused", "_a", "_b"] {
        if let Some(id) = stem.strip_suffix(role) {
            if !id.is_empty() {
                return Some((id, role));
            }
        }
    }
    None
}

/// Scores every pair in `dir`. Any image file outside the naming scheme, or
/// a pair missing one of its three files, is a layout error.
pub fn evaluate_dir(dir: &Path, cfg: &LossConfig) -> Result<FusionReport> {
    let mut pairs: BTreeMap<String, PairFiles> = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() || !has_image_extension(&path) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let Some((id, role)) = role_of(&stem) else {
            return Err(Error::Layout(format!("{} is not named <id>_a, <id>_b or <id>_fused", path.display())));
        };
        let slot = pairs.entry(id.to_string()).or_default();
        let target = match role {
            "_a" => &mut slot.a,
            "_b" => &mut slot.b,
            _ => &mut slot.fused,
        };
        if target.is_some() {
            return Err(Error::Layout(format!("pair {id} has two {} files", &role[1..])));
        }
        *target = Some(path);
    }
    if pairs.is_empty() {
        return Err(Error::Layout(format!("no image pairs in {}", dir.display())));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    for (id, files) in &pairs {
        let (Some(a), Some(b), Some(f)) = (&files.a, &files.b, &files.fused) else {
            return Err(Error::Layout(format!("pair {id} needs {id}_a, {id}_b and {id}_fused")));
        };
        let (a, b, f) = (load_image(a)?, load_image(b)?, load_image(f)?);
        rows.push(evaluate_pair(id, &f, &a, &b, cfg)?);
    }
    Ok(FusionReport::new(rows)?)
}

/// CSV and Markdown destinations for a report path: `x.csv` pairs with
/// `x.md`; a path without the `.csv` extension gets both appended.
pub fn report_paths(out: &Path) -> (PathBuf, PathBuf) {
    if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        (out.to_path_buf(), out.with_extension("md"))
    } else {
        let s = out.as_os_str().to_owned();
        let (mut csv, mut md) = (s.clone(), s);
        csv.push(".csv");
        md.push(".md");
        (csv.into(), md.into())
    }
}

pub fn write_report(report: &FusionReport, out: &Path) -> Result<(PathBuf, PathBuf)> {
    let (csv, md) = report_paths(out);
    fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
    fs::write(&md, report.to_markdown()).map_err(|e| Error::io(&md, e))?;
    Ok((csv, md))
}
