use std::path::{Path, PathBuf};

use qdt_core::{average_fidelity, DiagonalPovm, FidelityReport};
use serde_json::json;

use crate::error::CliResult;
use crate::manifest::{relative_path, OutputDir, RunManifest};
use crate::matrix_io::read_matrix;

pub const REPORT_FILE: &str = "fidelity.json";

/// Compares two diagonal POVM files column by column.
pub fn fidelity(estimate: &Path, truth: &Path, out_dir: &Path) -> CliResult<(PathBuf, FidelityReport)> {
    let est = DiagonalPovm::new(read_matrix(estimate)?)?;
    let tru = DiagonalPovm::new(read_matrix(truth)?)?;
    let report = average_fidelity(&est, &tru)?;

    let mut out = OutputDir::create(out_dir)?;
    out.json(REPORT_FILE, &report)?;
    let mut manifest = RunManifest::new("fidelity", None);
    manifest.results = Some(json!({
        "estimate": relative_path(estimate, out_dir)?,
        "truth": relative_path(truth, out_dir)?,
        "average": report.average,
    }));
    let path = out.finish(manifest)?;
    Ok((path, report))
}
