use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::Scheme;
use super::metrics::records_to_csv;
use super::runner::{Diagnostics, RunOutput};
use crate::error::{Error, Result};

/// Environment variable that redirects relative output paths.
pub const OUTPUT_DIR_ENV: &str = "MMFL_OUTPUT_DIR";

/// `path` itself when absolute or when the override is unset, otherwise
/// `path` under the override directory.
pub fn resolve_output(path: &Path, override_dir: Option<&Path>) -> PathBuf {
    match override_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

pub fn output_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Metrics of every scheme in one CSV.
pub fn metrics_csv(runs: &[(Scheme, RunOutput)]) -> String {
    let all: Vec<_> = runs.iter().flat_map(|(_, o)| o.records.iter().cloned()).collect();
    records_to_csv(&all)
}

pub fn write_metrics(path: &Path, runs: &[(Scheme, RunOutput)]) -> Result<()> {
    write_file(path, &metrics_csv(runs))
}

fn diagnostics_files(scheme: Scheme, d: &Diagnostics) -> Vec<(String, String)> {
    let name = scheme.name();
    let mut files = Vec::new();
    if !d.bcd.is_empty() {
        let mut s = String::from("realization,frame,iteration,objective_p3,objective_p2\n");
        for (r, n, it, p3, p2) in &d.bcd {
            let _ = writeln!(s, "{r},{n},{it},{p3},{p2}");
        }
        files.push((format!("{name}_bcd_trace.csv"), s));
    }
    if !d.powers.is_empty() {
        let mut s = String::from(
            "realization,frame,round,group,model,alpha_sum,signal_power,interference_power,noise_power\n",
        );
        for (r, n, t, g, m, a, sp, ip, np) in &d.powers {
            let _ = writeln!(s, "{r},{n},{t},{},{m},{a},{sp},{ip},{np}", g + 1);
        }
        files.push((format!("{name}_powers.csv"), s));
    }
    if !d.bound.is_empty() {
        let mut s = String::from("realization,frame,model,h_n,g_n,c_n,gap_bound\n");
        for (r, n, m, h, g, c, gap) in &d.bound {
            let _ = writeln!(s, "{r},{n},{m},{h},{g},{c},{gap}");
        }
        files.push((format!("{name}_bound.csv"), s));
    }
    files
}

/// Write the diagnostics of every scheme into `dir`; returns the paths.
pub fn write_diagnostics(dir: &Path, runs: &[(Scheme, RunOutput)]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (scheme, out) in runs {
        for (file, text) in diagnostics_files(*scheme, &out.diagnostics) {
            let path = dir.join(file);
            write_file(&path, &text)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_only_moves_relative_paths() {
        let dir = Path::new("/tmp/out");
        assert_eq!(resolve_output(Path::new("a.csv"), Some(dir)), PathBuf::from("/tmp/out/a.csv"));
        assert_eq!(resolve_output(Path::new("/x/a.csv"), Some(dir)), PathBuf::from("/x/a.csv"));
        assert_eq!(resolve_output(Path::new("a.csv"), None), PathBuf::from("a.csv"));
    }
}
