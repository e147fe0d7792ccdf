use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::engine::RunTrace;
use crate::error::{Error, Result};

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn trace_csv(trace: &RunTrace) -> String {
    let mut out = String::from("global_step,epoch,f,grad_norm_sq,dist_to_opt,x_norm\n");
    for s in &trace.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.global_step,
            s.epoch,
            s.f,
            s.grad_norm_sq,
            opt(s.dist_to_opt),
            s.x_norm
        );
    }
    out
}

pub fn epochs_csv(trace: &RunTrace) -> String {
    let mut out = String::from("epoch,f,grad_norm_sq,V_t,sigma_star_sq\n");
    for e in &trace.epochs {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.epoch,
            e.f,
            e.grad_norm_sq,
            e.v_t,
            opt(e.sigma_star_sq)
        );
    }
    out
}
