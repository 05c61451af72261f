use std::io::Write;
use std::path::Path;

use serde_json::Value as Json;

use crate::{invalid, Failure};

pub fn pretty(doc: &Json) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("documents serialize");
    text.push('\n');
    text
}

/// Writes through a sibling temp file and a rename, so readers never see a
/// partial document.
pub fn write_atomic(path: &Path, text: &str) -> Result<(), Failure> {
    let fail = |e: std::io::Error| invalid(format!("{}: {e}", path.display()));
    let name = path
        .file_name()
        .ok_or_else(|| invalid(format!("{}: not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(fail)?;
    f.write_all(text.as_bytes()).and_then(|_| f.sync_all()).map_err(fail)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        std::fs::remove_file(&tmp).ok();
        fail(e)
    })
}

/// To `out` when given, stdout otherwise.
pub fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write_atomic(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
