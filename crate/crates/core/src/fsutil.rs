use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8], context: &str) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::param(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    res.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, context, e)
    })
}

pub fn read_to_string(path: &Path, context: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, context, e))
}

pub fn read_bytes(path: &Path, context: &str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, context, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T, context: &str) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes(), context)
}
