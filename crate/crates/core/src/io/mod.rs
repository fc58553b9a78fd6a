//! Run configuration, binary snapshot and basis files, trajectory CSV.

pub mod binary;
pub mod config;
pub mod trajectory;

pub use binary::*;
pub use config::*;
pub use trajectory::*;

use std::path::Path;

use crate::error::Result;

/// I/O errors that name the file.
fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> crate::Error + '_ {
    move |e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into()
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(with_path(path))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(with_path(path))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(with_path(path))
}
