//! File formats: binary field files, CSV, images and run manifests.

pub mod csv_field;
pub mod field_file;
pub mod image;
pub mod manifest;

use std::path::Path;

use crate::error::Result;

pub use field_file::{FieldFile, FieldKind};
pub use image::{write_image, Range};
pub use manifest::Manifest;

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a field, as CSV when the extension is `.csv` and as a binary field
/// file otherwise.
pub fn read_any(path: &Path) -> Result<FieldFile> {
    if is_csv(path) {
        csv_field::read_csv(path)
    } else {
        field_file::read_field(path)
    }
}

/// Writes a field, choosing the format from the extension like [`read_any`].
pub fn write_any(path: &Path, file: &FieldFile) -> Result<()> {
    if is_csv(path) {
        csv_field::write_csv(path, file)
    } else {
        field_file::write_field(path, file)
    }
}
