//! Small file-writing helpers shared by every artifact emitter: atomic
//! writes and the one float format all CSV output uses.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Writes `bytes` to `path` atomically: the content lands in a temporary
/// file in the same directory and is renamed into place, so readers never
/// observe a partially written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path)
        .map_err(|e| crate::error::Error::Io(e.error))?;
    Ok(())
}

/// Formats a float with nine significant digits in scientific notation —
/// compact, locale-independent, and stable across platforms.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        // No stray temporaries left behind.
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn float_formatting_has_nine_significant_digits() {
        assert_eq!(fmt_float(0.5), "5.00000000e-1");
        assert_eq!(fmt_float(1.0), "1.00000000e0");
        assert_eq!(fmt_float(-123.456), "-1.23456000e2");
        assert_eq!(fmt_float(0.0), "0.00000000e0");
        assert_eq!(fmt_float(1.0e-10), "1.00000000e-10");
    }
}
