//! CSV and manifest output.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Token written where a probability fell below the representable floor.
pub const UNDERFLOW: &str = "underflow";

/// 17 significant digits.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        // `+ 0.0` folds −0 into 0.
        format!("{:.16e}", x + 0.0)
    }
}

pub fn rate(r: Option<f64>) -> String {
    r.map_or_else(|| UNDERFLOW.into(), num)
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), num)
}

/// Collects the files written by one run.
pub struct Outputs {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn manifest(&mut self, manifest: &serde_json::Value) -> Result<()> {
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(manifest)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -3.6675163322548, 1e-300, 2.0f64.sqrt()] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
        assert_eq!(rate(None), UNDERFLOW);
    }
}
