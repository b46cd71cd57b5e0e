//! File outputs shared by the workflows. Numbers are written in Rust's
//! shortest round-trip form, so identical results give identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use spatinla_core::marginal::{Marginal, Summary};

pub const SUMMARY_HEADER: [&str; 7] = ["name", "mean", "sd", "0.025quant", "0.5quant", "0.975quant", "mode"];
/// Points per marginal density curve.
pub const CURVE_POINTS: usize = 201;

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_summary(path: &Path, rows: &[(String, Summary)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(SUMMARY_HEADER)?;
    for (name, s) in rows {
        w.write_record([
            name.clone(),
            s.mean.to_string(),
            s.sd.to_string(),
            s.q025.to_string(),
            s.q50.to_string(),
            s.q975.to_string(),
            s.mode.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// File-name-safe version of a parameter name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

pub fn write_marginal(dir: &Path, name: &str, m: &Marginal) -> Result<()> {
    let path = dir.join(format!("marginal_{}.csv", slug(name)));
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["x", "density"])?;
    for (x, d) in m.curve(CURVE_POINTS) {
        w.write_record([x.to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_summary(&p, &[("intercept".into(), Marginal::gaussian(1.0, 0.5).summary())]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("name,mean,sd,0.025quant,0.5quant,0.975quant,mode"));
        let row: Vec<f64> = lines.next().unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(row[0], 1.0);
        assert!((row[2] - (1.0 - 1.959964 * 0.5)).abs() < 1e-5);
    }

    #[test]
    fn marginal_curve_has_201_points() {
        let dir = tempfile::tempdir().unwrap();
        write_marginal(dir.path(), "D_f:D_pb", &Marginal::gaussian(0.0, 2.0)).unwrap();
        let text = std::fs::read_to_string(dir.path().join("marginal_D_f_D_pb.csv")).unwrap();
        let xs: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(xs.len(), CURVE_POINTS);
        assert!((xs[0] + 10.0).abs() < 1e-9 && (xs[200] - 10.0).abs() < 1e-9);
    }
}
