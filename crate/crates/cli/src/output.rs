//! Atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Output directory; files appear only once fully written.
pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Writes to a temporary file in the same directory, then renames.
    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(|e| io_err(&self.root, e))?;
        tmp.write_all(bytes).map_err(|e| io_err(&path, e))?;
        tmp.as_file().sync_all().map_err(|e| io_err(&path, e))?;
        tmp.persist(&path).map_err(|e| io_err(&path, e.error))?;
        self.written.push(path);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// RFC 4180 CSV from a header and rows of already formatted fields.
    pub fn write_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
        for row in rows {
            w.write_record(row).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    #[cfg(test)]
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Log-log line plot of `y` against `x` with optional reference slope.
pub fn loglog_svg(title: &str, x: &[f64], y: &[f64], reference_slope: Option<f64>) -> String {
    let (w, h, pad) = (640.0, 420.0, 56.0);
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.log10(), b.log10()))
        .collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        escape(title)
    );
    if pts.len() < 2 {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (x0, x1) = bounds(pts.iter().map(|p| p.0));
    let (y0, y1) = bounds(pts.iter().map(|p| p.1));
    let sx = |v: f64| pad + (v - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - (v - y0) / (y1 - y0) * (h - 2.0 * pad);
    svg.push_str(&format!(
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
        w - 2.0 * pad,
        h - 2.0 * pad
    ));
    for d in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let px = sx(d as f64);
        svg.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">1e{d}</text>\n",
            h - pad + 16.0
        ));
    }
    for d in (y0.ceil() as i32)..=(y1.floor() as i32) {
        let py = sy(d as f64);
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{py:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">1e{d}</text>\n",
            pad - 6.0
        ));
    }
    let line: Vec<String> = pts
        .iter()
        .map(|(a, b)| format!("{:.2},{:.2}", sx(*a), sy(*b)))
        .collect();
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f4e9a\" stroke-width=\"2\"/>\n",
        line.join(" ")
    ));
    if let Some(s) = reference_slope {
        let (ax, ay) = *pts.last().unwrap();
        let bx = pts[0].0;
        let by = ay + s * (bx - ax);
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#b33\" stroke-dasharray=\"6 4\"/>\n",
            sx(bx),
            sy(by.clamp(y0, y1)),
            sx(ax),
            sy(ay)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_only_final_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(&dir.path().join("run")).unwrap();
        out.write_csv(
            "a.csv",
            &["x".into(), "y, z".into()],
            &[vec!["1".into(), "q\"uote".into()]],
        )
        .unwrap();
        let names: Vec<String> = std::fs::read_dir(out.root())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, vec!["a.csv".to_string()]);
        let text = std::fs::read_to_string(out.root().join("a.csv")).unwrap();
        assert_eq!(text, "x,\"y, z\"\n1,\"q\"\"uote\"\n");
    }

    #[test]
    fn svg_has_polyline() {
        let s = loglog_svg("t", &[1.0, 10.0, 100.0], &[1.0, 0.1, 0.01], Some(-1.0));
        assert!(s.contains("<polyline") && s.ends_with("</svg>\n"));
        assert_eq!(num(0.1), "0.1");
    }
}
