//! Result files: fixed-column CSV, JSON summaries, SVG sketches and the run
//! manifest that lists everything written into an output directory.

use crate::error::{Error, Result};
use crate::functionals::SurvivalCurve;
use crate::geometry::DomainModel;
use crate::lab::ResultTable;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const CONFIG_NAME: &str = "config.txt";

/// Decimal rendering with 12 significant digits. Magnitudes outside
/// [1e-6, 1e15) fall back to scientific notation with the same precision.
pub fn fmt12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if !(1e-6..1e15).contains(&a) {
        return format!("{x:.11e}");
    }
    // round first so that 9.99999999999995 does not print 13 digits
    let sci = format!("{x:.11e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (11 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Writer that keeps track of every file it creates, for the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let manifest = root.join(MANIFEST_NAME);
        if manifest.exists() {
            std::fs::remove_file(&manifest).map_err(|e| Error::io(&manifest, e))?;
        }
        Ok(OutputDir { root, files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<PathBuf> {
        if name == MANIFEST_NAME {
            return Err(Error::Integrity("the manifest is written by finish()".into()));
        }
        let path = self.root.join(name);
        std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Integrity(format!("serializing {name}: {e}")))?;
        self.write(name, &(text + "\n"))
    }

    /// Writes the manifest with checksums of every file written so far.
    pub fn finish(self, mut manifest: RunManifest) -> Result<PathBuf> {
        manifest.files.clear();
        for name in &self.files {
            let path = self.root.join(name);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            manifest.files.push(FileChecksum {
                name: name.clone(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        let path = self.root.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Integrity(format!("serializing manifest: {e}")))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileChecksum {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Full parameter echo, readable by the config parser.
    pub config: String,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileChecksum>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: String, started: std::time::SystemTime, elapsed: f64) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config,
            started_unix: started
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_clock_seconds: elapsed,
            files: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config {
            line: e.line(),
            msg: format!("manifest {}: {e}", path.display()),
        })
    }
}

/// CSV with a header row and one row per record.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub const SURVIVAL_HEADER: [&str; 4] = ["t", "survival", "ci_lo", "ci_hi"];

pub fn survival_csv(c: &SurvivalCurve) -> String {
    csv(
        &SURVIVAL_HEADER,
        (0..c.times.len()).map(|i| {
            vec![
                fmt12(c.times[i]),
                fmt12(c.survival[i]),
                fmt12(c.lower[i]),
                fmt12(c.upper[i]),
            ]
        }),
    )
}

pub const REGIME_HEADER: [&str; 24] = [
    "schedule",
    "level",
    "c_n",
    "h",
    "shell",
    "mean_lifetime",
    "mean_lifetime_stderr",
    "survival_at_probe",
    "survival_lo",
    "survival_hi",
    "killed",
    "absorbed",
    "killed_shallow",
    "ks_dirichlet",
    "ks_dirichlet_lo",
    "ks_dirichlet_hi",
    "ks_robin",
    "ks_robin_lo",
    "ks_robin_hi",
    "ks_neumann",
    "ks_neumann_lo",
    "ks_neumann_hi",
    "ks_critical",
    "paths",
];

pub fn regime_csv(tables: &[ResultTable]) -> String {
    let rows = tables.iter().flat_map(|t| t.rows.iter()).map(|r| {
        vec![
            r.schedule.clone(),
            r.level.to_string(),
            fmt12(r.c_n),
            fmt12(r.h),
            fmt12(r.shell),
            fmt12(r.mean_lifetime.mean),
            fmt12(r.mean_lifetime.stderr),
            fmt12(r.survival_at_probe),
            fmt12(r.survival_ci.0),
            fmt12(r.survival_ci.1),
            fmt12(r.killed_fraction),
            fmt12(r.absorbed_fraction),
            fmt12(r.killed_shallow_fraction),
            fmt12(r.ks_dirichlet),
            fmt12(r.ks_dirichlet_band.0),
            fmt12(r.ks_dirichlet_band.1),
            fmt12(r.ks_robin),
            fmt12(r.ks_robin_band.0),
            fmt12(r.ks_robin_band.1),
            fmt12(r.ks_neumann),
            fmt12(r.ks_neumann_band.0),
            fmt12(r.ks_neumann_band.1),
            fmt12(r.ks_critical),
            r.curve.n_paths.to_string(),
        ]
    });
    csv(&REGIME_HEADER, rows)
}

/// Snowflake polygon and fiber cells as x,y vertex rows; `part` is
/// `ring` for the snowflake and the cell index for fiber triangles.
pub fn vertices_csv(domain: &DomainModel) -> String {
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, p) in domain_ring(domain).iter().enumerate() {
        rows.push(vec!["ring".into(), i.to_string(), fmt12(p.x), fmt12(p.y)]);
    }
    for (c, cell) in domain.fiber_cells().iter().enumerate() {
        for (i, p) in cell.vertices().iter().enumerate() {
            rows.push(vec![format!("cell{c}"), i.to_string(), fmt12(p.x), fmt12(p.y)]);
        }
    }
    csv(&["part", "vertex", "x", "y"], rows)
}

fn domain_ring(domain: &DomainModel) -> Vec<crate::vec2::Vec2> {
    (0..domain.segment_count()).map(|i| domain.interface_segment(i).0).collect()
}

/// Sketch of the snowflake (filled) and its fiber layer (outlined).
pub fn geometry_svg(domain: &DomainModel, width_px: u32) -> String {
    let (lo, hi) = domain.bounding_box();
    let pad = 0.05 * (hi.x - lo.x).max(hi.y - lo.y);
    let (x0, y0) = (lo.x - pad, lo.y - pad);
    let (w, h) = (hi.x - lo.x + 2.0 * pad, hi.y - lo.y + 2.0 * pad);
    let height_px = (width_px as f64 * h / w).round() as u32;
    let s = width_px as f64 / w;
    // flip y so that the picture has the usual orientation
    let map = |p: crate::vec2::Vec2| ((p.x - x0) * s, (y0 + h - p.y) * s);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" height="{height_px}" viewBox="0 0 {width_px} {height_px}">"#
    );
    let _ = writeln!(
        out,
        "<!-- alpha = {}, level = {}, segments = {} -->",
        domain.alpha(),
        domain.level(),
        domain.segment_count()
    );
    let mut fiber = String::new();
    for cell in domain.fiber_cells() {
        let v = cell.vertices();
        let (a, b, c) = (map(v[0]), map(v[1]), map(v[2]));
        let _ = write!(
            fiber,
            "M{:.3} {:.3}L{:.3} {:.3}L{:.3} {:.3}Z",
            a.0, a.1, b.0, b.1, c.0, c.1
        );
    }
    let _ = writeln!(
        out,
        r##"<path d="{fiber}" fill="#f4c27a" stroke="#a0522d" stroke-width="0.5"/>"##
    );
    let pts: Vec<String> = domain_ring(domain)
        .into_iter()
        .map(|p| {
            let (x, y) = map(p);
            format!("{x:.3},{y:.3}")
        })
        .collect();
    let _ = writeln!(
        out,
        r##"<polygon points="{}" fill="#cfe3f7" stroke="#1f4e79" stroke-width="0.7"/>"##,
        pts.join(" ")
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::KillMode;
    use crate::functionals::survival_from_lifetimes;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt12(1.0), "1.00000000000");
        assert_eq!(fmt12(0.5231565837302468), "0.523156583730");
        assert_eq!(fmt12(-123.456), "-123.456000000");
        assert_eq!(fmt12(9.999999999999995), "10.0000000000");
        assert_eq!(fmt12(0.0), "0");
        assert_eq!(fmt12(1e-9), "1.00000000000e-9");
        assert_eq!(fmt12(f64::INFINITY), "inf");
        let s = fmt12(std::f64::consts::PI);
        assert_eq!(s.chars().filter(|c| c.is_ascii_digit()).count(), 12);
    }

    #[test]
    fn fifty_point_curve_has_fifty_rows() {
        let times: Vec<f64> = (1..=50).map(|i| i as f64 * 0.01).collect();
        let life: Vec<(f64, bool)> = (0..20).map(|i| (i as f64 * 0.03, false)).collect();
        let c = survival_from_lifetimes(&life, &times, 1.0, KillMode::ElasticClock).unwrap();
        let text = survival_csv(&c);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,survival,ci_lo,ci_hi");
        assert_eq!(lines.len(), 51);
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(regime_csv(&[]), REGIME_HEADER.join(",") + "\n");
        assert_eq!(csv(&["a", "b"], Vec::<Vec<String>>::new()), "a,b\n");
    }

    #[test]
    fn manifest_is_last_and_checksums_match() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write("a.csv", "x\n1\n").unwrap();
        assert!(out.write(MANIFEST_NAME, "{}").is_err());
        let m = RunManifest::new("test", 7, "seed = 7\n".into(), std::time::SystemTime::now(), 0.0);
        let path = out.finish(m).unwrap();
        let back = RunManifest::read(&path).unwrap();
        assert_eq!(back.files.len(), 1);
        assert_eq!(back.files[0].sha256, sha256_hex(b"x\n1\n"));
        assert_eq!(back.seed, 7);
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let d = DomainModel::build(3.0, 1, crate::geometry::max_fiber_b(3.0)).unwrap();
        let svg = geometry_svg(&d, 400);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches('Z').count(), 12);
        let v = vertices_csv(&d);
        assert_eq!(v.lines().count(), 1 + 12 + 36);
    }
}
