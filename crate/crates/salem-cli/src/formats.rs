//! File formats: system JSON (with exact-rational entries), measure grids
//! (pure JSON for small grids, JSON header + little-endian f64 block
//! otherwise), and CSV exports.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use salem_core::fractal::{FourierSample, GridDensity, GridMeasure};
use salem_core::linalg::{rat_from_f64, Rat};
use salem_core::linsys::MatrixSystem;

/// Grids up to this resolution are written as pure JSON.
const JSON_GRID_LIMIT: usize = 64;

// ---------------------------------------------------------------------------
// System files
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct SystemFile {
    n: usize,
    k: usize,
    m: usize,
    #[serde(rename = "B")]
    b: Vec<Vec<Vec<Value>>>,
}

/// Parses an entry that is a JSON number or an exact-rational string "p/q".
fn parse_entry(v: &Value) -> Result<Rat> {
    match v {
        Value::Number(x) => {
            let f = x.as_f64().ok_or_else(|| anyhow!("number {x} out of f64 range"))?;
            rat_from_f64(f).ok_or_else(|| anyhow!("non-finite entry {f}"))
        }
        Value::String(s) => {
            let (p, q) = match s.split_once('/') {
                Some((p, q)) => (p.trim(), q.trim()),
                None => (s.trim(), "1"),
            };
            let num: num_bigint::BigInt = p.parse().with_context(|| format!("bad numerator {p:?}"))?;
            let den: num_bigint::BigInt = q.parse().with_context(|| format!("bad denominator {q:?}"))?;
            if den == num_bigint::BigInt::from(0) {
                bail!("zero denominator in {s:?}");
            }
            Ok(Rat::new(num, den))
        }
        other => bail!("matrix entries must be numbers or \"p/q\" strings, got {other}"),
    }
}

/// Loads `{"n", "k", "m", "B": [row-major 2-D arrays]}`; entries may be
/// integers, decimals, or exact-rational strings.
pub fn load_system(path: &Path) -> Result<MatrixSystem> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: SystemFile = serde_json::from_str(&text).context("parsing system JSON")?;
    let mut exact: Vec<Vec<Vec<Rat>>> = Vec::with_capacity(file.b.len());
    for (j, mat) in file.b.iter().enumerate() {
        let mut rows = Vec::with_capacity(mat.len());
        for row in mat {
            let r: Result<Vec<Rat>> = row.iter().map(parse_entry).collect();
            rows.push(r.with_context(|| format!("in B[{j}]"))?);
        }
        exact.push(rows);
    }
    MatrixSystem::from_b_rational(file.n, file.k, file.m, &exact).map_err(|e| anyhow!("{e}"))
}

pub fn save_system(path: &Path, sys: &MatrixSystem) -> Result<()> {
    let b = sys.b_blocks().map_err(|e| anyhow!("{e}"))?;
    let blocks: Vec<Vec<Vec<f64>>> = b
        .iter()
        .map(|m| (0..m.rows()).map(|i| m.row(i).to_vec()).collect())
        .collect();
    let doc = serde_json::json!({"n": sys.n(), "k": sys.k(), "m": sys.m(), "B": blocks});
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Measure / density grids
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct GridHeader {
    n: usize,
    #[serde(rename = "N")]
    cells: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

fn write_grid(path: &Path, n: usize, cells: usize, kind: &str, data: &[f64]) -> Result<()> {
    if cells <= JSON_GRID_LIMIT {
        let header = GridHeader {
            n,
            cells,
            format: None,
            kind: Some(kind.to_string()),
            weights: Some(data.to_vec()),
        };
        fs::write(path, serde_json::to_string(&header)?)?;
    } else {
        let header = GridHeader {
            n,
            cells,
            format: Some("f64-le".to_string()),
            kind: Some(kind.to_string()),
            weights: None,
        };
        let mut f = fs::File::create(path)?;
        serde_json::to_writer(&mut f, &header)?;
        f.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(data.len() * 8);
        for &x in data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        f.write_all(&buf)?;
    }
    Ok(())
}

fn read_grid(path: &Path) -> Result<(usize, usize, String, Vec<f64>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    // pure JSON first
    if let Ok(h) = serde_json::from_slice::<GridHeader>(&bytes) {
        if let Some(w) = h.weights {
            return Ok((h.n, h.cells, h.kind.unwrap_or_else(|| "measure".into()), w));
        }
    }
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| anyhow!("missing header line in {}", path.display()))?;
    let h: GridHeader = serde_json::from_slice(&bytes[..nl]).context("parsing grid header")?;
    if h.format.as_deref() != Some("f64-le") {
        bail!("unknown grid format {:?}", h.format);
    }
    let blob = &bytes[nl + 1..];
    let expect = h.cells.pow(h.n as u32) * 8;
    if blob.len() != expect {
        bail!("grid block is {} bytes, expected {expect}", blob.len());
    }
    let data: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((h.n, h.cells, h.kind.unwrap_or_else(|| "measure".into()), data))
}

pub fn save_measure(path: &Path, mu: &GridMeasure) -> Result<()> {
    write_grid(path, mu.dim(), mu.cells_per_axis(), "measure", mu.weights())
}

pub fn load_measure(path: &Path) -> Result<GridMeasure> {
    let (n, cells, kind, data) = read_grid(path)?;
    if kind != "measure" {
        bail!("{} holds a {kind} grid, expected a measure", path.display());
    }
    GridMeasure::from_weights(n, cells, data).map_err(|e| anyhow!("{e}"))
}

pub fn save_density(path: &Path, g: &GridDensity) -> Result<()> {
    write_grid(path, g.dim(), g.cells_per_axis(), "density", g.values())
}

pub fn load_density(path: &Path) -> Result<GridDensity> {
    let (n, cells, _kind, data) = read_grid(path)?;
    GridDensity::from_values(n, cells, data).map_err(|e| anyhow!("{e}"))
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

/// `xi_1,...,xi_n,re,im` rows over the sampled lattice.
pub fn save_fourier_csv(path: &Path, s: &FourierSample) -> Result<()> {
    let mut out = String::new();
    for a in 0..s.dim() {
        out.push_str(&format!("xi_{},", a + 1));
    }
    out.push_str("re,im\n");
    for i in 0..s.len() {
        for q in s.freq(i) {
            out.push_str(&format!("{q},"));
        }
        let v = s.values()[i];
        out.push_str(&format!("{},{}\n", v.re, v.im));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Configuration hits: `x..., y..., max_dist, margin`.
pub fn save_hits_csv(path: &Path, n: usize, ydim: usize, hits: &[salem_core::configsearch::ConfigurationHit]) -> Result<()> {
    let mut out = String::new();
    for a in 0..n {
        out.push_str(&format!("x_{},", a + 1));
    }
    for a in 0..ydim {
        out.push_str(&format!("y_{},", a + 1));
    }
    out.push_str("max_dist,margin\n");
    for h in hits {
        for v in &h.x {
            out.push_str(&format!("{v},"));
        }
        for v in &h.y {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{},{}\n", h.max_dist, h.excluded_margin));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Point-set JSON: `{"n": ..., "points": [[...], ...], "tol": ...}`.
#[derive(Serialize, Deserialize)]
pub struct PointSetFile {
    pub n: usize,
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub tol: Option<f64>,
}

pub fn load_point_set(path: &Path, tol_override: Option<f64>) -> Result<salem_core::configsearch::PointSet> {
    let text = fs::read_to_string(path)?;
    let f: PointSetFile = serde_json::from_str(&text).context("parsing point-set JSON")?;
    let tol = tol_override.or(f.tol).unwrap_or(1e-3);
    salem_core::configsearch::PointSet::from_points(f.n, f.points, tol).map_err(|e| anyhow!("{e}"))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
