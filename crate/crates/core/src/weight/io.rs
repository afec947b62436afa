//! Grid files: a JSON manifest next to a raw little-endian `f64` payload,
//! with a CSV fallback of `x1,...,xn,f` rows.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grid::GridField;
use crate::error::{Error, Result};
use crate::manifold::Manifold;

pub const GRID_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestManifold {
    pub kind: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extents: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridManifest {
    pub version: u32,
    pub manifold: ManifestManifold,
    pub shape: Vec<usize>,
    pub field: String,
    pub payload: String,
    pub dtype: String,
    pub order: String,
}

impl ManifestManifold {
    pub fn from_manifold(m: &Manifold) -> Result<Self> {
        match m {
            Manifold::Torus { periods } => Ok(Self {
                kind: "torus".into(),
                dim: periods.len(),
                periods: Some(periods.clone()),
                extents: None,
            }),
            Manifold::Box { extents } => Ok(Self {
                kind: "box".into(),
                dim: extents.len(),
                periods: None,
                extents: Some(extents.clone()),
            }),
            Manifold::Sphere { .. } => Err(Error::Unsupported("grid files describe tori and boxes only".into())),
        }
    }

    pub fn to_manifold(&self) -> Result<Manifold> {
        let m = match (self.kind.as_str(), &self.periods, &self.extents) {
            ("torus", Some(p), None) => Manifold::torus(p.clone()),
            ("box", None, Some(e)) => Manifold::boxed(e.clone()),
            _ => {
                return Err(Error::Format(format!(
                    "manifold kind `{}` needs exactly `periods` (torus) or `extents` (box)",
                    self.kind
                )))
            }
        }
        .map_err(|e| Error::Format(e.to_string()))?;
        if m.dim() != self.dim {
            return Err(Error::Format(format!("manifold dim {} disagrees with its data", self.dim)));
        }
        Ok(m)
    }
}

/// Writes `grid` as `<manifest>` plus a payload file beside it named after
/// the manifest stem. Returns the payload path.
pub fn write_grid(grid: &GridField, manifest_path: &Path) -> Result<PathBuf> {
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::input("manifest path needs a file name"))?;
    let payload_name = format!("{stem}.f64le");
    let manifest = GridManifest {
        version: GRID_FORMAT_VERSION,
        manifold: ManifestManifold::from_manifold(&grid.manifold)?,
        shape: grid.shape.clone(),
        field: "logf".into(),
        payload: payload_name.clone(),
        dtype: "f64le".into(),
        order: "row-major".into(),
    };
    let payload_path = manifest_path.with_file_name(&payload_name);
    let mut bytes = Vec::with_capacity(8 * grid.values.len());
    for v in &grid.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&payload_path, bytes)?;
    fs::write(manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(payload_path)
}

pub fn read_grid(manifest_path: &Path) -> Result<GridField> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: GridManifest = serde_json::from_str(&text).map_err(|e| Error::Format(format!("grid manifest: {e}")))?;
    if manifest.version != GRID_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported grid version {}", manifest.version)));
    }
    for (key, got, want) in [
        ("field", &manifest.field, "logf"),
        ("dtype", &manifest.dtype, "f64le"),
        ("order", &manifest.order, "row-major"),
    ] {
        if got != want {
            return Err(Error::Format(format!("`{key}` must be \"{want}\", found \"{got}\"")));
        }
    }
    let m = manifest.manifold.to_manifold()?;
    let payload_path = manifest_path.with_file_name(&manifest.payload);
    let bytes = fs::read(&payload_path)?;
    let total = manifest
        .shape
        .iter()
        .try_fold(1usize, |a, s| a.checked_mul(*s))
        .ok_or_else(|| Error::Format("grid shape overflows".into()))?;
    if bytes.len() != 8 * total {
        return Err(Error::Format(format!(
            "payload has {} bytes, shape {:?} needs {}",
            bytes.len(),
            manifest.shape,
            8 * total
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    GridField::new(m, manifest.shape, values)
}

pub fn write_grid_csv(grid: &GridField, path: &Path) -> Result<()> {
    let layout = grid.layout()?;
    let n = grid.shape.len();
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    let mut idx = vec![0usize; n];
    for (k, v) in grid.values.iter().enumerate() {
        layout.multi_index(k, &mut idx);
        for a in 0..n {
            write!(out, "{},", layout.origin[a] + idx[a] as f64 * layout.steps[a])?;
        }
        writeln!(out, "{v:?}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads CSV rows in row-major node order; the shape is recovered from the
/// number of distinct coordinates per axis.
pub fn read_grid_csv(m: &Manifold, path: &Path) -> Result<GridField> {
    let text = fs::read_to_string(path)?;
    let n = m.dim();
    let mut axes: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut values = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", line_no + 1)))?;
        if parts.len() != n + 1 {
            return Err(Error::Format(format!(
                "line {}: expected {} columns, found {}",
                line_no + 1,
                n + 1,
                parts.len()
            )));
        }
        for a in 0..n {
            if !axes[a].contains(&parts[a]) {
                axes[a].push(parts[a]);
            }
        }
        values.push(parts[n]);
    }
    let shape = axes.iter().map(|a| a.len()).collect();
    GridField::new(m.clone(), shape, values)
}
