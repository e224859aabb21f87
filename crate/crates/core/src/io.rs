//! Field dumps: `<name>.json` metadata next to raw little-endian `<name>.f64`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, SpaceTimeGrid};

pub const ORDERING: &str = "t-slowest";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMeta {
    pub dim: usize,
    pub extents: Vec<[f64; 2]>,
    pub nx: Vec<usize>,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub nt: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub ordering: String,
}

impl FieldMeta {
    pub fn grid(&self) -> Result<SpaceTimeGrid> {
        if self.ordering != ORDERING {
            return Err(Error::Format(format!("unsupported node ordering {:?}", self.ordering)));
        }
        SpaceTimeGrid::new(self.dim, &self.extents, &self.nx, self.t_end, self.nt)
    }
}

fn paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.json")), dir.join(format!("{name}.f64")))
}

pub fn write_field(dir: &Path, name: &str, field: &ScalarField, gamma: f64, epsilon: f64) -> Result<()> {
    let g = field.grid();
    let meta = FieldMeta {
        dim: g.dim(),
        extents: g.extents().to_vec(),
        nx: g.nx().to_vec(),
        t_end: g.t_end(),
        nt: g.nt(),
        gamma,
        epsilon,
        ordering: ORDERING.into(),
    };
    let (json, raw) = paths(dir, name);
    fs::write(json, serde_json::to_string_pretty(&meta)?)?;
    let mut bytes = Vec::with_capacity(8 * field.values().len());
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(raw, bytes)?;
    Ok(())
}

/// Reads a dump from either of its two paths or from the common stem.
pub fn read_field(path: &Path) -> Result<(ScalarField, FieldMeta)> {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("f64") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let json = stem.with_extension("json");
    let raw = stem.with_extension("f64");
    let meta: FieldMeta = serde_json::from_str(&fs::read_to_string(&json)?)
        .map_err(|e| Error::Format(format!("{}: {e}", json.display())))?;
    let grid = meta.grid()?;
    let bytes = fs::read(&raw)?;
    let expected = 8 * grid.node_count();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: expected {expected} bytes for {} nodes, found {}",
            raw.display(),
            grid.node_count(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let field = ScalarField::new(grid, values).map_err(|e| Error::Format(format!("{}: {e}", raw.display())))?;
    Ok((field, meta))
}
