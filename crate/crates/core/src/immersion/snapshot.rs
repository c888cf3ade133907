use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GridImmersion, ImmersionSpec};
use crate::error::{PinchError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    n: usize,
    ambient: usize,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    spec: Option<ImmersionSpec>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Little-endian header `n, N, shape[n], spacing[n]` followed by row-major positions;
/// metadata goes to `<path>.json`.
pub fn write_snapshot(grid: &GridImmersion, path: &Path, spec: Option<&ImmersionSpec>) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * (2 + 2 * grid.n + grid.positions.len()));
    buf.extend((grid.n as u64).to_le_bytes());
    buf.extend((grid.ambient as u64).to_le_bytes());
    for &s in &grid.shape {
        buf.extend((s as u64).to_le_bytes());
    }
    for &h in &grid.spacing {
        buf.extend(h.to_le_bytes());
    }
    for &x in &grid.positions {
        buf.extend(x.to_le_bytes());
    }
    fs::write(path, buf)?;
    let side = Sidecar {
        n: grid.n,
        ambient: grid.ambient,
        shape: grid.shape.clone(),
        spacing: grid.spacing.clone(),
        spec: spec.cloned(),
    };
    let json = serde_json::to_string_pretty(&side).map_err(|e| PinchError::Format(e.to_string()))?;
    fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<GridImmersion> {
    let bytes = fs::read(path)?;
    let mut words = bytes.chunks_exact(8).map(|c| <[u8; 8]>::try_from(c).unwrap());
    if bytes.len() % 8 != 0 {
        return Err(PinchError::Format("snapshot length is not a multiple of 8".into()));
    }
    let mut next = || words.next().ok_or_else(|| PinchError::Format("snapshot truncated".into()));
    let n = u64::from_le_bytes(next()?) as usize;
    let ambient = u64::from_le_bytes(next()?) as usize;
    if !(1..=3).contains(&n) || ambient <= n {
        return Err(PinchError::Format("snapshot header is invalid".into()));
    }
    let shape = (0..n).map(|_| next().map(|w| u64::from_le_bytes(w) as usize)).collect::<Result<Vec<_>>>()?;
    let spacing = (0..n).map(|_| next().map(f64::from_le_bytes)).collect::<Result<Vec<_>>>()?;
    let positions: Vec<f64> = words.map(f64::from_le_bytes).collect();
    GridImmersion::new(shape, spacing, ambient, positions).map_err(|e| PinchError::Format(e.to_string()))
}
