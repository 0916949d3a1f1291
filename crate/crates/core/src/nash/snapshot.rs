//! Binary snapshots of value fields.
//!
//! Layout of the `.bin` file: a header of six little-endian 64-bit values
//! `N, d, n` (unsigned), `R, dt` (floats), `t_steps` (unsigned), followed by
//! the stored slices in time order, each row-major over the grid nodes as
//! little-endian `f64`. The `.json` sidecar records which time steps were
//! stored and the model parameters.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Grid, NashError, ValueField};
use crate::model::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSidecar {
    pub players: usize,
    pub dim: usize,
    pub points_per_axis: usize,
    pub radius: f64,
    pub dt: f64,
    pub t_steps: usize,
    pub horizon: f64,
    pub sigma0: f64,
    pub model: String,
    pub stored_steps: Vec<usize>,
}

fn paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("bin"), base.with_extension("json"))
}

/// Writes `<base>.bin` and `<base>.json`.
pub fn write_snapshot(field: &ValueField, base: &Path) -> Result<(), NashError> {
    let (bin, json) = paths(base);
    let g = &field.grid;
    let mut out = io::BufWriter::new(fs::File::create(&bin)?);
    out.write_all(&(g.players as u64).to_le_bytes())?;
    out.write_all(&(g.dim as u64).to_le_bytes())?;
    out.write_all(&(g.points_per_axis as u64).to_le_bytes())?;
    out.write_all(&g.radius.to_le_bytes())?;
    out.write_all(&g.dt.to_le_bytes())?;
    out.write_all(&(g.t_steps as u64).to_le_bytes())?;
    for slice in field.slices() {
        for v in slice {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    let sidecar = SnapshotSidecar {
        players: g.players,
        dim: g.dim,
        points_per_axis: g.points_per_axis,
        radius: g.radius,
        dt: g.dt,
        t_steps: g.t_steps,
        horizon: g.horizon(),
        sigma0: field.model.sigma0,
        model: field.model.name.clone(),
        stored_steps: (0..field.slice_count()).map(|k| field.step_of(k)).collect(),
    };
    let text =
        serde_json::to_string_pretty(&sidecar).map_err(|e| NashError::Snapshot(e.to_string()))?;
    fs::write(json, text + "\n")?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`]; `model` supplies the
/// evaluators, which are not serialized.
pub fn read_snapshot(base: &Path, model: &Model) -> Result<ValueField, NashError> {
    let (bin, json) = paths(base);
    let sidecar: SnapshotSidecar = serde_json::from_str(&fs::read_to_string(json)?)
        .map_err(|e| NashError::Snapshot(e.to_string()))?;
    let mut bytes = Vec::new();
    fs::File::open(bin)?.read_to_end(&mut bytes)?;
    let word = |k: usize| -> Result<[u8; 8], NashError> {
        bytes
            .get(k * 8..k * 8 + 8)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| NashError::Snapshot("truncated snapshot".into()))
    };
    let players = u64::from_le_bytes(word(0)?) as usize;
    let dim = u64::from_le_bytes(word(1)?) as usize;
    let n = u64::from_le_bytes(word(2)?) as usize;
    let radius = f64::from_le_bytes(word(3)?);
    let dt = f64::from_le_bytes(word(4)?);
    let t_steps = u64::from_le_bytes(word(5)?) as usize;
    if (players, dim, n, t_steps)
        != (
            sidecar.players,
            sidecar.dim,
            sidecar.points_per_axis,
            sidecar.t_steps,
        )
    {
        return Err(NashError::Snapshot("header and sidecar disagree".into()));
    }
    let horizon = dt * t_steps as f64;
    let grid = Grid::new(radius, n, players, dim, horizon, 0.0, Some(dt))
        .or_else(|_| Grid::new(radius, n, players, dim, horizon, model.sigma0, Some(dt)))?;
    let nodes = grid.node_count();
    let expected = 6 + nodes * sidecar.stored_steps.len();
    if bytes.len() != expected * 8 {
        return Err(NashError::Snapshot(format!(
            "expected {} bytes, found {}",
            expected * 8,
            bytes.len()
        )));
    }
    let mut slices = Vec::with_capacity(sidecar.stored_steps.len());
    for s in 0..sidecar.stored_steps.len() {
        let start = 6 + s * nodes;
        slices.push(
            (start..start + nodes)
                .map(|k| word(k).map(f64::from_le_bytes))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(ValueField::from_parts(
        grid,
        model.clone(),
        slices,
        sidecar.stored_steps,
    ))
}
