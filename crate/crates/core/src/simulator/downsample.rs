//! Averaging a dense fingertip tactile layout down to the 24-cell grid.

use crate::kinematics::{CELLS_PER_REGION, GRID_COLS, GRID_ROWS};

use super::{Result, SimError};

/// Cells per row of the dense fingertip layout (34 cells in total).
pub const FINE_ROW_WIDTHS: [usize; GRID_ROWS] = [5, 6, 6, 6, 6, 5];
pub const FINE_CELLS: usize = 34;

/// For each coarse cell, the indices of the dense cells averaged into it.
pub type CellMapping = Vec<Vec<usize>>;

/// Neighbourhood mapping for the 34-cell layout: a coarse cell takes every
/// dense cell in the same row lying within one coarse pitch of its centre,
/// so neighbouring coarse cells share dense cells at their border.
pub fn default_mapping() -> CellMapping {
    let mut mapping = Vec::with_capacity(CELLS_PER_REGION);
    let mut row_start = 0;
    for width in FINE_ROW_WIDTHS {
        for col in 0..GRID_COLS {
            let centre = (col as f64 + 0.5) / GRID_COLS as f64;
            let cells = (0..width)
                .filter(|k| {
                    let u = (*k as f64 + 0.5) / width as f64;
                    (u - centre).abs() <= 1.0 / GRID_COLS as f64 + 1e-12
                })
                .map(|k| row_start + k)
                .collect();
            mapping.push(cells);
        }
        row_start += width;
    }
    mapping
}

pub fn validate_mapping(mapping: &CellMapping, fine_len: usize) -> Result<()> {
    if mapping.len() != CELLS_PER_REGION {
        return Err(SimError::InvalidMapping(format!(
            "expected {CELLS_PER_REGION} target cells, got {}",
            mapping.len()
        )));
    }
    for (cell, sources) in mapping.iter().enumerate() {
        if sources.is_empty() {
            return Err(SimError::InvalidMapping(format!("cell {cell} has no sources")));
        }
        if let Some(bad) = sources.iter().find(|&&i| i >= fine_len) {
            return Err(SimError::InvalidMapping(format!(
                "cell {cell} refers to reading {bad} of {fine_len}"
            )));
        }
    }
    Ok(())
}

/// Each coarse cell is the mean of its mapped dense readings.
pub fn downsample_tactile(fine: &[f64], mapping: &CellMapping) -> Result<Vec<f64>> {
    validate_mapping(mapping, fine.len())?;
    Ok(mapping
        .iter()
        .map(|src| src.iter().map(|&i| fine[i]).sum::<f64>() / src.len() as f64)
        .collect())
}
