use serde::{Deserialize, Serialize};

use crate::error::{MpeError, Result};

/// Equal-sized square cells over a lat/lon bounding box, numbered row-major
/// from the south-west corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
    pub cell_size_deg: f64,
}

impl GridSpec {
    pub fn new(
        min_lat: f64,
        max_lat: f64,
        min_lon: f64,
        max_lon: f64,
        cell_size_deg: f64,
    ) -> Result<Self> {
        let all_finite = [min_lat, max_lat, min_lon, max_lon, cell_size_deg]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || min_lat >= max_lat || min_lon >= max_lon || cell_size_deg <= 0.0 {
            return Err(MpeError::Config(format!(
                "invalid grid [{min_lat}, {max_lat}] x [{min_lon}, {max_lon}] with cell {cell_size_deg}"
            )));
        }
        Ok(Self {
            min_lat,
            max_lat,
            min_lon,
            max_lon,
            cell_size_deg,
        })
    }

    fn cells_along(&self, span: f64) -> usize {
        // Absorb representation error so that e.g. 0.3 / 0.1 yields 3 cells.
        (((span / self.cell_size_deg) - 1e-9).ceil() as usize).max(1)
    }

    pub fn n_rows(&self) -> usize {
        self.cells_along(self.max_lat - self.min_lat)
    }

    pub fn n_cols(&self) -> usize {
        self.cells_along(self.max_lon - self.min_lon)
    }

    /// Row-major cell index of a point; points on the max edge fall into the
    /// last row/column.
    pub fn cell_index(&self, lat: f64, lon: f64) -> Result<usize> {
        let inside = lat >= self.min_lat
            && lat <= self.max_lat
            && lon >= self.min_lon
            && lon <= self.max_lon;
        if !inside {
            return Err(MpeError::OutOfBounds { lat, lon });
        }
        let row =
            (((lat - self.min_lat) / self.cell_size_deg).floor() as usize).min(self.n_rows() - 1);
        let col =
            (((lon - self.min_lon) / self.cell_size_deg).floor() as usize).min(self.n_cols() - 1);
        Ok(row * self.n_cols() + col)
    }

    /// Location token of the cell containing the point, `C<index>`.
    pub fn map_to_cell(&self, lat: f64, lon: f64) -> Result<String> {
        self.cell_index(lat, lon).map(|c| format!("C{c}"))
    }
}

impl std::str::FromStr for GridSpec {
    type Err = MpeError;

    /// `min_lat,max_lat,min_lon,max_lon,cell_size_deg`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| MpeError::Config(format!("grid '{s}': {e}")))?;
        match parts[..] {
            [a, b, c, d, e] => GridSpec::new(a, b, c, d, e),
            _ => Err(MpeError::Config(format!(
                "grid '{s}' must be min_lat,max_lat,min_lon,max_lon,cell_size_deg"
            ))),
        }
    }
}
