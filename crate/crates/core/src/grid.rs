//! Rectangular grid over the area of interest and the set of meshes to acquire.
//!
//! A [`GridSpec`] describes an `n_lat x n_lon` box of cells. A [`MeshSet`]
//! selects the cells that belong to the area of interest and numbers them
//! in row-major order (north to south, west to east). Mesh indices are
//! 0-based everywhere in this crate; action `k >= 1` addresses mesh `k - 1`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::GridError;

/// A `(lat_idx, lon_idx)` grid cell. Row 0 is the northern edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub lat: usize,
    pub lon: usize,
}

impl Cell {
    pub const fn new(lat: usize, lon: usize) -> Self {
        Self { lat, lon }
    }
}

/// Geometry of the bounding grid. Coordinates are nominal metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_lat: usize,
    pub n_lon: usize,
    /// Latitude of the north-west corner, degrees.
    pub lat0: f64,
    /// Longitude of the north-west corner, degrees.
    pub lon0: f64,
    /// Cell size, degrees.
    pub res_deg: f64,
}

impl GridSpec {
    pub fn new(n_lat: usize, n_lon: usize, lat0: f64, lon0: f64, res_deg: f64) -> Result<Self, GridError> {
        let spec = Self { n_lat, n_lon, lat0, lon0, res_deg };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid with nominal coordinates at the origin and 0.5 degree cells.
    pub fn with_shape(n_lat: usize, n_lon: usize) -> Result<Self, GridError> {
        Self::new(n_lat, n_lon, 0.0, 0.0, 0.5)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.n_lat == 0 || self.n_lon == 0 {
            return Err(GridError::EmptyGrid { n_lat: self.n_lat, n_lon: self.n_lon });
        }
        if !self.res_deg.is_finite() || self.res_deg <= 0.0 {
            return Err(GridError::BadResolution(self.res_deg));
        }
        if !self.lat0.is_finite() || !self.lon0.is_finite() {
            return Err(GridError::BadCorner);
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_lat * self.n_lon
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.lat < self.n_lat && cell.lon < self.n_lon
    }

    /// Row-major offset of a cell. Caller guarantees bounds.
    #[inline]
    pub fn offset(&self, cell: Cell) -> usize {
        cell.lat * self.n_lon + cell.lon
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.n_lat).flat_map(move |lat| (0..self.n_lon).map(move |lon| Cell::new(lat, lon)))
    }

    pub(crate) fn check(&self, cell: Cell) -> Result<(), GridError> {
        if self.contains(cell) {
            Ok(())
        } else {
            Err(GridError::OutOfBounds { lat: cell.lat, lon: cell.lon, n_lat: self.n_lat, n_lon: self.n_lon })
        }
    }
}

/// The meshes of the area of interest with a stable index mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSet {
    grid: GridSpec,
    mask: Vec<bool>,
    meshes: Vec<Cell>,
    index: Vec<Option<usize>>,
}

impl MeshSet {
    /// Builds the mesh set from a mask given as rows (north to south).
    pub fn new(grid: GridSpec, mask: &[Vec<bool>]) -> Result<Self, GridError> {
        grid.validate()?;
        if mask.len() != grid.n_lat {
            return Err(GridError::MaskShape { expected: (grid.n_lat, grid.n_lon), rows: mask.len(), row: None });
        }
        if let Some((i, row)) = mask.iter().enumerate().find(|(_, r)| r.len() != grid.n_lon) {
            return Err(GridError::MaskShape {
                expected: (grid.n_lat, grid.n_lon),
                rows: mask.len(),
                row: Some((i, row.len())),
            });
        }
        let flat: Vec<bool> = mask.iter().flatten().copied().collect();
        Self::from_flat(grid, flat)
    }

    /// Builds the mesh set from a row-major flat mask.
    pub fn from_flat(grid: GridSpec, mask: Vec<bool>) -> Result<Self, GridError> {
        grid.validate()?;
        if mask.len() != grid.n_cells() {
            return Err(GridError::FlatMaskLength { expected: grid.n_cells(), got: mask.len() });
        }
        let mut meshes = Vec::new();
        let mut index = vec![None; mask.len()];
        for cell in grid.cells() {
            let off = grid.offset(cell);
            if mask[off] {
                index[off] = Some(meshes.len());
                meshes.push(cell);
            }
        }
        if meshes.is_empty() {
            return Err(GridError::EmptyMask);
        }
        Ok(Self { grid, mask, meshes, index })
    }

    /// Every cell of the grid is a mesh.
    pub fn full(grid: GridSpec) -> Result<Self, GridError> {
        let n = grid.n_cells();
        Self::from_flat(grid, vec![true; n])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Number of meshes, `K`.
    pub fn len(&self) -> usize {
        self.meshes.len()
    }

    /// Always false: construction rejects empty masks.
    pub fn is_empty(&self) -> bool {
        self.meshes.is_empty()
    }

    pub fn meshes(&self) -> &[Cell] {
        &self.meshes
    }

    pub fn cell(&self, mesh: usize) -> Option<Cell> {
        self.meshes.get(mesh).copied()
    }

    pub fn in_aoi(&self, cell: Cell) -> bool {
        self.grid.contains(cell) && self.mask[self.grid.offset(cell)]
    }

    /// Mesh index of a cell, `None` if the cell lies outside the AOI.
    pub fn mesh_index(&self, cell: Cell) -> Result<Option<usize>, GridError> {
        self.grid.check(cell)?;
        Ok(self.index[self.grid.offset(cell)])
    }

    /// Row-major flat mask.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn mask_rows(&self) -> Vec<Vec<bool>> {
        self.mask.chunks(self.grid.n_lon).map(<[bool]>::to_vec).collect()
    }

    pub fn to_document(&self) -> MaskDocument {
        MaskDocument {
            n_lat: self.grid.n_lat,
            n_lon: self.grid.n_lon,
            lat0: self.grid.lat0,
            lon0: self.grid.lon0,
            res_deg: self.grid.res_deg,
            mask: self.mask.chunks(self.grid.n_lon).map(|row| row.iter().map(|&b| u8::from(b)).collect()).collect(),
        }
    }
}

/// JSON mask document. `mask` rows are ordered north to south, entries are 0 or 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDocument {
    pub n_lat: usize,
    pub n_lon: usize,
    pub lat0: f64,
    pub lon0: f64,
    pub res_deg: f64,
    pub mask: Vec<Vec<u8>>,
}

impl MaskDocument {
    pub fn into_mesh_set(self) -> Result<MeshSet, GridError> {
        let grid = GridSpec::new(self.n_lat, self.n_lon, self.lat0, self.lon0, self.res_deg)?;
        let mut rows = Vec::with_capacity(self.mask.len());
        for (i, row) in self.mask.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => out.push(false),
                    1 => out.push(true),
                    other => return Err(GridError::MaskValue { lat: i, lon: j, value: other }),
                }
            }
            rows.push(out);
        }
        MeshSet::new(grid, &rows)
    }

    pub fn from_json(text: &str) -> Result<Self, GridError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mask document serializes")
    }
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<MeshSet, GridError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| GridError::Io { path: path.display().to_string(), source: e })?;
    MaskDocument::from_json(&text)?.into_mesh_set()
}

pub const FRANCE_LIKE_MESHES: usize = 122;

/// Synthetic stand-in for the mainland-France tessellation: 122 meshes in a
/// roughly hexagonal blob on a 12 x 13 grid of 0.5 degree cells.
///
/// Cells are ranked by a hexagon-like distance from an off-center point and
/// the closest 122 are kept (ties broken row-major), so the result is exact
/// and reproducible.
pub fn france_like() -> MeshSet {
    let grid = GridSpec::new(12, 13, 51.0, -4.5, 0.5).expect("static grid");
    let (c_lat, c_lon) = (5.6, 6.3);
    let mut ranked: Vec<(f64, usize)> = grid
        .cells()
        .map(|cell| {
            let dy = (cell.lat as f64 - c_lat) / 5.7;
            let dx = (cell.lon as f64 - c_lon) / 6.4;
            // hexagon-ish norm with a slight north-west bulge (Brittany)
            let hex = dx.abs().max(0.5 * dx.abs() + 0.87 * dy.abs());
            let bulge = if cell.lat >= 3 && cell.lat <= 5 && cell.lon <= 1 { -0.15 } else { 0.0 };
            (hex + bulge, grid.offset(cell))
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut mask = vec![false; grid.n_cells()];
    for &(_, off) in ranked.iter().take(FRANCE_LIKE_MESHES) {
        mask[off] = true;
    }
    MeshSet::from_flat(grid, mask).expect("non-empty mask")
}
