//! Uniformly sampled level-set grids, trilinear and quadratic interpolation,
//! and the raw binary grid file format.
//!
//! Raw grid files start with one ASCII header line
//! `nx ny nz lox loy loz hix hiy hiz` terminated by `\n`, followed by
//! `nx*ny*nz` little-endian `f64` values in row-major order with x fastest.

use std::io::Write;
use std::path::Path;

use super::vec3::Point;
use super::GeometryError;

/// Scalar samples on the nodes of a uniform box grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledGrid {
    pub n: [usize; 3],
    pub lo: Point,
    pub hi: Point,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InterpMode {
    #[default]
    Trilinear,
    Quadratic,
}

/// Nodes this close (in index units) to a query are snapped onto it so that
/// node queries reproduce the stored value bit for bit.
const NODE_SNAP: f64 = 1e-9;

impl SampledGrid {
    pub fn new(n: [usize; 3], lo: Point, hi: Point, values: Vec<f64>) -> Result<Self, GeometryError> {
        if n.iter().any(|&c| c < 2) {
            return Err(GeometryError::InvalidGrid(format!("node counts must be >= 2, got {n:?}")));
        }
        if (0..3).any(|a| !(lo[a] < hi[a])) {
            return Err(GeometryError::InvalidGrid(format!("box corners must satisfy lo < hi, got {lo:?} {hi:?}")));
        }
        let expected = n[0] * n[1] * n[2];
        if values.len() != expected {
            return Err(GeometryError::InvalidGrid(format!(
                "expected {expected} samples, got {}",
                values.len()
            )));
        }
        Ok(Self { n, lo, hi, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(n: [usize; 3], lo: Point, hi: Point, f: impl Fn(Point) -> f64) -> Result<Self, GeometryError> {
        let probe = Self::new(n, lo, hi, vec![0.0; n[0] * n[1] * n[2]])?;
        let mut values = Vec::with_capacity(probe.values.len());
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    values.push(f(probe.node_position(i, j, k)));
                }
            }
        }
        Ok(Self { values, ..probe })
    }

    pub fn spacing(&self) -> Point {
        [
            (self.hi[0] - self.lo[0]) / (self.n[0] - 1) as f64,
            (self.hi[1] - self.lo[1]) / (self.n[1] - 1) as f64,
            (self.hi[2] - self.lo[2]) / (self.n[2] - 1) as f64,
        ]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Point {
        let d = self.spacing();
        [
            self.lo[0] + i as f64 * d[0],
            self.lo[1] + j as f64 * d[1],
            self.lo[2] + k as f64 * d[2],
        ]
    }

    pub fn contains(&self, x: Point) -> bool {
        (0..3).all(|a| x[a] >= self.lo[a] && x[a] <= self.hi[a])
    }

    pub fn clamp(&self, x: Point) -> Point {
        [
            x[0].clamp(self.lo[0], self.hi[0]),
            x[1].clamp(self.lo[1], self.hi[1]),
            x[2].clamp(self.lo[2], self.hi[2]),
        ]
    }

    /// Parent cell index and local coordinates in `[0, 1]^3`.
    fn locate(&self, x: Point) -> Result<([usize; 3], Point), GeometryError> {
        if !self.contains(x) || x.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::OutOfBounds { point: x });
        }
        let d = self.spacing();
        let mut cell = [0usize; 3];
        let mut local = [0.0; 3];
        for a in 0..3 {
            let mut t = (x[a] - self.lo[a]) / d[a];
            let r = t.round();
            if (t - r).abs() < NODE_SNAP {
                t = r;
            }
            let i = (t.floor() as usize).min(self.n[a] - 2);
            cell[a] = i;
            local[a] = t - i as f64;
        }
        Ok((cell, local))
    }

    /// Second difference along `axis` at a node in index units, one-sided at
    /// the grid boundary.
    fn second_difference(&self, node: [usize; 3], axis: usize) -> f64 {
        let n = self.n[axis];
        if n < 3 {
            return 0.0;
        }
        let centre = node[axis].clamp(1, n - 2);
        let at = |offset: isize| {
            let mut idx = node;
            idx[axis] = (centre as isize + offset) as usize;
            self.node(idx[0], idx[1], idx[2])
        };
        at(1) - 2.0 * at(0) + at(-1)
    }
}

fn trilinear_local(corners: &[f64; 8], local: Point) -> f64 {
    let [x, y, z] = local;
    let mut acc = 0.0;
    for k in 0..2 {
        for j in 0..2 {
            for i in 0..2 {
                let sign = if (i + j + k) % 2 == 0 { 1.0 } else { -1.0 };
                acc += corners[i + 2 * j + 4 * k]
                    * sign
                    * (1.0 - x - i as f64)
                    * (1.0 - y - j as f64)
                    * (1.0 - z - k as f64);
            }
        }
    }
    acc
}

fn parent_corners(grid: &SampledGrid, cell: [usize; 3]) -> [f64; 8] {
    let mut c = [0.0; 8];
    for k in 0..2 {
        for j in 0..2 {
            for i in 0..2 {
                c[i + 2 * j + 4 * k] = grid.node(cell[0] + i, cell[1] + j, cell[2] + k);
            }
        }
    }
    c
}

pub fn interp_trilinear(grid: &SampledGrid, x: Point) -> Result<f64, GeometryError> {
    let (cell, local) = grid.locate(x)?;
    Ok(trilinear_local(&parent_corners(grid, cell), local))
}

/// Trilinear interpolation corrected by the minimum-magnitude second
/// difference over the parent cell vertices along each axis.
pub fn interp_quadratic(grid: &SampledGrid, x: Point) -> Result<f64, GeometryError> {
    let (cell, local) = grid.locate(x)?;
    let mut value = trilinear_local(&parent_corners(grid, cell), local);
    for axis in 0..3 {
        let mut best = f64::INFINITY;
        for k in 0..2 {
            for j in 0..2 {
                for i in 0..2 {
                    let d = grid.second_difference([cell[0] + i, cell[1] + j, cell[2] + k], axis);
                    if d.abs() < best.abs() {
                        best = d;
                    }
                }
            }
        }
        let t = local[axis];
        value -= best * t * (1.0 - t) / 2.0;
    }
    Ok(value)
}

pub fn interpolate(grid: &SampledGrid, mode: InterpMode, x: Point) -> Result<f64, GeometryError> {
    match mode {
        InterpMode::Trilinear => interp_trilinear(grid, x),
        InterpMode::Quadratic => interp_quadratic(grid, x),
    }
}

impl SampledGrid {
    pub fn to_raw_bytes(&self) -> Vec<u8> {
        let header = format!(
            "{} {} {} {:e} {:e} {:e} {:e} {:e} {:e}\n",
            self.n[0], self.n[1], self.n[2], self.lo[0], self.lo[1], self.lo[2], self.hi[0], self.hi[1], self.hi[2]
        );
        let mut out = header.into_bytes();
        out.reserve(self.values.len() * 8);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_raw_bytes(bytes: &[u8]) -> Result<Self, GeometryError> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| GeometryError::Format { offset: 0, message: "missing header line".into() })?;
        let header = std::str::from_utf8(&bytes[..newline])
            .map_err(|_| GeometryError::Format { offset: 0, message: "header is not UTF-8".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(GeometryError::Format {
                offset: 0,
                message: format!("header needs 9 fields, found {}", fields.len()),
            });
        }
        let mut n = [0usize; 3];
        for a in 0..3 {
            n[a] = fields[a].parse().map_err(|_| GeometryError::Format {
                offset: 0,
                message: format!("bad node count {:?}", fields[a]),
            })?;
        }
        let mut corners = [0.0; 6];
        for (c, f) in corners.iter_mut().zip(&fields[3..]) {
            *c = f.parse().map_err(|_| GeometryError::Format { offset: 0, message: format!("bad coordinate {f:?}") })?;
        }
        let count = n[0].saturating_mul(n[1]).saturating_mul(n[2]);
        let data = &bytes[newline + 1..];
        if data.len() != count * 8 {
            let offset = newline + 1 + (data.len() / 8) * 8;
            return Err(GeometryError::Format {
                offset,
                message: format!("expected {} payload bytes, found {}", count * 8, data.len()),
            });
        }
        let values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::new(n, [corners[0], corners[1], corners[2]], [corners[3], corners[4], corners[5]], values)
    }

    pub fn read_raw(path: &Path) -> Result<Self, GeometryError> {
        let bytes = std::fs::read(path)?;
        Self::from_raw_bytes(&bytes)
    }

    pub fn write_raw(&self, path: &Path) -> Result<(), GeometryError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_raw_bytes())?;
        Ok(())
    }
}
