//! Real scalar fields on the periodic unit square.

use crate::error::{Error, Result};

/// Smallest grid edge accepted anywhere in the crate.
pub const MIN_EDGE: usize = 4;

/// A real scalar field sampled on an `rows × cols` periodic grid over `[0,1]²`.
///
/// Grid point `(i, j)` sits at the physical location `(x, y) = (j / cols, i / rows)`,
/// so `x` runs along columns and `y` along rows. Storage is row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

pub(crate) fn check_grid(rows: usize, cols: usize) -> Result<()> {
    if rows < MIN_EDGE || cols < MIN_EDGE {
        return Err(Error::Shape(format!(
            "grid {rows}x{cols} is smaller than {MIN_EDGE}x{MIN_EDGE}"
        )));
    }
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::Shape(format!(
            "grid {rows}x{cols} has an odd edge; only even grids are supported"
        )));
    }
    Ok(())
}

impl GridField2D {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_grid(rows, cols)?;
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} samples for a {rows}x{cols} grid, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value {} at row {}, col {}",
                data[pos],
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a field from its values at physical coordinates `(x, y)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        check_grid(rows, cols)?;
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let y = i as f64 / rows as f64;
            for j in 0..cols {
                data.push(f(j as f64 / cols as f64, y));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    /// Internal constructor for values that are finite by construction.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// Nyquist wavenumber in cycles per unit length, `min(rows, cols) / 2`.
    pub fn nyquist(&self) -> f64 {
        self.rows.min(self.cols) as f64 / 2.0
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Mean of the squared samples.
    pub fn mean_square(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64
    }

    pub fn rms(&self) -> f64 {
        self.mean_square().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "resolution mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self::from_parts(self.rows, self.cols, data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self::from_parts(self.rows, self.cols, data))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_parts(self.rows, self.cols, self.data.iter().map(|v| v * factor).collect())
    }

    /// Circular shift: the value at `(i, j)` moves to `(i + dr, j + dc)`.
    pub fn shifted(&self, dr: usize, dc: usize) -> Self {
        let (h, w) = self.shape();
        let mut out = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                out[((i + dr) % h) * w + (j + dc) % w] = self.data[i * w + j];
            }
        }
        Self::from_parts(h, w, out)
    }

    /// Root-mean-square difference between two fields of equal shape.
    pub fn rmse(&self, other: &Self) -> Result<f64> {
        self.ensure_same_shape(other)?;
        let ss: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((ss / self.data.len() as f64).sqrt())
    }
}
