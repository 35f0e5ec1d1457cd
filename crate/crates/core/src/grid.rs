//! Lake bathymetry raster.
//!
//! Heights are water-column heights (surface to floor) in meters, stored
//! row-major with row 0 at the *bottom* of the map so that world `y` grows
//! with the row index. Cell `(row, col)` has its center at
//! `(origin_x + (col + ½)·cell_size, origin_y + (row + ½)·cell_size)`.
//!
//! Queries between cell centers use bilinear interpolation. The interpolable
//! region is the rectangle spanned by the outermost cell centers, minus any
//! cell neighbourhood that touches a no-data (land) cell.

use std::fmt::Write as _;
use std::io::Read;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const FEET_TO_METERS: f64 = 0.3048;
pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BathymetryGrid<T> {
    ncols: usize,
    nrows: usize,
    cell_size: T,
    origin_x: T,
    origin_y: T,
    nodata: T,
    heights: Vec<T>,
}

/// The four cells surrounding a query point and the fractional offsets
/// inside that cell quad.
#[derive(Debug, Clone, Copy)]
struct Stencil<T> {
    c0: usize,
    c1: usize,
    r0: usize,
    r1: usize,
    tx: T,
    ty: T,
}

impl<T: Real> BathymetryGrid<T> {
    pub fn new(
        ncols: usize,
        nrows: usize,
        cell_size: T,
        origin_x: T,
        origin_y: T,
        nodata: T,
        heights: Vec<T>,
    ) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::value("grid must have at least one row and column"));
        }
        if !(cell_size > T::zero()) || !cell_size.is_finite() {
            return Err(Error::value(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(Error::value("grid origin must be finite"));
        }
        if heights.len() != ncols * nrows {
            return Err(Error::DimensionMismatch {
                context: "height array".into(),
                expected: ncols * nrows,
                found: heights.len(),
            });
        }
        for (i, &h) in heights.iter().enumerate() {
            if h == nodata {
                continue;
            }
            if !h.is_finite() || h < T::zero() {
                return Err(Error::value(format!(
                    "height {h} at row {}, col {} is negative or not finite",
                    i / ncols,
                    i % ncols
                )));
            }
        }
        Ok(Self {
            ncols,
            nrows,
            cell_size,
            origin_x,
            origin_y,
            nodata,
            heights,
        })
    }

    /// Builds a grid by evaluating `f(x, y)` at every cell center.
    pub fn from_fn(
        ncols: usize,
        nrows: usize,
        cell_size: T,
        origin_x: T,
        origin_y: T,
        mut f: impl FnMut(T, T) -> T,
    ) -> Result<Self> {
        let half = T::lit(0.5);
        let mut heights = Vec::with_capacity(ncols * nrows);
        for r in 0..nrows {
            let y = origin_y + (T::from_usize_lossy(r) + half) * cell_size;
            for c in 0..ncols {
                let x = origin_x + (T::from_usize_lossy(c) + half) * cell_size;
                heights.push(f(x, y));
            }
        }
        Self::new(
            ncols,
            nrows,
            cell_size,
            origin_x,
            origin_y,
            T::lit(DEFAULT_NODATA),
            heights,
        )
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn cell_size(&self) -> T {
        self.cell_size
    }

    pub fn origin(&self) -> (T, T) {
        (self.origin_x, self.origin_y)
    }

    pub fn nodata(&self) -> T {
        self.nodata
    }

    pub fn heights(&self) -> &[T] {
        &self.heights
    }

    /// Stored height of cell `(row, col)`, row 0 at the bottom.
    pub fn cell(&self, row: usize, col: usize) -> T {
        self.heights[row * self.ncols + col]
    }

    pub fn is_nodata_cell(&self, row: usize, col: usize) -> bool {
        let h = self.cell(row, col);
        h == self.nodata || !h.is_finite()
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (T, T) {
        let half = T::lit(0.5);
        (
            self.origin_x + (T::from_usize_lossy(col) + half) * self.cell_size,
            self.origin_y + (T::from_usize_lossy(row) + half) * self.cell_size,
        )
    }

    /// World-coordinate rectangle `(x_min, x_max, y_min, y_max)` spanned by
    /// the outermost cell centers, i.e. where interpolation is defined.
    pub fn interpolable_extent(&self) -> (T, T, T, T) {
        let (x0, y0) = self.cell_center(0, 0);
        let (x1, y1) = self.cell_center(self.nrows - 1, self.ncols - 1);
        (x0, x1, y0, y1)
    }

    /// Geometric center of the interpolable region.
    pub fn center(&self) -> (T, T) {
        let (x0, x1, y0, y1) = self.interpolable_extent();
        let half = T::lit(0.5);
        ((x0 + x1) * half, (y0 + y1) * half)
    }

    /// Minimum and maximum of the non-sentinel heights, if any.
    pub fn height_range(&self) -> Option<(T, T)> {
        self.heights
            .iter()
            .copied()
            .filter(|&h| h != self.nodata && !!h.is_finite())
            .fold(None, |acc, h| match acc {
                None => Some((h, h)),
                Some((lo, hi)) => Some((lo.min(h), hi.max(h))),
            })
    }

    fn stencil(&self, x: T, y: T) -> Result<Stencil<T>> {
        let oob = || Error::OutOfBounds {
            x: x.as_f64(),
            y: y.as_f64(),
        };
        if !x.is_finite() || !y.is_finite() {
            return Err(oob());
        }
        let half = T::lit(0.5);
        let fx = (x - self.origin_x) / self.cell_size - half;
        let fy = (y - self.origin_y) / self.cell_size - half;
        let max_c = T::from_usize_lossy(self.ncols - 1);
        let max_r = T::from_usize_lossy(self.nrows - 1);
        if fx < T::zero() || fy < T::zero() || fx > max_c || fy > max_r {
            return Err(oob());
        }
        let (c0, c1, tx) = split_index(fx, self.ncols);
        let (r0, r1, ty) = split_index(fy, self.nrows);
        for &(r, c) in &[(r0, c0), (r0, c1), (r1, c0), (r1, c1)] {
            if self.is_nodata_cell(r, c) {
                return Err(Error::NoData {
                    x: x.as_f64(),
                    y: y.as_f64(),
                });
            }
        }
        Ok(Stencil {
            c0,
            c1,
            r0,
            r1,
            tx,
            ty,
        })
    }

    /// True iff `(x, y)` lies within the convex hull of cell centers and
    /// none of the four surrounding cells is no-data.
    pub fn in_bounds(&self, x: T, y: T) -> bool {
        self.stencil(x, y).is_ok()
    }

    /// Bilinearly interpolated water-column height at `(x, y)`.
    pub fn height_at(&self, x: T, y: T) -> Result<T> {
        let s = self.stencil(x, y)?;
        Ok(self.bilinear(&s))
    }

    fn bilinear(&self, s: &Stencil<T>) -> T {
        let one = T::one();
        let h00 = self.cell(s.r0, s.c0);
        let h01 = self.cell(s.r0, s.c1);
        let h10 = self.cell(s.r1, s.c0);
        let h11 = self.cell(s.r1, s.c1);
        let bottom = h00 * (one - s.tx) + h01 * s.tx;
        let top = h10 * (one - s.tx) + h11 * s.tx;
        bottom * (one - s.ty) + top * s.ty
    }

    /// Spatial gradient `(∂L/∂x, ∂L/∂y)` of the interpolated surface.
    ///
    /// Inside a cell quad this is the exact derivative of the bilinear
    /// interpolant. On a cell line, where the interpolant has a kink, the
    /// left and right slopes are averaged; at a cell center that average is
    /// the central difference `(L(x+h) − L(x−h)) / 2h` with `h = cell_size`.
    /// On the outer edge of the interpolable region the inward one-sided
    /// slope is used.
    pub fn gradient_at(&self, x: T, y: T) -> Result<(T, T)> {
        let s = self.stencil(x, y)?;
        let gx = self.axis_slope(x, y, true, &s)?;
        let gy = self.axis_slope(x, y, false, &s)?;
        Ok((gx, gy))
    }

    fn axis_slope(&self, x: T, y: T, along_x: bool, s: &Stencil<T>) -> Result<T> {
        let (t, node) = if along_x { (s.tx, s.c0) } else { (s.ty, s.r0) };
        let inner = self.quad_slope(s, along_x);
        // Off a grid line, or on the first node (inward slope only).
        if t != T::zero() || node == 0 {
            return Ok(inner);
        }
        let half_cell = self.cell_size * T::lit(0.5);
        let left = if along_x {
            self.stencil(x - half_cell, y)
        } else {
            self.stencil(x, y - half_cell)
        };
        Ok(match left {
            Ok(left) => (self.quad_slope(&left, along_x) + inner) * T::lit(0.5),
            Err(_) => inner,
        })
    }

    /// Derivative of the bilinear interpolant inside the quad of `s`.
    fn quad_slope(&self, s: &Stencil<T>, along_x: bool) -> T {
        let one = T::one();
        let h00 = self.cell(s.r0, s.c0);
        let h01 = self.cell(s.r0, s.c1);
        let h10 = self.cell(s.r1, s.c0);
        let h11 = self.cell(s.r1, s.c1);
        if along_x {
            if s.c0 == s.c1 {
                return T::zero();
            }
            ((h01 - h00) * (one - s.ty) + (h11 - h10) * s.ty) / self.cell_size
        } else {
            if s.r0 == s.r1 {
                return T::zero();
            }
            ((h10 - h00) * (one - s.tx) + (h11 - h01) * s.tx) / self.cell_size
        }
    }

    /// Parses an ESRI ASCII grid.
    ///
    /// Header keys are case-insensitive. Besides the standard keys, an
    /// optional `units feet|meters` line selects the height unit; feet are
    /// converted to meters. File rows run top to bottom and are flipped into
    /// bottom-up storage.
    pub fn from_esri_ascii(text: &str) -> Result<Self> {
        let mut header = Header::default();
        let mut lines = text.lines().enumerate().peekable();
        while let Some((_, line)) = lines.peek() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                lines.next();
                continue;
            }
            let mut parts = trimmed.split_whitespace();
            let key = parts.next().unwrap_or_default();
            if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
                break;
            }
            let value = parts.next().ok_or_else(|| Error::Parse {
                key: key.to_string(),
                message: "missing value".into(),
            })?;
            if parts.next().is_some() {
                return Err(Error::Parse {
                    key: key.to_string(),
                    message: "unexpected extra tokens".into(),
                });
            }
            header.set(key, value)?;
            lines.next();
        }
        let ncols = header.ncols.ok_or_else(|| missing("ncols"))?;
        let nrows = header.nrows.ok_or_else(|| missing("nrows"))?;
        let cell_size = header.cellsize.ok_or_else(|| missing("cellsize"))?;
        let origin_x = match (header.xllcorner, header.xllcenter) {
            (Some(v), _) => v,
            (None, Some(v)) => v - cell_size / 2.0,
            _ => return Err(missing("xllcorner")),
        };
        let origin_y = match (header.yllcorner, header.yllcenter) {
            (Some(v), _) => v,
            (None, Some(v)) => v - cell_size / 2.0,
            _ => return Err(missing("yllcorner")),
        };
        let nodata = header.nodata.unwrap_or(DEFAULT_NODATA);
        let scale = if header.feet { FEET_TO_METERS } else { 1.0 };

        let mut file_rows: Vec<Vec<f64>> = Vec::with_capacity(nrows);
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| Error::Parse {
                        key: format!("line {}", lineno + 1),
                        message: format!("`{tok}` is not a number"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != ncols {
                return Err(Error::DimensionMismatch {
                    context: format!("data row {}", file_rows.len() + 1),
                    expected: ncols,
                    found: row.len(),
                });
            }
            file_rows.push(row);
        }
        if file_rows.len() != nrows {
            return Err(Error::DimensionMismatch {
                context: "number of data rows".into(),
                expected: nrows,
                found: file_rows.len(),
            });
        }

        let mut heights = Vec::with_capacity(ncols * nrows);
        for (r, row) in file_rows.iter().rev().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v == nodata {
                    heights.push(T::lit(nodata));
                    continue;
                }
                let meters = v * scale;
                if meters < 0.0 {
                    return Err(Error::value(format!(
                        "negative height {meters} m at row {r}, col {c}"
                    )));
                }
                heights.push(T::lit(meters));
            }
        }
        Self::new(
            ncols,
            nrows,
            T::lit(cell_size),
            T::lit(origin_x),
            T::lit(origin_y),
            T::lit(nodata),
            heights,
        )
    }

    pub fn read_esri_ascii(mut reader: impl Read) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text).map_err(|e| Error::Parse {
            key: "stream".into(),
            message: e.to_string(),
        })?;
        Self::from_esri_ascii(&text)
    }

    /// Serializes to ESRI ASCII with heights in meters at six significant
    /// digits.
    pub fn to_esri_ascii(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "xllcorner {}", format_sig(self.origin_x.as_f64(), 6));
        let _ = writeln!(out, "yllcorner {}", format_sig(self.origin_y.as_f64(), 6));
        let _ = writeln!(out, "cellsize {}", format_sig(self.cell_size.as_f64(), 6));
        let _ = writeln!(out, "NODATA_value {}", format_sig(self.nodata.as_f64(), 6));
        for r in (0..self.nrows).rev() {
            for c in 0..self.ncols {
                if c > 0 {
                    out.push(' ');
                }
                out.push_str(&format_sig(self.cell(r, c).as_f64(), 6));
            }
            out.push('\n');
        }
        out
    }
}

/// Splits a fractional index into the lower/upper node and the offset
/// between them. The last node folds onto the last interval with `t = 1`.
fn split_index<T: Real>(f: T, n: usize) -> (usize, usize, T) {
    if n == 1 {
        return (0, 0, T::zero());
    }
    let lower = f.floor().to_usize().unwrap_or(0).min(n - 2);
    (lower, lower + 1, f - T::from_usize_lossy(lower))
}

fn missing(key: &str) -> Error {
    Error::Parse {
        key: key.to_string(),
        message: "required header key missing".into(),
    }
}

#[derive(Default)]
struct Header {
    ncols: Option<usize>,
    nrows: Option<usize>,
    xllcorner: Option<f64>,
    yllcorner: Option<f64>,
    xllcenter: Option<f64>,
    yllcenter: Option<f64>,
    cellsize: Option<f64>,
    nodata: Option<f64>,
    feet: bool,
}

impl Header {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |message: &str| Error::Parse {
            key: key.to_string(),
            message: format!("{message}: `{value}`"),
        };
        let float = || value.parse::<f64>().map_err(|_| bad("expected a number"));
        let count = || {
            value
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| bad("expected a positive integer"))
        };
        match key.to_ascii_lowercase().as_str() {
            "ncols" => self.ncols = Some(count()?),
            "nrows" => self.nrows = Some(count()?),
            "xllcorner" => self.xllcorner = Some(float()?),
            "yllcorner" => self.yllcorner = Some(float()?),
            "xllcenter" => self.xllcenter = Some(float()?),
            "yllcenter" => self.yllcenter = Some(float()?),
            "cellsize" => {
                let v = float()?;
                if !(v > 0.0) {
                    return Err(bad("cell size must be positive"));
                }
                self.cellsize = Some(v);
            }
            "nodata_value" => self.nodata = Some(float()?),
            "units" => match value.to_ascii_lowercase().as_str() {
                "feet" | "ft" => self.feet = true,
                "meters" | "metres" | "m" => self.feet = false,
                _ => return Err(bad("expected `feet` or `meters`")),
            },
            _ => {
                return Err(Error::Parse {
                    key: key.to_string(),
                    message: "unknown header key".into(),
                })
            }
        }
        Ok(())
    }
}

/// Formats `v` with `digits` significant digits in the style of C's `%g`.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_fraction(mantissa);
        format!(
            "{mantissa}e{}{:02}",
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
