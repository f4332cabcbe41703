//! Scalar fields sampled on uniform rectangular grids.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::{Rect, Vec2};

/// Scalar field on the nodes `origin + (i h, j h)`, `0 <= i < nx`, `0 <= j < ny`.
///
/// Values are stored row-major: node `(i, j)` lives at `j * nx + i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    origin: Vec2,
    h: f64,
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(origin: Vec2, h: f64, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid("h", format!("spacing must be positive, got {h}")));
        }
        if nx < 2 || ny < 2 {
            return Err(invalid("nx/ny", format!("need at least 2x2 nodes, got {nx}x{ny}")));
        }
        if values.len() != nx * ny {
            return Err(invalid(
                "values",
                format!("expected {} values, got {}", nx * ny, values.len()),
            ));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(
                "values",
                format!("non-finite value at node ({}, {})", k % nx, k / nx),
            ));
        }
        if !origin.is_finite() {
            return Err(invalid("origin", "must be finite"));
        }
        Ok(GridField {
            origin,
            h,
            nx,
            ny,
            values,
        })
    }

    /// Samples `f` at every node.
    pub fn from_fn(origin: Vec2, h: f64, nx: usize, ny: usize, f: impl Fn(Vec2) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(origin + Vec2::new(i as f64 * h, j as f64 * h)));
            }
        }
        GridField::new(origin, h, nx, ny, values)
    }

    /// Grid covering `rect` with `n` nodes along x and the matching spacing along y.
    pub fn covering(rect: Rect, n: usize, f: impl Fn(Vec2) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", "need at least 2 nodes"));
        }
        let h = rect.width() / (n - 1) as f64;
        let ny = (rect.height() / h).round() as usize + 1;
        GridField::from_fn(rect.min, h, n, ny, f)
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64 * self.h, j as f64 * self.h)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.values[k] = v;
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(
            self.origin,
            self.origin + Vec2::new((self.nx - 1) as f64 * self.h, (self.ny - 1) as f64 * self.h),
        )
    }

    /// Fractional grid coordinates of `p`.
    #[inline]
    pub fn to_grid(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.origin.x) / self.h, (p.y - self.origin.y) / self.h)
    }

    /// Nearest node to `p`, clamped to the grid.
    pub fn nearest(&self, p: Vec2) -> (usize, usize) {
        let (gx, gy) = self.to_grid(p);
        let i = gx.round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = gy.round().clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }

    /// Bilinear interpolation; `None` outside the grid (a slack of 1e-9 cells is allowed).
    #[inline]
    pub fn interp(&self, p: Vec2) -> Option<f64> {
        let (gx, gy) = self.to_grid(p);
        let mx = (self.nx - 1) as f64;
        let my = (self.ny - 1) as f64;
        const SLACK: f64 = 1e-9;
        if !(gx >= -SLACK && gy >= -SLACK && gx <= mx + SLACK && gy <= my + SLACK) {
            return None;
        }
        Some(self.interp_grid(gx.clamp(0.0, mx), gy.clamp(0.0, my)))
    }

    /// Bilinear interpolation at clamped fractional grid coordinates.
    #[inline]
    pub(crate) fn interp_grid(&self, gx: f64, gy: f64) -> f64 {
        let i = (gx as usize).min(self.nx - 2);
        let j = (gy as usize).min(self.ny - 2);
        let tx = gx - i as f64;
        let ty = gy - j as f64;
        let k = j * self.nx + i;
        let v00 = self.values[k];
        let v10 = self.values[k + 1];
        let v01 = self.values[k + self.nx];
        let v11 = self.values[k + self.nx + 1];
        let a = v00 + (v10 - v00) * tx;
        let b = v01 + (v11 - v01) * tx;
        a + (b - a) * ty
    }

    /// Interpolation with the query clamped into the grid.
    pub fn interp_clamped(&self, p: Vec2) -> f64 {
        let (gx, gy) = self.to_grid(p);
        self.interp_grid(
            gx.clamp(0.0, (self.nx - 1) as f64),
            gy.clamp(0.0, (self.ny - 1) as f64),
        )
    }

    /// A field with the same layout and values `f(point, value)`.
    pub fn map(&self, f: impl Fn(Vec2, f64) -> f64) -> GridField {
        let mut out = self.clone();
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = self.index(i, j);
                out.values[k] = f(self.point(i, j), self.values[k]);
            }
        }
        out
    }

    pub fn same_layout(&self, other: &GridField) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.h == other.h && self.origin == other.origin
    }

    /// Sup-norm of the difference over nodes whose points satisfy `keep`.
    pub fn max_abs_diff_where(&self, other: &GridField, keep: impl Fn(Vec2) -> bool) -> f64 {
        assert!(self.same_layout(other), "grid layouts differ");
        let mut m = 0.0f64;
        for j in 0..self.ny {
            for i in 0..self.nx {
                if keep(self.point(i, j)) {
                    m = m.max((self.at(i, j) - other.at(i, j)).abs());
                }
            }
        }
        m
    }

    /// Largest absolute difference quotient between axis neighbours.
    pub fn lipschitz_estimate(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.ny {
            for i in 0..self.nx {
                if i + 1 < self.nx {
                    m = m.max((self.at(i + 1, j) - self.at(i, j)).abs());
                }
                if j + 1 < self.ny {
                    m = m.max((self.at(i, j + 1) - self.at(i, j)).abs());
                }
            }
        }
        m / self.h
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Serializes to the grid CSV format: a `nx,ny,h,ox,oy` header line, the
    /// header values, then one row of `nx` values per `j`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("nx,ny,h,ox,oy\n");
        let _ = writeln!(s, "{},{},{:?},{:?},{:?}", self.nx, self.ny, self.h, self.origin.x, self.origin.y);
        for j in 0..self.ny {
            let row = &self.values[j * self.nx..(j + 1) * self.nx];
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let perr = |msg: String| Error::Parse {
            what: "grid CSV".into(),
            msg,
        };
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| perr("empty input".into()))?;
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        if names != ["nx", "ny", "h", "ox", "oy"] {
            return Err(perr(format!("expected header `nx,ny,h,ox,oy`, got `{header}`")));
        }
        let meta_line = lines.next().ok_or_else(|| perr("missing header values".into()))?;
        let meta: Vec<&str> = meta_line.split(',').map(str::trim).collect();
        if meta.len() != 5 {
            return Err(perr(format!("header values need 5 fields, got {}", meta.len())));
        }
        let nx: usize = meta[0].parse().map_err(|e| perr(format!("nx: {e}")))?;
        let ny: usize = meta[1].parse().map_err(|e| perr(format!("ny: {e}")))?;
        let h: f64 = meta[2].parse().map_err(|e| perr(format!("h: {e}")))?;
        let ox: f64 = meta[3].parse().map_err(|e| perr(format!("ox: {e}")))?;
        let oy: f64 = meta[4].parse().map_err(|e| perr(format!("oy: {e}")))?;
        let mut values = Vec::with_capacity(nx.saturating_mul(ny));
        for (row, line) in lines.enumerate() {
            for tok in line.split(',') {
                let v: f64 = tok
                    .trim()
                    .parse()
                    .map_err(|e| perr(format!("row {row}: `{}`: {e}", tok.trim())))?;
                values.push(v);
            }
        }
        GridField::new(Vec2::new(ox, oy), h, nx, ny, values)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        GridField::from_csv(&text)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}
