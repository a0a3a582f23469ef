//! State-action patterns: the commanded acceleration sampled on a grid over
//! the position-velocity plane.
//!
//! Row 0 of the grid is the highest velocity and column 0 the lowest
//! position, so the image reads with `p` to the right and `v` upward.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{sign, Controller, State};
use crate::textio::sig9;

pub const MIN_RESOLUTION: usize = 16;
pub const MAX_RESOLUTION: usize = 8192;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RasterError {
    #[error("empty range {0:?}")]
    EmptyRange((f64, f64)),
    #[error("resolution {0} outside [16, 8192]")]
    Resolution(usize),
    #[error("non-finite action at {0}")]
    NonFinite(State),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RasterMode {
    /// Gray level proportional to the action.
    Action,
    /// Black, mid-gray and white for negative, zero and positive actions.
    Sign,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterSpec {
    pub p_range: (f64, f64),
    pub v_range: (f64, f64),
    pub resolution: usize,
    pub mode: RasterMode,
}

impl Default for RasterSpec {
    fn default() -> Self {
        RasterSpec {
            p_range: (-100.0, 100.0),
            v_range: (-100.0, 100.0),
            resolution: 512,
            mode: RasterMode::Sign,
        }
    }
}

impl RasterSpec {
    pub fn validate(&self) -> Result<(), RasterError> {
        for r in [self.p_range, self.v_range] {
            if r.0 >= r.1 || !r.0.is_finite() || !r.1.is_finite() {
                return Err(RasterError::EmptyRange(r));
            }
        }
        if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&self.resolution) {
            return Err(RasterError::Resolution(self.resolution));
        }
        Ok(())
    }

    /// Position at the center of column `col`.
    pub fn p_at(&self, col: usize) -> f64 {
        let (lo, hi) = self.p_range;
        lo + (col as f64 + 0.5) * (hi - lo) / self.resolution as f64
    }

    /// Velocity at the center of row `row`.
    pub fn v_at(&self, row: usize) -> f64 {
        let (lo, hi) = self.v_range;
        hi - (row as f64 + 0.5) * (hi - lo) / self.resolution as f64
    }

    /// Fractional pixel coordinates `(col, row)` of a state.
    pub fn pixel_of(&self, s: State) -> (f64, f64) {
        let n = self.resolution as f64;
        let col = (s.p - self.p_range.0) / (self.p_range.1 - self.p_range.0) * n - 0.5;
        let row = (self.v_range.1 - s.v) / (self.v_range.1 - self.v_range.0) * n - 0.5;
        (col, row)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub spec: RasterSpec,
    pub action_bound: f64,
    /// Row-major actions, `resolution × resolution`.
    pub actions: Vec<f64>,
}

/// Rows are split across the available cores; the result does not depend on
/// the thread count.
pub fn rasterize<C: Controller + Sync + ?Sized>(
    controller: &C,
    spec: RasterSpec,
    action_bound: f64,
) -> Result<Raster, RasterError> {
    spec.validate()?;
    let n = spec.resolution;
    let threads = std::thread::available_parallelism().map_or(1, |t| t.get()).min(n);
    let rows_per = n.div_ceil(threads);
    let mut actions = vec![0.0; n * n];
    std::thread::scope(|scope| {
        let handles: Vec<_> = actions
            .chunks_mut(rows_per * n)
            .enumerate()
            .map(|(chunk, out)| {
                scope.spawn(move || {
                    for (k, cell) in out.iter_mut().enumerate() {
                        let (row, col) = (chunk * rows_per + k / n, k % n);
                        let s = State::new(spec.p_at(col), spec.v_at(row));
                        *cell = controller.action(s);
                        if !cell.is_finite() {
                            return Err(RasterError::NonFinite(s));
                        }
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().expect("raster worker panicked"))
    })?;
    Ok(Raster {
        spec,
        action_bound,
        actions,
    })
}

impl Raster {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.actions[row * self.spec.resolution + col]
    }

    pub fn sign_at(&self, row: usize, col: usize) -> i8 {
        sign(self.at(row, col)) as i8
    }

    /// Gray level of one action: `[-ā, ā] → [0, 255]` in action mode.
    pub fn quantize(&self, a: f64) -> u8 {
        match self.spec.mode {
            RasterMode::Action => {
                let t = ((a + self.action_bound) / (2.0 * self.action_bound)).clamp(0.0, 1.0);
                (t * 255.0).round() as u8
            }
            RasterMode::Sign => match sign(a) as i8 {
                -1 => 0,
                0 => 128,
                _ => 255,
            },
        }
    }

    /// Inverse of [`Raster::quantize`] in action mode.
    pub fn dequantize(&self, level: u8) -> f64 {
        -self.action_bound + 2.0 * self.action_bound * f64::from(level) / 255.0
    }

    pub fn pixels(&self) -> Vec<u8> {
        self.actions.iter().map(|&a| self.quantize(a)).collect()
    }

    /// Binary portable graymap (P5).
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.spec.resolution;
        write!(out, "P5\n{n} {n}\n255\n")?;
        out.write_all(&self.pixels())
    }

    /// Header row of column positions, then one row per velocity.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.spec.resolution;
        write!(out, "v\\p")?;
        for col in 0..n {
            write!(out, ",{}", sig9(self.spec.p_at(col)))?;
        }
        writeln!(out)?;
        for row in 0..n {
            write!(out, "{}", sig9(self.spec.v_at(row)))?;
            for col in 0..n {
                write!(out, ",{}", sig9(self.at(row, col)))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Pixels with a 4-neighbor of different sign.
    pub fn boundary_pixels(&self) -> Vec<(usize, usize)> {
        let n = self.spec.resolution;
        let mut out = Vec::new();
        for row in 0..n {
            for col in 0..n {
                let s = self.sign_at(row, col);
                let differs = (row + 1 < n && self.sign_at(row + 1, col) != s)
                    || (col + 1 < n && self.sign_at(row, col + 1) != s)
                    || (row > 0 && self.sign_at(row - 1, col) != s)
                    || (col > 0 && self.sign_at(row, col - 1) != s);
                if differs {
                    out.push((row, col));
                }
            }
        }
        out
    }

    /// Largest 8-connected group of boundary pixels.
    pub fn largest_boundary_component(&self) -> Vec<(usize, usize)> {
        let n = self.spec.resolution;
        let mut mask = vec![false; n * n];
        for (r, c) in self.boundary_pixels() {
            mask[r * n + c] = true;
        }
        let mut seen = vec![false; n * n];
        let mut best = Vec::new();
        for start in 0..n * n {
            if !mask[start] || seen[start] {
                continue;
            }
            let mut component = Vec::new();
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(idx) = stack.pop() {
                let (r, c) = (idx / n, idx % n);
                component.push((r, c));
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= n as i64 || nc >= n as i64 {
                            continue;
                        }
                        let j = nr as usize * n + nc as usize;
                        if mask[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
            if component.len() > best.len() {
                best = component;
            }
        }
        best
    }

    /// Whether some connected sign boundary runs between two different
    /// image edges.
    pub fn has_spanning_boundary(&self) -> bool {
        let n = self.spec.resolution;
        let component = self.largest_boundary_component();
        let mut edges = [false; 4];
        for &(r, c) in &component {
            edges[0] |= r == 0;
            edges[1] |= r + 1 == n;
            edges[2] |= c == 0;
            edges[3] |= c + 1 == n;
        }
        edges.iter().filter(|&&e| e).count() >= 2
    }
}
