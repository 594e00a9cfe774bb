//! Plain-text maze layouts.
//!
//! One character per cell, one line per row, row 0 at the top:
//!
//! ```text
//! #  wall
//! .  free
//! S  free, part of the start region
//! G  free, part of the goal region
//! ```
//!
//! Blank lines and lines starting with `;` are ignored. All rows must have the
//! same width. Cells are addressed as `(x, y)` = (column, row).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Free,
    Start,
    Goal,
}

impl Cell {
    pub fn is_wall(self) -> bool {
        self == Cell::Wall
    }

    fn symbol(self) -> char {
        match self {
            Cell::Wall => '#',
            Cell::Free => '.',
            Cell::Start => 'S',
            Cell::Goal => 'G',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
}

impl Layout {
    pub fn new(width: usize, height: usize, cells: Vec<Cell>) -> Result<Self> {
        if width == 0 || height == 0 || cells.len() != width * height {
            return Err(Error::Shape(format!(
                "layout {width}x{height} needs {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        let layout = Self { width, height, cells };
        if layout.cells_of(Cell::Start).is_empty() {
            return Err(Error::Parse("layout has no start cell `S`".into()));
        }
        if layout.cells_of(Cell::Goal).is_empty() {
            return Err(Error::Parse("layout has no goal cell `G`".into()));
        }
        Ok(layout)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    /// Out-of-bounds coordinates count as walls.
    pub fn is_wall(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return true;
        }
        self.cell(x as usize, y as usize).is_wall()
    }

    pub fn cells_of(&self, kind: Cell) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.cell(x, y) == kind)
            .collect()
    }

    pub fn walls(&self) -> Vec<(usize, usize)> {
        self.cells_of(Cell::Wall)
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with(';'))
            .collect();
        if rows.is_empty() {
            return Err(Error::Parse("empty layout".into()));
        }
        let width = rows[0].chars().count();
        let mut cells = Vec::with_capacity(width * rows.len());
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Parse(format!(
                    "row {y} has width {}, expected {width}",
                    row.chars().count()
                )));
            }
            for (x, ch) in row.chars().enumerate() {
                cells.push(match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Free,
                    'S' => Cell::Start,
                    'G' => Cell::Goal,
                    other => return Err(Error::Parse(format!("unknown symbol `{other}` at ({x}, {y})"))),
                });
            }
        }
        Layout::new(width, rows.len(), cells)
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in 0..self.height {
            let row: String = (0..self.width).map(|x| self.cell(x, y).symbol()).collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}
