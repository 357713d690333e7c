use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A grid position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.row, self.col)
    }
}

impl FromStr for Cell {
    type Err = String;

    /// Parses the `row,col` form used as map keys in answer-key files.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (r, c) = s
            .split_once(',')
            .ok_or_else(|| format!("expected `row,col`, got `{s}`"))?;
        let row = r.trim().parse().map_err(|_| format!("bad row in `{s}`"))?;
        let col = c.trim().parse().map_err(|_| format!("bad column in `{s}`"))?;
        Ok(Cell { row, col })
    }
}

/// A possibly partial assignment of item ids to the cells of a grid.
/// Cells without an entry are unfilled.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GridAssignment {
    pub rows: usize,
    pub cols: usize,
    cells: BTreeMap<Cell, String>,
}

impl GridAssignment {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cells: BTreeMap::new(),
        }
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    /// Places `id` at `cell`.
    ///
    /// # Panics
    /// If `cell` lies outside the grid.
    pub fn set(&mut self, cell: Cell, id: impl Into<String>) {
        assert!(
            self.contains(cell),
            "cell {cell} outside {}x{} grid",
            self.rows,
            self.cols
        );
        self.cells.insert(cell, id.into());
    }

    pub fn clear(&mut self, cell: Cell) -> Option<String> {
        self.cells.remove(&cell)
    }

    pub fn get(&self, cell: Cell) -> Option<&str> {
        self.cells.get(&cell).map(String::as_str)
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn filled_count(&self) -> usize {
        self.cells.len()
    }

    pub fn is_full(&self) -> bool {
        self.cells.len() == self.cell_count()
    }

    /// First unfilled cell in row-major order.
    pub fn first_unfilled(&self) -> Option<Cell> {
        self.all_cells().find(|c| !self.cells.contains_key(c))
    }

    pub fn all_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Cell::new(r, c)))
    }

    pub fn filled(&self) -> impl Iterator<Item = (Cell, &str)> {
        self.cells.iter().map(|(c, id)| (*c, id.as_str()))
    }
}
