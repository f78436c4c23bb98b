//! 20x20 stochastic grid without obstacles.
//!
//! Cells are indexed `0..400` row-major from the bottom-left corner (row 0 is
//! the bottom row, left to right); the external 1-based label is `index + 1`.
//! Each cell is also a point of the unit square: its center, on a 0.05 pitch.

use rand::Rng;

use crate::rng::Rng64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell(pub usize);

impl Cell {
    pub fn label(self) -> usize {
        self.0 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMove {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridMove {
    pub const ALL: [GridMove; 4] = [GridMove::Up, GridMove::Down, GridMove::Left, GridMove::Right];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    fn delta(self) -> (isize, isize) {
        match self {
            GridMove::Up => (0, 1),
            GridMove::Down => (0, -1),
            GridMove::Left => (-1, 0),
            GridMove::Right => (1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularOutcome {
    pub next: Cell,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularGridWorld {
    pub size: usize,
    pub success_prob: f64,
    pub episode_cap: usize,
    pub gamma: f64,
}

impl Default for TabularGridWorld {
    fn default() -> Self {
        Self {
            size: 20,
            success_prob: 0.8,
            episode_cap: 1000,
            gamma: 1.0,
        }
    }
}

impl TabularGridWorld {
    pub fn deterministic() -> Self {
        Self {
            success_prob: 1.0,
            ..Self::default()
        }
    }

    pub fn num_cells(&self) -> usize {
        self.size * self.size
    }

    pub fn pitch(&self) -> f64 {
        1.0 / self.size as f64
    }

    pub fn start(&self) -> Cell {
        Cell(0)
    }

    pub fn goal(&self) -> Cell {
        Cell(self.num_cells() - 1)
    }

    pub fn is_goal(&self, c: Cell) -> bool {
        c == self.goal()
    }

    /// (column, row), both from the bottom-left.
    pub fn col_row(&self, c: Cell) -> (usize, usize) {
        (c.0 % self.size, c.0 / self.size)
    }

    pub fn cell_at(&self, col: usize, row: usize) -> Cell {
        Cell(row * self.size + col)
    }

    /// Center coordinates in the unit square.
    pub fn center(&self, c: Cell) -> [f64; 2] {
        let (col, row) = self.col_row(c);
        let p = self.pitch();
        [(col as f64 + 0.5) * p, (row as f64 + 0.5) * p]
    }

    /// Cell whose square contains the (clamped) point.
    pub fn nearest_cell(&self, x: f64, y: f64) -> Cell {
        let idx = |v: f64| ((v / self.pitch()).floor().max(0.0) as usize).min(self.size - 1);
        let (x, y) = (if x.is_nan() { 0.0 } else { x }, if y.is_nan() { 0.0 } else { y });
        self.cell_at(idx(x), idx(y))
    }

    /// The up-to-8 surrounding cells, in a fixed order.
    pub fn neighbors8(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        let (col, row) = self.col_row(c);
        let n = self.size as isize;
        const OFFSETS: [(isize, isize); 8] =
            [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        OFFSETS.into_iter().filter_map(move |(dc, dr)| {
            let (nc, nr) = (col as isize + dc, row as isize + dr);
            (nc >= 0 && nc < n && nr >= 0 && nr < n).then(|| self.cell_at(nc as usize, nr as usize))
        })
    }

    /// Deterministic move; off-grid moves leave the cell unchanged.
    pub fn apply_move(&self, c: Cell, m: GridMove) -> Cell {
        let (col, row) = self.col_row(c);
        let (dc, dr) = m.delta();
        let (nc, nr) = (col as isize + dc, row as isize + dr);
        let n = self.size as isize;
        if nc < 0 || nc >= n || nr < 0 || nr >= n {
            c
        } else {
            self.cell_at(nc as usize, nr as usize)
        }
    }

    /// Outcome once the executed move is known.
    pub fn step_executed(&self, c: Cell, executed: GridMove) -> TabularOutcome {
        let next = self.apply_move(c, executed);
        TabularOutcome {
            next,
            reward: -1.0,
            terminal: self.is_goal(next),
        }
    }

    /// Intended move with probability `success_prob`, otherwise a move drawn
    /// uniformly from all four (which may coincide with the intended one).
    pub fn step(&self, c: Cell, intended: GridMove, rng: &mut Rng64) -> TabularOutcome {
        let executed = if rng.random::<f64>() < self.success_prob {
            intended
        } else {
            GridMove::ALL[rng.random_range(0..4)]
        };
        self.step_executed(c, executed)
    }

    /// Exact next-cell distribution of one step.
    pub fn transition_probs(&self, c: Cell, intended: GridMove) -> Vec<(Cell, f64)> {
        let slip = (1.0 - self.success_prob) / 4.0;
        let mut out: Vec<(Cell, f64)> = Vec::with_capacity(4);
        for m in GridMove::ALL {
            let p = slip + if m == intended { self.success_prob } else { 0.0 };
            if p == 0.0 {
                continue;
            }
            let next = self.apply_move(c, m);
            match out.iter_mut().find(|(n, _)| *n == next) {
                Some(entry) => entry.1 += p,
                None => out.push((next, p)),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn coordinates_round_trip() {
        let g = TabularGridWorld::default();
        for i in 0..g.num_cells() {
            let c = Cell(i);
            let [x, y] = g.center(c);
            assert_eq!(g.nearest_cell(x, y), c);
        }
        let close = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12;
        assert!(close(g.center(g.start()), [0.025, 0.025]));
        assert!(close(g.center(g.goal()), [0.975, 0.975]));
        assert_eq!(g.cell_at(1, 0), Cell(1));
        assert_eq!(g.goal().label(), 400);
    }

    #[test]
    fn forced_success_moves_right() {
        let g = TabularGridWorld::default();
        let out = g.step_executed(g.start(), GridMove::Right);
        assert_eq!(out.next, g.cell_at(1, 0));
        assert_eq!(out.reward, -1.0);
        assert!(!out.terminal);
        assert_eq!(g.step_executed(g.start(), GridMove::Left).next, g.start());
    }

    #[test]
    fn entering_goal_terminates() {
        let g = TabularGridWorld::default();
        let below = g.cell_at(19, 18);
        let out = g.step_executed(below, GridMove::Up);
        assert_eq!(out.next, g.goal());
        assert!(out.terminal);
    }

    #[test]
    fn success_frequency_matches_mixture() {
        // intended direction frequency = 0.8 + 0.2/4 = 0.85
        let g = TabularGridWorld::default();
        let mut rng = stream(9, Stream::Env);
        let c = g.cell_at(10, 10);
        let target = g.apply_move(c, GridMove::Right);
        let n = 100_000;
        let hits = (0..n).filter(|_| g.step(c, GridMove::Right, &mut rng).next == target).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.85).abs() < 0.01, "{freq}");
    }

    #[test]
    fn transition_probs_sum_to_one() {
        let g = TabularGridWorld::default();
        for c in [g.start(), g.cell_at(10, 10), g.cell_at(19, 3)] {
            for m in GridMove::ALL {
                let total: f64 = g.transition_probs(c, m).iter().map(|(_, p)| p).sum();
                assert!((total - 1.0).abs() < 1e-15);
            }
        }
        // corner: left and down both stay put
        let p = g.transition_probs(g.start(), GridMove::Left);
        let stay = p.iter().find(|(n, _)| *n == g.start()).unwrap().1;
        assert!((stay - (0.8 + 0.05 + 0.05)).abs() < 1e-15);
    }

    #[test]
    fn neighbors_stay_on_grid() {
        let g = TabularGridWorld::default();
        assert_eq!(g.neighbors8(g.start()).count(), 3);
        assert_eq!(g.neighbors8(g.cell_at(5, 5)).count(), 8);
        assert_eq!(g.neighbors8(g.cell_at(0, 5)).count(), 5);
    }
}
