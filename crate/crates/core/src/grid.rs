//! Periodic square lattice of binary strategies.
//!
//! Cells are stored row-major: agent `i` sits at row `i / L`, column `i % L`.
//! Every agent has four von Neumann neighbours, always reported in the order
//! north, east, south, west. That order is used for every tie-break in the
//! crate, so it must not change.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

/// Smallest side length for which the four neighbours are distinct.
pub const MIN_SIDE: usize = 3;

/// One-shot Prisoner's Dilemma action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Strategy {
    Cooperate = 0,
    Defect = 1,
}

impl Strategy {
    pub fn to_char(self) -> char {
        match self {
            Strategy::Cooperate => 'C',
            Strategy::Defect => 'D',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'C' => Some(Strategy::Cooperate),
            'D' => Some(Strategy::Defect),
            _ => None,
        }
    }

    pub fn is_cooperator(self) -> bool {
        self == Strategy::Cooperate
    }
}

/// Short for `Strategy::Cooperate`.
pub const C: Strategy = Strategy::Cooperate;
/// Short for `Strategy::Defect`.
pub const D: Strategy = Strategy::Defect;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("side length {0} is below the minimum of {MIN_SIDE}")]
    SideTooSmall(usize),
    #[error("expected {expected} cells for side {side}, got {actual}")]
    CellCount {
        side: usize,
        expected: usize,
        actual: usize,
    },
    #[error("cooperation probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("snapshot line {line}: {reason}")]
    Snapshot { line: usize, reason: String },
}

/// Checks that `side` is a usable lattice side length.
pub fn check_side(side: usize) -> Result<(), GridError> {
    if side < MIN_SIDE {
        Err(GridError::SideTooSmall(side))
    } else {
        Ok(())
    }
}

/// Neighbours of agent `i` on an `side × side` torus, as (north, east, south, west).
///
/// Callers are expected to have validated `side >= 3` and `i < side * side`
/// when building their configuration; this is checked only in debug builds.
#[inline]
pub fn neighbours(i: usize, side: usize) -> [usize; 4] {
    debug_assert!(side >= MIN_SIDE && i < side * side);
    let row = i / side;
    let col = i % side;
    let north = if row == 0 { side - 1 } else { row - 1 };
    let south = if row + 1 == side { 0 } else { row + 1 };
    let west = if col == 0 { side - 1 } else { col - 1 };
    let east = if col + 1 == side { 0 } else { col + 1 };
    [
        north * side + col,
        row * side + east,
        south * side + col,
        row * side + west,
    ]
}

/// An `L × L` lattice of strategies with periodic boundaries.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Grid {
    side: usize,
    cells: Vec<Strategy>,
}

impl Grid {
    pub fn new(side: usize, cells: Vec<Strategy>) -> Result<Self, GridError> {
        check_side(side)?;
        if cells.len() != side * side {
            return Err(GridError::CellCount {
                side,
                expected: side * side,
                actual: cells.len(),
            });
        }
        Ok(Grid { side, cells })
    }

    pub fn filled(side: usize, strategy: Strategy) -> Result<Self, GridError> {
        check_side(side)?;
        Ok(Grid {
            side,
            cells: vec![strategy; side * side],
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Population size Z = L·L.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Strategy] {
        &self.cells
    }

    pub fn get(&self, i: usize) -> Strategy {
        self.cells[i]
    }

    pub fn set(&mut self, i: usize, s: Strategy) {
        self.cells[i] = s;
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.side + col
    }

    pub fn neighbours(&self, i: usize) -> [usize; 4] {
        neighbours(i, self.side)
    }

    /// Number of cooperators, x_C.
    pub fn coop_count(&self) -> usize {
        self.cells.iter().filter(|s| s.is_cooperator()).count()
    }

    pub fn defect_count(&self) -> usize {
        self.len() - self.coop_count()
    }

    /// Number of cooperators among the four neighbours of `i`.
    #[inline]
    pub fn coop_neighbours(&self, i: usize) -> usize {
        self.neighbours(i)
            .iter()
            .filter(|&&j| self.cells[j].is_cooperator())
            .count()
    }

    /// The shared strategy if every cell holds the same one.
    pub fn homogeneous(&self) -> Option<Strategy> {
        let first = *self.cells.first()?;
        self.cells.iter().all(|&s| s == first).then_some(first)
    }

    /// 64-bit FNV-1a digest of the side length (8 bytes, little endian)
    /// followed by one byte per cell (0 = C, 1 = D) in row-major order.
    ///
    /// The byte stream and constants are fixed, so digests are stable across
    /// runs and platforms. A single-cell change always changes the digest,
    /// since every FNV-1a step is a bijection of the running state.
    pub fn digest(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        for byte in (self.side as u64).to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(PRIME);
        }
        for &s in &self.cells {
            h ^= s as u64;
            h = h.wrapping_mul(PRIME);
        }
        h
    }

    /// Text snapshot: `L=<side>` then `side` lines of `C`/`D`, each newline terminated.
    pub fn to_snapshot(&self) -> String {
        let mut out = String::with_capacity(self.len() + self.side + 16);
        out.push_str(&format!("L={}\n", self.side));
        for row in self.cells.chunks(self.side) {
            out.extend(row.iter().map(|s| s.to_char()));
            out.push('\n');
        }
        out
    }

    pub fn parse_snapshot(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| GridError::Snapshot {
            line: 1,
            reason: "empty snapshot".into(),
        })?;
        let side: usize = header
            .trim_end()
            .strip_prefix("L=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| GridError::Snapshot {
                line: 1,
                reason: format!("expected `L=<int>`, found `{header}`"),
            })?;
        check_side(side)?;
        let mut cells = Vec::with_capacity(side * side);
        for row in 0..side {
            let line_no = row + 2;
            let line = lines.next().ok_or_else(|| GridError::Snapshot {
                line: line_no,
                reason: format!("missing row {row}"),
            })?;
            let line = line.trim_end_matches('\r');
            if line.chars().count() != side {
                return Err(GridError::Snapshot {
                    line: line_no,
                    reason: format!("row has {} cells, expected {side}", line.chars().count()),
                });
            }
            for c in line.chars() {
                cells.push(Strategy::from_char(c).ok_or_else(|| GridError::Snapshot {
                    line: line_no,
                    reason: format!("invalid cell `{c}`"),
                })?);
            }
        }
        if let Some((extra, l)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
            return Err(GridError::Snapshot {
                line: side + 2 + extra,
                reason: format!("unexpected trailing content `{l}`"),
            });
        }
        Grid::new(side, cells)
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid {{ side: {}, coop: {} }}", self.side, self.coop_count())
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_snapshot())
    }
}

impl FromStr for Grid {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Grid::parse_snapshot(s)
    }
}

/// Independent Bernoulli initialisation: each cell, in row-major order,
/// consumes one `gen_bool(coop_probability)` draw from `rng`.
pub fn random_grid<R: Rng + ?Sized>(
    side: usize,
    coop_probability: f64,
    rng: &mut R,
) -> Result<Grid, GridError> {
    check_side(side)?;
    if !(0.0..=1.0).contains(&coop_probability) {
        return Err(GridError::Probability(coop_probability));
    }
    let cells = (0..side * side)
        .map(|_| if rng.gen_bool(coop_probability) { C } else { D })
        .collect();
    Ok(Grid { side, cells })
}

/// Exactly `round(p·Z)` cooperators placed by a Fisher-Yates shuffle.
pub fn random_grid_exact<R: Rng + ?Sized>(
    side: usize,
    coop_probability: f64,
    rng: &mut R,
) -> Result<Grid, GridError> {
    use rand::seq::SliceRandom;

    check_side(side)?;
    if !(0.0..=1.0).contains(&coop_probability) {
        return Err(GridError::Probability(coop_probability));
    }
    let z = side * side;
    let n_coop = (coop_probability * z as f64).round() as usize;
    let mut cells: Vec<Strategy> = (0..z).map(|i| if i < n_coop { C } else { D }).collect();
    cells.shuffle(rng);
    Ok(Grid { side, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn corner_neighbours_wrap() {
        assert_eq!(neighbours(0, 3), [6, 1, 3, 2]);
    }

    #[test]
    fn centre_neighbours() {
        assert_eq!(neighbours(4, 3), [1, 5, 7, 3]);
    }

    #[test]
    fn neighbours_are_symmetric_and_distinct() {
        for side in [3, 4, 7, 10] {
            for i in 0..side * side {
                let n = neighbours(i, side);
                let mut sorted = n;
                sorted.sort_unstable();
                assert!(sorted.windows(2).all(|w| w[0] != w[1]), "i={i} side={side}");
                for &j in &n {
                    assert!(neighbours(j, side).contains(&i));
                }
                // north of south, east of west, ...
                assert_eq!(neighbours(n[2], side)[0], i);
                assert_eq!(neighbours(n[0], side)[2], i);
                assert_eq!(neighbours(n[1], side)[3], i);
                assert_eq!(neighbours(n[3], side)[1], i);
            }
        }
    }

    #[test]
    fn coop_counts() {
        let all_c = Grid::filled(10, C).unwrap();
        assert_eq!(all_c.coop_count(), 100);
        assert_eq!(Grid::filled(10, D).unwrap().coop_count(), 0);
        let mut one_d = all_c.clone();
        one_d.set(37, D);
        assert_eq!(one_d.coop_count(), 99);
        assert_eq!(one_d.coop_count() + one_d.defect_count(), 100);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(Grid::filled(2, C), Err(GridError::SideTooSmall(2)));
        assert!(matches!(
            Grid::new(3, vec![C; 8]),
            Err(GridError::CellCount { actual: 8, .. })
        ));
    }

    #[test]
    fn homogeneity() {
        assert_eq!(Grid::filled(4, C).unwrap().homogeneous(), Some(C));
        assert_eq!(Grid::filled(4, D).unwrap().homogeneous(), Some(D));
        let mut g = Grid::filled(4, D).unwrap();
        g.set(5, C);
        assert_eq!(g.homogeneous(), None);
    }

    #[test]
    fn digest_is_pure_and_content_based() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_grid(20, 0.5, &mut rng).unwrap();
        assert_eq!(g.digest(), g.digest());
        assert_eq!(g.digest(), g.clone().digest());
        // same cells, different side
        let a = Grid::filled(4, C).unwrap();
        let b = Grid::filled(5, C).unwrap();
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn single_flips_never_collide() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut collisions = 0;
        for _ in 0..10_000 {
            let mut g = random_grid(12, 0.5, &mut rng).unwrap();
            let h = g.digest();
            let i = rng.gen_range(0..g.len());
            let flipped = if g.get(i) == C { D } else { C };
            g.set(i, flipped);
            if g.digest() == h {
                collisions += 1;
            }
        }
        assert_eq!(collisions, 0);
    }

    #[test]
    fn random_grid_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(random_grid(5, 1.0, &mut rng).unwrap().homogeneous(), Some(C));
        assert_eq!(random_grid(5, 0.0, &mut rng).unwrap().homogeneous(), Some(D));
        assert_eq!(
            random_grid(5, 1.5, &mut rng),
            Err(GridError::Probability(1.5))
        );
        assert_eq!(
            random_grid(5, -0.1, &mut rng),
            Err(GridError::Probability(-0.1))
        );
    }

    #[test]
    fn random_grid_is_near_half() {
        // Binomial(10^4, 0.5) has sd 50, so ±200 is a 4-sigma band.
        let mut inside = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_grid(100, 0.5, &mut rng).unwrap().coop_count();
            if (4800..=5200).contains(&x) {
                inside += 1;
            }
        }
        assert!(inside >= 198, "{inside}/200 inside band");
    }

    #[test]
    fn random_grid_reproducible() {
        let a = random_grid(30, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = random_grid(30, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_half_initialisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_grid_exact(10, 0.5, &mut rng).unwrap();
        assert_eq!(g.coop_count(), 50);
    }

    #[test]
    fn snapshot_format() {
        let g = Grid::new(3, vec![C, D, C, C, C, C, D, D, D]).unwrap();
        assert_eq!(g.to_snapshot(), "L=3\nCDC\nCCC\nDDD\n");
        assert_eq!(Grid::parse_snapshot(&g.to_snapshot()).unwrap(), g);
    }

    #[test]
    fn snapshot_errors() {
        assert!(matches!(
            Grid::parse_snapshot("L=3\nCDC\nCC\nDDD\n"),
            Err(GridError::Snapshot { line: 3, .. })
        ));
        assert!(matches!(
            Grid::parse_snapshot("L=3\nCDC\nCXC\nDDD\n"),
            Err(GridError::Snapshot { line: 3, .. })
        ));
        assert!(matches!(
            Grid::parse_snapshot("side=3\n"),
            Err(GridError::Snapshot { line: 1, .. })
        ));
        assert!(matches!(
            Grid::parse_snapshot("L=3\nCDC\nCCC\n"),
            Err(GridError::Snapshot { line: 4, .. })
        ));
        assert!(matches!(
            Grid::parse_snapshot("L=3\nCDC\nCCC\nDDD\nCCC\n"),
            Err(GridError::Snapshot { .. })
        ));
    }
}
