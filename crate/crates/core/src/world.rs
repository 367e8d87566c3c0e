//! The known, stationary environment model shared by every agent: grid
//! geometry, aliased cell features, king-move transition kernels and the
//! Chebyshev sensing operator.

use serde::{Deserialize, Serialize};

use crate::belief::{Belief, GridIndex};

pub type FeatureId = u32;

/// The nine king-graph controls. Rows grow southward, columns eastward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Stay,
    North,
    NorthEast,
    East,
    SouthEast,
    South,
    SouthWest,
    West,
    NorthWest,
}

impl Action {
    pub const ALL: [Action; 9] = [
        Action::Stay,
        Action::North,
        Action::NorthEast,
        Action::East,
        Action::SouthEast,
        Action::South,
        Action::SouthWest,
        Action::West,
        Action::NorthWest,
    ];

    /// `(d_row, d_col)` with each component in `{-1, 0, 1}`.
    pub const fn displacement(self) -> (i8, i8) {
        match self {
            Action::Stay => (0, 0),
            Action::North => (-1, 0),
            Action::NorthEast => (-1, 1),
            Action::East => (0, 1),
            Action::SouthEast => (1, 1),
            Action::South => (1, 0),
            Action::SouthWest => (1, -1),
            Action::West => (0, -1),
            Action::NorthWest => (-1, -1),
        }
    }

    /// The action whose displacement is the componentwise sign of `(d_row, d_col)`.
    pub fn from_signs(d_row: i64, d_col: i64) -> Action {
        let target = (d_row.signum() as i8, d_col.signum() as i8);
        Action::ALL
            .into_iter()
            .find(|a| a.displacement() == target)
            .expect("every sign pair has an action")
    }

    pub const fn index(self) -> usize {
        self as usize
    }
}

/// Grid dimensions plus the feature id each cell emits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    height: usize,
    width: usize,
    alphabet: u32,
    features: Vec<FeatureId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GridError {
    #[error("grid dimensions must be positive, got {height}x{width}")]
    EmptyGrid { height: usize, width: usize },
    #[error("feature alphabet must be at least 1")]
    EmptyAlphabet,
    #[error("expected {expected} cell features, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error("cell {cell} has feature {feature} outside alphabet of size {alphabet}")]
    FeatureOutOfRange {
        cell: usize,
        feature: FeatureId,
        alphabet: u32,
    },
}

impl GridSpec {
    pub fn new(
        height: usize,
        width: usize,
        alphabet: u32,
        features: Vec<FeatureId>,
    ) -> Result<Self, GridError> {
        if height == 0 || width == 0 {
            return Err(GridError::EmptyGrid { height, width });
        }
        if alphabet == 0 {
            return Err(GridError::EmptyAlphabet);
        }
        if features.len() != height * width {
            return Err(GridError::FeatureCount {
                expected: height * width,
                got: features.len(),
            });
        }
        if let Some((cell, &feature)) = features.iter().enumerate().find(|(_, &f)| f >= alphabet) {
            return Err(GridError::FeatureOutOfRange {
                cell,
                feature,
                alphabet,
            });
        }
        Ok(Self {
            height,
            width,
            alphabet,
            features,
        })
    }

    /// Features assigned round-robin over the flat cell index: cell `k` emits `k mod alphabet`.
    pub fn round_robin(height: usize, width: usize, alphabet: u32) -> Result<Self, GridError> {
        let features = (0..height * width)
            .map(|k| (k as u64 % alphabet.max(1) as u64) as FeatureId)
            .collect();
        Self::new(height, width, alphabet, features)
    }

    /// The round-robin labels permuted uniformly: every feature still covers
    /// `cells / alphabet` cells (one more for the first `cells mod alphabet`).
    pub fn shuffled<R: rand::Rng + ?Sized>(
        height: usize,
        width: usize,
        alphabet: u32,
        rng: &mut R,
    ) -> Result<Self, GridError> {
        use rand::seq::SliceRandom;
        let mut grid = Self::round_robin(height, width, alphabet)?;
        grid.features.shuffle(rng);
        Ok(grid)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn alphabet(&self) -> u32 {
        self.alphabet
    }

    pub fn feature(&self, cell: GridIndex) -> FeatureId {
        self.features[cell.flatten(self.width)]
    }

    pub fn features(&self) -> &[FeatureId] {
        &self.features
    }

    pub fn contains(&self, row: i64, col: i64) -> bool {
        (0..self.height as i64).contains(&row) && (0..self.width as i64).contains(&col)
    }

    pub fn index(&self, flat: usize) -> GridIndex {
        GridIndex::unflatten(flat, self.width)
    }

    /// Cell reached by `action` from `from`, or `None` when it would leave the grid.
    pub fn displaced(&self, from: GridIndex, action: Action) -> Option<GridIndex> {
        let (dr, dc) = action.displacement();
        let row = from.row as i64 + dr as i64;
        let col = from.col as i64 + dc as i64;
        self.contains(row, col)
            .then(|| GridIndex::new(row as usize, col as usize))
    }

    /// Like [`displaced`](Self::displaced) but off-grid moves stay put.
    pub fn clamped(&self, from: GridIndex, action: Action) -> GridIndex {
        self.displaced(from, action).unwrap_or(from)
    }

    /// Largest Chebyshev distance between two cells.
    pub fn diameter(&self) -> usize {
        (self.height - 1).max(self.width - 1)
    }
}

/// Column-stochastic transition operator: entry `(dest, src)` is `p(dest | src, u)`.
///
/// Stored sparsely by source column, destinations ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionKernel {
    columns: Vec<Vec<(usize, f64)>>,
}

impl ActionKernel {
    pub fn size(&self) -> usize {
        self.columns.len()
    }

    pub fn entry(&self, dest: usize, src: usize) -> f64 {
        self.columns[src]
            .iter()
            .find(|(d, _)| *d == dest)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn column(&self, src: usize) -> &[(usize, f64)] {
        &self.columns[src]
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        let mut dense = vec![vec![0.0; n]; n];
        for (src, col) in self.columns.iter().enumerate() {
            for &(dest, p) in col {
                dense[dest][src] = p;
            }
        }
        dense
    }

    /// `K · bel`.
    pub fn apply(&self, bel: &Belief) -> Belief {
        assert_eq!(bel.len(), self.size(), "belief and kernel sizes differ");
        let mut out = vec![0.0; self.size()];
        for (src, col) in self.columns.iter().enumerate() {
            let m = bel[src];
            if m == 0.0 {
                continue;
            }
            for &(dest, p) in col {
                out[dest] += p * m;
            }
        }
        Belief::from_raw_unchecked(out)
    }
}

/// Deterministic kernel for one action; off-grid moves self-loop.
pub fn build_action_kernel(grid: &GridSpec, action: Action) -> ActionKernel {
    let columns = (0..grid.cells())
        .map(|src| {
            let dest = grid.clamped(grid.index(src), action).flatten(grid.width());
            vec![(dest, 1.0)]
        })
        .collect();
    ActionKernel { columns }
}

/// Kernel for an unseen control: the uniform average of all nine action kernels.
pub fn masked_action_kernel(grid: &GridSpec) -> ActionKernel {
    let columns = (0..grid.cells())
        .map(|src| {
            let from = grid.index(src);
            let mut counts: Vec<(usize, u32)> = Vec::with_capacity(9);
            for action in Action::ALL {
                let dest = grid.clamped(from, action).flatten(grid.width());
                match counts.iter_mut().find(|(d, _)| *d == dest) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((dest, 1)),
                }
            }
            counts.sort_unstable_by_key(|&(d, _)| d);
            counts
                .into_iter()
                .map(|(d, c)| (d, c as f64 / Action::ALL.len() as f64))
                .collect()
        })
        .collect();
    ActionKernel { columns }
}

/// `p(z | x)` for every cell: one where the cell emits `z`, zero elsewhere.
pub fn emission_likelihood(grid: &GridSpec, z: FeatureId) -> Vec<f64> {
    debug_assert!(z < grid.alphabet());
    grid.features()
        .iter()
        .map(|&f| if f == z { 1.0 } else { 0.0 })
        .collect()
}

/// Likelihood of an unseen observation: uniform over the grid.
pub fn masked_observation_likelihood(grid: &GridSpec) -> Vec<f64> {
    vec![1.0; grid.cells()]
}

pub fn within_sensing(a: GridIndex, b: GridIndex, range: usize) -> bool {
    a.chebyshev(b) <= range
}

/// Binary symmetric operator with entry `(x, x')` set iff `x` and `x'` lie within
/// the sensing range of each other.
///
/// Applied to an agent's position belief it yields, for each cell, the
/// probability that the agent senses a target located there.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingOperator {
    range: usize,
    rows: Vec<Vec<usize>>,
}

impl SensingOperator {
    pub fn range(&self) -> usize {
        self.range
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn entry(&self, x: usize, y: usize) -> bool {
        self.rows[x].binary_search(&y).is_ok()
    }

    pub fn apply(&self, bel: &Belief) -> Vec<f64> {
        assert_eq!(bel.len(), self.size(), "belief and operator sizes differ");
        self.rows
            .iter()
            .map(|row| row.iter().map(|&y| bel[y]).sum())
            .collect()
    }
}

pub fn sensing_operator(grid: &GridSpec, range: usize) -> SensingOperator {
    let rows = (0..grid.cells())
        .map(|x| {
            let a = grid.index(x);
            (0..grid.cells())
                .filter(|&y| within_sensing(a, grid.index(y), range))
                .collect()
        })
        .collect();
    SensingOperator { range, rows }
}

/// Every operator an agent needs, precomputed once per grid and sensing range.
#[derive(Debug, Clone)]
pub struct WorldModel {
    grid: GridSpec,
    kernels: Vec<ActionKernel>,
    masked: ActionKernel,
    emissions: Vec<Vec<f64>>,
    sensing: SensingOperator,
}

impl WorldModel {
    pub fn new(grid: GridSpec, sensing_range: usize) -> Self {
        let kernels = Action::ALL
            .iter()
            .map(|&a| build_action_kernel(&grid, a))
            .collect();
        let masked = masked_action_kernel(&grid);
        let emissions = (0..grid.alphabet())
            .map(|z| emission_likelihood(&grid, z))
            .collect();
        let sensing = sensing_operator(&grid, sensing_range);
        Self {
            grid,
            kernels,
            masked,
            emissions,
            sensing,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kernel(&self, action: Action) -> &ActionKernel {
        &self.kernels[action.index()]
    }

    pub fn masked_kernel(&self) -> &ActionKernel {
        &self.masked
    }

    pub fn emission(&self, z: FeatureId) -> &[f64] {
        &self.emissions[z as usize]
    }

    pub fn sensing(&self) -> &SensingOperator {
        &self.sensing
    }

    pub fn sensing_range(&self) -> usize {
        self.sensing.range()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{entropy, normalize};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(h: usize, w: usize) -> GridSpec {
        GridSpec::round_robin(h, w, 4).unwrap()
    }

    fn column_sums(k: &ActionKernel) -> Vec<f64> {
        (0..k.size())
            .map(|s| k.column(s).iter().map(|(_, p)| p).sum())
            .collect()
    }

    #[test]
    fn nine_distinct_actions() {
        let mut disp: Vec<_> = Action::ALL.iter().map(|a| a.displacement()).collect();
        disp.sort();
        disp.dedup();
        assert_eq!(disp.len(), 9);
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            let (dr, dc) = a.displacement();
            assert_eq!(Action::from_signs(dr as i64 * 3, dc as i64 * 5), *a);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(GridSpec::new(0, 3, 1, vec![]), Err(GridError::EmptyGrid { .. })));
        assert_eq!(GridSpec::new(1, 2, 0, vec![0, 0]), Err(GridError::EmptyAlphabet));
        assert!(matches!(
            GridSpec::new(1, 2, 2, vec![0]),
            Err(GridError::FeatureCount { expected: 2, got: 1 })
        ));
        assert!(matches!(
            GridSpec::new(1, 2, 2, vec![0, 2]),
            Err(GridError::FeatureOutOfRange { cell: 1, .. })
        ));
        let g = GridSpec::round_robin(2, 3, 4).unwrap();
        assert_eq!(g.features(), &[0, 1, 2, 3, 0, 1]);
    }

    #[test]
    fn stay_is_identity() {
        let g = grid(4, 5);
        let dense = build_action_kernel(&g, Action::Stay).to_dense();
        for (r, row) in dense.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert_eq!(v, if r == c { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn east_on_one_by_two() {
        let g = grid(1, 2);
        let k = build_action_kernel(&g, Action::East);
        assert_eq!(k.entry(1, 0), 1.0);
        assert_eq!(k.entry(0, 0), 0.0);
        assert_eq!(k.entry(1, 1), 1.0);
    }

    #[test]
    fn masked_kernel_examples() {
        let one = masked_action_kernel(&grid(1, 1));
        assert_eq!(one.to_dense(), vec![vec![1.0]]);

        let g = grid(3, 3);
        let k = masked_action_kernel(&g);
        // Enumerating the nine moves from the centre reaches every cell once.
        let centre = GridIndex::new(1, 1).flatten(3);
        for dest in 0..9 {
            assert_eq!(k.entry(dest, centre), 1.0 / 9.0);
        }
        for s in column_sums(&k) {
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn masked_kernel_is_exact_average() {
        let g = grid(4, 3);
        let masked = masked_action_kernel(&g).to_dense();
        let dense: Vec<_> = Action::ALL
            .iter()
            .map(|&a| build_action_kernel(&g, a).to_dense())
            .collect();
        for r in 0..g.cells() {
            for c in 0..g.cells() {
                let sum: f64 = dense.iter().map(|k| k[r][c]).sum();
                assert_eq!(masked[r][c], sum / 9.0);
            }
        }
    }

    #[test]
    fn interior_columns_are_permutations() {
        let g = grid(5, 6);
        for a in Action::ALL {
            let k = build_action_kernel(&g, a);
            for src in 0..g.cells() {
                let col = k.column(src);
                assert_eq!(col.len(), 1);
                assert_eq!(col[0].1, 1.0);
            }
            // Interior sources land on distinct destinations.
            let mut dests: Vec<usize> = (0..g.cells())
                .filter(|&s| {
                    let i = g.index(s);
                    i.row > 0 && i.col > 0 && i.row + 1 < g.height() && i.col + 1 < g.width()
                })
                .map(|s| k.column(s)[0].0)
                .collect();
            let n = dests.len();
            dests.sort();
            dests.dedup();
            assert_eq!(dests.len(), n);
        }
    }

    #[test]
    fn emission_examples() {
        let distinct = GridSpec::round_robin(3, 3, 9).unwrap();
        for z in 0..9 {
            let l = emission_likelihood(&distinct, z);
            assert_eq!(l.iter().sum::<f64>(), 1.0);
            assert_eq!(l[z as usize], 1.0);
        }
        let aliased = GridSpec::round_robin(3, 3, 1).unwrap();
        assert_eq!(emission_likelihood(&aliased, 0), vec![1.0; 9]);

        let g = grid(10, 10);
        for z in 0..4 {
            assert_eq!(emission_likelihood(&g, z).iter().filter(|&&v| v == 1.0).count(), 25);
        }
        let mut total = vec![0.0; 100];
        for z in 0..4 {
            for (t, l) in total.iter_mut().zip(emission_likelihood(&g, z)) {
                *t += l;
            }
        }
        assert_eq!(total, vec![1.0; 100]);
    }

    #[test]
    fn masked_observation_is_a_no_op() {
        let g = grid(10, 10);
        let ones = masked_observation_likelihood(&g);
        let apply = |b: &Belief| {
            normalize(b.as_slice().iter().zip(&ones).map(|(p, l)| p * l).collect()).unwrap()
        };
        let dirac = Belief::dirac(100, 37);
        assert_eq!(apply(&dirac), dirac);
        let uniform = Belief::uniform(100);
        for (a, b) in apply(&uniform).as_slice().iter().zip(uniform.as_slice()) {
            assert!((a - b).abs() <= 1e-15);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
            let b = normalize(raw).unwrap();
            let after = apply(&b);
            assert!((entropy(&b) - entropy(&after)).abs() <= 1e-12);
        }
    }

    #[test]
    fn sensing_examples() {
        let g = grid(10, 10);
        let zero = sensing_operator(&g, 0);
        for x in 0..100 {
            for y in 0..100 {
                assert_eq!(zero.entry(x, y), x == y);
            }
        }

        let full = sensing_operator(&g, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = normalize((0..100).map(|_| rng.gen::<f64>()).collect()).unwrap();
        for v in full.apply(&b) {
            assert!((v - 1.0).abs() <= 1e-12);
        }

        let s1 = sensing_operator(&g, 1);
        let centre = GridIndex::new(5, 5);
        let v = s1.apply(&Belief::dirac(100, centre.flatten(10)));
        for (x, &vx) in v.iter().enumerate() {
            let i = g.index(x);
            let inside = (4..=6).contains(&i.row) && (4..=6).contains(&i.col);
            assert_eq!(vx, if inside { 1.0 } else { 0.0 });
        }
        for x in 0..100 {
            assert!(s1.entry(x, x));
            for y in 0..100 {
                assert_eq!(s1.entry(x, y), s1.entry(y, x));
            }
        }
    }

    #[test]
    fn within_sensing_examples() {
        let a = GridIndex::new(3, 3);
        assert!(within_sensing(a, a, 0));
        assert!(within_sensing(a, GridIndex::new(4, 4), 1));
        assert!(!within_sensing(a, GridIndex::new(3, 5), 1));
    }

    proptest! {
        #[test]
        fn kernels_are_column_stochastic(h in 1usize..7, w in 1usize..7, a in 0usize..9) {
            let g = grid(h, w);
            for s in column_sums(&build_action_kernel(&g, Action::ALL[a])) {
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
            for s in column_sums(&masked_action_kernel(&g)) {
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn sensing_of_belief_in_unit_interval(
            raw in prop::collection::vec(0.0f64..1.0, 30),
            range in 0usize..7,
        ) {
            prop_assume!(raw.iter().sum::<f64>() > 0.0);
            let g = grid(5, 6);
            let v = sensing_operator(&g, range).apply(&normalize(raw).unwrap());
            for x in v {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&x));
            }
        }
    }
}
