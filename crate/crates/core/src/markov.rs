//! The switching signal: generator validation, stationary laws and exact
//! path simulation of the continuous-time Markov chain.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;

use crate::error::{invalid, Error, Result};
use crate::model::ModeIndex;

/// Absolute tolerance on generator row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A validated N-by-N rate matrix: nonnegative off-diagonal rates, rows
/// summing to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(invalid("generator must have at least one row"));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "generator row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        Self::from_row_major(n, entries)
    }

    /// Reads the N² rates in row-major order.
    pub fn from_row_major(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} entries cannot form a nonempty square generator of size {n}",
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(invalid("generator entries must be finite"));
        }
        for i in 0..n {
            let row = &entries[i * n..(i + 1) * n];
            for (j, &v) in row.iter().enumerate() {
                if i != j && v < 0.0 {
                    return Err(Error::NegativeRate {
                        row: i + 1,
                        col: j + 1,
                        value: v,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if sum.abs() > ROW_SUM_TOL {
                return Err(Error::RowSum { row: i + 1, sum });
            }
        }
        Ok(Self { n, entries })
    }

    pub fn modes(&self) -> usize {
        self.n
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Total jump intensity out of mode `i`, i.e. `-gamma_ii`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        (0..self.n).filter(|&j| j != i).map(|j| self.rate(i, j)).sum()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn is_irreducible(&self) -> bool {
        let reach = |forward: bool| {
            let mut seen = vec![false; self.n];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..self.n {
                    let r = if forward { self.rate(i, j) } else { self.rate(j, i) };
                    if i != j && r > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }
}

/// Validates a generator given as rows.
pub fn validate_generator(rows: &[Vec<f64>]) -> Result<GeneratorMatrix> {
    GeneratorMatrix::new(rows)
}

/// A right-continuous, piecewise-constant mode trajectory on `[0, horizon]`.
///
/// `modes[0]` is the initial mode and `modes[k]` the mode entered at
/// `jump_times[k - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePath {
    jump_times: Vec<f64>,
    modes: Vec<ModeIndex>,
    horizon: f64,
}

impl ModePath {
    pub fn constant(mode: ModeIndex, horizon: f64) -> Self {
        Self {
            jump_times: Vec::new(),
            modes: vec![mode],
            horizon,
        }
    }

    pub fn initial_mode(&self) -> ModeIndex {
        self.modes[0]
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    pub fn mode_at(&self, t: f64) -> ModeIndex {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.modes[k]
    }

    /// Iterator-style lookup for nondecreasing query times.
    pub fn cursor(&self) -> ModeCursor<'_> {
        ModeCursor { path: self, next: 0 }
    }

    /// Fraction of `[0, horizon]` spent in each of `n` modes.
    pub fn occupation(&self, n: usize) -> Vec<f64> {
        let mut time = vec![0.0; n];
        let mut start = 0.0;
        for (k, &mode) in self.modes.iter().enumerate() {
            let end = self.jump_times.get(k).copied().unwrap_or(self.horizon);
            time[mode.index()] += end - start;
            start = end;
        }
        time.iter().map(|t| t / self.horizon).collect()
    }

    /// Durations of the completed sojourns in `mode` (the last, censored
    /// sojourn is excluded).
    pub fn sojourns(&self, mode: ModeIndex) -> Vec<f64> {
        let mut out = Vec::new();
        let mut start = 0.0;
        for (k, &end) in self.jump_times.iter().enumerate() {
            if self.modes[k] == mode {
                out.push(end - start);
            }
            start = end;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ModeCursor<'a> {
    path: &'a ModePath,
    next: usize,
}

impl ModeCursor<'_> {
    /// Mode at `t`; calls must use nondecreasing `t`.
    #[inline]
    pub fn at(&mut self, t: f64) -> ModeIndex {
        let jumps = &self.path.jump_times;
        while self.next < jumps.len() && jumps[self.next] <= t {
            self.next += 1;
        }
        self.path.modes[self.next]
    }
}

/// Exact path simulation: Exp(-gamma_ii) holding times and embedded-chain
/// jumps with probabilities `gamma_ij / -gamma_ii`.
pub fn simulate_mode_path<R: Rng + ?Sized>(
    gen: &GeneratorMatrix,
    r0: ModeIndex,
    horizon: f64,
    rng: &mut R,
) -> Result<ModePath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon {horizon} must be positive and finite")));
    }
    if r0.index() >= gen.modes() {
        return Err(invalid(format!("initial mode {r0} outside 1..={}", gen.modes())));
    }
    let mut jump_times = Vec::new();
    let mut modes = vec![r0];
    let mut t = 0.0;
    let mut i = r0.index();
    loop {
        let rate = gen.exit_rate(i);
        if rate <= 0.0 {
            break;
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / rate;
        t += hold;
        if t > horizon {
            break;
        }
        let target = rng.random::<f64>() * rate;
        let mut acc = 0.0;
        let mut next = None;
        for j in (0..gen.modes()).filter(|&j| j != i) {
            let r = gen.rate(i, j);
            if r <= 0.0 {
                continue;
            }
            acc += r;
            next = Some(j);
            if target < acc {
                break;
            }
        }
        i = next.expect("positive exit rate implies a target");
        jump_times.push(t);
        modes.push(ModeIndex::new(i));
    }
    Ok(ModePath {
        jump_times,
        modes,
        horizon,
    })
}

/// Residual bound on `||pi Gamma||_inf` for the stationary law.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-12;

/// Solves `pi Gamma = 0`, `sum(pi) = 1` for an irreducible chain.
pub fn stationary_distribution(gen: &GeneratorMatrix) -> Result<Vec<f64>> {
    let n = gen.modes();
    if !gen.is_irreducible() {
        return Err(Error::Reducible);
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // Gammaᵀ piᵀ = 0 with the last equation replaced by the normalisation.
    let gt = gen.to_matrix().transpose();
    let mut a = gt.clone();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.clone().lu();
    let mut pi = lu.solve(&b).ok_or(Error::Singular)?;
    // One round of refinement keeps the residual at roundoff level even for
    // badly scaled rates.
    let r = &b - &a * &pi;
    if let Some(d) = lu.solve(&r) {
        pi += d;
    }
    let residual = (&gt * &pi).amax();
    if !pi.iter().all(|v| v.is_finite() && *v > 0.0) {
        return Err(Error::Singular);
    }
    let scale = gen.entries.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if residual > STATIONARY_RESIDUAL_TOL * scale {
        return Err(Error::Singular);
    }
    Ok(pi.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};

    fn two_mode() -> GeneratorMatrix {
        GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap()
    }

    #[test]
    fn generator_validation() {
        assert!(validate_generator(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).is_ok());
        assert!(validate_generator(&[vec![0.0]]).is_ok());
        assert_eq!(
            validate_generator(&[vec![-1.0, 2.0], vec![1.0, -1.0]]),
            Err(Error::RowSum { row: 1, sum: 1.0 })
        );
        assert!(matches!(
            validate_generator(&[vec![1.0, -1.0], vec![1.0, -1.0]]),
            Err(Error::NegativeRate { row: 1, col: 2, .. })
        ));
        assert!(matches!(validate_generator(&[vec![0.0, 0.0]]), Err(Error::DimensionMismatch(_))));
        assert!(validate_generator(&[]).is_err());
        assert!(GeneratorMatrix::from_row_major(2, vec![-1.0, 1.0, 2.0, -2.0]).is_ok());
    }

    #[test]
    fn stationary_laws() {
        let pi = stationary_distribution(&two_mode()).unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-14 && (pi[1] - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(stationary_distribution(&GeneratorMatrix::new(&[vec![0.0]]).unwrap()).unwrap(), vec![1.0]);
        let sym = GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let pi = stationary_distribution(&sym).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15);
        let reducible = GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(stationary_distribution(&reducible), Err(Error::Reducible));
    }

    #[test]
    fn stationary_residual_three_modes() {
        let gen = GeneratorMatrix::new(&[
            vec![-3.0, 1.0, 2.0],
            vec![0.5, -0.5, 0.0],
            vec![4.0, 1.0, -5.0],
        ])
        .unwrap();
        let pi = stationary_distribution(&gen).unwrap();
        for j in 0..3 {
            let r: f64 = (0..3).map(|i| pi[i] * gen.rate(i, j)).sum();
            assert!(r.abs() <= STATIONARY_RESIDUAL_TOL);
        }
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_mode_has_no_jumps() {
        let gen = GeneratorMatrix::new(&[vec![0.0]]).unwrap();
        let mut rng = substream(1, 0, Purpose::Markov);
        let path = simulate_mode_path(&gen, ModeIndex::new(0), 100.0, &mut rng).unwrap();
        assert_eq!(path.jump_count(), 0);
        assert_eq!(path.mode_at(50.0), ModeIndex::new(0));
    }

    #[test]
    fn path_is_right_continuous_and_alternating() {
        let mut rng = substream(5, 0, Purpose::Markov);
        let path = simulate_mode_path(&two_mode(), ModeIndex::new(0), 50.0, &mut rng).unwrap();
        assert!(path.jump_count() > 10);
        for w in path.jump_times().windows(2) {
            assert!(w[0] < w[1]);
        }
        for w in path.modes().windows(2) {
            assert_ne!(w[0], w[1]);
        }
        for (k, &t) in path.jump_times().iter().enumerate() {
            assert_eq!(path.mode_at(t), path.modes()[k + 1]);
            assert_eq!(path.mode_at(t - 1e-12), path.modes()[k]);
        }
        let mut cursor = path.cursor();
        for s in 0..500 {
            let t = s as f64 * 0.1;
            assert_eq!(cursor.at(t), path.mode_at(t));
        }
    }

    #[test]
    fn occupation_and_holding_times_match_theory() {
        let mut rng = substream(11, 0, Purpose::Markov);
        let path = simulate_mode_path(&two_mode(), ModeIndex::new(0), 1e4, &mut rng).unwrap();
        let occ = path.occupation(2);
        assert!((occ[0] - 2.0 / 3.0).abs() < 0.02, "occupation {occ:?}");

        let mut rng = substream(12, 0, Purpose::Markov);
        let long = simulate_mode_path(&two_mode(), ModeIndex::new(0), 2e4, &mut rng).unwrap();
        let stays = long.sojourns(ModeIndex::new(0));
        assert!(stays.len() >= 10_000);
        let mean = stays[..10_000].iter().sum::<f64>() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.02, "mean holding {mean}");
    }

    #[test]
    fn embedded_chain_jump_probabilities() {
        // Mode 1 jumps to 2 at rate 1 and to 3 at rate 3: 1/4 of exits go to 2.
        let gen = GeneratorMatrix::new(&[
            vec![-4.0, 1.0, 3.0],
            vec![1.0, -1.0, 0.0],
            vec![1.0, 0.0, -1.0],
        ])
        .unwrap();
        let mut rng = substream(3, 0, Purpose::Markov);
        let path = simulate_mode_path(&gen, ModeIndex::new(0), 2e4, &mut rng).unwrap();
        let (mut to2, mut total) = (0usize, 0usize);
        for w in path.modes().windows(2) {
            if w[0].index() == 0 {
                total += 1;
                to2 += usize::from(w[1].index() == 1);
            }
        }
        let frac = to2 as f64 / total as f64;
        let se = (0.25 * 0.75 / total as f64).sqrt();
        assert!((frac - 0.25).abs() < 3.0 * se, "frac {frac} over {total}");
    }

    #[test]
    fn same_stream_same_path() {
        let a = simulate_mode_path(&two_mode(), ModeIndex::new(1), 100.0, &mut substream(9, 2, Purpose::Markov)).unwrap();
        let b = simulate_mode_path(&two_mode(), ModeIndex::new(1), 100.0, &mut substream(9, 2, Purpose::Markov)).unwrap();
        assert_eq!(a, b);
    }
}
