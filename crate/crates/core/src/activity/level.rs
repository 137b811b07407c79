//! Solving `psi(N) = level` with branch continuation and level-preserving
//! jumps between monotone pieces of `psi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FiringModel, Piece, Trend};
use crate::roots::bisect;

/// Levels within this (relative) distance of a piece end count as attained.
pub const LEVEL_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchMode {
    ContinuationThenJump,
    FixedBranch,
    FailOnAmbiguity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BranchSeed {
    /// 1-based index into the sorted initial branch set.
    Index(usize),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPolicy {
    pub mode: BranchMode,
    pub seed: BranchSeed,
}

impl BranchPolicy {
    pub fn branch(index: usize) -> Self {
        BranchPolicy { mode: BranchMode::ContinuationThenJump, seed: BranchSeed::Index(index) }
    }

    pub fn value(n0: f64) -> Self {
        BranchPolicy { mode: BranchMode::ContinuationThenJump, seed: BranchSeed::Value(n0) }
    }

    pub fn with_mode(self, mode: BranchMode) -> Self {
        BranchPolicy { mode, ..self }
    }

    /// Resolves the seed against the admissible initial activities.
    pub fn initial_value(&self, model: &FiringModel, roots: &[f64], tail_mass: f64) -> Result<f64> {
        match self.seed {
            BranchSeed::Index(i) => {
                if i == 0 || i > roots.len() {
                    return Err(Error::config(
                        "run.branch",
                        format!("branch {i} requested but {} initial activities exist", roots.len()),
                    ));
                }
                Ok(roots[i - 1])
            }
            BranchSeed::Value(v) => {
                let r = (v - model.phi(v)? * tail_mass).abs();
                if r > 1e-8 {
                    return Err(Error::config(
                        "run.branch",
                        format!("N(0) = {v} does not satisfy N = phi(N) * tail (residual {r:e})"),
                    ));
                }
                Ok(v)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    pub n_before: f64,
    pub n_after: f64,
}

/// Result of [`solve_psi_level`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSolution {
    pub n: f64,
    pub branch: usize,
    pub jumped: bool,
}

/// One solved step of a march.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelStep {
    pub n: f64,
    pub branch: usize,
    /// Fold point left and landing point, at equal `psi`.
    pub jump: Option<(f64, f64)>,
    /// `psi'` vanishes (numerically) at the root.
    pub tangent: bool,
}

/// Branch-tracking solver over the monotone pieces of a model.
#[derive(Debug, Clone)]
pub struct LevelSolver<'a> {
    model: &'a FiringModel,
    pieces: &'a [Piece],
    mode: BranchMode,
    /// Time step, scaling the continuation bracket.
    pub dt: f64,
}

impl<'a> LevelSolver<'a> {
    pub fn new(model: &'a FiringModel, mode: BranchMode) -> Self {
        LevelSolver { model, pieces: model.pieces(), mode, dt: 0.0 }
    }

    pub fn pieces(&self) -> &[Piece] {
        self.pieces
    }

    fn psi(&self, u: f64) -> f64 {
        self.model.psi_unchecked(u)
    }

    fn snap(level: f64) -> f64 {
        LEVEL_SNAP * level.abs().max(1.0)
    }

    /// Range of `psi` over piece `i` as `(min, max)`.
    pub fn range(&self, i: usize) -> (f64, f64) {
        let p = self.pieces[i];
        let (a, b) = (self.psi(p.lo), self.psi(p.hi));
        (a.min(b), a.max(b))
    }

    /// Root of `psi = level` on piece `i`, if any.
    pub fn root_on_piece(&self, i: usize, level: f64) -> Option<f64> {
        let p = self.pieces[i];
        let (pa, pb) = (self.psi(p.lo), self.psi(p.hi));
        let tol = Self::snap(level);
        if (pa - level).abs() <= tol {
            return Some(p.lo);
        }
        if (pb - level).abs() <= tol {
            return Some(p.hi);
        }
        if p.trend == Trend::Flat || (pa - level).signum() == (pb - level).signum() {
            return None;
        }
        Some(self.bisect_piece(p, level, 0.5 * (p.lo + p.hi)))
    }

    fn bisect_piece(&self, p: Piece, level: f64, seed: f64) -> f64 {
        let g = |u: f64| self.psi(u) - level;
        let width = 4.0 * f64::EPSILON * p.hi.abs().max(1.0);
        let mut delta = (5.0 * seed.abs() * self.dt).max(1e-3);
        let seed = seed.clamp(p.lo, p.hi);
        loop {
            let lo = (seed - delta).max(p.lo);
            let hi = (seed + delta).min(p.hi);
            let (glo, ghi) = (g(lo), g(hi));
            if glo == 0.0 {
                return lo;
            }
            if ghi == 0.0 {
                return hi;
            }
            if (glo < 0.0) != (ghi < 0.0) {
                return bisect(g, lo, hi, width);
            }
            if lo == p.lo && hi == p.hi {
                return if glo.abs() < ghi.abs() { lo } else { hi };
            }
            delta *= 2.0;
        }
    }

    /// Root on piece `i` searched outward from `seed`.
    fn continue_on(&self, i: usize, level: f64, seed: f64) -> Option<f64> {
        let p = self.pieces[i];
        let (pa, pb) = (self.psi(p.lo), self.psi(p.hi));
        let tol = Self::snap(level);
        if (pa - level).abs() <= tol && (pb - level).abs() <= tol {
            return Some(seed.clamp(p.lo, p.hi));
        }
        if (pa - level).abs() <= tol {
            return Some(p.lo);
        }
        if (pb - level).abs() <= tol {
            return Some(p.hi);
        }
        if p.trend == Trend::Flat || (pa - level).signum() == (pb - level).signum() {
            return None;
        }
        Some(self.bisect_piece(p, level, seed))
    }

    /// Piece holding `seed`; at a shared end, the one whose root at `level`
    /// lies closest to `seed`.
    pub fn locate(&self, seed: f64, level: f64) -> usize {
        let holding: Vec<usize> = (0..self.pieces.len())
            .filter(|&i| {
                let p = self.pieces[i];
                seed >= p.lo - 1e-12 && seed <= p.hi + 1e-12
            })
            .collect();
        holding
            .iter()
            .copied()
            .filter_map(|i| self.root_on_piece(i, level).map(|r| (i, (r - seed).abs())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .or_else(|| holding.first().copied())
            .unwrap_or_else(|| self.model.piece_index(seed))
    }

    fn tangent(&self, n: f64) -> bool {
        n > 0.0 && self.model.psi_prime(n).is_ok_and(|s| s.value.abs() < 1e-8)
    }

    /// Advances from `(branch, seed)` to the root at `level`. `next_level`
    /// is the extrapolated level of the following step, used to prefer
    /// landing branches that stay solvable.
    pub fn step(&self, branch: usize, seed: f64, level: f64, next_level: Option<f64>) -> Result<LevelStep> {
        if !(level >= 0.0) {
            return Err(Error::NoRoot { level });
        }
        if let Some(n) = self.continue_on(branch, level, seed) {
            return Ok(LevelStep { n, branch, jump: None, tangent: self.tangent(n) });
        }
        if self.mode == BranchMode::FixedBranch {
            return Err(Error::Solver(format!(
                "branch {branch} has no root at level {level} and jumps are disabled"
            )));
        }
        let mut candidates: Vec<(usize, f64)> = (0..self.pieces.len())
            .filter(|&i| i != branch)
            .filter_map(|i| self.root_on_piece(i, level).map(|r| (i, r)))
            .collect();
        candidates.sort_by(|a, b| a.1.total_cmp(&b.1));
        if candidates.is_empty() {
            return Err(Error::NoRoot { level });
        }
        if self.mode == BranchMode::FailOnAmbiguity && candidates.len() > 1 {
            return Err(Error::Ambiguous { level, count: candidates.len() });
        }
        let (target, n) = next_level
            .and_then(|probe| candidates.iter().copied().find(|&(i, _)| self.root_on_piece(i, probe).is_some()))
            .unwrap_or(candidates[0]);

        let (_, hi) = self.range(branch);
        let p = self.pieces[branch];
        let fold_high = level > hi;
        let fold = if (self.psi(p.hi) >= self.psi(p.lo)) == fold_high { p.hi } else { p.lo };
        let landing = self.landing_point(target, self.psi(fold));
        Ok(LevelStep { n, branch: target, jump: Some((fold, landing)), tangent: self.tangent(n) })
    }

    /// Point of piece `i` at level `level`, or the nearest end if the
    /// level is not attained there.
    fn landing_point(&self, i: usize, level: f64) -> f64 {
        self.root_on_piece(i, level).unwrap_or_else(|| {
            let p = self.pieces[i];
            if (self.psi(p.lo) - level).abs() <= (self.psi(p.hi) - level).abs() {
                p.lo
            } else {
                p.hi
            }
        })
    }
}

/// Solves `psi(N) = level` starting from `seed`, jumping to another branch
/// per `policy.mode` if the seed's branch does not reach `level`.
pub fn solve_psi_level(model: &FiringModel, level: f64, seed: f64, policy: &BranchPolicy) -> Result<LevelSolution> {
    if !(level >= 0.0) {
        return Err(Error::Precondition(format!("level must be nonnegative, got {level}")));
    }
    let solver = LevelSolver::new(model, policy.mode);
    let branch = solver.model.piece_index(seed.clamp(0.0, model.p_hi()));
    let step = solver.step(branch, seed, level, None)?;
    Ok(LevelSolution { n: step.n, branch: step.branch, jumped: step.jump.is_some() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;
    use crate::roots::scan_roots;

    fn sigmoid() -> FiringModel {
        builtin_model("sigmoid", &[9.0, 3.5], 1.0).unwrap()
    }

    fn oracle_roots(level: f64) -> Vec<f64> {
        let psi = |u: f64| u * (1.0 + (-9.0 * u + 3.5).exp());
        scan_roots(|u| psi(u) - level, 0.0, 1.0, 10_000, 1e-14, 0.0).into_iter().map(|r| r.x).collect()
    }

    #[test]
    fn identity_psi() {
        let m = builtin_model("constant", &[1.0], 1.0).unwrap();
        for seed in [0.0, 0.3, 0.9] {
            let s = solve_psi_level(&m, 0.3, seed, &BranchPolicy::branch(1)).unwrap();
            assert!((s.n - 0.3).abs() < 1e-14);
            assert!(!s.jumped);
        }
    }

    #[test]
    fn three_roots_smallest_from_low_seed() {
        let roots = oracle_roots(0.9);
        assert_eq!(roots.len(), 3);
        let s = solve_psi_level(&sigmoid(), 0.9, 0.04, &BranchPolicy::branch(1)).unwrap();
        assert!((s.n - roots[0]).abs() < 1e-12);
        assert!((s.n - 0.036).abs() < 1e-3);
        assert!(!s.jumped);
    }

    #[test]
    fn upper_branch_exhausted_jumps_down() {
        // Upper piece has psi >= psi(c2) ~ 0.6786; ask for 0.5.
        let m = sigmoid();
        let s = solve_psi_level(&m, 0.5, 0.8, &BranchPolicy::branch(1)).unwrap();
        assert!(s.jumped);
        let roots = oracle_roots(0.5);
        assert!((s.n - roots[0]).abs() < 1e-12);
        assert!((m.psi(s.n).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn policies_without_jumps_fail() {
        let m = sigmoid();
        let fixed = BranchPolicy::branch(1).with_mode(BranchMode::FixedBranch);
        assert!(solve_psi_level(&m, 0.5, 0.8, &fixed).is_err());
        // A single candidate is not ambiguous.
        let strict = BranchPolicy::branch(1).with_mode(BranchMode::FailOnAmbiguity);
        assert!(solve_psi_level(&m, 0.5, 0.8, &strict).unwrap().jumped);
    }

    #[test]
    fn ambiguity_detected_and_resolved_by_probe() {
        // psi = u (1 + 0.9 sin(12 u)) style: several increasing pieces.
        let phi = |u: f64| 1.0 / (1.0 + 0.9 * (12.0 * u).sin()) ;
        let m = FiringModel::custom("wavy", phi, None, 1.0, 1.0 / 1.9, 10.0).unwrap();
        assert!(m.pieces().len() >= 5);
        let solver = LevelSolver::new(&m, BranchMode::FailOnAmbiguity);
        let last = m.pieces().len() - 1;
        let (lo, _) = solver.range(last);
        let level = lo - 0.05;
        let count = (0..last).filter(|&i| solver.root_on_piece(i, level).is_some()).count();
        assert!(count > 1);
        assert!(matches!(solver.step(last, m.pieces()[last].lo, level, None), Err(Error::Ambiguous { .. })));
        let jumpy = LevelSolver::new(&m, BranchMode::ContinuationThenJump);
        let s = jumpy.step(last, m.pieces()[last].lo, level, None).unwrap();
        let smallest = (0..last).filter_map(|i| solver.root_on_piece(i, level)).fold(f64::INFINITY, f64::min);
        assert_eq!(s.n, smallest);
    }

    #[test]
    fn jump_record_preserves_psi() {
        let m = sigmoid();
        let solver = LevelSolver::new(&m, BranchMode::ContinuationThenJump);
        let top = m.pieces().len() - 1;
        let step = solver.step(top, 0.6, 0.6, None).unwrap();
        let (before, after) = step.jump.unwrap();
        assert!((m.psi(before).unwrap() - m.psi(after).unwrap()).abs() < 1e-12);
        assert!((before - m.pieces()[top].lo).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_level_is_fatal() {
        let m = builtin_model("constant", &[1.0], 1.0).unwrap();
        assert!(matches!(
            LevelSolver::new(&m, BranchMode::ContinuationThenJump).step(0, 0.5, 2.0, None),
            Err(Error::NoRoot { .. })
        ));
    }
}
