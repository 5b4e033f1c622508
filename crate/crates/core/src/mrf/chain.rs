//! Exact minimization of chain-structured energies by dynamic programming.

use std::sync::Arc;

use super::expansion::{MultiLabelProblem, PairCost};
use super::{sat_add, INF};
use crate::error::{Error, Result};

/// Chain energy `sum_i U_i(s_i) + sum_i P_i(s_i, s_{i+1})` over per-position
/// candidate lists.
#[derive(Clone, Debug)]
pub struct ChainProblem {
    unary: Vec<Vec<f64>>,
    /// `pairwise[i]` is row-major `len(i) x len(i + 1)`.
    pairwise: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSolution {
    pub assignment: Vec<usize>,
    pub energy: f64,
}

impl ChainProblem {
    pub fn new(unary: Vec<Vec<f64>>, pairwise: Vec<Vec<f64>>) -> Result<Self> {
        if unary.is_empty() {
            return Err(Error::Invalid("chain has no positions".into()));
        }
        if let Some(pos) = unary.iter().position(Vec::is_empty) {
            return Err(Error::Invalid(format!("position {pos} has no candidates")));
        }
        if pairwise.len() != unary.len() - 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} pairwise tables for {} positions",
                pairwise.len(),
                unary.len()
            )));
        }
        for (i, table) in pairwise.iter().enumerate() {
            if table.len() != unary[i].len() * unary[i + 1].len() {
                return Err(Error::DimensionMismatch(format!(
                    "pairwise table {i} has {} entries, expected {}",
                    table.len(),
                    unary[i].len() * unary[i + 1].len()
                )));
            }
        }
        let all_costs = unary.iter().chain(&pairwise).flatten();
        if all_costs.clone().any(|c| c.is_nan() || *c < 0.0) {
            return Err(Error::Invalid("chain costs must be non-negative".into()));
        }
        Ok(Self { unary, pairwise })
    }

    pub fn len(&self) -> usize {
        self.unary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unary.is_empty()
    }

    pub fn num_candidates(&self, position: usize) -> usize {
        self.unary[position].len()
    }

    pub fn unary(&self, position: usize, candidate: usize) -> f64 {
        self.unary[position][candidate]
    }

    /// Cost between candidate `a` at `position` and candidate `b` at `position + 1`.
    pub fn pairwise(&self, position: usize, a: usize, b: usize) -> f64 {
        self.pairwise[position][a * self.unary[position + 1].len() + b]
    }

    /// Saturating energy, accumulated left to right.
    pub fn energy(&self, assignment: &[usize]) -> f64 {
        let mut e = self.unary[0][assignment[0]];
        for i in 1..self.len() {
            e = sat_add(e, self.pairwise(i - 1, assignment[i - 1], assignment[i]));
            e = sat_add(e, self.unary[i][assignment[i]]);
        }
        e
    }

    /// The same energy as a multi-label problem: candidate `k` becomes label
    /// `k`, labels beyond a position's candidate count are inadmissible.
    pub fn to_multi_label(&self) -> MultiLabelProblem {
        let labels = self.unary.iter().map(Vec::len).max().unwrap_or(0);
        let mut problem = MultiLabelProblem::new(self.len(), labels);
        for (i, costs) in self.unary.iter().enumerate() {
            for l in 0..labels {
                match costs.get(l) {
                    Some(&c) => problem.set_unary(i, l, c),
                    None => problem.set_admissible(i, l, false),
                }
            }
        }
        for i in 1..self.len() {
            let mut table = vec![0.0; labels * labels];
            for a in 0..self.num_candidates(i - 1) {
                for b in 0..self.num_candidates(i) {
                    table[a * labels + b] = self.pairwise(i - 1, a, b);
                }
            }
            let table: Arc<[f64]> = table.into();
            problem.add_edge(i - 1, i, PairCost::Table(table), 1.0);
        }
        problem
    }
}

/// Viterbi minimization. Ties resolve to the lowest candidate index.
pub fn chain_solve(problem: &ChainProblem) -> Result<ChainSolution> {
    let n = problem.len();
    let mut cost = problem.unary[0].clone();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);
    back.push(Vec::new());
    for i in 1..n {
        let m = problem.num_candidates(i);
        let mut next = vec![INF; m];
        let mut arg = vec![0usize; m];
        for k in 0..m {
            let mut best = f64::INFINITY;
            for (j, &c) in cost.iter().enumerate() {
                let e = sat_add(c, problem.pairwise(i - 1, j, k));
                if e < best {
                    best = e;
                    arg[k] = j;
                }
            }
            next[k] = sat_add(best, problem.unary[i][k]);
        }
        cost = next;
        back.push(arg);
    }

    let mut last = 0;
    for k in 1..cost.len() {
        if cost[k] < cost[last] {
            last = k;
        }
    }
    let energy = cost[last];
    if energy >= INF {
        return Err(Error::Infeasible("every chain assignment has infinite energy".into()));
    }
    let mut assignment = vec![0usize; n];
    assignment[n - 1] = last;
    for i in (1..n).rev() {
        assignment[i - 1] = back[i][assignment[i]];
    }
    Ok(ChainSolution { assignment, energy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn enumerate(problem: &ChainProblem) -> ChainSolution {
        let n = problem.len();
        let mut a = vec![0usize; n];
        let mut best = ChainSolution {
            assignment: a.clone(),
            energy: problem.energy(&a),
        };
        loop {
            let mut k = n;
            while k > 0 {
                k -= 1;
                a[k] += 1;
                if a[k] < problem.num_candidates(k) {
                    break;
                }
                a[k] = 0;
                if k == 0 {
                    return best;
                }
            }
            let e = problem.energy(&a);
            if e < best.energy {
                best = ChainSolution {
                    assignment: a.clone(),
                    energy: e,
                };
            }
        }
    }

    fn random_chain(rng: &mut ChaCha8Rng, n: usize, max_candidates: usize) -> ChainProblem {
        let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=max_candidates)).collect();
        let unary = sizes
            .iter()
            .map(|&m| (0..m).map(|_| rng.gen_range(0.0..3.0)).collect())
            .collect();
        let pairwise = sizes
            .windows(2)
            .map(|w| (0..w[0] * w[1]).map(|_| rng.gen_range(0.0..3.0)).collect())
            .collect();
        ChainProblem::new(unary, pairwise).unwrap()
    }

    #[test]
    fn single_position() {
        let p = ChainProblem::new(vec![vec![3.0, 1.0, 2.0]], vec![]).unwrap();
        let s = chain_solve(&p).unwrap();
        assert_eq!(s.assignment, vec![1]);
        assert_eq!(s.energy, 1.0);
    }

    #[test]
    fn two_by_two_matches_enumeration() {
        let p = ChainProblem::new(
            vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            vec![vec![0.0, 1.0, 3.0, 0.5]],
        )
        .unwrap();
        let s = chain_solve(&p).unwrap();
        assert_eq!(s, enumerate(&p));
        assert_eq!(s.energy, 1.0);
    }

    #[test]
    fn six_positions_five_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let sizes = vec![5; 6];
            let unary = sizes.iter().map(|&m| (0..m).map(|_| rng.gen_range(0.0..3.0)).collect()).collect();
            let pairwise = (0..5).map(|_| (0..25).map(|_| rng.gen_range(0.0..3.0)).collect()).collect();
            let p = ChainProblem::new(unary, pairwise).unwrap();
            let s = chain_solve(&p).unwrap();
            let oracle = enumerate(&p);
            assert_eq!(s.energy.to_bits(), oracle.energy.to_bits());
            assert_eq!(s.assignment, oracle.assignment);
        }
    }

    #[test]
    fn random_heterogeneous_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.gen_range(1..=6);
            let p = random_chain(&mut rng, n, 5);
            assert_eq!(chain_solve(&p).unwrap(), enumerate(&p));
        }
    }

    #[test]
    fn exact_never_worse_than_expansion() {
        use crate::mrf::{alpha_expand, DEFAULT_MAX_SWEEPS};
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.gen_range(2..=6);
            let p = random_chain(&mut rng, n, 5);
            let ml = p.to_multi_label();
            let exact = chain_solve(&p).unwrap();
            let approx = alpha_expand(&ml, &ml.unary_argmin(), DEFAULT_MAX_SWEEPS).unwrap();
            // Same labeling, different summation order.
            assert!((ml.energy(&exact.assignment) - exact.energy).abs() < 1e-12);
            assert!(ml.energy(&exact.assignment) <= approx.energy);
        }
    }

    #[test]
    fn infinite_everywhere_is_infeasible() {
        let p = ChainProblem::new(vec![vec![1.0], vec![2.0]], vec![vec![INF]]).unwrap();
        assert!(matches!(chain_solve(&p), Err(Error::Infeasible(_))));
    }

    #[test]
    fn sentinel_avoided_when_possible() {
        let p = ChainProblem::new(vec![vec![0.0, 5.0], vec![0.0]], vec![vec![INF, 0.0]]).unwrap();
        let s = chain_solve(&p).unwrap();
        assert_eq!(s.assignment, vec![1, 0]);
        assert_eq!(s.energy, 5.0);
    }

    #[test]
    fn empty_candidate_list_rejected() {
        assert!(ChainProblem::new(vec![vec![]], vec![]).is_err());
        assert!(ChainProblem::new(vec![], vec![]).is_err());
    }
}
