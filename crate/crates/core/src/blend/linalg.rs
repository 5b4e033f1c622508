//! Tridiagonal (Thomas) and sparse conjugate-gradient solvers.

use crate::error::{Error, Result};

/// `sub[i]` couples row `i + 1` to column `i`; `sup[i]` couples row `i` to column `i + 1`.
#[derive(Clone, Debug, Default)]
pub struct TriDiagSystem {
    pub sub: Vec<f64>,
    pub main: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TriDiagSystem {
    pub fn len(&self) -> usize {
        self.main.len()
    }

    pub fn is_empty(&self) -> bool {
        self.main.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.main[i] * x[i];
                if i > 0 {
                    v += self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.sup[i] * x[i + 1];
                }
                v
            })
            .collect()
    }
}

/// Pivot-free Thomas elimination; intended for diagonally dominant systems.
pub fn solve_tridiag(system: &TriDiagSystem) -> Result<Vec<f64>> {
    let n = system.len();
    if system.rhs.len() != n || (n > 0 && (system.sub.len() != n - 1 || system.sup.len() != n - 1)) {
        return Err(Error::DimensionMismatch("tridiagonal bands and rhs disagree".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = system.main[0];
    if pivot == 0.0 {
        return Err(Error::ZeroPivot { row: 0 });
    }
    if n > 1 {
        c[0] = system.sup[0] / pivot;
    }
    d[0] = system.rhs[0] / pivot;
    for i in 1..n {
        pivot = system.main[i] - system.sub[i - 1] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::ZeroPivot { row: i });
        }
        if i + 1 < n {
            c[i] = system.sup[i] / pivot;
        }
        d[i] = (system.rhs[i] - system.sub[i - 1] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Symmetric positive semi-definite matrix in coordinate form with a
/// right-hand side. Duplicate entries are summed.
#[derive(Clone, Debug, Default)]
pub struct SparseSystem {
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            rhs: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    pub fn to_csr(&self) -> Csr {
        let mut entries = self.entries.clone();
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_start = vec![0usize; self.dim + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_start[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.dim {
            row_start[i + 1] += row_start[i];
        }
        Csr {
            dim: self.dim,
            row_start,
            cols,
            vals,
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let csr = self.to_csr();
        (0..self.dim).all(|r| {
            (csr.row_start[r]..csr.row_start[r + 1]).all(|k| (csr.get(csr.cols[k], r) - csr.vals[k]).abs() <= tol)
        })
    }
}

/// Compressed sparse rows with sorted, unique column indices per row.
#[derive(Clone, Debug)]
pub struct Csr {
    dim: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_start[row]..self.row_start[row + 1];
        match self.cols[range.clone()].binary_search(&col) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_start[r]..self.row_start[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            out[r] = acc;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients from a zero start. Converged when
/// `|r|_2 <= tolerance * |rhs|_2`.
pub fn solve_cg(system: &SparseSystem, tolerance: f64, max_iterations: usize) -> Result<Vec<f64>> {
    if system.rhs.len() != system.dim {
        return Err(Error::DimensionMismatch(format!(
            "rhs has {} entries for dimension {}",
            system.rhs.len(),
            system.dim
        )));
    }
    let a = system.to_csr();
    let n = system.dim;
    let b_norm = dot(&system.rhs, &system.rhs).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let target = tolerance * b_norm;
    let mut r = system.rhs.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for iteration in 0..max_iterations {
        if rr.sqrt() <= target {
            return Ok(x);
        }
        a.mul_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            return Err(Error::NotConverged {
                iterations: iteration,
                residual: rr.sqrt() / b_norm,
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    // Recompute the true residual before giving up.
    a.mul_into(&x, &mut ap);
    let true_res = ap
        .iter()
        .zip(&system.rhs)
        .map(|(ax, b)| (b - ax) * (b - ax))
        .sum::<f64>()
        .sqrt();
    if true_res <= target {
        Ok(x)
    } else {
        Err(Error::NotConverged {
            iterations: max_iterations,
            residual: true_res / b_norm,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination with partial pivoting.
    pub(crate) fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
            x[row] = (b[row] - s) / a[row][row];
        }
        x
    }

    #[test]
    fn tridiag_identity_returns_rhs() {
        let sys = TriDiagSystem {
            sub: vec![0.0; 3],
            main: vec![1.0; 4],
            sup: vec![0.0; 3],
            rhs: vec![1.0, -2.0, 3.5, 0.0],
        };
        assert_eq!(solve_tridiag(&sys).unwrap(), sys.rhs);
    }

    #[test]
    fn tridiag_harmonic_is_linear() {
        // -x[i-1] + 2x[i] - x[i+1] = 0 with x[-1] = 0, x[n] = 1 folded into rhs.
        let n = 9;
        let mut rhs = vec![0.0; n];
        rhs[n - 1] = 1.0;
        let sys = TriDiagSystem {
            sub: vec![-1.0; n - 1],
            main: vec![2.0; n],
            sup: vec![-1.0; n - 1],
            rhs,
        };
        let x = solve_tridiag(&sys).unwrap();
        for (i, v) in x.iter().enumerate() {
            assert!((v - (i + 1) as f64 / (n + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn tridiag_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 12;
        let sub: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sup: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let main: Vec<f64> = (0..n).map(|_| rng.gen_range(2.5..4.0)).collect();
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let sys = TriDiagSystem { sub, main, sup, rhs };
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            dense[i][i] = sys.main[i];
            if i + 1 < n {
                dense[i][i + 1] = sys.sup[i];
                dense[i + 1][i] = sys.sub[i];
            }
        }
        let x = solve_tridiag(&sys).unwrap();
        let oracle = dense_solve(dense, sys.rhs.clone());
        for (a, b) in x.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
        let res = sys.apply(&x);
        let rhs_max = sys.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (r, b) in res.iter().zip(&sys.rhs) {
            assert!((r - b).abs() <= 1e-9 * rhs_max);
        }
    }

    #[test]
    fn tridiag_zero_pivot() {
        let sys = TriDiagSystem {
            sub: vec![1.0],
            main: vec![0.0, 1.0],
            sup: vec![1.0],
            rhs: vec![1.0, 1.0],
        };
        assert!(matches!(solve_tridiag(&sys), Err(Error::ZeroPivot { row: 0 })));
    }

    #[test]
    fn cg_identity() {
        let mut sys = SparseSystem::new(3);
        for i in 0..3 {
            sys.add(i, i, 1.0);
        }
        sys.rhs = vec![1.0, 2.0, 3.0];
        let x = solve_cg(&sys, 1e-12, 10).unwrap();
        assert_eq!(x, sys.rhs);
    }

    #[test]
    fn cg_grid_laplacian_matches_dense() {
        let n = 8;
        let idx = |x: usize, y: usize| y * n + x;
        let mut sys = SparseSystem::new(n * n);
        let mut dense = vec![vec![0.0; n * n]; n * n];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for y in 0..n {
            for x in 0..n {
                let i = idx(x, y);
                // Dirichlet boundary of zero outside the grid: 4 on the diagonal always.
                sys.add(i, i, 4.0);
                dense[i][i] = 4.0;
                for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && ny >= 0 && nx < n as i64 && ny < n as i64 {
                        let j = idx(nx as usize, ny as usize);
                        sys.add(i, j, -1.0);
                        dense[i][j] = -1.0;
                    }
                }
                sys.rhs[i] = rng.gen_range(-1.0..1.0);
            }
        }
        assert!(sys.is_symmetric(0.0));
        let x = solve_cg(&sys, 1e-12, 1000).unwrap();
        let oracle = dense_solve(dense, sys.rhs.clone());
        for (a, b) in x.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn cg_inconsistent_singular_system_fails() {
        // Pure Neumann 1D Laplacian is singular with null space = constants.
        let mut sys = SparseSystem::new(3);
        for (i, j, v) in [(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 1.0)] {
            sys.add(i, j, v);
        }
        sys.rhs = vec![1.0, 1.0, 1.0];
        assert!(matches!(solve_cg(&sys, 1e-10, 100), Err(Error::NotConverged { .. })));
    }
}
