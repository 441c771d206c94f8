//! Sparse LU front end.
//!
//! The global tangent is unsymmetric whenever recovery is active, so we
//! factorize with LU. The symbolic analysis is cached: within a loading
//! phase the assembly produces the same structural pattern every
//! iteration, so only the numeric factorization is repeated. The numeric
//! factorization itself is kept too, so the Newton loop can reuse a
//! slightly stale tangent and refactorize only when convergence degrades.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::{Error, Result};

#[derive(Default)]
pub struct SparseLu {
    symbolic: Option<faer::sparse::linalg::solvers::SymbolicLu<usize>>,
    numeric: Option<faer::sparse::linalg::solvers::Lu<usize, f64>>,
    /// Matrix behind `numeric`, kept for the post-solve residual check.
    mat: Option<SparseColMat<usize, f64>>,
}

impl SparseLu {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drop all cached factorization state (call when the reduced pattern
    /// changes, e.g. on a constraint-set switch).
    pub fn reset(&mut self) {
        self.symbolic = None;
        self.numeric = None;
        self.mat = None;
    }

    pub fn is_factorized(&self) -> bool {
        self.numeric.is_some()
    }

    /// Factorize `A` given as duplicate-summed triplets over an `n x n`
    /// pattern. The symbolic analysis is reused across calls.
    pub fn factorize(&mut self, n: usize, triplets: &[(usize, usize, f64)]) -> Result<()> {
        let entries: Vec<Triplet<usize, usize, f64>> =
            triplets.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &entries)
            .map_err(|e| Error::Solver(format!("sparse assembly failed: {e:?}")))?;
        if self.symbolic.is_none() {
            self.symbolic = Some(
                faer::sparse::linalg::solvers::SymbolicLu::try_new(a.symbolic())
                    .map_err(|e| Error::Solver(format!("symbolic LU failed: {e:?}")))?,
            );
        }
        let lu = faer::sparse::linalg::solvers::Lu::try_new_with_symbolic(
            self.symbolic.clone().expect("just set"),
            a.as_ref(),
        )
        .map_err(|e| Error::Solver(format!("LU factorization failed: {e:?}")))?;
        self.numeric = Some(lu);
        self.mat = Some(a);
        Ok(())
    }

    /// Solve `A x = rhs` against the last factorized matrix.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (lu, a) = match (&self.numeric, &self.mat) {
            (Some(l), Some(a)) => (l, a),
            _ => return Err(Error::Solver("solve before factorize".into())),
        };
        let n = a.nrows();
        debug_assert_eq!(rhs.len(), n);
        let b = Mat::from_fn(n, 1, |i, _| rhs[i]);
        let x = lu.solve(&b);
        let sol: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        // the factorization does not flag numerically singular systems, so
        // verify the solution before handing it back
        let mut res = rhs.to_vec();
        let ar = a.as_ref();
        for j in 0..n {
            for (i, v) in ar.row_idx_of_col(j).zip(ar.val_of_col(j)) {
                res[i] -= v * sol[j];
            }
        }
        let rn = res.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bn = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !rn.is_finite() || rn > 1e-10 * bn.max(f64::MIN_POSITIVE) {
            return Err(Error::Solver(format!(
                "linear solve residual {rn:e} exceeds tolerance (rhs norm {bn:e})"
            )));
        }
        Ok(sol)
    }
}
