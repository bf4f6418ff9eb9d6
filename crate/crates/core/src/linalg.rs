//! Sparse direct solves through `faer`: supernodal LU with partial pivoting
//! for general matrices, and a supernodal LDLᵀ for systems that can be scaled
//! to symmetric quasi-definite form. Also a 1-norm condition estimate.

use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::linalg::solvers::Solve;
use faer::perm::PermRef;
use faer::reborrow::*;
use faer::sparse::linalg::cholesky::{simplicial, supernodal};
use faer::sparse::linalg::{amd, LuError, SymbolicSupernodalParams};
use faer::sparse::{SparseColMat, SparseColMatRef, SymbolicSparseColMat, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par};

use crate::error::SolverError;
use crate::sparse::SparseMatrix;

/// Relative residual above which iterative refinement is taken.
pub const REFINE_THRESHOLD: f64 = 1e-9;

/// Upper bound on refinement steps for regularized factorizations.
pub const MAX_REFINE_STEPS: usize = 40;

const RUIZ_SWEEPS: usize = 10;
const DYNAMIC_DELTA: f64 = 1e-10;
const DYNAMIC_EPSILON: f64 = 1e-13;

/// Describes how to turn `A` into a symmetric quasi-definite matrix
/// `S = diag(left) A diag(right)`.
///
/// `signs[i]` is the expected sign of the `i`-th pivot (+1 on primal
/// unknowns, -1 on multipliers). A positive `delta` adds `signs[i] * delta`
/// to the diagonal of the equilibrated matrix; the resulting factorization
/// solves a nearby system and must be paired with iterative refinement.
#[derive(Debug, Clone)]
pub struct SymmetricForm {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub signs: Vec<i8>,
    pub delta: f64,
}

impl SymmetricForm {
    /// Unscaled form with the given signs.
    pub fn unscaled(signs: Vec<i8>, delta: f64) -> Self {
        let n = signs.len();
        SymmetricForm {
            left: vec![1.0; n],
            right: vec![1.0; n],
            signs,
            delta,
        }
    }
}

/// Which kernel produced a factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Lu,
    Ldlt,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Lu => "lu",
            Backend::Ldlt => "ldlt",
        }
    }
}

struct LdltFactors {
    symbolic: supernodal::SymbolicSupernodalCholesky<usize>,
    values: Vec<f64>,
    perm: Vec<usize>,
    perm_inv: Vec<usize>,
    col_left: Vec<f64>,
    col_right: Vec<f64>,
}

enum Kernel {
    Lu(faer::sparse::linalg::solvers::Lu<usize, f64>),
    Ldlt(Box<LdltFactors>),
}

/// Factors of a square sparse matrix.
pub struct Factorization {
    n: usize,
    kernel: Kernel,
    regularized: bool,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization")
            .field("n", &self.n)
            .field("backend", &self.backend())
            .field("regularized", &self.regularized)
            .finish()
    }
}

fn check_square(a: &SparseMatrix) -> Result<usize, SolverError> {
    let (n, m) = (a.nrows(), a.ncols());
    if n != m {
        return Err(SolverError::NotSquare { rows: n, cols: m });
    }
    if n == 0 {
        return Err(SolverError::Backend("empty matrix".into()));
    }
    Ok(n)
}

/// Factorizes `a` (fill-reducing column ordering, row partial pivoting).
pub fn factorize(a: &SparseMatrix) -> Result<Factorization, SolverError> {
    let n = check_square(a)?;
    // CSR of the transpose is CSC of the original.
    let t = a.transpose();
    let symbolic = SymbolicSparseColMatRef::new_checked(n, n, t.row_ptr(), None, t.col_idx());
    let mat = SparseColMatRef::new(symbolic, t.values());
    let lu = mat.sp_lu().map_err(|e| match e {
        LuError::SymbolicSingular { index } => SolverError::StructurallySingular { index },
        LuError::Generic(g) => SolverError::Backend(format!("{g:?}")),
    })?;
    let f = Factorization {
        n,
        kernel: Kernel::Lu(lu),
        regularized: false,
    };
    f.probe()?;
    Ok(f)
}

/// Factorizes `a` as `diag(left)^-1 P^T L D L^T P diag(right)^-1` after
/// symmetric equilibration, using the quasi-definite structure in `form`
/// (no pivoting, AMD ordering).
pub fn factorize_quasi_definite(a: &SparseMatrix, form: &SymmetricForm) -> Result<Factorization, SolverError> {
    let n = check_square(a)?;
    for len in [form.left.len(), form.right.len(), form.signs.len()] {
        if len != n {
            return Err(SolverError::DimensionMismatch { expected: n, got: len });
        }
    }
    let mut scaled = a.clone();
    scaled.scale_rows_cols(&form.left, &form.right);
    let norm = scaled.norm_1();
    if scaled.symmetry_defect() > 1e-12 * norm {
        return Err(SolverError::Backend("scaled matrix is not symmetric".into()));
    }

    // Ruiz equilibration in the max norm, kept symmetric.
    let mut r = vec![1.0f64; n];
    for _ in 0..RUIZ_SWEEPS {
        let mut row_max = vec![0.0f64; n];
        for (i, m) in row_max.iter_mut().enumerate() {
            for (j, v) in scaled.row(i) {
                *m = m.max((r[i] * v * r[j]).abs());
            }
        }
        for (ri, m) in r.iter_mut().zip(&row_max) {
            if *m > 0.0 {
                *ri /= m.sqrt();
            }
        }
    }

    // Lower triangle in CSC: column j holds row j of the (symmetric) upper part.
    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut row_idx = Vec::with_capacity(scaled.nnz() / 2 + n);
    let mut vals = Vec::with_capacity(scaled.nnz() / 2 + n);
    col_ptr.push(0usize);
    for j in 0..n {
        let shift = f64::from(form.signs[j]) * form.delta;
        let mut diag = false;
        for (i, v) in scaled.row(j) {
            if i < j {
                continue;
            }
            if i > j && !diag {
                row_idx.push(j);
                vals.push(shift);
                diag = true;
            }
            row_idx.push(i);
            vals.push(if i == j { r[i] * v * r[j] + shift } else { r[i] * v * r[j] });
            diag |= i == j;
        }
        if !diag {
            row_idx.push(j);
            vals.push(shift);
        }
        col_ptr.push(row_idx.len());
    }
    drop(scaled);
    let nnz = row_idx.len();
    let lower = SparseColMat::<usize, f64>::new(
        SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx),
        vals,
    );

    let mut perm = vec![0usize; n];
    let mut perm_inv = vec![0usize; n];
    {
        let mut mem = MemBuffer::try_new(amd::order_scratch::<usize>(n, nnz)).map_err(oom)?;
        amd::order(&mut perm, &mut perm_inv, lower.symbolic(), amd::Control::default(), MemStack::new(&mut mem))
            .map_err(|e| SolverError::Backend(format!("{e:?}")))?;
    }
    let permr = PermRef::new_checked(&perm, &perm_inv, n);
    let (mut pv, mut pc, mut pr) = (vec![0.0; nnz], vec![0usize; n + 1], vec![0usize; nnz]);
    {
        let mut mem =
            MemBuffer::try_new(faer::sparse::utils::permute_self_adjoint_scratch::<usize>(n)).map_err(oom)?;
        faer::sparse::utils::permute_self_adjoint_to_unsorted(
            &mut pv,
            &mut pc,
            &mut pr,
            lower.rb(),
            permr,
            faer::Side::Lower,
            faer::Side::Lower,
            MemStack::new(&mut mem),
        );
    }
    drop(lower);
    // SAFETY: produced by `permute_self_adjoint_to_unsorted`, which yields a valid
    // (unsorted) column structure of dimension n.
    let permuted = SparseColMat::<usize, f64>::new(unsafe { SymbolicSparseColMat::new_unchecked(n, n, pc, None, pr) }, pv);
    let upper = permuted
        .rb()
        .transpose()
        .symbolic()
        .to_col_major()
        .map_err(|e| SolverError::Backend(format!("{e:?}")))?;

    let mut etree = vec![0isize; n];
    let mut col_counts = vec![0usize; n];
    let symbolic = {
        let req = StackReq::any_of(&[
            simplicial::prefactorize_symbolic_cholesky_scratch::<usize>(n, nnz),
            supernodal::factorize_supernodal_symbolic_cholesky_scratch::<usize>(n),
        ]);
        let mut mem = MemBuffer::try_new(req).map_err(oom)?;
        let stack = MemStack::new(&mut mem);
        simplicial::prefactorize_symbolic_cholesky(&mut etree, &mut col_counts, upper.rb(), stack);
        // SAFETY: `etree` was just filled by the prefactorization above.
        let etree = unsafe { simplicial::EliminationTreeRef::from_inner(&etree) };
        supernodal::factorize_supernodal_symbolic_cholesky(
            upper.rb(),
            etree,
            &col_counts,
            stack,
            SymbolicSupernodalParams { relax: None },
        )
        .map_err(|e| SolverError::Backend(format!("{e:?}")))?
    };
    drop(upper);

    let psigns: Vec<i8> = perm.iter().map(|&p| form.signs[p]).collect();
    let mut values = Vec::new();
    values
        .try_reserve_exact(symbolic.len_val())
        .map_err(|_| SolverError::Backend("out of memory".into()))?;
    values.resize(symbolic.len_val(), 0.0);
    let info = {
        let req = supernodal::factorize_supernodal_numeric_ldlt_scratch::<usize, f64>(&symbolic, Par::Seq, Default::default());
        let mut mem = MemBuffer::try_new(req).map_err(oom)?;
        supernodal::factorize_supernodal_numeric_ldlt::<usize, f64>(
            &mut values,
            permuted.rb(),
            LdltRegularization {
                dynamic_regularization_signs: Some(&psigns),
                dynamic_regularization_delta: form.delta.max(DYNAMIC_DELTA),
                dynamic_regularization_epsilon: DYNAMIC_EPSILON,
            },
            &symbolic,
            Par::Seq,
            MemStack::new(&mut mem),
            Default::default(),
        )
        .map_err(|e| match e {
            faer::linalg::cholesky::ldlt::factor::LdltError::ZeroPivot { index } => {
                SolverError::NumericallySingular { index: perm[index] }
            }
        })?
    };

    let col_left = form.left.iter().zip(&r).map(|(l, r)| l * r).collect();
    let col_right = form.right.iter().zip(&r).map(|(c, r)| c * r).collect();
    let f = Factorization {
        n,
        kernel: Kernel::Ldlt(Box::new(LdltFactors {
            symbolic,
            values,
            perm,
            perm_inv,
            col_left,
            col_right,
        })),
        regularized: form.delta > 0.0 || info.dynamic_regularization_count > 0,
    };
    f.probe()?;
    Ok(f)
}

fn oom<E>(_: E) -> SolverError {
    SolverError::Backend("out of memory".into())
}

impl LdltFactors {
    fn solve_symmetric(&self, z: &mut [f64]) {
        let n = z.len();
        let req = StackReq::any_of(&[
            faer::perm::permute_rows_in_place_scratch::<usize, f64>(n, 1),
            self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq),
        ]);
        let mut mem = MemBuffer::new(req);
        let stack = MemStack::new(&mut mem);
        let perm = PermRef::new_checked(&self.perm, &self.perm_inv, n);
        let ldlt = supernodal::SupernodalLdltRef::<usize, f64>::new(&self.symbolic, &self.values);
        let mut m = MatMut::from_column_major_slice_mut(z, n, 1);
        faer::perm::permute_rows_in_place(m.rb_mut(), perm, stack);
        ldlt.solve_in_place_with_conj(Conj::No, m.rb_mut(), Par::Seq, stack);
        faer::perm::permute_rows_in_place(m.rb_mut(), perm.inverse(), stack);
    }

    // A = diag(cl)^-1 T diag(cr)^-1 with T symmetric, so
    // A^-1 b = cr * T^-1 (cl * b) and A^-T b = cl * T^-1 (cr * b).
    fn solve(&self, b: &[f64], transpose: bool) -> Vec<f64> {
        let (pre, post) = if transpose {
            (&self.col_right, &self.col_left)
        } else {
            (&self.col_left, &self.col_right)
        };
        let mut z: Vec<f64> = b.iter().zip(pre).map(|(b, s)| b * s).collect();
        self.solve_symmetric(&mut z);
        z.iter_mut().zip(post).for_each(|(z, s)| *z *= s);
        z
    }
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn backend(&self) -> Backend {
        match self.kernel {
            Kernel::Lu(_) => Backend::Lu,
            Kernel::Ldlt(_) => Backend::Ldlt,
        }
    }

    /// True when the factors belong to a perturbed matrix, so solves are
    /// only approximate and need refinement.
    pub fn is_regularized(&self) -> bool {
        self.regularized
    }

    // A zero pivot surfaces as a non-finite solve; probe with a generic rhs.
    fn probe(&self) -> Result<(), SolverError> {
        let probe: Vec<f64> = (0..self.n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        finite(self.solve_raw(&probe)).map(|_| ())
    }

    fn solve_raw(&self, b: &[f64]) -> Vec<f64> {
        match &self.kernel {
            Kernel::Lu(lu) => {
                let mut x = b.to_vec();
                lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
                x
            }
            Kernel::Ldlt(f) => f.solve(b, false),
        }
    }

    fn solve_transpose_raw(&self, b: &[f64]) -> Vec<f64> {
        match &self.kernel {
            Kernel::Lu(lu) => {
                let mut x = b.to_vec();
                lu.solve_transpose_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
                x
            }
            Kernel::Ldlt(f) => f.solve(b, true),
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolverError> {
        self.check_len(b)?;
        finite(self.solve_raw(b))
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>, SolverError> {
        self.check_len(b)?;
        finite(self.solve_transpose_raw(b))
    }

    fn check_len(&self, b: &[f64]) -> Result<(), SolverError> {
        if b.len() != self.n {
            return Err(SolverError::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        Ok(())
    }
}

fn finite(x: Vec<f64>) -> Result<Vec<f64>, SolverError> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(SolverError::NumericallySingular { index }),
        None => Ok(x),
    }
}

fn norm_1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// `||b - A x||_1 / ||b||_1`, or the plain residual norm when `b = 0`.
pub fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: f64 = b.iter().zip(&ax).map(|(b, ax)| (b - ax).abs()).sum();
    let nb = norm_1(b);
    if nb == 0.0 {
        r
    } else {
        r / nb
    }
}

/// Solution of a linear system and its quality indicators.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    pub residual: f64,
    /// Number of refinement steps taken (accepted or not).
    pub refinements: usize,
}

/// Solves with `f` and applies iterative refinement.
///
/// Exact factorizations get one step when the relative residual exceeds
/// [`REFINE_THRESHOLD`]. Regularized ones are refined until the residual stops
/// halving, at most [`MAX_REFINE_STEPS`] times.
pub fn solve_refined(a: &SparseMatrix, f: &Factorization, b: &[f64]) -> Result<LinearSolution, SolverError> {
    let mut x = f.solve(b)?;
    let mut residual = relative_residual(a, &x, b);
    let mut refinements = 0;
    let max_steps = if f.is_regularized() { MAX_REFINE_STEPS } else { 1 };
    while refinements < max_steps && (f.is_regularized() || residual > REFINE_THRESHOLD) {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
        let d = f.solve(&r)?;
        let candidate: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + d).collect();
        let next = relative_residual(a, &candidate, b);
        refinements += 1;
        if next < residual {
            x = candidate;
            let stalled = next > 0.5 * residual;
            residual = next;
            if stalled {
                break;
            }
        } else {
            break;
        }
    }
    Ok(LinearSolution { x, residual, refinements })
}

/// Estimates `||A^{-1}||_1` with the Hager/Higham power iteration on the
/// sign vectors, using at most `max_iter` pairs of solves.
pub fn inverse_norm1_estimate(f: &Factorization, max_iter: usize) -> Result<f64, SolverError> {
    let n = f.dim();
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0;
    let mut last_j = usize::MAX;
    for iter in 0..max_iter.max(1) {
        let y = f.solve(&x)?;
        let new_est: f64 = y.iter().map(|v| v.abs()).sum();
        if iter > 0 && new_est <= est {
            break;
        }
        est = new_est;
        let s: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let z = f.solve_transpose(&s)?;
        let (j, zmax) = z
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bj, bm), (i, v)| if v.abs() > bm { (i, v.abs()) } else { (bj, bm) });
        let ztx: f64 = z.iter().zip(&x).map(|(z, x)| z * x).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        last_j = j;
        x.iter_mut().for_each(|v| *v = 0.0);
        x[j] = 1.0;
    }
    // Higham's alternating-sign safeguard.
    let alt: Vec<f64> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + i as f64 / (n as f64 - 1.0).max(1.0))
        })
        .collect();
    let y = f.solve(&alt)?;
    let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
    Ok(est.max(alt_est))
}

/// Estimated reciprocal 1-norm condition number `1 / (||A||_1 ||A^{-1}||_1)`.
pub fn rcond_estimate(a: &SparseMatrix, f: &Factorization) -> Result<f64, SolverError> {
    let inv = inverse_norm1_estimate(f, 5)?;
    let norm = a.norm_1();
    if norm == 0.0 || inv == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (norm * inv))
}

/// Estimated 1-norm condition number.
pub fn condition_estimate(a: &SparseMatrix, f: &Factorization) -> Result<f64, SolverError> {
    rcond_estimate(a, f).map(|r| if r == 0.0 { f64::INFINITY } else { 1.0 / r })
}
