//! Dense linear algebra built around one cached singular value decomposition.
//!
//! Every quantity the linear model needs (rank, pseudo-inverse, the two
//! orthogonal projectors and their traces) is derived from the same SVD so
//! that they agree with one another on which singular values count as zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used when none is given.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Maximum distance of `Trace(I - P)` from an integer before the input is rejected.
pub const TRACE_RESIDUAL_TOL: f64 = 1e-8;

/// Thin SVD of a matrix restricted to its numerically nonzero singular values.
#[derive(Debug, Clone)]
pub struct Decomposition {
    nrows: usize,
    ncols: usize,
    /// Left singular vectors spanning the column space (n x r).
    u: DMatrix<f64>,
    /// Retained singular values (r).
    s: DVector<f64>,
    /// Right singular vectors spanning the row space (m x r).
    v: DMatrix<f64>,
    sigma_max: f64,
}

impl Decomposition {
    pub fn new(a: &DMatrix<f64>, tol: f64) -> Result<Self> {
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let (nrows, ncols) = a.shape();
        if nrows == 0 || ncols == 0 {
            return Ok(Self {
                nrows,
                ncols,
                u: DMatrix::zeros(nrows, 0),
                s: DVector::zeros(0),
                v: DMatrix::zeros(ncols, 0),
                sigma_max: 0.0,
            });
        }
        let fa = faer::Mat::<f64>::from_fn(nrows, ncols, |i, j| a[(i, j)]);
        // nalgebra's bidiagonal SVD can return factors that do not reconstruct rank-deficient inputs.
        let svd = fa.thin_svd().map_err(|_| Error::NonConvergence("singular value decomposition".into()))?;
        let (u_all, v_all) = (svd.U(), svd.V());
        let sv: Vec<f64> = (0..nrows.min(ncols)).map(|i| svd.S()[i]).collect();
        let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
        let cutoff = tol * sigma_max;
        let keep: Vec<usize> = (0..sv.len())
            .filter(|&i| sigma_max > 0.0 && sv[i] > cutoff)
            .collect();
        let r = keep.len();
        let mut u = DMatrix::zeros(nrows, r);
        let mut v = DMatrix::zeros(ncols, r);
        let mut s = DVector::zeros(r);
        for (c, &i) in keep.iter().enumerate() {
            for row in 0..nrows {
                u[(row, c)] = u_all[(row, i)];
            }
            for row in 0..ncols {
                v[(row, c)] = v_all[(row, i)];
            }
            s[c] = sv[i];
        }
        Ok(Self {
            nrows,
            ncols,
            u,
            s,
            v,
            sigma_max,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.s
    }

    /// Orthonormal basis of the column space (the `u1` block).
    pub fn column_basis(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Moore-Penrose pseudo-inverse `V S^-1 U'` (m x n).
    pub fn pinv(&self) -> DMatrix<f64> {
        let mut vs = self.v.clone();
        for (c, s) in self.s.iter().enumerate() {
            vs.column_mut(c).scale_mut(1.0 / s);
        }
        vs * self.u.transpose()
    }

    /// `a† (a†)' = V S^-2 V'` (m x m).
    pub fn pinv_gram(&self) -> DMatrix<f64> {
        let mut vs = self.v.clone();
        for (c, s) in self.s.iter().enumerate() {
            vs.column_mut(c).scale_mut(1.0 / s);
        }
        &vs * vs.transpose()
    }

    /// `a† y` without materializing `a†`.
    pub fn pinv_apply(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut coef = self.u.tr_mul(y);
        for (c, s) in self.s.iter().enumerate() {
            coef[c] /= s;
        }
        &self.v * coef
    }

    /// Orthogonal projection of `y` onto the column space, `a a† y`.
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.u * self.u.tr_mul(y)
    }

    /// Residual-maker applied to `y`, `(I - a a†) y`.
    pub fn annihilate(&self, y: &DVector<f64>) -> DVector<f64> {
        y - self.project(y)
    }

    /// Column-wise `(I - a a†) b` for a matrix right-hand side.
    pub fn annihilate_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        b - &self.u * self.u.tr_mul(b)
    }

    /// Dense `a a†` (n x n).
    pub fn projector(&self) -> DMatrix<f64> {
        &self.u * self.u.transpose()
    }

    /// Dense projector pair with the integer residual dimension checked.
    pub fn projectors(&self) -> Result<ProjectorPair> {
        let p = self.projector();
        let m = DMatrix::identity(self.nrows, self.nrows) - &p;
        let trace = m.trace();
        let n2 = integral_trace(trace)?;
        Ok(ProjectorPair { p, m, n2 })
    }

    /// `Trace(I - a a†)` rounded, with the same integrality check as [`projectors`].
    pub fn residual_dim(&self) -> Result<usize> {
        // Trace(U U') = sum of squared column norms of U.
        let trace_p: f64 = self.u.iter().map(|x| x * x).sum();
        integral_trace(self.nrows as f64 - trace_p)
    }
}

fn integral_trace(trace: f64) -> Result<usize> {
    let rounded = trace.round();
    if (trace - rounded).abs() >= TRACE_RESIDUAL_TOL || rounded < 0.0 {
        return Err(Error::TraceNotIntegral { trace });
    }
    Ok(rounded as usize)
}

/// The two orthogonal projectors associated with a heterogeneity design.
#[derive(Debug, Clone)]
pub struct ProjectorPair {
    /// `x1 x1†`, projection onto the span of the heterogeneity columns.
    pub p: DMatrix<f64>,
    /// `I - x1 x1†`, the annihilator.
    pub m: DMatrix<f64>,
    /// `Trace(m)`, the number of residual degrees of freedom.
    pub n2: usize,
}

pub fn pinv(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    Ok(Decomposition::new(a, tol)?.pinv())
}

pub fn rank(a: &DMatrix<f64>, tol: f64) -> Result<usize> {
    Ok(Decomposition::new(a, tol)?.rank())
}

pub fn projectors(x1: &DMatrix<f64>) -> Result<ProjectorPair> {
    Decomposition::new(x1, DEFAULT_TOL)?.projectors()
}

/// Least-squares solution `a† b` and the residual norm `||a a† b - b||`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<(DVector<f64>, f64)> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "system has {} rows but right-hand side has {}",
            a.nrows(),
            b.len()
        )));
    }
    let dec = Decomposition::new(a, tol)?;
    let x = dec.pinv_apply(b);
    let residual = (a * &x - b).norm();
    Ok((x, residual))
}

/// Orthonormal basis (as columns) of the null space `{v : a v = 0}`.
pub fn null_space(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let cols = a.ncols();
    if cols == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let fa = faer::Mat::<f64>::from_fn(a.nrows(), cols, |i, j| a[(i, j)]);
    let svd = fa.svd().map_err(|_| Error::NonConvergence("singular value decomposition".into()))?;
    let v = svd.V();
    let sv: Vec<f64> = (0..a.nrows().min(cols)).map(|i| svd.S()[i]).collect();
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    // Right singular vectors past the last singular value are null directions too.
    let null: Vec<usize> = (0..cols)
        .filter(|&i| i >= sv.len() || sigma_max == 0.0 || sv[i] <= tol * sigma_max)
        .collect();
    Ok(DMatrix::from_fn(cols, null.len(), |r, c| v[(r, null[c])]))
}

/// Reduced row-echelon basis of the span of the columns of `basis`.
///
/// The result (one basis vector per row) is unique for a given subspace,
/// each row's first nonzero entry is `+1`, and pivot columns are zero in
/// every other row.
pub fn canonical_basis(basis: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut a = basis.transpose();
    let (rows, cols) = a.shape();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut pivot_row = 0;
    for col in 0..cols {
        if pivot_row == rows {
            break;
        }
        let (best, best_val) = (pivot_row..rows)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((pivot_row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_val <= tol * scale {
            continue;
        }
        a.swap_rows(pivot_row, best);
        let p = a[(pivot_row, col)];
        a.row_mut(pivot_row).scale_mut(1.0 / p);
        for r in 0..rows {
            if r != pivot_row {
                let f = a[(r, col)];
                if f != 0.0 {
                    for c in 0..cols {
                        let v = a[(pivot_row, c)];
                        a[(r, c)] -= f * v;
                    }
                }
            }
        }
        pivot_row += 1;
    }
    a.rows(0, pivot_row).clone_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        a.shape() == b.shape() && (a - b).amax() < tol
    }

    #[test]
    fn pinv_of_column_of_ones_is_mean() {
        let a = dmatrix![1.0; 1.0];
        assert!(close(&pinv(&a, DEFAULT_TOL).unwrap(), &dmatrix![0.5, 0.5], 1e-14));
    }

    #[test]
    fn pinv_identity_and_rank_one() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert!(close(&pinv(&i2, DEFAULT_TOL).unwrap(), &i2, 1e-14));
        let ones = dmatrix![1.0, 1.0; 1.0, 1.0];
        let expected = DMatrix::from_element(2, 2, 0.25);
        assert!(close(&pinv(&ones, DEFAULT_TOL).unwrap(), &expected, 1e-14));
    }

    #[test]
    fn pinv_rejects_non_finite() {
        let a = dmatrix![1.0, f64::NAN];
        assert!(matches!(pinv(&a, DEFAULT_TOL), Err(Error::NonFinite)));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&DMatrix::zeros(3, 3), DEFAULT_TOL).unwrap(), 0);
        assert_eq!(rank(&dmatrix![1.0, 1.0; 1.0, 1.0], DEFAULT_TOL).unwrap(), 1);
        assert_eq!(rank(&DMatrix::identity(5, 5), DEFAULT_TOL).unwrap(), 5);
    }

    #[test]
    fn projector_examples() {
        let pp = projectors(&DMatrix::from_element(3, 1, 1.0)).unwrap();
        assert!(close(&pp.p, &DMatrix::from_element(3, 3, 1.0 / 3.0), 1e-14));
        assert_eq!(pp.n2, 2);
        let pp = projectors(&DMatrix::identity(4, 4)).unwrap();
        assert!(pp.m.amax() < 1e-14);
        assert_eq!(pp.n2, 0);
    }

    #[test]
    fn empty_matrices() {
        let d = Decomposition::new(&DMatrix::zeros(3, 0), DEFAULT_TOL).unwrap();
        assert_eq!(d.rank(), 0);
        assert_eq!(d.residual_dim().unwrap(), 3);
        assert_eq!(d.pinv().shape(), (0, 3));
    }

    #[test]
    fn null_space_of_weight_row() {
        let w = dmatrix![1.0, 2.0];
        let ns = null_space(&w, DEFAULT_TOL).unwrap();
        assert_eq!(ns.ncols(), 1);
        let canon = canonical_basis(&ns, 1e-12);
        assert!((canon[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((canon[(0, 1)] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn canonical_basis_is_rotation_invariant() {
        let w = dmatrix![1.0, 2.0, 3.0];
        let ns = null_space(&w, DEFAULT_TOL).unwrap();
        // Rotate the basis and check the canonical form is unchanged.
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rot = dmatrix![c, -s; s, c];
        let a = canonical_basis(&ns, 1e-12);
        let b = canonical_basis(&(&ns * rot), 1e-12);
        assert!(close(&a, &b, 1e-12));
        assert!(close(&a, &dmatrix![1.0, 0.0, -1.0 / 3.0; 0.0, 1.0, -2.0 / 3.0], 1e-12));
    }

    #[test]
    fn least_squares_consistent_system() {
        let a = dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 1.0];
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let (x, res) = least_squares(&a, &b, DEFAULT_TOL).unwrap();
        assert!(res < 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }
}
