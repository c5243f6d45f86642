//! Gaussian linear model with additive two-sided heterogeneity,
//! `Y = x1 A + x2 beta + eps`, `eps ~ N(0, sigma2 I)`.
//!
//! Heterogeneity is removed by the annihilator `M = I - x1 x1†`. Quadratic
//! forms `a'Qa` are estimated without the limited-mobility bias by
//! subtracting `sigma2 * Trace((x1†)' Q x1†)` from the plug-in value.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{Estimate, EstimateResult};
use crate::linalg::Decomposition;
use crate::netcore::{ColumnRole, DesignMatrices};

/// Tolerance below which covariates count as absorbed by `x1`, relative to `||x2||`.
const SINGULAR_DESIGN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub beta: DVector<f64>,
    pub sigma2: f64,
}

impl LinearParams {
    /// `sigma2 = 0` is accepted so noiseless designs can be evaluated exactly.
    pub fn new(beta: DVector<f64>, sigma2: f64) -> Result<Self> {
        if !sigma2.is_finite() || sigma2 < 0.0 {
            return Err(Error::InvalidParameter(format!("sigma2 must be finite and nonnegative, got {sigma2}")));
        }
        Ok(Self { beta, sigma2 })
    }
}

/// Symmetric matrix `Q` defining the target `a'Qa`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    q: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::DimensionMismatch(format!("Q is {}x{}", q.nrows(), q.ncols())));
        }
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-12 * q.amax().max(1.0) {
            return Err(Error::InvalidParameter(format!("Q is not symmetric (max asymmetry {asym:e})")));
        }
        Ok(Self { q })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn evaluate(&self, a: &DVector<f64>) -> f64 {
        a.dot(&(&self.q * a))
    }
}

fn check_dims(y: &DVector<f64>, dm: &DesignMatrices, beta: &DVector<f64>) -> Result<()> {
    if y.len() != dm.n() {
        return Err(Error::DimensionMismatch(format!("y has {} rows, design has {}", y.len(), dm.n())));
    }
    if beta.len() != dm.k() {
        return Err(Error::DimensionMismatch(format!("beta has {} entries, x2 has {} columns", beta.len(), dm.k())));
    }
    Ok(())
}

fn residual(y: &DVector<f64>, dm: &DesignMatrices, beta: &DVector<f64>) -> Result<DVector<f64>> {
    check_dims(y, dm, beta)?;
    Ok(if dm.k() == 0 { y.clone() } else { y - &dm.x2 * beta })
}

/// `M (y - x2 beta)`: zero in expectation at the true `beta`, whatever `a`.
pub fn phi_beta(y: &DVector<f64>, dm: &DesignMatrices, beta: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(dm.decomposition().annihilate(&residual(y, dm, beta)?))
}

/// Quasi-differencing estimator `[x2' M x2]^-1 x2' M y`.
pub fn estimate_beta(y: &DVector<f64>, dm: &DesignMatrices) -> Result<DVector<f64>> {
    if y.len() != dm.n() {
        return Err(Error::DimensionMismatch(format!("y has {} rows, design has {}", y.len(), dm.n())));
    }
    if dm.k() == 0 {
        return Ok(DVector::zeros(0));
    }
    let mx2 = dm.decomposition().annihilate_matrix(&dm.x2);
    let scale = dm.x2.norm().max(f64::MIN_POSITIVE);
    let dec = Decomposition::new(&mx2, 0.0)?;
    let smallest = dec.singular_values().iter().cloned().fold(f64::INFINITY, f64::min);
    if dec.rank() < dm.k() || smallest <= SINGULAR_DESIGN_TOL * scale {
        return Err(Error::SingularDesign);
    }
    // M is a symmetric idempotent, so (Mx2)'My = (Mx2)'y and the minimizer is (Mx2)† y.
    Ok(dec.pinv_apply(y))
}

/// Degree-of-freedom-corrected `r'Mr / Trace(M)` with `r = y - x2 beta_hat`.
pub fn estimate_sigma2(y: &DVector<f64>, dm: &DesignMatrices, beta_hat: &DVector<f64>) -> Result<f64> {
    let n2 = dm.n2()?;
    if n2 == 0 {
        return Err(Error::ZeroDegreesOfFreedom);
    }
    let mr = phi_beta(y, dm, beta_hat)?;
    Ok(mr.norm_squared() / n2 as f64)
}

/// `r'Mr - n2 sigma2`.
pub fn phi_sigma2(y: &DVector<f64>, dm: &DesignMatrices, params: &LinearParams) -> Result<f64> {
    let mr = phi_beta(y, dm, &params.beta)?;
    Ok(mr.norm_squared() - dm.n2()? as f64 * params.sigma2)
}

/// `Trace((x1†)' Q x1†) = Trace(Q x1† x1†')`.
pub fn trace_term(dm: &DesignMatrices, qf: &QuadraticForm) -> Result<f64> {
    if qf.q.nrows() != dm.m() {
        return Err(Error::DimensionMismatch(format!("Q is {0}x{0}, design has {1} columns", qf.q.nrows(), dm.m())));
    }
    Ok(qf.q.component_mul(dm.pinv_gram()).sum())
}

fn require_full_rank(dm: &DesignMatrices) -> Result<()> {
    if !dm.is_full_rank() {
        return Err(Error::RankDeficient {
            rank: dm.rank1,
            columns: dm.m(),
        });
    }
    Ok(())
}

/// `(y - x2 beta)'(x1†)'Q x1†(y - x2 beta) - sigma2 Trace((x1†)'Q x1†)`,
/// with conditional mean `a'Qa` at the true `(beta, sigma2)`.
pub fn psi_quadratic(y: &DVector<f64>, dm: &DesignMatrices, params: &LinearParams, qf: &QuadraticForm) -> Result<f64> {
    require_full_rank(dm)?;
    let tr = trace_term(dm, qf)?;
    let a_hat = dm.decomposition().pinv_apply(&residual(y, dm, &params.beta)?);
    Ok(qf.evaluate(&a_hat) - params.sigma2 * tr)
}

/// Reusable estimator for one design and one `Q`: the factorization and trace
/// term are computed once, then each outcome vector costs two mat-vecs.
#[derive(Debug, Clone)]
pub struct QuadraticFormPlan<'a> {
    dm: &'a DesignMatrices,
    qf: QuadraticForm,
    trace: f64,
    n2: usize,
}

/// One evaluation of a [`QuadraticFormPlan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticFormFit {
    pub corrected: f64,
    pub plug_in: f64,
    pub sigma2_hat: f64,
    pub trace_term: f64,
}

impl<'a> QuadraticFormPlan<'a> {
    pub fn new(dm: &'a DesignMatrices, qf: QuadraticForm) -> Result<Self> {
        require_full_rank(dm)?;
        let n2 = dm.n2()?;
        if n2 == 0 {
            return Err(Error::ZeroDegreesOfFreedom);
        }
        let trace = trace_term(dm, &qf)?;
        Ok(Self { dm, qf, trace, n2 })
    }

    pub fn trace_term(&self) -> f64 {
        self.trace
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn fit(&self, y: &DVector<f64>) -> Result<QuadraticFormFit> {
        let beta_hat = estimate_beta(y, self.dm)?;
        let r = residual(y, self.dm, &beta_hat)?;
        let dec = self.dm.decomposition();
        let sigma2_hat = dec.annihilate(&r).norm_squared() / self.n2 as f64;
        let plug_in = self.qf.evaluate(&dec.pinv_apply(&r));
        Ok(QuadraticFormFit {
            corrected: plug_in - sigma2_hat * self.trace,
            plug_in,
            sigma2_hat,
            trace_term: self.trace,
        })
    }
}

/// Bias-corrected estimate of `a'Qa` with `beta_hat` and `sigma2_hat` plugged into `psi`.
pub fn estimate_quadratic_form(y: &DVector<f64>, dm: &DesignMatrices, qf: &QuadraticForm) -> Result<EstimateResult> {
    let plan = QuadraticFormPlan::new(dm, qf.clone())?;
    let fit = plan.fit(y)?;
    let mut out = EstimateResult::new(Estimate::Scalar(fit.corrected), dm.n())
        .with_diagnostic("plug_in", fit.plug_in)
        .with_diagnostic("sigma2_hat", fit.sigma2_hat)
        .with_diagnostic("trace_term", fit.trace_term);
    out.n2 = Some(plan.n2());
    Ok(out)
}

/// The three `Q` matrices of the variance decomposition, as edge-weighted
/// de-meaned second moments of worker effects, firm effects, and their product.
#[derive(Debug, Clone)]
pub struct DecompositionForms {
    pub worker: QuadraticForm,
    pub firm: QuadraticForm,
    pub cross: QuadraticForm,
}

pub fn decomposition_forms(dm: &DesignMatrices) -> Result<DecompositionForms> {
    let n = dm.n();
    let m = dm.m();
    if n == 0 {
        return Err(Error::InvalidParameter("empty design".into()));
    }
    if dm.columns.iter().any(|c| matches!(c, ColumnRole::Other(_))) {
        return Err(Error::InvalidParameter("design columns are not tagged with worker/firm roles".into()));
    }
    // Each row has at most one worker column and one firm column set to 1.
    let mut worker_col = vec![None; n];
    let mut firm_col = vec![None; n];
    for (c, role) in dm.columns.iter().enumerate() {
        for r in 0..n {
            if dm.x1[(r, c)] != 0.0 {
                match role {
                    ColumnRole::Worker(_) => worker_col[r] = Some(c),
                    ColumnRole::Firm(_) => firm_col[r] = Some(c),
                    ColumnRole::Other(_) => {}
                }
            }
        }
    }
    let mut gww: DMatrix<f64> = DMatrix::zeros(m, m);
    let mut gff: DMatrix<f64> = DMatrix::zeros(m, m);
    let mut gwf: DMatrix<f64> = DMatrix::zeros(m, m);
    let mut sw: DVector<f64> = DVector::zeros(m);
    let mut sf: DVector<f64> = DVector::zeros(m);
    for r in 0..n {
        if let Some(w) = worker_col[r] {
            gww[(w, w)] += 1.0;
            sw[w] += 1.0;
        }
        if let Some(f) = firm_col[r] {
            gff[(f, f)] += 1.0;
            sf[f] += 1.0;
        }
        if let (Some(w), Some(f)) = (worker_col[r], firm_col[r]) {
            gwf[(w, f)] += 1.0;
        }
    }
    let nf = n as f64;
    // D'HD/n with H = I - 11'/n, using D'1 = column sums.
    let worker = (gww - &sw * sw.transpose() / nf) / nf;
    let firm = (gff - &sf * sf.transpose() / nf) / nf;
    let cross_half = (gwf - &sw * sf.transpose() / nf) / nf;
    let cross = (&cross_half + cross_half.transpose()) * 0.5;
    Ok(DecompositionForms {
        worker: QuadraticForm::new(worker)?,
        firm: QuadraticForm::new(firm)?,
        cross: QuadraticForm::new(cross)?,
    })
}

/// Variance of worker effects, variance of firm effects, and their covariance
/// over edges, each bias-corrected. Plug-in values are in `diagnostics`.
pub fn variance_decomposition(y: &DVector<f64>, dm: &DesignMatrices) -> Result<EstimateResult> {
    let forms = decomposition_forms(dm)?;
    let mut components = BTreeMap::new();
    let mut diagnostics = BTreeMap::new();
    let mut n2 = None;
    for (name, qf) in [
        ("var_worker", forms.worker),
        ("var_firm", forms.firm),
        ("cov_worker_firm", forms.cross),
    ] {
        let plan = QuadraticFormPlan::new(dm, qf)?;
        let fit = plan.fit(y)?;
        components.insert(name.to_string(), fit.corrected);
        diagnostics.insert(format!("{name}_plug_in"), fit.plug_in);
        diagnostics.insert(format!("{name}_trace_term"), fit.trace_term);
        diagnostics.insert("sigma2_hat".to_string(), fit.sigma2_hat);
        n2 = Some(plan.n2());
    }
    let total: f64 = components["var_worker"] + components["var_firm"] + 2.0 * components["cov_worker_firm"];
    let mut out = EstimateResult::new(Estimate::Scalar(total), dm.n());
    out.components = Some(components);
    out.diagnostics = diagnostics;
    out.n2 = n2;
    Ok(out)
}

/// A function of `y` that is linear (`C y + offset`, vector valued) or
/// quadratic (`y'Cy + b'y + d`, scalar).
#[derive(Debug, Clone)]
pub enum Functional {
    Linear { c: DMatrix<f64>, offset: DVector<f64> },
    Quadratic { c: DMatrix<f64>, b: DVector<f64>, d: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Moment {
    Vector(DVector<f64>),
    Scalar(f64),
}

impl Moment {
    pub fn max_abs(&self) -> f64 {
        match self {
            Moment::Vector(v) => v.amax(),
            Moment::Scalar(s) => s.abs(),
        }
    }
}

impl Functional {
    /// `phi_beta` as the linear map `M y - M x2 beta`.
    pub fn phi_beta(dm: &DesignMatrices, beta: &DVector<f64>) -> Result<Self> {
        let pp = dm.projectors()?;
        let offset = if dm.k() == 0 { DVector::zeros(dm.n()) } else { -(&pp.m * (&dm.x2 * beta)) };
        Ok(Functional::Linear { c: pp.m, offset })
    }

    /// `(y - x2 beta)' C (y - x2 beta) + constant` expanded into `y'Cy + b'y + d`.
    fn centered_quadratic(dm: &DesignMatrices, beta: &DVector<f64>, c: DMatrix<f64>, constant: f64) -> Self {
        let shift = if dm.k() == 0 { DVector::zeros(dm.n()) } else { &dm.x2 * beta };
        let c_shift = &c * &shift;
        let b = -2.0 * &c_shift;
        let d = shift.dot(&c_shift) + constant;
        Functional::Quadratic { c, b, d }
    }

    pub fn phi_sigma2(dm: &DesignMatrices, params: &LinearParams) -> Result<Self> {
        let pp = dm.projectors()?;
        Ok(Self::centered_quadratic(dm, &params.beta, pp.m, -(pp.n2 as f64) * params.sigma2))
    }

    /// `sigma2_hat` with `beta` known, `r'Mr / n2`.
    pub fn sigma2_known_beta(dm: &DesignMatrices, beta: &DVector<f64>) -> Result<Self> {
        let pp = dm.projectors()?;
        if pp.n2 == 0 {
            return Err(Error::ZeroDegreesOfFreedom);
        }
        let c = pp.m / pp.n2 as f64;
        Ok(Self::centered_quadratic(dm, beta, c, 0.0))
    }

    pub fn psi_quadratic(dm: &DesignMatrices, params: &LinearParams, qf: &QuadraticForm) -> Result<Self> {
        require_full_rank(dm)?;
        let pinv = dm.pinv();
        let c = pinv.transpose() * qf.matrix() * pinv;
        let c = (&c + c.transpose()) * 0.5;
        let tr = c.trace();
        Ok(Self::centered_quadratic(dm, &params.beta, c, -params.sigma2 * tr))
    }

    pub fn evaluate(&self, y: &DVector<f64>) -> Result<Moment> {
        match self {
            Functional::Linear { c, offset } => {
                if c.ncols() != y.len() {
                    return Err(Error::DimensionMismatch("functional/outcome length".into()));
                }
                Ok(Moment::Vector(c * y + offset))
            }
            Functional::Quadratic { c, b, d } => {
                if c.ncols() != y.len() {
                    return Err(Error::DimensionMismatch("functional/outcome length".into()));
                }
                Ok(Moment::Scalar(y.dot(&(c * y)) + b.dot(y) + d))
            }
        }
    }
}

/// Exact `E[f(Y) | a, x]` for `Y ~ N(x1 a + x2 beta, sigma2 I)`.
pub fn gaussian_conditional_expectation(
    f: &Functional,
    dm: &DesignMatrices,
    a: &DVector<f64>,
    params: &LinearParams,
) -> Result<Moment> {
    if a.len() != dm.m() || params.beta.len() != dm.k() {
        return Err(Error::DimensionMismatch("a or beta does not match the design".into()));
    }
    let mut mean = &dm.x1 * a;
    if dm.k() > 0 {
        mean += &dm.x2 * &params.beta;
    }
    match f {
        Functional::Linear { c, offset } => {
            if c.ncols() != dm.n() || offset.len() != c.nrows() {
                return Err(Error::DimensionMismatch("linear functional does not match the design".into()));
            }
            Ok(Moment::Vector(c * &mean + offset))
        }
        Functional::Quadratic { c, b, d } => {
            if c.shape() != (dm.n(), dm.n()) || b.len() != dm.n() {
                return Err(Error::DimensionMismatch("quadratic functional does not match the design".into()));
            }
            Ok(Moment::Scalar(mean.dot(&(c * &mean)) + params.sigma2 * c.trace() + b.dot(&mean) + d))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use nalgebra::dvector;

    fn mean_design(x2: Option<DVector<f64>>, y: DVector<f64>) -> DesignMatrices {
        let n = y.len();
        let x2 = match x2 {
            Some(v) => DMatrix::from_column_slice(n, 1, v.as_slice()),
            None => DMatrix::zeros(n, 0),
        };
        DesignMatrices::from_parts(y, DMatrix::from_element(n, 1, 1.0), x2).unwrap()
    }

    #[test]
    fn phi_beta_demeaning_examples() {
        let y = dvector![1.0, 2.0, 3.0];
        let dm = mean_design(Some(dvector![0.0, 1.0, 2.0]), y.clone());
        assert!(phi_beta(&y, &dm, &dvector![1.0]).unwrap().amax() < 1e-14);
        let m_y = phi_beta(&y, &dm, &dvector![0.0]).unwrap();
        assert!((m_y - dvector![-1.0, 0.0, 1.0]).amax() < 1e-14);
    }

    #[test]
    fn phi_beta_noiseless_is_zero() {
        let x1 = dmatrix![1.0, 0.0; 1.0, 0.0; 0.0, 1.0; 0.0, 1.0; 1.0, 1.0];
        let x2 = dmatrix![0.3; -1.0; 2.0; 0.5; 1.5];
        let y = &x1 * dvector![1.5, -0.7] + &x2 * dvector![2.0];
        let dm = DesignMatrices::from_parts(y.clone(), x1, x2).unwrap();
        assert!(phi_beta(&y, &dm, &dvector![2.0]).unwrap().amax() < 1e-13);
    }

    #[test]
    fn beta_noiseless_recovery() {
        let x2 = dvector![0.0, 1.0, 2.0, 3.0];
        let y = x2.add_scalar(2.0);
        let dm = mean_design(Some(x2), y.clone());
        let b = estimate_beta(&y, &dm).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn beta_collinear_is_singular() {
        let y = dvector![1.0, 2.0, 0.5];
        let dm = mean_design(Some(dvector![3.0, 3.0, 3.0]), y.clone());
        assert!(matches!(estimate_beta(&y, &dm), Err(Error::SingularDesign)));
    }

    #[test]
    fn sigma2_hand_computation() {
        let y = dvector![0.0, 0.0, 3.0];
        let dm = mean_design(None, y.clone());
        let s2 = estimate_sigma2(&y, &dm, &DVector::zeros(0)).unwrap();
        assert!((s2 - 3.0).abs() < 1e-14);
        let params = LinearParams::new(DVector::zeros(0), 3.0).unwrap();
        assert!(phi_sigma2(&y, &dm, &params).unwrap().abs() < 1e-13);
        let params = LinearParams::new(DVector::zeros(0), 0.0).unwrap();
        assert!(phi_sigma2(&y, &dm, &params).unwrap() > 0.0);
    }

    #[test]
    fn sigma2_zero_when_exact_fit() {
        let y = dvector![2.0, 2.0, 2.0];
        let dm = mean_design(None, y.clone());
        assert!(estimate_sigma2(&y, &dm, &DVector::zeros(0)).unwrap().abs() < 1e-28);
    }

    #[test]
    fn sigma2_refuses_without_degrees_of_freedom() {
        let y = dvector![1.0, 2.0];
        let dm = DesignMatrices::from_parts(y.clone(), DMatrix::identity(2, 2), DMatrix::zeros(2, 0)).unwrap();
        assert!(matches!(estimate_sigma2(&y, &dm, &DVector::zeros(0)), Err(Error::ZeroDegreesOfFreedom)));
    }

    #[test]
    fn psi_quadratic_examples() {
        let y = dvector![1.0, 1.0];
        let dm = DesignMatrices::from_parts(y.clone(), DMatrix::identity(2, 2), DMatrix::zeros(2, 0)).unwrap();
        let params = LinearParams::new(DVector::zeros(0), 1.0).unwrap();
        let q = QuadraticForm::new(DMatrix::identity(2, 2)).unwrap();
        assert!(psi_quadratic(&y, &dm, &params, &q).unwrap().abs() < 1e-14);
        let zero = QuadraticForm::new(DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(psi_quadratic(&y, &dm, &params, &zero).unwrap(), 0.0);
    }

    #[test]
    fn psi_quadratic_noiseless_exact() {
        let x1 = dmatrix![1.0, 0.0; 1.0, 0.0; 0.0, 1.0; 1.0, 1.0];
        let a = dvector![0.8, -1.3];
        let y = &x1 * &a;
        let dm = DesignMatrices::from_parts(y.clone(), x1, DMatrix::zeros(4, 0)).unwrap();
        let q = QuadraticForm::new(dmatrix![2.0, 0.5; 0.5, -1.0]).unwrap();
        let params = LinearParams::new(DVector::zeros(0), 0.0).unwrap();
        let psi = psi_quadratic(&y, &dm, &params, &q).unwrap();
        assert!((psi - q.evaluate(&a)).abs() < 1e-12);
        // Estimated version: sigma2_hat is 0 on noiseless data, so exact as well.
        let est = estimate_quadratic_form(&y, &dm, &q).unwrap();
        assert!((est.estimate.as_scalar().unwrap() - q.evaluate(&a)).abs() < 1e-12);
    }

    #[test]
    fn psi_requires_full_rank() {
        let x1 = dmatrix![1.0, 1.0; 1.0, 1.0];
        let y = dvector![1.0, 2.0];
        let dm = DesignMatrices::from_parts(y.clone(), x1, DMatrix::zeros(2, 0)).unwrap();
        let params = LinearParams::new(DVector::zeros(0), 1.0).unwrap();
        let q = QuadraticForm::new(DMatrix::identity(2, 2)).unwrap();
        assert!(matches!(psi_quadratic(&y, &dm, &params, &q), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn quadratic_form_rejects_asymmetry() {
        assert!(QuadraticForm::new(dmatrix![1.0, 2.0; 0.0, 1.0]).is_err());
        assert!(LinearParams::new(DVector::zeros(0), -1.0).is_err());
    }

    #[test]
    fn oracle_examples() {
        let x1 = dmatrix![1.0, 0.0; 1.0, 0.0; 0.0, 1.0; 1.0, 1.0; 0.0, 1.0];
        let x2 = dmatrix![0.2; -0.4; 1.0; 0.0; 0.7];
        let dm = DesignMatrices::from_parts(DVector::zeros(5), x1, x2).unwrap();
        let params = LinearParams::new(dvector![0.9], 1.7).unwrap();
        let a = dvector![-0.5, 2.0];
        let f = Functional::phi_beta(&dm, &params.beta).unwrap();
        let e = gaussian_conditional_expectation(&f, &dm, &a, &params).unwrap();
        assert!(e.max_abs() < 1e-12);
        let f = Functional::phi_sigma2(&dm, &params).unwrap();
        let e = gaussian_conditional_expectation(&f, &dm, &a, &params).unwrap();
        assert!(e.max_abs() < 1e-12);
        let q = QuadraticForm::new(dmatrix![1.0, -0.3; -0.3, 0.5]).unwrap();
        let f = Functional::psi_quadratic(&dm, &params, &q).unwrap();
        match gaussian_conditional_expectation(&f, &dm, &a, &params).unwrap() {
            Moment::Scalar(v) => assert!((v - q.evaluate(&a)).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn functional_evaluation_matches_direct_formulas() {
        let x1 = dmatrix![1.0, 0.0; 1.0, 0.0; 0.0, 1.0; 1.0, 1.0; 0.0, 1.0];
        let x2 = dmatrix![0.2; -0.4; 1.0; 0.0; 0.7];
        let y = dvector![0.3, -1.1, 2.2, 0.9, 0.4];
        let dm = DesignMatrices::from_parts(y.clone(), x1, x2).unwrap();
        let params = LinearParams::new(dvector![0.9], 1.7).unwrap();
        let q = QuadraticForm::new(dmatrix![1.0, -0.3; -0.3, 0.5]).unwrap();
        let direct = psi_quadratic(&y, &dm, &params, &q).unwrap();
        let via = Functional::psi_quadratic(&dm, &params, &q).unwrap().evaluate(&y).unwrap();
        assert!((via.max_abs() - direct.abs()).abs() < 1e-12);
        let direct = phi_sigma2(&y, &dm, &params).unwrap();
        let via = Functional::phi_sigma2(&dm, &params).unwrap().evaluate(&y).unwrap();
        assert!((via.max_abs() - direct.abs()).abs() < 1e-12);
    }

    #[test]
    fn decomposition_forms_match_direct_moments() {
        use crate::netcore::{build_design, DesignOptions, Edge, NetworkData};
        let edge = |w, f, p| Edge { worker: w, firm: f, period: p, y: 0.0, x: vec![] };
        let net = NetworkData::from_edges(
            vec![edge(0, 0, 0), edge(0, 1, 1), edge(1, 0, 0), edge(1, 1, 1), edge(2, 1, 0), edge(2, 2, 1)],
            0,
        )
        .unwrap();
        let dm = build_design(&net, DesignOptions::default()).unwrap();
        let alpha = [0.4, -0.2, 1.1];
        let psi = [0.3, -0.8, 0.5];
        let a = dm.normalized_effects(&alpha, &psi).unwrap();
        let forms = decomposition_forms(&dm).unwrap();
        // Direct edge-weighted moments of the normalized effects.
        let (ws, fs): (Vec<f64>, Vec<f64>) = net
            .edges
            .iter()
            .map(|e| {
                let w = a[e.worker];
                let f = dm
                    .columns
                    .iter()
                    .position(|c| *c == ColumnRole::Firm(e.firm))
                    .map(|c| a[c])
                    .unwrap_or(0.0);
                (w, f)
            })
            .unzip();
        let n = ws.len() as f64;
        let mw = ws.iter().sum::<f64>() / n;
        let mf = fs.iter().sum::<f64>() / n;
        let vw = ws.iter().map(|w| (w - mw).powi(2)).sum::<f64>() / n;
        let vf = fs.iter().map(|f| (f - mf).powi(2)).sum::<f64>() / n;
        let cv = ws.iter().zip(&fs).map(|(w, f)| (w - mw) * (f - mf)).sum::<f64>() / n;
        assert!((forms.worker.evaluate(&a) - vw).abs() < 1e-13);
        assert!((forms.firm.evaluate(&a) - vf).abs() < 1e-13);
        assert!((forms.cross.evaluate(&a) - cv).abs() < 1e-13);
    }
}
