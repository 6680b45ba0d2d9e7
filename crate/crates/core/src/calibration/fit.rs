//! Damped least squares on a residual closure, with central-difference
//! Jacobians and the usual s²(JᵀJ)⁻¹ parameter covariance.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt, TerminationReason};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: DVector<f64>,
    /// Covariance of `params`, scaled by the residual variance.
    pub covariance: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
}

struct Problem<'a, F> {
    f: &'a F,
    x: DVector<f64>,
    m: usize,
}

fn jacobian<F>(f: &F, x: &DVector<f64>, m: usize) -> Option<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Option<DVector<f64>>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    for k in 0..n {
        let h = 1e-6 * x[k].abs().max(1.0);
        let mut up = x.clone();
        let mut dn = x.clone();
        up[k] += h;
        dn[k] -= h;
        let d = (f(&up)? - f(&dn)?) / (2.0 * h);
        jac.set_column(k, &d);
    }
    Some(jac)
}

impl<F> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, F>
where
    F: Fn(&DVector<f64>) -> Option<DVector<f64>>,
{
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.x.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.x.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        (self.f)(&self.x).filter(|r| r.len() == self.m && r.iter().all(|v| v.is_finite()))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        jacobian(self.f, &self.x, self.m)
    }
}

/// Minimize ‖f(x)‖² from `x0`. `f` returns `m` residuals, or `None` where the
/// model is undefined. Parameters should be scaled to order one.
pub fn least_squares<F>(f: F, x0: DVector<f64>, m: usize) -> Result<FitOutcome>
where
    F: Fn(&DVector<f64>) -> Option<DVector<f64>>,
{
    let n = x0.len();
    if m < n {
        return Err(Error::InsufficientData(format!("{m} residuals for {n} parameters")));
    }
    let problem = Problem { f: &f, x: x0, m };
    let (problem, report) = LevenbergMarquardt::new().with_xtol(1e-12).with_ftol(1e-14).minimize(problem);
    let ok = report.termination.was_successful()
        || matches!(report.termination, TerminationReason::NoImprovementPossible(_) | TerminationReason::LostPatience);
    if !ok {
        return Err(Error::FitDiverged(format!("{:?}", report.termination)));
    }
    if matches!(report.termination, TerminationReason::LostPatience) {
        log::warn!("least squares stopped at the evaluation limit");
    }
    let x = problem.x;
    let residuals = f(&x).ok_or_else(|| Error::FitDiverged("model undefined at the optimum".into()))?;
    let rss = residuals.norm_squared();
    let jac = jacobian(&f, &x, m).ok_or_else(|| Error::FitDiverged("Jacobian undefined at the optimum".into()))?;
    let s2 = if m > n { rss / (m - n) as f64 } else { 0.0 };
    let covariance = (jac.transpose() * &jac)
        .try_inverse()
        .ok_or_else(|| Error::FitDiverged("singular normal matrix at the optimum".into()))?
        * s2;
    if x.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
        return Err(Error::FitDiverged("non-finite estimate".into()));
    }
    Ok(FitOutcome { params: x, covariance, residuals, rss })
}
