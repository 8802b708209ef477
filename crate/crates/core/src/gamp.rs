//! GAMP iteration whose fixed points are the spectral eigenvectors, and its
//! scalar state evolution. Used as a verification harness: the iteration is
//! started from the true signal, which is not available in practice.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{linear_estimate, spectral_estimate, Dataset};
use crate::models::LinkModel;
use crate::numerics::QuadratureSpec;
use crate::preprocess::{check_alpha, Preprocessor};
use crate::theory::{expect_weighted, joint_support, SpectralLaw, Weight};

pub const DEFAULT_T_MAX: usize = 200;

/// Which signal the iteration targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    One,
    Two,
}

impl Choice {
    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            1 => Ok(Choice::One),
            2 => Ok(Choice::Two),
            _ => Err(Error::Argument(format!("choice must be 1 or 2, got {i}"))),
        }
    }

    fn weight(self, alpha: f64) -> f64 {
        match self {
            Choice::One => alpha,
            Choice::Two => 1.0 - alpha,
        }
    }
}

/// Moments of `F(y) = T(y) / (λ* - T(y))` over `(G, Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FMoments {
    pub lambda_star: f64,
    /// `E[F]`
    pub e_f: f64,
    /// `E[F^2]`
    pub e_f2: f64,
    /// `E[F^2 G^2]`
    pub e_f2g2: f64,
    /// `E[F (G^2 - 1)]`
    pub e_fg: f64,
}

impl FMoments {
    pub fn compute(
        choice: Choice,
        alpha: f64,
        t: &Preprocessor,
        model: &LinkModel,
        spec: &QuadratureSpec,
        delta: f64,
    ) -> Result<Self> {
        let law = SpectralLaw::new(t, model, spec)?;
        let ls = law.lambda_star(choice.weight(alpha) * delta)?;
        let f = |z: f64| z / (ls - z);
        Ok(Self {
            lambda_star: ls,
            e_f: law.expect_z(Weight::M0, f)?,
            e_f2: law.expect_z(Weight::M0, |z| f(z).powi(2))?,
            e_f2g2: law.expect_z(Weight::M2, |z| f(z).powi(2))?,
            e_fg: law.expect_z(Weight::M2MinusM0, f)?,
        })
    }
}

/// State-evolution parameters; entry `k` holds iteration `t = k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SETrace {
    pub choice: Choice,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub sigma_u2: Vec<f64>,
    pub chi1: Vec<f64>,
    pub chi2: Vec<f64>,
    pub sigma_v2: Vec<f64>,
    pub beta: Vec<f64>,
    pub chi_tilde: f64,
    pub sigma2_tilde: f64,
    pub beta_tilde2: f64,
    pub moments: FMoments,
}

impl SETrace {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

fn check_hypotheses(choice: Choice, alpha: f64, delta: f64, m: &FMoments) -> Result<()> {
    let g = choice.weight(alpha) * m.e_fg;
    if !(g > 0.0) {
        return Err(Error::Subcritical(format!("E[F (G^2 - 1)] = {g} is not positive")));
    }
    let need = m.e_f2 / (g * g);
    if !(delta > need) {
        return Err(Error::Subcritical(format!(
            "delta = {delta} does not exceed E[F^2]/E[F(G^2-1)]^2 = {need}"
        )));
    }
    Ok(())
}

/// Closed-form fixed point `(χ̃, σ̃^2)` of the recursion.
pub fn se_fixed_point(
    choice: Choice,
    alpha: f64,
    delta: f64,
    t: &Preprocessor,
    model: &LinkModel,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let m = FMoments::compute(choice, alpha, t, model, spec, delta)?;
    check_hypotheses(choice, alpha, delta, &m)?;
    let (chi, s2, _) = fixed_point_from(choice, alpha, delta, &m);
    Ok((chi, s2))
}

fn fixed_point_from(choice: Choice, alpha: f64, delta: f64, m: &FMoments) -> (f64, f64, f64) {
    let w = choice.weight(alpha);
    let b2 = delta * (w * m.e_fg).powi(2);
    let a = w * m.e_f2g2 + (1.0 - w) * m.e_f2;
    let b = m.e_f2;
    let den = b2 + a - b;
    let chi = (b2 * (b2 - b) / den).max(0.0).sqrt();
    (chi, b2 * a / den, b2)
}

/// Iterates the scalar recursion for `t_max` steps. `l` only enters the
/// first step.
#[allow(clippy::too_many_arguments)]
pub fn state_evolution(
    choice: Choice,
    alpha: f64,
    delta: f64,
    l: &Preprocessor,
    t: &Preprocessor,
    model: &LinkModel,
    t_max: usize,
    spec: &QuadratureSpec,
) -> Result<SETrace> {
    check_alpha(alpha)?;
    if t_max == 0 {
        return Err(Error::Argument("t_max must be positive".into()));
    }
    let m = FMoments::compute(choice, alpha, t, model, spec, delta)?;
    check_hypotheses(choice, alpha, delta, &m)?;
    let support = joint_support(model, &[l], spec);
    let e_gl = expect_weighted(model, &support, spec, Weight::M1, |y| l.eval(y))?;
    let e_l2 = expect_weighted(model, &support, spec, Weight::M0, |y| l.eval(y).powi(2))?;

    let w = choice.weight(alpha);
    // moments under the mixed law of (Y~, G_i)
    let fg_mixed = w * m.e_fg;
    let f2g2_mixed = w * m.e_f2g2 + (1.0 - w) * m.e_f2;
    let sd = delta.sqrt();

    let mut tr = SETrace {
        choice,
        mu1: Vec::with_capacity(t_max),
        mu2: Vec::with_capacity(t_max),
        sigma_u2: Vec::with_capacity(t_max),
        chi1: Vec::with_capacity(t_max),
        chi2: Vec::with_capacity(t_max),
        sigma_v2: Vec::with_capacity(t_max),
        beta: Vec::with_capacity(t_max),
        chi_tilde: 0.0,
        sigma2_tilde: 0.0,
        beta_tilde2: 0.0,
        moments: m,
    };
    let chi1_1 = delta * alpha * e_gl;
    let chi2_1 = delta * (1.0 - alpha) * e_gl;
    let sv2_1 = delta * e_l2;
    let (mu1_1, mu2_1) = match choice {
        Choice::One => (1.0 / sd, 0.0),
        Choice::Two => (0.0, 1.0 / sd),
    };
    tr.chi1.push(chi1_1);
    tr.chi2.push(chi2_1);
    tr.sigma_v2.push(sv2_1);
    tr.beta.push((chi1_1 * chi1_1 + chi2_1 * chi2_1 + sv2_1).sqrt());
    tr.mu1.push(mu1_1);
    tr.mu2.push(mu2_1);
    tr.sigma_u2.push(0.0);

    // track the targeted component only; the other one is identically zero
    let mut mu = 1.0 / sd;
    let mut su2 = 0.0;
    for _ in 1..t_max {
        let chi = delta * mu * fg_mixed;
        let sv2 = delta * (mu * mu * f2g2_mixed + su2 * m.e_f2);
        let beta = (chi * chi + sv2).sqrt();
        mu = chi / (sd * beta);
        su2 = sv2 / (delta * beta * beta);
        let (c1, c2, m1, m2) = match choice {
            Choice::One => (chi, 0.0, mu, 0.0),
            Choice::Two => (0.0, chi, 0.0, mu),
        };
        tr.chi1.push(c1);
        tr.chi2.push(c2);
        tr.mu1.push(m1);
        tr.mu2.push(m2);
        tr.sigma_v2.push(sv2);
        tr.sigma_u2.push(su2);
        tr.beta.push(beta);
    }
    let (chi, s2, b2) = fixed_point_from(choice, alpha, delta, &m);
    tr.chi_tilde = chi;
    tr.sigma2_tilde = s2;
    tr.beta_tilde2 = b2;
    Ok(tr)
}

/// Per-iteration diagnostics of a finite-dimensional run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GampRecord {
    pub t: usize,
    /// State-evolution prediction of `|v^t|^2 / d`.
    pub beta_t2: f64,
    /// State-evolution prediction of `<v^t, x̄_i> / d` for the targeted signal.
    pub chi_t: f64,
    pub empirical_norm2_over_d: f64,
    pub empirical_corr_x1: f64,
    pub empirical_corr_x2: f64,
    /// `|<v^t, v_i(D)>| / |v^t|`.
    pub corr_with_eigvec: f64,
    /// `|(D̄/λ* - (1 + δ E[F])) v| / sqrt(d)` with `|v| = sqrt(d)`.
    pub eig_residual: f64,
}

#[derive(Debug, Clone)]
pub struct GampRun {
    pub records: Vec<GampRecord>,
    pub v: DVector<f64>,
    pub u: DVector<f64>,
    pub trace: SETrace,
    pub converged: bool,
}

/// Runs the iteration with deterministic Onsager terms on `ds`. Stops when
/// the relative change of `v` drops below `tol` or after `t_max` steps.
#[allow(clippy::too_many_arguments)]
pub fn run_gamp(
    ds: &Dataset,
    l: &Preprocessor,
    t: &Preprocessor,
    model: &LinkModel,
    choice: Choice,
    t_max: usize,
    tol: f64,
    spec: &QuadratureSpec,
) -> Result<GampRun> {
    let (n, d) = (ds.n(), ds.d());
    let delta = ds.delta_realized;
    let trace = state_evolution(choice, ds.alpha, delta, l, t, model, t_max, spec)?;
    let m = trace.moments;
    let ls = m.lambda_star;
    let sd = delta.sqrt();
    let sqrt_d = (d as f64).sqrt();

    let abar = &ds.a / sqrt_d;
    let z = ds.y.map(|v| t.eval(v));
    let fdiag = z.map(|zi| zi / (ls - zi));
    let xbar = match choice {
        Choice::One => &ds.x1_star * sqrt_d,
        Choice::Two => &ds.x2_star * sqrt_d,
    };
    let eig = spectral_estimate(ds, t)?;
    let eigvec = match choice {
        Choice::One => eig.v1,
        Choice::Two => eig.v2,
    };
    let eig_shift = 1.0 + delta * m.e_f;

    let mut records = Vec::with_capacity(t_max);
    let mut record = |tt: usize, v: &DVector<f64>| -> Result<()> {
        let k = tt - 1;
        let beta = trace.beta[k];
        let norm2 = v.norm_squared() / d as f64;
        if !(beta >= 1e-8) {
            return Err(Error::Instability { t: tt, reason: format!("beta_t = {beta} below 1e-8") });
        }
        if !(norm2 <= 1e3 * beta * beta) {
            return Err(Error::Instability {
                t: tt,
                reason: format!("|v|^2/d = {norm2} exceeds 1e3 beta_t^2 = {}", 1e3 * beta * beta),
            });
        }
        let vn = v.norm();
        let corr = if vn > 0.0 { (v.dot(&eigvec) / vn).abs() } else { 0.0 };
        let residual = if vn > 0.0 {
            let vs = v * (sqrt_d / vn);
            let tv = (&abar * &vs).component_mul(&z);
            let dv = abar.tr_mul(&tv) / ls;
            (dv - &vs * eig_shift).norm() / sqrt_d
        } else {
            f64::NAN
        };
        records.push(GampRecord {
            t: tt,
            beta_t2: beta * beta,
            chi_t: match choice {
                Choice::One => trace.chi1[k],
                Choice::Two => trace.chi2[k],
            },
            empirical_norm2_over_d: norm2,
            empirical_corr_x1: v.dot(&ds.x1_star) / sqrt_d,
            empirical_corr_x2: v.dot(&ds.x2_star) / sqrt_d,
            corr_with_eigvec: corr,
            eig_residual: residual,
        });
        Ok(())
    };

    // v^1 = Ā^T L(y) = (n / sqrt(d)) x_lin
    let mut v = linear_estimate(ds, l) * (n as f64 / sqrt_d);
    record(1, &v)?;
    let mut u = &abar * &xbar / sd;
    let mut converged = false;
    if t_max >= 2 {
        let next = abar.tr_mul(&fdiag.component_mul(&u)) - &xbar * (sd * m.e_f);
        v = next;
        record(2, &v)?;
    }
    for tt in 2..t_max {
        let beta = trace.beta[tt - 1];
        u = (&abar * &v - fdiag.component_mul(&u)) / (sd * beta);
        let next = abar.tr_mul(&fdiag.component_mul(&u)) - &v * (sd * m.e_f / beta);
        let change = (&next - &v).norm() / v.norm().max(1e-300);
        v = next;
        record(tt + 1, &v)?;
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(GampRun { records, v, u, trace, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::generate_dataset;
    use crate::preprocess::{optimal_linear, optimal_spectral};
    use crate::theory::rho_spec;
    use approx::assert_abs_diff_eq;

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn setup() -> (LinkModel, Preprocessor, Preprocessor) {
        let m = LinkModel::mixed_linear_regression(0.0).unwrap();
        let l = optimal_linear(&m, &q()).unwrap();
        let t = optimal_spectral(&m, 0.6, 1, &q()).unwrap();
        (m, l, t)
    }

    #[test]
    fn se_initialization_and_fixed_point() {
        let (m, l, t) = setup();
        let delta = 6.0;
        let tr = state_evolution(Choice::One, 0.6, delta, &l, &t, &m, 200, &q()).unwrap();
        assert_eq!(tr.mu1[0], 1.0 / delta.sqrt());
        assert_eq!(tr.mu2[0], 0.0);
        assert_eq!(tr.sigma_u2[0], 0.0);
        assert!(tr.chi2[1..].iter().all(|c| *c == 0.0));
        assert!(tr.mu2[1..].iter().all(|c| *c == 0.0));
        for k in 0..tr.len() {
            let lhs = tr.beta[k].powi(2);
            let rhs = tr.chi1[k].powi(2) + tr.chi2[k].powi(2) + tr.sigma_v2[k];
            assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }
        assert_abs_diff_eq!(tr.beta[99].powi(2), 1.0 / delta, epsilon = 1e-8);
        assert_abs_diff_eq!(tr.beta_tilde2, 1.0 / delta, epsilon = 1e-8);
        // E[F(Y~) G_1^2] = 1/δ + E[F]
        let m1 = tr.moments;
        assert_abs_diff_eq!(0.6 * (m1.e_fg + m1.e_f) + 0.4 * m1.e_f, 1.0 / delta + m1.e_f, epsilon = 1e-9);
        assert_abs_diff_eq!(tr.chi_tilde.powi(2) + tr.sigma2_tilde, tr.beta_tilde2, epsilon = 1e-10);
        let rs = rho_spec(0.6, delta, &t, &m, 1, &q()).unwrap();
        assert_abs_diff_eq!(tr.chi_tilde, rs / delta.sqrt(), epsilon = 1e-6);
        let (chi, s2) = se_fixed_point(Choice::One, 0.6, delta, &t, &m, &q()).unwrap();
        assert_abs_diff_eq!(chi, *tr.chi1.last().unwrap(), epsilon = 1e-6);
        assert_abs_diff_eq!(s2, *tr.sigma_v2.last().unwrap(), epsilon = 1e-6);
    }

    #[test]
    fn se_choice_two_is_symmetric() {
        let (m, l, _) = setup();
        let t2 = optimal_spectral(&m, 0.6, 2, &q()).unwrap();
        let delta = 12.0;
        let tr = state_evolution(Choice::Two, 0.6, delta, &l, &t2, &m, 200, &q()).unwrap();
        assert!(tr.chi1[1..].iter().all(|c| *c == 0.0));
        assert_abs_diff_eq!(tr.beta_tilde2, 1.0 / delta, epsilon = 1e-8);
        let rs = rho_spec(0.6, delta, &t2, &m, 2, &q()).unwrap();
        assert_abs_diff_eq!(tr.chi_tilde, rs / delta.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn subcritical_is_rejected() {
        let (m, l, t) = setup();
        assert!(matches!(
            se_fixed_point(Choice::One, 0.6, 1.0, &t, &m, &q()),
            Err(Error::Subcritical(_))
        ));
        assert!(state_evolution(Choice::One, 0.6, 1.0, &l, &t, &m, 10, &q()).is_err());
    }

    #[test]
    fn first_iterate_is_linear_estimator() {
        let (m, l, t) = setup();
        let ds = generate_dataset(150, 6.0, 0.6, &m, 2).unwrap();
        let run = run_gamp(&ds, &l, &t, &m, Choice::One, 1, 0.0, &q()).unwrap();
        let d = ds.d() as f64;
        let expected = ds.a.tr_mul(&ds.y.map(|v| l.eval(v))) / d.sqrt();
        assert!((&run.v - expected).norm() < 1e-9 * run.v.norm());
        assert_eq!(run.records.len(), 1);
    }

    #[test]
    fn small_run_tracks_eigenvector() {
        let (m, l, t) = setup();
        let ds = generate_dataset(300, 6.0, 0.6, &m, 8).unwrap();
        let run = run_gamp(&ds, &l, &t, &m, Choice::One, 60, 0.0, &q()).unwrap();
        let last = run.records.last().unwrap();
        assert!(last.corr_with_eigvec > 0.95, "{last:?}");
        assert!(last.eig_residual < 0.2, "{last:?}");
    }
}
