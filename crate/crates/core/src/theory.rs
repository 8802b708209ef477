//! Deterministic high-dimensional limits of the estimators: bulk edge and
//! outlier locations of the spectral matrix, overlaps, cross-covariances,
//! the Bayes-optimal combiner, spectral thresholds and optimal fixed points.
//!
//! Every expectation over `(G, Y)` is reduced to an integral over the
//! observation support against one of the moment functions: `E[h(Y)]` uses
//! `m_0`, `E[G h(Y)]` uses `m_1`, `E[G^2 h(Y)]` uses `m_2`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{LinkKind, LinkModel};
use crate::numerics::{erfcx, expand_upper, find_root_monotone, integrate_y, Interval, QuadratureSpec};
use crate::preprocess::{check_alpha, Preprocessor};

const MAX_DOUBLINGS: usize = 60;

/// Which moment function weights an integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    /// `E[h(Y)]`
    M0,
    /// `E[G h(Y)]`
    M1,
    /// `E[G^2 h(Y)]`
    M2,
    /// `E[(G^2 - 1) h(Y)]`
    M2MinusM0,
}

impl Weight {
    #[inline]
    fn apply(self, m: [f64; 3]) -> f64 {
        match self {
            Weight::M0 => m[0],
            Weight::M1 => m[1],
            Weight::M2 => m[2],
            Weight::M2MinusM0 => m[2] - m[0],
        }
    }
}

/// Integration domain for a model, carrying the kinks of the given maps.
pub fn joint_support(model: &LinkModel, maps: &[&Preprocessor], spec: &QuadratureSpec) -> Interval {
    let mut iv = model.support(spec);
    for p in maps {
        iv.breakpoints.extend_from_slice(p.breakpoints());
    }
    iv
}

/// `∫ h(y) w(y) dy` over the model support with the given weight.
pub fn expect_weighted<F: Fn(f64) -> f64>(
    model: &LinkModel,
    support: &Interval,
    spec: &QuadratureSpec,
    weight: Weight,
    h: F,
) -> Result<f64> {
    integrate_y(
        |y| {
            let w = weight.apply(model.moments(y));
            if w == 0.0 {
                0.0
            } else {
                h(y) * w
            }
        },
        support,
        spec,
    )
}

fn signal_weight(alpha: f64, signal: usize) -> Result<f64> {
    match signal {
        1 => Ok(alpha),
        2 => Ok(1.0 - alpha),
        _ => Err(Error::Argument(format!("signal must be 1 or 2, got {signal}"))),
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} must be positive and finite, got {v}")))
    }
}

/// The law of `Z = T(Y)` together with the moment functions; all spectral
/// quantities for a fixed preprocessor are methods on this.
#[derive(Debug, Clone)]
pub struct SpectralLaw<'a> {
    t: &'a Preprocessor,
    model: &'a LinkModel,
    spec: QuadratureSpec,
    support: Interval,
}

impl<'a> SpectralLaw<'a> {
    pub fn new(t: &'a Preprocessor, model: &'a LinkModel, spec: &QuadratureSpec) -> Result<Self> {
        t.validate_spectral()?;
        spec.validate()?;
        Ok(Self { t, model, spec: *spec, support: joint_support(model, &[t], spec) })
    }

    /// Left end of every `λ` bracket, just above `sup Z`.
    pub fn lambda_floor(&self) -> f64 {
        self.t.sup_on_support() * (1.0 + 1e-8) + 1e-12
    }

    fn root_tol(&self) -> f64 {
        1e-12 * self.lambda_floor().max(1.0)
    }

    fn check_lambda(&self, lambda: f64) -> Result<()> {
        let sup = self.t.sup_on_support();
        if lambda > sup && lambda.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("lambda = {lambda} must exceed sup Z = {sup}")))
        }
    }

    /// `E[w(G) h(Z)]` for the weight's polynomial in `G`.
    pub fn expect_z<F: Fn(f64) -> f64>(&self, weight: Weight, h: F) -> Result<f64> {
        let t = self.t;
        expect_weighted(self.model, &self.support, &self.spec, weight, |y| h(t.eval(y)))
    }

    /// `φ(λ) = λ E[Z G^2 / (λ - Z)]`.
    pub fn phi(&self, lambda: f64) -> Result<f64> {
        self.check_lambda(lambda)?;
        Ok(lambda * self.expect_z(Weight::M2, |z| z / (lambda - z))?)
    }

    /// `ψ(λ; Δ) = λ (1/Δ + E[Z / (λ - Z)])`.
    pub fn psi(&self, lambda: f64, big_delta: f64) -> Result<f64> {
        self.check_lambda(lambda)?;
        check_positive("Delta", big_delta)?;
        Ok(lambda * (1.0 / big_delta + self.expect_z(Weight::M0, |z| z / (lambda - z))?))
    }

    /// `E[(Z / (λ - Z))^2]`, decreasing in `λ`.
    pub fn edge_moment(&self, lambda: f64) -> Result<f64> {
        self.check_lambda(lambda)?;
        self.expect_z(Weight::M0, |z| {
            let r = z / (lambda - z);
            r * r
        })
    }

    /// Minimiser of `ψ(·; Δ)` on `(sup Z, ∞)`. When `ψ` is increasing on the
    /// whole domain the minimum sits at the left end of the bracket.
    pub fn lambda_bar(&self, big_delta: f64) -> Result<f64> {
        check_positive("Delta", big_delta)?;
        let target = 1.0 / big_delta;
        let f = |l: f64| Ok(self.edge_moment(l)? - target);
        let lo = self.lambda_floor();
        let f_lo = f(lo)?;
        if f_lo <= 0.0 {
            return Ok(lo);
        }
        let hi = expand_upper(f, lo, f_lo, MAX_DOUBLINGS)?;
        find_root_monotone(f, lo, hi, self.root_tol())
    }

    /// `ζ(λ; Δ) = ψ(max(λ, λ̄(Δ)); Δ)`.
    pub fn zeta(&self, lambda: f64, big_delta: f64) -> Result<f64> {
        let lb = self.lambda_bar(big_delta)?;
        self.psi(lambda.max(lb), big_delta)
    }

    /// Root of `ζ(λ; Δ_i) = φ(λ)`. The left side minus the right side is
    /// increasing; if it is already nonnegative at the bracket floor the
    /// floor is returned.
    pub fn lambda_star(&self, delta_i: f64) -> Result<f64> {
        let lb_i = self.lambda_bar(delta_i)?;
        let h = |l: f64| Ok(self.psi(l.max(lb_i), delta_i)? - self.phi(l)?);
        let lo = self.lambda_floor();
        let h_lo = h(lo)?;
        if h_lo >= 0.0 {
            return Ok(lo);
        }
        let hi = expand_upper(h, lo, h_lo, MAX_DOUBLINGS)?;
        find_root_monotone(h, lo, hi, self.root_tol())
    }

    /// Outlier locations, overlaps and the bulk edge for aspect ratio `delta`.
    pub fn predict(&self, alpha: f64, delta: f64) -> Result<SpectralPrediction> {
        check_alpha(alpha)?;
        check_positive("delta", delta)?;
        let lambda_bar = self.lambda_bar(delta)?;
        let mut lambda_star = [0.0; 2];
        let mut supercritical = [false; 2];
        let mut rho_spec = [0.0; 2];
        let mut eig = [0.0; 3];
        for (i, a_i) in [alpha, 1.0 - alpha].into_iter().enumerate() {
            let ls = self.lambda_star(a_i * delta)?;
            lambda_star[i] = ls;
            supercritical[i] = ls > lambda_bar;
            eig[i] = self.psi(ls.max(lambda_bar), delta)?;
            if supercritical[i] {
                rho_spec[i] = self.overlap_at(ls, a_i, delta)?;
            }
        }
        eig[2] = self.psi(lambda_bar, delta)?;
        Ok(SpectralPrediction { lambda_bar, lambda_star, supercritical, eig, rho_spec })
    }

    fn overlap_at(&self, ls: f64, a_i: f64, delta: f64) -> Result<f64> {
        let sq = |z: f64| {
            let r = z / (ls - z);
            r * r
        };
        let e2 = self.expect_z(Weight::M0, sq)?;
        let e2g = self.expect_z(Weight::M2MinusM0, sq)?;
        let num = 1.0 / delta - e2;
        let den = 1.0 / delta + a_i * e2g;
        let rad = num / den;
        if rad < -1e-10 || !(den > 0.0) {
            return Err(Error::Consistency(format!(
                "spectral overlap radicand {num}/{den} is negative at lambda* = {ls}"
            )));
        }
        Ok(rad.max(0.0).sqrt())
    }

    /// `-1/z + δ E[Z / (1 + zZ)]`.
    pub fn stieltjes_inverse_sum(&self, z: f64, delta: f64) -> Result<f64> {
        check_positive("delta", delta)?;
        if z == 0.0 {
            return Err(Error::Domain("z = 0 is a pole".into()));
        }
        let (sup, inf) = (self.t.sup_on_support(), self.t.inf_on_support());
        let worst = if z < 0.0 { 1.0 + z * sup } else { 1.0 + z * inf };
        if !(worst > 0.0) {
            return Err(Error::Domain(format!("1 + zT(y) vanishes on the support at z = {z}")));
        }
        Ok(-1.0 / z + delta * self.expect_z(Weight::M0, |t| t / (1.0 + z * t))?)
    }
}

/// Spectral half of a [`TheoryReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPrediction {
    pub lambda_bar: f64,
    pub lambda_star: [f64; 2],
    pub supercritical: [bool; 2],
    /// Limits of the top three eigenvalues of `D`.
    pub eig: [f64; 3],
    pub rho_spec: [f64; 2],
}

pub fn phi(lambda: f64, t: &Preprocessor, model: &LinkModel, spec: &QuadratureSpec) -> Result<f64> {
    SpectralLaw::new(t, model, spec)?.phi(lambda)
}

pub fn psi(
    lambda: f64,
    big_delta: f64,
    t: &Preprocessor,
    model: &LinkModel,
    spec: &QuadratureSpec,
) -> Result<f64> {
    SpectralLaw::new(t, model, spec)?.psi(lambda, big_delta)
}

pub fn lambda_bar(
    big_delta: f64,
    t: &Preprocessor,
    model: &LinkModel,
    spec: &QuadratureSpec,
) -> Result<f64> {
    SpectralLaw::new(t, model, spec)?.lambda_bar(big_delta)
}

/// `λ*(Δ_i)` and whether it clears the bulk edge `λ̄(δ)`.
pub fn lambda_star(
    delta_i: f64,
    delta: f64,
    t: &Preprocessor,
    model: &LinkModel,
    spec: &QuadratureSpec,
) -> Result<(f64, bool)> {
    let law = SpectralLaw::new(t, model, spec)?;
    check_positive("delta", delta)?;
    let ls = law.lambda_star(delta_i)?;
    Ok((ls, ls > law.lambda_bar(delta)?))
}

pub fn predict_eigenvalues(
    alpha: f64,
    delta: f64,
    t: &Preprocessor,
    model: &LinkModel,
    spec: &QuadratureSpec,
) -> Result<[f64; 3]> {
    Ok(SpectralLaw::new(t, model, spec)?.predict(alpha, delta)?.eig)
}

pub fn rho_spec(
    alpha: f64,
    delta: f64,
    t: &Preprocessor,
    model: &LinkModel,
    signal: usize,
    spec: &QuadratureSpec,
) -> Result<f64> {
    signal_weight(alpha, signal)?;
    Ok(SpectralLaw::new(t, model, spec)?.predict(alpha, delta)?.rho_spec[signal - 1])
}

pub fn stieltjes_inverse_sum(
    z: f64,
    delta: f64,
    t: &Preprocessor,
    model: &LinkModel,
    spec: &QuadratureSpec,
) -> Result<f64> {
    SpectralLaw::new(t, model, spec)?.stieltjes_inverse_sum(z, delta)
}

/// Linear-estimator limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearPrediction {
    pub rho: [f64; 2],
    pub n_lin: f64,
    /// `E[G L(Y)]`
    pub e_gl: f64,
    /// `E[L(Y)^2]`
    pub e_l2: f64,
    pub ineffective: bool,
}

pub fn rho_lin(
    alpha: f64,
    delta: f64,
    l: &Preprocessor,
    model: &LinkModel,
    spec: &QuadratureSpec,
) -> Result<LinearPrediction> {
    check_alpha(alpha)?;
    check_positive("delta", delta)?;
    let support = joint_support(model, &[l], spec);
    let e_gl = expect_weighted(model, &support, spec, Weight::M1, |y| l.eval(y))?;
    let e_l2 = expect_weighted(model, &support, spec, Weight::M0, |y| l.eval(y).powi(2))?;
    let mix = alpha * alpha + (1.0 - alpha) * (1.0 - alpha);
    let n_lin = (mix * e_gl * e_gl + e_l2 / delta).sqrt();
    let ineffective = e_gl.abs() <= 1e-12 * e_l2.sqrt().max(1e-300);
    let rho = if ineffective {
        [0.0, 0.0]
    } else {
        [alpha * e_gl / n_lin, (1.0 - alpha) * e_gl / n_lin]
    };
    Ok(LinearPrediction { rho, n_lin, e_gl, e_l2, ineffective })
}

/// `E[W^lin W_i^spec] = (α_i ρ_i^spec / n^lin) E[G L(Y) Z / (λ*(δ_i) - Z)]`;
/// zero when either estimator carries no signal.
pub fn cross_cov(
    alpha: f64,
    delta: f64,
    l: &Preprocessor,
    t: &Preprocessor,
    model: &LinkModel,
    signal: usize,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let a_i = signal_weight(alpha, signal)?;
    let lin = rho_lin(alpha, delta, l, model, spec)?;
    let sp = SpectralLaw::new(t, model, spec)?.predict(alpha, delta)?;
    cross_cov_from(&lin, &sp, a_i, signal, l, t, model, spec)
}

#[allow(clippy::too_many_arguments)]
fn cross_cov_from(
    lin: &LinearPrediction,
    sp: &SpectralPrediction,
    a_i: f64,
    signal: usize,
    l: &Preprocessor,
    t: &Preprocessor,
    model: &LinkModel,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let i = signal - 1;
    if lin.ineffective || !sp.supercritical[i] {
        return Ok(0.0);
    }
    let ls = sp.lambda_star[i];
    let support = joint_support(model, &[l, t], spec);
    let e = expect_weighted(model, &support, spec, Weight::M1, |y| {
        let z = t.eval(y);
        l.eval(y) * z / (ls - z)
    })?;
    Ok(a_i * sp.rho_spec[i] / lin.n_lin * e)
}

/// Coefficients of the Bayes-optimal linear-spectral combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combiner {
    pub nu: f64,
    pub xi: f64,
    pub zeta_c: f64,
    pub overlap: f64,
}

pub fn combo_coefficients(rho_lin_i: f64, rho_spec_i: f64, cross_cov_i: f64) -> Result<Combiner> {
    let nu = rho_lin_i * rho_spec_i + cross_cov_i;
    if !(nu * nu < 1.0) {
        return Err(Error::DegenerateCorrelation { nu });
    }
    let xi = rho_lin_i - rho_spec_i * nu;
    let zeta_c = rho_spec_i - rho_lin_i * nu;
    let q = xi * xi + zeta_c * zeta_c + 2.0 * xi * zeta_c * nu;
    let overlap = q.max(0.0).sqrt() / (1.0 - nu * nu);
    Ok(Combiner { nu, xi, zeta_c, overlap })
}

fn m0_and_delta(model: &LinkModel, y: f64) -> (f64, f64) {
    let m = model.moments(y);
    match model.kind() {
        LinkKind::Custom => (m[0], if m[0] > 0.0 { m[2] / m[0] } else { 0.0 }),
        _ => (m[0], model.ratio_delta_unchecked(y)),
    }
}

/// `∫ (m_2 - m_0)^2 / m_0 dy`, the spectral signal strength of the link.
pub fn spectral_strength(model: &LinkModel, spec: &QuadratureSpec) -> Result<f64> {
    integrate_y(
        |y| {
            let (m0, d) = m0_and_delta(model, y);
            m0 * (d - 1.0) * (d - 1.0)
        },
        &model.support(spec),
        spec,
    )
}

/// Smallest `δ` at which the optimally preprocessed spectral estimator
/// correlates with signal `i`; infinite when the link carries no spectral
/// signal.
pub fn spectral_threshold(
    alpha: f64,
    signal: usize,
    model: &LinkModel,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_alpha(alpha)?;
    let a_i = signal_weight(alpha, signal)?;
    let s = spectral_strength(model, spec)?;
    if !(s > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (a_i * a_i * s))
}

/// Optimal fixed point `β*`: root on `(1 - α_i, ∞)` of
/// `(β - (1 - α_i)) ∫ (m_2 - m_0)^2 / (α_i m_2 + β m_0) dy = 1/(α_i^2 δ)`.
/// The optimal overlap is `1/sqrt(β* + α_i)`.
pub fn beta_star(
    alpha: f64,
    delta: f64,
    signal: usize,
    model: &LinkModel,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_alpha(alpha)?;
    check_positive("delta", delta)?;
    let a_i = signal_weight(alpha, signal)?;
    let threshold = spectral_threshold(alpha, signal, model, spec)?;
    if delta <= threshold {
        return Err(Error::Subcritical(format!(
            "delta = {delta} does not exceed the threshold {threshold} for signal {signal}"
        )));
    }
    let support = model.support(spec);
    let target = 1.0 / (a_i * a_i * delta);
    let base = 1.0 - a_i;
    let f = |beta: f64| {
        let j = integrate_y(
            |y| {
                let (m0, d) = m0_and_delta(model, y);
                m0 * (d - 1.0) * (d - 1.0) / (a_i * d + beta)
            },
            &support,
            spec,
        )?;
        Ok((beta - base) * j - target)
    };
    solve_beta(f, base)
}

fn solve_beta<F: FnMut(f64) -> Result<f64> + Copy>(f: F, base: f64) -> Result<f64> {
    let mut g = f;
    let f_lo = g(base)?;
    let hi = expand_upper(f, base, f_lo, MAX_DOUBLINGS)?;
    find_root_monotone(f, base, hi, 1e-13 * hi.max(1.0))
}

/// `β*` for mixed linear regression via the explicit erfc form of the
/// integral.
pub fn closed_form_mlr_fixed_point(
    alpha: f64,
    delta: f64,
    sigma: f64,
    signal: usize,
) -> Result<f64> {
    check_alpha(alpha)?;
    check_positive("delta", delta)?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Argument(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let a = signal_weight(alpha, signal)?;
    let sig2 = sigma * sigma;
    let s = 1.0 + sig2;
    let threshold = s * s / (2.0 * a * a);
    if delta <= threshold {
        return Err(Error::Subcritical(format!(
            "delta = {delta} does not exceed the threshold {threshold} for signal {signal}"
        )));
    }
    let target = 1.0 / (a * a * delta);
    let base = 1.0 - a;
    let f = move |beta: f64| {
        let c = (sig2 * a + s * beta) / a;
        let lead = (a + beta) / a;
        let j = -(a + beta) / (a * a)
            + lead * lead * (PI * s * s / (2.0 * a * (sig2 * a + s * beta))).sqrt() * erfcx((c / 2.0).sqrt());
        Ok((beta - base) * j - target)
    };
    solve_beta(f, base)
}

/// `h(σ^2) = ∫ exp(-(2 + σ^2) z^2) z^2 / (1 + erf z) dz`.
pub fn pr_h(sigma2: f64, spec: &QuadratureSpec) -> Result<f64> {
    integrate_y(
        |z| {
            if z >= 0.0 {
                (-(2.0 + sigma2) * z * z).exp() * z * z / (1.0 + libm::erf(z))
            } else {
                // 1 + erf(z) = exp(-z^2) erfcx(-z)
                z * z * (-(1.0 + sigma2) * z * z).exp() / erfcx(-z)
            }
        },
        &Interval::new(-12.0, 12.0).with_breakpoints([0.0]),
        spec,
    )
}

/// Spectral threshold of mixed phase retrieval in closed form.
pub fn closed_form_pr_threshold(
    alpha: f64,
    sigma: f64,
    signal: usize,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_alpha(alpha)?;
    let a = signal_weight(alpha, signal)?;
    let s = 1.0 + sigma * sigma;
    let h = pr_h(sigma * sigma, spec)?;
    let strength = 2.0 / (s * s) + 4.0 * sigma.powi(5) * h / (PI.powf(1.5) * s * s);
    Ok(1.0 / (a * a * strength))
}

/// Every limit for one configuration. Eigenvalue fields refer to
/// `D = (1/n) A^T diag(T(y)) A` built with the single preprocessor `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub model: String,
    pub sigma: f64,
    pub alpha: f64,
    pub delta: f64,
    pub linear_preprocessor: String,
    pub spectral_preprocessor: String,
    pub lambda_bar: f64,
    pub lambda_star_1: f64,
    pub lambda_star_2: f64,
    pub supercritical_1: bool,
    pub supercritical_2: bool,
    pub eig1: f64,
    pub eig2: f64,
    pub eig3: f64,
    pub rho_lin_1: f64,
    pub rho_lin_2: f64,
    pub n_lin: f64,
    pub linear_ineffective: bool,
    pub rho_spec_1: f64,
    pub rho_spec_2: f64,
    pub cross_cov_1: f64,
    pub cross_cov_2: f64,
    pub nu_1: f64,
    pub nu_2: f64,
    pub xi_1: f64,
    pub xi_2: f64,
    pub zeta_c_1: f64,
    pub zeta_c_2: f64,
    pub combo_overlap_1: f64,
    pub combo_overlap_2: f64,
    /// Thresholds of the optimal spectral preprocessors; `None` when infinite.
    pub delta_threshold_1: Option<f64>,
    pub delta_threshold_2: Option<f64>,
}

impl TheoryReport {
    pub fn compute(
        model: &LinkModel,
        alpha: f64,
        delta: f64,
        l: &Preprocessor,
        t: &Preprocessor,
        spec: &QuadratureSpec,
    ) -> Result<Self> {
        let lin = rho_lin(alpha, delta, l, model, spec)?;
        let sp = SpectralLaw::new(t, model, spec)?.predict(alpha, delta)?;
        let mut cross = [0.0; 2];
        let mut combo = [Combiner { nu: 0.0, xi: 0.0, zeta_c: 0.0, overlap: 0.0 }; 2];
        for (i, a_i) in [alpha, 1.0 - alpha].into_iter().enumerate() {
            cross[i] = cross_cov_from(&lin, &sp, a_i, i + 1, l, t, model, spec)?;
            combo[i] = combo_coefficients(lin.rho[i], sp.rho_spec[i], cross[i])?;
        }
        let finite = |v: f64| if v.is_finite() { Some(v) } else { None };
        Ok(Self {
            model: model.name().to_string(),
            sigma: model.sigma(),
            alpha,
            delta,
            linear_preprocessor: l.name().to_string(),
            spectral_preprocessor: t.name().to_string(),
            lambda_bar: sp.lambda_bar,
            lambda_star_1: sp.lambda_star[0],
            lambda_star_2: sp.lambda_star[1],
            supercritical_1: sp.supercritical[0],
            supercritical_2: sp.supercritical[1],
            eig1: sp.eig[0],
            eig2: sp.eig[1],
            eig3: sp.eig[2],
            rho_lin_1: lin.rho[0],
            rho_lin_2: lin.rho[1],
            n_lin: lin.n_lin,
            linear_ineffective: lin.ineffective,
            rho_spec_1: sp.rho_spec[0],
            rho_spec_2: sp.rho_spec[1],
            cross_cov_1: cross[0],
            cross_cov_2: cross[1],
            nu_1: combo[0].nu,
            nu_2: combo[1].nu,
            xi_1: combo[0].xi,
            xi_2: combo[1].xi,
            zeta_c_1: combo[0].zeta_c,
            zeta_c_2: combo[1].zeta_c,
            combo_overlap_1: combo[0].overlap,
            combo_overlap_2: combo[1].overlap,
            delta_threshold_1: finite(spectral_threshold(alpha, 1, model, spec)?),
            delta_threshold_2: finite(spectral_threshold(alpha, 2, model, spec)?),
        })
    }

    pub fn combiner(&self, signal: usize) -> Combiner {
        if signal == 1 {
            Combiner { nu: self.nu_1, xi: self.xi_1, zeta_c: self.zeta_c_1, overlap: self.combo_overlap_1 }
        } else {
            Combiner { nu: self.nu_2, xi: self.xi_2, zeta_c: self.zeta_c_2, overlap: self.combo_overlap_2 }
        }
    }
}
