//! Link models: the conditional law of an observation given the projection
//! `G = <a, x>`, samplers, and the Gaussian moment functions
//! `m_k(y) = E[G^k p(y | G)]` with `G ~ N(0, 1)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{erfcx, integrate_y, normal_pdf, Interval, QuadratureSpec};

/// Conditional density `p(y | g)`.
pub type DensityFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Draws `y` given `g` from a caller-supplied stream.
pub type SamplerFn = Arc<dyn Fn(f64, &mut dyn RngCore) -> f64 + Send + Sync>;
/// One of the moment functions `y -> m_k(y)`.
pub type MomentFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    MixedLinearRegression,
    MixedPhaseRetrieval,
    Custom,
}

impl LinkKind {
    pub fn short_name(self) -> &'static str {
        match self {
            LinkKind::MixedLinearRegression => "mlr",
            LinkKind::MixedPhaseRetrieval => "pr",
            LinkKind::Custom => "custom",
        }
    }
}

/// User-supplied link. Either `density` or `moments` must be present.
#[derive(Clone)]
pub struct CustomLink {
    pub name: String,
    pub support: Interval,
    pub sampler: SamplerFn,
    pub density: Option<DensityFn>,
    pub moments: Option<[MomentFn; 3]>,
    pub quadrature: QuadratureSpec,
}

/// Immutable description of `p(y | g)`.
#[derive(Clone)]
pub struct LinkModel {
    kind: LinkKind,
    sigma: f64,
    custom: Option<Arc<CustomLink>>,
}

impl fmt::Debug for LinkModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("LinkModel");
        s.field("kind", &self.kind).field("sigma", &self.sigma);
        if let Some(c) = &self.custom {
            s.field("name", &c.name);
        }
        s.finish()
    }
}

impl LinkModel {
    pub fn mixed_linear_regression(sigma: f64) -> Result<Self> {
        Self::builtin(LinkKind::MixedLinearRegression, sigma)
    }

    pub fn mixed_phase_retrieval(sigma: f64) -> Result<Self> {
        Self::builtin(LinkKind::MixedPhaseRetrieval, sigma)
    }

    fn builtin(kind: LinkKind, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Argument(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(Self { kind, sigma, custom: None })
    }

    /// Parses `mlr` / `pr` (also the long names).
    pub fn from_name(name: &str, sigma: f64) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "mlr" | "mixed_linear_regression" | "linear" => Self::mixed_linear_regression(sigma),
            "pr" | "mixed_phase_retrieval" | "phase" => Self::mixed_phase_retrieval(sigma),
            other => Err(Error::Argument(format!("unknown model '{other}' (expected mlr or pr)"))),
        }
    }

    pub fn custom(link: CustomLink) -> Result<Self> {
        if link.density.is_none() && link.moments.is_none() {
            return Err(Error::Argument(
                "custom link needs a density or the three moment functions".into(),
            ));
        }
        if !(link.support.lo < link.support.hi) {
            return Err(Error::Argument("custom link support must be a nonempty interval".into()));
        }
        link.quadrature.validate()?;
        Ok(Self { kind: LinkKind::Custom, sigma: f64::NAN, custom: Some(Arc::new(link)) })
    }

    pub fn kind(&self) -> LinkKind {
        self.kind
    }

    /// Noise standard deviation; NaN for custom links.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn name(&self) -> &str {
        match &self.custom {
            Some(c) => &c.name,
            None => self.kind.short_name(),
        }
    }

    pub fn has_closed_form_moments(&self) -> bool {
        match &self.custom {
            Some(c) => c.moments.is_some(),
            None => true,
        }
    }

    fn var_y(&self) -> f64 {
        1.0 + self.sigma * self.sigma
    }

    /// Observation support, truncated to `y_tail_sigmas` standard deviations
    /// of `Y` for the built-in models.
    pub fn support(&self, spec: &QuadratureSpec) -> Interval {
        let k = spec.y_tail_sigmas;
        let top = k * self.var_y().sqrt();
        match self.kind {
            LinkKind::MixedLinearRegression => Interval::new(-top, top),
            LinkKind::MixedPhaseRetrieval if self.sigma == 0.0 => Interval::new(0.0, top),
            LinkKind::MixedPhaseRetrieval => {
                Interval::new(-k * self.sigma, top).with_breakpoints([0.0])
            }
            LinkKind::Custom => self.custom.as_ref().expect("custom link").support.clone(),
        }
    }

    /// Draws `q(g, eps)`.
    pub fn sample_y(&self, g: f64, rng: &mut dyn RngCore) -> f64 {
        match self.kind {
            LinkKind::MixedLinearRegression => g + self.noise(rng),
            LinkKind::MixedPhaseRetrieval => g.abs() + self.noise(rng),
            LinkKind::Custom => (self.custom.as_ref().expect("custom link").sampler)(g, rng),
        }
    }

    fn noise(&self, rng: &mut dyn RngCore) -> f64 {
        if self.sigma == 0.0 {
            0.0
        } else {
            let e: f64 = rng.sample(StandardNormal);
            self.sigma * e
        }
    }

    /// `p(y | g)`. Not defined for the noiseless built-in models.
    pub fn cond_density(&self, y: f64, g: f64) -> Result<f64> {
        let gauss = |mean: f64| {
            let z = (y - mean) / self.sigma;
            (-0.5 * z * z).exp() / (self.sigma * (2.0 * PI).sqrt())
        };
        match self.kind {
            _ if self.kind != LinkKind::Custom && self.sigma == 0.0 => Err(Error::Domain(
                "noiseless link has no conditional density; use the moment functions".into(),
            )),
            LinkKind::MixedLinearRegression => Ok(gauss(g)),
            LinkKind::MixedPhaseRetrieval => Ok(gauss(g.abs())),
            LinkKind::Custom => match &self.custom.as_ref().expect("custom link").density {
                Some(p) => Ok(p(y, g)),
                None => Err(Error::Domain("custom link was built without a density".into())),
            },
        }
    }

    /// `m_k(y)` for `k` in {0, 1, 2}.
    pub fn moment_m(&self, k: usize, y: f64) -> Result<f64> {
        if k > 2 {
            return Err(Error::Argument(format!("moment order must be 0, 1 or 2, got {k}")));
        }
        let v = self.moments(y)[k];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteNode { node: y, value: v })
        }
    }

    /// `[m_0(y), m_1(y), m_2(y)]`. Custom links whose fallback quadrature
    /// fails yield NaN entries.
    pub fn moments(&self, y: f64) -> [f64; 3] {
        match self.kind {
            LinkKind::MixedLinearRegression => {
                let s = self.var_y();
                let m0 = (-0.5 * y * y / s).exp() / (2.0 * PI * s).sqrt();
                let sig2 = self.sigma * self.sigma;
                [m0, m0 * y / s, m0 * (y * y + sig2 + sig2 * sig2) / (s * s)]
            }
            LinkKind::MixedPhaseRetrieval => {
                let m0 = self.pr_m0(y);
                [m0, 0.0, m0 * self.ratio_delta_unchecked(y)]
            }
            LinkKind::Custom => {
                let c = self.custom.as_ref().expect("custom link");
                match &c.moments {
                    Some(m) => [m[0](y), m[1](y), m[2](y)],
                    None => {
                        let mut out = [f64::NAN; 3];
                        for (k, slot) in out.iter_mut().enumerate() {
                            if let Ok(v) = self.moment_by_quadrature(k, y, &c.quadrature) {
                                *slot = v;
                            }
                        }
                        out
                    }
                }
            }
        }
    }

    fn pr_m0(&self, y: f64) -> f64 {
        if self.sigma == 0.0 {
            return if y >= 0.0 { 2.0 * normal_pdf(y) } else { 0.0 };
        }
        let s = self.var_y();
        let x = y / (self.sigma * (2.0 * s).sqrt());
        let base = (-0.5 * y * y / s).exp() / (2.0 * PI * s).sqrt();
        if x >= 0.0 {
            base * (1.0 + libm::erf(x))
        } else {
            // 1 + erf(x) = erfc(-x)
            base * libm::erfc(-x)
        }
    }

    /// `m_2(y) / m_0(y)`.
    pub fn ratio_delta(&self, y: f64) -> Result<f64> {
        match self.kind {
            LinkKind::MixedLinearRegression | LinkKind::MixedPhaseRetrieval => {
                if self.kind == LinkKind::MixedPhaseRetrieval && self.sigma == 0.0 && y < 0.0 {
                    return Err(Error::Domain(format!("m0({y}) = 0 outside the support")));
                }
                Ok(self.ratio_delta_unchecked(y))
            }
            LinkKind::Custom => {
                let [m0, _, m2] = self.moments(y);
                if !(m0 > 0.0) {
                    return Err(Error::Domain(format!("m0({y}) = {m0} is not positive")));
                }
                Ok(m2 / m0)
            }
        }
    }

    /// `Δ(y)` for the built-in models, computed without forming `m_0`.
    pub(crate) fn ratio_delta_unchecked(&self, y: f64) -> f64 {
        let sig2 = self.sigma * self.sigma;
        let s = 1.0 + sig2;
        let base = (y * y + sig2 + sig2 * sig2) / (s * s);
        if self.kind == LinkKind::MixedLinearRegression || self.sigma == 0.0 {
            return base;
        }
        let x = y / (self.sigma * (2.0 * s).sqrt());
        // exp(-x^2) / (1 + erf(x))
        let tail = if x >= 0.0 {
            (-x * x).exp() / (1.0 + libm::erf(x))
        } else {
            1.0 / erfcx(-x)
        };
        base + (2.0 / PI).sqrt() * self.sigma * y * tail / s.powf(1.5)
    }

    /// `m_k(y)` by direct quadrature over `g` of `g^k p(y|g) phi(g)`.
    /// Requires a conditional density.
    pub fn moment_by_quadrature(&self, k: usize, y: f64, spec: &QuadratureSpec) -> Result<f64> {
        if k > 2 {
            return Err(Error::Argument(format!("moment order must be 0, 1 or 2, got {k}")));
        }
        // probe once so that missing densities surface as errors
        self.cond_density(y, 0.0)?;
        let g_max = spec.y_tail_sigmas;
        let iv = Interval::new(-g_max, g_max).with_breakpoints([0.0, y, -y]);
        integrate_y(
            |g| {
                let p = self.cond_density(y, g).unwrap_or(f64::NAN);
                g.powi(k as i32) * p * normal_pdf(g)
            },
            &iv,
            spec,
        )
    }
}
