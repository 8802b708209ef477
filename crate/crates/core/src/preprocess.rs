//! Scalar preprocessing functions: `L` for the linear estimator and `T` for
//! the spectral matrix, with their range over the observation support.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::models::{LinkKind, LinkModel};
use crate::numerics::{integrate_y, Interval, QuadratureSpec};

pub type MapFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Truncation constant of the two baseline preprocessors.
pub const BASELINE_CLIP: f64 = 10.0;

const SCAN_POINTS: usize = 20_001;

#[derive(Clone)]
pub struct Preprocessor {
    name: String,
    map: MapFn,
    sup: f64,
    inf: f64,
    lipschitz: bool,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for Preprocessor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Preprocessor")
            .field("name", &self.name)
            .field("sup", &self.sup)
            .field("inf", &self.inf)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Preprocessor {
    /// A user map with declared range. The declaration is checked against a
    /// dense scan of `support`.
    pub fn custom(
        name: impl Into<String>,
        map: MapFn,
        sup: f64,
        inf: f64,
        lipschitz: bool,
        support: &Interval,
    ) -> Result<Self> {
        let p = Self {
            name: name.into(),
            map,
            sup,
            inf,
            lipschitz,
            breakpoints: support.breakpoints.clone(),
        };
        let (lo, hi, nonzero) = scan(&p.map, support)?;
        let slack = 1e-9 * sup.abs().max(inf.abs()).max(1.0);
        if hi > sup + slack || lo < inf - slack {
            return Err(Error::Argument(format!(
                "preprocessor '{}' leaves its declared range [{inf}, {sup}]: scan found [{lo}, {hi}]",
                p.name
            )));
        }
        if !nonzero {
            return Err(Error::Argument(format!("preprocessor '{}' vanishes on the support", p.name)));
        }
        Ok(p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        (self.map)(y)
    }

    pub fn sup_on_support(&self) -> f64 {
        self.sup
    }

    pub fn inf_on_support(&self) -> f64 {
        self.inf
    }

    pub fn lipschitz(&self) -> bool {
        self.lipschitz
    }

    /// Points where the map has kinks or fast transitions.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// `c * T` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Argument(format!("scale must be positive, got {c}")));
        }
        let inner = self.map.clone();
        Ok(Self {
            name: format!("{}*{c}", self.name),
            map: Arc::new(move |y| c * inner(y)),
            sup: c * self.sup,
            inf: c * self.inf,
            lipschitz: self.lipschitz,
            breakpoints: self.breakpoints.clone(),
        })
    }

    /// Bounded below with a finite positive sup, as required for the spectral matrix.
    pub fn validate_spectral(&self) -> Result<()> {
        if !self.inf.is_finite() {
            return Err(Error::Argument(format!("'{}' is unbounded below", self.name)));
        }
        if !(self.sup > 0.0 && self.sup.is_finite()) {
            return Err(Error::Argument(format!(
                "'{}' needs 0 < sup < inf on the support, got sup = {}",
                self.name, self.sup
            )));
        }
        Ok(())
    }

    /// `y -> y`.
    pub fn identity(support: &Interval) -> Self {
        Self {
            name: "identity".into(),
            map: Arc::new(|y| y),
            sup: support.hi,
            inf: support.lo,
            lipschitz: true,
            breakpoints: Vec::new(),
        }
    }

    /// Constant map, mostly useful as an analytic fixture.
    pub fn constant(c: f64) -> Self {
        Self {
            name: format!("const({c})"),
            map: Arc::new(move |_| c),
            sup: c,
            inf: c,
            lipschitz: true,
            breakpoints: Vec::new(),
        }
    }
}

/// Min, max and whether the map is nonzero somewhere, on a uniform grid
/// plus the endpoints and breakpoints.
fn scan(map: &MapFn, support: &Interval) -> Result<(f64, f64, bool)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut nonzero = false;
    let h = (support.hi - support.lo) / (SCAN_POINTS - 1) as f64;
    let extra = support.breakpoints.iter().copied().filter(|b| support.contains(*b));
    for y in (0..SCAN_POINTS).map(|i| support.lo + i as f64 * h).chain(extra) {
        let v = map(y);
        if v.is_nan() {
            return Err(Error::NonFiniteNode { node: y, value: v });
        }
        lo = lo.min(v);
        hi = hi.max(v);
        nonzero |= v != 0.0;
    }
    Ok((lo, hi, nonzero))
}

/// Max of `map` over `support`: dense scan refined by golden-section search
/// around the best grid cell.
fn sup_by_scan(map: &MapFn, support: &Interval) -> Result<f64> {
    let h = (support.hi - support.lo) / (SCAN_POINTS - 1) as f64;
    let mut best = (support.lo, f64::NEG_INFINITY);
    for i in 0..SCAN_POINTS {
        let y = support.lo + i as f64 * h;
        let v = map(y);
        if v.is_nan() {
            return Err(Error::NonFiniteNode { node: y, value: v });
        }
        if v > best.1 {
            best = (y, v);
        }
    }
    let (mut a, mut b) = ((best.0 - h).max(support.lo), (best.0 + h).min(support.hi));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut top = best.1;
    while b - a > 1e-6 * h.max(1e-300) {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        let (fc, fd) = (map(c), map(d));
        top = top.max(fc).max(fd);
        if fc > fd {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(top)
}

/// `L*(y) = m_1(y) / m_0(y)`, or an error when no linear preprocessor can
/// correlate with the signals.
pub fn optimal_linear(model: &LinkModel, spec: &QuadratureSpec) -> Result<Preprocessor> {
    let support = model.support(spec);
    let score = integrate_y(
        |y| {
            let [m0, m1, _] = model.moments(y);
            if m0 > 0.0 {
                m1 * m1 / m0
            } else {
                0.0
            }
        },
        &support,
        spec,
    )?;
    if !(score > 1e-12) {
        return Err(Error::IneffectiveLinear { value: score });
    }
    let m = model.clone();
    let map: MapFn = match model.kind() {
        LinkKind::MixedLinearRegression => {
            let s = 1.0 + model.sigma() * model.sigma();
            Arc::new(move |y| y / s)
        }
        _ => Arc::new(move |y| {
            let [m0, m1, _] = m.moments(y);
            m1 / m0
        }),
    };
    Ok(Preprocessor {
        name: "optlin".into(),
        sup: support.hi,
        inf: support.lo,
        lipschitz: true,
        breakpoints: support.breakpoints.clone(),
        map,
    })
}

/// Optimal spectral preprocessor for signal 1 or 2:
/// `T_1*(y) = 1 - 1/(alpha Δ(y) + 1 - alpha)`,
/// `T_2*(y) = 1 - 1/((1 - alpha) Δ(y) + alpha)`.
pub fn optimal_spectral(
    model: &LinkModel,
    alpha: f64,
    signal: usize,
    spec: &QuadratureSpec,
) -> Result<Preprocessor> {
    check_alpha(alpha)?;
    let weight = match signal {
        1 => alpha,
        2 => 1.0 - alpha,
        _ => return Err(Error::Argument(format!("signal must be 1 or 2, got {signal}"))),
    };
    let m = model.clone();
    let map: MapFn = match model.kind() {
        LinkKind::Custom => Arc::new(move |y| {
            let d = m.ratio_delta(y).unwrap_or(f64::NAN);
            1.0 - 1.0 / (weight * d + 1.0 - weight)
        }),
        _ => Arc::new(move |y| 1.0 - 1.0 / (weight * m.ratio_delta_unchecked(y) + 1.0 - weight)),
    };
    let support = model.support(spec);
    // Δ >= 0 gives the analytic lower bound; the map never reaches 1
    let inf = 1.0 - 1.0 / (1.0 - weight);
    let sup = sup_by_scan(&map, &support)?.min(1.0 - f64::EPSILON);
    let p = Preprocessor {
        name: format!("opt{signal}"),
        map,
        sup,
        inf,
        lipschitz: true,
        breakpoints: support.breakpoints.clone(),
    };
    p.validate_spectral()?;
    Ok(p)
}

/// `y -> min(y^2, 10)`.
pub fn baseline_ycs() -> Preprocessor {
    let c = BASELINE_CLIP;
    Preprocessor {
        name: "ycs".into(),
        map: Arc::new(move |y| (y * y).min(c)),
        sup: c,
        inf: 0.0,
        lipschitz: true,
        breakpoints: vec![-c.sqrt(), c.sqrt()],
    }
}

/// `y -> max(1 - 1/y^2, -10)`; `y = 0` falls on the clipped branch.
pub fn baseline_lal() -> Preprocessor {
    let c = BASELINE_CLIP;
    let knee = 1.0 / (1.0 + c).sqrt();
    Preprocessor {
        name: "lal".into(),
        map: Arc::new(move |y| if y == 0.0 { -c } else { (1.0 - 1.0 / (y * y)).max(-c) }),
        sup: 1.0,
        inf: -c,
        lipschitz: true,
        breakpoints: vec![-knee, 0.0, knee],
    }
}

/// Looks up a preprocessor by its CLI key.
pub fn by_name(
    key: &str,
    model: &LinkModel,
    alpha: f64,
    spec: &QuadratureSpec,
) -> Result<Preprocessor> {
    match key {
        "opt1" => optimal_spectral(model, alpha, 1, spec),
        "opt2" => optimal_spectral(model, alpha, 2, spec),
        "ycs" => Ok(baseline_ycs()),
        "lal" => Ok(baseline_lal()),
        "optlin" => optimal_linear(model, spec),
        "identity" => Ok(Preprocessor::identity(&model.support(spec))),
        other => Err(Error::Argument(format!(
            "unknown preprocessor '{other}' (expected opt1, opt2, ycs, lal, optlin or identity)"
        ))),
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.5 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("alpha must lie in (1/2, 1), got {alpha}")))
    }
}
