//! Firing-rate models `phi` with refractory period `sigma`, the map
//! `psi(u) = u / phi(u)` and the regime classification built on the sign of
//! `psi'`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{bisect, golden_min};

/// Default number of grid samples for regime analysis.
pub const REGIME_SAMPLES: usize = 1024;

/// |psi'| at or below this is treated as zero when classifying.
const FLAT_SLOPE: f64 = 1e-10;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Closed-form rate functions of the built-in catalog.
#[derive(Clone)]
pub enum Rate {
    Constant { rate: f64 },
    /// `1 / (1 + exp(-gain * u + threshold))`
    Sigmoid { gain: f64, threshold: f64 },
    /// `max(min(slope * u, ceiling), floor)`
    ClampedLinear { slope: f64, ceiling: f64, floor: f64 },
    /// `amplitude * u^2 / (u^2 + 1) + offset`
    RationalShift { amplitude: f64, offset: f64 },
    /// `a1 * exp(-(u - c1)^2) + a2 * exp(-(u - c2)^2)`
    DoubleGaussian { a1: f64, c1: f64, a2: f64, c2: f64 },
    /// `base + slope * min(u, cap)`, with `cap` the upper rate bound so
    /// that the activity range `[0, p_hi]` is self-consistent.
    Affine { base: f64, slope: f64, cap: f64 },
    Custom { phi: ScalarFn, derivative: Option<ScalarFn> },
}

impl fmt::Debug for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Custom { derivative, .. } => {
                f.debug_struct("Custom").field("analytic_derivative", &derivative.is_some()).finish()
            }
            Rate::Constant { rate } => f.debug_struct("Constant").field("rate", rate).finish(),
            Rate::Sigmoid { gain, threshold } => {
                f.debug_struct("Sigmoid").field("gain", gain).field("threshold", threshold).finish()
            }
            Rate::ClampedLinear { slope, ceiling, floor } => f
                .debug_struct("ClampedLinear")
                .field("slope", slope)
                .field("ceiling", ceiling)
                .field("floor", floor)
                .finish(),
            Rate::RationalShift { amplitude, offset } => {
                f.debug_struct("RationalShift").field("amplitude", amplitude).field("offset", offset).finish()
            }
            Rate::DoubleGaussian { a1, c1, a2, c2 } => {
                f.debug_struct("DoubleGaussian").field("a1", a1).field("c1", c1).field("a2", a2).field("c2", c2).finish()
            }
            Rate::Affine { base, slope, cap } => {
                f.debug_struct("Affine").field("base", base).field("slope", slope).field("cap", cap).finish()
            }
        }
    }
}

impl Rate {
    fn value(&self, u: f64) -> f64 {
        match self {
            Rate::Constant { rate } => *rate,
            Rate::Sigmoid { gain, threshold } => 1.0 / (1.0 + (-gain * u + threshold).exp()),
            Rate::ClampedLinear { slope, ceiling, floor } => (slope * u).min(*ceiling).max(*floor),
            Rate::RationalShift { amplitude, offset } => amplitude * u * u / (u * u + 1.0) + offset,
            Rate::DoubleGaussian { a1, c1, a2, c2 } => {
                a1 * (-(u - c1).powi(2)).exp() + a2 * (-(u - c2).powi(2)).exp()
            }
            Rate::Affine { base, slope, cap } => base + slope * u.min(*cap),
            Rate::Custom { phi, .. } => phi(u),
        }
    }

    /// Right-hand derivative where a closed form exists.
    fn derivative(&self, u: f64) -> Option<f64> {
        Some(match self {
            Rate::Constant { .. } => 0.0,
            Rate::Sigmoid { gain, .. } => {
                let p = self.value(u);
                gain * p * (1.0 - p)
            }
            Rate::ClampedLinear { slope, ceiling, floor } => {
                let v = slope * u;
                if v >= *floor && v < *ceiling {
                    *slope
                } else {
                    0.0
                }
            }
            Rate::RationalShift { amplitude, .. } => 2.0 * amplitude * u / (u * u + 1.0).powi(2),
            Rate::DoubleGaussian { a1, c1, a2, c2 } => {
                -2.0 * (u - c1) * a1 * (-(u - c1).powi(2)).exp() - 2.0 * (u - c2) * a2 * (-(u - c2).powi(2)).exp()
            }
            Rate::Affine { slope, cap, .. } => {
                if u < *cap {
                    *slope
                } else {
                    0.0
                }
            }
            Rate::Custom { derivative, .. } => return derivative.as_ref().map(|d| d(u)),
        })
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            Rate::ClampedLinear { slope, ceiling, floor } => vec![floor / slope, ceiling / slope],
            Rate::Affine { cap, .. } => vec![*cap],
            _ => Vec::new(),
        }
    }
}

/// Direction of `psi` on a monotone piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Flat,
}

impl Trend {
    fn of(slope: f64) -> Trend {
        if slope > FLAT_SLOPE {
            Trend::Increasing
        } else if slope < -FLAT_SLOPE {
            Trend::Decreasing
        } else {
            Trend::Flat
        }
    }
}

/// Maximal interval of `[0, p_hi]` on which `psi` is monotone (or constant).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub trend: Trend,
}

impl Piece {
    pub fn contains(&self, u: f64) -> bool {
        u >= self.lo && u <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeTag {
    Inhibitory,
    WeaklyExcitatory,
    StronglyExcitatory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub tag: RegimeTag,
    /// Locations where the sign class of `psi'` changes (edges of flat
    /// bands included).
    pub sign_changes: Vec<f64>,
}

/// Value of `psi'` together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiSlope {
    pub value: f64,
    pub finite_difference: bool,
    /// The point sits on a kink of `phi`; `value` is the right-hand quotient.
    pub kink: bool,
}

/// Catalog name, parameters and refractory period; enough to rebuild a
/// built-in model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub params: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct FiringModel {
    rate: Rate,
    name: String,
    params: Vec<f64>,
    sigma: f64,
    p_lo: f64,
    p_hi: f64,
    regime: Regime,
    pieces: Vec<Piece>,
}

/// Catalog names accepted by [`builtin_model`].
pub const CATALOG: &[(&str, usize)] = &[
    ("constant", 1),
    ("sigmoid", 2),
    ("clamped_linear", 3),
    ("rational_shift", 2),
    ("double_gaussian", 4),
    ("affine", 2),
];

/// Builds a catalog model. Parameter orders:
/// `constant(rate)`, `sigmoid(gain, threshold)`,
/// `clamped_linear(slope, ceiling, floor)`, `rational_shift(amplitude, offset)`,
/// `double_gaussian(a1, c1, a2, c2)`, `affine(base, slope)`.
pub fn builtin_model(name: &str, params: &[f64], sigma: f64) -> Result<FiringModel> {
    let arity = CATALOG
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, a)| *a)
        .ok_or_else(|| Error::Model(format!("unknown model `{name}`")))?;
    if params.len() != arity {
        return Err(Error::Model(format!("`{name}` takes {arity} parameters, got {}", params.len())));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Model("non-finite parameter".into()));
    }
    let p = params;
    let (rate, p_lo, p_hi) = match name {
        "constant" => (Rate::Constant { rate: p[0] }, p[0], p[0]),
        "sigmoid" => {
            let rate = Rate::Sigmoid { gain: p[0], threshold: p[1] };
            let at0 = rate.value(0.0);
            if p[0] >= 0.0 {
                (rate, at0, 1.0)
            } else {
                let lo = rate.value(at0);
                (rate, lo, at0)
            }
        }
        "clamped_linear" => {
            if !(p[0] > 0.0 && p[2] < p[1]) {
                return Err(Error::Model("clamped_linear needs slope > 0 and floor < ceiling".into()));
            }
            (Rate::ClampedLinear { slope: p[0], ceiling: p[1], floor: p[2] }, p[2], p[1])
        }
        "rational_shift" => {
            if p[0] < 0.0 {
                return Err(Error::Model("rational_shift needs amplitude >= 0".into()));
            }
            (Rate::RationalShift { amplitude: p[0], offset: p[1] }, p[1], p[0] + p[1])
        }
        "double_gaussian" => {
            if p[0] < 0.0 || p[2] < 0.0 {
                return Err(Error::Model("double_gaussian needs nonnegative amplitudes".into()));
            }
            let rate = Rate::DoubleGaussian { a1: p[0], c1: p[1], a2: p[2], c2: p[3] };
            let reach = p[1].max(p[3]).max(0.0) + 10.0;
            let p_hi = -extremum(|u| -rate.value(u), 0.0, reach);
            let p_lo = extremum(|u| rate.value(u), 0.0, p_hi);
            (rate, p_lo, p_hi)
        }
        "affine" => {
            let (base, slope) = (p[0], p[1]);
            if !(slope < 1.0 && slope > -1.0) {
                return Err(Error::Model("affine needs -1 < slope < 1".into()));
            }
            if slope >= 0.0 {
                let cap = base / (1.0 - slope);
                (Rate::Affine { base, slope, cap }, base, cap)
            } else {
                (Rate::Affine { base, slope, cap: base }, base * (1.0 + slope), base)
            }
        }
        _ => unreachable!(),
    };
    FiringModel::build(rate, name.to_string(), params.to_vec(), sigma, p_lo, p_hi)
}

/// Minimum of `f` on `[a, b]` by a dense scan refined with golden section.
fn extremum<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let n = 20_000;
    let h = (b - a) / n as f64;
    let (i, _) = (0..=n)
        .map(|i| (i, f(a + h * i as f64)))
        .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
    let lo = (a + h * (i as f64 - 1.0)).max(a);
    let hi = (a + h * (i as f64 + 1.0)).min(b);
    let (_, v) = golden_min(&f, lo, hi, 1e-13);
    v.min(f(a + h * i as f64))
}

impl FiringModel {
    /// A user-supplied rate with declared bounds.
    pub fn custom<F>(name: &str, phi: F, derivative: Option<ScalarFn>, sigma: f64, p_lo: f64, p_hi: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let rate = Rate::Custom { phi: Arc::new(phi), derivative };
        FiringModel::build(rate, name.to_string(), Vec::new(), sigma, p_lo, p_hi)
    }

    fn build(rate: Rate, name: String, params: Vec<f64>, sigma: f64, p_lo: f64, p_hi: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Model(format!("sigma must be positive, got {sigma}")));
        }
        if !(p_lo > 0.0) {
            return Err(Error::Model(format!("lower rate bound must be positive, got {p_lo}")));
        }
        if !(p_hi >= p_lo && p_hi.is_finite()) {
            return Err(Error::Model(format!("invalid rate bounds [{p_lo}, {p_hi}]")));
        }
        let mut model = FiringModel {
            rate,
            name,
            params,
            sigma,
            p_lo,
            p_hi,
            regime: Regime { tag: RegimeTag::Inhibitory, sign_changes: Vec::new() },
            pieces: Vec::new(),
        };
        for i in 0..=REGIME_SAMPLES {
            let u = p_hi * i as f64 / REGIME_SAMPLES as f64;
            model.phi(u)?;
        }
        let (regime, pieces) = model.analyse(REGIME_SAMPLES);
        model.regime = regime;
        model.pieces = pieces;
        Ok(model)
    }

    /// Same rate function with another refractory period.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Model(format!("sigma must be positive, got {sigma}")));
        }
        Ok(FiringModel { sigma, ..self.clone() })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn descriptor(&self) -> ModelDescriptor {
        ModelDescriptor { name: self.name.clone(), params: self.params.clone(), sigma: self.sigma }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn p_lo(&self) -> f64 {
        self.p_lo
    }

    pub fn p_hi(&self) -> f64 {
        self.p_hi
    }

    pub fn rate(&self) -> &Rate {
        &self.rate
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.rate.derivative(0.0).is_some()
    }

    /// Regime computed at construction with [`REGIME_SAMPLES`] samples.
    pub fn regime(&self) -> &Regime {
        &self.regime
    }

    /// Monotone pieces of `psi` covering `[0, p_hi]`, in increasing order.
    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// `phi(u)` with domain and bound checks.
    pub fn phi(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(Error::Domain(format!("phi evaluated at u = {u} < 0")));
        }
        let v = self.rate.value(u);
        let tol = 1e-12 * self.p_hi.max(1.0);
        if !(v >= self.p_lo - tol && v <= self.p_hi + tol) {
            return Err(Error::Model(format!(
                "phi({u}) = {v} outside [{}, {}]",
                self.p_lo, self.p_hi
            )));
        }
        Ok(v)
    }

    /// Unchecked `phi`, for inner loops on already validated arguments.
    #[inline]
    pub fn phi_unchecked(&self, u: f64) -> f64 {
        self.rate.value(u)
    }

    /// `psi(u) = u / phi(u)`.
    pub fn psi(&self, u: f64) -> Result<f64> {
        Ok(u / self.phi(u)?)
    }

    #[inline]
    pub fn psi_unchecked(&self, u: f64) -> f64 {
        u / self.rate.value(u)
    }

    /// `psi'(u) = (phi - u phi') / phi^2`.
    pub fn psi_prime(&self, u: f64) -> Result<PsiSlope> {
        if !(u >= 0.0) || u > self.p_hi * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("psi' evaluated at u = {u} outside [0, {}]", self.p_hi)));
        }
        if u == 0.0 {
            let h = 1e-6;
            let value = (self.psi_unchecked(h) - self.psi_unchecked(0.0)) / h;
            return Ok(PsiSlope { value, finite_difference: true, kink: false });
        }
        let kink = self.rate.kinks().iter().any(|k| (u - k).abs() <= 1e-12 * k.abs().max(1.0));
        if kink {
            let h = 1e-7 * u.max(1e-3);
            let value = (self.psi_unchecked(u + h) - self.psi_unchecked(u)) / h;
            return Ok(PsiSlope { value, finite_difference: true, kink: true });
        }
        match self.rate.derivative(u) {
            Some(d) => {
                let p = self.rate.value(u);
                Ok(PsiSlope { value: (p - u * d) / (p * p), finite_difference: false, kink: false })
            }
            None => Ok(PsiSlope { value: self.psi_prime_fd(u), finite_difference: true, kink: false }),
        }
    }

    /// Central difference of `psi` with step `1e-6 * max(1, u)`; forward
    /// difference when the step would cross zero.
    pub fn psi_prime_fd(&self, u: f64) -> f64 {
        let h = 1e-6 * u.max(1.0);
        if u - h < 0.0 {
            (self.psi_unchecked(u + h) - self.psi_unchecked(u)) / h
        } else {
            (self.psi_unchecked(u + h) - self.psi_unchecked(u - h)) / (2.0 * h)
        }
    }

    fn slope_unchecked(&self, u: f64) -> f64 {
        match self.rate.derivative(u) {
            Some(d) => {
                let p = self.rate.value(u);
                (p - u * d) / (p * p)
            }
            None => self.psi_prime_fd(u),
        }
    }

    fn analyse(&self, samples: usize) -> (Regime, Vec<Piece>) {
        let h = self.p_hi / samples as f64;
        let grid: Vec<f64> = (1..=samples).map(|i| if i == samples { self.p_hi } else { h * i as f64 }).collect();
        let phis: Vec<f64> = std::iter::once(0.0).chain(grid.iter().copied()).map(|u| self.rate.value(u)).collect();
        let increasing_somewhere = phis.windows(2).any(|w| w[1] > w[0] + 1e-14 * w[0].abs().max(1.0));

        let class = |u: f64| Trend::of(self.slope_unchecked(u));
        let kinks = self.rate.kinks();
        let mut breaks: Vec<f64> = Vec::new();
        let mut trends: Vec<Trend> = vec![class(grid[0])];
        for w in grid.windows(2) {
            let (c0, c1) = (class(w[0]), class(w[1]));
            if c0 == c1 {
                continue;
            }
            let x = bisect(|u| if class(u) == c0 { -1.0 } else { 1.0 }, w[0], w[1], 1e-10);
            let x = kinks.iter().copied().find(|k| (k - x).abs() < 1e-8).unwrap_or(x);
            breaks.push(x);
            trends.push(c1);
        }

        let mut edges = vec![0.0];
        edges.extend(breaks.iter().copied());
        edges.push(self.p_hi);
        let mut pieces: Vec<Piece> = Vec::new();
        for (i, trend) in trends.iter().enumerate() {
            let piece = Piece { lo: edges[i], hi: edges[i + 1], trend: *trend };
            if piece.hi - piece.lo < 1e-9 && i + 1 < trends.len() {
                // Zero-width flat band from a sample landing on an extremum.
                if let Some(next) = edges.get_mut(i + 1) {
                    *next = piece.lo;
                }
                continue;
            }
            match pieces.last_mut() {
                Some(last) if last.trend == piece.trend => last.hi = piece.hi,
                _ => pieces.push(piece),
            }
        }
        if let Some(first) = pieces.first_mut() {
            first.lo = 0.0;
        }
        let sign_changes: Vec<f64> = pieces.iter().skip(1).map(|p| p.lo).collect();

        let tag = if !increasing_somewhere {
            RegimeTag::Inhibitory
        } else if sign_changes.is_empty() {
            RegimeTag::WeaklyExcitatory
        } else {
            RegimeTag::StronglyExcitatory
        };
        (Regime { tag, sign_changes }, pieces)
    }

    /// Index of the piece containing `u`; at a shared endpoint the lower
    /// piece wins.
    pub fn piece_index(&self, u: f64) -> usize {
        self.pieces.iter().position(|p| u <= p.hi).unwrap_or(self.pieces.len() - 1)
    }
}

/// Classifies the regime from `samples` grid points over `(0, p_hi]`.
pub fn classify_regime(model: &FiringModel, samples: usize) -> Result<Regime> {
    if samples < 64 {
        return Err(Error::Precondition(format!("classify_regime needs >= 64 samples, got {samples}")));
    }
    Ok(model.analyse(samples).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1() -> FiringModel {
        builtin_model("sigmoid", &[9.0, 3.5], 0.5).unwrap()
    }

    #[test]
    fn phi_examples() {
        let c = builtin_model("constant", &[1.0], 1.0).unwrap();
        assert_eq!(c.phi(0.7).unwrap(), 1.0);
        let s = ex1();
        assert!((s.phi(0.0).unwrap() - 1.0 / (1.0 + 3.5f64.exp())).abs() < 1e-15);
        let clamp = builtin_model("clamped_linear", &[1.6, 1.0, 0.25], 1.0).unwrap();
        assert_eq!(clamp.phi(0.625).unwrap(), 1.0);
        assert!(matches!(s.phi(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn psi_examples() {
        let two = builtin_model("constant", &[2.0], 1.0).unwrap();
        assert_eq!(two.psi(1.0).unwrap(), 0.5);
        assert_eq!(two.psi(0.0).unwrap(), 0.0);
        let u: f64 = 0.1;
        let oracle = u * (1.0 + (-9.0 * u + 3.5).exp());
        assert!((ex1().psi(u).unwrap() - oracle).abs() < 1e-14);
        let clamp = builtin_model("clamped_linear", &[1.6, 1.0, 0.25], 1.0).unwrap();
        for u in [0.15625, 0.3, 0.5, 0.625] {
            assert!((clamp.psi(u).unwrap() - 0.625).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_prime_examples() {
        let c = builtin_model("constant", &[1.0], 1.0).unwrap();
        assert_eq!(c.psi_prime(0.4).unwrap().value, 1.0);
        let clamp = builtin_model("clamped_linear", &[1.6, 1.0, 0.25], 1.0).unwrap();
        assert_eq!(clamp.psi_prime(0.4).unwrap().value, 0.0);
        let k = clamp.psi_prime(0.625).unwrap();
        assert!(k.kink);
        let s = ex1().psi_prime(0.2).unwrap();
        assert!(s.value < 0.0 && !s.finite_difference);
        assert!(ex1().psi_prime(0.0).unwrap().finite_difference);
        assert!(ex1().psi_prime(1.5).is_err());
    }

    #[test]
    fn catalog_errors() {
        assert!(builtin_model("nope", &[], 1.0).is_err());
        assert!(builtin_model("sigmoid", &[1.0], 1.0).is_err());
        assert!(builtin_model("constant", &[0.0], 1.0).is_err());
        assert!(builtin_model("constant", &[1.0], 0.0).is_err());
    }

    #[test]
    fn regimes() {
        let c = builtin_model("constant", &[1.0], 1.0).unwrap();
        assert_eq!(classify_regime(&c, 1024).unwrap().tag, RegimeTag::Inhibitory);
        let w = builtin_model("affine", &[1.0, 0.1], 1.0).unwrap();
        assert!((w.p_hi() - 1.0 / 0.9).abs() < 1e-15);
        assert_eq!(classify_regime(&w, 1024).unwrap().tag, RegimeTag::WeaklyExcitatory);
        let r = classify_regime(&ex1(), 1024).unwrap();
        assert_eq!(r.tag, RegimeTag::StronglyExcitatory);
        assert_eq!(r.sign_changes.len(), 2);
        assert!((r.sign_changes[0] - 0.121089).abs() < 1e-5);
        assert!((r.sign_changes[1] - 0.538600).abs() < 1e-5);
        assert!(classify_regime(&c, 10).is_err());
    }

    #[test]
    fn clamped_band_pieces() {
        let clamp = builtin_model("clamped_linear", &[1.6, 1.0, 0.25], 1.0).unwrap();
        let p = clamp.pieces();
        assert_eq!(p.len(), 3);
        assert_eq!(p[0].trend, Trend::Increasing);
        assert_eq!(p[1].trend, Trend::Flat);
        assert_eq!(p[1].lo, 0.15625);
        assert_eq!(p[1].hi, 0.625);
        assert_eq!(p[2].trend, Trend::Increasing);
    }

    #[test]
    fn double_gaussian_bounds() {
        let m = builtin_model("double_gaussian", &[8.0, 0.1, 8.0, 3.0], 0.2).unwrap();
        assert!(m.p_hi() > 8.0 && m.p_hi() < 8.01);
        assert!(m.p_lo() > 0.0 && m.p_lo() < 1e-6);
    }
}
