//! Initial age densities `n0(s)` with closed-form cumulative masses, plus a
//! sampled piecewise-constant form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mass tolerance for accepting a density as normalized.
pub const MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialDensity {
    /// `exp(-(s - onset)) 1{s > onset}`
    Exponential { onset: f64 },
    /// `exp(-(s - knee)_+) / (knee + 1)`
    PlateauExponential { knee: f64 },
    /// `(2/3)(1 + cos s) exp(-s)`
    CosineExponential,
    /// Cell averages on `[j ds, (j + 1) ds)`, optionally continued past the
    /// last cell by an exponential tail.
    Sampled(SampledDensity),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledDensity {
    pub ds: f64,
    pub values: Vec<f64>,
    /// Decay rate of `v_last * exp(-rate (s - s_end))` beyond the last cell.
    pub tail_rate: Option<f64>,
}

impl SampledDensity {
    fn end(&self) -> f64 {
        self.ds * self.values.len() as f64
    }

    fn tail_total(&self) -> f64 {
        match self.tail_rate {
            Some(rate) => self.values.last().copied().unwrap_or(0.0) / rate,
            None => 0.0,
        }
    }
}

/// Catalog names with their parameter counts.
pub const DENSITY_CATALOG: &[(&str, usize)] =
    &[("exponential", 1), ("plateau_exponential", 1), ("cosine_exponential", 0)];

impl InitialDensity {
    pub fn builtin(name: &str, params: &[f64]) -> Result<Self> {
        let arity = DENSITY_CATALOG
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, a)| *a)
            .ok_or_else(|| Error::Precondition(format!("unknown initial density `{name}`")))?;
        if params.len() != arity {
            return Err(Error::Precondition(format!(
                "`{name}` takes {arity} parameters, got {}",
                params.len()
            )));
        }
        match name {
            "exponential" if params[0] >= 0.0 => Ok(InitialDensity::Exponential { onset: params[0] }),
            "plateau_exponential" if params[0] >= 0.0 => Ok(InitialDensity::PlateauExponential { knee: params[0] }),
            "cosine_exponential" => Ok(InitialDensity::CosineExponential),
            _ => Err(Error::Precondition(format!("`{name}` needs a nonnegative parameter"))),
        }
    }

    pub fn sampled(ds: f64, values: Vec<f64>) -> Result<Self> {
        if !(ds > 0.0) || values.is_empty() {
            return Err(Error::Precondition("sampled density needs ds > 0 and at least one cell".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Precondition(format!("negative density value {v}")));
        }
        Ok(InitialDensity::Sampled(SampledDensity { ds, values, tail_rate: None }))
    }

    /// Sampled cells followed by an exponential tail of the given rate.
    pub fn sampled_with_tail(ds: f64, values: Vec<f64>, tail_rate: f64) -> Result<Self> {
        if !(tail_rate > 0.0) {
            return Err(Error::Precondition(format!("tail rate must be positive, got {tail_rate}")));
        }
        match Self::sampled(ds, values)? {
            InitialDensity::Sampled(mut d) => {
                d.tail_rate = Some(tail_rate);
                Ok(InitialDensity::Sampled(d))
            }
            _ => unreachable!(),
        }
    }

    /// Continuous steady density: `n_star` on `[0, sigma)`, then decay at
    /// rate `phi(n_star)`.
    pub fn steady(model: &crate::model::FiringModel, n_star: f64) -> Result<Self> {
        Self::sampled_with_tail(model.sigma(), vec![n_star], model.phi(n_star)?)
    }

    pub fn value(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        match self {
            InitialDensity::Exponential { onset } => {
                if s >= *onset {
                    (-(s - onset)).exp()
                } else {
                    0.0
                }
            }
            InitialDensity::PlateauExponential { knee } => (-(s - knee).max(0.0)).exp() / (knee + 1.0),
            InitialDensity::CosineExponential => 2.0 / 3.0 * (1.0 + s.cos()) * (-s).exp(),
            InitialDensity::Sampled(d) => {
                let j = (s / d.ds).floor() as usize;
                match (d.values.get(j), d.tail_rate) {
                    (Some(v), _) => *v,
                    (None, Some(rate)) => d.values[d.values.len() - 1] * (-rate * (s - d.end())).exp(),
                    (None, None) => 0.0,
                }
            }
        }
    }

    /// `int_0^x n0(s) ds`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            InitialDensity::Exponential { onset } => {
                if x <= *onset {
                    0.0
                } else {
                    -(-(x - onset)).exp_m1()
                }
            }
            InitialDensity::PlateauExponential { knee } => {
                let h = 1.0 / (knee + 1.0);
                if x <= *knee {
                    h * x
                } else {
                    h * knee - h * (-(x - knee)).exp_m1()
                }
            }
            InitialDensity::CosineExponential => {
                let e = (-x).exp();
                2.0 / 3.0 * (-(-x).exp_m1() + 0.5 * (1.0 + e * (x.sin() - x.cos())))
            }
            InitialDensity::Sampled(d) => {
                let full = (x / d.ds).floor() as usize;
                let whole: f64 = d.values.iter().take(full).sum::<f64>() * d.ds;
                if full < d.values.len() {
                    return whole + d.values[full] * (x - full as f64 * d.ds);
                }
                match d.tail_rate {
                    Some(rate) => whole - d.tail_total() * (-rate * (x - d.end())).exp_m1(),
                    None => whole,
                }
            }
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            InitialDensity::Sampled(d) => d.values.iter().sum::<f64>() * d.ds + d.tail_total(),
            _ => 1.0,
        }
    }

    /// `int_a^inf n0`, exact for the closed forms.
    pub fn tail_mass(&self, a: f64) -> f64 {
        match self {
            InitialDensity::Exponential { onset } if a >= *onset => (-(a - onset)).exp(),
            InitialDensity::PlateauExponential { knee } if a >= *knee => (-(a - knee)).exp() / (knee + 1.0),
            InitialDensity::Sampled(d) if d.tail_rate.is_some() && a >= d.end() => {
                d.tail_total() * (-d.tail_rate.unwrap() * (a - d.end())).exp()
            }
            _ => (self.mass() - self.cdf(a)).max(0.0),
        }
    }

    /// Checks nonnegativity and unit mass.
    pub fn validate(&self) -> Result<()> {
        if let InitialDensity::Sampled(d) = self {
            if let Some(v) = d.values.iter().find(|v| !(**v >= 0.0)) {
                return Err(Error::Precondition(format!("negative density value {v}")));
            }
        }
        let m = self.mass();
        if (m - 1.0).abs() > MASS_TOL {
            return Err(Error::Precondition(format!("initial density has mass {m}, expected 1")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn closed_form_cdfs_match_quadrature() {
        let cases = [
            InitialDensity::Exponential { onset: 0.0 },
            InitialDensity::Exponential { onset: 0.5 },
            InitialDensity::PlateauExponential { knee: 1.0 },
            InitialDensity::CosineExponential,
        ];
        for d in cases {
            for x in [0.2, 0.5, 0.9, 1.7, 4.0] {
                // Split at the kinks so Simpson sees smooth integrands.
                let kink = match d {
                    InitialDensity::Exponential { onset } => onset,
                    InitialDensity::PlateauExponential { knee } => knee,
                    _ => 0.0,
                };
                let q = if x <= kink && matches!(d, InitialDensity::Exponential { .. }) {
                    0.0
                } else if matches!(d, InitialDensity::Exponential { .. }) {
                    simpson(|s| d.value(s), kink, x, 2000)
                } else if x > kink && kink > 0.0 {
                    simpson(|s| d.value(s), 0.0, kink, 2000) + simpson(|s| d.value(s), kink, x, 2000)
                } else {
                    simpson(|s| d.value(s), 0.0, x, 2000)
                };
                assert!((d.cdf(x) - q).abs() < 1e-10, "{d:?} at {x}: {} vs {q}", d.cdf(x));
            }
            let total = simpson(|s| d.value(s), 0.0, 1.0, 2000) + simpson(|s| d.value(s), 1.0, 60.0, 60000);
            let total = if let InitialDensity::Exponential { onset } = d {
                if onset > 0.0 {
                    simpson(|s| d.value(s), onset, 60.0, 60000)
                } else {
                    total
                }
            } else {
                total
            };
            assert!((total - 1.0).abs() < 1e-9, "{d:?} mass {total}");
        }
    }

    #[test]
    fn tail_mass_values() {
        let ex1 = InitialDensity::PlateauExponential { knee: 1.0 };
        assert!((ex1.tail_mass(0.5) - 0.75).abs() < 1e-15);
        let ex2 = InitialDensity::Exponential { onset: 0.5 };
        assert_eq!(ex2.tail_mass(0.5), 1.0);
        let early = InitialDensity::sampled(0.1, vec![2.0, 2.0, 2.0, 2.0, 2.0]).unwrap();
        assert_eq!(early.tail_mass(0.5), 0.0);
    }

    #[test]
    fn sampled_validation() {
        assert!(InitialDensity::sampled(0.1, vec![1.0, -1.0]).is_err());
        let d = InitialDensity::sampled(0.5, vec![1.0, 0.5]).unwrap();
        assert!(d.validate().is_err());
        assert!((d.cdf(0.75) - 0.625).abs() < 1e-15);
    }

    #[test]
    fn exponential_tail_mass() {
        let d = InitialDensity::sampled_with_tail(0.5, vec![0.5], 1.0).unwrap();
        assert!((d.mass() - 0.75).abs() < 1e-15);
        assert!((d.tail_mass(0.5) - 0.5).abs() < 1e-15);
        assert!((d.cdf(1.5) - (0.25 + 0.5 * (1.0 - (-1.0f64).exp()))).abs() < 1e-15);
        assert!((d.value(1.5) - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
    }
}
