//! Cookie environments: the i.i.d. per-site law of the cookie stack, the
//! expected total drift `delta`, and the regime classification it implies.
//!
//! A site carries `M` cookies `omega(1..=M)`; on its `j`-th visit the walk
//! steps right with probability `omega(j)` for `j <= M` and `1/2` afterwards.
//! Site laws are either a single deterministic vector or a finite mixture of
//! vectors, which keeps every downstream expectation an exact finite sum.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance on mixture weight sums.
pub const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CookieVector(Vec<f64>);

impl CookieVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidEnvironment(
                "cookie vector must hold at least one cookie".into(),
            ));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidEnvironment(format!(
                "cookie probability {p} outside [0, 1]"
            )));
        }
        Ok(Self(probs))
    }

    pub fn constant(m: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Right-step probability on the `visit`-th visit (1-based).
    #[inline]
    pub fn right_prob(&self, visit: u64) -> f64 {
        match usize::try_from(visit) {
            Ok(j) if j >= 1 && j <= self.0.len() => self.0[j - 1],
            _ => 0.5,
        }
    }

    pub fn mirrored(&self) -> Self {
        Self(self.0.iter().map(|p| 1.0 - p).collect())
    }

    fn drift(&self) -> f64 {
        self.0.iter().map(|p| 2.0 * p - 1.0).sum()
    }
}

/// The per-site law of the cookie vector.
#[derive(Debug, Clone, PartialEq)]
pub enum CookieLaw {
    Deterministic(CookieVector),
    Mixture(Vec<(f64, CookieVector)>),
}

/// A validated, immutable cookie environment specification.
#[derive(Debug, Clone, PartialEq)]
pub struct CookieEnvironmentSpec {
    m: usize,
    law: CookieLaw,
    weights: Vec<f64>,
    components: Vec<CookieVector>,
    cumulative: Vec<f64>,
}

impl CookieEnvironmentSpec {
    pub fn new(m: usize, law: CookieLaw) -> Result<Self> {
        let spec = Self::without_ellipticity(m, law)?;
        let right = spec.mean_product();
        let left = spec.mean_complement_product();
        if right <= 0.0 || left <= 0.0 {
            return Err(Error::InvalidEnvironment(format!(
                "ellipticity fails: E[prod omega] = {right}, E[prod (1 - omega)] = {left}"
            )));
        }
        Ok(spec)
    }

    /// Validates everything except ellipticity. Degenerate laws such as
    /// `omega == 1` are limiting cases used as deterministic test fixtures;
    /// estimators that divide by `E[prod (1 - omega)]` are not meaningful on them.
    pub fn without_ellipticity(m: usize, law: CookieLaw) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidEnvironment("M must be at least 1".into()));
        }
        let (weights, components): (Vec<f64>, Vec<CookieVector>) = match &law {
            CookieLaw::Deterministic(v) => (vec![1.0], vec![v.clone()]),
            CookieLaw::Mixture(parts) => {
                if parts.is_empty() {
                    return Err(Error::InvalidEnvironment("mixture needs at least one component".into()));
                }
                parts.iter().cloned().unzip()
            }
        };
        if let Some(v) = components.iter().find(|v| v.len() != m) {
            return Err(Error::InvalidEnvironment(format!(
                "cookie vector has {} entries, expected M = {m}",
                v.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidEnvironment(format!(
                "mixture weight {w} must be positive"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidEnvironment(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();

        Ok(Self {
            m,
            law,
            weights,
            components,
            cumulative,
        })
    }

    pub fn deterministic(probs: Vec<f64>) -> Result<Self> {
        let v = CookieVector::new(probs)?;
        Self::new(v.len(), CookieLaw::Deterministic(v))
    }

    /// `M` identical cookies of strength `p`.
    pub fn constant(m: usize, p: f64) -> Result<Self> {
        Self::deterministic(vec![p; m])
    }

    /// Every cookie equal to one: the walk marches right deterministically.
    pub fn all_right(m: usize) -> Self {
        let v = CookieVector::constant(m, 1.0).expect("1.0 is a probability");
        Self::without_ellipticity(m, CookieLaw::Deterministic(v)).expect("valid shape")
    }

    pub fn mixture(parts: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        let m = parts.first().map(|(_, v)| v.len()).unwrap_or(0);
        let parts = parts
            .into_iter()
            .map(|(w, v)| CookieVector::new(v).map(|v| (w, v)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(m, CookieLaw::Mixture(parts))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn law(&self) -> &CookieLaw {
        &self.law
    }

    pub fn components(&self) -> &[CookieVector] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.law, CookieLaw::Deterministic(_))
    }

    /// Exact expectation of `f(omega_0)` under the site law.
    pub fn expect(&self, f: impl Fn(&CookieVector) -> f64) -> f64 {
        self.weights.iter().zip(&self.components).map(|(w, v)| w * f(v)).sum()
    }

    /// `E[omega_0(1)]`, the probability that the first departure from a fresh
    /// site is to the right.
    pub fn mean_first_cookie(&self) -> f64 {
        self.expect(|v| v.probs()[0])
    }

    pub fn mean_product(&self) -> f64 {
        self.expect(|v| v.probs().iter().product())
    }

    pub fn mean_complement_product(&self) -> f64 {
        self.expect(|v| v.probs().iter().map(|p| 1.0 - p).product())
    }

    /// Draws a mixture component index.
    #[inline]
    pub fn sample_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.components.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.components.len() - 1)
    }

    pub fn sample_site<R: Rng + ?Sized>(&self, rng: &mut R) -> &CookieVector {
        &self.components[self.sample_component(rng)]
    }

    /// Reflects every cookie, `p -> 1 - p`.
    pub fn mirror(&self) -> Self {
        let law = match &self.law {
            CookieLaw::Deterministic(v) => CookieLaw::Deterministic(v.mirrored()),
            CookieLaw::Mixture(parts) => CookieLaw::Mixture(parts.iter().map(|(w, v)| (*w, v.mirrored())).collect()),
        };
        Self::without_ellipticity(self.m, law).expect("mirror keeps the shape valid")
    }
}

/// Expected total drift per site, `E[sum_j (2 omega_0(j) - 1)]`.
pub fn compute_delta(spec: &CookieEnvironmentSpec) -> f64 {
    spec.expect(CookieVector::drift)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recurrence {
    TransientLeft,
    Recurrent,
    TransientRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedSign {
    Negative,
    Zero,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    pub delta: f64,
    pub recurrence: Recurrence,
    pub speed_sign: SpeedSign,
}

impl RegimeReport {
    pub fn from_delta(delta: f64) -> Self {
        let recurrence = if delta < -1.0 {
            Recurrence::TransientLeft
        } else if delta > 1.0 {
            Recurrence::TransientRight
        } else {
            Recurrence::Recurrent
        };
        let speed_sign = if delta < -2.0 {
            SpeedSign::Negative
        } else if delta > 2.0 {
            SpeedSign::Positive
        } else {
            SpeedSign::Zero
        };
        Self {
            delta,
            recurrence,
            speed_sign,
        }
    }
}

pub fn classify(spec: &CookieEnvironmentSpec) -> RegimeReport {
    RegimeReport::from_delta(compute_delta(spec))
}

impl fmt::Display for RegimeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "delta = {:.6}, {:?}, speed {:?}",
            self.delta, self.recurrence, self.speed_sign
        )
    }
}
