//! Injected-noise distributions for noisy-sign units.
//!
//! A binary unit is `x = sign(a - z)` with noise `z ~ F`, so `P(x = +1) = F(a)`
//! and the straight-through backward factor is `2 F'(a)`. Three symmetric
//! shapes are supported; each base shape already satisfies the unit-slope
//! normalisation `2 F'(0) = 1`:
//!
//! - `uniform`: density 1/2 on [-1, 1]  (htanh-style proxy),
//! - `logistic`: cdf `sigma(2 z)`       (tanh-style proxy),
//! - `triangular`: density `(2 - |z|)/4` on [-2, 2] (approx-sign proxy).
//!
//! A positive `scale` stretches the base shape: `F(z) = F_base(z / scale)`.

use crate::error::Error;
use crate::stream::RandomStream;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Uniform,
    Logistic,
    Triangular,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Uniform => "uniform",
            NoiseKind::Logistic => "logistic",
            NoiseKind::Triangular => "triangular",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(NoiseKind::Uniform),
            "logistic" => Ok(NoiseKind::Logistic),
            "triangular" => Ok(NoiseKind::Triangular),
            other => Err(Error::InvalidParam(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// A 1-D injected-noise model: cdf, density, quantile and sampler.
/// Immutable after construction and safe to share across threads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    scale: f64,
}

#[inline]
fn sigma(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParam(format!("noise scale must be positive, got {scale}")));
        }
        Ok(NoiseModel { kind, scale })
    }

    /// Base shape at unit scale, already normalised to `2 F'(0) = 1`.
    pub fn normalized(kind: NoiseKind) -> Self {
        NoiseModel { kind, scale: 1.0 }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Half-width of the support, or `None` for unbounded (logistic) noise.
    pub fn support_radius(&self) -> Option<f64> {
        match self.kind {
            NoiseKind::Uniform => Some(self.scale),
            NoiseKind::Triangular => Some(2.0 * self.scale),
            NoiseKind::Logistic => None,
        }
    }

    /// `P(noise <= z)`. Errors on non-finite input.
    pub fn cdf(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        Ok(self.cdf_raw(z))
    }

    /// Density `F'(z)`. Errors on non-finite input.
    pub fn pdf(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        Ok(self.pdf_raw(z))
    }

    /// Quantile `F^{-1}(p)` for p strictly inside (0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !p.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        if p <= 0.0 || p >= 1.0 {
            return Err(Error::QuantileBoundary);
        }
        Ok(self.quantile_raw(p))
    }

    /// i.i.d. inverse-cdf draws; deterministic given the stream state.
    pub fn sample(&self, rng: &mut RandomStream, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.quantile_raw(rng.open01())).collect()
    }

    /// Rescale so that `2 F'(0) = 1`. Kind is preserved; only the scale moves.
    /// Since every base shape has density 1/2 at the origin, the normalised
    /// scale is always 1.
    pub fn normalize_unit_slope(&self) -> NoiseModel {
        NoiseModel { kind: self.kind, scale: 1.0 }
    }

    #[inline]
    pub(crate) fn cdf_raw(&self, z: f64) -> f64 {
        let u = z / self.scale;
        match self.kind {
            NoiseKind::Uniform => ((u + 1.0) / 2.0).clamp(0.0, 1.0),
            NoiseKind::Logistic => sigma(2.0 * u),
            NoiseKind::Triangular => {
                if u <= -2.0 {
                    0.0
                } else if u < 0.0 {
                    let t = u + 2.0;
                    t * t / 8.0
                } else if u < 2.0 {
                    let t = 2.0 - u;
                    1.0 - t * t / 8.0
                } else {
                    1.0
                }
            }
        }
    }

    #[inline]
    pub(crate) fn pdf_raw(&self, z: f64) -> f64 {
        let u = z / self.scale;
        let base = match self.kind {
            NoiseKind::Uniform => {
                if (-1.0..=1.0).contains(&u) {
                    0.5
                } else {
                    0.0
                }
            }
            NoiseKind::Logistic => {
                // 2 s (1 - s) for s = sigma(2u), computed through exp(-|2u|)
                // so the tail decays to zero without cancellation.
                let t = (-(2.0 * u).abs()).exp();
                let d = 1.0 + t;
                2.0 * t / (d * d)
            }
            NoiseKind::Triangular => (0.0f64).max((2.0 - u.abs()) / 4.0),
        };
        base / self.scale
    }

    #[inline]
    pub(crate) fn quantile_raw(&self, p: f64) -> f64 {
        let base = match self.kind {
            NoiseKind::Uniform => 2.0 * p - 1.0,
            NoiseKind::Logistic => 0.5 * (p / (1.0 - p)).ln(),
            NoiseKind::Triangular => {
                if p <= 0.5 {
                    (8.0 * p).sqrt() - 2.0
                } else {
                    2.0 - (8.0 * (1.0 - p)).sqrt()
                }
            }
        };
        self.scale * base
    }
}
