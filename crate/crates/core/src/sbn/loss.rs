//! Loss functions evaluated on binary states or their real extensions.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::Error;
use crate::Result;

/// Per-example data a loss may need in addition to the network output.
#[derive(Clone, Debug)]
pub enum Target {
    None,
    /// Word counts for the multinomial reconstruction loss.
    Counts(Array1<f64>),
    /// Class index for cross entropy.
    Label(usize),
}

/// A loss kind. `Quadratic`/`MultilinearQuadratic`/`PolynomialMultilinear`
/// carry their own fixed data; the reconstruction and classification losses
/// read a per-example [`Target`].
#[derive(Clone, Debug)]
pub enum LossFn {
    /// `L(x) = ||W x - y||^2`.
    Quadratic { w: Array2<f64>, y: Array1<f64> },
    /// The multilinear equivalent of the quadratic loss:
    /// `||W x - y||^2 - sum_i x_i^2 ||W_{:,i}||^2 + sum_i ||W_{:,i}||^2`.
    MultilinearQuadratic { w: Array2<f64>, y: Array1<f64>, col_sq: Array1<f64> },
    /// `-sum_i y_i log f_i` for a probability vector `f` and counts `y`.
    MultinomialReconstruction,
    /// `-log f_label` for a probability vector `f`.
    SoftmaxCrossEntropy,
    /// `sum_S c_S prod_{i in S} x_i`; every subset appears at most once, which
    /// guarantees multilinearity.
    PolynomialMultilinear { terms: Vec<(Vec<usize>, f64)> },
}

impl LossFn {
    pub fn quadratic(w: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if w.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                site: "quadratic loss",
                expected: w.nrows(),
                got: y.len(),
            });
        }
        if w.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(LossFn::Quadratic { w, y })
    }

    pub fn polynomial(terms: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let mut seen: Vec<Vec<usize>> = Vec::new();
        for (subset, _) in &terms {
            let mut s = subset.clone();
            s.sort_unstable();
            s.dedup();
            if s.len() != subset.len() {
                return Err(Error::InvalidParam(format!(
                    "polynomial term indexes a variable twice: {subset:?}"
                )));
            }
            if seen.contains(&s) {
                return Err(Error::InvalidParam(format!(
                    "polynomial subset appears twice: {subset:?}"
                )));
            }
            seen.push(s);
        }
        Ok(LossFn::PolynomialMultilinear { terms })
    }

    /// Dimension of the vectors this loss consumes, where fixed.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            LossFn::Quadratic { w, .. } | LossFn::MultilinearQuadratic { w, .. } => Some(w.ncols()),
            _ => None,
        }
    }

    /// Evaluate the loss at `x` (binary states or their real extension).
    pub fn eval(&self, x: ArrayView1<f64>, target: &Target) -> Result<f64> {
        match self {
            LossFn::Quadratic { w, y } => {
                let r = w.dot(&x) - y;
                Ok(r.dot(&r))
            }
            LossFn::MultilinearQuadratic { w, y, col_sq } => {
                let r = w.dot(&x) - y;
                let mut v = r.dot(&r);
                for i in 0..x.len() {
                    v += (1.0 - x[i] * x[i]) * col_sq[i];
                }
                Ok(v)
            }
            LossFn::MultinomialReconstruction => {
                let counts = match target {
                    Target::Counts(c) => c,
                    _ => return Err(Error::InvalidParam("multinomial loss needs counts".into())),
                };
                if counts.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        site: "multinomial loss",
                        expected: x.len(),
                        got: counts.len(),
                    });
                }
                let mut v = 0.0;
                for (f, c) in x.iter().zip(counts.iter()) {
                    if *c < 0.0 {
                        return Err(Error::InvalidParam("negative count".into()));
                    }
                    if *c > 0.0 {
                        if *f <= 0.0 {
                            return Err(Error::DegenerateReconstruction);
                        }
                        v -= c * f.ln();
                    }
                }
                Ok(v)
            }
            LossFn::SoftmaxCrossEntropy => {
                let label = match target {
                    Target::Label(l) => *l,
                    _ => return Err(Error::InvalidParam("cross entropy needs a label".into())),
                };
                if label >= x.len() {
                    return Err(Error::InvalidParam(format!("label {label} out of range")));
                }
                if x[label] <= 0.0 {
                    return Err(Error::DegenerateReconstruction);
                }
                Ok(-x[label].ln())
            }
            LossFn::PolynomialMultilinear { terms } => {
                let mut v = 0.0;
                for (subset, c) in terms {
                    let mut p = *c;
                    for &i in subset {
                        p *= x[i];
                    }
                    v += p;
                }
                Ok(v)
            }
        }
    }

    /// Analytic gradient of the real extension of the loss at `x`.
    pub fn grad(&self, x: ArrayView1<f64>, target: &Target) -> Result<Array1<f64>> {
        match self {
            LossFn::Quadratic { w, y } => {
                let r = w.dot(&x) - y;
                Ok(2.0 * w.t().dot(&r))
            }
            LossFn::MultilinearQuadratic { w, y, col_sq } => {
                let r = w.dot(&x) - y;
                let mut g = 2.0 * w.t().dot(&r);
                for i in 0..x.len() {
                    g[i] -= 2.0 * x[i] * col_sq[i];
                }
                Ok(g)
            }
            LossFn::MultinomialReconstruction => {
                let counts = match target {
                    Target::Counts(c) => c,
                    _ => return Err(Error::InvalidParam("multinomial loss needs counts".into())),
                };
                let mut g = Array1::zeros(x.len());
                for i in 0..x.len() {
                    if counts[i] > 0.0 {
                        if x[i] <= 0.0 {
                            return Err(Error::DegenerateReconstruction);
                        }
                        g[i] = -counts[i] / x[i];
                    }
                }
                Ok(g)
            }
            LossFn::SoftmaxCrossEntropy => {
                let label = match target {
                    Target::Label(l) => *l,
                    _ => return Err(Error::InvalidParam("cross entropy needs a label".into())),
                };
                let mut g = Array1::zeros(x.len());
                if x[label] <= 0.0 {
                    return Err(Error::DegenerateReconstruction);
                }
                g[label] = -1.0 / x[label];
                Ok(g)
            }
            LossFn::PolynomialMultilinear { terms } => {
                let mut g = Array1::zeros(x.len());
                for (subset, c) in terms {
                    for (k, &j) in subset.iter().enumerate() {
                        let mut p = *c;
                        for (k2, &i) in subset.iter().enumerate() {
                            if k2 != k {
                                p *= x[i];
                            }
                        }
                        g[j] += p;
                    }
                }
                Ok(g)
            }
        }
    }

    /// Cheap evaluation of `L(x with coordinate i set to `flip`)` given `L(x)`,
    /// available for the loss kinds that admit a rank-1 update. Returns `None`
    /// when a full re-evaluation is required.
    pub fn flipped_eval(
        &self,
        x: ArrayView1<f64>,
        target: &Target,
        base: f64,
        i: usize,
        flip: f64,
    ) -> Option<f64> {
        let _ = target;
        match self {
            LossFn::Quadratic { w, y } => {
                let col = w.column(i);
                let r = w.dot(&x) - y;
                let d = flip - x[i];
                Some(base + d * d * col.dot(&col) + 2.0 * d * col.dot(&r))
            }
            LossFn::MultilinearQuadratic { w, y, col_sq } => {
                let col = w.column(i);
                let r = w.dot(&x) - y;
                let d = flip - x[i];
                let quad = base + d * d * col.dot(&col) + 2.0 * d * col.dot(&r);
                Some(quad - (flip * flip - x[i] * x[i]) * col_sq[i])
            }
            LossFn::PolynomialMultilinear { terms } => {
                let mut delta = 0.0;
                for (subset, c) in terms {
                    if subset.contains(&i) {
                        let mut p = *c;
                        for &j in subset {
                            if j != i {
                                p *= x[j];
                            }
                        }
                        delta += p * (flip - x[i]);
                    }
                }
                Some(base + delta)
            }
            _ => None,
        }
    }
}

/// Multilinear reformulation of the quadratic loss: agrees with
/// `||W x - y||^2` on every vector with `x_i^2 = 1` and is affine in each
/// coordinate separately.
pub fn multilinear_correction(w: Array2<f64>, y: Array1<f64>) -> Result<LossFn> {
    if w.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            site: "multilinear correction",
            expected: w.nrows(),
            got: y.len(),
        });
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let col_sq = Array1::from_iter(w.columns().into_iter().map(|c| c.dot(&c)));
    Ok(LossFn::MultilinearQuadratic { w, y, col_sq })
}
