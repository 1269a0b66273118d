//! Gradient-estimator quality metrics: expected cosine similarity, expected
//! improvement under the proximal step model, and RMSE.

use ndarray::Array1;

use crate::error::Error;
use crate::Result;

/// A reference gradient with repeated stochastic estimates of it.
#[derive(Clone, Debug)]
pub struct TrialSet {
    pub reference: Array1<f64>,
    pub trials: Vec<Array1<f64>>,
    pub checkpoint: String,
}

impl TrialSet {
    pub fn new(reference: Array1<f64>, trials: Vec<Array1<f64>>, checkpoint: String) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::InvalidParam("trial set needs at least one trial".into()));
        }
        if reference.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        for t in &trials {
            if t.len() != reference.len() {
                return Err(Error::DimensionMismatch {
                    site: "trial set",
                    expected: reference.len(),
                    got: t.len(),
                });
            }
        }
        Ok(TrialSet { reference, trials, checkpoint })
    }
}

/// Expected cosine similarity plus an empirical 70% confidence interval.
#[derive(Clone, Copy, Debug)]
pub struct CosineSummary {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    /// Trials with a zero-norm estimate, excluded from the mean.
    pub zero_trials: usize,
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Mean cosine between the reference and each trial; the interval is the
/// empirical 15th/85th percentile band. Zero-norm trials are excluded and
/// counted.
pub fn ecs(set: &TrialSet) -> Result<CosineSummary> {
    let gn = norm(&set.reference);
    if gn == 0.0 {
        return Err(Error::InvalidParam("zero reference gradient".into()));
    }
    let mut cosines = Vec::with_capacity(set.trials.len());
    let mut zero_trials = 0usize;
    for t in &set.trials {
        let tn = norm(t);
        if tn == 0.0 {
            zero_trials += 1;
            continue;
        }
        if t == &set.reference {
            cosines.push(1.0);
        } else {
            cosines.push(set.reference.dot(t) / (gn * tn));
        }
    }
    if cosines.is_empty() {
        return Err(Error::InvalidParam("all trials have zero norm".into()));
    }
    let mean = cosines.iter().sum::<f64>() / cosines.len() as f64;
    let mut sorted = cosines;
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite cosines"));
    Ok(CosineSummary { mean, lo: quantile(&sorted, 0.15), hi: quantile(&sorted, 0.85), zero_trials })
}

/// Expected improvement `-E[<g, g~>] / sqrt(E[||g~||^2])`: negative values
/// predict descent under the proximal step model, positive values predict
/// ascent (a systematically wrong direction).
pub fn ei(set: &TrialSet) -> Result<f64> {
    let mut dot = 0.0;
    let mut sq = 0.0;
    for t in &set.trials {
        dot += set.reference.dot(t);
        sq += t.dot(t);
    }
    let n = set.trials.len() as f64;
    dot /= n;
    sq /= n;
    if sq == 0.0 {
        return Err(Error::InvalidParam("all trials are zero".into()));
    }
    Ok(-dot / sq.sqrt())
}

/// The best possible improvement, attained when every trial equals the
/// reference: `-||g||`.
pub fn ei_max(set: &TrialSet) -> f64 {
    -norm(&set.reference)
}

/// The proximal-optimal scalar step `alpha = eps E[<g, g~>] / E[||g~||^2]`,
/// one scalar per measurement point. Negative values are reported as-is.
pub fn optimal_alpha(set: &TrialSet, base_step: f64) -> Result<f64> {
    let mut dot = 0.0;
    let mut sq = 0.0;
    for t in &set.trials {
        dot += set.reference.dot(t);
        sq += t.dot(t);
    }
    let n = set.trials.len() as f64;
    if sq == 0.0 {
        return Err(Error::InvalidParam("all trials are zero".into()));
    }
    Ok(base_step * (dot / n) / (sq / n))
}

/// Root-mean-squared error `sqrt(E[||g - g~||^2])`.
pub fn rmse(set: &TrialSet) -> f64 {
    let mut acc = 0.0;
    for t in &set.trials {
        let d = t - &set.reference;
        acc += d.dot(&d);
    }
    (acc / set.trials.len() as f64).sqrt()
}

/// Squared bias `||E[g~] - g||^2` and mean trace-variance of the trials;
/// `rmse^2 = bias^2 + variance` exactly under the empirical mean.
pub fn bias_variance(set: &TrialSet) -> (f64, f64) {
    let n = set.trials.len() as f64;
    let mut mean = Array1::zeros(set.reference.len());
    for t in &set.trials {
        mean += t;
    }
    mean /= n;
    let d = &mean - &set.reference;
    let bias_sq = d.dot(&d);
    let mut var = 0.0;
    for t in &set.trials {
        let d = t - &mean;
        var += d.dot(&d);
    }
    (bias_sq, var / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::RandomStream;
    use ndarray::array;

    fn set(reference: Array1<f64>, trials: Vec<Array1<f64>>) -> TrialSet {
        TrialSet::new(reference, trials, "test".into()).unwrap()
    }

    #[test]
    fn cosine_trivial_cases() {
        let g = array![3.0, 4.0];
        let s = set(g.clone(), vec![g.clone(), g.clone()]);
        let c = ecs(&s).unwrap();
        assert_eq!(c.mean, 1.0);
        assert_eq!((c.lo, c.hi), (1.0, 1.0));
        let s = set(g.clone(), vec![-&g]);
        assert_eq!(ecs(&s).unwrap().mean, -1.0);
        let s = set(g.clone(), vec![array![-4.0, 3.0]]);
        assert!(ecs(&s).unwrap().mean.abs() < 1e-12);
        // zero trials are excluded and counted
        let s = set(g.clone(), vec![g.clone(), Array1::zeros(2)]);
        let c = ecs(&s).unwrap();
        assert_eq!(c.zero_trials, 1);
        assert_eq!(c.mean, 1.0);
        // zero reference is an error
        assert!(ecs(&set(Array1::zeros(2), vec![g])).is_err());
    }

    #[test]
    fn cosine_invariant_to_positive_trial_rescaling() {
        let mut rng = RandomStream::new(5);
        let g = Array1::from_shape_fn(6, |_| rng.uniform(-1.0, 1.0));
        let trials: Vec<_> =
            (0..20).map(|_| Array1::from_shape_fn(6, |_| rng.uniform(-1.0, 1.0))).collect();
        let a = ecs(&set(g.clone(), trials.clone())).unwrap();
        let scaled: Vec<_> = trials.iter().map(|t| t * 37.5).collect();
        let b = ecs(&set(g, scaled)).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-12);
        assert!((a.lo - b.lo).abs() < 1e-12);
    }

    #[test]
    fn improvement_examples() {
        let g = array![3.0, 4.0]; // ||g|| = 5
        let s = set(g.clone(), vec![g.clone()]);
        assert!((ei(&s).unwrap() + 5.0).abs() < 1e-12);
        assert_eq!(ei_max(&s), -5.0);
        let s = set(g.clone(), vec![-&g]);
        assert!((ei(&s).unwrap() - 5.0).abs() < 1e-12);
        // deterministic single trial: EI equals EI at any common rescaling of
        // the trial set only through alpha; the identity case is exact
        let s = set(g.clone(), vec![g.clone()]);
        assert!((ei(&s).unwrap() - ei_max(&s)).abs() < 1e-12);
    }

    #[test]
    fn unbiased_estimators_predict_descent() {
        // E[g~] = g != 0 makes -EI positive by Cauchy-Schwarz; with T = 1e4
        // Gaussian trials the empirical version holds with huge margin
        let mut rng = RandomStream::new(11);
        let g = array![1.0, -2.0, 0.5];
        let mut trials = Vec::new();
        for _ in 0..10_000 {
            let t = Array1::from_shape_fn(3, |i| {
                let u1: f64 = rng.open01();
                let u2: f64 = rng.open01();
                g[i] + (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            });
            trials.push(t);
        }
        let s = set(g, trials);
        assert!(ei(&s).unwrap() < 0.0);
    }

    #[test]
    fn alpha_examples() {
        let g = array![1.0, 2.0];
        let eps = 0.3;
        let s = set(g.clone(), vec![g.clone()]);
        assert!((optimal_alpha(&s, eps).unwrap() - eps).abs() < 1e-12);
        let s = set(g.clone(), vec![2.0 * &g]);
        assert!((optimal_alpha(&s, eps).unwrap() - eps / 2.0).abs() < 1e-12);
        let s = set(g.clone(), vec![-&g]);
        assert!(optimal_alpha(&s, eps).unwrap() < 0.0);
    }

    #[test]
    fn rmse_examples_and_decomposition() {
        let g = array![1.0, 0.0];
        let s = set(g.clone(), vec![g.clone(), g.clone()]);
        assert_eq!(rmse(&s), 0.0);
        let s = set(g.clone(), vec![array![1.0, 3.0]]);
        assert!((rmse(&s) - 3.0).abs() < 1e-12);
        // rmse^2 = bias^2 + variance on synthetic trials
        let mut rng = RandomStream::new(3);
        let g = Array1::from_shape_fn(5, |_| rng.uniform(-1.0, 1.0));
        let trials: Vec<_> = (0..40)
            .map(|_| Array1::from_shape_fn(5, |_| rng.uniform(-2.0, 2.0)))
            .collect();
        let s = set(g, trials);
        let r = rmse(&s);
        let (b2, var) = bias_variance(&s);
        assert!((r * r - (b2 + var)).abs() < 1e-10, "{} vs {}", r * r, b2 + var);
        assert!(r >= b2.sqrt());
    }
}
