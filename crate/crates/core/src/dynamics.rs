//! Accuracy-curve analysis: least-squares polynomial fits and detection of
//! the early-learning endpoint.
//!
//! The endpoint `EL` is the first epoch at which the fitted curve's second
//! derivative is approximately zero, `|Poly''(EL)| < eta`. One polynomial is
//! fitted to the whole series handed in; during training the series grows
//! epoch by epoch and detection is re-run on each prefix.
//!
//! Values are expected as fractions in `[0, 1]`; the default `eta = 0.001` is
//! defined at that scale. Scaling the series by `s` scales `Poly''` by `s`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default curvature threshold.
pub const DEFAULT_ETA: f64 = 0.001;

/// Default polynomial degree.
pub const DEFAULT_DEGREE: usize = 4;

/// Ratio of smallest to largest `|R_ii|` below which a fit is rejected.
const CONDITION_BOUND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("least-squares system is ill-conditioned (|R| ratio {0:e})")]
    IllConditioned(f64),
    #[error("epochs must be >= 1 and strictly increasing (at position {0})")]
    NonIncreasingEpochs(usize),
    #[error("value at epoch {0} is not finite")]
    NonFiniteValue(u32),
    #[error("eta must be positive and finite, got {0}")]
    InvalidEta(f64),
}

/// Per-epoch values of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSeries {
    metric: String,
    points: Vec<(u32, f64)>,
}

impl EpochSeries {
    pub fn new(metric: impl Into<String>, points: Vec<(u32, f64)>) -> Result<Self, DynamicsError> {
        let mut prev = 0;
        for (i, &(e, v)) in points.iter().enumerate() {
            if e <= prev {
                return Err(DynamicsError::NonIncreasingEpochs(i));
            }
            if !v.is_finite() {
                return Err(DynamicsError::NonFiniteValue(e));
            }
            prev = e;
        }
        Ok(Self { metric: metric.into(), points })
    }

    /// Series with epochs `1..=values.len()`.
    pub fn from_values(metric: impl Into<String>, values: &[f64]) -> Result<Self, DynamicsError> {
        Self::new(metric, values.iter().enumerate().map(|(i, &v)| (i as u32 + 1, v)).collect())
    }

    pub fn metric(&self) -> &str {
        &self.metric
    }

    pub fn points(&self) -> &[(u32, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, epoch: u32, value: f64) -> Result<(), DynamicsError> {
        if self.points.last().map_or(epoch < 1, |&(e, _)| epoch <= e) {
            return Err(DynamicsError::NonIncreasingEpochs(self.points.len()));
        }
        if !value.is_finite() {
            return Err(DynamicsError::NonFiniteValue(epoch));
        }
        self.points.push((epoch, value));
        Ok(())
    }

    /// Every value multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self { metric: self.metric.clone(), points: self.points.iter().map(|&(e, v)| (e, v * s)).collect() }
    }

    /// The first `n` points.
    pub fn prefix(&self, n: usize) -> Self {
        Self { metric: self.metric.clone(), points: self.points[..n.min(self.len())].to_vec() }
    }
}

/// A polynomial in the raw epoch variable: `sum_k c_k * t^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    coefficients: Vec<f64>,
    domain: (u32, u32),
    residual_rms: f64,
}

impl PolyFit {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// First and last epoch the fit was computed on.
    pub fn domain(&self) -> (u32, u32) {
        self.domain
    }

    pub fn residual_rms(&self) -> f64 {
        self.residual_rms
    }

    /// Horner evaluation.
    pub fn eval(&self, t: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(&self, order: usize) -> PolyFit {
        poly_derivative(self, order)
    }
}

/// Least-squares polynomial fit of `degree` to the series.
///
/// The system is solved by Householder QR on a Vandermonde matrix in a
/// centred and scaled epoch variable, then the coefficients are expanded back
/// to powers of the raw epoch.
pub fn fit_poly(series: &EpochSeries, degree: usize) -> Result<PolyFit, DynamicsError> {
    let n = series.len();
    if n < degree + 1 {
        return Err(DynamicsError::InsufficientPoints { needed: degree + 1, got: n });
    }
    let first = series.points[0].0;
    let last = series.points[n - 1].0;
    let mid = (f64::from(first) + f64::from(last)) / 2.0;
    let half = ((f64::from(last) - f64::from(first)) / 2.0).max(1.0);

    let cols = degree + 1;
    let vander = DMatrix::from_fn(n, cols, |i, k| powi((f64::from(series.points[i].0) - mid) / half, k));
    let rhs = DVector::from_iterator(n, series.points.iter().map(|p| p.1));

    let qr = vander.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..cols).map(|k| r[(k, k)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if ratio < CONDITION_BOUND {
        return Err(DynamicsError::IllConditioned(ratio));
    }
    let qtb = qr.q().transpose() * &rhs;
    let scaled = r
        .solve_upper_triangular(&qtb)
        .ok_or(DynamicsError::IllConditioned(ratio))?;

    // sum_k a_k ((t - mid) / half)^k  ->  sum_j c_j t^j
    let mut coefficients = vec![0.0; cols];
    for (k, a) in scaled.iter().enumerate() {
        let ak = a / powi(half, k);
        let mut binom = 1.0;
        for (j, c) in coefficients.iter_mut().enumerate().take(k + 1) {
            *c += ak * binom * powi(-mid, k - j);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }

    let mut fit = PolyFit { coefficients, domain: (first, last), residual_rms: 0.0 };
    let sse: f64 = series
        .points
        .iter()
        .map(|&(e, v)| {
            let r = v - fit.eval(f64::from(e));
            r * r
        })
        .sum();
    fit.residual_rms = libm::sqrt(sse / n as f64);
    Ok(fit)
}

fn powi(x: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, _| acc * x)
}

/// Analytic derivative of the given order; a constant results once the order
/// reaches the degree.
pub fn poly_derivative(fit: &PolyFit, order: usize) -> PolyFit {
    let mut c = fit.coefficients.clone();
    for _ in 0..order {
        if c.len() <= 1 {
            c = vec![0.0];
            break;
        }
        c = c.iter().enumerate().skip(1).map(|(k, v)| v * k as f64).collect();
    }
    PolyFit { coefficients: c, domain: fit.domain, residual_rms: 0.0 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElParams {
    pub eta: f64,
    pub degree: usize,
    /// Earliest epoch that may be reported; `None` means `max(6, degree + 2)`.
    pub min_epochs: Option<usize>,
}

impl ElParams {
    pub fn effective_min_epochs(&self) -> usize {
        self.min_epochs.unwrap_or_else(|| (self.degree + 2).max(6))
    }
}

impl Default for ElParams {
    fn default() -> Self {
        Self { eta: DEFAULT_ETA, degree: DEFAULT_DEGREE, min_epochs: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: u32,
    pub fitted: f64,
    pub first_deriv: f64,
    pub second_deriv: f64,
    /// `epoch >= min_epochs` and `|second_deriv| < eta`.
    pub triggered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElReport {
    pub el: Option<u32>,
    pub eta: f64,
    pub degree: usize,
    pub min_epochs: usize,
    pub fit: PolyFit,
    pub trace: Vec<TraceRow>,
    /// EL fired on the very first admissible epoch, which usually means the
    /// curve has no curvature at all (e.g. a straight line).
    pub immediate_trigger: bool,
}

/// Finds the early-learning endpoint of an accuracy series.
///
/// Fits one polynomial to all points and returns the first epoch
/// `e >= min_epochs` (in series order) with `|Poly''(e)| < eta`.
pub fn detect_el(series: &EpochSeries, params: &ElParams) -> Result<ElReport, DynamicsError> {
    if !(params.eta > 0.0 && params.eta.is_finite()) {
        return Err(DynamicsError::InvalidEta(params.eta));
    }
    let min_epochs = params.effective_min_epochs();
    let needed = min_epochs.max(params.degree + 1);
    if series.len() < needed {
        return Err(DynamicsError::InsufficientPoints { needed, got: series.len() });
    }
    let fit = fit_poly(series, params.degree)?;
    let d1 = fit.derivative(1);
    let d2 = fit.derivative(2);

    let mut el = None;
    let mut first_candidate = None;
    let trace: Vec<TraceRow> = series
        .points
        .iter()
        .map(|&(epoch, _)| {
            let t = f64::from(epoch);
            let second = d2.eval(t);
            let admissible = epoch as usize >= min_epochs;
            if admissible && first_candidate.is_none() {
                first_candidate = Some(epoch);
            }
            let triggered = admissible && second.abs() < params.eta;
            if triggered && el.is_none() {
                el = Some(epoch);
            }
            TraceRow { epoch, fitted: fit.eval(t), first_deriv: d1.eval(t), second_deriv: second, triggered }
        })
        .collect();

    Ok(ElReport {
        el,
        eta: params.eta,
        degree: params.degree,
        min_epochs,
        immediate_trigger: el.is_some() && el == first_candidate,
        fit,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(f64) -> f64, n: u32) -> EpochSeries {
        EpochSeries::new("acc", (1..=n).map(|e| (e, f(f64::from(e)))).collect()).unwrap()
    }

    #[test]
    fn series_validation() {
        assert!(EpochSeries::new("m", vec![(1, 0.1), (1, 0.2)]).is_err());
        assert!(EpochSeries::new("m", vec![(0, 0.1)]).is_err());
        assert!(EpochSeries::new("m", vec![(1, f64::NAN)]).is_err());
        let mut s = EpochSeries::from_values("m", &[0.1, 0.2]).unwrap();
        assert!(s.push(2, 0.3).is_err());
        s.push(3, 0.3).unwrap();
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn recovers_line() {
        let fit = fit_poly(&series(|t| 2.0 + 3.0 * t, 10), 1).unwrap();
        assert!((fit.coefficients()[0] - 2.0).abs() < 1e-9);
        assert!((fit.coefficients()[1] - 3.0).abs() < 1e-9);
        assert!(fit.residual_rms() < 1e-12);
    }

    #[test]
    fn two_points_interpolate() {
        let s = EpochSeries::new("m", vec![(3, 0.4), (7, 0.6)]).unwrap();
        let fit = fit_poly(&s, 1).unwrap();
        assert!((fit.eval(3.0) - 0.4).abs() < 1e-12);
        assert!((fit.eval(7.0) - 0.6).abs() < 1e-12);
        assert_eq!(fit.domain(), (3, 7));
    }

    #[test]
    fn too_few_points() {
        let s = series(|t| t, 3);
        assert_eq!(fit_poly(&s, 4).unwrap_err(), DynamicsError::InsufficientPoints { needed: 5, got: 3 });
        let e = detect_el(&s, &ElParams::default()).unwrap_err();
        assert_eq!(e, DynamicsError::InsufficientPoints { needed: 6, got: 3 });
    }

    #[test]
    fn derivative_examples() {
        let fit = fit_poly(&series(|t| 2.0 + 3.0 * t, 5), 1).unwrap();
        let d = poly_derivative(&fit, 1);
        assert_eq!(d.degree(), 0);
        assert!((d.eval(100.0) - 3.0).abs() < 1e-9);
        let dd = poly_derivative(&fit, 2);
        assert_eq!(dd.eval(7.0), 0.0);

        let c = 0.5;
        let quartic = PolyFit { coefficients: vec![0.0, 0.0, 0.0, 0.0, c], domain: (1, 1), residual_rms: 0.0 };
        assert!((quartic.derivative(2).eval(2.0) - 48.0 * c).abs() < 1e-12);
        assert_eq!(quartic.derivative(9).coefficients(), &[0.0]);
    }

    #[test]
    fn residuals_are_orthogonal_to_monomials() {
        let s = series(|t| 0.8 * (1.0 - libm::exp(-t / 4.0)) + 0.01 * libm::sin(3.0 * t), 36);
        let fit = fit_poly(&s, 4).unwrap();
        let mut scale = 0.0;
        for k in 0..=4 {
            let mut dot = 0.0;
            for &(e, v) in s.points() {
                let t = f64::from(e) / 36.0;
                dot += powi(t, k) * (v - fit.eval(f64::from(e)));
                scale += powi(t, k) * v.abs();
            }
            assert!(dot.abs() < 1e-8 * scale, "k={k} dot={dot}");
        }
    }

    #[test]
    fn linear_series_triggers_immediately() {
        let r = detect_el(&series(|t| 0.1 + 0.02 * t, 36), &ElParams::default()).unwrap();
        assert_eq!(r.el, Some(6));
        assert!(r.immediate_trigger);
        assert_eq!(r.trace.len(), 36);
    }

    #[test]
    fn saturating_exponential() {
        let r = detect_el(&series(|t| 0.8 * (1.0 - libm::exp(-t / 4.0)), 36), &ElParams::default()).unwrap();
        let el = r.el.unwrap();
        assert!((14..=18).contains(&el), "el = {el}");
        assert!(!r.immediate_trigger);
        assert!(r.trace[el as usize - 1].second_deriv.abs() < 1e-3);
        assert!(r.trace[..el as usize - 1].iter().all(|row| !row.triggered));
    }

    #[test]
    fn bounded_curvature_never_triggers() {
        let convex = series(|t| 0.1 + 0.0006 * t * t, 36);
        assert_eq!(detect_el(&convex, &ElParams::default()).unwrap().el, None);
        let concave = series(|t| 0.9 - 0.0006 * (37.0 - t) * (37.0 - t), 36);
        assert_eq!(detect_el(&concave, &ElParams::default()).unwrap().el, None);
    }

    #[test]
    fn rejects_bad_eta() {
        let s = series(|t| t / 40.0, 10);
        let p = ElParams { eta: 0.0, ..ElParams::default() };
        assert!(matches!(detect_el(&s, &p), Err(DynamicsError::InvalidEta(_))));
    }
}
