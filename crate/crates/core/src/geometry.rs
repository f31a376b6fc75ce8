//! Boxes with Gumbel-distributed corners: intersection, expected volume, and
//! the similarity score with its analytic gradient.
//!
//! A `d`-dimensional box is a Cartesian product of intervals. Modelling the
//! corner coordinates as Gumbel location parameters with scale `beta` makes
//! the expected side length of a box `beta * ln(1 + exp((max - min)/beta -
//! 2*gamma))`, a softplus of the gap. All volume work happens in log space:
//! raw volumes underflow long before realistic dimensionalities.

use alloc::vec::Vec;

use crate::math::{log_add_exp, ln_softplus, sigmoid, sigmoid_over_softplus, EULER_GAMMA};

/// A box given by per-dimension lower and upper Gumbel location parameters.
///
/// No ordering `min_loc <= max_loc` is enforced: the smoothed volume is
/// defined (and strictly positive) for any gap sign, which is what lets
/// training recover from degenerate boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelBox {
    pub min_loc: Vec<f64>,
    pub max_loc: Vec<f64>,
}

impl GumbelBox {
    /// Panics if the two location vectors differ in length or are empty.
    pub fn new(min_loc: Vec<f64>, max_loc: Vec<f64>) -> Self {
        assert_eq!(
            min_loc.len(),
            max_loc.len(),
            "box location vectors must have equal length"
        );
        assert!(!min_loc.is_empty(), "box dimension must be at least 1");
        GumbelBox { min_loc, max_loc }
    }

    pub fn dim(&self) -> usize {
        self.min_loc.len()
    }
}

/// Gumbel noise scale (smoothing temperature). The volume formula hardens to
/// ordinary interval lengths as `beta -> 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelParams {
    pub beta: f64,
}

impl GumbelParams {
    /// Panics unless `beta` is finite and strictly positive.
    pub fn new(beta: f64) -> Self {
        assert!(beta.is_finite() && beta > 0.0, "beta must be positive, got {beta}");
        GumbelParams { beta }
    }
}

impl Default for GumbelParams {
    fn default() -> Self {
        GumbelParams { beta: 1.0 }
    }
}

/// Gumbel-max intersection: per dimension the result's lower location is the
/// scaled log-sum-exp of the operands' lower locations, and the upper one the
/// mirrored (negated) log-sum-exp of the upper locations.
///
/// Panics on dimension mismatch.
pub fn intersect(a: &GumbelBox, b: &GumbelBox, p: &GumbelParams) -> GumbelBox {
    assert_eq!(a.dim(), b.dim(), "intersect: dimension mismatch");
    let beta = p.beta;
    let min_loc = a
        .min_loc
        .iter()
        .zip(&b.min_loc)
        .map(|(&x, &y)| beta * log_add_exp(x / beta, y / beta))
        .collect();
    let max_loc = a
        .max_loc
        .iter()
        .zip(&b.max_loc)
        .map(|(&x, &y)| -beta * log_add_exp(-x / beta, -y / beta))
        .collect();
    GumbelBox { min_loc, max_loc }
}

/// Log of the expected volume: the sum over dimensions of
/// `ln(beta * ln(1 + exp((max - min)/beta - 2*gamma)))`.
///
/// Total on all finite parameters; tiny boxes simply return a large negative
/// value.
pub fn log_expected_volume(b: &GumbelBox, p: &GumbelParams) -> f64 {
    let beta = p.beta;
    let ln_beta = crate::math::ln(beta);
    b.min_loc
        .iter()
        .zip(&b.max_loc)
        .map(|(&lo, &hi)| ln_beta + ln_softplus((hi - lo) / beta - 2.0 * EULER_GAMMA))
        .sum()
}

/// Similarity score: log expected volume of the intersection. Symmetric in
/// its arguments. Panics on dimension mismatch.
pub fn score(word: &GumbelBox, context: &GumbelBox, p: &GumbelParams) -> f64 {
    log_expected_volume(&intersect(word, context, p), p)
}

/// Partial derivatives of [`score`] with respect to every location parameter
/// of both boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrad {
    pub word_min: Vec<f64>,
    pub word_max: Vec<f64>,
    pub context_min: Vec<f64>,
    pub context_max: Vec<f64>,
}

/// Analytic gradient of [`score`] (closed-form chain rule through the
/// intersection and the volume softplus). Growing a box can only grow the
/// intersection, so the min-side partials are `<= 0` and the max-side
/// partials `>= 0`.
pub fn grad_score(word: &GumbelBox, context: &GumbelBox, p: &GumbelParams) -> ScoreGrad {
    score_with_grad(word, context, p).1
}

/// [`score`] and its gradient in one pass.
pub fn score_with_grad(
    word: &GumbelBox,
    context: &GumbelBox,
    p: &GumbelParams,
) -> (f64, ScoreGrad) {
    assert_eq!(word.dim(), context.dim(), "score: dimension mismatch");
    let d = word.dim();
    let beta = p.beta;
    let ln_beta = crate::math::ln(beta);

    let mut value = 0.0;
    let mut grad = ScoreGrad {
        word_min: Vec::with_capacity(d),
        word_max: Vec::with_capacity(d),
        context_min: Vec::with_capacity(d),
        context_max: Vec::with_capacity(d),
    };

    for i in 0..d {
        let lo = beta * log_add_exp(word.min_loc[i] / beta, context.min_loc[i] / beta);
        let hi = -beta * log_add_exp(-word.max_loc[i] / beta, -context.max_loc[i] / beta);
        let u = (hi - lo) / beta - 2.0 * EULER_GAMMA;
        value += ln_beta + ln_softplus(u);

        // d(score)/d(hi) = g/beta, d(score)/d(lo) = -g/beta, with g the
        // sigmoid-to-softplus ratio of the smoothed gap.
        let g = sigmoid_over_softplus(u) / beta;
        // Softmax weights of the log-sum-exp compositions.
        let w_min = sigmoid((word.min_loc[i] - context.min_loc[i]) / beta);
        let w_max = sigmoid((context.max_loc[i] - word.max_loc[i]) / beta);
        grad.word_min.push(-g * w_min);
        grad.context_min.push(-g * (1.0 - w_min));
        grad.word_max.push(g * w_max);
        grad.context_max.push(g * (1.0 - w_max));
    }

    (value, grad)
}
