//! Closed-form survival probabilities for the claim-free (pure diffusion)
//! model. These serve as independent references wherever the jump streams
//! are switched off: each line is then a drifted Brownian motion absorbed
//! at zero, and the two lines are independent.

use crate::model::ModelParams;
use crate::util::norm_cdf;

/// Probability that a drifted Brownian motion `x + c t + sigma W(t)`
/// stays strictly positive on [0, horizon], by the reflection formula.
pub fn diffusion_survival_1d(x: f64, c: f64, sigma: f64, horizon: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if horizon <= 0.0 {
        return 1.0;
    }
    let s = sigma * horizon.sqrt();
    let q = norm_cdf((x + c * horizon) / s)
        - (-2.0 * c * x / (sigma * sigma)).exp() * norm_cdf((c * horizon - x) / s);
    q.clamp(0.0, 1.0)
}

/// Probability that the drifted Brownian motion never hits zero
/// (horizon -> infinity); requires positive drift for a nonzero answer.
pub fn diffusion_ultimate_survival_1d(x: f64, c: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if c <= 0.0 {
        return 0.0;
    }
    -(-2.0 * c * x / (sigma * sigma)).exp_m1()
}

/// Finite-horizon survival of the two-line minimum for a claim-free
/// parameter set: the product of the per-line reflection formulas.
/// `dt` is the remaining time `horizon - t`.
pub fn diffusion_survival_product(params: &ModelParams, x: [f64; 2], dt: f64) -> f64 {
    diffusion_survival_1d(x[0], params.c1, params.sigma1, dt)
        * diffusion_survival_1d(x[1], params.c2, params.sigma2, dt)
}

/// Ultimate survival of the two-line minimum for a claim-free set.
pub fn diffusion_ultimate_survival_product(params: &ModelParams, x: [f64; 2]) -> f64 {
    diffusion_ultimate_survival_1d(x[0], params.c1, params.sigma1)
        * diffusion_ultimate_survival_1d(x[1], params.c2, params.sigma2)
}
