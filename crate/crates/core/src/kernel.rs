//! Closed-form fundamental solution of the adjoint problem on the
//! positive quadrant, its terminal functional F, and the claim-convolved
//! kernel G of the survival integral equation.
//!
//! The kernel factorizes per axis: an exponential tilt times the
//! difference of a direct and a reflected Gaussian, which vanishes
//! identically on both axes. Equivalently it is the transition density
//! of each line's drifted Brownian motion killed at zero, discounted at
//! the total claim intensity.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quad::{adaptive_simpson, GaussLegendre};
use crate::util::norm_cdf;

/// Derived constants of the kernel: per-axis tilt rates and the
/// exponential decay rate in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConstants {
    /// alpha_i = C_i / sigma_i^2
    pub alpha: [f64; 2],
    /// beta = -(lambda + C_1^2/(2 sigma_1^2) + C_2^2/(2 sigma_2^2))
    pub beta: f64,
    pub lambda_total: f64,
}

/// Compute the kernel constants for a parameter set.
pub fn kernel_constants(params: &ModelParams) -> Result<KernelConstants> {
    check_kernel_params(params)?;
    let lambda = params.lambda_total();
    let alpha = [
        params.c1 / (params.sigma1 * params.sigma1),
        params.c2 / (params.sigma2 * params.sigma2),
    ];
    let beta = -(lambda
        + params.c1 * params.c1 / (2.0 * params.sigma1 * params.sigma1)
        + params.c2 * params.c2 / (2.0 * params.sigma2 * params.sigma2));
    Ok(KernelConstants {
        alpha,
        beta,
        lambda_total: lambda,
    })
}

/// The kernel requires nondegenerate volatilities and nonnegative
/// intensities; zero drift is admissible here even though the full model
/// demands positive premiums.
fn check_kernel_params(params: &ModelParams) -> Result<()> {
    if !(params.sigma1 > 0.0 && params.sigma2 > 0.0) {
        return Err(Error::InvalidParams("sigma must be > 0".into()));
    }
    if !(params.lambda1 >= 0.0 && params.lambda2 >= 0.0 && params.lambda3 >= 0.0) {
        return Err(Error::InvalidParams("lambda must be >= 0".into()));
    }
    if !(params.c1.is_finite() && params.c2.is_finite()) {
        return Err(Error::InvalidParams("premiums must be finite".into()));
    }
    Ok(())
}

/// Finite-difference evaluation of the adjoint operator applied to the
/// kernel, with the local magnitude the residual should be judged
/// against.
#[derive(Debug, Clone, Copy)]
pub struct AdjointResidual {
    pub residual: f64,
    pub scale: f64,
}

impl AdjointResidual {
    pub fn relative(&self) -> f64 {
        self.residual.abs() / self.scale.max(f64::MIN_POSITIVE)
    }
}

/// One-axis Gaussian pair: f(y) = c_plus N(y; mu_plus, s^2) - c_minus N(y; mu_minus, s^2).
/// This is the kernel's axis factor with the exponential tilt folded
/// into shifted means.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AxisGaussians {
    pub c_plus: f64,
    pub mu_plus: f64,
    pub c_minus: f64,
    pub mu_minus: f64,
    pub s: f64,
}

impl AxisGaussians {
    /// Integral of the factor over [0, upper] (upper = +inf when None).
    pub fn mass(&self, upper: Option<f64>) -> f64 {
        let tail = |mu: f64| match upper {
            None => norm_cdf(mu / self.s),
            Some(up) => norm_cdf((up - mu) / self.s) - norm_cdf(-mu / self.s),
        };
        self.c_plus * tail(self.mu_plus) - self.c_minus * tail(self.mu_minus)
    }
}

/// Evaluator bundling a parameter set with its kernel constants.
#[derive(Debug, Clone)]
pub struct Kernel {
    params: ModelParams,
    constants: KernelConstants,
}

impl Kernel {
    pub fn new(params: &ModelParams) -> Result<Self> {
        Ok(Self {
            params: params.clone(),
            constants: kernel_constants(params)?,
        })
    }

    /// Build with explicit constants. Intended for diagnostics such as
    /// the perturbed-decay-rate negative control of the residual check.
    pub fn with_constants(params: &ModelParams, constants: KernelConstants) -> Result<Self> {
        check_kernel_params(params)?;
        Ok(Self {
            params: params.clone(),
            constants,
        })
    }

    pub fn constants(&self) -> &KernelConstants {
        &self.constants
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Axis factor as a pair of tilted Gaussians.
    pub(crate) fn axis_gaussians(&self, i: usize, xi: f64, delta: f64) -> AxisGaussians {
        let sigma = self.params.sigma(i);
        let a = self.constants.alpha[i];
        let s2 = sigma * sigma * delta;
        let half = 0.5 * a * a * s2;
        AxisGaussians {
            c_plus: half.exp(),
            mu_plus: xi + a * s2,
            c_minus: (half - 2.0 * a * xi).exp(),
            mu_minus: a * s2 - xi,
            s: s2.sqrt(),
        }
    }

    /// Axis factor f_i(y; xi, delta) of the kernel. Vanishes exactly at
    /// y = 0 and for xi = 0 (image cancellation).
    pub(crate) fn factor(&self, i: usize, y: f64, xi: f64, delta: f64) -> f64 {
        let sigma = self.params.sigma(i);
        let a = self.constants.alpha[i];
        let s2 = sigma * sigma * delta;
        let d = y - xi;
        let sum = y + xi;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * s2).sqrt();
        let e1 = (a * d - d * d / (2.0 * s2)).exp();
        let e2 = (a * d - sum * sum / (2.0 * s2)).exp();
        norm * (e1 - e2)
    }

    fn check_domain(&self, t: f64, x: [f64; 2], tau: f64, xi: [f64; 2]) -> Result<f64> {
        if !(t > tau) {
            return Err(Error::Domain(format!(
                "forward time must exceed backward time: t={t}, tau={tau}"
            )));
        }
        if x.iter().chain(xi.iter()).any(|&v| v < 0.0) {
            return Err(Error::Domain(
                "kernel arguments must be componentwise >= 0".into(),
            ));
        }
        Ok(t - tau)
    }

    /// The fundamental solution K(t, x; tau, xi). Nonnegative on the
    /// closed quadrant, zero whenever x or xi touches an axis.
    pub fn eval_k(&self, t: f64, x: [f64; 2], tau: f64, xi: [f64; 2]) -> Result<f64> {
        let delta = self.check_domain(t, x, tau, xi)?;
        Ok((self.constants.beta * delta).exp()
            * self.factor(0, x[0], xi[0], delta)
            * self.factor(1, x[1], xi[1], delta))
    }

    /// Terminal functional F(tau, xi) = integral of K(t_end, x; tau, xi)
    /// over the open quadrant, in closed form via the normal cdf.
    /// Always lies in [0, 1].
    pub fn eval_f(&self, tau: f64, xi: [f64; 2], t_end: f64) -> Result<f64> {
        self.eval_f_bounded(tau, xi, t_end, [None, None])
    }

    /// As `eval_f` but integrating x only up to `x_max` per axis; used to
    /// bound the kernel mass lost to a spatial truncation.
    pub fn eval_f_truncated(
        &self,
        tau: f64,
        xi: [f64; 2],
        t_end: f64,
        x_max: [f64; 2],
    ) -> Result<f64> {
        self.eval_f_bounded(tau, xi, t_end, [Some(x_max[0]), Some(x_max[1])])
    }

    fn eval_f_bounded(
        &self,
        tau: f64,
        xi: [f64; 2],
        t_end: f64,
        upper: [Option<f64>; 2],
    ) -> Result<f64> {
        let delta = self.check_domain(t_end, [0.0, 0.0], tau, xi)?;
        let mut out = (self.constants.beta * delta).exp();
        for i in 0..2 {
            out *= self.axis_gaussians(i, xi[i], delta).mass(upper[i]);
        }
        Ok(out.max(0.0))
    }

    /// Quadrature fallback for F: nested adaptive integration of the
    /// kernel treated as a black box. Cross-checks the closed form.
    pub fn eval_f_quadrature(&self, tau: f64, xi: [f64; 2], t_end: f64, tol: f64) -> Result<f64> {
        let delta = self.check_domain(t_end, [0.0, 0.0], tau, xi)?;
        let upper = |i: usize| {
            let sigma = self.params.sigma(i);
            xi[i] + self.params.premium(i).abs() * delta + 14.0 * sigma * delta.sqrt()
        };
        let (up0, up1) = (upper(0), upper(1));
        let inner_tol = tol / (10.0 * up0.max(1.0));
        let outer = |x0: f64| {
            adaptive_simpson(
                &|x1| self.eval_k(t_end, [x0, x1], tau, xi).unwrap_or(0.0),
                0.0,
                up1,
                inner_tol,
            )
        };
        Ok(adaptive_simpson(&outer, 0.0, up0, tol))
    }

    /// Claim-convolved axis factor: integral of f_i(x + w) against the
    /// line's claim density, by Gauss-Legendre on the quantile-mapped
    /// claim variable.
    pub(crate) fn claim_convolved_factor(
        &self,
        i: usize,
        x: f64,
        xi: f64,
        delta: f64,
        rule: &GaussLegendre,
    ) -> f64 {
        let dist = self.params.claim(i);
        let mut acc = 0.0;
        for (u, w) in rule.mapped(0.0, 1.0) {
            acc += w * self.factor(i, x + dist.quantile(u), xi, delta);
        }
        acc
    }

    /// The integral-equation kernel G(t, x; tau, xi) >= 0: the
    /// claim-intensity-weighted convolution of K with the claim laws,
    /// one term per stream. Separability makes the common-shock double
    /// integral a product of two one-dimensional convolutions.
    ///
    /// The sign is fixed by the first-claim decomposition of survival:
    /// the kernel flow K already carries the no-claim probability, and
    /// each stream adds back the survival mass of paths whose first
    /// claim arrives at t, so the fixed point satisfies
    /// phi = F + int phi G, with G nonnegative. (Equivalently: setting
    /// the claim sizes to zero must reproduce the undiscounted diffusion
    /// survival, which only the positive sign does.)
    pub fn eval_g(
        &self,
        t: f64,
        x: [f64; 2],
        tau: f64,
        xi: [f64; 2],
        quad_nodes: usize,
    ) -> Result<f64> {
        let delta = self.check_domain(t, x, tau, xi)?;
        let p = &self.params;
        if p.lambda_total() == 0.0 {
            return Ok(0.0);
        }
        let rule = GaussLegendre::new(quad_nodes);
        let f1 = self.factor(0, x[0], xi[0], delta);
        let f2 = self.factor(1, x[1], xi[1], delta);
        let a1 = if p.lambda1 > 0.0 || p.lambda3 > 0.0 {
            self.claim_convolved_factor(0, x[0], xi[0], delta, &rule)
        } else {
            0.0
        };
        let a2 = if p.lambda2 > 0.0 || p.lambda3 > 0.0 {
            self.claim_convolved_factor(1, x[1], xi[1], delta, &rule)
        } else {
            0.0
        };
        let sum = p.lambda1 * a1 * f2 + p.lambda2 * f1 * a2 + p.lambda3 * a1 * a2;
        Ok((self.constants.beta * delta).exp() * sum)
    }

    /// Central finite-difference evaluation of the adjoint operator
    /// applied to K at (t, x), step `h`. Requires an interior point:
    /// x_i >= 3h and t - tau >= 10h.
    pub fn residual_adjoint(
        &self,
        t: f64,
        x: [f64; 2],
        tau: f64,
        xi: [f64; 2],
        h: f64,
    ) -> Result<AdjointResidual> {
        if !(h > 0.0) {
            return Err(Error::Domain("step h must be > 0".into()));
        }
        if x[0] < 3.0 * h || x[1] < 3.0 * h || t - tau < 10.0 * h {
            return Err(Error::Domain(
                "residual stencil requires x_i >= 3h and t - tau >= 10h".into(),
            ));
        }
        let k = |tt: f64, a: f64, b: f64| self.eval_k(tt, [a, b], tau, xi).unwrap();
        let k0 = k(t, x[0], x[1]);
        let dt = (k(t + h, x[0], x[1]) - k(t - h, x[0], x[1])) / (2.0 * h);
        let d1 = (k(t, x[0] + h, x[1]) - k(t, x[0] - h, x[1])) / (2.0 * h);
        let d2 = (k(t, x[0], x[1] + h) - k(t, x[0], x[1] - h)) / (2.0 * h);
        let d11 = (k(t, x[0] + h, x[1]) - 2.0 * k0 + k(t, x[0] - h, x[1])) / (h * h);
        let d22 = (k(t, x[0], x[1] + h) - 2.0 * k0 + k(t, x[0], x[1] - h)) / (h * h);

        let terms = [
            -dt,
            -self.params.c1 * d1,
            -self.params.c2 * d2,
            0.5 * self.params.sigma1 * self.params.sigma1 * d11,
            0.5 * self.params.sigma2 * self.params.sigma2 * d22,
            -self.constants.lambda_total * k0,
        ];
        let residual = terms.iter().sum();
        let scale = terms
            .iter()
            .map(|v| v.abs())
            .fold(k0.abs(), f64::max);
        Ok(AdjointResidual { residual, scale })
    }
}
