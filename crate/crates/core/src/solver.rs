//! Successive-substitution solver for the finite-horizon minimum
//! survival probability.
//!
//! The survival field satisfies a second-kind integral equation: the
//! claim-free kernel flow `F` plus the kernel-weighted integral of the
//! field against the claim-convolution kernel `G`. Each sweep evaluates
//!
//!   phi'(tau, xi) = F(tau, xi) + int_tau^T [K(t, .; tau, xi) * psi(t, .)] dt
//!
//! where `psi` is the claim-shift average of the current iterate (the
//! same integrals the generator residual uses); pulling the claim
//! convolution onto the field is the Fubini twin of convolving the
//! kernel and keeps the inner integrand bounded as t approaches tau.
//! F alone is the survival mass of claim-free scenarios, so the
//! iteration climbs monotonically from below as each sweep adds the
//! scenarios with one more claim.
//! The spatial integral against K is evaluated exactly for the
//! piecewise-bilinear iterate through closed-form Gaussian moments of
//! the hat basis, so the near-delta kernel at small time separations
//! costs no accuracy. Time integration is the composite trapezoid, whose
//! t = tau endpoint is the claim-shift average itself (the continuous
//! limit of the integrand).

use ndarray::Array3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{linspace, Field, FieldMetadata};
use crate::generator::{shift_integral_axis1, shift_integral_axis2};
use crate::kernel::Kernel;
use crate::model::ModelParams;
use crate::quad::GaussLegendre;
use crate::util::{norm_cdf, norm_pdf};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_K_MAX: usize = 50;
pub const DEFAULT_TAIL_TOL: f64 = 1e-8;

/// Admissible excursion of the unclamped field beyond [0, 1]. The
/// discrete fixed point overshoots 1 by the time-quadrature error near
/// the terminal slice (second order in dt), which dominates the Picard
/// tolerance on any practical grid.
pub const BOUNDS_SLACK: f64 = 1e-3;

/// Discretization of the solver domain [tau, horizon] x [0, x_max]^2.
///
/// `x_report` bounds the region whose values the caller intends to read;
/// the truncation admissibility check is enforced there. Kernel mass is
/// inevitably lost at nodes adjacent to the outer truncation boundary,
/// which is why the domain carries padding beyond the reporting region.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverGrid {
    pub tau: f64,
    pub horizon: f64,
    pub n_t: usize,
    pub x_max: [f64; 2],
    pub n_x: [usize; 2],
    pub quad_nodes: usize,
    pub x_report: [f64; 2],
}

impl SolverGrid {
    /// Grid with the reporting region defaulting to the lower half of
    /// the domain.
    pub fn new(
        tau: f64,
        horizon: f64,
        n_t: usize,
        x_max: [f64; 2],
        n_x: [usize; 2],
        quad_nodes: usize,
    ) -> Self {
        Self {
            tau,
            horizon,
            n_t,
            x_max,
            n_x,
            quad_nodes,
            x_report: [0.5 * x_max[0], 0.5 * x_max[1]],
        }
    }

    pub fn with_report(mut self, x_report: [f64; 2]) -> Self {
        self.x_report = x_report;
        self
    }

    /// Choose the truncation automatically for a given reporting bound:
    /// eight diffusion standard deviations plus the expected claim
    /// outflow over the horizon.
    pub fn auto(
        params: &ModelParams,
        tau: f64,
        horizon: f64,
        xi_max: [f64; 2],
        n_t: usize,
        n_x: [usize; 2],
        quad_nodes: usize,
    ) -> Self {
        let span = horizon - tau;
        let pad = |i: usize| {
            8.0 * params.sigma(i) * span.sqrt()
                + params.premium(i) * span
                + params.line_intensity(i) * params.claim(i).mean() * span
        };
        Self {
            tau,
            horizon,
            n_t,
            x_max: [xi_max[0] + pad(0), xi_max[1] + pad(1)],
            n_x,
            quad_nodes,
            x_report: xi_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau < self.horizon) {
            return Err(Error::Grid("tau < horizon required".into()));
        }
        if self.n_t < 2 {
            return Err(Error::Grid("n_t must be >= 2".into()));
        }
        if self.n_x[0] < 3 || self.n_x[1] < 3 {
            return Err(Error::Grid("n_x must be >= 3 per axis".into()));
        }
        if !(self.x_max[0] > 0.0 && self.x_max[1] > 0.0) {
            return Err(Error::Grid("x_max must be > 0".into()));
        }
        if self.x_report[0] > self.x_max[0] || self.x_report[1] > self.x_max[1] {
            return Err(Error::Grid("x_report must lie within x_max".into()));
        }
        if self.quad_nodes < 2 {
            return Err(Error::Grid("quad_nodes must be >= 2".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.horizon - self.tau) / (self.n_t - 1) as f64
    }

    pub fn t_nodes(&self) -> Vec<f64> {
        linspace(self.tau, self.horizon, self.n_t)
    }

    pub fn x1_nodes(&self) -> Vec<f64> {
        linspace(0.0, self.x_max[0], self.n_x[0])
    }

    pub fn x2_nodes(&self) -> Vec<f64> {
        linspace(0.0, self.x_max[1], self.n_x[1])
    }
}

/// Iteration diagnostics of the successive-substitution fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub iterations: usize,
    /// Sup-norm of each sweep's update.
    pub increments: Vec<f64>,
    pub converged: bool,
    /// Geometric-mean ratio of successive increments; 0 when fewer than
    /// two sweeps were needed.
    pub contraction_ratio: f64,
    /// Extremes of the unclamped converged field.
    pub min_value: f64,
    pub max_value: f64,
    /// Whether the unclamped field stays within
    /// [-slack, 1 + slack] for slack = max(tol, BOUNDS_SLACK).
    pub bounds_ok: bool,
}

/// Verify that the kernel mass escaping the truncated domain stays below
/// `tail_tol` across the reporting region, at every time level.
pub fn check_truncation(grid: &SolverGrid, params: &ModelParams, tail_tol: f64) -> Result<()> {
    grid.validate()?;
    let kern = Kernel::new(params)?;
    let t_nodes = grid.t_nodes();
    let x1 = grid.x1_nodes();
    let x2 = grid.x2_nodes();
    let mut worst = 0.0f64;
    for &t in t_nodes.iter().take(grid.n_t - 1) {
        for &a in x1.iter().filter(|&&v| v <= grid.x_report[0]) {
            for &b in x2.iter().filter(|&&v| v <= grid.x_report[1]) {
                let full = kern.eval_f(t, [a, b], grid.horizon)?;
                let trunc = kern.eval_f_truncated(t, [a, b], grid.horizon, grid.x_max)?;
                worst = worst.max(full - trunc);
            }
        }
    }
    if worst > tail_tol {
        return Err(Error::Grid(format!(
            "spatial truncation loses kernel mass {worst:.3e} > tail tolerance {tail_tol:.3e}; widen x_max"
        )));
    }
    Ok(())
}

/// The claim-free term of the integral equation on the grid: closed-form
/// F at every (t, xi) node, terminal slice pinned to 1 on the open
/// quadrant and 0 on the axes.
pub fn assemble_f(grid: &SolverGrid, params: &ModelParams) -> Result<Field> {
    grid.validate()?;
    check_truncation(grid, params, DEFAULT_TAIL_TOL)?;
    let kern = Kernel::new(params)?;
    let t_nodes = grid.t_nodes();
    let x1 = grid.x1_nodes();
    let x2 = grid.x2_nodes();
    let (nt, m1, m2) = (grid.n_t, grid.n_x[0], grid.n_x[1]);

    let rows: Vec<Vec<f64>> = (0..nt)
        .into_par_iter()
        .map(|it| {
            let mut row = vec![0.0; m1 * m2];
            if it == nt - 1 {
                for i1 in 1..m1 {
                    for i2 in 1..m2 {
                        row[i1 * m2 + i2] = 1.0;
                    }
                }
            } else {
                for i1 in 0..m1 {
                    for i2 in 0..m2 {
                        row[i1 * m2 + i2] = kern
                            .eval_f(t_nodes[it], [x1[i1], x2[i2]], grid.horizon)
                            .expect("grid times are below the horizon");
                    }
                }
            }
            row
        })
        .collect();

    let mut values = Array3::zeros((nt, m1, m2));
    for (it, row) in rows.into_iter().enumerate() {
        for i1 in 0..m1 {
            for i2 in 0..m2 {
                values[(it, i1, i2)] = row[i1 * m2 + i2];
            }
        }
    }
    Field::new(
        t_nodes,
        x1,
        x2,
        values,
        FieldMetadata::new(params, grid.horizon),
    )
}

/// Exact integrals of one axis kernel factor against every hat basis
/// function, for all time separations and source nodes.
///
/// Layout: w[(d * m + a) * m + j] = int f_axis(y; xi_a, d*dt) hat_j(y) dy
/// over [0, x_max]. The d = 0 level is the delta limit, i.e. the
/// interpolation row.
fn hat_moment_weights(kern: &Kernel, axis: usize, nodes: &[f64], n_t: usize, dt: f64) -> Vec<f64> {
    let m = nodes.len();
    let mut w = vec![0.0; n_t * m * m];
    // Delta level: point evaluation at the source node.
    for a in 0..m {
        w[a * m + a] = 1.0;
    }
    let levels: Vec<Vec<f64>> = (1..n_t)
        .into_par_iter()
        .map(|d| {
            let delta = d as f64 * dt;
            let mut level = vec![0.0; m * m];
            let mut cdf_p = vec![0.0; m];
            let mut den_p = vec![0.0; m];
            let mut cdf_m = vec![0.0; m];
            let mut den_m = vec![0.0; m];
            for a in 0..m {
                let g = kern.axis_gaussians(axis, nodes[a], delta);
                let s = g.s;
                for (k, &y) in nodes.iter().enumerate() {
                    let zp = (y - g.mu_plus) / s;
                    let zm = (y - g.mu_minus) / s;
                    cdf_p[k] = norm_cdf(zp);
                    den_p[k] = norm_pdf(zp) / s;
                    cdf_m[k] = norm_cdf(zm);
                    den_m[k] = norm_pdf(zm) / s;
                }
                // Segment moments against the rising/falling hat flanks.
                let seg = |k: usize, cdf: &[f64], den: &[f64], mu: f64| -> (f64, f64) {
                    let m0 = cdf[k + 1] - cdf[k];
                    let m1 = mu * m0 - s * s * (den[k + 1] - den[k]);
                    (m0, m1)
                };
                for j in 0..m {
                    let mut acc_p = 0.0;
                    let mut acc_m = 0.0;
                    if j > 0 {
                        let h = nodes[j] - nodes[j - 1];
                        let (m0p, m1p) = seg(j - 1, &cdf_p, &den_p, g.mu_plus);
                        let (m0m, m1m) = seg(j - 1, &cdf_m, &den_m, g.mu_minus);
                        acc_p += (m1p - nodes[j - 1] * m0p) / h;
                        acc_m += (m1m - nodes[j - 1] * m0m) / h;
                    }
                    if j + 1 < m {
                        let h = nodes[j + 1] - nodes[j];
                        let (m0p, m1p) = seg(j, &cdf_p, &den_p, g.mu_plus);
                        let (m0m, m1m) = seg(j, &cdf_m, &den_m, g.mu_minus);
                        acc_p += (nodes[j + 1] * m0p - m1p) / h;
                        acc_m += (nodes[j + 1] * m0m - m1m) / h;
                    }
                    level[a * m + j] = g.c_plus * acc_p - g.c_minus * acc_m;
                }
            }
            level
        })
        .collect();
    for (d, level) in levels.into_iter().enumerate() {
        w[(d + 1) * m * m..(d + 2) * m * m].copy_from_slice(&level);
    }
    w
}

/// Claim-shift average of the current iterate at every grid node:
/// psi = lambda_1 shift_1 + lambda_2 shift_2 + lambda_3 shift_2(shift_1),
/// all with zero extension past the axes. Flattened (t, x1, x2).
fn claim_shift_average(
    cur: &Field,
    params: &ModelParams,
    unit_rule: &[(f64, f64)],
) -> Vec<f64> {
    let nt = cur.t_nodes().len();
    let m1 = cur.x1_nodes().len();
    let m2 = cur.x2_nodes().len();
    let x1 = cur.x1_nodes().to_vec();
    let x2 = cur.x2_nodes().to_vec();
    let need1 = params.lambda1 > 0.0 || params.lambda3 > 0.0;
    let need2 = params.lambda2 > 0.0;
    let need3 = params.lambda3 > 0.0;

    let conv1: Vec<f64> = if need1 {
        (0..nt)
            .into_par_iter()
            .flat_map_iter(|it| {
                let x1 = &x1;
                (0..m1).flat_map(move |b1| {
                    (0..m2).map(move |b2| {
                        shift_integral_axis1(cur, params, it, x1[b1], b2, unit_rule)
                    })
                })
            })
            .collect()
    } else {
        Vec::new()
    };

    let conv2: Vec<f64> = if need2 {
        (0..nt)
            .into_par_iter()
            .flat_map_iter(|it| {
                let x2 = &x2;
                (0..m1).flat_map(move |b1| {
                    (0..m2).map(move |b2| {
                        shift_integral_axis2(cur, params, it, b1, x2[b2], unit_rule)
                    })
                })
            })
            .collect()
    } else {
        Vec::new()
    };

    let conv3: Vec<f64> = if need3 {
        // Nested convolution: shift the axis-1 convolution along axis 2.
        let mut arr = Array3::zeros((nt, m1, m2));
        for it in 0..nt {
            for b1 in 0..m1 {
                for b2 in 0..m2 {
                    arr[(it, b1, b2)] = conv1[(it * m1 + b1) * m2 + b2];
                }
            }
        }
        let conv1_field = Field::new(
            cur.t_nodes().to_vec(),
            x1.clone(),
            x2.clone(),
            arr,
            cur.metadata.clone(),
        )
        .expect("conv grid mirrors the iterate grid");
        (0..nt)
            .into_par_iter()
            .flat_map_iter(|it| {
                let x2 = &x2;
                let f = &conv1_field;
                (0..m1).flat_map(move |b1| {
                    (0..m2)
                        .map(move |b2| shift_integral_axis2(f, params, it, b1, x2[b2], unit_rule))
                })
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut psi = vec![0.0; nt * m1 * m2];
    for (idx, slot) in psi.iter_mut().enumerate() {
        let mut v = 0.0;
        if params.lambda1 > 0.0 {
            v += params.lambda1 * conv1[idx];
        }
        if need2 {
            v += params.lambda2 * conv2[idx];
        }
        if need3 {
            v += params.lambda3 * conv3[idx];
        }
        *slot = v;
    }
    psi
}

/// Solve the survival integral equation by successive substitution,
/// starting from the claim-free term. Returns the (unclamped) field and
/// the iteration diagnostics; non-convergence within `k_max` sweeps is
/// reported, not an error.
pub fn picard_solve(
    grid: &SolverGrid,
    params: &ModelParams,
    tol: f64,
    k_max: usize,
) -> Result<(Field, ConvergenceReport)> {
    if !(tol > 0.0) {
        return Err(Error::Domain("tol must be > 0".into()));
    }
    if k_max == 0 {
        return Err(Error::Domain("k_max must be >= 1".into()));
    }
    let f_field = assemble_f(grid, params)?;
    let kern = Kernel::new(params)?;
    let beta = kern.constants().beta;
    let (nt, m1, m2) = (grid.n_t, grid.n_x[0], grid.n_x[1]);
    let dt = grid.dt();
    let t_nodes = grid.t_nodes();
    let x1 = grid.x1_nodes();
    let x2 = grid.x2_nodes();
    let lambda = params.lambda_total();

    let mut cur = f_field.clone();
    let mut increments = Vec::new();
    let mut converged = false;

    if lambda == 0.0 {
        // The convolution kernel vanishes; the fixed point is F itself.
        increments.push(0.0);
        converged = true;
        let report = finish_report(&cur, increments, converged, tol);
        return Ok((cur, report));
    }

    let w1 = hat_moment_weights(&kern, 0, &x1, nt, dt);
    let w2 = hat_moment_weights(&kern, 1, &x2, nt, dt);
    let unit_rule = GaussLegendre::new(grid.quad_nodes).mapped(0.0, 1.0);
    let decay: Vec<f64> = (0..nt).map(|d| (beta * d as f64 * dt).exp()).collect();

    for _sweep in 0..k_max {
        let psi = claim_shift_average(&cur, params, &unit_rule);

        // Correction integral per source node (i, a1, a2), trapezoid in
        // time, exact hat moments in space.
        let slabs: Vec<Vec<f64>> = (0..nt)
            .into_par_iter()
            .map(|i| {
                let mut corr = vec![0.0; m1 * m2];
                if i == nt - 1 {
                    return corr;
                }
                let mut t_buf = vec![0.0; m1 * m2];
                for j in i..nt {
                    let d = j - i;
                    let wt = if j == i || j == nt - 1 { 0.5 * dt } else { dt };
                    let scale = wt * decay[d];
                    // T[b1, a2] = sum_b2 W2[d, a2, b2] psi[j, b1, b2]
                    let w2_level = &w2[d * m2 * m2..(d + 1) * m2 * m2];
                    for b1 in 0..m1 {
                        let psi_row = &psi[(j * m1 + b1) * m2..(j * m1 + b1 + 1) * m2];
                        let t_row = &mut t_buf[b1 * m2..(b1 + 1) * m2];
                        for a2 in 0..m2 {
                            let w_row = &w2_level[a2 * m2..(a2 + 1) * m2];
                            t_row[a2] = w_row
                                .iter()
                                .zip(psi_row)
                                .map(|(&w, &p)| w * p)
                                .sum::<f64>();
                        }
                    }
                    // corr[a1, a2] += scale * sum_b1 W1[d, a1, b1] T[b1, a2]
                    let w1_level = &w1[d * m1 * m1..(d + 1) * m1 * m1];
                    for a1 in 0..m1 {
                        let w_row = &w1_level[a1 * m1..(a1 + 1) * m1];
                        let corr_row = &mut corr[a1 * m2..(a1 + 1) * m2];
                        for b1 in 0..m1 {
                            let coeff = scale * w_row[b1];
                            if coeff == 0.0 {
                                continue;
                            }
                            let t_row = &t_buf[b1 * m2..(b1 + 1) * m2];
                            for (c, &t) in corr_row.iter_mut().zip(t_row) {
                                *c += coeff * t;
                            }
                        }
                    }
                }
                corr
            })
            .collect();

        let mut next = Array3::zeros((nt, m1, m2));
        let mut increment = 0.0f64;
        for (i, slab) in slabs.iter().enumerate() {
            for a1 in 0..m1 {
                for a2 in 0..m2 {
                    let v = f_field.value(i, a1, a2) + slab[a1 * m2 + a2];
                    increment = increment.max((v - cur.value(i, a1, a2)).abs());
                    next[(i, a1, a2)] = v;
                }
            }
        }
        cur = Field::new(
            t_nodes.clone(),
            x1.clone(),
            x2.clone(),
            next,
            FieldMetadata::new(params, grid.horizon),
        )?;
        increments.push(increment);
        if increment < tol {
            converged = true;
            break;
        }
    }

    let report = finish_report(&cur, increments, converged, tol);
    Ok((cur, report))
}

fn finish_report(
    field: &Field,
    increments: Vec<f64>,
    converged: bool,
    tol: f64,
) -> ConvergenceReport {
    let (min_value, max_value) = field
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let contraction_ratio = if increments.len() >= 2 && increments[0] > 0.0 {
        let first = increments[0];
        let last = *increments.last().unwrap();
        if last > 0.0 {
            (last / first).powf(1.0 / (increments.len() - 1) as f64)
        } else {
            0.0
        }
    } else {
        0.0
    };
    let slack = tol.max(BOUNDS_SLACK);
    ConvergenceReport {
        iterations: increments.len(),
        increments,
        converged,
        contraction_ratio,
        min_value,
        max_value,
        bounds_ok: min_value >= -slack && max_value <= 1.0 + slack,
    }
}

/// Interpolated field lookup: bilinear in space, linear in time, exact
/// at nodes, no extrapolation.
pub fn query(field: &Field, t: f64, x: [f64; 2]) -> Result<f64> {
    field.query(t, x)
}
