//! Exact-event Monte Carlo for the two-line surplus process.
//!
//! Jump times of the three Poisson streams are drawn as exponential gaps
//! (no thinning on a grid); between events the two independent drifted
//! Brownian components are advanced exactly on a sub-grid of step at most
//! `dt_max`, with the Brownian-bridge minimum law deciding whether a
//! component crossed zero strictly inside a step. Endpoints are sampled
//! from the exact normal transition, so the ruin indicator is unbiased
//! for any `dt_max`; the step size only bounds the resolution of the
//! reported ruin time.
//!
//! Every path owns an independent counter-based stream keyed by
//! (seed, path index), so estimates are bit-reproducible regardless of
//! how paths are scheduled across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Verdict of one simulated trajectory of the two-line surplus.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    /// True when at least one line hit zero or below before the horizon.
    pub ruined: bool,
    /// First time either line died; present iff `ruined`.
    pub ruin_time: Option<f64>,
    /// Surplus at the horizon, or at ruin detection.
    pub final_state: [f64; 2],
    /// Applied jump counts per stream (line 1, line 2, common shock).
    pub n_jumps: [u64; 3],
}

/// Per-line ruin flags from a trajectory that keeps simulating each line
/// to the horizon regardless of the other line's state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineOutcomes {
    pub line_ruined: [bool; 2],
}

impl LineOutcomes {
    pub fn any_ruined(&self) -> bool {
        self.line_ruined[0] || self.line_ruined[1]
    }
}

/// Bernoulli survival estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub p_hat: f64,
    pub std_err: f64,
    pub n_paths: u64,
    pub seed: u64,
}

/// One applied claim event, for the optional per-path debug log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    /// Stream index: 0 and 1 are the per-line streams, 2 the common shock.
    pub stream: u8,
    pub claim: [f64; 2],
    pub state_after: [f64; 2],
}

/// Deviations of checkpoint means of a candidate survival function from
/// its value at the start state; the stopped process has constant mean
/// when the candidate is the true survival probability.
#[derive(Debug, Clone)]
pub struct MartingaleReport {
    pub reference: f64,
    pub checkpoint_means: Vec<f64>,
    pub deviations: Vec<f64>,
    pub std_errs: Vec<f64>,
}

impl MartingaleReport {
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().cloned().fold(0.0, f64::max)
    }
}

/// Axis-aligned rectangle in the positive quadrant, half-open in each
/// coordinate: [x1_lo, x1_hi) x [x2_lo, x2_hi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x1: (f64, f64),
    pub x2: (f64, f64),
}

impl Rect {
    pub fn contains(&self, z1: f64, z2: f64) -> bool {
        z1 >= self.x1.0 && z1 < self.x1.1 && z2 >= self.x2.0 && z2 < self.x2.1
    }
}

/// Independent per-path stream keyed by (seed, path index).
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn check_path_preconditions(
    params: &ModelParams,
    x0: [f64; 2],
    start: f64,
    horizon: f64,
    dt_max: f64,
) -> Result<()> {
    params.require_valid()?;
    if x0[0] < 0.0 || x0[1] < 0.0 {
        return Err(Error::Domain(format!(
            "initial reserve must be componentwise >= 0, got ({}, {})",
            x0[0], x0[1]
        )));
    }
    if !(start < horizon) {
        return Err(Error::Domain(format!(
            "start < horizon required, got start={start}, horizon={horizon}"
        )));
    }
    if !(dt_max > 0.0) {
        return Err(Error::Domain("dt_max must be > 0".into()));
    }
    Ok(())
}

/// Internal trajectory result shared by the public sampling entry points.
struct RawPath {
    first_death: Option<f64>,
    line_death: [Option<f64>; 2],
    final_state: [f64; 2],
    n_jumps: [u64; 3],
    checkpoint_states: Vec<Option<[f64; 2]>>,
}

/// Core trajectory loop. Advances both components; in `stop_at_first`
/// mode it returns at the first line death (the minimum ruin time),
/// otherwise each line is tracked to the horizon independently.
///
/// Exactly four draws (two normals, two bridge uniforms) are consumed per
/// sub-step whether or not a component is still alive, so trajectories
/// started from ordered initial reserves stay coupled under common random
/// numbers.
fn run_path<R: Rng + ?Sized>(
    params: &ModelParams,
    x0: [f64; 2],
    start: f64,
    horizon: f64,
    dt_max: f64,
    rng: &mut R,
    checkpoints: &[f64],
    stop_at_first: bool,
    mut events: Option<&mut Vec<JumpEvent>>,
) -> RawPath {
    let lambda = params.lambda_total();
    let sigma = [params.sigma1, params.sigma2];
    let premium = [params.c1, params.c2];

    let mut state = x0;
    let mut alive = [x0[0] > 0.0, x0[1] > 0.0];
    let mut line_death: [Option<f64>; 2] = [None, None];
    for i in 0..2 {
        if !alive[i] {
            line_death[i] = Some(start);
        }
    }
    let mut n_jumps = [0u64; 3];
    let mut cp_states: Vec<Option<[f64; 2]>> = vec![None; checkpoints.len()];
    let mut cp_idx = 0;

    let record_cp = |cp_states: &mut Vec<Option<[f64; 2]>>,
                     cp_idx: &mut usize,
                     upto: f64,
                     alive: &[bool; 2],
                     state: &[f64; 2]| {
        while *cp_idx < checkpoints.len() && checkpoints[*cp_idx] <= upto {
            cp_states[*cp_idx] = if alive[0] && alive[1] {
                Some(*state)
            } else {
                None
            };
            *cp_idx += 1;
        }
    };
    record_cp(&mut cp_states, &mut cp_idx, start, &alive, &state);

    let finish = |first_death: Option<f64>,
                  line_death: [Option<f64>; 2],
                  state: [f64; 2],
                  n_jumps: [u64; 3],
                  cp_states: Vec<Option<[f64; 2]>>| RawPath {
        first_death,
        line_death,
        final_state: state,
        n_jumps,
        checkpoint_states: cp_states,
    };

    if stop_at_first && (!alive[0] || !alive[1]) {
        return finish(Some(start), line_death, state, n_jumps, cp_states);
    }

    let mut t = start;
    while t < horizon && (alive[0] || alive[1]) {
        let t_jump = if lambda > 0.0 {
            let u: f64 = rng.random();
            t + -(1.0 - u).ln() / lambda
        } else {
            f64::INFINITY
        };
        let seg_end = t_jump.min(horizon);

        // Diffusion advance over the sub-grid anchored at `start`.
        while t < seg_end {
            let k = ((t - start) / dt_max).floor();
            let mut g = start + (k + 1.0) * dt_max;
            if g <= t {
                g = start + (k + 2.0) * dt_max;
            }
            let mut t_next = g.min(seg_end);
            if cp_idx < checkpoints.len() {
                t_next = t_next.min(checkpoints[cp_idx]);
            }
            let h = t_next - t;
            if h <= dt_max * 1e-12 {
                t = t_next;
                record_cp(&mut cp_states, &mut cp_idx, t, &alive, &state);
                continue;
            }

            let z: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let u: [f64; 2] = [rng.random(), rng.random()];
            let sqrt_h = h.sqrt();
            let mut died_at: [Option<f64>; 2] = [None, None];
            for i in 0..2 {
                if !alive[i] {
                    continue;
                }
                let a = state[i];
                let b = a + premium[i] * h + sigma[i] * sqrt_h * z[i];
                if b <= 0.0 {
                    state[i] = b;
                    died_at[i] = Some(t_next);
                } else {
                    // Bridge minimum law: crossing inside the step given
                    // strictly positive endpoints.
                    let p_cross = (-2.0 * a * b / (sigma[i] * sigma[i] * h)).exp();
                    if u[i] < p_cross {
                        state[i] = 0.0;
                        died_at[i] = Some(t + 0.5 * h);
                    } else {
                        state[i] = b;
                    }
                }
            }
            for i in 0..2 {
                if let Some(td) = died_at[i] {
                    alive[i] = false;
                    line_death[i] = Some(td);
                }
            }
            t = t_next;
            record_cp(&mut cp_states, &mut cp_idx, t, &alive, &state);
            if stop_at_first && (!alive[0] || !alive[1]) {
                let first = died_at
                    .iter()
                    .flatten()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                return finish(Some(first), line_death, state, n_jumps, cp_states);
            }
            if !alive[0] && !alive[1] {
                return finish(None, line_death, state, n_jumps, cp_states);
            }
        }

        if t_jump < horizon {
            // Apply the claim at the exact event time.
            let sel: f64 = rng.random::<f64>() * lambda;
            let stream: usize = if sel < params.lambda1 {
                0
            } else if sel < params.lambda1 + params.lambda2 {
                1
            } else {
                2
            };
            let mut claim = [0.0, 0.0];
            match stream {
                0 => claim[0] = params.claim1.sample(rng),
                1 => claim[1] = params.claim2.sample(rng),
                _ => {
                    claim[0] = params.claim1.sample(rng);
                    claim[1] = params.claim2.sample(rng);
                }
            }
            let mut died = false;
            for i in 0..2 {
                if alive[i] && claim[i] > 0.0 {
                    state[i] -= claim[i];
                    if state[i] <= 0.0 {
                        alive[i] = false;
                        line_death[i] = Some(t_jump);
                        died = true;
                    }
                }
            }
            n_jumps[stream] += 1;
            if let Some(log) = events.as_deref_mut() {
                log.push(JumpEvent {
                    time: t_jump,
                    stream: stream as u8,
                    claim,
                    state_after: state,
                });
            }
            if died && stop_at_first {
                return finish(Some(t_jump), line_death, state, n_jumps, cp_states);
            }
        }
    }

    finish(None, line_death, state, n_jumps, cp_states)
}

fn outcome_from_raw(raw: RawPath) -> PathOutcome {
    PathOutcome {
        ruined: raw.first_death.is_some(),
        ruin_time: raw.first_death,
        final_state: raw.final_state,
        n_jumps: raw.n_jumps,
    }
}

/// Simulate one trajectory on [start, horizon], stopping at the minimum
/// ruin time (first instant either line is at or below zero).
pub fn sample_path<R: Rng + ?Sized>(
    params: &ModelParams,
    x0: [f64; 2],
    start: f64,
    horizon: f64,
    dt_max: f64,
    rng: &mut R,
) -> Result<PathOutcome> {
    check_path_preconditions(params, x0, start, horizon, dt_max)?;
    let raw = run_path(params, x0, start, horizon, dt_max, rng, &[], true, None);
    Ok(outcome_from_raw(raw))
}

/// As `sample_path`, also returning the applied claim events.
pub fn sample_path_logged<R: Rng + ?Sized>(
    params: &ModelParams,
    x0: [f64; 2],
    start: f64,
    horizon: f64,
    dt_max: f64,
    rng: &mut R,
) -> Result<(PathOutcome, Vec<JumpEvent>)> {
    check_path_preconditions(params, x0, start, horizon, dt_max)?;
    let mut events = Vec::new();
    let raw = run_path(
        params,
        x0,
        start,
        horizon,
        dt_max,
        rng,
        &[],
        true,
        Some(&mut events),
    );
    Ok((outcome_from_raw(raw), events))
}

/// Simulate one trajectory tracking each line to the horizon regardless
/// of the other line's ruin.
pub fn sample_path_lines<R: Rng + ?Sized>(
    params: &ModelParams,
    x0: [f64; 2],
    start: f64,
    horizon: f64,
    dt_max: f64,
    rng: &mut R,
) -> Result<LineOutcomes> {
    check_path_preconditions(params, x0, start, horizon, dt_max)?;
    let raw = run_path(params, x0, start, horizon, dt_max, rng, &[], false, None);
    Ok(LineOutcomes {
        line_ruined: [raw.line_death[0].is_some(), raw.line_death[1].is_some()],
    })
}

/// Estimate the finite-horizon minimum survival probability.
///
/// Paths are independent and aggregated by an integer count, so the
/// result is bit-identical for a fixed (seed, n_paths) regardless of the
/// number of worker threads.
pub fn estimate_survival(
    params: &ModelParams,
    x0: [f64; 2],
    start: f64,
    horizon: f64,
    n_paths: u64,
    dt_max: f64,
    seed: u64,
) -> Result<McEstimate> {
    check_path_preconditions(params, x0, start, horizon, dt_max)?;
    if n_paths == 0 {
        return Err(Error::Domain("n_paths must be >= 1".into()));
    }
    let survivors: u64 = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let raw = run_path(params, x0, start, horizon, dt_max, &mut rng, &[], true, None);
            u64::from(raw.first_death.is_none())
        })
        .sum();
    let p_hat = survivors as f64 / n_paths as f64;
    Ok(McEstimate {
        p_hat,
        std_err: (p_hat * (1.0 - p_hat) / n_paths as f64).sqrt(),
        n_paths,
        seed,
    })
}

/// Estimate the ultimate minimum survival probability by horizon
/// truncation at `t_cut`.
///
/// Survival is nonincreasing in the horizon, so the returned estimate is
/// an upper bound (up to Monte Carlo noise) on the ultimate value; rerun
/// with doubled `t_cut` to confirm the truncation error is below the
/// statistical resolution. Requires a positive net profit per line
/// (premium rate above the expected claim outflow), otherwise the limit
/// is identically zero and truncation is meaningless.
pub fn estimate_ultimate_survival(
    params: &ModelParams,
    x0: [f64; 2],
    t_cut: f64,
    n_paths: u64,
    dt_max: f64,
    seed: u64,
) -> Result<McEstimate> {
    params.require_valid()?;
    for i in 0..2 {
        if !(params.premium(i) > params.claim_drain(i)) {
            return Err(Error::Domain(format!(
                "net profit condition violated on line {}: premium {} <= expected claim outflow {}",
                i + 1,
                params.premium(i),
                params.claim_drain(i)
            )));
        }
    }
    estimate_survival(params, x0, 0.0, t_cut, n_paths, dt_max, seed)
}

/// Empirical intensity of the common-shock jump measure: mean count of
/// claim pairs landing in `region` during (0, t], over `n_reps`
/// replications, with its standard error. Requires the single-stream
/// configuration (both per-line intensities zero).
pub fn empirical_jump_measure(
    params: &ModelParams,
    t: f64,
    region: Rect,
    n_reps: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    params.require_valid()?;
    if params.lambda1 != 0.0 || params.lambda2 != 0.0 {
        return Err(Error::Domain(
            "jump-measure check requires lambda1 = lambda2 = 0 (single common stream)".into(),
        ));
    }
    if !(t > 0.0) {
        return Err(Error::Domain("t must be > 0".into()));
    }
    if n_reps == 0 {
        return Err(Error::Domain("n_reps must be >= 1".into()));
    }
    let counts: Vec<u64> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = path_rng(seed, r);
            let mut count = 0u64;
            if params.lambda3 > 0.0 {
                let mut tau = 0.0;
                loop {
                    let u: f64 = rng.random();
                    tau += -(1.0 - u).ln() / params.lambda3;
                    if tau > t {
                        break;
                    }
                    let z1 = params.claim1.sample(&mut rng);
                    let z2 = params.claim2.sample(&mut rng);
                    if region.contains(z1, z2) {
                        count += 1;
                    }
                }
            }
            count
        })
        .collect();
    let n = n_reps as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    let var = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Check the constant-mean property of the stopped survival process: at
/// each checkpoint, the empirical mean of `phi(t, R(t))` over paths (zero
/// on paths already ruined) is compared with `phi(start, x0)`.
#[allow(clippy::too_many_arguments)]
pub fn martingale_check<F>(
    params: &ModelParams,
    x0: [f64; 2],
    start: f64,
    horizon: f64,
    checkpoints: &[f64],
    n_paths: u64,
    seed: u64,
    phi: F,
) -> Result<MartingaleReport>
where
    F: Fn(f64, [f64; 2]) -> f64 + Sync,
{
    check_path_preconditions(params, x0, start, horizon, dt_max_for_martingale(horizon, start))?;
    if n_paths == 0 {
        return Err(Error::Domain("n_paths must be >= 1".into()));
    }
    let mut cps = checkpoints.to_vec();
    cps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if cps.iter().any(|&c| c < start || c >= horizon) {
        return Err(Error::Domain(
            "checkpoints must lie in [start, horizon)".into(),
        ));
    }
    let dt_max = dt_max_for_martingale(horizon, start);
    let per_path: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let raw = run_path(params, x0, start, horizon, dt_max, &mut rng, &cps, true, None);
            raw.checkpoint_states
                .iter()
                .enumerate()
                .map(|(j, st)| match st {
                    Some(s) => phi(cps[j], *s),
                    None => 0.0,
                })
                .collect()
        })
        .collect();

    let n = n_paths as f64;
    let reference = phi(start, x0);
    let mut means = vec![0.0; cps.len()];
    let mut std_errs = vec![0.0; cps.len()];
    for j in 0..cps.len() {
        let sum: f64 = per_path.iter().map(|v| v[j]).sum();
        let mean = sum / n;
        let var: f64 = per_path
            .iter()
            .map(|v| {
                let d = v[j] - mean;
                d * d
            })
            .sum::<f64>()
            / (n - 1.0).max(1.0);
        means[j] = mean;
        std_errs[j] = (var / n).sqrt();
    }
    let deviations = means.iter().map(|m| (m - reference).abs()).collect();
    Ok(MartingaleReport {
        reference,
        checkpoint_means: means,
        deviations,
        std_errs,
    })
}

fn dt_max_for_martingale(horizon: f64, start: f64) -> f64 {
    ((horizon - start) / 100.0).max(1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{diffusion_survival_product, diffusion_ultimate_survival_product};
    use crate::model::ClaimDist;

    fn diffusion_only(c: f64, sigma: f64) -> ModelParams {
        ModelParams {
            c1: c,
            c2: c,
            sigma1: sigma,
            sigma2: sigma,
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            claim1: ClaimDist::Exponential { rate: 1.0 },
            claim2: ClaimDist::Exponential { rate: 1.0 },
        }
    }

    fn with_claims() -> ModelParams {
        ModelParams {
            c1: 2.0,
            c2: 2.0,
            sigma1: 1.0,
            sigma2: 1.0,
            lambda1: 0.3,
            lambda2: 0.3,
            lambda3: 0.2,
            claim1: ClaimDist::Exponential { rate: 1.0 },
            claim2: ClaimDist::Exponential { rate: 1.0 },
        }
    }

    #[test]
    fn zero_reserve_component_ruins_immediately() {
        let params = diffusion_only(1.0, 1.0);
        let mut rng = path_rng(1, 0);
        let out = sample_path(&params, [0.0, 5.0], 0.25, 1.25, 0.01, &mut rng).unwrap();
        assert!(out.ruined);
        assert_eq!(out.ruin_time, Some(0.25));
        assert_eq!(out.final_state, [0.0, 5.0]);
    }

    #[test]
    fn empty_interval_rejected() {
        let params = diffusion_only(1.0, 1.0);
        let mut rng = path_rng(1, 0);
        let err = sample_path(&params, [1.0, 1.0], 1.0, 1.0, 0.01, &mut rng);
        assert!(err.is_err());
    }

    #[test]
    fn negative_reserve_rejected() {
        let params = diffusion_only(1.0, 1.0);
        let mut rng = path_rng(1, 0);
        assert!(sample_path(&params, [-0.1, 1.0], 0.0, 1.0, 0.01, &mut rng).is_err());
    }

    #[test]
    fn far_from_boundary_never_ruins() {
        // Per-component crossing probability < 1e-9 at this distance.
        let params = diffusion_only(1.0, 1.0);
        for i in 0..500 {
            let mut rng = path_rng(99, i);
            let out = sample_path(&params, [50.0, 50.0], 0.0, 1.0, 0.05, &mut rng).unwrap();
            assert!(!out.ruined, "path {i} ruined");
            assert!(out.final_state[0] > 0.0 && out.final_state[1] > 0.0);
        }
    }

    #[test]
    fn ruin_outcome_invariants() {
        let params = with_claims();
        for i in 0..2000 {
            let mut rng = path_rng(5, i);
            let out = sample_path(&params, [0.8, 0.8], 0.0, 2.0, 0.05, &mut rng).unwrap();
            if out.ruined {
                let rt = out.ruin_time.unwrap();
                assert!((0.0..=2.0).contains(&rt));
                assert!(out.final_state[0] <= 0.0 || out.final_state[1] <= 0.0);
            } else {
                assert!(out.final_state[0] > 0.0 && out.final_state[1] > 0.0);
                assert!(out.ruin_time.is_none());
            }
        }
    }

    #[test]
    fn survival_matches_reflection_oracle() {
        // Frozen oracle: q(2,1,1,1)^2 = 0.991507 (reflection formula per
        // line, product by independence).
        let params = diffusion_only(1.0, 1.0);
        let est = estimate_survival(&params, [2.0, 2.0], 0.0, 1.0, 50_000, 0.01, 42).unwrap();
        let oracle = diffusion_survival_product(&params, [2.0, 2.0], 1.0);
        assert!((oracle - 0.991_506_570_840_567_7).abs() < 1e-12);
        assert!(
            (est.p_hat - oracle).abs() < 3.0 * est.std_err,
            "p_hat={} oracle={oracle} se={}",
            est.p_hat,
            est.std_err
        );
    }

    #[test]
    fn survival_zero_on_axis_exactly() {
        let params = diffusion_only(1.0, 1.0);
        let est = estimate_survival(&params, [0.0, 3.0], 0.0, 1.0, 500, 0.01, 3).unwrap();
        assert_eq!(est.p_hat, 0.0);
    }

    #[test]
    fn survival_one_for_huge_reserve() {
        let params = with_claims();
        let est = estimate_survival(&params, [1e6, 1e6], 0.0, 1.0, 2_000, 0.05, 11).unwrap();
        assert_eq!(est.p_hat, 1.0);
    }

    #[test]
    fn std_err_formula_holds() {
        let params = with_claims();
        let est = estimate_survival(&params, [1.0, 1.0], 0.0, 1.0, 4_000, 0.05, 17).unwrap();
        let expect = (est.p_hat * (1.0 - est.p_hat) / est.n_paths as f64).sqrt();
        assert_eq!(est.std_err, expect);
        assert!((0.0..=1.0).contains(&est.p_hat));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let params = with_claims();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                estimate_survival(&params, [1.5, 1.5], 0.0, 1.0, 20_000, 0.02, 7).unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.p_hat.to_bits(), b.p_hat.to_bits());
    }

    #[test]
    fn monotone_in_reserve_under_common_random_numbers() {
        let params = with_claims();
        let lo = estimate_survival(&params, [1.0, 1.0], 0.0, 1.0, 20_000, 0.02, 123).unwrap();
        let hi = estimate_survival(&params, [1.5, 1.5], 0.0, 1.0, 20_000, 0.02, 123).unwrap();
        assert!(lo.p_hat <= hi.p_hat, "{} > {}", lo.p_hat, hi.p_hat);
    }

    #[test]
    fn monotone_in_horizon_under_common_random_numbers() {
        let params = with_claims();
        let short = estimate_survival(&params, [1.0, 1.0], 0.0, 0.5, 20_000, 0.02, 321).unwrap();
        let long = estimate_survival(&params, [1.0, 1.0], 0.0, 1.0, 20_000, 0.02, 321).unwrap();
        assert!(short.p_hat >= long.p_hat, "{} < {}", short.p_hat, long.p_hat);
    }

    #[test]
    fn minimum_dominated_by_marginals() {
        let params = with_claims();
        let n = 20_000u64;
        let seed = 55;
        let mut min_surv = 0u64;
        let mut line_surv = [0u64; 2];
        for i in 0..n {
            let mut rng = path_rng(seed, i);
            let lines = sample_path_lines(&params, [1.0, 1.2], 0.0, 1.0, 0.02, &mut rng).unwrap();
            if !lines.any_ruined() {
                min_surv += 1;
            }
            for k in 0..2 {
                if !lines.line_ruined[k] {
                    line_surv[k] += 1;
                }
            }
        }
        assert!(min_surv <= line_surv[0]);
        assert!(min_surv <= line_surv[1]);
    }

    #[test]
    fn minimum_mode_agrees_with_line_tracking() {
        let params = with_claims();
        for i in 0..500 {
            let mut rng_a = path_rng(8, i);
            let mut rng_b = path_rng(8, i);
            let min_out = sample_path(&params, [1.0, 1.0], 0.0, 1.0, 0.05, &mut rng_a).unwrap();
            let lines = sample_path_lines(&params, [1.0, 1.0], 0.0, 1.0, 0.05, &mut rng_b).unwrap();
            assert_eq!(min_out.ruined, lines.any_ruined(), "path {i}");
        }
    }

    #[test]
    fn refinement_stability_in_dt() {
        // The bridge correction makes the ruin indicator unbiased in
        // dt_max; halving it only changes which random numbers are used.
        let params = diffusion_only(1.0, 1.0);
        let coarse = estimate_survival(&params, [1.0, 1.0], 0.0, 1.0, 30_000, 0.02, 77).unwrap();
        let fine = estimate_survival(&params, [1.0, 1.0], 0.0, 1.0, 30_000, 0.01, 77).unwrap();
        let combined = (coarse.std_err.powi(2) + fine.std_err.powi(2)).sqrt();
        assert!(
            (coarse.p_hat - fine.p_hat).abs() < 3.0 * combined,
            "coarse={} fine={}",
            coarse.p_hat,
            fine.p_hat
        );
    }

    #[test]
    fn ultimate_requires_net_profit() {
        let mut params = with_claims();
        params.c1 = 0.4; // drain on line 1 is (0.3 + 0.2) * 1.0 = 0.5
        let err = estimate_ultimate_survival(&params, [1.0, 1.0], 50.0, 100, 0.1, 1);
        assert!(err.is_err());
    }

    #[test]
    fn ultimate_matches_diffusion_oracle() {
        let params = diffusion_only(1.0, 1.0);
        let est = estimate_ultimate_survival(&params, [1.0, 2.0], 200.0, 40_000, 0.25, 9).unwrap();
        let oracle = diffusion_ultimate_survival_product(&params, [1.0, 2.0]);
        assert!((oracle - 0.848_827_830_051_319_5).abs() < 1e-12);
        assert!(
            (est.p_hat - oracle).abs() < 3.0 * est.std_err + 0.005,
            "p_hat={} oracle={oracle}",
            est.p_hat
        );
    }

    #[test]
    fn ultimate_zero_on_axis() {
        let params = diffusion_only(1.0, 1.0);
        let est = estimate_ultimate_survival(&params, [0.0, 2.0], 50.0, 200, 0.25, 4).unwrap();
        assert_eq!(est.p_hat, 0.0);
    }

    #[test]
    fn ultimate_near_one_for_huge_reserve() {
        let params = with_claims();
        let est =
            estimate_ultimate_survival(&params, [1e6, 1e6], 50.0, 2_000, 0.5, 13).unwrap();
        assert_eq!(est.p_hat, 1.0);
    }

    #[test]
    fn jump_measure_full_space() {
        let mut params = diffusion_only(1.0, 1.0);
        params.lambda3 = 2.0;
        let region = Rect {
            x1: (0.0, f64::INFINITY),
            x2: (0.0, f64::INFINITY),
        };
        let (mean, se) = empirical_jump_measure(&params, 3.0, region, 10_000, 21).unwrap();
        assert!((mean - 6.0).abs() < 4.0 * se, "mean={mean} se={se}");
    }

    #[test]
    fn jump_measure_zero_area_region() {
        let mut params = diffusion_only(1.0, 1.0);
        params.lambda3 = 2.0;
        let region = Rect {
            x1: (1.0, 1.0),
            x2: (0.0, f64::INFINITY),
        };
        let (mean, _) = empirical_jump_measure(&params, 3.0, region, 1_000, 22).unwrap();
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn jump_measure_unit_box_product_cdf() {
        // lambda t F1(1) F2(1) = (1 - 1/e)^2 for Exp(1) x Exp(1), t=1.
        let mut params = diffusion_only(1.0, 1.0);
        params.lambda3 = 1.0;
        let region = Rect {
            x1: (0.0, 1.0),
            x2: (0.0, 1.0),
        };
        let (mean, se) = empirical_jump_measure(&params, 1.0, region, 10_000, 23).unwrap();
        let expect = 0.399_576_400_893_728;
        assert!((mean - expect).abs() < 4.0 * se, "mean={mean} se={se}");
    }

    #[test]
    fn jump_measure_requires_single_stream() {
        let params = with_claims();
        let region = Rect {
            x1: (0.0, 1.0),
            x2: (0.0, 1.0),
        };
        assert!(empirical_jump_measure(&params, 1.0, region, 10, 1).is_err());
    }

    #[test]
    fn martingale_identity_checkpoint() {
        let params = diffusion_only(1.0, 1.0);
        let phi = |t: f64, x: [f64; 2]| diffusion_survival_product(&params, x, 1.0 - t);
        let report =
            martingale_check(&params, [2.0, 2.0], 0.0, 1.0, &[0.0], 2_000, 31, phi).unwrap();
        assert!(report.max_deviation() < 1e-12);
    }

    #[test]
    fn martingale_holds_for_true_survival() {
        let params = diffusion_only(1.0, 1.0);
        let phi = |t: f64, x: [f64; 2]| diffusion_survival_product(&params, x, 1.0 - t);
        let report = martingale_check(
            &params,
            [1.0, 1.0],
            0.0,
            1.0,
            &[0.2, 0.4, 0.6, 0.8],
            30_000,
            33,
            phi,
        )
        .unwrap();
        for (dev, se) in report.deviations.iter().zip(&report.std_errs) {
            assert!(dev <= &(3.0 * se), "dev={dev} se={se}");
        }
    }

    #[test]
    fn martingale_rejects_constant_candidate() {
        // Constant 1 is not a survival probability for a ruinous start.
        let params = diffusion_only(1.0, 1.0);
        let report = martingale_check(
            &params,
            [1.0, 1.0],
            0.0,
            1.0,
            &[0.5, 0.8],
            10_000,
            35,
            |_, _| 1.0,
        )
        .unwrap();
        let max_se = report.std_errs.iter().cloned().fold(0.0, f64::max);
        assert!(report.max_deviation() > 5.0 * max_se);
    }

    #[test]
    fn logged_events_are_consistent() {
        let params = with_claims();
        let mut rng = path_rng(44, 0);
        let (out, events) =
            sample_path_logged(&params, [5.0, 5.0], 0.0, 2.0, 0.05, &mut rng).unwrap();
        assert_eq!(out.n_jumps.iter().sum::<u64>(), events.len() as u64);
        let mut prev = 0.0;
        for ev in &events {
            assert!(ev.time >= prev && ev.time < 2.0);
            assert!(ev.claim[0] >= 0.0 && ev.claim[1] >= 0.0);
            match ev.stream {
                0 => assert_eq!(ev.claim[1], 0.0),
                1 => assert_eq!(ev.claim[0], 0.0),
                2 => assert!(ev.claim[0] > 0.0 && ev.claim[1] > 0.0),
                _ => panic!("bad stream"),
            }
            prev = ev.time;
        }
    }
}
