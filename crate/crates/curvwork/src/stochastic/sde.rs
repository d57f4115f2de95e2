//! Trajectory-level machinery: the Heun (Stratonovich-consistent)
//! integrator, reproducible Monte Carlo ensembles, Brownian-bridge protocol
//! sampling with pinned endpoints, the Jarzynski estimator, and gauge-shift
//! experiments.

use ndarray::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{CurvworkError, Result};
use crate::cycles::Protocol;
use crate::geometry::{free_energy, ControlModel};

use super::{
    derived_seed, BoundaryPolicy, ConnectionField, ControlSde, GaugePotential, NoiseSpec,
};

use std::f64::consts::PI;

/// Chunk size for parallel ensemble execution; results are written by
/// trajectory index, so the partitioning never affects the output.
const ENSEMBLE_CHUNK: usize = 512;

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// One realized path of the control diffusion with its accumulated
/// Stratonovich work.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkTrajectory {
    /// Sample times `t_0 = 0 … t_N = t_final`.
    pub times: Vec<f64>,
    /// Path samples, row `k` = `λ(t_k)`.
    pub path: Array2<f64>,
    /// Accumulated work at each sample time; `work[0] = 0`.
    pub work: Vec<f64>,
    /// The seed that produced this trajectory.
    pub seed: u64,
}

impl WorkTrajectory {
    pub fn final_work(&self) -> f64 {
        *self.work.last().expect("trajectory has at least the initial sample")
    }

    pub fn final_lambda(&self) -> ArrayView1<'_, f64> {
        self.path.row(self.path.nrows() - 1)
    }
}

fn check_inputs(
    sde: &ControlSde,
    connection: &ConnectionField,
    initial: &[f64],
    t_final: f64,
    dt: f64,
) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(CurvworkError::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if !(t_final >= dt) {
        return Err(CurvworkError::InvalidInput(format!(
            "t_final = {t_final} must be at least dt = {dt}"
        )));
    }
    if initial.len() != sde.dim || connection.dim() != sde.dim {
        return Err(CurvworkError::DimensionMismatch {
            context: format!(
                "initial point dim {}, connection dim {}, control space dim {}",
                initial.len(),
                connection.dim(),
                sde.dim
            ),
        });
    }
    Ok(((t_final / dt).round() as usize).max(1))
}

fn reflect_into(x: f64, lo: f64, hi: f64) -> f64 {
    let range = hi - lo;
    let mut y = (x - lo) % (2.0 * range);
    if y < 0.0 {
        y += 2.0 * range;
    }
    if y > range {
        y = 2.0 * range - y;
    }
    lo + y
}

/// Core Heun loop. `next_noise` fills the Wiener increments `ΔW_j` for the
/// given step (already carrying the `√dt` scale); the integrator applies the
/// noise matrix `σ`. Returns the final `(W, λ)` and optionally records the
/// full path.
fn heun_core<F>(
    sde: &ControlSde,
    connection: &ConnectionField,
    initial: &[f64],
    n_steps: usize,
    dt: f64,
    mut next_noise: F,
    record: Option<(&mut Vec<f64>, &mut Array2<f64>, &mut Vec<f64>)>,
) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(usize, &mut [f64]),
{
    let dim = sde.dim;
    let sigma = sde.noise.sigma(dim)?;
    let noiseless = sde.noise.is_zero();
    let mut lam = initial.to_vec();
    let mut lam_next = vec![0.0; dim];
    let mut v0 = vec![0.0; dim];
    let mut v1 = vec![0.0; dim];
    let mut dwiener = vec![0.0; dim];
    let mut gnoise = vec![0.0; dim];
    let mut mid = vec![0.0; dim];
    let mut a = vec![0.0; dim];
    let mut w = 0.0;

    let mut recorder = record;
    if let Some((times, path, works)) = recorder.as_mut() {
        times.push(0.0);
        path.row_mut(0).assign(&ArrayView1::from(&lam[..]));
        works.push(0.0);
    }

    for step in 0..n_steps {
        let t = step as f64 * dt;
        sde.drift.eval_into(t, &mut v0);
        if noiseless {
            gnoise.fill(0.0);
        } else {
            next_noise(step, &mut dwiener);
            for i in 0..dim {
                let mut acc = 0.0;
                for j in 0..dim {
                    acc += sigma[[i, j]] * dwiener[j];
                }
                gnoise[i] = acc;
            }
        }
        // Predictor–corrector on the drift (the drift fields here carry no
        // λ dependence, so the corrector stage reduces to the trapezoid in
        // time); the constant noise matrix needs no Stratonovich correction.
        sde.drift.eval_into(t + dt, &mut v1);
        for i in 0..dim {
            lam_next[i] = lam[i] + 0.5 * (v0[i] + v1[i]) * dt + gnoise[i];
        }
        if let Some(domain) = &sde.domain {
            for i in 0..dim {
                if lam_next[i] < domain.lo[i] || lam_next[i] > domain.hi[i] {
                    match sde.boundary {
                        BoundaryPolicy::Reflect => {
                            lam_next[i] = reflect_into(lam_next[i], domain.lo[i], domain.hi[i]);
                        }
                        BoundaryPolicy::Reject => {
                            return Err(CurvworkError::DomainExit {
                                step,
                                coordinate: i,
                                value: lam_next[i],
                            });
                        }
                    }
                }
            }
        }
        for i in 0..dim {
            mid[i] = 0.5 * (lam[i] + lam_next[i]);
        }
        connection.eval_into(&mid, &mut a)?;
        for i in 0..dim {
            w += a[i] * (lam_next[i] - lam[i]);
        }
        lam.copy_from_slice(&lam_next);
        if let Some((times, path, works)) = recorder.as_mut() {
            times.push((step + 1) as f64 * dt);
            path.row_mut(step + 1).assign(&ArrayView1::from(&lam[..]));
            works.push(w);
        }
    }
    Ok((w, lam))
}

/// Simulate one work trajectory: Heun predictor–corrector for `λ`, work
/// increment `A((λ_n + λ_{n+1})/2)·Δλ` with the same Wiener increments
/// driving both stages.
pub fn simulate_trajectory(
    sde: &ControlSde,
    connection: &ConnectionField,
    initial: &[f64],
    t_final: f64,
    dt: f64,
    seed: u64,
) -> Result<WorkTrajectory> {
    let n_steps = check_inputs(sde, connection, initial, t_final, dt)?;
    let dt = t_final / n_steps as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_dt = dt.sqrt();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut path = Array2::zeros((n_steps + 1, sde.dim));
    let mut works = Vec::with_capacity(n_steps + 1);
    heun_core(
        sde,
        connection,
        initial,
        n_steps,
        dt,
        |_, buf| {
            for x in buf.iter_mut() {
                *x = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            }
        },
        Some((&mut times, &mut path, &mut works)),
    )?;
    Ok(WorkTrajectory { times, path, work: works, seed })
}

/// Simulate with caller-supplied Wiener increments (rows = steps). Useful
/// for common-random-number comparisons and convergence studies: coarse
/// resolutions of the same Brownian path are obtained by summing fine
/// increments.
pub fn simulate_with_increments(
    sde: &ControlSde,
    connection: &ConnectionField,
    initial: &[f64],
    dt: f64,
    increments: ArrayView2<'_, f64>,
) -> Result<WorkTrajectory> {
    let n_steps = increments.nrows();
    if n_steps == 0 || increments.ncols() != sde.dim {
        return Err(CurvworkError::DimensionMismatch {
            context: format!(
                "increment array is {}×{}, need n_steps×{}",
                n_steps,
                increments.ncols(),
                sde.dim
            ),
        });
    }
    check_inputs(sde, connection, initial, n_steps as f64 * dt, dt)?;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut path = Array2::zeros((n_steps + 1, sde.dim));
    let mut works = Vec::with_capacity(n_steps + 1);
    heun_core(
        sde,
        connection,
        initial,
        n_steps,
        dt,
        |step, buf| {
            for (b, x) in buf.iter_mut().zip(increments.row(step)) {
                *b = *x;
            }
        },
        Some((&mut times, &mut path, &mut works)),
    )?;
    Ok(WorkTrajectory { times, path, work: works, seed: 0 })
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

/// Equal-width histogram of final work values.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkHistogram {
    /// Bin edges, length `bins + 1`.
    pub edges: Vec<f64>,
    /// Counts per bin; out-of-range samples are clamped into the end bins.
    pub counts: Vec<u64>,
}

/// Monte Carlo work statistics over an ensemble of trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkEnsemble {
    /// Final work of trajectory `i` (seeded from `(base_seed, i)`).
    pub finals: Vec<f64>,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Standardized third moment `m₃ / m₂^{3/2}`.
    pub skewness: f64,
    /// Standard error of the mean.
    pub std_error: f64,
    pub histogram: WorkHistogram,
}

fn summarize(finals: Vec<f64>, bins: usize) -> WorkEnsemble {
    let n = finals.len();
    let nf = n as f64;
    let mean = finals.iter().sum::<f64>() / nf;
    let (mut m2, mut m3) = (0.0, 0.0);
    for x in &finals {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    let variance = if n > 1 { m2 / (nf - 1.0) } else { 0.0 };
    let m2n = m2 / nf;
    let skewness = if m2n > 0.0 { (m3 / nf) / m2n.powf(1.5) } else { 0.0 };
    let std_error = (variance / nf).sqrt();

    let sd = variance.sqrt();
    let (lo, hi) = if sd > 0.0 {
        (mean - 4.0 * sd, mean + 4.0 * sd)
    } else {
        (mean - 0.5, mean + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let mut edges = Vec::with_capacity(bins + 1);
    for k in 0..=bins {
        edges.push(lo + k as f64 * width);
    }
    let mut counts = vec![0_u64; bins];
    for x in &finals {
        let idx = (((x - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[idx] += 1;
    }
    WorkEnsemble {
        finals,
        mean,
        variance,
        skewness,
        std_error,
        histogram: WorkHistogram { edges, counts },
    }
}

/// Run `n` independent trajectories with per-trajectory seeds derived from
/// `(base_seed, index)` and summarize the final-work statistics. Identical
/// inputs give bitwise-identical results, independent of thread count.
pub fn ensemble(
    sde: &ControlSde,
    connection: &ConnectionField,
    initial: &[f64],
    t_final: f64,
    dt: f64,
    n: usize,
    base_seed: u64,
) -> Result<WorkEnsemble> {
    if n == 0 {
        return Err(CurvworkError::InvalidInput("ensemble needs n ≥ 1".into()));
    }
    let n_steps = check_inputs(sde, connection, initial, t_final, dt)?;
    let dt = t_final / n_steps as f64;
    let mut finals = vec![0.0_f64; n];
    let sqrt_dt = dt.sqrt();
    finals
        .par_chunks_mut(ENSEMBLE_CHUNK)
        .enumerate()
        .try_for_each(|(chunk_idx, chunk)| -> Result<()> {
            for (offset, slot) in chunk.iter_mut().enumerate() {
                let index = (chunk_idx * ENSEMBLE_CHUNK + offset) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(base_seed, index));
                let (w, _) = heun_core(
                    sde,
                    connection,
                    initial,
                    n_steps,
                    dt,
                    |_, buf| {
                        for x in buf.iter_mut() {
                            *x = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
                        }
                    },
                    None,
                )?;
                *slot = w;
            }
            Ok(())
        })?;
    Ok(summarize(finals, 41))
}

// ---------------------------------------------------------------------------
// Brownian-bridge protocol sampling
// ---------------------------------------------------------------------------

/// Work along a noisy protocol with pinned endpoints:
/// `λ(t) = λ_det(t) + σ(B_t − (t/T)·B_T)` where `λ_det` follows the
/// protocol at uniform angular rate and `B` is a standard Brownian path.
/// Endpoint conditioning makes every sample start at `λ_det(0)` and end at
/// `λ_det(T)` exactly, so free-energy targets are well defined per sample.
fn bridge_core(
    protocol: &Protocol,
    noise: &NoiseSpec,
    connections: &[&ConnectionField],
    t_final: f64,
    dt: f64,
    seed: u64,
    mut record: Option<(&mut Vec<f64>, &mut Array2<f64>, &mut Vec<f64>)>,
) -> Result<Vec<f64>> {
    let dim = protocol.dim();
    for c in connections {
        if c.dim() != dim {
            return Err(CurvworkError::DimensionMismatch {
                context: format!("connection dim {} vs protocol dim {dim}", c.dim()),
            });
        }
    }
    if !(dt > 0.0) || !(t_final >= dt) {
        return Err(CurvworkError::InvalidInput(format!(
            "need 0 < dt ≤ t_final, got dt = {dt}, t_final = {t_final}"
        )));
    }
    let n_steps = ((t_final / dt).round() as usize).max(1);
    let dt = t_final / n_steps as f64;
    let sigma = noise.sigma(dim)?;
    let sqrt_dt = dt.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Draw all Wiener increments up front; the bridge needs the endpoint sum.
    let mut incr = Array2::<f64>::zeros((n_steps, dim));
    if !noise.is_zero() {
        for mut row in incr.rows_mut() {
            for x in row.iter_mut() {
                *x = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let mut b_total = vec![0.0; dim];
    for row in incr.rows() {
        for (acc, x) in b_total.iter_mut().zip(row) {
            *acc += x;
        }
    }

    let mut works = vec![0.0; connections.len()];
    let mut b = vec![0.0; dim];
    let mut lam = protocol.point(0.0);
    let mut mid = vec![0.0; dim];
    let mut a = vec![0.0; dim];
    if let Some((times, path, wrec)) = record.as_mut() {
        times.push(0.0);
        path.row_mut(0).assign(&ArrayView1::from(&lam[..]));
        wrec.push(0.0);
    }
    for step in 0..n_steps {
        for (acc, x) in b.iter_mut().zip(incr.row(step)) {
            *acc += x;
        }
        let t1 = (step + 1) as f64 * dt;
        let frac = t1 / t_final;
        let det = protocol.point(2.0 * PI * frac);
        let mut lam_next = vec![0.0; dim];
        for i in 0..dim {
            let mut bridge = 0.0;
            for j in 0..dim {
                bridge += sigma[[i, j]] * (b[j] - frac * b_total[j]);
            }
            lam_next[i] = det[i] + bridge;
        }
        for i in 0..dim {
            mid[i] = 0.5 * (lam[i] + lam_next[i]);
        }
        for (w, conn) in works.iter_mut().zip(connections) {
            conn.eval_into(&mid, &mut a)?;
            for i in 0..dim {
                *w += a[i] * (lam_next[i] - lam[i]);
            }
        }
        lam = lam_next;
        if let Some((times, path, wrec)) = record.as_mut() {
            times.push(t1);
            path.row_mut(step + 1).assign(&ArrayView1::from(&lam[..]));
            wrec.push(works[0]);
        }
    }
    Ok(works)
}

/// One endpoint-pinned noisy realization of a protocol (see
/// [`bridge_ensemble`] for the construction).
pub fn simulate_bridge_trajectory(
    protocol: &Protocol,
    noise: &NoiseSpec,
    connection: &ConnectionField,
    t_final: f64,
    dt: f64,
    seed: u64,
) -> Result<WorkTrajectory> {
    protocol.validate()?;
    let n_steps = ((t_final / dt).round() as usize).max(1);
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut path = Array2::zeros((n_steps + 1, protocol.dim()));
    let mut works = Vec::with_capacity(n_steps + 1);
    bridge_core(
        protocol,
        noise,
        &[connection],
        t_final,
        dt,
        seed,
        Some((&mut times, &mut path, &mut works)),
    )?;
    Ok(WorkTrajectory { times, path, work: works, seed })
}

/// Ensemble of endpoint-pinned noisy protocol realizations.
pub fn bridge_ensemble(
    protocol: &Protocol,
    noise: &NoiseSpec,
    connection: &ConnectionField,
    t_final: f64,
    dt: f64,
    n: usize,
    base_seed: u64,
) -> Result<WorkEnsemble> {
    if n == 0 {
        return Err(CurvworkError::InvalidInput("ensemble needs n ≥ 1".into()));
    }
    protocol.validate()?;
    let mut finals = vec![0.0_f64; n];
    finals
        .par_chunks_mut(ENSEMBLE_CHUNK)
        .enumerate()
        .try_for_each(|(chunk_idx, chunk)| -> Result<()> {
            for (offset, slot) in chunk.iter_mut().enumerate() {
                let index = (chunk_idx * ENSEMBLE_CHUNK + offset) as u64;
                let w = bridge_core(
                    protocol,
                    noise,
                    &[connection],
                    t_final,
                    dt,
                    derived_seed(base_seed, index),
                    None,
                )?;
                *slot = w[0];
            }
            Ok(())
        })?;
    Ok(summarize(finals, 41))
}

// ---------------------------------------------------------------------------
// Jarzynski
// ---------------------------------------------------------------------------

/// Outcome of a Jarzynski comparison `⟨e^{−βW}⟩` vs `e^{−βΔF}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JarzynskiReport {
    pub beta: f64,
    pub delta_f: f64,
    /// Sample mean of `e^{−βW}`.
    pub estimate: f64,
    /// Target `e^{−βΔF}`.
    pub target: f64,
    /// Jackknife standard error of the estimate.
    pub std_error: f64,
    /// `(estimate − target) / std_error`.
    pub z_score: f64,
    pub n: usize,
}

/// Evaluate the Jarzynski estimator on a set of work samples against a
/// free-energy difference, with a jackknife standard error.
pub fn jarzynski_check(work_samples: &[f64], beta: f64, delta_f: f64) -> Result<JarzynskiReport> {
    let n = work_samples.len();
    if n < 2 {
        return Err(CurvworkError::InvalidInput(format!(
            "Jarzynski estimator needs at least 2 samples, got {n}"
        )));
    }
    if !beta.is_finite() || beta < 0.0 {
        return Err(CurvworkError::InvalidInput(format!(
            "inverse temperature must be finite and ≥ 0, got {beta}"
        )));
    }
    let nf = n as f64;
    let x: Vec<f64> = work_samples.iter().map(|w| (-beta * w).exp()).collect();
    let sum: f64 = x.iter().sum();
    let estimate = sum / nf;
    // Jackknife over leave-one-out means.
    let mut jk_mean = 0.0;
    for xi in &x {
        jk_mean += (sum - xi) / (nf - 1.0);
    }
    jk_mean /= nf;
    let mut jk_var = 0.0;
    for xi in &x {
        let d = (sum - xi) / (nf - 1.0) - jk_mean;
        jk_var += d * d;
    }
    let std_error = ((nf - 1.0) / nf * jk_var).sqrt();
    let target = (-beta * delta_f).exp();
    let z_score = if std_error > 0.0 {
        (estimate - target) / std_error
    } else if (estimate - target).abs() < 1e-14 {
        0.0
    } else {
        f64::INFINITY * (estimate - target).signum()
    };
    Ok(JarzynskiReport { beta, delta_f, estimate, target, std_error, z_score, n })
}

/// End-to-end Jarzynski verification for a fixed-temperature (thermal-mode)
/// connection: sample endpoint-pinned bridges of the protocol, compare
/// `⟨e^{−βW}⟩` against `e^{−βΔF}` with `ΔF` from the closed-form free
/// energy at the protocol endpoints (`ΔF = 0` for closed loops).
pub fn jarzynski_bridge_check(
    model: &ControlModel,
    protocol: &Protocol,
    noise: &NoiseSpec,
    t_final: f64,
    dt: f64,
    n: usize,
    base_seed: u64,
) -> Result<(JarzynskiReport, WorkEnsemble)> {
    protocol.validate()?;
    if model.dim() != 2 || protocol.dim() != 2 {
        return Err(CurvworkError::InvalidInput(
            "Jarzynski verification runs on the fixed-temperature (ω, g) chart".into(),
        ));
    }
    let start = protocol.point(0.0);
    let end = protocol.point(2.0 * PI);
    if model.rates_at(&start)?.is_some() {
        return Err(CurvworkError::InvalidInput(
            "Jarzynski needs the thermal-mode connection, whose ΔF is defined by the \
             free energy; the fixed-basis connection has no free-energy target"
                .into(),
        ));
    }
    let beta = model.beta_at(&start)?.expect("thermal model carries β");
    let delta_f = if protocol.is_closed() {
        0.0
    } else {
        free_energy(end[0], end[1], beta)? - free_energy(start[0], start[1], beta)?
    };
    let ens = bridge_ensemble(
        protocol,
        noise,
        &ConnectionField::Model(model.clone()),
        t_final,
        dt,
        n,
        base_seed,
    )?;
    let report = jarzynski_check(&ens.finals, beta, delta_f)?;
    Ok((report, ens))
}

// ---------------------------------------------------------------------------
// Gauge shifts
// ---------------------------------------------------------------------------

/// Result of comparing work statistics under `A → A + ∇φ` with identical
/// noise realizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeShiftReport {
    /// Largest per-trajectory |ΔW| over the closed loop.
    pub closed_max_abs_shift: f64,
    /// The `10·dt` comparison bound for the closed loop.
    pub closed_bound: f64,
    /// `φ(λ_b) − φ(λ_a)` for the open path.
    pub open_expected_shift: f64,
    /// Mean per-trajectory ΔW on the open path.
    pub open_mean_shift: f64,
    /// Largest |ΔW − expected| on the open path.
    pub open_max_deviation: f64,
    pub n: usize,
}

/// Demonstrate gauge covariance of the work statistics: shifting the
/// connection by an exact form leaves closed-loop work unchanged
/// per-trajectory and shifts open-path work deterministically by
/// `φ(end) − φ(start)`. Both members of each pair see the identical
/// realized path.
#[allow(clippy::too_many_arguments)]
pub fn gauge_shift_experiment(
    model: &ControlModel,
    potential: &GaugePotential,
    closed: &Protocol,
    open: &Protocol,
    noise: &NoiseSpec,
    t_final: f64,
    dt: f64,
    n: usize,
    base_seed: u64,
) -> Result<GaugeShiftReport> {
    if n == 0 {
        return Err(CurvworkError::InvalidInput("need n ≥ 1 trajectory pairs".into()));
    }
    closed.validate()?;
    open.validate()?;
    if !closed.is_closed() {
        return Err(CurvworkError::InvalidInput("first protocol must be closed".into()));
    }
    if open.is_closed() {
        return Err(CurvworkError::InvalidInput("second protocol must be open".into()));
    }
    let base = ConnectionField::Model(model.clone());
    let shifted =
        ConnectionField::GaugeShifted { model: model.clone(), potential: *potential };
    let conns: [&ConnectionField; 2] = [&base, &shifted];

    let mut closed_max = 0.0_f64;
    for i in 0..n {
        let w = bridge_core(
            closed,
            noise,
            &conns,
            t_final,
            dt,
            derived_seed(base_seed, i as u64),
            None,
        )?;
        closed_max = closed_max.max((w[1] - w[0]).abs());
    }

    let start = open.point(0.0);
    let end = open.point(2.0 * PI);
    let expected = potential.value(&end) - potential.value(&start);
    let mut open_sum = 0.0;
    let mut open_max_dev = 0.0_f64;
    for i in 0..n {
        let w = bridge_core(
            open,
            noise,
            &conns,
            t_final,
            dt,
            derived_seed(base_seed ^ 0x5bd1_e995, i as u64),
            None,
        )?;
        let shift = w[1] - w[0];
        open_sum += shift;
        open_max_dev = open_max_dev.max((shift - expected).abs());
    }

    Ok(GaugeShiftReport {
        closed_max_abs_shift: closed_max,
        closed_bound: 10.0 * dt,
        open_expected_shift: expected,
        open_mean_shift: open_sum / n as f64,
        open_max_deviation: open_max_dev,
        n,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
