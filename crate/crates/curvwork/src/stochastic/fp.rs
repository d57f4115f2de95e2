//! Explicit finite-volume solver for the joint `(λ, W)` Fokker–Planck
//! equation with isotropic control noise.
//!
//! The diffusive part (control diffusion + work–control correlation + work
//! diffusion) is discretized with directional bonds: the generator's
//! second-order block is `D Σ_i V_i V_i` with `V_i = ∂_i + ∂_W ∘ A_i`, so
//! probability exchanges between cell pairs displaced along the slanted
//! directions `(e_i, A_i e_W)`. Each bond carries the antisymmetric flux
//! `θ κ (P_target − P_center)`; fractional `W`-shifts are split linearly
//! between the two bracketing cells. The scheme is conservative and keeps
//! the density nonnegative under the explicit-step bound. The Ito drift
//! `D ∂_i A_i` of the work coordinate is carried by the bonds themselves;
//! only the mechanical part `A·v` is advected explicitly (donor-cell), as is
//! the control drift `v`.

use crate::error::{CurvworkError, Result};

use super::{ConnectionField, ControlSde};

/// How to initialize the joint density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FpInitial {
    /// All mass in the central `λ` cell at `W = 0` (sharpest benchmark
    /// initial condition).
    DeltaAtCenter,
    /// Isotropic Gaussian in `λ` around the grid center (width in units of
    /// `dx`), with `W` deposited on the sheet `W = A·(λ − center)` by linear
    /// interpolation.
    SheetGaussian { width_cells: f64 },
}

/// Grid and solver options.
#[derive(Debug, Clone, PartialEq)]
pub struct FpOptions {
    /// Cells per `λ` axis.
    pub nl: usize,
    /// `W` cells; `None` picks a commensurate spacing for constant
    /// connections (so the slant shifts are integers) or 96 otherwise.
    pub nw: Option<usize>,
    /// Center of the `λ` box.
    pub lambda_center: [f64; 2],
    /// Half-width of the `λ` box; `None` → `4.5σ_λ + v_max·t`.
    pub lambda_halfwidth: Option<f64>,
    /// `W` half-width in predicted standard deviations.
    pub w_sigmas: f64,
    /// Safety factor on the explicit-step bound.
    pub safety: f64,
    /// Number of trace records (including both endpoints).
    pub record_samples: usize,
}

impl Default for FpOptions {
    fn default() -> Self {
        Self {
            nl: 64,
            nw: None,
            lambda_center: [0.0, 0.0],
            lambda_halfwidth: None,
            w_sigmas: 6.0,
            safety: 0.9,
            record_samples: 33,
        }
    }
}

/// The product grid: `λ` cell centers `x_i = x0 + i·dx`, `y_j = y0 + j·dx`,
/// work centers `w_k = w0 + k·dw`.
#[derive(Debug, Clone, PartialEq)]
pub struct FpGrid {
    pub nl: usize,
    pub nw: usize,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub w0: f64,
    pub dw: f64,
}

impl FpGrid {
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.nl + j) * self.nw + k
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dx * self.dw
    }

    pub fn w_center(&self, k: usize) -> f64 {
        self.w0 + k as f64 * self.dw
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn y_center(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.dx
    }
}

/// Moments of the work marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WMoments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
}

/// A joint density snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDensity {
    pub grid: FpGrid,
    /// Density values in grid index order (`W` fastest).
    pub values: Vec<f64>,
    pub time: f64,
    /// Probability lost through the open `W` boundary up to `time`.
    pub leakage: f64,
}

impl JointDensity {
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, x| m.min(*x))
    }

    /// The work marginal `p(W_k) = Σ_ij P·dx²` (a density in `W`).
    pub fn w_marginal(&self) -> Vec<f64> {
        let g = &self.grid;
        let mut marg = vec![0.0; g.nw];
        for chunk in self.values.chunks_exact(g.nw) {
            for (m, v) in marg.iter_mut().zip(chunk) {
                *m += v;
            }
        }
        let da = g.dx * g.dx;
        for m in &mut marg {
            *m *= da;
        }
        marg
    }

    /// Mean, variance and skewness of the work marginal (normalized by the
    /// surviving mass).
    pub fn w_moments(&self) -> Result<WMoments> {
        let g = &self.grid;
        let marg = self.w_marginal();
        let mass: f64 = marg.iter().sum::<f64>() * g.dw;
        if !(mass > 0.0) {
            return Err(CurvworkError::FpInstability {
                reason: format!("non-positive surviving mass {mass}"),
            });
        }
        let mut mean = 0.0;
        for (k, m) in marg.iter().enumerate() {
            mean += g.w_center(k) * m;
        }
        mean = mean * g.dw / mass;
        let (mut m2, mut m3) = (0.0, 0.0);
        for (k, m) in marg.iter().enumerate() {
            let d = g.w_center(k) - mean;
            m2 += d * d * m;
            m3 += d * d * d * m;
        }
        m2 = m2 * g.dw / mass;
        m3 = m3 * g.dw / mass;
        let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
        Ok(WMoments { mean, variance: m2, skewness })
    }

    /// The `λ` marginal summed over `W` (a density on the plane).
    pub fn lambda_marginal(&self) -> Vec<f64> {
        let g = &self.grid;
        let mut marg = vec![0.0; g.nl * g.nl];
        for (cell, chunk) in self.values.chunks_exact(g.nw).enumerate() {
            marg[cell] = chunk.iter().sum::<f64>() * g.dw;
        }
        marg
    }
}

/// Time series of the solve plus the final density.
#[derive(Debug, Clone, PartialEq)]
pub struct FpTrace {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub leakage: Vec<f64>,
    pub mean_w: Vec<f64>,
    pub var_w: Vec<f64>,
    pub dt: f64,
    pub n_steps: usize,
    pub final_density: JointDensity,
}

/// Slant shift of one bond family in `W` cells: integer part and linear
/// split fraction, with near-integer snapping so commensurate grids carry a
/// single exact shift.
fn slant_split(a: f64, dx: f64, dw: f64) -> (isize, f64) {
    let s_real = a * dx / dw;
    let mut s0 = s_real.floor();
    let mut f = s_real - s0;
    if f < 1e-9 {
        f = 0.0;
    } else if f > 1.0 - 1e-9 {
        s0 += 1.0;
        f = 0.0;
    }
    (s0 as isize, f)
}

/// Pick a `W` spacing commensurate with the slant shifts of a constant
/// connection: the coarsest `dw = max|a|·dx/k` (k ≤ 12) making every
/// `a_i·dx/dw` an integer, falling back to `k = 4`.
fn commensurate_dw(a: &[f64], dx: f64) -> Option<f64> {
    let amax = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if amax == 0.0 {
        return None;
    }
    for k in 1..=12_usize {
        let dw = amax * dx / k as f64;
        let worst = a
            .iter()
            .map(|ai| {
                let s = ai.abs() * dx / dw;
                (s - s.round()).abs()
            })
            .fold(0.0_f64, f64::max);
        if worst < 1e-9 {
            return Some(dw);
        }
    }
    Some(amax * dx / 4.0)
}

/// Solve the joint `(λ, W)` Fokker–Planck equation for an isotropic control
/// diffusion. Conservative explicit stepping: donor-cell advection for the
/// control drift and the mechanical work drift `A·v`, directional-bond
/// fluxes for the full second-order block. The `λ` box is closed
/// (zero-flux); the `W` axis is open at its truncation with the outflow
/// tracked as leakage.
pub fn fokker_planck_solve(
    sde: &ControlSde,
    connection: &ConnectionField,
    options: &FpOptions,
    initial: FpInitial,
    t_final: f64,
) -> Result<FpTrace> {
    if sde.dim != 2 || connection.dim() != 2 {
        return Err(CurvworkError::InvalidInput(
            "the Fokker-Planck path is specialized to two control coordinates".into(),
        ));
    }
    let d = sde.noise.isotropic_level().ok_or_else(|| {
        CurvworkError::InvalidInput(
            "the Fokker-Planck path requires isotropic noise; use the Monte Carlo \
             sampler for anisotropic σ"
                .into(),
        )
    })?;
    if !(d > 0.0) {
        return Err(CurvworkError::InvalidInput(format!(
            "isotropic noise level must be positive for the density solver, got {d}"
        )));
    }
    if !(t_final > 0.0) {
        return Err(CurvworkError::InvalidInput(format!(
            "t_final must be positive, got {t_final}"
        )));
    }
    let nl = options.nl;
    if nl < 8 {
        return Err(CurvworkError::InvalidInput(format!("need at least 8 λ cells, got {nl}")));
    }
    if options.record_samples < 2 {
        return Err(CurvworkError::InvalidInput("need at least 2 trace records".into()));
    }

    // --- λ grid ---------------------------------------------------------
    let sigma_l = (2.0 * d * t_final).sqrt();
    let vmax = sde.drift.max_speed(2, t_final);
    let half = options
        .lambda_halfwidth
        .unwrap_or(4.5 * sigma_l + vmax * t_final);
    if !(half > 0.0) {
        return Err(CurvworkError::InvalidInput(format!(
            "λ half-width must be positive, got {half}"
        )));
    }
    let dx = 2.0 * half / nl as f64;
    let x0 = options.lambda_center[0] - half + 0.5 * dx;
    let y0 = options.lambda_center[1] - half + 0.5 * dx;

    // --- connection on the grid ----------------------------------------
    let xc: Vec<f64> = (0..nl).map(|i| x0 + i as f64 * dx).collect();
    let yc: Vec<f64> = (0..nl).map(|j| y0 + j as f64 * dx).collect();
    let mut a_cell = vec![[0.0_f64; 2]; nl * nl];
    let mut abuf = [0.0_f64; 2];
    for (i, &x) in xc.iter().enumerate() {
        for (j, &y) in yc.iter().enumerate() {
            connection.eval_into(&[x, y], &mut abuf)?;
            a_cell[i * nl + j] = abuf;
        }
    }
    // Face values of the slanting component: x-faces between (i, j) and
    // (i+1, j) carry A₁ at the face midpoint, y-faces carry A₂.
    let mut a1_face = vec![0.0_f64; (nl - 1) * nl];
    for i in 0..nl - 1 {
        for j in 0..nl {
            connection.eval_into(&[xc[i] + 0.5 * dx, yc[j]], &mut abuf)?;
            a1_face[i * nl + j] = abuf[0];
        }
    }
    let mut a2_face = vec![0.0_f64; nl * (nl - 1)];
    for i in 0..nl {
        for j in 0..nl - 1 {
            connection.eval_into(&[xc[i], yc[j] + 0.5 * dx], &mut abuf)?;
            a2_face[i * (nl - 1) + j] = abuf[1];
        }
    }
    let amax = a_cell
        .iter()
        .map(|a| a[0].hypot(a[1]))
        .fold(0.0_f64, f64::max);

    // --- W axis ---------------------------------------------------------
    let sigma_w = sigma_l * amax;
    let w_travel = amax * vmax * std::f64::consts::SQRT_2 * t_final;
    let lw_target = (options.w_sigmas * sigma_w + w_travel).max(4.0 * dx * amax).max(1e-6);
    let dw;
    let nw;
    match options.nw {
        Some(n) => {
            if n < 8 {
                return Err(CurvworkError::InvalidInput(format!(
                    "need at least 8 W cells, got {n}"
                )));
            }
            nw = n;
            dw = 2.0 * lw_target / nw as f64;
        }
        None => {
            let commensurate = match connection {
                ConnectionField::Constant(a) => commensurate_dw(a, dx),
                _ => None,
            };
            match commensurate {
                Some(c) => {
                    dw = c;
                    let half_cells = (lw_target / dw).ceil() as usize + 1;
                    nw = (2 * half_cells + 1).min(4097);
                }
                None => {
                    nw = 97;
                    dw = 2.0 * lw_target / nw as f64;
                }
            }
        }
    }
    // Anchor the axis so W = 0 is exactly a cell center.
    let w0 = -((nw / 2) as f64) * dw;

    let grid = FpGrid { nl, nw, x0, y0, dx, w0, dw };
    let volume = grid.cell_volume();

    // --- initial condition ----------------------------------------------
    let mut p = vec![0.0_f64; nl * nl * nw];
    match initial {
        FpInitial::DeltaAtCenter => {
            let ic = (((options.lambda_center[0] - x0) / dx).round() as isize)
                .clamp(0, nl as isize - 1) as usize;
            let jc = (((options.lambda_center[1] - y0) / dx).round() as isize)
                .clamp(0, nl as isize - 1) as usize;
            let kc = ((-w0 / dw).round() as isize).clamp(0, nw as isize - 1) as usize;
            p[grid.idx(ic, jc, kc)] = 1.0 / volume;
        }
        FpInitial::SheetGaussian { width_cells } => {
            if !(width_cells > 0.0) {
                return Err(CurvworkError::InvalidInput(
                    "sheet Gaussian width must be positive".into(),
                ));
            }
            let w_gauss = width_cells * dx;
            let mut total = 0.0;
            for i in 0..nl {
                for j in 0..nl {
                    let rx = xc[i] - options.lambda_center[0];
                    let ry = yc[j] - options.lambda_center[1];
                    let gl = (-(rx * rx + ry * ry) / (2.0 * w_gauss * w_gauss)).exp();
                    let a = a_cell[i * nl + j];
                    let sheet = a[0] * rx + a[1] * ry;
                    let fidx = (sheet - w0) / dw;
                    let k0 = fidx.floor() as isize;
                    let frac = fidx - k0 as f64;
                    if (0..nw as isize).contains(&k0) {
                        p[grid.idx(i, j, k0 as usize)] += gl * (1.0 - frac);
                        total += gl * (1.0 - frac);
                    }
                    if (0..nw as isize).contains(&(k0 + 1)) {
                        p[grid.idx(i, j, (k0 + 1) as usize)] += gl * frac;
                        total += gl * frac;
                    }
                }
            }
            if !(total > 0.0) {
                return Err(CurvworkError::InvalidInput(
                    "initial sheet Gaussian has no support on the grid".into(),
                ));
            }
            let norm = 1.0 / (total * volume);
            for v in &mut p {
                *v *= norm;
            }
        }
    }

    // --- time step -------------------------------------------------------
    // Positivity bound for two bond directions with two-sided exchange:
    // total outflow coefficient 4θ ≤ 1 with θ = D·dt/dx²; kept conservative.
    let mut dt = options.safety * 0.25 * dx * dx / (2.0 * d);
    if vmax > 0.0 {
        dt = dt.min(0.5 * dx / vmax);
        let bmax = amax * vmax * std::f64::consts::SQRT_2;
        if bmax > 0.0 {
            dt = dt.min(0.5 * dw / bmax);
        }
    }
    let n_steps = (t_final / dt).ceil() as usize;
    let dt = t_final / n_steps as f64;
    let theta = d * dt / (dx * dx);

    // Precomputed bond splits per face.
    let splits1: Vec<(isize, f64)> =
        a1_face.iter().map(|&a| slant_split(a, dx, dw)).collect();
    let splits2: Vec<(isize, f64)> =
        a2_face.iter().map(|&a| slant_split(a, dx, dw)).collect();

    // --- main loop -------------------------------------------------------
    let record_every = ((n_steps as f64) / (options.record_samples as f64 - 1.0)).ceil().max(1.0)
        as usize;
    let mut times = Vec::new();
    let mut mass_trace = Vec::new();
    let mut leak_trace = Vec::new();
    let mut mean_trace = Vec::new();
    let mut var_trace = Vec::new();
    let mut leak = 0.0_f64;

    let record = |t: f64,
                  p: &[f64],
                  leak: f64,
                  times: &mut Vec<f64>,
                  mass_trace: &mut Vec<f64>,
                  leak_trace: &mut Vec<f64>,
                  mean_trace: &mut Vec<f64>,
                  var_trace: &mut Vec<f64>|
     -> Result<()> {
        let snapshot = JointDensity { grid: grid.clone(), values: p.to_vec(), time: t, leakage: leak };
        let mass = snapshot.mass();
        let m = snapshot.w_moments()?;
        times.push(t);
        mass_trace.push(mass);
        leak_trace.push(leak);
        mean_trace.push(m.mean);
        var_trace.push(m.variance);
        Ok(())
    };
    record(0.0, &p, leak, &mut times, &mut mass_trace, &mut leak_trace, &mut mean_trace, &mut var_trace)?;

    let mut pnew = p.clone();
    let mut v = [0.0_f64; 2];
    for step in 0..n_steps {
        let t_mid = (step as f64 + 0.5) * dt;

        // -- control-drift and work-drift advection (donor cell) --
        if !sde.drift.is_zero() {
            sde.drift.eval_into(t_mid, &mut v);
            // x-advection: uniform velocity v[0].
            if v[0] != 0.0 {
                let c = v[0] * dt / dx;
                pnew.copy_from_slice(&p);
                for i in 0..nl - 1 {
                    // Face between rows i and i+1.
                    let upwind = if c > 0.0 { i } else { i + 1 };
                    for j in 0..nl {
                        let src = (upwind * nl + j) * nw;
                        let lo = (i * nl + j) * nw;
                        let hi = ((i + 1) * nl + j) * nw;
                        for k in 0..nw {
                            let flux = c * p[src + k];
                            pnew[lo + k] -= flux;
                            pnew[hi + k] += flux;
                        }
                    }
                }
                std::mem::swap(&mut p, &mut pnew);
            }
            // y-advection: uniform velocity v[1].
            if v[1] != 0.0 {
                let c = v[1] * dt / dx;
                pnew.copy_from_slice(&p);
                for i in 0..nl {
                    for j in 0..nl - 1 {
                        let upwind = if c > 0.0 { j } else { j + 1 };
                        let src = (i * nl + upwind) * nw;
                        let lo = (i * nl + j) * nw;
                        let hi = (i * nl + j + 1) * nw;
                        for k in 0..nw {
                            let flux = c * p[src + k];
                            pnew[lo + k] -= flux;
                            pnew[hi + k] += flux;
                        }
                    }
                }
                std::mem::swap(&mut p, &mut pnew);
            }
            // W-advection with per-cell speed A·v; outflow at the W edges is
            // removed and booked as leakage.
            pnew.copy_from_slice(&p);
            let mut step_leak = 0.0;
            for cell in 0..nl * nl {
                let a = a_cell[cell];
                let b = a[0] * v[0] + a[1] * v[1];
                if b == 0.0 {
                    continue;
                }
                let c = b * dt / dw;
                let base = cell * nw;
                if c > 0.0 {
                    for k in (1..nw).rev() {
                        let flux = c * p[base + k - 1];
                        pnew[base + k] += flux;
                        pnew[base + k - 1] -= flux;
                    }
                    let out = c * p[base + nw - 1];
                    pnew[base + nw - 1] -= out;
                    step_leak += out;
                } else {
                    for k in 0..nw - 1 {
                        let flux = -c * p[base + k + 1];
                        pnew[base + k] += flux;
                        pnew[base + k + 1] -= flux;
                    }
                    let out = -c * p[base];
                    pnew[base] -= out;
                    step_leak += out;
                }
            }
            leak += step_leak * volume;
            std::mem::swap(&mut p, &mut pnew);
        }

        // -- directional bond diffusion --
        pnew.copy_from_slice(&p);
        // Direction 1: bonds (i, j, k) → (i+1, j, k+s).
        for i in 0..nl - 1 {
            for j in 0..nl {
                let (s0, f) = splits1[i * nl + j];
                let base_c = (i * nl + j) * nw;
                let base_t = ((i + 1) * nl + j) * nw;
                for (s, kap) in [(s0, 1.0 - f), (s0 + 1, f)] {
                    if kap == 0.0 {
                        continue;
                    }
                    let coeff = theta * kap;
                    let k_lo = (-s).max(0) as usize;
                    let k_hi = ((nw as isize - s).min(nw as isize)).max(0) as usize;
                    for k in k_lo..k_hi {
                        let kt = (k as isize + s) as usize;
                        let flux = coeff * (p[base_t + kt] - p[base_c + k]);
                        pnew[base_c + k] += flux;
                        pnew[base_t + kt] -= flux;
                    }
                }
            }
        }
        // Direction 2: bonds (i, j, k) → (i, j+1, k+s).
        for i in 0..nl {
            for j in 0..nl - 1 {
                let (s0, f) = splits2[i * (nl - 1) + j];
                let base_c = (i * nl + j) * nw;
                let base_t = (i * nl + j + 1) * nw;
                for (s, kap) in [(s0, 1.0 - f), (s0 + 1, f)] {
                    if kap == 0.0 {
                        continue;
                    }
                    let coeff = theta * kap;
                    let k_lo = (-s).max(0) as usize;
                    let k_hi = ((nw as isize - s).min(nw as isize)).max(0) as usize;
                    for k in k_lo..k_hi {
                        let kt = (k as isize + s) as usize;
                        let flux = coeff * (p[base_t + kt] - p[base_c + k]);
                        pnew[base_c + k] += flux;
                        pnew[base_t + kt] -= flux;
                    }
                }
            }
        }
        std::mem::swap(&mut p, &mut pnew);

        let t_now = (step + 1) as f64 * dt;
        if (step + 1) % record_every == 0 || step + 1 == n_steps {
            // Stability audit at every record point.
            let mass: f64 = p.iter().sum::<f64>() * volume;
            if !mass.is_finite() {
                return Err(CurvworkError::FpInstability {
                    reason: format!("non-finite mass at t = {t_now}"),
                });
            }
            let min = p.iter().fold(f64::INFINITY, |m, x| m.min(*x));
            if min < -1e-10 {
                return Err(CurvworkError::FpInstability {
                    reason: format!("density fell to {min:.3e} at t = {t_now}"),
                });
            }
            if (mass + leak - 1.0).abs() > 1e-8 {
                return Err(CurvworkError::FpInstability {
                    reason: format!(
                        "mass budget violated at t = {t_now}: mass {mass} + leakage {leak}"
                    ),
                });
            }
            record(
                t_now,
                &p,
                leak,
                &mut times,
                &mut mass_trace,
                &mut leak_trace,
                &mut mean_trace,
                &mut var_trace,
            )?;
        }
    }

    let final_density = JointDensity { grid, values: p, time: t_final, leakage: leak };
    Ok(FpTrace {
        times,
        mass: mass_trace,
        leakage: leak_trace,
        mean_w: mean_trace,
        var_w: var_trace,
        dt,
        n_steps,
        final_density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::{ensemble, ControlSde, DriftSpec, NoiseSpec};
    use approx::assert_abs_diff_eq;

    fn iso_sde(d: f64, drift: DriftSpec) -> ControlSde {
        ControlSde::new(2, drift, NoiseSpec::Isotropic { d }).unwrap()
    }

    #[test]
    fn zero_connection_keeps_work_delta() {
        let sde = iso_sde(0.25, DriftSpec::Zero);
        let conn = ConnectionField::Constant(vec![0.0, 0.0]);
        let opts = FpOptions { nl: 32, nw: Some(33), ..FpOptions::default() };
        let trace =
            fokker_planck_solve(&sde, &conn, &opts, FpInitial::DeltaAtCenter, 0.5).unwrap();
        let marg = trace.final_density.w_marginal();
        let g = &trace.final_density.grid;
        let kc = ((-g.w0) / g.dw).round() as usize;
        // All surviving mass in the initial W cell.
        let total: f64 = marg.iter().sum::<f64>() * g.dw;
        assert_abs_diff_eq!(marg[kc] * g.dw, total, epsilon = 1e-12);
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        assert!(trace.final_density.min_value() >= 0.0);
    }

    #[test]
    fn constant_connection_variance_growth() {
        let d = 0.25;
        let a = vec![0.6, 0.8];
        let sde = iso_sde(d, DriftSpec::Zero);
        let conn = ConnectionField::Constant(a.clone());
        let opts = FpOptions { nl: 32, ..FpOptions::default() };
        let trace =
            fokker_planck_solve(&sde, &conn, &opts, FpInitial::DeltaAtCenter, 1.0).unwrap();
        let m = trace.final_density.w_moments().unwrap();
        let var_exact = 2.0 * d * (a[0] * a[0] + a[1] * a[1]);
        let rel = (m.variance - var_exact).abs() / var_exact;
        // Commensurate slant shifts transport the work sheet exactly; the
        // only deviations are the reflecting λ walls at 4.5σ and the W
        // truncation.
        assert!(rel < 1e-3, "var {} vs {} (rel {rel:.2e})", m.variance, var_exact);
        // The start cell sits half a cell off the box center (even nl), so
        // the reflecting walls are slightly asymmetric; the residual mean is
        // tail-suppressed.
        assert!(m.mean.abs() < 1e-5, "mean {}", m.mean);
        assert!(trace.final_density.leakage.abs() < 1e-8);
        let last_mass = *trace.mass.last().unwrap();
        assert!((last_mass - 1.0).abs() < 1e-8);
        assert!(trace.final_density.min_value() >= 0.0);
        // The sheet structure survives: conditioned on a λ cell, W is
        // concentrated on one cell.
        let g = &trace.final_density.grid;
        let ic = g.nl / 2 + 3;
        let jc = g.nl / 2 - 2;
        let col: Vec<f64> =
            (0..g.nw).map(|k| trace.final_density.values[g.idx(ic, jc, k)]).collect();
        let col_mass: f64 = col.iter().sum();
        let col_max = col.iter().fold(0.0_f64, |m, x| m.max(*x));
        assert!(col_mass > 0.0);
        assert!(col_max / col_mass > 0.999, "sheet smeared: {}", col_max / col_mass);
    }

    #[test]
    fn sheet_gaussian_initial_condition() {
        let d = 0.25;
        let a = vec![0.6, 0.8];
        let sde = iso_sde(d, DriftSpec::Zero);
        let conn = ConnectionField::Constant(a.clone());
        let opts = FpOptions { nl: 32, ..FpOptions::default() };
        let trace = fokker_planck_solve(
            &sde,
            &conn,
            &opts,
            FpInitial::SheetGaussian { width_cells: 1.5 },
            1.0,
        )
        .unwrap();
        let var_exact = 2.0 * d * (a[0] * a[0] + a[1] * a[1]);
        let growth = trace.var_w.last().unwrap() - trace.var_w.first().unwrap();
        let rel = (growth - var_exact).abs() / var_exact;
        assert!(rel < 1e-3, "growth {growth} vs {var_exact} (rel {rel:.2e})");
    }

    #[test]
    fn drifted_mean_matches_mechanical_power_and_monte_carlo() {
        let d = 0.2;
        let a = vec![0.5, -0.3];
        let v = vec![0.3, 0.2];
        let power = a[0] * v[0] + a[1] * v[1];
        let sde = iso_sde(d, DriftSpec::Constant(v.clone()));
        let conn = ConnectionField::Constant(a.clone());
        let opts = FpOptions { nl: 32, ..FpOptions::default() };
        let trace =
            fokker_planck_solve(&sde, &conn, &opts, FpInitial::DeltaAtCenter, 1.0).unwrap();
        // d⟨W⟩/dt = ⟨b_W⟩ = A·v at every recorded time.
        for (t, mean) in trace.times.iter().zip(&trace.mean_w) {
            assert_abs_diff_eq!(*mean, power * t, epsilon = 5e-3);
        }
        // Monte Carlo cross-check of the final mean.
        let ens = ensemble(&sde, &conn, &[0.0, 0.0], 1.0, 5e-3, 4000, 99).unwrap();
        let fp_mean = *trace.mean_w.last().unwrap();
        assert!(
            (fp_mean - ens.mean).abs() < 0.05 * power.abs() + 3.0 * ens.std_error,
            "FP {} vs MC {} ± {}",
            fp_mean,
            ens.mean,
            ens.std_error
        );
        // Leakage is reported, small, and the budget closes.
        let leak = *trace.leakage.last().unwrap();
        assert!((0.0..1e-6).contains(&leak), "leakage {leak}");
        assert!((trace.mass.last().unwrap() + leak - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_unsupported_configurations() {
        let conn = ConnectionField::Constant(vec![0.5, 0.5]);
        // Anisotropic noise is MC-only.
        let aniso = ControlSde::new(
            2,
            DriftSpec::Zero,
            NoiseSpec::Matrix(ndarray::arr2(&[[0.3, 0.0], [0.1, 0.2]])),
        )
        .unwrap();
        assert!(fokker_planck_solve(
            &aniso,
            &conn,
            &FpOptions::default(),
            FpInitial::DeltaAtCenter,
            1.0
        )
        .is_err());
        // Zero noise has no diffusive scale.
        let frozen = ControlSde::new(2, DriftSpec::Zero, NoiseSpec::None).unwrap();
        assert!(fokker_planck_solve(
            &frozen,
            &conn,
            &FpOptions::default(),
            FpInitial::DeltaAtCenter,
            1.0
        )
        .is_err());
        // Tiny grids are refused.
        let sde = iso_sde(0.25, DriftSpec::Zero);
        let opts = FpOptions { nl: 4, ..FpOptions::default() };
        assert!(
            fokker_planck_solve(&sde, &conn, &opts, FpInitial::DeltaAtCenter, 1.0).is_err()
        );
    }
}
