//! Built-in verification: a handful of fast probes with known answers,
//! printed one per line. Any failure makes the process exit with code 3.

use std::time::Instant;

use curvwork::cycles::{
    eta_geom, line_integral_work, stokes_check, Protocol, Region, SurfaceResolution,
};
use curvwork::geometry::{
    free_energy, ControlModel, CurvatureField, CurvatureMode, RateSpec, SolverKind,
};
use curvwork::quantum::{
    analytic_ness_bloch, bloch_from_density, build_hamiltonian, build_liouvillian,
    fixed_basis_terms, stationary_state,
};
use curvwork::stochastic::{
    ensemble, fokker_planck_solve, ConnectionField, ControlSde, DriftSpec, FpInitial, FpOptions,
    NoiseSpec,
};

use crate::error::CliError;

struct Probe {
    name: &'static str,
    detail: String,
    pass: bool,
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Stationary states from the null-space solver match the closed form.
fn probe_stationary() -> Probe {
    let mut worst = 0.0f64;
    for &(gd, gu) in &[(1.0, 0.0), (1.0, 0.3)] {
        for &w in &grid(-2.0, 2.0, 7) {
            for &g in &grid(-2.0, 2.0, 7) {
                let run = || -> Result<f64, curvwork::CurvworkError> {
                    let h = build_hamiltonian(w, g);
                    let l = build_liouvillian(&h, &fixed_basis_terms(gd, gu)?)?;
                    let rho = stationary_state(&l)?;
                    let b = bloch_from_density(&rho)?;
                    let a = analytic_ness_bloch(w, g, gd, gu)?;
                    Ok((b.x - a.x).abs().max((b.y - a.y).abs()).max((b.z - a.z).abs()))
                };
                match run() {
                    Ok(err) => worst = worst.max(err),
                    Err(e) => {
                        return Probe {
                            name: "stationary-state",
                            detail: format!("solver error: {e}"),
                            pass: false,
                        }
                    }
                }
            }
        }
    }
    Probe {
        name: "stationary-state",
        detail: format!("max component error {worst:.2e} (tol 1e-10)"),
        pass: worst <= 1e-10,
    }
}

/// Finite-difference curvature through the solver matches the closed form.
fn probe_curvature() -> Probe {
    let model = match ControlModel::fixed_basis(RateSpec::FixedBias { gamma: 1.0, p: 1.0 }, SolverKind::NullSpace) {
        Ok(m) => m,
        Err(e) => {
            return Probe {
                name: "curvature-closed-form",
                detail: format!("model error: {e}"),
                pass: false,
            }
        }
    };
    let fd = CurvatureField { plane: (0, 1), mode: CurvatureMode::FdGeneric };
    let cf = CurvatureField { plane: (0, 1), mode: CurvatureMode::CoherentClosedForm };
    let pts = grid(0.4, 1.6, 7);
    let mut samples = Vec::new();
    for &w in &pts {
        for &g in &pts {
            let lam = [w, g];
            match (fd.evaluate(&model, &lam), cf.evaluate(&model, &lam)) {
                (Ok(a), Ok(b)) => samples.push((a, b)),
                _ => {
                    return Probe {
                        name: "curvature-closed-form",
                        detail: "evaluation error".into(),
                        pass: false,
                    }
                }
            }
        }
    }
    let omega_max = samples.iter().map(|s| s.1.abs()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for (a, b) in &samples {
        let scale = b.abs().max(0.01 * omega_max);
        worst = worst.max((a - b).abs() / (1e-4 * scale));
    }
    Probe {
        name: "curvature-closed-form",
        detail: format!("worst error {:.2} x tolerance", worst),
        pass: worst <= 1.0,
    }
}

/// Loop work agrees with the enclosed curvature flux.
fn probe_stokes() -> Probe {
    let run = || -> Result<(f64, f64), curvwork::CurvworkError> {
        let model = ControlModel::fixed_basis(RateSpec::FixedBias { gamma: 1.0, p: 1.0 }, SolverKind::ClosedForm)?;
        let protocol = Protocol::Circle { center: (1.0, 1.0), radius: 0.5 };
        let field = CurvatureField { plane: (0, 1), mode: CurvatureMode::CoherentClosedForm };
        let r = stokes_check(&model, &protocol, &field, 256, SurfaceResolution::default())?;
        Ok((r.w_line, r.w_surface.expect("closed loop")))
    };
    match run() {
        Ok((wl, ws)) => {
            let err = (wl - ws).abs();
            let tol = 1e-6 * wl.abs().max(1.0);
            Probe {
                name: "stokes-consistency",
                detail: format!("line {wl:.9e} vs surface {ws:.9e}, gap {err:.2e}"),
                pass: err < tol,
            }
        }
        Err(e) => Probe { name: "stokes-consistency", detail: e.to_string(), pass: false },
    }
}

/// Loops symmetric about the g = 0 axis do no net work and have eta = 0.
fn probe_symmetric_loop() -> Probe {
    let run = || -> Result<(f64, f64), curvwork::CurvworkError> {
        let model = ControlModel::fixed_basis(RateSpec::FixedBias { gamma: 1.0, p: 1.0 }, SolverKind::ClosedForm)?;
        let protocol = Protocol::Circle { center: (1.2, 0.0), radius: 0.7 };
        let w = line_integral_work(&model, &protocol, 512)?;
        let region = Region::Disk { center: (1.2, 0.0), radius: 0.7 };
        let report = eta_geom(&model, 1.0, &region, SurfaceResolution::default())?;
        Ok((w, report.eta))
    };
    match run() {
        Ok((w, eta)) => Probe {
            name: "symmetric-loop-null",
            detail: format!("|W| {:.2e} (tol 1e-10), eta {eta:.2e}", w.abs()),
            pass: w.abs() < 1e-10 && eta.abs() < 1e-10,
        },
        Err(e) => Probe { name: "symmetric-loop-null", detail: e.to_string(), pass: false },
    }
}

/// Thermal work is exact: zero on loops, a free-energy difference on paths.
fn probe_thermal_exactness() -> Probe {
    let run = || -> Result<(f64, f64), curvwork::CurvworkError> {
        let beta = 1.3;
        let model = ControlModel::thermal(beta, 1.0)?;
        let closed = Protocol::Circle { center: (1.3, 0.9), radius: 0.4 };
        let w_loop = line_integral_work(&model, &closed, 256)?;
        let open = Protocol::PiecewiseLinear {
            vertices: vec![(0.2, 0.1), (1.4, 0.9)],
            closed: false,
        };
        let w_open = line_integral_work(&model, &open, 256)?;
        let df = free_energy(1.4, 0.9, beta)? - free_energy(0.2, 0.1, beta)?;
        Ok((w_loop, w_open - df))
    };
    match run() {
        Ok((w_loop, defect)) => Probe {
            name: "thermal-exactness",
            detail: format!(
                "loop {:.2e}, open-path defect {:.2e} (tol 1e-8)",
                w_loop.abs(),
                defect.abs()
            ),
            pass: w_loop.abs() < 1e-8 && defect.abs() < 1e-8,
        },
        Err(e) => Probe { name: "thermal-exactness", detail: e.to_string(), pass: false },
    }
}

/// Constant-connection benchmark: trajectory-sampled work variance and the
/// density-solve variance both match Var W = 2 D |A|² t.
fn probe_stochastic_triangle() -> Probe {
    let d = 0.25;
    let a = [0.6, 0.8];
    let t = 0.5;
    let target = 2.0 * d * (a[0] * a[0] + a[1] * a[1]) * t;
    let run = || -> Result<(f64, f64, f64), curvwork::CurvworkError> {
        let sde = ControlSde::new(2, DriftSpec::Zero, NoiseSpec::Isotropic { d })?;
        let connection = ConnectionField::Constant(a.to_vec());
        let n = 3000;
        let e = ensemble(&sde, &connection, &[0.0, 0.0], t, 5e-3, n, 31)?;
        let se_var = e.variance * (2.0 / (n as f64 - 1.0)).sqrt();
        let fp = fokker_planck_solve(
            &sde,
            &connection,
            &FpOptions { nl: 32, ..FpOptions::default() },
            FpInitial::DeltaAtCenter,
            t,
        )?;
        let fp_var = *fp.var_w.last().expect("records");
        Ok((e.variance, se_var, fp_var))
    };
    match run() {
        Ok((mc_var, se, fp_var)) => {
            let mc_ok = (mc_var - target).abs() <= 4.0 * se;
            let fp_ok = (fp_var - target).abs() <= 0.02 * target;
            Probe {
                name: "stochastic-triangle",
                detail: format!(
                    "target {target:.4}: sampled {mc_var:.4} (4se {:.4}), density {fp_var:.4}",
                    4.0 * se
                ),
                pass: mc_ok && fp_ok,
            }
        }
        Err(e) => Probe { name: "stochastic-triangle", detail: e.to_string(), pass: false },
    }
}

/// Same seed, same trajectory statistics, bit for bit.
fn probe_determinism() -> Probe {
    let run = |seed: u64| -> Result<f64, curvwork::CurvworkError> {
        let sde = ControlSde::new(2, DriftSpec::Zero, NoiseSpec::Isotropic { d: 0.2 })?;
        let connection = ConnectionField::Constant(vec![0.5, -0.3]);
        let e = ensemble(&sde, &connection, &[0.4, 0.6], 0.2, 1e-2, 400, seed)?;
        Ok(e.mean)
    };
    match (run(11), run(11), run(12)) {
        (Ok(a), Ok(b), Ok(c)) => Probe {
            name: "seeded-determinism",
            detail: format!("mean {a:.9e}; repeat identical: {}; new seed differs: {}",
                a.to_bits() == b.to_bits(), a != c),
            pass: a.to_bits() == b.to_bits() && a != c,
        },
        _ => Probe { name: "seeded-determinism", detail: "ensemble error".into(), pass: false },
    }
}

/// Run every probe, print one line each, and report the failure count.
pub fn run_selfcheck() -> Result<(), CliError> {
    let t0 = Instant::now();
    let probes = [
        probe_stationary(),
        probe_curvature(),
        probe_stokes(),
        probe_symmetric_loop(),
        probe_thermal_exactness(),
        probe_stochastic_triangle(),
        probe_determinism(),
    ];
    let mut failures = 0usize;
    for p in &probes {
        let verdict = if p.pass { "ok" } else { "FAIL" };
        println!("selfcheck {:<24} {verdict:<4} {}", p.name, p.detail);
        if !p.pass {
            failures += 1;
        }
    }
    println!(
        "selfcheck summary: {}/{} probes passed in {:.2} s",
        probes.len() - failures,
        probes.len(),
        t0.elapsed().as_secs_f64()
    );
    if failures == 0 {
        Ok(())
    } else {
        Err(CliError::Selfcheck(failures))
    }
}
