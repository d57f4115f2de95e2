//! Command implementations: each takes the validated config, runs the
//! corresponding library computation, and emits CSV tables plus an optional
//! gnuplot companion script.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use curvwork::cycles::{
    eta_geom, first_law_trace, line_integral_work, line_integral_work_checked, phase_sweep,
    radius_sweep, stokes_check, Protocol, Region,
};
use curvwork::geometry::{
    population_curvature_density, work_one_form, CurvatureField, CurvatureMode,
};
use curvwork::stochastic::{
    ensemble, fokker_planck_solve, jarzynski_bridge_check, tilted_evolve, ConnectionField,
    FpInitial, FpOptions, NoiseSpec, TiltedOptions, WorkEnsemble,
};

use crate::config::{ConnectionConfig, RunConfig};
use crate::error::CliError;
use crate::table::{script_preamble, write_script, Column, ResultTable};

/// Invocation-level context: raw config bytes (for hashing), output
/// directory, and flag overrides.
pub struct RunContext {
    pub config_text: String,
    pub out_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub tolerance_override: Option<f64>,
}

impl RunContext {
    fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.config_text.as_bytes());
        format!("{:x}", hasher.finalize())
    }

    fn seed(&self, cfg: &RunConfig) -> Option<u64> {
        self.seed_override.or(cfg.numeric.seed)
    }

    fn tolerance(&self, cfg: &RunConfig) -> Option<f64> {
        self.tolerance_override.or(cfg.numeric.tolerance)
    }

    fn path(&self, cfg: &RunConfig, suffix: &str) -> PathBuf {
        self.out_dir.join(format!("{}_{suffix}", cfg.output.prefix))
    }
}

fn stamp(table: &mut ResultTable, cfg: &RunConfig, ctx: &RunContext, seed: Option<u64>) {
    table.meta("tool", format!("curvwork {}", env!("CARGO_PKG_VERSION")));
    table.meta("command", &cfg.command);
    table.meta("config-sha256", ctx.config_hash());
    match seed {
        Some(s) => table.meta("seed", s),
        None => table.meta("seed", "-"),
    }
}

fn need<T: Clone>(opt: &Option<T>, path: &str, cmd: &str) -> Result<T, CliError> {
    opt.clone()
        .ok_or_else(|| CliError::Validation(format!("{path}: required for command {cmd:?}")))
}

/// Run the configured command, returning the paths of all emitted files.
pub fn execute(cfg: &RunConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(&ctx.out_dir).map_err(|e| {
        CliError::Runtime(format!("cannot create {}: {e}", ctx.out_dir.display()))
    })?;
    match cfg.command.as_str() {
        "curvature-map" => cmd_curvature_map(cfg, ctx),
        "cycle-work" => cmd_cycle_work(cfg, ctx),
        "radius-sweep" => cmd_radius_sweep(cfg, ctx),
        "phase-sweep" => cmd_phase_sweep(cfg, ctx),
        "eta-map" => cmd_eta_map(cfg, ctx),
        "sde-ensemble" => cmd_sde_ensemble(cfg, ctx),
        "fp-solve" => cmd_fp_solve(cfg, ctx),
        "jarzynski" => cmd_jarzynski(cfg, ctx),
        other => Err(CliError::Validation(format!(
            "command {other:?} is not dispatchable here"
        ))),
    }
}

// ---------------------------------------------------------------------------
// curvature-map
// ---------------------------------------------------------------------------

fn cmd_curvature_map(cfg: &RunConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let mc = cfg.model.as_ref().expect("validated");
    let model = mc.build()?;
    let omega = need(&mc.omega, "model.omega", &cfg.command)?;
    let g = need(&mc.g, "model.g", &cfg.command)?;
    let fd_field = CurvatureField { plane: (0, 1), mode: CurvatureMode::FdGeneric };
    // Closed-form companions: the coherent density when the model carries
    // fixed-basis rates, and the population baseline when a temperature is
    // available (from the model or, for side-by-side maps, the config).
    let coh_field = CurvatureField { plane: (0, 1), mode: CurvatureMode::CoherentClosedForm };
    let has_rates = model.rates_at(&[omega.min, g.min])?.is_some();
    let baseline_beta = mc.effective_beta();

    let mut table = ResultTable::new(vec![
        Column::new("omega", "energy"),
        Column::new("g", "energy"),
        Column::new("a_omega", "1"),
        Column::new("a_g", "1"),
        Column::new("curv_fd", "1/energy"),
        Column::new("curv_coh", "1/energy"),
        Column::new("curv_pop", "1/energy"),
    ]);
    stamp(&mut table, cfg, ctx, None);
    for &w in &omega.values() {
        for &gg in &g.values() {
            let lam = [w, gg];
            let a = work_one_form(&model, &lam)?;
            let fd = fd_field.evaluate(&model, &lam)?;
            let coh = if has_rates { coh_field.evaluate(&model, &lam)? } else { f64::NAN };
            let pop = match baseline_beta {
                Some(beta) => population_curvature_density(w, gg, beta)?,
                None => f64::NAN,
            };
            table.push_row(vec![w, gg, a.components[0], a.components[1], fd, coh, pop]);
        }
    }
    let csv = ctx.path(cfg, "curvature.csv");
    table.write(&csv)?;
    let mut out = vec![csv.clone()];
    if cfg.output.gnuplot {
        let gp = ctx.path(cfg, "curvature.gp");
        let script = format!(
            "{}set view map\nset dgrid3d {},{}\nsplot '{}' using 1:2:5 with pm3d title 'curvature (finite difference)'\n",
            script_preamble("work curvature density"),
            omega.count,
            g.count,
            file_name(&csv)
        );
        write_script(&gp, &script)?;
        out.push(gp);
    }
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// cycle-work
// ---------------------------------------------------------------------------

fn cmd_cycle_work(cfg: &RunConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let mc = cfg.model.as_ref().expect("validated");
    let model = mc.build()?;
    let protocol = cfg.protocol.as_ref().expect("validated").build()?;
    let nodes = cfg.numeric.nodes.unwrap_or(256);
    let resolution = cfg.numeric.surface_resolution();

    // Line work (convergence-checked when a tolerance is configured) and,
    // for closed planar loops, the Stokes surface comparison.
    let planar_closed = protocol.is_closed() && protocol.dim() == 2;
    let (w_line, w_surface, residual) = if planar_closed {
        let field = CurvatureField { plane: (0, 1), mode: CurvatureMode::FdGeneric };
        let result = stokes_check(&model, &protocol, &field, nodes, resolution)?;
        (result.w_line, result.w_surface, result.residual_estimate)
    } else {
        let w = match ctx.tolerance(cfg) {
            Some(tol) => line_integral_work_checked(&model, &protocol, nodes, tol)?,
            None => line_integral_work(&model, &protocol, nodes)?,
        };
        (w, None, f64::NAN)
    };

    let trace = first_law_trace(&model, &protocol, nodes)?;

    // Work-reduction factor when the model carries fixed-basis rates and a
    // baseline temperature is configured.
    let eta = if planar_closed && model.rates_at(&protocol.point(0.0))?.is_some() {
        match mc.effective_beta() {
            Some(beta) => {
                let (region, orientation) = protocol.enclosed_region()?;
                let report = eta_geom(&model, beta, &region, resolution)?;
                Some((report, orientation))
            }
            None => None,
        }
    } else {
        None
    };

    let mut summary = ResultTable::new(vec![
        Column::new("w_line", "energy"),
        Column::new("w_surface", "energy"),
        Column::new("residual", "energy"),
        Column::new("total_du", "energy"),
        Column::new("total_dw", "energy"),
        Column::new("total_dq", "energy"),
        Column::new("max_defect", "energy"),
        Column::new("eta", "1"),
        Column::new("w_coh", "energy"),
        Column::new("w_pop", "energy"),
    ]);
    stamp(&mut summary, cfg, ctx, None);
    summary.meta("nodes", nodes);
    summary.meta("closed", protocol.is_closed());
    let (eta_v, w_coh, w_pop) = match &eta {
        Some((r, orientation)) => (r.eta, orientation * r.w_coh, orientation * r.w_pop),
        None => (f64::NAN, f64::NAN, f64::NAN),
    };
    summary.push_row(vec![
        w_line,
        w_surface.unwrap_or(f64::NAN),
        residual,
        trace.total_du,
        trace.total_dw,
        trace.total_dq,
        trace.max_defect,
        eta_v,
        w_coh,
        w_pop,
    ]);
    let csv = ctx.path(cfg, "cycle.csv");
    summary.write(&csv)?;

    let mut steps = ResultTable::new(vec![
        Column::new("theta", "rad"),
        Column::new("du", "energy"),
        Column::new("dw", "energy"),
        Column::new("dq", "energy"),
    ]);
    stamp(&mut steps, cfg, ctx, None);
    for s in &trace.steps {
        steps.push_row(vec![s.theta, s.du, s.dw, s.dq]);
    }
    let trace_csv = ctx.path(cfg, "cycle_trace.csv");
    steps.write(&trace_csv)?;

    let mut out = vec![csv, trace_csv.clone()];
    if cfg.output.gnuplot {
        let gp = ctx.path(cfg, "cycle.gp");
        let script = format!(
            "{}plot '{}' using 1:3 with lines title 'work increment', \\\n     '{}' using 1:4 with lines title 'heat increment'\n",
            script_preamble("first-law decomposition along the cycle"),
            file_name(&trace_csv),
            file_name(&trace_csv)
        );
        write_script(&gp, &script)?;
        out.push(gp);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// radius-sweep
// ---------------------------------------------------------------------------

fn default_radii() -> Vec<f64> {
    // Log-spaced ladder from deep sub-thermal to saturating loop sizes.
    let n = 25;
    (0..n)
        .map(|i| 0.05 * (8.0f64 / 0.05).powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn cmd_radius_sweep(cfg: &RunConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let mc = cfg.model.as_ref().expect("validated");
    let betas = match &cfg.sweep.betas {
        Some(b) => b.clone(),
        None => vec![mc.effective_beta().ok_or_else(|| {
            CliError::Validation("sweep.betas: required when the model has no temperature".into())
        })?],
    };
    let radii = cfg.sweep.radii.clone().unwrap_or_else(default_radii);

    let mut table = ResultTable::new(vec![
        Column::new("beta", "1/energy"),
        Column::new("epsilon", "energy"),
        Column::new("w_cyc", "energy"),
        Column::new("ratio", "1"),
    ]);
    stamp(&mut table, cfg, ctx, None);
    for &beta in &betas {
        for row in radius_sweep(beta, &radii)? {
            table.push_row(vec![beta, row.epsilon, row.w_cyc, row.ratio]);
        }
    }
    let csv = ctx.path(cfg, "radius_sweep.csv");
    table.write(&csv)?;
    let mut out = vec![csv.clone()];
    if cfg.output.gnuplot {
        let gp = ctx.path(cfg, "radius_sweep.gp");
        let mut script = script_preamble("normalized cycle work vs loop radius");
        script.push_str("set xlabel 'epsilon'\nset ylabel 'W / W_inf'\nplot ");
        let clauses: Vec<String> = betas
            .iter()
            .map(|b| {
                format!(
                    "'{}' using 2:($1=={b}?$4:1/0) with linespoints title 'beta={b}'",
                    file_name(&csv)
                )
            })
            .collect();
        script.push_str(&clauses.join(", \\\n     "));
        script.push('\n');
        write_script(&gp, &script)?;
        out.push(gp);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// phase-sweep
// ---------------------------------------------------------------------------

fn cmd_phase_sweep(cfg: &RunConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let pc = cfg
        .protocol
        .as_ref()
        .ok_or_else(|| CliError::Validation("protocol: required for phase-sweep".into()))?;
    if pc.shape != "temperature-ellipse" {
        return Err(CliError::Validation(format!(
            "protocol.shape: phase-sweep needs temperature-ellipse, got {:?}",
            pc.shape
        )));
    }
    let center = pc.center.expect("validated");
    let (a, b) = (pc.a.expect("validated"), pc.b.expect("validated"));
    let t0 = pc.t0.expect("validated");
    let delta_t = pc.delta_t.unwrap_or(0.0);
    let m = cfg.sweep.phases.unwrap_or(16);
    let nodes = cfg.numeric.nodes.unwrap_or(256);
    let phis: Vec<f64> =
        (0..m).map(|k| 2.0 * std::f64::consts::PI * k as f64 / m as f64).collect();
    let result = phase_sweep(center[0], center[1], a, b, t0, delta_t, &phis, nodes)?;

    let mut table = ResultTable::new(vec![
        Column::new("phi", "rad"),
        Column::new("w", "energy"),
        Column::new("w_fit", "energy"),
        Column::new("misfit", "energy"),
    ]);
    stamp(&mut table, cfg, ctx, None);
    table.meta("fit-w0", format!("{:.12e}", result.fit.w0));
    table.meta("fit-amplitude", format!("{:.12e}", result.fit.amplitude));
    table.meta("fit-delta", format!("{:.12e}", result.fit.delta));
    table.meta("fit-residual-rms", format!("{:.12e}", result.fit.residual_rms));
    for p in &result.points {
        let fitted = result.fit.w0 + result.fit.amplitude * (p.phi + result.fit.delta).cos();
        table.push_row(vec![p.phi, p.w, fitted, p.w - fitted]);
    }
    let csv = ctx.path(cfg, "phase_sweep.csv");
    table.write(&csv)?;
    let mut out = vec![csv.clone()];
    if cfg.output.gnuplot {
        let gp = ctx.path(cfg, "phase_sweep.gp");
        let script = format!(
            "{}set xlabel 'phase offset'\nset ylabel 'cycle work'\nplot '{}' using 1:2 with points title 'measured', \\\n     '{}' using 1:3 with lines title 'sinusoid fit'\n",
            script_preamble("cycle work vs temperature-modulation phase"),
            file_name(&csv),
            file_name(&csv)
        );
        write_script(&gp, &script)?;
        out.push(gp);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// eta-map
// ---------------------------------------------------------------------------

fn cmd_eta_map(cfg: &RunConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let mc = cfg.model.as_ref().expect("validated");
    let model = mc.build()?;
    let beta = mc.effective_beta().ok_or_else(|| {
        CliError::Validation("model.beta: required for the eta-map baseline".into())
    })?;
    let centers = need(&cfg.sweep.centers, "sweep.centers", &cfg.command)?;
    let radius = need(&cfg.sweep.radius, "sweep.radius", &cfg.command)?;
    let resolution = cfg.numeric.surface_resolution();

    let mut table = ResultTable::new(vec![
        Column::new("omega0", "energy"),
        Column::new("g0", "energy"),
        Column::new("radius", "energy"),
        Column::new("w_coh", "energy"),
        Column::new("w_pop", "energy"),
        Column::new("eta", "1"),
        Column::new("eta_local", "1"),
    ]);
    stamp(&mut table, cfg, ctx, None);
    for c in &centers {
        let region = Region::Disk { center: (c[0], c[1]), radius };
        let report = eta_geom(&model, beta, &region, resolution)?;
        table.push_row(vec![
            c[0],
            c[1],
            radius,
            report.w_coh,
            report.w_pop,
            report.eta,
            report.local_estimate,
        ]);
    }
    let csv = ctx.path(cfg, "eta_map.csv");
    table.write(&csv)?;
    let mut out = vec![csv.clone()];
    if cfg.output.gnuplot {
        let gp = ctx.path(cfg, "eta_map.gp");
        let script = format!(
            "{}set xlabel 'g0'\nset ylabel 'eta'\nplot '{}' using 2:6 with linespoints title 'measured', \\\n     '{}' using 2:7 with points title 'small-loop estimate'\n",
            script_preamble("coherence work-reduction factor"),
            file_name(&csv),
            file_name(&csv)
        );
        write_script(&gp, &script)?;
        out.push(gp);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Stochastic commands
// ---------------------------------------------------------------------------

fn build_connection(
    cfg: &RunConfig,
    model: Option<&curvwork::geometry::ControlModel>,
) -> Result<ConnectionField, CliError> {
    match &cfg.connection {
        Some(c) => c.build(model),
        None => {
            let m = model.ok_or_else(|| {
                CliError::Validation("connection: required without a model block".into())
            })?;
            ConnectionConfig { kind: "model".into(), components: None }.build(Some(m))
        }
    }
}

fn start_point(cfg: &RunConfig) -> Result<(Option<Protocol>, [f64; 2]), CliError> {
    if let Some(pc) = &cfg.protocol {
        let p = pc.build()?;
        if p.dim() != 2 {
            return Err(CliError::Validation(
                "protocol: stochastic runs need a planar protocol".into(),
            ));
        }
        let s = p.point(0.0);
        Ok((Some(p), [s[0], s[1]]))
    } else if let Some(centers) = &cfg.sweep.centers {
        Ok((None, centers[0]))
    } else {
        Ok((None, [0.0, 0.0]))
    }
}

/// Bin edges and counts, honoring `numeric.bins` when it overrides the
/// ensemble's built-in binning.
fn binned(ens: &WorkEnsemble, bins: Option<usize>) -> (Vec<f64>, Vec<u64>) {
    match bins {
        None => (ens.histogram.edges.clone(), ens.histogram.counts.clone()),
        Some(b) => {
            let b = b.max(1);
            let lo = ens.finals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ens.finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let hi = if hi > lo { hi } else { lo + 1e-12 };
            let width = (hi - lo) / b as f64;
            let edges: Vec<f64> = (0..=b).map(|k| lo + k as f64 * width).collect();
            let mut counts = vec![0_u64; b];
            for &x in &ens.finals {
                let idx = (((x - lo) / width).floor() as isize).clamp(0, b as isize - 1) as usize;
                counts[idx] += 1;
            }
            (edges, counts)
        }
    }
}

fn histogram_table(
    ens: &WorkEnsemble,
    cfg: &RunConfig,
    ctx: &RunContext,
    seed: u64,
) -> ResultTable {
    let mut table = ResultTable::new(vec![
        Column::new("w_lo", "energy"),
        Column::new("w_mid", "energy"),
        Column::new("w_hi", "energy"),
        Column::new("count", "1"),
        Column::new("density", "1/energy"),
    ]);
    stamp(&mut table, cfg, ctx, Some(seed));
    let (edges, counts) = binned(ens, cfg.numeric.bins);
    let n = ens.finals.len() as f64;
    for (k, &c) in counts.iter().enumerate() {
        let lo = edges[k];
        let hi = edges[k + 1];
        let width = hi - lo;
        let density = if width > 0.0 { c as f64 / (n * width) } else { 0.0 };
        table.push_row(vec![lo, 0.5 * (lo + hi), hi, c as f64, density]);
    }
    table
}

fn cmd_sde_ensemble(cfg: &RunConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.model.as_ref().map(|m| m.build()).transpose()?;
    let connection = build_connection(cfg, model.as_ref())?;
    let sde = crate::config::build_sde(cfg)?;
    let seed = ctx.seed(cfg).expect("validated");
    let dt = cfg.numeric.dt.unwrap_or(1e-3);
    let t_final = cfg.numeric.t_final.unwrap_or(1.0);
    let n = cfg.numeric.samples.unwrap_or(10_000);
    let (_, initial) = start_point(cfg)?;
    let ens = ensemble(&sde, &connection, &initial, t_final, dt, n, seed)?;

    let mut summary = ResultTable::new(vec![
        Column::new("n", "1"),
        Column::new("t_final", "time"),
        Column::new("dt", "time"),
        Column::new("noise", "energy^2/time"),
        Column::new("mean_w", "energy"),
        Column::new("var_w", "energy^2"),
        Column::new("skew_w", "1"),
        Column::new("stderr_w", "energy"),
    ]);
    stamp(&mut summary, cfg, ctx, Some(seed));
    summary.push_row(vec![
        n as f64,
        t_final,
        dt,
        cfg.numeric.noise.expect("validated"),
        ens.mean,
        ens.variance,
        ens.skewness,
        ens.std_error,
    ]);
    let csv = ctx.path(cfg, "ensemble.csv");
    summary.write(&csv)?;

    let hist = histogram_table(&ens, cfg, ctx, seed);
    let hist_csv = ctx.path(cfg, "ensemble_hist.csv");
    hist.write(&hist_csv)?;

    let mut out = vec![csv, hist_csv.clone()];
    if cfg.output.gnuplot {
        let gp = ctx.path(cfg, "ensemble.gp");
        let script = format!(
            "{}set style fill solid 0.5\nset xlabel 'W'\nset ylabel 'probability density'\nplot '{}' using 2:5 with boxes title 'work distribution'\n",
            script_preamble("fluctuating-work histogram"),
            file_name(&hist_csv)
        );
        write_script(&gp, &script)?;
        out.push(gp);
    }
    Ok(out)
}

fn cmd_fp_solve(cfg: &RunConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.model.as_ref().map(|m| m.build()).transpose()?;
    let connection = build_connection(cfg, model.as_ref())?;
    let sde = crate::config::build_sde(cfg)?;
    let seed = ctx.seed(cfg).expect("validated");
    let t_final = cfg.numeric.t_final.unwrap_or(1.0);
    let (_, center) = start_point(cfg)?;
    let options = FpOptions {
        nl: cfg.numeric.grid.unwrap_or(64),
        lambda_center: center,
        ..FpOptions::default()
    };
    let trace = fokker_planck_solve(&sde, &connection, &options, FpInitial::DeltaAtCenter, t_final)?;

    let mut table = ResultTable::new(vec![
        Column::new("t", "time"),
        Column::new("mass", "1"),
        Column::new("leakage", "1"),
        Column::new("mean_w", "energy"),
        Column::new("var_w", "energy^2"),
    ]);
    stamp(&mut table, cfg, ctx, Some(seed));
    table.meta("dt", format!("{:.12e}", trace.dt));
    table.meta("steps", trace.n_steps);
    let g = &trace.final_density.grid;
    table.meta("grid", format!("{}x{}x{}", g.nl, g.nl, g.nw));
    for i in 0..trace.times.len() {
        table.push_row(vec![
            trace.times[i],
            trace.mass[i],
            trace.leakage[i],
            trace.mean_w[i],
            trace.var_w[i],
        ]);
    }
    let csv = ctx.path(cfg, "fp_trace.csv");
    table.write(&csv)?;

    let mut marginal = ResultTable::new(vec![
        Column::new("w", "energy"),
        Column::new("density", "1/energy"),
    ]);
    stamp(&mut marginal, cfg, ctx, Some(seed));
    let marg = trace.final_density.w_marginal();
    for (k, &p) in marg.iter().enumerate() {
        marginal.push_row(vec![g.w_center(k), p]);
    }
    let marg_csv = ctx.path(cfg, "fp_wmarginal.csv");
    marginal.write(&marg_csv)?;

    let mut out = vec![csv.clone(), marg_csv.clone()];

    // With a tilt parameter, also evolve the generating function
    // Z(λ, χ, t) and record its spatial integral ⟨e^{−χW}⟩ over time.
    if let Some(chi) = cfg.numeric.chi {
        let topts = TiltedOptions {
            nl: cfg.numeric.grid.unwrap_or(64),
            lambda_center: center,
            ..TiltedOptions::default()
        };
        let ttrace = tilted_evolve(&sde, &connection, chi, &topts, t_final)?;
        let mut ttable = ResultTable::new(vec![
            Column::new("t", "time"),
            Column::new("generating_function", "1"),
        ]);
        stamp(&mut ttable, cfg, ctx, Some(seed));
        ttable.meta("chi", format!("{chi:.12e}"));
        for (i, &t) in ttrace.times.iter().enumerate() {
            ttable.push_row(vec![t, ttrace.integral[i]]);
        }
        let tilted_csv = ctx.path(cfg, "fp_tilted.csv");
        ttable.write(&tilted_csv)?;
        out.push(tilted_csv);
    }

    if cfg.output.gnuplot {
        let gp = ctx.path(cfg, "fp.gp");
        let script = format!(
            "{}set xlabel 'W'\nset ylabel 'marginal density'\nplot '{}' using 1:2 with lines title 'final W marginal'\n",
            script_preamble("work marginal from the density solve"),
            file_name(&marg_csv)
        );
        write_script(&gp, &script)?;
        out.push(gp);
    }
    Ok(out)
}

fn cmd_jarzynski(cfg: &RunConfig, ctx: &RunContext) -> Result<Vec<PathBuf>, CliError> {
    let mc = cfg.model.as_ref().expect("validated");
    let model = mc.build()?;
    let protocol = cfg
        .protocol
        .as_ref()
        .ok_or_else(|| CliError::Validation("protocol: required for jarzynski".into()))?
        .build()?;
    let seed = ctx.seed(cfg).expect("validated");
    let d = cfg.numeric.noise.expect("validated");
    let dt = cfg.numeric.dt.unwrap_or(1e-3);
    let t_final = cfg.numeric.t_final.unwrap_or(1.0);
    let n = cfg.numeric.samples.unwrap_or(10_000);
    let (report, ens) = jarzynski_bridge_check(
        &model,
        &protocol,
        &NoiseSpec::Isotropic { d },
        t_final,
        dt,
        n,
        seed,
    )?;

    let mut table = ResultTable::new(vec![
        Column::new("n", "1"),
        Column::new("beta", "1/energy"),
        Column::new("delta_f", "energy"),
        Column::new("target", "1"),
        Column::new("estimate", "1"),
        Column::new("stderr", "1"),
        Column::new("z", "1"),
    ]);
    stamp(&mut table, cfg, ctx, Some(seed));
    table.push_row(vec![
        report.n as f64,
        report.beta,
        report.delta_f,
        report.target,
        report.estimate,
        report.std_error,
        report.z_score,
    ]);
    let csv = ctx.path(cfg, "jarzynski.csv");
    table.write(&csv)?;

    let hist = histogram_table(&ens, cfg, ctx, seed);
    let hist_csv = ctx.path(cfg, "jarzynski_hist.csv");
    hist.write(&hist_csv)?;
    Ok(vec![csv, hist_csv])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn run(json: &str, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let cfg = RunConfig::from_json(json)?;
        cfg.validate()?;
        let ctx = RunContext {
            config_text: json.to_string(),
            out_dir: dir.to_path_buf(),
            seed_override: None,
            tolerance_override: None,
        };
        execute(&cfg, &ctx)
    }

    #[test]
    fn cycle_work_emits_summary_and_trace() {
        let dir = tempfile::tempdir().unwrap();
        let json = r#"{
            "command": "cycle-work",
            "model": {"mode": "thermal", "beta": 1.0},
            "protocol": {"shape": "circle", "center": [1.0, 1.0], "radius": 0.3},
            "numeric": {"nodes": 64}
        }"#;
        let files = run(json, dir.path()).unwrap();
        assert!(files.iter().any(|p| p.ends_with("run_cycle.csv")));
        let text = std::fs::read_to_string(dir.path().join("run_cycle.csv")).unwrap();
        assert!(text.contains("w_line[energy]"));
        // A thermal loop does no net work: the summary row starts with ~0.
        let row = text
            .lines()
            .find(|l| l.starts_with(|c: char| c.is_ascii_digit() || c == '-'))
            .unwrap();
        let w: f64 = row.split(',').nth(0).unwrap().parse().unwrap();
        assert!(w.abs() < 1e-8, "thermal loop work {w}");
    }

    #[test]
    fn sde_ensemble_is_seed_deterministic() {
        let json = r#"{
            "command": "sde-ensemble",
            "connection": {"type": "constant", "components": [0.5, 0.0]},
            "numeric": {"noise": 0.2, "samples": 200, "dt": 0.01, "t_final": 0.2, "seed": 7}
        }"#;
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run(json, d1.path()).unwrap();
        run(json, d2.path()).unwrap();
        let a = std::fs::read_to_string(d1.path().join("run_ensemble.csv")).unwrap();
        let b = std::fs::read_to_string(d2.path().join("run_ensemble.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eta_map_needs_centers() {
        let dir = tempfile::tempdir().unwrap();
        let json = r#"{
            "command": "eta-map",
            "model": {"mode": "coherent", "gamma": 1.0, "p": 1.0, "beta": 1.0},
            "sweep": {"radius": 0.05}
        }"#;
        let err = run(json, dir.path()).unwrap_err();
        assert!(matches!(err, CliError::Validation(_)), "{err:?}");
    }
}
