//! Run configuration: JSON schema, validation with path-precise messages,
//! and builders that turn config blocks into library objects.

use serde::Deserialize;

use curvwork::cycles::{Protocol, SurfaceResolution};
use curvwork::geometry::{ControlModel, RateSpec, SolverKind};
use curvwork::stochastic::{
    ConnectionField, ControlSde, DriftSpec, NoiseSpec,
};

use crate::error::CliError;

fn invalid(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{path}: {msg}"))
}

/// Top-level run configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// One of: curvature-map, cycle-work, radius-sweep, phase-sweep,
    /// eta-map, sde-ensemble, fp-solve, jarzynski, selfcheck.
    pub command: String,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub protocol: Option<ProtocolConfig>,
    #[serde(default)]
    pub connection: Option<ConnectionConfig>,
    #[serde(default)]
    pub numeric: NumericConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

pub const COMMANDS: &[&str] = &[
    "curvature-map",
    "cycle-work",
    "radius-sweep",
    "phase-sweep",
    "eta-map",
    "sde-ensemble",
    "fp-solve",
    "jarzynski",
    "selfcheck",
];

const STOCHASTIC_COMMANDS: &[&str] = &["sde-ensemble", "fp-solve", "jarzynski"];

impl RunConfig {
    /// Parse a JSON document; serde errors carry line/column positions.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !COMMANDS.contains(&self.command.as_str()) {
            return Err(invalid(
                "command",
                format!("unknown command {:?}; expected one of {}", self.command, COMMANDS.join(", ")),
            ));
        }
        if let Some(m) = &self.model {
            m.validate("model")?;
        }
        if let Some(p) = &self.protocol {
            p.validate("protocol")?;
        }
        if let Some(c) = &self.connection {
            c.validate("connection")?;
        }
        self.numeric.validate("numeric")?;
        self.sweep.validate("sweep")?;
        self.requirements()
    }

    /// Cross-field requirements per command.
    fn requirements(&self) -> Result<(), CliError> {
        let cmd = self.command.as_str();
        let needs_model = matches!(
            cmd,
            "curvature-map" | "cycle-work" | "radius-sweep" | "phase-sweep" | "eta-map" | "jarzynski"
        );
        if needs_model && self.model.is_none() {
            return Err(invalid("model", format!("required for command {cmd:?}")));
        }
        let needs_protocol = matches!(cmd, "cycle-work" | "phase-sweep" | "jarzynski");
        if needs_protocol && self.protocol.is_none() && cmd != "phase-sweep" {
            return Err(invalid("protocol", format!("required for command {cmd:?}")));
        }
        if STOCHASTIC_COMMANDS.contains(&cmd) {
            if self.numeric.seed.is_none() {
                return Err(invalid(
                    "numeric.seed",
                    format!("required for stochastic command {cmd:?} (or pass --seed)"),
                ));
            }
            if self.numeric.noise.is_none() {
                return Err(invalid(
                    "numeric.noise",
                    format!("isotropic noise level required for {cmd:?}"),
                ));
            }
        }
        if matches!(cmd, "sde-ensemble" | "fp-solve") && self.connection.is_none() && self.model.is_none()
        {
            return Err(invalid(
                "connection",
                "stochastic runs need either a connection block or a model block",
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Model block
// ---------------------------------------------------------------------------

/// An inclusive coordinate range with a node count.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl RangeConfig {
    fn validate(&self, path: &str) -> Result<(), CliError> {
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(invalid(path, "bounds must be finite"));
        }
        if self.max < self.min {
            return Err(invalid(path, format!("max {} < min {}", self.max, self.min)));
        }
        if self.count < 2 {
            return Err(invalid(path, format!("count must be ≥ 2, got {}", self.count)));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.count;
        (0..n)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// "thermal" (eigenbasis bath, Gibbs stationary state), "coherent"
    /// (fixed-basis bath, total rate + bias), or "generic" (explicit
    /// γ↓, γ↑).
    pub mode: String,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub temperature: Option<f64>,
    /// Total relaxation rate (thermal bath rate, or γ = γ↓+γ↑).
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Fixed bias p = (γ↓−γ↑)/γ for coherent mode.
    #[serde(default)]
    pub p: Option<f64>,
    /// Tie the coherent bias to tanh(βε/2) pointwise.
    #[serde(default)]
    pub detailed_balance: bool,
    #[serde(default)]
    pub gamma_down: Option<f64>,
    #[serde(default)]
    pub gamma_up: Option<f64>,
    /// Add temperature as a third control coordinate (thermal mode only).
    #[serde(default)]
    pub temperature_axis: bool,
    /// "closed-form" (default) or "null-space".
    #[serde(default)]
    pub solver: Option<String>,
    #[serde(default)]
    pub omega: Option<RangeConfig>,
    #[serde(default)]
    pub g: Option<RangeConfig>,
}

impl ModelConfig {
    fn validate(&self, path: &str) -> Result<(), CliError> {
        match self.mode.as_str() {
            "thermal" => {
                if !self.temperature_axis && self.beta.is_none() && self.temperature.is_none() {
                    return Err(invalid(
                        &format!("{path}.beta"),
                        "thermal mode needs beta or temperature (or temperature_axis)",
                    ));
                }
                if self.beta.is_some() && self.temperature.is_some() {
                    return Err(invalid(
                        &format!("{path}.beta"),
                        "give beta or temperature, not both",
                    ));
                }
            }
            "coherent" => {
                if self.gamma.is_none() {
                    return Err(invalid(&format!("{path}.gamma"), "coherent mode needs gamma"));
                }
                if self.detailed_balance {
                    if self.beta.is_none() && self.temperature.is_none() {
                        return Err(invalid(
                            &format!("{path}.beta"),
                            "detailed_balance needs beta or temperature",
                        ));
                    }
                } else if self.p.is_none() {
                    return Err(invalid(
                        &format!("{path}.p"),
                        "coherent mode needs p (or detailed_balance with beta)",
                    ));
                }
                if self.temperature_axis {
                    return Err(invalid(
                        &format!("{path}.temperature_axis"),
                        "only the thermal mode supports a temperature axis",
                    ));
                }
            }
            "generic" => {
                if self.gamma_down.is_none() || self.gamma_up.is_none() {
                    return Err(invalid(
                        &format!("{path}.gamma_down"),
                        "generic mode needs gamma_down and gamma_up",
                    ));
                }
                if self.temperature_axis {
                    return Err(invalid(
                        &format!("{path}.temperature_axis"),
                        "only the thermal mode supports a temperature axis",
                    ));
                }
            }
            other => {
                return Err(invalid(
                    &format!("{path}.mode"),
                    format!("expected thermal|coherent|generic, got {other:?}"),
                ))
            }
        }
        for (r, name) in [(self.omega, "omega"), (self.g, "g")] {
            if let Some(r) = r {
                r.validate(&format!("{path}.{name}"))?;
            }
        }
        if let Some(s) = &self.solver {
            if s != "closed-form" && s != "null-space" {
                return Err(invalid(
                    &format!("{path}.solver"),
                    format!("expected closed-form|null-space, got {s:?}"),
                ));
            }
        }
        Ok(())
    }

    pub fn effective_beta(&self) -> Option<f64> {
        self.beta.or(self.temperature.map(|t| 1.0 / t))
    }

    fn solver_kind(&self) -> SolverKind {
        match self.solver.as_deref() {
            Some("null-space") => SolverKind::NullSpace,
            _ => SolverKind::ClosedForm,
        }
    }

    /// Build the library model.
    pub fn build(&self) -> Result<ControlModel, CliError> {
        let solver = self.solver_kind();
        let model = match self.mode.as_str() {
            "thermal" => {
                let rate = self.gamma.unwrap_or(1.0);
                if self.temperature_axis {
                    ControlModel::thermal_with_temperature_axis(rate)?
                } else {
                    let beta = self
                        .effective_beta()
                        .ok_or_else(|| invalid("model.beta", "missing temperature"))?;
                    ControlModel::thermal(beta, rate)?
                }
            }
            "coherent" => {
                let gamma = self.gamma.expect("validated");
                let rates = if self.detailed_balance {
                    let beta = self.effective_beta().expect("validated");
                    RateSpec::DetailedBalance { gamma, beta }
                } else {
                    RateSpec::FixedBias { gamma, p: self.p.expect("validated") }
                };
                ControlModel::fixed_basis(rates, solver)?
            }
            "generic" => ControlModel::fixed_basis(
                RateSpec::Explicit {
                    gamma_down: self.gamma_down.expect("validated"),
                    gamma_up: self.gamma_up.expect("validated"),
                },
                solver,
            )?,
            _ => unreachable!("validated"),
        };
        Ok(model)
    }
}

// ---------------------------------------------------------------------------
// Protocol block
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// "circle", "ellipse", "temperature-ellipse", or "polyline".
    pub shape: String,
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub b: Option<f64>,
    /// Base temperature of a temperature-modulated loop.
    #[serde(default)]
    pub t0: Option<f64>,
    /// Temperature modulation depth.
    #[serde(default)]
    pub delta_t: Option<f64>,
    /// Modulation phase offset.
    #[serde(default)]
    pub phase: Option<f64>,
    #[serde(default)]
    pub vertices: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub closed: Option<bool>,
    #[serde(default)]
    pub reversed: bool,
}

impl ProtocolConfig {
    fn validate(&self, path: &str) -> Result<(), CliError> {
        match self.shape.as_str() {
            "circle" => {
                if self.center.is_none() || self.radius.is_none() {
                    return Err(invalid(path, "circle needs center and radius"));
                }
            }
            "ellipse" | "temperature-ellipse" => {
                if self.center.is_none() || self.a.is_none() || self.b.is_none() {
                    return Err(invalid(path, format!("{} needs center, a, b", self.shape)));
                }
                if self.shape == "temperature-ellipse" && self.t0.is_none() {
                    return Err(invalid(&format!("{path}.t0"), "temperature-ellipse needs t0"));
                }
            }
            "polyline" => {
                let n = self.vertices.as_ref().map_or(0, |v| v.len());
                if n < 2 {
                    return Err(invalid(
                        &format!("{path}.vertices"),
                        format!("polyline needs at least 2 vertices, got {n}"),
                    ));
                }
            }
            other => {
                return Err(invalid(
                    &format!("{path}.shape"),
                    format!("expected circle|ellipse|temperature-ellipse|polyline, got {other:?}"),
                ))
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Protocol, CliError> {
        let base = match self.shape.as_str() {
            "circle" => {
                let c = self.center.expect("validated");
                Protocol::Circle { center: (c[0], c[1]), radius: self.radius.expect("validated") }
            }
            "ellipse" => {
                let c = self.center.expect("validated");
                Protocol::OffsetEllipse {
                    center: (c[0], c[1]),
                    a: self.a.expect("validated"),
                    b: self.b.expect("validated"),
                }
            }
            "temperature-ellipse" => {
                let c = self.center.expect("validated");
                Protocol::TemperatureModulated {
                    center: (c[0], c[1]),
                    a: self.a.expect("validated"),
                    b: self.b.expect("validated"),
                    t0: self.t0.expect("validated"),
                    dt: self.delta_t.unwrap_or(0.0),
                    phase: self.phase.unwrap_or(0.0),
                }
            }
            "polyline" => Protocol::PiecewiseLinear {
                vertices: self
                    .vertices
                    .as_ref()
                    .expect("validated")
                    .iter()
                    .map(|v| (v[0], v[1]))
                    .collect(),
                closed: self.closed.unwrap_or(true),
            },
            _ => unreachable!("validated"),
        };
        base.validate()?;
        let protocol = if self.reversed { Protocol::Reversed(Box::new(base)) } else { base };
        Ok(protocol)
    }
}

// ---------------------------------------------------------------------------
// Connection block (stochastic commands)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionConfig {
    /// "model" (use the model block's work one-form) or "constant".
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub components: Option<Vec<f64>>,
}

impl ConnectionConfig {
    fn validate(&self, path: &str) -> Result<(), CliError> {
        match self.kind.as_str() {
            "model" => Ok(()),
            "constant" => {
                let n = self.components.as_ref().map_or(0, |c| c.len());
                if n != 2 {
                    Err(invalid(
                        &format!("{path}.components"),
                        format!("constant connection needs exactly 2 components, got {n}"),
                    ))
                } else {
                    Ok(())
                }
            }
            other => Err(invalid(
                &format!("{path}.type"),
                format!("expected model|constant, got {other:?}"),
            )),
        }
    }

    pub fn build(&self, model: Option<&ControlModel>) -> Result<ConnectionField, CliError> {
        match self.kind.as_str() {
            "constant" => Ok(ConnectionField::Constant(
                self.components.clone().expect("validated"),
            )),
            "model" => {
                let m = model.ok_or_else(|| {
                    invalid("connection.type", "\"model\" requires a model block")
                })?;
                Ok(ConnectionField::Model(m.clone()))
            }
            _ => unreachable!("validated"),
        }
    }
}

// ---------------------------------------------------------------------------
// Numeric block
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NumericConfig {
    /// Line-quadrature node count.
    #[serde(default)]
    pub nodes: Option<usize>,
    /// Surface-quadrature radial × angular resolution.
    #[serde(default)]
    pub radial: Option<usize>,
    #[serde(default)]
    pub angular: Option<usize>,
    /// Generic tolerance used by convergence-checked quadratures.
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Stochastic / evolution time step.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_final: Option<f64>,
    /// Ensemble size.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Histogram bin count.
    #[serde(default)]
    pub bins: Option<usize>,
    /// Isotropic control-noise level D.
    #[serde(default)]
    pub noise: Option<f64>,
    /// Tilt parameter χ for the generating-function solve.
    #[serde(default)]
    pub chi: Option<f64>,
    /// Density-grid cells per control axis.
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl NumericConfig {
    fn validate(&self, path: &str) -> Result<(), CliError> {
        for (v, name) in [
            (self.tolerance, "tolerance"),
            (self.dt, "dt"),
            (self.t_final, "t_final"),
            (self.noise, "noise"),
        ] {
            if let Some(x) = v {
                if !(x > 0.0) || !x.is_finite() {
                    return Err(invalid(
                        &format!("{path}.{name}"),
                        format!("must be positive and finite, got {x}"),
                    ));
                }
            }
        }
        if let Some(n) = self.samples {
            if n < 2 {
                return Err(invalid(&format!("{path}.samples"), format!("must be ≥ 2, got {n}")));
            }
        }
        Ok(())
    }

    pub fn surface_resolution(&self) -> SurfaceResolution {
        let default = SurfaceResolution::default();
        SurfaceResolution {
            radial: self.radial.unwrap_or(default.radial),
            angular: self.angular.unwrap_or(default.angular),
        }
    }
}

// ---------------------------------------------------------------------------
// Sweep block
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Loop radii for radius sweeps.
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
    /// Inverse temperatures for radius sweeps.
    #[serde(default)]
    pub betas: Option<Vec<f64>>,
    /// Number of phase samples for phase sweeps.
    #[serde(default)]
    pub phases: Option<usize>,
    /// Loop centers for η maps.
    #[serde(default)]
    pub centers: Option<Vec<[f64; 2]>>,
    /// Loop radius for η maps.
    #[serde(default)]
    pub radius: Option<f64>,
}

impl SweepConfig {
    fn validate(&self, path: &str) -> Result<(), CliError> {
        if let Some(r) = &self.radii {
            if r.is_empty() {
                return Err(invalid(&format!("{path}.radii"), "must be non-empty"));
            }
            if r.iter().any(|x| !(*x > 0.0)) {
                return Err(invalid(&format!("{path}.radii"), "radii must be positive"));
            }
        }
        if let Some(b) = &self.betas {
            if b.iter().any(|x| !(*x > 0.0)) {
                return Err(invalid(&format!("{path}.betas"), "betas must be positive"));
            }
        }
        if let Some(p) = self.phases {
            if p < 4 {
                return Err(invalid(&format!("{path}.phases"), format!("need ≥ 4 phases, got {p}")));
            }
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(invalid(&format!("{path}.radius"), format!("must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Output block
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// File-name prefix for emitted tables.
    #[serde(default = "default_prefix")]
    pub prefix: String,
    /// Emit a gnuplot companion script.
    #[serde(default = "default_true")]
    pub gnuplot: bool,
}

fn default_prefix() -> String {
    "run".to_string()
}

fn default_true() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { prefix: default_prefix(), gnuplot: default_true() }
    }
}

// ---------------------------------------------------------------------------
// Stochastic assembly helpers
// ---------------------------------------------------------------------------

/// Build the control SDE shared by the stochastic commands (zero drift; the
/// protocol enters through the bridge sampler, or as a deterministic drift in
/// `sde-ensemble` when a protocol block is present).
pub fn build_sde(cfg: &RunConfig) -> Result<ControlSde, CliError> {
    let d = cfg
        .numeric
        .noise
        .ok_or_else(|| invalid("numeric.noise", "required"))?;
    let drift = match (&cfg.protocol, cfg.command.as_str()) {
        (Some(p), "sde-ensemble") => {
            let protocol = p.build()?;
            let period = cfg.numeric.t_final.unwrap_or(1.0);
            DriftSpec::Protocol { protocol, period }
        }
        _ => DriftSpec::Zero,
    };
    Ok(ControlSde::new(2, drift, NoiseSpec::Isotropic { d })?)
}
