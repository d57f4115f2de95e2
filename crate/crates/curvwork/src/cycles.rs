//! Control protocols, cycle-work quadratures, first-law bookkeeping, and the
//! coherence-induced work-reduction factor.
//!
//! Closed smooth loops are integrated with the periodic trapezoid rule
//! (spectrally accurate for analytic integrands); open paths use composite
//! Simpson; piecewise-linear paths use Simpson per segment. Surface
//! integrals over disks and ellipses use Gauss–Legendre radial × trapezoid
//! angular product quadrature; polygons are fan-triangulated with signed
//! areas and integrated by a refined centroid rule.

use ndarray::prelude::*;
use ndarray_linalg::Solve;

use crate::error::{CurvworkError, Result};
use crate::geometry::{
    coherent_curvature_density, population_curvature_density, work_one_form, ControlModel,
    CurvatureField, CurvatureMode,
};

use std::f64::consts::PI;

/// Minimum node count accepted by the line quadratures.
pub const MIN_LINE_NODES: usize = 16;

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

/// A control protocol: a path `θ ∈ [0, 2π] ↦ λ(θ)` on the control chart.
#[derive(Debug, Clone, PartialEq)]
pub enum Protocol {
    /// Circle of radius `r` around `(ω₀, g₀)`, traversed counterclockwise.
    Circle { center: (f64, f64), radius: f64 },
    /// Axis-aligned ellipse `λ(θ) = center + (a cos θ, b sin θ)`.
    OffsetEllipse { center: (f64, f64), a: f64, b: f64 },
    /// Ellipse on the `(ω, g)` plane with a synchronized temperature trace
    /// `T(θ) = T₀ + ΔT cos(θ + φ)`; lives on the `(ω, g, T)` chart.
    TemperatureModulated {
        center: (f64, f64),
        a: f64,
        b: f64,
        t0: f64,
        dt: f64,
        phase: f64,
    },
    /// Straight segments through the listed vertices; when `closed`, the
    /// last vertex connects back to the first.
    PiecewiseLinear { vertices: Vec<(f64, f64)>, closed: bool },
    /// The same path traversed in the opposite direction.
    Reversed(Box<Protocol>),
}

impl Protocol {
    /// Validate geometric and physical constraints.
    pub fn validate(&self) -> Result<()> {
        match self {
            Protocol::Circle { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(CurvworkError::InvalidInput(format!(
                        "circle radius must be positive, got {radius}"
                    )));
                }
            }
            Protocol::OffsetEllipse { a, b, .. } => {
                if !(*a > 0.0) || !(*b > 0.0) {
                    return Err(CurvworkError::InvalidInput(format!(
                        "ellipse semi-axes must be positive, got ({a}, {b})"
                    )));
                }
            }
            Protocol::TemperatureModulated { a, b, t0, dt, .. } => {
                if *a < 0.0 || *b < 0.0 {
                    return Err(CurvworkError::InvalidInput(format!(
                        "semi-axes must be ≥ 0, got ({a}, {b})"
                    )));
                }
                if !(*dt >= 0.0) || !(*t0 - *dt > 0.0) {
                    return Err(CurvworkError::InvalidInput(format!(
                        "temperature trace must stay positive: T₀ = {t0}, ΔT = {dt}"
                    )));
                }
            }
            Protocol::PiecewiseLinear { vertices, .. } => {
                if vertices.len() < 2 {
                    return Err(CurvworkError::InvalidInput(format!(
                        "piecewise path needs at least 2 vertices, got {}",
                        vertices.len()
                    )));
                }
            }
            Protocol::Reversed(inner) => inner.validate()?,
        }
        Ok(())
    }

    /// Whether `λ(0) = λ(2π)`.
    pub fn is_closed(&self) -> bool {
        match self {
            Protocol::Circle { .. }
            | Protocol::OffsetEllipse { .. }
            | Protocol::TemperatureModulated { .. } => true,
            Protocol::PiecewiseLinear { closed, .. } => *closed,
            Protocol::Reversed(inner) => inner.is_closed(),
        }
    }

    /// Dimension of the chart the protocol lives on (3 when temperature is
    /// modulated, else 2).
    pub fn dim(&self) -> usize {
        match self {
            Protocol::TemperatureModulated { .. } => 3,
            Protocol::Reversed(inner) => inner.dim(),
            _ => 2,
        }
    }

    /// The point `λ(θ)`.
    pub fn point(&self, theta: f64) -> Vec<f64> {
        match self {
            Protocol::Circle { center, radius } => vec![
                center.0 + radius * theta.cos(),
                center.1 + radius * theta.sin(),
            ],
            Protocol::OffsetEllipse { center, a, b } => {
                vec![center.0 + a * theta.cos(), center.1 + b * theta.sin()]
            }
            Protocol::TemperatureModulated { center, a, b, t0, dt, phase } => vec![
                center.0 + a * theta.cos(),
                center.1 + b * theta.sin(),
                t0 + dt * (theta + phase).cos(),
            ],
            Protocol::PiecewiseLinear { .. } => {
                let (p0, p1, s) = self.segment_at(theta);
                vec![p0.0 + s * (p1.0 - p0.0), p0.1 + s * (p1.1 - p0.1)]
            }
            Protocol::Reversed(inner) => inner.point(2.0 * PI - theta),
        }
    }

    /// The velocity `dλ/dθ`.
    pub fn velocity(&self, theta: f64) -> Vec<f64> {
        match self {
            Protocol::Circle { radius, .. } => {
                vec![-radius * theta.sin(), radius * theta.cos()]
            }
            Protocol::OffsetEllipse { a, b, .. } => {
                vec![-a * theta.sin(), b * theta.cos()]
            }
            Protocol::TemperatureModulated { a, b, dt, phase, .. } => vec![
                -a * theta.sin(),
                b * theta.cos(),
                -dt * (theta + phase).sin(),
            ],
            Protocol::PiecewiseLinear { .. } => {
                let (p0, p1, _) = self.segment_at(theta);
                let frac = 1.0 / self.segment_span();
                vec![(p1.0 - p0.0) * frac, (p1.1 - p0.1) * frac]
            }
            Protocol::Reversed(inner) => inner
                .velocity(2.0 * PI - theta)
                .into_iter()
                .map(|v| -v)
                .collect(),
        }
    }

    /// Number of straight segments of a piecewise path (1 for smooth
    /// families, which are treated as a single segment).
    fn segment_count(&self) -> usize {
        match self {
            Protocol::PiecewiseLinear { vertices, closed } => {
                if *closed {
                    vertices.len()
                } else {
                    vertices.len() - 1
                }
            }
            Protocol::Reversed(inner) => inner.segment_count(),
            _ => 1,
        }
    }

    /// θ-width of one straight segment.
    fn segment_span(&self) -> f64 {
        2.0 * PI / self.segment_count() as f64
    }

    /// For piecewise paths: endpoints of the segment containing `θ` and the
    /// fractional position within it.
    fn segment_at(&self, theta: f64) -> ((f64, f64), (f64, f64), f64) {
        if let Protocol::PiecewiseLinear { vertices, closed } = self {
            let nseg = self.segment_count();
            let span = self.segment_span();
            let t = (theta / span).clamp(0.0, nseg as f64);
            let k = (t.floor() as usize).min(nseg - 1);
            let s = t - k as f64;
            let p0 = vertices[k];
            let p1 = if k + 1 < vertices.len() {
                vertices[k + 1]
            } else {
                debug_assert!(*closed);
                vertices[0]
            };
            (p0, p1, s)
        } else {
            unreachable!("segment_at is only called for piecewise paths")
        }
    }

    /// The planar region enclosed by a closed protocol on the `(ω, g)`
    /// plane, together with the orientation sign of the traversal
    /// (+1 for counterclockwise).
    pub fn enclosed_region(&self) -> Result<(Region, f64)> {
        match self {
            Protocol::Circle { center, radius } => {
                Ok((Region::Disk { center: *center, radius: *radius }, 1.0))
            }
            Protocol::OffsetEllipse { center, a, b } => {
                Ok((Region::Ellipse { center: *center, a: *a, b: *b }, 1.0))
            }
            Protocol::PiecewiseLinear { vertices, closed: true } => {
                Ok((Region::Polygon { vertices: vertices.clone() }, 1.0))
            }
            Protocol::Reversed(inner) => {
                let (region, sign) = inner.enclosed_region()?;
                Ok((region, -sign))
            }
            Protocol::TemperatureModulated { .. } => Err(CurvworkError::InvalidInput(
                "temperature-modulated loops are not planar in (ω, g) × T".into(),
            )),
            Protocol::PiecewiseLinear { closed: false, .. } => Err(
                CurvworkError::InvalidInput("open path encloses no region".into()),
            ),
        }
    }
}

// ---------------------------------------------------------------------------
// Line quadrature
// ---------------------------------------------------------------------------

fn check_model_protocol(model: &ControlModel, protocol: &Protocol) -> Result<()> {
    protocol.validate()?;
    if model.dim() != protocol.dim() {
        return Err(CurvworkError::DimensionMismatch {
            context: format!(
                "model chart has dim {}, protocol needs {}",
                model.dim(),
                protocol.dim()
            ),
        });
    }
    Ok(())
}

/// Work along a protocol: `W = ∫ A_i dλ^i/dθ dθ`.
///
/// Closed smooth loops use the periodic trapezoid rule; open smooth paths
/// use composite Simpson; piecewise-linear paths use composite Simpson on
/// each straight segment. Only work-masked coordinates contribute (the
/// one-form carries structural zeros elsewhere). Reversed protocols evaluate
/// the underlying path and negate, so reversal negates the result exactly.
pub fn line_integral_work(
    model: &ControlModel,
    protocol: &Protocol,
    n: usize,
) -> Result<f64> {
    check_model_protocol(model, protocol)?;
    if n < MIN_LINE_NODES {
        return Err(CurvworkError::InvalidInput(format!(
            "need at least {MIN_LINE_NODES} nodes, got {n}"
        )));
    }
    if let Protocol::Reversed(inner) = protocol {
        return Ok(-line_integral_work(model, inner, n)?);
    }
    let power = |theta: f64| -> Result<f64> {
        let a = work_one_form(model, &protocol.point(theta))?;
        a.contract(&protocol.velocity(theta))
    };
    if let Protocol::PiecewiseLinear { vertices, closed } = protocol {
        // Simpson per straight segment, parameterized by the segment's own
        // arclength fraction so every node uses that segment's (constant)
        // velocity — evaluating the one-sided limit correctly at the shared
        // corner nodes.
        let nseg = protocol.segment_count();
        let mut per_seg = n.div_ceil(nseg).max(4);
        if per_seg % 2 == 1 {
            per_seg += 1;
        }
        let mut total = 0.0;
        for seg in 0..nseg {
            let p0 = vertices[seg];
            let p1 = if seg + 1 < vertices.len() {
                vertices[seg + 1]
            } else {
                debug_assert!(*closed);
                vertices[0]
            };
            let d = [p1.0 - p0.0, p1.1 - p0.1];
            let f = |s: f64| -> Result<f64> {
                let a = work_one_form(model, &[p0.0 + s * d[0], p0.1 + s * d[1]])?;
                a.contract(&d)
            };
            let h = 1.0 / per_seg as f64;
            let mut acc = f(0.0)? + f(1.0)?;
            for k in 1..per_seg {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * f(k as f64 * h)?;
            }
            total += acc * h / 3.0;
        }
        Ok(total)
    } else if protocol.is_closed() {
        let h = 2.0 * PI / n as f64;
        let mut total = 0.0;
        for k in 0..n {
            total += power(k as f64 * h)?;
        }
        Ok(total * h)
    } else {
        let m = if n % 2 == 1 { n + 1 } else { n };
        let h = 2.0 * PI / m as f64;
        let mut total = power(0.0)? + power(2.0 * PI)?;
        for k in 1..m {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            total += w * power(k as f64 * h)?;
        }
        Ok(total * h / 3.0)
    }
}

/// [`line_integral_work`] with a convergence check: the node count is
/// doubled and the result accepted only if the change stays within
/// `tolerance`; errors with [`CurvworkError::QuadratureNotConverged`]
/// otherwise. Returns the finer value.
pub fn line_integral_work_checked(
    model: &ControlModel,
    protocol: &Protocol,
    n: usize,
    tolerance: f64,
) -> Result<f64> {
    let coarse = line_integral_work(model, protocol, n)?;
    let fine = line_integral_work(model, protocol, 2 * n)?;
    let delta = (fine - coarse).abs();
    if delta > tolerance {
        return Err(CurvworkError::QuadratureNotConverged { delta, tolerance });
    }
    Ok(fine)
}

// ---------------------------------------------------------------------------
// Surface quadrature
// ---------------------------------------------------------------------------

/// A bounded planar region on the `(ω, g)` plane.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Disk { center: (f64, f64), radius: f64 },
    Ellipse { center: (f64, f64), a: f64, b: f64 },
    /// Vertices in traversal order; orientation (CCW vs CW) sets the sign of
    /// the enclosed signed area.
    Polygon { vertices: Vec<(f64, f64)> },
}

/// Resolution of the surface product quadrature: `radial × angular` nodes
/// for disks and ellipses; for polygons, `radial` is the per-edge
/// subdivision count of the centroid rule (each fan triangle is split into
/// `radial²` congruent subtriangles).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurfaceResolution {
    pub radial: usize,
    pub angular: usize,
}

impl Default for SurfaceResolution {
    fn default() -> Self {
        Self { radial: 64, angular: 128 }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-based initial guess for the i-th positive root.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Evaluate P_n and P_n' via the recurrence.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Flux of a curvature field through a region:
/// `W = ∬ Ω(λ) dλ¹ dλ²`.
pub fn surface_integral_work(
    model: &ControlModel,
    field: &CurvatureField,
    region: &Region,
    resolution: SurfaceResolution,
) -> Result<f64> {
    let eval = |w: f64, g: f64| -> Result<f64> {
        let mut lam = vec![w, g];
        if model.dim() == 3 {
            return Err(CurvworkError::InvalidInput(
                "surface integrals are defined on the two-coordinate (ω, g) chart".into(),
            ));
        }
        lam.truncate(model.dim());
        field.evaluate(model, &lam)
    };
    match region {
        Region::Disk { center, radius } => {
            if !(*radius > 0.0) {
                return Err(CurvworkError::InvalidInput(format!(
                    "disk radius must be positive, got {radius}"
                )));
            }
            polar_product_quadrature(*center, *radius, *radius, resolution, &eval)
        }
        Region::Ellipse { center, a, b } => {
            if !(*a > 0.0) || !(*b > 0.0) {
                return Err(CurvworkError::InvalidInput(format!(
                    "ellipse semi-axes must be positive, got ({a}, {b})"
                )));
            }
            polar_product_quadrature(*center, *a, *b, resolution, &eval)
        }
        Region::Polygon { vertices } => {
            if vertices.len() < 3 {
                return Err(CurvworkError::InvalidInput(format!(
                    "polygon needs at least 3 vertices, got {}",
                    vertices.len()
                )));
            }
            polygon_quadrature(vertices, resolution.radial.max(1), &eval)
        }
    }
}

/// Gauss–Legendre (radial) × periodic trapezoid (angular) product rule on an
/// elliptical patch; the area element is `a·b·u du dθ` for the unit-disk
/// parameterization `λ = center + (a u cos θ, b u sin θ)`.
fn polar_product_quadrature(
    center: (f64, f64),
    a: f64,
    b: f64,
    resolution: SurfaceResolution,
    eval: &dyn Fn(f64, f64) -> Result<f64>,
) -> Result<f64> {
    let nr = resolution.radial.max(2);
    let nt = resolution.angular.max(4);
    let (x, wx) = gauss_legendre(nr);
    let dtheta = 2.0 * PI / nt as f64;
    let mut total = 0.0;
    for k in 0..nt {
        let th = k as f64 * dtheta;
        let (c, s) = (th.cos(), th.sin());
        for (xi, wi) in x.iter().zip(&wx) {
            let u = 0.5 * (xi + 1.0);
            let wu = 0.5 * wi;
            let val = eval(center.0 + a * u * c, center.1 + b * u * s)?;
            total += val * a * b * u * wu * dtheta;
        }
    }
    Ok(total)
}

/// Fan triangulation from the first vertex with signed triangle areas
/// (handles non-convex polygons and either orientation), each triangle
/// integrated by an `m²`-subtriangle centroid rule.
fn polygon_quadrature(
    vertices: &[(f64, f64)],
    m: usize,
    eval: &dyn Fn(f64, f64) -> Result<f64>,
) -> Result<f64> {
    let v0 = vertices[0];
    let mut total = 0.0;
    for t in 1..vertices.len() - 1 {
        let v1 = vertices[t];
        let v2 = vertices[t + 1];
        let signed_area = 0.5
            * ((v1.0 - v0.0) * (v2.1 - v0.1) - (v2.0 - v0.0) * (v1.1 - v0.1));
        if signed_area == 0.0 {
            continue;
        }
        let sub_area = signed_area / (m * m) as f64;
        // Uniform refinement into m² congruent subtriangles in barycentric
        // coordinates; centroid rule on each.
        for i in 0..m {
            for j in 0..(m - i) {
                // "Upward" subtriangle (i/m, j/m) corner.
                let (bu, bv) = ((i as f64 + 1.0 / 3.0) / m as f64, (j as f64 + 1.0 / 3.0) / m as f64);
                let (px, py) = barycentric_point(v0, v1, v2, bu, bv);
                total += eval(px, py)? * sub_area;
                // "Downward" subtriangle, present except on the diagonal edge.
                if j < m - i - 1 {
                    let (bu2, bv2) =
                        ((i as f64 + 2.0 / 3.0) / m as f64, (j as f64 + 2.0 / 3.0) / m as f64);
                    let (qx, qy) = barycentric_point(v0, v1, v2, bu2, bv2);
                    total += eval(qx, qy)? * sub_area;
                }
            }
        }
    }
    Ok(total)
}

fn barycentric_point(
    v0: (f64, f64),
    v1: (f64, f64),
    v2: (f64, f64),
    u: f64,
    v: f64,
) -> (f64, f64) {
    (
        v0.0 + u * (v1.0 - v0.0) + v * (v2.0 - v0.0),
        v0.1 + u * (v1.1 - v0.1) + v * (v2.1 - v0.1),
    )
}

/// Surface integral with an error estimate obtained by doubling both
/// resolution parameters; returns `(fine value, |fine − coarse|)`.
pub fn surface_integral_with_estimate(
    model: &ControlModel,
    field: &CurvatureField,
    region: &Region,
    resolution: SurfaceResolution,
) -> Result<(f64, f64)> {
    let coarse = surface_integral_work(model, field, region, resolution)?;
    let fine = surface_integral_work(
        model,
        field,
        region,
        SurfaceResolution { radial: 2 * resolution.radial, angular: 2 * resolution.angular },
    )?;
    Ok((fine, (fine - coarse).abs()))
}

/// [`surface_integral_with_estimate`] that errors with
/// [`CurvworkError::QuadratureNotConverged`] when the estimate exceeds the
/// tolerance.
pub fn surface_integral_checked(
    model: &ControlModel,
    field: &CurvatureField,
    region: &Region,
    resolution: SurfaceResolution,
    tolerance: f64,
) -> Result<f64> {
    let (value, estimate) = surface_integral_with_estimate(model, field, region, resolution)?;
    if estimate > tolerance {
        return Err(CurvworkError::QuadratureNotConverged { delta: estimate, tolerance });
    }
    Ok(value)
}

// ---------------------------------------------------------------------------
// Stokes check
// ---------------------------------------------------------------------------

/// Outcome of integrating one cycle: line work, enclosed-surface work (for
/// planar closed loops), node bookkeeping, a quadrature-refinement residual,
/// and the per-node work increments along the path.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleResult {
    pub w_line: f64,
    pub w_surface: Option<f64>,
    pub n_nodes: usize,
    /// Change of `w_line` under node doubling plus the surface refinement
    /// estimate, when available.
    pub residual_estimate: f64,
    /// Work accumulated per quadrature node (trapezoid increments).
    pub increments: Vec<f64>,
}

/// Evaluate a closed planar loop both as `∮ A` and as `∬ Ω` over the
/// enclosed region, reporting the pair and the refinement residual.
pub fn stokes_check(
    model: &ControlModel,
    protocol: &Protocol,
    field: &CurvatureField,
    n: usize,
    resolution: SurfaceResolution,
) -> Result<CycleResult> {
    check_model_protocol(model, protocol)?;
    if !protocol.is_closed() {
        return Err(CurvworkError::InvalidInput(
            "Stokes comparison needs a closed protocol".into(),
        ));
    }
    let (region, orientation) = protocol.enclosed_region()?;
    let w_line = line_integral_work(model, protocol, n)?;
    let w_line_fine = line_integral_work(model, protocol, 2 * n)?;
    let (w_surface, surf_est) =
        surface_integral_with_estimate(model, field, &region, resolution)?;
    let w_surface = orientation * w_surface;
    // Per-node increments on the coarse grid (trapezoid spacing).
    let h = 2.0 * PI / n as f64;
    let mut increments = Vec::with_capacity(n);
    for k in 0..n {
        let theta = k as f64 * h;
        let a = work_one_form(model, &protocol.point(theta))?;
        increments.push(a.contract(&protocol.velocity(theta))? * h);
    }
    Ok(CycleResult {
        w_line: w_line_fine,
        w_surface: Some(w_surface),
        n_nodes: n,
        residual_estimate: (w_line_fine - w_line).abs() + surf_est,
        increments,
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// One row of a radius sweep: cycle radius, enclosed work, and the fraction
/// of the total (infinite-radius) flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusSweepRow {
    pub epsilon: f64,
    pub w_cyc: f64,
    pub ratio: f64,
}

/// Cycle work of origin-centered circular cycles against the incoherent
/// population baseline: `W(ε) = ∬_{r≤ε} Ω_pop`, normalized by the converged
/// whole-plane flux `W_∞(β) = 2π ln2/β`.
pub fn radius_sweep(beta: f64, radii: &[f64]) -> Result<Vec<RadiusSweepRow>> {
    if radii.is_empty() {
        return Err(CurvworkError::InvalidInput("radius list is empty".into()));
    }
    for pair in radii.windows(2) {
        if pair[1] <= pair[0] {
            return Err(CurvworkError::InvalidInput(
                "radii must be strictly ascending".into(),
            ));
        }
    }
    if !(radii[0] > 0.0) {
        return Err(CurvworkError::InvalidInput("radii must be positive".into()));
    }
    let model = ControlModel::thermal(beta, 1.0)?;
    let field = CurvatureField { plane: (0, 1), mode: CurvatureMode::PopulationBaseline };
    let resolution = SurfaceResolution::default();
    // Converged large-radius flux: grow the disk until the increment is
    // negligible. The density is concentrated within ε ≲ 30/β, so the
    // radial node count must grow with the disk — with a fixed rule every
    // doubling dilutes the nodes across an exponentially empty tail and the
    // quadrature collapses toward zero while appearing to converge.
    let r_core = 30.0 / beta;
    let flux_disk = |r: f64| -> Result<f64> {
        let scaled = SurfaceResolution {
            radial: resolution.radial * ((r / r_core).ceil() as usize).max(1),
            angular: resolution.angular,
        };
        surface_integral_work(
            &model,
            &field,
            &Region::Disk { center: (0.0, 0.0), radius: r },
            scaled,
        )
    };
    let mut r_inf = r_core.max(2.0 * radii[radii.len() - 1]);
    let mut w_inf = flux_disk(r_inf)?;
    loop {
        let next = flux_disk(2.0 * r_inf)?;
        if (next - w_inf).abs() <= 1e-10 * w_inf.abs().max(1e-300) {
            w_inf = next;
            break;
        }
        w_inf = next;
        r_inf *= 2.0;
    }
    if !(w_inf > 0.0) {
        return Err(CurvworkError::NumericalInstability {
            context: format!("saturation flux collapsed to {w_inf} at beta {beta}"),
        });
    }
    radii
        .iter()
        .map(|&eps| {
            let w_cyc = surface_integral_work(
                &model,
                &field,
                &Region::Disk { center: (0.0, 0.0), radius: eps },
                resolution,
            )?;
            Ok(RadiusSweepRow { epsilon: eps, w_cyc, ratio: w_cyc / w_inf })
        })
        .collect()
}

/// One sampled point of a phase sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSweepPoint {
    pub phi: f64,
    pub w: f64,
}

/// Sinusoid `W(φ) ≈ W₀ + A cos(φ + δ)` fitted to a phase sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    pub w0: f64,
    pub amplitude: f64,
    pub delta: f64,
    /// Root-mean-square misfit of the sampled points.
    pub residual_rms: f64,
}

/// A phase sweep with its sinusoid fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSweepResult {
    pub points: Vec<PhaseSweepPoint>,
    pub fit: SinusoidFit,
}

/// Sweep the phase offset between a fixed `(ω, g)` loop and its synchronized
/// temperature modulation `T(θ) = T₀ + ΔT cos(θ + φ)`, computing the cycle
/// work at each `φ` with Gibbs stationary states on the `(ω, g, T)` chart,
/// then fit `W₀ + A cos(φ + δ)` by linear least squares on the regressors
/// `(1, cos φ, sin φ)`.
#[allow(clippy::too_many_arguments)]
pub fn phase_sweep(
    omega0: f64,
    g0: f64,
    a: f64,
    b: f64,
    t0: f64,
    dt: f64,
    phis: &[f64],
    n: usize,
) -> Result<PhaseSweepResult> {
    if phis.len() < 3 {
        return Err(CurvworkError::InvalidInput(format!(
            "need at least 3 phase samples to fit a sinusoid, got {}",
            phis.len()
        )));
    }
    let model = ControlModel::thermal_with_temperature_axis(1.0)?;
    let points: Vec<PhaseSweepPoint> = phis
        .iter()
        .map(|&phi| {
            let protocol = Protocol::TemperatureModulated {
                center: (omega0, g0),
                a,
                b,
                t0,
                dt,
                phase: phi,
            };
            Ok(PhaseSweepPoint { phi, w: line_integral_work(&model, &protocol, n)? })
        })
        .collect::<Result<_>>()?;
    let fit = fit_sinusoid(&points)?;
    Ok(PhaseSweepResult { points, fit })
}

/// Least-squares fit of `w ≈ c₀ + c₁ cos φ + c₂ sin φ`, reported as
/// `W₀ + A cos(φ + δ)` with `A = √(c₁² + c₂²)`, `δ = atan2(−c₂, c₁)`.
pub fn fit_sinusoid(points: &[PhaseSweepPoint]) -> Result<SinusoidFit> {
    if points.len() < 3 {
        return Err(CurvworkError::InvalidInput(
            "sinusoid fit needs at least 3 samples".into(),
        ));
    }
    let mut ata = Array2::<f64>::zeros((3, 3));
    let mut atb = Array1::<f64>::zeros(3);
    for p in points {
        let row = [1.0, p.phi.cos(), p.phi.sin()];
        for i in 0..3 {
            for j in 0..3 {
                ata[[i, j]] += row[i] * row[j];
            }
            atb[i] += row[i] * p.w;
        }
    }
    let c = ata.solve(&atb).map_err(CurvworkError::from)?;
    let amplitude = c[1].hypot(c[2]);
    let delta = (-c[2]).atan2(c[1]);
    let mut ss = 0.0;
    for p in points {
        let pred = c[0] + c[1] * p.phi.cos() + c[2] * p.phi.sin();
        ss += (p.w - pred) * (p.w - pred);
    }
    Ok(SinusoidFit {
        w0: c[0],
        amplitude,
        delta,
        residual_rms: (ss / points.len() as f64).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Work-reduction factor
// ---------------------------------------------------------------------------

/// The coherence-induced work-reduction factor of a loop and its ingredients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaReport {
    /// Coherent-model cycle work, `∬ Ω_coh`.
    pub w_coh: f64,
    /// Baseline (population) cycle work, `∬ Ω_pop`.
    pub w_pop: f64,
    /// `η = W_coh / W_pop`; negative values flag a reversal of the net
    /// geometric work relative to the baseline.
    pub eta: f64,
    /// Small-loop estimate: the ratio of the two densities at the region
    /// center (for detailed-balance rates this equals
    /// `2g₀(g₀²+γ²) sinh(βε₀)/(βD₀²)`).
    pub local_estimate: f64,
}

/// Work-reduction factor `η = W_coh/W_pop` for a planar region:
/// the coherent-model curvature flux over the flux of the population
/// baseline at inverse temperature `baseline_beta`.
///
/// The coherent density takes `(γ, p)` pointwise from `coherent_model`
/// (detailed-balance mode varies `p = tanh(βε/2)` over the region; fixed-p
/// mode holds it constant). Errors with [`CurvworkError::ZeroBaseline`] when
/// the baseline flux vanishes.
pub fn eta_geom(
    coherent_model: &ControlModel,
    baseline_beta: f64,
    region: &Region,
    resolution: SurfaceResolution,
) -> Result<EtaReport> {
    let coh_field = CurvatureField { plane: (0, 1), mode: CurvatureMode::CoherentClosedForm };
    let w_coh = surface_integral_work(coherent_model, &coh_field, region, resolution)?;
    let baseline_model = ControlModel::thermal(baseline_beta, 1.0)?;
    let pop_field = CurvatureField { plane: (0, 1), mode: CurvatureMode::PopulationBaseline };
    let w_pop = surface_integral_work(&baseline_model, &pop_field, region, resolution)?;
    if w_pop == 0.0 {
        return Err(CurvworkError::ZeroBaseline);
    }
    let center = match region {
        Region::Disk { center, .. } | Region::Ellipse { center, .. } => *center,
        Region::Polygon { vertices } => {
            let n = vertices.len() as f64;
            (
                vertices.iter().map(|v| v.0).sum::<f64>() / n,
                vertices.iter().map(|v| v.1).sum::<f64>() / n,
            )
        }
    };
    let (gd, gu) = coherent_model
        .rates_at(&[center.0, center.1])?
        .ok_or_else(|| {
            CurvworkError::InvalidInput(
                "work-reduction factor requires the fixed-basis model".into(),
            )
        })?;
    let gamma = gd + gu;
    let p = (gd - gu) / gamma;
    let local_estimate = coherent_curvature_density(center.0, center.1, gamma, p)?
        / population_curvature_density(center.0, center.1, baseline_beta)?;
    Ok(EtaReport { w_coh, w_pop, eta: w_coh / w_pop, local_estimate })
}

// ---------------------------------------------------------------------------
// First-law bookkeeping
// ---------------------------------------------------------------------------

/// One step of a first-law trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstLawStep {
    pub theta: f64,
    /// Internal-energy change `ΔU = Tr[ρ₁H₁] − Tr[ρ₀H₀]`.
    pub du: f64,
    /// Work increment `δW = Tr[ρ̄ ΔH]` (midpoint state), positive when done
    /// on the system.
    pub dw: f64,
    /// Heat increment `δQ = Tr[H̄ Δρ]` (midpoint Hamiltonian).
    pub dq: f64,
}

/// A discretized first-law decomposition along a protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstLawTrace {
    pub steps: Vec<FirstLawStep>,
    pub total_du: f64,
    pub total_dw: f64,
    pub total_dq: f64,
    /// Largest per-step `|ΔU − δW − δQ|` (an algebraic identity for midpoint
    /// products; nonzero only through roundoff).
    pub max_defect: f64,
}

/// Trace the first law along a protocol with `n` steps: the midpoint-product
/// split `ΔU = Tr[ρ̄ ΔH] + Tr[H̄ Δρ]` is exact per step, so the work and
/// heat columns sum to the energy column to roundoff, and over a closed loop
/// the energy column telescopes to zero.
pub fn first_law_trace(
    model: &ControlModel,
    protocol: &Protocol,
    n: usize,
) -> Result<FirstLawTrace> {
    check_model_protocol(model, protocol)?;
    if n < MIN_LINE_NODES {
        return Err(CurvworkError::InvalidInput(format!(
            "need at least {MIN_LINE_NODES} steps, got {n}"
        )));
    }
    let closed = protocol.is_closed();
    let n_states = if closed { n } else { n + 1 };
    let h = 2.0 * PI / n as f64;
    let mut hams = Vec::with_capacity(n_states);
    let mut rhos = Vec::with_capacity(n_states);
    for k in 0..n_states {
        let lam = protocol.point(k as f64 * h);
        hams.push(model.hamiltonian(&lam)?.matrix().clone());
        rhos.push(model.stationary(&lam)?.matrix().clone());
    }
    let mut steps = Vec::with_capacity(n);
    let (mut tu, mut tw, mut tq, mut defect) = (0.0, 0.0, 0.0, 0.0_f64);
    for k in 0..n {
        let k1 = (k + 1) % n_states;
        let (h0, h1) = (&hams[k], &hams[k1]);
        let (r0, r1) = (&rhos[k], &rhos[k1]);
        let u0 = crate::quantum::trace_product(r0, h0).re;
        let u1 = crate::quantum::trace_product(r1, h1).re;
        let dh = h1 - h0;
        let dr = r1 - r0;
        let rbar = (r0 + r1).mapv(|z| z * 0.5);
        let hbar = (h0 + h1).mapv(|z| z * 0.5);
        let dw = crate::quantum::trace_product(&rbar, &dh).re;
        let dq = crate::quantum::trace_product(&hbar, &dr).re;
        let du = u1 - u0;
        defect = defect.max((du - dw - dq).abs());
        tu += du;
        tw += dw;
        tq += dq;
        steps.push(FirstLawStep { theta: k as f64 * h, du, dw, dq });
    }
    Ok(FirstLawTrace {
        steps,
        total_du: tu,
        total_dw: tw,
        total_dq: tq,
        max_defect: defect,
    })
}

// ---------------------------------------------------------------------------
// Finite-rate driving
// ---------------------------------------------------------------------------

/// Work done by traversing `protocol` once in physical time `total_time`,
/// integrating the driven Lindblad dynamics `ρ̇ = L(λ(t))ρ` with classical
/// RK4 from the stationary state at the start point. The driving rate is
/// uniform in protocol angle, `λ(t) = λ(2πt/T)`, and the work is the power
/// integral `W = ∫ Tr(ρ ∂_t H) dt` (composite trapezoid on the RK4 grid).
///
/// As `total_time → ∞` this converges to the geometric cycle work; the
/// leading finite-rate excess is the time integral of the excess-work
/// kernel contracted with the control velocity.
pub fn driven_cycle_work(
    model: &ControlModel,
    protocol: &Protocol,
    total_time: f64,
    n_steps: usize,
) -> Result<f64> {
    use crate::quantum::{
        build_hamiltonian, build_liouvillian, fixed_basis_terms, stationary_state, trace_product,
    };

    if !(total_time > 0.0) || !total_time.is_finite() {
        return Err(CurvworkError::InvalidInput(format!(
            "total driving time must be positive and finite, got {total_time}"
        )));
    }
    if n_steps < 16 {
        return Err(CurvworkError::InvalidInput(format!(
            "finite-rate driving needs at least 16 steps, got {n_steps}"
        )));
    }
    if protocol.dim() != 2 {
        return Err(CurvworkError::InvalidInput(
            "finite-rate driving is defined on the (ω, g) chart".into(),
        ));
    }

    let rate = 2.0 * PI / total_time;
    let dt = total_time / n_steps as f64;

    // Liouvillian at protocol angle θ; errors if the model has no
    // fixed-basis rates (thermal baths re-equilibrate instantaneously in
    // this codebase and have no finite-rate story here).
    let liouville = |theta: f64| -> Result<crate::quantum::Superoperator> {
        let lam = protocol.point(theta);
        let (gd, gu) = model.rates_at(&lam)?.ok_or_else(|| {
            CurvworkError::InvalidInput(
                "finite-rate driving requires a model with fixed-basis rates".into(),
            )
        })?;
        build_liouvillian(&build_hamiltonian(lam[0], lam[1]), &fixed_basis_terms(gd, gu)?)
    };

    // Instantaneous power Tr(ρ ∂_t H) at angle θ.
    let power = |rho: &crate::quantum::CMatrix, theta: f64| -> f64 {
        let v = protocol.velocity(theta);
        let dh = crate::quantum::build_hamiltonian(v[0] * rate, v[1] * rate);
        trace_product(rho, dh.matrix()).re
    };

    let mut l_left = liouville(0.0)?;
    let mut rho = stationary_state(&l_left)?.matrix().clone();

    let mut work = 0.0;
    let mut f_left = power(&rho, 0.0);
    for k in 0..n_steps {
        let th_mid = rate * dt * (k as f64 + 0.5);
        let th_right = rate * dt * (k + 1) as f64;
        let l_mid = liouville(th_mid)?;
        let l_right = liouville(th_right)?;

        let k1 = l_left.apply(&rho);
        let k2 = l_mid.apply(&(&rho + &k1.mapv(|z| z * (0.5 * dt))));
        let k3 = l_mid.apply(&(&rho + &k2.mapv(|z| z * (0.5 * dt))));
        let k4 = l_right.apply(&(&rho + &k3.mapv(|z| z * dt)));
        let incr = k1 + k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4;
        rho = &rho + &incr.mapv(|z| z * (dt / 6.0));

        let f_right = power(&rho, th_right);
        work += 0.5 * dt * (f_left + f_right);
        f_left = f_right;
        l_left = l_right;
    }
    Ok(work)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{free_energy, population_total_flux, RateSpec, SolverKind};
    use approx::assert_abs_diff_eq;

    fn coherent(gd: f64, gu: f64) -> ControlModel {
        ControlModel::fixed_basis(
            RateSpec::Explicit { gamma_down: gd, gamma_up: gu },
            SolverKind::ClosedForm,
        )
        .unwrap()
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        let (x, w) = gauss_legendre(5);
        // Degree 9 monomial: ∫_{-1}^{1} x⁹ dx = 0; degree 8: 2/9.
        let i9: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(9)).sum();
        let i8: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(8)).sum();
        assert_abs_diff_eq!(i9, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(i8, 2.0 / 9.0, epsilon = 1e-14);
        let wsum: f64 = w.iter().sum();
        assert_abs_diff_eq!(wsum, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn thermal_closed_loop_work_vanishes() {
        let m = ControlModel::thermal(1.3, 1.0).unwrap();
        let p = Protocol::Circle { center: (0.9, 0.4), radius: 0.35 };
        let w = line_integral_work(&m, &p, 256).unwrap();
        assert!(w.abs() < 1e-8, "W = {w}");
    }

    #[test]
    fn thermal_open_path_gives_free_energy_difference() {
        let beta = 1.3;
        let m = ControlModel::thermal(beta, 1.0).unwrap();
        let p = Protocol::PiecewiseLinear {
            vertices: vec![(0.2, 0.1), (1.4, 0.9)],
            closed: false,
        };
        let w = line_integral_work(&m, &p, 256).unwrap();
        let df = free_energy(1.4, 0.9, beta).unwrap() - free_energy(0.2, 0.1, beta).unwrap();
        assert_abs_diff_eq!(w, df, epsilon = 1e-8);
    }

    #[test]
    fn coherent_loop_on_symmetry_axis_vanishes() {
        let m = coherent(1.0, 0.0);
        let p = Protocol::Circle { center: (1.2, 0.0), radius: 0.7 };
        let w = line_integral_work(&m, &p, 256).unwrap();
        assert!(w.abs() < 1e-10, "W = {w}");
    }

    #[test]
    fn coherent_circle_frozen_value() {
        let m = coherent(1.0, 0.0);
        let p = Protocol::Circle { center: (1.0, 1.0), radius: 0.5 };
        let w = line_integral_work(&m, &p, 256).unwrap();
        assert_abs_diff_eq!(w, 0.147090111458, epsilon = 1e-10);
    }

    #[test]
    fn reversal_negates_exactly() {
        let m = coherent(1.0, 0.0);
        let p = Protocol::Circle { center: (1.0, 1.0), radius: 0.5 };
        let w = line_integral_work(&m, &p, 256).unwrap();
        let wr = line_integral_work(&m, &Protocol::Reversed(Box::new(p)), 256).unwrap();
        assert_eq!(w, -wr);

        let open = Protocol::PiecewiseLinear {
            vertices: vec![(0.2, 0.1), (0.9, 0.6), (1.4, 0.9)],
            closed: false,
        };
        let wo = line_integral_work(&m, &open, 256).unwrap();
        let wor = line_integral_work(&m, &Protocol::Reversed(Box::new(open)), 256).unwrap();
        assert_eq!(wo, -wor);
    }

    #[test]
    fn quadrature_convergence_and_failure() {
        let m = coherent(1.0, 0.0);
        let p = Protocol::Circle { center: (1.0, 1.0), radius: 0.5 };
        // Spectral accuracy: node doubling changes nothing at n = 128.
        let w128 = line_integral_work(&m, &p, 128).unwrap();
        let w256 = line_integral_work(&m, &p, 256).unwrap();
        assert!((w256 - w128).abs() < 1e-12);
        let checked = line_integral_work_checked(&m, &p, 128, 1e-10).unwrap();
        assert_abs_diff_eq!(checked, w256, epsilon = 1e-15);
        // At the minimum node count the doubling delta is resolvable, so a
        // crushingly tight tolerance must be refused.
        match line_integral_work_checked(&m, &p, 16, 1e-16) {
            Err(CurvworkError::QuadratureNotConverged { .. }) => {}
            other => panic!("expected QuadratureNotConverged, got {other:?}"),
        }
        assert!(line_integral_work(&m, &p, 8).is_err());
    }

    #[test]
    fn surface_zero_field_and_odd_field() {
        // p = 0: the coherent density vanishes identically.
        let m0 = ControlModel::fixed_basis(
            RateSpec::FixedBias { gamma: 1.0, p: 0.0 },
            SolverKind::ClosedForm,
        )
        .unwrap();
        let coh = CurvatureField { plane: (0, 1), mode: CurvatureMode::CoherentClosedForm };
        let w0 = surface_integral_work(
            &m0,
            &coh,
            &Region::Disk { center: (0.7, 0.2), radius: 0.5 },
            SurfaceResolution::default(),
        )
        .unwrap();
        assert_eq!(w0, 0.0);

        // Odd in g: a disk centered on the axis integrates to zero with the
        // symmetric angular grid.
        let m = coherent(1.0, 0.0);
        let w = surface_integral_work(
            &m,
            &coh,
            &Region::Disk { center: (1.1, 0.0), radius: 0.6 },
            SurfaceResolution::default(),
        )
        .unwrap();
        assert!(w.abs() < 1e-12, "W = {w}");
    }

    #[test]
    fn baseline_disk_approaches_total_flux() {
        let beta = 1.7;
        let m = ControlModel::thermal(beta, 1.0).unwrap();
        let f = CurvatureField { plane: (0, 1), mode: CurvatureMode::PopulationBaseline };
        let w = surface_integral_work(
            &m,
            &f,
            &Region::Disk { center: (0.0, 0.0), radius: 40.0 / beta },
            SurfaceResolution::default(),
        )
        .unwrap();
        let exact = population_total_flux(beta).unwrap();
        assert_abs_diff_eq!(w, exact, epsilon = 1e-6 * exact);
    }

    #[test]
    fn polygon_orientation_and_reference_value() {
        let beta = 1.0;
        let m = ControlModel::thermal(beta, 1.0).unwrap();
        let f = CurvatureField { plane: (0, 1), mode: CurvatureMode::PopulationBaseline };
        let ccw = Region::Polygon {
            vertices: vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
        };
        let cw = Region::Polygon {
            vertices: vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)],
        };
        let res = SurfaceResolution { radial: 64, angular: 128 };
        let wccw = surface_integral_work(&m, &f, &ccw, res).unwrap();
        let wcw = surface_integral_work(&m, &f, &cw, res).unwrap();
        assert_abs_diff_eq!(wccw, -wcw, epsilon = 1e-14);
        // Dense midpoint reference on the unit square.
        let nref = 400;
        let mut reference = 0.0;
        for i in 0..nref {
            for j in 0..nref {
                let x = (i as f64 + 0.5) / nref as f64;
                let y = (j as f64 + 0.5) / nref as f64;
                reference += population_curvature_density(x, y, beta).unwrap();
            }
        }
        reference /= (nref * nref) as f64;
        assert_abs_diff_eq!(wccw, reference, epsilon = 1e-6);
    }

    #[test]
    fn stokes_on_coherent_circle() {
        let m = coherent(1.0, 0.0);
        let p = Protocol::Circle { center: (1.0, 1.0), radius: 0.5 };
        let f = CurvatureField { plane: (0, 1), mode: CurvatureMode::CoherentClosedForm };
        let r = stokes_check(&m, &p, &f, 256, SurfaceResolution::default()).unwrap();
        let ws = r.w_surface.unwrap();
        assert!(
            (r.w_line - ws).abs() < 1e-6 * r.w_line.abs().max(1.0),
            "line {} vs surface {}",
            r.w_line,
            ws
        );
        assert!(r.residual_estimate < 1e-9);
        assert_eq!(r.increments.len(), 256);
        let sum: f64 = r.increments.iter().sum();
        assert_abs_diff_eq!(sum, r.w_line, epsilon = 1e-9);
        // Reversed loop: line negates, surface picks up the orientation sign.
        let rr = stokes_check(
            &m,
            &Protocol::Reversed(Box::new(p)),
            &f,
            256,
            SurfaceResolution::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(rr.w_line, -r.w_line, epsilon = 1e-14);
        assert_abs_diff_eq!(rr.w_surface.unwrap(), -ws, epsilon = 1e-14);
    }

    #[test]
    fn stokes_thermal_both_vanish() {
        let m = ControlModel::thermal(1.0, 1.0).unwrap();
        let p = Protocol::OffsetEllipse { center: (0.8, 0.3), a: 0.4, b: 0.25 };
        // The exact one-form has zero curl; use the generic FD field.
        let f = CurvatureField { plane: (0, 1), mode: CurvatureMode::FdGeneric };
        let r = stokes_check(&m, &p, &f, 128, SurfaceResolution { radial: 16, angular: 32 })
            .unwrap();
        assert!(r.w_line.abs() < 1e-8);
        assert!(r.w_surface.unwrap().abs() < 1e-6);
    }

    #[test]
    fn shrinking_loop_recovers_density() {
        let m = coherent(1.0, 0.0);
        let f = CurvatureField { plane: (0, 1), mode: CurvatureMode::CoherentClosedForm };
        let center = (1.0, 1.0);
        let omega_c = coherent_curvature_density(center.0, center.1, 1.0, 1.0).unwrap();
        let mut errs = Vec::new();
        for &r in &[0.2, 0.1] {
            let p = Protocol::Circle { center, radius: r };
            let res = stokes_check(&m, &p, &f, 128, SurfaceResolution::default()).unwrap();
            let density = res.w_line / (PI * r * r);
            errs.push((density - omega_c).abs());
        }
        // O(r²) convergence of the mean-value limit: halving r cuts the
        // error by ≈4.
        assert!(errs[1] < errs[0] / 2.5, "errors {errs:?}");
        assert!(errs[1] < 0.02);
    }

    #[test]
    fn radius_sweep_properties() {
        let radii: Vec<f64> = (1..=8).map(|k| k as f64).collect();
        for &beta in &[1.0, 2.0, 4.0] {
            let rows = radius_sweep(beta, &radii).unwrap();
            // Monotone increasing toward 1.
            for pair in rows.windows(2) {
                assert!(pair[1].w_cyc > pair[0].w_cyc);
            }
            assert!(rows.last().unwrap().ratio <= 1.0 + 1e-9);
            assert!(rows.last().unwrap().ratio > 0.97);
            // W_∞ β = 2π ln 2: reconstruct W_∞ from any row.
            let w_inf = rows[0].w_cyc / rows[0].ratio;
            assert_abs_diff_eq!(
                w_inf * beta,
                2.0 * PI * std::f64::consts::LN_2,
                epsilon = 1e-6 * 2.0 * PI
            );
        }
        // Sharper saturation at larger β: the 0.9 crossing moves inward.
        let fine: Vec<f64> = (1..=60).map(|k| 0.1 * k as f64).collect();
        let cross = |beta: f64| {
            let rows = radius_sweep(beta, &fine).unwrap();
            rows.iter().find(|r| r.ratio >= 0.9).unwrap().epsilon
        };
        assert!(cross(4.0) < cross(1.0));
        // Validation.
        assert!(radius_sweep(1.0, &[]).is_err());
        assert!(radius_sweep(1.0, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn radius_sweep_saturation_survives_large_radii() {
        // At large β the density is concentrated near the origin, so the
        // saturation integral over very large disks is dominated by an
        // exponentially empty tail.  A fixed-node radial rule collapses to
        // zero there (and "converges" to it); the sweep must keep resolving
        // the core instead.
        let radii: Vec<f64> = (0..31)
            .map(|k| 0.05 * (16.0_f64 / 0.05).powf(k as f64 / 30.0))
            .collect();
        for &beta in &[1.0, 2.0, 4.0] {
            let rows = radius_sweep(beta, &radii).unwrap();
            let w_inf = rows[0].w_cyc / rows[0].ratio;
            assert_abs_diff_eq!(
                w_inf * beta / (2.0 * PI * std::f64::consts::LN_2),
                1.0,
                epsilon = 1e-6
            );
            // Strict growth saturates at machine precision once the ratio
            // plateaus at 1, so only require non-decreasing.
            for pair in rows.windows(2) {
                assert!(pair[1].ratio >= pair[0].ratio - 1e-12);
            }
            assert_abs_diff_eq!(rows.last().unwrap().ratio, 1.0, epsilon = 1e-3);
        }
    }

    #[test]
    fn phase_sweep_flat_cases() {
        let phis: Vec<f64> = (0..12).map(|k| 2.0 * PI * k as f64 / 12.0).collect();
        // ΔT = 0: no phase dependence at all.
        let r0 = phase_sweep(0.8, 0.5, 0.5, 0.5, 1.0, 0.0, &phis, 64).unwrap();
        assert!(r0.fit.amplitude.abs() < 1e-10, "A = {}", r0.fit.amplitude);
        // Constant-ε symmetric loop centered at the origin: uniform density
        // along the path kills the phase dependence.
        let rsym = phase_sweep(0.0, 0.0, 0.5, 0.5, 1.0, 0.1, &phis, 128).unwrap();
        assert!(rsym.fit.amplitude.abs() < 1e-9, "A = {}", rsym.fit.amplitude);
    }

    #[test]
    fn phase_sweep_is_nearly_sinusoidal() {
        let phis: Vec<f64> = (0..16).map(|k| 2.0 * PI * k as f64 / 16.0).collect();
        let r = phase_sweep(0.8, 0.5, 0.5, 0.5, 1.0, 0.1, &phis, 128).unwrap();
        assert!(r.fit.amplitude > 1e-4);
        assert!(
            r.fit.residual_rms < 0.02 * r.fit.amplitude,
            "rms {} vs A {}",
            r.fit.residual_rms,
            r.fit.amplitude
        );
        // Validation: T must stay positive, and tiny grids are refused.
        assert!(phase_sweep(0.8, 0.5, 0.5, 0.5, 1.0, 1.0, &phis, 64).is_err());
        assert!(phase_sweep(0.8, 0.5, 0.5, 0.5, 1.0, 0.1, &phis[..2], 64).is_err());
    }

    #[test]
    fn eta_symmetric_loop_vanishes_and_reflection_flips() {
        let beta = 1.0;
        let m = ControlModel::fixed_basis(
            RateSpec::DetailedBalance { gamma: 1.0, beta },
            SolverKind::ClosedForm,
        )
        .unwrap();
        let res = SurfaceResolution::default();
        // Symmetric under g → −g.
        let sym = eta_geom(&m, beta, &Region::Disk { center: (1.0, 0.0), radius: 0.4 }, res)
            .unwrap();
        assert!(sym.eta.abs() < 1e-10, "η = {}", sym.eta);
        // Reflection flips the sign; the invariant η·W_pop = W_coh is exact.
        let up = eta_geom(&m, beta, &Region::Disk { center: (1.0, 0.8), radius: 0.3 }, res)
            .unwrap();
        let down = eta_geom(&m, beta, &Region::Disk { center: (1.0, -0.8), radius: 0.3 }, res)
            .unwrap();
        assert!(up.eta > 0.0);
        assert_abs_diff_eq!(up.eta, -down.eta, epsilon = 1e-12);
        assert_abs_diff_eq!(up.eta * up.w_pop, up.w_coh, epsilon = 1e-10);
    }

    #[test]
    fn eta_small_loop_matches_closed_form() {
        let (gamma, beta) = (1.0, 1.0);
        let m = ControlModel::fixed_basis(
            RateSpec::DetailedBalance { gamma, beta },
            SolverKind::ClosedForm,
        )
        .unwrap();
        for &g0 in &[0.5_f64, 1.0, 1.5] {
            let center = (1.0_f64, g0);
            let eps0 = center.0.hypot(center.1);
            let d0 = 2.0 * center.0 * center.0 + g0 * g0 + 0.5 * gamma * gamma;
            let closed_form = 2.0 * g0 * (g0 * g0 + gamma * gamma) * (beta * eps0).sinh()
                / (beta * d0 * d0);
            let rep = eta_geom(
                &m,
                beta,
                &Region::Disk { center, radius: 0.05 },
                SurfaceResolution::default(),
            )
            .unwrap();
            let rel = (rep.eta - closed_form).abs() / closed_form.abs();
            assert!(rel < 0.02, "g0 = {g0}: η = {} vs {closed_form}", rep.eta);
            assert_abs_diff_eq!(rep.local_estimate, closed_form, epsilon = 1e-12);
        }
    }

    #[test]
    fn first_law_identities() {
        let m = coherent(1.0, 0.0);
        let p = Protocol::Circle { center: (1.0, 1.0), radius: 0.5 };
        let t = first_law_trace(&m, &p, 256).unwrap();
        assert!(t.max_defect < 1e-10);
        assert!(t.total_du.abs() < 1e-12, "ΣdU = {}", t.total_du);
        assert_abs_diff_eq!(t.total_dq, -t.total_dw, epsilon = 1e-12);
        // The midpoint-product work sum converges to the line integral at
        // second order in the step (it is a central-difference product rule,
        // not the plain periodic trapezoid).
        let w = line_integral_work(&m, &p, 512).unwrap();
        let err256 = (t.total_dw - w).abs();
        let err512 = (first_law_trace(&m, &p, 512).unwrap().total_dw - w).abs();
        assert!(err256 < 5e-5, "midpoint work error {err256}");
        assert!(
            err512 < err256 / 3.0,
            "expected O(h²): errors {err256} -> {err512}"
        );
    }

    #[test]
    fn first_law_frozen_hamiltonian() {
        // Pure temperature modulation: H never changes, so δW ≡ 0 while heat
        // flows.
        let m = ControlModel::thermal_with_temperature_axis(1.0).unwrap();
        let p = Protocol::TemperatureModulated {
            center: (0.9, 0.4),
            a: 0.0,
            b: 0.0,
            t0: 1.0,
            dt: 0.3,
            phase: 0.0,
        };
        let t = first_law_trace(&m, &p, 64).unwrap();
        for s in &t.steps {
            assert_eq!(s.dw, 0.0);
        }
        assert!(t.steps.iter().any(|s| s.dq.abs() > 1e-4));
        assert!(t.total_du.abs() < 1e-12);
    }

    #[test]
    fn first_law_thermal_loop_splits_to_zero() {
        let m = ControlModel::thermal(1.2, 1.0).unwrap();
        let p = Protocol::Circle { center: (0.9, 0.4), radius: 0.35 };
        let t = first_law_trace(&m, &p, 256).unwrap();
        assert!(t.total_dw.abs() < 1e-8, "ΣδW = {}", t.total_dw);
        assert!(t.total_dq.abs() < 1e-8, "ΣδQ = {}", t.total_dq);
    }

    #[test]
    fn protocol_closure_and_validation() {
        let p = Protocol::OffsetEllipse { center: (0.3, -0.2), a: 0.5, b: 0.2 };
        let start = p.point(0.0);
        let end = p.point(2.0 * PI);
        for (s, e) in start.iter().zip(&end) {
            assert_abs_diff_eq!(s, e, epsilon = 1e-12);
        }
        assert!(Protocol::Circle { center: (0.0, 0.0), radius: 0.0 }.validate().is_err());
        assert!(Protocol::TemperatureModulated {
            center: (0.0, 0.0),
            a: 0.1,
            b: 0.1,
            t0: 0.5,
            dt: 0.6,
            phase: 0.0
        }
        .validate()
        .is_err());
        assert!(Protocol::PiecewiseLinear { vertices: vec![(0.0, 0.0)], closed: false }
            .validate()
            .is_err());
        // Closed piecewise loops traverse back to the start.
        let tri = Protocol::PiecewiseLinear {
            vertices: vec![(0.0, 0.0), (1.0, 0.0), (0.5, 0.8)],
            closed: true,
        };
        assert!(tri.is_closed());
        let last = tri.point(2.0 * PI - 1e-9);
        assert!((last[0] - 0.0).abs() < 1e-8 && (last[1] - 0.0).abs() < 1e-8);
    }

    #[test]
    fn stokes_piecewise_triangle() {
        // Closed triangle in the upper half plane: line vs fan-triangulated
        // surface of the coherent field.
        let m = coherent(1.0, 0.0);
        let tri = Protocol::PiecewiseLinear {
            vertices: vec![(0.7, 0.4), (1.5, 0.5), (1.0, 1.2)],
            closed: true,
        };
        let f = CurvatureField { plane: (0, 1), mode: CurvatureMode::CoherentClosedForm };
        let r = stokes_check(&m, &tri, &f, 512, SurfaceResolution { radial: 128, angular: 1 })
            .unwrap();
        let ws = r.w_surface.unwrap();
        assert!(
            (r.w_line - ws).abs() < 5e-6 * r.w_line.abs().max(1.0),
            "line {} vs surface {}",
            r.w_line,
            ws
        );
    }

    #[test]
    fn driven_work_converges_to_geometric_cycle_work() {
        // Finite-rate excess decays like 1/T (doubling the driving time
        // halves W(T) − W_geo) and matches the excess-work kernel
        // contracted with the control velocity. The kernel is not positive
        // definite, so the excess may carry either sign.
        let m = coherent(1.0, 0.0);
        let p = Protocol::Circle { center: (1.0, 1.0), radius: 0.5 };
        let w_geo = line_integral_work(&m, &p, 512).unwrap();
        let e1 = driven_cycle_work(&m, &p, 40.0, 8_000).unwrap() - w_geo;
        let e2 = driven_cycle_work(&m, &p, 80.0, 16_000).unwrap() - w_geo;
        let ratio = e1 / e2;
        assert!(
            (ratio - 2.0).abs() < 0.4,
            "excess should halve when T doubles: ratio {ratio}"
        );

        // Kernel prediction: ∫ K_ij λ̇^i λ̇^j dt = (2π/T) ∮ K_ij λ'^i λ'^j dθ.
        let n = 256;
        let mut loop_quad = 0.0;
        for k in 0..n {
            let th = 2.0 * PI * k as f64 / n as f64;
            let lam = p.point(th);
            let v = p.velocity(th);
            let kernel = crate::geometry::excess_work_kernel(&m, &lam).unwrap();
            let mut q = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    q += kernel[[i, j]] * v[i] * v[j];
                }
            }
            loop_quad += q * 2.0 * PI / n as f64;
        }
        for (t, e) in [(40.0, e1), (80.0, e2)] {
            let pred = 2.0 * PI / t * loop_quad;
            assert!(
                (e - pred).abs() < 0.15 * pred.abs(),
                "T={t}: excess {e} vs kernel prediction {pred}"
            );
        }
    }

    #[test]
    fn driven_work_rejects_thermal_models() {
        let m = ControlModel::thermal(1.0, 1.0).unwrap();
        let p = Protocol::Circle { center: (1.0, 1.0), radius: 0.3 };
        assert!(driven_cycle_work(&m, &p, 10.0, 1_000).is_err());
    }
}
