//! First and second variations of energy functionals.
//!
//! The operations here connect the integral functionals of
//! [`crate::functionals`] to their pointwise optimality conditions:
//!
//! * [`gateaux_first`] — the directional derivative
//!   `∫ [F_v φ + F_p·∇φ] dμ` (minus the boundary term `∫ g_v φ dS` when the
//!   functional carries one), with [`gateaux_fd`] as its central-difference
//!   counterpart;
//! * [`el_residual`] — the pointwise Euler–Lagrange defect
//!   `F_v − div F_p`, and [`neumann_residual`] — the natural boundary defect
//!   `⟨F_p, N⟩ − g_v` on a face of a flat box;
//! * [`second_variation`] — the quadratic form
//!   `∫ [F_vv φ² + 2φ F_vp·∇φ + (F_pp ∇φ)·∇φ] dμ`, with
//!   [`entropy_second_variation`] as an independently derived closed form
//!   for the weighted sphere entropy;
//! * [`classify_critical_point`] — the entropy-specific trichotomy built on
//!   the gradient criterion `sup ||∇v||² < 2` and the cut-off witness of
//!   [`saddle_witness`].
//!
//! Everything is pure: inputs are borrowed immutably and nothing is cached,
//! so concurrent calls are safe.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{FrameVectorField, ScalarField};
use crate::functionals::{EnergyFunctional, FunctionalKind};
use crate::geometry::{Chart, ChartKind, Face, QuadratureGrid};

/// Default step for [`gateaux_fd`]; its `O(h²)` error then sits near the
/// quadrature tolerance.
pub const DEFAULT_GATEAUX_STEP: f64 = 1e-4;

/// Fraction of the total surface measure that `{||∇v||² > 2}` must carry
/// before classification attempts a saddle witness.
pub const SADDLE_WEIGHT_FRACTION: f64 = 1e-3;

/// Width of the blend band `2 < ||∇v||² < 2 + margin` in the witness.
pub const SADDLE_MARGIN: f64 = 0.1;

/// Default number of probe directions for classification.
pub const DEFAULT_PROBE_COUNT: usize = 25;

/// Outcome of [`classify_critical_point`].
///
/// There is deliberately no "maximizer" variant: the second variation of the
/// entropy at a constant direction is strictly positive, so a strict local
/// maximum can never be certified and the enum does not offer one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    StrictLocalMinCandidate,
    Saddle,
    Inconclusive,
}

/// Result of classifying a critical point of the entropy functional.
///
/// Invariants (asserted by the constructor sites, relied on by callers):
/// `Saddle` implies `witness` is present and `witness_value < 0`;
/// `StrictLocalMinCandidate` implies `sup_grad_sq < 2`.
#[derive(Clone, Debug)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    /// Maximum of `||∇v||²` over the quadrature nodes.
    pub sup_grad_sq: f64,
    /// Direction with negative second variation, when one was found.
    pub witness: Option<ScalarField>,
    /// Second variation in the witness direction.
    pub witness_value: Option<f64>,
    /// Second variation at each probe direction; populated only for an
    /// `Inconclusive` verdict.
    pub probe_values: Vec<f64>,
}

/// First variation `E′(v)(φ)` by quadrature:
/// `∫ [F_v(x, v, ∇v) φ + F_p(x, v, ∇v)·∇φ] dμ`, minus the boundary term
/// `∫_∂ g_v φ dS` when the functional has a boundary integrand.
pub fn gateaux_first(
    e: &EnergyFunctional,
    v: &ScalarField,
    phi: &ScalarField,
    grid: &QuadratureGrid,
) -> Result<f64> {
    e.check_same_chart(v)?;
    e.check_same_chart(phi)?;
    let chart = e.chart();
    let ig = e.integrand();
    let mut total = chart.surface_integral(grid, |u| {
        let x = chart.embed(u);
        let val = v.value(u);
        let p = v.gradient_raw(u);
        let grad_phi = phi.gradient_raw(u);
        let f_p = ig.f_p(&x, val, &p);
        ig.f_v(&x, val, &p) * phi.value(u)
            + f_p.iter().zip(&grad_phi).map(|(a, b)| a * b).sum::<f64>()
    })?;
    if let Some(b) = e.boundary() {
        for face in chart.boundary_faces()? {
            let fg = QuadratureGrid::gauss_legendre_face(chart, face, grid.order)?;
            for (node, &w) in fg.nodes.iter().zip(&fg.weights) {
                let x = chart.embed(node);
                let term = (b.g_v)(&x, v.value(node)) * phi.value(node);
                if !term.is_finite() {
                    return Err(Error::NonFinite {
                        context: "boundary term of the first variation".into(),
                        at: node.clone(),
                    });
                }
                total -= w * term;
            }
        }
    }
    Ok(total)
}

/// Central-difference first variation `(E(v + hφ) − E(v − hφ)) / 2h`.
///
/// `h` must lie in `[1e−8, 1e−2]`: smaller steps drown in roundoff of the
/// energy evaluations, larger ones leave the asymptotic `O(h²)` regime.
pub fn gateaux_fd(
    e: &EnergyFunctional,
    v: &ScalarField,
    phi: &ScalarField,
    grid: &QuadratureGrid,
    h: f64,
) -> Result<f64> {
    if !(1e-8..=1e-2).contains(&h) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must lie in [1e-8, 1e-2], got {h:e}"
        )));
    }
    let plus = e.eval(&v.axpy(h, phi)?, grid)?;
    let minus = e.eval(&v.axpy(-h, phi)?, grid)?;
    Ok((plus - minus) / (2.0 * h))
}

/// The momentum flux `F_p` along `v`, assembled as a frame vector field
/// `u ↦ F_p(Φ(u), v(u), ∇v(u))`. Its divergence is the second half of the
/// Euler–Lagrange residual.
pub fn momentum_flux(e: &EnergyFunctional, v: &ScalarField) -> Result<FrameVectorField> {
    e.check_same_chart(v)?;
    let m = e.chart().intrinsic_dim();
    let mut components: Vec<Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>> = Vec::with_capacity(m);
    for i in 0..m {
        let chart = e.chart().clone();
        let ig = e.integrand().clone();
        let v = v.clone();
        components.push(Arc::new(move |u: &[f64]| {
            let x = chart.embed(u);
            ig.f_p(&x, v.value(u), &v.gradient_raw(u))[i]
        }));
    }
    FrameVectorField::new(e.chart().clone(), components)
}

/// Pointwise Euler–Lagrange residual `F_v − div F_p` at an interior point.
///
/// A critical point of the functional drives this to zero; the sign
/// convention makes [`gateaux_first`] equal the surface integral of
/// `el_residual · φ` for directions `φ` vanishing near the boundary.
pub fn el_residual(e: &EnergyFunctional, v: &ScalarField, u: &[f64]) -> Result<f64> {
    e.check_same_chart(v)?;
    let chart = e.chart();
    let x = chart.embed(u);
    let f_v = e.integrand().f_v(&x, v.value(u), &v.gradient_raw(u));
    let div = momentum_flux(e, v)?.divergence(u)?;
    Ok(f_v - div)
}

/// Natural-boundary residual `⟨F_p, N⟩ − g_v` at the point of `face` with
/// in-face coordinates `s`. Requires a flat box and a boundary integrand.
pub fn neumann_residual(
    e: &EnergyFunctional,
    v: &ScalarField,
    face: Face,
    s: &[f64],
) -> Result<f64> {
    e.check_same_chart(v)?;
    let chart = e.chart();
    if chart.kind() != ChartKind::FlatBox {
        return Err(Error::UnsupportedChart(format!(
            "natural boundary conditions need a flat box, got '{}'",
            chart.name()
        )));
    }
    let b = e.boundary().ok_or_else(|| {
        Error::InvalidArgument("functional has no boundary integrand".into())
    })?;
    let u = face.lift(chart, s)?;
    let x = chart.embed(&u);
    let val = v.value(&u);
    let f_p = e.integrand().f_p(&x, val, &v.gradient_raw(&u));
    let n = face.outward_normal(chart.intrinsic_dim());
    let flux: f64 = f_p.iter().zip(&n).map(|(a, b)| a * b).sum();
    Ok(flux - (b.g_v)(&x, val))
}

/// Second variation `E″(v)(φ)(φ)` by quadrature of the general quadratic
/// form `F_vv φ² + 2φ F_vp·∇φ + (F_pp ∇φ)·∇φ`.
///
/// Boundary integrands contribute nothing here: they are affine in `v`
/// (only `g` and `g_v` are modelled), so their second derivative vanishes.
pub fn second_variation(
    e: &EnergyFunctional,
    v: &ScalarField,
    phi: &ScalarField,
    grid: &QuadratureGrid,
) -> Result<f64> {
    e.check_same_chart(v)?;
    e.check_same_chart(phi)?;
    let chart = e.chart();
    let ig = e.integrand();
    let m = chart.intrinsic_dim();
    chart.surface_integral(grid, |u| {
        let x = chart.embed(u);
        let val = v.value(u);
        let p = v.gradient_raw(u);
        let phi_val = phi.value(u);
        let grad_phi = phi.gradient_raw(u);
        let f_vv = ig.f_vv(&x, val, &p);
        let f_vp = ig.f_vp(&x, val, &p);
        let f_pp = ig.f_pp(&x, val, &p);
        let mut acc = f_vv * phi_val * phi_val;
        for i in 0..m {
            acc += 2.0 * phi_val * f_vp[i] * grad_phi[i];
            for j in 0..m {
                acc += f_pp[i][j] * grad_phi[i] * grad_phi[j];
            }
        }
        acc
    })
}

/// Second variation of the entropy functional by its closed form
/// `∫ e^{−v} [(2 + ||∇v||²)φ² − 4φ⟨∇φ, ∇v⟩ + 2||∇φ||²] dS`.
///
/// This is an independent route: it never touches the integrand's
/// derivative tables, so agreement with [`second_variation`] cross-checks
/// both. Only meaningful for [`FunctionalKind::Perelman`].
pub fn entropy_second_variation(
    e: &EnergyFunctional,
    v: &ScalarField,
    phi: &ScalarField,
    grid: &QuadratureGrid,
) -> Result<f64> {
    if e.kind() != FunctionalKind::Perelman {
        return Err(Error::InvalidArgument(
            "the closed-form second variation applies to the entropy functional only".into(),
        ));
    }
    e.check_same_chart(v)?;
    e.check_same_chart(phi)?;
    let chart = e.chart();
    chart.surface_integral(grid, |u| {
        let p = v.gradient_raw(u);
        let grad_phi = phi.gradient_raw(u);
        let phi_val = phi.value(u);
        entropy_hessian_bracket(&p, phi_val, &grad_phi) * (-v.value(u)).exp()
    })
}

/// The bracket `(2 + ||∇v||²)φ² − 4φ⟨∇φ, ∇v⟩ + 2||∇φ||²` of the entropy
/// second variation, given frame gradients. Algebraically identical to
/// `2||φ∇v − ∇φ||² + (2 − ||∇v||²)φ²`, which exhibits its sign: negative
/// values require `||∇v||² > 2`.
pub fn entropy_hessian_bracket(grad_v: &[f64], phi: f64, grad_phi: &[f64]) -> f64 {
    let q: f64 = grad_v.iter().map(|a| a * a).sum();
    let cross: f64 = grad_v.iter().zip(grad_phi).map(|(a, b)| a * b).sum();
    let gp: f64 = grad_phi.iter().map(|a| a * a).sum();
    (2.0 + q) * phi * phi - 4.0 * phi * cross + 2.0 * gp
}

/// A continuously differentiable cut-off direction for saddle detection:
/// equal to `e^v` where `||∇v||² ≥ 2 + margin`, zero where `||∇v||² ≤ 2`,
/// blended by a quartic-bump profile in between.
///
/// On the plateau the second-variation integrand reduces to
/// `e^v (2 − ||∇v||²) < 0`, which is what makes the direction useful.
/// Errors with [`Error::LevelNotAttained`] when no grid node reaches the
/// plateau level `2 + margin`.
pub fn saddle_witness(
    v: &ScalarField,
    margin: f64,
    grid: &QuadratureGrid,
) -> Result<ScalarField> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "blend margin must be positive, got {margin}"
        )));
    }
    if grid.chart() != v.chart() {
        return Err(Error::ChartMismatch {
            expected: v.chart().name().into(),
            got: grid.chart().name().into(),
        });
    }
    let level = 2.0 + margin;
    let attained = grid
        .nodes
        .iter()
        .any(|u| grad_sq_raw(v, u) > level);
    if !attained {
        return Err(Error::LevelNotAttained { level });
    }
    let vv = v.clone();
    Ok(ScalarField::new(v.chart().clone(), move |u| {
        let q = grad_sq_raw(&vv, u);
        let s = (q - 2.0) / margin;
        if s <= 0.0 {
            0.0
        } else {
            vv.value(u).exp() * quartic_blend(s)
        }
    }))
}

/// `||∇v||²` without the interior check, matching the quadrature loops.
fn grad_sq_raw(v: &ScalarField, u: &[f64]) -> f64 {
    v.gradient_raw(u).iter().map(|a| a * a).sum()
}

/// Monotone `C¹` ramp `[0, 1] → [0, 1]` with vanishing derivative at both
/// ends: the normalized primitive of the bump `(1 − r²)²` on `[−1, 1]`.
fn quartic_blend(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let r = 2.0 * s - 1.0;
        // ∫₀^r (1 − t²)² dt = r − 2r³/3 + r⁵/5; full mass over [−1, 1] is 16/15
        let primitive = r - 2.0 * r.powi(3) / 3.0 + r.powi(5) / 5.0;
        (primitive + 8.0 / 15.0) / (16.0 / 15.0)
    }
}

/// Classify a critical point of the entropy functional on its grid.
///
/// The gradient criterion decides the easy case: `sup ||∇v||² < 2` over the
/// nodes yields `StrictLocalMinCandidate` ("candidate" because only the
/// sampled grid is inspected). When the super-level set `{||∇v||² > 2}`
/// carries at least [`SADDLE_WEIGHT_FRACTION`] of the surface measure, a
/// cut-off witness is built and a negative second variation certifies
/// `Saddle`. Everything else is `Inconclusive`, with the probes' second
/// variations attached for the caller to inspect.
pub fn classify_critical_point(
    e: &EnergyFunctional,
    v: &ScalarField,
    grid: &QuadratureGrid,
    probes: &[ScalarField],
) -> Result<ClassificationReport> {
    if e.kind() != FunctionalKind::Perelman {
        return Err(Error::InvalidArgument(
            "classification applies to the entropy functional only".into(),
        ));
    }
    e.check_same_chart(v)?;
    let chart = e.chart();
    if grid.chart() != chart {
        return Err(Error::ChartMismatch {
            expected: chart.name().into(),
            got: grid.chart().name().into(),
        });
    }

    let mut sup_grad_sq = f64::NEG_INFINITY;
    let mut super_level_weight = 0.0;
    let mut total_weight = 0.0;
    for (node, &w) in grid.nodes.iter().zip(&grid.weights) {
        let q = v.grad_norm_sq(node)?;
        if !q.is_finite() {
            return Err(Error::NonFinite {
                context: "gradient criterion".into(),
                at: node.clone(),
            });
        }
        let wm = w * chart.metric_at(node)?.sqrt_det;
        total_weight += wm;
        if q > 2.0 {
            super_level_weight += wm;
        }
        sup_grad_sq = sup_grad_sq.max(q);
    }

    if sup_grad_sq < 2.0 {
        return Ok(ClassificationReport {
            verdict: Verdict::StrictLocalMinCandidate,
            sup_grad_sq,
            witness: None,
            witness_value: None,
            probe_values: Vec::new(),
        });
    }

    if super_level_weight >= SADDLE_WEIGHT_FRACTION * total_weight {
        match saddle_witness(v, SADDLE_MARGIN, grid) {
            Ok(witness) => {
                let value = second_variation(e, v, &witness, grid)?;
                if value < 0.0 {
                    return Ok(ClassificationReport {
                        verdict: Verdict::Saddle,
                        sup_grad_sq,
                        witness: Some(witness),
                        witness_value: Some(value),
                        probe_values: Vec::new(),
                    });
                }
            }
            Err(Error::LevelNotAttained { .. }) => {}
            Err(other) => return Err(other),
        }
    }

    let mut probe_values = Vec::with_capacity(probes.len());
    for phi in probes {
        probe_values.push(second_variation(e, v, phi, grid)?);
    }
    Ok(ClassificationReport {
        verdict: Verdict::Inconclusive,
        sup_grad_sq,
        witness: None,
        witness_value: None,
        probe_values,
    })
}

/// Deterministic probe directions for classification: the constant field
/// followed by low-order oscillations.
///
/// On hypersphere charts the probes are pullbacks of ambient coordinate
/// monomials (graded order), which expand in low-order spherical harmonics
/// and stay smooth at the poles. On flat charts they are tensor products of
/// sines and cosines scaled to the domain box.
pub fn default_probes(chart: &Chart, count: usize) -> Vec<ScalarField> {
    let mut probes = Vec::with_capacity(count);
    if count == 0 {
        return probes;
    }
    probes.push(ScalarField::constant(chart.clone(), 1.0));
    match chart.kind() {
        ChartKind::Hypersphere => {
            let n = chart.ambient_dim();
            'deg: for degree in 1..32usize {
                for expo in compositions(degree, n) {
                    if probes.len() >= count {
                        break 'deg;
                    }
                    let field = ScalarField::from_ambient(chart.clone(), move |x: &[f64]| {
                        x.iter()
                            .zip(&expo)
                            .map(|(xi, &k)| xi.powi(k as i32))
                            .product()
                    });
                    probes.push(field);
                }
            }
        }
        _ => {
            let domain: Vec<(f64, f64)> = chart.domain().to_vec();
            let m = chart.intrinsic_dim();
            'deg2: for degree in 1..32usize {
                for freq in compositions(degree, m) {
                    let active: Vec<usize> =
                        (0..m).filter(|&i| freq[i] > 0).collect();
                    for mask in 0..(1u32 << active.len()) {
                        if probes.len() >= count {
                            break 'deg2;
                        }
                        let freq = freq.clone();
                        let domain = domain.clone();
                        let active = active.clone();
                        probes.push(ScalarField::new(chart.clone(), move |u: &[f64]| {
                            let mut prod = 1.0;
                            for (bit, &i) in active.iter().enumerate() {
                                let (lo, hi) = domain[i];
                                let t = 2.0 * std::f64::consts::PI * freq[i] as f64
                                    * (u[i] - lo)
                                    / (hi - lo);
                                prod *= if mask >> bit & 1 == 0 { t.cos() } else { t.sin() };
                            }
                            prod
                        }));
                    }
                }
            }
        }
    }
    probes
}

/// All length-`n` vectors of non-negative integers summing to `degree`,
/// in lexicographic order.
fn compositions(degree: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(rest: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(rest);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=rest).rev() {
            prefix.push(k);
            rec(rest - k, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(degree, n, &mut Vec::new(), &mut out);
    }
    out
}
