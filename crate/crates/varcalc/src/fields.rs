//! Scalar fields and frame vector fields on a chart.
//!
//! A [`ScalarField`] is a function of the chart coordinates together with
//! optional analytic partial derivatives; missing partials fall back to
//! central differences. Vector fields are expressed in the *orthonormal
//! frame* `E_i = Φ_{u_i} / ‖Φ_{u_i}‖`, so for a diagonal metric the
//! intrinsic gradient has components
//!
//! ```text
//! (grad f)_i = (1 / √g_ii) ∂f/∂u_i ,
//! ```
//!
//! the divergence of a frame field `X` is
//!
//! ```text
//! div X = (1 / √|g|) Σ_j ∂_j ( √|g| X_j / √g_jj ) ,
//! ```
//!
//! and the Laplace–Beltrami operator is `div ∘ grad`. Second derivatives
//! are always taken as nested first derivatives with a coarser outer step;
//! this keeps the roundoff amplification of FD-backed fields in check.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Chart;

/// Default step for first-derivative central differences.
pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Outer step for divergence (and hence nested second derivatives).
pub const DIVERGENCE_FD_STEP: f64 = 1e-4;

type DynFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A scalar function of the chart coordinates.
#[derive(Clone)]
pub struct ScalarField {
    chart: Chart,
    f: DynFn,
    partials: Option<Vec<DynFn>>,
    fd_step: f64,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("ScalarField")
            .field("chart", &self.chart.name())
            .field("analytic_partials", &self.partials.is_some())
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl ScalarField {
    /// Field from a coordinate function; derivatives by central differences.
    pub fn new(
        chart: Chart,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> ScalarField {
        ScalarField {
            chart,
            f: Arc::new(f),
            partials: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    /// Field with analytic partial derivatives, one closure per axis.
    pub fn with_partials(
        chart: Chart,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        partials: Vec<DynFn>,
    ) -> Result<ScalarField> {
        if partials.len() != chart.intrinsic_dim() {
            return Err(Error::InvalidArgument(format!(
                "{} partials supplied for an m = {} chart",
                partials.len(),
                chart.intrinsic_dim()
            )));
        }
        Ok(ScalarField {
            chart,
            f: Arc::new(f),
            partials: Some(partials),
            fd_step: DEFAULT_FD_STEP,
        })
    }

    /// The constant field `u ↦ c` (with exact zero partials).
    pub fn constant(chart: Chart, c: f64) -> ScalarField {
        let m = chart.intrinsic_dim();
        let zero: DynFn = Arc::new(|_: &[f64]| 0.0);
        ScalarField {
            chart,
            f: Arc::new(move |_| c),
            partials: Some(vec![zero; m]),
            fd_step: DEFAULT_FD_STEP,
        }
    }

    /// Pull an ambient function back through the embedding: `f = g ∘ Φ`.
    pub fn from_ambient(
        chart: Chart,
        g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> ScalarField {
        let embed_chart = chart.clone();
        ScalarField {
            chart,
            f: Arc::new(move |u| g(&embed_chart.embed(u))),
            partials: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    /// Replace the finite-difference step (builder style).
    pub fn with_fd_step(mut self, h: f64) -> ScalarField {
        self.fd_step = h;
        self
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    /// Whether derivatives come from analytic closures rather than FD.
    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    /// Evaluate the field.
    pub fn value(&self, u: &[f64]) -> f64 {
        (self.f)(u)
    }

    /// Coordinate partial `∂f/∂u_i`: analytic if available, otherwise a
    /// central difference. No domain check — stencils of other operators
    /// may legitimately poke just outside the open box.
    pub fn partial(&self, u: &[f64], i: usize) -> f64 {
        if let Some(parts) = &self.partials {
            return (parts[i])(u);
        }
        let h = self.fd_step;
        let mut up = u.to_vec();
        let mut dn = u.to_vec();
        up[i] += h;
        dn[i] -= h;
        ((self.f)(&up) - (self.f)(&dn)) / (2.0 * h)
    }

    /// Intrinsic gradient in the orthonormal frame:
    /// `(grad f)_i = (1/√g_ii) ∂f/∂u_i`. The point must be interior.
    pub fn intrinsic_gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.chart.check_interior(u)?;
        let g = self.chart.metric_diag_raw(u);
        Ok((0..self.chart.intrinsic_dim())
            .map(|i| self.partial(u, i) / g[i].sqrt())
            .collect())
    }

    /// `‖grad f‖²` at an interior point.
    pub fn grad_norm_sq(&self, u: &[f64]) -> Result<f64> {
        Ok(self
            .intrinsic_gradient(u)?
            .iter()
            .map(|c| c * c)
            .sum())
    }

    /// Frame gradient without the interior check. Crate-internal: used by
    /// quadrature loops whose nodes are interior by construction.
    pub(crate) fn gradient_raw(&self, u: &[f64]) -> Vec<f64> {
        let g = self.chart.metric_diag_raw(u);
        (0..self.chart.intrinsic_dim())
            .map(|i| self.partial(u, i) / g[i].sqrt())
            .collect()
    }

    /// The gradient as a frame vector field (shares this field's data).
    pub fn gradient_field(&self) -> FrameVectorField {
        let m = self.chart.intrinsic_dim();
        let components: Vec<DynFn> = (0..m)
            .map(|i| {
                let fld = self.clone();
                let comp: DynFn = Arc::new(move |u: &[f64]| {
                    let g = fld.chart.metric_diag_raw(u);
                    fld.partial(u, i) / g[i].sqrt()
                });
                comp
            })
            .collect();
        FrameVectorField {
            chart: self.chart.clone(),
            components,
        }
    }

    /// Laplace–Beltrami `Δf = div(grad f)` as nested first derivatives
    /// (outer step [`DIVERGENCE_FD_STEP`]).
    pub fn laplace_beltrami(&self, u: &[f64]) -> Result<f64> {
        self.gradient_field().divergence(u)
    }

    /// The field `self + c · other` on the same chart. Analytic partials
    /// are combined when both sides have them.
    pub fn axpy(&self, c: f64, other: &ScalarField) -> Result<ScalarField> {
        if self.chart != other.chart {
            return Err(Error::ChartMismatch {
                expected: self.chart.name().into(),
                got: other.chart.name().into(),
            });
        }
        let (fa, fb) = (self.f.clone(), other.f.clone());
        let partials = match (&self.partials, &other.partials) {
            (Some(pa), Some(pb)) => Some(
                pa.iter()
                    .zip(pb)
                    .map(|(da, db)| {
                        let (da, db) = (da.clone(), db.clone());
                        let p: DynFn = Arc::new(move |u: &[f64]| da(u) + c * db(u));
                        p
                    })
                    .collect(),
            ),
            _ => None,
        };
        Ok(ScalarField {
            chart: self.chart.clone(),
            f: Arc::new(move |u| fa(u) + c * fb(u)),
            partials,
            fd_step: self.fd_step.min(other.fd_step),
        })
    }
}

/// A vector field expressed in the orthonormal frame of a chart.
#[derive(Clone)]
pub struct FrameVectorField {
    chart: Chart,
    components: Vec<DynFn>,
}

impl std::fmt::Debug for FrameVectorField {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("FrameVectorField")
            .field("chart", &self.chart.name())
            .field("components", &self.components.len())
            .finish()
    }
}

impl FrameVectorField {
    /// Field from one closure per frame direction.
    pub fn new(chart: Chart, components: Vec<DynFn>) -> Result<FrameVectorField> {
        if components.len() != chart.intrinsic_dim() {
            return Err(Error::InvalidArgument(format!(
                "{} components supplied for an m = {} chart",
                components.len(),
                chart.intrinsic_dim()
            )));
        }
        Ok(FrameVectorField { chart, components })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    /// Evaluate one frame component.
    pub fn component(&self, u: &[f64], i: usize) -> f64 {
        (self.components[i])(u)
    }

    /// Evaluate all frame components.
    pub fn components_at(&self, u: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c(u)).collect()
    }

    /// Riemannian divergence
    /// `div X = (1/√|g|) Σ_j ∂_j (√|g| X_j / √g_jj)` by central
    /// differences with step [`DIVERGENCE_FD_STEP`]. The stencil must stay
    /// strictly inside the domain.
    pub fn divergence(&self, u: &[f64]) -> Result<f64> {
        let h = DIVERGENCE_FD_STEP;
        let m = self.chart.intrinsic_dim();
        if !self.chart.is_interior(u, h + crate::geometry::INTERIOR_MARGIN) {
            return Err(Error::OutsideDomain {
                chart: self.chart.name().into(),
                point: u.to_vec(),
            });
        }
        // G_j(w) = √|g|(w) X_j(w) / √g_jj(w)
        let flux = |w: &[f64], j: usize| -> f64 {
            let g = self.chart.metric_diag_raw(w);
            let sqrt_det = g.iter().product::<f64>().sqrt();
            sqrt_det * (self.components[j])(w) / g[j].sqrt()
        };
        let g0 = self.chart.metric_diag_raw(u);
        let sqrt_det0 = g0.iter().product::<f64>().sqrt();
        let mut acc = 0.0;
        let mut up = u.to_vec();
        let mut dn = u.to_vec();
        for j in 0..m {
            up[j] += h;
            dn[j] -= h;
            acc += (flux(&up, j) - flux(&dn, j)) / (2.0 * h);
            up[j] = u[j];
            dn[j] = u[j];
        }
        Ok(acc / sqrt_det0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Chart, QuadratureGrid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::{FRAC_PI_3, PI};

    /// Interior sample points away from the box edges.
    fn sample_nodes(chart: &Chart, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                chart
                    .domain()
                    .iter()
                    .map(|&(lo, hi)| {
                        let pad = 0.05 * (hi - lo);
                        rng.gen_range(lo + pad..hi - pad)
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn constant_fields_have_zero_gradient() {
        let s2 = Chart::s2();
        let f = ScalarField::constant(s2, 3.5);
        let grad = f.intrinsic_gradient(&[1.0, 0.3]).unwrap();
        assert_eq!(grad, vec![0.0, 0.0]);
        assert_eq!(f.value(&[2.0, -0.2]), 3.5);
    }

    #[test]
    fn gradient_picks_up_the_frame_scaling() {
        let s2 = Chart::s2();
        // latitude coordinate: unit gradient straight north
        let lat = ScalarField::new(s2.clone(), |u| u[1]);
        let g = lat.intrinsic_gradient(&[1.0, 0.7]).unwrap();
        assert!((g[0]).abs() < 1e-9);
        assert_relative_eq!(g[1], 1.0, epsilon = 1e-9);

        // azimuth coordinate: gradient east, stretched by sec(latitude)
        let az = ScalarField::new(s2, |u| u[0]);
        let g = az.intrinsic_gradient(&[1.0, FRAC_PI_3]).unwrap();
        assert_relative_eq!(g[0], 1.0 / FRAC_PI_3.cos(), max_relative = 1e-9);
        assert!((g[1]).abs() < 1e-9);
    }

    #[test]
    fn gradient_requires_an_interior_point() {
        let s2 = Chart::s2();
        let f = ScalarField::new(s2, |u| u[1]);
        assert!(f.intrinsic_gradient(&[0.0, 0.3]).is_err());
        assert!(f.intrinsic_gradient(&[1.0, 7.0]).is_err());
    }

    #[test]
    fn divergence_of_known_fields() {
        let s2 = Chart::s2();
        // zero field
        let zero = ScalarField::constant(s2.clone(), 0.0).gradient_field();
        assert!(zero.divergence(&[1.0, 0.4]).unwrap().abs() < 1e-12);

        // gradient of the latitude coordinate: div = −tan(latitude)
        let lat = ScalarField::new(s2, |u| u[1]);
        let gf = lat.gradient_field();
        for l in [-0.9, -0.3, 0.2, 1.1] {
            let d = gf.divergence(&[2.0, l]).unwrap();
            assert!(
                (d + l.tan()).abs() < 1e-6,
                "div grad(lat) at {l}: {d} vs {}",
                -l.tan()
            );
        }

        // flat radial field (x1, x2): divergence 2
        let flat = Chart::flat_box(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let radial = FrameVectorField::new(
            flat,
            vec![Arc::new(|u: &[f64]| u[0]), Arc::new(|u: &[f64]| u[1])],
        )
        .unwrap();
        assert_relative_eq!(
            radial.divergence(&[0.3, 0.6]).unwrap(),
            2.0,
            epsilon = 1e-8
        );
    }

    #[test]
    fn laplace_beltrami_matches_hand_values() {
        // flat: Δ(x1²) = 2
        let flat = Chart::flat_box(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let sq = ScalarField::new(flat, |u| u[0] * u[0]);
        assert!((sq.laplace_beltrami(&[0.4, 0.5]).unwrap() - 2.0).abs() < 1e-6);

        // planar annulus: ln‖x‖ is harmonic
        let ann = Chart::polar_annulus(0.5, 2.0).unwrap();
        let lnr = ScalarField::from_ambient(ann, |x| {
            x.iter().map(|c| c * c).sum::<f64>().sqrt().ln()
        });
        for u in [[0.8, 1.0], [1.2, 3.0], [1.8, 5.5]] {
            let lap = lnr.laplace_beltrami(&u).unwrap();
            assert!(lap.abs() < 1e-6, "Δ ln r at {u:?} = {lap}");
        }

        // sphere: constants are harmonic
        let s2 = Chart::s2();
        let c = ScalarField::constant(s2, 2.0);
        assert!(c.laplace_beltrami(&[1.0, 0.2]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn analytic_partials_agree_with_finite_differences() {
        let s2 = Chart::s2();
        let f_expr = |u: &[f64]| (2.0 * u[0]).sin() * u[1].cos() + 0.5 * u[1];
        let with = ScalarField::with_partials(
            s2.clone(),
            f_expr,
            vec![
                Arc::new(|u: &[f64]| 2.0 * (2.0 * u[0]).cos() * u[1].cos()),
                Arc::new(|u: &[f64]| -(2.0 * u[0]).sin() * u[1].sin() + 0.5),
            ],
        )
        .unwrap();
        let without = ScalarField::new(s2.clone(), f_expr);
        for u in sample_nodes(&s2, 50, 7) {
            for i in 0..2 {
                let a = with.partial(&u, i);
                let b = without.partial(&u, i);
                assert!(
                    (a - b).abs() <= 1e-6 * (1.0 + a.abs()),
                    "∂_{i} at {u:?}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn product_rule_for_divergence() {
        // div(f X) = f div X + ⟨grad f, X⟩ in the orthonormal frame
        let s2 = Chart::s2();
        let f = ScalarField::new(s2.clone(), |u| (u[0]).sin() + u[1] * u[1]);
        let x = FrameVectorField::new(
            s2.clone(),
            vec![
                Arc::new(|u: &[f64]| u[1].cos()),
                Arc::new(|u: &[f64]| (0.5 * u[0]).sin()),
            ],
        )
        .unwrap();
        let ff = f.clone();
        let xx = x.clone();
        let fx = FrameVectorField::new(
            s2.clone(),
            (0..2)
                .map(|i| {
                    let (ff, xx) = (ff.clone(), xx.clone());
                    let c: DynFn =
                        Arc::new(move |u: &[f64]| ff.value(u) * xx.component(u, i));
                    c
                })
                .collect(),
        )
        .unwrap();
        for u in sample_nodes(&s2, 50, 11) {
            let lhs = fx.divergence(&u).unwrap();
            let grad = f.intrinsic_gradient(&u).unwrap();
            let xc = x.components_at(&u);
            let rhs = f.value(&u) * x.divergence(&u).unwrap()
                + grad.iter().zip(&xc).map(|(a, b)| a * b).sum::<f64>();
            assert!((lhs - rhs).abs() < 1e-5, "at {u:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn weighted_gradient_identity() {
        // div(e^{−v} grad v) = e^{−v} (Δv − ‖grad v‖²)
        let s2 = Chart::s2();
        let v = ScalarField::new(s2.clone(), |u| {
            0.4 * u[0].sin() * u[1].cos() + 0.3 * u[1]
        });
        let vv = v.clone();
        let weighted = FrameVectorField::new(
            s2.clone(),
            (0..2)
                .map(|i| {
                    let vv = vv.clone();
                    let c: DynFn = Arc::new(move |u: &[f64]| {
                        let g = vv.chart().metric_diag_raw(u);
                        (-vv.value(u)).exp() * vv.partial(u, i) / g[i].sqrt()
                    });
                    c
                })
                .collect(),
        )
        .unwrap();
        for u in sample_nodes(&s2, 50, 3) {
            let lhs = weighted.divergence(&u).unwrap();
            let rhs = (-v.value(&u)).exp()
                * (v.laplace_beltrami(&u).unwrap() - v.grad_norm_sq(&u).unwrap());
            assert!((lhs - rhs).abs() < 1e-5, "at {u:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn axpy_combines_fields_and_rejects_chart_mixing() {
        let s2 = Chart::s2();
        let a = ScalarField::new(s2.clone(), |u| u[0]);
        let b = ScalarField::new(s2.clone(), |u| u[1]);
        let c = a.axpy(2.0, &b).unwrap();
        assert_relative_eq!(c.value(&[1.0, 0.25]), 1.5, epsilon = 1e-14);

        let flat = Chart::flat_box(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let d = ScalarField::new(flat, |u| u[0]);
        assert!(a.axpy(1.0, &d).is_err());
    }

    #[test]
    fn vector_field_component_count_is_checked() {
        let s2 = Chart::s2();
        assert!(FrameVectorField::new(s2, vec![Arc::new(|_: &[f64]| 1.0)]).is_err());
    }

    #[test]
    fn divergence_stencil_must_stay_interior() {
        let s2 = Chart::s2();
        let x = ScalarField::constant(s2, 1.0).gradient_field();
        // latitude within one FD step of the pole
        assert!(x.divergence(&[1.0, PI / 2.0 - 1e-6]).is_err());
    }

    #[test]
    fn gradient_is_consistent_on_quadrature_nodes() {
        // the same expression evaluated as pullback and as chart function
        let ann = Chart::polar_annulus(0.5, 2.0).unwrap();
        let pullback = ScalarField::from_ambient(ann.clone(), |x| {
            x.iter().map(|c| c * c).sum::<f64>().sqrt().ln()
        });
        let direct = ScalarField::new(ann.clone(), |u| u[0].ln());
        let grid = QuadratureGrid::gauss_legendre(&ann, 6).unwrap();
        for u in &grid.nodes {
            let a = pullback.intrinsic_gradient(u).unwrap();
            let b = direct.intrinsic_gradient(u).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-7);
            assert!((a[1] - b[1]).abs() < 1e-7);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn gradient_is_linear(
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
            az in 0.3f64..6.0,
            lat in -1.4f64..1.4,
        ) {
            let s2 = Chart::s2();
            let f = ScalarField::new(s2.clone(), |u| u[0].sin() * u[1].cos());
            let g = ScalarField::new(s2.clone(), |u| u[1] * u[1]);
            let combo = f.axpy(b / a.abs().max(0.5), &g).unwrap();
            // grad(f + c g) = grad f + c grad g
            let c = b / a.abs().max(0.5);
            let u = [az, lat];
            let lhs = combo.intrinsic_gradient(&u).unwrap();
            let gf = f.intrinsic_gradient(&u).unwrap();
            let gg = g.intrinsic_gradient(&u).unwrap();
            for i in 0..2 {
                prop_assert!((lhs[i] - (gf[i] + c * gg[i])).abs() < 1e-9);
            }
        }
    }
}
