//! First-order energy functionals `E(v) = ∫ F(x, v, ∇v) dS − ∫_∂ g(x, v) dA`.
//!
//! An [`Integrand`] bundles `F` with its partial derivatives in the scalar
//! slot (`F_v`) and the gradient slot (`F_p`, a frame vector), plus the
//! second-order blocks `F_vv`, `F_vp`, `F_pp` needed by second variations.
//! Analytic derivative closures are optional; anything missing falls back
//! to central differences in the `(v, p)` arguments (first order at step
//! `1e−6`, second order as nested first differences at step `1e−4`).
//!
//! Two built-ins cover the workbench:
//!
//! * **Dirichlet**: `F = ‖p‖²`, the classical gradient energy;
//! * **Perelman entropy**: `F = (R + ‖p‖²) e^{−v}` with `R` the constant
//!   scalar curvature of the chart — defined only on charts that have one.
//!
//! An optional boundary integrand `g(x, v)` (flat boxes only) models
//! energies of the form `∫ F dS − ∫_∂ g dA`, which is how natural/Neumann
//! boundary conditions enter the first variation.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::geometry::{Chart, ChartKind, QuadratureGrid};

/// Step for first-order FD fallbacks in `v` and `p`.
pub const INTEGRAND_FD_STEP: f64 = 1e-6;
/// Outer step for the nested second-order FD fallbacks.
pub const INTEGRAND_FD_STEP2: f64 = 1e-4;

type ScalarArgFn = Arc<dyn Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync>;
type VectorArgFn = Arc<dyn Fn(&[f64], f64, &[f64]) -> Vec<f64> + Send + Sync>;
type MatrixArgFn = Arc<dyn Fn(&[f64], f64, &[f64]) -> Vec<Vec<f64>> + Send + Sync>;

/// Pointwise integrand `F(x, v, p)` with optional analytic derivatives.
///
/// `x` is the ambient point, `v` the field value, `p` the frame gradient.
#[derive(Clone)]
pub struct Integrand {
    f: ScalarArgFn,
    d_v: Option<ScalarArgFn>,
    d_p: Option<VectorArgFn>,
    d_vv: Option<ScalarArgFn>,
    d_vp: Option<VectorArgFn>,
    d_pp: Option<MatrixArgFn>,
}

impl std::fmt::Debug for Integrand {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("Integrand")
            .field("analytic_first", &(self.d_v.is_some() && self.d_p.is_some()))
            .field(
                "analytic_second",
                &(self.d_vv.is_some() && self.d_vp.is_some() && self.d_pp.is_some()),
            )
            .finish()
    }
}

impl Integrand {
    /// Integrand from the bare density; all derivatives by differences.
    pub fn from_density(
        f: impl Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Integrand {
        Integrand {
            f: Arc::new(f),
            d_v: None,
            d_p: None,
            d_vv: None,
            d_vp: None,
            d_pp: None,
        }
    }

    /// Attach analytic first derivatives.
    pub fn with_first_derivatives(mut self, d_v: ScalarArgFn, d_p: VectorArgFn) -> Integrand {
        self.d_v = Some(d_v);
        self.d_p = Some(d_p);
        self
    }

    /// Attach analytic second derivatives.
    pub fn with_second_derivatives(
        mut self,
        d_vv: ScalarArgFn,
        d_vp: VectorArgFn,
        d_pp: MatrixArgFn,
    ) -> Integrand {
        self.d_vv = Some(d_vv);
        self.d_vp = Some(d_vp);
        self.d_pp = Some(d_pp);
        self
    }

    /// `F(x, v, p)`.
    pub fn value(&self, x: &[f64], v: f64, p: &[f64]) -> f64 {
        (self.f)(x, v, p)
    }

    /// `∂F/∂v`.
    pub fn f_v(&self, x: &[f64], v: f64, p: &[f64]) -> f64 {
        if let Some(d) = &self.d_v {
            return d(x, v, p);
        }
        let h = INTEGRAND_FD_STEP;
        ((self.f)(x, v + h, p) - (self.f)(x, v - h, p)) / (2.0 * h)
    }

    /// `∂F/∂p` as a frame vector.
    pub fn f_p(&self, x: &[f64], v: f64, p: &[f64]) -> Vec<f64> {
        if let Some(d) = &self.d_p {
            return d(x, v, p);
        }
        let h = INTEGRAND_FD_STEP;
        let mut up = p.to_vec();
        let mut dn = p.to_vec();
        (0..p.len())
            .map(|i| {
                up[i] += h;
                dn[i] -= h;
                let d = ((self.f)(x, v, &up) - (self.f)(x, v, &dn)) / (2.0 * h);
                up[i] = p[i];
                dn[i] = p[i];
                d
            })
            .collect()
    }

    /// `∂²F/∂v²` (nested first differences when not analytic).
    pub fn f_vv(&self, x: &[f64], v: f64, p: &[f64]) -> f64 {
        if let Some(d) = &self.d_vv {
            return d(x, v, p);
        }
        let h = INTEGRAND_FD_STEP2;
        (self.f_v(x, v + h, p) - self.f_v(x, v - h, p)) / (2.0 * h)
    }

    /// `∂²F/∂v∂p` as a frame vector.
    pub fn f_vp(&self, x: &[f64], v: f64, p: &[f64]) -> Vec<f64> {
        if let Some(d) = &self.d_vp {
            return d(x, v, p);
        }
        let h = INTEGRAND_FD_STEP2;
        let up = self.f_p(x, v + h, p);
        let dn = self.f_p(x, v - h, p);
        up.iter()
            .zip(&dn)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect()
    }

    /// `∂²F/∂p²` as a symmetric matrix (symmetrised when computed by FD).
    pub fn f_pp(&self, x: &[f64], v: f64, p: &[f64]) -> Vec<Vec<f64>> {
        if let Some(d) = &self.d_pp {
            return d(x, v, p);
        }
        let h = INTEGRAND_FD_STEP2;
        let k = p.len();
        let mut cols = Vec::with_capacity(k);
        let mut up = p.to_vec();
        let mut dn = p.to_vec();
        for j in 0..k {
            up[j] += h;
            dn[j] -= h;
            let a = self.f_p(x, v, &up);
            let b = self.f_p(x, v, &dn);
            cols.push(
                a.iter()
                    .zip(&b)
                    .map(|(x1, x2)| (x1 - x2) / (2.0 * h))
                    .collect::<Vec<f64>>(),
            );
            up[j] = p[j];
            dn[j] = p[j];
        }
        // symmetrise: H[i][j] = (cols[j][i] + cols[i][j]) / 2
        (0..k)
            .map(|i| (0..k).map(|j| 0.5 * (cols[j][i] + cols[i][j])).collect())
            .collect()
    }
}

/// Boundary density `g(x, v)` and its `v`-derivative.
#[derive(Clone)]
pub struct BoundaryIntegrand {
    pub g: Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>,
    pub g_v: Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for BoundaryIntegrand {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.write_str("BoundaryIntegrand")
    }
}

/// Which built-in family a functional belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    Dirichlet,
    Perelman,
    Custom,
}

/// An energy functional over a fixed chart.
#[derive(Clone, Debug)]
pub struct EnergyFunctional {
    chart: Chart,
    integrand: Integrand,
    boundary: Option<BoundaryIntegrand>,
    kind: FunctionalKind,
}

impl EnergyFunctional {
    /// Dirichlet energy `∫ ‖∇v‖² dS`.
    pub fn dirichlet(chart: Chart) -> EnergyFunctional {
        let integrand = Integrand::from_density(|_x, _v, p| p.iter().map(|c| c * c).sum())
            .with_first_derivatives(
                Arc::new(|_x, _v, _p| 0.0),
                Arc::new(|_x, _v, p: &[f64]| p.iter().map(|c| 2.0 * c).collect()),
            )
            .with_second_derivatives(
                Arc::new(|_x, _v, _p| 0.0),
                Arc::new(|_x, _v, p: &[f64]| vec![0.0; p.len()]),
                Arc::new(|_x, _v, p: &[f64]| {
                    let k = p.len();
                    (0..k)
                        .map(|i| (0..k).map(|j| if i == j { 2.0 } else { 0.0 }).collect())
                        .collect()
                }),
            );
        EnergyFunctional {
            chart,
            integrand,
            boundary: None,
            kind: FunctionalKind::Dirichlet,
        }
    }

    /// Perelman entropy `∫ (R + ‖∇v‖²) e^{−v} dS` with `R` the constant
    /// scalar curvature of the chart. Charts without a curvature value
    /// (flat boxes, the annulus) are rejected.
    pub fn perelman(chart: Chart) -> Result<EnergyFunctional> {
        let r = chart.scalar_curvature()?;
        let density = move |_x: &[f64], v: f64, p: &[f64]| {
            (r + p.iter().map(|c| c * c).sum::<f64>()) * (-v).exp()
        };
        let integrand = Integrand::from_density(density)
            .with_first_derivatives(
                Arc::new(move |_x, v, p: &[f64]| {
                    -(r + p.iter().map(|c| c * c).sum::<f64>()) * (-v).exp()
                }),
                Arc::new(|_x, v: f64, p: &[f64]| {
                    let w = (-v).exp();
                    p.iter().map(|c| 2.0 * c * w).collect()
                }),
            )
            .with_second_derivatives(
                Arc::new(move |_x, v, p: &[f64]| {
                    (r + p.iter().map(|c| c * c).sum::<f64>()) * (-v).exp()
                }),
                Arc::new(|_x, v: f64, p: &[f64]| {
                    let w = (-v).exp();
                    p.iter().map(|c| -2.0 * c * w).collect()
                }),
                Arc::new(|_x, v: f64, p: &[f64]| {
                    let w = (-v).exp();
                    let k = p.len();
                    (0..k)
                        .map(|i| {
                            (0..k)
                                .map(|j| if i == j { 2.0 * w } else { 0.0 })
                                .collect()
                        })
                        .collect()
                }),
            );
        Ok(EnergyFunctional {
            chart,
            integrand,
            boundary: None,
            kind: FunctionalKind::Perelman,
        })
    }

    /// A custom functional from an arbitrary integrand.
    pub fn custom(chart: Chart, integrand: Integrand) -> EnergyFunctional {
        EnergyFunctional {
            chart,
            integrand,
            boundary: None,
            kind: FunctionalKind::Custom,
        }
    }

    /// Attach a boundary density `g(x, v)`, subtracted over `∂U`.
    /// Only flat boxes expose a boundary.
    pub fn with_boundary(mut self, boundary: BoundaryIntegrand) -> Result<EnergyFunctional> {
        if self.chart.kind() != ChartKind::FlatBox {
            return Err(Error::UnsupportedChart(format!(
                "boundary integrands need a flat box, got '{}'",
                self.chart.name()
            )));
        }
        self.boundary = Some(boundary);
        Ok(self)
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn kind(&self) -> FunctionalKind {
        self.kind
    }

    pub fn integrand(&self) -> &Integrand {
        &self.integrand
    }

    pub fn boundary(&self) -> Option<&BoundaryIntegrand> {
        self.boundary.as_ref()
    }

    /// Check that a field lives on this functional's chart.
    pub fn check_same_chart(&self, v: &ScalarField) -> Result<()> {
        if v.chart() != &self.chart {
            return Err(Error::ChartMismatch {
                expected: self.chart.name().into(),
                got: v.chart().name().into(),
            });
        }
        Ok(())
    }

    /// Evaluate `E(v)` on the given quadrature grid.
    pub fn eval(&self, v: &ScalarField, grid: &QuadratureGrid) -> Result<f64> {
        self.check_same_chart(v)?;
        let mut interior = self.chart.surface_integral(grid, |u| {
            let x = self.chart.embed(u);
            let val = v.value(u);
            let p = v.gradient_raw(u);
            self.integrand.value(&x, val, &p)
        })?;
        if let Some(b) = &self.boundary {
            for face in self.chart.boundary_faces()? {
                let fg = QuadratureGrid::gauss_legendre_face(&self.chart, face, grid.order)?;
                for (node, &w) in fg.nodes.iter().zip(&fg.weights) {
                    let x = self.chart.embed(node);
                    let gval = (b.g)(&x, v.value(node));
                    if !gval.is_finite() {
                        return Err(Error::NonFinite {
                            context: "boundary integrand".into(),
                            at: node.clone(),
                        });
                    }
                    interior -= w * gval;
                }
            }
        }
        Ok(interior)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Chart;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn unit_square() -> Chart {
        Chart::flat_box(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap()
    }

    #[test]
    fn dirichlet_energy_of_simple_fields() {
        let flat = unit_square();
        let grid = QuadratureGrid::gauss_legendre(&flat, 16).unwrap();
        let e = EnergyFunctional::dirichlet(flat.clone());

        let c = ScalarField::constant(flat.clone(), 4.0);
        assert!(e.eval(&c, &grid).unwrap().abs() < 1e-14);

        let x1 = ScalarField::new(flat, |u| u[0]);
        assert_relative_eq!(e.eval(&x1, &grid).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn dirichlet_energy_of_the_log_potential_on_the_annulus() {
        // ∫ (1/r²) dS over r ∈ (r_in, r_out) = 2π ln(r_out / r_in)
        let ann = Chart::polar_annulus(0.5, 2.0).unwrap();
        let grid = QuadratureGrid::gauss_legendre(&ann, 32).unwrap();
        let e = EnergyFunctional::dirichlet(ann.clone());
        let lnr = ScalarField::new(ann, |u| u[0].ln());
        assert_relative_eq!(
            e.eval(&lnr, &grid).unwrap(),
            2.0 * PI * 4.0f64.ln(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn perelman_energy_of_constants() {
        let s2 = Chart::s2();
        let grid = QuadratureGrid::gauss_legendre(&s2, 32).unwrap();
        let e = EnergyFunctional::perelman(s2.clone()).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..=10 {
            let v = ScalarField::constant(s2.clone(), k as f64);
            let val = e.eval(&v, &grid).unwrap();
            let expected = 8.0 * PI * (-(k as f64)).exp();
            assert_relative_eq!(val, expected, max_relative = 1e-8);
            assert!(val < last, "k-scan must decrease strictly");
            last = val;
        }
    }

    #[test]
    fn perelman_requires_curvature() {
        assert!(EnergyFunctional::perelman(unit_square()).is_err());
        assert!(
            EnergyFunctional::perelman(Chart::polar_annulus(0.5, 2.0).unwrap()).is_err()
        );
    }

    #[test]
    fn analytic_and_fd_integrand_derivatives_agree() {
        let s2 = Chart::s2();
        let per = EnergyFunctional::perelman(s2.clone()).unwrap();
        let dir = EnergyFunctional::dirichlet(s2);
        // FD-only twins built from the same densities
        let per_fd = Integrand::from_density(|_x, v: f64, p: &[f64]| {
            (2.0 + p.iter().map(|c| c * c).sum::<f64>()) * (-v).exp()
        });
        let dir_fd =
            Integrand::from_density(|_x, _v, p: &[f64]| p.iter().map(|c| c * c).sum());

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.3];
            let v = rng.gen_range(-1.5..1.5);
            let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            for (a, b) in [(per.integrand(), &per_fd), (dir.integrand(), &dir_fd)] {
                let rel = |x: f64, y: f64| (x - y).abs() / (1.0 + x.abs());
                assert!(rel(a.f_v(&x, v, &p), b.f_v(&x, v, &p)) < 1e-6);
                let (pa, pb) = (a.f_p(&x, v, &p), b.f_p(&x, v, &p));
                for i in 0..2 {
                    assert!(rel(pa[i], pb[i]) < 1e-6);
                }
                assert!(rel(a.f_vv(&x, v, &p), b.f_vv(&x, v, &p)) < 1e-5);
                let (va, vb) = (a.f_vp(&x, v, &p), b.f_vp(&x, v, &p));
                for i in 0..2 {
                    assert!(rel(va[i], vb[i]) < 1e-5);
                }
                let (ha, hb) = (a.f_pp(&x, v, &p), b.f_pp(&x, v, &p));
                for i in 0..2 {
                    for j in 0..2 {
                        assert!(rel(ha[i][j], hb[i][j]) < 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn energy_is_stable_under_grid_refinement() {
        // The test field must be smooth as a function on the sphere itself,
        // not merely in chart coordinates: an azimuth-dependent term without a
        // matching cos(latitude) factor has a gradient that blows up at the
        // poles and the energy integral ceases to converge spectrally.  This
        // field is the restriction of the ambient-linear 0.3 x3 + 0.1 x2.
        let s2 = Chart::s2();
        let e = EnergyFunctional::perelman(s2.clone()).unwrap();
        let v = ScalarField::new(s2.clone(), |u| {
            0.3 * u[1].sin() + 0.1 * u[0].sin() * u[1].cos()
        });
        let g48 = QuadratureGrid::gauss_legendre(&s2, 48).unwrap();
        let g64 = QuadratureGrid::gauss_legendre(&s2, 64).unwrap();
        let a = e.eval(&v, &g48).unwrap();
        let b = e.eval(&v, &g64).unwrap();
        assert!((a - b).abs() < 1e-10, "48 vs 64: {a} vs {b}");
    }

    #[test]
    fn perelman_energy_is_positive() {
        let s2 = Chart::s2();
        let grid = QuadratureGrid::gauss_legendre(&s2, 24).unwrap();
        let e = EnergyFunctional::perelman(s2.clone()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (a, b, c) = (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let v = ScalarField::new(s2.clone(), move |u: &[f64]| {
                a * u[1].sin() + b * u[0].sin() * u[1].cos() + c
            });
            assert!(e.eval(&v, &grid).unwrap() > 0.0);
        }
    }

    #[test]
    fn boundary_term_is_subtracted() {
        // E(v) = ∫ ‖∇v‖² − ∫_∂ 2v dA with v = x1 on the unit square:
        // interior 1; boundary: faces x1=0 → 0, x1=1 → 2, x2 ∈ {0,1} → 1 each
        let flat = unit_square();
        let e = EnergyFunctional::dirichlet(flat.clone())
            .with_boundary(BoundaryIntegrand {
                g: Arc::new(|_x, v| 2.0 * v),
                g_v: Arc::new(|_x, _v| 2.0),
            })
            .unwrap();
        let grid = QuadratureGrid::gauss_legendre(&flat, 16).unwrap();
        let v = ScalarField::new(flat, |u| u[0]);
        assert_relative_eq!(e.eval(&v, &grid).unwrap(), 1.0 - 4.0, epsilon = 1e-10);
    }

    #[test]
    fn boundary_needs_a_flat_box() {
        let s2 = Chart::s2();
        assert!(EnergyFunctional::dirichlet(s2)
            .with_boundary(BoundaryIntegrand {
                g: Arc::new(|_x, _v| 0.0),
                g_v: Arc::new(|_x, _v| 0.0),
            })
            .is_err());
    }

    #[test]
    fn eval_rejects_fields_from_other_charts() {
        let s2 = Chart::s2();
        let e = EnergyFunctional::perelman(s2.clone()).unwrap();
        let grid = QuadratureGrid::gauss_legendre(&s2, 8).unwrap();
        let foreign = ScalarField::constant(unit_square(), 1.0);
        assert!(matches!(
            e.eval(&foreign, &grid),
            Err(Error::ChartMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_density_is_reported() {
        let s2 = Chart::s2();
        let grid = QuadratureGrid::gauss_legendre(&s2, 4).unwrap();
        let bad = EnergyFunctional::custom(
            s2.clone(),
            Integrand::from_density(|_x, v: f64, _p| 1.0 / (v - v)),
        );
        let v = ScalarField::constant(s2, 0.0);
        assert!(matches!(bad.eval(&v, &grid), Err(Error::NonFinite { .. })));
    }
}
