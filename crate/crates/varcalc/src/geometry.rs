//! Coordinate charts with diagonal metrics, quadrature, and Christoffel
//! symbols.
//!
//! A [`Chart`] is a named map `Φ : U ⊂ R^m → R^n` from an open coordinate
//! box onto a piece of an embedded manifold. Only a small family of charts
//! is supported, all with *diagonal* first fundamental form
//! `g_ii = ⟨Φ_{u_i}, Φ_{u_i}⟩`:
//!
//! * unit hyperspheres `S^2` and `S^3` in angular coordinates,
//! * flat boxes with the identity embedding,
//! * a planar annulus in polar coordinates.
//!
//! Surface integrals use tensor-product Gauss–Legendre quadrature over the
//! coordinate box with the metric volume factor `√|g|` applied at each
//! node. Christoffel symbols are assembled from central finite differences
//! of the analytic metric, so that geodesic shooting never relies on
//! hand-expanded symbols.

use crate::error::{Error, Result};

/// Points closer than this to the domain boundary count as "on" it.
pub const INTERIOR_MARGIN: f64 = 1e-9;
/// Step for finite-difference cross-checks of the metric.
pub const METRIC_FD_STEP: f64 = 1e-5;
/// Step for the metric derivatives inside Christoffel symbols.
pub const CHRISTOFFEL_FD_STEP: f64 = 1e-4;

/// Families of built-in charts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    /// Unit sphere `S^m ⊂ R^{m+1}`, `m ∈ {2, 3}`.
    Hypersphere,
    /// A box in `R^m` with the identity embedding.
    FlatBox,
    /// `(r, θ) ↦ (r cos θ, r sin θ)` on `(r_in, r_out) × (0, 2π)`.
    PolarAnnulus,
}

/// Concrete embedding formula carried by a chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Embedding {
    /// `S^2` with the azimuth first: `(cos u1 cos u2, sin u1 cos u2, sin u2)`
    /// on `(0, 2π) × (−π/2, π/2)`.
    SphereAzimuthFirst,
    /// `S^m` in hyperspherical coordinates with the latitudes first and the
    /// (cyclic) azimuth last; the metric is independent of the last
    /// coordinate, which is what the geodesic formulas assume.
    SphereAzimuthLast,
    /// Identity embedding of a box.
    Identity,
    /// Planar polar coordinates `(r, θ)`.
    Polar,
}

/// Diagonal metric data at a point.
#[derive(Clone, Debug)]
pub struct MetricData {
    /// Diagonal entries `g_ii`.
    pub g: Vec<f64>,
    /// `√|g| = √(∏ g_ii)`.
    pub sqrt_det: f64,
    /// Inverse diagonal entries `1 / g_ii`.
    pub inv: Vec<f64>,
}

/// A coordinate chart with a diagonal metric.
#[derive(Clone, Debug)]
pub struct Chart {
    name: String,
    kind: ChartKind,
    embedding: Embedding,
    intrinsic_dim: usize,
    ambient_dim: usize,
    domain: Vec<(f64, f64)>,
}

impl PartialEq for Chart {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.embedding == other.embedding
            && self.intrinsic_dim == other.intrinsic_dim
            && self.domain == other.domain
    }
}

/// Build one of the default charts by kind and intrinsic dimension.
///
/// * `Hypersphere` supports `dim ∈ {2, 3}`;
/// * `FlatBox` yields the unit box `(0, 1)^dim`;
/// * `PolarAnnulus` yields the annulus with radii `(1/2, 2)` (`dim` must be 2).
pub fn build_chart(kind: ChartKind, dim: usize) -> Result<Chart> {
    match kind {
        ChartKind::Hypersphere => Chart::hypersphere(dim),
        ChartKind::FlatBox => Chart::flat_box(vec![(0.0, 1.0); dim]),
        ChartKind::PolarAnnulus => {
            if dim != 2 {
                return Err(Error::UnsupportedChart(format!(
                    "polar annulus is 2-dimensional, got dim = {dim}"
                )));
            }
            Chart::polar_annulus(0.5, 2.0)
        }
    }
}

impl Chart {
    /// Unit sphere `S^m`. `m = 2` uses the azimuth-first angular chart on
    /// `(0, 2π) × (−π/2, π/2)`; `m = 3` uses latitudes-first coordinates on
    /// `(−π/2, π/2)^2 × (0, 2π)`. Other dimensions are rejected.
    pub fn hypersphere(m: usize) -> Result<Chart> {
        use std::f64::consts::{FRAC_PI_2, PI};
        match m {
            2 => Ok(Chart {
                name: "s2".into(),
                kind: ChartKind::Hypersphere,
                embedding: Embedding::SphereAzimuthFirst,
                intrinsic_dim: 2,
                ambient_dim: 3,
                domain: vec![(0.0, 2.0 * PI), (-FRAC_PI_2, FRAC_PI_2)],
            }),
            3 => Ok(Chart {
                name: "s3".into(),
                kind: ChartKind::Hypersphere,
                embedding: Embedding::SphereAzimuthLast,
                intrinsic_dim: 3,
                ambient_dim: 4,
                domain: vec![
                    (-FRAC_PI_2, FRAC_PI_2),
                    (-FRAC_PI_2, FRAC_PI_2),
                    (0.0, 2.0 * PI),
                ],
            }),
            _ => Err(Error::UnsupportedChart(format!(
                "hypersphere charts exist for m ∈ {{2, 3}}, got m = {m}"
            ))),
        }
    }

    /// The default `S^2` chart (azimuth first, latitude second).
    pub fn s2() -> Chart {
        Chart::hypersphere(2).expect("S^2 is always available")
    }

    /// The default `S^3` chart (two latitudes, then the azimuth).
    pub fn s3() -> Chart {
        Chart::hypersphere(3).expect("S^3 is always available")
    }

    /// `S^2` with the coordinate order swapped: latitude first, azimuth
    /// last, i.e. `(cos u1 cos u2, cos u1 sin u2, sin u1)`.
    ///
    /// The geodesic formulas treat the *last* coordinate as the cyclic one,
    /// so they run on this chart rather than on [`Chart::s2`]. The azimuth
    /// interval is a double cover `(−2π, 2π)`; the embedding is periodic,
    /// so widening the interval (see [`Chart::with_domain`]) only unrolls
    /// the seam and never changes the geometry.
    pub fn s2_azimuth_last() -> Chart {
        use std::f64::consts::{FRAC_PI_2, PI};
        Chart {
            name: "s2-azimuth-last".into(),
            kind: ChartKind::Hypersphere,
            embedding: Embedding::SphereAzimuthLast,
            intrinsic_dim: 2,
            ambient_dim: 3,
            domain: vec![(-FRAC_PI_2, FRAC_PI_2), (-2.0 * PI, 2.0 * PI)],
        }
    }

    /// A flat box with the identity embedding.
    pub fn flat_box(intervals: Vec<(f64, f64)>) -> Result<Chart> {
        if intervals.is_empty() {
            return Err(Error::UnsupportedChart("flat box needs m ≥ 1".into()));
        }
        for &(lo, hi) in &intervals {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "degenerate interval ({lo}, {hi})"
                )));
            }
        }
        let m = intervals.len();
        Ok(Chart {
            name: format!("flat-box-{m}d"),
            kind: ChartKind::FlatBox,
            embedding: Embedding::Identity,
            intrinsic_dim: m,
            ambient_dim: m,
            domain: intervals,
        })
    }

    /// Planar annulus `r ∈ (r_in, r_out)`, `θ ∈ (0, 2π)` in polar
    /// coordinates; flat (zero curvature) but with `g = diag(1, r²)`.
    pub fn polar_annulus(r_in: f64, r_out: f64) -> Result<Chart> {
        if !(r_in.is_finite() && r_out.is_finite() && 0.0 < r_in && r_in < r_out) {
            return Err(Error::InvalidArgument(format!(
                "annulus radii must satisfy 0 < r_in < r_out, got ({r_in}, {r_out})"
            )));
        }
        Ok(Chart {
            name: "polar-annulus".into(),
            kind: ChartKind::PolarAnnulus,
            embedding: Embedding::Polar,
            intrinsic_dim: 2,
            ambient_dim: 2,
            domain: vec![(r_in, r_out), (0.0, 2.0 * std::f64::consts::PI)],
        })
    }

    /// Replace the coordinate box, keeping the embedding.
    ///
    /// Angular latitude axes must stay inside `(−π/2, π/2)`; azimuth axes
    /// and flat-box axes accept any finite interval (the sphere embeddings
    /// are `2π`-periodic in the azimuth, so a wider interval is just a
    /// multiple cover); annulus radii must stay positive.
    pub fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Result<Chart> {
        use std::f64::consts::FRAC_PI_2;
        if domain.len() != self.intrinsic_dim {
            return Err(Error::InvalidArgument(format!(
                "domain has {} intervals, chart needs {}",
                domain.len(),
                self.intrinsic_dim
            )));
        }
        for (axis, &(lo, hi)) in domain.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "degenerate interval ({lo}, {hi}) on axis {axis}"
                )));
            }
            let latitude = match self.embedding {
                Embedding::SphereAzimuthFirst => axis == 1,
                Embedding::SphereAzimuthLast => axis + 1 < self.intrinsic_dim,
                _ => false,
            };
            if latitude && !(-FRAC_PI_2 <= lo && hi <= FRAC_PI_2) {
                return Err(Error::InvalidArgument(format!(
                    "latitude axis {axis} must stay within (−π/2, π/2)"
                )));
            }
            if self.embedding == Embedding::Polar && axis == 0 && lo <= 0.0 {
                return Err(Error::InvalidArgument(
                    "annulus radius must stay positive".into(),
                ));
            }
        }
        self.domain = domain;
        Ok(self)
    }

    /// Chart name (diagnostic only).
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    /// Intrinsic dimension `m`.
    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    /// Ambient dimension `n`.
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// The open coordinate box, one `(lo, hi)` pair per axis.
    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    /// The index of the cyclic coordinate — the one the metric does not
    /// depend on — if the chart has exactly one: the azimuth on spheres
    /// (first or last depending on the coordinate order) and the angle on
    /// the annulus. Flat boxes are translation-invariant in every
    /// direction, so no single axis is singled out and this returns `None`.
    pub fn cyclic_axis(&self) -> Option<usize> {
        match self.embedding {
            Embedding::SphereAzimuthFirst => Some(0),
            Embedding::SphereAzimuthLast => Some(self.intrinsic_dim - 1),
            Embedding::Polar => Some(1),
            Embedding::Identity => None,
        }
    }

    /// Whether `u` lies strictly inside the domain with the given margin.
    pub fn is_interior(&self, u: &[f64], margin: f64) -> bool {
        u.len() == self.intrinsic_dim
            && u.iter()
                .zip(&self.domain)
                .all(|(&x, &(lo, hi))| x - lo >= margin && hi - x >= margin)
    }

    /// Error unless `u` is strictly inside the domain.
    pub fn check_interior(&self, u: &[f64]) -> Result<()> {
        if self.is_interior(u, INTERIOR_MARGIN) {
            Ok(())
        } else {
            Err(Error::OutsideDomain {
                chart: self.name.clone(),
                point: u.to_vec(),
            })
        }
    }

    /// Evaluate the embedding `Φ(u)`.
    ///
    /// The formula itself is defined on all of `R^m`; domain checks are the
    /// caller's business (finite-difference stencils may poke slightly
    /// outside the open box).
    pub fn embed(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.intrinsic_dim);
        match self.embedding {
            Embedding::SphereAzimuthFirst => {
                let (az, lat) = (u[0], u[1]);
                vec![
                    az.cos() * lat.cos(),
                    az.sin() * lat.cos(),
                    lat.sin(),
                ]
            }
            Embedding::SphereAzimuthLast => {
                // x_0 = ∏ cos u_j, x_i = (∏_{j < m−i} cos u_j) sin u_{m−i},
                // x_n−1 = sin u_0; latitudes nest from the outside in.
                let m = self.intrinsic_dim;
                let mut x = vec![0.0; m + 1];
                let mut prefix = vec![1.0; m + 1]; // prefix[k] = ∏_{j<k} cos u_j
                for j in 0..m {
                    prefix[j + 1] = prefix[j] * u[j].cos();
                }
                x[0] = prefix[m];
                for i in 1..=m {
                    x[i] = prefix[m - i] * u[m - i].sin();
                }
                x
            }
            Embedding::Identity => u.to_vec(),
            Embedding::Polar => {
                let (r, th) = (u[0], u[1]);
                vec![r * th.cos(), r * th.sin()]
            }
        }
    }

    /// Columns `∂Φ/∂u_i` by central differences (step `h`), as an `n × m`
    /// matrix stored row-major (`jac[row][col]`).
    pub fn embedding_jacobian(&self, u: &[f64], h: f64) -> Vec<Vec<f64>> {
        let (m, n) = (self.intrinsic_dim, self.ambient_dim);
        let mut jac = vec![vec![0.0; m]; n];
        let mut up = u.to_vec();
        let mut dn = u.to_vec();
        for i in 0..m {
            up[i] += h;
            dn[i] -= h;
            let xp = self.embed(&up);
            let xm = self.embed(&dn);
            for r in 0..n {
                jac[r][i] = (xp[r] - xm[r]) / (2.0 * h);
            }
            up[i] = u[i];
            dn[i] = u[i];
        }
        jac
    }

    /// Diagonal metric entries from the analytic formulas, without any
    /// domain check. Crate-internal: FD stencils rely on this being total.
    pub(crate) fn metric_diag_raw(&self, u: &[f64]) -> Vec<f64> {
        match self.embedding {
            Embedding::SphereAzimuthFirst => {
                let c = u[1].cos();
                vec![c * c, 1.0]
            }
            Embedding::SphereAzimuthLast => {
                let m = self.intrinsic_dim;
                let mut g = vec![1.0; m];
                let mut acc = 1.0;
                for i in 1..m {
                    let c = u[i - 1].cos();
                    acc *= c * c;
                    g[i] = acc;
                }
                g
            }
            Embedding::Identity => vec![1.0; self.intrinsic_dim],
            Embedding::Polar => vec![1.0, u[0] * u[0]],
        }
    }

    /// Diagonal metric at an interior point, from the analytic formulas.
    pub fn metric_at(&self, u: &[f64]) -> Result<MetricData> {
        self.check_interior(u)?;
        Ok(Self::package_metric(self.metric_diag_raw(u)))
    }

    /// Diagonal metric recomputed as `g_ii = ⟨Φ_{u_i}, Φ_{u_i}⟩` with a
    /// finite-difference Jacobian. Cross-check path for [`Chart::metric_at`].
    pub fn metric_fd_at(&self, u: &[f64]) -> Result<MetricData> {
        self.check_interior(u)?;
        let jac = self.embedding_jacobian(u, METRIC_FD_STEP);
        let m = self.intrinsic_dim;
        let mut g = vec![0.0; m];
        for i in 0..m {
            g[i] = (0..self.ambient_dim).map(|r| jac[r][i] * jac[r][i]).sum();
        }
        Ok(Self::package_metric(g))
    }

    fn package_metric(g: Vec<f64>) -> MetricData {
        let det: f64 = g.iter().product();
        let inv = g.iter().map(|&x| 1.0 / x).collect();
        MetricData {
            sqrt_det: det.sqrt(),
            inv,
            g,
        }
    }

    /// Constant scalar curvature, where defined.
    ///
    /// Unit `S^m` has `R = m(m−1)`; flat boxes and the annulus have no
    /// curvature field exposed here and return an error.
    pub fn scalar_curvature(&self) -> Result<f64> {
        match self.kind {
            ChartKind::Hypersphere => {
                let m = self.intrinsic_dim as f64;
                Ok(m * (m - 1.0))
            }
            _ => Err(Error::CurvatureUndefined {
                chart: self.name.clone(),
            }),
        }
    }

    /// Christoffel symbols `Γ^k_{ij}` at an interior point,
    /// `christoffel(u)[k][i][j]`.
    ///
    /// For a diagonal metric
    /// `Γ^k_{ij} = (1 / 2 g_kk) (δ_jk ∂_i g_jj + δ_ik ∂_j g_ii − δ_ij ∂_k g_ii)`,
    /// with the metric derivatives taken by central differences (step
    /// [`CHRISTOFFEL_FD_STEP`], shrunk near the boundary so the stencil
    /// stays interior).
    pub fn christoffel(&self, u: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
        self.check_interior(u)?;
        let m = self.intrinsic_dim;
        let g = self.metric_diag_raw(u);

        // d[a][b] = ∂ g_bb / ∂ u_a
        let mut d = vec![vec![0.0; m]; m];
        let mut shifted = u.to_vec();
        for a in 0..m {
            let (lo, hi) = self.domain[a];
            let h = CHRISTOFFEL_FD_STEP
                .min((u[a] - lo) / 2.0)
                .min((hi - u[a]) / 2.0);
            if h < 1e-10 {
                return Err(Error::OutsideDomain {
                    chart: self.name.clone(),
                    point: u.to_vec(),
                });
            }
            shifted[a] = u[a] + h;
            let gp = self.metric_diag_raw(&shifted);
            shifted[a] = u[a] - h;
            let gm = self.metric_diag_raw(&shifted);
            shifted[a] = u[a];
            for b in 0..m {
                d[a][b] = (gp[b] - gm[b]) / (2.0 * h);
            }
        }

        let mut gamma = vec![vec![vec![0.0; m]; m]; m];
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    let mut s = 0.0;
                    if j == k {
                        s += d[i][j];
                    }
                    if i == k {
                        s += d[j][i];
                    }
                    if i == j {
                        s -= d[k][i];
                    }
                    gamma[k][i][j] = 0.5 * s / g[k];
                }
            }
        }
        Ok(gamma)
    }

    /// The `2m` boundary faces of a flat box. Charts whose boundary is a
    /// coordinate singularity or a seam (spheres, annulus) expose none and
    /// return an error.
    pub fn boundary_faces(&self) -> Result<Vec<Face>> {
        if self.kind != ChartKind::FlatBox {
            return Err(Error::UnsupportedChart(format!(
                "chart '{}' has no flat boundary faces",
                self.name
            )));
        }
        let mut faces = Vec::with_capacity(2 * self.intrinsic_dim);
        for axis in 0..self.intrinsic_dim {
            faces.push(Face { axis, upper: false });
            faces.push(Face { axis, upper: true });
        }
        Ok(faces)
    }

    /// Integrate `f` over the chart surface: `Σ_i w_i f(u_i) √|g|(u_i)`.
    pub fn surface_integral(
        &self,
        grid: &QuadratureGrid,
        mut f: impl FnMut(&[f64]) -> f64,
    ) -> Result<f64> {
        if grid.chart() != self {
            return Err(Error::ChartMismatch {
                expected: self.name.clone(),
                got: grid.chart().name.clone(),
            });
        }
        let mut acc = 0.0;
        for (node, &w) in grid.nodes.iter().zip(&grid.weights) {
            let val = f(node);
            if !val.is_finite() {
                return Err(Error::NonFinite {
                    context: "surface integrand".into(),
                    at: node.clone(),
                });
            }
            acc += w * val * self.metric_at(node)?.sqrt_det;
        }
        Ok(acc)
    }
}

/// One face of a flat box: an axis together with the side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Face {
    /// Axis whose coordinate is pinned on this face.
    pub axis: usize,
    /// `true` for the upper end of the interval, `false` for the lower.
    pub upper: bool,
}

impl Face {
    /// Outward unit normal in chart coordinates (flat boxes only, where
    /// chart and ambient frames agree).
    pub fn outward_normal(&self, m: usize) -> Vec<f64> {
        let mut n = vec![0.0; m];
        n[self.axis] = if self.upper { 1.0 } else { -1.0 };
        n
    }

    /// The pinned coordinate value on the given chart.
    pub fn coordinate(&self, chart: &Chart) -> f64 {
        let (lo, hi) = chart.domain()[self.axis];
        if self.upper {
            hi
        } else {
            lo
        }
    }

    /// Lift `(m−1)` in-face coordinates `s` (remaining axes, in order) to a
    /// full chart point on the face.
    pub fn lift(&self, chart: &Chart, s: &[f64]) -> Result<Vec<f64>> {
        let m = chart.intrinsic_dim();
        if s.len() + 1 != m {
            return Err(Error::InvalidArgument(format!(
                "face point needs {} coordinates, got {}",
                m - 1,
                s.len()
            )));
        }
        let mut u = Vec::with_capacity(m);
        let mut si = s.iter();
        for axis in 0..m {
            if axis == self.axis {
                u.push(self.coordinate(chart));
            } else {
                u.push(*si.next().expect("length checked"));
            }
        }
        Ok(u)
    }
}

/// Tensor-product Gauss–Legendre quadrature over a chart's coordinate box.
///
/// `weights` carry only the coordinate-box measure; the metric factor
/// `√|g|` is applied by [`Chart::surface_integral`], never baked into the
/// weights.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    chart: Chart,
    /// Quadrature nodes in lexicographic tensor order.
    pub nodes: Vec<Vec<f64>>,
    /// Positive weights summing to the box volume.
    pub weights: Vec<f64>,
    /// Per-axis Gauss–Legendre order.
    pub order: usize,
}

impl QuadratureGrid {
    /// Build an `order^m`-node grid over the chart's box.
    pub fn gauss_legendre(chart: &Chart, order: usize) -> Result<QuadratureGrid> {
        if order == 0 || order > 256 {
            return Err(Error::InvalidArgument(format!(
                "quadrature order must be in 1..=256, got {order}"
            )));
        }
        let m = chart.intrinsic_dim();
        let mut axis_nodes = Vec::with_capacity(m);
        let mut axis_weights = Vec::with_capacity(m);
        for &(lo, hi) in chart.domain() {
            let (x, w) = gauss_legendre_scaled(order, lo, hi);
            axis_nodes.push(x);
            axis_weights.push(w);
        }
        let total = order.pow(m as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; m];
        'outer: loop {
            let node: Vec<f64> = (0..m).map(|a| axis_nodes[a][idx[a]]).collect();
            let weight: f64 = (0..m).map(|a| axis_weights[a][idx[a]]).product();
            nodes.push(node);
            weights.push(weight);
            // advance the multi-index lexicographically (last axis fastest)
            for a in (0..m).rev() {
                idx[a] += 1;
                if idx[a] < order {
                    continue 'outer;
                }
                idx[a] = 0;
            }
            break;
        }
        Ok(QuadratureGrid {
            chart: chart.clone(),
            nodes,
            weights,
            order,
        })
    }

    /// Gauss–Legendre grid over one boundary face of a flat box. Nodes are
    /// full `m`-dimensional points lying on the face; weights carry the
    /// `(m−1)`-dimensional face measure.
    pub fn gauss_legendre_face(
        chart: &Chart,
        face: Face,
        order: usize,
    ) -> Result<QuadratureGrid> {
        if chart.kind() != ChartKind::FlatBox {
            return Err(Error::UnsupportedChart(format!(
                "face quadrature needs a flat box, got '{}'",
                chart.name()
            )));
        }
        let m = chart.intrinsic_dim();
        if face.axis >= m {
            return Err(Error::InvalidArgument(format!(
                "face axis {} out of range for m = {m}",
                face.axis
            )));
        }
        let sub_axes: Vec<usize> = (0..m).filter(|&a| a != face.axis).collect();
        let mut axis_nodes = Vec::new();
        let mut axis_weights = Vec::new();
        for &a in &sub_axes {
            let (lo, hi) = chart.domain()[a];
            let (x, w) = gauss_legendre_scaled(order, lo, hi);
            axis_nodes.push(x);
            axis_weights.push(w);
        }
        let d = sub_axes.len();
        let total = order.pow(d as u32).max(1);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; d];
        loop {
            let s: Vec<f64> = (0..d).map(|a| axis_nodes[a][idx[a]]).collect();
            let w: f64 = (0..d).map(|a| axis_weights[a][idx[a]]).product();
            nodes.push(face.lift(chart, &s)?);
            weights.push(w);
            if d == 0 {
                break;
            }
            let mut done = true;
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < order {
                    done = false;
                    break;
                }
                idx[a] = 0;
            }
            if done {
                break;
            }
        }
        Ok(QuadratureGrid {
            chart: chart.clone(),
            nodes,
            weights,
            order,
        })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`, by Newton iteration on
/// the Legendre polynomial `P_n` (Chebyshev initial guesses).
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        // i-th root counted from x = +1 downwards
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // evaluate P_n and P'_n by the three-term recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n−1}(x)
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // ascending node order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("GL nodes are finite"));
    let xs_sorted = order.iter().map(|&i| xs[i]).collect();
    let ws_sorted = order.iter().map(|&i| ws[i]).collect();
    (xs_sorted, ws_sorted)
}

/// Gauss–Legendre nodes and weights scaled to `(lo, hi)`.
fn gauss_legendre_scaled(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre_unit(n);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    (
        xs.iter().map(|&x| mid + half * x).collect(),
        ws.iter().map(|&w| w * half).collect(),
    )
}
