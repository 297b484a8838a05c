//! The six subcommands. Every command resolves its configuration, runs the
//! numerics, and emits one deterministic table (CSV or JSON).

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use serde_json::json;

use varcalc::battery;
use varcalc::fields::ScalarField;
use varcalc::functionals::{BoundaryIntegrand, EnergyFunctional};
use varcalc::geodesics::{
    chord_arclength_relabel, curve_length, eq1_residual, eq3prime_residual, geodesic_defect,
    geodesic_shoot, planarity_defect, s2_azimuth_at, s2_geodesic_closed_form, s3_angles_at,
    s3_geodesic_chart, s3_geodesic_closed_form, Branch, CurveSamples, GeodesicParams, ParamKind,
};
use varcalc::geometry::{Chart, ChartKind, QuadratureGrid};
use varcalc::reduced_odes::{find_parallel_crossing, perelman_s2_profile, SolveStatus};
use varcalc::variations::{
    classify_critical_point, default_probes, el_residual, neumann_residual, DEFAULT_PROBE_COUNT,
};
use varcalc::Error;

use crate::config::{resolve, CliError, CliResult, CommandKind, CommonArgs, FieldSpec, RunConfig};
use crate::output::{emit, render, Cell, Table};

// ---------------------------------------------------------------------------
// shared resolution helpers

fn resolve_chart(name: &str) -> CliResult<Chart> {
    match name {
        "s2" => Ok(Chart::s2()),
        "s3" => Ok(Chart::s3()),
        "polar-annulus" => Ok(Chart::polar_annulus(0.5, 2.0)?),
        "flat-box" => Ok(Chart::flat_box(vec![(0.0, 1.0), (0.0, 1.0)])?),
        other => Err(CliError::Config(format!("unknown chart '{other}'"))),
    }
}

fn resolve_functional(chart: &Chart, name: &str, boundary: Option<&str>) -> CliResult<EnergyFunctional> {
    let e = match name {
        "dirichlet" => EnergyFunctional::dirichlet(chart.clone()),
        "perelman" => EnergyFunctional::perelman(chart.clone())?,
        other => return Err(CliError::Config(format!("unknown functional '{other}'"))),
    };
    match boundary {
        None | Some("none") => Ok(e),
        Some("flux-2v") => Ok(e.with_boundary(BoundaryIntegrand {
            g: Arc::new(|_x: &[f64], v: f64| 2.0 * v),
            g_v: Arc::new(|_x: &[f64], _v: f64| 2.0),
        })?),
        Some(other) => Err(CliError::Config(format!("unknown boundary '{other}'"))),
    }
}

type Partial = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

fn named_field(chart: &Chart, name: &str) -> CliResult<ScalarField> {
    let wrong_chart = |need: &str| {
        CliError::Config(format!("field '{name}' needs the {need} chart, got '{}'", chart.name()))
    };
    match name {
        "zero" => Ok(ScalarField::constant(chart.clone(), 0.0)),
        "one" => Ok(ScalarField::constant(chart.clone(), 1.0)),
        "ln-r" => {
            if chart.kind() != ChartKind::PolarAnnulus {
                return Err(wrong_chart("polar-annulus"));
            }
            Ok(ScalarField::with_partials(
                chart.clone(),
                |u: &[f64]| u[0].ln(),
                vec![
                    Arc::new(|u: &[f64]| 1.0 / u[0]) as Partial,
                    Arc::new(|_u: &[f64]| 0.0) as Partial,
                ],
            )?)
        }
        "steep-parallel" => {
            if chart.kind() != ChartKind::Hypersphere || chart.intrinsic_dim() != 2 {
                return Err(wrong_chart("s2"));
            }
            Ok(ScalarField::with_partials(
                chart.clone(),
                |u: &[f64]| 2.0 * u[1],
                vec![
                    Arc::new(|_u: &[f64]| 0.0) as Partial,
                    Arc::new(|_u: &[f64]| 2.0) as Partial,
                ],
            )?)
        }
        "coordinate-0" => {
            let mut partials: Vec<Partial> = vec![Arc::new(|_u: &[f64]| 1.0)];
            for _ in 1..chart.intrinsic_dim() {
                partials.push(Arc::new(|_u: &[f64]| 0.0));
            }
            Ok(ScalarField::with_partials(chart.clone(), |u: &[f64]| u[0], partials)?)
        }
        other => Err(CliError::Config(format!("unknown field '{other}'"))),
    }
}

fn resolve_field(chart: &Chart, spec: &FieldSpec, fd_step: Option<f64>) -> CliResult<ScalarField> {
    let field = match spec {
        FieldSpec::Named(name) => named_field(chart, name)?,
        // Coefficient lists address the chart's smooth probe basis; a wrong
        // count or a non-finite entry is a configuration mistake.
        FieldSpec::Coefficients(c) => battery::probe_basis_field(chart, c)
            .map_err(|e| CliError::Config(e.to_string()))?,
    };
    Ok(match fd_step {
        Some(h) => field.with_fd_step(h),
        None => field,
    })
}

fn field_label(spec: &FieldSpec, index: usize) -> String {
    match spec {
        FieldSpec::Named(name) => name.clone(),
        FieldSpec::Coefficients(_) => format!("coeffs-{index}"),
    }
}

fn seed_from_env() -> CliResult<u64> {
    match std::env::var("VARCALC_SEED") {
        Ok(text) => text.trim().parse::<u64>().map_err(|_| {
            CliError::Config(format!("VARCALC_SEED must be a non-negative integer, got '{text}'"))
        }),
        Err(_) => Ok(0),
    }
}

fn finish(cfg: &RunConfig, table: &Table) -> CliResult<()> {
    let format = cfg.format.as_deref().unwrap_or("csv");
    emit(&render(table, format), cfg.out.as_deref())
}

// ---------------------------------------------------------------------------
// energy

pub fn energy(args: &CommonArgs) -> CliResult<()> {
    let cfg = resolve(CommandKind::Energy, args)?;
    let chart = resolve_chart(cfg.chart.as_deref().unwrap_or("s2"))?;
    let e = resolve_functional(
        &chart,
        cfg.functional.as_deref().unwrap_or("perelman"),
        cfg.boundary.as_deref(),
    )?;
    let order = cfg.grid_order.unwrap_or(32);
    let grid = QuadratureGrid::gauss_legendre(&chart, order)?;

    let table = if cfg.k_min.is_some() || cfg.k_max.is_some() {
        // Constant-field scan: one row per integer level k.
        let k0 = cfg.k_min.or(cfg.k_max).unwrap();
        let k1 = cfg.k_max.or(cfg.k_min).unwrap();
        let mut table = Table::new(&["k", "energy"]);
        for k in k0..=k1 {
            let v = ScalarField::constant(chart.clone(), k as f64);
            table.push_row(vec![Cell::Int(k), Cell::Num(e.eval(&v, &grid)?)]);
        }
        table
    } else {
        let specs: Vec<FieldSpec> = match (&cfg.fields, &cfg.field) {
            (Some(list), _) => list.clone(),
            (None, Some(one)) => vec![one.clone()],
            (None, None) => vec![FieldSpec::Named("zero".into())],
        };
        let mut table = Table::new(&["field", "energy"]);
        for (i, spec) in specs.iter().enumerate() {
            let v = resolve_field(&chart, spec, cfg.fd_step)?;
            table.push_row(vec![
                Cell::Text(field_label(spec, i)),
                Cell::Num(e.eval(&v, &grid)?),
            ]);
        }
        table
    };
    finish(&cfg, &table)
}

// ---------------------------------------------------------------------------
// residual

pub fn residual(args: &CommonArgs) -> CliResult<()> {
    let cfg = resolve(CommandKind::Residual, args)?;
    let chart = resolve_chart(cfg.chart.as_deref().unwrap_or("polar-annulus"))?;
    let boundary = cfg.boundary.as_deref().filter(|b| *b != "none");
    let e = resolve_functional(&chart, cfg.functional.as_deref().unwrap_or("dirichlet"), boundary)?;
    let spec = cfg
        .field
        .clone()
        .unwrap_or_else(|| FieldSpec::Named("ln-r".into()));
    let v = resolve_field(&chart, &spec, cfg.fd_step)?;
    let order = cfg.grid_order.unwrap_or(12);
    let m = chart.intrinsic_dim();

    let mut sup = 0.0_f64;
    let table = if boundary.is_some() {
        // Natural-boundary (Neumann) residuals, sampled along each face.
        if chart.kind() != ChartKind::FlatBox {
            return Err(CliError::Config(format!(
                "natural boundary residuals need the flat-box chart, got '{}'",
                chart.name()
            )));
        }
        let mut table = Table::new(&["face", "s0", "residual"]);
        for face in chart.boundary_faces()? {
            let axis = (0..m).find(|&a| a != face.axis).expect("2-D box");
            let (lo, hi) = chart.domain()[axis];
            let label = format!(
                "u{}-{}",
                face.axis,
                if face.upper { "upper" } else { "lower" }
            );
            for j in 0..order {
                let s = lo + (hi - lo) * (j + 1) as f64 / (order + 1) as f64;
                let r = neumann_residual(&e, &v, face, &[s])?;
                sup = sup.max(r.abs());
                table.push_row(vec![
                    Cell::Text(label.clone()),
                    Cell::Num(s),
                    Cell::Num(r),
                ]);
            }
        }
        table
    } else {
        // Interior Euler–Lagrange residuals over a uniform interior lattice.
        let mut columns: Vec<String> = (0..m).map(|i| format!("u{i}")).collect();
        columns.push("residual".into());
        let column_refs: Vec<&str> = columns.iter().map(|c| c.as_str()).collect();
        let mut table = Table::new(&column_refs);
        let axes: Vec<Vec<f64>> = chart
            .domain()
            .iter()
            .map(|&(lo, hi)| {
                (0..order)
                    .map(|j| lo + (hi - lo) * (j + 1) as f64 / (order + 1) as f64)
                    .collect()
            })
            .collect();
        let mut index = vec![0usize; m];
        loop {
            let u: Vec<f64> = (0..m).map(|i| axes[i][index[i]]).collect();
            let r = el_residual(&e, &v, &u)?;
            sup = sup.max(r.abs());
            let mut row: Vec<Cell> = u.iter().map(|&x| Cell::Num(x)).collect();
            row.push(Cell::Num(r));
            table.push_row(row);
            // Advance the mixed-radix lattice index, last axis fastest.
            let mut carry = m;
            while carry > 0 {
                index[carry - 1] += 1;
                if index[carry - 1] < order {
                    break;
                }
                index[carry - 1] = 0;
                carry -= 1;
            }
            if carry == 0 {
                break;
            }
        }
        table
    };
    let mut table = table;
    table.push_footer("sup_norm", Cell::Num(sup));
    finish(&cfg, &table)
}

// ---------------------------------------------------------------------------
// perelman-profile

pub fn perelman_profile(args: &CommonArgs) -> CliResult<()> {
    let cfg = resolve(CommandKind::PerelmanProfile, args)?;
    let epsilon = cfg.epsilon.unwrap_or(1e-6);
    let tol = cfg.tol.unwrap_or(1e-10);
    let sol = perelman_s2_profile(epsilon, tol)?;

    let mut table = Table::new(&["u2", "w", "f"]);
    for (t, y) in sol.ts.iter().zip(&sol.ys) {
        table.push_row(vec![Cell::Num(*t), Cell::Num(y[0]), Cell::Num(y[1])]);
    }
    let blow_up_t = match sol.status {
        SolveStatus::BlewUp(t) => t,
        _ => f64::NAN,
    };
    table.push_footer("blow_up_t", Cell::Num(blow_up_t));
    let crossing = match find_parallel_crossing(&sol, std::f64::consts::SQRT_2) {
        Ok(t) => t,
        Err(Error::LevelNotAttained { .. }) => f64::NAN,
        Err(e) => return Err(e.into()),
    };
    table.push_footer("u2_star_sqrt2", Cell::Num(crossing));
    finish(&cfg, &table)
}

// ---------------------------------------------------------------------------
// classify

pub fn classify(args: &CommonArgs) -> CliResult<()> {
    let cfg = resolve(CommandKind::Classify, args)?;
    let chart = resolve_chart(cfg.chart.as_deref().unwrap_or("s2"))?;
    let e = resolve_functional(
        &chart,
        cfg.functional.as_deref().unwrap_or("perelman"),
        cfg.boundary.as_deref(),
    )?;
    let spec = cfg
        .field
        .clone()
        .unwrap_or_else(|| FieldSpec::Named("zero".into()));
    let v = resolve_field(&chart, &spec, cfg.fd_step)?;
    let order = cfg.grid_order.unwrap_or(24);
    let grid = QuadratureGrid::gauss_legendre(&chart, order)?;
    let count = cfg.probe_count.unwrap_or(DEFAULT_PROBE_COUNT);
    let probes = match cfg.probes.as_deref().unwrap_or("default") {
        "random" => battery::seeded_probe_fields(&chart, seed_from_env()?, count, 1.0)?,
        _ => default_probes(&chart, count),
    };

    let report = classify_critical_point(&e, &v, &grid, &probes)?;
    let doc = json!({
        "command": "classify",
        "chart": chart.name(),
        "grid_order": order,
        "probe_count": count,
        "verdict": report.verdict,
        "sup_grad_sq": report.sup_grad_sq,
        "has_witness": report.witness.is_some(),
        "witness_value": report.witness_value,
        "probe_values": report.probe_values,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    emit(&text, cfg.out.as_deref())
}

// ---------------------------------------------------------------------------
// geodesic

fn curve_table(curve: &CurveSamples) -> Table {
    let m = curve.chart_pts[0].len();
    let n = curve.ambient_pts[0].len();
    let mut columns: Vec<String> = vec!["t".into()];
    columns.extend((1..=m).map(|i| format!("u{i}")));
    columns.extend((1..=n).map(|i| format!("x{i}")));
    let column_refs: Vec<&str> = columns.iter().map(|c| c.as_str()).collect();
    let mut table = Table::new(&column_refs);
    for i in 0..curve.len() {
        let mut row = vec![Cell::Num(curve.ts[i])];
        row.extend(curve.chart_pts[i].iter().map(|&x| Cell::Num(x)));
        row.extend(curve.ambient_pts[i].iter().map(|&x| Cell::Num(x)));
        table.push_row(row);
    }
    table
}

/// Interior fraction of the latitude band kept when measuring the geodesic
/// defect of a latitude-graph curve: the second-difference stencil is
/// unreliable in the stretched segments next to the turning points.
const DEFECT_BAND_FRACTION: f64 = 0.8;

fn push_curve_footers(table: &mut Table, chart: &Chart, curve: &CurveSamples) -> CliResult<()> {
    let kind = match curve.param_kind {
        ParamKind::U1 => "u1",
        ParamKind::Arclength => "arclength",
    };
    table.push_footer("param_kind", Cell::Text(kind.into()));
    let (length, defect) = match curve.param_kind {
        ParamKind::Arclength => (
            curve_length(chart, curve)?,
            geodesic_defect(chart, curve)?,
        ),
        ParamKind::U1 => {
            // Latitude-graph speeds diverge at the turning points, so the
            // speed trapezoid is unusable; relabel by ambient chords (the
            // length of the sampled sub-arc) and measure the defect on the
            // interior of the band.
            let relab = chord_arclength_relabel(chart, curve)?;
            let t_max = relab
                .chart_pts
                .iter()
                .map(|u| u[0].abs())
                .fold(0.0, f64::max);
            let keep: Vec<usize> = (0..relab.len())
                .filter(|&i| relab.chart_pts[i][0].abs() <= DEFECT_BAND_FRACTION * t_max)
                .collect();
            let defect = if keep.len() >= 3 {
                let band = CurveSamples::new(
                    chart,
                    keep.iter().map(|&i| relab.ts[i]).collect(),
                    keep.iter().map(|&i| relab.chart_pts[i].clone()).collect(),
                    keep.iter()
                        .map(|&i| relab.chart_velocities[i].clone())
                        .collect(),
                    ParamKind::Arclength,
                )?;
                geodesic_defect(chart, &band)?
            } else {
                geodesic_defect(chart, &relab)?
            };
            (curve_length(chart, &relab)?, defect)
        }
    };
    table.push_footer("length", Cell::Num(length));
    table.push_footer("planarity", Cell::Num(planarity_defect(&curve.ambient_pts)?));
    table.push_footer("defect", Cell::Num(defect));
    Ok(())
}

pub fn geodesic(args: &CommonArgs) -> CliResult<()> {
    let cfg = resolve(CommandKind::Geodesic, args)?;
    let chart_name = cfg.chart.as_deref().unwrap_or("s3");
    let gamma = cfg.gamma.unwrap_or(FRAC_1_SQRT_2);
    let phase = cfg.phase.unwrap_or(0.0);
    let branch = match cfg.branch.as_deref().unwrap_or("principal") {
        "extended" => Branch::Extended,
        _ => Branch::Principal,
    };
    let mode = cfg
        .mode
        .as_deref()
        .unwrap_or("closed_form")
        .replace('-', "_");
    let samples = cfg.samples.unwrap_or(400).max(2);
    let tol = cfg.tol.unwrap_or(1e-12);
    let length = cfg.length.unwrap_or(1.0);

    let (chart, params, closed) = match chart_name {
        "s2" => {
            let params = GeodesicParams::s2(gamma, phase, branch)?;
            let closed = s2_geodesic_closed_form(&params, samples)?;
            (Chart::s2_azimuth_last(), params, closed)
        }
        _ => {
            let params = GeodesicParams::s3(gamma, phase, branch)?;
            let closed = s3_geodesic_closed_form(&params, samples)?;
            (s3_geodesic_chart(), params, closed)
        }
    };

    let mut table;
    match mode.as_str() {
        "closed_form" => {
            table = curve_table(&closed);
            push_curve_footers(&mut table, &chart, &closed)?;
            // On S³ a proper latitude graph satisfies two independent
            // reduced equations; report their residuals over the band.
            if chart_name == "s3" && gamma.abs() > 0.0 && gamma.abs() < 1.0 {
                let t_star = params.turning_latitude();
                let mut eq1_max = 0.0_f64;
                let mut eq3_max = 0.0_f64;
                for i in 0..100 {
                    let t = -0.95 * t_star + 1.9 * t_star * i as f64 / 99.0;
                    let c = t.cos();
                    let u2_dot = gamma / (c * (c * c - gamma * gamma).sqrt());
                    eq1_max = eq1_max.max(eq1_residual(&params, t, u2_dot)?.abs());
                    eq3_max = eq3_max.max(eq3prime_residual(&params, t)?.abs());
                }
                table.push_footer("eq1_max", Cell::Num(eq1_max));
                table.push_footer("eq3prime_max", Cell::Num(eq3_max));
            }
        }
        shoot_or_compare => {
            // Shoot from the closed-form midpoint sample; the integrator
            // normalizes the velocity, so latitude-graph rates work as-is.
            let mid = closed.len() / 2;
            let shot = geodesic_shoot(
                &chart,
                &closed.chart_pts[mid],
                &closed.chart_velocities[mid],
                length,
                tol,
            )?;
            table = curve_table(&shot.samples);
            push_curve_footers(&mut table, &chart, &shot.samples)?;
            table.push_footer("exited", Cell::Int(shot.exited as i64));
            if shoot_or_compare == "compare" {
                let mut sup = 0.0_f64;
                for u in &shot.samples.chart_pts {
                    let dev = if chart_name == "s2" {
                        (u[1] - s2_azimuth_at(&params, u[0])?).abs()
                    } else {
                        let (a2, a3) = s3_angles_at(&params, u[0])?;
                        (u[1] - a2).abs().max((u[2] - a3).abs())
                    };
                    sup = sup.max(dev);
                }
                table.push_footer("sup_deviation", Cell::Num(sup));
            }
        }
    }
    finish(&cfg, &table)
}

// ---------------------------------------------------------------------------
// verify-all

/// Exercise the installed binary itself: determinism of a preset run and the
/// exit-code contract (2 for config mistakes, 1 for runtime failures).
fn cli_contract_check() -> battery::CheckResult {
    let started = std::time::Instant::now();
    let mut detail = String::new();
    let passed = (|| -> Result<bool, String> {
        let exe = std::env::current_exe().map_err(|e| e.to_string())?;
        let dir = std::env::temp_dir().join(format!("varcalc-verify-{}", std::process::id()));
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let result = (|| {
            let out_a = dir.join("kscan-a.csv");
            let out_b = dir.join("kscan-b.csv");
            for out in [&out_a, &out_b] {
                let status = std::process::Command::new(&exe)
                    .args(["energy", "--preset", "perelman-kscan", "--out"])
                    .arg(out)
                    .status()
                    .map_err(|e| e.to_string())?;
                if status.code() != Some(0) {
                    detail.push_str(&format!("preset run exited {:?}; ", status.code()));
                    return Ok(false);
                }
            }
            let bytes_a = std::fs::read(&out_a).map_err(|e| e.to_string())?;
            let bytes_b = std::fs::read(&out_b).map_err(|e| e.to_string())?;
            let identical = bytes_a == bytes_b;

            let bad_schema = dir.join("bad-schema.json");
            std::fs::write(&bad_schema, b"{\"command\": \"energy\", \"bogus_key\": 1}\n")
                .map_err(|e| e.to_string())?;
            let schema_code = std::process::Command::new(&exe)
                .args(["energy", "--config"])
                .arg(&bad_schema)
                .output()
                .map_err(|e| e.to_string())?
                .status
                .code();

            let runtime_cfg = dir.join("classify-dirichlet.json");
            std::fs::write(
                &runtime_cfg,
                b"{\"command\": \"classify\", \"functional\": \"dirichlet\", \"grid_order\": 8, \"probe_count\": 3}\n",
            )
            .map_err(|e| e.to_string())?;
            let runtime_code = std::process::Command::new(&exe)
                .args(["classify", "--config"])
                .arg(&runtime_cfg)
                .output()
                .map_err(|e| e.to_string())?
                .status
                .code();

            detail.push_str(&format!(
                "reruns_identical={identical}; bad_schema_exit={schema_code:?}; \
                 runtime_failure_exit={runtime_code:?}"
            ));
            Ok(identical && schema_code == Some(2) && runtime_code == Some(1))
        })();
        let _ = std::fs::remove_dir_all(&dir);
        result
    })();
    let (passed, detail) = match passed {
        Ok(ok) => (ok, detail),
        Err(e) => (false, format!("{detail}error: {e}")),
    };
    battery::CheckResult {
        id: 10,
        name: "cli-determinism-and-exit-codes",
        passed,
        detail,
        seconds: started.elapsed().as_secs_f64(),
    }
}

pub fn verify_all() -> CliResult<()> {
    let mut results = battery::run_all();
    results.push(cli_contract_check());
    let mut failures = 0usize;
    for r in &results {
        println!("{r}");
        if !r.passed {
            failures += 1;
        }
    }
    if failures == 0 {
        println!("all {} checks passed", results.len());
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{failures} of {} checks failed",
            results.len()
        )))
    }
}
