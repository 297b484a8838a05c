//! One-dimensional reduced problems.
//!
//! The workhorse is [`integrate_ivp`], an adaptive Dormand–Prince 5(4)
//! integrator with PI step-size control, cubic-Hermite dense output, and
//! first-class blow-up detection. On top of it sit:
//!
//! * [`perelman_s2_profile`] — the meridian profile equation
//!   `w′ = (w² + 2 tan(t) w − 2)/2` started at the singular endpoint
//!   `t = −π/2` via its one-term regular expansion, integrated forward
//!   until the solution dives past the blow-up threshold;
//! * [`find_parallel_crossing`] — bisection on the dense output for the
//!   latitude at which `|w|` first reaches a given level, used to truncate
//!   the profile to the band where the gradient criterion holds;
//! * [`profile_field`] — the integrated profile packaged as a
//!   [`ScalarField`] on a (typically truncated) sphere chart, so the
//!   variational machinery can classify it;
//! * [`RadialHarmonic`] — the closed-form radial solutions of the Laplace
//!   equation in dimension `n ≥ 2`, with an exact residual check.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::geometry::Chart;

/// Blow-up threshold used by the profile integration.
pub const PROFILE_BLOW_UP_THRESHOLD: f64 = 1e3;

/// The profile integrates toward `π/2 − PROFILE_END_GUARD`; the guard keeps
/// `tan` finite should the blow-up somehow be missed.
pub const PROFILE_END_GUARD: f64 = 1e-12;

/// Bisection half-width for [`find_parallel_crossing`].
pub const CROSSING_TOL: f64 = 1e-10;

/// Right-hand side of a first-order system: `(t, y) ↦ y′`.
pub type Rhs = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// An initial-value problem `y′ = rhs(t, y)`, `y(t0) = y0`, integrated on
/// `[t0, t_end]` unless `max_i |y_i|` exceeds `blow_up_threshold` first.
#[derive(Clone)]
pub struct IvpProblem {
    pub rhs: Rhs,
    pub t0: f64,
    pub t_end: f64,
    pub y0: Vec<f64>,
    pub blow_up_threshold: f64,
    pub tol: f64,
}

impl std::fmt::Debug for IvpProblem {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("IvpProblem")
            .field("t0", &self.t0)
            .field("t_end", &self.t_end)
            .field("y0", &self.y0)
            .field("blow_up_threshold", &self.blow_up_threshold)
            .field("tol", &self.tol)
            .finish()
    }
}

impl IvpProblem {
    /// Validated problem. `t0 < t_end`, `tol ∈ [1e−14, 1e−3]`, positive
    /// threshold, finite non-empty initial state.
    pub fn new(
        t0: f64,
        t_end: f64,
        y0: Vec<f64>,
        tol: f64,
        blow_up_threshold: f64,
        rhs: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<IvpProblem> {
        if !(t0.is_finite() && t_end.is_finite() && t0 < t_end) {
            return Err(Error::InvalidArgument(format!(
                "need finite t0 < t_end, got [{t0}, {t_end}]"
            )));
        }
        if !(1e-14..=1e-3).contains(&tol) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must lie in [1e-14, 1e-3], got {tol:e}"
            )));
        }
        if !(blow_up_threshold > 0.0 && blow_up_threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "blow-up threshold must be positive, got {blow_up_threshold}"
            )));
        }
        if y0.is_empty() || y0.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument(
                "initial state must be non-empty and finite".into(),
            ));
        }
        Ok(IvpProblem {
            rhs: Arc::new(rhs),
            t0,
            t_end,
            y0,
            blow_up_threshold,
            tol,
        })
    }
}

/// How an integration ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolveStatus {
    /// Reached `t_end`.
    Completed,
    /// `max_i |y_i|` reached the threshold at the recorded time.
    BlewUp(f64),
    /// The controller drove the step below the representable minimum (or
    /// exhausted its step budget) at the recorded time.
    StepFailure(f64),
}

/// Accepted steps of one integration, with a cubic-Hermite dense view.
#[derive(Clone, Debug)]
pub struct OdeSolution {
    /// Accepted times, strictly increasing, starting at `t0`.
    pub ts: Vec<f64>,
    /// States at `ts`.
    pub ys: Vec<Vec<f64>>,
    /// Derivatives at `ts` (the integrator's FSAL stage), for dense output.
    dys: Vec<Vec<f64>>,
    pub status: SolveStatus,
}

impl OdeSolution {
    pub fn t_start(&self) -> f64 {
        self.ts[0]
    }

    pub fn t_last(&self) -> f64 {
        *self.ts.last().expect("solutions hold at least the start")
    }

    pub fn dim(&self) -> usize {
        self.ys[0].len()
    }

    /// Cubic-Hermite interpolation between accepted steps. `t` must lie in
    /// `[t_start, t_last]`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        if !(t >= self.t_start() && t <= self.t_last()) {
            return Err(Error::InvalidArgument(format!(
                "t = {t} outside the integrated range [{}, {}]",
                self.t_start(),
                self.t_last()
            )));
        }
        // first index with ts[i] >= t; t lands in [ts[i-1], ts[i]]
        let i = self.ts.partition_point(|&s| s < t);
        if i == 0 || self.ts[i.min(self.ts.len() - 1)] == t {
            return Ok(self.ys[i.min(self.ts.len() - 1)].clone());
        }
        let (t0, t1) = (self.ts[i - 1], self.ts[i]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let n = self.dim();
        let mut y = vec![0.0; n];
        for j in 0..n {
            y[j] = h00 * self.ys[i - 1][j]
                + h10 * h * self.dys[i - 1][j]
                + h01 * self.ys[i][j]
                + h11 * h * self.dys[i][j];
        }
        Ok(y)
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Difference between the 5th- and 4th-order weights (error estimator).
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

// PI step-size controller constants (classic dopri5 settings).
const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_SHRINK: f64 = 0.2; // strongest allowed shrink per step
const FAC_GROW: f64 = 10.0; // strongest allowed growth per step
const MAX_STEPS: usize = 1_000_000;

/// One Dormand–Prince step from `(t, y)` with derivative `k1 = rhs(t, y)`.
/// Returns the 5th-order end state, the FSAL derivative there, and the
/// scaled error estimate components.
fn dopri_step(rhs: &Rhs, t: f64, y: &[f64], k1: &[f64], h: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = y.len();
    let mut k = vec![k1.to_vec()];
    for stage in 0..6 {
        let mut ys = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = A[stage][j];
            if a != 0.0 {
                for i in 0..n {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k.push((rhs)(t + C[stage + 1] * h, &ys));
    }
    // stage 7 was evaluated at the 5th-order solution: FSAL
    let mut y1 = y.to_vec();
    for (j, kj) in k.iter().take(6).enumerate() {
        let b = A[5][j];
        if b != 0.0 {
            for i in 0..n {
                y1[i] += h * b * kj[i];
            }
        }
    }
    let k7 = k.pop().expect("seven stages");
    let mut err = vec![0.0; n];
    for (j, kj) in k.iter().enumerate() {
        if E[j] != 0.0 {
            for i in 0..n {
                err[i] += h * E[j] * kj[i];
            }
        }
    }
    for i in 0..n {
        err[i] += h * E[6] * k7[i];
    }
    (y1, k7, err)
}

/// Starting step size, following the usual two-probe heuristic: balance the
/// size of the state against its derivative, then correct with an Euler
/// probe of the second derivative.
fn initial_step(p: &IvpProblem, f0: &[f64]) -> f64 {
    let span = p.t_end - p.t0;
    let sc: Vec<f64> = p.y0.iter().map(|y| p.tol + p.tol * y.abs()).collect();
    let d0 = rms(&p.y0.iter().zip(&sc).map(|(y, s)| y / s).collect::<Vec<_>>());
    let d1 = rms(&f0.iter().zip(&sc).map(|(f, s)| f / s).collect::<Vec<_>>());
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * (d0 / d1)
    }
    .min(span);
    let y1: Vec<f64> = p
        .y0
        .iter()
        .zip(f0)
        .map(|(y, f)| y + h0 * f)
        .collect();
    let f1 = (p.rhs)(p.t0 + h0, &y1);
    let d2 = rms(
        &f1.iter()
            .zip(f0)
            .zip(&sc)
            .map(|((a, b), s)| (a - b) / s)
            .collect::<Vec<_>>(),
    ) / h0;
    let d_max = d1.max(d2);
    let h1 = if d_max <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d_max).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt()
}

/// Integrate the problem over its full range (or until blow-up).
pub fn integrate_ivp(p: &IvpProblem) -> Result<OdeSolution> {
    integrate_ivp_until(p, |_, _| false).map(|(sol, _)| sol)
}

/// Integrate until `t_end`, blow-up, or the first time `stop(t, y)` turns
/// true, whichever comes first. The halt time — refined by bisection on the
/// dense output of the triggering step — is returned alongside; the
/// solution is truncated there and reports `Completed`.
pub fn integrate_ivp_until(
    p: &IvpProblem,
    stop: impl Fn(f64, &[f64]) -> bool,
) -> Result<(OdeSolution, Option<f64>)> {
    let f0 = (p.rhs)(p.t0, &p.y0);
    if f0.len() != p.y0.len() {
        return Err(Error::InvalidArgument(format!(
            "rhs returned {} components for a state of dimension {}",
            f0.len(),
            p.y0.len()
        )));
    }
    if f0.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite {
            context: "rhs at the initial point".into(),
            at: vec![p.t0],
        });
    }
    if p.y0.iter().map(|a| a.abs()).fold(0.0, f64::max) >= p.blow_up_threshold {
        return Err(Error::InvalidArgument(
            "initial state already beyond the blow-up threshold".into(),
        ));
    }

    let mut ts = vec![p.t0];
    let mut ys = vec![p.y0.clone()];
    let mut dys = vec![f0.clone()];

    let mut t = p.t0;
    let mut y = p.y0.clone();
    let mut k1 = f0;
    let mut h = initial_step(p, &k1);
    let mut err_old: f64 = 1e-4;

    for _ in 0..MAX_STEPS {
        if t >= p.t_end {
            break;
        }
        h = h.min(p.t_end - t);
        let h_min = 4.0 * f64::EPSILON * t.abs().max(1.0);
        if h < h_min {
            return Ok((
                OdeSolution {
                    ts,
                    ys,
                    dys,
                    status: SolveStatus::StepFailure(t),
                },
                None,
            ));
        }

        let (y1, k7, err_comps) = dopri_step(&p.rhs, t, &y, &k1, h);
        let finite = y1.iter().chain(&k7).chain(&err_comps).all(|a| a.is_finite());
        let err = if finite {
            let sc: Vec<f64> = y
                .iter()
                .zip(&y1)
                .map(|(a, b)| p.tol + p.tol * a.abs().max(b.abs()))
                .collect();
            rms(
                &err_comps
                    .iter()
                    .zip(&sc)
                    .map(|(e, s)| e / s)
                    .collect::<Vec<_>>(),
            )
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            // accepted: record, then handle events on [t, t + h]
            let t1 = t + h;
            ts.push(t1);
            ys.push(y1.clone());
            dys.push(k7.clone());

            if stop(t1, &y1) {
                // locate the first flip inside this step
                let mut probe = OdeSolution {
                    ts,
                    ys,
                    dys,
                    status: SolveStatus::Completed,
                };
                let mut lo = t;
                let mut hi = t1;
                while hi - lo > 1e-12 * hi.abs().max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if stop(mid, &probe.eval(mid)?) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let y_halt = probe.eval(hi)?;
                let k_halt = (p.rhs)(hi, &y_halt);
                *probe.ts.last_mut().expect("just pushed") = hi;
                *probe.ys.last_mut().expect("just pushed") = y_halt;
                *probe.dys.last_mut().expect("just pushed") = k_halt;
                return Ok((probe, Some(hi)));
            }

            let maxabs = y1.iter().map(|a| a.abs()).fold(0.0, f64::max);
            if maxabs >= p.blow_up_threshold {
                // bisect the dense output for the earliest threshold hit;
                // keep the upper end so the state there is at/over it
                let mut probe = OdeSolution {
                    ts,
                    ys,
                    dys,
                    status: SolveStatus::Completed,
                };
                let over = |probe: &OdeSolution, s: f64| -> Result<bool> {
                    Ok(probe
                        .eval(s)?
                        .iter()
                        .map(|a| a.abs())
                        .fold(0.0, f64::max)
                        >= p.blow_up_threshold)
                };
                let mut lo = t;
                let mut hi = t1;
                while hi - lo > 1e-12 * hi.abs().max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if over(&probe, mid)? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                probe.status = SolveStatus::BlewUp(hi);
                return Ok((probe, None));
            }

            t = t1;
            y = y1;
            k1 = k7;

            // PI controller: next step from this error and the previous one
            let err = err.max(1e-32);
            let fac11 = err.powf(EXPO1);
            let fac = (fac11 / err_old.powf(BETA) / SAFE)
                .max(1.0 / FAC_GROW)
                .min(1.0 / FAC_SHRINK);
            h /= fac;
            err_old = err.max(1e-4);
        } else if err.is_finite() {
            let fac11 = err.powf(EXPO1);
            h /= (fac11 / SAFE).min(1.0 / FAC_SHRINK);
        } else {
            h *= FAC_SHRINK;
        }
    }

    let status = if t >= p.t_end {
        SolveStatus::Completed
    } else {
        SolveStatus::StepFailure(t)
    };
    Ok((OdeSolution { ts, ys, dys, status }, None))
}

/// Integrate the meridian profile equation
/// `w′ = (w² + 2 tan(t) w − 2)/2`, `f′ = w` from the singular endpoint.
///
/// The endpoint prescription `w(−π/2) = 0` is made actionable by the
/// regular expansion at `s = t + π/2 → 0⁺`: substituting `w = a·s` and
/// `tan(t) = −1/s + O(s)` into the equation forces `a = −1/2`, so the
/// integration starts at `t = −π/2 + ε` with `w = −ε/2`, `f = 0`.
/// The state is `y = [w, f]`; the run ends in blow-up (`w → −∞` before
/// `π/2`), reported via [`SolveStatus::BlewUp`].
pub fn perelman_s2_profile(epsilon: f64, tol: f64) -> Result<OdeSolution> {
    if !(1e-8..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "start offset must lie in [1e-8, 1e-3], got {epsilon:e}"
        )));
    }
    let t0 = -std::f64::consts::FRAC_PI_2 + epsilon;
    let t_end = std::f64::consts::FRAC_PI_2 - PROFILE_END_GUARD;
    let p = IvpProblem::new(
        t0,
        t_end,
        vec![-epsilon / 2.0, 0.0],
        tol,
        PROFILE_BLOW_UP_THRESHOLD,
        |t: f64, y: &[f64]| {
            let w = y[0];
            vec![(w * w + 2.0 * t.tan() * w - 2.0) / 2.0, w]
        },
    )?;
    integrate_ivp(&p)
}

/// First time at which `|w| = |level|` along a profile solution, by
/// bisection on the dense output to within [`CROSSING_TOL`].
///
/// `w` is the first state component. Since `|w|` starts near zero and only
/// grows, levels at or below the starting magnitude return the start time;
/// levels never attained produce [`Error::LevelNotAttained`].
pub fn find_parallel_crossing(sol: &OdeSolution, level: f64) -> Result<f64> {
    let target = level.abs();
    let w_abs = |t: f64| -> Result<f64> { Ok(sol.eval(t)?[0].abs()) };
    if w_abs(sol.t_start())? >= target {
        return Ok(sol.t_start());
    }
    // first accepted node at or beyond the level brackets the crossing
    let mut bracket = None;
    for i in 1..sol.ts.len() {
        if sol.ys[i][0].abs() >= target {
            bracket = Some((sol.ts[i - 1], sol.ts[i]));
            break;
        }
    }
    let (mut lo, mut hi) = bracket.ok_or(Error::LevelNotAttained { level: target })?;
    while hi - lo > CROSSING_TOL {
        let mid = 0.5 * (lo + hi);
        if w_abs(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Package a profile solution as the scalar field `v(u) = f(u₂)` on a
/// sphere chart (azimuth first), with analytic partials `(0, w(u₂))` read
/// off the dense output.
///
/// The chart's latitude interval must sit inside the integrated range far
/// enough that finite-difference stencils of downstream consumers stay
/// covered; evaluation clamps to the integrated range to remain total.
pub fn profile_field(sol: &OdeSolution, chart: Chart) -> Result<ScalarField> {
    if chart.intrinsic_dim() != 2 {
        return Err(Error::UnsupportedChart(format!(
            "profile fields live on a 2-sphere chart, got '{}'",
            chart.name()
        )));
    }
    let (lat_lo, lat_hi) = chart.domain()[1];
    if lat_lo < sol.t_start() || lat_hi > sol.t_last() {
        return Err(Error::InvalidArgument(format!(
            "chart latitudes [{lat_lo}, {lat_hi}] exceed the integrated range [{}, {}]",
            sol.t_start(),
            sol.t_last()
        )));
    }
    let sol = Arc::new(sol.clone());
    let (lo, hi) = (sol.t_start(), sol.t_last());
    let clamp = move |t: f64| t.clamp(lo, hi);
    let sol_f = sol.clone();
    let sol_w = sol.clone();
    let zero: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = Arc::new(|_: &[f64]| 0.0);
    ScalarField::with_partials(
        chart,
        move |u: &[f64]| sol_f.eval(clamp(u[1])).expect("clamped to range")[1],
        vec![
            zero,
            Arc::new(move |u: &[f64]| {
                sol_w.eval(u[1].clamp(lo, hi)).expect("clamped to range")[0]
            }),
        ],
    )
}

/// Closed-form radial solution of the Laplace equation in `R^n` minus the
/// origin: `ψ(r) = α ln r + k` for `n = 2`, `α r^{2−n}/(2−n) + k` for
/// `n ≥ 3`; in both cases `ψ′(r) = α r^{1−n}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialHarmonic {
    pub n: u32,
    pub alpha: f64,
    pub k: f64,
}

/// Construct a [`RadialHarmonic`]; the dimension must be at least 2.
pub fn radial_harmonic(n: u32, alpha: f64, k: f64) -> Result<RadialHarmonic> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "radial harmonics need dimension n >= 2, got {n}"
        )));
    }
    Ok(RadialHarmonic { n, alpha, k })
}

impl RadialHarmonic {
    fn check_radius(&self, r: f64) -> Result<()> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "radius must be positive, got {r}"
            )));
        }
        Ok(())
    }

    /// `ψ(r)`.
    pub fn psi(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        Ok(if self.n == 2 {
            self.alpha * r.ln() + self.k
        } else {
            let p = 2.0 - self.n as f64;
            self.alpha * r.powf(p) / p + self.k
        })
    }

    /// `ψ′(r) = α r^{1−n}`.
    pub fn psi_prime(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        Ok(self.alpha * r.powf(1.0 - self.n as f64))
    }

    /// `ψ″(r) = α (1−n) r^{−n}`.
    pub fn psi_second(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        Ok(self.alpha * (1.0 - self.n as f64) * r.powf(-(self.n as f64)))
    }
}

/// Radial Laplace residual `ψ″(r) + ((n−1)/r) ψ′(r)`, from the closed-form
/// derivatives. Vanishes identically for every radial harmonic.
pub fn radial_laplace_residual(h: &RadialHarmonic, r: f64) -> Result<f64> {
    Ok(h.psi_second(r)? + (h.n as f64 - 1.0) / r * h.psi_prime(r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::QuadratureGrid;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn exponential_problem(tol: f64) -> IvpProblem {
        IvpProblem::new(0.0, 1.0, vec![1.0], tol, 1e12, |_t, y: &[f64]| vec![y[0]])
            .unwrap()
    }

    #[test]
    fn exponential_growth_is_integrated_to_tolerance() {
        let sol = integrate_ivp(&exponential_problem(1e-10)).unwrap();
        assert_eq!(sol.status, SolveStatus::Completed);
        let y_end = sol.ys.last().unwrap()[0];
        assert!((y_end - std::f64::consts::E).abs() < 1e-9, "{y_end}");
    }

    #[test]
    fn quadratic_blow_up_is_detected_near_its_pole() {
        // y′ = y², y(0) = 1 → y = 1/(1 − t); the threshold 1e6 is reached
        // at t = 1 − 1e−6.
        let p = IvpProblem::new(0.0, 2.0, vec![1.0], 1e-10, 1e6, |_t, y: &[f64]| {
            vec![y[0] * y[0]]
        })
        .unwrap();
        let sol = integrate_ivp(&p).unwrap();
        match sol.status {
            SolveStatus::BlewUp(t_stop) => {
                assert!((t_stop - 1.0).abs() < 1e-3, "t_stop = {t_stop}");
                let y = sol.eval(t_stop).unwrap()[0];
                assert!(y >= 1e6 * (1.0 - 1e-9), "state at stop: {y}");
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn constant_problems_complete_with_constant_solutions() {
        let p = IvpProblem::new(0.0, 5.0, vec![2.5, -1.0], 1e-9, 1e6, |_t, y: &[f64]| {
            vec![0.0; y.len()]
        })
        .unwrap();
        let sol = integrate_ivp(&p).unwrap();
        assert_eq!(sol.status, SolveStatus::Completed);
        for y in &sol.ys {
            assert_eq!(y, &vec![2.5, -1.0]);
        }
        assert_eq!(sol.eval(2.345).unwrap(), vec![2.5, -1.0]);
    }

    #[test]
    fn problem_validation_rejects_bad_inputs() {
        assert!(IvpProblem::new(1.0, 0.0, vec![1.0], 1e-9, 1.0, |_, _| vec![0.0]).is_err());
        assert!(IvpProblem::new(0.0, 1.0, vec![1.0], 1e-2, 1.0, |_, _| vec![0.0]).is_err());
        assert!(IvpProblem::new(0.0, 1.0, vec![1.0], 1e-15, 1.0, |_, _| vec![0.0]).is_err());
        assert!(IvpProblem::new(0.0, 1.0, vec![], 1e-9, 1.0, |_, _| vec![]).is_err());
        assert!(IvpProblem::new(0.0, 1.0, vec![1.0], 1e-9, -1.0, |_, _| vec![0.0]).is_err());
        // dimension mismatch between state and rhs
        let p = IvpProblem::new(0.0, 1.0, vec![1.0], 1e-9, 1.0e6, |_, _| vec![0.0, 0.0]).unwrap();
        assert!(integrate_ivp(&p).is_err());
    }

    #[test]
    fn accepted_times_are_strictly_increasing() {
        let sol = integrate_ivp(&exponential_problem(1e-8)).unwrap();
        for pair in sol.ts.windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }

    #[test]
    fn dense_output_interpolates_the_exponential_accurately() {
        // Cubic Hermite between accepted nodes is fourth-order in the step;
        // at this tolerance the steps give interpolation error near 1e−8.
        let sol = integrate_ivp(&exponential_problem(1e-10)).unwrap();
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            let y = sol.eval(t).unwrap()[0];
            assert!((y - t.exp()).abs() < 1e-7, "t = {t}: {y}");
        }
        assert!(sol.eval(-0.1).is_err());
        assert!(sol.eval(1.1).is_err());
    }

    #[test]
    fn fixed_step_error_drops_thirty_two_fold_when_steps_halve() {
        // Fifth-order behavior of the raw stepper on y′ = y over [0, 1]:
        // halving a uniform step divides the global error by ≈ 2⁵.
        let rhs: Rhs = Arc::new(|_t, y: &[f64]| vec![y[0]]);
        let run = |n: usize| -> f64 {
            let h = 1.0 / n as f64;
            let mut t = 0.0;
            let mut y = vec![1.0];
            let mut k1 = (rhs)(t, &y);
            for _ in 0..n {
                let (y1, k7, _) = dopri_step(&rhs, t, &y, &k1, h);
                y = y1;
                k1 = k7;
                t += h;
            }
            (y[0] - std::f64::consts::E).abs()
        };
        let e1 = run(16);
        let e2 = run(32);
        let ratio = e1 / e2;
        assert!(
            (20.0..=45.0).contains(&ratio),
            "error ratio {ratio} (e1 = {e1:e}, e2 = {e2:e})"
        );
    }

    #[test]
    fn halting_predicate_truncates_the_run_at_the_event() {
        // y = e^t crosses 2 at t = ln 2
        let p = exponential_problem(1e-10);
        let (sol, halted) = integrate_ivp_until(&p, |_t, y| y[0] >= 2.0).unwrap();
        let t_halt = halted.expect("event must trigger");
        assert!((t_halt - 2.0f64.ln()).abs() < 1e-8, "t_halt = {t_halt}");
        assert_relative_eq!(sol.t_last(), t_halt);
        assert_eq!(sol.status, SolveStatus::Completed);
    }

    #[test]
    fn profile_starts_on_the_regular_branch() {
        // Integrating from ε/10 to ε must land on w(−π/2 + ε) ≈ −ε/2: the
        // expansion used for the start is attracting, so the check is not a
        // restatement of the initial condition.
        for epsilon in [1e-4, 1e-5, 1e-6] {
            let sol = perelman_s2_profile(epsilon / 10.0, 1e-12).unwrap();
            let w_eps = sol.eval(-FRAC_PI_2 + epsilon).unwrap()[0];
            let predicted = -epsilon / 2.0;
            assert!(
                (w_eps - predicted).abs() < 0.1 * predicted.abs(),
                "eps = {epsilon:e}: w = {w_eps:e}, predicted {predicted:e}"
            );
        }
    }

    #[test]
    fn profile_blows_down_before_the_far_pole() {
        let sol = perelman_s2_profile(1e-6, 1e-10).unwrap();
        match sol.status {
            SolveStatus::BlewUp(t_stop) => {
                assert!(t_stop < FRAC_PI_2, "t_stop = {t_stop}");
                let w = sol.eval(t_stop).unwrap()[0];
                assert!(w <= -1e3 * (1.0 - 1e-9), "w(t_stop) = {w}");
            }
            other => panic!("profile must blow up, got {other:?}"),
        }
    }

    #[test]
    fn profile_is_stable_under_the_start_offset() {
        let a = perelman_s2_profile(1e-6, 1e-12).unwrap();
        let b = perelman_s2_profile(5e-7, 1e-12).unwrap();
        let wa = a.eval(0.0).unwrap()[0];
        let wb = b.eval(0.0).unwrap()[0];
        assert!((wa - wb).abs() < 1e-6, "{wa} vs {wb}");
    }

    #[test]
    fn profile_w_is_strictly_decreasing() {
        let sol = perelman_s2_profile(1e-6, 1e-10).unwrap();
        for pair in sol.ys.windows(2) {
            assert!(pair[1][0] < pair[0][0]);
        }
    }

    #[test]
    fn crossing_at_level_zero_is_the_start() {
        let sol = perelman_s2_profile(1e-5, 1e-10).unwrap();
        let t = find_parallel_crossing(&sol, 0.0).unwrap();
        assert_relative_eq!(t, sol.t_start());
    }

    #[test]
    fn sqrt_two_crossing_is_tolerance_stable() {
        // Forward errors grow toward the blow-up end, so pinning the
        // crossing to 1e−8 against a 100× tighter re-integration needs a
        // tight base tolerance.
        let level = 2.0f64.sqrt();
        let coarse = perelman_s2_profile(1e-6, 1e-12).unwrap();
        let fine = perelman_s2_profile(1e-6, 1e-14).unwrap();
        let ta = find_parallel_crossing(&coarse, level).unwrap();
        let tb = find_parallel_crossing(&fine, level).unwrap();
        assert!(ta > -FRAC_PI_2 && ta < FRAC_PI_2);
        assert!((ta - tb).abs() < 1e-8, "{ta} vs {tb}");
    }

    #[test]
    fn unreachable_levels_are_reported() {
        let sol = perelman_s2_profile(1e-6, 1e-10).unwrap();
        match find_parallel_crossing(&sol, 1e6) {
            Err(Error::LevelNotAttained { level }) => assert_eq!(level, 1e6),
            other => panic!("expected level error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_profile_field_satisfies_the_gradient_criterion() {
        // Restricted to latitudes where |w| < √2, the profile's gradient
        // stays below the classification threshold: the truncated cap is a
        // minimum candidate.
        use crate::functionals::EnergyFunctional;
        use crate::variations::{classify_critical_point, default_probes, Verdict};

        let sol = perelman_s2_profile(1e-6, 1e-10).unwrap();
        let u2_star = find_parallel_crossing(&sol, 2.0f64.sqrt()).unwrap();
        let band = Chart::s2()
            .with_domain(vec![(0.0, 2.0 * PI), (sol.t_start() + 1e-3, u2_star - 1e-3)])
            .unwrap();
        let grid = QuadratureGrid::gauss_legendre(&band, 24).unwrap();
        let v = profile_field(&sol, band.clone()).unwrap();

        let mut sup = 0.0f64;
        for node in &grid.nodes {
            sup = sup.max(v.grad_norm_sq(node).unwrap());
        }
        assert!(sup < 2.0, "sup ||∇v||² = {sup}");

        let e = EnergyFunctional::perelman(band.clone()).unwrap();
        let report =
            classify_critical_point(&e, &v, &grid, &default_probes(&band, 5)).unwrap();
        assert_eq!(report.verdict, Verdict::StrictLocalMinCandidate);
    }

    #[test]
    fn profile_field_requires_a_covered_band() {
        let sol = perelman_s2_profile(1e-5, 1e-8).unwrap();
        let too_wide = Chart::s2();
        assert!(profile_field(&sol, too_wide).is_err());
    }

    #[test]
    fn radial_harmonics_match_their_closed_forms() {
        let h2 = radial_harmonic(2, 1.5, 0.25).unwrap();
        assert_relative_eq!(h2.psi(2.0).unwrap(), 1.5 * 2.0f64.ln() + 0.25);

        // n = 3, α = 1, k = 0 → ψ = r^{−1}/(−1) = −1/r
        let h3 = radial_harmonic(3, 1.0, 0.0).unwrap();
        assert_relative_eq!(h3.psi(0.5).unwrap(), -2.0);
        assert_relative_eq!(h3.psi(4.0).unwrap(), -0.25);

        for (h, n) in [(h2, 2u32), (h3, 3u32)] {
            for r in [0.3, 1.0, 2.7] {
                let ratio = h.psi_prime(r).unwrap() / (h.alpha * r.powf(1.0 - n as f64));
                assert_relative_eq!(ratio, 1.0, epsilon = 1e-14);
            }
        }
        assert!(radial_harmonic(1, 1.0, 0.0).is_err());
        assert!(h2.psi(0.0).is_err());
        assert!(h2.psi(-1.0).is_err());
    }

    #[test]
    fn radial_laplace_residual_vanishes() {
        let cases = [
            (radial_harmonic(2, 1.0, 0.0).unwrap(), 0.5),
            (radial_harmonic(5, -2.0, 3.0).unwrap(), 2.0),
            (radial_harmonic(3, 0.7, -1.0).unwrap(), 1.3),
        ];
        for (h, r) in cases {
            assert!(radial_laplace_residual(&h, r).unwrap().abs() < 1e-12);
        }
        // α = 0 is a constant: the residual is exactly zero
        let flat = radial_harmonic(4, 0.0, 9.0).unwrap();
        assert_eq!(radial_laplace_residual(&flat, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn planar_harmonic_is_flat_for_the_surface_laplacian() {
        // ψ(||x||) pulled back to the polar annulus must be annihilated by
        // the intrinsic Laplacian: a cross-check against the fields module.
        let h = radial_harmonic(2, 1.3, 0.7).unwrap();
        let ann = Chart::polar_annulus(0.5, 2.0).unwrap();
        let v = ScalarField::from_ambient(ann.clone(), move |x: &[f64]| {
            h.psi((x[0] * x[0] + x[1] * x[1]).sqrt()).unwrap()
        });
        for u in [[0.8, 1.0], [1.2, 3.0], [1.8, 5.5]] {
            let lap = v.laplace_beltrami(&u).unwrap();
            assert!(lap.abs() < 1e-5, "residual {lap} at {u:?}");
        }
    }
}
