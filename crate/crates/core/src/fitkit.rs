//! Least-squares kernels: a damped Gauss-Newton (Levenberg-Marquardt) solver
//! with analytic Jacobians, the decay and lineshape models built on it, and
//! the echo averaging estimators whose noise floor produces the offset C.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A least-squares problem `min sum (model_i(p) - y_i)^2`.
pub trait LeastSquares: Sync {
    fn n_params(&self) -> usize;
    fn targets(&self) -> &[f64];
    /// Model values at every data point.
    fn eval(&self, p: &[f64], out: &mut [f64]);
    /// d model_i / d p_k, one row per data point.
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>);
    /// Parameters outside the domain are rejected as if their cost were infinite.
    fn feasible(&self, _p: &[f64]) -> bool {
        true
    }
}

/// Scalar model `f(x; p)` evaluated on a list of abscissae.
pub struct CurveModel<F, G>
where
    F: Fn(f64, &[f64]) -> f64 + Sync,
    G: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub n_params: usize,
    pub f: F,
    pub grad: G,
    pub feasible: Option<fn(&[f64]) -> bool>,
}

impl<F, G> LeastSquares for CurveModel<F, G>
where
    F: Fn(f64, &[f64]) -> f64 + Sync,
    G: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    fn n_params(&self) -> usize {
        self.n_params
    }

    fn targets(&self) -> &[f64] {
        &self.ys
    }

    fn eval(&self, p: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(&self.xs) {
            *o = (self.f)(x, p);
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let mut row = vec![0.0; self.n_params];
        for (i, &x) in self.xs.iter().enumerate() {
            (self.grad)(x, p, &mut row);
            for (k, &v) in row.iter().enumerate() {
                jac[(i, k)] = v;
            }
        }
    }

    fn feasible(&self, p: &[f64]) -> bool {
        self.feasible.map_or(true, |f| f(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost decrease treated as stagnation.
    pub ftol: f64,
    /// Relative step size treated as stagnation.
    pub xtol: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 500, ftol: 1e-15, xtol: 1e-12, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// 1-sigma errors from the covariance.
    pub errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Sum of squared residuals at the optimum.
    pub ssr: f64,
    pub initial_ssr: f64,
    pub iterations: usize,
}

fn ssr_at<P: LeastSquares + ?Sized>(problem: &P, p: &[f64], buf: &mut [f64]) -> f64 {
    if !problem.feasible(p) {
        return f64::INFINITY;
    }
    problem.eval(p, buf);
    let s: f64 = buf.iter().zip(problem.targets()).map(|(m, y)| (m - y).powi(2)).sum();
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

/// Minimises the problem from `p0`.
pub fn levenberg_marquardt<P: LeastSquares + ?Sized>(problem: &P, p0: &[f64], opts: &LmOptions) -> Result<LmReport> {
    let n = problem.targets().len();
    let m = problem.n_params();
    if p0.len() != m {
        return Err(Error::Input(format!("expected {m} initial parameters, got {}", p0.len())));
    }
    if n < m {
        return Err(Error::Input(format!("{n} data points cannot determine {m} parameters")));
    }
    let mut p = p0.to_vec();
    let mut buf = vec![0.0; n];
    let mut cost = ssr_at(problem, &p, &mut buf);
    if !cost.is_finite() {
        return Err(Error::FitFailed { iterations: 0, reason: "initial guess is infeasible".into(), best: p });
    }
    let initial_ssr = cost;
    let mut jac = DMatrix::<f64>::zeros(n, m);
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;
    let mut converged = cost == 0.0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        problem.eval(&p, &mut buf);
        let r = DVector::from_iterator(n, buf.iter().zip(problem.targets()).map(|(m, y)| m - y));
        problem.jacobian(&p, &mut jac);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if grad.amax() == 0.0 {
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..m {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => match a.lu().solve(&(-&grad)) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                },
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_cost = ssr_at(problem, &trial, &mut buf);
            if trial_cost < cost {
                let decrease = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                let step_rel = step
                    .iter()
                    .zip(&p)
                    .map(|(s, x)| s.abs() / (x.abs() + opts.xtol))
                    .fold(0.0, f64::max);
                p = trial;
                cost = trial_cost;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if decrease < opts.ftol || step_rel < opts.xtol || cost == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction left: stationary to working precision
            converged = true;
        }
    }
    if !converged {
        return Err(Error::FitFailed {
            iterations,
            reason: format!("no convergence (ssr {cost:e})"),
            best: p,
        });
    }
    let (covariance, errors) = covariance(problem, &p, cost)?;
    Ok(LmReport { params: p, errors, covariance, ssr: cost, initial_ssr, iterations })
}

fn covariance<P: LeastSquares + ?Sized>(problem: &P, p: &[f64], ssr: f64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = problem.targets().len();
    let m = problem.n_params();
    let mut jac = DMatrix::<f64>::zeros(n, m);
    problem.jacobian(p, &mut jac);
    let jtj = jac.transpose() * &jac;
    let diag: Vec<f64> = (0..m).map(|k| jtj[(k, k)].sqrt()).collect();
    if diag.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::IllConditioned("a parameter has no influence on the model".into()));
    }
    // equilibrate before judging conditioning
    let scaled = DMatrix::from_fn(m, m, |i, j| jtj[(i, j)] / (diag[i] * diag[j]));
    let sv = scaled.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-13 * smax) {
        return Err(Error::IllConditioned(format!("normal matrix condition {:e}", smax / smin)));
    }
    let inv = scaled
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned("singular normal matrix".into()))?;
    let dof = (n - m).max(1) as f64;
    let s2 = ssr / dof;
    let cov: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| s2 * inv[(i, j)] / (diag[i] * diag[j])).collect())
        .collect();
    let errors = (0..m).map(|k| cov[k][k].max(0.0).sqrt()).collect();
    Ok((cov, errors))
}

// ---------------------------------------------------------------------------
// Echo averaging

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    PhaseSensitive,
    Magnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingModel {
    pub mode: AveragingMode,
    pub n_averages: usize,
    /// Noise standard deviation of each quadrature integral.
    pub noise_sigma: f64,
}

impl AveragingModel {
    pub fn phase_sensitive() -> Self {
        Self { mode: AveragingMode::PhaseSensitive, n_averages: 1, noise_sigma: 0.0 }
    }

    pub fn magnitude() -> Self {
        Self { mode: AveragingMode::Magnitude, n_averages: 1, noise_sigma: 0.0 }
    }

    /// Expected offset C on A^2 when averaging in magnitude: 2 sigma^2.
    pub fn expected_offset(&self) -> f64 {
        match self.mode {
            AveragingMode::PhaseSensitive => 0.0,
            AveragingMode::Magnitude => 2.0 * self.noise_sigma * self.noise_sigma,
        }
    }
}

/// One demodulated echo trace sampled at a fixed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IqTrace {
    pub i: Vec<f64>,
    pub q: Vec<f64>,
}

/// Trapezoidal integral of a uniformly sampled signal.
pub fn integrate(samples: &[f64], dt: f64) -> f64 {
    match samples.len() {
        0 => 0.0,
        1 => samples[0] * dt,
        n => dt * (samples.iter().sum::<f64>() - 0.5 * (samples[0] + samples[n - 1])),
    }
}

/// Phase-insensitive echo amplitude `sqrt(mean([int I]^2 + [int Q]^2))`.
pub fn magnitude_average(traces: &[IqTrace], dt: f64) -> f64 {
    if traces.is_empty() {
        return 0.0;
    }
    let sum: f64 = traces
        .iter()
        .map(|t| integrate(&t.i, dt).powi(2) + integrate(&t.q, dt).powi(2))
        .sum();
    (sum / traces.len() as f64).sqrt()
}

/// Phase-sensitive echo amplitude `Re(exp(-i theta) mean(int I + i int Q))`.
pub fn phase_sensitive_average(traces: &[IqTrace], dt: f64, theta: f64) -> f64 {
    if traces.is_empty() {
        return 0.0;
    }
    let n = traces.len() as f64;
    let (si, sq) = traces
        .iter()
        .fold((0.0, 0.0), |(a, b), t| (a + integrate(&t.i, dt), b + integrate(&t.q, dt)));
    (si / n) * theta.cos() + (sq / n) * theta.sin()
}

// ---------------------------------------------------------------------------
// Stretched exponentials

/// A parameter that is either fitted (with an optional starting value) or held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Free(Option<f64>),
    Fixed(f64),
}

impl Param {
    fn fixed(&self) -> Option<f64> {
        match self {
            Param::Fixed(v) => Some(*v),
            Param::Free(_) => None,
        }
    }
}

/// One `(2tau / T2)^x` term of the decay exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub t2_s: Param,
    pub x: Param,
}

impl ComponentSpec {
    pub fn free() -> Self {
        Self { t2_s: Param::Free(None), x: Param::Free(None) }
    }

    pub fn frozen(t2_s: f64, x: f64) -> Self {
        Self { t2_s: Param::Fixed(t2_s), x: Param::Fixed(x) }
    }

    /// Pure exponential term `2tau / T2` such as instantaneous diffusion.
    pub fn exponential() -> Self {
        Self { t2_s: Param::Free(None), x: Param::Fixed(1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StretchedOptions {
    pub components: Vec<ComponentSpec>,
    pub averaging: AveragingModel,
    /// Fixed offset C instead of a fitted one (magnitude mode only).
    pub fixed_offset: Option<f64>,
    pub n_starts: usize,
    pub seed: u64,
    pub lm: LmOptions,
}

impl StretchedOptions {
    pub fn single(averaging: AveragingModel) -> Self {
        Self {
            components: vec![ComponentSpec::free()],
            averaging,
            fixed_offset: None,
            n_starts: 5,
            seed: 0,
            lm: LmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedComponent {
    pub t2_s: f64,
    pub x: f64,
    pub t2_err: f64,
    pub x_err: f64,
    pub t2_fixed: bool,
    pub x_fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub components: Vec<FittedComponent>,
    pub offset_c: f64,
    pub offset_c_err: f64,
    /// Set when the free offset went negative and was refitted at zero.
    pub offset_clamped: bool,
    pub mode: AveragingMode,
    /// Free-parameter names matching the covariance rows.
    pub param_names: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    /// Root of the sum of squared residuals.
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    pub iterations: usize,
}

impl DecayFit {
    /// Total decay exponent sum (2tau/T2_i)^x_i.
    pub fn exponent(&self, two_tau: f64) -> f64 {
        self.components.iter().map(|c| (two_tau / c.t2_s).powf(c.x)).sum()
    }

    /// Model echo amplitude A_e with the offset removed.
    pub fn amplitude(&self, two_tau: f64) -> f64 {
        (-self.exponent(two_tau)).exp()
    }

    /// Fitted model in the space it was fitted in (A for phase, A^2 for magnitude).
    pub fn model(&self, two_tau: f64) -> f64 {
        match self.mode {
            AveragingMode::PhaseSensitive => self.amplitude(two_tau),
            AveragingMode::Magnitude => (-2.0 * self.exponent(two_tau)).exp() + self.offset_c,
        }
    }

    /// Plot-ready samples (two_tau, fitted A_e), optionally with C subtracted.
    pub fn curve(&self, two_tau: &[f64], subtract_offset: bool) -> Vec<(f64, f64)> {
        two_tau
            .iter()
            .map(|&t| {
                let m = self.model(t);
                let v = match self.mode {
                    AveragingMode::PhaseSensitive => m,
                    AveragingMode::Magnitude if subtract_offset => (m - self.offset_c).max(0.0).sqrt(),
                    AveragingMode::Magnitude => m.max(0.0).sqrt(),
                };
                (t, v)
            })
            .collect()
    }
}

/// Where each fitted quantity lives in the free-parameter vector.
#[derive(Debug, Clone)]
struct StretchedLayout {
    /// (T2 slot or value, x slot or value) per component.
    slots: Vec<(Slot, Slot)>,
    offset: Slot,
    n_free: usize,
    names: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Free(usize),
    Fixed(f64),
}

impl Slot {
    fn get(&self, p: &[f64]) -> f64 {
        match *self {
            Slot::Free(k) => p[k],
            Slot::Fixed(v) => v,
        }
    }
}

impl StretchedLayout {
    fn new(components: &[ComponentSpec], mode: AveragingMode, fixed_offset: Option<f64>) -> Self {
        let mut n = 0;
        let mut names = Vec::new();
        let mut slot = |param: &Param, name: String, names: &mut Vec<String>| match param.fixed() {
            Some(v) => Slot::Fixed(v),
            None => {
                names.push(name);
                n += 1;
                Slot::Free(n - 1)
            }
        };
        let slots = components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let t = slot(&c.t2_s, format!("T2_{i}"), &mut names);
                let x = slot(&c.x, format!("x_{i}"), &mut names);
                (t, x)
            })
            .collect();
        let offset = match (mode, fixed_offset) {
            (AveragingMode::PhaseSensitive, _) => Slot::Fixed(0.0),
            (AveragingMode::Magnitude, Some(c)) => Slot::Fixed(c),
            (AveragingMode::Magnitude, None) => slot(&Param::Free(None), "C".into(), &mut names),
        };
        Self { slots, offset, n_free: n, names }
    }
}

struct StretchedProblem<'a> {
    t: Vec<f64>,
    y: Vec<f64>,
    layout: &'a StretchedLayout,
    mode: AveragingMode,
}

impl StretchedProblem<'_> {
    fn exponent(&self, t: f64, p: &[f64]) -> f64 {
        self.layout
            .slots
            .iter()
            .map(|(ts, xs)| {
                let (tt, x) = (ts.get(p), xs.get(p));
                if t == 0.0 {
                    0.0
                } else {
                    (t / tt).powf(x)
                }
            })
            .sum()
    }
}

impl LeastSquares for StretchedProblem<'_> {
    fn n_params(&self) -> usize {
        self.layout.n_free
    }

    fn targets(&self) -> &[f64] {
        &self.y
    }

    fn eval(&self, p: &[f64], out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(&self.t) {
            let s = self.exponent(t, p);
            *o = match self.mode {
                AveragingMode::PhaseSensitive => (-s).exp(),
                AveragingMode::Magnitude => (-2.0 * s).exp() + self.layout.offset.get(p),
            };
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        jac.fill(0.0);
        for (i, &t) in self.t.iter().enumerate() {
            let s = self.exponent(t, p);
            // d model / d S
            let dmds = match self.mode {
                AveragingMode::PhaseSensitive => -(-s).exp(),
                AveragingMode::Magnitude => -2.0 * (-2.0 * s).exp(),
            };
            if t > 0.0 {
                for (ts, xs) in &self.layout.slots {
                    let (tt, x) = (ts.get(p), xs.get(p));
                    let u = t / tt;
                    let term = u.powf(x);
                    if let Slot::Free(k) = *ts {
                        jac[(i, k)] += dmds * (-x * term / tt);
                    }
                    if let Slot::Free(k) = *xs {
                        jac[(i, k)] += dmds * term * u.ln();
                    }
                }
            }
            if let Slot::Free(k) = self.layout.offset {
                jac[(i, k)] = 1.0;
            }
        }
    }

    fn feasible(&self, p: &[f64]) -> bool {
        self.layout.slots.iter().all(|(ts, xs)| ts.get(p) > 0.0 && xs.get(p) > 0.0 && xs.get(p) < 50.0)
    }
}

fn validate_decay_data(data: &[(f64, f64)], min_points: usize) -> Result<()> {
    if data.len() < min_points {
        return Err(Error::Input(format!("need at least {min_points} samples, got {}", data.len())));
    }
    if data.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::Input("non-finite sample".into()));
    }
    Ok(())
}

/// Time at which `y` first drops below `level`, linearly interpolated.
fn crossing_time(t: &[f64], y: &[f64], level: f64) -> Option<f64> {
    for k in 1..t.len() {
        if y[k] < level && y[k - 1] >= level {
            let f = (y[k - 1] - level) / (y[k - 1] - y[k]);
            return Some(t[k - 1] + f * (t[k] - t[k - 1]));
        }
    }
    None
}

/// Fits `A = exp(-sum (2tau/T_i)^x_i)` (phase mode) or
/// `A^2 = exp(-2 sum (2tau/T_i)^x_i) + C` (magnitude mode) to `(2tau, A_e)` samples.
pub fn fit_stretched(data: &[(f64, f64)], opts: &StretchedOptions) -> Result<DecayFit> {
    validate_decay_data(data, 8)?;
    if opts.components.is_empty() {
        return Err(Error::Input("at least one decay component is required".into()));
    }
    let mode = opts.averaging.mode;
    let t: Vec<f64> = data.iter().map(|d| d.0).collect();
    let y: Vec<f64> = match mode {
        AveragingMode::PhaseSensitive => data.iter().map(|d| d.1).collect(),
        AveragingMode::Magnitude => data.iter().map(|d| d.1 * d.1).collect(),
    };
    let ymax = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(ymax > 0.0) || ymin > 0.1 * ymax {
        return Err(Error::Input("samples must span at least one decade of decay".into()));
    }

    let result = fit_stretched_with_offset(&t, &y, opts, mode, opts.fixed_offset)?;
    if mode == AveragingMode::Magnitude && opts.fixed_offset.is_none() && result.offset_c < 0.0 {
        let mut clamped = fit_stretched_with_offset(&t, &y, opts, mode, Some(0.0))?;
        clamped.offset_clamped = true;
        return Ok(clamped);
    }
    Ok(result)
}

fn fit_stretched_with_offset(
    t: &[f64],
    y: &[f64],
    opts: &StretchedOptions,
    mode: AveragingMode,
    fixed_offset: Option<f64>,
) -> Result<DecayFit> {
    let layout = StretchedLayout::new(&opts.components, mode, fixed_offset);
    let problem = StretchedProblem { t: t.to_vec(), y: y.to_vec(), layout: &layout, mode };

    // C from the tail, T2 from the 1/e crossing of the offset-free amplitude.
    let tail = (y.len() / 10).max(1);
    let c0 = match layout.offset {
        Slot::Free(_) => (y[y.len() - tail..].iter().sum::<f64>() / tail as f64).max(0.0),
        Slot::Fixed(c) => c,
    };
    let amp: Vec<f64> = match mode {
        AveragingMode::PhaseSensitive => y.to_vec(),
        AveragingMode::Magnitude => y.iter().map(|v| (v - c0).max(0.0).sqrt()).collect(),
    };
    let t_e = crossing_time(t, &amp, (-1.0f64).exp()).unwrap_or(t[t.len() - 1]);
    let n_free_components = opts.components.iter().filter(|c| c.t2_s.fixed().is_none()).count().max(1);
    // independent mechanisms add rates, so each free term starts slower than the total
    let t_guess = t_e.max(f64::MIN_POSITIVE) * n_free_components as f64;

    let base: Vec<f64> = {
        let mut p = vec![0.0; layout.n_free];
        for ((ts, xs), spec) in layout.slots.iter().zip(&opts.components) {
            if let Slot::Free(k) = *ts {
                p[k] = match spec.t2_s {
                    Param::Free(Some(v)) => v,
                    _ => t_guess,
                };
            }
            if let Slot::Free(k) = *xs {
                p[k] = match spec.x {
                    Param::Free(Some(v)) => v,
                    _ => 2.0,
                };
            }
        }
        if let Slot::Free(k) = layout.offset {
            p[k] = c0;
        }
        p
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![base.clone()];
    for _ in 1..opts.n_starts.max(1) {
        let mut p = base.clone();
        for (ts, xs) in &layout.slots {
            if let Slot::Free(k) = *ts {
                p[k] *= 2f64.powf(rng.random_range(-1.0..1.0));
            }
            if let Slot::Free(k) = *xs {
                p[k] = rng.random_range(1.0..3.0);
            }
        }
        starts.push(p);
    }

    if layout.n_free == 0 {
        let mut buf = vec![0.0; y.len()];
        let ssr = ssr_at(&problem, &[], &mut buf);
        return Ok(assemble_decay_fit(&layout, &opts.components, mode, &LmReport {
            params: vec![],
            errors: vec![],
            covariance: vec![],
            ssr,
            initial_ssr: ssr,
            iterations: 0,
        }));
    }

    let outcomes: Vec<Result<LmReport>> = starts.par_iter().map(|p0| levenberg_marquardt(&problem, p0, &opts.lm)).collect();
    let mut best: Option<LmReport> = None;
    let mut last_err = None;
    for o in outcomes {
        match o {
            Ok(r) => {
                if best.as_ref().map_or(true, |b| r.ssr < b.ssr) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let mut report = best.ok_or_else(|| last_err.expect("at least one start ran"))?;
    // report the heuristic start's cost as the reference initial residual
    let mut buf = vec![0.0; y.len()];
    report.initial_ssr = ssr_at(&problem, &starts[0], &mut buf);
    Ok(assemble_decay_fit(&layout, &opts.components, mode, &report))
}

fn assemble_decay_fit(layout: &StretchedLayout, specs: &[ComponentSpec], mode: AveragingMode, r: &LmReport) -> DecayFit {
    let value = |s: &Slot| s.get(&r.params);
    let error = |s: &Slot| match *s {
        Slot::Free(k) => r.errors[k],
        Slot::Fixed(_) => 0.0,
    };
    let components = layout
        .slots
        .iter()
        .zip(specs)
        .map(|((ts, xs), spec)| FittedComponent {
            t2_s: value(ts),
            x: value(xs),
            t2_err: error(ts),
            x_err: error(xs),
            t2_fixed: spec.t2_s.fixed().is_some(),
            x_fixed: spec.x.fixed().is_some(),
        })
        .collect();
    DecayFit {
        components,
        offset_c: value(&layout.offset),
        offset_c_err: error(&layout.offset),
        offset_clamped: false,
        mode,
        param_names: layout.names.clone(),
        covariance: r.covariance.clone(),
        residual_norm: r.ssr.sqrt(),
        initial_residual_norm: r.initial_ssr.sqrt(),
        iterations: r.iterations,
    }
}

// ---------------------------------------------------------------------------
// Exponential recovery and Lorentzian

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub t1_s: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub t1_err: f64,
    pub amplitude_err: f64,
    pub offset_err: f64,
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
}

impl ExponentialFit {
    pub fn model(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (-t / self.t1_s).exp()
    }
}

/// `y = offset + amplitude exp(-t/T1)`; `amplitude` carries the sign, so
/// inversion-recovery and plain decay data are treated alike.
pub fn exponential_model(t: f64, p: &[f64]) -> f64 {
    p[2] + p[1] * (-t / p[0]).exp()
}

fn exponential_grad(t: f64, p: &[f64], g: &mut [f64]) {
    let e = (-t / p[0]).exp();
    g[0] = p[1] * e * t / (p[0] * p[0]);
    g[1] = e;
    g[2] = 1.0;
}

pub fn fit_exponential(data: &[(f64, f64)]) -> Result<ExponentialFit> {
    validate_decay_data(data, 5)?;
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t: Vec<f64> = sorted.iter().map(|d| d.0).collect();
    let y: Vec<f64> = sorted.iter().map(|d| d.1).collect();
    let offset0 = y[y.len() - 1];
    let amp0 = y[0] - offset0;
    if amp0 == 0.0 {
        return Err(Error::Input("data show no relaxation".into()));
    }
    let rel: Vec<f64> = y.iter().map(|v| (v - offset0) / amp0).collect();
    let span = t[t.len() - 1] - t[0];
    let t10 = crossing_time(&t, &rel, (-1.0f64).exp()).map(|x| x - t[0]).unwrap_or(span / 3.0).max(span * 1e-3);
    let problem = CurveModel {
        xs: t.clone(),
        ys: y,
        n_params: 3,
        f: exponential_model,
        grad: exponential_grad,
        feasible: Some(|p: &[f64]| p[0] > 0.0),
    };
    // amplitude referenced to t = 0
    let p0 = [t10, amp0 * (t[0] / t10).exp(), offset0];
    let r = levenberg_marquardt(&problem, &p0, &LmOptions::default())?;
    Ok(ExponentialFit {
        t1_s: r.params[0],
        amplitude: r.params[1],
        offset: r.params[2],
        t1_err: r.errors[0],
        amplitude_err: r.errors[1],
        offset_err: r.errors[2],
        residual_norm: r.ssr.sqrt(),
        initial_residual_norm: r.initial_ssr.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub center_err: f64,
    pub fwhm_err: f64,
    pub amplitude_err: f64,
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
}

/// `A / (1 + ((x - x0) / (w/2))^2)` with p = [x0, w, A].
pub fn lorentzian_model(x: f64, p: &[f64]) -> f64 {
    let u = 2.0 * (x - p[0]) / p[1];
    p[2] / (1.0 + u * u)
}

fn lorentzian_grad(x: f64, p: &[f64], g: &mut [f64]) {
    let u = 2.0 * (x - p[0]) / p[1];
    let den = 1.0 + u * u;
    let dmdu = -p[2] * 2.0 * u / (den * den);
    g[0] = dmdu * (-2.0 / p[1]);
    g[1] = dmdu * (-u / p[1]);
    g[2] = 1.0 / den;
}

pub fn fit_lorentzian(data: &[(f64, f64)]) -> Result<LorentzianFit> {
    validate_decay_data(data, 5)?;
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x: Vec<f64> = sorted.iter().map(|d| d.0).collect();
    let y: Vec<f64> = sorted.iter().map(|d| d.1).collect();
    let (kmax, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if kmax == 0 || kmax == y.len() - 1 {
        return Err(Error::Input("samples must bracket the peak".into()));
    }
    let half = 0.5 * ymax;
    let left = (0..kmax).rev().find(|&k| y[k] < half).map(|k| x[k]).unwrap_or(x[0]);
    let right = (kmax..y.len()).find(|&k| y[k] < half).map(|k| x[k]).unwrap_or(x[x.len() - 1]);
    let w0 = (right - left).abs().max((x[x.len() - 1] - x[0]) * 1e-3);
    let problem = CurveModel {
        xs: x.clone(),
        ys: y,
        n_params: 3,
        f: lorentzian_model,
        grad: lorentzian_grad,
        feasible: Some(|p: &[f64]| p[1] > 0.0),
    };
    let r = levenberg_marquardt(&problem, &[x[kmax], w0, ymax], &LmOptions::default())?;
    Ok(LorentzianFit {
        center: r.params[0],
        fwhm: r.params[1],
        amplitude: r.params[2],
        center_err: r.errors[0],
        fwhm_err: r.errors[1],
        amplitude_err: r.errors[2],
        residual_norm: r.ssr.sqrt(),
        initial_residual_norm: r.initial_ssr.sqrt(),
    })
}

/// Central finite-difference Jacobian, for validating analytic ones.
pub fn finite_difference_jacobian<P: LeastSquares + ?Sized>(problem: &P, p: &[f64], rel_step: f64) -> DMatrix<f64> {
    let n = problem.targets().len();
    let m = problem.n_params();
    let mut jac = DMatrix::zeros(n, m);
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for k in 0..m {
        let h = rel_step * p[k].abs().max(1e-12);
        let mut pp = p.to_vec();
        pp[k] += h;
        problem.eval(&pp, &mut plus);
        pp[k] = p[k] - h;
        problem.eval(&pp, &mut minus);
        for i in 0..n {
            jac[(i, k)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

/// Analytic Jacobian of the single-component stretched model, exposed for checks.
pub fn stretched_jacobian(two_tau: &[f64], mode: AveragingMode, params: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let layout = StretchedLayout::new(&[ComponentSpec::free()], mode, None);
    let problem = StretchedProblem { t: two_tau.to_vec(), y: vec![0.0; two_tau.len()], layout: &layout, mode };
    let mut jac = DMatrix::zeros(two_tau.len(), layout.n_free);
    problem.jacobian(params, &mut jac);
    (jac, finite_difference_jacobian(&problem, params, 1e-6))
}
