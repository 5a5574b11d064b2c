//! Least-squares fits and calibration arithmetic for the measured traces.
//!
//! All nonlinear fits share one damped Gauss-Newton (Levenberg-Marquardt)
//! loop with analytic Jacobians. Parameter uncertainties come from the
//! pseudo-inverse of J'J at the optimum scaled by the residual variance.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const GRADIENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    /// One standard deviation.
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<FitParameter>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the data cannot determine the model (flat trace, zero amplitude, ...).
    pub degenerate: Option<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Value of a named parameter; panics if the fit does not define it.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name)
            .unwrap_or_else(|| panic!("fit has no parameter {name}"))
            .value
    }

    pub fn uncertainty(&self, name: &str) -> f64 {
        self.get(name)
            .unwrap_or_else(|| panic!("fit has no parameter {name}"))
            .uncertainty
    }

    /// Index k of the peak whose fitted `center_k` lies closest to `f`.
    pub fn peak_nearest(&self, f: f64) -> Option<usize> {
        (0..)
            .map_while(|k| self.get(&format!("center_{k}")).map(|c| (k, (c.value - f).abs())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
    }

    fn degenerate(names: &[(&str, f64)], reason: impl Into<String>) -> Self {
        Self {
            parameters: names
                .iter()
                .map(|(n, v)| FitParameter {
                    name: (*n).to_string(),
                    value: *v,
                    uncertainty: f64::INFINITY,
                })
                .collect(),
            residual_norm: 0.0,
            converged: false,
            iterations: 0,
            degenerate: Some(reason.into()),
        }
    }
}

/// Outcome of the damped least-squares loop.
#[derive(Debug, Clone)]
pub struct LeastSquaresOutcome {
    pub params: Vec<f64>,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl LeastSquaresOutcome {
    pub fn residual_norm(&self) -> f64 {
        self.residuals.norm()
    }

    /// One-sigma uncertainties from s^2 (J'J)^+ with s^2 = |r|^2 / (m - n).
    pub fn uncertainties(&self) -> Vec<f64> {
        let m = self.residuals.len();
        let n = self.params.len();
        let dof = m.saturating_sub(n).max(1) as f64;
        let s2 = self.residuals.norm_squared() / dof;
        let jtj = self.jacobian.transpose() * &self.jacobian;
        let cov = pseudo_inverse(&jtj);
        (0..n).map(|i| (s2 * cov[(i, i)]).max(0.0).sqrt()).collect()
    }
}

fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = max_sv * 1e-14 * a.nrows().max(1) as f64;
    svd.pseudo_inverse(cutoff)
        .unwrap_or_else(|_| DMatrix::from_element(a.nrows(), a.ncols(), f64::INFINITY))
}

/// Minimizes |r(p)|^2 with Marquardt-scaled damping.
///
/// `model` returns the residual vector and its Jacobian. The damping grows
/// tenfold whenever a step fails to lower the cost and shrinks tenfold on
/// success. The loop stops when the scaled gradient, the relative step or
/// the relative cost reduction falls below tolerance.
pub fn least_squares<F>(model: F, p0: &[f64]) -> LeastSquaresOutcome
where
    F: Fn(&[f64]) -> (DVector<f64>, DMatrix<f64>),
{
    const STEP_TOL: f64 = 1e-12;
    const COST_TOL: f64 = 1e-15;
    let mut params = p0.to_vec();
    let (mut r, mut j) = model(&params);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        let grad = j.transpose() * &r;
        if cost == 0.0 || gradient_small(&grad, &j, &r) {
            converged = true;
            break;
        }
        iterations += 1;
        let jtj = j.transpose() * &j;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(ch) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = ch.solve(&(-&grad));
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            let (rt, jt) = model(&trial);
            let trial_cost = rt.norm_squared();
            if trial_cost.is_finite() && trial_cost <= cost {
                let small_step = step
                    .iter()
                    .zip(&params)
                    .all(|(s, p)| s.abs() <= STEP_TOL * (p.abs() + STEP_TOL));
                let small_gain = cost - trial_cost <= COST_TOL * cost;
                params = trial;
                r = rt;
                j = jt;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if small_step || (small_gain && lambda <= 1e-3) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // Even a vanishing gradient step fails to lower the cost: the
            // point is stationary at working precision.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    LeastSquaresOutcome {
        params,
        residuals: r,
        jacobian: j,
        converged,
        iterations,
    }
}

fn gradient_small(grad: &DVector<f64>, j: &DMatrix<f64>, r: &DVector<f64>) -> bool {
    let rn = r.norm();
    grad.iter().enumerate().all(|(k, g)| {
        let scale = j.column(k).norm() * rn;
        g.abs() <= GRADIENT_TOL * scale
    })
}

fn check_series(t: &[f64], y: &[f64], min_points: usize) -> Result<()> {
    if t.len() != y.len() {
        return Err(Error::Domain(format!(
            "abscissa has {} points, data has {}",
            t.len(),
            y.len()
        )));
    }
    if t.len() < min_points {
        return Err(Error::Domain(format!(
            "need at least {min_points} points, got {}",
            t.len()
        )));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("abscissa must be strictly increasing".into()));
    }
    if y.iter().chain(t).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite sample".into()));
    }
    Ok(())
}

fn data_range(y: &[f64]) -> (f64, f64) {
    y.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn is_flat(y: &[f64]) -> bool {
    let (lo, hi) = data_range(y);
    let scale = lo.abs().max(hi.abs()).max(1e-300);
    hi - lo <= 1e-12 * scale
}

/// Ordinary least-squares line with standard errors and R^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_err: f64,
    pub intercept_err: f64,
    /// `None` when the data has no variance to explain.
    pub r_squared: Option<f64>,
    pub residual_std: f64,
}

pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Domain("linear regression needs >= 2 paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Singularity("all abscissae are equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let s2 = ss_res / dof;
    let sumsq: f64 = x.iter().map(|v| v * v).sum();
    let r_squared = if syy > 1e-300 * n { Some(1.0 - ss_res / syy) } else { None };
    Ok(LinearFit {
        slope,
        intercept,
        slope_err: (s2 / sxx).sqrt(),
        intercept_err: (s2 * sumsq / (n * sxx)).sqrt(),
        r_squared,
        residual_std: s2.sqrt(),
    })
}

/// Fits a e^{-t/T} + c.
///
/// Internally the decay rate 1/T is fitted so that a vanishing decay stays
/// finite. The starting point comes from a log-linear regression on the
/// data shifted by its extreme value.
pub fn fit_exponential(t: &[f64], y: &[f64]) -> Result<FitResult> {
    check_series(t, y, 4)?;
    if is_flat(y) {
        return Ok(FitResult::degenerate(
            &[("amplitude", 0.0), ("T", f64::INFINITY), ("offset", y[0])],
            "constant data: decay time unbounded",
        ));
    }
    let (lo, hi) = data_range(y);
    let range = hi - lo;
    let quarter = (y.len() / 4).max(1);
    let head: f64 = y[..quarter].iter().sum::<f64>() / quarter as f64;
    let tail: f64 = y[y.len() - quarter..].iter().sum::<f64>() / quarter as f64;
    let decaying_down = head >= tail;
    let c0 = if decaying_down { lo - 1e-3 * range } else { hi + 1e-3 * range };
    let sign = if decaying_down { 1.0 } else { -1.0 };
    // Weighted log-linear regression: ln(sign (y - c0)) = ln|a| - k t.
    let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&ti, &yi) in t.iter().zip(y) {
        let v = sign * (yi - c0);
        if v <= 0.0 {
            continue;
        }
        let w = v * v;
        let ly = v.ln();
        sw += w;
        swx += w * ti;
        swy += w * ly;
        swxx += w * ti * ti;
        swxy += w * ti * ly;
    }
    let det = sw * swxx - swx * swx;
    let span = t[t.len() - 1] - t[0];
    let (mut k0, mut lna) = if det.abs() > 1e-300 {
        let slope = (sw * swxy - swx * swy) / det;
        (-slope, (swy - slope * swx) / sw)
    } else {
        (3.0 / span, (range).ln())
    };
    if !(k0 > 0.0) || !k0.is_finite() {
        k0 = 3.0 / span;
        lna = range.ln();
    }
    let a0 = sign * lna.exp();

    let tt = t.to_vec();
    let yy = y.to_vec();
    let model = move |p: &[f64]| {
        let (a, k, c) = (p[0], p[1], p[2]);
        let m = tt.len();
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, 3);
        for i in 0..m {
            let e = (-k * tt[i]).exp();
            r[i] = a * e + c - yy[i];
            j[(i, 0)] = e;
            j[(i, 1)] = -a * tt[i] * e;
            j[(i, 2)] = 1.0;
        }
        (r, j)
    };
    let out = least_squares(model, &[a0, k0, c0]);
    let err = out.uncertainties();
    let (a, k, c) = (out.params[0], out.params[1], out.params[2]);
    let mut degenerate = None;
    if !(k > 0.0) {
        degenerate = Some("non-positive decay rate".to_string());
    }
    Ok(FitResult {
        parameters: vec![
            FitParameter { name: "amplitude".into(), value: a, uncertainty: err[0] },
            FitParameter { name: "T".into(), value: 1.0 / k, uncertainty: err[1] / (k * k) },
            FitParameter { name: "offset".into(), value: c, uncertainty: err[2] },
        ],
        residual_norm: out.residual_norm(),
        converged: out.converged,
        iterations: out.iterations,
        degenerate,
    })
}

/// Frequency of the largest discrete Fourier component of `y - mean(y)`,
/// scanned up to the Nyquist frequency of the coarsest sample spacing and
/// refined by a parabola through the peak bin.
pub fn fourier_peak(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let span = t[n - 1] - t[0];
    let max_dt = t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let nyquist = 0.5 / max_dt;
    let df = 1.0 / (4.0 * span);
    let bins = (nyquist / df).floor() as usize;
    let power = |f: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (&ti, &yi) in t.iter().zip(y) {
            let ph = 2.0 * PI * f * ti;
            re += (yi - mean) * ph.cos();
            im += (yi - mean) * ph.sin();
        }
        re * re + im * im
    };
    let spectrum: Vec<f64> = (0..=bins).map(|k| power(k as f64 * df)).collect();
    let (best, _) = spectrum
        .iter()
        .enumerate()
        .skip(1)
        .fold((1usize, f64::NEG_INFINITY), |acc, (k, &p)| if p > acc.1 { (k, p) } else { acc });
    let mut f = best as f64 * df;
    if best + 1 < spectrum.len() {
        let (a, b, c) = (spectrum[best - 1], spectrum[best], spectrum[best + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() > 0.0 {
            f += 0.5 * (a - c) / denom * df;
        }
    }
    (f, nyquist)
}

/// Fits a e^{-t/T2s} cos(2 pi f t + phi) + c.
///
/// The frequency is seeded from the Fourier peak, the decay from the
/// Fourier amplitude of the two halves of the trace, and amplitude and
/// phase from a linear solve with those two fixed.
pub fn fit_damped_cosine(t: &[f64], y: &[f64]) -> Result<FitResult> {
    check_series(t, y, 8)?;
    let names = ["amplitude", "T2s", "freq", "phase", "offset"];
    if is_flat(y) {
        return Ok(FitResult::degenerate(
            &[
                (names[0], 0.0),
                (names[1], f64::NAN),
                (names[2], f64::NAN),
                (names[3], f64::NAN),
                (names[4], y[0]),
            ],
            "zero oscillation amplitude",
        ));
    }
    let n = t.len();
    let span = t[n - 1] - t[0];
    let (f0, nyquist) = fourier_peak(t, y);
    if f0 >= 0.95 * nyquist {
        return Err(Error::Sampling(format!(
            "dominant frequency {f0:.4} GHz is at the Nyquist limit {nyquist:.4} GHz"
        )));
    }
    if f0 * span < 1.0 {
        return Err(Error::Sampling(format!(
            "trace spans {:.2} oscillations at the seeded {f0:.4} GHz; need at least one",
            f0 * span
        )));
    }

    let half = n / 2;
    let amp_at = |ts: &[f64], ys: &[f64]| {
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (&ti, &yi) in ts.iter().zip(ys) {
            let ph = 2.0 * PI * f0 * ti;
            re += (yi - mean) * ph.cos();
            im += (yi - mean) * ph.sin();
        }
        (re * re + im * im).sqrt() / ys.len() as f64
    };
    let a1 = amp_at(&t[..half], &y[..half]);
    let a2 = amp_at(&t[half..], &y[half..]);
    let centre1 = 0.5 * (t[0] + t[half - 1]);
    let centre2 = 0.5 * (t[half] + t[n - 1]);
    let mut k0 = if a1 > a2 && a2 > 0.0 {
        (a1 / a2).ln() / (centre2 - centre1)
    } else {
        1.0 / span
    };
    k0 = k0.clamp(0.02 / span, 50.0 / span);

    // Linear solve for (A cos, A sin, c) at fixed f0 and k0.
    let mut design = DMatrix::zeros(n, 3);
    for i in 0..n {
        let e = (-k0 * t[i]).exp();
        let ph = 2.0 * PI * f0 * t[i];
        design[(i, 0)] = e * ph.cos();
        design[(i, 1)] = -e * ph.sin();
        design[(i, 2)] = 1.0;
    }
    let rhs = DVector::from_column_slice(y);
    let lin = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Singularity(e.to_string()))?;
    let a0 = (lin[0] * lin[0] + lin[1] * lin[1]).sqrt();
    let phi0 = lin[1].atan2(lin[0]);
    let c0 = lin[2];

    let tt = t.to_vec();
    let yy = y.to_vec();
    let model = move |p: &[f64]| {
        let (a, k, f, phi, c) = (p[0], p[1], p[2], p[3], p[4]);
        let m = tt.len();
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, 5);
        for i in 0..m {
            let e = (-k * tt[i]).exp();
            let ph = 2.0 * PI * f * tt[i] + phi;
            let (s, co) = ph.sin_cos();
            r[i] = a * e * co + c - yy[i];
            j[(i, 0)] = e * co;
            j[(i, 1)] = -a * tt[i] * e * co;
            j[(i, 2)] = -a * e * s * 2.0 * PI * tt[i];
            j[(i, 3)] = -a * e * s;
            j[(i, 4)] = 1.0;
        }
        (r, j)
    };
    let out = least_squares(model, &[a0, k0, f0, phi0, c0]);
    let err = out.uncertainties();
    let (mut a, k, f, mut phi, c) = (
        out.params[0],
        out.params[1],
        out.params[2],
        out.params[3],
        out.params[4],
    );
    if a < 0.0 {
        a = -a;
        phi += PI;
    }
    phi = wrap_phase(phi);
    let degenerate = if a <= 1e-12 * (c.abs().max(1e-300)) {
        Some("zero oscillation amplitude".to_string())
    } else if !(k > 0.0) {
        Some("non-positive decay rate".to_string())
    } else {
        None
    };
    Ok(FitResult {
        parameters: vec![
            FitParameter { name: names[0].into(), value: a, uncertainty: err[0] },
            FitParameter { name: names[1].into(), value: 1.0 / k, uncertainty: err[1] / (k * k) },
            FitParameter { name: names[2].into(), value: f, uncertainty: err[2] },
            FitParameter { name: names[3].into(), value: phi, uncertainty: err[3] },
            FitParameter { name: names[4].into(), value: c, uncertainty: err[4] },
        ],
        residual_norm: out.residual_norm(),
        converged: out.converged,
        iterations: out.iterations,
        degenerate,
    })
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Gaussian with half-width at half-maximum `hwhm`.
pub fn gaussian_hwhm(x: f64, center: f64, hwhm: f64, amplitude: f64) -> f64 {
    let d = (x - center) / hwhm;
    amplitude * (-LN_2 * d * d).exp()
}

/// Sum of Gaussian peaks plus a constant; parameters are
/// `[center_i, sigma_i, amplitude_i]...` followed by the offset.
pub fn peaks_model(x: f64, params: &[f64]) -> f64 {
    let n = (params.len() - 1) / 3;
    let mut v = params[params.len() - 1];
    for i in 0..n {
        v += gaussian_hwhm(x, params[3 * i], params[3 * i + 1], params[3 * i + 2]);
    }
    v
}

fn local_maxima(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let smooth: Vec<f64> = if n >= 20 {
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(n - 1);
                y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect()
    } else {
        y.to_vec()
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        // Treat plateaus as a single candidate at their centre.
        let mut j = i;
        while j + 1 < n && smooth[j + 1] == smooth[i] {
            j += 1;
        }
        let left_ok = i == 0 || smooth[i - 1] < smooth[i];
        let right_ok = j + 1 == n || smooth[j + 1] < smooth[i];
        if left_ok && right_ok && (i > 0 || j + 1 < n) {
            out.push((i + j) / 2);
        }
        i = j + 1;
    }
    out
}

/// Multi-Gaussian fit with peaks seeded from the tallest local maxima.
pub fn fit_peaks(f: &[f64], y: &[f64], n_peaks: usize) -> Result<FitResult> {
    check_series(f, y, 4)?;
    if n_peaks == 0 {
        return Err(Error::Domain("need at least one peak".into()));
    }
    if is_flat(y) {
        let mut names: Vec<(String, f64)> = Vec::new();
        for i in 0..n_peaks {
            names.push((format!("center_{i}"), f64::NAN));
            names.push((format!("sigma_{i}"), f64::NAN));
            names.push((format!("amplitude_{i}"), 0.0));
        }
        names.push(("offset".into(), y[0]));
        let refs: Vec<(&str, f64)> = names.iter().map(|(n, v)| (n.as_str(), *v)).collect();
        return Ok(FitResult::degenerate(&refs, "flat spectrum: zero peak amplitude"));
    }
    let mut maxima = local_maxima(y);
    maxima.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    let min_sep = 2usize;
    let mut chosen: Vec<usize> = Vec::new();
    for m in maxima {
        if chosen.iter().all(|&c| c.abs_diff(m) > min_sep) {
            chosen.push(m);
        }
        if chosen.len() == n_peaks {
            break;
        }
    }
    if chosen.len() < n_peaks {
        return Err(Error::Seeding(format!(
            "requested {n_peaks} peaks but only {} resolvable maxima",
            chosen.len()
        )));
    }
    let seeds: Vec<f64> = chosen.iter().map(|&i| f[i]).collect();
    fit_peaks_seeded(f, y, &seeds)
}

/// Multi-Gaussian fit starting from the given peak centres.
pub fn fit_peaks_seeded(f: &[f64], y: &[f64], centers: &[f64]) -> Result<FitResult> {
    check_series(f, y, 3 * centers.len() + 1)?;
    let (lo, hi) = data_range(y);
    let baseline = lo;
    let step = (f[f.len() - 1] - f[0]) / (f.len() - 1) as f64;
    let mut p0 = Vec::with_capacity(3 * centers.len() + 1);
    let mut order: Vec<f64> = centers.to_vec();
    order.sort_by(|a, b| a.total_cmp(b));
    let span = f[f.len() - 1] - f[0];
    for (k, &c) in order.iter().enumerate() {
        let idx = nearest_index(f, c);
        let height = (y[idx] - baseline).max(1e-3 * (hi - lo));
        // Half-maximum crossings on each side; the nearer one is the least
        // contaminated by overlapping neighbours.
        let half = baseline + 0.5 * height;
        let mut l = idx;
        while l > 0 && y[l] > half {
            l -= 1;
        }
        let mut r = idx;
        while r + 1 < y.len() && y[r] > half {
            r += 1;
        }
        let mut sides = Vec::with_capacity(2);
        if y[l] <= half {
            sides.push(f[idx] - f[l]);
        }
        if y[r] <= half {
            sides.push(f[r] - f[idx]);
        }
        let mut width = sides.into_iter().fold(0.5 * span, f64::min);
        let neighbour = order
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, o)| (o - c).abs())
            .fold(f64::INFINITY, f64::min);
        width = width.min(0.5 * neighbour).max(step);
        p0.extend_from_slice(&[f[idx], width, height]);
    }
    p0.push(baseline);

    let ff = f.to_vec();
    let yy = y.to_vec();
    let np = p0.len();
    let model = move |p: &[f64]| {
        let m = ff.len();
        let mut r = DVector::zeros(m);
        let mut j = DMatrix::zeros(m, np);
        let npk = (np - 1) / 3;
        for i in 0..m {
            let x = ff[i];
            let mut v = p[np - 1];
            for k in 0..npk {
                let (c, s, a) = (p[3 * k], p[3 * k + 1], p[3 * k + 2]);
                let d = (x - c) / s;
                let g = (-LN_2 * d * d).exp();
                v += a * g;
                j[(i, 3 * k)] = a * g * 2.0 * LN_2 * d / s;
                j[(i, 3 * k + 1)] = a * g * 2.0 * LN_2 * d * d / s;
                j[(i, 3 * k + 2)] = g;
            }
            j[(i, np - 1)] = 1.0;
            r[i] = v - yy[i];
        }
        (r, j)
    };
    let out = least_squares(model, &p0);
    let err = out.uncertainties();
    let mut parameters = Vec::with_capacity(np);
    let npk = (np - 1) / 3;
    for k in 0..npk {
        parameters.push(FitParameter {
            name: format!("center_{k}"),
            value: out.params[3 * k],
            uncertainty: err[3 * k],
        });
        parameters.push(FitParameter {
            name: format!("sigma_{k}"),
            value: out.params[3 * k + 1].abs(),
            uncertainty: err[3 * k + 1],
        });
        parameters.push(FitParameter {
            name: format!("amplitude_{k}"),
            value: out.params[3 * k + 2],
            uncertainty: err[3 * k + 2],
        });
    }
    parameters.push(FitParameter {
        name: "offset".into(),
        value: out.params[np - 1],
        uncertainty: err[np - 1],
    });
    let wandered = (0..npk).find(|&k| {
        let (c, w) = (out.params[3 * k], out.params[3 * k + 1].abs());
        !(c >= f[0] && c <= f[f.len() - 1] && w <= span)
    });
    Ok(FitResult {
        parameters,
        residual_norm: out.residual_norm(),
        converged: out.converged,
        iterations: out.iterations,
        degenerate: wandered.map(|k| format!("peak {k} left the scan or outgrew it")),
    })
}

fn nearest_index(xs: &[f64], x: f64) -> usize {
    xs.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Photon-number calibration from the Stark-shifted qubit line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarkCalibration {
    /// Qubit frequency extrapolated to zero readout photons (GHz).
    pub f_ge0: f64,
    /// Per-photon shift implied by the data, signed like the fitted slope (GHz).
    pub chi_fit: f64,
    pub photons_per_milliwatt: f64,
    pub slope_ghz_per_mw: f64,
    pub r_squared: Option<f64>,
    pub warnings: Vec<String>,
}

/// Fits centre = f_ge0 - chi k P and converts the slope into photons per mW
/// using the known dispersive shift.
pub fn stark_calibration(powers_mw: &[f64], centers_ghz: &[f64], chi_known: f64) -> Result<StarkCalibration> {
    if powers_mw.len() < 3 || powers_mw.len() != centers_ghz.len() {
        return Err(Error::Domain("need at least three paired power/centre points".into()));
    }
    if chi_known == 0.0 {
        return Err(Error::Singularity("dispersive shift is zero".into()));
    }
    let lin = linear_regression(powers_mw, centers_ghz)?;
    let k = (-lin.slope / chi_known).abs();
    let chi_fit = if k > 0.0 { -lin.slope / k } else { 0.0 };
    let mut warnings = Vec::new();
    if lin.r_squared.is_none() {
        warnings.push("no variance in centres: R^2 undefined".to_string());
    }
    if k > 0.0 && chi_fit.signum() != chi_known.signum() {
        warnings.push("fitted shift has the opposite sign of the device dispersive shift".to_string());
    }
    // Monotonicity beyond noise: successive steps against the fitted trend.
    let mut idx: Vec<usize> = (0..powers_mw.len()).collect();
    idx.sort_by(|&a, &b| powers_mw[a].total_cmp(&powers_mw[b]));
    let trend = lin.slope.signum();
    let noise = 3.0 * lin.residual_std;
    let reversals = idx
        .windows(2)
        .filter(|w| {
            let d = centers_ghz[w[1]] - centers_ghz[w[0]];
            trend != 0.0 && d * trend < 0.0 && d.abs() > noise.max(1e-15)
        })
        .count();
    if reversals > 0 {
        warnings.push(format!("{reversals} non-monotone centre step(s) beyond noise"));
    }
    Ok(StarkCalibration {
        f_ge0: lin.intercept,
        chi_fit,
        photons_per_milliwatt: k,
        slope_ghz_per_mw: lin.slope,
        r_squared: lin.r_squared,
        warnings,
    })
}

/// Square of the power-broadened linewidth, (2 pi sigma)^2 = 1/T2^2 + n (2 pi g)^2 T1/T2.
///
/// `sigma_ghz` is the half-width at half-maximum; `g_ghz` is the bare coupling.
pub fn broadened_hwhm(n_s: f64, t1_ns: f64, t2_ns: f64, g_ghz: f64) -> f64 {
    let g = 2.0 * PI * g_ghz;
    (1.0 / (t2_ns * t2_ns) + n_s * g * g * t1_ns / t2_ns).sqrt() / (2.0 * PI)
}

/// Extracts T2 from the intercept and T1 from the slope of (2 pi sigma)^2 vs n_s.
pub fn power_broadening_fit(n_s: &[f64], sigma_ghz: &[f64], g_ghz: f64) -> Result<FitResult> {
    if n_s.len() < 3 || n_s.len() != sigma_ghz.len() {
        return Err(Error::Domain("need at least three paired drive/width points".into()));
    }
    if let Some(s) = sigma_ghz.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Domain(format!("linewidth {s} must be positive")));
    }
    let y: Vec<f64> = sigma_ghz.iter().map(|s| (2.0 * PI * s).powi(2)).collect();
    let lin = linear_regression(n_s, &y)?;
    if !(lin.intercept > 0.0) {
        return Err(Error::Unphysical(format!(
            "intercept {:.3e} ns^-2 is not positive",
            lin.intercept
        )));
    }
    let t2 = 1.0 / lin.intercept.sqrt();
    let t2_err = 0.5 * lin.intercept_err * lin.intercept.powf(-1.5);
    let g2 = (2.0 * PI * g_ghz).powi(2);
    let t1 = lin.slope * t2 / g2;
    let t1_err = ((lin.slope_err * t2).powi(2) + (lin.slope * t2_err).powi(2)).sqrt() / g2;
    let degenerate = if lin.slope <= 0.0 {
        Some("no power broadening: relaxation time unresolved".to_string())
    } else {
        None
    };
    let residual_norm = lin.residual_std * ((n_s.len() as f64 - 2.0).max(1.0)).sqrt();
    Ok(FitResult {
        parameters: vec![
            FitParameter { name: "T2".into(), value: t2, uncertainty: t2_err },
            FitParameter { name: "T1".into(), value: t1.max(0.0), uncertainty: t1_err },
            FitParameter { name: "intercept".into(), value: lin.intercept, uncertainty: lin.intercept_err },
            FitParameter { name: "slope".into(), value: lin.slope, uncertainty: lin.slope_err },
        ],
        residual_norm,
        converged: true,
        iterations: 1,
        degenerate,
    })
}

/// Pure dephasing time from 1/T2* = 1/Tphi + 1/(2 T1).
pub fn dephasing_decomposition(t1_ns: f64, t2s_ns: f64) -> Result<f64> {
    if !(t1_ns > 0.0) || !(t2s_ns > 0.0) {
        return Err(Error::Domain("coherence times must be positive".into()));
    }
    if t2s_ns > 2.0 * t1_ns {
        return Err(Error::Unphysical(format!(
            "T2* = {t2s_ns} ns exceeds 2 T1 = {} ns",
            2.0 * t1_ns
        )));
    }
    let rate = 1.0 / t2s_ns - 1.0 / (2.0 * t1_ns);
    Ok(if rate <= 0.0 { f64::INFINITY } else { 1.0 / rate })
}

/// Ramsey time implied by T1 and Tphi.
pub fn ramsey_time(t1_ns: f64, tphi_ns: f64) -> f64 {
    1.0 / (1.0 / tphi_ns + 1.0 / (2.0 * t1_ns))
}

/// Q = 2 pi f01 T1.
pub fn quality_factor(f01_ghz: f64, t1_ns: f64) -> Result<f64> {
    if !(f01_ghz > 0.0) || !(t1_ns > 0.0) {
        return Err(Error::Domain("frequency and T1 must be positive".into()));
    }
    Ok(2.0 * PI * f01_ghz * t1_ns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn exponential_self_consistent() {
        let t = grid(0.0, 60.0, 50);
        let y: Vec<f64> = t.iter().map(|t| (-t / 15.849).exp()).collect();
        let fit = fit_exponential(&t, &y).unwrap();
        assert!(fit.converged);
        assert!(rel(fit.value("T"), 15.849) < 1e-6);
        assert!(rel(fit.value("amplitude"), 1.0) < 1e-6);
        assert!(fit.value("offset").abs() < 1e-6);
    }

    #[test]
    fn exponential_with_offset_and_rise() {
        let t = grid(0.0, 40.0, 30);
        let y: Vec<f64> = t.iter().map(|t| 0.3 - 0.7 * (-t / 8.0).exp()).collect();
        let fit = fit_exponential(&t, &y).unwrap();
        assert!(rel(fit.value("T"), 8.0) < 1e-6);
        assert!(rel(fit.value("amplitude"), -0.7) < 1e-6);
    }

    #[test]
    fn exponential_degenerate_and_errors() {
        let t = grid(0.0, 10.0, 10);
        let fit = fit_exponential(&t, &[0.4; 10]).unwrap();
        assert!(fit.degenerate.is_some());
        assert!(fit.value("T").is_infinite());
        assert!(!fit.converged);
        assert!(fit_exponential(&t[..3], &[1.0, 0.5, 0.2]).is_err());
        assert!(fit_exponential(&[0.0, 2.0, 1.0, 3.0], &[1.0, 0.5, 0.2, 0.1]).is_err());
    }

    #[test]
    fn exponential_noisy() {
        let t = grid(0.0, 60.0, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let y: Vec<f64> = t.iter().map(|t| (-t / 15.849).exp() + noise.sample(&mut rng)).collect();
        let fit = fit_exponential(&t, &y).unwrap();
        assert!(fit.converged);
        assert!(rel(fit.value("T"), 15.849) < 0.05, "{}", fit.value("T"));
        assert!(fit.uncertainty("T") > 0.0);
    }

    #[test]
    fn damped_cosine_self_consistent() {
        let t = grid(0.0, 60.0, 241);
        let y: Vec<f64> = t
            .iter()
            .map(|t| 0.4 * (-t / 17.466).exp() * (2.0 * PI * 0.32 * t + 0.3).cos() + 0.5)
            .collect();
        let fit = fit_damped_cosine(&t, &y).unwrap();
        assert!(fit.converged);
        assert!(rel(fit.value("freq"), 0.32) < 1e-6);
        assert!(rel(fit.value("T2s"), 17.466) < 1e-6);
        assert!((fit.value("phase") - 0.3).abs() < 1e-6);
    }

    #[test]
    fn damped_cosine_phase_pi() {
        let t = grid(0.0, 30.0, 151);
        let y: Vec<f64> = t
            .iter()
            .map(|t| 0.4 * (-t / 10.0).exp() * (2.0 * PI * 0.2 * t + PI).cos())
            .collect();
        let fit = fit_damped_cosine(&t, &y).unwrap();
        assert!((wrap_phase(fit.value("phase") - PI)).abs() < 1e-6);
        assert!(fit.value("amplitude") > 0.0);
    }

    #[test]
    fn damped_cosine_guards() {
        let t = grid(0.0, 10.0, 20);
        let flat = fit_damped_cosine(&t, &[0.5; 20]).unwrap();
        assert!(flat.degenerate.is_some());
        // 0.9 GHz sampled every ~0.53 ns aliases to the Nyquist edge or below it.
        let y: Vec<f64> = t.iter().map(|t| (2.0 * PI * 0.94 * t).cos()).collect();
        assert!(matches!(fit_damped_cosine(&t, &y), Err(Error::Sampling(_))));
        let slow: Vec<f64> = t.iter().map(|t| (2.0 * PI * 0.02 * t).cos()).collect();
        assert!(matches!(fit_damped_cosine(&t, &slow), Err(Error::Sampling(_))));
    }

    #[test]
    fn single_gaussian() {
        let f = grid(71.9, 72.3, 201);
        let y: Vec<f64> = f.iter().map(|x| gaussian_hwhm(*x, 72.137, 0.010, 1.0)).collect();
        let fit = fit_peaks(&f, &y, 1).unwrap();
        assert!(rel(fit.value("sigma_0"), 0.010) < 1e-6);
        assert!((fit.value("center_0") - 72.137).abs() < 1e-9);
    }

    #[test]
    fn two_overlapping_gaussians() {
        let f = grid(71.8, 72.3, 251);
        let y: Vec<f64> = f
            .iter()
            .map(|x| gaussian_hwhm(*x, 72.137, 0.030, 1.0) + gaussian_hwhm(*x, 72.023, 0.030, 0.5))
            .collect();
        let fit = fit_peaks(&f, &y, 2).unwrap();
        let mut centers = [fit.value("center_0"), fit.value("center_1")];
        centers.sort_by(f64::total_cmp);
        assert!((centers[0] - 72.023).abs() < 1e-3);
        assert!((centers[1] - 72.137).abs() < 1e-3);
    }

    #[test]
    fn peak_guards() {
        let f = grid(0.0, 1.0, 30);
        let flat = fit_peaks(&f, &[0.0; 30], 1).unwrap();
        assert!(flat.degenerate.is_some());
        let y: Vec<f64> = f.iter().map(|x| gaussian_hwhm(*x, 0.5, 0.1, 1.0)).collect();
        assert!(matches!(fit_peaks(&f, &y, 3), Err(Error::Seeding(_))));
    }

    #[test]
    fn merged_lines_keep_their_widths() {
        let f = grid(71.80, 72.25, 226);
        let lines = [(71.909, 0.18), (72.023, 0.12), (72.137, 0.30)];
        let y: Vec<f64> = f
            .iter()
            .map(|x| lines.iter().map(|(c, a)| gaussian_hwhm(*x, *c, 0.052, *a)).sum())
            .collect();
        let centers: Vec<f64> = lines.iter().map(|l| l.0).collect();
        let fit = fit_peaks_seeded(&f, &y, &centers).unwrap();
        assert!(fit.degenerate.is_none());
        for k in 0..3 {
            assert!(rel(fit.value(&format!("sigma_{k}")), 0.052) < 1e-6);
        }
        assert_eq!(fit.peak_nearest(72.14), Some(2));
        assert_eq!(fit.peak_nearest(0.0), Some(0));
    }

    #[test]
    fn wandering_peak_is_flagged() {
        let f = grid(0.0, 1.0, 101);
        // A background ramp is best absorbed by a line centred past the edge.
        let y: Vec<f64> = f
            .iter()
            .map(|x| gaussian_hwhm(*x, 0.5, 0.05, 1.0) + 0.8 * x * x)
            .collect();
        let fit = fit_peaks_seeded(&f, &y, &[0.5, 0.95]).unwrap();
        assert!(fit.value("center_1") > 1.0);
        assert!(fit.degenerate.is_some());
    }

    #[test]
    fn stark_linear() {
        let chi = -0.230e-3;
        let k = 100.0;
        let p = [0.0, 0.5, 1.0, 1.5, 2.0];
        let c: Vec<f64> = p.iter().map(|p| 72.137 - chi * k * p).collect();
        let cal = stark_calibration(&p, &c, chi).unwrap();
        assert!(rel(cal.photons_per_milliwatt, k) < 1e-9);
        assert!(rel(cal.chi_fit, chi) < 1e-9);
        assert!((cal.f_ge0 - 72.137).abs() < 1e-12);
        assert!(cal.warnings.is_empty());
        let p2: Vec<f64> = p.iter().map(|p| 2.0 * p).collect();
        let cal2 = stark_calibration(&p2, &c, chi).unwrap();
        assert!(rel(cal2.photons_per_milliwatt, k / 2.0) < 1e-9);
        let flat = stark_calibration(&p, &[72.1; 5], chi).unwrap();
        assert_eq!(flat.photons_per_milliwatt, 0.0);
        assert!(flat.r_squared.is_none());
    }

    #[test]
    fn stark_non_monotone_warns() {
        let p = [0.0, 1.0, 2.0, 3.0, 4.0];
        let c = [72.0, 71.9, 72.05, 71.7, 71.6];
        let cal = stark_calibration(&p, &c, -0.23e-3).unwrap();
        assert!(!cal.warnings.is_empty());
    }

    #[test]
    fn power_broadening_round_trip() {
        let g = 0.607979;
        let n: Vec<f64> = grid(0.0, 3e-4, 7);
        let s: Vec<f64> = n.iter().map(|n| broadened_hwhm(*n, 47.3, 20.9, g)).collect();
        let fit = power_broadening_fit(&n, &s, g).unwrap();
        assert!(rel(fit.value("T2"), 20.9) < 1e-6);
        assert!(rel(fit.value("T1"), 47.3) < 1e-6);
        let scaled: Vec<f64> = n.iter().map(|v| v * 3.0).collect();
        let fit3 = power_broadening_fit(&scaled, &s, g).unwrap();
        assert!(rel(fit3.value("T1"), 47.3 / 3.0) < 1e-6);
        let flat = power_broadening_fit(&n, &[0.01; 7], g).unwrap();
        assert!(flat.degenerate.is_some());
        assert_eq!(flat.value("T1"), 0.0);
    }

    #[test]
    fn power_broadening_rejects_negative_intercept() {
        let n = [1.0, 2.0, 3.0];
        let s: Vec<f64> = n.iter().map(|n: &f64| (n - 0.5).sqrt() / (2.0 * PI)).collect();
        assert!(matches!(power_broadening_fit(&n, &s, 0.6), Err(Error::Unphysical(_))));
    }

    #[test]
    fn dephasing_and_quality() {
        let tphi = dephasing_decomposition(15.849, 17.466).unwrap();
        assert!((tphi - 38.90).abs() < 0.01, "{tphi}");
        assert!(dephasing_decomposition(10.0, 20.0).unwrap().is_infinite());
        assert!(matches!(dephasing_decomposition(10.0, 20.1), Err(Error::Unphysical(_))));
        let t2s = ramsey_time(15.849, tphi);
        assert!((t2s - 17.466).abs() < 1e-12);
        assert!(rel(ramsey_time(10.0, 1e12), 20.0) < 1e-9);

        let q = quality_factor(72.137, 15.849).unwrap();
        assert!(rel(q, 7.18e3) < 2e-3);
        assert!(rel(quality_factor(72.137, 31.698).unwrap(), 2.0 * q) < 1e-12);
        assert!((quality_factor(1.0 / (2.0 * PI), 1.0).unwrap() - 1.0).abs() < 1e-15);
    }
}
