//! One-port admittance networks, admittance-zero mode finding and
//! Purcell-limited lifetimes.
//!
//! Admittances use the e^{-i w t} convention: a capacitor is -i w C and an
//! inductor i/(w L), matching the junction branch -i w C_J + i/(w L_J).
//! Frequencies passed in are angular (rad/s); lifetimes come back in seconds
//! unless the name says otherwise.

use std::f64::consts::PI;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::device::josephson_inductance;
use crate::error::{Error, Result};
use crate::protocols::{Axis, SweepResult};

/// Points in the sign scan of [`mode_frequencies`].
pub const DEFAULT_SCAN_POINTS: usize = 1001;
const ROOT_RTOL: f64 = 1e-13;
const DERIV_RSTEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionBranch {
    pub l_j_h: f64,
    pub c_j_f: f64,
}

impl JunctionBranch {
    pub fn new(l_j_h: f64, c_j_f: f64) -> Result<Self> {
        if !(l_j_h > 0.0) || !(c_j_f > 0.0) {
            return Err(Error::Domain(format!(
                "junction needs positive L_J and C_J, got {l_j_h} H and {c_j_f} F"
            )));
        }
        Ok(Self { l_j_h, c_j_f })
    }

    /// Branch with L_J from a Josephson energy in GHz and C_J in fF.
    pub fn from_device(ej_ghz: f64, c_j_ff: f64) -> Result<Self> {
        Self::new(josephson_inductance(ej_ghz)?, c_j_ff * 1e-15)
    }

    pub fn plasma_omega(&self) -> f64 {
        1.0 / (self.l_j_h * self.c_j_f).sqrt()
    }

    /// The same capacitance with the inductance scaled by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            l_j_h: self.l_j_h * s,
            c_j_f: self.c_j_f,
        }
    }
}

/// -i w C_J + i/(w L_J).
pub fn junction_admittance(omega: f64, j: &JunctionBranch) -> Result<Complex64> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("omega {omega} rad/s must be positive")));
    }
    Ok(Complex64::new(0.0, 1.0 / (omega * j.l_j_h) - omega * j.c_j_f))
}

/// Admittance samples on a frequency grid, interpolated with natural cubic splines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmittanceTable {
    pub freq_ghz: Vec<f64>,
    pub re_s: Vec<f64>,
    pub im_s: Vec<f64>,
    #[serde(skip)]
    re_m: Vec<f64>,
    #[serde(skip)]
    im_m: Vec<f64>,
}

impl AdmittanceTable {
    pub fn new(freq_ghz: Vec<f64>, re_s: Vec<f64>, im_s: Vec<f64>) -> Result<Self> {
        if freq_ghz.len() < 2 || freq_ghz.len() != re_s.len() || freq_ghz.len() != im_s.len() {
            return Err(Error::Domain(
                "admittance table needs at least two rows of (GHz, Re Y, Im Y)".into(),
            ));
        }
        if freq_ghz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("table frequencies must be strictly increasing".into()));
        }
        if freq_ghz[0] <= 0.0 {
            return Err(Error::Domain("table frequencies must be positive".into()));
        }
        let re_m = spline_moments(&freq_ghz, &re_s);
        let im_m = spline_moments(&freq_ghz, &im_s);
        Ok(Self {
            freq_ghz,
            re_s,
            im_s,
            re_m,
            im_m,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        text.parse()
    }

    pub fn omega_range(&self) -> (f64, f64) {
        let to_w = |f: f64| 2.0 * PI * f * 1e9;
        (to_w(self.freq_ghz[0]), to_w(*self.freq_ghz.last().unwrap()))
    }

    pub fn eval(&self, omega: f64) -> Result<Complex64> {
        let (lo, hi) = self.omega_range();
        let slack = 1e-12 * hi;
        if !(omega >= lo - slack && omega <= hi + slack) {
            return Err(Error::Extrapolation { omega, lo, hi });
        }
        if self.re_m.len() != self.freq_ghz.len() {
            // Deserialized without moments.
            let rebuilt = Self::new(self.freq_ghz.clone(), self.re_s.clone(), self.im_s.clone())?;
            return rebuilt.eval(omega);
        }
        let f = (omega / (2.0 * PI * 1e9)).clamp(self.freq_ghz[0], *self.freq_ghz.last().unwrap());
        Ok(Complex64::new(
            spline_eval(&self.freq_ghz, &self.re_s, &self.re_m, f),
            spline_eval(&self.freq_ghz, &self.im_s, &self.im_m, f),
        ))
    }
}

impl FromStr for AdmittanceTable {
    type Err = Error;

    /// Three whitespace- or comma-separated columns; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self> {
        let (mut f, mut re, mut im) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected 3 columns, found {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {s:?}: {e}", lineno + 1)))
            };
            f.push(num(cols[0])?);
            re.push(num(cols[1])?);
            im.push(num(cols[2])?);
        }
        Self::new(f, re, im)
    }
}

/// Second-derivative moments of the natural cubic spline through (x, y).
fn spline_moments(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Tridiagonal system for interior moments (Thomas algorithm).
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for i in 0..k {
        let h0 = x[i + 1] - x[i];
        let h1 = x[i + 2] - x[i + 1];
        diag[i] = 2.0 * (h0 + h1);
        upper[i] = h1;
        rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
    }
    for i in 1..k {
        let lower = x[i + 1] - x[i];
        let w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    for i in (0..k).rev() {
        let next = if i + 1 < k { m[i + 2] } else { 0.0 };
        m[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
    }
    m
}

fn spline_eval(x: &[f64], y: &[f64], m: &[f64], t: f64) -> f64 {
    let i = match x.partition_point(|v| *v <= t) {
        0 => 0,
        p => (p - 1).min(x.len() - 2),
    };
    let h = x[i + 1] - x[i];
    let a = (x[i + 1] - t) / h;
    let b = (t - x[i]) / h;
    a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0
}

/// Series/parallel composition of lumped elements and tabulated admittances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CircuitNetwork {
    Resistor { ohm: f64 },
    Inductor { henry: f64 },
    Capacitor { farad: f64 },
    Series { elements: Vec<CircuitNetwork> },
    Parallel { elements: Vec<CircuitNetwork> },
    Table { table: AdmittanceTable },
}

impl CircuitNetwork {
    pub fn resistor(ohm: f64) -> Self {
        Self::Resistor { ohm }
    }

    pub fn inductor(henry: f64) -> Self {
        Self::Inductor { henry }
    }

    pub fn capacitor(farad: f64) -> Self {
        Self::Capacitor { farad }
    }

    pub fn series(elements: Vec<CircuitNetwork>) -> Self {
        Self::Series { elements }
    }

    pub fn parallel(elements: Vec<CircuitNetwork>) -> Self {
        Self::Parallel { elements }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Resistor { ohm: v } | Self::Inductor { henry: v } | Self::Capacitor { farad: v } => {
                if !(*v >= 0.0) {
                    return Err(Error::Domain(format!("element value {v} must be non-negative")));
                }
            }
            Self::Series { elements } | Self::Parallel { elements } => {
                if elements.is_empty() {
                    return Err(Error::Domain("empty series/parallel group".into()));
                }
                for e in elements {
                    e.validate()?;
                }
            }
            Self::Table { .. } => {}
        }
        Ok(())
    }
}

const OPEN: Complex64 = Complex64::new(0.0, 0.0);

/// Input admittance at angular frequency `omega` (siemens).
///
/// Zero-valued R or L are shorts (infinite admittance); a zero C is open.
pub fn network_admittance(net: &CircuitNetwork, omega: f64) -> Result<Complex64> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("omega {omega} rad/s must be positive")));
    }
    let inf = Complex64::new(f64::INFINITY, 0.0);
    Ok(match net {
        CircuitNetwork::Resistor { ohm } => {
            if *ohm == 0.0 {
                inf
            } else {
                Complex64::new(1.0 / ohm, 0.0)
            }
        }
        CircuitNetwork::Inductor { henry } => {
            if *henry == 0.0 {
                inf
            } else {
                Complex64::new(0.0, 1.0 / (omega * henry))
            }
        }
        CircuitNetwork::Capacitor { farad } => Complex64::new(0.0, -omega * farad),
        CircuitNetwork::Parallel { elements } => {
            let mut y = OPEN;
            for e in elements {
                y += network_admittance(e, omega)?;
            }
            y
        }
        CircuitNetwork::Series { elements } => {
            let mut z = OPEN;
            for e in elements {
                let y = network_admittance(e, omega)?;
                if y == OPEN {
                    return Ok(OPEN);
                }
                if y.re.is_infinite() {
                    continue;
                }
                z += y.inv();
            }
            if z == OPEN {
                inf
            } else {
                z.inv()
            }
        }
        CircuitNetwork::Table { table } => table.eval(omega)?,
    })
}

/// Network plus junction branch, as seen across the junction.
pub fn total_admittance(net: &CircuitNetwork, j: &JunctionBranch, omega: f64) -> Result<Complex64> {
    Ok(network_admittance(net, omega)? + junction_admittance(omega, j)?)
}

/// Zeros of Im Y_total on `bracket` (rad/s), ascending.
///
/// Sign changes on an evenly spaced scan are refined by bisection; a
/// sign change where |Im Y| grows during refinement is a pole and is dropped.
pub fn mode_frequencies(
    net: &CircuitNetwork,
    j: &JunctionBranch,
    bracket: (f64, f64),
) -> Result<Vec<f64>> {
    mode_frequencies_with(net, j, bracket, DEFAULT_SCAN_POINTS)
}

pub fn mode_frequencies_with(
    net: &CircuitNetwork,
    j: &JunctionBranch,
    bracket: (f64, f64),
    scan_points: usize,
) -> Result<Vec<f64>> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo) || scan_points < 2 {
        return Err(Error::Domain(format!("invalid bracket [{lo}, {hi}] rad/s")));
    }
    let im = |w: f64| total_admittance(net, j, w).map(|y| y.im);
    let xs: Vec<f64> = (0..scan_points)
        .map(|i| lo + (hi - lo) * i as f64 / (scan_points - 1) as f64)
        .collect();
    let mut ys = Vec::with_capacity(scan_points);
    for &x in &xs {
        ys.push(im(x)?);
    }
    let mut roots = Vec::new();
    for k in 0..scan_points - 1 {
        let (mut a, mut b) = (xs[k], xs[k + 1]);
        let (mut fa, fb) = (ys[k], ys[k + 1]);
        if fa == 0.0 {
            if roots.last().is_none_or(|r: &f64| (a - r).abs() > 1e-12 * a) {
                roots.push(a);
            }
            continue;
        }
        if fa.signum() == fb.signum() || fb == 0.0 {
            continue;
        }
        let scale = fa.abs().max(fb.abs());
        while (b - a) > ROOT_RTOL * b {
            let m = 0.5 * (a + b);
            let fm = im(m)?;
            if fm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        let root = 0.5 * (a + b);
        if im(root)?.abs() <= scale {
            roots.push(root);
        }
    }
    if let Some(&last) = ys.last() {
        if last == 0.0 {
            roots.push(hi);
        }
    }
    Ok(roots)
}

fn derivative_im(net: &CircuitNetwork, j: &JunctionBranch, omega: f64) -> Result<f64> {
    let im = |w: f64| total_admittance(net, j, w).map(|y| y.im);
    let central = |h: f64| -> Result<f64> { Ok((im(omega + h)? - im(omega - h)?) / (2.0 * h)) };
    let h = DERIV_RSTEP * omega;
    let d1 = central(h)?;
    let d2 = central(0.5 * h)?;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// T_P = -(1/2) Im Y'(w_q) / Re Y(w_q) in seconds.
///
/// The minus sign belongs to the e^{-i w t} convention, where a capacitor
/// contributes -C to Im Y'. For R || L || C at resonance this gives R C.
pub fn purcell_time(net: &CircuitNetwork, j: &JunctionBranch, omega_q: f64) -> Result<f64> {
    let y = total_admittance(net, j, omega_q)?;
    if !(y.re > 0.0) {
        return Err(Error::LosslessNetwork(y.re));
    }
    let d = derivative_im(net, j, omega_q)?;
    Ok(-0.5 * d / y.re)
}

/// Dispersive Purcell estimate Delta^2 / (g^2 kappa) / (2 pi) in ns.
///
/// Inputs in GHz; a vanishing g or kappa returns infinity.
pub fn analytic_purcell(g_ghz: f64, delta_ghz: f64, kappa_ghz: f64) -> Result<f64> {
    if !g_ghz.is_finite() || !delta_ghz.is_finite() || !kappa_ghz.is_finite() {
        return Err(Error::Domain("non-finite Purcell input".into()));
    }
    if delta_ghz == 0.0 {
        return Err(Error::Singularity("resonant qubit and resonator".into()));
    }
    if g_ghz == 0.0 || kappa_ghz == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(delta_ghz * delta_ghz / (g_ghz * g_ghz * kappa_ghz.abs()) / (2.0 * PI))
}

/// Lumped stand-in for the measured device: the junction (L_J, C_q) couples
/// through C_c to a parallel L_r C_r R resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalentCircuit {
    pub junction: JunctionBranch,
    pub c_c_f: f64,
    pub l_r_h: f64,
    pub c_r_f: f64,
    pub r_ohm: f64,
}

impl EquivalentCircuit {
    /// Element values reproducing bare frequencies, coupling and linewidth.
    ///
    /// The qubit inductance is chosen so the bare LC resonance sits at
    /// `f_q_ghz`; C_c follows from g = (C_c / 2 sqrt(C_q C_r)) sqrt(w_q w_r)
    /// and R from kappa = 1/(2 pi R C_r).
    pub fn from_couplings(
        f_q_ghz: f64,
        c_q_f: f64,
        f_r_ghz: f64,
        c_r_f: f64,
        g_ghz: f64,
        kappa_ghz: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("f_q", f_q_ghz),
            ("C_q", c_q_f),
            ("f_r", f_r_ghz),
            ("C_r", c_r_f),
            ("g", g_ghz),
            ("kappa", kappa_ghz),
        ] {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("{name} = {v} must be positive")));
            }
        }
        let wq = 2.0 * PI * f_q_ghz * 1e9;
        let wr = 2.0 * PI * f_r_ghz * 1e9;
        let g = 2.0 * PI * g_ghz * 1e9;
        let c_c = 2.0 * g * (c_q_f * c_r_f).sqrt() / (wq * wr).sqrt();
        Ok(Self {
            junction: JunctionBranch::new(1.0 / (wq * wq * c_q_f), c_q_f)?,
            c_c_f: c_c,
            l_r_h: 1.0 / (wr * wr * c_r_f),
            c_r_f,
            r_ohm: 1.0 / (2.0 * PI * kappa_ghz * 1e9 * c_r_f),
        })
    }

    pub fn network(&self) -> CircuitNetwork {
        CircuitNetwork::series(vec![
            CircuitNetwork::capacitor(self.c_c_f),
            CircuitNetwork::parallel(vec![
                CircuitNetwork::inductor(self.l_r_h),
                CircuitNetwork::capacitor(self.c_r_f),
                CircuitNetwork::resistor(self.r_ohm),
            ]),
        ])
    }
}

/// Mode nearest the junction's own resonance.
pub fn qubit_like_mode(net: &CircuitNetwork, j: &JunctionBranch, bracket: (f64, f64)) -> Result<Option<f64>> {
    let w0 = j.plasma_omega();
    let roots = mode_frequencies(net, j, bracket)?;
    Ok(roots
        .into_iter()
        .min_by(|a, b| (a - w0).abs().total_cmp(&(b - w0).abs())))
}

/// Reference values for the dispersive estimate alongside a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersiveReference {
    pub g_ghz: f64,
    pub f_r_ghz: f64,
    pub kappa_ghz: f64,
}

/// Purcell time of the qubit-like mode (ns) as the junction inductance is scaled.
///
/// Points without a mode in the bracket, or with a lossless admittance,
/// report NaN.
pub fn purcell_sweep(
    net: &CircuitNetwork,
    junction: &JunctionBranch,
    scales: &[f64],
    bracket_ghz: (f64, f64),
    reference: Option<DispersiveReference>,
) -> Result<SweepResult> {
    if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Domain("junction scales must be positive and non-empty".into()));
    }
    let bracket = (2.0 * PI * bracket_ghz.0 * 1e9, 2.0 * PI * bracket_ghz.1 * 1e9);
    let mut values = Vec::with_capacity(scales.len());
    let mut freqs = Vec::with_capacity(scales.len());
    let mut analytic = Vec::with_capacity(scales.len());
    for &s in scales {
        let j = junction.scaled(s);
        let mode = qubit_like_mode(net, &j, bracket)?;
        let (tp, f) = match mode {
            Some(w) => {
                let tp = match purcell_time(net, &j, w) {
                    Ok(t) => t * 1e9,
                    Err(Error::LosslessNetwork(_)) => f64::NAN,
                    Err(e) => return Err(e),
                };
                (tp, w / (2.0 * PI * 1e9))
            }
            None => (f64::NAN, f64::NAN),
        };
        values.push(tp);
        freqs.push(f);
        if let Some(r) = reference {
            analytic.push(if f.is_nan() {
                f64::NAN
            } else {
                analytic_purcell(r.g_ghz, f - r.f_r_ghz, r.kappa_ghz)?
            });
        }
    }
    let mut out = SweepResult {
        axes: vec![Axis::new("junction_scale", "1", scales.to_vec())],
        values,
        channels: Default::default(),
        metadata: crate::protocols::SweepMetadata {
            experiment: "purcell-sweep".into(),
            params_hash: String::new(),
        },
    };
    out.channels.insert("qubit_frequency_ghz".into(), freqs);
    if reference.is_some() {
        out.channels.insert("analytic_ns".into(), analytic);
    }
    Ok(out)
}
