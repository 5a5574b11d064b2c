//! Flat-top pulses with Gaussian edges and their rotating-frame drive terms.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{Operator, C64};

/// Gaussian edges are cut off this many sigma away from the flat top.
pub const EDGE_TRUNCATION: f64 = 2.5;

/// Readout window length used throughout the experiments (ns).
pub const READOUT_DURATION_NS: f64 = 20.0;

/// Which value to take where the envelope jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    /// Limit from earlier times.
    Left,
    /// Limit from later times.
    Right,
    /// Nonzero at both truncation points.
    Closed,
}

/// A flat-top drive with half-Gaussian rise and fall.
///
/// `omega0_ghz` is the peak Rabi rate Omega0/2pi; `detuning_ghz` is the
/// carrier frequency minus the rotating-frame frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEnvelope {
    pub tau_ns: f64,
    pub sigma_ns: f64,
    pub omega0_ghz: f64,
    #[serde(default)]
    pub detuning_ghz: f64,
    #[serde(default)]
    pub phase_rad: f64,
    #[serde(default)]
    pub t_start_ns: f64,
}

impl PulseEnvelope {
    pub fn new(tau_ns: f64, sigma_ns: f64, omega0_ghz: f64) -> Result<Self> {
        let p = Self {
            tau_ns,
            sigma_ns,
            omega0_ghz,
            detuning_ghz: 0.0,
            phase_rad: 0.0,
            t_start_ns: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_ns > 0.0) {
            return Err(Error::Domain(format!("sigma {} must be positive", self.sigma_ns)));
        }
        if !(self.tau_ns >= 0.0) {
            return Err(Error::Domain(format!("tau {} must be non-negative", self.tau_ns)));
        }
        if !(self.t_start_ns >= 0.0) {
            return Err(Error::Domain(format!(
                "start time {} must be non-negative",
                self.t_start_ns
            )));
        }
        Ok(())
    }

    pub fn with_start(mut self, t_start_ns: f64) -> Self {
        self.t_start_ns = t_start_ns;
        self
    }

    pub fn with_detuning(mut self, detuning_ghz: f64) -> Self {
        self.detuning_ghz = detuning_ghz;
        self
    }

    pub fn with_phase(mut self, phase_rad: f64) -> Self {
        self.phase_rad = phase_rad;
        self
    }

    pub fn with_amplitude(mut self, omega0_ghz: f64) -> Self {
        self.omega0_ghz = omega0_ghz;
        self
    }

    pub fn with_tau(mut self, tau_ns: f64) -> Self {
        self.tau_ns = tau_ns;
        self
    }

    fn edge(&self) -> f64 {
        EDGE_TRUNCATION * self.sigma_ns
    }

    /// Total support length tau + 2 * 2.5 sigma.
    pub fn duration(&self) -> f64 {
        self.tau_ns + 2.0 * self.edge()
    }

    pub fn t_end(&self) -> f64 {
        self.t_start_ns + self.duration()
    }

    /// Truncation jumps and the edge/flat-top joints, where the second derivative jumps.
    pub fn breakpoints(&self) -> [f64; 4] {
        let a = self.t_start_ns + self.edge();
        [self.t_start_ns, a, a + self.tau_ns, self.t_end()]
    }

    /// Envelope value at time `t` (GHz); both truncation points are inside the support.
    pub fn value(&self, t: f64) -> f64 {
        self.value_limit(t, Limit::Closed)
    }

    /// Envelope value with the given one-sided limit at the truncation jumps.
    pub fn value_limit(&self, t: f64, limit: Limit) -> f64 {
        let rel = t - self.t_start_ns;
        let edge = self.edge();
        let outside = match limit {
            Limit::Closed => rel < 0.0 || rel > self.duration(),
            Limit::Left => rel <= 0.0 || rel > self.duration(),
            Limit::Right => rel < 0.0 || rel >= self.duration(),
        };
        if outside {
            return 0.0;
        }
        let gauss = |x: f64| (-(x * x) / (2.0 * self.sigma_ns * self.sigma_ns)).exp();
        if rel < edge {
            self.omega0_ghz * gauss(rel - edge)
        } else if rel <= edge + self.tau_ns {
            self.omega0_ghz
        } else {
            self.omega0_ghz * gauss(rel - edge - self.tau_ns)
        }
    }

    /// Length of a flat pulse with the same integral: tau + sigma sqrt(2 pi) erf(2.5/sqrt 2).
    pub fn effective_duration(&self) -> f64 {
        self.tau_ns
            + self.sigma_ns * (2.0 * PI).sqrt() * libm::erf(EDGE_TRUNCATION / 2f64.sqrt())
    }

    /// Integral of the envelope over its support (dimensionless cycles).
    pub fn integral(&self) -> f64 {
        self.omega0_ghz * self.effective_duration()
    }

    /// Peak amplitude that makes the on-resonance rotation angle equal `area_rad`.
    pub fn amplitude_for_area(&self, area_rad: f64) -> f64 {
        area_rad / (2.0 * PI * self.effective_duration())
    }
}

/// Envelope value at time `t`.
pub fn envelope_value(p: &PulseEnvelope, t: f64) -> f64 {
    p.value(t)
}

/// On-resonance Bloch rotation angle 2 pi * integral of the envelope.
pub fn pulse_area(p: &PulseEnvelope) -> f64 {
    2.0 * PI * p.integral()
}

/// Monotone piecewise-linear map from requested to delivered amplitude.
///
/// Stands in for the amplitude nonlinearity of a mixer/multiplier chain.
/// An empty table is the identity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeMap {
    points: Vec<(f64, f64)>,
}

impl AmplitudeMap {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_points(mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in points.windows(2) {
            if w[1].0 == w[0].0 {
                return Err(Error::Domain(format!("duplicate amplitude point {}", w[0].0)));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::Domain("amplitude map must be monotone".into()));
            }
        }
        Ok(Self { points })
    }

    pub fn apply(&self, x: f64) -> f64 {
        let pts = &self.points;
        match pts.len() {
            0 => x,
            1 => pts[0].1 / pts[0].0 * x,
            _ => {
                let k = match pts.iter().position(|p| p.0 >= x) {
                    Some(0) => 1,
                    Some(k) => k,
                    None => pts.len() - 1,
                };
                let (x0, y0) = pts[k - 1];
                let (x1, y1) = pts[k];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveTarget {
    Qubit,
    Resonator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWindow {
    pub start_ns: f64,
    pub duration_ns: f64,
}

impl ReadoutWindow {
    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.duration_ns
    }
}

/// Ordered pulses followed by a readout window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub pulses: Vec<(PulseEnvelope, DriveTarget)>,
    pub readout: ReadoutWindow,
    #[serde(default)]
    pub allow_overlap: bool,
}

impl PulseSequence {
    /// Readout of the standard length placed right after the last qubit pulse.
    pub fn with_readout_after(pulses: Vec<(PulseEnvelope, DriveTarget)>) -> Result<Self> {
        let start = last_qubit_end(&pulses);
        let seq = Self {
            pulses,
            readout: ReadoutWindow {
                start_ns: start,
                duration_ns: READOUT_DURATION_NS,
            },
            allow_overlap: false,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        for (p, _) in &self.pulses {
            p.validate()?;
        }
        if !(self.readout.duration_ns > 0.0) || self.readout.start_ns < 0.0 {
            return Err(Error::Domain("readout window must be non-negative with positive length".into()));
        }
        let last = last_qubit_end(&self.pulses);
        if !self.allow_overlap && self.readout.start_ns < last - 1e-12 {
            return Err(Error::Ordering(format!(
                "readout starts at {} ns before the last qubit pulse ends at {last} ns",
                self.readout.start_ns
            )));
        }
        Ok(())
    }

    pub fn end_ns(&self) -> f64 {
        self.pulses
            .iter()
            .map(|(p, _)| p.t_end())
            .fold(self.readout.end_ns(), f64::max)
    }
}

fn last_qubit_end(pulses: &[(PulseEnvelope, DriveTarget)]) -> f64 {
    pulses
        .iter()
        .filter(|(_, t)| *t == DriveTarget::Qubit)
        .map(|(p, _)| p.t_end())
        .fold(0.0, f64::max)
}

/// One drive term (env(t)/2) (O e^{i theta(t)} + O' e^{-i theta(t)}),
/// theta(t) = 2 pi detuning t + phase.
#[derive(Debug, Clone)]
pub struct DriveTerm {
    pub envelope: PulseEnvelope,
    pub operator: Operator,
}

impl DriveTerm {
    /// Complex coefficient multiplying `operator`; its conjugate multiplies the adjoint.
    pub fn coefficient(&self, t: f64) -> C64 {
        self.coefficient_limit(t, Limit::Closed)
    }

    pub fn coefficient_limit(&self, t: f64, limit: Limit) -> C64 {
        let amp = 0.5 * self.envelope.value_limit(t, limit);
        if amp == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let theta = 2.0 * PI * self.envelope.detuning_ghz * t + self.envelope.phase_rad;
        C64::from_polar(amp, theta)
    }

    pub fn at(&self, t: f64) -> Operator {
        let c = self.coefficient(t);
        &self.operator.scale(c) + &self.operator.dagger().scale(c.conj())
    }
}

/// Rotating-frame drive term for a pulse acting through `target_operator`.
pub fn drive_hamiltonian(p: &PulseEnvelope, target_operator: &Operator) -> DriveTerm {
    DriveTerm {
        envelope: *p,
        operator: target_operator.clone(),
    }
}
