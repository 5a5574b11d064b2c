//! Synthetic versions of the spectroscopy, Rabi and coherence experiments.
//!
//! Time-domain protocols evolve the master equation once per grid point in
//! a frame rotating at the drive frequency and reduce each run to a readout
//! signal. Spectroscopy sweeps use closed-form line shapes, with an optional
//! steady-state solve for two-tone data.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::device::{
    critical_photon_number, dressed_shift, hamiltonian_on_modes, thermal_population, DeviceParams,
    SystemModes,
};
use crate::error::{Error, Result};
use crate::fit::ramsey_time;
use crate::lindblad::{
    bose_occupation, collapse_channels, evolve, steady_state, thermal_excitation_channel,
    CollapseChannel, EvolveOptions, TimeDependentHamiltonian, TimeGrid, Trajectory, DEFAULT_DT_NS,
};
use crate::operator::{expectation_real, Operator};
use crate::pulse::{drive_hamiltonian, PulseEnvelope, READOUT_DURATION_NS};

/// Largest grid a steady-state or chevron sweep will accept.
pub const MAX_GRID_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadoutMode {
    /// Window average of the qubit excitation number.
    Proxy,
    /// Saturating resonator pull x / sqrt(1 + x^2) with x = 2 chi n / kappa.
    DispersiveShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub chi_ghz: f64,
    pub duration_ns: f64,
    pub mode: ReadoutMode,
    /// Resonator linewidth, used only by the dispersive-shift mode.
    pub kappa_ghz: f64,
}

impl ReadoutModel {
    pub fn proxy(chi_ghz: f64) -> Self {
        Self {
            chi_ghz,
            duration_ns: READOUT_DURATION_NS,
            mode: ReadoutMode::Proxy,
            kappa_ghz: 0.0,
        }
    }

    pub fn for_device(params: &DeviceParams) -> Self {
        Self {
            kappa_ghz: params.kappa_ghz,
            ..Self::proxy(params.chi_ghz)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_ns > 0.0) {
            return Err(Error::Domain(format!(
                "readout duration {} ns must be positive",
                self.duration_ns
            )));
        }
        if self.mode == ReadoutMode::DispersiveShift && !(self.kappa_ghz > 0.0 && self.chi_ghz != 0.0) {
            return Err(Error::Domain(
                "dispersive-shift readout needs non-zero chi and positive kappa".into(),
            ));
        }
        Ok(())
    }

    fn pull(&self, n: f64) -> f64 {
        let x = 2.0 * self.chi_ghz.abs() * n / self.kappa_ghz;
        x / (1.0 + x * x).sqrt()
    }
}

/// chi * integral of <b'b> over the readout window, divided by chi * duration.
///
/// A qubit held in |1> reads 1 in either mode.
pub fn readout_signal(traj: &Trajectory, model: &ReadoutModel, window_start_ns: f64) -> Result<f64> {
    model.validate()?;
    let end = window_start_ns + model.duration_ns;
    let mean = traj.integrate_record("qubit_number", window_start_ns, end)? / model.duration_ns;
    Ok(match model.mode {
        ReadoutMode::Proxy => mean,
        ReadoutMode::DispersiveShift => model.pull(mean) / model.pull(1.0),
    })
}

/// Readout of |1> decaying with `t1_ns` from the start of the window, in proxy units.
pub fn excited_state_readout(t1_ns: f64, duration_ns: f64) -> f64 {
    if t1_ns.is_infinite() {
        return 1.0;
    }
    t1_ns / duration_ns * (1.0 - (-duration_ns / t1_ns).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: &str, unit: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub experiment: String,
    pub params_hash: String,
}

/// Values on the outer product of the axes, first axis slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
    /// Secondary per-point or per-row quantities keyed by name.
    pub channels: BTreeMap<String, Vec<f64>>,
    pub metadata: SweepMetadata,
}

impl SweepResult {
    fn new(experiment: &str, hash: u64, axes: Vec<Axis>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), axes.iter().map(|a| a.values.len()).product::<usize>());
        Self {
            axes,
            values,
            channels: BTreeMap::new(),
            metadata: SweepMetadata {
                experiment: experiment.into(),
                params_hash: format!("{hash:016x}"),
            },
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.values.len()).collect()
    }

    /// Value at a multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        let mut flat = 0;
        for (axis, &i) in self.axes.iter().zip(index) {
            flat = flat * axis.values.len() + i;
        }
        self.values[flat]
    }

    /// Row `i` of a two-axis sweep (fixed first-axis index).
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.axes.last().map_or(1, |a| a.values.len());
        &self.values[i * w..(i + 1) * w]
    }

    /// Column `j` of a two-axis sweep (fixed second-axis index).
    pub fn column(&self, j: usize) -> Vec<f64> {
        let w = self.axes[1].values.len();
        self.values.iter().skip(j).step_by(w).copied().collect()
    }

    /// Adds seeded Gaussian noise of standard deviation `amplitude` to every value.
    pub fn add_noise(&mut self, amplitude: f64, seed: u64) -> Result<()> {
        if !(amplitude >= 0.0) {
            return Err(Error::Domain(format!("noise amplitude {amplitude} must be >= 0")));
        }
        if amplitude == 0.0 {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, amplitude).map_err(|e| Error::Domain(e.to_string()))?;
        for v in &mut self.values {
            *v += normal.sample(&mut rng);
        }
        Ok(())
    }
}

/// Shifts a trace so that its smallest value is zero.
pub fn normalize_to_minimum(trace: &[f64]) -> Vec<f64> {
    let min = trace.iter().copied().fold(f64::INFINITY, f64::min);
    trace.iter().map(|v| v - min).collect()
}

/// Initial qubit state of the time-domain protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    #[default]
    Ground,
    /// Boltzmann populations at the device temperature.
    Thermal,
}

/// Truncation, step and readout shared by the time-domain protocols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub n_q: usize,
    pub n_r: usize,
    pub dt_ns: f64,
    pub readout: ReadoutModel,
    /// Externally induced qubit frequency shift (GHz), e.g. a Stark offset.
    pub qubit_offset_ghz: f64,
    pub initial: InitialState,
    /// Drop all collapse channels.
    pub undamped: bool,
}

impl Dynamics {
    pub fn for_device(params: &DeviceParams) -> Self {
        Self {
            n_q: 2,
            n_r: 1,
            dt_ns: DEFAULT_DT_NS,
            readout: ReadoutModel::for_device(params),
            qubit_offset_ghz: 0.0,
            initial: InitialState::Ground,
            undamped: false,
        }
    }

    pub fn with_levels(mut self, n_q: usize) -> Self {
        self.n_q = n_q;
        self
    }

    pub fn with_dt(mut self, dt_ns: f64) -> Self {
        self.dt_ns = dt_ns;
        self
    }

    pub fn undamped(mut self) -> Self {
        self.undamped = true;
        self
    }
}

/// The pieces of a time-domain run that do not depend on the grid point.
struct Simulator<'a> {
    params: &'a DeviceParams,
    dynamics: &'a Dynamics,
    modes: SystemModes,
    channels: Vec<CollapseChannel>,
    rho0: Operator,
}

impl<'a> Simulator<'a> {
    fn new(params: &'a DeviceParams, dynamics: &'a Dynamics) -> Result<Self> {
        dynamics.readout.validate()?;
        let modes = SystemModes::new(dynamics.n_q, dynamics.n_r)?;
        let channels = if dynamics.undamped {
            Vec::new()
        } else {
            collapse_channels(params.t1_ns, params.tphi_ns, params.kappa_ghz, &modes)?
        };
        let rho0 = match dynamics.initial {
            InitialState::Ground => modes.qubit_state(0)?,
            InitialState::Thermal => {
                modes.thermal_qubit_state(params.f01_ghz, params.alpha_ghz, params.temperature_k)?
            }
        };
        Ok(Self {
            params,
            dynamics,
            modes,
            channels,
            rho0,
        })
    }

    /// Applies `pulses` in a frame rotating at `drive_ghz`, then reads out
    /// for the model's duration starting at `readout_start`.
    fn run(&self, drive_ghz: f64, pulses: &[PulseEnvelope], readout_start: f64) -> Result<f64> {
        let h0 = hamiltonian_on_modes(self.params, &self.modes, drive_ghz, self.dynamics.qubit_offset_ghz);
        let mut ham = TimeDependentHamiltonian::constant(h0);
        for p in pulses {
            if p.omega0_ghz != 0.0 {
                ham = ham.with_drive(drive_hamiltonian(p, &self.modes.b));
            }
        }
        let end = readout_start + self.dynamics.readout.duration_ns;
        let grid = TimeGrid::new(0.0, end, self.dynamics.dt_ns)?;
        let traj = evolve(&self.rho0, &ham, &self.channels, &grid, EvolveOptions::final_only())?;
        readout_signal(&traj, &self.dynamics.readout, readout_start)
    }
}

fn check_grid(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Domain(format!("{name} grid is empty")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{name} grid has non-finite entries")));
    }
    Ok(())
}

fn guard(points: usize) -> Result<()> {
    if points > MAX_GRID_POINTS {
        return Err(Error::ResourceGuard(format!(
            "{points} grid points exceed the limit of {MAX_GRID_POINTS}"
        )));
    }
    Ok(())
}

/// FNV-1a over little-endian words, stable across platforms.
fn fingerprint(params: &DeviceParams, extra: &[&[f64]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: f64| {
        for b in x.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for v in [
        params.ej_ghz,
        params.ec_ghz,
        params.g_ghz,
        params.f_rr_bare_ghz,
        params.kappa_ghz,
        params.f01_ghz,
        params.alpha_ghz,
        params.delta_ghz,
        params.chi_ghz,
        params.c_j_ff,
        params.c_q_ff,
        params.j_c_ka_per_cm2,
        params.a_j_um2,
        params.t1_ns,
        params.tphi_ns,
        params.temperature_k,
    ] {
        eat(v);
    }
    for block in extra {
        eat(block.len() as f64);
        for &v in *block {
            eat(v);
        }
    }
    h
}

/// Mean photon number for a power in dB relative to one photon.
pub fn photons_from_db(p_db: f64) -> f64 {
    10f64.powf(p_db / 10.0)
}

/// Logistic crossover from 1 (dressed) to 0 (bare) in ln(n / n_crit).
pub fn punchout_crossover(n: f64, n_crit: f64) -> f64 {
    const WIDTH: f64 = 0.5;
    if n <= 0.0 {
        return 1.0;
    }
    1.0 / (1.0 + ((n / n_crit).ln() / WIDTH).exp())
}

/// Dip depth of the synthetic resonator transmission.
pub const PUNCHOUT_DIP_DEPTH: f64 = 0.9;

/// Transmission magnitude versus (power dB, probe GHz).
///
/// The dip sits at f_rr + (g^2/Delta) s(n) with s crossing from 1 to 0 at
/// the critical photon number; its full width is kappa.
pub fn run_punchout(params: &DeviceParams, probe_ghz: &[f64], power_db: &[f64]) -> Result<SweepResult> {
    check_grid("probe frequency", probe_ghz)?;
    check_grid("power", power_db)?;
    let shift = dressed_shift(params.g_ghz, params.delta_ghz)?;
    let n_crit = critical_photon_number(params.g_ghz, params.delta_ghz)?;
    let half = 0.5 * params.kappa_ghz;
    let mut values = Vec::with_capacity(probe_ghz.len() * power_db.len());
    let mut centers = Vec::with_capacity(power_db.len());
    for &p in power_db {
        let center = params.f_rr_bare_ghz + shift * punchout_crossover(photons_from_db(p), n_crit);
        centers.push(center);
        for &f in probe_ghz {
            let d = f - center;
            values.push(1.0 - PUNCHOUT_DIP_DEPTH * half * half / (d * d + half * half));
        }
    }
    let mut out = SweepResult::new(
        "punchout",
        fingerprint(params, &[probe_ghz, power_db]),
        vec![
            Axis::new("power", "dB", power_db.to_vec()),
            Axis::new("probe_frequency", "GHz", probe_ghz.to_vec()),
        ],
        values,
    );
    out.channels.insert("dip_center_ghz".into(), centers);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TwoToneMode {
    #[default]
    Analytic,
    MasterEquation,
}

/// Saturation parameter n (2 pi g)^2 T1 T2 of a probe carrying `n_s` photons.
pub fn saturation_parameter(n_s: f64, t1_ns: f64, t2_ns: f64, g_ghz: f64) -> f64 {
    n_s * (2.0 * PI * g_ghz).powi(2) * t1_ns * t2_ns
}

/// Centres of the f01, two-photon f02/2 and f12 lines.
pub fn two_tone_lines(params: &DeviceParams) -> [f64; 3] {
    let f01 = params.f01_ghz;
    let a = params.alpha_ghz;
    [f01, f01 + 0.5 * a, f01 + a]
}

/// Qubit spectroscopy versus (power dB, probe GHz).
///
/// Analytic mode sums Gaussian lines whose common half-width follows the
/// power-broadening law. With saturation s = S/(1+S), the f01 line has
/// height p0 s, the two-photon line p0 s^2 and the f12 line p1 s, where
/// p0, p1 are the thermal populations. Master-equation mode drives a
/// three-level qubit at rate g sqrt(n) and reports the steady-state
/// excitation.
pub fn run_two_tone(
    params: &DeviceParams,
    probe_ghz: &[f64],
    power_db: &[f64],
    mode: TwoToneMode,
) -> Result<SweepResult> {
    check_grid("probe frequency", probe_ghz)?;
    check_grid("power", power_db)?;
    let t1 = params.t1_ns;
    let t2 = ramsey_time(params.t1_ns, params.tphi_ns);
    let p1 = thermal_population(params.f01_ghz, params.temperature_k)?;
    let p0 = 1.0 - p1;
    let lines = two_tone_lines(params);
    let mut values = Vec::with_capacity(probe_ghz.len() * power_db.len());
    let mut widths = Vec::with_capacity(power_db.len());
    let photons: Vec<f64> = power_db.iter().map(|p| photons_from_db(*p)).collect();
    match mode {
        TwoToneMode::Analytic => {
            for &n in &photons {
                let s_param = saturation_parameter(n, t1, t2, params.g_ghz);
                let s = s_param / (1.0 + s_param);
                let sigma = crate::fit::broadened_hwhm(n, t1, t2, params.g_ghz);
                widths.push(sigma);
                let heights = [p0 * s, p0 * s * s, p1 * s];
                for &f in probe_ghz {
                    let v: f64 = lines
                        .iter()
                        .zip(heights)
                        .map(|(&c, h)| crate::fit::gaussian_hwhm(f, c, sigma, h))
                        .sum();
                    values.push(v);
                }
            }
        }
        TwoToneMode::MasterEquation => {
            guard(probe_ghz.len() * power_db.len())?;
            let modes = SystemModes::new(3, 1)?;
            let mut channels = collapse_channels(params.t1_ns, params.tphi_ns, 0.0, &modes)?;
            let nbar = bose_occupation(params.f01_ghz, params.temperature_k);
            if nbar > 0.0 && params.t1_ns.is_finite() {
                channels.push(thermal_excitation_channel(params.t1_ns, nbar, &modes)?);
            }
            let nb = modes.qubit_number();
            let drive = &modes.b + &modes.b.dagger();
            for &n in &photons {
                widths.push(crate::fit::broadened_hwhm(n, t1, t2, params.g_ghz));
                let omega = params.g_ghz * n.sqrt();
                for &f in probe_ghz {
                    let h0 = hamiltonian_on_modes(params, &modes, f, 0.0);
                    let h = &h0 + &drive.scale_real(0.5 * omega);
                    let rho = steady_state(&h, &channels)?;
                    values.push(expectation_real(&rho, &nb)?);
                }
            }
        }
    }
    let id = match mode {
        TwoToneMode::Analytic => "two-tone",
        TwoToneMode::MasterEquation => "two-tone-me",
    };
    let mut out = SweepResult::new(
        id,
        fingerprint(params, &[probe_ghz, power_db]),
        vec![
            Axis::new("probe_power", "dB", power_db.to_vec()),
            Axis::new("probe_frequency", "GHz", probe_ghz.to_vec()),
        ],
        values,
    );
    out.channels.insert("drive_photons".into(), photons);
    out.channels.insert("hwhm_ghz".into(), widths);
    Ok(out)
}

/// Resonant pi pulse of the given shape, amplitude set by its area.
pub fn calibrated_pulse(tau_ns: f64, sigma_ns: f64, area_rad: f64) -> Result<PulseEnvelope> {
    let p = PulseEnvelope::new(tau_ns, sigma_ns, 0.0)?;
    Ok(p.with_amplitude(p.amplitude_for_area(area_rad)))
}

/// Readout signal versus (drive GHz, flat-top length ns).
pub fn run_rabi_time(
    params: &DeviceParams,
    dynamics: &Dynamics,
    template: &PulseEnvelope,
    tau_ns: &[f64],
    drive_ghz: &[f64],
) -> Result<SweepResult> {
    check_grid("tau", tau_ns)?;
    check_grid("drive frequency", drive_ghz)?;
    template.validate()?;
    let sim = Simulator::new(params, dynamics)?;
    let mut values = Vec::with_capacity(tau_ns.len() * drive_ghz.len());
    for &f in drive_ghz {
        for &tau in tau_ns {
            let p = template.with_tau(tau).with_start(0.0);
            values.push(sim.run(f, &[p], p.t_end())?);
        }
    }
    Ok(SweepResult::new(
        "rabi-time",
        fingerprint(params, &[tau_ns, drive_ghz, &[dynamics.dt_ns, template.sigma_ns, template.omega0_ghz]]),
        vec![
            Axis::new("drive_frequency", "GHz", drive_ghz.to_vec()),
            Axis::new("tau", "ns", tau_ns.to_vec()),
        ],
        values,
    ))
}

/// The two chevron layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "kebab-case")]
pub enum ChevronGrid {
    /// Peak amplitude (GHz) against flat-top length at a fixed drive frequency.
    AmplitudeTau {
        amplitudes_ghz: Vec<f64>,
        tau_ns: Vec<f64>,
        drive_ghz: f64,
    },
    /// Drive frequency against peak amplitude at fixed pulse shape.
    FreqAmplitude {
        drive_ghz: Vec<f64>,
        amplitudes_ghz: Vec<f64>,
    },
}

/// Readout surface of a chevron; with three qubit levels the two-photon
/// 0-2 transition shows up near f01 + alpha/2.
pub fn run_chevron(
    params: &DeviceParams,
    dynamics: &Dynamics,
    template: &PulseEnvelope,
    grid: &ChevronGrid,
) -> Result<SweepResult> {
    template.validate()?;
    let sim = Simulator::new(params, dynamics)?;
    let shape = [dynamics.dt_ns, template.sigma_ns, template.tau_ns, dynamics.n_q as f64];
    match grid {
        ChevronGrid::AmplitudeTau {
            amplitudes_ghz,
            tau_ns,
            drive_ghz,
        } => {
            check_grid("amplitude", amplitudes_ghz)?;
            check_grid("tau", tau_ns)?;
            guard(amplitudes_ghz.len() * tau_ns.len())?;
            let mut values = Vec::with_capacity(amplitudes_ghz.len() * tau_ns.len());
            let mut areas = Vec::with_capacity(values.capacity());
            for &a in amplitudes_ghz {
                for &tau in tau_ns {
                    let p = template.with_amplitude(a).with_tau(tau).with_start(0.0);
                    areas.push(crate::pulse::pulse_area(&p));
                    values.push(sim.run(*drive_ghz, &[p], p.t_end())?);
                }
            }
            let mut out = SweepResult::new(
                "chevron",
                fingerprint(params, &[amplitudes_ghz, tau_ns, &[*drive_ghz], &shape]),
                vec![
                    Axis::new("amplitude", "GHz", amplitudes_ghz.clone()),
                    Axis::new("tau", "ns", tau_ns.clone()),
                ],
                values,
            );
            out.channels.insert("pulse_area_rad".into(), areas);
            Ok(out)
        }
        ChevronGrid::FreqAmplitude {
            drive_ghz,
            amplitudes_ghz,
        } => {
            check_grid("drive frequency", drive_ghz)?;
            check_grid("amplitude", amplitudes_ghz)?;
            guard(amplitudes_ghz.len() * drive_ghz.len())?;
            let mut values = Vec::with_capacity(amplitudes_ghz.len() * drive_ghz.len());
            for &f in drive_ghz {
                for &a in amplitudes_ghz {
                    let p = template.with_amplitude(a).with_start(0.0);
                    values.push(sim.run(f, &[p], p.t_end())?);
                }
            }
            Ok(SweepResult::new(
                "chevron",
                fingerprint(params, &[drive_ghz, amplitudes_ghz, &shape]),
                vec![
                    Axis::new("drive_frequency", "GHz", drive_ghz.clone()),
                    Axis::new("amplitude", "GHz", amplitudes_ghz.clone()),
                ],
                values,
            ))
        }
    }
}

fn check_delays(delays: &[f64]) -> Result<()> {
    check_grid("delay", delays)?;
    if let Some(d) = delays.iter().find(|d| **d < 0.0) {
        return Err(Error::Domain(format!("delay {d} ns is negative")));
    }
    Ok(())
}

/// Pi pulse, wait, read out.
///
/// After the pulse the system evolves freely, so one trajectory long enough
/// for the largest delay serves every grid point. The `normalized` channel
/// divides by the readout of an ideal |1> with the device T1.
pub fn run_t1(
    params: &DeviceParams,
    dynamics: &Dynamics,
    pi_pulse: &PulseEnvelope,
    delays_ns: &[f64],
) -> Result<SweepResult> {
    check_delays(delays_ns)?;
    let sim = Simulator::new(params, dynamics)?;
    let p = pi_pulse.with_start(0.0);
    let drive = params.f01_ghz;
    let h0 = hamiltonian_on_modes(params, &sim.modes, drive, dynamics.qubit_offset_ghz);
    let ham = TimeDependentHamiltonian::constant(h0).with_drive(drive_hamiltonian(&p, &sim.modes.b));
    let max_delay = delays_ns.iter().copied().fold(0.0, f64::max);
    let end = p.t_end() + max_delay + dynamics.readout.duration_ns;
    let grid = TimeGrid::new(0.0, end, dynamics.dt_ns)?;
    let traj = evolve(&sim.rho0, &ham, &sim.channels, &grid, EvolveOptions::final_only())?;
    let values = delays_ns
        .iter()
        .map(|d| readout_signal(&traj, &dynamics.readout, p.t_end() + d))
        .collect::<Result<Vec<f64>>>()?;
    let t1_eff = if dynamics.undamped { f64::INFINITY } else { params.t1_ns };
    let ideal = match dynamics.readout.mode {
        ReadoutMode::Proxy => excited_state_readout(t1_eff, dynamics.readout.duration_ns),
        ReadoutMode::DispersiveShift => 1.0,
    };
    let normalized: Vec<f64> = values.iter().map(|v| v / ideal).collect();
    let mut out = SweepResult::new(
        "t1",
        fingerprint(params, &[delays_ns, &[dynamics.dt_ns, p.tau_ns, p.sigma_ns, p.omega0_ghz]]),
        vec![Axis::new("delay", "ns", delays_ns.to_vec())],
        values,
    );
    out.channels.insert("normalized".into(), normalized);
    Ok(out)
}

/// pi/2, wait, pi/2 with the second pulse's phase advanced by
/// 2 pi phase_advance t. Fringes appear at phase_advance plus any qubit
/// detuning from the drive.
pub fn run_ramsey(
    params: &DeviceParams,
    dynamics: &Dynamics,
    half_pi: &PulseEnvelope,
    delays_ns: &[f64],
    phase_advance_ghz: f64,
) -> Result<SweepResult> {
    check_delays(delays_ns)?;
    let sim = Simulator::new(params, dynamics)?;
    let first = half_pi.with_start(0.0);
    let drive = params.f01_ghz;
    let mut values = Vec::with_capacity(delays_ns.len());
    for &d in delays_ns {
        let second = half_pi
            .with_start(first.t_end() + d)
            .with_phase(half_pi.phase_rad + 2.0 * PI * phase_advance_ghz * d);
        values.push(sim.run(drive, &[first, second], second.t_end())?);
    }
    Ok(SweepResult::new(
        "ramsey",
        fingerprint(
            params,
            &[
                delays_ns,
                &[dynamics.dt_ns, phase_advance_ghz, first.tau_ns, first.sigma_ns, first.omega0_ghz],
            ],
        ),
        vec![Axis::new("delay", "ns", delays_ns.to_vec())],
        values,
    ))
}

/// Evenly spaced grid including both ends.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}
