//! Lindblad master-equation dynamics with a fixed-step RK4 integrator.
//!
//! Hamiltonians are in GHz and times in ns; the commutator term carries
//! the 2 pi. Collapse rates are in 1/ns.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::device::SystemModes;
use crate::error::{Error, Result};
use crate::operator::{HilbertSpec, Operator, C64};
use crate::pulse::{DriveTerm, Limit};

/// Relative trace drift above which a step is treated as unstable.
pub const TRACE_FAILURE_TOL: f64 = 1e-6;
/// Default step for experiment simulations (ns).
pub const DEFAULT_DT_NS: f64 = 0.002;

/// A jump operator with its rate.
#[derive(Debug, Clone)]
pub struct CollapseChannel {
    pub label: String,
    pub operator: Operator,
    pub rate: f64,
}

impl CollapseChannel {
    pub fn new(label: impl Into<String>, operator: Operator, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::Domain(format!("collapse rate {rate} must be finite and >= 0")));
        }
        Ok(Self {
            label: label.into(),
            operator,
            rate,
        })
    }
}

/// Relaxation, pure dephasing and resonator decay channels.
///
/// The qubit loses energy through `b` at 1/T1 and dephases through `b'b`
/// at 2/Tphi, so a two-level coherence decays at 1/(2 T1) + 1/Tphi. The
/// resonator decays through `a` at 2 pi kappa. Infinite times disable a
/// channel, as does a zero linewidth or an absent resonator.
pub fn collapse_channels(
    t1_ns: f64,
    tphi_ns: f64,
    kappa_ghz: f64,
    modes: &SystemModes,
) -> Result<Vec<CollapseChannel>> {
    if t1_ns.is_nan() || t1_ns <= 0.0 {
        return Err(Error::Domain(format!("T1 = {t1_ns} ns must be positive")));
    }
    if tphi_ns.is_nan() || tphi_ns <= 0.0 {
        return Err(Error::Domain(format!("Tphi = {tphi_ns} ns must be positive")));
    }
    if kappa_ghz.is_nan() || kappa_ghz < 0.0 {
        return Err(Error::Domain(format!("kappa = {kappa_ghz} GHz must be >= 0")));
    }
    let mut channels = Vec::new();
    if t1_ns.is_finite() {
        channels.push(CollapseChannel::new("relaxation", modes.b.clone(), 1.0 / t1_ns)?);
    }
    if tphi_ns.is_finite() {
        channels.push(CollapseChannel::new(
            "dephasing",
            modes.qubit_number(),
            2.0 / tphi_ns,
        )?);
    }
    if let Some(a) = &modes.a {
        if kappa_ghz > 0.0 {
            channels.push(CollapseChannel::new(
                "resonator_decay",
                a.clone(),
                2.0 * PI * kappa_ghz,
            )?);
        }
    }
    Ok(channels)
}

/// Thermal excitation b' at rate nbar/T1 for a bath with occupation `nbar`.
pub fn thermal_excitation_channel(t1_ns: f64, nbar: f64, modes: &SystemModes) -> Result<CollapseChannel> {
    if !(t1_ns > 0.0) {
        return Err(Error::Domain(format!("T1 = {t1_ns} ns must be positive")));
    }
    CollapseChannel::new("thermal_excitation", modes.b.dagger(), nbar / t1_ns)
}

/// Mean Bose occupation of a mode at `f_ghz` and temperature `temperature_k`.
pub fn bose_occupation(f_ghz: f64, temperature_k: f64) -> f64 {
    if temperature_k <= 0.0 {
        return 0.0;
    }
    let x = crate::device::PLANCK * f_ghz * 1e9 / (crate::device::BOLTZMANN * temperature_k);
    1.0 / x.exp_m1()
}

/// Static part plus pulsed drive terms.
#[derive(Debug, Clone)]
pub struct TimeDependentHamiltonian {
    pub static_part: Operator,
    pub drives: Vec<DriveTerm>,
}

impl TimeDependentHamiltonian {
    pub fn constant(h: Operator) -> Self {
        Self {
            static_part: h,
            drives: Vec::new(),
        }
    }

    pub fn with_drive(mut self, term: DriveTerm) -> Self {
        self.drives.push(term);
        self
    }

    pub fn space(&self) -> &HilbertSpec {
        self.static_part.space()
    }

    pub fn at(&self, t: f64) -> Operator {
        self.drives
            .iter()
            .fold(self.static_part.clone(), |h, d| &h + &d.at(t))
    }
}

/// Fixed-step time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("time step {dt} must be positive")));
        }
        if !((t1 - t0) / dt >= 1.0 - 1e-9) {
            return Err(Error::Domain(format!(
                "grid [{t0}, {t1}] holds less than one step of {dt}"
            )));
        }
        Ok(Self { t0, t1, dt })
    }

    /// Number of steps; the step is shrunk slightly so the grid ends exactly on t1.
    pub fn steps(&self) -> usize {
        (((self.t1 - self.t0) / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn step(&self) -> f64 {
        (self.t1 - self.t0) / self.steps() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.step()
    }
}

/// Dense reference Lindbladian
/// -i 2 pi [H, rho] + sum_k rate_k (L rho L' - {L'L, rho}/2).
pub fn lindblad_derivative(h: &Operator, channels: &[CollapseChannel], rho: &Operator) -> Result<Operator> {
    let mut out = h.commutator(rho)?.scale(C64::new(0.0, -2.0 * PI));
    for ch in channels {
        let l = &ch.operator;
        let ld = l.dagger();
        let ldl = ld.try_mul(l)?;
        let jump = l.try_mul(rho)?.try_mul(&ld)?;
        let anti = &ldl.try_mul(rho)? + &rho.try_mul(&ldl)?;
        let term = &jump - &anti.scale_real(0.5);
        out = &out + &term.scale_real(ch.rate);
    }
    Ok(out)
}

/// Controls what [`evolve`] keeps.
#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    /// Store every `k`-th state; `None` keeps only the final state.
    pub state_stride: Option<usize>,
    /// Run the full density-matrix check (including eigenvalues) on every stored state.
    pub validate_states: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            state_stride: Some(1),
            validate_states: false,
        }
    }
}

impl EvolveOptions {
    pub fn final_only() -> Self {
        Self {
            state_stride: None,
            validate_states: false,
        }
    }
}

/// Result of a time evolution.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    /// Times of every integration step, including t0.
    pub times: Vec<f64>,
    /// Stored (time, state) pairs.
    pub states: Vec<(f64, Operator)>,
    /// Expectation values sampled at every entry of `times`.
    pub records: BTreeMap<String, Vec<f64>>,
    /// Largest trace correction per unit time applied during integration.
    pub max_trace_drift_per_ns: f64,
}

impl Trajectory {
    pub fn record(&self, name: &str) -> Option<&[f64]> {
        self.records.get(name).map(|v| v.as_slice())
    }

    pub fn final_state(&self) -> &Operator {
        &self.states.last().expect("trajectory always keeps its final state").1
    }

    /// Trapezoid integral of a record over [start, end] with linear interpolation at the ends.
    pub fn integrate_record(&self, name: &str, start: f64, end: f64) -> Result<f64> {
        let values = self
            .record(name)
            .ok_or_else(|| Error::Range(format!("no record named {name}")))?;
        let first = self.times[0];
        let last = *self.times.last().unwrap();
        let slack = 1e-9 * (1.0 + last.abs());
        if start < first - slack || end > last + slack || end < start {
            return Err(Error::Range(format!(
                "window [{start}, {end}] ns outside trajectory [{first}, {last}] ns"
            )));
        }
        let (start, end) = (start.max(first), end.min(last));
        let interp = |t: f64| -> f64 {
            let h = self.grid.step();
            let k = (((t - first) / h).floor() as usize).min(self.times.len() - 2);
            let w = (t - self.times[k]) / h;
            values[k] * (1.0 - w) + values[k + 1] * w
        };
        let mut acc = 0.0;
        let mut t_prev = start;
        let mut v_prev = interp(start);
        for (&t, &v) in self.times.iter().zip(values) {
            if t <= start || t >= end {
                continue;
            }
            acc += 0.5 * (v + v_prev) * (t - t_prev);
            t_prev = t;
            v_prev = v;
        }
        acc += 0.5 * (interp(end) + v_prev) * (end - t_prev);
        Ok(acc)
    }
}

type Triplets = Vec<(usize, usize, C64)>;

fn sparse(op: &Operator) -> Triplets {
    let m = op.matrix();
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v.re != 0.0 || v.im != 0.0 {
                out.push((i, j, v));
            }
        }
    }
    out
}

struct SparseDrive {
    term: DriveTerm,
    op: Triplets,
    op_dag: Triplets,
}

/// Precomputed Lindbladian with allocation-free evaluation.
///
/// Uses the effective Hamiltonian 2 pi H - (i/2) sum rate L'L so that
/// d rho = -i (M - M') + sum rate L rho L' with M = H_eff rho.
struct Engine {
    n: usize,
    heff: Triplets,
    drives: Vec<SparseDrive>,
    jumps: Vec<(f64, Triplets)>,
    /// Sorted drive breakpoints; steps are split there.
    breaks: Vec<f64>,
    scratch: Vec<C64>,
}

impl Engine {
    fn new(ham: &TimeDependentHamiltonian, channels: &[CollapseChannel]) -> Result<Self> {
        let space = ham.space();
        let n = space.total();
        let mut heff = ham.static_part.scale_real(2.0 * PI);
        for ch in channels {
            if ch.operator.space() != space {
                return Err(Error::SpaceMismatch {
                    left: space.dims().to_vec(),
                    right: ch.operator.space().dims().to_vec(),
                });
            }
            let ldl = ch.operator.dagger().try_mul(&ch.operator)?;
            heff = &heff + &ldl.scale(C64::new(0.0, -0.5 * ch.rate));
        }
        let mut drives = Vec::new();
        for d in &ham.drives {
            if d.operator.space() != space {
                return Err(Error::SpaceMismatch {
                    left: space.dims().to_vec(),
                    right: d.operator.space().dims().to_vec(),
                });
            }
            let scaled = d.operator.scale_real(2.0 * PI);
            drives.push(SparseDrive {
                term: d.clone(),
                op: sparse(&scaled),
                op_dag: sparse(&scaled.dagger()),
            });
        }
        let jumps = channels
            .iter()
            .filter(|c| c.rate > 0.0)
            .map(|c| (c.rate, sparse(&c.operator)))
            .collect();
        let mut breaks: Vec<f64> = ham.drives.iter().flat_map(|d| d.envelope.breakpoints()).collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        Ok(Self {
            n,
            heff: sparse(&heff),
            drives,
            jumps,
            breaks,
            scratch: vec![C64::new(0.0, 0.0); n * n],
        })
    }

    fn derivative(&mut self, t: f64, limit: Limit, rho: &[C64], out: &mut [C64]) {
        let n = self.n;
        let m = &mut self.scratch;
        m.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        let apply = |m: &mut [C64], ops: &Triplets, c: C64| {
            for &(i, j, v) in ops {
                let cv = c * v;
                let src = &rho[j * n..(j + 1) * n];
                let dst = &mut m[i * n..(i + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += cv * s;
                }
            }
        };
        apply(m, &self.heff, C64::new(1.0, 0.0));
        for d in &self.drives {
            let c = d.term.coefficient_limit(t, limit);
            if c.re != 0.0 || c.im != 0.0 {
                apply(m, &d.op, c);
                apply(m, &d.op_dag, c.conj());
            }
        }
        for i in 0..n {
            for k in 0..n {
                let z = m[i * n + k] - m[k * n + i].conj();
                out[i * n + k] = C64::new(z.im, -z.re);
            }
        }
        for (rate, ops) in &self.jumps {
            for &(i, j, v) in ops {
                for &(k, l, w) in ops {
                    out[i * n + k] += *rate * v * rho[j * n + l] * w.conj();
                }
            }
        }
    }
}

fn to_operator(space: &HilbertSpec, n: usize, data: &[C64]) -> Operator {
    Operator::from_matrix(space.clone(), DMatrix::from_row_slice(n, n, data))
        .expect("buffer matches space")
}

struct RecordLayout {
    n_q: usize,
    n_r: usize,
}

impl RecordLayout {
    fn from_space(space: &HilbertSpec) -> Self {
        match space.dims() {
            [q] => Self { n_q: *q, n_r: 1 },
            [q, ..] => Self {
                n_q: *q,
                n_r: space.total() / q,
            },
            [] => Self { n_q: 1, n_r: 1 },
        }
    }

    fn names(&self) -> Vec<String> {
        let mut names = vec!["qubit_number".to_string(), "resonator_number".to_string()];
        for k in 0..self.n_q.min(3) {
            names.push(format!("P{k}"));
        }
        names
    }

    fn sample(&self, n: usize, rho: &[C64], records: &mut [Vec<f64>]) {
        let mut nq = 0.0;
        let mut nr = 0.0;
        let mut pops = [0.0; 3];
        for q in 0..self.n_q {
            for r in 0..self.n_r {
                let idx = q * self.n_r + r;
                let p = rho[idx * n + idx].re;
                nq += q as f64 * p;
                nr += r as f64 * p;
                if let Some(slot) = pops.get_mut(q) {
                    *slot += p;
                }
            }
        }
        records[0].push(nq);
        records[1].push(nr);
        for (k, rec) in records.iter_mut().skip(2).enumerate() {
            rec.push(pops[k]);
        }
    }
}

/// Integrates the master equation from `rho0` over `grid` with classic RK4.
///
/// The trace is renormalized after every step; a drift beyond 1e-6 (or a
/// non-finite/exploding entry) aborts with an integration failure.
pub fn evolve(
    rho0: &Operator,
    ham: &TimeDependentHamiltonian,
    channels: &[CollapseChannel],
    grid: &TimeGrid,
    options: EvolveOptions,
) -> Result<Trajectory> {
    let space = ham.space().clone();
    if rho0.space() != &space {
        return Err(Error::SpaceMismatch {
            left: rho0.space().dims().to_vec(),
            right: space.dims().to_vec(),
        });
    }
    rho0.validate_density()?;
    let n = space.total();
    let mut engine = Engine::new(ham, channels)?;
    let layout = RecordLayout::from_space(&space);
    let names = layout.names();
    let mut record_buf: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.steps() + 1); names.len()];

    let mut rho: Vec<C64> = rho0.matrix().transpose().as_slice().to_vec();
    let zero = C64::new(0.0, 0.0);
    let mut k1 = vec![zero; n * n];
    let mut k2 = vec![zero; n * n];
    let mut k3 = vec![zero; n * n];
    let mut k4 = vec![zero; n * n];
    let mut tmp = vec![zero; n * n];

    let steps = grid.steps();
    let h = grid.step();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::new();
    let mut max_drift = 0.0_f64;

    times.push(grid.t0);
    layout.sample(n, &rho, &mut record_buf);
    if options.state_stride.is_some() {
        states.push((grid.t0, rho0.clone()));
    }

    let mut next_break = 0;
    let mut cuts = Vec::new();
    for step in 0..steps {
        let t = grid.time(step);
        let t_next = grid.time(step + 1);
        // Breakpoints strictly inside the step split it, so each RK4 stage
        // sees one smooth generator.
        let margin = 1e-9 * h;
        while next_break < engine.breaks.len() && engine.breaks[next_break] <= t + margin {
            next_break += 1;
        }
        cuts.clear();
        cuts.push(t);
        let mut k = next_break;
        while k < engine.breaks.len() && engine.breaks[k] < t_next - margin {
            cuts.push(engine.breaks[k]);
            k += 1;
        }
        cuts.push(t_next);
        for w in cuts.windows(2) {
            let (a, sub) = (w[0], w[1] - w[0]);
            engine.derivative(a, Limit::Right, &rho, &mut k1);
            for i in 0..n * n {
                tmp[i] = rho[i] + k1[i] * (0.5 * sub);
            }
            engine.derivative(a + 0.5 * sub, Limit::Closed, &tmp, &mut k2);
            for i in 0..n * n {
                tmp[i] = rho[i] + k2[i] * (0.5 * sub);
            }
            engine.derivative(a + 0.5 * sub, Limit::Closed, &tmp, &mut k3);
            for i in 0..n * n {
                tmp[i] = rho[i] + k3[i] * sub;
            }
            engine.derivative(w[1], Limit::Left, &tmp, &mut k4);
            for i in 0..n * n {
                rho[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (sub / 6.0);
            }
        }
        let mut trace = zero;
        let largest = rho.iter().map(|z| z.norm_sqr()).fold(0.0_f64, f64::max);
        for i in 0..n {
            trace += rho[i * n + i];
        }
        let drift = (trace - 1.0).norm();
        if !drift.is_finite() || !largest.is_finite() {
            return Err(Error::IntegrationFailure {
                time: t_next,
                reason: "non-finite density matrix".into(),
            });
        }
        if drift > TRACE_FAILURE_TOL {
            return Err(Error::IntegrationFailure {
                time: t_next,
                reason: format!("trace drift {drift:.3e}"),
            });
        }
        if largest.sqrt() > 1.0 + TRACE_FAILURE_TOL {
            return Err(Error::IntegrationFailure {
                time: t_next,
                reason: format!("entry magnitude {:.3e} exceeds 1", largest.sqrt()),
            });
        }
        max_drift = max_drift.max(drift / h);
        if drift > 0.0 {
            let inv = 1.0 / trace.re;
            rho.iter_mut().for_each(|z| *z *= inv);
        }
        times.push(t_next);
        layout.sample(n, &rho, &mut record_buf);
        let last = step + 1 == steps;
        let store = match options.state_stride {
            Some(stride) => (step + 1) % stride.max(1) == 0 || last,
            None => last,
        };
        if store {
            let op = to_operator(&space, n, &rho);
            if options.validate_states || last {
                op.validate_density().map_err(|e| Error::IntegrationFailure {
                    time: t_next,
                    reason: e.to_string(),
                })?;
            }
            states.push((t_next, op));
        }
    }

    let records = names.into_iter().zip(record_buf).collect();
    Ok(Trajectory {
        grid: *grid,
        times,
        states,
        records,
        max_trace_drift_per_ns: max_drift,
    })
}

/// Stationary state of a time-independent Lindbladian, from its null space
/// with the trace fixed to one.
pub fn steady_state(h: &Operator, channels: &[CollapseChannel]) -> Result<Operator> {
    let space = h.space().clone();
    let n = space.total();
    let nn = n * n;
    let mut liouvillian = DMatrix::<C64>::zeros(nn, nn);
    for j in 0..n {
        for l in 0..n {
            let mut basis = Operator::zeros(&space);
            let mut m = basis.matrix().clone();
            m[(j, l)] = C64::new(1.0, 0.0);
            basis = Operator::from_matrix(space.clone(), m)?;
            let d = lindblad_derivative(h, channels, &basis)?;
            for i in 0..n {
                for k in 0..n {
                    liouvillian[(i * n + k, j * n + l)] = d.matrix()[(i, k)];
                }
            }
        }
    }
    let mut rhs = DVector::<C64>::zeros(nn);
    for col in 0..nn {
        liouvillian[(0, col)] = C64::new(0.0, 0.0);
    }
    for i in 0..n {
        liouvillian[(0, i * n + i)] = C64::new(1.0, 0.0);
    }
    rhs[0] = C64::new(1.0, 0.0);
    let solution = liouvillian
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singularity("Liouvillian has no unique steady state".into()))?;
    let m = DMatrix::from_fn(n, n, |i, k| solution[i * n + k]);
    let herm = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    Operator::from_matrix(space, herm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{annihilation_op, number_op};

    use crate::pulse::{drive_hamiltonian, PulseEnvelope};

    fn two_level() -> SystemModes {
        SystemModes::new(2, 1).unwrap()
    }

    #[test]
    fn channel_rates() {
        let m = two_level();
        let ch = collapse_channels(15.849, f64::INFINITY, 0.0, &m).unwrap();
        assert_eq!(ch.len(), 1);
        assert!((ch[0].rate - 0.0631).abs() < 1e-4);
        let ch = collapse_channels(10.0, 20.0, 0.1, &SystemModes::new(2, 3).unwrap()).unwrap();
        assert_eq!(ch.len(), 3);
        assert_eq!(ch[1].rate, 0.1);
        assert!((ch[2].rate - 2.0 * PI * 0.1).abs() < 1e-15);
        assert!(collapse_channels(-1.0, 20.0, 0.1, &m).is_err());
        assert!(CollapseChannel::new("x", m.b.clone(), -0.1).is_err());
    }

    #[test]
    fn derivative_trace_free_and_decay() {
        let m = two_level();
        let h = number_op(2).unwrap().scale_real(0.3);
        let ch = collapse_channels(5.0, 7.0, 0.0, &m).unwrap();
        let rho = Operator::projector(m.b.space(), &[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        let d = lindblad_derivative(&h, &ch, &rho).unwrap();
        assert!(d.trace().norm() < 1e-15);

        let excited = m.qubit_state(1).unwrap();
        let gamma = 0.37;
        let chan = [CollapseChannel::new("r", m.b.clone(), gamma).unwrap()];
        let zero = Operator::zeros(m.b.space());
        let d = lindblad_derivative(&zero, &chan, &excited).unwrap();
        assert!((d.matrix()[(1, 1)].re + gamma).abs() < 1e-15);
        assert!((d.matrix()[(0, 0)].re - gamma).abs() < 1e-15);

        let commuting = lindblad_derivative(&h, &[], &excited).unwrap();
        assert_eq!(commuting.max_abs(), 0.0);
    }

    #[test]
    fn fast_path_matches_dense() {
        let modes = SystemModes::new(3, 2).unwrap();
        let params = crate::device::DeviceParams::table_one();
        let h0 = crate::device::build_rotating_hamiltonian(&params, 3, 2, params.f01_ghz, 0.0).unwrap();
        let pulse = PulseEnvelope::new(2.0, 1.0, 0.15).unwrap().with_detuning(0.03).with_phase(0.4);
        let ham = TimeDependentHamiltonian::constant(h0).with_drive(drive_hamiltonian(&pulse, &modes.b));
        let ch = collapse_channels(15.0, 30.0, 0.08, &modes).unwrap();
        let psi: Vec<C64> = (0..6).map(|k| C64::new(1.0 + k as f64, 0.5 * k as f64)).collect();
        let rho = Operator::projector(&modes.space, &psi).unwrap();
        let mut engine = Engine::new(&ham, &ch).unwrap();
        let n = 6;
        let flat: Vec<C64> = rho.matrix().transpose().as_slice().to_vec();
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        for t in [0.0, 2.1, 4.0] {
            engine.derivative(t, Limit::Closed, &flat, &mut out);
            let dense = lindblad_derivative(&ham.at(t), &ch, &rho).unwrap();
            for i in 0..n {
                for k in 0..n {
                    assert!((out[i * n + k] - dense.matrix()[(i, k)]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn free_evolution_is_static() {
        let m = two_level();
        let rho0 = Operator::projector(&m.space, &[C64::new(0.6, 0.0), C64::new(0.8, 0.0)]).unwrap();
        let ham = TimeDependentHamiltonian::constant(Operator::zeros(&m.space));
        let grid = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let traj = evolve(&rho0, &ham, &[], &grid, EvolveOptions::default()).unwrap();
        assert_eq!(traj.states.len(), 101);
        assert_eq!(traj.final_state(), &rho0);
    }

    #[test]
    fn relaxation_is_exponential() {
        let m = two_level();
        let t1 = 15.849;
        let ch = collapse_channels(t1, f64::INFINITY, 0.0, &m).unwrap();
        let ham = TimeDependentHamiltonian::constant(Operator::zeros(&m.space));
        let grid = TimeGrid::new(0.0, 30.0, 0.001).unwrap();
        let traj = evolve(&m.qubit_state(1).unwrap(), &ham, &ch, &grid, EvolveOptions::final_only()).unwrap();
        let p1 = traj.record("P1").unwrap();
        for (t, p) in traj.times.iter().zip(p1).step_by(997) {
            assert!((p - (-t / t1).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn resonant_rabi() {
        let m = two_level();
        let omega = 0.2;
        let drive = Operator::from_matrix(m.space.clone(), annihilation_op(2).unwrap().matrix().clone()).unwrap();
        let h = &(&drive + &drive.dagger()).scale_real(omega / 2.0) + &Operator::zeros(&m.space);
        let ham = TimeDependentHamiltonian::constant(h);
        let grid = TimeGrid::new(0.0, 10.0, 0.002).unwrap();
        let traj = evolve(&m.qubit_state(0).unwrap(), &ham, &[], &grid, EvolveOptions::final_only()).unwrap();
        for (t, p) in traj.times.iter().zip(traj.record("P1").unwrap()) {
            assert!((p - (PI * omega * t).sin().powi(2)).abs() < 1e-6);
        }
    }

    #[test]
    fn coherence_decay_rate() {
        let m = two_level();
        let (t1, tphi) = (12.0, 20.0);
        let ch = collapse_channels(t1, tphi, 0.0, &m).unwrap();
        let ham = TimeDependentHamiltonian::constant(Operator::zeros(&m.space));
        let grid = TimeGrid::new(0.0, 10.0, 0.005).unwrap();
        let plus = Operator::projector(&m.space, &[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let traj = evolve(&plus, &ham, &ch, &grid, EvolveOptions::final_only()).unwrap();
        let rho01 = traj.final_state().matrix()[(0, 1)].re;
        let expected = 0.5 * (-(1.0 / (2.0 * t1) + 1.0 / tphi) * 10.0).exp();
        assert!((rho01 - expected).abs() < 1e-9);
    }

    #[test]
    fn unstable_step_detected() {
        let m = two_level();
        let h = number_op(2).unwrap().scale_real(50.0);
        let ch = [CollapseChannel::new("r", m.b.clone(), 400.0).unwrap()];
        let ham = TimeDependentHamiltonian::constant(h);
        let grid = TimeGrid::new(0.0, 1.0, 0.05).unwrap();
        let plus = Operator::projector(&m.space, &[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let err = evolve(&plus, &ham, &ch, &grid, EvolveOptions::final_only()).unwrap_err();
        assert!(matches!(err, Error::IntegrationFailure { .. }), "{err}");
    }

    #[test]
    fn readout_integral_window() {
        let m = two_level();
        let ham = TimeDependentHamiltonian::constant(Operator::zeros(&m.space));
        let grid = TimeGrid::new(0.0, 5.0, 0.01).unwrap();
        let traj = evolve(&m.qubit_state(1).unwrap(), &ham, &[], &grid, EvolveOptions::final_only()).unwrap();
        assert!((traj.integrate_record("qubit_number", 1.234, 4.5).unwrap() - 3.266).abs() < 1e-12);
        assert!(matches!(traj.integrate_record("qubit_number", 1.0, 6.0), Err(Error::Range(_))));
    }

    #[test]
    fn steady_state_thermal_balance() {
        let m = two_level();
        let t1 = 10.0;
        let nbar = 0.1;
        let ch = vec![
            CollapseChannel::new("down", m.b.clone(), (1.0 + nbar) / t1).unwrap(),
            thermal_excitation_channel(t1, nbar, &m).unwrap(),
        ];
        let ss = steady_state(&Operator::zeros(&m.space), &ch).unwrap();
        let p1 = ss.matrix()[(1, 1)].re;
        assert!((p1 - nbar / (1.0 + 2.0 * nbar)).abs() < 1e-12);
        ss.validate_density().unwrap();
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 1.0, 0.0).is_err());
        assert!(TimeGrid::new(0.0, 0.5, 1.0).is_err());
        let g = TimeGrid::new(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.steps(), 4);
        assert!((g.time(4) - 1.0).abs() < 1e-15);
    }
}
