//! Experiment registry and dispatch.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use mmqubit_core::fit::{
    dephasing_decomposition, fit_damped_cosine, fit_exponential, fit_peaks_seeded, power_broadening_fit, FitResult,
};
use mmqubit_core::protocols::{
    calibrated_pulse, run_chevron, run_punchout, run_ramsey, run_rabi_time, run_t1, run_two_tone, two_tone_lines,
    ChevronGrid, Dynamics, SweepResult,
};
use mmqubit_core::pulse::PulseEnvelope;
use mmqubit_core::purcell::{purcell_sweep, DispersiveReference, EquivalentCircuit};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug)]
pub struct ExperimentInfo {
    pub id: &'static str,
    /// Accepted axis sets, slow axis first.
    pub layouts: &'static [&'static [&'static str]],
    pub figure: &'static str,
    pub needs_pulse: bool,
    pub fits: &'static str,
}

impl ExperimentInfo {
    /// The layout whose axis names match `names` as a set.
    pub fn layout_for(&self, names: &[&str]) -> Option<&'static [&'static str]> {
        self.layouts.iter().copied().find(|layout| {
            layout.len() == names.len() && layout.iter().all(|a| names.contains(a))
        })
    }

    pub fn layouts_text(&self) -> String {
        self.layouts
            .iter()
            .map(|l| format!("[{}]", l.join(", ")))
            .collect::<Vec<_>>()
            .join(" or ")
    }
}

pub const EXPERIMENTS: &[ExperimentInfo] = &[
    ExperimentInfo {
        id: "punchout",
        layouts: &[&["power", "probe_frequency"]],
        figure: "Fig 2a",
        needs_pulse: false,
        fits: "dressed shift from dip centres",
    },
    ExperimentInfo {
        id: "two-tone",
        layouts: &[&["probe_power", "probe_frequency"]],
        figure: "Fig 2b-c, Fig S7",
        needs_pulse: false,
        fits: "line widths, power broadening (T1, T2)",
    },
    ExperimentInfo {
        id: "rabi-time",
        layouts: &[&["drive_frequency", "tau"]],
        figure: "Fig 3b",
        needs_pulse: true,
        fits: "Rabi frequency on the row nearest f01",
    },
    ExperimentInfo {
        id: "chevron",
        layouts: &[&["amplitude", "tau"], &["drive_frequency", "amplitude"]],
        figure: "Fig 3c, Fig S8",
        needs_pulse: true,
        fits: "none",
    },
    ExperimentInfo {
        id: "t1",
        layouts: &[&["delay"]],
        figure: "Fig 4a",
        needs_pulse: true,
        fits: "exponential (T1)",
    },
    ExperimentInfo {
        id: "ramsey",
        layouts: &[&["delay"]],
        figure: "Fig 4b",
        needs_pulse: true,
        fits: "damped cosine (T2*, fringe), T_phi",
    },
    ExperimentInfo {
        id: "purcell-sweep",
        layouts: &[&["junction_scale"]],
        figure: "Fig S9",
        needs_pulse: false,
        fits: "none",
    },
];

pub fn lookup(id: &str) -> Option<&'static ExperimentInfo> {
    EXPERIMENTS.iter().find(|e| e.id == id)
}

pub fn ids() -> Vec<&'static str> {
    EXPERIMENTS.iter().map(|e| e.id).collect()
}

/// One line per experiment: id, figure, axes, attached fits.
pub fn listing() -> Vec<String> {
    EXPERIMENTS
        .iter()
        .map(|e| format!("{} → {}  axes: {}  fits: {}", e.id, e.figure, e.layouts_text(), e.fits))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Option<f64>,
    pub uncertainty: Option<f64>,
}

impl Estimate {
    fn new(value: f64, uncertainty: f64) -> Self {
        let finite = |x: f64| x.is_finite().then_some(x);
        Self {
            value: finite(value),
            uncertainty: finite(uncertainty),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub converged: bool,
    pub parameters: BTreeMap<String, Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl FitSummary {
    fn from_fit(model: &str, fit: &FitResult) -> Self {
        Self {
            model: model.into(),
            converged: fit.converged,
            parameters: fit
                .parameters
                .iter()
                .map(|p| (p.name.clone(), Estimate::new(p.value, p.uncertainty)))
                .collect(),
            note: fit.degenerate.clone(),
        }
    }

    fn failed(model: &str, reason: String) -> Self {
        Self {
            model: model.into(),
            converged: false,
            parameters: BTreeMap::new(),
            note: Some(reason),
        }
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameters.get(name).and_then(|e| e.value)
    }
}

/// Result of one run before persistence.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub sweep: SweepResult,
    pub fits: BTreeMap<String, FitSummary>,
}

fn runtime(e: mmqubit_core::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn axis(cfg: &RunConfig, name: &str) -> Vec<f64> {
    cfg.experiment.axes[name].values()
}

fn dynamics(cfg: &RunConfig) -> Dynamics {
    let d = &cfg.dynamics;
    let mut out = Dynamics::for_device(&cfg.device).with_levels(d.n_q).with_dt(d.dt_ns);
    out.n_r = d.n_r;
    out.initial = d.initial;
    if d.undamped {
        out = out.undamped();
    }
    out
}

/// Pulse template; `default_area` applies when neither area nor amplitude is set.
fn template(cfg: &RunConfig, default_area: f64) -> Result<PulseEnvelope, CliError> {
    let p = cfg.experiment.pulse.expect("validated pulse");
    let env = match (p.area_rad, p.amplitude_ghz) {
        (_, Some(a)) => PulseEnvelope::new(p.tau_ns, p.sigma_ns, a),
        (Some(area), None) => calibrated_pulse(p.tau_ns, p.sigma_ns, area),
        (None, None) => calibrated_pulse(p.tau_ns, p.sigma_ns, default_area),
    };
    env.map_err(|e| CliError::Validation(format!("experiment.pulse: {e}")))
}

/// Runs the configured experiment, adds seeded noise if requested, then fits.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let params = &cfg.device;
    let exp = &cfg.experiment;
    let names: Vec<&str> = exp.axes.keys().map(String::as_str).collect();
    let layout = cfg.info().layout_for(&names).expect("validated axes");
    let mut sweep = match exp.id.as_str() {
        "punchout" => run_punchout(params, &axis(cfg, "probe_frequency"), &axis(cfg, "power")),
        "two-tone" => run_two_tone(
            params,
            &axis(cfg, "probe_frequency"),
            &axis(cfg, "probe_power"),
            exp.two_tone_mode,
        ),
        "rabi-time" => run_rabi_time(
            params,
            &dynamics(cfg),
            &template(cfg, PI)?,
            &axis(cfg, "tau"),
            &axis(cfg, "drive_frequency"),
        ),
        "chevron" => {
            let grid = if layout[0] == "amplitude" {
                ChevronGrid::AmplitudeTau {
                    amplitudes_ghz: axis(cfg, "amplitude"),
                    tau_ns: axis(cfg, "tau"),
                    drive_ghz: exp.drive_ghz.unwrap_or(params.f01_ghz),
                }
            } else {
                ChevronGrid::FreqAmplitude {
                    drive_ghz: axis(cfg, "drive_frequency"),
                    amplitudes_ghz: axis(cfg, "amplitude"),
                }
            };
            run_chevron(params, &dynamics(cfg), &template(cfg, PI)?, &grid)
        }
        "t1" => run_t1(params, &dynamics(cfg), &template(cfg, PI)?, &axis(cfg, "delay")),
        "ramsey" => run_ramsey(
            params,
            &dynamics(cfg),
            &template(cfg, PI / 2.0)?,
            &axis(cfg, "delay"),
            exp.phase_advance_ghz,
        ),
        "purcell-sweep" => {
            let c = exp.circuit.expect("validated circuit");
            let eq = EquivalentCircuit::from_couplings(
                params.f01_ghz,
                (params.c_j_ff + params.c_q_ff) * 1e-15,
                params.f_rr_bare_ghz,
                c.c_r_ff * 1e-15,
                params.g_ghz,
                params.kappa_ghz,
            )
            .map_err(runtime)?;
            let reference = DispersiveReference {
                g_ghz: params.g_ghz,
                f_r_ghz: params.f_rr_bare_ghz,
                kappa_ghz: params.kappa_ghz,
            };
            purcell_sweep(
                &eq.network(),
                &eq.junction,
                &axis(cfg, "junction_scale"),
                (c.bracket_ghz[0], c.bracket_ghz[1]),
                Some(reference),
            )
            .map(|mut s| {
                s.metadata.params_hash = cfg.hash()[..16].to_string();
                s
            })
        }
        other => unreachable!("unregistered experiment {other}"),
    }
    .map_err(runtime)?;

    let noise = cfg.dynamics.noise_amplitude;
    if noise > 0.0 {
        sweep.add_noise(noise, cfg.dynamics.noise_seed).map_err(runtime)?;
    }
    let fits = attached_fits(cfg, &sweep);
    Ok(RunOutput { sweep, fits })
}

fn attached_fits(cfg: &RunConfig, sweep: &SweepResult) -> BTreeMap<String, FitSummary> {
    let mut fits = BTreeMap::new();
    let params = &cfg.device;
    let mut put = |name: &str, model: &str, r: mmqubit_core::Result<FitResult>| {
        let summary = match r {
            Ok(f) => FitSummary::from_fit(model, &f),
            Err(e) => FitSummary::failed(model, e.to_string()),
        };
        fits.insert(name.to_string(), summary);
    };
    match cfg.experiment.id.as_str() {
        "t1" => put("t1", "A exp(-t/T) + C", fit_exponential(&sweep.axes[0].values, &sweep.values)),
        "ramsey" => {
            let r = fit_damped_cosine(&sweep.axes[0].values, &sweep.values);
            let tphi = r.as_ref().ok().map(|f| dephasing_decomposition(params.t1_ns, f.value("T2s")));
            put("ramsey", "A exp(-t/T2s) cos(2 pi freq t + phase) + C", r);
            if let Some(tphi) = tphi {
                let summary = match tphi {
                    Ok(v) => FitSummary {
                        model: "1/T_phi = 1/T2s - 1/(2 T1)".into(),
                        converged: true,
                        parameters: BTreeMap::from([("T_phi".to_string(), Estimate::new(v, f64::NAN))]),
                        note: None,
                    },
                    Err(e) => FitSummary::failed("1/T_phi = 1/T2s - 1/(2 T1)", e.to_string()),
                };
                fits.insert("dephasing".into(), summary);
            }
        }
        "rabi-time" => {
            let freqs = &sweep.axes[0].values;
            let row = nearest(freqs, params.f01_ghz);
            put(
                "rabi",
                "A exp(-t/T2s) cos(2 pi freq t + phase) + C",
                fit_damped_cosine(&sweep.axes[1].values, sweep.row(row)),
            );
        }
        "two-tone" => {
            let (summary, widths) = broadening(cfg, sweep);
            fits.extend(widths);
            if let Some(s) = summary {
                fits.insert("power_broadening".into(), s);
            }
        }
        "punchout" => {
            if let Some(centers) = sweep.channels.get("dip_center_ghz") {
                let (lo, hi) = (centers[0], centers[centers.len() - 1]);
                fits.insert(
                    "punchout".into(),
                    FitSummary {
                        model: "dip centre at lowest minus highest power".into(),
                        converged: true,
                        parameters: BTreeMap::from([
                            ("dressed_shift_ghz".to_string(), Estimate::new(lo - hi, f64::NAN)),
                            ("f_dressed_ghz".to_string(), Estimate::new(lo, f64::NAN)),
                            ("f_bare_ghz".to_string(), Estimate::new(hi, f64::NAN)),
                        ]),
                        note: None,
                    },
                );
            }
        }
        _ => {}
    }
    fits
}

fn nearest(values: &[f64], target: f64) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
        .map_or(0, |(i, _)| i)
}

/// Per-row multi-Gaussian fits, then sigma^2 against photon number.
fn broadening(cfg: &RunConfig, sweep: &SweepResult) -> (Option<FitSummary>, BTreeMap<String, FitSummary>) {
    const MODEL: &str = "sigma^2 = 1/T2^2 + n (2 pi g)^2 T2/T1 (angular units)";
    let probe = &sweep.axes[1].values;
    let (lo, hi) = (probe[0], probe[probe.len() - 1]);
    let centers: Vec<f64> = two_tone_lines(&cfg.device)
        .into_iter()
        .filter(|c| *c >= lo && *c <= hi)
        .collect();
    let mut rows = BTreeMap::new();
    if centers.is_empty() || probe.len() < 3 * centers.len() + 1 {
        return (None, rows);
    }
    let photons = sweep.channels.get("drive_photons").cloned().unwrap_or_default();
    let mut n_s = Vec::new();
    let mut sigma = Vec::new();
    for (i, n) in photons.iter().enumerate() {
        let r = fit_peaks_seeded(probe, sweep.row(i), &centers);
        if let Ok(f) = &r {
            if let (true, None, Some(k)) = (f.converged, &f.degenerate, f.peak_nearest(cfg.device.f01_ghz)) {
                n_s.push(*n);
                sigma.push(f.value(&format!("sigma_{k}")).abs());
            }
        }
        let model = format!("sum of {} Gaussian lines + offset", centers.len());
        rows.insert(format!("lines_row{i:03}"), match r {
            Ok(f) => FitSummary::from_fit(&model, &f),
            Err(e) => FitSummary::failed(&model, e.to_string()),
        });
    }
    if n_s.len() < 3 {
        return (Some(FitSummary::failed(MODEL, format!("{} usable rows, need 3", n_s.len()))), rows);
    }
    let summary = match power_broadening_fit(&n_s, &sigma, cfg.device.g_ghz) {
        Ok(f) => FitSummary::from_fit(MODEL, &f),
        Err(e) => FitSummary::failed(MODEL, e.to_string()),
    };
    (Some(summary), rows)
}
