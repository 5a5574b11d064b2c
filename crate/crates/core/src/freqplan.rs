//! Heterodyne chain arithmetic: multiplier harmonics, sidebands, direct
//! conversion spurs and assignment of spectral features to harmonics.

use std::cmp::Ordering;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default matching tolerance (GHz).
pub const DEFAULT_TOLERANCE_GHZ: f64 = 1e-3;

/// Residuals closer than this are treated as equal when ranking matches.
const TIE_GHZ: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub multiplier_order: u32,
    /// Probe generator output, referred to the multiplied band (GHz).
    pub f_generator_ghz: f64,
    pub f_rlo_ghz: f64,
    pub f_rif_ghz: f64,
    /// Frequencies below this do not propagate in the waveguide.
    pub waveguide_cutoff_ghz: f64,
}

impl ChainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.multiplier_order < 1 {
            return Err(Error::Domain("multiplier order must be >= 1".into()));
        }
        if !(self.waveguide_cutoff_ghz >= 0.0) {
            return Err(Error::Domain("waveguide cutoff must be >= 0".into()));
        }
        if !(self.f_rlo_ghz > 0.0) || !(self.f_rif_ghz >= 0.0) {
            return Err(Error::Domain("receiver LO must be positive and IF non-negative".into()));
        }
        Ok(())
    }
}

/// (n, n f / order) for n = 1..=n_max, keeping only lines at or above `cutoff`.
///
/// `f_ghz` is the frequency of the order-th harmonic, so n = order returns it.
pub fn harmonics(f_ghz: f64, order: u32, n_max: u32, cutoff_ghz: f64) -> Result<Vec<(u32, f64)>> {
    if !(f_ghz > 0.0) {
        return Err(Error::Domain(format!("frequency {f_ghz} GHz must be positive")));
    }
    if order < 1 || n_max < 1 {
        return Err(Error::Domain("order and n_max must be >= 1".into()));
    }
    Ok((1..=n_max)
        .map(|n| (n, f_ghz * n as f64 / order as f64))
        .filter(|(_, f)| *f >= cutoff_ghz)
        .collect())
}

/// (LO + IF, LO - IF).
pub fn sidebands(f_lo_ghz: f64, f_if_ghz: f64) -> Result<(f64, f64)> {
    if !(f_if_ghz >= 0.0) || !(f_lo_ghz > 0.0) {
        return Err(Error::Domain("LO must be positive and IF non-negative".into()));
    }
    if f_if_ghz >= f_lo_ghz {
        return Err(Error::Ordering(format!(
            "IF {f_if_ghz} GHz is not below LO {f_lo_ghz} GHz"
        )));
    }
    Ok((f_lo_ghz + f_if_ghz, f_lo_ghz - f_if_ghz))
}

/// Frequencies the receiver converts: both sidebands of every LO harmonic above cutoff.
pub fn measurement_frequencies(chain: &ChainSpec, n_max: u32) -> Result<Vec<f64>> {
    chain.validate()?;
    let mut out = Vec::new();
    for (_, lo) in harmonics(chain.f_rlo_ghz, chain.multiplier_order, n_max, 0.0)? {
        if chain.f_rif_ghz >= lo {
            continue;
        }
        let (usb, lsb) = sidebands(lo, chain.f_rif_ghz)?;
        for f in [lsb, usb] {
            if f >= chain.waveguide_cutoff_ghz {
                out.push(f);
            }
        }
    }
    Ok(out)
}

/// Probe settings whose n-th harmonic lands on a measurement frequency.
///
/// `probe_grid` holds f_S, the frequency of the order-th harmonic; a point
/// is flagged when |(n/order) f_S - f_meas| < tolerance for some n <= n_max.
pub fn direct_conversion_spurs(
    probe_grid: &[f64],
    chain: &ChainSpec,
    n_max: u32,
    tolerance_ghz: f64,
) -> Result<Vec<f64>> {
    if !(tolerance_ghz > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let targets = measurement_frequencies(chain, n_max)?;
    let order = chain.multiplier_order as f64;
    let mut out = Vec::new();
    for &fs in probe_grid {
        let hit = (1..=n_max).any(|n| {
            let h = n as f64 * fs / order;
            h >= chain.waveguide_cutoff_ghz && targets.iter().any(|t| (h - t).abs() < tolerance_ghz)
        });
        if hit {
            out.push(fs);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "kebab-case")]
pub enum FeatureSource {
    Resonator(usize),
    Qubit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureAssignment {
    pub observed_ghz: f64,
    pub source: FeatureSource,
    pub harmonic_n: u32,
    pub predicted_ghz: f64,
    pub residual_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Assignments {
    /// One entry per matched feature, in input order.
    pub matched: Vec<FeatureAssignment>,
    pub unmatched: Vec<f64>,
}

fn rank(a: &FeatureAssignment, b: &FeatureAssignment) -> Ordering {
    let (ra, rb) = (a.residual_ghz.abs(), b.residual_ghz.abs());
    if (ra - rb).abs() > TIE_GHZ {
        return ra.total_cmp(&rb);
    }
    a.harmonic_n
        .cmp(&b.harmonic_n)
        .then_with(|| a.source.cmp(&b.source))
}

/// Matches each observed probe frequency to the source line and harmonic
/// whose probe setting (order/n) f_source lies closest.
///
/// Ties go to the smaller n, then to resonators before qubits, then to the
/// lower source index.
pub fn assign_features(
    observed: &[f64],
    resonators: &[f64],
    qubits: &[f64],
    order: u32,
    n_range: RangeInclusive<u32>,
    tolerance_ghz: f64,
) -> Result<Assignments> {
    if !(tolerance_ghz > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    if order < 1 || *n_range.start() < 1 {
        return Err(Error::Domain("order and harmonic numbers must be >= 1".into()));
    }
    let sources: Vec<(FeatureSource, f64)> = resonators
        .iter()
        .enumerate()
        .map(|(i, f)| (FeatureSource::Resonator(i), *f))
        .chain(qubits.iter().enumerate().map(|(j, f)| (FeatureSource::Qubit(j), *f)))
        .collect();
    let mut out = Assignments::default();
    for &obs in observed {
        let best = sources
            .iter()
            .flat_map(|&(source, f)| {
                n_range.clone().map(move |n| {
                    let predicted = order as f64 / n as f64 * f;
                    FeatureAssignment {
                        observed_ghz: obs,
                        source,
                        harmonic_n: n,
                        predicted_ghz: predicted,
                        residual_ghz: obs - predicted,
                    }
                })
            })
            .min_by(rank);
        match best {
            Some(a) if a.residual_ghz.abs() <= tolerance_ghz => out.matched.push(a),
            _ => out.unmatched.push(obs),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_lines() {
        let h = harmonics(72.0, 6, 8, 0.0).unwrap();
        assert_eq!(h.len(), 8);
        assert!((h[5].1 - 72.0).abs() < 1e-12);
        assert!((h[6].1 - 84.0).abs() < 1e-12);
        let cut = harmonics(72.0, 6, 8, 59.0).unwrap();
        assert_eq!(cut.first().unwrap().0, 5);
        assert_eq!(harmonics(72.0, 6, 6, 0.0).unwrap().len(), 6);
    }

    #[test]
    fn sideband_pair() {
        assert_eq!(sidebands(78.0, 6.0).unwrap(), (84.0, 72.0));
        assert_eq!(sidebands(78.0, 0.0).unwrap(), (78.0, 78.0));
        assert!(matches!(sidebands(6.0, 6.0), Err(Error::Ordering(_))));
    }

    fn chain() -> ChainSpec {
        ChainSpec {
            multiplier_order: 6,
            f_generator_ghz: 72.0,
            f_rlo_ghz: 91.0,
            f_rif_ghz: 0.5,
            waveguide_cutoff_ghz: 59.0,
        }
    }

    #[test]
    fn constructed_spur() {
        let c = chain();
        // (5/6) f_S = 90.5 at f_S = 108.6; the USB image sits 1.2 GHz higher.
        let grid: Vec<f64> = (0..=100).map(|k| 108.1 + 0.01 * k as f64).collect();
        let target = 6.0 / 5.0 * (c.f_rlo_ghz - c.f_rif_ghz);
        let spurs = direct_conversion_spurs(&grid, &c, 6, DEFAULT_TOLERANCE_GHZ).unwrap();
        assert_eq!(spurs.len(), 1, "{spurs:?}");
        assert!((spurs[0] - target).abs() < 1e-9);
        assert!(direct_conversion_spurs(&[], &c, 6, 1e-3).unwrap().is_empty());
    }

    #[test]
    fn feature_assignment() {
        let res = [91.151];
        let q = [72.137];
        let observed = [91.151, 6.0 / 7.0 * 72.137, 80.0];
        let a = assign_features(&observed, &res, &q, 6, 5..=7, DEFAULT_TOLERANCE_GHZ).unwrap();
        assert_eq!(a.matched.len(), 2);
        assert_eq!(a.matched[0].source, FeatureSource::Resonator(0));
        assert_eq!(a.matched[0].harmonic_n, 6);
        assert_eq!(a.matched[0].residual_ghz, 0.0);
        assert_eq!(a.matched[1].source, FeatureSource::Qubit(0));
        assert_eq!(a.matched[1].harmonic_n, 7);
        assert_eq!(a.unmatched, vec![80.0]);
    }

    #[test]
    fn ties_prefer_small_n_then_resonator() {
        // 6/6 * 70 = 70 and 6/5 * (70 * 5/6) coincide exactly.
        let a = assign_features(&[70.0], &[70.0], &[70.0], 6, 5..=7, 1e-3).unwrap();
        assert_eq!(a.matched[0].source, FeatureSource::Resonator(0));
        let b = assign_features(&[70.0], &[70.0 * 7.0 / 6.0], &[70.0], 6, 5..=7, 1e-3).unwrap();
        assert_eq!(b.matched[0].source, FeatureSource::Qubit(0));
        assert_eq!(b.matched[0].harmonic_n, 6);
    }
}
