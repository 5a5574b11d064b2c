//! Device parameters, static derived quantities and the system Hamiltonian.
//!
//! Energies are ordinary frequencies in GHz (E/h), times in ns, so products
//! of the two are dimensionless. Angular factors appear only in the
//! integrator and in SI-unit helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{
    annihilation_op, identity_op, tensor_product, HilbertSpec, Operator,
};

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Superconducting flux quantum h / 2e.
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);

const GHZ: f64 = 1e9;
const FEMTO: f64 = 1e-15;

/// Below this E_J/E_C ratio the transmon approximations get shaky.
pub const TRANSMON_RATIO_WARN: f64 = 30.0;

/// Full parameter set of the qubit-resonator device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub ej_ghz: f64,
    pub ec_ghz: f64,
    pub g_ghz: f64,
    pub f_rr_bare_ghz: f64,
    /// Resonator linewidth.
    pub kappa_ghz: f64,
    pub f01_ghz: f64,
    pub alpha_ghz: f64,
    /// Qubit-resonator detuning f01 - f_rr_bare.
    pub delta_ghz: f64,
    pub chi_ghz: f64,
    pub c_j_ff: f64,
    pub c_q_ff: f64,
    pub j_c_ka_per_cm2: f64,
    pub a_j_um2: f64,
    pub t1_ns: f64,
    pub tphi_ns: f64,
    pub temperature_k: f64,
}

impl DeviceParams {
    /// The measured 72 GHz device. The bare resonator frequency is taken as
    /// f01 - Delta (91.1513 GHz), consistent with the quoted 91.151 GHz.
    pub fn table_one() -> Self {
        let f01 = 72.137;
        let delta = -19.0143;
        Self {
            ej_ghz: 2871.0,
            ec_ghz: 0.228,
            g_ghz: 0.607979,
            f_rr_bare_ghz: f01 - delta,
            kappa_ghz: 0.084281,
            f01_ghz: f01,
            alpha_ghz: -0.228,
            delta_ghz: delta,
            chi_ghz: -0.230e-3,
            c_j_ff: 45.0,
            c_q_ff: 39.0,
            j_c_ka_per_cm2: 1.43,
            a_j_um2: 0.56,
            t1_ns: 15.849,
            tphi_ns: 38.90,
            temperature_k: 0.87,
        }
    }

    /// Checks the hard invariants; returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let positive = [
            ("ej_ghz", self.ej_ghz),
            ("ec_ghz", self.ec_ghz),
            ("kappa_ghz", self.kappa_ghz),
            ("f01_ghz", self.f01_ghz),
            ("f_rr_bare_ghz", self.f_rr_bare_ghz),
            ("c_j_ff", self.c_j_ff),
            ("t1_ns", self.t1_ns),
            ("tphi_ns", self.tphi_ns),
            ("temperature_k", self.temperature_k),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha_ghz < 0.0) {
            return Err(Error::Domain(format!(
                "alpha_ghz must be negative, got {}",
                self.alpha_ghz
            )));
        }
        let implied = self.f01_ghz - self.f_rr_bare_ghz;
        if (implied - self.delta_ghz).abs() > 1e-6 {
            return Err(Error::Domain(format!(
                "delta_ghz = {} but f01_ghz - f_rr_bare_ghz = {implied}",
                self.delta_ghz
            )));
        }
        let mut warnings = Vec::new();
        let ratio = self.ej_ghz / self.ec_ghz;
        if ratio < TRANSMON_RATIO_WARN {
            warnings.push(format!(
                "E_J/E_C = {ratio:.1} is below the transmon regime ({TRANSMON_RATIO_WARN})"
            ));
        }
        Ok(warnings)
    }

    pub fn derived(&self) -> Result<DerivedQuantities> {
        Ok(DerivedQuantities {
            f01_pred: Derived::new(transmon_f01(self.ej_ghz, self.ec_ghz)?, "sqrt(8 EJ EC) - EC"),
            chi_pred: Derived::new(
                dispersive_shift(self.g_ghz, self.delta_ghz, self.alpha_ghz)?,
                "g^2/Delta * alpha/(Delta + alpha)",
            ),
            dressed_shift: Derived::new(dressed_shift(self.g_ghz, self.delta_ghz)?, "g^2/Delta"),
            n_crit: Derived::new(
                critical_photon_number(self.g_ghz, self.delta_ghz)?,
                "Delta^2/(4 g^2)",
            ),
            f_plasma: Derived::new(
                plasma_frequency(self.ej_ghz, self.c_j_ff)?,
                "1/(2 pi sqrt(L_J C_J))",
            ),
            q1: Derived::new(
                2.0 * std::f64::consts::PI * self.f01_ghz * self.t1_ns,
                "2 pi f01 T1",
            ),
        })
    }
}

/// A derived value together with the formula that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derived {
    pub value: f64,
    pub formula: &'static str,
}

impl Derived {
    fn new(value: f64, formula: &'static str) -> Self {
        Self { value, formula }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedQuantities {
    pub f01_pred: Derived,
    pub chi_pred: Derived,
    pub dressed_shift: Derived,
    pub n_crit: Derived,
    pub f_plasma: Derived,
    pub q1: Derived,
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Transmon 0-1 frequency, sqrt(8 E_J E_C) - E_C.
pub fn transmon_f01(ej: f64, ec: f64) -> Result<f64> {
    require_positive("E_J", ej)?;
    require_positive("E_C", ec)?;
    Ok((8.0 * ej * ec).sqrt() - ec)
}

/// e^2 / (2 C h) in GHz for a capacitance given in fF.
pub fn charging_energy(c_total_ff: f64) -> Result<f64> {
    require_positive("capacitance", c_total_ff)?;
    let c = c_total_ff * FEMTO;
    Ok(ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * c * PLANCK) / GHZ)
}

/// Second-order transmon dispersive shift (g^2/Delta) * alpha / (Delta + alpha).
pub fn dispersive_shift(g: f64, delta: f64, alpha: f64) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::Singularity("resonant qubit and resonator (Delta = 0)".into()));
    }
    if delta + alpha == 0.0 {
        return Err(Error::Singularity("straddling point (Delta + alpha = 0)".into()));
    }
    Ok(g * g / delta * alpha / (delta + alpha))
}

/// Dressed minus bare resonator frequency, g^2/Delta.
pub fn dressed_shift(g: f64, delta: f64) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::Singularity("resonant qubit and resonator (Delta = 0)".into()));
    }
    Ok(g * g / delta)
}

/// Josephson inductance (H) for a Josephson energy given as a frequency in GHz.
pub fn josephson_inductance(ej_ghz: f64) -> Result<f64> {
    require_positive("E_J", ej_ghz)?;
    let critical_current = 2.0 * std::f64::consts::PI * ej_ghz * GHZ * PLANCK / FLUX_QUANTUM;
    Ok(FLUX_QUANTUM / (2.0 * std::f64::consts::PI * critical_current))
}

/// Junction self-resonance 1/(2 pi sqrt(L_J C_J)) in GHz.
pub fn plasma_frequency(ej_ghz: f64, c_j_ff: f64) -> Result<f64> {
    require_positive("C_J", c_j_ff)?;
    let l_j = josephson_inductance(ej_ghz)?;
    Ok(1.0 / (2.0 * std::f64::consts::PI * (l_j * c_j_ff * FEMTO).sqrt()) / GHZ)
}

/// Plasma frequency in GHz from tunnel-barrier parameters.
///
/// With C_J = eps A / d and I_c = J_c A, 1/(L_J C_J) = 2 e J_c d / (hbar eps).
/// The area cancels. Neither the permittivity nor the thickness of the
/// barrier is pinned down for the device, so both are inputs here.
pub fn plasma_frequency_from_barrier(
    j_c_ka_per_cm2: f64,
    relative_permittivity: f64,
    thickness_nm: f64,
) -> Result<f64> {
    require_positive("J_c", j_c_ka_per_cm2)?;
    require_positive("permittivity", relative_permittivity)?;
    require_positive("thickness", thickness_nm)?;
    const EPS0: f64 = 8.854_187_818_8e-12;
    let j_c = j_c_ka_per_cm2 * 1e3 / 1e-4;
    let eps = relative_permittivity * EPS0;
    let d = thickness_nm * 1e-9;
    let omega_sq = 2.0 * ELEMENTARY_CHARGE * j_c * d / (HBAR * eps);
    Ok(omega_sq.sqrt() / (2.0 * std::f64::consts::PI) / GHZ)
}

/// Photon number Delta^2/(4 g^2) where the dispersive picture breaks down.
pub fn critical_photon_number(g: f64, delta: f64) -> Result<f64> {
    if g == 0.0 {
        return Err(Error::Singularity("zero coupling".into()));
    }
    Ok(delta * delta / (4.0 * g * g))
}

/// Two-level Boltzmann excited-state fraction.
pub fn thermal_population(f01_ghz: f64, temperature_k: f64) -> Result<f64> {
    require_positive("f01", f01_ghz)?;
    if temperature_k < 0.0 {
        return Err(Error::Domain(format!("temperature {temperature_k} K < 0")));
    }
    if temperature_k == 0.0 {
        return Ok(0.0);
    }
    let x = PLANCK * f01_ghz * GHZ / (BOLTZMANN * temperature_k);
    Ok(1.0 / (1.0 + x.exp()))
}

/// Temperature that produces excited fraction `p1` in a two-level system.
pub fn temperature_bound(p1: f64, f01_ghz: f64) -> Result<f64> {
    require_positive("f01", f01_ghz)?;
    if p1 >= 0.5 {
        return Err(Error::PopulationInversion(p1));
    }
    if !(p1 > 0.0) {
        return Err(Error::Domain(format!("population {p1} must be positive")));
    }
    let ratio = (1.0 / p1 - 1.0).ln();
    Ok(PLANCK * f01_ghz * GHZ / (BOLTZMANN * ratio))
}

/// Qubit and resonator ladder operators embedded in the composite space.
///
/// A resonator truncation of one level means the resonator is dropped; the
/// space is then the qubit alone and `a` is `None`.
#[derive(Debug, Clone)]
pub struct SystemModes {
    pub n_q: usize,
    pub n_r: usize,
    pub space: HilbertSpec,
    pub b: Operator,
    pub a: Option<Operator>,
}

impl SystemModes {
    pub fn new(n_q: usize, n_r: usize) -> Result<Self> {
        if n_q < 2 {
            return Err(Error::InvalidDimension(format!("qubit truncation {n_q} < 2")));
        }
        if n_r < 1 {
            return Err(Error::InvalidDimension(format!("resonator truncation {n_r} < 1")));
        }
        let bq = annihilation_op(n_q)?;
        if n_r == 1 {
            let space = bq.space().clone();
            return Ok(Self {
                n_q,
                n_r,
                space,
                b: bq,
                a: None,
            });
        }
        let ar = annihilation_op(n_r)?;
        let b = tensor_product(&bq, &identity_op(n_r)?);
        let a = tensor_product(&identity_op(n_q)?, &ar);
        Ok(Self {
            n_q,
            n_r,
            space: b.space().clone(),
            b,
            a: Some(a),
        })
    }

    pub fn dim(&self) -> usize {
        self.n_q * self.n_r
    }

    /// Composite basis index of |qubit, resonator>.
    pub fn index(&self, qubit: usize, resonator: usize) -> usize {
        qubit * self.n_r + resonator
    }

    pub fn qubit_number(&self) -> Operator {
        &self.b.dagger() * &self.b
    }

    pub fn resonator_number(&self) -> Operator {
        match &self.a {
            Some(a) => &a.dagger() * a,
            None => Operator::zeros(&self.space),
        }
    }

    /// |k> on the qubit tensor vacuum on the resonator.
    pub fn qubit_state(&self, k: usize) -> Result<Operator> {
        if k >= self.n_q {
            return Err(Error::InvalidDimension(format!(
                "qubit level {k} outside truncation {}",
                self.n_q
            )));
        }
        Operator::basis_projector(&self.space, self.index(k, 0))
    }

    /// Diagonal thermal qubit state at the given temperature (resonator in vacuum).
    pub fn thermal_qubit_state(&self, f01_ghz: f64, alpha_ghz: f64, temperature_k: f64) -> Result<Operator> {
        let mut weights = vec![0.0; self.n_q];
        for (k, w) in weights.iter_mut().enumerate() {
            let kf = k as f64;
            let energy = f01_ghz * kf + 0.5 * alpha_ghz * kf * (kf - 1.0);
            *w = if temperature_k > 0.0 {
                (-PLANCK * energy * GHZ / (BOLTZMANN * temperature_k)).exp()
            } else if k == 0 {
                1.0
            } else {
                0.0
            };
        }
        let z: f64 = weights.iter().sum();
        let mut rho = Operator::zeros(&self.space);
        for (k, w) in weights.iter().enumerate() {
            rho = &rho + &self.qubit_state(k)?.scale_real(w / z);
        }
        Ok(rho)
    }
}

/// Lab-frame H/h = f01 b'b + (alpha/2) b'b(b'b - 1) + f_rr a'a + g (a b' + a' b).
pub fn build_system_hamiltonian(params: &DeviceParams, n_q: usize, n_r: usize) -> Result<Operator> {
    build_rotating_hamiltonian(params, n_q, n_r, 0.0, 0.0)
}

/// System Hamiltonian in a frame rotating at `frame_ghz` for both modes.
///
/// `qubit_offset_ghz` shifts the qubit frequency, standing in for an
/// externally induced ac-Stark shift.
pub fn build_rotating_hamiltonian(
    params: &DeviceParams,
    n_q: usize,
    n_r: usize,
    frame_ghz: f64,
    qubit_offset_ghz: f64,
) -> Result<Operator> {
    let modes = SystemModes::new(n_q, n_r)?;
    Ok(hamiltonian_on_modes(params, &modes, frame_ghz, qubit_offset_ghz))
}

pub(crate) fn hamiltonian_on_modes(
    params: &DeviceParams,
    modes: &SystemModes,
    frame_ghz: f64,
    qubit_offset_ghz: f64,
) -> Operator {
    let nb = modes.qubit_number();
    let id = Operator::identity(&modes.space);
    let mut h = nb.scale_real(params.f01_ghz + qubit_offset_ghz - frame_ghz);
    let anharmonic = (&nb * &(&nb - &id)).scale_real(params.alpha_ghz / 2.0);
    h = &h + &anharmonic;
    if let Some(a) = &modes.a {
        let na = modes.resonator_number();
        h = &h + &na.scale_real(params.f_rr_bare_ghz - frame_ghz);
        let exchange = &(a * &modes.b.dagger()) + &(&a.dagger() * &modes.b);
        h = &h + &exchange.scale_real(params.g_ghz);
    }
    h
}

/// Dispersive shift from exact diagonalization: half the qubit-state
/// dependence of the dressed resonator frequency,
/// ((E11 - E10) - (E01 - E00)) / 2 with |qubit, resonator> labels.
pub fn exact_dispersive_shift(params: &DeviceParams, n_q: usize, n_r: usize) -> Result<f64> {
    if n_q < 3 || n_r < 2 {
        return Err(Error::InvalidDimension(
            "exact dispersive shift needs n_q >= 3 and n_r >= 2".into(),
        ));
    }
    let levels = dressed_energies(params, n_q, n_r)?;
    let e = |q: usize, r: usize| levels[q * n_r + r];
    Ok(((e(1, 1) - e(1, 0)) - (e(0, 1) - e(0, 0))) / 2.0)
}

/// Eigenenergies labelled by the bare state they overlap with most,
/// indexed like the composite basis (qubit-major).
pub fn dressed_energies(params: &DeviceParams, n_q: usize, n_r: usize) -> Result<Vec<f64>> {
    let h = build_system_hamiltonian(params, n_q, n_r)?;
    let (values, vectors) = h.eigen_hermitian()?;
    let n = values.len();
    let mut labelled = vec![f64::NAN; n];
    let mut taken = vec![false; n];
    // Assign eigenvectors greedily by largest overlap with an unassigned bare state.
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for col in 0..n {
        for row in 0..n {
            pairs.push((vectors[(row, col)].norm_sqr(), row, col));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut used_col = vec![false; n];
    for (_, row, col) in pairs {
        if !taken[row] && !used_col[col] {
            taken[row] = true;
            used_col[col] = true;
            labelled[row] = values[col];
        }
    }
    Ok(labelled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn f01_from_table_one() {
        let f = transmon_f01(2871.0, 0.228).unwrap();
        assert!(rel(f, 72.137) < 5e-4, "{f}");
        assert!((transmon_f01(1.0, 1.0).unwrap() - (8f64.sqrt() - 1.0)).abs() < 1e-12);
        let base = transmon_f01(100.0, 0.3).unwrap() + 0.3;
        let doubled = transmon_f01(200.0, 0.3).unwrap() + 0.3;
        assert!(rel(doubled, base * 2f64.sqrt()) < 1e-12);
        assert!(transmon_f01(0.0, 1.0).is_err());
        assert!(transmon_f01(1.0, -1.0).is_err());
    }

    #[test]
    fn charging_energy_values() {
        let oracle = |c_ff: f64| {
            ELEMENTARY_CHARGE.powi(2) / (2.0 * c_ff * 1e-15 * PLANCK) / 1e9
        };
        let ec = charging_energy(84.0).unwrap();
        assert!(rel(ec, oracle(84.0)) < 1e-12);
        assert!(rel(ec, 0.2305) < 1e-3, "{ec}");
        assert!(rel(ec, 0.228) < 0.02);
        assert!(rel(charging_energy(168.0).unwrap(), ec / 2.0) < 1e-12);
        assert!(rel(charging_energy(19.37).unwrap(), 1.0) < 1e-3);
        assert!(charging_energy(0.0).is_err());
    }

    #[test]
    fn dispersive_and_dressed_shifts() {
        let chi = dispersive_shift(0.607979, -19.0143, -0.228).unwrap();
        assert!(rel(chi, -0.230e-3) < 0.01, "{chi}");
        assert!((chi * 1e3 - (-0.2303)).abs() < 5e-4);
        assert_eq!(dispersive_shift(0.6, -19.0, 0.0).unwrap(), 0.0);
        let chi2 = dispersive_shift(1.2, -19.0, -0.2).unwrap();
        assert!(rel(chi2, 4.0 * dispersive_shift(0.6, -19.0, -0.2).unwrap()) < 1e-12);
        assert!(matches!(dispersive_shift(0.6, 0.0, -0.2), Err(Error::Singularity(_))));
        assert!(matches!(dispersive_shift(0.6, 0.2, -0.2), Err(Error::Singularity(_))));

        let ds = dressed_shift(0.607979, -19.0143).unwrap();
        assert!(rel(ds, -19.44e-3) < 5e-3, "{ds}");
        assert_eq!(dressed_shift(0.0, -19.0).unwrap(), 0.0);
        assert_eq!(dressed_shift(0.5, 2.0).unwrap(), -dressed_shift(0.5, -2.0).unwrap());
        assert!(dressed_shift(0.5, 0.0).is_err());
    }

    #[test]
    fn plasma_frequency_values() {
        let l_j = josephson_inductance(2871.0).unwrap();
        assert!((l_j * 1e12 - 56.9).abs() < 0.1, "{l_j}");
        let fp = plasma_frequency(2871.0, 45.0).unwrap();
        assert!((fp - 99.5).abs() < 0.2, "{fp}");
        assert!(rel(fp, 99.0) < 0.02);
        assert!(rel(plasma_frequency(2871.0, 180.0).unwrap(), fp / 2.0) < 1e-12);
        assert!(rel(plasma_frequency(4.0 * 2871.0, 45.0).unwrap(), 2.0 * fp) < 1e-12);
        assert!(plasma_frequency(-1.0, 45.0).is_err());
    }

    #[test]
    fn barrier_form_matches_lumped_form() {
        // C = eps A/d and I_c = J_c A give the same answer through both routes.
        let (jc, eps_r, d_nm, area_um2) = (1.43, 4.0, 1.1, 0.56);
        let area = area_um2 * 1e-12;
        let c_ff = eps_r * 8.854_187_818_8e-12 * area / (d_nm * 1e-9) / 1e-15;
        let ic = jc * 1e7 * area;
        let ej_ghz = ic * FLUX_QUANTUM / (2.0 * std::f64::consts::PI) / PLANCK / 1e9;
        let lumped = plasma_frequency(ej_ghz, c_ff).unwrap();
        let barrier = plasma_frequency_from_barrier(jc, eps_r, d_nm).unwrap();
        assert!(rel(barrier, lumped) < 1e-9, "{barrier} vs {lumped}");
    }

    #[test]
    fn critical_photons() {
        let n = critical_photon_number(0.607979, -19.0143).unwrap();
        let oracle = 19.0143f64.powi(2) / (4.0 * 0.607979f64.powi(2));
        assert!(rel(n, oracle) < 1e-14);
        assert!((n - 244.5).abs() < 0.1);
        assert!((critical_photon_number(0.3, 0.6).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            critical_photon_number(0.3, 2.0).unwrap(),
            critical_photon_number(0.3, -2.0).unwrap()
        );
        assert!(critical_photon_number(0.0, 1.0).is_err());
    }

    #[test]
    fn thermal_bounds() {
        let t = temperature_bound(0.0633, 72.137).unwrap();
        assert!(rel(t, 1.287) < 5e-3, "{t}");
        assert!(thermal_population(72.137, 1e-3).unwrap() < 1e-300);
        assert_eq!(thermal_population(72.137, 0.0).unwrap(), 0.0);
        let t_equal = PLANCK * 72.137e9 / BOLTZMANN;
        let p = thermal_population(72.137, t_equal).unwrap();
        assert!((p - 1.0 / (1.0 + std::f64::consts::E)).abs() < 1e-14);
        assert!(matches!(temperature_bound(0.5, 72.0), Err(Error::PopulationInversion(_))));
        for temp in [0.1, 0.87, 1.287, 5.0] {
            let p = thermal_population(72.137, temp).unwrap();
            assert!(rel(temperature_bound(p, 72.137).unwrap(), temp) < 1e-9);
        }
    }

    #[test]
    fn table_one_validates() {
        let p = DeviceParams::table_one();
        assert!(p.validate().unwrap().is_empty());
        let d = p.derived().unwrap();
        assert!(rel(d.q1.value, 7.18e3) < 2e-3);
        let mut bad = p.clone();
        bad.delta_ghz = -19.0;
        assert!(bad.validate().is_err());
        let mut weak = p;
        weak.ej_ghz = 5.0;
        assert_eq!(weak.validate().unwrap().len(), 1);
    }

    #[test]
    fn hamiltonian_limits() {
        let mut p = DeviceParams::table_one();
        p.g_ghz = 0.0;
        let h = build_system_hamiltonian(&p, 2, 1).unwrap();
        let ev = h.eigenvalues_hermitian().unwrap();
        assert!(ev[0].abs() < 1e-12 && (ev[1] - p.f01_ghz).abs() < 1e-12);

        let h3 = build_system_hamiltonian(&p, 3, 1).unwrap();
        let ev = h3.eigenvalues_hermitian().unwrap();
        assert!(((ev[2] - ev[0]) - 2.0 * (ev[1] - ev[0]) - p.alpha_ghz).abs() < 1e-12);

        assert!(build_system_hamiltonian(&p, 1, 3).is_err());
        assert!(build_system_hamiltonian(&p, 3, 0).is_err());
    }

    #[test]
    fn full_hamiltonian_dressed_splitting() {
        let p = DeviceParams::table_one();
        let h = build_system_hamiltonian(&p, 3, 5).unwrap();
        assert!(h.is_hermitian());
        assert_eq!(h.dim(), 15);
        let ev = h.eigenvalues_hermitian().unwrap();
        let splitting = ev[1] - ev[0];
        let bound = dressed_shift(p.g_ghz, p.delta_ghz).unwrap().abs();
        assert!((splitting - p.f01_ghz).abs() <= bound * 1.0001, "{splitting}");
        // The qubit is pushed away from the resonator, i.e. downward here.
        assert!(splitting < p.f01_ghz);
    }

    #[test]
    fn exact_chi_close_to_perturbative() {
        let p = DeviceParams::table_one();
        let exact = exact_dispersive_shift(&p, 4, 3).unwrap();
        let pert = dispersive_shift(p.g_ghz, p.delta_ghz, p.alpha_ghz).unwrap();
        assert!(rel(exact, pert) < 0.05, "{exact} vs {pert}");
    }
}
