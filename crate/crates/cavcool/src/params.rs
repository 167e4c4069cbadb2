//! Physical parameters, adiabatic-elimination derived quantities, and
//! operating-regime classification.
//!
//! All rates share one frequency unit; the conventional choice is kappa = 1
//! with times in units of 1/kappa.

use crate::error::{Error, Result};
use serde::Serialize;

/// Raw parameters of the driven atom-cavity system.
///
/// `omega` is the laser Rabi frequency, `g` the atom-cavity coupling,
/// `delta_cap` the atom detuning (capital delta), `delta` the cavity-laser
/// detuning, `kappa`/`gamma_cap` the cavity/atomic decay rates, `nu` the trap
/// phonon frequency and `eta` the Lamb-Dicke parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RawParams {
    pub omega: f64,
    pub g: f64,
    pub delta_cap: f64,
    pub delta: f64,
    pub kappa: f64,
    pub gamma_cap: f64,
    pub nu: f64,
    pub eta: f64,
}

/// Parameters of the phonon-photon model after the atom has been eliminated.
///
/// `g_eff` is stored signed; it is negative for positive g, omega, delta_cap.
/// All closed forms downstream depend on it through even powers or through
/// eta*g_eff products that cancel consistently, and the drift matrix uses the
/// signed value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EffectiveParams {
    pub g_eff: f64,
    pub delta_eff: f64,
    pub kappa: f64,
    pub nu: f64,
    pub eta: f64,
    /// Atomic decay, carried through for regime condition checks only.
    pub gamma_cap: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Confinement {
    Strong,
    Weak,
    Intermediate,
}

/// Detuning choice for the spontaneous-emission cooperativity bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetuningChoice {
    /// delta_eff = kappa/2 (weak confinement optimum)
    HalfKappa,
    /// delta_eff = nu (strong confinement optimum)
    Nu,
}

/// Thresholds used by [`regime_report`]; the paper only states inequalities
/// (`>>`), so concrete factors are configurable engineering defaults.
#[derive(Clone, Copy, Debug)]
pub struct RegimeOptions {
    pub confinement_threshold: f64,
    pub timescale_factor: f64,
    pub lamb_dicke_max: f64,
    pub spontaneous_margin: f64,
}

impl Default for RegimeOptions {
    fn default() -> Self {
        RegimeOptions {
            confinement_threshold: 10.0,
            timescale_factor: 100.0,
            lamb_dicke_max: 0.2,
            spontaneous_margin: 10.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RegimeReport {
    pub confinement: Confinement,
    pub timescale_ok: bool,
    pub timescale_ratio: f64,
    pub lamb_dicke_ok: bool,
    pub eta: f64,
    pub cooperativity_required: f64,
    /// g^2/(kappa*Gamma), or None when Gamma = 0.
    pub cooperativity_actual: Option<f64>,
    pub spontaneous_emission_ok: bool,
    pub spontaneous_ratio: f64,
}

impl RawParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.nu > 0.0) {
            return Err(Error::InvalidParameter(format!("nu must be > 0, got {}", self.nu)));
        }
        if self.gamma_cap < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gamma_cap must be >= 0, got {}",
                self.gamma_cap
            )));
        }
        if self.eta < 0.0 {
            return Err(Error::InvalidParameter(format!("eta must be >= 0, got {}", self.eta)));
        }
        Ok(())
    }
}

impl EffectiveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.nu > 0.0) {
            return Err(Error::InvalidParameter(format!("nu must be > 0, got {}", self.nu)));
        }
        if self.eta < 0.0 {
            return Err(Error::InvalidParameter(format!("eta must be >= 0, got {}", self.eta)));
        }
        Ok(())
    }
}

/// Adiabatic elimination of the atomic excited state:
/// g_eff = -g*omega/(2*delta_cap), delta_eff = delta - g^2/delta_cap.
pub fn derive_effective(raw: &RawParams) -> Result<EffectiveParams> {
    raw.validate()?;
    if raw.delta_cap == 0.0 {
        return Err(Error::InvalidParameter(
            "delta_cap = 0: adiabatic elimination needs a nonzero atom detuning".into(),
        ));
    }
    Ok(EffectiveParams {
        g_eff: -raw.g * raw.omega / (2.0 * raw.delta_cap),
        delta_eff: raw.delta - raw.g * raw.g / raw.delta_cap,
        kappa: raw.kappa,
        nu: raw.nu,
        eta: raw.eta,
        gamma_cap: raw.gamma_cap,
    })
}

/// Strong / weak / intermediate confinement from the nu-to-kappa ratio.
pub fn classify_confinement(p: &EffectiveParams, threshold: f64) -> Confinement {
    debug_assert!(threshold > 1.0);
    if p.nu >= threshold * p.kappa {
        Confinement::Strong
    } else if p.kappa >= threshold * p.nu {
        Confinement::Weak
    } else {
        Confinement::Intermediate
    }
}

/// min(kappa, nu)/|eta*g_eff| versus a separation factor.
///
/// Returns `(true, +inf)` when the coupling is switched off (eta = 0 or
/// g_eff = 0), since the slow variable is then exactly decoupled.
pub fn check_timescale_separation(p: &EffectiveParams, factor: f64) -> (bool, f64) {
    debug_assert!(factor > 1.0);
    let coupling = (p.eta * p.g_eff).abs();
    if coupling == 0.0 {
        return (true, f64::INFINITY);
    }
    let ratio = p.kappa.min(p.nu) / coupling;
    (ratio > factor, ratio)
}

/// Lower bound on g^2/(kappa*Gamma) below which spontaneous emission cannot
/// be neglected, for the two optimal-detuning choices.
pub fn required_cooperativity(p: &EffectiveParams, choice: DetuningChoice) -> Result<f64> {
    if p.eta == 0.0 {
        return Err(Error::InvalidParameter(
            "eta = 0: the cooperativity bound diverges (no phonon-photon coupling)".into(),
        ));
    }
    if !(p.nu > 0.0) || !(p.kappa > 0.0) {
        return Err(Error::InvalidParameter("required_cooperativity needs nu > 0, kappa > 0".into()));
    }
    let (kappa, nu, eta2) = (p.kappa, p.nu, p.eta * p.eta);
    Ok(match choice {
        DetuningChoice::HalfKappa => {
            (kappa.powi(4) + 4.0 * nu.powi(4)) / (8.0 * eta2 * nu * kappa.powi(3))
        }
        DetuningChoice::Nu => (kappa * kappa + 16.0 * nu * nu) / (64.0 * eta2 * nu * nu),
    })
}

/// Ratio of the cooling rate to the spontaneous-emission probability density
/// Gamma*Omega^2/(4*delta_cap^2), with a pass/fail against `margin`.
pub fn check_spontaneous_emission(raw: &RawParams, gamma: f64, margin: f64) -> Result<(bool, f64)> {
    if raw.delta_cap == 0.0 {
        return Err(Error::InvalidParameter(
            "delta_cap = 0 in spontaneous-emission check".into(),
        ));
    }
    if raw.gamma_cap == 0.0 {
        return Ok((true, f64::INFINITY));
    }
    let emission = raw.gamma_cap * raw.omega * raw.omega / (4.0 * raw.delta_cap * raw.delta_cap);
    let ratio = gamma / emission;
    Ok((ratio > margin, ratio))
}

/// Full operating-regime report. `gamma` is the cooling rate used for the
/// spontaneous-emission comparison (see `formulas::cooling_rate`).
pub fn regime_report(raw: &RawParams, gamma: f64, opts: &RegimeOptions) -> Result<RegimeReport> {
    let eff = derive_effective(raw)?;
    let confinement = classify_confinement(&eff, opts.confinement_threshold);
    let (timescale_ok, timescale_ratio) = check_timescale_separation(&eff, opts.timescale_factor);
    // The bound that matters is the one for the detuning the regime calls for;
    // the paper recommends delta_eff = nu once kappa < 4 nu.
    let choice = if eff.kappa >= eff.nu { DetuningChoice::HalfKappa } else { DetuningChoice::Nu };
    let cooperativity_required = required_cooperativity(&eff, choice)?;
    let cooperativity_actual = if raw.gamma_cap > 0.0 {
        Some(raw.g * raw.g / (raw.kappa * raw.gamma_cap))
    } else {
        None
    };
    let (spontaneous_emission_ok, spontaneous_ratio) =
        check_spontaneous_emission(raw, gamma, opts.spontaneous_margin)?;
    Ok(RegimeReport {
        confinement,
        timescale_ok,
        timescale_ratio,
        lamb_dicke_ok: eff.eta <= opts.lamb_dicke_max,
        eta: eff.eta,
        cooperativity_required,
        cooperativity_actual,
        spontaneous_emission_ok,
        spontaneous_ratio,
    })
}
