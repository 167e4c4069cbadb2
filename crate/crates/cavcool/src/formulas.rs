//! Closed-form stationary moments, cooling rates, optimal detuning, and the
//! weak/strong-confinement comparison identities.

use crate::error::{Error, Result};
use crate::moments::MomentState;
use crate::params::EffectiveParams;
use serde::Serialize;

/// nu*(kappa^2 + 4*delta_eff^2) - 16*eta^2*g_eff^2*delta_eff, the cubic
/// frequency appearing in every stationary denominator.
pub fn cubic_frequency(p: &EffectiveParams) -> f64 {
    let (g, de, kappa, nu, eta) = (p.g_eff, p.delta_eff, p.kappa, p.nu, p.eta);
    nu * (kappa * kappa + 4.0 * de * de) - 16.0 * eta * eta * g * g * de
}

/// All fourteen stationary expectation values plus the cubic frequency.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StationaryMoments {
    pub state: MomentState,
    pub mu3: f64,
}

/// Stationary state of the cooling equations in closed form.
///
/// k_x, k4 and k8 vanish identically. The expressions keep all printed
/// eta^2-and-higher terms; only the first order in eta is physically
/// trustworthy (higher orders would need couplings beyond the Lamb-Dicke
/// expansion), but the full forms are what the numerical stationary solve
/// must reproduce exactly.
pub fn stationary_closed_form(p: &EffectiveParams) -> Result<StationaryMoments> {
    let (g, de, kappa, nu, eta) = (p.g_eff, p.delta_eff, p.kappa, p.nu, p.eta);
    let mu3 = cubic_frequency(p);
    if mu3 == 0.0 {
        return Err(Error::SingularFormula { denominator: "mu^3".into() });
    }
    if de == 0.0 {
        return Err(Error::SingularFormula { denominator: "delta_eff".into() });
    }
    let mu6 = mu3 * mu3;
    let (g2, g3, g4, g5, g6) = (g * g, g * g * g, g.powi(4), g.powi(5), g.powi(6));
    let (eta2, eta3, eta4) = (eta * eta, eta.powi(3), eta.powi(4));
    let k2d2 = kappa * kappa + 4.0 * de * de;
    let k2_m_4d2 = kappa * kappa - 4.0 * de * de;

    let k_y = 4.0 * g * kappa * nu / mu3;
    let k_u = 8.0 * eta * g2 * kappa / mu3;
    let k_w = 8.0 * g * (4.0 * eta2 * g2 - de * nu) / mu3;
    // First term per the stationary solution of the cooling equations,
    // (kappa^2 + 4 delta_eff^2): forced by n = (g k_y + eta g k1)/kappa.
    let n = eta2 * g2 * k2d2 / (2.0 * de * mu3) + 4.0 * g2 * nu * nu * k2d2 / mu6
        - 128.0 * eta2 * g4 * nu * de / mu6
        + 256.0 * eta4 * g6 / mu6;
    let k1 = eta * g * kappa * k2d2 / (2.0 * de * mu3) - 64.0 * eta * g3 * kappa * nu * de / mu6
        + 256.0 * eta3 * g5 * kappa / mu6;
    let k2 = eta * g * k2d2 / mu3 + 32.0 * eta * g3 * kappa * kappa * nu / mu6;
    let k3 = eta * g / de;
    let k5 = -8.0 * g2 * nu * nu * k2_m_4d2 / mu6 + eta2 * g2 * k2_m_4d2 / (de * mu3)
        - 256.0 * eta2 * g4 * nu * de / mu6
        + 512.0 * eta4 * g6 / mu6;
    let k6 = -32.0 * g2 * kappa * nu * nu * de / mu6 + 4.0 * eta2 * g2 * kappa / mu3
        + 128.0 * eta2 * g4 * kappa * nu / mu6;
    let k7 = eta2 * g2 * k2d2 / (nu * mu3) + 32.0 * eta2 * g4 * kappa * kappa / mu6;
    let m = k2d2 / (16.0 * nu * de)
        + eta2 * g2 * (kappa * kappa - 8.0 * nu * nu + 16.0 * nu * de + 4.0 * de * de)
            / (2.0 * nu * mu3)
        + nu * k2d2 * (nu - 2.0 * de) / (4.0 * de * mu3)
        + 16.0 * eta2 * g4 * kappa * kappa / mu6;

    Ok(StationaryMoments {
        state: MomentState {
            m,
            n,
            k_x: 0.0,
            k_y,
            k_u,
            k_w,
            k1,
            k2,
            k3,
            k4: 0.0,
            k5,
            k6,
            k7,
            k8: 0.0,
        },
        mu3,
    })
}

/// Stationary phonon number to first order in eta:
/// (kappa^2 + 4 (nu - delta_eff)^2) / (16 nu delta_eff).
pub fn m_ss_first_order(p: &EffectiveParams) -> Result<f64> {
    if p.delta_eff == 0.0 {
        return Err(Error::SingularFormula { denominator: "delta_eff".into() });
    }
    if p.nu == 0.0 {
        return Err(Error::SingularFormula { denominator: "nu".into() });
    }
    let d = p.nu - p.delta_eff;
    Ok((p.kappa * p.kappa + 4.0 * d * d) / (16.0 * p.nu * p.delta_eff))
}

/// The detuning minimising the stationary phonon number, with its two limits.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OptimalDetuning {
    /// sqrt(kappa^2 + 4 nu^2) / 2
    pub optimal: f64,
    /// kappa/2, the nu << kappa limit
    pub weak_confinement_limit: f64,
    /// nu, the nu >> kappa limit
    pub strong_confinement_limit: f64,
}

pub fn optimal_detuning(p: &EffectiveParams) -> OptimalDetuning {
    OptimalDetuning {
        optimal: 0.5 * (p.kappa * p.kappa + 4.0 * p.nu * p.nu).sqrt(),
        weak_confinement_limit: 0.5 * p.kappa,
        strong_confinement_limit: p.nu,
    }
}

/// Numerically minimise the first-order stationary phonon number over the
/// detuning (golden-section search on a wide bracket).
pub fn minimize_m_ss_over_detuning(kappa: f64, nu: f64) -> f64 {
    let f = |de: f64| {
        let d = nu - de;
        (kappa * kappa + 4.0 * d * d) / (16.0 * nu * de)
    };
    let scale = kappa.max(nu);
    let (mut a, mut b) = (1e-4 * scale, 1e4 * scale);
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    // golden section in log space; the function is unimodal in the detuning
    let (mut la, mut lb) = (a.ln(), b.ln());
    for _ in 0..200 {
        let lc = lb - phi * (lb - la);
        let ld = la + phi * (lb - la);
        if f(lc.exp()) < f(ld.exp()) {
            lb = ld;
        } else {
            la = lc;
        }
    }
    a = la.exp();
    b = lb.exp();
    0.5 * (a + b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RateRegime {
    General,
    /// delta_eff = kappa/2 (weak-confinement optimum, Eq. gammasingle3 form)
    HalfKappaLimit,
    /// delta_eff = nu (strong-confinement optimum, Eq. gammasingle4 form)
    NuLimit,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoolingRateResult {
    pub gamma: f64,
    pub regime: RateRegime,
    pub params: EffectiveParams,
}

/// Denominator (kappa^2+4nu^2)^2 + 8 delta^2 (kappa^2-4nu^2) + 16 delta^4,
/// algebraically equal to (4 delta^2 + kappa^2 - 4 nu^2)^2 + 16 kappa^2 nu^2
/// and hence strictly positive for kappa, nu > 0.
pub fn rate_denominator(kappa: f64, nu: f64, de: f64) -> f64 {
    let k2n2 = kappa * kappa + 4.0 * nu * nu;
    k2n2 * k2n2 + 8.0 * de * de * (kappa * kappa - 4.0 * nu * nu) + 16.0 * de.powi(4)
}

/// Effective cooling rate gamma of the single reduced cooling equation
/// dm/dt = -gamma m. Negative delta_eff is accepted and yields gamma <= 0
/// (heating / no cooling).
pub fn cooling_rate(p: &EffectiveParams) -> CoolingRateResult {
    let (g, de, kappa, nu, eta) = (p.g_eff, p.delta_eff, p.kappa, p.nu, p.eta);
    let gamma = 64.0 * eta * eta * g * g * nu * de * kappa / rate_denominator(kappa, nu, de);
    let tol = 1e-12;
    let regime = if (de - 0.5 * kappa).abs() <= tol * 0.5 * kappa {
        RateRegime::HalfKappaLimit
    } else if (de - nu).abs() <= tol * nu {
        RateRegime::NuLimit
    } else {
        RateRegime::General
    };
    CoolingRateResult { gamma, regime, params: *p }
}

/// Simplified rate at delta_eff = kappa/2.
pub fn cooling_rate_half_kappa(p: &EffectiveParams) -> f64 {
    let (g, kappa, nu, eta) = (p.g_eff, p.kappa, p.nu, p.eta);
    8.0 * eta * eta * g * g * nu * kappa * kappa / (kappa.powi(4) + 4.0 * nu.powi(4))
}

/// Simplified rate at delta_eff = nu.
pub fn cooling_rate_nu(p: &EffectiveParams) -> f64 {
    let (g, kappa, nu, eta) = (p.g_eff, p.kappa, p.nu, p.eta);
    64.0 * eta * eta * g * g * nu * nu / (kappa * (kappa * kappa + 16.0 * nu * nu))
}

/// Adiabatically eliminated phonon-photon coherence k4 as a function of the
/// instantaneous phonon number m. Satisfies eta*g_eff*k4 = -gamma*m.
pub fn k4_adiabatic(p: &EffectiveParams, m: f64) -> f64 {
    let (g, de, kappa, nu, eta) = (p.g_eff, p.delta_eff, p.kappa, p.nu, p.eta);
    -64.0 * eta * g * nu * kappa * de * m / rate_denominator(kappa, nu, de)
}

/// Comparison of the two optimal-detuning choices at the given kappa, nu:
/// the square-root relation between the stationary phonon numbers and the
/// kappa/(8 nu) speed-up of the cooling rate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IdentityReport {
    pub m_ss_half_kappa: f64,
    pub m_ss_nu: f64,
    /// m_ss(kappa/2) / sqrt(m_ss(nu)); ~1 in the weak-confinement limit
    pub sqrt_relation_ratio: f64,
    pub sqrt_relation_deviation: f64,
    pub gamma_half_kappa: f64,
    pub gamma_nu: f64,
    /// gamma(kappa/2)/gamma(nu) versus kappa/(8 nu)
    pub rate_ratio: f64,
    pub rate_ratio_expected: f64,
    pub rate_ratio_deviation: f64,
    /// The relations are asymptotic statements for nu << kappa; flag whether
    /// the inputs are in that regime (nu <= kappa/8 here).
    pub weak_confinement_regime: bool,
}

pub fn identity_checks(p: &EffectiveParams) -> Result<IdentityReport> {
    let half = EffectiveParams { delta_eff: 0.5 * p.kappa, ..*p };
    let at_nu = EffectiveParams { delta_eff: p.nu, ..*p };
    let m_half = stationary_closed_form(&half)?.state.m;
    let m_nu = stationary_closed_form(&at_nu)?.state.m;
    let sqrt_ratio = m_half / m_nu.sqrt();
    let gamma_half = cooling_rate(&half).gamma;
    let gamma_nu = cooling_rate(&at_nu).gamma;
    let rate_ratio = gamma_half / gamma_nu;
    let expected = p.kappa / (8.0 * p.nu);
    Ok(IdentityReport {
        m_ss_half_kappa: m_half,
        m_ss_nu: m_nu,
        sqrt_relation_ratio: sqrt_ratio,
        sqrt_relation_deviation: (sqrt_ratio - 1.0).abs(),
        gamma_half_kappa: gamma_half,
        gamma_nu,
        rate_ratio,
        rate_ratio_expected: expected,
        rate_ratio_deviation: (rate_ratio / expected - 1.0).abs(),
        weak_confinement_regime: p.nu <= p.kappa / 8.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{build_drift, stationary_numeric};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn eff(g_eff: f64, delta_eff: f64, kappa: f64, nu: f64, eta: f64) -> EffectiveParams {
        EffectiveParams { g_eff, delta_eff, kappa, nu, eta, gamma_cap: 0.0 }
    }

    #[test]
    fn stationary_zero_components() {
        let s = stationary_closed_form(&eff(1e-4, 0.5, 1.0, 0.05, 0.1)).unwrap();
        assert_eq!(s.state.k_x, 0.0);
        assert_eq!(s.state.k4, 0.0);
        assert_eq!(s.state.k8, 0.0);
    }

    #[test]
    fn stationary_frozen_values() {
        // high-precision reference values for the canonical parameter point
        let s = stationary_closed_form(&eff(1e-4, 0.5, 1.0, 0.05, 0.1)).unwrap();
        assert_relative_eq!(s.state.m, 4.52500002000000176, max_relative = 1e-14);
        assert_relative_eq!(s.state.n, 2.2000000016000001408e-8, max_relative = 1e-13);
        assert_relative_eq!(s.state.k_y, 2.000000016000000128e-4, max_relative = 1e-13);
        assert_relative_eq!(s.state.k_w, -1.999999983999999872e-4, max_relative = 1e-13);
        assert_relative_eq!(s.state.k3, 2e-5, max_relative = 1e-14);
        assert_relative_eq!(s.mu3, 0.0999999992, max_relative = 1e-14);

        let s = stationary_closed_form(&eff(1e-4, 10.0, 1.0, 10.0, 0.1)).unwrap();
        assert_relative_eq!(s.state.m, 0.00062500000049998667733, max_relative = 1e-13);
    }

    #[test]
    fn stationary_errors_name_denominator() {
        let err = stationary_closed_form(&eff(1e-4, 0.0, 1.0, 0.05, 0.1)).unwrap_err();
        assert!(err.to_string().contains("delta_eff"), "{err}");
        // mu^3 = 0 by construction: nu (k^2+4d^2) = 16 eta^2 g^2 d, with the
        // expression shapes kept identical to cubic_frequency so the
        // cancellation is exact in f64
        let (g, de, kappa, eta) = (1.0_f64, 0.5_f64, 1.0_f64, 0.1_f64);
        let y = 16.0 * eta * eta * g * g * de;
        let nu = y / (kappa * kappa + 4.0 * de * de);
        assert_eq!(cubic_frequency(&eff(g, de, kappa, nu, eta)), 0.0);
        let err = stationary_closed_form(&eff(g, de, kappa, nu, eta)).unwrap_err();
        assert!(err.to_string().contains("mu^3"), "{err}");
    }

    #[test]
    fn first_order_examples() {
        let v = m_ss_first_order(&eff(1e-4, 0.5, 1.0, 0.05, 0.1)).unwrap();
        assert_relative_eq!(v, 4.525, max_relative = 1e-14);
        // exactly kappa^2/(16 nu^2) at delta_eff = nu
        let v = m_ss_first_order(&eff(1e-4, 10.0, 1.0, 10.0, 0.1)).unwrap();
        assert_relative_eq!(v, 1.0 / 1600.0, max_relative = 1e-14);
        // within 10% of kappa/(4 nu) = 5 in the weak-confinement regime
        let approx_weak = 1.0 / (4.0 * 0.05);
        assert!((4.525 - approx_weak).abs() / approx_weak < 0.10);
    }

    #[test]
    fn optimal_detuning_examples() {
        let d = optimal_detuning(&eff(0.0, 0.0, 1.0, 1.0, 0.1));
        assert_relative_eq!(d.optimal, 5.0_f64.sqrt() / 2.0, max_relative = 1e-15);
        // nu -> 0 limit
        let d = optimal_detuning(&eff(0.0, 0.0, 1.0, 1e-9, 0.1));
        assert_relative_eq!(d.optimal, 0.5, max_relative = 1e-9);
        assert_eq!(d.weak_confinement_limit, 0.5);
        // nu = 10 kappa: optimal within 0.13% of nu
        let d = optimal_detuning(&eff(0.0, 0.0, 1.0, 10.0, 0.1));
        assert!((d.optimal / 10.0 - 1.0).abs() < 0.0013);
    }

    #[test]
    fn numeric_minimum_matches_closed_form() {
        for nu in [0.02, 0.1, 1.0, 5.0] {
            let found = minimize_m_ss_over_detuning(1.0, nu);
            let expect = 0.5 * (1.0 + 4.0 * nu * nu).sqrt();
            assert_relative_eq!(found, expect, max_relative = 1e-7);
        }
    }

    #[test]
    fn cooling_rate_examples() {
        let r = cooling_rate(&eff(5e-4, 0.5, 1.0, 0.1, 0.1));
        assert_relative_eq!(r.gamma, 1.9992003198720511795e-9, max_relative = 1e-13);
        assert_eq!(r.regime, RateRegime::HalfKappaLimit);
        assert_relative_eq!(
            cooling_rate_half_kappa(&eff(5e-4, 0.5, 1.0, 0.1, 0.1)),
            r.gamma,
            max_relative = 1e-12
        );

        let r = cooling_rate(&eff(1e-4, 10.0, 1.0, 10.0, 0.1));
        assert_relative_eq!(r.gamma, 3.9975015615240474703e-10, max_relative = 1e-13);
        assert_eq!(r.regime, RateRegime::NuLimit);
        assert_relative_eq!(
            cooling_rate_nu(&eff(1e-4, 10.0, 1.0, 10.0, 0.1)),
            r.gamma,
            max_relative = 1e-12
        );

        assert_eq!(cooling_rate(&eff(5e-4, 0.5, 1.0, 0.1, 0.0)).gamma, 0.0);
    }

    #[test]
    fn rate_sign_and_invariance() {
        let p = eff(5e-4, 0.5, 1.0, 0.1, 0.1);
        let flipped = eff(-5e-4, 0.5, 1.0, 0.1, 0.1);
        assert_eq!(cooling_rate(&p).gamma, cooling_rate(&flipped).gamma);
        // negative detuning gives gamma <= 0 (heating)
        assert!(cooling_rate(&eff(5e-4, -0.5, 1.0, 0.1, 0.1)).gamma < 0.0);
    }

    #[test]
    fn denominator_identity_on_samples() {
        for (kappa, nu, de) in
            [(1.0, 0.05, 0.5), (1.0, 2.0, 0.3), (0.3, 7.0, 11.0), (2.5, 0.02, 0.9)]
        {
            let d1 = rate_denominator(kappa, nu, de);
            let s = 4.0 * de * de + kappa * kappa - 4.0 * nu * nu;
            let d2 = s * s + 16.0 * kappa * kappa * nu * nu;
            assert_relative_eq!(d1, d2, max_relative = 1e-12);
            assert!(d1 > 0.0);
        }
    }

    #[test]
    fn k4_examples_and_rate_consistency() {
        let p = eff(5e-4, 0.5, 1.0, 0.1, 0.1);
        assert_eq!(k4_adiabatic(&p, 0.0), 0.0);
        let k4 = k4_adiabatic(&p, 2500.0);
        assert_relative_eq!(k4, -0.09996001599360256, max_relative = 1e-12);
        // eta g k4 = -gamma m for sampled p, m (sign of g_eff cancels)
        for (g, m) in [(5e-4, 2500.0), (-5e-4, 2500.0), (1e-3, 7.0)] {
            let p = eff(g, 0.7, 1.0, 0.3, 0.1);
            let gamma = cooling_rate(&p).gamma;
            assert_relative_eq!(
                p.eta * p.g_eff * k4_adiabatic(&p, m),
                -gamma * m,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn identity_checks_weak_confinement() {
        let rep = identity_checks(&eff(1e-4, 0.0, 1.0, 0.05, 0.1)).unwrap();
        assert!(rep.weak_confinement_regime);
        assert!(rep.sqrt_relation_deviation < 0.15, "{}", rep.sqrt_relation_ratio);
        assert!(rep.rate_ratio_deviation < 0.15, "{}", rep.rate_ratio);
        assert_relative_eq!(rep.rate_ratio_expected, 2.5, max_relative = 1e-15);
        assert_relative_eq!(rep.rate_ratio, 2.599935001624959376, max_relative = 1e-12);

        // nu = kappa/8: the two rates are about equal
        let rep = identity_checks(&eff(1e-4, 0.0, 1.0, 0.125, 0.1)).unwrap();
        assert_relative_eq!(rep.rate_ratio_expected, 1.0, max_relative = 1e-15);
        assert!((rep.rate_ratio - 1.0).abs() < 0.25);
    }

    #[test]
    fn closed_form_matches_numeric_solve() {
        // the canonical cross-check: closed form vs A v = -b
        for (g, de, nu, eta) in [
            (1e-4, 0.5, 0.05, 0.1),
            (1e-4, 10.0, 10.0, 0.1),
            (5e-4, 0.5, 0.2, 0.1),
            (-2e-4, 1.3, 0.7, 0.05),
        ] {
            let p = eff(g, de, 1.0, nu, eta);
            let closed = stationary_closed_form(&p).unwrap().state;
            let sys = build_drift(&p);
            let (numeric, _) = stationary_numeric(&sys).unwrap();
            for (idx, (c, n)) in closed.to_array().iter().zip(numeric.to_array()).enumerate() {
                if *c == 0.0 {
                    assert_abs_diff_eq!(n, 0.0, epsilon = 1e-12);
                } else {
                    assert_relative_eq!(*c, n, max_relative = 1e-9, epsilon = 1e-300);
                    let _ = idx;
                }
            }
        }
    }

    #[test]
    fn first_order_close_to_full_for_small_eta_g() {
        // |m_first - m_full| / m_first <= 5% for eta = 0.1, |g| <= 1e-3
        for nu in [0.02, 0.05, 0.2, 1.0, 5.0, 20.0] {
            for de in [0.1, 0.5, 2.0, 10.0] {
                let p = eff(1e-3, de, 1.0, nu, 0.1);
                let full = stationary_closed_form(&p).unwrap().state.m;
                let first = m_ss_first_order(&p).unwrap();
                assert!(
                    ((full - first) / first).abs() <= 0.05,
                    "nu={nu} de={de}: full={full} first={first}"
                );
            }
        }
    }
}
