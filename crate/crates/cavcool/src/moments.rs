//! The closed cooling equations: a 14-variable affine system for the first
//! and second moments of the phonon and photon modes, with exact
//! matrix-exponential propagation, a refined stationary solve, and
//! log-linear cooling-rate extraction.

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::ode::{self, Rk45Options};
use crate::params::EffectiveParams;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::io::{BufRead, Write};

pub const DIM: usize = 14;

// Index convention: coherences first in the order they are defined,
// populations last.
pub const IDX_KX: usize = 0;
pub const IDX_KY: usize = 1;
pub const IDX_KU: usize = 2;
pub const IDX_KW: usize = 3;
pub const IDX_K1: usize = 4;
pub const IDX_K2: usize = 5;
pub const IDX_K3: usize = 6;
pub const IDX_K4: usize = 7;
pub const IDX_K5: usize = 8;
pub const IDX_K6: usize = 9;
pub const IDX_K7: usize = 10;
pub const IDX_K8: usize = 11;
pub const IDX_N: usize = 12;
pub const IDX_M: usize = 13;

pub const NAMES: [&str; DIM] =
    ["k_x", "k_y", "k_u", "k_w", "k1", "k2", "k3", "k4", "k5", "k6", "k7", "k8", "n", "m"];

/// The 14 expectation values tracked by the cooling equations.
///
/// `m`/`n` are the mean phonon/photon numbers; the twelve `k` variables are
/// the real coherences. Vector ordering is fixed: index 0 = k_x, 1 = k_y,
/// 2 = k_u, 3 = k_w, 4..=11 = k1..k8, 12 = n, 13 = m.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MomentState {
    pub m: f64,
    pub n: f64,
    pub k_x: f64,
    pub k_y: f64,
    pub k_u: f64,
    pub k_w: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    pub k7: f64,
    pub k8: f64,
}

impl MomentState {
    pub fn to_array(self) -> [f64; DIM] {
        [
            self.k_x, self.k_y, self.k_u, self.k_w, self.k1, self.k2, self.k3, self.k4, self.k5,
            self.k6, self.k7, self.k8, self.n, self.m,
        ]
    }

    pub fn from_array(v: &[f64; DIM]) -> Self {
        MomentState {
            k_x: v[IDX_KX],
            k_y: v[IDX_KY],
            k_u: v[IDX_KU],
            k_w: v[IDX_KW],
            k1: v[IDX_K1],
            k2: v[IDX_K2],
            k3: v[IDX_K3],
            k4: v[IDX_K4],
            k5: v[IDX_K5],
            k6: v[IDX_K6],
            k7: v[IDX_K7],
            k8: v[IDX_K8],
            n: v[IDX_N],
            m: v[IDX_M],
        }
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_row_slice(&self.to_array())
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        let mut a = [0.0; DIM];
        a.copy_from_slice(v.as_slice());
        Self::from_array(&a)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Largest absolute componentwise difference.
    pub fn max_abs_diff(&self, other: &MomentState) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Affine generator dv/dt = A v + b of the cooling equations.
#[derive(Clone, Debug)]
pub struct DriftSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub params: EffectiveParams,
}

/// Transcription of the coupled moment equations into (A, b).
pub fn build_drift(p: &EffectiveParams) -> DriftSystem {
    let (g, de, kappa, nu, eta) = (p.g_eff, p.delta_eff, p.kappa, p.nu, p.eta);
    let eg = eta * g;
    let mut a = DMatrix::<f64>::zeros(DIM, DIM);
    let mut b = DVector::<f64>::zeros(DIM);

    // d k_x = -2 eta g k_y + nu k_u
    a[(IDX_KX, IDX_KY)] = -2.0 * eg;
    a[(IDX_KX, IDX_KU)] = nu;
    // d k_y = 2 g + delta k_w - kappa/2 k_y
    b[IDX_KY] = 2.0 * g;
    a[(IDX_KY, IDX_KW)] = de;
    a[(IDX_KY, IDX_KY)] = -0.5 * kappa;
    // d k_u = -nu k_x
    a[(IDX_KU, IDX_KX)] = -nu;
    // d k_w = 2 eta g k_u - delta k_y - kappa/2 k_w
    a[(IDX_KW, IDX_KU)] = 2.0 * eg;
    a[(IDX_KW, IDX_KY)] = -de;
    a[(IDX_KW, IDX_KW)] = -0.5 * kappa;
    // d k1 = 2 eta g (k7 + 2 m + 1) - nu k3 - delta k2 - kappa/2 k1
    a[(IDX_K1, IDX_K7)] = 2.0 * eg;
    a[(IDX_K1, IDX_M)] = 4.0 * eg;
    b[IDX_K1] = 2.0 * eg;
    a[(IDX_K1, IDX_K3)] = -nu;
    a[(IDX_K1, IDX_K2)] = -de;
    a[(IDX_K1, IDX_K1)] = -0.5 * kappa;
    // d k2 = 2 g k_u + nu k4 + delta k1 - kappa/2 k2
    a[(IDX_K2, IDX_KU)] = 2.0 * g;
    a[(IDX_K2, IDX_K4)] = nu;
    a[(IDX_K2, IDX_K1)] = de;
    a[(IDX_K2, IDX_K2)] = -0.5 * kappa;
    // d k3 = -2 eta g (k6 - k8) + nu k1 + delta k4 - kappa/2 k3
    a[(IDX_K3, IDX_K6)] = -2.0 * eg;
    a[(IDX_K3, IDX_K8)] = 2.0 * eg;
    a[(IDX_K3, IDX_K1)] = nu;
    a[(IDX_K3, IDX_K4)] = de;
    a[(IDX_K3, IDX_K3)] = -0.5 * kappa;
    // d k4 = -2 g k_x - 2 eta g (k5 - 2 n - 1) - nu k2 - delta k3 - kappa/2 k4
    a[(IDX_K4, IDX_KX)] = -2.0 * g;
    a[(IDX_K4, IDX_K5)] = -2.0 * eg;
    a[(IDX_K4, IDX_N)] = 4.0 * eg;
    b[IDX_K4] = 2.0 * eg;
    a[(IDX_K4, IDX_K2)] = -nu;
    a[(IDX_K4, IDX_K3)] = -de;
    a[(IDX_K4, IDX_K4)] = -0.5 * kappa;
    // d k5 = -2 g k_y + 2 eta g k1 - 2 delta k6 - kappa k5
    a[(IDX_K5, IDX_KY)] = -2.0 * g;
    a[(IDX_K5, IDX_K1)] = 2.0 * eg;
    a[(IDX_K5, IDX_K6)] = -2.0 * de;
    a[(IDX_K5, IDX_K5)] = -kappa;
    // d k6 = 2 g k_w + 2 eta g k2 + 2 delta k5 - kappa k6
    a[(IDX_K6, IDX_KW)] = 2.0 * g;
    a[(IDX_K6, IDX_K2)] = 2.0 * eg;
    a[(IDX_K6, IDX_K5)] = 2.0 * de;
    a[(IDX_K6, IDX_K6)] = -kappa;
    // d k7 = -2 eta g k4 - 2 nu k8
    a[(IDX_K7, IDX_K4)] = -2.0 * eg;
    a[(IDX_K7, IDX_K8)] = -2.0 * nu;
    // d k8 = -2 eta g k2 + 2 nu k7
    a[(IDX_K8, IDX_K2)] = -2.0 * eg;
    a[(IDX_K8, IDX_K7)] = 2.0 * nu;
    // d n = g k_y + eta g k1 - kappa n
    a[(IDX_N, IDX_KY)] = g;
    a[(IDX_N, IDX_K1)] = eg;
    a[(IDX_N, IDX_N)] = -kappa;
    // d m = eta g k4
    a[(IDX_M, IDX_K4)] = eg;

    DriftSystem { a, b, params: *p }
}

/// State at t = 0: mean phonon number m0, all coherences and the photon
/// number zero (the laser is switched on at t = 0).
pub fn initial_state(m0: f64) -> Result<MomentState> {
    if !(m0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("m0 must be >= 0, got {m0}")));
    }
    Ok(MomentState { m: m0, ..Default::default() })
}

/// Solve A x = rhs with partial-pivot LU followed by iterative refinement
/// using double-double residuals. Returns the solution and a 1-norm
/// condition estimate.
pub(crate) fn solve_refined(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let n = a.nrows();
    let lu = a.clone().lu();
    let mut x = lu
        .solve(rhs)
        .ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
    for _ in 0..3 {
        let mut r = DVector::<f64>::zeros(n);
        for i in 0..n {
            let mut acc = Dd::new(rhs[i]);
            for j in 0..n {
                acc = acc.sub(Dd::prod(a[(i, j)], x[j]));
            }
            r[i] = acc.to_f64();
        }
        match lu.solve(&r) {
            Some(dx) => x += dx,
            None => break,
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularSystem { condition: f64::INFINITY });
    }
    let cond = match a.clone().try_inverse() {
        Some(inv) => norm_1(a) * norm_1(&inv),
        None => f64::INFINITY,
    };
    Ok((x, cond))
}

fn norm_1(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PropagationMethod {
    MatrixExponential,
    Adaptive,
}

/// Time-stamped moment states with the parameter snapshot and the method
/// that produced them.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MomentState>,
    pub params: EffectiveParams,
    pub method: PropagationMethod,
}

/// Stability of the stationary point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StabilityReport {
    pub max_re_eigenvalue: f64,
    pub hurwitz: bool,
    /// True only when the stationary state is actually attracting.
    pub attracting: bool,
    pub condition_estimate: f64,
}

const CONDITION_LIMIT: f64 = 1e14;

/// Stationary state from A v = -b, with eigenvalue-based stability report.
pub fn stationary_numeric(sys: &DriftSystem) -> Result<(MomentState, StabilityReport)> {
    let (v, cond) = solve_refined(&sys.a, &(-&sys.b))?;
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::SingularSystem { condition: cond });
    }
    let eigs = sys.a.complex_eigenvalues();
    let max_re = eigs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let hurwitz = max_re < 0.0;
    let report = StabilityReport {
        max_re_eigenvalue: max_re,
        hurwitz,
        attracting: hurwitz,
        condition_estimate: cond,
    };
    Ok((MomentState::from_vector(&v), report))
}

/// Propagate the affine system to each output time.
///
/// For invertible A this evaluates v(t) = exp(A t)(v0 - v*) + v* with
/// v* = -A^{-1} b (scaling-and-squaring matrix exponential), which is the
/// exact solution up to rounding. A singular drift (eta*g_eff = 0) has no
/// isolated stationary state; the adaptive integrator takes over.
pub fn evolve(sys: &DriftSystem, v0: &MomentState, times: &[f64]) -> Result<Trajectory> {
    if times.is_empty() {
        return Err(Error::InvalidParameter("evolve needs at least one output time".into()));
    }
    if times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "output times must be strictly increasing and nonnegative".into(),
        ));
    }
    match solve_refined(&sys.a, &(-&sys.b)) {
        Ok((vstar, cond)) if cond <= CONDITION_LIMIT => {
            let dv0 = v0.to_vector() - &vstar;
            let mut states = Vec::with_capacity(times.len());
            for &t in times {
                if t == 0.0 {
                    states.push(*v0);
                    continue;
                }
                let e = (&sys.a * t).exp();
                let v = &vstar + e * &dv0;
                states.push(MomentState::from_vector(&v));
            }
            Ok(Trajectory {
                times: times.to_vec(),
                states,
                params: sys.params,
                method: PropagationMethod::MatrixExponential,
            })
        }
        _ => evolve_adaptive(sys, v0, times),
    }
}

/// Dense-output adaptive fallback for singular drift matrices.
fn evolve_adaptive(sys: &DriftSystem, v0: &MomentState, times: &[f64]) -> Result<Trajectory> {
    let a = &sys.a;
    let b = &sys.b;
    let rhs = |y: &Vec<f64>| -> Vec<f64> {
        let mut out = vec![0.0; DIM];
        for i in 0..DIM {
            let mut acc = b[i];
            for j in 0..DIM {
                acc += a[(i, j)] * y[j];
            }
            out[i] = acc;
        }
        out
    };
    let y0 = v0.to_array().to_vec();
    let opts = Rk45Options { rtol: 1e-12, atol: 1e-14, ..Default::default() };
    let (ys, _) = ode::integrate(rhs, &y0, times, &opts, |_| Ok(()))?;
    let states = ys
        .into_iter()
        .map(|y| {
            let mut arr = [0.0; DIM];
            arr.copy_from_slice(&y);
            MomentState::from_array(&arr)
        })
        .collect();
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        params: sys.params,
        method: PropagationMethod::Adaptive,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FitDiagnostics {
    pub r_squared: f64,
    pub points_used: usize,
    pub window: (f64, f64),
}

/// Log-linear least-squares estimate of the cooling rate.
///
/// Fits ln(m(t) - m_ss_hint) over the window where m is between
/// max(10*m_ss_hint, 0.01*m(0)) and 0.9*m(0); returns the negated slope.
pub fn fit_cooling_rate(traj: &Trajectory, m_ss_hint: f64) -> Result<(f64, FitDiagnostics)> {
    let m_first = traj
        .states
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty trajectory".into()))?
        .m;
    if m_first <= 10.0 * m_ss_hint.max(1e-12) {
        return Err(Error::InsufficientDecay(format!(
            "m(t_first) = {m_first:.6e} is not above 10x the stationary hint {m_ss_hint:.6e}"
        )));
    }
    let lo = (10.0 * m_ss_hint).max(0.01 * m_first);
    let hi = 0.9 * m_first;
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let excess = s.m - m_ss_hint;
        if s.m >= lo && s.m <= hi && excess > 0.0 {
            ts.push(*t);
            ys.push(excess.ln());
        }
    }
    if ts.len() < 2 {
        return Err(Error::InsufficientDecay(format!(
            "fit window [{lo:.3e}, {hi:.3e}] contains {} samples",
            ts.len()
        )));
    }
    let n = ts.len() as f64;
    let tbar = ts.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxy: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - tbar) * (y - ybar)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - tbar) * (t - tbar)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientDecay("degenerate time window".into()));
    }
    let slope = sxy / sxx;
    let syy: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((-slope, FitDiagnostics { r_squared, points_used: ts.len(), window: (lo, hi) }))
}

/// Write the trajectory CSV: header `t,m,n,k_x,k_y,k_u,k_w,k1..k8`, one row
/// per time, 17 significant digits. `extra` appends named columns (e.g. the
/// analytic overlay `m_analytic`, or the oracle's `p1`).
pub fn write_trajectory_csv<W: Write>(
    w: &mut W,
    times: &[f64],
    states: &[MomentState],
    extra: &[(&str, &[f64])],
) -> Result<()> {
    debug_assert_eq!(times.len(), states.len());
    let mut header = String::from("t,m,n,k_x,k_y,k_u,k_w,k1,k2,k3,k4,k5,k6,k7,k8");
    for (name, col) in extra {
        debug_assert_eq!(col.len(), times.len());
        header.push(',');
        header.push_str(name);
    }
    writeln!(w, "{header}")?;
    for (i, (t, s)) in times.iter().zip(states).enumerate() {
        write!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            t, s.m, s.n, s.k_x, s.k_y, s.k_u, s.k_w, s.k1, s.k2, s.k3, s.k4, s.k5, s.k6, s.k7, s.k8
        )?;
        for (_, col) in extra {
            write!(w, ",{:.16e}", col[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Read back a trajectory CSV produced by [`write_trajectory_csv`].
/// Extra columns are returned with their header names.
#[allow(clippy::type_complexity)]
pub fn read_trajectory_csv<R: BufRead>(
    r: R,
) -> Result<(Vec<f64>, Vec<MomentState>, Vec<(String, Vec<f64>)>)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Io("empty CSV".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 15 || cols[0] != "t" {
        return Err(Error::Io(format!("unexpected CSV header: {header}")));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut extra: Vec<(String, Vec<f64>)> =
        cols[15..].iter().map(|c| (c.to_string(), Vec::new())).collect();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|e| Error::Io(format!("bad CSV value: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != cols.len() {
            return Err(Error::Io("ragged CSV row".into()));
        }
        times.push(vals[0]);
        states.push(MomentState {
            m: vals[1],
            n: vals[2],
            k_x: vals[3],
            k_y: vals[4],
            k_u: vals[5],
            k_w: vals[6],
            k1: vals[7],
            k2: vals[8],
            k3: vals[9],
            k4: vals[10],
            k5: vals[11],
            k6: vals[12],
            k7: vals[13],
            k8: vals[14],
        });
        for (k, (_, col)) in extra.iter_mut().enumerate() {
            col.push(vals[15 + k]);
        }
    }
    Ok((times, states, extra))
}
