//! Adaptive Dormand-Prince 5(4) integration for autonomous linear systems.

use crate::error::{Error, Result};

/// State vector operations needed by the integrator.
pub trait OdeState: Clone {
    fn zeros_like(&self) -> Self;
    /// self += c * other
    fn scaled_add(&mut self, c: f64, other: &Self);
    /// Weighted RMS of (self - reference) against atol + rtol*|y| scales,
    /// where `y_scale` supplies the magnitudes.
    fn error_norm(&self, reference: &Self, y_scale: &Self, atol: f64, rtol: f64) -> f64;
}

impl OdeState for Vec<f64> {
    fn zeros_like(&self) -> Self {
        vec![0.0; self.len()]
    }

    fn scaled_add(&mut self, c: f64, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += c * b;
        }
    }

    fn error_norm(&self, reference: &Self, y_scale: &Self, atol: f64, rtol: f64) -> f64 {
        let mut acc = 0.0;
        for ((e, r), y) in self.iter().zip(reference).zip(y_scale) {
            let w = atol + rtol * y.abs().max(r.abs());
            let q = (e - r) / w;
            acc += q * q;
        }
        (acc / self.len() as f64).sqrt()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Rk45Options {
    pub rtol: f64,
    pub atol: f64,
    pub h_initial: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: u64,
}

impl Default for Rk45Options {
    fn default() -> Self {
        Rk45Options { rtol: 1e-9, atol: 1e-12, h_initial: None, h_max: None, max_steps: 50_000_000 }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Rk45Stats {
    pub steps_accepted: u64,
    pub steps_rejected: u64,
    pub rhs_evaluations: u64,
}

// Dormand-Prince RK5(4)7M tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `y' = f(y)` from t = 0, returning the state at each requested
/// output time (strictly increasing, >= 0). `post_accept` runs after every
/// accepted step (the Lindblad driver renormalizes the trace there).
pub fn integrate<S, F, P>(
    f: F,
    y0: &S,
    t_out: &[f64],
    opts: &Rk45Options,
    mut post_accept: P,
) -> Result<(Vec<S>, Rk45Stats)>
where
    S: OdeState,
    F: Fn(&S) -> S,
    P: FnMut(&mut S) -> Result<()>,
{
    if t_out.is_empty() {
        return Ok((Vec::new(), Rk45Stats::default()));
    }
    if t_out[0] < 0.0 || t_out.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "output times must be strictly increasing and nonnegative".into(),
        ));
    }

    let t_end = *t_out.last().unwrap();
    let mut outputs = Vec::with_capacity(t_out.len());
    let mut stats = Rk45Stats::default();
    let mut t = 0.0_f64;
    let mut y = y0.clone();
    let mut next_out = 0;

    while next_out < t_out.len() && t_out[next_out] <= t {
        // t_out[0] == 0
        outputs.push(y.clone());
        next_out += 1;
    }
    if next_out >= t_out.len() {
        return Ok((outputs, stats));
    }

    let mut k0 = f(&y);
    stats.rhs_evaluations += 1;
    let mut h = opts.h_initial.unwrap_or((t_end / 1e3).min(1e-2).max(1e-8));
    if let Some(h_max) = opts.h_max {
        h = h.min(h_max);
    }
    let h_floor = t_end * 1e-14 + f64::MIN_POSITIVE;

    let mut ks: Vec<S> = Vec::with_capacity(7);
    loop {
        if stats.steps_accepted + stats.steps_rejected > opts.max_steps {
            return Err(Error::Stiffness(format!(
                "exceeded {} steps at t = {t:.6e}",
                opts.max_steps
            )));
        }
        let mut h_step = h.min(t_end - t);
        // land exactly on the next output time
        if t_out[next_out] - t < h_step {
            h_step = t_out[next_out] - t;
        }
        if h_step < h_floor {
            return Err(Error::Stiffness(format!("step underflow at t = {t:.6e}")));
        }

        ks.clear();
        ks.push(k0.clone());
        for (i, row) in A.iter().enumerate() {
            let mut yi = y.clone();
            for (j, &c) in row.iter().take(i + 1).enumerate() {
                if c != 0.0 {
                    yi.scaled_add(h_step * c, &ks[j]);
                }
            }
            ks.push(f(&yi));
            stats.rhs_evaluations += 1;
        }

        let mut y5 = y.clone();
        let mut y4 = y.clone();
        for (i, k) in ks.iter().enumerate() {
            if B5[i] != 0.0 {
                y5.scaled_add(h_step * B5[i], k);
            }
            if B4[i] != 0.0 {
                y4.scaled_add(h_step * B4[i], k);
            }
        }

        let err = y5.error_norm(&y4, &y, opts.atol, opts.rtol);
        if err <= 1.0 {
            t += h_step;
            y = y5;
            post_accept(&mut y)?;
            stats.steps_accepted += 1;
            while next_out < t_out.len() && t_out[next_out] <= t + h_floor {
                outputs.push(y.clone());
                next_out += 1;
            }
            if next_out >= t_out.len() {
                return Ok((outputs, stats));
            }
            // FSAL does not hold after post_accept mutations; re-evaluate.
            k0 = f(&y);
            stats.rhs_evaluations += 1;
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).min(5.0) };
            h = (h_step * grow).min(opts.h_max.unwrap_or(f64::INFINITY));
        } else {
            stats.steps_rejected += 1;
            h = h_step * (0.9 * err.powf(-0.2)).max(0.1);
        }
    }
}
