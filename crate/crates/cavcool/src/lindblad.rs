//! Independent density-matrix oracle on truncated Fock spaces.
//!
//! Three models: the effective phonon-photon model (validates the moment
//! equations, which are exact for it), the full atom-phonon-cavity model
//! (validates the adiabatic elimination), and a two-level-system comparator
//! obtained by replacing the cavity mode with the atomic lowering operator.

use crate::error::{Error, Result};
use crate::moments::MomentState;
use crate::ode::{self, OdeState, Rk45Options};
use crate::params::{EffectiveParams, RawParams};
use crate::sparse::Csr;
use nalgebra::DMatrix;
use ndarray::{Array2, Zip};
use num_complex::Complex64 as C64;
use serde::Serialize;

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Truncation cutoffs and the dimension budget that keeps runs desk-scale.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FockConfig {
    /// Highest retained phonon Fock state N_b (dimension N_b + 1).
    pub phonon_cutoff: usize,
    /// Highest retained photon Fock state N_c (dimension N_c + 1).
    pub photon_cutoff: usize,
    pub atom_included: bool,
    pub dimension_budget: usize,
}

pub const DEFAULT_DIMENSION_BUDGET: usize = 20_000;

impl FockConfig {
    pub fn new(phonon_cutoff: usize, photon_cutoff: usize, atom_included: bool) -> Self {
        FockConfig {
            phonon_cutoff,
            photon_cutoff,
            atom_included,
            dimension_budget: DEFAULT_DIMENSION_BUDGET,
        }
    }
}

/// Which tensor factors a model's Hilbert space has. Ordering is fixed as
/// atom (slowest) x phonon x photon (fastest).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ModeLayout {
    pub atom: bool,
    pub phonon_cutoff: usize,
    /// None for the TLS comparator, which has no cavity mode.
    pub photon_cutoff: Option<usize>,
}

impl ModeLayout {
    pub fn dim(&self) -> usize {
        let a = if self.atom { 2 } else { 1 };
        a * (self.phonon_cutoff + 1) * self.photon_cutoff.map_or(1, |n| n + 1)
    }

    pub fn basis_index(&self, atom_excited: usize, m: usize, n: usize) -> usize {
        debug_assert!(m <= self.phonon_cutoff);
        let nc = self.photon_cutoff.map_or(1, |n| n + 1);
        let idx_atom = if self.atom { atom_excited } else { 0 };
        (idx_atom * (self.phonon_cutoff + 1) + m) * nc + n
    }

    /// Embed factor operators into the product space (None = identity).
    fn embed(&self, atom: Option<&Csr>, phonon: Option<&Csr>, photon: Option<&Csr>) -> Csr {
        let mut op: Option<Csr> = None;
        let mut push = |factor: Csr| {
            op = Some(match op.take() {
                Some(acc) => Csr::kron(&acc, &factor),
                None => factor,
            });
        };
        if self.atom {
            push(atom.cloned().unwrap_or_else(|| Csr::identity(2)));
        } else {
            debug_assert!(atom.is_none());
        }
        push(phonon.cloned().unwrap_or_else(|| Csr::identity(self.phonon_cutoff + 1)));
        if let Some(nc) = self.photon_cutoff {
            push(photon.cloned().unwrap_or_else(|| Csr::identity(nc + 1)));
        } else {
            debug_assert!(photon.is_none());
        }
        op.unwrap()
    }
}

/// Bosonic annihilation operator on a cutoff+1 dimensional space.
pub fn annihilation(cutoff: usize) -> Csr {
    let trips =
        (1..=cutoff).map(|k| (k - 1, k, c((k as f64).sqrt()))).collect();
    Csr::from_triplets(cutoff + 1, trips)
}

pub fn number_op(cutoff: usize) -> Csr {
    let trips = (1..=cutoff).map(|k| (k, k, c(k as f64))).collect();
    Csr::from_triplets(cutoff + 1, trips)
}

/// b + b^dagger
pub fn position_op(cutoff: usize) -> Csr {
    let b = annihilation(cutoff);
    Csr::linear_combination(&[(ONE, &b), (ONE, &b.adjoint())])
}

fn sigma_minus() -> Csr {
    Csr::from_triplets(2, vec![(0, 1, ONE)])
}

fn sigma_plus() -> Csr {
    Csr::from_triplets(2, vec![(1, 0, ONE)])
}

fn excited_projector() -> Csr {
    Csr::from_triplets(2, vec![(1, 1, ONE)])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DisplacementMode {
    Exact,
    FirstOrder,
}

/// D(i eta) = exp(-i eta (b + b^dagger)) on the phonon factor, either exactly
/// (through the spectral decomposition of the Hermitian b + b^dagger) or to
/// first order in eta.
pub fn displacement_op(eta: f64, cutoff: usize, mode: DisplacementMode) -> Csr {
    let x = position_op(cutoff);
    match mode {
        DisplacementMode::FirstOrder => {
            Csr::linear_combination(&[(ONE, &Csr::identity(cutoff + 1)), (-I * c(eta), &x)])
        }
        DisplacementMode::Exact => {
            let n = cutoff + 1;
            let xd = x.to_dense();
            let mut xm = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    xm[(i, j)] = xd[(i, j)].re;
                }
            }
            let eig = xm.symmetric_eigen();
            let mut trips = Vec::with_capacity(n * n);
            for r in 0..n {
                for s in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for k in 0..n {
                        let phase = (-I * c(eta * eig.eigenvalues[k])).exp();
                        acc += c(eig.eigenvectors[(r, k)]) * phase * c(eig.eigenvectors[(s, k)]);
                    }
                    trips.push((r, s, acc));
                }
            }
            Csr::from_triplets(n, trips)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ModelKind {
    EffectiveTwoMode,
    FullAtomCavity,
    TlsComparator,
}

#[derive(Clone, Debug, Serialize)]
pub enum ParamsSnapshot {
    Effective(EffectiveParams),
    Raw(RawParams),
    Tls { omega_eff: f64, gamma_tls: f64, delta_tls: f64, eta: f64, nu: f64 },
}

/// Hamiltonian, jump operators and metadata of one concrete truncated model.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hamiltonian: Csr,
    /// (operator, rate); the Lindblad dissipator uses sqrt(rate) * op.
    pub jumps: Vec<(Csr, f64)>,
    pub layout: ModeLayout,
    pub params: ParamsSnapshot,
    pub displacement: Option<DisplacementMode>,
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn check_hermitian(&self) -> Result<()> {
        let h = &self.hamiltonian;
        let diff = Csr::linear_combination(&[(ONE, h), (-ONE, &h.adjoint())]);
        if diff.max_abs() > 1e-10 {
            return Err(Error::InvalidModel(format!(
                "Hamiltonian non-Hermitian by {:.3e}",
                diff.max_abs()
            )));
        }
        Ok(())
    }
}

fn check_budget(dim: usize, budget: usize) -> Result<()> {
    if dim > budget {
        return Err(Error::DimensionBudget { dim, budget });
    }
    Ok(())
}

/// Phonon-photon model after adiabatic elimination, first order in eta:
/// H = g_eff (c + c^+) - i eta g_eff (b+b^+) c + i eta g_eff (b+b^+) c^+
///     + nu b^+ b + delta_eff c^+ c,  jump sqrt(kappa) c.
pub fn build_effective_model(p: &EffectiveParams, cfg: &FockConfig) -> Result<ModelSpec> {
    if cfg.atom_included {
        return Err(Error::InvalidModel("effective model has no atomic factor".into()));
    }
    p.validate()?;
    let layout =
        ModeLayout { atom: false, phonon_cutoff: cfg.phonon_cutoff, photon_cutoff: Some(cfg.photon_cutoff) };
    check_budget(layout.dim(), cfg.dimension_budget)?;

    let b = annihilation(cfg.phonon_cutoff);
    let x_b = position_op(cfg.phonon_cutoff);
    let cc = annihilation(cfg.photon_cutoff);
    let x_c = Csr::linear_combination(&[(ONE, &cc), (ONE, &cc.adjoint())]);
    // -i c + i c^+
    let ic = Csr::linear_combination(&[(-I, &cc), (I, &cc.adjoint())]);

    let drive = layout.embed(None, None, Some(&x_c));
    let coupling = Csr::kron(&x_b, &ic);
    let phonon_energy = layout.embed(None, Some(&Csr::matmul(&b.adjoint(), &b)), None);
    let photon_energy = layout.embed(None, None, Some(&number_op(cfg.photon_cutoff)));
    let hamiltonian = Csr::linear_combination(&[
        (c(p.g_eff), &drive),
        (c(p.eta * p.g_eff), &coupling),
        (c(p.nu), &phonon_energy),
        (c(p.delta_eff), &photon_energy),
    ]);
    let jump = layout.embed(None, None, Some(&cc));
    let spec = ModelSpec {
        kind: ModelKind::EffectiveTwoMode,
        hamiltonian,
        jumps: vec![(jump, p.kappa)],
        layout,
        params: ParamsSnapshot::Effective(*p),
        displacement: None,
    };
    spec.check_hermitian()?;
    Ok(spec)
}

/// Full interaction-picture model before the atom is eliminated:
/// H = (Omega/2) D(i eta) sigma^- + g sigma^- c^+ + H.c.
///     + (Delta+delta) sigma^+ sigma^- + nu b^+ b + delta c^+ c,
/// jumps sqrt(kappa) c and sqrt(Gamma) sigma^-.
pub fn build_full_model(
    raw: &RawParams,
    cfg: &FockConfig,
    mode: DisplacementMode,
) -> Result<ModelSpec> {
    if !cfg.atom_included {
        return Err(Error::InvalidModel("full model requires the atomic factor".into()));
    }
    raw.validate()?;
    let layout = ModeLayout {
        atom: true,
        phonon_cutoff: cfg.phonon_cutoff,
        photon_cutoff: Some(cfg.photon_cutoff),
    };
    check_budget(layout.dim(), cfg.dimension_budget)?;

    let d = displacement_op(raw.eta, cfg.phonon_cutoff, mode);
    let cc = annihilation(cfg.photon_cutoff);
    let sm = sigma_minus();
    let sp = sigma_plus();

    let drive = {
        let t = layout.embed(Some(&sm), Some(&d), None);
        Csr::linear_combination(&[(ONE, &t), (ONE, &t.adjoint())])
    };
    let cavity_coupling = {
        let t = layout.embed(Some(&sm), None, Some(&cc.adjoint()));
        let t2 = layout.embed(Some(&sp), None, Some(&cc));
        Csr::linear_combination(&[(ONE, &t), (ONE, &t2)])
    };
    let hamiltonian = Csr::linear_combination(&[
        (c(raw.omega / 2.0), &drive),
        (c(raw.g), &cavity_coupling),
        (c(raw.delta_cap + raw.delta), &layout.embed(Some(&excited_projector()), None, None)),
        (c(raw.nu), &layout.embed(None, Some(&number_op(cfg.phonon_cutoff)), None)),
        (c(raw.delta), &layout.embed(None, None, Some(&number_op(cfg.photon_cutoff)))),
    ]);
    let mut jumps = vec![(layout.embed(None, None, Some(&cc)), raw.kappa)];
    if raw.gamma_cap > 0.0 {
        jumps.push((layout.embed(Some(&sm), None, None), raw.gamma_cap));
    }
    let spec = ModelSpec {
        kind: ModelKind::FullAtomCavity,
        hamiltonian,
        jumps,
        layout,
        params: ParamsSnapshot::Raw(*raw),
        displacement: Some(mode),
    };
    spec.check_hermitian()?;
    Ok(spec)
}

/// Laser-cooling comparator: the effective model with the cavity mode
/// replaced by a two-level system (c -> sigma^-, kappa -> Gamma_tls,
/// g_eff -> Omega_eff).
pub fn build_tls_comparator(
    omega_eff: f64,
    gamma_tls: f64,
    delta_tls: f64,
    eta: f64,
    nu: f64,
    cfg: &FockConfig,
) -> Result<ModelSpec> {
    if !cfg.atom_included {
        return Err(Error::InvalidModel("TLS comparator requires the atomic factor".into()));
    }
    if gamma_tls <= 0.0 || nu <= 0.0 {
        return Err(Error::InvalidParameter("TLS comparator needs gamma_tls > 0, nu > 0".into()));
    }
    let layout = ModeLayout { atom: true, phonon_cutoff: cfg.phonon_cutoff, photon_cutoff: None };
    check_budget(layout.dim(), cfg.dimension_budget)?;

    let x_b = position_op(cfg.phonon_cutoff);
    let sm = sigma_minus();
    let sp = sigma_plus();
    let sx = Csr::linear_combination(&[(ONE, &sm), (ONE, &sp)]);
    // -i sigma^- + i sigma^+
    let isig = Csr::linear_combination(&[(-I, &sm), (I, &sp)]);

    let hamiltonian = Csr::linear_combination(&[
        (c(omega_eff), &layout.embed(Some(&sx), None, None)),
        (c(eta * omega_eff), &Csr::kron(&isig, &x_b)),
        (c(nu), &layout.embed(None, Some(&number_op(cfg.phonon_cutoff)), None)),
        (c(delta_tls), &layout.embed(Some(&excited_projector()), None, None)),
    ]);
    let spec = ModelSpec {
        kind: ModelKind::TlsComparator,
        hamiltonian,
        jumps: vec![(layout.embed(Some(&sm), None, None), gamma_tls)],
        layout,
        params: ParamsSnapshot::Tls { omega_eff, gamma_tls, delta_tls, eta, nu },
        displacement: None,
    };
    spec.check_hermitian()?;
    Ok(spec)
}

/// Density matrix over the truncated product basis.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    pub matrix: Array2<C64>,
}

impl DensityOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diag().iter().sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let m = &self.matrix;
        let n = m.nrows();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue via the real symmetric embedding
    /// [[Re, -Im], [Im, Re]] of the Hermitian matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.dim();
        let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let v = self.matrix[(i, j)];
                m[(i, j)] = v.re;
                m[(n + i, n + j)] = v.re;
                m[(i, n + j)] = -v.im;
                m[(n + i, j)] = v.im;
            }
        }
        let eig = m.symmetric_eigen();
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn check_integrity(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::Integrity(format!("hermiticity error {herm:.3e} > 1e-10")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-10 {
            return Err(Error::Integrity(format!("trace {tr} deviates from 1")));
        }
        Ok(())
    }
}

/// Thermal phonon state with mean m0 (geometric distribution renormalized on
/// the truncated space), tensored with the photon vacuum and, when present,
/// the atomic ground state. Errors when the truncated tail mass exceeds 1e-8.
pub fn thermal_initial(m0: f64, model: &ModelSpec) -> Result<DensityOperator> {
    if !(m0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("m0 must be >= 0, got {m0}")));
    }
    let nb = model.layout.phonon_cutoff;
    let dim = model.dim();
    let mut rho = Array2::<C64>::zeros((dim, dim));
    if m0 == 0.0 {
        let idx = model.layout.basis_index(0, 0, 0);
        rho[(idx, idx)] = ONE;
        return Ok(DensityOperator { matrix: rho });
    }
    let x = m0 / (1.0 + m0);
    const TAIL_LIMIT: f64 = 1e-8;
    let tail = x.powi(nb as i32 + 1);
    if tail > TAIL_LIMIT {
        let required = (TAIL_LIMIT.ln() / x.ln()).ceil() as usize;
        return Err(Error::CutoffTooSmall { required });
    }
    let norm: f64 = (0..=nb).map(|k| x.powi(k as i32)).sum();
    for k in 0..=nb {
        let idx = model.layout.basis_index(0, k, 0);
        rho[(idx, idx)] = c(x.powi(k as i32) / norm);
    }
    Ok(DensityOperator { matrix: rho })
}

/// Phonon Fock state |m0>, photon vacuum, atomic ground state. An
/// alternative realization of the zero-coherence initial condition used to
/// confirm initial-state independence of the moment-equation check.
pub fn fock_initial(m0: usize, model: &ModelSpec) -> Result<DensityOperator> {
    let nb = model.layout.phonon_cutoff;
    if m0 > nb {
        return Err(Error::CutoffTooSmall { required: m0 });
    }
    let dim = model.dim();
    let mut rho = Array2::<C64>::zeros((dim, dim));
    let idx = model.layout.basis_index(0, m0, 0);
    rho[(idx, idx)] = ONE;
    Ok(DensityOperator { matrix: rho })
}

impl OdeState for Array2<C64> {
    fn zeros_like(&self) -> Self {
        Array2::zeros(self.raw_dim())
    }

    fn scaled_add(&mut self, s: f64, other: &Self) {
        let s = c(s);
        Zip::from(self).and(other).for_each(|a, b| *a += s * *b);
    }

    fn error_norm(&self, reference: &Self, y_scale: &Self, atol: f64, rtol: f64) -> f64 {
        let mut acc = 0.0;
        let mut count = 0usize;
        Zip::from(self).and(reference).and(y_scale).for_each(|e, r, y| {
            let w = atol + rtol * y.norm().max(r.norm());
            let q = (*e - *r).norm() / w;
            acc += q * q;
            count += 1;
        });
        (acc / count as f64).sqrt()
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct EvolveStats {
    pub steps: u64,
    pub rhs_evaluations: u64,
    /// Largest per-step |tr rho - 1| seen before renormalization.
    pub max_trace_drift: f64,
    /// Largest per-step Hermiticity defect seen before resymmetrization.
    pub max_hermiticity_drift: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { rtol: 1e-10, atol: 1e-13 }
    }
}

/// Integrate the master equation
/// drho/dt = -i[H, rho] + sum_k rate_k (L rho L^+ - {L^+ L, rho}/2)
/// with adaptive RK, renormalizing the trace and resymmetrizing after every
/// accepted step. Per-step drifts beyond 1e-9 abort with a stiffness report.
pub fn evolve_density(
    model: &ModelSpec,
    rho0: &DensityOperator,
    times: &[f64],
    opts: &OracleOptions,
) -> Result<(Vec<DensityOperator>, EvolveStats)> {
    if rho0.dim() != model.dim() {
        return Err(Error::InvalidModel(format!(
            "density dimension {} does not match model dimension {}",
            rho0.dim(),
            model.dim()
        )));
    }
    if times.is_empty() {
        return Ok((vec![rho0.clone()], EvolveStats::default()));
    }
    // drift G = -iH - 1/2 sum rate L^+ L ; rhs = G rho + rho G^+ + sum rate L rho L^+
    let mut g_terms: Vec<(C64, Csr)> = vec![(-I, model.hamiltonian.clone())];
    let mut jump_pairs = Vec::new();
    for (op, rate) in &model.jumps {
        let ld_l = Csr::matmul(&op.adjoint(), op);
        g_terms.push((c(-0.5 * rate), ld_l));
        jump_pairs.push((op.scale(c(rate.sqrt())), op.adjoint().scale(c(rate.sqrt()))));
    }
    let g_refs: Vec<(C64, &Csr)> = g_terms.iter().map(|(coef, m)| (*coef, m)).collect();
    let g = Csr::linear_combination(&g_refs);
    let g_adj = g.adjoint();

    let dim = model.dim();
    let rhs = move |rho: &Array2<C64>| -> Array2<C64> {
        let mut out = Array2::<C64>::zeros((dim, dim));
        g.mul_dense(rho, &mut out);
        g_adj.dense_mul_acc(rho, ONE, &mut out);
        let mut tmp = Array2::<C64>::zeros((dim, dim));
        for (l, l_adj) in &jump_pairs {
            l.mul_dense(rho, &mut tmp);
            l_adj.dense_mul_acc(&tmp, ONE, &mut out);
        }
        out
    };

    let mut max_trace_drift = 0.0_f64;
    let mut max_herm_drift = 0.0_f64;
    let post = |rho: &mut Array2<C64>| -> Result<()> {
        let tr: C64 = rho.diag().iter().sum();
        let drift = (tr.re - 1.0).abs().max(tr.im.abs());
        max_trace_drift = max_trace_drift.max(drift);
        if drift > 1e-9 {
            return Err(Error::Stiffness(format!("per-step trace drift {drift:.3e} > 1e-9")));
        }
        let n = rho.nrows();
        let mut herm = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = rho[(i, j)];
                let b = rho[(j, i)].conj();
                herm = herm.max((a - b).norm());
                let avg = 0.5 * (a + b);
                rho[(i, j)] = avg;
                rho[(j, i)] = avg.conj();
            }
            let d = rho[(i, i)];
            rho[(i, i)] = c(d.re);
        }
        max_herm_drift = max_herm_drift.max(herm);
        if herm > 1e-9 {
            return Err(Error::Stiffness(format!("per-step hermiticity drift {herm:.3e} > 1e-9")));
        }
        let scale = c(1.0 / tr.re);
        rho.mapv_inplace(|v| v * scale);
        Ok(())
    };

    let rk_opts = Rk45Options { rtol: opts.rtol, atol: opts.atol, ..Default::default() };
    let (mats, rk_stats) = ode::integrate(rhs, &rho0.matrix, times, &rk_opts, post)?;
    let stats = EvolveStats {
        steps: rk_stats.steps_accepted,
        rhs_evaluations: rk_stats.rhs_evaluations,
        max_trace_drift,
        max_hermiticity_drift: max_herm_drift,
    };
    Ok((mats.into_iter().map(|matrix| DensityOperator { matrix }).collect(), stats))
}

/// Mode operators for expectation values: phonon annihilation and the
/// "cavity slot" operator (the cavity annihilation operator, or sigma^- for
/// the TLS comparator, whose sigma-moments land in the n/k_y/k_w/... slots).
fn mode_operators(model: &ModelSpec) -> (Csr, Csr) {
    let layout = &model.layout;
    let b = layout.embed(None, Some(&annihilation(layout.phonon_cutoff)), None);
    let cavity_slot = match layout.photon_cutoff {
        Some(nc) => layout.embed(None, None, Some(&annihilation(nc))),
        None => layout.embed(Some(&sigma_minus()), None, None),
    };
    (b, cavity_slot)
}

/// All fourteen moment-equation expectation values by trace pairings.
/// Imaginary parts are asserted below 1e-10 and dropped.
pub fn extract_moments(model: &ModelSpec, rho: &DensityOperator) -> Result<MomentState> {
    if rho.dim() != model.dim() {
        return Err(Error::InvalidModel("density/model dimension mismatch".into()));
    }
    let herm = rho.hermiticity_error();
    if herm > 1e-10 {
        return Err(Error::Integrity(format!("rho non-Hermitian by {herm:.3e}")));
    }
    let (b, cv) = mode_operators(model);
    let bd = b.adjoint();
    let cd = cv.adjoint();
    let b_minus = Csr::linear_combination(&[(ONE, &b), (-ONE, &bd)]);
    let b_plus = Csr::linear_combination(&[(ONE, &b), (ONE, &bd)]);
    let c_minus = Csr::linear_combination(&[(ONE, &cv), (-ONE, &cd)]);
    let c_plus = Csr::linear_combination(&[(ONE, &cv), (ONE, &cd)]);
    let b2 = Csr::matmul(&b, &b);
    let bd2 = Csr::matmul(&bd, &bd);
    let c2 = Csr::matmul(&cv, &cv);
    let cd2 = Csr::matmul(&cd, &cd);

    let expect = |op: &Csr, name: &str| -> Result<f64> {
        let v = op.trace_mul(&rho.matrix);
        if v.im.abs() > 1e-10 {
            return Err(Error::Integrity(format!(
                "moment {name} has imaginary part {:.3e}",
                v.im
            )));
        }
        Ok(v.re)
    };

    Ok(MomentState {
        m: expect(&Csr::matmul(&bd, &b), "m")?,
        n: expect(&Csr::matmul(&cd, &cv), "n")?,
        k_x: expect(&b_minus.scale(I), "k_x")?,
        k_y: expect(&c_minus.scale(I), "k_y")?,
        k_u: expect(&b_plus, "k_u")?,
        k_w: expect(&c_plus, "k_w")?,
        k1: expect(&Csr::matmul(&b_plus, &c_plus), "k1")?,
        k2: expect(&Csr::matmul(&b_plus, &c_minus).scale(I), "k2")?,
        k3: expect(&Csr::matmul(&b_minus, &c_plus).scale(I), "k3")?,
        k4: expect(&Csr::matmul(&b_minus, &c_minus), "k4")?,
        k5: expect(&Csr::linear_combination(&[(ONE, &c2), (ONE, &cd2)]), "k5")?,
        k6: expect(&Csr::linear_combination(&[(I, &c2), (-I, &cd2)]), "k6")?,
        k7: expect(&Csr::linear_combination(&[(ONE, &b2), (ONE, &bd2)]), "k7")?,
        k8: expect(&Csr::linear_combination(&[(I, &b2), (-I, &bd2)]), "k8")?,
    })
}

/// Time series of the excited-state population <sigma^+ sigma^->.
pub fn excited_population(model: &ModelSpec, rhos: &[DensityOperator]) -> Result<Vec<f64>> {
    if !model.layout.atom {
        return Err(Error::InvalidModel("model has no atomic factor".into()));
    }
    let p1 = model.layout.embed(Some(&excited_projector()), None, None);
    rhos.iter()
        .map(|rho| {
            let v = p1.trace_mul(&rho.matrix);
            if v.im.abs() > 1e-10 {
                return Err(Error::Integrity(format!("P1 imaginary part {:.3e}", v.im)));
            }
            Ok(v.re)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn eff(g_eff: f64, delta_eff: f64, kappa: f64, nu: f64, eta: f64) -> EffectiveParams {
        EffectiveParams { g_eff, delta_eff, kappa, nu, eta, gamma_cap: 0.0 }
    }

    #[test]
    fn annihilation_matrix_elements() {
        let b = annihilation(2);
        let d = b.to_dense();
        assert_eq!(d[(0, 1)], c(1.0));
        assert_relative_eq!(d[(1, 2)].re, 2.0_f64.sqrt(), max_relative = 1e-15);
        assert_eq!(d[(1, 0)], c(0.0));
    }

    #[test]
    fn displacement_exact_is_unitary_and_first_order_close() {
        let nb = 25;
        let d = displacement_op(0.1, nb, DisplacementMode::Exact);
        let prod = Csr::matmul(&d, &d.adjoint()).to_dense();
        for i in 0..=nb {
            for j in 0..=nb {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(prod[(i, j)].re, expect, epsilon = 1e-10);
                assert_abs_diff_eq!(prod[(i, j)].im, 0.0, epsilon = 1e-10);
            }
        }
        // eta = 0 gives the identity
        let d0 = displacement_op(0.0, 5, DisplacementMode::Exact).to_dense();
        for i in 0..=5 {
            assert_abs_diff_eq!(d0[(i, i)].re, 1.0, epsilon = 1e-12);
        }
        // exact vs first order differ at O(eta^2): the vacuum element of the
        // difference is eta^2/2 <0|x^2|0> = 0.005 at eta = 0.1
        let df = displacement_op(0.1, nb, DisplacementMode::FirstOrder);
        let diff =
            Csr::linear_combination(&[(ONE, &d), (-ONE, &df)]).to_dense();
        assert_relative_eq!(diff[(0, 0)].norm(), 0.005, max_relative = 0.2);
    }

    #[test]
    fn budget_is_enforced() {
        let mut cfg = FockConfig::new(200, 200, false);
        cfg.dimension_budget = 20_000;
        let err = build_effective_model(&eff(1e-4, 0.5, 1.0, 0.3, 0.1), &cfg).unwrap_err();
        assert!(matches!(err, Error::DimensionBudget { .. }));
    }

    #[test]
    fn effective_model_eta_zero_conserves_phonons() {
        let cfg = FockConfig::new(6, 3, false);
        let model = build_effective_model(&eff(0.02, 0.5, 1.0, 0.3, 0.0), &cfg).unwrap();
        let nb_full = model.layout.embed(None, Some(&number_op(6)), None);
        let h = &model.hamiltonian;
        let comm = Csr::linear_combination(&[
            (ONE, &Csr::matmul(h, &nb_full)),
            (-ONE, &Csr::matmul(&nb_full, h)),
        ]);
        assert!(comm.max_abs() < 1e-14);
    }

    #[test]
    fn empty_cavity_decays_exponentially() {
        // g_eff = 0, start with one photon: n(t) = e^{-kappa t}
        let cfg = FockConfig::new(2, 3, false);
        let model = build_effective_model(&eff(0.0, 0.5, 1.0, 0.3, 0.1), &cfg).unwrap();
        let dim = model.dim();
        let mut rho = Array2::<C64>::zeros((dim, dim));
        let idx = model.layout.basis_index(0, 0, 1);
        rho[(idx, idx)] = ONE;
        let rho0 = DensityOperator { matrix: rho };
        let times = [0.5, 1.0, 2.0];
        let (out, stats) =
            evolve_density(&model, &rho0, &times, &OracleOptions::default()).unwrap();
        for (t, rho) in times.iter().zip(&out) {
            let m = extract_moments(&model, rho).unwrap();
            assert_relative_eq!(m.n, (-t).exp(), max_relative = 1e-7);
            assert_abs_diff_eq!(m.m, 0.0, epsilon = 1e-10);
        }
        assert!(stats.max_trace_drift <= 1e-9);
        assert!(stats.max_hermiticity_drift <= 1e-9);
    }

    #[test]
    fn thermal_initial_examples() {
        let cfg = FockConfig::new(60, 2, false);
        let model = build_effective_model(&eff(1e-3, 0.5, 1.0, 0.3, 0.1), &cfg).unwrap();
        let rho = thermal_initial(2.0, &model).unwrap();
        rho.check_integrity().unwrap();
        let m = extract_moments(&model, &rho).unwrap();
        assert_abs_diff_eq!(m.m, 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m.n, 0.0, epsilon = 1e-14);
        for v in [m.k_x, m.k_y, m.k_u, m.k_w, m.k1, m.k2, m.k3, m.k4, m.k5, m.k6, m.k7, m.k8] {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }

        // vacuum for m0 = 0
        let rho0 = thermal_initial(0.0, &model).unwrap();
        let m0 = extract_moments(&model, &rho0).unwrap();
        assert_eq!(m0.m, 0.0);

        // cutoff too small names the required N_b
        let small = FockConfig::new(30, 2, false);
        let model_small = build_effective_model(&eff(1e-3, 0.5, 1.0, 0.3, 0.1), &small).unwrap();
        match thermal_initial(3.0, &model_small) {
            Err(Error::CutoffTooSmall { required }) => assert_eq!(required, 64),
            other => panic!("expected CutoffTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn fock_initial_moments() {
        let cfg = FockConfig::new(10, 2, false);
        let model = build_effective_model(&eff(1e-3, 0.5, 1.0, 0.3, 0.1), &cfg).unwrap();
        let rho = fock_initial(1, &model).unwrap();
        let m = extract_moments(&model, &rho).unwrap();
        assert_eq!(m.m, 1.0);
        assert_eq!(m.k7, 0.0);
        assert_eq!(m.k_u, 0.0);
        assert!(fock_initial(11, &model).is_err());
    }

    #[test]
    fn displaced_state_position_moment() {
        // e^{-i theta (b+b^+)} |0> has <b + b^+> = -2 theta + O(theta^3)
        let nb = 20;
        let theta = 0.01;
        let d = displacement_op(theta, nb, DisplacementMode::Exact);
        let dim = nb + 1;
        let mut vac = Array2::<C64>::zeros((dim, dim));
        vac[(0, 0)] = ONE;
        let dd = d.to_dense();
        let mut rho = Array2::<C64>::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                rho[(i, j)] = dd[(i, 0)] * dd[(j, 0)].conj();
            }
        }
        let x = position_op(nb);
        let v = x.trace_mul(&rho);
        assert_relative_eq!(v.re, -2.0 * theta, max_relative = 1e-3);
    }

    #[test]
    fn excited_population_requires_atom() {
        let cfg = FockConfig::new(4, 2, false);
        let model = build_effective_model(&eff(1e-3, 0.5, 1.0, 0.3, 0.1), &cfg).unwrap();
        let rho = thermal_initial(0.0, &model).unwrap();
        assert!(matches!(
            excited_population(&model, &[rho]),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn full_model_ground_state_stays_dark_without_drive() {
        let raw = RawParams {
            omega: 0.0,
            g: 0.05,
            delta_cap: 25.0,
            delta: 0.5,
            kappa: 1.0,
            gamma_cap: 0.0,
            nu: 1.0,
            eta: 0.1,
        };
        let cfg = FockConfig::new(4, 2, true);
        let model = build_full_model(&raw, &cfg, DisplacementMode::FirstOrder).unwrap();
        let rho0 = thermal_initial(0.0, &model).unwrap();
        let (out, _) =
            evolve_density(&model, &rho0, &[1.0, 3.0], &OracleOptions::default()).unwrap();
        let p1 = excited_population(&model, &out).unwrap();
        for v in p1 {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tls_comparator_maps_sigma_into_cavity_slots() {
        let cfg = FockConfig::new(3, 0, true);
        let model = build_tls_comparator(0.1, 1.0, 0.5, 0.05, 1.0, &cfg).unwrap();
        assert_eq!(model.dim(), 8);
        // excited atom, phonon vacuum: n slot = <sigma+ sigma-> = 1
        let dim = model.dim();
        let mut rho = Array2::<C64>::zeros((dim, dim));
        let idx = model.layout.basis_index(1, 0, 0);
        rho[(idx, idx)] = ONE;
        let m = extract_moments(&model, &DensityOperator { matrix: rho }).unwrap();
        assert_eq!(m.n, 1.0);
        assert_eq!(m.m, 0.0);
        // sigma^2 = 0 makes the k5/k6 slots vanish identically
        assert_eq!(m.k5, 0.0);
        assert_eq!(m.k6, 0.0);
    }
}
