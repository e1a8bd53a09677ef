//! Brute-force circuit oracle: every protocol re-simulated on a dense
//! full-cutoff Fock space with explicit tap ancilla modes and explicit
//! detection projectors, element by element.
//!
//! Nothing here shares a code path with the fast protocol modules: the
//! device is composed from its array and coupler elements (never the
//! blockwise form), tap splitters carry real ancilla modes that are
//! projected on vacuum, and phase detection is a rank-one projector on the
//! signal mode. Mixed inputs are split into eigenbranches and recombined
//! after post-selection. Dimensions stay small enough (≲ 4096 at N = 3)
//! that exactness beats speed.

use crate::converter::{phase_basis, ConverterConfig, ConverterError};
use crate::engineering::{EngineeringConfig, EngineeringError, LeftInput};
use crate::fock::{DensityOperator, FockError, FockSpace, Mode, QuantumState, StateVector};
use crate::linalg::{self, C64};
use crate::optics::{
    apply_element, BeamSplitterElement, CircuitElement, CrossKerrElement, MultiportUnitary,
    OpticsError, PhaseShifterElement,
};
use ndarray::{Array1, Array2};
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("support leaked outside the single-photon sector (weight {0:.3e})")]
    SectorLeak(f64),
    #[error("mode {0} not present in oracle space")]
    UnknownMode(Mode),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Converter(#[from] ConverterError),
    #[error(transparent)]
    Engineering(#[from] EngineeringError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// A state vector being pushed through an explicit circuit; projections
/// shrink the space by dropping measured modes.
pub struct OracleCircuit {
    space: Arc<FockSpace>,
    state: Array1<C64>,
}

impl OracleCircuit {
    pub fn new(space: Arc<FockSpace>, state: Array1<C64>) -> Self {
        assert_eq!(space.dim(), state.len());
        OracleCircuit { space, state }
    }

    pub fn space(&self) -> &Arc<FockSpace> {
        &self.space
    }
    pub fn state(&self) -> &Array1<C64> {
        &self.state
    }
    pub fn norm_sqr(&self) -> f64 {
        self.state.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn apply(&mut self, elem: &CircuitElement) -> Result<(), OracleError> {
        self.state = apply_element(elem, &self.space, &self.state)?;
        Ok(())
    }

    /// Explicit converter device: array `W`, one cross-Kerr coupler per
    /// channel against the signal mode, array `W†`. The adjoint keeps the
    /// same array sandwich and negates the coupler phases.
    pub fn apply_device(
        &mut self,
        conv: &ConverterConfig,
        signal: &Mode,
        dagger: bool,
    ) -> Result<(), OracleError> {
        let n = conv.n();
        let w = conv.w().clone();
        let w_dag = w.dagger();
        self.apply(&CircuitElement::Multiport(w))?;
        for k in 0..=n as usize {
            let kappa = if dagger {
                -conv.kappas()[k]
            } else {
                conv.kappas()[k]
            };
            self.apply(&CircuitElement::CrossKerr(CrossKerrElement {
                mode_pair: (Mode::b(k), signal.clone()),
                kappa,
            }))?;
        }
        self.apply(&CircuitElement::Multiport(w_dag))?;
        Ok(())
    }

    /// Channel phase array `U_Φ` (phase kΦ on channel k).
    pub fn apply_phase_array(&mut self, n: u32, phi: f64, dagger: bool) -> Result<(), OracleError> {
        let sign = if dagger { -1.0 } else { 1.0 };
        for k in 0..=n as usize {
            self.apply(&CircuitElement::PhaseShifter(PhaseShifterElement {
                mode: Mode::b(k),
                theta: sign * phi * k as f64,
            }))?;
        }
        Ok(())
    }

    /// Tap splitters: channel `b_k` against ancilla `c_k` with the given
    /// transmittances (reflectance chosen real non-negative).
    pub fn apply_taps(&mut self, transmittances: &[C64], dagger: bool) -> Result<(), OracleError> {
        for (k, &t) in transmittances.iter().enumerate() {
            let r = (1.0 - t.norm_sqr()).max(0.0).sqrt();
            let (t_eff, r_eff) = if dagger {
                (t.conj(), C64::new(-r, 0.0))
            } else {
                (t, C64::new(r, 0.0))
            };
            let bs = BeamSplitterElement::new((Mode::b(k), Mode::c(k)), t_eff, r_eff)?;
            self.apply(&CircuitElement::BeamSplitter(bs))?;
        }
        Ok(())
    }

    /// Multiport on the channel modes.
    pub fn apply_channel_array(&mut self, n: u32, matrix: Array2<C64>) -> Result<(), OracleError> {
        let u = MultiportUnitary::on_channels(n, matrix)?;
        self.apply(&CircuitElement::Multiport(u))?;
        Ok(())
    }

    /// Project listed modes onto exact occupations and drop them.
    pub fn project_pattern(&mut self, pattern: &[(Mode, u32)]) -> Result<(), OracleError> {
        let mut positions = Vec::with_capacity(pattern.len());
        for (m, occ) in pattern {
            let pos = self
                .space
                .mode_position(m)
                .ok_or_else(|| OracleError::UnknownMode(m.clone()))?;
            positions.push((pos, *occ));
        }
        let keep: Vec<usize> = (0..self.space.modes().len())
            .filter(|p| !positions.iter().any(|(q, _)| q == p))
            .collect();
        let rest_space = FockSpace::build(
            keep.iter()
                .map(|&p| self.space.modes()[p].clone())
                .collect(),
            keep.iter().map(|&p| self.space.cutoffs()[p]).collect(),
            None,
        )?;
        let mut out = Array1::zeros(rest_space.dim());
        for (idx, occ) in self.space.basis().iter().enumerate() {
            if self.state[idx] == C64::new(0.0, 0.0) {
                continue;
            }
            if positions.iter().all(|&(p, v)| occ[p] == v) {
                let rest: Vec<u32> = keep.iter().map(|&p| occ[p]).collect();
                let out_idx = rest_space
                    .index_of(&rest)
                    .expect("kept occupations respect kept cutoffs");
                out[out_idx] += self.state[idx];
            }
        }
        self.space = rest_space;
        self.state = out;
        Ok(())
    }

    /// Partial inner product ⟨bra| on one mode (Fock-indexed amplitudes);
    /// drops the mode.
    pub fn project_bra(&mut self, mode: &Mode, bra: &Array1<C64>) -> Result<(), OracleError> {
        let pos = self
            .space
            .mode_position(mode)
            .ok_or_else(|| OracleError::UnknownMode(mode.clone()))?;
        let keep: Vec<usize> = (0..self.space.modes().len())
            .filter(|&p| p != pos)
            .collect();
        let rest_space = FockSpace::build(
            keep.iter()
                .map(|&p| self.space.modes()[p].clone())
                .collect(),
            keep.iter().map(|&p| self.space.cutoffs()[p]).collect(),
            None,
        )?;
        let mut out = Array1::zeros(rest_space.dim());
        for (idx, occ) in self.space.basis().iter().enumerate() {
            if self.state[idx] == C64::new(0.0, 0.0) {
                continue;
            }
            let k = occ[pos] as usize;
            if k >= bra.len() {
                continue;
            }
            let rest: Vec<u32> = keep.iter().map(|&p| occ[p]).collect();
            let out_idx = rest_space.index_of(&rest).expect("kept occupations valid");
            out[out_idx] += bra[k].conj() * self.state[idx];
        }
        self.space = rest_space;
        self.state = out;
        Ok(())
    }

    /// ON/OFF outcome: detector `clicked` fires, every other listed detector
    /// stays dark. Projects and drops all detector modes, checking that the
    /// surviving support carries exactly one photon in the fired channel.
    pub fn click(&mut self, detectors: &[Mode], clicked: &Mode) -> Result<(), OracleError> {
        let clicked_pos = self
            .space
            .mode_position(clicked)
            .ok_or_else(|| OracleError::UnknownMode(clicked.clone()))?;
        let mut leak = 0.0;
        for (idx, occ) in self.space.basis().iter().enumerate() {
            if occ[clicked_pos] > 1 {
                leak += self.state[idx].norm_sqr();
            }
        }
        if leak > 1e-20 {
            return Err(OracleError::SectorLeak(leak));
        }
        let mut pattern: Vec<(Mode, u32)> = Vec::new();
        for m in detectors {
            pattern.push((m.clone(), if m == clicked { 1 } else { 0 }));
        }
        self.project_pattern(&pattern)
    }

    /// Channel amplitudes of a state now living on the b-modes only,
    /// verifying that the support sits in the single-photon sector.
    pub fn extract_channel_amplitudes(&self, n: u32) -> Result<Array1<C64>, OracleError> {
        let d = n as usize + 1;
        let mut out = Array1::zeros(d);
        for k in 0..d {
            let mut occ = vec![0u32; d];
            occ[self
                .space
                .mode_position(&Mode::b(k))
                .ok_or_else(|| OracleError::UnknownMode(Mode::b(k)))?] = 1;
            if let Some(idx) = self.space.index_of(&occ) {
                out[k] = self.state[idx];
            }
        }
        let mut leak = 0.0;
        for (idx, occ) in self.space.basis().iter().enumerate() {
            if occ.iter().sum::<u32>() != 1 {
                leak += self.state[idx].norm_sqr();
            }
        }
        if leak > 1e-20 {
            return Err(OracleError::SectorLeak(leak));
        }
        Ok(out)
    }

    /// Reduced density matrix of a single kept mode, from the pure state.
    pub fn marginal_single_mode(&self, mode: &Mode) -> Result<Array2<C64>, OracleError> {
        let pos = self
            .space
            .mode_position(mode)
            .ok_or_else(|| OracleError::UnknownMode(mode.clone()))?;
        let dim = self.space.cutoffs()[pos] as usize + 1;
        let mut groups: HashMap<Vec<u32>, Vec<(usize, usize)>> = HashMap::new();
        for (idx, occ) in self.space.basis().iter().enumerate() {
            let mut rest = occ.clone();
            let k = rest.remove(pos);
            groups.entry(rest).or_default().push((k as usize, idx));
        }
        let mut rho = Array2::zeros((dim, dim));
        for members in groups.values() {
            for &(m, i) in members {
                for &(nn, j) in members {
                    rho[[m, nn]] += self.state[i] * self.state[j].conj();
                }
            }
        }
        Ok(rho)
    }
}

/// Probability and post-selected state from a brute-force run.
#[derive(Clone, Debug)]
pub struct OracleOutcome {
    pub probability: f64,
    pub post_state: QuantumState,
}

/// Eigenbranch purification of an arbitrary input.
fn purify(input: &QuantumState) -> Result<Vec<(f64, Array1<C64>)>, OracleError> {
    match input {
        QuantumState::Pure(s) => Ok(vec![(1.0, s.amplitudes().clone())]),
        QuantumState::Mixed(r) => {
            let (vals, vecs) = linalg::hermitian_eig(r.matrix())?;
            let mut branches = Vec::new();
            for (k, &w) in vals.iter().enumerate() {
                if w > 1e-14 {
                    branches.push((w, vecs.column(k).to_owned()));
                }
            }
            Ok(branches)
        }
    }
}

/// Combine per-branch unnormalized outputs into an outcome on `out_space`.
fn combine_branches(
    input_pure: bool,
    branches: Vec<(f64, Array1<C64>)>,
    out_space: Arc<FockSpace>,
) -> OracleOutcome {
    let probability: f64 = branches
        .iter()
        .map(|(w, v)| w * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum();
    if input_pure {
        let (_, v) = &branches[0];
        let sv = StateVector::new_unnormalized(out_space, v.clone());
        let (normalized, _) = sv.normalize();
        OracleOutcome {
            probability,
            post_state: QuantumState::Pure(normalized),
        }
    } else {
        let d = out_space.dim();
        let mut rho = Array2::<C64>::zeros((d, d));
        for (w, v) in &branches {
            for i in 0..d {
                for j in 0..d {
                    rho[[i, j]] += C64::new(*w, 0.0) * v[i] * v[j].conj();
                }
            }
        }
        let rho = rho.mapv(|z| z / probability);
        let op = DensityOperator::new_unnormalized(out_space, rho);
        let (normalized, _) = op.normalize();
        OracleOutcome {
            probability,
            post_state: QuantumState::Mixed(normalized),
        }
    }
}

fn joint_space(
    n: u32,
    bc_cutoff: u32,
    with_c: bool,
    with_a_prime: bool,
) -> Result<Arc<FockSpace>, OracleError> {
    let d = n as usize + 1;
    let mut modes = vec![Mode::a()];
    let mut cutoffs = vec![n];
    for k in 0..d {
        modes.push(Mode::b(k));
        cutoffs.push(bc_cutoff);
    }
    if with_c {
        for k in 0..d {
            modes.push(Mode::c(k));
            cutoffs.push(bc_cutoff);
        }
    }
    if with_a_prime {
        modes.push(Mode::a_prime());
        cutoffs.push(n);
    }
    Ok(FockSpace::build(modes, cutoffs, None)?)
}

/// Initial amplitudes: signal Fock amplitudes on `a`, the single photon in
/// `b_0`, every other mode in vacuum; optionally amplitudes on `a'`.
fn initial_state(
    space: &Arc<FockSpace>,
    psi_a: &Array1<C64>,
    psi_a_prime: Option<&Array1<C64>>,
) -> Array1<C64> {
    let a_pos = space.mode_position(&Mode::a()).unwrap();
    let b0_pos = space.mode_position(&Mode::b(0)).unwrap();
    let ap_pos = space.mode_position(&Mode::a_prime());
    let mut out = Array1::zeros(space.dim());
    for k in 0..psi_a.len() {
        match (psi_a_prime, ap_pos) {
            (Some(psi_p), Some(pp)) => {
                for m in 0..psi_p.len() {
                    let mut occ = vec![0u32; space.modes().len()];
                    occ[a_pos] = k as u32;
                    occ[b0_pos] = 1;
                    occ[pp] = m as u32;
                    if let Some(idx) = space.index_of(&occ) {
                        out[idx] = psi_a[k] * psi_p[m];
                    }
                }
            }
            _ => {
                let mut occ = vec![0u32; space.modes().len()];
                occ[a_pos] = k as u32;
                occ[b0_pos] = 1;
                if let Some(idx) = space.index_of(&occ) {
                    out[idx] = psi_a[k];
                }
            }
        }
    }
    out
}

/// Forward conversion, the explicit circuit of the conditional protocol:
/// device, tap splitters with real ancillas, vacuum detection on every
/// ancilla, target-state detection on the signal mode.
pub fn convert_a_to_b(
    input: &QuantumState,
    cfg: &ConverterConfig,
    bc_cutoff: u32,
) -> Result<OracleOutcome, OracleError> {
    let n = cfg.n();
    let space = joint_space(n, bc_cutoff, true, false)?;
    let taps: Vec<C64> = cfg.transmittances();
    let detection = cfg.detection_amplitudes();
    let mut branches = Vec::new();
    for (w, psi) in purify(input)? {
        let mut circuit = OracleCircuit::new(space.clone(), initial_state(&space, &psi, None));
        circuit.apply_device(cfg, &Mode::a(), false)?;
        circuit.apply_taps(&taps, false)?;
        let vac_pattern: Vec<(Mode, u32)> = (0..=n as usize).map(|k| (Mode::c(k), 0)).collect();
        circuit.project_pattern(&vac_pattern)?;
        circuit.project_bra(&Mode::a(), &detection)?;
        let channel = circuit.extract_channel_amplitudes(n)?;
        // Scatter channel amplitudes into the sector-1 target space order.
        let target = cfg.target_space();
        let mut amps = Array1::zeros(target.dim());
        for k in 0..channel.len() {
            amps[target.photon_in(&Mode::b(k)).unwrap()] = channel[k];
        }
        branches.push((w, amps));
    }
    Ok(combine_branches(
        matches!(input, QuantumState::Pure(_)),
        branches,
        cfg.target_space(),
    ))
}

/// Backward conversion: signal mode prepared in the detection target, taps
/// traversed in reverse, adjoint device, then the joint detection of the
/// photon in channel 0 with all ancillas dark.
pub fn convert_b_to_a(
    input: &QuantumState,
    cfg: &ConverterConfig,
    bc_cutoff: u32,
) -> Result<OracleOutcome, OracleError> {
    let n = cfg.n();
    let d = n as usize + 1;
    let space = joint_space(n, bc_cutoff, true, false)?;
    let taps: Vec<C64> = cfg.transmittances();
    let detection = cfg.detection_amplitudes();
    let map = cfg.isomorphism();
    let mut branches = Vec::new();
    for (w, chi_target) in purify(input)? {
        // Lower the target-space branch to channel amplitudes.
        let chi = linalg::dagger(map.matrix()).dot(&chi_target);
        // Initial: a in the detection state, photon distributed over b.
        let mut init = Array1::zeros(space.dim());
        let a_pos = space.mode_position(&Mode::a()).unwrap();
        for k in 0..d {
            for l in 0..d {
                let mut occ = vec![0u32; space.modes().len()];
                occ[a_pos] = k as u32;
                occ[space.mode_position(&Mode::b(l)).unwrap()] = 1;
                if let Some(idx) = space.index_of(&occ) {
                    init[idx] = detection[k] * chi[l];
                }
            }
        }
        let mut circuit = OracleCircuit::new(space.clone(), init);
        circuit.apply_taps(&taps, true)?;
        circuit.apply_device(cfg, &Mode::a(), true)?;
        let mut pattern: Vec<(Mode, u32)> = (0..d).map(|k| (Mode::c(k), 0)).collect();
        pattern.push((Mode::b(0), 1));
        for k in 1..d {
            pattern.push((Mode::b(k), 0));
        }
        circuit.project_pattern(&pattern)?;
        // Remaining space: the single a mode, Fock-ordered.
        branches.push((w, circuit.state().clone()));
    }
    Ok(combine_branches(
        matches!(input, QuantumState::Pure(_)),
        branches,
        cfg.source_space(),
    ))
}

/// One conditional branch of the two-converter setup (operator engineering,
/// measurement probes, and — with `reversed_ports` — telemanipulation).
///
/// `detected_phase` is the phase state projected on the signal output of the
/// right-hand converter; `click` the channel that fires on the left.
pub struct TwoConverterRun {
    pub click: usize,
    pub detected_phase: f64,
    /// Retune the phase array to the detected phase (feed-forward).
    pub feed_forward: bool,
    /// Use the port-interchanged wiring with `U_Φ†` (the teleportation
    /// layout) instead of the engineering layout.
    pub reversed_ports: bool,
}

impl Default for TwoConverterRun {
    fn default() -> Self {
        TwoConverterRun {
            click: 0,
            detected_phase: 0.0,
            feed_forward: false,
            reversed_ports: false,
        }
    }
}

pub fn two_converter(
    input: &QuantumState,
    ecfg: &EngineeringConfig,
    run: &TwoConverterRun,
    bc_cutoff: u32,
) -> Result<OracleOutcome, OracleError> {
    let n = ecfg.n();
    let d = n as usize + 1;
    let with_c = ecfg.include_tap_stage();
    let space = joint_space(n, bc_cutoff, with_c, true)?;
    let conv = ecfg.converter();
    let left_amps = match ecfg.left_input() {
        LeftInput::PhaseState => crate::converter::phase_state_amplitudes(n, 0.0),
        LeftInput::Vacuum => {
            let mut v = Array1::zeros(d);
            v[0] = C64::new(1.0, 0.0);
            v
        }
    };
    let detect = crate::converter::phase_state_amplitudes(n, run.detected_phase);
    let array_phase = if run.feed_forward {
        run.detected_phase
    } else {
        ecfg.phi()
    };
    let taps: Vec<C64> = ecfg
        .effective_transmittances()
        .iter()
        .map(|&t| C64::new(t, 0.0))
        .collect();
    let mut branches = Vec::new();
    for (w, psi) in purify(input)? {
        let mut circuit =
            OracleCircuit::new(space.clone(), initial_state(&space, &psi, Some(&left_amps)));
        if run.reversed_ports {
            // Teleportation layout: the left converter acts forward on its
            // entangled source, the middle components are traversed
            // backwards (adjoint), the right converter acts as the adjoint
            // device on Alice's input.
            circuit.apply_device(&conv, &Mode::a_prime(), false)?;
            circuit.apply_channel_array(n, linalg::dagger(ecfg.unitary().matrix()))?;
            circuit.apply_channel_array(n, ecfg.eigenbasis().matrix().clone())?;
            if with_c {
                circuit.apply_taps(&taps, true)?;
            }
            circuit.apply_channel_array(n, linalg::dagger(ecfg.eigenbasis().matrix()))?;
            circuit.apply_phase_array(n, array_phase, false)?;
            circuit.apply_device(&conv, &Mode::a(), true)?;
        } else {
            circuit.apply_device(&conv, &Mode::a(), false)?;
            circuit.apply_phase_array(n, array_phase, false)?;
            circuit.apply_channel_array(n, ecfg.eigenbasis().matrix().clone())?;
            if with_c {
                circuit.apply_taps(&taps, false)?;
            }
            circuit.apply_channel_array(
                n,
                ecfg.unitary()
                    .matrix()
                    .dot(&linalg::dagger(ecfg.eigenbasis().matrix())),
            )?;
            circuit.apply_device(&conv, &Mode::a_prime(), true)?;
        }
        circuit.project_bra(&Mode::a(), &detect)?;
        if with_c {
            let vac: Vec<(Mode, u32)> = (0..d).map(|k| (Mode::c(k), 0)).collect();
            circuit.project_pattern(&vac)?;
        }
        let detectors: Vec<Mode> = (0..d).map(Mode::b).collect();
        circuit.click(&detectors, &Mode::b(run.click))?;
        branches.push((w, circuit.state().clone()));
    }
    Ok(combine_branches(
        matches!(input, QuantumState::Pure(_)),
        branches,
        ecfg.output_space(),
    ))
}

/// Per-branch outcomes keyed by (click channel, phase index).
pub type BranchOutcomes = Vec<((usize, usize), OracleOutcome)>;

/// Unconditional two-converter run: enumerate every (click, phase) branch
/// with feed-forward, apply the channel repair `V^k` (engineering layout) or
/// the full correction `U_{kΦ̃}†` (teleportation layout) to the output mode,
/// and aggregate. Returns the per-branch outcomes and the overall record.
pub fn two_converter_unconditional(
    input: &QuantumState,
    ecfg: &EngineeringConfig,
    reversed_ports: bool,
    bc_cutoff: u32,
) -> Result<(BranchOutcomes, OracleOutcome), OracleError> {
    let n = ecfg.n();
    let d = n as usize + 1;
    let conv = ecfg.converter();
    let v = conv.vb_matrix();
    let mut branch_outcomes = Vec::new();
    let mut total = 0.0;
    let mut rho_sum: Array2<C64> = Array2::zeros((d, d));
    for m_idx in 0..phase_basis(n).len() {
        let phase = std::f64::consts::TAU * m_idx as f64 / d as f64;
        for click in 0..d {
            let run = TwoConverterRun {
                click,
                detected_phase: phase,
                feed_forward: !reversed_ports,
                reversed_ports,
            };
            let raw = two_converter(input, ecfg, &run, bc_cutoff)?;
            // Output-side correction.
            let correction = if reversed_ports {
                // U_{kΦ̃} = U_Φ V^k U_Φ̃†; the output mode gets its adjoint.
                let u_phi = crate::converter::phase_correction_matrix(n, ecfg.phi());
                let u_phase = crate::converter::phase_correction_matrix(n, phase);
                let mut vk = linalg::identity(d);
                for _ in 0..click {
                    vk = v.dot(&vk);
                }
                linalg::dagger(&u_phi.dot(&vk).dot(&linalg::dagger(&u_phase)))
            } else {
                let mut vk = linalg::identity(d);
                for _ in 0..click {
                    vk = v.dot(&vk);
                }
                vk
            };
            let corrected = raw.post_state.apply(&correction);
            let (corrected, _) = corrected.normalize();
            let corrected = match corrected {
                QuantumState::Pure(s) => QuantumState::Pure(StateVector::new_unnormalized(
                    ecfg.output_space(),
                    s.amplitudes().clone(),
                )),
                QuantumState::Mixed(r) => QuantumState::Mixed(DensityOperator::new_unnormalized(
                    ecfg.output_space(),
                    r.matrix().clone(),
                )),
            };
            total += raw.probability;
            let rho_branch = corrected.to_density();
            rho_sum = rho_sum + rho_branch.matrix().mapv(|z| z * raw.probability);
            branch_outcomes.push((
                (click, m_idx),
                OracleOutcome {
                    probability: raw.probability,
                    post_state: corrected,
                },
            ));
        }
    }
    let rho_agg = rho_sum.mapv(|z| z / total);
    let aggregate = OracleOutcome {
        probability: total,
        post_state: QuantumState::Mixed({
            let op = DensityOperator::new_unnormalized(ecfg.output_space(), rho_agg);
            let (nrm, _) = op.normalize();
            nrm
        }),
    };
    Ok((branch_outcomes, aggregate))
}

/// Reduced states of the engineering layout with the phase detector
/// removed: the signal-output marginal right after the device, and the
/// output-mode marginal conditioned on the channel-0 click.
pub fn reduced_states_fig3(
    input: &QuantumState,
    ecfg: &EngineeringConfig,
    bc_cutoff: u32,
) -> Result<(Array2<C64>, Array2<C64>), OracleError> {
    let n = ecfg.n();
    let d = n as usize + 1;
    let conv = ecfg.converter();
    // Signal marginal right after the device.
    let mut rho_red: Array2<C64> = Array2::zeros((d, d));
    for (w, psi) in purify(input)? {
        let space = joint_space(n, 1, false, false)?;
        let mut circuit = OracleCircuit::new(space.clone(), initial_state(&space, &psi, None));
        circuit.apply_device(&conv, &Mode::a(), false)?;
        rho_red = rho_red + circuit.marginal_single_mode(&Mode::a())?.mapv(|z| z * w);
    }
    // Output marginal conditioned on the click, no phase projection: trace
    // the signal mode instead of projecting it.
    let with_c = ecfg.include_tap_stage();
    let space = joint_space(n, bc_cutoff, with_c, true)?;
    let taps: Vec<C64> = ecfg
        .effective_transmittances()
        .iter()
        .map(|&t| C64::new(t, 0.0))
        .collect();
    let left_amps = match ecfg.left_input() {
        LeftInput::PhaseState => crate::converter::phase_state_amplitudes(n, 0.0),
        LeftInput::Vacuum => {
            let mut v = Array1::zeros(d);
            v[0] = C64::new(1.0, 0.0);
            v
        }
    };
    let mut rho_out: Array2<C64> = Array2::zeros((d, d));
    let mut prob = 0.0;
    for (w, psi) in purify(input)? {
        let mut circuit =
            OracleCircuit::new(space.clone(), initial_state(&space, &psi, Some(&left_amps)));
        circuit.apply_device(&conv, &Mode::a(), false)?;
        circuit.apply_phase_array(n, ecfg.phi(), false)?;
        circuit.apply_channel_array(n, ecfg.eigenbasis().matrix().clone())?;
        if with_c {
            circuit.apply_taps(&taps, false)?;
        }
        circuit.apply_channel_array(
            n,
            ecfg.unitary()
                .matrix()
                .dot(&linalg::dagger(ecfg.eigenbasis().matrix())),
        )?;
        circuit.apply_device(&conv, &Mode::a_prime(), true)?;
        if with_c {
            let vac: Vec<(Mode, u32)> = (0..d).map(|k| (Mode::c(k), 0)).collect();
            circuit.project_pattern(&vac)?;
        }
        let detectors: Vec<Mode> = (0..d).map(Mode::b).collect();
        circuit.click(&detectors, &Mode::b(0))?;
        prob += w * circuit.norm_sqr();
        rho_out = rho_out
            + circuit
                .marginal_single_mode(&Mode::a_prime())?
                .mapv(|z| z * w);
    }
    let rho_out = rho_out.mapv(|z| z / prob);
    Ok((rho_red, rho_out))
}

/// Reduced states of the teleportation layout: Alice's signal marginal
/// conditioned on her channel-0 click (phase detector removed), Bob's
/// completely unconditioned marginal, and the click probability itself.
pub fn reduced_states_fig4_with_probability(
    input: &QuantumState,
    ecfg: &EngineeringConfig,
    bc_cutoff: u32,
) -> Result<(Array2<C64>, Array2<C64>, f64), OracleError> {
    let n = ecfg.n();
    let d = n as usize + 1;
    let conv = ecfg.converter();
    let with_c = ecfg.include_tap_stage();
    let space = joint_space(n, bc_cutoff, with_c, true)?;
    let taps: Vec<C64> = ecfg
        .effective_transmittances()
        .iter()
        .map(|&t| C64::new(t, 0.0))
        .collect();
    let left_amps = crate::converter::phase_state_amplitudes(n, 0.0);
    let mut rho_alice: Array2<C64> = Array2::zeros((d, d));
    let mut rho_bob: Array2<C64> = Array2::zeros((d, d));
    let mut prob = 0.0;
    for (w, psi) in purify(input)? {
        let mut circuit =
            OracleCircuit::new(space.clone(), initial_state(&space, &psi, Some(&left_amps)));
        circuit.apply_device(&conv, &Mode::a_prime(), false)?;
        // Bob's marginal before any detection: nothing downstream of the
        // left converter touches a', so the full unprojected state serves.
        circuit.apply_channel_array(n, linalg::dagger(ecfg.unitary().matrix()))?;
        circuit.apply_channel_array(n, ecfg.eigenbasis().matrix().clone())?;
        if with_c {
            circuit.apply_taps(&taps, true)?;
        }
        circuit.apply_channel_array(n, linalg::dagger(ecfg.eigenbasis().matrix()))?;
        circuit.apply_phase_array(n, ecfg.phi(), false)?;
        circuit.apply_device(&conv, &Mode::a(), true)?;
        rho_bob = rho_bob
            + circuit
                .marginal_single_mode(&Mode::a_prime())?
                .mapv(|z| z * w);
        // Alice's conditional marginal: ancillas dark, click in channel 0,
        // no phase projection.
        if with_c {
            let vac: Vec<(Mode, u32)> = (0..d).map(|k| (Mode::c(k), 0)).collect();
            circuit.project_pattern(&vac)?;
        }
        let detectors: Vec<Mode> = (0..d).map(Mode::b).collect();
        circuit.click(&detectors, &Mode::b(0))?;
        prob += w * circuit.norm_sqr();
        rho_alice = rho_alice + circuit.marginal_single_mode(&Mode::a())?.mapv(|z| z * w);
    }
    let rho_alice = rho_alice.mapv(|z| z / prob);
    Ok((rho_alice, rho_bob, prob))
}

/// [`reduced_states_fig4_with_probability`] without the probability.
pub fn reduced_states_fig4(
    input: &QuantumState,
    ecfg: &EngineeringConfig,
    bc_cutoff: u32,
) -> Result<(Array2<C64>, Array2<C64>), OracleError> {
    let (alice, bob, _) = reduced_states_fig4_with_probability(input, ecfg, bc_cutoff)?;
    Ok((alice, bob))
}
