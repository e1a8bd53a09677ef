//! Telemanipulation: the two-converter engineering setup with its ports
//! interchanged becomes a teleportation channel. The left converter acting
//! on the zero-phase state is the entangled source; Alice consumes her share
//! together with the input state and reports classically; Bob's mode carries
//! the engineered output — but reads as white noise until Alice's message
//! arrives.
//!
//! Conditionally, Bob gates his output on a trigger bit behind a shutter.
//! Unconditionally, Alice reports the clicked channel and measured phase and
//! Bob applies the matching correction, turning every trial into a success
//! when the taps are absent.

use crate::converter::{phase_basis, phase_correction_matrix, OutcomeLabel, OutcomeRecord};
use crate::engineering::{branch_operator, EngineeringConfig, EngineeringError, LeftInput};
use crate::fock::{DensityOperator, FockError, FockSpace, Mode, QuantumState, StateVector};
use crate::linalg::{self, C64};
use ndarray::Array2;
use serde::Serialize;
use std::f64::consts::TAU;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum TelemanipError {
    #[error("input state must live on the source space (mode a, cutoff N)")]
    BadSourceState,
    #[error("telemanipulation requires the phase-state left input")]
    BadLeftInput,
    #[error(transparent)]
    Engineering(#[from] EngineeringError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// One message on the classical channel between the parties.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassicalMessage {
    /// Confirmation that the conditioned detection pattern was seen.
    Trigger { trial: u64 },
    /// Clicked channel and measured phase of one trial.
    OutcomeReport {
        trial: u64,
        channel: usize,
        phase: f64,
    },
}

impl ClassicalMessage {
    pub fn trial(&self) -> u64 {
        match self {
            ClassicalMessage::Trigger { trial } => *trial,
            ClassicalMessage::OutcomeReport { trial, .. } => *trial,
        }
    }
}

/// Ordered lossless record of the classical channel.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Transcript(pub Vec<ClassicalMessage>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Role {
    Alice,
    Bob,
    Source,
}

/// Local view of one protocol party.
#[derive(Clone, Debug)]
pub struct PartyState {
    pub role: Role,
    pub modes: Vec<Mode>,
    /// Conditional mode: whether Bob's shutter lets the output pass.
    pub shutter_open: bool,
    /// Unconditional mode: corrections queued by received reports.
    pub pending_corrections: Vec<Array2<C64>>,
}

impl PartyState {
    pub fn alice(n: u32) -> Self {
        let mut modes = vec![Mode::a()];
        modes.extend((0..=n as usize).map(Mode::b));
        PartyState {
            role: Role::Alice,
            modes,
            shutter_open: false,
            pending_corrections: Vec::new(),
        }
    }

    pub fn bob() -> Self {
        PartyState {
            role: Role::Bob,
            modes: vec![Mode::a_prime()],
            shutter_open: false,
            pending_corrections: Vec::new(),
        }
    }

    pub fn receive(&mut self, message: &ClassicalMessage, correction: Option<Array2<C64>>) {
        match message {
            ClassicalMessage::Trigger { .. } => self.shutter_open = true,
            ClassicalMessage::OutcomeReport { .. } => {
                if let Some(c) = correction {
                    self.pending_corrections.push(c);
                }
            }
        }
    }
}

/// What Bob's mode delivers: the conditional output once the shutter is
/// open, and the input-independent maximally mixed state while it is not.
pub fn bob_view(
    party: &PartyState,
    delivered: &OutcomeRecord,
    n: u32,
) -> Result<QuantumState, TelemanipError> {
    if party.shutter_open {
        delivered
            .post_state
            .clone()
            .ok_or(TelemanipError::BadSourceState)
    } else {
        Ok(QuantumState::Mixed(DensityOperator::maximally_mixed(
            FockSpace::single_mode(Mode::a_prime(), n),
        )))
    }
}

/// Bob's completely unconditioned marginal: tracing the source's channel
/// share leaves `I/(N+1)` for every input and configuration.
pub fn bob_unconditioned_marginal(n: u32) -> DensityOperator {
    DensityOperator::maximally_mixed(FockSpace::single_mode(Mode::a_prime(), n))
}

fn check_input(input: &QuantumState, cfg: &EngineeringConfig) -> Result<(), TelemanipError> {
    if input.space().dim() != cfg.n() as usize + 1 || input.space().modes().len() != 1 {
        return Err(TelemanipError::BadSourceState);
    }
    if cfg.left_input() != LeftInput::PhaseState {
        return Err(TelemanipError::BadLeftInput);
    }
    Ok(())
}

fn record_on_output(
    label: OutcomeLabel,
    y: Array2<C64>,
    input: &QuantumState,
    space: Arc<FockSpace>,
) -> OutcomeRecord {
    let raw = input.apply(&y);
    let probability = raw.weight();
    let post_state = if probability > 1e-30 {
        let (normalized, _) = raw.normalize();
        Some(match normalized {
            QuantumState::Pure(s) => {
                let v = StateVector::new_unnormalized(space, s.amplitudes().clone());
                let (nv, _) = v.normalize();
                QuantumState::Pure(nv)
            }
            QuantumState::Mixed(r) => {
                let m = DensityOperator::new_unnormalized(space, r.matrix().clone());
                let (nm, _) = m.normalize();
                QuantumState::Mixed(nm)
            }
        })
    } else {
        None
    };
    OutcomeRecord {
        label,
        probability,
        post_state,
        effective_operator: y,
    }
}

/// Conditional telemanipulation: the port-interchanged setup realizes the
/// complex conjugate of the engineering operator. Returns the outcome
/// together with the protocol transcript (Alice's trigger, Bob's shutter).
pub fn run_telemanip_conditional(
    input: &QuantumState,
    cfg: &EngineeringConfig,
) -> Result<(OutcomeRecord, Transcript, PartyState), TelemanipError> {
    check_input(input, cfg)?;
    // Y_tel(1_{b_0}, Φ) is the entrywise conjugate of the engineering branch.
    let y = branch_operator(cfg, 0, cfg.phi(), false).mapv(|z| z.conj());
    let record = record_on_output(
        OutcomeLabel::ChannelAndPhase {
            channel: 0,
            phase: cfg.phi(),
        },
        y,
        input,
        cfg.output_space(),
    );
    let mut transcript = Transcript::default();
    let mut bob = PartyState::bob();
    if record.probability > 0.0 {
        let msg = ClassicalMessage::Trigger { trial: 1 };
        bob.receive(&msg, None);
        transcript.0.push(msg);
    }
    Ok((record, transcript, bob))
}

/// Dephasing map of the engineering layout's signal output when the phase
/// detector is removed: the Fock-diagonal part of the input.
pub fn dephase(rho: &DensityOperator) -> DensityOperator {
    let d = rho.space().dim();
    let mut m = Array2::zeros((d, d));
    for i in 0..d {
        m[[i, i]] = rho.matrix()[[i, i]];
    }
    DensityOperator::new_unnormalized(rho.space().clone(), m)
        .normalize()
        .0
}

/// Reduced single-mode states of the engineering layout with the phase
/// detector removed: the signal-output marginal (dephased input) and the
/// output-mode marginal conditioned on the channel-0 click.
pub fn reduced_states_fig3(
    rho: &DensityOperator,
    cfg: &EngineeringConfig,
) -> Result<(DensityOperator, DensityOperator), TelemanipError> {
    if rho.space().dim() != cfg.n() as usize + 1 {
        return Err(TelemanipError::BadSourceState);
    }
    let d = cfg.n() as usize + 1;
    let rho_red = dephase(rho);
    // Y_red = (N+1)^{1/2} Y(1_{b_0}, Φ) applied to the dephased state.
    let y_red = branch_operator(cfg, 0, cfg.phi(), false).mapv(|z| z * (d as f64).sqrt());
    let conj = y_red.dot(rho_red.matrix()).dot(&linalg::dagger(&y_red));
    let p = linalg::trace(&conj).re;
    let out = conj.mapv(|z| z / p);
    let prime = DensityOperator::new_unnormalized(cfg.output_space(), out)
        .normalize()
        .0;
    Ok((rho_red, prime))
}

/// Click probability of the teleportation layout with the phase detector
/// removed: the diagonal of the input weighted by `R̂†(Φ)R̂(Φ)` over N+1.
pub fn fig4_click_probability(
    rho: &DensityOperator,
    cfg: &EngineeringConfig,
) -> Result<f64, TelemanipError> {
    if rho.space().dim() != cfg.n() as usize + 1 {
        return Err(TelemanipError::BadSourceState);
    }
    let d = cfg.n() as usize + 1;
    let u_phi = phase_correction_matrix(cfg.n(), cfg.phi());
    let r_phi = u_phi.dot(&cfg.r_matrix()).dot(&linalg::dagger(&u_phi));
    let gram = linalg::dagger(&r_phi).dot(&r_phi);
    let mut p = 0.0;
    for k in 0..d {
        p += gram[[k, k]].re * rho.matrix()[[k, k]].re;
    }
    Ok(p / d as f64)
}

/// Reduced single-mode states of the teleportation layout: Alice's signal
/// marginal conditioned on her channel-0 click (the input filtered through
/// `R̂†(Φ)R̂(Φ)` entrywise), and Bob's unconditioned white noise.
pub fn reduced_states_fig4(
    rho: &DensityOperator,
    cfg: &EngineeringConfig,
) -> Result<(DensityOperator, DensityOperator), TelemanipError> {
    if rho.space().dim() != cfg.n() as usize + 1 {
        return Err(TelemanipError::BadSourceState);
    }
    let d = cfg.n() as usize + 1;
    let u_phi = phase_correction_matrix(cfg.n(), cfg.phi());
    let r_phi = u_phi.dot(&cfg.r_matrix()).dot(&linalg::dagger(&u_phi));
    let gram = linalg::dagger(&r_phi).dot(&r_phi);
    let mut p = 0.0;
    for k in 0..d {
        p += gram[[k, k]].re * rho.matrix()[[k, k]].re;
    }
    p /= d as f64;
    let mut m = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            m[[i, j]] = gram[[i, j]] / (d as f64) * rho.matrix()[[i, j]] / p;
        }
    }
    let alice = DensityOperator::new_unnormalized(rho.space().clone(), m)
        .normalize()
        .0;
    Ok((alice, bob_unconditioned_marginal(cfg.n())))
}

/// Branch set of the unconditional telemanipulation.
#[derive(Debug)]
pub struct TelemanipBranches {
    /// One record per (channel, phase) outcome, corrections applied.
    pub branches: Vec<OutcomeRecord>,
    /// Probability-weighted mixture over all branches.
    pub aggregate: OutcomeRecord,
    /// Lumped no-click outcome.
    pub failure: OutcomeRecord,
    pub transcript: Transcript,
    pub bob: PartyState,
}

/// The correction array Bob undoes for outcome `(k, Φ̃)`:
/// `U_{kΦ̃} = U_Φ V^k U_Φ̃†`.
pub fn outcome_array(cfg: &EngineeringConfig, channel: usize, phase: f64) -> Array2<C64> {
    let conv = cfg.converter();
    let v = conv.vb_matrix();
    let d = cfg.n() as usize + 1;
    let mut vk = linalg::identity(d);
    for _ in 0..channel {
        vk = v.dot(&vk);
    }
    phase_correction_matrix(cfg.n(), cfg.phi())
        .dot(&vk)
        .dot(&linalg::dagger(&phase_correction_matrix(cfg.n(), phase)))
}

/// Unconditional telemanipulation: every (channel, phase) outcome is
/// reported to Bob, who conjugates his state by the matching correction.
/// Branches differ exactly when the conjugated operator fails to commute
/// with the outcome arrays; with trivial taps every trial succeeds.
pub fn run_telemanip_unconditional(
    input: &QuantumState,
    cfg: &EngineeringConfig,
) -> Result<TelemanipBranches, TelemanipError> {
    check_input(input, cfg)?;
    let d = cfg.n() as usize + 1;
    let a_conj = cfg.a_matrix().mapv(|z| z.conj());
    let mut branches = Vec::with_capacity(d * d);
    let mut transcript = Transcript::default();
    let mut bob = PartyState::bob();
    let mut total = 0.0;
    let mut rho_sum: Array2<C64> = Array2::zeros((d, d));
    let mut trial = 0u64;
    for m_idx in 0..phase_basis(cfg.n()).len() {
        let phase = TAU * m_idx as f64 / d as f64;
        for k in 0..d {
            trial += 1;
            let u_k_phase = outcome_array(cfg, k, phase);
            // Raw branch (N+1)^{-1} Â* U_{kΦ̃}, then Bob's U_{kΦ̃}†.
            let raw = a_conj.dot(&u_k_phase).mapv(|z| z / d as f64);
            let corrected = linalg::dagger(&u_k_phase).dot(&raw);
            let record = record_on_output(
                OutcomeLabel::ChannelAndPhase { channel: k, phase },
                corrected,
                input,
                cfg.output_space(),
            );
            let msg = ClassicalMessage::OutcomeReport {
                trial,
                channel: k,
                phase,
            };
            bob.receive(&msg, Some(linalg::dagger(&u_k_phase)));
            transcript.0.push(msg);
            total += record.probability;
            if let Some(state) = &record.post_state {
                rho_sum = rho_sum + state.to_density().matrix().mapv(|z| z * record.probability);
            }
            branches.push(record);
        }
    }
    let aggregate_state = if total > 1e-30 {
        let m = rho_sum.mapv(|z| z / total);
        Some(QuantumState::Mixed(
            DensityOperator::new_unnormalized(cfg.output_space(), m)
                .normalize()
                .0,
        ))
    } else {
        None
    };
    let aggregate = OutcomeRecord {
        label: OutcomeLabel::Aggregate,
        probability: total,
        post_state: aggregate_state,
        effective_operator: a_conj,
    };
    // The no-click complement is the conjugate-taps analogue of the
    // engineering failure.
    let fail_op = {
        let mut sum: Array2<C64> = Array2::zeros((d, d));
        for b in &branches {
            sum = sum + linalg::dagger(&b.effective_operator).dot(&b.effective_operator);
        }
        let e = linalg::identity(d) - sum;
        linalg::psd_sqrt(&e)?
    };
    let failure = {
        let raw = input.apply(&fail_op);
        OutcomeRecord {
            label: OutcomeLabel::NoClick,
            probability: raw.weight(),
            post_state: None,
            effective_operator: fail_op,
        }
    };
    Ok(TelemanipBranches {
        branches,
        aggregate,
        failure,
        transcript,
        bob,
    })
}

/// The bare teleportation configuration: no arrays, no taps.
pub fn bare_config(n: u32) -> EngineeringConfig {
    let modes: Vec<Mode> = (0..=n as usize).map(Mode::b).collect();
    EngineeringConfig::unitary_config(n, crate::optics::MultiportUnitary::identity(modes))
        .expect("identity config is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engineering::run_engineering;
    use crate::fock::{state_fidelity, trace_distance};
    use crate::linalg::{max_diff, random_density, random_state_vector, random_unitary};
    use crate::optics::MultiportUnitary;
    use ndarray::Array1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn channel_modes(n: u32) -> Vec<Mode> {
        (0..=n as usize).map(Mode::b).collect()
    }

    fn pure_input(cfg: &EngineeringConfig, amps: Array1<C64>) -> QuantumState {
        QuantumState::Pure(StateVector::new(cfg.source_space(), amps).unwrap())
    }

    #[test]
    fn bare_protocol_copies_alice_to_bob() {
        let mut rng = ChaCha8Rng::seed_from_u64(401);
        for n in 1..=4u32 {
            let cfg = bare_config(n);
            let d = n as usize + 1;
            for _ in 0..5 {
                let input = pure_input(&cfg, random_state_vector(d, &mut rng));
                let (rec, transcript, bob) = run_telemanip_conditional(&input, &cfg).unwrap();
                assert!((rec.probability - 1.0 / (d * d) as f64).abs() < 1e-12);
                let expect = match &input {
                    QuantumState::Pure(s) => QuantumState::Pure(
                        StateVector::new(cfg.output_space(), s.amplitudes().clone()).unwrap(),
                    ),
                    _ => unreachable!(),
                };
                let f = state_fidelity(rec.post_state.as_ref().unwrap(), &expect).unwrap();
                assert!((f - 1.0).abs() < 1e-12, "N={n}");
                assert_eq!(transcript.0.len(), 1);
                assert!(bob.shutter_open);
            }
        }
    }

    #[test]
    fn real_operator_matches_engineering_exactly() {
        // real Â: conjugation is trivial, both layouts give the same record
        let n = 2u32;
        let mut real_u = Array2::<C64>::zeros((3, 3));
        // a real orthogonal rotation in the (0,1) plane plus a flip on 2
        let th = 0.7f64;
        real_u[[0, 0]] = C64::new(th.cos(), 0.0);
        real_u[[0, 1]] = C64::new(th.sin(), 0.0);
        real_u[[1, 0]] = C64::new(-th.sin(), 0.0);
        real_u[[1, 1]] = C64::new(th.cos(), 0.0);
        real_u[[2, 2]] = C64::new(1.0, 0.0);
        let cfg = EngineeringConfig::unitary_config(
            n,
            MultiportUnitary::new(channel_modes(n), real_u).unwrap(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(402);
        let input = pure_input(&cfg, random_state_vector(3, &mut rng));
        let eng = run_engineering(&input, &cfg).unwrap();
        let (tel, _, _) = run_telemanip_conditional(&input, &cfg).unwrap();
        assert!((eng.probability - tel.probability).abs() < 1e-12);
        let f = state_fidelity(
            eng.post_state.as_ref().unwrap(),
            tel.post_state.as_ref().unwrap(),
        )
        .unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complex_operator_is_engineering_of_conjugate() {
        let mut rng = ChaCha8Rng::seed_from_u64(403);
        let n = 2u32;
        let u = MultiportUnitary::new(channel_modes(n), random_unitary(3, &mut rng)).unwrap();
        let ur = MultiportUnitary::new(channel_modes(n), random_unitary(3, &mut rng)).unwrap();
        let cfg = EngineeringConfig::new(n, u, ur, vec![1.0, 0.7, 0.4]).unwrap();
        let input = pure_input(&cfg, random_state_vector(3, &mut rng));
        let (tel, _, _) = run_telemanip_conditional(&input, &cfg).unwrap();
        // independent route: engineer with the conjugated chain built from
        // conjugated arrays (taps are real)
        let cfg_conj = EngineeringConfig::new(
            n,
            MultiportUnitary::new(channel_modes(n), cfg.unitary().matrix().mapv(|z| z.conj()))
                .unwrap(),
            MultiportUnitary::new(
                channel_modes(n),
                cfg.eigenbasis().matrix().mapv(|z| z.conj()),
            )
            .unwrap(),
            vec![1.0, 0.7, 0.4],
        )
        .unwrap();
        let eng = run_engineering(&input, &cfg_conj).unwrap();
        assert!((tel.probability - eng.probability).abs() < 1e-12);
        let f = state_fidelity(
            tel.post_state.as_ref().unwrap(),
            eng.post_state.as_ref().unwrap(),
        )
        .unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dephasing_is_idempotent_and_trace_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let space = FockSpace::source_space(3);
        let rho = DensityOperator::new(space, random_density(4, &mut rng)).unwrap();
        let once = dephase(&rho);
        assert!((once.trace().re - 1.0).abs() < 1e-12);
        let twice = dephase(&once);
        assert!(trace_distance(&once, &twice).unwrap() < 1e-14);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(once.matrix()[[i, j]].norm() < 1e-15);
                } else {
                    assert!((once.matrix()[[i, i]] - rho.matrix()[[i, i]]).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn fig3_reduced_states_clone_case() {
        // Fock mixture input and bare chain: both reduced states equal the input
        let n = 2u32;
        let cfg = bare_config(n);
        let space = FockSpace::source_space(n);
        let diag = Array2::from_diag(&ndarray::arr1(&[
            C64::new(0.5, 0.0),
            C64::new(0.3, 0.0),
            C64::new(0.2, 0.0),
        ]));
        let rho = DensityOperator::new(space, diag.clone()).unwrap();
        let (red, red_prime) = reduced_states_fig3(&rho, &cfg).unwrap();
        assert!(max_diff(red.matrix(), &diag) < 1e-13);
        assert!(max_diff(red_prime.matrix(), &diag) < 1e-13);
    }

    #[test]
    fn partial_trace_of_entangled_source_is_white_noise() {
        // the source state M'(|0_P'> (x) |phi_0>), traced over the channels,
        // leaves the maximally mixed single-mode state
        for n in 1..=3u32 {
            let d = n as usize + 1;
            let conv = crate::converter::ConverterConfig::canonical(n, 0.0);
            let joint = FockSpace::single_mode(Mode::a_prime(), n)
                .tensor(&FockSpace::build((0..d).map(Mode::b).collect(), vec![1; d], None).unwrap())
                .unwrap();
            let mut amps = ndarray::Array1::<C64>::zeros(joint.dim());
            let left = crate::converter::phase_state_amplitudes(n, 0.0);
            let ap = joint.mode_position(&Mode::a_prime()).unwrap();
            let b0 = joint.mode_position(&Mode::b(0)).unwrap();
            for m in 0..d {
                let mut occ = vec![0u32; joint.modes().len()];
                occ[ap] = m as u32;
                occ[b0] = 1;
                amps[joint.index_of(&occ).unwrap()] = left[m];
            }
            let evolved =
                crate::converter::apply_m_on_mode(&conv, &joint, &Mode::a_prime(), &amps, false)
                    .unwrap();
            let state = StateVector::new(joint, evolved).unwrap();
            let rho = state.to_density();
            let marginal = rho.partial_trace(&[Mode::a_prime()]).unwrap();
            let white = linalg::identity(d).mapv(|z| z / d as f64);
            assert!(max_diff(marginal.matrix(), &white) < 1e-13, "N={n}");
        }
    }

    #[test]
    fn unconditional_aggregate_matches_dense_simulation() {
        // branch-weighted mixture against the explicit-circuit enumeration
        let mut rng = ChaCha8Rng::seed_from_u64(460);
        for n in 1..=2u32 {
            let d = n as usize + 1;
            let u = MultiportUnitary::new(channel_modes(n), random_unitary(d, &mut rng)).unwrap();
            let ur = MultiportUnitary::new(channel_modes(n), random_unitary(d, &mut rng)).unwrap();
            let mut t: Vec<f64> = (0..d)
                .map(|_| rand::Rng::random_range(&mut rng, 0.3..1.0))
                .collect();
            t[0] = 1.0;
            let cfg = EngineeringConfig::new(n, u, ur, t).unwrap().with_phi(0.3);
            let input = pure_input(&cfg, random_state_vector(d, &mut rng));
            let fast = run_telemanip_unconditional(&input, &cfg).unwrap();
            let (branches, aggregate) =
                crate::oracle::two_converter_unconditional(&input, &cfg, true, 1).unwrap();
            assert!(
                (fast.aggregate.probability - aggregate.probability).abs() < 1e-10,
                "N={n}"
            );
            let f = state_fidelity(
                fast.aggregate.post_state.as_ref().unwrap(),
                &aggregate.post_state,
            )
            .unwrap();
            assert!((f - 1.0).abs() < 1e-9, "N={n} aggregate fidelity {f}");
            // branch-by-branch: same probabilities and corrected states
            for ((click, m_idx), slow) in &branches {
                let fast_branch = fast
                    .branches
                    .iter()
                    .find(|b| {
                        matches!(b.label,
                            crate::converter::OutcomeLabel::ChannelAndPhase { channel, phase }
                            if channel == *click
                            && (phase - std::f64::consts::TAU * *m_idx as f64 / d as f64).abs() < 1e-12)
                    })
                    .expect("matching branch");
                assert!((fast_branch.probability - slow.probability).abs() < 1e-10);
                let f = state_fidelity(fast_branch.post_state.as_ref().unwrap(), &slow.post_state)
                    .unwrap();
                assert!((f - 1.0).abs() < 1e-9, "branch ({click},{m_idx})");
            }
        }
    }

    #[test]
    fn fig4_bob_is_white_noise_for_every_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(405);
        for n in 1..=3u32 {
            let d = n as usize + 1;
            let u = MultiportUnitary::new(channel_modes(n), random_unitary(d, &mut rng)).unwrap();
            let ur = MultiportUnitary::new(channel_modes(n), random_unitary(d, &mut rng)).unwrap();
            let t: Vec<f64> = (0..d).map(|i| if i == 0 { 1.0 } else { 0.5 }).collect();
            let cfg = EngineeringConfig::new(n, u, ur, t).unwrap().with_phi(0.4);
            let rho = DensityOperator::new(FockSpace::source_space(n), random_density(d, &mut rng))
                .unwrap();
            let (_, bob) = reduced_states_fig4(&rho, &cfg).unwrap();
            let white = linalg::identity(d).mapv(|z| z / d as f64);
            assert!(max_diff(bob.matrix(), &white) < 1e-12);
        }
    }

    #[test]
    fn fig4_alice_reduces_to_dephasing_for_trivial_taps() {
        let mut rng = ChaCha8Rng::seed_from_u64(406);
        let n = 2u32;
        let u = MultiportUnitary::new(channel_modes(n), random_unitary(3, &mut rng)).unwrap();
        let cfg = EngineeringConfig::unitary_config(n, u)
            .unwrap()
            .with_phi(0.8);
        let rho =
            DensityOperator::new(FockSpace::source_space(n), random_density(3, &mut rng)).unwrap();
        let (alice, _) = reduced_states_fig4(&rho, &cfg).unwrap();
        let dephased = dephase(&rho);
        assert!(trace_distance(&alice, &dephased).unwrap() < 1e-12);
    }

    #[test]
    fn fig4_projector_tap_passes_input_undisturbed() {
        // R̂(Φ) projecting on the zero-phase state: ⟨m|R̂_a(Φ)|n⟩ = 1/(N+1)
        let n = 2u32;
        let phi = 0.9f64;
        let d = 3usize;
        // Choose U_R so that R(Φ) = |0_P⟩⟨0_P| ⇒ R = e^{-iΦn̂}|0_P⟩⟨0_P|e^{iΦn̂},
        // i.e. U_R rows start with the dagger of the rotated phase state.
        let target = crate::converter::phase_state_amplitudes(n, -phi);
        // orthonormal kets: the rotated phase state plus a Gram-Schmidt
        // completion over the standard basis
        let mut kets: Vec<Array1<C64>> = vec![target.clone()];
        for e in 0..d {
            if kets.len() == d {
                break;
            }
            let mut col: Array1<C64> = Array1::zeros(d);
            col[e] = C64::new(1.0, 0.0);
            for k in &kets {
                let overlap: C64 = (0..d).map(|i| k[i].conj() * col[i]).sum();
                for i in 0..d {
                    col[i] -= overlap * k[i];
                }
            }
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-8 {
                kets.push(col.mapv(|z| z / norm));
            }
        }
        // U_R row k is the dagger of ket k, so U_R† maps channel k onto ket k
        let mut rows = Array2::<C64>::zeros((d, d));
        for (k, ket) in kets.iter().enumerate() {
            for j in 0..d {
                rows[[k, j]] = ket[j].conj();
            }
        }
        let ur = MultiportUnitary::new(channel_modes(n), rows).unwrap();
        let cfg = EngineeringConfig::projective(n, ur, 0)
            .unwrap()
            .with_phi(phi);
        // verify construction: ⟨m|R_a(Φ)|n⟩ = 1/(N+1)
        let u_phi = phase_correction_matrix(n, phi);
        let r_phi = u_phi.dot(&cfg.r_matrix()).dot(&linalg::dagger(&u_phi));
        for i in 0..d {
            for j in 0..d {
                assert!(
                    (r_phi[[i, j]] - C64::new(1.0 / d as f64, 0.0)).norm() < 1e-12,
                    "R(Φ)[{i},{j}] = {}",
                    r_phi[[i, j]]
                );
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(407);
        let rho =
            DensityOperator::new(FockSpace::source_space(n), random_density(3, &mut rng)).unwrap();
        let (alice, _) = reduced_states_fig4(&rho, &cfg).unwrap();
        assert!(max_diff(alice.matrix(), rho.matrix()) < 1e-12);
    }

    #[test]
    fn fig4_click_probability_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(450);
        for n in 1..=2u32 {
            let d = n as usize + 1;
            let u = MultiportUnitary::new(channel_modes(n), random_unitary(d, &mut rng)).unwrap();
            let ur = MultiportUnitary::new(channel_modes(n), random_unitary(d, &mut rng)).unwrap();
            let mut t: Vec<f64> = (0..d)
                .map(|_| rand::Rng::random_range(&mut rng, 0.3..1.0))
                .collect();
            t[0] = 1.0;
            let cfg = EngineeringConfig::new(n, u, ur, t).unwrap().with_phi(1.2);
            let rho = DensityOperator::new(FockSpace::source_space(n), random_density(d, &mut rng))
                .unwrap();
            let fast = fig4_click_probability(&rho, &cfg).unwrap();
            let (_, _, slow) = crate::oracle::reduced_states_fig4_with_probability(
                &QuantumState::Mixed(rho.clone()),
                &cfg,
                1,
            )
            .unwrap();
            assert!((fast - slow).abs() < 1e-12, "N={n}: {fast} vs {slow}");
        }
    }

    #[test]
    fn unconditional_bare_protocol_teleports_every_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(408);
        let n = 2u32;
        let cfg = bare_config(n);
        let input = pure_input(&cfg, random_state_vector(3, &mut rng));
        let result = run_telemanip_unconditional(&input, &cfg).unwrap();
        assert_eq!(result.branches.len(), 9);
        assert!((result.aggregate.probability - 1.0).abs() < 1e-12);
        let expect = match &input {
            QuantumState::Pure(s) => QuantumState::Pure(
                StateVector::new(cfg.output_space(), s.amplitudes().clone()).unwrap(),
            ),
            _ => unreachable!(),
        };
        for b in &result.branches {
            let f = state_fidelity(b.post_state.as_ref().unwrap(), &expect).unwrap();
            assert!((f - 1.0).abs() < 1e-12, "{:?}", b.label);
        }
        assert_eq!(result.transcript.0.len(), 9);
        assert_eq!(result.bob.pending_corrections.len(), 9);
    }

    #[test]
    fn commuting_operator_gives_identical_branches() {
        // Â ∝ I commutes with every correction
        let mut rng = ChaCha8Rng::seed_from_u64(409);
        let n = 1u32;
        let cfg = EngineeringConfig::new(
            n,
            MultiportUnitary::identity(channel_modes(n)),
            MultiportUnitary::identity(channel_modes(n)),
            vec![0.8, 0.8],
        )
        .unwrap();
        let input = pure_input(&cfg, random_state_vector(2, &mut rng));
        let result = run_telemanip_unconditional(&input, &cfg).unwrap();
        let first = result.branches[0].post_state.as_ref().unwrap();
        for b in &result.branches[1..] {
            let f = state_fidelity(b.post_state.as_ref().unwrap(), first).unwrap();
            assert!((f - 1.0).abs() < 1e-12);
        }
        // probabilities uniform, total = T² = 0.64
        assert!((result.aggregate.probability - 0.64).abs() < 1e-12);
    }

    #[test]
    fn noncommuting_operator_branches_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(410);
        let n = 1u32;
        let u = MultiportUnitary::new(channel_modes(n), random_unitary(2, &mut rng)).unwrap();
        let ur = MultiportUnitary::new(channel_modes(n), random_unitary(2, &mut rng)).unwrap();
        let cfg = EngineeringConfig::new(n, u, ur, vec![1.0, 0.3]).unwrap();
        let input = pure_input(&cfg, random_state_vector(2, &mut rng));
        let result = run_telemanip_unconditional(&input, &cfg).unwrap();
        let mut distinct = false;
        let first = result.branches[0].post_state.as_ref().unwrap();
        for b in &result.branches[1..] {
            let f = state_fidelity(b.post_state.as_ref().unwrap(), first).unwrap();
            if (f - 1.0).abs() > 1e-6 {
                distinct = true;
            }
        }
        assert!(distinct, "branches should differ for non-commuting chains");
    }

    #[test]
    fn completeness_of_unconditional_outcomes() {
        let mut rng = ChaCha8Rng::seed_from_u64(411);
        let n = 2u32;
        let u = MultiportUnitary::new(channel_modes(n), random_unitary(3, &mut rng)).unwrap();
        let ur = MultiportUnitary::new(channel_modes(n), random_unitary(3, &mut rng)).unwrap();
        let cfg = EngineeringConfig::new(n, u, ur, vec![1.0, 0.6, 0.2]).unwrap();
        let input = pure_input(&cfg, random_state_vector(3, &mut rng));
        let result = run_telemanip_unconditional(&input, &cfg).unwrap();
        let d = 3;
        let mut sum = Array2::<C64>::zeros((d, d));
        for b in &result.branches {
            sum += &linalg::dagger(&b.effective_operator).dot(&b.effective_operator);
        }
        sum += &linalg::dagger(&result.failure.effective_operator)
            .dot(&result.failure.effective_operator);
        assert!(max_diff(&sum, &linalg::identity(d)) < 1e-10);
        assert!((result.aggregate.probability + result.failure.probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn party_roles_and_modes() {
        let alice = PartyState::alice(2);
        assert_eq!(alice.role, Role::Alice);
        assert_eq!(alice.modes.len(), 4); // the signal mode plus three channels
        assert!(!alice.shutter_open);
        let mut bob = PartyState::bob();
        assert_eq!(bob.role, Role::Bob);
        assert_eq!(bob.modes, vec![Mode::a_prime()]);
        bob.receive(
            &ClassicalMessage::OutcomeReport {
                trial: 1,
                channel: 2,
                phase: 0.5,
            },
            Some(linalg::identity(3)),
        );
        assert_eq!(bob.pending_corrections.len(), 1);
        assert!(!bob.shutter_open);
    }

    #[test]
    fn shutter_semantics() {
        let mut rng = ChaCha8Rng::seed_from_u64(412);
        let n = 2u32;
        let cfg = bare_config(n);
        let input = pure_input(&cfg, random_state_vector(3, &mut rng));
        let (rec, _, bob_after) = run_telemanip_conditional(&input, &cfg).unwrap();
        // before the trigger: white noise
        let bob_before = PartyState::bob();
        let view = bob_view(&bob_before, &rec, n).unwrap();
        let white = DensityOperator::maximally_mixed(FockSpace::single_mode(Mode::a_prime(), n));
        assert!(trace_distance(&view.to_density(), &white).unwrap() < 1e-14);
        // after: the delivered state
        let view = bob_view(&bob_after, &rec, n).unwrap();
        let f = state_fidelity(&view, rec.post_state.as_ref().unwrap()).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }
}
