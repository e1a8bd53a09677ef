//! Operator engineering: two converters back to back with beam splitter
//! arrays in between realize an arbitrary operator `Â = Û R̂` on single-mode
//! states — `Û` from an array, `R̂` from an eigenbasis array `Û_R`, a row of
//! tap splitters with transmittances `T_k` (ancillas post-selected on
//! vacuum), and the inverse array `Û Û_R†`.
//!
//! The right-hand converter lifts the input into the channel space; the
//! left-hand converter, fed with the zero-phase state and conditioned on a
//! channel-0 click, lowers the transformed state into the output mode. Any
//! complex operator decomposes into such a configuration via its polar form.

use crate::converter::{
    phase_basis, phase_correction_matrix, phase_state_amplitudes, ConverterConfig, ConverterError,
    OutcomeLabel, OutcomeRecord,
};
use crate::fock::{FockSpace, Mode, QuantumState, StateVector};
use crate::linalg::{self, C64};
use crate::optics::{polar_decompose, MultiportUnitary, OpticsError};
use ndarray::{Array1, Array2};
use std::f64::consts::TAU;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum EngineeringError {
    #[error("transmittances length {got} must be N+1 = {expected}")]
    BadLength { got: usize, expected: usize },
    #[error("transmittance {0} outside [0, 1]")]
    BadTransmittance(f64),
    #[error("all transmittances vanish: the target operator is zero")]
    AllZero,
    #[error("array dimension mismatch")]
    BadArrayDim,
    #[error("cannot decompose the zero operator")]
    ZeroOperator,
    #[error("input state must live on the source space (mode a, cutoff N)")]
    BadSourceState,
    #[error(transparent)]
    Converter(#[from] ConverterError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Fock(#[from] crate::fock::FockError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// Single-mode input of the left-hand converter: the zero-phase state runs
/// the engineering protocols, the vacuum runs the measurement probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeftInput {
    PhaseState,
    Vacuum,
}

/// Configuration of the two-converter engineering setup.
#[derive(Clone, Debug)]
pub struct EngineeringConfig {
    n: u32,
    unitary: MultiportUnitary,
    eigenbasis: MultiportUnitary,
    transmittances: Vec<f64>,
    include_tap_stage: bool,
    left_input: LeftInput,
    phi: f64,
}

impl EngineeringConfig {
    pub fn new(
        n: u32,
        unitary: MultiportUnitary,
        eigenbasis: MultiportUnitary,
        transmittances: Vec<f64>,
    ) -> Result<Self, EngineeringError> {
        let d = n as usize + 1;
        if unitary.dim() != d || eigenbasis.dim() != d {
            return Err(EngineeringError::BadArrayDim);
        }
        if transmittances.len() != d {
            return Err(EngineeringError::BadLength {
                got: transmittances.len(),
                expected: d,
            });
        }
        for &t in &transmittances {
            if !(0.0..=1.0 + 1e-12).contains(&t) {
                return Err(EngineeringError::BadTransmittance(t));
            }
        }
        if transmittances.iter().all(|&t| t <= 0.0) {
            return Err(EngineeringError::AllZero);
        }
        Ok(EngineeringConfig {
            n,
            unitary,
            eigenbasis,
            transmittances,
            include_tap_stage: true,
            left_input: LeftInput::PhaseState,
            phi: 0.0,
        })
    }

    /// Pure unitary engineering: taps omitted (T_k ≡ 1).
    pub fn unitary_config(n: u32, unitary: MultiportUnitary) -> Result<Self, EngineeringError> {
        let d = n as usize + 1;
        if unitary.dim() != d {
            return Err(EngineeringError::BadArrayDim);
        }
        Ok(EngineeringConfig {
            n,
            unitary,
            eigenbasis: MultiportUnitary::identity((0..d).map(Mode::b).collect()),
            transmittances: vec![1.0; d],
            include_tap_stage: false,
            left_input: LeftInput::PhaseState,
            phi: 0.0,
        })
    }

    /// Projection onto `Û_R†|l⟩`: T_k = δ_{kl}.
    pub fn projective(
        n: u32,
        eigenbasis: MultiportUnitary,
        l: usize,
    ) -> Result<Self, EngineeringError> {
        let d = n as usize + 1;
        let mut t = vec![0.0; d];
        if l >= d {
            return Err(EngineeringError::BadLength {
                got: l,
                expected: d,
            });
        }
        t[l] = 1.0;
        let modes: Vec<Mode> = (0..d).map(Mode::b).collect();
        Self::new(n, MultiportUnitary::identity(modes), eigenbasis, t)
    }

    pub fn with_left_input(mut self, left: LeftInput) -> Self {
        self.left_input = left;
        self
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    /// Uniformly rescale the transmittances (engineering `c·Â` with |c| ≤ 1).
    pub fn with_scaled_transmittances(mut self, c: f64) -> Result<Self, EngineeringError> {
        for t in &mut self.transmittances {
            *t *= c;
            if !(0.0..=1.0 + 1e-12).contains(t) {
                return Err(EngineeringError::BadTransmittance(*t));
            }
        }
        self.include_tap_stage = true;
        Ok(self)
    }

    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn unitary(&self) -> &MultiportUnitary {
        &self.unitary
    }
    pub fn eigenbasis(&self) -> &MultiportUnitary {
        &self.eigenbasis
    }
    pub fn left_input(&self) -> LeftInput {
        self.left_input
    }
    pub fn phi(&self) -> f64 {
        self.phi
    }
    pub fn include_tap_stage(&self) -> bool {
        self.include_tap_stage
    }

    /// Effective tap transmittances (all 1 when the stage is omitted).
    pub fn effective_transmittances(&self) -> Vec<f64> {
        if self.include_tap_stage {
            self.transmittances.clone()
        } else {
            vec![1.0; self.n as usize + 1]
        }
    }

    /// Channel matrix of `R̂ = Û_R† diag(T_k) Û_R`.
    pub fn r_matrix(&self) -> Array2<C64> {
        let t = self.effective_transmittances();
        let diag = Array2::from_diag(&Array1::from_iter(t.iter().map(|&x| C64::new(x, 0.0))));
        let ur = self.eigenbasis.matrix();
        linalg::dagger(ur).dot(&diag).dot(ur)
    }

    /// Channel matrix of the full chain between the converters (without the
    /// phase array): `Û Û_R† diag(T) Û_R`.
    pub fn a_matrix(&self) -> Array2<C64> {
        self.unitary.matrix().dot(&self.r_matrix())
    }

    pub fn source_space(&self) -> Arc<FockSpace> {
        FockSpace::source_space(self.n)
    }
    pub fn output_space(&self) -> Arc<FockSpace> {
        FockSpace::single_mode(Mode::a_prime(), self.n)
    }

    /// Converter device shared by both ends of the setup.
    pub fn converter(&self) -> ConverterConfig {
        ConverterConfig::canonical(self.n, self.phi)
    }

    fn left_amplitudes(&self) -> Array1<C64> {
        match self.left_input {
            LeftInput::PhaseState => phase_state_amplitudes(self.n, 0.0),
            LeftInput::Vacuum => {
                let mut v = Array1::zeros(self.n as usize + 1);
                v[0] = C64::new(1.0, 0.0);
                v
            }
        }
    }
}

/// The single-mode operator realized by the configuration, `Â_a` in the Fock
/// basis (identical to the channel matrix of `Â_b` under the isomorphism).
pub fn build_target_operator(cfg: &EngineeringConfig) -> Array2<C64> {
    cfg.a_matrix()
}

/// Scale information accompanying a decomposed target.
#[derive(Clone, Debug)]
pub struct TargetScale {
    /// Polar-normalization constant Tr(Â†Â)^{1/2} · (Det Û)^{1/(N+1)}.
    pub scale: C64,
    /// Largest singular value: `build_target_operator(cfg) = A / gain`.
    pub gain: f64,
}

/// Decompose an arbitrary nonzero operator on the source space into an
/// engineering configuration via its polar form. The positive factor's
/// eigenvalues, rescaled so the largest is 1, become the transmittances
/// (maximizing the success probability); its eigenbasis becomes `Û_R`.
pub fn decompose_target(
    a: &Array2<C64>,
) -> Result<(EngineeringConfig, TargetScale), EngineeringError> {
    let d = a.nrows();
    if d == 0 || linalg::max_norm(a) == 0.0 {
        return Err(EngineeringError::ZeroOperator);
    }
    let n = (d - 1) as u32;
    let polar = polar_decompose(a)?;
    let (vals, vecs) = linalg::hermitian_eig(&polar.positive)?;
    let gain = vals[0].max(0.0);
    if gain <= 0.0 {
        return Err(EngineeringError::ZeroOperator);
    }
    let degenerate = vals[0] - vals[d - 1] <= 1e-10 * gain;
    let transmittances: Vec<f64> = if degenerate {
        vec![1.0; d]
    } else {
        vals.iter().map(|&l| (l / gain).clamp(0.0, 1.0)).collect()
    };
    // Û_R maps the k-th eigenvector onto channel k: rows are eigenvector
    // daggers. A fully degenerate positive factor (unitary target) leaves
    // the eigenbasis free; the identity is chosen.
    let mut ur = Array2::zeros((d, d));
    if degenerate {
        ur = linalg::identity(d);
    } else {
        for k in 0..d {
            for j in 0..d {
                ur[[k, j]] = vecs[[j, k]].conj();
            }
        }
    }
    let modes: Vec<Mode> = (0..d).map(Mode::b).collect();
    let cfg = EngineeringConfig::new(
        n,
        MultiportUnitary::new(modes.clone(), polar.unitary.clone())?,
        MultiportUnitary::new(modes, ur)?,
        transmittances,
    )?;
    Ok((
        cfg,
        TargetScale {
            scale: C64::new(polar.trace_norm, 0.0) * polar.det_phase,
            gain,
        },
    ))
}

/// Left-converter click matrix: `L[m, l] = ψ'_m δ_{l, (j+m) mod d}` maps the
/// channel state onto the output mode amplitudes, conditioned on a click in
/// channel `j` with the left mode prepared in amplitudes ψ'.
fn left_click_matrix(d: usize, click: usize, left_amps: &Array1<C64>) -> Array2<C64> {
    let mut l_mat = Array2::zeros((d, d));
    for m in 0..d {
        let l = (click + m) % d;
        l_mat[[m, l]] = left_amps[m];
    }
    l_mat
}

/// Raw (uncorrected) branch operator for a click in `channel` with a given
/// detected phase on the right-hand converter. With `feed_forward` the phase
/// array is retuned to the detected value; otherwise it stays at the
/// configured Φ while the detector projects on the detected phase state.
pub fn branch_operator(
    cfg: &EngineeringConfig,
    channel: usize,
    detected_phase: f64,
    feed_forward: bool,
) -> Array2<C64> {
    let d = cfg.n as usize + 1;
    let array_phase = if feed_forward {
        detected_phase
    } else {
        cfg.phi
    };
    // (N+1)^{-1/2} · U_{Φ̃}† from the right converter's phase detection,
    // then the phase array U_{array}, then the engineering chain.
    let scale = 1.0 / (d as f64).sqrt();
    let right = phase_correction_matrix(cfg.n, array_phase)
        .dot(&linalg::dagger(&phase_correction_matrix(
            cfg.n,
            detected_phase,
        )))
        .mapv(|z| z * scale);
    let chain = cfg.a_matrix().dot(&right);
    left_click_matrix(d, channel, &cfg.left_amplitudes()).dot(&chain)
}

/// Kraus representative of the lumped no-click outcome: `sqrt(I - R̂†R̂)`.
pub fn failure_operator(cfg: &EngineeringConfig) -> Result<Array2<C64>, EngineeringError> {
    let r = cfg.r_matrix();
    let e = linalg::identity(r.nrows()) - linalg::dagger(&r).dot(&r);
    Ok(linalg::psd_sqrt(&e)?)
}

fn check_input(input: &QuantumState, cfg: &EngineeringConfig) -> Result<(), EngineeringError> {
    if input.space().dim() != cfg.n as usize + 1 || input.space().modes().len() != 1 {
        return Err(EngineeringError::BadSourceState);
    }
    Ok(())
}

fn outcome_from_operator(
    label: OutcomeLabel,
    y: Array2<C64>,
    input: &QuantumState,
    output_space: Arc<FockSpace>,
) -> OutcomeRecord {
    let raw = input.apply(&y);
    let probability = raw.weight();
    let post_state = if probability > 1e-30 {
        let (normalized, _) = raw.normalize();
        Some(relabel_to(&normalized, output_space))
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

fn relabel_to(state: &QuantumState, space: Arc<FockSpace>) -> QuantumState {
    match state {
        QuantumState::Pure(s) => {
            let v = StateVector::new_unnormalized(space, s.amplitudes().clone());
            let (n, _) = v.normalize();
            QuantumState::Pure(n)
        }
        QuantumState::Mixed(r) => {
            let m = crate::fock::DensityOperator::new_unnormalized(space, r.matrix().clone());
            let (n, _) = m.normalize();
            QuantumState::Mixed(n)
        }
    }
}

/// Conditional engineering: channel-0 click and detection of the configured
/// phase state. Output `Â ρ Â† / p` on the `a'` mode with probability
/// `(N+1)^{-2} ⟨R̂†R̂⟩`; a zero-probability outcome is a valid record with no
/// post state.
pub fn run_engineering(
    input: &QuantumState,
    cfg: &EngineeringConfig,
) -> Result<OutcomeRecord, EngineeringError> {
    check_input(input, cfg)?;
    let y = branch_operator(cfg, 0, cfg.phi, false);
    Ok(outcome_from_operator(
        OutcomeLabel::ChannelAndPhase {
            channel: 0,
            phase: cfg.phi,
        },
        y,
        input,
        cfg.output_space(),
    ))
}

/// Branch set of the unconditional run.
#[derive(Clone, Debug)]
pub struct EngineeringBranches {
    /// (channel, phase-outcome) branches with feed-forward and channel
    /// corrections already applied to the operators.
    pub branches: Vec<OutcomeRecord>,
    /// Probability-weighted union of all click branches.
    pub aggregate: OutcomeRecord,
    /// Lumped no-click outcome (photon absorbed in a tap).
    pub failure: OutcomeRecord,
}

/// Unconditional engineering: the phase outcome is fed forward into the
/// array, a click in channel j ≠ 0 is repaired by the reconvert-shift-convert
/// cycle, and every surviving branch realizes the same operator. Total click
/// probability is `⟨R̂†R̂⟩`, i.e. 1 when the taps are omitted.
pub fn run_engineering_unconditional(
    input: &QuantumState,
    cfg: &EngineeringConfig,
) -> Result<EngineeringBranches, EngineeringError> {
    check_input(input, cfg)?;
    let d = cfg.n as usize + 1;
    let conv = cfg.converter();
    let v = conv.vb_matrix();
    let mut branches = Vec::with_capacity(d * d);
    let mut total = 0.0;
    for m_idx in 0..phase_basis(cfg.n).len() {
        let phase = TAU * m_idx as f64 / d as f64;
        for j in 0..d {
            let raw = branch_operator(cfg, j, phase, true);
            // Channel-j repair: reconvert, apply V^j, convert back.
            let mut v_power = linalg::identity(d);
            for _ in 0..j {
                v_power = v.dot(&v_power);
            }
            let corrected = v_power.dot(&raw);
            let rec = outcome_from_operator(
                OutcomeLabel::ChannelAndPhase { channel: j, phase },
                corrected,
                input,
                cfg.output_space(),
            );
            total += rec.probability;
            branches.push(rec);
        }
    }
    let aggregate = OutcomeRecord {
        label: OutcomeLabel::Aggregate,
        probability: total,
        post_state: branches
            .iter()
            .find(|b| b.post_state.is_some())
            .and_then(|b| b.post_state.clone()),
        effective_operator: cfg.a_matrix(),
    };
    let fail_op = failure_operator(cfg)?;
    let failure = outcome_from_operator(OutcomeLabel::NoClick, fail_op, input, cfg.source_space());
    let failure = OutcomeRecord {
        post_state: None,
        ..failure
    };
    Ok(EngineeringBranches {
        branches,
        aggregate,
        failure,
    })
}
