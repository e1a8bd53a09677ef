//! The quantum-state converter: a Mach–Zehnder-type interferometer of two
//! multiport arrays `W`, `W†` with a cross-Kerr coupler in every internal
//! channel, plus the detection stages that post-select the conversion.
//!
//! The device unitary factorizes as `M = V^{n̂_a}`: the signal mode's photon
//! number controls how often the array unitary `V = W† diag(e^{iκ}) W` is
//! applied to the channel modes. With the canonical choice of coupler
//! strengths and array, `V` is the cyclic shift `|φ_k⟩ → |φ_{k+1 mod N+1}⟩`,
//! which routes an `n`-photon Fock component to channel `n` — the conversion.
//!
//! Fast-path convention: protocol operators are (N+1)×(N+1) matrices indexed
//! by channel number `k` (equivalently by Fock number, since the isomorphism
//! identifies the two). Conversion to Fock-space basis indexing happens only
//! at the [`StateVector`]/[`crate::fock::DensityOperator`] boundary via
//! [`IsomorphismMap`].

use crate::fock::{FockError, FockSpace, IsomorphismMap, Mode, QuantumState, StateVector};
use crate::linalg::{self, C64};
use crate::optics::{MultiportUnitary, OpticsError};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::TAU;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum ConverterError {
    #[error("kappas length {got} must be N+1 = {expected}")]
    BadKappaLength { got: usize, expected: usize },
    #[error("detection state has a vanishing Fock coefficient at k={0}")]
    ZeroFockCoefficient(usize),
    #[error("detection state must live on the N-truncated source space")]
    BadDetectionSpace,
    #[error("array matrix must be (N+1)x(N+1)")]
    BadArrayDim,
    #[error("conversion requires the canonical cyclic-shift configuration")]
    NonCyclicShift,
    #[error("input state must live on the source space (mode a, cutoff N)")]
    BadSourceState,
    #[error("input state must live in the single-photon target sector")]
    BadTargetState,
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

/// Canonical coupler strengths κ_k = -2πk/(N+1).
pub fn canonical_kappas(n: u32) -> Vec<f64> {
    (0..=n).map(|k| -TAU * k as f64 / (n + 1) as f64).collect()
}

/// Canonical array: W_kl = (N+1)^{-1/2} e^{-2πi kl/(N+1)}.
pub fn canonical_w(n: u32) -> MultiportUnitary {
    let d = n as usize + 1;
    let norm = 1.0 / (d as f64).sqrt();
    let mut m = Array2::zeros((d, d));
    for k in 0..d {
        for l in 0..d {
            m[[k, l]] = C64::from_polar(norm, -TAU * (k * l) as f64 / d as f64);
        }
    }
    MultiportUnitary::on_channels(n, m).expect("canonical array is unitary")
}

/// The discrete orthonormal phase basis {|Φ_m⟩}: equal-weight Fock
/// superpositions with ramp phases Φ_m = 2πm/(N+1), amplitudes by Fock index.
pub fn phase_basis(n: u32) -> Vec<Array1<C64>> {
    let d = n as usize + 1;
    (0..d)
        .map(|m| {
            let phi = TAU * m as f64 / d as f64;
            Array1::from_iter(
                (0..d).map(|k| C64::from_polar(1.0 / (d as f64).sqrt(), phi * k as f64)),
            )
        })
        .collect()
}

/// Amplitudes of the phase state with continuous parameter `phi`, Fock-indexed.
pub fn phase_state_amplitudes(n: u32, phi: f64) -> Array1<C64> {
    let d = n as usize + 1;
    Array1::from_iter((0..d).map(|k| C64::from_polar(1.0 / (d as f64).sqrt(), phi * k as f64)))
}

/// Channel-diagonal phase correction `U_Φ = exp(iΦ Σ_k k n̂_k)`.
pub fn phase_correction_matrix(n: u32, phi: f64) -> Array2<C64> {
    let d = n as usize + 1;
    Array2::from_diag(&Array1::from_iter(
        (0..d).map(|k| C64::from_polar(1.0, phi * k as f64)),
    ))
}

/// What the single-mode detector of the forward converter looks for.
#[derive(Clone, Debug)]
pub enum DetectionTarget {
    /// Phase state with ramp parameter Φ — the probability-maximizing choice.
    PhaseState { phi: f64 },
    /// An arbitrary state with nonvanishing Fock coefficients, Fock-indexed.
    State(Array1<C64>),
}

/// Full configuration of one converter device.
#[derive(Clone, Debug)]
pub struct ConverterConfig {
    n: u32,
    kappas: Vec<f64>,
    w: MultiportUnitary,
    detection: DetectionTarget,
}

impl ConverterConfig {
    /// Canonical device with phase-state detection.
    pub fn canonical(n: u32, phi: f64) -> Self {
        ConverterConfig {
            n,
            kappas: canonical_kappas(n),
            w: canonical_w(n),
            detection: DetectionTarget::PhaseState { phi },
        }
    }

    /// Canonical device detecting an arbitrary state (Fock-indexed
    /// amplitudes, must be normalized with no vanishing coefficient).
    pub fn with_detection_state(n: u32, psi: Array1<C64>) -> Result<Self, ConverterError> {
        let cfg = ConverterConfig {
            n,
            kappas: canonical_kappas(n),
            w: canonical_w(n),
            detection: DetectionTarget::State(psi),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fully custom device (arbitrary coupler strengths and array).
    pub fn custom(
        n: u32,
        kappas: Vec<f64>,
        w: MultiportUnitary,
        detection: DetectionTarget,
    ) -> Result<Self, ConverterError> {
        let cfg = ConverterConfig {
            n,
            kappas,
            w,
            detection,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConverterError> {
        let d = self.n as usize + 1;
        if self.kappas.len() != d {
            return Err(ConverterError::BadKappaLength {
                got: self.kappas.len(),
                expected: d,
            });
        }
        if self.w.dim() != d {
            return Err(ConverterError::BadArrayDim);
        }
        let psi = self.detection_amplitudes();
        if psi.len() != d {
            return Err(ConverterError::BadDetectionSpace);
        }
        for (k, a) in psi.iter().enumerate() {
            if a.norm() < 1e-12 {
                return Err(ConverterError::ZeroFockCoefficient(k));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> u32 {
        self.n
    }
    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }
    pub fn w(&self) -> &MultiportUnitary {
        &self.w
    }
    pub fn detection(&self) -> &DetectionTarget {
        &self.detection
    }

    /// Ramp parameter of a phase-state detection target (0 for custom states).
    pub fn phi(&self) -> f64 {
        match &self.detection {
            DetectionTarget::PhaseState { phi } => *phi,
            DetectionTarget::State(_) => 0.0,
        }
    }

    /// Fock-indexed amplitudes of the detection target.
    pub fn detection_amplitudes(&self) -> Array1<C64> {
        match &self.detection {
            DetectionTarget::PhaseState { phi } => phase_state_amplitudes(self.n, *phi),
            DetectionTarget::State(psi) => psi.clone(),
        }
    }

    /// Smallest Fock-coefficient magnitude of the detection target; its
    /// square is the conversion success probability.
    pub fn min_coefficient(&self) -> f64 {
        self.detection_amplitudes()
            .iter()
            .map(|a| a.norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Tap transmittances T_k = |⟨k|Ψ⟩|_min / ⟨Ψ|k⟩ that flatten the
    /// detection amplitudes into a uniform conversion operator.
    pub fn transmittances(&self) -> Vec<C64> {
        let psi = self.detection_amplitudes();
        let min = self.min_coefficient();
        psi.iter().map(|a| C64::new(min, 0.0) / a.conj()).collect()
    }

    /// Channel matrix of `V = W† diag(e^{iκ_k}) W`.
    pub fn vb_matrix(&self) -> Array2<C64> {
        let diag = Array2::from_diag(&Array1::from_iter(
            self.kappas.iter().map(|k| C64::from_polar(1.0, *k)),
        ));
        let w = self.w.matrix();
        linalg::dagger(w).dot(&diag).dot(w)
    }

    /// True when `V` is the exact cyclic shift required by the conversion
    /// protocols.
    pub fn is_cyclic_shift(&self) -> bool {
        let v = self.vb_matrix();
        let d = self.n as usize + 1;
        let mut dev = 0.0f64;
        for l in 0..d {
            for k in 0..d {
                let expect = if k == (l + 1) % d { 1.0 } else { 0.0 };
                dev = dev.max((v[[k, l]] - C64::new(expect, 0.0)).norm());
            }
        }
        dev < 1e-12
    }

    pub fn source_space(&self) -> Arc<FockSpace> {
        FockSpace::source_space(self.n)
    }
    pub fn target_space(&self) -> Arc<FockSpace> {
        FockSpace::target_space(self.n)
    }
    pub fn isomorphism(&self) -> IsomorphismMap {
        IsomorphismMap::canonical(self.n)
    }
}

/// The channel array unitary `V` as a multiport on the b-modes.
pub fn build_vb(cfg: &ConverterConfig) -> MultiportUnitary {
    MultiportUnitary::on_channels(cfg.n, cfg.vb_matrix()).expect("V is unitary by construction")
}

/// Device unitary `M = V^{n̂_a}` on a space containing mode `a` and the
/// channel modes, built blockwise per signal photon number.
pub fn build_m(
    cfg: &ConverterConfig,
    space: &Arc<FockSpace>,
) -> Result<Array2<C64>, ConverterError> {
    let d = space.dim();
    let mut m = Array2::zeros((d, d));
    let mut basis_vec = Array1::zeros(d);
    for col in 0..d {
        basis_vec[col] = C64::new(1.0, 0.0);
        let image = apply_m(cfg, space, &basis_vec, false)?;
        for row in 0..d {
            m[[row, col]] = image[row];
        }
        basis_vec[col] = C64::new(0.0, 0.0);
    }
    Ok(m)
}

/// Apply `M` (or `M†`) to an amplitude vector: mask by signal photon number
/// `k`, apply the induced multiport `V^k` to the channel modes, accumulate.
pub fn apply_m(
    cfg: &ConverterConfig,
    space: &Arc<FockSpace>,
    amplitudes: &Array1<C64>,
    dagger: bool,
) -> Result<Array1<C64>, ConverterError> {
    apply_m_on_mode(cfg, space, &Mode::a(), amplitudes, dagger)
}

/// Same as [`apply_m`] with an explicit signal-mode label (a second converter
/// uses `a'`).
pub fn apply_m_on_mode(
    cfg: &ConverterConfig,
    space: &Arc<FockSpace>,
    signal_mode: &Mode,
    amplitudes: &Array1<C64>,
    dagger: bool,
) -> Result<Array1<C64>, ConverterError> {
    let a_pos = space
        .mode_position(signal_mode)
        .ok_or(ConverterError::BadSourceState)?;
    let max_n = space.cutoffs()[a_pos];
    let v = if dagger {
        linalg::dagger(&cfg.vb_matrix())
    } else {
        cfg.vb_matrix()
    };
    let mut out = Array1::zeros(space.dim());
    let mut v_power = linalg::identity(v.nrows());
    for k in 0..=max_n {
        if k > 0 {
            v_power = v.dot(&v_power);
        }
        let mut masked = Array1::zeros(space.dim());
        let mut any = false;
        for (idx, occ) in space.basis().iter().enumerate() {
            if occ[a_pos] == k && amplitudes[idx] != C64::new(0.0, 0.0) {
                masked[idx] = amplitudes[idx];
                any = true;
            }
        }
        if !any {
            continue;
        }
        let u = MultiportUnitary::on_channels(cfg.n, v_power.clone())
            .expect("powers of a unitary are unitary");
        let image = crate::optics::apply_element(
            &crate::optics::CircuitElement::Multiport(u),
            space,
            &masked,
        )?;
        out += &image;
    }
    Ok(out)
}

/// Structured measurement outcome label.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OutcomeLabel {
    /// All tap ancillas found empty and the single-mode detector fired on
    /// its target state.
    DetectedTarget,
    /// ON/OFF click in channel `k`.
    ChannelClick { channel: usize },
    /// Discrete phase outcome Φ_m.
    PhaseOutcome { index: usize, phase: f64 },
    /// Joint channel click and phase outcome.
    ChannelAndPhase { channel: usize, phase: f64 },
    /// Feed-forward-corrected union over a complete outcome set.
    Aggregate,
    /// No detector fired (photon lost into a tap ancilla).
    NoClick,
}

/// One measurement outcome: its probability, the renormalized
/// post-measurement state, and the effective operator of the branch.
///
/// `effective_operator` is channel-indexed (rows/columns by channel or Fock
/// number); for zero-probability outcomes `post_state` is `None`.
#[derive(Clone, Debug)]
pub struct OutcomeRecord {
    pub label: OutcomeLabel,
    pub probability: f64,
    pub post_state: Option<QuantumState>,
    pub effective_operator: Array2<C64>,
}

impl OutcomeRecord {
    fn from_operator(
        label: OutcomeLabel,
        y: Array2<C64>,
        input: &QuantumState,
        output_rep: OutputRep,
    ) -> Result<Self, ConverterError> {
        let raw = input.apply(&y);
        let probability = raw.weight();
        let post_state = if probability > 1e-300 {
            let (normalized, _) = raw.normalize();
            Some(output_rep.represent(&normalized)?)
        } else {
            None
        };
        Ok(OutcomeRecord {
            label,
            probability,
            post_state,
            effective_operator: y,
        })
    }
}

/// Where a channel-indexed post state belongs.
enum OutputRep {
    /// Scatter channel amplitudes into the single-photon target space.
    Target(IsomorphismMap),
    /// Interpret as Fock amplitudes on a single-mode space.
    Source(Arc<FockSpace>),
}

impl OutputRep {
    fn represent(&self, state: &QuantumState) -> Result<QuantumState, ConverterError> {
        Ok(match self {
            OutputRep::Target(map) => {
                // State currently carries source-space indexing; lift it.
                map.lift(&relabel(state, map.source().clone()))?
            }
            OutputRep::Source(space) => relabel(state, space.clone()),
        })
    }
}

/// Reinterpret channel-indexed amplitudes over a same-dimension space.
fn relabel(state: &QuantumState, space: Arc<FockSpace>) -> QuantumState {
    match state {
        QuantumState::Pure(s) => {
            let v = StateVector::new_unnormalized(space, s.amplitudes().clone());
            if s.is_normalized() {
                let (n, _) = v.normalize();
                QuantumState::Pure(n)
            } else {
                QuantumState::Pure(v)
            }
        }
        QuantumState::Mixed(r) => {
            let m = crate::fock::DensityOperator::new_unnormalized(space, r.matrix().clone());
            if r.is_normalized() {
                let (n, _) = m.normalize();
                QuantumState::Mixed(n)
            } else {
                QuantumState::Mixed(m)
            }
        }
    }
}

fn check_source_input(input: &QuantumState, cfg: &ConverterConfig) -> Result<(), ConverterError> {
    if input.space().dim() != cfg.n as usize + 1 || input.space().modes().len() != 1 {
        return Err(ConverterError::BadSourceState);
    }
    Ok(())
}

fn check_target_input(input: &QuantumState, cfg: &ConverterConfig) -> Result<(), ConverterError> {
    if input.space() != &cfg.target_space() {
        return Err(ConverterError::BadTargetState);
    }
    Ok(())
}

/// Channel amplitudes of a target-space (single-photon) state.
fn to_channel_state(input: &QuantumState, cfg: &ConverterConfig) -> QuantumState {
    let map = cfg.isomorphism();
    match input {
        QuantumState::Pure(s) => {
            let amps = linalg::dagger(map.matrix()).dot(s.amplitudes());
            QuantumState::Pure(StateVector::new_unnormalized(map.source().clone(), amps))
        }
        QuantumState::Mixed(r) => {
            let m = map.lower_operator(r.matrix());
            QuantumState::Mixed(crate::fock::DensityOperator::new_unnormalized(
                map.source().clone(),
                m,
            ))
        }
    }
}

/// Effective conversion operator of the forward device, extracted by running
/// each Fock basis state through the simulated pipeline: device `M`, tap
/// stage `Π T_k^{n̂_k}`, projection of the signal mode onto the detection
/// target. Channel-indexed, maps source → target.
pub fn forward_operator(cfg: &ConverterConfig) -> Result<Array2<C64>, ConverterError> {
    if !cfg.is_cyclic_shift() {
        return Err(ConverterError::NonCyclicShift);
    }
    let d = cfg.n as usize + 1;
    let v = cfg.vb_matrix();
    let t = cfg.transmittances();
    let psi = cfg.detection_amplitudes();
    let mut y = Array2::zeros((d, d));
    // Joint amplitudes A[k][l] over signal Fock k and channel l; the input
    // basis state |k_in⟩ enters with channels in φ_0.
    for k_in in 0..d {
        let mut channel = Array1::<C64>::zeros(d);
        channel[0] = C64::new(1.0, 0.0);
        // M: V^{k_in} on the channel part.
        for _ in 0..k_in {
            channel = v.dot(&channel);
        }
        // Tap stage.
        for l in 0..d {
            channel[l] *= t[l];
        }
        // Signal-mode projection ⟨Ψ|k_in⟩ scales the whole branch.
        let scale = psi[k_in].conj();
        for l in 0..d {
            y[[l, k_in]] = channel[l] * scale;
        }
    }
    Ok(y)
}

/// Effective operator of the reversed device: signal mode prepared in the
/// detection target, taps traversed backwards, `M†`, then the channel-0
/// click projects the channels onto φ_0. Channel-indexed, maps target → source.
pub fn backward_operator(cfg: &ConverterConfig) -> Result<Array2<C64>, ConverterError> {
    if !cfg.is_cyclic_shift() {
        return Err(ConverterError::NonCyclicShift);
    }
    let d = cfg.n as usize + 1;
    let vdag = linalg::dagger(&cfg.vb_matrix());
    let t = cfg.transmittances();
    let psi = cfg.detection_amplitudes();
    let mut y = Array2::zeros((d, d));
    for l_in in 0..d {
        // Channel input |φ_{l_in}⟩ through the daggered taps.
        let mut channel = Array1::<C64>::zeros(d);
        channel[l_in] = t[l_in].conj();
        // For each signal Fock component k (prepared amplitude ψ_k), apply
        // V†^k and read the φ_0 component.
        let mut shifted = channel.clone();
        for k in 0..d {
            if k > 0 {
                shifted = vdag.dot(&shifted);
            }
            y[[k, l_in]] += psi[k] * shifted[0];
        }
    }
    Ok(y)
}

/// Forward conversion: post-select all tap ancillas on vacuum and the signal
/// mode on the detection target. The surviving channel state is the
/// isomorphic image of the input, with input-independent probability.
pub fn convert_a_to_b(
    input: &QuantumState,
    cfg: &ConverterConfig,
) -> Result<OutcomeRecord, ConverterError> {
    check_source_input(input, cfg)?;
    let y = forward_operator(cfg)?;
    OutcomeRecord::from_operator(
        OutcomeLabel::DetectedTarget,
        y,
        input,
        OutputRep::Target(cfg.isomorphism()),
    )
}

/// Backward conversion of a single-photon channel state into the signal
/// mode, conditioned on the channel-0 click.
pub fn convert_b_to_a(
    input: &QuantumState,
    cfg: &ConverterConfig,
) -> Result<OutcomeRecord, ConverterError> {
    check_target_input(input, cfg)?;
    let y = backward_operator(cfg)?;
    let channel_input = to_channel_state(input, cfg);
    OutcomeRecord::from_operator(
        OutcomeLabel::ChannelClick { channel: 0 },
        y,
        &channel_input,
        OutputRep::Source(cfg.source_space()),
    )
}

/// Unconditional forward conversion: the signal mode is measured in the
/// discrete phase basis and each outcome is corrected by the feed-forward
/// phase array, so every branch realizes the same lifted state.
///
/// Returns the per-branch records (labels carry the raw, pre-correction
/// outcome; operators include the correction) and the aggregate record with
/// unit probability.
pub fn convert_unconditional_a_to_b(
    input: &QuantumState,
    cfg: &ConverterConfig,
) -> Result<(Vec<OutcomeRecord>, OutcomeRecord), ConverterError> {
    check_source_input(input, cfg)?;
    if !cfg.is_cyclic_shift() {
        return Err(ConverterError::NonCyclicShift);
    }
    let d = cfg.n as usize + 1;
    let v = cfg.vb_matrix();
    let basis = phase_basis(cfg.n);
    let mut branches = Vec::with_capacity(d);
    for (m_idx, phi_m) in basis.iter().enumerate() {
        let phase = TAU * m_idx as f64 / d as f64;
        // Pre-correction branch operator: ⟨Φ_m| M |φ_0⟩ by basis pipeline.
        let mut y = Array2::zeros((d, d));
        for k_in in 0..d {
            let mut channel = Array1::<C64>::zeros(d);
            channel[0] = C64::new(1.0, 0.0);
            for _ in 0..k_in {
                channel = v.dot(&channel);
            }
            let scale = phi_m[k_in].conj();
            for l in 0..d {
                y[[l, k_in]] = channel[l] * scale;
            }
        }
        // Feed-forward correction U_{Φ_m}.
        let correction = phase_correction_matrix(cfg.n, phase);
        let corrected = correction.dot(&y);
        branches.push(OutcomeRecord::from_operator(
            OutcomeLabel::PhaseOutcome {
                index: m_idx,
                phase,
            },
            corrected,
            input,
            OutputRep::Target(cfg.isomorphism()),
        )?);
    }
    // Aggregate: all branches yield the same state; total probability is the
    // branch sum, and the effective operator is the isometry itself.
    let total: f64 = branches.iter().map(|b| b.probability).sum();
    let aggregate = OutcomeRecord {
        label: OutcomeLabel::Aggregate,
        probability: total,
        post_state: branches.iter().find_map(|b| b.post_state.clone()),
        effective_operator: linalg::identity(d),
    };
    Ok((branches, aggregate))
}

/// Unconditional backward conversion (analytic enumeration): the signal mode
/// is prepared in the zero-phase state, so the taps vanish and one ON/OFF
/// detector clicks per trial, uniformly over channels. A click in channel
/// k ≠ 0 is repaired by reconverting and applying `V^k`, restoring the input
/// for the next trial; channel 0 delivers the converted state.
pub fn convert_unconditional_b_to_a(
    input: &QuantumState,
    cfg: &ConverterConfig,
) -> Result<(Vec<OutcomeRecord>, OutcomeRecord), ConverterError> {
    check_target_input(input, cfg)?;
    if !cfg.is_cyclic_shift() {
        return Err(ConverterError::NonCyclicShift);
    }
    let d = cfg.n as usize + 1;
    let zero_phase = ConverterConfig {
        n: cfg.n,
        kappas: cfg.kappas.clone(),
        w: cfg.w.clone(),
        detection: DetectionTarget::PhaseState { phi: 0.0 },
    };
    let v = cfg.vb_matrix();
    let vdag = linalg::dagger(&v);
    let psi = zero_phase.detection_amplitudes();
    let channel_input = to_channel_state(input, cfg);
    let mut branches = Vec::with_capacity(d);
    let mut vdag_power = linalg::identity(d);
    for k in 0..d {
        if k > 0 {
            vdag_power = vdag.dot(&vdag_power);
        }
        // Y(1_{b_k}) = (N+1)^{-1/2} P† V†^k, channel-indexed: ψ-weighted
        // projection onto φ_k after M†, which reduces to V†^k scaled.
        let y = vdag_power.mapv(|z| z * psi[0]);
        let mut record = OutcomeRecord::from_operator(
            OutcomeLabel::ChannelClick { channel: k },
            y,
            &channel_input,
            OutputRep::Source(cfg.source_space()),
        )?;
        // For k ≠ 0 the repair (reconvert, apply V^k) restores the input in
        // the channel representation; report the repaired state.
        if k > 0 {
            let mut v_power = linalg::identity(d);
            for _ in 0..k {
                v_power = v.dot(&v_power);
            }
            let repaired = v_power.dot(&vdag_power).mapv(|z| z * psi[0]);
            let rep = OutcomeRecord::from_operator(
                OutcomeLabel::ChannelClick { channel: k },
                repaired,
                &channel_input,
                OutputRep::Target(cfg.isomorphism()),
            )?;
            record.post_state = rep.post_state;
        }
        branches.push(record);
    }
    let total: f64 = branches.iter().map(|b| b.probability).sum();
    let aggregate = OutcomeRecord {
        label: OutcomeLabel::Aggregate,
        probability: total,
        post_state: branches.first().and_then(|b| b.post_state.clone()),
        effective_operator: linalg::identity(d),
    };
    Ok((branches, aggregate))
}

/// Statistics of seeded repeat-until-success runs.
#[derive(Clone, Debug, Serialize)]
pub struct TrialStats {
    pub runs: usize,
    pub mean_trials: f64,
    pub capped_runs: usize,
    pub max_trials_cap: u32,
    /// Histogram: index t-1 counts runs that needed exactly t trials.
    pub histogram: Vec<u32>,
}

/// Monte Carlo repeat-until-success sampling of the backward unconditional
/// conversion. Each trial clicks one channel uniformly; channel 0 succeeds,
/// anything else is repaired and retried. Runs exceeding the cap of
/// 10·(N+1) trials are reported, not silently dropped.
pub fn repeat_until_success(
    cfg: &ConverterConfig,
    runs: usize,
    seed: u64,
) -> Result<TrialStats, ConverterError> {
    if !cfg.is_cyclic_shift() {
        return Err(ConverterError::NonCyclicShift);
    }
    let d = cfg.n as usize + 1;
    let cap = 10 * d as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut histogram = vec![0u32; cap as usize];
    let mut capped = 0usize;
    let mut total_trials = 0u64;
    let mut counted_runs = 0usize;
    for _ in 0..runs {
        let mut trials = 0u32;
        loop {
            trials += 1;
            let click = rng.random_range(0..d);
            if click == 0 {
                histogram[(trials - 1) as usize] += 1;
                total_trials += trials as u64;
                counted_runs += 1;
                break;
            }
            if trials >= cap {
                capped += 1;
                break;
            }
        }
    }
    Ok(TrialStats {
        runs,
        mean_trials: if counted_runs > 0 {
            total_trials as f64 / counted_runs as f64
        } else {
            f64::NAN
        },
        capped_runs: capped,
        max_trials_cap: cap,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{state_fidelity, DensityOperator};
    use crate::linalg::{max_diff, random_density, random_state_vector};
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn pure_source(cfg: &ConverterConfig, amps: Array1<C64>) -> QuantumState {
        QuantumState::Pure(StateVector::new(cfg.source_space(), amps).unwrap())
    }

    #[test]
    fn canonical_vb_is_cyclic_shift() {
        for n in 0..=4u32 {
            let cfg = ConverterConfig::canonical(n, 0.0);
            assert!(cfg.is_cyclic_shift());
            let v = cfg.vb_matrix();
            let d = n as usize + 1;
            // (V)^{N+1} = identity
            let mut p = linalg::identity(d);
            for _ in 0..d {
                p = v.dot(&p);
            }
            assert!(max_diff(&p, &linalg::identity(d)) < 1e-12);
        }
        // N=1: swap
        let cfg = ConverterConfig::canonical(1, 0.0);
        let v = cfg.vb_matrix();
        assert!(
            max_diff(
                &v,
                &array![[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]
            ) < 1e-12
        );
    }

    #[test]
    fn custom_vb_has_prescribed_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let n = 3u32;
        let kappas: Vec<f64> = (0..=n)
            .map(|_| rand::Rng::random_range(&mut rng, 0.0..TAU))
            .collect();
        let w =
            MultiportUnitary::on_channels(n, crate::linalg::random_unitary(4, &mut rng)).unwrap();
        let cfg = ConverterConfig::custom(
            n,
            kappas.clone(),
            w,
            DetectionTarget::PhaseState { phi: 0.0 },
        )
        .unwrap();
        let v = cfg.vb_matrix();
        // spectrum {e^{iκ_k}}: compare sorted phases of eigenvalues of V
        // against sorted kappas (V is unitary, eigenvalues unimodular).
        // Use the trace of powers as a spectrum fingerprint.
        for p in 1..=4usize {
            let mut vp = linalg::identity(4);
            for _ in 0..p {
                vp = v.dot(&vp);
            }
            let tr = linalg::trace(&vp);
            let expect: C64 = kappas
                .iter()
                .map(|k| C64::from_polar(1.0, k * p as f64))
                .sum();
            assert!((tr - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn device_routes_fock_components() {
        // canonical N=2: |2⟩⊗|φ_1⟩ → |2⟩⊗|φ_0⟩
        let cfg = ConverterConfig::canonical(2, 0.0);
        let space = cfg.source_space().tensor(&cfg.target_space()).unwrap();
        let mut occ = vec![2u32, 0, 0, 0];
        let b1 = space.mode_position(&Mode::b(1)).unwrap();
        occ[b1] = 1;
        let mut amps = Array1::zeros(space.dim());
        amps[space.index_of(&occ).unwrap()] = c(1.0, 0.0);
        let image = apply_m(&cfg, &space, &amps, false).unwrap();
        let mut expect_occ = vec![2u32, 0, 0, 0];
        let b0 = space.mode_position(&Mode::b(0)).unwrap();
        expect_occ[b0] = 1;
        let idx = space.index_of(&expect_occ).unwrap();
        assert!((image[idx] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((image.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn device_is_identity_on_vacuum_signal() {
        let cfg = ConverterConfig::canonical(2, 0.0);
        let space = cfg.source_space().tensor(&cfg.target_space()).unwrap();
        // a in vacuum, photon in φ_2
        let mut occ = vec![0u32, 0, 0, 0];
        let b2 = space.mode_position(&Mode::b(2)).unwrap();
        occ[b2] = 1;
        let mut amps = Array1::zeros(space.dim());
        amps[space.index_of(&occ).unwrap()] = c(1.0, 0.0);
        let image = apply_m(&cfg, &space, &amps, false).unwrap();
        assert!((image[space.index_of(&occ).unwrap()] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn forward_operator_is_scaled_isometry() {
        for n in 1..=3u32 {
            let cfg = ConverterConfig::canonical(n, 0.4);
            let y = forward_operator(&cfg).unwrap();
            let scale = 1.0 / ((n + 1) as f64).sqrt();
            // |Y - scale·I| in channel convention (P is the identity there,
            // up to the per-channel phase absorbed by U_Φ... the conditional
            // operator keeps the detection phases; probability is flat).
            let ydag_y = linalg::dagger(&y).dot(&y);
            assert!(
                max_diff(
                    &ydag_y,
                    &linalg::identity(n as usize + 1).mapv(|z| z * scale * scale)
                ) < 1e-12
            );
        }
    }

    #[test]
    fn forward_conversion_phase_state_probability() {
        // p = 1/(N+1); N=3 → 0.25
        let cfg = ConverterConfig::canonical(3, 0.0);
        let input = pure_source(
            &cfg,
            array![c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)],
        );
        let rec = convert_a_to_b(&input, &cfg).unwrap();
        assert!((rec.probability - 0.25).abs() < 1e-12);
        // post state = lifted input with fidelity 1
        let lifted = cfg.isomorphism().lift(&input).unwrap();
        let f = state_fidelity(rec.post_state.as_ref().unwrap(), &lifted).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_conversion_n1_superposition() {
        let cfg = ConverterConfig::canonical(1, 0.0);
        let s = 1.0 / 2f64.sqrt();
        let input = pure_source(&cfg, array![c(s, 0.0), c(s, 0.0)]);
        let rec = convert_a_to_b(&input, &cfg).unwrap();
        assert!((rec.probability - 0.5).abs() < 1e-12);
        let post = match rec.post_state.unwrap() {
            QuantumState::Pure(p) => p,
            _ => panic!("pure input gives pure output"),
        };
        let expect_space = cfg.target_space();
        let phi0 = StateVector::phi(expect_space.clone(), 0).unwrap();
        let phi1 = StateVector::phi(expect_space, 1).unwrap();
        assert!((post.inner(&phi0).unwrap().norm() - s).abs() < 1e-12);
        assert!((post.inner(&phi1).unwrap().norm() - s).abs() < 1e-12);
    }

    #[test]
    fn forward_conversion_nonuniform_detection() {
        // |Ψ⟩ ∝ (2|0⟩+|1⟩)/√5 → p = 1/5, post state still the lifted input
        let cfg = ConverterConfig::with_detection_state(
            1,
            array![c(2.0 / 5f64.sqrt(), 0.0), c(1.0 / 5f64.sqrt(), 0.0)],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..5 {
            let input = pure_source(&cfg, random_state_vector(2, &mut rng));
            let rec = convert_a_to_b(&input, &cfg).unwrap();
            assert!((rec.probability - 0.2).abs() < 1e-12);
            let lifted = cfg.isomorphism().lift(&input).unwrap();
            let f = state_fidelity(rec.post_state.as_ref().unwrap(), &lifted).unwrap();
            assert!((f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conversion_probability_is_input_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for n in 1..=4u32 {
            let cfg = ConverterConfig::canonical(n, 1.1);
            let d = n as usize + 1;
            let mut probs = Vec::new();
            for _ in 0..50 {
                let input = pure_source(&cfg, random_state_vector(d, &mut rng));
                probs.push(convert_a_to_b(&input, &cfg).unwrap().probability);
            }
            let max = probs.iter().cloned().fold(f64::MIN, f64::max);
            let min = probs.iter().cloned().fold(f64::MAX, f64::min);
            assert!(max - min < 1e-12);
            assert!((max - 1.0 / d as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_conversion_recovers_fock_states() {
        let cfg = ConverterConfig::canonical(3, 0.0);
        for k in 0..=3usize {
            let phi_k = StateVector::phi(cfg.target_space(), k).unwrap();
            let rec = convert_b_to_a(&QuantumState::Pure(phi_k), &cfg).unwrap();
            assert!((rec.probability - 0.25).abs() < 1e-12);
            let expect = StateVector::fock(cfg.source_space(), k as u32).unwrap();
            let f = state_fidelity(
                rec.post_state.as_ref().unwrap(),
                &QuantumState::Pure(expect),
            )
            .unwrap();
            assert!((f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_conversion_random_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = ConverterConfig::canonical(3, 0.0);
        let map = cfg.isomorphism();
        let amps = random_state_vector(4, &mut rng);
        let source = StateVector::new(cfg.source_space(), amps).unwrap();
        let lifted = map.lift_state(&source).unwrap();
        let rec = convert_b_to_a(&QuantumState::Pure(lifted), &cfg).unwrap();
        let f = state_fidelity(
            rec.post_state.as_ref().unwrap(),
            &QuantumState::Pure(source),
        )
        .unwrap();
        assert!((f - 1.0).abs() < 1e-12);
        assert!((rec.probability - 0.25).abs() < 1e-12);
    }

    #[test]
    fn degenerate_n0_is_trivial() {
        let cfg = ConverterConfig::canonical(0, 0.0);
        let input = pure_source(&cfg, array![c(1.0, 0.0)]);
        let rec = convert_a_to_b(&input, &cfg).unwrap();
        assert!((rec.probability - 1.0).abs() < 1e-12);
        let back = convert_b_to_a(rec.post_state.as_ref().unwrap(), &cfg).unwrap();
        assert!((back.probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_coefficient_detection_rejected() {
        let res = ConverterConfig::with_detection_state(1, array![c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(res, Err(ConverterError::ZeroFockCoefficient(1))));
    }

    #[test]
    fn unconditional_forward_every_branch_corrects() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = ConverterConfig::canonical(3, 0.0);
        let input = pure_source(&cfg, random_state_vector(4, &mut rng));
        let (branches, aggregate) = convert_unconditional_a_to_b(&input, &cfg).unwrap();
        assert_eq!(branches.len(), 4);
        let lifted = cfg.isomorphism().lift(&input).unwrap();
        for b in &branches {
            assert!((b.probability - 0.25).abs() < 1e-12);
            let f = state_fidelity(b.post_state.as_ref().unwrap(), &lifted).unwrap();
            assert!((f - 1.0).abs() < 1e-12, "branch {:?}", b.label);
        }
        assert!((aggregate.probability - 1.0).abs() < 1e-12);
        // completeness: Σ Y†Y = I
        let d = 4;
        let mut sum = Array2::<C64>::zeros((d, d));
        for b in &branches {
            sum += &linalg::dagger(&b.effective_operator).dot(&b.effective_operator);
        }
        assert!(max_diff(&sum, &linalg::identity(d)) < 1e-10);
    }

    #[test]
    fn unconditional_backward_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cfg = ConverterConfig::canonical(3, 0.0);
        let map = cfg.isomorphism();
        let source =
            StateVector::new(cfg.source_space(), random_state_vector(4, &mut rng)).unwrap();
        let lifted = QuantumState::Pure(map.lift_state(&source).unwrap());
        let (branches, aggregate) = convert_unconditional_b_to_a(&lifted, &cfg).unwrap();
        for (k, b) in branches.iter().enumerate() {
            assert!((b.probability - 0.25).abs() < 1e-12, "channel {k}");
            if k == 0 {
                let f = state_fidelity(
                    b.post_state.as_ref().unwrap(),
                    &QuantumState::Pure(source.clone()),
                )
                .unwrap();
                assert!((f - 1.0).abs() < 1e-12);
            } else {
                // repaired branches restore the channel input
                let f = state_fidelity(b.post_state.as_ref().unwrap(), &lifted).unwrap();
                assert!((f - 1.0).abs() < 1e-12, "channel {k}");
            }
        }
        assert!((aggregate.probability - 1.0).abs() < 1e-12);
        let d = 4;
        let mut sum = Array2::<C64>::zeros((d, d));
        for b in &branches {
            sum += &linalg::dagger(&b.effective_operator).dot(&b.effective_operator);
        }
        assert!(max_diff(&sum, &linalg::identity(d)) < 1e-10);
    }

    #[test]
    fn mixed_input_conversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = ConverterConfig::canonical(2, 0.7);
        let rho = DensityOperator::new(cfg.source_space(), random_density(3, &mut rng)).unwrap();
        let rec = convert_a_to_b(&QuantumState::Mixed(rho.clone()), &cfg).unwrap();
        assert!((rec.probability - 1.0 / 3.0).abs() < 1e-12);
        let lifted = cfg.isomorphism().lift(&QuantumState::Mixed(rho)).unwrap();
        let f = state_fidelity(rec.post_state.as_ref().unwrap(), &lifted).unwrap();
        assert!((f - 1.0).abs() < 1e-11);
    }

    #[test]
    fn repeat_until_success_statistics() {
        let cfg = ConverterConfig::canonical(3, 0.0);
        let stats = repeat_until_success(&cfg, 10_000, 42).unwrap();
        // geometric with p = 1/4: mean 4, sigma = sqrt(12)
        let sigma = 12f64.sqrt();
        let tol = 3.0 * sigma / (stats.runs as f64).sqrt();
        assert!(
            (stats.mean_trials - 4.0).abs() < tol,
            "mean {} outside 3 standard errors ({tol})",
            stats.mean_trials
        );
        assert_eq!(stats.capped_runs, 0);
        assert_eq!(stats.max_trials_cap, 40);
    }
}
