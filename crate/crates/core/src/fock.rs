//! Truncated Fock spaces, pure and mixed states, tensor composition, partial
//! trace, and the isomorphism between the single-mode source space and the
//! multimode single-photon target space.
//!
//! A [`FockSpace`] enumerates every admissible occupation vector for a set of
//! labelled modes with per-mode cutoffs and an optional fixed total photon
//! number (a "sector"). The enumeration is lexicographic in declared mode
//! order, so basis indices are reproducible across runs and serialized dumps
//! are stable. Sector-restricted spaces are the fast path of the protocol
//! modules; the same type with `sector = None` backs the brute-force oracle.

use crate::linalg::{self, C64};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

pub const NORM_TOL: f64 = 1e-12;
pub const HERM_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = -1e-10;

/// Dimension above which construction skips the eigenvalue-based positivity
/// check (the Hermiticity and trace checks always run).
const PSD_CHECK_MAX_DIM: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum FockError {
    #[error("mode list must not be empty")]
    EmptyModes,
    #[error("duplicate mode label {0}")]
    DuplicateMode(Mode),
    #[error("modes and cutoffs length mismatch: {modes} vs {cutoffs}")]
    LengthMismatch { modes: usize, cutoffs: usize },
    #[error("sector {sector} unattainable under cutoffs (max total {max_total})")]
    SectorUnattainable { sector: u32, max_total: u32 },
    #[error("state norm {norm} outside tolerance of 1")]
    NotNormalized { norm: f64 },
    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("operator has negative eigenvalue {0:.3e}")]
    NotPositive(f64),
    #[error("operator trace {0} differs from 1 beyond tolerance")]
    BadTrace(f64),
    #[error("amplitude length {got} does not match space dimension {dim}")]
    DimensionMismatch { got: usize, dim: usize },
    #[error("states live on different spaces")]
    SpaceMismatch,
    #[error("overlapping mode labels in tensor product: {0}")]
    OverlappingModes(Mode),
    #[error("partial trace keep-set is empty")]
    EmptyKeep,
    #[error("mode {0} not present in space")]
    UnknownMode(Mode),
    #[error("isomorphism source must be a single mode with cutoff N, target N+1 modes in the single-photon sector")]
    BadIsomorphism,
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// Label of an optical mode.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mode(pub String);

impl Mode {
    pub fn new(label: impl Into<String>) -> Self {
        Mode(label.into())
    }
    /// The single source mode.
    pub fn a() -> Self {
        Mode::new("a")
    }
    /// Output-side source mode of a two-converter setup.
    pub fn a_prime() -> Self {
        Mode::new("a'")
    }
    /// Mode after a second feed-forward conversion.
    pub fn a_double_prime() -> Self {
        Mode::new("a''")
    }
    /// k-th channel of the multimode target space.
    pub fn b(k: usize) -> Self {
        Mode::new(format!("b{k}"))
    }
    /// Ancilla mode attached to channel k by a tap beam splitter.
    pub fn c(k: usize) -> Self {
        Mode::new(format!("c{k}"))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Enumerated basis of occupation vectors for a set of modes.
#[derive(Debug)]
pub struct FockSpace {
    modes: Vec<Mode>,
    cutoffs: Vec<u32>,
    sector: Option<u32>,
    basis: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl PartialEq for FockSpace {
    fn eq(&self, other: &Self) -> bool {
        self.modes == other.modes && self.cutoffs == other.cutoffs && self.sector == other.sector
    }
}
impl Eq for FockSpace {}

impl FockSpace {
    /// Enumerate the space. Basis order is ascending lexicographic over
    /// occupation vectors in declared mode order.
    pub fn build(
        modes: Vec<Mode>,
        cutoffs: Vec<u32>,
        sector: Option<u32>,
    ) -> Result<Arc<Self>, FockError> {
        if modes.is_empty() {
            return Err(FockError::EmptyModes);
        }
        if modes.len() != cutoffs.len() {
            return Err(FockError::LengthMismatch {
                modes: modes.len(),
                cutoffs: cutoffs.len(),
            });
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].contains(m) {
                return Err(FockError::DuplicateMode(m.clone()));
            }
        }
        if let Some(s) = sector {
            let max_total: u32 = cutoffs.iter().sum();
            if s > max_total {
                return Err(FockError::SectorUnattainable {
                    sector: s,
                    max_total,
                });
            }
        }
        let mut basis = Vec::new();
        enumerate(&cutoffs, sector, &mut vec![0; cutoffs.len()], 0, &mut basis);
        let index = basis
            .iter()
            .enumerate()
            .map(|(i, occ)| (occ.clone(), i))
            .collect();
        Ok(Arc::new(FockSpace {
            modes,
            cutoffs,
            sector,
            basis,
            index,
        }))
    }

    /// Single mode truncated at `cutoff` photons.
    pub fn single_mode(label: Mode, cutoff: u32) -> Arc<Self> {
        Self::build(vec![label], vec![cutoff], None).expect("single mode space is always valid")
    }

    /// Source space: mode `a`, photon numbers 0..=N.
    pub fn source_space(n: u32) -> Arc<Self> {
        Self::single_mode(Mode::a(), n)
    }

    /// Single-photon sector over the given modes (cutoff 1 each).
    pub fn single_photon(modes: Vec<Mode>) -> Result<Arc<Self>, FockError> {
        let len = modes.len();
        Self::build(modes, vec![1; len], Some(1))
    }

    /// Target space: modes `b0..bN`, exactly one photon.
    pub fn target_space(n: u32) -> Arc<Self> {
        Self::single_photon((0..=n as usize).map(Mode::b).collect())
            .expect("target space is always valid")
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }
    pub fn cutoffs(&self) -> &[u32] {
        &self.cutoffs
    }
    pub fn sector(&self) -> Option<u32> {
        self.sector
    }
    pub fn basis(&self) -> &[Vec<u32>] {
        &self.basis
    }
    pub fn occupation(&self, idx: usize) -> &[u32] {
        &self.basis[idx]
    }
    pub fn index_of(&self, occ: &[u32]) -> Option<usize> {
        self.index.get(occ).copied()
    }
    pub fn mode_position(&self, mode: &Mode) -> Option<usize> {
        self.modes.iter().position(|m| m == mode)
    }

    /// Basis index of the single-photon state with the photon in `mode`.
    pub fn photon_in(&self, mode: &Mode) -> Option<usize> {
        let pos = self.mode_position(mode)?;
        let mut occ = vec![0u32; self.modes.len()];
        occ[pos] = 1;
        self.index_of(&occ)
    }

    /// Compose two disjoint spaces. Sectors add when both are fixed.
    pub fn tensor(&self, other: &FockSpace) -> Result<Arc<Self>, FockError> {
        for m in &other.modes {
            if self.modes.contains(m) {
                return Err(FockError::OverlappingModes(m.clone()));
            }
        }
        let modes = [self.modes.clone(), other.modes.clone()].concat();
        let cutoffs = [self.cutoffs.clone(), other.cutoffs.clone()].concat();
        let sector = match (self.sector, other.sector) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        Self::build(modes, cutoffs, sector)
    }
}

fn enumerate(
    cutoffs: &[u32],
    sector: Option<u32>,
    current: &mut Vec<u32>,
    pos: usize,
    out: &mut Vec<Vec<u32>>,
) {
    if pos == cutoffs.len() {
        if sector.is_none_or(|s| current.iter().sum::<u32>() == s) {
            out.push(current.clone());
        }
        return;
    }
    let used: u32 = current[..pos].iter().sum();
    let remaining_capacity: u32 = cutoffs[pos + 1..].iter().sum();
    for n in 0..=cutoffs[pos] {
        if let Some(s) = sector {
            if used + n > s || used + n + remaining_capacity < s {
                continue;
            }
        }
        current[pos] = n;
        enumerate(cutoffs, sector, current, pos + 1, out);
    }
    current[pos] = 0;
}

/// Pure state: complex amplitudes over a space's basis.
#[derive(Clone, Debug)]
pub struct StateVector {
    space: Arc<FockSpace>,
    amplitudes: Array1<C64>,
    normalized: bool,
}

impl StateVector {
    /// A normalized state; rejects vectors whose norm is off by more than
    /// [`NORM_TOL`].
    pub fn new(space: Arc<FockSpace>, amplitudes: Array1<C64>) -> Result<Self, FockError> {
        if amplitudes.len() != space.dim() {
            return Err(FockError::DimensionMismatch {
                got: amplitudes.len(),
                dim: space.dim(),
            });
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(FockError::NotNormalized { norm });
        }
        Ok(StateVector {
            space,
            amplitudes,
            normalized: true,
        })
    }

    /// An intermediate, explicitly unnormalized state.
    pub fn new_unnormalized(space: Arc<FockSpace>, amplitudes: Array1<C64>) -> Self {
        assert_eq!(amplitudes.len(), space.dim());
        StateVector {
            space,
            amplitudes,
            normalized: false,
        }
    }

    /// Basis state for a given occupation vector.
    pub fn basis_state(space: Arc<FockSpace>, occ: &[u32]) -> Result<Self, FockError> {
        let idx = space
            .index_of(occ)
            .ok_or(FockError::DimensionMismatch { got: 0, dim: 0 })?;
        let mut amps = Array1::zeros(space.dim());
        amps[idx] = C64::new(1.0, 0.0);
        Ok(StateVector {
            space,
            amplitudes: amps,
            normalized: true,
        })
    }

    /// Single-mode Fock state |k⟩ on the source space.
    pub fn fock(space: Arc<FockSpace>, k: u32) -> Result<Self, FockError> {
        Self::basis_state(space, &[k])
    }

    /// Single-photon state |φ_k⟩ with the photon in mode `b_k`.
    pub fn phi(space: Arc<FockSpace>, k: usize) -> Result<Self, FockError> {
        let pos = space
            .mode_position(&Mode::b(k))
            .ok_or_else(|| FockError::UnknownMode(Mode::b(k)))?;
        let mut occ = vec![0u32; space.modes().len()];
        occ[pos] = 1;
        Self::basis_state(space, &occ)
    }

    /// Pegg–Barnett phase state with phase parameter `phi` on a single-mode
    /// space: equal-weight superposition with a linear phase ramp.
    pub fn phase_state(space: Arc<FockSpace>, phi: f64) -> Result<Self, FockError> {
        let dim = space.dim();
        let w = 1.0 / (dim as f64).sqrt();
        let amps = Array1::from_iter(
            (0..dim).map(|k| C64::from_polar(w, phi * space.occupation(k)[0] as f64)),
        );
        Self::new(space, amps)
    }

    pub fn space(&self) -> &Arc<FockSpace> {
        &self.space
    }
    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64, FockError> {
        if self.space != other.space {
            return Err(FockError::SpaceMismatch);
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Renormalize; returns the norm that was divided out.
    pub fn normalize(&self) -> (StateVector, f64) {
        let n = self.norm();
        let amps = self.amplitudes.mapv(|z| z / n);
        (
            StateVector {
                space: self.space.clone(),
                amplitudes: amps,
                normalized: true,
            },
            n,
        )
    }

    pub fn apply(&self, matrix: &Array2<C64>) -> StateVector {
        assert_eq!(matrix.ncols(), self.space.dim());
        StateVector::new_unnormalized(self.space.clone(), matrix.dot(&self.amplitudes))
    }

    pub fn to_density(&self) -> DensityOperator {
        let d = self.space.dim();
        let mut m = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                m[[i, j]] = self.amplitudes[i] * self.amplitudes[j].conj();
            }
        }
        DensityOperator {
            space: self.space.clone(),
            matrix: m,
            normalized: self.normalized,
        }
    }

    /// Tensor product; mode sets must be disjoint.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector, FockError> {
        let space = self.space.tensor(&other.space)?;
        let (n1, n2) = (self.space.modes().len(), other.space.modes().len());
        let mut amps = Array1::zeros(space.dim());
        for (i, occ1) in self.space.basis().iter().enumerate() {
            if self.amplitudes[i] == C64::new(0.0, 0.0) {
                continue;
            }
            for (j, occ2) in other.space.basis().iter().enumerate() {
                let a = self.amplitudes[i] * other.amplitudes[j];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let mut occ = Vec::with_capacity(n1 + n2);
                occ.extend_from_slice(occ1);
                occ.extend_from_slice(occ2);
                if let Some(idx) = space.index_of(&occ) {
                    amps[idx] = a;
                }
            }
        }
        Ok(StateVector {
            space,
            amplitudes: amps,
            normalized: self.normalized && other.normalized,
        })
    }

    /// JSON dump: `{"modes", "cutoffs", "sector", "amplitudes"}` in basis order.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "modes": self.space.modes().iter().map(|m| m.0.clone()).collect::<Vec<_>>(),
            "cutoffs": self.space.cutoffs(),
            "sector": self.space.sector(),
            "amplitudes": self.amplitudes.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        })
    }
}

/// Mixed state: Hermitian, positive semidefinite matrix over a space's basis.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    space: Arc<FockSpace>,
    matrix: Array2<C64>,
    normalized: bool,
}

impl DensityOperator {
    /// A normalized density operator; validates Hermiticity, trace, and (for
    /// small dimensions) positivity.
    pub fn new(space: Arc<FockSpace>, matrix: Array2<C64>) -> Result<Self, FockError> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(FockError::DimensionMismatch {
                got: matrix.nrows(),
                dim: space.dim(),
            });
        }
        let herm = linalg::hermiticity_defect(&matrix);
        if herm > HERM_TOL {
            return Err(FockError::NotHermitian(herm));
        }
        let tr = linalg::trace(&matrix);
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(FockError::BadTrace(tr.re));
        }
        if space.dim() <= PSD_CHECK_MAX_DIM {
            let (vals, _) = linalg::hermitian_eig(&matrix)?;
            if let Some(min) = vals.iter().cloned().reduce(f64::min) {
                if min < PSD_TOL {
                    return Err(FockError::NotPositive(min));
                }
            }
        }
        Ok(DensityOperator {
            space,
            matrix,
            normalized: true,
        })
    }

    /// An unnormalized (e.g. post-selected, pre-division) operator.
    pub fn new_unnormalized(space: Arc<FockSpace>, matrix: Array2<C64>) -> Self {
        assert_eq!(matrix.nrows(), space.dim());
        assert_eq!(matrix.ncols(), space.dim());
        DensityOperator {
            space,
            matrix,
            normalized: false,
        }
    }

    /// Maximally mixed state.
    pub fn maximally_mixed(space: Arc<FockSpace>) -> Self {
        let d = space.dim();
        let m = linalg::identity(d).mapv(|z| z / d as f64);
        DensityOperator {
            space,
            matrix: m,
            normalized: true,
        }
    }

    pub fn space(&self) -> &Arc<FockSpace> {
        &self.space
    }
    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.matrix)
    }

    /// Conjugation `E ρ E†` (unnormalized result).
    pub fn conjugate_by(&self, e: &Array2<C64>) -> DensityOperator {
        let m = e.dot(&self.matrix).dot(&linalg::dagger(e));
        DensityOperator {
            space: self.space.clone(),
            matrix: m,
            normalized: false,
        }
    }

    /// Renormalize to unit trace; returns the trace that was divided out.
    pub fn normalize(&self) -> (DensityOperator, f64) {
        let tr = self.trace().re;
        let m = self.matrix.mapv(|z| z / tr);
        (
            DensityOperator {
                space: self.space.clone(),
                matrix: m,
                normalized: true,
            },
            tr,
        )
    }

    /// Entrywise complex conjugate in the Fock basis.
    pub fn conj(&self) -> DensityOperator {
        DensityOperator {
            space: self.space.clone(),
            matrix: self.matrix.mapv(|z| z.conj()),
            normalized: self.normalized,
        }
    }

    pub fn tensor(&self, other: &DensityOperator) -> Result<DensityOperator, FockError> {
        let space = self.space.tensor(&other.space)?;
        // Index maps from the product enumeration to the composed space.
        let d1 = self.space.dim();
        let d2 = other.space.dim();
        let mut lut = vec![usize::MAX; d1 * d2];
        for (i, occ1) in self.space.basis().iter().enumerate() {
            for (j, occ2) in other.space.basis().iter().enumerate() {
                let mut occ = occ1.clone();
                occ.extend_from_slice(occ2);
                if let Some(idx) = space.index_of(&occ) {
                    lut[i * d2 + j] = idx;
                }
            }
        }
        let mut m = Array2::zeros((space.dim(), space.dim()));
        for i1 in 0..d1 {
            for j1 in 0..d1 {
                let x = self.matrix[[i1, j1]];
                if x == C64::new(0.0, 0.0) {
                    continue;
                }
                for i2 in 0..d2 {
                    for j2 in 0..d2 {
                        let y = other.matrix[[i2, j2]];
                        if y == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let (r, c) = (lut[i1 * d2 + i2], lut[j1 * d2 + j2]);
                        if r != usize::MAX && c != usize::MAX {
                            m[[r, c]] = x * y;
                        }
                    }
                }
            }
        }
        Ok(DensityOperator {
            space,
            matrix: m,
            normalized: self.normalized && other.normalized,
        })
    }

    /// Trace out every mode not in `keep`. The marginal space keeps the
    /// original cutoffs and drops any sector restriction.
    pub fn partial_trace(&self, keep: &[Mode]) -> Result<DensityOperator, FockError> {
        if keep.is_empty() {
            return Err(FockError::EmptyKeep);
        }
        let mut keep_pos = Vec::with_capacity(keep.len());
        for m in keep {
            keep_pos.push(
                self.space
                    .mode_position(m)
                    .ok_or_else(|| FockError::UnknownMode(m.clone()))?,
            );
        }
        let all: Vec<usize> = (0..self.space.modes().len()).collect();
        let traced_pos: Vec<usize> = all
            .iter()
            .copied()
            .filter(|p| !keep_pos.contains(p))
            .collect();
        let out_modes: Vec<Mode> = keep_pos
            .iter()
            .map(|&p| self.space.modes()[p].clone())
            .collect();
        let out_cutoffs: Vec<u32> = keep_pos.iter().map(|&p| self.space.cutoffs()[p]).collect();
        let out_space = FockSpace::build(out_modes, out_cutoffs, None)?;

        // Group source basis indices by traced-mode occupation.
        let mut groups: HashMap<Vec<u32>, Vec<(usize, usize)>> = HashMap::new();
        for (idx, occ) in self.space.basis().iter().enumerate() {
            let kept: Vec<u32> = keep_pos.iter().map(|&p| occ[p]).collect();
            let traced: Vec<u32> = traced_pos.iter().map(|&p| occ[p]).collect();
            let out_idx = out_space
                .index_of(&kept)
                .expect("kept occupation respects kept cutoffs");
            groups.entry(traced).or_default().push((idx, out_idx));
        }
        let mut m = Array2::zeros((out_space.dim(), out_space.dim()));
        for members in groups.values() {
            for &(src_i, out_i) in members {
                for &(src_j, out_j) in members {
                    m[[out_i, out_j]] += self.matrix[[src_i, src_j]];
                }
            }
        }
        Ok(DensityOperator {
            space: out_space,
            matrix: m,
            normalized: self.normalized,
        })
    }

    /// JSON dump with the same envelope as state dumps.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "modes": self.space.modes().iter().map(|m| m.0.clone()).collect::<Vec<_>>(),
            "cutoffs": self.space.cutoffs(),
            "sector": self.space.sector(),
            "matrix": self.matrix.rows().into_iter()
                .map(|r| r.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        })
    }
}

/// Pure-or-mixed state, preserved through protocol pipelines.
#[derive(Clone, Debug)]
pub enum QuantumState {
    Pure(StateVector),
    Mixed(DensityOperator),
}

impl QuantumState {
    pub fn space(&self) -> &Arc<FockSpace> {
        match self {
            QuantumState::Pure(s) => s.space(),
            QuantumState::Mixed(r) => r.space(),
        }
    }

    pub fn to_density(&self) -> DensityOperator {
        match self {
            QuantumState::Pure(s) => s.to_density(),
            QuantumState::Mixed(r) => r.clone(),
        }
    }

    /// `E ψ` / `E ρ E†` without normalization; weight() gives the norm².
    pub fn apply(&self, e: &Array2<C64>) -> QuantumState {
        match self {
            QuantumState::Pure(s) => QuantumState::Pure(s.apply(e)),
            QuantumState::Mixed(r) => QuantumState::Mixed(r.conjugate_by(e)),
        }
    }

    /// Squared norm (pure) or trace (mixed) — the probability weight carried
    /// by an unnormalized post-selected state.
    pub fn weight(&self) -> f64 {
        match self {
            QuantumState::Pure(s) => s.norm_sqr(),
            QuantumState::Mixed(r) => r.trace().re,
        }
    }

    pub fn normalize(&self) -> (QuantumState, f64) {
        match self {
            QuantumState::Pure(s) => {
                let (v, n) = s.normalize();
                (QuantumState::Pure(v), n * n)
            }
            QuantumState::Mixed(r) => {
                let (v, t) = r.normalize();
                (QuantumState::Mixed(v), t)
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            QuantumState::Pure(s) => s.to_json(),
            QuantumState::Mixed(r) => r.to_json(),
        }
    }
}

/// Uhlmann fidelity, squared convention: identical states give 1, orthogonal
/// pure states give 0, and against a pure state it reduces to ⟨ψ|ρ|ψ⟩.
pub fn fidelity(rho1: &DensityOperator, rho2: &DensityOperator) -> Result<f64, FockError> {
    if rho1.space() != rho2.space() {
        return Err(FockError::SpaceMismatch);
    }
    let s = linalg::psd_sqrt(rho1.matrix())?;
    let inner = s.dot(rho2.matrix()).dot(&s);
    let (vals, _) = linalg::hermitian_eig(&inner)?;
    let root_sum: f64 = vals.iter().map(|l| l.max(0.0).sqrt()).sum();
    Ok((root_sum * root_sum).clamp(0.0, 1.0 + 1e-9))
}

pub fn state_fidelity(a: &QuantumState, b: &QuantumState) -> Result<f64, FockError> {
    match (a, b) {
        (QuantumState::Pure(x), QuantumState::Pure(y)) => {
            let ov = x.inner(y)?;
            Ok(ov.norm_sqr())
        }
        (QuantumState::Pure(x), QuantumState::Mixed(r))
        | (QuantumState::Mixed(r), QuantumState::Pure(x)) => {
            if x.space() != r.space() {
                return Err(FockError::SpaceMismatch);
            }
            let v = x.amplitudes();
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..v.len() {
                for j in 0..v.len() {
                    acc += v[i].conj() * r.matrix()[[i, j]] * v[j];
                }
            }
            Ok(acc.re)
        }
        (QuantumState::Mixed(r1), QuantumState::Mixed(r2)) => fidelity(r1, r2),
    }
}

/// Trace distance ½‖ρ₁ − ρ₂‖₁.
pub fn trace_distance(rho1: &DensityOperator, rho2: &DensityOperator) -> Result<f64, FockError> {
    if rho1.space() != rho2.space() {
        return Err(FockError::SpaceMismatch);
    }
    let diff = rho1.matrix() - rho2.matrix();
    Ok(0.5 * linalg::hermitian_trace_norm(&diff)?)
}

/// Isometry between the single-mode source space (cutoff N) and the
/// (N+1)-mode single-photon target space, |k⟩ ↦ |φ_k⟩.
#[derive(Clone, Debug)]
pub struct IsomorphismMap {
    source: Arc<FockSpace>,
    target: Arc<FockSpace>,
    /// target_dim × source_dim isometry.
    matrix: Array2<C64>,
}

impl IsomorphismMap {
    pub fn new(source: Arc<FockSpace>, target: Arc<FockSpace>) -> Result<Self, FockError> {
        if source.modes().len() != 1 || source.sector().is_some() {
            return Err(FockError::BadIsomorphism);
        }
        let n = source.cutoffs()[0] as usize;
        if target.modes().len() != n + 1
            || target.sector() != Some(1)
            || target.dim() != n + 1
            || source.dim() != n + 1
        {
            return Err(FockError::BadIsomorphism);
        }
        let mut matrix = Array2::zeros((target.dim(), source.dim()));
        for k in 0..=n {
            let src = source
                .index_of(&[k as u32])
                .ok_or(FockError::BadIsomorphism)?;
            let mut occ = vec![0u32; n + 1];
            occ[k] = 1;
            let tgt = target.index_of(&occ).ok_or(FockError::BadIsomorphism)?;
            matrix[[tgt, src]] = C64::new(1.0, 0.0);
        }
        Ok(IsomorphismMap {
            source,
            target,
            matrix,
        })
    }

    /// Canonical map for truncation order `n` between mode `a` and `b0..bN`.
    pub fn canonical(n: u32) -> Self {
        Self::new(FockSpace::source_space(n), FockSpace::target_space(n))
            .expect("canonical spaces always match")
    }

    /// Map with a relabelled source mode (e.g. the `a'` output of a second
    /// converter).
    pub fn with_source_mode(n: u32, label: Mode) -> Self {
        Self::new(FockSpace::single_mode(label, n), FockSpace::target_space(n))
            .expect("relabelled source always matches")
    }

    pub fn source(&self) -> &Arc<FockSpace> {
        &self.source
    }
    pub fn target(&self) -> &Arc<FockSpace> {
        &self.target
    }
    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn lift_state(&self, psi: &StateVector) -> Result<StateVector, FockError> {
        if psi.space() != &self.source {
            return Err(FockError::SpaceMismatch);
        }
        let amps = self.matrix.dot(psi.amplitudes());
        Ok(StateVector {
            space: self.target.clone(),
            amplitudes: amps,
            normalized: psi.normalized,
        })
    }

    pub fn lower_state(&self, psi: &StateVector) -> Result<StateVector, FockError> {
        if psi.space() != &self.target {
            return Err(FockError::SpaceMismatch);
        }
        let amps = linalg::dagger(&self.matrix).dot(psi.amplitudes());
        Ok(StateVector {
            space: self.source.clone(),
            amplitudes: amps,
            normalized: psi.normalized,
        })
    }

    /// `O_b = P O_a P†`.
    pub fn lift_operator(&self, op: &Array2<C64>) -> Array2<C64> {
        self.matrix.dot(op).dot(&linalg::dagger(&self.matrix))
    }

    /// `O_a = P† O_b P`.
    pub fn lower_operator(&self, op: &Array2<C64>) -> Array2<C64> {
        linalg::dagger(&self.matrix).dot(op).dot(&self.matrix)
    }

    pub fn lift_density(&self, rho: &DensityOperator) -> Result<DensityOperator, FockError> {
        if rho.space() != &self.source {
            return Err(FockError::SpaceMismatch);
        }
        Ok(DensityOperator {
            space: self.target.clone(),
            matrix: self.lift_operator(rho.matrix()),
            normalized: rho.normalized,
        })
    }

    pub fn lower_density(&self, rho: &DensityOperator) -> Result<DensityOperator, FockError> {
        if rho.space() != &self.target {
            return Err(FockError::SpaceMismatch);
        }
        Ok(DensityOperator {
            space: self.source.clone(),
            matrix: self.lower_operator(rho.matrix()),
            normalized: rho.normalized,
        })
    }

    pub fn lift(&self, state: &QuantumState) -> Result<QuantumState, FockError> {
        Ok(match state {
            QuantumState::Pure(s) => QuantumState::Pure(self.lift_state(s)?),
            QuantumState::Mixed(r) => QuantumState::Mixed(self.lift_density(r)?),
        })
    }

    pub fn lower(&self, state: &QuantumState) -> Result<QuantumState, FockError> {
        Ok(match state {
            QuantumState::Pure(s) => QuantumState::Pure(self.lower_state(s)?),
            QuantumState::Mixed(r) => QuantumState::Mixed(self.lower_density(r)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_diff, random_density};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn build_space_dimensions() {
        // 1 mode, cutoff 3 → dimension 4
        let s = FockSpace::single_mode(Mode::a(), 3);
        assert_eq!(s.dim(), 4);
        // 4 modes, cutoff 1 each, sector 1 → dimension 4
        let s = FockSpace::target_space(3);
        assert_eq!(s.dim(), 4);
        let expected: Vec<Vec<u32>> = vec![
            vec![0, 0, 0, 1],
            vec![0, 0, 1, 0],
            vec![0, 1, 0, 0],
            vec![1, 0, 0, 0],
        ];
        assert_eq!(s.basis(), expected.as_slice());
        // 2 modes, cutoff 2 each, sector 2 → dimension 3 {|02>,|11>,|20>}
        let s = FockSpace::build(vec![Mode::b(0), Mode::b(1)], vec![2, 2], Some(2)).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(
            s.basis(),
            vec![vec![0, 2], vec![1, 1], vec![2, 0]].as_slice()
        );
    }

    #[test]
    fn build_space_errors() {
        assert!(matches!(
            FockSpace::build(vec![], vec![], None),
            Err(FockError::EmptyModes)
        ));
        assert!(matches!(
            FockSpace::build(vec![Mode::a()], vec![1], Some(5)),
            Err(FockError::SectorUnattainable { .. })
        ));
        assert!(matches!(
            FockSpace::build(vec![Mode::a(), Mode::a()], vec![1, 1], None),
            Err(FockError::DuplicateMode(_))
        ));
    }

    #[test]
    fn basis_index_roundtrip() {
        let s =
            FockSpace::build(vec![Mode::a(), Mode::b(0), Mode::b(1)], vec![3, 2, 2], None).unwrap();
        for i in 0..s.dim() {
            assert_eq!(s.index_of(s.occupation(i)), Some(i));
        }
    }

    #[test]
    fn tensor_product_states() {
        let sa = FockSpace::single_mode(Mode::a(), 1);
        let sb = FockSpace::single_mode(Mode::b(0), 1);
        let one = StateVector::fock(sa.clone(), 1).unwrap();
        let zero = StateVector::fock(sb.clone(), 0).unwrap();
        let prod = one.tensor(&zero).unwrap();
        assert_eq!(prod.space().dim(), 4);
        let idx = prod.space().index_of(&[1, 0]).unwrap();
        assert_eq!(prod.amplitudes()[idx], c(1.0, 0.0));

        let plus = StateVector::new(
            sa.clone(),
            array![c(1.0 / 2f64.sqrt(), 0.0), c(1.0 / 2f64.sqrt(), 0.0)],
        )
        .unwrap();
        let prod = plus.tensor(&zero).unwrap();
        let i00 = prod.space().index_of(&[0, 0]).unwrap();
        let i10 = prod.space().index_of(&[1, 0]).unwrap();
        assert!((prod.amplitudes()[i00].re - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((prod.amplitudes()[i10].re - 1.0 / 2f64.sqrt()).abs() < 1e-15);

        assert!(matches!(
            one.tensor(&one),
            Err(FockError::OverlappingModes(_))
        ));
    }

    #[test]
    fn tensor_norm_multiplies() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sa = FockSpace::single_mode(Mode::a(), 2);
        let sb = FockSpace::single_mode(Mode::b(0), 2);
        for _ in 0..20 {
            let va = crate::linalg::random_state_vector(3, &mut rng).mapv(|z| z * 0.7);
            let vb = crate::linalg::random_state_vector(3, &mut rng).mapv(|z| z * 1.3);
            let a = StateVector::new_unnormalized(sa.clone(), va);
            let b = StateVector::new_unnormalized(sb.clone(), vb);
            let prod = a.tensor(&b).unwrap();
            assert!((prod.norm() - a.norm() * b.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_of_product_recovers_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sa = FockSpace::single_mode(Mode::a(), 2);
        let sb = FockSpace::single_mode(Mode::b(0), 1);
        let ra = DensityOperator::new(sa.clone(), random_density(3, &mut rng)).unwrap();
        let rb = DensityOperator::new(sb.clone(), random_density(2, &mut rng)).unwrap();
        let joint = ra.tensor(&rb).unwrap();
        let back = joint.partial_trace(&[Mode::a()]).unwrap();
        assert!(max_diff(back.matrix(), ra.matrix()) < 1e-13);
        let back_b = joint.partial_trace(&[Mode::b(0)]).unwrap();
        assert!(max_diff(back_b.matrix(), rb.matrix()) < 1e-13);
        assert!((back.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_of_entangled_pair_is_maximally_mixed() {
        // two sector-1 pairs, photon position entangled
        let s = FockSpace::build(
            vec![Mode::b(0), Mode::b(1), Mode::c(0), Mode::c(1)],
            vec![1, 1, 1, 1],
            Some(2),
        )
        .unwrap();
        let i0 = s.index_of(&[1, 0, 1, 0]).unwrap();
        let i1 = s.index_of(&[0, 1, 0, 1]).unwrap();
        let mut amps = Array1::zeros(s.dim());
        amps[i0] = c(1.0 / 2f64.sqrt(), 0.0);
        amps[i1] = c(1.0 / 2f64.sqrt(), 0.0);
        let psi = StateVector::new(s, amps).unwrap();
        let rho = psi.to_density();
        let marginal = rho.partial_trace(&[Mode::b(0), Mode::b(1)]).unwrap();
        // support on {|10>, |01>} with weight 1/2 each, no coherence
        let j0 = marginal.space().index_of(&[1, 0]).unwrap();
        let j1 = marginal.space().index_of(&[0, 1]).unwrap();
        assert!((marginal.matrix()[[j0, j0]].re - 0.5).abs() < 1e-14);
        assert!((marginal.matrix()[[j1, j1]].re - 0.5).abs() < 1e-14);
        assert!(marginal.matrix()[[j0, j1]].norm() < 1e-14);
    }

    #[test]
    fn partial_trace_errors() {
        let sa = FockSpace::single_mode(Mode::a(), 1);
        let rho = DensityOperator::maximally_mixed(sa);
        assert!(matches!(rho.partial_trace(&[]), Err(FockError::EmptyKeep)));
        assert!(matches!(
            rho.partial_trace(&[Mode::b(9)]),
            Err(FockError::UnknownMode(_))
        ));
    }

    #[test]
    fn isomorphism_maps_fock_to_photon_position() {
        for n in 0..=4u32 {
            let map = IsomorphismMap::canonical(n);
            assert!(
                max_diff(
                    &crate::linalg::dagger(map.matrix()).dot(map.matrix()),
                    &crate::linalg::identity(n as usize + 1)
                ) < 1e-15
            );
            for k in 0..=n {
                let psi = StateVector::fock(map.source().clone(), k).unwrap();
                let lifted = map.lift_state(&psi).unwrap();
                let expect = StateVector::phi(map.target().clone(), k as usize).unwrap();
                assert!((lifted.inner(&expect).unwrap().re - 1.0).abs() < 1e-15);
                let back = map.lower_state(&lifted).unwrap();
                assert!((back.inner(&psi).unwrap().re - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn isomorphism_linearity_and_roundtrip() {
        let map = IsomorphismMap::canonical(2);
        let s = map.source().clone();
        let psi = StateVector::new(
            s,
            array![
                c(1.0 / 2f64.sqrt(), 0.0),
                c(0.0, 0.0),
                c(1.0 / 2f64.sqrt(), 0.0)
            ],
        )
        .unwrap();
        let lifted = map.lift_state(&psi).unwrap();
        let phi0 = StateVector::phi(map.target().clone(), 0).unwrap();
        let phi2 = StateVector::phi(map.target().clone(), 2).unwrap();
        assert!((lifted.inner(&phi0).unwrap().norm() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((lifted.inner(&phi2).unwrap().norm() - 1.0 / 2f64.sqrt()).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let v = crate::linalg::random_state_vector(3, &mut rng);
            let psi = StateVector::new(map.source().clone(), v).unwrap();
            let round = map.lower_state(&map.lift_state(&psi).unwrap()).unwrap();
            let diff: f64 = psi
                .amplitudes()
                .iter()
                .zip(round.amplitudes().iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(diff < 1e-14);
        }
    }

    #[test]
    fn lift_operator_preserves_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let map = IsomorphismMap::canonical(3);
        let h = {
            let r = random_density(4, &mut rng);
            r.mapv(|z| z * 3.0)
        };
        let lifted = map.lift_operator(&h);
        let (v1, _) = crate::linalg::hermitian_eig(&h).unwrap();
        let (v2, _) = crate::linalg::hermitian_eig(&lifted).unwrap();
        for (a, b) in v1.iter().zip(v2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // identity lifts to the projector onto the single-photon sector,
        // which on the sector-1 space is the identity
        let id = crate::linalg::identity(4);
        assert!(max_diff(&map.lift_operator(&id), &id) < 1e-15);
        // number operator lifts to sum_k k |phi_k><phi_k|
        let n_op = Array2::from_diag(&Array1::from_iter((0..4).map(|k| c(k as f64, 0.0))));
        let lifted_n = map.lift_operator(&n_op);
        for k in 0..4usize {
            let idx = map.target().photon_in(&Mode::b(k)).unwrap();
            assert!((lifted_n[[idx, idx]].re - k as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn lift_preserves_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let map = IsomorphismMap::canonical(3);
        for _ in 0..20 {
            let x = StateVector::new(
                map.source().clone(),
                crate::linalg::random_state_vector(4, &mut rng),
            )
            .unwrap();
            let y = StateVector::new(
                map.source().clone(),
                crate::linalg::random_state_vector(4, &mut rng),
            )
            .unwrap();
            let direct = x.inner(&y).unwrap();
            let lifted = map
                .lift_state(&x)
                .unwrap()
                .inner(&map.lift_state(&y).unwrap())
                .unwrap();
            assert!((direct - lifted).norm() < 1e-13);
        }
    }

    #[test]
    fn fidelity_and_trace_distance_basics() {
        let s = FockSpace::single_mode(Mode::a(), 1);
        let zero = StateVector::fock(s.clone(), 0).unwrap().to_density();
        let one = StateVector::fock(s.clone(), 1).unwrap().to_density();
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-12);
        assert!(fidelity(&zero, &one).unwrap() < 1e-12);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-12);
        assert!(trace_distance(&zero, &zero).unwrap() < 1e-12);
    }

    #[test]
    fn fidelity_matches_bruteforce_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = FockSpace::single_mode(Mode::a(), 3);
        for _ in 0..10 {
            let r1 = DensityOperator::new(s.clone(), random_density(4, &mut rng)).unwrap();
            let r2 = DensityOperator::new(s.clone(), random_density(4, &mut rng)).unwrap();
            let f = fidelity(&r1, &r2).unwrap();
            // direct (Tr sqrt(sqrt(r1) r2 sqrt(r1)))^2 via independent route:
            // trace norm of sqrt(r1) sqrt(r2)
            let s1 = crate::linalg::psd_sqrt(r1.matrix()).unwrap();
            let s2 = crate::linalg::psd_sqrt(r2.matrix()).unwrap();
            let x = s1.dot(&s2);
            let sv = crate::linalg::svd(&x).unwrap();
            let tn: f64 = sv.singular_values.iter().sum();
            assert!((f - tn * tn).abs() < 1e-10);
            assert!((0.0..=1.0 + 1e-9).contains(&f));
        }
    }

    #[test]
    fn density_constructor_validates() {
        let s = FockSpace::single_mode(Mode::a(), 1);
        let bad_herm = array![[c(0.5, 0.0), c(0.1, 0.0)], [c(0.3, 0.0), c(0.5, 0.0)]];
        assert!(matches!(
            DensityOperator::new(s.clone(), bad_herm),
            Err(FockError::NotHermitian(_))
        ));
        let bad_trace = array![[c(0.9, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.5, 0.0)]];
        assert!(matches!(
            DensityOperator::new(s.clone(), bad_trace),
            Err(FockError::BadTrace(_))
        ));
        let not_psd = array![[c(1.5, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-0.5, 0.0)]];
        assert!(matches!(
            DensityOperator::new(s.clone(), not_psd),
            Err(FockError::NotPositive(_))
        ));
    }

    #[test]
    fn state_vector_norm_flagging() {
        let s = FockSpace::single_mode(Mode::a(), 1);
        let bad = array![c(1.0, 0.0), c(0.5, 0.0)];
        assert!(matches!(
            StateVector::new(s.clone(), bad.clone()),
            Err(FockError::NotNormalized { .. })
        ));
        let v = StateVector::new_unnormalized(s, bad);
        assert!(!v.is_normalized());
        let (n, norm) = v.normalize();
        assert!(n.is_normalized());
        assert!((norm - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn json_dump_shape() {
        let s = FockSpace::target_space(1);
        let psi = StateVector::phi(s, 0).unwrap();
        let v = psi.to_json();
        assert_eq!(v["modes"], serde_json::json!(["b0", "b1"]));
        assert_eq!(v["sector"], serde_json::json!(1));
        assert_eq!(v["amplitudes"].as_array().unwrap().len(), 2);
    }
}
