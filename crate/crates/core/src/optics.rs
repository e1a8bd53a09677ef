//! Linear-optical circuit elements, their action on Fock spaces, multiport
//! mesh synthesis, and the polar-decomposition utility.
//!
//! Sign convention, used everywhere: a beam splitter on modes (b, c) with
//! transmittance T and reflectance R transforms annihilators as
//! `b → T b + R c`, completed unitarily to the single-particle matrix
//! `[[T, R], [-R*, T*]]`. The matrix element convention for any multiport is
//! `U_kl = ⟨φ_k|Û|φ_l⟩`, identical to the annihilator transformation matrix.

use crate::fock::{FockSpace, Mode};
use crate::linalg::{self, C64};
use ndarray::{Array1, Array2};
use std::collections::HashMap;
use std::sync::Arc;

const UNITARY_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum OpticsError {
    #[error("|T|^2 + |R|^2 = {0} violates unitarity")]
    BadSplitter(f64),
    #[error("mode {0} not present in the space")]
    UnknownMode(Mode),
    #[error("matrix is not unitary (defect {0:.3e})")]
    NotUnitary(f64),
    #[error("|T| = {0} exceeds 1")]
    TransmittanceTooLarge(f64),
    #[error("expected a single-mode space")]
    NotSingleMode,
    #[error("mode count {modes} does not match matrix dimension {dim}")]
    ModeCountMismatch { modes: usize, dim: usize },
    #[error("zero operator has no polar decomposition")]
    ZeroOperator,
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// Two-mode beam splitter, `b → T b + R c`.
#[derive(Clone, Debug)]
pub struct BeamSplitterElement {
    pub mode_pair: (Mode, Mode),
    pub transmittance: C64,
    pub reflectance: C64,
}

impl BeamSplitterElement {
    pub fn new(mode_pair: (Mode, Mode), t: C64, r: C64) -> Result<Self, OpticsError> {
        let s = t.norm_sqr() + r.norm_sqr();
        if (s - 1.0).abs() > UNITARY_TOL {
            return Err(OpticsError::BadSplitter(s));
        }
        Ok(BeamSplitterElement {
            mode_pair,
            transmittance: t,
            reflectance: r,
        })
    }

    /// Symmetric 50:50 splitter (T real, R = i/√2).
    pub fn balanced(mode_pair: (Mode, Mode)) -> Self {
        let inv = 1.0 / 2f64.sqrt();
        BeamSplitterElement {
            mode_pair,
            transmittance: C64::new(inv, 0.0),
            reflectance: C64::new(0.0, inv),
        }
    }

    /// Single-particle matrix on the ordered pair.
    pub fn single_particle_matrix(&self) -> Array2<C64> {
        let (t, r) = (self.transmittance, self.reflectance);
        ndarray::array![[t, r], [-r.conj(), t.conj()]]
    }
}

/// Cross-Kerr coupler on a mode pair: diagonal phase `exp(iκ n₁ n₂)`.
#[derive(Clone, Debug)]
pub struct CrossKerrElement {
    pub mode_pair: (Mode, Mode),
    pub kappa: f64,
}

/// Single-mode phase shifter, diagonal `exp(iθ n)`.
#[derive(Clone, Debug)]
pub struct PhaseShifterElement {
    pub mode: Mode,
    pub theta: f64,
}

/// An (N+1)-mode array described by its single-particle unitary.
#[derive(Clone, Debug)]
pub struct MultiportUnitary {
    modes: Vec<Mode>,
    matrix: Array2<C64>,
}

impl MultiportUnitary {
    pub fn new(modes: Vec<Mode>, matrix: Array2<C64>) -> Result<Self, OpticsError> {
        if matrix.nrows() != modes.len() || matrix.ncols() != modes.len() {
            return Err(OpticsError::ModeCountMismatch {
                modes: modes.len(),
                dim: matrix.nrows(),
            });
        }
        let defect = linalg::unitarity_defect(&matrix);
        if defect > UNITARY_TOL {
            return Err(OpticsError::NotUnitary(defect));
        }
        Ok(MultiportUnitary { modes, matrix })
    }

    pub fn identity(modes: Vec<Mode>) -> Self {
        let n = modes.len();
        MultiportUnitary {
            modes,
            matrix: linalg::identity(n),
        }
    }

    /// On the canonical channel modes `b0..bN`.
    pub fn on_channels(n: u32, matrix: Array2<C64>) -> Result<Self, OpticsError> {
        Self::new((0..=n as usize).map(Mode::b).collect(), matrix)
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }
    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }
    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn dagger(&self) -> MultiportUnitary {
        MultiportUnitary {
            modes: self.modes.clone(),
            matrix: linalg::dagger(&self.matrix),
        }
    }

    pub fn then(&self, later: &MultiportUnitary) -> MultiportUnitary {
        assert_eq!(
            self.modes, later.modes,
            "composing arrays on different modes"
        );
        MultiportUnitary {
            modes: self.modes.clone(),
            matrix: later.matrix.dot(&self.matrix),
        }
    }
}

/// Any circuit element with a rule to build its matrix on a Fock space.
#[derive(Clone, Debug)]
pub enum CircuitElement {
    BeamSplitter(BeamSplitterElement),
    CrossKerr(CrossKerrElement),
    PhaseShifter(PhaseShifterElement),
    Multiport(MultiportUnitary),
}

impl CircuitElement {
    fn modes(&self) -> Vec<Mode> {
        match self {
            CircuitElement::BeamSplitter(b) => {
                vec![b.mode_pair.0.clone(), b.mode_pair.1.clone()]
            }
            CircuitElement::CrossKerr(k) => vec![k.mode_pair.0.clone(), k.mode_pair.1.clone()],
            CircuitElement::PhaseShifter(p) => vec![p.mode.clone()],
            CircuitElement::Multiport(m) => m.modes.clone(),
        }
    }
}

/// Apply a circuit element to an amplitude vector over `space`, without
/// materializing the element matrix. This is the workhorse of both
/// [`element_matrix`] and the brute-force oracle.
pub fn apply_element(
    elem: &CircuitElement,
    space: &Arc<FockSpace>,
    amplitudes: &Array1<C64>,
) -> Result<Array1<C64>, OpticsError> {
    for m in elem.modes() {
        if space.mode_position(&m).is_none() {
            return Err(OpticsError::UnknownMode(m));
        }
    }
    let mut out = Array1::zeros(space.dim());
    match elem {
        CircuitElement::CrossKerr(k) => {
            let p0 = space.mode_position(&k.mode_pair.0).unwrap();
            let p1 = space.mode_position(&k.mode_pair.1).unwrap();
            for (idx, occ) in space.basis().iter().enumerate() {
                let phase = C64::from_polar(1.0, k.kappa * (occ[p0] * occ[p1]) as f64);
                out[idx] = amplitudes[idx] * phase;
            }
        }
        CircuitElement::PhaseShifter(p) => {
            let pos = space.mode_position(&p.mode).unwrap();
            for (idx, occ) in space.basis().iter().enumerate() {
                let phase = C64::from_polar(1.0, p.theta * occ[pos] as f64);
                out[idx] = amplitudes[idx] * phase;
            }
        }
        CircuitElement::BeamSplitter(b) => {
            let positions = vec![
                space.mode_position(&b.mode_pair.0).unwrap(),
                space.mode_position(&b.mode_pair.1).unwrap(),
            ];
            homomorphic_apply(
                space,
                &positions,
                &b.single_particle_matrix(),
                amplitudes,
                &mut out,
            );
        }
        CircuitElement::Multiport(m) => {
            let positions: Vec<usize> = m
                .modes
                .iter()
                .map(|mode| space.mode_position(mode).unwrap())
                .collect();
            homomorphic_apply(space, &positions, &m.matrix, amplitudes, &mut out);
        }
    }
    Ok(out)
}

/// Induced action of a single-particle unitary on the occupation basis: each
/// creation operator of a touched mode transforms by the matrix column, and
/// products are expanded term by term. Amplitudes that would exceed a mode
/// cutoff are dropped, which never happens when the space's sector keeps the
/// photon number within every cutoff.
fn homomorphic_apply(
    space: &Arc<FockSpace>,
    positions: &[usize],
    single_particle: &Array2<C64>,
    amplitudes: &Array1<C64>,
    out: &mut Array1<C64>,
) {
    let m = positions.len();
    for (idx, occ) in space.basis().iter().enumerate() {
        let amp_in = amplitudes[idx];
        if amp_in == C64::new(0.0, 0.0) {
            continue;
        }
        // Factorial normalization of the incoming state.
        let mut norm_in = 1.0f64;
        for &p in positions {
            norm_in *= factorial(occ[p]);
        }
        // Expand prod_l (sum_j U_jl b_j†)^{n_l} acting on the vacuum of the
        // touched modes; untouched modes ride along unchanged.
        let mut terms: HashMap<Vec<u32>, C64> = HashMap::new();
        terms.insert(vec![0; m], C64::new(1.0, 0.0));
        for (l, &p) in positions.iter().enumerate() {
            for _ in 0..occ[p] {
                let mut next: HashMap<Vec<u32>, C64> = HashMap::new();
                for (local, coeff) in &terms {
                    for j in 0..m {
                        let u = single_particle[[j, l]];
                        if u == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let mut nl = local.clone();
                        let raise = ((nl[j] + 1) as f64).sqrt();
                        nl[j] += 1;
                        *next.entry(nl).or_insert(C64::new(0.0, 0.0)) +=
                            coeff * u * C64::new(raise, 0.0);
                    }
                }
                terms = next;
            }
        }
        for (local, coeff) in terms {
            let mut new_occ = occ.clone();
            let mut ok = true;
            for (j, &p) in positions.iter().enumerate() {
                if local[j] > space.cutoffs()[p] {
                    ok = false;
                    break;
                }
                new_occ[p] = local[j];
            }
            if !ok {
                continue;
            }
            if let Some(new_idx) = space.index_of(&new_occ) {
                // coeff carries sqrt(n_out!) from the raising chain; dividing
                // by sqrt(n_in!) normalizes the incoming ket and the result
                // is expressed over normalized kets directly.
                out[new_idx] += amp_in * coeff / C64::new(norm_in.sqrt(), 0.0);
            }
        }
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n as u64).map(|k| k as f64).product()
}

/// Matrix of a circuit element on a Fock space.
pub fn element_matrix(
    elem: &CircuitElement,
    space: &Arc<FockSpace>,
) -> Result<Array2<C64>, OpticsError> {
    let d = space.dim();
    let mut m = Array2::zeros((d, d));
    let mut basis_vec = Array1::zeros(d);
    for col in 0..d {
        basis_vec[col] = C64::new(1.0, 0.0);
        let image = apply_element(elem, space, &basis_vec)?;
        for row in 0..d {
            m[[row, col]] = image[row];
        }
        basis_vec[col] = C64::new(0.0, 0.0);
    }
    Ok(m)
}

/// Matrix of a multiport array on a Fock space (any sector).
pub fn multiport_matrix(
    u: &MultiportUnitary,
    space: &Arc<FockSpace>,
) -> Result<Array2<C64>, OpticsError> {
    element_matrix(&CircuitElement::Multiport(u.clone()), space)
}

/// Reck-style triangular mesh realizing a multiport unitary.
#[derive(Clone, Debug)]
pub struct MeshDecomposition {
    /// Beam splitters in application order (first element acts first).
    pub splitters: Vec<BeamSplitterElement>,
    /// Output phase per mode, applied after all splitters.
    pub output_phases: Vec<f64>,
    modes: Vec<Mode>,
}

impl MeshDecomposition {
    /// Recompose the single-particle unitary.
    pub fn recompose(&self) -> Array2<C64> {
        let n = self.modes.len();
        let mut u = linalg::identity(n);
        for bs in &self.splitters {
            let i = self
                .modes
                .iter()
                .position(|m| *m == bs.mode_pair.0)
                .unwrap();
            let j = self
                .modes
                .iter()
                .position(|m| *m == bs.mode_pair.1)
                .unwrap();
            let g = bs.single_particle_matrix();
            let mut next = u.clone();
            for col in 0..n {
                let (ui, uj) = (u[[i, col]], u[[j, col]]);
                next[[i, col]] = g[[0, 0]] * ui + g[[0, 1]] * uj;
                next[[j, col]] = g[[1, 0]] * ui + g[[1, 1]] * uj;
            }
            u = next;
        }
        for (row, phase) in self.output_phases.iter().enumerate() {
            let f = C64::from_polar(1.0, *phase);
            for col in 0..n {
                u[[row, col]] *= f;
            }
        }
        u
    }

    /// JSON export: splitter list (mode indices, T, R) plus the phase vector.
    pub fn to_json(&self) -> serde_json::Value {
        let splitters: Vec<serde_json::Value> = self
            .splitters
            .iter()
            .map(|bs| {
                let i = self
                    .modes
                    .iter()
                    .position(|m| *m == bs.mode_pair.0)
                    .unwrap();
                let j = self
                    .modes
                    .iter()
                    .position(|m| *m == bs.mode_pair.1)
                    .unwrap();
                serde_json::json!({
                    "modes": [i, j],
                    "T": [bs.transmittance.re, bs.transmittance.im],
                    "R": [bs.reflectance.re, bs.reflectance.im],
                })
            })
            .collect();
        serde_json::json!({
            "splitters": splitters,
            "output_phases": self.output_phases,
        })
    }
}

/// Decompose a multiport unitary into adjacent-pair beam splitters followed
/// by output phases. Uses a triangular elimination: Givens factors zero the
/// lower triangle column by column, giving at most (N+1)N/2 splitters.
pub fn synthesize_mesh(u: &MultiportUnitary) -> Result<MeshDecomposition, OpticsError> {
    let n = u.dim();
    // Eliminate on U†: G_K … G_1 U† = D, so U = D† G_K … G_1 — splitters
    // first (G_1 earliest), diagonal phases last.
    let mut work = linalg::dagger(&u.matrix);
    let mut splitters = Vec::new();
    for col in 0..n.saturating_sub(1) {
        for row in ((col + 1)..n).rev() {
            let a = work[[row - 1, col]];
            let b = work[[row, col]];
            let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
            if b.norm() < 1e-14 * norm.max(1.0) || norm == 0.0 {
                continue;
            }
            // G = [[a*/n, b*/n], [-b/n, a/n]] zeroes work[row, col].
            let t = a.conj() / norm;
            let r = b.conj() / norm;
            let g = ndarray::array![[t, r], [-r.conj(), t.conj()]];
            for c in 0..n {
                let (x, y) = (work[[row - 1, c]], work[[row, c]]);
                work[[row - 1, c]] = g[[0, 0]] * x + g[[0, 1]] * y;
                work[[row, c]] = g[[1, 0]] * x + g[[1, 1]] * y;
            }
            // The same G, read as a beam splitter on the mode pair
            // (row-1, row), is one factor of U.
            splitters.push(BeamSplitterElement {
                mode_pair: (u.modes[row - 1].clone(), u.modes[row].clone()),
                transmittance: t,
                reflectance: r,
            });
        }
    }
    // work is now diagonal D with unimodular entries; U = D† (G_K … G_1).
    let output_phases: Vec<f64> = (0..n).map(|i| -work[[i, i]].arg()).collect();
    Ok(MeshDecomposition {
        splitters,
        output_phases,
        modes: u.modes.clone(),
    })
}

/// Effective single-mode operator of a beam splitter tap whose ancilla is
/// prepared and detected in vacuum: diag(T^n) over occupation number.
pub fn vacuum_projected_splitter(
    t: C64,
    space: &Arc<FockSpace>,
) -> Result<Array2<C64>, OpticsError> {
    if space.modes().len() != 1 {
        return Err(OpticsError::NotSingleMode);
    }
    if t.norm() > 1.0 + 1e-12 {
        return Err(OpticsError::TransmittanceTooLarge(t.norm()));
    }
    let d = space.dim();
    let mut m = Array2::zeros((d, d));
    for (idx, occ) in space.basis().iter().enumerate() {
        m[[idx, idx]] = t.powu(occ[0]);
    }
    Ok(m)
}

/// Polar factors of a complex square matrix `A = unitary · positive`.
#[derive(Clone, Debug)]
pub struct PolarFactors {
    pub unitary: Array2<C64>,
    pub positive: Array2<C64>,
    /// Tr (A†A)^{1/2}, the sum of singular values.
    pub trace_norm: f64,
    /// (Det unitary)^{1/(N+1)}, principal branch.
    pub det_phase: C64,
}

impl PolarFactors {
    /// The scale-free representant `unitary/det_phase · positive/trace_norm`.
    pub fn normalized_representant(&self) -> Array2<C64> {
        let u = self.unitary.mapv(|z| z / self.det_phase);
        let p = self.positive.mapv(|z| z / self.trace_norm);
        u.dot(&p)
    }
}

/// Polar decomposition via SVD. Singular input gets its unitary factor
/// completed deterministically (see [`linalg::svd`]).
pub fn polar_decompose(a: &Array2<C64>) -> Result<PolarFactors, OpticsError> {
    let n = a.nrows();
    if linalg::max_norm(a) == 0.0 {
        return Err(OpticsError::ZeroOperator);
    }
    let f = linalg::svd(a)?;
    let unitary = f.u.dot(&linalg::dagger(&f.v));
    let mut positive = Array2::zeros((n, n));
    for k in 0..n {
        let s = f.singular_values[k];
        if s == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                positive[[i, j]] += C64::new(s, 0.0) * f.v[[i, k]] * f.v[[j, k]].conj();
            }
        }
    }
    let trace_norm: f64 = f.singular_values.iter().sum();
    let det = linalg::determinant(&unitary);
    let det_phase = C64::from_polar(1.0, det.arg() / n as f64);
    Ok(PolarFactors {
        unitary,
        positive,
        trace_norm,
        det_phase,
    })
}
