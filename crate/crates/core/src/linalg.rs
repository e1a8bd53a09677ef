//! Dense complex linear algebra for small matrices.
//!
//! Everything here operates on `ndarray` arrays of [`C64`] and is sized for
//! the dimensions this crate actually meets (a few up to a few thousand).
//! The Hermitian eigensolver is a cyclic Jacobi iteration; the SVD is built
//! on top of it, with a deterministic completion rule for rank-deficient
//! input so downstream factorizations are reproducible.

use ndarray::{Array1, Array2};
pub use num_complex::Complex64 as C64;
use num_complex::ComplexFloat;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (max asymmetry {max_dev:.3e})")]
    NotHermitian { max_dev: f64 },
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("zero matrix has no polar decomposition")]
    ZeroMatrix,
}

/// Conjugate transpose.
pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag(&Array1::from_elem(n, C64::new(1.0, 0.0)))
}

/// Frobenius norm.
pub fn fro_norm(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest entry magnitude.
pub fn max_norm(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Max-norm distance, the workhorse of most tests.
pub fn max_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    assert_eq!(a.dim(), b.dim(), "max_diff on mismatched shapes");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().sum()
}

/// Deviation from unitarity, `max |A†A - I|`.
pub fn unitarity_defect(a: &Array2<C64>) -> f64 {
    max_diff(&dagger(a).dot(a), &identity(a.nrows()))
}

pub fn is_hermitian(a: &Array2<C64>, tol: f64) -> bool {
    hermiticity_defect(a) <= tol
}

pub fn hermiticity_defect(a: &Array2<C64>) -> f64 {
    max_diff(a, &dagger(a))
}

/// Kronecker product, row-major convention: index of (i⊗j) is `i * bcols + j`.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, vectors)` with `H = V diag(λ) V†`, eigenvalues in
/// descending order (stable with respect to the pre-sort column order, so
/// already-diagonal input keeps its basis).
pub fn hermitian_eig(h: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>), LinalgError> {
    let n = check_square(h)?;
    let dev = hermiticity_defect(h);
    let scale = fro_norm(h).max(1.0);
    if dev > 1e-9 * scale {
        return Err(LinalgError::NotHermitian { max_dev: dev });
    }
    // Work on the explicitly Hermitized matrix so tiny input asymmetry
    // cannot leak into complex diagonal entries.
    let mut a = (h + &dagger(h)).mapv(|z| 0.5 * z);
    let mut v = identity(n);
    if n <= 1 {
        let vals = Array1::from_iter(a.diag().iter().map(|z| z.re));
        return Ok((vals, v));
    }

    let tol = 1e-30 * scale * scale; // squared-magnitude threshold per entry
    let max_sweeps = 60;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    s += a[[p, q]].norm_sqr();
                }
            }
            s
        };
        if off <= tol * (n * n) as f64 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.norm_sqr() <= tol {
                    continue;
                }
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                let abs_apq = apq.norm();
                let phase = apq / abs_apq; // e^{i arg(apq)}
                                           // Rotation angle zeroing the (p,q) entry: with t = tan θ,
                                           // t² - 2τ t - 1 = 0, τ = (aqq - app) / (2|apq|); take the
                                           // smaller-magnitude root for stability.
                let tau = (aqq - app) / (2.0 * abs_apq);
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Columns: new_p = c·p + s·conj(phase)·q, new_q = -s·phase·p + c·q.
                let (cs, sp, spc) = (
                    C64::new(c, 0.0),
                    C64::new(s, 0.0) * phase,
                    C64::new(s, 0.0) * phase.conj(),
                );
                for i in 0..n {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = cs * aip + spc * aiq;
                    a[[i, q]] = -sp * aip + cs * aiq;
                }
                for j in 0..n {
                    let apj = a[[p, j]];
                    let aqj = a[[q, j]];
                    a[[p, j]] = cs * apj + sp * aqj;
                    a[[q, j]] = -spc * apj + cs * aqj;
                }
                a[[p, q]] = C64::new(0.0, 0.0);
                a[[q, p]] = C64::new(0.0, 0.0);
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = cs * vip + spc * viq;
                    v[[i, q]] = -sp * vip + cs * viq;
                }
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { sweeps: max_sweeps });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let vals: Vec<f64> = (0..n).map(|i| a[[i, i]].re).collect();
    order.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).unwrap());
    let sorted_vals = Array1::from_iter(order.iter().map(|&i| vals[i]));
    let mut sorted_vecs = Array2::zeros((n, n));
    for (new, &old) in order.iter().enumerate() {
        for i in 0..n {
            sorted_vecs[[i, new]] = v[[i, old]];
        }
    }
    Ok((sorted_vals, sorted_vecs))
}

/// Singular value decomposition `A = U diag(σ) V†` for square complex `A`.
///
/// Singular values come out descending. Kernel directions (σ ≈ 0) of the
/// left factor are completed by Gram–Schmidt over the standard basis and
/// phase-fixed so the largest-magnitude component is real positive, which
/// makes the decomposition of singular matrices deterministic.
pub struct Svd {
    pub u: Array2<C64>,
    pub singular_values: Array1<f64>,
    pub v: Array2<C64>,
}

pub fn svd(a: &Array2<C64>) -> Result<Svd, LinalgError> {
    let n = check_square(a)?;
    let h = dagger(a).dot(a);
    let (evals, v) = hermitian_eig(&h)?;
    let singular: Array1<f64> = evals.mapv(|l| l.max(0.0).sqrt());
    let smax = singular.iter().cloned().fold(0.0, f64::max);
    let cut = 1e-12 * smax.max(1.0);

    let mut u = Array2::<C64>::zeros((n, n));
    let mut filled = Vec::new();
    for k in 0..n {
        if singular[k] > cut {
            let vk = v.column(k);
            let avk = a.dot(&vk.to_owned());
            for i in 0..n {
                u[[i, k]] = avk[i] / singular[k];
            }
            filled.push(k);
        }
    }
    // Complete the kernel columns against the standard basis.
    for k in 0..n {
        if singular[k] > cut {
            continue;
        }
        let mut candidate = None;
        for e in 0..n {
            let mut col = Array1::<C64>::zeros(n);
            col[e] = C64::new(1.0, 0.0);
            for &f in &filled {
                let overlap: C64 = (0..n).map(|i| u[[i, f]].conj() * col[i]).sum();
                for i in 0..n {
                    let ufi = u[[i, f]];
                    col[i] -= overlap * ufi;
                }
            }
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-6 {
                col.mapv_inplace(|z| z / norm);
                candidate = Some(col);
                break;
            }
        }
        let mut col = candidate.expect("orthogonal complement is never empty here");
        // Phase fix: largest-magnitude component real positive.
        let (mut best, mut best_mag) = (0, 0.0);
        for i in 0..n {
            if col[i].norm() > best_mag + 1e-15 {
                best_mag = col[i].norm();
                best = i;
            }
        }
        let phase = col[best] / col[best].norm();
        col.mapv_inplace(|z| z * phase.conj());
        for i in 0..n {
            u[[i, k]] = col[i];
        }
        filled.push(k);
    }
    Ok(Svd {
        u,
        singular_values: singular,
        v,
    })
}

/// Determinant by LU with partial pivoting.
pub fn determinant(a: &Array2<C64>) -> C64 {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "determinant of non-square matrix");
    let mut m = a.clone();
    let mut det = C64::new(1.0, 0.0);
    for col in 0..n {
        let mut pivot = col;
        let mut best = m[[col, col]].norm();
        for r in (col + 1)..n {
            if m[[r, col]].norm() > best {
                best = m[[r, col]].norm();
                pivot = r;
            }
        }
        if best == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if pivot != col {
            for c in 0..n {
                let tmp = m[[col, c]];
                m[[col, c]] = m[[pivot, c]];
                m[[pivot, c]] = tmp;
            }
            det = -det;
        }
        let d = m[[col, col]];
        det *= d;
        for r in (col + 1)..n {
            let f = m[[r, col]] / d;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            for c in col..n {
                let v = m[[col, c]];
                m[[r, c]] -= f * v;
            }
        }
    }
    det
}

/// Square root of a positive semidefinite Hermitian matrix.
pub fn psd_sqrt(a: &Array2<C64>) -> Result<Array2<C64>, LinalgError> {
    let (vals, vecs) = hermitian_eig(a)?;
    let n = vals.len();
    let mut out = Array2::zeros((n, n));
    for k in 0..n {
        let s = vals[k].max(0.0).sqrt();
        if s == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] += C64::new(s, 0.0) * vecs[[i, k]] * vecs[[j, k]].conj();
            }
        }
    }
    Ok(out)
}

/// Sum of absolute eigenvalues of a Hermitian matrix (trace norm).
pub fn hermitian_trace_norm(a: &Array2<C64>) -> Result<f64, LinalgError> {
    let (vals, _) = hermitian_eig(a)?;
    Ok(vals.iter().map(|l| l.abs()).sum())
}

/// Haar-like random unitary: Gram–Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: Rng>(n: usize, rng: &mut R) -> Array2<C64> {
    let mut z = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            z[[i, j]] = C64::new(re, im);
        }
    }
    let mut q = Array2::<C64>::zeros((n, n));
    for col in 0..n {
        let mut v: Array1<C64> = z.column(col).to_owned();
        for prev in 0..col {
            let overlap: C64 = (0..n).map(|i| q[[i, prev]].conj() * v[i]).sum();
            for i in 0..n {
                let qp = q[[i, prev]];
                v[i] -= overlap * qp;
            }
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            q[[i, col]] = v[i] / norm;
        }
    }
    q
}

/// Random density matrix with Hilbert–Schmidt-like distribution, `G G† / Tr`.
pub fn random_density<R: Rng>(n: usize, rng: &mut R) -> Array2<C64> {
    let mut g = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            g[[i, j]] = C64::new(re, im);
        }
    }
    let rho = g.dot(&dagger(&g));
    let tr = trace(&rho).re;
    rho.mapv(|z| z / tr)
}

/// Random normalized complex amplitude vector.
pub fn random_state_vector<R: Rng>(n: usize, rng: &mut R) -> Array1<C64> {
    let mut v = Array1::<C64>::zeros(n);
    for i in 0..n {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        v[i] = C64::new(re, im);
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.mapv(|z| z / norm)
}

fn check_square(a: &Array2<C64>) -> Result<usize, LinalgError> {
    let (r, c) = a.dim();
    if r != c {
        return Err(LinalgError::NotSquare { rows: r, cols: c });
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eig_pauli_x() {
        let h = ndarray::array![[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
        let (vals, vecs) = hermitian_eig(&h).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] + 1.0).abs() < 1e-14);
        assert!(unitarity_defect(&vecs) < 1e-13);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 3, 5, 8] {
            let rho = random_density(n, &mut rng);
            let h = rho.mapv(|z| z * 4.0) - identity(n);
            let (vals, vecs) = hermitian_eig(&h).unwrap();
            let mut rec = Array2::<C64>::zeros((n, n));
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        rec[[i, j]] += C64::new(vals[k], 0.0) * vecs[[i, k]] * vecs[[j, k]].conj();
                    }
                }
            }
            assert!(max_diff(&rec, &h) < 1e-12, "n={n}");
            // descending order
            for k in 1..n {
                assert!(vals[k - 1] >= vals[k] - 1e-14);
            }
            let tr_vals: f64 = vals.sum();
            assert!((tr_vals - trace(&h).re).abs() < 1e-12);
        }
    }

    #[test]
    fn eig_keeps_diagonal_basis() {
        let h = Array2::from_diag(&ndarray::arr1(&[c(3.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]));
        let (vals, vecs) = hermitian_eig(&h).unwrap();
        assert_eq!(vals.to_vec(), vec![3.0, 2.0, 1.0]);
        // permutation of the standard basis, no mixing
        for col in 0..3 {
            let mag: Vec<f64> = (0..3).map(|i| vecs[[i, col]].norm()).collect();
            assert!(mag.iter().filter(|&&m| m > 0.5).count() == 1);
        }
    }

    #[test]
    fn svd_reconstructs_and_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2usize, 3, 6] {
            let u = random_unitary(n, &mut rng);
            let mut a = Array2::<C64>::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    let re: f64 =
                        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                    let im: f64 =
                        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                    a[[i, j]] = c(re, im);
                }
            }
            let a = a.dot(&u);
            let f = svd(&a).unwrap();
            let mut rec = Array2::<C64>::zeros((n, n));
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        rec[[i, j]] +=
                            C64::new(f.singular_values[k], 0.0) * f.u[[i, k]] * f.v[[j, k]].conj();
                    }
                }
            }
            assert!(max_diff(&rec, &a) < 1e-10);
            assert!(unitarity_defect(&f.u) < 1e-10);
            assert!(unitarity_defect(&f.v) < 1e-10);
            for k in 1..n {
                assert!(f.singular_values[k - 1] >= f.singular_values[k] - 1e-12);
            }
        }
    }

    #[test]
    fn svd_of_singular_matrix_completes_kernel() {
        let a = Array2::from_diag(&ndarray::arr1(&[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]));
        let f = svd(&a).unwrap();
        assert!(unitarity_defect(&f.u) < 1e-12);
        // u completes to the identity on the kernel of diag(2,0,0)
        assert!(max_diff(&f.u, &identity(3)) < 1e-12);
        assert!((f.singular_values[0] - 2.0).abs() < 1e-12);
        assert!(f.singular_values[1].abs() < 1e-12);
    }

    #[test]
    fn determinant_matches_eigenvalue_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_unitary(4, &mut rng);
        let d = determinant(&u);
        assert!((d.norm() - 1.0).abs() < 1e-12, "unitary has unimodular det");
        let h = random_density(3, &mut rng);
        let (vals, _) = hermitian_eig(&h).unwrap();
        let prod: f64 = vals.iter().product();
        assert!((determinant(&h).re - prod).abs() < 1e-12);
        assert!(determinant(&h).im.abs() < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = random_density(4, &mut rng);
        let s = psd_sqrt(&rho).unwrap();
        assert!(max_diff(&s.dot(&s), &rho) < 1e-12);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1usize, 2, 5, 7] {
            let u = random_unitary(n, &mut rng);
            assert!(unitarity_defect(&u) < 1e-12);
        }
    }

    #[test]
    fn kron_dimensions_and_values() {
        let a = ndarray::array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(2.0, 0.0)]];
        let b = ndarray::array![[c(0.0, 1.0)]];
        let k = kron(&a, &b);
        assert_eq!(k.dim(), (2, 2));
        assert_eq!(k[[0, 0]], c(0.0, 1.0));
        assert_eq!(k[[1, 1]], c(0.0, 2.0));
    }
}
