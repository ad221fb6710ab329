//! Small dense density-matrix helpers.
//!
//! With the fidelity kernel, every weighted mean fidelity is a
//! Hilbert-Schmidt inner product: `sum_ij w_i v_j |<a_i|b_j>|^2 = Tr[rho_a rho_b]`.
//! The exact training losses are evaluated through these matrices, which
//! costs `O(d)` circuit runs per evaluation instead of one per sample.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Dense complex matrix, used for density matrices and operators.
pub type Matrix = DMatrix<C64>;

/// Eigenvalues with magnitude at or below this are dropped by
/// [`hermitian_factor`].
pub const FACTOR_EPSILON: f64 = 1e-14;

/// `rho += w |v><v|`.
pub fn accumulate_outer(rho: &mut DMatrix<C64>, v: &[C64], w: f64) {
    let d = v.len();
    debug_assert_eq!(rho.nrows(), d);
    for c in 0..d {
        let vc = v[c].conj() * w;
        if vc == C64::new(0.0, 0.0) {
            continue;
        }
        for r in 0..d {
            rho[(r, c)] += v[r] * vc;
        }
    }
}

/// `rho += w Tr_A |psi><psi|` where the last `n_anc` qubits of `psi` are
/// traced out.
pub fn accumulate_reduced(rho: &mut DMatrix<C64>, psi: &[C64], n_anc: usize, w: f64) {
    let da = 1usize << n_anc;
    let d = psi.len() / da;
    debug_assert_eq!(rho.nrows(), d);
    for c in 0..d {
        for r in 0..d {
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..da {
                acc += psi[r * da + a] * psi[c * da + a].conj();
            }
            rho[(r, c)] += acc * w;
        }
    }
}

/// `Re Tr[a b]`, the Hilbert-Schmidt inner product of Hermitian matrices.
pub fn hs_inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let d = a.nrows();
    let mut acc = 0.0;
    for r in 0..d {
        for c in 0..d {
            let x = a[(r, c)];
            let y = b[(c, r)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

/// `Tr[(a - b)^2]` for Hermitian `a`, `b`.
pub fn hs_distance_sqr(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let diff = a - b;
    diff.iter().map(|z| z.norm_sqr()).sum()
}

/// Decomposes a Hermitian matrix as `sum_k lambda_k |v_k><v_k|`, dropping
/// eigenvalues with `|lambda| <= FACTOR_EPSILON`. Weights may be negative.
pub fn hermitian_factor(m: &DMatrix<C64>) -> Result<Vec<(f64, Vec<C64>)>> {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::try_new(sym, 1e-15, 10_000)
        .ok_or_else(|| Error::Eigensolver("Hermitian eigensolver did not converge".into()))?;
    Ok(eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, l)| l.abs() > FACTOR_EPSILON)
        .map(|(k, &l)| (l, eig.eigenvectors.column(k).iter().copied().collect()))
        .collect())
}

/// Applies `m (x) I_A` to a vector over `log2(m.nrows()) + n_anc` qubits.
pub fn apply_system_operator(m: &DMatrix<C64>, n_anc: usize, psi: &[C64]) -> Vec<C64> {
    let da = 1usize << n_anc;
    let d = m.nrows();
    debug_assert_eq!(psi.len(), d * da);
    let mut out = vec![C64::new(0.0, 0.0); psi.len()];
    for r in 0..d {
        for c in 0..d {
            let x = m[(r, c)];
            if x == C64::new(0.0, 0.0) {
                continue;
            }
            for a in 0..da {
                out[r * da + a] += x * psi[c * da + a];
            }
        }
    }
    out
}

/// Maximally mixed state `I/d`.
pub fn maximally_mixed(d: usize) -> DMatrix<C64> {
    DMatrix::from_diagonal_element(d, d, C64::new(1.0 / d as f64, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn factor_reconstructs() {
        let mut m = DMatrix::zeros(2, 2);
        accumulate_outer(&mut m, &[c(0.6, 0.0), c(0.0, 0.8)], 0.7);
        accumulate_outer(&mut m, &[c(1.0, 0.0), c(0.0, 0.0)], -0.2);
        let f = hermitian_factor(&m).unwrap();
        let mut back = DMatrix::zeros(2, 2);
        for (l, v) in &f {
            accumulate_outer(&mut back, v, *l);
        }
        assert_abs_diff_eq!(hs_distance_sqr(&m, &back), 0.0, epsilon = 1e-24);
    }

    #[test]
    fn partial_trace_of_product_state() {
        // (a|0> + b|1>) (x) |1> on two qubits, ancilla last
        let psi = [c(0.0, 0.0), c(0.6, 0.0), c(0.0, 0.0), c(0.0, 0.8)];
        let mut rho = DMatrix::zeros(2, 2);
        accumulate_reduced(&mut rho, &psi, 1, 1.0);
        assert_abs_diff_eq!(rho[(0, 0)].re, 0.36, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[(0, 1)].im, -0.48, epsilon = 1e-15);
        assert_abs_diff_eq!(hs_inner(&rho, &rho), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn system_operator_acts_on_data_only() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = c(1.0, 0.0);
        m[(1, 0)] = c(1.0, 0.0);
        let psi = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let out = apply_system_operator(&m, 1, &psi);
        assert_eq!(out[2], c(1.0, 0.0));
        assert_abs_diff_eq!(hs_inner(&maximally_mixed(4), &maximally_mixed(4)), 0.25, epsilon = 1e-15);
    }
}
