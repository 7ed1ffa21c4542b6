//! Dense numerical kernels for small matrices: symmetric eigendecomposition,
//! thin SVD, and two Sylvester solvers.
//!
//! `solve_sylvester_kron` materializes the full Kronecker system and is kept
//! as a correctness oracle. `solve_sylvester_structured` exploits that the
//! temporal coupling term is `c * (L ⊗ I_d)` with a fixed symmetric `L`, so
//! one eigendecomposition of `L` turns the equation into independent shifted
//! SPD solves.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("singular Sylvester system")]
    SingularSystem,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("negative coupling coefficient {0}")]
    NegativeCoefficient(f64),
}

/// Spectral decomposition of a symmetric matrix.
///
/// Eigenvalues are ascending; each eigenvector is oriented so that its
/// largest-magnitude component is nonnegative, which makes the decomposition
/// reproducible across runs.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

/// Thin SVD with singular values in descending order and the same
/// deterministic sign convention as [`SymEig`].
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    /// Reconstructs `U * diag(D) * V'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.u * DMatrix::from_diagonal(&self.singular_values);
        scaled * self.v.transpose()
    }
}

fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Flips column `j` of `m` (and `paired`, when given) so that the
/// largest-magnitude entry of the column is nonnegative.
fn orient_column(m: &mut DMatrix<f64>, paired: Option<&mut DMatrix<f64>>, j: usize) {
    let col = m.column(j);
    let mut best = 0usize;
    let mut best_abs = -1.0f64;
    for (i, v) in col.iter().enumerate() {
        if v.abs() > best_abs {
            best_abs = v.abs();
            best = i;
        }
    }
    if m[(best, j)] < 0.0 {
        for i in 0..m.nrows() {
            m[(i, j)] = -m[(i, j)];
        }
        if let Some(p) = paired {
            for i in 0..p.nrows() {
                p[(i, j)] = -p[(i, j)];
            }
        }
    }
}

/// Full spectral decomposition of a symmetric matrix, eigenvalues ascending.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<SymEig, NumericsError> {
    if a.nrows() != a.ncols() {
        return Err(NumericsError::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !all_finite(a) {
        return Err(NumericsError::NonFinite);
    }
    let scale = a.amax();
    let asym = (a - a.transpose()).amax();
    if scale > 0.0 && asym / scale > 1e-10 {
        return Err(NumericsError::NotSymmetric(asym / scale));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let k = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

    let mut eigenvalues = DVector::zeros(k);
    let mut eigenvectors = DMatrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = eig.eigenvalues[src];
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    for j in 0..k {
        orient_column(&mut eigenvectors, None, j);
    }
    Ok(SymEig { eigenvalues, eigenvectors })
}

/// Thin SVD of a rectangular matrix.
pub fn svd(m: &DMatrix<f64>) -> Result<Svd, NumericsError> {
    if !all_finite(m) {
        return Err(NumericsError::NonFinite);
    }
    let dec = m.clone().svd(true, true);
    let u0 = dec.u.expect("svd requested u");
    let vt = dec.v_t.expect("svd requested v_t");
    let s0 = dec.singular_values;
    let k = s0.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s0[j].partial_cmp(&s0[i]).unwrap());

    let mut u = DMatrix::zeros(u0.nrows(), k);
    let mut v = DMatrix::zeros(vt.ncols(), k);
    let mut singular_values = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        singular_values[dst] = s0[src];
        u.set_column(dst, &u0.column(src));
        v.set_column(dst, &vt.row(src).transpose());
    }
    for j in 0..k {
        let mut vv = v;
        orient_column(&mut u, Some(&mut vv), j);
        v = vv;
    }
    Ok(Svd { u, singular_values, v })
}

/// Solves `A*X + X*B = C` through the dense Kronecker system
/// `(I ⊗ A + B' ⊗ I) vec(X) = vec(C)`.
///
/// Cubic in `nrows(A)*ncols(B)`; intended as an oracle for the structured
/// solver, not as a production path.
pub fn solve_sylvester_kron(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>, NumericsError> {
    let r = a.nrows();
    let q = b.nrows();
    if a.ncols() != r || b.ncols() != q {
        return Err(NumericsError::DimensionMismatch(
            "A and B must be square".to_string(),
        ));
    }
    if c.nrows() != r || c.ncols() != q {
        return Err(NumericsError::DimensionMismatch(format!(
            "C must be {}x{}, got {}x{}",
            r,
            q,
            c.nrows(),
            c.ncols()
        )));
    }
    if !all_finite(a) || !all_finite(b) || !all_finite(c) {
        return Err(NumericsError::NonFinite);
    }
    let system = DMatrix::identity(q, q).kronecker(a) + b.transpose().kronecker(&DMatrix::identity(r, r));
    let lu = system.full_piv_lu();
    if !lu.is_invertible() {
        return Err(NumericsError::SingularSystem);
    }
    let vec_c = DVector::from_column_slice(c.as_slice());
    let x = lu.solve(&vec_c).ok_or(NumericsError::SingularSystem)?;
    Ok(DMatrix::from_column_slice(r, q, x.as_slice()))
}

/// Solves `A*X + X*(c*(L ⊗ I_d)) = C` for SPD `A` and symmetric PSD `L`.
///
/// Eigendecomposes `L` once and reduces the equation to one shifted SPD
/// solve per eigenvalue. See [`solve_sylvester_structured_with`] for reusing
/// a cached decomposition of `L`.
pub fn solve_sylvester_structured(
    a: &DMatrix<f64>,
    l: &DMatrix<f64>,
    c: f64,
    d: usize,
    rhs: &DMatrix<f64>,
) -> Result<DMatrix<f64>, NumericsError> {
    let l_eig = sym_eig(l)?;
    solve_sylvester_structured_with(a, &l_eig, c, d, rhs)
}

/// Structured Sylvester solve with a precomputed eigendecomposition of `L`.
pub fn solve_sylvester_structured_with(
    a: &DMatrix<f64>,
    l_eig: &SymEig,
    c: f64,
    d: usize,
    rhs: &DMatrix<f64>,
) -> Result<DMatrix<f64>, NumericsError> {
    let r = a.nrows();
    let t = l_eig.eigenvalues.len();
    if a.ncols() != r {
        return Err(NumericsError::DimensionMismatch("A must be square".to_string()));
    }
    if c < 0.0 {
        return Err(NumericsError::NegativeCoefficient(c));
    }
    if d == 0 || rhs.nrows() != r || rhs.ncols() != t * d {
        return Err(NumericsError::DimensionMismatch(format!(
            "RHS must be {}x{}, got {}x{}",
            r,
            t * d,
            rhs.nrows(),
            rhs.ncols()
        )));
    }
    if !all_finite(a) || !all_finite(rhs) {
        return Err(NumericsError::NonFinite);
    }

    let v = &l_eig.eigenvectors;
    // C~ = C * (V ⊗ I_d), block k accumulates V[t,k] * C_t.
    let rhs_hat = mix_blocks(rhs, v, d, false);

    let mut y = DMatrix::zeros(r, t * d);
    for k in 0..t {
        let shift = c * l_eig.eigenvalues[k];
        let shifted = a + DMatrix::from_diagonal_element(r, r, shift);
        let chol = Cholesky::new(shifted).ok_or(NumericsError::NotSpd)?;
        let block = rhs_hat.view((0, k * d), (r, d)).into_owned();
        let sol = chol.solve(&block);
        y.view_mut((0, k * d), (r, d)).copy_from(&sol);
    }

    // X = Y * (V' ⊗ I_d), block t accumulates V[t,k] * Y_k.
    Ok(mix_blocks(&y, v, d, true))
}

/// Applies the block mixing `out_k = sum_t V[t,k] * in_t` (or its transpose
/// `out_t = sum_k V[t,k] * in_k` when `back` is set) over column blocks of
/// width `d`.
fn mix_blocks(input: &DMatrix<f64>, v: &DMatrix<f64>, d: usize, back: bool) -> DMatrix<f64> {
    let r = input.nrows();
    let t = v.nrows();
    let mut out = DMatrix::zeros(r, t * d);
    for dst in 0..t {
        for src in 0..t {
            let w = if back { v[(dst, src)] } else { v[(src, dst)] };
            if w == 0.0 {
                continue;
            }
            for col in 0..d {
                for row in 0..r {
                    out[(row, dst * d + col)] += w * input[(row, src * d + col)];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::second_difference_gram;
    use crate::rng::{chacha, gaussian_matrix};
    use approx::assert_relative_eq;

    fn random_spd(rng: &mut impl rand::Rng, k: usize, ridge: f64) -> DMatrix<f64> {
        let m = gaussian_matrix(rng, k, k, 1.0);
        m.transpose() * m + DMatrix::from_diagonal_element(k, k, ridge)
    }

    #[test]
    fn sym_eig_identity() {
        let eig = sym_eig(&DMatrix::identity(3, 3)).unwrap();
        for i in 0..3 {
            assert_relative_eq!(eig.eigenvalues[i], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sym_eig_diagonal_orders_ascending() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -1.0]));
        let eig = sym_eig(&a).unwrap();
        assert_relative_eq!(eig.eigenvalues[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(eig.eigenvalues[1], 2.0, epsilon = 1e-12);
        // Axis-aligned eigenvectors with the nonnegative orientation.
        assert_relative_eq!(eig.eigenvectors[(1, 0)].abs(), 1.0, epsilon = 1e-12);
        assert!(eig.eigenvectors[(1, 0)] > 0.0);
        assert_relative_eq!(eig.eigenvectors[(0, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sym_eig_reconstructs_random_matrices() {
        for seed in 0..100u64 {
            let mut rng = chacha(seed);
            let g = gaussian_matrix(&mut rng, 6, 6, 1.0);
            let a = (&g + g.transpose()) * 0.5;
            let eig = sym_eig(&a).unwrap();
            let recon =
                &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues) * eig.eigenvectors.transpose();
            let resid = (&recon - &a).norm() / a.norm().max(1e-300);
            assert!(resid <= 1e-8, "seed {seed}: residual {resid}");
            let ortho = (eig.eigenvectors.transpose() * &eig.eigenvectors - DMatrix::identity(6, 6)).amax();
            assert!(ortho <= 1e-10, "seed {seed}: orthogonality {ortho}");
        }
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eig(&a), Err(NumericsError::NotSymmetric(_))));
    }

    #[test]
    fn svd_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let s = svd(&m).unwrap();
        assert_relative_eq!(s.singular_values[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(s.singular_values[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn svd_zero_matrix() {
        let s = svd(&DMatrix::zeros(3, 2)).unwrap();
        assert!(s.singular_values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        for seed in 0..100u64 {
            let mut rng = chacha(1000 + seed);
            let m = gaussian_matrix(&mut rng, 8, 5, 1.0);
            let s = svd(&m).unwrap();
            let resid = (s.reconstruct() - &m).norm() / m.norm();
            assert!(resid <= 1e-8, "seed {seed}: residual {resid}");
            let k = s.singular_values.len();
            assert!((s.u.transpose() * &s.u - DMatrix::identity(k, k)).amax() <= 1e-10);
            assert!((s.v.transpose() * &s.v - DMatrix::identity(k, k)).amax() <= 1e-10);
            for i in 1..k {
                assert!(s.singular_values[i] <= s.singular_values[i - 1]);
            }
        }
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = f64::NAN;
        assert!(matches!(svd(&m), Err(NumericsError::NonFinite)));
    }

    #[test]
    fn kron_identity_cases() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // A = I, B = 0 -> X = C.
        let x = solve_sylvester_kron(&DMatrix::identity(2, 2), &DMatrix::zeros(3, 3), &c).unwrap();
        assert_relative_eq!((x - &c).amax(), 0.0, epsilon = 1e-12);
        // A = 2I, B = I -> X = C / 3.
        let a = DMatrix::identity(2, 2) * 2.0;
        let x = solve_sylvester_kron(&a, &DMatrix::identity(3, 3), &c).unwrap();
        assert_relative_eq!((x - &c / 3.0).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kron_residual_on_random_instances() {
        let mut rng = chacha(42);
        for _ in 0..20 {
            let a = random_spd(&mut rng, 3, 0.3);
            let b_half = gaussian_matrix(&mut rng, 4, 4, 1.0);
            let b = b_half.transpose() * b_half; // PSD
            let c = gaussian_matrix(&mut rng, 3, 4, 1.0);
            let x = solve_sylvester_kron(&a, &b, &c).unwrap();
            let resid = (&a * &x + &x * &b - &c).norm() / c.norm();
            assert!(resid <= 1e-8, "residual {resid}");
        }
    }

    #[test]
    fn kron_reports_singular_system() {
        // A = 0, B = 0 gives a singular system for any nonzero C.
        let c = DMatrix::from_element(2, 2, 1.0);
        let out = solve_sylvester_kron(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2), &c);
        assert!(matches!(out, Err(NumericsError::SingularSystem)));
    }

    #[test]
    fn structured_ridge_case() {
        // c = 0 decouples into X = A^{-1} C.
        let mut rng = chacha(3);
        let a = random_spd(&mut rng, 3, 0.5);
        let rhs = gaussian_matrix(&mut rng, 3, 8, 1.0);
        let l = DMatrix::zeros(2, 2);
        let x = solve_sylvester_structured(&a, &l, 0.0, 4, &rhs).unwrap();
        let resid = (&a * &x - &rhs).norm() / rhs.norm();
        assert!(resid <= 1e-10);
    }

    #[test]
    fn structured_scalar_case() {
        // A = I, L = I (T = d = 1), c = 1 -> X = C / 2.
        let a = DMatrix::identity(1, 1);
        let l = DMatrix::identity(1, 1);
        let rhs = DMatrix::from_element(1, 1, 6.0);
        let x = solve_sylvester_structured(&a, &l, 1.0, 1, &rhs).unwrap();
        assert_relative_eq!(x[(0, 0)], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn structured_matches_kron_oracle() {
        let mut rng = chacha(7);
        for trial in 0..50 {
            let r = 1 + (trial % 4);
            let t = 3 + (trial % 3);
            let d = 1 + (trial % 4);
            let a = random_spd(&mut rng, r, 0.2);
            let l = second_difference_gram(t).unwrap();
            let c = 0.25 * (1 + trial % 5) as f64;
            let rhs = gaussian_matrix(&mut rng, r, t * d, 1.0);

            let b = l.matrix().kronecker(&DMatrix::identity(d, d)) * c;
            let x_kron = solve_sylvester_kron(&a, &b, &rhs).unwrap();
            let x_fast = solve_sylvester_structured(&a, l.matrix(), c, d, &rhs).unwrap();
            let rel = (&x_fast - &x_kron).norm() / x_kron.norm().max(1e-300);
            assert!(rel <= 1e-8, "trial {trial}: rel {rel}");
        }
    }

    #[test]
    fn structured_rejects_non_spd() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        let l = DMatrix::zeros(1, 1);
        let rhs = DMatrix::zeros(2, 3);
        assert!(matches!(
            solve_sylvester_structured(&a, &l, 0.0, 3, &rhs),
            Err(NumericsError::NotSpd)
        ));
    }
}
