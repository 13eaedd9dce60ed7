//! Dense complex linear algebra shared by the channel, design and feedback
//! modules.
//!
//! Everything here works on [`CMatrix`] (a dynamically sized nalgebra matrix
//! of `Complex64`). Eigenvalues and singular values are always returned in
//! descending order. Eigenbases are only unique up to a rotation inside each
//! eigenspace, so callers compare projectors, distances or objective values,
//! never raw basis entries.

use faer::{c64, Mat, Side};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Maximum Frobenius deviation of `B^H B` from the identity for an orthonormal basis.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// A matrix whose columns are orthonormal (`n x d`, `d <= n`).
#[derive(Clone, Debug, PartialEq)]
pub struct OrthonormalBasis(CMatrix);

impl OrthonormalBasis {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        ensure_finite(&matrix, "orthonormal basis")?;
        if matrix.ncols() > matrix.nrows() {
            return Err(Error::dim(format!(
                "basis has {} columns in dimension {}",
                matrix.ncols(),
                matrix.nrows()
            )));
        }
        let deviation = orthonormality_error(&matrix);
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal(deviation));
        }
        Ok(OrthonormalBasis(matrix))
    }

    /// Canonical basis vectors `e_i` for the given indices.
    pub fn coordinate(n: usize, indices: &[usize]) -> Result<Self> {
        let mut m = CMatrix::zeros(n, indices.len());
        for (col, &i) in indices.iter().enumerate() {
            if i >= n {
                return Err(Error::dim(format!("coordinate index {i} out of range {n}")));
            }
            m[(i, col)] = Complex64::new(1.0, 0.0);
        }
        OrthonormalBasis::new(m)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Ambient dimension `n`.
    pub fn ambient_dim(&self) -> usize {
        self.0.nrows()
    }

    /// Subspace dimension `d`.
    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    /// Orthogonal projector `B B^H`.
    pub fn projector(&self) -> CMatrix {
        &self.0 * self.0.adjoint()
    }

    /// The first `d` columns.
    pub fn leading(&self, d: usize) -> Result<Self> {
        if d > self.dim() {
            return Err(Error::dim(format!(
                "cannot take {d} of {} columns",
                self.dim()
            )));
        }
        Ok(OrthonormalBasis(self.0.columns(0, d).into_owned()))
    }
}

pub fn ensure_finite(m: &CMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `||B^H B - I||_F`.
pub fn orthonormality_error(b: &CMatrix) -> f64 {
    let gram = b.adjoint() * b;
    (gram - CMatrix::identity(b.ncols(), b.ncols())).norm()
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Descending.
    pub values: Vec<f64>,
    pub vectors: OrthonormalBasis,
}

/// Eigendecomposition of a Hermitian matrix. The input is symmetrized as
/// `(M + M^H) / 2` before factoring, so slightly non-Hermitian input is accepted.
pub fn hermitian_eig(m: &CMatrix) -> Result<HermitianEigen> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "eigendecomposition of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite(m, "eigendecomposition input")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(HermitianEigen {
            values: Vec::new(),
            vectors: OrthonormalBasis(CMatrix::zeros(0, 0)),
        });
    }
    let h = to_faer(&hermitian_part(m));
    let eig = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::domain(format!("eigendecomposition failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    // faer returns ascending order
    let values = (0..n).rev().map(|i| s[i].re).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| from_c64(u[(r, n - 1 - c)]));
    Ok(HermitianEigen {
        values,
        vectors: OrthonormalBasis(vectors),
    })
}

/// Economy SVD `M = U diag(sigma) V^H`, `sigma` descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: OrthonormalBasis,
    pub sigma: Vec<f64>,
    pub v: OrthonormalBasis,
}

impl Svd {
    pub fn sigma_max(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma.last().copied().unwrap_or(0.0)
    }
}

pub fn svd(m: &CMatrix) -> Svd {
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return Svd {
            u: OrthonormalBasis(CMatrix::zeros(m.nrows(), 0)),
            sigma: Vec::new(),
            v: OrthonormalBasis(CMatrix::zeros(m.ncols(), 0)),
        };
    }
    let dec = to_faer(m)
        .thin_svd()
        .expect("SVD of a finite matrix converges");
    let s = dec.S().column_vector();
    let (u, v) = (dec.U(), dec.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].re.total_cmp(&s[a].re));
    let sigma = order.iter().map(|&i| s[i].re).collect();
    let u = CMatrix::from_fn(m.nrows(), k, |r, c| from_c64(u[(r, order[c])]));
    let v = CMatrix::from_fn(m.ncols(), k, |r, c| from_c64(v[(r, order[c])]));
    Svd {
        u: OrthonormalBasis(u),
        sigma,
        v: OrthonormalBasis(v),
    }
}

fn to_faer(m: &CMatrix) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |r, c| {
        let z = m[(r, c)];
        c64::new(z.re, z.im)
    })
}

fn from_c64(z: c64) -> Complex64 {
    Complex64::new(z.re, z.im)
}

/// Eigenvectors of the `d` largest eigenvalues of a Hermitian PSD matrix.
pub fn principal_eigenspace(m: &CMatrix, d: usize) -> Result<OrthonormalBasis> {
    if d > m.nrows() {
        return Err(Error::dim(format!(
            "principal subspace of dimension {d} in a {}-dimensional space",
            m.nrows()
        )));
    }
    hermitian_eig(m)?.vectors.leading(d)
}

/// Projection 2-norm distance `||A A^H - B B^H||_2`, the sine of the largest
/// principal angle between two equal-dimensional subspaces.
pub fn subspace_distance_p2(a: &OrthonormalBasis, b: &OrthonormalBasis) -> Result<f64> {
    if a.ambient_dim() != b.ambient_dim() || a.dim() != b.dim() {
        return Err(Error::dim(format!(
            "subspace distance between {}x{} and {}x{} bases",
            a.ambient_dim(),
            a.dim(),
            b.ambient_dim(),
            b.dim()
        )));
    }
    if a.dim() == 0 {
        return Ok(0.0);
    }
    // For equal dimensions the projector difference has spectral norm
    // ||(I - A A^H) B||_2; this form stays accurate near zero distance.
    let residual = b.matrix() - a.matrix() * (a.matrix().adjoint() * b.matrix());
    Ok(svd(&residual).sigma_max().clamp(0.0, 1.0))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn lambda_min(m: &CMatrix) -> Result<f64> {
    Ok(hermitian_eig(m)?.values.last().copied().unwrap_or(0.0))
}

/// Real diagonal matrix as a complex matrix.
pub fn real_diagonal(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |r, c| {
        if r == c {
            Complex64::new(values[r], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// `trace(M)` as a real number (imaginary part dropped).
pub fn real_trace(m: &CMatrix) -> f64 {
    m.trace().re
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn rel_err(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn identity_eigenvalues() {
        let eig = hermitian_eig(&CMatrix::identity(3, 3)).unwrap();
        for v in eig.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_eigenvalues_sorted_descending() {
        let m = real_diagonal(&[1.0, 3.0]);
        let eig = hermitian_eig(&m).unwrap();
        assert!((eig.values[0] - 3.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
        // First eigenvector is +-e2, second +-e1.
        let v = eig.vectors.matrix();
        assert!((v[(1, 0)].norm() - 1.0).abs() < 1e-12);
        assert!((v[(0, 1)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eig_rejects_non_square() {
        assert!(matches!(
            hermitian_eig(&CMatrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn random_hermitian_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_hermitian(6, &mut rng);
            let eig = hermitian_eig(&m).unwrap();
            let v = eig.vectors.matrix();
            let back = v * real_diagonal(&eig.values) * v.adjoint();
            assert!(rel_err(&back, &m) < 1e-8);
            assert!(orthonormality_error(v) < ORTHONORMAL_TOL);
            assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn hermitian_eigenvalues_are_real() {
        // nalgebra returns a real vector; check the Rayleigh quotients agree.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_hermitian(8, &mut rng);
        let eig = hermitian_eig(&m).unwrap();
        for (i, &lam) in eig.values.iter().enumerate() {
            let v = eig.vectors.matrix().column(i).into_owned();
            let q = (v.adjoint() * &m * &v)[(0, 0)];
            assert!(q.im.abs() < 1e-10);
            assert!((q.re - lam).abs() < 1e-10);
        }
    }

    #[test]
    fn svd_identity_and_rank_one() {
        let s = svd(&CMatrix::identity(2, 2));
        assert_eq!(s.sigma.len(), 2);
        assert!(s.sigma.iter().all(|v| (v - 1.0).abs() < 1e-14));

        // u = (2, 0)·phase, v = unit vector, ||u|| = 2, ||v|| = 1
        let u = CMatrix::from_column_slice(2, 1, &[c(0.0), Complex64::new(0.0, 2.0)]);
        let v = CMatrix::from_column_slice(
            2,
            1,
            &[
                c(std::f64::consts::FRAC_1_SQRT_2),
                Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2),
            ],
        );
        let s = svd(&(&u * v.adjoint()));
        assert!((s.sigma[0] - 2.0).abs() < 1e-12);
        assert!(s.sigma[1].abs() < 1e-12);
    }

    #[test]
    fn svd_round_trip_tall() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = complex_gaussian(8, 3, &mut rng);
        let s = svd(&m);
        assert_eq!(s.u.matrix().shape(), (8, 3));
        assert_eq!(s.v.matrix().shape(), (3, 3));
        let back = s.u.matrix() * real_diagonal(&s.sigma) * s.v.matrix().adjoint();
        assert!(rel_err(&back, &m) < 1e-8);
        assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_rank_deficient_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = complex_gaussian(3, 1, &mut rng);
        let b = complex_gaussian(1, 2, &mut rng);
        let m = &a * &b;
        let s = svd(&m);
        let back = s.u.matrix() * real_diagonal(&s.sigma) * s.v.matrix().adjoint();
        assert!(rel_err(&back, &m) < 1e-8);
        assert!((s.sigma[0] - m.norm()).abs() < 1e-12);
    }

    #[test]
    fn svd_round_trip_wide() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let m = complex_gaussian(3, 7, &mut rng);
        let s = svd(&m);
        let back = s.u.matrix() * real_diagonal(&s.sigma) * s.v.matrix().adjoint();
        assert!(rel_err(&back, &m) < 1e-8);
    }

    #[test]
    fn principal_eigenspace_of_diagonal() {
        let m = real_diagonal(&[5.0, 2.0, 1.0]);
        let b = principal_eigenspace(&m, 2).unwrap();
        let expected = OrthonormalBasis::coordinate(3, &[0, 1]).unwrap();
        assert!((b.projector() - expected.projector()).norm() < 1e-12);
    }

    #[test]
    fn principal_eigenspace_degenerate_is_orthonormal() {
        let b = principal_eigenspace(&CMatrix::identity(3, 3), 2).unwrap();
        assert_eq!(b.dim(), 2);
        assert!(orthonormality_error(b.matrix()) < ORTHONORMAL_TOL);
    }

    #[test]
    fn principal_eigenspace_too_large() {
        assert!(matches!(
            principal_eigenspace(&CMatrix::identity(3, 3), 4),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn principal_projector_matches_rank_one_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let m = random_psd(10, &mut rng);
        let b = principal_eigenspace(&m, 3).unwrap();
        assert!(orthonormality_error(b.matrix()) < ORTHONORMAL_TOL);
        // Oracle: projector from the top-3 eigenvectors, one rank-one term at a time.
        let eig = hermitian_eig(&m).unwrap();
        let mut oracle = CMatrix::zeros(10, 10);
        for i in 0..3 {
            let v = eig.vectors.matrix().column(i).into_owned();
            oracle += &v * v.adjoint();
        }
        assert!((b.projector() - oracle).norm() < 1e-8);
    }

    #[test]
    fn distance_examples() {
        let e1 = OrthonormalBasis::coordinate(2, &[0]).unwrap();
        let e2 = OrthonormalBasis::coordinate(2, &[1]).unwrap();
        assert!(subspace_distance_p2(&e1, &e1).unwrap() < 1e-15);
        assert!((subspace_distance_p2(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let diag = OrthonormalBasis::new(CMatrix::from_column_slice(2, 1, &[c(h), c(h)])).unwrap();
        let d = subspace_distance_p2(&e1, &diag).unwrap();
        assert!((d - h).abs() < 1e-10);
    }

    #[test]
    fn distance_rejects_shape_mismatch() {
        let a = OrthonormalBasis::coordinate(3, &[0]).unwrap();
        let b = OrthonormalBasis::coordinate(3, &[0, 1]).unwrap();
        assert!(matches!(
            subspace_distance_p2(&a, &b),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn distance_equals_projector_spectral_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..20 {
            let a = random_basis(7, 3, &mut rng);
            let b = random_basis(7, 3, &mut rng);
            let diff = a.projector() - b.projector();
            let eig = hermitian_eig(&diff).unwrap();
            let direct = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let d = subspace_distance_p2(&a, &b).unwrap();
            assert!((d - direct).abs() < 1e-10, "{d} vs {direct}");
        }
    }

    #[test]
    fn not_orthonormal_rejected() {
        let m = real_diagonal(&[1.0, 2.0]);
        assert!(matches!(
            OrthonormalBasis::new(m),
            Err(Error::NotOrthonormal(_))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(hermitian_eig(&m), Err(Error::NonFinite(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            // lambda_min(C^H U U^H C) = 1 - d_P2(C, U)^2
            #[test]
            fn min_eigenvalue_distance_identity(seed in any::<u64>(), n in 3usize..12, d in 1usize..3) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let d = d.min(n);
                let cb = random_basis(n, d, &mut rng);
                let ub = random_basis(n, d, &mut rng);
                let m = cb.matrix().adjoint() * ub.projector() * cb.matrix();
                let lhs = lambda_min(&m).unwrap();
                let dist = subspace_distance_p2(&cb, &ub).unwrap();
                prop_assert!((lhs - (1.0 - dist * dist)).abs() < 1e-8);
            }

            #[test]
            fn principal_eigenspace_orthonormal(seed in any::<u64>(), n in 2usize..16) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let m = random_psd(n, &mut rng);
                let b = principal_eigenspace(&m, n / 2).unwrap();
                prop_assert!(orthonormality_error(b.matrix()) < ORTHONORMAL_TOL);
            }
        }
    }
}
