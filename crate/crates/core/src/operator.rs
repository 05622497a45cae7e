//! Dense complex linear algebra at small fixed dimension: density operators,
//! Hermitian functional calculus and the fidelity between quantum states.
//!
//! Everything here is a pure function of its inputs; all types are immutable
//! after construction and safe to share across threads. Tolerances measure
//! matrices by their largest absolute entry.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

/// Dense square complex matrix. All operators handled by this crate are
/// small (dim <= ~16), so dense storage is used throughout.
pub type CMatrix = DMatrix<Complex64>;

/// Relative Hermitian tolerance for validated states.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues below `-PSD_TOL` violate positivity; negatives above it are
/// rounding noise and are clamped to zero.
pub const PSD_TOL: f64 = 1e-10;
/// Traces at or below this floor signal a numerically impossible outcome.
pub const TRACE_FLOOR: f64 = 1e-14;

/// Max absolute entry; the matrix norm used by every tolerance in this crate.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Max entry-wise deviation from the adjoint, `max |A - A^H|`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Hermitian part `(A + A^H) / 2`.
pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).map(|c| c * 0.5)
}

/// Identity operator of the given dimension.
pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

/// Real part of the trace.
pub fn trace_re(m: &CMatrix) -> f64 {
    m.trace().re
}

/// Builds a `dim x dim` matrix from row-major interleaved (re, im) pairs.
pub fn from_interleaved(dim: usize, data: &[f64]) -> Result<CMatrix> {
    if data.len() != 2 * dim * dim {
        return Err(Error::InvalidParameter(format!(
            "expected {} interleaved values for a {dim}x{dim} matrix, got {}",
            2 * dim * dim,
            data.len()
        )));
    }
    Ok(CMatrix::from_fn(dim, dim, |i, j| {
        let k = 2 * (i * dim + j);
        Complex64::new(data[k], data[k + 1])
    }))
}

/// One of the standard single-qubit operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// The 2x2 identity or Pauli matrix.
pub fn pauli(which: Pauli) -> CMatrix {
    let o = Complex64::new(0.0, 0.0);
    let l = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let entries = match which {
        Pauli::I => [l, o, o, l],
        Pauli::X => [o, l, l, o],
        Pauli::Y => [o, -i, i, o],
        Pauli::Z => [l, o, o, -l],
    };
    CMatrix::from_row_slice(2, 2, &entries)
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Hermitian square root by eigendecomposition of the Hermitian part.
///
/// Eigenvalues in `[-1e-8, 0)` are clamped to zero; anything below that is a
/// genuine positivity violation and reported as [`Error::NotPsd`].
pub fn hermitian_sqrt(a: &CMatrix) -> Result<CMatrix> {
    let scale = max_abs(a);
    let deviation = hermitian_deviation(a);
    let tolerance = 1e-8 * scale.max(f64::MIN_POSITIVE);
    if deviation > tolerance {
        return Err(Error::NotHermitian {
            deviation,
            tolerance,
        });
    }
    let eig = symmetrize(a).symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-8 {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    let sqrt_vals = eig
        .eigenvalues
        .map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0));
    let root =
        &eig.eigenvectors * CMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.adjoint();
    Ok(symmetrize(&root))
}

/// A density operator: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    /// Validates Hermiticity, positivity and unit trace, clamping eigenvalue
    /// noise in `[-PSD_TOL, 0)` to zero.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "density operator must be square with dim >= 1".into(),
            ));
        }
        let scale = max_abs(&matrix);
        let deviation = hermitian_deviation(&matrix);
        let tolerance = HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE);
        if deviation > tolerance {
            return Err(Error::NotHermitian {
                deviation,
                tolerance,
            });
        }
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > HERMITIAN_TOL {
            return Err(Error::InvalidTrace {
                trace,
                expected: 1.0,
            });
        }
        let eig = symmetrize(&matrix).symmetric_eigen();
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::NotPsd {
                min_eigenvalue: min,
            });
        }
        let matrix = if min < 0.0 {
            // Rebuild with the rounding-noise eigenvalues clamped away.
            let clamped = eig.eigenvalues.map(|l| Complex64::new(l.max(0.0), 0.0));
            symmetrize(
                &(&eig.eigenvectors
                    * CMatrix::from_diagonal(&clamped)
                    * eig.eigenvectors.adjoint()),
            )
        } else {
            symmetrize(&matrix)
        };
        Ok(Self { matrix })
    }

    /// Wraps the symmetrized output of a completely positive map without
    /// re-validating eigenvalues. Callers guarantee positivity and unit
    /// trace by construction.
    pub(crate) fn from_map_output(matrix: CMatrix) -> Self {
        Self {
            matrix: symmetrize(&matrix),
        }
    }

    /// Pure state `|psi><psi|` from a ket (normalized internally).
    pub fn from_pure(ket: &[Complex64]) -> Result<Self> {
        let norm_sq: f64 = ket.iter().map(|c| c.norm_sqr()).sum();
        if norm_sq <= TRACE_FLOOR {
            return Err(Error::InvalidParameter("zero ket".into()));
        }
        let dim = ket.len();
        let matrix = CMatrix::from_fn(dim, dim, |i, j| ket[i] * ket[j].conj() / norm_sq);
        Ok(Self { matrix })
    }

    /// The maximally mixed state `I / dim`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: identity(dim).map(|c| c / dim as f64),
        }
    }

    /// Qubit state `(I + x X + y Y + z Z) / 2` from Bloch coordinates.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Result<Self> {
        let r = x * x + y * y + z * z;
        if r > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "Bloch vector norm {} > 1",
                r.sqrt()
            )));
        }
        let m = (identity(2)
            + pauli(Pauli::X).map(|c| c * x)
            + pauli(Pauli::Y).map(|c| c * y)
            + pauli(Pauli::Z).map(|c| c * z))
        .map(|c| c * 0.5);
        Ok(Self {
            matrix: symmetrize(&m),
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Smallest eigenvalue; diagnostic for positivity checks.
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }
}

/// The unnormalized output of a partial Kraus map: Hermitian PSD. Discrete
/// outcomes carry a trace in (0, 1]; continuous-outcome likelihood weights
/// may exceed 1.
#[derive(Debug, Clone)]
pub struct SubnormalizedState {
    matrix: CMatrix,
}

impl SubnormalizedState {
    /// Wraps a map output. The matrix is symmetrized; positivity is
    /// guaranteed by the completely positive maps that produce these values.
    pub fn new(matrix: CMatrix) -> Self {
        Self {
            matrix: symmetrize(&matrix),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Splits into `(state / tr, tr)`.
    ///
    /// Fails with [`Error::VanishingTrace`] when the trace is at or below
    /// [`TRACE_FLOOR`], which signals an outcome that is impossible under
    /// the hypothesis that produced this state.
    pub fn normalize(&self) -> Result<(DensityOperator, f64)> {
        let trace = self.trace();
        if trace <= TRACE_FLOOR {
            return Err(Error::VanishingTrace { trace });
        }
        let normalized = self.matrix.map(|c| c / trace);
        Ok((DensityOperator::from_map_output(normalized), trace))
    }
}

/// Squared Uhlmann fidelity `F(rho, sigma) = tr^2 sqrt(sqrt(rho) sigma sqrt(rho))`,
/// clamped to `[0, 1]`. Equals 1 iff the states coincide.
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: sigma.dim(),
        });
    }
    let sqrt_rho = hermitian_sqrt(rho.matrix())?;
    let inner = &sqrt_rho * sigma.matrix() * &sqrt_rho;
    let root = hermitian_sqrt(&symmetrize(&inner))?;
    let raw = root.trace().re;
    Ok((raw * raw).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(entries: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(
            &nalgebra::DVector::from_iterator(
                entries.len(),
                entries.iter().map(|&e| Complex64::new(e, 0.0)),
            ),
        )
    }

    fn random_complex(rng: &mut impl Rng) -> Complex64 {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    }

    fn random_psd(dim: usize, rng: &mut impl Rng) -> CMatrix {
        let g = CMatrix::from_fn(dim, dim, |_, _| random_complex(rng));
        symmetrize(&(&g * g.adjoint()))
    }

    fn random_density(dim: usize, rng: &mut impl Rng) -> DensityOperator {
        let a = random_psd(dim, rng);
        let tr = a.trace().re;
        DensityOperator::new(a.map(|c| c / tr)).unwrap()
    }

    #[test]
    fn pauli_matrices() {
        let x = pauli(Pauli::X);
        assert_eq!(x[(0, 1)], Complex64::new(1.0, 0.0));
        assert_eq!(x[(0, 0)], Complex64::new(0.0, 0.0));
        let z = pauli(Pauli::Z);
        assert_eq!(z[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(z[(1, 1)], Complex64::new(-1.0, 0.0));
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            let m = pauli(p);
            assert!(max_abs(&(&m * &m - identity(2))) < 1e-15);
        }
    }

    #[test]
    fn sqrt_of_identity_is_identity() {
        let root = hermitian_sqrt(&identity(2)).unwrap();
        assert!(max_abs(&(root - identity(2))) < 1e-12);
    }

    #[test]
    fn sqrt_of_diagonal() {
        let root = hermitian_sqrt(&diag(&[4.0, 9.0])).unwrap();
        assert!(max_abs(&(root - diag(&[2.0, 3.0]))) < 1e-12);
    }

    #[test]
    fn sqrt_round_trips_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in 2..=4 {
            for _ in 0..20 {
                let a = random_psd(dim, &mut rng);
                let root = hermitian_sqrt(&a).unwrap();
                assert!(hermitian_deviation(&root) < 1e-10 * max_abs(&root).max(1.0));
                assert!(min_eigenvalue(&root) >= -1e-10);
                assert!(max_abs(&(&root * &root - &a)) <= 1e-9 * max_abs(&a));
            }
        }
    }

    #[test]
    fn sqrt_rejects_non_hermitian() {
        let mut m = identity(2);
        m[(0, 1)] = Complex64::new(0.5, 0.0);
        assert!(matches!(hermitian_sqrt(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn sqrt_rejects_negative_eigenvalues() {
        assert!(matches!(
            hermitian_sqrt(&diag(&[1.0, -1.0])),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn self_fidelity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in 2..=4 {
            let rho = random_density(dim, &mut rng);
            assert_abs_diff_eq!(fidelity(&rho, &rho).unwrap(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn orthogonal_pure_states_have_zero_fidelity() {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let ground = DensityOperator::from_pure(&[one, zero]).unwrap();
        let excited = DensityOperator::from_pure(&[zero, one]).unwrap();
        assert_abs_diff_eq!(fidelity(&ground, &excited).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pure_vs_mixed_fidelity_is_overlap() {
        // For pure rho the nested square roots reduce to <psi|sigma|psi>.
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let rho = DensityOperator::from_pure(&[one, zero]).unwrap();
        let mixed = DensityOperator::maximally_mixed(2);
        assert_abs_diff_eq!(fidelity(&rho, &mixed).unwrap(), 0.5, epsilon = 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let ket: Vec<Complex64> = (0..3).map(|_| random_complex(&mut rng)).collect();
            let rho = DensityOperator::from_pure(&ket).unwrap();
            let sigma = random_density(3, &mut rng);
            let overlap = (rho.matrix() * sigma.matrix()).trace().re;
            assert_abs_diff_eq!(fidelity(&rho, &sigma).unwrap(), overlap, epsilon = 1e-9);
        }
    }

    #[test]
    fn fidelity_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = random_density(3, &mut rng);
            let b = random_density(3, &mut rng);
            let fab = fidelity(&a, &b).unwrap();
            let fba = fidelity(&b, &a).unwrap();
            assert_abs_diff_eq!(fab, fba, epsilon = 1e-9);
            assert!((0.0..=1.0).contains(&fab));
        }
    }

    #[test]
    fn fidelity_dimension_mismatch() {
        let a = DensityOperator::maximally_mixed(2);
        let b = DensityOperator::maximally_mixed(3);
        assert!(matches!(
            fidelity(&a, &b),
            Err(Error::DimensionMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn normalize_splits_trace() {
        let (rho, tr) = SubnormalizedState::new(diag(&[0.25, 0.25]))
            .normalize()
            .unwrap();
        assert_abs_diff_eq!(tr, 0.5, epsilon = 1e-15);
        assert!(max_abs(&(rho.matrix() - DensityOperator::maximally_mixed(2).matrix())) < 1e-15);

        let (rho, tr) = SubnormalizedState::new(diag(&[0.0, 0.3]))
            .normalize()
            .unwrap();
        assert_abs_diff_eq!(tr, 0.3, epsilon = 1e-15);
        assert!(max_abs(&(rho.matrix() - &diag(&[0.0, 1.0]))) < 1e-15);
    }

    #[test]
    fn normalize_rejects_vanishing_trace() {
        let s = SubnormalizedState::new(diag(&[1e-16, 1e-16]));
        assert!(matches!(s.normalize(), Err(Error::VanishingTrace { .. })));
    }

    #[test]
    fn normalize_scales_eigenvalues_only() {
        let (rho, tr) = SubnormalizedState::new(diag(&[0.1, 0.3, 0.2]))
            .normalize()
            .unwrap();
        assert_abs_diff_eq!(tr, 0.6, epsilon = 1e-15);
        for (i, expected) in [0.1 / 0.6, 0.3 / 0.6, 0.2 / 0.6].iter().enumerate() {
            assert_abs_diff_eq!(rho.matrix()[(i, i)].re, *expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn density_operator_rejects_invalid_input() {
        let mut skew = identity(2).map(|c| c * 0.5);
        skew[(0, 1)] = Complex64::new(0.3, 0.0);
        assert!(matches!(
            DensityOperator::new(skew),
            Err(Error::NotHermitian { .. })
        ));
        assert!(matches!(
            DensityOperator::new(diag(&[1.5, -0.5])),
            Err(Error::NotPsd { .. })
        ));
        assert!(matches!(
            DensityOperator::new(diag(&[0.4, 0.4])),
            Err(Error::InvalidTrace { .. })
        ));
    }

    #[test]
    fn operations_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_psd(3, &mut rng);
        let first = hermitian_sqrt(&a).unwrap();
        let second = hermitian_sqrt(&a).unwrap();
        assert_eq!(first, second);

        let rho = random_density(3, &mut rng);
        let sigma = random_density(3, &mut rng);
        assert_eq!(
            fidelity(&rho, &sigma).unwrap().to_bits(),
            fidelity(&rho, &sigma).unwrap().to_bits()
        );
    }

    #[test]
    fn interleaved_round_trip() {
        let data = [0.5, 0.0, 0.1, -0.2, 0.1, 0.2, 0.5, 0.0];
        let m = from_interleaved(2, &data).unwrap();
        assert_eq!(m[(0, 1)], Complex64::new(0.1, -0.2));
        assert!(from_interleaved(2, &data[..6]).is_err());
    }
}
