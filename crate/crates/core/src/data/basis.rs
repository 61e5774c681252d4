use super::DataError;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Named working-correlation structures whose inverse lies in the span of a
/// small set of 0/1 basis matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Independence,
    Exchangeable,
    Ar1,
}

/// Basis matrices `M_1, …, M_s` for the inverse working correlation.
///
/// `M_1` is always the identity; the remaining matrices are symmetric with
/// entries in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationBasis {
    matrices: Vec<DMatrix<f64>>,
}

impl CorrelationBasis {
    /// Builds a basis from explicit matrices, validating the invariants.
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self, DataError> {
        if matrices.is_empty() {
            return Err(DataError::Dimension("basis must be nonempty".into()));
        }
        let n = matrices[0].nrows();
        if !matrices[0].is_identity(0.0) {
            return Err(DataError::Dimension("M_1 must be the identity".into()));
        }
        for (l, m) in matrices.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(DataError::Dimension(format!(
                    "basis matrix {} is {}x{}, expected {n}x{n}",
                    l + 1,
                    m.nrows(),
                    m.ncols()
                )));
            }
            for i in 0..n {
                for j in 0..n {
                    let v = m[(i, j)];
                    if v != 0.0 && v != 1.0 {
                        return Err(DataError::Dimension(format!(
                            "basis matrix {} has entry {v} outside {{0,1}}",
                            l + 1
                        )));
                    }
                    if m[(i, j)] != m[(j, i)] {
                        return Err(DataError::Dimension(format!(
                            "basis matrix {} is not symmetric",
                            l + 1
                        )));
                    }
                }
            }
        }
        Ok(CorrelationBasis { matrices })
    }

    /// Number of basis matrices `s`.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Dimension `n` of each matrix.
    pub fn dim(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }
}

/// Builds the standard basis for a named working-correlation structure.
///
/// * independence: `{I}`
/// * exchangeable: `{I, J − I}`
/// * AR-1: `{I, first off-diagonal band}`
pub fn make_basis(kind: BasisKind, n: usize) -> Result<CorrelationBasis, DataError> {
    if n == 0 {
        return Err(DataError::Dimension("n must be at least 1".into()));
    }
    let identity = DMatrix::identity(n, n);
    let matrices = match kind {
        BasisKind::Independence => vec![identity],
        BasisKind::Exchangeable => {
            if n < 2 {
                return Err(DataError::Dimension(
                    "exchangeable basis requires n >= 2".into(),
                ));
            }
            let mut m2 = DMatrix::from_element(n, n, 1.0);
            m2.fill_diagonal(0.0);
            vec![identity, m2]
        }
        BasisKind::Ar1 => {
            if n < 2 {
                return Err(DataError::Dimension("ar1 basis requires n >= 2".into()));
            }
            let mut m2 = DMatrix::zeros(n, n);
            for j in 0..n - 1 {
                m2[(j, j + 1)] = 1.0;
                m2[(j + 1, j)] = 1.0;
            }
            vec![identity, m2]
        }
    };
    CorrelationBasis::new(matrices)
}
