use nalgebra::DMatrix;
use serde::{Serialize, Serializer};

use crate::tensor::{Element, Tensor};
use crate::{Error, Result};

/// A centered Gram matrix is treated as zero when its Frobenius norm falls
/// below this fraction of the uncentered one.
const DEGENERATE_RATIO: f64 = 1e-12;

/// Linear-kernel Gram matrix `K = XXᵀ` of a batch of `m` feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    k: DMatrix<f64>,
}

impl GramMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn size(&self) -> usize {
        self.k.nrows()
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.k
    }

    /// Largest `|K_ij − K_ji|`.
    pub fn asymmetry(&self) -> f64 {
        (&self.k - self.k.transpose()).amax()
    }

    /// Smallest eigenvalue of the symmetric part.
    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.k + self.k.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }
}

pub fn gram_linear(x: &DMatrix<f64>) -> Result<GramMatrix> {
    if x.nrows() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: x.nrows(),
        });
    }
    Ok(GramMatrix { k: x * x.transpose() })
}

/// Widens a feature tensor to a 64-bit matrix.
pub fn features_to_matrix<F: Element>(x: &Tensor<F>) -> Result<DMatrix<f64>> {
    let (rows, cols) = x.dims2()?;
    Ok(DMatrix::from_row_iterator(rows, cols, x.data().iter().map(|v| v.as_f64())))
}

fn check_square(k: &DMatrix<f64>) -> Result<()> {
    if k.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: k.nrows(),
            found: k.ncols(),
        })
    }
}

/// `HKH` with `H = I − (1/m)·11ᵀ`, computed by subtracting row, column and
/// grand means.
pub fn center_gram(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(k)?;
    let m = k.nrows();
    if m == 0 {
        return Err(Error::TooFewSamples { needed: 1, found: 0 });
    }
    let row_means: Vec<f64> = (0..m).map(|i| k.row(i).mean()).collect();
    let col_means: Vec<f64> = (0..m).map(|j| k.column(j).mean()).collect();
    let grand = k.mean();
    Ok(DMatrix::from_fn(m, m, |i, j| k[(i, j)] - row_means[i] - col_means[j] + grand))
}

fn check_pair(k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<usize> {
    check_square(k)?;
    check_square(l)?;
    if k.nrows() != l.nrows() {
        return Err(Error::DimensionMismatch {
            expected: k.nrows(),
            found: l.nrows(),
        });
    }
    if k.nrows() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: k.nrows(),
        });
    }
    Ok(k.nrows())
}

fn scale(m: usize) -> f64 {
    ((m - 1) * (m - 1)) as f64
}

/// `vec(K′)·vec(L′) / (m−1)²`.
pub fn hsic(k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<f64> {
    let m = check_pair(k, l)?;
    let kc = center_gram(k)?;
    let lc = center_gram(l)?;
    Ok(kc.dot(&lc) / scale(m))
}

/// `trace(K′L′) / (m−1)²`, the same quantity by a different route.
pub fn hsic_trace(k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<f64> {
    let m = check_pair(k, l)?;
    let kc = center_gram(k)?;
    let lc = center_gram(l)?;
    Ok((kc * lc).trace() / scale(m))
}

/// A CKA value, or the marker for an input whose centered Gram matrix
/// vanishes (constant features), where the ratio is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CkaValue {
    Value(f64),
    Degenerate,
}

impl CkaValue {
    pub fn value(self) -> Option<f64> {
        match self {
            CkaValue::Value(v) => Some(v),
            CkaValue::Degenerate => None,
        }
    }

    pub fn is_degenerate(self) -> bool {
        self == CkaValue::Degenerate
    }
}

impl std::fmt::Display for CkaValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CkaValue::Value(v) => write!(f, "{v}"),
            CkaValue::Degenerate => f.write_str("degenerate"),
        }
    }
}

impl Serialize for CkaValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CkaValue::Value(v) => s.serialize_f64(*v),
            CkaValue::Degenerate => s.serialize_str("degenerate"),
        }
    }
}

/// Centered Gram matrix prepared for repeated CKA evaluations.
#[derive(Debug, Clone)]
pub struct CenteredGram {
    centered: DMatrix<f64>,
    norm: f64,
    degenerate: bool,
}

impl CenteredGram {
    pub fn new(k: &DMatrix<f64>) -> Result<Self> {
        let centered = center_gram(k)?;
        let norm = centered.norm();
        let degenerate = !(norm > DEGENERATE_RATIO * k.norm());
        Ok(Self {
            centered,
            norm,
            degenerate,
        })
    }

    pub fn size(&self) -> usize {
        self.centered.nrows()
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// CKA against another prepared matrix of the same size.
    pub fn cka(&self, other: &CenteredGram) -> Result<CkaValue> {
        if self.size() != other.size() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                found: other.size(),
            });
        }
        if self.degenerate || other.degenerate {
            return Ok(CkaValue::Degenerate);
        }
        let v = self.centered.dot(&other.centered) / (self.norm * other.norm);
        Ok(CkaValue::Value(v.clamp(-1.0, 1.0)))
    }
}

/// `HSIC(K,L) / sqrt(HSIC(K,K)·HSIC(L,L))`.
///
/// The `(m−1)²` factors cancel, so the ratio is the cosine between the
/// flattened centered Gram matrices.
pub fn cka(k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<CkaValue> {
    check_pair(k, l)?;
    CenteredGram::new(k)?.cka(&CenteredGram::new(l)?)
}
