//! Greedy sparse coding: OMP for a single snapshot, SOMP for a block of
//! snapshots sharing one support.

use nalgebra::SVD;

use crate::{CMatrix, CVector, Error, Result};

/// Result of a greedy pursuit.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    /// L x T coefficients, zero outside `support`.
    pub coefficients: CMatrix,
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    /// Frobenius norm of `Y - D * coefficients`.
    pub residual_norm: f64,
    /// Residual norm before the first and after every selection.
    pub residual_history: Vec<f64>,
    /// Set when some support sub-matrix was numerically rank deficient and
    /// the minimum-norm least-squares solution was used.
    pub rank_deficient: bool,
}

impl SparseSolution {
    /// Row `support[i]` of the coefficients, one entry per snapshot.
    pub fn support_row(&self, i: usize) -> nalgebra::RowDVector<crate::C64> {
        self.coefficients.row(self.support[i]).into_owned()
    }
}

/// The sensing dictionary `G A`.
pub fn effective_dictionary(perturbation: &CMatrix, manifold: &CMatrix) -> Result<CMatrix> {
    if perturbation.ncols() != manifold.nrows() || !perturbation.is_square() {
        return Err(Error::Dimension(format!(
            "perturbation {:?} incompatible with manifold {:?}",
            perturbation.shape(),
            manifold.shape()
        )));
    }
    Ok(perturbation * manifold)
}

/// Least-squares fit of `y` on the selected columns of `dictionary`.
///
/// Returns the |support| x T minimizer (minimum norm when the sub-matrix is
/// rank deficient) and whether rank deficiency was detected.
pub fn least_squares_on_support(
    y: &CMatrix,
    dictionary: &CMatrix,
    support: &[usize],
) -> Result<(CMatrix, bool)> {
    if support.is_empty() {
        return Err(Error::Parameter("least squares needs a non-empty support".into()));
    }
    if y.nrows() != dictionary.nrows() {
        return Err(Error::Dimension(format!(
            "measurements have {} rows, dictionary {}",
            y.nrows(),
            dictionary.nrows()
        )));
    }
    if let Some(&bad) = support.iter().find(|&&j| j >= dictionary.ncols()) {
        return Err(Error::Parameter(format!("support index {bad} out of range")));
    }
    let sub = dictionary.select_columns(support);
    let svd = SVD::new(sub, true, true);
    let largest = svd.singular_values.max();
    let eps = largest * f64::EPSILON * y.nrows().max(support.len()) as f64;
    let rank_deficient = svd.singular_values.iter().any(|&s| s <= eps);
    let x = svd
        .solve(y, eps)
        .map_err(|e| Error::Parameter(format!("least squares failed: {e}")))?;
    Ok((x, rank_deficient))
}

fn check_pursuit_args(y: &CMatrix, dictionary: &CMatrix, k: usize) -> Result<Vec<f64>> {
    let (m, l) = dictionary.shape();
    if y.nrows() != m {
        return Err(Error::Dimension(format!(
            "measurements have {} rows, dictionary {m}",
            y.nrows()
        )));
    }
    if y.ncols() == 0 {
        return Err(Error::Parameter("need at least one snapshot".into()));
    }
    if k > m.min(l) {
        return Err(Error::Parameter(format!(
            "sparsity {k} exceeds min(M, L) = {}",
            m.min(l)
        )));
    }
    let norms: Vec<f64> = dictionary.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|&n| !(n > 0.0)) {
        return Err(Error::Parameter("dictionary has a zero column".into()));
    }
    Ok(norms)
}

/// Simultaneous orthogonal matching pursuit.
///
/// Each iteration selects the unused atom maximizing
/// `sum_t |d_l^H r_t| / ||d_l||`, ties going to the lowest index, then
/// refits all snapshots jointly on the accumulated support.
pub fn somp(y: &CMatrix, dictionary: &CMatrix, k: usize) -> Result<SparseSolution> {
    let norms = check_pursuit_args(y, dictionary, k)?;
    let l = dictionary.ncols();
    let mut residual = y.clone();
    let mut support: Vec<usize> = Vec::with_capacity(k);
    let mut selected = vec![false; l];
    let mut history = vec![y.norm()];
    let mut rank_deficient = false;
    let mut fit = CMatrix::zeros(0, y.ncols());

    for _ in 0..k {
        let correlations = dictionary.adjoint() * &residual;
        let mut best: Option<(usize, f64)> = None;
        for atom in 0..l {
            if selected[atom] {
                continue;
            }
            let score = correlations.row(atom).iter().map(|v| v.norm()).sum::<f64>() / norms[atom];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((atom, score));
            }
        }
        let (atom, _) = best.expect("k <= L leaves an unused atom");
        selected[atom] = true;
        support.push(atom);
        let (x, deficient) = least_squares_on_support(y, dictionary, &support)?;
        rank_deficient |= deficient;
        residual = y - dictionary.select_columns(&support) * &x;
        history.push(residual.norm());
        fit = x;
    }

    let mut coefficients = CMatrix::zeros(l, y.ncols());
    for (i, &atom) in support.iter().enumerate() {
        coefficients.set_row(atom, &fit.row(i));
    }
    Ok(SparseSolution {
        coefficients,
        residual_norm: residual.norm(),
        support,
        residual_history: history,
        rank_deficient,
    })
}

/// Orthogonal matching pursuit for one snapshot; SOMP with `T = 1`.
pub fn omp(y: &CVector, dictionary: &CMatrix, k: usize) -> Result<SparseSolution> {
    let block = CMatrix::from_column_slice(y.len(), 1, y.as_slice());
    somp(&block, dictionary, k)
}
