//! MUSIC subspace baseline.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::array::{steering_vector, ArrayGeometry};
use crate::{CMatrix, Error, Result};

/// Added to the noise-subspace projection so exactly noiseless data gives a
/// finite pseudospectrum.
pub const SPECTRUM_FLOOR: f64 = 1e-12;

/// Default scan resolution in degrees.
pub const DEFAULT_SCAN_STEP_DEG: f64 = 0.01;

/// Hermitian sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub r: CMatrix,
}

/// `R = Y Y^H / T`, symmetrized as `(R + R^H) / 2`.
pub fn sample_covariance(y: &CMatrix) -> Result<CovarianceEstimate> {
    if y.ncols() == 0 {
        return Err(Error::Parameter("covariance needs T >= 1".into()));
    }
    let r = (y * y.adjoint()).unscale(y.ncols() as f64);
    let r = (&r + r.adjoint()).unscale(2.0);
    Ok(CovarianceEstimate { r })
}

/// Eigenvalues ascending with matching eigenvector columns.
pub fn hermitian_eigen(r: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(r.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

/// Eigenvectors of the `M - K` smallest eigenvalues.
pub fn noise_subspace(cov: &CovarianceEstimate, k: usize) -> Result<CMatrix> {
    let m = cov.r.nrows();
    if k >= m {
        return Err(Error::Parameter(format!(
            "MUSIC needs K < M, got K = {k}, M = {m}"
        )));
    }
    let (_, vectors) = hermitian_eigen(&cov.r);
    Ok(vectors.columns(0, m - k).into_owned())
}

/// Uniform scan over [-90, 90] inclusive.
pub fn scan_angles(step_deg: f64) -> Result<Vec<f64>> {
    if !step_deg.is_finite() || step_deg <= 0.0 {
        return Err(Error::Parameter(format!("scan step must be positive, got {step_deg}")));
    }
    let n = (180.0 / step_deg + 1e-9).floor() as usize;
    let mut angles: Vec<f64> = (0..=n).map(|i| -90.0 + i as f64 * step_deg).collect();
    if let Some(last) = angles.last_mut() {
        if (*last - 90.0).abs() < 1e-9 {
            *last = 90.0;
        }
    }
    Ok(angles)
}

/// Pseudospectrum `1 / (||E_n^H a(theta)||^2 + floor)` at each scan angle.
pub fn music_spectrum(
    cov: &CovarianceEstimate,
    k: usize,
    geometry: &ArrayGeometry,
    scan_angles_deg: &[f64],
) -> Result<Vec<f64>> {
    if cov.r.nrows() != geometry.num_elements() {
        return Err(Error::Dimension("covariance does not match array size".into()));
    }
    let en_h = noise_subspace(cov, k)?.adjoint();
    scan_angles_deg
        .par_iter()
        .map(|&theta| {
            let a = steering_vector(geometry, theta)?;
            Ok(1.0 / ((&en_h * a).norm_squared() + SPECTRUM_FLOOR))
        })
        .collect()
}

/// MUSIC angle estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct MusicEstimate {
    /// Peak angles in descending peak height.
    pub angles_deg: Vec<f64>,
    /// Fewer than K peaks existed and the output was padded.
    pub degenerate: bool,
}

/// Indices of strict local maxima; end points compare against their single
/// neighbor.
pub fn local_maxima(spectrum: &[f64]) -> Vec<usize> {
    let n = spectrum.len();
    if n == 1 {
        return vec![0];
    }
    (0..n)
        .filter(|&i| {
            let left = i == 0 || spectrum[i] > spectrum[i - 1];
            let right = i + 1 == n || spectrum[i] > spectrum[i + 1];
            left && right
        })
        .collect()
}

/// Picks the `k` highest peaks, padding with grid points next to the global
/// maximum when there are not enough.
pub fn pick_peaks(spectrum: &[f64], k: usize) -> (Vec<usize>, bool) {
    let mut peaks = local_maxima(spectrum);
    peaks.sort_by(|&a, &b| spectrum[b].total_cmp(&spectrum[a]).then(a.cmp(&b)));
    peaks.truncate(k);
    let degenerate = peaks.len() < k;
    if degenerate && !spectrum.is_empty() {
        let global = (0..spectrum.len())
            .max_by(|&a, &b| spectrum[a].total_cmp(&spectrum[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        let mut offset = 0usize;
        while peaks.len() < k && offset <= spectrum.len() {
            for candidate in [global.checked_sub(offset), global.checked_add(offset)] {
                if let Some(c) = candidate.filter(|&c| c < spectrum.len()) {
                    if peaks.len() < k && !peaks.contains(&c) {
                        peaks.push(c);
                    }
                }
            }
            offset += 1;
        }
    }
    (peaks, degenerate)
}

/// Full MUSIC pipeline from the raw snapshots.
pub fn music_estimate(
    y: &CMatrix,
    k: usize,
    geometry: &ArrayGeometry,
    scan_step_deg: f64,
) -> Result<MusicEstimate> {
    let cov = sample_covariance(y)?;
    let scan = scan_angles(scan_step_deg)?;
    let spectrum = music_spectrum(&cov, k, geometry, &scan)?;
    let (peaks, degenerate) = pick_peaks(&spectrum, k);
    Ok(MusicEstimate {
        angles_deg: peaks.iter().map(|&i| scan[i]).collect(),
        degenerate,
    })
}
