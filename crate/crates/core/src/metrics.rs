//! Angle-set matching and the root-mean-square angle error.

use itertools::Itertools;

use crate::{Error, Result};

/// Largest set size handled by the exhaustive matcher.
pub const MAX_MATCH_SIZE: usize = 8;

/// Permutation `p` minimizing `sum_i (truth[i] - est[p[i]])^2`.
///
/// Exhaustive over all `K!` permutations in lexicographic order; the first
/// minimum found wins, so ties resolve to the lexicographically smallest.
pub fn match_angles(est: &[f64], truth: &[f64]) -> Result<Vec<usize>> {
    if est.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} estimates for {} true angles",
            est.len(),
            truth.len()
        )));
    }
    let k = truth.len();
    if k > MAX_MATCH_SIZE {
        return Err(Error::Parameter(format!(
            "exhaustive matching supports at most {MAX_MATCH_SIZE} angles, got {k}"
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..k).permutations(k) {
        let c = matched_cost(est, truth, &perm);
        if best.as_ref().is_none_or(|(b, _)| c < *b) {
            best = Some((c, perm));
        }
    }
    Ok(best.map(|(_, p)| p).unwrap_or_default())
}

fn matched_cost(est: &[f64], truth: &[f64], perm: &[usize]) -> f64 {
    truth
        .iter()
        .zip(perm)
        .map(|(t, &j)| (t - est[j]).powi(2))
        .sum()
}

/// `sqrt(mean((truth_i - est_pi(i))^2))` under the optimal matching, degrees.
pub fn rmse_deg(est: &[f64], truth: &[f64]) -> Result<f64> {
    let perm = match_angles(est, truth)?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    Ok((matched_cost(est, truth, &perm) / truth.len() as f64).sqrt())
}

/// `est` reordered to line up with `reference`.
pub fn align_to(est: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    let perm = match_angles(est, reference)?;
    Ok(perm.iter().map(|&j| est[j]).collect())
}

/// One algorithm's outcome on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub algorithm_id: String,
    pub estimated_angles_deg: Vec<f64>,
    pub true_angles_deg: Vec<f64>,
    pub mse_deg: f64,
}

impl TrialResult {
    pub fn new(algorithm_id: impl Into<String>, est: Vec<f64>, truth: Vec<f64>) -> Result<Self> {
        let mse_deg = rmse_deg(&est, &truth)?;
        Ok(Self {
            algorithm_id: algorithm_id.into(),
            estimated_angles_deg: est,
            true_angles_deg: truth,
            mse_deg,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn brute_force_best(est: &[f64], truth: &[f64]) -> f64 {
        // Independent enumeration by Heap's algorithm.
        fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if k <= 1 {
                out.push(a.clone());
                return;
            }
            for i in 0..k {
                heap(k - 1, a, out);
                if k % 2 == 0 {
                    a.swap(i, k - 1);
                } else {
                    a.swap(0, k - 1);
                }
            }
        }
        let mut perms = Vec::new();
        heap(truth.len(), &mut (0..truth.len()).collect(), &mut perms);
        perms
            .iter()
            .map(|p| matched_cost(est, truth, p))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn identity_and_reversal() {
        let truth = [-12.5, 43.85, 76.8];
        assert_eq!(match_angles(&truth, &truth).unwrap(), vec![0, 1, 2]);
        let rev = [76.8, 43.85, -12.5];
        assert_eq!(match_angles(&rev, &truth).unwrap(), vec![2, 1, 0]);
        assert_eq!(rmse_deg(&rev, &truth).unwrap(), 0.0);
    }

    #[test]
    fn ties_go_to_smallest_permutation() {
        assert_eq!(match_angles(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn rmse_examples() {
        let truth = [-12.5, 43.85, 76.8];
        let shifted: Vec<f64> = truth.iter().map(|t| t + 1.0).collect();
        assert_abs_diff_eq!(rmse_deg(&shifted, &truth).unwrap(), 1.0, epsilon = 1e-12);

        // Nearest 2-degree grid points.
        let snapped: Vec<f64> = truth.iter().map(|t| (t / 2.0f64).round() * 2.0).collect();
        assert_eq!(snapped, vec![-12.0, 44.0, 76.0]);
        let expect = ((0.5f64.powi(2) + 0.15f64.powi(2) + 0.8f64.powi(2)) / 3.0).sqrt();
        assert_abs_diff_eq!(rmse_deg(&snapped, &truth).unwrap(), expect, epsilon = 1e-12);
        assert_abs_diff_eq!(expect, 0.551_513_070_259_143_3, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(match_angles(&[1.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
        assert!(rmse_deg(&[1.0; 9], &[1.0; 9]).is_err());
    }

    #[test]
    fn reproduces_trial_result_mse() {
        let r = TrialResult::new("somp", vec![44.0, -12.0, 76.0], vec![-12.5, 43.85, 76.8]).unwrap();
        assert_abs_diff_eq!(r.mse_deg, 0.551_513_070_259_143_3, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_oracle(
            est in prop::collection::vec(-90.0f64..90.0, 1..=5),
            seed in prop::collection::vec(-90.0f64..90.0, 5),
        ) {
            let truth = &seed[..est.len()];
            let perm = match_angles(&est, truth).unwrap();
            let found = matched_cost(&est, truth, &perm);
            prop_assert!((found - brute_force_best(&est, truth)).abs() <= 1e-9);
        }

        #[test]
        fn rmse_symmetric_and_permutation_invariant(
            a in prop::collection::vec(-90.0f64..90.0, 3),
            b in prop::collection::vec(-90.0f64..90.0, 3),
        ) {
            let ab = rmse_deg(&a, &b).unwrap();
            prop_assert!((ab - rmse_deg(&b, &a).unwrap()).abs() < 1e-12);
            let rotated = vec![a[2], a[0], a[1]];
            prop_assert!((ab - rmse_deg(&rotated, &b).unwrap()).abs() < 1e-12);
            prop_assert_eq!(rmse_deg(&a, &rotated).unwrap(), 0.0);

            let mut sa = a.clone();
            let mut sb = b.clone();
            sa.sort_by(f64::total_cmp);
            sb.sort_by(f64::total_cmp);
            let sorted = (sa.iter().zip(&sb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 3.0).sqrt();
            prop_assert!(ab <= sorted + 1e-12);
        }
    }
}
