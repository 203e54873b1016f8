//! Uniform linear array model: steering vectors, grid dictionaries,
//! perturbation matrices and synthetic snapshot generation.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{CMatrix, CVector, Error, Result, C64};

/// Uniform linear array description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    num_elements: usize,
    spacing_over_wavelength: f64,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, spacing_over_wavelength: f64) -> Result<Self> {
        if num_elements < 2 {
            return Err(Error::Parameter(format!(
                "array needs at least 2 elements, got {num_elements}"
            )));
        }
        if !spacing_over_wavelength.is_finite() || spacing_over_wavelength <= 0.0 {
            return Err(Error::Parameter(format!(
                "element spacing d/lambda must be finite and positive, got {spacing_over_wavelength}"
            )));
        }
        Ok(Self {
            num_elements,
            spacing_over_wavelength,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn spacing_over_wavelength(&self) -> f64 {
        self.spacing_over_wavelength
    }
}

fn check_angle(theta_deg: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&theta_deg) {
        return Err(Error::Domain(format!(
            "angle {theta_deg} deg outside [-90, 90]"
        )));
    }
    Ok(())
}

/// Candidate source directions in degrees, strictly increasing within [-90, 90].
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    angles_deg: Vec<f64>,
}

impl AngleGrid {
    pub fn new(angles_deg: Vec<f64>) -> Result<Self> {
        if angles_deg.is_empty() {
            return Err(Error::Parameter("angle grid is empty".into()));
        }
        for &a in &angles_deg {
            check_angle(a)?;
        }
        if angles_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("angle grid must be strictly increasing".into()));
        }
        Ok(Self { angles_deg })
    }

    /// Uniform grid covering [-90, 90] inclusive. `step_deg` must divide 180.
    pub fn uniform(step_deg: f64) -> Result<Self> {
        if !step_deg.is_finite() || step_deg <= 0.0 {
            return Err(Error::Parameter(format!("grid step must be positive, got {step_deg}")));
        }
        let bins = 180.0 / step_deg;
        let n = bins.round();
        if (bins - n).abs() > 1e-9 * bins.max(1.0) {
            return Err(Error::Parameter(format!(
                "grid step {step_deg} deg does not divide [-90, 90] evenly"
            )));
        }
        let n = n as usize;
        let angles = (0..=n)
            .map(|i| if i == n { 90.0 } else { -90.0 + i as f64 * step_deg })
            .collect();
        Self::new(angles)
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }
}

/// Array response to a far-field plane wave arriving from `theta_deg`.
///
/// Entry `m` is `exp(-j 2 pi (d/lambda) m sin(theta))`, so the first entry is 1.
pub fn steering_vector(geometry: &ArrayGeometry, theta_deg: f64) -> Result<CVector> {
    check_angle(theta_deg)?;
    Ok(steering_unchecked(geometry, theta_deg))
}

fn steering_unchecked(geometry: &ArrayGeometry, theta_deg: f64) -> CVector {
    let phase_step = -2.0 * PI * geometry.spacing_over_wavelength * theta_deg.to_radians().sin();
    CVector::from_fn(geometry.num_elements, |m, _| {
        if m == 0 {
            C64::new(1.0, 0.0)
        } else {
            C64::from_polar(1.0, phase_step * m as f64)
        }
    })
}

/// Steering matrix over a set of (possibly off-grid) angles.
///
/// The manifold column `l` always equals `steering_vector(geometry, angles_deg[l])`;
/// every angle mutation rebuilds the affected column.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringDictionary {
    geometry: ArrayGeometry,
    angles_deg: Vec<f64>,
    manifold: CMatrix,
}

impl SteeringDictionary {
    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn manifold(&self) -> &CMatrix {
        &self.manifold
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    /// Moves atom `index` to `theta_deg`, clamped to [-90, 90].
    pub fn set_angle(&mut self, index: usize, theta_deg: f64) {
        let theta = theta_deg.clamp(-90.0, 90.0);
        self.angles_deg[index] = theta;
        let column = steering_unchecked(&self.geometry, theta);
        self.manifold.set_column(index, &column);
    }
}

pub fn build_dictionary(geometry: &ArrayGeometry, grid: &AngleGrid) -> SteeringDictionary {
    let m = geometry.num_elements();
    let mut manifold = CMatrix::zeros(m, grid.len());
    for (l, &theta) in grid.angles_deg().iter().enumerate() {
        manifold.set_column(l, &steering_unchecked(geometry, theta));
    }
    SteeringDictionary {
        geometry: *geometry,
        angles_deg: grid.angles_deg().to_vec(),
        manifold,
    }
}

/// Per-sensor complex gains `g_i = a_i exp(j psi_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPhaseModel {
    pub g: CVector,
}

impl GainPhaseModel {
    pub fn identity(num_elements: usize) -> Self {
        Self {
            g: CVector::from_element(num_elements, C64::new(1.0, 0.0)),
        }
    }
}

/// Mutual coupling coefficients `b_1..b_Q` of a symmetric Toeplitz matrix.
/// Coefficients beyond `Q` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MutualCouplingModel {
    pub b: Vec<C64>,
}

impl MutualCouplingModel {
    pub const DEFAULT_ORDER: usize = 3;

    pub fn uncoupled(order: usize) -> Self {
        Self {
            b: vec![C64::new(0.0, 0.0); order],
        }
    }

    pub fn order(&self) -> usize {
        self.b.len()
    }
}

/// Array imperfection applied on the left of the steering matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationModel {
    None,
    GainPhase(GainPhaseModel),
    MutualCoupling(MutualCouplingModel),
}

impl PerturbationModel {
    /// The `M x M` perturbation matrix `G`.
    pub fn matrix(&self, num_elements: usize) -> Result<CMatrix> {
        match self {
            PerturbationModel::None => Ok(CMatrix::identity(num_elements, num_elements)),
            PerturbationModel::GainPhase(model) => {
                if model.g.len() != num_elements {
                    return Err(Error::Dimension(format!(
                        "gain vector has length {}, array has {num_elements} elements",
                        model.g.len()
                    )));
                }
                Ok(gain_phase_matrix(model))
            }
            PerturbationModel::MutualCoupling(model) => mutual_coupling_matrix(model, num_elements),
        }
    }
}

pub fn gain_phase_matrix(model: &GainPhaseModel) -> CMatrix {
    CMatrix::from_diagonal(&model.g)
}

/// Symmetric (not Hermitian) Toeplitz coupling matrix with first row
/// `[1, b_1, .., b_Q, 0, .., 0]`.
pub fn mutual_coupling_matrix(model: &MutualCouplingModel, num_elements: usize) -> Result<CMatrix> {
    let q = model.order();
    if q + 1 > num_elements {
        return Err(Error::Dimension(format!(
            "coupling order {q} exceeds M - 1 = {}",
            num_elements.saturating_sub(1)
        )));
    }
    Ok(CMatrix::from_fn(num_elements, num_elements, |i, k| {
        let lag = i.abs_diff(k);
        match lag {
            0 => C64::new(1.0, 0.0),
            l if l <= q => model.b[l - 1],
            _ => C64::new(0.0, 0.0),
        }
    }))
}

/// Draws a gain-phase realization: `g_1 = 1`, and for the remaining elements
/// `a_i = (beta_i - 0.5) sigma_a sqrt(12) + 1`,
/// `psi_i = (gamma_i - 0.5) sigma_psi sqrt(12) + phase_offset` (degrees), with
/// `beta_i, gamma_i ~ U(0, 1)`.
pub fn sample_gain_phase_truth<R: Rng + ?Sized>(
    num_elements: usize,
    sigma_a: f64,
    sigma_psi_deg: f64,
    phase_offset_deg: f64,
    rng: &mut R,
) -> Result<GainPhaseModel> {
    if sigma_a < 0.0 || sigma_psi_deg < 0.0 {
        return Err(Error::Parameter("gain/phase spreads must be non-negative".into()));
    }
    let mut g = CVector::from_element(num_elements, C64::new(1.0, 0.0));
    for i in 1..num_elements {
        let beta: f64 = rng.random();
        let gamma: f64 = rng.random();
        g[i] = gain_phase_entry(beta, gamma, sigma_a, sigma_psi_deg, phase_offset_deg);
    }
    Ok(GainPhaseModel { g })
}

/// The affine map from the two uniform draws to one complex gain.
pub fn gain_phase_entry(
    beta: f64,
    gamma: f64,
    sigma_a: f64,
    sigma_psi_deg: f64,
    phase_offset_deg: f64,
) -> C64 {
    let root12 = 12f64.sqrt();
    let amplitude = (beta - 0.5) * sigma_a * root12 + 1.0;
    let phase_deg = (gamma - 0.5) * sigma_psi_deg * root12 + phase_offset_deg;
    C64::from_polar(amplitude, phase_deg.to_radians())
}

/// Mean squared magnitude of the matrix entries.
pub fn mean_power(x: &CMatrix) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Per-entry noise standard deviation giving `snr_db` relative to the mean
/// power of `clean_signal`. An infinite SNR yields zero.
pub fn noise_scale_for_snr(clean_signal: &CMatrix, snr_db: f64) -> Result<f64> {
    let power = mean_power(clean_signal);
    if !(power > 0.0) {
        return Err(Error::Domain("clean signal has zero power".into()));
    }
    if snr_db.is_nan() {
        return Err(Error::Domain("SNR is NaN".into()));
    }
    Ok((power / 10f64.powf(snr_db / 10.0)).sqrt())
}

/// One circular complex Gaussian draw with variance `variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * scale, im * scale)
}

/// Measurement matrix `Y` (M x T).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub y: CMatrix,
}

impl SnapshotSet {
    pub fn new(y: CMatrix) -> Result<Self> {
        if y.ncols() == 0 {
            return Err(Error::Parameter("snapshot set needs T >= 1".into()));
        }
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Domain("snapshot matrix has non-finite entries".into()));
        }
        Ok(Self { y })
    }

    pub fn num_snapshots(&self) -> usize {
        self.y.ncols()
    }
}

/// Source amplitudes, one row per atom, with the set of active rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceMatrix {
    pub values: CMatrix,
    pub support: Vec<usize>,
}

/// Output of [`generate_snapshots`].
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub snapshots: SnapshotSet,
    /// Ground-truth source samples, K x T, row k is the source at `true_angles_deg[k]`.
    pub sources: SourceMatrix,
    pub perturbation_matrix: CMatrix,
    /// Noise standard deviation actually applied.
    pub noise_sigma: f64,
}

/// Simulates `Y = G A(theta) S + N`.
///
/// Sources are unit-variance circular Gaussian; the noise level is set from
/// the unperturbed product `A S`.
pub fn generate_snapshots<R: Rng + ?Sized>(
    geometry: &ArrayGeometry,
    true_angles_deg: &[f64],
    perturbation: &PerturbationModel,
    num_snapshots: usize,
    snr_db: f64,
    rng: &mut R,
) -> Result<SyntheticData> {
    if true_angles_deg.is_empty() {
        return Err(Error::Parameter("need at least one source".into()));
    }
    if num_snapshots == 0 {
        return Err(Error::Parameter("need at least one snapshot".into()));
    }
    let m = geometry.num_elements();
    let k = true_angles_deg.len();
    let mut steering = CMatrix::zeros(m, k);
    for (i, &theta) in true_angles_deg.iter().enumerate() {
        steering.set_column(i, &steering_vector(geometry, theta)?);
    }
    let g = perturbation.matrix(m)?;
    let sources = CMatrix::from_fn(k, num_snapshots, |_, _| complex_gaussian(rng, 1.0));
    let clean = &steering * &sources;
    let sigma = noise_scale_for_snr(&clean, snr_db)?;
    let mut y = &g * &clean;
    if sigma > 0.0 {
        let variance = sigma * sigma;
        for v in y.iter_mut() {
            *v += complex_gaussian(rng, variance);
        }
    }
    Ok(SyntheticData {
        snapshots: SnapshotSet::new(y)?,
        sources: SourceMatrix {
            values: sources,
            support: (0..k).collect(),
        },
        perturbation_matrix: g,
        noise_sigma: sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn steering_examples() {
        let g4 = ArrayGeometry::new(4, 0.5).unwrap();
        let a = steering_vector(&g4, 0.0).unwrap();
        for v in a.iter() {
            assert_abs_diff_eq!(v.re, 1.0);
            assert_abs_diff_eq!(v.im, 0.0);
        }

        let g2 = ArrayGeometry::new(2, 0.5).unwrap();
        let a = steering_vector(&g2, 90.0).unwrap();
        assert_eq!(a[0], c(1.0, 0.0));
        assert_abs_diff_eq!((a[1] - c(-1.0, 0.0)).norm(), 0.0, epsilon = 1e-15);

        let g3 = ArrayGeometry::new(3, 0.5).unwrap();
        let a = steering_vector(&g3, 30.0).unwrap();
        let expect = [c(1.0, 0.0), c(0.0, -1.0), c(-1.0, 0.0)];
        for (v, e) in a.iter().zip(expect) {
            assert_abs_diff_eq!((v - e).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn steering_rejects_out_of_range() {
        let g = ArrayGeometry::new(4, 0.5).unwrap();
        assert!(matches!(steering_vector(&g, 90.5), Err(Error::Domain(_))));
        assert!(matches!(steering_vector(&g, -91.0), Err(Error::Domain(_))));
    }

    #[test]
    fn geometry_validation() {
        assert!(ArrayGeometry::new(1, 0.5).is_err());
        assert!(ArrayGeometry::new(4, 0.0).is_err());
        assert!(ArrayGeometry::new(4, f64::INFINITY).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(AngleGrid::new(vec![]).is_err());
        assert!(AngleGrid::new(vec![0.0, 0.0]).is_err());
        assert!(AngleGrid::new(vec![-95.0, 0.0]).is_err());
        assert!(AngleGrid::uniform(7.0).is_err());
        let grid = AngleGrid::uniform(2.0).unwrap();
        assert_eq!(grid.len(), 91);
        assert_eq!(grid.angles_deg()[0], -90.0);
        assert_eq!(grid.angles_deg()[45], 0.0);
        assert_eq!(grid.angles_deg()[90], 90.0);
    }

    #[test]
    fn dictionary_shapes_and_columns() {
        let g = ArrayGeometry::new(4, 0.5).unwrap();
        let d = build_dictionary(&g, &AngleGrid::new(vec![0.0]).unwrap());
        assert_eq!(d.manifold().shape(), (4, 1));
        assert!(d.manifold().iter().all(|v| *v == c(1.0, 0.0)));

        let g25 = ArrayGeometry::new(25, 0.5).unwrap();
        let grid = AngleGrid::uniform(2.0).unwrap();
        let d = build_dictionary(&g25, &grid);
        assert_eq!(d.manifold().shape(), (25, 91));
        for v in d.manifold().iter() {
            assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-14);
        }
        let again = build_dictionary(&g25, &grid);
        assert_eq!(d, again);
    }

    #[test]
    fn set_angle_rebuilds_column_and_clamps() {
        let g = ArrayGeometry::new(6, 0.5).unwrap();
        let mut d = build_dictionary(&g, &AngleGrid::uniform(10.0).unwrap());
        d.set_angle(3, 12.34);
        assert_eq!(d.manifold().column(3), steering_vector(&g, 12.34).unwrap());
        d.set_angle(0, -120.0);
        assert_eq!(d.angles_deg()[0], -90.0);
        assert_eq!(d.manifold().column(0), steering_vector(&g, -90.0).unwrap());
    }

    #[test]
    fn gain_phase_matrix_examples() {
        let id = gain_phase_matrix(&GainPhaseModel::identity(3));
        assert_eq!(id, CMatrix::identity(3, 3));
        let model = GainPhaseModel {
            g: CVector::from_vec(vec![c(1.0, 0.0), C64::from_polar(2.0, PI / 2.0)]),
        };
        let m = gain_phase_matrix(&model);
        assert_abs_diff_eq!((m[(1, 1)] - c(0.0, 2.0)).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(m[(0, 1)], c(0.0, 0.0));
        assert_eq!(m[(1, 0)], c(0.0, 0.0));
        assert!(matches!(
            PerturbationModel::GainPhase(model).matrix(3),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn mutual_coupling_examples() {
        let zero = mutual_coupling_matrix(&MutualCouplingModel::uncoupled(3), 5).unwrap();
        assert_eq!(zero, CMatrix::identity(5, 5));

        let b = vec![c(0.12, 0.308), c(0.064, 0.076), c(0.144, 0.048)];
        let model = MutualCouplingModel { b: b.clone() };
        let m5 = mutual_coupling_matrix(&model, 5).unwrap();
        let row: Vec<C64> = m5.row(0).iter().copied().collect();
        assert_eq!(row, vec![c(1.0, 0.0), b[0], b[1], b[2], c(0.0, 0.0)]);
        assert_eq!(m5, m5.transpose());

        let m4 = mutual_coupling_matrix(&model, 4).unwrap();
        assert_eq!(m4[(3, 0)], b[2]);
        assert_eq!(m4[(0, 3)], b[2]);

        assert!(matches!(
            mutual_coupling_matrix(&model, 3),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn gain_phase_truth_draws() {
        let centered = gain_phase_entry(0.5, 0.5, 0.1, 2.0, 0.0);
        assert_abs_diff_eq!(centered.norm(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(centered.arg(), 0.0, epsilon = 1e-15);

        // Endpoints of the affine map of U(0, 1): 1 -/+ 0.05 sqrt(12).
        let lo = gain_phase_entry(0.0, 0.5, 0.1, 2.0, 0.0).norm();
        let hi = gain_phase_entry(1.0, 0.5, 0.1, 2.0, 0.0).norm();
        assert_abs_diff_eq!(lo, 0.826_794_919_243_112_3, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 1.173_205_080_756_887_7, epsilon = 1e-12);

        let offset = gain_phase_entry(0.5, 0.5, 0.1, 2.0, 1.0);
        assert_abs_diff_eq!(offset.arg(), 1f64.to_radians(), epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let model = sample_gain_phase_truth(25, 0.1, 2.0, 1.0, &mut rng).unwrap();
            assert_eq!(model.g[0], c(1.0, 0.0));
            for v in model.g.iter().skip(1) {
                assert!(v.norm() >= lo - 1e-12 && v.norm() <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn noise_scale_examples() {
        let ones = CMatrix::from_element(3, 4, c(1.0, 0.0));
        assert_abs_diff_eq!(noise_scale_for_snr(&ones, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            noise_scale_for_snr(&ones, 20.0).unwrap().powi(2),
            0.01,
            epsilon = 1e-15
        );
        assert_eq!(noise_scale_for_snr(&ones, f64::INFINITY).unwrap(), 0.0);
        assert!(matches!(
            noise_scale_for_snr(&CMatrix::zeros(2, 2), 10.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn noiseless_single_source_is_exact() {
        let g = ArrayGeometry::new(8, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data =
            generate_snapshots(&g, &[17.3], &PerturbationModel::None, 1, f64::INFINITY, &mut rng)
                .unwrap();
        let s = data.sources.values[(0, 0)];
        let expect = steering_vector(&g, 17.3).unwrap() * s;
        assert_eq!(data.snapshots.y.column(0), expect);
        assert_eq!(data.noise_sigma, 0.0);
    }

    #[test]
    fn default_scenario_shape() {
        let g = ArrayGeometry::new(25, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = generate_snapshots(
            &g,
            &[-12.5, 43.85, 76.8],
            &PerturbationModel::None,
            5,
            10.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(data.snapshots.y.shape(), (25, 5));
        assert_eq!(data.sources.values.shape(), (3, 5));
    }

    #[test]
    fn realized_snr_matches_request() {
        // 25 x 400 = 10^4 noise entries.
        let g = ArrayGeometry::new(25, 0.5).unwrap();
        for (seed, snr) in [(1u64, 0.0), (2, 10.0), (3, 25.0)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gains = sample_gain_phase_truth(25, 0.1, 2.0, 1.0, &mut rng).unwrap();
            let pert = PerturbationModel::GainPhase(gains);
            let angles = [-12.5, 43.85, 76.8];
            let mut clean_rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let noisy = generate_snapshots(&g, &angles, &pert, 400, snr, &mut clean_rng).unwrap();
            let mut clean_rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let clean =
                generate_snapshots(&g, &angles, &pert, 400, f64::INFINITY, &mut clean_rng).unwrap();
            let noise = &noisy.snapshots.y - &clean.snapshots.y;
            let mut steering = CMatrix::zeros(25, 3);
            for (i, &t) in angles.iter().enumerate() {
                steering.set_column(i, &steering_vector(&g, t).unwrap());
            }
            let signal_power = mean_power(&(&steering * &clean.sources.values));
            let realized = 10.0 * (signal_power / mean_power(&noise)).log10();
            assert!((realized - snr).abs() < 0.5, "requested {snr}, realized {realized}");
        }
    }
}
