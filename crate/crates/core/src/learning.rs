//! Parametric dictionary learning: alternating sparse coding with
//! steepest-descent refinement of the steering angles and the array
//! perturbation parameters.
//!
//! The cost is `J = sum_t ||y(t) - G A(theta) s(t)||^2`. Every update adds
//! `mu` times a *correction* equal to minus one half of the real gradient of
//! `J` (for complex parameters: minus the conjugate Wirtinger derivative
//! `dJ/dz*`), so the corrections are descent directions by construction.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::array::{
    build_dictionary, AngleGrid, ArrayGeometry, GainPhaseModel, MutualCouplingModel,
    PerturbationModel, SteeringDictionary,
};
use crate::sparse::{effective_dictionary, somp, SparseSolution};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Which perturbation parameters are learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerturbationKind {
    None,
    GainPhase,
    MutualCoupling,
}

impl PerturbationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PerturbationKind::None => "none",
            PerturbationKind::GainPhase => "gain-phase",
            PerturbationKind::MutualCoupling => "mutual",
        }
    }
}

impl std::str::FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PerturbationKind::None),
            "gain-phase" | "gain_phase" => Ok(PerturbationKind::GainPhase),
            "mutual" | "mutual-coupling" | "mutual_coupling" => Ok(PerturbationKind::MutualCoupling),
            other => Err(Error::Config(format!("unknown perturbation kind `{other}`"))),
        }
    }
}

/// Iteration counts and step sizes for [`run_mdl`].
#[derive(Debug, Clone, PartialEq)]
pub struct LearningConfig {
    /// Outer iterations (sparse coding + angle loop + perturbation loop).
    pub outer_iters: usize,
    pub angle_iters: usize,
    pub perturb_iters: usize,
    pub mu_theta: f64,
    pub mu_g: f64,
    pub mu_b: f64,
    pub perturbation_kind: PerturbationKind,
    /// Number of learned coupling coefficients.
    pub coupling_order: usize,
    /// Halve the step size instead of accepting an inner step that raises `J`.
    pub backtracking: bool,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            outer_iters: 20,
            angle_iters: 40,
            perturb_iters: 40,
            mu_theta: 1e-5,
            mu_g: 1e-4,
            mu_b: 1e-4,
            perturbation_kind: PerturbationKind::GainPhase,
            coupling_order: MutualCouplingModel::DEFAULT_ORDER,
            backtracking: true,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, mu) in [("mu_theta", self.mu_theta), ("mu_g", self.mu_g), ("mu_b", self.mu_b)] {
            if !mu.is_finite() || mu < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {mu}")));
            }
        }
        if self.perturbation_kind == PerturbationKind::MutualCoupling && self.coupling_order == 0 {
            return Err(Error::Config("coupling order must be >= 1".into()));
        }
        Ok(())
    }

    fn initial_perturbation(&self, num_elements: usize) -> Result<PerturbationModel> {
        Ok(match self.perturbation_kind {
            PerturbationKind::None => PerturbationModel::None,
            PerturbationKind::GainPhase => {
                PerturbationModel::GainPhase(GainPhaseModel::identity(num_elements))
            }
            PerturbationKind::MutualCoupling => {
                if self.coupling_order + 1 > num_elements {
                    return Err(Error::Config(format!(
                        "coupling order {} exceeds M - 1 = {}",
                        self.coupling_order,
                        num_elements - 1
                    )));
                }
                PerturbationModel::MutualCoupling(MutualCouplingModel::uncoupled(self.coupling_order))
            }
        })
    }
}

/// Learner state between steps.
#[derive(Debug, Clone)]
pub struct MdlState {
    pub dictionary: SteeringDictionary,
    pub perturbation: PerturbationModel,
    pub solution: SparseSolution,
    /// `J` after every completed outer iteration.
    pub cost_history: Vec<f64>,
}

impl MdlState {
    pub fn num_elements(&self) -> usize {
        self.dictionary.geometry().num_elements()
    }

    pub fn perturbation_matrix(&self) -> Result<CMatrix> {
        self.perturbation.matrix(self.num_elements())
    }

    /// Current angles of the support atoms, in support order.
    pub fn support_angles_deg(&self) -> Vec<f64> {
        self.solution
            .support
            .iter()
            .map(|&l| self.dictionary.angles_deg()[l])
            .collect()
    }

    pub fn cost(&self, y: &CMatrix) -> Result<f64> {
        cost(
            y,
            &self.perturbation_matrix()?,
            self.dictionary.manifold(),
            &self.solution.coefficients,
        )
    }
}

/// `||Y - G A S||_F^2`.
pub fn cost(y: &CMatrix, g: &CMatrix, manifold: &CMatrix, s: &CMatrix) -> Result<f64> {
    if g.ncols() != manifold.nrows() || manifold.ncols() != s.nrows() {
        return Err(Error::Dimension("G, A, S do not chain".into()));
    }
    if y.nrows() != g.nrows() || y.ncols() != s.ncols() {
        return Err(Error::Dimension(format!(
            "Y is {:?}, model is {}x{}",
            y.shape(),
            g.nrows(),
            s.ncols()
        )));
    }
    Ok((y - g * (manifold * s)).norm_squared())
}

/// Derivative helper `[0, cos(theta), 2 cos(theta), .., (M-1) cos(theta)]`.
///
/// The steering phase of element `m` is `-2 pi (d/lambda) m sin(theta)`, so
/// `da_m/dtheta = -j 2 pi (d/lambda) * weights[m] * a_m` with theta in radians.
pub fn angle_derivative_weights(theta_deg: f64, num_elements: usize) -> DVector<f64> {
    let c = theta_deg.to_radians().cos();
    DVector::from_fn(num_elements, |m, _| m as f64 * c)
}

/// Angle corrections for every support atom, in support order. Radians.
///
/// `sum_t Re{c0 s_k(t) e(t)^H G (a(theta_k) .* b(theta_k))}` with
/// `c0 = j 2 pi d/lambda` and `e(t) = G A s(t) - y(t)`.
pub fn angle_corrections(
    y: &CMatrix,
    g: &CMatrix,
    dictionary: &SteeringDictionary,
    solution: &SparseSolution,
) -> Vec<f64> {
    let geometry = dictionary.geometry();
    let m = geometry.num_elements();
    let c0 = C64::new(0.0, 2.0 * PI * geometry.spacing_over_wavelength());
    let errors = g * (dictionary.manifold() * &solution.coefficients) - y;
    let errors_h = errors.adjoint();
    solution
        .support
        .iter()
        .map(|&atom| {
            let theta = dictionary.angles_deg()[atom];
            let weights = angle_derivative_weights(theta, m);
            let shaped = CVector::from_fn(m, |i, _| dictionary.manifold()[(i, atom)] * weights[i]);
            let projected = &errors_h * (g * shaped);
            (0..y.ncols())
                .map(|t| (c0 * solution.coefficients[(atom, t)] * projected[t]).re)
                .sum()
        })
        .collect()
}

/// One steepest-descent step on the support angles.
///
/// Angles are stored in degrees; the correction is a radian-space derivative
/// and is converted before it is applied. Non-support atoms are untouched.
pub fn angle_step(state: &mut MdlState, y: &CMatrix, mu_theta: f64) -> Result<()> {
    let g = state.perturbation_matrix()?;
    let corrections = angle_corrections(y, &g, &state.dictionary, &state.solution);
    for (&atom, corr) in state.solution.support.iter().zip(corrections) {
        let theta = state.dictionary.angles_deg()[atom];
        let updated = theta + (mu_theta * corr).to_degrees();
        state.dictionary.set_angle(atom, updated);
    }
    Ok(())
}

/// Gain correction `sum_t (y(t) .* conj(phi(t)) - g .* |phi(t)|^2)`.
///
/// This is the element-wise conjugate of `y* phi - g* phi* phi`.
pub fn gain_correction(y: &CMatrix, g: &CVector, phi: &CMatrix) -> CVector {
    let m = g.len();
    CVector::from_fn(m, |i, _| {
        (0..y.ncols())
            .map(|t| {
                let p = phi[(i, t)];
                y[(i, t)] * p.conj() - g[i] * p.norm_sqr()
            })
            .sum()
    })
}

/// Applies one gain update in place.
pub fn gain_step(state: &mut MdlState, y: &CMatrix, mu_g: f64) -> Result<()> {
    let phi = state.dictionary.manifold() * &state.solution.coefficients;
    let PerturbationModel::GainPhase(model) = &mut state.perturbation else {
        return Err(Error::Parameter("gain step requires a gain-phase model".into()));
    };
    let correction = gain_correction(y, &model.g, &phi);
    model.g += correction * C64::new(mu_g, 0.0);
    Ok(())
}

/// Jacobian of `omega = G_mutual(b) phi` with respect to `b`: a `Q x M` matrix
/// with `Psi[i][j] = phi[j - i] + phi[j + i]` (1-based `i`, out-of-range
/// terms zero).
pub fn psi_matrix(phi: &CVector, order: usize) -> Result<CMatrix> {
    let m = phi.len();
    if order >= m {
        return Err(Error::Dimension(format!(
            "coupling order {order} must be below M = {m}"
        )));
    }
    Ok(CMatrix::from_fn(order, m, |row, j| {
        let lag = row + 1;
        let mut v = C64::new(0.0, 0.0);
        if j >= lag {
            v += phi[j - lag];
        }
        if j + lag < m {
            v += phi[j + lag];
        }
        v
    }))
}

/// Coupling correction `sum_t conj(Psi(t)) (y(t) - omega(t))`, i.e. the
/// conjugate of `Psi(t) (y(t) - omega(t))*`.
pub fn mutual_correction(y: &CMatrix, model: &MutualCouplingModel, phi: &CMatrix) -> Result<CVector> {
    let m = y.nrows();
    let coupling = crate::array::mutual_coupling_matrix(model, m)?;
    let omega = &coupling * phi;
    let mut total = CVector::zeros(model.order());
    for t in 0..y.ncols() {
        let psi = psi_matrix(&phi.column(t).into_owned(), model.order())?;
        let residual = y.column(t) - omega.column(t);
        total += psi.conjugate() * residual;
    }
    Ok(total)
}

pub fn mutual_step(state: &mut MdlState, y: &CMatrix, mu_b: f64) -> Result<()> {
    let phi = state.dictionary.manifold() * &state.solution.coefficients;
    let PerturbationModel::MutualCoupling(model) = &mut state.perturbation else {
        return Err(Error::Parameter("mutual step requires a mutual-coupling model".into()));
    };
    let correction = mutual_correction(y, model, &phi)?;
    for (b, c) in model.b.iter_mut().zip(correction.iter()) {
        *b += c * mu_b;
    }
    Ok(())
}

/// Step-size halvings tried before an inner loop gives up.
const MAX_HALVINGS: usize = 30;

/// Runs up to `iters` steps. With backtracking enabled, any step that raises
/// `J` is rejected.
///
/// A rejected step is undone and retried at half the step size; the reduced
/// step is kept for the rest of the run. If no step size in the halving
/// sequence helps, the point is treated as stationary and the loop stops.
fn descend<F>(
    state: &mut MdlState,
    y: &CMatrix,
    mu: &mut f64,
    config: &LearningConfig,
    iters: usize,
    step: F,
) -> Result<()>
where
    F: Fn(&mut MdlState, &CMatrix, f64) -> Result<()>,
{
    if !config.backtracking {
        for _ in 0..iters {
            step(state, y, *mu)?;
        }
        return Ok(());
    }
    let mut j = state.cost(y)?;
    for _ in 0..iters {
        let start_mu = *mu;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let saved = (state.dictionary.clone(), state.perturbation.clone());
            step(state, y, *mu)?;
            let trial = state.cost(y)?;
            if trial <= j * (1.0 + 1e-12) {
                j = trial;
                accepted = true;
                break;
            }
            (state.dictionary, state.perturbation) = saved;
            *mu *= 0.5;
        }
        if !accepted {
            *mu = start_mu;
            break;
        }
    }
    Ok(())
}

/// Output of [`run_mdl`].
#[derive(Debug, Clone)]
pub struct MdlOutcome {
    pub state: MdlState,
    /// Learned angles of the final support, in support order.
    pub angles_deg: Vec<f64>,
}

/// Sparse coding against the current `G A`.
pub fn sparse_code(
    dictionary: &SteeringDictionary,
    g: &CMatrix,
    y: &CMatrix,
    k: usize,
) -> Result<SparseSolution> {
    let d = effective_dictionary(g, dictionary.manifold())?;
    somp(y, &d, k)
}

/// Runs the three-step learner starting from `G = I` and the given grid.
///
/// Each outer iteration re-codes `Y` with SOMP, then runs the angle loop and
/// the perturbation loop with the coefficients held fixed. Inner steps that
/// would raise `J` are retried with a halved step size. With zero outer
/// iterations the result is a single SOMP pass on the initial grid.
pub fn run_mdl(
    y: &CMatrix,
    geometry: &ArrayGeometry,
    initial_grid: &AngleGrid,
    k: usize,
    config: &LearningConfig,
) -> Result<MdlOutcome> {
    config.validate()?;
    if y.nrows() != geometry.num_elements() {
        return Err(Error::Dimension(format!(
            "Y has {} rows, array has {} elements",
            y.nrows(),
            geometry.num_elements()
        )));
    }
    if k > initial_grid.len() {
        return Err(Error::Parameter(format!(
            "K = {k} exceeds grid size {}",
            initial_grid.len()
        )));
    }
    let dictionary = build_dictionary(geometry, initial_grid);
    let perturbation = config.initial_perturbation(geometry.num_elements())?;
    let g = perturbation.matrix(geometry.num_elements())?;
    let solution = sparse_code(&dictionary, &g, y, k)?;
    let mut state = MdlState {
        dictionary,
        perturbation,
        solution,
        cost_history: Vec::with_capacity(config.outer_iters),
    };

    let mut mu_theta = config.mu_theta;
    let mut mu_perturb = match config.perturbation_kind {
        PerturbationKind::None => 0.0,
        PerturbationKind::GainPhase => config.mu_g,
        PerturbationKind::MutualCoupling => config.mu_b,
    };
    for outer in 0..config.outer_iters {
        if outer > 0 {
            let g = state.perturbation_matrix()?;
            state.solution = sparse_code(&state.dictionary, &g, y, k)?;
        }
        if mu_theta > 0.0 {
            descend(&mut state, y, &mut mu_theta, config, config.angle_iters, angle_step)?;
        }
        if mu_perturb > 0.0 {
            match config.perturbation_kind {
                PerturbationKind::None => {}
                PerturbationKind::GainPhase => {
                    descend(&mut state, y, &mut mu_perturb, config, config.perturb_iters, gain_step)?
                }
                PerturbationKind::MutualCoupling => {
                    descend(&mut state, y, &mut mu_perturb, config, config.perturb_iters, mutual_step)?
                }
            }
        }
        let j = state.cost(y)?;
        state.cost_history.push(j);
    }

    let angles_deg = state.support_angles_deg();
    Ok(MdlOutcome { state, angles_deg })
}
