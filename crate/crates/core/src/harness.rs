//! Monte Carlo SNR sweeps over registered estimators.
//!
//! Every `(snr index, trial)` cell gets its own random stream (see
//! [`trial_rng`]), so results do not depend on how cells are scheduled
//! across threads.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::array::{
    generate_snapshots, sample_gain_phase_truth, AngleGrid, ArrayGeometry, MutualCouplingModel,
    PerturbationModel,
};
use crate::estimators::{ids, DoaEstimator, EstimationInput, EstimatorRegistry, EstimatorSettings};
use crate::learning::{LearningConfig, PerturbationKind};
use crate::metrics::rmse_deg;
use crate::music::DEFAULT_SCAN_STEP_DEG;
use crate::{CMatrix, Error, Result, C64};

pub const DETAIL_HEADER: &str = "experiment,algorithm,snr_db,trial,mse_deg,elapsed_s,seed";
pub const SUMMARY_HEADER: &str = "experiment,algorithm,snr_db,mean_mse_deg,trials";

/// Which array imperfection the dataset carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    GainPhase,
    MutualCoupling,
    None,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::GainPhase => "gain-phase",
            Experiment::MutualCoupling => "mutual",
            Experiment::None => "none",
        }
    }

    pub fn perturbation_kind(&self) -> PerturbationKind {
        match self {
            Experiment::GainPhase => PerturbationKind::GainPhase,
            Experiment::MutualCoupling => PerturbationKind::MutualCoupling,
            Experiment::None => PerturbationKind::None,
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gain-phase" | "gain_phase" => Ok(Experiment::GainPhase),
            "mutual" | "mutual-coupling" | "mutual_coupling" => Ok(Experiment::MutualCoupling),
            "none" => Ok(Experiment::None),
            other => Err(Error::Config(format!(
                "unknown experiment `{other}` (expected gain-phase, mutual or none)"
            ))),
        }
    }
}

/// Declarative description of one SNR sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub num_elements: usize,
    pub d_over_lambda: f64,
    pub true_angles_deg: Vec<f64>,
    pub grid_step_deg: f64,
    pub snr_list_db: Vec<f64>,
    pub num_snapshots: usize,
    pub trials: usize,
    pub seed: u64,
    pub algorithms: Vec<String>,
    /// Learner for the multi-snapshot variant; its `perturbation_kind`
    /// follows `experiment`.
    pub learning: LearningConfig,
    /// Angle step used by the one-snapshot learner.
    pub mu_theta_single: f64,
    pub sigma_a: f64,
    pub sigma_psi_deg: f64,
    pub phase_offset_deg: f64,
    pub b_true: Vec<C64>,
    pub music_scan_step_deg: f64,
}

/// Coupling coefficients of the mutual-coupling experiment.
pub fn default_coupling() -> Vec<C64> {
    vec![
        C64::new(4.0 * 0.03, 4.0 * 0.077),
        C64::new(4.0 * 0.016, 4.0 * 0.019),
        C64::new(4.0 * 0.036, 4.0 * 0.012),
    ]
}

impl ExperimentConfig {
    /// Built-in defaults for each experiment.
    pub fn defaults(experiment: Experiment) -> Self {
        let (mu_theta_multi, mu_theta_single) = match experiment {
            Experiment::GainPhase | Experiment::None => (1e-5, 2e-5),
            Experiment::MutualCoupling => (5e-4, 2e-5),
        };
        Self {
            experiment,
            num_elements: 25,
            d_over_lambda: 0.5,
            true_angles_deg: vec![-12.5, 43.85, 76.8],
            grid_step_deg: 2.0,
            snr_list_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            num_snapshots: 5,
            trials: 50,
            seed: 1,
            algorithms: ids::BUILTIN.iter().map(|s| s.to_string()).collect(),
            learning: LearningConfig {
                outer_iters: 20,
                angle_iters: 40,
                perturb_iters: 40,
                mu_theta: mu_theta_multi,
                mu_g: 1e-4,
                mu_b: 1e-4,
                perturbation_kind: experiment.perturbation_kind(),
                coupling_order: MutualCouplingModel::DEFAULT_ORDER,
                backtracking: true,
            },
            mu_theta_single,
            sigma_a: 0.1,
            sigma_psi_deg: 2.0,
            phase_offset_deg: 1.0,
            b_true: default_coupling(),
            music_scan_step_deg: DEFAULT_SCAN_STEP_DEG,
        }
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(self.num_elements, self.d_over_lambda)
    }

    pub fn grid(&self) -> Result<AngleGrid> {
        AngleGrid::uniform(self.grid_step_deg)
    }

    pub fn estimator_settings(&self) -> EstimatorSettings {
        let mut multi = self.learning.clone();
        multi.perturbation_kind = self.experiment.perturbation_kind();
        let single = LearningConfig { mu_theta: self.mu_theta_single, ..multi.clone() };
        EstimatorSettings {
            learning_multi: multi,
            learning_single: single,
            music_scan_step_deg: self.music_scan_step_deg,
        }
    }

    pub fn validate(&self, registry: &EstimatorRegistry) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        self.geometry().map_err(|e| Error::Config(e.to_string()))?;
        self.grid().map_err(|e| Error::Config(e.to_string()))?;
        if self.trials == 0 {
            return fail("trials must be >= 1".into());
        }
        if self.num_snapshots == 0 {
            return fail("snapshots must be >= 1".into());
        }
        if self.snr_list_db.is_empty() {
            return fail("SNR list is empty".into());
        }
        if self.snr_list_db.iter().any(|s| s.is_nan()) {
            return fail("SNR list contains NaN".into());
        }
        let k = self.true_angles_deg.len();
        if k == 0 {
            return fail("need at least one true angle".into());
        }
        if k >= self.num_elements {
            return fail(format!("{k} sources need more than {} elements", self.num_elements));
        }
        if k > crate::metrics::MAX_MATCH_SIZE {
            return fail(format!("at most {} sources supported", crate::metrics::MAX_MATCH_SIZE));
        }
        if self.true_angles_deg.iter().any(|a| !(-90.0..=90.0).contains(a)) {
            return fail("true angles must lie in [-90, 90]".into());
        }
        if self.algorithms.is_empty() {
            return fail("no algorithms selected".into());
        }
        for (i, id) in self.algorithms.iter().enumerate() {
            if !registry.contains(id) {
                return fail(format!(
                    "algorithm `{id}` is not registered (available: {})",
                    registry.ids().collect::<Vec<_>>().join(", ")
                ));
            }
            if self.algorithms[..i].contains(id) {
                return fail(format!("algorithm `{id}` listed twice"));
            }
        }
        if self.sigma_a < 0.0 || self.sigma_psi_deg < 0.0 || !self.phase_offset_deg.is_finite() {
            return fail("gain-phase spreads must be non-negative".into());
        }
        if self.experiment == Experiment::MutualCoupling && self.b_true.len() + 1 > self.num_elements {
            return fail("too many coupling coefficients for the array size".into());
        }
        if !(self.music_scan_step_deg > 0.0) {
            return fail("music scan step must be positive".into());
        }
        if !self.mu_theta_single.is_finite() || self.mu_theta_single < 0.0 {
            return fail("mu_theta_single must be finite and >= 0".into());
        }
        self.estimator_settings().learning_multi.validate()?;
        Ok(())
    }

    /// Resolved configuration as ordered `key=value` pairs.
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let complex = self
            .b_true
            .iter()
            .map(|c| format!("{}:{}", c.re, c.im))
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("experiment", self.experiment.as_str().to_string()),
            ("num_elements", self.num_elements.to_string()),
            ("d_over_lambda", self.d_over_lambda.to_string()),
            ("true_angles_deg", list(&self.true_angles_deg)),
            ("grid_step_deg", self.grid_step_deg.to_string()),
            ("snr_list_db", list(&self.snr_list_db)),
            ("snapshots", self.num_snapshots.to_string()),
            ("trials", self.trials.to_string()),
            ("seed", self.seed.to_string()),
            ("algorithms", self.algorithms.join(",")),
            ("outer_iters", self.learning.outer_iters.to_string()),
            ("angle_iters", self.learning.angle_iters.to_string()),
            ("perturb_iters", self.learning.perturb_iters.to_string()),
            ("mu_theta", self.learning.mu_theta.to_string()),
            ("mu_theta_single", self.mu_theta_single.to_string()),
            ("mu_g", self.learning.mu_g.to_string()),
            ("mu_b", self.learning.mu_b.to_string()),
            ("coupling_order", self.learning.coupling_order.to_string()),
            ("backtracking", self.learning.backtracking.to_string()),
            ("sigma_a", self.sigma_a.to_string()),
            ("sigma_psi_deg", self.sigma_psi_deg.to_string()),
            ("phase_offset_deg", self.phase_offset_deg.to_string()),
            ("b_true", complex),
            ("music_scan_step_deg", self.music_scan_step_deg.to_string()),
        ]
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_key_values() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Inverse of [`render`](Self::render). Keys absent from `text` keep the
    /// experiment defaults.
    pub fn parse_rendered(text: &str) -> Result<Self> {
        let pairs: Vec<(&str, &str)> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_once('=')
                    .ok_or_else(|| Error::Config(format!("malformed config line `{l}`")))
            })
            .collect::<Result<_>>()?;
        let experiment = pairs
            .iter()
            .find(|(k, _)| *k == "experiment")
            .map(|(_, v)| v.parse())
            .transpose()?
            .unwrap_or(Experiment::GainPhase);
        let mut config = Self::defaults(experiment);
        for (k, v) in pairs {
            config.set(k, v)?;
        }
        Ok(config)
    }

    /// Overrides one field by its rendered key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => {
                self.experiment = value.parse()?;
                self.learning.perturbation_kind = self.experiment.perturbation_kind();
            }
            "num_elements" => self.num_elements = parse_num(key, value)?,
            "d_over_lambda" => self.d_over_lambda = parse_num(key, value)?,
            "true_angles_deg" => self.true_angles_deg = parse_list(key, value)?,
            "grid_step_deg" => self.grid_step_deg = parse_num(key, value)?,
            "snr_list_db" => self.snr_list_db = parse_list(key, value)?,
            "snapshots" => self.num_snapshots = parse_num(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "algorithms" => {
                self.algorithms = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "outer_iters" => self.learning.outer_iters = parse_num(key, value)?,
            "angle_iters" => self.learning.angle_iters = parse_num(key, value)?,
            "perturb_iters" => self.learning.perturb_iters = parse_num(key, value)?,
            "mu_theta" => self.learning.mu_theta = parse_num(key, value)?,
            "mu_theta_single" => self.mu_theta_single = parse_num(key, value)?,
            "mu_g" => self.learning.mu_g = parse_num(key, value)?,
            "mu_b" => self.learning.mu_b = parse_num(key, value)?,
            "coupling_order" => self.learning.coupling_order = parse_num(key, value)?,
            "backtracking" => self.learning.backtracking = parse_num(key, value)?,
            "sigma_a" => self.sigma_a = parse_num(key, value)?,
            "sigma_psi_deg" => self.sigma_psi_deg = parse_num(key, value)?,
            "phase_offset_deg" => self.phase_offset_deg = parse_num(key, value)?,
            "b_true" => {
                self.b_true = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|pair| {
                        let (re, im) = pair.split_once(':').ok_or_else(|| {
                            Error::Config(format!("b_true entry `{pair}` is not re:im"))
                        })?;
                        Ok(C64::new(parse_num(key, re)?, parse_num(key, im)?))
                    })
                    .collect::<Result<_>>()?
            }
            "music_scan_step_deg" => self.music_scan_step_deg = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for {key}")))
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

/// One (algorithm, SNR, trial) record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub algorithm: String,
    pub snr_db: f64,
    pub trial: usize,
    pub mse_deg: f64,
    pub elapsed_s: f64,
    pub seed: u64,
}

/// Mean RMSE of one algorithm at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub algorithm: String,
    pub snr_db: f64,
    pub mean_mse_deg: f64,
    pub trials: usize,
}

/// Random stream for one cell.
///
/// ChaCha20 keyed by the master seed (via `seed_from_u64`), with the 64-bit
/// stream id `(snr_index << 32) | trial`.
pub fn trial_rng(seed: u64, snr_index: usize, trial: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((snr_index as u64) << 32) | (trial as u64 & 0xffff_ffff));
    rng
}

/// FNV-1a over the bit patterns of the entries.
pub fn dataset_checksum(y: &CMatrix) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in y.iter() {
        for bits in [v.re.to_bits(), v.im.to_bits()] {
            for byte in bits.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}

/// Dataset for one cell plus the truth it was built from.
#[derive(Debug, Clone)]
pub struct TrialDataset {
    pub y: CMatrix,
    pub perturbation: PerturbationModel,
    pub checksum: u64,
}

/// A validated configuration with its estimators instantiated.
pub struct ExperimentRunner {
    config: ExperimentConfig,
    geometry: ArrayGeometry,
    grid: AngleGrid,
    estimators: Vec<Box<dyn DoaEstimator>>,
}

impl ExperimentRunner {
    pub fn new(config: ExperimentConfig, registry: &EstimatorRegistry) -> Result<Self> {
        config.validate(registry)?;
        let settings = config.estimator_settings();
        let estimators = config
            .algorithms
            .iter()
            .map(|id| registry.create(id, &settings))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            geometry: config.geometry()?,
            grid: config.grid()?,
            config,
            estimators,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn dataset(&self, snr_index: usize, trial: usize) -> Result<TrialDataset> {
        let c = &self.config;
        let snr_db = *c
            .snr_list_db
            .get(snr_index)
            .ok_or_else(|| Error::Parameter(format!("SNR index {snr_index} out of range")))?;
        let mut rng = trial_rng(c.seed, snr_index, trial);
        let perturbation = match c.experiment {
            Experiment::GainPhase => PerturbationModel::GainPhase(sample_gain_phase_truth(
                c.num_elements,
                c.sigma_a,
                c.sigma_psi_deg,
                c.phase_offset_deg,
                &mut rng,
            )?),
            Experiment::MutualCoupling => {
                PerturbationModel::MutualCoupling(MutualCouplingModel { b: c.b_true.clone() })
            }
            Experiment::None => PerturbationModel::None,
        };
        let data = generate_snapshots(
            &self.geometry,
            &c.true_angles_deg,
            &perturbation,
            c.num_snapshots,
            snr_db,
            &mut rng,
        )?;
        let y = data.snapshots.y;
        Ok(TrialDataset { checksum: dataset_checksum(&y), y, perturbation })
    }

    /// Runs every estimator on the same dataset.
    pub fn run_trial(&self, snr_index: usize, trial: usize) -> Result<Vec<ResultRow>> {
        let c = &self.config;
        let dataset = self.dataset(snr_index, trial)?;
        log::debug!(
            "snr[{snr_index}]={} trial={trial} dataset checksum {:016x}",
            c.snr_list_db[snr_index],
            dataset.checksum
        );
        let input = EstimationInput {
            snapshots: &dataset.y,
            geometry: &self.geometry,
            grid: &self.grid,
            num_sources: c.true_angles_deg.len(),
        };
        self.estimators
            .iter()
            .map(|estimator| {
                let start = Instant::now();
                let estimate = estimator.estimate(&input)?;
                let elapsed_s = start.elapsed().as_secs_f64();
                if estimate.degenerate {
                    log::warn!(
                        "{} returned a padded estimate at snr[{snr_index}] trial {trial}",
                        estimator.id()
                    );
                }
                Ok(ResultRow {
                    experiment: c.experiment.as_str().to_string(),
                    algorithm: estimator.id().to_string(),
                    snr_db: c.snr_list_db[snr_index],
                    trial,
                    mse_deg: rmse_deg(&estimate.angles_deg, &c.true_angles_deg)?,
                    elapsed_s,
                    seed: c.seed,
                })
            })
            .collect()
    }

    /// All cells, at most `jobs` at a time, rows sorted by
    /// (algorithm order, SNR order, trial).
    pub fn run(&self, jobs: usize) -> Result<ExperimentOutput> {
        let c = &self.config;
        let cells: Vec<(usize, usize)> = (0..c.snr_list_db.len())
            .flat_map(|s| (0..c.trials).map(move |t| (s, t)))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
        let per_cell: Vec<Vec<ResultRow>> = pool.install(|| {
            cells
                .par_iter()
                .map(|&(s, t)| self.run_trial(s, t))
                .collect::<Result<_>>()
        })?;
        let mut rows: Vec<(usize, usize, ResultRow)> = Vec::new();
        for (&(s, _), cell) in cells.iter().zip(per_cell) {
            for (a, row) in cell.into_iter().enumerate() {
                rows.push((a, s, row));
            }
        }
        rows.sort_by_key(|(a, s, row)| (*a, *s, row.trial));
        let rows: Vec<ResultRow> = rows.into_iter().map(|(_, _, r)| r).collect();
        let summary = summarize(&rows);
        Ok(ExperimentOutput { rows, summary })
    }
}

/// Detail rows and per-(algorithm, SNR) means.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    /// Mean RMSE for one algorithm at one SNR, if present.
    pub fn mean_mse(&self, algorithm: &str, snr_db: f64) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.algorithm == algorithm && r.snr_db == snr_db)
            .map(|r| r.mean_mse_deg)
    }
}

/// Arithmetic mean of per-trial RMSE per (algorithm, SNR), in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out: Vec<(SummaryRow, f64)> = Vec::new();
    for row in rows {
        match out
            .iter_mut()
            .find(|(s, _)| s.algorithm == row.algorithm && s.snr_db == row.snr_db)
        {
            Some((s, sum)) => {
                s.trials += 1;
                *sum += row.mse_deg;
            }
            None => out.push((
                SummaryRow {
                    experiment: row.experiment.clone(),
                    algorithm: row.algorithm.clone(),
                    snr_db: row.snr_db,
                    mean_mse_deg: 0.0,
                    trials: 1,
                },
                row.mse_deg,
            )),
        }
    }
    out.into_iter()
        .map(|(mut s, sum)| {
            s.mean_mse_deg = sum / s.trials as f64;
            s
        })
        .collect()
}

/// Validates the configuration, runs it, and returns the results.
pub fn run_experiment(
    config: &ExperimentConfig,
    registry: &EstimatorRegistry,
    jobs: usize,
) -> Result<ExperimentOutput> {
    ExperimentRunner::new(config.clone(), registry)?.run(jobs)
}

/// Single cell without constructing a runner by hand.
pub fn run_trial(
    config: &ExperimentConfig,
    registry: &EstimatorRegistry,
    snr_index: usize,
    trial: usize,
) -> Result<Vec<ResultRow>> {
    ExperimentRunner::new(config.clone(), registry)?.run_trial(snr_index, trial)
}

fn write_rows<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_detail_csv<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    write_rows(writer, rows)
}

pub fn write_summary_csv<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    write_rows(writer, rows)
}

pub fn write_detail_file(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_detail_csv(std::io::BufWriter::new(std::fs::File::create(path)?), rows)
}

pub fn write_summary_file(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_summary_csv(std::io::BufWriter::new(std::fs::File::create(path)?), rows)
}

/// Human-readable table: one row per algorithm, one column per SNR.
pub fn format_summary_table(summary: &[SummaryRow]) -> String {
    let mut snrs: Vec<f64> = Vec::new();
    let mut algorithms: Vec<&str> = Vec::new();
    for r in summary {
        if !snrs.contains(&r.snr_db) {
            snrs.push(r.snr_db);
        }
        if !algorithms.contains(&r.algorithm.as_str()) {
            algorithms.push(&r.algorithm);
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<12}", "algorithm");
    for s in &snrs {
        let _ = write!(out, " {:>10}", format!("{s} dB"));
    }
    out.push('\n');
    for a in algorithms {
        let _ = write!(out, "{a:<12}");
        for &s in &snrs {
            match summary.iter().find(|r| r.algorithm == a && r.snr_db == s) {
                Some(r) => {
                    let _ = write!(out, " {:>10.4}", r.mean_mse_deg);
                }
                None => {
                    let _ = write!(out, " {:>10}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
