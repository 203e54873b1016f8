//! Interchangeable DOA estimators behind one trait, looked up by name.
//!
//! The harness only ever talks to [`DoaEstimator`] trait objects created
//! through an [`EstimatorRegistry`]; adding an algorithm means registering a
//! factory under a new id.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::array::{AngleGrid, ArrayGeometry};
use crate::learning::{run_mdl, LearningConfig};
use crate::metrics::align_to;
use crate::music::music_estimate;
use crate::sparse::somp;
use crate::{CMatrix, Error, Result};

/// Everything an estimator sees for one dataset.
#[derive(Debug, Clone, Copy)]
pub struct EstimationInput<'a> {
    pub snapshots: &'a CMatrix,
    pub geometry: &'a ArrayGeometry,
    pub grid: &'a AngleGrid,
    pub num_sources: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub angles_deg: Vec<f64>,
    /// The estimator could not produce K distinct angles and padded its output.
    pub degenerate: bool,
}

pub trait DoaEstimator: Send + Sync {
    fn id(&self) -> &str;
    fn estimate(&self, input: &EstimationInput<'_>) -> Result<Estimate>;
}

/// Parameters the built-in factories draw from.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSettings {
    /// Learner used on the full snapshot block.
    pub learning_multi: LearningConfig,
    /// Learner used on one snapshot at a time.
    pub learning_single: LearningConfig,
    pub music_scan_step_deg: f64,
}

/// SOMP on the whole block, optionally followed by dictionary learning.
pub struct SompEstimator {
    id: String,
    learning: Option<LearningConfig>,
}

impl SompEstimator {
    pub fn plain() -> Self {
        Self { id: ids::SOMP.into(), learning: None }
    }

    pub fn learned(config: LearningConfig) -> Self {
        Self { id: ids::SOMP_DL.into(), learning: Some(config) }
    }
}

fn grid_sparse_code(input: &EstimationInput<'_>, y: &CMatrix) -> Result<Vec<f64>> {
    let dictionary = crate::array::build_dictionary(input.geometry, input.grid);
    let solution = somp(y, dictionary.manifold(), input.num_sources)?;
    Ok(solution
        .support
        .iter()
        .map(|&l| input.grid.angles_deg()[l])
        .collect())
}

impl DoaEstimator for SompEstimator {
    fn id(&self) -> &str {
        &self.id
    }

    fn estimate(&self, input: &EstimationInput<'_>) -> Result<Estimate> {
        let angles_deg = match &self.learning {
            None => grid_sparse_code(input, input.snapshots)?,
            Some(config) => {
                run_mdl(input.snapshots, input.geometry, input.grid, input.num_sources, config)?
                    .angles_deg
            }
        };
        Ok(Estimate { angles_deg, degenerate: false })
    }
}

/// Runs the one-snapshot pipeline on every column and averages the angle
/// sets after aligning each one to the first snapshot's estimate.
pub struct OmpAveragedEstimator {
    id: String,
    learning: Option<LearningConfig>,
}

impl OmpAveragedEstimator {
    pub fn plain() -> Self {
        Self { id: ids::OMP_AVG.into(), learning: None }
    }

    pub fn learned(config: LearningConfig) -> Self {
        Self { id: ids::OMP_DL_AVG.into(), learning: Some(config) }
    }
}

impl DoaEstimator for OmpAveragedEstimator {
    fn id(&self) -> &str {
        &self.id
    }

    fn estimate(&self, input: &EstimationInput<'_>) -> Result<Estimate> {
        let y = input.snapshots;
        let mut per_snapshot = Vec::with_capacity(y.ncols());
        for t in 0..y.ncols() {
            let column = y.columns(t, 1).into_owned();
            let angles = match &self.learning {
                None => grid_sparse_code(input, &column)?,
                Some(config) => {
                    run_mdl(&column, input.geometry, input.grid, input.num_sources, config)?
                        .angles_deg
                }
            };
            per_snapshot.push(angles);
        }
        let reference = per_snapshot[0].clone();
        let mut sum = vec![0.0; reference.len()];
        for angles in &per_snapshot {
            for (s, a) in sum.iter_mut().zip(align_to(angles, &reference)?) {
                *s += a;
            }
        }
        let n = per_snapshot.len() as f64;
        Ok(Estimate {
            angles_deg: sum.into_iter().map(|s| s / n).collect(),
            degenerate: false,
        })
    }
}

pub struct MusicEstimator {
    scan_step_deg: f64,
}

impl MusicEstimator {
    pub fn new(scan_step_deg: f64) -> Self {
        Self { scan_step_deg }
    }
}

impl DoaEstimator for MusicEstimator {
    fn id(&self) -> &str {
        ids::MUSIC
    }

    fn estimate(&self, input: &EstimationInput<'_>) -> Result<Estimate> {
        let est = music_estimate(input.snapshots, input.num_sources, input.geometry, self.scan_step_deg)?;
        Ok(Estimate { angles_deg: est.angles_deg, degenerate: est.degenerate })
    }
}

/// Algorithm ids understood by the built-in registry.
pub mod ids {
    pub const OMP_AVG: &str = "omp_avg";
    pub const OMP_DL_AVG: &str = "omp_dl_avg";
    pub const SOMP: &str = "somp";
    pub const SOMP_DL: &str = "somp_dl";
    pub const MUSIC: &str = "music";
    /// Reserved for an externally supplied sparse-based calibration method.
    pub const SPARSE_BASED: &str = "sparse-based";

    pub const BUILTIN: [&str; 5] = [OMP_AVG, OMP_DL_AVG, SOMP, SOMP_DL, MUSIC];
    pub const RESERVED: [&str; 1] = [SPARSE_BASED];
}

type Factory = Arc<dyn Fn(&EstimatorSettings) -> Box<dyn DoaEstimator> + Send + Sync>;

/// Name to estimator-factory map.
#[derive(Clone, Default)]
pub struct EstimatorRegistry {
    factories: BTreeMap<String, Factory>,
}

impl std::fmt::Debug for EstimatorRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(ids::SOMP, |_| Box::new(SompEstimator::plain()));
        r.register(ids::SOMP_DL, |s| Box::new(SompEstimator::learned(s.learning_multi.clone())));
        r.register(ids::OMP_AVG, |_| Box::new(OmpAveragedEstimator::plain()));
        r.register(ids::OMP_DL_AVG, |s| {
            Box::new(OmpAveragedEstimator::learned(s.learning_single.clone()))
        });
        r.register(ids::MUSIC, |s| Box::new(MusicEstimator::new(s.music_scan_step_deg)));
        r
    }

    /// Adds or replaces the factory for `id`.
    pub fn register<F>(&mut self, id: &str, factory: F)
    where
        F: Fn(&EstimatorSettings) -> Box<dyn DoaEstimator> + Send + Sync + 'static,
    {
        self.factories.insert(id.to_string(), Arc::new(factory));
    }

    pub fn contains(&self, id: &str) -> bool {
        self.factories.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(&self, id: &str, settings: &EstimatorSettings) -> Result<Box<dyn DoaEstimator>> {
        match self.factories.get(id) {
            Some(f) => Ok(f(settings)),
            None if ids::RESERVED.contains(&id) => Err(Error::UnknownAlgorithm(format!(
                "{id} (reserved; no implementation registered)"
            ))),
            None => Err(Error::UnknownAlgorithm(id.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{generate_snapshots, PerturbationModel};
    use crate::learning::PerturbationKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn settings() -> EstimatorSettings {
        let multi = LearningConfig { perturbation_kind: PerturbationKind::None, ..LearningConfig::default() };
        EstimatorSettings {
            learning_single: LearningConfig { mu_theta: 2e-5, ..multi.clone() },
            learning_multi: multi,
            music_scan_step_deg: 0.1,
        }
    }

    #[test]
    fn builtins_resolve_by_id() {
        let r = EstimatorRegistry::with_builtins();
        for id in ids::BUILTIN {
            assert_eq!(r.create(id, &settings()).unwrap().id(), id);
        }
        let err = r.create(ids::SPARSE_BASED, &settings()).err().unwrap();
        assert!(err.to_string().contains("reserved"));
        assert!(matches!(r.create("esprit", &settings()), Err(Error::UnknownAlgorithm(_))));
    }

    struct Fixed;
    impl DoaEstimator for Fixed {
        fn id(&self) -> &str {
            ids::SPARSE_BASED
        }
        fn estimate(&self, input: &EstimationInput<'_>) -> Result<Estimate> {
            Ok(Estimate { angles_deg: vec![0.0; input.num_sources], degenerate: false })
        }
    }

    #[test]
    fn plugins_can_fill_reserved_slot() {
        let mut r = EstimatorRegistry::with_builtins();
        r.register(ids::SPARSE_BASED, |_| Box::new(Fixed));
        assert!(r.contains(ids::SPARSE_BASED));
        assert_eq!(r.create(ids::SPARSE_BASED, &settings()).unwrap().id(), ids::SPARSE_BASED);
    }

    #[test]
    fn on_grid_noiseless_estimates_are_exact() {
        let g = ArrayGeometry::new(25, 0.5).unwrap();
        let grid = AngleGrid::uniform(2.0).unwrap();
        let truth = [-20.0, 10.0, 50.0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data =
            generate_snapshots(&g, &truth, &PerturbationModel::None, 5, f64::INFINITY, &mut rng)
                .unwrap();
        let input = EstimationInput {
            snapshots: &data.snapshots.y,
            geometry: &g,
            grid: &grid,
            num_sources: 3,
        };
        let r = EstimatorRegistry::with_builtins();
        for id in [ids::SOMP, ids::OMP_AVG, ids::MUSIC] {
            let est = r.create(id, &settings()).unwrap().estimate(&input).unwrap();
            let err = crate::metrics::rmse_deg(&est.angles_deg, &truth).unwrap();
            assert!(err < 1e-9, "{id}: {err}");
        }
    }
}
