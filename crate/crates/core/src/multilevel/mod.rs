//! Multi-level network surrogates: datasets, sample enrichment, hyperparameter search,
//! transfer learning across levels and the telescoping surrogate.

pub mod cost;
pub mod dataset;
pub mod enrich;
pub mod run;
pub mod search;
pub mod surrogate;

pub use cost::CostLedger;
pub use dataset::{build_level_dataset, sample_z, LevelDataset, LevelPair};
pub use enrich::{batch_size, enrich_until_valid, LevelBuilder, LevelOutcome};
pub use run::{run_mlnn, run_mlnn_with, MlnnRun, RunConfig, RunReport};
pub use search::{grid_search, select_best, train_level, CellReport, GridSearchOutcome, HyperGrid, Hyperparameters, TrainingSettings};
pub use surrogate::{rms, should_add_level, surrogate_eval, ErrorMap, Surrogate, SurrogateEval};

/// Mixes a base seed with a path of tags into an independent stream seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    fn mix(mut x: u64) -> u64 {
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^ (x >> 31)
    }
    tags.iter().fold(mix(base.wrapping_add(0x9e37_79b9_7f4a_7c15)), |h, &t| {
        mix(h ^ t.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2))
    })
}
