//! Per-level training and the hyperparameter grid search.

use std::cmp::Ordering;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::LevelDataset;
use super::derive_seed;
use crate::error::{Error, Result};
use crate::nn::{train, Architecture, ErrorMapNetwork, TrainConfig, TrainOutcome};
use crate::pde::ParameterDomain;

/// One grid cell. `n_cnn` and `n_fc` are `None` for transfer-learned levels, which only
/// choose the penalty and the width of the appended layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lambda: f64,
    pub n_cnn: Option<usize>,
    pub n_fc: Option<usize>,
    /// Width of the fully-connected layers (fresh) or of the appended layer (transfer).
    pub width: usize,
}

impl Hyperparameters {
    fn lexicographic(&self, other: &Self) -> Ordering {
        self.lambda
            .total_cmp(&other.lambda)
            .then(self.n_cnn.cmp(&other.n_cnn))
            .then(self.n_fc.cmp(&other.n_fc))
            .then(self.width.cmp(&other.width))
    }
}

/// Candidate values for each hyperparameter; cells are the tensor product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub lambda: Vec<f64>,
    pub n_cnn: Vec<usize>,
    pub n_fc: Vec<usize>,
    pub width: Vec<usize>,
}

impl HyperGrid {
    /// Three values per hyperparameter, widths scaled to the coarse interval count.
    pub fn standard(n_coarse: usize) -> Self {
        Self {
            lambda: vec![0.0, 1e-6, 1e-3],
            n_cnn: vec![2, 4, 6],
            n_fc: vec![1, 3, 5],
            width: vec![(n_coarse / 2).max(1), n_coarse, 2 * n_coarse],
        }
    }

    /// Cells for a freshly initialized network: lambda x n_cnn x n_fc x width.
    pub fn fresh_cells(&self) -> Vec<Hyperparameters> {
        let mut cells = Vec::new();
        for &lambda in &self.lambda {
            for &n_cnn in &self.n_cnn {
                for &n_fc in &self.n_fc {
                    for &width in &self.width {
                        cells.push(Hyperparameters { lambda, n_cnn: Some(n_cnn), n_fc: Some(n_fc), width });
                    }
                }
            }
        }
        cells
    }

    /// Cells for a transfer-learned level: lambda x width.
    pub fn transfer_cells(&self) -> Vec<Hyperparameters> {
        let mut cells = Vec::new();
        for &lambda in &self.lambda {
            for &width in &self.width {
                cells.push(Hyperparameters { lambda, n_cnn: None, n_fc: None, width });
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_empty() || self.n_cnn.is_empty() || self.n_fc.is_empty() || self.width.is_empty() {
            return Err(Error::InvalidInput("every hyperparameter needs at least one candidate".into()));
        }
        if self.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || self.width.contains(&0) {
            return Err(Error::InvalidInput("lambda must be finite and nonnegative, widths positive".into()));
        }
        Ok(())
    }
}

/// Settings shared by every cell of a search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSettings {
    /// Optimizer settings; `lambda` is overridden per cell.
    pub train: TrainConfig,
    pub filters_first_layer: usize,
    /// Train levels above 2 by freezing the previous map and appending a layer.
    pub transfer: bool,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self { train: TrainConfig::default(), filters_first_layer: 4, transfer: true }
    }
}

/// Whether the level-`level` map is built on top of the previous one.
pub fn uses_transfer(level: usize, settings: &TrainingSettings) -> bool {
    level > 2 && settings.transfer
}

/// Builds (or reuses `warm`) and trains one map.
///
/// Without transfer the network is freshly initialized from `hp`; with transfer `prev` is cloned,
/// frozen and extended by one layer of width `hp.width`. A `warm` network is trained further as is.
#[allow(clippy::too_many_arguments)]
pub fn train_level(
    level: usize,
    dataset: &LevelDataset,
    hp: &Hyperparameters,
    prev: Option<&ErrorMapNetwork>,
    warm: Option<ErrorMapNetwork>,
    settings: &TrainingSettings,
    domain: &ParameterDomain,
    seed: u64,
) -> Result<(ErrorMapNetwork, TrainOutcome)> {
    let field_len = dataset
        .train
        .first()
        .map(|p| p.input.len())
        .ok_or_else(|| Error::InvalidInput("empty training set".into()))?;
    let mut net = match warm {
        Some(net) => net,
        None if uses_transfer(level, settings) => {
            let prev = prev.ok_or_else(|| Error::InvalidInput(format!("level {level} transfer needs the previous map")))?;
            let mut net = prev.clone();
            net.freeze_all();
            net.append_fc_layer(hp.width, seed)?;
            net
        }
        None => {
            let (Some(n_cnn), Some(n_fc)) = (hp.n_cnn, hp.n_fc) else {
                return Err(Error::InvalidInput("fresh networks need n_cnn and n_fc".into()));
            };
            let arch = Architecture {
                input_shape: vec![1, field_len],
                z_dim: domain.dim(),
                n_cnn,
                filters_first_layer: settings.filters_first_layer,
                n_fc,
                fc_width: hp.width,
            };
            let mut net = ErrorMapNetwork::new(&arch, seed)?;
            net.set_z_domain(&domain.lower, &domain.upper);
            net
        }
    };
    let cfg = TrainConfig { lambda: hp.lambda, seed, ..settings.train.clone() };
    let outcome = train(&mut net, &dataset.train_samples(), &dataset.validation_samples(), &cfg)?;
    Ok((net, outcome))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub hp: Hyperparameters,
    /// Normalized validation error, `None` if training failed.
    pub v: Option<f64>,
    pub trainable_params: usize,
    pub epochs: usize,
    pub first_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct GridSearchOutcome {
    pub cells: Vec<CellReport>,
    /// Trained network per cell (`None` where training failed).
    pub networks: Vec<Option<ErrorMapNetwork>>,
    pub best: usize,
}

impl GridSearchOutcome {
    pub fn v_min(&self) -> f64 {
        self.cells[self.best].v.expect("best cell trained")
    }

    pub fn best_network(&self) -> &ErrorMapNetwork {
        self.networks[self.best].as_ref().expect("best cell trained")
    }

    pub fn best_hp(&self) -> &Hyperparameters {
        &self.cells[self.best].hp
    }
}

/// Index of the smallest `v`; ties go to fewer trainable parameters, then to the
/// lexicographically smaller hyperparameters.
pub fn select_best(cells: &[CellReport]) -> Option<usize> {
    cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.v.filter(|v| v.is_finite()).map(|v| (i, v, c)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.trainable_params.cmp(&b.2.trainable_params)).then(a.2.hp.lexicographic(&b.2.hp)))
        .map(|(i, _, _)| i)
}

/// Trains one network per cell (concurrently) and keeps the one with the smallest validation
/// error. `warm[k]`, if present, is the starting point for cell `k`.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    level: usize,
    dataset: &LevelDataset,
    prev: Option<&ErrorMapNetwork>,
    warm: Option<&[Option<ErrorMapNetwork>]>,
    cells: &[Hyperparameters],
    settings: &TrainingSettings,
    domain: &ParameterDomain,
    seed: u64,
) -> Result<GridSearchOutcome> {
    if cells.is_empty() {
        return Err(Error::InvalidInput("empty hyperparameter grid".into()));
    }
    if let Some(w) = warm {
        if w.len() != cells.len() {
            return Err(Error::InvalidInput("warm-start list does not match the grid".into()));
        }
    }
    let results: Vec<Result<(ErrorMapNetwork, TrainOutcome)>> = cells
        .par_iter()
        .enumerate()
        .map(|(k, hp)| {
            let start = warm.and_then(|w| w[k].clone());
            let cell_seed = derive_seed(seed, &[level as u64, k as u64]);
            train_level(level, dataset, hp, prev, start, settings, domain, cell_seed)
        })
        .collect();
    let mut reports = Vec::with_capacity(cells.len());
    let mut networks = Vec::with_capacity(cells.len());
    for (hp, r) in cells.iter().zip(results) {
        match r {
            Ok((net, out)) => {
                debug!("level {level} cell {hp:?}: v = {:e} after {} epochs", out.validation, out.epochs);
                reports.push(CellReport {
                    hp: hp.clone(),
                    v: Some(out.validation),
                    trainable_params: net.trainable_param_count(),
                    epochs: out.epochs,
                    first_loss: Some(out.first_loss),
                    error: None,
                });
                networks.push(Some(net));
            }
            Err(e) => {
                warn!("level {level} cell {hp:?} failed: {e}");
                reports.push(CellReport {
                    hp: hp.clone(),
                    v: None,
                    trainable_params: 0,
                    epochs: 0,
                    first_loss: None,
                    error: Some(e.to_string()),
                });
                networks.push(None);
            }
        }
    }
    let Some(best) = select_best(&reports) else {
        return Err(Error::AllDiverged(
            reports.iter().map(|c| format!("{:?}: {}", c.hp, c.error.as_deref().unwrap_or("non-finite v"))).collect(),
        ));
    };
    Ok(GridSearchOutcome { cells: reports, networks, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(lambda: f64, width: usize, v: Option<f64>, params: usize) -> CellReport {
        CellReport {
            hp: Hyperparameters { lambda, n_cnn: Some(2), n_fc: Some(1), width },
            v,
            trainable_params: params,
            epochs: 1,
            first_loss: None,
            error: None,
        }
    }

    #[test]
    fn grid_sizes() {
        let grid = HyperGrid::standard(100);
        assert_eq!(grid.fresh_cells().len(), 81);
        assert_eq!(grid.transfer_cells().len(), 9);
        assert_eq!(grid.width, vec![50, 100, 200]);
    }

    #[test]
    fn argmin_and_tie_breaks() {
        let cells = vec![cell(0.0, 50, Some(1e-3), 10), cell(0.0, 50, Some(0.0), 10), cell(1e-3, 50, None, 0)];
        assert_eq!(select_best(&cells), Some(1));
        let tied = vec![cell(0.0, 100, Some(1e-6), 20), cell(0.0, 50, Some(1e-6), 10)];
        assert_eq!(select_best(&tied), Some(1));
        let tied = vec![cell(1e-3, 50, Some(1e-6), 10), cell(0.0, 50, Some(1e-6), 10)];
        assert_eq!(select_best(&tied), Some(1));
        assert_eq!(select_best(&[cell(0.0, 1, None, 0), cell(0.0, 1, Some(f64::NAN), 1)]), None);
    }
}
