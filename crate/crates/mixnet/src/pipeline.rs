//! End-to-end training and evaluation flows: normalize, optionally encode,
//! pick K, hard-cluster, run both training steps, and wrap the result with
//! the records needed to use it on raw data later.

use rand_chacha::ChaCha8Rng;

use crate::autoencoder::{encode, train_autoencoder, AeTrainConfig, CodeRange};
use crate::clustering::{clustering_purity, kmeans, knee_select_k, HardClustering};
use crate::data::{Dataset, SavedModel};
use crate::error::{Error, Result};
use crate::kernel::{median_pairwise_distance, KernelConfig};
use crate::mat::{sq_dist, Mat};
use crate::mixture::{
    self, compute_memberships, IterationRecord, MixtureState, TrainConfig,
};
use crate::rng::{self, StreamId};

/// How the component count is chosen.
#[derive(Debug, Clone, Copy)]
pub enum KSelection {
    Fixed(usize),
    /// Knee method over `[k_min, k_max]` inertia curve.
    Auto { k_min: usize, k_max: usize },
}

/// Everything the `train` flow needs beyond the core [`TrainConfig`].
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub k: KSelection,
    /// Train an autoencoder and run the generators in its code space.
    pub use_autoencoder: bool,
    pub code_dim: usize,
    pub ae_epochs: usize,
    pub ae_learning_rate: f64,
    pub ae_hidden: Option<Vec<usize>>,
    /// Explicit kernel bandwidths; `None` uses the median-distance ladder.
    pub bandwidths: Option<Vec<f64>>,
    /// Run the hard clustering on the original (normalized) data instead of
    /// the encoded data.
    pub cluster_on_original: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train: TrainConfig::default(),
            k: KSelection::Fixed(2),
            use_autoencoder: false,
            code_dim: 32,
            ae_epochs: 200,
            ae_learning_rate: 0.5,
            ae_hidden: None,
            bandwidths: None,
            cluster_on_original: false,
        }
    }
}

/// Summary of one pipeline run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub k: usize,
    pub bandwidths: Vec<f64>,
    /// Purity of the k-means initialization over the full dataset
    /// (nearest-centroid assignment), when labels exist.
    pub kmeans_purity: Option<f64>,
    /// Purity of the final argmax-membership clustering, when labels exist.
    pub final_purity: Option<f64>,
    pub step2_iterations: usize,
    pub history: Vec<IterationRecord>,
}

fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::derive(seed, StreamId::ValSplit, 0));
    let n_val = (n as f64 * val_fraction).floor() as usize;
    let mut val = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Nearest-centroid assignment of arbitrary rows, extending a hard
/// clustering fitted on the training split to the full dataset.
fn assign_to_centroids(x: &Mat, clustering: &HardClustering) -> Vec<usize> {
    (0..x.rows())
        .map(|i| {
            let row = x.row(i);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..clustering.centroids.rows() {
                let d = sq_dist(row, clustering.centroids.row(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Full training flow: validation split, optional autoencoder, bandwidth
/// selection, k-means (or knee) initialization, step 1, step 2. `on_iter`
/// observes every step-2 iteration.
pub fn train(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    on_iter: impl FnMut(&MixtureState, &IterationRecord),
) -> Result<(SavedModel, TrainReport)> {
    cfg.train.validate()?;
    let seed = cfg.train.seed;
    let n = dataset.n();
    let d = dataset.dim();
    if cfg.use_autoencoder && cfg.code_dim >= d {
        return Err(Error::InvalidArgument(format!(
            "code_dim {} must be smaller than the data dimension {d}",
            cfg.code_dim
        )));
    }

    let (train_idx, val_idx) = split_indices(n, cfg.train.val_fraction, seed);
    if train_idx.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{n} points leave too little training data after the validation split"
        )));
    }
    let x_train = dataset.data.select_rows(&train_idx);
    let x_val = dataset.data.select_rows(&val_idx);

    // Optional dimension reduction.
    let (autoencoder, codes_train, codes_val, codes_all) = if cfg.use_autoencoder {
        let ae_cfg = AeTrainConfig {
            hidden: cfg.ae_hidden.clone(),
            epochs: cfg.ae_epochs,
            batch_size: cfg.train.batch_size,
            learning_rate: cfg.ae_learning_rate,
            patience: 10,
            seed,
        };
        let (ae, _) = train_autoencoder(&x_train, cfg.code_dim, &ae_cfg)?;
        let ct = encode(&ae, &x_train)?;
        let cv = encode(&ae, &x_val)?;
        let ca = encode(&ae, &dataset.data)?;
        (Some(ae), ct, cv, ca)
    } else {
        (None, x_train.clone(), x_val.clone(), dataset.data.clone())
    };

    let code_range = CodeRange::from_data(&codes_train);
    let t_train = code_range.to_unit(&codes_train)?;
    let t_val = code_range.to_unit(&codes_val)?;

    let kernel = match &cfg.bandwidths {
        Some(bw) => KernelConfig::new(bw.clone())?,
        None => {
            let scale = median_pairwise_distance(
                &t_train,
                1000,
                &mut rng::derive(seed, StreamId::Bandwidth, 0),
            );
            KernelConfig::ladder(scale)?
        }
    };

    // Hard-decision initialization, by default in the encoded space.
    let cluster_space_train = if cfg.cluster_on_original {
        &x_train
    } else {
        &codes_train
    };
    let k = match cfg.k {
        KSelection::Fixed(k) => k,
        KSelection::Auto { k_min, k_max } => {
            knee_select_k(cluster_space_train, k_min, k_max.min(cluster_space_train.rows()), seed)?
        }
    };
    let hard = kmeans(cluster_space_train, k, seed, 100)?;

    let cluster_indices = hard.cluster_indices();
    let clusters: Vec<Mat> = cluster_indices
        .iter()
        .map(|idx| t_train.select_rows(idx))
        .collect();
    let spec = cfg.train.generator_spec(t_train.cols())?;
    let networks = mixture::run_step1(&clusters, &spec, &kernel, &cfg.train)?;

    let step2 = mixture::run_step2(
        &t_train,
        &t_val,
        networks,
        &hard.sizes(),
        &kernel,
        &cfg.train,
        on_iter,
    )?;
    let step2_iterations = step2.history.len();
    let model = step2.model.with_preprocessing(autoencoder, code_range)?;
    let saved = SavedModel {
        model,
        normalization: dataset.normalization.clone(),
        seed,
    };

    // Purities over the full dataset, when labels exist.
    let (kmeans_purity, final_purity) = match &dataset.labels {
        Some(labels) => {
            let cluster_space_all = if cfg.cluster_on_original {
                &dataset.data
            } else {
                &codes_all
            };
            let km_assign = assign_to_centroids(cluster_space_all, &hard);
            let km = clustering_purity(&km_assign, labels)?;
            let final_assign = assign(&saved, dataset, seed)?;
            let fin = clustering_purity(&final_assign, labels)?;
            (Some(km), Some(fin))
        }
        None => (None, None),
    };

    let report = TrainReport {
        k,
        bandwidths: kernel.bandwidths().to_vec(),
        kmeans_purity,
        final_purity,
        step2_iterations,
        history: step2.history,
    };
    Ok((saved, report))
}

/// Maps a dataset into the model's generator target space (model
/// normalization, optional encoder, code-range map).
pub fn to_target_space(saved: &SavedModel, dataset: &Dataset) -> Result<Mat> {
    let raw = dataset.original_data();
    let normalized = saved.normalization.apply(&raw)?;
    let codes = match saved.model.autoencoder() {
        Some(ae) => encode(ae, &normalized)?,
        None => normalized,
    };
    saved.model.code_range().to_unit(&codes)
}

/// Hard assignment of every dataset row to its argmax-membership component,
/// using `samples_s` fresh samples per component.
pub fn assign_with_samples(
    saved: &SavedModel,
    dataset: &Dataset,
    samples_s: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let targets = to_target_space(saved, dataset)?;
    let mut rngs: Vec<ChaCha8Rng> = (0..saved.model.k())
        .map(|j| rng::derive(seed, StreamId::Eval, j as u64))
        .collect();
    let lik = mixture::compute_likelihood_matrix(
        &targets,
        saved.model.networks(),
        &saved.model.kernel().likelihood_kernel(),
        samples_s,
        &mut rngs,
    )?;
    let memberships = compute_memberships(&lik, saved.model.priors())?;
    Ok((0..memberships.rows())
        .map(|i| {
            let row = memberships.row(i);
            (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b })
        })
        .collect())
}

/// [`assign_with_samples`] with the default sample count.
pub fn assign(saved: &SavedModel, dataset: &Dataset, seed: u64) -> Result<Vec<usize>> {
    assign_with_samples(saved, dataset, 500, seed)
}

/// Draws samples in original data units.
pub fn generate_original(
    saved: &SavedModel,
    n: usize,
    component: Option<usize>,
    seed: u64,
) -> Result<Mat> {
    let normalized = mixture::generate(
        &saved.model,
        n,
        component,
        &mut rng::derive(seed, StreamId::Generate, 0),
    )?;
    saved.normalization.invert(&normalized)
}
