//! The core algorithm: per-cluster training of the K generator networks on
//! the MMD cost (step 1), then joint EM-like training (step 2) where the
//! likelihood matrix, soft memberships, priors and row rearrangement drive
//! membership-scaled SGD updates; plus sampling from the trained model.

use rand::Rng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autoencoder::{decode, Autoencoder, CodeRange};
use crate::error::{Error, Result};
use crate::kernel::{mmd2_grad_y, KernelConfig};
use crate::mat::{sq_dist, Mat};
use crate::nn::{self, MlpNetwork, MlpSpec};
use crate::rng::{self, StreamId};

/// Likelihood entries are floored here so membership ratios stay defined
/// even when a point is far from every network's samples.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// Knobs for both training steps.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Component count K.
    pub k: usize,
    /// Step-1 epochs per network.
    pub t1: usize,
    /// Step-2 iterations.
    pub t2: usize,
    /// Mini-batch size B for both steps.
    pub batch_size: usize,
    /// Step-1 learning rate.
    pub alpha: f64,
    /// Step-2 base learning rate, scaled per batch by its membership.
    pub beta: f64,
    /// Samples S generated per network for each likelihood refresh.
    pub samples_s: usize,
    /// Batches whose membership is not above this are skipped in step 2.
    pub batch_threshold: f64,
    pub weight_decay: f64,
    /// Latent input dimension p.
    pub latent_dim: usize,
    /// Hidden layer sizes of every generator.
    pub hidden: Vec<usize>,
    /// Master seed; all streams derive from it.
    pub seed: u64,
    /// Fraction of the data held out for validation by the pipeline.
    pub val_fraction: f64,
    /// Relative improvement of the validation log-likelihood counted as
    /// progress, and how many stalled iterations stop step 2.
    pub ll_tol: f64,
    pub ll_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 2,
            t1: 30,
            t2: 200,
            batch_size: 100,
            alpha: 0.2,
            beta: 0.2,
            samples_s: 500,
            batch_threshold: 0.001,
            weight_decay: 0.0,
            latent_dim: 2,
            hidden: vec![32, 128, 32],
            seed: 0,
            val_fraction: 0.1,
            ll_tol: 1e-3,
            ll_patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(
                "batch size must be >= 2 (the unbiased MMD needs two rows)".into(),
            ));
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::InvalidArgument(
                "learning rates must be positive".into(),
            ));
        }
        if self.samples_s == 0 {
            return Err(Error::InvalidArgument("samples_s must be >= 1".into()));
        }
        // 1.0 is allowed and blocks every update: memberships never exceed 1.
        if !(0.0..=1.0).contains(&self.batch_threshold) {
            return Err(Error::InvalidArgument(
                "batch threshold must lie in [0, 1]".into(),
            ));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::InvalidArgument("weight decay must be >= 0".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidArgument("latent dimension must be >= 1".into()));
        }
        if !(0.0..=0.9).contains(&self.val_fraction) {
            return Err(Error::InvalidArgument(
                "validation fraction must lie in [0, 0.9]".into(),
            ));
        }
        if self.ll_patience == 0 {
            return Err(Error::InvalidArgument("ll_patience must be >= 1".into()));
        }
        Ok(())
    }

    pub fn generator_spec(&self, target_dim: usize) -> Result<MlpSpec> {
        MlpSpec::generator(self.latent_dim, &self.hidden, target_dim)
    }
}

/// The trained hyper-network: K generators, their priors, the kernel they
/// were trained against, and the optional preprocessing stages.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    networks: Vec<MlpNetwork>,
    priors: Vec<f64>,
    kernel: KernelConfig,
    autoencoder: Option<Autoencoder>,
    code_range: CodeRange,
}

impl MixtureModel {
    pub fn new(
        networks: Vec<MlpNetwork>,
        priors: Vec<f64>,
        kernel: KernelConfig,
        autoencoder: Option<Autoencoder>,
        code_range: CodeRange,
    ) -> Result<MixtureModel> {
        if networks.is_empty() {
            return Err(Error::InvalidArgument("a mixture needs at least one network".into()));
        }
        if priors.len() != networks.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} networks but {} priors",
                networks.len(),
                priors.len()
            )));
        }
        if priors.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidArgument(format!("negative prior in {priors:?}")));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "priors sum to {total}, expected 1"
            )));
        }
        let spec = networks[0].spec();
        if networks.iter().any(|n| n.spec() != spec) {
            return Err(Error::ShapeMismatch(
                "all component networks must share one spec".into(),
            ));
        }
        if code_range.dim() != spec.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "code range covers {} coordinates, generators emit {}",
                code_range.dim(),
                spec.output_dim()
            )));
        }
        if let Some(ae) = &autoencoder {
            if ae.code_dim() != spec.output_dim() {
                return Err(Error::ShapeMismatch(format!(
                    "autoencoder code dimension {} does not match generator output {}",
                    ae.code_dim(),
                    spec.output_dim()
                )));
            }
        }
        Ok(MixtureModel {
            networks,
            priors,
            kernel,
            autoencoder,
            code_range,
        })
    }

    pub fn k(&self) -> usize {
        self.networks.len()
    }

    pub fn networks(&self) -> &[MlpNetwork] {
        &self.networks
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn autoencoder(&self) -> Option<&Autoencoder> {
        self.autoencoder.as_ref()
    }

    pub fn code_range(&self) -> &CodeRange {
        &self.code_range
    }

    pub fn spec(&self) -> &MlpSpec {
        self.networks[0].spec()
    }

    /// Dimension of the space samples are returned in (data space when an
    /// autoencoder is attached, generator space otherwise).
    pub fn sample_dim(&self) -> usize {
        self.autoencoder
            .as_ref()
            .map_or(self.code_range.dim(), Autoencoder::data_dim)
    }

    /// Attaches preprocessing stages; used by the pipeline after step 2.
    pub fn with_preprocessing(
        self,
        autoencoder: Option<Autoencoder>,
        code_range: CodeRange,
    ) -> Result<MixtureModel> {
        MixtureModel::new(self.networks, self.priors, self.kernel, autoencoder, code_range)
    }
}

/// Soft-assignment state of one step-2 iteration: likelihoods, memberships,
/// priors and the block ordering batches are sliced from.
#[derive(Debug, Clone)]
pub struct MixtureState {
    /// `N x K` kernel likelihoods, floored at [`LIKELIHOOD_FLOOR`].
    pub likelihoods: Mat,
    /// `N x K` membership probabilities; each row sums to 1.
    pub memberships: Mat,
    /// Component priors; sum to 1.
    pub priors: Vec<f64>,
    /// Permutation of row indices grouped by argmax-likelihood component.
    pub order: Vec<usize>,
    /// Rows per block; sums to N.
    pub block_sizes: Vec<usize>,
}

impl MixtureState {
    fn snapshot(likelihoods: Mat, priors: Vec<f64>) -> Result<MixtureState> {
        let memberships = compute_memberships(&likelihoods, &priors)?;
        let (order, block_sizes) = rearrange_rows(&likelihoods);
        Ok(MixtureState {
            likelihoods,
            memberships,
            priors,
            order,
            block_sizes,
        })
    }

    /// Recomputes `order` and `block_sizes` from the current likelihoods.
    pub fn rearrange(&mut self) {
        let (order, block_sizes) = rearrange_rows(&self.likelihoods);
        self.order = order;
        self.block_sizes = block_sizes;
    }
}

/// Per-iteration metrics record emitted by step 2.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    /// Average log-likelihood of the validation set under the refreshed model.
    pub val_ll: f64,
    pub priors: Vec<f64>,
    /// Per component: batches whose membership cleared the threshold.
    pub batches_used: Vec<usize>,
    pub batches_skipped: Vec<usize>,
}

/// Trains one network per hard cluster for `t1` epochs of mini-batch SGD on
/// the MMD cost (fresh uniform latents per batch), starting from fresh
/// random weights. Returns the K trained networks.
pub fn run_step1(
    clusters: &[Mat],
    spec: &MlpSpec,
    kernel: &KernelConfig,
    cfg: &TrainConfig,
) -> Result<Vec<MlpNetwork>> {
    cfg.validate()?;
    if clusters.is_empty() {
        return Err(Error::InvalidArgument("no clusters given".into()));
    }
    for (j, c) in clusters.iter().enumerate() {
        if c.rows() < 2 {
            return Err(Error::InvalidArgument(format!(
                "cluster {j} has {} points; at least 2 are needed for the MMD",
                c.rows()
            )));
        }
        if c.cols() != spec.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "cluster {j} has {} columns, generators emit {}",
                c.cols(),
                spec.output_dim()
            )));
        }
    }

    clusters
        .par_iter()
        .enumerate()
        .map(|(j, cluster)| {
            let mut net = nn::init_network_with_rng(
                spec,
                &mut rng::derive(cfg.seed, StreamId::WeightInit, j as u64),
            );
            let mut shuffle_rng = rng::derive(cfg.seed, StreamId::Step1Shuffle, j as u64);
            let mut latent_rng = rng::derive(cfg.seed, StreamId::Step1Latent, j as u64);
            let n = cluster.rows();
            let mut idx: Vec<usize> = (0..n).collect();
            for _ in 0..cfg.t1 {
                idx.shuffle(&mut shuffle_rng);
                let batches: Vec<&[usize]> = if n >= cfg.batch_size {
                    idx.chunks_exact(cfg.batch_size).collect()
                } else {
                    vec![&idx[..]]
                };
                for rows in batches {
                    let batch = cluster.select_rows(rows);
                    train_batch(&mut net, &batch, kernel, cfg.alpha, cfg, &mut latent_rng)?;
                }
            }
            Ok(net)
        })
        .collect()
}

/// One SGD update of `net` toward `batch`: generate as many samples as the
/// batch has rows, differentiate the unbiased MMD^2 w.r.t. the samples, and
/// chain through the network.
fn train_batch(
    net: &mut MlpNetwork,
    batch: &Mat,
    kernel: &KernelConfig,
    effective_lr: f64,
    cfg: &TrainConfig,
    latent_rng: &mut ChaCha8Rng,
) -> Result<()> {
    let z = nn::sample_latent(cfg.latent_dim, batch.rows(), latent_rng);
    let cache = nn::forward_cached(net, &z)?;
    let grad_y = mmd2_grad_y(batch, cache.output(), kernel)?;
    let (grads, _) = nn::backward_cached(net, &cache, &grad_y)?;
    nn::sgd_step(net, &grads, effective_lr, cfg.weight_decay)
}

/// Generates `samples_s` fresh samples per network (from each network's own
/// latent stream) and returns both the sample sets and the `N x K`
/// likelihood matrix of mean kernel similarities, floored entry-wise.
pub fn likelihoods_and_samples(
    x: &Mat,
    networks: &[MlpNetwork],
    kernel: &KernelConfig,
    samples_s: usize,
    rngs: &mut [ChaCha8Rng],
) -> Result<(Mat, Vec<Mat>)> {
    if networks.is_empty() {
        return Err(Error::InvalidArgument("no networks".into()));
    }
    if rngs.len() != networks.len() {
        return Err(Error::InvalidArgument(format!(
            "{} networks but {} latent streams",
            networks.len(),
            rngs.len()
        )));
    }
    if samples_s == 0 {
        return Err(Error::InvalidArgument("samples_s must be >= 1".into()));
    }
    let p = networks[0].spec().input_dim();
    let mut samples = Vec::with_capacity(networks.len());
    for (net, r) in networks.iter().zip(rngs.iter_mut()) {
        let z = nn::sample_latent(p, samples_s, r);
        samples.push(nn::forward(net, &z)?);
    }
    let lik = likelihood_matrix_against(x, &samples, kernel)?;
    Ok((lik, samples))
}

/// Likelihood matrix of `x` against fixed per-component sample sets.
pub(crate) fn likelihood_matrix_against(x: &Mat, samples: &[Mat], kernel: &KernelConfig) -> Result<Mat> {
    let k = samples.len();
    for s in samples {
        if s.cols() != x.cols() {
            return Err(Error::ShapeMismatch(format!(
                "samples have {} columns, data has {}",
                s.cols(),
                x.cols()
            )));
        }
    }
    let mut lik = Mat::zeros(x.rows(), k);
    lik.data_mut()
        .par_chunks_mut(k)
        .enumerate()
        .for_each_init(
            || vec![0.0f64; kernel.n_terms()],
            |scratch, (i, row)| {
                let xi = x.row(i);
                for (j, set) in samples.iter().enumerate() {
                    let mut acc = 0.0;
                    for y in set.iter_rows() {
                        acc += kernel.eval_sq(sq_dist(xi, y), scratch);
                    }
                    row[j] = (acc / set.rows() as f64).max(LIKELIHOOD_FLOOR);
                }
            },
        );
    Ok(lik)
}

/// Fresh `N x K` likelihood matrix; draws `samples_s` new samples from each
/// network on every call.
pub fn compute_likelihood_matrix(
    x: &Mat,
    networks: &[MlpNetwork],
    kernel: &KernelConfig,
    samples_s: usize,
    rngs: &mut [ChaCha8Rng],
) -> Result<Mat> {
    Ok(likelihoods_and_samples(x, networks, kernel, samples_s, rngs)?.0)
}

fn check_priors(k: usize, priors: &[f64]) -> Result<()> {
    if priors.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{k} components but {} priors",
            priors.len()
        )));
    }
    if priors.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad priors {priors:?}")));
    }
    Ok(())
}

/// Normalizes a log-weight vector to probabilities via log-sum-exp.
fn normalize_log_weights(logs: &[f64], out: &mut [f64]) {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logs) {
        let e = (l - max).exp();
        *o = e;
        total += e;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Membership probabilities: row-normalized `likelihood * prior` products,
/// computed in log space. Every row sums to 1.
pub fn compute_memberships(likelihoods: &Mat, priors: &[f64]) -> Result<Mat> {
    let k = likelihoods.cols();
    check_priors(k, priors)?;
    let log_priors: Vec<f64> = priors.iter().map(|&p| p.ln()).collect();
    let mut m = Mat::zeros(likelihoods.rows(), k);
    let mut logs = vec![0.0f64; k];
    for i in 0..likelihoods.rows() {
        let row = likelihoods.row(i);
        if row.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Numeric(format!(
                "non-positive likelihood in row {i}; entries must be floored"
            )));
        }
        for j in 0..k {
            logs[j] = row[j].ln() + log_priors[j];
        }
        normalize_log_weights(&logs, m.row_mut(i));
    }
    Ok(m)
}

/// Membership of a whole mini-batch for each component: the product of the
/// batch rows' likelihoods times the prior, normalized across components.
/// Computed in log space; a batch of one row equals the Eq.-(5) membership.
pub fn batch_membership(rows: &[usize], likelihoods: &Mat, priors: &[f64]) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let k = likelihoods.cols();
    check_priors(k, priors)?;
    let mut logs: Vec<f64> = priors.iter().map(|&p| p.ln()).collect();
    for &r in rows {
        if r >= likelihoods.rows() {
            return Err(Error::InvalidArgument(format!(
                "batch row {r} out of range ({} rows)",
                likelihoods.rows()
            )));
        }
        let row = likelihoods.row(r);
        for j in 0..k {
            logs[j] += row[j].ln();
        }
    }
    let mut out = vec![0.0f64; k];
    normalize_log_weights(&logs, &mut out);
    Ok(out)
}

/// Stable grouping of row indices by argmax-likelihood component (ties go to
/// the lowest component; original order is kept within each block). Returns
/// the permutation and the block sizes.
pub fn rearrange_rows(likelihoods: &Mat) -> (Vec<usize>, Vec<usize>) {
    let k = likelihoods.cols();
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); k];
    for i in 0..likelihoods.rows() {
        let row = likelihoods.row(i);
        let mut best = 0usize;
        for j in 1..k {
            if row[j] > row[best] {
                best = j;
            }
        }
        blocks[best].push(i);
    }
    let block_sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
    let order: Vec<usize> = blocks.into_iter().flatten().collect();
    (order, block_sizes)
}

/// Prior update: column means of the membership matrix, renormalized so the
/// result sums to exactly 1.
pub fn update_priors(memberships: &Mat) -> Vec<f64> {
    let k = memberships.cols();
    let n = memberships.rows() as f64;
    let mut priors = vec![0.0f64; k];
    for row in memberships.iter_rows() {
        for (p, &m) in priors.iter_mut().zip(row) {
            *p += m;
        }
    }
    for p in priors.iter_mut() {
        *p /= n;
    }
    let total: f64 = priors.iter().sum();
    for p in priors.iter_mut() {
        *p /= total;
    }
    priors
}

/// Average log-likelihood of `x` under the mixture of kernel densities
/// defined by per-component sample sets and priors.
fn avg_log_likelihood(
    x: &Mat,
    samples: &[Mat],
    priors: &[f64],
    kernel: &KernelConfig,
) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let lik = likelihood_matrix_against(x, samples, kernel)?;
    let mut total = 0.0;
    for row in lik.iter_rows() {
        let mix: f64 = row.iter().zip(priors).map(|(&l, &p)| l * p).sum();
        total += mix.ln();
    }
    Ok(total / x.rows() as f64)
}

/// Everything step 2 produces: the model (without preprocessing attached),
/// the final soft-assignment state, and the per-iteration records.
pub struct Step2Output {
    pub model: MixtureModel,
    pub state: MixtureState,
    pub history: Vec<IterationRecord>,
}

/// Joint EM-like training of all networks (Algorithm-2 style loop).
///
/// Per iteration: rearrange rows by argmax likelihood, slice `floor(N/B)`
/// mini-batches from that order, compute every batch membership, let each
/// network take one membership-scaled SGD step per batch above the
/// threshold, then refresh the likelihood matrix with fresh samples and
/// update the priors. Stops early when the validation average log-likelihood
/// has not improved by `ll_tol` (relative) for `ll_patience` iterations.
///
/// `validation` may be empty; the training set is then used for the
/// log-likelihood trace. `on_iter` sees the post-refresh state and record of
/// every iteration.
pub fn run_step2(
    x: &Mat,
    validation: &Mat,
    networks: Vec<MlpNetwork>,
    init_sizes: &[usize],
    kernel: &KernelConfig,
    cfg: &TrainConfig,
    mut on_iter: impl FnMut(&MixtureState, &IterationRecord),
) -> Result<Step2Output> {
    cfg.validate()?;
    let k = networks.len();
    if k == 0 {
        return Err(Error::InvalidArgument("no networks".into()));
    }
    if init_sizes.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{k} networks but {} initial cluster sizes",
            init_sizes.len()
        )));
    }
    let total: usize = init_sizes.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("initial clusters are empty".into()));
    }

    let mut networks = networks;
    let lik_kernel = kernel.likelihood_kernel();
    let mut priors: Vec<f64> = init_sizes.iter().map(|&s| s as f64 / total as f64).collect();
    let mut lik_rngs: Vec<ChaCha8Rng> = (0..k)
        .map(|j| rng::derive(cfg.seed, StreamId::Likelihood, j as u64))
        .collect();
    let mut latent_rngs: Vec<ChaCha8Rng> = (0..k)
        .map(|j| rng::derive(cfg.seed, StreamId::Step2Latent, j as u64))
        .collect();

    let (lik, _) = likelihoods_and_samples(x, &networks, &lik_kernel, cfg.samples_s, &mut lik_rngs)?;
    let mut state = MixtureState::snapshot(lik, priors.clone())?;
    let mut history = Vec::new();

    let mut best_ll = f64::NEG_INFINITY;
    let mut stall = 0usize;

    for iteration in 1..=cfg.t2 {
        // Contiguous batches over the rearranged order; the remainder rows
        // sit out this iteration but still count in the refresh below.
        let batches: Vec<Mat> = state
            .order
            .chunks_exact(cfg.batch_size)
            .map(|rows| x.select_rows(rows))
            .collect();
        let batch_members: Vec<Vec<f64>> = state
            .order
            .chunks_exact(cfg.batch_size)
            .map(|rows| batch_membership(rows, &state.likelihoods, &state.priors))
            .collect::<Result<_>>()?;

        let counts: Vec<(usize, usize)> = networks
            .par_iter_mut()
            .zip(latent_rngs.par_iter_mut())
            .enumerate()
            .map(|(j, (net, latent_rng))| {
                let mut used = 0usize;
                let mut skipped = 0usize;
                for (batch, members) in batches.iter().zip(&batch_members) {
                    let m = members[j];
                    if m > cfg.batch_threshold {
                        train_batch(net, batch, kernel, m * cfg.beta, cfg, latent_rng)?;
                        used += 1;
                    } else {
                        skipped += 1;
                    }
                }
                Ok((used, skipped))
            })
            .collect::<Result<_>>()?;

        // Refresh likelihoods with fresh samples, then update priors from
        // the new memberships (computed against the pre-update priors).
        let (lik, samples) =
            likelihoods_and_samples(x, &networks, &lik_kernel, cfg.samples_s, &mut lik_rngs)?;
        let memberships = compute_memberships(&lik, &priors)?;
        priors = update_priors(&memberships);

        let ll_set = if validation.rows() > 0 { validation } else { x };
        let val_ll = avg_log_likelihood(ll_set, &samples, &priors, &lik_kernel)?;
        if !val_ll.is_finite() {
            return Err(Error::Numeric(format!(
                "validation log-likelihood became {val_ll} at iteration {iteration}"
            )));
        }

        state = MixtureState::snapshot(lik, priors.clone())?;
        let record = IterationRecord {
            iteration,
            val_ll,
            priors: priors.clone(),
            batches_used: counts.iter().map(|c| c.0).collect(),
            batches_skipped: counts.iter().map(|c| c.1).collect(),
        };
        on_iter(&state, &record);
        history.push(record);

        // Saturation check: stall until some iteration beats the best seen
        // value by the (relative) tolerance, then reset.
        let improved =
            !best_ll.is_finite() || val_ll > best_ll + cfg.ll_tol * best_ll.abs().max(1.0);
        if improved {
            best_ll = val_ll;
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.ll_patience {
                break;
            }
        }
    }

    let model = MixtureModel::new(
        networks,
        priors,
        kernel.clone(),
        None,
        CodeRange::from_parts(vec![0.0; x.cols()], vec![1.0; x.cols()])?,
    )?;
    Ok(Step2Output {
        model,
        state,
        history,
    })
}

/// Draws `n` samples from the model. If `component` is given that network is
/// used for every sample; otherwise each sample picks its component from the
/// priors. Outputs are mapped out of the unit cube through the code range
/// and decoded through the autoencoder when one is attached.
pub fn generate(
    model: &MixtureModel,
    n: usize,
    component: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Mat> {
    let k = model.k();
    if let Some(c) = component {
        if c >= k {
            return Err(Error::InvalidArgument(format!(
                "component {c} out of range (K = {k})"
            )));
        }
    }
    let p = model.spec().input_dim();

    // Component choice per sample (before any latent draws, so the bypass
    // path shares the latent stream layout with single-component calls).
    let picks: Vec<usize> = match component {
        Some(c) => vec![c; n],
        None => {
            let mut cum = Vec::with_capacity(k);
            let mut acc = 0.0;
            for &pj in model.priors() {
                acc += pj;
                cum.push(acc);
            }
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random_range(0.0..1.0);
                    cum.iter().position(|&c| u < c).unwrap_or(k - 1)
                })
                .collect()
        }
    };

    let z = nn::sample_latent(p, n, rng);
    let out_dim = model.spec().output_dim();
    let mut unit = Mat::zeros(n, out_dim);
    for j in 0..k {
        let rows: Vec<usize> = (0..n).filter(|&i| picks[i] == j).collect();
        if rows.is_empty() {
            continue;
        }
        let zj = z.select_rows(&rows);
        let yj = nn::forward(&model.networks[j], &zj)?;
        for (slot, &i) in rows.iter().enumerate() {
            unit.row_mut(i).copy_from_slice(yj.row(slot));
        }
    }

    let codes = model.code_range.from_unit(&unit)?;
    match &model.autoencoder {
        Some(ae) => decode(ae, &codes),
        None => Ok(codes),
    }
}
