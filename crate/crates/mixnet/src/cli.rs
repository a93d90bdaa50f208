//! Command-line interface: toy generation, training, sampling, clustering
//! evaluation, Parzen evaluation, and contour-grid export.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
//! failure. No subcommand leaves a partial output file behind on failure.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::data::{self, metrics, Dataset};
use crate::error::{Error, Result};
use crate::eval;
use crate::kernel::median_pairwise_distance;
use crate::mixture::TrainConfig;
use crate::pipeline::{self, KSelection, PipelineConfig};
use crate::rng::{self, StreamId};

#[derive(Parser)]
#[command(
    name = "mixnet",
    about = "Mixture-of-networks generative model and clustering",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled 2-D toy dataset as CSV.
    GenToy(GenToyArgs),
    /// Train a mixture of networks on a CSV or IDX dataset.
    Train(TrainArgs),
    /// Sample from a trained model.
    Generate(GenerateArgs),
    /// Clustering purity of a trained model on labeled data.
    ClusterEval(ClusterEvalArgs),
    /// Parzen-window average log-likelihood of a test set.
    ParzenEval(ParzenEvalArgs),
    /// Export a membership-probability grid for contour plots.
    Grid(GridArgs),
}

#[derive(Args)]
struct GenToyArgs {
    /// two_moon, moon_circle, or two_circle
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 4000)]
    n: usize,
    /// Gaussian noise level in construction units.
    #[arg(long, default_value_t = 0.08)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Input CSV (or IDX image file together with --idx-labels).
    #[arg(long)]
    input: PathBuf,
    /// Treat the last CSV column as integer labels.
    #[arg(long)]
    labels: bool,
    /// IDX label file; switches --input to IDX image parsing.
    #[arg(long)]
    idx_labels: Option<PathBuf>,
    /// Component count, or 'auto' for knee selection.
    #[arg(long, default_value = "2")]
    k: String,
    #[arg(long, default_value_t = 30)]
    t1: usize,
    #[arg(long, default_value_t = 200)]
    t2: usize,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    beta: f64,
    #[arg(long, default_value_t = 500)]
    samples_s: usize,
    #[arg(long, default_value_t = 0.001)]
    threshold: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, default_value_t = 2)]
    latent_dim: usize,
    /// Hidden layer sizes, comma-separated.
    #[arg(long, default_value = "32,128,32")]
    hidden: String,
    /// Train an autoencoder and model the code space.
    #[arg(long)]
    ae: bool,
    #[arg(long, default_value_t = 32)]
    code_dim: usize,
    #[arg(long, default_value_t = 200)]
    ae_epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    ae_lr: f64,
    /// Explicit kernel bandwidths, comma-separated; default is the
    /// median-distance ladder.
    #[arg(long)]
    bandwidth: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Relative validation-ll improvement below which an iteration counts
    /// as stalled, and how many stalled iterations stop step 2.
    #[arg(long, default_value_t = 1e-3)]
    ll_tol: f64,
    #[arg(long, default_value_t = 10)]
    ll_patience: usize,
    /// Run k-means on the original data instead of the encoded data.
    #[arg(long)]
    cluster_original: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Metrics file; omitted means metrics go to standard output.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Generate from this component only.
    #[arg(long)]
    component: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterEvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labeled CSV (labels in the last column).
    #[arg(long)]
    input: PathBuf,
    /// IDX label file; switches --input to IDX image parsing.
    #[arg(long)]
    idx_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    samples_s: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-point cluster assignments as CSV.
    #[arg(long)]
    assignments: Option<PathBuf>,
}

#[derive(Args)]
struct ParzenEvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test CSV; add --labels if it carries a label column.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    labels: bool,
    /// Samples drawn from the model for the Parzen fit.
    #[arg(long, default_value_t = 10000)]
    gen_samples: usize,
    /// Fixed bandwidth; overrides the grid search.
    #[arg(long)]
    sigma: Option<f64>,
    /// Bandwidth grid, comma-separated. Default: {0.05,0.1,0.2,0.5,1} times
    /// the median pairwise distance of the generated set.
    #[arg(long)]
    sigma_grid: Option<String>,
    /// Separate validation CSV for bandwidth selection; defaults to the
    /// input set.
    #[arg(long)]
    val_input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training CSV for the nearest-neighbor audit of generated samples.
    #[arg(long)]
    nn_audit: Option<PathBuf>,
    /// 'code' (default when an autoencoder exists) or 'data'.
    #[arg(long)]
    audit_space: Option<String>,
    /// Write the full per-sample audit list as CSV.
    #[arg(long)]
    audit_out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    model: PathBuf,
    /// x0,y0,x1,y1 in data units (code units when an autoencoder exists);
    /// default is the recorded data bounding box.
    #[arg(long)]
    bounds: Option<String>,
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    #[arg(long, default_value_t = 500)]
    samples_s: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Entry point; returns the process exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::GenToy(a) => run_gen_toy(a),
        Command::Train(a) => run_train(a),
        Command::Generate(a) => run_generate(a),
        Command::ClusterEval(a) => run_cluster_eval(a),
        Command::ParzenEval(a) => run_parzen_eval(a),
        Command::Grid(a) => run_grid(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn positive(value: usize, flag: &str) -> Result<usize> {
    if value == 0 {
        return Err(Error::InvalidArgument(format!("{flag} must be >= 1")));
    }
    Ok(value)
}

fn positive_f64(value: f64, flag: &str) -> Result<f64> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "{flag} must be a positive number, got {value}"
        )));
    }
    Ok(value)
}

fn parse_f64_list(text: &str, flag: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|c| {
            c.trim().parse::<f64>().map_err(|_| {
                Error::InvalidArgument(format!("{flag}: '{c}' is not a number"))
            })
        })
        .collect()
}

fn parse_usize_list(text: &str, flag: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|c| {
            c.trim().parse::<usize>().map_err(|_| {
                Error::InvalidArgument(format!("{flag}: '{c}' is not a non-negative integer"))
            })
        })
        .collect()
}

fn run_gen_toy(a: GenToyArgs) -> Result<()> {
    let kind: data::ToyKind = a.kind.parse()?;
    positive(a.n, "--n")?;
    let ds = data::gen_toy(kind, a.n, a.noise, a.seed)?;
    let raw = ds.original_data();
    data::write_csv(&a.out, &raw, ds.labels.as_deref())?;
    println!(
        "gen-toy kind={} n={} noise={} seed={} out={}",
        a.kind,
        a.n,
        a.noise,
        a.seed,
        a.out.display()
    );
    Ok(())
}

fn load_input(path: &PathBuf, labels: bool, idx_labels: &Option<PathBuf>) -> Result<Dataset> {
    match idx_labels {
        Some(lab) => data::load_idx(path, lab),
        None => data::load_csv(path, labels),
    }
}

fn run_train(a: TrainArgs) -> Result<()> {
    positive(a.t1.max(1), "--t1")?; // t1/t2 may be 0; only reject overflow nonsense
    positive(a.batch, "--batch")?;
    positive_f64(a.alpha, "--alpha")?;
    positive_f64(a.beta, "--beta")?;
    positive(a.samples_s, "--samples-s")?;
    positive(a.latent_dim, "--latent-dim")?;
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Error::InvalidArgument(
            "--threshold must lie in [0, 1]".into(),
        ));
    }
    let hidden = parse_usize_list(&a.hidden, "--hidden")?;
    if hidden.iter().any(|&h| h == 0) {
        return Err(Error::InvalidArgument("--hidden sizes must be >= 1".into()));
    }
    let bandwidths = match &a.bandwidth {
        Some(text) => {
            let bw = parse_f64_list(text, "--bandwidth")?;
            for &b in &bw {
                positive_f64(b, "--bandwidth")?;
            }
            Some(bw)
        }
        None => None,
    };

    let dataset = load_input(&a.input, a.labels, &a.idx_labels)?;
    let k = if a.k == "auto" {
        let cap = (dataset.n() as f64).sqrt().ceil() as usize;
        KSelection::Auto {
            k_min: 1,
            k_max: cap.clamp(1, 20),
        }
    } else {
        let k: usize = a.k.parse().map_err(|_| {
            Error::InvalidArgument(format!("--k must be a number or 'auto', got '{}'", a.k))
        })?;
        KSelection::Fixed(positive(k, "--k")?)
    };

    let cfg = PipelineConfig {
        train: TrainConfig {
            k: match k {
                KSelection::Fixed(k) => k,
                KSelection::Auto { .. } => 2,
            },
            t1: a.t1,
            t2: a.t2,
            batch_size: a.batch,
            alpha: a.alpha,
            beta: a.beta,
            samples_s: a.samples_s,
            batch_threshold: a.threshold,
            weight_decay: a.weight_decay,
            latent_dim: a.latent_dim,
            hidden,
            seed: a.seed,
            val_fraction: a.val_fraction,
            ll_tol: a.ll_tol,
            ll_patience: a.ll_patience,
            ..Default::default()
        },
        k,
        use_autoencoder: a.ae,
        code_dim: a.code_dim,
        ae_epochs: a.ae_epochs,
        ae_learning_rate: a.ae_lr,
        ae_hidden: None,
        bandwidths,
        cluster_on_original: a.cluster_original,
    };

    // Metrics go to stdout live, or to a file written in one piece at the
    // end so a failed run leaves nothing behind.
    let mut lines: Vec<String> = Vec::new();
    let to_file = a.metrics.is_some();
    let (saved, report) = pipeline::train(&dataset, &cfg, |_, rec| {
        let line = metrics::format_iteration(rec);
        if to_file {
            lines.push(line);
        } else {
            println!("{line}");
        }
    })?;

    data::save_model(&saved, &a.out)?;
    let mut summary = format!(
        "train k={} iterations={} bandwidths={}",
        report.k,
        report.step2_iterations,
        metrics::join_f64(&report.bandwidths)
    );
    if let (Some(km), Some(fin)) = (report.kmeans_purity, report.final_purity) {
        summary.push_str(&format!(" kmeans_purity={km} final_purity={fin}"));
    }
    if to_file {
        lines.push(summary.clone());
        let mut text = lines.join("\n");
        text.push('\n');
        data::write_atomic(a.metrics.as_ref().unwrap(), text.as_bytes())?;
    }
    println!("{summary}");
    println!("model written to {}", a.out.display());
    Ok(())
}

fn run_generate(a: GenerateArgs) -> Result<()> {
    positive(a.n, "--n")?;
    let saved = data::load_model(&a.model)?;
    let samples = pipeline::generate_original(&saved, a.n, a.component, a.seed)?;
    data::write_csv(&a.out, &samples, None)?;
    println!(
        "generate n={} component={} out={}",
        a.n,
        a.component.map_or_else(|| "priors".into(), |c| c.to_string()),
        a.out.display()
    );
    Ok(())
}

fn run_cluster_eval(a: ClusterEvalArgs) -> Result<()> {
    positive(a.samples_s, "--samples-s")?;
    let saved = data::load_model(&a.model)?;
    let dataset = load_input(&a.input, true, &a.idx_labels)?;
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("--input must carry labels".into()))?;
    let assignments = pipeline::assign_with_samples(&saved, &dataset, a.samples_s, a.seed)?;
    let purity = crate::clustering::clustering_purity(&assignments, labels)?;
    if let Some(path) = &a.assignments {
        let as_i64: Vec<i64> = assignments.iter().map(|&c| c as i64).collect();
        data::write_csv(path, &dataset.original_data(), Some(&as_i64))?;
    }
    println!(
        "cluster-eval purity={purity} n={} k={}",
        dataset.n(),
        saved.model.k()
    );
    Ok(())
}

fn run_parzen_eval(a: ParzenEvalArgs) -> Result<()> {
    positive(a.gen_samples, "--gen-samples")?;
    let saved = data::load_model(&a.model)?;
    let test_ds = data::load_csv(&a.input, a.labels)?;
    let test = test_ds.original_data();
    let generated = pipeline::generate_original(&saved, a.gen_samples, None, a.seed)?;

    let sigma = match a.sigma {
        Some(s) => positive_f64(s, "--sigma")?,
        None => {
            let validation = match &a.val_input {
                Some(p) => data::load_csv(p, a.labels)?.original_data(),
                None => test.clone(),
            };
            let grid = match &a.sigma_grid {
                Some(text) => {
                    let g = parse_f64_list(text, "--sigma-grid")?;
                    for &s in &g {
                        positive_f64(s, "--sigma-grid")?;
                    }
                    g
                }
                None => {
                    let scale = median_pairwise_distance(
                        &generated,
                        1000,
                        &mut rng::derive(a.seed, StreamId::Eval, 1),
                    );
                    [0.05, 0.1, 0.2, 0.5, 1.0].iter().map(|f| f * scale).collect()
                }
            };
            eval::select_parzen_sigma(&generated, &validation, &grid)?
        }
    };
    let est = eval::parzen_log_likelihood(&generated, &test, sigma)?;
    println!(
        "parzen sigma={} mean_ll={} std_err={} n_test={} n_gen={}",
        est.sigma,
        est.mean_ll,
        est.std_err,
        test.rows(),
        generated.rows()
    );

    if let Some(train_path) = &a.nn_audit {
        let train_ds = data::load_csv(train_path, a.labels)?;
        let in_code = match a.audit_space.as_deref() {
            Some("code") => true,
            Some("data") => false,
            Some(other) => {
                return Err(Error::InvalidArgument(format!(
                    "--audit-space must be 'code' or 'data', got '{other}'"
                )))
            }
            None => saved.model.autoencoder().is_some(),
        };
        // Route both sets through the model's own preprocessing when
        // auditing in code space.
        let to_codes = |raw: &crate::mat::Mat| -> Result<crate::mat::Mat> {
            let normalized = saved.normalization.apply(raw)?;
            match saved.model.autoencoder() {
                Some(ae) => crate::autoencoder::encode(ae, &normalized),
                None => Ok(normalized),
            }
        };
        let (gen_m, train_m) = if in_code {
            (to_codes(&generated)?, to_codes(&train_ds.original_data())?)
        } else {
            (generated.clone(), train_ds.original_data())
        };
        let audit = eval::nearest_neighbor_audit(&gen_m, &train_m)?;
        let dists: Vec<f64> = audit.iter().map(|&(_, d)| d).collect();
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = dists.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "nn-audit space={} n={} mean_dist={mean} min_dist={min} max_dist={max}",
            if in_code { "code" } else { "data" },
            dists.len()
        );
        if let Some(path) = &a.audit_out {
            let mut text = String::from("index,distance\n");
            for (idx, d) in &audit {
                text.push_str(&format!("{idx},{d}\n"));
            }
            data::write_atomic(path, text.as_bytes())?;
        }
    }
    Ok(())
}

fn run_grid(a: GridArgs) -> Result<()> {
    let saved = data::load_model(&a.model)?;
    if a.resolution < 2 {
        return Err(Error::InvalidArgument("--resolution must be >= 2".into()));
    }
    positive(a.samples_s, "--samples-s")?;
    let bounds = match &a.bounds {
        Some(text) => {
            let v = parse_f64_list(text, "--bounds")?;
            if v.len() != 4 {
                return Err(Error::InvalidArgument(
                    "--bounds needs exactly x0,y0,x1,y1".into(),
                ));
            }
            (v[0], v[1], v[2], v[3])
        }
        None => match saved.model.autoencoder() {
            None => {
                let n = &saved.normalization;
                if n.dim() != 2 {
                    return Err(Error::InvalidArgument(
                        "--bounds is required for non-2-D data".into(),
                    ));
                }
                (
                    n.min()[0],
                    n.min()[1],
                    n.min()[0] + n.span()[0],
                    n.min()[1] + n.span()[1],
                )
            }
            Some(_) => {
                let cr = saved.model.code_range();
                if cr.dim() != 2 {
                    return Err(Error::InvalidArgument(
                        "--bounds is required for non-2-D code spaces".into(),
                    ));
                }
                (
                    cr.min()[0],
                    cr.min()[1],
                    cr.min()[0] + cr.span()[0],
                    cr.min()[1] + cr.span()[1],
                )
            }
        },
    };
    let text = data::export_grid(&saved, bounds, a.resolution, a.samples_s, a.seed)?;
    data::write_atomic(&a.out, text.as_bytes())?;
    println!(
        "grid resolution={} bounds={},{},{},{} out={}",
        a.resolution,
        bounds.0,
        bounds.1,
        bounds.2,
        bounds.3,
        a.out.display()
    );
    std::io::stdout().flush().ok();
    Ok(())
}
