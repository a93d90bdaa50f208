//! Dimension-reduction pre-processing: an encoder/decoder MLP pair trained
//! on squared reconstruction error. Generators then operate in code space
//! and their outputs are decoded back to the data space.
//!
//! The code layer is linear so codes can be negative; the [`CodeRange`]
//! affine map bridges the gap between raw codes and the `[0,1]` space the
//! sigmoid generators produce.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::{self, MlpNetwork, MlpSpec, OutputActivation};
use crate::rng::{self, StreamId};

/// Per-coordinate affine map between raw code space and the generator
/// target space, recorded from the training codes. Codes map into
/// `[MARGIN, 1 - MARGIN]` rather than the full unit interval: sigmoid
/// outputs approach 0 and 1 only with saturated pre-activations, where
/// gradients are an order of magnitude weaker, so extreme data values
/// would otherwise be systematically under-covered.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeRange {
    min: Vec<f64>,
    span: Vec<f64>,
}

/// Distance kept between mapped codes and the sigmoid's asymptotes.
const MARGIN: f64 = 0.0;

impl CodeRange {
    /// Records the empirical per-coordinate `[min, max]` of `codes`.
    pub fn from_data(codes: &Mat) -> CodeRange {
        let d = codes.cols();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for row in codes.iter_rows() {
            for (c, &v) in row.iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        let span = min.iter().zip(&max).map(|(a, b)| b - a).collect();
        CodeRange { min, span }
    }

    pub fn from_parts(min: Vec<f64>, span: Vec<f64>) -> Result<CodeRange> {
        if min.len() != span.len() {
            return Err(Error::ShapeMismatch("code range min/span lengths".into()));
        }
        Ok(CodeRange { min, span })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn span(&self) -> &[f64] {
        &self.span
    }

    /// Maps raw codes into `[MARGIN, 1 - MARGIN]`; constant coordinates map
    /// to 0.5.
    pub fn to_unit(&self, codes: &Mat) -> Result<Mat> {
        self.check(codes)?;
        let mut out = codes.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for c in 0..self.min.len() {
                row[c] = if self.span[c] > 0.0 {
                    MARGIN + (1.0 - 2.0 * MARGIN) * (row[c] - self.min[c]) / self.span[c]
                } else {
                    0.5
                };
            }
        }
        Ok(out)
    }

    /// Maps generator outputs back to raw code space.
    pub fn from_unit(&self, unit: &Mat) -> Result<Mat> {
        self.check(unit)?;
        let mut out = unit.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            for c in 0..self.min.len() {
                row[c] = self.min[c] + (row[c] - MARGIN) / (1.0 - 2.0 * MARGIN) * self.span[c];
            }
        }
        Ok(out)
    }

    fn check(&self, m: &Mat) -> Result<()> {
        if m.cols() != self.min.len() {
            return Err(Error::ShapeMismatch(format!(
                "code range has {} coordinates, matrix has {}",
                self.min.len(),
                m.cols()
            )));
        }
        Ok(())
    }
}

/// Encoder (data -> code, linear output) and decoder (code -> data,
/// sigmoid output) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    encoder: MlpNetwork,
    decoder: MlpNetwork,
}

impl Autoencoder {
    pub fn from_parts(encoder: MlpNetwork, decoder: MlpNetwork) -> Result<Autoencoder> {
        if encoder.spec().output_dim() != decoder.spec().input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "encoder emits {} dims, decoder expects {}",
                encoder.spec().output_dim(),
                decoder.spec().input_dim()
            )));
        }
        Ok(Autoencoder { encoder, decoder })
    }

    pub fn encoder(&self) -> &MlpNetwork {
        &self.encoder
    }

    pub fn decoder(&self) -> &MlpNetwork {
        &self.decoder
    }

    pub fn code_dim(&self) -> usize {
        self.encoder.spec().output_dim()
    }

    pub fn data_dim(&self) -> usize {
        self.encoder.spec().input_dim()
    }
}

/// Per-epoch record of autoencoder training.
#[derive(Debug, Clone)]
pub struct AeReport {
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub epochs_run: usize,
}

/// Training knobs for [`train_autoencoder`]; the mixture pipeline fills
/// these from its own configuration.
#[derive(Debug, Clone)]
pub struct AeTrainConfig {
    /// Hidden sizes of the encoder; the decoder mirrors them. `None` picks
    /// one hidden layer of `max(2 * code_dim, 128)` units.
    pub hidden: Option<Vec<usize>>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        AeTrainConfig {
            hidden: None,
            epochs: 200,
            batch_size: 100,
            learning_rate: 0.5,
            patience: 10,
            seed: 0,
        }
    }
}

/// Mean squared error between reconstruction and target.
fn mse(a: &Mat, b: &Mat) -> f64 {
    let n = (a.rows() * a.cols()) as f64;
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

/// Trains an encoder/decoder pair on `x` (rows in `[0,1]`) with mini-batch
/// SGD on mean squared reconstruction error. A tenth of the rows are held
/// out to stop early when validation error stops improving.
pub fn train_autoencoder(x: &Mat, code_dim: usize, cfg: &AeTrainConfig) -> Result<(Autoencoder, AeReport)> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let d = x.cols();
    if code_dim >= d {
        return Err(Error::InvalidArgument(format!(
            "code_dim {code_dim} must be smaller than the data dimension {d}"
        )));
    }

    let hidden = cfg
        .hidden
        .clone()
        .unwrap_or_else(|| vec![(2 * code_dim).max(128)]);
    let mut enc_sizes = vec![d];
    enc_sizes.extend_from_slice(&hidden);
    enc_sizes.push(code_dim);
    let mut dec_sizes = vec![code_dim];
    dec_sizes.extend(hidden.iter().rev());
    dec_sizes.push(d);
    let enc_spec = MlpSpec::with_output(enc_sizes, OutputActivation::Linear)?;
    let dec_spec = MlpSpec::with_output(dec_sizes, OutputActivation::Sigmoid)?;

    let mut init_rng = rng::derive(cfg.seed, StreamId::Autoencoder, 0);
    let mut encoder = nn::init_network_with_rng(&enc_spec, &mut init_rng);
    let mut decoder = nn::init_network_with_rng(&dec_spec, &mut init_rng);

    // Hold out up to 10% (at least one row when possible) for early stopping.
    let n = x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut split_rng = rng::derive(cfg.seed, StreamId::Autoencoder, 1);
    order.shuffle(&mut split_rng);
    let n_val = if n >= 10 { n / 10 } else { 0 };
    let val = x.select_rows(&order[..n_val]);
    let train_idx: Vec<usize> = order[n_val..].to_vec();
    let train = x.select_rows(&train_idx);

    let mut shuffle_rng = rng::derive(cfg.seed, StreamId::Autoencoder, 2);
    let mut report = AeReport {
        train_mse: Vec::new(),
        val_mse: Vec::new(),
        epochs_run: 0,
    };
    let mut best_val = f64::INFINITY;
    let mut stall = 0usize;

    let reconstruct = |enc: &MlpNetwork, dec: &MlpNetwork, m: &Mat| -> Result<Mat> {
        nn::forward(dec, &nn::forward(enc, m)?)
    };

    let mut idx: Vec<usize> = (0..train.rows()).collect();
    for epoch in 0..cfg.epochs {
        idx.shuffle(&mut shuffle_rng);
        for chunk in idx.chunks(cfg.batch_size.max(1)) {
            let batch = train.select_rows(chunk);
            let enc_cache = nn::forward_cached(&encoder, &batch)?;
            let dec_cache = nn::forward_cached(&decoder, enc_cache.output())?;
            let recon = dec_cache.output();

            // Gradient of mean squared error over the batch.
            let scale = 2.0 / (batch.rows() * d) as f64;
            let mut grad_out = Mat::zeros(batch.rows(), d);
            for (g, (r, t)) in grad_out
                .data_mut()
                .iter_mut()
                .zip(recon.data().iter().zip(batch.data()))
            {
                *g = scale * (r - t);
            }

            let (dec_grads, d_code) = nn::backward_cached(&decoder, &dec_cache, &grad_out)?;
            let (enc_grads, _) = nn::backward_cached(&encoder, &enc_cache, &d_code)?;
            nn::sgd_step(&mut decoder, &dec_grads, cfg.learning_rate, 0.0)?;
            nn::sgd_step(&mut encoder, &enc_grads, cfg.learning_rate, 0.0)?;
        }

        let train_err = mse(&reconstruct(&encoder, &decoder, &train)?, &train);
        if !train_err.is_finite() {
            return Err(Error::Numeric(format!(
                "autoencoder reconstruction error diverged at epoch {epoch}"
            )));
        }
        report.train_mse.push(train_err);
        report.epochs_run = epoch + 1;

        if val.rows() > 0 {
            let val_err = mse(&reconstruct(&encoder, &decoder, &val)?, &val);
            report.val_mse.push(val_err);
            if val_err < best_val * (1.0 - 1e-4) {
                best_val = val_err;
                stall = 0;
            } else {
                stall += 1;
                if stall >= cfg.patience {
                    break;
                }
            }
        }
    }

    Ok((Autoencoder { encoder, decoder }, report))
}

/// Pure forward pass through the encoder half.
pub fn encode(ae: &Autoencoder, x: &Mat) -> Result<Mat> {
    nn::forward(&ae.encoder, x)
}

/// Pure forward pass through the decoder half.
pub fn decode(ae: &Autoencoder, codes: &Mat) -> Result<Mat> {
    nn::forward(&ae.decoder, codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Points on the segment from (0.2, 0.3) to (0.8, 0.7).
    fn segment_data(n: usize, seed: u64) -> Mat {
        let mut r = rng::seeded(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let t: f64 = r.random_range(0.0..1.0);
                vec![0.2 + 0.6 * t, 0.3 + 0.4 * t]
            })
            .collect();
        Mat::from_rows(&rows).unwrap()
    }

    /// PCA reconstruction error with one component: the smaller eigenvalue
    /// of the 2x2 covariance, times N. Independent closed-form oracle.
    fn pca_line_residual(x: &Mat) -> f64 {
        let n = x.rows() as f64;
        let mx = x.iter_rows().map(|r| r[0]).sum::<f64>() / n;
        let my = x.iter_rows().map(|r| r[1]).sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for r in x.iter_rows() {
            let (a, b) = (r[0] - mx, r[1] - my);
            sxx += a * a;
            sxy += a * b;
            syy += b * b;
        }
        let tr = sxx + syy;
        let det = sxx * syy - sxy * sxy;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        // Smaller eigenvalue of the scatter matrix = residual sum of squares.
        tr / 2.0 - disc
    }

    #[test]
    fn line_segment_is_recoverable_through_one_code() {
        let x = segment_data(500, 42);

        // Oracle: the manifold is exactly linear, so rank-1 PCA loses nothing.
        let residual = pca_line_residual(&x);
        assert!(residual < 1e-18, "PCA residual {residual}");

        let cfg = AeTrainConfig {
            epochs: 400,
            batch_size: 50,
            learning_rate: 1.0,
            seed: 1,
            ..Default::default()
        };
        let (ae, report) = train_autoencoder(&x, 1, &cfg).unwrap();
        let val = report.val_mse.last().copied().unwrap();
        assert!(val < 1e-3, "validation mse {val}");

        let recon = decode(&ae, &encode(&ae, &x).unwrap()).unwrap();
        let err = mse(&recon, &x);
        assert!(err < 1e-3, "full-set mse {err}");
    }

    #[test]
    fn reconstructions_stay_in_open_unit_interval() {
        let x = segment_data(100, 7);
        let cfg = AeTrainConfig {
            epochs: 5,
            seed: 2,
            ..Default::default()
        };
        let (ae, _) = train_autoencoder(&x, 1, &cfg).unwrap();
        let recon = decode(&ae, &encode(&ae, &x).unwrap()).unwrap();
        assert!(recon.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_weight_autoencoder_reconstructs_to_half() {
        let enc = MlpNetwork::from_parts(
            MlpSpec::with_output(vec![2, 3, 1], OutputActivation::Linear).unwrap(),
            vec![Mat::zeros(3, 2), Mat::zeros(1, 3)],
            vec![vec![0.0; 3], vec![0.0]],
        )
        .unwrap();
        let dec = MlpNetwork::from_parts(
            MlpSpec::with_output(vec![1, 3, 2], OutputActivation::Sigmoid).unwrap(),
            vec![Mat::zeros(3, 1), Mat::zeros(2, 3)],
            vec![vec![0.0; 3], vec![0.0; 2]],
        )
        .unwrap();
        let ae = Autoencoder::from_parts(enc, dec).unwrap();
        let x = segment_data(10, 3);
        let recon = decode(&ae, &encode(&ae, &x).unwrap()).unwrap();
        assert!(recon.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn encode_is_deterministic_and_shapes_round_trip() {
        let x = segment_data(40, 9);
        let cfg = AeTrainConfig {
            epochs: 3,
            seed: 4,
            ..Default::default()
        };
        let (ae, _) = train_autoencoder(&x, 1, &cfg).unwrap();
        let a = encode(&ae, &x).unwrap();
        let b = encode(&ae, &x).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows(), x.rows());
        assert_eq!(a.cols(), 1);
        let recon = decode(&ae, &a).unwrap();
        assert_eq!(recon.rows(), x.rows());
        assert_eq!(recon.cols(), x.cols());
    }

    #[test]
    fn training_error_trend_is_non_increasing() {
        let x = segment_data(300, 11);
        let cfg = AeTrainConfig {
            epochs: 60,
            batch_size: 50,
            learning_rate: 0.8,
            patience: 60,
            seed: 5,
            ..Default::default()
        };
        let (_, report) = train_autoencoder(&x, 1, &cfg).unwrap();
        // Compare 5-epoch moving averages to tolerate mini-batch noise.
        let ma: Vec<f64> = report
            .train_mse
            .windows(5)
            .map(|w| w.iter().sum::<f64>() / 5.0)
            .collect();
        let violations = ma.windows(2).filter(|w| w[1] > w[0] * 1.02).count();
        assert_eq!(violations, 0, "moving average rose: {:?}", ma);
    }

    #[test]
    fn rejects_code_dim_not_smaller_than_data_dim() {
        let x = segment_data(20, 1);
        let cfg = AeTrainConfig::default();
        assert!(train_autoencoder(&x, 2, &cfg).is_err());
        assert!(train_autoencoder(&x, 3, &cfg).is_err());
    }

    #[test]
    fn rejects_empty_dataset() {
        let x = Mat::zeros(0, 3);
        assert!(train_autoencoder(&x, 1, &AeTrainConfig::default()).is_err());
    }

    #[test]
    fn code_range_round_trips_and_handles_constant_coordinates() {
        let codes = Mat::from_rows(&[vec![-2.0, 7.0], vec![3.0, 7.0], vec![0.5, 7.0]]).unwrap();
        let cr = CodeRange::from_data(&codes);
        assert_eq!(cr.span()[1], 0.0);
        let unit = cr.to_unit(&codes).unwrap();
        for r in unit.iter_rows() {
            assert!((0.0..=1.0).contains(&r[0]));
            assert_eq!(r[1], 0.5);
        }
        let back = cr.from_unit(&unit).unwrap();
        for (orig, round) in codes.iter_rows().zip(back.iter_rows()) {
            assert!((orig[0] - round[0]).abs() < 1e-12);
            assert_eq!(round[1], 7.0);
        }
    }
}
