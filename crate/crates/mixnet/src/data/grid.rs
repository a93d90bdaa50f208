//! Membership-contour export: evaluates the per-component membership
//! probabilities on a 2-D grid as delimiter-separated text for plotting.

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::mixture::{compute_memberships, likelihood_matrix_against};
use crate::nn;
use crate::rng::{self, StreamId};

use super::SavedModel;

/// Evaluates memberships on a `resolution x resolution` grid over
/// `bounds = (x0, y0, x1, y1)` and renders one `x,y,m_1,...,m_K` row per
/// grid point under a header line.
///
/// Without an autoencoder the model must be 2-D and the bounds are in
/// original data units; with one, the code space must be 2-D and the
/// bounds are in raw code units. One latent set of `samples_s` draws is
/// shared by all components.
pub fn export_grid(
    saved: &SavedModel,
    bounds: (f64, f64, f64, f64),
    resolution: usize,
    samples_s: usize,
    seed: u64,
) -> Result<String> {
    let model = &saved.model;
    if resolution < 2 {
        return Err(Error::InvalidArgument(
            "grid resolution must be at least 2".into(),
        ));
    }
    if samples_s == 0 {
        return Err(Error::InvalidArgument("samples_s must be >= 1".into()));
    }
    if model.spec().output_dim() != 2 {
        return Err(Error::InvalidArgument(format!(
            "grid export needs a 2-D generator space, model has {} dimensions",
            model.spec().output_dim()
        )));
    }
    let (x0, y0, x1, y1) = bounds;
    if !(x1 > x0) || !(y1 > y0) {
        return Err(Error::InvalidArgument(format!(
            "degenerate grid bounds ({x0}, {y0}) .. ({x1}, {y1})"
        )));
    }

    // Grid points in user units, row-major with x varying fastest.
    let mut points = Mat::zeros(resolution * resolution, 2);
    for iy in 0..resolution {
        let y = y0 + (y1 - y0) * iy as f64 / (resolution - 1) as f64;
        for ix in 0..resolution {
            let x = x0 + (x1 - x0) * ix as f64 / (resolution - 1) as f64;
            let row = points.row_mut(iy * resolution + ix);
            row[0] = x;
            row[1] = y;
        }
    }

    // Map into the generator target space.
    let targets = match model.autoencoder() {
        None => {
            if saved.normalization.dim() != 2 {
                return Err(Error::InvalidArgument(
                    "grid export needs 2-D data when no autoencoder is attached".into(),
                ));
            }
            let normalized = saved.normalization.apply(&points)?;
            model.code_range().to_unit(&normalized)?
        }
        Some(_) => model.code_range().to_unit(&points)?,
    };

    // One shared latent set keeps component columns exchangeable.
    let mut r = rng::derive(seed, StreamId::Eval, 0);
    let z = nn::sample_latent(model.spec().input_dim(), samples_s, &mut r);
    let samples: Vec<Mat> = model
        .networks()
        .iter()
        .map(|net| nn::forward(net, &z))
        .collect::<Result<_>>()?;
    let lik = likelihood_matrix_against(&targets, &samples, &model.kernel().likelihood_kernel())?;
    let memberships = compute_memberships(&lik, model.priors())?;

    let mut out = String::from("x,y");
    for j in 1..=model.k() {
        out.push_str(&format!(",m{j}"));
    }
    out.push('\n');
    for (point, ms) in points.iter_rows().zip(memberships.iter_rows()) {
        out.push_str(&format!("{},{}", point[0], point[1]));
        for m in ms {
            out.push_str(&format!(",{m}"));
        }
        out.push('\n');
    }
    Ok(out)
}
