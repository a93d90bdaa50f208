//! Versioned binary model checkpoint.
//!
//! Layout: the 8-byte magic `MIXNET01`, then little-endian `u64` dimensions
//! and `f64` payloads in declaration order: K, generator spec, per-network
//! weights and biases, priors, kernel bandwidths, optional autoencoder
//! (encoder + decoder in the same spec/params encoding), code range,
//! normalization record, and the training seed. Loading is strict: wrong
//! magic, a version other than `01`, truncation, and trailing bytes are all
//! distinct errors, and a failed load never yields a partial model.

use std::path::Path;

use crate::autoencoder::{Autoencoder, CodeRange};
use crate::error::{Error, Result};
use crate::kernel::KernelConfig;
use crate::mat::Mat;
use crate::mixture::MixtureModel;
use crate::nn::{MlpNetwork, MlpSpec, OutputActivation};

use super::{write_atomic, Normalization};

const MAGIC: &[u8; 8] = b"MIXNET01";

/// A trained model plus everything needed to use it on raw data.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub model: MixtureModel,
    /// Maps raw input units to the normalized space the model was fit in.
    pub normalization: Normalization,
    /// Master training seed, kept for provenance.
    pub seed: u64,
}

struct Writer {
    bytes: Vec<u8>,
}

impl Writer {
    fn u64(&mut self, v: u64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn spec(&mut self, spec: &MlpSpec) {
        self.u64(spec.layer_sizes().len() as u64);
        for &s in spec.layer_sizes() {
            self.u64(s as u64);
        }
        self.u64(match spec.output_activation() {
            OutputActivation::Sigmoid => 0,
            OutputActivation::Linear => 1,
        });
    }

    fn network(&mut self, net: &MlpNetwork) {
        for (w, b) in net.weights().iter().zip(net.biases()) {
            self.f64s(w.data());
            self.f64s(b);
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u64(&mut self) -> Result<u64> {
        if self.pos + 8 > self.bytes.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&self.bytes[self.pos..self.pos + 8]);
        self.pos += 8;
        Ok(u64::from_le_bytes(buf))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        // A length that cannot fit in the remaining bytes is corruption.
        if v > (self.bytes.len() as u64) {
            return Err(Error::Format(format!(
                "checkpoint corrupt: implausible {what} count {v}"
            )));
        }
        Ok(v as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if self.pos + 8 * n > self.bytes.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&self.bytes[self.pos..self.pos + 8]);
            self.pos += 8;
            out.push(f64::from_le_bytes(buf));
        }
        Ok(out)
    }

    fn spec(&mut self) -> Result<MlpSpec> {
        let n = self.len("layer")?;
        let mut sizes = Vec::with_capacity(n);
        for _ in 0..n {
            sizes.push(self.u64()? as usize);
        }
        let act = match self.u64()? {
            0 => OutputActivation::Sigmoid,
            1 => OutputActivation::Linear,
            other => {
                return Err(Error::Format(format!(
                    "checkpoint corrupt: unknown activation tag {other}"
                )))
            }
        };
        MlpSpec::with_output(sizes, act)
    }

    fn network(&mut self, spec: &MlpSpec) -> Result<MlpNetwork> {
        let sizes = spec.layer_sizes();
        let mut weights = Vec::with_capacity(spec.n_layers());
        let mut biases = Vec::with_capacity(spec.n_layers());
        for l in 0..spec.n_layers() {
            let (inp, out) = (sizes[l], sizes[l + 1]);
            weights.push(Mat::from_flat(out, inp, self.f64s(out * inp)?)?);
            biases.push(self.f64s(out)?);
        }
        MlpNetwork::from_parts(spec.clone(), weights, biases)
    }
}

/// Serializes a model to the checkpoint byte layout.
pub fn encode_model(saved: &SavedModel) -> Vec<u8> {
    let mut w = Writer {
        bytes: MAGIC.to_vec(),
    };
    let model = &saved.model;
    w.u64(model.k() as u64);
    w.spec(model.spec());
    for net in model.networks() {
        w.network(net);
    }
    w.f64s(model.priors());
    w.u64(model.kernel().bandwidths().len() as u64);
    w.f64s(model.kernel().bandwidths());
    match model.autoencoder() {
        Some(ae) => {
            w.u64(1);
            w.spec(ae.encoder().spec());
            w.network(ae.encoder());
            w.spec(ae.decoder().spec());
            w.network(ae.decoder());
        }
        None => w.u64(0),
    }
    let cr = model.code_range();
    w.u64(cr.dim() as u64);
    w.f64s(cr.min());
    w.f64s(cr.span());
    w.u64(saved.normalization.dim() as u64);
    w.f64s(saved.normalization.min());
    w.f64s(saved.normalization.span());
    w.u64(saved.seed);
    w.bytes
}

/// Parses checkpoint bytes back into a model.
pub fn decode_model(bytes: &[u8]) -> Result<SavedModel> {
    if bytes.len() < 8 {
        return Err(Error::Format("checkpoint truncated before magic".into()));
    }
    if &bytes[..6] != b"MIXNET" {
        return Err(Error::Format("not a mixnet checkpoint (bad magic)".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {}",
            String::from_utf8_lossy(&bytes[6..8])
        )));
    }
    let mut c = Cursor { bytes, pos: 8 };
    let k = c.len("network")?;
    let spec = c.spec()?;
    let mut networks = Vec::with_capacity(k);
    for _ in 0..k {
        networks.push(c.network(&spec)?);
    }
    let priors = c.f64s(k)?;
    let n_bw = c.len("bandwidth")?;
    let bandwidths = c.f64s(n_bw)?;
    let autoencoder = match c.u64()? {
        0 => None,
        1 => {
            let enc_spec = c.spec()?;
            let encoder = c.network(&enc_spec)?;
            let dec_spec = c.spec()?;
            let decoder = c.network(&dec_spec)?;
            Some(Autoencoder::from_parts(encoder, decoder)?)
        }
        other => {
            return Err(Error::Format(format!(
                "checkpoint corrupt: autoencoder flag {other}"
            )))
        }
    };
    let cr_dim = c.len("code-range")?;
    let cr_min = c.f64s(cr_dim)?;
    let cr_span = c.f64s(cr_dim)?;
    let code_range = CodeRange::from_parts(cr_min, cr_span)?;
    let norm_dim = c.len("normalization")?;
    let norm_min = c.f64s(norm_dim)?;
    let norm_span = c.f64s(norm_dim)?;
    let normalization = Normalization::from_parts(norm_min, norm_span)?;
    let seed = c.u64()?;
    if c.pos != bytes.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    let kernel = KernelConfig::new(bandwidths)?;
    let model = MixtureModel::new(networks, priors, kernel, autoencoder, code_range)?;
    Ok(SavedModel {
        model,
        normalization,
        seed,
    })
}

pub fn save_model(saved: &SavedModel, path: &Path) -> Result<()> {
    write_atomic(path, &encode_model(saved))
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    decode_model(&bytes)
}
