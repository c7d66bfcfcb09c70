use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Codebook, LatentGrid};
use crate::archive::{Archive, NamedTensor};
use crate::imagecore::Image;
use crate::kv::KvConfig;
use crate::nn::{Conv2d, ConvTranspose2d, Layer, Real, Sequential, Tensor3};
use crate::{Error, Result};

pub const CODEC_KIND: &str = "codec";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Codebook size `K`.
    pub codebook_size: usize,
    /// Embedding dimension `d_c`.
    pub embed_dim: usize,
    /// Spatial stride of the encoder; a power of two.
    pub f_model: usize,
    pub hidden_channels: usize,
    pub in_channels: usize,
    /// Commitment weight.
    pub gamma: f64,
    pub learning_rate: f64,
    /// Optimizer steps over which the learning rate ramps up linearly.
    #[serde(default)]
    pub warmup_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Pixel range the model was trained on; fixed at `[-1, 1]`.
    pub pixel_range: (f32, f32),
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            codebook_size: 512,
            embed_dim: 64,
            f_model: 4,
            hidden_channels: 32,
            in_channels: 3,
            gamma: 0.25,
            learning_rate: 2e-3,
            warmup_steps: 300,
            epochs: 8,
            batch_size: 16,
            seed: 0,
            pixel_range: (-1.0, 1.0),
        }
    }
}

impl CodecConfig {
    /// Reads codec keys from a flat config, falling back to defaults.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            codebook_size: kv.get_or("codebook_size", d.codebook_size)?,
            embed_dim: kv.get_or("embed_dim", d.embed_dim)?,
            f_model: kv.get_or("f_model", d.f_model)?,
            hidden_channels: kv.get_or("codec_hidden", d.hidden_channels)?,
            in_channels: d.in_channels,
            gamma: kv.get_or("gamma", d.gamma)?,
            learning_rate: kv.get_or("codec_lr", d.learning_rate)?,
            warmup_steps: kv.get_or("codec_warmup", d.warmup_steps)?,
            epochs: kv.get_or("codec_epochs", d.epochs)?,
            batch_size: kv.get_or("codec_batch", d.batch_size)?,
            seed: kv.get_or("seed", d.seed)?,
            pixel_range: d.pixel_range,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.codebook_size < 2 {
            return bad(format!("codebook_size must be >= 2, got {}", self.codebook_size));
        }
        if !self.f_model.is_power_of_two() {
            return bad(format!("f_model must be a power of two, got {}", self.f_model));
        }
        if self.embed_dim == 0 || self.hidden_channels == 0 || self.in_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        // caps keep a corrupt checkpoint from requesting gigabytes
        if self.codebook_size > 1 << 16 || self.f_model > 64 || self.in_channels > 16 {
            return bad(format!("codebook {} or stride {} out of range", self.codebook_size, self.f_model));
        }
        if self.embed_dim > 1024 || self.hidden_channels > 1024 {
            return bad("channel counts above 1024".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.gamma >= 0.0 && self.learning_rate > 0.0) {
            return bad("gamma must be >= 0 and learning rate > 0".into());
        }
        Ok(())
    }

    fn stages(&self) -> usize {
        self.f_model.trailing_zeros() as usize
    }
}

/// The three terms of the VQ objective and their weighted sum
/// `recon + codebook + gamma * commit`.
///
/// Each squared norm is taken per spatial position (over channels or over
/// the embedding dimension) and averaged over positions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct VqLoss {
    pub total: f64,
    pub recon: f64,
    pub codebook: f64,
    pub commit: f64,
}

impl VqLoss {
    fn check_finite(self) -> Result<Self> {
        if [self.total, self.recon, self.codebook, self.commit].iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(Error::Divergence(format!(
                "non-finite loss: recon={} codebook={} commit={}",
                self.recon, self.codebook, self.commit
            )))
        }
    }
}

/// Evaluates the loss terms from already computed tensors. `indices` holds
/// the chosen codeword for every cell of `embedding`.
pub fn vq_loss_terms<T: Real>(
    x: &Tensor3<T>,
    x_hat: &Tensor3<T>,
    embedding: &Tensor3<T>,
    indices: &[u32],
    codebook: &Codebook<T>,
    gamma: f64,
) -> Result<VqLoss> {
    if x.shape() != x_hat.shape() {
        return Err(Error::Dimension(format!("reconstruction {:?} vs input {:?}", x_hat.shape(), x.shape())));
    }
    if embedding.channels != codebook.dim() || indices.len() != embedding.plane_len() {
        return Err(Error::Dimension("embedding does not match codebook/indices".into()));
    }
    let pixels = x.plane_len() as f64;
    let recon = x.data.iter().zip(&x_hat.data).map(|(a, b)| (*b - *a).as_f64().powi(2)).sum::<f64>() / pixels;
    let cells = embedding.plane_len();
    let mut dist = 0.0;
    for (cell, &k) in indices.iter().enumerate() {
        let c = codebook.vector(k as usize);
        for (d, cv) in c.iter().enumerate() {
            dist += (embedding.data[d * cells + cell] - *cv).as_f64().powi(2);
        }
    }
    let dist = dist / cells as f64;
    // the codebook and commitment terms share a value; they differ only in
    // which side the gradient flows to
    VqLoss { total: recon + dist + gamma * dist, recon, codebook: dist, commit: dist }.check_finite()
}

/// Encoder `E`, codebook and decoder `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecModel<T = f32> {
    config: CodecConfig,
    pub(crate) encoder: Sequential<T>,
    pub(crate) decoder: Sequential<T>,
    pub(crate) codebook: Codebook<T>,
}

impl<T: Real> CodecModel<T> {
    pub fn new(config: CodecConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (c_in, hid, dim) = (config.in_channels, config.hidden_channels, config.embed_dim);
        let relu_gain = 2f64.sqrt();
        let stages = config.stages();

        let mut enc = Vec::new();
        if stages == 0 {
            enc.push(Layer::Conv(Conv2d::new(&mut rng, c_in, hid, 3, 1, 1, relu_gain)));
            enc.push(Layer::Relu);
        }
        for s in 0..stages {
            let from = if s == 0 { c_in } else { hid };
            enc.push(Layer::Conv(Conv2d::new(&mut rng, from, hid, 4, 2, 1, relu_gain)));
            enc.push(Layer::Relu);
        }
        enc.push(Layer::Conv(Conv2d::new(&mut rng, hid, hid, 3, 1, 1, relu_gain)));
        enc.push(Layer::Relu);
        enc.push(Layer::Conv(Conv2d::new(&mut rng, hid, dim, 1, 1, 0, 1.0)));

        let mut dec = vec![
            Layer::Conv(Conv2d::new(&mut rng, dim, hid, 3, 1, 1, relu_gain)),
            Layer::Relu,
            Layer::Conv(Conv2d::new(&mut rng, hid, hid, 3, 1, 1, relu_gain)),
            Layer::Relu,
        ];
        if stages == 0 {
            dec.push(Layer::Conv(Conv2d::new(&mut rng, hid, c_in, 3, 1, 1, 1.0)));
        }
        for s in 0..stages {
            let last = s + 1 == stages;
            let to = if last { c_in } else { hid };
            dec.push(Layer::ConvT(ConvTranspose2d::new(&mut rng, hid, to, 4, 2, 1, if last { 1.0 } else { relu_gain })));
            if !last {
                dec.push(Layer::Relu);
            }
        }

        let codebook = Codebook::random(&mut rng, config.codebook_size, config.embed_dim)?;
        Ok(Self { config, encoder: Sequential::new(enc), decoder: Sequential::new(dec), codebook })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn codebook(&self) -> &Codebook<T> {
        &self.codebook
    }

    pub fn set_codebook(&mut self, codebook: Codebook<T>) -> Result<()> {
        if codebook.size() != self.config.codebook_size || codebook.dim() != self.config.embed_dim {
            return Err(Error::Dimension("replacement codebook has the wrong geometry".into()));
        }
        self.codebook = codebook;
        Ok(())
    }

    pub fn f_model(&self) -> usize {
        self.config.f_model
    }

    pub fn bits_per_index(&self) -> u32 {
        self.codebook.bits_per_index()
    }

    fn check_input(&self, x: &Image) -> Result<()> {
        if x.channels() != self.config.in_channels {
            return Err(Error::Dimension(format!(
                "codec expects {} channels, image has {}",
                self.config.in_channels,
                x.channels()
            )));
        }
        x.check_divisible(self.config.f_model)
    }

    /// Pre-quantization embedding `E(x)`, shape `d_c × H/f × W/f`.
    pub fn embed(&self, x: &Image) -> Result<Tensor3<T>> {
        self.check_input(x)?;
        self.encoder.forward(&x.to_tensor())
    }

    pub fn quantize_embedding(&self, e: &Tensor3<T>) -> Result<LatentGrid> {
        if e.channels != self.codebook.dim() {
            return Err(Error::Dimension("embedding dim does not match codebook".into()));
        }
        LatentGrid::new(e.height, e.width, quantize_cells(&self.codebook, e))
    }

    /// `Q(E(x))`: the index of the nearest codeword for every latent cell.
    pub fn encode(&self, x: &Image) -> Result<LatentGrid> {
        let e = self.embed(x)?;
        self.quantize_embedding(&e)
    }

    /// Codeword tensor for a grid, shape `d_c × h × w`.
    pub fn lookup(&self, z: &LatentGrid) -> Result<Tensor3<T>> {
        z.validate(self.codebook.size())?;
        let (h, w) = z.dims();
        let dim = self.codebook.dim();
        let cells = h * w;
        let mut t = Tensor3::zeros(dim, h, w);
        for (cell, &k) in z.indices().iter().enumerate() {
            for (d, &v) in self.codebook.vector(k as usize).iter().enumerate() {
                t.data[d * cells + cell] = v;
            }
        }
        Ok(t)
    }

    /// Raw decoder output before clamping.
    pub fn decode_raw(&self, z: &LatentGrid) -> Result<Tensor3<T>> {
        self.decoder.forward(&self.lookup(z)?)
    }

    /// `D(z)`, clamped into `[-1, 1]`. Works for any grid size.
    pub fn decode(&self, z: &LatentGrid) -> Result<Image> {
        Image::from_tensor(&self.decode_raw(z)?)
    }

    pub fn vq_loss(&self, x: &Image) -> Result<VqLoss> {
        let xt = x.to_tensor::<T>();
        let e = self.embed(x)?;
        let indices = quantize_cells(&self.codebook, &e);
        let z = LatentGrid::new(e.height, e.width, indices)?;
        let x_hat = self.decode_raw(&z)?;
        vq_loss_terms(&xt, &x_hat, &e, z.indices(), &self.codebook, self.config.gamma)
    }

    /// Gradient buffers laid out as [`Self::params_mut`].
    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        let mut g = self.encoder.zero_grads();
        g.extend(self.decoder.zero_grads());
        g.push(vec![T::zero(); self.codebook.vectors.len()]);
        g
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p.push(&mut self.codebook.vectors);
        p
    }

    /// Positions of the decoder tensors within [`Self::params`].
    pub fn decoder_params(&self) -> std::ops::Range<usize> {
        let start = self.encoder.params().len();
        start..start + self.decoder.params().len()
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p.push(&self.codebook.vectors);
        p
    }

    /// One sample's forward and backward pass. Gradients are added into
    /// `grads`; returns the loss and the chosen indices.
    ///
    /// The reconstruction gradient reaches the encoder straight through the
    /// quantizer; the codebook term only moves codewords and the commitment
    /// term only moves the encoder.
    pub fn accumulate_gradients(&self, x: &Image, grads: &mut [Vec<T>]) -> Result<(VqLoss, Vec<u32>)> {
        self.check_input(x)?;
        let xt = x.to_tensor::<T>();
        let (e, enc_trace) = self.encoder.forward_traced(&xt)?;
        let indices = quantize_cells(&self.codebook, &e);
        let z = LatentGrid::new(e.height, e.width, indices)?;
        let q = self.lookup(&z)?;
        let (x_hat, dec_trace) = self.decoder.forward_traced(&q)?;
        let loss = vq_loss_terms(&xt, &x_hat, &e, z.indices(), &self.codebook, self.config.gamma)?;

        let pixels = T::of(xt.plane_len() as f64);
        let two = T::of(2.0);
        let mut g_out = x_hat.clone();
        for (g, &v) in g_out.data.iter_mut().zip(&xt.data) {
            *g = two * (*g - v) / pixels;
        }
        let n_enc = self.encoder.params().len();
        let n_dec = self.decoder.params().len();
        let (enc_grads, rest) = grads.split_at_mut(n_enc);
        let (dec_grads, cb_grad) = rest.split_at_mut(n_dec);
        let mut g_e = self
            .decoder
            .backward(&dec_trace, g_out, dec_grads, true)
            .expect("input gradient requested");

        let cells = e.plane_len();
        let inv_cells = T::of(1.0 / cells as f64);
        let gamma = T::of(self.config.gamma);
        let dim = self.codebook.dim();
        let cb = &mut cb_grad[0];
        for (cell, &k) in z.indices().iter().enumerate() {
            let c = self.codebook.vector(k as usize);
            for d in 0..dim {
                let diff = e.data[d * cells + cell] - c[d];
                g_e.data[d * cells + cell] += gamma * two * diff * inv_cells;
                cb[k as usize * dim + d] -= two * diff * inv_cells;
            }
        }
        self.encoder.backward(&enc_trace, g_e, enc_grads, false);
        Ok((loss, z.indices().to_vec()))
    }
}

fn quantize_cells<T: Real>(codebook: &Codebook<T>, e: &Tensor3<T>) -> Vec<u32> {
    let cells = e.plane_len();
    let mut buf = vec![T::zero(); e.channels];
    (0..cells)
        .map(|cell| {
            for (d, b) in buf.iter_mut().enumerate() {
                *b = e.data[d * cells + cell];
            }
            codebook.nearest(&buf)
        })
        .collect()
}

fn layer_tensors(prefix: &str, net: &Sequential<f32>) -> (Vec<String>, Vec<Vec<usize>>) {
    let mut names = Vec::new();
    let mut shapes = Vec::new();
    for (i, layer) in net.layers.iter().enumerate() {
        let (wshape, out) = match layer {
            Layer::Conv(c) => (vec![c.out_channels, c.in_channels, c.kernel, c.kernel], c.out_channels),
            Layer::ConvT(c) => (vec![c.in_channels, c.out_channels, c.kernel, c.kernel], c.out_channels),
            Layer::Relu => continue,
        };
        names.push(format!("{prefix}.{i}.weight"));
        shapes.push(wshape);
        names.push(format!("{prefix}.{i}.bias"));
        shapes.push(vec![out]);
    }
    (names, shapes)
}

impl CodecModel<f32> {
    fn tensor_layout(&self) -> (Vec<String>, Vec<Vec<usize>>) {
        let (mut names, mut shapes) = layer_tensors("encoder", &self.encoder);
        let (n2, s2) = layer_tensors("decoder", &self.decoder);
        names.extend(n2);
        shapes.extend(s2);
        names.push("codebook".into());
        shapes.push(vec![self.codebook.size(), self.codebook.dim()]);
        (names, shapes)
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let (names, shapes) = self.tensor_layout();
        let tensors = names
            .into_iter()
            .zip(shapes)
            .zip(self.params())
            .map(|((name, shape), data)| NamedTensor { name, shape, data: data.to_vec() })
            .collect();
        Ok(Archive {
            kind: CODEC_KIND.into(),
            config: serde_json::to_value(&self.config).map_err(|e| Error::Checkpoint(e.to_string()))?,
            tensors,
        })
    }

    pub fn from_archive(archive: &Archive) -> Result<Self> {
        archive.expect_kind(CODEC_KIND)?;
        let config: CodecConfig = archive.parse_config()?;
        let mut model = Self::new(config)?;
        let (names, _) = model.tensor_layout();
        archive.restore_into(&names, model.params_mut())?;
        Ok(model)
    }
}
