//! Autoencoder `Q_phi` over mixed-type rows.
//!
//! Each categorical feature enters the encoder as a learned embedding row
//! (one per category); continuous features enter as their normalized value.
//! The decoder reconstructs that embedded representation. Embeddings are
//! updated through the encoder input gradient only; the reconstruction
//! target is held fixed for each step.

use std::collections::BTreeMap;

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSchema, Instance};
use crate::error::{Error, Result};
use crate::nn::{self, parse_versioned, Activation, Gradients, LayerSpec, Loss, MlpNetwork, NetworkDoc, Optimizer, TrainConfig, TrainReport};

pub const DEFAULT_EMBEDDING_DIM: usize = 256;
pub const DEFAULT_CATEGORY_WIDTH: usize = 8;
pub const DEFAULT_HIDDEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    /// Latent size `E`.
    pub embedding_dim: usize,
    /// Width of each categorical embedding row.
    pub category_width: usize,
    pub hidden: usize,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            category_width: DEFAULT_CATEGORY_WIDTH,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Slot {
    Continuous,
    /// Row-major `(categories, width)` table.
    Categorical { width: usize, table: Vec<f64> },
}

impl Slot {
    fn width(&self) -> usize {
        match self {
            Slot::Continuous => 1,
            Slot::Categorical { width, .. } => *width,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    encoder: MlpNetwork,
    decoder: MlpNetwork,
    embedding_dim: usize,
    names: Vec<String>,
    slots: Vec<Slot>,
    trained_epochs: usize,
}

impl Autoencoder {
    /// Freshly initialized (untrained) autoencoder for `schema`.
    pub fn new(schema: &FeatureSchema, cfg: &AutoencoderConfig, seed: u64) -> Result<Self> {
        if cfg.embedding_dim == 0 {
            return Err(Error::Config("embedding dimension E must be > 0".into()));
        }
        if cfg.category_width == 0 || cfg.hidden == 0 {
            return Err(Error::Config("autoencoder widths must be > 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = Uniform::new(0.0, 1.0).expect("valid range");
        let slots: Vec<Slot> = schema
            .features
            .iter()
            .map(|f| {
                if f.is_categorical() {
                    let n = f.categories.len() * cfg.category_width;
                    Slot::Categorical {
                        width: cfg.category_width,
                        table: (0..n).map(|_| init.sample(&mut rng)).collect(),
                    }
                } else {
                    Slot::Continuous
                }
            })
            .collect();
        let input = slots.iter().map(Slot::width).sum();
        let encoder = MlpNetwork::new(
            input,
            &[
                LayerSpec::new(cfg.hidden, Activation::Relu, 0.0),
                LayerSpec::new(cfg.embedding_dim, Activation::Identity, 0.0),
            ],
            &mut rng,
        )?;
        let decoder = MlpNetwork::new(
            cfg.embedding_dim,
            &[
                LayerSpec::new(cfg.hidden, Activation::Relu, 0.0),
                LayerSpec::new(input, Activation::Identity, 0.0),
            ],
            &mut rng,
        )?;
        Ok(Self {
            encoder,
            decoder,
            embedding_dim: cfg.embedding_dim,
            names: schema.features.iter().map(|f| f.name.clone()).collect(),
            slots,
            trained_epochs: 0,
        })
    }

    /// Replaces both networks, e.g. with hand-built ones, keeping the
    /// embedding tables. `trained_epochs` marks the result as trained when > 0.
    pub fn with_networks(mut self, encoder: MlpNetwork, decoder: MlpNetwork, trained_epochs: usize) -> Result<Self> {
        let input = self.encoder.input_dim();
        if encoder.input_dim() != input
            || decoder.output_dim() != input
            || encoder.output_dim() != decoder.input_dim()
        {
            return Err(Error::Shape(format!(
                "networks must be {input}->E and E->{input}, got {}->{} and {}->{}",
                encoder.input_dim(),
                encoder.output_dim(),
                decoder.input_dim(),
                decoder.output_dim()
            )));
        }
        self.embedding_dim = encoder.output_dim();
        self.encoder = encoder;
        self.decoder = decoder;
        self.trained_epochs = trained_epochs;
        Ok(self)
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn trained_epochs(&self) -> usize {
        self.trained_epochs
    }

    pub fn is_trained(&self) -> bool {
        self.trained_epochs > 0
    }

    pub fn encoder(&self) -> &MlpNetwork {
        &self.encoder
    }

    pub fn decoder(&self) -> &MlpNetwork {
        &self.decoder
    }

    fn check(&self, x: &Instance) -> Result<()> {
        if x.len() != self.slots.len() {
            return Err(Error::Shape(format!(
                "instance has {} values, autoencoder expects {}",
                x.len(),
                self.slots.len()
            )));
        }
        Ok(())
    }

    fn category_row(&self, j: usize, cat: f64) -> Result<&[f64]> {
        match &self.slots[j] {
            Slot::Categorical { width, table } => {
                let rows = table.len() / width;
                if cat < 0.0 || cat.fract() != 0.0 || cat as usize >= rows {
                    return Err(Error::Domain(format!(
                        "category index {cat} invalid for feature `{}` ({rows} categories)",
                        self.names[j]
                    )));
                }
                let c = cat as usize;
                Ok(&table[c * width..(c + 1) * width])
            }
            Slot::Continuous => Err(Error::Usage(format!("feature `{}` is continuous", self.names[j]))),
        }
    }

    /// The encoder input: continuous values and categorical embedding rows.
    pub fn embed(&self, x: &Instance) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut out = Vec::with_capacity(self.encoder.input_dim());
        for (j, slot) in self.slots.iter().enumerate() {
            match slot {
                Slot::Continuous => out.push(x.get(j)),
                Slot::Categorical { .. } => out.extend_from_slice(self.category_row(j, x.get(j))?),
            }
        }
        Ok(out)
    }

    /// Latent code `Q_phi(x)` of length `E`.
    pub fn encode(&self, x: &Instance) -> Result<Vec<f64>> {
        self.encoder.forward(&self.embed(x)?)
    }

    /// Decoder output in the embedded representation.
    pub fn reconstruct_embedded(&self, x: &Instance) -> Result<Vec<f64>> {
        self.decoder.forward(&self.encode(x)?)
    }

    /// Representation shared by every autoencoder over the same schema:
    /// continuous values followed by a one-hot block per categorical feature.
    pub fn canonical(&self, x: &Instance) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut out = Vec::new();
        for (j, slot) in self.slots.iter().enumerate() {
            match slot {
                Slot::Continuous => out.push(x.get(j)),
                Slot::Categorical { width, table } => {
                    let c = self.category_row(j, x.get(j)).map(|_| x.category(j))?;
                    let k = table.len() / width;
                    out.extend((0..k).map(|i| if i == c { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(out)
    }

    /// Reconstruction of `x` in the canonical representation. Categorical
    /// blocks become a softmax over negative squared distances between the
    /// decoded block and each category's embedding row.
    pub fn reconstruct_canonical(&self, x: &Instance) -> Result<Vec<f64>> {
        let rec = self.reconstruct_embedded(x)?;
        let mut out = Vec::new();
        let mut pos = 0;
        for slot in &self.slots {
            match slot {
                Slot::Continuous => out.push(rec[pos]),
                Slot::Categorical { width, table } => {
                    let block = &rec[pos..pos + width];
                    let scores: Vec<f64> = table
                        .chunks_exact(*width)
                        .map(|row| -squared_distance(row, block))
                        .collect();
                    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    out.extend(exps.iter().map(|e| e / z));
                }
            }
            pos += slot.width();
        }
        Ok(out)
    }

    /// Squared distance between the embedding rows of categories `a` and `b`
    /// of feature `j`.
    pub fn cat_embed_distance(&self, j: usize, a: usize, b: usize) -> Result<f64> {
        if j >= self.slots.len() {
            return Err(Error::Usage(format!("feature index {j} out of range")));
        }
        let ra = self.category_row(j, a as f64)?;
        let rb = self.category_row(j, b as f64)?;
        Ok(squared_distance(ra, rb))
    }

    /// Overwrites the embedding row of category `c` of feature `j`.
    pub fn set_category_embedding(&mut self, j: usize, c: usize, row: &[f64]) -> Result<()> {
        match self.slots.get_mut(j) {
            Some(Slot::Categorical { width, table }) => {
                if row.len() != *width || c >= table.len() / *width {
                    return Err(Error::Shape(format!(
                        "embedding row must have {width} values for an existing category"
                    )));
                }
                table[c * *width..(c + 1) * *width].copy_from_slice(row);
                Ok(())
            }
            _ => Err(Error::Usage(format!("feature {j} is not categorical"))),
        }
    }

    /// Mean squared reconstruction error of the embedded representation.
    pub fn reconstruction_mse(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Data("reconstruction error of an empty dataset".into()));
        }
        let mut total = 0.0;
        for x in &data.rows {
            let inp = self.embed(x)?;
            total += Loss::Mse.value(&self.decoder.forward(&self.encoder.forward(&inp)?)?, &inp);
        }
        Ok(total / data.len() as f64)
    }

    /// Continues training on `data` (normalized) for `cfg.epochs` epochs.
    pub fn fit(&mut self, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::Data("cannot train an autoencoder on an empty dataset".into()));
        }
        if !data.is_normalized() {
            return Err(Error::Usage("autoencoder expects normalized data".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_AE00);
        let mut enc_grads = Gradients::zeros_like(&self.encoder);
        let mut dec_grads = Gradients::zeros_like(&self.decoder);
        let mut emb_grads: Vec<Vec<f64>> = self.table_sizes().iter().map(|&n| vec![0.0; n]).collect();

        let sizes: Vec<usize> = enc_grads
            .buffers()
            .iter()
            .chain(dec_grads.buffers().iter())
            .map(|b| b.len())
            .chain(self.table_sizes())
            .collect();
        let mut opt = Optimizer::new(cfg, &sizes);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);

        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                enc_grads.clear();
                dec_grads.clear();
                emb_grads.iter_mut().for_each(|g| g.fill(0.0));
                for &i in batch {
                    let x = &data.rows[i];
                    let inp = self.embed(x)?;
                    let t_enc = self.encoder.forward_trace::<ChaCha8Rng>(&inp, None)?;
                    let t_dec = self.decoder.forward_trace::<ChaCha8Rng>(t_enc.output(), None)?;
                    total += Loss::Mse.value(t_dec.output(), &inp);
                    let delta = Loss::Mse.output_delta(
                        Activation::Identity,
                        t_dec.last_preactivation(),
                        t_dec.output(),
                        &inp,
                    );
                    // Latent layer is linear, so dL/d latent is the encoder's output delta.
                    let d_latent = self.decoder.backward(&t_dec, &delta, &mut dec_grads);
                    let d_input = self.encoder.backward(&t_enc, &d_latent, &mut enc_grads);
                    self.accumulate_embedding_grads(x, &d_input, &mut emb_grads);
                }
                let scale = 1.0 / batch.len() as f64;
                enc_grads.scale(scale);
                dec_grads.scale(scale);
                emb_grads.iter_mut().flatten().for_each(|g| *g *= scale);

                let grads: Vec<&[f64]> = enc_grads
                    .buffers()
                    .into_iter()
                    .chain(dec_grads.buffers())
                    .chain(emb_grads.iter().map(Vec::as_slice))
                    .collect();
                let Self {
                    encoder, decoder, slots, ..
                } = self;
                let params: Vec<&mut [f64]> = encoder
                    .param_buffers_mut()
                    .into_iter()
                    .chain(decoder.param_buffers_mut())
                    .chain(slots.iter_mut().filter_map(|s| match s {
                        Slot::Categorical { table, .. } => Some(table.as_mut_slice()),
                        Slot::Continuous => None,
                    }))
                    .collect();
                opt.step(params, &grads);
            }
            let mean = total / data.len() as f64;
            if !mean.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    learning_rate: cfg.learning_rate,
                });
            }
            history.push(mean);
        }
        self.trained_epochs += cfg.epochs;
        Ok(TrainReport { loss_history: history })
    }

    fn table_sizes(&self) -> Vec<usize> {
        self.slots
            .iter()
            .filter_map(|s| match s {
                Slot::Categorical { table, .. } => Some(table.len()),
                Slot::Continuous => None,
            })
            .collect()
    }

    fn accumulate_embedding_grads(&self, x: &Instance, d_input: &[f64], grads: &mut [Vec<f64>]) {
        let mut pos = 0;
        let mut t = 0;
        for (j, slot) in self.slots.iter().enumerate() {
            if let Slot::Categorical { width, .. } = slot {
                let c = x.category(j);
                let g = &mut grads[t][c * width..(c + 1) * width];
                g.iter_mut().zip(&d_input[pos..pos + width]).for_each(|(a, b)| *a += b);
                t += 1;
            }
            pos += slot.width();
        }
    }

    pub fn to_json(&self) -> String {
        let mut cat_embeddings = BTreeMap::new();
        let mut layout = Vec::with_capacity(self.slots.len());
        for (name, slot) in self.names.iter().zip(&self.slots) {
            match slot {
                Slot::Continuous => layout.push(SlotDoc {
                    name: name.clone(),
                    categories: 0,
                }),
                Slot::Categorical { width, table } => {
                    let rows: BTreeMap<String, Vec<f64>> = table
                        .chunks_exact(*width)
                        .enumerate()
                        .map(|(c, r)| (c.to_string(), r.to_vec()))
                        .collect();
                    layout.push(SlotDoc {
                        name: name.clone(),
                        categories: rows.len(),
                    });
                    cat_embeddings.insert(name.clone(), rows);
                }
            }
        }
        serde_json::to_string(&AutoencoderDoc {
            version: nn::FORMAT_VERSION,
            e: self.embedding_dim,
            trained_epochs: self.trained_epochs,
            layout,
            encoder: NetworkDoc::from(&self.encoder),
            decoder: NetworkDoc::from(&self.decoder),
            cat_embeddings,
        })
        .expect("autoencoder serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut doc: AutoencoderDoc = parse_versioned(text)?;
        let encoder = MlpNetwork::try_from(doc.encoder)?;
        let decoder = MlpNetwork::try_from(doc.decoder)?;
        let mut slots = Vec::with_capacity(doc.layout.len());
        for s in &doc.layout {
            if s.categories == 0 {
                slots.push(Slot::Continuous);
                continue;
            }
            let rows = doc
                .cat_embeddings
                .remove(&s.name)
                .ok_or_else(|| Error::Parse(format!("missing embeddings for `{}`", s.name)))?;
            let width = rows.values().next().map_or(0, Vec::len);
            let mut table = Vec::with_capacity(s.categories * width);
            for c in 0..s.categories {
                let row = rows
                    .get(&c.to_string())
                    .filter(|r| r.len() == width)
                    .ok_or_else(|| Error::Parse(format!("bad embedding row {c} for `{}`", s.name)))?;
                table.extend_from_slice(row);
            }
            slots.push(Slot::Categorical { width, table });
        }
        let input: usize = slots.iter().map(Slot::width).sum();
        if encoder.input_dim() != input
            || decoder.output_dim() != input
            || encoder.output_dim() != doc.e
            || decoder.input_dim() != doc.e
        {
            return Err(Error::Parse("autoencoder document has inconsistent dimensions".into()));
        }
        Ok(Self {
            encoder,
            decoder,
            embedding_dim: doc.e,
            names: doc.layout.into_iter().map(|s| s.name).collect(),
            slots,
            trained_epochs: doc.trained_epochs,
        })
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Serialize, Deserialize)]
struct SlotDoc {
    name: String,
    categories: usize,
}

#[derive(Serialize, Deserialize)]
struct AutoencoderDoc {
    version: u32,
    #[serde(rename = "E")]
    e: usize,
    trained_epochs: usize,
    layout: Vec<SlotDoc>,
    encoder: NetworkDoc,
    decoder: NetworkDoc,
    cat_embeddings: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

/// Trains `Q_phi` on the full (normalized) dataset.
pub fn train_autoencoder(data: &Dataset, cfg: &AutoencoderConfig, train: &TrainConfig) -> Result<(Autoencoder, TrainReport)> {
    let mut ae = Autoencoder::new(&data.schema, cfg, train.seed)?;
    let report = ae.fit(data, train)?;
    Ok((ae, report))
}

/// Autoencoders trained on the original class, the counterfactual class
/// and the full data, as used by the interpretability metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderTriple {
    pub y_org: u8,
    pub y_cf: u8,
    pub ae_org: Autoencoder,
    pub ae_cf: Autoencoder,
    pub ae_full: Autoencoder,
}

impl AutoencoderTriple {
    /// `(ae_org, ae_cf, ae_full)` for the requested direction; the triple
    /// serves both directions of a binary task.
    pub fn for_direction(&self, y_org: u8, y_cf: u8) -> Result<(&Autoencoder, &Autoencoder, &Autoencoder)> {
        if (y_org, y_cf) == (self.y_org, self.y_cf) {
            Ok((&self.ae_org, &self.ae_cf, &self.ae_full))
        } else if (y_org, y_cf) == (self.y_cf, self.y_org) {
            Ok((&self.ae_cf, &self.ae_org, &self.ae_full))
        } else {
            Err(Error::Usage(format!(
                "autoencoders were trained for classes {}/{}, not {y_org}/{y_cf}",
                self.y_org, self.y_cf
            )))
        }
    }
}

pub fn train_class_autoencoders(
    data: &Dataset,
    y_org: u8,
    y_cf: u8,
    cfg: &AutoencoderConfig,
    train: &TrainConfig,
) -> Result<AutoencoderTriple> {
    if y_org == y_cf || y_org > 1 || y_cf > 1 {
        return Err(Error::Config(format!("classes {y_org}/{y_cf} must be distinct binary labels")));
    }
    let org = data.class_subset(y_org);
    let cf = data.class_subset(y_cf);
    if org.is_empty() || cf.is_empty() {
        return Err(Error::Data(format!(
            "class subsets are empty (class {y_org}: {} rows, class {y_cf}: {} rows)",
            org.len(),
            cf.len()
        )));
    }
    let with_seed = |offset: u64| TrainConfig {
        seed: train.seed.wrapping_add(offset),
        ..train.clone()
    };
    let (ae_org, _) = train_autoencoder(&org, cfg, &with_seed(1))?;
    let (ae_cf, _) = train_autoencoder(&cf, cfg, &with_seed(2))?;
    let (ae_full, _) = train_autoencoder(data, cfg, &with_seed(3))?;
    Ok(AutoencoderTriple {
        y_org,
        y_cf,
        ae_org,
        ae_cf,
        ae_full,
    })
}
