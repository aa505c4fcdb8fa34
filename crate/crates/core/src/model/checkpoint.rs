use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::ModelConfig;
use super::gru::GruWeights;
use crate::binio;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub recipe: String,
    pub seed: u64,
    pub epoch: usize,
}

/// Model configuration, named weights, and training provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub weights: BTreeMap<String, Tensor>,
    pub metadata: CheckpointMeta,
}

pub(crate) fn dir_tag(d: usize) -> &'static str {
    if d == 0 {
        "fw"
    } else {
        "bw"
    }
}

/// `(name, rows, cols, fan_in)` for every weight of a config, in a fixed order.
fn layout(config: &ModelConfig) -> Vec<(String, usize, usize, usize)> {
    let h = config.hidden_per_direction;
    let mut v = Vec::new();
    let mut d_in = config.input_dim;
    for l in 0..config.layers {
        for d in 0..config.directions() {
            let p = format!("layer{l}.{}", dir_tag(d));
            v.push((format!("{p}.w_ih"), d_in, 3 * h, d_in));
            v.push((format!("{p}.w_hh"), h, 3 * h, h));
            v.push((format!("{p}.b_ih"), 1, 3 * h, d_in));
            v.push((format!("{p}.b_hh"), 1, 3 * h, h));
        }
        let cat = h * config.directions();
        v.push((format!("layer{l}.proj.w"), cat, config.projection, cat));
        v.push((format!("layer{l}.proj.b"), 1, config.projection, cat));
        d_in = config.projection;
    }
    v.push(("out.w".into(), config.projection, config.output_dim(), config.projection));
    v.push(("out.b".into(), 1, config.output_dim(), config.projection));
    v
}

impl Checkpoint {
    /// Seeded uniform initialisation in `±sqrt(1/fan_in)`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = BTreeMap::new();
        for (name, r, c, fan_in) in layout(&config) {
            let bound = (1.0 / fan_in as f64).sqrt();
            let values = (0..r * c).map(|_| rng.random_range(-bound..bound)).collect();
            weights.insert(name, Tensor::matrix(r, c, values)?);
        }
        Ok(Self {
            format_version: binio::FORMAT_VERSION,
            config,
            weights,
            metadata: CheckpointMeta { seed, ..Default::default() },
        })
    }

    pub fn weight(&self, name: &str) -> Result<&Tensor> {
        self.weights.get(name).ok_or_else(|| Error::Shape(format!("missing weight {name}")))
    }

    pub fn gru(&self, layer: usize, direction: usize) -> Result<GruWeights<'_>> {
        let p = format!("layer{layer}.{}", dir_tag(direction));
        Ok(GruWeights {
            w_ih: self.weight(&format!("{p}.w_ih"))?,
            w_hh: self.weight(&format!("{p}.w_hh"))?,
            b_ih: self.weight(&format!("{p}.b_ih"))?,
            b_hh: self.weight(&format!("{p}.b_hh"))?,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.values().map(Tensor::len).sum()
    }

    /// All weights concatenated in name order.
    pub fn flat_params(&self) -> Tensor {
        let values: Vec<f64> = self.weights.values().flat_map(|t| t.values().iter().copied()).collect();
        let n = values.len();
        Tensor::new(vec![n], values).expect("flat length")
    }

    pub fn with_flat_params(&self, flat: &Tensor) -> Result<Self> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!("{} flat values for {} parameters", flat.len(), self.param_count())));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for t in out.weights.values_mut() {
            let n = t.len();
            t.values_mut().copy_from_slice(&flat.values()[offset..offset + n]);
            offset += n;
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = json!({ "config": self.config, "metadata": self.metadata });
        let arrays: Vec<(&str, &Tensor)> = self.weights.iter().map(|(k, v)| (k.as_str(), v)).collect();
        binio::encode(&meta, &arrays)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let (meta, arrays) = binio::decode(bytes, path)?;
        let corrupt = |reason: String| Error::Corrupt { path: path.to_path_buf(), reason };
        let config: ModelConfig = serde_json::from_value(meta["config"].clone())?;
        let metadata: CheckpointMeta = serde_json::from_value(meta["metadata"].clone())?;
        config.validate()?;
        let weights: BTreeMap<String, Tensor> = arrays.into_iter().collect();
        for (name, r, c, _) in layout(&config) {
            match weights.get(&name) {
                Some(t) if t.shape() == [r, c] => {}
                Some(t) => return Err(corrupt(format!("{name} has shape {:?}, expected [{r}, {c}]", t.shape()))),
                None => return Err(corrupt(format!("missing weight {name}"))),
            }
        }
        if weights.len() != layout(&config).len() {
            return Err(corrupt("unexpected extra weights".into()));
        }
        Ok(Self { format_version: binio::FORMAT_VERSION, config, weights, metadata })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }
}
