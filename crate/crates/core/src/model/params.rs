use apjfnn_autograd::{ParamId, ParamStore, Real, Tensor};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::config::{ModelConfig, OutputHead};
use crate::nn::{
    BiLstmParams, ConditionedAttentionParams, Dense, EmbeddingTable, SelfAttentionParams,
};

/// Layers only present in the hierarchical model.
#[derive(Clone, Debug)]
pub struct HierarchicalLayers {
    /// BiLSTM over the requirement vectors `s^J`.
    pub ability: BiLstmParams,
    /// BiLSTM over the pooled experience vectors `u^R`.
    pub experience: BiLstmParams,
    pub alpha: SelfAttentionParams,
    pub beta: SelfAttentionParams,
    pub gamma: ConditionedAttentionParams,
    pub delta: ConditionedAttentionParams,
}

/// Where each layer's tensors live in the store.
#[derive(Clone, Debug)]
pub struct Layout {
    pub embedding: EmbeddingTable,
    pub word_j: BiLstmParams,
    pub word_r: BiLstmParams,
    pub hier: Option<HierarchicalLayers>,
    /// `W_d, b_d`: comparison vector `D`.
    pub head_d: Dense,
    /// `W_y, b_y`: output logits.
    pub head_y: Dense,
}

/// Parameters of one model together with its configuration.
#[derive(Clone, Debug)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub layout: Layout,
}

impl<T: Real> ModelParams<T> {
    /// Glorot-initialized parameters. Registration order is fixed, so the
    /// same RNG state always yields the same tensors.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let two_h = 2 * c.hidden;
        let mut store = ParamStore::new();
        let embedding = EmbeddingTable::new(&mut store, "W_e", c.vocab_size, c.embed_dim, rng)?;
        let word_j = BiLstmParams::new(&mut store, "word_J", c.embed_dim, c.hidden, rng)?;
        let word_r = BiLstmParams::new(&mut store, "word_R", c.embed_dim, c.hidden, rng)?;
        let hier = if c.kind.is_hierarchical() {
            let alpha =
                SelfAttentionParams::new(&mut store, "alpha", two_h, c.word_attention_dim, rng)?;
            let ability = BiLstmParams::new(&mut store, "ability", two_h, c.hidden, rng)?;
            let beta =
                SelfAttentionParams::new(&mut store, "beta", two_h, c.word_attention_dim, rng)?;
            let gamma = ConditionedAttentionParams::new(
                &mut store,
                "gamma",
                two_h,
                two_h,
                c.match_attention_dim,
                rng,
            )?;
            let experience = BiLstmParams::new(&mut store, "experience", two_h, c.hidden, rng)?;
            let delta = ConditionedAttentionParams::new(
                &mut store,
                "delta",
                two_h,
                two_h,
                c.match_attention_dim,
                rng,
            )?;
            Some(HierarchicalLayers {
                ability,
                experience,
                alpha,
                beta,
                gamma,
                delta,
            })
        } else {
            None
        };
        let d_in = c.side_width() + 3 * two_h;
        let head_d = Dense::new(&mut store, "head.W_d", "head.b_d", d_in, c.fit_dim, rng)?;
        let outputs = match c.output {
            OutputHead::Sigmoid => 1,
            OutputHead::Softmax2 => 2,
        };
        let head_y = Dense::new(&mut store, "head.W_y", "head.b_y", c.fit_dim, outputs, rng)?;
        let layout = Layout {
            embedding,
            word_j,
            word_r,
            hier,
            head_d,
            head_y,
        };
        Ok(Self {
            config,
            store,
            layout,
        })
    }

    /// Parameters laid out like `init` but with every value taken from
    /// `values`, which must list tensors in registration order.
    pub fn from_values(config: ModelConfig, values: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut fresh = Self::init(config, &mut rng)?;
        if values.len() != fresh.store.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                fresh.store.len(),
                values.len()
            )));
        }
        for (i, (name, value)) in values.into_iter().enumerate() {
            let id = ParamId(i);
            let expect = fresh.store.name(id);
            if expect != name || fresh.store.get(id).shape() != value.shape() {
                return Err(Error::Config(format!(
                    "parameter {i}: expected {expect} {:?}, found {name} {:?}",
                    fresh.store.get(id).shape(),
                    value.shape()
                )));
            }
            *fresh.store.get_mut(id) = value;
        }
        Ok(fresh)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            store: self.store.cast(),
            layout: self.layout.clone(),
        }
    }

    /// Replaces the embedding matrix, e.g. with pre-trained vectors.
    pub fn set_embeddings(&mut self, table: Tensor<T>) -> Result<()> {
        let id = self.layout.embedding.table;
        if table.shape() != self.store.get(id).shape() {
            return Err(Error::Config(format!(
                "embedding table {:?} does not match {:?}",
                table.shape(),
                self.store.get(id).shape()
            )));
        }
        *self.store.get_mut(id) = table;
        Ok(())
    }

    /// Parameter groups by name prefix, for diagnostics.
    pub fn groups(&self) -> Vec<(String, Vec<ParamId>)> {
        let mut out: Vec<(String, Vec<ParamId>)> = Vec::new();
        for (id, name, _) in self.store.iter() {
            let group = name.split('.').next().unwrap_or(name).to_owned();
            match out.iter_mut().find(|(g, _)| *g == group) {
                Some((_, ids)) => ids.push(id),
                None => out.push((group, vec![id])),
            }
        }
        out
    }
}
