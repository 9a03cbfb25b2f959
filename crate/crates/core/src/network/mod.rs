//! The classifier: embedding, two stacked bidirectional LSTM layers, and
//! two dense layers ending in a sigmoid probability head.
//!
//! Layer widths chain `embed_dim -> 2*lstm1 -> 2*lstm2 -> dense -> 1`
//! (200 -> 128 -> 64 -> 64 -> 1 at the default sizes). The first recurrent
//! layer emits per-timestep outputs; the second emits each direction's
//! final state.

mod checkpoint;
mod dense;
mod embedding;
mod lstm;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use dense::{Activation, DenseCache, DenseGrads, DenseLayer};
pub use embedding::EmbeddingLayer;
pub use lstm::{
    direction_backward, direction_forward, lstm_cell_forward, BiLstmCache, BiLstmGrads,
    BiLstmLayer, BiLstmOutputs, DirectionCache, LstmCellCache, LstmDirectionGrads,
    LstmDirectionParams,
};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, SeededRng};
use crate::vocab::PaddedSequence;

/// Architecture hyperparameters. The dimension defaults mirror the layer
/// sizes this model ships with; `vocab_size` always comes from data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub embed_dim: usize,
    pub lstm1_units: usize,
    pub lstm2_units: usize,
    pub dense_units: usize,
    pub output_units: usize,
}

impl ModelConfig {
    /// Default dimensions (80 / 200 / 64 / 32 / 64 / 1) for a given
    /// vocabulary size.
    pub fn with_vocab(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            max_len: 80,
            embed_dim: 200,
            lstm1_units: 64,
            lstm2_units: 32,
            dense_units: 64,
            output_units: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("max_len", self.max_len),
            ("embed_dim", self.embed_dim),
            ("lstm1_units", self.lstm1_units),
            ("lstm2_units", self.lstm2_units),
            ("dense_units", self.dense_units),
        ];
        for (name, value) in dims {
            if value == 0 {
                return Err(Error::Argument(format!("{name} must be positive")));
            }
        }
        if self.output_units != 1 {
            return Err(Error::Argument(
                "binary classifier requires output_units == 1".into(),
            ));
        }
        Ok(())
    }

    /// Embedding table rows: vocabulary plus pad and OOV.
    pub fn table_rows(&self) -> usize {
        self.vocab_size + 2
    }
}

/// All trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub embedding: EmbeddingLayer,
    pub bilstm1: BiLstmLayer,
    pub bilstm2: BiLstmLayer,
    pub dense1: DenseLayer,
    pub output: DenseLayer,
}

/// Gradients mirroring [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ModelGrads {
    pub embedding: Matrix,
    pub bilstm1: BiLstmGrads,
    pub bilstm2: BiLstmGrads,
    pub dense1: DenseGrads,
    pub output: DenseGrads,
}

/// Forward-pass intermediates retained for backpropagation.
pub struct ModelCaches {
    batch_rows: usize,
    embedded: Vec<Matrix>,
    l1_cache: BiLstmCache,
    l1_out: Vec<Matrix>,
    l2_cache: BiLstmCache,
    l2_final: Matrix,
    d1_cache: DenseCache,
    d1_out: Matrix,
    out_cache: DenseCache,
}

impl ModelParams {
    /// Seeded initialization: uniform(+-1/sqrt(fan_in)) weights, zero
    /// biases, uniform(+-0.05) embedding rows with row 0 frozen at zero.
    /// The draw order is fixed, so one seed pins every parameter.
    pub fn init(config: ModelConfig, rng: &mut SeededRng) -> Result<ModelParams> {
        config.validate()?;
        let embedding = EmbeddingLayer::init(config.table_rows(), config.embed_dim, rng)?;
        let bilstm1 = BiLstmLayer::init(config.embed_dim, config.lstm1_units, true, rng)?;
        let bilstm2 = BiLstmLayer::init(2 * config.lstm1_units, config.lstm2_units, false, rng)?;
        let dense1 = DenseLayer::init(2 * config.lstm2_units, config.dense_units, Activation::Relu, rng)?;
        let output = DenseLayer::init(config.dense_units, config.output_units, Activation::Sigmoid, rng)?;
        Ok(ModelParams {
            config,
            embedding,
            bilstm1,
            bilstm2,
            dense1,
            output,
        })
    }

    /// Probability of the toxic class for each batch row.
    pub fn forward(&self, batch: &[PaddedSequence]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(batch)?.0)
    }

    /// Forward pass that also returns the caches the backward pass needs.
    pub fn forward_cached(&self, batch: &[PaddedSequence]) -> Result<(Vec<f64>, ModelCaches)> {
        let embedded = self.embedding.forward(batch)?;
        let (l1_outputs, l1_cache) = self.bilstm1.forward_pass(&embedded)?;
        let l1_out = l1_outputs.per_step;
        let (l2_outputs, l2_cache) = self.bilstm2.forward_pass(&l1_out)?;
        let l2_final = l2_outputs.final_concat;
        let (d1_out, d1_cache) = self.dense1.forward(&l2_final)?;
        let (probs_mat, out_cache) = self.output.forward(&d1_out)?;
        let probs = (0..probs_mat.rows()).map(|r| probs_mat.get(r, 0)).collect();
        Ok((
            probs,
            ModelCaches {
                batch_rows: batch.len(),
                embedded,
                l1_cache,
                l1_out,
                l2_cache,
                l2_final,
                d1_cache,
                d1_out,
                out_cache,
            },
        ))
    }

    /// Exact gradients of the loss with respect to every parameter, given
    /// the gradient of the loss with respect to each output probability.
    pub fn backward(
        &self,
        batch: &[PaddedSequence],
        d_probs: &[f64],
        caches: &ModelCaches,
    ) -> Result<ModelGrads> {
        if caches.batch_rows != batch.len() || d_probs.len() != batch.len() {
            return Err(Error::State(format!(
                "backward caches cover {} rows but batch has {} (d_probs {})",
                caches.batch_rows,
                batch.len(),
                d_probs.len()
            )));
        }
        let d_out = Matrix::from_vec(batch.len(), 1, d_probs.to_vec())?;
        let (output_grads, d_d1_out) =
            self.output.backward(&caches.d1_out, &caches.out_cache, &d_out)?;
        let (dense1_grads, d_l2_final) =
            self.dense1.backward(&caches.l2_final, &caches.d1_cache, &d_d1_out)?;
        let (bilstm2_grads, d_l1_out) =
            self.bilstm2
                .backward_final(&caches.l1_out, &caches.l2_cache, &d_l2_final)?;
        let (bilstm1_grads, d_embedded) =
            self.bilstm1
                .backward_sequences(&caches.embedded, &caches.l1_cache, &d_l1_out)?;
        let embedding_grad = self.embedding.backward(batch, &d_embedded)?;
        Ok(ModelGrads {
            embedding: embedding_grad,
            bilstm1: bilstm1_grads,
            bilstm2: bilstm2_grads,
            dense1: dense1_grads,
            output: output_grads,
        })
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }

    /// Canonical flat view of all parameter tensors. The order is part of
    /// the checkpoint format.
    pub fn tensors(&self) -> Vec<&Matrix> {
        vec![
            &self.embedding.table,
            &self.bilstm1.forward.w,
            &self.bilstm1.forward.u,
            &self.bilstm1.forward.b,
            &self.bilstm1.backward.w,
            &self.bilstm1.backward.u,
            &self.bilstm1.backward.b,
            &self.bilstm2.forward.w,
            &self.bilstm2.forward.u,
            &self.bilstm2.forward.b,
            &self.bilstm2.backward.w,
            &self.bilstm2.backward.u,
            &self.bilstm2.backward.b,
            &self.dense1.w,
            &self.dense1.b,
            &self.output.w,
            &self.output.b,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.embedding.table,
            &mut self.bilstm1.forward.w,
            &mut self.bilstm1.forward.u,
            &mut self.bilstm1.forward.b,
            &mut self.bilstm1.backward.w,
            &mut self.bilstm1.backward.u,
            &mut self.bilstm1.backward.b,
            &mut self.bilstm2.forward.w,
            &mut self.bilstm2.forward.u,
            &mut self.bilstm2.forward.b,
            &mut self.bilstm2.backward.w,
            &mut self.bilstm2.backward.u,
            &mut self.bilstm2.backward.b,
            &mut self.dense1.w,
            &mut self.dense1.b,
            &mut self.output.w,
            &mut self.output.b,
        ]
    }
}

impl ModelGrads {
    /// Same canonical order as [`ModelParams::tensors`].
    pub fn tensors(&self) -> Vec<&Matrix> {
        vec![
            &self.embedding,
            &self.bilstm1.forward.w,
            &self.bilstm1.forward.u,
            &self.bilstm1.forward.b,
            &self.bilstm1.backward.w,
            &self.bilstm1.backward.u,
            &self.bilstm1.backward.b,
            &self.bilstm2.forward.w,
            &self.bilstm2.forward.u,
            &self.bilstm2.forward.b,
            &self.bilstm2.backward.w,
            &self.bilstm2.backward.u,
            &self.bilstm2.backward.b,
            &self.dense1.w,
            &self.dense1.b,
            &self.output.w,
            &self.output.b,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.embedding,
            &mut self.bilstm1.forward.w,
            &mut self.bilstm1.forward.u,
            &mut self.bilstm1.forward.b,
            &mut self.bilstm1.backward.w,
            &mut self.bilstm1.backward.u,
            &mut self.bilstm1.backward.b,
            &mut self.bilstm2.forward.w,
            &mut self.bilstm2.forward.u,
            &mut self.bilstm2.forward.b,
            &mut self.bilstm2.backward.w,
            &mut self.bilstm2.backward.u,
            &mut self.bilstm2.backward.b,
            &mut self.dense1.w,
            &mut self.dense1.b,
            &mut self.output.w,
            &mut self.output.b,
        ]
    }
}

/// Thresholds a probability into a binary label; ties go to toxic (1).
pub fn predict(prob: f64, threshold: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::Argument(format!(
            "probability must lie in [0, 1], got {prob}"
        )));
    }
    Ok(u8::from(prob >= threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::pad;

    fn toy_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 6,
            max_len: 3,
            embed_dim: 4,
            lstm1_units: 3,
            lstm2_units: 2,
            dense_units: 3,
            output_units: 1,
        }
    }

    #[test]
    fn default_config_has_figure_widths() {
        let c = ModelConfig::with_vocab(100);
        assert_eq!(
            (c.max_len, c.embed_dim, c.lstm1_units, c.lstm2_units, c.dense_units, c.output_units),
            (80, 200, 64, 32, 64, 1)
        );
    }

    #[test]
    fn param_count_matches_closed_form() {
        let mut rng = SeededRng::new(0);
        // Toy config: 8*4 + 2*(48+36+12) + 2*(48+16+8) + (12+3) + (3+1) = 387.
        let toy = ModelParams::init(toy_config(), &mut rng).unwrap();
        assert_eq!(toy.param_count(), 387);

        // Default dims with vocab 1000:
        //   embedding 1002*200                      = 200400
        //   bilstm1   2*(256*200 + 256*64 + 256)    = 135680
        //   bilstm2   2*(128*128 + 128*32 + 128)    =  41216
        //   dense1    64*64 + 64                    =   4160
        //   output    1*64 + 1                      =     65
        let full = ModelParams::init(ModelConfig::with_vocab(1000), &mut rng).unwrap();
        assert_eq!(full.param_count(), 381521);
    }

    #[test]
    fn layer_widths_chain() {
        let mut rng = SeededRng::new(1);
        let m = ModelParams::init(ModelConfig::with_vocab(10), &mut rng).unwrap();
        assert_eq!(m.bilstm1.output_dim(), 128);
        assert_eq!(m.bilstm2.output_dim(), 64);
        assert_eq!(m.dense1.in_dim(), 64);
        assert_eq!(m.dense1.out_dim(), 64);
        assert_eq!(m.output.in_dim(), 64);
        assert_eq!(m.output.out_dim(), 1);
    }

    #[test]
    fn all_pad_batch_yields_exactly_half() {
        for seed in 0..5 {
            let mut rng = SeededRng::new(seed);
            let model = ModelParams::init(toy_config(), &mut rng).unwrap();
            let batch = vec![pad(&[], 3).unwrap(); 4];
            let probs = model.forward(&batch).unwrap();
            assert!(probs.iter().all(|&p| p == 0.5), "seed {seed}: {probs:?}");
        }
    }

    #[test]
    fn forward_emits_one_probability_per_row_inside_unit_interval() {
        let mut rng = SeededRng::new(3);
        let model = ModelParams::init(toy_config(), &mut rng).unwrap();
        let batch = vec![
            pad(&[2, 3, 4], 3).unwrap(),
            pad(&[5, 6], 3).unwrap(),
            pad(&[7], 3).unwrap(),
        ];
        let probs = model.forward(&batch).unwrap();
        assert_eq!(probs.len(), 3);
        assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn reversing_sequences_swaps_direction_roles() {
        let mut rng = SeededRng::new(8);
        let config = toy_config();
        let model = ModelParams::init(config, &mut rng).unwrap();
        let batch = vec![pad(&[2, 3, 4], 3).unwrap(), pad(&[5, 6, 7], 3).unwrap()];
        let reversed: Vec<PaddedSequence> = batch
            .iter()
            .map(|s| {
                let mut idx: Vec<u32> = s.indices().to_vec();
                idx.reverse();
                pad(&idx, 3).unwrap()
            })
            .collect();

        let fwd_in = model.embedding.forward(&batch).unwrap();
        let rev_in = model.embedding.forward(&reversed).unwrap();
        let (f_states, _) = direction_forward(&model.bilstm1.forward, &fwd_in, false).unwrap();
        let (b_states, _) = direction_forward(&model.bilstm1.forward, &rev_in, true).unwrap();
        // The same weights scanned forward over x equal the reverse scan
        // over reverse(x), timestep-mirrored.
        for t in 0..3 {
            assert_eq!(f_states[t], b_states[2 - t]);
        }
    }

    #[test]
    fn backward_rejects_stale_caches() {
        let mut rng = SeededRng::new(5);
        let model = ModelParams::init(toy_config(), &mut rng).unwrap();
        let batch = vec![pad(&[2, 3], 3).unwrap(); 2];
        let (_, caches) = model.forward_cached(&batch).unwrap();
        let other = vec![pad(&[2, 3], 3).unwrap(); 3];
        let err = model.backward(&other, &[0.1, 0.1, 0.1], &caches).unwrap_err();
        assert_eq!(err.category(), "state");
    }

    #[test]
    fn predict_threshold_and_tie_rule() {
        assert_eq!(predict(0.75, 0.5).unwrap(), 1);
        assert_eq!(predict(0.25, 0.5).unwrap(), 0);
        assert_eq!(predict(0.5, 0.5).unwrap(), 1);
        assert!(predict(1.5, 0.5).is_err());
        assert!(predict(-0.1, 0.5).is_err());
    }

    #[test]
    fn duplicating_the_batch_preserves_mean_loss_gradients() {
        let mut rng = SeededRng::new(17);
        let model = ModelParams::init(toy_config(), &mut rng).unwrap();
        let batch = vec![pad(&[2, 3, 4], 3).unwrap(), pad(&[5, 1], 3).unwrap()];
        let targets = [1.0, 0.0];

        let grads_of = |batch: &[PaddedSequence], targets: &[f64]| {
            let (probs, caches) = model.forward_cached(batch).unwrap();
            // Mean binary cross-entropy gradient wrt probabilities.
            let n = probs.len() as f64;
            let d: Vec<f64> = probs
                .iter()
                .zip(targets)
                .map(|(&p, &y)| ((p - y) / (p * (1.0 - p))) / n)
                .collect();
            model.backward(batch, &d, &caches).unwrap()
        };

        let single = grads_of(&batch, &targets);
        let doubled_batch: Vec<PaddedSequence> =
            batch.iter().chain(batch.iter()).cloned().collect();
        let doubled_targets = [1.0, 0.0, 1.0, 0.0];
        let doubled = grads_of(&doubled_batch, &doubled_targets);

        for (a, b) in single.tensors().iter().zip(doubled.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }
}
