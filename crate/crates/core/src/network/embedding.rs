//! Index-to-vector lookup table with a frozen all-zero padding row.

use crate::error::{Error, Result};
use crate::tensor::{uniform_init, Matrix, SeededRng};
use crate::vocab::PaddedSequence;

/// Embedding table of shape `(vocab_size + 2) x embed_dim`. Row 0 is the
/// padding row: it is zero at initialization and its gradient is forced to
/// zero, so it never moves during training.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingLayer {
    pub table: Matrix,
}

impl EmbeddingLayer {
    pub fn init(table_rows: usize, embed_dim: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut table = uniform_init(table_rows, embed_dim, 0.05, rng)?;
        table.row_mut(0).fill(0.0);
        Ok(EmbeddingLayer { table })
    }

    pub fn embed_dim(&self) -> usize {
        self.table.cols()
    }

    /// Lifts a `B x T` index grid to `T` activation matrices of shape
    /// `B x embed_dim`: position `(b, t)` holds table row `indices[b][t]`.
    pub fn forward(&self, batch: &[PaddedSequence]) -> Result<Vec<Matrix>> {
        if batch.is_empty() {
            return Err(Error::Argument("embedding forward needs >= 1 row".into()));
        }
        let steps = batch[0].len();
        if batch.iter().any(|s| s.len() != steps) {
            return Err(Error::Argument(
                "all sequences in a batch must share one length".into(),
            ));
        }
        let limit = self.table.rows();
        let mut activations = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut step = Matrix::zeros(batch.len(), self.embed_dim());
            for (b, seq) in batch.iter().enumerate() {
                let index = seq.indices()[t] as usize;
                if index >= limit {
                    return Err(Error::Lookup { index, limit });
                }
                step.row_mut(b).copy_from_slice(self.table.row(index));
            }
            activations.push(step);
        }
        Ok(activations)
    }

    /// Scatter-adds per-timestep input gradients back into table rows,
    /// then zeroes the padding row.
    pub fn backward(&self, batch: &[PaddedSequence], d_steps: &[Matrix]) -> Result<Matrix> {
        let mut grad = Matrix::zeros(self.table.rows(), self.table.cols());
        for (t, d_step) in d_steps.iter().enumerate() {
            if d_step.shape() != (batch.len(), self.embed_dim()) {
                return Err(Error::Shape {
                    op: "embedding_backward",
                    left: d_step.shape(),
                    right: (batch.len(), self.embed_dim()),
                });
            }
            for (b, seq) in batch.iter().enumerate() {
                let index = seq.indices()[t] as usize;
                let row = grad.row_mut(index);
                for (g, &d) in row.iter_mut().zip(d_step.row(b)) {
                    *g += d;
                }
            }
        }
        grad.row_mut(0).fill(0.0);
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::pad;

    fn layer() -> EmbeddingLayer {
        let mut rng = SeededRng::new(21);
        EmbeddingLayer::init(6, 3, &mut rng).unwrap()
    }

    #[test]
    fn pad_row_embeds_to_zero() {
        let layer = layer();
        let batch = vec![pad(&[], 4).unwrap()];
        let acts = layer.forward(&batch).unwrap();
        assert_eq!(acts.len(), 4);
        assert!(acts.iter().all(|m| m.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn lookup_returns_exact_table_rows() {
        let layer = layer();
        let batch = vec![pad(&[3, 5], 2).unwrap(), pad(&[1, 2], 2).unwrap()];
        let acts = layer.forward(&batch).unwrap();
        assert_eq!(acts[0].row(0), layer.table.row(3));
        assert_eq!(acts[1].row(0), layer.table.row(5));
        assert_eq!(acts[0].row(1), layer.table.row(1));
        assert_eq!(acts[1].row(1), layer.table.row(2));
    }

    #[test]
    fn batch_lifts_to_one_matrix_per_timestep() {
        let layer = layer();
        let batch: Vec<_> = (0..5).map(|_| pad(&[1, 2, 3], 7).unwrap()).collect();
        let acts = layer.forward(&batch).unwrap();
        assert_eq!(acts.len(), 7);
        assert!(acts.iter().all(|m| m.shape() == (5, 3)));
    }

    #[test]
    fn out_of_range_index_names_the_index() {
        let layer = layer();
        let batch = vec![pad(&[9], 1).unwrap()];
        let err = layer.forward(&batch).unwrap_err();
        assert_eq!(err.category(), "lookup");
        assert!(err.to_string().contains('9'));
    }

    #[test]
    fn backward_scatter_adds_and_freezes_pad_row() {
        let layer = layer();
        // Two rows look up index 2 at t=0; index 0 (pad) also appears.
        let batch = vec![pad(&[2], 2).unwrap(), pad(&[2, 2], 2).unwrap()];
        let ones = Matrix::from_rows(&[&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]]).unwrap();
        let grad = layer.backward(&batch, &[ones.clone(), ones]).unwrap();
        // Index 2 was hit three times across the batch.
        assert_eq!(grad.row(2), &[3.0, 3.0, 3.0]);
        assert_eq!(grad.row(0), &[0.0, 0.0, 0.0]);
    }
}
