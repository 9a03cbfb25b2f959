//! LSTM cell and bidirectional layer with exact backpropagation through
//! time.
//!
//! Gate order inside the stacked pre-activation `z = W·x + U·h_prev + b` is
//! fixed as `[input i | forget f | output o | candidate g]`; `i`, `f`, `o`
//! take the logistic map and `g` takes tanh. The cell state update is
//! `c = f (*) c_prev + i (*) g` and the hidden state `h = o (*) tanh(c)`.

use crate::error::{Error, Result};
use crate::tensor::{uniform_init, Matrix, SeededRng};

/// Weights of one scan direction.
///
/// `w` maps inputs (`4H x input_dim`), `u` maps the recurrent state
/// (`4H x H`), and `b` is a `1 x 4H` bias row.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmDirectionParams {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Matrix,
    pub hidden: usize,
    pub input_dim: usize,
}

impl LstmDirectionParams {
    /// Weight scale is 1/sqrt(fan-in) per matrix; biases start at zero so
    /// an all-zero input propagates exactly zero hidden states.
    pub fn init(input_dim: usize, hidden: usize, rng: &mut SeededRng) -> Result<Self> {
        let w = uniform_init(4 * hidden, input_dim, 1.0 / (input_dim as f64).sqrt(), rng)?;
        let u = uniform_init(4 * hidden, hidden, 1.0 / (hidden as f64).sqrt(), rng)?;
        let b = Matrix::zeros(1, 4 * hidden);
        Ok(LstmDirectionParams {
            w,
            u,
            b,
            hidden,
            input_dim,
        })
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmDirectionParams {
            w: Matrix::zeros(4 * hidden, input_dim),
            u: Matrix::zeros(4 * hidden, hidden),
            b: Matrix::zeros(1, 4 * hidden),
            hidden,
            input_dim,
        }
    }
}

/// Gradients mirroring [`LstmDirectionParams`].
#[derive(Clone, Debug)]
pub struct LstmDirectionGrads {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Matrix,
}

impl LstmDirectionGrads {
    fn zeros(p: &LstmDirectionParams) -> Self {
        LstmDirectionGrads {
            w: Matrix::zeros(4 * p.hidden, p.input_dim),
            u: Matrix::zeros(4 * p.hidden, p.hidden),
            b: Matrix::zeros(1, 4 * p.hidden),
        }
    }
}

/// Post-activation gate values and states retained for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmCellCache {
    pub h_prev: Matrix,
    pub c_prev: Matrix,
    pub i: Matrix,
    pub f: Matrix,
    pub o: Matrix,
    pub g: Matrix,
    pub tanh_c: Matrix,
}

/// One recurrence step over a batch: rows are samples.
pub fn lstm_cell_forward(
    x_t: &Matrix,
    h_prev: &Matrix,
    c_prev: &Matrix,
    p: &LstmDirectionParams,
) -> Result<(Matrix, Matrix, LstmCellCache)> {
    let h = p.hidden;
    if x_t.cols() != p.input_dim {
        return Err(Error::Shape {
            op: "lstm_cell_forward(x)",
            left: x_t.shape(),
            right: p.w.shape(),
        });
    }
    if h_prev.shape() != (x_t.rows(), h) || c_prev.shape() != (x_t.rows(), h) {
        return Err(Error::Shape {
            op: "lstm_cell_forward(state)",
            left: h_prev.shape(),
            right: c_prev.shape(),
        });
    }
    let z = x_t
        .matmul(&p.w.transpose())?
        .add(&h_prev.matmul(&p.u.transpose())?)?
        .add_row_broadcast(&p.b)?;

    let i = z.columns(0, h).sigmoid();
    let f = z.columns(h, 2 * h).sigmoid();
    let o = z.columns(2 * h, 3 * h).sigmoid();
    let g = z.columns(3 * h, 4 * h).tanh();

    let c = f.hadamard(c_prev)?.add(&i.hadamard(&g)?)?;
    let tanh_c = c.tanh();
    let h_t = o.hadamard(&tanh_c)?;

    let cache = LstmCellCache {
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        i,
        f,
        o,
        g,
        tanh_c,
    };
    Ok((h_t, c, cache))
}

/// Per-step gradient contributions flowing out of one cell step.
struct CellStepGrads {
    dx: Matrix,
    dh_prev: Matrix,
    dc_prev: Matrix,
}

/// Backward through one step. `dh` is the total gradient arriving at `h_t`
/// (external plus recurrent) and `dc` the recurrent gradient arriving at
/// `c_t`. Accumulates into `grads`.
fn lstm_cell_backward(
    x_t: &Matrix,
    cache: &LstmCellCache,
    dh: &Matrix,
    dc_in: &Matrix,
    p: &LstmDirectionParams,
    grads: &mut LstmDirectionGrads,
) -> Result<CellStepGrads> {
    let one = |m: &Matrix| m.map(|v| 1.0 - v);

    // h = o (*) tanh(c)
    let d_o = dh.hadamard(&cache.tanh_c)?;
    let dtanh = cache.tanh_c.map(|v| 1.0 - v * v);
    let dc = dc_in.add(&dh.hadamard(&cache.o)?.hadamard(&dtanh)?)?;

    // c = f (*) c_prev + i (*) g
    let d_f = dc.hadamard(&cache.c_prev)?;
    let d_i = dc.hadamard(&cache.g)?;
    let d_g = dc.hadamard(&cache.i)?;
    let dc_prev = dc.hadamard(&cache.f)?;

    // through the gate nonlinearities
    let dz_i = d_i.hadamard(&cache.i)?.hadamard(&one(&cache.i))?;
    let dz_f = d_f.hadamard(&cache.f)?.hadamard(&one(&cache.f))?;
    let dz_o = d_o.hadamard(&cache.o)?.hadamard(&one(&cache.o))?;
    let dz_g = d_g.hadamard(&cache.g.map(|v| 1.0 - v * v))?;
    let dz = Matrix::hconcat(&[&dz_i, &dz_f, &dz_o, &dz_g])?;

    grads.w = grads.w.add(&dz.transpose().matmul(x_t)?)?;
    grads.u = grads.u.add(&dz.transpose().matmul(&cache.h_prev)?)?;
    grads.b = grads.b.add(&dz.col_sums())?;

    Ok(CellStepGrads {
        dx: dz.matmul(&p.w)?,
        dh_prev: dz.matmul(&p.u)?,
        dc_prev,
    })
}

/// Caches for one full directional scan, in processing order.
#[derive(Debug)]
pub struct DirectionCache {
    steps: Vec<LstmCellCache>,
    reverse: bool,
}

/// Scans `inputs` (one `B x input_dim` matrix per timestep) in the given
/// direction from zero initial state. Returns hidden states indexed by
/// ORIGINAL timestep.
pub fn direction_forward(
    p: &LstmDirectionParams,
    inputs: &[Matrix],
    reverse: bool,
) -> Result<(Vec<Matrix>, DirectionCache)> {
    let steps = inputs.len();
    let batch = inputs[0].rows();
    let mut h = Matrix::zeros(batch, p.hidden);
    let mut c = Matrix::zeros(batch, p.hidden);
    let mut hidden_by_time: Vec<Option<Matrix>> = vec![None; steps];
    let mut caches = Vec::with_capacity(steps);

    for step in 0..steps {
        let t = if reverse { steps - 1 - step } else { step };
        let (h_t, c_t, cache) = lstm_cell_forward(&inputs[t], &h, &c, p)?;
        hidden_by_time[t] = Some(h_t.clone());
        caches.push(cache);
        h = h_t;
        c = c_t;
    }

    let hidden = hidden_by_time.into_iter().map(|m| m.unwrap()).collect();
    Ok((hidden, DirectionCache { steps: caches, reverse }))
}

/// BPTT over one direction. `dh_by_time` is indexed by original timestep.
/// Returns parameter gradients and input gradients by original timestep.
pub fn direction_backward(
    p: &LstmDirectionParams,
    inputs: &[Matrix],
    cache: &DirectionCache,
    dh_by_time: &[Matrix],
) -> Result<(LstmDirectionGrads, Vec<Matrix>)> {
    let steps = inputs.len();
    let batch = inputs[0].rows();
    let mut grads = LstmDirectionGrads::zeros(p);
    let mut dx_by_time: Vec<Option<Matrix>> = vec![None; steps];
    let mut dh_rec = Matrix::zeros(batch, p.hidden);
    let mut dc_rec = Matrix::zeros(batch, p.hidden);

    for step in (0..steps).rev() {
        let t = if cache.reverse { steps - 1 - step } else { step };
        let dh = dh_by_time[t].add(&dh_rec)?;
        let out = lstm_cell_backward(&inputs[t], &cache.steps[step], &dh, &dc_rec, p, &mut grads)?;
        dx_by_time[t] = Some(out.dx);
        dh_rec = out.dh_prev;
        dc_rec = out.dc_prev;
    }

    let dx = dx_by_time.into_iter().map(|m| m.unwrap()).collect();
    Ok((grads, dx))
}

/// Two opposite scans whose hidden states are concatenated, widths `2H`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmLayer {
    pub forward: LstmDirectionParams,
    pub backward: LstmDirectionParams,
    pub returns_sequences: bool,
}

/// Gradients mirroring [`BiLstmLayer`].
#[derive(Clone, Debug)]
pub struct BiLstmGrads {
    pub forward: LstmDirectionGrads,
    pub backward: LstmDirectionGrads,
}

#[derive(Debug)]
pub struct BiLstmCache {
    fwd: DirectionCache,
    bwd: DirectionCache,
}

/// Per-timestep and final outputs of one bidirectional pass.
#[derive(Debug)]
pub struct BiLstmOutputs {
    /// `[h_fwd_t ; h_bwd_t]` per original timestep, each `B x 2H`.
    pub per_step: Vec<Matrix>,
    /// Each direction's final state: `[h_fwd_last ; h_bwd_first]`.
    pub final_concat: Matrix,
}

impl BiLstmLayer {
    pub fn init(
        input_dim: usize,
        hidden: usize,
        returns_sequences: bool,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(BiLstmLayer {
            forward: LstmDirectionParams::init(input_dim, hidden, rng)?,
            backward: LstmDirectionParams::init(input_dim, hidden, rng)?,
            returns_sequences,
        })
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    /// Output width: concatenation of both directions.
    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    pub fn forward_pass(&self, inputs: &[Matrix]) -> Result<(BiLstmOutputs, BiLstmCache)> {
        if inputs.is_empty() {
            return Err(Error::Argument("bilstm forward needs >= 1 timestep".into()));
        }
        let (fwd_hidden, fwd_cache) = direction_forward(&self.forward, inputs, false)?;
        let (bwd_hidden, bwd_cache) = direction_forward(&self.backward, inputs, true)?;

        let mut per_step = Vec::with_capacity(inputs.len());
        for t in 0..inputs.len() {
            per_step.push(Matrix::hconcat(&[&fwd_hidden[t], &bwd_hidden[t]])?);
        }
        let final_concat = Matrix::hconcat(&[
            &fwd_hidden[inputs.len() - 1],
            &bwd_hidden[0],
        ])?;

        let cache = BiLstmCache {
            fwd: fwd_cache,
            bwd: bwd_cache,
        };
        Ok((BiLstmOutputs { per_step, final_concat }, cache))
    }

    /// Backward when every timestep's output received gradient.
    pub fn backward_sequences(
        &self,
        inputs: &[Matrix],
        cache: &BiLstmCache,
        d_out_per_step: &[Matrix],
    ) -> Result<(BiLstmGrads, Vec<Matrix>)> {
        let h = self.hidden();
        let mut d_fwd = Vec::with_capacity(inputs.len());
        let mut d_bwd = Vec::with_capacity(inputs.len());
        for d in d_out_per_step {
            d_fwd.push(d.columns(0, h));
            d_bwd.push(d.columns(h, 2 * h));
        }
        self.backward_from_direction_grads(inputs, cache, d_fwd, d_bwd)
    }

    /// Backward when only the final concatenated state received gradient.
    pub fn backward_final(
        &self,
        inputs: &[Matrix],
        cache: &BiLstmCache,
        d_final: &Matrix,
    ) -> Result<(BiLstmGrads, Vec<Matrix>)> {
        let h = self.hidden();
        let batch = inputs[0].rows();
        let steps = inputs.len();
        let mut d_fwd = vec![Matrix::zeros(batch, h); steps];
        let mut d_bwd = vec![Matrix::zeros(batch, h); steps];
        d_fwd[steps - 1] = d_final.columns(0, h);
        d_bwd[0] = d_final.columns(h, 2 * h);
        self.backward_from_direction_grads(inputs, cache, d_fwd, d_bwd)
    }

    fn backward_from_direction_grads(
        &self,
        inputs: &[Matrix],
        cache: &BiLstmCache,
        d_fwd: Vec<Matrix>,
        d_bwd: Vec<Matrix>,
    ) -> Result<(BiLstmGrads, Vec<Matrix>)> {
        let (fwd_grads, dx_fwd) = direction_backward(&self.forward, inputs, &cache.fwd, &d_fwd)?;
        let (bwd_grads, dx_bwd) = direction_backward(&self.backward, inputs, &cache.bwd, &d_bwd)?;
        let mut dx = Vec::with_capacity(inputs.len());
        for (a, b) in dx_fwd.iter().zip(&dx_bwd) {
            dx.push(a.add(b)?);
        }
        Ok((
            BiLstmGrads {
                forward: fwd_grads,
                backward: bwd_grads,
            },
            dx,
        ))
    }

    /// Hidden states of the two scans by original timestep (test hook for
    /// the direction-symmetry property).
    pub fn direction_states(
        &self,
        inputs: &[Matrix],
    ) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
        let (fwd, _) = direction_forward(&self.forward, inputs, false)?;
        let (bwd, _) = direction_forward(&self.backward, inputs, true)?;
        Ok((fwd, bwd))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_difference_grad;

    fn scalar_params() -> LstmDirectionParams {
        LstmDirectionParams {
            w: Matrix::from_rows(&[&[0.5], &[-0.3], &[0.8], &[1.0]]).unwrap(),
            u: Matrix::from_rows(&[&[0.1], &[0.2], &[-0.1], &[0.3]]).unwrap(),
            b: Matrix::from_rows(&[&[0.05, -0.05, 0.0, 0.1]]).unwrap(),
            hidden: 1,
            input_dim: 1,
        }
    }

    #[test]
    fn zero_parameters_and_inputs_give_zero_states() {
        let p = LstmDirectionParams::zeros(3, 2);
        let x = Matrix::zeros(4, 3);
        let h = Matrix::zeros(4, 2);
        let c = Matrix::zeros(4, 2);
        let (h_t, c_t, _) = lstm_cell_forward(&x, &h, &c, &p).unwrap();
        assert!(h_t.data().iter().all(|&v| v == 0.0));
        assert!(c_t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_cell_matches_hand_trace() {
        // Hand-evaluated gate equations for x=2, h_prev=0.5, c_prev=-1
        // with the constants in scalar_params().
        let p = scalar_params();
        let x = Matrix::from_rows(&[&[2.0]]).unwrap();
        let h_prev = Matrix::from_rows(&[&[0.5]]).unwrap();
        let c_prev = Matrix::from_rows(&[&[-1.0]]).unwrap();
        let (h, c, cache) = lstm_cell_forward(&x, &h_prev, &c_prev, &p).unwrap();
        assert!((cache.i.get(0, 0) - 0.7502601055951177).abs() < 1e-12);
        assert!((cache.f.get(0, 0) - 0.3658644089891993).abs() < 1e-12);
        assert!((cache.o.get(0, 0) - 0.8249137318359602).abs() < 1e-12);
        assert!((cache.g.get(0, 0) - 0.9780261147388136).abs() < 1e-12);
        assert!((c.get(0, 0) - 0.36790956712952566).abs() < 1e-12);
        assert!((h.get(0, 0) - 0.2905031711558041).abs() < 1e-12);
    }

    #[test]
    fn cell_rejects_mismatched_shapes() {
        let p = scalar_params();
        let x = Matrix::zeros(1, 3);
        let s = Matrix::zeros(1, 1);
        assert!(lstm_cell_forward(&x, &s, &s, &p).is_err());
    }

    /// Gradients of sum(h_T) with respect to every direction parameter,
    /// checked against central differences on a small random scan.
    #[test]
    fn direction_gradients_match_finite_differences() {
        let mut rng = SeededRng::new(77);
        let p = LstmDirectionParams::init(3, 2, &mut rng).unwrap();
        // Randomize biases too so no gradient sits at a symmetric point.
        let p = LstmDirectionParams {
            b: uniform_init(1, 8, 0.3, &mut rng).unwrap(),
            ..p
        };
        let inputs: Vec<Matrix> = (0..4)
            .map(|_| uniform_init(2, 3, 1.0, &mut rng).unwrap())
            .collect();

        let loss = |params: &LstmDirectionParams| -> f64 {
            let (hidden, _) = direction_forward(params, &inputs, false).unwrap();
            hidden.last().unwrap().sum()
        };

        let (hidden, cache) = direction_forward(&p, &inputs, false).unwrap();
        let batch = 2;
        let mut dh = vec![Matrix::zeros(batch, 2); 4];
        dh[3] = hidden[3].map(|_| 1.0);
        let (grads, _) = direction_backward(&p, &inputs, &cache, &dh).unwrap();

        for (name, analytic, replace) in [
            (
                "w",
                &grads.w,
                Box::new(|p: &LstmDirectionParams, m: &Matrix| LstmDirectionParams {
                    w: m.clone(),
                    ..p.clone()
                }) as Box<dyn Fn(&LstmDirectionParams, &Matrix) -> LstmDirectionParams>,
            ),
            (
                "u",
                &grads.u,
                Box::new(|p: &LstmDirectionParams, m: &Matrix| LstmDirectionParams {
                    u: m.clone(),
                    ..p.clone()
                }),
            ),
            (
                "b",
                &grads.b,
                Box::new(|p: &LstmDirectionParams, m: &Matrix| LstmDirectionParams {
                    b: m.clone(),
                    ..p.clone()
                }),
            ),
        ] {
            let base = match name {
                "w" => p.w.clone(),
                "u" => p.u.clone(),
                _ => p.b.clone(),
            };
            let numeric =
                finite_difference_grad(|m| loss(&replace(&p, m)), &base, 1e-5).unwrap();
            for (a, n) in analytic.data().iter().zip(numeric.data()) {
                let denom = a.abs().max(n.abs()).max(1e-8);
                assert!(
                    (a - n).abs() / denom < 1e-4,
                    "{name}: analytic {a} vs numeric {n}"
                );
            }
        }
    }

    #[test]
    fn backward_direction_equals_forward_on_reversed_input() {
        let mut rng = SeededRng::new(5);
        let p = LstmDirectionParams::init(2, 3, &mut rng).unwrap();
        let inputs: Vec<Matrix> = (0..5)
            .map(|_| uniform_init(2, 2, 1.0, &mut rng).unwrap())
            .collect();
        let reversed: Vec<Matrix> = inputs.iter().rev().cloned().collect();

        let (rev_scan, _) = direction_forward(&p, &inputs, true).unwrap();
        let (fwd_on_reversed, _) = direction_forward(&p, &reversed, false).unwrap();
        // Scanning backwards over x equals scanning forwards over
        // reverse(x), with outputs in reverse order.
        for t in 0..5 {
            assert_eq!(rev_scan[t], fwd_on_reversed[4 - t]);
        }
    }

    #[test]
    fn bilstm_output_widths_concatenate_directions() {
        let mut rng = SeededRng::new(9);
        let layer = BiLstmLayer::init(4, 3, true, &mut rng).unwrap();
        let inputs: Vec<Matrix> = (0..6)
            .map(|_| uniform_init(2, 4, 1.0, &mut rng).unwrap())
            .collect();
        let (out, _) = layer.forward_pass(&inputs).unwrap();
        assert_eq!(out.per_step.len(), 6);
        assert_eq!(out.per_step[0].shape(), (2, 6));
        assert_eq!(out.final_concat.shape(), (2, 6));
        let h = layer.hidden();
        // Final concat is [fwd at t=T-1 ; bwd at t=0].
        let (fwd, bwd) = layer.direction_states(&inputs).unwrap();
        assert_eq!(out.final_concat.columns(0, h), fwd[5]);
        assert_eq!(out.final_concat.columns(h, 2 * h), bwd[0]);
    }

    #[test]
    fn all_zero_inputs_keep_bilstm_silent() {
        let mut rng = SeededRng::new(13);
        let layer = BiLstmLayer::init(4, 3, false, &mut rng).unwrap();
        let inputs = vec![Matrix::zeros(2, 4); 5];
        let (out, _) = layer.forward_pass(&inputs).unwrap();
        assert!(out.final_concat.data().iter().all(|&v| v == 0.0));
    }
}
