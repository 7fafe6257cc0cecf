use super::{Layer, Matrix, Mlp};
use crate::{Error, Result};

/// A network with one extra layer computing `y_i − y_k` for every output `i`.
///
/// Action `k` is selected (ties included) exactly when every margin is `≤ 0`.
#[derive(Debug, Clone)]
pub struct MarginNet<'a> {
    base: &'a Mlp,
    k: usize,
}

impl<'a> MarginNet<'a> {
    pub fn new(base: &'a Mlp, k: usize) -> Result<Self> {
        if k >= base.output_dim() {
            return Err(Error::invalid(format!(
                "forbidden action {k} out of range for {} outputs",
                base.output_dim()
            )));
        }
        Ok(Self { base, k })
    }

    pub fn base(&self) -> &'a Mlp {
        self.base
    }

    pub fn forbidden_action(&self) -> usize {
        self.k
    }

    pub fn input_dim(&self) -> usize {
        self.base.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.base.output_dim()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.base.forward(input)?;
        margins_in_place(&mut y, self.k);
        Ok(y)
    }

    pub fn forward_batch(&self, inputs: &Matrix) -> Result<Matrix> {
        let mut out = self.base.forward_batch(inputs)?;
        for i in 0..out.rows() {
            margins_in_place(out.row_mut(i), self.k);
        }
        Ok(out)
    }

    /// Number of rows whose largest margin is `≤ 0`.
    pub fn count_selected(&self, inputs: &Matrix) -> Result<usize> {
        let k = self.k;
        let mut count = 0;
        let mut finite = true;
        self.base.for_each_output(inputs, |_, y| {
            let yk = y[k];
            finite &= y.iter().all(|v| v.is_finite());
            if y.iter().all(|&yi| yi - yk <= 0.0) {
                count += 1;
            }
        })?;
        if !finite {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(count)
    }

    /// The base network's output layer composed with the margin layer, folded
    /// into one affine map: rows `W_i − W_k`, biases `b_i − b_k`.
    pub fn folded_output_layer(&self) -> Layer {
        let last = self.base.layers().last().expect("non-empty network");
        let wk = last.weight_row(self.k);
        let bk = last.biases[self.k];
        let mut weights = Vec::with_capacity(last.weights.len());
        for o in 0..last.n_out {
            if o == self.k {
                weights.extend(std::iter::repeat(0.0).take(last.n_in));
            } else {
                weights.extend(last.weight_row(o).iter().zip(wk).map(|(a, b)| a - b));
            }
        }
        let biases = last
            .biases
            .iter()
            .enumerate()
            .map(|(o, b)| if o == self.k { 0.0 } else { b - bk })
            .collect();
        Layer { n_in: last.n_in, n_out: last.n_out, weights, biases }
    }
}

fn margins_in_place(y: &mut [f64], k: usize) {
    let yk = y[k];
    for v in y.iter_mut() {
        *v -= yk;
    }
    y[k] = 0.0;
}
