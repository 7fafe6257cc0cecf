//! Linear-relaxation bounds: every neuron carries a lower and an upper affine
//! function of the input, and unstable ReLUs are replaced by linear envelopes.

use super::{affine_bounds, interval_forward, BoundVector};
use crate::mlp::{Layer, MarginNet};
use crate::properties::InputBox;
use crate::{Error, Result};

/// Relative widening applied to every concretized bound. Far above the
/// accumulated rounding of both the symbolic arithmetic and a plain forward
/// pass on networks of this size.
const REL_SLACK: f64 = 1e-9;

/// Affine functions of the input, one row per neuron: `n_in` coefficients
/// followed by a constant.
struct Forms {
    stride: usize,
    data: Vec<f64>,
}

impl Forms {
    fn identity(d: usize) -> Self {
        let stride = d + 1;
        let mut data = vec![0.0; d * stride];
        for i in 0..d {
            data[i * stride + i] = 1.0;
        }
        Self { stride, data }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.stride..(i + 1) * self.stride]
    }

    /// `(min, max)` of row `i` over the box.
    fn concretize(&self, i: usize, lo: &[f64], hi: &[f64]) -> (f64, f64) {
        let r = self.row(i);
        let c = r[self.stride - 1];
        let (mut mn, mut mx) = (c, c);
        for ((&a, &l), &h) in r.iter().zip(lo).zip(hi) {
            if a >= 0.0 {
                mn += a * l;
                mx += a * h;
            } else {
                mn += a * h;
                mx += a * l;
            }
        }
        (mn, mx)
    }
}

/// Push lower/upper forms through an affine layer.
fn affine_forms(layer: &Layer, lower: &Forms, upper: &Forms) -> (Forms, Forms) {
    let stride = lower.stride;
    let mut lo = Forms { stride, data: vec![0.0; layer.n_out * stride] };
    let mut hi = Forms { stride, data: vec![0.0; layer.n_out * stride] };
    for o in 0..layer.n_out {
        let b = layer.biases[o];
        let lrow = lo.row_mut(o);
        lrow[stride - 1] = b;
        for (j, &w) in layer.weight_row(o).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let src = if w > 0.0 { lower.row(j) } else { upper.row(j) };
            for (d, s) in lrow.iter_mut().zip(src) {
                *d += w * s;
            }
        }
        let hrow = hi.row_mut(o);
        hrow[stride - 1] = b;
        for (j, &w) in layer.weight_row(o).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let src = if w > 0.0 { upper.row(j) } else { lower.row(j) };
            for (d, s) in hrow.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    (lo, hi)
}

fn magnitude(layer: &Layer, o: usize, absmax: &[f64]) -> f64 {
    layer.weight_row(o).iter().zip(absmax).map(|(w, a)| w.abs() * a).sum::<f64>() + layer.biases[o].abs()
}

/// Sound bounds on every margin output over `bx`, never looser than
/// [`interval_forward`]. Row `k` is identically zero.
pub fn linear_bounds(net: &MarginNet<'_>, bx: &InputBox) -> Result<BoundVector> {
    Error::check_dim(net.input_dim(), bx.dim())?;
    let xlo = bx.lower();
    let xhi = bx.upper();
    let layers = net.base().layers();
    let mut lower = Forms::identity(xlo.len());
    let mut upper = Forms::identity(xlo.len());
    let mut conc = BoundVector { lo: xlo.clone(), hi: xhi.clone() };

    for layer in &layers[..layers.len() - 1] {
        let ibp = affine_bounds(layer, &conc, None);
        let absmax: Vec<f64> = conc.lo.iter().zip(&conc.hi).map(|(l, h)| l.abs().max(h.abs())).collect();
        let (mut lf, mut uf) = affine_forms(layer, &lower, &upper);
        let mut next = BoundVector { lo: Vec::with_capacity(layer.n_out), hi: Vec::with_capacity(layer.n_out) };
        for o in 0..layer.n_out {
            let slack = REL_SLACK * magnitude(layer, o, &absmax);
            let (lmin, _) = lf.concretize(o, &xlo, &xhi);
            let (_, umax) = uf.concretize(o, &xlo, &xhi);
            let l = (lmin - slack).max(ibp.lo[o]);
            let u = (umax + slack).min(ibp.hi[o]);
            if u <= 0.0 {
                lf.row_mut(o).fill(0.0);
                uf.row_mut(o).fill(0.0);
                next.lo.push(0.0);
                next.hi.push(0.0);
            } else if l >= 0.0 {
                // Stable: the forms stay, but carry the slack along.
                let s = lf.stride - 1;
                lf.row_mut(o)[s] -= slack;
                uf.row_mut(o)[s] += slack;
                next.lo.push(l);
                next.hi.push(u);
            } else {
                // relu(z) ≤ u·(z − l)/(u − l) on [l, u]; relu(z) ≥ z or ≥ 0.
                let s = u / (u - l);
                let st = uf.stride - 1;
                let row = uf.row_mut(o);
                row[st] += slack;
                for v in row.iter_mut() {
                    *v *= s;
                }
                row[st] -= s * l;
                if u > -l {
                    lf.row_mut(o)[st] -= slack;
                } else {
                    lf.row_mut(o).fill(0.0);
                }
                next.lo.push(0.0);
                next.hi.push(u);
            }
        }
        lower = lf;
        upper = uf;
        conc = next;
    }

    let folded = net.folded_output_layer();
    let last = layers.last().expect("non-empty network");
    let k = net.forbidden_action();
    let absmax: Vec<f64> = conc.lo.iter().zip(&conc.hi).map(|(l, h)| l.abs().max(h.abs())).collect();
    let (lf, uf) = affine_forms(&folded, &lower, &upper);
    let mut out = interval_forward(net, bx)?;
    for o in (0..folded.n_out).filter(|&o| o != k) {
        let mag = magnitude(last, o, &absmax) + magnitude(last, k, &absmax);
        let slack = REL_SLACK * mag.max(magnitude(&folded, o, &absmax));
        let (lmin, _) = lf.concretize(o, &xlo, &xhi);
        let (_, umax) = uf.concretize(o, &xlo, &xhi);
        out.lo[o] = out.lo[o].max(lmin - slack);
        out.hi[o] = out.hi[o].min(umax + slack);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{Mlp, MlpSpec};
    use crate::properties::{navigation_property_set, sample_box};
    use crate::rng_from_seed;

    #[test]
    fn contains_samples_and_refines_intervals() {
        let mut rng = rng_from_seed(4);
        let mut tighter = 0;
        for seed in 0..20 {
            let net = Mlp::new(MlpSpec::actor(5), &mut rng_from_seed(seed)).unwrap();
            let props = navigation_property_set();
            let p = props.get(seed as usize % 3).unwrap();
            let margin = MarginNet::new(&net, p.forbidden_action).unwrap();
            // A small box near the property's center.
            let c = p.pre.center();
            let w: Vec<f64> = p.pre.dims().iter().map(|iv| iv.width() * 0.05).collect();
            let lo: Vec<f64> = c.iter().zip(&w).map(|(c, w)| c - w).collect();
            let hi: Vec<f64> = c.iter().zip(&w).map(|(c, w)| c + w).collect();
            let bx = InputBox::from_bounds(&lo, &hi).unwrap();
            let lin = linear_bounds(&margin, &bx).unwrap();
            let ibp = interval_forward(&margin, &bx).unwrap();
            for o in 0..5 {
                assert!(lin.lo[o] >= ibp.lo[o] && lin.hi[o] <= ibp.hi[o]);
            }
            let width = |b: &BoundVector| b.lo.iter().zip(&b.hi).map(|(l, h)| h - l).sum::<f64>();
            if width(&lin) < 0.9 * width(&ibp) {
                tighter += 1;
            }
            for x in sample_box(&bx, 200, &mut rng).iter_rows() {
                assert!(lin.contains(&margin.forward(x).unwrap()));
            }
        }
        assert!(tighter >= 15, "only {tighter} of 20 boxes tightened");
    }

    #[test]
    fn exact_on_linear_regions() {
        // A positive box through an identity-like hidden layer stays exact.
        let net = Mlp::from_layers(vec![
            Layer { n_in: 2, n_out: 2, weights: vec![1.0, 0.0, 0.0, 1.0], biases: vec![0.0, 0.0] },
            Layer { n_in: 2, n_out: 2, weights: vec![1.0, -1.0, 0.0, 0.0], biases: vec![0.0, 0.0] },
        ])
        .unwrap();
        let margin = MarginNet::new(&net, 1).unwrap();
        let bx = InputBox::from_bounds(&[1.0, 1.0], &[2.0, 2.0]).unwrap();
        let b = linear_bounds(&margin, &bx).unwrap();
        // y0 − y1 = x0 − x1 ∈ [−1, 1].
        assert!((b.lo[0] + 1.0).abs() < 1e-8 && (b.hi[0] - 1.0).abs() < 1e-8);
        assert_eq!((b.lo[1], b.hi[1]), (0.0, 0.0));
    }
}
