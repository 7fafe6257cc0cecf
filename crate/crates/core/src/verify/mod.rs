//! Provable bounds on the violation ratio via interval bound propagation,
//! refined by a linear relaxation, and branch-and-bound input splitting.

mod compare;
mod symbolic;

use std::collections::VecDeque;
use std::time::Instant;

use serde::Serialize;

use crate::mlp::{Layer, MarginNet, Mlp};
use crate::properties::{InputBox, Interval, Property};
use crate::{Error, Result};

pub use compare::{compare_estimator, write_comparison_csv, ComparisonRow, EstimatorColumn};
pub use symbolic::linear_bounds;

pub const DEFAULT_GAP: f64 = 0.005;
pub const DEFAULT_MAX_BOXES: usize = 1_000_000;
/// Boxes whose widest normalized side falls below this are decided at their center.
pub const DEGENERATE_WIDTH: f64 = 1e-9;

/// Per-neuron `(lo, hi)` bounds for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundVector {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundVector {
    pub fn from_box(bx: &InputBox) -> Self {
        Self { lo: bx.lower(), hi: bx.upper() }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.len() && v.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| l <= x && x <= h)
    }

    fn relu(&mut self) {
        for v in self.lo.iter_mut().chain(self.hi.iter_mut()) {
            *v = v.max(0.0);
        }
    }
}

/// Affine layer in interval arithmetic (`w⁺·lo + w⁻·hi`), widened outward by a
/// bound on the floating-point summation error of both this computation and an
/// ordinary forward pass. The slack scales with `Σ|w|·max|x| + |b|` per row;
/// callers may pass a larger magnitude in `extra_mag`.
fn affine_bounds(layer: &Layer, input: &BoundVector, extra_mag: Option<&[f64]>) -> BoundVector {
    let n = layer.n_in as f64;
    let slack_factor = 2.0 * (n + 3.0) * f64::EPSILON;
    let absmax: Vec<f64> = input.lo.iter().zip(&input.hi).map(|(l, h)| l.abs().max(h.abs())).collect();
    let mut lo = Vec::with_capacity(layer.n_out);
    let mut hi = Vec::with_capacity(layer.n_out);
    for o in 0..layer.n_out {
        let row = layer.weight_row(o);
        let b = layer.biases[o];
        let (mut l, mut h, mut wmag) = (b, b, 0.0);
        for ((&w, (&xl, &xh)), &a) in row.iter().zip(input.lo.iter().zip(&input.hi)).zip(&absmax) {
            if w >= 0.0 {
                l += w * xl;
                h += w * xh;
            } else {
                l += w * xh;
                h += w * xl;
            }
            wmag += w.abs() * a;
        }
        // With no weighted terms both computations reduce to the bias exactly.
        let mut mag = if wmag > 0.0 { wmag + b.abs() } else { 0.0 };
        if let Some(m) = extra_mag {
            mag = mag.max(m[o]);
        }
        let slack = slack_factor * mag;
        lo.push(l - slack);
        hi.push(h + slack);
    }
    BoundVector { lo, hi }
}

/// Sound bounds on every margin output `y_i − y_k` over `bx`.
///
/// The output layer is folded with the margin layer, so bounds on `y_i − y_k`
/// are much tighter than the difference of separate bounds on `y_i` and `y_k`.
/// Row `k` is identically zero.
pub fn interval_forward(net: &MarginNet<'_>, bx: &InputBox) -> Result<BoundVector> {
    Error::check_dim(net.input_dim(), bx.dim())?;
    let layers = net.base().layers();
    let mut b = BoundVector::from_box(bx);
    for layer in &layers[..layers.len() - 1] {
        b = affine_bounds(layer, &b, None);
        b.relu();
    }
    let last = layers.last().expect("non-empty network");
    let folded = net.folded_output_layer();
    // The unfolded rows bound the rounding of `y_i` and `y_k` computed separately.
    let k = net.forbidden_action();
    let absmax: Vec<f64> = b.lo.iter().zip(&b.hi).map(|(l, h)| l.abs().max(h.abs())).collect();
    let wmag = |o: usize| last.weight_row(o).iter().zip(&absmax).map(|(w, a)| w.abs() * a).sum::<f64>();
    let extra: Vec<f64> = (0..last.n_out)
        .map(|o| {
            let w = wmag(o) + wmag(k);
            if o == k || w == 0.0 {
                0.0
            } else {
                2.0 * (w + last.biases[o].abs() + last.biases[k].abs())
            }
        })
        .collect();
    let mut out = affine_bounds(&folded, &b, Some(&extra));
    out.lo[k] = 0.0;
    out.hi[k] = 0.0;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BoxVerdict {
    /// The forbidden action is selected at every point of the box.
    AllViolated,
    /// Some other action beats the forbidden one at every point of the box.
    NoneViolated,
    Unknown,
}

fn verdict_from_bounds(b: &BoundVector, k: usize) -> BoxVerdict {
    let others = || (0..b.len()).filter(move |&j| j != k);
    if others().all(|j| b.hi[j] <= 0.0) {
        BoxVerdict::AllViolated
    } else if others().any(|j| b.lo[j] > 0.0) {
        BoxVerdict::NoneViolated
    } else {
        BoxVerdict::Unknown
    }
}

/// Interval bounds first; boxes they leave undecided get the tighter linear
/// relaxation.
pub fn decide_box(net: &MarginNet<'_>, bx: &InputBox) -> Result<BoxVerdict> {
    let k = net.forbidden_action();
    match verdict_from_bounds(&interval_forward(net, bx)?, k) {
        BoxVerdict::Unknown => Ok(verdict_from_bounds(&linear_bounds(net, bx)?, k)),
        decided => Ok(decided),
    }
}

/// Bracket on the violation ratio of one property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerificationResult {
    pub violation_lower: f64,
    pub violation_upper: f64,
    pub boxes_explored: usize,
    pub elapsed: f64,
    /// Stopped on `max_boxes` before reaching the requested gap.
    pub budget_exhausted: bool,
    /// Boxes too small to split that were decided from their center point.
    /// When non-zero the bracket is no longer strictly provable.
    pub degenerate_boxes: usize,
}

impl VerificationResult {
    pub fn gap(&self) -> f64 {
        self.violation_upper - self.violation_lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.violation_lower + self.violation_upper)
    }
}

/// Running totals of the branch-and-bound, all as fractions of the property box.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measures {
    pub violated: f64,
    pub safe: f64,
    pub unknown: f64,
}

impl Measures {
    pub fn total(&self) -> f64 {
        self.violated + self.safe + self.unknown
    }
}

struct PendingBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Number of halvings from the property box; measure is `2^-depth`.
    depth: i32,
}

/// Branch-and-bound bracket of the violation ratio of `prop` under `net`.
///
/// Boxes are processed first-in first-out, so a larger `max_boxes` replays
/// the same sequence further and never widens the bracket. Unknown boxes are
/// halved along their widest side relative to the property box, lowest index
/// first on ties.
pub fn formal_violation(net: &Mlp, prop: &Property, gap: f64, max_boxes: usize) -> Result<VerificationResult> {
    formal_violation_traced(net, prop, gap, max_boxes, |_| {})
}

/// [`formal_violation`] that reports the running measures after every box.
pub fn formal_violation_traced(
    net: &Mlp,
    prop: &Property,
    gap: f64,
    max_boxes: usize,
    mut trace: impl FnMut(&Measures),
) -> Result<VerificationResult> {
    if !(gap > 0.0 && gap < 1.0) {
        return Err(Error::invalid(format!("gap must lie in (0, 1), got {gap}")));
    }
    if max_boxes == 0 {
        return Err(Error::invalid("max_boxes must be at least 1"));
    }
    let margin = MarginNet::new(net, prop.forbidden_action)?;
    Error::check_dim(net.input_dim(), prop.pre.dim())?;
    let start = Instant::now();
    let k = prop.forbidden_action;
    let scale: Vec<f64> = prop.pre.dims().iter().map(|iv| if iv.width() > 0.0 { 1.0 / iv.width() } else { 0.0 }).collect();

    let mut queue = VecDeque::new();
    queue.push_back(PendingBox { lo: prop.pre.lower(), hi: prop.pre.upper(), depth: 0 });
    let mut m = Measures { unknown: 1.0, ..Measures::default() };
    let mut explored = 0usize;
    let mut degenerate = 0usize;

    while m.unknown > gap && explored < max_boxes {
        let Some(bx) = queue.pop_front() else { break };
        explored += 1;
        let measure = 2f64.powi(-bx.depth);
        let ibox = to_box(&bx.lo, &bx.hi)?;
        let verdict = decide_box(&margin, &ibox)?;
        match verdict {
            BoxVerdict::AllViolated => {
                m.violated += measure;
                m.unknown -= measure;
            }
            BoxVerdict::NoneViolated => {
                m.safe += measure;
                m.unknown -= measure;
            }
            BoxVerdict::Unknown => {
                let (dim, width) = widest_dim(&bx.lo, &bx.hi, &scale);
                if width < DEGENERATE_WIDTH {
                    degenerate += 1;
                    let center = ibox.center();
                    let y = net.forward(&center)?;
                    if y.iter().all(|&yi| yi - y[k] <= 0.0) {
                        m.violated += measure;
                    } else {
                        m.safe += measure;
                    }
                    m.unknown -= measure;
                } else {
                    let mid = 0.5 * (bx.lo[dim] + bx.hi[dim]);
                    let mut left_hi = bx.hi.clone();
                    left_hi[dim] = mid;
                    let mut right_lo = bx.lo.clone();
                    right_lo[dim] = mid;
                    queue.push_back(PendingBox { lo: bx.lo, hi: left_hi, depth: bx.depth + 1 });
                    queue.push_back(PendingBox { lo: right_lo, hi: bx.hi, depth: bx.depth + 1 });
                }
            }
        }
        trace(&m);
    }
    let lower = m.violated.clamp(0.0, 1.0);
    let upper = (1.0 - m.safe).clamp(lower, 1.0);
    Ok(VerificationResult {
        violation_lower: lower,
        violation_upper: upper,
        boxes_explored: explored,
        elapsed: start.elapsed().as_secs_f64(),
        budget_exhausted: upper - lower > gap,
        degenerate_boxes: degenerate,
    })
}

fn to_box(lo: &[f64], hi: &[f64]) -> Result<InputBox> {
    lo.iter().zip(hi).map(|(&l, &h)| Interval::new(l, h)).collect::<Result<Vec<_>>>().map(InputBox::new)
}

/// Widest side after normalizing by the property box; lowest index wins ties.
fn widest_dim(lo: &[f64], hi: &[f64], scale: &[f64]) -> (usize, f64) {
    let mut best = (0, -1.0);
    for (i, ((l, h), s)) in lo.iter().zip(hi).zip(scale).enumerate() {
        let w = (h - l) * s;
        if w > best.1 {
            best = (i, w);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::MlpSpec;
    use crate::properties::{navigation_property_set, sample_box, Origin};
    use crate::rng_from_seed;

    fn layer(n_in: usize, n_out: usize, weights: Vec<f64>, biases: Vec<f64>) -> Layer {
        Layer { n_in, n_out, weights, biases }
    }

    fn constant_net(n_in: usize, outputs: &[f64]) -> Mlp {
        Mlp::from_layers(vec![layer(n_in, outputs.len(), vec![0.0; n_in * outputs.len()], outputs.to_vec())]).unwrap()
    }

    fn unit_box(d: usize) -> InputBox {
        InputBox::from_bounds(&vec![0.0; d], &vec![1.0; d]).unwrap()
    }

    #[test]
    fn point_box_collapses_to_forward() {
        let mut rng = rng_from_seed(2);
        let net = Mlp::new(MlpSpec::actor(5), &mut rng).unwrap();
        let x: Vec<f64> = (0..13).map(|i| 0.05 * i as f64).collect();
        let margin = MarginNet::new(&net, 2).unwrap();
        let b = interval_forward(&margin, &InputBox::from_bounds(&x, &x).unwrap()).unwrap();
        let y = margin.forward(&x).unwrap();
        for i in 0..5 {
            assert!(b.lo[i] <= y[i] && y[i] <= b.hi[i]);
            assert!(b.hi[i] - b.lo[i] < 1e-12, "width {}", b.hi[i] - b.lo[i]);
        }
    }

    #[test]
    fn linear_scalar_bounds() {
        // Two outputs so the margin against a zero output exposes y = 2x.
        let net = Mlp::from_layers(vec![layer(1, 2, vec![2.0, 0.0], vec![0.0, 0.0])]).unwrap();
        let margin = MarginNet::new(&net, 1).unwrap();
        let b = interval_forward(&margin, &InputBox::from_bounds(&[-1.0], &[1.0]).unwrap()).unwrap();
        assert!((b.lo[0] + 2.0).abs() < 1e-14 && (b.hi[0] - 2.0).abs() < 1e-14);
        assert!(b.lo[0] <= -2.0 && b.hi[0] >= 2.0);
        assert_eq!((b.lo[1], b.hi[1]), (0.0, 0.0));
    }

    #[test]
    fn sampled_outputs_stay_inside_bounds() {
        let mut rng = rng_from_seed(11);
        let net = Mlp::new(MlpSpec::actor(5), &mut rng).unwrap();
        let props = navigation_property_set();
        for p in &props {
            let margin = MarginNet::new(&net, p.forbidden_action).unwrap();
            let b = interval_forward(&margin, &p.pre).unwrap();
            let xs = sample_box(&p.pre, 2000, &mut rng);
            for y in margin.forward_batch(&xs).unwrap().iter_rows() {
                assert!(b.contains(y));
            }
        }
    }

    #[test]
    fn constant_nets_decide_immediately() {
        let winner = constant_net(3, &[0.0, 5.0, 1.0]);
        let m = MarginNet::new(&winner, 1).unwrap();
        assert_eq!(decide_box(&m, &unit_box(3)).unwrap(), BoxVerdict::AllViolated);
        let m = MarginNet::new(&winner, 2).unwrap();
        assert_eq!(decide_box(&m, &unit_box(3)).unwrap(), BoxVerdict::NoneViolated);
        let p = Property::new(unit_box(3), 1, Origin::HardCoded);
        let r = formal_violation(&winner, &p, DEFAULT_GAP, 10).unwrap();
        assert_eq!((r.violation_lower, r.violation_upper, r.boxes_explored), (1.0, 1.0, 1));
    }

    #[test]
    fn tie_counts_as_violation() {
        let tie = constant_net(2, &[1.0, 1.0]);
        let m = MarginNet::new(&tie, 0).unwrap();
        assert_eq!(decide_box(&m, &unit_box(2)).unwrap(), BoxVerdict::AllViolated);
    }

    /// Action 0 wins for x < 0.5, action 1 for x > 0.5.
    fn threshold_net() -> Mlp {
        Mlp::from_layers(vec![layer(1, 2, vec![-1.0, 1.0], vec![0.5, -0.5])]).unwrap()
    }

    #[test]
    fn switching_box_is_unknown() {
        let net = threshold_net();
        let m = MarginNet::new(&net, 0).unwrap();
        assert_eq!(decide_box(&m, &unit_box(1)).unwrap(), BoxVerdict::Unknown);
        let left = InputBox::from_bounds(&[0.0], &[0.25]).unwrap();
        assert_eq!(decide_box(&m, &left).unwrap(), BoxVerdict::AllViolated);
    }

    #[test]
    fn one_dimensional_threshold_brackets_half() {
        let net = threshold_net();
        let p = Property::new(unit_box(1), 0, Origin::HardCoded);
        let r = formal_violation(&net, &p, 0.001, 100_000).unwrap();
        assert!(r.violation_lower <= 0.5 && 0.5 <= r.violation_upper, "{r:?}");
        assert!(r.gap() <= 0.001);
        assert!(!r.budget_exhausted);
        assert_eq!(r.degenerate_boxes, 0);
    }

    #[test]
    fn off_center_threshold() {
        // Switch at x = 0.3 on [0, 1]: y0 = 0.3 − x, y1 = 0.
        let net = Mlp::from_layers(vec![layer(1, 2, vec![-1.0, 0.0], vec![0.3, 0.0])]).unwrap();
        let p = Property::new(unit_box(1), 0, Origin::HardCoded);
        let r = formal_violation(&net, &p, 1e-4, 100_000).unwrap();
        assert!(r.violation_lower <= 0.3 && 0.3 <= r.violation_upper, "{r:?}");
    }

    #[test]
    fn measure_is_conserved() {
        let mut rng = rng_from_seed(4);
        let net = Mlp::new(MlpSpec::new(vec![3, 8, 3]).unwrap(), &mut rng).unwrap();
        let p = Property::new(unit_box(3), 1, Origin::HardCoded);
        let mut steps = 0;
        formal_violation_traced(&net, &p, 1e-3, 5000, |m| {
            steps += 1;
            assert!((m.total() - 1.0).abs() <= 1e-12);
        })
        .unwrap();
        assert!(steps > 1);
    }

    #[test]
    fn refinement_is_monotone() {
        let mut rng = rng_from_seed(8);
        let net = Mlp::new(MlpSpec::new(vec![2, 6, 3]).unwrap(), &mut rng).unwrap();
        let p = Property::new(unit_box(2), 0, Origin::HardCoded);
        let mut prev = f64::INFINITY;
        for budget in [1, 3, 10, 30, 100, 300, 1000] {
            let r = formal_violation(&net, &p, 1e-6, budget).unwrap();
            assert!(r.gap() <= prev);
            prev = r.gap();
        }
    }

    #[test]
    fn argument_checks() {
        let net = threshold_net();
        let p = Property::new(unit_box(1), 0, Origin::HardCoded);
        assert!(formal_violation(&net, &p, 0.0, 10).is_err());
        assert!(formal_violation(&net, &p, 1.0, 10).is_err());
        assert!(formal_violation(&net, &p, 0.1, 0).is_err());
        let bad = Property::new(unit_box(1), 5, Origin::HardCoded);
        assert!(formal_violation(&net, &bad, 0.1, 10).is_err());
        let wrong_dim = Property::new(unit_box(3), 0, Origin::HardCoded);
        assert!(formal_violation(&net, &wrong_dim, 0.1, 10).is_err());
    }

    #[test]
    fn degenerate_guard_flags_center_decisions() {
        // Switch at an irrational-ish point never aligned with dyadic splits.
        let t = std::f64::consts::FRAC_1_SQRT_2;
        let net = Mlp::from_layers(vec![layer(1, 2, vec![-1.0, 0.0], vec![t, 0.0])]).unwrap();
        let p = Property::new(unit_box(1), 0, Origin::HardCoded);
        let r = formal_violation(&net, &p, 1e-15, 10_000).unwrap();
        assert!(r.degenerate_boxes >= 1);
        assert!((r.midpoint() - t).abs() < 1e-8);
    }
}
