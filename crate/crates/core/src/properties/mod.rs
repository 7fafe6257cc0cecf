//! Safety properties and the sample-based violation estimator.
//!
//! A [`Property`] forbids one action inside an input hyperrectangle. Given a
//! state, the estimator gathers the properties whose pre-condition contains
//! it, samples each pre-condition uniformly and counts the samples on which
//! the network still picks the forbidden action.

mod io;

use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::mlp::{MarginNet, Matrix, Mlp};
use crate::{Error, Result, Rng};

pub use io::PropertyFile;

/// Number of navigation inputs: 11 lidar rays followed by goal distance and heading.
pub const NAV_INPUT_DIM: usize = 13;
pub const NAV_LIDAR_RAYS: usize = 11;
/// Pre-condition width used for "close" lidar readings and online properties.
pub const DEFAULT_EPSILON: f64 = 0.05;
/// Samples per property for reported violation values.
pub const DEFAULT_SAMPLES: usize = 10_000;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::NonFinite("interval bound".into()));
        }
        if lo > hi {
            return Err(Error::invalid(format!("interval lower bound {lo} exceeds upper bound {hi}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(v: f64) -> Result<Self> {
        Self::new(v, v)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn is_within(&self, outer: &Interval) -> bool {
        outer.lo <= self.lo && self.hi <= outer.hi
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Axis-aligned box, one interval per network input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputBox {
    dims: Vec<Interval>,
}

impl InputBox {
    pub fn new(dims: Vec<Interval>) -> Self {
        Self { dims }
    }

    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Result<Self> {
        Error::check_dim(lo.len(), hi.len())?;
        lo.iter().zip(hi).map(|(&l, &h)| Interval::new(l, h)).collect::<Result<Vec<_>>>().map(Self::new)
    }

    /// Lidar dims in `[0, 1]`, goal dims in `[−1, 1]`.
    pub fn navigation_domain() -> Self {
        let mut dims = vec![Interval { lo: 0.0, hi: 1.0 }; NAV_LIDAR_RAYS];
        dims.extend([Interval { lo: -1.0, hi: 1.0 }; NAV_INPUT_DIM - NAV_LIDAR_RAYS]);
        Self { dims }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[Interval] {
        &self.dims
    }

    pub fn lower(&self) -> Vec<f64> {
        self.dims.iter().map(|i| i.lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.dims.iter().map(|i| i.hi).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.dims.iter().map(|i| 0.5 * (i.lo + i.hi)).collect()
    }

    pub fn contains(&self, s: &[f64]) -> Result<bool> {
        Error::check_dim(self.dim(), s.len())?;
        Ok(self.dims.iter().zip(s).all(|(i, &v)| i.contains(v)))
    }

    pub fn is_within(&self, outer: &InputBox) -> bool {
        self.dim() == outer.dim() && self.dims.iter().zip(&outer.dims).all(|(a, b)| a.is_within(b))
    }

    pub fn with_dim(mut self, i: usize, iv: Interval) -> Self {
        self.dims[i] = iv;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    HardCoded,
    Online,
}

/// Pre-condition box plus the action the policy must not select inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property {
    pub pre: InputBox,
    pub forbidden_action: usize,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl Property {
    pub fn new(pre: InputBox, forbidden_action: usize, origin: Origin) -> Self {
        Self { pre, forbidden_action, origin, name: None }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn label(&self, index: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("p{index}"))
    }

    /// Same pre-condition and forbidden action; name and origin are ignored.
    pub fn same_mapping(&self, other: &Property) -> bool {
        self.forbidden_action == other.forbidden_action && self.pre == other.pre
    }
}

/// Ordered list of properties.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PropertySet {
    props: Vec<Property>,
}

impl PropertySet {
    pub fn new(props: Vec<Property>) -> Self {
        Self { props }
    }

    pub fn len(&self) -> usize {
        self.props.len()
    }

    pub fn is_empty(&self) -> bool {
        self.props.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Property> {
        self.props.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Property> {
        self.props.get(i)
    }

    pub fn as_slice(&self) -> &[Property] {
        &self.props
    }

    pub fn push(&mut self, p: Property) {
        self.props.push(p);
    }

    pub fn count_origin(&self, origin: Origin) -> usize {
        self.props.iter().filter(|p| p.origin == origin).count()
    }

    /// Check every property against a network's shape and the input domain.
    pub fn validate(&self, input_dim: usize, n_actions: usize, domain: Option<&InputBox>) -> Result<()> {
        for (i, p) in self.props.iter().enumerate() {
            Error::check_dim(input_dim, p.pre.dim())?;
            if p.forbidden_action >= n_actions {
                return Err(Error::invalid(format!(
                    "property {i}: forbidden action {} out of range for {n_actions} actions",
                    p.forbidden_action
                )));
            }
            if let Some(d) = domain {
                if !p.pre.is_within(d) {
                    return Err(Error::invalid(format!("property {i}: pre-condition leaves the input domain")));
                }
            }
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a PropertySet {
    type Item = &'a Property;
    type IntoIter = std::slice::Iter<'a, Property>;

    fn into_iter(self) -> Self::IntoIter {
        self.props.iter()
    }
}

/// Forward, turn-left and turn-right action indices used by the navigation set.
pub const ACTION_FORWARD: usize = 4;
pub const ACTION_LEFT: usize = 1;
pub const ACTION_RIGHT: usize = 2;
/// Lidar rays watched by the three navigation properties.
pub const RAY_FRONT: usize = 5;
pub const RAY_LEFT: usize = 1;
pub const RAY_RIGHT: usize = 9;

/// The three hard-coded navigation properties, in order: front, left, right.
///
/// Each constrains one lidar reading to `[0, 0.05]`, leaves every other lidar
/// in `[0, 1]` and both goal inputs in `[−1, 1]`.
pub fn navigation_property_set() -> PropertySet {
    let close = Interval { lo: 0.0, hi: DEFAULT_EPSILON };
    let domain = InputBox::navigation_domain();
    let make = |ray: usize, action: usize, name: &str| {
        Property::new(domain.clone().with_dim(ray, close), action, Origin::HardCoded).named(name)
    };
    PropertySet::new(vec![
        make(RAY_FRONT, ACTION_FORWARD, "p_front"),
        make(RAY_LEFT, ACTION_LEFT, "p_left"),
        make(RAY_RIGHT, ACTION_RIGHT, "p_right"),
    ])
}

/// Indices of the properties whose pre-condition contains `s`.
pub fn active_indices(props: &PropertySet, s: &[f64]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, p) in props.iter().enumerate() {
        if p.pre.contains(s)? {
            out.push(i);
        }
    }
    Ok(out)
}

/// The properties whose pre-condition contains `s` (closed membership).
pub fn active_properties(props: &PropertySet, s: &[f64]) -> Result<PropertySet> {
    let idx = active_indices(props, s)?;
    Ok(PropertySet::new(idx.into_iter().map(|i| props.props[i].clone()).collect()))
}

/// `m` points drawn uniformly and independently per dimension.
pub fn sample_box<R: rand::Rng + ?Sized>(bx: &InputBox, m: usize, rng: &mut R) -> Matrix {
    let d = bx.dim();
    let mut data = Vec::with_capacity(m * d);
    for _ in 0..m {
        for iv in bx.dims() {
            let u: f64 = rng.random();
            // Exact at zero width, never above `hi`.
            data.push((iv.lo + u * (iv.hi - iv.lo)).min(iv.hi));
        }
    }
    Matrix::from_vec(m, d, data).expect("sized above")
}

/// Result of the Monte Carlo violation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationEstimate {
    pub value: f64,
    pub samples_per_property: usize,
    pub active_count: usize,
    pub violated_count: usize,
}

impl ViolationEstimate {
    pub fn empty(m: usize) -> Self {
        Self { value: 0.0, samples_per_property: m, active_count: 0, violated_count: 0 }
    }
}

/// Samples (of `m`) inside `prop.pre` on which `net` selects the forbidden action.
pub fn count_property_violations(net: &Mlp, prop: &Property, m: usize, rng: &mut Rng) -> Result<usize> {
    Error::check_dim(net.input_dim(), prop.pre.dim())?;
    let margin = MarginNet::new(net, prop.forbidden_action)?;
    let samples = sample_box(&prop.pre, m, rng);
    margin.count_selected(&samples)
}

/// Estimated violation of a single property over its whole pre-condition.
pub fn property_violation(net: &Mlp, prop: &Property, m: usize, rng: &mut Rng) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    Ok(count_property_violations(net, prop, m, rng)? as f64 / m as f64)
}

/// Approximate violation of `net` at state `s`.
///
/// Every active property gets its own generator seeded from `rng`, in set
/// order, so the result does not depend on how the per-property work is
/// scheduled.
pub fn approximate_violation(
    net: &Mlp,
    props: &PropertySet,
    s: &[f64],
    m: usize,
    rng: &mut Rng,
) -> Result<ViolationEstimate> {
    if m == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    Error::check_dim(net.input_dim(), s.len())?;
    let active = active_indices(props, s)?;
    if active.is_empty() {
        return Ok(ViolationEstimate::empty(m));
    }
    let mut violated = 0usize;
    for &i in &active {
        let mut sub = Rng::seed_from_u64(rng.random());
        violated += count_property_violations(net, &props.props[i], m, &mut sub)?;
    }
    Ok(ViolationEstimate {
        value: violated as f64 / (m * active.len()) as f64,
        samples_per_property: m,
        active_count: active.len(),
        violated_count: violated,
    })
}

/// Property forbidding `action` on the `epsilon`-box around `s`, clipped to `domain`.
pub fn generate_online_property(s: &[f64], action: usize, epsilon: f64, domain: &InputBox) -> Result<Property> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    Error::check_dim(domain.dim(), s.len())?;
    let dims = s
        .iter()
        .zip(domain.dims())
        .map(|(&v, d)| {
            if !v.is_finite() {
                return Err(Error::NonFinite("state".into()));
            }
            let lo = (v - epsilon).clamp(d.lo, d.hi);
            let hi = (v + epsilon).clamp(d.lo, d.hi);
            Interval::new(lo, hi)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Property::new(InputBox::new(dims), action, Origin::Online))
}

/// Append `new` unless an identical mapping is already present. Returns
/// whether the set grew.
pub fn merge_online(props: &mut PropertySet, new: Property) -> bool {
    if props.iter().any(|p| p.same_mapping(&new)) {
        return false;
    }
    props.push(new);
    true
}
