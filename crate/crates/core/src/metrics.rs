//! Linear cube metrics. Each metric maps a unit-weight cube to a sparse map
//! from feature subsets to values; on a weighted formula the engine sums
//! `weight * metric(cube)` over cubes.
//!
//! Inside the engine cubes are bitmasks over a leaf's local condition indices,
//! so metrics are written against `(pos, neg)` masks and emit subset masks.

use std::collections::BTreeMap;

use serde::Serialize;
use smallvec::SmallVec;

/// Sorted, duplicate-free feature indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct SubsetKey(SmallVec<[u32; 4]>);

impl SubsetKey {
    pub fn empty() -> Self {
        SubsetKey(SmallVec::new())
    }

    /// Builds a key from arbitrary feature indices (sorted and deduplicated).
    pub fn new(features: impl IntoIterator<Item = usize>) -> Self {
        let mut v: SmallVec<[u32; 4]> = features.into_iter().map(|f| f as u32).collect();
        v.sort_unstable();
        v.dedup();
        SubsetKey(v)
    }

    /// Features of the conditions selected by `mask`; `features[i]` is the
    /// feature of condition `i`.
    pub fn from_mask(mask: u32, features: &[usize]) -> Self {
        let mut v: SmallVec<[u32; 4]> = SmallVec::new();
        let mut m = mask;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            v.push(features[i] as u32);
            m &= m - 1;
        }
        v.sort_unstable();
        SubsetKey(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn features(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().map(|&f| f as usize)
    }

    pub fn contains(&self, f: usize) -> bool {
        self.0.binary_search(&(f as u32)).is_ok()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

/// Sparse `{feature subset -> value}` map.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SubsetValueMap {
    pub entries: BTreeMap<SubsetKey, f64>,
}

impl SubsetValueMap {
    pub fn get(&self, key: &SubsetKey) -> f64 {
        self.entries.get(key).copied().unwrap_or(0.0)
    }

    pub fn add(&mut self, key: SubsetKey, v: f64) {
        *self.entries.entry(key).or_insert(0.0) += v;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Conjunction of positive literals `s_plus` and negative literals `s_minus`
/// over feature-participation variables, with a real weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cube {
    #[serde(rename = "pos")]
    pub s_plus: Vec<usize>,
    #[serde(rename = "neg")]
    pub s_minus: Vec<usize>,
    #[serde(rename = "w")]
    pub weight: f64,
}

impl Cube {
    pub fn new(s_plus: Vec<usize>, s_minus: Vec<usize>, weight: f64) -> Self {
        Cube {
            s_plus,
            s_minus,
            weight,
        }
    }

    pub fn is_satisfiable(&self) -> bool {
        !self.s_plus.iter().any(|f| self.s_minus.contains(f))
    }

    /// Value of the weighted cube when exactly the variables in `ones` are 1.
    pub fn eval(&self, ones: &[usize]) -> f64 {
        let sat = self.s_plus.iter().all(|f| ones.contains(f))
            && !self.s_minus.iter().any(|f| ones.contains(f));
        if sat {
            self.weight
        } else {
            0.0
        }
    }
}

/// A metric that is linear over WDNF formulas.
pub trait CubeMetric: Sync {
    /// Cubes with more positive literals than this contribute nothing.
    /// `None` means no cap.
    fn max_positive_arity(&self) -> Option<u32>;

    /// Calls `emit(subset_mask, value)` for every subset the unit cube with
    /// positive mask `pos` and negative mask `neg` affects.
    fn for_each<F: FnMut(u32, f64)>(&self, pos: u32, neg: u32, emit: F);
}

/// Centered partial dependence: `F({f} = 1, rest 0) - F(all 0)` per feature.
#[derive(Debug, Clone, Copy, Default)]
pub struct CpdvMetric;

/// All partial dependence interaction values, any order.
#[derive(Debug, Clone, Copy, Default)]
pub struct PdivMetric;

/// Partial dependence interaction values of order one and two.
#[derive(Debug, Clone, Copy, Default)]
pub struct PdivOrderLe2Metric;

impl CubeMetric for CpdvMetric {
    fn max_positive_arity(&self) -> Option<u32> {
        Some(1)
    }

    fn for_each<F: FnMut(u32, f64)>(&self, pos: u32, neg: u32, mut emit: F) {
        if pos == 0 {
            let mut m = neg;
            while m != 0 {
                let low = m & m.wrapping_neg();
                emit(low, -1.0);
                m &= m - 1;
            }
        } else if pos.count_ones() == 1 && pos & neg == 0 {
            emit(pos, 1.0);
        }
    }
}

impl CubeMetric for PdivMetric {
    fn max_positive_arity(&self) -> Option<u32> {
        None
    }

    fn for_each<F: FnMut(u32, f64)>(&self, pos: u32, neg: u32, mut emit: F) {
        if pos & neg != 0 {
            return;
        }
        // every X with pos ⊆ X ⊆ pos ∪ neg; sign (-1)^{|X \ pos|}
        let mut sub = neg;
        loop {
            let sign = if sub.count_ones().is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            emit(pos | sub, sign);
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & neg;
        }
    }
}

impl CubeMetric for PdivOrderLe2Metric {
    fn max_positive_arity(&self) -> Option<u32> {
        Some(2)
    }

    fn for_each<F: FnMut(u32, f64)>(&self, pos: u32, neg: u32, mut emit: F) {
        if pos & neg != 0 {
            return;
        }
        let p = pos.count_ones();
        match p {
            0 => {
                let mut a = neg;
                while a != 0 {
                    let ba = a & a.wrapping_neg();
                    a &= a - 1;
                    emit(ba, -1.0);
                    let mut b = a;
                    while b != 0 {
                        let bb = b & b.wrapping_neg();
                        b &= b - 1;
                        emit(ba | bb, 1.0);
                    }
                }
            }
            1 => {
                emit(pos, 1.0);
                let mut a = neg;
                while a != 0 {
                    let ba = a & a.wrapping_neg();
                    a &= a - 1;
                    emit(pos | ba, -1.0);
                }
            }
            2 => emit(pos, 1.0),
            _ => {}
        }
    }
}

/// Applies a mask-level metric to a feature-level cube.
pub fn apply_metric<M: CubeMetric>(metric: &M, cube: &Cube) -> SubsetValueMap {
    let mut features: Vec<usize> = cube.s_plus.iter().chain(&cube.s_minus).copied().collect();
    features.sort_unstable();
    features.dedup();
    assert!(features.len() <= 32, "cube has more than 32 variables");
    let mask_of = |fs: &[usize]| {
        fs.iter().fold(0u32, |m, f| {
            m | 1 << features.binary_search(f).expect("feature present")
        })
    };
    let pos = mask_of(&cube.s_plus);
    let neg = mask_of(&cube.s_minus);
    let mut out = SubsetValueMap::default();
    if let Some(cap) = metric.max_positive_arity() {
        if pos.count_ones() > cap {
            return out;
        }
    }
    metric.for_each(pos, neg, |x, v| {
        out.add(SubsetKey::from_mask(x, &features), cube.weight * v)
    });
    out
}

pub fn cpdv_metric(cube: &Cube) -> SubsetValueMap {
    apply_metric(&CpdvMetric, cube)
}

pub fn pdiv_metric(cube: &Cube) -> SubsetValueMap {
    apply_metric(&PdivMetric, cube)
}

pub fn pdiv_order_le2_metric(cube: &Cube) -> SubsetValueMap {
    apply_metric(&PdivOrderLe2Metric, cube)
}
