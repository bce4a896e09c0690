//! Consumer datasets that turn per-row attribution into global plots: sampled
//! PDP grids, threshold (full) grids, and the compressed joint dataset with its
//! per-pair clipping map.

use std::ops::Range;

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::TreeEnsemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Evenly spaced quantiles of the column (inclusive linear interpolation).
    Quantile,
    /// Evenly spaced points across `[min, max]`.
    Uniform,
    /// Split thresholds of the model (full PDP).
    Thresholds,
}

/// Sorted, deduplicated plotting values per feature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueGrid {
    pub values: Vec<Vec<f64>>,
    pub sampling: Sampling,
}

impl ValueGrid {
    fn from_raw(raw: &[Vec<f64>], sampling: Sampling) -> Self {
        let values = raw
            .iter()
            .map(|v| {
                let mut v = v.clone();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            })
            .collect();
        ValueGrid { values, sampling }
    }
}

/// Quantile at `q` in `[0, 1]` of an ascending slice, linear interpolation
/// between closest ranks (the inclusive definition).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty column");
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 || lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// `k` sampled values from one column, in sampling order (may repeat).
pub fn sample_column(column: &[f64], k: usize, sampling: Sampling) -> Vec<f64> {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    match sampling {
        Sampling::Quantile | Sampling::Thresholds => {
            if k == 1 {
                vec![quantile_sorted(&sorted, 0.5)]
            } else {
                (0..k)
                    .map(|t| quantile_sorted(&sorted, t as f64 / (k - 1) as f64))
                    .collect()
            }
        }
        Sampling::Uniform => {
            let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
            if k == 1 {
                vec![min + (max - min) / 2.0]
            } else {
                (0..k)
                    .map(|t| {
                        if t == k - 1 {
                            max
                        } else {
                            min + (max - min) * t as f64 / (k - 1) as f64
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Grid with `k` sampled values per column of `background`; row `t` of the
/// returned consumer set holds the `t`-th sample of every feature.
pub fn build_pdp_grid(
    background: &Dataset,
    k: usize,
    sampling: Sampling,
) -> Result<(ValueGrid, Dataset)> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if background.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot sample a grid from an empty dataset".into(),
        ));
    }
    if sampling == Sampling::Thresholds {
        return Err(Error::InvalidArgument(
            "threshold grids are built from the model; use build_full_pdp_grid".into(),
        ));
    }
    let raw: Vec<Vec<f64>> = background
        .columns()
        .iter()
        .map(|c| sample_column(c, k, sampling))
        .collect();
    let consumer = Dataset::from_columns(background.names().to_vec(), raw.clone())?;
    Ok((ValueGrid::from_raw(&raw, sampling), consumer))
}

/// Like [`build_pdp_grid`] but samples from each feature's split thresholds
/// instead of data. Features the model never splits on get the constant 0.
pub fn build_threshold_sampled_grid(
    ensemble: &TreeEnsemble,
    names: &[String],
    k: usize,
    sampling: Sampling,
) -> Result<(ValueGrid, Dataset)> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let thresholds = ensemble.thresholds();
    let sampling = match sampling {
        Sampling::Thresholds => Sampling::Quantile,
        s => s,
    };
    let raw: Vec<Vec<f64>> = (0..names.len())
        .map(|j| match thresholds.get(j) {
            Some(t) if !t.is_empty() => sample_column(t, k, sampling),
            _ => vec![0.0; k],
        })
        .collect();
    let consumer = Dataset::from_columns(names.to_vec(), raw.clone())?;
    Ok((ValueGrid::from_raw(&raw, sampling), consumer))
}

/// Threshold grid for full PDPs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullGrid {
    /// Evaluation points per feature: one point below the lowest threshold,
    /// every threshold, the midpoint of each gap, and one point above the
    /// highest threshold. Empty for features the model never splits on.
    pub grid: ValueGrid,
    /// Sorted distinct thresholds per feature (the step breakpoints).
    pub thresholds: Vec<Vec<f64>>,
}

/// Evaluation points that pin down a step function with the given breakpoints.
pub fn full_pdp_points(thresholds: &[f64]) -> Vec<f64> {
    let Some((&first, &last)) = thresholds.first().zip(thresholds.last()) else {
        return Vec::new();
    };
    let span = (last - first).max(first.abs()).max(last.abs()).max(1.0);
    let mut pts = Vec::with_capacity(2 * thresholds.len() + 1);
    let below = first - span;
    if below < first {
        pts.push(below);
    }
    for (i, &t) in thresholds.iter().enumerate() {
        pts.push(t);
        if let Some(&next) = thresholds.get(i + 1) {
            let mid = t + (next - t) / 2.0;
            if t < mid && mid < next {
                pts.push(mid);
            }
        }
    }
    let above = last + span;
    if above > last {
        pts.push(above);
    }
    pts
}

/// Full-PDP grid for the first `n_cols` features. The consumer set has as many
/// rows as the longest point list; shorter columns repeat their last point.
pub fn build_full_pdp_grid(
    ensemble: &TreeEnsemble,
    names: &[String],
) -> Result<(FullGrid, Dataset)> {
    let mut thresholds = ensemble.thresholds();
    thresholds.resize(names.len(), Vec::new());
    thresholds.truncate(names.len());
    let values: Vec<Vec<f64>> = thresholds.iter().map(|t| full_pdp_points(t)).collect();
    let rows = values.iter().map(Vec::len).max().unwrap_or(0);
    let columns = values
        .iter()
        .map(|v| {
            let fill = v.last().copied().unwrap_or(0.0);
            let mut c = v.clone();
            c.resize(rows, fill);
            c
        })
        .collect();
    let consumer = Dataset::from_columns(names.to_vec(), columns)?;
    Ok((
        FullGrid {
            grid: ValueGrid {
                values,
                sampling: Sampling::Thresholds,
            },
            thresholds,
        },
        consumer,
    ))
}

/// Binary representation of `i`, most significant bit first, zero-padded to
/// exactly `width` bits.
///
/// Panics if `i >= 2^width`.
pub fn bits(i: usize, width: usize) -> Vec<u8> {
    assert!(
        width >= usize::BITS as usize || i < (1usize << width),
        "bits: {i} does not fit in {width} bits"
    );
    (0..width)
        .rev()
        .map(|b| {
            if b >= usize::BITS as usize {
                0
            } else {
                ((i >> b) & 1) as u8
            }
        })
        .collect()
}

/// `ceil(log2(f))`, with `0` for `f <= 1`.
pub fn ceil_log2(f: usize) -> usize {
    if f <= 1 {
        0
    } else {
        (usize::BITS - (f - 1).leading_zeros()) as usize
    }
}

/// Location of every feature pair's value block in the joint dataset.
///
/// For a pair `(i, j)` with `i < j` the block starts at the first bit where the
/// binary codes of `i` and `j` differ; inside the block `i`'s column is tiled
/// and `j`'s column is repeated.
#[derive(Debug, Clone, PartialEq)]
pub struct JointClipMap {
    pub k: usize,
    pub n_features: usize,
    pub width: usize,
}

#[derive(Serialize)]
struct ClipEntry {
    a: usize,
    b: usize,
    start: usize,
    end: usize,
}

impl JointClipMap {
    pub fn new(k: usize, n_features: usize) -> Self {
        JointClipMap {
            k,
            n_features,
            width: ceil_log2(n_features),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.k * self.k * self.width
    }

    /// Index of the first differing bit of the two feature codes.
    pub fn block_index(&self, a: usize, b: usize) -> Option<usize> {
        if a == b || a >= self.n_features || b >= self.n_features {
            return None;
        }
        let ba = bits(a, self.width);
        let bb = bits(b, self.width);
        ba.iter().zip(&bb).position(|(x, y)| x != y)
    }

    pub fn block(&self, a: usize, b: usize) -> Option<Range<usize>> {
        let h = self.block_index(a, b)?;
        let kk = self.k * self.k;
        Some(h * kk..(h + 1) * kk)
    }

    /// Row holding `a = values_a[ia]` and `b = values_b[ib]`.
    pub fn cell_row(&self, a: usize, b: usize, ia: usize, ib: usize) -> Option<usize> {
        let start = self.block(a, b)?.start;
        // the lower feature index has bit 0 at the differing position: tiled
        let (tiled, repeated) = if a < b { (ia, ib) } else { (ib, ia) };
        Some(start + repeated * self.k + tiled)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let f = self.n_features;
        (0..f).flat_map(move |a| (a + 1..f).map(move |b| (a, b)))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<ClipEntry> = self
            .pairs()
            .filter_map(|(a, b)| {
                self.block(a, b).map(|r| ClipEntry {
                    a,
                    b,
                    start: r.start,
                    end: r.end,
                })
            })
            .collect();
        serde_json::json!({ "k": self.k, "width": self.width, "pairs": entries })
    }
}

/// Compressed joint-PDP consumer set: `k^2 * ceil(log2 f)` rows. For each bit
/// of a feature's code the corresponding `k^2`-row block of its column is the
/// grid column tiled `k` times (bit 0) or each value repeated `k` times (bit 1).
pub fn construct_joint_pdp_data(df: &Dataset) -> Result<(Dataset, JointClipMap)> {
    let k = df.n_rows();
    let f = df.n_cols();
    let map = JointClipMap::new(k, f);
    let columns = (0..f)
        .map(|i| {
            let col = df.column(i);
            let mut out = Vec::with_capacity(map.n_rows());
            for b in bits(i, map.width) {
                if b == 0 {
                    for _ in 0..k {
                        out.extend_from_slice(col);
                    }
                } else {
                    for &x in col {
                        out.extend(std::iter::repeat_n(x, k));
                    }
                }
            }
            out
        })
        .collect();
    let mut data = Dataset::from_columns(df.names().to_vec(), columns)?;
    if f == 0 {
        data = Dataset::empty(Vec::new());
    }
    Ok((data, map))
}
