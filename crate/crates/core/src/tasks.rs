//! End-to-end pipelines: PDPs (sampled and full), joint PDPs and any-order
//! interaction values.

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grids::{
    build_full_pdp_grid, build_pdp_grid, build_threshold_sampled_grid, construct_joint_pdp_data,
    Sampling,
};
use crate::metrics::{CpdvMetric, PdivMetric, PdivOrderLe2Metric, SubsetKey, SubsetValueMap};
use crate::model::TreeEnsemble;
use crate::wdnf::{Engine, EngineOptions, Marginal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Approximate,
}

impl Mode {
    pub fn of(marginal: &Marginal<'_>) -> Mode {
        if marginal.is_exact() {
            Mode::Exact
        } else {
            Mode::Approximate
        }
    }
}

/// Arithmetic mean of the model's predictions over `background`.
pub fn mean_prediction(model: &TreeEnsemble, background: &Dataset) -> Result<f64> {
    if background.is_empty() {
        return Err(Error::InvalidArgument(
            "mean prediction of an empty dataset".into(),
        ));
    }
    let mut sum = 0.0;
    for row in background.rows() {
        sum += model.predict(&row)?;
    }
    Ok(sum / background.n_rows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdpPoint {
    pub value: f64,
    pub pdv: f64,
    pub cpdv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureCurve {
    pub feature: usize,
    pub name: String,
    /// Ascending in `value`.
    pub points: Vec<PdpPoint>,
    /// Step breakpoints (split thresholds); empty for sampled grids.
    pub breakpoints: Vec<f64>,
}

impl FeatureCurve {
    /// Value of the curve read as a right-continuous step function: the PDV at
    /// the largest grid point not above `x`.
    pub fn step_value(&self, x: f64) -> Option<f64> {
        let first = self.points.first()?;
        let idx = self.points.partition_point(|p| p.value <= x);
        Some(if idx == 0 {
            first.pdv
        } else {
            self.points[idx - 1].pdv
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PDPResult {
    pub features: Vec<FeatureCurve>,
    pub mode: Mode,
    pub mean_prediction: f64,
}

/// Mean prediction in exact mode, the cover-weighted expectation otherwise.
pub fn baseline(engine: &Engine<'_>, marginal: &Marginal<'_>) -> Result<f64> {
    engine.expected_prediction(marginal)
}

fn feature_names(model: &TreeEnsemble, marginal: &Marginal<'_>) -> Vec<String> {
    match marginal {
        Marginal::Background(b) => b.names().to_vec(),
        Marginal::PathDependent => model.feature_names().to_vec(),
    }
}

/// PDP on an explicit consumer grid: row `t` of `grid` holds one value per
/// feature. Repeated consecutive values in a column collapse to one point.
pub fn wpdp_on_grid(
    model: &TreeEnsemble,
    marginal: &Marginal<'_>,
    grid: &Dataset,
    opts: &EngineOptions,
) -> Result<PDPResult> {
    let engine = Engine::new(model, *opts)?;
    let mean = baseline(&engine, marginal)?;
    let cpdv = engine.run(marginal, grid, &CpdvMetric)?;
    let features = (0..grid.n_cols())
        .map(|j| {
            let key = SubsetKey::new([j]);
            let mut points: Vec<PdpPoint> = Vec::new();
            for (t, &value) in grid.column(j).iter().enumerate() {
                if points.last().is_some_and(|p| p.value == value) {
                    continue;
                }
                let c = cpdv[t].get(&key);
                points.push(PdpPoint {
                    value,
                    pdv: c + mean,
                    cpdv: c,
                });
            }
            points.sort_by(|a, b| a.value.total_cmp(&b.value));
            points.dedup_by(|a, b| a.value == b.value);
            FeatureCurve {
                feature: j,
                name: grid.names()[j].clone(),
                points,
                breakpoints: Vec::new(),
            }
        })
        .collect();
    Ok(PDPResult {
        features,
        mode: Mode::of(marginal),
        mean_prediction: mean,
    })
}

/// The `k`-value grid: sampled from the background in exact mode, from the
/// model's split thresholds in approximate mode (which never reads data).
pub fn sampled_grid(
    model: &TreeEnsemble,
    marginal: &Marginal<'_>,
    k: usize,
    sampling: Sampling,
) -> Result<Dataset> {
    match marginal {
        Marginal::Background(b) => Ok(build_pdp_grid(b, k, sampling)?.1),
        Marginal::PathDependent => {
            Ok(build_threshold_sampled_grid(model, model.feature_names(), k, sampling)?.1)
        }
    }
}

/// Partial dependence curves of every feature on a `k`-value grid.
pub fn wpdp(
    model: &TreeEnsemble,
    marginal: &Marginal<'_>,
    k: usize,
    sampling: Sampling,
    opts: &EngineOptions,
) -> Result<PDPResult> {
    let grid = sampled_grid(model, marginal, k, sampling)?;
    wpdp_on_grid(model, marginal, &grid, opts)
}

/// Partial dependence evaluated at every split threshold, between thresholds
/// and beyond both ends, so the curve read as a step function is exact.
/// Features the model never splits on get an empty curve.
pub fn full_pdp(
    model: &TreeEnsemble,
    marginal: &Marginal<'_>,
    opts: &EngineOptions,
) -> Result<PDPResult> {
    let names = feature_names(model, marginal);
    let (full, grid) = build_full_pdp_grid(model, &names)?;
    let mut result = if grid.is_empty() {
        let engine = Engine::new(model, *opts)?;
        PDPResult {
            features: Vec::new(),
            mode: Mode::of(marginal),
            mean_prediction: baseline(&engine, marginal)?,
        }
    } else {
        wpdp_on_grid(model, marginal, &grid, opts)?
    };
    if grid.is_empty() {
        result.features = names
            .iter()
            .enumerate()
            .map(|(j, n)| FeatureCurve {
                feature: j,
                name: n.clone(),
                points: Vec::new(),
                breakpoints: Vec::new(),
            })
            .collect();
    }
    for (curve, (values, thresholds)) in result
        .features
        .iter_mut()
        .zip(full.grid.values.iter().zip(full.thresholds))
    {
        if values.is_empty() {
            curve.points.clear();
        }
        curve.breakpoints = thresholds;
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMatrix {
    pub a: usize,
    pub b: usize,
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    /// `pdv[ia][ib]` at `a = a_values[ia]`, `b = b_values[ib]`.
    pub pdv: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointPDPResult {
    pub names: Vec<String>,
    pub pairs: Vec<PairMatrix>,
    pub mode: Mode,
    pub mean_prediction: f64,
}

/// Joint partial dependence of feature pairs on a `k x k` grid. `pairs`
/// selects the pairs to return (all unordered pairs when `None`).
pub fn wjointpdp(
    model: &TreeEnsemble,
    marginal: &Marginal<'_>,
    k: usize,
    sampling: Sampling,
    pairs: Option<&[(usize, usize)]>,
    opts: &EngineOptions,
) -> Result<JointPDPResult> {
    let grid = sampled_grid(model, marginal, k, sampling)?;
    wjointpdp_on_grid(model, marginal, &grid, pairs, opts)
}

pub fn wjointpdp_on_grid(
    model: &TreeEnsemble,
    marginal: &Marginal<'_>,
    grid: &Dataset,
    pairs: Option<&[(usize, usize)]>,
    opts: &EngineOptions,
) -> Result<JointPDPResult> {
    let f = grid.n_cols();
    if f < 2 {
        return Err(Error::InvalidArgument(
            "joint PDPs need at least two features".into(),
        ));
    }
    let k = grid.n_rows();
    let engine = Engine::new(model, *opts)?;
    let mean = baseline(&engine, marginal)?;
    let (joint, clip) = construct_joint_pdp_data(grid)?;
    let pdivs = engine.run(marginal, &joint, &PdivOrderLe2Metric)?;
    let selected: Vec<(usize, usize)> = match pairs {
        Some(p) => p
            .iter()
            .map(|&(a, b)| {
                if a == b || a >= f || b >= f {
                    Err(Error::InvalidArgument(format!(
                        "invalid feature pair ({a}, {b})"
                    )))
                } else {
                    Ok((a.min(b), a.max(b)))
                }
            })
            .collect::<Result<_>>()?,
        None => clip.pairs().collect(),
    };
    let mut out = Vec::with_capacity(selected.len());
    for (a, b) in selected {
        let (ka, kb, kab) = (
            SubsetKey::new([a]),
            SubsetKey::new([b]),
            SubsetKey::new([a, b]),
        );
        let mut pdv = vec![vec![0.0; k]; k];
        for (ia, row) in pdv.iter_mut().enumerate() {
            for (ib, cell) in row.iter_mut().enumerate() {
                let r = clip
                    .cell_row(a, b, ia, ib)
                    .expect("pair block inside the joint dataset");
                let m = &pdivs[r];
                *cell = m.get(&kab) + m.get(&ka) + m.get(&kb) + mean;
            }
        }
        out.push(PairMatrix {
            a,
            b,
            a_values: grid.column(a).to_vec(),
            b_values: grid.column(b).to_vec(),
            pdv,
        });
    }
    Ok(JointPDPResult {
        names: grid.names().to_vec(),
        pairs: out,
        mode: Mode::of(marginal),
        mean_prediction: mean,
    })
}

pub const DEFAULT_ROW_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionResult {
    /// One sparse map per scored consumer row; exact zeros are omitted.
    pub rows: Vec<SubsetValueMap>,
    pub mode: Mode,
    pub background_rows: usize,
    pub model_hash: String,
    /// Consumer rows present before `row_limit` was applied.
    pub input_rows: usize,
}

fn consumers_for(consumers: &Dataset, row_limit: usize) -> Result<Dataset> {
    if consumers.is_empty() {
        return Err(Error::InvalidArgument("consumer dataset is empty".into()));
    }
    if row_limit == 0 {
        return Err(Error::InvalidArgument(
            "row limit must be at least 1".into(),
        ));
    }
    Ok(consumers.head(row_limit))
}

/// All non-zero partial dependence interaction values of every consumer row,
/// for every feature subset. An absent or empty background selects the
/// path-dependent approximation. Only the first `row_limit` rows are scored.
pub fn any_order_pdivs(
    model: &TreeEnsemble,
    consumers: &Dataset,
    background: Option<&Dataset>,
    row_limit: usize,
    opts: &EngineOptions,
) -> Result<AttributionResult> {
    let c = consumers_for(consumers, row_limit)?;
    let marginal = Marginal::from_background(background);
    let engine = Engine::new(model, *opts)?;
    let mut rows = engine.run(&marginal, &c, &PdivMetric)?;
    for r in &mut rows {
        r.entries.retain(|_, v| *v != 0.0);
    }
    Ok(AttributionResult {
        rows,
        mode: Mode::of(&marginal),
        background_rows: background.map_or(0, Dataset::n_rows),
        model_hash: model.fingerprint(),
        input_rows: consumers.n_rows(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateAttribution {
    /// Mean value of every subset over the scored rows; exact zeros omitted.
    pub means: SubsetValueMap,
    pub rows: usize,
    pub mode: Mode,
    pub background_rows: usize,
    pub model_hash: String,
}

/// Per-subset means of [`any_order_pdivs`] without keeping per-row maps.
pub fn any_order_pdivs_aggregate(
    model: &TreeEnsemble,
    consumers: &Dataset,
    background: Option<&Dataset>,
    row_limit: usize,
    opts: &EngineOptions,
) -> Result<AggregateAttribution> {
    let c = consumers_for(consumers, row_limit)?;
    let marginal = Marginal::from_background(background);
    let engine = Engine::new(model, *opts)?;
    let mut means = engine.run_sum(&marginal, &c, &PdivMetric)?;
    let n = c.n_rows() as f64;
    means.entries.retain(|_, v| *v != 0.0);
    for v in means.entries.values_mut() {
        *v /= n;
    }
    Ok(AggregateAttribution {
        means,
        rows: c.n_rows(),
        mode: Mode::of(&marginal),
        background_rows: background.map_or(0, Dataset::n_rows),
        model_hash: model.fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NodeSpec, Tree};

    fn toy() -> TreeEnsemble {
        let t = Tree::from_spec(&NodeSpec::split(
            0,
            0.5,
            NodeSpec::leaf(0.0),
            NodeSpec::leaf(1.0),
        ));
        TreeEnsemble::with_num_features(vec![t], 0.0, 1).unwrap()
    }

    fn col(v: &[f64]) -> Dataset {
        Dataset::from_columns(vec!["f0".into()], vec![v.to_vec()]).unwrap()
    }

    #[test]
    fn toy_pdp() {
        let b = col(&[0.0, 1.0]);
        let r = wpdp(
            &toy(),
            &Marginal::Background(&b),
            2,
            Sampling::Uniform,
            &EngineOptions::default(),
        )
        .unwrap();
        assert_eq!(r.mean_prediction, 0.5);
        let pts = &r.features[0].points;
        assert_eq!(
            pts,
            &vec![
                PdpPoint {
                    value: 0.0,
                    pdv: 0.0,
                    cpdv: -0.5
                },
                PdpPoint {
                    value: 1.0,
                    pdv: 1.0,
                    cpdv: 0.5
                }
            ]
        );
    }

    #[test]
    fn constant_model() {
        let m =
            TreeEnsemble::with_num_features(vec![Tree::from_spec(&NodeSpec::leaf(7.0))], 0.0, 1)
                .unwrap();
        let b = col(&[1.0, 2.0, 3.0]);
        assert_eq!(mean_prediction(&m, &b).unwrap(), 7.0);
        let r = wpdp(
            &m,
            &Marginal::Background(&b),
            3,
            Sampling::Quantile,
            &EngineOptions::default(),
        )
        .unwrap();
        for p in &r.features[0].points {
            assert_eq!((p.pdv, p.cpdv), (7.0, 0.0));
        }
    }

    #[test]
    fn empty_background_mean_is_an_error() {
        assert!(mean_prediction(&toy(), &col(&[])).is_err());
    }

    #[test]
    fn k_zero_rejected() {
        let b = col(&[0.0]);
        assert!(wpdp(
            &toy(),
            &Marginal::Background(&b),
            0,
            Sampling::Quantile,
            &EngineOptions::default()
        )
        .is_err());
    }

    #[test]
    fn toy_full_pdp_has_two_levels() {
        let b = col(&[0.0, 1.0]);
        let r = full_pdp(&toy(), &Marginal::Background(&b), &EngineOptions::default()).unwrap();
        let c = &r.features[0];
        assert_eq!(c.breakpoints, vec![0.5]);
        let mut levels: Vec<f64> = c.points.iter().map(|p| p.pdv).collect();
        levels.dedup();
        assert_eq!(levels, vec![0.0, 1.0]);
        assert_eq!(c.step_value(0.49), Some(0.0));
        assert_eq!(c.step_value(0.5), Some(1.0));
    }

    #[test]
    fn single_feature_joint_is_rejected() {
        let b = col(&[0.0, 1.0]);
        assert!(wjointpdp(
            &toy(),
            &Marginal::Background(&b),
            2,
            Sampling::Uniform,
            None,
            &EngineOptions::default()
        )
        .is_err());
    }

    #[test]
    fn single_feature_pdivs_only_touch_empty_and_singleton() {
        let b = col(&[0.0, 1.0, 0.3]);
        let r = any_order_pdivs(
            &toy(),
            &b,
            Some(&b),
            DEFAULT_ROW_LIMIT,
            &EngineOptions::default(),
        )
        .unwrap();
        for row in &r.rows {
            for k in row.entries.keys() {
                assert!(k.len() <= 1);
            }
        }
        assert_eq!(r.rows[0].get(&SubsetKey::empty()), 1.0 / 3.0);
    }

    #[test]
    fn row_limit_truncates() {
        let b = col(&[0.0, 1.0, 0.3]);
        let r = any_order_pdivs(&toy(), &b, Some(&b), 2, &EngineOptions::default()).unwrap();
        assert_eq!((r.rows.len(), r.input_rows), (2, 3));
    }
}
