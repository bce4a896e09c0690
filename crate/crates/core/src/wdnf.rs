//! Weighted-DNF compilation of a tree ensemble and evaluation of linear cube
//! metrics over consumer rows.
//!
//! For a leaf with `d` merged conditions, a consumer `c` and a background row
//! `b`, the averaged game
//!
//! ```text
//! (1/|B|) Σ_b  leaf · Π_i [ x_i·1{c ⊨ cond_i} + (1 − x_i)·1{b ⊨ cond_i} ]
//! ```
//!
//! expands, for each (c, b), into a single cube: conditions both rows satisfy
//! drop out, conditions only `c` satisfies become positive literals, and
//! conditions only `b` satisfies become negative literals. Grouping by the
//! consumer's condition mask `m` gives, for every `P ⊆ m`, the cube
//! `(S⁺ = P, S⁻ = ¬m)` with weight `leaf · Pr_b[mask(b) = ¬P]`. Those exact
//! pattern probabilities are the Möbius inverse of the coverage table (the
//! superset sums of the background mask histogram). In path-dependent mode
//! the background is replaced by independent per-condition cover ratios.
//!
//! Metric tables are built once per leaf, indexed by consumer mask, and each
//! consumer row then adds `table[mask]` for every leaf it is scored against.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{Cube, CubeMetric, SubsetKey, SubsetValueMap};
use crate::model::{trace_tree, LeafPath, Route, TreeEnsemble};

/// Default limit on merged conditions per path.
pub const DEFAULT_MASK_CAPACITY: usize = 30;
/// Hard limit imposed by the `u32` mask representation.
pub const MAX_MASK_CAPACITY: usize = 31;

const ROW_CHUNK: usize = 2048;

/// How features outside a coalition are filled in.
#[derive(Debug, Clone, Copy)]
pub enum Marginal<'a> {
    /// Average over the rows of a background dataset (exact).
    Background(&'a Dataset),
    /// Per-node training-cover ratios (approximate; no data is read).
    PathDependent,
}

impl<'a> Marginal<'a> {
    /// An absent or empty background selects the path-dependent mode.
    pub fn from_background(b: Option<&'a Dataset>) -> Self {
        match b {
            Some(d) if !d.is_empty() => Marginal::Background(d),
            _ => Marginal::PathDependent,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Marginal::Background(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineOptions {
    pub mask_capacity: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            mask_capacity: DEFAULT_MASK_CAPACITY,
        }
    }
}

/// A compiled leaf: its path, the coverage table and the exact-pattern
/// probabilities that weight its cubes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeafCompilation {
    pub tree: usize,
    pub path: LeafPath,
    pub d: usize,
    /// `coverage[m]`: fraction of background rows satisfying every condition in `m`.
    pub coverage: Vec<f64>,
    /// `pattern[m]`: fraction of background rows whose satisfied set is exactly `m`.
    pub pattern: Vec<f64>,
    /// Per-condition cover ratios (path-dependent mode only).
    pub pd_weights: Option<Vec<f64>>,
}

fn full_mask(d: usize) -> u32 {
    if d == 0 {
        0
    } else {
        u32::MAX >> (32 - d)
    }
}

fn check_capacity(tree: usize, path: &LeafPath, capacity: usize) -> Result<()> {
    let capacity = capacity.min(MAX_MASK_CAPACITY);
    if path.conditions.len() > capacity {
        return Err(Error::Capacity {
            tree,
            leaf: path.leaf_id,
            conditions: path.conditions.len(),
            capacity,
        });
    }
    Ok(())
}

/// In-place superset-sum transform: `a[m] <- Σ_{s ⊇ m} a[s]`.
pub fn superset_sum<T: Copy + std::ops::AddAssign>(a: &mut [T]) {
    let n = a.len();
    debug_assert!(n.is_power_of_two());
    let mut bit = 1;
    while bit < n {
        for m in 0..n {
            if m & bit == 0 {
                let hi = a[m | bit];
                a[m] += hi;
            }
        }
        bit <<= 1;
    }
}

impl LeafCompilation {
    fn from_counts(tree: usize, path: LeafPath, counts: &[u64], n: usize) -> Self {
        let d = path.conditions.len();
        let inv = 1.0 / n as f64;
        let pattern = counts.iter().map(|&c| c as f64 * inv).collect();
        let mut sup = counts.to_vec();
        superset_sum(&mut sup);
        let coverage = sup.iter().map(|&c| c as f64 * inv).collect();
        LeafCompilation {
            tree,
            path,
            d,
            coverage,
            pattern,
            pd_weights: None,
        }
    }

    fn from_pd_weights(tree: usize, path: LeafPath, w: Vec<f64>) -> Self {
        let d = w.len();
        let size = 1usize << d;
        let mut coverage = vec![1.0; size];
        let mut pattern = vec![1.0; size];
        for m in 0..size {
            for (i, wi) in w.iter().enumerate() {
                if m >> i & 1 == 1 {
                    coverage[m] *= wi;
                    pattern[m] *= wi;
                } else {
                    pattern[m] *= 1.0 - wi;
                }
            }
        }
        LeafCompilation {
            tree,
            path,
            d,
            coverage,
            pattern,
            pd_weights: Some(w),
        }
    }

    pub fn full_mask(&self) -> u32 {
        full_mask(self.d)
    }

    /// Feature of each local condition bit.
    pub fn features(&self) -> Vec<usize> {
        self.path.features().collect()
    }

    /// Expected leaf contribution with every feature missing: `F(0, ..., 0)`.
    pub fn expected_value(&self) -> f64 {
        self.path.leaf_value * self.coverage[self.full_mask() as usize]
    }
}

/// Compiles one leaf against a background dataset by direct condition checks.
pub fn compile_leaf_background(
    tree: usize,
    leaf: &LeafPath,
    background: &Dataset,
    opts: &EngineOptions,
) -> Result<LeafCompilation> {
    check_capacity(tree, leaf, opts.mask_capacity)?;
    if background.is_empty() {
        return Err(Error::InvalidArgument(
            "background mode requires at least one background row".into(),
        ));
    }
    let d = leaf.conditions.len();
    let mut counts = vec![0u64; 1 << d];
    for (i, cond) in leaf.conditions.iter().enumerate() {
        if cond.feature >= background.n_cols() {
            return Err(Error::Input(format!(
                "background has no column for feature {}",
                cond.feature
            )));
        }
        let _ = i;
    }
    for r in 0..background.n_rows() {
        let mut mask = 0u32;
        for (i, cond) in leaf.conditions.iter().enumerate() {
            if cond.contains(background.column(cond.feature)[r]) {
                mask |= 1 << i;
            }
        }
        counts[mask as usize] += 1;
    }
    Ok(LeafCompilation::from_counts(
        tree,
        leaf.clone(),
        &counts,
        background.n_rows(),
    ))
}

/// Compiles one leaf in path-dependent mode from the node covers on its path.
pub fn compile_leaf_pathdep(
    tree: usize,
    leaf: &LeafPath,
    opts: &EngineOptions,
) -> Result<LeafCompilation> {
    check_capacity(tree, leaf, opts.mask_capacity)?;
    let mut w = vec![1.0; leaf.conditions.len()];
    for step in &leaf.steps {
        let degenerate = |message: &str| Error::DegenerateModel {
            tree,
            node: step.node_id,
            message: message.to_string(),
        };
        let (Some(parent), Some(child)) = (step.node_cover, step.child_cover) else {
            return Err(degenerate("path-dependent mode needs node covers"));
        };
        if parent <= 0.0 {
            return Err(degenerate("zero parent cover"));
        }
        let ratio = child / parent;
        if ratio > 1.0 + 1e-9 {
            return Err(degenerate("child cover exceeds parent cover"));
        }
        w[step.condition] *= ratio.min(1.0);
    }
    Ok(LeafCompilation::from_pd_weights(tree, leaf.clone(), w))
}

/// A cube of one leaf in local condition bits. It applies to consumers whose
/// condition mask equals `¬neg`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafCube {
    pub pos: u32,
    pub neg: u32,
    pub weight: f64,
}

impl LeafCube {
    pub fn consumer_mask(&self, d: usize) -> u32 {
        full_mask(d) ^ self.neg
    }

    pub fn to_cube(&self, features: &[usize]) -> Cube {
        let pick = |m: u32| -> Vec<usize> {
            let mut v: Vec<usize> = (0..features.len())
                .filter(|i| m >> i & 1 == 1)
                .map(|i| features[i])
                .collect();
            v.sort_unstable();
            v
        };
        Cube::new(pick(self.pos), pick(self.neg), self.weight)
    }
}

/// Calls `f` on every submask of `m` with at most `cap` bits.
fn for_each_submask_upto(m: u32, cap: Option<u32>, mut f: impl FnMut(u32)) {
    match cap {
        Some(c) if c < m.count_ones() => {
            fn choose(rest: u32, acc: u32, left: u32, f: &mut impl FnMut(u32)) {
                f(acc);
                if left == 0 {
                    return;
                }
                let mut r = rest;
                while r != 0 {
                    let low = r & r.wrapping_neg();
                    r &= r - 1;
                    choose(r, acc | low, left - 1, f);
                }
            }
            choose(m, 0, c, &mut f);
        }
        _ => {
            let mut sub = m;
            loop {
                f(sub);
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & m;
            }
        }
    }
}

/// All cubes of a compiled leaf with at most `max_positive_arity` positive
/// literals, grouped by consumer mask. Without a cap there are `3^d`.
pub fn enumerate_cubes(comp: &LeafCompilation, max_positive_arity: Option<u32>) -> Vec<LeafCube> {
    let full = comp.full_mask();
    let mut out = Vec::new();
    for m in 0..=full {
        for_each_submask_upto(m, max_positive_arity, |p| {
            out.push(LeafCube {
                pos: p,
                neg: full ^ m,
                weight: comp.path.leaf_value * comp.pattern[(full ^ p) as usize],
            })
        });
    }
    out
}

/// Per-consumer-mask aggregate of a metric over one leaf's cubes.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub d: usize,
    offsets: Vec<u32>,
    /// `(local subset mask, value)`, sorted by subset within each consumer mask.
    entries: Vec<(u32, f64)>,
}

impl MetricTable {
    pub fn get(&self, consumer_mask: u32) -> &[(u32, f64)] {
        let m = consumer_mask as usize;
        &self.entries[self.offsets[m] as usize..self.offsets[m + 1] as usize]
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    /// `table[mask]` translated to feature subsets.
    pub fn get_map(&self, consumer_mask: u32, features: &[usize]) -> SubsetValueMap {
        let mut out = SubsetValueMap::default();
        for &(x, v) in self.get(consumer_mask) {
            out.add(SubsetKey::from_mask(x, features), v);
        }
        out
    }
}

/// Builds the consumer-mask-indexed table of `metric` for one leaf.
pub fn evaluate_metric<M: CubeMetric>(comp: &LeafCompilation, metric: &M) -> Result<MetricTable> {
    let full = comp.full_mask();
    let size = 1usize << comp.d;
    let cap = metric.max_positive_arity();
    let leaf = comp.path.leaf_value;
    let mut scratch = vec![0.0f64; size];
    let mut touched_flag = vec![false; size];
    let mut touched: Vec<u32> = Vec::new();
    let mut offsets = Vec::with_capacity(size + 1);
    let mut entries = Vec::new();
    offsets.push(0u32);
    for m in 0..=full {
        let neg = full ^ m;
        for_each_submask_upto(m, cap, |p| {
            let w = leaf * comp.pattern[(full ^ p) as usize];
            if w == 0.0 {
                return;
            }
            metric.for_each(p, neg, |x, v| {
                let xi = x as usize;
                if !touched_flag[xi] {
                    touched_flag[xi] = true;
                    touched.push(x);
                }
                scratch[xi] += w * v;
            });
        });
        touched.sort_unstable();
        for &x in &touched {
            let v = scratch[x as usize];
            if !v.is_finite() {
                return Err(Error::Numeric {
                    tree: comp.tree,
                    leaf: comp.path.leaf_id,
                    mask: m,
                });
            }
            if v != 0.0 {
                entries.push((x, v));
            }
            scratch[x as usize] = 0.0;
            touched_flag[x as usize] = false;
        }
        touched.clear();
        offsets.push(u32::try_from(entries.len()).expect("metric table too large"));
    }
    Ok(MetricTable {
        d: comp.d,
        offsets,
        entries,
    })
}

/// Scores consumers against compiled leaves one row and one leaf at a time.
/// This is the direct form of [`Engine::run`], used to cross-check it.
pub fn aggregate_consumers(
    leaves: &[(LeafCompilation, MetricTable)],
    consumers: &Dataset,
) -> Result<Vec<SubsetValueMap>> {
    let mut out = vec![SubsetValueMap::default(); consumers.n_rows()];
    for (comp, _) in leaves {
        if let Some(c) = comp
            .path
            .conditions
            .iter()
            .find(|c| c.feature >= consumers.n_cols())
        {
            return Err(Error::Input(format!(
                "consumer data has no column for feature {}",
                c.feature
            )));
        }
    }
    for (r, acc) in out.iter_mut().enumerate() {
        let row = consumers.row(r);
        for (comp, table) in leaves {
            let features = comp.features();
            let m = comp.path.mask_of(&row);
            for &(x, v) in table.get(m) {
                acc.add(SubsetKey::from_mask(x, &features), v);
            }
        }
    }
    Ok(out)
}

struct TracedTree {
    paths: Vec<LeafPath>,
    routes: Vec<Option<Route>>,
    depth: usize,
}

/// Reusable compiled view of an ensemble.
pub struct Engine<'m> {
    model: &'m TreeEnsemble,
    trees: Vec<TracedTree>,
    opts: EngineOptions,
}

/// Row-batched tree walk: calls `on_leaf(path, masks)` for every reachable
/// leaf, where `masks[r]` is the condition mask of row `start + r`.
fn walk_rows<F: FnMut(usize, &[u32])>(
    tree: &TracedTree,
    data: &Dataset,
    start: usize,
    end: usize,
    mut on_leaf: F,
) {
    #[allow(clippy::too_many_arguments)]
    fn go<F: FnMut(usize, &[u32])>(
        routes: &[Option<Route>],
        node: usize,
        level: usize,
        bufs: &mut [Vec<u32>],
        data: &Dataset,
        start: usize,
        end: usize,
        on_leaf: &mut F,
    ) {
        match routes[node].expect("reachable node") {
            Route::Leaf { path } => on_leaf(path, &bufs[level]),
            Route::Split {
                feature,
                threshold,
                bit,
                first,
                left,
                right,
            } => {
                let col = &data.column(feature)[start..end];
                for (child, go_left) in [(left, true), (right, false)] {
                    let Some(child) = child else { continue };
                    {
                        let (head, tail) = bufs.split_at_mut(level + 1);
                        let cur = &head[level];
                        let next = &mut tail[0];
                        if first {
                            for ((n, &c), &x) in next.iter_mut().zip(cur).zip(col) {
                                let sat = (x < threshold) == go_left;
                                *n = c | (u32::from(sat) << bit);
                            }
                        } else {
                            for ((n, &c), &x) in next.iter_mut().zip(cur).zip(col) {
                                let sat = (x < threshold) == go_left;
                                *n = c & !(u32::from(!sat) << bit);
                            }
                        }
                    }
                    go(routes, child, level + 1, bufs, data, start, end, on_leaf);
                }
            }
        }
    }
    let n = end - start;
    let mut bufs = vec![vec![0u32; n]; tree.depth + 1];
    go(
        &tree.routes,
        0,
        0,
        &mut bufs,
        data,
        start,
        end,
        &mut on_leaf,
    );
}

/// Per-leaf histograms of the rows' condition masks, concatenated; leaf `i`
/// occupies `counts[offsets[i]..offsets[i] + 2^d_i]`.
fn mask_histograms(tree: &TracedTree, data: &Dataset) -> (Vec<usize>, Vec<u64>) {
    let mut offsets = Vec::with_capacity(tree.paths.len());
    let mut total = 0usize;
    for p in &tree.paths {
        offsets.push(total);
        total += 1 << p.conditions.len();
    }
    let n = data.n_rows();
    let starts: Vec<usize> = (0..n).step_by(ROW_CHUNK).collect();
    let counts = starts
        .par_iter()
        .fold(
            || vec![0u64; total],
            |mut acc, &s| {
                let e = (s + ROW_CHUNK).min(n);
                walk_rows(tree, data, s, e, |path, masks| {
                    let h = &mut acc[offsets[path]..];
                    for &m in masks {
                        h[m as usize] += 1;
                    }
                });
                acc
            },
        )
        .reduce(
            || vec![0u64; total],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    (offsets, counts)
}

impl<'m> Engine<'m> {
    /// Traces every tree and checks path lengths against the mask capacity.
    pub fn new(model: &'m TreeEnsemble, opts: EngineOptions) -> Result<Self> {
        let mut trees = Vec::with_capacity(model.trees().len());
        for (t, tree) in model.trees().iter().enumerate() {
            let (paths, routes) = trace_tree(tree);
            for p in &paths {
                check_capacity(t, p, opts.mask_capacity)?;
            }
            trees.push(TracedTree {
                paths,
                routes,
                depth: tree.depth(),
            });
        }
        Ok(Engine { model, trees, opts })
    }

    pub fn model(&self) -> &TreeEnsemble {
        self.model
    }

    fn check_columns(&self, data: &Dataset, what: &str) -> Result<()> {
        if data.n_cols() < self.model.num_features() {
            return Err(Error::Input(format!(
                "{what} has {} columns, model uses {} features",
                data.n_cols(),
                self.model.num_features()
            )));
        }
        Ok(())
    }

    /// Compiles every leaf of tree `t`.
    pub fn compile_tree(&self, t: usize, marginal: &Marginal<'_>) -> Result<Vec<LeafCompilation>> {
        let tree = &self.trees[t];
        match marginal {
            Marginal::PathDependent => tree
                .paths
                .iter()
                .map(|p| compile_leaf_pathdep(t, p, &self.opts))
                .collect(),
            Marginal::Background(b) => {
                if b.is_empty() {
                    return Err(Error::InvalidArgument(
                        "background mode requires at least one background row".into(),
                    ));
                }
                self.check_columns(b, "background")?;
                let n = b.n_rows();
                let (offsets, counts) = mask_histograms(tree, b);
                Ok(tree
                    .paths
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let size = 1 << p.conditions.len();
                        LeafCompilation::from_counts(
                            t,
                            p.clone(),
                            &counts[offsets[i]..offsets[i] + size],
                            n,
                        )
                    })
                    .collect())
            }
        }
    }

    /// Every compiled leaf of the ensemble, in tree order.
    pub fn compile_all(&self, marginal: &Marginal<'_>) -> Result<Vec<LeafCompilation>> {
        let mut out = Vec::new();
        for t in 0..self.trees.len() {
            out.extend(self.compile_tree(t, marginal)?);
        }
        Ok(out)
    }

    /// Expected prediction with all features missing: the background mean in
    /// exact mode, the cover-weighted expectation in path-dependent mode.
    pub fn expected_prediction(&self, marginal: &Marginal<'_>) -> Result<f64> {
        match marginal {
            Marginal::Background(b) => crate::tasks::mean_prediction(self.model, b),
            Marginal::PathDependent => {
                let mut sum = 0.0;
                for t in 0..self.trees.len() {
                    for comp in self.compile_tree(t, marginal)? {
                        sum += comp.expected_value();
                    }
                }
                Ok(sum + self.model.base_score())
            }
        }
    }

    /// Runs `metric` for every consumer row, adding into `acc` (one map per row).
    ///
    /// Trees are processed one at a time. Each row's sum is accumulated in a
    /// fixed order (tree, then leaf, then subset), independent of threading.
    pub fn run_into<M: CubeMetric>(
        &self,
        marginal: &Marginal<'_>,
        consumers: &Dataset,
        metric: &M,
        acc: &mut [SubsetValueMap],
    ) -> Result<()> {
        assert_eq!(
            acc.len(),
            consumers.n_rows(),
            "one accumulator per consumer row"
        );
        self.check_columns(consumers, "consumer data")?;
        let base = self.model.base_score();
        if base != 0.0 {
            let mut constant = Vec::new();
            metric.for_each(0, 0, |x, v| constant.push((x, v)));
            for (x, v) in constant {
                debug_assert_eq!(x, 0);
                for row in acc.iter_mut() {
                    row.add(SubsetKey::empty(), base * v);
                }
            }
        }
        let n = consumers.n_rows();
        for t in 0..self.trees.len() {
            let comps = self.compile_tree(t, marginal)?;
            let tables = comps
                .par_iter()
                .map(|c| evaluate_metric(c, metric))
                .collect::<Result<Vec<_>>>()?;
            let keys: Vec<Vec<SubsetKey>> = comps
                .par_iter()
                .map(|c| {
                    let features = c.features();
                    (0..1u32 << c.d)
                        .map(|x| SubsetKey::from_mask(x, &features))
                        .collect()
                })
                .collect();
            let tree = &self.trees[t];
            acc.par_chunks_mut(ROW_CHUNK)
                .enumerate()
                .for_each(|(ci, rows)| {
                    let s = ci * ROW_CHUNK;
                    let e = (s + ROW_CHUNK).min(n);
                    walk_rows(tree, consumers, s, e, |path, masks| {
                        let table = &tables[path];
                        let keys = &keys[path];
                        for (row, &m) in rows.iter_mut().zip(masks) {
                            for &(x, v) in table.get(m) {
                                row.add(keys[x as usize].clone(), v);
                            }
                        }
                    });
                });
        }
        Ok(())
    }

    pub fn run<M: CubeMetric>(
        &self,
        marginal: &Marginal<'_>,
        consumers: &Dataset,
        metric: &M,
    ) -> Result<Vec<SubsetValueMap>> {
        let mut acc = vec![SubsetValueMap::default(); consumers.n_rows()];
        self.run_into(marginal, consumers, metric, &mut acc)?;
        Ok(acc)
    }

    /// Sum of the per-row results of [`Engine::run`] over all consumer rows,
    /// computed from per-leaf histograms of the consumers' masks without
    /// materializing per-row maps.
    pub fn run_sum<M: CubeMetric>(
        &self,
        marginal: &Marginal<'_>,
        consumers: &Dataset,
        metric: &M,
    ) -> Result<SubsetValueMap> {
        self.check_columns(consumers, "consumer data")?;
        let mut out = SubsetValueMap::default();
        let n = consumers.n_rows() as f64;
        let base = self.model.base_score();
        if base != 0.0 && n > 0.0 {
            metric.for_each(0, 0, |_, v| out.add(SubsetKey::empty(), n * base * v));
        }
        for t in 0..self.trees.len() {
            let comps = self.compile_tree(t, marginal)?;
            let (offsets, counts) = mask_histograms(&self.trees[t], consumers);
            let partial = comps
                .par_iter()
                .enumerate()
                .map(|(i, comp)| {
                    let table = evaluate_metric(comp, metric)?;
                    let features = comp.features();
                    let mut acc = SubsetValueMap::default();
                    for m in 0..1usize << comp.d {
                        let c = counts[offsets[i] + m];
                        if c == 0 {
                            continue;
                        }
                        for &(x, v) in table.get(m as u32) {
                            acc.add(SubsetKey::from_mask(x, &features), c as f64 * v);
                        }
                    }
                    Ok(acc)
                })
                .collect::<Result<Vec<_>>>()?;
            for acc in partial {
                for (k, v) in acc.entries {
                    out.add(k, v);
                }
            }
        }
        Ok(out)
    }

    /// Evaluates the compiled formula of consumer `row` at the assignment where
    /// exactly the features in `ones` are 1. Debug entry point: in background
    /// mode this must equal the brute-force partial dependence of `ones` fixed
    /// to `row`'s values.
    pub fn evaluate_assignment(
        &self,
        marginal: &Marginal<'_>,
        row: &[f64],
        ones: &[usize],
    ) -> Result<f64> {
        if row.len() < self.model.num_features() {
            return Err(Error::Input(
                "row is shorter than the model's feature count".into(),
            ));
        }
        let mut total = self.model.base_score();
        for t in 0..self.trees.len() {
            for comp in self.compile_tree(t, marginal)? {
                let full = comp.full_mask();
                let m = comp.path.mask_of(row);
                let x = comp
                    .path
                    .conditions
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| ones.contains(&c.feature))
                    .fold(0u32, |acc, (i, _)| acc | 1 << i);
                for cube in enumerate_cubes(&comp, None) {
                    if cube.consumer_mask(comp.d) != m {
                        continue;
                    }
                    if cube.pos & !x == 0 && cube.neg & x == 0 {
                        total += cube.weight;
                    }
                }
                let _ = full;
            }
        }
        Ok(total)
    }

    /// JSON dump of every compiled leaf: conditions, coverage and cubes.
    pub fn debug_dump(&self, marginal: &Marginal<'_>) -> Result<serde_json::Value> {
        let leaves = self.compile_all(marginal)?;
        let out: Vec<serde_json::Value> = leaves
            .iter()
            .map(|comp| {
                let features = comp.features();
                let cubes: Vec<serde_json::Value> = enumerate_cubes(comp, None)
                    .iter()
                    .map(|c| {
                        let cube = c.to_cube(&features);
                        serde_json::json!({
                            "pos": cube.s_plus,
                            "neg": cube.s_minus,
                            "w": cube.weight,
                        })
                    })
                    .collect();
                serde_json::json!({
                    "tree": comp.tree,
                    "leaf": comp.path.leaf_id,
                    "value": comp.path.leaf_value,
                    "conditions": comp.path.conditions,
                    "coverage": comp.coverage,
                    "pd_weights": comp.pd_weights,
                    "cubes": cubes,
                })
            })
            .collect();
        Ok(serde_json::Value::Array(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{CpdvMetric, PdivMetric};
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

    fn right_leaf() -> LeafPath {
        toy().extract_paths().remove(1).1
    }

    #[test]
    fn toy_coverage() {
        let b = col(&[0.0, 1.0]);
        let comp =
            compile_leaf_background(0, &right_leaf(), &b, &EngineOptions::default()).unwrap();
        assert_eq!(comp.coverage, vec![1.0, 0.5]);
        assert_eq!(comp.pattern, vec![0.5, 0.5]);
    }

    #[test]
    fn empty_background_rejected() {
        let b = col(&[]);
        assert!(compile_leaf_background(0, &right_leaf(), &b, &EngineOptions::default()).is_err());
    }

    #[test]
    fn depth_two_coverage_from_hand_counted_histogram() {
        // f0 < 1 then f1 < 1; four rows hitting every mask once
        let t = Tree::from_spec(&NodeSpec::split(
            0,
            1.0,
            NodeSpec::split(1, 1.0, NodeSpec::leaf(2.0), NodeSpec::leaf(0.0)),
            NodeSpec::leaf(0.0),
        ));
        let m = TreeEnsemble::with_num_features(vec![t], 0.0, 2).unwrap();
        let leaf = m.extract_paths().remove(0).1;
        let b = Dataset::from_rows(
            vec!["f0".into(), "f1".into()],
            &[
                vec![0.0, 0.0],
                vec![0.0, 5.0],
                vec![5.0, 0.0],
                vec![5.0, 5.0],
            ],
        )
        .unwrap();
        let comp = compile_leaf_background(0, &leaf, &b, &EngineOptions::default()).unwrap();
        assert_eq!(comp.coverage, vec![1.0, 0.5, 0.5, 0.25]);
        assert_eq!(comp.pattern, vec![0.25; 4]);
    }

    #[test]
    fn pathdep_ratios() {
        let t = Tree::from_spec(
            &NodeSpec::split(
                0,
                0.5,
                NodeSpec::split(
                    1,
                    0.5,
                    NodeSpec::leaf(1.0).with_cover(12.0),
                    NodeSpec::leaf(2.0).with_cover(18.0),
                )
                .with_cover(30.0),
                NodeSpec::leaf(3.0).with_cover(70.0),
            )
            .with_cover(100.0),
        );
        let m = TreeEnsemble::with_num_features(vec![t], 0.0, 2).unwrap();
        let paths = m.extract_paths();
        let opts = EngineOptions::default();
        let right = compile_leaf_pathdep(0, &paths[2].1, &opts).unwrap();
        assert_eq!(right.pd_weights, Some(vec![0.7]));
        let first = compile_leaf_pathdep(0, &paths[0].1, &opts).unwrap();
        assert_eq!(first.pd_weights, Some(vec![0.3, 0.4]));
        assert!((first.coverage[0b11] - 0.12).abs() < 1e-15);
        assert_eq!(first.coverage[0], 1.0);
    }

    #[test]
    fn pathdep_repeated_feature_multiplies_ratios() {
        let t = Tree::from_spec(
            &NodeSpec::split(
                0,
                5.0,
                NodeSpec::split(
                    0,
                    3.0,
                    NodeSpec::leaf(1.0).with_cover(20.0),
                    NodeSpec::leaf(2.0).with_cover(30.0),
                )
                .with_cover(50.0),
                NodeSpec::leaf(3.0).with_cover(50.0),
            )
            .with_cover(100.0),
        );
        let m = TreeEnsemble::with_num_features(vec![t], 0.0, 1).unwrap();
        let leaf = m.extract_paths().remove(0).1;
        let comp = compile_leaf_pathdep(0, &leaf, &EngineOptions::default()).unwrap();
        assert_eq!(comp.pd_weights, Some(vec![0.5 * 0.4]));
    }

    #[test]
    fn pathdep_errors() {
        let t = Tree::from_spec(
            &NodeSpec::split(
                0,
                0.5,
                NodeSpec::leaf(0.0).with_cover(0.0),
                NodeSpec::leaf(1.0),
            )
            .with_cover(0.0),
        );
        let m = TreeEnsemble::with_num_features(vec![t], 0.0, 1).unwrap();
        let leaf = m.extract_paths().remove(0).1;
        assert!(matches!(
            compile_leaf_pathdep(0, &leaf, &EngineOptions::default()),
            Err(Error::DegenerateModel { .. })
        ));
        let root_only =
            TreeEnsemble::with_num_features(vec![Tree::from_spec(&NodeSpec::leaf(4.0))], 0.0, 0)
                .unwrap();
        let leaf = root_only.extract_paths().remove(0).1;
        let comp = compile_leaf_pathdep(0, &leaf, &EngineOptions::default()).unwrap();
        assert_eq!(comp.coverage, vec![1.0]);
    }

    #[test]
    fn cube_counts() {
        let b = col(&[0.0, 1.0]);
        let comp =
            compile_leaf_background(0, &right_leaf(), &b, &EngineOptions::default()).unwrap();
        let cubes = enumerate_cubes(&comp, None);
        assert_eq!(cubes.len(), 3);
        let shapes: Vec<(u32, u32)> = cubes.iter().map(|c| (c.pos, c.neg)).collect();
        assert_eq!(shapes, vec![(0, 1), (1, 0), (0, 0)]);
        assert_eq!(enumerate_cubes(&comp, Some(0)).len(), 2);
    }

    #[test]
    fn cube_counts_closed_form() {
        for d in 0..=6usize {
            let comp = LeafCompilation::from_pd_weights(
                0,
                LeafPath {
                    leaf_id: 0,
                    leaf_value: 1.0,
                    leaf_cover: None,
                    conditions: (0..d)
                        .map(|f| crate::model::SplitCondition {
                            feature: f,
                            interval: crate::model::Interval::below(0.0),
                        })
                        .collect(),
                    steps: vec![],
                },
                vec![0.5; d],
            );
            assert_eq!(enumerate_cubes(&comp, None).len(), 3usize.pow(d as u32));
            for cap in 0..=3u32 {
                let expected: usize = (0..=cap.min(d as u32) as usize)
                    .map(|j| binom(d, j) * (1 << (d - j)))
                    .sum();
                assert_eq!(
                    enumerate_cubes(&comp, Some(cap)).len(),
                    expected,
                    "d={d} cap={cap}"
                );
            }
        }
        assert_eq!(binom(6, 1) * 32 + 64, 256);
    }

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn toy_cpdv_table() {
        let b = col(&[0.0, 1.0]);
        let comp =
            compile_leaf_background(0, &right_leaf(), &b, &EngineOptions::default()).unwrap();
        let table = evaluate_metric(&comp, &CpdvMetric).unwrap();
        assert_eq!(table.get(1), &[(1, 0.5)]);
        assert_eq!(table.get(0), &[(1, -0.5)]);
    }

    #[test]
    fn zero_leaf_gives_empty_table() {
        let b = col(&[0.0, 1.0]);
        let leaf = toy().extract_paths().remove(0).1;
        let comp = compile_leaf_background(0, &leaf, &b, &EngineOptions::default()).unwrap();
        let table = evaluate_metric(&comp, &PdivMetric).unwrap();
        assert_eq!(table.num_entries(), 0);
    }

    #[test]
    fn toy_aggregate() {
        let model = toy();
        let b = col(&[0.0, 1.0]);
        let engine = Engine::new(&model, EngineOptions::default()).unwrap();
        let c = col(&[1.0, 0.0, 1.0]);
        let out = engine
            .run(&Marginal::Background(&b), &c, &CpdvMetric)
            .unwrap();
        let f0 = SubsetKey::new([0]);
        assert_eq!(out[0].get(&f0), 0.5);
        assert_eq!(out[1].get(&f0), -0.5);
        assert_eq!(out[0], out[2]);
    }

    #[test]
    fn missing_consumer_column() {
        let t = Tree::from_spec(&NodeSpec::split(
            1,
            0.5,
            NodeSpec::leaf(0.0),
            NodeSpec::leaf(1.0),
        ));
        let model = TreeEnsemble::with_num_features(vec![t], 0.0, 2).unwrap();
        let engine = Engine::new(&model, EngineOptions::default()).unwrap();
        let c = col(&[1.0]);
        assert!(matches!(
            engine.run(&Marginal::PathDependent, &c, &CpdvMetric),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn capacity_error_names_leaf() {
        let mut spec = NodeSpec::leaf(1.0);
        for f in (0..5).rev() {
            spec = NodeSpec::split(f, 0.5, spec, NodeSpec::leaf(0.0));
        }
        let model = TreeEnsemble::with_num_features(vec![Tree::from_spec(&spec)], 0.0, 5).unwrap();
        let err = Engine::new(&model, EngineOptions { mask_capacity: 4 })
            .err()
            .expect("capacity error");
        match err {
            Error::Capacity {
                tree,
                conditions,
                capacity,
                ..
            } => assert_eq!((tree, conditions, capacity), (0, 5, 4)),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn superset_sum_small() {
        let mut a = vec![1u64, 1, 1, 1];
        superset_sum(&mut a);
        assert_eq!(a, vec![4, 2, 2, 1]);
    }

    #[test]
    fn submask_enumeration_respects_cap() {
        let mut seen = Vec::new();
        for_each_submask_upto(0b1011, Some(2), |m| seen.push(m));
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 8, 9, 10]);
        let mut all = 0;
        for_each_submask_upto(0b1011, None, |_| all += 1);
        assert_eq!(all, 8);
    }
}
