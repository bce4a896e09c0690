//! Tree-ensemble representation, the JSON dump reader/writer, prediction and
//! extraction of merged root-to-leaf paths.
//!
//! Split convention: a node routes a value `x` to its `yes` (left) child when
//! `x < threshold` and to its `no` (right) child otherwise, so ties go right.
//! Every merged path condition is therefore a half-open interval `[lo, hi)`.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        id: u32,
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        cover: Option<f64>,
    },
    Leaf {
        id: u32,
        value: f64,
        cover: Option<f64>,
    },
}

impl Node {
    pub fn id(&self) -> u32 {
        match self {
            Node::Split { id, .. } | Node::Leaf { id, .. } => *id,
        }
    }

    pub fn cover(&self) -> Option<f64> {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// A rooted binary tree stored as a flat node array; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

/// Nested tree description used to build trees programmatically.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeSpec {
    Leaf {
        value: f64,
        cover: Option<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        cover: Option<f64>,
        yes: Box<NodeSpec>,
        no: Box<NodeSpec>,
    },
}

impl NodeSpec {
    pub fn leaf(value: f64) -> Self {
        NodeSpec::Leaf { value, cover: None }
    }

    pub fn split(feature: usize, threshold: f64, yes: NodeSpec, no: NodeSpec) -> Self {
        NodeSpec::Split {
            feature,
            threshold,
            cover: None,
            yes: Box::new(yes),
            no: Box::new(no),
        }
    }

    pub fn with_cover(mut self, c: f64) -> Self {
        match &mut self {
            NodeSpec::Leaf { cover, .. } | NodeSpec::Split { cover, .. } => *cover = Some(c),
        }
        self
    }
}

impl Tree {
    /// Builds a tree from a nested description, numbering nodes in pre-order.
    pub fn from_spec(spec: &NodeSpec) -> Tree {
        fn push(spec: &NodeSpec, nodes: &mut Vec<Node>) -> usize {
            let idx = nodes.len();
            match spec {
                NodeSpec::Leaf { value, cover } => nodes.push(Node::Leaf {
                    id: idx as u32,
                    value: *value,
                    cover: *cover,
                }),
                NodeSpec::Split {
                    feature,
                    threshold,
                    cover,
                    yes,
                    no,
                } => {
                    nodes.push(Node::Leaf {
                        id: idx as u32,
                        value: 0.0,
                        cover: None,
                    });
                    let left = push(yes, nodes);
                    let right = push(no, nodes);
                    nodes[idx] = Node::Split {
                        id: idx as u32,
                        feature: *feature,
                        threshold: *threshold,
                        left,
                        right,
                        cover: *cover,
                    };
                }
            }
            idx
        }
        let mut nodes = Vec::new();
        push(spec, &mut nodes);
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Maximum number of split nodes on any root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Leaf value reached by `row`. The caller guarantees the row is long enough.
    fn leaf_value(&self, row: &[f64]) -> Result<f64> {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return Ok(*value),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    let x = row[*feature];
                    if x.is_nan() {
                        return Err(Error::Input(format!("missing value for feature {feature}")));
                    }
                    i = if x < *threshold { *left } else { *right };
                }
            }
        }
    }

    fn to_json(&self, idx: usize) -> Value {
        let mut obj = Map::new();
        let node = &self.nodes[idx];
        obj.insert("nodeid".into(), Value::from(node.id()));
        match node {
            Node::Leaf { value, .. } => {
                obj.insert("leaf".into(), Value::from(*value));
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                obj.insert("split_feature".into(), Value::from(*feature));
                obj.insert("threshold".into(), Value::from(*threshold));
                obj.insert("yes".into(), self.to_json(*left));
                obj.insert("no".into(), self.to_json(*right));
            }
        }
        if let Some(c) = node.cover() {
            obj.insert("cover".into(), Value::from(c));
        }
        Value::Object(obj)
    }
}

/// An additive ensemble of regression trees: prediction is `base_score` plus
/// one leaf value per tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    trees: Vec<Tree>,
    base_score: f64,
    feature_names: Vec<String>,
}

impl TreeEnsemble {
    pub fn new(trees: Vec<Tree>, base_score: f64, feature_names: Vec<String>) -> Result<Self> {
        let ensemble = TreeEnsemble {
            trees,
            base_score,
            feature_names,
        };
        ensemble.validate()?;
        Ok(ensemble)
    }

    /// Builds an ensemble with generated feature names `f0..f{n-1}`.
    pub fn with_num_features(trees: Vec<Tree>, base_score: f64, n_features: usize) -> Result<Self> {
        Self::new(trees, base_score, default_names(n_features))
    }

    fn validate(&self) -> Result<()> {
        if !self.base_score.is_finite() {
            return Err(schema("base_score", "must be finite"));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return Err(schema(&format!("trees[{t}]"), "empty tree"));
            }
            for node in &tree.nodes {
                let path = format!("trees[{t}] node {}", node.id());
                if let Some(c) = node.cover() {
                    if !(c >= 0.0 && c.is_finite()) {
                        return Err(schema(&path, "cover must be a non-negative number"));
                    }
                }
                match node {
                    Node::Leaf { value, .. } => {
                        if !value.is_finite() {
                            return Err(schema(&path, "leaf value must be finite"));
                        }
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        ..
                    } => {
                        if *feature >= self.feature_names.len() {
                            return Err(schema(
                                &path,
                                &format!(
                                    "split feature {feature} out of range ({} features)",
                                    self.feature_names.len()
                                ),
                            ));
                        }
                        if threshold.is_nan() {
                            return Err(schema(&path, "threshold is NaN"));
                        }
                        if *left >= tree.nodes.len() || *right >= tree.nodes.len() {
                            return Err(schema(&path, "child index out of range"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    /// Sum of one leaf value per tree plus `base_score`.
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() < self.num_features() {
            return Err(Error::Input(format!(
                "row has {} values, model uses {} features",
                row.len(),
                self.num_features()
            )));
        }
        let mut sum = 0.0;
        for tree in &self.trees {
            sum += tree.leaf_value(row)?;
        }
        Ok(sum + self.base_score)
    }

    /// Sorted, deduplicated split thresholds per feature.
    pub fn thresholds(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.num_features()];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split {
                    feature, threshold, ..
                } = node
                {
                    out[*feature].push(*threshold);
                }
            }
        }
        for v in &mut out {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        out
    }

    /// One entry per reachable leaf, in tree order then pre-order.
    pub fn extract_paths(&self) -> Vec<(usize, LeafPath)> {
        self.trees
            .iter()
            .enumerate()
            .flat_map(|(t, tree)| trace_tree(tree).0.into_iter().map(move |p| (t, p)))
            .collect()
    }

    /// A stable fingerprint of the model, used in result metadata.
    pub fn fingerprint(&self) -> String {
        use std::hash::Hash;
        // FNV-style fold over the dump so the value is stable across processes.
        let text = self.to_dump_json().to_string();
        let mut h = Fnv(0xcbf29ce484222325);
        text.hash(&mut h);
        format!("{:016x}", h.0)
    }

    /// Serializes the ensemble in the object form of the dump schema.
    pub fn to_dump_json(&self) -> Value {
        let trees: Vec<Value> = self.trees.iter().map(|t| t.to_json(0)).collect();
        let mut obj = Map::new();
        obj.insert("base_score".into(), Value::from(self.base_score));
        obj.insert(
            "feature_names".into(),
            Value::from(self.feature_names.clone()),
        );
        obj.insert("trees".into(), Value::Array(trees));
        Value::Object(obj)
    }
}

struct Fnv(u64);

impl std::hash::Hasher for Fnv {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

fn schema(path: &str, message: &str) -> Error {
    Error::Schema {
        path: path.to_string(),
        message: message.to_string(),
    }
}

fn parse_err(path: &str, message: &str) -> Error {
    Error::Parse {
        path: path.to_string(),
        message: message.to_string(),
    }
}

/// Half-open interval `[lo, hi)`; `lo` may be `-inf` and `hi` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const ALL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn below(t: f64) -> Interval {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: t,
        }
    }

    pub fn at_or_above(t: f64) -> Interval {
        Interval {
            lo: t,
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo.partial_cmp(&self.hi) != Some(std::cmp::Ordering::Less)
    }
}

/// Merged condition on one feature: the value must fall in `interval`.
/// The complement is the rest of the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCondition {
    pub feature: usize,
    pub interval: Interval,
}

impl SplitCondition {
    pub fn contains(&self, x: f64) -> bool {
        self.interval.contains(x)
    }

    pub fn complement_contains(&self, x: f64) -> bool {
        !self.interval.contains(x)
    }
}

/// Intersects repeated features, keeping first-appearance order.
/// Returns `None` when some feature's intersection is empty.
pub fn merge_conditions(conditions: &[SplitCondition]) -> Option<Vec<SplitCondition>> {
    let mut merged: Vec<SplitCondition> = Vec::with_capacity(conditions.len());
    for c in conditions {
        match merged.iter_mut().find(|m| m.feature == c.feature) {
            Some(m) => m.interval = m.interval.intersect(&c.interval),
            None => merged.push(*c),
        }
    }
    if merged.iter().any(|m| m.interval.is_empty()) {
        None
    } else {
        Some(merged)
    }
}

/// One split node visited on a root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStep {
    pub node_id: u32,
    pub feature: usize,
    /// Index of the merged condition this split contributes to.
    pub condition: usize,
    pub went_left: bool,
    pub node_cover: Option<f64>,
    pub child_cover: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeafPath {
    pub leaf_id: u32,
    pub leaf_value: f64,
    pub leaf_cover: Option<f64>,
    /// One condition per distinct feature, in first-appearance order.
    pub conditions: Vec<SplitCondition>,
    pub steps: Vec<PathStep>,
}

impl LeafPath {
    /// Number of split nodes on the path.
    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    pub fn node_ids(&self) -> Vec<u32> {
        self.steps.iter().map(|s| s.node_id).collect()
    }

    pub fn features(&self) -> impl Iterator<Item = usize> + '_ {
        self.conditions.iter().map(|c| c.feature)
    }

    /// Bitmask of the conditions `row` satisfies (bit `i` = condition `i`).
    pub fn mask_of(&self, row: &[f64]) -> u32 {
        let mut mask = 0u32;
        for (i, c) in self.conditions.iter().enumerate() {
            if c.contains(row[c.feature]) {
                mask |= 1 << i;
            }
        }
        mask
    }

    pub fn satisfied_by(&self, row: &[f64]) -> bool {
        self.conditions.iter().all(|c| c.contains(row[c.feature]))
    }
}

/// Per-node routing information shared by all leaves below the node.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Route {
    Split {
        feature: usize,
        threshold: f64,
        /// Condition bit this node updates in the leaf masks below it.
        bit: u32,
        /// True when the node is the first on its path to test `feature`.
        first: bool,
        left: Option<usize>,
        right: Option<usize>,
    },
    Leaf {
        path: usize,
    },
}

/// Walks a tree once, producing its reachable leaf paths and a routing table
/// whose condition bits agree with each path's condition order. Unreachable
/// children are recorded as `None`.
pub(crate) fn trace_tree(tree: &Tree) -> (Vec<LeafPath>, Vec<Option<Route>>) {
    struct Walk<'a> {
        tree: &'a Tree,
        conds: Vec<SplitCondition>,
        steps: Vec<PathStep>,
        paths: Vec<LeafPath>,
        routes: Vec<Option<Route>>,
    }

    impl Walk<'_> {
        fn visit(&mut self, idx: usize) {
            match self.tree.nodes[idx] {
                Node::Leaf { id, value, cover } => {
                    self.routes[idx] = Some(Route::Leaf {
                        path: self.paths.len(),
                    });
                    self.paths.push(LeafPath {
                        leaf_id: id,
                        leaf_value: value,
                        leaf_cover: cover,
                        conditions: self.conds.clone(),
                        steps: self.steps.clone(),
                    });
                }
                Node::Split {
                    id,
                    feature,
                    threshold,
                    left,
                    right,
                    cover,
                } => {
                    let existing = self.conds.iter().position(|c| c.feature == feature);
                    let bit = existing.unwrap_or(self.conds.len());
                    let prev = existing.map(|p| self.conds[p].interval);
                    let mut reach = [None, None];
                    for (side, (child, half)) in [
                        (left, Interval::below(threshold)),
                        (right, Interval::at_or_above(threshold)),
                    ]
                    .into_iter()
                    .enumerate()
                    {
                        let merged = prev.unwrap_or(Interval::ALL).intersect(&half);
                        if merged.is_empty() {
                            continue;
                        }
                        match existing {
                            Some(p) => self.conds[p].interval = merged,
                            None => self.conds.push(SplitCondition {
                                feature,
                                interval: merged,
                            }),
                        }
                        self.steps.push(PathStep {
                            node_id: id,
                            feature,
                            condition: bit,
                            went_left: side == 0,
                            node_cover: cover,
                            child_cover: self.tree.nodes[child].cover(),
                        });
                        self.visit(child);
                        self.steps.pop();
                        match (existing, prev) {
                            (Some(p), Some(iv)) => self.conds[p].interval = iv,
                            _ => {
                                self.conds.pop();
                            }
                        }
                        reach[side] = Some(child);
                    }
                    self.routes[idx] = Some(Route::Split {
                        feature,
                        threshold,
                        bit: bit as u32,
                        first: existing.is_none(),
                        left: reach[0],
                        right: reach[1],
                    });
                }
            }
        }
    }

    let mut walk = Walk {
        tree,
        conds: Vec::new(),
        steps: Vec::new(),
        paths: Vec::new(),
        routes: vec![None; tree.nodes.len()],
    };
    walk.visit(0);
    (walk.paths, walk.routes)
}

/// Supported model dump formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpFormat {
    /// JSON tree array (or `{"trees": [...]}` wrapper); see `docs/model-dump.md`.
    TreeDumpJson,
}

const NODE_KEYS: &[&str] = &[
    "nodeid",
    "split_feature",
    "threshold",
    "yes",
    "no",
    "leaf",
    "cover",
    "decision_type",
];
const TOP_KEYS: &[&str] = &["trees", "base_score", "feature_names", "num_features"];

pub fn parse_model(bytes: &[u8], format: DumpFormat) -> Result<TreeEnsemble> {
    match format {
        DumpFormat::TreeDumpJson => parse_tree_dump_json(bytes),
    }
}

fn parse_tree_dump_json(bytes: &[u8]) -> Result<TreeEnsemble> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| parse_err("$", &e.to_string()))?;
    let (trees_json, base_score, names, num_features) = match &root {
        Value::Array(trees) => (trees, 0.0, None, None),
        Value::Object(obj) => {
            if let Some(k) = obj.keys().find(|k| !TOP_KEYS.contains(&k.as_str())) {
                return Err(schema("$", &format!("unknown key `{k}`")));
            }
            let trees = obj
                .get("trees")
                .and_then(Value::as_array)
                .ok_or_else(|| parse_err("$.trees", "expected an array of trees"))?;
            let base = match obj.get("base_score") {
                None => 0.0,
                Some(v) => v
                    .as_f64()
                    .ok_or_else(|| parse_err("$.base_score", "expected a number"))?,
            };
            let names = match obj.get("feature_names") {
                None => None,
                Some(Value::Array(a)) => Some(
                    a.iter()
                        .enumerate()
                        .map(|(i, v)| {
                            v.as_str().map(str::to_string).ok_or_else(|| {
                                parse_err(&format!("$.feature_names[{i}]"), "expected a string")
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                ),
                Some(_) => return Err(parse_err("$.feature_names", "expected an array")),
            };
            let nf =
                match obj.get("num_features") {
                    None => None,
                    Some(v) => Some(v.as_u64().ok_or_else(|| {
                        parse_err("$.num_features", "expected a non-negative integer")
                    })? as usize),
                };
            (trees, base, names, nf)
        }
        _ => return Err(parse_err("$", "expected a tree array or an object")),
    };

    let mut trees = Vec::with_capacity(trees_json.len());
    let mut max_feature: Option<usize> = None;
    for (t, tj) in trees_json.iter().enumerate() {
        let mut nodes = Vec::new();
        parse_node(tj, &format!("$.trees[{t}]"), &mut nodes, names.as_deref())?;
        for n in &nodes {
            if let Node::Split { feature, .. } = n {
                max_feature = Some(max_feature.map_or(*feature, |m| m.max(*feature)));
            }
        }
        trees.push(Tree { nodes });
    }

    let names = match (names, num_features) {
        (Some(n), Some(nf)) if n.len() != nf => {
            return Err(schema(
                "$.num_features",
                "disagrees with the length of feature_names",
            ))
        }
        (Some(n), _) => n,
        (None, Some(nf)) => default_names(nf),
        (None, None) => default_names(max_feature.map_or(0, |m| m + 1)),
    };
    TreeEnsemble::new(trees, base_score, names)
}

fn parse_node(
    v: &Value,
    path: &str,
    nodes: &mut Vec<Node>,
    names: Option<&[String]>,
) -> Result<usize> {
    let obj = v
        .as_object()
        .ok_or_else(|| parse_err(path, "expected a node object"))?;
    if let Some(k) = obj.keys().find(|k| !NODE_KEYS.contains(&k.as_str())) {
        return Err(schema(path, &format!("unknown key `{k}`")));
    }
    let idx = nodes.len();
    let id = match obj.get("nodeid") {
        None => idx as u32,
        Some(v) => v
            .as_u64()
            .and_then(|x| u32::try_from(x).ok())
            .ok_or_else(|| parse_err(&format!("{path}.nodeid"), "expected a u32"))?,
    };
    let cover = match obj.get("cover") {
        None => None,
        Some(v) => Some(
            v.as_f64()
                .ok_or_else(|| parse_err(&format!("{path}.cover"), "expected a number"))?,
        ),
    };
    if let Some(c) = cover {
        if c < 0.0 {
            return Err(schema(
                &format!("{path}.cover"),
                "cover must be non-negative",
            ));
        }
    }

    if let Some(leaf) = obj.get("leaf") {
        if let Some(k) = ["split_feature", "threshold", "yes", "no", "decision_type"]
            .iter()
            .find(|k| obj.contains_key(**k))
        {
            return Err(schema(path, &format!("leaf node has split key `{k}`")));
        }
        let value = leaf
            .as_f64()
            .ok_or_else(|| parse_err(&format!("{path}.leaf"), "expected a number"))?;
        nodes.push(Node::Leaf { id, value, cover });
        return Ok(idx);
    }

    if let Some(dt) = obj.get("decision_type") {
        if dt.as_str() != Some("<") {
            return Err(schema(
                &format!("{path}.decision_type"),
                &format!("unsupported split type {dt}; only \"<\" is accepted"),
            ));
        }
    }
    let feature = match obj.get("split_feature") {
        None => {
            return Err(parse_err(
                path,
                "node has neither `leaf` nor `split_feature`",
            ))
        }
        Some(Value::String(s)) => names
            .and_then(|n| n.iter().position(|x| x == s))
            .ok_or_else(|| {
                schema(
                    &format!("{path}.split_feature"),
                    &format!("unknown feature `{s}`"),
                )
            })?,
        Some(v) => v.as_u64().ok_or_else(|| {
            parse_err(
                &format!("{path}.split_feature"),
                "expected a feature index or name",
            )
        })? as usize,
    };
    if let Some(n) = names {
        if feature >= n.len() {
            return Err(schema(
                &format!("{path}.split_feature"),
                &format!(
                    "feature index {feature} out of range ({} features)",
                    n.len()
                ),
            ));
        }
    }
    let threshold = obj
        .get("threshold")
        .and_then(Value::as_f64)
        .ok_or_else(|| parse_err(&format!("{path}.threshold"), "expected a number"))?;
    let yes = obj
        .get("yes")
        .ok_or_else(|| parse_err(&format!("{path}.yes"), "missing child"))?;
    let no = obj
        .get("no")
        .ok_or_else(|| parse_err(&format!("{path}.no"), "missing child"))?;

    nodes.push(Node::Leaf {
        id,
        value: 0.0,
        cover: None,
    });
    let left = parse_node(yes, &format!("{path}.yes"), nodes, names)?;
    let right = parse_node(no, &format!("{path}.no"), nodes, names)?;
    nodes[idx] = Node::Split {
        id,
        feature,
        threshold,
        left,
        right,
        cover,
    };
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> TreeEnsemble {
        let t = Tree::from_spec(&NodeSpec::split(
            0,
            0.5,
            NodeSpec::leaf(0.0),
            NodeSpec::leaf(1.0),
        ));
        TreeEnsemble::with_num_features(vec![t], 0.0, 1).unwrap()
    }

    #[test]
    fn parses_toy_dump() {
        let json = br#"[{"split_feature":0,"threshold":0.5,"yes":{"leaf":0.0},"no":{"leaf":1.0}}]"#;
        let m = parse_model(json, DumpFormat::TreeDumpJson).unwrap();
        assert_eq!(m.num_features(), 1);
        assert_eq!(m.predict(&[0.2]).unwrap(), 0.0);
        assert_eq!(m.predict(&[0.9]).unwrap(), 1.0);
        // ties go right
        assert_eq!(m.predict(&[0.5]).unwrap(), 1.0);
    }

    #[test]
    fn constant_tree() {
        let m = parse_model(br#"[{"leaf": 7.0}]"#, DumpFormat::TreeDumpJson).unwrap();
        assert_eq!(m.predict(&[]).unwrap(), 7.0);
        assert_eq!(m.predict(&[123.0, -4.0]).unwrap(), 7.0);
        let paths = m.extract_paths();
        assert_eq!(paths.len(), 1);
        assert!(paths[0].1.conditions.is_empty());
    }

    #[test]
    fn parse_errors_carry_node_path() {
        let json = br#"{"trees":[{"leaf":1},{"split_feature":0,"threshold":1,"yes":{"leaf":0},"no":{"lef":1}}]}"#;
        match parse_model(json, DumpFormat::TreeDumpJson) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "$.trees[1].no"),
            other => panic!("unexpected {other:?}"),
        }
        let json = br#"[{"split_feature":0,"threshold":"x","yes":{"leaf":0},"no":{"leaf":1}}]"#;
        match parse_model(json, DumpFormat::TreeDumpJson) {
            Err(Error::Parse { path, .. }) => assert_eq!(path, "$.trees[0].threshold"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_model(b"[{", DumpFormat::TreeDumpJson),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn unknown_feature_is_schema_error() {
        let json = br#"{"feature_names":["a","b"],"trees":[{"split_feature":2,"threshold":1,"yes":{"leaf":0},"no":{"leaf":1}}]}"#;
        assert!(matches!(
            parse_model(json, DumpFormat::TreeDumpJson),
            Err(Error::Schema { .. })
        ));
        let json = br#"{"feature_names":["a","b"],"trees":[{"split_feature":"c","threshold":1,"yes":{"leaf":0},"no":{"leaf":1}}]}"#;
        assert!(matches!(
            parse_model(json, DumpFormat::TreeDumpJson),
            Err(Error::Schema { .. })
        ));
        let json = br#"{"feature_names":["a","b"],"trees":[{"split_feature":"b","threshold":1,"yes":{"leaf":0},"no":{"leaf":1}}]}"#;
        let m = parse_model(json, DumpFormat::TreeDumpJson).unwrap();
        assert_eq!(m.predict(&[0.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn rejects_other_split_types_and_negative_cover() {
        let json = br#"[{"split_feature":0,"threshold":1,"decision_type":"<=","yes":{"leaf":0},"no":{"leaf":1}}]"#;
        assert!(matches!(
            parse_model(json, DumpFormat::TreeDumpJson),
            Err(Error::Schema { .. })
        ));
        let json = br#"[{"leaf":0,"cover":-1}]"#;
        assert!(matches!(
            parse_model(json, DumpFormat::TreeDumpJson),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn dump_roundtrip() {
        let m = toy();
        let text = m.to_dump_json().to_string();
        let back = parse_model(text.as_bytes(), DumpFormat::TreeDumpJson).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn missing_values_are_rejected() {
        let m = toy();
        assert!(matches!(m.predict(&[]), Err(Error::Input(_))));
        assert!(matches!(m.predict(&[f64::NAN]), Err(Error::Input(_))));
    }

    #[test]
    fn single_split_paths() {
        let paths = toy().extract_paths();
        assert_eq!(paths.len(), 2);
        let (_, left) = &paths[0];
        assert_eq!(left.leaf_value, 0.0);
        assert_eq!(left.conditions[0].interval, Interval::below(0.5));
        let (_, right) = &paths[1];
        assert_eq!(right.leaf_value, 1.0);
        assert_eq!(right.conditions[0].interval, Interval::at_or_above(0.5));
        assert!(right.conditions[0].complement_contains(0.2));
    }

    #[test]
    fn repeated_feature_is_merged() {
        // f0 < 5 then f0 < 3
        let t = Tree::from_spec(&NodeSpec::split(
            0,
            5.0,
            NodeSpec::split(0, 3.0, NodeSpec::leaf(1.0), NodeSpec::leaf(2.0)),
            NodeSpec::leaf(3.0),
        ));
        let m = TreeEnsemble::with_num_features(vec![t], 0.0, 1).unwrap();
        let paths = m.extract_paths();
        assert_eq!(paths.len(), 3);
        let first = &paths[0].1;
        assert_eq!(first.conditions.len(), 1);
        assert_eq!(first.depth(), 2);
        assert_eq!(first.conditions[0].interval, Interval::below(3.0));
        assert_eq!(
            paths[1].1.conditions[0].interval,
            Interval { lo: 3.0, hi: 5.0 }
        );
    }

    #[test]
    fn unreachable_leaf_is_dropped() {
        // f0 < 3 then f0 >= 5 is empty
        let t = Tree::from_spec(&NodeSpec::split(
            0,
            3.0,
            NodeSpec::split(0, 5.0, NodeSpec::leaf(1.0), NodeSpec::leaf(99.0)),
            NodeSpec::leaf(3.0),
        ));
        let m = TreeEnsemble::with_num_features(vec![t], 0.0, 1).unwrap();
        let paths = m.extract_paths();
        assert_eq!(paths.len(), 2);
        assert!(paths.iter().all(|(_, p)| p.leaf_value != 99.0));
    }

    #[test]
    fn thresholds_are_sorted_and_distinct() {
        let t = Tree::from_spec(&NodeSpec::split(
            0,
            5.0,
            NodeSpec::split(0, 3.0, NodeSpec::leaf(1.0), NodeSpec::leaf(2.0)),
            NodeSpec::split(0, 5.0, NodeSpec::leaf(1.0), NodeSpec::leaf(2.0)),
        ));
        let m = TreeEnsemble::with_num_features(vec![t], 0.0, 2).unwrap();
        assert_eq!(m.thresholds(), vec![vec![3.0, 5.0], vec![]]);
    }
}
