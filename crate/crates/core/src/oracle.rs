//! Brute-force reference values: partial dependence by overriding rows of the
//! background and re-predicting, and interaction values by inclusion-exclusion.
//! Slow by design; used by tests and `--verify`.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{Node, Tree, TreeEnsemble};

/// Features fixed to given values.
#[derive(Debug, Clone, PartialEq)]
pub struct Coalition {
    features: Vec<usize>,
    values: Vec<f64>,
}

impl Coalition {
    pub fn new(features: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if features.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} features but {} values",
                features.len(),
                values.len()
            )));
        }
        let mut sorted = features.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "duplicate feature in coalition".into(),
            ));
        }
        Ok(Coalition { features, values })
    }

    pub fn empty() -> Self {
        Coalition {
            features: Vec::new(),
            values: Vec::new(),
        }
    }

    /// The features in `features` fixed to their values in `row`.
    pub fn from_row(features: &[usize], row: &[f64]) -> Result<Self> {
        Self::new(
            features.to_vec(),
            features.iter().map(|&f| row[f]).collect(),
        )
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    fn subset(&self, mask: usize) -> Coalition {
        let pick = |i: &usize| mask >> i & 1 == 1;
        Coalition {
            features: (0..self.len())
                .filter(pick)
                .map(|i| self.features[i])
                .collect(),
            values: (0..self.len())
                .filter(pick)
                .map(|i| self.values[i])
                .collect(),
        }
    }
}

/// Average prediction over `background` with the coalition's features
/// overridden.
pub fn oracle_pdv(
    model: &TreeEnsemble,
    background: &Dataset,
    coalition: &Coalition,
) -> Result<f64> {
    if background.is_empty() {
        return Err(Error::InvalidArgument(
            "oracle needs a non-empty background".into(),
        ));
    }
    if let Some(&f) = coalition
        .features
        .iter()
        .find(|&&f| f >= background.n_cols())
    {
        return Err(Error::InvalidArgument(format!(
            "coalition feature {f} is not a background column"
        )));
    }
    let mut sum = 0.0;
    for mut row in background.rows() {
        for (&f, &v) in coalition.features.iter().zip(&coalition.values) {
            row[f] = v;
        }
        sum += model.predict(&row)?;
    }
    Ok(sum / background.n_rows() as f64)
}

fn inclusion_exclusion(
    coalition: &Coalition,
    mut pdv: impl FnMut(&Coalition) -> Result<f64>,
) -> Result<f64> {
    let h = coalition.len();
    if h > 20 {
        return Err(Error::InvalidArgument(
            "interaction oracle limited to 20 features".into(),
        ));
    }
    let mut total = 0.0;
    for mask in 0..1usize << h {
        let sign = if (h - mask.count_ones() as usize).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        total += sign * pdv(&coalition.subset(mask))?;
    }
    Ok(total)
}

/// `Σ_{S ⊆ F} (-1)^{|F| - |S|} PDV_S`.
pub fn oracle_pdiv(
    model: &TreeEnsemble,
    background: &Dataset,
    coalition: &Coalition,
) -> Result<f64> {
    inclusion_exclusion(coalition, |s| oracle_pdv(model, background, s))
}

fn pathdep_tree(tree: &Tree, idx: usize, coalition: &Coalition) -> Result<f64> {
    match tree.node(idx) {
        Node::Leaf { value, .. } => Ok(*value),
        Node::Split {
            id,
            feature,
            threshold,
            left,
            right,
            cover,
        } => {
            if let Some(i) = coalition.features.iter().position(|f| f == feature) {
                let next = if coalition.values[i] < *threshold {
                    *left
                } else {
                    *right
                };
                return pathdep_tree(tree, next, coalition);
            }
            let degenerate = |m: &str| Error::DegenerateModel {
                tree: 0,
                node: *id,
                message: m.to_string(),
            };
            let parent = cover.ok_or_else(|| degenerate("missing cover"))?;
            if parent <= 0.0 {
                return Err(degenerate("zero parent cover"));
            }
            let mut sum = 0.0;
            for child in [*left, *right] {
                let c = tree
                    .node(child)
                    .cover()
                    .ok_or_else(|| degenerate("missing child cover"))?;
                sum += c / parent * pathdep_tree(tree, child, coalition)?;
            }
            Ok(sum)
        }
    }
}

/// Path-dependent partial dependence: at splits on features outside the
/// coalition both branches are followed, weighted by their training covers.
pub fn oracle_pdv_pathdep(model: &TreeEnsemble, coalition: &Coalition) -> Result<f64> {
    let mut sum = model.base_score();
    for tree in model.trees() {
        sum += pathdep_tree(tree, 0, coalition)?;
    }
    Ok(sum)
}

pub fn oracle_pdiv_pathdep(model: &TreeEnsemble, coalition: &Coalition) -> Result<f64> {
    inclusion_exclusion(coalition, |s| oracle_pdv_pathdep(model, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NodeSpec;
    use crate::tasks::mean_prediction;

    fn toy() -> TreeEnsemble {
        let t = Tree::from_spec(&NodeSpec::split(
            0,
            0.5,
            NodeSpec::leaf(0.0),
            NodeSpec::leaf(1.0),
        ));
        TreeEnsemble::with_num_features(vec![t], 0.0, 1).unwrap()
    }

    fn additive() -> (TreeEnsemble, Dataset) {
        let t0 = Tree::from_spec(&NodeSpec::split(
            0,
            0.5,
            NodeSpec::leaf(1.0),
            NodeSpec::leaf(3.0),
        ));
        let t1 = Tree::from_spec(&NodeSpec::split(
            1,
            0.5,
            NodeSpec::leaf(-2.0),
            NodeSpec::leaf(5.0),
        ));
        let m = TreeEnsemble::with_num_features(vec![t0, t1], 0.25, 3).unwrap();
        let b = Dataset::from_rows(
            vec!["f0".into(), "f1".into(), "f2".into()],
            &[
                vec![0.0, 0.0, 4.0],
                vec![1.0, 0.0, 2.0],
                vec![1.0, 1.0, 0.0],
            ],
        )
        .unwrap();
        (m, b)
    }

    #[test]
    fn toy_values() {
        let b = Dataset::from_columns(vec!["f0".into()], vec![vec![0.0, 1.0]]).unwrap();
        let m = toy();
        let c = Coalition::new(vec![0], vec![1.0]).unwrap();
        assert_eq!(oracle_pdv(&m, &b, &c).unwrap(), 1.0);
        assert_eq!(oracle_pdv(&m, &b, &Coalition::empty()).unwrap(), 0.5);
        assert_eq!(oracle_pdiv(&m, &b, &c).unwrap(), 0.5);
        assert_eq!(oracle_pdiv(&m, &b, &Coalition::empty()).unwrap(), 0.5);
    }

    #[test]
    fn additive_pairs_vanish() {
        let (m, b) = additive();
        let c = Coalition::new(vec![0, 1], vec![1.0, 0.0]).unwrap();
        assert!(oracle_pdiv(&m, &b, &c).unwrap().abs() < 1e-12);
        let null = Coalition::new(vec![0, 2], vec![1.0, 7.0]).unwrap();
        assert_eq!(oracle_pdiv(&m, &b, &null).unwrap(), 0.0);
    }

    #[test]
    fn permutation_invariant_and_telescoping() {
        let (m, b) = additive();
        let c1 = Coalition::new(vec![0, 1, 2], vec![1.0, 0.0, 3.0]).unwrap();
        let c2 = Coalition::new(vec![2, 0, 1], vec![3.0, 1.0, 0.0]).unwrap();
        assert_eq!(
            oracle_pdv(&m, &b, &c1).unwrap(),
            oracle_pdv(&m, &b, &c2).unwrap()
        );
        let mut sum = 0.0;
        for mask in 0..8 {
            sum += oracle_pdiv(&m, &b, &c1.subset(mask)).unwrap();
        }
        assert!((sum - oracle_pdv(&m, &b, &c1).unwrap()).abs() < 1e-12);
        assert_eq!(
            oracle_pdv(&m, &b, &Coalition::empty()).unwrap(),
            mean_prediction(&m, &b).unwrap()
        );
    }

    #[test]
    fn coalition_validation() {
        assert!(Coalition::new(vec![0, 0], vec![1.0, 2.0]).is_err());
        assert!(Coalition::new(vec![0], vec![]).is_err());
        let b = Dataset::empty(vec!["f0".into()]);
        assert!(oracle_pdv(&toy(), &b, &Coalition::empty()).is_err());
    }

    #[test]
    fn pathdep_stump() {
        let t = Tree::from_spec(
            &NodeSpec::split(
                0,
                0.5,
                NodeSpec::leaf(0.0).with_cover(3.0),
                NodeSpec::leaf(1.0).with_cover(1.0),
            )
            .with_cover(4.0),
        );
        let m = TreeEnsemble::with_num_features(vec![t], 0.0, 1).unwrap();
        assert_eq!(oracle_pdv_pathdep(&m, &Coalition::empty()).unwrap(), 0.25);
        let c = Coalition::new(vec![0], vec![2.0]).unwrap();
        assert_eq!(oracle_pdv_pathdep(&m, &c).unwrap(), 1.0);
        assert_eq!(oracle_pdiv_pathdep(&m, &c).unwrap(), 0.75);
    }
}
