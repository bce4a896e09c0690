//! Seeded synthetic datasets and tree ensembles for tests and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::model::{NodeSpec, Tree, TreeEnsemble};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

/// Random table. Even columns are small integers (so values tie with each
/// other and with thresholds), odd columns are continuous in `[-2, 2)`.
pub fn random_dataset<R: Rng>(rng: &mut R, n_rows: usize, n_features: usize) -> Dataset {
    let columns = (0..n_features)
        .map(|j| {
            (0..n_rows)
                .map(|_| {
                    if j % 2 == 0 {
                        rng.gen_range(0..5) as f64
                    } else {
                        (rng.gen_range(-2.0..2.0f64) * 1000.0).round() / 1000.0
                    }
                })
                .collect()
        })
        .collect();
    Dataset::from_columns(names(n_features), columns).expect("valid synthetic data")
}

/// Continuous uniform `[0, 1)` table.
pub fn uniform_dataset<R: Rng>(rng: &mut R, n_rows: usize, n_features: usize) -> Dataset {
    let columns = (0..n_features)
        .map(|_| (0..n_rows).map(|_| rng.gen::<f64>()).collect())
        .collect();
    Dataset::from_columns(names(n_features), columns).expect("valid synthetic data")
}

fn grow<R: Rng>(
    rng: &mut R,
    data: &Dataset,
    rows: &[usize],
    depth_left: usize,
    features: &[usize],
) -> NodeSpec {
    let leaf = |rng: &mut R| {
        NodeSpec::leaf((rng.gen_range(-1.0..1.0f64) * 1000.0).round() / 1000.0)
            .with_cover(rows.len() as f64)
    };
    if depth_left == 0 || rows.len() < 2 || rng.gen_bool(0.1) {
        return leaf(rng);
    }
    let mut order = features.to_vec();
    order.shuffle(rng);
    for f in order {
        let col = data.column(f);
        let mut vals: Vec<f64> = rows.iter().map(|&r| col[r]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        if vals.len() < 2 {
            continue;
        }
        // a threshold equal to a data value above the minimum keeps both sides non-empty
        let threshold = vals[rng.gen_range(1..vals.len())];
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] < threshold);
        let yes = grow(rng, data, &l, depth_left - 1, features);
        let no = grow(rng, data, &r, depth_left - 1, features);
        return NodeSpec::split(f, threshold, yes, no).with_cover(rows.len() as f64);
    }
    leaf(rng)
}

/// An ensemble fitted to nothing but shaped like a trained one: every split
/// separates the training rows reaching it, covers are row counts, and no
/// leaf is unreachable.
pub fn random_ensemble<R: Rng>(
    rng: &mut R,
    train: &Dataset,
    n_trees: usize,
    max_depth: usize,
) -> TreeEnsemble {
    let rows: Vec<usize> = (0..train.n_rows()).collect();
    let features: Vec<usize> = (0..train.n_cols()).collect();
    let trees = (0..n_trees)
        .map(|_| Tree::from_spec(&grow(rng, train, &rows, max_depth, &features)))
        .collect();
    let base = (rng.gen_range(-1.0..1.0f64) * 100.0).round() / 100.0;
    TreeEnsemble::new(trees, base, train.names().to_vec()).expect("valid synthetic model")
}

fn grow_full<R: Rng>(rng: &mut R, depth_left: usize, bounds: &mut [(f64, f64)]) -> NodeSpec {
    if depth_left == 0 {
        return NodeSpec::leaf(rng.gen_range(-1.0..1.0));
    }
    let f = rng.gen_range(0..bounds.len());
    let (lo, hi) = bounds[f];
    let t = lo + (hi - lo) * rng.gen_range(0.2..0.8);
    bounds[f] = (lo, t);
    let yes = grow_full(rng, depth_left - 1, bounds);
    bounds[f] = (t, hi);
    let no = grow_full(rng, depth_left - 1, bounds);
    bounds[f] = (lo, hi);
    NodeSpec::split(f, t, yes, no)
}

/// Complete binary trees of exactly `depth` levels over features in `[0, 1)`.
/// Thresholds stay inside the interval already implied by the path, so every
/// one of the `2^depth` leaves is reachable.
pub fn full_depth_ensemble<R: Rng>(
    rng: &mut R,
    n_features: usize,
    n_trees: usize,
    depth: usize,
) -> TreeEnsemble {
    let trees = (0..n_trees)
        .map(|_| {
            let mut bounds = vec![(0.0, 1.0); n_features];
            Tree::from_spec(&grow_full(rng, depth, &mut bounds))
        })
        .collect();
    TreeEnsemble::with_num_features(trees, 0.0, n_features).expect("valid synthetic model")
}

/// One feature split at `n` distinct thresholds `1, 2, ..., n` by `n` stumps;
/// the prediction counts the thresholds at or below `x`, so the dependence
/// steps up at every threshold.
pub fn ladder_fixture(n: usize) -> TreeEnsemble {
    let trees = (1..=n)
        .map(|i| {
            Tree::from_spec(&NodeSpec::split(
                0,
                i as f64,
                NodeSpec::leaf(0.0).with_cover((i * 10) as f64),
                NodeSpec::leaf(1.0).with_cover(((n + 1 - i) * 10) as f64),
            ))
        })
        .collect();
    TreeEnsemble::new(trees, 0.0, vec!["x".into()]).expect("valid ladder")
}

/// A salary-like feature whose effect is concentrated on one default value:
/// rows with exactly 60000 get a large bump. Returns the model and a
/// background spread over `[20000, 120000]` with many rows at the default.
pub fn spike_fixture() -> (TreeEnsemble, Dataset) {
    let spike = NodeSpec::split(
        0,
        60000.0,
        NodeSpec::leaf(0.0).with_cover(40.0),
        NodeSpec::split(
            0,
            60000.5,
            NodeSpec::leaf(5.0).with_cover(20.0),
            NodeSpec::leaf(0.0).with_cover(40.0),
        )
        .with_cover(60.0),
    )
    .with_cover(100.0);
    let trend = NodeSpec::split(
        0,
        80000.0,
        NodeSpec::leaf(-0.5).with_cover(70.0),
        NodeSpec::leaf(0.5).with_cover(30.0),
    )
    .with_cover(100.0);
    let model = TreeEnsemble::new(
        vec![Tree::from_spec(&spike), Tree::from_spec(&trend)],
        0.0,
        vec!["salary".into()],
    )
    .expect("valid spike model");
    let mut values: Vec<f64> = (0..80).map(|i| 20000.0 + 1250.0 * i as f64).collect();
    values.retain(|&v| v != 60000.0);
    values.truncate(80);
    values.extend(std::iter::repeat_n(60000.0, 20));
    values.push(120000.0);
    let background = Dataset::from_columns(vec!["salary".into()], vec![values]).expect("valid");
    (model, background)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_generation_is_reproducible() {
        let d1 = random_dataset(&mut rng(3), 20, 4);
        let d2 = random_dataset(&mut rng(3), 20, 4);
        assert_eq!(d1, d2);
        let m1 = random_ensemble(&mut rng(4), &d1, 3, 3);
        let m2 = random_ensemble(&mut rng(4), &d1, 3, 3);
        assert_eq!(m1, m2);
        assert!(m1.max_depth() <= 3);
    }

    #[test]
    fn full_depth_trees_have_every_leaf() {
        let m = full_depth_ensemble(&mut rng(1), 3, 4, 5);
        for t in m.trees() {
            assert_eq!(t.num_leaves(), 32);
        }
        assert_eq!(m.extract_paths().len(), 4 * 32);
    }

    #[test]
    fn ladder_has_n_thresholds() {
        let m = ladder_fixture(66);
        assert_eq!(m.thresholds()[0].len(), 66);
        assert_eq!(m.predict(&[10.0]).unwrap(), 10.0);
    }

    #[test]
    fn spike_is_narrow() {
        let (m, _) = spike_fixture();
        assert_eq!(
            m.predict(&[60000.0]).unwrap() - m.predict(&[59999.0]).unwrap(),
            5.0
        );
        assert_eq!(
            m.predict(&[60001.0]).unwrap(),
            m.predict(&[59999.0]).unwrap()
        );
    }
}
