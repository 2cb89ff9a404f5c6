//! Exhaustive-search reference for the tree learner, shared with the acceptance suite.

use proptest::prelude::*;
use steamflood_core::gbt::{train, GbtModel, GbtParams, TreeNode};
use steamflood_core::DenseMatrix;

/// Independent reference: the tree that exhaustive split search would build.
#[derive(Debug)]
pub enum Expected {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: Box<Expected>,
        right: Box<Expected>,
    },
}

pub fn oracle_tree(rows: &[Vec<f64>], grad: &[f64], members: &[usize], depth: usize, p: &GbtParams) -> Expected {
    let g: f64 = members.iter().map(|&r| grad[r]).sum();
    let h = members.len() as f64;
    let leaf = Expected::Leaf(-g / (h + p.lambda));
    if depth == p.max_depth {
        return leaf;
    }
    let score = |g: f64, h: f64| g * g / (h + p.lambda);
    // Every admissible candidate in (feature, threshold) order.
    let mut cands: Vec<(f64, usize, f64)> = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for f in 0..rows[0].len() {
        let mut values: Vec<f64> = members.iter().map(|&r| rows[r][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let thr = w[0] + (w[1] - w[0]) / 2.0;
            let (mut gl, mut hl) = (0.0, 0.0);
            for &r in members {
                if rows[r][f] < thr {
                    gl += grad[r];
                    hl += 1.0;
                }
            }
            let (gr, hr) = (g - gl, h - hl);
            if hl < p.min_child_weight || hr < p.min_child_weight {
                continue;
            }
            let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(g, h)) - p.gamma;
            if gain > 0.0 {
                cands.push((gain, f, thr));
            }
        }
    }
    // Highest gain; numerically tied candidates go to the earliest.
    let top = cands.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let best = cands
        .into_iter()
        .find(|c| top - c.0 <= 1e-9 * (score(g, h) + top.abs()));
    match best {
        None => leaf,
        Some((gain, feature, threshold)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&r| rows[r][feature] < threshold);
            Expected::Split {
                feature,
                threshold,
                gain,
                left: Box::new(oracle_tree(rows, grad, &l, depth + 1, p)),
                right: Box::new(oracle_tree(rows, grad, &r, depth + 1, p)),
            }
        }
    }
}

pub fn assert_matches(got: &TreeNode, want: &Expected, tol: f64) -> Result<(), TestCaseError> {
    match (got, want) {
        (TreeNode::Leaf { weight }, Expected::Leaf(w)) => {
            prop_assert!((weight - w).abs() <= tol, "leaf {} vs oracle {}", weight, w);
        }
        (
            TreeNode::Split {
                feature,
                threshold,
                gain,
                left,
                right,
            },
            Expected::Split {
                feature: f,
                threshold: t,
                gain: gn,
                left: l,
                right: r,
            },
        ) => {
            prop_assert_eq!(feature, f);
            prop_assert!((threshold - t).abs() <= tol, "threshold {} vs {}", threshold, t);
            prop_assert!((gain - gn).abs() <= tol * gn.abs().max(1.0), "gain {} vs {}", gain, gn);
            assert_matches(left, l, tol)?;
            assert_matches(right, r, tol)?;
        }
        _ => prop_assert!(false, "tree shape differs: {:?} vs {:?}", got, want),
    }
    Ok(())
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

pub fn mean(y: &[f64]) -> f64 {
    if y.iter().all(|v| *v == y[0]) {
        y[0]
    } else {
        y.iter().sum::<f64>() / y.len() as f64
    }
}

/// Small datasets with repeated values so ties and duplicates show up.
pub fn dataset() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..=32, 1usize..=4).prop_flat_map(|(n, f)| {
        (
            prop::collection::vec(prop::collection::vec((0i32..6).prop_map(|v| v as f64 * 0.5), f), n),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    })
}

pub fn params() -> impl Strategy<Value = GbtParams> {
    (1usize..=3, prop::sample::select(vec![0.0, 0.5, 1.0, 3.0]), prop::sample::select(vec![0.0, 0.1]), 0.0f64..=2.0).prop_map(
        |(max_depth, lambda, gamma, min_child_weight)| GbtParams {
            n_trees: 1,
            max_depth,
            learning_rate: 0.3,
            lambda,
            gamma,
            min_child_weight,
            subsample: 1.0,
            seed: 0,
        },
    )
}

pub fn rmse(model: &GbtModel, rows: &[Vec<f64>], y: &[f64], n_trees: usize) -> f64 {
    let sse: f64 = rows
        .iter()
        .zip(y)
        .map(|(r, y)| {
            let pred = model.base_score + model.params.learning_rate * model.tree_sum(r, 0..n_trees);
            (pred - y).powi(2)
        })
        .sum();
    (sse / y.len() as f64).sqrt()
}

pub fn pseudo_random_data(n: usize, f: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    // Simple LCG keeps this independent of the crate's RNG choices.
    let mut state: u64 = 0x2545F4914F6CDD1D;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..f).map(|_| (next() * 50.0).round()).collect()).collect();
    let y = rows.iter().map(|r| r[0] * 0.3 - r[1] + 2.0 * next()).collect();
    (rows, y)
}

/// First tree of a one-tree fit equals the exhaustive-search tree (tolerance 1e-9).
pub fn first_tree_case(rows: &[Vec<f64>], y: &[f64], p: &GbtParams) -> Result<(), TestCaseError> {
    // An all-equal target has no gradient and nothing to check.
    if p.lambda == 0.0 && y.iter().all(|v| *v == y[0]) {
        return Ok(());
    }
    let model = train(&DenseMatrix::from_rows(rows), y, &names(rows[0].len()), p).unwrap();
    let base = mean(y);
    prop_assert_eq!(model.base_score, base);
    let grad: Vec<f64> = y.iter().map(|v| base - v).collect();
    let members: Vec<usize> = (0..rows.len()).collect();
    let want = oracle_tree(rows, &grad, &members, 0, p);
    assert_matches(&model.trees[0], &want, 1e-9)
}

/// Training RMSE after each tree never increases when subsample = 1.
pub fn monotone_loss_case(rows: &[Vec<f64>], y: &[f64], p: &GbtParams) -> Result<(), TestCaseError> {
    let model = train(&DenseMatrix::from_rows(rows), y, &names(rows[0].len()), p).unwrap();
    let mut prev = rmse(&model, rows, y, 0);
    for m in 1..=model.trees.len() {
        let cur = rmse(&model, rows, y, m);
        prop_assert!(cur <= prev + 1e-12 * prev.max(1.0), "rmse rose from {} to {} at tree {}", prev, cur, m);
        prev = cur;
    }
    Ok(())
}

/// Serialized model for a fixed seed under several rayon pool sizes.
pub fn models_by_thread_count(threads: &[usize]) -> Vec<String> {
    let (rows, y) = pseudo_random_data(600, 12);
    let x = DenseMatrix::from_rows(&rows);
    let p = GbtParams {
        n_trees: 40,
        max_depth: 4,
        subsample: 0.8,
        seed: 11,
        ..GbtParams::default()
    };
    threads
        .iter()
        .map(|&n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| train(&x, &y, &names(12), &p).unwrap().to_json())
        })
        .collect()
}
