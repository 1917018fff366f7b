//! Random survival forest: bootstrap trees split on the log-rank statistic,
//! Nelson-Aalen leaves, ensemble cumulative hazard.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Condition;
use crate::error::{Error, Result};

use super::km::{cumulative_hazard, weighted_risk_table};
use super::{unique_sorted, Interpolation, SurvivalCurve, SurvivalData};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsfConfig {
    pub n_trees: usize,
    pub min_split: usize,
    pub min_leaf: usize,
    pub max_depth: usize,
    /// Candidate thresholds per feature and node.
    pub max_thresholds: usize,
    /// Features tried per node; `None` means `floor(sqrt(d))`.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for RsfConfig {
    fn default() -> Self {
        Self::for_condition(Condition::C1, 0)
    }
}

impl RsfConfig {
    /// Fixed hyperparameter set per operating condition.
    pub fn for_condition(condition: Condition, seed: u64) -> Self {
        let (n_trees, min_split, min_leaf, max_depth) = match condition {
            Condition::C1 => (100, 5, 3, 3),
            Condition::C2 => (200, 10, 5, 5),
            Condition::C3 => (400, 20, 10, 10),
        };
        Self {
            n_trees,
            min_split,
            min_leaf,
            max_depth,
            max_thresholds: 32,
            mtry: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be positive".into()));
        }
        if self.min_leaf == 0 || self.max_thresholds == 0 {
            return Err(Error::InvalidArgument("min_leaf and max_thresholds must be positive".into()));
        }
        if self.mtry == Some(0) {
            return Err(Error::InvalidArgument("mtry must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Nelson-Aalen cumulative hazard at the node's event times.
    Leaf {
        times: Vec<f64>,
        cumhaz: Vec<f64>,
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Arena; the root is node 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_for(&self, x: &[f64]) -> &Node {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                leaf => return leaf,
            }
        }
    }

    /// Cumulative hazard of `x`'s leaf on `grid`.
    fn cumhaz_on(&self, x: &[f64], grid: &[f64], out: &mut [f64]) {
        if let Node::Leaf { times, cumhaz, .. } = self.leaf_for(x) {
            let mut j = 0;
            let mut h = 0.0;
            for (o, &t) in out.iter_mut().zip(grid) {
                while j < times.len() && times[j] <= t {
                    h = cumhaz[j];
                    j += 1;
                }
                *o += h;
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_sizes(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { size, .. } => Some(*size),
                Node::Split { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsfModel {
    pub config: RsfConfig,
    pub n_features: usize,
    /// Unique training times; prediction grid.
    pub grid: Vec<f64>,
    pub trees: Vec<Tree>,
    /// Bootstrap multiplicity of each training record per tree; not persisted.
    #[serde(skip)]
    pub in_bag: Vec<Vec<u32>>,
}

struct Builder<'a> {
    data: &'a SurvivalData,
    config: &'a RsfConfig,
    mtry: usize,
}

impl Builder<'_> {
    fn leaf(&self, samples: &[usize]) -> Node {
        let times: Vec<f64> = samples.iter().map(|&i| self.data.times[i]).collect();
        let events: Vec<bool> = samples.iter().map(|&i| self.data.events[i]).collect();
        let table = weighted_risk_table(&times, &events, None).expect("non-empty node");
        let (times, cumhaz) = cumulative_hazard(&table);
        Node::Leaf {
            times,
            cumhaz,
            size: samples.len(),
        }
    }

    fn grow(&self, samples: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let has_event = samples.iter().any(|&i| self.data.events[i]);
        let split = if depth < self.config.max_depth
            && samples.len() >= self.config.min_split
            && samples.len() >= 2 * self.config.min_leaf
            && has_event
        {
            self.best_split(&samples, rng)
        } else {
            None
        };
        let Some((feature, threshold)) = split else {
            nodes.push(self.leaf(&samples));
            return id;
        };
        nodes.push(Node::Leaf {
            times: Vec::new(),
            cumhaz: Vec::new(),
            size: 0,
        });
        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| self.data.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1, rng, nodes);
        let right = self.grow(r, depth + 1, rng, nodes);
        nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, samples: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let d = self.data.dim();
        // node records ordered by time, for the log-rank sweep
        let mut by_time = samples.to_vec();
        by_time.sort_by(|&a, &b| self.data.times[a].total_cmp(&self.data.times[b]));

        let mut best: Option<(f64, usize, f64)> = None;
        let features = sample(rng, d, self.mtry.min(d));
        for feature in features.into_iter() {
            let values = unique_sorted(&samples.iter().map(|&i| self.data.x[i][feature]).collect::<Vec<_>>());
            if values.len() < 2 {
                continue;
            }
            let mut candidates: Vec<f64> = values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            if candidates.len() > self.config.max_thresholds {
                let mut picked = sample(rng, candidates.len(), self.config.max_thresholds).into_vec();
                picked.sort_unstable();
                candidates = picked.into_iter().map(|k| candidates[k]).collect();
            }
            for threshold in candidates {
                let n_left = samples
                    .iter()
                    .filter(|&&i| self.data.x[i][feature] <= threshold)
                    .count();
                if n_left < self.config.min_leaf || samples.len() - n_left < self.config.min_leaf {
                    continue;
                }
                let stat = log_rank(self.data, &by_time, |i| self.data.x[i][feature] <= threshold);
                if stat.is_finite() && best.is_none_or(|(s, _, _)| stat > s) {
                    best = Some((stat, feature, threshold));
                }
            }
        }
        best.filter(|(s, _, _)| *s > 0.0).map(|(_, f, t)| (f, t))
    }
}

/// Standardized two-sample log-rank statistic `|O - E| / sqrt(V)` for the left group.
/// `by_time` must be sorted by observed time.
pub(crate) fn log_rank(data: &SurvivalData, by_time: &[usize], is_left: impl Fn(usize) -> bool) -> f64 {
    let n = by_time.len() as f64;
    let n_left_total = by_time.iter().filter(|&&i| is_left(i)).count() as f64;
    let (mut at_risk, mut at_risk_left) = (n, n_left_total);
    let (mut num, mut var) = (0.0, 0.0);
    let mut k = 0;
    while k < by_time.len() {
        let t = data.times[by_time[k]];
        let (mut deaths, mut deaths_left, mut leaving, mut leaving_left) = (0.0, 0.0, 0.0, 0.0);
        while k < by_time.len() && data.times[by_time[k]] == t {
            let i = by_time[k];
            let left = is_left(i);
            leaving += 1.0;
            if left {
                leaving_left += 1.0;
            }
            if data.events[i] {
                deaths += 1.0;
                if left {
                    deaths_left += 1.0;
                }
            }
            k += 1;
        }
        if deaths > 0.0 {
            let frac = at_risk_left / at_risk;
            num += deaths_left - deaths * frac;
            if at_risk > 1.0 {
                var += deaths * frac * (1.0 - frac) * (at_risk - deaths) / (at_risk - 1.0);
            }
        }
        at_risk -= leaving;
        at_risk_left -= leaving_left;
    }
    if var <= 0.0 {
        return 0.0;
    }
    num.abs() / var.sqrt()
}

pub fn rsf_fit(data: &SurvivalData, config: &RsfConfig) -> Result<RsfModel> {
    data.validate()?;
    config.validate()?;
    if data.n_events() == 0 {
        return Err(Error::NoEvents("random survival forest needs at least one event".into()));
    }
    if data.len() < config.min_split {
        return Err(Error::InvalidArgument(format!(
            "random survival forest needs at least min_split = {} records, got {}",
            config.min_split,
            data.len()
        )));
    }
    let n = data.len();
    let d = data.dim();
    let mtry = config.mtry.unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1));
    let builder = Builder { data, config, mtry };

    let built: Vec<(Tree, Vec<u32>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let mut counts = vec![0u32; n];
            let mut samples: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            samples.sort_unstable();
            for &i in &samples {
                counts[i] += 1;
            }
            let mut nodes = Vec::new();
            builder.grow(samples, 0, &mut rng, &mut nodes);
            (Tree { nodes }, counts)
        })
        .collect();
    let (trees, in_bag) = built.into_iter().unzip();

    Ok(RsfModel {
        config: *config,
        n_features: d,
        grid: unique_sorted(&data.times),
        trees,
        in_bag,
    })
}

fn check_dim(model: &RsfModel, x: &[f64]) -> Result<()> {
    if x.len() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            got: x.len(),
        });
    }
    Ok(())
}

fn curve_from_cumhaz(grid: &[f64], total: Vec<f64>, n_trees: usize) -> Result<SurvivalCurve> {
    let probs = total.into_iter().map(|h| (-h / n_trees as f64).exp()).collect();
    SurvivalCurve::from_raw(grid.to_vec(), probs, Interpolation::Linear)
}

/// `exp(-mean cumulative hazard)` over all trees, on the training grid.
pub fn rsf_predict(model: &RsfModel, x: &[f64]) -> Result<SurvivalCurve> {
    check_dim(model, x)?;
    let mut total = vec![0.0; model.grid.len()];
    for tree in &model.trees {
        tree.cumhaz_on(x, &model.grid, &mut total);
    }
    curve_from_cumhaz(&model.grid, total, model.trees.len())
}

/// Out-of-bag curves for the training records the model was fitted on.
/// Records that are in-bag for every tree fall back to the full ensemble.
pub fn rsf_predict_oob(model: &RsfModel, train_x: &[Vec<f64>]) -> Result<Vec<SurvivalCurve>> {
    if model.in_bag.len() != model.trees.len() {
        return Err(Error::InvalidArgument(
            "out-of-bag prediction needs the in-bag counts of a freshly fitted model".into(),
        ));
    }
    let n = model.in_bag.first().map_or(0, Vec::len);
    if train_x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: train_x.len(),
        });
    }
    train_x
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            check_dim(model, x)?;
            let mut total = vec![0.0; model.grid.len()];
            let mut used = 0;
            for (tree, counts) in model.trees.iter().zip(&model.in_bag) {
                if counts[i] == 0 {
                    tree.cumhaz_on(x, &model.grid, &mut total);
                    used += 1;
                }
            }
            if used == 0 {
                return rsf_predict(model, x);
            }
            curve_from_cumhaz(&model.grid, total, used)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_groups() -> SurvivalData {
        let mut x = Vec::new();
        let mut t = Vec::new();
        for i in 0..20 {
            x.push(vec![0.0, (i % 7) as f64]);
            t.push(10.0 + i as f64 * 0.5);
            x.push(vec![1.0, (i % 5) as f64]);
            t.push(50.0 + i as f64 * 0.5);
        }
        let e = vec![true; t.len()];
        SurvivalData::new(x, t, e).unwrap()
    }

    #[test]
    fn separating_feature_orders_medians() {
        let data = two_groups();
        let cfg = RsfConfig {
            mtry: Some(2),
            ..RsfConfig::default()
        };
        let m = rsf_fit(&data, &cfg).unwrap();
        let a = rsf_predict(&m, &[0.0, 3.0]).unwrap();
        let b = rsf_predict(&m, &[1.0, 3.0]).unwrap();
        assert!(a.median_time() < b.median_time());
    }

    #[test]
    fn deterministic_under_seed() {
        let data = two_groups();
        let cfg = RsfConfig::default();
        let a = rsf_fit(&data, &cfg).unwrap();
        let b = rsf_fit(&data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.in_bag, b.in_bag);
    }

    #[test]
    fn structural_limits() {
        let data = two_groups();
        let cfg = RsfConfig::for_condition(Condition::C2, 3);
        let m = rsf_fit(&data, &cfg).unwrap();
        for tree in &m.trees {
            assert!(tree.depth() <= cfg.max_depth);
            assert!(tree.leaf_sizes().iter().all(|&s| s >= cfg.min_leaf));
        }
    }

    #[test]
    fn log_rank_of_identical_groups_is_zero() {
        let data = SurvivalData::new(
            vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]],
            vec![1.0, 1.0, 2.0, 2.0],
            vec![true; 4],
        )
        .unwrap();
        let order = [0, 1, 2, 3];
        assert_eq!(log_rank(&data, &order, |i| data.x[i][0] == 0.0), 0.0);
    }

    #[test]
    fn too_few_records() {
        let data = SurvivalData::new(vec![vec![0.0]; 3], vec![1.0, 2.0, 3.0], vec![true; 3]).unwrap();
        assert!(rsf_fit(&data, &RsfConfig::default()).is_err());
    }
}
