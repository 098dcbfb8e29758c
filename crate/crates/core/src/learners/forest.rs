//! Random forest of CART trees grown on bootstrap samples with Gini impurity.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::argmax;
use crate::error::{MpecError, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub trees: usize,
    /// `None` grows every tree until its leaves are pure.
    pub max_depth: Option<usize>,
    /// Candidate features per split; `None` means `⌊√d⌋` (at least 1).
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 100,
            max_depth: None,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.features_per_split == Some(0) {
            return Err(MpecError::InvalidConfig(
                "forest.trees and forest.features_per_split must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class } => return *class,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<Tree>,
}

impl ForestModel {
    /// Fraction of trees voting for each class.
    pub fn votes(&self, row: &[f64], class_count: usize) -> Vec<f64> {
        let mut v = vec![0.0; class_count];
        for t in &self.trees {
            v[t.predict(row)] += 1.0;
        }
        let n = self.trees.len() as f64;
        v.iter_mut().for_each(|c| *c /= n);
        v
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}

pub(super) fn fit(
    x: &[Vec<f64>],
    y: &[usize],
    class_count: usize,
    p: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    let d = x[0].len();
    let per_split = p
        .features_per_split
        .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1))
        .min(d);
    let trees = (0..p.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::rng_for(seed, &[t as u64]);
            let sample: Vec<usize> = if p.bootstrap {
                (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect()
            } else {
                (0..x.len()).collect()
            };
            let mut builder = Builder {
                x,
                y,
                class_count,
                per_split,
                max_depth: p.max_depth,
                nodes: Vec::new(),
                rng,
            };
            builder.grow(sample, 0);
            Tree { nodes: builder.nodes }
        })
        .collect();
    Ok(ForestModel { trees })
}

struct Builder<'a, R> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    class_count: usize,
    per_split: usize,
    max_depth: Option<usize>,
    nodes: Vec<Node>,
    rng: R,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

impl<R: Rng> Builder<'_, R> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.class_count];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let at = self.nodes.len();
        let counts = self.counts(&idx);
        let majority = argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
        self.nodes.push(Node::Leaf { class: majority });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || idx.len() < 2 || self.max_depth.is_some_and(|m| depth >= m) {
            return at;
        }
        let Some(split) = self.best_split(&idx) else {
            return at;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        at
    }

    /// Best Gini split over a random subset of features; when none of them
    /// can separate the node the remaining features are tried in turn.
    fn best_split(&mut self, idx: &[usize]) -> Option<Candidate> {
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(&mut self.rng);
        let mut subset = features[..self.per_split].to_vec();
        subset.sort_unstable();
        let mut best: Option<Candidate> = None;
        for &f in &subset {
            self.consider(idx, f, &mut best);
        }
        for &f in &features[self.per_split..] {
            if best.is_some() {
                break;
            }
            self.consider(idx, f, &mut best);
        }
        best
    }

    fn consider(&self, idx: &[usize], feature: usize, best: &mut Option<Candidate>) {
        let mut sorted: Vec<usize> = idx.to_vec();
        sorted.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
        let total = sorted.len();
        let mut left = vec![0usize; self.class_count];
        let mut right = self.counts(idx);
        for pos in 0..total - 1 {
            let c = self.y[sorted[pos]];
            left[c] += 1;
            right[c] -= 1;
            let here = self.x[sorted[pos]][feature];
            let next = self.x[sorted[pos + 1]][feature];
            if here == next {
                continue;
            }
            let nl = pos + 1;
            let nr = total - nl;
            let impurity = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / total as f64;
            if best.as_ref().map_or(true, |b| impurity < b.impurity) {
                let mut threshold = 0.5 * (here + next);
                if threshold >= next {
                    threshold = here;
                }
                *best = Some(Candidate {
                    feature,
                    threshold,
                    impurity,
                });
            }
        }
    }
}
