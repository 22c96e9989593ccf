//! Random forest of CART trees (Gini impurity) with majority voting.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use super::codec::{Reader, Writer};
use crate::error::{LulcError, Result};
use crate::evaluate::stratified_folds;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, dim: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((dim as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => dim,
            MaxFeatures::Count(n) => n.clamp(1, dim),
        }
    }
}

impl fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxFeatures::Sqrt => f.write_str("sqrt"),
            MaxFeatures::All => f.write_str("all"),
            MaxFeatures::Count(n) => write!(f, "{n}"),
        }
    }
}

impl std::str::FromStr for MaxFeatures {
    type Err = LulcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "all" | "none" => Ok(MaxFeatures::All),
            n => n
                .parse()
                .map(MaxFeatures::Count)
                .map_err(|_| LulcError::Config(format!("bad max_features '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ForestParams {
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub n_estimators: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 1,
            min_samples_split: 2,
            n_estimators: 100,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(LulcError::Config("n_estimators must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 || self.min_samples_split < 2 {
            return Err(LulcError::Config(
                "min_samples_leaf >= 1 and min_samples_split >= 2 required".into(),
            ));
        }
        if self.max_depth == Some(0) {
            return Err(LulcError::Config("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_one(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Most frequent class; ties → lowest id.
pub fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

struct Grower<'a, R: Rng> {
    data: &'a [f64],
    dim: usize,
    labels: &'a [usize],
    n_classes: usize,
    params: &'a ForestParams,
    n_features: usize,
    rng: R,
    nodes: Vec<Node>,
    pairs: Vec<(f64, usize)>,
    features: Vec<usize>,
}

impl<R: Rng> Grower<'_, R> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.labels[i]] += 1;
        }
        c
    }

    /// Best split of `idx` as (feature, threshold), minimising the summed
    /// Gini impurity of the children.
    fn best_split(&mut self, idx: &[usize], parent: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let leaf = self.params.min_samples_leaf;
        let d = self.dim;
        for i in 0..self.n_features {
            let j = self.rng.random_range(i..d);
            self.features.swap(i, j);
        }
        let mut best: Option<(f64, usize, f64)> = None;
        let mut left = vec![0usize; self.n_classes];
        for fi in 0..self.n_features {
            let f = self.features[fi];
            self.pairs.clear();
            self.pairs
                .extend(idx.iter().map(|&i| (self.data[i * d + f], self.labels[i])));
            self.pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            left.iter_mut().for_each(|c| *c = 0);
            let mut left_sq = 0.0;
            let mut right_sq: f64 = parent.iter().map(|&c| (c * c) as f64).sum();
            let mut right = parent.to_vec();
            for k in 0..n - 1 {
                let y = self.pairs[k].1;
                left_sq += (2 * left[y] + 1) as f64;
                left[y] += 1;
                right_sq -= (2 * right[y] - 1) as f64;
                right[y] -= 1;
                let (nl, nr) = (k + 1, n - k - 1);
                if nl < leaf || nr < leaf || self.pairs[k].0 >= self.pairs[k + 1].0 {
                    continue;
                }
                // n_l*gini_l + n_r*gini_r = n - sum(l^2)/n_l - sum(r^2)/n_r
                let impurity = n as f64 - left_sq / nl as f64 - right_sq / nr as f64;
                if best.is_none_or(|b| impurity < b.0) {
                    let (a, b) = (self.pairs[k].0, self.pairs[k + 1].0);
                    let mut t = a + (b - a) / 2.0;
                    if t >= b {
                        t = a;
                    }
                    best = Some((impurity, f, t));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let counts = self.counts(idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: majority(&counts),
        });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_limited = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure
            || depth_limited
            || idx.len() < self.params.min_samples_split
            || idx.len() < 2 * self.params.min_samples_leaf
        {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(idx, &counts) else {
            return id;
        };
        let d = self.dim;
        let data = self.data;
        let mut split = 0;
        for k in 0..idx.len() {
            if data[idx[k] * d + feature] <= threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub params: ForestParams,
    pub dim: usize,
    pub n_classes: usize,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

/// Grows `n_estimators` trees, each on its own bootstrap drawn from a stream
/// keyed by the tree index.
pub fn forest_fit(data: &[f64], dim: usize, labels: &[usize], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    params.validate()?;
    if dim == 0 || data.len() != labels.len() * dim {
        return Err(LulcError::Shape(format!(
            "{} values for {} labels of dimension {dim}",
            data.len(),
            labels.len()
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let distinct = {
        let mut seen = vec![false; n_classes];
        labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(LulcError::DegenerateLabels(distinct));
    }
    let n = labels.len();
    let n_features = params.max_features.resolve(dim);
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed, &format!("forest/tree/{t}"));
            let mut idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut g = Grower {
                data,
                dim,
                labels,
                n_classes,
                params,
                n_features,
                rng,
                nodes: Vec::new(),
                pairs: Vec::with_capacity(n),
                features: (0..dim).collect(),
            };
            g.grow(&mut idx, 0);
            Tree { nodes: g.nodes }
        })
        .collect();
    Ok(ForestModel {
        params: params.clone(),
        dim,
        n_classes,
        seed,
        trees,
    })
}

impl ForestModel {
    /// One prediction per tree.
    pub fn votes(&self, x: &[f64]) -> Vec<usize> {
        self.trees.iter().map(|t| t.predict_one(x)).collect()
    }

    pub fn vote_counts(&self, x: &[f64]) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for v in self.votes(x) {
            counts[v] += 1;
        }
        counts
    }

    pub fn predict_one(&self, x: &[f64]) -> usize {
        majority(&self.vote_counts(x))
    }

    /// Vote shares per class.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let t = self.trees.len() as f64;
        self.vote_counts(x).into_iter().map(|c| c as f64 / t).collect()
    }

    fn check(&self, data: &[f64]) -> Result<()> {
        if data.len() % self.dim != 0 {
            return Err(LulcError::Shape(format!(
                "{} values do not form rows of {}",
                data.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Majority-vote predictions plus every tree's vote.
    pub fn predict_with_votes(&self, data: &[f64]) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
        self.check(data)?;
        let votes: Vec<Vec<usize>> = data.par_chunks_exact(self.dim).map(|x| self.votes(x)).collect();
        let preds = votes
            .iter()
            .map(|v| {
                let mut counts = vec![0; self.n_classes];
                v.iter().for_each(|&c| counts[c] += 1);
                majority(&counts)
            })
            .collect();
        Ok((preds, votes))
    }

    pub fn predict(&self, data: &[f64]) -> Result<Vec<usize>> {
        self.check(data)?;
        Ok(data.par_chunks_exact(self.dim).map(|x| self.predict_one(x)).collect())
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        let p = &self.params;
        w.usize(p.max_depth.map_or(0, |d| d));
        match p.max_features {
            MaxFeatures::Sqrt => w.u64(u64::MAX),
            MaxFeatures::All => w.u64(u64::MAX - 1),
            MaxFeatures::Count(n) => w.usize(n),
        }
        w.usizes(&[p.min_samples_leaf, p.min_samples_split, p.n_estimators]);
        w.u8(p.bootstrap as u8);
        w.usizes(&[self.dim, self.n_classes]);
        w.u64(self.seed);
        w.usize(self.trees.len());
        for t in &self.trees {
            w.usize(t.nodes.len());
            for n in &t.nodes {
                match *n {
                    Node::Leaf { class } => {
                        w.u8(0);
                        w.usize(class);
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        w.u8(1);
                        w.usizes(&[feature, left, right]);
                        w.f64(threshold);
                    }
                }
            }
        }
    }

    pub(crate) fn decode(r: &mut Reader) -> Result<Self> {
        let max_depth = Some(r.usize()?).filter(|&d| d > 0);
        let max_features = match r.u64()? {
            u64::MAX => MaxFeatures::Sqrt,
            v if v == u64::MAX - 1 => MaxFeatures::All,
            v => MaxFeatures::Count(v as usize),
        };
        let [min_samples_leaf, min_samples_split, n_estimators] = r.usizes()?[..] else {
            return Err(LulcError::Format("bad forest header".into()));
        };
        let bootstrap = r.u8()? != 0;
        let [dim, n_classes] = r.usizes()?[..] else {
            return Err(LulcError::Format("bad forest header".into()));
        };
        let seed = r.u64()?;
        let n_trees = r.usize()?;
        let mut trees = Vec::new();
        for _ in 0..n_trees {
            let n_nodes = r.usize()?;
            let mut nodes = Vec::new();
            for _ in 0..n_nodes {
                let node = match r.u8()? {
                    0 => Node::Leaf { class: r.usize()? },
                    1 => {
                        let [feature, left, right] = r.usizes()?[..] else {
                            return Err(LulcError::Format("bad split node".into()));
                        };
                        Node::Split {
                            feature,
                            threshold: r.f64()?,
                            left,
                            right,
                        }
                    }
                    t => return Err(LulcError::Format(format!("unknown node tag {t}"))),
                };
                let ok = match node {
                    Node::Leaf { class } => class < n_classes,
                    Node::Split {
                        feature, left, right, ..
                    } => feature < dim && left < n_nodes && right < n_nodes,
                };
                if !ok {
                    return Err(LulcError::Format("tree node out of range".into()));
                }
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(LulcError::Format("empty tree".into()));
            }
            trees.push(Tree { nodes });
        }
        Ok(ForestModel {
            params: ForestParams {
                max_depth,
                max_features,
                min_samples_leaf,
                min_samples_split,
                n_estimators,
                bootstrap,
            },
            dim,
            n_classes,
            seed,
            trees,
        })
    }
}

/// Candidate values per hyperparameter; the search is their Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestGrid {
    pub max_depth: Vec<Option<usize>>,
    pub max_features: Vec<MaxFeatures>,
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub n_estimators: Vec<usize>,
}

impl Default for ForestGrid {
    fn default() -> Self {
        ForestGrid {
            max_depth: vec![Some(8), Some(16), None],
            max_features: vec![MaxFeatures::Sqrt, MaxFeatures::All],
            min_samples_leaf: vec![1, 3],
            min_samples_split: vec![2, 5],
            n_estimators: vec![100, 200, 500],
        }
    }
}

impl ForestGrid {
    pub fn single(p: &ForestParams) -> Self {
        ForestGrid {
            max_depth: vec![p.max_depth],
            max_features: vec![p.max_features],
            min_samples_leaf: vec![p.min_samples_leaf],
            min_samples_split: vec![p.min_samples_split],
            n_estimators: vec![p.n_estimators],
        }
    }

    /// Every combination, in lexicographic order of
    /// (max_depth, max_features, min_samples_leaf, min_samples_split, n_estimators).
    pub fn points(&self) -> Vec<ForestParams> {
        let mut out = Vec::new();
        for &max_depth in &self.max_depth {
            for &max_features in &self.max_features {
                for &min_samples_leaf in &self.min_samples_leaf {
                    for &min_samples_split in &self.min_samples_split {
                        for &n_estimators in &self.n_estimators {
                            out.push(ForestParams {
                                max_depth,
                                max_features,
                                min_samples_leaf,
                                min_samples_split,
                                n_estimators,
                                bootstrap: true,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub params: ForestParams,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best: ForestParams,
    pub best_mean_accuracy: f64,
    pub table: Vec<GridRow>,
}

/// Exhaustive grid search by mean stratified k-fold accuracy. Ties keep the
/// earliest grid point.
pub fn forest_grid_search(
    data: &[f64],
    dim: usize,
    labels: &[usize],
    grid: &ForestGrid,
    folds: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    let points = grid.points();
    if points.is_empty() {
        return Err(LulcError::Config("random forest grid is empty".into()));
    }
    let fold_idx = stratified_folds(labels, folds, seed)?;
    let mut table = Vec::with_capacity(points.len());
    for params in points {
        let mut accs = Vec::with_capacity(folds);
        for (f, test) in fold_idx.iter().enumerate() {
            let mut in_test = vec![false; labels.len()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train: Vec<usize> = (0..labels.len()).filter(|&i| !in_test[i]).collect();
            let gather = |idx: &[usize]| -> (Vec<f64>, Vec<usize>) {
                let mut d = Vec::with_capacity(idx.len() * dim);
                idx.iter()
                    .for_each(|&i| d.extend_from_slice(&data[i * dim..(i + 1) * dim]));
                (d, idx.iter().map(|&i| labels[i]).collect())
            };
            let (tr_x, tr_y) = gather(&train);
            let (te_x, te_y) = gather(test);
            let model = forest_fit(
                &tr_x,
                dim,
                &tr_y,
                &params,
                seed::derive_seed(seed, &format!("grid/fold/{f}")),
            )?;
            let pred = model.predict(&te_x)?;
            let correct = pred.iter().zip(&te_y).filter(|(a, b)| a == b).count();
            accs.push(correct as f64 / te_y.len() as f64);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        table.push(GridRow {
            params,
            fold_accuracy: accs,
            mean_accuracy: mean,
        });
    }
    let mut best = 0;
    for (i, row) in table.iter().enumerate() {
        if row.mean_accuracy > table[best].mean_accuracy {
            best = i;
        }
    }
    Ok(GridSearchResult {
        best: table[best].params.clone(),
        best_mean_accuracy: table[best].mean_accuracy,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stump_finds_threshold() {
        let data: Vec<f64> = (0..10).map(f64::from).collect();
        let labels: Vec<usize> = (0..10).map(|i| (i >= 5) as usize).collect();
        let params = ForestParams {
            n_estimators: 1,
            max_depth: Some(1),
            bootstrap: false,
            ..Default::default()
        };
        let m = forest_fit(&data, 1, &labels, &params, 3).unwrap();
        match m.trees[0].nodes[0] {
            Node::Split { feature, threshold, .. } => assert_eq!((feature, threshold), (0, 4.5)),
            ref n => panic!("expected split, got {n:?}"),
        }
        assert_eq!(m.trees[0].depth(), 1);
    }

    #[test]
    fn deep_trees_fit_training_data() {
        let data: Vec<f64> = (0..40).map(|i| ((i * 7919) % 97) as f64).collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let params = ForestParams {
            n_estimators: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
            ..Default::default()
        };
        let m = forest_fit(&data, 2, &labels, &params, 0).unwrap();
        assert_eq!(m.predict(&data).unwrap(), labels);
    }

    #[test]
    fn tie_vote_goes_to_lowest() {
        assert_eq!(majority(&[3, 3]), 0);
        assert_eq!(majority(&[1, 4, 4]), 1);
    }

    #[test]
    fn single_class_is_degenerate() {
        let err = forest_fit(&[1.0, 2.0], 1, &[2, 2], &ForestParams::default(), 0);
        assert!(matches!(err, Err(LulcError::DegenerateLabels(1))));
    }

    #[test]
    fn grid_size() {
        assert_eq!(ForestGrid::default().points().len(), 72);
        let empty = ForestGrid {
            n_estimators: vec![],
            ..Default::default()
        };
        assert!(matches!(
            forest_grid_search(&[0.0; 20], 1, &[0; 20], &empty, 2, 0),
            Err(LulcError::Config(_))
        ));
    }
}
