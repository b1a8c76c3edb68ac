//! Signed aggregation trees and the quantities derived from them.
//!
//! A [`Hierarchy`] is a rooted tree whose edges carry a sign in `{-1, +1}`:
//! the value at a parent vertex is the signed sum of its children. Vertices
//! are stored in *row order*, i.e. the row order of the summing matrix:
//! aggregated vertices first (by level, then first appearance), followed by
//! the leaves in first-appearance order. Every per-vertex slice accepted or
//! returned by this module uses that order.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl TryFrom<i64> for Sign {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(Error::Hierarchy(format!(
                "edge sign must be -1 or +1, got {other}"
            ))),
        }
    }
}

impl From<Sign> for i64 {
    fn from(s: Sign) -> i64 {
        match s {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+1",
            Sign::Minus => "-1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub parent: String,
    pub child: String,
    pub sign: Sign,
}

impl Edge {
    pub fn new(parent: impl Into<String>, child: impl Into<String>, sign: Sign) -> Self {
        Edge {
            parent: parent.into(),
            child: child.into(),
            sign,
        }
    }

    pub fn plus(parent: impl Into<String>, child: impl Into<String>) -> Self {
        Self::new(parent, child, Sign::Plus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<Edge>,
    parent: Vec<Option<(usize, Sign)>>,
    children: Vec<Vec<(usize, Sign)>>,
    level: Vec<usize>,
    n_leaves: usize,
}

impl Hierarchy {
    /// Builds a tree from signed parent/child pairs.
    ///
    /// Vertex order is first appearance in the edge list.
    pub fn from_edges(edges: &[Edge]) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Hierarchy(
                "empty edge list; use Hierarchy::single for a lone vertex".into(),
            ));
        }
        Self::with_vertices(&[], edges)
    }

    /// A degenerate hierarchy holding one leaf.
    pub fn single(id: impl Into<String>) -> Self {
        let id = id.into();
        Hierarchy {
            index: HashMap::from([(id.clone(), 0)]),
            ids: vec![id],
            edges: Vec::new(),
            parent: vec![None],
            children: vec![Vec::new()],
            level: vec![0],
            n_leaves: 1,
        }
    }

    /// Builds a tree from an explicit vertex list plus edges.
    ///
    /// When `vertices` is non-empty every edge endpoint must be declared in
    /// it; declaration order then takes precedence over edge order.
    pub fn with_vertices(vertices: &[String], edges: &[Edge]) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for v in vertices {
            if seen.insert(v.clone(), order.len()).is_some() {
                return Err(Error::Hierarchy(format!("duplicate vertex id '{v}'")));
            }
            order.push(v.clone());
        }
        let declared = !vertices.is_empty();
        for e in edges {
            for id in [&e.parent, &e.child] {
                if !seen.contains_key(id) {
                    if declared {
                        return Err(Error::Hierarchy(format!(
                            "edge references undeclared vertex '{id}'"
                        )));
                    }
                    seen.insert(id.clone(), order.len());
                    order.push(id.clone());
                }
            }
        }
        if order.len() == 1 && edges.is_empty() {
            return Ok(Self::single(order.remove(0)));
        }

        let n = order.len();
        let mut parent: Vec<Option<(usize, Sign)>> = vec![None; n];
        let mut children: Vec<Vec<(usize, Sign)>> = vec![Vec::new(); n];
        // position of each edge, used for first-appearance ordering of leaves
        let mut first_seen_in_edges: Vec<usize> = vec![usize::MAX; n];
        for (k, e) in edges.iter().enumerate() {
            let p = seen[&e.parent];
            let c = seen[&e.child];
            if let Some((old, _)) = parent[c] {
                return Err(Error::Hierarchy(format!(
                    "vertex '{}' has two parents ('{}' and '{}')",
                    e.child, order[old], e.parent
                )));
            }
            parent[c] = Some((p, e.sign));
            children[p].push((c, e.sign));
            for v in [p, c] {
                if first_seen_in_edges[v] == usize::MAX {
                    first_seen_in_edges[v] = k;
                }
            }
        }

        let roots: Vec<usize> = (0..n).filter(|&v| parent[v].is_none()).collect();
        let root = match roots.as_slice() {
            [] => return Err(Error::Hierarchy("cycle detected: no root vertex".into())),
            [r] => *r,
            many => {
                let names: Vec<&str> = many.iter().map(|&v| order[v].as_str()).collect();
                return Err(Error::Hierarchy(format!(
                    "multiple roots: {}",
                    names.join(", ")
                )));
            }
        };

        let mut level = vec![usize::MAX; n];
        level[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &(c, _) in &children[v] {
                level[c] = level[v] + 1;
                queue.push_back(c);
            }
        }
        if let Some(v) = level.iter().position(|&l| l == usize::MAX) {
            return Err(Error::Hierarchy(format!(
                "cycle detected through vertex '{}'",
                order[v]
            )));
        }

        // row order: aggregated vertices by (level, declaration order), then leaves
        let mut aggregated: Vec<usize> = (0..n).filter(|&v| !children[v].is_empty()).collect();
        aggregated.sort_by_key(|&v| (level[v], v));
        let mut leaves: Vec<usize> = (0..n).filter(|&v| children[v].is_empty()).collect();
        if declared {
            leaves.sort_by_key(|&v| v);
        } else {
            leaves.sort_by_key(|&v| (first_seen_in_edges[v], v));
        }
        let n_leaves = leaves.len();
        let rows: Vec<usize> = aggregated.into_iter().chain(leaves).collect();
        let mut new_of_old = vec![0usize; n];
        for (new, &old) in rows.iter().enumerate() {
            new_of_old[old] = new;
        }

        let ids: Vec<String> = rows.iter().map(|&v| order[v].clone()).collect();
        let index = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let parent = rows
            .iter()
            .map(|&v| parent[v].map(|(p, s)| (new_of_old[p], s)))
            .collect();
        let children = rows
            .iter()
            .map(|&v| {
                children[v]
                    .iter()
                    .map(|&(c, s)| (new_of_old[c], s))
                    .collect()
            })
            .collect();
        let level = rows.iter().map(|&v| level[v]).collect();

        Ok(Hierarchy {
            ids,
            index,
            edges: edges.to_vec(),
            parent,
            children,
            level,
            n_leaves,
        })
    }

    /// Vertex ids in row order.
    pub fn vertices(&self) -> &[String] {
        &self.ids
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn n_aggregated(&self) -> usize {
        self.ids.len() - self.n_leaves
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn level(&self, idx: usize) -> usize {
        self.level[idx]
    }

    pub fn level_of(&self, id: &str) -> Option<usize> {
        self.index_of(id).map(|i| self.level[i])
    }

    pub fn max_level(&self) -> usize {
        self.level.iter().copied().max().unwrap_or(0)
    }

    pub fn children(&self, idx: usize) -> &[(usize, Sign)] {
        &self.children[idx]
    }

    pub fn parent(&self, idx: usize) -> Option<(usize, Sign)> {
        self.parent[idx]
    }

    pub fn is_leaf(&self, idx: usize) -> bool {
        self.children[idx].is_empty()
    }

    /// Leaf ids in column order of the summing matrix.
    pub fn leaves(&self) -> &[String] {
        &self.ids[self.n_aggregated()..]
    }

    /// Vertex indices grouped by level, deepest level first.
    pub fn levels_bottom_up(&self) -> Vec<(usize, Vec<usize>)> {
        let mut by_level: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (v, &l) in self.level.iter().enumerate() {
            by_level.entry(l).or_default().push(v);
        }
        by_level.into_iter().rev().collect()
    }

    pub fn summing_matrix(&self) -> SummingMatrix {
        let n = self.len();
        let m = self.n_leaves;
        let k = self.n_aggregated();
        let mut s = Array2::<f64>::zeros((n, m));
        for j in 0..m {
            s[[k + j, j]] = 1.0;
        }
        // children always sit at larger row indices than their parents
        for v in (0..k).rev() {
            for &(c, sign) in &self.children[v] {
                let child_row = s.row(c).to_owned();
                let mut row = s.row_mut(v);
                row.scaled_add(sign.value(), &child_row);
            }
        }
        SummingMatrix {
            matrix: s,
            rows: self.ids.clone(),
            leaf_order: self.leaves().to_vec(),
        }
    }

    /// Maps leaf values (column order) to values at every vertex (row order).
    pub fn aggregate(&self, leaf_values: &[f64]) -> Result<Vec<f64>> {
        if leaf_values.len() != self.n_leaves {
            return Err(Error::dim("leaf values", self.n_leaves, leaf_values.len()));
        }
        let k = self.n_aggregated();
        let mut out = vec![0.0; self.len()];
        out[k..].copy_from_slice(leaf_values);
        for v in (0..k).rev() {
            out[v] = self.children[v]
                .iter()
                .map(|&(c, s)| s.value() * out[c])
                .sum();
        }
        Ok(out)
    }

    /// Signed child sum at an aggregated vertex, per time step.
    pub fn child_sum(&self, idx: usize, series: &[Vec<f64>]) -> Option<Vec<f64>> {
        let ch = &self.children[idx];
        if ch.is_empty() {
            return None;
        }
        let len = series[ch[0].0].len();
        let mut acc = vec![0.0; len];
        for &(c, s) in ch {
            for (a, x) in acc.iter_mut().zip(&series[c]) {
                *a += s.value() * x;
            }
        }
        Some(acc)
    }

    /// Mean over the horizon of the summed absolute coherency gaps.
    ///
    /// `forecasts[i]` holds the horizon for the vertex in row `i`.
    pub fn coherent_loss(&self, forecasts: &[Vec<f64>]) -> Result<f64> {
        if forecasts.len() != self.len() {
            return Err(Error::dim("vertex forecasts", self.len(), forecasts.len()));
        }
        let h = forecasts[0].len();
        if let Some(bad) = forecasts.iter().find(|f| f.len() != h) {
            return Err(Error::dim("forecast horizon", h, bad.len()));
        }
        if h == 0 {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for v in 0..self.n_aggregated() {
            let sum = self.child_sum(v, forecasts).expect("aggregated vertex");
            total += forecasts[v]
                .iter()
                .zip(&sum)
                .map(|(y, s)| (y - s).abs())
                .sum::<f64>();
        }
        Ok(total / h as f64)
    }

    /// [`Hierarchy::coherent_loss`] keyed by vertex id.
    pub fn coherent_loss_named(&self, forecasts: &BTreeMap<String, Vec<f64>>) -> Result<f64> {
        let rows = self
            .ids
            .iter()
            .map(|id| {
                forecasts
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::Data(format!("missing forecasts for vertex '{id}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.coherent_loss(&rows)
    }

    /// Checks whether a convex combination of experts can reproduce the truth
    /// at every vertex.
    ///
    /// `expert_forecasts[i]` holds one scalar forecast per expert at vertex
    /// `i`. The witness mixes, per vertex, the two experts bracketing the
    /// truth, so the combined forecasts equal the truth and inherit its
    /// coherency.
    pub fn coherency_feasible(
        &self,
        expert_forecasts: &[Vec<f64>],
        truth: &[f64],
    ) -> Result<FeasibilityReport> {
        if expert_forecasts.len() != self.len() {
            return Err(Error::dim("vertices", self.len(), expert_forecasts.len()));
        }
        if truth.len() != self.len() {
            return Err(Error::dim("truth", self.len(), truth.len()));
        }
        let mut weights = Vec::with_capacity(self.len());
        let mut outside = Vec::new();
        for (v, (experts, &y)) in expert_forecasts.iter().zip(truth).enumerate() {
            match bracket_weights(experts, y)? {
                Some(w) => weights.push(w),
                None => outside.push(v),
            }
        }
        let feasible = outside.is_empty();
        Ok(FeasibilityReport {
            feasible,
            witness: feasible.then_some(weights),
            outside_hull: outside,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Per-vertex simplex weights reproducing the truth, when feasible.
    pub witness: Option<Vec<Vec<f64>>>,
    /// Row indices where the truth lies outside the experts' range.
    pub outside_hull: Vec<usize>,
}

impl FeasibilityReport {
    /// Combined forecasts implied by the witness weights.
    pub fn combine(&self, expert_forecasts: &[Vec<f64>]) -> Option<Vec<f64>> {
        let w = self.witness.as_ref()?;
        Some(
            w.iter()
                .zip(expert_forecasts)
                .map(|(w, f)| w.iter().zip(f).map(|(a, b)| a * b).sum())
                .collect(),
        )
    }
}

fn bracket_weights(experts: &[f64], y: f64) -> Result<Option<Vec<f64>>> {
    if experts.is_empty() {
        return Err(Error::Data("vertex has no expert forecasts".into()));
    }
    let mut lo: Option<usize> = None;
    let mut hi: Option<usize> = None;
    for (i, &f) in experts.iter().enumerate() {
        if f <= y && lo.is_none_or(|j| f > experts[j]) {
            lo = Some(i);
        }
        if f >= y && hi.is_none_or(|j| f < experts[j]) {
            hi = Some(i);
        }
    }
    let (Some(lo), Some(hi)) = (lo, hi) else {
        return Ok(None);
    };
    let mut w = vec![0.0; experts.len()];
    let span = experts[hi] - experts[lo];
    if span == 0.0 {
        w[lo] = 1.0;
    } else {
        let a = (experts[hi] - y) / span;
        w[lo] = a;
        w[hi] += 1.0 - a;
    }
    Ok(Some(w))
}

/// The `n x m` matrix mapping leaf values to every vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct SummingMatrix {
    pub matrix: Array2<f64>,
    pub rows: Vec<String>,
    pub leaf_order: Vec<String>,
}

impl SummingMatrix {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn m(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, leaf_values: &[f64]) -> Result<Vec<f64>> {
        if leaf_values.len() != self.m() {
            return Err(Error::dim("leaf values", self.m(), leaf_values.len()));
        }
        let b = Array1::from(leaf_values.to_vec());
        Ok(self.matrix.dot(&b).to_vec())
    }
}

/// Generators for benchmark and randomised trees.
impl Hierarchy {
    /// Root `v1` over `v2, v3`, each over two leaves `v4..v7`.
    pub fn seven_vertex() -> Self {
        Hierarchy::from_edges(&[
            Edge::plus("v1", "v2"),
            Edge::plus("v1", "v3"),
            Edge::plus("v2", "v4"),
            Edge::plus("v2", "v5"),
            Edge::plus("v3", "v6"),
            Edge::plus("v3", "v7"),
        ])
        .expect("static tree")
    }

    /// A random tree of depth at most `max_depth` in which every internal
    /// vertex has between 2 and `max_children` children. Signs are all
    /// positive unless `signed`.
    pub fn random<R: rand::Rng + ?Sized>(
        rng: &mut R,
        max_depth: usize,
        max_children: usize,
        signed: bool,
    ) -> Self {
        let max_children = max_children.max(2);
        let mut edges = Vec::new();
        let mut frontier = vec![("v0".to_string(), 0usize)];
        let mut next = 1usize;
        while let Some((id, depth)) = frontier.pop() {
            let expand = depth == 0 || (depth < max_depth && rng.random_bool(0.6));
            if !expand || max_depth == 0 {
                continue;
            }
            for _ in 0..rng.random_range(2..=max_children) {
                let child = format!("v{next}");
                next += 1;
                let sign = if signed && rng.random_bool(0.3) { Sign::Minus } else { Sign::Plus };
                edges.push(Edge::new(id.clone(), child.clone(), sign));
                frontier.push((child, depth + 1));
            }
        }
        if edges.is_empty() {
            return Hierarchy::single("v0");
        }
        Hierarchy::from_edges(&edges).expect("generated tree is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fig1(sign_v3: Sign) -> Hierarchy {
        Hierarchy::from_edges(&[
            Edge::plus("v1", "v2"),
            Edge::new("v1", "v3", sign_v3),
            Edge::plus("v2", "v4"),
            Edge::plus("v2", "v5"),
            Edge::plus("v3", "v6"),
            Edge::plus("v3", "v7"),
        ])
        .unwrap()
    }

    #[test]
    fn random_trees_are_valid() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let h = Hierarchy::random(&mut rng, 3, 4, true);
            assert!(h.n_leaves() >= 2);
            let s = h.summing_matrix();
            let m = h.n_leaves();
            for i in 0..m {
                for j in 0..m {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert_eq!(s.matrix[[h.n_aggregated() + i, j]], e);
                }
            }
        }
        assert_eq!(Hierarchy::seven_vertex(), fig1(Sign::Plus));
    }

    #[test]
    fn fig1_levels_and_leaves() {
        let h = fig1(Sign::Plus);
        let levels: Vec<usize> = ["v1", "v2", "v3", "v4", "v5", "v6", "v7"]
            .iter()
            .map(|v| h.level_of(v).unwrap())
            .collect();
        assert_eq!(levels, vec![0, 1, 1, 2, 2, 2, 2]);
        assert_eq!(h.leaves(), &["v4", "v5", "v6", "v7"]);
        let order: Vec<usize> = h.levels_bottom_up().iter().map(|(l, _)| *l).collect();
        assert_eq!(order, vec![2, 1, 0]);
    }

    #[test]
    fn fig1_summing_matrix() {
        let s = fig1(Sign::Plus).summing_matrix();
        let expected = [
            [1., 1., 1., 1.],
            [1., 1., 0., 0.],
            [0., 0., 1., 1.],
            [1., 0., 0., 0.],
            [0., 1., 0., 0.],
            [0., 0., 1., 0.],
            [0., 0., 0., 1.],
        ];
        for (i, row) in expected.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                assert_eq!(s.matrix[[i, j]], x);
            }
        }
    }

    #[test]
    fn single_vertex() {
        let h = Hierarchy::single("only");
        assert_eq!(h.level(0), 0);
        assert_eq!(h.leaves(), &["only"]);
        assert_eq!(h.summing_matrix().matrix, ndarray::array![[1.0]]);
        assert_eq!(h.coherent_loss(&[vec![3.0, 4.0]]).unwrap(), 0.0);
    }

    #[test]
    fn structural_errors() {
        let cycle = Hierarchy::from_edges(&[Edge::plus("v1", "v2"), Edge::plus("v2", "v1")]);
        assert!(matches!(cycle, Err(Error::Hierarchy(m)) if m.contains("cycle")));

        let detached_cycle = Hierarchy::from_edges(&[
            Edge::plus("r", "a"),
            Edge::plus("b", "c"),
            Edge::plus("c", "b"),
        ]);
        assert!(matches!(detached_cycle, Err(Error::Hierarchy(m)) if m.contains("cycle")));

        let two_parents = Hierarchy::from_edges(&[
            Edge::plus("r", "a"),
            Edge::plus("r", "b"),
            Edge::plus("a", "c"),
            Edge::plus("b", "c"),
        ]);
        assert!(matches!(two_parents, Err(Error::Hierarchy(m)) if m.contains("two parents")));

        let forest = Hierarchy::from_edges(&[Edge::plus("r", "a"), Edge::plus("q", "b")]);
        assert!(matches!(forest, Err(Error::Hierarchy(m)) if m.contains("multiple roots")));

        assert!(Sign::try_from(2).is_err());
        assert!(Sign::try_from(0).is_err());
    }

    #[test]
    fn aggregate_plain_and_signed() {
        let h = fig1(Sign::Plus);
        assert_eq!(
            h.aggregate(&[1., 2., 3., 4.]).unwrap(),
            vec![10., 3., 7., 1., 2., 3., 4.]
        );
        assert_eq!(h.aggregate(&[0.; 4]).unwrap(), vec![0.; 7]);
        assert!(h.aggregate(&[1.0; 3]).is_err());

        let signed = fig1(Sign::Minus);
        let y = signed.aggregate(&[1., 2., 3., 4.]).unwrap();
        assert_eq!(y[0], -4.0);
        let s = signed.summing_matrix();
        let expected_root: Vec<f64> = (0..4).map(|j| s.matrix[[1, j]] - s.matrix[[2, j]]).collect();
        assert_eq!(s.matrix.row(0).to_vec(), expected_root);
        assert_eq!(s.apply(&[1., 2., 3., 4.]).unwrap(), y);
    }

    #[test]
    fn coherent_loss_hand_case() {
        let h = fig1(Sign::Plus);
        let mut f: Vec<Vec<f64>> = h
            .aggregate(&[1., 2., 3., 4.])
            .unwrap()
            .into_iter()
            .map(|x| vec![x])
            .collect();
        assert_eq!(h.coherent_loss(&f).unwrap(), 0.0);
        // v2 forecast 4 while its children sum to 3: one unit of incoherence,
        // and v1 = 10 = 4 + 7 would add another, so keep v1 coherent with it.
        f[1][0] = 4.0;
        f[0][0] = 11.0;
        assert_eq!(h.coherent_loss(&f).unwrap(), 1.0);

        let mut named = BTreeMap::new();
        for (id, v) in h.vertices().iter().zip(&f) {
            named.insert(id.clone(), v.clone());
        }
        assert_eq!(h.coherent_loss_named(&named).unwrap(), 1.0);
        named.remove("v5");
        assert!(h.coherent_loss_named(&named).is_err());
        assert!(h.coherent_loss(&f[..6]).is_err());
    }

    #[test]
    fn feasibility_cases() {
        let h = fig1(Sign::Plus);
        let truth = h.aggregate(&[1., 2., 3., 4.]).unwrap();
        let experts: Vec<Vec<f64>> = truth.iter().map(|&y| vec![y - 1.0, y + 2.0]).collect();
        let rep = h.coherency_feasible(&experts, &truth).unwrap();
        assert!(rep.feasible);
        let combined: Vec<Vec<f64>> = rep
            .combine(&experts)
            .unwrap()
            .into_iter()
            .map(|x| vec![x])
            .collect();
        assert!(h.coherent_loss(&combined).unwrap() <= 1e-9);

        let exact: Vec<Vec<f64>> = truth.iter().map(|&y| vec![y]).collect();
        let rep = h.coherency_feasible(&exact, &truth).unwrap();
        assert_eq!(rep.witness.unwrap()[3], vec![1.0]);

        let mut above = experts.clone();
        above[2] = vec![truth[2] + 0.5, truth[2] + 1.0];
        let rep = h.coherency_feasible(&above, &truth).unwrap();
        assert!(!rep.feasible);
        assert_eq!(rep.outside_hull, vec![2]);

        let mut empty = experts;
        empty[0].clear();
        assert!(h.coherency_feasible(&empty, &truth).is_err());
    }

    #[test]
    fn declared_vertices_checked() {
        let vs: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let err = Hierarchy::with_vertices(&vs, &[Edge::plus("a", "zz")]);
        assert!(matches!(err, Err(Error::Hierarchy(m)) if m.contains("undeclared")));
    }
}
