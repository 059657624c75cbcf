//! Recommendations as search.
//!
//! [`ensemble`] merges item vectors with equal-weight hierarchical slerp and
//! [`recommend`] searches from the result. [`walk`] grows a tree of related
//! documents breadth-first: every node queries its own neighbourhood, samples
//! up to `C` unvisited neighbours, and those become its children.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{NeighbourSearch, SearchHit};
use crate::vecmath::{hierarchical_slerp, UnitVector, WeightedVector};

/// Equal-weight hierarchical slerp over the documents' vectors, in order.
pub fn ensemble<S: NeighbourSearch + ?Sized>(index: &S, item_ids: &[String]) -> Result<UnitVector> {
    if item_ids.is_empty() {
        return Err(Error::InvalidArgument("ensemble needs at least one document".into()));
    }
    let items = item_ids
        .iter()
        .map(|id| Ok(WeightedVector::new(index.document(id)?.vector.clone(), 1.0)))
        .collect::<Result<Vec<_>>>()?;
    hierarchical_slerp(&items)
}

/// Nearest neighbours of the seeds' ensemble, never returning a seed.
pub fn recommend<S: NeighbourSearch + ?Sized>(
    index: &S,
    seed_ids: &[String],
    k: usize,
) -> Result<Vec<SearchHit>> {
    let query = ensemble(index, seed_ids)?;
    let exclude: HashSet<String> = seed_ids.iter().cloned().collect();
    index.nn_search(&query, k, None, Some(&exclude))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct WalkParams {
    /// Tree depth counting the root as layer 1.
    pub layers: usize,
    /// Maximum children per node.
    pub children: usize,
    /// Neighbours retrieved per expansion; must be at least `children`.
    pub neighbours: usize,
    #[serde(default)]
    pub seed: u64,
    /// Retrieve `neighbours` results first and drop visited ones afterwards,
    /// instead of excluding visited documents inside the search.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub literal_filtering: bool,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams { layers: 3, children: 3, neighbours: 20, seed: 0, literal_filtering: false }
    }
}

impl WalkParams {
    pub fn new(layers: usize, children: usize, neighbours: usize, seed: u64) -> Self {
        WalkParams { layers, children, neighbours, seed, literal_filtering: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.children == 0 || self.neighbours == 0 {
            return Err(Error::InvalidArgument("walk layers, children and neighbours must be positive".into()));
        }
        if self.neighbours < self.children {
            return Err(Error::InvalidArgument(format!(
                "neighbours ({}) must be at least children ({})",
                self.neighbours, self.children
            )));
        }
        Ok(())
    }

    /// Upper bound on document nodes: `C + C^2 + ... + C^(L-1)`.
    pub fn max_expanded_nodes(&self) -> usize {
        let mut total = 0usize;
        let mut level = 1usize;
        for _ in 1..self.layers {
            level = level.saturating_mul(self.children);
            total = total.saturating_add(level);
        }
        total
    }
}

/// Parses `L=3,C=3,k=20[,seed=N]`. Keys may appear in any order; missing
/// keys keep their defaults.
impl FromStr for WalkParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = WalkParams::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("walk defaults: expected key=value, got `{part}`")))?;
            let bad = |e: std::num::ParseIntError| Error::Config(format!("walk defaults `{part}`: {e}"));
            match key.trim() {
                "L" => p.layers = value.trim().parse().map_err(bad)?,
                "C" => p.children = value.trim().parse().map_err(bad)?,
                "k" => p.neighbours = value.trim().parse().map_err(bad)?,
                "seed" => p.seed = value.trim().parse().map_err(bad)?,
                other => return Err(Error::Config(format!("walk defaults: unknown key `{other}`"))),
            }
        }
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }
}

impl fmt::Display for WalkParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L={},C={},k={},seed={}", self.layers, self.children, self.neighbours, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WalkStart {
    Document(String),
    Vector(UnitVector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecTree {
    pub vector: UnitVector,
    pub doc_id: Option<String>,
    pub children: Vec<RecTree>,
}

/// Wire form of a [`RecTree`]. Only the root carries its vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TreeNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    pub children: Vec<TreeNode>,
}

impl RecTree {
    pub fn to_node(&self) -> TreeNode {
        fn inner(t: &RecTree) -> TreeNode {
            TreeNode {
                vector: None,
                doc_id: t.doc_id.clone(),
                children: t.children.iter().map(inner).collect(),
            }
        }
        TreeNode { vector: Some(self.vector.to_vec()), ..inner(self) }
    }

    /// Number of nodes, root included.
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(RecTree::node_count).sum::<usize>()
    }

    /// Depth with the root as layer 1.
    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(RecTree::depth).max().unwrap_or(0)
    }

    /// Every node in breadth-first order.
    pub fn breadth_first(&self) -> Vec<&RecTree> {
        let mut out = vec![self];
        let mut i = 0;
        while i < out.len() {
            let node = out[i];
            out.extend(node.children.iter());
            i += 1;
        }
        out
    }
}

impl TreeNode {
    /// Document ids below the root, breadth-first, children in sampling order.
    pub fn flatten(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut queue: std::collections::VecDeque<&TreeNode> = self.children.iter().collect();
        while let Some(node) = queue.pop_front() {
            out.extend(node.doc_id.clone());
            queue.extend(node.children.iter());
        }
        out
    }
}

struct ArenaNode {
    vector: UnitVector,
    doc_id: Option<String>,
    children: Vec<usize>,
}

/// Random recommendation walk.
///
/// Nodes are numbered in breadth-first creation order; node `i` samples its
/// children from a ChaCha stream `(params.seed, i)`, so the result is a pure
/// function of the corpus, the start and the params.
pub fn walk<S: NeighbourSearch + ?Sized>(index: &S, start: &WalkStart, params: &WalkParams) -> Result<RecTree> {
    params.validate()?;
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let mut visited = HashSet::new();
    let root = match start {
        WalkStart::Document(id) => {
            let doc = index.document(id)?;
            visited.insert(doc.id.clone());
            ArenaNode { vector: doc.vector.clone(), doc_id: Some(doc.id.clone()), children: Vec::new() }
        }
        WalkStart::Vector(v) => {
            v.ensure_dim(index.dimension())?;
            ArenaNode { vector: v.clone(), doc_id: None, children: Vec::new() }
        }
    };
    let mut arena = vec![root];
    let mut front = vec![0usize];
    for _ in 1..params.layers {
        let mut next = Vec::new();
        for &parent in &front {
            let candidates: Vec<SearchHit> = if params.literal_filtering {
                index
                    .nn_search(&arena[parent].vector, params.neighbours, None, None)?
                    .into_iter()
                    .filter(|h| !visited.contains(&h.id))
                    .collect()
            } else {
                index.nn_search(&arena[parent].vector, params.neighbours, None, Some(&visited))?
            };
            if candidates.is_empty() {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(parent as u64);
            let take = params.children.min(candidates.len());
            for pick in rand::seq::index::sample(&mut rng, candidates.len(), take) {
                let hit = &candidates[pick];
                visited.insert(hit.id.clone());
                let vector = index.document(&hit.id)?.vector.clone();
                let child = arena.len();
                arena.push(ArenaNode { vector, doc_id: Some(hit.id.clone()), children: Vec::new() });
                arena[parent].children.push(child);
                next.push(child);
            }
        }
        front = next;
    }
    Ok(assemble(&mut arena, 0))
}

fn assemble(arena: &mut [ArenaNode], i: usize) -> RecTree {
    let children = std::mem::take(&mut arena[i].children);
    let children = children.into_iter().map(|c| assemble(arena, c)).collect();
    RecTree {
        vector: arena[i].vector.clone(),
        doc_id: arena[i].doc_id.take(),
        children,
    }
}

/// Breadth-first document ids of a walk, excluding the root.
pub fn walk_flat<S: NeighbourSearch + ?Sized>(
    index: &S,
    start: &WalkStart,
    params: &WalkParams,
) -> Result<Vec<String>> {
    Ok(walk(index, start, params)?.to_node().flatten())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_1_SQRT_2;

    use super::*;
    use crate::index::{Document, Index};
    use crate::vecmath::normalize;

    fn corpus(points: &[(&str, &[f64])]) -> Index {
        let idx = Index::new(points[0].1.len());
        for (id, v) in points {
            idx.upsert(Document::new(*id, *id, normalize(v).unwrap())).unwrap();
        }
        idx
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ensemble_examples() {
        let idx = corpus(&[("x", &[1.0, 0.0, 0.0]), ("y", &[0.0, 1.0, 0.0]), ("z", &[0.0, 0.0, 1.0])]);
        let view = idx.read();
        assert_eq!(ensemble(&view, &ids(&["x"])).unwrap(), view.document("x").unwrap().vector);
        let xy = ensemble(&view, &ids(&["x", "y"])).unwrap();
        assert!((xy[0] - FRAC_1_SQRT_2).abs() < 1e-12 && (xy[1] - FRAC_1_SQRT_2).abs() < 1e-12);
        // independent Alg. transcription: (0.5, 0.5, 1/sqrt 2)
        let xyz = ensemble(&view, &ids(&["x", "y", "z"])).unwrap();
        for (a, b) in xyz.iter().zip([0.5, 0.5, FRAC_1_SQRT_2]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(ensemble(&view, &ids(&["nope"])), Err(Error::NotFound(_))));
    }

    #[test]
    fn recommend_examples() {
        let idx = corpus(&[
            ("a", &[1.0, 0.0, 0.0]),
            ("b", &[0.0, 1.0, 0.0]),
            ("mid", &[1.0, 1.0, 0.0]),
            ("c", &[0.0, 0.0, 1.0]),
            ("d", &[0.9, 0.0, 0.1]),
        ]);
        let view = idx.read();
        let hits = recommend(&view, &ids(&["a", "b"]), 2).unwrap();
        assert_eq!(hits[0].id, "mid");
        assert!(hits.iter().all(|h| h.id != "a" && h.id != "b"));

        // single seed: oracle by hand, a=(1,0,0): d (0.9939), mid (0.7071), then b/c at 0
        let hits = recommend(&view, &ids(&["a"]), 3).unwrap();
        assert_eq!(hits.iter().map(|h| h.id.as_str()).collect::<Vec<_>>(), ["d", "mid", "b"]);

        let all = ids(&["a", "b", "mid", "c", "d"]);
        assert!(recommend(&view, &all, 3).unwrap().is_empty());
    }

    #[test]
    fn walk_with_one_layer_is_just_the_root() {
        let idx = corpus(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let tree = walk(&idx.read(), &WalkStart::Document("a".into()), &WalkParams::new(1, 2, 2, 0)).unwrap();
        assert!(tree.children.is_empty());
        assert_eq!(tree.doc_id.as_deref(), Some("a"));
        assert!(walk_flat(&idx.read(), &WalkStart::Document("a".into()), &WalkParams::new(1, 2, 2, 0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn walk_two_layers_samples_from_top_k() {
        let idx = corpus(&[("a", &[1.0, 0.0, 0.0]), ("b", &[0.0, 1.0, 0.0]), ("c", &[0.0, 0.0, 1.0])]);
        let start = WalkStart::Vector(normalize(&[1.0, 1.0, 1.0]).unwrap());
        let params = WalkParams::new(2, 2, 3, 42);
        let tree = walk(&idx.read(), &start, &params).unwrap();
        assert_eq!(tree.doc_id, None);
        assert_eq!(tree.children.len(), 2);
        let flat = walk_flat(&idx.read(), &start, &params).unwrap();
        let children: Vec<_> = tree.children.iter().map(|c| c.doc_id.clone().unwrap()).collect();
        assert_eq!(flat, children);
        assert_ne!(flat[0], flat[1]);
        // children carry their own vectors
        for c in &tree.children {
            assert_eq!(c.vector, idx.get(c.doc_id.as_ref().unwrap()).unwrap().vector);
        }
    }

    #[test]
    fn walk_exhausts_small_corpus() {
        let idx = corpus(&[
            ("a", &[1.0, 0.0, 0.0]),
            ("b", &[0.0, 1.0, 0.0]),
            ("c", &[0.0, 0.0, 1.0]),
            ("d", &[1.0, 1.0, 1.0]),
        ]);
        for seed in 0..20 {
            let params = WalkParams::new(3, 2, 2, seed);
            let tree = walk(&idx.read(), &WalkStart::Document("a".into()), &params).unwrap();
            let flat = tree.to_node().flatten();
            let mut uniq = flat.clone();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), flat.len());
            assert!(!flat.contains(&"a".to_string()));
            // a + 3 others at most
            assert!(tree.node_count() <= 4);
            assert!(tree.depth() <= 3);
        }
    }

    #[test]
    fn walk_errors() {
        let empty = Index::new(2);
        let p = WalkParams::new(2, 1, 1, 0);
        assert!(matches!(
            walk(&empty.read(), &WalkStart::Vector(UnitVector::basis(2, 0)), &p),
            Err(Error::EmptyIndex)
        ));
        let idx = corpus(&[("a", &[1.0, 0.0])]);
        assert!(matches!(walk(&idx.read(), &WalkStart::Document("zz".into()), &p), Err(Error::NotFound(_))));
        assert!(walk(&idx.read(), &WalkStart::Vector(UnitVector::basis(2, 0)), &WalkParams::new(2, 3, 2, 0)).is_err());
    }

    #[test]
    fn walk_is_deterministic_and_seed_sensitive() {
        let pts: Vec<(String, Vec<f64>)> = (0..30)
            .map(|i| {
                let a = i as f64 * 0.37;
                (format!("d{i:02}"), vec![a.cos(), a.sin(), (a * 0.5).sin()])
            })
            .collect();
        let idx = Index::new(3);
        for (id, v) in &pts {
            idx.upsert(Document::new(id.clone(), "", normalize(v).unwrap())).unwrap();
        }
        let start = WalkStart::Document("d00".into());
        let run = |seed| {
            serde_json::to_string(&walk(&idx.read(), &start, &WalkParams::new(3, 3, 6, seed)).unwrap().to_node()).unwrap()
        };
        assert_eq!(run(1), run(1));
        assert!((0..10).any(|s| run(s) != run(1)));
    }

    #[test]
    fn literal_filtering_can_starve() {
        // Every node's top-2 neighbourhood is already visited: the literal
        // variant gives up where search-time exclusion keeps going.
        let idx = corpus(&[
            ("a", &[1.0, 0.0, 0.0]),
            ("b", &[0.99, 0.1, 0.0]),
            ("c", &[0.98, 0.0, 0.1]),
            ("far", &[0.0, 0.0, 1.0]),
        ]);
        let mut p = WalkParams::new(3, 2, 2, 3);
        let excl = walk(&idx.read(), &WalkStart::Document("a".into()), &p).unwrap();
        p.literal_filtering = true;
        let lit = walk(&idx.read(), &WalkStart::Document("a".into()), &p).unwrap();
        assert_eq!(excl.node_count(), 4);
        assert_eq!(lit.node_count(), 2);
    }

    #[test]
    fn params_parse_and_bound() {
        let p: WalkParams = "L=3,C=3,k=20".parse().unwrap();
        assert_eq!(p, WalkParams::new(3, 3, 20, 0));
        assert_eq!("k=5,C=2,L=4,seed=9".parse::<WalkParams>().unwrap(), WalkParams::new(4, 2, 5, 9));
        assert!("L=3,C=4,k=2".parse::<WalkParams>().is_err());
        assert!("Q=1".parse::<WalkParams>().is_err());
        assert_eq!(WalkParams::new(1, 3, 3, 0).max_expanded_nodes(), 0);
        assert_eq!(WalkParams::new(3, 3, 3, 0).max_expanded_nodes(), 12);
    }

    #[test]
    fn tree_node_serialization() {
        let idx = corpus(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let tree = walk(&idx.read(), &WalkStart::Document("a".into()), &WalkParams::new(2, 1, 1, 0)).unwrap();
        let json = serde_json::to_string(&tree.to_node()).unwrap();
        assert_eq!(json, r#"{"vector":[1.0,0.0],"doc_id":"a","children":[{"doc_id":"b","children":[]}]}"#);
        let back: TreeNode = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tree.to_node());
    }
}
