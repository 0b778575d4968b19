//! HDBSCAN with excess-of-mass cluster selection.
//!
//! Mutual reachability MST (Prim, dense `O(N²)`), single-linkage merge tree,
//! condensation by `min_cluster_size`, then stability-based selection. The
//! root cluster is never selectable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClusterAssignment, ClusterError, HdbscanParams, NOISE};
use crate::matrix::{distance, Matrix};

/// Distance from each point to its `k`-th nearest neighbor, the point itself being the first.
pub fn core_distances(points: &Matrix, k: usize) -> Result<Vec<f64>, ClusterError> {
    let n = points.rows();
    if k == 0 {
        return Err(ClusterError::InvalidParams("k must be at least 1".into()));
    }
    if k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let xi = points.row(i);
            let mut d: Vec<f64> = points.iter_rows().map(|xj| distance(xi, xj)).collect();
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            d[k - 1]
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Minimum spanning tree of the complete mutual-reachability graph,
/// `d_mr(a, b) = max(core(a), core(b), |a - b|)`.
pub fn mutual_reachability_mst(
    points: &Matrix,
    min_samples: usize,
) -> Result<Vec<MstEdge>, ClusterError> {
    let core = core_distances(points, min_samples)?;
    Ok(prim_mst(points, &core))
}

fn prim_mst(points: &Matrix, core: &[f64]) -> Vec<MstEdge> {
    let n = points.rows();
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    if n < 2 {
        return edges;
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut current = 0usize;
    in_tree[0] = true;
    for _ in 1..n {
        let xc = points.row(current);
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let w = distance(xc, points.row(j)).max(core[current]).max(core[j]);
            if w < best[j] {
                best[j] = w;
                from[j] = current;
            }
        }
        // lowest weight, ties to the lowest index
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge {
            a: from[next],
            b: next,
            weight: best[next],
        });
        current = next;
    }
    edges
}

struct MergeNode {
    left: usize,
    right: usize,
    weight: f64,
    size: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Single-linkage merge tree. Nodes `0..n` are points, node `n + k` is the k-th merge.
fn merge_tree(n: usize, mut edges: Vec<MstEdge>) -> Vec<MergeNode> {
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.min(x.b).cmp(&y.a.min(y.b)))
            .then(x.a.max(x.b).cmp(&y.a.max(y.b)))
    });
    let mut uf = UnionFind::new(2 * n);
    let mut node_of = (0..n).collect::<Vec<_>>(); // set representative -> tree node
    node_of.resize(2 * n, 0);
    let mut sizes = vec![1usize; 2 * n];
    let mut nodes = Vec::with_capacity(n.saturating_sub(1));
    for e in edges {
        let ra = uf.find(e.a);
        let rb = uf.find(e.b);
        let (la, lb) = (node_of[ra], node_of[rb]);
        let id = n + nodes.len();
        let size = sizes[la] + sizes[lb];
        nodes.push(MergeNode {
            left: la,
            right: lb,
            weight: e.weight,
            size,
        });
        sizes[id] = size;
        uf.parent[ra] = rb;
        node_of[rb] = id;
    }
    nodes
}

/// A cluster in the condensed tree. Cluster 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedCluster {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub birth_lambda: f64,
    pub size: usize,
    pub stability: f64,
    pub selected: bool,
}

/// Lambda at which a point leaves its innermost condensed cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointExit {
    pub point: usize,
    pub cluster: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub clusters: Vec<CondensedCluster>,
    pub exits: Vec<PointExit>,
    pub min_cluster_size: usize,
}

fn lambda_of(weight: f64) -> f64 {
    if weight > 0.0 {
        1.0 / weight
    } else {
        f64::INFINITY
    }
}

fn condense(n: usize, nodes: &[MergeNode], min_cluster_size: usize) -> CondensedTree {
    let mut clusters = vec![CondensedCluster {
        parent: None,
        children: Vec::new(),
        birth_lambda: 0.0,
        size: n,
        stability: 0.0,
        selected: false,
    }];
    let mut exits = Vec::with_capacity(n);
    let size_of = |node: usize| if node < n { 1 } else { nodes[node - n].size };

    let collect_points = |node: usize, out: &mut Vec<usize>| {
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            if v < n {
                out.push(v);
            } else {
                let m = &nodes[v - n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
    };

    if n == 1 {
        exits.push(PointExit {
            point: 0,
            cluster: 0,
            lambda: 0.0,
        });
    }

    let mut stack = Vec::new();
    if n >= 2 {
        stack.push((2 * n - 2, 0usize));
    }
    let mut buf = Vec::new();
    while let Some((node, cluster)) = stack.pop() {
        if node < n {
            // only reachable with min_cluster_size 1
            let lambda = clusters[cluster].birth_lambda;
            exits.push(PointExit {
                point: node,
                cluster,
                lambda,
            });
            continue;
        }
        let m = &nodes[node - n];
        let lambda = lambda_of(m.weight);
        let (l, r) = (m.left, m.right);
        let l_big = size_of(l) >= min_cluster_size;
        let r_big = size_of(r) >= min_cluster_size;
        if l_big && r_big {
            for child in [l, r] {
                let id = clusters.len();
                clusters.push(CondensedCluster {
                    parent: Some(cluster),
                    children: Vec::new(),
                    birth_lambda: lambda,
                    size: size_of(child),
                    stability: 0.0,
                    selected: false,
                });
                clusters[cluster].children.push(id);
                stack.push((child, id));
            }
        } else {
            for (child, big) in [(l, l_big), (r, r_big)] {
                if big {
                    stack.push((child, cluster));
                } else {
                    buf.clear();
                    collect_points(child, &mut buf);
                    exits.extend(buf.iter().map(|&p| PointExit {
                        point: p,
                        cluster,
                        lambda,
                    }));
                }
            }
        }
    }

    // zero mutual-reachability distances give infinite density; clamp them to
    // twice the densest finite level so stabilities stay finite and splits
    // between exact duplicates carry no stability of their own
    let finite_max = exits
        .iter()
        .map(|e| e.lambda)
        .chain(clusters.iter().map(|c| c.birth_lambda))
        .filter(|l| l.is_finite())
        .fold(0.0f64, f64::max);
    let cap = if finite_max > 0.0 { 2.0 * finite_max } else { 1.0 };
    for e in &mut exits {
        e.lambda = e.lambda.min(cap);
    }
    for c in &mut clusters {
        c.birth_lambda = c.birth_lambda.min(cap);
    }

    for e in &exits {
        let birth = clusters[e.cluster].birth_lambda;
        clusters[e.cluster].stability += e.lambda - birth;
    }
    for id in 1..clusters.len() {
        let parent = clusters[id].parent.expect("non-root cluster has a parent");
        let contribution = (clusters[id].birth_lambda - clusters[parent].birth_lambda)
            * clusters[id].size as f64;
        clusters[parent].stability += contribution;
    }

    exits.sort_by_key(|e| e.point);
    CondensedTree {
        clusters,
        exits,
        min_cluster_size,
    }
}

/// Excess-of-mass selection; the root is never selected.
fn select_clusters(tree: &mut CondensedTree) {
    let k = tree.clusters.len();
    let mut subtree = vec![0.0; k];
    // children always have larger ids than their parent
    for id in (1..k).rev() {
        let children = tree.clusters[id].children.clone();
        if children.is_empty() {
            tree.clusters[id].selected = true;
            subtree[id] = tree.clusters[id].stability;
            continue;
        }
        let child_sum: f64 = children.iter().map(|&c| subtree[c]).sum();
        if tree.clusters[id].stability > child_sum {
            tree.clusters[id].selected = true;
            subtree[id] = tree.clusters[id].stability;
            let mut stack = children;
            while let Some(c) = stack.pop() {
                tree.clusters[c].selected = false;
                stack.extend(tree.clusters[c].children.iter().copied());
            }
        } else {
            subtree[id] = child_sum;
        }
    }
    tree.clusters[0].selected = false;
}

/// HDBSCAN clustering. Returns the assignment and the condensed tree it was read from.
pub fn hdbscan(
    points: &Matrix,
    params: &HdbscanParams,
) -> Result<(ClusterAssignment, CondensedTree), ClusterError> {
    params.validate()?;
    let n = points.rows();
    if n < params.min_cluster_size {
        return Err(ClusterError::InsufficientPoints {
            required: params.min_cluster_size,
            found: n,
        });
    }
    let edges = mutual_reachability_mst(points, params.min_samples)?;
    let nodes = merge_tree(n, edges);
    let mut tree = condense(n, &nodes, params.min_cluster_size);
    select_clusters(&mut tree);

    // nearest selected ancestor (or self) of every condensed cluster
    let mut owner: Vec<Option<usize>> = vec![None; tree.clusters.len()];
    for id in 1..tree.clusters.len() {
        owner[id] = if tree.clusters[id].selected {
            Some(id)
        } else {
            tree.clusters[id].parent.and_then(|p| owner[p])
        };
    }
    let mut raw = vec![NOISE; n];
    for e in &tree.exits {
        if let Some(c) = owner[e.cluster] {
            raw[e.point] = c as i64;
        }
    }

    let echo = serde_json::json!({
        "min_cluster_size": params.min_cluster_size,
        "min_samples": params.min_samples,
        "selection": params.selection,
    });
    Ok((ClusterAssignment::from_raw_labels(&raw, "hdbscan", echo), tree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::ClusterSelection;

    fn params(min_cluster_size: usize, min_samples: usize) -> HdbscanParams {
        HdbscanParams {
            min_cluster_size,
            min_samples,
            selection: ClusterSelection::ExcessOfMass,
        }
    }

    #[test]
    fn core_distance_k1_is_zero() {
        let m = Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [5.0, 5.0]]);
        assert_eq!(core_distances(&m, 1).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn core_distance_on_a_line() {
        let m = Matrix::from_vec(3, 1, vec![0.0, 1.0, 3.0]);
        assert_eq!(core_distances(&m, 2).unwrap(), vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn core_distance_duplicates() {
        let m = Matrix::from_vec(4, 1, vec![0.0, 0.0, 5.0, 5.0]);
        assert_eq!(core_distances(&m, 2).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn core_distance_k_too_large() {
        let m = Matrix::from_vec(2, 1, vec![0.0, 1.0]);
        assert_eq!(
            core_distances(&m, 3),
            Err(ClusterError::KTooLarge { k: 3, n: 2 })
        );
    }

    #[test]
    fn two_far_pairs() {
        // MST by hand: (0,1)=1, (2,3)=1, (1,2)=99 → root splits into the two pairs
        let m = Matrix::from_vec(4, 1, vec![0.0, 1.0, 100.0, 101.0]);
        let edges = mutual_reachability_mst(&m, 1).unwrap();
        let total: f64 = edges.iter().map(|e| e.weight).sum();
        assert_eq!(total, 101.0);
        let (a, tree) = hdbscan(&m, &params(2, 1)).unwrap();
        assert_eq!(a.labels(), &[0, 0, 1, 1]);
        assert_eq!(a.noise_count(), 0);
        assert_eq!(tree.clusters.len(), 3);
        // each pair: born at 1/99, both points leave at 1/1
        let expected = 2.0 * (1.0 - 1.0 / 99.0);
        assert!((tree.clusters[1].stability - expected).abs() < 1e-12);
    }

    #[test]
    fn root_is_never_selected() {
        let m = Matrix::from_vec(6, 1, vec![0.0, 0.3, 0.9, 1.4, 2.2, 3.1]);
        let (a, tree) = hdbscan(&m, &params(6, 2)).unwrap();
        assert_eq!(a.n_clusters(), 0);
        assert_eq!(a.noise_count(), 6);
        assert_eq!(tree.clusters.len(), 1);
        assert!(!tree.clusters[0].selected);
    }

    #[test]
    fn insufficient_points() {
        let m = Matrix::from_vec(3, 1, vec![0.0, 1.0, 2.0]);
        assert_eq!(
            hdbscan(&m, &params(4, 1)).unwrap_err(),
            ClusterError::InsufficientPoints {
                required: 4,
                found: 3
            }
        );
    }

    #[test]
    fn duplicates_keep_stability_finite() {
        let m = Matrix::from_vec(
            8,
            1,
            vec![0.0, 0.0, 0.0, 0.0, 50.0, 50.0, 50.0, 50.0],
        );
        let (a, tree) = hdbscan(&m, &params(2, 2)).unwrap();
        assert!(tree.clusters.iter().all(|c| c.stability.is_finite()));
        assert_eq!(a.n_clusters(), 2);
        assert_eq!(a.labels(), &[0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn parent_beats_fragmented_children() {
        // one long-lived group that splits late into two small halves:
        // halves score 4·(10 − 1/0.15) each, the parent 8·(1/0.15 − 1/39.25)
        let xs = vec![0.0, 0.1, 0.2, 0.3, 0.45, 0.55, 0.65, 0.75, 40.0, 40.1, 40.2, 40.3];
        let m = Matrix::from_vec(xs.len(), 1, xs);
        let (a, tree) = hdbscan(&m, &params(4, 1)).unwrap();
        assert_eq!(a.labels(), &[0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1]);
        let selected: Vec<_> = tree.clusters.iter().filter(|c| c.selected).collect();
        assert_eq!(selected.len(), 2);
    }
}
