//! Hierarchical density-based clustering over Euclidean points.
//!
//! Pipeline: core distances from the `min_samples` nearest neighbors, mutual
//! reachability distances, a minimum spanning tree (Prim, distances computed
//! on the fly so memory stays O(n)), single-linkage hierarchy, condensation
//! by `min_cluster_size`, and excess-of-mass cluster selection. Points in no
//! stable cluster are labeled noise (-1). Everything is deterministic for a
//! fixed input order; ties break toward the lowest point index.

use crate::{Error, Result};

pub const NOISE: i32 = -1;

// Duplicates give zero merge distances; lambda = 1/d is capped so stability
// arithmetic stays finite.
const LAMBDA_CAP: f64 = 1e12;

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance to the `min_samples`-th nearest neighbor, the point itself
/// counting as the first.
fn core_distances(points: &[Vec<f64>], min_samples: usize) -> Vec<f64> {
    let n = points.len();
    let k = min_samples.min(n);
    let mut core = vec![0.0; n];
    let mut dists = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..n {
            dists[j] = euclidean(&points[i], &points[j]);
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        core[i] = dists[k - 1];
    }
    core
}

struct MstEdge {
    a: usize,
    b: usize,
    weight: f64,
}

/// Prim over the implicit mutual-reachability graph.
fn mutual_reachability_mst(points: &[Vec<f64>], core: &[f64]) -> Vec<MstEdge> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut best_from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0usize;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = euclidean(&points[current], &points[j])
                .max(core[current])
                .max(core[j]);
            if d < best[j] {
                best[j] = d;
                best_from[j] = current;
            }
        }
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for j in 0..n {
            if !in_tree[j] && best[j] < next_w {
                next_w = best[j];
                next = j;
            }
        }
        edges.push(MstEdge {
            a: best_from[next],
            b: next,
            weight: next_w,
        });
        in_tree[next] = true;
        current = next;
    }
    edges
}

/// One merge in the single-linkage dendrogram. Node ids: 0..n-1 are points,
/// n..2n-2 are merged clusters in creation order.
struct LinkNode {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

fn single_linkage(n: usize, mut edges: Vec<MstEdge>) -> Vec<LinkNode> {
    edges.sort_by(|x, y| {
        x.weight
            .partial_cmp(&y.weight)
            .unwrap()
            .then(x.a.min(x.b).cmp(&y.a.min(y.b)))
            .then(x.a.max(x.b).cmp(&y.a.max(y.b)))
    });
    // union-find tracking the current dendrogram node of each root
    let mut parent: Vec<usize> = (0..n).collect();
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut size_of: Vec<usize> = vec![1; 2 * n];
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut links = Vec::with_capacity(n.saturating_sub(1));
    for e in edges {
        let ra = find(&mut parent, e.a);
        let rb = find(&mut parent, e.b);
        debug_assert_ne!(ra, rb);
        let new_node = n + links.len();
        let (la, lb) = (node_of[ra], node_of[rb]);
        size_of[new_node] = size_of[la] + size_of[lb];
        links.push(LinkNode {
            left: la,
            right: lb,
            distance: e.weight,
            size: size_of[new_node],
        });
        parent[ra] = rb;
        node_of[rb] = new_node;
    }
    links
}

/// Condensed-tree row: `child` is either a point (< n) or a cluster id.
struct CondensedRow {
    parent: usize,
    child: usize,
    lambda: f64,
    size: usize,
}

/// Walk the dendrogram top-down, keeping only splits where both sides reach
/// `min_cluster_size`; smaller sides fall out of their parent as points.
fn condense(n: usize, links: &[LinkNode], min_cluster_size: usize) -> Vec<CondensedRow> {
    let root = 2 * n - 2;
    let node_size = |node: usize| -> usize {
        if node < n {
            1
        } else {
            links[node - n].size
        }
    };
    let mut rows = Vec::new();
    // condensed cluster ids start at n (the root)
    let mut next_label = n + 1;
    // stack of (dendrogram node, condensed parent label)
    let mut stack = vec![(root, n)];
    // collect all leaf points under a dendrogram node
    fn collect_points(n: usize, links: &[LinkNode], node: usize, out: &mut Vec<usize>) {
        let mut st = vec![node];
        while let Some(x) = st.pop() {
            if x < n {
                out.push(x);
            } else {
                st.push(links[x - n].left);
                st.push(links[x - n].right);
            }
        }
    }
    while let Some((node, label)) = stack.pop() {
        if node < n {
            continue;
        }
        let link = &links[node - n];
        let lambda = if link.distance > 0.0 {
            (1.0 / link.distance).min(LAMBDA_CAP)
        } else {
            LAMBDA_CAP
        };
        let (l, r) = (link.left, link.right);
        let (ls, rs) = (node_size(l), node_size(r));
        if ls >= min_cluster_size && rs >= min_cluster_size {
            for &(child, csize) in &[(l, ls), (r, rs)] {
                let new_label = next_label;
                next_label += 1;
                rows.push(CondensedRow {
                    parent: label,
                    child: new_label,
                    lambda,
                    size: csize,
                });
                stack.push((child, new_label));
            }
        } else if ls < min_cluster_size && rs < min_cluster_size {
            let mut pts = Vec::new();
            collect_points(n, links, node, &mut pts);
            for p in pts {
                rows.push(CondensedRow {
                    parent: label,
                    child: p,
                    lambda,
                    size: 1,
                });
            }
        } else {
            // one side falls out; the cluster identity continues down the other
            let (keep, drop_side) = if ls >= min_cluster_size { (l, r) } else { (r, l) };
            let mut pts = Vec::new();
            collect_points(n, links, drop_side, &mut pts);
            for p in pts {
                rows.push(CondensedRow {
                    parent: label,
                    child: p,
                    lambda,
                    size: 1,
                });
            }
            stack.push((keep, label));
        }
    }
    rows
}

/// Excess-of-mass stabilities and selection. The root cluster is never
/// selected (a single all-encompassing cluster carries no signal).
fn select_clusters(n: usize, rows: &[CondensedRow]) -> Vec<usize> {
    let max_label = rows
        .iter()
        .map(|r| r.parent.max(r.child))
        .max()
        .unwrap_or(n);
    let mut birth = vec![f64::INFINITY; max_label + 1];
    birth[n] = 0.0;
    for r in rows {
        if r.child >= n {
            birth[r.child] = r.lambda;
        }
    }
    let mut stability = vec![0.0f64; max_label + 1];
    for r in rows {
        stability[r.parent] += (r.lambda - birth[r.parent]) * r.size as f64;
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); max_label + 1];
    for r in rows {
        if r.child >= n {
            children[r.parent].push(r.child);
        }
    }
    let mut selected = vec![false; max_label + 1];
    let mut subtree = stability.clone();
    // labels were assigned top-down, so reverse order visits children first
    for c in (n..=max_label).rev() {
        if children[c].is_empty() {
            selected[c] = c != n;
            subtree[c] = stability[c];
            continue;
        }
        let child_sum: f64 = children[c].iter().map(|&k| subtree[k]).sum();
        if stability[c] > child_sum && c != n {
            selected[c] = true;
            // unselect the whole subtree below
            let mut st = children[c].clone();
            while let Some(x) = st.pop() {
                selected[x] = false;
                st.extend(children[x].iter().copied());
            }
            subtree[c] = stability[c];
        } else {
            subtree[c] = child_sum;
        }
    }
    (n..=max_label).filter(|&c| selected[c]).collect()
}

/// Cluster labels for `points`; noise is -1, clusters are dense ids ordered
/// by lowest member point index.
pub fn cluster(points: &[Vec<f64>], min_cluster_size: usize, min_samples: usize) -> Result<Vec<i32>> {
    let n = points.len();
    if min_cluster_size < 2 {
        return Err(Error::Usage("min_cluster_size must be >= 2".into()));
    }
    if n < min_cluster_size {
        return Err(Error::Data(format!(
            "need at least min_cluster_size={min_cluster_size} points, got {n}"
        )));
    }
    if let Some(p) = points.iter().find(|p| p.len() != points[0].len()) {
        return Err(Error::Dimension {
            expected: points[0].len(),
            got: p.len(),
        });
    }
    // all-identical degenerate input: one cluster at mutual reachability 0
    if points.iter().all(|p| p == &points[0]) {
        return Ok(vec![0; n]);
    }
    let core = core_distances(points, min_samples);
    let mst = mutual_reachability_mst(points, &core);
    let links = single_linkage(n, mst);
    let rows = condense(n, &links, min_cluster_size);
    let chosen = select_clusters(n, &rows);

    // assign each point to its nearest selected ancestor in the condensed tree
    let max_label = rows
        .iter()
        .map(|r| r.parent.max(r.child))
        .max()
        .unwrap_or(n);
    let mut cluster_parent = vec![usize::MAX; max_label + 1];
    let mut point_parent = vec![usize::MAX; n];
    for r in &rows {
        if r.child < n {
            point_parent[r.child] = r.parent;
        } else {
            cluster_parent[r.child] = r.parent;
        }
    }
    let is_chosen = {
        let mut v = vec![false; max_label + 1];
        for &c in &chosen {
            v[c] = true;
        }
        v
    };
    let mut raw = vec![usize::MAX; n];
    for p in 0..n {
        let mut c = point_parent[p];
        while c != usize::MAX {
            if is_chosen[c] {
                raw[p] = c;
                break;
            }
            c = cluster_parent[c];
        }
    }
    // dense relabeling by lowest member index
    let mut labels = vec![NOISE; n];
    let mut order: Vec<usize> = Vec::new();
    for p in 0..n {
        if raw[p] != usize::MAX && !order.contains(&raw[p]) {
            order.push(raw[p]);
        }
    }
    for p in 0..n {
        if raw[p] != usize::MAX {
            labels[p] = order.iter().position(|&c| c == raw[p]).unwrap() as i32;
        }
    }
    Ok(labels)
}
