use crate::error::{Error, Result};
use crate::model::Matrix;

/// An undirected tree edge with its Euclidean length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

impl TreeEdge {
    fn key(&self) -> (usize, usize) {
        (self.a.min(self.b), self.a.max(self.b))
    }
}

/// Minimum spanning tree of the complete Euclidean graph on the rows of
/// `points`, by a dense O(n^2) Prim pass from node 0. Equal distances are
/// resolved toward the lower node index.
pub fn minimum_spanning_tree(points: &Matrix) -> Vec<TreeEdge> {
    let n = points.nrows();
    if n == 0 {
        return Vec::new();
    }
    let d = points.ncols();
    let flat: Vec<f64> = (0..n).flat_map(|i| points.row(i).iter().copied().collect::<Vec<_>>()).collect();
    let row = |i: usize| &flat[i * d..(i + 1) * d];
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);

    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let rc = row(current);
        for j in 0..n {
            if !in_tree[j] {
                let dist: f64 = row(j).iter().zip(rc).map(|(x, y)| (x - y) * (x - y)).sum();
                if dist < best[j] {
                    best[j] = dist;
                    parent[j] = current;
                }
            }
        }
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push(TreeEdge {
            a: parent[next],
            b: next,
            weight: best[next].sqrt(),
        });
        current = next;
    }
    edges
}

/// Cuts the `k - 1` heaviest edges of the spanning tree and returns the
/// connected components as labels. Components are numbered by their lowest
/// node index.
pub fn mst_clusters(points: &Matrix, k: usize) -> Result<Vec<usize>> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "K = {k} must lie in 1..={n}"
        )));
    }
    let mut edges = minimum_spanning_tree(points);
    edges.sort_by(|x, y| y.weight.total_cmp(&x.weight).then(x.key().cmp(&y.key())));

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in &edges[k - 1..] {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }

    let mut component_label = vec![usize::MAX; n];
    let mut next = 0;
    let mut labels = vec![0; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if component_label[root] == usize::MAX {
            component_label[root] = next;
            next += 1;
        }
        labels[i] = component_label[root];
    }
    Ok(labels)
}
