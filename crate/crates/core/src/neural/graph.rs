use ndarray::ArrayView2;

/// Neighbor lists in compressed-row form. Row `i` lists the nodes whose
/// features node `i` aggregates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::empty(0)
    }
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self {
            offsets: vec![0; n + 1],
            neighbors: Vec::new(),
        }
    }

    /// Every node connected to every other node, no self loops.
    pub fn complete(n: usize) -> Self {
        let mut g = Self::with_capacity(n, n * n.saturating_sub(1));
        for i in 0..n {
            g.push_row((0..n).filter(|&j| j != i));
        }
        g
    }

    /// Nonzero entries of a dense adjacency matrix.
    pub fn from_dense(a: ArrayView2<f64>) -> Self {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "adjacency must be square");
        let mut g = Self::with_capacity(n, 0);
        for i in 0..n {
            g.push_row((0..n).filter(|&j| a[[i, j]] != 0.0));
        }
        g
    }

    fn with_capacity(n: usize, edges: usize) -> Self {
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        Self {
            offsets,
            neighbors: Vec::with_capacity(edges),
        }
    }

    fn push_row(&mut self, row: impl Iterator<Item = usize>) {
        self.neighbors.extend(row);
        self.offsets.push(self.neighbors.len());
    }

    /// Disjoint union; node indices of later graphs are shifted past the
    /// earlier ones.
    pub fn block_diagonal<'g>(graphs: impl IntoIterator<Item = &'g Graph>) -> Self {
        let mut out = Self::with_capacity(0, 0);
        let mut base = 0;
        for g in graphs {
            for i in 0..g.node_count() {
                out.push_row(g.neighbors(i).iter().map(|j| j + base));
            }
            base += g.node_count();
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub(crate) fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dense_conversion_and_union() {
        let a = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        let g = Graph::from_dense(a.view());
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.degree(0), 1);
        let k = Graph::complete(2);
        let u = Graph::block_diagonal([&g, &k]);
        assert_eq!(u.node_count(), 5);
        assert_eq!(u.neighbors(3), &[4]);
        assert_eq!(u.neighbors(4), &[3]);
        assert_eq!(u.edge_count(), 6);
        assert_eq!(Graph::empty(3).degree(2), 0);
    }
}
