//! Pixel-grid graphs, their incidence operator and weighted Laplacians.
//!
//! Vertices are pixels indexed row-major (`r * cols + c`). Each undirected edge
//! is stored once as `(i, j)` with `i < j`, so quadratic forms sum over
//! unordered neighbor pairs.

use crate::error::{check_len, Error, Result};

/// Height and width of a pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    rows: usize,
    cols: usize,
}

impl GridShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "grid shape must be at least 1x1, got {rows}x{cols}"
            )));
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize) -> usize {
        debug_assert!(r < self.rows && c < self.cols);
        r * self.cols + c
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i / self.cols, i % self.cols)
    }
}

/// Pixel neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Connectivity {
    /// Rook adjacency.
    #[default]
    N4,
    /// Rook adjacency plus both diagonals of every 2x2 block.
    N8,
}

impl Connectivity {
    /// Closed-form edge count on a grid of the given shape.
    pub fn edge_count(self, shape: GridShape) -> usize {
        let (r, c) = (shape.rows, shape.cols);
        let n4 = r * (c - 1) + c * (r - 1);
        match self {
            Connectivity::N4 => n4,
            Connectivity::N8 => n4 + 2 * (r - 1) * (c - 1),
        }
    }
}

/// Undirected weighted edges over a pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    shape: GridShape,
    connectivity: Connectivity,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl EdgeList {
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Replaces the per-edge weights. All weights must be finite and nonnegative.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        check_len(self.edges.len(), weights.len())?;
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "edge weights must be finite and nonnegative, got {w}"
            )));
        }
        self.weights = weights;
        Ok(self)
    }

    /// Iterates `((i, j), w)`.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.edges.iter().copied().zip(self.weights.iter().copied())
    }

    /// Applies the weighted incidence operator: `(B y)_e = sqrt(w_e) (y_i - y_j)`.
    ///
    /// With unit weights this is the signed edge-difference operator whose
    /// Gram matrix `B^T B` is the grid Laplacian.
    pub fn incidence_apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.shape.len(), y.len())?;
        Ok(self
            .iter()
            .map(|((i, j), w)| w.sqrt() * (y[i] - y[j]))
            .collect())
    }

    /// Applies `B^T` to a per-edge vector.
    pub fn incidence_transpose_apply(&self, d: &[f64]) -> Result<Vec<f64>> {
        check_len(self.edges.len(), d.len())?;
        let mut out = vec![0.0; self.shape.len()];
        for (((i, j), w), &de) in self.iter().zip(d) {
            let v = w.sqrt() * de;
            out[i] += v;
            out[j] -= v;
        }
        Ok(out)
    }
}

/// Enumerates the grid edges in scan order: per pixel right, down, then for
/// [`Connectivity::N8`] down-right and down-left. All weights are 1.
pub fn build_grid_edges(shape: GridShape, connectivity: Connectivity) -> EdgeList {
    let (rows, cols) = (shape.rows, shape.cols);
    let mut edges = Vec::with_capacity(connectivity.edge_count(shape));
    for r in 0..rows {
        for c in 0..cols {
            let i = shape.index(r, c);
            if c + 1 < cols {
                edges.push((i, i + 1));
            }
            if r + 1 < rows {
                edges.push((i, i + cols));
            }
            if connectivity == Connectivity::N8 && r + 1 < rows {
                if c + 1 < cols {
                    edges.push((i, i + cols + 1));
                }
                if c > 0 {
                    // down-left neighbor has the larger index
                    edges.push((i, i + cols - 1));
                }
            }
        }
    }
    let weights = vec![1.0; edges.len()];
    EdgeList {
        shape,
        connectivity,
        edges,
        weights,
    }
}

/// Keeps the edges whose endpoints are both members.
pub fn masked_subgraph(edges: &EdgeList, member: &[bool]) -> Result<EdgeList> {
    check_len(edges.shape.len(), member.len())?;
    let (kept, weights): (Vec<_>, Vec<_>) = edges
        .iter()
        .filter(|&((i, j), _)| member[i] && member[j])
        .unzip();
    Ok(EdgeList {
        shape: edges.shape,
        connectivity: edges.connectivity,
        edges: kept,
        weights,
    })
}

/// Sparse `L = D - A` built from an edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLaplacian {
    degree: Vec<f64>,
    source: EdgeList,
}

impl WeightedLaplacian {
    pub fn n(&self) -> usize {
        self.degree.len()
    }

    pub fn edges(&self) -> &EdgeList {
        &self.source
    }

    /// Diagonal entries `D_ii`.
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }
}

pub fn laplacian_from_edges(edges: &EdgeList) -> WeightedLaplacian {
    let mut degree = vec![0.0; edges.shape.len()];
    for ((i, j), w) in edges.iter() {
        degree[i] += w;
        degree[j] += w;
    }
    WeightedLaplacian {
        degree,
        source: edges.clone(),
    }
}

/// `L y` in `O(|V| + |E|)`.
pub fn laplacian_matvec(l: &WeightedLaplacian, y: &[f64]) -> Result<Vec<f64>> {
    check_len(l.n(), y.len())?;
    let mut out: Vec<f64> = l.degree.iter().zip(y).map(|(d, v)| d * v).collect();
    for ((i, j), w) in l.source.iter() {
        out[i] -= w * y[j];
        out[j] -= w * y[i];
    }
    Ok(out)
}

/// `y^T L y`, evaluated through the matrix-vector product.
pub fn quadratic_form(l: &WeightedLaplacian, y: &[f64]) -> Result<f64> {
    let ly = laplacian_matvec(l, y)?;
    Ok(y.iter().zip(&ly).map(|(a, b)| a * b).sum())
}
