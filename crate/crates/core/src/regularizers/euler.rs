//! Euler characteristic of a pixel complex: vertices minus edges plus faces.
//!
//! Pixels are vertices; edges are rook neighbors plus one diagonal per 2x2
//! block; faces are the two triangles that diagonal cuts each block into. The
//! diagonal is fixed per [`EcDirection`]. The soft variant replaces every
//! indicator product by the product of probabilities, which is multilinear in
//! `y` and agrees with the hard count on binary inputs.

use super::{check_unit_interval, LossGrad};
use crate::error::{check_len, Error, Result};
use crate::grid_graph::GridShape;

/// Diagonal used to triangulate every 2x2 block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EcDirection {
    /// `(r, c)` to `(r + 1, c + 1)`.
    Dir1,
    /// `(r, c + 1)` to `(r + 1, c)`.
    Dir2,
}

impl EcDirection {
    pub const BOTH: [EcDirection; 2] = [EcDirection::Dir1, EcDirection::Dir2];

    /// For a block with corners `tl, tr, bl, br`, the diagonal endpoints and
    /// the two triangles.
    #[inline]
    fn block(self, tl: usize, tr: usize, bl: usize, br: usize) -> ([usize; 2], [[usize; 3]; 2]) {
        match self {
            EcDirection::Dir1 => ([tl, br], [[tl, tr, br], [tl, bl, br]]),
            EcDirection::Dir2 => ([tr, bl], [[tl, tr, bl], [tr, br, bl]]),
        }
    }
}

/// Edges of the complex for either direction: rook edges plus one diagonal
/// per 2x2 block.
pub(crate) fn complex_edge_count(shape: GridShape) -> usize {
    let (r, c) = (shape.rows(), shape.cols());
    r * (c - 1) + c * (r - 1) + (r - 1) * (c - 1)
}

#[derive(Debug, Clone, Copy)]
enum Cell {
    Edge(usize, usize),
    Face([usize; 3]),
}

/// Visits every edge and triangle of the complex.
fn visit_complex(shape: GridShape, dir: EcDirection, mut visit: impl FnMut(Cell)) {
    let (rows, cols) = (shape.rows(), shape.cols());
    for r in 0..rows {
        for c in 0..cols {
            let i = shape.index(r, c);
            if c + 1 < cols {
                visit(Cell::Edge(i, i + 1));
            }
            if r + 1 < rows {
                visit(Cell::Edge(i, i + cols));
            }
            if r + 1 < rows && c + 1 < cols {
                let (diag, tris) = dir.block(i, i + 1, i + cols, i + cols + 1);
                visit(Cell::Edge(diag[0], diag[1]));
                visit(Cell::Face(tris[0]));
                visit(Cell::Face(tris[1]));
            }
        }
    }
}

/// Integer Euler characteristic `P - S + F` of a binary image.
pub fn euler_characteristic_hard(shape: GridShape, b: &[f64], dir: EcDirection) -> Result<i64> {
    check_len(shape.len(), b.len())?;
    if let Some(i) = b.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput(format!(
            "binary image expected, got {} at pixel {i}",
            b[i]
        )));
    }
    let on: Vec<bool> = b.iter().map(|&v| v == 1.0).collect();
    let vertices = on.iter().filter(|&&v| v).count() as i64;
    let mut edges = 0i64;
    let mut faces = 0i64;
    visit_complex(shape, dir, |cell| match cell {
        Cell::Edge(i, j) => edges += (on[i] && on[j]) as i64,
        Cell::Face([i, j, k]) => faces += (on[i] && on[j] && on[k]) as i64,
    });
    Ok(vertices - edges + faces)
}

/// Multilinear relaxation of the Euler characteristic and its gradient.
pub fn euler_characteristic_soft(shape: GridShape, y: &[f64], dir: EcDirection) -> Result<LossGrad> {
    check_len(shape.len(), y.len())?;
    check_unit_interval(y, "probabilities")?;
    let mut grad = vec![1.0; y.len()];
    let mut value: f64 = y.iter().sum();
    let mut edge_sum = 0.0;
    let mut face_sum = 0.0;
    visit_complex(shape, dir, |cell| match cell {
        Cell::Edge(i, j) => {
            edge_sum += y[i] * y[j];
            grad[i] -= y[j];
            grad[j] -= y[i];
        }
        Cell::Face([i, j, k]) => {
            face_sum += y[i] * y[j] * y[k];
            grad[i] += y[j] * y[k];
            grad[j] += y[i] * y[k];
            grad[k] += y[i] * y[j];
        }
    });
    value += face_sum - edge_sum;
    Ok(LossGrad { value, grad })
}

/// Mean of the soft Euler characteristic over both triangulation directions.
pub fn ec_regularizer(shape: GridShape, y: &[f64]) -> Result<LossGrad> {
    let a = euler_characteristic_soft(shape, y, EcDirection::Dir1)?;
    let b = euler_characteristic_soft(shape, y, EcDirection::Dir2)?;
    Ok(LossGrad {
        value: 0.5 * (a.value + b.value),
        grad: a.grad.iter().zip(&b.grad).map(|(p, q)| 0.5 * (p + q)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn parse(rows: &[&str]) -> (GridShape, Vec<f64>) {
        let shape = GridShape::new(rows.len(), rows[0].len()).unwrap();
        let b = rows
            .iter()
            .flat_map(|r| r.chars().map(|ch| (ch == '#') as u8 as f64))
            .collect();
        (shape, b)
    }

    fn hard_both(rows: &[&str]) -> [i64; 2] {
        let (s, b) = parse(rows);
        EcDirection::BOTH.map(|d| euler_characteristic_hard(s, &b, d).unwrap())
    }

    #[test]
    fn fixtures() {
        assert_eq!(hard_both(&["...", "..."]), [0, 0]);
        assert_eq!(hard_both(&["...", ".#.", "..."]), [1, 1]);
        assert_eq!(hard_both(&["###", "#.#", "###"]), [0, 0]);
        assert_eq!(hard_both(&["##", "##"]), [1, 1]);
        assert_eq!(hard_both(&["#.", ".#"]), [1, 2]);
        assert_eq!(hard_both(&[".#", "#."]), [2, 1]);
    }

    #[test]
    fn ring_counts() {
        // P = 8, S = 8 rook + 2 diagonals, F = 2 in either direction.
        let (s, b) = parse(&["###", "#.#", "###"]);
        let on = |i: usize| b[i] == 1.0;
        for dir in EcDirection::BOTH {
            let (mut edges, mut faces) = (0, 0);
            visit_complex(s, dir, |cell| match cell {
                Cell::Edge(i, j) => edges += (on(i) && on(j)) as i32,
                Cell::Face([i, j, k]) => faces += (on(i) && on(j) && on(k)) as i32,
            });
            assert_eq!((edges, faces), (10, 2));
        }
    }

    #[test]
    fn rejects_non_binary_and_out_of_range() {
        let s = GridShape::new(1, 2).unwrap();
        assert!(euler_characteristic_hard(s, &[0.5, 1.0], EcDirection::Dir1).is_err());
        assert!(euler_characteristic_soft(s, &[1.2, 0.0], EcDirection::Dir1).is_err());
        assert!(euler_characteristic_soft(s, &[0.2], EcDirection::Dir1).is_err());
    }

    #[test]
    fn single_soft_pixel() {
        let s = GridShape::new(3, 3).unwrap();
        let mut y = vec![0.0; 9];
        y[4] = 0.6;
        for dir in EcDirection::BOTH {
            let r = euler_characteristic_soft(s, &y, dir).unwrap();
            assert!((r.value - 0.6).abs() < 1e-15);
            assert_eq!(r.grad[4], 1.0);
        }
    }

    #[test]
    fn diagonal_pair_regularizer() {
        let (s, b) = parse(&["#.", ".#"]);
        assert_eq!(ec_regularizer(s, &b).unwrap().value, 1.5);
        assert_eq!(ec_regularizer(s, &[0.0; 4]).unwrap().value, 0.0);
    }

    #[test]
    fn soft_equals_hard_on_binary() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = GridShape::new(7, 9).unwrap();
        for _ in 0..200 {
            let b: Vec<f64> = (0..63).map(|_| rng.random_bool(0.5) as u8 as f64).collect();
            for dir in EcDirection::BOTH {
                let hard = euler_characteristic_hard(s, &b, dir).unwrap();
                let soft = euler_characteristic_soft(s, &b, dir).unwrap().value;
                assert_eq!(soft, hard as f64);
            }
        }
    }

    #[test]
    fn soft_gradient_is_exact_for_multilinear_form() {
        // Central differences are exact (up to rounding) on a polynomial that
        // is linear in each coordinate.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = GridShape::new(4, 5).unwrap();
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(0.1..0.9)).collect();
        let r = euler_characteristic_soft(s, &y, EcDirection::Dir2).unwrap();
        let h = 1e-4;
        for i in 0..20 {
            let mut p = y.clone();
            p[i] += h;
            let up = euler_characteristic_soft(s, &p, EcDirection::Dir2).unwrap().value;
            p[i] -= 2.0 * h;
            let down = euler_characteristic_soft(s, &p, EcDirection::Dir2).unwrap().value;
            assert!(((up - down) / (2.0 * h) - r.grad[i]).abs() < 1e-9);
        }
    }
}
