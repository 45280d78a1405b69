//! Connected-component labeling on binary pixel grids by flood fill.

use crate::error::{check_len, Result};
use crate::grid_graph::{Connectivity, GridShape};

/// Per-pixel component labels (`0` = not a member, `1..=count` otherwise) and
/// the number of components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    pub labels: Vec<u32>,
    pub count: usize,
}

impl Labeling {
    /// Pixel count of each component, indexed by `label - 1`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            if l > 0 {
                sizes[l as usize - 1] += 1;
            }
        }
        sizes
    }
}

fn neighbors(
    shape: GridShape,
    conn: Connectivity,
    i: usize,
) -> impl Iterator<Item = usize> {
    let (r, c) = shape.coords(i);
    let (rows, cols) = (shape.rows() as isize, shape.cols() as isize);
    const N4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    const DIAG: [(isize, isize); 4] = [(-1, -1), (-1, 1), (1, -1), (1, 1)];
    let diag: &[(isize, isize)] = match conn {
        Connectivity::N4 => &[],
        Connectivity::N8 => &DIAG,
    };
    N4.iter().chain(diag).filter_map(move |&(dr, dc)| {
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        (nr >= 0 && nr < rows && nc >= 0 && nc < cols)
            .then(|| nr as usize * shape.cols() + nc as usize)
    })
}

/// Labels the `true` pixels of `mask` into connected components.
pub fn label_components(mask: &[bool], shape: GridShape, conn: Connectivity) -> Result<Labeling> {
    check_len(shape.len(), mask.len())?;
    let mut labels = vec![0u32; mask.len()];
    let mut count = 0usize;
    let mut stack = Vec::new();
    for seed in 0..mask.len() {
        if !mask[seed] || labels[seed] != 0 {
            continue;
        }
        count += 1;
        let label = count as u32;
        labels[seed] = label;
        stack.push(seed);
        while let Some(i) = stack.pop() {
            for j in neighbors(shape, conn, i) {
                if mask[j] && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            }
        }
    }
    Ok(Labeling { labels, count })
}

pub fn count_components(mask: &[bool], shape: GridShape, conn: Connectivity) -> Result<usize> {
    Ok(label_components(mask, shape, conn)?.count)
}

/// Number of 4-connected background regions that do not reach the image
/// border, i.e. holes of the 8-connected foreground.
pub fn count_holes(mask: &[bool], shape: GridShape) -> Result<usize> {
    let background: Vec<bool> = mask.iter().map(|&m| !m).collect();
    let lab = label_components(&background, shape, Connectivity::N4)?;
    let mut touches = vec![false; lab.count];
    let (rows, cols) = (shape.rows(), shape.cols());
    for (i, &l) in lab.labels.iter().enumerate() {
        let (r, c) = shape.coords(i);
        if l > 0 && (r == 0 || c == 0 || r + 1 == rows || c + 1 == cols) {
            touches[l as usize - 1] = true;
        }
    }
    Ok(touches.iter().filter(|t| !**t).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(rows: &[&str]) -> (Vec<bool>, GridShape) {
        let shape = GridShape::new(rows.len(), rows[0].len()).unwrap();
        let mask = rows
            .iter()
            .flat_map(|r| r.chars().map(|ch| ch == '#'))
            .collect();
        (mask, shape)
    }

    #[test]
    fn diagonal_pair_connectivity() {
        let (m, s) = parse(&["#.", ".#"]);
        assert_eq!(count_components(&m, s, Connectivity::N8).unwrap(), 1);
        assert_eq!(count_components(&m, s, Connectivity::N4).unwrap(), 2);
    }

    #[test]
    fn ring_has_one_hole() {
        let (m, s) = parse(&["###", "#.#", "###"]);
        assert_eq!(count_components(&m, s, Connectivity::N8).unwrap(), 1);
        assert_eq!(count_holes(&m, s).unwrap(), 1);
    }

    #[test]
    fn diagonal_ring_encloses_four_connected_hole() {
        let (m, s) = parse(&[".#.", "#.#", ".#."]);
        assert_eq!(count_components(&m, s, Connectivity::N8).unwrap(), 1);
        assert_eq!(count_holes(&m, s).unwrap(), 1);
    }

    #[test]
    fn sizes_and_empty() {
        let (m, s) = parse(&["##..", "...#", "...."]);
        let lab = label_components(&m, s, Connectivity::N8).unwrap();
        assert_eq!(lab.count, 2);
        assert_eq!(lab.sizes(), vec![2, 1]);
        let (m, s) = parse(&["...", "..."]);
        assert_eq!(count_components(&m, s, Connectivity::N8).unwrap(), 0);
        assert_eq!(count_holes(&m, s).unwrap(), 0);
        assert!(count_components(&m[..5], s, Connectivity::N8).is_err());
    }
}
