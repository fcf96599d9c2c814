use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{HPolytope, IntervalBox, SupportFunction};
use crate::linalg::null_space;
use crate::{Error, Result};

/// Image `{M w + c : w in B}` of a box, kept as a zonotope (center plus
/// generators) next to its H-representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxImage {
    #[serde(with = "crate::serde_mat::vector")]
    pub center: DVector<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub generators: DMatrix<f64>,
    pub polytope: HPolytope,
    /// The image has an empty interior (its generators do not span the space).
    pub degenerate: bool,
}

impl SupportFunction for BoxImage {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn support(&self, dir: &DVector<f64>) -> Result<f64> {
        if dir.len() != self.center.len() {
            return Err(Error::Dimension(format!(
                "direction has length {}, set dimension {}",
                dir.len(),
                self.center.len()
            )));
        }
        let spread: f64 = (self.generators.transpose() * dir).iter().map(|v| v.abs()).sum();
        Ok(dir.dot(&self.center) + spread)
    }
}

impl BoxImage {
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let p = self.generators.ncols();
        (0..1usize << p)
            .map(|mask| {
                let mut x = self.center.clone();
                for j in 0..p {
                    let s = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
                    x.axpy(s, &self.generators.column(j).into_owned(), 1.0);
                }
                x
            })
            .collect()
    }
}

/// Exact H-representation of the affine image of a box.
pub fn affine_image_box(m: &DMatrix<f64>, c: &DVector<f64>, b: &IntervalBox) -> Result<BoxImage> {
    let n = m.nrows();
    if m.ncols() != b.lo.len() || c.len() != n {
        return Err(Error::Dimension(format!(
            "map is {}x{}, offset {}, box dimension {}",
            m.nrows(),
            m.ncols(),
            c.len(),
            b.lo.len()
        )));
    }
    let center = m * b.center() + c;
    let hw = b.half_widths();
    let cols: Vec<DVector<f64>> = (0..m.ncols())
        .map(|j| m.column(j) * hw[j])
        .filter(|g| g.norm() > 1e-14)
        .collect();
    let generators = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);

    // Orthonormal basis of the generator span and of its complement.
    let (range, rank) = if cols.is_empty() {
        (DMatrix::zeros(n, 0), 0)
    } else {
        let svd = generators.clone().svd(true, false);
        let u = svd.u.expect("requested U");
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|s| **s > 1e-12 * smax.max(1.0))
            .count();
        (u.columns(0, rank).into_owned(), rank)
    };
    let complement = null_space(&range.transpose(), 1e-12);

    let mut normals: Vec<DVector<f64>> = Vec::new();
    let mut offsets: Vec<f64> = Vec::new();
    let add = |d: DVector<f64>, normals: &mut Vec<DVector<f64>>, offsets: &mut Vec<f64>| {
        let spread: f64 = cols.iter().map(|g| d.dot(g).abs()).sum();
        offsets.push(d.dot(&center) + spread);
        normals.push(d);
    };
    if rank > 0 {
        let reduced: Vec<DVector<f64>> = cols.iter().map(|g| range.transpose() * g).collect();
        let mut dirs: Vec<DVector<f64>> = Vec::new();
        if rank == 1 {
            dirs.push(DVector::from_element(1, 1.0));
        } else {
            for subset in combinations(reduced.len(), rank - 1) {
                let a = DMatrix::from_fn(rank - 1, rank, |i, j| reduced[subset[i]][j]);
                let nsp = null_space(&a, 1e-10);
                if nsp.ncols() != 1 {
                    continue;
                }
                let d = nsp.column(0).into_owned();
                if !dirs.iter().any(|e| (e - &d).norm() < 1e-9 || (e + &d).norm() < 1e-9) {
                    dirs.push(d);
                }
            }
        }
        for d in dirs {
            let full = &range * &d;
            add(full.clone(), &mut normals, &mut offsets);
            add(-full, &mut normals, &mut offsets);
        }
    }
    for j in 0..complement.ncols() {
        let d = complement.column(j).into_owned();
        add(d.clone(), &mut normals, &mut offsets);
        add(-d, &mut normals, &mut offsets);
    }
    let g = DMatrix::from_fn(normals.len(), n, |i, j| normals[i][j]);
    let polytope = HPolytope::new(g, DVector::from_vec(offsets))?;
    Ok(BoxImage {
        center,
        generators,
        polytope,
        degenerate: rank < n,
    })
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotated_square() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
        let img = affine_image_box(&m, &DVector::zeros(2), &IntervalBox::symmetric(&[1.0, 1.0])).unwrap();
        assert!(!img.degenerate);
        assert_eq!(img.polytope.num_rows(), 4);
        for v in img.vertices() {
            assert!(img.polytope.contains(&v));
        }
        assert!(img.polytope.contains(&DVector::from_vec(vec![2.0, 0.0])));
        assert!(!img.polytope.contains(&DVector::from_vec(vec![1.5, 1.5])));
    }

    #[test]
    fn segment_image_is_flagged() {
        let m = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        let img = affine_image_box(&m, &DVector::zeros(3), &IntervalBox::symmetric(&[0.05])).unwrap();
        assert!(img.degenerate);
        let d = DVector::from_vec(vec![0.3, -0.2, 1.0]);
        assert!((img.support(&d).unwrap() - 0.05).abs() < 1e-15);
        assert!((img.polytope.support(&d).unwrap() - 0.05).abs() < 1e-9);
    }
}
