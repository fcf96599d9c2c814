use nalgebra::{DMatrix, DVector};

use super::HPolytope;
use crate::{Error, Result};

/// Row count above which an elimination step gives up.
pub const FM_ROW_CAP: usize = 20_000;

/// Projects `p` onto its first `keep` coordinates by Fourier-Motzkin
/// elimination of the others. The next coordinate to eliminate is the one
/// producing the fewest new rows; redundant rows are removed after each step.
pub fn fourier_motzkin(p: &HPolytope, keep: usize) -> Result<HPolytope> {
    if keep > p.dim() {
        return Err(Error::Dimension(format!(
            "cannot keep {keep} of {} coordinates",
            p.dim()
        )));
    }
    if p.is_empty()? {
        return Ok(HPolytope::empty(keep));
    }
    let mut cur = p.remove_redundancy()?;
    while cur.dim() > keep {
        let n = cur.dim();
        let g = cur.normals();
        let mut best: Option<(usize, usize)> = None;
        for j in keep..n {
            let (mut pos, mut neg, mut zero) = (0usize, 0usize, 0usize);
            for i in 0..cur.num_rows() {
                let a = g[(i, j)];
                if a > 1e-12 {
                    pos += 1;
                } else if a < -1e-12 {
                    neg += 1;
                } else {
                    zero += 1;
                }
            }
            let count = pos * neg + zero;
            if best.map_or(true, |(_, c)| count < c) {
                best = Some((j, count));
            }
        }
        let (j, count) = best.expect("at least one coordinate to eliminate");
        if count > FM_ROW_CAP {
            return Err(Error::ProjectionBlowUp {
                rows: count,
                cap: FM_ROW_CAP,
            });
        }
        cur = eliminate(&cur, j)?.remove_redundancy()?;
    }
    Ok(cur)
}

fn eliminate(p: &HPolytope, j: usize) -> Result<HPolytope> {
    let g = p.normals();
    let o = p.offsets();
    let n = p.dim();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut offs: Vec<f64> = Vec::new();
    for i in 0..p.num_rows() {
        let a = g[(i, j)];
        if a > 1e-12 {
            pos.push(i);
        } else if a < -1e-12 {
            neg.push(i);
        } else {
            rows.push(g.row(i).transpose());
            offs.push(o[i]);
        }
    }
    for &ip in &pos {
        for &iq in &neg {
            let wp = -g[(iq, j)];
            let wq = g[(ip, j)];
            rows.push(g.row(ip).transpose() * wp + g.row(iq).transpose() * wq);
            offs.push(o[ip] * wp + o[iq] * wq);
        }
    }
    let cols: Vec<usize> = (0..n).filter(|&c| c != j).collect();
    let out = DMatrix::from_fn(rows.len(), n - 1, |r, c| rows[r][cols[c]]);
    HPolytope::new(out, DVector::from_vec(offs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_projection() {
        // x >= 0, y >= 0, x + y <= 1 projected onto x gives [0, 1].
        let g = DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]);
        let p = HPolytope::new(g, DVector::from_vec(vec![0.0, 0.0, 1.0])).unwrap();
        let q = fourier_motzkin(&p, 1).unwrap();
        let expected = HPolytope::from_box(&[0.0], &[1.0]);
        assert!(q.set_equal(&expected, 1e-12).unwrap());
    }

    #[test]
    fn empty_projects_to_empty() {
        let p = HPolytope::from_box(&[1.0, 0.0], &[0.0, 1.0]);
        assert!(fourier_motzkin(&p, 1).unwrap().is_empty().unwrap());
    }
}
