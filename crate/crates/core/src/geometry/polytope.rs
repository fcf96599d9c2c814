use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::lp::{minimize, LpStatus};
use super::{fourier_motzkin, IntervalBox, SupportFunction, TOL_GEO, TOL_LP, TOL_RED};
use crate::{Error, Result};

/// Radius cap in the Chebyshev-center LP so unbounded sets still have a center.
const CHEBYSHEV_RADIUS_CAP: f64 = 1.0;
/// Below this inradius redundancy removal falls back to one LP per row.
const THIN_RADIUS: f64 = 1e-7;

/// Polytope `{x : G x <= g}` with unit-norm rows.
///
/// Rows with a zero normal are dropped when `g >= 0`; a single zero row with a
/// negative offset is kept as the canonical marker of an empty set.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    g_mat: DMatrix<f64>,
    g_vec: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolytopeJson {
    #[serde(rename = "G")]
    normals: Vec<Vec<f64>>,
    #[serde(rename = "g")]
    offsets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
}

impl Serialize for HPolytope {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolytopeJson {
            normals: crate::serde_mat::matrix_to_rows(&self.g_mat),
            offsets: self.g_vec.iter().copied().collect(),
            dim: Some(self.dim()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HPolytope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PolytopeJson::deserialize(d)?;
        let dim = match (raw.dim, raw.normals.first()) {
            (Some(n), _) => n,
            (None, Some(r)) => r.len(),
            (None, None) => {
                return Err(serde::de::Error::custom(
                    "polytope without rows must state its dimension",
                ))
            }
        };
        let g = crate::serde_mat::rows_to_matrix(&raw.normals, dim).map_err(serde::de::Error::custom)?;
        HPolytope::new(g, DVector::from_vec(raw.offsets)).map_err(serde::de::Error::custom)
    }
}

impl HPolytope {
    pub fn new(g: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self> {
        if g.nrows() != offsets.len() {
            return Err(Error::Dimension(format!(
                "{} normals but {} offsets",
                g.nrows(),
                offsets.len()
            )));
        }
        if g.iter().chain(offsets.iter()).any(|v| v.is_nan()) {
            return Err(Error::Numerical("NaN in polytope data".into()));
        }
        Ok(Self::normalized(g, offsets))
    }

    fn normalized(g: DMatrix<f64>, offsets: DVector<f64>) -> Self {
        let n = g.ncols();
        let mut rows: Vec<usize> = Vec::with_capacity(g.nrows());
        let mut empty = false;
        for i in 0..g.nrows() {
            let nrm = g.row(i).norm();
            if nrm <= 1e-12 {
                if offsets[i] < -TOL_LP {
                    empty = true;
                }
            } else if offsets[i] == f64::NEG_INFINITY {
                empty = true;
            } else if offsets[i].is_finite() {
                rows.push(i);
            }
        }
        if empty {
            return Self::empty(n);
        }
        let mut gm = DMatrix::zeros(rows.len(), n);
        let mut gv = DVector::zeros(rows.len());
        for (k, &i) in rows.iter().enumerate() {
            let nrm = g.row(i).norm();
            gm.row_mut(k).copy_from(&(g.row(i) / nrm));
            gv[k] = offsets[i] / nrm;
        }
        Self { g_mat: gm, g_vec: gv }
    }

    /// Whole space `R^dim`.
    pub fn universe(dim: usize) -> Self {
        Self {
            g_mat: DMatrix::zeros(0, dim),
            g_vec: DVector::zeros(0),
        }
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            g_mat: DMatrix::zeros(1, dim),
            g_vec: DVector::from_element(1, -1.0),
        }
    }

    /// Box with the given bounds; infinite bounds are left out.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Self {
        let n = lo.len();
        let mut normals = Vec::new();
        let mut offsets = Vec::new();
        for j in 0..n {
            if hi[j].is_finite() {
                let mut r = vec![0.0; n];
                r[j] = 1.0;
                normals.push(r);
                offsets.push(hi[j]);
            }
            if lo[j].is_finite() {
                let mut r = vec![0.0; n];
                r[j] = -1.0;
                normals.push(r);
                offsets.push(-lo[j]);
            }
        }
        let g = DMatrix::from_fn(normals.len(), n, |i, j| normals[i][j]);
        Self::normalized(g, DVector::from_vec(offsets))
    }

    pub fn dim(&self) -> usize {
        self.g_mat.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.g_mat.nrows()
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.g_mat
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.g_vec
    }

    /// Largest constraint violation `max_i (G_i x - g_i)`; `-inf` without rows.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (&self.g_mat * x - &self.g_vec)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.contains_tol(x, TOL_GEO)
    }

    pub fn contains_tol(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim() && self.max_violation(x) <= tol
    }

    /// Maximiser and value of `dir'x`.
    pub fn support_point(&self, dir: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        if dir.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "direction has length {}, polytope dimension {}",
                dir.len(),
                self.dim()
            )));
        }
        let res = minimize(&(-dir), &self.g_mat, &self.g_vec, None)?;
        match res.status {
            LpStatus::Optimal => {
                let x = res.x.expect("optimal carries a point");
                let v = dir.dot(&x);
                Ok((x, v))
            }
            LpStatus::Infeasible => Err(Error::EmptySet("support of an empty polytope".into())),
            LpStatus::Unbounded => Err(Error::Unbounded("support function is infinite".into())),
        }
    }

    pub fn is_empty(&self) -> Result<bool> {
        if self.num_rows() == 0 {
            return Ok(false);
        }
        let res = minimize(&DVector::zeros(self.dim()), &self.g_mat, &self.g_vec, None)?;
        Ok(res.status == LpStatus::Infeasible)
    }

    pub fn is_bounded(&self) -> Result<bool> {
        for j in 0..self.dim() {
            for s in [1.0, -1.0] {
                let mut d = DVector::zeros(self.dim());
                d[j] = s;
                match self.support_point(&d) {
                    Ok(_) => {}
                    Err(Error::Unbounded(_)) => return Ok(false),
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(true)
    }

    /// Center and radius of the largest inscribed ball (radius capped at 1 for
    /// unbounded sets).
    pub fn chebyshev_center(&self) -> Result<(DVector<f64>, f64)> {
        let (m, n) = self.g_mat.shape();
        let mut a = DMatrix::zeros(m + 1, n + 1);
        a.view_mut((0, 0), (m, n)).copy_from(&self.g_mat);
        for i in 0..m {
            a[(i, n)] = 1.0;
        }
        a[(m, n)] = 1.0;
        let mut b = DVector::zeros(m + 1);
        b.rows_mut(0, m).copy_from(&self.g_vec);
        b[m] = CHEBYSHEV_RADIUS_CAP;
        let mut c = DVector::zeros(n + 1);
        c[n] = -1.0;
        let res = minimize(&c, &a, &b, None)?;
        match res.status {
            LpStatus::Optimal => {
                let z = res.x.expect("optimal carries a point");
                let r = z[n];
                if r < -TOL_LP {
                    return Err(Error::EmptySet("Chebyshev center of an empty polytope".into()));
                }
                Ok((z.rows(0, n).into_owned(), r.max(0.0)))
            }
            _ => Err(Error::Numerical("Chebyshev LP failed".into())),
        }
    }

    /// Axis-aligned bounding box; fails for unbounded sets.
    pub fn bounding_box(&self) -> Result<IntervalBox> {
        let n = self.dim();
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for j in 0..n {
            let mut d = DVector::zeros(n);
            d[j] = 1.0;
            hi[j] = self.support(&d)?;
            d[j] = -1.0;
            lo[j] = -self.support(&d)?;
        }
        IntervalBox::new(lo, hi)
    }

    fn check_dim(&self, other: &HPolytope) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "polytopes of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }

    /// Stacks the rows without removing redundancy.
    pub fn stack(&self, other: &HPolytope) -> Result<HPolytope> {
        self.check_dim(other)?;
        let n = self.dim();
        let (m1, m2) = (self.num_rows(), other.num_rows());
        let mut g = DMatrix::zeros(m1 + m2, n);
        g.view_mut((0, 0), (m1, n)).copy_from(&self.g_mat);
        g.view_mut((m1, 0), (m2, n)).copy_from(&other.g_mat);
        let mut o = DVector::zeros(m1 + m2);
        o.rows_mut(0, m1).copy_from(&self.g_vec);
        o.rows_mut(m1, m2).copy_from(&other.g_vec);
        Ok(Self { g_mat: g, g_vec: o })
    }

    pub fn intersect(&self, other: &HPolytope) -> Result<HPolytope> {
        self.stack(other)?.remove_redundancy()
    }

    pub fn intersect_all(sets: &[HPolytope]) -> Result<HPolytope> {
        let first = sets
            .first()
            .ok_or_else(|| Error::Dimension("intersection of an empty list".into()))?;
        let mut acc = first.clone();
        for s in &sets[1..] {
            acc = acc.stack(s)?;
        }
        acc.remove_redundancy()
    }

    /// `{x : x + q in self for all q in Q}`. The result may be empty; callers
    /// check with [`HPolytope::is_empty`].
    pub fn pontryagin_diff(&self, q: &dyn SupportFunction) -> Result<HPolytope> {
        if q.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "Pontryagin difference of dimension {} and {}",
                self.dim(),
                q.dim()
            )));
        }
        let mut off = self.g_vec.clone();
        for i in 0..self.num_rows() {
            off[i] -= q.support(&self.g_mat.row(i).transpose())?;
        }
        Ok(Self {
            g_mat: self.g_mat.clone(),
            g_vec: off,
        })
    }

    /// `self ⊕ other` by projecting `{(x, y) : x - y in self, y in other}`.
    pub fn minkowski_sum(&self, other: &HPolytope) -> Result<HPolytope> {
        self.check_dim(other)?;
        let n = self.dim();
        let (m1, m2) = (self.num_rows(), other.num_rows());
        let mut g = DMatrix::zeros(m1 + m2, 2 * n);
        g.view_mut((0, 0), (m1, n)).copy_from(&self.g_mat);
        g.view_mut((0, n), (m1, n)).copy_from(&(-&self.g_mat));
        g.view_mut((m1, n), (m2, n)).copy_from(&other.g_mat);
        let mut o = DVector::zeros(m1 + m2);
        o.rows_mut(0, m1).copy_from(&self.g_vec);
        o.rows_mut(m1, m2).copy_from(&other.g_vec);
        let lifted = HPolytope::new(g, o)?;
        lifted.project(&(0..n).collect::<Vec<_>>())
    }

    pub fn cartesian_product(&self, other: &HPolytope) -> HPolytope {
        let (n1, n2) = (self.dim(), other.dim());
        let (m1, m2) = (self.num_rows(), other.num_rows());
        let mut g = DMatrix::zeros(m1 + m2, n1 + n2);
        g.view_mut((0, 0), (m1, n1)).copy_from(&self.g_mat);
        g.view_mut((m1, n1), (m2, n2)).copy_from(&other.g_mat);
        let mut o = DVector::zeros(m1 + m2);
        o.rows_mut(0, m1).copy_from(&self.g_vec);
        o.rows_mut(m1, m2).copy_from(&other.g_vec);
        Self::normalized(g, o)
    }

    /// `{x : M x + c in self}`.
    pub fn preimage(&self, m: &DMatrix<f64>, c: Option<&DVector<f64>>) -> Result<HPolytope> {
        if m.nrows() != self.dim() {
            return Err(Error::Dimension(format!(
                "map has {} rows, polytope dimension {}",
                m.nrows(),
                self.dim()
            )));
        }
        let g = &self.g_mat * m;
        let off = match c {
            Some(c) => &self.g_vec - &self.g_mat * c,
            None => self.g_vec.clone(),
        };
        HPolytope::new(g, off)
    }

    /// Image under an invertible map.
    pub fn linear_image(&self, a: &DMatrix<f64>) -> Result<HPolytope> {
        let inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("linear image needs an invertible map".into()))?;
        self.preimage(&inv, None)
    }

    /// `{x + c : x in self}`.
    pub fn translate(&self, c: &DVector<f64>) -> Result<HPolytope> {
        if c.len() != self.dim() {
            return Err(Error::Dimension("translation length".into()));
        }
        Ok(Self {
            g_mat: self.g_mat.clone(),
            g_vec: &self.g_vec + &self.g_mat * c,
        })
    }

    /// `alpha * self` for `alpha > 0`.
    pub fn scale(&self, alpha: f64) -> Result<HPolytope> {
        if !(alpha > 0.0) {
            return Err(Error::Numerical(format!("scale factor {alpha} must be positive")));
        }
        Ok(Self {
            g_mat: self.g_mat.clone(),
            g_vec: &self.g_vec * alpha,
        })
    }

    /// Cylinder in `R^total` whose coordinate `coords[j]` carries this set's
    /// coordinate `j`; the remaining coordinates are free.
    pub fn embed(&self, total: usize, coords: &[usize]) -> Result<HPolytope> {
        if coords.len() != self.dim() || coords.iter().any(|&c| c >= total) {
            return Err(Error::Dimension("bad embedding coordinates".into()));
        }
        let mut g = DMatrix::zeros(self.num_rows(), total);
        for (j, &c) in coords.iter().enumerate() {
            for i in 0..self.num_rows() {
                g[(i, c)] += self.g_mat[(i, j)];
            }
        }
        HPolytope::new(g, self.g_vec.clone())
    }

    /// Projection onto the listed coordinates (in the given order).
    pub fn project(&self, keep: &[usize]) -> Result<HPolytope> {
        let n = self.dim();
        if keep.iter().any(|&k| k >= n) {
            return Err(Error::Dimension("projection coordinate out of range".into()));
        }
        let mut order: Vec<usize> = keep.to_vec();
        let eliminate: Vec<usize> = (0..n).filter(|j| !keep.contains(j)).collect();
        order.extend(&eliminate);
        let perm = DMatrix::from_fn(n, n, |i, j| if order[j] == i { 1.0 } else { 0.0 });
        let permuted = HPolytope::new(&self.g_mat * perm, self.g_vec.clone())?;
        fourier_motzkin(&permuted, keep.len())
    }

    /// `true` when every point of `self` lies in `other` (within `tol`).
    pub fn is_subset_of(&self, other: &HPolytope, tol: f64) -> Result<bool> {
        self.check_dim(other)?;
        if self.is_empty()? {
            return Ok(true);
        }
        for i in 0..other.num_rows() {
            let d = other.g_mat.row(i).transpose();
            match self.support_point(&d) {
                Ok((_, h)) => {
                    if h > other.g_vec[i] + tol {
                        return Ok(false);
                    }
                }
                Err(Error::Unbounded(_)) => return Ok(false),
                Err(e) => return Err(e),
            }
        }
        Ok(true)
    }

    pub fn set_equal(&self, other: &HPolytope, tol: f64) -> Result<bool> {
        Ok(self.is_subset_of(other, tol)? && other.is_subset_of(self, tol)?)
    }

    /// Minimal H-representation of the same set.
    ///
    /// Exact duplicates are merged first, then Clarkson's output-sensitive
    /// scheme is run from the Chebyshev center; sets with an empty interior
    /// fall back to one LP per row.
    pub fn remove_redundancy(&self) -> Result<HPolytope> {
        let n = self.dim();
        if self.num_rows() == 0 {
            return Ok(self.clone());
        }
        if self.g_mat.row(0).norm() == 0.0 {
            return Ok(Self::empty(n));
        }
        let deduped = self.dedupe();
        let (x0, r) = match deduped.chebyshev_center() {
            Ok(v) => v,
            Err(Error::EmptySet(_)) => return Ok(Self::empty(n)),
            Err(e) => return Err(e),
        };
        let keep = if r > THIN_RADIUS {
            deduped.clarkson(&x0)?
        } else {
            deduped.naive_nonredundant()?
        };
        Ok(deduped.select_rows(&keep))
    }

    fn select_rows(&self, rows: &[usize]) -> HPolytope {
        let n = self.dim();
        let mut g = DMatrix::zeros(rows.len(), n);
        let mut o = DVector::zeros(rows.len());
        for (k, &i) in rows.iter().enumerate() {
            g.row_mut(k).copy_from(&self.g_mat.row(i));
            o[k] = self.g_vec[i];
        }
        Self { g_mat: g, g_vec: o }
    }

    /// Merges rows whose normals agree to about 1e-10, keeping the tightest.
    fn dedupe(&self) -> HPolytope {
        let mut best: HashMap<Vec<i64>, usize> = HashMap::new();
        let mut order = Vec::new();
        for i in 0..self.num_rows() {
            let key: Vec<i64> = self.g_mat.row(i).iter().map(|v| (v * 1e10).round() as i64).collect();
            match best.get_mut(&key) {
                Some(j) => {
                    if self.g_vec[i] < self.g_vec[*j] {
                        *j = i;
                    }
                }
                None => {
                    best.insert(key.clone(), i);
                    order.push(key);
                }
            }
        }
        let mut rows: Vec<usize> = order.iter().map(|k| best[k]).collect();
        rows.sort_unstable();
        self.select_rows(&rows)
    }

    fn clarkson(&self, x0: &DVector<f64>) -> Result<Vec<usize>> {
        let (m, n) = self.g_mat.shape();
        let mut in_s = vec![false; m];
        let mut s: Vec<usize> = Vec::new();
        let mut i = 0;
        while i < m {
            if in_s[i] {
                i += 1;
                continue;
            }
            let k = s.len() + 1;
            let mut a = DMatrix::zeros(k, n);
            let mut b = DVector::zeros(k);
            for (r, &j) in s.iter().enumerate() {
                a.row_mut(r).copy_from(&self.g_mat.row(j));
                b[r] = self.g_vec[j];
            }
            a.row_mut(k - 1).copy_from(&self.g_mat.row(i));
            b[k - 1] = self.g_vec[i] + 1.0;
            let dir = self.g_mat.row(i).transpose();
            let res = minimize(&(-&dir), &a, &b, Some(x0))?;
            let xs = match res.status {
                LpStatus::Optimal => res.x.expect("optimal carries a point"),
                _ => return Err(Error::Numerical("redundancy LP failed".into())),
            };
            if dir.dot(&xs) <= self.g_vec[i] + TOL_RED {
                i += 1;
                continue;
            }
            // Shoot a ray from the interior point towards xs; the first row
            // hit is a facet.
            let d = &xs - x0;
            let mut hit: Option<(usize, f64)> = None;
            for j in 0..m {
                if in_s[j] {
                    continue;
                }
                let den = self.g_mat.row(j).dot(&d.transpose());
                if den <= 1e-12 * d.norm() {
                    continue;
                }
                let t = (self.g_vec[j] - self.g_mat.row(j).dot(&x0.transpose())) / den;
                let take = match hit {
                    None => true,
                    Some((jb, tb)) => t < tb - 1e-14 || (t <= tb + 1e-14 && j == i && jb != i),
                };
                if take {
                    hit = Some((j, t));
                }
            }
            let (j, _) = hit.unwrap_or((i, 0.0));
            in_s[j] = true;
            s.push(j);
            if j == i {
                i += 1;
            }
        }
        s.sort_unstable();
        Ok(s)
    }

    fn naive_nonredundant(&self) -> Result<Vec<usize>> {
        let m = self.num_rows();
        let mut active = vec![true; m];
        for i in 0..m {
            let mut b = self.g_vec.clone();
            for (j, keep) in active.iter().enumerate() {
                if !keep {
                    b[j] = 1e9;
                }
            }
            b[i] += 1.0;
            let dir = self.g_mat.row(i).transpose();
            let res = minimize(&(-&dir), &self.g_mat, &b, None)?;
            match res.status {
                LpStatus::Optimal => {
                    let v = dir.dot(res.x.as_ref().expect("optimal carries a point"));
                    if v <= self.g_vec[i] + TOL_RED {
                        active[i] = false;
                    }
                }
                LpStatus::Unbounded => {}
                LpStatus::Infeasible => return Ok(vec![]),
            }
        }
        Ok((0..m).filter(|&i| active[i]).collect())
    }
}

impl SupportFunction for HPolytope {
    fn dim(&self) -> usize {
        self.g_mat.ncols()
    }

    fn support(&self, dir: &DVector<f64>) -> Result<f64> {
        if dir.len() == self.dim() && dir.iter().all(|v| *v == 0.0) {
            if self.is_empty()? {
                return Err(Error::EmptySet("support of an empty polytope".into()));
            }
            return Ok(0.0);
        }
        self.support_point(dir).map(|(_, v)| v)
    }
}
