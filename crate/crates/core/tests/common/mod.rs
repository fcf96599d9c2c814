#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tubempc::geometry::HPolytope;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn default_config() -> PathBuf {
    data_dir().join("default/default.json")
}

pub fn adversarial_config() -> PathBuf {
    data_dir().join("adversarial/adversarial.json")
}

pub type P2 = [f64; 2];

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub fn hull(points: &[P2]) -> Vec<P2> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut h: Vec<P2> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = h.len();
        let iter: Box<dyn Iterator<Item = &P2>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &q in iter {
            while h.len() >= start + 2 && cross(h[h.len() - 2], h[h.len() - 1], q) <= 1e-14 {
                h.pop();
            }
            h.push(q);
        }
        h.pop();
    }
    h
}

/// Outward unit normals and offsets of a counter-clockwise hull.
pub fn hull_halfspaces(h: &[P2]) -> Vec<(P2, f64)> {
    (0..h.len())
        .map(|i| {
            let a = h[i];
            let b = h[(i + 1) % h.len()];
            let (nx, ny) = (b[1] - a[1], a[0] - b[0]);
            let r = (nx * nx + ny * ny).sqrt();
            let n = [nx / r, ny / r];
            (n, n[0] * a[0] + n[1] * a[1])
        })
        .collect()
}

/// Signed distance-like margin to a hull: positive outside.
pub fn hull_margin(h: &[P2], x: P2) -> f64 {
    hull_halfspaces(h)
        .iter()
        .map(|(n, o)| n[0] * x[0] + n[1] * x[1] - o)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn hull_polytope(h: &[P2]) -> HPolytope {
    let hs = hull_halfspaces(h);
    let g = DMatrix::from_fn(hs.len(), 2, |i, j| hs[i].0[j]);
    let o = DVector::from_iterator(hs.len(), hs.iter().map(|r| r.1));
    HPolytope::new(g, o).unwrap()
}

/// Vertices of a bounded 2-D H-polytope by intersecting every pair of rows.
pub fn vertices(p: &HPolytope, tol: f64) -> Vec<P2> {
    let (g, o) = (p.normals(), p.offsets());
    let mut out = Vec::new();
    for i in 0..g.nrows() {
        for j in i + 1..g.nrows() {
            let det = g[(i, 0)] * g[(j, 1)] - g[(i, 1)] * g[(j, 0)];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (o[i] * g[(j, 1)] - g[(i, 1)] * o[j]) / det;
            let y = (g[(i, 0)] * o[j] - o[i] * g[(j, 0)]) / det;
            if p.max_violation(&DVector::from_vec(vec![x, y])) <= tol {
                out.push([x, y]);
            }
        }
    }
    out
}

/// Random convex polygon: hull of `count` points in a disk.
pub fn random_polygon(rng: &mut ChaCha8Rng, count: usize, radius: f64, center: P2) -> Vec<P2> {
    loop {
        let pts: Vec<P2> = (0..count)
            .map(|_| {
                let t = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = radius * rng.gen_range(0.2f64..1.0).sqrt();
                [center[0] + r * t.cos(), center[1] + r * t.sin()]
            })
            .collect();
        let h = hull(&pts);
        if h.len() >= 3 {
            return h;
        }
    }
}

pub fn v2(x: P2) -> DVector<f64> {
    DVector::from_vec(vec![x[0], x[1]])
}
