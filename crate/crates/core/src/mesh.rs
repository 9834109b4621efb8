//! Planar triangulations, P1 finite-element matrices and barycentric
//! observation projectors.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::{CscMatrix, SparseSymmetric};

/// Default number of padding layers around an observation grid.
pub const DEFAULT_EXTENSION_LAYERS: usize = 2;

/// Point-in-triangle tolerance in domain units.
pub const LOCATE_TOLERANCE: f64 = 1e-9;

/// Triangulated planar domain. Triangles are counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    vertices: Vec<[T; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
}

impl<T: Real> Mesh<T> {
    /// Validates and wraps a triangulation.
    pub fn new(vertices: Vec<[T; 2]>, triangles: Vec<[usize; 3]>, boundary: Vec<bool>) -> Result<Self> {
        if boundary.len() != vertices.len() {
            return Err(Error::Dimension(format!(
                "{} boundary flags for {} vertices",
                boundary.len(),
                vertices.len()
            )));
        }
        let mesh = Self { vertices, triangles, boundary };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Checks index validity, strictly positive orientation and that every
    /// edge is shared by at most two oppositely oriented triangles.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::Argument(format!("triangle {t} references a missing vertex")));
            }
            if !(self.signed_area(t) > T::zero()) {
                return Err(Error::Assembly(format!("triangle {t} has nonpositive signed area")));
            }
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                if edges.insert(e, t).is_some() {
                    return Err(Error::Argument(format!(
                        "edge ({}, {}) is traversed twice in the same direction (triangle {t})",
                        e.0, e.1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Structured triangulation of an `(nx + 2 ext) x (ny + 2 ext)` vertex
    /// grid. Observation grid points sit at `(i h, j h)` for
    /// `i < nx, j < ny`; padding layers extend to negative coordinates.
    /// Every cell is split along its lower-left to upper-right diagonal.
    pub fn grid(nx: usize, ny: usize, spacing: T, extension_layers: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Argument(format!("grid needs nx, ny >= 2 (got {nx} x {ny})")));
        }
        if !(spacing > T::zero()) || !spacing.is_finite() {
            return Err(Error::Argument("grid spacing must be positive".into()));
        }
        let ext = extension_layers;
        let (mx, my) = (nx + 2 * ext, ny + 2 * ext);
        let mut vertices = Vec::with_capacity(mx * my);
        let mut boundary = Vec::with_capacity(mx * my);
        for j in 0..my {
            for i in 0..mx {
                let x = (T::from_usize_lossy(i) - T::from_usize_lossy(ext)) * spacing;
                let y = (T::from_usize_lossy(j) - T::from_usize_lossy(ext)) * spacing;
                vertices.push([x, y]);
                boundary.push(i == 0 || j == 0 || i == mx - 1 || j == my - 1);
            }
        }
        let id = |i: usize, j: usize| j * mx + i;
        let mut triangles = Vec::with_capacity(2 * (mx - 1) * (my - 1));
        for j in 0..my - 1 {
            for i in 0..mx - 1 {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        Ok(Self { vertices, triangles, boundary })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary(&self) -> &[bool] {
        &self.boundary
    }

    pub fn signed_area(&self, t: usize) -> T {
        let [a, b, c] = self.triangles[t];
        let (p, q, r) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        T::lit(0.5) * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn total_area(&self) -> T {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// Axis-aligned bounding box `([xmin, ymin], [xmax, ymax])`.
    pub fn bounding_box(&self) -> ([T; 2], [T; 2]) {
        let mut lo = [T::infinity(); 2];
        let mut hi = [T::neg_infinity(); 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Uniform red refinement: every triangle split into four via edge
    /// midpoints. New midpoints on boundary edges are boundary vertices.
    pub fn refine(&self) -> Self {
        let mut vertices = self.vertices.clone();
        let mut boundary = self.boundary.clone();
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let half = T::lit(0.5);
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<[T; 2]>, boundary: &mut Vec<bool>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push([half * (p[0] + q[0]), half * (p[1] + q[1])]);
                boundary.push(edge_count[&key] == 1);
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = mid(a, b, &mut vertices, &mut boundary);
            let bc = mid(b, c, &mut vertices, &mut boundary);
            let ca = mid(c, a, &mut vertices, &mut boundary);
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        Self { vertices, triangles, boundary }
    }

    /// Lumped mass matrix `C_ii = <psi_i, 1>`, returned as its diagonal.
    pub fn mass_diagonal(&self) -> Result<Vec<T>> {
        let mut c = vec![T::zero(); self.n_vertices()];
        let third = T::lit(1.0 / 3.0);
        for (t, tri) in self.triangles.iter().enumerate() {
            let area = self.checked_area(t)?;
            for &v in tri {
                c[v] += area * third;
            }
        }
        Ok(c)
    }

    /// Lumped mass matrix as a diagonal sparse matrix.
    pub fn assemble_mass(&self) -> Result<SparseSymmetric<T>> {
        Ok(SparseSymmetric::from_diagonal(&self.mass_diagonal()?))
    }

    /// Stiffness matrix `G_ij = <grad psi_i, grad psi_j>`.
    pub fn assemble_stiffness(&self) -> Result<SparseSymmetric<T>> {
        let mut t = Vec::with_capacity(6 * self.n_triangles());
        for tri_id in 0..self.n_triangles() {
            let local = self.local_stiffness(tri_id)?;
            let tri = self.triangles[tri_id];
            for a in 0..3 {
                for b in a..3 {
                    t.push((tri[a], tri[b], local[a][b]));
                }
            }
        }
        SparseSymmetric::from_triplets(self.n_vertices(), &t)
    }

    /// Element stiffness matrix of triangle `t`.
    pub fn local_stiffness(&self, t: usize) -> Result<[[T; 3]; 3]> {
        let area = self.checked_area(t)?;
        let tri = self.triangles[t];
        let p: Vec<[T; 2]> = tri.iter().map(|&v| self.vertices[v]).collect();
        // edge opposite vertex k
        let e: Vec<[T; 2]> = (0..3)
            .map(|k| {
                let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
                [b[0] - a[0], b[1] - a[1]]
            })
            .collect();
        let denom = T::lit(4.0) * area;
        let mut m = [[T::zero(); 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] = (e[a][0] * e[b][0] + e[a][1] * e[b][1]) / denom;
            }
        }
        Ok(m)
    }

    fn checked_area(&self, t: usize) -> Result<T> {
        let area = self.signed_area(t);
        if !(area > T::zero()) || !area.is_finite() {
            return Err(Error::Assembly(format!("triangle {t} is degenerate (signed area {area})")));
        }
        Ok(area)
    }

    /// Barycentric coordinates of `p` in triangle `t`.
    pub fn barycentric(&self, t: usize, p: [T; 2]) -> [T; 3] {
        let [a, b, c] = self.triangles[t];
        let (va, vb, vc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let det = (vb[0] - va[0]) * (vc[1] - va[1]) - (vc[0] - va[0]) * (vb[1] - va[1]);
        let l1 = ((p[0] - va[0]) * (vc[1] - va[1]) - (vc[0] - va[0]) * (p[1] - va[1])) / det;
        let l2 = ((vb[0] - va[0]) * (p[1] - va[1]) - (p[0] - va[0]) * (vb[1] - va[1])) / det;
        [T::one() - l1 - l2, l1, l2]
    }

    /// Euclidean distance from `p` to triangle `t` (zero inside).
    fn distance_to_triangle(&self, t: usize, p: [T; 2]) -> T {
        let lam = self.barycentric(t, p);
        if lam.iter().all(|&l| l >= T::zero()) {
            return T::zero();
        }
        let tri = self.triangles[t];
        (0..3)
            .map(|k| segment_distance(p, self.vertices[tri[k]], self.vertices[tri[(k + 1) % 3]]))
            .fold(T::infinity(), T::min)
    }

    /// Barycentric interpolation matrix from vertex values to `points`.
    pub fn projector(&self, points: &[[T; 2]]) -> Result<Projector<T>> {
        let index = TriangleIndex::new(self);
        let tol = T::lit(LOCATE_TOLERANCE);
        let tiny = T::lit(1e-13);
        let mut rows = Vec::with_capacity(points.len());
        for (pi, &p) in points.iter().enumerate() {
            let mut best: Option<(usize, T)> = None;
            for t in index.candidates(p) {
                let d = self.distance_to_triangle(t, p);
                if d == T::zero() {
                    best = Some((t, d));
                    break;
                }
                if d <= tol && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((t, d));
                }
            }
            let (t, _) = best.ok_or_else(|| Error::Location {
                index: pi,
                x: p[0].to_f64_lossy(),
                y: p[1].to_f64_lossy(),
            })?;
            let mut lam = self.barycentric(t, p);
            // snap to the triangle and drop negligible weights
            for l in lam.iter_mut() {
                if *l < tiny {
                    *l = T::zero();
                }
            }
            let s: T = lam.iter().copied().sum();
            let tri = self.triangles[t];
            let row: Vec<(usize, T)> = (0..3)
                .filter(|&k| lam[k] > T::zero())
                .map(|k| (tri[k], lam[k] / s))
                .collect();
            rows.push(row);
        }
        Ok(Projector { n_vertices: self.n_vertices(), rows })
    }

    /// Writes `vertices.csv` (id,x,y,boundary) and `triangles.csv`
    /// (id,v0,v1,v2) into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_vertices(std::fs::File::create(dir.join("vertices.csv"))?)?;
        self.write_triangles(std::fs::File::create(dir.join("triangles.csv"))?)?;
        Ok(())
    }

    pub fn read_csv(dir: &Path) -> Result<Self> {
        let (vertices, boundary) = Self::read_vertices(std::fs::File::open(dir.join("vertices.csv"))?)?;
        let triangles = Self::read_triangles(std::fs::File::open(dir.join("triangles.csv"))?)?;
        Self::new(vertices, triangles, boundary)
    }

    pub fn write_vertices<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["id", "x", "y", "boundary"])?;
        for (k, (v, b)) in self.vertices.iter().zip(&self.boundary).enumerate() {
            wtr.write_record([k.to_string(), v[0].to_string(), v[1].to_string(), u8::from(*b).to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_triangles<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["id", "v0", "v1", "v2"])?;
        for (k, t) in self.triangles.iter().enumerate() {
            wtr.write_record([k.to_string(), t[0].to_string(), t[1].to_string(), t[2].to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    fn read_vertices<R: Read>(r: R) -> Result<(Vec<[T; 2]>, Vec<bool>)> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows: Vec<(usize, [T; 2], bool)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let id: usize = field(&rec, 0)?;
            let x: f64 = field(&rec, 1)?;
            let y: f64 = field(&rec, 2)?;
            let b = match rec.get(3).map(str::trim) {
                Some("1") | Some("true") => true,
                Some("0") | Some("false") => false,
                other => return Err(Error::Parse(format!("bad boundary flag {other:?}"))),
            };
            rows.push((id, [T::lit(x), T::lit(y)], b));
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(k, r)| r.0 != k) {
            return Err(Error::Parse("vertex ids must be 0..n".into()));
        }
        Ok((rows.iter().map(|r| r.1).collect(), rows.iter().map(|r| r.2).collect()))
    }

    fn read_triangles<R: Read>(r: R) -> Result<Vec<[usize; 3]>> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows: Vec<(usize, [usize; 3])> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push((field(&rec, 0)?, [field(&rec, 1)?, field(&rec, 2)?, field(&rec, 3)?]));
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(k, r)| r.0 != k) {
            return Err(Error::Parse("triangle ids must be 0..n".into()));
        }
        Ok(rows.into_iter().map(|r| r.1).collect())
    }
}

pub(crate) fn field<F: std::str::FromStr>(rec: &csv::StringRecord, k: usize) -> Result<F>
where
    F::Err: std::fmt::Display,
{
    let s = rec.get(k).ok_or_else(|| Error::Parse(format!("missing column {k}")))?;
    s.trim().parse().map_err(|e| Error::Parse(format!("column {k} ({s:?}): {e}")))
}

fn segment_distance<T: Real>(p: [T; 2], a: [T; 2], b: [T; 2]) -> T {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > T::zero() {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

/// Uniform bucket grid over triangle bounding boxes.
struct TriangleIndex<T> {
    origin: [T; 2],
    cell: T,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<T: Real> TriangleIndex<T> {
    fn new(mesh: &Mesh<T>) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let nt = mesh.n_triangles().max(1);
        let area = ((hi[0] - lo[0]) * (hi[1] - lo[1])).max(T::min_positive_value());
        let cell = (area / T::from_usize_lossy(nt)).sqrt().max(T::lit(1e-12)) * T::lit(2.0);
        let dim = |k: usize| (((hi[k] - lo[k]) / cell).floor().to_f64_lossy() as usize) + 1;
        let dims = [dim(0), dim(1)];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        let pad = T::lit(LOCATE_TOLERANCE);
        let mut idx = Self { origin: lo, cell, dims, buckets: Vec::new() };
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let mut blo = [T::infinity(); 2];
            let mut bhi = [T::neg_infinity(); 2];
            for &v in tri {
                for k in 0..2 {
                    blo[k] = blo[k].min(mesh.vertices[v][k] - pad);
                    bhi[k] = bhi[k].max(mesh.vertices[v][k] + pad);
                }
            }
            let (i0, j0) = idx.bucket_of(blo);
            let (i1, j1) = idx.bucket_of(bhi);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * dims[0] + i].push(t);
                }
            }
        }
        idx.buckets = buckets;
        idx
    }

    fn bucket_of(&self, p: [T; 2]) -> (usize, usize) {
        let f = |k: usize| {
            let r = ((p[k] - self.origin[k]) / self.cell).floor().to_f64_lossy();
            (r.max(0.0) as usize).min(self.dims[k] - 1)
        };
        (f(0), f(1))
    }

    fn candidates(&self, p: [T; 2]) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.bucket_of(p);
        self.buckets[j * self.dims[0] + i].iter().copied()
    }
}

/// Sparse `n_obs x n_vertices` matrix of barycentric weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector<T> {
    n_vertices: usize,
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> Projector<T> {
    /// Projector with explicit rows; rows must hold valid vertex indices.
    pub fn from_rows(n_vertices: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        if rows.iter().flatten().any(|&(v, _)| v >= n_vertices) {
            return Err(Error::Dimension("projector column out of range".into()));
        }
        Ok(Self { n_vertices, rows })
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn row(&self, k: usize) -> &[(usize, T)] {
        &self.rows[k]
    }

    pub fn rows(&self) -> &[Vec<(usize, T)>] {
        &self.rows
    }

    /// Interpolates vertex values at the projector's points.
    pub fn apply(&self, vertex_values: &[T]) -> Vec<T> {
        assert_eq!(vertex_values.len(), self.n_vertices, "projector dimension");
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(v, w)| w * vertex_values[v]).sum())
            .collect()
    }

    pub fn to_csc(&self) -> CscMatrix<T> {
        let t: Vec<_> = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(v, w)| (i, v, w)))
            .collect();
        CscMatrix::from_triplets(self.n_obs(), self.n_vertices, &t).expect("projector indices in range")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn unit_triangle() -> Mesh<f64> {
        Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], vec![true; 3]).unwrap()
    }

    #[test]
    fn grid_counts() {
        let m = Mesh::<f64>::grid(2, 2, 1.0, 0).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles()), (4, 2));
        let m = Mesh::<f64>::grid(15, 15, 1.0, 0).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles()), (225, 392));
        let m = Mesh::<f64>::grid(15, 15, 1.0, 2).unwrap();
        assert_eq!(m.n_vertices(), 361);
        let interior_grid_boundary = m
            .vertices()
            .iter()
            .zip(m.boundary())
            .filter(|(v, &b)| b && v[0] >= 0.0 && v[0] <= 14.0 && v[1] >= 0.0 && v[1] <= 14.0)
            .count();
        assert_eq!(interior_grid_boundary, 0);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn grid_rejects_bad_arguments() {
        assert!(Mesh::<f64>::grid(1, 5, 1.0, 0).is_err());
        assert!(Mesh::<f64>::grid(5, 5, 0.0, 0).is_err());
        assert!(Mesh::<f64>::grid(5, 5, -1.0, 1).is_err());
    }

    #[test]
    fn boundary_flags_are_the_outer_rim() {
        let m = Mesh::<f64>::grid(4, 3, 1.0, 1).unwrap();
        let (lo, hi) = m.bounding_box();
        for (v, &b) in m.vertices().iter().zip(m.boundary()) {
            let rim = v[0] == lo[0] || v[0] == hi[0] || v[1] == lo[1] || v[1] == hi[1];
            assert_eq!(rim, b);
        }
    }

    #[test]
    fn unit_triangle_mass_and_stiffness() {
        let m = unit_triangle();
        let c = m.mass_diagonal().unwrap();
        for v in c {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
        let g = m.local_stiffness(0).unwrap();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((g[a][b] - expect[a][b]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_trace_is_area() {
        let m = Mesh::<f64>::grid(2, 2, 1.0, 0).unwrap();
        assert!((m.mass_diagonal().unwrap().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let m = Mesh::<f64>::grid(15, 15, 1.0, 0).unwrap();
        // oracle: sum of cell areas
        let oracle: f64 = (0..14 * 14).map(|_| 1.0).sum();
        assert_eq!(oracle, 196.0);
        assert!((m.mass_diagonal().unwrap().iter().sum::<f64>() - oracle).abs() < 1e-10);
    }

    #[test]
    fn degenerate_triangle_is_named() {
        let m = Mesh { vertices: vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], triangles: vec![[0, 1, 2]], boundary: vec![true; 3] };
        match m.assemble_stiffness() {
            Err(Error::Assembly(msg)) => assert!(msg.contains("triangle 0")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(m.mass_diagonal().is_err());
        assert!(Mesh::new(m.vertices.clone(), m.triangles.clone(), m.boundary.clone()).is_err());
    }

    #[test]
    fn clockwise_triangle_rejected() {
        assert!(Mesh::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], vec![[0, 1, 2]], vec![true; 3]).is_err());
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let m = Mesh::<f64>::grid(7, 5, 0.7, 1).unwrap();
        let g = m.assemble_stiffness().unwrap();
        let gmax = g.triplets().map(|t| t.2.abs()).fold(0.0, f64::max);
        let r = g.mul_vec(&vec![1.0; m.n_vertices()]);
        assert!(r.iter().all(|v| v.abs() < 1e-10 * gmax));
    }

    #[test]
    fn stiffness_pattern_is_adjacency() {
        let m = Mesh::<f64>::grid(4, 4, 1.0, 0).unwrap();
        let g = m.assemble_stiffness().unwrap();
        let mut adj = std::collections::BTreeSet::new();
        for t in m.triangles() {
            for a in 0..3 {
                for b in 0..3 {
                    adj.insert((t[a].min(t[b]), t[a].max(t[b])));
                }
            }
        }
        for (i, j, _) in g.triplets() {
            assert!(adj.contains(&(i, j)));
        }
        // on a right-angled grid the off-diagonal along the cell diagonal cancels
        assert!(g.nnz() <= adj.len());
    }

    #[test]
    fn refinement_preserves_area() {
        let m = Mesh::<f64>::grid(5, 4, 1.0, 1).unwrap();
        let r = m.refine();
        assert!(r.validate().is_ok());
        assert!(r.n_vertices() >= 2 * m.n_vertices());
        let a: f64 = m.mass_diagonal().unwrap().iter().sum();
        let b: f64 = r.mass_diagonal().unwrap().iter().sum();
        assert!((a - b).abs() < 1e-10 * a);
        assert_eq!(r.boundary().iter().filter(|&&b| b).count(), 2 * m.boundary().iter().filter(|&&b| b).count());
    }

    #[test]
    fn projector_vertex_and_centroid() {
        let m = unit_triangle();
        let p = m.projector(&[[1.0, 0.0], [1.0 / 3.0, 1.0 / 3.0]]).unwrap();
        assert_eq!(p.row(0), &[(1, 1.0)]);
        for &(_, w) in p.row(1) {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn projector_reproduces_affine_functions() {
        let m = Mesh::<f64>::grid(6, 5, 1.3, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 2]> = (0..200).map(|_| [rng.random_range(-1.3..6.5), rng.random_range(-1.3..5.2)]).collect();
        let p = m.projector(&pts).unwrap();
        let xs: Vec<f64> = m.vertices().iter().map(|v| v[0]).collect();
        let f: Vec<f64> = m.vertices().iter().map(|v| 2.0 * v[0] - 3.0 * v[1] + 0.5).collect();
        let px = p.apply(&xs);
        let pf = p.apply(&f);
        for (k, q) in pts.iter().enumerate() {
            assert!((px[k] - q[0]).abs() < 1e-12);
            assert!((pf[k] - (2.0 * q[0] - 3.0 * q[1] + 0.5)).abs() < 1e-11);
            let row = p.row(k);
            assert!(row.len() <= 3);
            assert!((row.iter().map(|r| r.1).sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|r| (0.0..=1.0).contains(&r.1)));
        }
    }

    #[test]
    fn projector_outside_point_reports_index() {
        let m = unit_triangle();
        match m.projector(&[[0.1, 0.1], [1.0, 1.0]]) {
            Err(Error::Location { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        // within tolerance snaps onto the hypotenuse
        let p = m.projector(&[[0.5 + 1e-11, 0.5]]).unwrap();
        assert!((p.row(0).iter().map(|r| r.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Mesh::<f64>::grid(4, 3, 0.5, 1).unwrap();
        m.write_csv(dir.path()).unwrap();
        let back = Mesh::<f64>::read_csv(dir.path()).unwrap();
        assert_eq!(back, m);
    }
}
