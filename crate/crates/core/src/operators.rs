//! Discrete differential operators on icosphere vertices.
//!
//! Gradients follow the piecewise-linear finite element construction: the
//! gradient of a hat-function interpolant is constant per face, per-vertex
//! gradients are face-area weighted averages over the incident faces, and
//! the east-west / north-south components are dot products with direction
//! fields obtained from the gradients of longitude and latitude. The
//! Laplacian is the cotangent formula with barycentric dual areas, signed so
//! that it approximates the Laplace-Beltrami operator (`L z ≈ -2 z`).

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{cross, dot, lon_lat, norm, normalize, scale, sub, IcoMesh, Vec3};
use crate::sparse::SparseMatrix;

/// The four basis operators of a differential-operator kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiffOp {
    Identity,
    GradX,
    GradY,
    Laplacian,
}

impl DiffOp {
    pub const ALL: [DiffOp; 4] = [
        DiffOp::Identity,
        DiffOp::GradX,
        DiffOp::GradY,
        DiffOp::Laplacian,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Per-face hat-function gradients and face areas.
#[derive(Debug, Clone)]
pub struct FaceGradientOperator {
    /// `3 n_f x n_v`: rows `3f..3f+3` give the gradient on face `f`.
    pub matrix: SparseMatrix,
    /// Flat triangle areas.
    pub areas: Vec<f64>,
    basis: Vec<[Vec3; 3]>,
}

impl FaceGradientOperator {
    /// Per-face gradients of the interpolant of `f`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<Vec3>> {
        if f.len() != self.matrix.cols() {
            return Err(Error::Shape(format!(
                "field has {} values, mesh has {} vertices",
                f.len(),
                self.matrix.cols()
            )));
        }
        let flat = self.matrix.mul_vec(f);
        Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    /// Gradients of the three hat functions of face `f`, in face-corner order.
    pub fn basis(&self, f: usize) -> &[Vec3; 3] {
        &self.basis[f]
    }
}

pub fn face_gradient_operator(mesh: &IcoMesh) -> Result<FaceGradientOperator> {
    let v = mesh.vertices();
    let mut areas = Vec::with_capacity(mesh.n_faces());
    let mut basis = Vec::with_capacity(mesh.n_faces());
    let mut triplets = Vec::with_capacity(9 * mesh.n_faces());
    for (fi, t) in mesh.faces().iter().enumerate() {
        let p = t.map(|i| v[i as usize]);
        let n = cross(sub(p[1], p[0]), sub(p[2], p[0]));
        let twice_area = norm(n);
        if !(twice_area > 0.0) {
            return Err(Error::DegenerateFace { face: fi });
        }
        let unit_n = scale(n, 1.0 / twice_area);
        // ∇φ_k = N × (opposite edge, counter-clockwise) / (2A)
        let g = [0usize, 1, 2].map(|k| {
            let e = sub(p[(k + 2) % 3], p[(k + 1) % 3]);
            scale(cross(unit_n, e), 1.0 / twice_area)
        });
        for (k, &vi) in t.iter().enumerate() {
            for d in 0..3 {
                triplets.push((3 * fi + d, vi as usize, g[k][d]));
            }
        }
        areas.push(0.5 * twice_area);
        basis.push(g);
    }
    Ok(FaceGradientOperator {
        matrix: SparseMatrix::from_triplets(3 * mesh.n_faces(), mesh.n_vertices(), triplets),
        areas,
        basis,
    })
}

/// Area-weighted average of the face gradients around each vertex.
pub fn vertex_gradients(fg: &FaceGradientOperator, mesh: &IcoMesh, f: &[f64]) -> Result<Vec<Vec3>> {
    let per_face = fg.apply(f)?;
    Ok(average_to_vertices(fg, mesh, &per_face))
}

fn average_to_vertices(fg: &FaceGradientOperator, mesh: &IcoMesh, per_face: &[Vec3]) -> Vec<Vec3> {
    let vf = mesh.vertex_faces();
    (0..mesh.n_vertices())
        .map(|i| {
            let mut acc = [0.0; 3];
            let mut total = 0.0;
            for &f in vf.faces_of(i) {
                let a = fg.areas[f];
                for d in 0..3 {
                    acc[d] += a * per_face[f][d];
                }
                total += a;
            }
            scale(acc, 1.0 / total)
        })
        .collect()
}

/// Unit east-west (`x_hat`) and north-south (`y_hat`) tangent fields.
#[derive(Debug, Clone)]
pub struct DirectionFields {
    pub x_hat: Vec<Vec3>,
    pub y_hat: Vec<Vec3>,
}

/// Direction fields from the vertex gradients of longitude and latitude.
///
/// Both gradients are projected onto the tangent plane at the vertex, and
/// `x_hat` is made orthogonal to `y_hat` before normalisation. The two pole
/// vertices get zero vectors.
pub fn direction_fields(mesh: &IcoMesh, fg: &FaceGradientOperator) -> DirectionFields {
    let v = mesh.vertices();
    let ll: Vec<(f64, f64)> = v.iter().map(|&p| lon_lat(p)).collect();
    let mut lon_face = Vec::with_capacity(mesh.n_faces());
    let mut lat_face = Vec::with_capacity(mesh.n_faces());
    for (fi, t) in mesh.faces().iter().enumerate() {
        let g = fg.basis(fi);
        let idx = t.map(|i| i as usize);
        // longitude unwrapped into one 2π window around the first non-pole
        // corner; a pole corner takes the mean of the other two
        let non_pole: Vec<usize> = (0..3).filter(|&k| !mesh.is_pole(idx[k])).collect();
        let reference = ll[idx[non_pole[0]]].0;
        let mut lon = [0.0f64; 3];
        for &k in &non_pole {
            let mut x = ll[idx[k]].0;
            if x - reference > PI {
                x -= 2.0 * PI;
            } else if reference - x > PI {
                x += 2.0 * PI;
            }
            lon[k] = x;
        }
        let mean = non_pole.iter().map(|&k| lon[k]).sum::<f64>() / non_pole.len() as f64;
        for k in 0..3 {
            if mesh.is_pole(idx[k]) {
                lon[k] = mean;
            }
        }
        let mut gl = [0.0; 3];
        let mut gb = [0.0; 3];
        for k in 0..3 {
            for d in 0..3 {
                gl[d] += lon[k] * g[k][d];
                gb[d] += ll[idx[k]].1 * g[k][d];
            }
        }
        lon_face.push(gl);
        lat_face.push(gb);
    }
    let lon_v = average_to_vertices(fg, mesh, &lon_face);
    let lat_v = average_to_vertices(fg, mesh, &lat_face);
    let tangent = |g: Vec3, p: Vec3| sub(g, scale(p, dot(g, p)));
    let mut x_hat = Vec::with_capacity(v.len());
    let mut y_hat = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        if mesh.is_pole(i) {
            x_hat.push([0.0; 3]);
            y_hat.push([0.0; 3]);
            continue;
        }
        let p = v[i];
        let y = normalize(tangent(lat_v[i], p));
        let xt = tangent(lon_v[i], p);
        let x = normalize(sub(xt, scale(y, dot(xt, y))));
        // one more tangent projection pass tightens round-off
        let x = normalize(tangent(x, p));
        x_hat.push(x);
        y_hat.push(y);
    }
    DirectionFields { x_hat, y_hat }
}

/// Barycentric dual areas: one third of the incident face areas.
#[derive(Debug, Clone, PartialEq)]
pub struct DualAreas(pub Vec<f64>);

impl DualAreas {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Cotangent Laplacian `(L f)_i = 1/(2A_i) Σ_j (cot α_ij + cot β_ij)(f_j - f_i)`.
pub fn cotan_laplacian(mesh: &IcoMesh) -> (SparseMatrix, DualAreas) {
    let v = mesh.vertices();
    let nv = mesh.n_vertices();
    let mut area = vec![0.0; nv];
    // half-cotangent weights per directed pair, summed on assembly
    let mut weights = Vec::with_capacity(6 * mesh.n_faces());
    for t in mesh.faces() {
        let idx = t.map(|i| i as usize);
        let p = idx.map(|i| v[i]);
        let a = 0.5 * norm(cross(sub(p[1], p[0]), sub(p[2], p[0])));
        for k in 0..3 {
            area[idx[k]] += a / 3.0;
            // angle at corner k is opposite edge (k+1, k+2)
            let e1 = sub(p[(k + 1) % 3], p[k]);
            let e2 = sub(p[(k + 2) % 3], p[k]);
            let half_cot = 0.5 * dot(e1, e2) / norm(cross(e1, e2));
            let (i, j) = (idx[(k + 1) % 3], idx[(k + 2) % 3]);
            weights.push((i, j, half_cot));
            weights.push((j, i, half_cot));
        }
    }
    let w = SparseMatrix::from_triplets(nv, nv, weights);
    let mut triplets = Vec::with_capacity(w.nnz() + nv);
    for i in 0..nv {
        let (cols, vals) = w.row(i);
        let mut diag = 0.0;
        for (&j, &wij) in cols.iter().zip(vals) {
            triplets.push((i, j as usize, wij / area[i]));
            diag -= wij / area[i];
        }
        triplets.push((i, i, diag));
    }
    (
        SparseMatrix::from_triplets(nv, nv, triplets),
        DualAreas(area),
    )
}

/// Identity, east-west derivative, north-south derivative and Laplacian for one level.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub level: u32,
    pub identity: SparseMatrix,
    pub grad_x: SparseMatrix,
    pub grad_y: SparseMatrix,
    pub laplacian: SparseMatrix,
    transposed: [SparseMatrix; 4],
}

impl OperatorSet {
    pub fn n_vertices(&self) -> usize {
        self.identity.rows()
    }

    pub fn get(&self, op: DiffOp) -> &SparseMatrix {
        match op {
            DiffOp::Identity => &self.identity,
            DiffOp::GradX => &self.grad_x,
            DiffOp::GradY => &self.grad_y,
            DiffOp::Laplacian => &self.laplacian,
        }
    }

    pub fn transposed(&self, op: DiffOp) -> &SparseMatrix {
        &self.transposed[op.index()]
    }

    /// `‖L‖_F / √n`: the RMS response of the operator to unit white noise.
    /// Exactly 1 for the identity; grows like `1/h` for the derivatives and
    /// `1/h²` for the Laplacian.
    pub fn rms_gain(&self, op: DiffOp) -> f64 {
        let m = self.get(op);
        (m.triplets().map(|(_, _, v)| v * v).sum::<f64>() / m.rows() as f64).sqrt()
    }
}

pub fn assemble_operator_set(mesh: &IcoMesh) -> Result<OperatorSet> {
    let fg = face_gradient_operator(mesh)?;
    let dirs = direction_fields(mesh, &fg);
    let vf = mesh.vertex_faces();
    let nv = mesh.n_vertices();
    let mut tx = Vec::with_capacity(7 * nv);
    let mut ty = Vec::with_capacity(7 * nv);
    for i in 0..nv {
        if mesh.is_pole(i) {
            continue;
        }
        let faces = vf.faces_of(i);
        let total: f64 = faces.iter().map(|&f| fg.areas[f]).sum();
        for &f in faces {
            let w = fg.areas[f] / total;
            for (k, &j) in mesh.faces()[f].iter().enumerate() {
                let g = fg.basis(f)[k];
                tx.push((i, j as usize, w * dot(dirs.x_hat[i], g)));
                ty.push((i, j as usize, w * dot(dirs.y_hat[i], g)));
            }
        }
    }
    let identity = SparseMatrix::identity(nv);
    let grad_x = SparseMatrix::from_triplets(nv, nv, tx);
    let grad_y = SparseMatrix::from_triplets(nv, nv, ty);
    let (laplacian, _) = cotan_laplacian(mesh);
    let transposed = [
        identity.clone(),
        grad_x.transpose(),
        grad_y.transpose(),
        laplacian.transpose(),
    ];
    Ok(OperatorSet {
        level: mesh.level(),
        identity,
        grad_x,
        grad_y,
        laplacian,
        transposed,
    })
}

/// Operator sets for levels `0..=max_level`, shared between layers.
#[derive(Debug, Clone)]
pub struct OperatorHierarchy {
    levels: Vec<Arc<OperatorSet>>,
}

impl OperatorHierarchy {
    pub fn build(max_level: u32) -> Result<Self> {
        let mut mesh = crate::mesh::mesh_at_level(0)?;
        crate::mesh::mesh_at_level(max_level)?;
        let mut levels = Vec::with_capacity(max_level as usize + 1);
        loop {
            levels.push(Arc::new(assemble_operator_set(&mesh)?));
            if mesh.level() == max_level {
                break;
            }
            mesh = crate::mesh::subdivide(&mesh);
        }
        Ok(OperatorHierarchy { levels })
    }

    pub fn max_level(&self) -> u32 {
        self.levels.len() as u32 - 1
    }

    pub fn level(&self, l: u32) -> Result<Arc<OperatorSet>> {
        self.levels
            .get(l as usize)
            .cloned()
            .ok_or(Error::LevelOutOfRange {
                level: l,
                max: self.max_level(),
            })
    }
}
