//! Icosahedral sphere meshes.
//!
//! Level 0 is the unit icosahedron with poles at `(0, 0, ±1)`. Each level
//! splits every triangle into four and pushes the new edge midpoints back
//! onto the unit sphere. Vertex indices are nested: the first `n_v(l - 1)`
//! vertices of a level-`l` mesh are the level-`(l - 1)` vertices, and the
//! vertex created on edge `e` gets index `n_v(l - 1) + rank(e)` where the
//! rank is taken in the sorted `(min, max)` edge list. Child faces of face
//! `f` are `4f..4f + 4`.

mod io;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub use io::{read_bin, read_obj, write_bin, write_obj};

/// Largest level `mesh_at_level` will build (about 2.6M vertices).
pub const MAX_LEVEL: u32 = 9;

/// Index of the north pole vertex at every level.
pub const NORTH_POLE: usize = 0;
/// Index of the south pole vertex at every level.
pub const SOUTH_POLE: usize = 11;

pub type Vec3 = [f64; 3];

/// Closed-form element counts of a level-`l` icosahedral mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshLevelStats {
    pub level: u32,
    pub n_f: usize,
    pub n_e: usize,
    pub n_v: usize,
}

impl std::fmt::Display for MeshLevelStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "level {}: V={} E={} F={}", self.level, self.n_v, self.n_e, self.n_f)
    }
}

/// Face, edge and vertex counts for level `l`, without building the mesh.
pub fn level_stats(level: u32) -> MeshLevelStats {
    let p = 4usize.pow(level);
    let n_f = 20 * p;
    let n_e = 30 * p;
    MeshLevelStats {
        level,
        n_f,
        n_e,
        n_v: n_e - n_f + 2,
    }
}

/// Number of vertices at `level`.
pub fn n_vertices(level: u32) -> usize {
    level_stats(level).n_v
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcoMesh {
    level: u32,
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    edges: Vec<[u32; 2]>,
}

impl IcoMesh {
    pub(crate) fn from_parts(level: u32, vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Self {
        let edges = sorted_edges(&faces);
        IcoMesh {
            level,
            vertices,
            faces,
            edges,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    /// Triangles with counter-clockwise winding seen from outside.
    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Edges as `(min, max)` pairs in lexicographic order.
    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn stats(&self) -> MeshLevelStats {
        MeshLevelStats {
            level: self.level,
            n_f: self.n_faces(),
            n_e: self.n_edges(),
            n_v: self.n_vertices(),
        }
    }

    /// Whether `v` is one of the two vertices sitting on the rotation axis.
    pub fn is_pole(&self, v: usize) -> bool {
        v == NORTH_POLE || v == SOUTH_POLE
    }

    /// Faces incident to each vertex, in ascending face order.
    pub fn vertex_faces(&self) -> VertexFaces {
        VertexFaces::new(self)
    }

    /// Neighbours of `vertex` in counter-clockwise order seen from outside.
    ///
    /// The cycle starts at the neighbour that follows `vertex` in its
    /// lowest-numbered incident face.
    pub fn one_ring(&self, vertex: usize) -> Result<Vec<usize>> {
        if vertex >= self.n_vertices() {
            return Err(Error::IndexOutOfRange {
                index: vertex,
                len: self.n_vertices(),
            });
        }
        let vf = self.vertex_faces();
        Ok(one_ring_with(self, &vf, vertex))
    }

    /// One-rings of every vertex.
    pub fn one_rings(&self) -> Vec<Vec<usize>> {
        let vf = self.vertex_faces();
        (0..self.n_vertices())
            .map(|v| one_ring_with(self, &vf, v))
            .collect()
    }
}

fn one_ring_with(mesh: &IcoMesh, vf: &VertexFaces, vertex: usize) -> Vec<usize> {
    // For each incident face rotated to start at `vertex`, (next, prev)
    // is a directed step around the vertex.
    let steps: Vec<(usize, usize)> = vf
        .faces_of(vertex)
        .iter()
        .map(|&f| {
            let t = mesh.faces[f];
            let k = t.iter().position(|&x| x as usize == vertex).unwrap();
            (t[(k + 1) % 3] as usize, t[(k + 2) % 3] as usize)
        })
        .collect();
    let mut ring = Vec::with_capacity(steps.len());
    let Some(&(start, _)) = steps.first() else {
        return ring;
    };
    let mut cur = start;
    for _ in 0..steps.len() {
        ring.push(cur);
        match steps.iter().find(|s| s.0 == cur) {
            Some(&(_, next)) if next != start => cur = next,
            _ => break,
        }
    }
    ring
}

/// Compressed vertex-to-face incidence.
#[derive(Debug, Clone)]
pub struct VertexFaces {
    offsets: Vec<usize>,
    faces: Vec<usize>,
}

impl VertexFaces {
    fn new(mesh: &IcoMesh) -> Self {
        let nv = mesh.n_vertices();
        let mut counts = vec![0usize; nv + 1];
        for t in &mesh.faces {
            for &v in t {
                counts[v as usize + 1] += 1;
            }
        }
        for i in 0..nv {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut faces = vec![0usize; offsets[nv]];
        for (f, t) in mesh.faces.iter().enumerate() {
            for &v in t {
                let slot = &mut fill[v as usize];
                faces[*slot] = f;
                *slot += 1;
            }
        }
        VertexFaces { offsets, faces }
    }

    pub fn faces_of(&self, v: usize) -> &[usize] {
        &self.faces[self.offsets[v]..self.offsets[v + 1]]
    }
}

fn sorted_edges(faces: &[[u32; 3]]) -> Vec<[u32; 2]> {
    let mut edges: Vec<[u32; 2]> = faces
        .iter()
        .flat_map(|t| {
            [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
                .map(|(a, b)| [a.min(b), a.max(b)])
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// The level-0 mesh: a regular icosahedron inscribed in the unit sphere.
///
/// Vertex 0 is the north pole, 1..=5 the upper ring at longitudes
/// `72k°`, 6..=10 the lower ring at `36° + 72k°`, and 11 the south pole.
pub fn build_icosahedron() -> IcoMesh {
    let s5 = 5f64.sqrt();
    let z = 1.0 / s5;
    let r = 2.0 / s5;
    // cos/sin of multiples of 36° in closed form so results do not depend
    // on the platform's libm.
    let c36 = (1.0 + s5) / 4.0;
    let s36 = (10.0 - 2.0 * s5).sqrt() / 4.0;
    let c72 = (s5 - 1.0) / 4.0;
    let s72 = (10.0 + 2.0 * s5).sqrt() / 4.0;
    let upper = [
        (1.0, 0.0),
        (c72, s72),
        (-c36, s36),
        (-c36, -s36),
        (c72, -s72),
    ];
    let lower = [
        (c36, s36),
        (-c72, s72),
        (-1.0, 0.0),
        (-c72, -s72),
        (c36, -s36),
    ];
    let mut vertices = Vec::with_capacity(12);
    vertices.push([0.0, 0.0, 1.0]);
    for (c, s) in upper {
        vertices.push([r * c, r * s, z]);
    }
    for (c, s) in lower {
        vertices.push([r * c, r * s, -z]);
    }
    vertices.push([0.0, 0.0, -1.0]);

    let u = |k: u32| 1 + k % 5;
    let l = |k: u32| 6 + k % 5;
    let mut faces = Vec::with_capacity(20);
    for k in 0..5 {
        faces.push([0, u(k), u(k + 1)]);
    }
    for k in 0..5 {
        faces.push([u(k), l(k), u(k + 1)]);
        faces.push([l(k), l(k + 1), u(k + 1)]);
    }
    for k in 0..5 {
        faces.push([11, l(k + 1), l(k)]);
    }
    for t in &mut faces {
        let [a, b, c] = t.map(|i| vertices[i as usize]);
        let n = cross(sub(b, a), sub(c, a));
        if dot(n, add(add(a, b), c)) < 0.0 {
            t.swap(1, 2);
        }
    }
    IcoMesh::from_parts(0, vertices, faces)
}

/// One level of 4-to-1 refinement with midpoints projected to the sphere.
pub fn subdivide(mesh: &IcoMesh) -> IcoMesh {
    let nv = mesh.n_vertices();
    let mut vertices = Vec::with_capacity(nv + mesh.n_edges());
    vertices.extend_from_slice(&mesh.vertices);
    let mut mid = HashMap::with_capacity(mesh.n_edges());
    for (rank, e) in mesh.edges.iter().enumerate() {
        let a = mesh.vertices[e[0] as usize];
        let b = mesh.vertices[e[1] as usize];
        vertices.push(normalize(scale(add(a, b), 0.5)));
        mid.insert((e[0], e[1]), (nv + rank) as u32);
    }
    let m = |a: u32, b: u32| mid[&(a.min(b), a.max(b))];
    let mut faces = Vec::with_capacity(4 * mesh.n_faces());
    for &[a, b, c] in &mesh.faces {
        let (ab, bc, ca) = (m(a, b), m(b, c), m(c, a));
        faces.push([a, ab, ca]);
        faces.push([ab, b, bc]);
        faces.push([ca, bc, c]);
        faces.push([ab, bc, ca]);
    }
    IcoMesh::from_parts(mesh.level + 1, vertices, faces)
}

/// The icosphere at `level`, built by repeated subdivision.
pub fn mesh_at_level(level: u32) -> Result<IcoMesh> {
    if level > MAX_LEVEL {
        return Err(Error::LevelOutOfRange {
            level,
            max: MAX_LEVEL,
        });
    }
    let mut mesh = build_icosahedron();
    for _ in 0..level {
        mesh = subdivide(&mesh);
    }
    Ok(mesh)
}

/// Longitude in `(-π, π]` and latitude in `[-π/2, π/2]` of a unit vector.
pub fn lon_lat(p: Vec3) -> (f64, f64) {
    let lon = p[1].atan2(p[0]);
    let lat = p[2].clamp(-1.0, 1.0).asin();
    (lon, lat)
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosahedron_counts_and_poles() {
        let m = build_icosahedron();
        assert_eq!(m.stats(), level_stats(0));
        assert_eq!(m.vertices()[0], [0.0, 0.0, 1.0]);
        assert_eq!(m.vertices()[SOUTH_POLE], [0.0, 0.0, -1.0]);
    }

    #[test]
    fn icosahedron_edges_are_equal() {
        let m = build_icosahedron();
        let expected = 4.0 / (10.0 + 2.0 * 5f64.sqrt()).sqrt();
        for e in m.edges() {
            let d = norm(sub(m.vertices()[e[0] as usize], m.vertices()[e[1] as usize]));
            assert!((d - expected).abs() < 1e-12, "{d} vs {expected}");
        }
    }

    #[test]
    fn vertices_are_unit() {
        let m = mesh_at_level(4).unwrap();
        for v in m.vertices() {
            assert!((norm(*v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn first_subdivision() {
        let ico = build_icosahedron();
        let m = subdivide(&ico);
        assert_eq!((m.n_vertices(), m.n_faces(), m.n_edges()), (42, 80, 120));
        assert_eq!(&m.vertices()[..12], ico.vertices());
        // new vertex index follows edge rank
        let e0 = ico.edges()[0];
        let expect = normalize(scale(
            add(ico.vertices()[e0[0] as usize], ico.vertices()[e0[1] as usize]),
            0.5,
        ));
        assert_eq!(m.vertices()[12], expect);
    }

    #[test]
    fn level_guard() {
        assert!(matches!(
            mesh_at_level(10),
            Err(Error::LevelOutOfRange { level: 10, .. })
        ));
        assert_eq!(mesh_at_level(0).unwrap(), build_icosahedron());
    }

    #[test]
    fn winding_is_consistent_and_outward() {
        for level in 0..4 {
            let m = mesh_at_level(level).unwrap();
            let mut directed = std::collections::HashSet::new();
            for t in m.faces() {
                for k in 0..3 {
                    assert!(directed.insert((t[k], t[(k + 1) % 3])));
                }
                let [a, b, c] = t.map(|i| m.vertices()[i as usize]);
                assert!(dot(cross(sub(b, a), sub(c, a)), a) > 0.0);
            }
            for &(a, b) in &directed {
                assert!(directed.contains(&(b, a)), "edge ({a},{b}) unmatched");
            }
            assert_eq!(directed.len(), 2 * m.n_edges());
        }
    }

    #[test]
    fn one_ring_valence() {
        let m0 = build_icosahedron();
        for v in 0..12 {
            assert_eq!(m0.one_ring(v).unwrap().len(), 5);
        }
        let m1 = subdivide(&m0);
        assert_eq!(m1.one_ring(12).unwrap().len(), 6);
        assert!(matches!(
            m1.one_ring(42),
            Err(Error::IndexOutOfRange { index: 42, len: 42 })
        ));
    }

    #[test]
    fn one_ring_is_cyclic_and_ccw() {
        let m = mesh_at_level(2).unwrap();
        for (v, ring) in m.one_rings().iter().enumerate() {
            let p = m.vertices()[v];
            for k in 0..ring.len() {
                let a = sub(m.vertices()[ring[k]], p);
                let b = sub(m.vertices()[ring[(k + 1) % ring.len()]], p);
                // consecutive neighbours share a face with v
                let mut t = [v as u32, ring[k] as u32, ring[(k + 1) % ring.len()] as u32];
                t.sort_unstable();
                assert!(m.faces().iter().any(|f| {
                    let mut f = *f;
                    f.sort_unstable();
                    f == t
                }));
                assert!(dot(cross(a, b), p) > 0.0);
            }
        }
    }
}
