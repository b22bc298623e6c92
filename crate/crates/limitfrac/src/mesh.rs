//! Conforming triangular meshes of the slit unit square.
//!
//! Triangles are stored in the newest-vertex convention: the designated
//! refinement edge is `(v[0], v[1])` and `v[2]` is the peak. Root triangles
//! get their longest edge as the refinement edge, which for the structured
//! grid is the square diagonal; recursive bisection then produces finitely
//! many similarity classes and the shape-regularity constant stays bounded.
//!
//! The slit is geometric: vertices strictly inside the slit segment and at
//! its mouth are duplicated, one copy per crack face, so the two faces are
//! topologically disconnected even though their coordinates coincide.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("subdivisions per side must be >= 1, got {0}")]
    InvalidSubdivisions(usize),
    #[error("slit geometry rejected: {0}")]
    SlitMisaligned(String),
    #[error("element index {0} out of range ({1} elements)")]
    BadElementIndex(usize, usize),
    #[error("degenerate triangle {0} (signed area {1:.3e})")]
    DegenerateTriangle(usize, f64),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("boundary edge ({0}, {1}) lies on no boundary segment (hanging node?)")]
    UnclassifiableEdge(usize, usize),
    #[error("vertex {0} lies in the interior of edge ({1}, {2})")]
    HangingNode(usize, usize, usize),
}

/// Which crack face a duplicated vertex belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlitSide {
    Left,
    Right,
}

/// Classification of a mesh edge; every edge is exactly one of these.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeClass {
    Interior,
    Dirichlet,
    Neumann,
    Crack,
}

/// Vertical slit descriptor: the segment `{x} × [1 - depth, 1]`.
#[derive(Clone, Copy, Debug)]
pub struct Slit {
    pub x: f64,
    pub depth: f64,
}

/// Slit snapped to grid coordinates; comparisons against these are exact.
#[derive(Clone, Copy, Debug)]
struct SlitGeom {
    x: f64,
    tip_y: f64,
}

#[derive(Clone, Debug)]
pub struct Triangle {
    /// Vertex indices, positively oriented. Refinement edge is `(v[0], v[1])`.
    pub v: [usize; 3],
    /// Element index in the previous generation this triangle descends from.
    pub parent: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Edge {
    /// Endpoint vertex indices, lower index first.
    pub v: (usize, usize),
    /// Adjacent elements: one for boundary and crack-face edges, two for interior.
    pub tris: (usize, Option<usize>),
    pub class: EdgeClass,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.tris.1.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    pub edges: Vec<Edge>,
    /// `tri_edges[t][k]` is the edge opposite local vertex `k` of triangle `t`.
    pub tri_edges: Vec<[usize; 3]>,
    /// Refinement generation; bumped by one per `bisect` call.
    pub generation: u32,
    /// For each vertex, the two vertices whose midpoint it is (root vertices: None).
    pub vertex_parents: Vec<Option<(usize, usize)>>,
    /// Crack-face side for vertices sitting on the slit faces.
    pub slit_side: Vec<Option<SlitSide>>,
    slit: Option<SlitGeom>,
}

/// Precomputed per-element and per-edge geometry.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub area: Vec<f64>,
    /// Element diameter `h_tau` (longest edge).
    pub h_tau: Vec<f64>,
    /// `grad[t][k]` is the constant gradient of the P1 basis of local vertex `k`.
    pub grad: Vec<[[f64; 2]; 3]>,
    /// Edge length `h_e`.
    pub h_e: Vec<f64>,
    /// Unit normal per edge. Interior edges point from the lower-index element
    /// into the higher-index one; boundary edges point out of their element.
    pub normal: Vec<[f64; 2]>,
}

impl Geometry {
    /// Gradient of the P1 function with the given nodal values on element `t`.
    pub fn field_grad(&self, mesh: &Mesh, t: usize, values: &[f64]) -> [f64; 2] {
        let tri = &mesh.triangles[t];
        let mut g = [0.0, 0.0];
        for k in 0..3 {
            let val = values[tri.v[k]];
            g[0] += val * self.grad[t][k][0];
            g[1] += val * self.grad[t][k][1];
        }
        g
    }
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Builds a structured triangulation of the unit square with `n`
    /// subdivisions per side and an optional vertical slit.
    ///
    /// Vertices strictly inside the slit and at its mouth on the top boundary
    /// are duplicated; the slit tip stays a single vertex. Top-boundary edges
    /// are tagged Dirichlet, the remaining outer boundary Neumann, and the
    /// two slit faces Crack.
    pub fn build_slit_square(n: usize, slit: Option<Slit>) -> Result<Mesh, MeshError> {
        if n < 1 {
            return Err(MeshError::InvalidSubdivisions(n));
        }
        let nv = n + 1;
        let mut vertices = Vec::with_capacity(nv * nv);
        for j in 0..nv {
            for i in 0..nv {
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let idx = |i: usize, j: usize| j * nv + i;

        // Two triangles per grid square, diagonal from (i, j) to (i+1, j+1).
        // The diagonal is the longest edge, so it is the refinement edge and
        // the right-angle vertex is the peak.
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let p00 = idx(i, j);
                let p10 = idx(i + 1, j);
                let p01 = idx(i, j + 1);
                let p11 = idx(i + 1, j + 1);
                triangles.push(Triangle { v: [p11, p00, p10], parent: None });
                triangles.push(Triangle { v: [p00, p11, p01], parent: None });
            }
        }

        let mut slit_side = vec![None; vertices.len()];
        let mut snapped_slit = None;
        if let Some(s) = slit {
            if !(s.depth > 0.0 && s.depth < 1.0) {
                return Err(MeshError::SlitMisaligned(format!(
                    "slit depth {} not in (0, 1)",
                    s.depth
                )));
            }
            let ix = s.x * n as f64;
            if (ix - ix.round()).abs() > 1e-12 || !(s.x > 0.0 && s.x < 1.0) {
                return Err(MeshError::SlitMisaligned(format!(
                    "slit line x = {} does not coincide with a mesh line (n = {})",
                    s.x, n
                )));
            }
            let ix = ix.round() as usize;
            let jt = (1.0 - s.depth) * n as f64;
            if (jt - jt.round()).abs() > 1e-12 {
                return Err(MeshError::SlitMisaligned(format!(
                    "slit tip y = {} does not coincide with a mesh line (n = {})",
                    1.0 - s.depth,
                    n
                )));
            }
            let jt = jt.round() as usize;
            // Snap to the grid coordinates so later comparisons are exact.
            let sx = vertices[idx(ix, 0)][0];
            let tip_y = vertices[idx(0, jt)][1];
            snapped_slit = Some(SlitGeom { x: sx, tip_y });

            // Duplicate every slit vertex strictly above the tip, mouth included.
            // The original copy serves the left face, the duplicate the right.
            let mut right_copy = HashMap::new();
            for j in (jt + 1)..nv {
                let orig = idx(ix, j);
                let dup = vertices.len();
                vertices.push(vertices[orig]);
                slit_side.push(Some(SlitSide::Right));
                slit_side[orig] = Some(SlitSide::Left);
                right_copy.insert(orig, dup);
            }
            for tri in &mut triangles {
                let cx = (vertices[tri.v[0]][0] + vertices[tri.v[1]][0] + vertices[tri.v[2]][0]) / 3.0;
                if cx > sx {
                    for v in &mut tri.v {
                        if let Some(&dup) = right_copy.get(v) {
                            *v = dup;
                        }
                    }
                }
            }
        }

        let vertex_parents = vec![None; vertices.len()];
        let mut mesh = Mesh {
            vertices,
            triangles,
            edges: Vec::new(),
            tri_edges: Vec::new(),
            generation: 0,
            vertex_parents,
            slit_side,
            slit: snapped_slit,
        };
        mesh.rebuild_topology()?;
        Ok(mesh)
    }

    pub fn slit(&self) -> Option<Slit> {
        self.slit.map(|s| Slit { x: s.x, depth: 1.0 - s.tip_y })
    }

    /// Coordinates of the slit tip, if a slit is present.
    pub fn slit_tip(&self) -> Option<[f64; 2]> {
        self.slit.map(|s| [s.x, s.tip_y])
    }

    /// Coincident duplicate pairs `(left, right)` along the crack faces.
    ///
    /// Pairs are matched by exact coordinates; a face vertex whose twin has
    /// not been created yet (one-sided refinement of the crack) is skipped.
    pub fn slit_pairs(&self) -> Vec<(usize, usize)> {
        let mut left: Vec<usize> = Vec::new();
        let mut right: Vec<usize> = Vec::new();
        for (i, side) in self.slit_side.iter().enumerate() {
            match side {
                Some(SlitSide::Left) => left.push(i),
                Some(SlitSide::Right) => right.push(i),
                None => {}
            }
        }
        let by_coord = |&i: &usize| (self.vertices[i][1].to_bits(), self.vertices[i][0].to_bits());
        left.sort_by_key(by_coord);
        right.sort_by_key(by_coord);
        let mut pairs = Vec::new();
        let (mut a, mut b) = (0, 0);
        while a < left.len() && b < right.len() {
            let ka = by_coord(&left[a]);
            let kb = by_coord(&right[b]);
            match ka.cmp(&kb) {
                std::cmp::Ordering::Equal => {
                    pairs.push((left[a], right[b]));
                    a += 1;
                    b += 1;
                }
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
            }
        }
        pairs
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    fn rebuild_topology(&mut self) -> Result<(), MeshError> {
        let mut map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut tri_edges = vec![[usize::MAX; 3]; self.triangles.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri.v[(k + 1) % 3];
                let b = tri.v[(k + 2) % 3];
                let key = edge_key(a, b);
                let e = *map.entry(key).or_insert_with(|| {
                    edges.push(Edge { v: key, tris: (t, None), class: EdgeClass::Interior });
                    edges.len() - 1
                });
                if edges[e].tris.0 != t {
                    if edges[e].tris.1.is_some() {
                        return Err(MeshError::NonManifoldEdge(key.0, key.1));
                    }
                    edges[e].tris.1 = Some(t);
                }
                tri_edges[t][k] = e;
            }
        }
        for e in &mut edges {
            if e.tris.1.is_none() {
                e.class = self.classify_boundary_edge(e.v)?;
            }
        }
        self.edges = edges;
        self.tri_edges = tri_edges;
        Ok(())
    }

    fn classify_boundary_edge(&self, (a, b): (usize, usize)) -> Result<EdgeClass, MeshError> {
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        if let Some(s) = self.slit {
            let on_slit = |p: [f64; 2]| p[0] == s.x && p[1] >= s.tip_y && p[1] <= 1.0;
            if on_slit(pa) && on_slit(pb) {
                return Ok(EdgeClass::Crack);
            }
        }
        if pa[1] == 1.0 && pb[1] == 1.0 {
            return Ok(EdgeClass::Dirichlet);
        }
        let vertical_outer = pa[0] == pb[0] && (pa[0] == 0.0 || pa[0] == 1.0);
        let bottom = pa[1] == 0.0 && pb[1] == 0.0;
        if vertical_outer || bottom {
            return Ok(EdgeClass::Neumann);
        }
        Err(MeshError::UnclassifiableEdge(a, b))
    }

    /// Bisects every marked element through its refinement edge and applies
    /// closure bisections until the mesh is conforming again.
    ///
    /// An empty marked set returns an identical copy with the generation
    /// unchanged.
    pub fn bisect(&self, marked: &[usize]) -> Result<Mesh, MeshError> {
        for &t in marked {
            if t >= self.triangles.len() {
                return Err(MeshError::BadElementIndex(t, self.triangles.len()));
            }
        }
        if marked.is_empty() {
            return Ok(self.clone());
        }

        // Closure on the marked-edge set: a triangle with any marked edge must
        // also have its refinement edge marked, so that splitting the triangle
        // through its bisection hierarchy covers exactly its marked edges.
        // Crack-face edges are co-marked with their geometric twin on the
        // opposite face so the two faces subdivide in lockstep.
        let mut crack_twins: HashMap<([u64; 2], [u64; 2]), Vec<usize>> = HashMap::new();
        for (e, edge) in self.edges.iter().enumerate() {
            if edge.class == EdgeClass::Crack {
                crack_twins.entry(self.edge_coord_key(edge)).or_default().push(e);
            }
        }
        let mut edge_marked = vec![false; self.edges.len()];
        let mut edge_queue: VecDeque<usize> = VecDeque::new();
        let mut tri_queue: VecDeque<usize> = VecDeque::new();
        let mark = |e: usize, marks: &mut Vec<bool>, eq: &mut VecDeque<usize>| {
            if !marks[e] {
                marks[e] = true;
                eq.push_back(e);
            }
        };
        for &t in marked {
            // edge opposite the peak = refinement edge
            mark(self.tri_edges[t][2], &mut edge_marked, &mut edge_queue);
        }
        loop {
            while let Some(e) = edge_queue.pop_front() {
                let (t0, t1) = self.edges[e].tris;
                tri_queue.push_back(t0);
                if let Some(t1) = t1 {
                    tri_queue.push_back(t1);
                }
                if self.edges[e].class == EdgeClass::Crack {
                    let key = self.edge_coord_key(&self.edges[e]);
                    for &twin in &crack_twins[&key] {
                        mark(twin, &mut edge_marked, &mut edge_queue);
                    }
                }
            }
            match tri_queue.pop_front() {
                None => break,
                Some(t) => {
                    let ref_e = self.tri_edges[t][2];
                    if !edge_marked[ref_e] && self.tri_edges[t].iter().any(|&e| edge_marked[e]) {
                        mark(ref_e, &mut edge_marked, &mut edge_queue);
                    }
                }
            }
        }

        // Midpoints for marked edges, in edge order for determinism.
        let mut vertices = self.vertices.clone();
        let mut vertex_parents = self.vertex_parents.clone();
        let mut slit_side = self.slit_side.clone();
        let mut midpoint = vec![usize::MAX; self.edges.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            if !edge_marked[e] {
                continue;
            }
            let (a, b) = edge.v;
            let m = vertices.len();
            vertices.push([
                0.5 * (self.vertices[a][0] + self.vertices[b][0]),
                0.5 * (self.vertices[a][1] + self.vertices[b][1]),
            ]);
            vertex_parents.push(Some((a, b)));
            let side = if edge.class == EdgeClass::Crack {
                self.slit_side[a].or(self.slit_side[b])
            } else {
                None
            };
            slit_side.push(side);
            midpoint[e] = m;
        }

        // Subdivide. With peak-at-2 ordering the children of (v0, v1, v2) with
        // midpoint m of (v0, v1) are (v2, v0, m) and (v1, v2, m), both
        // positively oriented with m as their peak.
        let mut triangles = Vec::with_capacity(self.triangles.len() + 2 * marked.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            let [v0, v1, v2] = tri.v;
            let e_ref = self.tri_edges[t][2];
            let e_b = self.tri_edges[t][0]; // opposite v0 = (v1, v2)
            let e_a = self.tri_edges[t][1]; // opposite v1 = (v2, v0)
            if !edge_marked[e_ref] {
                debug_assert!(!edge_marked[e_a] && !edge_marked[e_b]);
                triangles.push(Triangle { v: tri.v, parent: Some(t) });
                continue;
            }
            let m = midpoint[e_ref];
            let mut emit = |child: [usize; 3], split_edge: usize| {
                if edge_marked[split_edge] {
                    let mm = midpoint[split_edge];
                    let [c0, c1, c2] = child;
                    triangles.push(Triangle { v: [c2, c0, mm], parent: Some(t) });
                    triangles.push(Triangle { v: [c1, c2, mm], parent: Some(t) });
                } else {
                    triangles.push(Triangle { v: child, parent: Some(t) });
                }
            };
            emit([v2, v0, m], e_a);
            emit([v1, v2, m], e_b);
        }

        let mut mesh = Mesh {
            vertices,
            triangles,
            edges: Vec::new(),
            tri_edges: Vec::new(),
            generation: self.generation + 1,
            vertex_parents,
            slit_side,
            slit: self.slit,
        };
        mesh.rebuild_topology()?;
        Ok(mesh)
    }

    /// Computes per-element areas, diameters and basis gradients plus
    /// per-edge lengths and unit normals.
    pub fn geometry(&self) -> Result<Geometry, MeshError> {
        let nt = self.triangles.len();
        let mut area = vec![0.0; nt];
        let mut h_tau = vec![0.0; nt];
        let mut grad = vec![[[0.0; 2]; 3]; nt];
        for (t, tri) in self.triangles.iter().enumerate() {
            let p = [self.vertices[tri.v[0]], self.vertices[tri.v[1]], self.vertices[tri.v[2]]];
            let a = signed_area(p[0], p[1], p[2]);
            if a <= 0.0 || !a.is_finite() {
                return Err(MeshError::DegenerateTriangle(t, a));
            }
            area[t] = a;
            h_tau[t] = dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[2], p[0]));
            for k in 0..3 {
                let b = p[(k + 1) % 3];
                let c = p[(k + 2) % 3];
                // grad of barycentric k = rot90(c - b) / (2 area)
                grad[t][k] = [-(c[1] - b[1]) / (2.0 * a), (c[0] - b[0]) / (2.0 * a)];
            }
        }
        let ne = self.edges.len();
        let mut h_e = vec![0.0; ne];
        let mut normal = vec![[0.0; 2]; ne];
        for (e, edge) in self.edges.iter().enumerate() {
            let pa = self.vertices[edge.v.0];
            let pb = self.vertices[edge.v.1];
            let len = dist(pa, pb);
            h_e[e] = len;
            let mut n = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
            // Orient out of the first (lower-index) adjacent element.
            let t0 = edge.tris.0;
            let c = self.centroid(t0);
            let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            if n[0] * (mid[0] - c[0]) + n[1] * (mid[1] - c[1]) < 0.0 {
                n = [-n[0], -n[1]];
            }
            normal[e] = n;
        }
        Ok(Geometry { area, h_tau, grad, h_e, normal })
    }

    fn edge_coord_key(&self, edge: &Edge) -> ([u64; 2], [u64; 2]) {
        let bits = |p: [f64; 2]| [p[0].to_bits(), p[1].to_bits()];
        let a = bits(self.vertices[edge.v.0]);
        let b = bits(self.vertices[edge.v.1]);
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let tri = &self.triangles[t];
        let mut c = [0.0, 0.0];
        for &v in &tri.v {
            c[0] += self.vertices[v][0] / 3.0;
            c[1] += self.vertices[v][1] / 3.0;
        }
        c
    }

    /// Max over elements of diameter over inscribed-circle diameter.
    pub fn max_shape_ratio(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for tri in &self.triangles {
            let p = [self.vertices[tri.v[0]], self.vertices[tri.v[1]], self.vertices[tri.v[2]]];
            let a = signed_area(p[0], p[1], p[2]).abs();
            let per = dist(p[0], p[1]) + dist(p[1], p[2]) + dist(p[2], p[0]);
            let h = dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[2], p[0]));
            // inscribed diameter = 4 * area / perimeter
            worst = worst.max(h * per / (4.0 * a));
        }
        worst
    }

    /// Verifies conformity: positive areas, every edge manifold, every
    /// boundary edge classifiable, and (exhaustively) no vertex in the
    /// interior of another triangle's edge. Quadratic cost; test use.
    pub fn check_conformity(&self) -> Result<(), MeshError> {
        // rebuild_topology re-derives adjacency and classification.
        let mut copy = self.clone();
        copy.rebuild_topology()?;
        copy.geometry()?;
        for edge in &copy.edges {
            let pa = self.vertices[edge.v.0];
            let pb = self.vertices[edge.v.1];
            for (w, p) in self.vertices.iter().enumerate() {
                if w == edge.v.0 || w == edge.v.1 {
                    continue;
                }
                let cross = (pb[0] - pa[0]) * (p[1] - pa[1]) - (pb[1] - pa[1]) * (p[0] - pa[0]);
                let d0 = dist(pa, *p) + dist(*p, pb) - dist(pa, pb);
                if cross.abs() < 1e-14 && d0.abs() < 1e-12 {
                    // A coincident duplicate at an endpoint (crack faces) is legal.
                    let dup = (*p == pa) || (*p == pb);
                    if !dup {
                        return Err(MeshError::HangingNode(w, edge.v.0, edge.v.1));
                    }
                }
            }
        }
        Ok(())
    }

    /// ASCII debug dump: vertices, triangles, edge tags.
    pub fn debug_dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        writeln!(s, "mesh generation {}", self.generation).unwrap();
        writeln!(s, "vertices {}", self.vertices.len()).unwrap();
        for (i, p) in self.vertices.iter().enumerate() {
            let side = match self.slit_side[i] {
                Some(SlitSide::Left) => " slit-left",
                Some(SlitSide::Right) => " slit-right",
                None => "",
            };
            writeln!(s, "  {} {:.17e} {:.17e}{}", i, p[0], p[1], side).unwrap();
        }
        writeln!(s, "triangles {}", self.triangles.len()).unwrap();
        for (t, tri) in self.triangles.iter().enumerate() {
            writeln!(s, "  {} {} {} {}", t, tri.v[0], tri.v[1], tri.v[2]).unwrap();
        }
        writeln!(s, "edges {}", self.edges.len()).unwrap();
        for edge in &self.edges {
            writeln!(s, "  {} {} {:?}", edge.v.0, edge.v.1, edge.class).unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square_two_tris() -> Mesh {
        Mesh::build_slit_square(1, None).unwrap()
    }

    #[test]
    fn structured_counts_n2() {
        let mesh = Mesh::build_slit_square(2, None).unwrap();
        assert_eq!(mesh.n_vertices(), 9);
        assert_eq!(mesh.n_elements(), 8);
        assert_eq!(mesh.edges.len(), 16);
    }

    #[test]
    fn n0_rejected() {
        assert!(matches!(
            Mesh::build_slit_square(0, None),
            Err(MeshError::InvalidSubdivisions(0))
        ));
    }

    #[test]
    fn slit_misaligned_rejected() {
        // x = 0.5 needs even n.
        let err = Mesh::build_slit_square(3, Some(Slit { x: 0.5, depth: 0.5 }));
        assert!(matches!(err, Err(MeshError::SlitMisaligned(_))));
    }

    #[test]
    fn slit_duplicates_and_chains_n2() {
        let mesh = Mesh::build_slit_square(2, Some(Slit { x: 0.5, depth: 0.5 })).unwrap();
        // One grid vertex strictly above the tip on x = 0.5 (the mouth) gets duplicated.
        assert_eq!(mesh.n_vertices(), 10);
        let pairs = mesh.slit_pairs();
        assert_eq!(pairs.len(), 1);
        let (l, r) = pairs[0];
        assert_eq!(mesh.vertices[l], [0.5, 1.0]);
        assert_eq!(mesh.vertices[l], mesh.vertices[r]);
        // Two topologically separate crack chains: each crack edge sees one triangle.
        let crack: Vec<_> = mesh.edges.iter().filter(|e| e.class == EdgeClass::Crack).collect();
        assert_eq!(crack.len(), 2);
        for e in &crack {
            assert!(e.tris.1.is_none());
        }
        mesh.check_conformity().unwrap();
    }

    #[test]
    fn edge_classes_partition() {
        let mesh = Mesh::build_slit_square(4, Some(Slit { x: 0.5, depth: 0.5 })).unwrap();
        let mut dir = 0;
        let mut neu = 0;
        let mut crack = 0;
        for e in &mesh.edges {
            match e.class {
                EdgeClass::Dirichlet => dir += 1,
                EdgeClass::Neumann => neu += 1,
                EdgeClass::Crack => crack += 1,
                EdgeClass::Interior => assert!(e.tris.1.is_some()),
            }
        }
        assert_eq!(dir, 4); // top row
        assert_eq!(neu, 12); // bottom + two sides
        assert_eq!(crack, 4); // two faces, two edges each
    }

    #[test]
    fn bisect_empty_is_identity() {
        let mesh = Mesh::build_slit_square(2, None).unwrap();
        let same = mesh.bisect(&[]).unwrap();
        assert_eq!(same.generation, mesh.generation);
        assert_eq!(same.n_elements(), mesh.n_elements());
        assert_eq!(same.n_vertices(), mesh.n_vertices());
    }

    #[test]
    fn bisect_invalid_index_rejected() {
        let mesh = unit_square_two_tris();
        assert!(matches!(mesh.bisect(&[7]), Err(MeshError::BadElementIndex(7, 2))));
    }

    #[test]
    fn bisect_one_of_compatible_pair_gives_four() {
        // Both triangles share the diagonal as refinement edge, so marking one
        // forces its neighbor through closure.
        let mesh = unit_square_two_tris();
        let fine = mesh.bisect(&[0]).unwrap();
        assert_eq!(fine.n_elements(), 4);
        assert_eq!(fine.generation, 1);
        fine.check_conformity().unwrap();
    }

    #[test]
    fn bisect_all_conforming() {
        let mesh = Mesh::build_slit_square(2, Some(Slit { x: 0.5, depth: 0.5 })).unwrap();
        let marked: Vec<usize> = (0..mesh.n_elements()).collect();
        let fine = mesh.bisect(&marked).unwrap();
        assert!(fine.n_elements() >= 2 * mesh.n_elements());
        fine.check_conformity().unwrap();
        // Every parent was split at least once.
        for t in 0..mesh.n_elements() {
            let children = fine.triangles.iter().filter(|c| c.parent == Some(t)).count();
            assert!(children >= 2, "element {t} has {children} children");
        }
    }

    #[test]
    fn children_partition_parent_area() {
        let mesh = Mesh::build_slit_square(4, Some(Slit { x: 0.5, depth: 0.5 })).unwrap();
        let fine = mesh.bisect(&[0, 5, 9, 17]).unwrap();
        let g0 = mesh.geometry().unwrap();
        let g1 = fine.geometry().unwrap();
        let mut child_area = vec![0.0; mesh.n_elements()];
        for (t, tri) in fine.triangles.iter().enumerate() {
            child_area[tri.parent.unwrap()] += g1.area[t];
        }
        for t in 0..mesh.n_elements() {
            let rel = (child_area[t] - g0.area[t]).abs() / g0.area[t];
            assert!(rel < 1e-14, "parent {t} rel {rel}");
        }
    }

    #[test]
    fn random_bisections_stay_conforming() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut mesh = Mesh::build_slit_square(4, Some(Slit { x: 0.5, depth: 0.5 })).unwrap();
        for round in 0..10 {
            let marked: Vec<usize> =
                (0..mesh.n_elements()).filter(|_| rng.gen_bool(0.3)).collect();
            mesh = mesh.bisect(&marked).unwrap();
            mesh.check_conformity()
                .unwrap_or_else(|e| panic!("round {round}: {e}"));
        }
        assert_eq!(mesh.generation, 10);
    }

    #[test]
    fn shape_ratio_settles_after_two_uniform_rounds() {
        let mut mesh = Mesh::build_slit_square(2, Some(Slit { x: 0.5, depth: 0.5 })).unwrap();
        let mut ratios = Vec::new();
        for _ in 0..10 {
            let all: Vec<usize> = (0..mesh.n_elements()).collect();
            mesh = mesh.bisect(&all).unwrap();
            ratios.push(mesh.max_shape_ratio());
        }
        let settled = ratios[1];
        for r in &ratios[1..] {
            assert!((r - settled).abs() <= 1e-12 * settled);
        }
    }

    #[test]
    fn crack_faces_never_merge() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut mesh = Mesh::build_slit_square(4, Some(Slit { x: 0.5, depth: 0.5 })).unwrap();
        for _ in 0..8 {
            let marked: Vec<usize> =
                (0..mesh.n_elements()).filter(|_| rng.gen_bool(0.4)).collect();
            mesh = mesh.bisect(&marked).unwrap();
        }
        for (l, r) in mesh.slit_pairs() {
            assert_ne!(l, r);
            assert_eq!(mesh.vertices[l], mesh.vertices[r]);
        }
        // Crack edges stay one-sided.
        for e in &mesh.edges {
            if e.class == EdgeClass::Crack {
                assert!(e.tris.1.is_none());
            }
        }
        // No triangle touches both faces.
        for tri in &mesh.triangles {
            let mut left = false;
            let mut right = false;
            for &v in &tri.v {
                match mesh.slit_side[v] {
                    Some(SlitSide::Left) => left = true,
                    Some(SlitSide::Right) => right = true,
                    None => {}
                }
            }
            assert!(!(left && right));
        }
    }

    #[test]
    fn geometry_right_triangle() {
        let mesh = unit_square_two_tris();
        let g = mesh.geometry().unwrap();
        for t in 0..2 {
            assert!((g.area[t] - 0.5).abs() < 1e-15);
            assert!((g.h_tau[t] - 2f64.sqrt()).abs() < 1e-15);
        }
        for e in 0..mesh.edges.len() {
            let h = g.h_e[e];
            assert!((h - 1.0).abs() < 1e-15 || (h - 2f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn geometry_gradient_reproduces_linear() {
        let mesh = unit_square_two_tris();
        let g = mesh.geometry().unwrap();
        let values: Vec<f64> = mesh.vertices.iter().map(|p| p[0]).collect();
        for t in 0..mesh.n_elements() {
            let grad = g.field_grad(&mesh, t, &values);
            assert!((grad[0] - 1.0).abs() < 1e-14 && grad[1].abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_triangle_rejected_by_geometry() {
        let mut mesh = unit_square_two_tris();
        mesh.vertices[1] = mesh.vertices[0];
        assert!(matches!(mesh.geometry(), Err(MeshError::DegenerateTriangle(..))));
    }

    #[test]
    fn debug_dump_mentions_tags() {
        let mesh = Mesh::build_slit_square(2, Some(Slit { x: 0.5, depth: 0.5 })).unwrap();
        let dump = mesh.debug_dump();
        assert!(dump.contains("Dirichlet") && dump.contains("Crack") && dump.contains("Neumann"));
    }
}
