//! P1 finite element space on a [`Mesh`]: nodal fields, mass lumping,
//! constraint sets, and field transfer across refinement.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::mesh::Mesh;
use crate::par;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("field is bound to generation {field} with {values} values, mesh has generation {mesh} with {vertices} vertices")]
    GenerationMismatch {
        field: u32,
        values: usize,
        mesh: u32,
        vertices: usize,
    },
    #[error("mesh (generation {0}) is not a refinement descendant of the source mesh (generation {1})")]
    NotADescendant(u32, u32),
    #[error("node {0} is prescribed both a nonzero Dirichlet value {1} and a crack pin to zero")]
    ConflictingConstraints(usize, f64),
}

/// Nodal coefficient vector of a P1 function on one mesh generation.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub mesh_generation: u32,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        ScalarField {
            mesh_generation: mesh.generation,
            values: vec![c; mesh.n_vertices()],
        }
    }

    /// Standard nodal interpolation: `values[i] = f(vertex_i)`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        ScalarField {
            mesh_generation: mesh.generation,
            values: mesh.vertices.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn check_bound(&self, mesh: &Mesh) -> Result<(), FieldError> {
        if self.mesh_generation != mesh.generation || self.values.len() != mesh.n_vertices() {
            return Err(FieldError::GenerationMismatch {
                field: self.mesh_generation,
                values: self.values.len(),
                mesh: mesh.generation,
                vertices: mesh.n_vertices(),
            });
        }
        Ok(())
    }

    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Dirichlet prescriptions for `u` and crack pins (v = 0) for the phase field.
#[derive(Clone, Debug, Default)]
pub struct ConstraintSet {
    pub dirichlet: BTreeMap<usize, f64>,
    pub crack: BTreeSet<usize>,
}

impl ConstraintSet {
    pub fn from_dirichlet(dirichlet: BTreeMap<usize, f64>) -> Self {
        ConstraintSet { dirichlet, crack: BTreeSet::new() }
    }

    pub fn from_crack(crack: BTreeSet<usize>) -> Self {
        ConstraintSet { dirichlet: BTreeMap::new(), crack }
    }

    /// A node pinned by both a Dirichlet value and a crack pin is legal only
    /// when the prescribed value is zero.
    pub fn validate(&self) -> Result<(), FieldError> {
        for (&node, &value) in &self.dirichlet {
            if value != 0.0 && self.crack.contains(&node) {
                return Err(FieldError::ConflictingConstraints(node, value));
            }
        }
        Ok(())
    }
}

/// Lumped vertex weights `w_i = sum of adjacent element areas / 3`.
pub fn lumped_weights(mesh: &Mesh) -> Result<Vec<f64>, crate::mesh::MeshError> {
    let geom = mesh.geometry()?;
    Ok(lumped_weights_with(mesh, &geom))
}

pub(crate) fn lumped_weights_with(mesh: &Mesh, geom: &crate::mesh::Geometry) -> Vec<f64> {
    let mut w = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for &v in &tri.v {
            w[v] += geom.area[t] / 3.0;
        }
    }
    w
}

/// Mass-lumped integral: `sum_i w_i * values[i]`, the exact integral of the
/// P1 interpolant of the nodal data.
pub fn lumped_integral(field: &ScalarField, mesh: &Mesh) -> Result<f64, crate::Error> {
    field.check_bound(mesh)?;
    let geom = mesh.geometry()?;
    let parts = par::map_indexed(mesh.n_elements(), |t| {
        let tri = &mesh.triangles[t];
        let s = field.values[tri.v[0]] + field.values[tri.v[1]] + field.values[tri.v[2]];
        geom.area[t] / 3.0 * s
    });
    Ok(par::pairwise_sum(&parts))
}

/// Moves a field to a refinement descendant of its mesh by linear
/// interpolation. Exact on surviving vertices; midpoint values are endpoint
/// averages, so the range of the field is preserved.
pub fn transfer(field: &ScalarField, old: &Mesh, new: &Mesh) -> Result<ScalarField, FieldError> {
    field.check_bound(old)?;
    if new.generation == old.generation && new.n_vertices() == old.n_vertices() {
        return Ok(field.clone());
    }
    let descendant = new.generation > old.generation
        && new.n_vertices() >= old.n_vertices()
        && new.vertices[..old.n_vertices()] == old.vertices[..];
    if !descendant {
        return Err(FieldError::NotADescendant(new.generation, old.generation));
    }
    let mut values = Vec::with_capacity(new.n_vertices());
    values.extend_from_slice(&field.values);
    for i in old.n_vertices()..new.n_vertices() {
        let (a, b) = new.vertex_parents[i]
            .expect("refined vertices carry midpoint parents");
        debug_assert!(a < i && b < i);
        values.push(0.5 * (values[a] + values[b]));
    }
    Ok(ScalarField { mesh_generation: new.generation, values })
}

/// Maps a node set to a refinement descendant: surviving nodes keep
/// membership, a midpoint joins when both its parents are members.
pub fn transfer_node_set(set: &BTreeSet<usize>, old: &Mesh, new: &Mesh) -> BTreeSet<usize> {
    let mut out = set.clone();
    for i in old.n_vertices()..new.n_vertices() {
        if let Some((a, b)) = new.vertex_parents[i] {
            if out.contains(&a) && out.contains(&b) {
                out.insert(i);
            }
        }
    }
    out
}

/// Applies constraints: Dirichlet nodes take their prescribed values, crack
/// nodes are pinned to zero, everything else is untouched.
pub fn apply_constraints(field: &ScalarField, cs: &ConstraintSet) -> Result<ScalarField, FieldError> {
    cs.validate()?;
    let mut out = field.clone();
    for (&node, &value) in &cs.dirichlet {
        out.values[node] = value;
    }
    for &node in &cs.crack {
        out.values[node] = 0.0;
    }
    Ok(out)
}
