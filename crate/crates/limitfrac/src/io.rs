//! On-disk artifacts: legacy ASCII VTK snapshots and the CSV energy trace.
//!
//! Numeric formatting is fixed (17 significant digits in VTK, shortest
//! round-trip in CSV, LF endings) so identical runs produce byte-identical
//! files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::fespace::ScalarField;
use crate::mesh::Mesh;
use crate::sim::EnergyRecord;

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders a legacy ASCII VTK unstructured grid with the given nodal and
/// per-cell scalar fields. Crack-face duplicates appear as distinct points
/// at coincident coordinates.
pub fn vtk_string(mesh: &Mesh, point_fields: &[(&str, &[f64])], cell_fields: &[(&str, &[f64])]) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("limitfrac snapshot\n");
    s.push_str("ASCII\n");
    s.push_str("DATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {} double", mesh.n_vertices()).unwrap();
    for p in &mesh.vertices {
        writeln!(s, "{} {} 0", fmt17(p[0]), fmt17(p[1])).unwrap();
    }
    writeln!(s, "CELLS {} {}", mesh.n_elements(), 4 * mesh.n_elements()).unwrap();
    for tri in &mesh.triangles {
        writeln!(s, "3 {} {} {}", tri.v[0], tri.v[1], tri.v[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {}", mesh.n_elements()).unwrap();
    for _ in 0..mesh.n_elements() {
        s.push_str("5\n");
    }
    if !point_fields.is_empty() {
        writeln!(s, "POINT_DATA {}", mesh.n_vertices()).unwrap();
        for (name, values) in point_fields {
            assert_eq!(values.len(), mesh.n_vertices(), "point field {name}");
            writeln!(s, "SCALARS {name} double 1").unwrap();
            s.push_str("LOOKUP_TABLE default\n");
            for v in *values {
                writeln!(s, "{}", fmt17(*v)).unwrap();
            }
        }
    }
    if !cell_fields.is_empty() {
        writeln!(s, "CELL_DATA {}", mesh.n_elements()).unwrap();
        for (name, values) in cell_fields {
            assert_eq!(values.len(), mesh.n_elements(), "cell field {name}");
            writeln!(s, "SCALARS {name} double 1").unwrap();
            s.push_str("LOOKUP_TABLE default\n");
            for v in *values {
                writeln!(s, "{}", fmt17(*v)).unwrap();
            }
        }
    }
    s
}

pub fn write_vtk(
    mesh: &Mesh,
    point_fields: &[(&str, &[f64])],
    cell_fields: &[(&str, &[f64])],
    path: &Path,
) -> io::Result<()> {
    fs::write(path, vtk_string(mesh, point_fields, cell_fields))
}

/// Convenience wrapper for the common (u, v) snapshot.
pub fn write_fields_vtk(mesh: &Mesh, u: &ScalarField, v: &ScalarField, path: &Path) -> io::Result<()> {
    write_vtk(mesh, &[("u", &u.values), ("v", &v.values)], &[], path)
}

pub fn energy_csv_string(log: &[EnergyRecord]) -> String {
    let mut s = String::from("step,time,bulk,surface,total,dofs,elements,estimator\n");
    for r in log {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.step, r.time, r.bulk, r.surface, r.total, r.dofs, r.elements, r.estimator
        )
        .unwrap();
    }
    s
}

pub fn write_energy_csv(log: &[EnergyRecord], path: &Path) -> io::Result<()> {
    fs::write(path, energy_csv_string(log))
}
