//! Residual-type local error indicators for the two fields and the composite
//! indicator that gates refinement.
//!
//! Per element, the u-indicator has a gradient-weighted volume term, a
//! saturation volume term and normal-flux jumps over its interior and
//! Neumann (including crack-face) edges; the v-indicator has the analogous
//! volume terms and `rho^2`-weighted v-flux jumps over all of its edges.
//! Interior edges are counted in both incident elements' sums.

use crate::fespace::ScalarField;
use crate::mesh::{EdgeClass, Geometry, Mesh};
use crate::model::{denom_pow, saturation_ratio, ModelParams};
use crate::par;
use crate::Error;

/// Per-element indicator values and the global estimator.
#[derive(Clone, Debug)]
pub struct IndicatorSet {
    pub mesh_generation: u32,
    /// Per-element u-indicator (not squared).
    pub eta_u: Vec<f64>,
    /// Per-element v-indicator (not squared).
    pub eta_v: Vec<f64>,
    /// Composite per-element indicator, `eta^2 = eta_u^2 + eta_v^2`.
    pub eta: Vec<f64>,
    /// Global estimator, `sqrt(sum of eta^2)`.
    pub global: f64,
}

/// Squared-term breakdown of one element's indicators, for diagnostics and
/// the brute-force cross-check.
#[derive(Clone, Copy, Debug, Default)]
pub struct IndicatorTerms {
    pub u_volume_grad: f64,
    pub u_volume_saturation: f64,
    pub u_edges: f64,
    pub v_volume_grad: f64,
    pub v_volume_reaction: f64,
    pub v_edges: f64,
}

impl IndicatorTerms {
    pub fn eta_u_sq(&self) -> f64 {
        self.u_volume_grad + self.u_volume_saturation + self.u_edges
    }

    pub fn eta_v_sq(&self) -> f64 {
        self.v_volume_grad + self.v_volume_reaction + self.v_edges
    }
}

/// Normal-flux jump of a P1 field across one edge.
///
/// Interior edges take the difference of the two elementwise-constant normal
/// fluxes with the normal oriented from the lower-index element into the
/// higher one; boundary and crack-face edges take the one-sided outward flux.
pub fn jump(field: &ScalarField, mesh: &Mesh, edge: usize) -> Result<f64, Error> {
    field.check_bound(mesh)?;
    let geom = mesh.geometry()?;
    let grads: Vec<[f64; 2]> = (0..mesh.n_elements())
        .map(|t| geom.field_grad(mesh, t, &field.values))
        .collect();
    Ok(edge_jump(mesh, &geom, &grads, edge))
}

fn edge_jump(mesh: &Mesh, geom: &Geometry, grads: &[[f64; 2]], edge: usize) -> f64 {
    let e = &mesh.edges[edge];
    let n = geom.normal[edge];
    let g0 = grads[e.tris.0];
    match e.tris.1 {
        Some(t1) => {
            let g1 = grads[t1];
            (g0[0] - g1[0]) * n[0] + (g0[1] - g1[1]) * n[1]
        }
        None => g0[0] * n[0] + g0[1] * n[1],
    }
}

/// Three-point Gauss-Legendre nodes/weights on [-1, 1]; exact to degree 5,
/// enough for the quartic edge integrands.
const GAUSS3: [(f64, f64); 3] = [
    (-0.7745966692414834, 0.5555555555555556),
    (0.0, 0.8888888888888888),
    (0.7745966692414834, 0.5555555555555556),
];

fn element_terms(
    t: usize,
    mesh: &Mesh,
    geom: &Geometry,
    u: &ScalarField,
    v: &ScalarField,
    jumps_u: &[f64],
    jumps_v: &[f64],
    p: &ModelParams,
) -> IndicatorTerms {
    let tri = &mesh.triangles[t].v;
    let area = geom.area[t];
    let h = geom.h_tau[t];
    let (h2, h4) = (h * h, h * h * h * h);
    let gu = geom.field_grad(mesh, t, &u.values);
    let gv = geom.field_grad(mesh, t, &v.values);
    let g2 = gu[0] * gu[0] + gu[1] * gu[1];
    let gv2 = gv[0] * gv[0] + gv[1] * gv[1];
    // |T_h|^2 with the non-lumped v at the element centroid.
    let v_c = (v.values[tri[0]] + v.values[tri[1]] + v.values[tri[2]]) / 3.0;
    let t2 = ((1.0 - p.kappa) * v_c * v_c + p.kappa) * g2;
    let s = p.beta * t2;
    let d1 = denom_pow(s, p.alpha, 1);
    let one_m_k = 1.0 - p.kappa;

    let mut terms = IndicatorTerms::default();

    // h^4 |(1-k) grad u / D1|^2 * ||grad v||_inf^4, all constant on the element.
    terms.u_volume_grad = h4 * gv2 * gv2 * area * one_m_k * one_m_k * g2 / (d1 * d1);

    // h^2 |2(k-1) v (gv . gu) (1 - a s^a) / D2|^2; v varies linearly, use the
    // midpoint rule (exact for the quadratic integrand).
    let c2 = 2.0 * one_m_k * (gv[0] * gu[0] + gv[1] * gu[1]) * saturation_ratio(s, p.alpha);
    let mut int_v_sq = 0.0;
    for k in 0..3 {
        let vq = 0.5 * (v.values[tri[k]] + v.values[tri[(k + 1) % 3]]);
        int_v_sq += area / 3.0 * vq * vq;
    }
    terms.u_volume_saturation = h2 * c2 * c2 * int_v_sq;

    // h^4 |(1-k)|gu|^2 / D1 + 2 delta|^2 * ||grad v||_inf^2.
    let reaction = one_m_k * g2 / d1 + 2.0 * p.delta;
    terms.v_volume_grad = h4 * area * reaction * reaction * gv2;

    // h^2 |reaction * v - 2 delta|^2, quadratic in v: midpoint rule.
    let mut int_r = 0.0;
    for k in 0..3 {
        let vq = 0.5 * (v.values[tri[k]] + v.values[tri[(k + 1) % 3]]);
        let r = reaction * vq - 2.0 * p.delta;
        int_r += area / 3.0 * r * r;
    }
    terms.v_volume_reaction = h2 * int_r;

    for k in 0..3 {
        let e = mesh.tri_edges[t][k];
        let class = mesh.edges[e].class;
        let he = geom.h_e[e];
        // v-jumps over all edges of the element.
        terms.v_edges += p.rho * p.rho * he * he * jumps_v[e] * jumps_v[e];
        // u-jumps over interior and Neumann edges; crack faces are
        // traction-free and counted as Neumann, Dirichlet edges excluded.
        if class == EdgeClass::Dirichlet {
            continue;
        }
        // ((1-k) v^2 + k)^2 is quartic along the edge: 3-point Gauss.
        let (a, b) = mesh.edges[e].v;
        let (va, vb) = (v.values[a], v.values[b]);
        let mut int_coef = 0.0;
        for (xi, w) in GAUSS3 {
            let vq = 0.5 * ((va + vb) + xi * (vb - va));
            let c = one_m_k * vq * vq + p.kappa;
            int_coef += 0.5 * he * w * c * c;
        }
        terms.u_edges += he * int_coef * jumps_u[e] * jumps_u[e] / (d1 * d1);
    }
    terms
}

fn compute_terms(
    u: &ScalarField,
    v: &ScalarField,
    mesh: &Mesh,
    p: &ModelParams,
) -> Result<Vec<IndicatorTerms>, Error> {
    u.check_bound(mesh)?;
    v.check_bound(mesh)?;
    let geom = mesh.geometry()?;
    let grads_u = par::map_indexed(mesh.n_elements(), |t| geom.field_grad(mesh, t, &u.values));
    let grads_v = par::map_indexed(mesh.n_elements(), |t| geom.field_grad(mesh, t, &v.values));
    let jumps_u = par::map_indexed(mesh.edges.len(), |e| edge_jump(mesh, &geom, &grads_u, e));
    let jumps_v = par::map_indexed(mesh.edges.len(), |e| edge_jump(mesh, &geom, &grads_v, e));
    Ok(par::map_indexed(mesh.n_elements(), |t| {
        element_terms(t, mesh, &geom, u, v, &jumps_u, &jumps_v, p)
    }))
}

/// Squared-term breakdown per element; diagnostic surface behind
/// [`assemble_indicators`].
pub fn indicator_terms(
    u: &ScalarField,
    v: &ScalarField,
    mesh: &Mesh,
    p: &ModelParams,
) -> Result<Vec<IndicatorTerms>, Error> {
    compute_terms(u, v, mesh, p)
}

/// Per-element u-indicator.
pub fn indicator_u(u: &ScalarField, v: &ScalarField, mesh: &Mesh, p: &ModelParams) -> Result<Vec<f64>, Error> {
    Ok(compute_terms(u, v, mesh, p)?.iter().map(|t| t.eta_u_sq().sqrt()).collect())
}

/// Per-element v-indicator.
pub fn indicator_v(u: &ScalarField, v: &ScalarField, mesh: &Mesh, p: &ModelParams) -> Result<Vec<f64>, Error> {
    Ok(compute_terms(u, v, mesh, p)?.iter().map(|t| t.eta_v_sq().sqrt()).collect())
}

/// Fills the full indicator set: per-element values and the global estimator.
pub fn assemble_indicators(
    u: &ScalarField,
    v: &ScalarField,
    mesh: &Mesh,
    p: &ModelParams,
) -> Result<IndicatorSet, Error> {
    let terms = compute_terms(u, v, mesh, p)?;
    let mut eta_u = Vec::with_capacity(terms.len());
    let mut eta_v = Vec::with_capacity(terms.len());
    let mut eta = Vec::with_capacity(terms.len());
    let mut eta_sq = Vec::with_capacity(terms.len());
    for t in &terms {
        let (usq, vsq) = (t.eta_u_sq(), t.eta_v_sq());
        eta_u.push(usq.sqrt());
        eta_v.push(vsq.sqrt());
        eta.push((usq + vsq).sqrt());
        eta_sq.push(usq + vsq);
    }
    let global = par::pairwise_sum(&eta_sq).sqrt();
    Ok(IndicatorSet { mesh_generation: mesh.generation, eta_u, eta_v, eta, global })
}
