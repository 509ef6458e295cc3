//! Simplicial surfaces and gerbe 2-holonomy: finite 2-dimensional simplicial
//! sets with machine-checked simplicial identities and regularity, canonical
//! degeneracy decompositions, orientation signs for vertex/edge/face
//! incidences, the 2-holonomy of a gerbe along a closed oriented surface, and
//! the curvature 1-form entering d(hol) = i·It(H)·hol.

use crate::error::{HolError, Result};
use crate::gerbe::GerbeData;
use crate::geometry::{
    simplex_quadrature, ChartPoint, QuadratureSpec, RVec, ScalarForm, TangentVec,
};
use crate::mapping::{MsTangent, SurfaceMapDisc, SurfaceTangent};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A finite 2-dimensional simplicial set given by its nondegenerate
/// generators. Edges are oriented by their vertex tables: d₁(e) is the start
/// vertex and d₀(e) the end. Faces list their three boundary edges
/// [d₀(f), d₁(f), d₂(f)]; `face_orientation[f]` is +1 when the face's
/// vertex-order parametrization agrees with the surface's global orientation
/// and −1 otherwise. Degenerate simplices are represented on demand through
/// canonical degeneracy words (see [`Simplex`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimplicialSurface {
    pub vertices: usize,
    /// per edge: [d₀ (end vertex), d₁ (start vertex)]
    pub edges: Vec<[usize; 2]>,
    /// per face: edge ids [d₀, d₁, d₂]
    pub faces: Vec<[usize; 3]>,
    pub face_orientation: Vec<i8>,
}

/// A simplex in canonical form: `x = s_{w[0]} ∘ … ∘ s_{w[r−1]} (base)` with a
/// strictly decreasing degeneracy word, so `x` is nondegenerate iff the word
/// is empty. `base_dim` ∈ {0, 1, 2} selects the generator table.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Simplex {
    pub base_dim: usize,
    pub base: usize,
    pub word: Vec<usize>,
}

impl Simplex {
    pub fn vertex(v: usize) -> Self {
        Simplex {
            base_dim: 0,
            base: v,
            word: vec![],
        }
    }

    pub fn edge(e: usize) -> Self {
        Simplex {
            base_dim: 1,
            base: e,
            word: vec![],
        }
    }

    pub fn face(f: usize) -> Self {
        Simplex {
            base_dim: 2,
            base: f,
            word: vec![],
        }
    }

    pub fn dim(&self) -> usize {
        self.base_dim + self.word.len()
    }

    pub fn is_degenerate(&self) -> bool {
        !self.word.is_empty()
    }
}

impl SimplicialSurface {
    /// Apply the degeneracy s_i, keeping the word canonical (strictly
    /// decreasing) via s_i ∘ s_j = s_{j+1} ∘ s_i for i ≤ j.
    pub fn apply_s(&self, i: usize, x: &Simplex) -> Result<Simplex> {
        if i > x.dim() {
            return Err(HolError::Domain(format!(
                "s_{i} undefined on a {}-simplex",
                x.dim()
            )));
        }
        let mut word = Vec::with_capacity(x.word.len() + 1);
        let mut insert = i;
        let mut rest = x.word.iter().copied().peekable();
        while let Some(&j) = rest.peek() {
            if insert > j {
                break;
            }
            // s_insert ∘ s_j = s_{j+1} ∘ s_insert
            word.push(j + 1);
            rest.next();
        }
        word.push(insert);
        word.extend(rest);
        // the suffix stayed decreasing and every pushed head exceeds it
        let _ = &mut insert;
        Ok(Simplex {
            base_dim: x.base_dim,
            base: x.base,
            word,
        })
    }

    /// Apply the face map d_i, pushing it through the degeneracy word with
    /// the simplicial identities and ending in the generator face tables.
    pub fn apply_d(&self, i: usize, x: &Simplex) -> Result<Simplex> {
        if i > x.dim() {
            return Err(HolError::Domain(format!(
                "d_{i} undefined on a {}-simplex",
                x.dim()
            )));
        }
        if let Some((&j, rest)) = x.word.split_first() {
            let inner = Simplex {
                base_dim: x.base_dim,
                base: x.base,
                word: rest.to_vec(),
            };
            return if i == j || i == j + 1 {
                Ok(inner)
            } else if i < j {
                self.apply_s(j - 1, &self.apply_d(i, &inner)?)
            } else {
                self.apply_s(j, &self.apply_d(i - 1, &inner)?)
            };
        }
        match x.base_dim {
            0 => Err(HolError::Domain("a vertex has no faces".into())),
            1 => {
                let e = self
                    .edges
                    .get(x.base)
                    .ok_or_else(|| HolError::UnknownId(format!("edge {}", x.base)))?;
                Ok(Simplex::vertex(e[i]))
            }
            2 => {
                let f = self
                    .faces
                    .get(x.base)
                    .ok_or_else(|| HolError::UnknownId(format!("face {}", x.base)))?;
                Ok(Simplex::edge(f[i]))
            }
            _ => unreachable!(),
        }
    }

    /// The unique nondegenerate simplex supporting x, together with the
    /// canonical degeneracy word expressing x over it. In the canonical
    /// representation this is simply the stored base and word.
    pub fn nondegenerate_support(&self, x: &Simplex) -> (Simplex, Vec<usize>) {
        (
            Simplex {
                base_dim: x.base_dim,
                base: x.base,
                word: vec![],
            },
            x.word.clone(),
        )
    }

    /// Vertex ids of a face in simplex order (v₀, v₁, v₂), derived from the
    /// edge tables: v₀ = d₁d₂f, v₁ = d₀d₂f, v₂ = d₀d₀f.
    pub fn face_vertices(&self, f: usize) -> [usize; 3] {
        let [e0, _e1, e2] = self.faces[f];
        [self.edges[e2][1], self.edges[e2][0], self.edges[e0][0]]
    }

    /// ρ(v, e): +1 when v is the start vertex of e, −1 when it is the end.
    pub fn rho_ve(&self, v: usize, e: usize) -> Result<i8> {
        let [end, start] = self.edges[e];
        if start == end {
            return Err(HolError::Invalid(format!(
                "edge {e} is a loop; its endpoint sign is ambiguous"
            )));
        }
        if v == start {
            Ok(1)
        } else if v == end {
            Ok(-1)
        } else {
            Err(HolError::Invalid(format!("vertex {v} not on edge {e}")))
        }
    }

    /// ρ(e, f) for e = d_i(f): +1 when the edge's orientation (start vertex
    /// d₁(e) to end d₀(e)) agrees with the boundary orientation induced by
    /// the surface via the outward-normal-first (Stokes) convention. For a
    /// positively parametrized face that boundary runs through the vertices
    /// in cyclic order v₀→v₁→v₂→v₀, giving (−1)^i, corrected by the face's
    /// orientation relative to the surface.
    pub fn rho_ef(&self, i: usize, f: usize) -> i8 {
        let base = if i % 2 == 0 { 1 } else { -1 };
        base * self.face_orientation[f]
    }

    /// All simplices of the given dimension (generators plus canonical
    /// degeneracies).
    pub fn simplices(&self, dim: usize) -> Vec<Simplex> {
        let counts = [self.vertices, self.edges.len(), self.faces.len()];
        let mut out = Vec::new();
        for base_dim in 0..=2.min(dim) {
            let r = dim - base_dim;
            for word in decreasing_words(r, dim) {
                for base in 0..counts[base_dim] {
                    out.push(Simplex {
                        base_dim,
                        base,
                        word: word.clone(),
                    });
                }
            }
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HolError::Invalid(format!("bad surface JSON: {e}")))
    }
}

/// Strictly decreasing words of length r with entries < max_dim (valid
/// canonical degeneracy words into dimension `max_dim`).
fn decreasing_words(r: usize, max_dim: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![vec![]];
    }
    if max_dim == 0 {
        return vec![];
    }
    let mut out = Vec::new();
    // choose subsets of {0, …, max_dim−1} of size r, listed decreasing
    fn rec(start: usize, need: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if need == 0 {
            out.push(cur.clone());
            return;
        }
        let mut i = start as isize;
        while i >= (need as isize - 1) {
            cur.push(i as usize);
            rec((i - 1).max(0) as usize, need - 1, cur, out);
            cur.pop();
            i -= 1;
        }
    }
    rec(max_dim - 1, r, &mut Vec::new(), &mut out);
    out
}

/// Outcome of the structural checks on a simplicial surface: simplicial
/// identities on all stored simplices up to dimension 4, index-range sanity,
/// and the two regularity conditions (each edge borders exactly two faces;
/// each vertex-in-face incidence passes through exactly two edges).
#[derive(Debug, Clone, Serialize)]
pub struct SimplicialReport {
    pub violations: Vec<String>,
    pub pass: bool,
}

pub fn validate_simplicial(s: &SimplicialSurface) -> SimplicialReport {
    let mut violations = Vec::new();
    for (e, pair) in s.edges.iter().enumerate() {
        for &v in pair {
            if v >= s.vertices {
                violations.push(format!("edge {e} references missing vertex {v}"));
            }
        }
    }
    for (f, triple) in s.faces.iter().enumerate() {
        for &e in triple {
            if e >= s.edges.len() {
                violations.push(format!("face {f} references missing edge {e}"));
            }
        }
    }
    if s.face_orientation.len() != s.faces.len()
        || s.face_orientation.iter().any(|&o| o != 1 && o != -1)
    {
        violations.push("face orientations must be ±1, one per face".into());
    }
    if !violations.is_empty() {
        return SimplicialReport {
            violations,
            pass: false,
        };
    }

    // simplicial identities on all stored simplices up to dimension 4
    for dim in 0..=4usize {
        for x in s.simplices(dim) {
            let k = x.dim();
            if k >= 2 {
                for j in 0..=k {
                    for i in 0..j {
                        let lhs = s.apply_d(i, &s.apply_d(j, &x).unwrap()).unwrap();
                        let rhs = s.apply_d(j - 1, &s.apply_d(i, &x).unwrap()).unwrap();
                        if lhs != rhs {
                            violations.push(format!("d_{i} d_{j} != d_{} d_{i} on {x:?}", j - 1));
                        }
                    }
                }
            }
            for j in 0..=k {
                for i in 0..=j {
                    let lhs = s.apply_s(i, &s.apply_s(j, &x).unwrap()).unwrap();
                    let rhs = s.apply_s(j + 1, &s.apply_s(i, &x).unwrap()).unwrap();
                    if lhs != rhs {
                        violations.push(format!("s_{i} s_{j} != s_{} s_{i} on {x:?}", j + 1));
                    }
                }
            }
            for j in 0..=k {
                for i in 0..=(k + 1) {
                    let sx = s.apply_s(j, &x).unwrap();
                    let lhs = s.apply_d(i, &sx).unwrap();
                    let rhs = if i == j || i == j + 1 {
                        x.clone()
                    } else if i < j {
                        s.apply_s(j - 1, &s.apply_d(i, &x).unwrap()).unwrap()
                    } else {
                        s.apply_s(j, &s.apply_d(i - 1, &x).unwrap()).unwrap()
                    };
                    if lhs != rhs {
                        violations.push(format!("d_{i} s_{j} relation fails on {x:?}"));
                    }
                }
            }
        }
    }

    // regularity: each edge in exactly two distinct faces
    for e in 0..s.edges.len() {
        let mut adj: Vec<usize> = s
            .faces
            .iter()
            .enumerate()
            .filter(|(_, t)| t.contains(&e))
            .map(|(f, _)| f)
            .collect();
        adj.dedup();
        if adj.len() != 2 {
            violations.push(format!("edge {e} lies in {} faces, expected 2", adj.len()));
        }
    }
    // regularity: for v ⊂ f exactly two edges of f contain v
    for (f, triple) in s.faces.iter().enumerate() {
        let mut vs: Vec<usize> = triple
            .iter()
            .flat_map(|&e| s.edges[e].iter().copied())
            .collect();
        vs.sort_unstable();
        vs.dedup();
        for v in vs {
            let count = triple
                .iter()
                .filter(|&&e| s.edges[e].contains(&v))
                .count();
            if count != 2 {
                violations.push(format!(
                    "vertex {v} in face {f} lies on {count} of its edges, expected 2"
                ));
            }
        }
    }

    SimplicialReport {
        pass: violations.is_empty(),
        violations,
    }
}

/// One patch id per nondegenerate vertex, edge, and face.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceChartAssignment {
    pub vertex: Vec<usize>,
    pub edge: Vec<usize>,
    pub face: Vec<usize>,
}

/// Face of the map at a boundary edge: the path r ↦ σ|_{d_i(f)}(r) running
/// from the edge's start vertex to its end vertex (the face's barycentric
/// corners sit at the vertices in simplex order).
fn edge_path(sigma: &SurfaceMapDisc, f: usize, i: usize, r: f64) -> (ChartPoint, RVec) {
    let (s1, s2) = match i {
        0 => (1.0 - r, r),
        1 => (0.0, r),
        _ => (r, 0.0),
    };
    let p = sigma.point(f, s1, s2);
    let (d1, d2) = sigma.partials(f, s1, s2);
    let vel = match i {
        0 => d2 - d1,
        1 => d2,
        _ => d1,
    };
    (p, vel)
}

/// Lowest-id face adjacent to edge e, with the boundary index i so that
/// d_i(face) = e.
fn host_face(s: &SimplicialSurface, e: usize) -> Result<(usize, usize)> {
    for (f, triple) in s.faces.iter().enumerate() {
        if let Some(i) = triple.iter().position(|&x| x == e) {
            return Ok((f, i));
        }
    }
    Err(HolError::UnknownId(format!("edge {e} lies in no face")))
}

/// The image point of a nondegenerate vertex, read off the lowest-id face
/// containing it (corner in simplex order).
fn vertex_point(s: &SimplicialSurface, sigma: &SurfaceMapDisc, v: usize) -> Result<ChartPoint> {
    for f in 0..s.faces.len() {
        let vs = s.face_vertices(f);
        if let Some(c) = vs.iter().position(|&x| x == v) {
            let (s1, s2) = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)][c];
            return Ok(sigma.point(f, s1, s2));
        }
    }
    Err(HolError::UnknownId(format!("vertex {v} lies in no face")))
}

/// Check σ|_v ∈ U_{i_v}, σ|_e ⊂ U_{i_e}, σ|_f ⊂ U_{i_f} by sampling.
pub fn check_assignment(
    gerbe: &GerbeData,
    s: &SimplicialSurface,
    sigma: &SurfaceMapDisc,
    assign: &SurfaceChartAssignment,
) -> Result<()> {
    if assign.vertex.len() != s.vertices
        || assign.edge.len() != s.edges.len()
        || assign.face.len() != s.faces.len()
    {
        return Err(HolError::Invalid(
            "assignment length does not match the complex".into(),
        ));
    }
    let inside = |id: usize, p: &ChartPoint| -> Result<bool> {
        let idx = gerbe.patch_index(id)?;
        Ok((gerbe.patches[idx].contains)(p))
    };
    for v in 0..s.vertices {
        if !inside(assign.vertex[v], &vertex_point(s, sigma, v)?)? {
            return Err(HolError::Membership(format!(
                "vertex {v} image leaves its patch"
            )));
        }
    }
    for e in 0..s.edges.len() {
        let (f, i) = host_face(s, e)?;
        for n in 0..=16 {
            let (p, _) = edge_path(sigma, f, i, n as f64 / 16.0);
            if !inside(assign.edge[e], &p)? {
                return Err(HolError::Membership(format!(
                    "edge {e} image leaves its patch"
                )));
            }
        }
    }
    for f in 0..s.faces.len() {
        let n = 8;
        for a in 0..=n {
            for b in 0..=(n - a) {
                let p = sigma.point(f, a as f64 / n as f64, b as f64 / n as f64);
                if !inside(assign.face[f], &p)? {
                    return Err(HolError::Membership(format!(
                        "face {f} image leaves its patch"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn face_integral(
    form_eval: &dyn Fn(&ChartPoint, &RVec, &RVec) -> Complex64,
    sigma: &SurfaceMapDisc,
    f: usize,
    quad: &QuadratureSpec,
) -> Complex64 {
    simplex_quadrature(
        &|t: &[f64]| {
            // map the ordered simplex {0 ≤ t₁ ≤ t₂ ≤ 1} to barycentric
            // (s₁, s₂) = (t₁, t₂ − t₁) with unit Jacobian
            let (s1, s2) = (t[0], t[1] - t[0]);
            let p = sigma.point(f, s1, s2);
            let (d1, d2) = sigma.partials(f, s1, s2);
            form_eval(&p, &d1, &d2)
        },
        2,
        quad,
    )
}

/// 2-holonomy of a gerbe along a closed oriented surface:
/// hol = exp(Σ_f i·∫_f σ*B_{i_f} − Σ_{e⊂f} i·ρ(e,f)·∫_e σ*A_{i_e,i_f})
///       · ∏_{v⊂e⊂f} g_{i_v,i_e,i_f}^{ρ(v,e,f)}(σ(v)),
/// with face integrals in the surface orientation and edge integrals in each
/// edge's own orientation (restricted through its lowest-id adjacent face).
pub fn surface_hol(
    gerbe: &GerbeData,
    s: &SimplicialSurface,
    sigma: &SurfaceMapDisc,
    assign: &SurfaceChartAssignment,
    quad: &QuadratureSpec,
) -> Result<Complex64> {
    check_assignment(gerbe, s, sigma, assign)?;
    let mut exponent = Complex64::new(0.0, 0.0);
    let i_unit = Complex64::new(0.0, 1.0);

    for f in 0..s.faces.len() {
        let bi = gerbe.patch_index(assign.face[f])?;
        let b_form = &gerbe.b[bi];
        let val = face_integral(
            &|p, d1, d2| {
                let v1 = TangentVec {
                    base: p.clone(),
                    components: d1.clone(),
                };
                let v2 = TangentVec {
                    base: p.clone(),
                    components: d2.clone(),
                };
                b_form.eval(p, &[v1, v2]).expect("B on face")[(0, 0)]
            },
            sigma,
            f,
            quad,
        );
        exponent += i_unit * val * s.face_orientation[f] as f64;
    }

    for f in 0..s.faces.len() {
        for i in 0..3 {
            let e = s.faces[f][i];
            let rho = s.rho_ef(i, f) as f64;
            let (hf, hi) = host_face(s, e)?;
            let (ie, if_) = (assign.edge[e], assign.face[f]);
            let val = quad.integrate(0.0, 1.0, |r| {
                let (p, vel) = edge_path(sigma, hf, hi, r);
                let tv = TangentVec {
                    base: p.clone(),
                    components: vel,
                };
                gerbe.eval_a(ie, if_, &p, &tv).expect("A on edge")
            });
            exponent -= i_unit * rho * val;
        }
    }

    let mut hol = exponent.exp();
    for f in 0..s.faces.len() {
        for i in 0..3 {
            let e = s.faces[f][i];
            let rho_ef = s.rho_ef(i, f);
            for &v in &[s.edges[e][0], s.edges[e][1]] {
                let rho = s.rho_ve(v, e)? * rho_ef;
                let p = vertex_point(s, sigma, v)?;
                let g = gerbe.eval_g(assign.vertex[v], assign.edge[e], assign.face[f], &p)?;
                hol *= if rho > 0 { g } else { g.inv() };
            }
        }
    }
    Ok(hol)
}

/// The curvature 1-form on the surface mapping space:
/// It(H)(σ)(X) = Σ_f ∫_f H(∂₁σ, ∂₂σ, X), faces weighted by the surface
/// orientation. It satisfies d(hol) = i·It(H)·hol.
pub fn it_h_1form(
    h: &ScalarForm,
    s: &SimplicialSurface,
    sigma: &SurfaceMapDisc,
    x: &MsTangent,
    quad: &QuadratureSpec,
) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for f in 0..s.faces.len() {
        let val = simplex_quadrature(
            &|t: &[f64]| {
                let (s1, s2) = (t[0], t[1] - t[0]);
                let p = sigma.point(f, s1, s2);
                let (d1, d2) = sigma.partials(f, s1, s2);
                let vs = [
                    TangentVec {
                        base: p.clone(),
                        components: d1,
                    },
                    TangentVec {
                        base: p.clone(),
                        components: d2,
                    },
                    TangentVec {
                        base: p.clone(),
                        components: x.surface_at(f, s1, s2),
                    },
                ];
                h.eval(&p, &vs).expect("H on face")[(0, 0)]
            },
            2,
            quad,
        );
        acc += val * s.face_orientation[f] as f64;
    }
    Ok(acc)
}

/// The 3×3-grid triangulation of the 2-torus: 9 vertices, 27 edges
/// (horizontal, vertical, diagonal), 18 faces. Vertex (a, b) has id 3a + b;
/// each unit cell is split along the (a,b)→(a+1,b+1) diagonal into a lower
/// triangle (positively oriented) and an upper one (negative).
pub fn torus_9v() -> SimplicialSurface {
    let v = |a: usize, b: usize| (a % 3) * 3 + (b % 3);
    let h_id = |a: usize, b: usize| (a % 3) * 3 + (b % 3);
    let vt_id = |a: usize, b: usize| 9 + (a % 3) * 3 + (b % 3);
    let dg_id = |a: usize, b: usize| 18 + (a % 3) * 3 + (b % 3);
    let mut edges = vec![[0usize; 2]; 27];
    for a in 0..3 {
        for b in 0..3 {
            edges[h_id(a, b)] = [v(a + 1, b), v(a, b)];
            edges[vt_id(a, b)] = [v(a, b + 1), v(a, b)];
            edges[dg_id(a, b)] = [v(a + 1, b + 1), v(a, b)];
        }
    }
    let mut faces = Vec::with_capacity(18);
    let mut face_orientation = Vec::with_capacity(18);
    for a in 0..3 {
        for b in 0..3 {
            // lower: vertices (a,b), (a+1,b), (a+1,b+1)
            faces.push([vt_id(a + 1, b), dg_id(a, b), h_id(a, b)]);
            face_orientation.push(1);
            // upper: vertices (a,b), (a,b+1), (a+1,b+1)
            faces.push([h_id(a, b + 1), dg_id(a, b), vt_id(a, b)]);
            face_orientation.push(-1);
        }
    }
    SimplicialSurface {
        vertices: 9,
        edges,
        faces,
        face_orientation,
    }
}

/// The classical one-vertex, three-edge, two-face presentation of the torus.
/// Its simplicial identities hold, but it is not regular: each vertex-face
/// incidence passes through three edges instead of two.
pub fn torus_minimal() -> SimplicialSurface {
    SimplicialSurface {
        vertices: 1,
        edges: vec![[0, 0]; 3],
        faces: vec![[1, 2, 0], [0, 2, 1]],
        face_orientation: vec![1, -1],
    }
}

pub fn surface_catalog(id: &str) -> Result<SimplicialSurface> {
    match id {
        "torus_9v" => Ok(torus_9v()),
        "torus_minimal" => Ok(torus_minimal()),
        _ => Err(HolError::UnknownId(id.to_string())),
    }
}

/// Barycentric corner positions of face `f` of [`torus_9v`] in the unit
/// square (with lifts past 1 on wrapping cells), scaled by 1/3.
pub fn torus_9v_corners(f: usize) -> [(f64, f64); 3] {
    let cell = f / 2;
    let (a, b) = ((cell / 3) as f64, (cell % 3) as f64);
    let pts = if f % 2 == 0 {
        [(a, b), (a + 1.0, b), (a + 1.0, b + 1.0)]
    } else {
        [(a, b), (a, b + 1.0), (a + 1.0, b + 1.0)]
    };
    pts.map(|(x, y)| (x / 3.0, y / 3.0))
}

/// A surface map over [`torus_9v`] induced by a global map (u₁, u₂) ↦ coords
/// on the unit square; shared edges automatically agree across faces.
pub fn torus_9v_map<F>(
    manifold: Arc<crate::geometry::Manifold>,
    chart: usize,
    global: F,
) -> SurfaceMapDisc
where
    F: Fn(f64, f64) -> RVec + Send + Sync + Clone + 'static,
{
    let faces = (0..18)
        .map(|f| {
            let corners = torus_9v_corners(f);
            let g = global.clone();
            let map: crate::mapping::FaceMapFn = Arc::new(move |s1, s2| {
                let u1 = corners[0].0
                    + s1 * (corners[1].0 - corners[0].0)
                    + s2 * (corners[2].0 - corners[0].0);
                let u2 = corners[0].1
                    + s1 * (corners[1].1 - corners[0].1)
                    + s2 * (corners[2].1 - corners[0].1);
                g(u1, u2)
            });
            map
        })
        .collect();
    SurfaceMapDisc::new(manifold, chart, faces, 8)
}

/// A displacement field over [`torus_9v`] induced by a global field on the
/// unit square, matching [`torus_9v_map`]'s parametrization so that deformed
/// maps remain maps of the realization.
pub fn torus_9v_field<F>(global: F) -> SurfaceTangent
where
    F: Fn(f64, f64) -> RVec + Send + Sync + Clone + 'static,
{
    let fields = (0..18)
        .map(|f| {
            let corners = torus_9v_corners(f);
            let g = global.clone();
            let map: crate::mapping::FaceMapFn = Arc::new(move |s1, s2| {
                let u1 = corners[0].0
                    + s1 * (corners[1].0 - corners[0].0)
                    + s2 * (corners[2].0 - corners[0].0);
                let u2 = corners[0].1
                    + s1 * (corners[1].1 - corners[0].1)
                    + s2 * (corners[2].1 - corners[0].1);
                g(u1, u2)
            });
            map
        })
        .collect();
    SurfaceTangent { fields }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gerbe::{gerbe_catalog, three_curvature};
    use crate::geometry::Manifold;
    use crate::mapping::{fd_exterior_derivative_ms, MapDisc, MsForm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn torus_9v_is_regular() {
        let report = validate_simplicial(&torus_9v());
        assert!(report.pass, "{:?}", report.violations);
    }

    #[test]
    fn minimal_torus_fails_regularity() {
        let report = validate_simplicial(&torus_minimal());
        assert!(!report.pass);
        assert!(report
            .violations
            .iter()
            .all(|v| v.contains("expected 2")), "{:?}", report.violations);
    }

    #[test]
    fn json_roundtrip() {
        let s = torus_9v();
        let text = serde_json::to_string(&s).unwrap();
        let back = SimplicialSurface::from_json(&text).unwrap();
        assert!(validate_simplicial(&back).pass);
        assert_eq!(back.faces, s.faces);
    }

    #[test]
    fn support_of_degenerate_words() {
        let s = torus_9v();
        // nondegenerate simplices support themselves
        let f = Simplex::face(4);
        assert_eq!(s.nondegenerate_support(&f), (f.clone(), vec![]));
        // s₀(v) supports on v with word [0]
        let sv = s.apply_s(0, &Simplex::vertex(2)).unwrap();
        assert_eq!(s.nondegenerate_support(&sv), (Simplex::vertex(2), vec![0]));
        // arbitrary 3-level degeneracy words agree with brute force over all
        // canonical presentations of the same dimension
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let base_dim = rng.gen_range(0..3usize);
            let base = match base_dim {
                0 => rng.gen_range(0..9),
                1 => rng.gen_range(0..27),
                _ => rng.gen_range(0..18),
            };
            let mut x = Simplex {
                base_dim,
                base,
                word: vec![],
            };
            for _ in 0..3 {
                let i = rng.gen_range(0..=x.dim());
                x = s.apply_s(i, &x).unwrap();
            }
            let (support, word) = s.nondegenerate_support(&x);
            assert!(!support.is_degenerate());
            assert_eq!(word.len(), 3);
            // brute force: the only canonical (base, word) reproducing x
            let mut found = Vec::new();
            for cand in s.simplices(x.dim()) {
                if cand == x {
                    found.push(cand);
                }
            }
            assert_eq!(found.len(), 1);
            assert_eq!(found[0].base, support.base);
            assert_eq!(found[0].base_dim, support.base_dim);
        }
    }

    #[test]
    fn rho_sign_table_single_triangle() {
        // Exhaustive geometric enumeration on one triangle: compute the
        // Stokes-induced boundary direction (outward normal first) from the
        // planar corner positions and compare each edge's orientation with
        // it; then check ρ(v,e,f) = ρ(v,e)·ρ(e,f) on all six incidences.
        let s = torus_9v();
        for f in [0usize, 1] {
            let corners = torus_9v_corners(f);
            let verts = s.face_vertices(f);
            for i in 0..3 {
                let e = s.faces[f][i];
                // planar positions of the edge's start and end within f
                let pos = |v: usize| {
                    let c = verts.iter().position(|&x| x == v).unwrap();
                    corners[c]
                };
                let (sx, sy) = pos(s.edges[e][1]);
                let (ex, ey) = pos(s.edges[e][0]);
                let edge_dir = (ex - sx, ey - sy);
                // interior point and outward normal at the edge midpoint
                let mid = ((sx + ex) / 2.0, (sy + ey) / 2.0);
                let centroid = (
                    (corners[0].0 + corners[1].0 + corners[2].0) / 3.0,
                    (corners[0].1 + corners[1].1 + corners[2].1) / 3.0,
                );
                let outward = (mid.0 - centroid.0, mid.1 - centroid.1);
                // induced direction t with det(n, t) > 0 in the plane's
                // standard orientation (the surface orientation)
                let induced = (-outward.1, outward.0);
                let geo = (induced.0 * edge_dir.0 + induced.1 * edge_dir.1).signum() as i8;
                assert_eq!(geo, s.rho_ef(i, f), "face {f} boundary {i}");
                for &v in &s.edges[e] {
                    assert_eq!(
                        s.rho_ve(v, e).unwrap() * s.rho_ef(i, f),
                        s.rho_ve(v, e).unwrap() * geo
                    );
                }
            }
        }
    }

    fn flux_setup(k: i64) -> (Arc<GerbeData>, ScalarForm) {
        let g = gerbe_catalog(&format!("t3_flux({k})")).unwrap();
        let mut samples = Vec::new();
        for &x in &[0.05, 0.45, 0.55, 0.95] {
            for &z in &[0.05, 0.45, 0.55, 0.95] {
                samples.push(ChartPoint::new(0, &[x, 0.3, z]));
            }
        }
        let h = three_curvature(&g, &samples, 1e-6).unwrap();
        (g, h.h)
    }

    /// z-slice torus in T³ at height z₀, x shifted so every cell fits a patch
    fn z_slice_map(z0: f64) -> SurfaceMapDisc {
        let m = Manifold::torus(3);
        torus_9v_map(m, 0, move |u1, u2| {
            RVec::from_row_slice(&[u1 + 0.08, u2, z0])
        })
    }

    /// patch ids per cell column for the z-slice at branch α
    fn z_slice_assignment(s: &SimplicialSurface, alpha: usize, beta_of_col: [usize; 3]) -> SurfaceChartAssignment {
        let pid = |beta: usize| 2 * alpha + beta;
        // vertex (a,b): x = a/3 + 0.08 — always in both X intervals except
        // x = 0.413 and 0.747 which are also in both; use column choice
        let vertex = (0..9)
            .map(|v| pid(beta_of_col[v / 3]))
            .collect::<Vec<_>>();
        let mut edge = vec![0usize; 27];
        for a in 0..3 {
            for b in 0..3 {
                edge[a * 3 + b] = pid(beta_of_col[a]); // horizontal spans col a
                edge[9 + a * 3 + b] = pid(beta_of_col[a]); // vertical at col a
                edge[18 + a * 3 + b] = pid(beta_of_col[a]); // diagonal spans col a
            }
        }
        let mut face = vec![0usize; 18];
        for cell in 0..9 {
            let a = cell / 3;
            face[2 * cell] = pid(beta_of_col[a]);
            face[2 * cell + 1] = pid(beta_of_col[a]);
        }
        let _ = s;
        SurfaceChartAssignment { vertex, edge, face }
    }

    // valid column patches for x-cells (0.08,0.413), (0.413,0.747), (0.747,1.08):
    // col 0 only X₀, cols 1 and 2 only X₁
    const COLS: [usize; 3] = [0, 1, 1];

    #[test]
    fn trivial_gerbe_surface_holonomy_is_exp_b_integral() {
        let g = gerbe_catalog("trivial(0.7)").unwrap();
        let s = torus_9v();
        let sigma = z_slice_map(0.3); // B = 0.7·sin(2πz) dx∧dy pulled back
        let assign = SurfaceChartAssignment {
            vertex: vec![0; 9],
            edge: vec![0; 27],
            face: vec![0; 18],
        };
        let quad = QuadratureSpec::default();
        let hol = surface_hol(&g, &s, &sigma, &assign, &quad).unwrap();
        // direct: ∫_Σ σ*B = 0.7 sin(2πz₀) · area = 0.7 sin(0.6π)
        let expect = (Complex64::new(0.0, 0.7 * (0.6 * PI).sin())).exp();
        assert!((hol - expect).norm() < 1e-9, "{hol} vs {expect}");
        assert!((hol.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flux_gerbe_z_slice_holonomy() {
        let quad = QuadratureSpec::default();
        let s = torus_9v();
        for (k, z0, alpha) in [(1i64, 0.2, 0usize), (1, 0.55, 0), (2, 0.2, 0), (1, 0.55, 1)] {
            let (g, _h) = flux_setup(k);
            let sigma = z_slice_map(z0);
            let assign = z_slice_assignment(&s, alpha, COLS);
            let hol = surface_hol(&g, &s, &sigma, &assign, &quad).unwrap();
            let expect = Complex64::from_polar(1.0, 2.0 * PI * k as f64 * z0);
            assert!(
                (hol - expect).norm() < 1e-6,
                "k={k} z0={z0} α={alpha}: {hol} vs {expect}"
            );
            assert!((hol.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn holonomy_is_assignment_independent() {
        // at z₀ = 0.55 both z-branches are valid; mixed vertex/edge choices
        // at the column seams are too (x = 0.413 and 0.747 lie in both X's)
        let quad = QuadratureSpec::default();
        let s = torus_9v();
        let (g, _) = flux_setup(1);
        let sigma = z_slice_map(0.55);
        let a1 = z_slice_assignment(&s, 0, COLS);
        let a2 = z_slice_assignment(&s, 1, COLS);
        let h1 = surface_hol(&g, &s, &sigma, &a1, &quad).unwrap();
        let h2 = surface_hol(&g, &s, &sigma, &a2, &quad).unwrap();
        assert!((h1 - h2).norm() < 1e-6, "{h1} vs {h2}");
        // seam choices: the vertices v(1,b) (x = 0.413) and the vertical
        // edges through them sit in X₀ ∩ X₁, so their β may flip from the
        // column default 1 to 0
        let mut a3 = z_slice_assignment(&s, 0, COLS);
        for b in 0..3 {
            a3.vertex[3 + b] = 0;
            a3.edge[9 + 3 + b] = 0;
        }
        let h3 = surface_hol(&g, &s, &sigma, &a3, &quad).unwrap();
        assert!((h1 - h3).norm() < 1e-6, "{h1} vs {h3}");
    }

    #[test]
    fn d_hol_is_i_it_h_hol() {
        let quad = QuadratureSpec::default();
        let s = Arc::new(torus_9v());
        let (g, h) = flux_setup(1);
        let sigma = z_slice_map(0.2);
        let assign = z_slice_assignment(&s, 0, COLS);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut coef = [[0.0; 5]; 3];
        for row in coef.iter_mut() {
            for c in row.iter_mut() {
                *c = rng.gen_range(-1.0..1.0);
            }
        }
        let x_field = torus_9v_field(move |u1, u2| {
            let w = (2.0 * PI * u1).sin() * coef[0][0]
                + (2.0 * PI * u2).cos() * coef[0][1]
                + coef[0][2];
            RVec::from_row_slice(&[
                0.05 * w,
                0.1 * ((2.0 * PI * (u1 + u2)).cos() * coef[1][0] + coef[1][1]),
                0.1 * ((2.0 * PI * u1).cos() * coef[2][0] + coef[2][1] * (2.0 * PI * u2).sin()),
            ])
        });
        let x = MsTangent::Surface(x_field);
        let (gc, sc, ac, qc) = (g.clone(), s.clone(), assign.clone(), quad);
        let hol_form = MsForm::new(0, 1, move |m: &MapDisc, _| {
            let val = surface_hol(&gc, &sc, m.as_surface()?, &ac, &qc)?;
            Ok(nalgebra::DMatrix::from_element(1, 1, val))
        });
        let md = MapDisc::Surface(sigma.clone());
        let dhol = fd_exterior_derivative_ms(&hol_form, &md, std::slice::from_ref(&x), 1e-3, 2)
            .unwrap()[(0, 0)];
        let hol = surface_hol(&g, &s, &sigma, &assign, &quad).unwrap();
        let ith = it_h_1form(&h, &s, &sigma, &x, &quad).unwrap();
        let rhs = Complex64::new(0.0, 1.0) * ith * hol;
        assert!((dhol - rhs).norm() < 1e-4, "dhol {dhol} vs {rhs}");
    }

    #[test]
    fn flat_gerbe_has_closed_holonomy() {
        // trivial gerbe with constant B: H = dB = 0, so FD d(hol) ≈ 0
        let m = Manifold::torus(3);
        let b = ScalarForm::from_coefficients(m.clone(), 0, 2, 1, |_p, idx| {
            let v = if idx == [0, 1] { 0.8 } else { 0.0 };
            nalgebra::DMatrix::from_element(1, 1, Complex64::new(v, 0.0))
        });
        let g = GerbeData::new(
            m.clone(),
            vec![crate::bundle::Patch {
                id: 0,
                contains: Arc::new(|_| true),
            }],
            Default::default(),
            Default::default(),
            vec![b],
            None,
        )
        .unwrap();
        let s = Arc::new(torus_9v());
        let sigma = z_slice_map(0.4);
        let assign = SurfaceChartAssignment {
            vertex: vec![0; 9],
            edge: vec![0; 27],
            face: vec![0; 18],
        };
        let quad = QuadratureSpec::default();
        let x = MsTangent::Surface(torus_9v_field(|u1, u2| {
            RVec::from_row_slice(&[
                0.1 * (2.0 * PI * u1).sin(),
                0.1 * (2.0 * PI * u2).cos(),
                0.1 * (2.0 * PI * (u1 + u2)).sin(),
            ])
        }));
        let g2 = Arc::new(g);
        let (gc, sc, ac) = (g2.clone(), s.clone(), assign.clone());
        let hol_form = MsForm::new(0, 1, move |m: &MapDisc, _| {
            let val = surface_hol(&gc, &sc, m.as_surface()?, &ac, &quad)?;
            Ok(nalgebra::DMatrix::from_element(1, 1, val))
        });
        let md = MapDisc::Surface(sigma);
        let dhol = fd_exterior_derivative_ms(&hol_form, &md, std::slice::from_ref(&x), 1e-3, 2)
            .unwrap()[(0, 0)];
        assert!(dhol.norm() < 1e-6, "{dhol}");
    }

    #[test]
    fn it_h_flux_z_slice_along_z_is_flux() {
        let quad = QuadratureSpec::default();
        let s = torus_9v();
        for k in [1i64, 2] {
            let (_, h) = flux_setup(k);
            let sigma = z_slice_map(0.2);
            let x = MsTangent::Surface(torus_9v_field(|_u1, _u2| {
                RVec::from_row_slice(&[0.0, 0.0, 1.0])
            }));
            let val = it_h_1form(&h, &s, &sigma, &x, &quad).unwrap();
            assert!(
                (val - Complex64::new(2.0 * PI * k as f64, 0.0)).norm() < 1e-6,
                "k={k}: {val}"
            );
        }
    }

    #[test]
    fn it_h_is_linear_in_x() {
        let quad = QuadratureSpec::default();
        let s = torus_9v();
        let (_, h) = flux_setup(1);
        let sigma = z_slice_map(0.2);
        let xa = MsTangent::Surface(torus_9v_field(|u1, u2| {
            RVec::from_row_slice(&[(2.0 * PI * u1).sin(), u2 * 0.0, 0.7])
        }));
        let xb = MsTangent::Surface(torus_9v_field(|u1, u2| {
            RVec::from_row_slice(&[0.0, (2.0 * PI * u2).cos(), 0.2 * (2.0 * PI * u1).cos()])
        }));
        let xsum = MsTangent::Surface(torus_9v_field(|u1, u2| {
            RVec::from_row_slice(&[
                (2.0 * PI * u1).sin(),
                1.5 * (2.0 * PI * u2).cos(),
                0.7 + 0.3 * (2.0 * PI * u1).cos(),
            ])
        }));
        let va = it_h_1form(&h, &s, &sigma, &xa, &quad).unwrap();
        let vb = it_h_1form(&h, &s, &sigma, &xb, &quad).unwrap();
        let vs = it_h_1form(&h, &s, &sigma, &xsum, &quad).unwrap();
        assert!((vs - (va + vb * 1.5)).norm() < 1e-12);
    }
}
