//! Discretized mapping spaces: loops, torus maps, and simplicial surface maps
//! into a chart manifold, together with mapping-space tangent vectors
//! (displacement fields), differential forms on the mapping space, and the
//! finite-difference exterior derivative used by every d/ι identity check.
//!
//! The discretized mapping space is treated as an open set of a
//! finite-dimensional vector space (the node coordinates); tangents are node
//! displacement fields extended constantly, so all Lie-bracket terms in the
//! exterior-derivative formula vanish identically.

use crate::error::{HolError, Result};
use crate::geometry::{ChartPoint, Manifold, RMat, RVec};
use crate::numerics::{CMat, TrigInterp};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;
use std::sync::Arc;

/// A closed loop γ: ℝ/ℤ → M sampled at N equispaced nodes γ(j/N), all in one
/// chart, with an explicit winding vector for periodic (torus) charts:
/// γ(t+1) = γ(t) + winding. Interpolation is trigonometric (spectral).
#[derive(Clone)]
pub struct LoopDisc {
    pub manifold: Arc<Manifold>,
    pub chart: usize,
    pub nodes: Vec<RVec>,
    pub winding: RVec,
    interps: Arc<Vec<TrigInterp>>,
}

impl LoopDisc {
    pub fn new(
        manifold: Arc<Manifold>,
        chart: usize,
        nodes: Vec<RVec>,
        winding: RVec,
    ) -> Result<Self> {
        if nodes.len() < 16 {
            return Err(HolError::Resolution("loop needs at least 16 nodes".into()));
        }
        if !manifold.periodic && winding.amax() != 0.0 {
            return Err(HolError::Invalid(
                "winding only meaningful on periodic charts".into(),
            ));
        }
        let dim = manifold.dim;
        let n = nodes.len();
        let mut interps = Vec::with_capacity(dim);
        for c in 0..dim {
            let samples: Vec<f64> = (0..n)
                .map(|j| nodes[j][c] - winding[c] * j as f64 / n as f64)
                .collect();
            interps.push(TrigInterp::new(&samples));
        }
        Ok(LoopDisc {
            manifold,
            chart,
            nodes,
            winding,
            interps: Arc::new(interps),
        })
    }

    /// Sample an analytic loop t ↦ coords at N nodes.
    pub fn from_fn<F: Fn(f64) -> RVec>(
        manifold: Arc<Manifold>,
        chart: usize,
        n: usize,
        winding: RVec,
        f: F,
    ) -> Result<Self> {
        let nodes = (0..n).map(|j| f(j as f64 / n as f64)).collect();
        Self::new(manifold, chart, nodes, winding)
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim
    }

    pub fn point(&self, t: f64) -> ChartPoint {
        let dim = self.dim();
        let mut coords = RVec::zeros(dim);
        for c in 0..dim {
            coords[c] = self.interps[c].value(t) + self.winding[c] * t;
        }
        ChartPoint {
            chart: self.chart,
            coords,
        }
    }

    pub fn velocity(&self, t: f64) -> RVec {
        let dim = self.dim();
        let mut v = RVec::zeros(dim);
        for c in 0..dim {
            v[c] = self.interps[c].deriv(t) + self.winding[c];
        }
        v
    }

    /// Shift every node by ε·X (constant extension of the displacement field).
    pub fn deform(&self, x: &LoopTangent, eps: f64) -> Result<Self> {
        if x.comps.len() != self.n() {
            return Err(HolError::Invalid("tangent node count mismatch".into()));
        }
        let nodes: Vec<RVec> = self
            .nodes
            .iter()
            .zip(&x.comps)
            .map(|(p, d)| p + d * eps)
            .collect();
        Self::new(
            self.manifold.clone(),
            self.chart,
            nodes,
            self.winding.clone(),
        )
    }

    pub fn resample(&self, n: usize) -> Result<Self> {
        check_resample(n, self.n())?;
        Self::from_fn(
            self.manifold.clone(),
            self.chart,
            n,
            self.winding.clone(),
            |t| self.point(t).coords,
        )
    }
}

/// A doubly periodic map γ: (ℝ/ℤ)² → M sampled on a P×Q grid γ(j/P, l/Q),
/// with winding vectors in each direction, spectrally interpolated.
#[derive(Clone)]
pub struct TorusMapDisc {
    pub manifold: Arc<Manifold>,
    pub chart: usize,
    /// grids[c][(j, l)] = coordinate c of γ(j/P, l/Q)
    pub grids: Vec<RMat>,
    pub winding_t: RVec,
    pub winding_u: RVec,
    modes: Arc<Vec<Vec<(f64, f64, Complex64)>>>,
}

impl TorusMapDisc {
    pub fn new(
        manifold: Arc<Manifold>,
        chart: usize,
        grids: Vec<RMat>,
        winding_t: RVec,
        winding_u: RVec,
    ) -> Result<Self> {
        let (p, q) = (grids[0].nrows(), grids[0].ncols());
        if p < 16 || q < 16 {
            return Err(HolError::Resolution(
                "torus map needs a grid of at least 16×16".into(),
            ));
        }
        if !manifold.periodic && (winding_t.amax() != 0.0 || winding_u.amax() != 0.0) {
            return Err(HolError::Invalid(
                "winding only meaningful on periodic charts".into(),
            ));
        }
        let dim = manifold.dim;
        let mut modes = Vec::with_capacity(dim);
        for c in 0..dim {
            // 2-D DFT of the periodic part, thresholded to significant modes
            let mut coeffs = vec![vec![Complex64::new(0.0, 0.0); q]; p];
            let mut maxmag: f64 = 0.0;
            for k in 0..p {
                for l in 0..q {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..p {
                        for m in 0..q {
                            let val = grids[c][(j, m)]
                                - winding_t[c] * j as f64 / p as f64
                                - winding_u[c] * m as f64 / q as f64;
                            let ang = -2.0 * PI * ((k * j) as f64 / p as f64
                                + (l * m) as f64 / q as f64);
                            acc += Complex64::from_polar(val, ang);
                        }
                    }
                    acc /= (p * q) as f64;
                    coeffs[k][l] = acc;
                    maxmag = maxmag.max(acc.norm());
                }
            }
            let mut list = Vec::new();
            for (k, row) in coeffs.iter().enumerate() {
                for (l, &cc) in row.iter().enumerate() {
                    if cc.norm() > 1e-14 * (1.0 + maxmag) {
                        list.push((alias(k, p), alias(l, q), cc));
                    }
                }
            }
            modes.push(list);
        }
        Ok(TorusMapDisc {
            manifold,
            chart,
            grids,
            winding_t,
            winding_u,
            modes: Arc::new(modes),
        })
    }

    pub fn from_fn<F: Fn(f64, f64) -> RVec>(
        manifold: Arc<Manifold>,
        chart: usize,
        p: usize,
        q: usize,
        winding_t: RVec,
        winding_u: RVec,
        f: F,
    ) -> Result<Self> {
        let dim = manifold.dim;
        let mut grids = vec![RMat::zeros(p, q); dim];
        for j in 0..p {
            for l in 0..q {
                let v = f(j as f64 / p as f64, l as f64 / q as f64);
                for c in 0..dim {
                    grids[c][(j, l)] = v[c];
                }
            }
        }
        Self::new(manifold, chart, grids, winding_t, winding_u)
    }

    pub fn p(&self) -> usize {
        self.grids[0].nrows()
    }

    pub fn q(&self) -> usize {
        self.grids[0].ncols()
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim
    }

    pub fn point(&self, t: f64, u: f64) -> ChartPoint {
        let dim = self.dim();
        let mut coords = RVec::zeros(dim);
        for c in 0..dim {
            let mut acc = 0.0;
            for &(fk, fl, cc) in &self.modes[c] {
                acc += (cc * Complex64::from_polar(1.0, 2.0 * PI * (fk * t + fl * u))).re;
            }
            coords[c] = acc + self.winding_t[c] * t + self.winding_u[c] * u;
        }
        ChartPoint {
            chart: self.chart,
            coords,
        }
    }

    /// ∂γ/∂t or ∂γ/∂u at (t, u).
    pub fn velocity(&self, t: f64, u: f64, axis: Axis) -> RVec {
        let dim = self.dim();
        let mut v = RVec::zeros(dim);
        for c in 0..dim {
            let mut acc = 0.0;
            for &(fk, fl, cc) in &self.modes[c] {
                let f = match axis {
                    Axis::T => fk,
                    Axis::U => fl,
                };
                acc += (cc
                    * Complex64::from_polar(1.0, 2.0 * PI * (fk * t + fl * u))
                    * Complex64::new(0.0, 2.0 * PI * f))
                .re;
            }
            v[c] = acc
                + match axis {
                    Axis::T => self.winding_t[c],
                    Axis::U => self.winding_u[c],
                };
        }
        v
    }

    pub fn deform(&self, x: &TorusTangent, eps: f64) -> Result<Self> {
        if x.grids[0].nrows() != self.p() || x.grids[0].ncols() != self.q() {
            return Err(HolError::Invalid("tangent grid mismatch".into()));
        }
        let grids: Vec<RMat> = self
            .grids
            .iter()
            .zip(&x.grids)
            .map(|(g, d)| g + d * eps)
            .collect();
        Self::new(
            self.manifold.clone(),
            self.chart,
            grids,
            self.winding_t.clone(),
            self.winding_u.clone(),
        )
    }

    pub fn resample(&self, p: usize, q: usize) -> Result<Self> {
        check_resample(p, self.p())?;
        check_resample(q, self.q())?;
        Self::from_fn(
            self.manifold.clone(),
            self.chart,
            p,
            q,
            self.winding_t.clone(),
            self.winding_u.clone(),
            |t, u| self.point(t, u).coords,
        )
    }

    /// The loop u ↦ γ(t₀, u) at fixed first parameter, sampled at the grid's
    /// second-axis resolution.
    pub fn slice_u(&self, t0: f64) -> Result<LoopDisc> {
        LoopDisc::from_fn(
            self.manifold.clone(),
            self.chart,
            self.q(),
            self.winding_u.clone(),
            |u| self.point(t0, u).coords,
        )
    }
}

fn alias(k: usize, n: usize) -> f64 {
    if 2 * k < n {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

fn check_resample(target: usize, source: usize) -> Result<()> {
    if target < 8 {
        return Err(HolError::Resolution("resolution below 8".into()));
    }
    if 2 * target < source {
        return Err(HolError::Resolution(
            "target resolution below half the source".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    T,
    U,
}

/// A map of the geometric realization of a simplicial surface into M, stored
/// as one smooth parametrization Δ² → chart coordinates per nondegenerate
/// face (barycentric parameters (s₁, s₂) with s₁ + s₂ ≤ 1, corners mapping to
/// the face's vertices in vertex order), plus sampled lattice nodes.
#[derive(Clone)]
pub struct SurfaceMapDisc {
    pub manifold: Arc<Manifold>,
    pub chart: usize,
    pub faces: Vec<FaceParam>,
    /// lattice refinement per face edge for the sampled nodes
    pub samples_per_edge: usize,
}

pub type FaceMapFn = Arc<dyn Fn(f64, f64) -> RVec + Send + Sync>;

#[derive(Clone)]
pub struct FaceParam {
    pub map: FaceMapFn,
}

impl SurfaceMapDisc {
    pub fn new(
        manifold: Arc<Manifold>,
        chart: usize,
        faces: Vec<FaceMapFn>,
        samples_per_edge: usize,
    ) -> Self {
        SurfaceMapDisc {
            manifold,
            chart,
            faces: faces.into_iter().map(|map| FaceParam { map }).collect(),
            samples_per_edge,
        }
    }

    pub fn point(&self, face: usize, s1: f64, s2: f64) -> ChartPoint {
        ChartPoint {
            chart: self.chart,
            coords: (self.faces[face].map)(s1, s2),
        }
    }

    /// ∂σ/∂s₁ and ∂σ/∂s₂ on a face by central differences on the smooth
    /// parametrization.
    pub fn partials(&self, face: usize, s1: f64, s2: f64) -> (RVec, RVec) {
        let h = 1e-5;
        let f = &self.faces[face].map;
        let d1 = (f(s1 + h, s2) - f(s1 - h, s2)) / (2.0 * h);
        let d2 = (f(s1, s2 + h) - f(s1, s2 - h)) / (2.0 * h);
        (d1, d2)
    }

    pub fn deform(&self, x: &SurfaceTangent, eps: f64) -> Result<Self> {
        if x.fields.len() != self.faces.len() {
            return Err(HolError::Invalid("tangent face count mismatch".into()));
        }
        let faces: Vec<FaceMapFn> = self
            .faces
            .iter()
            .zip(&x.fields)
            .map(|(fp, xf)| {
                let base = fp.map.clone();
                let field = xf.clone();
                let f: FaceMapFn = Arc::new(move |s1, s2| base(s1, s2) + field(s1, s2) * eps);
                f
            })
            .collect();
        Ok(SurfaceMapDisc::new(
            self.manifold.clone(),
            self.chart,
            faces,
            self.samples_per_edge,
        ))
    }

    /// Sampled lattice nodes of one face (row-major over the barycentric
    /// lattice), for serialization and consistency checks.
    pub fn face_nodes(&self, face: usize) -> Vec<RVec> {
        let n = self.samples_per_edge;
        let mut out = Vec::new();
        for a in 0..=n {
            for b in 0..=(n - a) {
                out.push((self.faces[face].map)(a as f64 / n as f64, b as f64 / n as f64));
            }
        }
        out
    }
}

/// A tangent vector to one of the discretized mapping spaces: a displacement
/// field over the nodes of the underlying map.
#[derive(Clone)]
pub enum MsTangent {
    Loop(LoopTangent),
    Torus(TorusTangent),
    Surface(SurfaceTangent),
}

#[derive(Clone)]
pub struct LoopTangent {
    pub comps: Vec<RVec>,
    interps: Arc<Vec<TrigInterp>>,
}

impl LoopTangent {
    pub fn new(comps: Vec<RVec>) -> Self {
        let dim = comps[0].len();
        let n = comps.len();
        let interps = (0..dim)
            .map(|c| TrigInterp::new(&(0..n).map(|j| comps[j][c]).collect::<Vec<_>>()))
            .collect();
        LoopTangent {
            comps,
            interps: Arc::new(interps),
        }
    }

    pub fn from_fn<F: Fn(f64) -> RVec>(n: usize, f: F) -> Self {
        Self::new((0..n).map(|j| f(j as f64 / n as f64)).collect())
    }

    pub fn at(&self, t: f64) -> RVec {
        let dim = self.comps[0].len();
        RVec::from_iterator(dim, (0..dim).map(|c| self.interps[c].value(t)))
    }
}

#[derive(Clone)]
pub struct TorusTangent {
    /// grids[c][(j, l)] = component c at (j/P, l/Q)
    pub grids: Vec<RMat>,
    modes: Arc<Vec<Vec<(f64, f64, Complex64)>>>,
}

impl TorusTangent {
    pub fn new(grids: Vec<RMat>) -> Self {
        let (p, q) = (grids[0].nrows(), grids[0].ncols());
        let dim = grids.len();
        let mut modes = Vec::with_capacity(dim);
        for c in 0..dim {
            let mut list = Vec::new();
            let mut coeffs = vec![vec![Complex64::new(0.0, 0.0); q]; p];
            let mut maxmag: f64 = 0.0;
            for k in 0..p {
                for l in 0..q {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..p {
                        for m in 0..q {
                            let ang = -2.0 * PI * ((k * j) as f64 / p as f64
                                + (l * m) as f64 / q as f64);
                            acc += Complex64::from_polar(grids[c][(j, m)], ang);
                        }
                    }
                    acc /= (p * q) as f64;
                    coeffs[k][l] = acc;
                    maxmag = maxmag.max(acc.norm());
                }
            }
            for (k, row) in coeffs.iter().enumerate() {
                for (l, &cc) in row.iter().enumerate() {
                    if cc.norm() > 1e-14 * (1.0 + maxmag) {
                        list.push((alias(k, p), alias(l, q), cc));
                    }
                }
            }
            modes.push(list);
        }
        TorusTangent {
            grids,
            modes: Arc::new(modes),
        }
    }

    pub fn from_fn<F: Fn(f64, f64) -> RVec>(dim: usize, p: usize, q: usize, f: F) -> Self {
        let mut grids = vec![RMat::zeros(p, q); dim];
        for j in 0..p {
            for l in 0..q {
                let v = f(j as f64 / p as f64, l as f64 / q as f64);
                for c in 0..dim {
                    grids[c][(j, l)] = v[c];
                }
            }
        }
        Self::new(grids)
    }

    pub fn at(&self, t: f64, u: f64) -> RVec {
        let dim = self.grids.len();
        let mut v = RVec::zeros(dim);
        for c in 0..dim {
            let mut acc = 0.0;
            for &(fk, fl, cc) in &self.modes[c] {
                acc += (cc * Complex64::from_polar(1.0, 2.0 * PI * (fk * t + fl * u))).re;
            }
            v[c] = acc;
        }
        v
    }
}

#[derive(Clone)]
pub struct SurfaceTangent {
    /// one smooth displacement field per face, (s₁, s₂) ↦ components
    pub fields: Vec<FaceMapFn>,
}

impl MsTangent {
    pub fn loop_at(&self, t: f64) -> RVec {
        match self {
            MsTangent::Loop(x) => x.at(t),
            _ => panic!("loop tangent expected"),
        }
    }

    pub fn torus_at(&self, t: f64, u: f64) -> RVec {
        match self {
            MsTangent::Torus(x) => x.at(t, u),
            _ => panic!("torus tangent expected"),
        }
    }

    pub fn surface_at(&self, face: usize, s1: f64, s2: f64) -> RVec {
        match self {
            MsTangent::Surface(x) => (x.fields[face])(s1, s2),
            _ => panic!("surface tangent expected"),
        }
    }
}

/// A map disc of any of the three flavors; the common currency for
/// mapping-space forms.
#[derive(Clone)]
pub enum MapDisc {
    Loop(LoopDisc),
    Torus(TorusMapDisc),
    Surface(SurfaceMapDisc),
}

impl MapDisc {
    pub fn deform(&self, x: &MsTangent, eps: f64) -> Result<MapDisc> {
        match (self, x) {
            (MapDisc::Loop(m), MsTangent::Loop(t)) => Ok(MapDisc::Loop(m.deform(t, eps)?)),
            (MapDisc::Torus(m), MsTangent::Torus(t)) => Ok(MapDisc::Torus(m.deform(t, eps)?)),
            (MapDisc::Surface(m), MsTangent::Surface(t)) => {
                Ok(MapDisc::Surface(m.deform(t, eps)?))
            }
            _ => Err(HolError::Invalid("map/tangent flavor mismatch".into())),
        }
    }

    pub fn as_loop(&self) -> Result<&LoopDisc> {
        match self {
            MapDisc::Loop(m) => Ok(m),
            _ => Err(HolError::Invalid("expected a loop disc".into())),
        }
    }

    pub fn as_torus(&self) -> Result<&TorusMapDisc> {
        match self {
            MapDisc::Torus(m) => Ok(m),
            _ => Err(HolError::Invalid("expected a torus map disc".into())),
        }
    }

    pub fn as_surface(&self) -> Result<&SurfaceMapDisc> {
        match self {
            MapDisc::Surface(m) => Ok(m),
            _ => Err(HolError::Invalid("expected a surface map disc".into())),
        }
    }
}

type MsEval = Arc<dyn Fn(&MapDisc, &[MsTangent]) -> Result<CMat> + Send + Sync>;

/// A differential form on a discretized mapping space: a multilinear
/// antisymmetric evaluator on displacement fields.
#[derive(Clone)]
pub struct MsForm {
    pub degree: usize,
    pub value_dim: usize,
    eval: MsEval,
}

impl MsForm {
    pub fn new<F>(degree: usize, value_dim: usize, eval: F) -> Self
    where
        F: Fn(&MapDisc, &[MsTangent]) -> Result<CMat> + Send + Sync + 'static,
    {
        MsForm {
            degree,
            value_dim,
            eval: Arc::new(eval),
        }
    }

    pub fn eval(&self, m: &MapDisc, x: &[MsTangent]) -> Result<CMat> {
        if x.len() != self.degree {
            return Err(HolError::ArityMismatch {
                expected: self.degree,
                got: x.len(),
            });
        }
        (self.eval)(m, x)
    }
}

/// The canonical rotation velocity field: the derivative of the map along the
/// circle parameter (or along the chosen torus axis).
pub fn velocity_field(m: &MapDisc, axis: Axis) -> Result<MsTangent> {
    match m {
        MapDisc::Loop(l) => {
            if axis != Axis::T {
                return Err(HolError::Invalid("loops only have the t axis".into()));
            }
            let n = l.n();
            Ok(MsTangent::Loop(LoopTangent::from_fn(n, |t| l.velocity(t))))
        }
        MapDisc::Torus(t) => Ok(MsTangent::Torus(TorusTangent::from_fn(
            t.dim(),
            t.p(),
            t.q(),
            |a, b| t.velocity(a, b, axis),
        ))),
        MapDisc::Surface(_) => Err(HolError::Invalid(
            "surface maps have no canonical rotation field".into(),
        )),
    }
}

/// Contraction ι_X ω: fixes X in the first slot, dropping the degree by one.
pub fn contract_ms_form(omega: &MsForm, x: &MsTangent) -> Result<MsForm> {
    if omega.degree == 0 {
        return Err(HolError::Invalid("cannot contract a 0-form".into()));
    }
    let inner = omega.clone();
    let fixed = x.clone();
    Ok(MsForm::new(
        omega.degree - 1,
        omega.value_dim,
        move |m, rest| {
            let mut args = Vec::with_capacity(rest.len() + 1);
            args.push(fixed.clone());
            args.extend_from_slice(rest);
            inner.eval(m, &args)
        },
    ))
}

/// Finite-difference exterior derivative on the mapping space:
/// dω(X₀,…,X_k)(m) = Σ_i (−1)^i ∂_ε ω(m + ε X_i)(X₀,…,X̂_i,…,X_k), central
/// differences with `richardson_levels` Richardson entries (base error is
/// O(h²), each level removes one even power).
pub fn fd_exterior_derivative_ms(
    omega: &MsForm,
    m: &MapDisc,
    x: &[MsTangent],
    h: f64,
    richardson_levels: usize,
) -> Result<CMat> {
    if x.len() != omega.degree + 1 {
        return Err(HolError::ArityMismatch {
            expected: omega.degree + 1,
            got: x.len(),
        });
    }
    if h <= 0.0 {
        return Err(HolError::Invalid("h must be positive".into()));
    }
    let levels = richardson_levels.max(1);
    let n = omega.value_dim;
    let mut acc = CMat::zeros(n, n);
    for i in 0..x.len() {
        let rest: Vec<MsTangent> = x
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, t)| t.clone())
            .collect();
        let central = |step: f64| -> Result<CMat> {
            let plus = omega.eval(&m.deform(&x[i], step)?, &rest)?;
            let minus = omega.eval(&m.deform(&x[i], -step)?, &rest)?;
            Ok((plus - minus) / Complex64::new(2.0 * step, 0.0))
        };
        // Richardson table on h, h/2, h/4, ... (error O(h²) per halving)
        let mut row: Vec<CMat> = Vec::with_capacity(levels);
        for lev in 0..levels {
            row.push(central(h / 2f64.powi(lev as i32))?);
        }
        for j in 1..levels {
            for idx in (j..levels).rev() {
                let factor = 4f64.powi(j as i32);
                let num = row[idx].clone() * Complex64::new(factor, 0.0) - row[idx - 1].clone();
                row[idx] = num / Complex64::new(factor - 1.0, 0.0);
            }
        }
        let best = row.last().unwrap().clone();
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        acc += best * Complex64::new(sign, 0.0);
    }
    Ok(acc)
}

/// Resample a loop or torus map to a new resolution via the spectral
/// interpolant.
pub fn resample_map(m: &MapDisc, resolution: &[usize]) -> Result<MapDisc> {
    match m {
        MapDisc::Loop(l) => Ok(MapDisc::Loop(l.resample(resolution[0])?)),
        MapDisc::Torus(t) => Ok(MapDisc::Torus(t.resample(
            resolution[0],
            *resolution.get(1).unwrap_or(&resolution[0]),
        )?)),
        MapDisc::Surface(_) => Err(HolError::Invalid(
            "surface maps are parametrized per face; resampling does not apply".into(),
        )),
    }
}

/// Reproducible smooth random displacement field along a loop: band-limited
/// Fourier series with `modes` harmonics per coordinate.
pub fn random_loop_tangent<R: Rng>(rng: &mut R, n: usize, dim: usize, modes: usize) -> LoopTangent {
    let mut coef = Vec::new();
    for _ in 0..dim {
        let mut row = Vec::new();
        for _ in 0..=modes {
            row.push((rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        }
        coef.push(row);
    }
    LoopTangent::from_fn(n, move |t| {
        RVec::from_iterator(
            dim,
            coef.iter().map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(k, &(a, b))| {
                        a * (2.0 * PI * k as f64 * t).cos() + b * (2.0 * PI * k as f64 * t).sin()
                    })
                    .sum::<f64>()
            }),
        )
    })
}

/// Reproducible smooth random displacement field on a torus map.
pub fn random_torus_tangent<R: Rng>(
    rng: &mut R,
    p: usize,
    q: usize,
    dim: usize,
    modes: usize,
) -> TorusTangent {
    let mut coef = Vec::new();
    for _ in 0..dim {
        let mut rows = Vec::new();
        for _ in 0..=modes {
            let mut row = Vec::new();
            for _ in 0..=modes {
                row.push((
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ));
            }
            rows.push(row);
        }
        coef.push(rows);
    }
    TorusTangent::from_fn(dim, p, q, move |t, u| {
        RVec::from_iterator(
            dim,
            coef.iter().map(|rows| {
                let mut acc = 0.0;
                for (k, row) in rows.iter().enumerate() {
                    for (l, &(a, b, c, d)) in row.iter().enumerate() {
                        let (wt, wu) = (2.0 * PI * k as f64 * t, 2.0 * PI * l as f64 * u);
                        acc += a * wt.cos() * wu.cos()
                            + b * wt.cos() * wu.sin()
                            + c * wt.sin() * wu.cos()
                            + d * wt.sin() * wu.sin();
                    }
                }
                acc
            }),
        )
    })
}
