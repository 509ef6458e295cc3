//! Parallel transport, patchwise loop holonomy for bundles presented by
//! transition/connection data on a cover, the curvature-inserted higher
//! holonomy forms on loop space, and their Chern-character assembly.
//!
//! Conventions (fixed throughout the crate):
//! - transport solves x′(t) = x(t)·A(γ′(t)) with x(a) = Id, so pieces compose
//!   left-to-right: P(a,c) = P(a,b)·P(b,c);
//! - transition functions satisfy d g_{ij} = g_{ij} A_j − A_i g_{ij} and
//!   g_{ij} g_{ji} = Id;
//! - holonomy values are framed in the trivialization of the patch containing
//!   the basepoint (the last patch of the charted cover).

use crate::error::{HolError, Result};
use crate::geometry::{
    numeric_d, permutation_sign, ChartPoint, Manifold, MatrixForm, TangentVec,
};
use crate::mapping::{fd_exterior_derivative_ms, LoopDisc, LoopTangent, MapDisc, MsForm, MsTangent};
use crate::numerics::{cheb_cumulative_matrix, cheb_points, cident, dopri5, max_abs, CMat};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::Arc;

/// Truncation and discretization defaults for the transport series and the
/// higher holonomy forms.
#[derive(Debug, Clone, Copy)]
pub struct TruncationConfig {
    /// Picard series order per piece.
    pub k_order: usize,
    /// Pieces per cover subinterval.
    pub s_steps: usize,
    /// Maximum number of curvature insertions accepted by [`hol_2k`].
    pub w_max: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            k_order: 12,
            s_steps: 8,
            w_max: 6,
        }
    }
}

/// A connection on a trivial bundle: a global gl(n,ℂ)-valued 1-form together
/// with its curvature R = dA + A∧A (supplied, or derived numerically).
pub struct GlobalConnection {
    pub n: usize,
    pub a: MatrixForm,
    pub r: MatrixForm,
}

impl GlobalConnection {
    pub fn new(a: MatrixForm, r: Option<MatrixForm>) -> Result<Self> {
        if a.degree != 1 {
            return Err(HolError::Invalid("connection form must have degree 1".into()));
        }
        let n = a.value_dim;
        let r = match r {
            Some(r) => r,
            None => derived_curvature(&a),
        };
        Ok(GlobalConnection { n, a, r })
    }

    /// Check R = dA + A∧A at the given points on all coordinate tangent pairs.
    pub fn validate(&self, samples: &[ChartPoint], tol: f64) -> Result<()> {
        let dim = self.a.manifold().dim;
        for p in samples {
            for c1 in 0..dim {
                for c2 in (c1 + 1)..dim {
                    let (u, v) = coordinate_pair(p, c1, c2);
                    let lhs = self.r.eval(p, &[u.clone(), v.clone()])?;
                    let rhs = curvature_of(&self.a, p, &u, &v)?;
                    if max_abs(&(lhs - rhs)) > tol {
                        return Err(HolError::Invalid(format!(
                            "curvature mismatch R != dA + A∧A beyond {tol} at chart {} point {:?}",
                            p.chart, p.coords
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Present the trivial bundle as single-patch local data.
    pub fn into_local(self) -> LocalBundleData {
        let manifold = self.a.manifold().clone();
        LocalBundleData {
            n: self.n,
            manifold,
            patches: vec![Patch {
                id: 0,
                contains: Arc::new(|_| true),
            }],
            g: HashMap::new(),
            a: vec![self.a],
            r: vec![self.r],
        }
    }
}

/// dA + A∧A as a form, with dA taken by central differences.
fn derived_curvature(a: &MatrixForm) -> MatrixForm {
    let n = a.value_dim;
    let inner = a.clone();
    let manifold = a.manifold().clone();
    MatrixForm::from_fn(manifold, 0, 2, n, move |p, v| {
        curvature_of(&inner, p, &v[0], &v[1]).expect("curvature evaluation")
    })
}

fn curvature_of(a: &MatrixForm, p: &ChartPoint, u: &TangentVec, v: &TangentVec) -> Result<CMat> {
    let da = numeric_d(a, p, &[u.clone(), v.clone()], 1e-4)?;
    let au = a.eval(p, std::slice::from_ref(u))?;
    let av = a.eval(p, std::slice::from_ref(v))?;
    Ok(da + &au * &av - &av * &au)
}

fn coordinate_pair(p: &ChartPoint, c1: usize, c2: usize) -> (TangentVec, TangentVec) {
    let dim = p.coords.len();
    let mut e1 = vec![0.0; dim];
    let mut e2 = vec![0.0; dim];
    e1[c1] = 1.0;
    e2[c2] = 1.0;
    (
        TangentVec::new(p.clone(), &e1),
        TangentVec::new(p.clone(), &e2),
    )
}

type RegionPredicate = Arc<dyn Fn(&ChartPoint) -> bool + Send + Sync>;

/// An element of the cover: a region predicate (accepting points in any chart
/// it understands) with a stable id.
pub struct Patch {
    pub id: usize,
    pub contains: RegionPredicate,
}

/// A bundle-with-connection presented on a cover: per-patch connection forms
/// A_i, per-patch curvature representatives R_i (restrictions of a single
/// global form), and transition functions g_{ij} on overlaps.
pub struct LocalBundleData {
    pub n: usize,
    pub manifold: Arc<Manifold>,
    pub patches: Vec<Patch>,
    g: HashMap<(usize, usize), MatrixForm>,
    pub a: Vec<MatrixForm>,
    pub r: Vec<MatrixForm>,
}

impl LocalBundleData {
    pub fn new(
        n: usize,
        manifold: Arc<Manifold>,
        patches: Vec<Patch>,
        g: HashMap<(usize, usize), MatrixForm>,
        a: Vec<MatrixForm>,
        r: Vec<MatrixForm>,
    ) -> Result<Self> {
        if a.len() != patches.len() || r.len() != patches.len() {
            return Err(HolError::Invalid(
                "need one connection and one curvature form per patch".into(),
            ));
        }
        Ok(LocalBundleData {
            n,
            manifold,
            patches,
            g,
            a,
            r,
        })
    }

    pub fn patch_index(&self, id: usize) -> Result<usize> {
        self.patches
            .iter()
            .position(|p| p.id == id)
            .ok_or_else(|| HolError::UnknownId(format!("patch id {id}")))
    }

    /// Evaluate the transition g_{ij} at a point: identity on the diagonal,
    /// inverse of the stored g_{ji} when only that direction is present.
    pub fn eval_g(&self, i: usize, j: usize, p: &ChartPoint) -> Result<CMat> {
        if i == j {
            return Ok(cident(self.n));
        }
        if let Some(form) = self.g.get(&(i, j)) {
            return form.eval(p, &[]);
        }
        if let Some(form) = self.g.get(&(j, i)) {
            let m = form.eval(p, &[])?;
            return m
                .try_inverse()
                .ok_or_else(|| HolError::Numerical(format!("g_{{{j},{i}}} singular")));
        }
        Err(HolError::UnknownId(format!("transition g_{{{i},{j}}}")))
    }

    /// Check the cocycle-compatibility relations at sample points: for every
    /// pair of patches containing the point, g_{ij}g_{ji} = Id,
    /// d g_{ij} = g_{ij}A_j − A_i g_{ij} (tol 1e−6), and R_i = R_j (tol 1e−8)
    /// on coordinate tangent pairs.
    pub fn validate(&self, samples: &[ChartPoint]) -> Result<()> {
        let dim = self.manifold.dim;
        for p in samples {
            let present: Vec<usize> = (0..self.patches.len())
                .filter(|&i| (self.patches[i].contains)(p))
                .collect();
            for (a_pos, &i) in present.iter().enumerate() {
                for &j in present.iter().skip(a_pos + 1) {
                    let ii = self.patches[i].id;
                    let jj = self.patches[j].id;
                    let gij = self.eval_g(ii, jj, p)?;
                    let gji = self.eval_g(jj, ii, p)?;
                    if max_abs(&(&gij * &gji - cident(self.n))) > 1e-8 {
                        return Err(HolError::Invalid(format!(
                            "g_{{{ii},{jj}}} g_{{{jj},{ii}}} != Id at {:?}",
                            p.coords
                        )));
                    }
                    for c in 0..dim {
                        let mut e = vec![0.0; dim];
                        e[c] = 1.0;
                        let v = TangentVec::new(p.clone(), &e);
                        if let Some(form) = self.g.get(&(ii, jj)).or_else(|| self.g.get(&(jj, ii)))
                        {
                            let (lo, hi) = if self.g.contains_key(&(ii, jj)) {
                                (i, j)
                            } else {
                                (j, i)
                            };
                            let dg = numeric_d(form, p, std::slice::from_ref(&v), 1e-5)?;
                            let gv = form.eval(p, &[])?;
                            let aj = self.a[hi].eval(p, std::slice::from_ref(&v))?;
                            let ai = self.a[lo].eval(p, std::slice::from_ref(&v))?;
                            let rhs = &gv * aj - ai * &gv;
                            if max_abs(&(dg - rhs)) > 1e-6 {
                                return Err(HolError::Invalid(format!(
                                    "d g != g A_j - A_i g on overlap ({ii},{jj}) at {:?}",
                                    p.coords
                                )));
                            }
                        }
                    }
                    for c1 in 0..dim {
                        for c2 in (c1 + 1)..dim {
                            let (u, v) = coordinate_pair(p, c1, c2);
                            let ri = self.r[i].eval(p, &[u.clone(), v.clone()])?;
                            let rj = self.r[j].eval(p, &[u, v])?;
                            if max_abs(&(ri - rj)) > 1e-8 {
                                return Err(HolError::Invalid(format!(
                                    "curvature representatives differ on overlap ({ii},{jj})"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// A loop together with a subdivision into `p` equal subintervals and a patch
/// id for each, such that the j-th arc stays inside its assigned patch.
#[derive(Clone)]
pub struct ChartedLoop {
    pub loop_disc: LoopDisc,
    pub p: usize,
    pub patch_ids: Vec<usize>,
}

const MEMBERSHIP_SAMPLES: usize = 33;

impl ChartedLoop {
    pub fn new(
        b: &LocalBundleData,
        loop_disc: LoopDisc,
        p: usize,
        patch_ids: Vec<usize>,
    ) -> Result<Self> {
        if p == 0 || patch_ids.len() != p {
            return Err(HolError::Invalid(
                "need one patch id per subinterval".into(),
            ));
        }
        for (j, &id) in patch_ids.iter().enumerate() {
            let idx = b.patch_index(id)?;
            for s in 0..=MEMBERSHIP_SAMPLES {
                let t = (j as f64 + s as f64 / MEMBERSHIP_SAMPLES as f64) / p as f64;
                let pt = loop_disc.point(t);
                if !(b.patches[idx].contains)(&pt) {
                    return Err(HolError::Membership(format!(
                        "arc {j} leaves patch {id} near t = {t}"
                    )));
                }
            }
        }
        Ok(ChartedLoop {
            loop_disc,
            p,
            patch_ids,
        })
    }

    /// Assign each arc the lowest-id patch containing all its samples.
    pub fn assign(b: &LocalBundleData, loop_disc: LoopDisc, p: usize) -> Result<Self> {
        let mut ids = Vec::with_capacity(p);
        for j in 0..p {
            let mut found = None;
            for patch in &b.patches {
                let ok = (0..=MEMBERSHIP_SAMPLES).all(|s| {
                    let t = (j as f64 + s as f64 / MEMBERSHIP_SAMPLES as f64) / p as f64;
                    (patch.contains)(&loop_disc.point(t))
                });
                if ok {
                    found = Some(patch.id);
                    break;
                }
            }
            match found {
                Some(id) => ids.push(id),
                None => {
                    return Err(HolError::Membership(format!(
                        "no patch contains arc {j}; refine the subdivision"
                    )))
                }
            }
        }
        ChartedLoop::new(b, loop_disc, p, ids)
    }
}

/// Number of Chebyshev–Lobatto panels per transport piece.
const CHEB_M: usize = 32;

fn connection_values(a: &MatrixForm, ld: &LoopDisc, ts: &[f64]) -> Result<Vec<CMat>> {
    ts.iter()
        .map(|&t| {
            let p = ld.point(t);
            let v = TangentVec {
                base: p.clone(),
                components: ld.velocity(t),
            };
            a.eval(&p, &[v])
        })
        .collect()
}

/// Prefix values of the time-ordered Picard series on one piece: given the
/// pulled-back connection values at the Lobatto nodes of [a, a+len], return
/// P(a, x_j) = Σ_{k ≤ K} ∫_{a≤t₁≤…≤t_k≤x_j} A(t₁)⋯A(t_k) at every node, plus
/// the last-term tail estimate at the right endpoint.
fn picard_prefix(
    a_vals: &[CMat],
    q: &DMatrix<f64>,
    len: f64,
    k_order: usize,
    n: usize,
) -> (Vec<CMat>, f64) {
    let m = a_vals.len();
    let mut total: Vec<CMat> = vec![cident(n); m];
    let mut f_prev: Vec<CMat> = vec![cident(n); m];
    let mut tail = 0.0;
    for _ in 1..=k_order {
        let prod: Vec<CMat> = (0..m).map(|j| &f_prev[j] * &a_vals[j]).collect();
        let mut f_next: Vec<CMat> = Vec::with_capacity(m);
        for j in 0..m {
            let mut acc = CMat::zeros(n, n);
            for (l, pl) in prod.iter().enumerate() {
                acc += pl.scale(q[(j, l)] * len);
            }
            f_next.push(acc);
        }
        for j in 0..m {
            total[j] += &f_next[j];
        }
        tail = max_abs(&f_next[m - 1]);
        f_prev = f_next;
    }
    (total, 2.0 * tail)
}

fn piece_nodes(t0: f64, len: f64, cheb: &[f64]) -> Vec<f64> {
    cheb.iter().map(|&s| t0 + len * s).collect()
}

/// Time-ordered transport exponential of `a` along the loop between parameter
/// values t0 and t1, by the composite truncated Picard series: the interval is
/// split into `s_steps` pieces, the series is truncated at order `k_order` per
/// piece, and the pieces are multiplied left-to-right.
pub fn transport_series(
    a: &MatrixForm,
    ld: &LoopDisc,
    t0: f64,
    t1: f64,
    k_order: usize,
    s_steps: usize,
) -> Result<CMat> {
    if s_steps == 0 {
        return Err(HolError::Invalid("need at least one step".into()));
    }
    let n = a.value_dim;
    let cheb = cheb_points(CHEB_M);
    let q = cheb_cumulative_matrix(CHEB_M);
    let mut acc = cident(n);
    let len = (t1 - t0) / s_steps as f64;
    for s in 0..s_steps {
        let a0 = t0 + s as f64 * len;
        let ts = piece_nodes(a0, len, &cheb);
        let a_vals = connection_values(a, ld, &ts)?;
        let (prefix, _tail) = picard_prefix(&a_vals, &q, len, k_order, n);
        acc = acc * &prefix[prefix.len() - 1];
    }
    Ok(acc)
}

/// Transport by adaptive Runge–Kutta (Dormand–Prince 5(4)); the independent
/// oracle for [`transport_series`].
pub fn transport_ode(a: &MatrixForm, ld: &LoopDisc, t0: f64, t1: f64, tol: f64) -> Result<CMat> {
    let n = a.value_dim;
    let mut eval_err: Option<HolError> = None;
    let res = dopri5(t0, t1, cident(n), tol, |t, x| {
        let p = ld.point(t);
        let v = TangentVec {
            base: p.clone(),
            components: ld.velocity(t),
        };
        match a.eval(&p, &[v]) {
            Ok(av) => x * av,
            Err(e) => {
                eval_err = Some(e);
                CMat::zeros(n, n)
            }
        }
    });
    if let Some(e) = eval_err {
        return Err(e);
    }
    res.map_err(|e| HolError::Numerical(e.into()))
}

struct ChainPiece {
    /// Subinterval index (for picking the patch connection/curvature).
    seg: usize,
    len: f64,
    ts: Vec<f64>,
    /// Cumulative product C(t) = g·T·g·T⋯ up to each node.
    c: Vec<CMat>,
    c_inv: Vec<CMat>,
}

/// The cumulative transport chain of a charted loop: C(t) is the ordered
/// product of transition factors and arc transports accumulated up to
/// parameter t, so C(1) is the full holonomy and C(s)⁻¹C(t) the transport
/// (with transitions) from s to t.
pub struct TransportChain {
    pub hol: CMat,
    pieces: Vec<ChainPiece>,
    q: DMatrix<f64>,
}

pub fn transport_chain(
    b: &LocalBundleData,
    cl: &ChartedLoop,
    cfg: &TruncationConfig,
) -> Result<TransportChain> {
    let ld = &cl.loop_disc;
    let p = cl.p;
    let n = b.n;
    let idxs: Vec<usize> = cl
        .patch_ids
        .iter()
        .map(|&id| b.patch_index(id))
        .collect::<Result<_>>()?;
    let cheb = cheb_points(CHEB_M);
    let q = cheb_cumulative_matrix(CHEB_M);
    let mut left = b.eval_g(cl.patch_ids[p - 1], cl.patch_ids[0], &ld.point(0.0))?;
    let mut pieces = Vec::with_capacity(p * cfg.s_steps);
    for j in 0..p {
        let a_form = &b.a[idxs[j]];
        let seg_len = 1.0 / p as f64;
        let len = seg_len / cfg.s_steps as f64;
        for s in 0..cfg.s_steps {
            let t0 = j as f64 * seg_len + s as f64 * len;
            let ts = piece_nodes(t0, len, &cheb);
            let a_vals = connection_values(a_form, ld, &ts)?;
            let (prefix, _tail) = picard_prefix(&a_vals, &q, len, cfg.k_order, n);
            let c: Vec<CMat> = prefix.iter().map(|m| &left * m).collect();
            left = c[c.len() - 1].clone();
            let c_inv: Vec<CMat> = c
                .iter()
                .map(|m| {
                    m.clone()
                        .try_inverse()
                        .ok_or_else(|| HolError::Numerical("transport chain singular".into()))
                })
                .collect::<Result<_>>()?;
            pieces.push(ChainPiece {
                seg: j,
                len,
                ts,
                c,
                c_inv,
            });
        }
        if j + 1 < p {
            let t = (j + 1) as f64 / p as f64;
            left = left * b.eval_g(cl.patch_ids[j], cl.patch_ids[j + 1], &ld.point(t))?;
        }
    }
    Ok(TransportChain {
        hol: left,
        pieces,
        q,
    })
}

/// The loop holonomy of the charted cover: the ordered product
/// g_{i_p,i_1}(γ(0)) · T₁ · g_{i_1,i_2}(γ(1/p)) · T₂ ⋯ T_p, framed in the
/// basepoint patch i_p.
pub fn hol0_local(b: &LocalBundleData, cl: &ChartedLoop, cfg: &TruncationConfig) -> Result<CMat> {
    Ok(transport_chain(b, cl, cfg)?.hol)
}

fn loop_tangent<'a>(x: &'a MsTangent) -> Result<&'a LoopTangent> {
    match x {
        MsTangent::Loop(l) => Ok(l),
        _ => Err(HolError::Invalid("expected a loop displacement field".into())),
    }
}

/// The covariant loop-space derivative of the holonomy:
/// ∇hol(X) = −(∫₀¹ C(t)·R(γ′(t), X(t))·C(t)⁻¹ dt)·hol, where C is the
/// cumulative transport chain. Equals the finite-difference derivative
/// d(hol)(X) + [A_{i_p}(γ(0))(X(0)), hol].
pub fn nabla_hol0(
    b: &LocalBundleData,
    cl: &ChartedLoop,
    x: &MsTangent,
    cfg: &TruncationConfig,
) -> Result<CMat> {
    let xt = loop_tangent(x)?;
    let chain = transport_chain(b, cl, cfg)?;
    let ld = &cl.loop_disc;
    let n = b.n;
    let idxs: Vec<usize> = cl
        .patch_ids
        .iter()
        .map(|&id| b.patch_index(id))
        .collect::<Result<_>>()?;
    let mut total = CMat::zeros(n, n);
    let m = CHEB_M;
    for piece in &chain.pieces {
        let r_form = &b.r[idxs[piece.seg]];
        let vals: Vec<CMat> = piece
            .ts
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let p = ld.point(t);
                let vel = TangentVec {
                    base: p.clone(),
                    components: ld.velocity(t),
                };
                let xv = TangentVec {
                    base: p.clone(),
                    components: xt.at(t),
                };
                Ok(&piece.c[j] * r_form.eval(&p, &[vel, xv])? * &piece.c_inv[j])
            })
            .collect::<Result<_>>()?;
        for (l, vl) in vals.iter().enumerate() {
            total += vl.scale(chain.q[(m, l)] * piece.len);
        }
    }
    Ok(-total * &chain.hol)
}

/// All ways to fill k ordered curvature slots with disjoint increasing pairs
/// from {0,…,2k−1}, with the sign of the flattened permutation.
fn pair_assignments(k: usize) -> Vec<(Vec<(usize, usize)>, f64)> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    let mut used = vec![false; 2 * k];
    fn rec(
        k: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<(usize, usize)>,
        out: &mut Vec<(Vec<(usize, usize)>, f64)>,
    ) {
        if current.len() == k {
            let flat: Vec<usize> = current.iter().flat_map(|&(a, b)| [a, b]).collect();
            out.push((current.clone(), permutation_sign(&flat)));
            return;
        }
        let n = used.len();
        for a in 0..n {
            if used[a] {
                continue;
            }
            for b in (a + 1)..n {
                if used[b] {
                    continue;
                }
                used[a] = true;
                used[b] = true;
                current.push((a, b));
                rec(k, used, current, out);
                current.pop();
                used[a] = false;
                used[b] = false;
            }
        }
    }
    rec(k, &mut used, &mut current, &mut out);
    out
}

/// The degree-2k holonomy form: the time-ordered simplex integral with k
/// curvature insertions,
/// hol_{2k}(X₁,…,X_{2k}) = Σ ± ∫_{t₁<…<t_k} ∏_i C(t_i) R(X_{a_i}, X_{b_i}) C(t_i)⁻¹ · hol,
/// summed over fillings of the slots by disjoint pairs of the arguments. The
/// nested integrals are evaluated by cumulative spectral integration on the
/// transport-chain grid; k = 0 recovers [`hol0_local`].
pub fn hol_2k(
    b: &LocalBundleData,
    cl: &ChartedLoop,
    k: usize,
    xs: &[MsTangent],
    cfg: &TruncationConfig,
) -> Result<CMat> {
    if xs.len() != 2 * k {
        return Err(HolError::ArityMismatch {
            expected: 2 * k,
            got: xs.len(),
        });
    }
    if k > cfg.w_max {
        return Err(HolError::Resolution(format!(
            "{k} curvature insertions exceeds the configured maximum {}",
            cfg.w_max
        )));
    }
    let chain = transport_chain(b, cl, cfg)?;
    if k == 0 {
        return Ok(chain.hol);
    }
    let xts: Vec<&LoopTangent> = xs.iter().map(loop_tangent).collect::<Result<_>>()?;
    let ld = &cl.loop_disc;
    let n = b.n;
    let idxs: Vec<usize> = cl
        .patch_ids
        .iter()
        .map(|&id| b.patch_index(id))
        .collect::<Result<_>>()?;
    // Sandwiched curvature C(t)·R(X_a(t), X_b(t))·C(t)⁻¹ for every unordered
    // argument pair, at every chain node (shared by all slot fillings).
    let mut sandwich: HashMap<(usize, usize), Vec<Vec<CMat>>> = HashMap::new();
    for a in 0..(2 * k) {
        for bb in (a + 1)..(2 * k) {
            let vals: Vec<Vec<CMat>> = chain
                .pieces
                .iter()
                .map(|piece| {
                    let r_form = &b.r[idxs[piece.seg]];
                    piece
                        .ts
                        .iter()
                        .enumerate()
                        .map(|(j, &t)| {
                            let p = ld.point(t);
                            let xa = TangentVec {
                                base: p.clone(),
                                components: xts[a].at(t),
                            };
                            let xb = TangentVec {
                                base: p.clone(),
                                components: xts[bb].at(t),
                            };
                            Ok(&piece.c[j] * r_form.eval(&p, &[xa, xb])? * &piece.c_inv[j])
                        })
                        .collect::<Result<Vec<CMat>>>()
                })
                .collect::<Result<_>>()?;
            sandwich.insert((a, bb), vals);
        }
    }
    let node_count = CHEB_M + 1;
    let mut acc = CMat::zeros(n, n);
    for (pairs, sign) in pair_assignments(k) {
        // G_0 ≡ Id; G_i(t) = ∫_0^t G_{i−1}(s)·M_i(s) ds, slot i paired with
        // the i-th time of the ordered simplex.
        let mut g_nodes: Vec<Vec<CMat>> =
            vec![vec![cident(n); node_count]; chain.pieces.len()];
        let mut carry_final = cident(n);
        for &(a, bb) in &pairs {
            let m_vals = &sandwich[&(a, bb)];
            let mut carry = CMat::zeros(n, n);
            for (pi, piece) in chain.pieces.iter().enumerate() {
                let prod: Vec<CMat> = (0..node_count)
                    .map(|j| &g_nodes[pi][j] * &m_vals[pi][j])
                    .collect();
                for j in 0..node_count {
                    let mut v = carry.clone();
                    for (l, pl) in prod.iter().enumerate() {
                        v += pl.scale(chain.q[(j, l)] * piece.len);
                    }
                    g_nodes[pi][j] = v;
                }
                carry = g_nodes[pi][node_count - 1].clone();
            }
            carry_final = carry;
        }
        acc += carry_final.scale(sign);
    }
    Ok(acc * &chain.hol)
}

/// One term of the Chern character on loop space: tr(hol_{2k}) evaluated on an
/// even tuple of displacement fields, 0 when k exceeds `k_max`.
pub fn bismut_chern_eval(
    b: &LocalBundleData,
    cl: &ChartedLoop,
    xs: &[MsTangent],
    k_max: usize,
    cfg: &TruncationConfig,
) -> Result<Complex64> {
    if xs.len() % 2 != 0 {
        return Err(HolError::Invalid(
            "the Chern character vanishes on odd tuples; pass an even number of fields".into(),
        ));
    }
    let k = xs.len() / 2;
    if k > k_max {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(hol_2k(b, cl, k, xs, cfg)?.trace())
}

/// hol_{2k} packaged as a mapping-space form (rebuilding the charted cover on
/// each deformed loop), for finite-difference derivative checks.
pub fn hol_2k_ms_form(
    b: Arc<LocalBundleData>,
    p: usize,
    patch_ids: Vec<usize>,
    k: usize,
    cfg: TruncationConfig,
) -> MsForm {
    let n = b.n;
    MsForm::new(2 * k, n, move |m: &MapDisc, xs: &[MsTangent]| {
        let ld = m.as_loop()?.clone();
        let cl = ChartedLoop::new(&b, ld, p, patch_ids.clone())?;
        hol_2k(&b, &cl, k, xs, &cfg)
    })
}

/// tr(hol_{2k}) as a scalar mapping-space form.
pub fn tr_hol_2k_ms_form(
    b: Arc<LocalBundleData>,
    p: usize,
    patch_ids: Vec<usize>,
    k: usize,
    cfg: TruncationConfig,
) -> MsForm {
    let inner = hol_2k_ms_form(b, p, patch_ids, k, cfg);
    MsForm::new(2 * k, 1, move |m: &MapDisc, xs: &[MsTangent]| {
        let v = inner.eval(m, xs)?;
        Ok(CMat::from_element(1, 1, v.trace()))
    })
}

/// Finite-difference covariant derivative of hol_{2k}: the mapping-space
/// exterior derivative plus the basepoint bracket
/// Σ_i (−1)^i [A_{i_p}(γ(0))(X_i(0)), hol_{2k}(…X̂_i…)]. Used as the oracle
/// for the ladder identity ∇hol_{2k} = −ι_𝐭 hol_{2k+2}.
pub fn nabla_star_hol2k_fd(
    b: &Arc<LocalBundleData>,
    cl: &ChartedLoop,
    k: usize,
    xs: &[MsTangent],
    cfg: &TruncationConfig,
    h: f64,
    richardson_levels: usize,
) -> Result<CMat> {
    if xs.len() != 2 * k + 1 {
        return Err(HolError::ArityMismatch {
            expected: 2 * k + 1,
            got: xs.len(),
        });
    }
    let form = hol_2k_ms_form(b.clone(), cl.p, cl.patch_ids.clone(), k, *cfg);
    let m = MapDisc::Loop(cl.loop_disc.clone());
    let mut acc = fd_exterior_derivative_ms(&form, &m, xs, h, richardson_levels)?;
    let base_idx = b.patch_index(cl.patch_ids[cl.p - 1])?;
    let a_base = &b.a[base_idx];
    let p0 = cl.loop_disc.point(0.0);
    for (i, xi) in xs.iter().enumerate() {
        let xt = loop_tangent(xi)?;
        let v = TangentVec {
            base: p0.clone(),
            components: xt.at(0.0),
        };
        let av = a_base.eval(&p0, &[v])?;
        let rest: Vec<MsTangent> = xs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, t)| t.clone())
            .collect();
        let w = hol_2k(b, cl, k, &rest, cfg)?;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        acc += (&av * &w - &w * &av).scale(sign);
    }
    Ok(acc)
}

fn parse_catalog_id(id: &str) -> Result<(&str, Vec<f64>)> {
    let open = id
        .find('(')
        .ok_or_else(|| HolError::UnknownId(id.to_string()))?;
    if !id.ends_with(')') {
        return Err(HolError::UnknownId(id.to_string()));
    }
    let name = &id[..open];
    let inner = &id[open + 1..id.len() - 1];
    let args: Vec<f64> = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| HolError::UnknownId(format!("bad argument in {id}")))
            })
            .collect::<Result<_>>()?
    };
    Ok((name, args))
}

/// Built-in bundles:
/// - `trivial_line_T2(α,β)`: line bundle on T² with A = i(α dx + β dy), flat;
/// - `monopole_S2(n)`: charge-n line bundle on S² in two stereographic charts;
/// - `su2_const_R2(a,b)`: trivial rank-2 bundle on ℝ² with the constant
///   su(2)-valued connection A = a·(iσ₁/2) dx + b·(iσ₂/2) dy.
pub fn bundle_catalog(id: &str) -> Result<Arc<LocalBundleData>> {
    let (name, args) = parse_catalog_id(id)?;
    match name {
        "trivial_line_T2" => {
            if args.len() != 2 {
                return Err(HolError::UnknownId(format!("{name} expects 2 arguments")));
            }
            Ok(Arc::new(trivial_line_t2(args[0], args[1])))
        }
        "monopole_S2" => {
            if args.len() != 1 || args[0].fract() != 0.0 {
                return Err(HolError::UnknownId(format!(
                    "{name} expects one integer charge"
                )));
            }
            Ok(Arc::new(monopole_s2(args[0] as i32)))
        }
        "su2_const_R2" => {
            if args.len() != 2 {
                return Err(HolError::UnknownId(format!("{name} expects 2 arguments")));
            }
            Ok(Arc::new(su2_const_r2(args[0], args[1])))
        }
        _ => Err(HolError::UnknownId(id.to_string())),
    }
}

fn whole_chart_patch(id: usize) -> Patch {
    Patch {
        id,
        contains: Arc::new(|_| true),
    }
}

fn trivial_line_t2(alpha: f64, beta: f64) -> LocalBundleData {
    let m = Manifold::torus(2);
    let a = MatrixForm::from_coefficients(m.clone(), 0, 1, 1, move |_p, idx| {
        let c = if idx[0] == 0 { alpha } else { beta };
        CMat::from_element(1, 1, Complex64::new(0.0, c))
    });
    let r = MatrixForm::zero(m.clone(), 0, 2, 1);
    LocalBundleData {
        n: 1,
        manifold: m,
        patches: vec![whole_chart_patch(0)],
        g: HashMap::new(),
        a: vec![a],
        r: vec![r],
    }
}

fn su2_const_r2(a1: f64, a2: f64) -> LocalBundleData {
    let m = Manifold::euclidean(2);
    // X₁ = a1·iσ₁/2, X₂ = a2·iσ₂/2
    let i = Complex64::new(0.0, 1.0);
    let zero = Complex64::new(0.0, 0.0);
    let x1 = CMat::from_row_slice(2, 2, &[zero, i * (a1 / 2.0), i * (a1 / 2.0), zero]);
    let x2 = CMat::from_row_slice(
        2,
        2,
        &[
            zero,
            Complex64::new(a2 / 2.0, 0.0),
            Complex64::new(-a2 / 2.0, 0.0),
            zero,
        ],
    );
    let comm = &x1 * &x2 - &x2 * &x1;
    let (x1c, x2c) = (x1.clone(), x2.clone());
    let a = MatrixForm::from_coefficients(m.clone(), 0, 1, 2, move |_p, idx| {
        if idx[0] == 0 {
            x1c.clone()
        } else {
            x2c.clone()
        }
    });
    let r = MatrixForm::from_coefficients(m.clone(), 0, 2, 2, move |_p, _idx| comm.clone());
    LocalBundleData {
        n: 2,
        manifold: m,
        patches: vec![whole_chart_patch(0)],
        g: HashMap::new(),
        a: vec![a],
        r: vec![r],
    }
}

/// Charge-n monopole on S² in the two stereographic charts (chart 0 projects
/// from the north pole). Patch 0 covers z < 1/2 (chart-0 radius² < 3), patch 1
/// covers z > −1/2. In chart 0, A₀ = i n (x dy − y dx)/(1+r²); in chart 1,
/// A₁ = −i n (x′ dy′ − y′ dx′)/(1+r′²); the transition is
/// g₀₁ = exp(−i n φ) with φ the common azimuth, so A₁ − A₀ = g₀₁⁻¹ d g₀₁.
/// The global curvature is R = 2 i n (1+r²)⁻² dx∧dy in chart 0.
fn monopole_s2(charge: i32) -> LocalBundleData {
    let m = Manifold::sphere(2);
    let n = charge as f64;
    let patch_down = Patch {
        id: 0,
        contains: Arc::new(|p: &ChartPoint| {
            let r2 = p.coords.norm_squared();
            match p.chart {
                0 => r2 < 3.0,
                _ => r2 > 1.0 / 3.0,
            }
        }),
    };
    let patch_up = Patch {
        id: 1,
        contains: Arc::new(|p: &ChartPoint| {
            let r2 = p.coords.norm_squared();
            match p.chart {
                0 => r2 > 1.0 / 3.0,
                _ => r2 < 3.0,
            }
        }),
    };
    let a0 = MatrixForm::from_coefficients(m.clone(), 0, 1, 1, move |p, idx| {
        let (x, y) = (p.coords[0], p.coords[1]);
        let denom = 1.0 + x * x + y * y;
        let c = if idx[0] == 0 { -y } else { x };
        CMat::from_element(1, 1, Complex64::new(0.0, n * c / denom))
    });
    let a1 = MatrixForm::from_coefficients(m.clone(), 1, 1, 1, move |p, idx| {
        let (x, y) = (p.coords[0], p.coords[1]);
        let denom = 1.0 + x * x + y * y;
        let c = if idx[0] == 0 { y } else { -x };
        CMat::from_element(1, 1, Complex64::new(0.0, n * c / denom))
    });
    let r = MatrixForm::from_coefficients(m.clone(), 0, 2, 1, move |p, _idx| {
        let r2 = p.coords.norm_squared();
        CMat::from_element(1, 1, Complex64::new(0.0, 2.0 * n / ((1.0 + r2) * (1.0 + r2))))
    })
    .with_rep(1, move |p: &ChartPoint, v: &[TangentVec]| {
        let r2 = p.coords.norm_squared();
        let det = v[0].components[0] * v[1].components[1]
            - v[0].components[1] * v[1].components[0];
        CMat::from_element(
            1,
            1,
            Complex64::new(0.0, -2.0 * n * det / ((1.0 + r2) * (1.0 + r2))),
        )
    });
    let phase = move |p: &ChartPoint| {
        let phi = p.coords[1].atan2(p.coords[0]);
        CMat::from_element(1, 1, Complex64::from_polar(1.0, -n * phi))
    };
    let g01 = MatrixForm::from_fn(m.clone(), 0, 0, 1, {
        let phase = phase;
        move |p, _| phase(p)
    })
    .with_rep(1, move |p: &ChartPoint, _v: &[TangentVec]| {
        // The azimuth is shared by both stereographic charts.
        let phi = p.coords[1].atan2(p.coords[0]);
        CMat::from_element(1, 1, Complex64::from_polar(1.0, -n * phi))
    });
    let mut g = HashMap::new();
    g.insert((0usize, 1usize), g01);
    LocalBundleData {
        n: 1,
        manifold: m,
        patches: vec![patch_down, patch_up],
        g,
        a: vec![a0, a1],
        r: vec![r.clone(), r],
    }
}
