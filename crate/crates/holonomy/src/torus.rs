//! Holonomy of an abelian gerbe over maps of the 2-torus, computed on a
//! (p, q) grid of patches, together with the tower of even-degree correction
//! forms hol_{2k,2ℓ}, the equivariantly closed character Σ aᵏbˡ·hol_{2k,2ℓ},
//! its SL(2) reparametrization covariance, and the adjunction identifying a
//! torus map with a loop of loops (which connects the transgressed
//! loop-space line bundle of [`crate::gerbe`] back to the torus picture).

use crate::error::{HolError, Result};
use crate::geometry::{ChartPoint, QuadratureSpec, RVec, ScalarForm, TangentVec};
use crate::gerbe::{GerbeData, ThreeCurvature};
use crate::mapping::{Axis, LoopDisc, MapDisc, MsForm, MsTangent, TorusMapDisc, TorusTangent};
use crate::numerics::CMat;
use itertools::Itertools;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Patch choice for a p×q grid on the torus: the map restricted to the cell
/// [(k−1)/p, k/p]×[(ℓ−1)/q, ℓ/q] must lie in the patch with id
/// `ids[k−1][ℓ−1]`. The first index follows the first torus parameter t, the
/// second follows u; both wrap periodically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TorusGridAssignment {
    pub ids: Vec<Vec<usize>>,
}

impl TorusGridAssignment {
    pub fn new(ids: Vec<Vec<usize>>) -> Result<Self> {
        if ids.is_empty() || ids[0].is_empty() {
            return Err(HolError::Invalid("grid assignment must be nonempty".into()));
        }
        let q = ids[0].len();
        if ids.iter().any(|row| row.len() != q) {
            return Err(HolError::Invalid("ragged grid assignment".into()));
        }
        Ok(TorusGridAssignment { ids })
    }

    pub fn p(&self) -> usize {
        self.ids.len()
    }

    pub fn q(&self) -> usize {
        self.ids[0].len()
    }

    /// Patch id of cell (k, ℓ) in 1-based grid coordinates, wrapping
    /// periodically so that cell row 0 means row p and column 0 means column q.
    pub fn id(&self, k: i64, l: i64) -> usize {
        let p = self.p() as i64;
        let q = self.q() as i64;
        self.ids[((k - 1).rem_euclid(p)) as usize][((l - 1).rem_euclid(q)) as usize]
    }

    /// Refine the grid by repeating each row `rt` times and each column `ru`
    /// times; a map subordinate to the original grid is subordinate to the
    /// refined one with the same patch per sub-cell.
    pub fn refine(&self, rt: usize, ru: usize) -> Self {
        let ids = self
            .ids
            .iter()
            .flat_map(|row| {
                let expanded: Vec<usize> = row
                    .iter()
                    .flat_map(|&id| std::iter::repeat(id).take(ru))
                    .collect();
                std::iter::repeat(expanded).take(rt)
            })
            .collect();
        TorusGridAssignment { ids }
    }
}

/// Check γ(cell (k,ℓ)) ⊂ U_{ids[k][ℓ]} by sampling a 9×9 lattice per cell.
pub fn check_grid_assignment(
    gerbe: &GerbeData,
    gamma: &TorusMapDisc,
    asg: &TorusGridAssignment,
) -> Result<()> {
    let (p, q) = (asg.p(), asg.q());
    for k in 0..p {
        for l in 0..q {
            let idx = gerbe.patch_index(asg.ids[k][l])?;
            for a in 0..=8 {
                for b in 0..=8 {
                    let t = (k as f64 + a as f64 / 8.0) / p as f64;
                    let u = (l as f64 + b as f64 / 8.0) / q as f64;
                    if !(gerbe.patches[idx].contains)(&gamma.point(t, u)) {
                        return Err(HolError::Membership(format!(
                            "cell ({}, {}) leaves patch {}",
                            k + 1,
                            l + 1,
                            asg.ids[k][l]
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

fn tangent_at(p: &ChartPoint, comps: RVec) -> TangentVec {
    TangentVec {
        base: p.clone(),
        components: comps,
    }
}

/// Holonomy of a gerbe around a torus map on a patch grid:
/// hol = exp(Σ_{k,ℓ} i∫_cell B_{i(k,ℓ)}(∂_t, ∂_u) dt du
///           + i∫_{top edge} A_{i(k−1,ℓ),i(k,ℓ)}(∂_u) du
///           + i∫_{left edge} A_{i(k,ℓ),i(k,ℓ−1)}(∂_t) dt)
///       · ∏_{k,ℓ} g_{i(k,ℓ),i(k−1,ℓ),i(k−1,ℓ−1)} · g⁻¹_{i(k,ℓ),i(k,ℓ−1),i(k−1,ℓ−1)}
/// with the g factors at the cell's top-left corner γ((k−1)/p, (ℓ−1)/q),
/// cells oriented by dt∧du, top edges run along increasing u, left edges
/// along increasing t, and indices wrapping periodically.
pub fn torus_hol(
    gerbe: &GerbeData,
    gamma: &TorusMapDisc,
    asg: &TorusGridAssignment,
    quad: &QuadratureSpec,
) -> Result<Complex64> {
    check_grid_assignment(gerbe, gamma, asg)?;
    let (p, q) = (asg.p() as i64, asg.q() as i64);
    let mut exponent = Complex64::new(0.0, 0.0);
    let mut gprod = Complex64::new(1.0, 0.0);
    for k in 1..=p {
        for l in 1..=q {
            let (t0, t1) = ((k - 1) as f64 / p as f64, k as f64 / p as f64);
            let (u0, u1) = ((l - 1) as f64 / q as f64, l as f64 / q as f64);
            let here = asg.id(k, l);
            let above = asg.id(k - 1, l);
            let left = asg.id(k, l - 1);
            let above_left = asg.id(k - 1, l - 1);

            let bidx = gerbe.patch_index(here)?;
            let b_form = &gerbe.b[bidx];
            let b_int = quad.integrate(t0, t1, |t| {
                quad.integrate(u0, u1, |u| {
                    let pt = gamma.point(t, u);
                    let vt = tangent_at(&pt, gamma.velocity(t, u, Axis::T));
                    let vu = tangent_at(&pt, gamma.velocity(t, u, Axis::U));
                    b_form.eval(&pt, &[vt, vu]).expect("B on torus map")[(0, 0)]
                })
            });

            let a_top = quad.integrate(u0, u1, |u| {
                let pt = gamma.point(t0, u);
                let vu = tangent_at(&pt, gamma.velocity(t0, u, Axis::U));
                gerbe.eval_a(above, here, &pt, &vu).expect("A on top edge")
            });
            let a_left = quad.integrate(t0, t1, |t| {
                let pt = gamma.point(t, u0);
                let vt = tangent_at(&pt, gamma.velocity(t, u0, Axis::T));
                gerbe.eval_a(here, left, &pt, &vt).expect("A on left edge")
            });
            exponent += Complex64::new(0.0, 1.0) * (b_int + a_top + a_left);

            let corner = gamma.point(t0, u0);
            gprod *= gerbe.eval_g(here, above, above_left, &corner)?
                / gerbe.eval_g(here, left, above_left, &corner)?;
        }
    }
    Ok(exponent.exp() * gprod)
}

/// The holonomy tower of a gerbe with 3-curvature H on torus maps: the base
/// holonomy plus the even-degree corrections
/// hol_{2k,2ℓ} = ((−1)ˡ/(k!·ℓ!))·i^{k+ℓ}·ω_u^∧k ∧ ω_t^∧ℓ · hol,
/// where ω_v(X, Y) = ∫∫ H(∂_v γ, X, Y) dt du. These satisfy the ladder
/// d(hol_{2k,2ℓ}) = −ι_𝐭(hol_{2k+2,2ℓ}) = −ι_𝐮(hol_{2k,2ℓ+2}).
#[derive(Clone)]
pub struct GerbeTorusHolonomy {
    pub gerbe: Arc<GerbeData>,
    pub h: ScalarForm,
    pub quad: QuadratureSpec,
}

impl GerbeTorusHolonomy {
    pub fn new(gerbe: &Arc<GerbeData>, h: &ThreeCurvature, quad: QuadratureSpec) -> Self {
        GerbeTorusHolonomy {
            gerbe: gerbe.clone(),
            h: h.h.clone(),
            quad,
        }
    }

    pub fn hol(&self, gamma: &TorusMapDisc, asg: &TorusGridAssignment) -> Result<Complex64> {
        torus_hol(&self.gerbe, gamma, asg, &self.quad)
    }

    /// The fiber-integrated contraction ω_axis(X, Y) = ∫∫ H(∂_axis, X, Y) dt du,
    /// a 2-form on the torus mapping space.
    pub fn fiber_2form(
        &self,
        gamma: &TorusMapDisc,
        axis: Axis,
        x: &TorusTangent,
        y: &TorusTangent,
    ) -> Complex64 {
        self.quad.integrate(0.0, 1.0, |t| {
            self.quad.integrate(0.0, 1.0, |u| {
                let pt = gamma.point(t, u);
                let vel = tangent_at(&pt, gamma.velocity(t, u, axis));
                let xv = tangent_at(&pt, x.at(t, u));
                let yv = tangent_at(&pt, y.at(t, u));
                self.h.eval(&pt, &[vel, xv, yv]).expect("H on torus map")[(0, 0)]
            })
        })
    }

    /// It(H)(X) = ∫∫ H(∂_t γ, ∂_u γ, X) dt du, the 1-form with
    /// d(hol) = i·It(H)·hol.
    pub fn it_h(&self, gamma: &TorusMapDisc, x: &TorusTangent) -> Complex64 {
        self.quad.integrate(0.0, 1.0, |t| {
            self.quad.integrate(0.0, 1.0, |u| {
                let pt = gamma.point(t, u);
                let vt = tangent_at(&pt, gamma.velocity(t, u, Axis::T));
                let vu = tangent_at(&pt, gamma.velocity(t, u, Axis::U));
                let xv = tangent_at(&pt, x.at(t, u));
                self.h.eval(&pt, &[vt, vu, xv]).expect("H on torus map")[(0, 0)]
            })
        })
    }

    /// hol_{2k,2ℓ} evaluated on 2k+2ℓ displacement fields.
    pub fn hol_2k2l(
        &self,
        gamma: &TorusMapDisc,
        asg: &TorusGridAssignment,
        k: usize,
        l: usize,
        xs: &[TorusTangent],
    ) -> Result<Complex64> {
        let n = 2 * k + 2 * l;
        if xs.len() != n {
            return Err(HolError::ArityMismatch {
                expected: n,
                got: xs.len(),
            });
        }
        let hol = self.hol(gamma, asg)?;
        if n == 0 {
            return Ok(hol);
        }
        // pairwise values of the two fiber 2-forms over the tangent tuple
        let mut w_u = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        let mut w_t = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for a in 0..n {
            for b in (a + 1)..n {
                if k > 0 {
                    let v = self.fiber_2form(gamma, Axis::U, &xs[a], &xs[b]);
                    w_u[a][b] = v;
                    w_u[b][a] = -v;
                }
                if l > 0 {
                    let v = self.fiber_2form(gamma, Axis::T, &xs[a], &xs[b]);
                    w_t[a][b] = v;
                    w_t[b][a] = -v;
                }
            }
        }
        // (ω_u^∧k ∧ ω_t^∧ℓ)(X₁,…,X_n) = Σ_σ sgn(σ)·∏ ω(X_σ(2i), X_σ(2i+1)) / 2^(k+ℓ)
        let mut wedge = Complex64::new(0.0, 0.0);
        for perm in (0..n).permutations(n) {
            let mut term = Complex64::new(perm_sign(&perm), 0.0);
            for i in 0..(k + l) {
                let w = if i < k { &w_u } else { &w_t };
                term *= w[perm[2 * i]][perm[2 * i + 1]];
            }
            wedge += term;
        }
        wedge /= 2f64.powi((k + l) as i32);

        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        let prefactor = Complex64::new(0.0, 1.0).powu((k + l) as u32) * sign
            / (factorial(k) * factorial(l));
        Ok(prefactor * wedge * hol)
    }

    /// hol_{2k,2ℓ} as a mapping-space form, for finite-difference d checks.
    pub fn hol_2k2l_form(&self, asg: &TorusGridAssignment, k: usize, l: usize) -> MsForm {
        let this = self.clone();
        let asg = asg.clone();
        MsForm::new(2 * k + 2 * l, 1, move |m, xs| {
            let gamma = m.as_torus()?;
            let xts = torus_tangents(xs)?;
            let v = this.hol_2k2l(gamma, &asg, k, l, &xts)?;
            Ok(CMat::from_element(1, 1, v))
        })
    }

    /// Σ_{k,ℓ} aᵏ·bˡ·hol_{2k,2ℓ} evaluated on the tuple (only the terms with
    /// 2k+2ℓ = len(xs) contribute); requires a + b = 1.
    #[allow(clippy::too_many_arguments)]
    pub fn chern(
        &self,
        gamma: &TorusMapDisc,
        asg: &TorusGridAssignment,
        a: f64,
        b: f64,
        xs: &[TorusTangent],
        k_max: usize,
        l_max: usize,
    ) -> Result<Complex64> {
        check_weights(a, b)?;
        if xs.len() % 2 != 0 {
            return Err(HolError::Invalid(
                "the character has only even-degree components".into(),
            ));
        }
        let half = xs.len() / 2;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..=half.min(k_max) {
            let l = half - k;
            if l > l_max {
                continue;
            }
            acc += a.powi(k as i32) * b.powi(l as i32) * self.hol_2k2l(gamma, asg, k, l, xs)?;
        }
        Ok(acc)
    }

    /// The character as a graded list of mapping-space forms.
    pub fn chern_form(
        &self,
        asg: &TorusGridAssignment,
        a: f64,
        b: f64,
        k_max: usize,
        l_max: usize,
    ) -> Result<EquivariantForm> {
        check_weights(a, b)?;
        let mut components = Vec::new();
        for k in 0..=k_max {
            for l in 0..=l_max {
                components.push((k, l, self.hol_2k2l_form(asg, k, l)));
            }
        }
        Ok(EquivariantForm { a, b, components })
    }
}

/// A sum Σ aᵏ·bˡ·ω_{k,ℓ} of mapping-space forms, the (k,ℓ) component having
/// degree 2k+2ℓ; evaluation on a tuple picks the matching-degree components.
pub struct EquivariantForm {
    pub a: f64,
    pub b: f64,
    pub components: Vec<(usize, usize, MsForm)>,
}

impl EquivariantForm {
    pub fn eval(&self, m: &MapDisc, xs: &[MsTangent]) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, l, form) in &self.components {
            if form.degree != 2 * k + 2 * l {
                return Err(HolError::Invalid(
                    "component degree does not match its bidegree".into(),
                ));
            }
            if form.degree == xs.len() {
                acc += self.a.powi(*k as i32) * self.b.powi(*l as i32)
                    * form.eval(m, xs)?[(0, 0)];
            }
        }
        Ok(acc)
    }
}

fn check_weights(a: f64, b: f64) -> Result<()> {
    if (a + b - 1.0).abs() > 1e-12 {
        return Err(HolError::Invalid("weights must satisfy a + b = 1".into()));
    }
    Ok(())
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn perm_sign(perm: &[usize]) -> f64 {
    let mut sign = 1.0;
    for i in 0..perm.len() {
        for j in (i + 1)..perm.len() {
            if perm[i] > perm[j] {
                sign = -sign;
            }
        }
    }
    sign
}

fn torus_tangents(xs: &[MsTangent]) -> Result<Vec<TorusTangent>> {
    xs.iter()
        .map(|x| match x {
            MsTangent::Torus(t) => Ok(t.clone()),
            _ => Err(HolError::Invalid("torus tangent expected".into())),
        })
        .collect()
}

/// A reparametrization of the torus by the unimodular matrix
/// [[a, b], [−1, 1]] with a + b = 1, acting on maps by precomposition:
/// (Φγ)(t, u) = γ(a·t + b·u, −t + u). Only integral matrices descend to the
/// quotient torus, so torus-map reparametrization additionally requires a and
/// b to be integers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Sl2Reparam {
    pub a: f64,
    pub b: f64,
}

impl Sl2Reparam {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        check_weights(a, b)?;
        Ok(Sl2Reparam { a, b })
    }

    /// The defining matrix [[a, b], [−1, 1]]; its determinant is a + b = 1.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.a, self.b], [-1.0, 1.0]]
    }

    /// The inverse matrix [[1, −b], [1, a]].
    pub fn inverse_matrix(&self) -> [[f64; 2]; 2] {
        [[1.0, -self.b], [1.0, self.a]]
    }
}

/// γ ∘ φ for a 2×2 integral matrix φ acting on (t, u), resampled on the same
/// grid; windings transform by the transpose of φ.
pub fn reparametrize_by(gamma: &TorusMapDisc, m: &[[f64; 2]; 2]) -> Result<TorusMapDisc> {
    for row in m {
        for &x in row {
            if (x - x.round()).abs() > 1e-9 {
                return Err(HolError::Resolution(
                    "only integral matrices reparametrize torus maps".into(),
                ));
            }
        }
    }
    let winding_t = &gamma.winding_t * m[0][0] + &gamma.winding_u * m[1][0];
    let winding_u = &gamma.winding_t * m[0][1] + &gamma.winding_u * m[1][1];
    let mm = *m;
    TorusMapDisc::from_fn(
        gamma.manifold.clone(),
        gamma.chart,
        gamma.p(),
        gamma.q(),
        winding_t,
        winding_u,
        |t, u| {
            gamma
                .point(mm[0][0] * t + mm[0][1] * u, mm[1][0] * t + mm[1][1] * u)
                .coords
        },
    )
}

/// Precomposition with the forward matrix: `(t, u) ↦ γ(at + bu, -t + u)`.
///
/// This realizes the *inverse* of the induced weight-change map on torus
/// maps: the weight-change map itself precomposes with the inverse matrix,
/// which is what makes its pushforwards send the rotation field in `t` to
/// the sum of both rotation fields.
pub fn sl2_reparametrize(gamma: &TorusMapDisc, r: &Sl2Reparam) -> Result<TorusMapDisc> {
    reparametrize_by(gamma, &r.matrix())
}

/// Precomposition with the inverse matrix: `(t, u) ↦ γ(t - bu, t + au)`.
pub fn sl2_inverse_reparametrize(gamma: &TorusMapDisc, r: &Sl2Reparam) -> Result<TorusMapDisc> {
    reparametrize_by(gamma, &r.inverse_matrix())
}

/// Pushforward of a displacement field under precomposition with φ:
/// (Φ_* X)(t, u) = X(φ(t, u)), resampled on the tangent's own grid.
pub fn pushforward_tangent(x: &TorusTangent, m: &[[f64; 2]; 2]) -> TorusTangent {
    let dim = x.grids.len();
    let (p, q) = (x.grids[0].nrows(), x.grids[0].ncols());
    let mm = *m;
    TorusTangent::from_fn(dim, p, q, |t, u| {
        x.at(mm[0][0] * t + mm[0][1] * u, mm[1][0] * t + mm[1][1] * u)
    })
}

/// The torus map Γ(γ)(t, u) = γ(t)(u) associated to a loop of loops: the
/// outer loop is sampled by the list of inner loops (node j is the loop
/// t = j/P), all of equal resolution, chart, and winding; `winding_t` is the
/// winding of the outer family.
pub fn adjunction_gamma(loops: &[LoopDisc], winding_t: RVec) -> Result<TorusMapDisc> {
    if loops.is_empty() {
        return Err(HolError::Invalid("need at least one inner loop".into()));
    }
    let q = loops[0].n();
    let dim = loops[0].dim();
    for ld in loops {
        if ld.n() != q || ld.dim() != dim || ld.chart != loops[0].chart {
            return Err(HolError::Resolution(
                "inner loops must share resolution, chart, and dimension".into(),
            ));
        }
        if (&ld.winding - &loops[0].winding).amax() > 0.0 {
            return Err(HolError::Invalid(
                "inner loops must share their winding".into(),
            ));
        }
    }
    let p = loops.len();
    let mut grids = vec![crate::geometry::RMat::zeros(p, q); dim];
    for (j, ld) in loops.iter().enumerate() {
        for l in 0..q {
            // subtract the outer winding's linear drift so each row lifts
            // continuously; the declared winding restores it
            for c in 0..dim {
                grids[c][(j, l)] = ld.nodes[l][c];
            }
        }
    }
    TorusMapDisc::new(
        loops[0].manifold.clone(),
        loops[0].chart,
        grids,
        winding_t,
        loops[0].winding.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gerbe::{gerbe_catalog, three_curvature, transgress_line_bundle};
    use crate::geometry::{Manifold, MatrixForm};
    use crate::mapping::{fd_exterior_derivative_ms, random_torus_tangent};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn quad() -> QuadratureSpec {
        QuadratureSpec {
            order: 4,
            subdivisions: 16,
        }
    }

    fn t_field(gamma: &TorusMapDisc) -> TorusTangent {
        TorusTangent::from_fn(gamma.dim(), gamma.p(), gamma.q(), |t, u| {
            gamma.velocity(t, u, Axis::T)
        })
    }

    fn u_field(gamma: &TorusMapDisc) -> TorusTangent {
        TorusTangent::from_fn(gamma.dim(), gamma.p(), gamma.q(), |t, u| {
            gamma.velocity(t, u, Axis::U)
        })
    }

    /// A smooth torus map into T³ with no winding, staying near the center of
    /// the chart; suitable for single-patch gerbes.
    fn wobble_map() -> TorusMapDisc {
        let m = Manifold::torus(3);
        TorusMapDisc::from_fn(m, 0, 24, 24, RVec::zeros(3), RVec::zeros(3), |t, u| {
            RVec::from_vec(vec![
                0.4 + 0.15 * (2.0 * PI * t).sin() + 0.05 * (2.0 * PI * u).cos(),
                0.5 + 0.2 * (2.0 * PI * u).sin() + 0.05 * (2.0 * PI * (t + u)).cos(),
                0.3 + 0.1 * (2.0 * PI * t).cos() * (2.0 * PI * u).sin(),
            ])
        })
        .unwrap()
    }

    /// Flux-gerbe slice at height z₀: γ(t, u) = (t + 0.08, u, z₀), winding
    /// once in x along t and once in y along u.
    fn z_slice(z0: f64) -> TorusMapDisc {
        let m = Manifold::torus(3);
        TorusMapDisc::from_fn(
            m,
            0,
            24,
            24,
            RVec::from_vec(vec![1.0, 0.0, 0.0]),
            RVec::from_vec(vec![0.0, 1.0, 0.0]),
            |t, u| RVec::from_vec(vec![t + 0.08, u, z0]),
        )
        .unwrap()
    }

    /// Patch ids for [`z_slice`] on the 3×3 grid: the x-columns of the slice
    /// land in the intervals indexed by [0, 1, 1], and the z height selects
    /// the α = 0 (z₀ = 0.2) or α = 1 interval.
    fn z_slice_assignment(alpha: usize) -> TorusGridAssignment {
        let cols = [0usize, 1, 1];
        let ids = (0..3)
            .map(|k| (0..3).map(|_| 2 * alpha + cols[k]).collect())
            .collect();
        TorusGridAssignment::new(ids).unwrap()
    }

    #[test]
    fn trivial_gerbe_torus_hol_is_exp_b_integral() {
        let gerbe = gerbe_catalog("trivial(0.7)").unwrap();
        let gamma = wobble_map();
        let asg = TorusGridAssignment::new(vec![vec![0, 0], vec![0, 0]]).unwrap();
        let hol = torus_hol(&gerbe, &gamma, &asg, &quad()).unwrap();

        // independent direct quadrature of ∫∫ B(∂_t, ∂_u) with the closed-form
        // integrand c·sin(2πz)·(∂_t x·∂_u y − ∂_u x·∂_t y)
        let q = quad();
        let int = q.integrate(0.0, 1.0, |t| {
            q.integrate(0.0, 1.0, |u| {
                let p = gamma.point(t, u);
                let vt = gamma.velocity(t, u, Axis::T);
                let vu = gamma.velocity(t, u, Axis::U);
                c(
                    0.7 * (2.0 * PI * p.coords[2]).sin() * (vt[0] * vu[1] - vu[0] * vt[1]),
                    0.0,
                )
            })
        });
        let expected = (c(0.0, 1.0) * int).exp();
        assert!((hol - expected).norm() < 1e-9, "got {hol}, want {expected}");
        assert!((hol.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flux_z_slice_value_and_subdivision_invariance() {
        for (kf, z0, alpha) in [(1, 0.2, 0), (2, 0.2, 0), (1, 0.55, 1)] {
            let gerbe = gerbe_catalog(&format!("t3_flux({kf})")).unwrap();
            let gamma = z_slice(z0);
            let asg = z_slice_assignment(alpha);
            let hol = torus_hol(&gerbe, &gamma, &asg, &quad()).unwrap();
            let expected = c(0.0, 2.0 * PI * kf as f64 * z0).exp();
            assert!(
                (hol - expected).norm() < 1e-6,
                "k={kf} z0={z0}: got {hol}, want {expected}"
            );

            // refining the grid in either direction leaves the value unchanged
            for (rt, ru) in [(2, 1), (1, 2), (2, 3)] {
                let fine = torus_hol(&gerbe, &gamma, &asg.refine(rt, ru), &quad()).unwrap();
                assert!(
                    (hol - fine).norm() < 1e-8,
                    "refine ({rt},{ru}): {hol} vs {fine}"
                );
            }
        }
    }

    #[test]
    fn torus_hol_matches_surface_hol_on_triangulated_grid() {
        use crate::surface::{surface_hol, torus_9v, torus_9v_map, SurfaceChartAssignment};
        let gerbe = gerbe_catalog("t3_flux(1)").unwrap();
        let z0 = 0.2;
        let gamma = z_slice(z0);
        let asg = z_slice_assignment(0);
        let hol = torus_hol(&gerbe, &gamma, &asg, &quad()).unwrap();

        // the same map over the 9-vertex triangulated torus; the first global
        // coordinate plays t, the second u
        let s = torus_9v();
        let m = Manifold::torus(3);
        let sigma = torus_9v_map(m, 0, move |u1, u2| {
            RVec::from_vec(vec![u1 + 0.08, u2, z0])
        });
        let cols = [0usize, 1, 1];
        let vertex: Vec<usize> = (0..9).map(|v| cols[v / 3]).collect();
        let mut edge = vec![0usize; 27];
        for a in 0..3 {
            for b in 0..3 {
                edge[3 * a + b] = cols[a]; // horizontal (along t): spans columns a, a+1 — seam
                edge[9 + 3 * a + b] = cols[a]; // vertical (along u): stays in column a
                edge[18 + 3 * a + b] = cols[a]; // diagonal: spans like horizontal
            }
        }
        // seam-crossing edges: pick a patch containing both columns' images
        for b in 0..3 {
            edge[3 * 2 + b] = 1; // h(2,b): x ∈ [0.747, 1.08] ⊂ X₁
            edge[18 + 3 * 2 + b] = 1;
        }
        let face: Vec<usize> = (0..18).map(|f| cols[(f / 2) / 3]).collect();
        let assign = SurfaceChartAssignment { vertex, edge, face };
        let shol = surface_hol(&gerbe, &s, &sigma, &assign, &quad()).unwrap();
        assert!(
            (hol - shol).norm() < 1e-6,
            "grid {hol} vs triangulated {shol}"
        );
    }

    #[test]
    fn higher_holonomies_vanish_for_flat_gerbe() {
        // single patch, constant B, so H = dB = 0
        let m = Manifold::torus(3);
        let patch = crate::bundle::Patch {
            id: 0,
            contains: Arc::new(|_: &ChartPoint| true),
        };
        let b = MatrixForm::from_coefficients(m.clone(), 0, 2, 1, |_, idx: &[usize]| {
            let v = match idx {
                [0, 1] => 0.4,
                [1, 2] => -0.25,
                _ => 0.0,
            };
            CMat::from_element(1, 1, c(v, 0.0))
        });
        let h = MatrixForm::zero(m.clone(), 0, 3, 1);
        let gerbe = Arc::new(
            GerbeData::new(
                m,
                vec![patch],
                Default::default(),
                Default::default(),
                vec![b],
                Some(h),
            )
            .unwrap(),
        );
        let hcurv = three_curvature(&gerbe, &[], 1e-8).unwrap();
        let tower = GerbeTorusHolonomy::new(&gerbe, &hcurv, quad());
        let gamma = wobble_map();
        let asg = TorusGridAssignment::new(vec![vec![0]]).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<TorusTangent> = (0..4)
            .map(|_| random_torus_tangent(&mut rng, 24, 24, 3, 2))
            .collect();
        let h20 = tower.hol_2k2l(&gamma, &asg, 1, 0, &xs[..2]).unwrap();
        let h02 = tower.hol_2k2l(&gamma, &asg, 0, 1, &xs[..2]).unwrap();
        let h11 = tower.hol_2k2l(&gamma, &asg, 1, 1, &xs).unwrap();
        assert!(h20.norm() < 1e-12 && h02.norm() < 1e-12 && h11.norm() < 1e-12);

        // and (k, ℓ) = (0, 0) is the plain holonomy
        let h00 = tower.hol_2k2l(&gamma, &asg, 0, 0, &[]).unwrap();
        let hol = tower.hol(&gamma, &asg).unwrap();
        assert!((h00 - hol).norm() < 1e-14);
    }

    #[test]
    fn hol_20_matches_direct_quadrature_oracle() {
        let gerbe = gerbe_catalog("t3_flux(1)").unwrap();
        let hcurv = three_curvature(&gerbe, &[], 1e-6).unwrap();
        let tower = GerbeTorusHolonomy::new(&gerbe, &hcurv, quad());
        let gamma = z_slice(0.2);
        let asg = z_slice_assignment(0);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_torus_tangent(&mut rng, 24, 24, 3, 2);
        let y = random_torus_tangent(&mut rng, 24, 24, 3, 2);
        let h20 = tower.hol_2k2l(&gamma, &asg, 1, 0, &[x.clone(), y.clone()]).unwrap();

        // ∂_u γ = e_y; H = 2π·dx∧dy∧dz gives H(e_y, X, Y) = 2π(X_z·Y_x − X_x·Y_z)
        let q = quad();
        let omega = q.integrate(0.0, 1.0, |t| {
            q.integrate(0.0, 1.0, |u| {
                let xv = x.at(t, u);
                let yv = y.at(t, u);
                c(2.0 * PI * (xv[2] * yv[0] - xv[0] * yv[2]), 0.0)
            })
        });
        let hol = tower.hol(&gamma, &asg).unwrap();
        let expected = c(0.0, 1.0) * omega * hol;
        assert!(
            (h20 - expected).norm() < 1e-6,
            "got {h20}, want {expected}"
        );
    }

    #[test]
    fn ladder_and_curvature_law() {
        let gerbe = gerbe_catalog("t3_flux(1)").unwrap();
        let hcurv = three_curvature(&gerbe, &[], 1e-6).unwrap();
        let lite = QuadratureSpec {
            order: 4,
            subdivisions: 8,
        };
        let tower = GerbeTorusHolonomy::new(&gerbe, &hcurv, lite);
        let gamma = z_slice(0.55);
        let asg = z_slice_assignment(1);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_torus_tangent(&mut rng, 24, 24, 3, 2);
        let form = tower.hol_2k2l_form(&asg, 0, 0);
        let md = MapDisc::Torus(gamma.clone());
        let d_val = fd_exterior_derivative_ms(&form, &md, &[MsTangent::Torus(x.clone())], 1e-3, 2)
            .unwrap()[(0, 0)];

        let tf = t_field(&gamma);
        let uf = u_field(&gamma);
        let contraction_t = -tower
            .hol_2k2l(&gamma, &asg, 1, 0, &[tf.clone(), x.clone()])
            .unwrap();
        let contraction_u = -tower
            .hol_2k2l(&gamma, &asg, 0, 1, &[uf.clone(), x.clone()])
            .unwrap();
        let hol = tower.hol(&gamma, &asg).unwrap();
        let law = c(0.0, 1.0) * tower.it_h(&gamma, &x) * hol;

        assert!(
            (d_val - contraction_t).norm() < 1e-4,
            "d hol {d_val} vs −ι_t hol₂₀ {contraction_t}"
        );
        assert!(
            (d_val - contraction_u).norm() < 1e-4,
            "d hol {d_val} vs −ι_u hol₀₂ {contraction_u}"
        );
        assert!(
            (d_val - law).norm() < 1e-4,
            "d hol {d_val} vs i·It(H)·hol {law}"
        );
    }

    #[test]
    fn chern_horizontality_and_fd_closedness() {
        let gerbe = gerbe_catalog("t3_flux(1)").unwrap();
        let hcurv = three_curvature(&gerbe, &[], 1e-6).unwrap();
        let lite = QuadratureSpec {
            order: 4,
            subdivisions: 8,
        };
        let tower = GerbeTorusHolonomy::new(&gerbe, &hcurv, lite);
        let gamma = z_slice(0.55);
        let asg = z_slice_assignment(1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_torus_tangent(&mut rng, 24, 24, 3, 2);
        let tf = t_field(&gamma);
        let uf = u_field(&gamma);

        // exact-formula horizontality ι_{−b𝐭+a𝐮}(Ch) = 0 on degree-2 terms
        for (a, b) in [(1.0, 0.0), (0.5, 0.5)] {
            let w = TorusTangent::from_fn(3, 24, 24, |t, u| {
                tf.at(t, u) * (-b) + uf.at(t, u) * a
            });
            let val = tower
                .chern(&gamma, &asg, a, b, &[w, x.clone()], 2, 2)
                .unwrap();
            assert!(val.norm() < 1e-8, "(a,b)=({a},{b}) horizontality: {val}");
        }

        // FD (d + ι_𝐭 + ι_𝐮)Ch on a 1-tuple: d of the degree-0 part plus the
        // contractions of the degree-2 part
        let (a, b) = (0.5, 0.5);
        let ch = tower.chern_form(&asg, a, b, 1, 1).unwrap();
        let form00 = tower.hol_2k2l_form(&asg, 0, 0);
        let md = MapDisc::Torus(gamma.clone());
        let d0 = fd_exterior_derivative_ms(&form00, &md, &[MsTangent::Torus(x.clone())], 1e-3, 2)
            .unwrap()[(0, 0)];
        let it = ch
            .eval(&md, &[MsTangent::Torus(tf.clone()), MsTangent::Torus(x.clone())])
            .unwrap();
        let iu = ch
            .eval(&md, &[MsTangent::Torus(uf.clone()), MsTangent::Torus(x.clone())])
            .unwrap();
        let residual = d0 + it + iu;
        assert!(residual.norm() < 1e-4, "D_T Ch residual: {residual}");
    }

    #[test]
    fn sl2_roundtrip_and_velocity_pushforward() {
        let gamma = wobble_map();
        let r = Sl2Reparam::new(2.0, -1.0).unwrap();
        let fwd = sl2_reparametrize(&gamma, &r).unwrap();
        let back = sl2_inverse_reparametrize(&fwd, &r).unwrap();
        for c_ in 0..3 {
            let diff = (&back.grids[c_] - &gamma.grids[c_]).amax();
            assert!(diff < 1e-10, "roundtrip drift {diff} in coordinate {c_}");
        }

        // chain rule: the t-velocity of Φ⁻¹γ is (∂_t + ∂_u)γ at φ⁻¹(t, u),
        // i.e. the pushforward (Φ⁻¹)_*(𝐭) = 𝐭 + 𝐮
        let inv = sl2_inverse_reparametrize(&gamma, &r).unwrap();
        let minv = r.inverse_matrix();
        for (t, u) in [(0.13, 0.41), (0.7, 0.05), (0.32, 0.88)] {
            let lhs = inv.velocity(t, u, Axis::T);
            let (s, v) = (
                minv[0][0] * t + minv[0][1] * u,
                minv[1][0] * t + minv[1][1] * u,
            );
            let rhs = gamma.velocity(s, v, Axis::T) + gamma.velocity(s, v, Axis::U);
            assert!((lhs - rhs).amax() < 1e-6);
        }
    }

    #[test]
    fn sl2_pullback_of_character() {
        // (Φ_{a,b})*Ch(𝒢,1,0) = Ch(𝒢,a,b) on a single-patch gerbe with
        // nonvanishing 3-curvature, termwise in degree ≤ 4
        let gerbe = gerbe_catalog("trivial(0.7)").unwrap();
        let hcurv = three_curvature(&gerbe, &[], 1e-6).unwrap();
        let lite = QuadratureSpec {
            order: 4,
            subdivisions: 8,
        };
        let tower = GerbeTorusHolonomy::new(&gerbe, &hcurv, lite);
        let gamma = wobble_map();
        let asg = TorusGridAssignment::new(vec![vec![0]]).unwrap();
        // the induced mapping-space map Φ_{a,b} is precomposition with the
        // inverse matrix: its pushforwards then satisfy (Φ⁻¹)_*(𝐭) = 𝐭 + 𝐮
        let r = Sl2Reparam::new(2.0, -1.0).unwrap();
        let phi_gamma = sl2_inverse_reparametrize(&gamma, &r).unwrap();
        let m = r.inverse_matrix();

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<TorusTangent> = (0..4)
            .map(|_| random_torus_tangent(&mut rng, 24, 24, 3, 1))
            .collect();
        for n in [0usize, 2, 4] {
            let pushed: Vec<TorusTangent> =
                xs[..n].iter().map(|x| pushforward_tangent(x, &m)).collect();
            let lhs = tower
                .chern(&phi_gamma, &asg, 1.0, 0.0, &pushed, 2, 2)
                .unwrap();
            let rhs = tower.chern(&gamma, &asg, r.a, r.b, &xs[..n], 2, 2).unwrap();
            assert!(
                (lhs - rhs).norm() < 1e-5,
                "degree {n}: pulled-back {lhs} vs direct {rhs}"
            );
        }
    }

    #[test]
    fn adjunction_builds_the_expected_grid() {
        let m = Manifold::torus(3);
        // constant outer loop: every inner loop identical
        let inner = LoopDisc::from_fn(
            m.clone(),
            0,
            24,
            RVec::from_vec(vec![0.0, 0.0, 1.0]),
            |u| RVec::from_vec(vec![0.5, 0.25, u]),
        )
        .unwrap();
        let loops: Vec<LoopDisc> = (0..16).map(|_| inner.clone()).collect();
        let torus = adjunction_gamma(&loops, RVec::zeros(3)).unwrap();
        for (t, u) in [(0.3, 0.7), (0.9, 0.1)] {
            let p = torus.point(t, u);
            assert!((p.coords[0] - 0.5).abs() < 1e-10);
            assert!((p.coords[1] - 0.25).abs() < 1e-10);
            assert!((p.coords[2] - u).rem_euclid(1.0).min((u - p.coords[2]).rem_euclid(1.0)) < 1e-10);
        }

        // ragged resolutions are rejected
        let short = LoopDisc::from_fn(
            m,
            0,
            32,
            RVec::from_vec(vec![0.0, 0.0, 1.0]),
            |u| RVec::from_vec(vec![0.5, 0.25, u]),
        )
        .unwrap();
        let mut ragged = loops;
        ragged[3] = short;
        assert!(adjunction_gamma(&ragged, RVec::zeros(3)).is_err());
    }

    #[test]
    fn adjunction_compatibility_with_transgressed_bundle() {
        // Γ(γ)(t, u) = γ(t)(u) for the winding family γ_t(u) = (0.5, t, u);
        // the transgressed line-bundle holonomy equals the torus holonomy,
        // and its degree-2 correction equals hol_{2,0} pulled back through Γ.
        let gerbe = gerbe_catalog("t3_flux(1)").unwrap();
        let hcurv = three_curvature(&gerbe, &[], 1e-6).unwrap();
        let bundle = transgress_line_bundle(&gerbe, &hcurv, quad());
        let tower = GerbeTorusHolonomy::new(&gerbe, &hcurv, quad());

        let m = Manifold::torus(3);
        let loops: Vec<LoopDisc> = (0..16)
            .map(|j| {
                let t = j as f64 / 16.0;
                LoopDisc::from_fn(
                    m.clone(),
                    0,
                    24,
                    RVec::from_vec(vec![0.0, 0.0, 1.0]),
                    move |u| RVec::from_vec(vec![0.5, t, u]),
                )
                .unwrap()
            })
            .collect();
        let torus = adjunction_gamma(&loops, RVec::from_vec(vec![0.0, 1.0, 0.0])).unwrap();

        // multi-index (z ∈ Z₀ then Z₁) for the bundle; matching torus grid
        let hol_bundle = bundle.loop_space_hol0(&[vec![0, 2]], &torus).unwrap();
        let asg = TorusGridAssignment::new(vec![vec![0, 2], vec![0, 2]]).unwrap();
        let hol_torus = tower.hol(&torus, &asg).unwrap();
        assert!(
            (hol_bundle - hol_torus).norm() < 1e-5,
            "loop-space {hol_bundle} vs torus {hol_torus}"
        );

        // degree 2: for a rank-1 bundle hol₂(X, Y) = ∫ R̂(X_t, Y_t) dt · hol₀
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = random_torus_tangent(&mut rng, 16, 24, 3, 2);
        let y = random_torus_tangent(&mut rng, 16, 24, 3, 2);
        let q = quad();
        let int = q.integrate(0.0, 1.0, |t| {
            let ld = torus.slice_u(t).unwrap();
            let xt = crate::mapping::LoopTangent::from_fn(24, |u| x.at(t, u));
            let yt = crate::mapping::LoopTangent::from_fn(24, |u| y.at(t, u));
            bundle.hat_r(&ld, &xt, &yt).unwrap()
        });
        let hol2_bundle = int * hol_bundle;
        let hol2_torus = tower
            .hol_2k2l(&torus, &asg, 1, 0, &[x.clone(), y.clone()])
            .unwrap();
        assert!(
            (hol2_bundle - hol2_torus).norm() < 1e-4,
            "bundle {hol2_bundle} vs torus {hol2_torus}"
        );
    }

    #[test]
    fn composite_reparametrized_adjunction_matches_bundle_character() {
        // (Φ⁻¹_{a,b} ∘ Γ)* Ch(𝒢,a,b) agrees with the character of the
        // transgressed bundle, degree ≤ 2, on a single-patch gerbe.
        let gerbe = gerbe_catalog("trivial(0.7)").unwrap();
        let hcurv = three_curvature(&gerbe, &[], 1e-6).unwrap();
        let bundle = transgress_line_bundle(&gerbe, &hcurv, quad());
        let lite = QuadratureSpec {
            order: 4,
            subdivisions: 8,
        };
        let tower = GerbeTorusHolonomy::new(&gerbe, &hcurv, lite);

        let m = Manifold::torus(3);
        let loops: Vec<LoopDisc> = (0..24)
            .map(|j| {
                let t = j as f64 / 24.0;
                LoopDisc::from_fn(m.clone(), 0, 24, RVec::zeros(3), move |u| {
                    RVec::from_vec(vec![
                        0.4 + 0.15 * (2.0 * PI * t).sin() + 0.05 * (2.0 * PI * u).cos(),
                        0.5 + 0.2 * (2.0 * PI * u).sin(),
                        0.3 + 0.1 * (2.0 * PI * (t + u)).cos(),
                    ])
                })
                .unwrap()
            })
            .collect();
        let torus = adjunction_gamma(&loops, RVec::zeros(3)).unwrap();
        let r = Sl2Reparam::new(2.0, -1.0).unwrap();
        // Φ⁻¹_{a,b} precomposes with the forward matrix, so the composite
        // map sends γ to Γ(γ)∘φ_{a,b} and tangents to X∘φ_{a,b}
        let composite = sl2_reparametrize(&torus, &r).unwrap();
        let mfwd = r.matrix();
        let asg = TorusGridAssignment::new(vec![vec![0]]).unwrap();

        // degree 0: both characters reduce to the holonomies
        let ch0 = tower.chern(&composite, &asg, r.a, r.b, &[], 2, 2).unwrap();
        let hol_bundle = bundle.loop_space_hol0(&[vec![0]], &torus).unwrap();
        assert!(
            (ch0 - hol_bundle).norm() < 1e-4,
            "degree 0: {ch0} vs {hol_bundle}"
        );

        // degree 2
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let x = random_torus_tangent(&mut rng, 24, 24, 3, 1);
        let y = random_torus_tangent(&mut rng, 24, 24, 3, 1);
        let pushed: Vec<TorusTangent> = [&x, &y]
            .iter()
            .map(|v| pushforward_tangent(v, &mfwd))
            .collect();
        let lhs = tower
            .chern(&composite, &asg, r.a, r.b, &pushed, 2, 2)
            .unwrap();
        let q = quad();
        let int = q.integrate(0.0, 1.0, |t| {
            let ld = torus.slice_u(t).unwrap();
            let xt = crate::mapping::LoopTangent::from_fn(24, |u| x.at(t, u));
            let yt = crate::mapping::LoopTangent::from_fn(24, |u| y.at(t, u));
            bundle.hat_r(&ld, &xt, &yt).unwrap()
        });
        let rhs = int * hol_bundle;
        assert!((lhs - rhs).norm() < 1e-4, "degree 2: {lhs} vs {rhs}");
    }

    #[test]
    fn membership_is_enforced() {
        let gerbe = gerbe_catalog("t3_flux(1)").unwrap();
        let gamma = z_slice(0.2);
        // α = 1 patches do not contain z = 0.2
        let asg = z_slice_assignment(1);
        match torus_hol(&gerbe, &gamma, &asg, &quad()) {
            Err(HolError::Membership(_)) => {}
            other => panic!("expected a membership error, got {other:?}"),
        }
    }
}
