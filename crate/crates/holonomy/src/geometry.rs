//! Charts, points, tangent vectors, differential forms, and simplex
//! quadrature — the substrate every other module evaluates against.
//!
//! Manifolds are presented as explicit chart atlases; forms are multilinear
//! antisymmetric evaluators on tangent tuples with optional per-chart
//! representatives. All form values are complex (scalars as 1×1 matrices
//! internally where convenient); real forms are embedded as complex.

use crate::error::{HolError, Result};
use crate::numerics::{self, CMat};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::Arc;

pub type RVec = DVector<f64>;
pub type RMat = DMatrix<f64>;

/// A point given in the coordinates of one chart of a manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub chart: usize,
    pub coords: RVec,
}

impl ChartPoint {
    pub fn new(chart: usize, coords: &[f64]) -> Self {
        ChartPoint {
            chart,
            coords: RVec::from_row_slice(coords),
        }
    }
}

/// A tangent vector at a chart point, in the same chart coordinates.
#[derive(Debug, Clone)]
pub struct TangentVec {
    pub base: ChartPoint,
    pub components: RVec,
}

impl TangentVec {
    pub fn new(base: ChartPoint, components: &[f64]) -> Self {
        TangentVec {
            base,
            components: RVec::from_row_slice(components),
        }
    }
}

type TransitionMap = Arc<dyn Fn(&RVec) -> RVec + Send + Sync>;
type TransitionJac = Arc<dyn Fn(&RVec) -> RMat + Send + Sync>;

/// A coordinate change between two charts, with its Jacobian.
#[derive(Clone)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub map: TransitionMap,
    pub jacobian: TransitionJac,
}

/// An atlas presentation of one of the built-in test manifolds.
pub struct Manifold {
    pub name: String,
    pub dim: usize,
    pub chart_names: Vec<String>,
    pub transitions: Vec<Transition>,
    /// true for flat tori: a single chart whose coordinates are understood
    /// modulo 1 (points may carry unwrapped representatives).
    pub periodic: bool,
}

impl Manifold {
    pub fn euclidean(d: usize) -> Arc<Self> {
        Arc::new(Manifold {
            name: format!("R{d}"),
            dim: d,
            chart_names: vec!["e".into()],
            transitions: vec![],
            periodic: false,
        })
    }

    pub fn torus(d: usize) -> Arc<Self> {
        Arc::new(Manifold {
            name: format!("T{d}"),
            dim: d,
            chart_names: vec!["periodic".into()],
            transitions: vec![],
            periodic: true,
        })
    }

    /// Sphere S^d (d = 2, 3) with two stereographic charts: chart 0 projects
    /// from the north pole (covers everything but the north pole), chart 1
    /// from the south pole. The transition either way is the inversion
    /// x ↦ x/|x|².
    pub fn sphere(d: usize) -> Arc<Self> {
        let inv: TransitionMap = Arc::new(|x: &RVec| {
            let r2 = x.norm_squared();
            x / r2
        });
        let inv_jac: TransitionJac = Arc::new(|x: &RVec| {
            let d = x.len();
            let r2 = x.norm_squared();
            let mut j = RMat::identity(d, d) / r2;
            for a in 0..d {
                for b in 0..d {
                    j[(a, b)] -= 2.0 * x[a] * x[b] / (r2 * r2);
                }
            }
            j
        });
        Arc::new(Manifold {
            name: format!("S{d}"),
            dim: d,
            chart_names: vec!["north_proj".into(), "south_proj".into()],
            transitions: vec![
                Transition {
                    from: 0,
                    to: 1,
                    map: inv.clone(),
                    jacobian: inv_jac.clone(),
                },
                Transition {
                    from: 1,
                    to: 0,
                    map: inv,
                    jacobian: inv_jac,
                },
            ],
            periodic: false,
        })
    }

    pub fn transition(&self, from: usize, to: usize) -> Option<&Transition> {
        self.transitions
            .iter()
            .find(|t| t.from == from && t.to == to)
    }

    /// Sampled check that chart transitions are mutually inverse.
    pub fn check_transitions(&self, samples: &[RVec], tol: f64) -> Result<()> {
        for t in &self.transitions {
            if let Some(back) = self.transition(t.to, t.from) {
                for x in samples {
                    let y = (t.map)(x);
                    let x2 = (back.map)(&y);
                    if (x - &x2).amax() > tol {
                        return Err(HolError::Numerical(format!(
                            "transition {}->{} not inverted within {tol}",
                            t.from, t.to
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Look up a built-in manifold by string id: "R2", "R3", "T2", "T3", "S2", "S3".
pub fn manifold_catalog(id: &str) -> Result<Arc<Manifold>> {
    let (kind, dim) = id.split_at(1);
    let d: usize = dim
        .parse()
        .map_err(|_| HolError::UnknownId(id.to_string()))?;
    match kind {
        "R" => Ok(Manifold::euclidean(d)),
        "T" => Ok(Manifold::torus(d)),
        "S" if d == 2 || d == 3 => Ok(Manifold::sphere(d)),
        _ => Err(HolError::UnknownId(id.to_string())),
    }
}

type FormEval = Arc<dyn Fn(&ChartPoint, &[TangentVec]) -> CMat + Send + Sync>;

/// A degree-k differential form valued in ℂ (`value_dim` 1) or gl(n, ℂ),
/// with one evaluator per chart it is natively defined in. Evaluation at a
/// point of another chart pushes the point and tangents through the atlas
/// transition first.
#[derive(Clone)]
pub struct MatrixForm {
    pub degree: usize,
    pub value_dim: usize,
    manifold: Arc<Manifold>,
    reps: HashMap<usize, FormEval>,
}

/// Scalar-valued forms are the 1×1 case of [`MatrixForm`].
pub type ScalarForm = MatrixForm;

impl MatrixForm {
    /// A form from a raw evaluator on one chart. The evaluator must be
    /// multilinear and antisymmetric; prefer [`MatrixForm::from_coefficients`]
    /// which guarantees both.
    pub fn from_fn<F>(
        manifold: Arc<Manifold>,
        chart: usize,
        degree: usize,
        value_dim: usize,
        eval: F,
    ) -> Self
    where
        F: Fn(&ChartPoint, &[TangentVec]) -> CMat + Send + Sync + 'static,
    {
        let mut reps: HashMap<usize, FormEval> = HashMap::new();
        reps.insert(chart, Arc::new(eval));
        MatrixForm {
            degree,
            value_dim,
            manifold,
            reps,
        }
    }

    /// A form Σ_{i₁<…<i_k} c_I(p) dx_{i₁}∧…∧dx_{i_k} from its coefficient
    /// function on increasing multi-indices. Evaluation expands the
    /// determinant of selected tangent components, so multilinearity and
    /// antisymmetry hold by construction.
    pub fn from_coefficients<F>(
        manifold: Arc<Manifold>,
        chart: usize,
        degree: usize,
        value_dim: usize,
        coeff: F,
    ) -> Self
    where
        F: Fn(&ChartPoint, &[usize]) -> CMat + Send + Sync + 'static,
    {
        let dim = manifold.dim;
        let n = value_dim;
        let eval = move |p: &ChartPoint, v: &[TangentVec]| -> CMat {
            if degree == 0 {
                return coeff(p, &[]);
            }
            let mut acc = CMat::zeros(n, n);
            for idx in increasing_multi_indices(dim, degree) {
                let c = coeff(p, &idx);
                if c.iter().all(|z| z.norm() == 0.0) {
                    continue;
                }
                // det of the k×k matrix of selected components
                let mut m = RMat::zeros(degree, degree);
                for (a, vec) in v.iter().enumerate() {
                    for (b, &i) in idx.iter().enumerate() {
                        m[(a, b)] = vec.components[i];
                    }
                }
                let det = m.determinant();
                acc += c * Complex64::new(det, 0.0);
            }
            acc
        };
        Self::from_fn(manifold, chart, degree, value_dim, eval)
    }

    /// The constant scalar 0-form with the given value.
    pub fn constant(manifold: Arc<Manifold>, chart: usize, value: Complex64) -> Self {
        Self::from_fn(manifold, chart, 0, 1, move |_, _| {
            CMat::from_element(1, 1, value)
        })
    }

    pub fn zero(manifold: Arc<Manifold>, chart: usize, degree: usize, value_dim: usize) -> Self {
        let n = value_dim;
        Self::from_fn(manifold, chart, degree, value_dim, move |_, _| {
            CMat::zeros(n, n)
        })
    }

    /// Register an additional native chart representative.
    pub fn with_rep<F>(mut self, chart: usize, eval: F) -> Self
    where
        F: Fn(&ChartPoint, &[TangentVec]) -> CMat + Send + Sync + 'static,
    {
        self.reps.insert(chart, Arc::new(eval));
        self
    }

    pub fn manifold(&self) -> &Arc<Manifold> {
        &self.manifold
    }

    /// Evaluate at `p` on `v`, converting through a chart transition when `p`
    /// lives in a chart without a native representative.
    pub fn eval(&self, p: &ChartPoint, v: &[TangentVec]) -> Result<CMat> {
        if v.len() != self.degree {
            return Err(HolError::ArityMismatch {
                expected: self.degree,
                got: v.len(),
            });
        }
        for t in v {
            if t.base.chart != p.chart {
                return Err(HolError::ChartMismatch(
                    "tangent based in a different chart than the evaluation point".into(),
                ));
            }
        }
        if let Some(f) = self.reps.get(&p.chart) {
            return Ok(f(p, v));
        }
        for (&rep_chart, f) in &self.reps {
            if let Some(tr) = self.manifold.transition(p.chart, rep_chart) {
                let q = ChartPoint {
                    chart: rep_chart,
                    coords: (tr.map)(&p.coords),
                };
                let jac = (tr.jacobian)(&p.coords);
                let w: Vec<TangentVec> = v
                    .iter()
                    .map(|t| TangentVec {
                        base: q.clone(),
                        components: &jac * &t.components,
                    })
                    .collect();
                return Ok(f(&q, &w));
            }
        }
        Err(HolError::ChartMismatch(format!(
            "no representative or transition for chart {}",
            p.chart
        )))
    }
}

/// Evaluate a form on a tangent tuple (free-function spelling of
/// [`MatrixForm::eval`]).
pub fn evaluate_form(form: &MatrixForm, p: &ChartPoint, v: &[TangentVec]) -> Result<CMat> {
    form.eval(p, v)
}

fn increasing_multi_indices(dim: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(dim: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..dim {
            cur.push(i);
            rec(dim, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(dim, k, 0, &mut cur, &mut out);
    out
}

/// All (k, ℓ)-shuffles as (first-block indices, second-block indices, sign).
pub fn shuffles(k: usize, l: usize) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let n = k + l;
    let mut out = Vec::new();
    for first in increasing_multi_indices(n, k) {
        let second: Vec<usize> = (0..n).filter(|i| !first.contains(i)).collect();
        // sign of the permutation sending (first..., second...) to 0..n
        let mut perm: Vec<usize> = first.clone();
        perm.extend(&second);
        out.push((first, second, permutation_sign(&perm)));
    }
    out
}

/// Sign of a permutation given as the image sequence of 0..n.
pub fn permutation_sign(perm: &[usize]) -> f64 {
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

/// Wedge product of two forms; matrix values multiply in argument order.
pub fn wedge_forms(a: &MatrixForm, b: &MatrixForm) -> Result<MatrixForm> {
    if a.value_dim != b.value_dim && a.value_dim != 1 && b.value_dim != 1 {
        return Err(HolError::Invalid(
            "wedge requires scalar·matrix or equal matrix dimensions".into(),
        ));
    }
    let (ka, kb) = (a.degree, b.degree);
    let n = a.value_dim.max(b.value_dim);
    let (ac, bc) = (a.clone(), b.clone());
    let manifold = a.manifold.clone();
    let eval = move |p: &ChartPoint, v: &[TangentVec]| -> CMat {
        let mut acc = CMat::zeros(n, n);
        for (first, second, sign) in shuffles(ka, kb) {
            let va: Vec<TangentVec> = first.iter().map(|&i| v[i].clone()).collect();
            let vb: Vec<TangentVec> = second.iter().map(|&i| v[i].clone()).collect();
            let ma = ac.eval(p, &va).expect("wedge operand eval");
            let mb = bc.eval(p, &vb).expect("wedge operand eval");
            let prod = promote(&ma, n) * promote(&mb, n);
            acc += prod * Complex64::new(sign, 0.0);
        }
        acc
    };
    // The wedge evaluator defers to the operands' own chart handling, so it is
    // registered for every chart of the atlas.
    let mut form = MatrixForm {
        degree: ka + kb,
        value_dim: n,
        manifold: manifold.clone(),
        reps: HashMap::new(),
    };
    let ev: FormEval = Arc::new(eval);
    for c in 0..manifold.chart_names.len() {
        form.reps.insert(c, ev.clone());
    }
    Ok(form)
}

fn promote(m: &CMat, n: usize) -> CMat {
    if m.nrows() == n {
        m.clone()
    } else {
        CMat::identity(n, n) * m[(0, 0)]
    }
}

/// Finite-difference exterior derivative at a point: the tangents are extended
/// constantly in chart coordinates (so all bracket terms vanish) and
/// dω(v₀,…,v_k) = Σ_i (−1)^i ∂_{v_i} ω(v₀,…,v̂_i,…,v_k) is computed by central
/// differences with one Richardson level.
pub fn numeric_d(form: &MatrixForm, p: &ChartPoint, v: &[TangentVec], h: f64) -> Result<CMat> {
    if v.len() != form.degree + 1 {
        return Err(HolError::ArityMismatch {
            expected: form.degree + 1,
            got: v.len(),
        });
    }
    if h <= 0.0 {
        return Err(HolError::Invalid("step must be positive".into()));
    }
    let n = form.value_dim;
    let mut acc = CMat::zeros(n, n);
    for i in 0..v.len() {
        let rest: Vec<TangentVec> = v
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, t)| t.clone())
            .collect();
        let dir = &v[i].components;
        let diff = |step: f64| -> Result<CMat> {
            let shift = |sgn: f64| -> Result<CMat> {
                let q = ChartPoint {
                    chart: p.chart,
                    coords: &p.coords + dir * (sgn * step),
                };
                let w: Vec<TangentVec> = rest
                    .iter()
                    .map(|t| TangentVec {
                        base: q.clone(),
                        components: t.components.clone(),
                    })
                    .collect();
                form.eval(&q, &w)
            };
            Ok((shift(1.0)? - shift(-1.0)?) / Complex64::new(2.0 * step, 0.0))
        };
        let d1 = diff(h)?;
        let d2 = diff(h / 2.0)?;
        let richardson = (d2 * Complex64::new(4.0, 0.0) - d1) / Complex64::new(3.0, 0.0);
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        acc += richardson * Complex64::new(sign, 0.0);
    }
    Ok(acc)
}

/// Quadrature settings: composite Gauss–Legendre of the given order, with a
/// number of panels per unit interval; simplices are integrated by nested 1-D
/// rules respecting the time ordering.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct QuadratureSpec {
    pub order: usize,
    pub subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            order: 4,
            subdivisions: 16,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order < 2 || self.subdivisions < 1 {
            return Err(HolError::Invalid(
                "quadrature needs order >= 2 and subdivisions >= 1".into(),
            ));
        }
        Ok(())
    }

    fn panels(&self, len: f64) -> usize {
        ((self.subdivisions as f64 * len).ceil() as usize).max(1)
    }

    /// ∫_a^b f with the composite rule.
    pub fn integrate<F: FnMut(f64) -> Complex64>(&self, a: f64, b: f64, f: F) -> Complex64 {
        numerics::integrate_scalar(a, b, self.order, self.panels((b - a).abs()), f)
    }

    /// Matrix-valued ∫_a^b f.
    pub fn integrate_matrix<F: FnMut(f64) -> CMat>(&self, a: f64, b: f64, f: F) -> CMat {
        numerics::integrate_matrix(a, b, self.order, self.panels((b - a).abs()), f)
    }
}

/// ∫ over the ordered simplex Δ^k = {0 ≤ t₁ ≤ … ≤ t_k ≤ 1} by nested
/// composite 1-D rules (t_k outermost, t_1 innermost).
pub fn simplex_quadrature<F: Fn(&[f64]) -> Complex64>(
    f: &F,
    k: usize,
    spec: &QuadratureSpec,
) -> Complex64 {
    spec.validate().expect("valid quadrature spec");
    if k == 0 {
        return f(&[]);
    }
    let mut coords = vec![0.0; k];
    nested_simplex(f, k, k, 1.0, &mut coords, spec)
}

fn nested_simplex<F: Fn(&[f64]) -> Complex64>(
    f: &F,
    k: usize,
    level: usize,
    upper: f64,
    coords: &mut Vec<f64>,
    spec: &QuadratureSpec,
) -> Complex64 {
    let (nodes, weights) = numerics::gauss_legendre(spec.order);
    let panels = spec.panels(upper);
    let h = upper / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for s in 0..panels {
        let lo = s as f64 * h;
        for (x, w) in nodes.iter().zip(&weights) {
            let t = lo + 0.5 * h * (x + 1.0);
            coords[level - 1] = t;
            let inner = if level == 1 {
                f(coords)
            } else {
                nested_simplex(f, k, level - 1, t, coords, spec)
            };
            acc += inner * (0.5 * h * w);
        }
    }
    acc
}
