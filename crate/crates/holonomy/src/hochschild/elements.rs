//! Canonical holonomy elements of the Hochschild complexes: the
//! parallel-transport series of the path flavors, their curvature-twisted
//! higher versions over a formal circle factor, the gerbe element of the
//! torus-grid and simplicial flavors, and the allowable-matrix
//! combinatorics that index the grid element's words.
//!
//! All elements are built the same way: a sum X of single-slot words
//! (connection forms, curvature-times-circle-form twists) is exponentiated
//! under the shuffle product, filtered by the number of slots carrying each
//! formal circle 1-form, and finally shuffled with the degree-0 word of
//! transition data. This equals the textbook per-slot tensor series because
//! every summand of X has even total degree (so all summands commute
//! exactly) and k-fold shuffle powers of a single-slot word reproduce the
//! k-fold tensor word times k!.

use super::alg::{qc_i, qc_int, qc_is_zero, qc_one, qc_zero, ExBasis, ExForm, PolyMat, Qc};
use super::chain::{
    interval_one_tensor, shuffle, shuffle_exp, shuffle_exp_filtered, Flavor, HochschildChain,
    MonoSlot, Shape, Word,
};
use crate::error::{HolError, Result};
use std::collections::HashMap;

/// Index of the formal circle variable paired with the curvature twist in
/// the extended flavors (paths, and the first grid direction).
pub const CIRCLE_T: usize = 3;
/// Index of the second formal circle variable (second grid direction).
pub const CIRCLE_U: usize = 4;

/// Input data for [`build_h_element`]: the complex flavor, the truncation
/// bound for the shuffle exponential, the local differential-form data of a
/// bundle (matrix connection and transition functions per patch) or of an
/// abelian gerbe (2-forms, transition 1-forms, and constant triple-overlap
/// scalars), and the two curvature-twist orders.
#[derive(Debug, Clone)]
pub struct HParams {
    pub flavor: Flavor,
    /// Words with more than this many tensor factors are dropped.
    pub max_sdeg: usize,
    /// Per-patch connection-form matrices (path flavors; the single-patch
    /// interval flavor reads patch id 0).
    pub conn: HashMap<usize, PolyMat>,
    /// Transition-function matrices g_{i,j} between patches i and j; the
    /// identity is implied when i = j.
    pub trans: HashMap<(usize, usize), PolyMat>,
    /// Gerbe transition 1-forms stored on ordered pairs i < j; the (j, i)
    /// value is the negative, and the diagonal is zero.
    pub a2: HashMap<(usize, usize), ExForm>,
    /// Gerbe 2-forms per patch.
    pub b2: HashMap<usize, ExForm>,
    /// Gerbe triple-overlap constants stored on strictly increasing
    /// triples; odd permutations invert the value, and triples with a
    /// repeated index are 1.
    pub g3: HashMap<(usize, usize, usize), Qc>,
    /// Number of slots carrying the first circle 1-form.
    pub k: usize,
    /// Number of slots carrying the second circle 1-form.
    pub l: usize,
}

impl HParams {
    pub fn new(flavor: Flavor, max_sdeg: usize) -> Self {
        HParams {
            flavor,
            max_sdeg,
            conn: HashMap::new(),
            trans: HashMap::new(),
            a2: HashMap::new(),
            b2: HashMap::new(),
            g3: HashMap::new(),
            k: 0,
            l: 0,
        }
    }

    fn conn_at(&self, i: usize) -> Result<&PolyMat> {
        self.conn
            .get(&i)
            .ok_or_else(|| HolError::Invalid(format!("no connection form for patch {i}")))
    }

    fn trans_at(&self, i: usize, j: usize, n: usize) -> Result<PolyMat> {
        if i == j {
            return Ok(PolyMat::identity(n));
        }
        self.trans
            .get(&(i, j))
            .cloned()
            .ok_or_else(|| HolError::Invalid(format!("no transition function for ({i}, {j})")))
    }

    /// The gerbe transition 1-form between patches i and j, antisymmetric
    /// in its indices and zero on the diagonal.
    fn a_form(&self, i: usize, j: usize) -> Result<ExForm> {
        if i == j {
            return Ok(ExForm::zero());
        }
        let (key, flip) = if i < j { ((i, j), false) } else { ((j, i), true) };
        let f = self
            .a2
            .get(&key)
            .ok_or_else(|| HolError::Invalid(format!("no transition 1-form for ({i}, {j})")))?;
        Ok(if flip { f.neg() } else { f.clone() })
    }

    fn b_form(&self, i: usize) -> Result<&ExForm> {
        self.b2
            .get(&i)
            .ok_or_else(|| HolError::Invalid(format!("no 2-form for patch {i}")))
    }

    /// The triple-overlap constant, totally antisymmetric in the sense that
    /// odd index permutations invert the (unit-modulus) value and repeated
    /// indices give 1.
    fn g_val(&self, a: usize, b: usize, c: usize) -> Result<Qc> {
        if a == b || b == c || a == c {
            return Ok(qc_one());
        }
        let mut idx = [a, b, c];
        let mut odd = false;
        // sort the three indices, tracking the permutation parity
        for pass in 0..2 {
            for t in 0..2 - pass {
                if idx[t] > idx[t + 1] {
                    idx.swap(t, t + 1);
                    odd = !odd;
                }
            }
        }
        let v = self
            .g3
            .get(&(idx[0], idx[1], idx[2]))
            .ok_or_else(|| {
                HolError::Invalid(format!("no triple-overlap constant for ({a}, {b}, {c})"))
            })?
            .clone();
        if odd {
            qc_inv(&v)
        } else {
            Ok(v)
        }
    }
}

fn qc_inv(v: &Qc) -> Result<Qc> {
    if qc_is_zero(v) {
        return Err(HolError::Invalid(
            "transition data must be invertible".into(),
        ));
    }
    Ok(qc_one() / v.clone())
}

/// Builds the canonical holonomy element of the requested flavor, truncated
/// to `params.max_sdeg` tensor factors. Kinds: `interval_h2k`, `local_h2k`
/// (paths; `params.k` curvature twists), `torus_h2k2l` (grid; `params.k`
/// and `params.l` twists), and `simplicial_h` (surface; no twists).
pub fn build_h_element(kind: &str, params: &HParams) -> Result<HochschildChain> {
    match kind {
        "interval_h2k" => interval_element(params),
        "local_h2k" => local_element(params),
        "torus_h2k2l" => torus_element(params),
        "simplicial_h" => simplicial_element(params),
        other => Err(HolError::Invalid(format!(
            "unknown kind `{other}` for holonomy element"
        ))),
    }
}

/// Slot count of one formal circle 1-form in a word.
fn circle_count(w: &Word, var: usize) -> usize {
    w.slots
        .iter()
        .filter(|s| s.basis.mask & (1 << var) != 0)
        .count()
}

/// Keeps the words whose slot count of each formal circle 1-form matches
/// the requested twist orders.
fn filter_circle_counts(chain: &HochschildChain, k: usize, l: usize) -> HochschildChain {
    let mut out = HochschildChain::zero(chain.flavor.clone());
    for (w, c) in &chain.terms {
        if circle_count(w, CIRCLE_T) == k && circle_count(w, CIRCLE_U) == l {
            out.add_word(w.clone(), c.clone());
        }
    }
    out
}

/// Entrywise wedge of a matrix of forms with a scalar form (on the right).
fn polymat_wedge(m: &PolyMat, f: &ExForm) -> PolyMat {
    let mut out = PolyMat::zero(m.n);
    for r in 0..m.n {
        for c in 0..m.n {
            out.set(r, c, m.at(r, c).mul(f));
        }
    }
    out
}

/// Curvature twist −(dA + A²) ∧ dcircle for a matrix connection form.
fn curvature_twist(a: &PolyMat, circle_var: usize) -> PolyMat {
    let r = a.d().add(&a.mul(a));
    polymat_wedge(&r, &ExForm::dvar(circle_var)).scale(&(qc_zero() - qc_one()))
}

fn interval_element(params: &HParams) -> Result<HochschildChain> {
    let n = match &params.flavor {
        Flavor::Interval { n } => *n,
        _ => return Err(HolError::Invalid("interval element needs interval flavor".into())),
    };
    let a = params.conn_at(0)?;
    if a.n != n {
        return Err(HolError::Invalid(
            "connection matrix size does not match the flavor".into(),
        ));
    }
    let x = interval_one_tensor(a).add(&interval_one_tensor(&curvature_twist(a, CIRCLE_T)));
    let k = params.k;
    let e = shuffle_exp_filtered(&x, params.max_sdeg, |w| circle_count(w, CIRCLE_T) <= k)?;
    Ok(filter_circle_counts(&e, k, 0))
}

/// The open-cover path word 1 ⊗ … ⊗ A ⊗ … ⊗ 1 with a matrix form A in one
/// tensor factor of segment `seg`, expanded into monomial slots (identity
/// diagonals in the module slots, independent entries in the factor slot).
fn local_one_tensor(flavor: &Flavor, seg: usize, a: &PolyMat) -> HochschildChain {
    let (n, p) = match flavor {
        Flavor::Local { n, patch_ids } => (*n, patch_ids.len()),
        _ => unreachable!("path word in a non-path flavor"),
    };
    let mut ns = vec![0usize; p];
    ns[seg] = 1;
    let mut out = HochschildChain::zero(flavor.clone());
    let mut diag = vec![0usize; p];
    loop {
        for i in 0..n {
            for j in 0..n {
                for (basis, coeff) in &a.at(i, j).terms {
                    let mut slots = Vec::with_capacity(p + 1);
                    for (s, &r) in diag.iter().enumerate() {
                        slots.push(MonoSlot {
                            row: r as u8,
                            col: r as u8,
                            basis: ExBasis::one(),
                        });
                        if s == seg {
                            slots.push(MonoSlot {
                                row: i as u8,
                                col: j as u8,
                                basis: *basis,
                            });
                        }
                    }
                    out.add_word(
                        Word {
                            shape: Shape::Local { ns: ns.clone() },
                            slots,
                        },
                        coeff.clone(),
                    );
                }
            }
        }
        let mut t = 0;
        while t < p {
            diag[t] += 1;
            if diag[t] < n {
                break;
            }
            diag[t] = 0;
            t += 1;
        }
        if t == p {
            break;
        }
    }
    out
}

/// The factor-free path word holding one matrix per module slot, fully
/// expanded into independent entry choices.
fn module_word_chain(flavor: &Flavor, mats: &[PolyMat]) -> HochschildChain {
    let p = mats.len();
    let mut out = HochschildChain::zero(flavor.clone());
    // per-slot option lists (matrix unit, basis monomial, coefficient)
    let options: Vec<Vec<(MonoSlot, Qc)>> = mats
        .iter()
        .map(|m| {
            let mut opts = Vec::new();
            for i in 0..m.n {
                for j in 0..m.n {
                    for (basis, coeff) in &m.at(i, j).terms {
                        opts.push((
                            MonoSlot {
                                row: i as u8,
                                col: j as u8,
                                basis: *basis,
                            },
                            coeff.clone(),
                        ));
                    }
                }
            }
            opts
        })
        .collect();
    let mut pick = vec![0usize; p];
    if options.iter().any(|o| o.is_empty()) {
        return out;
    }
    loop {
        let mut slots = Vec::with_capacity(p);
        let mut coeff = qc_one();
        for (s, &c) in pick.iter().enumerate() {
            let (slot, v) = &options[s][c];
            slots.push(*slot);
            coeff = coeff * v.clone();
        }
        out.add_word(
            Word {
                shape: Shape::Local { ns: vec![0; p] },
                slots,
            },
            coeff,
        );
        let mut t = 0;
        while t < p {
            pick[t] += 1;
            if pick[t] < options[t].len() {
                break;
            }
            pick[t] = 0;
            t += 1;
        }
        if t == p {
            break;
        }
    }
    out
}

fn local_element(params: &HParams) -> Result<HochschildChain> {
    let (n, ids) = match &params.flavor {
        Flavor::Local { n, patch_ids } => (*n, patch_ids.clone()),
        _ => return Err(HolError::Invalid("path element needs open-cover flavor".into())),
    };
    let p = ids.len();
    let mut x = HochschildChain::zero(params.flavor.clone());
    for (seg, &id) in ids.iter().enumerate() {
        let a = params.conn_at(id)?;
        if a.n != n {
            return Err(HolError::Invalid(
                "connection matrix size does not match the flavor".into(),
            ));
        }
        x = x.add(&local_one_tensor(&params.flavor, seg, a));
        x = x.add(&local_one_tensor(
            &params.flavor,
            seg,
            &curvature_twist(a, CIRCLE_T),
        ));
    }
    let k = params.k;
    let e = shuffle_exp_filtered(&x, params.max_sdeg, |w| circle_count(w, CIRCLE_T) <= k)?;
    let e = filter_circle_counts(&e, k, 0);
    // module slot of segment s holds the transition from the previous
    // segment's patch into segment s (the closing transition in slot 0)
    let mut mats = Vec::with_capacity(p);
    for s in 0..p {
        let prev = ids[(s + p - 1) % p];
        mats.push(params.trans_at(prev, ids[s], n)?);
    }
    shuffle(&module_word_chain(&params.flavor, &mats), &e)
}

/// Line layout of a blocked grid direction: (block index, is-edge-line) in
/// order, the edge line of each block preceding its inner lines.
fn line_layout(blocks: &[usize]) -> Vec<(usize, bool)> {
    let mut lines = Vec::new();
    for (b, &c) in blocks.iter().enumerate() {
        lines.push((b, true));
        for _ in 0..c {
            lines.push((b, false));
        }
    }
    lines
}

/// A grid word with one scalar form at the given (row line, column line)
/// and units elsewhere, expanded into monomials.
fn grid_single(
    flavor: &Flavor,
    ms: Vec<usize>,
    ns: Vec<usize>,
    row: usize,
    col: usize,
    form: &ExForm,
) -> HochschildChain {
    let nrows = ms.iter().sum::<usize>() + ms.len();
    let ncols = ns.iter().sum::<usize>() + ns.len();
    let pos = row * ncols + col;
    let mut out = HochschildChain::zero(flavor.clone());
    for (basis, coeff) in &form.terms {
        let mut slots = vec![MonoSlot::unit(); nrows * ncols];
        slots[pos] = MonoSlot::scalar(*basis);
        out.add_word(
            Word {
                shape: Shape::Torus {
                    ms: ms.clone(),
                    ns: ns.clone(),
                },
                slots,
            },
            coeff.clone(),
        );
    }
    out
}

/// One-hot block vector.
fn delta(len: usize, at: usize) -> Vec<usize> {
    let mut v = vec![0usize; len];
    v[at] = 1;
    v
}

/// The grid's transition coefficient at cell corner (k, ℓ), 1-based with
/// cyclic wrap: the triple-overlap value of the three cells above/left over
/// the one of the cells below/left.
fn grid_corner_coeff(
    params: &HParams,
    id: &dyn Fn(usize, usize) -> usize,
    k: usize,
    l: usize,
) -> Result<Qc> {
    let up = params.g_val(id(k, l), id(k - 1, l), id(k - 1, l - 1))?;
    let down = params.g_val(id(k, l), id(k, l - 1), id(k - 1, l - 1))?;
    Ok(up * qc_inv(&down)?)
}

fn torus_element(params: &HParams) -> Result<HochschildChain> {
    let id_grid = match &params.flavor {
        Flavor::Torus { id_grid } => id_grid.clone(),
        _ => return Err(HolError::Invalid("grid element needs torus flavor".into())),
    };
    let p = id_grid.len();
    let q = id_grid[0].len();
    // 1-based cell indices with cyclic wrap (index 0 means index p or q)
    let id = move |k: usize, l: usize| id_grid[(k + p - 1) % p][(l + q - 1) % q];
    let mut x = HochschildChain::zero(params.flavor.clone());
    for k in 1..=p {
        for l in 1..=q {
            let i_kl = id(k, l);
            let b = params.b_form(i_kl)?.clone();
            // cell 2-form: one inner row in row block k−1, one inner column
            // in column block ℓ−1; its line indices are k and ℓ
            x = x.add(
                &grid_single(&params.flavor, delta(p, k - 1), delta(q, l - 1), k, l, &b)
                    .scale(&qc_i()),
            );
            // transition across the boundary between cell rows k−1 and k:
            // edge row line k−1, inner column line ℓ
            let a_h = params.a_form(id(k - 1, l), i_kl)?;
            x = x.add(
                &grid_single(&params.flavor, vec![0; p], delta(q, l - 1), k - 1, l, &a_h)
                    .scale(&qc_i()),
            );
            // transition across the boundary between cell columns ℓ−1 and
            // ℓ: inner row line k, edge column line ℓ−1
            let a_v = params.a_form(i_kl, id(k, l - 1))?;
            x = x.add(
                &grid_single(&params.flavor, delta(p, k - 1), vec![0; q], k, l - 1, &a_v)
                    .scale(&qc_i()),
            );
            // curvature twists at the cell slot: 3-curvature wedged with
            // each formal circle 1-form
            let h3 = b.d();
            for (var, order) in [(CIRCLE_T, params.k), (CIRCLE_U, params.l)] {
                if order > 0 {
                    let twist = h3.mul(&ExForm::dvar(var));
                    x = x.add(
                        &grid_single(
                            &params.flavor,
                            delta(p, k - 1),
                            delta(q, l - 1),
                            k,
                            l,
                            &twist,
                        )
                        .scale(&qc_i()),
                    );
                }
            }
        }
    }
    let (k, l) = (params.k, params.l);
    let e = shuffle_exp_filtered(&x, params.max_sdeg, |w| {
        circle_count(w, CIRCLE_T) <= k && circle_count(w, CIRCLE_U) <= l
    })?;
    let e = filter_circle_counts(&e, k, l);
    // degree-0 transition word: all-unit edge grid with the product of the
    // corner coefficients
    let mut coeff = qc_one();
    for k in 1..=p {
        for l in 1..=q {
            coeff = coeff * grid_corner_coeff(params, &id, k, l)?;
        }
    }
    let mut g = HochschildChain::zero(params.flavor.clone());
    g.add_word(
        Word {
            shape: Shape::Torus {
                ms: vec![0; p],
                ns: vec![0; q],
            },
            slots: vec![MonoSlot::unit(); p * q],
        },
        coeff,
    );
    shuffle(&e, &g)
}

/// A surface word with one scalar form at the slot of the given
/// nondegenerate simplex and units elsewhere.
fn surface_single(
    flavor: &Flavor,
    dim: usize,
    base: usize,
    form: &ExForm,
) -> Result<HochschildChain> {
    let surface = match flavor {
        Flavor::Simplicial { surface, .. } => surface.clone(),
        _ => unreachable!("surface word in a non-surface flavor"),
    };
    let all = surface.simplices(dim);
    let pos = all
        .iter()
        .position(|s| s.base_dim == dim && s.base == base && s.word.is_empty())
        .ok_or_else(|| HolError::UnknownId(format!("{dim}-simplex {base}")))?;
    let mut out = HochschildChain::zero(flavor.clone());
    for (basis, coeff) in &form.terms {
        let mut slots = vec![MonoSlot::unit(); all.len()];
        slots[pos] = MonoSlot::scalar(*basis);
        out.add_word(
            Word {
                shape: Shape::Simplicial { k: dim },
                slots,
            },
            coeff.clone(),
        );
    }
    Ok(out)
}

fn simplicial_element(params: &HParams) -> Result<HochschildChain> {
    let (surface, assign) = match &params.flavor {
        Flavor::Simplicial { surface, assign } => (surface.clone(), assign.clone()),
        _ => {
            return Err(HolError::Invalid(
                "surface element needs simplicial flavor".into(),
            ))
        }
    };
    let mut x = HochschildChain::zero(params.flavor.clone());
    for f in 0..surface.faces.len() {
        let b = params.b_form(assign.face[f])?;
        x = x.add(&surface_single(&params.flavor, 2, f, b)?.scale(&qc_i()));
    }
    for e in 0..surface.edges.len() {
        // total transition 1-form of the edge: the orientation-signed sum
        // over its face incidences
        let mut a_e = ExForm::zero();
        for (f, edges) in surface.faces.iter().enumerate() {
            for (i, &fe) in edges.iter().enumerate() {
                if fe == e {
                    let rho = surface.rho_ef(i, f) as i64;
                    a_e = a_e.add(
                        &params
                            .a_form(assign.edge[e], assign.face[f])?
                            .scale(&qc_int(rho)),
                    );
                }
            }
        }
        x = x.add(&surface_single(&params.flavor, 1, e, &a_e)?.scale(&(qc_zero() - qc_i())));
    }
    let e = shuffle_exp(&x, params.max_sdeg)?;
    // degree-0 word: the product over every vertex ⊂ edge ⊂ face incidence
    // chain of the triple-overlap value, signed by both orientations
    let mut coeff = qc_one();
    for v in 0..surface.vertices {
        for (f, edges) in surface.faces.iter().enumerate() {
            for (i, &fe) in edges.iter().enumerate() {
                let rho_ef = surface.rho_ef(i, f) as i64;
                // side 1 of the edge table is the start vertex (sign +1)
                for (side, &vv) in surface.edges[fe].iter().enumerate() {
                    if vv == v {
                        let rho_ve = if side == 1 { 1 } else { -1 };
                        let g =
                            params.g_val(assign.vertex[v], assign.edge[fe], assign.face[f])?;
                        coeff = coeff
                            * if rho_ve * rho_ef > 0 {
                                g
                            } else {
                                qc_inv(&g)?
                            };
                    }
                }
            }
        }
    }
    let nv = surface.simplices(0).len();
    let mut g = HochschildChain::zero(params.flavor.clone());
    g.add_word(
        Word {
            shape: Shape::Simplicial { k: 0 },
            slots: vec![MonoSlot::unit(); nv],
        },
        coeff,
    );
    shuffle(&e, &g)
}

/// A {0,1,2}-pattern over a blocked grid: 0 exactly at the edge-row ×
/// edge-column corners, exactly one 2 in each inner row and each inner
/// column (possibly sitting in an edge line of the other direction), and 1
/// everywhere else. These patterns index the words of the grid holonomy
/// element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllowableMatrix {
    pub ms: Vec<usize>,
    pub ns: Vec<usize>,
    /// Row-major entries; each direction lays out the edge line of a block
    /// before the block's inner lines.
    pub grid: Vec<Vec<u8>>,
}

fn binom(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut out = 1u128;
    for t in 0..k {
        out = out * (n - t) as u128 / (t + 1) as u128;
    }
    out
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Closed count of allowable matrices with m inner rows and n inner
/// columns over a p × q block grid: choose b inner-row/inner-column pairs
/// for the cell entries, then an edge column for each remaining inner row
/// and an edge row for each remaining inner column.
pub fn allowable_count(p: usize, q: usize, m: usize, n: usize) -> u128 {
    let mut total = 0u128;
    for b in 0..=m.min(n) {
        total += binom(m, b)
            * binom(n, b)
            * factorial(b)
            * (q as u128).pow((m - b) as u32)
            * (p as u128).pow((n - b) as u32);
    }
    total
}

const ALLOWABLE_BUDGET: u128 = 100_000;

/// Enumerates every allowable matrix for the given block sizes.
pub fn enumerate_allowable_matrices(
    p: usize,
    q: usize,
    ms: &[usize],
    ns: &[usize],
) -> Result<Vec<AllowableMatrix>> {
    if ms.len() != p || ns.len() != q || p == 0 || q == 0 {
        return Err(HolError::Invalid(
            "block sizes must match the grid dimensions".into(),
        ));
    }
    let m: usize = ms.iter().sum();
    let n: usize = ns.iter().sum();
    let count = allowable_count(p, q, m, n);
    if count > ALLOWABLE_BUDGET {
        return Err(HolError::Invalid(format!(
            "enumeration budget exceeded: {count} allowable matrices > {ALLOWABLE_BUDGET}"
        )));
    }
    let rows = line_layout(ms);
    let cols = line_layout(ns);
    let inner_rows: Vec<usize> = (0..rows.len()).filter(|&r| !rows[r].1).collect();
    let inner_cols: Vec<usize> = (0..cols.len()).filter(|&c| !cols[c].1).collect();
    let edge_rows: Vec<usize> = (0..rows.len()).filter(|&r| rows[r].1).collect();
    let edge_cols: Vec<usize> = (0..cols.len()).filter(|&c| cols[c].1).collect();
    let mut base = vec![vec![1u8; cols.len()]; rows.len()];
    for &r in &edge_rows {
        for &c in &edge_cols {
            base[r][c] = 0;
        }
    }
    let mut out = Vec::with_capacity(count as usize);
    // choice[t]: the column of the 2 in the t-th inner row
    let mut choice: Vec<usize> = Vec::with_capacity(inner_rows.len());
    fn recurse(
        t: usize,
        inner_rows: &[usize],
        inner_cols: &[usize],
        edge_rows: &[usize],
        edge_cols: &[usize],
        choice: &mut Vec<usize>,
        base: &[Vec<u8>],
        ms: &[usize],
        ns: &[usize],
        out: &mut Vec<AllowableMatrix>,
    ) {
        if t == inner_rows.len() {
            // the inner columns not yet holding a 2 get theirs in an edge row
            let open: Vec<usize> = inner_cols
                .iter()
                .copied()
                .filter(|c| !choice.contains(c))
                .collect();
            let mut pick = vec![0usize; open.len()];
            loop {
                let mut grid = base.to_vec();
                for (s, &c) in choice.iter().enumerate() {
                    grid[inner_rows[s]][c] = 2;
                }
                for (s, &c) in open.iter().enumerate() {
                    grid[edge_rows[pick[s]]][c] = 2;
                }
                out.push(AllowableMatrix {
                    ms: ms.to_vec(),
                    ns: ns.to_vec(),
                    grid,
                });
                let mut u = 0;
                while u < open.len() {
                    pick[u] += 1;
                    if pick[u] < edge_rows.len() {
                        break;
                    }
                    pick[u] = 0;
                    u += 1;
                }
                if u == open.len() {
                    break;
                }
            }
            return;
        }
        for &c in edge_cols.iter().chain(inner_cols.iter()) {
            if !edge_cols.contains(&c) && choice.contains(&c) {
                continue; // an inner column holds at most one 2
            }
            choice.push(c);
            recurse(
                t + 1, inner_rows, inner_cols, edge_rows, edge_cols, choice, base, ms, ns, out,
            );
            choice.pop();
        }
    }
    recurse(
        0,
        &inner_rows,
        &inner_cols,
        &edge_rows,
        &edge_cols,
        &mut choice,
        &base,
        ms,
        ns,
        &mut out,
    );
    debug_assert_eq!(out.len() as u128, count);
    Ok(out)
}

/// Expands an allowable matrix into the grid chain it indexes: corner 0s
/// contribute the transition coefficients, cell 2s the patch 2-form,
/// edge-line 2s the matching transition 1-form, and 1s unit slots.
pub fn allowable_chain(mat: &AllowableMatrix, params: &HParams) -> Result<HochschildChain> {
    let id_grid = match &params.flavor {
        Flavor::Torus { id_grid } => id_grid.clone(),
        _ => return Err(HolError::Invalid("allowable matrices need torus flavor".into())),
    };
    let p = id_grid.len();
    let q = id_grid[0].len();
    if mat.ms.len() != p || mat.ns.len() != q {
        return Err(HolError::Invalid(
            "allowable matrix block sizes do not match the flavor".into(),
        ));
    }
    let id = move |k: usize, l: usize| id_grid[(k + p - 1) % p][(l + q - 1) % q];
    let rows = line_layout(&mat.ms);
    let cols = line_layout(&mat.ns);
    let mut coeff = qc_one();
    // per-slot monomial options for the 2 entries; units elsewhere
    let mut two_slots: Vec<(usize, ExForm)> = Vec::new();
    for (r, &(rb, r_edge)) in rows.iter().enumerate() {
        for (c, &(cb, c_edge)) in cols.iter().enumerate() {
            match mat.grid[r][c] {
                0 => coeff = coeff * grid_corner_coeff(params, &id, rb + 1, cb + 1)?,
                1 => {}
                2 => {
                    let form = if !r_edge && !c_edge {
                        params.b_form(id(rb + 1, cb + 1))?.clone()
                    } else if r_edge {
                        // boundary between cell rows rb and rb+1
                        params.a_form(id(rb, cb + 1), id(rb + 1, cb + 1))?
                    } else {
                        // boundary between cell columns cb and cb+1
                        params.a_form(id(rb + 1, cb + 1), id(rb + 1, cb))?
                    };
                    two_slots.push((r * cols.len() + c, form));
                }
                _ => return Err(HolError::Invalid("allowable entries are 0, 1, or 2".into())),
            }
        }
    }
    let mut out = HochschildChain::zero(params.flavor.clone());
    let options: Vec<Vec<(ExBasis, Qc)>> = two_slots
        .iter()
        .map(|(_, f)| f.terms.iter().map(|(b, c)| (*b, c.clone())).collect())
        .collect();
    if options.iter().any(|o| o.is_empty()) {
        return Ok(out);
    }
    let mut pick = vec![0usize; options.len()];
    loop {
        let mut slots = vec![MonoSlot::unit(); rows.len() * cols.len()];
        let mut c = coeff.clone();
        for (s, &t) in pick.iter().enumerate() {
            let (basis, v) = &options[s][t];
            slots[two_slots[s].0] = MonoSlot::scalar(*basis);
            c = c * v.clone();
        }
        out.add_word(
            Word {
                shape: Shape::Torus {
                    ms: mat.ms.clone(),
                    ns: mat.ns.clone(),
                },
                slots,
            },
            c,
        );
        let mut u = 0;
        while u < pick.len() {
            pick[u] += 1;
            if pick[u] < options[u].len() {
                break;
            }
            pick[u] = 0;
            u += 1;
        }
        if u == pick.len() {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hochschild::alg::qc_ratio;
    use crate::surface::{torus_9v, SurfaceChartAssignment};
    use std::collections::HashSet;
    use std::sync::Arc;

    fn x(i: usize) -> ExForm {
        ExForm::var(i)
    }

    fn dx(i: usize) -> ExForm {
        ExForm::dvar(i)
    }

    fn sample_connection() -> PolyMat {
        let mut a = PolyMat::zero(2);
        a.set(0, 0, x(0).mul(&dx(1)));
        a.set(0, 1, dx(2));
        a.set(1, 0, x(2).mul(&dx(0)));
        a.set(1, 1, x(1).mul(&dx(2)));
        a
    }

    fn second_connection() -> PolyMat {
        let mut a = PolyMat::zero(2);
        a.set(0, 0, dx(0));
        a.set(0, 1, x(1).mul(&dx(2)));
        a.set(1, 0, x(0).mul(&dx(1)));
        a.set(1, 1, dx(1));
        a
    }

    /// Per-slot monomial options (matrix unit, coefficient) of a matrix of
    /// forms.
    fn entry_options(a: &PolyMat) -> Vec<(MonoSlot, Qc)> {
        let mut opts = Vec::new();
        for i in 0..a.n {
            for j in 0..a.n {
                for (basis, coeff) in &a.at(i, j).terms {
                    opts.push((
                        MonoSlot {
                            row: i as u8,
                            col: j as u8,
                            basis: *basis,
                        },
                        coeff.clone(),
                    ));
                }
            }
        }
        opts
    }

    /// Direct tensor series Σ_len (module diagonal) ⊗ A ⊗ … ⊗ A with
    /// independent entry choices per factor slot.
    fn interval_tensor_series(a: &PolyMat, max_len: usize) -> HochschildChain {
        let n = a.n;
        let opts = entry_options(a);
        let mut out = HochschildChain::zero(Flavor::Interval { n });
        for len in 0..=max_len {
            let mut pick = vec![0usize; len];
            loop {
                for r in 0..n {
                    let mut slots = vec![MonoSlot {
                        row: r as u8,
                        col: r as u8,
                        basis: ExBasis::one(),
                    }];
                    let mut coeff = qc_one();
                    for &t in &pick {
                        slots.push(opts[t].0);
                        coeff = coeff * opts[t].1.clone();
                    }
                    out.add_word(
                        Word {
                            shape: Shape::Interval { n: len },
                            slots,
                        },
                        coeff,
                    );
                }
                let mut u = 0;
                while u < len {
                    pick[u] += 1;
                    if pick[u] < opts.len() {
                        break;
                    }
                    pick[u] = 0;
                    u += 1;
                }
                if u == len {
                    break;
                }
            }
        }
        out
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let params = HParams::new(Flavor::Interval { n: 2 }, 2);
        let err = build_h_element("nonsense", &params).unwrap_err();
        assert!(err.to_string().contains("unknown kind"));
    }

    #[test]
    fn interval_element_is_the_tensor_series_of_the_connection() {
        let a = sample_connection();
        let mut params = HParams::new(Flavor::Interval { n: 2 }, 3);
        params.conn.insert(0, a.clone());
        let h = build_h_element("interval_h2k", &params).unwrap();
        let expected = interval_tensor_series(&a, 3);
        assert!(h.equals(&expected));
    }

    #[test]
    fn local_element_words_match_direct_enumeration() {
        let a0 = sample_connection();
        let a1 = second_connection();
        let mut g10 = PolyMat::identity(2);
        g10.set(0, 1, x(0).mul(&x(1)));
        let mut g01 = PolyMat::identity(2);
        g01.set(1, 0, x(2));
        g01.set(1, 1, ExForm::constant(qc_int(2)));
        let flavor = Flavor::Local {
            n: 2,
            patch_ids: vec![0, 1],
        };
        let mut params = HParams::new(flavor.clone(), 2);
        params.conn.insert(0, a0.clone());
        params.conn.insert(1, a1.clone());
        params.trans.insert((1, 0), g10.clone());
        params.trans.insert((0, 1), g01.clone());
        let h = build_h_element("local_h2k", &params).unwrap();

        // direct enumeration: g ⊗ A⊗…⊗A ⊗ g ⊗ A⊗…⊗A over all entry choices
        let g_opts = [entry_options(&g10), entry_options(&g01)];
        let a_opts = [entry_options(&a0), entry_options(&a1)];
        let mut expected = HochschildChain::zero(flavor);
        for n1 in 0..=2usize {
            for n2 in 0..=(2 - n1) {
                let counts = [n1, n2];
                // flatten the option lists per slot in linear order
                let mut per_slot: Vec<&[(MonoSlot, Qc)]> = Vec::new();
                for seg in 0..2 {
                    per_slot.push(&g_opts[seg]);
                    for _ in 0..counts[seg] {
                        per_slot.push(&a_opts[seg]);
                    }
                }
                let mut pick = vec![0usize; per_slot.len()];
                loop {
                    let mut slots = Vec::new();
                    let mut coeff = qc_one();
                    for (s, &t) in pick.iter().enumerate() {
                        slots.push(per_slot[s][t].0);
                        coeff = coeff * per_slot[s][t].1.clone();
                    }
                    expected.add_word(
                        Word {
                            shape: Shape::Local {
                                ns: vec![n1, n2],
                            },
                            slots,
                        },
                        coeff,
                    );
                    let mut u = 0;
                    while u < pick.len() {
                        pick[u] += 1;
                        if pick[u] < per_slot[u].len() {
                            break;
                        }
                        pick[u] = 0;
                        u += 1;
                    }
                    if u == pick.len() {
                        break;
                    }
                }
            }
        }
        assert!(h.equals(&expected));
    }

    #[test]
    fn simplicial_element_of_trivial_gerbe_is_the_exponential_of_cell_forms() {
        let surface = Arc::new(torus_9v());
        let assign = SurfaceChartAssignment {
            vertex: vec![0; surface.vertices],
            edge: vec![0; surface.edges.len()],
            face: vec![0; surface.faces.len()],
        };
        let flavor = Flavor::Simplicial {
            surface: surface.clone(),
            assign,
        };
        let b = x(0).mul(&dx(1)).mul(&dx(2));
        let mut params = HParams::new(flavor.clone(), 4);
        params.b2.insert(0, b.clone());
        let h = build_h_element("simplicial_h", &params).unwrap();
        // with one patch the transition forms vanish and the corner values
        // are 1, leaving the bare exponential of the cell 2-forms
        let mut xb = HochschildChain::zero(flavor);
        for f in 0..surface.faces.len() {
            xb = xb.add(&surface_single(&xb.flavor.clone(), 2, f, &b).unwrap().scale(&qc_i()));
        }
        let expected = shuffle_exp(&xb, 4).unwrap();
        assert!(h.equals(&expected));
        assert!(!h.is_zero());
    }

    /// Brute-force allowable-matrix count over all {0,1,2} grids.
    fn brute_force_count(ms: &[usize], ns: &[usize]) -> usize {
        let rows = line_layout(ms);
        let cols = line_layout(ns);
        let cells = rows.len() * cols.len();
        assert!(cells <= 12, "brute force only for tiny grids");
        let mut count = 0usize;
        for code in 0..3usize.pow(cells as u32) {
            let mut grid = vec![vec![0u8; cols.len()]; rows.len()];
            let mut rem = code;
            for r in 0..rows.len() {
                for c in 0..cols.len() {
                    grid[r][c] = (rem % 3) as u8;
                    rem /= 3;
                }
            }
            let mut ok = true;
            for (r, &(_, re)) in rows.iter().enumerate() {
                for (c, &(_, ce)) in cols.iter().enumerate() {
                    let corner = re && ce;
                    if corner != (grid[r][c] == 0) {
                        ok = false;
                    }
                }
            }
            for (r, &(_, re)) in rows.iter().enumerate() {
                if !re && grid[r].iter().filter(|&&v| v == 2).count() != 1 {
                    ok = false;
                }
            }
            for (c, &(_, ce)) in cols.iter().enumerate() {
                if !ce {
                    let twos = (0..rows.len()).filter(|&r| grid[r][c] == 2).count();
                    if twos != 1 {
                        ok = false;
                    }
                }
            }
            if ok {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn allowable_matrix_count_matches_brute_force_and_formula() {
        let cases: [(usize, usize, Vec<usize>, Vec<usize>); 6] = [
            (1, 1, vec![0], vec![0]),
            (1, 1, vec![1], vec![1]),
            (1, 1, vec![2], vec![2]),
            (2, 1, vec![1, 0], vec![1]),
            (1, 2, vec![1], vec![0, 1]),
            (2, 2, vec![1, 0], vec![0, 1]),
        ];
        for (p, q, ms, ns) in cases {
            let brute = brute_force_count(&ms, &ns);
            let listed = enumerate_allowable_matrices(p, q, &ms, &ns).unwrap();
            let m: usize = ms.iter().sum();
            let n: usize = ns.iter().sum();
            assert_eq!(listed.len(), brute, "enumeration vs brute force ({ms:?}, {ns:?})");
            assert_eq!(
                allowable_count(p, q, m, n),
                brute as u128,
                "closed count vs brute force ({ms:?}, {ns:?})"
            );
            // every listed grid is pairwise distinct
            let set: HashSet<Vec<Vec<u8>>> = listed.iter().map(|a| a.grid.clone()).collect();
            assert_eq!(set.len(), listed.len());
        }
    }

    #[test]
    fn allowable_matrix_counts_for_single_cell_grids() {
        assert_eq!(
            enumerate_allowable_matrices(1, 1, &[0], &[0]).unwrap().len(),
            1
        );
        assert_eq!(
            enumerate_allowable_matrices(1, 1, &[1], &[1]).unwrap().len(),
            2
        );
        assert_eq!(
            enumerate_allowable_matrices(1, 1, &[2], &[2]).unwrap().len(),
            7
        );
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let err = enumerate_allowable_matrices(1, 1, &[10], &[10]).unwrap_err();
        assert!(err.to_string().contains("budget"));
    }

    fn torus_params(k: usize, l: usize, max_sdeg: usize) -> HParams {
        let flavor = Flavor::Torus {
            id_grid: vec![vec![0, 1], vec![2, 3]],
        };
        let mut params = HParams::new(flavor, max_sdeg);
        params.k = k;
        params.l = l;
        params.b2.insert(0, x(0).mul(&dx(1)).mul(&dx(2)));
        params.b2.insert(1, x(1).mul(&dx(2)).mul(&dx(0)));
        params.b2.insert(2, x(2).mul(&dx(0)).mul(&dx(1)));
        params.b2.insert(3, x(0).mul(&dx(0)).mul(&dx(1)));
        params.a2.insert((0, 1), x(2).mul(&dx(0)));
        params.a2.insert((0, 2), dx(1));
        params.a2.insert((0, 3), x(0).mul(&dx(2)));
        params.a2.insert((1, 2), dx(0));
        params.a2.insert((1, 3), x(1).mul(&dx(1)));
        params.a2.insert((2, 3), dx(2));
        params.g3.insert((0, 1, 2), qc_i());
        params
            .g3
            .insert((0, 1, 3), qc_ratio(3, 5) + qc_ratio(4, 5) * qc_i());
        params.g3.insert((0, 2, 3), qc_zero() - qc_one());
        params
            .g3
            .insert((1, 2, 3), qc_ratio(5, 13) + qc_ratio(12, 13) * qc_i());
        params
    }

    /// Compositions of total t into `parts` nonnegative summands.
    fn compositions(t: usize, parts: usize) -> Vec<Vec<usize>> {
        if parts == 1 {
            return vec![vec![t]];
        }
        let mut out = Vec::new();
        for first in 0..=t {
            for mut rest in compositions(t - first, parts - 1) {
                let mut v = vec![first];
                v.append(&mut rest);
                out.push(v);
            }
        }
        out
    }

    #[test]
    fn torus_element_words_are_indexed_by_allowable_matrices() {
        let bound = 3usize;
        let params = torus_params(0, 0, bound);
        let h = build_h_element("torus_h2k2l", &params).unwrap();
        assert_eq!(h.total_degree(), Some(0));
        let mut covered: HashSet<Word> = HashSet::new();
        let mut plus = 0usize;
        let mut minus = 0usize;
        for m in 0..=bound {
            for n in 0..=(bound - m) {
                for ms in compositions(m, 2) {
                    for ns in compositions(n, 2) {
                        for mat in enumerate_allowable_matrices(2, 2, &ms, &ns).unwrap() {
                            // one factor of i per form slot (a cell 2-form
                            // covers an inner row and an inner column at
                            // once, so this is not m + n)
                            let twos: u32 = mat
                                .grid
                                .iter()
                                .flatten()
                                .filter(|&&v| v == 2)
                                .count() as u32;
                            let c = allowable_chain(&mat, &params)
                                .unwrap()
                                .scale(&qc_i().powu(twos));
                            // the expansion of one matrix carries a single
                            // overall sign relative to the element
                            let mut sign: Option<Qc> = None;
                            for (w, v) in &c.terms {
                                let hv = h.terms.get(w).unwrap_or_else(|| {
                                    panic!("element is missing an allowable word")
                                });
                                let ratio = hv.clone() / v.clone();
                                assert!(
                                    ratio == qc_one() || ratio == qc_zero() - qc_one(),
                                    "coefficient is not ± the indexed value"
                                );
                                match &sign {
                                    None => sign = Some(ratio),
                                    Some(s) => assert_eq!(*s, ratio),
                                }
                                assert!(covered.insert(w.clone()), "overlapping supports");
                            }
                            if sign == Some(qc_one()) {
                                plus += 1;
                            } else {
                                minus += 1;
                            }
                        }
                    }
                }
            }
        }
        let support: HashSet<Word> = h.terms.keys().cloned().collect();
        assert_eq!(covered, support);
        assert!(plus > 0);
        // record of the sign split; either outcome is consistent with the
        // per-matrix indexing being checked here
        let _ = minus;
    }

    #[test]
    fn twisted_torus_elements_are_homogeneous() {
        for (k, l, deg) in [(1usize, 0usize, 2i64), (0, 1, 2), (1, 1, 4)] {
            // each curvature-twist slot occupies one inner row and one
            // inner column, so the word bound must cover 2(k + l) factors
            let params = torus_params(k, l, 2 * (k + l));
            let h = build_h_element("torus_h2k2l", &params).unwrap();
            assert!(!h.is_zero(), "twist ({k},{l}) vanished");
            assert_eq!(h.total_degree(), Some(deg));
            for w in h.terms.keys() {
                let kt = w
                    .slots
                    .iter()
                    .filter(|s| s.basis.mask & (1 << CIRCLE_T) != 0)
                    .count();
                let lt = w
                    .slots
                    .iter()
                    .filter(|s| s.basis.mask & (1 << CIRCLE_U) != 0)
                    .count();
                assert_eq!((kt, lt), (k, l));
            }
        }
    }
}
