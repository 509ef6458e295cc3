//! Hochschild words, chains, differentials, and shuffle products in exact
//! arithmetic, for all four complex flavors: a single algebra over the
//! circle, an open-cover path subdivision, the two-dimensional grid of a
//! torus subdivision, and a simplicial surface.
//!
//! Words are stored fully expanded into monomial slots (a matrix unit times
//! one basis monomial per slot) in a fixed linear order: slot order for the
//! path flavors, row-major order for the grid, and the canonical simplex
//! enumeration for surfaces. The Koszul identifications of other linear
//! orders are applied on the way into this normal form, so chain equality is
//! literal coefficient equality.

use super::alg::{qc_int, qc_is_zero, qc_one, ExBasis, ExForm, Qc};
use crate::error::{HolError, Result};
use crate::surface::{Simplex, SimplicialSurface, SurfaceChartAssignment};
use serde_json::{json, Value};
use std::collections::HashMap;
use std::sync::Arc;

fn sign_pow(e: i64) -> i64 {
    if e.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

/// One tensor slot: the matrix unit E_{row,col} times a basis monomial.
/// Scalar-coefficient flavors keep row = col = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MonoSlot {
    pub row: u8,
    pub col: u8,
    pub basis: ExBasis,
}

impl MonoSlot {
    pub fn unit() -> Self {
        MonoSlot {
            row: 0,
            col: 0,
            basis: ExBasis::one(),
        }
    }

    pub fn scalar(basis: ExBasis) -> Self {
        MonoSlot {
            row: 0,
            col: 0,
            basis,
        }
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    /// Product of matrix-unit monomials; None when the matrix indices do not
    /// chain or a dx repeats. The sign comes from sorting the dx factors.
    fn mul(&self, other: &MonoSlot) -> Option<(MonoSlot, i32)> {
        if self.col != other.row {
            return None;
        }
        let (basis, sign) = self.basis.wedge(&other.basis)?;
        Some((
            MonoSlot {
                row: self.row,
                col: other.col,
                basis,
            },
            sign,
        ))
    }
}

/// Tensor shape of a word within its flavor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Shape {
    /// Module slot followed by n shifted factors.
    Interval { n: usize },
    /// Per segment j: one module slot then ns[j] shifted factors.
    Local { ns: Vec<usize> },
    /// Grid with ms[r] inner rows per row block and ns[s] inner columns per
    /// column block, stored row-major including edge rows/columns.
    Torus { ms: Vec<usize>, ns: Vec<usize> },
    /// One slot per (possibly degenerate) k-simplex in canonical order.
    Simplicial { k: usize },
}

impl Shape {
    pub fn simplicial_degree(&self) -> usize {
        match self {
            Shape::Interval { n } => *n,
            Shape::Local { ns } => ns.iter().sum(),
            Shape::Torus { ms, ns } => ms.iter().sum::<usize>() + ns.iter().sum::<usize>(),
            Shape::Simplicial { k } => *k,
        }
    }
}

/// A monomial tensor word: a shape plus one monomial per slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Word {
    pub shape: Shape,
    pub slots: Vec<MonoSlot>,
}

impl Word {
    pub fn total_degree(&self) -> i64 {
        self.slots.iter().map(|s| s.degree() as i64).sum::<i64>()
            - self.shape.simplicial_degree() as i64
    }
}

/// Complex flavor with the patch bookkeeping needed by the evaluation
/// bridge.
#[derive(Debug, Clone)]
pub enum Flavor {
    /// CH of a single (possibly matrix) algebra; n is the matrix size.
    Interval { n: usize },
    /// Path subdivision into p = patch_ids.len() segments.
    Local { n: usize, patch_ids: Vec<usize> },
    /// Torus grid; id_grid[k][l] is the patch of cell (k, l), p×q.
    Torus { id_grid: Vec<Vec<usize>> },
    /// Simplicial surface with one patch id per vertex/edge/face.
    Simplicial {
        surface: Arc<SimplicialSurface>,
        assign: SurfaceChartAssignment,
    },
}

impl Flavor {
    pub fn matrix_size(&self) -> usize {
        match self {
            Flavor::Interval { n } | Flavor::Local { n, .. } => *n,
            _ => 1,
        }
    }

    pub fn compatible(&self, other: &Flavor) -> bool {
        match (self, other) {
            (Flavor::Interval { n }, Flavor::Interval { n: n2 }) => n == n2,
            (
                Flavor::Local { n, patch_ids },
                Flavor::Local {
                    n: n2,
                    patch_ids: p2,
                },
            ) => n == n2 && patch_ids == p2,
            (Flavor::Torus { id_grid }, Flavor::Torus { id_grid: g2 }) => id_grid == g2,
            (
                Flavor::Simplicial { surface, assign },
                Flavor::Simplicial {
                    surface: s2,
                    assign: a2,
                },
            ) => {
                Arc::ptr_eq(surface, s2)
                    && assign.vertex == a2.vertex
                    && assign.edge == a2.edge
                    && assign.face == a2.face
            }
            _ => false,
        }
    }
}

/// A finite exact-coefficient sum of monomial words of one flavor.
#[derive(Debug, Clone)]
pub struct HochschildChain {
    pub flavor: Flavor,
    pub terms: HashMap<Word, Qc>,
}

impl HochschildChain {
    pub fn zero(flavor: Flavor) -> Self {
        HochschildChain {
            flavor,
            terms: HashMap::new(),
        }
    }

    /// The unit of the shuffle algebra: the empty-shape word with identity
    /// matrices (expanded over the diagonal) in every module slot.
    pub fn unit(flavor: Flavor) -> Self {
        let n = flavor.matrix_size();
        let mut out = HochschildChain::zero(flavor.clone());
        match &flavor {
            Flavor::Interval { .. } => {
                for r in 0..n {
                    out.add_word(
                        Word {
                            shape: Shape::Interval { n: 0 },
                            slots: vec![MonoSlot {
                                row: r as u8,
                                col: r as u8,
                                basis: ExBasis::one(),
                            }],
                        },
                        qc_one(),
                    );
                }
            }
            Flavor::Local { patch_ids, .. } => {
                let p = patch_ids.len();
                let mut diag = vec![0usize; p];
                loop {
                    out.add_word(
                        Word {
                            shape: Shape::Local { ns: vec![0; p] },
                            slots: diag
                                .iter()
                                .map(|&r| MonoSlot {
                                    row: r as u8,
                                    col: r as u8,
                                    basis: ExBasis::one(),
                                })
                                .collect(),
                        },
                        qc_one(),
                    );
                    // advance the diagonal multi-index
                    let mut k = 0;
                    while k < p {
                        diag[k] += 1;
                        if diag[k] < n {
                            break;
                        }
                        diag[k] = 0;
                        k += 1;
                    }
                    if k == p {
                        break;
                    }
                }
            }
            Flavor::Torus { id_grid } => {
                let p = id_grid.len();
                let q = id_grid[0].len();
                out.add_word(
                    Word {
                        shape: Shape::Torus {
                            ms: vec![0; p],
                            ns: vec![0; q],
                        },
                        slots: vec![MonoSlot::unit(); p * q],
                    },
                    qc_one(),
                );
            }
            Flavor::Simplicial { surface, .. } => {
                let slots = surface.simplices(0).len();
                out.add_word(
                    Word {
                        shape: Shape::Simplicial { k: 0 },
                        slots: vec![MonoSlot::unit(); slots],
                    },
                    qc_one(),
                );
            }
        }
        out
    }

    pub fn add_word(&mut self, word: Word, coeff: Qc) {
        if qc_is_zero(&coeff) {
            return;
        }
        let entry = self.terms.entry(word).or_insert_with(super::alg::qc_zero);
        *entry = entry.clone() + coeff;
        if qc_is_zero(entry) {
            self.terms.retain(|_, c| !qc_is_zero(c));
        }
    }

    pub fn add(&self, other: &HochschildChain) -> HochschildChain {
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_word(w.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, c: &Qc) -> HochschildChain {
        let mut out = HochschildChain::zero(self.flavor.clone());
        for (w, v) in &self.terms {
            out.add_word(w.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn sub(&self, other: &HochschildChain) -> HochschildChain {
        self.add(&other.scale(&(super::alg::qc_zero() - qc_one())))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn equals(&self, other: &HochschildChain) -> bool {
        self.sub(other).is_zero()
    }

    /// Common total degree, when homogeneous.
    pub fn total_degree(&self) -> Option<i64> {
        let mut deg = None;
        for w in self.terms.keys() {
            match deg {
                None => deg = Some(w.total_degree()),
                Some(d) if d == w.total_degree() => {}
                _ => return None,
            }
        }
        deg
    }

    /// Drop all words of simplicial degree above the bound.
    pub fn truncate(&self, max_sdeg: usize) -> HochschildChain {
        let mut out = HochschildChain::zero(self.flavor.clone());
        for (w, c) in &self.terms {
            if w.shape.simplicial_degree() <= max_sdeg {
                out.add_word(w.clone(), c.clone());
            }
        }
        out
    }

    /// Documented JSON term format: flavor, shapes, slots, and exact
    /// coefficients as "numerator/denominator" strings.
    pub fn to_json(&self) -> Value {
        let flavor = match &self.flavor {
            Flavor::Interval { n } => json!({"kind": "interval", "matrix_size": n}),
            Flavor::Local { n, patch_ids } => {
                json!({"kind": "local", "matrix_size": n, "patch_ids": patch_ids})
            }
            Flavor::Torus { id_grid } => json!({"kind": "torus", "id_grid": id_grid}),
            Flavor::Simplicial { assign, .. } => json!({
                "kind": "simplicial",
                "vertex_ids": assign.vertex,
                "edge_ids": assign.edge,
                "face_ids": assign.face,
            }),
        };
        let mut words: Vec<Value> = self
            .terms
            .iter()
            .map(|(w, c)| {
                let shape = match &w.shape {
                    Shape::Interval { n } => json!({"interval": n}),
                    Shape::Local { ns } => json!({"local": ns}),
                    Shape::Torus { ms, ns } => json!({"torus": {"ms": ms, "ns": ns}}),
                    Shape::Simplicial { k } => json!({"simplicial": k}),
                };
                let slots: Vec<Value> = w
                    .slots
                    .iter()
                    .map(|s| {
                        json!({
                            "row": s.row,
                            "col": s.col,
                            "pows": s.basis.pows.to_vec(),
                            "dx_mask": s.basis.mask,
                        })
                    })
                    .collect();
                json!({
                    "shape": shape,
                    "slots": slots,
                    "re": format!("{}/{}", c.re.numer(), c.re.denom()),
                    "im": format!("{}/{}", c.im.numer(), c.im.denom()),
                })
            })
            .collect();
        words.sort_by_key(|v| v.to_string());
        json!({"flavor": flavor, "words": words})
    }
}

/// Koszul sign of reassembling the source slots into `target` order
/// (target[i] = source index placed at position i), counting only crossings
/// of odd-parity slots.
fn koszul_reorder_sign(parities: &[bool], target: &[usize]) -> i64 {
    let odd: Vec<usize> = target.iter().copied().filter(|&i| parities[i]).collect();
    let mut sign = 1i64;
    for i in 0..odd.len() {
        for j in (i + 1)..odd.len() {
            if odd[i] > odd[j] {
                sign = -sign;
            }
        }
    }
    sign
}

/// Multiply the word's slots together in groups. groups[t] lists the source
/// slots (in product order) merged into target slot t; an empty group
/// produces a scalar unit slot. When `reorder_parities` is given, the Koszul
/// sign of bringing the flattened group order out of the original slot order
/// is included; otherwise the caller's sign convention is assumed complete.
fn merge_slots(
    slots: &[MonoSlot],
    groups: &[Vec<usize>],
    reorder_parities: Option<&[bool]>,
    new_shape: Shape,
) -> Option<(Word, i64)> {
    let mut sign = 1i64;
    if let Some(par) = reorder_parities {
        let flat: Vec<usize> = groups.iter().flatten().copied().collect();
        debug_assert_eq!(flat.len(), slots.len());
        sign *= koszul_reorder_sign(par, &flat);
    }
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let mut acc: Option<MonoSlot> = None;
        for &i in g {
            acc = Some(match acc {
                None => slots[i],
                Some(prev) => {
                    let (next, s) = prev.mul(&slots[i])?;
                    sign *= s as i64;
                    next
                }
            });
        }
        out.push(acc.unwrap_or_else(MonoSlot::unit));
    }
    Some((
        Word {
            shape: new_shape,
            slots: out,
        },
        sign,
    ))
}

/// Expand the De Rham differential of one slot into monomial words, with the
/// given overall sign.
fn d_slot_terms(word: &Word, t: usize, sign: i64, out: &mut Vec<(Word, Qc)>) {
    let slot = word.slots[t];
    let df = ExForm::monomial(slot.basis, qc_one()).d();
    for (b, c) in &df.terms {
        let mut w = word.clone();
        w.slots[t] = MonoSlot {
            row: slot.row,
            col: slot.col,
            basis: *b,
        };
        out.push((w, c.clone() * qc_int(sign)));
    }
}

// ---------------------------------------------------------------------------
// Differentials
// ---------------------------------------------------------------------------

/// The Hochschild differential of the chain's flavor: De Rham on each slot
/// plus the cyclic slot multiplications, with the flavor's sign bookkeeping.
pub fn hochschild_differential(chain: &HochschildChain) -> HochschildChain {
    let mut out = HochschildChain::zero(chain.flavor.clone());
    for (word, coeff) in &chain.terms {
        let terms = match (&chain.flavor, &word.shape) {
            (_, Shape::Interval { n }) => path_differential(word, &[*n], true),
            (_, Shape::Local { ns }) => path_differential(word, &ns.clone(), false),
            (_, Shape::Torus { ms, ns }) => torus_differential(word, &ms.clone(), &ns.clone()),
            (Flavor::Simplicial { surface, .. }, Shape::Simplicial { k }) => {
                simplicial_differential(word, *k, surface)
            }
            _ => panic!("word shape does not match chain flavor"),
        };
        for (w, c) in terms {
            out.add_word(w, c * coeff.clone());
        }
    }
    out
}

/// Differential of the path flavors (single-algebra interval and open-cover
/// local): De Rham terms with shifted-prefix signs, adjacent multiplications
/// never joining two module slots, and the cyclic last-into-first term.
fn path_differential(word: &Word, ns: &[usize], interval: bool) -> Vec<(Word, Qc)> {
    let p = ns.len();
    let len = word.slots.len();
    // per-slot segment and module flags in linear order
    let mut seg_of = Vec::with_capacity(len);
    let mut is_module = Vec::with_capacity(len);
    for (j, &nj) in ns.iter().enumerate() {
        seg_of.push(j);
        is_module.push(true);
        for _ in 0..nj {
            seg_of.push(j);
            is_module.push(false);
        }
    }
    debug_assert_eq!(seg_of.len(), len);
    // inclusive shifted-degree prefix sums
    let mut eps = vec![0i64; len + 1];
    for t in 0..len {
        let shift = if is_module[t] { 0 } else { 1 };
        eps[t + 1] = eps[t] + word.slots[t].degree() as i64 + shift;
    }
    let make_shape = |ns: Vec<usize>| {
        if interval {
            Shape::Interval { n: ns[0] }
        } else {
            Shape::Local { ns }
        }
    };

    let mut out = Vec::new();
    // De Rham terms; each module slot's exponent is its prefix minus one
    for t in 0..len {
        let shift = if is_module[t] { 1 } else { 0 };
        d_slot_terms(word, t, -sign_pow(eps[t] + shift), &mut out);
    }
    // adjacent multiplications (skipping module·module pairs)
    for t in 0..len.saturating_sub(1) {
        if is_module[t] && is_module[t + 1] {
            continue;
        }
        let mut ns_new = ns.to_vec();
        let seg = if is_module[t + 1] { seg_of[t] } else { seg_of[t + 1] };
        ns_new[seg] -= 1;
        let groups: Vec<Vec<usize>> = (0..len)
            .filter(|&u| u != t + 1)
            .map(|u| if u == t { vec![t, t + 1] } else { vec![u] })
            .collect();
        // a factor·module pair at a segment boundary uses the prefix before
        // the factor; squaring to zero forces this exponent
        let exp = if is_module[t + 1] { eps[t] + 1 } else { eps[t + 1] };
        if let Some((w, s)) = merge_slots(&word.slots, &groups, None, make_shape(ns_new)) {
            out.push((w, qc_int(-sign_pow(exp) * s)));
        }
    }
    // cyclic term: (last factor · first module) when the last slot is a factor
    if *ns.last().unwrap() >= 1 {
        let last = len - 1;
        let exp = (word.slots[last].degree() as i64 + 1) * eps[last];
        let mut ns_new = ns.to_vec();
        ns_new[p - 1] -= 1;
        let mut groups: Vec<Vec<usize>> = vec![vec![last, 0]];
        groups.extend((1..last).map(|u| vec![u]));
        if let Some((w, s)) = merge_slots(&word.slots, &groups, None, make_shape(ns_new)) {
            out.push((w, qc_int(sign_pow(exp) * s)));
        }
    }
    out
}

/// Row/column layout of a torus-grid word: for each grid line (row or
/// column), the block it belongs to and whether it is an edge line.
fn grid_lines(blocks: &[usize]) -> Vec<(usize, bool)> {
    let mut lines = Vec::new();
    for (r, &mr) in blocks.iter().enumerate() {
        lines.push((r, true));
        for _ in 0..mr {
            lines.push((r, false));
        }
    }
    lines
}

/// Differential of the torus-grid flavor: prefixed De Rham plus the cyclic
/// row and column multiplications with the printed alternating signs;
/// internal Koszul reorderings use the plain form degrees of the row-major
/// linear order.
fn torus_differential(word: &Word, ms: &[usize], ns: &[usize]) -> Vec<(Word, Qc)> {
    let m: usize = ms.iter().sum();
    let n: usize = ns.iter().sum();
    let rows = grid_lines(ms);
    let cols = grid_lines(ns);
    let nrows = rows.len();
    let ncols = cols.len();
    debug_assert_eq!(word.slots.len(), nrows * ncols);
    let parities: Vec<bool> = word.slots.iter().map(|s| s.degree() % 2 == 1).collect();
    let sdeg = (m + n) as i64;
    let mut out = Vec::new();

    // De Rham with plain graded-derivation prefixes
    let mut prefix = 0i64;
    for t in 0..word.slots.len() {
        d_slot_terms(word, t, sign_pow(sdeg) * sign_pow(prefix), &mut out);
        prefix += word.slots[t].degree() as i64;
    }

    // row multiplications d↕: j-th and (j+1)-th row, cyclically
    for j in 1..=nrows {
        let ra = j - 1;
        let rb = j % nrows;
        if rows[ra].1 && rows[rb].1 {
            continue; // two edge rows are never multiplied
        }
        if ra == rb {
            continue; // single-row grid has no cyclic partner
        }
        let inner_row = if rows[ra].1 { rb } else { ra };
        let mut ms_new = ms.to_vec();
        ms_new[rows[inner_row].0] -= 1;
        let cyclic = rb < ra;
        // groups in row-major order of the result grid
        let mut groups = Vec::new();
        for r in 0..nrows {
            if r == ra && !cyclic {
                continue; // merged into rb's position? (see below)
            }
            if r == rb && cyclic {
                for c in 0..ncols {
                    groups.push(vec![ra * ncols + c, rb * ncols + c]);
                }
                continue;
            }
            if r == ra && cyclic {
                continue;
            }
            if r == rb {
                // non-cyclic: the merged row sits where the pair was
                for c in 0..ncols {
                    groups.push(vec![ra * ncols + c, rb * ncols + c]);
                }
                continue;
            }
            for c in 0..ncols {
                groups.push(vec![r * ncols + c]);
            }
        }
        let shape = Shape::Torus {
            ms: ms_new,
            ns: ns.to_vec(),
        };
        if let Some((w, s)) = merge_slots(&word.slots, &groups, Some(&parities), shape) {
            let sgn = sign_pow(sdeg + 1) * sign_pow(j as i64 + 1) * s;
            out.push((w, qc_int(sgn)));
        }
    }

    // column multiplications d↔
    for j in 1..=ncols {
        let ca = j - 1;
        let cb = j % ncols;
        if cols[ca].1 && cols[cb].1 {
            continue;
        }
        if ca == cb {
            continue;
        }
        let inner_col = if cols[ca].1 { cb } else { ca };
        let mut ns_new = ns.to_vec();
        ns_new[cols[inner_col].0] -= 1;
        let cyclic = cb < ca;
        let keep: Vec<usize> = (0..ncols)
            .filter(|&c| c != if cyclic { ca } else { ca.max(cb) })
            .collect();
        let merged_col = if cyclic { cb } else { ca.min(cb) };
        let mut groups = Vec::new();
        for r in 0..nrows {
            for &c in &keep {
                if c == merged_col {
                    groups.push(vec![r * ncols + ca, r * ncols + cb]);
                } else {
                    groups.push(vec![r * ncols + c]);
                }
            }
        }
        let shape = Shape::Torus {
            ms: ms.to_vec(),
            ns: ns_new,
        };
        if let Some((w, s)) = merge_slots(&word.slots, &groups, Some(&parities), shape) {
            let sgn =
                sign_pow(sdeg + 1) * sign_pow((m + ms.len()) as i64 + j as i64 + 1) * s;
            out.push((w, qc_int(sgn)));
        }
    }
    out
}

/// Differential of the simplicial flavor: signed De Rham plus the
/// alternating face-map multiplications, grouping slots by their face image
/// with plain-degree Koszul reordering.
fn simplicial_differential(
    word: &Word,
    k: usize,
    surface: &Arc<SimplicialSurface>,
) -> Vec<(Word, Qc)> {
    let parities: Vec<bool> = word.slots.iter().map(|s| s.degree() % 2 == 1).collect();
    let mut out = Vec::new();
    let mut prefix = 0i64;
    for t in 0..word.slots.len() {
        d_slot_terms(word, t, sign_pow(k as i64) * sign_pow(prefix), &mut out);
        prefix += word.slots[t].degree() as i64;
    }
    if k == 0 {
        return out;
    }
    let simp_k = surface.simplices(k);
    debug_assert_eq!(simp_k.len(), word.slots.len());
    let simp_lo = surface.simplices(k - 1);
    let index: HashMap<Simplex, usize> = simp_lo
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    for i in 0..=k {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); simp_lo.len()];
        for (t, x) in simp_k.iter().enumerate() {
            let y = surface
                .apply_d(i, x)
                .expect("face map defined on every k-simplex");
            groups[*index.get(&y).expect("face image is a canonical simplex")].push(t);
        }
        let shape = Shape::Simplicial { k: k - 1 };
        if let Some((w, s)) = merge_slots(&word.slots, &groups, Some(&parities), shape) {
            let sgn = sign_pow(k as i64 + 1) * sign_pow(i as i64 + 1) * s;
            out.push((w, qc_int(sgn)));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Shuffle products
// ---------------------------------------------------------------------------

/// Ascending interleavings of k + l positions: (positions of the first
/// block, positions of the second, permutation sign).
fn interleavings(k: usize, l: usize) -> Vec<(Vec<usize>, Vec<usize>, i64)> {
    crate::geometry::shuffles(k, l)
        .into_iter()
        .map(|(a, b, s)| (a, b, if s > 0.0 { 1 } else { -1 }))
        .collect()
}

/// Shuffle product of two chains of the same flavor.
pub fn shuffle(a: &HochschildChain, b: &HochschildChain) -> Result<HochschildChain> {
    if !a.flavor.compatible(&b.flavor) {
        return Err(HolError::Invalid(
            "shuffle requires chains of the same flavor and patch assignment".into(),
        ));
    }
    let mut out = HochschildChain::zero(a.flavor.clone());
    for (wa, ca) in &a.terms {
        for (wb, cb) in &b.terms {
            let coeff = ca.clone() * cb.clone();
            let terms = match (&wa.shape, &wb.shape) {
                (Shape::Interval { n }, Shape::Interval { n: n2 }) => {
                    path_shuffle(wa, wb, &[*n], &[*n2], true)
                }
                (Shape::Local { ns }, Shape::Local { ns: ns2 }) => {
                    path_shuffle(wa, wb, &ns.clone(), &ns2.clone(), false)
                }
                (Shape::Torus { ms, ns }, Shape::Torus { ms: ms2, ns: ns2 }) => {
                    torus_shuffle(wa, wb, &ms.clone(), &ns.clone(), &ms2.clone(), &ns2.clone())
                }
                (Shape::Simplicial { k }, Shape::Simplicial { k: k2 }) => {
                    let surface = match &a.flavor {
                        Flavor::Simplicial { surface, .. } => surface,
                        _ => unreachable!(),
                    };
                    simplicial_shuffle(wa, wb, *k, *k2, surface)
                }
                _ => {
                    return Err(HolError::Invalid(
                        "words of mismatched shapes cannot be shuffled".into(),
                    ))
                }
            };
            for (w, c) in terms {
                out.add_word(w, c * coeff.clone());
            }
        }
    }
    Ok(out)
}

/// Path-flavor shuffle: per-segment interleavings of the shifted factors,
/// module slots multiplied pairwise; all signs from the Koszul rule with
/// factors shifted by one.
fn path_shuffle(
    wa: &Word,
    wb: &Word,
    ns_a: &[usize],
    ns_b: &[usize],
    interval: bool,
) -> Vec<(Word, Qc)> {
    let p = ns_a.len();
    debug_assert_eq!(p, ns_b.len());
    let la = wa.slots.len();
    // source = a slots then b slots; parities use shifted degrees
    let mut parities = Vec::new();
    let mut seg_start_a = vec![0usize; p];
    let mut seg_start_b = vec![0usize; p];
    {
        let mut pos = 0;
        for (j, &nj) in ns_a.iter().enumerate() {
            seg_start_a[j] = pos;
            parities.push(wa.slots[pos].degree() % 2 == 1); // module, unshifted
            pos += 1;
            for t in 0..nj {
                parities.push((wa.slots[pos + t].degree() + 1) % 2 == 1);
            }
            pos += nj;
        }
        let mut pos = 0;
        for (j, &nj) in ns_b.iter().enumerate() {
            seg_start_b[j] = pos;
            parities.push(wb.slots[pos].degree() % 2 == 1);
            pos += 1;
            for t in 0..nj {
                parities.push((wb.slots[pos + t].degree() + 1) % 2 == 1);
            }
            pos += nj;
        }
    }
    let slots: Vec<MonoSlot> = wa
        .slots
        .iter()
        .chain(wb.slots.iter())
        .copied()
        .collect();

    // enumerate independent per-segment interleavings
    let per_seg: Vec<_> = (0..p)
        .map(|j| interleavings(ns_a[j], ns_b[j]))
        .collect();
    let mut choice = vec![0usize; p];
    let mut out = Vec::new();
    loop {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for j in 0..p {
            let (a_pos, b_pos, _) = &per_seg[j][choice[j]];
            groups.push(vec![seg_start_a[j], la + seg_start_b[j]]);
            let total = ns_a[j] + ns_b[j];
            let mut interleaved = vec![0usize; total];
            for (i, &pos) in a_pos.iter().enumerate() {
                interleaved[pos] = seg_start_a[j] + 1 + i;
            }
            for (i, &pos) in b_pos.iter().enumerate() {
                interleaved[pos] = la + seg_start_b[j] + 1 + i;
            }
            for idx in interleaved {
                groups.push(vec![idx]);
            }
        }
        let ns_new: Vec<usize> = (0..p).map(|j| ns_a[j] + ns_b[j]).collect();
        let shape = if interval {
            Shape::Interval { n: ns_new[0] }
        } else {
            Shape::Local { ns: ns_new }
        };
        if let Some((w, s)) = merge_slots(&slots, &groups, Some(&parities), shape) {
            out.push((w, qc_int(s)));
        }
        // advance the per-segment choice
        let mut j = 0;
        while j < p {
            choice[j] += 1;
            if choice[j] < per_seg[j].len() {
                break;
            }
            choice[j] = 0;
            j += 1;
        }
        if j == p {
            break;
        }
    }
    out
}

/// Positions of each grid line of one word inside its own row-major layout.
fn line_positions(blocks: &[usize]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut edge = Vec::new();
    let mut inner = Vec::new();
    let mut pos = 0;
    for &b in blocks {
        edge.push(pos);
        pos += 1;
        let mut v = Vec::new();
        for _ in 0..b {
            v.push(pos);
            pos += 1;
        }
        inner.push(v);
    }
    (edge, inner)
}

/// Torus-grid shuffle: independent per-block row and column interleavings,
/// the entrywise product of the two degeneracy-padded grids with plain
/// Koszul reordering, the interleaving permutation signs, and the stated
/// global prefactor.
fn torus_shuffle(
    wa: &Word,
    wb: &Word,
    ms_a: &[usize],
    ns_a: &[usize],
    ms_b: &[usize],
    ns_b: &[usize],
) -> Vec<(Word, Qc)> {
    let p = ms_a.len();
    let q = ns_a.len();
    debug_assert!(p == ms_b.len() && q == ns_b.len());
    let n_a: usize = ns_a.iter().sum();
    let m_b: usize = ms_b.iter().sum();
    let n_b: usize = ns_b.iter().sum();
    let la = wa.slots.len();
    let ncols_a = q + n_a;
    let ncols_b = q + n_b;

    let (row_edge_a, row_inner_a) = line_positions(ms_a);
    let (col_edge_a, col_inner_a) = line_positions(ns_a);
    let (row_edge_b, row_inner_b) = line_positions(ms_b);
    let (col_edge_b, col_inner_b) = line_positions(ns_b);

    // global prefactor from the stated formula
    let deg_a: i64 = wa.total_degree();
    let mut global = deg_a * (m_b + n_b) as i64;
    let mut nb_prefix = 0i64;
    for s in 0..q {
        global += ns_a[s] as i64 * (m_b as i64 + nb_prefix);
        nb_prefix += ns_b[s] as i64;
    }
    let mut mb_prefix = 0i64;
    for r in 0..p {
        global += ms_a[r] as i64 * mb_prefix;
        mb_prefix += ms_b[r] as i64;
    }

    let slots: Vec<MonoSlot> = wa
        .slots
        .iter()
        .chain(wb.slots.iter())
        .copied()
        .collect();
    let parities: Vec<bool> = slots.iter().map(|s| s.degree() % 2 == 1).collect();

    // enumerate row interleavings per row block and column per column block
    let row_shufs: Vec<_> = (0..p).map(|r| interleavings(ms_a[r], ms_b[r])).collect();
    let col_shufs: Vec<_> = (0..q).map(|s| interleavings(ns_a[s], ns_b[s])).collect();
    let mut row_choice = vec![0usize; p];
    let mut col_choice = vec![0usize; q];
    let mut out = Vec::new();
    loop {
        // build result line lists: Some((side, own line index)) per line,
        // None marks a shared edge line
        #[derive(Clone, Copy)]
        enum Line {
            Edge(usize),          // block index
            A(usize),             // row/col index within a's layout
            B(usize),
        }
        let mut sgn = 1i64;
        let mut rows: Vec<Line> = Vec::new();
        for r in 0..p {
            let (a_pos, b_pos, s) = &row_shufs[r][row_choice[r]];
            sgn *= s;
            rows.push(Line::Edge(r));
            let total = ms_a[r] + ms_b[r];
            let mut block = vec![Line::Edge(r); total];
            for (i, &posn) in a_pos.iter().enumerate() {
                block[posn] = Line::A(row_inner_a[r][i]);
            }
            for (i, &posn) in b_pos.iter().enumerate() {
                block[posn] = Line::B(row_inner_b[r][i]);
            }
            rows.extend(block);
        }
        let mut cols: Vec<Line> = Vec::new();
        for s_blk in 0..q {
            let (a_pos, b_pos, s) = &col_shufs[s_blk][col_choice[s_blk]];
            sgn *= s;
            cols.push(Line::Edge(s_blk));
            let total = ns_a[s_blk] + ns_b[s_blk];
            let mut block = vec![Line::Edge(s_blk); total];
            for (i, &posn) in a_pos.iter().enumerate() {
                block[posn] = Line::A(col_inner_a[s_blk][i]);
            }
            for (i, &posn) in b_pos.iter().enumerate() {
                block[posn] = Line::B(col_inner_b[s_blk][i]);
            }
            cols.extend(block);
        }
        // groups: entrywise product of the two padded grids, a then b
        let mut groups = Vec::with_capacity(rows.len() * cols.len());
        for &row in &rows {
            for &col in &cols {
                let mut g = Vec::new();
                let a_row = match row {
                    Line::Edge(r) => Some(row_edge_a[r]),
                    Line::A(i) => Some(i),
                    Line::B(_) => None,
                };
                let a_col = match col {
                    Line::Edge(s) => Some(col_edge_a[s]),
                    Line::A(i) => Some(i),
                    Line::B(_) => None,
                };
                if let (Some(r), Some(c)) = (a_row, a_col) {
                    g.push(r * ncols_a + c);
                }
                let b_row = match row {
                    Line::Edge(r) => Some(row_edge_b[r]),
                    Line::B(i) => Some(i),
                    Line::A(_) => None,
                };
                let b_col = match col {
                    Line::Edge(s) => Some(col_edge_b[s]),
                    Line::B(i) => Some(i),
                    Line::A(_) => None,
                };
                if let (Some(r), Some(c)) = (b_row, b_col) {
                    g.push(la + r * ncols_b + c);
                }
                groups.push(g);
            }
        }
        let shape = Shape::Torus {
            ms: (0..p).map(|r| ms_a[r] + ms_b[r]).collect(),
            ns: (0..q).map(|s| ns_a[s] + ns_b[s]).collect(),
        };
        if let Some((w, s)) = merge_slots(&slots, &groups, Some(&parities), shape) {
            out.push((w, qc_int(sgn * s * sign_pow(global))));
        }
        // advance choices
        let mut adv = 0;
        let total_axes = p + q;
        while adv < total_axes {
            if adv < p {
                row_choice[adv] += 1;
                if row_choice[adv] < row_shufs[adv].len() {
                    break;
                }
                row_choice[adv] = 0;
            } else {
                let s_blk = adv - p;
                col_choice[s_blk] += 1;
                if col_choice[s_blk] < col_shufs[s_blk].len() {
                    break;
                }
                col_choice[s_blk] = 0;
            }
            adv += 1;
        }
        if adv == total_axes {
            break;
        }
    }
    out
}

/// Simplicial shuffle: push both words up with degeneracies along each
/// (k, l)-interleaving, multiply slotwise, and apply the interleaving sign
/// together with the stated (−1)^{|a|·l} prefactor.
fn simplicial_shuffle(
    wa: &Word,
    wb: &Word,
    k: usize,
    l: usize,
    surface: &Arc<SimplicialSurface>,
) -> Vec<(Word, Qc)> {
    let simp_hi = surface.simplices(k + l);
    let index: HashMap<Simplex, usize> = simp_hi
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    let deg_a = wa.total_degree();
    let global = sign_pow(deg_a * l as i64);

    let slots: Vec<MonoSlot> = wa
        .slots
        .iter()
        .chain(wb.slots.iter())
        .copied()
        .collect();
    let la = wa.slots.len();
    let parities: Vec<bool> = slots.iter().map(|s| s.degree() % 2 == 1).collect();

    // push a word's slots along a sequence of degeneracies (applied in the
    // given order) and report where each original slot lands in Σ_{k+l}
    let push = |start_dim: usize, degs: &[usize]| -> Vec<Simplex> {
        let base = surface.simplices(start_dim);
        base.into_iter()
            .map(|mut x| {
                for &i in degs {
                    x = surface.apply_s(i, &x).expect("degeneracy in range");
                }
                x
            })
            .collect()
    };

    let mut out = Vec::new();
    for (a_pos, b_pos, sgn) in interleavings(k, l) {
        // positions are 0-based target levels; the degeneracy applied to a
        // at b's level j (1-based) is s_{j−1}, innermost first
        let degs_a: Vec<usize> = b_pos.iter().map(|&j| j).collect();
        let degs_b: Vec<usize> = a_pos.iter().map(|&j| j).collect();
        let a_images = push(k, &degs_a);
        let b_images = push(l, &degs_b);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); simp_hi.len()];
        for (t, y) in a_images.iter().enumerate() {
            groups[index[y]].push(t);
        }
        for (t, y) in b_images.iter().enumerate() {
            groups[index[y]].push(la + t);
        }
        let shape = Shape::Simplicial { k: k + l };
        if let Some((w, s)) = merge_slots(&slots, &groups, Some(&parities), shape) {
            out.push((w, qc_int(sgn * s * global)));
        }
    }
    out
}

/// The interval-flavor word 1 ⊗ A for a matrix form A, expanded into
/// monomial slots (the identity in the module slot, one basis term of A in
/// the factor slot).
pub fn interval_one_tensor(a: &super::alg::PolyMat) -> HochschildChain {
    let n = a.n;
    let mut out = HochschildChain::zero(Flavor::Interval { n });
    for r in 0..n {
        for i in 0..n {
            for j in 0..n {
                for (basis, coeff) in &a.at(i, j).terms {
                    out.add_word(
                        Word {
                            shape: Shape::Interval { n: 1 },
                            slots: vec![
                                MonoSlot {
                                    row: r as u8,
                                    col: r as u8,
                                    basis: ExBasis::one(),
                                },
                                MonoSlot {
                                    row: i as u8,
                                    col: j as u8,
                                    basis: *basis,
                                },
                            ],
                        },
                        coeff.clone(),
                    );
                }
            }
        }
    }
    out
}

/// Shuffle exponential Σ x^{•r}/r!, truncated by simplicial degree.
pub fn shuffle_exp(x: &HochschildChain, max_sdeg: usize) -> Result<HochschildChain> {
    shuffle_exp_filtered(x, max_sdeg, |_| true)
}

/// Shuffle exponential with an additional monotone word filter: `keep`
/// must be closed under taking subwords of shuffles (a dropped word can
/// never reappear inside a kept one), so pruning each power is exact.
pub fn shuffle_exp_filtered(
    x: &HochschildChain,
    max_sdeg: usize,
    keep: impl Fn(&Word) -> bool,
) -> Result<HochschildChain> {
    let prune = |c: &HochschildChain| -> HochschildChain {
        let mut out = HochschildChain::zero(c.flavor.clone());
        for (w, v) in &c.terms {
            if keep(w) {
                out.add_word(w.clone(), v.clone());
            }
        }
        out
    };
    // a power word below this much headroom cannot reach the bound again
    let x_min = x
        .terms
        .keys()
        .map(|w| w.shape.simplicial_degree())
        .min()
        .unwrap_or(0);
    let mut acc = prune(&HochschildChain::unit(x.flavor.clone()));
    let mut power = HochschildChain::unit(x.flavor.clone());
    let mut factorial = qc_one();
    let mut r = 1i64;
    loop {
        let mut feed = HochschildChain::zero(power.flavor.clone());
        for (w, v) in &power.terms {
            if w.shape.simplicial_degree() + x_min <= max_sdeg {
                feed.add_word(w.clone(), v.clone());
            }
        }
        if feed.is_zero() {
            break;
        }
        power = prune(&shuffle(&feed, x)?.truncate(max_sdeg));
        if power.is_zero() {
            break;
        }
        factorial = factorial * qc_int(r);
        let inv = qc_one() / factorial.clone();
        acc = acc.add(&power.scale(&inv));
        r += 1;
        if r > (max_sdeg as i64) + 2 {
            break;
        }
    }
    Ok(acc)
}
