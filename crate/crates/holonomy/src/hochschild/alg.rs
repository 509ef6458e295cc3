//! Exact-arithmetic polynomial differential forms over the Gaussian
//! rationals: the coefficient algebra for the symbolic chain complexes.
//!
//! Forms live in ℚ(i)[x₀,…,x₄] ⊗ Λ(dx₀,…,dx₄). Variables 0–2 are manifold
//! coordinates; variables 3 and 4 are reserved for the auxiliary circle
//! directions used by the extended (curvature-inserted) elements. The ring is
//! not truncated: d² = 0, the Leibniz rule, and graded commutativity hold
//! exactly, which the symbolic identity tests rely on.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use std::collections::BTreeMap;

/// Number of polynomial/exterior generators (3 manifold + 2 circle).
pub const NVARS: usize = 5;

/// Exact Gaussian-rational scalar.
pub type Qc = num_complex::Complex<BigRational>;

pub fn qc_zero() -> Qc {
    Qc::new(BigRational::zero(), BigRational::zero())
}

pub fn qc_one() -> Qc {
    Qc::new(BigRational::one(), BigRational::zero())
}

pub fn qc_i() -> Qc {
    Qc::new(BigRational::zero(), BigRational::one())
}

pub fn qc_int(n: i64) -> Qc {
    Qc::new(BigRational::from_integer(BigInt::from(n)), BigRational::zero())
}

pub fn qc_ratio(num: i64, den: i64) -> Qc {
    Qc::new(
        BigRational::new(BigInt::from(num), BigInt::from(den)),
        BigRational::zero(),
    )
}

pub fn qc_is_zero(z: &Qc) -> bool {
    z.re.is_zero() && z.im.is_zero()
}

pub fn qc_to_f64(z: &Qc) -> Complex64 {
    fn rat(r: &BigRational) -> f64 {
        let n = r.numer();
        let d = r.denom();
        bigint_f64(n) / bigint_f64(d)
    }
    fn bigint_f64(b: &BigInt) -> f64 {
        b.to_string().parse::<f64>().unwrap_or(f64::NAN)
    }
    Complex64::new(rat(&z.re), rat(&z.im))
}

/// One basis monomial x^pows · dx_S (S encoded as a bitmask).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExBasis {
    pub pows: [u8; NVARS],
    pub mask: u8,
}

impl ExBasis {
    pub fn one() -> Self {
        ExBasis {
            pows: [0; NVARS],
            mask: 0,
        }
    }

    /// Exterior (form) degree: the number of dx factors.
    pub fn degree(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_unit(&self) -> bool {
        self.mask == 0 && self.pows.iter().all(|&p| p == 0)
    }

    /// Wedge two monomials: None when a dx repeats; otherwise the combined
    /// monomial and the sign from sorting the dx factors into ascending
    /// order (self's factors listed first).
    pub fn wedge(&self, other: &ExBasis) -> Option<(ExBasis, i32)> {
        if self.mask & other.mask != 0 {
            return None;
        }
        let mut pows = self.pows;
        for (p, q) in pows.iter_mut().zip(other.pows.iter()) {
            *p = p.checked_add(*q).expect("polynomial exponent overflow");
        }
        // count inversions: pairs (i in self, j in other) with j < i
        let mut swaps = 0u32;
        for j in 0..NVARS as u8 {
            if other.mask >> j & 1 == 1 {
                let higher = self.mask >> (j + 1);
                swaps += (higher as u8).count_ones();
            }
        }
        let sign = if swaps % 2 == 0 { 1 } else { -1 };
        Some((
            ExBasis {
                pows,
                mask: self.mask | other.mask,
            },
            sign,
        ))
    }
}

/// Exact polynomial differential form: a finite sum of basis monomials with
/// Gaussian-rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExForm {
    pub terms: BTreeMap<ExBasis, Qc>,
}

impl ExForm {
    pub fn zero() -> Self {
        ExForm {
            terms: BTreeMap::new(),
        }
    }

    pub fn one() -> Self {
        ExForm::constant(qc_one())
    }

    pub fn constant(c: Qc) -> Self {
        let mut f = ExForm::zero();
        f.push(ExBasis::one(), c);
        f
    }

    /// The coordinate function x_i.
    pub fn var(i: usize) -> Self {
        assert!(i < NVARS);
        let mut pows = [0; NVARS];
        pows[i] = 1;
        let mut f = ExForm::zero();
        f.push(ExBasis { pows, mask: 0 }, qc_one());
        f
    }

    /// The exterior generator dx_i.
    pub fn dvar(i: usize) -> Self {
        assert!(i < NVARS);
        let mut f = ExForm::zero();
        f.push(
            ExBasis {
                pows: [0; NVARS],
                mask: 1 << i,
            },
            qc_one(),
        );
        f
    }

    pub fn monomial(basis: ExBasis, coeff: Qc) -> Self {
        let mut f = ExForm::zero();
        f.push(basis, coeff);
        f
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn push(&mut self, basis: ExBasis, coeff: Qc) {
        if qc_is_zero(&coeff) {
            return;
        }
        let entry = self.terms.entry(basis).or_insert_with(qc_zero);
        *entry = entry.clone() + coeff;
        if qc_is_zero(entry) {
            self.terms.remove(&basis);
        }
    }

    pub fn add(&self, other: &ExForm) -> ExForm {
        let mut out = self.clone();
        for (b, c) in &other.terms {
            out.push(*b, c.clone());
        }
        out
    }

    pub fn neg(&self) -> ExForm {
        self.scale(&(qc_zero() - qc_one()))
    }

    pub fn sub(&self, other: &ExForm) -> ExForm {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &Qc) -> ExForm {
        let mut out = ExForm::zero();
        for (b, v) in &self.terms {
            out.push(*b, v.clone() * c.clone());
        }
        out
    }

    /// Graded (wedge) product.
    pub fn mul(&self, other: &ExForm) -> ExForm {
        let mut out = ExForm::zero();
        for (b1, c1) in &self.terms {
            for (b2, c2) in &other.terms {
                if let Some((b, s)) = b1.wedge(b2) {
                    out.push(b, c1.clone() * c2.clone() * qc_int(s as i64));
                }
            }
        }
        out
    }

    /// De Rham differential.
    pub fn d(&self) -> ExForm {
        let mut out = ExForm::zero();
        for (b, c) in &self.terms {
            for i in 0..NVARS {
                if b.pows[i] == 0 {
                    continue;
                }
                let mut pows = b.pows;
                pows[i] -= 1;
                let deriv = ExBasis { pows, mask: 0 };
                let dxi = ExBasis {
                    pows: [0; NVARS],
                    mask: 1 << (i as u8),
                };
                if let Some((db, s1)) = dxi.wedge(&ExBasis {
                    pows: deriv.pows,
                    mask: b.mask,
                }) {
                    out.push(
                        db,
                        c.clone() * qc_int(b.pows[i] as i64) * qc_int(s1 as i64),
                    );
                }
            }
        }
        out
    }

    /// Interior product with the coordinate vector field ∂/∂x_i.
    pub fn contract(&self, i: usize) -> ExForm {
        let bit = 1u8 << i;
        let mut out = ExForm::zero();
        for (b, c) in &self.terms {
            if b.mask & bit == 0 {
                continue;
            }
            let lower = (b.mask & (bit - 1)).count_ones();
            let sign = if lower % 2 == 0 { 1 } else { -1 };
            out.push(
                ExBasis {
                    pows: b.pows,
                    mask: b.mask & !bit,
                },
                c.clone() * qc_int(sign),
            );
        }
        out
    }

    /// Exterior degree when homogeneous (zero counts as any degree).
    pub fn homogeneous_degree(&self) -> Option<usize> {
        let mut deg = None;
        for b in self.terms.keys() {
            match deg {
                None => deg = Some(b.degree()),
                Some(d) if d == b.degree() => {}
                _ => return None,
            }
        }
        Some(deg.unwrap_or(0))
    }

    /// Evaluate as a differential form at a point on the given tangent
    /// vectors; only terms whose exterior degree matches the tuple length
    /// contribute.
    pub fn eval(&self, x: &[f64], vecs: &[&[f64]]) -> Complex64 {
        let k = vecs.len();
        let mut total = Complex64::new(0.0, 0.0);
        for (b, c) in &self.terms {
            if b.degree() != k {
                continue;
            }
            let mut poly = 1.0;
            for (i, &p) in b.pows.iter().enumerate() {
                if p > 0 {
                    let xi = x.get(i).copied().unwrap_or(0.0);
                    poly *= xi.powi(p as i32);
                }
            }
            let idx: Vec<usize> = (0..NVARS).filter(|&i| b.mask >> i & 1 == 1).collect();
            let det = alt_det(vecs, &idx);
            total += qc_to_f64(c) * poly * det;
        }
        total
    }
}

/// det of the k×k matrix [vecs[a][idx[b]]].
fn alt_det(vecs: &[&[f64]], idx: &[usize]) -> f64 {
    let k = idx.len();
    match k {
        0 => 1.0,
        1 => comp(vecs[0], idx[0]),
        2 => {
            comp(vecs[0], idx[0]) * comp(vecs[1], idx[1])
                - comp(vecs[0], idx[1]) * comp(vecs[1], idx[0])
        }
        _ => {
            // Laplace expansion along the first row; k ≤ 5 in practice.
            let mut acc = 0.0;
            for (j, &col) in idx.iter().enumerate() {
                let mut rest: Vec<usize> = idx.to_vec();
                rest.remove(j);
                let minor = alt_det(&vecs[1..], &rest);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * comp(vecs[0], col) * minor;
            }
            acc
        }
    }
}

fn comp(v: &[f64], i: usize) -> f64 {
    v.get(i).copied().unwrap_or(0.0)
}

/// Square matrix of exact polynomial forms (matrix-valued coefficients for
/// the bundle flavors).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyMat {
    pub n: usize,
    pub entries: Vec<ExForm>,
}

impl PolyMat {
    pub fn zero(n: usize) -> Self {
        PolyMat {
            n,
            entries: vec![ExForm::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = PolyMat::zero(n);
        for i in 0..n {
            m.entries[i * n + i] = ExForm::one();
        }
        m
    }

    pub fn scalar(f: ExForm) -> Self {
        PolyMat {
            n: 1,
            entries: vec![f],
        }
    }

    pub fn from_entries(n: usize, entries: Vec<ExForm>) -> Self {
        assert_eq!(entries.len(), n * n);
        PolyMat { n, entries }
    }

    pub fn at(&self, r: usize, c: usize) -> &ExForm {
        &self.entries[r * self.n + c]
    }

    pub fn set(&mut self, r: usize, c: usize, f: ExForm) {
        let n = self.n;
        self.entries[r * n + c] = f;
    }

    pub fn add(&self, other: &PolyMat) -> PolyMat {
        assert_eq!(self.n, other.n);
        PolyMat {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(other.entries.iter())
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn scale(&self, c: &Qc) -> PolyMat {
        PolyMat {
            n: self.n,
            entries: self.entries.iter().map(|f| f.scale(c)).collect(),
        }
    }

    pub fn mul(&self, other: &PolyMat) -> PolyMat {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = PolyMat::zero(n);
        for r in 0..n {
            for c in 0..n {
                let mut acc = ExForm::zero();
                for k in 0..n {
                    acc = acc.add(&self.at(r, k).mul(other.at(k, c)));
                }
                out.set(r, c, acc);
            }
        }
        out
    }

    pub fn d(&self) -> PolyMat {
        PolyMat {
            n: self.n,
            entries: self.entries.iter().map(|f| f.d()).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|f| f.is_zero())
    }

    /// Common exterior degree of all entries, when homogeneous.
    pub fn homogeneous_degree(&self) -> Option<usize> {
        let mut deg = None;
        for f in &self.entries {
            if f.is_zero() {
                continue;
            }
            match (deg, f.homogeneous_degree()) {
                (_, None) => return None,
                (None, d) => deg = d,
                (Some(a), Some(b)) if a == b => {}
                _ => return None,
            }
        }
        Some(deg.unwrap_or(0))
    }
}
