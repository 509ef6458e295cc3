//! Shared numerical kernels: Gauss–Legendre rules, spectral (Chebyshev)
//! cumulative integration, an adaptive Dormand–Prince matrix ODE step, and
//! naive-DFT trigonometric interpolation for periodic sample data.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Max-absolute-entry norm, the norm used by every tolerance in this crate.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn cident(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre polynomial P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-based initial guess, then Newton.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Composite Gauss–Legendre integration of a complex-matrix-valued function
/// over [a, b]: `subdiv` equal panels, an `order`-point rule on each.
pub fn integrate_matrix<F: FnMut(f64) -> CMat>(
    a: f64,
    b: f64,
    order: usize,
    subdiv: usize,
    mut f: F,
) -> CMat {
    let (nodes, weights) = gauss_legendre(order);
    let h = (b - a) / subdiv as f64;
    let mut acc: Option<CMat> = None;
    for s in 0..subdiv {
        let lo = a + s as f64 * h;
        for (x, w) in nodes.iter().zip(&weights) {
            let t = lo + 0.5 * h * (x + 1.0);
            let val = f(t) * Complex64::new(0.5 * h * w, 0.0);
            acc = Some(match acc {
                None => val,
                Some(m) => m + val,
            });
        }
    }
    acc.expect("subdiv >= 1")
}

/// Scalar version of [`integrate_matrix`].
pub fn integrate_scalar<F: FnMut(f64) -> Complex64>(
    a: f64,
    b: f64,
    order: usize,
    subdiv: usize,
    mut f: F,
) -> Complex64 {
    let m = integrate_matrix(a, b, order, subdiv, |t| {
        CMat::from_element(1, 1, f(t))
    });
    m[(0, 0)]
}

/// Chebyshev–Lobatto points on [0, 1] in increasing order: m+1 points.
pub fn cheb_points(m: usize) -> Vec<f64> {
    (0..=m)
        .map(|j| 0.5 * (1.0 - (PI * j as f64 / m as f64).cos()))
        .collect()
}

/// Cumulative-integration matrix Q on the Chebyshev–Lobatto grid of [0, 1]:
/// given values v_j = f(x_j) at the points of [`cheb_points`], (Q v)_j
/// approximates ∫_0^{x_j} f, spectrally accurate for smooth f.
///
/// Built by value→Chebyshev-coefficient transform, term-wise integration of the
/// Chebyshev series, and evaluation back at the grid.
pub fn cheb_cumulative_matrix(m: usize) -> DMatrix<f64> {
    // Work on [-1,1] with x_j = -cos(pi j / m) (increasing), scale by 1/2 at the end.
    let n = m + 1;
    // values -> coefficients: a_k = (2/m) sum'' v_j T_k(y_j), y_j = -cos(pi j/m).
    // T_k(y_j) = T_k(-cos(pi j/m)) = (-1)^k cos(pi j k / m).
    let mut v2c = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        for j in 0..n {
            let mut w = 2.0 / m as f64 * (PI * (j * k) as f64 / m as f64).cos();
            if j == 0 || j == m {
                w *= 0.5;
            }
            if k == 0 || k == m {
                w *= 0.5;
            }
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            v2c[(k, j)] = sign * w * 2.0;
            // note: the extra factor 2 and the k-halving follow the standard
            // DCT-I normalization with halved first/last coefficients folded in.
        }
    }
    // Fix normalization: with halved ends we want a_k such that
    // f(y) = sum_{k=0}^{m} a_k T_k(y) with a_0, a_m NOT halved in use.
    // The loop above produced a_k * 2 for interior k; rescale.
    for k in 0..n {
        for j in 0..n {
            v2c[(k, j)] *= 0.5;
        }
    }
    // coefficients a -> antiderivative coefficients b (degree m+1):
    // F' = f, F = sum b_k T_k, b_k = (a_{k-1} - a_{k+1}) / (2k), k >= 1,
    // with a_{m+1} = 0; b_0 fixed by F(y_0) = F(-1) = 0.
    let deg = n + 1;
    let mut c2b = DMatrix::<f64>::zeros(deg, n);
    for k in 1..deg {
        if k - 1 < n {
            c2b[(k, k - 1)] += 1.0 / (2.0 * k as f64);
        }
        if k + 1 < n {
            c2b[(k, k + 1)] -= 1.0 / (2.0 * k as f64);
        }
    }
    // ∫T_0 = T_1 exactly, so the a_0 → b_1 entry is 1, not 1/(2·1).
    c2b[(1, 0)] = 1.0;
    // evaluate F at grid minus F(-1):
    let mut b2v = DMatrix::<f64>::zeros(n, deg);
    for j in 0..n {
        let yj = -(PI * j as f64 / m as f64).cos();
        for k in 0..deg {
            b2v[(j, k)] = cheb_t(k, yj) - cheb_t(k, -1.0);
        }
    }
    // scale: interval [0,1] has half the length of [-1,1].
    b2v * c2b * v2c * 0.5
}

fn cheb_t(k: usize, x: f64) -> f64 {
    // numerically stable enough for |x| <= 1
    (k as f64 * x.acos()).cos()
}

/// Adaptive Dormand–Prince 5(4) integration of the matrix ODE
/// X'(t) = f(t, X), X(a) = x0, over [a, b], with per-step error tol `tol`.
pub fn dopri5<F: FnMut(f64, &CMat) -> CMat>(
    a: f64,
    b: f64,
    x0: CMat,
    tol: f64,
    mut f: F,
) -> Result<CMat, &'static str> {
    // Butcher tableau (Dormand–Prince).
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let dir = if b >= a { 1.0 } else { -1.0 };
    let mut t = a;
    let mut x = x0;
    let mut h = dir * ((b - a).abs() / 16.0).max(1e-8);
    let total = (b - a).abs();
    let mut steps = 0usize;
    while (t - b).abs() > 1e-14 * (1.0 + total) {
        if (h.abs()) < 1e-14 * (1.0 + total) {
            return Err("step-size underflow");
        }
        if dir * (t + h - b) > 0.0 {
            h = b - t;
        }
        let mut k: Vec<CMat> = Vec::with_capacity(7);
        for i in 0..7 {
            let mut xi = x.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[i][j] != 0.0 {
                    xi += kj * Complex64::new(h * A[i][j], 0.0);
                }
            }
            k.push(f(t + C[i] * h, &xi));
        }
        let mut x5 = x.clone();
        let mut x4 = x.clone();
        for i in 0..7 {
            if B5[i] != 0.0 {
                x5 += &k[i] * Complex64::new(h * B5[i], 0.0);
            }
            if B4[i] != 0.0 {
                x4 += &k[i] * Complex64::new(h * B4[i], 0.0);
            }
        }
        let err = max_abs(&(&x5 - &x4));
        let scale = tol * (1.0 + max_abs(&x));
        if err <= scale {
            t += h;
            x = x5;
        }
        let factor = if err > 0.0 {
            (0.9 * (scale / err).powf(0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
        steps += 1;
        if steps > 2_000_000 {
            return Err("step-size underflow");
        }
    }
    Ok(x)
}

/// Fourier coefficients (naive DFT) of N periodic samples f(j/N), j = 0..N-1.
/// Returns c_k for k = 0..N-1 with f(t) ≈ Σ_k c_k e^{2πi k' t}, where k' is the
/// signed alias of k into [-N/2, N/2].
pub fn dft(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len();
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &s) in samples.iter().enumerate() {
                let ang = -2.0 * PI * (k * j) as f64 / n as f64;
                acc += Complex64::from_polar(s, ang);
            }
            acc / n as f64
        })
        .collect()
}

fn signed_freq(k: usize, n: usize) -> f64 {
    if 2 * k < n {
        k as f64
    } else if 2 * k == n {
        0.0 // Nyquist handled separately
    } else {
        k as f64 - n as f64
    }
}

/// Trigonometric interpolation of a real periodic sample sequence: returns a
/// closure evaluating (value, derivative) at arbitrary t (period 1).
///
/// The Nyquist mode (even N) is kept as a pure cosine so the interpolant is
/// real and its derivative is odd-symmetric — the standard convention.
pub struct TrigInterp {
    coeffs: Vec<Complex64>,
    n: usize,
}

impl TrigInterp {
    pub fn new(samples: &[f64]) -> Self {
        let n = samples.len();
        TrigInterp {
            coeffs: dft(samples),
            n,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            if 2 * k == n {
                // Nyquist: c * cos(pi n t)
                acc += c.re * (PI * n as f64 * t).cos();
            } else {
                let f = signed_freq(k, n);
                let ph = Complex64::from_polar(1.0, 2.0 * PI * f * t);
                acc += (c * ph).re;
            }
        }
        acc
    }

    pub fn deriv(&self, t: f64) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            if 2 * k == n {
                acc += -c.re * PI * n as f64 * (PI * n as f64 * t).sin();
            } else {
                let f = signed_freq(k, n);
                let ph = Complex64::from_polar(1.0, 2.0 * PI * f * t)
                    * Complex64::new(0.0, 2.0 * PI * f);
                acc += (c * ph).re;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(4);
        // degree-7 polynomial integrated exactly by 4-point rule
        let integral: f64 = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| wi * (xi.powi(7) + 3.0 * xi.powi(2)))
            .sum();
        assert!((integral - 2.0).abs() < 1e-13);
    }

    #[test]
    fn cheb_cumulative_is_spectral() {
        let m = 16;
        let pts = cheb_points(m);
        let q = cheb_cumulative_matrix(m);
        let v = DVector::<f64>::from_iterator(m + 1, pts.iter().map(|&x| (3.0 * x).exp()));
        let cum = &q * v;
        for (j, &x) in pts.iter().enumerate() {
            let exact = ((3.0 * x).exp() - 1.0) / 3.0;
            assert!(
                (cum[j] - exact).abs() < 1e-12,
                "node {j}: got {} want {exact}",
                cum[j]
            );
        }
    }

    #[test]
    fn dopri_matches_exponential() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 1.3),
                Complex64::new(0.2, 0.0),
                Complex64::new(-0.2, 0.0),
                Complex64::new(0.0, -0.7),
            ],
        );
        let x = dopri5(0.0, 1.0, cident(2), 1e-12, |_, x| x * &a).unwrap();
        // reference by scaling-and-squaring of the series
        let mut expm = cident(2);
        let mut term = cident(2);
        for k in 1..30 {
            term = term * &a / Complex64::new(k as f64, 0.0);
            expm += &term;
        }
        assert!(max_abs(&(x - expm)) < 1e-10);
    }

    #[test]
    fn trig_interp_value_and_derivative() {
        let n = 32;
        let samples: Vec<f64> = (0..n)
            .map(|j| (2.0 * PI * j as f64 / n as f64).sin() + 0.3)
            .collect();
        let it = TrigInterp::new(&samples);
        for &t in &[0.13, 0.5, 0.77] {
            assert!((it.value(t) - ((2.0 * PI * t).sin() + 0.3)).abs() < 1e-12);
            assert!((it.deriv(t) - 2.0 * PI * (2.0 * PI * t).cos()).abs() < 1e-10);
        }
    }
}
