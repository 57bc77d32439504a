//! Tridiagonal kernels shared by every best-constant and evolution computation.
//!
//! Quadratic forms on the midpoint grid couple only neighbouring nodes, so all
//! pencils here are symmetric tridiagonal. Eigenvalue location uses Sylvester
//! inertia (negative pivots of an `LDL^T` factorization) followed by shifted
//! inverse iteration.

use crate::error::{Error, Result};

/// General tridiagonal matrix stored by diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    /// `lower[i]` sits at row `i + 1`, column `i`.
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    /// `upper[i]` sits at row `i`, column `i + 1`.
    pub upper: Vec<f64>,
}

impl Tridiag {
    pub fn zeros(n: usize) -> Self {
        Tridiag {
            lower: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// `diag(w) * self`.
    pub fn row_scaled(&self, w: &[f64]) -> Tridiag {
        let n = self.len();
        let mut out = self.clone();
        for i in 0..n {
            out.diag[i] *= w[i];
            if i > 0 {
                out.lower[i - 1] *= w[i];
            }
            if i + 1 < n {
                out.upper[i] *= w[i];
            }
        }
        out
    }

    /// Largest absolute entry of `M - M^T`.
    pub fn asymmetry(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (l - u).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.diag)
            .chain(&self.upper)
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }
}

/// Symmetric tridiagonal matrix. `off[i]` couples `i` and `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn zeros(n: usize) -> Self {
        SymTridiag {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn diagonal(d: Vec<f64>) -> Self {
        let n = d.len();
        SymTridiag {
            diag: d,
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for i in 0..n.saturating_sub(1) {
            y[i] += self.off[i] * x[i + 1];
            y[i + 1] += self.off[i] * x[i];
        }
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s: f64 = self
            .diag
            .iter()
            .zip(x.iter().zip(y))
            .map(|(d, (a, b))| d * a * b)
            .sum();
        for i in 0..self.off.len() {
            s += self.off[i] * (x[i] * y[i + 1] + x[i + 1] * y[i]);
        }
        s
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &SymTridiag, beta: f64) -> SymTridiag {
        SymTridiag {
            diag: self
                .diag
                .iter()
                .zip(&other.diag)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
            off: self
                .off
                .iter()
                .zip(&other.off)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> SymTridiag {
        SymTridiag {
            diag: self.diag.iter().map(|v| alpha * v).collect(),
            off: self.off.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Restriction to the sorted index set `keep`. Entries coupling kept
    /// indices that were not neighbours in the full matrix are zero.
    pub fn restrict(&self, keep: &[usize]) -> SymTridiag {
        let diag = keep.iter().map(|&i| self.diag[i]).collect();
        let off = keep
            .windows(2)
            .map(|w| {
                if w[1] == w[0] + 1 {
                    self.off[w[0]]
                } else {
                    0.0
                }
            })
            .collect();
        SymTridiag { diag, off }
    }

    /// Number of negative pivots in `LDL^T` of `self`, which by Sylvester's
    /// law equals the number of negative eigenvalues.
    pub fn negative_count(&self) -> usize {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let tiny = scale * 1e-300;
        let mut count = 0;
        let mut d_prev = 0.0;
        for i in 0..self.len() {
            let mut d = self.diag[i];
            if i > 0 {
                d -= self.off[i - 1] * self.off[i - 1] / d_prev;
            }
            if d == 0.0 {
                d = -tiny;
            }
            if d < 0.0 {
                count += 1;
            }
            d_prev = d;
        }
        count
    }

    pub fn max_abs(&self) -> f64 {
        self.diag
            .iter()
            .chain(&self.off)
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    /// Solves `self * x = rhs` by `LDL^T` without pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: rhs.len(),
            });
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = self.diag[0];
        for i in 0..n {
            if i > 0 {
                l[i - 1] = self.off[i - 1] / d[i - 1];
                d[i] = self.diag[i] - l[i - 1] * self.off[i - 1];
            }
            if !(d[i].abs() > scale * 1e-300) || !d[i].is_finite() {
                return Err(Error::Evaluation(format!(
                    "singular tridiagonal pivot {} at row {i}",
                    d[i]
                )));
            }
        }
        let mut y = rhs.to_vec();
        for i in 1..n {
            y[i] -= l[i - 1] * y[i - 1];
        }
        for i in 0..n {
            y[i] /= d[i];
        }
        for i in (0..n - 1).rev() {
            y[i] -= l[i] * y[i + 1];
        }
        Ok(y)
    }

    pub fn to_tridiag(&self) -> Tridiag {
        Tridiag {
            lower: self.off.clone(),
            diag: self.diag.clone(),
            upper: self.off.clone(),
        }
    }
}

/// Result of a generalized eigenvalue computation.
#[derive(Debug, Clone)]
pub struct GenEig {
    pub mu: f64,
    /// Normalized so that `x^T B x = 1`.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Relative tolerance between successive Rayleigh quotients.
pub const EIG_TOL: f64 = 1e-10;
const EIG_MAX_ITER: usize = 200;

/// Number of generalized eigenvalues of `(a, b)` strictly below `sigma`
/// (`b` positive definite).
pub fn count_below(a: &SymTridiag, b: &SymTridiag, sigma: f64) -> usize {
    a.combine(1.0, b, -sigma).negative_count()
}

/// Smallest `mu` with `a x = mu b x`, for symmetric `a` and symmetric positive
/// definite `b`.
///
/// The eigenvalue is bracketed by inertia counts, then refined by inverse
/// iteration shifted just below it.
pub fn min_generalized_eigenvalue(a: &SymTridiag, b: &SymTridiag) -> Result<GenEig> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: b.len(),
        });
    }
    if n == 0 {
        return Err(Error::param("formA", "empty pencil"));
    }
    if b.negative_count() > 0 || b.diag.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Precondition(
            "right-hand form is not positive definite".into(),
        ));
    }

    // Upper bound from Rayleigh quotients of a couple of simple vectors.
    let ones = vec![1.0; n];
    let alt: Vec<f64> = (0..n)
        .map(|i| ((i as f64 + 0.5) * std::f64::consts::PI / n as f64).sin())
        .collect();
    let rq = |x: &[f64]| a.quad_form(x) / b.quad_form(x);
    let mut hi = rq(&ones).min(rq(&alt));
    let span = a.max_abs() / b.max_abs().max(f64::MIN_POSITIVE) + hi.abs() + 1.0;
    let mut bump = 1e-12 * span;
    while count_below(a, b, hi) == 0 {
        hi += bump;
        bump *= 2.0;
    }
    let mut step = span;
    let mut lo = hi - step;
    while count_below(a, b, lo) > 0 {
        step *= 2.0;
        lo = hi - step;
        if !lo.is_finite() {
            return Err(Error::NoConvergence {
                iterations: 0,
                last: hi,
            });
        }
    }
    for _ in 0..200 {
        let width = hi - lo;
        if width <= 1e-9 * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
        let mid = lo + 0.5 * width;
        if count_below(a, b, mid) == 0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let shift_gap = (hi - lo).max(1e-12 * hi.abs().max(1e-300));
    let sigma = lo - shift_gap;
    let shifted = a.combine(1.0, b, -sigma);
    let mut x: Vec<f64> = alt;
    let mut mu_prev = f64::NAN;
    for it in 1..=EIG_MAX_ITER {
        let bx = b.matvec(&x);
        let mut y = shifted.solve(&bx)?;
        let norm = b.quad_form(&y).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NoConvergence {
                iterations: it,
                last: mu_prev,
            });
        }
        y.iter_mut().for_each(|v| *v /= norm);
        let mu = a.quad_form(&y);
        x = y;
        if it >= 2 && (mu - mu_prev).abs() <= EIG_TOL * mu.abs().max(1e-300) {
            return Ok(GenEig {
                mu,
                vector: x,
                iterations: it,
            });
        }
        mu_prev = mu;
    }
    Err(Error::NoConvergence {
        iterations: EIG_MAX_ITER,
        last: mu_prev,
    })
}

/// Largest generalized eigenvalue of `(a, b)`.
pub fn max_generalized_eigenvalue(a: &SymTridiag, b: &SymTridiag) -> Result<GenEig> {
    let mut r = min_generalized_eigenvalue(&a.scaled(-1.0), b)?;
    r.mu = -r.mu;
    Ok(r)
}

/// Smallest `c` such that `c * r - l` is positive semidefinite, for `r`
/// positive semidefinite and `l` possibly indefinite, together with an
/// approximate null vector of `c * r - l`.
///
/// Returns the upper end of the final bracket, so `c * r - l` is certified
/// positive definite at the returned value.
pub fn sup_ratio(r: &SymTridiag, l: &SymTridiag) -> Result<(f64, Vec<f64>)> {
    let n = r.len();
    if l.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: l.len(),
        });
    }
    let pencil = |c: f64| r.combine(c, l, -1.0);
    if l.scaled(-1.0).negative_count() == 0 {
        return Err(Error::Precondition(
            "left-hand form has no positive direction".into(),
        ));
    }
    let mut hi = 1.0;
    let mut guard = 0;
    while pencil(hi).negative_count() > 0 {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::NoConvergence {
                iterations: guard,
                last: hi,
            });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pencil(mid).negative_count() == 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Inverse iteration on the nearly singular positive definite matrix.
    let m = pencil(hi * (1.0 + 1e-12));
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.1 * ((i as f64 + 0.5) * 2.3).sin())
        .collect();
    for _ in 0..8 {
        let y = match m.solve(&x) {
            Ok(y) => y,
            Err(_) => break,
        };
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            break;
        }
        x = y.into_iter().map(|v| v / norm).collect();
    }
    Ok((hi, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SymTridiag {
        SymTridiag {
            diag: vec![2.0; n],
            off: vec![-1.0; n - 1],
        }
    }

    #[test]
    fn solve_matches_matvec() {
        let a = laplacian(7);
        let x: Vec<f64> = (0..7).map(|i| (i as f64).cos()).collect();
        let y = a.solve(&a.matvec(&x)).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn inertia_counts_laplacian_spectrum() {
        let n = 10;
        let a = laplacian(n);
        let b = SymTridiag::identity(n);
        // eigenvalues 2 - 2 cos(k pi/(n+1)); four of them lie below 1.
        let below = (1..=n)
            .filter(|k| 2.0 - 2.0 * (*k as f64 * std::f64::consts::PI / (n + 1) as f64).cos() < 1.0)
            .count();
        assert_eq!(count_below(&a, &b, 1.0), below);
    }

    #[test]
    fn identity_pencil_has_unit_eigenvalue() {
        let a = laplacian(12);
        let r = min_generalized_eigenvalue(&a, &a).unwrap();
        assert!((r.mu - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_form_doubles_eigenvalue() {
        let a = laplacian(30);
        let b = SymTridiag::diagonal((0..30).map(|i| 1.0 + i as f64 * 0.1).collect());
        let r1 = min_generalized_eigenvalue(&a, &b).unwrap();
        let r2 = min_generalized_eigenvalue(&a.scaled(2.0), &b).unwrap();
        assert!((r2.mu - 2.0 * r1.mu).abs() < 1e-10 * r1.mu);
        let sign = r1.vector[5].signum() * r2.vector[5].signum();
        for (u, v) in r1.vector.iter().zip(&r2.vector) {
            assert!((u - sign * v).abs() < 1e-7);
        }
    }

    #[test]
    fn indefinite_pencil_finds_negative_eigenvalue() {
        let mut a = laplacian(20);
        a.diag[10] -= 5.0;
        let b = SymTridiag::identity(20);
        let r = min_generalized_eigenvalue(&a, &b).unwrap();
        assert!(r.mu < 0.0);
        let res: f64 = a
            .matvec(&r.vector)
            .iter()
            .zip(&r.vector)
            .map(|(ax, x)| (ax - r.mu * x).abs())
            .fold(0.0, f64::max);
        assert!(res < 1e-8);
    }

    #[test]
    fn sup_ratio_agrees_with_eigen_route() {
        let r = laplacian(25);
        let l = SymTridiag::diagonal(
            (0..25)
                .map(|i| 0.5 + (i as f64 * 0.3).sin().abs())
                .collect(),
        );
        let (c, _) = sup_ratio(&r, &l).unwrap();
        let mu = min_generalized_eigenvalue(&r, &l).unwrap().mu;
        assert!((c - 1.0 / mu).abs() < 1e-9 * c);
    }
}
