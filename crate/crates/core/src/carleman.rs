//! Carleman weights and numerical evaluation of both sides of the Carleman
//! inequalities on manufactured solutions of the adjoint problem.
//!
//! Every integrand carrying `exp(2 s phi)` is accumulated in log space:
//! near `t = 0, T` the factor underflows while `s^3 Theta^3` overflows, and
//! only their product is meaningful.

use serde::Serialize;

use crate::coefficients::{estimate_exponent, snap_exponent, BoundaryKind, CoefficientFn};
use crate::error::{Error, Result};
use crate::evolution::{Direction, ProblemSpec, Trajectory};
use crate::grid::{cumulative_integral, Grid};
use crate::testfns::{self, TrigSeries};

/// `Theta(t)` together with its logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaValue {
    pub value: f64,
    pub log: f64,
}

/// `Theta(t) = 1 / [t (T - t)]^4`.
pub fn theta(t: f64, horizon: f64) -> Result<ThetaValue> {
    if !(t > 0.0 && t < horizon) {
        return Err(Error::Pole { t, horizon });
    }
    let p = t * (horizon - t);
    Ok(ThetaValue {
        value: 1.0 / (p * p * p * p),
        log: -4.0 * p.ln(),
    })
}

/// Streaming log-sum-exp of signed terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSum {
    pos: (f64, f64),
    neg: (f64, f64),
}

impl Default for LogSum {
    fn default() -> Self {
        LogSum {
            pos: (f64::NEG_INFINITY, 0.0),
            neg: (f64::NEG_INFINITY, 0.0),
        }
    }
}

fn push(acc: &mut (f64, f64), log: f64) {
    if log == f64::NEG_INFINITY {
        return;
    }
    if log > acc.0 {
        acc.1 = acc.1 * (acc.0 - log).exp() + 1.0;
        acc.0 = log;
    } else {
        acc.1 += (log - acc.0).exp();
    }
}

fn log_of(acc: (f64, f64)) -> f64 {
    if acc.1 == 0.0 {
        f64::NEG_INFINITY
    } else {
        acc.0 + acc.1.ln()
    }
}

impl LogSum {
    /// Adds `sign * exp(log)`.
    pub fn add(&mut self, log: f64, sign: f64) {
        if sign >= 0.0 {
            push(&mut self.pos, log);
        } else {
            push(&mut self.neg, log);
        }
    }

    /// Adds `c` given directly; zero is skipped.
    pub fn add_value(&mut self, c: f64) {
        if c != 0.0 {
            self.add(c.abs().ln(), c.signum());
        }
    }

    pub fn merge(&mut self, other: &LogSum) {
        for (acc, o) in [(&mut self.pos, other.pos), (&mut self.neg, other.neg)] {
            push(acc, log_of(o));
        }
    }

    /// `(sign, log|sum|)`; sign is 0 for an empty or cancelling sum.
    pub fn signed_log(&self) -> (f64, f64) {
        let lp = log_of(self.pos);
        let ln = log_of(self.neg);
        if lp == f64::NEG_INFINITY && ln == f64::NEG_INFINITY {
            return (0.0, f64::NEG_INFINITY);
        }
        if lp >= ln {
            let d = 1.0 - (ln - lp).exp();
            if d <= 0.0 {
                (0.0, f64::NEG_INFINITY)
            } else {
                (1.0, lp + d.ln())
            }
        } else {
            (-1.0, ln + (1.0 - (lp - ln).exp()).ln())
        }
    }
}

/// Parameters of the degenerate spatial weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegenerateParams {
    pub d1: f64,
    /// Exponential rate `R`.
    pub rate: f64,
    pub d2: f64,
    /// The lower bound `d2` must exceed.
    pub d2_bound: f64,
    /// Exponent entering the bound.
    pub k_used: f64,
    pub x0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum NondegKind {
    /// Weight built from `g` and `h0`.
    Integral { r: f64, h0: f64 },
    /// Weight built from `zeta_1`.
    Exponential { r: f64, frak_d: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NondegParams {
    pub kind: NondegKind,
    pub frak_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum WeightKind {
    Degenerate(DegenerateParams),
    Nondegenerate(NondegParams),
}

/// Spatial weight sampled at the half points of a grid, with the horizon of
/// `Theta`; `phi(t, x) = Theta(t) * spatial(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanWeights {
    pub horizon: f64,
    pub half_points: Vec<f64>,
    /// `psi` (degenerate) or `rho_{0,1}` (nondegenerate) at the half points.
    pub spatial: Vec<f64>,
    pub kind: WeightKind,
    /// Boundary-term coefficients at `x = 0` and `x = 1`, without `s Theta`.
    pub boundary_coef: [f64; 2],
}

impl CarlemanWeights {
    /// `phi` at half point `j`.
    pub fn phi(&self, t: f64, j: usize) -> Result<f64> {
        Ok(theta(t, self.horizon)?.value * self.spatial[j])
    }

    pub fn max_spatial(&self) -> f64 {
        self.spatial
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_spatial(&self) -> f64 {
        self.spatial.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `(x, weight)` rows at the half points.
    pub fn rows(&self) -> Vec<(f64, f64)> {
        self.half_points
            .iter()
            .copied()
            .zip(self.spatial.iter().copied())
            .collect()
    }

    fn is_degenerate(&self) -> bool {
        matches!(self.kind, WeightKind::Degenerate(_))
    }
}

/// Degenerate weight `psi = d1 (int_{x0}^x (y-x0)/a e^{R (y-x0)^2} dy - d2)`
/// with `d2 = safety * bound`.
pub fn build_weights(
    spec: &ProblemSpec,
    d1: f64,
    rate: f64,
    safety: f64,
) -> Result<CarlemanWeights> {
    let x0 = spec.x0().ok_or_else(|| {
        Error::Unsupported("degenerate weights need a degenerate coefficient".into())
    })?;
    if !(d1 > 0.0) {
        return Err(Error::param("d1", "must be positive"));
    }
    if !(rate >= 0.0) {
        return Err(Error::param("R", "must be nonnegative"));
    }
    if !(safety > 1.0) {
        return Err(Error::param("safety", "must exceed 1"));
    }
    let grid = spec.grid()?;
    let k = snap_exponent(estimate_exponent(&spec.a, grid.nodes())?);
    if !(k < 2.0) {
        return Err(Error::Unsupported(format!(
            "exponent K1 = {k} is not below 2"
        )));
    }
    let a = &spec.a;
    let bound = ((1.0 - x0).powi(2) * (rate * (1.0 - x0).powi(2)).exp()
        / ((2.0 - k) * a.value(1.0)))
    .max(x0 * x0 * (rate * x0 * x0).exp() / ((2.0 - k) * a.value(0.0)));
    let d2 = safety * bound;
    let integral = cumulative_integral(&grid, grid.x0().unwrap_or(x0), |y| {
        (y - x0) / a.value(y) * (rate * (y - x0).powi(2)).exp()
    });
    let spatial: Vec<f64> = integral.iter().map(|v| d1 * (v - d2)).collect();
    let weights = CarlemanWeights {
        horizon: spec.horizon,
        half_points: grid.half_points(),
        spatial,
        kind: WeightKind::Degenerate(DegenerateParams {
            d1,
            rate,
            d2,
            d2_bound: bound,
            k_used: k,
            x0,
        }),
        boundary_coef: [
            d1 * (-x0) * (rate * x0 * x0).exp(),
            d1 * (1.0 - x0) * (rate * (1.0 - x0).powi(2)).exp(),
        ],
    };
    check_weight_invariants(&weights)?;
    Ok(weights)
}

/// Choice of nondegenerate weight.
pub enum NondegVariant<'a> {
    /// `rho = -r [int_0^x a^{-1/2} (int_t^1 g + h0) dt] - c`.
    Integral {
        g: &'a dyn Fn(f64) -> f64,
        h0: f64,
        r: f64,
    },
    /// `rho = exp(r zeta_1) - c`, `zeta_1 = ||a'||_inf int_x^1 1/a`.
    Exponential { r: f64 },
}

/// Points of the composite rule for `int_t^1 g`.
const INNER_POINTS: usize = 64;

fn tail_integral(g: &dyn Fn(f64) -> f64, t: f64) -> f64 {
    let dx = (1.0 - t) / INNER_POINTS as f64;
    (0..INNER_POINTS)
        .map(|i| g(t + (i as f64 + 0.5) * dx))
        .sum::<f64>()
        * dx
}

/// Nondegenerate weight `rho_{0,1}` on the spec's grid. `frak_c` overrides
/// the constant; by default it is 1 for the integral variant and
/// `safety * max exp(r zeta_1)` for the exponential one.
pub fn nondeg_weights(
    spec: &ProblemSpec,
    variant: NondegVariant<'_>,
    frak_c: Option<f64>,
    safety: f64,
) -> Result<CarlemanWeights> {
    let a: &CoefficientFn = &spec.a;
    let grid: Grid = spec.grid()?;
    let halves = grid.half_points();
    let a_min = halves
        .iter()
        .map(|&x| a.value(x))
        .fold(f64::INFINITY, f64::min);
    if a.x0().is_some() || !(a_min > 0.0) {
        return Err(Error::Precondition(
            "nondegenerate weights need a >= a0 > 0".into(),
        ));
    }
    if let Some(c) = frak_c {
        if !(c > 0.0) {
            return Err(Error::param("frak_c", "must be positive"));
        }
    }
    let (spatial, kind, c, coef) = match variant {
        NondegVariant::Integral { g, h0, r } => {
            if !(h0 > 0.0 && r > 0.0) {
                return Err(Error::param("h0", "h0 and r must be positive"));
            }
            let c = frak_c.unwrap_or(1.0);
            let inner = cumulative_integral(&grid, 0.0, |t| {
                (tail_integral(g, t) + h0) / a.value(t).sqrt()
            });
            let rho = inner.iter().map(|v| -r * v - c).collect();
            let coef = |x: f64| r * a.value(x).sqrt() * (tail_integral(g, x) + h0);
            (
                rho,
                NondegKind::Integral { r, h0 },
                c,
                [coef(0.0), coef(1.0)],
            )
        }
        NondegVariant::Exponential { r } => {
            if !(r > 0.0) {
                return Err(Error::param("r", "must be positive"));
            }
            let frak_d = halves
                .iter()
                .filter(|&&x| x > 0.0 && x < 1.0)
                .map(|&x| a.derivative(x).map(f64::abs))
                .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))?;
            let from_one = cumulative_integral(&grid, 1.0, |t| 1.0 / a.value(t));
            let zeta: Vec<f64> = from_one.iter().map(|v| -frak_d * v).collect();
            let peak = zeta.iter().map(|z| (r * z).exp()).fold(0.0, f64::max);
            if !(safety > 1.0) && frak_c.is_none() {
                return Err(Error::param("safety", "must exceed 1"));
            }
            let c = frak_c.unwrap_or(safety * peak);
            let rho = zeta.iter().map(|z| (r * z).exp() - c).collect();
            let coef = [
                r * a.value(0.0) * (r * zeta[0]).exp(),
                r * a.value(1.0) * (r * zeta[zeta.len() - 1]).exp(),
            ];
            (rho, NondegKind::Exponential { r, frak_d }, c, coef)
        }
    };
    let weights = CarlemanWeights {
        horizon: spec.horizon,
        half_points: halves,
        spatial,
        kind: WeightKind::Nondegenerate(NondegParams { kind, frak_c: c }),
        boundary_coef: coef,
    };
    check_weight_invariants(&weights)?;
    Ok(weights)
}

/// Checks the sign and range invariants of the weights.
pub fn check_weight_invariants(w: &CarlemanWeights) -> Result<()> {
    if w.spatial.iter().any(|v| !v.is_finite()) {
        return Err(Error::Construction("non-finite weight".into()));
    }
    if !(w.max_spatial() < 0.0) {
        return Err(Error::Construction(format!(
            "weight maximum {} is not negative",
            w.max_spatial()
        )));
    }
    if let WeightKind::Degenerate(p) = &w.kind {
        if !(p.d2 > p.d2_bound) {
            return Err(Error::Construction("d2 does not exceed its bound".into()));
        }
        let floor = -p.d1 * p.d2;
        if w.min_spatial() < floor * (1.0 + 1e-14) {
            return Err(Error::Construction(format!(
                "psi drops below -d1 d2 = {floor}"
            )));
        }
    }
    Ok(())
}

/// A manufactured adjoint solution and its source.
#[derive(Debug, Clone)]
pub struct ManufacturedCase {
    pub v: Trajectory,
    pub h: Trajectory,
}

/// Separable ansatz `eta(t) g(x)`.
pub struct Ansatz<'a> {
    pub eta: &'a dyn Fn(f64) -> f64,
    pub g: Vec<f64>,
}

/// Builds `v = eta g` and `h = v_t + A v` with the discrete operator, the time
/// derivative taken as a centered difference (one-sided at the ends).
pub fn manufactured_case(ansatz: &Ansatz<'_>, spec: &ProblemSpec) -> Result<ManufacturedCase> {
    let (_grid, asm) = spec.assembly()?;
    crate::grid::check_len(&ansatz.g, spec.cells)?;
    if ansatz.g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("ansatz has non-finite values".into()));
    }
    for &p in &asm.pinned {
        if ansatz.g[p] != 0.0 {
            return Err(Error::Precondition(
                "ansatz must vanish on the nodes next to x0".into(),
            ));
        }
    }
    let m = spec.steps;
    let dt = spec.dt();
    let times: Vec<f64> = (0..=m).map(|n| n as f64 * dt).collect();
    let eta: Vec<f64> = times.iter().map(|&t| (ansatz.eta)(t)).collect();
    let ag = asm.apply(&ansatz.g);
    let v: Vec<Vec<f64>> = eta
        .iter()
        .map(|e| ansatz.g.iter().map(|x| e * x).collect())
        .collect();
    let h: Vec<Vec<f64>> = (0..=m)
        .map(|n| {
            let deta = if n == 0 {
                (eta[1] - eta[0]) / dt
            } else if n == m {
                (eta[m] - eta[m - 1]) / dt
            } else {
                (eta[n + 1] - eta[n - 1]) / (2.0 * dt)
            };
            ansatz
                .g
                .iter()
                .zip(&ag)
                .map(|(g, a)| deta * g + eta[n] * a)
                .collect()
        })
        .collect();
    Ok(ManufacturedCase {
        v: Trajectory {
            times: times.clone(),
            fields: v,
            direction: Direction::Backward,
        },
        h: Trajectory {
            times,
            fields: h,
            direction: Direction::Backward,
        },
    })
}

/// A seeded family of manufactured cases with smooth random profiles and
/// time factors `1 + sin(k pi t / T) / 2`.
pub fn case_family(spec: &ProblemSpec, count: usize, seed: u64) -> Result<Vec<ManufacturedCase>> {
    let (grid, asm) = spec.assembly()?;
    let horizon = spec.horizon;
    (0..count)
        .map(|i| {
            let mut rng = testfns::rng(testfns::derive_seed(seed, i as u64));
            let series = TrigSeries::random(&mut rng, spec.bc, 1 + i % 6);
            let mut g = series.sample(&grid);
            asm.project(&mut g);
            let k = (i % 4 + 1) as f64;
            let eta = move |t: f64| 1.0 + 0.5 * (k * std::f64::consts::PI * t / horizon).sin();
            manufactured_case(&Ansatz { eta: &eta, g }, spec)
        })
        .collect()
}

/// Both sides of a Carleman inequality in log form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarlemanSides {
    pub log_lhs: f64,
    pub log_rhs: f64,
    /// Sign of the right side (it may be nonpositive when a boundary term
    /// enters with a minus sign).
    pub rhs_sign: f64,
    /// Boundary term as it enters the right side: `(sign, log|value|)`.
    pub boundary_sign: f64,
    pub log_boundary: f64,
}

impl CarlemanSides {
    pub fn lhs(&self) -> f64 {
        self.log_lhs.exp()
    }

    pub fn rhs(&self) -> f64 {
        self.rhs_sign * self.log_rhs.exp()
    }

    /// `lhs / rhs`, `+inf` for a nonpositive right side with a nonzero left.
    pub fn ratio(&self) -> f64 {
        if self.log_lhs == f64::NEG_INFINITY {
            0.0
        } else if self.rhs_sign > 0.0 {
            (self.log_lhs - self.log_rhs).exp()
        } else {
            f64::INFINITY
        }
    }
}

fn log_abs(x: f64) -> f64 {
    x.abs().ln()
}

/// Second-order one-sided derivative at a boundary edge from the values at
/// distance `h/2` and `3h/2`, with zero boundary value; returned as a
/// log-space signed sum so that large weight factors do not overflow.
fn boundary_derivative(near: (f64, f64), far: (f64, f64), h: f64) -> LogSum {
    let mut acc = LogSum::default();
    // (-8 f(0) + 9 f(h/2) - f(3h/2)) / (3h) with f(0) = 0.
    acc.add(near.0 + (9.0 / (3.0 * h)).ln(), near.1);
    acc.add(far.0 + (1.0 / (3.0 * h)).ln(), -far.1);
    acc
}

/// Evaluates both sides for the adjoint pair `(v, h)` at parameter `s`.
///
/// Degenerate weights give the left side
/// `int (s Theta v_x^2 + s^3 Theta^3 ((x-x0)/a)^2 v^2) e^{2 s phi}` and the
/// right side `int h^2 e^{2 s phi}/a` plus, for Dirichlet data, the boundary
/// term `s d1 int Theta [(x-x0) e^{R(x-x0)^2} w_x^2]_0^1` with
/// `w = e^{s phi} v`, or, for Neumann data, `int v^2 e^{2 s phi}` over `omega`
/// when it contains `x0` and over the whole interval otherwise.
/// Nondegenerate weights drop the `((x-x0)/a)^2` and `1/a` factors, subtract
/// the boundary term for Dirichlet data and add `int_omega v^2 e^{2 s Phi}`
/// for Neumann data.
pub fn carleman_sides(
    v: &Trajectory,
    h: &Trajectory,
    s: f64,
    weights: &CarlemanWeights,
    spec: &ProblemSpec,
) -> Result<CarlemanSides> {
    if !(s > 0.0) {
        return Err(Error::param("s", "must be positive"));
    }
    let grid = spec.grid()?;
    let n = grid.cells();
    if weights.spatial.len() != 2 * n + 1 {
        return Err(Error::Shape {
            expected: 2 * n + 1,
            got: weights.spatial.len(),
        });
    }
    for t in [v, h] {
        if t.fields.len() != spec.steps + 1 {
            return Err(Error::Shape {
                expected: spec.steps + 1,
                got: t.fields.len(),
            });
        }
        if t.fields.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Data("trajectory contains NaN or infinity".into()));
        }
    }
    let hh = grid.h();
    let dt = spec.dt();
    let nodes = grid.nodes();
    let degenerate = weights.is_degenerate();
    let x0 = spec.x0().unwrap_or(0.0);
    let a_nodes: Vec<f64> = nodes.iter().map(|&x| spec.a.value(x)).collect();
    let zero_order: Vec<f64> = if degenerate {
        nodes
            .iter()
            .zip(&a_nodes)
            .map(|(x, a)| 2.0 * log_abs((x - x0) / a))
            .collect()
    } else {
        vec![0.0; n]
    };
    let source_weight: Vec<f64> = if degenerate {
        a_nodes.iter().map(|a| -a.ln()).collect()
    } else {
        vec![0.0; n]
    };
    let window = match spec.bc {
        BoundaryKind::Neumann => {
            if degenerate && !spec.omega_contains_x0() {
                Some(0..n)
            } else {
                Some(grid.window(spec.omega.0, spec.omega.1)?)
            }
        }
        BoundaryKind::Dirichlet => None,
    };

    let ls = s.ln();
    let lcell = (hh * dt).ln();
    let mut lhs = LogSum::default();
    let mut rhs = LogSum::default();
    let mut bt = LogSum::default();
    for step in 1..spec.steps {
        let t = step as f64 * dt;
        let th = theta(t, weights.horizon)?;
        let two_s_theta = 2.0 * s * th.value;
        let vf = &v.fields[step];
        let hf = &h.fields[step];
        let phi = |j: usize| th.value * weights.spatial[j];

        // Gradient term on interior edges.
        for k in 1..n {
            let d = (vf[k] - vf[k - 1]) / hh;
            if d != 0.0 {
                lhs.add(
                    ls + th.log + 2.0 * log_abs(d) + two_s_theta * weights.spatial[2 * k] + lcell,
                    1.0,
                );
            }
        }
        if spec.bc == BoundaryKind::Dirichlet {
            for (edge, node) in [(0usize, 0usize), (n, n - 1)] {
                let d = 2.0 * vf[node] / hh;
                if d != 0.0 {
                    lhs.add(
                        ls + th.log
                            + 2.0 * log_abs(d)
                            + two_s_theta * weights.spatial[2 * edge]
                            + lcell
                            - 2f64.ln(),
                        1.0,
                    );
                }
            }
        }
        for i in 0..n {
            let j = 2 * i + 1;
            if vf[i] != 0.0 {
                lhs.add(
                    3.0 * (ls + th.log)
                        + zero_order[i]
                        + 2.0 * log_abs(vf[i])
                        + 2.0 * s * phi(j)
                        + lcell,
                    1.0,
                );
            }
            if hf[i] != 0.0 {
                rhs.add(
                    2.0 * log_abs(hf[i]) + source_weight[i] + 2.0 * s * phi(j) + lcell,
                    1.0,
                );
            }
        }
        if let Some(win) = &window {
            for i in win.clone() {
                if vf[i] != 0.0 {
                    rhs.add(2.0 * log_abs(vf[i]) + 2.0 * s * phi(2 * i + 1) + lcell, 1.0);
                }
            }
        }
        if spec.bc == BoundaryKind::Dirichlet {
            let ends = [(0usize, 0usize, 1usize), (2 * n, n - 1, n - 2)];
            for (side, &(edge, near, far)) in ends.iter().enumerate() {
                let deriv = if degenerate {
                    // w_x of w = e^{s phi} v.
                    boundary_derivative(
                        (s * phi(2 * near + 1) + log_abs(vf[near]), vf[near].signum()),
                        (s * phi(2 * far + 1) + log_abs(vf[far]), vf[far].signum()),
                        hh,
                    )
                } else {
                    let mut z = boundary_derivative(
                        (log_abs(vf[near]), vf[near].signum()),
                        (log_abs(vf[far]), vf[far].signum()),
                        hh,
                    );
                    // z_x^2 e^{2 s Phi} = (z_x e^{s Phi})^2.
                    let (sg, lg) = z.signed_log();
                    z = LogSum::default();
                    z.add(lg + s * phi(edge), sg);
                    z
                };
                let (_, ld) = deriv.signed_log();
                if ld == f64::NEG_INFINITY {
                    continue;
                }
                let coef = weights.boundary_coef[side];
                // [f]_0^1 = f(1) - f(0).
                let bracket_sign = if side == 0 { -1.0 } else { 1.0 };
                let mut sign = bracket_sign * coef.signum();
                if !degenerate {
                    sign = -sign;
                }
                bt.add(ls + th.log + log_abs(coef) + 2.0 * ld + dt.ln(), sign);
            }
        }
    }
    rhs.merge(&bt);
    let (rhs_sign, log_rhs) = rhs.signed_log();
    let (_, log_lhs) = lhs.signed_log();
    let (boundary_sign, log_boundary) = bt.signed_log();
    Ok(CarlemanSides {
        log_lhs,
        log_rhs,
        rhs_sign,
        boundary_sign,
        log_boundary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub case_id: usize,
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub log_lhs: f64,
    pub log_rhs: f64,
    pub boundary_sign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    /// Largest ratio over the cases at the largest `s`.
    pub c_fit: f64,
    /// Smallest scanned `s` from which every ratio stays within `1.05 c_fit`;
    /// `None` when no scanned value qualifies.
    pub s0_est: Option<f64>,
    pub table: Vec<ScanRow>,
}

/// Envelope slack of the threshold estimate.
pub const ENVELOPE: f64 = 1.05;

/// Scans the ratio `lhs / rhs` over `s_grid` for every case.
pub fn scan_s(
    cases: &[ManufacturedCase],
    s_grid: &[f64],
    weights: &CarlemanWeights,
    spec: &ProblemSpec,
) -> Result<ScanResult> {
    if cases.is_empty() || s_grid.is_empty() {
        return Err(Error::param(
            "cases",
            "need at least one case and one s value",
        ));
    }
    if s_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("s_grid", "must be increasing"));
    }
    if cases.len() < 5 || s_grid.len() < 8 {
        log::warn!(
            "scan with {} cases and {} s values is below 5 x 8",
            cases.len(),
            s_grid.len()
        );
    }
    let mut table = Vec::with_capacity(cases.len() * s_grid.len());
    for (id, case) in cases.iter().enumerate() {
        for &s in s_grid {
            let sides = carleman_sides(&case.v, &case.h, s, weights, spec)?;
            table.push(ScanRow {
                case_id: id,
                s,
                lhs: sides.lhs(),
                rhs: sides.rhs(),
                ratio: sides.ratio(),
                log_lhs: sides.log_lhs,
                log_rhs: sides.log_rhs,
                boundary_sign: sides.boundary_sign,
            });
        }
    }
    let ns = s_grid.len();
    let ratio = |case: usize, k: usize| table[case * ns + k].ratio;
    let c_fit = (0..cases.len())
        .map(|c| ratio(c, ns - 1))
        .fold(0.0, f64::max);
    let s0_est = if !c_fit.is_finite() {
        None
    } else {
        let ok = |k: usize| (0..cases.len()).all(|c| ratio(c, k) <= ENVELOPE * c_fit);
        let mut first = ns;
        for k in (0..ns).rev() {
            if ok(k) {
                first = k;
            } else {
                break;
            }
        }
        (first < ns).then(|| s_grid[first])
    };
    Ok(ScanResult {
        c_fit,
        s0_est,
        table,
    })
}

/// `count` values spaced geometrically over `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|i| lo * (r * i as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{make_constant_coefficient, make_power_coefficient};
    use crate::evolution::Scheme;

    fn spec(a: CoefficientFn, cells: usize, steps: usize, horizon: f64) -> ProblemSpec {
        ProblemSpec {
            b: a.clone(),
            a,
            lambda: 0.0,
            horizon,
            bc: BoundaryKind::Dirichlet,
            omega: (0.3, 0.7),
            cells,
            steps,
            scheme: Scheme::ImplicitEuler,
            pin_x0: None,
        }
    }

    #[test]
    fn theta_values() {
        assert_eq!(theta(0.5, 1.0).unwrap().value, 256.0);
        assert!((theta(0.25, 1.0).unwrap().value - 809.0864).abs() < 1e-3);
        for t in [0.1, 0.3, 0.45] {
            let a = theta(t, 1.0).unwrap().value;
            let b = theta(1.0 - t, 1.0).unwrap().value;
            assert!((a - b).abs() <= 1e-12 * a);
        }
        assert!(matches!(theta(0.0, 1.0), Err(Error::Pole { .. })));
    }

    #[test]
    fn log_sum_matches_direct_sum() {
        let mut acc = LogSum::default();
        for v in [3.0, -1.0, 0.5, -0.25] {
            acc.add_value(v);
        }
        let (s, l) = acc.signed_log();
        assert!((s * l.exp() - 2.25).abs() < 1e-14);
    }

    #[test]
    fn degenerate_weight_at_zero_rate() {
        let a = make_power_coefficient(0.5, 0.5, 1.0).unwrap();
        let sp = spec(a, 200, 400, 1.0);
        let w = build_weights(&sp, 1.0, 0.0, 1.01).unwrap();
        let WeightKind::Degenerate(p) = &w.kind else {
            panic!()
        };
        assert!((p.d2_bound - 0.25 / (1.5 * 0.5f64.sqrt())).abs() < 1e-12);
        assert!((p.d2 - 0.238_06).abs() < 1e-5);
        assert_eq!(w.spatial[200], -p.d1 * p.d2);
        let exact = 0.5f64.powf(1.5) / 1.5 - p.d2;
        assert!((w.spatial[400] - exact).abs() < 1e-4);
        assert!(w.max_spatial() < 0.0);
    }

    #[test]
    fn nondegenerate_weights() {
        let one = make_constant_coefficient(1.0).unwrap();
        let sp = spec(one, 100, 200, 1.0);
        let w = nondeg_weights(&sp, NondegVariant::Exponential { r: 1.0 }, Some(2.0), 2.0).unwrap();
        assert!(w.spatial.iter().all(|v| (v + 1.0).abs() < 1e-15));
        let g = |_x: f64| 1.0;
        let w = nondeg_weights(
            &sp,
            NondegVariant::Integral {
                g: &g,
                h0: 1.0,
                r: 1.0,
            },
            Some(1.0),
            2.0,
        )
        .unwrap();
        assert!((w.spatial[200] - (-1.5 - 1.0)).abs() < 1e-9);
        let deg = spec(make_power_coefficient(0.5, 0.5, 1.0).unwrap(), 50, 100, 1.0);
        assert!(nondeg_weights(&deg, NondegVariant::Exponential { r: 1.0 }, None, 2.0).is_err());
    }

    #[test]
    fn manufactured_residual_and_homogeneity() {
        let a = make_power_coefficient(0.25, 0.5, 1.0).unwrap();
        let sp = spec(a, 64, 80, 3.0);
        let g: Vec<f64> = sp
            .grid()
            .unwrap()
            .nodes()
            .iter()
            .map(|&x| x * (1.0 - x) * (x - 0.5).abs())
            .collect();
        let eta = |_t: f64| 1.0;
        let case = manufactured_case(&Ansatz { eta: &eta, g }, &sp).unwrap();
        assert!(case.h.fields.iter().flatten().all(|v| v.is_finite()));
        let w = build_weights(&sp, 1.0, 1.0, 1.01).unwrap();
        let base = carleman_sides(&case.v, &case.h, 10.0, &w, &sp).unwrap();
        let scaled = carleman_sides(&case.v.scale(3.0), &case.h.scale(3.0), 10.0, &w, &sp).unwrap();
        assert!((scaled.log_lhs - base.log_lhs - 2.0 * 3f64.ln()).abs() < 1e-10);
        assert!((scaled.log_rhs - base.log_rhs - 2.0 * 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn zero_case_conventions() {
        let a = make_power_coefficient(0.25, 0.5, 1.0).unwrap();
        let sp = spec(a, 32, 40, 3.0);
        let eta = |_t: f64| 1.0;
        let case = manufactured_case(
            &Ansatz {
                eta: &eta,
                g: vec![0.0; 32],
            },
            &sp,
        )
        .unwrap();
        assert!(case.h.fields.iter().flatten().all(|v| *v == 0.0));
        let w = build_weights(&sp, 1.0, 1.0, 1.01).unwrap();
        let r = scan_s(&[case], &[1.0, 2.0], &w, &sp).unwrap();
        assert_eq!(r.c_fit, 0.0);
        assert_eq!(r.s0_est, Some(1.0));
    }

    #[test]
    fn endpoint_weights_underflow() {
        let a = make_power_coefficient(0.25, 0.5, 1.0).unwrap();
        let sp = spec(a, 100, 400, 1.0);
        let w = build_weights(&sp, 1.0, 1.0, 1.01).unwrap();
        let dt = sp.dt();
        for t in [dt, 1.0 - dt] {
            let worst = (0..w.spatial.len())
                .map(|j| 2.0 * w.phi(t, j).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(worst <= -690.0);
        }
    }
}
