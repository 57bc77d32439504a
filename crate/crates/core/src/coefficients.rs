//! Degenerate diffusion coefficient `a`, singular weight `b`, and the checks of
//! the structural conditions imposed on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::build_grid;

/// Exponents closer than this to 1 are treated as exactly 1 when binning.
pub const EXPONENT_SNAP: f64 = 1e-9;

/// JSON form of a coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CoefficientSpec {
    Power {
        #[serde(rename = "K")]
        k: f64,
        x0: f64,
        #[serde(default = "unit")]
        scale: f64,
    },
    Tabulated {
        x0: f64,
        nodes: Vec<f64>,
        values: Vec<f64>,
    },
    /// Strictly positive constant, used for nondegenerate benchmarks.
    Constant {
        #[serde(default = "unit")]
        scale: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Power { k: f64, scale: f64 },
    Tabulated(Table),
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct Table {
    nodes: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

/// An immutable coefficient function with an interior zero at `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFn {
    kind: Kind,
    x0: Option<f64>,
}

/// Builds `scale * |x - x0|^k`.
pub fn make_power_coefficient(k: f64, x0: f64, scale: f64) -> Result<CoefficientFn> {
    if !(k > 0.0 && k < 2.0) {
        return Err(Error::param("K", format!("{k} not in (0, 2)")));
    }
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::param("x0", format!("{x0} not in (0, 1)")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::param("scale", format!("{scale} must be positive")));
    }
    Ok(CoefficientFn {
        kind: Kind::Power { k, scale },
        x0: Some(x0),
    })
}

/// Builds a strictly positive constant coefficient.
pub fn make_constant_coefficient(value: f64) -> Result<CoefficientFn> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::param("scale", format!("{value} must be positive")));
    }
    Ok(CoefficientFn {
        kind: Kind::Constant(value),
        x0: None,
    })
}

/// Builds a tabulated coefficient from samples on both sides of `x0`.
///
/// Values are linearly interpolated, with the zero at `x0` as an implicit
/// sample. Nodal derivatives use centered differences inside each side of
/// `x0` and one-sided three-point stencils at the ends of each side.
pub fn make_tabulated_coefficient(
    x0: f64,
    nodes: Vec<f64>,
    values: Vec<f64>,
) -> Result<CoefficientFn> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::param("x0", format!("{x0} not in (0, 1)")));
    }
    if nodes.len() != values.len() {
        return Err(Error::Shape {
            expected: nodes.len(),
            got: values.len(),
        });
    }
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidCoefficient(
            "table nodes must be strictly increasing".into(),
        ));
    }
    if nodes.iter().any(|&x| !(0.0..=1.0).contains(&x) || x == x0) {
        return Err(Error::InvalidCoefficient(
            "table nodes must lie in [0, 1] and avoid x0".into(),
        ));
    }
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidCoefficient(
            "table values must be positive".into(),
        ));
    }
    let split = nodes.partition_point(|&x| x < x0);
    if split < 3 || nodes.len() - split < 3 {
        return Err(Error::InvalidCoefficient(
            "need at least three samples on each side of x0".into(),
        ));
    }
    let mut derivs = Vec::with_capacity(nodes.len());
    for (lo, hi) in [(0, split), (split, nodes.len())] {
        let xs = &nodes[lo..hi];
        let ys = &values[lo..hi];
        let m = xs.len();
        for i in 0..m {
            let j = i.clamp(1, m - 2);
            derivs.push(quadratic_derivative(
                [xs[j - 1], xs[j], xs[j + 1]],
                [ys[j - 1], ys[j], ys[j + 1]],
                xs[i],
            ));
        }
    }
    Ok(CoefficientFn {
        kind: Kind::Tabulated(Table {
            nodes,
            values,
            derivs,
        }),
        x0: Some(x0),
    })
}

/// Derivative at `at` of the quadratic interpolating three points.
fn quadratic_derivative(x: [f64; 3], y: [f64; 3], at: f64) -> f64 {
    let l0 = ((at - x[1]) + (at - x[2])) / ((x[0] - x[1]) * (x[0] - x[2]));
    let l1 = ((at - x[0]) + (at - x[2])) / ((x[1] - x[0]) * (x[1] - x[2]));
    let l2 = ((at - x[0]) + (at - x[1])) / ((x[2] - x[0]) * (x[2] - x[1]));
    y[0] * l0 + y[1] * l1 + y[2] * l2
}

impl TryFrom<&CoefficientSpec> for CoefficientFn {
    type Error = Error;

    fn try_from(spec: &CoefficientSpec) -> Result<Self> {
        match spec {
            CoefficientSpec::Power { k, x0, scale } => make_power_coefficient(*k, *x0, *scale),
            CoefficientSpec::Tabulated { x0, nodes, values } => {
                make_tabulated_coefficient(*x0, nodes.clone(), values.clone())
            }
            CoefficientSpec::Constant { scale } => make_constant_coefficient(*scale),
        }
    }
}

impl CoefficientFn {
    pub fn x0(&self) -> Option<f64> {
        self.x0
    }

    pub fn is_degenerate(&self) -> bool {
        self.x0.is_some()
    }

    /// Exponent of power kinds.
    pub fn power_exponent(&self) -> Option<f64> {
        match self.kind {
            Kind::Power { k, .. } => Some(k),
            _ => None,
        }
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.kind, Kind::Tabulated(_))
    }

    pub fn to_spec(&self) -> CoefficientSpec {
        match &self.kind {
            Kind::Power { k, scale } => CoefficientSpec::Power {
                k: *k,
                x0: self.x0.unwrap_or(0.5),
                scale: *scale,
            },
            Kind::Tabulated(t) => CoefficientSpec::Tabulated {
                x0: self.x0.unwrap_or(0.5),
                nodes: t.nodes.clone(),
                values: t.values.clone(),
            },
            Kind::Constant(c) => CoefficientSpec::Constant { scale: *c },
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Power { k, scale } => scale * (x - self.x0.unwrap_or(0.0)).abs().powf(*k),
            Kind::Constant(c) => *c,
            Kind::Tabulated(t) => {
                let x0 = self.x0.unwrap_or(0.5);
                if x == x0 {
                    return 0.0;
                }
                let split = t.nodes.partition_point(|&n| n < x0);
                // Side-local sample list with the implicit zero at x0.
                let (xs, ys, at_x0_first): (&[f64], &[f64], bool) = if x < x0 {
                    (&t.nodes[..split], &t.values[..split], false)
                } else {
                    (&t.nodes[split..], &t.values[split..], true)
                };
                let m = xs.len();
                if at_x0_first && x < xs[0] {
                    return ys[0] * (x - x0) / (xs[0] - x0);
                }
                if !at_x0_first && x > xs[m - 1] {
                    return ys[m - 1] * (x0 - x) / (x0 - xs[m - 1]);
                }
                let j = xs.partition_point(|&n| n <= x);
                let (i0, i1) = if j == 0 {
                    (0, 1)
                } else if j >= m {
                    (m - 2, m - 1)
                } else {
                    (j - 1, j)
                };
                let w = (x - xs[i0]) / (xs[i1] - xs[i0]);
                ys[i0] + w * (ys[i1] - ys[i0])
            }
        }
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        match &self.kind {
            Kind::Constant(_) => Ok(0.0),
            Kind::Power { k, scale } => {
                let x0 = self.x0.unwrap_or(0.0);
                let d = x - x0;
                if d == 0.0 {
                    return Err(Error::Evaluation("derivative undefined at x0".into()));
                }
                Ok(scale * k * d.signum() * d.abs().powf(k - 1.0))
            }
            Kind::Tabulated(t) => {
                let x0 = self.x0.unwrap_or(0.5);
                if x == x0 {
                    return Err(Error::Evaluation("derivative undefined at x0".into()));
                }
                let split = t.nodes.partition_point(|&n| n < x0);
                let (xs, ds) = if x < x0 {
                    (&t.nodes[..split], &t.derivs[..split])
                } else {
                    (&t.nodes[split..], &t.derivs[split..])
                };
                let m = xs.len();
                if x <= xs[0] {
                    return Ok(ds[0]);
                }
                if x >= xs[m - 1] {
                    return Ok(ds[m - 1]);
                }
                let j = xs.partition_point(|&n| n <= x);
                let w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
                Ok(ds[j - 1] + w * (ds[j] - ds[j - 1]))
            }
        }
    }

    /// Largest sampled `|f'|` on `nodes`, used for the `W^{1,inf}` decision of
    /// tabulated coefficients.
    pub fn max_abs_derivative(&self, nodes: &[f64]) -> Result<f64> {
        nodes
            .iter()
            .map(|&x| self.derivative(x).map(f64::abs))
            .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))
    }
}

/// Returns `sup (x - x0) f'(x) / f(x)` over `nodes`, the smallest exponent for
/// which `(x - x0) f' <= K f` holds on the sample.
pub fn estimate_exponent(f: &CoefficientFn, nodes: &[f64]) -> Result<f64> {
    let x0 = f
        .x0()
        .ok_or_else(|| Error::Unsupported("nondegenerate coefficient has no exponent".into()))?;
    let mut sup = f64::NEG_INFINITY;
    for &x in nodes {
        if x == x0 {
            continue;
        }
        let v = f.value(x);
        if !(v > 0.0) {
            return Err(Error::InvalidCoefficient(format!(
                "f({x}) = {v} is not positive"
            )));
        }
        let r = (x - x0) * f.derivative(x)? / v;
        sup = sup.max(r);
    }
    if !sup.is_finite() {
        return Err(Error::Evaluation("no admissible sample nodes".into()));
    }
    Ok(sup)
}

fn ratio_samples(f: &CoefficientFn, nodes: &[f64]) -> Result<Vec<(f64, f64)>> {
    let x0 = f
        .x0()
        .ok_or_else(|| Error::Unsupported("nondegenerate coefficient".into()))?;
    nodes
        .iter()
        .filter(|&&x| x != x0)
        .map(|&x| Ok((x, (x - x0) * f.derivative(x)? / f.value(x))))
        .collect()
}

/// The four degeneracy regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Both exponents in (0, 1).
    Wwd,
    /// Both exponents in [1, 2).
    Ssd,
    /// `a` weak, `b` strong.
    Wsd,
    /// `a` strong, `b` weak.
    Swd,
    Unclassifiable,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::Wwd => "WWD",
            Regime::Ssd => "SSD",
            Regime::Wsd => "WSD",
            Regime::Swd => "SWD",
            Regime::Unclassifiable => "unclassifiable",
        }
    }

    pub fn from_exponents(k1: f64, k2: f64) -> Regime {
        let bin = |k: f64| {
            let k = snap_exponent(k);
            if k > 0.0 && k < 1.0 {
                Some(false)
            } else if (1.0..2.0).contains(&k) {
                Some(true)
            } else {
                None
            }
        };
        match (bin(k1), bin(k2)) {
            (Some(false), Some(false)) => Regime::Wwd,
            (Some(true), Some(true)) => Regime::Ssd,
            (Some(false), Some(true)) => Regime::Wsd,
            (Some(true), Some(false)) => Regime::Swd,
            _ => Regime::Unclassifiable,
        }
    }
}

pub fn snap_exponent(k: f64) -> f64 {
    if (k - 1.0).abs() <= EXPONENT_SNAP {
        1.0
    } else {
        k
    }
}

/// Which Hardy-Poincare branch applies to the pair `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HardyBranch {
    /// Weak pair with `K1 + K2 < 1`; the weighted space is `K_a`.
    WeakSmallSum,
    /// Weak pair with `1 <= K1 + K2 <= 2` and the scaling bounds.
    WeakScaled,
    /// Mixed pair with `K1 + K2 <= 2` and the scaling bounds.
    Mixed,
    /// Strong pair with `K1 = K2 = 1`.
    StrongUnit,
}

impl HardyBranch {
    /// Whether functions of the energy space vanish at `x0`.
    pub fn vanishes_at_x0(&self) -> bool {
        !matches!(self, HardyBranch::WeakSmallSum)
    }

    pub fn label(&self) -> &'static str {
        match self {
            HardyBranch::WeakSmallSum => "weak, K1+K2<1",
            HardyBranch::WeakScaled => "weak, 1<=K1+K2<=2, scaled",
            HardyBranch::Mixed => "mixed, K1+K2<=2, scaled",
            HardyBranch::StrongUnit => "strong, K1=K2=1",
        }
    }
}

/// Admissibility branch for `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaBranch {
    /// `lambda != 0` and `lambda < 1 / C*`.
    BelowInverseCstar,
    /// `lambda < 0` (Neumann with `K1 + K2 < 1`).
    NegativeOnly,
}

/// Boundary condition kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

/// Sobolev class decided from the exponent bin or sampled derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SobolevClass {
    W11,
    W1Inf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegeneracyReport {
    pub k1: f64,
    pub k2: f64,
    /// Minimal exponent over both coefficients.
    pub k_star: f64,
    pub regime: Regime,
    pub c1: f64,
    pub c2: f64,
    pub class_a: SobolevClass,
    pub class_b: SobolevClass,
    pub hardy_branch: Option<HardyBranch>,
}

impl DegeneracyReport {
    pub fn exponent_sum(&self) -> f64 {
        self.k1 + self.k2
    }

    /// `K1 + K2 < 1`: the weak small-sum situation.
    pub fn small_sum(&self) -> bool {
        self.exponent_sum() < 1.0
    }

    pub fn lambda_branch(&self, bc: BoundaryKind) -> LambdaBranch {
        match bc {
            BoundaryKind::Dirichlet => LambdaBranch::BelowInverseCstar,
            BoundaryKind::Neumann if self.small_sum() => LambdaBranch::NegativeOnly,
            BoundaryKind::Neumann => LambdaBranch::BelowInverseCstar,
        }
    }
}

/// Default sampling resolution used when no grid is supplied.
pub const DEFAULT_SAMPLE_CELLS: usize = 512;

/// Classifies the pair on the default sampling grid.
pub fn classify_pair(a: &CoefficientFn, b: &CoefficientFn) -> Result<DegeneracyReport> {
    let x0 = common_x0(a, b)?;
    let grid = build_grid(DEFAULT_SAMPLE_CELLS, Some(x0))?;
    classify_pair_on(a, b, grid.nodes())
}

fn common_x0(a: &CoefficientFn, b: &CoefficientFn) -> Result<f64> {
    match (a.x0(), b.x0()) {
        (Some(xa), Some(xb)) if (xa - xb).abs() <= 1e-12 => Ok(xa),
        (Some(xa), Some(xb)) => Err(Error::Unsupported(format!(
            "distinct degeneracy points {xa} and {xb}"
        ))),
        _ => Err(Error::Unsupported(
            "classification needs both coefficients degenerate".into(),
        )),
    }
}

/// Infimum of `|x - x0|^k / f(x)` over the sample.
fn scaling_constant(f: &CoefficientFn, k: f64, x0: f64, nodes: &[f64]) -> f64 {
    nodes
        .iter()
        .filter(|&&x| x != x0)
        .map(|&x| (x - x0).abs().powf(k) / f.value(x))
        .fold(f64::INFINITY, f64::min)
}

fn sobolev_class(f: &CoefficientFn, k: f64, nodes: &[f64]) -> Result<SobolevClass> {
    if f.is_tabulated() {
        // Bounded derivatives: the sup does not grow when sampling near x0
        // is refined from the coarse half of the nodes to all of them.
        let coarse: Vec<f64> = nodes.iter().step_by(2).copied().collect();
        let fine = f.max_abs_derivative(nodes)?;
        let rough = f.max_abs_derivative(&coarse)?;
        return Ok(if fine <= 1.2 * rough {
            SobolevClass::W1Inf
        } else {
            SobolevClass::W11
        });
    }
    Ok(if snap_exponent(k) >= 1.0 {
        SobolevClass::W1Inf
    } else {
        SobolevClass::W11
    })
}

/// Classifies `(a, b)` using the supplied sample nodes.
pub fn classify_pair_on(
    a: &CoefficientFn,
    b: &CoefficientFn,
    nodes: &[f64],
) -> Result<DegeneracyReport> {
    let x0 = common_x0(a, b)?;
    let k1 = snap_exponent(estimate_exponent(a, nodes)?);
    let k2 = snap_exponent(estimate_exponent(b, nodes)?);
    let regime = Regime::from_exponents(k1, k2);
    let c1 = scaling_constant(a, k1, x0, nodes);
    let c2 = scaling_constant(b, k2, x0, nodes);
    let scaled = c1 > 0.0 && c2 > 0.0 && c1.is_finite() && c2.is_finite();
    let sum = k1 + k2;
    let hardy_branch = match regime {
        Regime::Wwd if sum < 1.0 => Some(HardyBranch::WeakSmallSum),
        Regime::Wwd if sum <= 2.0 && scaled => Some(HardyBranch::WeakScaled),
        Regime::Wsd | Regime::Swd if sum <= 2.0 && scaled => Some(HardyBranch::Mixed),
        Regime::Ssd if k1 == 1.0 && k2 == 1.0 => Some(HardyBranch::StrongUnit),
        _ => None,
    };
    Ok(DegeneracyReport {
        k1,
        k2,
        k_star: k1.min(k2),
        regime,
        c1,
        c2,
        class_a: sobolev_class(a, k1, nodes)?,
        class_b: sobolev_class(b, k2, nodes)?,
        hardy_branch,
    })
}

/// One pass/fail line of a hypothesis report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub id: &'static str,
    pub passed: bool,
    /// Signed margin; nonnegative when the check passes.
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
    /// `|d/dx[(x - x0) a'/a]|` sup on the sample (boundedness proxy).
    pub log_derivative_slope: f64,
    /// Largest admissible monotonicity exponent, when `K1 >= 1/2`.
    pub theta: Option<f64>,
    /// `min (x - x0) b'` when `lambda < 0`.
    pub min_b_slope: Option<f64>,
    /// Max residual of the `g`/`h` identity when functions are supplied.
    pub identity_residual: Option<f64>,
    /// Lipschitz bound of the induced `h` when only `g`, `h0` are supplied.
    pub induced_h_lipschitz: Option<f64>,
    /// Set when the same checks on the doubled grid flip any pass to fail.
    pub refinement_flip: bool,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// User-supplied functions of the identity
/// `a'/(2 sqrt a) (int_x^B g + h0) + sqrt(a) g = h(x, B)`.
pub struct IdentityData<'a> {
    pub g: &'a dyn Fn(f64) -> f64,
    pub h0: f64,
    /// Optional `h(x, B)`; when absent it is induced from the left side.
    pub h: Option<&'a dyn Fn(f64, f64) -> f64>,
}

pub const HYP_LOG_DERIVATIVE: &str = "H-CARLEMAN-LOGDERIV";
pub const HYP_THETA: &str = "H-CARLEMAN-THETA";
pub const HYP_B_SIGN: &str = "H-CARLEMAN-BSIGN";
pub const HYP_IDENTITY: &str = "H-OBS-IDENTITY";

/// Checks the structural conditions used by the Carleman and observability
/// results on a midpoint grid with `cells` cells, and again on `2 * cells`.
pub fn check_structural_hypotheses(
    a: &CoefficientFn,
    b: &CoefficientFn,
    lambda: f64,
    identity: Option<&IdentityData<'_>>,
    cells: usize,
) -> Result<HypothesisReport> {
    let x0 = common_x0(a, b)?;
    let coarse = structural_on(
        a,
        b,
        lambda,
        identity,
        build_grid(cells, Some(x0))?.nodes(),
        x0,
    )?;
    let fine = structural_on(
        a,
        b,
        lambda,
        identity,
        build_grid(2 * cells, Some(x0))?.nodes(),
        x0,
    )?;
    let flip = coarse
        .checks
        .iter()
        .zip(&fine.checks)
        .any(|(c, f)| c.passed && !f.passed);
    Ok(HypothesisReport {
        refinement_flip: flip,
        ..coarse
    })
}

fn structural_on(
    a: &CoefficientFn,
    b: &CoefficientFn,
    lambda: f64,
    identity: Option<&IdentityData<'_>>,
    nodes: &[f64],
    x0: f64,
) -> Result<HypothesisReport> {
    let mut checks = Vec::new();
    let ratios = ratio_samples(a, nodes)?;

    let mut slope: f64 = 0.0;
    for w in ratios.windows(2) {
        let ((xl, rl), (xr, rr)) = (w[0], w[1]);
        if (xl - x0) * (xr - x0) > 0.0 {
            slope = slope.max(((rr - rl) / (xr - xl)).abs());
        }
    }
    checks.push(HypothesisCheck {
        id: HYP_LOG_DERIVATIVE,
        passed: slope.is_finite(),
        margin: if slope.is_finite() { 0.0 } else { -1.0 },
        detail: format!("sampled sup |d/dx[(x-x0)a'/a]| = {slope:.6e}"),
    });

    let k1 = snap_exponent(ratios.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max));
    let theta = if k1 >= 0.5 {
        let inf = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        // (x - x0) a'/a >= theta everywhere is equivalent to the monotonicity
        // of a / |x - x0|^theta on each side.
        let theta = if inf >= k1 - 1e-12 { k1 } else { inf.min(k1) };
        checks.push(HypothesisCheck {
            id: HYP_THETA,
            passed: theta > 0.0,
            margin: theta,
            detail: format!("largest monotonicity exponent theta = {theta:.6} (K1 = {k1:.6})"),
        });
        Some(theta)
    } else {
        None
    };

    let min_b_slope = if lambda < 0.0 {
        let m = nodes
            .iter()
            .filter(|&&x| x != x0)
            .map(|&x| b.derivative(x).map(|d| (x - x0) * d))
            .try_fold(f64::INFINITY, |m, v| v.map(|v| m.min(v)))?;
        checks.push(HypothesisCheck {
            id: HYP_B_SIGN,
            passed: m >= 0.0,
            margin: m,
            detail: format!("min (x-x0) b' = {m:.6e} (lambda < 0)"),
        });
        Some(m)
    } else {
        None
    };

    let mut identity_residual = None;
    let mut induced_h_lipschitz = None;
    if let Some(id) = identity {
        let (res, lip) = identity_check(a, id, nodes, Some(x0))?;
        identity_residual = Some(res);
        induced_h_lipschitz = lip;
        checks.push(HypothesisCheck {
            id: HYP_IDENTITY,
            passed: res <= 1e-8 && lip.map_or(true, f64::is_finite),
            margin: -res,
            detail: format!("identity residual {res:.3e}"),
        });
    }

    Ok(HypothesisReport {
        checks,
        log_derivative_slope: slope,
        theta,
        min_b_slope,
        identity_residual,
        induced_h_lipschitz,
        refinement_flip: false,
    })
}

/// Evaluates the `g`/`h` identity over sampled pairs `(x, B)` on the same
/// side of `x0` (or all of `[0, 1]` with `B = 1` for nondegenerate `a`).
///
/// Returns the max residual against the supplied `h` (zero when `h` is
/// induced) and, for induced `h`, the sampled Lipschitz bound in `x`.
pub fn identity_check(
    a: &CoefficientFn,
    id: &IdentityData<'_>,
    nodes: &[f64],
    x0: Option<f64>,
) -> Result<(f64, Option<f64>)> {
    let g_int = |lo: f64, hi: f64| -> f64 {
        let n = 64;
        let dx = (hi - lo) / n as f64;
        (0..n)
            .map(|i| (id.g)(lo + (i as f64 + 0.5) * dx) * dx)
            .sum()
    };
    let lhs = |x: f64, big_b: f64| -> Result<f64> {
        let av = a.value(x);
        let ad = a.derivative(x)?;
        Ok(ad / (2.0 * av.sqrt()) * (g_int(x, big_b) + id.h0) + av.sqrt() * (id.g)(x))
    };
    let mut pairs = Vec::new();
    let stride = (nodes.len() / 24).max(1);
    let sample: Vec<f64> = nodes.iter().step_by(stride).copied().collect();
    for &x in &sample {
        match x0 {
            None => pairs.push((x, 1.0)),
            Some(x0) => {
                for &bb in &sample {
                    if (x < bb && bb < x0) || (x0 < x && x < bb) {
                        pairs.push((x, bb));
                    }
                }
            }
        }
    }
    let mut residual: f64 = 0.0;
    let mut lipschitz: f64 = 0.0;
    for &(x, bb) in &pairs {
        let l = lhs(x, bb)?;
        match id.h {
            Some(h) => residual = residual.max((l - h(x, bb)).abs()),
            None => {
                let dx = 1e-6;
                let xr = x + dx;
                if x0.map_or(true, |x0| (xr - x0) * (x - x0) > 0.0) && xr < bb.max(1.0) {
                    let lr = lhs(xr, bb)?;
                    lipschitz = lipschitz.max(((lr - l) / dx).abs());
                }
            }
        }
    }
    Ok((residual, id.h.is_none().then_some(lipschitz)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nodes(n: usize, x0: f64) -> Vec<f64> {
        build_grid(n, Some(x0)).unwrap().nodes().to_vec()
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn power_evaluation_examples() {
        let a = make_power_coefficient(0.5, 0.5, 1.0).unwrap();
        assert!((a.value(1.0) - 0.5f64.sqrt()).abs() < 1e-12);
        let a = make_power_coefficient(1.0, 0.5, 1.0).unwrap();
        assert_eq!(a.value(0.5), 0.0);
        let a = make_power_coefficient(1.5, 0.3, 2.0).unwrap();
        assert!((a.value(0.8) - 2.0 * 0.5f64.powf(1.5)).abs() < 1e-12);
        assert!((a.value(0.8) - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn power_rejects_bad_parameters() {
        assert!(make_power_coefficient(2.0, 0.5, 1.0).is_err());
        assert!(make_power_coefficient(0.0, 0.5, 1.0).is_err());
        assert!(make_power_coefficient(0.5, 1.0, 1.0).is_err());
        assert!(make_power_coefficient(0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn power_derivative_is_exact() {
        let a = make_power_coefficient(1.5, 0.3, 2.0).unwrap();
        let x = 0.1;
        let expected = 2.0 * 1.5 * -1.0 * 0.2f64.powf(0.5);
        assert!((a.derivative(x).unwrap() - expected).abs() < 1e-14);
        assert!(a.derivative(0.3).is_err());
    }

    #[test]
    fn exponent_of_pure_powers() {
        let ns = nodes(64, 0.5);
        for (k, s) in [(0.3, 1.0), (1.5, 2.0)] {
            let f = make_power_coefficient(k, 0.5, s).unwrap();
            assert!((estimate_exponent(&f, &ns).unwrap() - k).abs() < 1e-8);
        }
    }

    #[test]
    fn tabulated_exponent_matches_dense_sup() {
        let x0 = 0.5;
        let f = |x: f64| (x - x0).abs().sqrt() * (1.0 + 0.1 * x.sin());
        let df = |x: f64| {
            let d = x - x0;
            0.5 * d.signum() * d.abs().powf(-0.5) * (1.0 + 0.1 * x.sin())
                + d.abs().sqrt() * 0.1 * x.cos()
        };
        // Brute-force sup over a 1e5-point refinement.
        let dense = (0..100_000)
            .map(|i| (i as f64 + 0.5) / 100_000.0)
            .filter(|&x| x != x0)
            .map(|x| (x - x0) * df(x) / f(x))
            .fold(f64::NEG_INFINITY, f64::max);
        let table = nodes(400, x0);
        let values: Vec<f64> = table.iter().map(|&x| f(x)).collect();
        let t = make_tabulated_coefficient(x0, table.clone(), values).unwrap();
        let k = estimate_exponent(&t, &table).unwrap();
        assert!((k - dense).abs() < 0.02, "k = {k}, dense = {dense}");
    }

    #[test]
    fn classification_examples() {
        let a = make_power_coefficient(0.3, 0.5, 1.0).unwrap();
        let b = make_power_coefficient(1.2, 0.5, 1.0).unwrap();
        assert_eq!(classify_pair(&a, &b).unwrap().regime, Regime::Wsd);

        let a = make_power_coefficient(1.0, 0.5, 1.0).unwrap();
        let r = classify_pair(&a, &a).unwrap();
        assert_eq!(r.regime, Regime::Ssd);
        assert!((r.c1 - 1.0).abs() < 1e-12 && (r.c2 - 1.0).abs() < 1e-12);
        assert_eq!(r.hardy_branch, Some(HardyBranch::StrongUnit));

        let a = make_power_coefficient(0.25, 0.5, 1.0).unwrap();
        let r = classify_pair(&a, &a).unwrap();
        assert_eq!(r.regime, Regime::Wwd);
        assert!(r.small_sum());
        assert_eq!(r.hardy_branch, Some(HardyBranch::WeakSmallSum));
        assert_eq!(
            r.lambda_branch(BoundaryKind::Neumann),
            LambdaBranch::NegativeOnly
        );
    }

    #[test]
    fn mismatched_zeros_are_rejected() {
        let a = make_power_coefficient(0.3, 0.5, 1.0).unwrap();
        let b = make_power_coefficient(0.3, 0.4, 1.0).unwrap();
        assert!(matches!(classify_pair(&a, &b), Err(Error::Unsupported(_))));
    }

    #[test]
    fn scaling_constant_is_inverse_scale() {
        let a = make_power_coefficient(0.7, 0.5, 3.0).unwrap();
        let b = make_power_coefficient(0.2, 0.5, 0.5).unwrap();
        let r = classify_pair(&a, &b).unwrap();
        assert!((r.c1 - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.c2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn structural_examples() {
        let a = make_power_coefficient(0.5, 0.5, 1.0).unwrap();
        let b = make_power_coefficient(0.3, 0.5, 1.0).unwrap();
        let r = check_structural_hypotheses(&a, &b, -1.0, None, 128).unwrap();
        assert!(r.all_passed());
        assert!(r.min_b_slope.unwrap() >= 0.0);
        assert!(!r.refinement_flip);

        let a = make_power_coefficient(1.0, 0.5, 1.0).unwrap();
        let r = check_structural_hypotheses(&a, &a, 0.5, None, 128).unwrap();
        assert_eq!(r.theta, Some(1.0));
        assert!(r.log_derivative_slope < 1e-8);
    }

    #[test]
    fn identity_for_constant_coefficient() {
        let a = make_constant_coefficient(1.0).unwrap();
        let g = |_x: f64| 1.0;
        let h = |_x: f64, _b: f64| 1.0;
        let id = IdentityData {
            g: &g,
            h0: 1.0,
            h: Some(&h),
        };
        let (res, _) = identity_check(&a, &id, &nodes(64, 0.5), None).unwrap();
        assert!(res < 1e-14);
    }

    #[test]
    fn json_schema_round_trip() {
        let js = r#"{"type":"power","K":0.25,"x0":0.5,"scale":1.0}"#;
        let spec: CoefficientSpec = serde_json::from_str(js).unwrap();
        let f = CoefficientFn::try_from(&spec).unwrap();
        assert_eq!(f.power_exponent(), Some(0.25));
        assert_eq!(f.to_spec(), spec);
    }
}
