//! Weighted Hardy-Poincare constants, admissible potentials and coercivity.
//!
//! Every best constant is a discrete extremal Rayleigh quotient: the smallest
//! `C` with `left(w) <= C right(w)` over the admissible nodal fields.

use serde::{Deserialize, Serialize};

use crate::coefficients::{
    classify_pair_on, BoundaryKind, CoefficientFn, DegeneracyReport, HardyBranch, LambdaBranch,
};
use crate::error::{Error, Result};
use crate::evolution::ProblemSpec;
use crate::grid::{assemble_operator, build_grid, check_len, stiffness_matrix, Grid};
use crate::linalg::{min_generalized_eigenvalue, sup_ratio, SymTridiag};

/// Refinement gaps above this are flagged in reports.
pub const GAP_FLAG: f64 = 0.02;
/// Estimated weight exponents at or below this are flagged as unreliable.
pub const Q_RELIABLE: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantTag {
    /// `int p w^2/(x-x0)^2 <= C int p (w')^2`, `w(0) = w(1) = 0`.
    DirichletP,
    /// As above with `w'(0) = w'(1) = 0` and the boundary terms weighted by `Xi`.
    NeumannPBoundary,
    /// `int u^2/(ab) <= C int (u')^2`, zero boundary values.
    CstarDirichlet,
    /// `int u^2/(ab) <= C ||u||_{H^1}^2`, `u'(0) = u'(1) = 0`.
    CstarNeumannH1,
    /// `int u^2/(ab) <= C int (u')^2`, `u'(0) = u'(1) = 0` and `u(x0) = 0`.
    CstarNeumannZero,
}

impl VariantTag {
    pub const ALL: [VariantTag; 5] = [
        VariantTag::DirichletP,
        VariantTag::NeumannPBoundary,
        VariantTag::CstarDirichlet,
        VariantTag::CstarNeumannH1,
        VariantTag::CstarNeumannZero,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            VariantTag::DirichletP => "dirichlet_p",
            VariantTag::NeumannPBoundary => "neumann_p_boundary",
            VariantTag::CstarDirichlet => "cstar_dirichlet",
            VariantTag::CstarNeumannH1 => "cstar_neumann_H1",
            VariantTag::CstarNeumannZero => "cstar_neumann_zero",
        }
    }

    pub fn bc(&self) -> BoundaryKind {
        match self {
            VariantTag::DirichletP | VariantTag::CstarDirichlet => BoundaryKind::Dirichlet,
            _ => BoundaryKind::Neumann,
        }
    }

    fn uses_p(&self) -> bool {
        matches!(self, VariantTag::DirichletP | VariantTag::NeumannPBoundary)
    }
}

/// A variant together with its weight `p = p_scale (x - x0)^2 / (ab)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardyVariant {
    pub tag: VariantTag,
    pub p_scale: f64,
}

impl HardyVariant {
    pub fn new(tag: VariantTag) -> Self {
        HardyVariant { tag, p_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantReport {
    pub variant: VariantTag,
    pub cells: usize,
    pub c_best: f64,
    /// Extremal field on the full grid (zero on constrained nodes).
    #[serde(skip)]
    pub eigenvector: Vec<f64>,
    /// `|C(2N) - C(N)| / C(N)`.
    pub refinement_gap: f64,
    pub gap_flagged: bool,
    pub xi: Option<f64>,
    pub beta: Option<f64>,
    /// Weight exponent `q`, for the weighted variants.
    pub q: Option<f64>,
    pub q_unreliable: bool,
}

fn x0_of(spec: &ProblemSpec) -> Result<f64> {
    spec.x0()
        .ok_or_else(|| Error::Unsupported("weighted variants need a degenerate pair".into()))
}

/// `p = scale (x - x0)^2 / (ab)` with `p(x0) = 0`.
fn p_weight(a: &CoefficientFn, b: &CoefficientFn, x0: f64, scale: f64, x: f64) -> f64 {
    if x == x0 {
        0.0
    } else {
        scale * (x - x0).powi(2) / (a.value(x) * b.value(x))
    }
}

/// `inf (x - x0) p'/p = inf [2 - (x - x0)a'/a - (x - x0)b'/b]`: the largest
/// `q` for which `p / |x - x0|^q` is monotone away from `x0` on the sample.
pub fn weight_exponent(a: &CoefficientFn, b: &CoefficientFn, nodes: &[f64]) -> Result<f64> {
    let x0 = a
        .x0()
        .ok_or_else(|| Error::Unsupported("nondegenerate coefficient".into()))?;
    let mut q = f64::INFINITY;
    for &x in nodes {
        if x == x0 {
            continue;
        }
        let d = x - x0;
        let r = 2.0 - d * a.derivative(x)? / a.value(x) - d * b.derivative(x)? / b.value(x);
        q = q.min(r);
    }
    Ok(q)
}

/// Boundary coefficient of the Neumann weighted inequality.
pub fn xi(q: f64, x0: f64) -> f64 {
    ((1.0 - x0).powf(q - 1.0) / (q - 1.0)).max(1.0 / (q - 1.0))
}

/// `max{x0^2/(ab)(0), (1-x0)^2/(ab)(1)}`.
pub fn beta(a: &CoefficientFn, b: &CoefficientFn, x0: f64) -> f64 {
    (x0 * x0 / (a.value(0.0) * b.value(0.0)))
        .max((1.0 - x0).powi(2) / (a.value(1.0) * b.value(1.0)))
}

/// Forms of one inequality on one grid.
struct Pencil {
    /// Left side of the inequality.
    left: SymTridiag,
    /// Right side, multiplied by `C`.
    right: SymTridiag,
    /// Right-side terms not multiplied by `C`.
    boundary: Option<SymTridiag>,
    keep: Vec<usize>,
    q: Option<f64>,
    xi: Option<f64>,
}

fn pinned_nodes(variant: VariantTag, spec: &ProblemSpec, grid: &Grid) -> Result<Vec<usize>> {
    Ok(match variant {
        VariantTag::CstarNeumannZero => grid
            .straddling_nodes()
            .map(|p| p.to_vec())
            .unwrap_or_default(),
        VariantTag::CstarDirichlet | VariantTag::CstarNeumannH1 => {
            if spec.pins_x0()? {
                grid.straddling_nodes()
                    .map(|p| p.to_vec())
                    .unwrap_or_default()
            } else {
                Vec::new()
            }
        }
        _ => Vec::new(),
    })
}

fn build_pencil(variant: &HardyVariant, spec: &ProblemSpec, grid: &Grid) -> Result<Pencil> {
    let n = grid.cells();
    let h = grid.h();
    let tag = variant.tag;
    let pinned = pinned_nodes(tag, spec, grid)?;
    let keep: Vec<usize> = (0..n).filter(|i| !pinned.contains(i)).collect();
    if tag.uses_p() {
        let x0 = x0_of(spec)?;
        if !(variant.p_scale > 0.0) {
            return Err(Error::param("p_scale", "must be positive"));
        }
        let q = weight_exponent(&spec.a, &spec.b, grid.nodes())?;
        if !(q > 1.0) {
            return Err(Error::Hypothesis {
                id: "H-HARDY-Q",
                detail: format!("weight exponent q = {q:.6} must exceed 1"),
            });
        }
        let p = |x: f64| p_weight(&spec.a, &spec.b, x0, variant.p_scale, x);
        let left = SymTridiag::diagonal(
            grid.nodes()
                .iter()
                .map(|&x| h * p(x) / (x - x0).powi(2))
                .collect(),
        );
        let mut right = SymTridiag::zeros(n);
        for (k, e) in grid.edges().iter().enumerate().take(n).skip(1) {
            let w = p(*e) / h;
            right.diag[k - 1] += w;
            right.diag[k] += w;
            right.off[k - 1] -= w;
        }
        let mut boundary = None;
        let mut xi_val = None;
        match tag.bc() {
            BoundaryKind::Dirichlet => {
                right.diag[0] += 2.0 * p(0.0) / h;
                right.diag[n - 1] += 2.0 * p(1.0) / h;
            }
            BoundaryKind::Neumann => {
                // Linear extrapolation of w to the boundary edges.
                let xi_q = xi(q, x0);
                let c0 = 2.0 * xi_q * p(0.0) / x0.powf(q);
                let c1 = 2.0 * xi_q * p(1.0) / (1.0 - x0).powf(q);
                let mut bt = SymTridiag::zeros(n);
                for (c, i, j) in [(c0, 0, 1), (c1, n - 1, n - 2)] {
                    bt.diag[i] += c * 2.25;
                    bt.diag[j] += c * 0.25;
                    bt.off[i.min(j)] += c * -0.75;
                }
                boundary = Some(bt);
                xi_val = Some(xi_q);
            }
        }
        return Ok(Pencil {
            left,
            right,
            boundary,
            keep,
            q: Some(q),
            xi: xi_val,
        });
    }
    let asm = crate::grid::assemble_with(&spec.a, &spec.b, 0.0, tag.bc(), grid, pinned)?;
    let left = asm.singular_form();
    let stiff = stiffness_matrix(n, h, tag.bc());
    let right = match tag {
        VariantTag::CstarNeumannH1 => stiff.combine(1.0, &SymTridiag::diagonal(vec![h; n]), 1.0),
        _ => stiff,
    };
    Ok(Pencil {
        left,
        right,
        boundary: None,
        keep,
        q: None,
        xi: None,
    })
}

fn expand(v: &[f64], keep: &[usize], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (x, &i) in v.iter().zip(keep) {
        out[i] = *x;
    }
    out
}

/// Best constant and extremal field on a single grid.
fn constant_on(
    variant: &HardyVariant,
    spec: &ProblemSpec,
    grid: &Grid,
) -> Result<(f64, Vec<f64>, Pencil)> {
    let pencil = build_pencil(variant, spec, grid)?;
    let n = grid.cells();
    let right = pencil.right.restrict(&pencil.keep);
    let left = pencil.left.restrict(&pencil.keep);
    let (c, v) = match &pencil.boundary {
        None => {
            let eig = min_generalized_eigenvalue(&right, &left)?;
            (1.0 / eig.mu, eig.vector)
        }
        Some(bt) => {
            let net = left.combine(1.0, &bt.restrict(&pencil.keep), -1.0);
            sup_ratio(&right, &net)?
        }
    };
    Ok((c, expand(&v, &pencil.keep, n), pencil))
}

/// Best constant on `grid` and on the doubled grid.
pub fn best_constant(
    variant: &HardyVariant,
    spec: &ProblemSpec,
    grid: &Grid,
) -> Result<ConstantReport> {
    let (c, v, pencil) = constant_on(variant, spec, grid)?;
    let fine = build_grid(2 * grid.cells(), spec.x0())?;
    let (c2, _, _) = constant_on(variant, spec, &fine)?;
    let gap = (c2 - c).abs() / c;
    if gap > GAP_FLAG {
        log::warn!(
            "{}: refinement gap {:.3}% at N = {}",
            variant.tag.name(),
            100.0 * gap,
            grid.cells()
        );
    }
    let q_unreliable = pencil
        .q
        .map_or(false, |q| q <= Q_RELIABLE && spec.a.is_tabulated());
    Ok(ConstantReport {
        variant: variant.tag,
        cells: grid.cells(),
        c_best: c,
        eigenvector: v,
        refinement_gap: gap,
        gap_flagged: gap > GAP_FLAG,
        xi: pencil.xi,
        beta: spec.x0().map(|x0| beta(&spec.a, &spec.b, x0)),
        q: pencil.q,
        q_unreliable,
    })
}

/// Best constant on `grid` alone, without the refinement companion.
pub fn constant_at(
    variant: &HardyVariant,
    spec: &ProblemSpec,
    grid: &Grid,
) -> Result<(f64, Vec<f64>)> {
    constant_on(variant, spec, grid).map(|(c, v, _)| (c, v))
}

/// Signed margin `C right(w) + boundary(w) - left(w)`.
pub fn verify_inequality(
    variant: &HardyVariant,
    w: &[f64],
    c: f64,
    spec: &ProblemSpec,
    grid: &Grid,
) -> Result<f64> {
    check_len(w, grid.cells())?;
    let pencil = build_pencil(variant, spec, grid)?;
    for i in (0..grid.cells()).filter(|i| !pencil.keep.contains(i)) {
        if w[i] != 0.0 {
            return Err(Error::Precondition(format!(
                "{} requires w(x0) = 0; node {i} carries {}",
                variant.tag.name(),
                w[i]
            )));
        }
    }
    let bt = pencil.boundary.as_ref().map_or(0.0, |b| b.quad_form(w));
    Ok(c * pencil.right.quad_form(w) + bt - pencil.left.quad_form(w))
}

/// Left side of the inequality for `w`, the natural scale of margins.
pub fn inequality_left(
    variant: &HardyVariant,
    w: &[f64],
    spec: &ProblemSpec,
    grid: &Grid,
) -> Result<f64> {
    Ok(build_pencil(variant, spec, grid)?.left.quad_form(w))
}

/// Admissible potentials: `(-inf, 0)` joined with `(0, upper)` when present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaRange {
    pub upper: Option<f64>,
}

impl LambdaRange {
    pub fn contains(&self, lambda: f64) -> bool {
        lambda < 0.0 || self.upper.map_or(false, |u| lambda > 0.0 && lambda < u)
    }

    /// Range on which the evolution is a contraction: as `contains`, with
    /// `lambda = 0` allowed.
    pub fn well_posed(&self, lambda: f64) -> bool {
        lambda == 0.0 || self.contains(lambda)
    }

    pub fn describe(&self) -> String {
        match self.upper {
            Some(u) => format!("(-inf, 0) U (0, {u:.17e})"),
            None => "(-inf, 0)".to_string(),
        }
    }
}

/// Admissible `lambda` from `C*`. The Neumann problem without a vanishing
/// trace at `x0` (weak pair with `K1 + K2 < 1`, or no degeneracy at all)
/// only admits negative potentials.
pub fn admissible_lambda_range(
    cstar: f64,
    bc: BoundaryKind,
    regime: Option<&DegeneracyReport>,
) -> LambdaRange {
    let branch = match (bc, regime) {
        (BoundaryKind::Dirichlet, _) => LambdaBranch::BelowInverseCstar,
        (BoundaryKind::Neumann, None) => LambdaBranch::NegativeOnly,
        (BoundaryKind::Neumann, Some(r)) => r.lambda_branch(bc),
    };
    match branch {
        LambdaBranch::BelowInverseCstar => LambdaRange {
            upper: Some(1.0 / cstar),
        },
        LambdaBranch::NegativeOnly => LambdaRange { upper: None },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CstarReport {
    pub value: f64,
    pub variant: VariantTag,
    pub branch: Option<HardyBranch>,
    pub regime: Option<DegeneracyReport>,
    pub range: LambdaRange,
}

/// `C*` for the spec's boundary condition, following the branch table:
/// Dirichlet uses the zero-boundary constant, Neumann the `H^1` constant in
/// the weak small-sum branch and the vanishing-trace constant otherwise.
pub fn cstar(spec: &ProblemSpec, grid: &Grid) -> Result<CstarReport> {
    let regime = if spec.x0().is_some() {
        Some(classify_pair_on(&spec.a, &spec.b, grid.nodes())?)
    } else {
        None
    };
    let branch = regime.as_ref().and_then(|r| r.hardy_branch);
    if regime.is_some() && branch.is_none() {
        log::warn!("coefficients match no Hardy-Poincare branch; C* is computed regardless");
    }
    let tag = match spec.bc {
        BoundaryKind::Dirichlet => VariantTag::CstarDirichlet,
        BoundaryKind::Neumann if regime.as_ref().map_or(true, |r| r.small_sum()) => {
            VariantTag::CstarNeumannH1
        }
        BoundaryKind::Neumann => VariantTag::CstarNeumannZero,
    };
    log::info!("C* from {}", tag.name());
    let (value, _) = constant_at(&HardyVariant::new(tag), spec, grid)?;
    let range = admissible_lambda_range(value, spec.bc, regime.as_ref());
    Ok(CstarReport {
        value,
        variant: tag,
        branch,
        regime,
        range,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coercivity {
    /// Smallest eigenvalue of the energy form against the space norm.
    pub lambda_min: f64,
    /// Lower bound from the norm-equivalence chain.
    pub analytic_bound: f64,
    /// True when the discrete form fails to be coercive.
    pub discrepancy: bool,
}

/// Coercivity constant of `int (u')^2 - lambda int u^2/(ab)` against
/// `int u^2/a + int (u')^2` (plus `int u^2/(ab)` when `u(x0) = 0` is
/// imposed).
pub fn coercivity_constant(
    spec: &ProblemSpec,
    grid: &Grid,
    cstar_value: f64,
) -> Result<Coercivity> {
    let regime = if spec.x0().is_some() {
        Some(classify_pair_on(&spec.a, &spec.b, grid.nodes())?)
    } else {
        None
    };
    let range = admissible_lambda_range(cstar_value, spec.bc, regime.as_ref());
    if !range.contains(spec.lambda) {
        return Err(Error::Precondition(format!(
            "lambda = {} outside the admissible range {}",
            spec.lambda,
            range.describe()
        )));
    }
    let asm = assemble_operator(spec, grid)?;
    let w = asm.singular_form();
    let k = asm.stiffness.clone();
    let energy = k.combine(1.0, &w, -spec.lambda);
    let with_singular = !asm.pinned.is_empty();
    let mut norm = asm.mass_form().combine(1.0, &k, 1.0);
    if with_singular {
        norm = norm.combine(1.0, &w, 1.0);
    }
    let eig = min_generalized_eigenvalue(&asm.restrict(&energy), &asm.restrict(&norm))?;

    let max_b = grid
        .nodes()
        .iter()
        .chain([0.0, 1.0].iter())
        .map(|&x| spec.b.value(x))
        .fold(0.0, f64::max);
    let negative_only = range.upper.is_none();
    let analytic_bound = if spec.bc == BoundaryKind::Neumann && negative_only {
        1.0f64.min(-spec.lambda / max_b)
    } else {
        let extra = if with_singular { cstar_value } else { 0.0 };
        1.0f64.min(1.0 - spec.lambda * cstar_value) / (1.0 + cstar_value * max_b + extra)
    };
    let discrepancy = !(eig.mu > 0.0);
    if discrepancy {
        log::warn!("discrete coercivity constant {} is not positive", eig.mu);
    }
    Ok(Coercivity {
        lambda_min: eig.mu,
        analytic_bound,
        discrepancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{classify_pair, make_constant_coefficient, make_power_coefficient};
    use crate::evolution::Scheme;

    fn spec_with(
        a: CoefficientFn,
        b: CoefficientFn,
        bc: BoundaryKind,
        lambda: f64,
        cells: usize,
    ) -> ProblemSpec {
        ProblemSpec {
            a,
            b,
            lambda,
            horizon: 1.0,
            bc,
            omega: (0.3, 0.7),
            cells,
            steps: 2 * cells,
            scheme: Scheme::ImplicitEuler,
            pin_x0: None,
        }
    }

    fn wwd(bc: BoundaryKind, cells: usize) -> ProblemSpec {
        let a = make_power_coefficient(0.25, 0.5, 1.0).unwrap();
        spec_with(a.clone(), a, bc, -1.0, cells)
    }

    #[test]
    fn classical_poincare_constant() {
        let one = make_constant_coefficient(1.0).unwrap();
        let spec = spec_with(one.clone(), one, BoundaryKind::Dirichlet, 0.0, 400);
        let g = spec.grid().unwrap();
        let (c, _) =
            constant_at(&HardyVariant::new(VariantTag::CstarDirichlet), &spec, &g).unwrap();
        let exact = 1.0 / (std::f64::consts::PI).powi(2);
        assert!((c - exact).abs() / exact < 0.005);
    }

    #[test]
    fn xi_and_beta_formulas() {
        assert!((xi(1.5, 0.5) - 2.0).abs() < 1e-15);
        let a = make_power_coefficient(0.25, 0.5, 1.0).unwrap();
        assert!((beta(&a, &a, 0.5) - 0.25 / 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weight_exponent_of_the_benchmark() {
        let spec = wwd(BoundaryKind::Dirichlet, 64);
        let g = spec.grid().unwrap();
        assert!((weight_exponent(&spec.a, &spec.b, g.nodes()).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn scaling_p_keeps_the_constant() {
        let spec = wwd(BoundaryKind::Dirichlet, 100);
        let g = spec.grid().unwrap();
        let (c1, _) = constant_at(&HardyVariant::new(VariantTag::DirichletP), &spec, &g).unwrap();
        let v = HardyVariant {
            tag: VariantTag::DirichletP,
            p_scale: 3.0,
        };
        let (c3, _) = constant_at(&v, &spec, &g).unwrap();
        assert!((c1 - c3).abs() / c1 < 1e-9);
    }

    #[test]
    fn extremal_field_has_zero_margin() {
        for tag in VariantTag::ALL {
            let spec = wwd(tag.bc(), 80);
            let g = spec.grid().unwrap();
            let v = HardyVariant::new(tag);
            let (c, w) = constant_at(&v, &spec, &g).unwrap();
            let m = verify_inequality(&v, &w, c, &spec, &g).unwrap();
            let l = inequality_left(&v, &w, &spec, &g).unwrap();
            assert!(
                m.abs() <= 1e-6 * l.abs().max(1e-300),
                "{}: {m} vs {l}",
                tag.name()
            );
            assert_eq!(
                verify_inequality(&v, &vec![0.0; 80], c, &spec, &g).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn vanishing_trace_is_enforced() {
        let spec = wwd(BoundaryKind::Neumann, 32);
        let g = spec.grid().unwrap();
        let v = HardyVariant::new(VariantTag::CstarNeumannZero);
        assert!(matches!(
            verify_inequality(&v, &vec![1.0; 32], 1.0, &spec, &g),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn extra_constraint_never_raises_the_constant() {
        let spec = wwd(BoundaryKind::Neumann, 100);
        let g = spec.grid().unwrap();
        let (free, _) =
            constant_at(&HardyVariant::new(VariantTag::CstarNeumannH1), &spec, &g).unwrap();
        let mut pinned = spec.clone();
        pinned.pin_x0 = Some(true);
        let (c, _) =
            constant_at(&HardyVariant::new(VariantTag::CstarNeumannH1), &pinned, &g).unwrap();
        assert!(c <= free * (1.0 + 1e-12));
    }

    #[test]
    fn lambda_ranges() {
        let r = admissible_lambda_range(2.0, BoundaryKind::Dirichlet, None);
        assert_eq!(r.upper, Some(0.5));
        assert!(r.contains(-3.0) && r.contains(0.49) && !r.contains(0.5) && !r.contains(0.0));
        let a = make_power_coefficient(0.25, 0.5, 1.0).unwrap();
        let report = classify_pair(&a, &a).unwrap();
        let r = admissible_lambda_range(2.0, BoundaryKind::Neumann, Some(&report));
        assert_eq!(r.upper, None);
        assert!(!r.contains(0.1) && !r.contains(0.0) && r.contains(-0.1));
    }

    #[test]
    fn coercivity_against_the_analytic_chain() {
        let one = make_constant_coefficient(1.0).unwrap();
        let spec = spec_with(one.clone(), one, BoundaryKind::Dirichlet, -1.0, 100);
        let g = spec.grid().unwrap();
        let cs = cstar(&spec, &g).unwrap();
        let co = coercivity_constant(&spec, &g, cs.value).unwrap();
        assert!(co.lambda_min > 0.0 && co.lambda_min >= co.analytic_bound);

        let spec = spec.with_lambda(0.5 / cs.value);
        let co = coercivity_constant(&spec, &g, cs.value).unwrap();
        assert!(co.analytic_bound <= co.lambda_min && co.lambda_min <= 1.0);

        let spec = spec.with_lambda(0.0);
        assert!(coercivity_constant(&spec, &g, cs.value).is_err());
    }

    #[test]
    fn neumann_weak_pair_coercivity() {
        let spec = wwd(BoundaryKind::Neumann, 100);
        let g = spec.grid().unwrap();
        let cs = cstar(&spec, &g).unwrap();
        assert_eq!(cs.variant, VariantTag::CstarNeumannH1);
        let co = coercivity_constant(&spec, &g, cs.value).unwrap();
        assert!(co.lambda_min >= co.analytic_bound * (1.0 - 1e-9));
    }
}
