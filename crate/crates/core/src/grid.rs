//! Cell-centered grid on `(0, 1)` with the degeneracy point on a cell edge,
//! weighted quadrature, and assembly of `u -> a u'' + lambda u / b`.

use std::ops::Range;

use crate::coefficients::{BoundaryKind, CoefficientFn};
use crate::error::{Error, Result};
use crate::evolution::ProblemSpec;
use crate::linalg::{max_generalized_eigenvalue, SymTridiag, Tridiag};

/// Smallest accepted cell count.
pub const MIN_CELLS: usize = 4;
/// Below this cell count a resolution warning is logged.
pub const RECOMMENDED_CELLS: usize = 16;

/// Uniform midpoint grid. Node `i` sits at `(i + 1/2) h`; the degeneracy
/// point, when present, is snapped onto the edge `k h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    cells: usize,
    h: f64,
    nodes: Vec<f64>,
    x0: Option<f64>,
    x0_edge: Option<usize>,
}

/// Builds the grid, snapping `x0` to the nearest interior edge.
pub fn build_grid(cells: usize, x0: Option<f64>) -> Result<Grid> {
    if cells < MIN_CELLS {
        return Err(Error::param(
            "N",
            format!("{cells} cells, need at least {MIN_CELLS}"),
        ));
    }
    if cells < RECOMMENDED_CELLS {
        log::warn!("grid with {cells} cells is below the recommended {RECOMMENDED_CELLS}");
    }
    let h = 1.0 / cells as f64;
    let nodes = (0..cells).map(|i| (i as f64 + 0.5) * h).collect();
    let (x0, x0_edge) = match x0 {
        None => (None, None),
        Some(x0) => {
            if !(x0 > 0.0 && x0 < 1.0) {
                return Err(Error::param("x0", format!("{x0} not in (0, 1)")));
            }
            let k = (x0 * cells as f64).round() as usize;
            if k == 0 || k == cells {
                return Err(Error::param(
                    "x0",
                    format!("{x0} snaps onto the boundary with {cells} cells"),
                ));
            }
            let snapped = k as f64 * h;
            if (snapped - x0).abs() > 1e-12 {
                log::warn!("x0 = {x0} is not on a cell edge; snapped to {snapped}");
            }
            (Some(snapped), Some(k))
        }
    };
    Ok(Grid {
        cells,
        h,
        nodes,
        x0,
        x0_edge,
    })
}

impl Grid {
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Snapped degeneracy point.
    pub fn x0(&self) -> Option<f64> {
        self.x0
    }

    /// Index `k` of the edge `k h` carrying `x0`.
    pub fn x0_edge(&self) -> Option<usize> {
        self.x0_edge
    }

    /// The two nodes adjacent to the edge of `x0`.
    pub fn straddling_nodes(&self) -> Option<[usize; 2]> {
        self.x0_edge.map(|k| [k - 1, k])
    }

    /// Edge positions `0, h, ..., 1`.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.cells).map(|k| k as f64 * self.h).collect()
    }

    /// Edges and midpoints interleaved: `j h / 2` for `j = 0..=2N`.
    /// Node `i` is entry `2i + 1`, edge `k` is entry `2k`.
    pub fn half_points(&self) -> Vec<f64> {
        (0..=2 * self.cells)
            .map(|j| j as f64 * 0.5 * self.h)
            .collect()
    }

    /// Node indices of the window `(lo, hi)` after snapping its ends to edges.
    pub fn window(&self, lo: f64, hi: f64) -> Result<Range<usize>> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::param(
                "omega",
                format!("({lo}, {hi}) is not a subinterval of [0, 1]"),
            ));
        }
        let n = self.cells as f64;
        let a = (lo * n).round() as usize;
        let b = (hi * n).round() as usize;
        if b <= a {
            return Err(Error::param(
                "omega",
                format!("({lo}, {hi}) contains no cell at N = {}", self.cells),
            ));
        }
        Ok(a..b)
    }

    /// Indicator of the snapped window on the nodes.
    pub fn indicator(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        let r = self.window(lo, hi)?;
        Ok((0..self.cells)
            .map(|i| if r.contains(&i) { 1.0 } else { 0.0 })
            .collect())
    }
}

fn positive_samples(f: &CoefficientFn, grid: &Grid, name: &str) -> Result<Vec<f64>> {
    grid.nodes
        .iter()
        .map(|&x| {
            let v = f.value(x);
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::InvalidCoefficient(format!(
                    "{name}({x}) = {v} at a grid node"
                )))
            }
        })
        .collect()
}

/// Quadrature weights `h / a(x_i)` of the `L^2_{1/a}` inner product.
pub fn mass_weights(grid: &Grid, a: &CoefficientFn) -> Result<Vec<f64>> {
    Ok(positive_samples(a, grid, "a")?
        .into_iter()
        .map(|v| grid.h / v)
        .collect())
}

/// `sum_i u_i v_i h / a(x_i)`.
pub fn weighted_inner(u: &[f64], v: &[f64], grid: &Grid, a: &CoefficientFn) -> Result<f64> {
    check_len(u, grid.cells)?;
    check_len(v, grid.cells)?;
    let w = mass_weights(grid, a)?;
    Ok(dot_weighted(u, v, &w))
}

pub(crate) fn check_len(u: &[f64], n: usize) -> Result<()> {
    if u.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: u.len(),
        });
    }
    Ok(())
}

pub(crate) fn dot_weighted(u: &[f64], v: &[f64], w: &[f64]) -> f64 {
    u.iter().zip(v).zip(w).map(|((a, b), c)| a * b * c).sum()
}

/// Discrete operator and the quadratic forms built from it.
#[derive(Debug, Clone)]
pub struct OperatorAssembly {
    /// Row `i`: `a_i (u_{i-1} - 2 u_i + u_{i+1}) / h^2 + lambda u_i / b_i`.
    pub op_matrix: Tridiag,
    /// `h / a(x_i)`.
    pub mass_weights: Vec<f64>,
    /// `h / (a b)(x_i)`.
    pub singular_weights: Vec<f64>,
    /// Matrix of `int (u')^2` under the boundary closure.
    pub stiffness: SymTridiag,
    pub bc: BoundaryKind,
    pub lambda: f64,
    pub h: f64,
    /// Nodes held at zero to encode `u(x0) = 0`.
    pub pinned: Vec<usize>,
}

/// Assembles the operator for `spec` on `grid`.
///
/// The Dirichlet closure is the odd reflection `u_{-1} = -u_0`, which puts
/// the zero on the boundary edge itself; Neumann uses the even reflection
/// `u_{-1} = u_0`.
pub fn assemble_operator(spec: &ProblemSpec, grid: &Grid) -> Result<OperatorAssembly> {
    let pinned = if spec.pins_x0()? {
        grid.straddling_nodes()
            .map(|p| p.to_vec())
            .unwrap_or_default()
    } else {
        Vec::new()
    };
    assemble_with(&spec.a, &spec.b, spec.lambda, spec.bc, grid, pinned)
}

/// Assembly from raw ingredients; `pinned` lists nodes held at zero.
pub fn assemble_with(
    a: &CoefficientFn,
    b: &CoefficientFn,
    lambda: f64,
    bc: BoundaryKind,
    grid: &Grid,
    pinned: Vec<usize>,
) -> Result<OperatorAssembly> {
    let n = grid.cells;
    let h = grid.h;
    let av = positive_samples(a, grid, "a")?;
    let bv = positive_samples(b, grid, "b")?;
    let stiffness = stiffness_matrix(n, h, bc);

    let mut op = Tridiag::zeros(n);
    let end = match bc {
        BoundaryKind::Dirichlet => -3.0,
        BoundaryKind::Neumann => -1.0,
    };
    for i in 0..n {
        let s = av[i] / (h * h);
        let centre = if i == 0 || i == n - 1 { end } else { -2.0 };
        op.diag[i] = s * centre + lambda / bv[i];
        if i > 0 {
            op.lower[i - 1] = s;
        }
        if i + 1 < n {
            op.upper[i] = s;
        }
    }
    Ok(OperatorAssembly {
        op_matrix: op,
        mass_weights: av.iter().map(|v| h / v).collect(),
        singular_weights: av.iter().zip(&bv).map(|(x, y)| h / (x * y)).collect(),
        stiffness,
        bc,
        lambda,
        h,
        pinned,
    })
}

/// `int (u')^2` with edge differences: each interior edge contributes
/// `(u_{i+1} - u_i)^2 / h`, each Dirichlet boundary edge `2 u_b^2 / h`.
pub fn stiffness_matrix(n: usize, h: f64, bc: BoundaryKind) -> SymTridiag {
    let mut k = SymTridiag::zeros(n);
    for i in 0..n.saturating_sub(1) {
        k.diag[i] += 1.0 / h;
        k.diag[i + 1] += 1.0 / h;
        k.off[i] = -1.0 / h;
    }
    if bc == BoundaryKind::Dirichlet {
        k.diag[0] += 2.0 / h;
        k.diag[n - 1] += 2.0 / h;
    }
    k
}

impl OperatorAssembly {
    pub fn len(&self) -> usize {
        self.mass_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass_weights.is_empty()
    }

    /// `diag(mass) * op = -stiffness + lambda diag(singular)`.
    pub fn weighted_form(&self) -> SymTridiag {
        self.stiffness.combine(
            -1.0,
            &SymTridiag::diagonal(self.singular_weights.clone()),
            self.lambda,
        )
    }

    /// Explicit row scaling of `op_matrix`; equal to `weighted_form` up to
    /// rounding.
    pub fn weighted_matrix(&self) -> Tridiag {
        self.op_matrix.row_scaled(&self.mass_weights)
    }

    pub fn mass_form(&self) -> SymTridiag {
        SymTridiag::diagonal(self.mass_weights.clone())
    }

    pub fn singular_form(&self) -> SymTridiag {
        SymTridiag::diagonal(self.singular_weights.clone())
    }

    /// Indices not pinned to zero.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|i| !self.pinned.contains(i))
            .collect()
    }

    pub fn restrict(&self, form: &SymTridiag) -> SymTridiag {
        form.restrict(&self.free_indices())
    }

    /// Largest generalized eigenvalue of `(S, mass)` on the free nodes.
    pub fn max_eigenvalue(&self) -> Result<f64> {
        let s = self.restrict(&self.weighted_form());
        let m = self.restrict(&self.mass_form());
        Ok(max_generalized_eigenvalue(&s, &m)?.mu)
    }

    /// Applies `op_matrix`, with pinned rows returning zero.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.op_matrix.matvec(u);
        for &p in &self.pinned {
            out[p] = 0.0;
        }
        out
    }

    /// Dirichlet energy `int (u')^2 - lambda int u^2 / (ab)`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        -self.weighted_form().quad_form(u)
    }

    /// Zeroes the pinned entries of `u`.
    pub fn project(&self, u: &mut [f64]) {
        for &p in &self.pinned {
            u[p] = 0.0;
        }
    }
}

/// Summation-by-parts residual with the two sides it compares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenResidual {
    /// `sum_i (u'')_i v_i h`.
    pub second_difference_side: f64,
    /// `-sum_edges u' v' (edge weight)`.
    pub gradient_side: f64,
    pub residual: f64,
    /// Sum of magnitudes of all terms, the natural scale for the residual.
    pub scale: f64,
}

impl GreenResidual {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.residual / self.scale
        }
    }
}

/// Compares `sum (u'')_i v_i h` with `-sum u' v'` over all edges, boundary
/// edges carrying half weight and the one-sided derivative of the closure.
pub fn discrete_green_check(
    u: &[f64],
    v: &[f64],
    assembly: &OperatorAssembly,
) -> Result<GreenResidual> {
    let n = assembly.len();
    check_len(u, n)?;
    check_len(v, n)?;
    let h = assembly.h;
    let ghost = |w: &[f64], i: usize| match assembly.bc {
        BoundaryKind::Dirichlet => -w[i],
        BoundaryKind::Neumann => w[i],
    };
    let mut lhs = 0.0;
    let mut scale = 0.0;
    for i in 0..n {
        let left = if i == 0 { ghost(u, 0) } else { u[i - 1] };
        let right = if i == n - 1 {
            ghost(u, n - 1)
        } else {
            u[i + 1]
        };
        let term = (left - 2.0 * u[i] + right) / (h * h) * v[i] * h;
        lhs += term;
        scale += term.abs();
    }
    let mut rhs = 0.0;
    for i in 0..n - 1 {
        let term = (u[i + 1] - u[i]) / h * (v[i + 1] - v[i]) / h * h;
        rhs -= term;
        scale += term.abs();
    }
    if assembly.bc == BoundaryKind::Dirichlet {
        for i in [0, n - 1] {
            let term = (2.0 * u[i] / h) * (2.0 * v[i] / h) * (h / 2.0);
            rhs -= term;
            scale += term.abs();
        }
    }
    Ok(GreenResidual {
        second_difference_side: lhs,
        gradient_side: rhs,
        residual: (lhs - rhs).abs(),
        scale,
    })
}

/// Number of midpoint subcells per half cell in `cumulative_integral`.
pub const SUBCELLS: usize = 8;

/// Signed integrals `int_anchor^x f` at every half point `j h / 2` of the
/// grid, by composite midpoint quadrature on `SUBCELLS` subcells per half
/// cell. The anchor is rounded to the nearest half point. Midpoint
/// evaluation never touches the half points themselves, so integrable
/// singularities at an edge are handled without regularization.
pub fn cumulative_integral(grid: &Grid, anchor: f64, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let half = 0.5 * grid.h;
    let m = 2 * grid.cells;
    let dx = half / SUBCELLS as f64;
    let mut acc = vec![0.0; m + 1];
    for j in 0..m {
        let lo = j as f64 * half;
        let piece: f64 = (0..SUBCELLS)
            .map(|k| f(lo + (k as f64 + 0.5) * dx))
            .sum::<f64>()
            * dx;
        acc[j + 1] = acc[j] + piece;
    }
    let ja = ((anchor / half).round() as usize).min(m);
    let base = acc[ja];
    acc.iter().map(|v| v - base).collect()
}
