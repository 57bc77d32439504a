//! Time stepping of the forward controlled problem and of the backward
//! adjoint problem, with the energy and contraction monitors.

use serde::{Deserialize, Serialize};

use crate::coefficients::{estimate_exponent, snap_exponent, BoundaryKind, CoefficientFn};
use crate::error::{Error, Result};
use crate::grid::{
    assemble_operator, build_grid, check_len, dot_weighted, Grid, OperatorAssembly, MIN_CELLS,
};
use crate::linalg::SymTridiag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    ImplicitEuler,
    CrankNicolson,
}

impl Scheme {
    /// Implicitness weight of the theta-scheme.
    pub fn theta(&self) -> f64 {
        match self {
            Scheme::ImplicitEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        }
    }
}

/// A full problem instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub a: CoefficientFn,
    pub b: CoefficientFn,
    pub lambda: f64,
    pub horizon: f64,
    pub bc: BoundaryKind,
    /// Control window `(alpha, beta)`.
    pub omega: (f64, f64),
    pub cells: usize,
    pub steps: usize,
    pub scheme: Scheme,
    /// Hold `u(x0) = 0` on the two nodes next to `x0`. `None` selects the
    /// default: on when both coefficients degenerate and `K1 + K2 >= 1`.
    pub pin_x0: Option<bool>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.omega;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::param(
                "omega",
                format!("({lo}, {hi}) must satisfy 0 <= lo < hi <= 1"),
            ));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::param(
                "T",
                format!("{} must be positive", self.horizon),
            ));
        }
        if !self.lambda.is_finite() {
            return Err(Error::param("lambda", "must be finite"));
        }
        if self.cells < MIN_CELLS {
            return Err(Error::param(
                "N",
                format!("{} cells, need at least {MIN_CELLS}", self.cells),
            ));
        }
        if self.steps == 0 {
            return Err(Error::param("M", "need at least one time step"));
        }
        if self.steps < 2 * self.cells {
            log::warn!("M = {} is below 2N = {}", self.steps, 2 * self.cells);
        }
        match (self.a.x0(), self.b.x0()) {
            (Some(xa), Some(xb)) if (xa - xb).abs() > 1e-12 => {
                return Err(Error::Unsupported(format!(
                    "distinct degeneracy points {xa} and {xb}"
                )))
            }
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::Unsupported(
                    "a and b must both degenerate or both be nondegenerate".into(),
                ))
            }
            _ => {}
        }
        if let Some(x0) = self.x0() {
            if x0 == lo || x0 == hi {
                return Err(Error::Hypothesis {
                    id: "H-OBS-WINDOW",
                    detail: format!("x0 = {x0} lies on the boundary of omega"),
                });
            }
        }
        Ok(())
    }

    pub fn x0(&self) -> Option<f64> {
        self.a.x0()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(self.cells, self.x0())
    }

    pub fn with_cells(&self, cells: usize) -> ProblemSpec {
        ProblemSpec {
            cells,
            ..self.clone()
        }
    }

    pub fn with_steps(&self, steps: usize) -> ProblemSpec {
        ProblemSpec {
            steps,
            ..self.clone()
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> ProblemSpec {
        ProblemSpec {
            lambda,
            ..self.clone()
        }
    }

    /// Whether `x0` lies inside the control window.
    pub fn omega_contains_x0(&self) -> bool {
        self.x0()
            .map_or(false, |x0| self.omega.0 < x0 && x0 < self.omega.1)
    }

    /// Resolves the `u(x0) = 0` switch.
    pub fn pins_x0(&self) -> Result<bool> {
        if let Some(p) = self.pin_x0 {
            return Ok(p && self.x0().is_some());
        }
        if self.x0().is_none() {
            return Ok(false);
        }
        let grid = self.grid()?;
        let k1 = snap_exponent(estimate_exponent(&self.a, grid.nodes())?);
        let k2 = snap_exponent(estimate_exponent(&self.b, grid.nodes())?);
        Ok(k1 + k2 >= 1.0)
    }

    pub fn assembly(&self) -> Result<(Grid, OperatorAssembly)> {
        let grid = self.grid()?;
        let asm = assemble_operator(self, &grid)?;
        Ok((grid, asm))
    }

    /// Indicator of the control window on the grid nodes.
    pub fn omega_mask(&self, grid: &Grid) -> Result<Vec<f64>> {
        grid.indicator(self.omega.0, self.omega.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// Fields at the uniform times `t_n = n T / M`, `n = 0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
    pub direction: Direction,
}

impl Trajectory {
    pub fn zeros(spec: &ProblemSpec, direction: Direction) -> Trajectory {
        Trajectory {
            times: times(spec),
            fields: vec![vec![0.0; spec.cells]; spec.steps + 1],
            direction,
        }
    }

    pub fn first(&self) -> &[f64] {
        &self.fields[0]
    }

    pub fn last(&self) -> &[f64] {
        self.fields.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn scale(&self, c: f64) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            fields: self
                .fields
                .iter()
                .map(|f| f.iter().map(|v| v * c).collect())
                .collect(),
            direction: self.direction,
        }
    }
}

fn times(spec: &ProblemSpec) -> Vec<f64> {
    let dt = spec.dt();
    (0..=spec.steps).map(|n| n as f64 * dt).collect()
}

/// Factorization-free theta-scheme stepper in the mass-weighted form
/// `(M - theta dt S) u_new = (M + (1 - theta) dt S) u_old + dt M f`.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub grid: Grid,
    pub assembly: OperatorAssembly,
    implicit: SymTridiag,
    explicit: SymTridiag,
    dt: f64,
    steps: usize,
}

impl Stepper {
    pub fn new(spec: &ProblemSpec) -> Result<Stepper> {
        spec.validate()?;
        let (grid, assembly) = spec.assembly()?;
        let dt = spec.dt();
        let theta = spec.scheme.theta();
        let s = assembly.weighted_form();
        let m = assembly.mass_form();
        let mut implicit = m.combine(1.0, &s, -theta * dt);
        let mut explicit = m.combine(1.0, &s, (1.0 - theta) * dt);
        for &p in &assembly.pinned {
            implicit.diag[p] = 1.0;
            explicit.diag[p] = 0.0;
            for form in [&mut implicit, &mut explicit] {
                if p > 0 {
                    form.off[p - 1] = 0.0;
                }
                if p < form.off.len() {
                    form.off[p] = 0.0;
                }
            }
        }
        Ok(Stepper {
            grid,
            assembly,
            implicit,
            explicit,
            dt,
            steps: spec.steps,
        })
    }

    pub fn mass(&self) -> &[f64] {
        &self.assembly.mass_weights
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `sqrt(sum u_i^2 h / a_i)`.
    pub fn norm(&self, u: &[f64]) -> f64 {
        dot_weighted(u, u, self.mass()).sqrt()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        dot_weighted(u, v, self.mass())
    }

    fn step(
        &self,
        old: &[f64],
        forcing: Option<&[f64]>,
        sign: f64,
        step: usize,
    ) -> Result<Vec<f64>> {
        let mut rhs = self.explicit.matvec(old);
        if let Some(f) = forcing {
            for ((r, fi), m) in rhs.iter_mut().zip(f).zip(self.mass()) {
                *r += sign * self.dt * m * fi;
            }
        }
        for &p in &self.assembly.pinned {
            rhs[p] = 0.0;
        }
        let out = self.implicit.solve(&rhs).map_err(|e| Error::StepFailure {
            step,
            reason: e.to_string(),
        })?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepFailure {
                step,
                reason: "non-finite state".into(),
            });
        }
        Ok(out)
    }

    /// Forward sweep; `forcing(n)` is the source used on the step that
    /// produces level `n` (`n = 1..=M`).
    pub fn forward<'a>(
        &self,
        u0: &[f64],
        forcing: impl Fn(usize) -> Option<&'a [f64]>,
    ) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(self.steps + 1);
        out.push(u0.to_vec());
        for n in 1..=self.steps {
            let next = self.step(&out[n - 1], forcing(n), 1.0, n)?;
            out.push(next);
        }
        Ok(out)
    }

    /// Final state of the forward sweep without storing intermediate levels.
    pub fn forward_final<'a>(
        &self,
        u0: &[f64],
        forcing: impl Fn(usize) -> Option<&'a [f64]>,
    ) -> Result<Vec<f64>> {
        let mut u = u0.to_vec();
        for n in 1..=self.steps {
            u = self.step(&u, forcing(n), 1.0, n)?;
        }
        Ok(u)
    }

    /// Backward sweep of `v_t + A v = f` from `v(T) = vT`; `source(n)` is used
    /// on the step that produces level `n` (`n = M-1..=0`). Returned levels
    /// are indexed by forward time.
    pub fn backward<'a>(
        &self,
        v_final: &[f64],
        source: impl Fn(usize) -> Option<&'a [f64]>,
    ) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![Vec::new(); self.steps + 1];
        out[self.steps] = v_final.to_vec();
        for n in (0..self.steps).rev() {
            out[n] = self.step(&out[n + 1], source(n), -1.0, self.steps - n)?;
        }
        Ok(out)
    }
}

fn check_finite(u: &[f64], what: &str) -> Result<()> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!("{what} has non-finite entries")));
    }
    Ok(())
}

fn check_trajectory(traj: &Trajectory, spec: &ProblemSpec) -> Result<()> {
    if traj.fields.len() != spec.steps + 1 {
        return Err(Error::Shape {
            expected: spec.steps + 1,
            got: traj.fields.len(),
        });
    }
    for f in &traj.fields {
        check_len(f, spec.cells)?;
        check_finite(f, "trajectory")?;
    }
    Ok(())
}

/// Solves the controlled forward problem from `u0`; control level `n` acts on
/// the step that produces level `n`.
pub fn solve_forward(
    u0: &[f64],
    control: Option<&Trajectory>,
    spec: &ProblemSpec,
) -> Result<Trajectory> {
    let stepper = Stepper::new(spec)?;
    check_len(u0, spec.cells)?;
    check_finite(u0, "u0")?;
    if let Some(c) = control {
        check_trajectory(c, spec)?;
        let mask = spec.omega_mask(&stepper.grid)?;
        let outside = c
            .fields
            .iter()
            .any(|f| f.iter().zip(&mask).any(|(v, m)| *m == 0.0 && *v != 0.0));
        if outside {
            return Err(Error::Precondition(
                "control is nonzero outside omega".into(),
            ));
        }
    }
    let fields = stepper.forward(u0, |n| control.map(|c| c.fields[n].as_slice()))?;
    Ok(Trajectory {
        times: times(spec),
        fields,
        direction: Direction::Forward,
    })
}

/// Solves the adjoint problem backward from `v(T) = vT` on the reversed
/// clock; source level `n` acts on the step that produces level `n`.
pub fn solve_adjoint(
    v_final: &[f64],
    source: Option<&Trajectory>,
    spec: &ProblemSpec,
) -> Result<Trajectory> {
    let stepper = Stepper::new(spec)?;
    check_len(v_final, spec.cells)?;
    check_finite(v_final, "vT")?;
    if let Some(s) = source {
        check_trajectory(s, spec)?;
    }
    let fields = stepper.backward(v_final, |n| source.map(|s| s.fields[n].as_slice()))?;
    Ok(Trajectory {
        times: times(spec),
        fields,
        direction: Direction::Backward,
    })
}

/// Relative residual of the discrete duality identity
/// `<u^M, v^M> = <u^0, v^0> + sum_{n=1}^M dt <h^n, v^{n-1}>` in `L^2_{1/a}`,
/// with `u` driven by `control` from `u0` and `v` the free adjoint from `vT`.
/// Exact (to roundoff) for the implicit Euler scheme.
pub fn duality_residual(
    u0: &[f64],
    v_final: &[f64],
    control: &Trajectory,
    spec: &ProblemSpec,
) -> Result<f64> {
    let stepper = Stepper::new(spec)?;
    let u = solve_forward(u0, Some(control), spec)?;
    let v = solve_adjoint(v_final, None, spec)?;
    let lhs = stepper.inner(u.last(), v.last());
    let mut rhs = stepper.inner(u.first(), v.first());
    let mut scale = lhs.abs() + rhs.abs();
    for n in 1..=spec.steps {
        let term = stepper.dt() * stepper.inner(&control.fields[n], &v.fields[n - 1]);
        rhs += term;
        scale += term.abs();
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((lhs - rhs).abs() / scale)
}

/// `E(t_n) = int (v_x)^2 - lambda int v^2 / (ab)` along the trajectory.
pub fn energy_series(traj: &Trajectory, spec: &ProblemSpec) -> Result<Vec<f64>> {
    check_trajectory(traj, spec)?;
    let (_, asm) = spec.assembly()?;
    Ok(traj.fields.iter().map(|f| asm.energy(f)).collect())
}

/// Most negative step change of an energy series relative to its largest
/// magnitude; zero for a nondecreasing series.
pub fn worst_energy_decrease(series: &[f64]) -> f64 {
    let scale = series.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    series
        .windows(2)
        .map(|w| (w[0] - w[1]).max(0.0) / scale)
        .fold(0.0, f64::max)
}

/// Largest relative one-step growth of `||u||_{1/a}`; zero steps count as 0.
pub fn contraction_report(traj: &Trajectory, spec: &ProblemSpec) -> Result<f64> {
    check_trajectory(traj, spec)?;
    let grid = spec.grid()?;
    let w = crate::grid::mass_weights(&grid, &spec.a)?;
    let norms: Vec<f64> = traj
        .fields
        .iter()
        .map(|f| dot_weighted(f, f, &w).sqrt())
        .collect();
    Ok(norms
        .windows(2)
        .filter(|p| p[0] > 0.0)
        .map(|p| (p[1] - p[0]) / p[0])
        .fold(0.0, f64::max))
}

/// Spectral radius of the one-step map in the `L^2_{1/a}` norm, by power
/// iteration from a fixed start.
pub fn step_spectral_radius(spec: &ProblemSpec, iterations: usize) -> Result<f64> {
    let stepper = Stepper::new(spec)?;
    let n = spec.cells;
    let mut u: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7 % 11) as f64)).collect();
    stepper.assembly.project(&mut u);
    let mut rho = 0.0;
    for k in 0..iterations {
        let norm = stepper.norm(&u);
        if norm == 0.0 {
            return Ok(0.0);
        }
        u.iter_mut().for_each(|v| *v /= norm);
        let next = stepper.step(&u, None, 1.0, k + 1)?;
        rho = stepper.norm(&next);
        u = next;
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{make_constant_coefficient, make_power_coefficient};
    use crate::testfns;
    use std::f64::consts::PI;

    fn heat(cells: usize, steps: usize, horizon: f64) -> ProblemSpec {
        let one = make_constant_coefficient(1.0).unwrap();
        ProblemSpec {
            a: one.clone(),
            b: one,
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

    fn wwd(lambda: f64) -> ProblemSpec {
        let a = make_power_coefficient(0.25, 0.5, 1.0).unwrap();
        ProblemSpec {
            a: a.clone(),
            b: a,
            lambda,
            horizon: 0.5,
            bc: BoundaryKind::Dirichlet,
            omega: (0.3, 0.7),
            cells: 64,
            steps: 128,
            scheme: Scheme::ImplicitEuler,
            pin_x0: None,
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let spec = heat(16, 32, 0.1);
        let t = solve_forward(&vec![0.0; 16], None, &spec).unwrap();
        assert!(t.fields.iter().all(|f| f.iter().all(|v| *v == 0.0)));
        let t = solve_adjoint(&vec![0.0; 16], None, &spec).unwrap();
        assert!(t.fields.iter().all(|f| f.iter().all(|v| *v == 0.0)));
        assert_eq!(contraction_report(&t, &spec).unwrap(), 0.0);
    }

    #[test]
    fn heat_mode_decay() {
        let spec = heat(200, 400, 0.1);
        let g = spec.grid().unwrap();
        let u0: Vec<f64> = g.nodes().iter().map(|x| (PI * x).sin()).collect();
        let t = solve_forward(&u0, None, &spec).unwrap();
        let ratio = t.last().iter().map(|v| v * v).sum::<f64>().sqrt()
            / u0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let exact = (-PI * PI * 0.1).exp();
        assert!((ratio - exact).abs() / exact < 0.01, "{ratio} vs {exact}");
    }

    #[test]
    fn adjoint_is_forward_on_reversed_clock() {
        let spec = heat(32, 40, 0.2);
        let g = spec.grid().unwrap();
        let vt = testfns::random_smooth(&g, BoundaryKind::Dirichlet, &mut testfns::rng(3));
        let f = solve_forward(&vt, None, &spec).unwrap();
        let b = solve_adjoint(&vt, None, &spec).unwrap();
        for n in 0..=40 {
            for (x, y) in f.fields[n].iter().zip(&b.fields[40 - n]) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn admissible_negative_lambda_contracts() {
        let spec = wwd(-1.0);
        let g = spec.grid().unwrap();
        let u0 = testfns::random_nodal(&g, &mut testfns::rng(5));
        let t = solve_forward(&u0, None, &spec).unwrap();
        assert!(contraction_report(&t, &spec).unwrap() <= 1e-12);
        let b = solve_adjoint(&u0, None, &spec).unwrap();
        let s = Stepper::new(&spec).unwrap();
        assert!(s.norm(b.first()) <= s.norm(b.last()));
        assert!(step_spectral_radius(&spec, 50).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn sine_mode_energy() {
        let spec = heat(400, 10, 0.01);
        let g = spec.grid().unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| (PI * x).sin()).collect();
        let t = solve_adjoint(&v, None, &spec).unwrap();
        let e = energy_series(&t, &spec).unwrap();
        let target = PI * PI / 2.0;
        assert!((e[10] - target).abs() / target < 0.01);
        assert_eq!(worst_energy_decrease(&e), 0.0);
    }

    #[test]
    fn energy_nondecreasing_for_positive_lambda() {
        let spec = wwd(0.5);
        let (g, asm) = spec.assembly().unwrap();
        let mut v = testfns::random_smooth(&g, BoundaryKind::Dirichlet, &mut testfns::rng(9));
        asm.project(&mut v);
        let t = solve_adjoint(&v, None, &spec).unwrap();
        let e = energy_series(&t, &spec).unwrap();
        assert!(worst_energy_decrease(&e) <= 1e-8);
    }

    #[test]
    fn control_outside_window_is_rejected() {
        let spec = heat(16, 8, 0.1);
        let mut c = Trajectory::zeros(&spec, Direction::Forward);
        c.fields[3][0] = 1.0;
        assert!(matches!(
            solve_forward(&vec![0.0; 16], Some(&c), &spec),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn crank_nicolson_matches_heat_mode() {
        let mut spec = heat(100, 100, 0.1);
        spec.scheme = Scheme::CrankNicolson;
        let g = spec.grid().unwrap();
        let u0: Vec<f64> = g.nodes().iter().map(|x| (PI * x).sin()).collect();
        let t = solve_forward(&u0, None, &spec).unwrap();
        let s = Stepper::new(&spec).unwrap();
        let ratio = s.norm(t.last()) / s.norm(&u0);
        assert!((ratio - (-PI * PI * 0.1).exp()).abs() < 1e-3);
    }
}
