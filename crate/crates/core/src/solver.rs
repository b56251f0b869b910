//! Weighted nonlinear least-squares position estimation.
//!
//! A fix minimizes the weighted range residual over candidate positions. Two
//! readings of "weighted" are supported:
//!
//! * `ResidualWeighting` (default): `sum_i b_i (d_i - |x - X_i|)^2`. A weight
//!   near the floor makes a suspect measurement nearly ignorable while still
//!   keeping it in the problem.
//! * `MeasurementScaling`: `sum_i (b_i d_i - |x - X_i|)^2`, which rescales
//!   the measurement itself. Kept behind the mode flag for comparison;
//!   a small weight here actively pulls the estimate toward the anchor, so
//!   residual weighting is the default.
//!
//! Minimization is damped Gauss-Newton (Levenberg-Marquardt): the damping
//! grows when a step fails to reduce the cost and shrinks when it succeeds,
//! which gives a monotone cost sequence. Trajectory solving warm-starts each
//! timestamp from the previous estimate. An exhaustive grid search over the
//! working area serves as the verification oracle for all of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Aabb, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    ResidualWeighting,
    MeasurementScaling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub initial_damping: f64,
    pub weight_floor: f64,
    pub weighting_mode: WeightingMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 100,
            gradient_tol: 1e-8,
            step_tol: 1e-10,
            initial_damping: 1e-3,
            weight_floor: 0.05,
            weighting_mode: WeightingMode::ResidualWeighting,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("gradient_tol", self.gradient_tol),
            ("step_tol", self.step_tol),
            ("initial_damping", self.initial_damping),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::NonPositive { name, value });
            }
        }
        if !self.weight_floor.is_finite() || self.weight_floor <= 0.0 || self.weight_floor > 1.0 {
            return Err(Error::NonPositive {
                name: "weight_floor",
                value: self.weight_floor,
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::NonPositive {
                name: "max_iterations",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// One multilateration instance: anchor positions, ranged distances, weights
/// in `(0, 1]`, and the warm-start guess.
#[derive(Debug, Clone, PartialEq)]
pub struct WlsProblem {
    pub anchors: Vec<(u32, Point2)>,
    pub ranges: Vec<f64>,
    pub weights: Vec<f64>,
    pub initial_guess: Point2,
    pub bounds: Option<Aabb>,
}

impl WlsProblem {
    fn validate(&self) -> Result<()> {
        if self.anchors.len() < 3 {
            return Err(Error::UnderDetermined {
                got: self.anchors.len(),
            });
        }
        if self.ranges.len() != self.anchors.len() {
            return Err(Error::LengthMismatch {
                left: self.anchors.len(),
                right: self.ranges.len(),
            });
        }
        if self.weights.len() != self.anchors.len() {
            return Err(Error::LengthMismatch {
                left: self.anchors.len(),
                right: self.weights.len(),
            });
        }
        if self.ranges.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::NonFinite("ranges"));
        }
        if self
            .weights
            .iter()
            .any(|w| !w.is_finite() || *w <= 0.0 || *w > 1.0)
        {
            return Err(Error::NonFinite("weights"));
        }
        if !self.initial_guess.is_finite() || self.anchors.iter().any(|(_, p)| !p.is_finite()) {
            return Err(Error::NonFinite("positions"));
        }
        Ok(())
    }
}

/// Solved position with convergence metadata. `converged` records whether the
/// gradient tolerance was met at exit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionEstimate {
    pub position: Point2,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Exact objective value at `x` under the given weighting mode.
pub fn objective(x: Point2, p: &WlsProblem, mode: WeightingMode) -> f64 {
    p.anchors
        .iter()
        .zip(&p.ranges)
        .zip(&p.weights)
        .map(|(((_, xi), d), b)| {
            let rho = x.dist(*xi);
            match mode {
                WeightingMode::ResidualWeighting => {
                    let r = d - rho;
                    b * r * r
                }
                WeightingMode::MeasurementScaling => {
                    let r = b * d - rho;
                    r * r
                }
            }
        })
        .sum()
}

/// Residual vector and its N x 2 Jacobian at `x`. A position exactly on an
/// anchor gets a zero direction row rather than a singularity.
pub fn residuals_and_jacobian(
    x: Point2,
    p: &WlsProblem,
    mode: WeightingMode,
) -> (Vec<f64>, Vec<[f64; 2]>) {
    let n = p.anchors.len();
    let mut r = Vec::with_capacity(n);
    let mut jac = Vec::with_capacity(n);
    for (((_, xi), d), b) in p.anchors.iter().zip(&p.ranges).zip(&p.weights) {
        let dx = x.x - xi.x;
        let dy = x.y - xi.y;
        let rho = (dx * dx + dy * dy).sqrt();
        let (ux, uy) = if rho > 0.0 {
            (dx / rho, dy / rho)
        } else {
            (0.0, 0.0)
        };
        match mode {
            WeightingMode::ResidualWeighting => {
                let sb = b.sqrt();
                r.push(sb * (d - rho));
                jac.push([-sb * ux, -sb * uy]);
            }
            WeightingMode::MeasurementScaling => {
                r.push(b * d - rho);
                jac.push([-ux, -uy]);
            }
        }
    }
    (r, jac)
}

fn cost_and_gradient(x: Point2, p: &WlsProblem, mode: WeightingMode) -> (f64, [f64; 2]) {
    let (r, jac) = residuals_and_jacobian(x, p, mode);
    let cost = r.iter().map(|v| v * v).sum();
    let mut g = [0.0, 0.0];
    for (ri, ji) in r.iter().zip(&jac) {
        g[0] += 2.0 * ji[0] * ri;
        g[1] += 2.0 * ji[1] * ri;
    }
    (cost, g)
}

/// Coordinates pinned at a bound with the gradient pushing outward; steps in
/// those directions are infeasible, so they are excluded from the damped
/// Newton system and from the convergence test.
fn pinned_mask(x: Point2, grad: [f64; 2], bounds: Option<Aabb>) -> [bool; 2] {
    match bounds {
        None => [false, false],
        Some(b) => [
            (x.x <= b.min_x && grad[0] > 0.0) || (x.x >= b.max_x && grad[0] < 0.0),
            (x.y <= b.min_y && grad[1] > 0.0) || (x.y >= b.max_y && grad[1] < 0.0),
        ],
    }
}

fn projected_gradient_norm(x: Point2, grad: [f64; 2], bounds: Option<Aabb>) -> f64 {
    let pinned = pinned_mask(x, grad, bounds);
    let gx = if pinned[0] { 0.0 } else { grad[0].abs() };
    let gy = if pinned[1] { 0.0 } else { grad[1].abs() };
    gx.max(gy)
}

/// Damped Gauss-Newton from the problem's initial guess. Accepted steps never
/// increase the cost. With bounds, steps are projected into the rectangle and
/// coordinates pressed against a bound drop out of the step computation, so
/// the iteration walks the boundary instead of stalling against it;
/// `converged` then refers to the projected gradient.
pub fn solve(p: &WlsProblem, cfg: &SolverConfig) -> Result<PositionEstimate> {
    cfg.validate()?;
    p.validate()?;

    let project = |pt: Point2| p.bounds.map_or(pt, |b| b.clamp(pt));
    let mut x = project(p.initial_guess);
    let (mut cost, mut grad) = cost_and_gradient(x, p, cfg.weighting_mode);
    let mut lambda = cfg.initial_damping;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        if projected_gradient_norm(x, grad, p.bounds) <= cfg.gradient_tol {
            break;
        }
        iterations += 1;

        let (r, jac) = residuals_and_jacobian(x, p, cfg.weighting_mode);
        // normal equations of the damped step: (J^T J + lambda I) s = -J^T r,
        // restricted to the free coordinates
        let mut a11 = lambda;
        let mut a12 = 0.0;
        let mut a22 = lambda;
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for (ri, ji) in r.iter().zip(&jac) {
            a11 += ji[0] * ji[0];
            a12 += ji[0] * ji[1];
            a22 += ji[1] * ji[1];
            b1 -= ji[0] * ri;
            b2 -= ji[1] * ri;
        }
        let pinned = pinned_mask(x, grad, p.bounds);
        let (sx, sy) = match pinned {
            [false, false] => {
                let det = a11 * a22 - a12 * a12;
                if !det.is_finite() || det <= 0.0 {
                    lambda = (lambda * 4.0).min(1e12);
                    continue;
                }
                ((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det)
            }
            [true, false] => (0.0, b2 / a22),
            [false, true] => (b1 / a11, 0.0),
            [true, true] => break,
        };
        let candidate = project(Point2::new(x.x + sx, x.y + sy));
        let candidate_cost = objective(candidate, p, cfg.weighting_mode);

        if candidate_cost < cost {
            let step = candidate.dist(x);
            x = candidate;
            let cg = cost_and_gradient(x, p, cfg.weighting_mode);
            cost = cg.0;
            grad = cg.1;
            lambda = (lambda * 0.5).max(1e-12);
            if step <= cfg.step_tol {
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    Ok(PositionEstimate {
        position: x,
        cost,
        iterations,
        converged: projected_gradient_norm(x, grad, p.bounds) <= cfg.gradient_tol,
    })
}

/// Exhaustive reference minimizer: evaluates the objective at every node of
/// the `resolution`-spaced grid over `bounds` and returns the best node,
/// breaking exact ties toward smaller x, then smaller y.
pub fn grid_search_oracle(
    p: &WlsProblem,
    bounds: Aabb,
    resolution: f64,
    mode: WeightingMode,
) -> Result<Point2> {
    if !resolution.is_finite() || resolution <= 0.0 {
        return Err(Error::NonPositive {
            name: "resolution",
            value: resolution,
        });
    }
    if !bounds.is_valid() {
        return Err(Error::EmptyGrid);
    }
    let nx = ((bounds.max_x - bounds.min_x) / resolution + 1e-9).floor() as usize;
    let ny = ((bounds.max_y - bounds.min_y) / resolution + 1e-9).floor() as usize;
    let mut best = f64::INFINITY;
    let mut best_point = Point2::new(bounds.min_x, bounds.min_y);
    for ix in 0..=nx {
        let x = bounds.min_x + ix as f64 * resolution;
        for iy in 0..=ny {
            let y = bounds.min_y + iy as f64 * resolution;
            let c = objective(Point2::new(x, y), p, mode);
            if c < best {
                best = c;
                best_point = Point2::new(x, y);
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::EmptyGrid);
    }
    Ok(best_point)
}

/// One timestamp's measurements, weights already assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedProblem {
    pub t: f64,
    pub anchors: Vec<(u32, Point2)>,
    pub ranges: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Sequential warm-started solving: timestamp k starts from estimate k-1
/// (the first from `start`). Timestamps with fewer than three measurements
/// carry the previous position forward, flagged not converged.
pub fn solve_trajectory(
    problems: &[TimedProblem],
    start: Point2,
    bounds: Option<Aabb>,
    cfg: &SolverConfig,
) -> Result<Vec<(f64, PositionEstimate)>> {
    if problems.is_empty() {
        return Err(Error::Empty("trajectory problems"));
    }
    for pair in problems.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(Error::UnsortedSamples { index: 1 });
        }
    }
    if !start.is_finite() {
        return Err(Error::NonFinite("start position"));
    }

    let mut estimates = Vec::with_capacity(problems.len());
    let mut previous = start;
    for tp in problems {
        let problem = WlsProblem {
            anchors: tp.anchors.clone(),
            ranges: tp.ranges.clone(),
            weights: tp.weights.clone(),
            initial_guess: previous,
            bounds,
        };
        let estimate = if tp.anchors.len() < 3 {
            PositionEstimate {
                position: previous,
                cost: objective(previous, &problem, cfg.weighting_mode),
                iterations: 0,
                converged: false,
            }
        } else {
            solve(&problem, cfg)?
        };
        previous = estimate.position;
        estimates.push((tp.t, estimate));
    }
    Ok(estimates)
}

/// Maps LOS probabilities to solver weights: identity above the floor, the
/// floor below it, so no measurement is ever fully excluded.
pub fn weights_from_probabilities(probabilities: &[f64], weight_floor: f64) -> Vec<f64> {
    probabilities
        .iter()
        .map(|p| p.max(weight_floor).min(1.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn exact_problem() -> WlsProblem {
        // ranges are the exact distances from (3, 4)
        WlsProblem {
            anchors: vec![
                (1, Point2::new(0.0, 0.0)),
                (2, Point2::new(10.0, 0.0)),
                (3, Point2::new(0.0, 10.0)),
            ],
            ranges: vec![5.0, 65.0_f64.sqrt(), 45.0_f64.sqrt()],
            weights: vec![1.0, 1.0, 1.0],
            initial_guess: Point2::new(1.0, 1.0),
            bounds: None,
        }
    }

    fn random_problem(rng: &mut Rng, n: usize) -> (Point2, WlsProblem) {
        let truth = Point2::new(rng.uniform_range(4.0, 16.0), rng.uniform_range(4.0, 16.0));
        let mut anchors = Vec::new();
        let mut ranges = Vec::new();
        let mut weights = Vec::new();
        for id in 0..n {
            let a = Point2::new(rng.uniform_range(0.0, 20.0), rng.uniform_range(0.0, 20.0));
            let noise = rng.uniform_range(-0.1, 0.1);
            let bias = if rng.uniform() < 0.3 {
                rng.uniform_range(0.3, 2.0)
            } else {
                0.0
            };
            anchors.push((id as u32, a));
            ranges.push((truth.dist(a) + bias + noise).max(0.0));
            weights.push(rng.uniform_range(0.05, 1.0));
        }
        let guess = Point2::new(
            (truth.x + rng.uniform_range(-1.5, 1.5)).clamp(0.0, 20.0),
            (truth.y + rng.uniform_range(-1.5, 1.5)).clamp(0.0, 20.0),
        );
        (
            truth,
            WlsProblem {
                anchors,
                ranges,
                weights,
                initial_guess: guess,
                bounds: Some(Aabb::new(0.0, 0.0, 20.0, 20.0)),
            },
        )
    }

    #[test]
    fn objective_zero_at_truth() {
        let p = exact_problem();
        assert_eq!(
            objective(Point2::new(3.0, 4.0), &p, WeightingMode::ResidualWeighting),
            0.0
        );
    }

    #[test]
    fn objective_weighted_arithmetic() {
        let mut p = exact_problem();
        p.ranges[0] += 2.0; // +2 m error on anchor 1
        p.weights[0] = 0.05;
        let c = objective(Point2::new(3.0, 4.0), &p, WeightingMode::ResidualWeighting);
        assert!((c - 0.2).abs() < 1e-15);
    }

    #[test]
    fn objective_matches_term_by_term_oracle() {
        let mut rng = Rng::new(42);
        for _ in 0..50 {
            let (_, p) = random_problem(&mut rng, 6);
            let x = Point2::new(rng.uniform_range(0.0, 20.0), rng.uniform_range(0.0, 20.0));
            for mode in [
                WeightingMode::ResidualWeighting,
                WeightingMode::MeasurementScaling,
            ] {
                let mut expect = 0.0;
                for i in 0..p.anchors.len() {
                    let rho = x.dist(p.anchors[i].1);
                    let term = match mode {
                        WeightingMode::ResidualWeighting => {
                            p.weights[i] * (p.ranges[i] - rho) * (p.ranges[i] - rho)
                        }
                        WeightingMode::MeasurementScaling => {
                            let r = p.weights[i] * p.ranges[i] - rho;
                            r * r
                        }
                    };
                    expect += term;
                }
                assert!((objective(x, &p, mode) - expect).abs() <= 1e-12 * expect.max(1.0));
            }
        }
    }

    #[test]
    fn residual_and_jacobian_unit_direction() {
        let p = WlsProblem {
            anchors: vec![
                (1, Point2::new(0.0, 0.0)),
                (2, Point2::new(1.0, 0.0)),
                (3, Point2::new(0.0, 1.0)),
            ],
            ranges: vec![5.0, 1.0, 1.0],
            weights: vec![1.0, 1.0, 1.0],
            initial_guess: Point2::new(0.0, 0.0),
            bounds: None,
        };
        let (r, j) =
            residuals_and_jacobian(Point2::new(3.0, 4.0), &p, WeightingMode::ResidualWeighting);
        assert!((r[0] - 0.0).abs() < 1e-15);
        assert!((j[0][0] - -0.6).abs() < 1e-15);
        assert!((j[0][1] - -0.8).abs() < 1e-15);
    }

    #[test]
    fn quarter_weight_halves_residual() {
        let mut p = exact_problem();
        let x = Point2::new(5.0, 5.0);
        let (r1, _) = residuals_and_jacobian(x, &p, WeightingMode::ResidualWeighting);
        p.weights = vec![0.25; 3];
        let (r2, _) = residuals_and_jacobian(x, &p, WeightingMode::ResidualWeighting);
        for (a, b) in r1.iter().zip(&r2) {
            assert!((b - 0.5 * a).abs() < 1e-15);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = Rng::new(7);
        let h = 1e-6;
        for _ in 0..50 {
            let (_, p) = random_problem(&mut rng, 5);
            let x = Point2::new(rng.uniform_range(1.0, 19.0), rng.uniform_range(1.0, 19.0));
            for mode in [
                WeightingMode::ResidualWeighting,
                WeightingMode::MeasurementScaling,
            ] {
                let (_, jac) = residuals_and_jacobian(x, &p, mode);
                for (axis, step) in [(0, Point2::new(h, 0.0)), (1, Point2::new(0.0, h))] {
                    let xp = Point2::new(x.x + step.x, x.y + step.y);
                    let xm = Point2::new(x.x - step.x, x.y - step.y);
                    let (rp, _) = residuals_and_jacobian(xp, &p, mode);
                    let (rm, _) = residuals_and_jacobian(xm, &p, mode);
                    for ((rp_i, rm_i), jac_i) in rp.iter().zip(&rm).zip(&jac) {
                        let fd = (rp_i - rm_i) / (2.0 * h);
                        let an = jac_i[axis];
                        let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-3);
                        assert!(rel < 1e-6, "axis {axis}: {an} vs {fd}");
                    }
                }
            }
        }
    }

    #[test]
    fn anchor_coincident_point_is_harmless() {
        let p = exact_problem();
        let at_anchor = Point2::new(0.0, 0.0);
        let (r, j) = residuals_and_jacobian(at_anchor, &p, WeightingMode::ResidualWeighting);
        assert_eq!(j[0], [0.0, 0.0]);
        assert!(r.iter().all(|v| v.is_finite()));
        assert!(objective(at_anchor, &p, WeightingMode::ResidualWeighting).is_finite());
    }

    #[test]
    fn solve_exact_geometry() {
        let est = solve(&exact_problem(), &SolverConfig::default()).unwrap();
        assert!(est.converged);
        assert!(est.position.dist(Point2::new(3.0, 4.0)) < 1e-6, "{est:?}");
        assert!(est.cost < 1e-12);
    }

    #[test]
    fn solve_rejects_underdetermined() {
        let mut p = exact_problem();
        p.anchors.truncate(2);
        p.ranges.truncate(2);
        p.weights.truncate(2);
        assert!(matches!(
            solve(&p, &SolverConfig::default()),
            Err(Error::UnderDetermined { got: 2 })
        ));
    }

    #[test]
    fn solve_downweighted_outlier_lands_near_oracle() {
        // anchor 1's range inflated by 2 m but weighted at the floor; the
        // 1 cm grid oracle puts the argmin at (3.47, 4.46)
        let mut p = exact_problem();
        p.ranges[0] = 7.0;
        p.weights[0] = 0.05;
        let cfg = SolverConfig::default();
        let est = solve(&p, &cfg).unwrap();
        let oracle = grid_search_oracle(
            &p,
            Aabb::new(0.0, 0.0, 12.0, 12.0),
            0.01,
            cfg.weighting_mode,
        )
        .unwrap();
        assert!(
            (oracle.x - 3.47).abs() < 1e-9 && (oracle.y - 4.46).abs() < 1e-9,
            "{oracle:?}"
        );
        assert!(
            est.position.dist(oracle) <= 0.02,
            "est {:?} oracle {:?}",
            est.position,
            oracle
        );
        assert!(
            objective(est.position, &p, cfg.weighting_mode)
                <= objective(oracle, &p, cfg.weighting_mode)
        );
    }

    #[test]
    fn uniform_weight_scaling_keeps_argmin() {
        let mut rng = Rng::new(100);
        let cfg = SolverConfig::default();
        for _ in 0..20 {
            // exact ranges: unique zero-cost minimizer
            let truth = Point2::new(rng.uniform_range(4.0, 16.0), rng.uniform_range(4.0, 16.0));
            let anchors: Vec<(u32, Point2)> = (0..4)
                .map(|id| {
                    (
                        id,
                        Point2::new(rng.uniform_range(0.0, 20.0), rng.uniform_range(0.0, 20.0)),
                    )
                })
                .collect();
            let ranges: Vec<f64> = anchors.iter().map(|(_, a)| truth.dist(*a)).collect();
            let guess = Point2::new(truth.x + 1.0, truth.y - 1.0);
            let p1 = WlsProblem {
                anchors: anchors.clone(),
                ranges: ranges.clone(),
                weights: vec![1.0; 4],
                initial_guess: guess,
                bounds: None,
            };
            let p2 = WlsProblem {
                weights: vec![0.7; 4],
                ..p1.clone()
            };
            let e1 = solve(&p1, &cfg).unwrap();
            let e2 = solve(&p2, &cfg).unwrap();
            assert!(e1.position.dist(e2.position) < 1e-9);
        }
    }

    #[test]
    fn grid_oracle_exact_minimum_on_grid() {
        let p = exact_problem();
        let best = grid_search_oracle(
            &p,
            Aabb::new(0.0, 0.0, 12.0, 12.0),
            0.1,
            WeightingMode::ResidualWeighting,
        )
        .unwrap();
        assert!((best.x - 3.0).abs() < 1e-9 && (best.y - 4.0).abs() < 1e-9);
    }

    #[test]
    fn grid_oracle_uniform_scaling_invariance() {
        let mut p = exact_problem();
        p.ranges[0] = 6.3; // make it noisy so the argmin is off-grid
        let b = Aabb::new(0.0, 0.0, 12.0, 12.0);
        let one = grid_search_oracle(&p, b, 0.05, WeightingMode::ResidualWeighting).unwrap();
        p.weights = vec![0.5; 3];
        let half = grid_search_oracle(&p, b, 0.05, WeightingMode::ResidualWeighting).unwrap();
        assert_eq!(one, half);
    }

    #[test]
    fn grid_oracle_rejects_bad_grid() {
        let p = exact_problem();
        assert!(grid_search_oracle(
            &p,
            Aabb::new(0.0, 0.0, 1.0, 1.0),
            0.0,
            WeightingMode::ResidualWeighting
        )
        .is_err());
        assert!(grid_search_oracle(
            &p,
            Aabb::new(2.0, 2.0, 1.0, 1.0),
            0.1,
            WeightingMode::ResidualWeighting
        )
        .is_err());
    }

    #[test]
    fn final_cost_never_exceeds_initial_cost() {
        let mut rng = Rng::new(29);
        let cfg = SolverConfig::default();
        for _ in 0..100 {
            let (_, p) = random_problem(&mut rng, 5);
            let initial = objective(p.initial_guess, &p, cfg.weighting_mode);
            let est = solve(&p, &cfg).unwrap();
            assert!(est.cost <= initial, "cost {} from {}", est.cost, initial);
        }
    }

    #[test]
    fn solver_objective_never_worse_than_grid() {
        let mut rng = Rng::new(11);
        let cfg = SolverConfig::default();
        for _ in 0..10 {
            let (_, p) = random_problem(&mut rng, 5);
            let est = solve(&p, &cfg).unwrap();
            let oracle = grid_search_oracle(
                &p,
                Aabb::new(0.0, 0.0, 20.0, 20.0),
                0.05,
                cfg.weighting_mode,
            )
            .unwrap();
            assert!(est.cost <= objective(oracle, &p, cfg.weighting_mode) + 1e-12);
        }
    }

    #[test]
    fn anchor_permutation_invariance() {
        let mut rng = Rng::new(13);
        let cfg = SolverConfig {
            gradient_tol: 1e-12,
            ..SolverConfig::default()
        };
        for _ in 0..20 {
            let truth = Point2::new(rng.uniform_range(4.0, 16.0), rng.uniform_range(4.0, 16.0));
            let anchors: Vec<(u32, Point2)> = (0..5)
                .map(|id| {
                    (
                        id,
                        Point2::new(rng.uniform_range(0.0, 20.0), rng.uniform_range(0.0, 20.0)),
                    )
                })
                .collect();
            let ranges: Vec<f64> = anchors.iter().map(|(_, a)| truth.dist(*a)).collect();
            let weights: Vec<f64> = (0..5).map(|_| rng.uniform_range(0.05, 1.0)).collect();
            let guess = Point2::new(truth.x - 0.8, truth.y + 1.2);
            let p = WlsProblem {
                anchors: anchors.clone(),
                ranges: ranges.clone(),
                weights: weights.clone(),
                initial_guess: guess,
                bounds: None,
            };
            // reversed anchor order
            let mut rev_anchors = anchors.clone();
            rev_anchors.reverse();
            let mut rev_ranges = ranges.clone();
            rev_ranges.reverse();
            let mut rev_weights = weights.clone();
            rev_weights.reverse();
            let q = WlsProblem {
                anchors: rev_anchors,
                ranges: rev_ranges,
                weights: rev_weights,
                initial_guess: guess,
                bounds: None,
            };
            let a = solve(&p, &cfg).unwrap();
            let b = solve(&q, &cfg).unwrap();
            assert!(a.position.dist(b.position) < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn trajectory_static_robot_fixed_point() {
        let base = exact_problem();
        let problems: Vec<TimedProblem> = (0..10)
            .map(|k| TimedProblem {
                t: k as f64,
                anchors: base.anchors.clone(),
                ranges: base.ranges.clone(),
                weights: base.weights.clone(),
            })
            .collect();
        let cfg = SolverConfig::default();
        let estimates = solve_trajectory(&problems, Point2::new(1.0, 1.0), None, &cfg).unwrap();
        assert_eq!(estimates.len(), 10);
        let first = estimates[0].1.position;
        for (_, e) in &estimates {
            assert_eq!(e.position, first);
        }
        assert!(first.dist(Point2::new(3.0, 4.0)) < 1e-6);
    }

    #[test]
    fn trajectory_underdetermined_carries_forward() {
        let base = exact_problem();
        let mut problems: Vec<TimedProblem> = (0..3)
            .map(|k| TimedProblem {
                t: k as f64,
                anchors: base.anchors.clone(),
                ranges: base.ranges.clone(),
                weights: base.weights.clone(),
            })
            .collect();
        problems[1].anchors.truncate(2);
        problems[1].ranges.truncate(2);
        problems[1].weights.truncate(2);
        let estimates = solve_trajectory(
            &problems,
            Point2::new(1.0, 1.0),
            None,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(!estimates[1].1.converged);
        assert_eq!(estimates[1].1.iterations, 0);
        assert_eq!(estimates[1].1.position, estimates[0].1.position);
        assert!(estimates[2].1.converged);
    }

    #[test]
    fn trajectory_moving_robot_tracks_truth() {
        // 0.5 m steps along a line, exact ranges
        let anchors = vec![
            (1, Point2::new(0.0, 0.0)),
            (2, Point2::new(20.0, 0.0)),
            (3, Point2::new(0.0, 20.0)),
            (4, Point2::new(20.0, 20.0)),
        ];
        let mut problems = Vec::new();
        let mut truths = Vec::new();
        for k in 0..40 {
            let truth = Point2::new(2.0 + 0.4 * k as f64, 3.0 + 0.3 * k as f64);
            truths.push(truth);
            problems.push(TimedProblem {
                t: k as f64 * 0.1,
                anchors: anchors.clone(),
                ranges: anchors.iter().map(|(_, a)| truth.dist(*a)).collect(),
                weights: vec![1.0; anchors.len()],
            });
        }
        let estimates = solve_trajectory(
            &problems,
            Point2::new(2.0, 3.0),
            None,
            &SolverConfig::default(),
        )
        .unwrap();
        for ((_, e), truth) in estimates.iter().zip(&truths) {
            assert!(
                e.position.dist(*truth) < 1e-4,
                "{:?} vs {truth:?}",
                e.position
            );
        }
    }

    #[test]
    fn trajectory_rejects_empty_and_unordered() {
        assert!(
            solve_trajectory(&[], Point2::new(0.0, 0.0), None, &SolverConfig::default()).is_err()
        );
        let base = exact_problem();
        let problems = vec![
            TimedProblem {
                t: 1.0,
                anchors: base.anchors.clone(),
                ranges: base.ranges.clone(),
                weights: base.weights.clone(),
            },
            TimedProblem {
                t: 0.5,
                anchors: base.anchors.clone(),
                ranges: base.ranges.clone(),
                weights: base.weights.clone(),
            },
        ];
        assert!(solve_trajectory(
            &problems,
            Point2::new(0.0, 0.0),
            None,
            &SolverConfig::default()
        )
        .is_err());
    }

    #[test]
    fn probability_weight_mapping() {
        assert_eq!(weights_from_probabilities(&[0.9], 0.05), vec![0.9]);
        assert_eq!(weights_from_probabilities(&[0.001], 0.05), vec![0.05]);
        // beta = 1 everywhere reproduces the unweighted problem exactly
        let p = exact_problem();
        let nwls = WlsProblem {
            weights: weights_from_probabilities(&[1.0, 1.0, 1.0], 0.05),
            ..p.clone()
        };
        assert_eq!(nwls.weights, vec![1.0; 3]);
        let x = Point2::new(5.0, 6.0);
        assert_eq!(
            objective(x, &p, WeightingMode::ResidualWeighting),
            objective(x, &nwls, WeightingMode::ResidualWeighting)
        );
    }
}
