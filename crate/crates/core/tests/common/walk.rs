use adascale::model::{InteriorPoint, StandardFormLp};
use adascale::pdas::{
    compute_directions, step_length, Backend, Directions, NormalSystem, CAP_ALPHA,
};

/// One iteration: the iterate, its direction and the step taken from it.
pub struct Step {
    pub point: InteriorPoint,
    pub dir: Directions,
    pub alpha: f64,
}

pub fn plain_dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn gap(p: &InteriorPoint) -> f64 {
    plain_dot(&p.x, &p.s)
}

pub fn default_gap_tol(lp: &StandardFormLp, start: &InteriorPoint) -> f64 {
    1e-8 * (1.0 + plain_dot(lp.c(), &start.x).abs())
}

fn axpy(v: &[f64], alpha: f64, dv: &[f64]) -> Vec<f64> {
    v.iter().zip(dv).map(|(v, d)| v + alpha * d).collect()
}

/// Takes damped affine-scaling steps (`rho = 0.9`) from `start` until the gap
/// reaches the default tolerance or `max_iter` steps are taken. Returns every
/// step and the final iterate.
pub fn walk(
    lp: &StandardFormLp,
    start: &InteriorPoint,
    backend: Backend,
    max_iter: usize,
) -> (Vec<Step>, InteriorPoint) {
    let system = NormalSystem::new(lp.a(), backend, 1).expect("backend prepares");
    let tol = default_gap_tol(lp, start);
    let mut point = start.clone();
    let mut steps = Vec::new();
    while gap(&point) > tol && steps.len() < max_iter {
        let (dir, _) = compute_directions(lp, &point, &system).expect("direction");
        let alpha = step_length(&point, &dir, 0.9);
        assert!(alpha < CAP_ALPHA, "unblocked step");
        let next = InteriorPoint::new(
            axpy(&point.x, alpha, &dir.dx),
            axpy(&point.y, alpha, &dir.dy),
            axpy(&point.s, alpha, &dir.ds),
        );
        assert!(next.is_interior(), "left the interior");
        steps.push(Step { point, dir, alpha });
        point = next;
    }
    (steps, point)
}
