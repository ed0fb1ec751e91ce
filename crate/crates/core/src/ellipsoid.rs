//! Ellipsoid feasibility method driven by a weak separation oracle.
//!
//! The oracle may answer FAIL (accept) even when feasibility is unverified;
//! the method simply returns the first iterate the oracle accepts. When the
//! oracle instead returns a separating normal v (with ⟨y−x, v⟩ ≥ 0 for all
//! feasible y), the ellipsoid E(x, A) is replaced by the minimum-volume
//! ellipsoid containing E ∩ {⟨y−x, v⟩ ≥ 0}, shrinking volume by at least
//! exp(−1/(2(k+1))) per step.

use crate::geom::dot;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EllipsoidError {
    #[error("separating normal is numerically degenerate (vᵀAv = {0:e})")]
    DegenerateNormal(f64),
    #[error("zero separating normal")]
    ZeroNormal,
}

#[derive(Debug, Error)]
pub enum RunError<E> {
    #[error("oracle error: {0}")]
    Oracle(E),
    #[error(transparent)]
    Update(#[from] EllipsoidError),
    #[error("iteration cap {max_iters} exceeded without an accepted point")]
    MaxItersExceeded { max_iters: usize, center: Vec<f64> },
}

/// E(x, A) = {y : (y−x)ᵀ A⁻¹ (y−x) ≤ 1} plus a step counter.
#[derive(Debug, Clone)]
pub struct EllipsoidState {
    pub center: Vec<f64>,
    /// k×k symmetric positive-definite shape matrix, row-major.
    pub shape: Vec<f64>,
    pub iteration: usize,
}

impl EllipsoidState {
    /// The ball E(x, R²·I).
    pub fn ball(center: Vec<f64>, radius: f64) -> EllipsoidState {
        let k = center.len();
        let mut shape = vec![0.0; k * k];
        for i in 0..k {
            shape[i * k + i] = radius * radius;
        }
        EllipsoidState { center, shape, iteration: 0 }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// log det of the shape matrix via Cholesky; None when not positive
    /// definite within tolerance.
    pub fn log_det(&self) -> Option<f64> {
        chol_log_det(&self.shape, self.dim())
    }

    /// Membership test (y−x)ᵀA⁻¹(y−x) ≤ 1 + slack, solving by Cholesky.
    pub fn contains(&self, y: &[f64], slack: f64) -> bool {
        let k = self.dim();
        let Some(l) = cholesky(&self.shape, k) else {
            return false;
        };
        // solve L z = (y − x); then quadratic form = ‖z‖²
        let mut z: Vec<f64> = y.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        for i in 0..k {
            let mut s = z[i];
            for j in 0..i {
                s -= l[i * k + j] * z[j];
            }
            z[i] = s / l[i * k + i];
        }
        dot(&z, &z) <= 1.0 + slack
    }
}

fn cholesky(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for t in 0..j {
                s -= l[i * k + t] * l[j * k + t];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    Some(l)
}

fn chol_log_det(a: &[f64], k: usize) -> Option<f64> {
    let l = cholesky(a, k)?;
    Some((0..k).map(|i| l[i * k + i].ln()).sum::<f64>() * 2.0)
}

/// One cut: keeps the half-space {y : ⟨y − x, v⟩ ≥ 0}.
///
/// u = Av/√(vᵀAv), x′ = x + u/(k+1), A′ = k²/(k²−1)·(A − 2/(k+1)·uuᵀ),
/// re-symmetrized each step to absorb floating-point drift. k = 1 falls back
/// to interval bisection.
pub fn ellipsoid_update(
    state: &EllipsoidState,
    v: &[f64],
) -> Result<EllipsoidState, EllipsoidError> {
    let mut next = state.clone();
    ellipsoid_update_in_place(&mut next, v, 1e-300)?;
    Ok(next)
}

pub(crate) fn ellipsoid_update_in_place(
    state: &mut EllipsoidState,
    v: &[f64],
    floor: f64,
) -> Result<(), EllipsoidError> {
    let k = state.dim();
    assert_eq!(v.len(), k);
    if v.iter().all(|&c| c == 0.0) {
        return Err(EllipsoidError::ZeroNormal);
    }
    if k == 1 {
        // interval bisection: keep [x, x+√A] (or the mirror image)
        let half = state.shape[0].max(0.0).sqrt();
        if half <= 0.0 || !half.is_finite() {
            return Err(EllipsoidError::DegenerateNormal(state.shape[0]));
        }
        let s = if v[0] > 0.0 { 1.0 } else { -1.0 };
        state.center[0] += s * half / 2.0;
        state.shape[0] = (half / 2.0) * (half / 2.0);
        state.iteration += 1;
        return Ok(());
    }

    let a = &state.shape;
    let mut av = vec![0.0; k];
    for i in 0..k {
        av[i] = dot(&a[i * k..(i + 1) * k], v);
    }
    let vav = dot(v, &av);
    if !(vav > floor) || !vav.is_finite() {
        return Err(EllipsoidError::DegenerateNormal(vav));
    }
    let inv_sqrt = 1.0 / vav.sqrt();
    let u: Vec<f64> = av.iter().map(|&t| t * inv_sqrt).collect();

    let kf = k as f64;
    let grow = kf * kf / (kf * kf - 1.0);
    let coef = 2.0 / (kf + 1.0);
    let shape = &mut state.shape;
    for i in 0..k {
        let ui = u[i];
        let row = &mut shape[i * k..(i + 1) * k];
        for (j, s) in row.iter_mut().enumerate() {
            *s = grow * (*s - coef * ui * u[j]);
        }
    }
    // re-symmetrize
    for i in 0..k {
        for j in (i + 1)..k {
            let m = 0.5 * (shape[i * k + j] + shape[j * k + i]);
            shape[i * k + j] = m;
            shape[j * k + i] = m;
        }
    }
    for (c, ui) in state.center.iter_mut().zip(&u) {
        *c += ui / (kf + 1.0);
    }
    state.iteration += 1;
    Ok(())
}

/// What the weak oracle may answer.
#[derive(Debug, Clone)]
pub enum OracleOutcome {
    /// Accept the queried point.
    Fail,
    /// Separating normal v ≠ 0 with ⟨y − x, v⟩ ≥ 0 for every feasible y.
    Separate(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// First iterate the oracle accepted.
    pub point: Vec<f64>,
    /// Number of cuts performed before acceptance.
    pub iterations: usize,
}

/// Runs the method from the ball E(x0, R²I) until the oracle reports FAIL,
/// erroring out after `max_iters` cuts.
pub fn run_ellipsoid<E>(
    x0: &[f64],
    radius: f64,
    mut oracle: impl FnMut(&[f64]) -> Result<OracleOutcome, E>,
    max_iters: usize,
) -> Result<RunResult, RunError<E>> {
    let mut state = EllipsoidState::ball(x0.to_vec(), radius);
    loop {
        match oracle(&state.center).map_err(RunError::Oracle)? {
            OracleOutcome::Fail => {
                return Ok(RunResult { point: state.center, iterations: state.iteration })
            }
            OracleOutcome::Separate(v) => {
                if state.iteration >= max_iters {
                    return Err(RunError::MaxItersExceeded { max_iters, center: state.center });
                }
                ellipsoid_update_in_place(&mut state, &v, 1e-300)?;
            }
        }
    }
}

/// Iteration cap ⌈2k(k+1)·ln(R/ε_ball)⌉ + 1 from the volume argument: after
/// that many cuts the ellipsoid volume drops below any inner ball of radius
/// ε_ball, so a correct oracle must have accepted earlier.
pub fn iteration_cap(k: usize, radius: f64, eps_ball: f64) -> usize {
    let kf = k as f64;
    let ratio = (radius / eps_ball).max(1.0 + 1e-12);
    (2.0 * kf * (kf + 1.0) * ratio.ln()).ceil() as usize + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn update_forced_arithmetic() {
        let state = EllipsoidState::ball(vec![0.0, 0.0], 1.0);
        let next = ellipsoid_update(&state, &[1.0, 0.0]).unwrap();
        assert!((next.center[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(next.center[1], 0.0);
        // A' = (4/3)(I − (2/3)e₁e₁ᵀ) = diag(4/9, 4/3)
        assert!((next.shape[0] - 4.0 / 9.0).abs() < 1e-15);
        assert!((next.shape[3] - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(next.shape[1], 0.0);
        assert_eq!(next.shape[2], 0.0);
        assert_eq!(next.iteration, 1);
    }

    #[test]
    fn determinant_ratio_matches_closed_form() {
        let k = 8;
        let kf = k as f64;
        let expected = kf * kf / (kf * kf - 1.0);
        let log_expected = kf * expected.ln() + (1.0 - 2.0 / (kf + 1.0)).ln();
        let mut rng = rng::stream(4, &[1]);
        let mut state = EllipsoidState::ball(vec![0.0; k], 2.0);
        for _ in 0..200 {
            let before = state.log_det().expect("SPD");
            let v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            state = ellipsoid_update(&state, &v).unwrap();
            let after = state.log_det().expect("SPD");
            assert!(((after - before) - log_expected).abs() < 1e-9);
            // the cut shrinks volume by at least exp(−1/(2(k+1)))
            assert!(after - before <= -1.0 / (kf + 1.0) + 1e-12);
        }
    }

    #[test]
    fn half_space_retained() {
        // points of E(x,A) on the kept side stay inside E(x',A')
        let k = 6;
        let mut rng = rng::stream(5, &[2]);
        let mut state = EllipsoidState::ball(vec![0.0; k], 1.5);
        // wander a few steps so A is anisotropic
        for _ in 0..10 {
            let v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            state = ellipsoid_update(&state, &v).unwrap();
        }
        let v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        let next = ellipsoid_update(&state, &v).unwrap();
        let l = cholesky(&state.shape, k).unwrap();
        let mut kept = 0;
        let mut retained = 0;
        while kept < 1000 {
            // uniform in E(x, A): y = x + L(z·u^{1/k}/‖z‖)
            let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let zn = dot(&z, &z).sqrt();
            let scale: f64 = rng.random::<f64>().powf(1.0 / k as f64) / zn;
            let mut y = state.center.clone();
            for i in 0..k {
                for j in 0..=i {
                    y[i] += l[i * k + j] * z[j] * scale;
                }
            }
            let side: f64 = y.iter().zip(&state.center).zip(&v).map(|((a, b), w)| (a - b) * w).sum();
            if side < 0.0 {
                continue;
            }
            kept += 1;
            if next.contains(&y, 1e-9) {
                retained += 1;
            }
        }
        assert!(retained >= 999, "retained only {retained}/1000");
    }

    #[test]
    fn always_fail_returns_start() {
        let r = run_ellipsoid(&[1.0, 2.0], 5.0, |_| Ok::<_, ()>(OracleOutcome::Fail), 10).unwrap();
        assert_eq!(r.point, vec![1.0, 2.0]);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn finds_half_space_cap() {
        // K = {y ∈ R²: y₁ ≥ 0.9} ∩ ball(0, 1); exact membership oracle
        let oracle = |y: &[f64]| -> Result<OracleOutcome, ()> {
            if y[0] >= 0.9 && dot(y, y) <= 1.0 {
                Ok(OracleOutcome::Fail)
            } else if y[0] < 0.9 {
                Ok(OracleOutcome::Separate(vec![1.0, 0.0]))
            } else {
                // outside the unit ball: cut back toward the origin
                Ok(OracleOutcome::Separate(y.iter().map(|c| -c).collect()))
            }
        };
        // K contains a ball of radius ~0.04 around (0.95, 0)
        let cap = iteration_cap(2, 1.0, 0.04);
        let r = run_ellipsoid(&[0.0, 0.0], 1.0, oracle, cap).unwrap();
        assert!(r.point[0] >= 0.9);
        assert!(r.iterations <= cap);
    }

    #[test]
    fn zero_budget_with_active_oracle_errors() {
        let err = run_ellipsoid(
            &[0.0, 0.0],
            1.0,
            |_| Ok::<_, ()>(OracleOutcome::Separate(vec![1.0, 0.0])),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, RunError::MaxItersExceeded { max_iters: 0, .. }));
    }

    #[test]
    fn volume_telescopes() {
        let k = 5;
        let mut rng = rng::stream(6, &[3]);
        let mut state = EllipsoidState::ball(vec![0.0; k], 1.0);
        let start = state.log_det().unwrap();
        let steps = 300;
        for _ in 0..steps {
            let v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            state = ellipsoid_update(&state, &v).unwrap();
        }
        let end = state.log_det().unwrap();
        // vol ratio ≤ exp(−T/(2(k+1))) ⟺ log det drop ≥ T/(k+1)
        assert!(end - start <= -(steps as f64) / (k as f64 + 1.0) + 1e-9);
    }

    #[test]
    fn stays_spd_under_many_updates() {
        let k = 16;
        let mut rng = rng::stream(7, &[4]);
        let mut state = EllipsoidState::ball(vec![0.0; k], 1.0);
        for step in 0..2000 {
            let v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            ellipsoid_update_in_place(&mut state, &v, 1e-300).unwrap();
            if step % 100 == 0 {
                assert!(state.log_det().is_some(), "lost positive definiteness at {step}");
                for i in 0..k {
                    for j in 0..k {
                        let diff = (state.shape[i * k + j] - state.shape[j * k + i]).abs();
                        assert!(diff < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn one_dimensional_bisection() {
        let state = EllipsoidState::ball(vec![0.0], 4.0);
        let next = ellipsoid_update(&state, &[1.0]).unwrap();
        assert_eq!(next.center[0], 2.0);
        assert_eq!(next.shape[0], 4.0);
        let oracle = |y: &[f64]| -> Result<OracleOutcome, ()> {
            if y[0] >= 3.0 {
                Ok(OracleOutcome::Fail)
            } else {
                Ok(OracleOutcome::Separate(vec![1.0]))
            }
        };
        let r = run_ellipsoid(&[0.0], 4.0, oracle, 64).unwrap();
        assert!(r.point[0] >= 3.0);
    }
}
