//! Dimension solvers: the diagonal crossing of `G` (large regime), the
//! closed-form special cases, the essential-bound formulas (small regime),
//! and the similarity dimension of the deterministic support.

use crate::gfunction::{g_analytic, GError, Mode};
use crate::param_space::{essential_bounds, ParamDistribution};

/// Default bisection tolerance on the crossing parameter.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Hard cap on the bracketing search; every sensible distribution crosses
/// the diagonal far below this (G tends to a finite constant).
pub const DEFAULT_THETA_CAP: f64 = 1e6;

/// Which almost-sure dimension to solve for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Upper dimension: diagonal crossing of `G` (maximizing selection).
    Upper,
    /// Lower dimension: diagonal crossing of `G'` (minimizing selection).
    Lower,
}

impl Side {
    pub fn mode(self) -> Mode {
        match self {
            Side::Upper => Mode::Max,
            Side::Lower => Mode::Min,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossingKind {
    /// `|G(alpha) - alpha|` is within tolerance: an honest fixed point.
    FixedPoint,
    /// `G` jumps over the diagonal at `alpha`; the crossing is still the
    /// almost-sure dimension.
    JumpCrossing,
}

/// Output of [`find_crossing`]. The sign pattern `G(psi) >= psi` left of
/// `alpha` and `G(psi) < psi` right of it holds on the search bracket.
#[derive(Clone, Debug)]
pub struct CrossingResult {
    pub alpha: f64,
    pub kind: CrossingKind,
    /// Final bisection bracket; `bracket.1 - bracket.0 <= 2 * tol`.
    pub bracket: (f64, f64),
    /// `|G(alpha) - alpha|` for a fixed point, the jump gap across the
    /// bracket for a jump crossing.
    pub residual: f64,
    pub iterations: u32,
}

/// Small-regime (Assouad-type) dimensions from essential bounds.
#[derive(Clone, Copy, Debug)]
pub struct SmallPhiDims {
    /// Upper value `max_j log P_j / log A_j`; infinite when some child's
    /// probability has essential infimum 0.
    pub alpha_small: f64,
    /// Lower value `min_j log p_j / log a_j` (ess-sup probability over
    /// ess-inf ratio).
    pub beta_small: f64,
}

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum SolverError {
    /// `G - theta` never becomes negative up to the cap. Inconsistent with
    /// the finite limit of `G`, so it signals an invalid distribution.
    #[error("G(theta) - theta has no sign change on [0, {cap}]")]
    NoSignChange { cap: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    G(#[from] GError),
}

const MAX_BISECT: u32 = 200;

/// Finds the diagonal crossing of `G` (or `G'`): bisection on the sign of
/// `s(theta) = G(theta) - theta`, with the initial bracket grown by doubling
/// from 1 until `s < 0` (`s(0) = G(0) >= 0` always).
///
/// Returns [`CrossingKind::FixedPoint`] when the residual at the crossing is
/// within `tol`, otherwise [`CrossingKind::JumpCrossing`] with the jump gap.
/// Either way `alpha` is the almost-sure dimension.
pub fn find_crossing(
    dist: &ParamDistribution,
    side: Side,
    tol: f64,
    theta_cap: f64,
) -> Result<CrossingResult, SolverError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let mode = side.mode();
    let g = |theta: f64| -> Result<f64, SolverError> {
        Ok(g_analytic(dist, theta, mode)?.value)
    };
    let mut hi = 1.0;
    while g(hi)? - hi >= 0.0 {
        hi *= 2.0;
        if hi > theta_cap {
            return Err(SolverError::NoSignChange { cap: theta_cap });
        }
    }
    let mut lo = 0.0;
    let mut iterations = 0;
    while hi - lo > 2.0 * tol && iterations < MAX_BISECT {
        let mid = 0.5 * (lo + hi);
        iterations += 1;
        if g(mid)? - mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let s_alpha = g(alpha)? - alpha;
    let (kind, residual) = if s_alpha.abs() <= tol {
        (CrossingKind::FixedPoint, s_alpha.abs())
    } else {
        (CrossingKind::JumpCrossing, (g(lo)? - g(hi)?).abs())
    };
    Ok(CrossingResult { alpha, kind, bracket: (lo, hi), residual, iterations })
}

/// The unique `theta >= 0` with `a^theta + b^theta = 1/e`: the diagonal
/// crossing of the UniformP `G`. The left side falls strictly from 2 to 0,
/// so the root always exists. Bisection to 1e-12.
pub fn uniformp_closed_form(a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0, "ratios must lie in (0,1)");
    let f = |theta: f64| a.powf(theta) + b.powf(theta) - (-1f64).exp();
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    let mut iter = 0;
    while hi - lo > 1e-12 && iter < MAX_BISECT {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iter += 1;
    }
    0.5 * (lo + hi)
}

/// Closed-form upper dimension of the two-point model: ratios `(a, b)` with
/// `a < b`, probabilities drawn from `{p, 1-p}` with equal likelihood,
/// `p < 1/2`. With `beta = log b / log a` and `eta = log p / log(1-p)`:
///
/// ```text
/// eta + 1 + beta - 3 eta beta >= 0  =>  (log p + log(1-p)) / (2 log b)
/// otherwise                         =>  log p / ((log a + log b) / 2)
/// ```
pub fn twopoint_closed_form(a: f64, b: f64, p: f64) -> Result<f64, SolverError> {
    if !(a > 0.0 && a < b && b < 1.0) {
        return Err(SolverError::Domain(format!("need 0 < a < b < 1, got a={a}, b={b}")));
    }
    if !(p > 0.0 && p < 0.5) {
        return Err(SolverError::Domain(format!("need 0 < p < 1/2, got p={p}")));
    }
    let beta = b.ln() / a.ln();
    let eta = p.ln() / (1.0 - p).ln();
    if eta + 1.0 + beta - 3.0 * eta * beta >= 0.0 {
        Ok((p.ln() + (1.0 - p).ln()) / (2.0 * b.ln()))
    } else {
        Ok(p.ln() / (0.5 * (a.ln() + b.ln())))
    }
}

/// Small-regime dimensions from the essential bounds of the level draw.
pub fn small_phi_dims(dist: &ParamDistribution) -> SmallPhiDims {
    let ess = essential_bounds(dist);
    let alpha_small = ess
        .children
        .iter()
        .map(|c| {
            if c.prob_inf == 0.0 {
                f64::INFINITY
            } else {
                c.prob_inf.ln() / c.ratio_sup.ln()
            }
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let beta_small = ess
        .children
        .iter()
        .map(|c| c.prob_sup.ln() / c.ratio_inf.ln())
        .fold(f64::INFINITY, f64::min);
    SmallPhiDims { alpha_small: unsign_zero(alpha_small), beta_small: unsign_zero(beta_small) }
}

/// `ln(1)/ln(r)` is -0.0, and `f64::min`/`max` do not pin the sign of a
/// zero either; reports should show plain 0.
fn unsign_zero(x: f64) -> f64 {
    if x == 0.0 { 0.0 } else { x }
}

/// The unique `d > 0` with `sum_j ratios[j]^d = 1`, by bisection to 1e-12.
pub fn similarity_dimension(ratios: &[f64]) -> Result<f64, SolverError> {
    if ratios.len() < 2 {
        return Err(SolverError::Domain(format!("need at least 2 ratios, got {}", ratios.len())));
    }
    if let Some(&r) = ratios.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
        return Err(SolverError::Domain(format!("ratio {r} outside (0,1)")));
    }
    let sum: f64 = ratios.iter().sum();
    if sum >= 1.0 {
        return Err(SolverError::Domain(format!(
            "ratios sum to {sum} >= 1; the pieces overlap and the similarity equation has no root below 1"
        )));
    }
    let f = |d: f64| ratios.iter().map(|r| r.powf(d)).sum::<f64>() - 1.0;
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    let mut iter = 0;
    while hi - lo > 1e-12 && iter < MAX_BISECT {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iter += 1;
    }
    Ok(0.5 * (lo + hi))
}

/// The two-point model as an explicit mixture: atoms `(a, b; p, 1-p)` and
/// `(a, b; 1-p, p)` with weights one half each. Solving this mixture is the
/// independent route against which [`twopoint_closed_form`] is checked.
pub fn twopoint_mixture(a: f64, b: f64, p: f64) -> Result<ParamDistribution, SolverError> {
    use crate::param_space::Atom;
    ParamDistribution::finite_mixture(
        vec![0.5, 0.5],
        vec![
            Atom::new(vec![a, b], vec![p, 1.0 - p]),
            Atom::new(vec![a, b], vec![1.0 - p, p]),
        ],
    )
    .map_err(|e| SolverError::Domain(e.to_string()))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::param_space::{stream, Atom, ParamDistribution};
    use rand::Rng;

    pub(crate) fn k3_mixture() -> ParamDistribution {
        let r = vec![0.25, 0.0625, 0.0625];
        ParamDistribution::finite_mixture(
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            vec![
                Atom::new(r.clone(), vec![0.5, 0.25, 0.25]),
                Atom::new(r.clone(), vec![0.25, 0.5, 0.25]),
                Atom::new(r, vec![0.25, 0.25, 0.5]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn uniform_p_crossing_hits_the_frozen_value() {
        let dist = ParamDistribution::uniform_p(0.25, 0.5).unwrap();
        let res = find_crossing(&dist, Side::Upper, DEFAULT_TOL, DEFAULT_THETA_CAP).unwrap();
        assert!((res.alpha - 1.805_645_227_525_959_1).abs() < 1e-8, "alpha={}", res.alpha);
        assert_eq!(res.kind, CrossingKind::FixedPoint);
        assert!(res.bracket.1 - res.bracket.0 <= 2.0 * DEFAULT_TOL);
    }

    #[test]
    fn k3_crossing_is_five_sixths() {
        let res = find_crossing(&k3_mixture(), Side::Upper, DEFAULT_TOL, DEFAULT_THETA_CAP)
            .unwrap();
        assert!((res.alpha - 5.0 / 6.0).abs() < 1e-9, "alpha={}", res.alpha);
        assert_eq!(res.kind, CrossingKind::FixedPoint);
    }

    #[test]
    fn symmetric_point_mass_crossing() {
        let dist = ParamDistribution::point_mass(Atom::new(vec![1.0 / 3.0; 2], vec![0.5; 2]))
            .unwrap();
        let res = find_crossing(&dist, Side::Upper, DEFAULT_TOL, DEFAULT_THETA_CAP).unwrap();
        assert!((res.alpha - std::f64::consts::LN_2 / 3f64.ln()).abs() < 1e-9);
        assert_eq!(res.kind, CrossingKind::FixedPoint);
    }

    #[test]
    fn crossing_sign_pattern_on_both_sides() {
        // G(psi) >= psi strictly left of alpha, G(psi) < psi right of it
        // (reversed role of the primed G handled by the same signs).
        for side in [Side::Upper, Side::Lower] {
            for dist in [ParamDistribution::uniform_p(0.25, 0.5).unwrap(), k3_mixture()] {
                let res = find_crossing(&dist, side, DEFAULT_TOL, DEFAULT_THETA_CAP).unwrap();
                let mut hi = 1.0;
                while g_analytic(&dist, hi, side.mode()).unwrap().value - hi >= 0.0 {
                    hi *= 2.0;
                }
                let steps = 50;
                for i in 0..steps {
                    let left = res.bracket.0 * (i as f64 + 0.5) / steps as f64;
                    let s = g_analytic(&dist, left, side.mode()).unwrap().value - left;
                    assert!(s >= 0.0, "{dist} side={side:?}: s({left}) = {s} < 0 left of alpha");
                    let right = res.bracket.1
                        + (hi - res.bracket.1) * (i as f64 + 0.5) / steps as f64;
                    let s = g_analytic(&dist, right, side.mode()).unwrap().value - right;
                    assert!(s < 0.0, "{dist} side={side:?}: s({right}) = {s} >= 0 right of alpha");
                }
            }
        }
    }

    #[test]
    fn closed_form_and_crossing_agree_for_random_uniform_p() {
        let mut rng = stream(2718, 0);
        for _ in 0..100 {
            let a: f64 = 0.02 + 0.45 * rng.random::<f64>();
            let b: f64 = 0.02 + (0.96 - a - 0.02) * rng.random::<f64>();
            if a + b >= 0.98 || b <= 0.0 {
                continue;
            }
            let direct = uniformp_closed_form(a, b);
            let dist = ParamDistribution::uniform_p(a, b).unwrap();
            let res = find_crossing(&dist, Side::Upper, DEFAULT_TOL, DEFAULT_THETA_CAP).unwrap();
            assert!(
                (direct - res.alpha).abs() <= 10.0 * DEFAULT_TOL,
                "a={a} b={b}: closed={direct} crossing={}",
                res.alpha
            );
        }
    }

    #[test]
    fn closed_form_matches_the_quadratic_solution() {
        let direct = uniformp_closed_form(0.25, 0.5);
        assert!((direct - 1.805_645_227_525_959_1).abs() < 1e-10);
        // Equal ratios solve 2 a^theta = 1/e in closed form.
        let sym = uniformp_closed_form(0.3, 0.3);
        let want = (2.0 * std::f64::consts::E).ln() / (1.0 / 0.3f64).ln();
        assert!((sym - want).abs() < 1e-10);
    }

    #[test]
    fn exp_criterion_matches_the_g_sign_pointwise() {
        let dist = ParamDistribution::uniform_p(0.25, 0.5).unwrap();
        let einv = (-1f64).exp();
        for i in 0..=400 {
            let theta = i as f64 * 0.01;
            let s = g_analytic(&dist, theta, Mode::Max).unwrap().value - theta;
            let crit = 0.25f64.powf(theta) + 0.5f64.powf(theta) - einv;
            if s.abs() > 1e-9 && crit.abs() > 1e-9 {
                assert_eq!(s > 0.0, crit > 0.0, "signs differ at theta={theta}");
            }
        }
    }

    #[test]
    fn twopoint_closed_form_example() {
        let dim = twopoint_closed_form(0.25, 0.5, 0.25).unwrap();
        assert!((dim - 4.0 / 3.0).abs() < 1e-12, "dim={dim}");
    }

    #[test]
    fn twopoint_limit_toward_equal_probabilities() {
        let b = 0.5;
        let dim = twopoint_closed_form(0.25, b, 0.499_999_9).unwrap();
        let want = 0.5f64.ln() / b.ln();
        assert!((dim - want).abs() < 1e-5, "dim={dim}");
    }

    #[test]
    fn twopoint_rejects_bad_domains() {
        assert!(matches!(twopoint_closed_form(0.5, 0.25, 0.2), Err(SolverError::Domain(_))));
        assert!(matches!(twopoint_closed_form(0.25, 0.5, 0.5), Err(SolverError::Domain(_))));
        assert!(matches!(twopoint_closed_form(0.25, 0.5, 0.0), Err(SolverError::Domain(_))));
    }

    #[test]
    fn twopoint_closed_form_agrees_with_the_mixture_crossing() {
        let mut rng = stream(31, 0);
        for _ in 0..25 {
            let a: f64 = 0.05 + 0.3 * rng.random::<f64>();
            let b: f64 = a + (0.95 - 2.0 * a).max(0.01) * rng.random::<f64>() * 0.9 + 1e-3;
            let p: f64 = 0.05 + 0.4 * rng.random::<f64>();
            if !(a < b && a + b < 0.98) {
                continue;
            }
            let closed = twopoint_closed_form(a, b, p).unwrap();
            let mixture = twopoint_mixture(a, b, p).unwrap();
            let res = find_crossing(&mixture, Side::Upper, DEFAULT_TOL, DEFAULT_THETA_CAP)
                .unwrap();
            assert!(
                (closed - res.alpha).abs() < 1e-8,
                "a={a} b={b} p={p}: closed={closed} crossing={}",
                res.alpha
            );
        }
    }

    #[test]
    fn small_phi_of_the_two_point_model() {
        let dims = small_phi_dims(&twopoint_mixture(0.25, 0.5, 0.25).unwrap());
        assert!((dims.alpha_small - 2.0).abs() < 1e-12);
        assert!((dims.beta_small - 0.75f64.ln() / 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn small_phi_of_uniform_p_is_degenerate() {
        let dims = small_phi_dims(&ParamDistribution::uniform_p(0.25, 0.5).unwrap());
        assert!(dims.alpha_small.is_infinite());
        assert_eq!(dims.beta_small, 0.0);
        // Plain zero, not the -0.0 the raw quotient produces.
        assert!(
            dims.beta_small.is_sign_positive(),
            "beta_small bits {:#018x}",
            dims.beta_small.to_bits()
        );
    }

    #[test]
    fn small_phi_of_the_symmetric_point_mass() {
        let dist = ParamDistribution::point_mass(Atom::new(vec![1.0 / 3.0; 2], vec![0.5; 2]))
            .unwrap();
        let dims = small_phi_dims(&dist);
        let want = std::f64::consts::LN_2 / 3f64.ln();
        assert!((dims.alpha_small - want).abs() < 1e-15);
        assert!((dims.beta_small - want).abs() < 1e-15);
    }

    #[test]
    fn similarity_dimension_examples() {
        let d = similarity_dimension(&[0.25, 0.5]).unwrap();
        assert!((d - 0.694_241_913_630_617_3).abs() < 1e-10, "d={d}");
        let d = similarity_dimension(&[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((d - std::f64::consts::LN_2 / 3f64.ln()).abs() < 1e-10);
        let d = similarity_dimension(&[0.25, 0.0625, 0.0625]).unwrap();
        let residual: f64 = [0.25, 0.0625, 0.0625].iter().map(|r: &f64| r.powf(d)).sum::<f64>() - 1.0;
        assert!(residual.abs() < 1e-10);
    }

    #[test]
    fn similarity_dimension_rejects_overlapping_pieces() {
        assert!(matches!(similarity_dimension(&[0.6, 0.6]), Err(SolverError::Domain(_))));
        assert!(matches!(similarity_dimension(&[0.5]), Err(SolverError::Domain(_))));
    }

    #[test]
    fn uniform_p_dimension_grows_from_the_small_corner() {
        // D(a, b) increases toward the a, b -> 1 edges and shrinks toward the
        // origin; the (1/50, 1/50) corner evaluates to (1 + ln 2)/ln 50.
        let corner = uniformp_closed_form(0.02, 0.02);
        assert!((corner - (1.0 + std::f64::consts::LN_2) / 50f64.ln()).abs() < 1e-10);
        assert!(uniformp_closed_form(0.49, 0.49) > corner);
        let mut last = corner;
        for b in [0.1, 0.3, 0.5, 0.7] {
            let alpha = uniformp_closed_form(0.24, b);
            assert!(alpha > last, "alpha({b}) = {alpha} not above {last}");
            last = alpha;
        }
    }

    #[test]
    fn dimension_ordering_for_discrete_models() {
        // Assouad >= quasi-Assouad >= lower quasi-Assouad >= lower Assouad.
        let dists = [
            twopoint_mixture(0.25, 0.5, 0.25).unwrap(),
            k3_mixture(),
            ParamDistribution::point_mass(Atom::new(vec![0.3, 0.4], vec![0.7, 0.3])).unwrap(),
        ];
        for dist in &dists {
            let small = small_phi_dims(dist);
            let upper =
                find_crossing(dist, Side::Upper, DEFAULT_TOL, DEFAULT_THETA_CAP).unwrap().alpha;
            let lower =
                find_crossing(dist, Side::Lower, DEFAULT_TOL, DEFAULT_THETA_CAP).unwrap().alpha;
            assert!(small.alpha_small >= upper - 1e-9, "{dist}");
            assert!(upper >= lower - 1e-9, "{dist}");
            assert!(lower >= small.beta_small - 1e-9, "{dist}");
        }
    }
}
