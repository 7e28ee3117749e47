//! Seeded Moran realizations and the empirical dimension estimator.
//!
//! A realization is one sampled sequence of level atoms; every level-`n`
//! subdivision reuses the level-`n` draw (the one-variable property). The
//! estimator scans extremal mass/length ratios over level windows: windows of
//! depth `ceil(zeta(N))` anchored at `N` probe the large regime, short fixed
//! windows (`m <= 8`) probe the small regime. Window extrema are computed
//! without enumeration by a monotone scalar root; exhaustive enumeration
//! stays available as an oracle.

use serde::Serialize;

use crate::gfunction::{select_child, Mode};
use crate::param_space::{sample_level, stream, Atom, Bounds, ParamDistribution};

/// Bisection tolerance on the window ratio parameter.
pub const WINDOW_TOL: f64 = 1e-12;
/// Largest window depth used by the small-regime estimator.
pub const SMALL_WINDOW_MAX: usize = 8;
/// Word-count guard for [`window_brute_force`].
pub const BRUTE_FORCE_CAP: u128 = 1 << 24;

const MAX_BISECT: u32 = 200;

/// One sampled construction: level `n` (1-based) was drawn from the source
/// distribution with [`stream`]`(seed, n)`, so regeneration from
/// `(dist, depth, seed)` is bit-identical and a deeper regeneration extends a
/// shallower one.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    /// `levels[i]` is the atom used by every subdivision at depth `i + 1`.
    pub levels: Vec<Atom>,
    pub seed: u64,
    /// Human-readable description of the source distribution.
    pub dist_id: String,
    /// Bounds inherited from the source; `ratio_min`/`sum_max` feed the
    /// window-depth function [`zeta`], `level_sep` the ball-to-ancestor
    /// separation guarantee.
    pub bounds: Bounds,
}

impl Realization {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }
}

/// A word `v_1 .. v_n` of child indices addressing one Moran interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalAddress {
    pub word: Vec<usize>,
}

impl IntervalAddress {
    pub fn root() -> Self {
        IntervalAddress { word: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }
}

/// Which extremum a window scan takes over descendant words.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowMode {
    Sup,
    Inf,
}

/// The four empirical regimes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    LargePhiUpper,
    LargePhiLower,
    SmallPhiUpper,
    SmallPhiLower,
}

impl Regime {
    pub fn key(self) -> &'static str {
        match self {
            Regime::LargePhiUpper => "large_phi_upper",
            Regime::LargePhiLower => "large_phi_lower",
            Regime::SmallPhiUpper => "small_phi_upper",
            Regime::SmallPhiLower => "small_phi_lower",
        }
    }
}

/// One empirical dimension value and the window policy that produced it.
#[derive(Clone, Debug, Serialize)]
pub struct DimensionEstimate {
    pub value: f64,
    pub regime: Regime,
    /// Window constant `H` (large regimes only; echoed for the report).
    pub h: f64,
    /// Anchor range `[N_min, N_max]` scanned.
    pub n_range: (usize, usize),
    pub depth: usize,
}

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("window levels {n}+1..{n}+{m} exceed realization depth {depth}")]
    WindowOutOfRange { n: usize, m: usize, depth: usize },
    #[error("window enumerates {words} words, above the {BRUTE_FORCE_CAP} guard")]
    TooLarge { words: u128 },
    #[error("estimator needs depth >= {needed}, realization has {depth}")]
    InsufficientDepth { needed: usize, depth: usize },
    #[error("interval geometry needs 2 children per level, found an atom with {children}")]
    UnsupportedGeometry { children: usize },
}

/// Samples a realization. Level `n` uses its own stream so the draw at a
/// given level does not depend on the requested depth.
pub fn generate(dist: &ParamDistribution, depth: usize, seed: u64) -> Realization {
    assert!(depth >= 1, "depth must be at least 1");
    let levels = (1..=depth)
        .map(|n| sample_level(dist, &mut stream(seed, n as u64)))
        .collect();
    Realization {
        levels,
        seed,
        dist_id: dist.to_string(),
        bounds: dist.bounds.clone(),
    }
}

/// Length and mass of the addressed interval: straight products of the
/// per-level ratios and probabilities along the word. Underflows for very
/// deep addresses; use [`interval_log_geometry`] past a few hundred levels.
pub fn interval_geometry(real: &Realization, addr: &IntervalAddress) -> (f64, f64) {
    let (log_len, log_mass) = interval_log_geometry(real, addr);
    (log_len.exp(), log_mass.exp())
}

/// Log-length and log-mass of the addressed interval; exact-depth safe.
pub fn interval_log_geometry(real: &Realization, addr: &IntervalAddress) -> (f64, f64) {
    assert!(addr.len() <= real.depth(), "address deeper than realization");
    let mut log_len = 0.0;
    let mut log_mass = 0.0;
    for (atom, &v) in real.levels.iter().zip(&addr.word) {
        assert!(v < atom.len(), "digit {v} out of range for a {}-child level", atom.len());
        log_len += atom.ratios[v].ln();
        log_mass += atom.probs[v].ln();
    }
    (log_len, log_mass)
}

/// Extremal `log mass / log length` over all descendant words of the window
/// levels `N+1 .. N+m`, without enumeration.
///
/// The word extremum separates per level, so `psi` bounds every word ratio
/// exactly when `f(psi) = sum_j max_k (psi log r_jk - log p_jk) >= 0`
/// (min over `k` for [`WindowMode::Inf`]). `f` is strictly decreasing (every
/// slope `log r < 0`) with `f(0) > 0`, and its root is the extremal ratio.
/// Bisection to [`WINDOW_TOL`].
pub fn window_extremal_ratio(
    real: &Realization,
    n: usize,
    m: usize,
    mode: WindowMode,
) -> Result<f64, SimError> {
    let window = window_levels(real, n, m)?;
    let f = |psi: f64| -> f64 {
        window
            .iter()
            .map(|atom| {
                let terms = atom
                    .ratios
                    .iter()
                    .zip(&atom.probs)
                    .map(|(&r, &p)| psi * r.ln() - p.ln());
                match mode {
                    WindowMode::Sup => terms.fold(f64::NEG_INFINITY, f64::max),
                    WindowMode::Inf => terms.fold(f64::INFINITY, f64::min),
                }
            })
            .sum()
    };
    assert!(f(0.0) > 0.0, "window root not bracketed: probabilities must lie below 1");
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    let mut iter = 0;
    while hi - lo > WINDOW_TOL && iter < MAX_BISECT {
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

/// Exhaustive window extrema `(sup, inf)` over all descendant words; the
/// oracle for [`window_extremal_ratio`].
pub fn window_brute_force(real: &Realization, n: usize, m: usize) -> Result<(f64, f64), SimError> {
    let window = window_levels(real, n, m)?;
    let words = window.iter().map(|a| a.len() as u128).product::<u128>();
    if words > BRUTE_FORCE_CAP {
        return Err(SimError::TooLarge { words });
    }
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    fn walk(window: &[Atom], log_mass: f64, log_len: f64, sup: &mut f64, inf: &mut f64) {
        match window.split_first() {
            None => {
                let ratio = log_mass / log_len;
                *sup = sup.max(ratio);
                *inf = inf.min(ratio);
            }
            Some((atom, rest)) => {
                for k in 0..atom.len() {
                    walk(
                        rest,
                        log_mass + atom.probs[k].ln(),
                        log_len + atom.ratios[k].ln(),
                        sup,
                        inf,
                    );
                }
            }
        }
    }
    walk(window, 0.0, 0.0, &mut sup, &mut inf);
    Ok((sup, inf))
}

fn window_levels<'a>(real: &'a Realization, n: usize, m: usize) -> Result<&'a [Atom], SimError> {
    if m < 1 || n + m > real.depth() {
        return Err(SimError::WindowOutOfRange { n, m, depth: real.depth() });
    }
    Ok(&real.levels[n..n + m])
}

/// Minimal window depth `H log(N |log B|) / |log A|` separating scale pairs
/// admissible at anchor `N` under the constant-`H` dimension function.
pub fn zeta(n: usize, h: f64, ratio_min: f64, sum_max: f64) -> f64 {
    assert!(n >= 2, "zeta needs N >= 2");
    assert!(h > 0.0, "zeta needs H > 0");
    h * (n as f64 * sum_max.ln().abs()).ln() / ratio_min.ln().abs()
}

/// Empirical dimension for one regime.
///
/// Large regimes scan windows of depth `max(1, ceil(zeta(N)))` anchored at
/// every `N` in `[n_min, n_max]` and take the extremal ratio (max of sups for
/// the upper, min of infs for the lower). Small regimes scan every fixed
/// depth `m` in `1..=`[`SMALL_WINDOW_MAX`] instead: the Assouad regime allows
/// arbitrarily deep relative gaps, and short windows isolate the single-level
/// extremes that realize the essential-bound ratios. Windows that would
/// overrun the realization are clamped to the available depth.
pub fn estimate_dimension(
    real: &Realization,
    regime: Regime,
    h: f64,
    n_min: usize,
    n_max: usize,
) -> Result<DimensionEstimate, SimError> {
    assert!(h > 0.0, "window constant H must be positive");
    assert!(2 <= n_min && n_min <= n_max, "need 2 <= N_min <= N_max");
    let depth = real.depth();
    let (a, b) = (real.bounds.ratio_min, real.bounds.sum_max);
    let zeta_window = |n: usize| zeta(n, h, a, b).ceil().max(1.0) as usize;
    let needed = n_max + zeta_window(n_max);
    if needed > depth {
        return Err(SimError::InsufficientDepth { needed, depth });
    }
    let mut value = match regime {
        Regime::LargePhiUpper | Regime::SmallPhiUpper => f64::NEG_INFINITY,
        Regime::LargePhiLower | Regime::SmallPhiLower => f64::INFINITY,
    };
    for n in n_min..=n_max {
        match regime {
            Regime::LargePhiUpper => {
                value = value.max(window_extremal_ratio(real, n, zeta_window(n), WindowMode::Sup)?);
            }
            Regime::LargePhiLower => {
                value = value.min(window_extremal_ratio(real, n, zeta_window(n), WindowMode::Inf)?);
            }
            Regime::SmallPhiUpper => {
                for m in 1..=SMALL_WINDOW_MAX.min(depth - n) {
                    value = value.max(window_extremal_ratio(real, n, m, WindowMode::Sup)?);
                }
            }
            Regime::SmallPhiLower => {
                for m in 1..=SMALL_WINDOW_MAX.min(depth - n) {
                    value = value.min(window_extremal_ratio(real, n, m, WindowMode::Inf)?);
                }
            }
        }
    }
    debug_assert!(value.is_finite() && value >= 0.0);
    Ok(DimensionEstimate { value, regime, h, n_range: (n_min, n_max), depth })
}

/// The branch following `argmax_k ratios[k]^theta / probs[k]` at every level
/// (ties to the lowest index). Along it the local ratio of log-mass to
/// log-length converges to the diagonal crossing when `theta` is set to it.
pub fn extremal_branch(real: &Realization, theta: f64, depth: usize) -> IntervalAddress {
    assert!(theta >= 0.0, "theta must be nonnegative");
    assert!(depth <= real.depth(), "branch deeper than realization");
    IntervalAddress {
        word: real.levels[..depth]
            .iter()
            .map(|atom| select_child(atom, theta, Mode::Max))
            .collect(),
    }
}

/// Explicit interval coordinates for the two-child model, one list per depth
/// `0..=depth_cap`: the left child keeps the parent's left endpoint and takes
/// the leftmost `a`-fraction, the right child keeps the right endpoint and
/// takes the rightmost `b`-fraction, leaving a central gap of at least
/// `(1 - B)` times the parent.
pub fn emit_intervals(
    real: &Realization,
    depth_cap: usize,
) -> Result<Vec<Vec<(f64, f64, f64)>>, SimError> {
    assert!(depth_cap <= 20, "interval emission is capped at depth 20");
    assert!(depth_cap <= real.depth(), "depth_cap deeper than realization");
    if let Some(atom) = real.levels[..depth_cap].iter().find(|a| a.len() != 2) {
        return Err(SimError::UnsupportedGeometry { children: atom.len() });
    }
    let mut depths = vec![vec![(0.0, 1.0, 1.0)]];
    for atom in &real.levels[..depth_cap] {
        let (a, b) = (atom.ratios[0], atom.ratios[1]);
        let (p, q) = (atom.probs[0], atom.probs[1]);
        let next = depths
            .last()
            .unwrap()
            .iter()
            .flat_map(|&(l, r, mass)| {
                let w = r - l;
                [(l, l + a * w, mass * p), (r - b * w, r, mass * q)]
            })
            .collect();
        depths.push(next);
    }
    Ok(depths)
}
