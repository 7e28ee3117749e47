//! The parameter space of level configurations: distributions over atoms,
//! validation against the scale bounds, seeded sampling, and the essential
//! bounds that drive the small-regime dimension formulas.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Absolute tolerance on normalization sums (probabilities, mixture weights).
/// Covers double-precision round-off from user-entered fractions.
pub const NORM_TOL: f64 = 1e-12;

/// One IFSP configuration: `K` contraction ratios and `K` branching
/// probabilities for a single level draw.
///
/// Invariants (enforced by [`validate`]):
/// * `K >= 2`, `ratios.len() == probs.len()`
/// * every probability strictly inside `(0, 1)`, summing to 1 within [`NORM_TOL`]
/// * every ratio in `[A, 1)` and `sum(ratios) <= B_K` for the governing [`Bounds`]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub ratios: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Atom {
    pub fn new(ratios: Vec<f64>, probs: Vec<f64>) -> Self {
        Atom { ratios, probs }
    }

    /// Number of children `K`.
    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ratios={:?}, probs={:?}", self.ratios, self.probs)
    }
}

/// Scale bounds for the constraint set: every ratio is at least `ratio_min`
/// (the constant `A`), every per-level ratio sum is at most `sum_max` (the
/// constant `B`), and children of one parent are separated by at least `tau`
/// times the parent diameter after `level_sep` further levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    /// Lower bound `A` on every contraction ratio, in `(0, 1)`.
    pub ratio_min: f64,
    /// Upper bound `B` on the per-level sum of ratios, in `(A, 1)`.
    pub sum_max: f64,
    /// Separation parameter in `(0, 1)`; the two-child interval model uses
    /// `tau = 1 - B`.
    pub tau: f64,
    /// Minimal positive integer `L` with `2 * B^(L-1) <= tau`.
    pub level_sep: u32,
    /// Per-child-count overrides `B_K` for the ratio-sum bound; child counts
    /// not listed fall back to `sum_max`.
    #[serde(default)]
    pub sum_overrides: BTreeMap<usize, f64>,
}

impl Bounds {
    /// Builds bounds from `A`, `B` and `tau`, deriving the separation depth.
    pub fn new(ratio_min: f64, sum_max: f64, tau: f64) -> Result<Self, ConstraintViolation> {
        let bounds = Bounds {
            ratio_min,
            sum_max,
            tau,
            level_sep: 0,
            sum_overrides: BTreeMap::new(),
        };
        bounds.check()?;
        Ok(Bounds { level_sep: derive_l(sum_max, tau), ..bounds })
    }

    /// Tightest bounds consistent with a declared support: `A` sits just
    /// below the smallest ratio, `B` equals the largest ratio sum, and
    /// `tau = 1 - B` (the interval model's gap).
    pub fn tightest(ratio_inf: f64, sum_sup: f64) -> Result<Self, ConstraintViolation> {
        Bounds::new(0.99 * ratio_inf, sum_sup, 1.0 - sum_sup)
    }

    /// The ratio-sum bound `B_K` for a `K`-child atom.
    pub fn sum_bound(&self, k: usize) -> f64 {
        self.sum_overrides.get(&k).copied().unwrap_or(self.sum_max)
    }

    fn check(&self) -> Result<(), ConstraintViolation> {
        if !(self.ratio_min > 0.0 && self.ratio_min < self.sum_max && self.sum_max < 1.0) {
            return Err(ConstraintViolation::new(
                "bounds",
                None,
                format!("need 0 < A < B < 1, got A={}, B={}", self.ratio_min, self.sum_max),
            ));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(ConstraintViolation::new(
                "bounds",
                None,
                format!("need tau in (0,1), got {}", self.tau),
            ));
        }
        Ok(())
    }
}

/// Minimal positive integer `L` with `2 * B^(L-1) <= tau`.
///
/// Always exists for `0 < B < 1`, `0 < tau < 1` since the left side decays
/// to zero.
pub fn derive_l(sum_max: f64, tau: f64) -> u32 {
    debug_assert!(sum_max > 0.0 && sum_max < 1.0 && tau > 0.0 && tau < 1.0);
    let mut l = 1u32;
    let mut pw = 1.0; // B^(L-1)
    while 2.0 * pw > tau {
        l += 1;
        pw *= sum_max;
    }
    l
}

/// The randomness model for level draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Variant {
    /// Degenerate distribution: every level uses the same atom.
    PointMass { atom: Atom },
    /// Atom `j` is drawn with probability `weights[j]`.
    FiniteMixture { weights: Vec<f64>, atoms: Vec<Atom> },
    /// Fixed two-child ratios `(a, b)`; the first child's probability is
    /// uniform on the open interval `(0, 1)`, the second gets the rest.
    UniformP { a: f64, b: f64 },
}

/// A distribution over atoms together with the bounds it lives under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDistribution {
    pub variant: Variant,
    pub bounds: Bounds,
}

impl ParamDistribution {
    pub fn point_mass(atom: Atom) -> Result<Self, ConstraintViolation> {
        let bounds = Bounds::tightest(inf_ratio(&[atom.clone()])?, sup_sum(&[atom.clone()]))?;
        Self::with_bounds(Variant::PointMass { atom }, bounds)
    }

    pub fn finite_mixture(weights: Vec<f64>, atoms: Vec<Atom>) -> Result<Self, ConstraintViolation> {
        let bounds = Bounds::tightest(inf_ratio(&atoms)?, sup_sum(&atoms))?;
        Self::with_bounds(Variant::FiniteMixture { weights, atoms }, bounds)
    }

    pub fn uniform_p(a: f64, b: f64) -> Result<Self, ConstraintViolation> {
        if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) {
            return Err(ConstraintViolation::new(
                "ratios",
                None,
                format!("uniform_p ratios must lie in (0,1), got a={a}, b={b}"),
            ));
        }
        let bounds = Bounds::tightest(a.min(b), a + b)?;
        Self::with_bounds(Variant::UniformP { a, b }, bounds)
    }

    /// Attaches explicit bounds instead of the tightest defaults.
    pub fn with_bounds(variant: Variant, bounds: Bounds) -> Result<Self, ConstraintViolation> {
        let dist = ParamDistribution { variant, bounds };
        validate(&dist)?;
        Ok(dist)
    }

    /// Largest child count over the support.
    pub fn max_children(&self) -> usize {
        match &self.variant {
            Variant::PointMass { atom } => atom.len(),
            Variant::FiniteMixture { atoms, .. } => {
                atoms.iter().map(Atom::len).max().unwrap_or(0)
            }
            Variant::UniformP { .. } => 2,
        }
    }
}

impl fmt::Display for ParamDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.variant {
            Variant::PointMass { atom } => write!(f, "point_mass({atom})"),
            Variant::FiniteMixture { weights, atoms } => {
                write!(f, "finite_mixture(weights={weights:?}; ")?;
                for (i, atom) in atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "atom{i}: {atom}")?;
                }
                write!(f, ")")
            }
            Variant::UniformP { a, b } => write!(f, "uniform_p(a={a}, b={b})"),
        }
    }
}

/// First violated invariant of a distribution, bounds, or atom.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintViolation {
    /// Which field group failed: "ratios", "probs", "weights", "bounds".
    pub field: &'static str,
    /// Index of the offending atom inside a mixture, when applicable.
    pub atom: Option<usize>,
    pub message: String,
}

impl ConstraintViolation {
    fn new(field: &'static str, atom: Option<usize>, message: String) -> Self {
        ConstraintViolation { field, atom, message }
    }
}

impl fmt::Display for ConstraintViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "constraint violation in {}", self.field)?;
        if let Some(i) = self.atom {
            write!(f, " (atom {i})")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConstraintViolation {}

/// Essential bounds of one child's ratio and probability across the support.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChildEssentials {
    /// Essential infimum of the child's ratio.
    pub ratio_inf: f64,
    /// Essential supremum of the child's ratio.
    pub ratio_sup: f64,
    /// Essential infimum of the child's probability (0 for UniformP).
    pub prob_inf: f64,
    /// Essential supremum of the child's probability (1 for UniformP).
    pub prob_sup: f64,
}

/// Per-child essential bounds; index `j` corresponds to child `j`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EssentialBounds {
    pub children: Vec<ChildEssentials>,
}

/// Checks every invariant of the distribution and its bounds, reporting the
/// first violation found.
pub fn validate(dist: &ParamDistribution) -> Result<(), ConstraintViolation> {
    let bounds = &dist.bounds;
    bounds.check()?;
    if bounds.level_sep != derive_l(bounds.sum_max, bounds.tau) {
        return Err(ConstraintViolation::new(
            "bounds",
            None,
            format!(
                "level_sep {} is not the minimal L with 2*B^(L-1) <= tau (expected {})",
                bounds.level_sep,
                derive_l(bounds.sum_max, bounds.tau)
            ),
        ));
    }
    match &dist.variant {
        Variant::PointMass { atom } => check_atom(atom, None, bounds),
        Variant::FiniteMixture { weights, atoms } => {
            if weights.len() != atoms.len() || atoms.is_empty() {
                return Err(ConstraintViolation::new(
                    "weights",
                    None,
                    format!("{} weights for {} atoms", weights.len(), atoms.len()),
                ));
            }
            if let Some((i, &w)) = weights.iter().enumerate().find(|(_, &w)| w <= 0.0) {
                return Err(ConstraintViolation::new(
                    "weights",
                    Some(i),
                    format!("weight {w} is not positive"),
                ));
            }
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > NORM_TOL {
                return Err(ConstraintViolation::new(
                    "weights",
                    None,
                    format!("weights sum to {total}, expected 1"),
                ));
            }
            for (i, atom) in atoms.iter().enumerate() {
                check_atom(atom, Some(i), bounds)?;
            }
            Ok(())
        }
        Variant::UniformP { a, b } => {
            let (a, b) = (*a, *b);
            if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) {
                return Err(ConstraintViolation::new(
                    "ratios",
                    None,
                    format!("uniform_p ratios must lie in (0,1), got a={a}, b={b}"),
                ));
            }
            if a.min(b) < bounds.ratio_min {
                return Err(ConstraintViolation::new(
                    "ratios",
                    None,
                    format!("min ratio {} below A={}", a.min(b), bounds.ratio_min),
                ));
            }
            if a + b > bounds.sum_bound(2) + NORM_TOL {
                return Err(ConstraintViolation::new(
                    "ratios",
                    None,
                    format!("ratio sum {} exceeds B={}", a + b, bounds.sum_bound(2)),
                ));
            }
            Ok(())
        }
    }
}

fn check_atom(atom: &Atom, idx: Option<usize>, bounds: &Bounds) -> Result<(), ConstraintViolation> {
    let k = atom.len();
    if k < 2 || atom.probs.len() != k {
        return Err(ConstraintViolation::new(
            "ratios",
            idx,
            format!("need K >= 2 with matching lengths, got {} ratios and {} probs", k, atom.probs.len()),
        ));
    }
    for (j, &r) in atom.ratios.iter().enumerate() {
        if !(r < 1.0 && r >= bounds.ratio_min) {
            return Err(ConstraintViolation::new(
                "ratios",
                idx,
                format!("ratio[{j}]={r} outside [A, 1) with A={}", bounds.ratio_min),
            ));
        }
    }
    let sum: f64 = atom.ratios.iter().sum();
    if sum > bounds.sum_bound(k) + NORM_TOL {
        return Err(ConstraintViolation::new(
            "ratios",
            idx,
            format!("ratio sum {sum} exceeds B_{k}={}", bounds.sum_bound(k)),
        ));
    }
    for (j, &p) in atom.probs.iter().enumerate() {
        if !(p > 0.0 && p < 1.0) {
            return Err(ConstraintViolation::new(
                "probs",
                idx,
                format!("prob[{j}]={p} outside (0,1)"),
            ));
        }
    }
    let psum: f64 = atom.probs.iter().sum();
    if (psum - 1.0).abs() > NORM_TOL {
        return Err(ConstraintViolation::new(
            "probs",
            idx,
            format!("probs sum to {psum}, expected 1"),
        ));
    }
    Ok(())
}

fn inf_ratio(atoms: &[Atom]) -> Result<f64, ConstraintViolation> {
    atoms
        .iter()
        .flat_map(|a| a.ratios.iter().copied())
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |m| m.min(r))))
        .ok_or_else(|| ConstraintViolation::new("ratios", None, "no atoms".into()))
}

fn sup_sum(atoms: &[Atom]) -> f64 {
    atoms
        .iter()
        .map(|a| a.ratios.iter().sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Deterministic random stream for task `index` under a master seed.
///
/// Concurrent consumers (levels of a realization, Monte Carlo evaluations,
/// sweep cells) each own one stream; streams with distinct indices are
/// statistically independent and stable across runs and platforms.
pub fn stream(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Uniform draw on the open interval `(0, 1)`: rejects exact zeros so that
/// `log u` and `log (1 - u)` stay finite on every sample.
pub fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Draws one level configuration. Identical `(dist, rng state)` pairs yield
/// identical atoms.
pub fn sample_level<R: Rng>(dist: &ParamDistribution, rng: &mut R) -> Atom {
    match &dist.variant {
        Variant::PointMass { atom } => atom.clone(),
        Variant::FiniteMixture { weights, atoms } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (w, atom) in weights.iter().zip(atoms) {
                acc += w;
                if u < acc {
                    return atom.clone();
                }
            }
            atoms.last().expect("mixture validated non-empty").clone()
        }
        Variant::UniformP { a, b } => {
            let u = open_unit(rng);
            Atom::new(vec![*a, *b], vec![u, 1.0 - u])
        }
    }
}

/// Per-child essential infima/suprema of ratios and probabilities.
///
/// For discrete variants these are coordinate-wise minima/maxima over the
/// (positively weighted) support; a mixture of atoms with different child
/// counts is handled per index over the atoms that have that child.
pub fn essential_bounds(dist: &ParamDistribution) -> EssentialBounds {
    match &dist.variant {
        Variant::PointMass { atom } => EssentialBounds {
            children: atom
                .ratios
                .iter()
                .zip(&atom.probs)
                .map(|(&r, &p)| ChildEssentials {
                    ratio_inf: r,
                    ratio_sup: r,
                    prob_inf: p,
                    prob_sup: p,
                })
                .collect(),
        },
        Variant::FiniteMixture { atoms, .. } => {
            let k_max = atoms.iter().map(Atom::len).max().unwrap_or(0);
            let children = (0..k_max)
                .map(|j| {
                    let mut ess = ChildEssentials {
                        ratio_inf: f64::INFINITY,
                        ratio_sup: f64::NEG_INFINITY,
                        prob_inf: f64::INFINITY,
                        prob_sup: f64::NEG_INFINITY,
                    };
                    for atom in atoms.iter().filter(|a| a.len() > j) {
                        ess.ratio_inf = ess.ratio_inf.min(atom.ratios[j]);
                        ess.ratio_sup = ess.ratio_sup.max(atom.ratios[j]);
                        ess.prob_inf = ess.prob_inf.min(atom.probs[j]);
                        ess.prob_sup = ess.prob_sup.max(atom.probs[j]);
                    }
                    ess
                })
                .collect();
            EssentialBounds { children }
        }
        Variant::UniformP { a, b } => EssentialBounds {
            children: [*a, *b]
                .iter()
                .map(|&r| ChildEssentials {
                    ratio_inf: r,
                    ratio_sup: r,
                    prob_inf: 0.0,
                    prob_sup: 1.0,
                })
                .collect(),
        },
    }
}
