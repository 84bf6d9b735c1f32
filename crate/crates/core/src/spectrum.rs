//! Large spectra, dissociated sets, and spectral span arithmetic.
//!
//! `Spec_tau(A) = { xi : |fhat(xi)| >= tau * alpha }` with ties included, so
//! `0` is always a member. Dissociativity uses `{-1, 0, +1}` coefficient
//! vectors; the test enumerates signed combinations meet-in-the-middle, which
//! keeps the exact `3^d` semantics while halving the exponent. Extraction is
//! greedy in decreasing coefficient magnitude with the canonical index order
//! breaking ties, and the zero frequency is never offered to the extractor.

use crate::error::{Error, Result};
use crate::fourier::{dft_set, normalize_set, FourierTable};
use crate::groups::{quotient, span_dual, DualSubgroup, GroupSpec};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Hard cap on dissociation testing; `3^20` halves to under a hundred
/// thousand signed sums per side.
pub const DISSOCIATION_BUDGET: usize = 20;

/// A large spectrum at a recorded threshold.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumSet {
    pub tau: f64,
    /// Absolute threshold `tau * alpha` the magnitudes were compared against.
    pub threshold: f64,
    /// Sorted dual element indices.
    pub members: Vec<u64>,
}

/// `Spec_tau(A)` for `tau` in `(0, 1]`.
pub fn large_spectrum(g: &GroupSpec, a: &[u64], tau: f64) -> Result<SpectrumSet> {
    let a = normalize_set(g, a)?;
    if a.is_empty() {
        return Err(Error::Argument("large spectrum of the empty set".into()));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Argument(format!("tau must lie in (0, 1], got {tau}")));
    }
    let table = dft_set(g, &a)?;
    Ok(large_spectrum_from_table(&table, a.len(), tau))
}

/// Same, reusing an already-computed coefficient table of the indicator.
pub fn large_spectrum_from_table(table: &FourierTable, set_size: usize, tau: f64) -> SpectrumSet {
    let alpha = set_size as f64 / table.group.order() as f64;
    let threshold = tau * alpha;
    // Ties included: the comparison is >= with a one-ulp-scale guard so that
    // coefficients equal to the threshold by algebra survive rounding.
    let guard = threshold * 1e-12;
    let members: Vec<u64> = table
        .group
        .elements()
        .filter(|&xi| table.magnitude(xi) >= threshold - guard)
        .collect();
    SpectrumSet {
        tau,
        threshold,
        members,
    }
}

/// Exhaustive `{-1,0,+1}` dissociativity test, meet-in-the-middle.
///
/// Enumerates all signed sums of each half; the set is dissociated iff no
/// nontrivial combination vanishes. Errors past `DISSOCIATION_BUDGET`.
pub fn is_dissociated(g: &GroupSpec, d: &[u64]) -> Result<bool> {
    let d = normalize_set(g, d)?;
    if d.len() > DISSOCIATION_BUDGET {
        return Err(Error::Budget {
            what: "dissociation test",
            size: d.len(),
            limit: DISSOCIATION_BUDGET,
        });
    }
    if d.is_empty() {
        return Ok(true);
    }
    // 0 admits the singleton combination +1 * 0 = 0.
    if d[0] == 0 {
        return Ok(false);
    }
    let (left, right) = d.split_at(d.len() / 2);

    // Signed sums of the left half from nontrivial coefficient vectors.
    let mut nontrivial_left: HashSet<u64> = HashSet::new();
    let mut stack: Vec<u64> = vec![0];
    for &e in left {
        let ne = g.neg(e);
        let mut next = Vec::with_capacity(stack.len() * 3);
        for &s in &stack {
            next.push(s);
            next.push(g.add(s, e));
            next.push(g.add(s, ne));
        }
        stack = next;
    }
    // stack now holds sums of ALL left vectors in an order where index 0 is
    // the all-zero vector; reconstruct nontriviality by skipping that slot.
    for (i, &s) in stack.iter().enumerate() {
        if i != 0 {
            nontrivial_left.insert(s);
        }
    }
    if nontrivial_left.contains(&0) {
        return Ok(false);
    }

    // Walk the right half the same way; any nontrivial right sum that is
    // zero, or whose negation occurs as a nontrivial left sum, kills it.
    let mut rstack: Vec<u64> = vec![0];
    for &e in right {
        let ne = g.neg(e);
        let mut next = Vec::with_capacity(rstack.len() * 3);
        for &s in &rstack {
            next.push(s);
            next.push(g.add(s, e));
            next.push(g.add(s, ne));
        }
        rstack = next;
    }
    for (i, &s) in rstack.iter().enumerate() {
        if i == 0 {
            continue;
        }
        if s == 0 || nontrivial_left.contains(&g.neg(s)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A dissociated set together with the order in which it was grown.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DissociatedSet {
    pub members: Vec<u64>,
}

impl DissociatedSet {
    pub fn dim(&self) -> usize {
        self.members.len()
    }
}

/// Sort candidates by decreasing coefficient magnitude, canonical index order
/// on ties, zero frequency removed.
fn magnitude_order(table: &FourierTable, s: &[u64]) -> Vec<u64> {
    let mut cand: Vec<u64> = s.iter().copied().filter(|&xi| xi != 0).collect();
    cand.sort_by(|&x, &y| {
        table
            .magnitude(y)
            .partial_cmp(&table.magnitude(x))
            .unwrap()
            .then(x.cmp(&y))
    });
    cand
}

/// Greedy maximal dissociated subset of `s`, ordered by `|fhat|`.
pub fn extract_maximal_dissociated(
    g: &GroupSpec,
    table: &FourierTable,
    s: &[u64],
) -> Result<DissociatedSet> {
    let s = normalize_set(g, s)?;
    let mut members: Vec<u64> = Vec::new();
    for xi in magnitude_order(table, &s) {
        let mut candidate = members.clone();
        candidate.push(xi);
        if is_dissociated(g, &candidate)? {
            members.push(xi);
        }
    }
    Ok(DissociatedSet { members })
}

/// Chang-style audit of the extracted set against the configured constant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChangReport {
    pub tau: f64,
    pub alpha: f64,
    pub spectrum_size: usize,
    pub dissociated_size: usize,
    /// `C_RC * tau^-2 * ln(1/alpha)`
    pub size_bound: f64,
    pub size_ok: bool,
    /// `sum_{eta in D} |fhat(eta)|^2`
    pub mass: f64,
    /// `C_RC * alpha^2 * ln(1/alpha)`
    pub mass_bound: f64,
    pub mass_ok: bool,
    /// `|D| * tau^2 / ln(1/alpha)`: the constant this instance would need.
    pub measured_size_constant: f64,
    /// `mass / (alpha^2 ln(1/alpha))`
    pub measured_mass_constant: f64,
}

pub fn chang_audit(g: &GroupSpec, a: &[u64], tau: f64, c_rc: f64) -> Result<ChangReport> {
    let a = normalize_set(g, a)?;
    let spec = large_spectrum(g, &a, tau)?;
    let table = dft_set(g, &a)?;
    let d = extract_maximal_dissociated(g, &table, &spec.members)?;
    let alpha = a.len() as f64 / g.order() as f64;
    let log_term = if alpha < 1.0 { (1.0 / alpha).ln() } else { 0.0 };
    let mass: f64 = d.members.iter().map(|&xi| table.magnitude(xi).powi(2)).sum();
    let size_bound = c_rc * tau.powi(-2) * log_term;
    let mass_bound = c_rc * alpha * alpha * log_term;
    let (measured_size_constant, measured_mass_constant) = if log_term > 0.0 {
        (
            d.members.len() as f64 * tau * tau / log_term,
            mass / (alpha * alpha * log_term),
        )
    } else {
        (0.0, 0.0)
    };
    Ok(ChangReport {
        tau,
        alpha,
        spectrum_size: spec.members.len(),
        dissociated_size: d.members.len(),
        size_bound,
        size_ok: d.members.len() as f64 <= size_bound + 1e-9,
        mass,
        mass_bound,
        mass_ok: mass <= mass_bound + 1e-12,
        measured_size_constant,
        measured_mass_constant,
    })
}

/// Result of extracting dissociated frequency classes modulo a dual subgroup.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModExtraction {
    /// Chosen classes, as elements of the dual quotient group.
    pub classes: Vec<u64>,
    /// Lifted representatives in the parent dual (max `|fhat|` per class,
    /// canonical index on ties).
    pub lifts: Vec<u64>,
    /// Span of the lifts.
    pub v_prime: DualSubgroup,
    /// Candidates whose classes stayed dissociated but whose lift would have
    /// dragged the span into `V`. A nonzero count witnesses that class
    /// dissociativity alone does not force the spans to meet trivially.
    pub span_guard_rejections: u64,
}

/// Extract a maximal dissociated family of `S_tail` classes modulo `V`,
/// lifting each class to its strongest representative. The returned span is
/// guaranteed disjoint from `V` (intersection `{0}`): a candidate that would
/// break that is rejected and counted, since the class-level argument alone
/// does not rule it out.
pub fn dissociated_extraction_mod_v(
    g: &GroupSpec,
    table: &FourierTable,
    s_tail: &[u64],
    v: &DualSubgroup,
) -> Result<ModExtraction> {
    let s_tail = normalize_set(g, s_tail)?;
    if s_tail.is_empty() {
        return Err(Error::Argument("empty tail set".into()));
    }
    if let Some(&x) = s_tail.iter().find(|&&x| v.contains(x)) {
        return Err(Error::Argument(format!(
            "tail element {x} lies in V; the tail must avoid V entirely"
        )));
    }
    let q = quotient(g, &v.as_subgroup())?;

    // Strongest lift per class.
    let mut best: std::collections::BTreeMap<u64, u64> = std::collections::BTreeMap::new();
    for &xi in &s_tail {
        let cls = q.project(xi);
        debug_assert_ne!(cls, 0, "tail avoided V, class cannot be zero");
        let entry = best.entry(cls).or_insert(xi);
        let (m_new, m_old) = (table.magnitude(xi), table.magnitude(*entry));
        if m_new > m_old || (m_new == m_old && xi < *entry) {
            *entry = xi;
        }
    }
    let mut order: Vec<(u64, u64)> = best.into_iter().collect(); // (class, lift)
    order.sort_by(|&(c1, l1), &(c2, l2)| {
        table
            .magnitude(l2)
            .partial_cmp(&table.magnitude(l1))
            .unwrap()
            .then(c1.cmp(&c2))
            .then(l1.cmp(&l2))
    });

    let mut classes: Vec<u64> = Vec::new();
    let mut lifts: Vec<u64> = Vec::new();
    let mut span_guard_rejections = 0u64;
    for (cls, lift) in order {
        let mut cand = classes.clone();
        cand.push(cls);
        if !is_dissociated(&q.image, &cand)? {
            continue;
        }
        let mut gens = lifts.clone();
        gens.push(lift);
        let span = span_dual(g, &gens)?;
        let clash = span
            .elements
            .iter()
            .any(|&x| x != 0 && v.contains(x));
        if clash {
            span_guard_rejections += 1;
            continue;
        }
        classes.push(cls);
        lifts.push(lift);
    }
    let v_prime = span_dual(g, &lifts)?;
    debug_assert!(v_prime.elements.iter().all(|&x| x == 0 || !v.contains(x)));
    Ok(ModExtraction {
        classes,
        lifts,
        v_prime,
        span_guard_rejections,
    })
}
