//! Subgroup projectors, L4 concentration, near-coset detection, the
//! Paley-Zygmund certificate, and the quotient Fourier-lift check.
//!
//! The projector onto a dual subgroup `V` is convolution with the uniform
//! probability measure on `H = annihilator(V)`; pointwise it is the exact
//! coset-average `x -> |A meet (x+H)| / |H|`, which we compute by integer
//! counting so the values are exact dyadic-style rationals stored in `f64`.
//! The Fourier-side support claims are identities, so a violation past
//! tolerance is reported as a hard `IdentityAudit` error, never a finding.

use crate::error::{Error, Result};
use crate::fourier::{dft_real, dft_set, doubling_constant, indicator, normalize_set};
use crate::groups::{dual_annihilator, push_forward, quotient, DualSubgroup, GroupSpec, Subgroup};
use crate::ratio::Rat;
use serde::{Deserialize, Serialize};

const SUPPORT_TOL: f64 = 1e-10;

/// Exact low/high decomposition of an indicator along a subgroup projector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProjectionSplit {
    /// `1_A * mu_H`, the coset-density function.
    pub low: Vec<f64>,
    /// `1_A - low`; together they re-sum to the indicator exactly.
    pub high: Vec<f64>,
    pub v: DualSubgroup,
    pub h: Subgroup,
    /// Largest `|lowhat|` found off `V` (identity says 0).
    pub low_off_support: f64,
    /// Largest `|highhat|` found on `V` (identity says 0).
    pub high_on_support: f64,
}

/// Convolve an arbitrary real function with `mu_H` by exact coset averaging.
pub fn project_function(g: &GroupSpec, f: &[f64], h: &Subgroup) -> Result<Vec<f64>> {
    if f.len() as u64 != g.order() {
        return Err(Error::Shape(format!(
            "function has {} entries on a group of order {}",
            f.len(),
            g.order()
        )));
    }
    let hn = h.elements.len() as f64;
    let mut out = vec![0.0f64; f.len()];
    for x in g.elements() {
        let mut acc = 0.0;
        for &t in &h.elements {
            acc += f[g.add(x, t) as usize];
        }
        out[x as usize] = acc / hn;
    }
    Ok(out)
}

/// Split `1_A` into its `V`-supported and `V`-complement parts via `mu_H`.
pub fn project(g: &GroupSpec, a: &[u64], h: &Subgroup) -> Result<ProjectionSplit> {
    let a = normalize_set(g, a)?;
    let ind = indicator(g, &a)?;
    let hn = h.elements.len() as f64;
    let mut low = vec![0.0f64; ind.len()];
    for x in g.elements() {
        let mut count = 0u64;
        for &t in &h.elements {
            if a.binary_search(&g.add(x, t)).is_ok() {
                count += 1;
            }
        }
        low[x as usize] = count as f64 / hn;
    }
    let high: Vec<f64> = ind.iter().zip(&low).map(|(i, l)| i - l).collect();
    let v = dual_annihilator(g, h);

    let low_hat = dft_real(g, &low)?;
    let high_hat = dft_real(g, &high)?;
    let mut low_off = 0.0f64;
    let mut high_on = 0.0f64;
    for xi in g.elements() {
        if v.contains(xi) {
            high_on = high_on.max(high_hat.magnitude(xi));
        } else {
            low_off = low_off.max(low_hat.magnitude(xi));
        }
    }
    if low_off > SUPPORT_TOL {
        return Err(Error::IdentityAudit {
            what: "projector low-component support",
            residual: low_off,
            tolerance: SUPPORT_TOL,
        });
    }
    if high_on > SUPPORT_TOL {
        return Err(Error::IdentityAudit {
            what: "projector high-component support",
            residual: high_on,
            tolerance: SUPPORT_TOL,
        });
    }
    Ok(ProjectionSplit {
        low,
        high,
        v,
        h: h.clone(),
        low_off_support: low_off,
        high_on_support: high_on,
    })
}

/// L4 mass fraction carried by a dual subgroup.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcentrationRatio {
    pub beta: f64,
    pub mass_in_v: f64,
    pub mass_total: f64,
}

pub fn concentration_beta(g: &GroupSpec, a: &[u64], v: &DualSubgroup) -> Result<ConcentrationRatio> {
    let a = normalize_set(g, a)?;
    if a.is_empty() {
        return Err(Error::Argument("concentration ratio of the empty set".into()));
    }
    let table = dft_set(g, &a)?;
    let mass_total = table.sum_fourth();
    let mass_in_v: f64 = v
        .elements
        .iter()
        .map(|&xi| table.magnitude(xi).powi(4))
        .sum();
    Ok(ConcentrationRatio {
        beta: mass_in_v / mass_total,
        mass_in_v,
        mass_total,
    })
}

/// A coset in which `A` is dense.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NearCoset {
    pub h: Subgroup,
    /// Smallest element index in the coset (canonical representative).
    pub representative: u64,
    /// `|A meet (x+H)| / |H|`, exact.
    pub covered_fraction: Rat,
    /// `|H| <= K^C |A|` under the supplied exponent.
    pub size_bound_ok: bool,
}

/// The coset of `H` holding the largest share of `A`, ties broken by the
/// smallest canonical representative. Never absent; thresholding is the
/// caller's business (`find_near_coset`).
pub fn best_coset(g: &GroupSpec, a: &[u64], h: &Subgroup, big_c: f64) -> Result<NearCoset> {
    let a = normalize_set(g, a)?;
    if a.is_empty() {
        return Err(Error::Argument("coset scan over the empty set".into()));
    }
    let order = g.order() as usize;
    let mut seen = vec![false; order];
    let mut best_rep = 0u64;
    let mut best_count = 0u64;
    for x in g.elements() {
        if seen[x as usize] {
            continue;
        }
        let mut count = 0u64;
        for &t in &h.elements {
            let y = g.add(x, t);
            seen[y as usize] = true;
            if a.binary_search(&y).is_ok() {
                count += 1;
            }
        }
        // strict improvement only: ascending x makes the tie-break canonical
        if count > best_count {
            best_count = count;
            best_rep = x;
        }
    }
    let k = doubling_constant(g, &a)?;
    let size_bound_ok =
        (h.elements.len() as f64) <= k.to_f64().powf(big_c) * a.len() as f64 + 1e-9;
    Ok(NearCoset {
        h: h.clone(),
        representative: best_rep,
        covered_fraction: Rat::from_counts(best_count as u128, h.elements.len() as u128),
        size_bound_ok,
    })
}

/// The best coset if its density reaches `1 - eps`, else `None`.
pub fn find_near_coset(
    g: &GroupSpec,
    a: &[u64],
    h: &Subgroup,
    eps: f64,
    big_c: f64,
) -> Result<Option<NearCoset>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Argument(format!("eps must lie in (0,1), got {eps}")));
    }
    let best = best_coset(g, a, h, big_c)?;
    if best.covered_fraction.to_f64() >= 1.0 - eps {
        Ok(Some(best))
    } else {
        Ok(None)
    }
}

/// Paley-Zygmund second-moment certificate for `e = 1_A * mu_H`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PzCertificate {
    pub theta: f64,
    /// Mean of the projected density (= alpha), exact.
    pub mean: Rat,
    /// `E[g^2]`, exact.
    pub second_moment: Rat,
    pub variance: Rat,
    /// `(1-theta)^2 mean^2 / E[g^2]`.
    pub bound: f64,
    /// `|{x : g(x) >= theta * mean}| / |G|`, exact.
    pub true_probability: Rat,
    /// The tail bound held (it must; this is a theorem).
    pub ok: bool,
    /// Measured `||1_A * mu_H||_2^2 / (alpha^2 |G|)`, the implied constant of
    /// the projected-L2 lower bound. Always >= 1 by Cauchy-Schwarz.
    pub measured_c1: f64,
}

pub fn paley_zygmund_certificate(
    g: &GroupSpec,
    a: &[u64],
    h: &Subgroup,
    theta: f64,
) -> Result<PzCertificate> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Argument(format!("theta must lie in (0,1), got {theta}")));
    }
    let a = normalize_set(g, a)?;
    if a.is_empty() {
        return Err(Error::Argument("Paley-Zygmund on the empty set".into()));
    }
    let order = g.order();
    let hn = h.elements.len() as u64;
    // exact fiber counts: g(x) = counts[x] / |H|
    let mut counts = vec![0u64; order as usize];
    for x in g.elements() {
        let mut c = 0u64;
        for &t in &h.elements {
            if a.binary_search(&g.add(x, t)).is_ok() {
                c += 1;
            }
        }
        counts[x as usize] = c;
    }
    let mean = Rat::from_counts(a.len() as u128, order as u128);
    let sum_sq: u128 = counts.iter().map(|&c| (c as u128) * (c as u128)).sum();
    let second_moment = Rat::new(sum_sq as i128, (order as i128) * (hn as i128) * (hn as i128));
    let variance = second_moment - mean * mean;
    let bound = (1.0 - theta) * (1.0 - theta) * mean.to_f64() * mean.to_f64()
        / second_moment.to_f64();
    // g(x) >= theta*alpha  <=>  counts[x] * |G| >= theta * |A| * |H|
    let rhs = theta * (a.len() as f64) * (hn as f64);
    let hits = counts
        .iter()
        .filter(|&&c| (c * order) as f64 >= rhs)
        .count() as u64;
    let true_probability = Rat::from_counts(hits as u128, order as u128);
    let ok = true_probability.to_f64() + 1e-12 >= bound;
    let measured_c1 = second_moment.to_f64() / (mean.to_f64() * mean.to_f64());
    Ok(PzCertificate {
        theta,
        mean,
        second_moment,
        variance,
        bound,
        true_probability,
        ok,
        measured_c1,
    })
}

/// One frequency's worth of the quotient-lift comparison.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LiftInstance {
    /// Parent dual element (lies in the annihilator-dual of `H'`).
    pub xi: u64,
    /// Corresponding character of the quotient.
    pub eta: u64,
    /// `|fhat(xi) - (averaged push-forward)hat(eta)|`; an identity, ~0.
    pub averaged_residual: f64,
    /// `|fhat(xi) - (indicator of image)hat(eta)|`; zero iff saturated.
    pub indicator_residual: f64,
}

/// Comparison of the two quotient readings of a Fourier coefficient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuotientLiftReport {
    /// Whether `A` is a union of `H'`-cosets.
    pub saturated: bool,
    pub max_averaged_residual: f64,
    pub max_indicator_residual: f64,
    /// Frequencies where the indicator reading misses tolerance.
    pub indicator_discrepancies: usize,
    pub instances: Vec<LiftInstance>,
    /// The indicator reading agreed everywhere iff `A` was saturated.
    pub consistent: bool,
}

/// For every character of `G/H'`, compare the parent coefficient with (a) the
/// transform of the averaged push-forward and (b) the transform of the image
/// set's indicator. (a) agreeing is an identity and failures are hard errors;
/// (b) agrees exactly when `A` is a union of cosets, and the report says
/// whether that bidirectional implication held.
pub fn quotient_lift_check(g: &GroupSpec, a: &[u64], h_prime: &Subgroup) -> Result<QuotientLiftReport> {
    let a = normalize_set(g, a)?;
    if a.is_empty() {
        return Err(Error::Argument("quotient lift of the empty set".into()));
    }
    let q = quotient(g, h_prime)?;
    let parent_hat = dft_set(g, &a)?;
    let pf = push_forward(&q, &indicator(g, &a)?, true)?;
    let pf_hat = dft_real(&q.image, &pf)?;
    let image_set = q.project_set(&a);
    let image_hat = dft_set(&q.image, &image_set)?;

    let saturated = a
        .iter()
        .all(|&x| h_prime.elements.iter().all(|&t| a.binary_search(&g.add(x, t)).is_ok()));

    let mut instances = Vec::with_capacity(q.image.order() as usize);
    let mut max_ab = 0.0f64;
    let mut max_ac = 0.0f64;
    let mut discrepancies = 0usize;
    for eta in q.image.elements() {
        let xi = q.pull_back_character(eta)?;
        let ab = (parent_hat.at(xi) - pf_hat.at(eta)).norm();
        let ac = (parent_hat.at(xi) - image_hat.at(eta)).norm();
        max_ab = max_ab.max(ab);
        max_ac = max_ac.max(ac);
        if ac > SUPPORT_TOL {
            discrepancies += 1;
        }
        instances.push(LiftInstance {
            xi,
            eta,
            averaged_residual: ab,
            indicator_residual: ac,
        });
    }
    if max_ab > SUPPORT_TOL {
        return Err(Error::IdentityAudit {
            what: "averaged push-forward coefficient lift",
            residual: max_ab,
            tolerance: SUPPORT_TOL,
        });
    }
    let consistent = (discrepancies == 0) == saturated;
    Ok(QuotientLiftReport {
        saturated,
        max_averaged_residual: max_ab,
        max_indicator_residual: max_ac,
        indicator_discrepancies: discrepancies,
        instances,
        consistent,
    })
}
