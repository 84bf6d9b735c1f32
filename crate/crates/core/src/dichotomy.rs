//! Regime classification and the quotient-improvement step, plus the audits
//! that watch the claims those steps rely on.
//!
//! The improvement branch is a measurement, not a derivation: it builds the
//! quotient the argument prescribes, computes the doubling decrement as an
//! exact rational, and reports `Undetermined` whenever the measured decrement
//! is not positive or the witness machinery came up empty. Claimed floors
//! (`delta >= K^-C`, witness coefficient `>= lambda`) are evaluated and
//! recorded per instance, never assumed.

use crate::error::{Error, Result};
use crate::fourier::{additive_energy, dft_set, doubling_constant, normalize_set, rep_counts};
use crate::groups::{annihilator, quotient, span_dual, DualSubgroup, GroupSpec, Subgroup};
use crate::ratio::Rat;
use crate::spectrum::{
    chang_audit, dissociated_extraction_mod_v, extract_maximal_dissociated,
    large_spectrum_from_table, ChangReport,
};
use crate::structure::{
    concentration_beta, find_near_coset, paley_zygmund_certificate, NearCoset, PzCertificate,
};
use serde::{Deserialize, Serialize};

/// All tunable exponents and constants, with the explicit admissible choices
/// as defaults.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerConfig {
    /// Spectral threshold exponent: `tau = K^-c0`.
    pub c0: f64,
    /// Regime exponent: concentration threshold `1 - K^-c`.
    pub c: f64,
    /// Universal exponent budget for decrements, size floors, and covers.
    #[serde(rename = "C")]
    pub big_c: f64,
    /// Near-coset density slack.
    pub eps: f64,
    /// Potential exponent; must stay >= 2C + 4.
    pub gamma: f64,
    /// Chang-audit constant.
    #[serde(rename = "C_RC")]
    pub c_rc: f64,
    /// Target packet bias.
    pub packet_eps: f64,
    /// Packet failure probability; `None` applies the `K^-10` rule.
    pub packet_eta: Option<f64>,
    /// Packet size constant in `M = ceil(C_pkt eps^-2 ln(2|S|/eta))`.
    #[serde(rename = "C_pkt")]
    pub c_pkt: f64,
    /// Packet re-draw budget.
    pub packet_retries: u32,
    /// Bohr regularization window constant (`|theta| <= reg_c / d`).
    pub reg_c: f64,
    /// Bohr regularization grid resolution.
    pub reg_grid: u32,
    /// Root seed for every randomized routine.
    pub seed: u64,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            c0: 1.0 / 16.0,
            c: 1.0 / 32.0,
            big_c: 2.0,
            eps: 0.05,
            gamma: 16.0,
            c_rc: 8.0,
            packet_eps: 0.2,
            packet_eta: None,
            c_pkt: 2.0,
            packet_retries: 16,
            reg_c: 0.01,
            reg_grid: 64,
            seed: 42,
        }
    }
}

impl LedgerConfig {
    /// Named presets for the two published exponent choices that conflict:
    /// `ledger-C` keeps `c0 = 1/16`; `ledger-S2` uses `c0 = 1/4 + 1/64`, the
    /// smallest grid value satisfying the bookkeeping constraint `c0 > 1/4`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "ledger-C" => Ok(Self::default()),
            "ledger-S2" => Ok(LedgerConfig {
                c0: 0.265625,
                ..Self::default()
            }),
            other => Err(Error::Argument(format!(
                "unknown preset {other:?}; expected ledger-C or ledger-S2"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c0", self.c0),
            ("c", self.c),
            ("C", self.big_c),
            ("gamma", self.gamma),
            ("C_RC", self.c_rc),
            ("C_pkt", self.c_pkt),
            ("reg_c", self.reg_c),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("eps", self.eps), ("packet_eps", self.packet_eps)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Argument(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if let Some(eta) = self.packet_eta {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(Error::Argument(format!(
                    "packet_eta must lie in (0,1), got {eta}"
                )));
            }
        }
        if self.gamma < 2.0 * self.big_c + 4.0 {
            return Err(Error::Argument(format!(
                "gamma = {} violates gamma >= 2C + 4 = {}",
                self.gamma,
                2.0 * self.big_c + 4.0
            )));
        }
        if self.reg_grid < 2 {
            return Err(Error::Argument("reg_grid must be at least 2".into()));
        }
        if self.packet_retries == 0 {
            return Err(Error::Argument("packet_retries must be at least 1".into()));
        }
        Ok(())
    }

    /// Packet failure probability for a given doubling constant.
    pub fn packet_eta_for(&self, k: f64) -> f64 {
        self.packet_eta
            .unwrap_or_else(|| k.powf(-10.0).clamp(1e-12, 0.5))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeKind {
    Concentrated,
    Gray,
    Dispersed,
}

/// Where the L4 mass fraction `beta` falls relative to `1 - K^-c`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegimeClass {
    pub kind: RegimeKind,
    pub beta: f64,
    pub doubling: Rat,
    /// Gray-zone floor `1 - 2 K^-c`.
    pub lower_threshold: f64,
    /// Concentration threshold `1 - K^-c`.
    pub upper_threshold: f64,
}

/// Classify against the concentration thresholds. Doubling below 2 is
/// Concentrated unconditionally: such sets are already near-cosets and the
/// dichotomy assumes `K >= 2`.
pub fn classify_regime(
    g: &GroupSpec,
    a: &[u64],
    v: &DualSubgroup,
    cfg: &LedgerConfig,
) -> Result<RegimeClass> {
    let a = normalize_set(g, a)?;
    let k = doubling_constant(g, &a)?;
    let beta = concentration_beta(g, &a, v)?.beta;
    let kf = k.to_f64();
    let upper = 1.0 - kf.powf(-cfg.c);
    let lower = 1.0 - 2.0 * kf.powf(-cfg.c);
    let kind = if k < Rat::int(2) || beta >= upper {
        RegimeKind::Concentrated
    } else if beta >= lower {
        RegimeKind::Gray
    } else {
        RegimeKind::Dispersed
    };
    Ok(RegimeClass {
        kind,
        beta,
        doubling: k,
        lower_threshold: lower,
        upper_threshold: upper,
    })
}

/// `{xi not in V : |fhat(xi)| >= lambda}`, ties included.
pub fn tail_level_set(g: &GroupSpec, a: &[u64], v: &DualSubgroup, lambda: f64) -> Result<Vec<u64>> {
    if !(lambda > 0.0) {
        return Err(Error::Argument(format!("lambda must be positive, got {lambda}")));
    }
    let a = normalize_set(g, a)?;
    let table = dft_set(g, &a)?;
    let guard = lambda * 1e-12;
    Ok(g.elements()
        .filter(|&xi| !v.contains(xi) && table.magnitude(xi) >= lambda - guard)
        .collect())
}

/// The energy-to-doubling transfer at one frequency.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyDoublingCheck {
    pub xi: u64,
    /// `|fhat(xi)| / alpha`.
    pub eta: f64,
    pub alpha: f64,
    pub sum_fourth: f64,
    /// `alpha^4 (1 + eta^4)`: two terms of the L4 sum, so the bound is
    /// algebraically forced for any nonzero frequency.
    pub lower_bound: f64,
    /// `sum_fourth / alpha^4 - 1`, the measured boost.
    pub energy_boost: f64,
    pub ok: bool,
}

/// Verify `sum |fhat|^4 >= alpha^4 (1 + eta^4)` at a nonzero frequency. The
/// zero frequency is rejected: its term IS the `alpha^4` baseline, and
/// counting it twice would make the claim false (take `A = G`).
pub fn energy_to_doubling_check(g: &GroupSpec, a: &[u64], xi: u64) -> Result<EnergyDoublingCheck> {
    if xi == 0 {
        return Err(Error::Argument(
            "energy-to-doubling transfer requires a nonzero frequency".into(),
        ));
    }
    let a = normalize_set(g, a)?;
    if a.is_empty() {
        return Err(Error::Argument("energy transfer on the empty set".into()));
    }
    if xi >= g.order() {
        return Err(Error::Argument(format!("frequency {xi} outside the dual group")));
    }
    let table = dft_set(g, &a)?;
    let alpha = a.len() as f64 / g.order() as f64;
    let eta = table.magnitude(xi) / alpha;
    let sum_fourth = table.sum_fourth();
    let a4 = alpha.powi(4);
    let lower_bound = a4 * (1.0 + eta.powi(4));
    let energy_boost = sum_fourth / a4 - 1.0;
    Ok(EnergyDoublingCheck {
        xi,
        eta,
        alpha,
        sum_fourth,
        lower_bound,
        energy_boost,
        ok: sum_fourth >= lower_bound * (1.0 - 1e-9),
    })
}

/// Measured facts about one attempted decrement.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecrementReport {
    /// `|fhat_{A'}(chi*)| / alpha'` on the quotient.
    pub eta: f64,
    /// `|fhat(xi*)|` upstairs.
    pub parent_coefficient: f64,
    /// `|fhat_{A'}(chi*)|` downstairs. The argument wants this `>= lambda`,
    /// but that rests on the indicator reading of the quotient lift, which
    /// fails for non-saturated sets; hence it is measured.
    pub quotient_coefficient: f64,
    pub lambda: f64,
    pub witness_coefficient_ok: bool,
    /// `sum |fhat_{A'}|^4 / alpha'^4 - 1`.
    pub energy_boost: f64,
    /// Boost >= eta^4 (forced; a failure is an implementation bug).
    pub e2d_ok: bool,
    /// `K - K'`, exact.
    pub delta: Rat,
    /// Claimed floor `K^-C`.
    pub floor: f64,
    pub floor_ok: bool,
}

/// Everything worth keeping when the improvement branch cannot return a
/// positive decrement (or even when it can; attached to outcomes for audit).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ImprovementDiagnostics {
    pub lambda: f64,
    pub tail_size: usize,
    pub extracted_classes: usize,
    pub span_guard_rejections: u64,
    pub v_prime_order: Option<u64>,
    pub image_order: Option<u64>,
    pub a_prime_size: Option<usize>,
    pub delta: Option<Rat>,
    pub size_floor_ok: Option<bool>,
}

/// Outcome of one dichotomy step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum PSLOutcome {
    NearCoset(NearCoset),
    Improvement {
        h_prime: Subgroup,
        image: GroupSpec,
        a_prime: Vec<u64>,
        /// `K - K'`, exact and positive.
        delta: Rat,
        /// Strongest extracted tail frequency (a parent dual element).
        witness: u64,
        v_prime: DualSubgroup,
        decrement: DecrementReport,
        diagnostics: ImprovementDiagnostics,
    },
    Undetermined {
        reason: String,
        best_coset: Option<NearCoset>,
        improvement: Option<ImprovementDiagnostics>,
    },
}

impl PSLOutcome {
    pub fn kind(&self) -> &'static str {
        match self {
            PSLOutcome::NearCoset(_) => "near-coset",
            PSLOutcome::Improvement { .. } => "improvement",
            PSLOutcome::Undetermined { .. } => "undetermined",
        }
    }
}

/// The quotient-improvement branch. Requires the regime to be Gray or
/// Dispersed; the threshold is `lambda = tau alpha / 2`, refined to
/// `tau alpha / 4` in the gray zone.
pub fn improvement_step(
    g: &GroupSpec,
    a: &[u64],
    v: &DualSubgroup,
    cfg: &LedgerConfig,
) -> Result<PSLOutcome> {
    let a = normalize_set(g, a)?;
    if a.is_empty() {
        return Err(Error::Argument("improvement step on the empty set".into()));
    }
    let regime = classify_regime(g, &a, v, cfg)?;
    let gray = match regime.kind {
        RegimeKind::Concentrated => {
            return Err(Error::Argument(
                "improvement step requires the Gray or Dispersed regime".into(),
            ))
        }
        RegimeKind::Gray => true,
        RegimeKind::Dispersed => false,
    };
    let k = regime.doubling;
    let alpha = a.len() as f64 / g.order() as f64;
    let tau = k.to_f64().powf(-cfg.c0);
    let lambda = if gray { 0.25 * tau * alpha } else { 0.5 * tau * alpha };

    let mut diag = ImprovementDiagnostics {
        lambda,
        ..Default::default()
    };
    let s_tail = tail_level_set(g, &a, v, lambda)?;
    diag.tail_size = s_tail.len();
    if s_tail.is_empty() {
        return Ok(PSLOutcome::Undetermined {
            reason: "no tail mass at lambda".into(),
            best_coset: None,
            improvement: Some(diag),
        });
    }

    let table = dft_set(g, &a)?;
    let extraction = dissociated_extraction_mod_v(g, &table, &s_tail, v)?;
    diag.extracted_classes = extraction.classes.len();
    diag.span_guard_rejections = extraction.span_guard_rejections;
    if extraction.lifts.is_empty() {
        return Ok(PSLOutcome::Undetermined {
            reason: "dissociated extraction produced no lifts".into(),
            best_coset: None,
            improvement: Some(diag),
        });
    }
    let v_prime = extraction.v_prime.clone();
    diag.v_prime_order = Some(v_prime.order());
    let witness = extraction.lifts[0];

    let h_prime = annihilator(g, &v_prime);
    let q = quotient(g, &h_prime)?;
    let a_prime = q.project_set(&a);
    diag.image_order = Some(q.image.order());
    diag.a_prime_size = Some(a_prime.len());

    let k_prime = doubling_constant(&q.image, &a_prime)?;
    let delta = k - k_prime;
    diag.delta = Some(delta);
    let size_floor_ok = (a_prime.len() as f64) + 1e-9
        >= k.to_f64().powf(-cfg.big_c) * a.len() as f64;
    diag.size_floor_ok = Some(size_floor_ok);

    // locate the quotient character whose pullback is the witness
    let mut chi_star = None;
    for eta in q.image.elements() {
        if q.pull_back_character(eta)? == witness {
            chi_star = Some(eta);
            break;
        }
    }
    let chi_star = chi_star.ok_or_else(|| {
        Error::Shape("witness frequency has no quotient character; span/annihilator mismatch".into())
    })?;
    let image_table = dft_set(&q.image, &a_prime)?;
    let alpha_prime = a_prime.len() as f64 / q.image.order() as f64;
    let quotient_coefficient = image_table.magnitude(chi_star);
    let parent_coefficient = table.magnitude(witness);
    let eta_q = quotient_coefficient / alpha_prime;
    let boost = image_table.sum_fourth() / alpha_prime.powi(4) - 1.0;
    let floor = k.to_f64().powf(-cfg.big_c);
    let decrement = DecrementReport {
        eta: eta_q,
        parent_coefficient,
        quotient_coefficient,
        lambda,
        witness_coefficient_ok: quotient_coefficient >= lambda * (1.0 - 1e-9),
        energy_boost: boost,
        e2d_ok: boost >= eta_q.powi(4) * (1.0 - 1e-9),
        delta,
        floor,
        floor_ok: delta.to_f64() >= floor - 1e-12,
    };

    if delta.is_positive() && size_floor_ok {
        Ok(PSLOutcome::Improvement {
            h_prime,
            image: q.image,
            a_prime,
            delta,
            witness,
            v_prime,
            decrement,
            diagnostics: diag,
        })
    } else {
        let reason = if !delta.is_positive() {
            format!("measured decrement {delta} is not positive")
        } else {
            "image set fell below the size floor".into()
        };
        Ok(PSLOutcome::Undetermined {
            reason,
            best_coset: None,
            improvement: Some(diag),
        })
    }
}

/// Both printed inequalities of the compression lemma, measured.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct L4CompressionAudit {
    pub tau: f64,
    pub doubling: Rat,
    pub spectrum_size: usize,
    pub mass_in_spec: f64,
    pub mass_total: f64,
    pub tail_mass: f64,
    /// `(1 - K^-c) * mass_total`.
    pub compress_rhs: f64,
    pub compress_ok: bool,
    /// `K^-c alpha^2`, the poly-tail form.
    pub tail_poly_rhs: f64,
    pub tail_poly_ok: bool,
    /// Exponent at which the compression inequality becomes tight, when the
    /// tail is nonempty and `K > 1`.
    pub tight_c: Option<f64>,
}

pub fn l4_compression_audit(g: &GroupSpec, a: &[u64], cfg: &LedgerConfig) -> Result<L4CompressionAudit> {
    let a = normalize_set(g, a)?;
    if a.is_empty() {
        return Err(Error::Argument("compression audit on the empty set".into()));
    }
    let k = doubling_constant(g, &a)?;
    let kf = k.to_f64();
    let tau = kf.powf(-cfg.c0);
    let table = dft_set(g, &a)?;
    let spec = large_spectrum_from_table(&table, a.len(), tau.min(1.0));
    let mass_total = table.sum_fourth();
    let mass_in_spec: f64 = spec
        .members
        .iter()
        .map(|&xi| table.magnitude(xi).powi(4))
        .sum();
    let tail_mass = (mass_total - mass_in_spec).max(0.0);
    let alpha = a.len() as f64 / g.order() as f64;
    let compress_rhs = (1.0 - kf.powf(-cfg.c)) * mass_total;
    let tail_poly_rhs = kf.powf(-cfg.c) * alpha * alpha;
    let tight_c = if tail_mass > 0.0 && kf > 1.0 {
        Some(-(tail_mass / mass_total).ln() / kf.ln())
    } else {
        None
    };
    Ok(L4CompressionAudit {
        tau,
        doubling: k,
        spectrum_size: spec.members.len(),
        mass_in_spec,
        mass_total,
        tail_mass,
        compress_rhs,
        compress_ok: mass_in_spec >= compress_rhs - 1e-12 * mass_total,
        tail_poly_rhs,
        tail_poly_ok: tail_mass <= tail_poly_rhs + 1e-12,
        tight_c,
    })
}

/// Popular-sums extraction result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BsgReport {
    pub boost_required: f64,
    pub boost_measured: f64,
    pub popular_sums: usize,
    pub a0: Vec<u64>,
    pub retained_fraction: Rat,
    pub doubling_a: Rat,
    pub doubling_a0: Rat,
    /// Exhaustive comparison, available at `|A| <= 10`: the smallest doubling
    /// achievable by any subset at least as large as `A0`.
    pub oracle: Option<BsgOracle>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BsgOracle {
    pub best: Vec<u64>,
    pub doubling: Rat,
}

const BSG_ORACLE_LIMIT: usize = 10;

/// Sumset of a bitmask-coded subset of a cyclic group of order `n <= 64`.
fn cyclic_sumset_mask(n: u32, mask: u64) -> u64 {
    let keep = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut out = 0u64;
    let mut rest = mask;
    while rest != 0 {
        let b = rest.trailing_zeros();
        rest &= rest - 1;
        out |= if b == 0 {
            mask
        } else {
            ((mask << b) | (mask >> (n - b))) & keep
        };
    }
    out
}

/// Smallest doubling over subsets of `a` with at least `min_size` elements.
pub fn exhaustive_best_subset(g: &GroupSpec, a: &[u64], min_size: usize) -> Result<BsgOracle> {
    let a = normalize_set(g, a)?;
    if a.len() > BSG_ORACLE_LIMIT {
        return Err(Error::Budget {
            what: "exhaustive subset search",
            size: a.len(),
            limit: BSG_ORACLE_LIMIT,
        });
    }
    if a.is_empty() || min_size > a.len() || min_size == 0 {
        return Err(Error::Argument("subset search needs 1 <= min_size <= |A|".into()));
    }
    let n = a.len();
    let cyclic_fast = g.rank() == 1 && g.order() <= 64;
    let mut best: Option<(Rat, Vec<u64>)> = None;
    for mask in 1u32..(1u32 << n) {
        if (mask.count_ones() as usize) < min_size {
            continue;
        }
        let subset: Vec<u64> = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| a[i]).collect();
        let d = if cyclic_fast {
            let m = subset.iter().fold(0u64, |acc, &x| acc | 1u64 << x);
            let s = cyclic_sumset_mask(g.order() as u32, m);
            Rat::from_counts(s.count_ones() as u128, subset.len() as u128)
        } else {
            doubling_constant(g, &subset)?
        };
        match &best {
            Some((bd, bset))
                if *bd < d || (*bd == d && bset.len() >= subset.len()) => {}
            _ => best = Some((d, subset)),
        }
    }
    let (doubling, best) = best.map(|(d, s)| (d, s)).unwrap();
    Ok(BsgOracle { best, doubling })
}

/// Constructive popular-sums core extraction. The popularity threshold is
/// half the mean-square-weighted representation level `E / (2|A|^2)`, and the
/// retained elements are those meeting at least half the median participation
/// count; both comparisons are exact integer arithmetic.
pub fn bsg_extract(g: &GroupSpec, a: &[u64], beta_boost: f64) -> Result<BsgReport> {
    let a = normalize_set(g, a)?;
    if a.is_empty() {
        return Err(Error::Argument("extraction from the empty set".into()));
    }
    let energy = additive_energy(g, &a)?;
    let e = energy.combinatorial;
    let size = a.len() as u128;
    let order = g.order() as f64;
    let boost_measured = (e as f64) * order / (size.pow(4) as f64) - 1.0;
    if boost_measured + 1e-12 < beta_boost {
        return Err(Error::Argument(format!(
            "energy boost {boost_measured:.6} is below the required {beta_boost:.6}"
        )));
    }
    let r = rep_counts(g, &a)?;
    // popular: r(s) >= E / (2|A|^2)
    let popular: Vec<bool> = r
        .iter()
        .map(|&c| 2 * size * size * (c as u128) >= e)
        .collect();
    let popular_sums = popular.iter().filter(|&&p| p).count();
    let participation: Vec<u64> = a
        .iter()
        .map(|&x| a.iter().filter(|&&y| popular[g.add(x, y) as usize]).count() as u64)
        .collect();
    let mut sorted = participation.clone();
    sorted.sort_unstable();
    let median = sorted[(sorted.len() - 1) / 2];
    let a0: Vec<u64> = a
        .iter()
        .zip(&participation)
        .filter(|&(_, &p)| 2 * p >= median)
        .map(|(&x, _)| x)
        .collect();
    let doubling_a = Rat::from_counts(energy.sumset_size as u128, size);
    let doubling_a0 = doubling_constant(g, &a0)?;
    let oracle = if a.len() <= BSG_ORACLE_LIMIT {
        Some(exhaustive_best_subset(g, &a, a0.len())?)
    } else {
        None
    };
    Ok(BsgReport {
        boost_required: beta_boost,
        boost_measured,
        popular_sums,
        retained_fraction: Rat::from_counts(a0.len() as u128, size),
        a0,
        doubling_a,
        doubling_a0,
        oracle,
    })
}

/// Coset cover of `A` by translates of `H`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CosetCover {
    pub m: usize,
    /// Canonical (smallest-index) representative per coset, ascending.
    pub representatives: Vec<u64>,
    pub doubling: Rat,
    /// `m <= K^C`.
    pub count_ok: bool,
    /// `|H| <= K^C |A|`.
    pub size_ok: bool,
}

pub fn coset_cover(g: &GroupSpec, a: &[u64], h: &Subgroup, big_c: f64) -> Result<CosetCover> {
    let a = normalize_set(g, a)?;
    if a.is_empty() {
        return Err(Error::Argument("cover of the empty set".into()));
    }
    let mut seen = vec![false; g.order() as usize];
    let mut reps = Vec::new();
    for x in g.elements() {
        if seen[x as usize] {
            continue;
        }
        let coset: Vec<u64> = h.elements.iter().map(|&t| g.add(x, t)).collect();
        for &y in &coset {
            seen[y as usize] = true;
        }
        if coset.iter().any(|y| a.binary_search(y).is_ok()) {
            reps.push(x);
        }
    }
    let k = doubling_constant(g, &a)?;
    let budget = k.to_f64().powf(big_c);
    Ok(CosetCover {
        m: reps.len(),
        count_ok: (reps.len() as f64) <= budget + 1e-9,
        size_ok: (h.elements.len() as f64) <= budget * a.len() as f64 + 1e-9,
        representatives: reps,
        doubling: k,
    })
}

/// Shape audit of the covering upgrade: `K <= C K0^C theta^-c`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoveringUpgradeAudit {
    pub theta: Rat,
    pub doubling: Rat,
    pub doubling_core: Rat,
    pub bound: f64,
    pub ok: bool,
}

pub fn covering_upgrade_audit(
    g: &GroupSpec,
    a: &[u64],
    a0: &[u64],
    cfg: &LedgerConfig,
) -> Result<CoveringUpgradeAudit> {
    let a = normalize_set(g, a)?;
    let a0 = normalize_set(g, a0)?;
    if a0.is_empty() {
        return Err(Error::Argument("covering audit needs a nonempty core".into()));
    }
    if !a0.iter().all(|x| a.binary_search(x).is_ok()) {
        return Err(Error::Argument("core must be a subset of the ambient set".into()));
    }
    let theta = Rat::from_counts(a0.len() as u128, a.len() as u128);
    let k = doubling_constant(g, &a)?;
    let k0 = doubling_constant(g, &a0)?;
    let bound = cfg.big_c * k0.to_f64().powf(cfg.big_c) * theta.to_f64().powf(-cfg.c);
    Ok(CoveringUpgradeAudit {
        theta,
        doubling: k,
        doubling_core: k0,
        bound,
        ok: k.to_f64() <= bound + 1e-9,
    })
}

/// One full dichotomy step with every intermediate artifact attached.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PslStepReport {
    pub doubling: Rat,
    pub alpha: Rat,
    pub tau: f64,
    pub spectrum_size: usize,
    pub dissociated: Vec<u64>,
    pub v_order: u64,
    pub chang: ChangReport,
    pub regime: RegimeClass,
    /// Paley-Zygmund certificate for the concentrated branch.
    pub pz: Option<PzCertificate>,
    /// Whether `eps <= sqrt(c * c1)/2` held when a near-coset was returned.
    pub eps_constraint_ok: Option<bool>,
    pub outcome: PSLOutcome,
}

/// Compose the full step: spectrum, dissociated span, regime, then either the
/// near-coset search or the quotient improvement.
pub fn psl_step(g: &GroupSpec, a: &[u64], cfg: &LedgerConfig) -> Result<PslStepReport> {
    cfg.validate()?;
    let a = normalize_set(g, a)?;
    if a.is_empty() {
        return Err(Error::Argument("dichotomy step on the empty set".into()));
    }
    let k = doubling_constant(g, &a)?;
    let alpha = Rat::from_counts(a.len() as u128, g.order() as u128);
    let tau = k.to_f64().powf(-cfg.c0).min(1.0);
    let table = dft_set(g, &a)?;
    let spec = large_spectrum_from_table(&table, a.len(), tau);
    let d = extract_maximal_dissociated(g, &table, &spec.members)?;
    let v = span_dual(g, &d.members)?;
    let chang = chang_audit(g, &a, tau, cfg.c_rc)?;
    let regime = classify_regime(g, &a, &v, cfg)?;

    let mut pz = None;
    let mut eps_constraint_ok = None;
    let outcome = match regime.kind {
        RegimeKind::Concentrated => {
            let h = annihilator(g, &v);
            let cert = paley_zygmund_certificate(g, &a, &h, 0.5)?;
            eps_constraint_ok = Some(cfg.eps <= 0.5 * (cfg.c * cert.measured_c1).sqrt());
            pz = Some(cert);
            match find_near_coset(g, &a, &h, cfg.eps, cfg.big_c)? {
                Some(nc) => PSLOutcome::NearCoset(nc),
                None => {
                    let best = crate::structure::best_coset(g, &a, &h, cfg.big_c)?;
                    PSLOutcome::Undetermined {
                        reason: "no coset reached the density threshold".into(),
                        best_coset: Some(best),
                        improvement: None,
                    }
                }
            }
        }
        RegimeKind::Gray | RegimeKind::Dispersed => improvement_step(g, &a, &v, cfg)?,
    };
    Ok(PslStepReport {
        doubling: k,
        alpha,
        tau,
        spectrum_size: spec.members.len(),
        dissociated: d.members,
        v_order: v.order(),
        chang,
        regime,
        pz,
        eps_constraint_ok,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::sumset;
    use crate::groups::enumerate_subgroup;

    fn z(n: u64) -> GroupSpec {
        GroupSpec::cyclic(n).unwrap()
    }

    #[test]
    fn config_defaults_validate_and_presets_differ() {
        let cfg = LedgerConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.gamma, 4.0 * cfg.big_c + 8.0);
        let s2 = LedgerConfig::preset("ledger-S2").unwrap();
        assert!(s2.c0 > 0.25);
        s2.validate().unwrap();
        assert!(LedgerConfig::preset("ledger-X").is_err());
    }

    #[test]
    fn config_rejects_small_gamma() {
        let cfg = LedgerConfig {
            gamma: 7.9,
            ..LedgerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_eta_rule_tracks_doubling() {
        let cfg = LedgerConfig::default();
        assert_eq!(cfg.packet_eta_for(1.0), 0.5);
        assert!((cfg.packet_eta_for(2.0) - 2.0f64.powf(-10.0)).abs() < 1e-15);
        let fixed = LedgerConfig {
            packet_eta: Some(0.05),
            ..cfg
        };
        assert_eq!(fixed.packet_eta_for(100.0), 0.05);
    }

    #[test]
    fn subgroup_classifies_concentrated() {
        let g = z(12);
        let h = enumerate_subgroup(&g, &[4]).unwrap();
        let v = crate::groups::dual_annihilator(&g, &h);
        let cfg = LedgerConfig::default();
        let regime = classify_regime(&g, &h.elements, &v, &cfg).unwrap();
        assert_eq!(regime.kind, RegimeKind::Concentrated);
        assert!((regime.beta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_thresholds_partition() {
        // checks only the threshold arithmetic on a K >= 2 instance
        let g = z(16);
        let a = vec![0u64, 1, 2, 5, 11];
        let cfg = LedgerConfig::default();
        let v = DualSubgroup::trivial();
        let regime = classify_regime(&g, &a, &v, &cfg).unwrap();
        let kf = regime.doubling.to_f64();
        assert!(kf >= 2.0);
        assert!((regime.upper_threshold - (1.0 - kf.powf(-cfg.c))).abs() < 1e-15);
        assert!((regime.lower_threshold - (1.0 - 2.0 * kf.powf(-cfg.c))).abs() < 1e-15);
        let expected = if regime.beta >= regime.upper_threshold {
            RegimeKind::Concentrated
        } else if regime.beta >= regime.lower_threshold {
            RegimeKind::Gray
        } else {
            RegimeKind::Dispersed
        };
        assert_eq!(regime.kind, expected);
    }

    #[test]
    fn small_doubling_is_concentrated_unconditionally() {
        let g = z(8);
        let a = vec![0u64, 4]; // K = 1
        let cfg = LedgerConfig::default();
        let regime = classify_regime(&g, &a, &DualSubgroup::trivial(), &cfg).unwrap();
        assert_eq!(regime.kind, RegimeKind::Concentrated);
    }

    #[test]
    fn tail_level_set_avoids_v_and_respects_magnitude_cap() {
        let g = z(12);
        let h = enumerate_subgroup(&g, &[4]).unwrap(); // {0,4,8}
        let v = crate::groups::dual_annihilator(&g, &h); // {0,3,6,9}
        // A = H: spectrum is exactly V, so any positive lambda leaves nothing
        let tail = tail_level_set(&g, &h.elements, &v, 1e-6).unwrap();
        assert!(tail.is_empty());
        // lambda above alpha empties the tail for any indicator
        let a = vec![0u64, 1, 5];
        let tail = tail_level_set(&g, &a, &DualSubgroup::trivial(), 0.26).unwrap();
        assert!(tail.is_empty());
        // and every returned element avoids V
        let tail = tail_level_set(&g, &a, &v, 0.01).unwrap();
        assert!(tail.iter().all(|xi| !v.contains(*xi)));
        assert!(!tail.is_empty());
    }

    #[test]
    fn e2d_worked_instance_and_zero_rejection() {
        let g = z(8);
        let a = vec![0u64, 4];
        let check = energy_to_doubling_check(&g, &a, 2).unwrap();
        assert!((check.eta - 1.0).abs() < 1e-12);
        assert!((check.sum_fourth - 1.0 / 64.0).abs() < 1e-15);
        assert!(check.lower_bound <= check.sum_fourth + 1e-15);
        assert!(check.ok);
        assert!(energy_to_doubling_check(&g, &a, 0).is_err());
    }

    #[test]
    fn e2d_vanishing_coefficient_is_trivial() {
        let g = z(4);
        let a = vec![0u64, 1, 2, 3];
        let check = energy_to_doubling_check(&g, &a, 1).unwrap();
        assert!(check.eta < 1e-12);
        assert!(check.ok);
    }

    #[test]
    fn e2d_subgroup_frequencies_are_extremal() {
        let g = z(12);
        let h = enumerate_subgroup(&g, &[4]).unwrap();
        let check = energy_to_doubling_check(&g, &h.elements, 3).unwrap();
        assert!((check.eta - 1.0).abs() < 1e-12);
        // index 4 subgroup: sum_fourth = 4 alpha^4 > 2 alpha^4
        assert!(check.sum_fourth > check.lower_bound * 1.5);
        assert!(check.ok);
    }

    #[test]
    fn periodic_union_never_reaches_improvement() {
        // A = H u (t+H) always has K <= 3/2 < 2, so the step classifies it
        // Concentrated and the improvement branch is unreachable; moreover
        // quotienting by H preserves the doubling exactly (delta would be 0).
        let g = z(24);
        let h = enumerate_subgroup(&g, &[6]).unwrap(); // {0,6,12,18}
        let mut a = h.elements.clone();
        for &t in &h.elements {
            a.push(g.add(1, t));
        }
        let k = doubling_constant(&g, &a).unwrap();
        assert_eq!(k, Rat::new(3, 2));
        let q = quotient(&g, &h).unwrap();
        let a_prime = q.project_set(&a);
        assert_eq!(doubling_constant(&q.image, &a_prime).unwrap(), k);

        let cfg = LedgerConfig::default();
        let report = psl_step(&g, &a, &cfg).unwrap();
        assert_eq!(report.regime.kind, RegimeKind::Concentrated);
        match &report.outcome {
            PSLOutcome::Undetermined { best_coset: Some(bc), .. } => {
                assert_eq!(bc.covered_fraction, Rat::new(1, 3));
            }
            other => panic!("expected Undetermined with a best coset, got {other:?}"),
        }
    }

    #[test]
    fn improvement_rejects_concentrated_regime() {
        let g = z(12);
        let h = enumerate_subgroup(&g, &[4]).unwrap();
        let v = crate::groups::dual_annihilator(&g, &h);
        let cfg = LedgerConfig::default();
        assert!(improvement_step(&g, &h.elements, &v, &cfg).is_err());
    }

    #[test]
    fn improvement_decrement_worked_instance() {
        // A = {0,1,3,7} in Z/12 with V trivial: E = 30, so beta =
        // alpha^4 / sum_fourth = (1/81)/(30/1728) = 0.711, and c = 3 puts
        // the instance in the Dispersed band (gray floor 0.824). lambda =
        // tau alpha / 2 = 0.158 keeps exactly the even frequencies
        // (|fhat| = 1/6 each; odd ones sqrt2/12 = 0.118); greedy extraction
        // spans {0,2,...,10}, H' = {0,6}, and the quotient image {0,1,3}
        // in Z/6 drops the doubling 9/4 -> 5/3.
        let g = z(12);
        let a = vec![0u64, 1, 3, 7];
        let cfg = LedgerConfig {
            c: 3.0,
            ..LedgerConfig::default()
        };
        let v = DualSubgroup::trivial();
        let regime = classify_regime(&g, &a, &v, &cfg).unwrap();
        assert_eq!(regime.kind, RegimeKind::Dispersed);
        let outcome = improvement_step(&g, &a, &v, &cfg).unwrap();
        match outcome {
            PSLOutcome::Improvement {
                h_prime,
                image,
                a_prime,
                delta,
                v_prime,
                decrement,
                ..
            } => {
                assert_eq!(h_prime.elements, vec![0, 6]);
                assert_eq!(v_prime.order(), 6);
                assert_eq!(image.order(), 6);
                assert_eq!(a_prime.len(), 3);
                assert_eq!(delta, Rat::new(7, 12));
                assert_eq!(doubling_constant(&image, &a_prime).unwrap(), Rat::new(5, 3));
                assert!(decrement.e2d_ok);
                assert!(decrement.floor_ok); // 7/12 >= (9/4)^-2
                assert!(decrement.witness_coefficient_ok);
            }
            other => panic!("expected an improvement, got {other:?}"),
        }
    }

    #[test]
    fn l4_audit_subgroup_passes_for_any_c() {
        let g = z(12);
        let h = enumerate_subgroup(&g, &[3]).unwrap();
        let cfg = LedgerConfig::default();
        let audit = l4_compression_audit(&g, &h.elements, &cfg).unwrap();
        assert!(audit.compress_ok);
        assert_eq!(audit.tail_mass, 0.0);
        assert!(audit.tight_c.is_none());
    }

    #[test]
    fn l4_audit_reports_tight_exponent() {
        let g = z(16);
        let a = vec![0u64, 1, 2, 5, 11];
        let cfg = LedgerConfig::default();
        let audit = l4_compression_audit(&g, &a, &cfg).unwrap();
        if let Some(tc) = audit.tight_c {
            let kf = audit.doubling.to_f64();
            let reconstructed = (1.0 - kf.powf(-tc)) * audit.mass_total;
            assert!((reconstructed - audit.mass_in_spec).abs() < 1e-9);
        } else {
            assert_eq!(audit.tail_mass, 0.0);
        }
    }

    #[test]
    fn bsg_subgroup_returns_everything() {
        let g = z(12);
        let h = enumerate_subgroup(&g, &[4]).unwrap(); // E = |A|^3 exactly
        let rep = bsg_extract(&g, &h.elements, 0.0).unwrap();
        assert_eq!(rep.a0, h.elements);
        assert_eq!(rep.doubling_a0, Rat::one());
        let oracle = rep.oracle.unwrap();
        assert_eq!(oracle.doubling, Rat::one());
    }

    #[test]
    fn bsg_interval_is_its_own_core() {
        let g = z(31);
        let a: Vec<u64> = (0..6).collect();
        let rep = bsg_extract(&g, &a, 0.0).unwrap();
        // intervals: popular sums form the middle band; every element
        // participates heavily, so the core keeps most of A
        assert!(rep.a0.len() * 2 >= a.len());
        let oracle = rep.oracle.unwrap();
        assert!(rep.doubling_a0.to_f64() <= 2.0 * oracle.doubling.to_f64() + 1e-12);
    }

    #[test]
    fn bsg_rejects_insufficient_boost() {
        let g = z(97);
        // Sidon-type set: E = 2|A|^2 - |A| = 45, the minimum, so the boost
        // is exactly 45 * 97 / 625 - 1 < 6
        let a = vec![0u64, 9, 23, 41, 77];
        let rep = bsg_extract(&g, &a, 0.0).unwrap();
        assert!((rep.boost_measured - (45.0 * 97.0 / 625.0 - 1.0)).abs() < 1e-9);
        assert!(bsg_extract(&g, &a, 6.0).is_err());
    }

    #[test]
    fn bsg_mask_sumset_matches_generic() {
        let g = z(24);
        let a = vec![0u64, 3, 5, 11, 17];
        let mask = a.iter().fold(0u64, |acc, &x| acc | 1 << x);
        let s = cyclic_sumset_mask(24, mask);
        let expect = sumset(&g, &a, &a).unwrap();
        let got: Vec<u64> = (0..24).filter(|&i| s >> i & 1 == 1).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn coset_cover_trivial_cases() {
        let g = z(12);
        let h = enumerate_subgroup(&g, &[4]).unwrap();
        // A inside one coset
        let cover = coset_cover(&g, &[1, 5], &h, 2.0).unwrap();
        assert_eq!(cover.m, 1);
        assert_eq!(cover.representatives, vec![1]);
        // H = {0}: one coset per element
        let h0 = enumerate_subgroup(&g, &[]).unwrap();
        let cover = coset_cover(&g, &[1, 5, 9], &h0, 2.0).unwrap();
        assert_eq!(cover.m, 3);
    }

    #[test]
    fn covering_upgrade_identity_core_passes() {
        let g = z(12);
        let a = vec![0u64, 1, 2, 5];
        let cfg = LedgerConfig::default();
        let audit = covering_upgrade_audit(&g, &a, &a, &cfg).unwrap();
        assert_eq!(audit.theta, Rat::one());
        assert_eq!(audit.doubling, audit.doubling_core);
        assert!(audit.ok);
    }

    #[test]
    fn covering_upgrade_half_subgroup() {
        let g = z(16);
        let h = enumerate_subgroup(&g, &[2]).unwrap(); // even residues
        let a0: Vec<u64> = vec![0, 2, 4, 6]; // half of H
        let cfg = LedgerConfig::default();
        let audit = covering_upgrade_audit(&g, &h.elements, &a0, &cfg).unwrap();
        assert_eq!(audit.theta, Rat::from_counts(1, 2));
        assert_eq!(audit.doubling, Rat::one());
        assert!(audit.doubling_core.to_f64() <= 2.0);
        assert!(audit.ok);
    }

    #[test]
    fn psl_step_subgroup_is_near_coset() {
        let g = z(12);
        let h = enumerate_subgroup(&g, &[4]).unwrap();
        let cfg = LedgerConfig::default();
        let report = psl_step(&g, &h.elements, &cfg).unwrap();
        match &report.outcome {
            PSLOutcome::NearCoset(nc) => {
                assert_eq!(nc.representative, 0);
                assert_eq!(nc.covered_fraction, Rat::one());
            }
            other => panic!("expected near-coset, got {other:?}"),
        }
        assert!(report.pz.is_some());
    }

    #[test]
    fn psl_step_full_group() {
        let g = z(9);
        let a: Vec<u64> = (0..9).collect();
        let cfg = LedgerConfig::default();
        let report = psl_step(&g, &a, &cfg).unwrap();
        match &report.outcome {
            PSLOutcome::NearCoset(nc) => assert_eq!(nc.covered_fraction, Rat::one()),
            other => panic!("expected near-coset, got {other:?}"),
        }
    }

    #[test]
    fn outcome_serialization_round_trips() {
        let g = z(12);
        let cfg = LedgerConfig::default();
        let report = psl_step(&g, &[0, 1, 3, 7], &cfg).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: PslStepReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report.outcome.kind(), back.outcome.kind());
        assert_eq!(report.doubling, back.doubling);
        let json2 = serde_json::to_string(&back).unwrap();
        assert_eq!(json, json2);
    }
}
