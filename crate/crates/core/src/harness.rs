//! Instance enumeration, the potential-ledger iteration, and the violation
//! scanner.
//!
//! Everything here is glue with teeth: it drives the per-module operations
//! over families of instances, checks each printed claim against what was
//! measured, and emits findings with a canonical ordering so that two runs
//! with the same seed produce byte-identical output.

use crate::dichotomy::{
    energy_to_doubling_check, l4_compression_audit, psl_step, LedgerConfig, PSLOutcome,
    PslStepReport, RegimeKind,
};
use crate::error::{Error, Result};
use crate::fourier::{
    additive_energy, dft_set, doubling_constant, indicator, normalize_set, parseval_audit,
    sumset, EnergyReport, ParsevalReport,
};
use crate::groups::{enumerate_subgroup, GroupSpec};
use crate::periodicity::{
    derive_seed, good_shifts, packet_l2_error, polybog_search, sample_packet_cfg, PolybogReport,
};
use crate::ratio::Rat;
use crate::spectrum::{large_spectrum, large_spectrum_from_table};
use crate::structure::quotient_lift_check;
use num_complex::Complex64;
use rand::seq::index::sample as index_sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const SCHEMA_VERSION: u32 = 1;

/// Step budgets and scan spaces are capped well below anything that could
/// run away on a desk machine.
const MAX_STEP_BUDGET: u32 = 10_000;
const MAX_EXHAUSTIVE_ORDER: u64 = 24;
const MAX_EXHAUSTIVE_SET: usize = 10;

// Domain-separation tags for per-instance seed derivation, so the sampling
// stream and the packet stream never alias.
const SAMPLE_TAG: u64 = 0x5341;
const PACKET_TAG: u64 = 0x504b;

/// `I(K, alpha) = K * alpha^-gamma`, the quantity the iteration drives down.
pub fn potential(k: Rat, alpha: Rat, gamma: f64) -> Result<f64> {
    if k < Rat::one() {
        return Err(Error::Argument(format!(
            "potential needs doubling >= 1, got {k}"
        )));
    }
    if !alpha.is_positive() || alpha > Rat::one() {
        return Err(Error::Argument(format!(
            "potential needs a density in (0, 1], got {alpha}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Argument(format!(
            "potential exponent must be positive, got {gamma}"
        )));
    }
    Ok(k.to_f64() * alpha.to_f64().powf(-gamma))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    /// The printed claim fails for a structural reason already on record.
    #[serde(rename = "erratum-class")]
    ErratumClass,
    /// A measured decrement (or the branch that should produce one) missed
    /// its floor.
    #[serde(rename = "decrement-miss")]
    DecrementMiss,
    /// A quantitative bound failed as stated.
    #[serde(rename = "bound-miss")]
    BoundMiss,
}

/// One lemma failure on one instance. `lhs`/`rhs` are the two sides of the
/// claim as measured; `detail` says which reading failed and where.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub lemma: String,
    pub group: Vec<u64>,
    pub set: Vec<u64>,
    pub config: LedgerConfig,
    pub lhs: f64,
    pub rhs: f64,
    pub severity: Severity,
    pub detail: String,
}

/// Canonical order: (lemma, group, set, detail). Ties beyond that are exact
/// duplicates and are dropped.
pub fn sort_findings(findings: &mut Vec<ViolationRecord>) {
    findings.sort_by(|a, b| {
        a.lemma
            .cmp(&b.lemma)
            .then_with(|| a.group.cmp(&b.group))
            .then_with(|| a.set.cmp(&b.set))
            .then_with(|| a.detail.cmp(&b.detail))
    });
    findings.dedup_by(|a, b| {
        a.lemma == b.lemma && a.group == b.group && a.set == b.set && a.detail == b.detail
    });
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalKind {
    NearCoset,
    Undetermined,
    BudgetExhausted,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationStep {
    pub j: u32,
    /// Ambient order at this level.
    pub order: u64,
    pub doubling: Rat,
    pub alpha: Rat,
    /// `I_j`.
    pub potential: f64,
    /// `ln(|G_j| / |G_{j+1}|)`; zero on the terminal step.
    pub codim: f64,
    pub outcome: String,
    pub delta: Option<Rat>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationTrace {
    pub steps: Vec<IterationStep>,
    /// Sum of the per-step codimensions, in nats.
    pub total_codim: f64,
    /// `K_0^(C+1)`: the claimed cap on accumulated codimension.
    pub codim_budget: f64,
    pub codim_ok: bool,
    pub step_budget: u32,
    pub terminal: TerminalKind,
    pub violations: Vec<ViolationRecord>,
    /// Full per-level artifacts, index-aligned with `steps`.
    pub reports: Vec<PslStepReport>,
}

/// Run the dichotomy until a terminal outcome or the step budget. Potential
/// monotonicity and both budgets are audited, never assumed: a failure lands
/// in `violations` and the trace keeps going where it can.
pub fn iterate_psl(
    g: &GroupSpec,
    a: &[u64],
    cfg: &LedgerConfig,
    budget: Option<u32>,
) -> Result<IterationTrace> {
    cfg.validate()?;
    let a0 = normalize_set(g, a)?;
    if a0.is_empty() {
        return Err(Error::Argument("iteration on the empty set".into()));
    }
    let k0 = doubling_constant(g, &a0)?;
    let codim_budget = k0.to_f64().powf(cfg.big_c + 1.0);
    let step_budget = match budget {
        Some(0) => return Err(Error::Argument("step budget must be at least 1".into())),
        Some(b) => b.min(MAX_STEP_BUDGET),
        None => codim_budget.ceil().clamp(1.0, MAX_STEP_BUDGET as f64) as u32,
    };

    let record = |lemma: &str, lhs: f64, rhs: f64, severity: Severity, detail: String| {
        ViolationRecord {
            lemma: lemma.into(),
            group: g.factors().to_vec(),
            set: a0.clone(),
            config: cfg.clone(),
            lhs,
            rhs,
            severity,
            detail,
        }
    };

    let mut g_cur = g.clone();
    let mut a_cur = a0.clone();
    let mut steps: Vec<IterationStep> = Vec::new();
    let mut reports: Vec<PslStepReport> = Vec::new();
    let mut violations: Vec<ViolationRecord> = Vec::new();
    let mut total_codim = 0.0f64;
    let mut prev_potential: Option<f64> = None;
    let mut j = 0u32;
    let terminal;

    loop {
        let report = psl_step(&g_cur, &a_cur, cfg)?;
        let i_j = potential(report.doubling, report.alpha, cfg.gamma)?;
        // K >= 1 and alpha <= 1 force I >= 1; a miss is a measurement bug.
        if i_j < 1.0 - 1e-12 {
            violations.push(record(
                "potential-floor",
                i_j,
                1.0,
                Severity::BoundMiss,
                format!("I_{j} fell below 1"),
            ));
        }
        if let Some(prev) = prev_potential {
            if i_j > prev * (1.0 + 1e-12) {
                violations.push(record(
                    "potential-monotone",
                    i_j,
                    prev,
                    Severity::BoundMiss,
                    format!("I_{j} exceeded I_{}", j - 1),
                ));
            }
        }
        prev_potential = Some(i_j);

        let mut step = IterationStep {
            j,
            order: g_cur.order(),
            doubling: report.doubling,
            alpha: report.alpha,
            potential: i_j,
            codim: 0.0,
            outcome: report.outcome.kind().to_string(),
            delta: None,
        };

        match &report.outcome {
            PSLOutcome::NearCoset(_) => {
                steps.push(step);
                reports.push(report);
                terminal = TerminalKind::NearCoset;
                break;
            }
            PSLOutcome::Undetermined { .. } => {
                steps.push(step);
                reports.push(report);
                terminal = TerminalKind::Undetermined;
                break;
            }
            PSLOutcome::Improvement {
                image,
                a_prime,
                delta,
                ..
            } => {
                let codim = (g_cur.order() as f64 / image.order() as f64).ln();
                step.codim = codim;
                step.delta = Some(*delta);
                total_codim += codim;
                let next_g = image.clone();
                let next_a = a_prime.clone();
                steps.push(step);
                reports.push(report);
                j += 1;
                if j >= step_budget {
                    violations.push(record(
                        "iteration-budget",
                        j as f64 + 1.0,
                        step_budget as f64,
                        Severity::BoundMiss,
                        "improvement chain still live when the step budget ran out".into(),
                    ));
                    terminal = TerminalKind::BudgetExhausted;
                    break;
                }
                g_cur = next_g;
                a_cur = next_a;
            }
        }
    }

    let codim_ok = total_codim <= codim_budget + 1e-9;
    if !codim_ok {
        violations.push(record(
            "codimension-budget",
            total_codim,
            codim_budget,
            Severity::BoundMiss,
            "accumulated codimension exceeded K_0^(C+1)".into(),
        ));
    }
    sort_findings(&mut violations);

    Ok(IterationTrace {
        steps,
        total_codim,
        codim_budget,
        codim_ok,
        step_budget,
        terminal,
        violations,
        reports,
    })
}

/// Which instances a scan visits.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ScanSpace {
    /// Every nonempty subset up to `max_size` of every listed group.
    Exhaustive {
        groups: Vec<Vec<u64>>,
        max_size: usize,
    },
    /// Seeded uniform draws: group, then size, then a subset of that size.
    Sampled {
        groups: Vec<Vec<u64>>,
        samples: u64,
        max_size: usize,
    },
}

impl ScanSpace {
    /// Cyclic 2..=12 plus small product groups; subsets up to ten elements.
    pub fn default_exhaustive() -> Self {
        let mut groups: Vec<Vec<u64>> = (2..=12u64).map(|n| vec![n]).collect();
        groups.push(vec![2, 2]);
        groups.push(vec![2, 4]);
        groups.push(vec![3, 3]);
        groups.push(vec![2, 2, 3]);
        ScanSpace::Exhaustive {
            groups,
            max_size: MAX_EXHAUSTIVE_SET,
        }
    }

    /// Moderate orders where exhaustion is hopeless but sampling is cheap.
    pub fn default_sampled(samples: u64) -> Self {
        let groups = vec![
            vec![16],
            vec![24],
            vec![36],
            vec![48],
            vec![64],
            vec![97],
            vec![2, 2, 2, 2],
            vec![4, 4],
        ];
        ScanSpace::Sampled {
            groups,
            samples,
            max_size: 12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_groups = |groups: &[Vec<u64>]| -> Result<Vec<GroupSpec>> {
            if groups.is_empty() {
                return Err(Error::Argument("scan space lists no groups".into()));
            }
            groups
                .iter()
                .map(|f| GroupSpec::new(f.clone()))
                .collect::<Result<Vec<_>>>()
        };
        match self {
            ScanSpace::Exhaustive { groups, max_size } => {
                let gs = check_groups(groups)?;
                if *max_size == 0 || *max_size > MAX_EXHAUSTIVE_SET {
                    return Err(Error::Argument(format!(
                        "exhaustive scans accept subset sizes 1..={MAX_EXHAUSTIVE_SET}, got {max_size}"
                    )));
                }
                for g in &gs {
                    if g.order() > MAX_EXHAUSTIVE_ORDER {
                        return Err(Error::Argument(format!(
                            "exhaustive scans stop at order {MAX_EXHAUSTIVE_ORDER}, got {}",
                            g.order()
                        )));
                    }
                }
                Ok(())
            }
            ScanSpace::Sampled {
                groups,
                samples,
                max_size,
            } => {
                check_groups(groups)?;
                if *samples == 0 {
                    return Err(Error::Argument("sampled scan with zero samples".into()));
                }
                if *max_size == 0 {
                    return Err(Error::Argument("sampled scan with zero subset size".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct PassFail {
    pub pass: u64,
    pub fail: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanSummary {
    pub space: ScanSpace,
    pub seed: u64,
    pub instances: u64,
    /// Per-lemma pass/fail tallies over all audited instances.
    pub aggregates: BTreeMap<String, PassFail>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanResult {
    pub summary: ScanSummary,
    pub findings: Vec<ViolationRecord>,
}

// The lemma registry. Aggregates and findings both key off these names.
const LEMMAS: &[&str] = &[
    "energy-lower",
    "energy-upper",
    "energy-to-doubling",
    "l4-compression",
    "tail-polynomial",
    "chang-size",
    "chang-mass",
    "near-coset-existence",
    "improvement-decrement",
    "decrement-floor",
    "witness-coefficient",
    "potential-floor",
    "potential-monotone",
    "iteration-budget",
    "codimension-budget",
    "quotient-lift-identity",
    "quotient-lift-reading",
    "quotient-lift-consistency",
    "packet-construction",
    "packet-l2-printed",
    "packet-l2-derived",
    "avg-identity-printed",
    "shift-markov-printed",
    "shift-markov",
    "instance-error",
];

fn lemma_index(name: &str) -> usize {
    LEMMAS
        .iter()
        .position(|&l| l == name)
        .unwrap_or_else(|| panic!("unregistered lemma {name}"))
}

#[derive(Clone)]
struct Accum {
    pass: Vec<u64>,
    fail: Vec<u64>,
    findings: Vec<ViolationRecord>,
    instances: u64,
}

impl Accum {
    fn new() -> Self {
        Accum {
            pass: vec![0; LEMMAS.len()],
            fail: vec![0; LEMMAS.len()],
            findings: Vec::new(),
            instances: 0,
        }
    }

    fn merge(mut self, other: Accum) -> Accum {
        for i in 0..LEMMAS.len() {
            self.pass[i] += other.pass[i];
            self.fail[i] += other.fail[i];
        }
        self.findings.extend(other.findings);
        self.instances += other.instances;
        self
    }
}

/// Per-instance recorder: tallies every check and keeps a finding when one
/// fails.
struct Auditor<'a> {
    group: Vec<u64>,
    set: Vec<u64>,
    cfg: &'a LedgerConfig,
    acc: &'a mut Accum,
}

impl Auditor<'_> {
    fn mark(
        &mut self,
        lemma: &str,
        ok: bool,
        severity: Severity,
        lhs: f64,
        rhs: f64,
        detail: impl FnOnce() -> String,
    ) {
        let idx = lemma_index(lemma);
        if ok {
            self.acc.pass[idx] += 1;
        } else {
            self.acc.fail[idx] += 1;
            self.acc.findings.push(ViolationRecord {
                lemma: lemma.into(),
                group: self.group.clone(),
                set: self.set.clone(),
                config: self.cfg.clone(),
                lhs,
                rhs,
                severity,
                detail: detail(),
            });
        }
    }
}

/// Claim checks that read off a finished step report. Shared between the
/// scanner (per level) and one-shot analysis.
fn audit_step_reports(aud: &mut Auditor, reports: &[PslStepReport]) {
    for (level, rep) in reports.iter().enumerate() {
        aud.mark(
            "chang-size",
            rep.chang.size_ok,
            Severity::BoundMiss,
            rep.chang.dissociated_size as f64,
            rep.chang.size_bound,
            || format!("dissociated rank at level {level} beat C_RC tau^-2 ln(1/alpha)"),
        );
        aud.mark(
            "chang-mass",
            rep.chang.mass_ok,
            Severity::BoundMiss,
            rep.chang.mass,
            rep.chang.mass_bound,
            || format!("dissociated spectral mass at level {level} beat its bound"),
        );
        match &rep.outcome {
            PSLOutcome::NearCoset(_) => {
                aud.mark(
                    "near-coset-existence",
                    true,
                    Severity::BoundMiss,
                    1.0,
                    1.0,
                    String::new,
                );
            }
            PSLOutcome::Improvement { decrement, .. } => {
                aud.mark(
                    "improvement-decrement",
                    true,
                    Severity::DecrementMiss,
                    decrement.delta.to_f64(),
                    0.0,
                    String::new,
                );
                aud.mark(
                    "decrement-floor",
                    decrement.floor_ok,
                    Severity::DecrementMiss,
                    decrement.delta.to_f64(),
                    decrement.floor,
                    || format!("measured decrement at level {level} fell below K^-C"),
                );
                aud.mark(
                    "witness-coefficient",
                    decrement.witness_coefficient_ok,
                    Severity::ErratumClass,
                    decrement.quotient_coefficient,
                    decrement.lambda,
                    || {
                        format!(
                            "witness coefficient did not survive the quotient at level {level}; \
                             the indicator reading of the lift does not transfer it"
                        )
                    },
                );
            }
            PSLOutcome::Undetermined {
                reason,
                best_coset,
                improvement,
            } => {
                if improvement.is_some()
                    || matches!(rep.regime.kind, RegimeKind::Gray | RegimeKind::Dispersed)
                {
                    let measured = improvement
                        .as_ref()
                        .and_then(|d| d.delta)
                        .map(|d| d.to_f64())
                        .unwrap_or(0.0);
                    aud.mark(
                        "improvement-decrement",
                        false,
                        Severity::DecrementMiss,
                        measured,
                        0.0,
                        || format!("improvement branch at level {level} stalled: {reason}"),
                    );
                } else {
                    let fraction = best_coset
                        .as_ref()
                        .map(|c| c.covered_fraction.to_f64())
                        .unwrap_or(0.0);
                    aud.mark(
                        "near-coset-existence",
                        false,
                        Severity::BoundMiss,
                        fraction,
                        1.0 - aud.cfg.eps,
                        || {
                            format!(
                                "concentrated branch at level {level} found no dense coset: {reason}"
                            )
                        },
                    );
                }
            }
        }
    }
}

/// The full per-instance audit: exact energy bounds, the energy-to-doubling
/// step at the binding frequency, L4 compression, the dichotomy iteration
/// with its potential ledger, quotient lifts through every cyclic subgroup,
/// and the packet lemmas with both printed and derived bounds.
fn audit_instance(
    g: &GroupSpec,
    set: &[u64],
    cfg: &LedgerConfig,
    packet_seed: u64,
    acc: &mut Accum,
) {
    acc.instances += 1;
    let mut aud = Auditor {
        group: g.factors().to_vec(),
        set: set.to_vec(),
        cfg,
        acc,
    };

    if let Err(e) = audit_instance_inner(g, set, cfg, packet_seed, &mut aud) {
        aud.mark(
            "instance-error",
            false,
            Severity::BoundMiss,
            0.0,
            0.0,
            || format!("audit aborted: {e}"),
        );
    }
}

fn audit_instance_inner(
    g: &GroupSpec,
    set: &[u64],
    cfg: &LedgerConfig,
    packet_seed: u64,
    aud: &mut Auditor,
) -> Result<()> {
    let energy = additive_energy(g, set)?;
    aud.mark(
        "energy-lower",
        energy.lower_ok,
        Severity::BoundMiss,
        energy.combinatorial as f64,
        energy.lower_bound.to_f64(),
        || "E(A) fell below |A|^4 / |A+A|".into(),
    );
    aud.mark(
        "energy-upper",
        energy.upper_ok,
        Severity::BoundMiss,
        energy.combinatorial as f64,
        energy.upper_bound as f64,
        || "E(A) exceeded |A|^3".into(),
    );

    let table = dft_set(g, set)?;
    if g.order() > 1 {
        // The largest nonzero coefficient gives the binding instance of the
        // bound; it holds there iff it holds at every frequency.
        let mut xi_max = 1u64;
        for xi in 2..g.order() {
            if table.magnitude(xi) > table.magnitude(xi_max) {
                xi_max = xi;
            }
        }
        let chk = energy_to_doubling_check(g, set, xi_max)?;
        aud.mark(
            "energy-to-doubling",
            chk.ok,
            Severity::BoundMiss,
            chk.sum_fourth,
            chk.lower_bound,
            || format!("L4 sum lost to alpha^4 (1 + eta^4) at xi = {}", chk.xi),
        );
    }

    let l4 = l4_compression_audit(g, set, cfg)?;
    aud.mark(
        "l4-compression",
        l4.compress_ok,
        Severity::BoundMiss,
        l4.mass_in_spec,
        l4.compress_rhs,
        || "spectrum mass below the (1 - K^-c) share".into(),
    );
    aud.mark(
        "tail-polynomial",
        l4.tail_poly_ok,
        Severity::BoundMiss,
        l4.tail_mass,
        l4.tail_poly_rhs,
        || "L4 tail above K^-c alpha^2".into(),
    );

    let trace = iterate_psl(g, set, cfg, None)?;
    let count = |lemma: &str| {
        trace
            .violations
            .iter()
            .filter(|v| v.lemma == lemma)
            .count() as u64
    };
    let idx_floor = lemma_index("potential-floor");
    aud.acc.fail[idx_floor] += count("potential-floor");
    aud.acc.pass[idx_floor] += trace.steps.len() as u64 - count("potential-floor");
    let idx_mono = lemma_index("potential-monotone");
    let comparisons = trace.steps.len().saturating_sub(1) as u64;
    aud.acc.fail[idx_mono] += count("potential-monotone");
    aud.acc.pass[idx_mono] += comparisons - count("potential-monotone");
    aud.mark(
        "iteration-budget",
        trace.terminal != TerminalKind::BudgetExhausted,
        Severity::BoundMiss,
        trace.steps.len() as f64,
        trace.step_budget as f64,
        String::new,
    );
    aud.mark(
        "codimension-budget",
        trace.codim_ok,
        Severity::BoundMiss,
        trace.total_codim,
        trace.codim_budget,
        String::new,
    );
    // The budget marks above subsume the counters, but the trace's own
    // records carry the per-step detail; keep them.
    aud.acc.findings.extend(
        trace
            .violations
            .iter()
            .filter(|v| v.lemma == "potential-floor" || v.lemma == "potential-monotone")
            .cloned(),
    );
    audit_step_reports(aud, &trace.reports);

    // Quotient lifts through every distinct cyclic subgroup.
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    let mut discrepant: Vec<String> = Vec::new();
    let mut inconsistent: Vec<String> = Vec::new();
    let mut max_avg_residual = 0.0f64;
    let mut checked = 0u64;
    for x in 1..g.order() {
        let h = enumerate_subgroup(g, &[x])?;
        if !seen.insert(h.elements.clone()) {
            continue;
        }
        checked += 1;
        let rep = quotient_lift_check(g, set, &h)?;
        max_avg_residual = max_avg_residual.max(rep.max_averaged_residual);
        if !rep.consistent {
            inconsistent.push(format!("<{x}>"));
        }
        if !rep.saturated && rep.indicator_discrepancies > 0 {
            discrepant.push(format!("<{x}>"));
        }
    }
    if checked > 0 {
        aud.mark(
            "quotient-lift-identity",
            max_avg_residual <= 1e-8,
            Severity::BoundMiss,
            max_avg_residual,
            1e-8,
            || "averaged push-forward transform drifted from the parent coefficients".into(),
        );
        aud.mark(
            "quotient-lift-reading",
            discrepant.is_empty(),
            Severity::ErratumClass,
            discrepant.len() as f64,
            0.0,
            || {
                format!(
                    "indicator reading of the lift fails through {}",
                    discrepant.join(", ")
                )
            },
        );
        aud.mark(
            "quotient-lift-consistency",
            inconsistent.is_empty(),
            Severity::BoundMiss,
            inconsistent.len() as f64,
            0.0,
            || {
                format!(
                    "saturation did not predict indicator agreement through {}",
                    inconsistent.join(", ")
                )
            },
        );
    }

    // Packet lemmas against the nonzero large spectrum of this instance.
    let root = &trace.reports[0];
    let spec = large_spectrum_from_table(&table, set.len(), root.tau);
    let s: Vec<u64> = spec.members.iter().copied().filter(|&xi| xi != 0).collect();
    let eta = cfg.packet_eta_for(root.doubling.to_f64());
    let packet = sample_packet_cfg(
        g,
        &s,
        cfg.packet_eps,
        eta,
        packet_seed,
        cfg.c_pkt,
        cfg.packet_retries,
    )?;
    aud.mark(
        "packet-construction",
        packet.success,
        Severity::BoundMiss,
        packet.achieved_bias,
        cfg.packet_eps,
        || format!("no packet met the bias target in {} attempts", packet.attempts),
    );
    let l2 = packet_l2_error(g, set, &packet)?;
    aud.mark(
        "packet-l2-printed",
        l2.printed_ok,
        Severity::ErratumClass,
        l2.error,
        l2.printed_bound,
        || {
            "printed L2 bound (2 eps^2 on S plus 4 off S including zero) under the measured error"
                .into()
        },
    );
    aud.mark(
        "packet-l2-derived",
        l2.derived_ok,
        Severity::BoundMiss,
        l2.error,
        l2.derived_bound,
        || "derived L2 bound under the measured error".into(),
    );
    let shifts = good_shifts(g, set, &packet)?;
    aud.mark(
        "avg-identity-printed",
        shifts.printed_gap.abs() <= 1e-8,
        Severity::ErratumClass,
        shifts.average,
        shifts.packet_error,
        || {
            "printed claim equates the individual shift average with the packet-averaged error; \
             the gap is sum |ghat|^2 (1 - |b|^2)"
                .into()
        },
    );
    aud.mark(
        "shift-markov-printed",
        shifts.printed_markov_ok,
        Severity::ErratumClass,
        shifts.printed_retained as f64,
        (shifts.total as f64) / 2.0,
        || "retention at twice the packet-averaged error lost half the packet".into(),
    );
    aud.mark(
        "shift-markov",
        shifts.markov_ok,
        Severity::BoundMiss,
        shifts.retained as f64,
        (shifts.total as f64) / 2.0,
        || "retention at twice the individual average lost half the packet".into(),
    );
    Ok(())
}

fn mask_to_set(mask: u32) -> Vec<u64> {
    (0..32u32)
        .filter(|&b| mask & (1 << b) != 0)
        .map(|b| b as u64)
        .collect()
}

/// Audit lemma claims over a space of instances. Deterministic for a fixed
/// seed: per-instance packet seeds derive from the instance's own address in
/// the space, so worker count and schedule cannot change any finding. The
/// `SPECSTAB_WORKERS` environment variable caps the thread count.
pub fn scan_for_violations(
    space: &ScanSpace,
    cfg: &LedgerConfig,
    seed: u64,
) -> Result<ScanResult> {
    cfg.validate()?;
    space.validate()?;

    let pool = {
        let workers = std::env::var("SPECSTAB_WORKERS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Argument(format!("worker pool: {e}")))?
    };

    let acc = match space {
        ScanSpace::Exhaustive { groups, max_size } => {
            let specs: Vec<GroupSpec> = groups
                .iter()
                .map(|f| GroupSpec::new(f.clone()))
                .collect::<Result<_>>()?;
            pool.install(|| {
                specs
                    .iter()
                    .enumerate()
                    .map(|(gi, gspec)| {
                        let order = gspec.order();
                        let top: u32 = 1u32 << order;
                        (1u32..top)
                            .into_par_iter()
                            .filter(|m| (m.count_ones() as usize) <= *max_size)
                            .fold(Accum::new, |mut acc, mask| {
                                let set = mask_to_set(mask);
                                let pseed = derive_seed(
                                    seed ^ PACKET_TAG ^ ((gi as u64) << 32),
                                    mask,
                                );
                                audit_instance(gspec, &set, cfg, pseed, &mut acc);
                                acc
                            })
                            .reduce(Accum::new, Accum::merge)
                    })
                    .fold(Accum::new(), Accum::merge)
            })
        }
        ScanSpace::Sampled {
            groups,
            samples,
            max_size,
        } => {
            let specs: Vec<GroupSpec> = groups
                .iter()
                .map(|f| GroupSpec::new(f.clone()))
                .collect::<Result<_>>()?;
            // Draw first, dedup, then audit: the instance list is canonical
            // before any parallel work starts.
            let mut instances: BTreeSet<(usize, Vec<u64>)> = BTreeSet::new();
            for i in 0..*samples {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed ^ SAMPLE_TAG, i as u32));
                let gi = rng.random_range(0..specs.len());
                let order = specs[gi].order() as usize;
                let size = rng.random_range(1..=(*max_size).min(order));
                let mut set: Vec<u64> = index_sample(&mut rng, order, size)
                    .into_iter()
                    .map(|x| x as u64)
                    .collect();
                set.sort_unstable();
                instances.insert((gi, set));
            }
            let instances: Vec<(usize, Vec<u64>)> = instances.into_iter().collect();
            pool.install(|| {
                instances
                    .par_iter()
                    .enumerate()
                    .fold(Accum::new, |mut acc, (idx, (gi, set))| {
                        let pseed = derive_seed(seed ^ PACKET_TAG, idx as u32);
                        audit_instance(&specs[*gi], set, cfg, pseed, &mut acc);
                        acc
                    })
                    .reduce(Accum::new, Accum::merge)
            })
        }
    };

    let mut findings = acc.findings;
    sort_findings(&mut findings);
    let mut aggregates = BTreeMap::new();
    for (i, &name) in LEMMAS.iter().enumerate() {
        if acc.pass[i] + acc.fail[i] > 0 {
            aggregates.insert(
                name.to_string(),
                PassFail {
                    pass: acc.pass[i],
                    fail: acc.fail[i],
                },
            );
        }
    }
    Ok(ScanResult {
        summary: ScanSummary {
            space: space.clone(),
            seed,
            instances: acc.instances,
            aggregates,
        },
        findings,
    })
}

/// One-shot diagnosis of a single set: exact invariants, the spectrum at a
/// chosen threshold, and a full dichotomy step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub group: Vec<u64>,
    pub set: Vec<u64>,
    pub alpha: Rat,
    pub energy: EnergyReport,
    pub parseval: ParsevalReport,
    pub tau: f64,
    pub spectrum_threshold: f64,
    pub spectrum: Vec<u64>,
    pub l4: crate::dichotomy::L4CompressionAudit,
    pub psl: PslStepReport,
}

pub fn analyze_set(
    g: &GroupSpec,
    a: &[u64],
    cfg: &LedgerConfig,
    tau_override: Option<f64>,
) -> Result<(AnalyzeReport, Vec<ViolationRecord>)> {
    cfg.validate()?;
    let set = normalize_set(g, a)?;
    if set.is_empty() {
        return Err(Error::Argument("analysis of the empty set".into()));
    }
    let energy = additive_energy(g, &set)?;
    let ind = indicator(g, &set)?;
    let f: Vec<Complex64> = ind.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let parseval = parseval_audit(g, &f)?;
    let psl = psl_step(g, &set, cfg)?;
    let tau = match tau_override {
        Some(t) => {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Argument(format!(
                    "spectrum threshold must lie in (0, 1], got {t}"
                )));
            }
            t
        }
        None => psl.tau,
    };
    let spec = large_spectrum(g, &set, tau)?;
    let l4 = l4_compression_audit(g, &set, cfg)?;

    let mut acc = Accum::new();
    let mut aud = Auditor {
        group: g.factors().to_vec(),
        set: set.clone(),
        cfg,
        acc: &mut acc,
    };
    aud.mark(
        "energy-lower",
        energy.lower_ok,
        Severity::BoundMiss,
        energy.combinatorial as f64,
        energy.lower_bound.to_f64(),
        || "E(A) fell below |A|^4 / |A+A|".into(),
    );
    aud.mark(
        "energy-upper",
        energy.upper_ok,
        Severity::BoundMiss,
        energy.combinatorial as f64,
        energy.upper_bound as f64,
        || "E(A) exceeded |A|^3".into(),
    );
    aud.mark(
        "l4-compression",
        l4.compress_ok,
        Severity::BoundMiss,
        l4.mass_in_spec,
        l4.compress_rhs,
        || "spectrum mass below the (1 - K^-c) share".into(),
    );
    aud.mark(
        "tail-polynomial",
        l4.tail_poly_ok,
        Severity::BoundMiss,
        l4.tail_mass,
        l4.tail_poly_rhs,
        || "L4 tail above K^-c alpha^2".into(),
    );
    let reports = std::slice::from_ref(&psl);
    audit_step_reports(&mut aud, reports);
    let mut findings = acc.findings;
    sort_findings(&mut findings);

    let report = AnalyzeReport {
        group: g.factors().to_vec(),
        set,
        alpha: psl.alpha,
        energy,
        parseval,
        tau,
        spectrum_threshold: spec.threshold,
        spectrum: spec.members,
        l4,
        psl,
    };
    Ok((report, findings))
}

/// One row of the interval instance's spectral profile.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub xi: u64,
    /// Folded representative `min(xi, N - xi)`.
    pub fold: u64,
    pub measured: f64,
    /// `alpha |sinc(pi alpha fold)|`.
    pub model: f64,
    /// Relative deviation, absent where the model is within rounding of 0.
    pub rel_dev: Option<f64>,
    pub in_window: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ToyReport {
    pub group: Vec<u64>,
    pub k: u32,
    /// `k^(-1/16)`: the display threshold tied to the nominal doubling.
    pub tau: f64,
    pub alpha: Rat,
    pub set: Vec<u64>,
    pub set_size: u64,
    pub doubling: Rat,
    /// Measured doubling stayed at or under the nominal `k`.
    pub doubling_ok: bool,
    pub sumset_size: u64,
    /// Fold window `floor(N / 2pi)` where the sinc model is quantitative.
    pub window: u64,
    pub profile: Vec<ProfilePoint>,
    pub max_rel_dev_in_window: f64,
    pub profile_ok: bool,
    pub spectrum: Vec<u64>,
    pub spectrum_is_symmetric_interval: bool,
    pub psl: PslStepReport,
    pub polybog: PolybogReport,
}

/// Members form `{0} cup {+-1, ..., +-r}` exactly (self-paired fold at N/2
/// allowed).
pub fn is_symmetric_interval(order: u64, members: &[u64]) -> bool {
    if members.is_empty() {
        return false;
    }
    let mut folds: Vec<u64> = members
        .iter()
        .map(|&x| x.min(order - (x % order)))
        .collect();
    folds.sort_unstable();
    folds.dedup();
    if folds[0] != 0 {
        return false;
    }
    let r = *folds.last().unwrap();
    if folds.len() as u64 != r + 1 {
        return false;
    }
    let mut expected = 1 + 2 * r;
    if r > 0 && 2 * r == order {
        expected -= 1;
    }
    if members.len() as u64 != expected {
        return false;
    }
    for f in 1..=r {
        if members.binary_search(&f).is_err() || members.binary_search(&(order - f)).is_err() {
            return false;
        }
    }
    true
}

/// The interval instance in Z/97: measured transform against the sinc
/// model, symmetric-interval structure of the large spectrum, one dichotomy
/// step, and the containment search.
pub fn toy_example(cfg: &LedgerConfig, alpha: Rat, k: u32) -> Result<ToyReport> {
    cfg.validate()?;
    if k != 3 && k != 5 {
        return Err(Error::Argument(format!(
            "the interval instance is calibrated for nominal doubling 3 or 5, got {k}"
        )));
    }
    if !alpha.is_positive() || alpha > Rat::new(1, 4) {
        return Err(Error::Argument(format!(
            "interval density must lie in (0, 1/4], got {alpha}"
        )));
    }
    let n: u64 = 97;
    let g = GroupSpec::cyclic(n)?;
    let scaled = alpha * Rat::int(n as i128);
    let m = (scaled.numer().div_euclid(scaled.denom())) as u64;
    if m == 0 {
        return Err(Error::Argument(format!(
            "interval density {alpha} rounds to the empty set in Z/{n}"
        )));
    }
    let set: Vec<u64> = (0..m).collect();
    let alpha_f = m as f64 / n as f64;
    let doubling = doubling_constant(&g, &set)?;
    let sum = sumset(&g, &set, &set)?;
    let tau = (k as f64).powf(-1.0 / 16.0);
    let table = dft_set(&g, &set)?;
    let window = (n as f64 / (2.0 * std::f64::consts::PI)).floor() as u64;

    let mut profile = Vec::with_capacity(n as usize);
    let mut max_rel_dev = 0.0f64;
    let mut profile_ok = true;
    for xi in 0..n {
        let fold = xi.min(n - xi);
        let measured = table.magnitude(xi);
        let model = if fold == 0 {
            alpha_f
        } else {
            let t = std::f64::consts::PI * alpha_f * fold as f64;
            alpha_f * (t.sin() / t).abs()
        };
        let rel_dev = if model > 1e-12 {
            Some((measured - model).abs() / model)
        } else {
            None
        };
        let in_window = fold <= window;
        if in_window {
            if let Some(d) = rel_dev {
                max_rel_dev = max_rel_dev.max(d);
                if d > 0.05 {
                    profile_ok = false;
                }
            }
        }
        profile.push(ProfilePoint {
            xi,
            fold,
            measured,
            model,
            rel_dev,
            in_window,
        });
    }

    let spec = large_spectrum_from_table(&table, set.len(), tau);
    let symmetric = is_symmetric_interval(n, &spec.members);
    let psl = psl_step(&g, &set, cfg)?;
    let polybog = polybog_search(&g, &set, cfg)?;

    Ok(ToyReport {
        group: g.factors().to_vec(),
        k,
        tau,
        alpha,
        set_size: set.len() as u64,
        set,
        doubling,
        doubling_ok: doubling <= Rat::int(k as i128),
        sumset_size: sum.len() as u64,
        window,
        profile,
        max_rel_dev_in_window: max_rel_dev,
        profile_ok,
        spectrum: spec.members,
        spectrum_is_symmetric_interval: symmetric,
        psl,
        polybog,
    })
}

/// Envelope for every CLI artifact. `findings` is the flat, canonically
/// ordered violation list; `body` holds the kind-specific sections.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub kind: String,
    pub config: LedgerConfig,
    pub body: ReportBody,
    pub findings: Vec<ViolationRecord>,
    pub timing_ms: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportBody {
    Analyze(AnalyzeReport),
    Iterate(IterateBody),
    Scan(ScanSummary),
    Toy(ToyReport),
    Polybog(PolybogBody),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterateBody {
    pub group: Vec<u64>,
    pub set: Vec<u64>,
    pub trace: IterationTrace,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolybogBody {
    pub group: Vec<u64>,
    pub set: Vec<u64>,
    pub report: PolybogReport,
}

impl Report {
    pub fn new(
        kind: &str,
        config: LedgerConfig,
        body: ReportBody,
        findings: Vec<ViolationRecord>,
        timing_ms: u64,
    ) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            config,
            body,
            findings,
            timing_ms,
        }
    }
}

/// The `(j, K_j, alpha_j, I_j)` ledger as CSV. Only iteration reports have
/// one.
pub fn csv_ledger(report: &Report) -> Option<String> {
    let ReportBody::Iterate(body) = &report.body else {
        return None;
    };
    let mut out = String::from("j,order,doubling,alpha,potential,codim,outcome,delta\n");
    for s in &body.trace.steps {
        let delta = s.delta.map(|d| d.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.j, s.order, s.doubling, s.alpha, s.potential, s.codim, s.outcome, delta
        ));
    }
    Some(out)
}
