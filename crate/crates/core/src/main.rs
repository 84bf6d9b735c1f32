//! Command-line front end. Every subcommand prints one JSON report envelope
//! to stdout; diagnostics go to stderr.

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use specstab::dichotomy::LedgerConfig;
use specstab::groups::GroupSpec;
use specstab::harness::{
    analyze_set, csv_ledger, iterate_psl, scan_for_violations, sort_findings, toy_example,
    IterateBody, PolybogBody, Report, ReportBody, ScanSpace,
};
use specstab::periodicity::polybog_search;
use specstab::Rat;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "specstab",
    version,
    about = "Spectral stability measurements on finite abelian groups"
)]
struct Cli {
    /// TOML file overriding the constant ledger.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Named constant preset (ledger-C, ledger-S2).
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact invariants, spectrum, and one dichotomy step for a single set.
    Analyze {
        /// Cyclic order or comma-separated factors, e.g. 97 or 2,4,3.
        group: String,
        /// Semicolon-separated elements; rank-1 accepts a..b ranges.
        set: String,
        /// Spectrum display threshold in (0,1]; defaults to K^-c0.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Drive the dichotomy and emit the potential ledger.
    Iterate {
        group: String,
        set: String,
        /// Potential exponent override (must stay >= 2C + 4).
        #[arg(long)]
        gamma: Option<f64>,
        /// Step cap; defaults to ceil(K_0^(C+1)).
        #[arg(long)]
        budget: Option<u32>,
    },
    /// Audit lemma claims across a family of instances.
    Scan {
        /// Every subset up to the size cap (the default mode).
        #[arg(long, conflicts_with = "samples")]
        exhaustive: bool,
        /// Seeded random instances instead of exhaustion.
        #[arg(long, value_name = "N")]
        samples: Option<u64>,
        /// Base seed for packet draws and sampling; defaults to the ledger seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Subset size cap overriding the space default.
        #[arg(long, value_name = "K")]
        max_size: Option<usize>,
        /// Replace the default group list (repeatable), e.g. --group 12 --group 2,2,3.
        #[arg(long = "group", value_name = "FACTORS")]
        groups: Vec<String>,
    },
    /// The interval instance in Z/97 with the sinc-profile comparison.
    Toy {
        /// Interval density in (0, 1/4]; p/q or decimal.
        #[arg(long, default_value = "24/97")]
        alpha: String,
        /// Nominal doubling, 3 or 5.
        #[arg(long, default_value_t = 3)]
        k: u32,
    },
    /// Bohr-set containment search inside 4A - 4A (cyclic groups).
    Polybog { group: String, set: String },
    /// Summarize a stored report; --csv prints the iteration ledger.
    Report {
        input: PathBuf,
        #[arg(long)]
        csv: bool,
    },
}

fn parse_group(s: &str) -> anyhow::Result<GroupSpec> {
    let factors: Vec<u64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .with_context(|| format!("group factor {p:?}"))
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(GroupSpec::new(factors)?)
}

/// Elements are separated by semicolons. Each item is a coordinate tuple
/// matching the group's rank; rank-1 groups also accept `a..b` ranges with an
/// exclusive upper end.
fn parse_set(g: &GroupSpec, s: &str) -> anyhow::Result<Vec<u64>> {
    let mut out: Vec<u64> = Vec::new();
    for item in s.split(';').filter(|p| !p.trim().is_empty()) {
        let item = item.trim();
        if let Some((lo, hi)) = item.split_once("..") {
            if g.rank() != 1 {
                bail!("range syntax {item:?} needs a cyclic group");
            }
            let lo: u64 = lo.trim().parse().with_context(|| format!("range start in {item:?}"))?;
            let hi: u64 = hi.trim().parse().with_context(|| format!("range end in {item:?}"))?;
            if lo >= hi {
                bail!("empty range {item:?}");
            }
            out.extend(lo..hi);
        } else if item.contains(',') {
            let coords: Vec<u64> = item
                .split(',')
                .map(|c| c.trim().parse::<u64>().with_context(|| format!("coordinate in {item:?}")))
                .collect::<anyhow::Result<_>>()?;
            out.push(g.index_of(&coords)?);
        } else {
            let x: u64 = item.parse().with_context(|| format!("element {item:?}"))?;
            if g.rank() == 1 {
                out.push(x);
            } else {
                // A bare number against a product group is ambiguous.
                bail!("element {item:?} needs {} comma-separated coordinates", g.rank());
            }
        }
    }
    if out.is_empty() {
        bail!("the set is empty");
    }
    Ok(out)
}

/// `p/q` exact, or a decimal literal converted exactly (digits over a power
/// of ten).
fn parse_rat(s: &str) -> anyhow::Result<Rat> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: i128 = p.trim().parse().with_context(|| format!("numerator in {s:?}"))?;
        let q: i128 = q.trim().parse().with_context(|| format!("denominator in {s:?}"))?;
        if q == 0 {
            bail!("zero denominator in {s:?}");
        }
        return Ok(Rat::new(p, q));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.len() > 18 {
            bail!("decimal {s:?} has too many digits; use p/q");
        }
        let whole: i128 = if whole.is_empty() { 0 } else { whole.parse()? };
        let frac_val: i128 = if frac.is_empty() { 0 } else { frac.parse()? };
        let den: i128 = 10i128.pow(frac.len() as u32);
        return Ok(Rat::new(whole * den + frac_val, den));
    }
    let n: i128 = s.parse().with_context(|| format!("rational {s:?}"))?;
    Ok(Rat::int(n))
}

fn load_config(cli: &Cli) -> anyhow::Result<LedgerConfig> {
    if cli.config.is_some() && cli.preset.is_some() {
        bail!("--config and --preset are mutually exclusive");
    }
    let cfg = if let Some(name) = &cli.preset {
        LedgerConfig::preset(name)?
    } else if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        LedgerConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn emit(report: &Report) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(report)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    let t0 = Instant::now();
    match cli.cmd {
        Cmd::Analyze { group, set, tau } => {
            let g = parse_group(&group)?;
            let a = parse_set(&g, &set)?;
            let (body, findings) = analyze_set(&g, &a, &cfg, tau)?;
            let report = Report::new(
                "analyze",
                cfg,
                ReportBody::Analyze(body),
                findings,
                t0.elapsed().as_millis() as u64,
            );
            emit(&report)
        }
        Cmd::Iterate {
            group,
            set,
            gamma,
            budget,
        } => {
            let g = parse_group(&group)?;
            let a = parse_set(&g, &set)?;
            let cfg = match gamma {
                Some(gm) => {
                    let c = LedgerConfig { gamma: gm, ..cfg };
                    c.validate()?;
                    c
                }
                None => cfg,
            };
            let trace = iterate_psl(&g, &a, &cfg, budget)?;
            let findings = trace.violations.clone();
            let report = Report::new(
                "iterate",
                cfg,
                ReportBody::Iterate(IterateBody {
                    group: g.factors().to_vec(),
                    set: a,
                    trace,
                }),
                findings,
                t0.elapsed().as_millis() as u64,
            );
            emit(&report)
        }
        Cmd::Scan {
            exhaustive: _,
            samples,
            seed,
            max_size,
            groups,
        } => {
            let mut space = match samples {
                Some(n) => ScanSpace::default_sampled(n),
                None => ScanSpace::default_exhaustive(),
            };
            if !groups.is_empty() {
                let parsed: Vec<Vec<u64>> = groups
                    .iter()
                    .map(|s| parse_group(s).map(|g| g.factors().to_vec()))
                    .collect::<anyhow::Result<_>>()?;
                match &mut space {
                    ScanSpace::Exhaustive { groups: gs, .. } => *gs = parsed,
                    ScanSpace::Sampled { groups: gs, .. } => *gs = parsed,
                }
            }
            if let Some(k) = max_size {
                match &mut space {
                    ScanSpace::Exhaustive { max_size: m, .. } => *m = k,
                    ScanSpace::Sampled { max_size: m, .. } => *m = k,
                }
            }
            let seed = seed.unwrap_or(cfg.seed);
            let result = scan_for_violations(&space, &cfg, seed)?;
            let report = Report::new(
                "scan",
                cfg,
                ReportBody::Scan(result.summary),
                result.findings,
                t0.elapsed().as_millis() as u64,
            );
            emit(&report)
        }
        Cmd::Toy { alpha, k } => {
            let alpha = parse_rat(&alpha)?;
            let body = toy_example(&cfg, alpha, k)?;
            let report = Report::new(
                "toy",
                cfg,
                ReportBody::Toy(body),
                Vec::new(),
                t0.elapsed().as_millis() as u64,
            );
            emit(&report)
        }
        Cmd::Polybog { group, set } => {
            let g = parse_group(&group)?;
            let a = parse_set(&g, &set)?;
            let body = polybog_search(&g, &a, &cfg)?;
            let mut findings = Vec::new();
            if let Some(msg) = &body.finding {
                findings.push(specstab::harness::ViolationRecord {
                    lemma: "polybog-containment".into(),
                    group: g.factors().to_vec(),
                    set: a.clone(),
                    config: cfg.clone(),
                    lhs: body.rho_prime,
                    rhs: body.radius_floor,
                    severity: specstab::harness::Severity::BoundMiss,
                    detail: msg.clone(),
                });
                sort_findings(&mut findings);
            }
            let report = Report::new(
                "polybog",
                cfg,
                ReportBody::Polybog(PolybogBody {
                    group: g.factors().to_vec(),
                    set: a,
                    report: body,
                }),
                findings,
                t0.elapsed().as_millis() as u64,
            );
            emit(&report)
        }
        Cmd::Report { input, csv } => {
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let report: Report =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
            if csv {
                match csv_ledger(&report) {
                    Some(out) => print!("{out}"),
                    None => bail!("report kind {:?} has no CSV ledger", report.kind),
                }
                return Ok(());
            }
            // Round-trip audit: a stored report must re-serialize to the
            // same value.
            let reparsed: serde_json::Value = serde_json::from_str(&text)?;
            let reserialized = serde_json::to_value(&report)?;
            let lossless = reparsed == reserialized;
            let mut by_severity: std::collections::BTreeMap<String, usize> = Default::default();
            for f in &report.findings {
                let key = serde_json::to_value(f.severity)?
                    .as_str()
                    .unwrap_or("unknown")
                    .to_string();
                *by_severity.entry(key).or_default() += 1;
            }
            println!("kind: {}", report.kind);
            println!("schema_version: {}", report.schema_version);
            println!("timing_ms: {}", report.timing_ms);
            println!("findings: {}", report.findings.len());
            for (sev, n) in &by_severity {
                println!("  {sev}: {n}");
            }
            println!("round_trip_lossless: {lossless}");
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
