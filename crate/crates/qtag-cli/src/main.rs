//! Experiment runner: executes (scheme x adversary) sessions and emits a
//! fixed-width summary table plus machine-readable JSON and CSV reports.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qtag::adversary::{AdversaryConfig, AdversaryKind};
use qtag::schemes::{xor_table, Geometry, SchemeConfig, SchemeId};
use qtag::session::{derive_master, run_session};
use qtag::verdict::{wilson_interval, StatTestConfig};
use qtag::worldline::Payload;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "qtag", about = "Relativistic quantum-tagging protocol simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One (scheme, adversary) cell over repeated seeded sessions.
    Run(RunArgs),
    /// The full scheme x adversary matrix.
    Matrix(MatrixArgs),
}

#[derive(Args)]
struct Common {
    /// Positions on the line, e.g. a0=0,t=5,a1=10,e0=2,e1=8
    #[arg(long, default_value = "a0=0,t=5,a1=10,e0=2,e1=8")]
    geometry: String,
    /// Master seed; every stream in the run is derived from it.
    #[arg(long, env = "QTAG_SEED", default_value_t = 0)]
    seed: u64,
    /// Independent sessions per cell.
    #[arg(long, default_value_t = 50)]
    trials: u64,
    /// Significance level for the statistical verifier.
    #[arg(long, default_value_t = 1e-3)]
    alpha: f64,
    /// Probability bins for the outcome tests.
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Disable arrival-time checks (statistics only).
    #[arg(long)]
    no_timing_checks: bool,
    /// Write the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the CSV summary here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Rounds of transcript to sample into the report per cell.
    #[arg(long, default_value_t = 3)]
    transcript_rounds: u32,
}

#[derive(Args)]
struct RunArgs {
    /// Scheme: I, II, III, IV, V or VI.
    #[arg(long)]
    scheme: String,
    /// none, tag_off_silent, record_replay, store_and_wait, guess_measure,
    /// teleport_I_II or teleport_III_style.
    #[arg(long, default_value = "none")]
    adversary: String,
    #[arg(long, default_value_t = 100)]
    rounds: u32,
    /// Replay delay for record_replay.
    #[arg(long, default_value_t = 1.0)]
    replay_delay: f64,
    /// Scheme II routing table as comma-separated bit rows, e.g. 01,10.
    #[arg(long)]
    f_table: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MatrixArgs {
    #[arg(long, default_value_t = 200)]
    rounds: u32,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct TrialSummary {
    trial: u64,
    accept: bool,
    failure_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct Row {
    scheme: String,
    adversary: String,
    rounds: u32,
    trials: u64,
    applicable: bool,
    reason: Option<String>,
    accepted: Option<u64>,
    p_hat: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    mean_inference_error: Option<f64>,
    dominant_failure: Option<String>,
    /// Late-arrival deviations (rounded) to their frequency.
    timing_late_histogram: BTreeMap<String, u64>,
    trial_summaries: Vec<TrialSummary>,
    /// First few rounds of the first trial, one line per delivery.
    transcript_sample: Vec<String>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct Report {
    schema_version: u32,
    seed: u64,
    geometry: Geometry,
    eve_sites: (f64, f64),
    stat: StatTestConfig,
    partial: bool,
    rows: Vec<Row>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::Run(args) => {
            let (geometry, e0, e1) = parse_geometry(&args.common.geometry)?;
            let scheme_id: SchemeId = args.scheme.parse()?;
            let mut scheme = SchemeConfig::new(scheme_id, geometry, args.rounds);
            match (&args.f_table, scheme_id) {
                (Some(spec), SchemeId::II) => scheme.set_f_table(parse_f_table(spec)?),
                (Some(_), _) => return Err("--f-table only applies to scheme II".into()),
                (None, SchemeId::II) => {
                    eprintln!("warning: scheme II without --f-table, using the XOR default");
                    scheme.set_f_table(xor_table(2, 2));
                }
                _ => {}
            }
            scheme.validate().map_err(|e| e.to_string())?;
            let kind = parse_adversary(&args.adversary, args.replay_delay)?;
            let stat = stat_config(&args.common);
            let rows = vec![execute_cell(&scheme, kind, e0, e1, &stat, &args.common)?];
            emit(rows, geometry, (e0, e1), stat, &args.common)
        }
        Cmd::Matrix(args) => {
            let (geometry, e0, e1) = parse_geometry(&args.common.geometry)?;
            let stat = stat_config(&args.common);
            let adversaries = [
                AdversaryKind::Passive,
                AdversaryKind::TagOffSilent,
                AdversaryKind::StoreAndWait,
                AdversaryKind::GuessMeasure,
                AdversaryKind::TeleportRouting,
                AdversaryKind::TeleportedMeasurement,
            ];
            let mut rows = Vec::new();
            for id in SchemeId::ALL {
                let scheme = SchemeConfig::new(id, geometry, args.rounds);
                for kind in adversaries {
                    rows.push(execute_cell(&scheme, Some(kind), e0, e1, &stat, &args.common)?);
                }
            }
            emit(rows, geometry, (e0, e1), stat, &args.common)
        }
    }
}

fn stat_config(common: &Common) -> StatTestConfig {
    StatTestConfig {
        alpha: common.alpha,
        bins: common.bins,
        timing_checks: !common.no_timing_checks,
    }
}

/// `kind = None` means a run without Eve agents at all; `Some(Passive)` is
/// the present-but-idle control.
fn execute_cell(
    scheme: &SchemeConfig,
    kind: Option<AdversaryKind>,
    e0: f64,
    e1: f64,
    stat: &StatTestConfig,
    common: &Common,
) -> Result<Row, String> {
    let adversary_name = kind.map_or("absent".to_string(), |k| k.name().to_string());
    let mut row = Row {
        scheme: scheme.id.to_string(),
        adversary: adversary_name.clone(),
        rounds: scheme.rounds,
        trials: common.trials,
        applicable: true,
        reason: None,
        accepted: None,
        p_hat: None,
        ci_low: None,
        ci_high: None,
        mean_inference_error: None,
        dominant_failure: None,
        timing_late_histogram: BTreeMap::new(),
        trial_summaries: Vec::new(),
        transcript_sample: Vec::new(),
    };
    if let Some(kind) = kind {
        if !kind.applicable_to(scheme.id) {
            row.applicable = false;
            row.reason = Some(format!(
                "strategy {} does not apply to scheme {}",
                kind.name(),
                scheme.id
            ));
            return Ok(row);
        }
    }
    let adv = kind.map(|kind| AdversaryConfig { kind, e0, e1 });
    let master = derive_master(&format!("row/{}/{}", scheme.id, adversary_name), common.seed);

    let mut accepted = 0u64;
    let mut err_sum = 0.0;
    let mut err_count = 0u64;
    let mut kind_counts: BTreeMap<String, u64> = BTreeMap::new();
    for trial in 0..common.trials {
        let result = run_session(scheme, adv.as_ref(), stat, master, trial)
            .map_err(|e| format!("scheme {} x {}: {e}", scheme.id, adversary_name))?;
        accepted += result.verdict.accept as u64;
        if let Some(e) = result.inference_error {
            err_sum += e;
            err_count += 1;
        }
        let mut failure_counts: BTreeMap<String, u64> = BTreeMap::new();
        for f in &result.verdict.failures {
            let name = failure_name(&f.kind);
            *failure_counts.entry(name.clone()).or_default() += 1;
            *kind_counts.entry(name).or_default() += 1;
            if let qtag::verdict::FailureKind::Mistimed { expected, actual } = f.kind {
                let key = format!("{:.6}", actual - expected);
                *row.timing_late_histogram.entry(key).or_default() += 1;
            }
        }
        row.trial_summaries.push(TrialSummary {
            trial,
            accept: result.verdict.accept,
            failure_counts,
        });
        if trial == 0 {
            row.transcript_sample = result
                .transcript
                .deliveries
                .iter()
                .filter(|d| d.round < common.transcript_rounds)
                .map(|d| {
                    let kind = match d.payload {
                        Payload::Classical(_) => "classical",
                        Payload::Quantum(_) => "quantum",
                    };
                    format!("t={:.6} x={:.6} round={} {:?} {}", d.time, d.position, d.round, d.direction, kind)
                })
                .collect();
        }
    }
    let (lo, hi) = wilson_interval(accepted, common.trials, 1.96);
    row.accepted = Some(accepted);
    row.p_hat = Some(accepted as f64 / common.trials as f64);
    row.ci_low = Some(lo);
    row.ci_high = Some(hi);
    row.mean_inference_error = (err_count > 0).then(|| err_sum / err_count as f64);
    row.dominant_failure = kind_counts.into_iter().max_by_key(|(_, n)| *n).map(|(k, _)| k);
    Ok(row)
}

fn failure_name(kind: &qtag::verdict::FailureKind) -> String {
    use qtag::verdict::FailureKind::*;
    match kind {
        Missing => "missing",
        Mistimed { .. } => "mistimed",
        ProjectiveFail => "projective_fail",
        StationMismatch => "station_mismatch",
        DeterministicViolation => "deterministic_violation",
        BinBias { .. } => "bin_bias",
    }
    .to_string()
}

fn emit(
    rows: Vec<Row>,
    geometry: Geometry,
    eve_sites: (f64, f64),
    stat: StatTestConfig,
    common: &Common,
) -> Result<(), String> {
    print_table(&rows);
    let report = Report {
        schema_version: SCHEMA_VERSION,
        seed: common.seed,
        geometry,
        eve_sites,
        stat,
        partial: false,
        rows,
    };
    if let Some(path) = &common.json {
        let text = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
        std::fs::write(path, text).map_err(|e| format!("writing {}: {e}", path.display()))?;
    }
    if let Some(path) = &common.csv {
        std::fs::write(path, to_csv(&report.rows))
            .map_err(|e| format!("writing {}: {e}", path.display()))?;
    }
    Ok(())
}

fn print_table(rows: &[Row]) {
    println!(
        "{:<8}{:<22}{:>7}{:>8}  {:<8}{:<16}{}",
        "scheme", "adversary", "N", "trials", "p_hat", "ci95", "dominant_failure"
    );
    for r in rows {
        if !r.applicable {
            println!(
                "{:<8}{:<22}{:>7}{:>8}  {:<8}{:<16}n/a: {}",
                r.scheme,
                r.adversary,
                r.rounds,
                r.trials,
                "n/a",
                "-",
                r.reason.as_deref().unwrap_or("inapplicable")
            );
            continue;
        }
        println!(
            "{:<8}{:<22}{:>7}{:>8}  {:<8.3}[{:.3},{:.3}]   {}",
            r.scheme,
            r.adversary,
            r.rounds,
            r.trials,
            r.p_hat.unwrap(),
            r.ci_low.unwrap(),
            r.ci_high.unwrap(),
            r.dominant_failure.as_deref().unwrap_or("-")
        );
    }
}

fn to_csv(rows: &[Row]) -> String {
    let mut out = String::from("scheme,adversary,rounds,trials,applicable,accepted,p_hat,ci_low,ci_high,dominant_failure\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.scheme,
            r.adversary,
            r.rounds,
            r.trials,
            r.applicable,
            r.accepted.map_or(String::new(), |v| v.to_string()),
            r.p_hat.map_or(String::new(), |v| format!("{v}")),
            r.ci_low.map_or(String::new(), |v| format!("{v}")),
            r.ci_high.map_or(String::new(), |v| format!("{v}")),
            r.dominant_failure.as_deref().unwrap_or("")
        ));
    }
    out
}

fn parse_adversary(name: &str, replay_delay: f64) -> Result<Option<AdversaryKind>, String> {
    Ok(match name {
        "absent" => None,
        "none" => Some(AdversaryKind::Passive),
        "tag_off_silent" => Some(AdversaryKind::TagOffSilent),
        "record_replay" => Some(AdversaryKind::RecordReplay { delay: replay_delay }),
        "store_and_wait" => Some(AdversaryKind::StoreAndWait),
        "guess_measure" => Some(AdversaryKind::GuessMeasure),
        "teleport_I_II" => Some(AdversaryKind::TeleportRouting),
        "teleport_III_style" => Some(AdversaryKind::TeleportedMeasurement),
        other => return Err(format!("unknown adversary '{other}'")),
    })
}

/// Parses `a0=0,t=5,a1=10,e0=2,e1=8`; Eve's sites default to the midpoints.
fn parse_geometry(spec: &str) -> Result<(Geometry, f64, f64), String> {
    let mut vals: BTreeMap<&str, f64> = BTreeMap::new();
    for part in spec.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("geometry: expected key=value, got '{part}'"))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("geometry: '{value}' is not a number (in '{part}')"))?;
        vals.insert(key.trim(), v);
    }
    let get = |k: &str| vals.get(k).copied().ok_or_else(|| format!("geometry: missing {k}="));
    let a0 = get("a0")?;
    let t = get("t")?;
    let a1 = get("a1")?;
    if a0 >= t {
        return Err("geometry: a0 < t required".into());
    }
    if t >= a1 {
        return Err("geometry: t < a1 required".into());
    }
    let geometry = Geometry::new(a0, t, a1).map_err(|e| e.to_string())?;
    let e0 = vals.get("e0").copied().unwrap_or((a0 + t) / 2.0);
    let e1 = vals.get("e1").copied().unwrap_or((t + a1) / 2.0);
    if !(a0 < e0 && e0 < t) {
        return Err("geometry: a0 < e0 < t required".into());
    }
    if !(t < e1 && e1 < a1) {
        return Err("geometry: t < e1 < a1 required".into());
    }
    Ok((geometry, e0, e1))
}

/// Bit rows like `01,10`: m rows of n bits each.
fn parse_f_table(spec: &str) -> Result<Vec<Vec<u8>>, String> {
    let rows: Vec<Vec<u8>> = spec
        .split(',')
        .map(|row| {
            row.trim()
                .chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    other => Err(format!("f-table: '{other}' is not a bit")),
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err("f-table: rows must be non-empty and equal length".into());
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_parser_accepts_the_documented_form() {
        let (g, e0, e1) = parse_geometry("a0=0,t=5,a1=10,e0=2,e1=8").unwrap();
        assert_eq!((g.a0, g.t_plus, g.a1), (0.0, 5.0, 10.0));
        assert_eq!((e0, e1), (2.0, 8.0));
    }

    #[test]
    fn geometry_parser_defaults_eve_sites_to_midpoints() {
        let (_, e0, e1) = parse_geometry("a0=0,t=4,a1=10").unwrap();
        assert_eq!((e0, e1), (2.0, 7.0));
    }

    #[test]
    fn degenerate_geometry_reports_the_violated_ordering() {
        let err = parse_geometry("a0=5,t=5,a1=10").unwrap_err();
        assert!(err.contains("a0 < t required"), "{err}");
        let err = parse_geometry("a0=0,t=5,a1=10,e0=7").unwrap_err();
        assert!(err.contains("e0 < t"), "{err}");
    }

    #[test]
    fn f_table_parser() {
        assert_eq!(parse_f_table("01,10").unwrap(), vec![vec![0, 1], vec![1, 0]]);
        assert!(parse_f_table("01,2").is_err());
        assert!(parse_f_table("01,100").is_err());
    }

    #[test]
    fn adversary_names_round_trip() {
        for kind in AdversaryKind::ALL {
            let parsed = parse_adversary(kind.name(), 1.0).unwrap().unwrap();
            assert_eq!(parsed.name(), kind.name());
        }
        assert!(parse_adversary("absent", 1.0).unwrap().is_none());
        assert!(parse_adversary("nope", 1.0).is_err());
    }
}
