//! Session verification: per-round timing and payload checks against the
//! expected records, projective tests on returned qubits, and aggregate
//! statistics on broadcast outcomes.
//!
//! Timing failures are exact (up to epsilon_t); statistical checks are exact
//! binomial tests per predicted-probability bin with a Bonferroni-corrected
//! significance level, so an honest session is rejected with probability at
//! most alpha.

use std::collections::HashMap;

use rand_chacha::ChaCha12Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::schemes::{ExpectedCheck, ExpectedRecord, SchemeConfig};
use crate::worldline::{AgentId, Delivery, MsgBody, QuantumStore, Station, Transcript};

/// Probabilities this close to 0 or 1 are treated as deterministic and
/// checked exactly instead of binned.
pub const DETERMINISTIC_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct StatTestConfig {
    /// Per-session false-alarm budget for the binned outcome tests.
    pub alpha: f64,
    /// Number of predicted-probability bins over (0, 1).
    pub bins: usize,
    /// Arrival-time checks can be disabled to show what timing alone buys.
    pub timing_checks: bool,
}

impl Default for StatTestConfig {
    fn default() -> Self {
        StatTestConfig { alpha: 1e-3, bins: 10, timing_checks: true }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum FailureKind {
    /// No delivery of the expected kind reached the station.
    Missing,
    /// Delivered, but off the expected arrival time.
    Mistimed { expected: f64, actual: f64 },
    /// Returned qubit failed projection onto the state Alice sent.
    ProjectiveFail,
    /// The two stations logged different outcomes for one round.
    StationMismatch,
    /// An outcome that the predicted probability forbids.
    DeterministicViolation,
    /// A probability bin whose zero-rate is inconsistent with the Born rule.
    BinBias { bin: usize, p_value: f64 },
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Failure {
    pub round: Option<u32>,
    pub station: Option<Station>,
    pub kind: FailureKind,
}

/// Per-bin tally of broadcast-outcome rounds.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BinSummary {
    pub bin: usize,
    pub rounds: u64,
    pub zeros: u64,
    /// Mean predicted probability of outcome 0 across the bin's rounds.
    pub mean_p0: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Verdict {
    pub accept: bool,
    pub failures: Vec<Failure>,
    pub rounds_expected: usize,
    pub projective_passes: u32,
    pub projective_tests: u32,
    /// Largest |actual - expected| arrival deviation among matched records.
    pub max_timing_dev: f64,
    pub bins: Vec<BinSummary>,
}

/// Checks one finished session against its expected records. Projective
/// tests consume the delivered qubits from the store.
pub fn verify(
    cfg: &SchemeConfig,
    expected: &[ExpectedRecord],
    transcript: &Transcript,
    store: &mut QuantumStore,
    a0: AgentId,
    a1: AgentId,
    stat: &StatTestConfig,
    rng: &mut ChaCha12Rng,
) -> Verdict {
    let station_of = |agent: AgentId| {
        if agent == a0 {
            Some(Station::A0)
        } else if agent == a1 {
            Some(Station::A1)
        } else {
            None
        }
    };
    // station deliveries indexed by (station, round)
    let mut index: HashMap<(Station, u32), Vec<&Delivery>> = HashMap::new();
    for d in &transcript.deliveries {
        if let Some(s) = station_of(d.agent) {
            index.entry((s, d.round)).or_default().push(d);
        }
    }

    let mut failures = Vec::new();
    let mut projective_passes = 0;
    let mut projective_tests = 0;
    let mut max_timing_dev: f64 = 0.0;
    // (p0, outcome at A0, outcome at A1) per broadcast round
    let mut reports: HashMap<u32, (f64, Option<u8>, Option<u8>)> = HashMap::new();

    for rec in expected {
        let deliveries = index.get(&(rec.station, rec.round));
        let found = deliveries.and_then(|ds| {
            ds.iter().find(|d| match &rec.check {
                ExpectedCheck::Projective { .. } => d.quantum().is_some(),
                ExpectedCheck::OutcomeReport { .. } => {
                    matches!(d.classical(), Some(MsgBody::OutcomeReport(_)))
                }
            })
        });
        let Some(d) = found else {
            failures.push(Failure { round: Some(rec.round), station: Some(rec.station), kind: FailureKind::Missing });
            continue;
        };
        let dev = (d.time - rec.time).abs();
        max_timing_dev = max_timing_dev.max(dev);
        if stat.timing_checks && dev > cfg.epsilon_t {
            failures.push(Failure {
                round: Some(rec.round),
                station: Some(rec.station),
                kind: FailureKind::Mistimed { expected: rec.time, actual: d.time },
            });
        }
        match &rec.check {
            ExpectedCheck::Projective { target } => {
                projective_tests += 1;
                let h = d.quantum().expect("matched on quantum payload");
                match store.projective_test(h, target, rng) {
                    Ok(true) => projective_passes += 1,
                    _ => failures.push(Failure {
                        round: Some(rec.round),
                        station: Some(rec.station),
                        kind: FailureKind::ProjectiveFail,
                    }),
                }
            }
            ExpectedCheck::OutcomeReport { p0 } => {
                let Some(MsgBody::OutcomeReport(bit)) = d.classical() else { unreachable!() };
                let entry = reports.entry(rec.round).or_insert((*p0, None, None));
                match rec.station {
                    Station::A0 => entry.1 = Some(*bit),
                    Station::A1 => entry.2 = Some(*bit),
                }
            }
        }
    }

    let bins = check_statistics(&reports, stat, &mut failures);

    Verdict {
        accept: failures.is_empty(),
        failures,
        rounds_expected: expected.len(),
        projective_passes,
        projective_tests,
        max_timing_dev,
        bins,
    }
}

/// Station consistency, deterministic cells, and the binned exact binomial
/// tests at level alpha / (number of occupied bins).
fn check_statistics(
    reports: &HashMap<u32, (f64, Option<u8>, Option<u8>)>,
    stat: &StatTestConfig,
    failures: &mut Vec<Failure>,
) -> Vec<BinSummary> {
    struct Acc {
        rounds: u64,
        zeros: u64,
        sum_p0: f64,
    }
    let mut acc: Vec<Acc> = (0..stat.bins).map(|_| Acc { rounds: 0, zeros: 0, sum_p0: 0.0 }).collect();

    let mut rounds: Vec<_> = reports.iter().collect();
    rounds.sort_by_key(|(round, _)| **round);
    for (round, (p0, o_a0, o_a1)) in rounds {
        if let (Some(x), Some(y)) = (o_a0, o_a1) {
            if x != y {
                failures.push(Failure { round: Some(*round), station: None, kind: FailureKind::StationMismatch });
            }
        }
        let Some(o) = o_a0.or(*o_a1) else { continue };
        if *p0 >= 1.0 - DETERMINISTIC_MARGIN || *p0 <= DETERMINISTIC_MARGIN {
            let required = if *p0 >= 0.5 { 0 } else { 1 };
            if o != required {
                failures.push(Failure {
                    round: Some(*round),
                    station: None,
                    kind: FailureKind::DeterministicViolation,
                });
            }
            continue;
        }
        let bin = ((*p0 * stat.bins as f64) as usize).min(stat.bins - 1);
        acc[bin].rounds += 1;
        acc[bin].zeros += (o == 0) as u64;
        acc[bin].sum_p0 += *p0;
    }

    let occupied = acc.iter().filter(|a| a.rounds > 0).count();
    let mut summaries = Vec::new();
    for (bin, a) in acc.iter().enumerate() {
        if a.rounds == 0 {
            continue;
        }
        let mean_p0 = a.sum_p0 / a.rounds as f64;
        let p_value = binomial_two_sided(a.zeros, a.rounds, mean_p0);
        if p_value < stat.alpha / occupied as f64 {
            failures.push(Failure { round: None, station: None, kind: FailureKind::BinBias { bin, p_value } });
        }
        summaries.push(BinSummary { bin, rounds: a.rounds, zeros: a.zeros, mean_p0, p_value });
    }
    summaries
}

/// Two-sided exact binomial p-value for observing `k` successes in `n`
/// trials at success probability `p`.
pub fn binomial_two_sided(k: u64, n: u64, p: f64) -> f64 {
    let dist = Binomial::new(p, n).expect("valid binomial parameters");
    let lower = dist.cdf(k);
    let upper = if k == 0 { 1.0 } else { 1.0 - dist.cdf(k - 1) };
    (2.0 * lower.min(upper)).min(1.0)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_p_values_are_sane() {
        // fair coin, balanced observation: no evidence
        assert!(binomial_two_sided(500, 1000, 0.5) > 0.9);
        // grossly imbalanced: overwhelming evidence
        assert!(binomial_two_sided(700, 1000, 0.5) < 1e-9);
        // small samples never clear a 0.001 bar spuriously
        assert!(binomial_two_sided(3, 3, 0.5) > 0.2);
    }

    #[test]
    fn wilson_interval_brackets_the_point_estimate() {
        let (lo, hi) = wilson_interval(80, 100, 1.96);
        assert!(lo < 0.8 && 0.8 < hi);
        assert!(hi - lo < 0.2);
        let (lo, hi) = wilson_interval(0, 50, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.15);
        assert_eq!(wilson_interval(0, 0, 1.96), (0.0, 1.0));
    }

    #[test]
    fn deterministic_cells_fail_on_any_violation() {
        let mut reports = HashMap::new();
        reports.insert(0u32, (1.0f64, Some(0u8), Some(0u8)));
        reports.insert(1, (1.0, Some(1), Some(1)));
        reports.insert(2, (0.0, Some(1), Some(1)));
        let stat = StatTestConfig::default();
        let mut failures = Vec::new();
        check_statistics(&reports, &stat, &mut failures);
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].round, Some(1));
        assert_eq!(failures[0].kind, FailureKind::DeterministicViolation);
    }

    #[test]
    fn station_mismatch_is_flagged() {
        let mut reports = HashMap::new();
        reports.insert(0u32, (0.5f64, Some(0u8), Some(1u8)));
        let stat = StatTestConfig::default();
        let mut failures = Vec::new();
        check_statistics(&reports, &stat, &mut failures);
        assert!(failures.iter().any(|f| f.kind == FailureKind::StationMismatch));
    }

    #[test]
    fn unbiased_bins_pass_and_biased_bins_fail() {
        let stat = StatTestConfig::default();
        // all rounds predicted p0 = 0.55, observed zero-rate matching
        let mut reports = HashMap::new();
        for i in 0..1000u32 {
            let o = if (i as f64) < 550.0 { 0 } else { 1 };
            reports.insert(i, (0.55, Some(o), Some(o)));
        }
        let mut failures = Vec::new();
        let bins = check_statistics(&reports, &stat, &mut failures);
        assert!(failures.is_empty(), "{failures:?}");
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].rounds, 1000);

        // same predictions, coin-flip observations: bin 5 biased hard
        let mut reports = HashMap::new();
        for i in 0..1000u32 {
            let o = if i % 2 == 0 { 0 } else { 1 };
            reports.insert(i, (0.95, Some(o), Some(o)));
        }
        let mut failures = Vec::new();
        check_statistics(&reports, &stat, &mut failures);
        assert!(failures.iter().any(|f| matches!(f.kind, FailureKind::BinBias { .. })));
    }
}
