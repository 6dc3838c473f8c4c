//! One full tagging session wired end to end: Alice's stations, the tag, an
//! optional adversary, the event loop, and the final verdict.

use rand::Rng;

use crate::adversary::{self, AdversaryConfig, AdversaryKind};
use crate::qstate;
use crate::rng::trial_rng;
use crate::schemes::{self, ExpectedRecord, RoundPlan, SchemeConfig, TagHandler};
use crate::verdict::{self, StatTestConfig, Verdict};
use crate::worldline::{Sim, SimError, Sink, Transcript};

#[derive(Debug)]
pub struct SessionResult {
    pub verdict: Verdict,
    pub transcript: Transcript,
    pub plans: Vec<RoundPlan>,
    pub expected: Vec<ExpectedRecord>,
    /// Mean distance between Eve's conditional report distribution and the
    /// Born probabilities, over the teleported-measurement rounds.
    pub inference_error: Option<f64>,
}

/// Runs one session: honest when `adversary` is `None`, attacked otherwise.
/// All randomness is derived from `(master, trial)`.
pub fn run_session(
    scheme: &SchemeConfig,
    adversary_cfg: Option<&AdversaryConfig>,
    stat: &StatTestConfig,
    master: u64,
    trial: u64,
) -> Result<SessionResult, SimError> {
    scheme.validate()?;
    let mut sim = Sim::new();
    let a0 = sim.add_agent(scheme.geometry.a0, Box::new(Sink));
    let a1 = sim.add_agent(scheme.geometry.a1, Box::new(Sink));
    let tag_on = adversary_cfg.map_or(true, |a| a.kind.tag_on());
    sim.add_agent(
        scheme.geometry.t_plus,
        Box::new(TagHandler::new(tag_on, scheme.clone(), trial_rng(master, "tag", trial))),
    );

    let mut alice_rng = trial_rng(master, "alice", trial);
    let (plans, expected) = schemes::plan_rounds(scheme, &mut alice_rng)?;
    schemes::install_protocol(&mut sim, scheme, &plans, a0, a1);

    let eve = match adversary_cfg {
        Some(cfg) => {
            Some(adversary::install_adversary(&mut sim, scheme, cfg, trial_rng(master, "eve", trial))?)
        }
        None => None,
    };

    let mut until = scheme.t_star(scheme.rounds - 1) + 2.0 * scheme.geometry.span() + 5.0;
    if let Some(AdversaryConfig { kind: AdversaryKind::RecordReplay { delay }, .. }) = adversary_cfg {
        until += delay;
    }
    sim.run(until)?;
    let (transcript, mut store) = sim.into_outcome();

    let mut verifier_rng = trial_rng(master, "verifier", trial);
    let verdict = verdict::verify(
        scheme,
        &expected,
        &transcript,
        &mut store,
        a0,
        a1,
        stat,
        &mut verifier_rng,
    );

    let inference_error = eve.as_ref().and_then(|shared| {
        let shared = shared.borrow();
        if shared.inference.is_empty() {
            return None;
        }
        let total: f64 = shared
            .inference
            .iter()
            .map(|rec| {
                let plan = &plans[rec.round as usize];
                let basis = plan.basis.as_ref().expect("inference records only on measure rounds");
                let p0 = qstate::prob_outcome0(&plan.psi, basis);
                (adversary::report_zero_prob(&plan.psi, basis, rec.bell) - p0).abs()
            })
            .sum();
        Some(total / shared.inference.len() as f64)
    });

    Ok(SessionResult { verdict, transcript, plans, expected, inference_error })
}

/// Spoof-rate estimate over repeated independent sessions.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SpoofEstimate {
    pub accepted: u64,
    pub trials: u64,
    pub p_hat: f64,
    /// Wilson 95% interval for the acceptance probability.
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_inference_error: Option<f64>,
}

pub fn estimate_spoof_rate(
    scheme: &SchemeConfig,
    adversary_cfg: Option<&AdversaryConfig>,
    stat: &StatTestConfig,
    trials: u64,
    master: u64,
) -> Result<SpoofEstimate, SimError> {
    let mut accepted = 0;
    let mut err_sum = 0.0;
    let mut err_count = 0u64;
    for trial in 0..trials {
        let result = run_session(scheme, adversary_cfg, stat, master, trial)?;
        accepted += result.verdict.accept as u64;
        if let Some(e) = result.inference_error {
            err_sum += e;
            err_count += 1;
        }
    }
    let (ci_low, ci_high) = verdict::wilson_interval(accepted, trials, 1.96);
    Ok(SpoofEstimate {
        accepted,
        trials,
        p_hat: accepted as f64 / trials as f64,
        ci_low,
        ci_high,
        mean_inference_error: (err_count > 0).then(|| err_sum / err_count as f64),
    })
}

/// Default adversary geometry: Eve's sites at the midpoints between the tag
/// and each station.
pub fn midpoint_adversary(kind: AdversaryKind, scheme: &SchemeConfig) -> AdversaryConfig {
    let g = &scheme.geometry;
    AdversaryConfig {
        kind,
        e0: (g.a0 + g.t_plus) / 2.0,
        e1: (g.t_plus + g.a1) / 2.0,
    }
}

/// Convenience: uniformly seeded scheme config used across tests and the CLI
/// demo geometry.
pub fn demo_scheme(id: crate::schemes::SchemeId, rounds: u32) -> SchemeConfig {
    let geometry = crate::schemes::Geometry::new(0.0, 5.0, 10.0).expect("valid demo geometry");
    SchemeConfig::new(id, geometry, rounds)
}

/// Uniform random session sanity: draws a master seed per call site label.
pub fn derive_master(label: &str, base: u64) -> u64 {
    let mut rng = crate::rng::component_rng(base, label);
    rng.gen()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::SchemeId;

    #[test]
    fn honest_session_is_accepted_for_every_scheme() {
        for id in SchemeId::ALL {
            let scheme = demo_scheme(id, 40);
            let result = run_session(&scheme, None, &StatTestConfig::default(), 42, 0).unwrap();
            assert!(
                result.verdict.accept,
                "scheme {id} rejected: {:?}",
                result.verdict.failures
            );
            assert!(result.verdict.max_timing_dev <= scheme.epsilon_t);
        }
    }

    #[test]
    fn sessions_are_reproducible() {
        let scheme = demo_scheme(SchemeId::III, 25);
        let run = || {
            let r = run_session(&scheme, None, &StatTestConfig::default(), 7, 3).unwrap();
            r.transcript.to_text()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn different_trials_differ() {
        let scheme = demo_scheme(SchemeId::I, 10);
        let a = run_session(&scheme, None, &StatTestConfig::default(), 7, 0).unwrap();
        let b = run_session(&scheme, None, &StatTestConfig::default(), 7, 1).unwrap();
        assert_ne!(a.transcript.to_text(), b.transcript.to_text());
    }

    #[test]
    fn passive_eve_changes_nothing_at_the_stations() {
        let scheme = demo_scheme(SchemeId::IV, 30);
        let passive = midpoint_adversary(AdversaryKind::Passive, &scheme);
        let result = run_session(&scheme, Some(&passive), &StatTestConfig::default(), 9, 0).unwrap();
        assert!(result.verdict.accept, "{:?}", result.verdict.failures);
        assert!(result.verdict.max_timing_dev <= scheme.epsilon_t);
    }

    #[test]
    fn silent_tag_off_fails_every_round() {
        let scheme = demo_scheme(SchemeId::III, 20);
        let silent = midpoint_adversary(AdversaryKind::TagOffSilent, &scheme);
        let result = run_session(&scheme, Some(&silent), &StatTestConfig::default(), 11, 0).unwrap();
        assert!(!result.verdict.accept);
        // every expected record is missing: no reports ever come back
        let missing = result
            .verdict
            .failures
            .iter()
            .filter(|f| matches!(f.kind, crate::verdict::FailureKind::Missing))
            .count();
        assert_eq!(missing, result.expected.len());
    }
}
