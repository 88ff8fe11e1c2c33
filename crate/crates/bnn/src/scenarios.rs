//! Named run variants probing robustness: repeat runs with different initial
//! weights, and sweeps over link delay and jitter. The report checks that the
//! qualitative pattern — per-phase majority plasticity decision on the
//! forward synapse, the phase in which the biological neuron starts firing,
//! and the sign of the postsynaptic rate change while it is active — is
//! preserved across the initial-weight variants.

use std::io::Write;
use std::path::Path;

use crate::config::{LinkConfig, RunConfig};
use crate::experiment::{run_experiment, RunArtifacts, RunError};
use crate::plasticity::PlasticityDecision;
use crate::protocol::EventKind;

/// A named variant of a base run configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub cfg: RunConfig,
}

/// The built-in suite derived from a base configuration.
pub fn builtin_suite(base: &RunConfig) -> Vec<Scenario> {
    let mut suite = Vec::new();
    suite.push(Scenario {
        name: "canned".into(),
        cfg: base.clone(),
    });

    let mut repeat = base.clone();
    let w0 = repeat.memristor.initial_weight_of("ABm");
    let alt = if (w0 - 0.3).abs() < 1e-9 { 0.5 } else { 0.3 };
    repeat.memristor.initial_weight.insert("ABm".into(), alt);
    suite.push(Scenario {
        name: format!("repeat-initial-abm-{alt}"),
        cfg: repeat,
    });

    for delay_ms in [10.0, 90.0] {
        let mut cfg = base.clone();
        cfg.transport
            .set_all_links(LinkConfig::fixed(delay_ms, 2.0));
        suite.push(Scenario {
            name: format!("delay-{delay_ms:.0}ms"),
            cfg,
        });
    }
    for jitter_ms in [0.0, 2.0] {
        let mut cfg = base.clone();
        cfg.transport
            .set_all_links(LinkConfig::fixed(50.0, jitter_ms));
        suite.push(Scenario {
            name: format!("jitter-{jitter_ms:.0}ms"),
            cfg,
        });
    }
    suite
}

/// Select a subset of the built-in suite by name; `None` selects everything.
pub fn select_scenarios(base: &RunConfig, names: Option<&[String]>) -> Vec<Scenario> {
    let all = builtin_suite(base);
    match names {
        None => all,
        Some(wanted) => all
            .into_iter()
            .filter(|s| wanted.iter().any(|w| w == &s.name))
            .collect(),
    }
}

/// Qualitative fingerprint of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Qualitative {
    /// Per-phase majority decision on the forward synapse.
    pub forward_majority: Vec<PlasticityDecision>,
    /// Schedule phase in which the biological neuron first fired, if any.
    pub bn_onset_phase: Option<usize>,
    /// Sign of the postsynaptic-rate change while the biological neuron is
    /// active, versus the first-phase baseline: -1, 0 or +1.
    pub anpost_modulation_sign: i8,
}

pub fn qualitative_fingerprint(cfg: &RunConfig, art: &RunArtifacts) -> Qualitative {
    let forward_majority = art
        .summary
        .iter()
        .map(|phase| {
            phase
                .synapses
                .iter()
                .find(|s| s.synapse_id == "ABm")
                .map(|s| s.majority())
                .unwrap_or(PlasticityDecision::NoChange)
        })
        .collect();

    let boundaries = cfg.schedule.boundaries_ms();
    let bn_aps: Vec<u64> = art
        .events
        .iter()
        .filter(|e| {
            e.neuron_id == cfg.nodes.bn_id
                && matches!(e.kind, EventKind::ForcedAp | EventKind::SpontaneousAp)
        })
        .map(|e| e.abs_time_ms)
        .collect();
    let bn_onset_phase = bn_aps
        .first()
        .map(|&t| boundaries.partition_point(|&b| b <= t).saturating_sub(1));

    let anpost_modulation_sign = match (bn_aps.first(), bn_aps.last()) {
        (Some(&first), Some(&last)) if last > first => {
            let window_s = (last - first) as f64 / 1000.0;
            let active = art
                .events
                .iter()
                .filter(|e| {
                    e.neuron_id == cfg.nodes.anpost_id && (first..=last).contains(&e.abs_time_ms)
                })
                .count() as f64
                / window_s;
            let baseline = art.summary.first().map(|p| p.anpost_rate_hz).unwrap_or(0.0);
            if active > baseline * 1.05 {
                1
            } else if active < baseline * 0.95 {
                -1
            } else {
                0
            }
        }
        _ => 0,
    };

    Qualitative {
        forward_majority,
        bn_onset_phase,
        anpost_modulation_sign,
    }
}

/// Outcome of one scenario; failures are isolated per scenario.
#[derive(Debug)]
pub struct ScenarioOutcome {
    pub name: String,
    pub result: Result<Qualitative, RunError>,
}

#[derive(Debug)]
pub struct SuiteReport {
    pub outcomes: Vec<ScenarioOutcome>,
    /// True when every initial-weight variant reproduced the canned run's
    /// qualitative fingerprint.
    pub weight_variants_match: bool,
}

/// Run every scenario, writing per-scenario artifacts under
/// `out_root/<name>/` and a comparison table to `out_root/scenarios_report.csv`.
pub fn run_scenario_suite(scenarios: &[Scenario], out_root: &Path) -> std::io::Result<SuiteReport> {
    let mut outcomes = Vec::new();
    for scenario in scenarios {
        let out_dir = out_root.join(&scenario.name);
        let result = run_experiment(&scenario.cfg, &out_dir)
            .map(|art| qualitative_fingerprint(&scenario.cfg, &art));
        if let Err(e) = &result {
            log::warn!("scenario {} failed: {e}", scenario.name);
        }
        outcomes.push(ScenarioOutcome {
            name: scenario.name.clone(),
            result,
        });
    }

    let reference = outcomes
        .iter()
        .find(|o| o.name == "canned")
        .and_then(|o| o.result.as_ref().ok());
    let weight_variants_match = match reference {
        Some(reference) => outcomes
            .iter()
            .filter(|o| o.name.starts_with("repeat-initial"))
            .all(|o| match &o.result {
                Ok(q) => {
                    q.forward_majority == reference.forward_majority
                        && q.bn_onset_phase == reference.bn_onset_phase
                        && q.anpost_modulation_sign == reference.anpost_modulation_sign
                }
                Err(_) => false,
            }),
        None => false,
    };

    std::fs::create_dir_all(out_root)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(
        out_root.join("scenarios_report.csv"),
    )?);
    writeln!(
        f,
        "scenario,status,forward_majority,bn_onset_phase,anpost_modulation_sign"
    )?;
    for o in &outcomes {
        match &o.result {
            Ok(q) => {
                let majority: Vec<&str> = q.forward_majority.iter().map(|d| d.as_str()).collect();
                writeln!(
                    f,
                    "{},ok,{},{},{}",
                    o.name,
                    majority.join("/"),
                    o.bn_onset_phase_str(),
                    q.anpost_modulation_sign
                )?;
            }
            Err(e) => writeln!(f, "{},error: {},,,", o.name, e)?,
        }
    }
    writeln!(f, "weight_variants_match,,{weight_variants_match},,")?;
    f.flush()?;

    Ok(SuiteReport {
        outcomes,
        weight_variants_match,
    })
}

impl ScenarioOutcome {
    fn bn_onset_phase_str(&self) -> String {
        match &self.result {
            Ok(Qualitative {
                bn_onset_phase: Some(p),
                ..
            }) => p.to_string(),
            _ => "none".into(),
        }
    }
}
