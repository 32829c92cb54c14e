mod support;

use followup_core::config::FilterConfig;
use followup_core::filters::FilterKind;
use followup_core::harness::{
    emit_report, evaluate, normalize, read_summaries_csv, summarize, Baselines, Harness, Policy,
    RadarEntry, RadarReport, TerminalStatus, TrajectoryRecord, RADAR_AXES,
};
use followup_core::pdmp::{CostParams, Model, ModelParams};
use followup_core::planner::{AlphaSpec, PlannerParams, RolloutPolicy};
use followup_core::ReportError;

fn harness(params: ModelParams) -> Harness {
    Harness::new(
        Model::new(params, CostParams::default()).unwrap(),
        FilterConfig::default(),
    )
}

fn small_pomcp() -> Policy {
    Policy::Pomcp {
        filter: FilterKind::Particle,
        planner: PlannerParams {
            n_search: 30,
            particles: 30,
            alpha: AlphaSpec::Fixed(0.9),
            ..PlannerParams::default()
        },
    }
}

fn check_record(h: &Harness, r: &TrajectoryRecord) {
    let m = h.model();
    let horizon = m.horizon();
    let mut total = 0.0;
    for (n, v) in r.visits.iter().enumerate() {
        assert!([15.0, 30.0, 60.0].contains(&v.decision.days()));
        assert!(v.state.clock < horizon);
        let after = r.state_after(n);
        let expected = m.step_cost(v.state.marker, v.decision, after.marker);
        assert!((v.cost - expected).abs() < 1e-9);
        total += v.cost;
    }
    assert!((r.total_cost - total).abs() < 1e-9);
    assert_eq!(r.verify(m), Ok(()));
    assert!(r.pfs_days >= 0.0 && r.pfs_days <= horizon);
    assert!(r.treatment_days >= 0.0 && r.treatment_days <= horizon);
    match r.terminal {
        TerminalStatus::Death => assert!(r.final_state.is_dead()),
        TerminalStatus::Horizon => {
            assert!(r.final_state.clock >= horizon);
            assert!((40..=160).contains(&r.n_visits()));
        }
    }
}

#[test]
fn trajectories_satisfy_the_accounting_identity() {
    let h = harness(ModelParams::default());
    for policy in [small_pomcp(), Policy::ModeOracle, Policy::UniformRandom] {
        for r in evaluate(&h, &policy, 6, 40).unwrap() {
            check_record(&h, &r);
        }
    }
}

#[test]
fn verification_catches_tampering() {
    let h = harness(ModelParams::default());
    let mut r = h.run_trajectory(&Policy::ModeOracle, 2).unwrap();
    r.total_cost += 1e-6;
    assert!(r.verify(h.model()).is_err());
    r.total_cost -= 1e-6;
    r.visits[0].cost += 1.0;
    assert!(r.verify(h.model()).is_err());
}

#[test]
fn random_policy_without_risk_pays_only_visits() {
    // The overtreatment term still fires on ζ0 under a treatment, so it is
    // switched off to isolate the visit costs.
    let cost = CostParams {
        overtreatment: 0.0,
        ..CostParams::default()
    };
    let h = Harness::new(
        Model::new(ModelParams::default().without_risk(), cost).unwrap(),
        FilterConfig::default(),
    );
    for r in evaluate(&h, &Policy::UniformRandom, 20, 1).unwrap() {
        assert_eq!(r.total_cost, r.n_visits() as f64);
        let elapsed: f64 = r.visits.iter().map(|v| v.decision.days()).sum();
        assert_eq!(r.final_state.clock, elapsed);
        assert!(elapsed - r.visits.last().unwrap().decision.days() < 2400.0 && elapsed >= 2400.0);
        assert_eq!(r.pfs_days, 2400.0);
        assert_eq!(r.terminal, TerminalStatus::Horizon);
    }
    let h = harness(ModelParams::default().without_risk());
    for r in evaluate(&h, &Policy::UniformRandom, 5, 1).unwrap() {
        let overtreated: f64 = r
            .visits
            .iter()
            .filter(|v| v.decision.treatment.is_active())
            .map(|v| 0.1 * v.decision.days())
            .sum();
        assert!((r.total_cost - r.n_visits() as f64 - overtreated).abs() < 1e-9);
    }
}

#[test]
fn oracle_treats_the_true_mode() {
    let h = harness(ModelParams::default());
    for r in evaluate(&h, &Policy::ModeOracle, 20, 7).unwrap() {
        for v in &r.visits {
            assert_eq!(v.decision, RolloutPolicy::mode_decision(v.state.mode));
        }
    }
}

#[test]
fn identical_seeds_replay_identically() {
    let h = harness(ModelParams::default());
    let strip = |mut r: TrajectoryRecord| {
        r.runtime_s = 0.0;
        for v in &mut r.visits {
            if let Some(p) = v.plan.as_mut() {
                p.elapsed_ms = 0.0;
            }
        }
        r
    };
    let a = strip(h.run_trajectory(&small_pomcp(), 12).unwrap());
    let b = strip(h.run_trajectory(&small_pomcp(), 12).unwrap());
    assert_eq!(a, b);
    let batch = evaluate(&h, &small_pomcp(), 3, 12).unwrap();
    assert_eq!(strip(batch[0].clone()), a);
}

#[test]
fn reports_round_trip() {
    let h = harness(ModelParams::default());
    let dir = tempfile::tempdir().unwrap();
    let records = evaluate(&h, &Policy::UniformRandom, 4, 3).unwrap();
    let oracle = evaluate(&h, &Policy::ModeOracle, 4, 3).unwrap();
    let summaries = vec![
        summarize("random", &Policy::UniformRandom, &records),
        summarize("oracle", &Policy::ModeOracle, &oracle),
    ];
    let baselines = Baselines {
        horizon: 2400.0,
        random_death_rate: 0.05,
        random_cost: 260.0,
        v0: 0.0,
    };
    let entries = vec![
        RadarEntry {
            strategy: "random".into(),
            metrics: normalize(&records, &baselines).unwrap(),
        },
        RadarEntry {
            strategy: "oracle".into(),
            metrics: normalize(&oracle, &baselines).unwrap(),
        },
    ];
    let radar = RadarReport::new(baselines, false, entries);
    let written = emit_report(dir.path(), &summaries, Some(&radar)).unwrap();
    assert_eq!(written.len(), 2);
    assert_eq!(read_summaries_csv(&written[0]).unwrap(), summaries);
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&written[1]).unwrap()).unwrap();
    assert_eq!(json["axes"].as_array().unwrap().len(), RADAR_AXES.len());
    assert_eq!(json["v0_source"], "unset");
    assert!(matches!(
        emit_report(dir.path(), &[], None),
        Err(ReportError::NoStrategies)
    ));
}

#[test]
fn normalization_examples() {
    let h = harness(ModelParams::default().without_risk());
    let mut r = h.run_trajectory(&Policy::ModeOracle, 0).unwrap();
    assert_eq!(r.n_visits(), 160);
    let baselines = Baselines {
        horizon: 2400.0,
        random_death_rate: 0.05,
        random_cost: r.total_cost,
        v0: 0.0,
    };
    let n = normalize(std::slice::from_ref(&r), &baselines).unwrap();
    assert_eq!(n.pfs, 0.0);
    assert_eq!(n.visits, 1.0);
    assert_eq!(n.cost, 1.0);
    assert_eq!(n.death, 0.0);
    r.visits.truncate(100);
    assert_eq!(normalize(&[r.clone()], &baselines).unwrap().visits, 0.5);
    let flat = Baselines {
        v0: r.total_cost,
        random_cost: r.total_cost,
        ..baselines
    };
    assert!(normalize(&[r], &flat).is_err());
}

#[test]
fn single_trajectory_summary_is_degenerate() {
    let h = harness(ModelParams::default());
    let records = evaluate(&h, &Policy::ModeOracle, 1, 5).unwrap();
    let s = summarize("oracle", &Policy::ModeOracle, &records);
    assert!(s.degenerate);
    assert_eq!(s.half_width, 0.0);
}
