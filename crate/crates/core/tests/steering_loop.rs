use geodss_core::geomodel::generate_truth;
use geodss_core::objectives::dogleg_ok;
use geodss_core::optimizer::Action;
use geodss_core::steering::{
    Decision, EnsembleSource, SessionConfig, SessionSeeds, SessionSnapshot, Status, SteeringSession, TruthSource,
};
use geodss_core::{harness, Landing, Segment};

fn small(seed: u64, n: usize) -> SessionConfig {
    SessionConfig { ensemble_size: n, seeds: SessionSeeds::for_case(seed, 0), ..Default::default() }
}

fn deepest_feasible(s: &SteeringSession) -> f64 {
    let bit = s.bit();
    let t = s.grid().feasible_targets(bit.z_index, bit.inclination);
    s.grid().z_nodes[*t.last().unwrap()]
}

#[test]
fn automatic_run_completes_with_feasible_path() {
    let mut s = SteeringSession::create(small(4, 12)).unwrap();
    let mut steps = 0;
    while s.status() == Status::Drilling {
        let rec = s.recommendation().clone();
        s.step(Decision::Accept).unwrap();
        steps += 1;
        if rec.is_stop() {
            assert_eq!(s.status(), Status::Stopped);
        }
    }
    let c = s.config().clone();
    let d = s.drilled();
    if s.status() == Status::Completed {
        assert_eq!(steps, 13);
        assert!((d.last().unwrap().0 - 371.28).abs() < 1e-9);
    }
    let mut prev = c.start_inclination;
    for w in d.windows(2) {
        let seg = Segment::new(w[0], w[1]);
        assert!(dogleg_ok(prev, &seg, &c.constraints));
        prev = geodss_core::objectives::inclination(&seg).unwrap();
        assert!(prev <= c.constraints.max_inclination + 1e-9);
    }
    let m = s.evaluate().unwrap();
    assert!(m.achieved_value <= m.theoretical_max + 1e-9);
}

#[test]
fn sessions_are_deterministic() {
    let run = || {
        let mut s = SteeringSession::create(small(9, 10)).unwrap();
        s.run_to_end().unwrap();
        serde_json::to_string(&s.snapshot()).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn replay_without_truth_reproduces_every_decision() {
    let mut s = SteeringSession::create(small(2, 10)).unwrap();
    s.step(Decision::Accept).unwrap();
    s.step(Decision::Steer { z: deepest_feasible(&s) }).unwrap();
    s.set_weights(geodss_core::ObjectiveWeights::alternative()).unwrap();
    s.run_to_end().unwrap();
    let json = serde_json::to_string(&s.snapshot()).unwrap();
    let snap: SessionSnapshot = serde_json::from_str(&json).unwrap();
    let r = SteeringSession::replay(&snap).unwrap();
    assert!(r.truth().is_none());
    assert_eq!(r.history(), s.history());
    assert_eq!(r.ensemble(), s.ensemble());
    assert_eq!(r.recommendation(), s.recommendation());
    assert_eq!(r.drilled(), s.drilled());
}

#[test]
fn measurements_do_not_depend_on_anything_but_the_truth() {
    // Same truth and noise seeds, different ensembles: the first measurement is identical.
    let a = small(3, 8);
    let b = SessionConfig { seeds: SessionSeeds { ensemble: 777, ..a.seeds }, ..a.clone() };
    let mut sa = SteeringSession::create(a).unwrap();
    let mut sb = SteeringSession::create(b).unwrap();
    let z = deepest_feasible(&sa);
    let ma = sa.step(Decision::Steer { z }).unwrap().measurement.clone();
    let mb = sb.step(Decision::Steer { z }).unwrap().measurement.clone();
    assert_eq!(ma, mb);
}

#[test]
fn perfect_information_attains_the_optimum() {
    for seed in [1, 5, 11] {
        let c = SessionConfig {
            ensemble_size: 3,
            ensemble_source: EnsembleSource::TruthCopies,
            seeds: SessionSeeds::for_case(seed, 0),
            ..Default::default()
        };
        let mut s = SteeringSession::create(c).unwrap();
        s.run_to_end().unwrap();
        let m = s.evaluate().unwrap();
        assert_eq!(m.achieved_value, m.theoretical_max, "seed {seed}");
        assert_eq!(m.landed_layer, m.optimal_layer);
    }
}

#[test]
fn stopping_at_once_scores_zero() {
    let mut s = SteeringSession::create(small(6, 6)).unwrap();
    s.step(Decision::Stop).unwrap();
    let m = s.evaluate().unwrap();
    assert_eq!(s.status(), Status::Stopped);
    assert_eq!(m.achieved_value, 0.0);
    if m.theoretical_max > 0.0 {
        assert_eq!(m.relative, Some(0.0));
    }
    assert_eq!(m.landed_layer, Landing::None);
    assert!(matches!(s.step(Decision::Accept), Err(geodss_core::Error::State(_))));
}

#[test]
fn overrides_outside_the_envelope_are_refused() {
    let mut s = SteeringSession::create(small(6, 6)).unwrap();
    let before = s.version();
    let z = s.bit_position().1 - 20.0;
    let err = s.step(Decision::Steer { z }).unwrap_err();
    assert!(matches!(err, geodss_core::Error::Constraint { .. }), "{err}");
    assert_eq!(s.version(), before);
    assert!(s.history().is_empty());
}

#[test]
fn fixed_truth_is_used_as_given() {
    let base = small(1, 5);
    let model = generate_truth(&base.geostat, 4242).unwrap();
    let c = SessionConfig { truth: TruthSource::Fixed { model: model.clone() }, ..base };
    let s = SteeringSession::create(c).unwrap();
    assert_eq!(s.truth(), Some(&model));
}

#[test]
fn recommendation_is_a_feasible_grid_move() {
    let s = SteeringSession::create(small(8, 10)).unwrap();
    if let Action::Steer { target_index, inclination_deg, .. } = s.recommendation().action {
        let bit = s.bit();
        let feasible = s.grid().feasible_targets(bit.z_index, bit.inclination);
        assert!(feasible.contains(&target_index));
        assert!(inclination_deg <= s.config().constraints.max_inclination);
    }
}

/// Learning from measurements should not hurt on average.
#[test]
fn assimilation_improves_mean_relative_value() {
    let base = SessionConfig { ensemble_size: 20, ..Default::default() };
    let off = SessionConfig { assimilate: false, ..base.clone() };
    let with = harness::run_bench(50, &base, 1.0, 31).unwrap();
    let without = harness::run_bench(50, &off, 1.0, 31).unwrap();
    let (a, b) = (with.aggregate.mean_relative.unwrap(), without.aggregate.mean_relative.unwrap());
    assert!(a >= b, "with assimilation {a:.1}%, without {b:.1}%");
}
