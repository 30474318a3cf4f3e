use oxydyn_core::diagnostics::{classify_regime, RegimeLabel};
use oxydyn_core::pde::{run, Grid1D, InitialCondition, RunOptions, SpaceTimeRecord};
use oxydyn_core::ModelParams;

fn record(eps: f64, t_end: f64) -> SpaceTimeRecord {
    let p = ModelParams::default().with_mu2(0.41).with_eps(eps);
    let opts = RunOptions {
        t_end,
        snapshot_interval: 25.0,
        stop_on_anoxia: true,
        ..Default::default()
    };
    run(
        &p,
        5.0,
        &Grid1D::default(),
        &InitialCondition::PaperIc,
        &opts,
    )
    .unwrap()
}

/// Every other snapshot of a record.
fn coarsen(r: &SpaceTimeRecord) -> SpaceTimeRecord {
    let keep = |i: &usize| i % 2 == 0 || *i + 1 == r.snapshots.len();
    SpaceTimeRecord {
        snapshot_times: r
            .snapshot_times
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(i))
            .map(|(_, t)| *t)
            .collect(),
        snapshots: r
            .snapshots
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(i))
            .map(|(_, s)| s.clone())
            .collect(),
        means: r
            .means
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(i))
            .map(|(_, m)| *m)
            .collect(),
        ..r.clone()
    }
}

fn labels(r: &SpaceTimeRecord) -> (RegimeLabel, RegimeLabel) {
    let fine = classify_regime(r, r.c_ref()).unwrap().label;
    let coarse = classify_regime(&coarsen(r), r.c_ref()).unwrap().label;
    (fine, coarse)
}

#[test]
fn turing_configuration_forms_a_pattern() {
    let r = record(1.0, 2000.0);
    let (fine, coarse) = labels(&r);
    assert_eq!(fine, coarse);
    let rep = classify_regime(&r, r.c_ref()).unwrap();
    assert!(rep.evidence.oscillations >= 5.0, "{:?}", rep.evidence);
    assert!(rep.evidence.final_spatial_range > 0.1 * r.c_ref());
    assert!(rep.evidence.anoxia_time.is_none());
}

#[test]
fn slow_zooplankton_is_irregular() {
    let r = record(0.1, 4000.0);
    assert_eq!(
        labels(&r),
        (RegimeLabel::DynamicIrregular, RegimeLabel::DynamicIrregular)
    );
}

#[test]
fn slower_zooplankton_gives_anoxia() {
    let r = record(0.06, 4000.0);
    assert_eq!(
        labels(&r),
        (RegimeLabel::GlobalAnoxia, RegimeLabel::GlobalAnoxia)
    );
    assert!(r.anoxia_time().unwrap() <= 4000.0);
}
