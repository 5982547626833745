use std::collections::BTreeSet;

use fusim_core::fed::{train_stage, AccessKind, HistoryStore, Stage, StorageMode};
use fusim_core::model::{
    evaluate, make_synthetic_dataset, partition, Dataset, FixedPointCodec, Mlp, MlpConfig, PartitionSpec, SgdConfig,
};
use fusim_core::sim::{generate_workload, simulate_stage, Arrival, Distribution, SimOptions, WorkloadSpec};
use fusim_core::unlearn::{run_baseline_fr, run_unlearning_se, UnlearnJob};
use fusim_core::{Error, ParamVector};

fn stage(clients: usize, shards: usize, rounds: u32, seed: u64) -> Stage {
    let data = make_synthetic_dataset(4, 15 * clients, 6, 0.4, seed).unwrap();
    let parts = partition(&data, &PartitionSpec::iid(clients, seed)).unwrap();
    let model = Mlp::new(&MlpConfig { input_dim: 6, hidden: vec![8], num_classes: 4 }).unwrap();
    Stage::from_clients(0, parts, shards, rounds, 3, model, SgdConfig::default(), seed).unwrap()
}

#[test]
fn coded_history_matches_uncoded_within_resolution() {
    let st = stage(8, 2, 3, 1);
    let mut plain = HistoryStore::uncoded(&st);
    let mut coded = HistoryStore::coded(&st, FixedPointCodec::default(), 9).unwrap();
    assert_eq!(train_stage(&st, &mut plain).unwrap(), train_stage(&st, &mut coded).unwrap());
    let tol = FixedPointCodec::default().resolution() + 1e-9;
    for shard in 0..2 {
        for round in 1..=3 {
            let a = plain.fetch_round(shard, round).unwrap();
            let b = coded.fetch_round(shard, round).unwrap();
            assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
            for (x, y) in a.values().zip(b.values()) {
                for (u, v) in x.values().iter().zip(y.values()) {
                    assert!((*u as f64 - *v as f64).abs() <= tol);
                }
            }
        }
    }
    let report = coded.storage_report();
    assert_eq!(report.mode, StorageMode::Coded);
    assert_eq!(report.server_payload_bytes, 0);
    // 3 rounds, 8 slices, a block of 4 clients
    assert_eq!(report.client_payload_bytes, 3 * 8 * 4 * st.model().dim() as u64 * 8);
    assert_eq!(plain.storage_report().server_payload_bytes, 3 * 8 * st.model().dim() as u64 * 4);
}

#[test]
fn coded_history_survives_corrupted_slices() {
    let st = stage(10, 2, 2, 2);
    let mut coded = HistoryStore::coded(&st, FixedPointCodec::default(), 1).unwrap();
    train_stage(&st, &mut coded).unwrap();
    let before = coded.fetch_round(1, 2).unwrap();
    // e = (10 - 2) / 2 = 4, tamper with two holders including their tags
    for slice in coded.slices_mut(2).unwrap().iter_mut().take(2) {
        slice.values[0] ^= 1;
        *slice = fusim_core::coded::CodedSlice::new(slice.client_id, slice.round, slice.values.clone());
    }
    assert_eq!(coded.fetch_round(1, 2).unwrap(), before);
    for slice in coded.slices_mut(2).unwrap().iter_mut().skip(2).take(3) {
        slice.values[0] ^= 1;
        *slice = fusim_core::coded::CodedSlice::new(slice.client_id, slice.round, slice.values.clone());
    }
    assert!(matches!(coded.fetch_round(1, 2), Err(Error::DecodeFailure(_))));
}

fn accuracy(st: &Stage, params: &ParamVector, data: &Dataset) -> f64 {
    evaluate(st.model(), params, data).unwrap().accuracy
}

#[test]
fn se_and_fr_agree_on_retained_accuracy() {
    let st = stage(12, 3, 10, 3);
    let mut h = HistoryStore::coded(&st, FixedPointCodec::default(), 3).unwrap();
    train_stage(&st, &mut h).unwrap();
    let target = st.shards()[1].client_ids[0];
    let job = UnlearnJob::new(1, BTreeSet::from([target]), 10, 2.0).unwrap();
    let se = run_unlearning_se(&st, &h, &job).unwrap();
    let fr = run_baseline_fr(&st, &job).unwrap();
    let retained: Vec<&Dataset> = st
        .client_ids()
        .into_iter()
        .filter(|&c| c != target)
        .map(|c| st.client_data(st.shard_of(c).unwrap(), c).unwrap())
        .collect();
    let retained = Dataset::concat(retained).unwrap();
    let (a, b) = (accuracy(&st, &se.params, &retained), accuracy(&st, &fr.params, &retained));
    assert!(a > 0.8 && b > 0.8, "SE {a} FR {b}");
    assert!(se.client_epochs() < fr.client_epochs());
}

#[test]
fn single_request_only_touches_its_shard() {
    let st = stage(12, 4, 2, 4);
    let mut h = HistoryStore::uncoded(&st);
    train_stage(&st, &mut h).unwrap();
    st.access_log().clear();
    h.access_log().clear();
    let spec = WorkloadSpec { arrival: Arrival::Concurrent, distribution: Distribution::Adaptive, k: 1, seed: 8 };
    let reqs = generate_workload(&spec, &st).unwrap();
    let opts = SimOptions { arrival: Arrival::Concurrent, distribution: Distribution::Adaptive, ..Default::default() };
    let res = simulate_stage(&st, &h, &reqs, &opts).unwrap();
    let shard = reqs[0].shard_id;
    assert_eq!(res.ledger.passes.keys().copied().collect::<Vec<_>>(), vec![shard]);
    assert_eq!(st.access_log().shards(), BTreeSet::from([shard]));
    assert_eq!(h.access_log().shards(), BTreeSet::from([shard]));
    assert!(h.access_log().events().iter().all(|e| e.kind == AccessKind::HistoryRead));
}
