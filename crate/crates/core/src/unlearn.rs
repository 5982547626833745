//! Calibrated shard retraining and the two reference baselines.
//!
//! - SE: start from the mean of the retained clients' final-round vectors,
//!   then replay every round with shortened local training, rescaling each
//!   fresh update to the magnitude of the stored one.
//! - FR: federated retraining from scratch over every remaining client.
//! - FE: SE applied to an unsharded (single-shard) history.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fed::{fedavg_aggregate, HistoryStore, Stage};
use crate::model::ParamVector;
use crate::rng::tag;
use crate::{ClientId, Round, ShardId};

/// Norm below which an update is treated as zero.
pub const EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Se,
    Fr,
    Fe,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Se, Method::Fr, Method::Fe];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Se => "SE",
            Method::Fr => "FR",
            Method::Fe => "FE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SE" => Ok(Method::Se),
            "FR" => Ok(Method::Fr),
            "FE" => Ok(Method::Fe),
            _ => Err(Error::invalid(format!("unknown method {s:?}, expected SE, FR or FE"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlearnJob {
    pub shard_id: ShardId,
    pub unlearn_client_ids: BTreeSet<ClientId>,
    pub rounds: Round,
    pub local_epoch_ratio: f64,
}

impl UnlearnJob {
    pub fn new(
        shard_id: ShardId,
        clients: impl IntoIterator<Item = ClientId>,
        rounds: Round,
        ratio: f64,
    ) -> Result<Self> {
        let unlearn_client_ids: BTreeSet<_> = clients.into_iter().collect();
        if unlearn_client_ids.is_empty() {
            return Err(Error::invalid("an unlearning job needs at least one client"));
        }
        if !(ratio.is_finite() && ratio >= 1.0) {
            return Err(Error::invalid(format!("local epoch ratio must be >= 1, got {ratio}")));
        }
        Ok(Self { shard_id, unlearn_client_ids, rounds, local_epoch_ratio: ratio })
    }

    /// `⌈L / r⌉`.
    pub fn local_epochs(&self, full: usize) -> usize {
        ceil_div_ratio(full, self.local_epoch_ratio)
    }

    /// Shard members that stay, in client order.
    pub fn retained(&self, members: &[ClientId]) -> Result<Vec<ClientId>> {
        if let Some(&c) = self.unlearn_client_ids.iter().find(|c| !members.contains(c)) {
            return Err(Error::UnknownClient(c));
        }
        let retained: Vec<_> = members.iter().copied().filter(|c| !self.unlearn_client_ids.contains(c)).collect();
        if retained.is_empty() {
            return Err(Error::EmptyRetained(self.shard_id));
        }
        Ok(retained)
    }

    /// The same removal addressed to shard 0 of a single-shard stage.
    pub fn unsharded(&self) -> Self {
        Self { shard_id: 0, ..self.clone() }
    }
}

pub fn ceil_div_ratio(full: usize, ratio: f64) -> usize {
    let e = (full as f64 / ratio - 1e-9).ceil();
    e.max(0.0) as usize
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundCost {
    pub round: Round,
    pub client_epochs: u64,
    pub bytes_moved: u64,
    pub transfers: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnlearnOutcome {
    pub method: Method,
    pub shard_id: ShardId,
    pub params: ParamVector,
    pub rounds: Vec<RoundCost>,
}

impl UnlearnOutcome {
    pub fn client_epochs(&self) -> u64 {
        self.rounds.iter().map(|r| r.client_epochs).sum()
    }

    pub fn bytes_moved(&self) -> u64 {
        self.rounds.iter().map(|r| r.bytes_moved).sum()
    }

    pub fn transfers(&self) -> u64 {
        self.rounds.iter().map(|r| r.transfers).sum()
    }
}

fn mean_of(map: &BTreeMap<ClientId, ParamVector>, clients: &[ClientId]) -> Result<ParamVector> {
    fedavg_aggregate(clients.iter().map(|c| &map[c]))
}

fn only(map: BTreeMap<ClientId, ParamVector>, clients: &[ClientId]) -> BTreeMap<ClientId, ParamVector> {
    let mut map = map;
    map.retain(|c, _| clients.contains(c));
    map
}

/// Mean of the retained clients' final-round vectors.
pub fn prepare_unlearned_init(history: &HistoryStore, job: &UnlearnJob) -> Result<ParamVector> {
    let retained = job.retained(history.shard_clients(job.shard_id)?)?;
    let last = history.latest_round(job.shard_id);
    if last == 0 {
        return Err(Error::NotFound { shard: job.shard_id, round: 0 });
    }
    let round = only(history.fetch_round(job.shard_id, last)?, &retained);
    mean_of(&round, &retained)
}

/// `current + (1/M) Σ_m (‖stored_m‖ / ‖fresh_m‖) · fresh_m`, skipping terms
/// whose fresh norm is below `epsilon`.
pub fn calibrated_round(
    current: &ParamVector,
    stored: &BTreeMap<ClientId, ParamVector>,
    fresh: &BTreeMap<ClientId, ParamVector>,
    epsilon: f64,
) -> Result<ParamVector> {
    if !stored.keys().eq(fresh.keys()) {
        return Err(Error::KeySetMismatch);
    }
    if stored.is_empty() {
        return Err(Error::invalid("calibration needs at least one client"));
    }
    let mut acc = vec![0f64; current.dim()];
    for (c, f) in fresh {
        let s = &stored[c];
        current.ensure_same_dim(s)?;
        current.ensure_same_dim(f)?;
        let fnorm = f.norm();
        if fnorm < epsilon {
            continue;
        }
        let ratio = s.norm() / fnorm;
        for (a, &v) in acc.iter_mut().zip(f.values()) {
            *a += ratio * v as f64;
        }
    }
    let m = stored.len() as f64;
    let values = current.values().iter().zip(acc).map(|(&c, a)| (c as f64 + a / m) as f32).collect();
    current.with_values(values)
}

fn calibrated_replay(
    stage: &Stage,
    history: &HistoryStore,
    job: &UnlearnJob,
    method: Method,
) -> Result<UnlearnOutcome> {
    let shard = job.shard_id;
    let cfg = stage.shard(shard)?;
    if history.shard_clients(shard)? != cfg.client_ids.as_slice() {
        return Err(Error::invalid(format!("history of shard {shard} does not match the stage")));
    }
    let retained = job.retained(&cfg.client_ids)?;
    let available = history.latest_round(shard);
    if job.rounds > available {
        return Err(Error::NotFound { shard, round: job.rounds });
    }
    if available == 0 {
        // nothing was trained, so the initialization holds no client data
        return Ok(UnlearnOutcome { method, shard_id: shard, params: stage.shard_init(shard), rounds: Vec::new() });
    }
    let epochs = job.local_epochs(cfg.local_epochs);
    let d = history.layout().dim() as u64;
    let m = retained.len() as u64;
    let retrieval = (history.num_slots() as u64, history.num_slots() as u64 * history.slice_bytes());

    let final_round = only(history.fetch_round(shard, available)?, &retained);
    let mut current = mean_of(&final_round, &retained)?;
    let mut prev_mean = stage.shard_init(shard);
    let mut costs = Vec::with_capacity(job.rounds as usize);
    for g in 1..=job.rounds {
        let stored_round =
            if g == available { final_round.clone() } else { only(history.fetch_round(shard, g)?, &retained) };
        let fresh = stage.local_round(shard, &retained, &current, epochs, g, tag::UNLEARN)?;
        let fresh_updates =
            fresh.iter().map(|(&c, p)| Ok((c, p.sub(&current)?))).collect::<Result<BTreeMap<_, _>>>()?;
        let stored_updates =
            stored_round.iter().map(|(&c, p)| Ok((c, p.sub(&prev_mean)?))).collect::<Result<BTreeMap<_, _>>>()?;
        current = calibrated_round(&current, &stored_updates, &fresh_updates, EPSILON)?;
        prev_mean = mean_of(&stored_round, &retained)?;
        costs.push(RoundCost {
            round: g,
            client_epochs: m * epochs as u64,
            bytes_moved: 2 * m * d * 4 + retrieval.1,
            transfers: 2 * m + retrieval.0,
        });
    }
    Ok(UnlearnOutcome { method, shard_id: shard, params: current, rounds: costs })
}

/// Calibrated retraining of the job's shard. Only that shard's data and
/// history are read.
pub fn run_unlearning_se(stage: &Stage, history: &HistoryStore, job: &UnlearnJob) -> Result<UnlearnOutcome> {
    calibrated_replay(stage, history, job, Method::Se)
}

/// Federated retraining from a fresh initialization over every stage client
/// except the unlearned ones, ignoring shard boundaries.
pub fn run_baseline_fr(stage: &Stage, job: &UnlearnJob) -> Result<UnlearnOutcome> {
    let flat = stage.single_shard();
    let cfg = flat.shard(0)?;
    let retained = job.unsharded().retained(&cfg.client_ids)?;
    let m = retained.len() as u64;
    let d = flat.model().dim() as u64;
    let mut global = flat.shard_init(0);
    let mut costs = Vec::with_capacity(job.rounds as usize);
    for g in 1..=job.rounds {
        let clients = flat.local_round(0, &retained, &global, cfg.local_epochs, g, tag::RETRAIN)?;
        global = fedavg_aggregate(clients.values())?;
        costs.push(RoundCost {
            round: g,
            client_epochs: m * cfg.local_epochs as u64,
            bytes_moved: 2 * m * d * 4,
            transfers: 2 * m,
        });
    }
    Ok(UnlearnOutcome { method: Method::Fr, shard_id: job.shard_id, params: global, rounds: costs })
}

/// Calibrated retraining over an unsharded history. `stage` and `history`
/// must have exactly one shard.
pub fn run_baseline_fe(stage: &Stage, history: &HistoryStore, job: &UnlearnJob) -> Result<UnlearnOutcome> {
    if stage.num_shards() != 1 || history.shards().count() != 1 {
        return Err(Error::invalid(format!(
            "FE needs a single-shard history, found {} shards",
            history.shards().count().max(stage.num_shards())
        )));
    }
    let mut out = calibrated_replay(stage, history, &job.unsharded(), Method::Fe)?;
    out.shard_id = job.shard_id;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fed::{train_stage, Stage};
    use crate::model::{
        evaluate, make_synthetic_dataset, partition, Dataset, Mlp, MlpConfig, PartitionSpec, SgdConfig,
    };
    use std::sync::Arc;

    fn pv(v: &[f32]) -> ParamVector {
        ParamVector::from_values(v.to_vec()).unwrap()
    }

    fn stage(clients: usize, shards: usize, rounds: Round, epochs: usize, seed: u64) -> Stage {
        let data = make_synthetic_dataset(3, 20 * clients, 4, 0.3, seed).unwrap();
        let parts = partition(&data, &PartitionSpec::iid(clients, seed)).unwrap();
        let model = Mlp::new(&MlpConfig { input_dim: 4, hidden: vec![8], num_classes: 3 }).unwrap();
        Stage::from_clients(0, parts, shards, rounds, epochs, model, SgdConfig::default(), seed).unwrap()
    }

    fn trained(s: &Stage) -> HistoryStore {
        let mut h = HistoryStore::uncoded(s);
        train_stage(s, &mut h).unwrap();
        h
    }

    #[test]
    fn calibration_examples() {
        let one = |v: &[f32]| BTreeMap::from([(0, pv(v))]);
        let out = calibrated_round(&pv(&[1.0]), &one(&[2.0]), &one(&[0.5]), EPSILON).unwrap();
        assert_eq!(out.values(), &[3.0]);
        let out = calibrated_round(&pv(&[1.0, -2.0]), &one(&[5.0, 1.0]), &one(&[0.0, 0.0]), EPSILON).unwrap();
        assert_eq!(out.values(), &[1.0, -2.0]);
        let a = BTreeMap::from([(1, pv(&[1.0])), (2, pv(&[3.0]))]);
        let b = BTreeMap::from([(1, pv(&[1.0])), (3, pv(&[3.0]))]);
        assert!(matches!(calibrated_round(&pv(&[0.0]), &a, &b, EPSILON), Err(Error::KeySetMismatch)));
    }

    #[test]
    fn calibration_with_equal_updates_adds_their_mean() {
        let stored = BTreeMap::from([(1, pv(&[1.0, 2.0])), (4, pv(&[-3.0, 0.5]))]);
        let out = calibrated_round(&pv(&[10.0, 10.0]), &stored, &stored, EPSILON).unwrap();
        let expected: Vec<f32> =
            (0..2).map(|k| 10.0 + (stored[&1].values()[k] + stored[&4].values()[k]) / 2.0).collect();
        assert_eq!(out.values(), expected.as_slice());
    }

    #[test]
    fn job_validation() {
        assert!(UnlearnJob::new(0, [], 1, 2.0).is_err());
        assert!(UnlearnJob::new(0, [1], 1, 0.5).is_err());
        let job = UnlearnJob::new(0, [1, 2], 1, 2.0).unwrap();
        assert_eq!(job.retained(&[0, 1, 2, 3]).unwrap(), vec![0, 3]);
        assert!(matches!(job.retained(&[1, 2]), Err(Error::EmptyRetained(0))));
        assert!(matches!(job.retained(&[0, 1]), Err(Error::UnknownClient(2))));
        assert_eq!(job.local_epochs(10), 5);
        assert_eq!(UnlearnJob::new(0, [1], 1, 3.0).unwrap().local_epochs(10), 4);
        assert_eq!(UnlearnJob::new(0, [1], 1, 1.0).unwrap().local_epochs(10), 10);
    }

    #[test]
    fn init_is_mean_of_retained_final_round() {
        let s = stage(5, 1, 2, 1, 1);
        let h = trained(&s);
        let job = UnlearnJob::new(0, [1, 3], 2, 2.0).unwrap();
        let init = prepare_unlearned_init(&h, &job).unwrap();
        let round = h.fetch_round(0, 2).unwrap();
        for k in 0..init.dim() {
            let sum: f64 = [0, 2, 4].iter().map(|c| round[c].values()[k] as f64).sum();
            assert_eq!(init.values()[k], (sum / 3.0) as f32);
        }
        let single = UnlearnJob::new(0, [0, 1, 2, 3], 2, 2.0).unwrap();
        assert_eq!(prepare_unlearned_init(&h, &single).unwrap(), round[&4]);
    }

    #[test]
    fn se_cost_count() {
        let s = stage(5, 1, 5, 10, 2);
        let h = trained(&s);
        let job = UnlearnJob::new(0, [0], 5, 1.0).unwrap();
        let out = run_unlearning_se(&s, &h, &job).unwrap();
        assert_eq!(out.client_epochs(), 4 * 10 * 5);
        assert_eq!(out.rounds.len(), 5);
        let job2 = UnlearnJob::new(0, [0], 5, 2.0).unwrap();
        let out2 = run_unlearning_se(&s, &h, &job2).unwrap();
        assert!(out2.rounds.iter().all(|r| r.client_epochs == 4 * 5));
    }

    #[test]
    fn se_touches_only_its_shard() {
        let s = stage(6, 3, 2, 1, 3);
        let h = trained(&s);
        s.access_log().clear();
        h.access_log().clear();
        let job = UnlearnJob::new(1, [2], 2, 2.0).unwrap();
        run_unlearning_se(&s, &h, &job).unwrap();
        assert_eq!(s.access_log().shards(), BTreeSet::from([1]));
        assert_eq!(h.access_log().shards(), BTreeSet::from([1]));
        assert_eq!(s.access_log().clients_read(), BTreeSet::from([3]));
    }

    #[test]
    fn erased_vectors_never_influence_se() {
        let s = stage(6, 2, 3, 2, 4);
        let mut h = trained(&s);
        let job = UnlearnJob::new(1, [3, 5], 3, 2.0).unwrap();
        let before = run_unlearning_se(&s, &h, &job).unwrap();
        let mut rng = crate::rng::stream(&[42]);
        for g in 1..=3 {
            for &c in &job.unlearn_client_ids {
                let noise: Vec<f32> =
                    (0..s.model().dim()).map(|_| rand::Rng::random_range(&mut rng, -5.0..5.0)).collect();
                h.replace_client_vector(1, g, c, ParamVector::new(noise, Arc::clone(s.model().layout())).unwrap())
                    .unwrap();
            }
        }
        assert_eq!(run_unlearning_se(&s, &h, &job).unwrap(), before);
    }

    #[test]
    fn fr_ignores_erased_data_and_counts_cost() {
        let mut s = stage(4, 2, 3, 2, 5);
        let job = UnlearnJob::new(0, [1], 3, 2.0).unwrap();
        let a = run_baseline_fr(&s, &job).unwrap();
        assert_eq!(a.client_epochs(), 3 * 2 * 3);
        let junk = Dataset::new(vec![9.0; 8], vec![0, 1], 4, 3).unwrap();
        s.set_client_data(1, junk).unwrap();
        assert_eq!(run_baseline_fr(&s, &job).unwrap(), a);
    }

    #[test]
    fn fr_learns_retained_blobs() {
        let s = stage(5, 1, 10, 5, 6);
        let job = UnlearnJob::new(0, [4], 10, 1.0).unwrap();
        let out = run_baseline_fr(&s, &job).unwrap();
        let retained: Vec<&Dataset> = (0..4).map(|c| s.client_data(0, c).unwrap()).collect();
        let data = Dataset::concat(retained).unwrap();
        assert!(evaluate(s.model(), &out.params, &data).unwrap().accuracy >= 0.9);
    }

    #[test]
    fn fe_equals_se_on_single_shard_and_guards() {
        let s = stage(5, 1, 3, 4, 7);
        let h = trained(&s);
        let job = UnlearnJob::new(0, [2], 3, 2.0).unwrap();
        let se = run_unlearning_se(&s, &h, &job).unwrap();
        let fe = run_baseline_fe(&s, &h, &job).unwrap();
        assert_eq!(se.params, fe.params);
        assert_eq!(fe.client_epochs(), 4 * 2 * 3);

        let sharded = stage(6, 2, 1, 1, 7);
        let hs = trained(&sharded);
        assert!(run_baseline_fe(&sharded, &hs, &UnlearnJob::new(0, [0], 1, 1.0).unwrap()).is_err());
    }

    #[test]
    fn cost_ordering() {
        let s = stage(8, 2, 2, 4, 8);
        let h = trained(&s);
        let flat = s.single_shard();
        let hf = trained(&flat);
        let job = UnlearnJob::new(1, [5], 2, 2.0).unwrap();
        let se = run_unlearning_se(&s, &h, &job).unwrap().client_epochs();
        let fe = run_baseline_fe(&flat, &hf, &job).unwrap().client_epochs();
        let fr = run_baseline_fr(&s, &job).unwrap().client_epochs();
        assert!(se <= fe && fe <= fr, "{se} {fe} {fr}");
        assert_eq!(fe * 3, se * 7);
    }
}
