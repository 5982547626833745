//! Workloads, cost accounting and the analytical time and storage models.

mod ledger;
mod montecarlo;
mod run;
mod theory;
mod workload;

pub use ledger::{read_csv, write_csv, CostLedger, LedgerRow, NetworkModel, RequestFailure};
pub use montecarlo::{monte_carlo, MonteCarloReport, MonteCarloSpec};
pub use run::{simulate_stage, SimOptions, SimulationResult};
pub use theory::{
    coded_throughput, expected_time_concurrent, expected_time_sequential, loglog_slope, shard_hit_probability,
    storage_efficiency_bounds, StorageBounds,
};
pub use workload::{generate_workload, Arrival, Distribution, UnlearnRequest, WorkloadSpec};
