//! Shared fixtures for the benchmark suite.

use dcp_core::policy::DcpConfig;
use dcp_core::solver::AlgorithmVariant;
use dcp_core::{ChannelModel, RateModel};

/// Two-state symmetric fading channel with gains (1,5)/(5,1).
pub fn two_state_channel() -> ChannelModel {
    ChannelModel::new_markov(
        vec![[1.0, 5.0], [5.0, 1.0]],
        vec![vec![0.7, 0.3], vec![0.3, 0.7]],
    )
    .expect("valid channel")
}

pub fn reference_rates() -> RateModel {
    RateModel::new(10.0, 50.0).expect("valid rate model")
}

pub fn gap_decay() -> AlgorithmVariant {
    AlgorithmVariant::GapDecay { beta: 1.7 }
}

/// A controller configuration sized so benchmarks cover several rounds.
pub fn bench_dcp_config(solver_grid: usize) -> DcpConfig {
    DcpConfig {
        n_c: 1200,
        alpha: 0.06,
        l1: 8,
        n1_set: vec![1, 2, 3, 4, 6],
        variant: gap_decay(),
        solver_grid,
    }
}
