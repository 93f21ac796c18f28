//! Shared fixtures for the criterion benches.

use distmon_core::harness::zipf_stream;
use distmon_core::{
    EstimatorMode, GlobalParams, Message, SiteState, StreamEvent, StreamId, ThresholdProtocol,
};

pub const K: usize = 8;
pub const M: usize = 4096;
pub const LEN: u64 = 20_000;

pub fn stream(seed: u64) -> Vec<StreamEvent> {
    zipf_stream(K, M, LEN, 1.1, seed).expect("valid stream parameters")
}

/// Default constants, tau far above the stream's F_2 so nothing fires.
pub fn quiet_params(seed: u64) -> GlobalParams {
    GlobalParams::new(K, M, LEN, 2.0, 0.2, 1e12, seed).expect("valid parameters")
}

/// Messages produced by one run, in arrival order, for replaying into a coordinator.
pub fn message_log(params: &GlobalParams, events: &[StreamEvent]) -> Vec<Message> {
    let proto = ThresholdProtocol::new(params.clone(), StreamId::default()).expect("protocol");
    let mut sites: Vec<SiteState> = (0..params.k).map(|i| SiteState::new(i, params.m)).collect();
    let mut out = Vec::new();
    for ev in events {
        let local = sites[ev.site].apply_update(ev.j).expect("in range");
        proto.emit(ev.site, ev.t, ev.j, local, &mut out);
    }
    out
}

pub const MODES: [(&str, EstimatorMode); 2] = [
    ("incremental", EstimatorMode::Incremental),
    ("literal", EstimatorMode::Literal),
];
