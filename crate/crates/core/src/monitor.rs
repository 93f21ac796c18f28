//! Continuous monitoring from a geometric ladder of threshold instances.
//!
//! Instance `i` watches `tau_i = (1+eps)^i` with `a` independent copies and a
//! majority vote. All copies share the site vectors and nothing else.

use crate::error::{Error, Result};
use crate::sampling::ceil_log2;
use crate::threshold::{
    Coordinator, EstimatorMode, GlobalParams, Message, SiteState, StreamId, ThresholdProtocol,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorConfig {
    /// `a = 2 ceil(c_a ln(10 I_max)) + 1` unless overridden.
    pub c_a: f64,
    pub amplification: Option<usize>,
    /// Ladder top `I_max`; defaults to `ceil(log_{1+eps}(n^2 2^p))`.
    pub ladder_top: Option<usize>,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            c_a: 1.0,
            amplification: None,
            ladder_top: None,
        }
    }
}

impl MonitorConfig {
    pub fn resolve_ladder_top(&self, params: &GlobalParams) -> usize {
        self.ladder_top.unwrap_or_else(|| {
            let top = (params.n as f64).powi(2) * 2f64.powf(params.p);
            (top.ln() / (1.0 + params.eps).ln()).ceil().max(0.0) as usize
        })
    }

    pub fn resolve_amplification(&self, ladder_top: usize) -> usize {
        self.amplification.unwrap_or_else(|| {
            let x = (self.c_a * ((ladder_top.max(1) * 10) as f64).ln())
                .ceil()
                .max(0.0);
            2 * x as usize + 1
        })
    }
}

#[derive(Debug, Clone)]
struct Copy {
    protocol: ThresholdProtocol,
    coordinator: Coordinator,
}

#[derive(Debug, Clone)]
struct LadderInstance {
    tau: f64,
    copies: Vec<Copy>,
    fired: bool,
}

impl LadderInstance {
    fn fired_copies(&self) -> usize {
        self.copies.iter().filter(|c| c.coordinator.out()).count()
    }
}

/// Per-update traffic of the ladder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateTraffic {
    pub messages: u64,
    pub bits: u64,
}

#[derive(Debug, Clone)]
pub struct MonitorState {
    params: GlobalParams,
    amplification: usize,
    instances: Vec<LadderInstance>,
    sites: Vec<SiteState>,
    highest_fired: Option<usize>,
    address_bits: u32,
    buffer: Vec<Message>,
}

impl MonitorState {
    /// `params.tau` is ignored; each ladder rung sets its own threshold.
    pub fn new(params: &GlobalParams, config: &MonitorConfig, mode: EstimatorMode) -> Result<Self> {
        let top = config.resolve_ladder_top(params);
        let a = config.resolve_amplification(top);
        if a % 2 == 0 {
            return Err(Error::param(
                "amplification",
                format!("must be odd, got {a}"),
            ));
        }
        let rungs = top + 1;
        let address_bits = ceil_log2((rungs * a) as u64);
        let mut instances = Vec::with_capacity(rungs);
        for i in 0..rungs {
            let tau = (1.0 + params.eps).powi(i as i32);
            let rung = params.with_tau(tau)?;
            let mut copies = Vec::with_capacity(a);
            for c in 0..a {
                let mut protocol = ThresholdProtocol::new(
                    rung.clone(),
                    StreamId {
                        instance: i as u64,
                        copy: c as u64,
                    },
                )?;
                protocol.set_address_bits(address_bits);
                let coordinator = protocol.coordinator(mode);
                copies.push(Copy {
                    protocol,
                    coordinator,
                });
            }
            instances.push(LadderInstance {
                tau,
                copies,
                fired: false,
            });
        }
        Ok(Self {
            params: params.clone(),
            amplification: a,
            instances,
            sites: (0..params.k).map(|i| SiteState::new(i, params.m)).collect(),
            highest_fired: None,
            address_bits,
            buffer: Vec::new(),
        })
    }

    pub fn params(&self) -> &GlobalParams {
        &self.params
    }

    pub fn amplification(&self) -> usize {
        self.amplification
    }

    pub fn ladder_len(&self) -> usize {
        self.instances.len()
    }

    pub fn address_bits(&self) -> u32 {
        self.address_bits
    }

    pub fn threshold(&self, i: usize) -> f64 {
        self.instances[i].tau
    }

    pub fn instance_fired(&self, i: usize) -> bool {
        self.instances[i].fired
    }

    pub fn fired_instances(&self) -> usize {
        self.instances.iter().filter(|i| i.fired).count()
    }

    pub fn copy_coordinator(&self, i: usize, copy: usize) -> &Coordinator {
        &self.instances[i].copies[copy].coordinator
    }

    pub fn sites(&self) -> &[SiteState] {
        &self.sites
    }

    /// Fans one stream update out to every live `(instance, copy)`; messages
    /// are delivered in `(instance, copy, z, l)` order.
    pub fn monitor_on_update(
        &mut self,
        site: usize,
        event_index: u64,
        j: usize,
    ) -> Result<UpdateTraffic> {
        if site >= self.sites.len() {
            return Err(Error::param(
                "site",
                format!("{site} not in [0, {})", self.sites.len()),
            ));
        }
        let local = self.sites[site].apply_update(j)?;
        let mut traffic = UpdateTraffic::default();
        let half = self.amplification / 2;
        for (i, inst) in self.instances.iter_mut().enumerate() {
            if inst.fired {
                continue;
            }
            for copy in inst.copies.iter_mut() {
                if copy.coordinator.terminated() {
                    continue;
                }
                self.buffer.clear();
                copy.protocol
                    .emit(site, event_index, j, local, &mut self.buffer);
                for msg in &self.buffer {
                    traffic.messages += 1;
                    traffic.bits += msg.bit_cost as u64;
                    copy.coordinator.on_message(msg);
                }
            }
            if inst.fired_copies() > half {
                inst.fired = true;
                self.highest_fired = Some(self.highest_fired.map_or(i, |h| h.max(i)));
            }
        }
        Ok(traffic)
    }

    /// Geometric mean `(1+eps)^{i + 1/2}` of the bracket above the highest
    /// fired rung `i`; 0 before anything fired.
    pub fn monitor_estimate(&self) -> f64 {
        match self.highest_fired {
            None => 0.0,
            Some(i) => (1.0 + self.params.eps).powf(i as f64 + 0.5),
        }
    }

    /// Per-copy outcome counts, used by tests that compare against standalone runs.
    pub fn copy_outcome(&self, i: usize, copy: usize) -> (bool, u64) {
        let c = &self.instances[i].copies[copy].coordinator;
        (c.out(), c.stats().delivered)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threshold::Constants;

    fn small_params() -> GlobalParams {
        let c = Constants {
            fire_fraction: 0.5,
            ..Constants::default()
        };
        GlobalParams::with_constants(2, 64, 200, 2.0, 0.5, 1.0, 3, c).unwrap()
    }

    #[test]
    fn ladder_and_amplification_defaults() {
        let p = small_params();
        let cfg = MonitorConfig::default();
        let top = cfg.resolve_ladder_top(&p);
        // log_{1.5}(200^2 * 4) = ln(160000)/ln(1.5) = 29.5...
        assert_eq!(top, 30);
        // 2 * ceil(ln 300) + 1 = 2 * 6 + 1
        assert_eq!(cfg.resolve_amplification(top), 13);
        let m = MonitorState::new(&p, &cfg, EstimatorMode::Incremental).unwrap();
        assert_eq!(m.ladder_len(), 31);
        assert_eq!(m.address_bits(), ceil_log2(31 * 13));
    }

    #[test]
    fn estimate_starts_at_zero() {
        let p = small_params();
        let m =
            MonitorState::new(&p, &MonitorConfig::default(), EstimatorMode::Incremental).unwrap();
        assert_eq!(m.monitor_estimate(), 0.0);
        assert_eq!(m.fired_instances(), 0);
    }

    #[test]
    fn even_amplification_rejected() {
        let p = small_params();
        let cfg = MonitorConfig {
            amplification: Some(4),
            ..MonitorConfig::default()
        };
        assert!(MonitorState::new(&p, &cfg, EstimatorMode::Incremental).is_err());
    }

    #[test]
    fn first_update_reaches_site_and_fires_bottom_rung() {
        let p = small_params();
        let cfg = MonitorConfig {
            amplification: Some(3),
            ladder_top: Some(8),
            ..MonitorConfig::default()
        };
        let mut m = MonitorState::new(&p, &cfg, EstimatorMode::Incremental).unwrap();
        let t = m.monitor_on_update(1, 0, 9).unwrap();
        assert_eq!(m.sites()[1].vector().get(9), 1);
        assert_eq!(m.sites()[0].vector().support_size(), 0);
        assert!(t.messages > 0);
        assert!(m.instance_fired(0));
        assert!((m.monitor_estimate() - 1.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn silent_once_everything_fired() {
        let p = small_params();
        let cfg = MonitorConfig {
            amplification: Some(1),
            ladder_top: Some(0),
            ..MonitorConfig::default()
        };
        let mut m = MonitorState::new(&p, &cfg, EstimatorMode::Incremental).unwrap();
        m.monitor_on_update(0, 0, 1).unwrap();
        assert_eq!(m.fired_instances(), 1);
        let t = m.monitor_on_update(0, 1, 1).unwrap();
        assert_eq!(t, UpdateTraffic::default());
    }
}
