//! The single-threshold protocol.
//!
//! Sites run a sampled send rule over the public-coin level sets; the
//! coordinator keeps scaled message counters `f_{z,l,j}`, groups coordinates
//! into geometric frequency classes, estimates each class size from the
//! level matched to it, and raises its output bit once the weighted class
//! sum crosses the firing level. Nothing ever flows from the coordinator
//! back to the sites.

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::hashing::{derive_seed, keyed_hash, unit_f64, unit_f64_open_zero};
use crate::model::FreqVector;
use crate::sampling::{ceil_log2, level_of, PublicCoin};

const TAG_COIN: u64 = 0xC011;
const TAG_TRIAL: u64 = 0x7121;
const TAG_ETA: u64 = 0xE7A0;

/// Tunable constants behind the asymptotic parameter choices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    /// `gamma = c_gamma * eps`.
    pub c_gamma: f64,
    /// `B = max(b_floor, c_b * eps^-3 * ceil(log2 n)^2)`.
    pub c_b: f64,
    pub b_floor: f64,
    /// `r = ceil(c_r * ceil(log2 n))`.
    pub c_r: f64,
    /// Constant of the frequency-tracking diagnostics.
    pub c_diag: f64,
    /// The coordinator fires once its estimate exceeds `(1 - fire_fraction * eps) * tau`.
    pub fire_fraction: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            c_gamma: 0.1,
            c_b: 1.0,
            b_floor: 8.0,
            c_r: 5.0,
            c_diag: 8.0,
            fire_fraction: 1.0,
        }
    }
}

/// Protocol parameters shared read-only by every site and the coordinator.
///
/// Build with [`GlobalParams::new`] or [`GlobalParams::with_constants`]; the
/// derived fields (`gamma`, `b`, `r`, `l_max`) are filled in there.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalParams {
    pub k: usize,
    pub m: usize,
    pub n: u64,
    pub p: f64,
    pub eps: f64,
    pub tau: f64,
    pub gamma: f64,
    pub b: f64,
    pub r: usize,
    pub l_max: u32,
    pub seed: u64,
    pub constants: Constants,
}

impl GlobalParams {
    pub fn new(k: usize, m: usize, n: u64, p: f64, eps: f64, tau: f64, seed: u64) -> Result<Self> {
        Self::with_constants(k, m, n, p, eps, tau, seed, Constants::default())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_constants(
        k: usize,
        m: usize,
        n: u64,
        p: f64,
        eps: f64,
        tau: f64,
        seed: u64,
        constants: Constants,
    ) -> Result<Self> {
        if k == 0 || !k.is_power_of_two() {
            return Err(Error::param(
                "k",
                format!("site count must be a power of 2, got {k}"),
            ));
        }
        if m == 0 {
            return Err(Error::param("m", "universe size must be >= 1"));
        }
        if n == 0 {
            return Err(Error::param("n", "stream length bound must be >= 1"));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::param("p", format!("must be > 1, got {p}")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::param("eps", format!("must lie in (0,1), got {eps}")));
        }
        if !(constants.c_gamma > 0.0 && constants.c_b > 0.0 && constants.c_r > 0.0) {
            return Err(Error::param(
                "constants",
                "c_gamma, c_b and c_r must be positive",
            ));
        }
        if !(constants.fire_fraction >= 0.0 && constants.fire_fraction * eps < 1.0) {
            return Err(Error::param(
                "fire_fraction",
                format!(
                    "need 0 <= fire_fraction * eps < 1, got {}",
                    constants.fire_fraction
                ),
            ));
        }
        let log_n = ceil_log2(n).max(1) as f64;
        let gamma = constants.c_gamma * eps;
        if gamma >= 1.0 {
            return Err(Error::param(
                "gamma",
                format!("c_gamma * eps must be < 1, got {gamma}"),
            ));
        }
        let b = constants
            .b_floor
            .max(constants.c_b * eps.powi(-3) * log_n * log_n)
            .max(1.0);
        let r = (constants.c_r * log_n).ceil().max(1.0) as usize;
        let params = Self {
            k,
            m,
            n,
            p,
            eps,
            tau: 1.0,
            gamma,
            b,
            r,
            l_max: ceil_log2(m as u64),
            seed,
            constants,
        };
        params.with_tau(tau)
    }

    /// Same parameters at another threshold.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        if !(tau >= 1.0) || !tau.is_finite() {
            return Err(Error::param(
                "tau",
                format!("thresholds start at 1, got {tau}"),
            ));
        }
        Ok(Self {
            tau,
            ..self.clone()
        })
    }

    pub fn log2_n(&self) -> u32 {
        ceil_log2(self.n).max(1)
    }

    /// `tau_l = tau / 2^l`.
    pub fn tau_level(&self, l: u32) -> f64 {
        self.tau / 2f64.powi(l as i32)
    }

    /// `tau_l^{1/p}`.
    pub fn level_root(&self, l: u32) -> f64 {
        self.tau_level(l).powf(1.0 / self.p)
    }

    /// `min(B / tau_l^{1/p}, 1)`.
    pub fn send_probability(&self, l: u32) -> f64 {
        (self.b / self.level_root(l)).min(1.0)
    }

    /// Counter increment per received message: the inverse send probability,
    /// `max(tau_l^{1/p} / B, 1)`.
    pub fn counter_increment(&self, l: u32) -> f64 {
        (self.level_root(l) / self.b).max(1.0)
    }

    /// A site's local count must exceed `tau_l^{1/p} / (k B)` before it sends.
    pub fn site_guard(&self, l: u32) -> f64 {
        self.level_root(l) / (self.k as f64 * self.b)
    }

    /// Level at which the coordinator reads class `h` for coordinator offset `eta`.
    pub fn class_level(&self, h: i64, eta: f64) -> u32 {
        level_of(h, eta, self.gamma, self.p, self.tau, self.b, self.l_max)
    }

    /// `(1 - fire_fraction * eps) * tau`.
    pub fn fire_threshold(&self) -> f64 {
        (1.0 - self.constants.fire_fraction * self.eps) * self.tau
    }

    /// Bits to encode one `(j, z, l)` triple.
    pub fn triple_bits(&self) -> u32 {
        ceil_log2(self.m as u64) + ceil_log2(self.r as u64) + ceil_log2(self.l_max as u64 + 1)
    }

    /// Upper bound used by the communication diagnostics:
    /// `2^p k^{p-1} B^p ceil(log2 n)^2` messages.
    pub fn message_bound(&self) -> f64 {
        let log_n = self.log2_n() as f64;
        2f64.powf(self.p) * (self.k as f64).powf(self.p - 1.0) * self.b.powf(self.p) * log_n * log_n
    }
}

/// Identifies one independent protocol run: ladder instance and repetition copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct StreamId {
    pub instance: u64,
    pub copy: u64,
}

/// A site-to-coordinator message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Message {
    pub j: usize,
    /// 1-based repetition index.
    pub z: u32,
    pub level: u32,
    pub bit_cost: u32,
}

/// One site's local vector.
#[derive(Debug, Clone)]
pub struct SiteState {
    site_id: usize,
    v: FreqVector,
}

impl SiteState {
    pub fn new(site_id: usize, m: usize) -> Self {
        Self {
            site_id,
            v: FreqVector::new(m),
        }
    }

    pub fn site_id(&self) -> usize {
        self.site_id
    }

    pub fn vector(&self) -> &FreqVector {
        &self.v
    }

    /// Applies `v <- v + e_j` and returns the new local count of `j`.
    pub fn apply_update(&mut self, j: usize) -> Result<u64> {
        self.v.apply_update(j)
    }
}

/// Site-side rule of one protocol run plus the matching coordinator factory.
#[derive(Debug, Clone)]
pub struct ThresholdProtocol {
    params: GlobalParams,
    stream: StreamId,
    coin: PublicCoin,
    trial_seed: u64,
    guard: Vec<f64>,
    prob: Vec<f64>,
    bit_cost: u32,
}

impl ThresholdProtocol {
    pub fn new(params: GlobalParams, stream: StreamId) -> Result<Self> {
        let coin_seed = derive_seed(params.seed, &[TAG_COIN, stream.instance, stream.copy]);
        let coin = PublicCoin::new(coin_seed, params.r, params.m)?;
        let levels = 0..=params.l_max;
        let guard = levels.clone().map(|l| params.site_guard(l)).collect();
        let prob = levels.map(|l| params.send_probability(l)).collect();
        Ok(Self {
            trial_seed: derive_seed(params.seed, &[TAG_TRIAL, stream.instance, stream.copy]),
            bit_cost: params.triple_bits(),
            params,
            stream,
            coin,
            guard,
            prob,
        })
    }

    pub fn params(&self) -> &GlobalParams {
        &self.params
    }

    pub fn stream(&self) -> StreamId {
        self.stream
    }

    pub fn coin(&self) -> &PublicCoin {
        &self.coin
    }

    /// Adds instance-addressing bits to every message (ladder mode).
    pub fn set_address_bits(&mut self, bits: u32) {
        self.bit_cost = self.params.triple_bits() + bits;
    }

    pub fn message_bits(&self) -> u32 {
        self.bit_cost
    }

    /// Uniform draw for the send trial of `(site, event, z, l)`.
    pub fn trial_draw(&self, site_id: usize, event_index: u64, z: u32, l: u32) -> f64 {
        unit_f64(keyed_hash(
            self.trial_seed,
            &[site_id as u64, event_index, z as u64, l as u64],
        ))
    }

    /// Applies the update to the site and returns the messages it sends,
    /// ordered by `(z, l)`.
    pub fn site_on_update(
        &self,
        site: &mut SiteState,
        event_index: u64,
        j: usize,
    ) -> Result<Vec<Message>> {
        let local = site.apply_update(j)?;
        let mut out = Vec::new();
        self.emit(site.site_id, event_index, j, local, &mut out);
        Ok(out)
    }

    /// Send rule for a site whose local count of `j` is now `local_count`.
    /// Messages are appended to `out` in `(z, l)` order.
    pub fn emit(
        &self,
        site_id: usize,
        event_index: u64,
        j: usize,
        local_count: u64,
        out: &mut Vec<Message>,
    ) {
        let v = local_count as f64;
        // the guard shrinks with l, so eligible levels form a suffix
        let Some(first) = self.guard.iter().position(|&g| v > g) else {
            return;
        };
        for z in 1..=self.params.r {
            for l in first as u32..=self.params.l_max {
                if !self.coin.member(z, l, j) {
                    continue;
                }
                let q = self.prob[l as usize];
                if q < 1.0 && self.trial_draw(site_id, event_index, z as u32, l) >= q {
                    continue;
                }
                out.push(Message {
                    j,
                    z: z as u32,
                    level: l,
                    bit_cost: self.bit_cost,
                });
            }
        }
    }

    pub fn coordinator(&self, mode: EstimatorMode) -> Coordinator {
        let eta_seed = derive_seed(
            self.params.seed,
            &[TAG_ETA, self.stream.instance, self.stream.copy],
        );
        Coordinator::new(&self.params, unit_f64_open_zero(eta_seed), mode)
    }
}

/// How the coordinator maintains its class estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorMode {
    /// Class medians updated for the moved coordinate only.
    #[default]
    Incremental,
    /// Rebuild every class estimate from the raw counters on each message.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageOutcome {
    Applied,
    Fired,
    Dropped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CoordinatorStats {
    pub delivered: u64,
    pub dropped: u64,
    /// Times the weighted class sum went down between consecutive messages.
    pub estimate_decreases: u64,
    pub largest_relative_drop: f64,
}

const RESYNC_EVERY: u32 = 1024;

#[inline]
fn pack(j: usize, z: u32, l: u32) -> u64 {
    ((j as u64) << 24) | ((z as u64) << 8) | l as u64
}

#[inline]
fn unpack(key: u64) -> (usize, u32, u32) {
    (
        (key >> 24) as usize,
        ((key >> 8) & 0xFFFF) as u32,
        (key & 0xFF) as u32,
    )
}

fn lower_median(vals: &mut [u64]) -> u64 {
    let mid = (vals.len() - 1) / 2;
    *vals.select_nth_unstable(mid).1
}

/// `|F_{z,h}|` for every repetition `z` at the level matched to class `h`,
/// kept in sorted order under unit steps so the lower median is one lookup.
#[derive(Debug, Clone)]
struct ClassTally {
    counts: Vec<u32>,
    /// Repetition indices sorted by count.
    order: Vec<u32>,
    /// Position of each repetition in `order`.
    pos: Vec<u32>,
}

impl ClassTally {
    fn new(r: usize) -> Self {
        Self {
            counts: vec![0; r],
            order: (0..r as u32).collect(),
            pos: (0..r as u32).collect(),
        }
    }

    fn median(&self) -> u32 {
        self.counts[self.order[(self.order.len() - 1) / 2] as usize]
    }

    fn step(&mut self, z_idx: usize, up: bool) {
        let v = self.counts[z_idx];
        // swap z to the edge of its run of equal counts, then step it across
        let edge = if up {
            self.order
                .partition_point(|&o| self.counts[o as usize] <= v)
                - 1
        } else {
            self.order.partition_point(|&o| self.counts[o as usize] < v)
        };
        let here = self.pos[z_idx] as usize;
        let other = self.order[edge];
        self.order.swap(here, edge);
        self.pos[other as usize] = here as u32;
        self.pos[z_idx] = edge as u32;
        self.counts[z_idx] = if up { v + 1 } else { v - 1 };
    }
}

/// Coordinator state of one protocol run.
#[derive(Debug, Clone)]
pub struct Coordinator {
    params: GlobalParams,
    eta: f64,
    eta_p: f64,
    ln_growth: f64,
    h_max: i64,
    fire_threshold: f64,
    mode: EstimatorMode,
    incr: Vec<f64>,
    /// Messages received per packed `(j, z, l)`.
    counts: FxHashMap<u64, u32>,
    /// Per-class repetition counts at the class's own level.
    tallies: FxHashMap<i64, ClassTally>,
    /// Class estimates indexed by class, grown on demand.
    ctilde: Vec<u64>,
    /// Level and weight per bucket, filled on demand.
    levels: Vec<u32>,
    weights: Vec<f64>,
    /// Bucket of `count * incr[l]`, per level, indexed by count; `i64::MIN` for none.
    bucket_cache: Vec<Vec<i64>>,
    running: f64,
    ops_since_sync: u32,
    previous: f64,
    out: bool,
    terminated: bool,
    stats: CoordinatorStats,
}

impl Coordinator {
    pub fn new(params: &GlobalParams, eta: f64, mode: EstimatorMode) -> Self {
        let eta = eta.clamp(f64::MIN_POSITIVE, 1.0);
        let levels = params.l_max as usize + 1;
        let eta_p = eta.powf(params.p);
        let ln_growth = (1.0 + params.gamma).ln();
        let h_max = ((params.n as f64 / eta_p).ln() / ln_growth / params.gamma)
            .ceil()
            .max(0.0);
        Self {
            eta,
            eta_p,
            ln_growth,
            h_max: h_max.min(i32::MAX as f64) as i64,
            fire_threshold: params.fire_threshold(),
            mode,
            incr: (0..levels as u32)
                .map(|l| params.counter_increment(l))
                .collect(),
            counts: FxHashMap::default(),
            tallies: FxHashMap::default(),
            ctilde: Vec::new(),
            levels: Vec::new(),
            weights: Vec::new(),
            bucket_cache: vec![Vec::new(); levels],
            running: 0.0,
            ops_since_sync: 0,
            previous: 0.0,
            out: false,
            terminated: false,
            stats: CoordinatorStats::default(),
            params: params.clone(),
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn out(&self) -> bool {
        self.out
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    pub fn stats(&self) -> CoordinatorStats {
        self.stats
    }

    pub fn h_max(&self) -> i64 {
        self.h_max
    }

    pub fn params(&self) -> &GlobalParams {
        &self.params
    }

    /// Lower edge `eta (1+gamma)^h` of class `h`.
    pub fn bucket_edge(&self, h: i64) -> f64 {
        self.eta * (1.0 + self.params.gamma).powi(h as i32)
    }

    /// Class index of a counter value, `None` when below `eta` or above `h_max`.
    pub fn bucket_of(&self, f: f64) -> Option<i64> {
        if !(f >= self.eta) {
            return None;
        }
        let mut h = ((f / self.eta).ln() / self.ln_growth).floor().max(0.0) as i64;
        while h > 0 && self.bucket_edge(h) > f {
            h -= 1;
        }
        while self.bucket_edge(h + 1) <= f {
            h += 1;
        }
        (h <= self.h_max).then_some(h)
    }

    /// `eta^p (1+gamma)^{p h}`.
    pub fn class_weight(&self, h: i64) -> f64 {
        self.eta_p * (1.0 + self.params.gamma).powf(self.params.p * h as f64)
    }

    fn weight_of(&self, h: i64) -> f64 {
        match self.weights.get(h as usize) {
            Some(&w) => w,
            None => self.class_weight(h),
        }
    }

    pub fn class_level(&self, h: i64) -> u32 {
        self.params.class_level(h, self.eta)
    }

    fn cached_level(&mut self, h: i64) -> u32 {
        let idx = h as usize;
        while self.levels.len() <= idx {
            let next = self.levels.len() as i64;
            let l = self.class_level(next);
            self.levels.push(l);
            self.weights.push(self.class_weight(next));
        }
        self.levels[idx]
    }

    fn hist_index(&self, z: u32, l: u32) -> usize {
        (z as usize - 1) * (self.params.l_max as usize + 1) + l as usize
    }

    /// Number of messages received for `(j, z, l)`.
    pub fn message_count(&self, z: u32, l: u32, j: usize) -> u32 {
        self.counts.get(&pack(j, z, l)).copied().unwrap_or(0)
    }

    /// The counter `f_{z,l,j}`.
    pub fn counter(&self, z: u32, l: u32, j: usize) -> f64 {
        self.message_count(z, l, j) as f64 * self.incr[l as usize]
    }

    /// Iterates over `((j, z, l), f)` for every nonzero counter.
    pub fn counters(&self) -> impl Iterator<Item = ((usize, u32, u32), f64)> + '_ {
        self.counts.iter().map(|(&key, &c)| {
            let (j, z, l) = unpack(key);
            ((j, z, l), c as f64 * self.incr[l as usize])
        })
    }

    /// `median_z 2^{l(h)} |F_{z,h}|` (lower median for even `r`).
    pub fn class_estimate(&self, h: i64) -> f64 {
        let l = self.class_level(h);
        self.tallies
            .get(&h)
            .map_or(0.0, |t| ((t.median() as u64) << l) as f64)
    }

    /// The weighted class sum `sum_h c_h eta^p (1+gamma)^{p h}`.
    pub fn coord_estimate_sum(&self) -> f64 {
        self.weighted_sum(
            self.ctilde
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(h, &c)| (h as i64, c)),
        )
    }

    fn weighted_sum(&self, ctilde: impl Iterator<Item = (i64, u64)>) -> f64 {
        ctilde
            .map(|(h, c)| c as f64 * self.weight_of(h))
            .fold(0.0, |acc, t| acc + t)
    }

    /// Nonzero class estimates as currently maintained.
    pub fn class_estimates(&self) -> BTreeMap<i64, u64> {
        self.ctilde
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(h, &c)| (h as i64, c))
            .collect()
    }

    /// Class estimates rebuilt from the raw counters alone.
    pub fn literal_class_estimates(&self) -> BTreeMap<i64, u64> {
        let mut hists: Vec<FxHashMap<i64, u32>> =
            vec![FxHashMap::default(); self.params.r * (self.params.l_max as usize + 1)];
        let mut buckets = BTreeSet::new();
        for (&key, &c) in &self.counts {
            let (_, z, l) = unpack(key);
            if let Some(h) = self.bucket_of(c as f64 * self.incr[l as usize]) {
                *hists[self.hist_index(z, l)].entry(h).or_insert(0) += 1;
                buckets.insert(h);
            }
        }
        let mut out = BTreeMap::new();
        for h in buckets {
            let l = self.class_level(h);
            let mut vals: Vec<u64> = (1..=self.params.r as u32)
                .map(|z| (hists[self.hist_index(z, l)].get(&h).copied().unwrap_or(0) as u64) << l)
                .collect();
            let med = lower_median(&mut vals);
            if med > 0 {
                out.insert(h, med);
            }
        }
        out
    }

    /// The weighted class sum computed by the literal rebuild.
    pub fn literal_estimate(&self) -> f64 {
        self.weighted_sum(self.literal_class_estimates().into_iter())
    }

    fn cached_bucket(&mut self, l: u32, count: u32, inc: f64) -> Option<i64> {
        let idx = count as usize;
        if self.bucket_cache[l as usize].len() <= idx {
            let start = self.bucket_cache[l as usize].len();
            let fresh: Vec<i64> = (start..=idx.max(2 * start))
                .map(|c| self.bucket_of(c as f64 * inc).unwrap_or(i64::MIN))
                .collect();
            self.bucket_cache[l as usize].extend(fresh);
        }
        let h = self.bucket_cache[l as usize][idx];
        (h != i64::MIN).then_some(h)
    }

    fn step_class(&mut self, h: i64, msg: &Message, up: bool) {
        let l = msg.level;
        if self.cached_level(h) != l {
            return;
        }
        let r = self.params.r;
        let tally = self.tallies.entry(h).or_insert_with(|| ClassTally::new(r));
        tally.step(msg.z as usize - 1, up);
        let new = (tally.median() as u64) << l;
        let idx = h as usize;
        if self.ctilde.len() <= idx {
            self.ctilde.resize(idx + 1, 0);
        }
        let old = self.ctilde[idx];
        if new == old {
            return;
        }
        self.ctilde[idx] = new;
        let w = self.weight_of(h);
        self.running = self.running - old as f64 * w + new as f64 * w;
        self.ops_since_sync += 1;
    }

    /// Handles an arriving `(j, z, l)` tuple.
    pub fn on_message(&mut self, msg: &Message) -> MessageOutcome {
        if self.terminated {
            self.stats.dropped += 1;
            return MessageOutcome::Dropped;
        }
        debug_assert!(msg.z >= 1 && msg.z as usize <= self.params.r);
        debug_assert!(msg.level <= self.params.l_max);
        self.stats.delivered += 1;

        let slot = self
            .counts
            .entry(pack(msg.j, msg.z, msg.level))
            .or_insert(0);
        let old = *slot;
        *slot += 1;
        let inc = self.incr[msg.level as usize];
        let from = if old == 0 {
            None
        } else {
            self.cached_bucket(msg.level, old, inc)
        };
        let to = self.cached_bucket(msg.level, old + 1, inc);
        if from != to {
            if let Some(h) = from {
                self.step_class(h, msg, false);
            }
            if let Some(h) = to {
                self.step_class(h, msg, true);
            }
        }

        let estimate = match self.mode {
            EstimatorMode::Incremental => {
                let near = self.running > self.fire_threshold * (1.0 - 1e-9);
                if near || self.ops_since_sync >= RESYNC_EVERY {
                    self.running = self.coord_estimate_sum();
                    self.ops_since_sync = 0;
                }
                self.running
            }
            EstimatorMode::Literal => {
                self.ctilde.iter_mut().for_each(|c| *c = 0);
                for (h, c) in self.literal_class_estimates() {
                    let idx = h as usize;
                    if self.ctilde.len() <= idx {
                        self.ctilde.resize(idx + 1, 0);
                    }
                    self.ctilde[idx] = c;
                }
                self.running = self.coord_estimate_sum();
                self.running
            }
        };

        let tol = 1e-9 * self.params.tau;
        if estimate < self.previous - tol {
            self.stats.estimate_decreases += 1;
            let drop = (self.previous - estimate) / self.previous;
            self.stats.largest_relative_drop = self.stats.largest_relative_drop.max(drop);
        }
        self.previous = estimate;

        if estimate > self.fire_threshold {
            self.out = true;
            self.terminated = true;
            return MessageOutcome::Fired;
        }
        MessageOutcome::Applied
    }
}

/// Tallies of the two frequency-tracking checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrackingReport {
    /// Sampled `(z, l, j)` with `v_j` above the concentration floor.
    pub lower_checked: u64,
    /// Of those, counters within `(gamma^5 / log^2 n) v_j` of `v_j`.
    pub lower_ok: u64,
    pub upper_checked: u64,
    /// Counters with `f <= 2e v_j + C tau_l^{1/p} log n / B`.
    pub upper_ok: u64,
}

impl TrackingReport {
    pub fn merge(&mut self, other: &TrackingReport) {
        self.lower_checked += other.lower_checked;
        self.lower_ok += other.lower_ok;
        self.upper_checked += other.upper_checked;
        self.upper_ok += other.upper_ok;
    }

    pub fn lower_rate(&self) -> Option<f64> {
        (self.lower_checked > 0).then(|| self.lower_ok as f64 / self.lower_checked as f64)
    }

    pub fn upper_rate(&self) -> Option<f64> {
        (self.upper_checked > 0).then(|| self.upper_ok as f64 / self.upper_checked as f64)
    }
}

impl ThresholdProtocol {
    /// `C log^5 n tau_l^{1/p} / (B gamma^10)`: the union count above which a
    /// counter is expected to track `v_j` to relative error `gamma^5 / log^2 n`.
    pub fn tracking_floor(&self, l: u32) -> f64 {
        let p = &self.params;
        let log_n = p.log2_n() as f64;
        p.constants.c_diag * log_n.powi(5) * p.level_root(l) / (p.b * p.gamma.powi(10))
    }

    /// Checks every counter of `coord` against the union vector. The upper
    /// check visits the nonzero counters (a zero counter passes trivially);
    /// the lower check visits every sampled `(z, l, j)` whose `v_j` clears
    /// [`Self::tracking_floor`].
    pub fn tracking_report(&self, coord: &Coordinator, union: &FreqVector) -> TrackingReport {
        let p = &self.params;
        let log_n = p.log2_n() as f64;
        let mut rep = TrackingReport::default();
        for ((j, _, l), f) in coord.counters() {
            let v = union.get(j) as f64;
            let slack = p.constants.c_diag * p.level_root(l) * log_n / p.b;
            rep.upper_checked += 1;
            rep.upper_ok += (f <= 2.0 * std::f64::consts::E * v + slack) as u64;
        }
        let rel = p.gamma.powi(5) / (log_n * log_n);
        for (j, count) in union.iter() {
            let v = count as f64;
            for l in 0..=p.l_max {
                if v < self.tracking_floor(l) {
                    continue;
                }
                for z in 1..=p.r {
                    if !self.coin.member(z, l, j) {
                        continue;
                    }
                    rep.lower_checked += 1;
                    let f = coord.counter(z as u32, l, j);
                    rep.lower_ok += ((f - v).abs() <= rel * v) as u64;
                }
            }
        }
        rep
    }
}
