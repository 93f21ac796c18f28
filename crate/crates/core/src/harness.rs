//! Deterministic event-driven simulator.
//!
//! Time is the event index. Each event is applied to its site, the site's
//! messages are delivered to the coordinator(s) in canonical order, and one
//! trace row records the exact `F_p` of the union next to the coordinator's
//! view and the cumulative traffic.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::model::{FpAccumulator, FreqVector};
use crate::monitor::{MonitorConfig, MonitorState};
use crate::threshold::{
    Coordinator, CoordinatorStats, EstimatorMode, GlobalParams, Message, SiteState, StreamId,
    ThresholdProtocol,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamEvent {
    pub t: u64,
    pub site: usize,
    pub j: usize,
}

/// Header of a stream file: universe, site count and length bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub m: usize,
    pub k: usize,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub true_fp: f64,
    pub estimate: f64,
    pub cum_messages: u64,
    pub cum_bits: u64,
    pub fired_instances: u64,
}

pub const TRACE_HEADER: &str = "t,true_fp,estimate,cum_messages,cum_bits,fired_instances";

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Threshold,
    Monitor(MonitorConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Keep every `stride`-th row (the last event is always kept).
    pub stride: usize,
    pub estimator: EstimatorMode,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            estimator: EstimatorMode::Incremental,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub rows: Vec<TraceRow>,
    pub messages: u64,
    pub bits: u64,
    /// Event index at which the threshold coordinator fired, if it did.
    pub fired_at: Option<u64>,
    /// Coordinator counters (threshold mode only).
    pub coordinator: Option<CoordinatorStats>,
}

/// Bits on the wire for one message: the `(j, z, l)` triple plus, in ladder
/// mode, the address of the `(instance, copy)` it belongs to.
pub fn bit_cost(_msg: &Message, params: &GlobalParams, instance_address_bits: Option<u32>) -> u32 {
    params.triple_bits() + instance_address_bits.unwrap_or(0)
}

/// Checks that `stream` is well formed for `params`.
pub fn validate_stream(stream: &[StreamEvent], k: usize, m: usize, n: u64) -> Result<()> {
    let mut prev: Option<u64> = None;
    for (position, ev) in stream.iter().enumerate() {
        let bad = |reason: String| Error::MalformedEvent { position, reason };
        if prev.is_some_and(|p| ev.t <= p) {
            return Err(bad(format!("time {} does not increase", ev.t)));
        }
        if ev.t >= n {
            return Err(bad(format!("time {} not below n = {n}", ev.t)));
        }
        if ev.site >= k {
            return Err(bad(format!("site {} not below k = {k}", ev.site)));
        }
        if ev.j >= m {
            return Err(bad(format!("coordinate {} not below m = {m}", ev.j)));
        }
        prev = Some(ev.t);
    }
    Ok(())
}

// one engine per simulator, so the size gap between variants does not matter
#[allow(clippy::large_enum_variant)]
enum Engine {
    Threshold {
        protocol: ThresholdProtocol,
        coordinator: Coordinator,
        sites: Vec<SiteState>,
        buffer: Vec<Message>,
    },
    Monitor(Box<MonitorState>),
}

/// Step-by-step simulator; [`run_simulation`] drives it over a whole stream.
pub struct Simulator {
    params: GlobalParams,
    engine: Engine,
    union: FreqVector,
    fp: FpAccumulator,
    messages: u64,
    bits: u64,
    fired_at: Option<u64>,
}

impl Simulator {
    pub fn new(params: &GlobalParams, mode: &Mode, estimator: EstimatorMode) -> Result<Self> {
        let engine = match mode {
            Mode::Threshold => {
                let protocol = ThresholdProtocol::new(params.clone(), StreamId::default())?;
                let coordinator = protocol.coordinator(estimator);
                Engine::Threshold {
                    protocol,
                    coordinator,
                    sites: (0..params.k).map(|i| SiteState::new(i, params.m)).collect(),
                    buffer: Vec::new(),
                }
            }
            Mode::Monitor(cfg) => {
                Engine::Monitor(Box::new(MonitorState::new(params, cfg, estimator)?))
            }
        };
        Ok(Self {
            params: params.clone(),
            engine,
            union: FreqVector::new(params.m),
            fp: FpAccumulator::new(params.p)?,
            messages: 0,
            bits: 0,
            fired_at: None,
        })
    }

    pub fn step(&mut self, ev: &StreamEvent) -> Result<TraceRow> {
        if ev.site >= self.params.k {
            return Err(Error::param(
                "site",
                format!("{} not below k = {}", ev.site, self.params.k),
            ));
        }
        let old = self.union.get(ev.j);
        self.union.apply_update(ev.j)?;
        self.fp.bump(old);

        let (estimate, fired) = match &mut self.engine {
            Engine::Threshold {
                protocol,
                coordinator,
                sites,
                buffer,
            } => {
                let local = sites[ev.site].apply_update(ev.j)?;
                if !coordinator.terminated() {
                    buffer.clear();
                    protocol.emit(ev.site, ev.t, ev.j, local, buffer);
                    for msg in buffer.iter() {
                        self.messages += 1;
                        self.bits += msg.bit_cost as u64;
                        coordinator.on_message(msg);
                    }
                    if coordinator.out() && self.fired_at.is_none() {
                        self.fired_at = Some(ev.t);
                    }
                }
                (coordinator.coord_estimate_sum(), coordinator.out() as u64)
            }
            Engine::Monitor(state) => {
                let traffic = state.monitor_on_update(ev.site, ev.t, ev.j)?;
                self.messages += traffic.messages;
                self.bits += traffic.bits;
                (state.monitor_estimate(), state.fired_instances() as u64)
            }
        };
        Ok(TraceRow {
            t: ev.t,
            true_fp: self.fp.value(),
            estimate,
            cum_messages: self.messages,
            cum_bits: self.bits,
            fired_instances: fired,
        })
    }

    pub fn union(&self) -> &FreqVector {
        &self.union
    }

    pub fn threshold_coordinator(&self) -> Option<&Coordinator> {
        match &self.engine {
            Engine::Threshold { coordinator, .. } => Some(coordinator),
            Engine::Monitor(_) => None,
        }
    }

    pub fn monitor(&self) -> Option<&MonitorState> {
        match &self.engine {
            Engine::Monitor(state) => Some(state),
            Engine::Threshold { .. } => None,
        }
    }

    pub fn sites(&self) -> &[SiteState] {
        match &self.engine {
            Engine::Threshold { sites, .. } => sites,
            Engine::Monitor(state) => state.sites(),
        }
    }

    fn report(&self, rows: Vec<TraceRow>) -> SimulationReport {
        SimulationReport {
            rows,
            messages: self.messages,
            bits: self.bits,
            fired_at: self.fired_at,
            coordinator: self.threshold_coordinator().map(|c| c.stats()),
        }
    }
}

/// Runs a whole stream and returns its trace.
pub fn run_simulation(
    stream: &[StreamEvent],
    params: &GlobalParams,
    mode: &Mode,
    opts: SimOptions,
) -> Result<SimulationReport> {
    validate_stream(stream, params.k, params.m, params.n)?;
    let stride = opts.stride.max(1);
    let mut sim = Simulator::new(params, mode, opts.estimator)?;
    let mut rows = Vec::with_capacity(stream.len() / stride + 1);
    for (i, ev) in stream.iter().enumerate() {
        let row = sim.step(ev)?;
        if i % stride == 0 || i + 1 == stream.len() {
            rows.push(row);
        }
    }
    Ok(sim.report(rows))
}

/// `len` events with uniform site and uniform coordinate.
pub fn uniform_stream(k: usize, m: usize, len: u64, seed: u64) -> Result<Vec<StreamEvent>> {
    check_shape(k, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5712]));
    Ok((0..len)
        .map(|t| StreamEvent {
            t,
            site: rng.random_range(0..k),
            j: rng.random_range(0..m),
        })
        .collect())
}

/// `len` events with uniform site and Zipf(`s`)-distributed coordinate
/// (rank 1 is coordinate 0).
pub fn zipf_stream(k: usize, m: usize, len: u64, s: f64, seed: u64) -> Result<Vec<StreamEvent>> {
    check_shape(k, m)?;
    let zipf = Zipf::new(m as f64, s).map_err(|e| Error::param("s", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x21BF]));
    Ok((0..len)
        .map(|t| {
            let site = rng.random_range(0..k);
            let rank = zipf.sample(&mut rng) as usize;
            StreamEvent {
                t,
                site,
                j: rank.clamp(1, m) - 1,
            }
        })
        .collect())
}

fn check_shape(k: usize, m: usize) -> Result<()> {
    if k == 0 || m == 0 {
        return Err(Error::param(
            "k/m",
            "need at least one site and one coordinate",
        ));
    }
    Ok(())
}

/// Writes a stream file: `m k n` then one `t site j` line per event.
pub fn write_stream<W: Write>(
    mut w: W,
    header: StreamHeader,
    stream: &[StreamEvent],
) -> Result<()> {
    writeln!(w, "{} {} {}", header.m, header.k, header.n)?;
    for ev in stream {
        writeln!(w, "{} {} {}", ev.t, ev.site, ev.j)?;
    }
    Ok(())
}

fn parse_fields<const N: usize>(line: &str, lineno: usize) -> Result<[u64; N]> {
    let mut out = [0u64; N];
    let mut parts = line.split(' ');
    for slot in out.iter_mut() {
        let tok = parts
            .next()
            .ok_or_else(|| Error::parse(lineno, format!("expected {N} fields")))?;
        *slot = tok
            .parse()
            .map_err(|_| Error::parse(lineno, format!("not a non-negative integer: {tok:?}")))?;
    }
    if parts.next().is_some() {
        return Err(Error::parse(lineno, format!("expected {N} fields")));
    }
    Ok(out)
}

/// Reads and validates a stream file. Lines starting with `#` are comments.
pub fn read_stream<R: BufRead>(r: R) -> Result<(StreamHeader, Vec<StreamEvent>)> {
    let mut header = None;
    let mut events = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let [a, b, c] = parse_fields::<3>(line, i + 1)?;
        match header {
            None => {
                header = Some(StreamHeader {
                    m: a as usize,
                    k: b as usize,
                    n: c,
                })
            }
            Some(_) => events.push(StreamEvent {
                t: a,
                site: b as usize,
                j: c as usize,
            }),
        }
    }
    let header = header.ok_or_else(|| Error::parse(1, "missing header line"))?;
    validate_stream(&events, header.k, header.m, header.n)?;
    Ok((header, events))
}

/// Order-sensitive 64-bit fingerprint of a stream, for provenance headers.
pub fn stream_digest(stream: &[StreamEvent]) -> u64 {
    stream.iter().fold(0x57AE, |h, ev| {
        crate::hashing::keyed_hash(h, &[ev.t, ev.site as u64, ev.j as u64])
    })
}

/// Decimal rendering with 12 significant digits.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let exp = x.abs().log10().floor() as i32;
    if exp > 11 {
        let scale = 10f64.powi(exp - 11);
        format!("{:.0}", (x / scale).round() * scale)
    } else {
        format!("{:.*}", (11 - exp) as usize, x)
    }
}

/// Writes trace rows as CSV; `provenance` lines are emitted first with a `# ` prefix.
pub fn write_trace<W: Write>(mut w: W, provenance: &[String], rows: &[TraceRow]) -> Result<()> {
    for line in provenance {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{TRACE_HEADER}")?;
    let mut buf = String::new();
    for row in rows {
        buf.clear();
        let _ = write!(
            buf,
            "{},{},{},{},{},{}",
            row.t,
            format_sig12(row.true_fp),
            format_sig12(row.estimate),
            row.cum_messages,
            row.cum_bits,
            row.fired_instances
        );
        writeln!(w, "{buf}")?;
    }
    Ok(())
}
