use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use distmon_core::hardgen::{
    bit_disj_regime_warning, btx_to_stream, gen_bit_disj, gen_btx, gen_gap_maj,
    gen_quantile_instance, gen_two_disj, read_instance, write_instance, HardInstance,
};
use distmon_core::harness::{
    read_stream, stream_digest, uniform_stream, write_stream, write_trace, zipf_stream,
    StreamHeader,
};
use distmon_core::model::{exact_fp, FreqVector};
use distmon_core::{
    run_simulation, GlobalParams, Mode, MonitorConfig, SimOptions, SimulationReport, StreamEvent,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::{open_out, Provenance};
use crate::{
    BenchCommArgs, Command, ConstArgs, GenHardArgs, GenStreamArgs, HardKind, RunArgs,
    RunMonitorArgs, RunThresholdArgs, StreamKind, ValidateArgs,
};

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenStream(a) => gen_stream(&a),
        Command::GenHard(a) => gen_hard(&a),
        Command::RunThreshold(a) => run_threshold(&a),
        Command::RunMonitor(a) => run_monitor(&a),
        Command::VerifyReduction(a) => crate::verify::run(&a),
        Command::BenchComm(a) => bench_comm(&a),
        Command::Validate(a) => validate(&a),
    }
}

pub fn name_of<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value()
        .map(|p| p.get_name().to_string())
        .unwrap_or_default()
}

fn gen_stream(a: &GenStreamArgs) -> Result<()> {
    let mut prov = Provenance::new("gen-stream");
    prov.set("kind", name_of(&a.kind)).set("seed", a.seed);
    let (m, k, events) = match a.kind {
        StreamKind::Uniform | StreamKind::Zipf => {
            prov.set("k", a.k).set("m", a.m).set("len", a.len);
            let events = if a.kind == StreamKind::Zipf {
                prov.set("s", a.s);
                zipf_stream(a.k, a.m, a.len, a.s, a.seed)?
            } else {
                uniform_stream(a.k, a.m, a.len, a.seed)?
            };
            (a.m, a.k, events)
        }
        StreamKind::Btx => {
            prov.set("k", a.k).set("p", a.p).set("eps", a.eps);
            let inst = gen_btx(a.k, a.p, a.eps, a.seed)?;
            (inst.universe(), a.k, btx_to_stream(&inst))
        }
    };
    let header = StreamHeader {
        m,
        k,
        n: (events.len() as u64).max(1),
    };
    prov.note(format!("stream digest {:#018x}", stream_digest(&events)));
    let mut w = open_out(a.out.as_deref())?;
    prov.write(&mut w)?;
    write_stream(&mut w, header, &events)?;
    w.flush()?;
    Ok(())
}

fn gen_hard(a: &GenHardArgs) -> Result<()> {
    let mut prov = Provenance::new("gen-hard");
    prov.set("kind", name_of(&a.kind)).set("seed", a.seed);
    let inst = match a.kind {
        HardKind::Disj => {
            prov.set("nprime", a.nprime).set("beta", a.beta);
            HardInstance::Disj(gen_two_disj(a.nprime, a.beta, a.seed)?)
        }
        HardKind::Bitdisj => {
            prov.set("k", a.k)
                .set("nprime", a.nprime)
                .set("beta", a.beta);
            if let Some(w) = bit_disj_regime_warning(a.k, a.beta) {
                eprintln!("warning: {w}");
            }
            HardInstance::BitDisj(gen_bit_disj(a.k, a.nprime, a.beta, a.seed)?)
        }
        HardKind::Btx => {
            prov.set("k", a.k).set("p", a.p).set("eps", a.eps);
            HardInstance::Btx(gen_btx(a.k, a.p, a.eps, a.seed)?)
        }
        HardKind::Gapmaj => {
            prov.set("k", a.k);
            HardInstance::GapMaj(gen_gap_maj(a.k, a.seed)?)
        }
        HardKind::Quantile => {
            prov.set("k", a.k).set("eps", a.eps);
            HardInstance::Quantile(gen_quantile_instance(a.k, a.eps, a.seed)?)
        }
    };
    let mut w = open_out(a.out.as_deref())?;
    prov.write(&mut w)?;
    write_instance(&mut w, &inst)?;
    w.flush()?;
    Ok(())
}

fn load_stream(path: &Path) -> Result<(StreamHeader, Vec<StreamEvent>)> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_stream(BufReader::new(f)).with_context(|| format!("reading stream {}", path.display()))
}

fn set_constants(prov: &mut Provenance, c: &ConstArgs) {
    prov.set("c-gamma", c.c_gamma)
        .set("c-b", c.c_b)
        .set("b-floor", c.b_floor)
        .set("c-r", c.c_r)
        .set("c-diag", c.c_diag)
        .set("fire-fraction", c.fire_fraction);
}

/// Reads the stream and resolves the protocol parameters at `tau`.
fn prepare(
    run: &RunArgs,
    command: &str,
    tau: f64,
) -> Result<(Vec<StreamEvent>, GlobalParams, Provenance)> {
    let (header, events) = load_stream(&run.stream)?;
    let n = run.n.unwrap_or(header.n);
    let params = GlobalParams::with_constants(
        header.k,
        header.m,
        n,
        run.p,
        run.eps,
        tau,
        run.seed,
        run.constants.constants(),
    )?;
    let mut prov = Provenance::new(command);
    prov.set("stream", run.stream.display())
        .set("p", run.p)
        .set("eps", run.eps)
        .set("seed", run.seed)
        .set("n", n)
        .set("estimator", name_of(&run.estimator))
        .set("stride", run.stride);
    set_constants(&mut prov, &run.constants);
    prov.note(format!(
        "derived: k={} m={} gamma={} B={} r={} l_max={} triple_bits={}",
        params.k,
        params.m,
        params.gamma,
        params.b,
        params.r,
        params.l_max,
        params.triple_bits()
    ));
    prov.note(format!(
        "stream digest {:#018x} events {}",
        stream_digest(&events),
        events.len()
    ));
    Ok((events, params, prov))
}

fn finish(report: &SimulationReport, prov: &Provenance, out: Option<&Path>) -> Result<()> {
    let mut w = open_out(out)?;
    write_trace(&mut w, prov.lines(), &report.rows)?;
    w.flush()?;
    let fired = report
        .fired_at
        .map_or_else(|| "none".to_string(), |t| t.to_string());
    eprintln!(
        "messages={} bits={} fired_at={fired}",
        report.messages, report.bits
    );
    Ok(())
}

fn run_threshold(a: &RunThresholdArgs) -> Result<()> {
    let (events, params, mut prov) = prepare(&a.run, "run-threshold", a.tau)?;
    prov.set("tau", a.tau);
    let opts = SimOptions {
        stride: a.run.stride,
        estimator: a.run.estimator.into(),
    };
    let report = run_simulation(&events, &params, &Mode::Threshold, opts)?;
    if let Some(s) = report.coordinator {
        prov.note(format!(
            "coordinator: delivered {} dropped {} estimate_decreases {} largest_relative_drop {}",
            s.delivered, s.dropped, s.estimate_decreases, s.largest_relative_drop
        ));
    }
    finish(&report, &prov, a.run.out.as_deref())
}

fn run_monitor(a: &RunMonitorArgs) -> Result<()> {
    let (events, params, mut prov) = prepare(&a.run, "run-monitor", 1.0)?;
    let cfg = MonitorConfig {
        c_a: a.c_a,
        amplification: a.amplification,
        ladder_top: a.ladder_top,
    };
    let top = cfg.resolve_ladder_top(&params);
    let amp = cfg.resolve_amplification(top);
    prov.set("c-a", a.c_a)
        .set("ladder-top", top)
        .set("amplification", amp);
    let opts = SimOptions {
        stride: a.run.stride,
        estimator: a.run.estimator.into(),
    };
    let report = run_simulation(&events, &params, &Mode::Monitor(cfg), opts)?;
    finish(&report, &prov, a.run.out.as_deref())
}

/// Same coordinate sequence for every `k`; only the site assignment changes.
fn bench_stream(m: usize, len: u64, k: usize, seed: u64, trial: u64) -> Result<Vec<StreamEvent>> {
    let shape = uniform_stream(1, m, len, seed.wrapping_add(trial))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (trial << 32) ^ 0x517E);
    Ok(shape
        .into_iter()
        .map(|e| StreamEvent {
            site: rng.random_range(0..k),
            ..e
        })
        .collect())
}

fn bench_comm(a: &BenchCommArgs) -> Result<()> {
    let mut prov = Provenance::new("bench-comm");
    let ks =
        a.k.iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(",");
    prov.set("k", ks)
        .set("p", a.p)
        .set("eps", a.eps)
        .set("trials", a.trials)
        .set("m", a.m)
        .set("len", a.len)
        .set("tau-factor", a.tau_factor)
        .set("seed", a.seed);
    set_constants(&mut prov, &a.constants);
    let mut w = open_out(a.out.as_deref())?;
    prov.write(&mut w)?;
    writeln!(w, "k,trials,mean_messages,mean_bits,fired_runs")?;
    for &k in &a.k {
        let (mut msgs, mut bits, mut fired) = (0u64, 0u64, 0u64);
        for trial in 0..a.trials {
            let stream = bench_stream(a.m, a.len, k, a.seed, trial)?;
            let mut union = FreqVector::new(a.m);
            for e in &stream {
                union.apply_update(e.j)?;
            }
            let tau = (a.tau_factor * exact_fp(&union, a.p)?).max(1.0);
            let params = GlobalParams::with_constants(
                k,
                a.m,
                a.len.max(1),
                a.p,
                a.eps,
                tau,
                a.seed.wrapping_add(trial),
                a.constants.constants(),
            )?;
            let opts = SimOptions {
                stride: usize::MAX,
                ..SimOptions::default()
            };
            let rep = run_simulation(&stream, &params, &Mode::Threshold, opts)?;
            msgs += rep.messages;
            bits += rep.bits;
            fired += rep.fired_at.is_some() as u64;
        }
        let t = a.trials.max(1) as f64;
        writeln!(
            w,
            "{k},{},{},{},{fired}",
            a.trials,
            msgs as f64 / t,
            bits as f64 / t
        )?;
    }
    w.flush()?;
    Ok(())
}

fn validate(a: &ValidateArgs) -> Result<()> {
    let fail = |e: anyhow::Error| anyhow::Error::new(crate::CheckFailed(format!("{e:#}")));
    if let Some(path) = &a.stream {
        let (h, events) = load_stream(path).map_err(fail)?;
        println!(
            "ok: stream m={} k={} n={} events={}",
            h.m,
            h.k,
            h.n,
            events.len()
        );
    }
    if let Some(path) = &a.instance {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let inst = read_instance(BufReader::new(f)).map_err(|e| fail(e.into()))?;
        inst.validate().map_err(|e| fail(e.into()))?;
        println!("ok: {} instance", inst.kind());
    }
    Ok(())
}
