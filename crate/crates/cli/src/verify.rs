//! Monte-Carlo checks of the reduction estimators against exact oracles.

use std::io::Write;

use anyhow::Result;
use distmon_core::hardgen::{btx_eval, gen_bit_disj, gen_btx, gen_quantile_instance};
use distmon_core::reductions::{
    bin_ball_trial, bit_disj_f0, bit_from_f0, btx_from_moments, btx_moments, btx_statistic,
    expected_distinct, gaussian_embed, l2_norm, lambda, normalized_pnorm,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::commands::name_of;
use crate::output::{open_out, Provenance};
use crate::{CheckFailed, Reduction, VerifyArgs};

struct Summary {
    trials: usize,
    agree: usize,
    /// Denominator of the agreement fraction.
    scored: usize,
    target: f64,
    /// Secondary checks that must also reach the target.
    extra_ok: bool,
    note: String,
}

/// Per-trial CSV, or nothing.
struct Detail(Option<Box<dyn Write>>);

impl Detail {
    fn row(&mut self, line: std::fmt::Arguments) -> Result<()> {
        if let Some(w) = &mut self.0 {
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

pub fn run(a: &VerifyArgs) -> Result<()> {
    let mut prov = Provenance::new("verify-reduction");
    prov.note(format!("reduction {}", name_of(&a.which)));
    prov.set("seed", a.seed);
    let mut detail = Detail(match &a.per_trial {
        Some(p) => Some(open_out(Some(p))?),
        None => None,
    });
    let summary = match a.which {
        Reduction::Btx => btx(a, &mut prov, &mut detail)?,
        Reduction::F0bit => f0bit(a, &mut prov, &mut detail)?,
        Reduction::Embed => embed(a, &mut prov, &mut detail)?,
        Reduction::Quantile => quantile(a, &mut prov, &mut detail)?,
    };
    if let Some(w) = &mut detail.0 {
        w.flush()?;
    }
    let fraction = if summary.scored == 0 {
        0.0
    } else {
        summary.agree as f64 / summary.scored as f64
    };
    let pass = summary.scored > 0 && fraction >= summary.target && summary.extra_ok;
    let mut w = open_out(a.out.as_deref())?;
    prov.write(&mut w)?;
    writeln!(w, "reduction,trials,agree,fraction,target,pass,note")?;
    writeln!(
        w,
        "{},{},{},{fraction},{},{pass},{}",
        name_of(&a.which),
        summary.trials,
        summary.agree,
        summary.target,
        summary.note
    )?;
    w.flush()?;
    if !pass {
        let why = if fraction >= summary.target {
            format!("secondary check failed ({})", summary.note)
        } else {
            format!("agreement {fraction:.3} below target {}", summary.target)
        };
        return Err(CheckFailed(format!("{} {why}", name_of(&a.which))).into());
    }
    Ok(())
}

fn btx(a: &VerifyArgs, prov: &mut Provenance, detail: &mut Detail) -> Result<Summary> {
    let k = a.k.unwrap_or(8);
    let p = a.p.unwrap_or(2.0);
    let eps = a.eps.unwrap_or(0.25);
    let trials = a.trials.unwrap_or(200);
    prov.set("k", k)
        .set("p", p)
        .set("eps", eps)
        .set("trials", trials);
    detail.row(format_args!("trial,seed,truth,decision,statistic"))?;
    let (mut agree, mut done, mut drawn) = (0, 0, 0u64);
    // star instances carry no answer; draw until enough scored ones
    while done < trials && drawn < 20 * trials as u64 + 100 {
        let seed = a.seed.wrapping_add(drawn);
        drawn += 1;
        let inst = gen_btx(k, p, eps, seed)?;
        let Some(truth) = btx_eval(&inst).as_bit() else {
            continue;
        };
        let t = btx_moments(&inst, p);
        let decision = btx_from_moments(&t, k, p, eps)?;
        let stat = btx_statistic(&t, k, p, eps)?;
        detail.row(format_args!(
            "{done},{seed},{},{},{stat}",
            truth as u8, decision as u8
        ))?;
        agree += (decision == truth) as usize;
        done += 1;
    }
    Ok(Summary {
        trials: done,
        agree,
        scored: done,
        target: 0.95,
        extra_ok: true,
        note: format!("instances_drawn={drawn}"),
    })
}

fn f0bit(a: &VerifyArgs, prov: &mut Provenance, detail: &mut Detail) -> Result<Summary> {
    let k = a.k.unwrap_or(400);
    let nprime = a.nprime.unwrap_or(39_999);
    let beta = a.beta.unwrap_or(0.25);
    let eps = a.eps.unwrap_or(0.1);
    let trials = a.trials.unwrap_or(200);
    prov.set("k", k)
        .set("nprime", nprime)
        .set("beta", beta)
        .set("eps", eps)
        .set("trials", trials);
    let lprime = (nprime + 1) / 4;
    let tol = 1.0 / (4.0 * eps);
    let ball_tol = 1.0 / (10.0 * eps);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ 0xB1B);
    detail.row(format_args!(
        "trial,seed,sum_z,f0,estimate,estimate_lambda0,bins_occupied,expected_occupied"
    ))?;
    let (mut hit, mut hit_plain, mut balls_ok) = (0, 0, 0);
    for t in 0..trials {
        let seed = a.seed.wrapping_add(t as u64);
        let inst = gen_bit_disj(k, nprime, beta, seed)?;
        let n = inst.ones() as u64;
        let f0 = bit_disj_f0(&inst) as f64;
        let est = bit_from_f0(f0, nprime, lprime, lambda(n, lprime as u64)?)?;
        let plain = bit_from_f0(f0, nprime, lprime, 0.0)?;
        let occupied = bin_ball_trial(&mut rng, n, lprime as u64);
        let expected = expected_distinct(n, lprime as u64)?;
        detail.row(format_args!(
            "{t},{seed},{n},{f0},{est},{plain},{occupied},{expected}"
        ))?;
        hit += ((est - n as f64).abs() <= tol) as usize;
        hit_plain += ((plain - n as f64).abs() <= tol) as usize;
        balls_ok += ((occupied as f64 - expected).abs() <= ball_tol) as usize;
    }
    Ok(Summary {
        trials,
        agree: hit,
        scored: trials,
        target: 0.9,
        extra_ok: balls_ok as f64 >= 0.9 * trials as f64,
        note: format!("lambda0_agree={hit_plain} binball_within={balls_ok}"),
    })
}

fn embed(a: &VerifyArgs, prov: &mut Provenance, detail: &mut Detail) -> Result<Summary> {
    let p = a.p.unwrap_or(2.0);
    let eps = a.eps.unwrap_or(0.25);
    let r = a.r.unwrap_or((64.0 / (eps * eps)).round() as usize);
    let dim = a.dim.unwrap_or(40);
    let trials = a.trials.unwrap_or(100);
    prov.set("p", p)
        .set("eps", eps)
        .set("r", r)
        .set("dim", dim)
        .set("trials", trials);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ 0xE3B);
    let x: Vec<i64> = (0..dim).map(|_| rng.random_range(-20..=20)).collect();
    let target = l2_norm(&x).powf(p);
    detail.row(format_args!("trial,ratio"))?;
    let mut inside = 0;
    for t in 0..trials {
        let y = gaussian_embed(
            &x,
            r,
            p,
            a.seed.wrapping_mul(1_000_003).wrapping_add(t as u64),
        )?;
        let ratio = normalized_pnorm(&y, p) / target;
        detail.row(format_args!("{t},{ratio}"))?;
        inside += ((ratio - 1.0).abs() <= eps / 3.0) as usize;
    }
    Ok(Summary {
        trials,
        agree: inside,
        scored: trials,
        target: 0.9,
        extra_ok: true,
        note: format!("norm2={}", l2_norm(&x)),
    })
}

fn quantile(a: &VerifyArgs, prov: &mut Provenance, detail: &mut Detail) -> Result<Summary> {
    let k = a.k.unwrap_or(64);
    let eps = a.eps.unwrap_or(0.025);
    let trials = a.trials.unwrap_or(100);
    prov.set("k", k).set("eps", eps).set("trials", trials);
    detail.row(format_args!("trial,copy,ones,recovered,decidable"))?;
    let (mut right, mut decidable) = (0, 0);
    let half = k as f64 / 2.0;
    for t in 0..trials {
        let q = gen_quantile_instance(k, eps, a.seed.wrapping_add(t as u64))?;
        let got = q.recover_copies()?;
        for (i, row) in q.z.iter().enumerate() {
            let ones = row.iter().filter(|&&b| b).count() as f64;
            let gap = (ones - half).abs() >= (k as f64).sqrt();
            detail.row(format_args!("{t},{i},{ones},{},{}", got[i], gap as u8))?;
            if gap {
                decidable += 1;
                right += (got[i] == (ones > half) as u64) as usize;
            }
        }
    }
    Ok(Summary {
        trials,
        agree: right,
        scored: decidable,
        target: 1.0,
        extra_ok: true,
        note: format!("decidable_copies={decidable}"),
    })
}
