//! Line-oriented instance files.
//!
//! ```text
//! TYPE k n eps seed
//! 0: 3 17 40
//! 1: 5
//! coord: 2 9 11
//! #meta
//! key values...
//! ```
//!
//! Raw site rows come first so a protocol can consume them without looking
//! at the hidden structure after `#meta`. For `DISJ` and `BITDISJ` the `eps`
//! slot carries `beta`; for `GAPMAJ` it carries the majority level 1/2.
//! Lines starting with `#` before the header are comments.

use std::io::{BufRead, Write};

use super::btx::{BlockType, BtxBlock, BtxInstance};
use super::disj::{BitDisjInstance, DisjInstance};
use super::gapmaj::{GapMajInstance, QuantileInstance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum HardInstance {
    Disj(DisjInstance),
    BitDisj(BitDisjInstance),
    Btx(BtxInstance),
    GapMaj(GapMajInstance),
    Quantile(QuantileInstance),
}

impl HardInstance {
    pub fn kind(&self) -> &'static str {
        match self {
            HardInstance::Disj(_) => "DISJ",
            HardInstance::BitDisj(_) => "BITDISJ",
            HardInstance::Btx(_) => "BTX",
            HardInstance::GapMaj(_) => "GAPMAJ",
            HardInstance::Quantile(_) => "QUANTILE",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HardInstance::Disj(d) => d.validate(),
            HardInstance::BitDisj(b) => b.validate(),
            HardInstance::Btx(b) => b.validate(),
            HardInstance::GapMaj(g) => g.validate(),
            HardInstance::Quantile(q) => q.validate(),
        }
    }
}

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn row<W: Write, T: std::fmt::Display>(
    w: &mut W,
    label: impl std::fmt::Display,
    items: impl IntoIterator<Item = T>,
) -> std::io::Result<()> {
    let body = join(items);
    if body.is_empty() {
        writeln!(w, "{label}:")
    } else {
        writeln!(w, "{label}: {body}")
    }
}

fn bits(z: &[bool]) -> String {
    z.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn write_instance<W: Write>(mut w: W, inst: &HardInstance) -> Result<()> {
    let w = &mut w;
    match inst {
        HardInstance::Disj(d) => {
            writeln!(w, "DISJ 2 {} {} {}", d.nprime, d.beta, d.seed)?;
            row(w, 0, &d.x)?;
            row(w, "coord", &d.y)?;
            writeln!(w, "#meta")?;
            match d.witness {
                Some(e) => writeln!(w, "witness {e}")?,
                None => writeln!(w, "witness none")?,
            }
        }
        HardInstance::BitDisj(b) => {
            writeln!(w, "BITDISJ {} {} {} {}", b.k, b.nprime, b.beta, b.seed)?;
            for (i, xi) in b.x.iter().enumerate() {
                row(w, i, xi)?;
            }
            row(w, "coord", &b.y)?;
            writeln!(w, "#meta")?;
            writeln!(w, "z {}", bits(&b.z))?;
        }
        HardInstance::Btx(b) => {
            writeln!(w, "BTX {} {} {} {}", b.k, b.n, b.eps, b.seed)?;
            for site in 0..b.k {
                let items = b.blocks.iter().enumerate().flat_map(|(bi, blk)| {
                    (0..b.n)
                        .filter(move |&c| blk.bit(site, c))
                        .map(move |c| bi * b.n + c)
                });
                row(w, site, items)?;
            }
            writeln!(w, "#meta")?;
            writeln!(w, "p {}", b.p)?;
            writeln!(w, "inv_eps {}", b.inv_eps)?;
            writeln!(w, "blocks {}", b.blocks.len())?;
            for (bi, blk) in b.blocks.iter().enumerate() {
                writeln!(w, "block {bi} {} {} {}", blk.m, blk.s, join(&blk.d))?;
            }
        }
        HardInstance::GapMaj(g) => {
            writeln!(w, "GAPMAJ {} 1 0.5 {}", g.k, g.seed)?;
            for (i, &b) in g.z.iter().enumerate() {
                row(w, i, b.then_some(0))?;
            }
            writeln!(w, "#meta")?;
        }
        HardInstance::Quantile(q) => {
            writeln!(
                w,
                "QUANTILE {} {} {} {}",
                q.k,
                2 * q.copies(),
                q.eps,
                q.seed
            )?;
            for (j, s) in q.sites.iter().enumerate() {
                row(w, j, s)?;
            }
            writeln!(w, "#meta")?;
            for (i, z) in q.z.iter().enumerate() {
                writeln!(w, "copy {i} {}", bits(z))?;
            }
        }
    }
    Ok(())
}

struct Parsed {
    kind: String,
    k: usize,
    n: usize,
    eps: f64,
    seed: u64,
    rows: Vec<Vec<usize>>,
    coord: Option<Vec<usize>>,
    meta: Vec<(usize, Vec<String>)>,
}

fn num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("bad {what}: {tok:?}")))
}

fn parse(r: impl BufRead) -> Result<Parsed> {
    let mut header: Option<(usize, Vec<String>)> = None;
    let mut rows = Vec::new();
    let mut coord = None;
    let mut meta = Vec::new();
    let mut in_meta = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if header.is_none() {
            if line.starts_with('#') {
                continue;
            }
            header = Some((lineno, line.split_whitespace().map(String::from).collect()));
            continue;
        }
        if line == "#meta" {
            in_meta = true;
            continue;
        }
        if in_meta {
            meta.push((lineno, line.split_whitespace().map(String::from).collect()));
            continue;
        }
        let (label, body) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(lineno, "expected `label: items`"))?;
        let items = body
            .split_whitespace()
            .map(|t| num::<usize>(t, lineno, "item"))
            .collect::<Result<Vec<_>>>()?;
        if label == "coord" {
            coord = Some(items);
        } else {
            let idx: usize = num(label, lineno, "site label")?;
            if idx != rows.len() {
                return Err(Error::parse(
                    lineno,
                    format!("site rows out of order at {idx}"),
                ));
            }
            rows.push(items);
        }
    }
    let (hline, h) = header.ok_or_else(|| Error::parse(1, "missing header"))?;
    if h.len() != 5 {
        return Err(Error::parse(hline, "header must be `TYPE k n eps seed`"));
    }
    Ok(Parsed {
        kind: h[0].clone(),
        k: num(&h[1], hline, "k")?,
        n: num(&h[2], hline, "n")?,
        eps: num(&h[3], hline, "eps")?,
        seed: num(&h[4], hline, "seed")?,
        rows,
        coord,
        meta,
    })
}

fn parse_bits(tok: &str, line: usize) -> Result<Vec<bool>> {
    tok.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(Error::parse(line, format!("bad bit {c:?}"))),
        })
        .collect()
}

fn meta_value<'a>(p: &'a Parsed, key: &str) -> Result<(usize, &'a [String])> {
    p.meta
        .iter()
        .find(|(_, toks)| toks.first().map(String::as_str) == Some(key))
        .map(|(l, toks)| (*l, &toks[1..]))
        .ok_or_else(|| Error::Structure(format!("missing meta key `{key}`")))
}

fn single(line: usize, toks: &[String]) -> Result<&str> {
    match toks {
        [one] => Ok(one),
        _ => Err(Error::parse(line, "expected one value")),
    }
}

fn check_rows(p: &Parsed) -> Result<()> {
    if p.rows.len() != p.k {
        return Err(Error::Structure(format!(
            "expected {} site rows, got {}",
            p.k,
            p.rows.len()
        )));
    }
    Ok(())
}

/// Parses an instance file. The result is structurally well typed but not
/// yet validated; call [`HardInstance::validate`].
pub fn read_instance<R: BufRead>(r: R) -> Result<HardInstance> {
    let p = parse(r)?;
    let inst = match p.kind.as_str() {
        "DISJ" => {
            if p.k != 2 || p.rows.len() != 1 {
                return Err(Error::Structure("DISJ has exactly one site row".into()));
            }
            let (line, w) = meta_value(&p, "witness")?;
            let w = single(line, w)?;
            let witness = if w == "none" {
                None
            } else {
                Some(num(w, line, "witness")?)
            };
            HardInstance::Disj(DisjInstance {
                nprime: p.n,
                beta: p.eps,
                seed: p.seed,
                x: p.rows[0].clone(),
                y: p.coord
                    .clone()
                    .ok_or_else(|| Error::Structure("missing coord row".into()))?,
                witness,
            })
        }
        "BITDISJ" => {
            check_rows(&p)?;
            let (line, z) = meta_value(&p, "z")?;
            HardInstance::BitDisj(BitDisjInstance {
                k: p.k,
                nprime: p.n,
                beta: p.eps,
                seed: p.seed,
                z: parse_bits(single(line, z)?, line)?,
                y: p.coord
                    .clone()
                    .ok_or_else(|| Error::Structure("missing coord row".into()))?,
                x: p.rows,
            })
        }
        "BTX" => {
            check_rows(&p)?;
            if p.k == 0 || p.k > 64 {
                return Err(Error::Structure(format!(
                    "BTX supports 1..=64 sites, got {}",
                    p.k
                )));
            }
            let (line, v) = meta_value(&p, "p")?;
            let pp: f64 = num(single(line, v)?, line, "p")?;
            let (line, v) = meta_value(&p, "inv_eps")?;
            let inv_eps: usize = num(single(line, v)?, line, "inv_eps")?;
            let (line, v) = meta_value(&p, "blocks")?;
            let n_blocks: usize = num(single(line, v)?, line, "blocks")?;
            let mut blocks = vec![
                BtxBlock {
                    cols: vec![0; p.n],
                    d: Vec::new(),
                    m: 0,
                    s: BlockType { x: false, y: false },
                };
                n_blocks
            ];
            let mut seen = vec![false; n_blocks];
            for (line, toks) in p.meta.iter().filter(|(_, t)| t[0] == "block") {
                if toks.len() != 4 + p.n {
                    return Err(Error::parse(
                        *line,
                        "block line needs index, M, type and n sites",
                    ));
                }
                let bi: usize = num(&toks[1], *line, "block index")?;
                if bi >= n_blocks || seen[bi] {
                    return Err(Error::parse(*line, format!("bad block index {bi}")));
                }
                seen[bi] = true;
                let s = parse_bits(&toks[3], *line)?;
                if s.len() != 2 {
                    return Err(Error::parse(*line, "block type is two bits"));
                }
                let blk = &mut blocks[bi];
                blk.m = num(&toks[2], *line, "special column")?;
                blk.s = BlockType { x: s[0], y: s[1] };
                blk.d = toks[4..]
                    .iter()
                    .map(|t| num(t, *line, "site"))
                    .collect::<Result<_>>()?;
            }
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(Error::Structure(format!(
                    "no meta line for block {missing}"
                )));
            }
            for (site, items) in p.rows.iter().enumerate() {
                for &item in items {
                    let (bi, c) = (item / p.n.max(1), item % p.n.max(1));
                    if bi >= n_blocks {
                        return Err(Error::Structure(format!(
                            "item {item} outside the universe"
                        )));
                    }
                    blocks[bi].cols[c] |= 1 << site;
                }
            }
            HardInstance::Btx(BtxInstance {
                k: p.k,
                p: pp,
                eps: p.eps,
                seed: p.seed,
                n: p.n,
                inv_eps,
                blocks,
            })
        }
        "GAPMAJ" => {
            check_rows(&p)?;
            let z = p
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| match r.as_slice() {
                    [] => Ok(false),
                    [0] => Ok(true),
                    _ => Err(Error::Structure(format!(
                        "site {i}: a bit row holds nothing or 0"
                    ))),
                })
                .collect::<Result<_>>()?;
            HardInstance::GapMaj(GapMajInstance {
                k: p.k,
                seed: p.seed,
                z,
            })
        }
        "QUANTILE" => {
            check_rows(&p)?;
            let mut z = Vec::new();
            for (line, toks) in p.meta.iter().filter(|(_, t)| t[0] == "copy") {
                if toks.len() != 3 || num::<usize>(&toks[1], *line, "copy index")? != z.len() {
                    return Err(Error::parse(
                        *line,
                        "copy lines must be `copy i bits` in order",
                    ));
                }
                z.push(parse_bits(&toks[2], *line)?);
            }
            HardInstance::Quantile(QuantileInstance {
                k: p.k,
                eps: p.eps,
                seed: p.seed,
                z,
                sites: p
                    .rows
                    .into_iter()
                    .map(|r| r.into_iter().map(|x| x as u64).collect())
                    .collect(),
            })
        }
        other => return Err(Error::parse(1, format!("unknown instance type {other:?}"))),
    };
    Ok(inst)
}
