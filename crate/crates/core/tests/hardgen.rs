use std::collections::HashMap;

use distmon_core::hardgen::{
    bit_disj_regime_warning, btx_eval, btx_eval_hidden, btx_to_stream, conditional_on_y,
    gap_maj_eval, gen_bit_disj, gen_btx, gen_gap_maj, gen_quantile_instance, gen_two_disj,
    read_instance, write_instance, xor_eval, HardInstance, Verdict,
};
use distmon_core::model::{exact_fp, FreqVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == size)
        .map(|m| (0..n).filter(|&i| m >> i & 1 == 1).collect())
        .collect()
}

// Brute-force law of x given y under tau_beta on a 7-element universe:
// enumerate every (x, y) pair with its joint weight and condition on y.
#[test]
fn conditional_sampler_matches_enumeration() {
    let n = 7;
    let l = 2;
    let beta = 0.25;
    let all = subsets(n, l);
    let disjoint_pairs = all
        .iter()
        .flat_map(|x| all.iter().map(move |y| (x, y)))
        .filter(|(x, y)| x.iter().all(|e| !y.contains(e)))
        .count() as f64;
    let touching_pairs = all
        .iter()
        .flat_map(|x| all.iter().map(move |y| (x, y)))
        .filter(|(x, y)| x.iter().filter(|e| y.contains(e)).count() == 1)
        .count() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for y in [vec![0, 1], vec![2, 6]] {
        let outside: Vec<usize> = (0..n).filter(|e| !y.contains(e)).collect();
        let joint: Vec<f64> = all
            .iter()
            .map(|x| match x.iter().filter(|e| y.contains(e)).count() {
                0 => (1.0 - beta) / disjoint_pairs,
                1 => beta / touching_pairs,
                _ => 0.0,
            })
            .collect();
        let z: f64 = joint.iter().sum();
        let exact: Vec<f64> = joint.iter().map(|w| w / z).collect();

        let draws = 100_000;
        let mut counts: HashMap<Vec<usize>, u32> = HashMap::new();
        for _ in 0..draws {
            let (x, w) = conditional_on_y(&mut rng, &y, &outside, beta);
            assert_eq!(w.is_some(), x.iter().any(|e| y.contains(e)));
            *counts.entry(x).or_default() += 1;
        }
        let tv: f64 = all
            .iter()
            .zip(&exact)
            .map(|(x, &q)| (counts.get(x).copied().unwrap_or(0) as f64 / draws as f64 - q).abs())
            .sum::<f64>()
            / 2.0;
        assert!(counts.keys().all(|x| all.contains(x)));
        assert!(tv < 0.02, "y = {y:?}: TV {tv}");
    }
}

#[test]
fn bit_disj_sum_concentrates() {
    let (k, beta) = (64, 0.25);
    let draws = 1000;
    let total: usize = (0..draws)
        .map(|s| gen_bit_disj(k, 63, beta, s).unwrap().ones())
        .sum();
    let mean = total as f64 / draws as f64;
    let sd = (k as f64 * beta * (1.0 - beta) / draws as f64).sqrt();
    assert!((mean - beta * k as f64).abs() <= 4.0 * sd, "mean {mean}");
}

#[test]
fn regime_warning_threshold() {
    assert!(bit_disj_regime_warning(16, 0.25).is_some());
    assert!(bit_disj_regime_warning(32, 0.25).is_none());
}

#[test]
fn every_pair_is_tau_shaped() {
    let b = gen_bit_disj(32, 127, 0.2, 8).unwrap();
    for xi in &b.x {
        assert_eq!(xi.len(), 32);
        assert!(xi.iter().filter(|e| b.y.binary_search(e).is_ok()).count() <= 1);
    }
}

#[test]
fn btx_type_frequencies_and_columns() {
    // 1/eps^2 = 400 blocks
    let inst = gen_btx(4, 2.0, 0.05, 12).unwrap();
    assert_eq!(inst.blocks.len(), 400);
    for c in inst.type_counts() {
        assert!((60..=140).contains(&c), "{:?}", inst.type_counts());
    }
    for b in &inst.blocks {
        for (j, &col) in b.cols.iter().enumerate() {
            if j != b.m {
                assert!(col.count_ones() <= 1);
            }
        }
        if b.s.x && b.s.y {
            assert_eq!(b.cols[b.m], inst.full_mask());
        }
    }
}

#[test]
fn hidden_and_raw_evaluation_agree() {
    for seed in 0..50 {
        let inst = gen_btx(8, 2.0, 0.1, seed).unwrap();
        assert_eq!(btx_eval(&inst), btx_eval_hidden(&inst));
    }
}

#[test]
fn xor_examples() {
    assert!(!xor_eval(&[0, 0, 0], 4));
    assert!(xor_eval(&[0, 0b0101, 0], 4));
    assert!(!xor_eval(&[0b1111], 4));
}

#[test]
fn gap_maj_examples() {
    assert_eq!(gap_maj_eval(&[false; 16], 0.5), Verdict::Zero);
    assert_eq!(gap_maj_eval(&[true; 16], 0.5), Verdict::One);
    let g = gen_gap_maj(16, 1).unwrap();
    assert_eq!(g, gen_gap_maj(16, 1).unwrap());
}

#[test]
fn btx_stream_moment_structure() {
    let (k, p) = (8usize, 2.0);
    let inst = gen_btx(k, p, 0.2, 5).unwrap();
    let stream = btx_to_stream(&inst);
    assert_eq!(stream.len(), inst.ones());
    let mut union = FreqVector::new(inst.universe());
    for ev in &stream {
        union.apply_update(ev.j).unwrap();
    }
    let (mut singles, mut halves, mut fulls) = (0.0, 0.0, 0.0);
    for (_, c) in union.iter() {
        match c as usize {
            1 => singles += 1.0,
            c if c == k / 2 => halves += 1.0,
            c if c == k => fulls += 1.0,
            other => panic!("unexpected column weight {other}"),
        }
    }
    let structured = singles + halves * (k as f64 / 2.0).powf(p) + fulls * (k as f64).powf(p);
    assert_eq!(exact_fp(&union, p).unwrap(), structured);
    assert_eq!(halves as usize, inst.xor_count_hidden());
}

#[test]
fn all_zero_btx_gives_empty_stream() {
    let mut inst = gen_btx(4, 2.0, 0.5, 1).unwrap();
    for b in &mut inst.blocks {
        b.cols.iter_mut().for_each(|c| *c = 0);
    }
    assert!(btx_to_stream(&inst).is_empty());
}

#[test]
fn quantile_recovery_in_gap_regime() {
    let k = 16;
    for seed in 0..20 {
        let q = gen_quantile_instance(k, 0.05, seed).unwrap();
        assert_eq!(q.copies(), 5);
        let got = q.recover_copies().unwrap();
        for (i, row) in q.z.iter().enumerate() {
            let ones = row.iter().filter(|&&b| b).count() as f64;
            if (ones - k as f64 / 2.0).abs() >= (k as f64).sqrt() {
                assert_eq!(
                    got[i],
                    (ones > k as f64 / 2.0) as u64,
                    "seed {seed} copy {i}"
                );
            }
        }
    }
}

#[test]
fn serialization_round_trips_every_type() {
    let insts = [
        HardInstance::Disj(gen_two_disj(39, 0.2, 3).unwrap()),
        HardInstance::BitDisj(gen_bit_disj(8, 63, 0.25, 3).unwrap()),
        HardInstance::Btx(gen_btx(4, 2.0, 0.25, 3).unwrap()),
        HardInstance::GapMaj(gen_gap_maj(12, 3).unwrap()),
        HardInstance::Quantile(gen_quantile_instance(16, 0.1, 3).unwrap()),
    ];
    for inst in insts {
        let mut buf = Vec::new();
        write_instance(&mut buf, &inst).unwrap();
        let back = read_instance(buf.as_slice()).unwrap();
        assert_eq!(back, inst, "{}", inst.kind());
        back.validate().unwrap();
    }
}

fn instance(kind: u8, seed: u64) -> HardInstance {
    match kind {
        0 => HardInstance::Disj(gen_two_disj(19, 0.25, seed).unwrap()),
        1 => HardInstance::BitDisj(gen_bit_disj(6, 31, 0.25, seed).unwrap()),
        2 => HardInstance::Btx(gen_btx(4, 2.0, 0.5, seed).unwrap()),
        _ => HardInstance::Quantile(gen_quantile_instance(9, 0.1, seed).unwrap()),
    }
}

// Break one structural constraint; the validator must notice.
fn mutate(inst: &mut HardInstance, pick: usize) {
    match inst {
        HardInstance::Disj(d) => {
            let i = pick % d.x.len();
            d.x.remove(i);
        }
        HardInstance::BitDisj(b) => {
            let i = pick % b.k;
            b.z[i] = !b.z[i];
        }
        HardInstance::Btx(b) => {
            let bi = pick % b.blocks.len();
            let blk = &mut b.blocks[bi];
            let col = pick / 7 % blk.cols.len();
            // the allowed site of an ordinary column holds a free bit
            let mut site = pick / 3 % b.k;
            if col != blk.m && site == blk.d[col] {
                site = (site + 1) % b.k;
            }
            blk.cols[col] ^= 1 << site;
        }
        HardInstance::Quantile(q) => {
            let j = pick % q.k;
            let i = pick / 5 % q.copies();
            q.sites[j][i] ^= 1;
        }
        HardInstance::GapMaj(g) => {
            g.z.pop();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn validators_reject_mutations(kind in 0u8..4, seed in 0u64..10_000, pick in 0usize..10_000) {
        let mut inst = instance(kind, seed);
        prop_assert!(inst.validate().is_ok());
        mutate(&mut inst, pick);
        prop_assert!(inst.validate().is_err());
    }

    #[test]
    fn generators_are_pure(kind in 0u8..4, seed in 0u64..10_000) {
        prop_assert_eq!(instance(kind, seed), instance(kind, seed));
    }

    #[test]
    fn conditional_sampler_output_is_sorted(seed in 0u64..10_000, beta in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4 * rng.random_range(1..20usize) - 1;
        let l = (n + 1) / 4;
        let mut y: Vec<usize> = rand::seq::index::sample(&mut rng, n, l).into_vec();
        y.sort_unstable();
        let outside: Vec<usize> = (0..n).filter(|e| y.binary_search(e).is_err()).collect();
        let (x, w) = conditional_on_y(&mut rng, &y, &outside, beta);
        prop_assert_eq!(x.len(), l);
        prop_assert!(x.windows(2).all(|p| p[0] < p[1]));
        if let Some(w) = w {
            prop_assert!(y.contains(&w) && x.contains(&w));
        }
    }
}
