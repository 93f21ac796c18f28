//! Estimators that turn moment values into answers for the composed
//! problems, and the Gaussian `l_2 -> l_p` embedding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hardgen::{BitDisjInstance, BtxInstance};
use crate::hashing::derive_seed;

/// `F_p` of all sites, of the first half and of the second half.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentTriple {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
}

fn check_p_above_one(p: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::param(
            "p",
            format!("needs p > 1 so that 2^(p-1) - 1 > 0, got {p}"),
        ));
    }
    Ok(())
}

/// `(2^{p-1} (W1 + W2) - W0) / (2^{p-1} - 1)`.
pub fn w_tilde(t: &MomentTriple, p: f64) -> Result<f64> {
    check_p_above_one(p)?;
    let c = 2f64.powf(p - 1.0);
    Ok((c * (t.w1 + t.w2) - t.w0) / (c - 1.0))
}

/// `2^p W~ / k^p - (2^p + 1) / (2 eps^2)`; the gap decision compares its
/// magnitude with `1.5/eps`.
pub fn btx_statistic(t: &MomentTriple, k: usize, p: f64, eps: f64) -> Result<f64> {
    let w = w_tilde(t, p)?;
    let two_p = 2f64.powf(p);
    Ok(two_p * w / (k as f64).powf(p) - (two_p + 1.0) / (2.0 * eps * eps))
}

/// 1 iff `|2^p W~ / k^p - (2^p+1)/(2 eps^2)| >= 1.5/eps`.
pub fn btx_from_moments(t: &MomentTriple, k: usize, p: f64, eps: f64) -> Result<bool> {
    Ok(btx_statistic(t, k, p, eps)?.abs() >= 1.5 / eps)
}

/// Exact moments of a BTX instance, with item `block * n + column`.
pub fn btx_moments(inst: &BtxInstance, p: f64) -> MomentTriple {
    let low = inst.half_mask();
    let (mut w0, mut w1, mut w2) = (0.0, 0.0, 0.0);
    for blk in &inst.blocks {
        for &col in &blk.cols {
            if col == 0 {
                continue;
            }
            let a = (col & low).count_ones() as f64;
            let b = (col & !low).count_ones() as f64;
            w0 += (a + b).powf(p);
            w1 += a.powf(p);
            w2 += b.powf(p);
        }
    }
    MomentTriple { w0, w1, w2 }
}

/// `(W~ - (n' - l')) / (1 - lambda)`, the estimate of `sum Z_i`.
pub fn bit_from_f0(w_tilde: f64, nprime: usize, lprime: usize, lambda: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::param(
            "lambda",
            format!("must lie in [0, 1), got {lambda}"),
        ));
    }
    Ok((w_tilde - (nprime as f64 - lprime as f64)) / (1.0 - lambda))
}

/// `E[R] = l (1 - (1 - 1/l)^N)`: expected number of occupied bins after
/// `N` uniform balls into `l` bins.
pub fn expected_distinct(n_balls: u64, bins: u64) -> Result<f64> {
    if bins == 0 {
        return Err(Error::param("lprime", "need at least one bin"));
    }
    let l = bins as f64;
    // ln_1p keeps (1 - 1/l)^N accurate for large l
    let miss = (n_balls as f64 * (-1.0 / l).ln_1p()).exp();
    Ok(if bins == 1 {
        if n_balls == 0 {
            0.0
        } else {
            1.0
        }
    } else {
        l * (1.0 - miss)
    })
}

/// `lambda(N) = 1 - E[R]/N`, or 0 when there are no balls.
pub fn lambda(n_balls: u64, bins: u64) -> Result<f64> {
    let r = expected_distinct(n_balls, bins)?;
    Ok(if n_balls == 0 {
        0.0
    } else {
        1.0 - r / n_balls as f64
    })
}

/// Throws `n_balls` uniform balls into `bins` bins and counts occupied bins.
pub fn bin_ball_trial<R: Rng + ?Sized>(rng: &mut R, n_balls: u64, bins: u64) -> u64 {
    let mut hit = rustc_hash::FxHashSet::default();
    for _ in 0..n_balls {
        hit.insert(rng.random_range(0..bins));
    }
    hit.len() as u64
}

/// Number of distinct elements across all site sets.
pub fn bit_disj_f0(inst: &BitDisjInstance) -> usize {
    let mut seen = vec![false; inst.nprime];
    let mut count = 0;
    for &e in inst.x.iter().flatten() {
        if !std::mem::replace(&mut seen[e], true) {
            count += 1;
        }
    }
    count
}

/// `G_p = E|N(0,1)|^p = 2^{p/2} Gamma((p+1)/2) / sqrt(pi)`.
pub fn gp_moment(p: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::param("p", format!("must be positive, got {p}")));
    }
    Ok(2f64.powf(p / 2.0) * libm::tgamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt())
}

/// `y_j = <v^j, x> / G_p^{1/p}` for `j < r`, with `v^j` i.i.d. standard
/// normal vectors drawn (ziggurat method) from a ChaCha8 stream seeded by `seed`.
pub fn gaussian_embed(x: &[i64], r: usize, p: f64, seed: u64) -> Result<Vec<f64>> {
    if r == 0 {
        return Err(Error::param("r", "need at least one output coordinate"));
    }
    let scale = gp_moment(p)?.powf(1.0 / p);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x6A55]));
    Ok((0..r)
        .map(|_| {
            let dot: f64 = x
                .iter()
                .map(|&xi| rng.sample::<f64, _>(StandardNormal) * xi as f64)
                .sum();
            dot / scale
        })
        .collect())
}

/// `||y||_p^p / r`, which concentrates around `||x||_2^p`.
pub fn normalized_pnorm(y: &[f64], p: f64) -> f64 {
    y.iter().map(|v| v.abs().powf(p)).sum::<f64>() / y.len() as f64
}

pub fn l2_norm(x: &[i64]) -> f64 {
    x.iter()
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_w_tilde_is_twice_halves_minus_whole() {
        let t = MomentTriple {
            w0: 10.0,
            w1: 3.0,
            w2: 4.5,
        };
        assert!((w_tilde(&t, 2.0).unwrap() - (2.0 * 7.5 - 10.0)).abs() < 1e-12);
        assert!(w_tilde(&t, 1.0).is_err());
    }

    #[test]
    fn noise_free_triple_recovers_zero_xor_count() {
        // ordinary ones contribute 1 to W0 and to exactly one half; Q is chosen
        // so that the statistic sits at U = 0 below its centre
        let (k, p, eps) = (8usize, 2.0, 0.25);
        let two_p: f64 = 2f64.powf(p);
        let kp = (k as f64).powf(p);
        let q = (kp / two_p) * (two_p + 1.0) / (2.0 * eps * eps);
        let t = MomentTriple {
            w0: q,
            w1: q / 2.0,
            w2: q / 2.0,
        };
        let stat = btx_statistic(&t, k, p, eps).unwrap();
        assert!(stat.abs() < 1e-9);
        assert!(!btx_from_moments(&t, k, p, eps).unwrap());
    }

    #[test]
    fn f0_estimator_examples() {
        assert_eq!(bit_from_f0(30.0, 39, 10, 0.0).unwrap(), 1.0);
        assert_eq!(bit_from_f0(29.0, 39, 10, 0.0).unwrap(), 0.0);
        assert_eq!(bit_from_f0(36.0, 39, 10, 0.0).unwrap(), 7.0);
        assert!(bit_from_f0(36.0, 39, 10, 1.0).is_err());
    }

    #[test]
    fn expected_distinct_examples() {
        assert_eq!(expected_distinct(0, 10).unwrap(), 0.0);
        assert!((expected_distinct(1, 10).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(expected_distinct(5, 1).unwrap(), 1.0);
        assert!(expected_distinct(3, 0).is_err());
        // two balls, two bins: 1.5
        assert!((expected_distinct(2, 2).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(lambda(0, 10).unwrap(), 0.0);
    }

    #[test]
    fn gp_closed_forms() {
        assert!((gp_moment(2.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((gp_moment(4.0).unwrap() - 3.0).abs() < 1e-12);
        assert!((gp_moment(1.0).unwrap() - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!(gp_moment(0.0).is_err());
    }

    #[test]
    fn zero_vector_embeds_to_zero() {
        let y = gaussian_embed(&[0; 20], 16, 1.5, 3).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        assert!(gaussian_embed(&[1], 0, 2.0, 3).is_err());
    }

    #[test]
    fn embedding_is_seeded() {
        let x = [3, -1, 4, 1, -5];
        assert_eq!(
            gaussian_embed(&x, 8, 3.0, 9).unwrap(),
            gaussian_embed(&x, 8, 3.0, 9).unwrap()
        );
        assert_ne!(
            gaussian_embed(&x, 8, 3.0, 9).unwrap(),
            gaussian_embed(&x, 8, 3.0, 10).unwrap()
        );
    }
}
