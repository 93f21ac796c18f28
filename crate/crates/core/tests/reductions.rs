use distmon_core::hardgen::{btx_eval, gen_bit_disj, gen_btx, Verdict};
use distmon_core::reductions::{
    bin_ball_trial, bit_disj_f0, bit_from_f0, btx_from_moments, btx_moments, btx_statistic,
    expected_distinct, gaussian_embed, gp_moment, l2_norm, lambda, normalized_pnorm, w_tilde,
    MomentTriple,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Composite Simpson oracle for E|g|^p = 2 int_0^inf x^p phi(x) dx.
fn gp_quadrature(p: f64) -> f64 {
    let phi = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    // substitute x = u^2 to tame the x^p cusp at 0 for p < 1
    let f = |u: f64| 2.0 * u.powf(2.0 * p) * phi(u * u) * 2.0 * u;
    let (a, b, n) = (0.0, 4.0, 20_000);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn gp_matches_quadrature() {
    for p in [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0] {
        let closed = gp_moment(p).unwrap();
        let numeric = gp_quadrature(p);
        assert!(
            (closed - numeric).abs() < 1e-6,
            "p = {p}: {closed} vs {numeric}"
        );
    }
    assert!((gp_moment(1.0).unwrap() - 0.797_884_560_8).abs() < 1e-9);
}

#[test]
fn embedding_p2_second_moment() {
    let x: Vec<i64> = (0..30).map(|i| (i % 7) - 3).collect();
    let y = gaussian_embed(&x, 10_000, 2.0, 42).unwrap();
    let want = l2_norm(&x).powi(2);
    let got = normalized_pnorm(&y, 2.0);
    assert!((got - want).abs() <= 0.03 * want, "{got} vs {want}");
}

#[test]
fn embedding_mean_within_three_sigma() {
    // y_j^2 / ||x||^2 is chi-square(1) with sd sqrt(2)
    let x = [5i64, -2, 0, 7, 1, 1, -9];
    let norm2 = l2_norm(&x).powi(2);
    let r = 4096;
    for seed in 0..5 {
        let y = gaussian_embed(&x, r, 2.0, seed).unwrap();
        let z = (normalized_pnorm(&y, 2.0) / norm2 - 1.0) / (2.0f64 / r as f64).sqrt();
        assert!(z.abs() <= 3.0, "seed {seed}: z = {z}");
    }
}

#[test]
fn moments_decide_btx() {
    let (k, p, eps) = (8, 2.0, 0.25);
    let mut agree = 0;
    let mut total = 0;
    for seed in 0..300 {
        let inst = gen_btx(k, p, eps, seed).unwrap();
        let Some(truth) = btx_eval(&inst).as_bit() else {
            continue;
        };
        let t = btx_moments(&inst, p);
        assert!(t.w0 >= t.w1.max(t.w2));
        agree += (btx_from_moments(&t, k, p, eps).unwrap() == truth) as u32;
        total += 1;
        if total == 200 {
            break;
        }
    }
    assert_eq!(total, 200);
    assert!(agree >= 190, "{agree}/200");
}

#[test]
fn star_band_sits_between_decisions() {
    let inst = gen_btx(8, 2.0, 0.25, 3).unwrap();
    let t = btx_moments(&inst, 2.0);
    let s = btx_statistic(&t, 8, 2.0, 0.25).unwrap();
    assert_eq!(btx_from_moments(&t, 8, 2.0, 0.25).unwrap(), s.abs() >= 6.0);
    assert!(matches!(
        btx_eval(&inst),
        Verdict::Zero | Verdict::One | Verdict::Star
    ));
}

#[test]
fn f0_estimator_with_exact_oracle() {
    let (k, nprime, beta, eps) = (400, 39_999, 0.25, 0.1);
    let lprime = (nprime + 1) / 4;
    let mut good = 0;
    for seed in 0..50 {
        let inst = gen_bit_disj(k, nprime, beta, seed).unwrap();
        let f0 = bit_disj_f0(&inst) as f64;
        let n = inst.ones() as u64;
        let est = bit_from_f0(f0, nprime, lprime, lambda(n, lprime as u64).unwrap()).unwrap();
        good += ((est - n as f64).abs() <= 1.0 / (4.0 * eps)) as u32;
    }
    assert!(good >= 45, "{good}/50");
}

#[test]
fn bin_ball_concentrates() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (bins, balls, eps) = (50_000u64, 100u64, 0.1);
    let er = expected_distinct(balls, bins).unwrap();
    let good = (0..200)
        .filter(|_| (bin_ball_trial(&mut rng, balls, bins) as f64 - er).abs() <= 1.0 / (10.0 * eps))
        .count();
    assert!(good >= 190, "{good}/200");
}

#[test]
fn p2_combination_formula() {
    let t = MomentTriple {
        w0: 100.0,
        w1: 30.0,
        w2: 41.0,
    };
    assert_eq!(w_tilde(&t, 2.0).unwrap(), 2.0 * 71.0 - 100.0);
    assert!(btx_from_moments(&t, 4, 0.5, 0.1).is_err());
}

proptest! {
    #[test]
    fn expected_distinct_bounded_and_increasing(n in 0u64..5000, bins in 2u64..5000) {
        let a = expected_distinct(n, bins).unwrap();
        let b = expected_distinct(n + 1, bins).unwrap();
        prop_assert!(a <= (n.min(bins) as f64) + 1e-9);
        prop_assert!(b >= a);
        // strict until (1 - 1/l)^N drops below double resolution
        if (n as f64) * (1.0 - 1.0 / bins as f64).ln() > -30.0 {
            prop_assert!(b > a);
        }
    }

    #[test]
    fn decision_is_a_pure_function(w0 in 0.0f64..1e6, w1 in 0.0f64..1e6, w2 in 0.0f64..1e6, p in 1.1f64..4.0) {
        let t = MomentTriple { w0, w1, w2 };
        prop_assert_eq!(btx_from_moments(&t, 8, p, 0.2).unwrap(), btx_from_moments(&t, 8, p, 0.2).unwrap());
    }

    #[test]
    fn embedding_is_linear_in_x(seed in 0u64..1000, c in -5i64..5) {
        let x = [3i64, -1, 4, 1, -5, 9];
        let cx: Vec<i64> = x.iter().map(|v| v * c).collect();
        let y = gaussian_embed(&x, 16, 2.0, seed).unwrap();
        let cy = gaussian_embed(&cx, 16, 2.0, seed).unwrap();
        for (a, b) in y.iter().zip(&cy) {
            prop_assert!((a * c as f64 - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
