use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_w1::critic::CriticNet;
use robust_w1::exact_ot::{exact_w1_dual_check, exact_w1_points};
use robust_w1::mlp::{Mlp, MlpShape};
use robust_w1::{exact_w1, Sample};

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn repeat_rows(xs: &[f64], d: usize, times: usize) -> Vec<f64> {
    xs.chunks(d).flat_map(|p| std::iter::repeat(p).take(times).flatten().copied()).collect()
}

fn cloud(seed: u64, n: usize, d: usize) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n * d).map(|_| r.gen_range(-5.0..5.0)).collect()
}

#[test]
fn unbalanced_matches_replicated_assignment() {
    // uniform weights 1/n and 1/m become an equal-size problem once every
    // point is repeated lcm/n (resp. lcm/m) times
    for (seed, (n, m)) in [(2, 3), (3, 4), (4, 6), (5, 2), (1, 7)].into_iter().enumerate() {
        let d = 2;
        let xs = cloud(seed as u64, n, d);
        let ys = cloud(100 + seed as u64, m, d);
        let l = n / gcd(n, m) * m;
        let balanced = exact_w1_points(&repeat_rows(&xs, d, l / n), &repeat_rows(&ys, d, l / m), d).unwrap();
        let direct = exact_w1_points(&xs, &ys, d).unwrap();
        assert!((direct - balanced).abs() < 1e-10, "{n}x{m}: {direct} vs {balanced}");
    }
}

#[test]
fn single_points_give_their_distance() {
    let w: f64 = exact_w1_points(&[0.0, 0.0], &[3.0, 4.0], 2).unwrap();
    assert!((w - 5.0).abs() < 1e-15);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let a = Sample::clean(vec![0.0, 1.0], 2).unwrap();
    let b = Sample::clean(vec![0.0, 1.0, 2.0], 3).unwrap();
    assert!(exact_w1(&a, &b).is_err());
}

#[test]
fn critic_certificate_never_exceeds_exact_value() {
    for seed in 0..20u64 {
        let xs = Sample::clean(cloud(seed, 12, 2), 2).unwrap();
        let ys = Sample::clean(cloud(seed + 50, 9, 2), 2).unwrap();
        let critic = CriticNet::from_mlp(Mlp::init_uniform(MlpShape::new(2, 8, 1), 1.0, 1.0, seed), 1.0).unwrap();
        let lower = exact_w1_dual_check(&xs, &ys, &critic).unwrap();
        let exact = exact_w1(&xs, &ys).unwrap();
        assert!(lower <= exact + 1e-12, "seed {seed}: {lower} > {exact}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_and_translation_invariant(seed in any::<u64>(), n in 1usize..10, m in 1usize..10, shift in -10.0f64..10.0) {
        let xs = cloud(seed, n, 2);
        let ys = cloud(seed ^ 0xabc, m, 2);
        let ab = exact_w1_points(&xs, &ys, 2).unwrap();
        let ba = exact_w1_points(&ys, &xs, 2).unwrap();
        prop_assert!((ab - ba).abs() < 1e-10);
        let xs2: Vec<f64> = xs.iter().map(|v| v + shift).collect();
        let ys2: Vec<f64> = ys.iter().map(|v| v + shift).collect();
        prop_assert!((exact_w1_points(&xs2, &ys2, 2).unwrap() - ab).abs() < 1e-9);
    }

    #[test]
    fn bounded_by_mean_pairwise_distance(seed in any::<u64>(), n in 1usize..10, m in 1usize..10) {
        // the independent coupling is feasible
        let xs = cloud(seed, n, 3);
        let ys = cloud(seed.wrapping_add(1), m, 3);
        let mut total = 0.0;
        for a in xs.chunks(3) {
            for b in ys.chunks(3) {
                total += a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            }
        }
        let w = exact_w1_points(&xs, &ys, 3).unwrap();
        prop_assert!(w >= 0.0 && w <= total / (n * m) as f64 + 1e-10);
    }
}
