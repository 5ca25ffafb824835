use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_w1::blocking::{assign_blocks, median_value, BlockScheme};
use robust_w1::estimators::{mom_estimate, mom_on_blocks, mou_estimate, MouScheme};
use robust_w1::{recommended_k, Sample};

fn sample(seed: u64, n: usize, d: usize) -> Sample<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Sample::clean((0..n * d).map(|_| r.gen_range(-3.0..3.0)).collect(), d).unwrap()
}

#[test]
fn median_examples() {
    assert_eq!(median_value(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
    // even count: the lower middle value
    assert_eq!(median_value(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.0);
    assert!(median_value::<f64>(&[]).is_err());
}

#[test]
fn block_count_examples() {
    assert_eq!(recommended_k(500, 0.1).unwrap(), 224);
    assert!(recommended_k(500, 1.5).is_err());
}

#[test]
fn too_many_blocks_is_an_error() {
    let x = sample(1, 5, 1);
    assert!(mom_estimate(&x, |p: &[f64]| p[0], 6, 0).is_err());
}

#[test]
fn mom_resists_a_minority_of_huge_values() {
    let mut values: Vec<f64> = (0..100).map(|i| (i % 7) as f64 * 0.01).collect();
    for v in values.iter_mut().take(4) {
        *v = 1e12;
    }
    let blocks = assign_blocks(100, BlockScheme::Partition { k: 10 }, 3).unwrap();
    let est = mom_on_blocks(&values, &blocks).unwrap().value;
    assert!(est.abs() < 1.0, "{est}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mom_lies_between_extreme_values(seed in any::<u64>(), n in 1usize..200, k in 1usize..20) {
        prop_assume!(k <= n);
        let x = sample(seed, n, 1);
        let v = mom_estimate(&x, |p: &[f64]| p[0], k, seed).unwrap().value;
        let lo = x.coords().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.coords().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }

    #[test]
    fn mom_is_translation_equivariant(seed in any::<u64>(), n in 2usize..150, k in 1usize..15, c in -100.0f64..100.0) {
        prop_assume!(k <= n);
        let x = sample(seed, n, 1);
        let a = mom_estimate(&x, |p: &[f64]| p[0], k, seed).unwrap().value;
        let b = mom_estimate(&x, |p: &[f64]| p[0] + c, k, seed).unwrap().value;
        prop_assert!((b - a - c).abs() < 1e-9);
    }

    #[test]
    fn mom_is_deterministic_in_its_seed(seed in any::<u64>(), n in 2usize..100, k in 1usize..10) {
        prop_assume!(k <= n);
        let x = sample(seed, n, 2);
        let f = |p: &[f64]| p[0] * p[1];
        prop_assert_eq!(mom_estimate(&x, f, k, seed).unwrap().value, mom_estimate(&x, f, k, seed).unwrap().value);
    }

    #[test]
    fn mou_schemes_agree_on_constant_kernels(seed in any::<u64>(), n in 4usize..60, k in 1usize..4, c in -5.0f64..5.0) {
        let x = sample(seed, n, 2);
        let y = sample(seed ^ 1, n, 2);
        for scheme in [MouScheme::Grid, MouScheme::Diagonal, MouScheme::RandomizedPairs] {
            let v = mou_estimate(&x, &y, |_: &[f64], _: &[f64]| c, k, k, scheme, seed).unwrap().value;
            prop_assert!((v - c).abs() < 1e-12);
        }
    }

    #[test]
    fn median_is_within_sup_distance(a in prop::collection::vec(-1e6f64..1e6, 1..40), noise in prop::collection::vec(-1.0f64..1.0, 40)) {
        let b: Vec<f64> = a.iter().zip(&noise).map(|(x, e)| x + e).collect();
        let sup = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!((median_value(&a).unwrap() - median_value(&b).unwrap()).abs() <= sup);
    }
}
