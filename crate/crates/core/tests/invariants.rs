use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sinkpit::assignment::reconstruct;
use sinkpit::gradient::sinkpit_value_and_grad;
use sinkpit::probpit::ln_factorial;
use sinkpit::signal::{pairwise_cost_matrix, si_sdr, Waveform};
use sinkpit::{
    birkhoff_decompose, brute_force_pit, entropy, frobenius_inner, hungarian, permutation_to_matrix, probpit_loss,
    sinkhorn_iterate, sinkpit_loss, CostMatrix, Permutation, PermutationPrior, SinkhornConfig, SquareMatrix,
};

fn square(max_n: usize, scale: f64) -> impl Strategy<Value = SquareMatrix> {
    (1..=max_n).prop_flat_map(move |n| {
        prop::collection::vec(-scale..scale, n * n).prop_map(move |d| SquareMatrix::from_row_major(n, d).unwrap())
    })
}

fn costs(max_n: usize, scale: f64) -> impl Strategy<Value = CostMatrix> {
    square(max_n, scale).prop_map(|m| CostMatrix::new(m).unwrap())
}

fn with_permutation(max_n: usize, scale: f64) -> impl Strategy<Value = (CostMatrix, Permutation)> {
    costs(max_n, scale).prop_flat_map(|c| {
        let n = c.n();
        (Just(c), Just((0..n).collect::<Vec<_>>()).prop_shuffle()).prop_map(|(c, p)| (c, Permutation::new(p).unwrap()))
    })
}

fn converged(beta: f64) -> SinkhornConfig {
    SinkhornConfig::new(beta, 500).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frobenius_is_bilinear(
        (x, y, z) in (1..=6usize).prop_flat_map(|n| {
            let m = move || prop::collection::vec(-10.0..10.0, n * n)
                .prop_map(move |d| SquareMatrix::from_row_major(n, d).unwrap());
            (m(), m(), m())
        }),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let n = x.n();
        let combo = SquareMatrix::from_fn(n, |i, j| a * x[(i, j)] + b * y[(i, j)]);
        let lhs = frobenius_inner(&combo, &z).unwrap();
        let rhs = a * frobenius_inner(&x, &z).unwrap() + b * frobenius_inner(&y, &z).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        prop_assert_eq!(frobenius_inner(&x, &z).unwrap(), frobenius_inner(&z, &x).unwrap());
    }

    #[test]
    fn plan_entropy_is_bounded(c in costs(7, 1.0), beta in 0.1..3.0f64) {
        let n = c.n() as f64;
        let plan = sinkhorn_iterate(&c, &converged(beta)).unwrap().plan();
        let h = plan.entropy();
        prop_assert!(h >= -1e-12 && h <= n * n.ln() + 1e-9, "h = {}", h);
    }

    #[test]
    fn permutation_matrices_have_zero_entropy((_c, p) in with_permutation(7, 1.0)) {
        let m = permutation_to_matrix(&p);
        prop_assert_eq!(entropy(m.matrix()).unwrap(), 0.0);
        prop_assert_eq!(m.marginal_deviation(), 0.0);
    }

    #[test]
    fn hungarian_matches_brute_force(c in costs(7, 10.0)) {
        let exact = brute_force_pit(&c).unwrap();
        let fast = hungarian(&c);
        prop_assert!((exact.total_cost - fast.total_cost).abs() <= 1e-9);
        prop_assert!((c.assignment_cost(&fast.permutation) - fast.total_cost).abs() <= 1e-9);
    }

    #[test]
    fn relaxation_is_bounded_below_by_pit(c in costs(6, 1.0), beta in 0.1..3.0f64) {
        let plan = sinkhorn_iterate(&c, &converged(beta)).unwrap().plan();
        let relaxed = frobenius_inner(c.matrix(), plan.matrix()).unwrap();
        prop_assert!(relaxed >= brute_force_pit(&c).unwrap().total_cost - 1e-9);
    }

    #[test]
    fn argmin_survives_row_and_column_shifts(
        c in costs(6, 10.0),
        shifts in prop::collection::vec(-5.0..5.0f64, 12),
    ) {
        let n = c.n();
        let (xi, eta) = (&shifts[..n], &shifts[6..6 + n]);
        let shifted = c.shifted(xi, eta).unwrap();
        let base = brute_force_pit(&c).unwrap();
        let moved = brute_force_pit(&shifted).unwrap();
        let offset: f64 = xi.iter().chain(eta).sum();
        prop_assert!((moved.total_cost - base.total_cost - offset).abs() <= 1e-9);
        prop_assert!((c.assignment_cost(&moved.permutation) - base.total_cost).abs() <= 1e-9);
    }

    #[test]
    fn probpit_is_sandwiched(c in costs(6, 10.0), gamma in 1e-3..10.0f64) {
        let n = c.n();
        let pit = brute_force_pit(&c).unwrap().total_cost + ln_factorial(n);
        let soft = probpit_loss(&c, gamma, &PermutationPrior::Flat).unwrap();
        prop_assert!(soft <= pit + 1e-9);
        prop_assert!(soft >= pit - gamma * ln_factorial(n) - 1e-9);
    }

    #[test]
    fn probpit_ignores_enumeration_order((c, p) in with_permutation(6, 10.0), gamma in 0.01..5.0f64) {
        let n = c.n();
        let rows = SquareMatrix::from_fn(n, |i, j| c.matrix()[(p.apply(i), j)]);
        let a = probpit_loss(&c, gamma, &PermutationPrior::Flat).unwrap();
        let b = probpit_loss(&CostMatrix::new(rows).unwrap(), gamma, &PermutationPrior::Flat).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn permuting_estimates_permutes_cost_columns(
        seed_samples in prop::collection::vec(-1.0..1.0f64, 4 * 32),
        order in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let wave = |k: usize| Waveform::new(seed_samples[k * 32..(k + 1) * 32].to_vec(), 8000).unwrap();
        let sources = vec![wave(0), wave(1), wave(2), wave(3)];
        let estimates = vec![wave(3), wave(1), wave(0), wave(2)];
        let shuffled: Vec<Waveform> = order.iter().map(|&k| estimates[k].clone()).collect();
        let base = pairwise_cost_matrix(&sources, &estimates).unwrap();
        let moved = pairwise_cost_matrix(&sources, &shuffled).unwrap();
        for i in 0..4 {
            for (j, &k) in order.iter().enumerate() {
                prop_assert_eq!(moved.matrix()[(i, j)], base.matrix()[(i, k)]);
            }
        }
    }

    #[test]
    fn si_sdr_ignores_circular_shift(
        samples in prop::collection::vec(-1.0..1.0f64, 2 * 48),
        shift in 0..48usize,
    ) {
        let (u, v) = samples.split_at(48);
        let rot = |x: &[f64]| {
            let mut y = x.to_vec();
            y.rotate_right(shift);
            Waveform::new(y, 8000).unwrap()
        };
        let base = si_sdr(&Waveform::new(u.to_vec(), 8000).unwrap(), &Waveform::new(v.to_vec(), 8000).unwrap()).unwrap();
        prop_assert!((si_sdr(&rot(u), &rot(v)).unwrap() - base).abs() <= 1e-9);
    }

    #[test]
    fn loss_tightens_monotonically_in_beta(c in costs(6, 1.0), b1 in 0.1..3.0f64, ratio in 1.0..4.0f64) {
        let b2 = b1 * ratio;
        let n = c.n() as f64;
        let pit = hungarian(&c).mean_cost;
        let balanced = |b: f64| sinkhorn_iterate(&c, &converged(b)).unwrap().plan().marginal_deviation() < 1e-10;
        prop_assume!(balanced(b1) && balanced(b2));
        let l1 = sinkpit_loss(&c, &converged(b1)).unwrap();
        let l2 = sinkpit_loss(&c, &converged(b2)).unwrap();
        prop_assert!(l1 <= l2 + 1e-9);
        prop_assert!(l2 <= pit + 1e-9);
        prop_assert!(l1 >= pit - n.ln() / b1 - 1e-9);
    }

    #[test]
    fn gradient_sums_to_one(c in costs(6, 10.0), beta in 0.1..10.0f64, k in 1..100usize) {
        let g = sinkpit_value_and_grad(&c, &SinkhornConfig::new(beta, k).unwrap()).unwrap().grad;
        prop_assert!((g.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn permutation_matrix_is_its_own_decomposition((_c, p) in with_permutation(7, 1.0)) {
        let plan = permutation_to_matrix(&p);
        let terms = birkhoff_decompose(&plan, 1e-12).unwrap();
        prop_assert_eq!(terms.len(), 1);
        prop_assert_eq!(&terms[0].permutation, &p);
        prop_assert_eq!(reconstruct(p.len(), &terms), plan.matrix().clone());
    }

    #[test]
    fn inverse_undoes_permutation((_c, p) in with_permutation(8, 1.0)) {
        let inv = p.inverse();
        for i in 0..p.len() {
            prop_assert_eq!(inv.apply(p.apply(i)), i);
        }
    }

    #[test]
    fn csv_round_trip_is_exact(m in square(6, 1e6)) {
        prop_assert_eq!(SquareMatrix::from_csv(&m.to_csv()).unwrap(), m);
    }
}

#[test]
fn single_source_is_degenerate() {
    let c = CostMatrix::from_rows(&[vec![-7.5]]).unwrap();
    let cfg = SinkhornConfig::new(3.0, 10).unwrap();
    assert_eq!(sinkhorn_iterate(&c, &cfg).unwrap().plan().matrix()[(0, 0)], 1.0);
    assert_eq!(sinkpit_loss(&c, &cfg).unwrap(), -7.5);
    assert_eq!(sinkpit_value_and_grad(&c, &cfg).unwrap().grad.as_slice(), &[1.0]);
    assert_eq!(hungarian(&c).permutation, Permutation::identity(1));
    assert_eq!(probpit_loss(&c, 0.5, &PermutationPrior::Flat).unwrap(), -7.5);
}

#[test]
fn loss_on_beta_grid_never_decreases() {
    // The entropy penalty -H/beta is non-positive and shrinks as beta grows.
    let mut rng = ChaCha8Rng::seed_from_u64(183);
    for _ in 0..100 {
        let c = CostMatrix::random_gaussian(5, 1.0, &mut rng);
        let pit = hungarian(&c).mean_cost;
        let mut prev = f64::NEG_INFINITY;
        for beta in [1.0, 2.0, 5.0, 10.0, 50.0] {
            let cfg = SinkhornConfig::new(beta, 5000).unwrap();
            let loss = sinkpit_loss(&c, &cfg).unwrap();
            assert!(loss >= prev - 1e-9, "beta {beta}: {loss} < {prev}");
            if sinkhorn_iterate(&c, &cfg).unwrap().plan().marginal_deviation() < 1e-9 {
                assert!(loss <= pit + 1e-9);
            }
            prev = loss;
        }
    }
}

#[test]
fn random_birkhoff_points_never_beat_pit() {
    let mut rng = ChaCha8Rng::seed_from_u64(249);
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let c = CostMatrix::random_gaussian(n, 10.0, &mut rng);
        let best = brute_force_pit(&c).unwrap().mean_cost;
        for _ in 0..100 {
            let weights: Vec<f64> = (0..n + 2).map(|_| rng.random::<f64>()).collect();
            let total: f64 = weights.iter().sum();
            let mut b = SquareMatrix::zeros(n);
            for w in &weights {
                let p = Permutation::random(n, &mut rng);
                for i in 0..n {
                    b[(i, p.apply(i))] += w / total;
                }
            }
            assert!(best <= frobenius_inner(c.matrix(), &b).unwrap() / n as f64 + 1e-12);
        }
    }
}

#[test]
fn probpit_approaches_pit_as_gamma_shrinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..50 {
        let n = rng.random_range(2..=6);
        let c = CostMatrix::random_gaussian(n, 1.0, &mut rng);
        let target = brute_force_pit(&c).unwrap().total_cost + ln_factorial(n);
        let mut prev_gap = f64::INFINITY;
        for gamma in [1.0, 0.1, 0.01, 0.001] {
            let gap = target - probpit_loss(&c, gamma, &PermutationPrior::Flat).unwrap();
            assert!(
                gap >= -1e-12 && gap <= prev_gap + 1e-12,
                "gamma {gamma}: {gap} after {prev_gap}"
            );
            prev_gap = gap;
        }
        assert!(prev_gap < 10.0 * 0.001 * ln_factorial(n).max(f64::MIN_POSITIVE));
    }
}
