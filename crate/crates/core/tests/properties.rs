//! Property tests for the library-wide invariants.

use ookdim::baseline::{search_codebook, MlDecoder, SearchConfig};
use ookdim::binarizer::{deterministic_binarize, mean_activation, probabilities, solve_offset, stochastic_binarize};
use ookdim::codebook::{Codebook, Provenance};
use ookdim::evaluator::{wilson_interval, EvalRow};
use ookdim::nn::{relu, softmax_rows, AdamState, Matrix};
use ookdim::optics::{make_isi_channel, propagate, DelayMode, LedModel};
use ookdim::trainer::{dimming_constraint, lagrangian, penalized_cost, DualState};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize, values: &[f64]) -> Matrix {
    Matrix::from_shape_vec((rows, cols), values.to_vec()).unwrap()
}

fn codebook_strategy() -> impl Strategy<Value = Codebook> {
    (2usize..=8, 2usize..=10).prop_flat_map(|(n, m)| {
        prop::collection::vec(prop::collection::vec(0u8..=1, n), m)
            .prop_map(move |words| Codebook::new(n, 1.0, words, Provenance::Searched).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(
        (rows, cols, values) in (1usize..6, 2usize..8).prop_flat_map(|(r, c)| {
            (Just(r), Just(c), prop::collection::vec(-700.0f64..700.0, r * c))
        })
    ) {
        let p = softmax_rows(&matrix(rows, cols, &values));
        for row in p.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&v| v >= 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn softmax_is_strictly_positive_for_moderate_logits(values in prop::collection::vec(-30.0f64..30.0, 8)) {
        let p = softmax_rows(&matrix(2, 4, &values));
        prop_assert!(p.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn relu_is_idempotent(x in -1e6f64..1e6) {
        prop_assert_eq!(relu(relu(x)), relu(x));
    }

    #[test]
    fn adam_with_zero_gradient_is_a_fixed_point(
        params in prop::collection::vec(-10.0f64..10.0, 1..20),
        steps in 1usize..5,
        lr in 1e-5f64..1.0,
    ) {
        let mut p = params.clone();
        let mut adam = AdamState::new(&[p.len()]);
        let zeros = vec![0.0; p.len()];
        for _ in 0..steps {
            adam.step(&mut [p.as_mut_slice()], &[zeros.as_slice()], lr, false).unwrap();
        }
        prop_assert_eq!(p, params);
    }

    #[test]
    fn binarizer_output_alphabet_is_binary(
        u in prop::collection::vec(-1e3f64..1e3, 1..16),
        offset in -5.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (bits, h) = stochastic_binarize(&u, offset, &mut rng);
        prop_assert!(bits.iter().all(|&b| b == 0 || b == 1));
        prop_assert!(h.iter().all(|&p| (0.0..=1.0).contains(&p)));
        let det = deterministic_binarize(&u, offset);
        for (b, &x) in det.iter().zip(&u) {
            prop_assert_eq!(*b == 1, x >= offset);
        }
    }

    #[test]
    fn offsets_are_strictly_monotone(n in 2usize..16, bound in 0.5f64..8.0) {
        let mut prev = f64::INFINITY;
        for k in 1..(2 * n) {
            let d = 0.5 * k as f64;
            let delta = solve_offset(d, n, bound).unwrap();
            prop_assert!((mean_activation(delta, bound) - d / n as f64).abs() <= 1e-9);
            prop_assert!(delta < prev);
            prev = delta;
        }
    }

    /// The trainer's constraint estimate is the expected codeword weight
    /// under stochastic binarization.
    #[test]
    fn constraint_is_expected_weight(
        (m, n, values) in (2usize..8, 2usize..10).prop_flat_map(|(m, n)| {
            (Just(m), Just(n), prop::collection::vec(-6.0f64..6.0, m * n))
        }),
        offset in -2.0f64..2.0,
    ) {
        let u = matrix(m, n, &values);
        let expected: f64 = u
            .rows()
            .into_iter()
            .map(|row| probabilities(row.as_slice().unwrap(), offset).iter().sum::<f64>())
            .sum::<f64>()
            / m as f64;
        prop_assert_eq!(dimming_constraint(&u, offset, &LedModel::Linear), expected);
    }

    /// dL/dlambda_d equals the residual F_d - d.
    #[test]
    fn multiplier_gradient_is_the_residual(
        values in prop::collection::vec(-4.0f64..4.0, 3 * 6),
        lambdas in prop::collection::vec(-1.0f64..1.0, 2),
        rho in 0.0f64..1.0,
        cost in 0.0f64..3.0,
    ) {
        let targets = [2.0, 3.0];
        let offsets = [0.4, -0.1];
        let residuals: Vec<f64> = (0..2)
            .map(|t| {
                let u = matrix(3, 6, &values).mapv(|x| x + t as f64 * 0.3);
                dimming_constraint(&u, offsets[t], &LedModel::Linear) - targets[t]
            })
            .collect();
        let mut duals = DualState::new(&targets, rho);
        duals.lambdas = lambdas;
        let base = lagrangian(cost, &residuals, &duals);
        for t in 0..2 {
            let h = 1e-3;
            let mut bumped = duals.clone();
            bumped.lambdas[t] += h;
            let slope = (lagrangian(cost, &residuals, &bumped) - base) / h;
            prop_assert!((slope - residuals[t]).abs() <= 1e-9 * (1.0 + residuals[t].abs()) + 1e-10);
        }
    }

    #[test]
    fn feasible_lagrangian_is_the_cost(
        cost in 0.0f64..10.0,
        lambdas in prop::collection::vec(-1e3f64..1e3, 1..6),
        rho in 0.0f64..10.0,
        mu in 0.0f64..10.0,
    ) {
        let targets: Vec<f64> = (0..lambdas.len()).map(|i| 1.0 + i as f64).collect();
        let mut duals = DualState::new(&targets, rho);
        duals.lambdas = lambdas.clone();
        let zeros = vec![0.0; lambdas.len()];
        prop_assert_eq!(lagrangian(cost, &zeros, &duals), cost);
        prop_assert_eq!(penalized_cost(cost, &zeros, mu), cost);
    }

    #[test]
    fn channel_application_is_linear(
        position in 0.0f64..=3.0,
        a in prop::collection::vec(-2.0f64..2.0, 8),
        b in prop::collection::vec(-2.0f64..2.0, 8),
        alpha in -3.0f64..3.0,
    ) {
        let (h, _) = make_isi_channel(position, 8, DelayMode::Literal).unwrap();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
        let lhs = propagate(&mix, &h, &LedModel::Linear);
        let pa = propagate(&a, &h, &LedModel::Linear);
        let pb = propagate(&b, &h, &LedModel::Linear);
        for i in 0..8 {
            prop_assert!((lhs[i] - (alpha * pa[i] + pb[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn isi_matrix_is_toeplitz(position in 0.0f64..=3.0, n in 2usize..12, fractional in any::<bool>()) {
        let mode = if fractional { DelayMode::Fractional } else { DelayMode::Literal };
        let (h, _) = make_isi_channel(position, n, mode).unwrap();
        for i in 1..n {
            for j in 1..n {
                prop_assert_eq!(h[[i, j]], h[[i - 1, j - 1]]);
            }
        }
        for i in 0..n {
            for j in 0..n {
                if j > i || i > j + 1 {
                    prop_assert_eq!(h[[i, j]], 0.0);
                }
            }
        }
    }

    #[test]
    fn flipping_preserves_minimum_distance(cb in codebook_strategy()) {
        prop_assert_eq!(cb.flip_complement().audit().min_hamming_distance, cb.audit().min_hamming_distance);
    }

    #[test]
    fn ml_decoding_commutes_with_index_permutation(
        cb in codebook_strategy(),
        noise in prop::collection::vec(-1.0f64..1.0, 8),
        message in 0usize..10,
        rotate in 1usize..10,
    ) {
        let n = cb.n;
        let m = cb.m();
        let b = message % m;
        let h = Matrix::eye(n);
        let mut r = propagate(&cb.codewords[b].to_f64(), &h, &LedModel::Linear);
        for (x, z) in r.iter_mut().zip(&noise) {
            *x += z;
        }
        let k = rotate % m;
        let words: Vec<Vec<u8>> = (0..m).map(|i| cb.codewords[(i + k) % m].bits().to_vec()).collect();
        let rotated = Codebook::new(n, cb.dimming, words, Provenance::Searched).unwrap();
        let original = MlDecoder::new(&cb, &h, &LedModel::Linear).unwrap().decode(&r);
        let permuted = MlDecoder::new(&rotated, &h, &LedModel::Linear).unwrap().decode(&r);
        // equal images break ties by index, so compare the decoded words
        prop_assert_eq!(&rotated.codewords[permuted], &cb.codewords[original]);
    }

    #[test]
    fn search_respects_its_constraint(
        n in 4usize..9,
        m in 2usize..7,
        weight in 1usize..4,
        half in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let choose = (0..weight).fold(1usize, |acc, i| acc * (n - i) / (i + 1));
        prop_assume!(choose >= m);
        let strict = SearchConfig {
            max_iterations: 2_000,
            seed,
            ..SearchConfig::new(n, m, weight as f64, "strict")
        };
        let r = search_codebook(&strict).unwrap();
        prop_assert!(r.codebook.codewords.iter().all(|c| c.weight() == weight));

        let d = weight as f64 + if half { 0.5 } else { 0.0 };
        let relaxed = SearchConfig { kind: "relaxed".into(), d, ..strict.clone() };
        let r = search_codebook(&relaxed).unwrap();
        prop_assert!((r.codebook.average_weight() - d).abs() <= 0.5 / m as f64 + 1e-12);
    }

    #[test]
    fn wilson_interval_contains_the_estimate(trials in 1u64..1_000_000, frac in 0.0f64..=1.0) {
        let errors = (frac * trials as f64).floor() as u64;
        let row = EvalRow::new("x", 1.0, 0.0, trials, errors);
        let (lo, hi) = wilson_interval(errors, trials);
        prop_assert!((0.0..=1.0).contains(&row.ser));
        prop_assert!(lo <= row.ser && row.ser <= hi);
    }
}
