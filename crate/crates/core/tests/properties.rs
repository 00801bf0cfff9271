//! Property and Monte-Carlo checks on kernels, the DSL and the exact GP.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cpgp::cli::dsl::parse_kernel_spec;
use cpgp::gp::{default_noise, nlml, sample_prior, GpState, NlmlObjective};
use cpgp::kernels::{eval_diag, eval_gram, eval_kernel, ColumnBinding, FeatureTransform, KernelBuilder, KernelExpr};
use cpgp::optim::fd_check;
use cpgp::{Dataset, Inputs};

fn line(v: Vec<f64>) -> Inputs {
    Inputs::from_column("x", v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composite_grams_are_symmetric_with_matching_diagonal(
        xs in prop::collection::vec(-10.0f64..10.0, 2..30),
        var in 0.1f64..5.0,
        ls in 0.1f64..5.0,
        a in 0.05f64..20.0,
        x0 in -5.0f64..5.0,
    ) {
        let mut b = KernelBuilder::new();
        let z = ColumnBinding::new("x");
        let left = KernelExpr::product(vec![b.switch(z.clone(), "A", a, x0, true).unwrap(), b.se(vec![z.clone()], var, &[ls]).unwrap()]).unwrap();
        let right = KernelExpr::product(vec![b.switch(z.clone(), "A", a, x0, false).unwrap(), b.poly2(vec![z], var, 1.0).unwrap()]).unwrap();
        let expr = KernelExpr::sum(vec![left, right]).unwrap();
        let params = b.finish();
        let x = line(xs);
        let k = eval_gram(&expr, &params, &x).unwrap().matrix;
        let d = eval_diag(&expr, &params, &x).unwrap();
        for i in 0..x.nrows() {
            prop_assert!((k[(i, i)] - d[i]).abs() <= 1e-12 * d[i].abs().max(1.0));
            for j in 0..i {
                prop_assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
        // the cross-covariance of x with itself is the Gram matrix
        let c = eval_kernel(&expr, &params, &x, &x).unwrap().matrix;
        for i in 0..x.nrows() {
            for j in 0..x.nrows() {
                prop_assert!((c[(i, j)] - k[(i, j)]).abs() <= 1e-12 * k[(i, j)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn switch_pair_partitions_unity(z in -1e3f64..1e3, a in 0.01f64..100.0, x0 in -1e3f64..1e3) {
        let b = ColumnBinding::with_transform("z", FeatureTransform::Identity);
        let s = cpgp::kernels::switch_value(&b, a, x0, false, z) + cpgp::kernels::switch_value(&b, a, x0, true, z);
        prop_assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn nlml_is_invariant_to_row_order(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 12;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut b = KernelBuilder::new();
        let expr = b.se(vec![ColumnBinding::new("x")], 1.3, &[0.7]).unwrap();
        let params = b.finish();
        let f1 = nlml(&expr, &params, 0.1, &line(xs.clone()), &ys).unwrap();
        let f2 = nlml(&expr, &params, 0.1, &line(xs.into_iter().rev().collect()), &ys.into_iter().rev().collect::<Vec<_>>()).unwrap();
        prop_assert!((f1 - f2).abs() <= 1e-9 * f1.abs().max(1.0));
    }
}

/// Random kernel spec over columns a, b, c with at most `depth` nesting.
fn random_spec(rng: &mut ChaCha8Rng, depth: usize) -> String {
    let col = |rng: &mut ChaCha8Rng| {
        let c = ["a", "b", "c"][rng.random_range(0..3)];
        match rng.random_range(0..4) {
            0 => format!("cos2({c})"),
            1 => format!("neg({c})"),
            _ => c.to_string(),
        }
    };
    let leaf = |rng: &mut ChaCha8Rng| match rng.random_range(0..5) {
        0 => format!("se({})", (0..rng.random_range(1..3)).map(|_| col(rng)).collect::<Vec<_>>().join(", ")),
        1 => format!("poly2({})", col(rng)),
        2 => "sdof(a)".to_string(),
        3 => format!("sw(b, {})", ["S", "T"][rng.random_range(0..2)]),
        _ => format!("swneg(b, {})", ["S", "T"][rng.random_range(0..2)]),
    };
    if depth == 0 || rng.random_range(0..3) == 0 {
        return leaf(rng);
    }
    let k = rng.random_range(2..4);
    let parts: Vec<String> = (0..k).map(|_| random_spec(rng, depth - 1)).collect();
    if rng.random::<bool>() {
        parts.join(" + ")
    } else {
        parts.iter().map(|p| format!("({p})")).collect::<Vec<_>>().join("*")
    }
}

#[test]
fn printed_specs_parse_to_identical_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let cols: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    for _ in 0..50 {
        let text = random_spec(&mut rng, 3);
        let tree = parse_kernel_spec(&text, Some(&cols)).unwrap_or_else(|e| panic!("{text}: {e}"));
        let printed = tree.to_string();
        let again = parse_kernel_spec(&printed, Some(&cols)).unwrap();
        assert_eq!(tree, again, "{text} -> {printed}");
        assert_eq!(printed, again.to_string());
    }
}

#[test]
fn prior_draw_covariance_matches_the_kernel() {
    let mut b = KernelBuilder::new();
    let z = ColumnBinding::new("x");
    let sw = b.switch(z.clone(), "A", 2.0, 4.0, false).unwrap();
    let se_r = b.se(vec![z.clone()], 1.0, &[2.0]).unwrap();
    let swn = b.switch(z.clone(), "A", 2.0, 4.0, true).unwrap();
    let se_l = b.se(vec![z], 1.0, &[0.3]).unwrap();
    let expr = KernelExpr::sum(vec![KernelExpr::product(vec![swn, se_l]).unwrap(), KernelExpr::product(vec![sw, se_r]).unwrap()]).unwrap();
    let params = b.finish();
    let x = line((0..25).map(|i| i as f64 * 8.0 / 24.0).collect());
    let draws = sample_prior(&expr, &params, &x, 10_000, 3).unwrap();
    let k = eval_gram(&expr, &params, &x).unwrap().matrix;
    let n = x.nrows();
    let (mut err, mut norm) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let emp = draws.iter().map(|d| d[i] * d[j]).sum::<f64>() / draws.len() as f64;
            err += (emp - k[(i, j)]).powi(2);
            norm += k[(i, j)].powi(2);
        }
    }
    let rel = (err / norm).sqrt();
    assert!(rel <= 0.05, "relative Frobenius error {rel}");
    assert_eq!(draws, sample_prior(&expr, &params, &x, 10_000, 3).unwrap());
}

#[test]
fn sdof_and_switch_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 50;
    let t: Vec<f64> = (0..n).map(|i| i as f64 / 40.0).collect();
    let r: Vec<f64> = (0..n).map(|i| 30.0 * (i as f64 / n as f64)).collect();
    let x = Inputs::new(vec!["t".into(), "r".into()], vec![t, r]).unwrap();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let data = Dataset::new(x, y).unwrap();
    let mut b = KernelBuilder::new();
    let sw = b.switch(ColumnBinding::new("r"), "R", 0.5, 15.0, false).unwrap();
    let s1 = b.sdof(ColumnBinding::new("t"), 3e4, 1.0, 0.1, 40.0).unwrap();
    let s2 = b.sdof(ColumnBinding::new("t"), 1e5, 1.0, 0.05, 120.0).unwrap();
    let expr = KernelExpr::product(vec![sw, KernelExpr::sum(vec![s1, s2]).unwrap()]).unwrap();
    let obj = NlmlObjective::new(&expr, &b.finish(), &default_noise(0.2).unwrap(), &data).unwrap();
    let rep = fd_check(&obj, &obj.joint.free_values(), 1e-5).unwrap();
    assert!(rep.max_rel_error < 1e-5, "{rep:?}");
}

#[test]
fn posterior_variance_never_exceeds_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut b = KernelBuilder::new();
    let expr = b.se(vec![ColumnBinding::new("x")], 2.0, &[0.8]).unwrap();
    let params = b.finish();
    let xs: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..10.0)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
    let state = GpState::new(expr.clone(), params.clone(), default_noise(0.05).unwrap(), Dataset::new(line(xs), ys).unwrap()).unwrap();
    let grid = line((0..200).map(|i| -5.0 + i as f64 * 0.1).collect());
    let post = state.predict(&grid).unwrap();
    let prior = eval_diag(&expr, &params, &grid).unwrap();
    for i in 0..200 {
        assert!(post.var_latent[i] >= 0.0 && post.var_latent[i] <= prior[i] + 1e-12);
        assert!((post.var_noisy[i] - post.var_latent[i] - 0.05).abs() < 1e-12);
    }
}
