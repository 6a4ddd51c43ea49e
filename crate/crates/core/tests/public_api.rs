use latent_hazard_core::dataset::{encode, policy_rows, Policy, Role, Schema, VariableSpec};
use latent_hazard_core::factor::max_factors;
use latent_hazard_core::imputation::pool_rubin;
use latent_hazard_core::synthetic::{gen_pipeline_data, FixtureConfig};
use latent_hazard_core::{fit_ols, Dataset, DesignMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn schema() -> Schema {
    Schema::new(vec![
        VariableSpec::categorical(
            "employer_arr_qual",
            Role::PolicyKey,
            &["Fully on-site", "Hybrid", "Fully remote"],
            "Fully on-site",
        ),
        VariableSpec::continuous("x", Role::WfhRelated),
        VariableSpec::categorical("gender", Role::Demographic, &["Female", "Male"], "Female"),
        VariableSpec::continuous("age_quant", Role::Demographic),
    ])
    .unwrap()
}

fn cell() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![1 => Just(None), 4 => (-1e6f64..1e6).prop_map(Some)]
}

prop_compose! {
    fn rows()(raw in prop::collection::vec((prop::option::weighted(0.9, 0usize..3), cell(), prop::option::weighted(0.8, 0usize..2), cell()), 1..40))
        -> Vec<Vec<String>> {
        let policy = ["Fully on-site", "Hybrid", "Fully remote"];
        let gender = ["Female", "Male"];
        raw.into_iter()
            .map(|(p, x, g, a)| {
                let num = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v}"));
                vec![
                    p.map_or("NA".to_string(), |i| policy[i].to_string()),
                    num(x),
                    g.map_or("NA".to_string(), |i| gender[i].to_string()),
                    num(a),
                ]
            })
            .collect()
    }
}

fn header() -> Vec<String> {
    ["employer_arr_qual", "x", "gender", "age_quant"]
        .map(String::from)
        .to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn text_round_trip_is_bit_exact(rows in rows()) {
        let d = Dataset::from_text(schema(), &header(), &rows, &["NA"], None).unwrap();
        let (h, r) = d.to_text("NA");
        let back = Dataset::from_text(schema(), &h, &r, &["NA"], None).unwrap();
        prop_assert_eq!(back.mask(), d.mask());
        prop_assert_eq!(back.columns(), d.columns());
    }

    #[test]
    fn policy_subsamples_partition_observed_keys(rows in rows()) {
        let d = Dataset::from_text(schema(), &header(), &rows, &["NA"], None).unwrap();
        let total: usize = [Policy::OnSite, Policy::Hybrid, Policy::FullyRemote]
            .iter()
            .map(|&p| policy_rows(&d, p).unwrap().len())
            .sum();
        prop_assert_eq!(total, d.n_rows() - d.missing_count(0));
        prop_assert_eq!(policy_rows(&d, Policy::All).unwrap().len(), d.n_rows());
    }

    #[test]
    fn ols_residuals_are_orthogonal_to_the_design(
        seed in 0u64..1000,
        n in 12usize..60,
        k in 1usize..5,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, k + 1, |_, c| if c == 0 { 1.0 } else { rng.random_range(-5.0..5.0) });
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let names = (0..=k).map(|c| if c == 0 { "Intercept".into() } else { format!("x{c}") }).collect();
        let fit = fit_ols(&DesignMatrix::new(names, x.clone(), true).unwrap(), &y).unwrap();
        prop_assert_eq!(fit.df_residual, n - k - 1);
        let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for c in 0..=k {
            let dot: f64 = (0..n).map(|i| x[(i, c)] * fit.residuals[i]).sum();
            let norm = x.column(c).norm() * scale * (n as f64).sqrt();
            prop_assert!(dot.abs() <= 1e-8 * norm, "column {c}: {dot}");
        }
    }

    #[test]
    fn rubin_total_variance_decomposes(
        est in prop::collection::vec((-10.0f64..10.0, 0.01f64..4.0), 2..30),
    ) {
        let p = pool_rubin(&est).unwrap();
        let m = est.len() as f64;
        let mean = est.iter().map(|e| e.0).sum::<f64>() / m;
        let w = est.iter().map(|e| e.1).sum::<f64>() / m;
        let b = est.iter().map(|e| (e.0 - mean).powi(2)).sum::<f64>() / (m - 1.0);
        prop_assert!((p.estimate - mean).abs() < 1e-12);
        prop_assert!((p.within_var - w).abs() < 1e-12);
        prop_assert!((p.between_var - b).abs() < 1e-10);
        prop_assert!((p.total_var - (w + (1.0 + 1.0 / m) * b)).abs() < 1e-10);
    }

    #[test]
    fn max_factors_is_the_largest_identified_count(q in 1usize..60) {
        let ok = |p: usize| {
            let (q, p) = (q as i64, p as i64);
            (q - p) * (q - p) - p - q >= 0
        };
        let p = max_factors(q);
        prop_assert!(ok(p));
        prop_assert!(!ok(p + 1) || p + 1 > q);
    }
}

#[test]
fn encode_is_deterministic_and_names_follow_the_convention() {
    let (d, _) = gen_pipeline_data(&FixtureConfig {
        missing_rate: 0.0,
        ..FixtureConfig::new(300, 11)
    })
    .unwrap();
    let a = encode(&d).unwrap();
    let b = encode(&d).unwrap();
    assert_eq!(a, b);
    let codes: Vec<&str> = d
        .schema()
        .variables()
        .iter()
        .map(|v| v.code.as_str())
        .collect();
    for name in a.names() {
        let ok = name == "Intercept"
            || name == "Age2"
            || codes.contains(&name.as_str())
            || d.schema()
                .variables()
                .iter()
                .filter(|v| v.is_categorical())
                .any(|v| {
                    v.categories
                        .iter()
                        .any(|c| *name == format!("{}_{c}", v.code))
                });
        assert!(ok, "unexpected design column {name}");
    }
    assert_eq!(a.names()[0], "Intercept");
    assert!(a.names().iter().any(|n| n == "gender_Male"));
    assert!(!a.names().iter().any(|n| n == "gender_Female"));
}

#[test]
fn encode_refuses_missing_cells() {
    let (d, _) = gen_pipeline_data(&FixtureConfig::new(200, 1)).unwrap();
    let e = encode(&d).unwrap_err();
    assert!(e.to_string().contains("imput"), "{e}");
}
