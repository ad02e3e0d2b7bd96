use proptest::prelude::*;

use recf::filters::FilterKind;
use recf::harness::{ExperimentConfig, FilterSpec, InitSpec, RunSpec, TheorySpec};
use recf::scenarios::{NoiseSpec, PlantSpec, RegressorMode, ScenarioSpec, SourceSpec, WalkInit};

fn source() -> impl Strategy<Value = SourceSpec> {
    prop_oneof![
        (0.0f64..=1.0).prop_map(|rho| SourceSpec::NoncircularGaussian { rho }),
        Just(SourceSpec::UniformComplex),
        (0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0).prop_map(|(a, b, c, d)| {
            let s = a + b + c + d;
            SourceSpec::Qpsk {
                probabilities: [a / s, b / s, c / s, d / s],
            }
        }),
    ]
}

fn noise() -> impl Strategy<Value = NoiseSpec> {
    prop_oneof![
        (-10.0f64..60.0).prop_map(NoiseSpec::SnrDb),
        (0.0f64..1.0).prop_map(NoiseSpec::Variance)
    ]
}

fn filter() -> impl Strategy<Value = FilterSpec> {
    (
        0usize..3,
        1e-6f64..1.0,
        1usize..600,
        1e-3f64..10.0,
        any::<bool>(),
        0usize..3,
    )
        .prop_map(|(k, mu, d, s2, lab, init)| {
            let kind = [FilterKind::Clms, FilterKind::Lrecf, FilterKind::Wlrecf][k];
            let mut f = FilterSpec::new(kind, mu);
            if kind != FilterKind::Clms {
                f = f.with_features(d, s2);
            }
            if lab {
                f = f.with_label(format!("f {d}"));
            }
            f.with_init([InitSpec::Zero, InitSpec::Ones, InitSpec::Zero][init])
        })
}

fn config() -> impl Strategy<Value = ExperimentConfig> {
    (
        source(),
        noise(),
        1usize..8,
        proptest::collection::vec(filter(), 1..4),
        (1usize..1000, 1usize..100_000, any::<u64>(), any::<bool>()),
        prop::option::of((1000usize..10_000_000, 1usize..64)),
        prop::option::of((1usize..64, 1e-3f64..1.0, 1e-12f64..1e-3)),
    )
        .prop_map(
            |(source, noise, m, mut filters, (runs, samples, seed, freeze), theory, walk)| {
                let plant = match walk {
                    Some((d, sigma2, sigma_q2)) => PlantSpec::RandomWalk {
                        d,
                        sigma2,
                        augmented: true,
                        sigma_q2,
                        init: WalkInit::Fixed,
                    },
                    None => PlantSpec::SystemI,
                };
                for (i, f) in filters.iter_mut().enumerate() {
                    f.label = Some(format!("{}{i}", f.display_label()));
                }
                ExperimentConfig {
                    scenario: ScenarioSpec {
                        source,
                        plant,
                        noise,
                        m,
                        delay: 0,
                        regressor: RegressorMode::TappedDelay,
                    },
                    filters,
                    run: RunSpec {
                        runs,
                        samples,
                        seed,
                        freeze_map: freeze,
                        tail_fraction: 0.1,
                        max_divergence_fraction: 0.5,
                    },
                    theory: theory.map(|(moment_samples, max_dim)| TheorySpec {
                        moment_samples,
                        max_dim,
                    }),
                    sweep: None,
                    equalization: None,
                }
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn parse_serialize_parse_is_identity(cfg in config()) {
        let text = cfg.to_json();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json(), text);
    }
}

#[test]
fn shipped_configs_round_trip() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let cfg = ExperimentConfig::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 8);
}

#[test]
fn unknown_fields_rejected() {
    let text = r#"{
        "scenario": { "source": { "kind": "uniform_complex" }, "plant": { "kind": "system_i" },
                      "noise": { "snr_db": 20 }, "m": 5 },
        "filters": [ { "kind": "clms", "mu": 0.1, "colour": "red" } ],
        "run": { "runs": 1, "samples": 10, "seed": 0 }
    }"#;
    assert!(ExperimentConfig::from_json(text).is_err());
}
