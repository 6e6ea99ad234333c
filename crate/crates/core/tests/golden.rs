//! Frozen reference values for the seed mixer, the hash noise, MAdds and the
//! synthetic oracle. The numbers come from a separate reimplementation of
//! the documented formulas.

use bipop_core::evaluation::hash_noise;
use bipop_core::seed::{derive_seed, hash_genes};
use bipop_core::{madds, Evaluator, Genome, SearchSpaceConfig, SyntheticEvaluator, SyntheticOracleConfig};

struct Golden {
    genes: Vec<u32>,
    tiny: bool,
    madds: f64,
    /// `(seed, hash, eta, error_rate)`
    rows: [(u64, u64, f64, f64); 2],
}

fn goldens() -> Vec<Golden> {
    vec![
        Golden {
            genes: [vec![1], [1, 1, 1, 1, 1, 0, 0, 0, 0].repeat(5)].concat(),
            tiny: false,
            madds: 83.370816,
            rows: [
                (0, 0x35ca_08d0_511a_e42d, -0.5797718985393567, 0.4009189622405002),
                (7, 0x6eb1_54b9_4a4d_a7a5, -0.1352132888090578, 0.4098101344351062),
            ],
        },
        Golden {
            genes: [vec![5], [3, 3, 3, 3, 3, 3, 3, 3, 3].repeat(5)].concat(),
            tiny: false,
            madds: 726.386688,
            rows: [
                (0, 0x8dd6_8bcd_a59f_18b0, 0.10810992757182514, 0.06671793011909709),
                (7, 0xc50f_81b2_2352_62f5, 0.5395357246221861, 0.07534644606010431),
            ],
        },
        Golden {
            genes: vec![
                3, 2, 1, 2, 3, 1, 2, 3, 0, 0, 1, 2, 2, 1, 3, 0, 0, 0, 0, 3, 1, 1, 2, 2, 3, 3, 1, 2, 2, 3, 3, 2, 1,
                1, 2, 0, 0, 1, 1, 3, 2, 2, 0, 0, 0, 0,
            ],
            tiny: false,
            madds: 236.143152,
            rows: [
                (0, 0xd614_26e7_0110_f7f5, 0.6724899890851996, 0.23233218348677445),
                (7, 0xbf9a_944f_9178_10d1, 0.49690488705795177, 0.2288204814462295),
            ],
        },
        Golden {
            genes: vec![1, 2, 1, 2, 2, 1, 1, 1, 2, 0, 0],
            tiny: true,
            madds: 0.530688,
            rows: [
                (0, 0xb4ff_ed13_4a08_b21f, 0.41406024400572994, 0.60682374737327),
                (7, 0x333b_3f75_5f83_f887, -0.599754398049271, 0.5865474545321699),
            ],
        },
    ]
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

#[test]
fn derived_seeds() {
    assert_eq!(derive_seed(0, &[1]), 0xd300_120a_5ea3_5cac);
    assert_eq!(derive_seed(42, &[4, 7]), 0x6ded_5f40_e854_686c);
}

#[test]
fn hash_noise_vectors() {
    for g in goldens() {
        let genome = Genome(g.genes.clone());
        for (seed, hash, eta, _) in g.rows {
            assert_eq!(hash_genes(&g.genes, seed), hash, "{genome} seed {seed}");
            assert_eq!(hash_noise(&genome, seed), eta);
        }
    }
}

#[test]
fn madds_and_oracle_vectors() {
    for g in goldens() {
        let space = if g.tiny {
            SearchSpaceConfig::tiny()
        } else {
            SearchSpaceConfig::mobilenet_v3()
        };
        let genome = Genome(g.genes.clone());
        let m = madds(&genome, &space).unwrap();
        assert!(rel_close(m, g.madds), "{genome}: {m} vs {}", g.madds);
        for (seed, _, _, error) in g.rows {
            let ev = SyntheticEvaluator::new(
                space.clone(),
                SyntheticOracleConfig {
                    seed,
                    ..Default::default()
                },
            )
            .unwrap();
            let r = ev.evaluate(&genome).unwrap();
            assert!(rel_close(r.error_rate, error), "{genome} seed {seed}: {} vs {error}", r.error_rate);
        }
    }
}

#[test]
fn noise_free_oracle_at_tau() {
    let oracle = SyntheticOracleConfig {
        noise_amp: 0.0,
        ..Default::default()
    };
    assert!((oracle.error_rate(200.0, 0.0) - 0.2523336926442933).abs() < 1e-12);
    assert!((oracle.error_rate(200.0, 0.0) - 0.2523).abs() < 1e-4);
    assert!((oracle.error_rate(1e9, 0.0) - 0.05).abs() < 1e-12);
}
