use std::path::Path;

use formation_cli::scenario::{load_preset, parse_str, serialize};
use formation_core::dynamics::Uncertainty;
use formation_core::graph::build_topology;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialized_config_parses_back_identically(
        dt in 1e-5f64..1e-2,
        t_end in 0.0f64..100.0,
        decimation in 1usize..100,
        k1 in proptest::collection::vec(0.1f64..1e3, 3),
        sigma in 0.0f64..1e-2,
        ids in proptest::collection::vec(1u32..=5, 5),
        offsets in proptest::collection::vec(-50.0f64..50.0, 15),
        weights in proptest::collection::vec(0.0f64..4.0, 5),
        mass in 5.0f64..100.0,
    ) {
        let mut cfg = load_preset("desk-5auv").unwrap();
        cfg.dt = dt;
        cfg.t_end = t_end;
        cfg.decimation = decimation;
        let mut rows = cfg.topology.rows();
        for (i, w) in weights.iter().enumerate() {
            rows[i + 1][0] = *w;
        }
        cfg.topology = build_topology(&rows).unwrap();
        for (i, a) in cfg.agents.iter_mut().enumerate() {
            a.controller_gains.k1 = Matrix3::from_diagonal(&Vector3::from_column_slice(&k1));
            a.controller_gains.sigma = [sigma; 3];
            a.params.uncertainty = Uncertainty::from_id(ids[i]).unwrap();
            a.offset = Vector3::from_column_slice(&offsets[3 * i..3 * i + 3]);
        }
        cfg.agents[2].params.mass = mass;
        let text = serialize(&cfg).unwrap();
        let back = parse_str(&text, Path::new(".")).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(serialize(&back).unwrap(), text);
    }
}
