//! Property tests for the ingest stage: status partitioning, normalization
//! idempotence, min-max affine invariance, and parse/serialize round-trip
//! stability.

use proptest::prelude::*;

use thermelt::fmt::sig9;
use thermelt::ingest::{
    filter_proteins, median_normalize, min_max_scale, parse_table, Condition, FilterCounts,
    ParseOptions, ProfileStatus, ProteinProfile, RawMeasurement,
};

fn scaled_values(profile: &ProteinProfile) -> Vec<f64> {
    profile
        .control
        .iter()
        .chain(profile.perturbation.iter())
        .map(|o| o.value)
        .collect()
}

/// Strategy: a random raw table with a handful of proteins, variable
/// replicate/temperature coverage, occasional missing values.
fn raw_table() -> impl Strategy<Value = Vec<RawMeasurement>> {
    let protein = (0usize..6).prop_flat_map(|p| {
        let id = format!("P{p}");
        (
            Just(id),
            2usize..8,               // temperatures
            1u32..4,                 // replicates per condition
            0u32..8,                 // psm count
            proptest::collection::vec(0.05f64..10.0, 48), // abundance pool
            proptest::collection::vec(proptest::bool::weighted(0.08), 48), // missing mask
        )
    });
    proptest::collection::vec(protein, 1..6).prop_map(|proteins| {
        let mut rows = Vec::new();
        for (id, n_temps, reps, psm, pool, missing) in proteins {
            let mut k = 0;
            for cond in Condition::BOTH {
                for rep in 1..=reps {
                    for t in 0..n_temps {
                        let temperature = 37.0 + 3.0 * t as f64;
                        let idx = k % pool.len();
                        k += 1;
                        rows.push(RawMeasurement {
                            protein_id: id.clone(),
                            condition: cond,
                            replicate: rep,
                            temperature,
                            abundance: if missing[idx] { None } else { Some(pool[idx]) },
                            psm_count: Some(psm),
                        });
                    }
                }
            }
        }
        rows
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filtering_partitions_input_proteins(rows in raw_table()) {
        let profiles: Vec<_> = filter_proteins(&rows, 3, 2)
            .into_iter()
            .map(min_max_scale)
            .collect();
        let ids: std::collections::BTreeSet<_> =
            rows.iter().map(|m| m.protein_id.clone()).collect();
        let counts = FilterCounts::tally(&profiles);
        prop_assert_eq!(counts.total(), ids.len());
        // Scaled Ok profiles really live on [0, 1] with both ends attained.
        for p in &profiles {
            if p.status == ProfileStatus::Ok {
                let values = scaled_values(p);
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo == 0.0 && hi == 1.0);
            }
        }
    }

    #[test]
    fn median_normalization_is_idempotent(rows in raw_table()) {
        let mut data = rows;
        // Normalization requires every column to have a present value and a
        // nonzero median; skip generated tables that violate its
        // preconditions.
        let mut first = data.clone();
        if median_normalize(&mut first).is_err() {
            return Ok(());
        }
        median_normalize(&mut data).unwrap();
        let once: Vec<Option<f64>> = data.iter().map(|m| m.abundance).collect();
        median_normalize(&mut data).unwrap();
        for (a, b) in once.iter().zip(data.iter().map(|m| m.abundance)) {
            match (a, b) {
                (Some(x), Some(y)) => {
                    prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
                }
                (None, None) => {}
                _ => prop_assert!(false, "missingness changed"),
            }
        }
    }

    #[test]
    fn min_max_scaling_is_affine_invariant(
        rows in raw_table(),
        a in 0.01f64..100.0,
        b in 0.0f64..50.0,
    ) {
        let baseline: Vec<_> = filter_proteins(&rows, 0, 1).into_iter().map(min_max_scale).collect();
        let transformed_rows: Vec<RawMeasurement> = rows
            .iter()
            .map(|m| RawMeasurement {
                abundance: m.abundance.map(|x| a * x + b),
                ..m.clone()
            })
            .collect();
        let transformed: Vec<_> =
            filter_proteins(&transformed_rows, 0, 1).into_iter().map(min_max_scale).collect();
        for (p, q) in baseline.iter().zip(&transformed) {
            prop_assert_eq!(&p.protein_id, &q.protein_id);
            if p.status != ProfileStatus::Ok || q.status != ProfileStatus::Ok {
                continue;
            }
            for (x, y) in scaled_values(p).iter().zip(scaled_values(q).iter()) {
                prop_assert!((x - y).abs() < 1e-9, "affine transform changed {x} to {y}");
            }
        }
    }
}

/// Serialize measurements the way the generator writes datasets.
fn serialize(measurements: &[RawMeasurement]) -> String {
    let mut out = String::from("protein_id,condition,replicate,temperature,abundance,psm_count\n");
    for m in measurements {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.protein_id,
            match m.condition {
                Condition::Control => "control",
                Condition::Perturbation => "treatment",
            },
            m.replicate,
            sig9(m.temperature),
            m.abundance.map(sig9).unwrap_or_default(),
            m.psm_count.map(|p| p.to_string()).unwrap_or_default(),
        ));
    }
    out
}

#[test]
fn parse_serialize_parse_is_a_fixpoint() {
    let input = "protein_id,condition,replicate,temperature,abundance,psm_count\n\
        P1,control,1,37,1234.56789012345,5\n\
        P1,control,1,41.333333333,0.000123456789444,5\n\
        P1,treatment,2,45.5,NA,5\n\
        P2,treatment,1,37,98765432.123456,\n";
    let options = ParseOptions::default();
    let (m1, _) = parse_table(input.as_bytes(), &options).unwrap();
    let (m2, _) = parse_table(serialize(&m1).as_bytes(), &options).unwrap();
    let (m3, _) = parse_table(serialize(&m2).as_bytes(), &options).unwrap();
    assert_eq!(m2, m3);
    // And the serialized form itself is stable.
    assert_eq!(serialize(&m2), serialize(&m3));
}
