mod common;

use common::continuous_schema;
use proce::data::{Dataset, Feature, FeatureSchema, Instance};
use proce::models::{Autoencoder, AutoencoderConfig};
use proce::objectives::{compute_prototype, f_dist, f_proto, knn_from_latents};
use proptest::prelude::*;

fn small_ae(schema: &FeatureSchema, seed: u64) -> Autoencoder {
    Autoencoder::new(
        schema,
        &AutoencoderConfig {
            embedding_dim: 3,
            category_width: 2,
            hidden: 5,
        },
        seed,
    )
    .unwrap()
}

fn mixed_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        Feature::continuous("x"),
        Feature::categorical("c", ["a", "b", "c", "d"]),
        Feature::continuous("y"),
    ])
    .unwrap()
}

fn mixed_instance() -> impl Strategy<Value = Instance> {
    (0.0f64..=1.0, 0usize..4, 0.0f64..=1.0).prop_map(|(x, c, y)| Instance::new(vec![x, c as f64, y]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn knn_matches_brute_force(
        latents in prop::collection::vec(prop::collection::vec((0i8..8).prop_map(|v| f64::from(v) / 4.0), 2), 1..500),
        labels_seed in any::<u64>(),
        z in prop::collection::vec(0.0f64..2.0, 2),
        k in 1usize..30,
    ) {
        let labels: Vec<u8> = (0..latents.len())
            .map(|i| u8::from((labels_seed.rotate_left(i as u32 % 64) ^ i as u64) & 1 == 1))
            .collect();
        let y_org = 0u8;
        // Brute force: repeatedly take the closest unused opposite-class row.
        let mut used = vec![false; latents.len()];
        let mut expected = Vec::new();
        let candidates = labels.iter().filter(|&&y| y != y_org).count();
        for _ in 0..k.min(candidates) {
            let mut best: Option<(f64, usize)> = None;
            for (i, l) in latents.iter().enumerate() {
                if used[i] || labels[i] == y_org {
                    continue;
                }
                let d: f64 = l.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
            let (_, i) = best.unwrap();
            used[i] = true;
            expected.push(i);
        }
        match knn_from_latents(&latents, &labels, &z, y_org, k) {
            Ok(got) => {
                prop_assert_eq!(got.len(), k);
                prop_assert_eq!(got, expected);
            }
            Err(_) => prop_assert!(candidates < k),
        }
    }

    #[test]
    fn prototype_is_permutation_invariant(seed in any::<u64>(), perm_seed in any::<u64>()) {
        let schema = continuous_schema(4);
        let rows: Vec<Instance> = (0..12)
            .map(|i| Instance::new((0..4).map(|j| ((i * 7 + j * 3 + seed as usize % 5) % 11) as f64 / 10.0).collect()))
            .collect();
        let data = Dataset::new(schema.clone(), rows, vec![1; 12]).unwrap();
        let ae = small_ae(&schema, seed);
        let idx: Vec<usize> = vec![0, 3, 4, 7, 9, 11];
        let mut shuffled = idx.clone();
        let mut s = perm_seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(
            compute_prototype(&data, &ae, &idx).unwrap(),
            compute_prototype(&data, &ae, &shuffled).unwrap()
        );
    }

    #[test]
    fn f_dist_is_symmetric_nonnegative_and_zero_on_identity(a in mixed_instance(), b in mixed_instance(), seed in any::<u64>()) {
        let schema = mixed_schema();
        let ae = small_ae(&schema, seed);
        let ab = f_dist(&ae, &schema, &a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, f_dist(&ae, &schema, &b, &a).unwrap());
        prop_assert_eq!(f_dist(&ae, &schema, &a, &a).unwrap(), 0.0);
    }

    #[test]
    fn f_proto_is_nonnegative_and_zero_at_prototype(a in mixed_instance(), seed in any::<u64>()) {
        let schema = mixed_schema();
        let ae = small_ae(&schema, seed);
        let z = ae.encode(&a).unwrap();
        prop_assert_eq!(f_proto(&ae, &a, &z).unwrap(), 0.0);
        let shifted: Vec<f64> = z.iter().map(|v| v + 0.5).collect();
        let d = f_proto(&ae, &a, &shifted).unwrap();
        prop_assert!((d - 0.25 * z.len() as f64).abs() < 1e-12);
    }
}
