use proptest::prelude::*;
use spiked::config::parse_range;
use spiked::format::{read_instance, write_instance};
use spiked::manifest::digest_bytes;
use spiked_core::model::{Channels, Instance, TensorStorage};
use spiked_core::ModelParams;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn instance_dump_round_trips(
        seed in any::<u64>(),
        n in 3usize..16,
        d2 in 0.1f64..3.0,
        d3 in 0.1f64..3.0,
        implicit in any::<bool>(),
        ch in 0usize..3,
    ) {
        let channels = [Channels::FULL, Channels::NOISELESS, Channels::NOISE_ONLY][ch];
        let storage = if implicit { TensorStorage::Implicit } else { TensorStorage::Packed };
        let inst = Instance::builder(ModelParams::new(n, d2, d3, 1.0).unwrap(), seed)
            .channels(channels)
            .storage(storage)
            .build()
            .unwrap();
        let mut buf = Vec::new();
        write_instance(&mut buf, &inst).unwrap();
        let back = read_instance(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back.to_packed(), inst.to_packed());
    }

    #[test]
    fn ranges_are_inclusive_and_evenly_spaced(a in -5.0f64..5.0, len in 0.0f64..5.0, step in 0.05f64..1.0) {
        let v = parse_range(&format!("{a}:{}:{step}", a + len)).unwrap();
        prop_assert!(!v.is_empty());
        prop_assert!((v[0] - a).abs() < 1e-9);
        prop_assert!(*v.last().unwrap() <= a + len + 1e-9);
        prop_assert!(*v.last().unwrap() + step > a + len - 1e-9);
        for w in v.windows(2) {
            prop_assert!((w[1] - w[0] - step).abs() < 1e-9);
        }
    }

    #[test]
    fn digests_separate_distinct_payloads(a in proptest::collection::vec(any::<u8>(), 0..64), b in proptest::collection::vec(any::<u8>(), 0..64)) {
        prop_assert_eq!(digest_bytes(&a) == digest_bytes(&b), a == b);
    }
}
