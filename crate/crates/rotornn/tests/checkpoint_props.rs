//! Property tests for the checkpoint codec: decoding must be total over
//! arbitrary byte strings, and encoding must roundtrip exactly.

use proptest::prelude::*;
use rotornn::Checkpoint;

proptest! {
    #[test]
    fn decode_never_panics_on_arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..4096)) {
        let _ = Checkpoint::decode(&bytes);
    }

    #[test]
    fn decode_never_panics_on_mutated_valid_files(
        flip_at in 0usize..256,
        value in any::<u8>(),
        data in proptest::collection::vec(any::<f64>(), 0..16),
    ) {
        let mut c = Checkpoint::new();
        c.push("section", data);
        let mut bytes = c.encode();
        let idx = flip_at % bytes.len();
        bytes[idx] = value;
        let _ = Checkpoint::decode(&bytes);
    }

    #[test]
    fn roundtrip_preserves_sections(
        sections in proptest::collection::vec(
            ("[a-z]{1,12}", proptest::collection::vec(any::<f64>(), 0..32)),
            0..8,
        )
    ) {
        let mut c = Checkpoint::new();
        let mut used = std::collections::HashSet::new();
        for (name, data) in sections {
            if used.insert(name.clone()) {
                c.push(name, data);
            }
        }
        let decoded = Checkpoint::decode(&c.encode()).unwrap();
        let names_a: Vec<_> = c.section_names().collect();
        let names_b: Vec<_> = decoded.section_names().collect();
        prop_assert_eq!(names_a, names_b);
        for name in c.section_names() {
            let a = c.get(name).unwrap();
            let b = decoded.get(name).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                prop_assert!(x.to_bits() == y.to_bits(), "value changed in roundtrip");
            }
        }
    }
}
