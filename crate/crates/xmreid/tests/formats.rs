use std::collections::BTreeMap;

use proptest::prelude::*;
use xmreid::dataio::{self, AttributeTable, CorpusRecord, DataError, FeatRecord};
use xmreid::models;
use xmreid_core::cca::CcaModel;
use xmreid_core::dataset::{Role, SplitAssignment, View};
use xmreid_core::linalg::Matrix;
use xmreid_core::textprep::EmbeddingTable;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1e-6..1e-6f64, Just(0.0), Just(-0.0), Just(1.0 / 3.0)]
}

fn label() -> impl Strategy<Value = String> {
    "[a-z0-9_]{1,8}"
}

fn view() -> impl Strategy<Value = View> {
    prop_oneof![Just(View::One), Just(View::Two)]
}

fn feat_records() -> impl Strategy<Value = Vec<FeatRecord>> {
    (1usize..6).prop_flat_map(|d| {
        prop::collection::vec(
            (label(), view(), prop::collection::vec(finite(), d))
                .prop_map(|(identity, view, values)| FeatRecord { identity, view, values }),
            1..12,
        )
    })
}

proptest! {
    #[test]
    fn feat_round_trip(recs in feat_records()) {
        let text = dataio::write_feat(&recs);
        let back = dataio::parse_feat(&text).unwrap();
        prop_assert_eq!(back.len(), recs.len());
        for (a, b) in back.iter().zip(&recs) {
            prop_assert_eq!(&a.identity, &b.identity);
            prop_assert_eq!(a.view, b.view);
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert_eq!(x.to_bits() == y.to_bits() || (*x == 0.0 && *y == 0.0), true);
            }
        }
        prop_assert_eq!(dataio::write_feat(&back), text);
    }

    #[test]
    fn attribute_round_trip(bits in 1usize..20, rows in prop::collection::btree_map(label(), prop::collection::vec(any::<bool>(), 20), 1..10)) {
        let rows: BTreeMap<String, Vec<bool>> = rows.into_iter().map(|(k, mut v)| { v.truncate(bits); (k, v) }).collect();
        let table = AttributeTable { bits, rows };
        let text = dataio::write_attributes(&table);
        prop_assert_eq!(dataio::parse_attributes(&text).unwrap(), table);
    }

    #[test]
    fn split_round_trip(ids in prop::collection::btree_set(label(), 2..12), count in 1usize..4, seed in any::<u64>()) {
        let ids: Vec<String> = ids.into_iter().collect();
        let splits: Vec<SplitAssignment> = (0..count)
            .map(|i| {
                let entries = ids.iter().enumerate().map(|(j, id)| {
                    let train = (seed.rotate_left((i * 7 + j) as u32) & 1) == 1;
                    (id.clone(), if train { Role::Train } else { Role::Test })
                });
                SplitAssignment::new(i, entries).unwrap()
            })
            .collect();
        let text = dataio::write_splits(&splits);
        let back = dataio::parse_splits(&text).unwrap();
        prop_assert_eq!(dataio::write_splits(&back), text);
        for (a, b) in back.iter().zip(&splits) {
            prop_assert_eq!(a.entries().collect::<Vec<_>>(), b.entries().collect::<Vec<_>>());
        }
    }

    #[test]
    fn corpus_round_trip(rows in prop::collection::vec((label(), view(), "[A-Za-z ,.'-]{0,40}"), 0..8)) {
        let recs: Vec<CorpusRecord> = rows.into_iter().map(|(identity, view, text)| CorpusRecord { identity, view, text }).collect();
        let text = dataio::write_corpus(&recs);
        prop_assert_eq!(dataio::parse_corpus(&text).unwrap(), recs);
    }

    #[test]
    fn embedding_round_trip(tokens in prop::collection::btree_set("[a-z]{1,6}", 1..10), e in 1usize..5, v in finite()) {
        let mut table = EmbeddingTable::new(e);
        for (i, t) in tokens.iter().enumerate() {
            table.insert(t.clone(), (0..e).map(|j| v * (i + j) as f64).collect()).unwrap();
        }
        let text = dataio::write_embeddings(&table);
        prop_assert_eq!(dataio::write_embeddings(&dataio::parse_embeddings(&text).unwrap()), text);
    }

    #[test]
    fn cca_model_round_trip(dx in 1usize..4, dy in 1usize..4, vals in prop::collection::vec(finite(), 32)) {
        let k = dx.min(dy);
        let take = |n: usize, off: usize| vals.iter().cycle().skip(off).take(n).copied().collect::<Vec<_>>();
        let m = CcaModel {
            wx: Matrix::new(dx, k, take(dx * k, 0)).unwrap(),
            wy: Matrix::new(dy, k, take(dy * k, 3)).unwrap(),
            correlations: take(k, 5).iter().map(|c| c.abs().min(1.0)).collect(),
            mean_x: take(dx, 7),
            mean_y: take(dy, 11),
            eps: 1e-4,
        };
        let text = models::write_cca(&m);
        let back = models::parse_cca(&text).unwrap();
        prop_assert_eq!(models::write_cca(&back), text);
    }
}

#[test]
fn malformed_inputs_are_rejected_with_line_numbers() {
    assert!(matches!(
        dataio::parse_attributes("XMREID-ATTR 1 3\na\t101\nb\t10\n"),
        Err(DataError::RaggedAttributes { line: 3, expected: 3, found: 2 })
    ));
    assert!(matches!(
        dataio::parse_attributes("XMREID-ATTR 1 2\na\t10\na\t01\n"),
        Err(DataError::DuplicateIdentity(_))
    ));
    assert!(matches!(dataio::parse_embeddings("2 2\na 1 2\na 3 4\n"), Err(DataError::DuplicateToken(_))));
    assert!(matches!(dataio::parse_embeddings("2 2\na 1 2\n"), Err(DataError::CountMismatch { .. })));
    assert!(matches!(dataio::parse_splits("XMREID-SPLIT 1 2\n0\ta\ttrain\n"), Err(DataError::CountMismatch { .. })));
    assert!(matches!(
        dataio::parse_splits("XMREID-SPLIT 1 1\n0\ta\tvalidate\n"),
        Err(DataError::Malformed { line: 2, .. })
    ));
    assert!(matches!(dataio::parse_corpus("XMREID-CORPUS 1\nonly-one-field\n"), Err(DataError::Malformed { line: 2, .. })));
    assert!(matches!(models::parse_cca("XMREID-CCA 1\n1 1 1\n"), Err(DataError::DimensionMismatch { .. })));
}

#[test]
fn dataset_assembly_checks_alignment_and_attributes() {
    let rec = |id: &str, view| FeatRecord { identity: id.into(), view, values: vec![1.0] };
    let v = [rec("a", View::One), rec("a", View::Two)];
    let l = [rec("a", View::One), rec("b", View::Two)];
    assert!(matches!(dataio::assemble_dataset(Some(&v), Some(&l), None), Err(DataError::Misaligned { row: 2 })));
    let attrs = AttributeTable { bits: 1, rows: [("z".to_string(), vec![true])].into() };
    assert!(matches!(dataio::assemble_dataset(Some(&v), None, Some(&attrs)), Err(DataError::UnknownIdentity(_))));
    let ds = dataio::assemble_dataset(Some(&v), Some(&v), None).unwrap();
    assert_eq!(ds.len(), 2);
    let split = SplitAssignment::new(0, [("q".to_string(), Role::Test)]).unwrap();
    assert!(matches!(dataio::check_splits(&ds, &[split]), Err(DataError::UnknownIdentity(_))));
}

#[test]
fn generated_data_round_trips_byte_identically() {
    use xmreid_core::synth::{gen_paired, gen_splits, SynthConfig};
    let c = SynthConfig { identities: 12, splits: 2, ..SynthConfig::scenario_reference() };
    let ds = gen_paired(&c).unwrap();
    for language in [false, true] {
        let recs: Vec<FeatRecord> = ds
            .samples()
            .iter()
            .map(|s| FeatRecord {
                identity: s.identity.clone(),
                view: s.view,
                values: if language { s.language.clone() } else { s.vision.clone() }.unwrap(),
            })
            .collect();
        let text = dataio::write_feat(&recs);
        assert_eq!(dataio::write_feat(&dataio::parse_feat(&text).unwrap()), text);
    }
    let splits = dataio::write_splits(&gen_splits(&c));
    assert_eq!(dataio::write_splits(&dataio::parse_splits(&splits).unwrap()), splits);
}
