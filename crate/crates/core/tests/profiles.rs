mod common;

use common::*;
use lce::matrix::{build_matrix, build_superset, ConceptSuperset};
use lce::profile::*;
use lce::Error;
use proptest::prelude::*;
use std::collections::BTreeSet;

use ConceptCategory::*;

const VOCAB: [(&str, ConceptCategory); 10] = [
    ("car", Object),
    ("dog", Object),
    ("person", Object),
    ("leg", Part),
    ("wheel", Part),
    ("fur", Material),
    ("skin", Material),
    ("wood", Material),
    ("red", Color),
    ("blue", Color),
];

fn profile_strategy(name: &'static str) -> impl Strategy<Value = DissectProfile> {
    proptest::collection::vec((proptest::option::weighted(0.8, 0usize..VOCAB.len()), 0.0f64..0.3), 0..40).prop_map(
        move |units| {
            let units = units
                .into_iter()
                .enumerate()
                .map(|(u, (c, iou))| UnitAssignment {
                    unit_id: u as u32,
                    concept: c.map(|c| VOCAB[c].0.to_string()),
                    category: c.map(|c| VOCAB[c].1),
                    iou,
                })
                .collect();
            DissectProfile::new(name, "layer4", 64, units).unwrap()
        },
    )
}

fn assigned_set(p: &DissectProfile) -> BTreeSet<(u32, String)> {
    p.units
        .iter()
        .filter_map(|u| u.concept.as_ref().map(|c| (u.unit_id, c.clone())))
        .collect()
}

#[test]
fn abstraction_examples() {
    let p = profile_with("m", 8, &[("car", Object), ("car", Object), ("fur", Material)]);
    assert_eq!(abstract_profile(&p, AbstractionMode::All).counts(), [2, 0, 1, 0]);
    assert_eq!(abstract_profile(&p, AbstractionMode::Unique).counts(), [1, 0, 1, 0]);
    let empty = profile_with("e", 8, &[]);
    assert_eq!(abstract_profile(&empty, AbstractionMode::All).counts(), [0; 4]);
    assert_eq!(abstract_profile(&empty, AbstractionMode::Unique).counts(), [0; 4]);
}

#[test]
fn threshold_examples() {
    let json = br#"{"model":"m","layer":"layer4","layer_width":4,"units":[
        {"unit":0,"concept":"car","category":"object","iou":0.05},
        {"unit":1,"concept":"fur","category":"material","iou":0.03},
        {"unit":2,"concept":null,"category":null,"iou":0.0},
        {"unit":3,"concept":"red","category":"color","iou":0.04}]}"#;
    let p = parse_profile(json).unwrap();
    let f = filter_by_iou(&p, DEFAULT_IOU_THRESHOLD).unwrap();
    assert_eq!(f.units.len(), 4);
    assert_eq!(f.assigned_count(), 2);
    assert_eq!(abstract_profile(&f, AbstractionMode::All).counts(), [1, 0, 0, 1]);
    assert!(filter_by_iou(&p, 1.5).is_err());
}

#[test]
fn malformed_profiles_are_rejected() {
    let cases: [&[u8]; 7] = [
        br#"{"model":"m","layer":"l","layer_width":2,"units":[{"unit":0,"concept":"car","category":"object","iou":0.1},{"unit":0,"concept":"dog","category":"object","iou":0.1}]}"#,
        br#"{"model":"m","layer":"l","layer_width":2,"units":[{"unit":2,"concept":"car","category":"object","iou":0.1}]}"#,
        br#"{"model":"m","layer":"l","layer_width":2,"units":[{"unit":0,"concept":"car","category":"object","iou":1.1}]}"#,
        br#"{"model":"m","layer":"l","layer_width":2,"units":[{"unit":0,"concept":"car","category":null,"iou":0.1}]}"#,
        br#"{"model":"m","layer":"l","layer_width":2,"units":[{"unit":0,"concept":"car","category":"texture","iou":0.1}]}"#,
        br#"{"model":"m","layer":"l","layer_width":0,"units":[]}"#,
        br#"{"model":"m","layer":"l""#,
    ];
    for c in cases {
        let err = parse_profile(c).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }
}

#[test]
fn concept_names_are_trimmed() {
    let json = br#"{"model":"m","layer":"l","layer_width":2,"units":[{"unit":0,"concept":"  car ","category":"object","iou":0.1}]}"#;
    let p = parse_profile(json).unwrap();
    assert_eq!(p.units[0].concept.as_deref(), Some("car"));
}

#[test]
fn superset_examples() {
    let a = profile_with("a", 4, &[("car", Object)]);
    let b = profile_with("b", 4, &[("fur", Material)]);
    let s = build_superset(&[a.clone(), b.clone()]).unwrap();
    assert_eq!(s.concepts(), &[("car".to_string(), Object), ("fur".to_string(), Material)]);
    assert_eq!(s.category_totals(), [1, 0, 1, 0]);

    let conflict = profile_with("c", 4, &[("fur", Color)]);
    assert!(matches!(build_superset(&[b, conflict]), Err(Error::Invalid(_))));
    let none = profile_with("n", 4, &[]);
    assert!(matches!(build_superset(&[none]), Err(Error::Empty(_))));
}

#[test]
fn matrix_examples() {
    let mut concepts: Vec<(&str, ConceptCategory)> = vec![("car", Object); 10];
    concepts.push(("fur", Material));
    let a = profile_with("a", 64, &concepts);
    let others: Vec<String> = (0..66).map(|i| format!("obj{i:02}")).collect();
    let b_concepts: Vec<(&str, ConceptCategory)> = others.iter().map(|o| (o.as_str(), Object)).collect();
    let b = profile_with("b", 128, &b_concepts);
    let s = build_superset(&[a.clone(), b.clone()]).unwrap();
    assert_eq!(s.category_total(Object), 67);
    let m = build_matrix(&[a.clone(), b], &s).unwrap();
    let car = s.index_of("car").unwrap();
    assert_eq!(m.raw_counts[(0, car)], 10);
    assert!((m.normalized[(0, car)] - 10.0 / 67.0).abs() < 1e-15);
    assert_eq!(m.normalized[(1, car)], 0.0);
    let csv = String::from_utf8(m.normalized_csv()).unwrap();
    assert!(csv.starts_with("model,car,obj00,"));
    assert!(csv.contains("0.149253731"));

    let small = ConceptSuperset::from_concepts([("fur".to_string(), Material)]).unwrap();
    assert!(build_matrix(&[a], &small).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn filtering_is_idempotent_and_monotone(p in profile_strategy("m"), t1 in 0.0f64..0.3, t2 in 0.0f64..0.3) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let once = filter_by_iou(&p, lo).unwrap();
        prop_assert_eq!(&filter_by_iou(&once, lo).unwrap(), &once);
        let strict = filter_by_iou(&p, hi).unwrap();
        prop_assert!(assigned_set(&strict).is_subset(&assigned_set(&once)));
        prop_assert_eq!(strict.units.len(), p.units.len());
    }

    #[test]
    fn unique_never_exceeds_all(p in profile_strategy("m")) {
        let all = abstract_profile(&p, AbstractionMode::All);
        let unique = abstract_profile(&p, AbstractionMode::Unique);
        for c in ConceptCategory::ALL {
            prop_assert!(unique.get(c) <= all.get(c));
        }
        prop_assert_eq!(all.total(), p.assigned_count());
    }

    #[test]
    fn json_round_trip(p in profile_strategy("m")) {
        let again = parse_profile(p.to_json().as_bytes()).unwrap();
        prop_assert_eq!(&again, &p);
        prop_assert_eq!(again.to_json(), p.to_json());
    }

    #[test]
    fn permuting_profiles_permutes_rows(a in profile_strategy("a"), b in profile_strategy("b"), c in profile_strategy("c")) {
        let forward = [a.clone(), b.clone(), c.clone()];
        let backward = [c, a, b];
        prop_assume!(build_superset(&forward).is_ok());
        let sf = build_superset(&forward).unwrap();
        let sb = build_superset(&backward).unwrap();
        prop_assert_eq!(&sf, &sb);
        let mf = build_matrix(&forward, &sf).unwrap();
        let mb = build_matrix(&backward, &sb).unwrap();
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            prop_assert_eq!(mf.row(i), mb.row(j));
            prop_assert_eq!(&mf.model_names[i], &mb.model_names[j]);
        }
    }

    #[test]
    fn normalized_cells_are_bounded(a in profile_strategy("a"), b in profile_strategy("b")) {
        let ps = [a, b];
        prop_assume!(build_superset(&ps).is_ok());
        let s = build_superset(&ps).unwrap();
        let m = build_matrix(&ps, &s).unwrap();
        let min_total = s.category_totals().into_iter().filter(|t| *t > 0).min().unwrap() as f64;
        for i in 0..2 {
            let width = m.layer_widths[i] as f64;
            prop_assert!(m.raw_counts.row(i).iter().map(|&v| v as usize).sum::<usize>() <= m.layer_widths[i] as usize);
            prop_assert!(m.normalized.row(i).iter().all(|&v| v >= 0.0 && v <= width / min_total));
            for (j, (_, cat)) in s.concepts().iter().enumerate() {
                let want = m.raw_counts[(i, j)] as f64 / s.category_total(*cat) as f64;
                prop_assert_eq!(m.normalized[(i, j)], want);
            }
        }
    }

    #[test]
    fn nonzero_columns_form_a_subset(a in profile_strategy("a"), b in profile_strategy("b")) {
        let ps = [a, b];
        prop_assume!(build_superset(&ps).is_ok());
        let s = build_superset(&ps).unwrap();
        let m = build_matrix(&ps, &s).unwrap();
        let nonzero: Vec<(String, ConceptCategory)> = s
            .concepts()
            .iter()
            .enumerate()
            .filter(|(j, _)| m.raw_counts.column(*j).iter().any(|&v| v > 0))
            .map(|(_, c)| c.clone())
            .collect();
        let rebuilt = ConceptSuperset::from_concepts(nonzero).unwrap();
        let all: BTreeSet<_> = s.concepts().iter().collect();
        prop_assert!(rebuilt.concepts().iter().all(|c| all.contains(c)));
        prop_assert_eq!(rebuilt.len(), s.len());
    }

    #[test]
    fn superset_order_is_category_then_name(a in profile_strategy("a"), b in profile_strategy("b")) {
        let ps = [a, b];
        prop_assume!(build_superset(&ps).is_ok());
        let s = build_superset(&ps).unwrap();
        prop_assert!(s.concepts().windows(2).all(|w| (w[0].1.index(), &w[0].0) < (w[1].1.index(), &w[1].0)));
        prop_assert_eq!(s.category_totals().iter().sum::<usize>(), s.len());
    }
}
