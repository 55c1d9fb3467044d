use lfc_core::synthground::{
    encode_expression, gen_dataset, hflip_augment, load_dataset, parse_slots, save_dataset, BBox, Color, Expression,
    Relation, Shape, Vocab, IMAGE_SIZE, RELATION_MARGIN,
};
use lfc_core::Tensor;

#[test]
fn vocabulary_has_thirteen_tokens() {
    let v = Vocab::default();
    assert_eq!(v.len(), 3 + 4 + 5 + 1);
    assert!(v.id("purple").is_err());
    assert!(parse_slots(&["red", "square", "under", "<null>", "<null>"]).is_err());
}

#[test]
fn generation_is_deterministic() {
    let a = gen_dataset(64, 9, 0.5).unwrap();
    let b = gen_dataset(64, 9, 0.5).unwrap();
    assert_eq!(a, b);
    let c = gen_dataset(64, 10, 0.5).unwrap();
    assert_ne!(a, c);
    assert!(gen_dataset(0, 9, 0.5).is_err());
    assert!(gen_dataset(4, 9, 1.5).is_err());
}

#[test]
fn samples_are_well_formed() {
    let data = gen_dataset(600, 3, 0.5).unwrap();
    assert_eq!(data.iter().filter(|s| s.relation_critical).count(), 300);
    let mut relations = [0usize; 5];
    for s in &data {
        assert!((2..=5).contains(&s.objects.len()), "sample {} has {} objects", s.id, s.objects.len());
        let hits = s.expression.matches(&s.objects);
        assert_eq!(hits.len(), 1, "sample {}: {}", s.id, s.expression);
        assert_eq!(s.objects[hits[0]].bbox, s.target);
        assert!(!s.expression.is_ambiguous(&s.objects));
        for (i, a) in s.objects.iter().enumerate() {
            assert!(a.bbox.inside(64.0, 64.0));
            for b in &s.objects[i + 1..] {
                assert_eq!(a.bbox.iou(&b.bbox), 0.0);
            }
        }
        assert!(s.image.data().iter().all(|&v| v == 0.0 || v == 1.0));
        relations[Relation::ALL.iter().position(|&r| r == s.expression.relation).unwrap()] += 1;
        if s.relation_critical {
            assert_ne!(s.expression.relation, Relation::None);
        }
    }
    assert!(relations.iter().all(|&n| n > 30), "{relations:?}");
}

fn crop(image: &Tensor<f32>, b: &BBox) -> Vec<f32> {
    let mut out = Vec::new();
    for c in 0..3 {
        for y in b.y_min as usize..b.y_max as usize {
            for x in b.x_min as usize..b.x_max as usize {
                out.push(image.at(&[c, y, x]));
            }
        }
    }
    out
}

#[test]
fn critical_samples_have_an_identical_twin_across_the_referent() {
    for s in gen_dataset(200, 4, 1.0).unwrap() {
        let e = s.expression;
        let twins: Vec<_> = s.objects.iter().filter(|o| o.kind() == e.target).collect();
        assert_eq!(twins.len(), 2);
        let refs: Vec<_> = s.referents().collect();
        assert_eq!(refs.len(), 1);
        let (t, d) = if twins[0].bbox == s.target { (twins[0], twins[1]) } else { (twins[1], twins[0]) };
        assert!(e.relation.lead(&t.bbox, &refs[0].bbox).unwrap() >= RELATION_MARGIN);
        assert!(e.relation.opposite().lead(&d.bbox, &refs[0].bbox).unwrap() >= RELATION_MARGIN);
        assert_eq!(crop(&s.image, &t.bbox), crop(&s.image, &d.bbox));
        let mut kinds: Vec<_> = s.objects.iter().map(|o| o.kind()).collect();
        kinds.sort_by_key(|k| format!("{k:?}"));
        kinds.dedup();
        assert_eq!(kinds.len(), s.objects.len() - 1, "extras repeat a type");
    }
}

#[test]
fn constructed_example_has_two_red_squares_either_side() {
    let data = gen_dataset(2000, 5, 1.0).unwrap();
    let wanted = Expression::new(
        (Color::Red, Shape::Square),
        Relation::LeftOf,
        Some((Color::Blue, Shape::Circle)),
    )
    .unwrap();
    let s = data.iter().find(|s| s.expression == wanted).expect("template occurs");
    let circle = s.referents().next().unwrap().bbox.center().0;
    let xs: Vec<f64> = s
        .objects
        .iter()
        .filter(|o| o.kind() == (Color::Red, Shape::Square))
        .map(|o| o.bbox.center().0)
        .collect();
    assert_eq!(xs.len(), 2);
    assert!(xs.iter().any(|&x| x < circle) && xs.iter().any(|&x| x > circle));
}

#[test]
fn flip_is_an_involution_and_keeps_uniqueness() {
    for s in gen_dataset(300, 6, 0.5).unwrap() {
        let f = hflip_augment(&s);
        assert_eq!(hflip_augment(&f), s);
        assert_eq!(f.expression.matches(&f.objects).len(), 1);
        assert_eq!(f.objects[f.expression.matches(&f.objects)[0]].bbox, f.target);
        let w = IMAGE_SIZE as f64;
        assert_eq!(f.target.x_min, w - s.target.x_max);
        match s.expression.relation {
            Relation::LeftOf => assert_eq!(f.expression.relation, Relation::RightOf),
            Relation::RightOf => assert_eq!(f.expression.relation, Relation::LeftOf),
            r => assert_eq!(f.expression.relation, r),
        }
    }
}

#[test]
fn encoding_is_slot_ordered() {
    let v = Vocab::default();
    let table = Tensor::<f32>::new(&[13, 2], (0..26).map(|i| i as f32).collect()).unwrap();
    let a = Expression::new((Color::Red, Shape::Square), Relation::LeftOf, Some((Color::Blue, Shape::Circle))).unwrap();
    let b = Expression::new((Color::Blue, Shape::Circle), Relation::LeftOf, Some((Color::Red, Shape::Square))).unwrap();
    let ea = encode_expression(&a, &v, &table).unwrap();
    assert_eq!(ea, encode_expression(&a, &v, &table).unwrap());
    assert_ne!(ea, encode_expression(&b, &v, &table).unwrap());
    assert_eq!(ea.shape(), [10]);
    assert!(Expression::new((Color::Red, Shape::Square), Relation::None, Some((Color::Red, Shape::Circle))).is_err());
}

#[test]
fn dataset_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_dataset(20, 7, 0.5).unwrap();
    save_dataset(dir.path(), &data).unwrap();
    assert_eq!(load_dataset(dir.path()).unwrap(), data);
}
