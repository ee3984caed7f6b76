use affordance_grpo::dataset::{build_record, read_records, write_records, LabeledMask, ReadMode};
use affordance_grpo::geometry::{rasterize_box, BoundingBox};
use affordance_grpo::parser::{render_response, StructuredResponse};
use affordance_grpo::pgm;
use affordance_grpo::reward::{total_reward, Component, EmbeddingLexicon, RewardConfig};

fn lexicon() -> EmbeddingLexicon {
    EmbeddingLexicon::parse("3\nopen 1 0 0\nopenable 0.95 0.312249899 0\ngrasp 0 1 0\n").unwrap()
}

#[test]
fn masks_to_records_to_rewards() {
    let dir = tempfile::tempdir().unwrap();
    let boxes = [[3, 4, 12, 9], [20, 2, 27, 14]];
    let mut masks = Vec::new();
    for (i, b) in boxes.iter().enumerate() {
        let m = rasterize_box(&BoundingBox::new(b[0], b[1], b[2], b[3]).unwrap(), 32, 16).unwrap();
        let name = format!("m{i}.pgm");
        pgm::write_mask(dir.path().join(&name), &m).unwrap();
        masks.push(LabeledMask {
            affordance: "openable".into(),
            mask_path: name,
            mask: m,
        });
    }
    let record = build_record("r", "r.jpg", "open the doors", &masks).unwrap();
    assert_eq!(record.targets[1].bbox.coords(), boxes[1]);

    let path = dir.path().join("records.jsonl");
    write_records(&path, std::slice::from_ref(&record)).unwrap();
    let back = read_records(
        &path,
        &ReadMode::Strict {
            mask_root: dir.path().into(),
        },
    )
    .unwrap();
    assert_eq!(back, vec![record.clone()]);

    let cfg = RewardConfig::default();
    let perfect =
        render_response(&StructuredResponse::new("t", "r", record.ground_truth()).unwrap());
    let b = total_reward(&perfect, &record, &lexicon(), &cfg);
    assert_eq!(b.total, 7.0);

    // synonym label still counts as recognized; one missing box costs box_num only
    let mut gt = record.ground_truth();
    gt.truncate(1);
    let synonym = gt[0].clone();
    let synonym =
        affordance_grpo::parser::GroundingEntry::new(synonym.bbox, synonym.point, "open").unwrap();
    let partial = render_response(&StructuredResponse::new("t", "r", vec![synonym]).unwrap());
    let b = total_reward(&partial, &record, &lexicon(), &cfg);
    assert_eq!(b.get(Component::Recognition), Some(1.0));
    assert_eq!(b.get(Component::BoxNum), Some(0.0));
    assert_eq!(b.total, 6.0);
}

#[test]
fn unknown_label_is_flagged_not_fatal() {
    let m = rasterize_box(&BoundingBox::new(0, 0, 3, 3).unwrap(), 8, 8).unwrap();
    let record = build_record(
        "r",
        "r.jpg",
        "x",
        &[LabeledMask {
            affordance: "openable".into(),
            mask_path: "m.pgm".into(),
            mask: m,
        }],
    )
    .unwrap();
    let mut gt = record.ground_truth();
    gt[0] = affordance_grpo::parser::GroundingEntry::new(gt[0].bbox, gt[0].point, "zzz").unwrap();
    let text = render_response(&StructuredResponse::new("t", "r", gt).unwrap());
    let b = total_reward(&text, &record, &lexicon(), &RewardConfig::default());
    assert_eq!(b.get(Component::Recognition), Some(0.0));
    assert!(!b.flags.is_empty());
}
