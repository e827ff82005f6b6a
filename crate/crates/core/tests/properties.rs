use proptest::prelude::*;
use vtl_core::corpus::{synth_document, LayoutPlan};
use vtl_core::seed::rng_from_seed;
use vtl_core::tasks::{build_task, masked_count, prompt_words, sample_mask_spans, TaskConfig, TaskKind};
use vtl_core::vocab::{decode_mixed, encode_mixed, parse_layout_groups};
use vtl_core::{BBox, LayoutQuantizer, PatchGrid, Vocabulary};

fn unit_box() -> impl Strategy<Value = BBox> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64)
        .prop_filter("not the no-location box", |&(a, b, c, d)| a.max(b) > 0.0 || c.max(d) > 0.0)
        .prop_map(|(a, b, c, d)| BBox::new(a.min(b), c.min(d), a.max(b), c.max(d)).unwrap())
}

fn small_vocab(seed: u64) -> (Vocabulary, vtl_core::corpus::Document) {
    let doc = synth_document(seed as usize, seed, &LayoutPlan::default(), 64, 64, false).unwrap();
    // Drop every third word so the byte fallback is exercised too.
    let text: Vec<String> = doc.text().split_whitespace().step_by(3).map(String::from).collect();
    let v = Vocabulary::build([text.join(" "), prompt_words("Synthetic").join(" ")], 100, 500, 30_000).unwrap();
    (v, doc)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quantize_round_trip_is_within_half_a_bucket(b in unit_box(), g in 1u32..2000) {
        let q = LayoutQuantizer::new(g).unwrap();
        let back = q.dequantize(q.quantize(&b).unwrap()).unwrap();
        for (x, y) in b.to_array().iter().zip(back.to_array()) {
            prop_assert!((x - y).abs() <= 0.5 / g as f64 + 1e-12);
        }
    }

    #[test]
    fn patch_index_is_total_and_holds_the_center(b in unit_box(), rows in 1usize..20, cols in 1usize..20) {
        let g = PatchGrid::new(rows * 4, cols * 4, 4).unwrap();
        let i = g.patch_index_of(&b).unwrap();
        prop_assert!(i < g.len());
        let c = g.cell_of_index(i);
        let (cx, cy) = b.center();
        let inside = |v: f64, k: u32, n: usize| {
            let lo = k as f64 / n as f64;
            let hi = (k + 1) as f64 / n as f64;
            v >= lo && (v < hi || (k as usize == n - 1 && v <= 1.0))
        };
        prop_assert!(inside(cx, c.col, cols) && inside(cy, c.row, rows));
    }

    #[test]
    fn spans_are_sorted_disjoint_and_exact(m in 1usize..300, ratio in 0.01..0.99f64, mean in 1.0..8.0f64, seed: u64) {
        let spans = sample_mask_spans(m, ratio, mean, &mut rng_from_seed(seed));
        prop_assert_eq!(spans.iter().map(|s| s.len()).sum::<usize>(), masked_count(ratio, m));
        for s in &spans {
            prop_assert!(!s.is_empty() && s.end <= m);
        }
        for w in spans.windows(2) {
            prop_assert!(w[0].end <= w[1].start);
        }
    }

    #[test]
    fn builder_outputs_parse(seed in 0u64..10_000, kind in 0usize..3, ratio in 0.05..0.95f64) {
        let (v, doc) = small_vocab(seed);
        let kind = [TaskKind::JointTextLayout, TaskKind::LayoutModeling, TaskKind::VisualTextRecognition][kind];
        let cfg = TaskConfig { ratio_joint: ratio, ratio_layout: ratio, ratio_visual_text: ratio, ..Default::default() };
        let ex = build_task(&doc, &v, kind, &cfg, seed).unwrap();
        parse_layout_groups(&encode_mixed(&ex.input), &v).unwrap();
        parse_layout_groups(&encode_mixed(ex.target_items().unwrap()), &v).unwrap();
    }

    #[test]
    fn decode_then_encode_is_identity(seed in 0u64..1000, picks in prop::collection::vec(any::<prop::sample::Index>(), 0..64)) {
        let (v, _) = small_vocab(seed);
        let ids: Vec<u32> = picks.iter().map(|p| p.index(v.len()) as u32).collect();
        prop_assert_eq!(encode_mixed(&decode_mixed(&ids, &v).unwrap()), ids);
    }
}
