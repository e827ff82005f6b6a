use super::*;
use crate::corpus::{synth_corpus, worked_example_document, LayoutPlan, Raster};
use crate::geometry::BBox;
use crate::seed::rng_from_seed;
use crate::tasks::{build_task, masked_image_with_mask, prompt_words, TaskConfig, TaskKind};
use crate::vocab::Vocabulary;
use alloc::string::String;
use rand::Rng;

fn vocab() -> Vocabulary {
    let docs = synth_corpus(4, 3, &LayoutPlan::default(), 32, 32, false).unwrap();
    let mut words: Vec<String> = docs.iter().flat_map(|d| d.words.iter().map(|w| w.text.clone())).collect();
    words.extend(worked_example_document(32, 32).words.iter().map(|w| w.text.clone()));
    words.extend(prompt_words("Synthetic"));
    Vocabulary::build(words.iter().map(|s| s.as_str()), 128, 500, 10_000).unwrap()
}

fn tiny(v: &Vocabulary) -> Model {
    Model::new(ModelConfig::small(v.len(), 8, 2, [1, 1, 1]), 5).unwrap()
}

fn item(v: &Vocabulary, word: &str, b: [f64; 4]) -> MixedItem {
    v.tokenize_word(word, BBox::from_array(b).unwrap()).remove(0)
}

#[test]
fn patch_embed_basics() {
    let v = vocab();
    let m = tiny(&v);
    let zero = m.patch_embed(&Raster::blank(32, 32), None).unwrap();
    assert_eq!(zero.shape(), (4, 8));
    let b = &m.params.tensors[m.ids.patch_b].value;
    for r in 0..4 {
        assert_eq!(zero.row(r), &b.data[..]);
    }
    let mut img = Raster::blank(32, 32);
    img.data[20 * 32 + 3] = 200;
    let one = m.patch_embed(&img, None).unwrap();
    let changed: Vec<usize> = (0..4).filter(|&r| one.row(r) != zero.row(r)).collect();
    assert_eq!(changed, vec![2]);
    let masked = m.patch_embed(&img, Some(&[false, false, true, false])).unwrap();
    assert_eq!(masked, zero);
    assert!(matches!(m.patch_embed(&Raster::blank(30, 32), None), Err(Error::InvalidGrid(_))));
}

#[test]
fn fusion_counts_distinct_claims() {
    let v = vocab();
    let m = tiny(&v);
    let grid = PatchGrid::new(32, 32, 16).unwrap();
    let patches = m.patch_embed(&Raster::blank(32, 32), None).unwrap();
    let a = item(&v, "Ship", [0.1, 0.1, 0.2, 0.2]);
    let b = item(&v, "Date", [0.6, 0.6, 0.7, 0.7]);
    let c = item(&v, "to", [0.3, 0.1, 0.4, 0.2]);
    let e = m.fuse_vision_text(&[a.clone(), b.clone()], &patches, &grid).unwrap();
    assert_eq!(e.len(), 4);
    assert_eq!(e.kinds[2..], [InputKind::Patch(1), InputKind::Patch(2)]);
    let e = m.fuse_vision_text(&[a.clone(), c], &patches, &grid).unwrap();
    assert_eq!(e.len(), 5);
    let prompt = v.tokenize_text("Layout Modeling.");
    let mut items = prompt.clone();
    items.push(a);
    let e = m.fuse_vision_text(&items, &patches, &grid).unwrap();
    assert_eq!(e.len(), prompt.len() + 1 + 3);
    assert!(e.cells[..prompt.len()].iter().all(|c| c.is_none()));
}

#[test]
fn zero_patches_leave_text_unchanged() {
    let v = vocab();
    let m = tiny(&v);
    let grid = PatchGrid::new(32, 32, 16).unwrap();
    let items = [item(&v, "Ship", [0.1, 0.1, 0.2, 0.2]), item(&v, "Date", [0.6, 0.6, 0.7, 0.7])];
    let e = m.fuse_vision_text(&items, &Mat::zeros(4, 8), &grid).unwrap();
    let table = &m.params.tensors[m.ids.embed].value;
    for (r, it) in items.iter().enumerate() {
        assert_eq!(e.vectors.row(r), table.row(it.id as usize));
    }
}

#[test]
fn encoder_ignores_patch_order() {
    let v = vocab();
    let m = tiny(&v);
    let doc = &synth_corpus(1, 2, &LayoutPlan::default(), 64, 64, false).unwrap()[0];
    let items: Vec<MixedItem> = doc.words.iter().flat_map(|w| v.tokenize_word(&w.text, w.bbox)).collect();
    let grid = PatchGrid::new(64, 64, 16).unwrap();
    let patches = m.patch_embed(&doc.image, None).unwrap();
    let e = m.fuse_vision_text(&items, &patches, &grid).unwrap();
    let out = m.encode(&e).unwrap();
    assert_eq!(out.shape(), (e.len(), 8));

    let t = items.len();
    let mut perm = e.clone();
    let n = e.len();
    for i in t..n {
        let j = n - 1 - (i - t);
        perm.vectors.row_mut(i).copy_from_slice(e.vectors.row(j));
        perm.cells[i] = e.cells[j];
        perm.kinds[i] = e.kinds[j];
    }
    let out2 = m.encode(&perm).unwrap();
    for r in 0..t {
        for (a, b) in out.row(r).iter().zip(out2.row(r)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    for i in t..n {
        let j = n - 1 - (i - t);
        for (a, b) in out.row(j).iter().zip(out2.row(i)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_layer_encoder_normalizes() {
    let v = vocab();
    let mut cfg = ModelConfig::small(v.len(), 8, 2, [1, 1, 1]);
    cfg.enc_layers = 0;
    let (params, ids) = Parameters::init(&cfg, 1).unwrap();
    let m = Model { config: cfg, params, ids };
    let x = Mat::from_vec(2, 8, (0..16).map(|i| i as f64 - 4.0).collect());
    let e = EncoderInput { vectors: x.clone(), cells: vec![None, None], kinds: vec![InputKind::Item(0); 2] };
    let out = m.encode(&e).unwrap();
    for r in 0..2 {
        let ms: f64 = x.row(r).iter().map(|a| a * a).sum::<f64>() / 8.0;
        for (o, a) in out.row(r).iter().zip(x.row(r)) {
            assert!((o - a / libm::sqrt(ms + 1e-6)).abs() < 1e-12);
        }
    }
}

#[test]
fn decoder_is_causal_and_tied() {
    let v = vocab();
    let m = tiny(&v);
    let doc = worked_example_document(32, 32);
    let items: Vec<MixedItem> = doc.words.iter().flat_map(|w| v.tokenize_word(&w.text, w.bbox)).collect();
    let enc = m.encode_items(&items, &doc.image, None).unwrap();
    let prefix = [v.pad(), 5, 6, 7];
    let a = m.decode_text_layout(&enc, &prefix).unwrap();
    assert_eq!(a.shape(), (4, v.len()));
    let b = m.decode_text_layout(&enc, &[v.pad(), 5, 6, 9]).unwrap();
    assert_eq!(a.row(2), b.row(2));
    assert_ne!(a.row(3), b.row(3));
    let c = m.decode_text_layout(&enc, &[v.pad(), 5, 8, 7]).unwrap();
    assert_eq!(a.row(0), c.row(0));
    assert_eq!(a.row(1), c.row(1));
    assert_ne!(a.row(2), c.row(2));
    let long = vec![v.pad(); m.config.max_target_len + 1];
    assert!(matches!(m.decode_text_layout(&enc, &long), Err(Error::Length { .. })));
    // the output projection is the embedding tensor itself
    let names: Vec<&str> = m.params.tensors.iter().map(|t| t.name.as_str()).collect();
    assert!(!names.iter().any(|n| n.contains("lm_head") || n.contains("out_proj")));
}

#[test]
fn vision_decoder_reads_characters() {
    let v = vocab();
    let m = tiny(&v);
    let doc = worked_example_document(32, 32);
    let items: Vec<MixedItem> = doc.words.iter().flat_map(|w| v.tokenize_word(&w.text, w.bbox)).collect();
    let grid = PatchGrid::new(32, 32, 16).unwrap();
    let mask = [true, false, true, true];
    let enc = m.encode_items(&items, &doc.image, Some(&mask)).unwrap();
    let with = m.decode_vision(&enc, &items, &mask, &grid).unwrap();
    assert_eq!(with.shape(), (4, 256));
    let without = m.decode_vision(&enc, &[], &mask, &grid).unwrap();
    assert_ne!(with, without);
    let flipped = m.decode_vision(&enc, &items, &[false, false, true, true], &grid).unwrap();
    assert_eq!(flipped.rows, 4);
    assert_ne!(flipped, with);
    assert!(matches!(m.decode_vision(&enc, &items, &[true], &grid), Err(Error::Shape(_))));

    let mut cfg = m.config.clone();
    cfg.char_memory = false;
    let ablated = Model { config: cfg, ..m.clone() };
    assert_ne!(ablated.decode_vision(&enc, &items, &mask, &grid).unwrap(), with);
}

#[test]
fn char_entries_positions() {
    let v = vocab();
    let items = v.tokenize_word("\u{e9}x", BBox::new(0.0, 0.2, 0.3, 0.4).unwrap());
    let ch = char_entries(&items, v.len());
    assert_eq!(ch.len(), 3);
    assert_eq!(ch[0].byte, 0xc3);
    assert_eq!(ch[2].byte, b'x');
    assert!((ch[2].x - 0.25).abs() < 1e-12);
    assert!((ch[0].y - 0.3).abs() < 1e-12);
    assert!(char_entries(&v.tokenize_text("Layout"), v.len()).is_empty());
}

#[test]
fn text_loss_cases() {
    let n = 300;
    let uniform = Mat::zeros(2, n);
    let l = loss_text_layout(&uniform, &[3, 4], 0).unwrap();
    assert!((l - libm::log(n as f64)).abs() < 1e-12);
    let mut sharp = Mat::zeros(1, n);
    sharp.data[7] = 100.0;
    assert!(loss_text_layout(&sharp, &[7], 0).unwrap() < 1e-30);
    assert!(matches!(loss_text_layout(&Mat::zeros(1, n), &[0], 0), Err(Error::EmptyTarget)));
    assert!(matches!(loss_text_layout(&Mat::zeros(0, n), &[], 0), Err(Error::EmptyTarget)));

    // two tokens over a 3-way vocabulary, by hand
    let logits = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 0.5, 0.5, -1.0]);
    let e = libm::exp;
    let l0 = -libm::log(e(3.0) / (e(1.0) + e(2.0) + e(3.0)));
    let l1 = -libm::log(e(0.5) / (e(0.5) + e(0.5) + e(-1.0)));
    let l = loss_text_layout(&logits, &[2, 1], 99).unwrap();
    assert!((l - (l0 + l1) / 2.0).abs() < 1e-10);
}

#[test]
fn vision_loss_cases() {
    let t = Mat::filled(4, 3, 1.0);
    assert_eq!(loss_vision(&t, &t, &[true; 4]).unwrap(), 0.0);
    assert_eq!(loss_vision(&Mat::zeros(4, 3), &t, &[true; 4]).unwrap(), 1.0);
    let mut p = t.clone();
    p.row_mut(1).iter_mut().for_each(|x| *x = 5.0);
    assert_eq!(loss_vision(&p, &t, &[true, false, true, false]).unwrap(), 0.0);
    assert!(matches!(loss_vision(&t, &t, &[false; 4]), Err(Error::NoSupport)));
}

#[test]
fn argmax_prefers_lowest_and_is_scale_invariant() {
    let row = [0.5, 2.0, -1.0, 2.0];
    assert_eq!(argmax(&row), 1);
    let mut rng = rng_from_seed(4);
    for _ in 0..200 {
        let r: Vec<f64> = (0..20).map(|_| (rng.gen_range(0..5) as f64) - 2.0).collect();
        let s = rng.gen_range(0.01..100.0);
        let scaled: Vec<f64> = r.iter().map(|x| x * s).collect();
        assert_eq!(argmax(&r), argmax(&scaled));
    }
}

#[test]
fn greedy_respects_max_len() {
    let v = vocab();
    let m = tiny(&v);
    let doc = worked_example_document(32, 32);
    let items: Vec<MixedItem> = doc.words.iter().flat_map(|w| v.tokenize_word(&w.text, w.bbox)).collect();
    let enc = m.encode_items(&items, &doc.image, None).unwrap();
    for max in [1, 3, 7] {
        let out = m.greedy_generate(&enc, v.pad(), v.eos(), max).unwrap();
        assert!(out.len() <= max);
        assert_eq!(out, m.greedy_generate(&enc, v.pad(), v.eos(), max).unwrap());
    }
}

#[test]
fn rigged_eos_generates_nothing() {
    let v = vocab();
    let mut m = tiny(&v);
    let doc = worked_example_document(32, 32);
    let items: Vec<MixedItem> = doc.words.iter().flat_map(|w| v.tokenize_word(&w.text, w.bbox)).collect();
    // the final decoder state becomes all ones, which only the eos row rewards
    let layer = m.ids.dec[0];
    let t = &mut m.params.tensors;
    t[m.ids.embed].value.data.iter_mut().for_each(|x| *x = 0.0);
    t[m.ids.embed].value.row_mut(v.eos() as usize).iter_mut().for_each(|x| *x = 1.0);
    for id in [layer.self_attn.wo, layer.cross_attn.wo, layer.ffn.w2] {
        t[id].value.data.iter_mut().for_each(|x| *x = 0.0);
    }
    t[layer.ffn.b2].value.data.iter_mut().for_each(|x| *x = 1.0);
    let enc = m.encode_items(&items, &doc.image, None).unwrap();
    assert!(m.greedy_generate(&enc, v.pad(), v.eos(), 10).unwrap().is_empty());
}

fn fd_check(m: &Model, ex: &crate::tasks::TrainingExample, v: &Vocabulary, samples: usize, seed: u64) -> f64 {
    let (_, g) = m.gradients(ex, v.pad(), v.eos()).unwrap();
    let mut rng = rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    let h = 1e-4;
    for _ in 0..samples {
        let t = rng.gen_range(0..m.params.tensors.len());
        let n = m.params.tensors[t].value.data.len();
        let i = rng.gen_range(0..n);
        let mut p = m.clone();
        p.params.tensors[t].value.data[i] += h;
        let up = p.loss(ex, v.pad(), v.eos()).unwrap();
        p.params.tensors[t].value.data[i] -= 2.0 * h;
        let down = p.loss(ex, v.pad(), v.eos()).unwrap();
        let fd = (up - down) / (2.0 * h);
        let an = g.tensors[t].data[i];
        let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let v = vocab();
    let m = tiny(&v);
    let doc = worked_example_document(32, 32);
    let mut cfg = TaskConfig::default();
    cfg.self_supervised_on_labeled = true;
    let ex = build_task(&doc, &v, TaskKind::LayoutModeling, &cfg, 3).unwrap();
    assert!(fd_check(&m, &ex, &v, 30, 1) < 1e-4);
    let ex = masked_image_with_mask(&doc, &v, vec![true, false, true, true], 0).unwrap();
    assert!(fd_check(&m, &ex, &v, 30, 2) < 1e-4);
}

#[test]
fn char_table_gradient_reachability() {
    let v = vocab();
    let m = tiny(&v);
    let doc = worked_example_document(32, 32);
    let mut cfg = TaskConfig::default();
    cfg.self_supervised_on_labeled = true;
    let text = build_task(&doc, &v, TaskKind::JointTextLayout, &cfg, 3).unwrap();
    let (_, g) = m.gradients(&text, v.pad(), v.eos()).unwrap();
    assert!(g.tensors[m.ids.char_embed].data.iter().all(|&x| x == 0.0));
    assert!(g.tensors[m.ids.placeholder].data.iter().all(|&x| x == 0.0));
    assert!(g.tensors[m.ids.embed].data.iter().any(|&x| x != 0.0));
    let vis = masked_image_with_mask(&doc, &v, vec![true, false, true, true], 0).unwrap();
    let (_, g) = m.gradients(&vis, v.pad(), v.eos()).unwrap();
    assert!(g.tensors[m.ids.char_embed].data.iter().any(|&x| x != 0.0));
    assert!(g.tensors[m.ids.dec_bias].data.iter().all(|&x| x == 0.0));
    assert_eq!(g.tensors.len(), m.params.tensors.len());

    // moving along a zero-gradient coordinate leaves the loss unchanged
    let before = m.loss(&vis, v.pad(), v.eos()).unwrap();
    let mut p = m.clone();
    p.params.tensors[m.ids.dec_bias].value.data[0] += 0.5;
    assert_eq!(p.loss(&vis, v.pad(), v.eos()).unwrap(), before);
}

#[test]
fn loss_is_bit_stable() {
    let v = vocab();
    let doc = worked_example_document(32, 32);
    let ex = masked_image_with_mask(&doc, &v, vec![true, true, false, true], 0).unwrap();
    let a = tiny(&v).loss(&ex, v.pad(), v.eos()).unwrap();
    let b = tiny(&v).loss(&ex, v.pad(), v.eos()).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn runs_at_other_resolutions() {
    let v = vocab();
    let m = tiny(&v);
    let doc = worked_example_document(32, 32);
    let mut cfg = TaskConfig::default();
    cfg.self_supervised_on_labeled = true;
    for res in [32, 48, 64] {
        let d = doc.at_resolution(res, res);
        let ex = build_task(&d, &v, TaskKind::VisualTextRecognition, &cfg, 1).unwrap();
        assert!(m.loss(&ex, v.pad(), v.eos()).unwrap().is_finite());
        let ex = build_task(&d, &v, TaskKind::MaskedImage, &cfg, 1).unwrap();
        assert!(m.loss(&ex, v.pad(), v.eos()).unwrap().is_finite());
    }
}

#[test]
fn patchify_round_trip() {
    let doc = worked_example_document(32, 32);
    let grid = PatchGrid::new(32, 32, 16).unwrap();
    let p = patchify(&doc.image, &grid, None);
    assert_eq!(unpatchify(&p, &grid, 1), doc.image);
}

#[test]
fn sinusoid_is_bounded() {
    let s = sinusoid_2d(0.3, 0.9, 8);
    assert_eq!(s.len(), 8);
    assert!(s.iter().all(|x| x.abs() <= 1.0));
    assert_ne!(sinusoid_2d(0.3, 0.9, 8), sinusoid_2d(0.9, 0.3, 8));
}
