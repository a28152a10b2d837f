use std::collections::BTreeMap;

use proptest::prelude::*;

use tgs_core::data::{build_srp, forge, gen_scenes, BBox, ForgeConfig, GenConfig, Scene, SrpConfig, Task};
use tgs_core::metrics::{acc_at_iou, audit_srp, iou, rouge_l, token_f1, PredRecord};
use tgs_core::model::{Model, ModelConfig};
use tgs_core::train::{lr_schedule, run_stage, stage_schedule, DatasetSpec, LrPreset, StepId, TrainLog};

fn bbox() -> impl Strategy<Value = BBox> {
    (0i64..500, 0i64..500, 1i64..300, 1i64..300).prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn words() -> impl Strategy<Value = String> {
    proptest::collection::vec(prop::sample::select(vec!["a", "b", "icon", "menu", "ok", "tab"]), 0..8).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn lr_stays_within_base(total in 1usize..400, ratio in 0.0f64..=1.0, base in 1e-6f64..1.0) {
        let w = (ratio * total as f64).ceil() as usize;
        let mut prev = 0.0;
        for step in 0..total {
            let lr = lr_schedule(step, total, base, ratio).unwrap();
            prop_assert!(lr >= 0.0 && lr <= base * (1.0 + 1e-12));
            if step < w {
                prop_assert!(lr > prev);
            } else if step > w {
                prop_assert!(lr <= prev + 1e-15);
            }
            prev = lr;
        }
    }

    #[test]
    fn text_scores_are_bounded(p in words(), g in words()) {
        for v in [token_f1(&p, &g), rouge_l(&p, &g)] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(token_f1(&p, &g), token_f1(&g, &p));
        prop_assert_eq!(token_f1(&g, &g), 1.0);
    }

    #[test]
    fn accuracy_falls_with_threshold(pairs in proptest::collection::vec((bbox(), bbox()), 1..40), t in 0.0f64..1.0) {
        let recs: Vec<_> = pairs
            .iter()
            .enumerate()
            .map(|(i, (p, g))| PredRecord::grounding(i, &p.to_string(), &g.to_string(), 1000, 1000, None))
            .collect();
        let lo = acc_at_iou(&recs, t / 2.0).unwrap();
        let hi = acc_at_iou(&recs, t).unwrap();
        prop_assert!(hi <= lo);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn srp_pairs_always_audit_clean(seed in any::<u64>()) {
        let scenes = gen_scenes(seed, 4, &GenConfig::default()).unwrap();
        let mut samples = Vec::new();
        for s in &scenes {
            samples.extend(build_srp(s, &SrpConfig::default(), seed).0);
        }
        let map: BTreeMap<u64, Scene> = scenes.into_iter().map(|s| (s.seed, s)).collect();
        let a = audit_srp(&samples, &map).unwrap();
        prop_assert_eq!(a.violations(), 0, "{:?}", a);
    }
}

#[test]
fn overfitting_a_small_set_lowers_the_loss() {
    let corpus = forge(3, &ForgeConfig { screens: 4, ..ForgeConfig::default() }).unwrap().corpus();
    for seed in 0..3u64 {
        let mut model = Model::new(ModelConfig::default(), seed).unwrap();
        let mut c = stage_schedule(StepId::S1, LrPreset::Gentle);
        c.datasets = vec![DatasetSpec::new("TAD", &[Task::Text2BBox], 8)];
        c.lr = 1e-3;
        c.warmup_ratio = 0.0;
        c.steps = Some(20);
        let mut log = TrainLog::default();
        run_stage(&mut model, &c, &corpus, seed, &mut log).unwrap();
        let l = log.losses("1");
        assert_eq!(l.len(), 20);
        let head: f64 = l[..3].iter().sum::<f64>() / 3.0;
        let tail: f64 = l[17..].iter().sum::<f64>() / 3.0;
        assert!(tail < head, "seed {}: loss went from {} to {}", seed, head, tail);
    }
}
