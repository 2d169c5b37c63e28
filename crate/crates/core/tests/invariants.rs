use std::collections::HashMap;

use clarify_core::analysis::{cosine, expand_seed_lexicon, ngram_frequencies, tokenize, EmbeddingStore, TokenizerConfig};
use clarify_core::metrics::{accuracy, macro_f1, resolution_rate, routing_share, AbstainPolicy};
use clarify_core::parse::{parse_category_reply, CategoryReply};
use clarify_core::prompts::{render, Bindings, TemplateId};
use clarify_core::{snap_score, GroundTruth, MissingInfoCategory, RouteKind, ScoreLevel};
use proptest::prelude::*;

fn level() -> impl Strategy<Value = ScoreLevel> {
    prop_oneof![Just(ScoreLevel::False), Just(ScoreLevel::Abstain), Just(ScoreLevel::True)]
}

fn truth() -> impl Strategy<Value = GroundTruth> {
    prop_oneof![Just(GroundTruth::False), Just(GroundTruth::True)]
}

fn category() -> impl Strategy<Value = MissingInfoCategory> {
    proptest::sample::select(MissingInfoCategory::ALL.to_vec())
}

// Confusion-matrix oracle: abstention is its own predicted label that never
// equals a gold class.
fn oracle_f1(pairs: &[(Option<bool>, bool)]) -> f64 {
    let mut f1s = Vec::new();
    for class in [false, true] {
        let tp = pairs.iter().filter(|(p, t)| *p == Some(class) && *t == class).count() as f64;
        let fp = pairs.iter().filter(|(p, t)| *p == Some(class) && *t != class).count() as f64;
        let fn_ = pairs.iter().filter(|(p, t)| *p != Some(class) && *t == class).count() as f64;
        if tp + fp + fn_ == 0.0 {
            continue;
        }
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        f1s.push(if p + r > 0.0 { 200.0 * p * r / (p + r) } else { 0.0 });
    }
    f1s.iter().sum::<f64>() / f1s.len() as f64
}

fn as_opt(l: ScoreLevel) -> Option<bool> {
    match l {
        ScoreLevel::False => Some(false),
        ScoreLevel::True => Some(true),
        ScoreLevel::Abstain => None,
    }
}

proptest! {
    #[test]
    fn snapping_is_total_on_unit_interval(x in 0.0f64..=1.0) {
        let v = snap_score(x).unwrap().value();
        prop_assert!(v == 0.0 || v == 0.5 || v == 1.0);
        prop_assert!((v - x).abs() <= 0.5);
        prop_assert_eq!(snap_score(x).unwrap(), snap_score(x).unwrap());
    }

    #[test]
    fn snapping_rejects_outside_values(x in prop_oneof![-1e6f64..-1e-9, (1.0f64 + 1e-9)..1e6]) {
        prop_assert!(snap_score(x).is_err());
    }

    #[test]
    fn snapping_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(snap_score(lo).unwrap().value() <= snap_score(hi).unwrap().value());
    }

    #[test]
    fn category_letters_round_trip(c in category()) {
        prop_assert_eq!(MissingInfoCategory::from_letter(c.letter()).unwrap(), c);
    }

    #[test]
    fn category_reply_round_trips(
        question in "[A-Z][a-z]{1,8}( [a-z0-9]{1,8}){0,8}\\?",
        cats in proptest::sample::subsequence(MissingInfoCategory::ALL.to_vec(), 1..=3)
            .prop_shuffle(),
    ) {
        let reply = CategoryReply { question, categories: cats };
        prop_assert_eq!(parse_category_reply(&reply.to_reply()).unwrap(), reply);
    }

    #[test]
    fn render_is_injective_in_statement(a in "[ -~]{1,40}", b in "[ -~]{1,40}") {
        prop_assume!(a != b);
        for id in [TemplateId::CategoryQuestion, TemplateId::VeracityEnabled, TemplateId::GenericQuestion] {
            let ra = render(id, &Bindings::new().statement(a.clone())).unwrap();
            let rb = render(id, &Bindings::new().statement(b.clone())).unwrap();
            prop_assert_ne!(ra, rb);
        }
    }

    #[test]
    fn render_never_rescans_bound_values(s in "[a-z{}]{0,10}\\{question\\}[a-z{}]{0,10}") {
        let out = render(TemplateId::VeracityEnabled, &Bindings::new().statement(s.clone())).unwrap();
        prop_assert!(out.contains(&s));
    }

    #[test]
    fn metrics_match_oracle(pairs in proptest::collection::vec((level(), truth()), 1..60)) {
        let preds: Vec<ScoreLevel> = pairs.iter().map(|p| p.0).collect();
        let truths: Vec<GroundTruth> = pairs.iter().map(|p| p.1).collect();
        let flat: Vec<(Option<bool>, bool)> = pairs.iter().map(|(p, t)| (as_opt(*p), t.as_bool())).collect();
        let got = macro_f1(&preds, &truths, AbstainPolicy::AbstainAsError).unwrap();
        prop_assert!((got - oracle_f1(&flat)).abs() <= 1e-9);
        let correct = flat.iter().filter(|(p, t)| *p == Some(*t)).count() as f64;
        let acc = accuracy(&preds, &truths, AbstainPolicy::AbstainAsError).unwrap();
        prop_assert!((acc - 100.0 * correct / flat.len() as f64).abs() <= 1e-9);
        let resolved: Vec<(Option<bool>, bool)> = flat.iter().copied().filter(|(p, _)| p.is_some()).collect();
        match macro_f1(&preds, &truths, AbstainPolicy::ResolvedOnly) {
            Ok(v) => prop_assert!((v - oracle_f1(&resolved)).abs() <= 1e-9),
            Err(_) => prop_assert!(resolved.is_empty()),
        }
        let rr = resolution_rate(&preds).unwrap();
        prop_assert!((rr - 100.0 * resolved.len() as f64 / flat.len() as f64).abs() <= 1e-9);
        prop_assert!((0.0..=100.0).contains(&got));
    }

    #[test]
    fn metrics_are_permutation_invariant(
        pairs in proptest::collection::vec((level(), truth()), 1..40),
        seed in any::<u64>(),
    ) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
        let split = |v: &[(ScoreLevel, GroundTruth)]| -> (Vec<ScoreLevel>, Vec<GroundTruth>) {
            (v.iter().map(|p| p.0).collect(), v.iter().map(|p| p.1).collect())
        };
        let (p1, t1) = split(&pairs);
        let (p2, t2) = split(&shuffled);
        let a = macro_f1(&p1, &t1, AbstainPolicy::AbstainAsError).unwrap();
        let b = macro_f1(&p2, &t2, AbstainPolicy::AbstainAsError).unwrap();
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn resolved_only_ignores_added_abstentions(
        pairs in proptest::collection::vec((prop_oneof![Just(ScoreLevel::False), Just(ScoreLevel::True)], truth()), 1..30),
        extra in proptest::collection::vec(truth(), 0..30),
    ) {
        let preds: Vec<ScoreLevel> = pairs.iter().map(|p| p.0).collect();
        let truths: Vec<GroundTruth> = pairs.iter().map(|p| p.1).collect();
        let base = macro_f1(&preds, &truths, AbstainPolicy::ResolvedOnly).unwrap();
        let mut p2 = preds.clone();
        let mut t2 = truths.clone();
        for t in &extra {
            p2.push(ScoreLevel::Abstain);
            t2.push(*t);
        }
        let with = macro_f1(&p2, &t2, AbstainPolicy::ResolvedOnly).unwrap();
        prop_assert!((base - with).abs() <= 1e-9);
        let aae = macro_f1(&p2, &t2, AbstainPolicy::AbstainAsError).unwrap();
        prop_assert!(aae <= with + 1e-9 || extra.is_empty());
    }

    #[test]
    fn routing_overall_is_weighted_mean(
        records in proptest::collection::vec((category(), any::<bool>()), 1..80),
    ) {
        let recs: Vec<(MissingInfoCategory, RouteKind)> = records
            .iter()
            .map(|&(c, u)| (c, if u { RouteKind::UserQuery } else { RouteKind::WebRetrieval }))
            .collect();
        let share = routing_share(&recs);
        let overall = share.overall.unwrap();
        let weighted: f64 = share.per_category.values().map(|t| t.percent * t.total as f64).sum::<f64>()
            / recs.len() as f64;
        prop_assert!((weighted - overall.percent).abs() <= 1e-9);
        prop_assert_eq!(share.per_category.values().map(|t| t.total).sum::<usize>(), recs.len());
    }

    #[test]
    fn ngram_counts_match_brute_force(
        docs in proptest::collection::vec("[a-c ,.]{0,30}", 0..12),
        n in 1usize..=2,
    ) {
        let cfg = TokenizerConfig::default();
        let table = ngram_frequencies(&docs, n, usize::MAX, &cfg).unwrap();
        let mut expect: HashMap<String, usize> = HashMap::new();
        for d in &docs {
            let toks = tokenize(d, &cfg);
            for i in 0..toks.len().saturating_sub(n - 1) {
                *expect.entry(toks[i..i + n].join(" ")).or_default() += 1;
            }
        }
        prop_assert_eq!(table.entries.len(), expect.len());
        for (term, c) in &table.entries {
            prop_assert_eq!(expect.get(term), Some(c));
        }
        prop_assert_eq!(table.total_grams, expect.values().sum::<usize>());
        for w in table.entries.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
    }

    #[test]
    fn lexicon_grows_as_threshold_falls(
        vecs in proptest::collection::vec(proptest::collection::vec(-1.0f32..1.0, 3), 2..20),
        t1 in 0.0f64..=1.0,
        t2 in 0.0f64..=1.0,
        scale in 0.1f32..10.0,
    ) {
        let mut store = EmbeddingStore::new(3, true);
        let mut scaled = EmbeddingStore::new(3, true);
        for (i, v) in vecs.iter().enumerate() {
            store.insert(&format!("w{i}"), v).unwrap();
            let s: Vec<f32> = v.iter().map(|x| x * scale).collect();
            scaled.insert(&format!("w{i}"), &s).unwrap();
        }
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let big = expand_seed_lexicon(&["w0"], &store, lo).unwrap();
        let small = expand_seed_lexicon(&["w0"], &store, hi).unwrap();
        for w in small.words() {
            prop_assert!(big.contains(w));
        }
        // Independent oracle on the membership rule.
        let seed = store.get("w0").unwrap().to_vec();
        for (i, v) in vecs.iter().enumerate().skip(1) {
            let name = format!("w{i}");
            let dot: f64 = v.iter().zip(&seed).map(|(a, b)| *a as f64 * *b as f64).sum();
            let na: f64 = v.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
            let nb: f64 = seed.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
            let sim = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
            prop_assert!((sim - cosine(v, &seed)).abs() < 1e-9);
            if (sim - lo).abs() > 1e-6 {
                prop_assert_eq!(big.contains(&name), sim > lo);
            }
        }
        let scaled_lex = expand_seed_lexicon(&["w0"], &scaled, lo).unwrap();
        for e in &big.expanded {
            let other = scaled_lex.expanded.iter().find(|x| x.word == e.word);
            if let Some(o) = other {
                prop_assert!((o.similarity - e.similarity).abs() < 1e-5);
            } else {
                prop_assert!((e.similarity - lo).abs() < 1e-5);
            }
        }
    }
}
