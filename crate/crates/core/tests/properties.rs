use std::collections::{BTreeMap, HashSet};

use murate::corpus::{write_corpus, Corpus, Document, LangCode};
use murate::diagnostics::{kendall_tau, pair_counts, tau_matrix};
use murate::pairgen::{build_mix, source_id, PairMixSpec, PseudoTranslator};
use murate::raters::{aggregate_pair_for, margin_filter, rater_indicators};
use murate::scorer::{checkpoint_bytes, gradient, parallel_loss, pairwise_loss, score, total_loss, train};
use murate::select::{score_corpus, score_corpus_sharded, select_top_fraction, ScoredDocument};
use murate::{Backend, PairJudgment, PairKind, ScorerState, TrainingConfig};
use proptest::prelude::*;

fn en() -> LangCode {
    LangCode::english()
}

fn lang(code: &str) -> LangCode {
    LangCode::registered(code).unwrap()
}

fn rater_map(scores: &[f64]) -> BTreeMap<String, f64> {
    scores.iter().enumerate().map(|(i, &s)| (format!("r{i}"), s)).collect()
}

fn word_corpus(n: usize) -> Corpus {
    let words = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];
    Corpus::from_documents((0..n).map(|i| {
        let text: Vec<&str> = (0..(3 + i % 5)).map(|k| words[(i * 7 + k * 3) % words.len()]).collect();
        Document::new(format!("d{i:03}"), en(), text.join(" ")).unwrap()
    }))
    .unwrap()
}

fn naive_tau(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = xs[i] - xs[j];
            let dy = ys[i] - ys[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tx += 1;
            } else if dy == 0.0 {
                ty += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                c += 1;
            } else {
                d += 1;
            }
        }
    }
    let denom = (((c + d + tx) * (c + d + ty)) as f64).sqrt();
    (denom > 0.0).then(|| (c - d) as f64 / denom)
}

fn scored_docs(scores: &[f64], tokens: &[usize], langs: &[usize]) -> Vec<ScoredDocument> {
    let pool = [en(), lang("de"), lang("ja")];
    scores
        .iter()
        .zip(tokens)
        .zip(langs)
        .enumerate()
        .map(|(i, ((&s, &t), &l))| ScoredDocument {
            doc_id: format!("x{i:03}"),
            lang: pool[l % pool.len()].clone(),
            score: s,
            token_count: t,
        })
        .collect()
}

fn rater_scores() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..6).prop_flat_map(|n| {
        let s = prop::collection::vec(prop_oneof![(-3i32..=3).prop_map(f64::from), -5.0f64..5.0], n);
        (s.clone(), s)
    })
}

proptest! {
    #[test]
    fn aggregation_is_antisymmetric((a, b) in rater_scores()) {
        let ab = aggregate_pair_for("a", "b", &rater_map(&a), &rater_map(&b)).unwrap();
        let ba = aggregate_pair_for("b", "a", &rater_map(&b), &rater_map(&a)).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab.p_b_over_a));
        prop_assert!((ab.p_b_over_a + ba.p_b_over_a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregation_ignores_monotone_rescaling((a, b) in rater_scores(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let f = |v: &[f64]| v.iter().map(|x| scale * x + shift).collect::<Vec<_>>();
        let raw = rater_indicators(&rater_map(&a), &rater_map(&b)).unwrap();
        let moved = rater_indicators(&rater_map(&f(&a)), &rater_map(&f(&b))).unwrap();
        // An affine map can perturb exact ties by rounding; compare only strict orderings.
        for (k, v) in &raw {
            if *v != 0.5 {
                prop_assert_eq!(moved[k], *v);
            }
        }
    }

    #[test]
    fn margin_filter_is_monotone(ps in prop::collection::vec(0.0f64..=1.0, 1..40), m1 in 0.0f64..1.0, m2 in 0.0f64..1.0) {
        let js: Vec<PairJudgment> = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| PairJudgment::new(&format!("a{i}"), &format!("b{i}"), p, PairKind::English).unwrap())
            .collect();
        let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        let loose: HashSet<String> = margin_filter(&js, lo).iter().map(PairJudgment::pair_id).collect();
        let strict: HashSet<String> = margin_filter(&js, hi).iter().map(PairJudgment::pair_id).collect();
        prop_assert!(strict.is_subset(&loose));
    }

    #[test]
    fn pairwise_loss_depends_only_on_difference(sa in -50.0f64..50.0, sb in -50.0f64..50.0, c in -100.0f64..100.0, p in 0.0f64..=1.0) {
        let a = pairwise_loss(sa, sb, p);
        let b = pairwise_loss(sa + c, sb + c, p);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn parallel_loss_bounded_below(sa in -100.0f64..100.0, sb in -100.0f64..100.0) {
        let l = parallel_loss(sa, sb);
        prop_assert!(l >= 2.0 * std::f64::consts::LN_2 - 1e-12);
        prop_assert!((parallel_loss(sa, sb) - parallel_loss(sb, sa)).abs() < 1e-12);
    }

    #[test]
    fn selection_has_minimal_overshoot(
        docs in prop::collection::vec((-5.0f64..5.0, 1usize..50, 0usize..3), 1..60),
        fraction in 0.01f64..=1.0,
    ) {
        let (s, rest): (Vec<f64>, Vec<(usize, usize)>) = docs.into_iter().map(|(a, b, c)| (a, (b, c))).unzip();
        let (t, l): (Vec<usize>, Vec<usize>) = rest.into_iter().unzip();
        let scored = scored_docs(&s, &t, &l);
        let m = select_top_fraction(&scored, fraction, true).unwrap();
        let by_id: BTreeMap<&str, &ScoredDocument> = scored.iter().map(|d| (d.doc_id.as_str(), d)).collect();
        for sel in &m.languages {
            prop_assert!(sel.selected_tokens >= sel.budget_tokens);
            if let Some(last) = sel.selected.last() {
                prop_assert!(sel.selected_tokens - by_id[last.as_str()].token_count < sel.budget_tokens);
            }
            let tokens: usize = sel.selected.iter().map(|id| by_id[id.as_str()].token_count).sum();
            prop_assert_eq!(tokens, sel.selected_tokens);
        }
    }

    #[test]
    fn selection_is_argsort_invariant(
        docs in prop::collection::vec((-5.0f64..5.0, 1usize..50, 0usize..3), 1..60),
        fraction in 0.01f64..=1.0,
        global in any::<bool>(),
    ) {
        let (s, rest): (Vec<f64>, Vec<(usize, usize)>) = docs.into_iter().map(|(a, b, c)| (a, (b, c))).unzip();
        let (t, l): (Vec<usize>, Vec<usize>) = rest.into_iter().unzip();
        let moved: Vec<f64> = s.iter().map(|x| (x * 0.7).exp() * 3.0 - 1.0).collect();
        let a = select_top_fraction(&scored_docs(&s, &t, &l), fraction, !global).unwrap();
        let b = select_top_fraction(&scored_docs(&moved, &t, &l), fraction, !global).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn kendall_fast_path_matches_quadratic(pts in prop::collection::vec((0i32..6, 0i32..6), 2..80)) {
        let xs: Vec<f64> = pts.iter().map(|p| f64::from(p.0)).collect();
        let ys: Vec<f64> = pts.iter().map(|p| f64::from(p.1)).collect();
        let fast = pair_counts(&xs, &ys).unwrap().tau_b();
        let slow = naive_tau(&xs, &ys);
        match (fast, slow) {
            (Some(f), Some(s)) => prop_assert!((f - s).abs() < 1e-12, "{f} vs {s}"),
            (None, None) => {}
            other => prop_assert!(false, "definedness differs: {other:?}"),
        }
    }

    #[test]
    fn tau_matrix_is_symmetric(seqs in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 12), 2..5)) {
        let labelled: Vec<(String, Vec<f64>)> = seqs.into_iter().enumerate().map(|(i, s)| (format!("s{i}"), s)).collect();
        let t = tau_matrix(&labelled).unwrap();
        for i in 0..t.labels.len() {
            prop_assert_eq!(t.values[i][i], 1.0);
            for j in 0..t.labels.len() {
                prop_assert_eq!(t.values[i][j], t.values[j][i]);
                prop_assert!((-1.0..=1.0).contains(&t.values[i][j]));
            }
        }
    }

    #[test]
    fn corpus_round_trips(texts in prop::collection::vec("[a-zé你 ]{0,12}[a-z你]", 1..20)) {
        let corpus = Corpus::from_documents(
            texts.iter().enumerate().map(|(i, t)| Document::new(format!("c{i}"), lang("zh"), t.clone()).unwrap()),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        let dir = tempdir();
        let path = dir.join("c.jsonl");
        std::fs::write(&path, &buf).unwrap();
        let back = murate::load_corpus(&path).unwrap();
        prop_assert_eq!(back.documents(), corpus.documents());
        std::fs::remove_dir_all(dir).unwrap();
    }
}

fn tempdir() -> std::path::PathBuf {
    use std::sync::atomic::{AtomicUsize, Ordering};
    static N: AtomicUsize = AtomicUsize::new(0);
    let dir = std::env::temp_dir().join(format!("murate-prop-{}-{}", std::process::id(), N.fetch_add(1, Ordering::SeqCst)));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn mixed_batch(corpus: &Corpus, seed: u64) -> Vec<PairJudgment> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = corpus.len();
    (0..12)
        .map(|k| {
            let i = rng.gen_range(0..n);
            let j = (i + rng.gen_range(1..n)) % n;
            let (a, b) = (&corpus.documents()[i].id, &corpus.documents()[j].id);
            if k % 3 == 0 {
                PairJudgment::new(a, b, 0.5, PairKind::Parallel).unwrap()
            } else {
                PairJudgment::new(a, b, rng.gen_range(0.0..=1.0), PairKind::English).unwrap()
            }
        })
        .collect()
}

fn randomised_state(backend: Backend, corpus: &Corpus, lambda: f64, seed: u64) -> ScorerState {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x51);
    let config = TrainingConfig { lambda, hash_bits: 10, ..TrainingConfig::for_backend(backend) };
    let mut state = match backend {
        Backend::LatentTable => ScorerState::latent(corpus.iter().map(|d| d.id.clone()).collect(), config).unwrap(),
        Backend::HashedLinear => ScorerState::hashed(config).unwrap(),
    };
    state.params.iter_mut().for_each(|p| *p = rng.gen_range(-1.0..1.0));
    state
}

#[test]
fn gradient_matches_finite_differences() {
    let corpus = word_corpus(15);
    for backend in [Backend::LatentTable, Backend::HashedLinear] {
        for (seed, lambda) in [(1, 0.0), (2, 0.5), (3, 2.0)] {
            let batch = mixed_batch(&corpus, seed);
            let mut state = randomised_state(backend, &corpus, lambda, seed);
            let g = gradient(&batch, &state, &corpus).unwrap();
            let touched: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
            assert!(!touched.is_empty());
            for i in touched.into_iter().chain([g.len() - 1]) {
                let orig = state.params[i];
                state.params[i] = orig + 1e-5;
                let up = total_loss(&batch, &state, &corpus).unwrap();
                state.params[i] = orig - 1e-5;
                let down = total_loss(&batch, &state, &corpus).unwrap();
                state.params[i] = orig;
                let fd = (up - down) / 2e-5;
                assert!((fd - g[i]).abs() <= 1e-6 + 1e-4 * fd.abs().max(g[i].abs()), "{backend} param {i}: {fd} vs {}", g[i]);
            }
        }
    }
}

#[test]
fn build_mix_is_deterministic_and_preserves_labels() {
    let corpus = word_corpus(40);
    let js: Vec<PairJudgment> = (0..30)
        .map(|i| PairJudgment::new(&format!("d{i:03}"), &format!("d{:03}", i + 10), (i % 5) as f64 / 4.0, PairKind::English).unwrap())
        .collect();
    let spec = PairMixSpec::default_ratio(5, vec![lang("ar"), lang("de"), lang("ja")], 7);
    let tp = PseudoTranslator::new(3);
    let a = build_mix(&js, &corpus, &spec, &tp).unwrap();
    let b = build_mix(&js, &corpus, &spec, &tp).unwrap();
    assert_eq!(a.judgments, b.judgments);
    assert_eq!(a.documents.documents(), b.documents.documents());
    let labels: BTreeMap<String, f64> = js.iter().map(|j| (j.pair_id(), j.p_b_over_a)).collect();
    for j in &a.judgments {
        match j.kind {
            PairKind::Parallel => {
                assert_eq!(j.p_b_over_a, 0.5);
                assert_eq!(source_id(&j.doc_a), source_id(&j.doc_b));
            }
            _ => {
                let src = j.source_pair.clone().unwrap_or_else(|| j.pair_id());
                assert_eq!(labels[&src].to_bits(), j.p_b_over_a.to_bits());
            }
        }
        assert!(a.documents.contains(&j.doc_a) && a.documents.contains(&j.doc_b));
    }
}

#[test]
fn sharded_scoring_matches_serial() {
    let corpus = word_corpus(200);
    let mut state = ScorerState::hashed(TrainingConfig { hash_bits: 12, ..Default::default() }).unwrap();
    state.params.iter_mut().enumerate().for_each(|(i, p)| *p = ((i * 37) % 101) as f64 / 50.0 - 1.0);
    let serial = score_corpus(&state, &corpus).unwrap();
    for k in [1, 2, 8] {
        assert_eq!(score_corpus_sharded(&state, &corpus, k).unwrap(), serial);
    }
}

#[test]
fn lambda_is_inert_without_parallel_pairs() {
    let corpus = word_corpus(30);
    let js: Vec<PairJudgment> = (0..29)
        .map(|i| PairJudgment::new(&format!("d{i:03}"), &format!("d{:03}", i + 1), if i % 3 == 0 { 0.0 } else { 1.0 }, PairKind::English).unwrap())
        .collect();
    for backend in [Backend::LatentTable, Backend::HashedLinear] {
        let base = TrainingConfig { epochs: 5, hash_bits: 10, ..TrainingConfig::for_backend(backend) };
        let a = train(&js, &corpus, backend, &TrainingConfig { lambda: 0.0, ..base.clone() }).unwrap();
        let b = train(&js, &corpus, backend, &TrainingConfig { lambda: 0.5, ..base }).unwrap();
        assert_eq!(a.state.params, b.state.params);
        let (ca, cb) = (checkpoint_bytes(&a.state), checkpoint_bytes(&b.state));
        // The stored configs differ in lambda only, so everything after the header block matches.
        assert_eq!(ca[ca.len() - 8 - 24 * a.state.params.len()..ca.len() - 8], cb[cb.len() - 8 - 24 * b.state.params.len()..cb.len() - 8]);
        for d in corpus.iter() {
            assert_eq!(score(&a.state, d).unwrap(), score(&b.state, d).unwrap());
        }
    }
}

#[test]
fn kendall_rejects_constant_input() {
    assert!(kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
}
