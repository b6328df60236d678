use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use murate::corpus::write_corpus;
use murate::diagnostics::{margin_accuracy_report, tau_matrix, ParallelEval, Report};
use murate::jsonl;
use murate::pairgen::{build_mix, source_id, FileTranslator, PairMixSpec, PseudoTranslator, TranslationProvider};
use murate::raters::{
    combine_preferences, directional_preferences, margin_filter, rater_indicators, read_directional, read_judgments,
    read_rater_scores,
};
use murate::scorer::{checkpoint_bytes, checkpoint_digest, load_checkpoint, load_checkpoint_for, train};
use murate::select::{read_scored, score_corpus_sharded, select_top_fraction, ScoredDocument};
use murate::{load_corpus, LangCode, PairJudgment, PairKind};
use serde::Serialize;

use crate::config::{resolve_seed, training_config, RunConfig, TrainOverrides};
use crate::output::Outputs;

/// Reads a pair list: one pair per line, ids separated by a comma, tab or spaces.
/// Blank lines and lines starting with `#` are skipped.
pub fn read_pair_list(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading pair list {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        match fields.as_slice() {
            [a, b] if a != b => out.push(((*a).to_owned(), (*b).to_owned())),
            [a, _] => bail!("{}:{}: pair compares `{a}` with itself", path.display(), i + 1),
            _ => bail!("{}:{}: expected two document ids, got `{line}`", path.display(), i + 1),
        }
    }
    if out.is_empty() {
        bail!("pair list {} is empty", path.display());
    }
    Ok(out)
}

pub struct AggregateArgs<'a> {
    pub scores: &'a [PathBuf],
    pub directional: &'a [PathBuf],
    pub pairs: &'a Path,
    pub out: &'a Path,
}

pub fn aggregate(args: AggregateArgs<'_>) -> Result<()> {
    if args.scores.is_empty() && args.directional.is_empty() {
        bail!("aggregate needs at least one --scores or --directional file");
    }
    let mut by_doc: HashMap<String, BTreeMap<String, f64>> = HashMap::new();
    let mut raters = BTreeSet::new();
    for path in args.scores {
        for r in read_rater_scores(path)? {
            raters.insert(r.rater_id.clone());
            let slot = by_doc.entry(r.doc_id.clone()).or_default();
            if let Some(prev) = slot.insert(r.rater_id.clone(), r.score) {
                if prev != r.score {
                    bail!("rater `{}` scores `{}` twice ({prev} and {})", r.rater_id, r.doc_id, r.score);
                }
            }
        }
    }
    let mut directional = BTreeMap::new();
    for path in args.directional {
        let records = read_directional(path)?;
        if let Some(r) = records.iter().find(|r| raters.contains(&r.rater_id)) {
            bail!("rater `{}` appears in both scalar and directional files", r.rater_id);
        }
        for (key, p) in directional_preferences(&records)? {
            if directional.insert(key.clone(), p).is_some() {
                bail!("rater `{}` judges {} / {} in more than one directional file", key.0, key.1, key.2);
            }
        }
    }
    let directional_raters: BTreeSet<&str> = directional.keys().map(|k| k.0.as_str()).collect();

    let pairs = read_pair_list(args.pairs)?;
    let empty = BTreeMap::new();
    let mut judgments = Vec::with_capacity(pairs.len());
    for (a, b) in &pairs {
        let sa = by_doc.get(a).unwrap_or(&empty);
        let sb = by_doc.get(b).unwrap_or(&empty);
        let missing: Vec<String> = raters
            .iter()
            .flat_map(|r| {
                [(a, sa), (b, sb)]
                    .into_iter()
                    .filter(move |(_, s)| !s.contains_key(r))
                    .map(move |(d, _)| format!("`{r}` has no score for `{d}`"))
            })
            .collect();
        if !missing.is_empty() {
            bail!("missing rater coverage for pair ({a}, {b}): {}", missing.join(", "));
        }
        let mut values: Vec<f64> = if raters.is_empty() {
            Vec::new()
        } else {
            rater_indicators(sa, sb)?.into_values().collect()
        };
        let (lo, hi, a_is_lo) = if a <= b { (a, b, true) } else { (b, a, false) };
        for r in &directional_raters {
            if let Some(&p) = directional.get(&((*r).to_owned(), lo.clone(), hi.clone())) {
                values.push(if a_is_lo { p } else { 1.0 - p });
            }
        }
        if values.is_empty() {
            bail!("no rater evidence for pair ({a}, {b}): unknown documents or no directional judgment");
        }
        let p_a = combine_preferences(&values)?;
        judgments.push(PairJudgment::new(a, b, 1.0 - p_a, PairKind::English)?);
    }
    tracing::info!(pairs = judgments.len(), scalar_raters = raters.len(), directional_raters = directional_raters.len(), "aggregated");
    let mut out = Outputs::new();
    out.stage(args.out, |w| Ok(jsonl::write_to(w, &judgments)?))?;
    out.commit()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Default,
    Custom([usize; 4]),
}

pub fn parse_ratio(s: &str) -> std::result::Result<Ratio, String> {
    if s == "default" {
        return Ok(Ratio::Default);
    }
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 4 {
        return Err(format!("expected `default` or four counts `e:m:c:p`, got `{s}`"));
    }
    let mut out = [0usize; 4];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.trim().parse().map_err(|_| format!("`{p}` is not a non-negative integer"))?;
    }
    Ok(Ratio::Custom(out))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provider {
    Pseudo(u64),
    File(PathBuf),
}

pub fn parse_provider(s: &str) -> std::result::Result<Provider, String> {
    match s.split_once(':') {
        Some(("pseudo", seed)) => seed
            .parse()
            .map(Provider::Pseudo)
            .map_err(|_| format!("`{seed}` is not an unsigned integer seed")),
        Some(("file", path)) if !path.is_empty() => Ok(Provider::File(PathBuf::from(path))),
        _ => Err(format!("expected `pseudo:<seed>` or `file:<path>`, got `{s}`")),
    }
}

pub struct BuildPairsArgs<'a> {
    pub judgments: &'a Path,
    pub corpus: &'a Path,
    pub languages: Option<&'a str>,
    pub ratio: Ratio,
    pub scale: f64,
    pub provider: &'a Provider,
    pub seed: Option<u64>,
    pub out_pairs: &'a Path,
    pub out_corpus: &'a Path,
}

pub fn build_pairs(args: BuildPairsArgs<'_>, config: &RunConfig) -> Result<()> {
    let names: Vec<String> = match (args.languages, &config.languages) {
        (Some(l), _) => crate::config::split_list(l),
        (None, Some(l)) => l.clone(),
        (None, None) => bail!("no target languages: pass --languages or set `languages` in the config"),
    };
    let languages = names.iter().map(|l| LangCode::registered(l)).collect::<murate::Result<Vec<_>>>()?;
    let seed = resolve_seed(args.seed, config)?;
    let ratio = match args.ratio {
        Ratio::Default => murate::pairgen::DEFAULT_MIX,
        Ratio::Custom(r) => r,
    };
    if !(args.scale.is_finite() && args.scale >= 0.0) {
        bail!("--scale must be a finite non-negative number, got {}", args.scale);
    }
    let spec = PairMixSpec::scaled(ratio, args.scale, languages, seed);
    if spec.total() == 0 {
        bail!("empty mix: ratio {ratio:?} at scale {} requests no pairs", args.scale);
    }
    tracing::info!(
        english = spec.n_english,
        monolingual = spec.n_monolingual,
        crosslingual = spec.n_crosslingual,
        parallel = spec.n_parallel,
        languages = %names.join(","),
        seed,
        "building pair mix"
    );
    let judgments = read_judgments(args.judgments)?;
    let corpus = load_corpus(args.corpus)?;
    let provider: Box<dyn TranslationProvider> = match args.provider {
        Provider::Pseudo(s) => Box::new(PseudoTranslator::new(*s)),
        Provider::File(p) => Box::new(FileTranslator::load(p)?),
    };
    let mix = build_mix(&judgments, &corpus, &spec, provider.as_ref())?;
    let mut out = Outputs::new();
    out.stage(args.out_pairs, |w| Ok(jsonl::write_to(w, &mix.judgments)?))?;
    out.stage(args.out_corpus, |w| Ok(write_corpus(&mix.documents, w)?))?;
    out.commit()
}

#[derive(Serialize)]
struct RunHeader<'a> {
    backend: murate::Backend,
    config: &'a murate::TrainingConfig,
    pairs_read: usize,
    pairs_kept: usize,
}

pub struct TrainArgs<'a> {
    pub pairs: &'a Path,
    pub corpus: &'a Path,
    pub out: &'a Path,
    pub log: Option<&'a Path>,
    pub overrides: TrainOverrides,
}

pub fn train_cmd(args: TrainArgs<'_>, config: &RunConfig) -> Result<()> {
    let (backend, cfg) = training_config(&args.overrides, config)?;
    tracing::info!(
        %backend,
        lambda = cfg.lambda,
        learning_rate = cfg.learning_rate,
        epochs = cfg.epochs,
        batch_size = cfg.batch_size,
        margin = cfg.margin,
        seed = cfg.seed,
        hash_bits = cfg.hash_bits,
        max_tokens_per_doc = cfg.max_tokens_per_doc,
        beta1 = cfg.beta1,
        beta2 = cfg.beta2,
        epsilon = cfg.epsilon,
        "effective training configuration"
    );
    let judgments = read_judgments(args.pairs)?;
    let corpus = load_corpus(args.corpus)?;
    let kept = margin_filter(&judgments, cfg.margin);
    tracing::info!(read = judgments.len(), kept = kept.len(), "margin filter applied");
    if kept.is_empty() {
        bail!("no judgments reach margin {}; nothing to train on", cfg.margin);
    }
    let trained = train(&kept, &corpus, backend, &cfg)?;
    if let Some(last) = trained.log.last() {
        tracing::info!(epoch = last.epoch, mean_loss = last.mean_loss, parallel_gap = ?last.parallel_gap_mean, "training finished");
    }
    let mut out = Outputs::new();
    out.stage_bytes(args.out, &checkpoint_bytes(&trained.state))?;
    if let Some(log) = args.log {
        let header = RunHeader { backend, config: &cfg, pairs_read: judgments.len(), pairs_kept: kept.len() };
        out.stage(log, |w| {
            serde_json::to_writer(&mut *w, &header)?;
            w.write_all(b"\n")?;
            Ok(jsonl::write_to(w, &trained.log)?)
        })?;
    }
    out.commit()
}

pub fn score_cmd(checkpoint: &Path, corpus: &Path, out: &Path, workers: usize, hash_bits: Option<u32>) -> Result<()> {
    let state = match hash_bits {
        Some(b) => load_checkpoint_for(checkpoint, b)?,
        None => load_checkpoint(checkpoint)?,
    };
    let corpus = load_corpus(corpus)?;
    tracing::info!(documents = corpus.len(), workers, backend = %state.backend, "scoring");
    let scored = score_corpus_sharded(&state, &corpus, workers)?;
    let mut o = Outputs::new();
    o.stage(out, |w| Ok(jsonl::write_to(w, &scored)?))?;
    o.commit()
}

pub fn select_cmd(scored: &Path, fraction: f64, global: bool, checkpoint: Option<&Path>, out: &Path) -> Result<()> {
    let docs = read_scored(scored)?;
    let mut manifest = select_top_fraction(&docs, fraction, !global)?;
    if let Some(c) = checkpoint {
        let bytes = std::fs::read(c).with_context(|| format!("reading {}", c.display()))?;
        murate::scorer::state_from_bytes(&bytes).with_context(|| format!("{} is not a valid checkpoint", c.display()))?;
        manifest.checkpoint_hash = checkpoint_digest(&bytes);
    }
    for l in &manifest.languages {
        tracing::info!(lang = %l.lang, selected = l.selected.len(), tokens = l.selected_tokens, budget = l.budget_tokens, "selected");
    }
    let mut o = Outputs::new();
    o.stage_bytes(out, manifest.to_json().as_bytes())?;
    o.commit()
}

/// Parses `label=path`, or a bare path labelled by its file stem.
pub fn labelled_path(s: &str) -> (String, PathBuf) {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => (label.to_owned(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(s);
            let label = p.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_else(|| s.to_owned());
            (label, p)
        }
    }
}

pub fn parallel_report(scored: &Path, lang_x: &str, lang_y: &str) -> Result<Report> {
    let (lx, ly) = (LangCode::registered(lang_x)?, LangCode::registered(lang_y)?);
    if lx == ly {
        bail!("--lang-x and --lang-y must differ");
    }
    let docs = read_scored(scored)?;
    let side = |lang: &LangCode| -> BTreeMap<&str, f64> {
        docs.iter().filter(|d| &d.lang == lang).map(|d| (source_id(&d.doc_id), d.score)).collect()
    };
    let (xs, ys) = (side(&lx), side(&ly));
    let points: Vec<(f64, f64)> = xs.iter().filter_map(|(id, &x)| ys.get(id).map(|&y| (x, y))).collect();
    if points.len() < 2 {
        bail!("{} has {} parallel {lx}/{ly} documents; need at least two", scored.display(), points.len());
    }
    tracing::info!(points = points.len(), "parallel documents matched");
    Ok(Report::ParallelRegression(ParallelEval::new(lx.as_str(), ly.as_str(), points)?))
}

pub fn tau_report(inputs: &[String], lang: Option<&str>) -> Result<Report> {
    if inputs.len() < 2 {
        bail!("tau needs at least two --scored files");
    }
    let lang = lang.map(LangCode::registered).transpose()?;
    let mut files: Vec<(String, Vec<ScoredDocument>)> = Vec::new();
    for s in inputs {
        let (label, path) = labelled_path(s);
        let docs: Vec<ScoredDocument> =
            read_scored(&path)?.into_iter().filter(|d| lang.as_ref().is_none_or(|l| &d.lang == l)).collect();
        if files.iter().any(|(l, _)| l == &label) {
            bail!("duplicate label `{label}`");
        }
        files.push((label, docs));
    }
    let (first_label, first) = &files[0];
    let order: Vec<&str> = first.iter().map(|d| d.doc_id.as_str()).collect();
    let mut sequences = Vec::with_capacity(files.len());
    for (label, docs) in &files {
        let by_id: HashMap<&str, f64> = docs.iter().map(|d| (d.doc_id.as_str(), d.score)).collect();
        if by_id.len() != order.len() || order.iter().any(|id| !by_id.contains_key(id)) {
            bail!("`{label}` and `{first_label}` do not score the same documents");
        }
        sequences.push((label.clone(), order.iter().map(|id| by_id[id]).collect()));
    }
    Ok(Report::TauMatrix(tau_matrix(&sequences)?))
}

pub fn accuracy_report(checkpoint: &Path, corpus: &Path, held_in: &Path, held_out: &Path) -> Result<Report> {
    let state = load_checkpoint(checkpoint)?;
    let corpus = load_corpus(corpus)?;
    let a = read_judgments(held_in)?;
    let b = read_judgments(held_out)?;
    Ok(Report::MarginAccuracy(margin_accuracy_report(&state, &a, &b, &corpus)?))
}

pub fn emit_report(report: &Report, out: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    let mut o = Outputs::new();
    if let Some(path) = csv {
        o.stage(path, |w| report.write_csv(w).map_err(|e| anyhow!(e)))?;
    }
    match out {
        Some(path) => o.stage_bytes(path, report.to_json().as_bytes())?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(report.to_json().as_bytes())?;
        }
    }
    o.commit()
}
