//! Regenerates the bundled demo dataset under `demo/`.
//!
//! ```text
//! cargo run -p murate-cli --example make_demo -- demo
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;

use murate::corpus::save_corpus;
use murate::jsonl;
use murate::raters::RaterScoreRecord;
use murate::synth::{random_pairs, simulate_raters, SyntheticCorpus, SyntheticWorld, WorldOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;
const N_DOCS: usize = 500;
const N_PAIRS: usize = 3_000;
const N_RATERS: usize = 4;
const NOISE: f64 = 0.3;

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let world = SyntheticWorld::new(WorldOptions::default(), &mut rng);
    let docs = SyntheticCorpus::generate(&world, N_DOCS, "demo", &mut rng)?;
    let scores = simulate_raters(&docs, N_RATERS, NOISE, &mut rng);
    let pairs = random_pairs(N_DOCS, N_PAIRS, &mut rng);

    save_corpus(&docs.corpus, &dir.join("corpus.jsonl"))?;
    for r in 0..N_RATERS {
        let id = format!("rater{r}");
        let mine: Vec<&RaterScoreRecord> = scores.iter().filter(|s| s.rater_id == id).collect();
        jsonl::write(&dir.join(format!("{id}.jsonl")), mine)?;
    }
    let mut list = String::from("# doc_a\tdoc_b\n");
    for (a, b) in pairs {
        writeln!(list, "{}\t{}", docs.id(a), docs.id(b))?;
    }
    std::fs::write(dir.join("pairs.tsv"), list)?;
    let mut quality = String::new();
    for (i, q) in docs.qualities.iter().enumerate() {
        writeln!(quality, "{}\t{q}", docs.id(i))?;
    }
    std::fs::write(dir.join("quality.tsv"), quality)?;
    println!("wrote {N_DOCS} documents, {N_RATERS} rater files and {N_PAIRS} pairs to {}", dir.display());
    Ok(())
}
