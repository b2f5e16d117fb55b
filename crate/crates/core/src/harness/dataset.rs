//! JSON-lines summarization datasets and the bundled toy corpus.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub source: String,
    pub reference: String,
}

fn field(obj: &serde_json::Map<String, serde_json::Value>, key: &str, line: usize) -> Result<String> {
    match obj.get(key) {
        None => Err(Error::Ingestion { line, reason: format!("missing key \"{key}\"") }),
        Some(serde_json::Value::String(s)) if s.trim().is_empty() => {
            Err(Error::Ingestion { line, reason: format!("empty \"{key}\"") })
        }
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(Error::Ingestion { line, reason: format!("\"{key}\" is not a string") }),
    }
}

/// Parses JSON-lines text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_dataset(text: &str) -> Result<Vec<DatasetRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| Error::Ingestion { line, reason: format!("invalid JSON: {e}") })?;
        let obj = value.as_object().ok_or_else(|| Error::Ingestion { line, reason: "not a JSON object".into() })?;
        let record = DatasetRecord {
            id: field(obj, "id", line)?,
            source: field(obj, "source", line)?,
            reference: field(obj, "reference", line)?,
        };
        if !seen.insert(record.id.clone()) {
            return Err(Error::Ingestion { line, reason: format!("duplicate id \"{}\"", record.id) });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r).expect("record serializes"))?;
    }
    Ok(())
}

const SUBJECTS: [&str; 8] =
    ["farmer", "teacher", "doctor", "captain", "painter", "miner", "baker", "sailor"];
const VERBS: [&str; 6] = ["repaired", "painted", "sold", "carried", "cleaned", "found"];
const OBJECTS: [&str; 8] = ["wagon", "bridge", "boat", "fence", "clock", "lantern", "barrel", "window"];
const PLACES: [&str; 6] = ["village", "harbor", "valley", "market", "forest", "castle"];
const TIMES: [&str; 4] = ["morning", "evening", "winter", "summer"];
const FEELINGS: [&str; 4] = ["proud", "tired", "happy", "worried"];
const WEATHER: [&str; 4] = ["rainy", "windy", "sunny", "quiet"];

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs[rng.gen_range(0..xs.len())]
}

/// Size and generator seed of the bundled toy dataset.
pub const TOY_RECORDS: usize = 500;
pub const TOY_SEED: u64 = 0;

/// The toy dataset used by the CLI when no dataset is given.
pub fn bundled_toy_dataset() -> Vec<DatasetRecord> {
    toy_dataset(TOY_RECORDS, TOY_SEED)
}

/// Templated documents over a small vocabulary. Each reference restates the
/// document's key event, which the document itself states first.
pub fn toy_dataset(n: usize, seed: u64) -> Vec<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let subject = pick(&mut rng, &SUBJECTS);
            let verb = pick(&mut rng, &VERBS);
            let object = pick(&mut rng, &OBJECTS);
            let place = pick(&mut rng, &PLACES);
            let time = pick(&mut rng, &TIMES);
            let feeling = pick(&mut rng, &FEELINGS);
            let key = format!("The {subject} {verb} the old {object} in the {place}.");
            let mut filler = vec![
                format!("It was a {} {time} day.", pick(&mut rng, &WEATHER)),
                format!("The {} watched from the {}.", pick(&mut rng, &SUBJECTS), pick(&mut rng, &PLACES)),
                format!("Later the {subject} felt {feeling}."),
                format!("The {} near the {} was {}.", pick(&mut rng, &OBJECTS), pick(&mut rng, &PLACES), pick(&mut rng, &WEATHER)),
                format!("Everyone in the {place} talked about the {object}."),
            ];
            filler.shuffle(&mut rng);
            filler.truncate(rng.gen_range(3..=5));
            let source = std::iter::once(key.clone()).chain(filler).collect::<Vec<_>>().join(" ");
            let reference = format!("The {subject} {verb} the {object} in the {place}.");
            DatasetRecord { id: format!("toy-{i:04}"), source, reference }
        })
        .collect()
}
