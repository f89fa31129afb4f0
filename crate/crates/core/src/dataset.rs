//! ASAP essays and trait scores: prompt metadata, loading and validation,
//! min-max score scaling, and five-fold 60/20/20 splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationIssue};
use crate::tensor::Float;

pub const NUM_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreRange {
    pub min: i64,
    pub max: i64,
}

impl ScoreRange {
    pub const fn new(min: i64, max: i64) -> Self {
        ScoreRange { min, max }
    }

    pub fn contains(&self, score: i64) -> bool {
        (self.min..=self.max).contains(&score)
    }

    pub fn categories(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.min..=self.max
    }
}

impl std::fmt::Display for ScoreRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EssayType {
    Argumentative,
    SourceDependent,
    Narrative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_id: u8,
    pub overall_range: ScoreRange,
    pub trait_range: ScoreRange,
    pub traits: Vec<String>,
    pub essay_type: EssayType,
    /// Essay count in the full released data set.
    pub expected_essays: usize,
}

const ARGUMENTATIVE_TRAITS: &[&str] = &[
    "content",
    "organization",
    "word_choice",
    "sentence_fluency",
    "conventions",
];
const SOURCE_TRAITS: &[&str] = &["content", "prompt_adherence", "language", "narrativity"];
const PROMPT7_TRAITS: &[&str] = &["content", "organization", "style", "conventions"];
const PROMPT8_TRAITS: &[&str] = &[
    "content",
    "organization",
    "voice",
    "word_choice",
    "sentence_fluency",
    "conventions",
];

/// Every trait name used by any prompt, in display order.
pub const ALL_TRAITS: &[&str] = &[
    "content",
    "organization",
    "word_choice",
    "sentence_fluency",
    "conventions",
    "prompt_adherence",
    "language",
    "narrativity",
    "style",
    "voice",
];

impl PromptSpec {
    pub fn new(prompt_id: u8) -> Result<Self> {
        use EssayType::*;
        let (overall, traits_range, traits, kind, count) = match prompt_id {
            1 => ((2, 12), (1, 6), ARGUMENTATIVE_TRAITS, Argumentative, 1783),
            2 => ((1, 6), (1, 6), ARGUMENTATIVE_TRAITS, Argumentative, 1800),
            3 => ((0, 3), (0, 3), SOURCE_TRAITS, SourceDependent, 1726),
            4 => ((0, 3), (0, 3), SOURCE_TRAITS, SourceDependent, 1772),
            5 => ((0, 4), (0, 4), SOURCE_TRAITS, SourceDependent, 1805),
            6 => ((0, 4), (0, 4), SOURCE_TRAITS, SourceDependent, 1800),
            7 => ((0, 30), (0, 6), PROMPT7_TRAITS, Narrative, 1569),
            8 => ((0, 60), (0, 12), PROMPT8_TRAITS, Narrative, 723),
            other => return Err(Error::arg(format!("unknown prompt {other}; expected 1-8"))),
        };
        Ok(PromptSpec {
            prompt_id,
            overall_range: ScoreRange::new(overall.0, overall.1),
            trait_range: ScoreRange::new(traits_range.0, traits_range.1),
            traits: traits.iter().map(|s| s.to_string()).collect(),
            essay_type: kind,
            expected_essays: count,
        })
    }

    pub fn all() -> Vec<PromptSpec> {
        (1..=8)
            .map(|p| PromptSpec::new(p).expect("prompts 1-8 exist"))
            .collect()
    }

    pub fn num_traits(&self) -> usize {
        self.traits.len()
    }

    pub fn has_trait(&self, name: &str) -> bool {
        self.traits.iter().any(|t| t == name)
    }

    /// Score range of a head: `"overall"` or a trait name.
    pub fn range_of(&self, head: &str) -> Result<ScoreRange> {
        if head == OVERALL {
            Ok(self.overall_range)
        } else if self.has_trait(head) {
            Ok(self.trait_range)
        } else {
            Err(Error::config(format!(
                "prompt {} has no trait {head:?}",
                self.prompt_id
            )))
        }
    }

    /// Copy of this prompt with one trait removed.
    pub fn without_trait(&self, name: &str) -> Result<PromptSpec> {
        if !self.has_trait(name) {
            return Err(Error::config(format!(
                "prompt {} has no trait {name:?}",
                self.prompt_id
            )));
        }
        let mut out = self.clone();
        out.traits.retain(|t| t != name);
        Ok(out)
    }
}

pub const OVERALL: &str = "overall";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssayRecord {
    pub essay_id: u64,
    pub prompt_id: u8,
    pub text: String,
    pub overall_score: i64,
    pub trait_scores: BTreeMap<String, i64>,
}

impl EssayRecord {
    /// Gold integer score of a head.
    pub fn score(&self, head: &str) -> Option<i64> {
        if head == OVERALL {
            Some(self.overall_score)
        } else {
            self.trait_scores.get(head).copied()
        }
    }

    pub fn validate(&self, spec: &PromptSpec) -> Vec<ValidationIssue> {
        let mut issues = Vec::new();
        let mut issue = |m: String| {
            issues.push(ValidationIssue {
                essay_id: Some(self.essay_id),
                message: m,
            })
        };
        if !spec.overall_range.contains(self.overall_score) {
            issue(format!(
                "overall score {} outside {}",
                self.overall_score, spec.overall_range
            ));
        }
        for t in &spec.traits {
            match self.trait_scores.get(t) {
                None => issue(format!("missing trait score {t}")),
                Some(s) if !spec.trait_range.contains(*s) => {
                    issue(format!("trait {t} score {s} outside {}", spec.trait_range))
                }
                _ => {}
            }
        }
        for t in self.trait_scores.keys() {
            if !spec.has_trait(t) {
                issue(format!(
                    "unexpected trait {t} for prompt {}",
                    spec.prompt_id
                ));
            }
        }
        issues
    }
}

pub fn normalize_score(score: i64, range: ScoreRange) -> Result<Float> {
    if !range.contains(score) {
        return Err(Error::arg(format!("score {score} outside {range}")));
    }
    if range.max <= range.min {
        return Err(Error::arg(format!("degenerate range {range}")));
    }
    Ok((score - range.min) as Float / (range.max - range.min) as Float)
}

/// Inverse of [`normalize_score`], rounding half away from zero. Values up to
/// 1e-9 outside [0, 1] are clamped.
pub fn denormalize_score(y: Float, range: ScoreRange) -> Result<i64> {
    let tol = 1e-9;
    if !y.is_finite() || y < -tol || y > 1.0 + tol {
        return Err(Error::arg(format!("normalized score {y} outside [0, 1]")));
    }
    let y = y.clamp(0.0, 1.0) as f64;
    let raw = range.min as f64 + y * (range.max - range.min) as f64;
    Ok((raw.round() as i64).clamp(range.min, range.max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextEncoding {
    #[default]
    Utf8,
    Latin1,
}

impl std::str::FromStr for TextEncoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "utf8" | "utf-8" => Ok(TextEncoding::Utf8),
            "latin1" | "latin-1" | "iso-8859-1" => Ok(TextEncoding::Latin1),
            other => Err(Error::config(format!("unknown encoding {other}"))),
        }
    }
}

fn read_text(path: &Path, encoding: TextEncoding) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match encoding {
        TextEncoding::Utf8 => String::from_utf8(bytes).map_err(|e| Error::Format {
            what: "UTF-8 text",
            message: format!("{}: {e}", path.display()),
        }),
        TextEncoding::Latin1 => Ok(bytes.into_iter().map(char::from).collect()),
    }
}

/// One row of the essay TSV, before trait scores are merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsvRow {
    pub essay_id: u64,
    pub essay_set: u8,
    pub essay: String,
    pub domain1_score: i64,
}

/// Parses the tab-separated essay file. Columns are located by header name;
/// any other columns are ignored.
pub fn parse_tsv(content: &str) -> Result<Vec<TsvRow>> {
    let mut lines = content.lines();
    let header = lines.next().ok_or(Error::Format {
        what: "essay TSV",
        message: "empty file".into(),
    })?;
    let cols: Vec<&str> = header
        .trim_start_matches('\u{feff}')
        .split('\t')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Format {
                what: "essay TSV",
                message: format!("missing column {name}"),
            })
    };
    let (ci, cs, ce, cd) = (
        col("essay_id")?,
        col("essay_set")?,
        col("essay")?,
        col("domain1_score")?,
    );
    let need = ci.max(cs).max(ce).max(cd);
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |m: String| Error::Format {
            what: "essay TSV",
            message: format!("line {}: {m}", lineno + 2),
        };
        if fields.len() <= need {
            return Err(bad(format!("expected at least {} columns", need + 1)));
        }
        let int = |i: usize, name: &str| -> Result<i64> {
            fields[i]
                .trim()
                .parse::<i64>()
                .map_err(|_| bad(format!("{name} {:?} is not an integer", fields[i])))
        };
        rows.push(TsvRow {
            essay_id: int(ci, "essay_id")? as u64,
            essay_set: int(cs, "essay_set")? as u8,
            essay: fields[ce].to_string(),
            domain1_score: int(cd, "domain1_score")?,
        });
    }
    Ok(rows)
}

/// Writes the consumed TSV columns back out.
pub fn write_tsv<W: Write>(records: &[EssayRecord], mut out: W) -> Result<()> {
    let io = |e| Error::io("<tsv>", e);
    writeln!(out, "essay_id\tessay_set\tessay\tdomain1_score").map_err(io)?;
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.essay_id, r.prompt_id, r.text, r.overall_score
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Maps a trait column header onto the canonical trait name.
pub fn canonical_trait_name(column: &str) -> Option<&'static str> {
    let key: String = column
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    let name = match key.as_str() {
        "content" | "ideas" | "ideascontent" => "content",
        "organization" | "organisation" => "organization",
        "wordchoice" => "word_choice",
        "sentencefluency" | "fluency" => "sentence_fluency",
        "conventions" | "convention" => "conventions",
        "promptadherence" | "adherence" => "prompt_adherence",
        "language" => "language",
        "narrativity" => "narrativity",
        "style" => "style",
        "voice" => "voice",
        _ => return None,
    };
    Some(name)
}

fn is_id_column(column: &str) -> bool {
    let key: String = column
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    key == "essayid" || key == "id"
}

/// Trait scores keyed by essay id.
pub type TraitTable = HashMap<u64, BTreeMap<String, i64>>;

/// Reads one trait CSV: `essay_id,<trait>,<trait>,...`. Empty cells mean the
/// trait is not scored for that essay.
pub fn parse_trait_csv<R: std::io::Read>(reader: R, table: &mut TraitTable) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = headers.iter().position(is_id_column).ok_or(Error::Format {
        what: "trait CSV",
        message: "no essay_id column".into(),
    })?;
    let trait_cols: Vec<(usize, &'static str)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| canonical_trait_name(h).map(|t| (i, t)))
        .collect();
    for rec in rdr.records() {
        let rec = rec?;
        let id: u64 = rec
            .get(id_col)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Format {
                what: "trait CSV",
                message: format!("bad essay id {:?}", rec.get(id_col)),
            })?;
        let entry = table.entry(id).or_default();
        for (i, name) in &trait_cols {
            let cell = rec.get(*i).unwrap_or_default();
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Format {
                what: "trait CSV",
                message: format!("essay {id}: {name} value {cell:?} is not a number"),
            })?;
            if v.fract() != 0.0 {
                return Err(Error::Format {
                    what: "trait CSV",
                    message: format!("essay {id}: {name} value {cell} is not an integer"),
                });
            }
            entry.insert(name.to_string(), v as i64);
        }
    }
    Ok(())
}

fn trait_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
            .collect();
        files.sort();
        Ok(files)
    } else if path.exists() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "trait file not found"),
        ))
    }
}

/// Essays grouped by prompt.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub prompts: BTreeMap<u8, Vec<EssayRecord>>,
}

impl Dataset {
    pub fn total(&self) -> usize {
        self.prompts.values().map(Vec::len).sum()
    }

    pub fn prompt(&self, id: u8) -> Result<&[EssayRecord]> {
        self.prompts
            .get(&id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::arg(format!("no essays for prompt {id}")))
    }
}

/// Merges TSV rows with trait scores and validates every record against its
/// prompt. All problems are collected into one [`Error::Validation`].
pub fn merge_records(rows: Vec<TsvRow>, traits: &TraitTable) -> Result<Dataset> {
    let mut issues = Vec::new();
    let mut data = Dataset::default();
    let mut seen = BTreeSet::new();
    for row in rows {
        let spec = match PromptSpec::new(row.essay_set) {
            Ok(s) => s,
            Err(_) => {
                issues.push(ValidationIssue {
                    essay_id: Some(row.essay_id),
                    message: format!("essay_set {} is not a prompt 1-8", row.essay_set),
                });
                continue;
            }
        };
        if !seen.insert(row.essay_id) {
            issues.push(ValidationIssue {
                essay_id: Some(row.essay_id),
                message: "duplicate essay id".into(),
            });
            continue;
        }
        let Some(scores) = traits.get(&row.essay_id) else {
            issues.push(ValidationIssue {
                essay_id: Some(row.essay_id),
                message: "absent from trait file".into(),
            });
            continue;
        };
        let trait_scores: BTreeMap<String, i64> = scores
            .iter()
            .filter(|(k, _)| spec.has_trait(k))
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        let rec = EssayRecord {
            essay_id: row.essay_id,
            prompt_id: row.essay_set,
            text: row.essay,
            overall_score: row.domain1_score,
            trait_scores,
        };
        let problems = rec.validate(&spec);
        if problems.is_empty() {
            data.prompts.entry(rec.prompt_id).or_default().push(rec);
        } else {
            issues.extend(problems);
        }
    }
    if issues.is_empty() {
        Ok(data)
    } else {
        Err(Error::Validation(issues))
    }
}

pub fn load_dataset(tsv: &Path, traits: &Path, encoding: TextEncoding) -> Result<Dataset> {
    let rows = parse_tsv(&read_text(tsv, encoding)?)?;
    let mut table = TraitTable::new();
    for file in trait_files(traits)? {
        let text = read_text(&file, encoding)?;
        parse_trait_csv(text.as_bytes(), &mut table)?;
    }
    merge_records(rows, &table)
}

/// Writes records' trait scores as a trait CSV with the union of trait columns.
pub fn write_trait_csv<W: Write>(records: &[EssayRecord], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["essay_id".to_string()];
    header.extend(ALL_TRAITS.iter().map(|s| s.to_string()));
    wtr.write_record(&header)?;
    for r in records {
        let mut row = vec![r.essay_id.to_string()];
        for t in ALL_TRAITS {
            row.push(
                r.trait_scores
                    .get(*t)
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            );
        }
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<trait csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl std::str::FromStr for Partition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Partition::Train),
            "dev" | "valid" | "validation" => Ok(Partition::Dev),
            "test" => Ok(Partition::Test),
            other => Err(Error::Format {
                what: "fold file",
                message: format!("unknown partition {other:?}"),
            }),
        }
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_id: usize,
    pub train_ids: Vec<u64>,
    pub dev_ids: Vec<u64>,
    pub test_ids: Vec<u64>,
}

impl FoldSplit {
    pub fn ids(&self, part: Partition) -> &[u64] {
        match part {
            Partition::Train => &self.train_ids,
            Partition::Dev => &self.dev_ids,
            Partition::Test => &self.test_ids,
        }
    }

    /// Records of one partition, in the split's id order.
    pub fn select<'a>(
        &self,
        records: &'a [EssayRecord],
        part: Partition,
    ) -> Result<Vec<&'a EssayRecord>> {
        let by_id: HashMap<u64, &EssayRecord> = records.iter().map(|r| (r.essay_id, r)).collect();
        self.ids(part)
            .iter()
            .map(|id| {
                by_id
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::arg(format!("fold references unknown essay {id}")))
            })
            .collect()
    }
}

/// Seeded shuffle, then five near-equal blocks; fold `k` tests on block `k`,
/// validates on block `k+1 mod 5`, and trains on the rest.
pub fn make_folds(ids: &[u64], seed: u64) -> Result<Vec<FoldSplit>> {
    if ids.len() < NUM_FOLDS {
        return Err(Error::arg(format!(
            "need at least {NUM_FOLDS} essays for {NUM_FOLDS}-fold splits, got {}",
            ids.len()
        )));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = shuffled.len() / NUM_FOLDS;
    let extra = shuffled.len() % NUM_FOLDS;
    let mut blocks = Vec::with_capacity(NUM_FOLDS);
    let mut start = 0;
    for b in 0..NUM_FOLDS {
        let len = base + usize::from(b < extra);
        blocks.push(shuffled[start..start + len].to_vec());
        start += len;
    }
    Ok((0..NUM_FOLDS)
        .map(|k| {
            let dev = (k + 1) % NUM_FOLDS;
            let train = (0..NUM_FOLDS)
                .filter(|b| *b != k && *b != dev)
                .flat_map(|b| blocks[b].iter().copied())
                .collect();
            FoldSplit {
                fold_id: k,
                train_ids: train,
                dev_ids: blocks[dev].clone(),
                test_ids: blocks[k].clone(),
            }
        })
        .collect())
}

pub fn make_record_folds(records: &[EssayRecord], seed: u64) -> Result<Vec<FoldSplit>> {
    let ids: Vec<u64> = records.iter().map(|r| r.essay_id).collect();
    make_folds(&ids, seed)
}

/// Parses `essay_id<TAB>fold_id<TAB>partition` lines.
pub fn parse_fold_file(content: &str) -> Result<Vec<(u64, usize, Partition)>> {
    let mut out = Vec::new();
    for (n, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |m: &str| Error::Format {
            what: "fold file",
            message: format!("line {}: {m}", n + 1),
        };
        if f.len() != 3 {
            return Err(bad("expected essay_id<TAB>fold_id<TAB>partition"));
        }
        let id = f[0].trim().parse().map_err(|_| bad("bad essay id"))?;
        let fold: usize = f[1].trim().parse().map_err(|_| bad("bad fold id"))?;
        if fold >= NUM_FOLDS {
            return Err(bad("fold id must be 0-4"));
        }
        out.push((id, fold, f[2].parse()?));
    }
    Ok(out)
}

/// Builds splits for one prompt from fold-file assignments, keeping only
/// essays of that prompt. Every essay must be assigned exactly once per fold.
pub fn folds_from_assignments(
    assignments: &[(u64, usize, Partition)],
    records: &[EssayRecord],
) -> Result<Vec<FoldSplit>> {
    let wanted: BTreeSet<u64> = records.iter().map(|r| r.essay_id).collect();
    let mut folds: Vec<FoldSplit> = (0..NUM_FOLDS)
        .map(|k| FoldSplit {
            fold_id: k,
            train_ids: vec![],
            dev_ids: vec![],
            test_ids: vec![],
        })
        .collect();
    let mut seen: BTreeSet<(usize, u64)> = BTreeSet::new();
    for (id, fold, part) in assignments {
        if !wanted.contains(id) {
            continue;
        }
        if !seen.insert((*fold, *id)) {
            return Err(Error::Format {
                what: "fold file",
                message: format!("essay {id} assigned twice in fold {fold}"),
            });
        }
        let f = &mut folds[*fold];
        match part {
            Partition::Train => f.train_ids.push(*id),
            Partition::Dev => f.dev_ids.push(*id),
            Partition::Test => f.test_ids.push(*id),
        }
    }
    for f in &folds {
        let covered = f.train_ids.len() + f.dev_ids.len() + f.test_ids.len();
        if covered != 0 && covered != wanted.len() {
            return Err(Error::Format {
                what: "fold file",
                message: format!(
                    "fold {} covers {covered} of {} essays",
                    f.fold_id,
                    wanted.len()
                ),
            });
        }
    }
    Ok(folds)
}

pub fn load_fold_file(path: &Path, records: &[EssayRecord]) -> Result<Vec<FoldSplit>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    folds_from_assignments(&parse_fold_file(&text)?, records)
}

pub fn write_fold_file<W: Write>(folds: &[FoldSplit], mut out: W) -> Result<()> {
    let io = |e| Error::io("<fold file>", e);
    for f in folds {
        for part in [Partition::Train, Partition::Dev, Partition::Test] {
            for id in f.ids(part) {
                writeln!(out, "{id}\t{}\t{part}", f.fold_id).map_err(io)?;
            }
        }
    }
    Ok(())
}
