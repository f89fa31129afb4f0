//! Agreement metrics, significance tests, ablation, and report assembly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::{EssayRecord, FoldSplit, PromptSpec, ScoreRange, OVERALL};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TaskMode};
use crate::train::{run_fold, TrainConfig};

fn check_pair(pred: &[i64], gold: &[i64], range: ScoreRange) -> Result<usize> {
    if pred.len() != gold.len() {
        return Err(Error::arg(format!(
            "{} predictions but {} gold scores",
            pred.len(),
            gold.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::arg("kappa needs at least two ratings"));
    }
    if range.categories() < 2 {
        return Err(Error::arg(format!(
            "score range {range} has a single category"
        )));
    }
    if let Some(v) = pred.iter().chain(gold).find(|v| !range.contains(**v)) {
        return Err(Error::arg(format!("score {v} outside range {range}")));
    }
    Ok(range.categories())
}

fn weighted_kappa(pred: &[i64], gold: &[i64], range: ScoreRange, power: i32) -> Result<f64> {
    let n_cat = check_pair(pred, gold, range)?;
    let n = pred.len() as f64;
    let mut observed = vec![0.0f64; n_cat * n_cat];
    let mut hist_p = vec![0.0f64; n_cat];
    let mut hist_g = vec![0.0f64; n_cat];
    for (p, g) in pred.iter().zip(gold) {
        let i = (p - range.min) as usize;
        let j = (g - range.min) as usize;
        observed[i * n_cat + j] += 1.0;
        hist_p[i] += 1.0;
        hist_g[j] += 1.0;
    }
    let denom_w = ((n_cat - 1) as f64).powi(power);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n_cat {
        for j in 0..n_cat {
            let w = (i.abs_diff(j) as f64).powi(power) / denom_w;
            num += w * observed[i * n_cat + j];
            den += w * hist_p[i] * hist_g[j] / n;
        }
    }
    if den == 0.0 {
        // both raters constant at the same score
        return Ok(if num == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(1.0 - num / den)
}

/// Quadratic weighted kappa over the full declared score range.
pub fn qwk(pred: &[i64], gold: &[i64], range: ScoreRange) -> Result<f64> {
    weighted_kappa(pred, gold, range, 2)
}

/// Linear weighted kappa, for comparison only.
pub fn linear_kappa(pred: &[i64], gold: &[i64], range: ScoreRange) -> Result<f64> {
    weighted_kappa(pred, gold, range, 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub n: usize,
    pub mean_diff: f64,
    /// Set when the differences have zero variance but nonzero mean.
    pub degenerate: bool,
}

impl TTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p < alpha
    }
}

/// Two-sided paired t-test of `a` against `b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::arg(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::arg("paired t-test needs at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if d.iter().all(|x| *x == 0.0) {
        return Ok(TTest {
            t: 0.0,
            p: 1.0,
            n,
            mean_diff: 0.0,
            degenerate: false,
        });
    }
    if var == 0.0 {
        return Ok(TTest {
            t: mean.signum() * f64::INFINITY,
            p: 0.0,
            n,
            mean_diff: mean,
            degenerate: true,
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::arg(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest {
        t,
        p,
        n,
        mean_diff: mean,
        degenerate: false,
    })
}

/// Pairing unit for significance tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingUnit {
    #[default]
    Fold,
    Essay,
}

/// Per-essay mode: pairs the squared errors of two systems on the same
/// essays. Positive `mean_diff` means system `a` has the larger error.
pub fn paired_t_test_essays(pred_a: &[f64], pred_b: &[f64], gold: &[f64]) -> Result<TTest> {
    if pred_a.len() != gold.len() || pred_b.len() != gold.len() {
        return Err(Error::arg(
            "per-essay test needs equal-length predictions and gold",
        ));
    }
    let ea: Vec<f64> = pred_a
        .iter()
        .zip(gold)
        .map(|(p, g)| (p - g).powi(2))
        .collect();
    let eb: Vec<f64> = pred_b
        .iter()
        .zip(gold)
        .map(|(p, g)| (p - g).powi(2))
        .collect();
    paired_t_test(&ea, &eb)
}

/// Reference holistic-QWK drops per (prompt, trait), kept for side-by-side
/// printing next to locally measured deltas.
pub fn reference_ablation_delta(prompt: u8, trait_name: &str) -> Option<f64> {
    let table: &[(&str, [Option<f64>; 8])] = &[
        (
            "content",
            [
                Some(0.0148),
                Some(0.0092),
                Some(0.0064),
                Some(0.0074),
                Some(0.0030),
                Some(0.0128),
                Some(0.0102),
                Some(0.0102),
            ],
        ),
        (
            "organization",
            [
                Some(0.0122),
                Some(0.0088),
                None,
                None,
                None,
                None,
                Some(0.0090),
                Some(0.0052),
            ],
        ),
        (
            "word_choice",
            [
                Some(0.0080),
                Some(0.0164),
                None,
                None,
                None,
                None,
                None,
                Some(0.0264),
            ],
        ),
        (
            "sentence_fluency",
            [
                Some(0.0086),
                Some(0.0036),
                None,
                None,
                None,
                None,
                None,
                Some(0.0196),
            ],
        ),
        (
            "conventions",
            [
                Some(0.0090),
                Some(0.0018),
                None,
                None,
                None,
                None,
                Some(0.0076),
                Some(0.0056),
            ],
        ),
        (
            "prompt_adherence",
            [
                None,
                None,
                Some(0.0282),
                Some(0.0112),
                Some(0.0026),
                Some(0.0044),
                None,
                None,
            ],
        ),
        (
            "language",
            [
                None,
                None,
                Some(0.0080),
                Some(0.0108),
                Some(0.0088),
                Some(0.0030),
                None,
                None,
            ],
        ),
        (
            "narrativity",
            [
                None,
                None,
                Some(0.0092),
                Some(0.0050),
                Some(0.0124),
                Some(0.0062),
                None,
                None,
            ],
        ),
        (
            "style",
            [None, None, None, None, None, None, Some(0.0030), None],
        ),
        (
            "voice",
            [None, None, None, None, None, None, None, Some(0.0094)],
        ),
    ];
    let idx = usize::from(prompt).checked_sub(1).filter(|i| *i < 8)?;
    table
        .iter()
        .find(|(t, _)| *t == trait_name)
        .and_then(|(_, row)| row[idx])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub prompt: u8,
    pub trait_name: String,
    pub base_qwk: f64,
    pub ablated_qwk: f64,
    pub delta: f64,
    pub reference: Option<f64>,
}

/// Drop in mean holistic QWK when a trait is removed.
pub fn ablation_delta(base: &[f64], ablated: &[f64]) -> Result<f64> {
    if base.is_empty() || ablated.is_empty() {
        return Err(Error::arg("ablation needs at least one fold per system"));
    }
    Ok(mean(base) - mean(ablated))
}

/// Trains the MTL model with and without `trait_name` on each fold and
/// reports the difference in mean test QWK of the overall head.
pub fn ablate(
    records: &[EssayRecord],
    base: &ModelConfig,
    train: &TrainConfig,
    trait_name: &str,
    folds: &[FoldSplit],
) -> Result<AblationResult> {
    if base.mode != TaskMode::Mtl {
        return Err(Error::config("ablation needs an MTL base configuration"));
    }
    let mut reduced = base.clone();
    reduced.prompt = base.prompt.without_trait(trait_name)?;
    let mut base_q = Vec::new();
    let mut abl_q = Vec::new();
    for fold in folds {
        base_q.push(run_fold(records, fold, base, train)?.test_qwk(OVERALL)?);
        abl_q.push(run_fold(records, fold, &reduced, train)?.test_qwk(OVERALL)?);
    }
    Ok(AblationResult {
        prompt: base.prompt.prompt_id,
        trait_name: trait_name.to_string(),
        base_qwk: mean(&base_q),
        ablated_qwk: mean(&abl_q),
        delta: ablation_delta(&base_q, &abl_q)?,
        reference: reference_ablation_delta(base.prompt.prompt_id, trait_name),
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// One test-set QWK value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QwkCell {
    pub prompt: u8,
    pub config: String,
    pub head: String,
    pub fold: usize,
    pub qwk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingCell {
    pub prompt: u8,
    pub config: String,
    pub fold: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub cells: Vec<QwkCell>,
    pub timings: Vec<TimingCell>,
    pub ablations: Vec<AblationResult>,
    pub warnings: Vec<String>,
}

pub const STL_LSTM: &str = "stl-lstm";
pub const STL_BILSTM: &str = "stl-bilstm";
pub const MTL_LSTM: &str = "mtl-lstm";
pub const MTL_BILSTM: &str = "mtl-bilstm";
const TABLE_CONFIGS: [&str; 4] = [STL_LSTM, STL_BILSTM, MTL_LSTM, MTL_BILSTM];
const ALPHA: f64 = 0.05;

impl EvalReport {
    /// Per-fold QWK values of one head, keyed by fold.
    pub fn fold_values(&self, prompt: u8, config: &str, head: &str) -> BTreeMap<usize, f64> {
        self.cells
            .iter()
            .filter(|c| c.prompt == prompt && c.config == config && c.head == head)
            .map(|c| (c.fold, c.qwk))
            .collect()
    }

    /// Mean over folds of the holistic QWK for one (prompt, config).
    pub fn prompt_mean(&self, prompt: u8, config: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .fold_values(prompt, config, OVERALL)
            .into_values()
            .collect();
        (!v.is_empty()).then(|| mean(&v))
    }

    pub fn prompts(&self) -> Vec<u8> {
        self.cells
            .iter()
            .map(|c| c.prompt)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn configs(&self) -> Vec<String> {
        let present: BTreeSet<&str> = self.cells.iter().map(|c| c.config.as_str()).collect();
        let mut out: Vec<String> = TABLE_CONFIGS
            .iter()
            .filter(|c| present.contains(*c))
            .map(|c| c.to_string())
            .collect();
        out.extend(
            present
                .iter()
                .filter(|c| !TABLE_CONFIGS.contains(c))
                .map(|c| c.to_string()),
        );
        out
    }

    /// Unweighted mean over prompts of per-prompt means.
    pub fn mean_qwk(&self, config: &str) -> Option<f64> {
        let per: Vec<f64> = self
            .prompts()
            .iter()
            .filter_map(|p| self.prompt_mean(*p, config))
            .collect();
        (!per.is_empty()).then(|| mean(&per))
    }

    /// Paired test of `a` over `b` on the folds both have.
    pub fn compare(&self, prompt: u8, a: &str, b: &str) -> Option<TTest> {
        let va = self.fold_values(prompt, a, OVERALL);
        let vb = self.fold_values(prompt, b, OVERALL);
        let (xs, ys): (Vec<f64>, Vec<f64>) = va
            .iter()
            .filter_map(|(f, x)| vb.get(f).map(|y| (*x, *y)))
            .unzip();
        paired_t_test(&xs, &ys).ok()
    }

    fn compare_means(&self, a: &str, b: &str) -> Option<TTest> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .prompts()
            .iter()
            .filter_map(|p| Some((self.prompt_mean(*p, a)?, self.prompt_mean(*p, b)?)))
            .unzip();
        paired_t_test(&xs, &ys).ok()
    }

    fn markers(&self, config: &str, test: impl Fn(&str, &str) -> Option<TTest>) -> String {
        let better = |a: &str, b: &str| {
            test(a, b).is_some_and(|t| t.mean_diff > 0.0 && t.significant(ALPHA))
        };
        let mut m = String::new();
        if config.starts_with("mtl-") && better(config, STL_LSTM) {
            m.push('*');
        }
        if config == MTL_BILSTM && better(MTL_BILSTM, MTL_LSTM) {
            m.push('⋆');
        }
        m
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cells {
            w.serialize(c)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::arg(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let cells = r
            .deserialize()
            .collect::<std::result::Result<Vec<QwkCell>, _>>()?;
        Ok(EvalReport {
            cells,
            ..Default::default()
        })
    }

    /// Holistic-score table: one row per prompt plus the mean row. `*`
    /// marks an MTL system significantly better than STL-LSTM, `⋆` marks
    /// MTL-BiLSTM significantly better than MTL-LSTM (paired over folds,
    /// p < 0.05; the mean row pairs over prompts).
    pub fn to_markdown(&self) -> String {
        let configs = self.configs();
        let mut s = String::new();
        let _ = writeln!(s, "| Prompt | {} |", configs.join(" | "));
        let _ = writeln!(s, "|---|{}", "---|".repeat(configs.len()));
        for p in self.prompts() {
            let _ = write!(s, "| Prompt {p} |");
            for c in &configs {
                match self.prompt_mean(p, c) {
                    Some(v) => {
                        let m = self.markers(c, |a, b| self.compare(p, a, b));
                        let _ = write!(s, " {v:.3}{m} |");
                    }
                    None => s.push_str(" - |"),
                }
            }
            s.push('\n');
        }
        s.push_str("| **Mean QWK** |");
        for c in &configs {
            match self.mean_qwk(c) {
                Some(v) => {
                    let m = self.markers(c, |a, b| self.compare_means(a, b));
                    let _ = write!(s, " {v:.3}{m} |");
                }
                None => s.push_str(" - |"),
            }
        }
        s.push('\n');
        if !self.timings.is_empty() {
            s.push_str("\n| Config | Training seconds |\n|---|---|\n");
            let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
            for t in &self.timings {
                *totals.entry(&t.config).or_default() += t.seconds;
            }
            for (c, secs) in totals {
                let _ = writeln!(s, "| {c} | {secs:.1} |");
            }
        }
        if !self.ablations.is_empty() {
            s.push_str("\n| Prompt | Trait | Delta | Reference |\n|---|---|---|---|\n");
            for a in &self.ablations {
                let r = a.reference.map_or("-".to_string(), |r| format!("{r:.4}"));
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.4} | {r} |",
                    a.prompt, a.trait_name, a.delta
                );
            }
        }
        if !self.warnings.is_empty() {
            s.push_str("\nWarnings:\n");
            for w in &self.warnings {
                let _ = writeln!(s, "- {w}");
            }
        }
        s
    }

    /// Mean QWK of every trait head, per (prompt, config).
    pub fn trait_summary(&self) -> Vec<(u8, String, String, f64)> {
        let mut acc: BTreeMap<(u8, String, String), Vec<f64>> = BTreeMap::new();
        for c in self.cells.iter().filter(|c| c.head != OVERALL) {
            acc.entry((c.prompt, c.config.clone(), c.head.clone()))
                .or_default()
                .push(c.qwk);
        }
        acc.into_iter()
            .map(|((p, c, h), v)| (p, c, h, mean(&v)))
            .collect()
    }

    pub fn traits_csv(&self) -> String {
        let mut s = String::from("prompt,config,trait,mean_qwk\n");
        for (p, c, h, q) in self.trait_summary() {
            let _ = writeln!(s, "{p},{c},{h},{q:.6}");
        }
        s
    }

    /// Horizontal bar chart of mean trait QWK per (config, trait),
    /// averaged over prompts.
    pub fn traits_svg(&self) -> String {
        let mut acc: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for (_, c, h, q) in self.trait_summary() {
            acc.entry((h, c)).or_default().push(q);
        }
        let rows: Vec<(String, f64)> = acc
            .into_iter()
            .map(|((h, c), v)| (format!("{h} ({c})"), mean(&v)))
            .collect();
        let (bar_h, left, width) = (18.0, 260.0, 400.0);
        let height = rows.len() as f64 * bar_h + 20.0;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n",
            left + width + 60.0
        );
        for (i, (label, q)) in rows.iter().enumerate() {
            let y = 10.0 + i as f64 * bar_h;
            let w = q.clamp(0.0, 1.0) * width;
            let _ = writeln!(
                s,
                "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{label}</text>\n  <rect x=\"{left}\" y=\"{}\" width=\"{w:.1}\" height=\"{}\" fill=\"#4878a8\"/>\n  <text x=\"{}\" y=\"{}\">{q:.3}</text>",
                left - 6.0,
                y + 12.0,
                y + 2.0,
                bar_h - 4.0,
                left + w + 4.0,
                y + 12.0
            );
        }
        s.push_str("</svg>\n");
        s
    }

    /// Writes report.csv, report.md, traits.csv, and optionally traits.svg.
    pub fn write(&self, dir: &Path, svg: bool) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, body: String| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(p, e))
        };
        put("report.csv", self.to_csv()?)?;
        put("report.md", self.to_markdown())?;
        put("traits.csv", self.traits_csv())?;
        if svg {
            put("traits.svg", self.traits_svg())?;
        }
        Ok(())
    }
}

/// Name of the per-cell file holding test QWK values (`head,qwk`).
pub const TEST_QWK_FILE: &str = "test_qwk.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const ABLATION_FILE: &str = "ablation.csv";

fn subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().is_dir() {
            out.push((
                entry.file_name().to_string_lossy().into_owned(),
                entry.path(),
            ));
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct HeadQwk {
    head: String,
    qwk: f64,
}

#[derive(Debug, Deserialize)]
struct TimingRow {
    seconds: f64,
}

/// Collects every completed cell under `runs/<prompt>/<config>/<fold>/`.
/// Folds missing from a (prompt, config) are listed as warnings.
pub fn assemble_report(runs: &Path) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for (pname, pdir) in subdirs(runs)? {
        let Ok(prompt) = pname.parse::<u8>() else {
            continue;
        };
        for (config, cdir) in subdirs(&pdir)? {
            let mut seen = BTreeSet::new();
            for (fname, fdir) in subdirs(&cdir)? {
                let Ok(fold) = fname.parse::<usize>() else {
                    continue;
                };
                let qpath = fdir.join(TEST_QWK_FILE);
                if !qpath.exists() {
                    continue;
                }
                seen.insert(fold);
                let mut r = csv::Reader::from_path(&qpath)?;
                for row in r.deserialize::<HeadQwk>() {
                    let row = row?;
                    report.cells.push(QwkCell {
                        prompt,
                        config: config.clone(),
                        head: row.head,
                        fold,
                        qwk: row.qwk,
                    });
                }
                let tpath = fdir.join(TIMING_FILE);
                if tpath.exists() {
                    let mut r = csv::Reader::from_path(&tpath)?;
                    for row in r.deserialize::<TimingRow>() {
                        report.timings.push(TimingCell {
                            prompt,
                            config: config.clone(),
                            fold,
                            seconds: row?.seconds,
                        });
                    }
                }
            }
            let missing: Vec<String> = (0..crate::dataset::NUM_FOLDS)
                .filter(|f| !seen.contains(f))
                .map(|f| f.to_string())
                .collect();
            if !seen.is_empty() && !missing.is_empty() {
                report.warnings.push(format!(
                    "prompt {prompt} {config}: missing folds {}",
                    missing.join(", ")
                ));
            }
        }
    }
    let apath = runs.join(ABLATION_FILE);
    if apath.exists() {
        let mut r = csv::Reader::from_path(&apath)?;
        report.ablations = r.deserialize().collect::<std::result::Result<_, _>>()?;
    }
    Ok(report)
}

/// Appends one ablation line to `runs/ablation.csv`.
pub fn append_ablation(runs: &Path, result: &AblationResult) -> Result<()> {
    let path = runs.join(ABLATION_FILE);
    let fresh = !path.exists();
    fs::create_dir_all(runs).map_err(|e| Error::io(runs, e))?;
    let f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(f);
    w.serialize(result)?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Checks that a prompt has `trait_name` before an expensive ablation.
pub fn check_ablation_target(prompt: &PromptSpec, trait_name: &str) -> Result<()> {
    if prompt.has_trait(trait_name) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "prompt {} does not score trait {trait_name:?}",
            prompt.prompt_id
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const R02: ScoreRange = ScoreRange::new(0, 2);

    #[test]
    fn qwk_examples() {
        assert_eq!(qwk(&[0, 1, 2, 1], &[0, 1, 2, 1], R02).unwrap(), 1.0);
        // exact rational value 2/3 from a fraction-arithmetic oracle
        let k = qwk(&[0, 1, 2, 1], &[0, 2, 2, 0], R02).unwrap();
        assert!((k - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(qwk(&[1, 1, 1, 1], &[0, 1, 2, 2], R02).unwrap(), 0.0);
        assert_eq!(qwk(&[2, 2, 2], &[2, 2, 2], R02).unwrap(), 1.0);
    }

    #[test]
    fn qwk_uses_declared_range() {
        let narrow = qwk(&[1, 2, 2, 3], &[1, 2, 3, 3], ScoreRange::new(1, 3)).unwrap();
        let wide = qwk(&[1, 2, 2, 3], &[1, 2, 3, 3], ScoreRange::new(0, 6)).unwrap();
        assert!(
            (narrow - wide).abs() < 1e-12,
            "unobserved categories carry no mass"
        );
        // shift invariance within a same-size range
        let shifted = qwk(&[2, 3, 3, 4], &[2, 3, 4, 4], ScoreRange::new(2, 4)).unwrap();
        assert!((narrow - shifted).abs() < 1e-12);
    }

    #[test]
    fn qwk_errors() {
        assert!(qwk(&[0, 1], &[0], R02).is_err());
        assert!(qwk(&[0], &[0], R02).is_err());
        assert!(qwk(&[0, 3], &[0, 1], R02).is_err());
    }

    #[test]
    fn qwk_symmetric_and_swap_below_one() {
        let a = [0, 1, 2, 2, 1, 0, 2];
        let b = [0, 2, 2, 1, 1, 0, 1];
        assert!((qwk(&a, &b, R02).unwrap() - qwk(&b, &a, R02).unwrap()).abs() < 1e-12);
        let mut swapped = a;
        swapped.swap(0, 2);
        assert!(qwk(&swapped, &a, R02).unwrap() < 1.0);
    }

    #[test]
    fn linear_kappa_differs_from_quadratic() {
        let p = [0, 1, 2, 1];
        let g = [0, 2, 2, 0];
        let l = linear_kappa(&p, &g, R02).unwrap();
        assert!((l - qwk(&p, &g, R02).unwrap()).abs() > 1e-3);
    }

    #[test]
    fn t_test_matches_reference() {
        // scipy.stats.ttest_rel
        let t = paired_t_test(
            &[0.712, 0.698, 0.731, 0.705, 0.720],
            &[0.701, 0.690, 0.715, 0.709, 0.703],
        )
        .unwrap();
        assert!((t.t - 2.542210278395405).abs() < 1e-6);
        assert!((t.p - 0.06383089876811841).abs() < 1e-6);
        let t = paired_t_test(
            &[0.81, 0.79, 0.83, 0.80, 0.82, 0.78, 0.84],
            &[0.80, 0.80, 0.80, 0.79, 0.80, 0.79, 0.81],
        )
        .unwrap();
        assert!((t.t - 1.803950467206787).abs() < 1e-6);
        assert!((t.p - 0.1212870224771127).abs() < 1e-6);
    }

    #[test]
    fn t_test_edge_cases() {
        let a = [0.5, 0.6, 0.7];
        let t = paired_t_test(&a, &a).unwrap();
        assert_eq!((t.t, t.p, t.degenerate), (0.0, 1.0, false));
        let b: Vec<f64> = a.iter().map(|x| x - 0.25).collect();
        let t = paired_t_test(&a, &b).unwrap();
        assert!(t.degenerate && t.p == 0.0 && t.t.is_infinite());
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn essay_mode_pairs_squared_errors() {
        let gold = [0.5, 0.5, 0.5];
        let t = paired_t_test_essays(&[0.9, 0.8, 0.95], &[0.5, 0.55, 0.45], &gold).unwrap();
        assert!(t.mean_diff > 0.0);
    }

    #[test]
    fn reference_deltas() {
        assert_eq!(reference_ablation_delta(1, "content"), Some(0.0148));
        assert_eq!(
            reference_ablation_delta(3, "prompt_adherence"),
            Some(0.0282)
        );
        assert_eq!(reference_ablation_delta(3, "voice"), None);
        assert_eq!(reference_ablation_delta(9, "content"), None);
        assert_eq!(ablation_delta(&[0.8, 0.8], &[0.8, 0.8]).unwrap(), 0.0);
    }

    fn cell(prompt: u8, config: &str, fold: usize, qwk: f64) -> QwkCell {
        QwkCell {
            prompt,
            config: config.into(),
            head: OVERALL.into(),
            fold,
            qwk,
        }
    }

    #[test]
    fn report_means_and_csv_round_trip() {
        let r = EvalReport {
            cells: vec![cell(1, MTL_LSTM, 0, 0.8), cell(2, MTL_LSTM, 0, 0.6)],
            ..Default::default()
        };
        assert!((r.mean_qwk(MTL_LSTM).unwrap() - 0.7).abs() < 1e-15);
        let back = EvalReport::from_csv(&r.to_csv().unwrap()).unwrap();
        assert_eq!(back.cells, r.cells);
        let md = r.to_markdown();
        assert!(md.contains("| Prompt 1 | 0.800 |"));
        assert!(md.contains("**Mean QWK** | 0.700 |"));
    }

    #[test]
    fn significance_markers() {
        let mut cells = Vec::new();
        for f in 0..5 {
            let jitter = f as f64 * 0.001;
            cells.push(cell(1, STL_LSTM, f, 0.70 + jitter));
            cells.push(cell(1, MTL_LSTM, f, 0.75 + jitter * 1.5));
            cells.push(cell(1, MTL_BILSTM, f, 0.80 + jitter * 2.0));
        }
        let md = EvalReport {
            cells,
            ..Default::default()
        }
        .to_markdown();
        assert!(md.contains("0.753*"), "{md}");
        assert!(md.contains("0.804*⋆"), "{md}");
    }

    #[test]
    fn assemble_from_run_tree() {
        let dir = tempfile::tempdir().unwrap();
        let cell_dir = dir.path().join("3").join(MTL_LSTM).join("0");
        fs::create_dir_all(&cell_dir).unwrap();
        fs::write(
            cell_dir.join(TEST_QWK_FILE),
            "head,qwk\ncontent,0.5\noverall,0.7\n",
        )
        .unwrap();
        fs::write(cell_dir.join(TIMING_FILE), "seconds\n12.5\n").unwrap();
        let r = assemble_report(dir.path()).unwrap();
        assert_eq!(r.fold_values(3, MTL_LSTM, OVERALL).len(), 1);
        assert_eq!(r.cells.len(), 2);
        assert_eq!(r.timings[0].seconds, 12.5);
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].contains("1, 2, 3, 4"));
        r.write(dir.path(), true).unwrap();
        assert!(dir.path().join("traits.svg").exists());
    }
}
