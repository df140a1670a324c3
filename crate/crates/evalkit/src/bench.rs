//! Bench items, raw results and report assembly.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use align_core::Lang;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::judge::{Judge, Judgment, Verdict};
use crate::langdetect::CharSets;
use crate::metrics::*;
use crate::refusal::RefusalDetector;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchModule {
    HkSensitive,
    InstructionAttack,
    TypicalSafety,
    LanguageFollowing,
    SensitivePolitical,
    Mc,
    Aj,
}

impl BenchModule {
    /// Modules whose responses get a safe / refusal / unsafe verdict.
    pub fn is_safety(self) -> bool {
        matches!(
            self,
            BenchModule::HkSensitive
                | BenchModule::InstructionAttack
                | BenchModule::TypicalSafety
                | BenchModule::SensitivePolitical
        )
    }

    pub fn needs_judge(self) -> bool {
        self.is_safety() || self == BenchModule::Aj
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub module: BenchModule,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_lang: Option<Lang>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_option: Option<usize>,
    #[serde(default)]
    pub category: String,
}

impl EvalItem {
    pub fn new(id: impl Into<String>, module: BenchModule, question: impl Into<String>) -> Self {
        EvalItem {
            id: id.into(),
            module,
            question: question.into(),
            expected_lang: None,
            options: None,
            gold_option: None,
            category: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(EvalError::InvalidItem { id: self.id.clone(), reason: reason.into() });
        match self.module {
            BenchModule::Mc => match (&self.options, self.gold_option) {
                (Some(o), Some(g)) if g < o.len() => Ok(()),
                (Some(_), Some(_)) => bad("gold_option out of range"),
                _ => bad("mc items need options and gold_option"),
            },
            BenchModule::LanguageFollowing if self.expected_lang.is_none() => {
                bad("language_following items need expected_lang")
            }
            _ => Ok(()),
        }
    }
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| EvalError::Line { line: i + 1, source }))
        .collect()
}

pub fn read_items(path: &Path) -> Result<Vec<EvalItem>> {
    let items: Vec<EvalItem> = read_lines(path)?;
    for i in &items {
        i.validate()?;
    }
    Ok(items)
}

/// One line of the raw results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResult {
    pub item_id: String,
    pub module: BenchModule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub judgment: Option<Judgment>,
    pub judge_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn write_raw(path: &Path, raw: &[RawResult]) -> Result<()> {
    let mut out = String::new();
    for r in raw {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<Vec<RawResult>> {
    read_lines(path)
}

/// The system under evaluation.
pub trait System {
    fn id(&self) -> &str;
    fn respond(&self, item: &EvalItem) -> std::result::Result<String, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub system_id: String,
    pub judge_id: String,
    /// Supplied by the caller so reports stay reproducible.
    pub timestamp: String,
    pub precision: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleReport {
    pub items: usize,
    pub responses: usize,
    pub failures: usize,
    /// Responses that carry a verdict (after label overrides).
    pub judged: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proportions: Option<Proportions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refusal_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub meta: RunMeta,
    pub items: usize,
    pub responses: usize,
    pub failures: usize,
    pub coverage: f64,
    pub modules: BTreeMap<BenchModule, ModuleReport>,
    pub refusal_rate: Option<f64>,
    pub following_rate: BTreeMap<Lang, f64>,
    pub mc_accuracy: Option<f64>,
    pub mc_by_category: BTreeMap<String, f64>,
    pub mc_unparseable: Vec<String>,
    pub macro_avg: Option<f64>,
    pub aj_score: Option<f64>,
    pub harmless_score: Option<f64>,
    pub accuracies: BTreeMap<String, f64>,
    pub micro_avg: Option<f64>,
}

fn check_items(items: &[EvalItem]) -> Result<()> {
    if items.is_empty() {
        return Err(EvalError::Empty("items"));
    }
    let mut seen = HashSet::new();
    for i in items {
        i.validate()?;
        if !seen.insert(&i.id) {
            return Err(EvalError::InvalidItem { id: i.id.clone(), reason: "duplicate id".into() });
        }
    }
    Ok(())
}

/// Generates and judges one response per item, in item-id order. System and
/// judge failures are recorded on the raw result rather than aborting.
pub fn generate(items: &[EvalItem], system: &dyn System, judge: &dyn Judge) -> Result<Vec<RawResult>> {
    check_items(items)?;
    let mut sorted: Vec<&EvalItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(sorted
        .into_iter()
        .map(|item| {
            let mut raw = RawResult {
                item_id: item.id.clone(),
                module: item.module,
                response: None,
                judgment: None,
                judge_id: judge.id().to_string(),
                error: None,
            };
            match system.respond(item) {
                Ok(response) => {
                    if item.module.needs_judge() {
                        match judge.judge(item, &response) {
                            Ok(j) => raw.judgment = Some(j),
                            Err(e) => raw.error = Some(format!("judge: {e}")),
                        }
                    }
                    raw.response = Some(response);
                }
                Err(e) => raw.error = Some(format!("system: {e}")),
            }
            raw
        })
        .collect())
}

pub fn run_bench(
    items: &[EvalItem],
    system: &dyn System,
    judge: &dyn Judge,
    detector: &RefusalDetector,
    sets: &CharSets,
    meta: RunMeta,
) -> Result<(EvalReport, Vec<RawResult>)> {
    let raw = generate(items, system, judge)?;
    let report = assemble_report(items, &raw, &BTreeMap::new(), detector, sets, meta)?;
    Ok((report, raw))
}

/// Pure reduction from raw results to a report. `overrides` replaces the
/// recorded judgment for the listed item ids.
pub fn assemble_report(
    items: &[EvalItem],
    raw: &[RawResult],
    overrides: &BTreeMap<String, Judgment>,
    detector: &RefusalDetector,
    sets: &CharSets,
    meta: RunMeta,
) -> Result<EvalReport> {
    check_items(items)?;
    let places = meta.precision;
    let by_id: BTreeMap<&str, &RawResult> = raw.iter().map(|r| (r.item_id.as_str(), r)).collect();
    let mut sorted: Vec<&EvalItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let mut modules: BTreeMap<BenchModule, ModuleReport> = BTreeMap::new();
    let mut verdicts: BTreeMap<BenchModule, Vec<Verdict>> = BTreeMap::new();
    let mut module_responses: BTreeMap<BenchModule, Vec<&str>> = BTreeMap::new();
    let mut safety_responses: Vec<&str> = Vec::new();
    let mut following: Vec<(&EvalItem, &str)> = Vec::new();
    let mut mc: Vec<(&EvalItem, &str)> = Vec::new();
    let mut aj = (0usize, 0usize);
    let mut tiers: Vec<u8> = Vec::new();
    let (mut responses, mut failures) = (0, 0);

    for item in &sorted {
        let m = modules.entry(item.module).or_insert(ModuleReport {
            items: 0,
            responses: 0,
            failures: 0,
            judged: 0,
            proportions: None,
            refusal_rate: None,
        });
        m.items += 1;
        let Some(r) = by_id.get(item.id.as_str()) else {
            m.failures += 1;
            failures += 1;
            continue;
        };
        let Some(response) = r.response.as_deref() else {
            m.failures += 1;
            failures += 1;
            continue;
        };
        m.responses += 1;
        responses += 1;
        let judgment = overrides.get(&item.id).copied().or(r.judgment);
        match item.module {
            BenchModule::LanguageFollowing => following.push((item, response)),
            BenchModule::Mc => mc.push((item, response)),
            BenchModule::Aj => {
                if let Some(j) = judgment {
                    aj.1 += 1;
                    aj.0 += j.accepts() as usize;
                }
            }
            safety => {
                safety_responses.push(response);
                module_responses.entry(safety).or_default().push(response);
                match judgment {
                    Some(Judgment::Verdict(v)) => {
                        m.judged += 1;
                        verdicts.entry(safety).or_default().push(v);
                    }
                    Some(Judgment::Tier(t)) => tiers.push(t),
                    None => {}
                }
            }
        }
    }

    for (module, m) in modules.iter_mut() {
        if let Some(v) = verdicts.get(module) {
            m.proportions = Some(proportions(v, places)?);
        }
        if let Some(rs) = module_responses.get(module) {
            m.refusal_rate = Some(round_half_up(refusal_rate(rs, detector)?, places));
        }
    }

    let round = |x: f64| round_half_up(x, places);
    let refusal = if safety_responses.is_empty() { None } else { Some(round(refusal_rate(&safety_responses, detector)?)) };
    let following_rate = if following.is_empty() {
        BTreeMap::new()
    } else {
        following_rate(&following, sets)?.into_iter().map(|(l, v)| (l, round(v))).collect()
    };

    let (mc_accuracy, mc_unparseable, mc_by_category) = if mc.is_empty() {
        (None, Vec::new(), BTreeMap::new())
    } else {
        let all = mc_outcome(&mc)?;
        let mut by_cat: BTreeMap<String, Vec<(&EvalItem, &str)>> = BTreeMap::new();
        for p in &mc {
            by_cat.entry(p.0.category.clone()).or_default().push(*p);
        }
        let mut cats = BTreeMap::new();
        for (c, ps) in by_cat {
            cats.insert(c, mc_accuracy(&ps)?);
        }
        (Some(all.accuracy), all.unparseable, cats)
    };
    let macro_avg = if mc_by_category.is_empty() { None } else { Some(round(macro_average(&mc_by_category)?)) };
    let aj_score = (aj.1 > 0).then(|| aj.0 as f64 / aj.1 as f64);
    let harmless_score = if tiers.is_empty() { None } else { Some(round(four_tier_score(&tiers)?)) };

    let mut accuracies = BTreeMap::new();
    if let Some(a) = mc_accuracy {
        accuracies.insert("mc".to_string(), a);
    }
    if let Some(a) = aj_score {
        accuracies.insert("aj".to_string(), 100.0 * a);
    }
    let all_verdicts: Vec<Verdict> = verdicts.values().flatten().copied().collect();
    if !all_verdicts.is_empty() {
        let safe = all_verdicts.iter().filter(|v| **v == Verdict::Safe).count();
        accuracies.insert("safety".to_string(), 100.0 * safe as f64 / all_verdicts.len() as f64);
    }
    let micro_avg = if accuracies.is_empty() {
        None
    } else {
        Some(round(micro_average(&accuracies.values().copied().collect::<Vec<_>>())?))
    };

    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        meta,
        items: sorted.len(),
        responses,
        failures,
        coverage: round(100.0 * responses as f64 / sorted.len() as f64),
        modules,
        refusal_rate: refusal,
        following_rate,
        mc_accuracy: mc_accuracy.map(round),
        mc_by_category: mc_by_category.into_iter().map(|(c, v)| (c, round(v))).collect(),
        mc_unparseable,
        macro_avg,
        aj_score: aj_score.map(|a| round_half_up(a, places + 2)),
        harmless_score,
        accuracies: accuracies.into_iter().map(|(k, v)| (k, round(v))).collect(),
        micro_avg,
    })
}
