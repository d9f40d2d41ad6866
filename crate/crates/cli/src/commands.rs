use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use pcm_core::cleaner::{self, CleanConfig};
use pcm_core::dataset::{self, DatasetExample, LogColumns};
use pcm_core::metrics::{evaluate_corpus_with, CorpusReport};
use pcm_core::subtree::{extract, novalues_view};
use pcm_core::templates::{dataset_stats_with, template_of_text};
use pcm_core::{normalize_text, parse};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::{CleanArgs, ElementsArgs, EvaluateArgs, Failure, InputArgs, StatsArgs};

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn read_examples(path: &Path) -> anyhow::Result<Vec<DatasetExample>> {
    Ok(dataset::read_dataset(path)?)
}

struct Prediction {
    id: Option<i64>,
    query: String,
}

fn json_field<'a>(row: &'a serde_json::Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| row.get(*n))
}

fn read_predictions(path: &Path) -> anyhow::Result<Vec<Prediction>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_jsonl = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("json"));
    if !is_jsonl {
        return Ok(text
            .lines()
            .map(|l| Prediction {
                id: None,
                query: l.trim_end_matches('\r').to_string(),
            })
            .collect());
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{}:{}", path.display(), i + 1);
        let value: Value = serde_json::from_str(line).with_context(at)?;
        let Value::Object(row) = value else {
            bail!("{}: expected a JSON object", at());
        };
        let id = match json_field(&row, &["QuerySetId", "id"]) {
            Some(Value::Number(n)) => n.as_i64(),
            Some(Value::String(s)) => s.trim().parse().ok(),
            _ => None,
        };
        let query = match json_field(&row, &["QueryBody", "query", "prediction"]) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Null) | None => String::new(),
            Some(other) => bail!("{}: query must be a string, got {other}", at()),
        };
        out.push(Prediction { id, query });
    }
    Ok(out)
}

fn align(
    gold: &[DatasetExample],
    preds: Vec<Prediction>,
    id_join: bool,
) -> anyhow::Result<Vec<(String, String)>> {
    if !id_join {
        if gold.len() != preds.len() {
            bail!(
                "gold has {} rows but predictions have {}; order-aligned evaluation needs equal counts",
                gold.len(),
                preds.len()
            );
        }
        return Ok(preds
            .into_iter()
            .zip(gold)
            .map(|(p, g)| (p.query, g.query.clone()))
            .collect());
    }
    let mut by_id = HashMap::new();
    for (i, p) in preds.into_iter().enumerate() {
        let id = p.id.ok_or_else(|| {
            anyhow!(
                "prediction {} has no id; id join needs QuerySetId or id",
                i + 1
            )
        })?;
        if by_id.insert(id, p.query).is_some() {
            bail!("duplicate prediction id {id}");
        }
    }
    let missing = gold.iter().filter(|g| !by_id.contains_key(&g.id)).count();
    if missing > 0 {
        eprintln!("warning: {missing} gold rows have no prediction and score 0");
    }
    Ok(gold
        .iter()
        .map(|g| (by_id.remove(&g.id).unwrap_or_default(), g.query.clone()))
        .collect())
}

fn summary(report: &CorpusReport, novalues_first: bool) -> String {
    let mut lines = Vec::new();
    let full = format!(
        "PCM-F1 {:.4}  PCM-EM {:.4}",
        report.mean_pcm_f1, report.mean_pcm_em
    );
    let nv = format!(
        "PCM-F1-NoValues {:.4}  PCM-EM-NoValues {:.4}",
        report.mean_pcm_f1_novalues, report.mean_pcm_em_novalues
    );
    if novalues_first {
        lines.extend([nv, full]);
    } else {
        lines.extend([full, nv]);
    }
    lines.push(format!(
        "examples {}  gold unparsable (excluded) {}  pred unparsable (scored 0) {}",
        report.n_total, report.n_gold_unparsable, report.n_pred_unparsable
    ));
    for (category, mean) in &report.per_category_means {
        lines.push(format!(
            "  {:<8} P {:.4}  R {:.4}  F1 {:.4}  (n={})",
            category.name(),
            mean.precision,
            mean.recall,
            mean.f1,
            mean.count
        ));
    }
    lines.join("\n")
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let gold = read_examples(&args.gold)?;
    let preds = read_predictions(&args.pred)?;
    let pairs = align(&gold, preds, args.id_join)?;
    let (report, per_pair) = evaluate_corpus_with(&pairs, args.count_unit)?;
    if let Some(path) = &args.per_example {
        let mut buf = Vec::new();
        dataset::write_jsonl(&mut buf, &per_pair)?;
        fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    }
    emit(args.out.as_deref(), &to_json(&report)?)?;
    eprintln!("{}", summary(&report, args.novalues));
    Ok(())
}

pub fn stats(args: StatsArgs) -> Result<(), Failure> {
    let examples = read_examples(&args.input)?;
    let report = dataset_stats_with(&examples, args.ngram_n as usize)?;
    let text = if args.table {
        report.to_table()
    } else {
        to_json(&report)?
    };
    emit(args.out.as_deref(), &text)?;
    Ok(())
}

pub fn clean(args: CleanArgs) -> Result<(), Failure> {
    let columns = LogColumns {
        query_set_id: args.col_id,
        revision_order: Some(args.col_revision),
        title: args.col_title,
        description: args.col_description,
        query_body: args.col_query,
    };
    let rows = dataset::read_log(&args.log, &columns)?;
    let mut config = match args.filters {
        Some(filters) => CleanConfig::with_filters(filters),
        None => CleanConfig::default(),
    };
    config.check_title_numbers = args.title_numbers;
    let report = cleaner::clean(rows, &config);
    if let Some(path) = &args.audit {
        let mut buf = Vec::new();
        dataset::write_jsonl(&mut buf, &report.audit)?;
        fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut buf = Vec::new();
    dataset::write_jsonl(&mut buf, &report.examples)?;
    emit(args.out.as_deref(), std::str::from_utf8(&buf)?)?;
    let enabled: Vec<&str> = config.enabled.iter().map(|f| f.as_str()).collect();
    eprintln!(
        "rows {}  kept {}  malformed {}  filters [{}]",
        report.n_rows,
        report.examples.len(),
        report.n_malformed,
        enabled.join(", ")
    );
    for (filter, count) in &report.drop_counts {
        eprintln!("  {filter:<20} {count}");
    }
    Ok(())
}

#[derive(Serialize)]
struct ParseVerdict {
    index: usize,
    id: i64,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn parse_check(args: InputArgs) -> Result<(), Failure> {
    let examples = read_examples(&args.input)?;
    let verdicts: Vec<ParseVerdict> = examples
        .par_iter()
        .enumerate()
        .map(|(index, e)| {
            let error = parse(&normalize_text(&e.query))
                .err()
                .map(|e| e.to_string());
            ParseVerdict {
                index,
                id: e.id,
                ok: error.is_none(),
                error,
            }
        })
        .collect();
    let parsed = verdicts.iter().filter(|v| v.ok).count();
    let rate = if verdicts.is_empty() {
        0.0
    } else {
        parsed as f64 / verdicts.len() as f64
    };
    let report = json!({
        "n_total": verdicts.len(),
        "n_parsed": parsed,
        "parse_rate": rate,
        "results": verdicts,
    });
    emit(args.out.as_deref(), &to_json(&report)?)?;
    eprintln!(
        "parsed {parsed} of {} ({:.2}%)",
        examples.len(),
        rate * 100.0
    );
    Ok(())
}

#[derive(Serialize)]
struct TemplateGroup {
    template: String,
    count: usize,
    ids: Vec<i64>,
}

pub fn template(args: InputArgs) -> Result<(), Failure> {
    let examples = read_examples(&args.input)?;
    let templates: Vec<String> = examples
        .par_iter()
        .map(|e| template_of_text(&e.query).canonical)
        .collect();
    let mut groups: BTreeMap<String, Vec<i64>> = BTreeMap::new();
    for (e, t) in examples.iter().zip(templates) {
        groups.entry(t).or_default().push(e.id);
    }
    let mut groups: Vec<TemplateGroup> = groups
        .into_iter()
        .map(|(template, ids)| TemplateGroup {
            count: ids.len(),
            template,
            ids,
        })
        .collect();
    groups.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.template.cmp(&b.template))
    });
    let report = json!({
        "n_queries": examples.len(),
        "n_templates": groups.len(),
        "templates": groups,
    });
    emit(args.out.as_deref(), &to_json(&report)?)?;
    Ok(())
}

pub fn elements(args: ElementsArgs) -> Result<(), Failure> {
    let tree = parse(&normalize_text(&args.query)).context("query does not parse")?;
    let tree = if args.novalues {
        novalues_view(&tree)
    } else {
        tree
    };
    let mut text = serde_json::to_string(&extract(&tree).elements).map_err(anyhow::Error::from)?;
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    Ok(())
}
