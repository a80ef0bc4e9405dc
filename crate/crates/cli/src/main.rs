use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use iotlog::enrich::{enrich, load_plan_sources, EnrichError};
use iotlog::gen::{generate, write_bundle, GenConfig, GenError};
use iotlog::model::{classify_source, parse_plan, validate_plan, Classification, EnrichmentPlan};
use iotlog::query::{parse_query, run_query};
use iotlog::xes::{parse_xes, validate_log, write_xes_with, Log, WriteOptions};
use serde_json::{json, Value};

const OK: u8 = 0;
const INVALID: u8 = 1;
const INPUT: u8 = 2;
const INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "iotlog",
    version,
    about = "Enrich XES event logs with IoT sensor context and query them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format for results written to stdout.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Check a log and, optionally, a plan.
    Validate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Run a plan over a log and write enriched.xes, report.json and audit.json.
    Enrich {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        /// Directory that source paths in the plan are relative to.
        #[arg(long)]
        sensors: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer a query over a log.
    Query {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        query: String,
    },
    /// Generate a synthetic port-logistics bundle.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Suggest an IoT context category for every stream in a directory.
    Classify {
        #[arg(long)]
        sensors: PathBuf,
        /// Plan whose source hints refine the suggestions.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
}

/// A command that stopped early, with the exit code to report.
struct Failure {
    code: u8,
    message: String,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure {
            code: INTERNAL,
            message: format!("{e:#}"),
        }
    }
}

fn fail(code: u8, stage: &str) -> impl FnOnce(&dyn Display) -> Failure + '_ {
    move |e| Failure {
        code,
        message: format!("{stage}: {e}"),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| fail(INPUT, "read")(&format!("{}: {e}", path.display())))
}

fn load_log(path: &Path) -> Result<Log, Failure> {
    parse_xes(&read(path)?).map_err(|e| fail(INPUT, "parse log")(&format!("{}: {e}", path.display())))
}

fn load_plan(path: &Path) -> Result<EnrichmentPlan, Failure> {
    parse_plan(&read(path)?).map_err(|e| fail(INPUT, "parse plan")(&format!("{}: {e}", path.display())))
}

fn print_table(header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        println!("{}", padded.join("  ").trim_end());
    };
    line(header.iter().map(|h| h.to_string()).collect());
    for row in rows {
        line(row.clone());
    }
}

fn cmd_validate(log: &Path, plan: Option<&Path>, format: Format) -> Result<u8, Failure> {
    let log = load_log(log)?;
    let mut found: Vec<Value> = Vec::new();
    for v in validate_log(&log) {
        let mut v = serde_json::to_value(v).context("serialize violation")?;
        v["in"] = json!("log");
        found.push(v);
    }
    if let Some(plan) = plan {
        for v in validate_plan(&load_plan(plan)?) {
            let mut v = serde_json::to_value(v).context("serialize violation")?;
            v["in"] = json!("plan");
            found.push(v);
        }
    }
    match format {
        Format::Json => {
            for v in &found {
                println!("{v}");
            }
        }
        Format::Table => {
            let rows: Vec<Vec<String>> = found
                .iter()
                .map(|v| {
                    let mut rest = v.clone();
                    let obj = rest.as_object_mut().expect("violations are objects");
                    let input = obj.remove("in").unwrap_or_default();
                    let kind = obj.remove("violation").unwrap_or_default();
                    vec![
                        input.as_str().unwrap_or_default().to_string(),
                        kind.as_str().unwrap_or_default().to_string(),
                        Value::Object(obj.clone()).to_string(),
                    ]
                })
                .collect();
            print_table(&["in", "violation", "details"], &rows);
        }
    }
    Ok(if found.is_empty() { OK } else { INVALID })
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("write {}", path.display()))
}

fn pretty(value: &impl serde::Serialize) -> anyhow::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn cmd_enrich(log: &Path, plan: &Path, sensors: &Path, out: &Path, format: Format) -> Result<u8, Failure> {
    let log = load_log(log)?;
    let plan = load_plan(plan)?;
    let violations = validate_plan(&plan);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{}", serde_json::to_string(v).context("serialize violation")?);
        }
        return Err(fail(INVALID, "validate plan")(&format!(
            "{} violations",
            violations.len()
        )));
    }
    let index = load_plan_sources(&plan, sensors).map_err(|e| fail(INPUT, "ingest")(&e))?;
    let result = enrich(&log, &index, &plan).map_err(|e| match &e {
        EnrichError::InvalidLog(violations) => {
            for v in violations {
                eprintln!("{}", serde_json::to_string(v).unwrap_or_default());
            }
            fail(INVALID, "validate log")(&e)
        }
        _ => fail(INVALID, "enrich")(&e),
    })?;
    fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
    let options = WriteOptions {
        case_id_type: plan.case_id_type,
    };
    write_file(&out.join("enriched.xes"), &write_xes_with(&result.log, options))?;
    write_file(&out.join("report.json"), &pretty(&result.report)?)?;
    let audit = json!({ "records": result.audit, "warnings": result.warnings });
    write_file(&out.join("audit.json"), &pretty(&audit)?)?;

    let derived = result
        .audit
        .iter()
        .filter(|r| r.action == iotlog::enrich::AuditAction::DerivedEvent)
        .count();
    let summary = json!({
        "traces": result.log.traces.len(),
        "events": result.log.event_count(),
        "attributes_added": result.audit.len() - derived,
        "derived_events": derived,
        "warnings": result.warnings.len(),
        "report": result.report.entries,
    });
    match format {
        Format::Json => println!("{summary}"),
        Format::Table => {
            let mut rows: Vec<Vec<String>> = ["traces", "events", "attributes_added", "derived_events", "warnings"]
                .iter()
                .map(|k| vec![k.to_string(), summary[k].to_string()])
                .collect();
            for (metric, value) in &result.report.entries {
                let value = value.map_or("-".to_string(), |v| v.to_string());
                rows.push(vec![metric.clone(), value]);
            }
            print_table(&["item", "value"], &rows);
        }
    }
    Ok(OK)
}

fn cmd_query(log: &Path, text: &str, format: Format) -> Result<u8, Failure> {
    let query = parse_query(text).map_err(|e| fail(INPUT, "parse query")(&e))?;
    let log = load_log(log)?;
    let result = run_query(&log, &query);
    match format {
        Format::Json => println!("{}", result.to_json()),
        Format::Table => {
            let rows: Vec<Vec<String>> = match query.projection {
                iotlog::query::Projection::Count => vec![vec![result.count.to_string()]],
                iotlog::query::Projection::CaseIds => result.case_ids.iter().map(|c| vec![c.clone()]).collect(),
            };
            let header = match query.projection {
                iotlog::query::Projection::Count => "count",
                iotlog::query::Projection::CaseIds => "case_id",
            };
            print_table(&[header], &rows);
            for e in &result.errors {
                eprintln!("type error: {}", serde_json::to_string(e).context("serialize error")?);
            }
        }
    }
    Ok(if result.errors.is_empty() { OK } else { INVALID })
}

fn cmd_gen(config: &Path, out: &Path) -> Result<u8, Failure> {
    let bytes = read(config)?;
    let config: GenConfig = serde_json::from_slice(&bytes).map_err(|e| fail(INPUT, "parse config")(&e))?;
    let generated = generate(&config).map_err(|e| fail(INPUT, "gen")(&e))?;
    write_bundle(&generated, out).map_err(|e| match e {
        GenError::InvalidConfig(_) => fail(INPUT, "gen")(&e),
        GenError::Io { .. } => fail(INTERNAL, "write bundle")(&e),
    })?;
    let m = &generated.manifest;
    eprintln!(
        "{} cases, {} interrupted, {} interrupted at night, {} retrofitted -> {}",
        m.per_case.len(),
        m.interrupted_cases.len(),
        m.interrupted_night_pickups,
        m.fraud_cases.len(),
        out.display()
    );
    Ok(OK)
}

fn cmd_classify(sensors: &Path, plan: Option<&Path>, format: Format) -> Result<u8, Failure> {
    let plan = plan.map(load_plan).transpose()?;
    let entries = fs::read_dir(sensors).map_err(|e| fail(INPUT, "read")(&format!("{}: {e}", sensors.display())))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| fail(INPUT, "read")(&e))?.path();
        let is_stream = matches!(path.extension().and_then(|e| e.to_str()), Some("csv" | "jsonl"));
        if path.is_file() && is_stream {
            files.push(path);
        }
    }
    files.sort();

    let mut rows = Vec::new();
    for path in &files {
        let file = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let declared = plan.as_ref().and_then(|p| p.sources.iter().find(|s| s.path == file));
        let sensor_type = declared.map_or_else(
            || path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
            |s| s.sensor_type.clone(),
        );
        let hints = declared.map(|s| s.hints.clone()).unwrap_or_default();
        let suggestion = match classify_source(&sensor_type, &hints) {
            Classification::Suggested(category) => serde_json::to_value(category).context("serialize category")?,
            Classification::Unclassified => Value::Null,
        };
        rows.push(json!({ "file": file, "sensor_type": sensor_type, "category": suggestion }));
    }
    match format {
        Format::Json => {
            for row in &rows {
                println!("{row}");
            }
        }
        Format::Table => {
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r["file"].as_str().unwrap_or_default().to_string(),
                        r["sensor_type"].as_str().unwrap_or_default().to_string(),
                        r["category"].as_str().unwrap_or("unclassified").to_string(),
                    ]
                })
                .collect();
            print_table(&["file", "sensor_type", "category"], &cells);
        }
    }
    Ok(OK)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let format = cli.format;
    match cli.command {
        Command::Validate { log, plan } => cmd_validate(&log, plan.as_deref(), format),
        Command::Enrich {
            log,
            plan,
            sensors,
            out,
        } => cmd_enrich(&log, &plan, &sensors, &out, format),
        Command::Query { log, query } => cmd_query(&log, &query, format),
        Command::Gen { config, out } => cmd_gen(&config, &out),
        Command::Classify { sensors, plan } => cmd_classify(&sensors, plan.as_deref(), format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { INPUT } else { OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = std::panic::catch_unwind(|| run(cli)).unwrap_or_else(|_| {
        Err(Failure {
            code: INTERNAL,
            message: "internal error".into(),
        })
    });
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
