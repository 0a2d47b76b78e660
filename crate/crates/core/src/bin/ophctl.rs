//! `ophctl`: command-line front end.
//!
//! Exit codes: 0 success, 1 validation error, 2 backend error.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ophglm::config::Config;
use ophglm::dialogue::{chat_turn, ChatSession, DialogueError};
use ophglm::forge::clean::{clean, CleanOutcome};
use ophglm::forge::dedup::dedup_and_append;
use ophglm::forge::gate::gate_pool;
use ophglm::forge::records::{filter_ophthalmic, read_jsonl};
use ophglm::forge::{
    export_finetune, generate_batch, make_dialogue_prompt, make_knowledge_prompt, run_batch, ForgeError,
    GenerationPrompt, HeuristicScorer, KnowledgeRecord, Overrides, Pool, PoolInstance, RawDialogue, RawInstance,
};
use ophglm::metrics::{evaluate_files, EvalError};
use ophglm::pipeline::{read_case_list, run_diagnosis, PipelineError};
use ophglm::report::render_report;
use ophglm::service::{Api, ApiOptions, HttpServer};
use ophglm::store::write_jsonl_atomic;

#[derive(Parser)]
#[command(name = "ophctl", version, about = "Fundus diagnosis, report chat, dataset forge and evaluation")]
struct Cli {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Diagnose every case in a case-list TSV and print or write the reports.
    Diagnose {
        case_list: PathBuf,
        /// Write `<case_id>.txt` and `<case_id>.json` here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against ground truth and print the metrics table.
    Eval {
        predictions: PathBuf,
        truth: PathBuf,
        #[arg(long)]
        csv: bool,
    },
    /// Dataset forge stages.
    Forge {
        #[command(subcommand)]
        stage: ForgeCmd,
    },
    /// Chat over stdin, optionally grounded on a diagnosed case.
    Chat {
        /// Case-list TSV holding the case to diagnose first.
        #[arg(long, requires = "case")]
        case_list: Option<PathBuf>,
        #[arg(long)]
        case: Option<String>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Subcommand)]
enum ForgeCmd {
    /// Build generation prompts from knowledge records and dialogues.
    Prompts {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        dialogues: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Send prompts to the configured LLM.
    Generate {
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clean raw generations into pending instances.
    Clean {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deduplicate cleaned instances into the pool.
    Dedup {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Gate pending instances and apply human overrides.
    Gate {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        overrides: Option<PathBuf>,
        #[arg(long)]
        review_queue: Option<PathBuf>,
    },
    /// Export accepted instances as fine-tune JSONL.
    Export {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite the pool log with one record per instance.
    Compact {
        #[arg(long)]
        pool: PathBuf,
    },
    /// All stages from records to gated pool in one go.
    Run {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        dialogues: Option<PathBuf>,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        overrides: Option<PathBuf>,
        #[arg(long)]
        review_queue: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure { code: 1, msg: e.to_string() }
}

fn backend(e: impl std::fmt::Display) -> Failure {
    Failure { code: 2, msg: e.to_string() }
}

impl From<ForgeError> for Failure {
    fn from(e: ForgeError) -> Self {
        invalid(e)
    }
}

fn pipeline_failure(e: PipelineError) -> Failure {
    if e.is_backend_failure() {
        backend(e)
    } else {
        invalid(e)
    }
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("summary serializes"));
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ophctl: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(p) => Config::load(p).map_err(invalid)?,
        None => Config::default(),
    };
    match cli.cmd {
        Cmd::Diagnose { case_list, out } => diagnose(&config, &case_list, out.as_deref()),
        Cmd::Eval { predictions, truth, csv } => {
            let table = evaluate_files(&predictions, &truth).map_err(|e: EvalError| invalid(e))?;
            print!("{}", if csv { table.render_csv() } else { table.render_text() });
            Ok(())
        }
        Cmd::Forge { stage } => forge(&config, stage),
        Cmd::Chat { case_list, case } => chat(&config, case_list.as_deref(), case.as_deref()),
        Cmd::Serve { bind } => serve(&config, bind),
    }
}

fn diagnose(config: &Config, case_list: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let cases = read_case_list(case_list).map_err(invalid)?;
    let backend_impl = config.build_backend().map_err(invalid)?;
    let template = config.report_template().map_err(invalid)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    }
    for case in &cases {
        let findings = run_diagnosis(case, backend_impl.as_ref(), &config.pipeline).map_err(pipeline_failure)?;
        let report = render_report(&findings, case, &template).map_err(invalid)?;
        match out {
            Some(dir) => {
                let write = |name: String, body: &[u8]| {
                    let p = dir.join(name);
                    std::fs::write(&p, body).map_err(|e| invalid(format!("{}: {e}", p.display())))
                };
                write(format!("{}.txt", case.case_id), report.text.as_bytes())?;
                let json = serde_json::to_vec_pretty(&serde_json::json!({"findings": findings, "report": report}))
                    .expect("findings serialize");
                write(format!("{}.json", case.case_id), &json)?;
            }
            None => print!("{}", report.text),
        }
    }
    Ok(())
}

fn load_sources(
    config: &Config,
    records: Option<&Path>,
    dialogues: Option<&Path>,
) -> Result<(Vec<KnowledgeRecord>, Vec<RawDialogue>), Failure> {
    let records = match records {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let dialogues = match dialogues {
        Some(p) => filter_ophthalmic(read_jsonl(p)?, &config.forge.keywords),
        None => Vec::new(),
    };
    if records.is_empty() && dialogues.is_empty() {
        return Err(invalid("no knowledge records or ophthalmic dialogues to process"));
    }
    Ok((records, dialogues))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<(), Failure> {
    write_jsonl_atomic(path, items).map_err(invalid)
}

fn forge(config: &Config, stage: ForgeCmd) -> Result<(), Failure> {
    let batch = config.batch_config().map_err(invalid)?;
    match stage {
        ForgeCmd::Prompts { records, dialogues, out } => {
            let (records, dialogues) = load_sources(config, records.as_deref(), dialogues.as_deref())?;
            let mut prompts = Vec::new();
            for r in &records {
                prompts.push(make_knowledge_prompt(r, &batch.template)?);
            }
            prompts.extend(dialogues.iter().map(|d| make_dialogue_prompt(d, &batch.template)));
            write_jsonl(&out, &prompts)?;
            print_json(&serde_json::json!({"prompts": prompts.len()}));
        }
        ForgeCmd::Generate { prompts, out } => {
            let prompts: Vec<GenerationPrompt> = read_jsonl(&prompts)?;
            let llm = config.build_forge_llm();
            let (raws, summary) = generate_batch(&prompts, llm.as_ref(), batch.params);
            write_jsonl(&out, &raws)?;
            print_json(&summary);
            if summary.ok == 0 && summary.failed > 0 {
                return Err(backend("every generation request failed"));
            }
        }
        ForgeCmd::Clean { raw, out } => {
            let raws: Vec<RawInstance> = read_jsonl(&raw)?;
            let mut kept = Vec::new();
            let mut rejected = 0usize;
            for r in &raws {
                match clean(r, &batch.cleaning) {
                    CleanOutcome::Kept(i) => kept.push(i),
                    CleanOutcome::Rejected(reason) => {
                        tracing::info!(prompt = %r.prompt.prompt_id, %reason, "rejected by cleaning");
                        rejected += 1;
                    }
                }
            }
            write_jsonl(&out, &kept)?;
            print_json(&serde_json::json!({"kept": kept.len(), "rejected": rejected}));
        }
        ForgeCmd::Dedup { pool, input } => {
            let mut pool = Pool::open(&pool)?;
            let candidates: Vec<PoolInstance> = read_jsonl(&input)?;
            let summary = dedup_and_append(&mut pool, candidates, batch.dedup_threshold)?;
            print_json(&summary);
        }
        ForgeCmd::Gate { pool, overrides, review_queue } => {
            let mut pool = Pool::open(&pool)?;
            let overrides = match overrides {
                Some(p) => Overrides::load(&p)?,
                None => Overrides::default(),
            };
            let summary = gate_pool(
                &mut pool,
                &HeuristicScorer::default(),
                batch.gate_threshold,
                &overrides,
                review_queue.as_deref(),
            )?;
            print_json(&summary);
        }
        ForgeCmd::Export { pool, out } => {
            let pool = Pool::open(&pool)?;
            print_json(&export_finetune(&pool, &out)?);
        }
        ForgeCmd::Compact { pool } => {
            let mut pool = Pool::open(&pool)?;
            pool.compact()?;
            print_json(&serde_json::json!({"instances": pool.len()}));
        }
        ForgeCmd::Run { records, dialogues, pool, overrides, review_queue } => {
            let (records, dialogues) = load_sources(config, records.as_deref(), dialogues.as_deref())?;
            let mut pool = Pool::open(&pool)?;
            let overrides = match overrides {
                Some(p) => Overrides::load(&p)?,
                None => Overrides::default(),
            };
            let llm = config.build_forge_llm();
            let summary = run_batch(
                &records,
                &dialogues,
                llm.as_ref(),
                &HeuristicScorer::default(),
                &overrides,
                &batch,
                &mut pool,
                review_queue.as_deref(),
            )?;
            print_json(&summary);
            if summary.generated == 0 && summary.generation_failed > 0 {
                return Err(backend("every generation request failed"));
            }
        }
    }
    Ok(())
}

fn chat(config: &Config, case_list: Option<&Path>, case_id: Option<&str>) -> Result<(), Failure> {
    let tpl = config.prompt_template().map_err(invalid)?;
    let llm = config.build_llm();
    let mut session = ChatSession::new("cli");
    if let (Some(list), Some(id)) = (case_list, case_id) {
        let cases = read_case_list(list).map_err(invalid)?;
        let case = cases
            .iter()
            .find(|c| c.case_id == id)
            .ok_or_else(|| invalid(format!("case {id} not in {}", list.display())))?;
        let backend_impl = config.build_backend().map_err(invalid)?;
        let findings = run_diagnosis(case, backend_impl.as_ref(), &config.pipeline).map_err(pipeline_failure)?;
        let report = render_report(&findings, case, &config.report_template().map_err(invalid)?).map_err(invalid)?;
        session.attach_report(report).map_err(invalid)?;
    }
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    for line in stdin.lock().lines() {
        let line = line.map_err(invalid)?;
        if line.trim().is_empty() {
            continue;
        }
        match chat_turn(&mut session, &line, llm.as_ref(), &tpl) {
            Ok(turn) => {
                let _ = writeln!(stdout, "{}", turn.text);
            }
            Err(e @ DialogueError::Backend(_)) => return Err(backend(e)),
            Err(e) => return Err(invalid(e)),
        }
    }
    Ok(())
}

fn serve(config: &Config, bind: Option<String>) -> Result<(), Failure> {
    let backend_impl = config.build_backend().map_err(invalid)?;
    let opts = ApiOptions {
        pipeline: config.pipeline.clone(),
        report_template: config.report_template().map_err(invalid)?,
        prompt_template: config.prompt_template().map_err(invalid)?,
        max_upload_bytes: config.service.max_upload_bytes,
        data_dir: config.service.data_dir.clone(),
    };
    let api = Api::new(backend_impl, config.build_llm(), opts).map_err(invalid)?;
    let bind = bind.unwrap_or_else(|| config.service.bind.clone());
    let server = HttpServer::bind(&bind).map_err(|e| invalid(format!("bind {bind}: {e}")))?;
    tracing::info!(addr = ?server.local_addr(), "listening");
    eprintln!("ophctl: listening on {bind}");
    server.run(&api, config.service.workers);
    Ok(())
}
