use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use gsn_engine::caseio::{parse_interchange, parse_native, serialize_native, CaseDocument};
use gsn_engine::model::Case;
use gsn_service::{http, ApiRequest, ApiResponse, Body, Method, Service};

#[derive(Parser)]
#[command(name = "gsn", version, about = "Assurance-case engine for GSN arguments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Ttl,
}

impl Format {
    fn as_str(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Ttl => "ttl",
        }
    }

    fn of(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ttl") => Format::Ttl,
            _ => Format::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Structural diagnostics and completeness warnings; exit 1 on errors.
    Validate { file: PathBuf },
    /// Run the rules to a fixpoint.
    Infer {
        file: PathBuf,
        /// Derivation chain for one flag, as `id:flag`.
        #[arg(long)]
        explain: Option<String>,
    },
    /// Run a catalogue query.
    Query {
        file: PathBuf,
        #[arg(long = "cq")]
        id: String,
        /// Query parameter, `name=value`; repeatable.
        #[arg(long = "param", value_parser = parse_pair)]
        params: Vec<(String, String)>,
    },
    /// Evaluate a selector.
    Select { file: PathBuf, selector: String },
    /// Print the case in the native or interchange format.
    Export {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Read a case (format from the extension unless given) and print it
    /// in native form.
    Import {
        file: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long = "case", env = "CASE_PATH")]
        case: Option<PathBuf>,
        /// Hook registry file, created on first registration.
        #[arg(long)]
        hooks: Option<PathBuf>,
    },
    /// Fire periodic hooks as of `--now`.
    Tick {
        file: PathBuf,
        #[arg(long)]
        now: String,
        #[arg(long)]
        hooks: Option<PathBuf>,
        /// Write the updated case back to the file.
        #[arg(long)]
        write: bool,
    },
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("`{s}` is not name=value"))
}

fn read_case(path: &Path, format: Format) -> Result<Case> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc = match format {
        Format::Json => parse_native(&text),
        Format::Ttl => parse_interchange(&text),
    }
    .with_context(|| format!("parsing {}", path.display()))?;
    Ok(doc.case)
}

fn load(path: &Path) -> Result<Service> {
    Ok(Service::new(read_case(path, Format::of(path))?))
}

fn emit(res: &ApiResponse) -> ExitCode {
    print!("{}", res.body.render());
    if res.is_success() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let code = match cli.command {
        Command::Validate { file } => {
            let res = load(&file)?.handle(&ApiRequest::new(Method::Post, "/validate"));
            let ok = matches!(&res.body, Body::Json(v) if v["ok"] == true);
            let code = emit(&res);
            if ok {
                code
            } else {
                ExitCode::FAILURE
            }
        }
        Command::Infer { file, explain } => {
            let body = match explain {
                Some(e) => json!({ "explain": e }),
                None => json!({}),
            };
            emit(&load(&file)?.handle(&ApiRequest::new(Method::Post, "/infer").json(&body)))
        }
        Command::Query { file, id, params } => {
            let params: BTreeMap<String, String> = params.into_iter().collect();
            let req = ApiRequest::new(Method::Post, format!("/queries/{id}")).json(&json!(params));
            emit(&load(&file)?.handle(&req))
        }
        Command::Select { file, selector } => {
            emit(&load(&file)?.handle(&ApiRequest::new(Method::Post, "/selector").body(selector)))
        }
        Command::Export { file, format } => {
            let req = ApiRequest::new(Method::Get, "/case/export").param("format", format.as_str());
            emit(&load(&file)?.handle(&req))
        }
        Command::Import { file, format } => {
            let case = read_case(&file, format.unwrap_or_else(|| Format::of(&file)))?;
            print!("{}", serialize_native(&CaseDocument::new(case)));
            ExitCode::SUCCESS
        }
        Command::Serve { port, case, hooks } => {
            let case = match case {
                Some(path) => read_case(&path, Format::of(&path))?,
                None => Case::new("case", "case"),
            };
            let mut service = Service::new(case);
            if let Some(path) = hooks {
                service = service.with_hook_file(path).map_err(|e| anyhow!("{e:?}"))?;
            }
            let addr = SocketAddr::from(([0, 0, 0, 0], port));
            tokio::runtime::Runtime::new()?.block_on(http::serve(Arc::new(service), addr))?;
            ExitCode::SUCCESS
        }
        Command::Tick { file, now, hooks, write } => {
            let mut service = load(&file)?;
            if let Some(path) = hooks {
                if !path.exists() {
                    bail!("no hook file {}", path.display());
                }
                service = service.with_hook_file(path).map_err(|e| anyhow!("{e:?}"))?;
            }
            let res = service.handle(&ApiRequest::new(Method::Post, "/tick").json(&json!({ "now": now })));
            if write && res.is_success() {
                let doc = CaseDocument::new(service.snapshot().case().clone());
                let text = match Format::of(&file) {
                    Format::Json => serialize_native(&doc),
                    Format::Ttl => gsn_engine::caseio::serialize_interchange(&doc),
                };
                std::fs::write(&file, text).with_context(|| format!("writing {}", file.display()))?;
            }
            emit(&res)
        }
    };
    Ok(code)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
