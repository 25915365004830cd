use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use idxcost::cost::{check_soundness, collapse_to_atoms, compute_kappa, Mode};
use idxcost::dependent::{
    build_dependent, render_symbolic, simplify, symbolic_costs, SimplifyOptions,
};
use idxcost::gen::GenParams;
use idxcost::harness::{dependent_costs, verify, VerifyConfig};
use idxcost::instrument::{instrument_indexed, instrument_plain};
use idxcost::label::{label_indexed, label_plain};
use idxcost::semantics::{format_trace, run, Store, DEFAULT_FUEL};
use idxcost::syntax::{
    parse_program, parse_program_with, pretty_print, CostAtom, ParseOptions, Stmt,
};
use idxcost::transform::{apply_script, check_non_overlap, list_loops, TransformScript};
use idxcost::vm::{lower, vm_run, CostModel, VmProgram};

#[derive(Parser)]
#[command(
    name = "idxcost",
    version,
    about = "Indexed cost labels for a small imperative language"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label a plain program.
    Label {
        file: PathBuf,
        /// Plain labels with empty indexings.
        #[arg(long, conflicts_with = "indexed")]
        plain: bool,
        /// Indexed labels and loop indexes (the default).
        #[arg(long)]
        indexed: bool,
        #[arg(long)]
        json: bool,
    },
    /// Apply a peel/unroll script to an index-labelled program. Unlabelled
    /// input is labelled first.
    Transform {
        file: PathBuf,
        #[arg(long, required_unless_present = "list_loops")]
        script: Option<PathBuf>,
        /// Print the path and index of every loop instead.
        #[arg(long)]
        list_loops: bool,
        #[arg(long)]
        json: bool,
    },
    /// Compile a program to a VM listing.
    Compile {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Static cost of every label in a VM listing (or a program, compiled first).
    Analyze {
        file: PathBuf,
        #[command(flatten)]
        opts: PipelineOpts,
    },
    /// Label, transform, compile and analyse, then print the instrumented source.
    Annotate {
        file: PathBuf,
        #[command(flatten)]
        opts: PipelineOpts,
        /// Print each atom's dependent cost with symbolic leaves a, b, ...
        #[arg(long)]
        symbolic: bool,
        /// Instrument with one cost per atom instead of dependent costs.
        #[arg(long)]
        plain: bool,
    },
    /// Run a program or a VM listing.
    Run {
        file: PathBuf,
        #[arg(long, default_value = "")]
        store: String,
        /// Accept the reserved `__cost` and `__idx<k>` variables, as in
        /// annotate output.
        #[arg(long)]
        instrumented: bool,
        #[command(flatten)]
        opts: PipelineOpts,
    },
    /// Random end-to-end checks of the whole pipeline.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 3)]
        stores: usize,
        #[command(flatten)]
        opts: PipelineOpts,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Strict,
    Sound,
}

#[derive(Args)]
struct PipelineOpts {
    #[arg(long)]
    script: Option<PathBuf>,
    /// JSON cost model; unspecified instructions keep their default cost.
    #[arg(long)]
    costs: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "strict")]
    mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_FUEL, value_parser = clap::value_parser!(u64).range(1..))]
    fuel: u64,
    #[arg(long)]
    json: bool,
}

struct PipelineConfig {
    script: TransformScript,
    costs: CostModel,
    mode: Mode,
    fuel: u64,
    json: bool,
}

impl PipelineOpts {
    fn load(&self) -> anyhow::Result<PipelineConfig> {
        let script = match &self.script {
            Some(p) => TransformScript::parse(&read(p)?).map_err(|e| usage(e, p))?,
            None => TransformScript(Vec::new()),
        };
        let costs = match &self.costs {
            Some(p) => CostModel::from_json(&read(p)?).map_err(|e| usage(e, p))?,
            None => CostModel::default(),
        };
        let mode = match self.mode {
            ModeArg::Strict => Mode::Strict,
            ModeArg::Sound => Mode::Sound,
        };
        Ok(PipelineConfig {
            script,
            costs,
            mode,
            fuel: self.fuel,
            json: self.json,
        })
    }
}

/// Bad input: exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl std::fmt::Display, file: &Path) -> anyhow::Error {
    anyhow!(Usage(format!("{}: {e}", file.display())))
}

fn read(p: &Path) -> anyhow::Result<String> {
    fs::read_to_string(p).map_err(|e| usage(e, p))
}

fn read_program(p: &Path) -> anyhow::Result<Stmt> {
    parse_program(&read(p)?).map_err(|e| usage(e, p))
}

fn looks_like_listing(text: &str) -> bool {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty());
    first.is_some_and(|l| {
        l.split_once(':')
            .is_some_and(|(a, _)| !a.is_empty() && a.bytes().all(|b| b.is_ascii_digit()))
    })
}

enum Loaded {
    Source(Stmt),
    Listing(VmProgram),
}

fn read_program_or_listing(p: &Path, allow_reserved: bool) -> anyhow::Result<Loaded> {
    let text = read(p)?;
    if looks_like_listing(&text) {
        VmProgram::parse(&text)
            .map(Loaded::Listing)
            .map_err(|e| usage(e, p))
    } else {
        parse_program_with(&text, ParseOptions { allow_reserved })
            .map(Loaded::Source)
            .map_err(|e| usage(e, p))
    }
}

fn emit(json: bool, value: Value, text: impl FnOnce() -> String) {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&value).expect("values serialise")
        );
    } else {
        print!("{}", text());
    }
}

fn store_json(s: &Store) -> Value {
    Value::Object(s.iter().map(|(k, v)| (k.to_string(), json!(v))).collect())
}

fn indexed_source(s: Stmt) -> anyhow::Result<Stmt> {
    if s.has_labels_or_indexes() {
        Ok(s)
    } else {
        Ok(label_indexed(&s)?)
    }
}

fn cmd_label(file: &Path, plain: bool, json: bool) -> anyhow::Result<ExitCode> {
    let p = read_program(file)?;
    let labelled = if plain {
        label_plain(&p)
    } else {
        label_indexed(&p)
    }
    .map_err(|e| usage(e, file))?;
    let text = pretty_print(&labelled) + "\n";
    emit(json, json!({ "program": text }), || text.clone());
    Ok(ExitCode::SUCCESS)
}

fn cmd_transform(
    file: &Path,
    script: Option<&Path>,
    list: bool,
    json: bool,
) -> anyhow::Result<ExitCode> {
    let p = indexed_source(read_program(file)?)?;
    if list {
        let loops = list_loops(&p);
        let rows: Vec<(String, String)> = loops
            .iter()
            .map(|(path, k)| (path.to_string(), k.map_or("-".into(), |k| k.to_string())))
            .collect();
        let value = json!(rows
            .iter()
            .map(|(p, k)| json!({ "path": p, "index": k }))
            .collect::<Vec<_>>());
        emit(json, value, || {
            rows.iter().map(|(p, k)| format!("{p} {k}\n")).collect()
        });
        return Ok(ExitCode::SUCCESS);
    }
    let script_path = script.expect("clap requires --script");
    let script = TransformScript::parse(&read(script_path)?).map_err(|e| usage(e, script_path))?;
    let q = apply_script(&p, &script).map_err(|e| usage(e, script_path))?;
    let report = check_non_overlap(&q);
    let text = pretty_print(&q) + "\n";
    let violations: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
    emit(
        json,
        json!({ "program": text, "non_overlap": { "ok": report.is_ok(), "violations": violations } }),
        || text.clone(),
    );
    if !json {
        eprint!("{report}");
    }
    Ok(if report.is_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_compile(file: &Path, json: bool) -> anyhow::Result<ExitCode> {
    let vm = lower(&read_program(file)?);
    let listing = vm.to_string();
    let instrs: Vec<String> = vm.instrs().iter().map(ToString::to_string).collect();
    emit(json, json!({ "instructions": instrs }), || listing.clone());
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(file: &Path, opts: &PipelineOpts) -> anyhow::Result<ExitCode> {
    let cfg = opts.load()?;
    let vm = match read_program_or_listing(file, false)? {
        Loaded::Listing(vm) => vm,
        Loaded::Source(s) => lower(&apply_script(&s, &cfg.script)?),
    };
    let soundness = check_soundness(&vm);
    if !soundness.is_ok() {
        let cycles = soundness.cycles.clone();
        emit(
            cfg.json,
            json!({ "sound": false, "cycles": cycles }),
            || soundness.to_string(),
        );
        return Ok(ExitCode::from(1));
    }
    let report = compute_kappa(&vm, &cfg.costs, cfg.mode)?;
    let mut value = report.to_json();
    value["sound"] = json!(true);
    emit(cfg.json, value, || format!("{soundness}{report}"));
    Ok(ExitCode::SUCCESS)
}

fn cmd_annotate(
    file: &Path,
    opts: &PipelineOpts,
    symbolic: bool,
    plain: bool,
) -> anyhow::Result<ExitCode> {
    let cfg = opts.load()?;
    let source = read_program(file)?;
    let indexed = label_indexed(&source).map_err(|e| usage(e, file))?;
    let transformed = apply_script(&indexed, &cfg.script)?;
    let report = compute_kappa(&lower(&transformed), &cfg.costs, cfg.mode)?;
    let atoms: Vec<CostAtom> = indexed
        .labels()
        .into_iter()
        .map(|l| l.atom.clone())
        .collect();

    if symbolic {
        let mut rendered = BTreeMap::new();
        for a in &atoms {
            let k = build_dependent(a, &symbolic_costs(a, &report.costs))?;
            let k = simplify(&k, SimplifyOptions { merge_equal: false });
            rendered.insert(a.to_string(), render_symbolic(&k));
        }
        emit(cfg.json, json!({ "dependent_costs": rendered }), || {
            rendered
                .iter()
                .map(|(a, k)| format!("{a} = {k}\n"))
                .collect()
        });
        return Ok(ExitCode::SUCCESS);
    }

    let (instrumented, costs) = if plain {
        let mut costs = collapse_to_atoms(&report.costs);
        for a in &atoms {
            costs.entry(a.clone()).or_insert(0);
        }
        let rendered: BTreeMap<String, String> = costs
            .iter()
            .map(|(a, c)| (a.to_string(), c.to_string()))
            .collect();
        (instrument_plain(&label_plain(&source)?, &costs)?, rendered)
    } else {
        let dependent = dependent_costs(&report.costs, &atoms, true)?;
        let rendered = dependent
            .iter()
            .map(|(a, k)| (a.to_string(), k.to_string()))
            .collect();
        (instrument_indexed(&indexed, &dependent)?, rendered)
    };
    let text = pretty_print(&instrumented.program) + "\n";
    emit(cfg.json, json!({ "program": text, "costs": costs }), || {
        text.clone()
    });
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(
    file: &Path,
    store: &str,
    instrumented: bool,
    opts: &PipelineOpts,
) -> anyhow::Result<ExitCode> {
    let cfg = opts.load()?;
    let store = Store::parse(store).map_err(|e| anyhow!(Usage(format!("--store: {e}"))))?;
    let (trace, out, cost, steps) = match read_program_or_listing(file, instrumented)? {
        Loaded::Listing(vm) => {
            let r = vm_run(&vm, store, cfg.fuel, &cfg.costs)?;
            (r.trace, r.store, Some(r.cost), r.steps)
        }
        Loaded::Source(s) => {
            let r = run(&apply_script(&s, &cfg.script)?, store, cfg.fuel)?;
            (r.trace, r.store, None, r.steps)
        }
    };
    let labels: Vec<String> = trace.iter().map(|l| l.compact()).collect();
    let value = json!({ "trace": labels, "store": store_json(&out), "cost": cost, "steps": steps });
    emit(cfg.json, value, || {
        let mut s = format_trace(&trace);
        s += &format!("store: {out}\n");
        if let Some(c) = cost {
            s += &format!("cost: {c}\n");
        }
        s
    });
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(
    seed: u64,
    trials: u64,
    stores: usize,
    opts: &PipelineOpts,
) -> anyhow::Result<ExitCode> {
    let cfg = opts.load()?;
    let report = verify(&VerifyConfig {
        params: GenParams {
            seed,
            ..GenParams::default()
        },
        trials,
        stores_per_trial: stores,
        fuel: cfg.fuel,
        costs: cfg.costs,
    });
    emit(cfg.json, serde_json::to_value(&report)?, || {
        report.to_string()
    });
    Ok(if report.is_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use idxcost::Error as E;
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<E>() {
        Some(
            E::Parse { .. }
            | E::BadPath { .. }
            | E::InvalidFactor(_)
            | E::ScriptStep { .. }
            | E::AlreadyLabelled
            | E::InvalidIdent(_)
            | E::ReservedIdent(_)
            | E::MalformedProgram(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Label {
            file, plain, json, ..
        } => cmd_label(file, *plain, *json),
        Command::Transform {
            file,
            script,
            list_loops,
            json,
        } => cmd_transform(file, script.as_deref(), *list_loops, *json),
        Command::Compile { file, json } => cmd_compile(file, *json),
        Command::Analyze { file, opts } => cmd_analyze(file, opts),
        Command::Annotate {
            file,
            opts,
            symbolic,
            plain,
        } => cmd_annotate(file, opts, *symbolic, *plain),
        Command::Run {
            file,
            store,
            instrumented,
            opts,
        } => cmd_run(file, store, *instrumented, opts),
        Command::Verify {
            seed,
            trials,
            stores,
            opts,
        } => cmd_verify(*seed, *trials, *stores, opts),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
