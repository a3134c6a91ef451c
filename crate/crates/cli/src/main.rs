use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use placement::analysis::{evaluate, CostReport, SliceOptions};
use placement::bench::{self, BenchCase};
use placement::dpr::{inter_level, theta};
use placement::mapping::{build_schedule_tree, check_legality};
use placement::oracle::{diff, simulate};
use placement::report::{energy_csv, report_json, to_json_string, volumes_csv, OracleCheck};

const BUDGET_ENV: &str = "PLACEMENT_BUDGET";

#[derive(Parser)]
#[command(name = "placement", version, about = "Analytical cost model for loop-nest mappings on spatial accelerators")]
struct Cli {
    /// Enumeration budget (largest relation or set materialised); overrides PLACEMENT_BUDGET.
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Inputs {
    /// Architecture config: a file path or a builtin name.
    #[arg(long)]
    arch: String,
    /// Mapping config: a file path or a builtin name.
    #[arg(long)]
    mapping: String,
    /// Workload config: a file path or a builtin name (e.g. gemm-256, alexnet-conv2).
    #[arg(long)]
    workload: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check legality, analyse and write a JSON cost report.
    Analyze {
        #[command(flatten)]
        inputs: Inputs,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write `<prefix>.volumes.csv` and `<prefix>.energy.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Stop after the legality check.
        #[arg(long)]
        check_only: bool,
        /// Cross-check volumes against the trace oracle (small problems only).
        #[arg(long)]
        with_oracle: bool,
        /// Write the oracle's classified access log here (implies --with-oracle).
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
    /// Legality check only.
    Check {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Run a shipped suite and write per-case reports and CSV breakdowns.
    Bench {
        /// Suite name: gemm, conv, full or small.
        suite: String,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        #[arg(long)]
        with_oracle: bool,
    },
    /// Print placement relations in brace notation.
    DumpDpr {
        #[command(flatten)]
        inputs: Inputs,
        /// Restrict to one array.
        #[arg(long)]
        array: Option<String>,
        /// Restrict to one level.
        #[arg(long)]
        level: Option<String>,
        /// Print the inter-level relations (parent placement -> child placement).
        #[arg(long)]
        inter: bool,
    },
    /// List builtin configs and suites.
    List,
}

/// Errors that map to a dedicated exit status.
#[derive(Debug)]
enum Failure {
    Oracle(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Oracle(m) => write!(f, "oracle mismatch:\n{m}"),
        }
    }
}

impl std::error::Error for Failure {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Failure>().is_some() {
        return 4;
    }
    for cause in e.chain() {
        if let Some(pe) = cause.downcast_ref::<placement::Error>() {
            return match pe {
                placement::Error::Legality(_) => 2,
                _ if pe.is_budget() => 5,
                _ => 3,
            };
        }
    }
    3
}

fn read_config(kind: &str, spec: &str, builtin: fn(&str) -> placement::Result<&'static str>) -> Result<(String, String)> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {kind} config {spec}"))?;
        return Ok((spec.to_string(), text));
    }
    match builtin(spec) {
        Ok(t) => Ok((format!("builtin:{spec}"), t.to_string())),
        Err(e) => Err(placement::Error::File { file: spec.to_string(), message: format!("no such file, and {e}") }.into()),
    }
}

fn load(inputs: &Inputs) -> Result<BenchCase> {
    let (arch_src, arch) = read_config("arch", &inputs.arch, bench::arch_text)?;
    let (map_src, mapping) = read_config("mapping", &inputs.mapping, bench::mapping_text)?;
    let (wl_src, workload) = read_config("workload", &inputs.workload, bench::workload_text)?;
    let in_file = |src: &str, e: placement::Error| placement::Error::File { file: src.to_string(), message: e.to_string() };
    let arch_spec = placement::arch::ArchSpec::parse(&arch).map_err(|e| in_file(&arch_src, e))?;
    let map = placement::mapping::Mapping::parse(&mapping).map_err(|e| in_file(&map_src, e))?;
    let w = placement::workload::WorkloadConfig::parse(&workload).and_then(|c| c.build()).map_err(|e| in_file(&wl_src, e))?;
    let name = if map.name.is_empty() { "analysis".to_string() } else { map.name.clone() };
    Ok(BenchCase {
        name,
        arch: arch_spec,
        mapping: map,
        workload: w,
        arch_text: arch,
        mapping_text: mapping,
        workload_text: workload,
    })
}

fn check(case: &BenchCase, verbose: bool) -> Result<()> {
    if verbose {
        for w in &case.arch.warnings {
            eprintln!("warning: {w}");
        }
    }
    let v = check_legality(&case.mapping, &case.arch, &case.workload);
    if !v.is_empty() {
        for x in &v {
            eprintln!("{x}");
        }
        return Err(placement::Error::Legality(v).into());
    }
    Ok(())
}

fn oracle_check(case: &BenchCase, r: &CostReport, event_log: Option<&Path>) -> Result<OracleCheck> {
    let tree = build_schedule_tree(&case.mapping, &case.workload)?;
    let tr = simulate(&tree, &case.workload, &case.arch)?;
    if let Some(p) = event_log {
        write_atomic(p, &tr.event_log())?;
    }
    let d = diff(&r.volumes, &tr.volumes);
    Ok(if d.is_empty() { OracleCheck::Match { mean_active_pe: tr.mean_active_pe() } } else { OracleCheck::Mismatch(d) })
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, text).with_context(|| format!("writing {}", path.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

struct Outcome {
    json: String,
    volumes_csv: String,
    energy_csv: String,
    oracle: Option<OracleCheck>,
}

fn run_case(case: &BenchCase, with_oracle: bool, event_log: Option<&Path>, verbose: bool) -> Result<Outcome> {
    check(case, verbose)?;
    let (_, r) = evaluate(&case.mapping, &case.arch, &case.workload, SliceOptions::default())?;
    let oracle = if with_oracle || event_log.is_some() { Some(oracle_check(case, &r, event_log)?) } else { None };
    Ok(Outcome {
        json: to_json_string(&report_json(case, &r, oracle.as_ref())),
        volumes_csv: volumes_csv(&case.name, &r)?,
        energy_csv: energy_csv(&case.name, &r)?,
        oracle,
    })
}

fn oracle_verdict(case: &str, o: &Option<OracleCheck>) -> Result<()> {
    match o {
        Some(OracleCheck::Match { .. }) => {
            eprintln!("{case}: volumes: MATCH");
            Ok(())
        }
        Some(OracleCheck::Mismatch(d)) => {
            let lines: Vec<String> = d.iter().map(|e| format!("  {e}")).collect();
            Err(Failure::Oracle(lines.join("\n")).into())
        }
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(b) = cli.budget {
        placement::intrel::set_budget(b);
    } else if let Ok(v) = std::env::var(BUDGET_ENV) {
        let b: usize = v.trim().parse().map_err(|_| placement::Error::config(format!("{BUDGET_ENV} must be a positive integer, got '{v}'")))?;
        placement::intrel::set_budget(b);
    }
    match cli.cmd {
        Cmd::Analyze { inputs, report, csv, check_only, with_oracle, event_log } => {
            let case = load(&inputs)?;
            if check_only {
                check(&case, cli.verbose > 0)?;
                eprintln!("{}: legal", case.name);
                return Ok(());
            }
            let out = run_case(&case, with_oracle, event_log.as_deref(), cli.verbose > 0)?;
            match &report {
                Some(p) => write_atomic(p, &out.json)?,
                None => print!("{}", out.json),
            }
            if let Some(prefix) = &csv {
                write_atomic(&with_suffix(prefix, ".volumes.csv"), &out.volumes_csv)?;
                write_atomic(&with_suffix(prefix, ".energy.csv"), &out.energy_csv)?;
            }
            if cli.verbose > 0 {
                eprintln!("{}: analysed", case.name);
            }
            oracle_verdict(&case.name, &out.oracle)
        }
        Cmd::Check { inputs } => {
            let case = load(&inputs)?;
            check(&case, cli.verbose > 0)?;
            println!("{}: legal", case.name);
            Ok(())
        }
        Cmd::Bench { suite, out, with_oracle } => bench_suite(&suite, &out, with_oracle, cli.verbose > 0),
        Cmd::DumpDpr { inputs, array, level, inter } => {
            let case = load(&inputs)?;
            check(&case, cli.verbose > 0)?;
            let tree = build_schedule_tree(&case.mapping, &case.workload)?;
            let arrays: Vec<String> = case.workload.arrays.iter().map(|a| a.name.clone()).filter(|a| array.as_ref().is_none_or(|x| x == a)).collect();
            if arrays.is_empty() {
                bail!(placement::Error::config(format!("unknown array '{}'", array.unwrap_or_default())));
            }
            let levels: Vec<usize> = (0..case.arch.levels.len()).filter(|&a| level.as_ref().is_none_or(|l| *l == case.arch.levels[a].name)).collect();
            if levels.is_empty() {
                bail!(placement::Error::config(format!("unknown level '{}'", level.unwrap_or_default())));
            }
            // Build everything first so a budget failure prints nothing.
            let mut text = String::new();
            for a in levels {
                let name = &case.arch.levels[a].name;
                for arr in &arrays {
                    if inter {
                        if a == 0 {
                            continue;
                        }
                        text.push_str(&inter_level(&tree, &case.arch, &case.workload, arr, &case.arch.levels[a - 1].name, name)?.dump());
                    } else {
                        text.push_str(&theta(&tree, &case.arch, &case.workload, arr, name)?.dump());
                    }
                }
            }
            print!("{text}");
            Ok(())
        }
        Cmd::List => {
            let names = |t: &[(&str, &str)]| t.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ");
            println!("arch: {}", names(bench::ARCHS));
            println!("mapping: {}", names(bench::MAPPINGS));
            println!("workload: {}", names(bench::WORKLOADS));
            println!("suites: {}", bench::SUITES.join(", "));
            Ok(())
        }
    }
}

fn bench_suite(suite: &str, out: &Path, with_oracle: bool, verbose: bool) -> Result<()> {
    let cases = bench::suite(suite)?;
    let results: Vec<Result<Outcome>> = std::thread::scope(|s| {
        let handles: Vec<_> = cases.iter().map(|c| s.spawn(move || run_case(c, with_oracle, None, verbose))).collect();
        handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect()
    });
    let mut volumes = String::new();
    let mut energy = String::new();
    let mut first_err = None;
    for (c, r) in cases.iter().zip(results) {
        let o = match r {
            Ok(o) => o,
            Err(e) => {
                eprintln!("{}: {e:#}", c.name);
                first_err.get_or_insert(e);
                continue;
            }
        };
        write_atomic(&out.join(format!("{}.json", c.name)), &o.json)?;
        let skip_header = |s: &str, acc: &String| if acc.is_empty() { s.to_string() } else { s.lines().skip(1).map(|l| format!("{l}\n")).collect() };
        volumes.push_str(&skip_header(&o.volumes_csv, &volumes));
        energy.push_str(&skip_header(&o.energy_csv, &energy));
        if verbose {
            eprintln!("{}: done", c.name);
        }
        if let Err(e) = oracle_verdict(&c.name, &o.oracle) {
            first_err.get_or_insert(e);
        }
        println!("{}", c.name);
    }
    write_atomic(&out.join(format!("{suite}.access-patterns.csv")), &volumes)?;
    write_atomic(&out.join(format!("{suite}.energy.csv")), &energy)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
