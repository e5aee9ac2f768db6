use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use vxtsn_core::simnet::report::{flow_ccdf, format_flow_table, vtep_to_vtep_us, write_outputs};
use vxtsn_core::simnet::scenario::{bundled_names, Scenario, Side, SCHEMA_VERSION};
use vxtsn_core::simnet::{ccdf, run};
use vxtsn_core::vtep::Vtep;

const EXIT_FAILED_ASSERTIONS: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "vxtsn", about = "TSN-over-5G VxLAN mapping and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(clap::Args)]
struct ScenarioArg {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long = "scenario", value_name = "PATH")]
    flag: Option<String>,
    #[arg(value_name = "SCENARIO", conflicts_with = "flag")]
    positional: Option<String>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

impl ScenarioArg {
    fn spec(&self) -> Result<&str, String> {
        self.flag
            .as_deref()
            .or(self.positional.as_deref())
            .ok_or_else(|| {
                format!(
                    "no scenario given (use --scenario <path>; bundled: {})",
                    bundled_names().collect::<Vec<_>>().join(", ")
                )
            })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write reports, CSVs, CCDFs and pcaps.
    Run {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario and list every problem found.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArg,
    },
    /// Print the flow mapping table and each VTEP's forwarding table.
    Tables {
        #[command(flatten)]
        scenario: ScenarioArg,
    },
    /// Run a scenario and print the delay CCDF of each flow.
    Ccdf {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Only this flow.
        #[arg(long)]
        flow: Option<String>,
        /// Also write ccdf_<flow>.txt files here.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print version information.
    Version,
}

fn load(arg: &ScenarioArg) -> Result<Scenario, ExitCode> {
    let spec = arg.spec().map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_INVALID)
    })?;
    Scenario::load_or_bundled(spec).map_err(|e| {
        match arg.format {
            Format::Text => eprintln!("error: {spec}: {e}"),
            Format::Json => println!(
                "{}",
                serde_json::to_string_pretty(
                    &json!({ "valid": false, "diagnostics": e.diagnostics() })
                )
                .expect("json")
            ),
        }
        ExitCode::from(EXIT_INVALID)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Version => {
            println!(
                "vxtsn {} (scenario schema {SCHEMA_VERSION})",
                env!("CARGO_PKG_VERSION")
            );
            ExitCode::SUCCESS
        }
        Command::Validate { scenario } => match load(&scenario) {
            Ok(s) => {
                cmd_validate(&s, scenario.format);
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Tables { scenario } => match load(&scenario) {
            Ok(s) => {
                cmd_tables(&s, scenario.format);
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run {
            scenario,
            out,
            seed,
        } => match load(&scenario) {
            Ok(s) => cmd_run(s, &out, seed, scenario.format),
            Err(code) => code,
        },
        Command::Ccdf {
            scenario,
            flow,
            out,
            seed,
        } => match load(&scenario) {
            Ok(s) => cmd_ccdf(s, flow.as_deref(), out.as_deref(), seed, scenario.format),
            Err(code) => code,
        },
    }
}

fn cmd_validate(s: &Scenario, format: Format) {
    let ues = s.vteps.iter().filter(|v| v.side == Side::Ue).count();
    let upfs = s.vteps.len() - ues;
    match format {
        Format::Text => {
            println!("scenario {}: valid", s.name);
            println!("  vteps: {} ({upfs} upf, {ues} ue)", s.vteps.len());
            println!("  lans: {}, hosts: {}", s.lans.len(), s.hosts.len());
            println!("  flows: {}, captures: {}", s.flows.len(), s.captures.len());
            println!("  UEs: {ues}");
            println!();
            print!("{}", format_flow_table(&s.flow_plans()));
        }
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "valid": true,
                "name": s.name,
                "vteps": s.vteps.len(),
                "ues": ues,
                "upfs": upfs,
                "lans": s.lans.len(),
                "hosts": s.hosts.len(),
                "flows": s.flows.len(),
                "captures": s.captures.len(),
                "flow_table": s.flow_plans(),
            }))
            .expect("json")
        ),
    }
}

fn initial_vteps(s: &Scenario) -> Vec<(String, Vtep)> {
    s.vteps
        .iter()
        .map(|n| {
            let mut v = Vtep::new(n.config.clone()).expect("validated");
            for &(vni, mac, remote) in &n.static_entries {
                v.table.insert_static(vni, mac, remote);
            }
            (n.name.clone(), v)
        })
        .collect()
}

fn cmd_tables(s: &Scenario, format: Format) {
    let vteps = initial_vteps(s);
    match format {
        Format::Text => {
            print!("{}", format_flow_table(&s.flow_plans()));
            for (name, v) in &vteps {
                println!();
                println!("forwarding table of {name} ({}):", v.ip());
                print!("{}", v.table);
            }
        }
        Format::Json => {
            let tables: Vec<_> = vteps
                .iter()
                .map(|(name, v)| json!({ "vtep": name, "ip": v.ip(), "entries": v.table.rows() }))
                .collect();
            println!(
                "{}",
                serde_json::to_string_pretty(
                    &json!({ "flows": s.flow_plans(), "forwarding": tables })
                )
                .expect("json")
            );
        }
    }
}

fn cmd_run(mut s: Scenario, out: &std::path::Path, seed: Option<u64>, format: Format) -> ExitCode {
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let report = run(&s);
    let (summary, files) = match write_outputs(&report, out) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: cannot write to {}: {e}", out.display());
            return ExitCode::from(EXIT_IO);
        }
    };
    match format {
        Format::Text => {
            print!("{}", summary.to_text());
            println!();
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Format::Json => print!("{}", summary.to_json()),
    }
    if summary.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED_ASSERTIONS)
    }
}

fn cmd_ccdf(
    mut s: Scenario,
    flow: Option<&str>,
    out: Option<&std::path::Path>,
    seed: Option<u64>,
    format: Format,
) -> ExitCode {
    if let Some(name) = flow {
        if s.flow_index(name).is_none() {
            eprintln!("error: no flow named {name:?}");
            return ExitCode::from(EXIT_INVALID);
        }
    }
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let report = run(&s);
    let flows: Vec<_> = report
        .flows
        .iter()
        .filter(|f| flow.is_none_or(|n| n == f.name))
        .collect();
    if let Some(dir) = out {
        if let Err(e) = std::fs::create_dir_all(dir) {
            eprintln!("error: cannot create {}: {e}", dir.display());
            return ExitCode::from(EXIT_IO);
        }
        for f in &flows {
            let path = dir.join(format!("ccdf_{}.txt", f.name));
            if let Err(e) = std::fs::write(&path, flow_ccdf(f)) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(EXIT_IO);
            }
        }
    }
    match format {
        Format::Text => {
            for f in &flows {
                print!("{}", flow_ccdf(f));
            }
        }
        Format::Json => {
            let curves: Vec<_> = flows
                .iter()
                .map(|f| {
                    let points = ccdf(&vtep_to_vtep_us(f)).unwrap_or_default();
                    json!({ "flow": f.name, "points": points })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&curves).expect("json"));
        }
    }
    ExitCode::SUCCESS
}
