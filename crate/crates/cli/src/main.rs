//! Command-line front end: validate models, print exact distributions,
//! compute information quantities, run the invariant suite and hunt for
//! counterexamples.
//!
//! Exit codes: 0 success, 1 domain error (invalid model, bad query,
//! zero-probability event, failing checks), 2 I/O or usage error, 3 hunt
//! exhausted its budget without finding a witness.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use causal_info::causal::{
    causal_entropy_methods, causal_information_gain, conditional_causal_entropy,
    conditional_causal_information_gain, post_intervention_mutual_information, CausalQuery,
    CondHcMethod,
};
use causal_info::dsl::{parse_pmf_text, parse_scm, serialize_scm};
use causal_info::gen::GenConfig;
use causal_info::info::{cond_entropy, cond_mutual_information, entropy, mutual_information};
use causal_info::intervene::apply;
use causal_info::rational::format_rational;
use causal_info::suite::{
    check_all, configure_thread_pool, hunt, observations, HuntKind, Witness,
};
use causal_info::{Error, Intervention, Pmf, Protocol, Scm, VarId};

#[derive(Parser)]
#[command(name = "causal-info", version, about = "Exact inference and information metrics for finite discrete structural causal models")]
struct Cli {
    /// Worker threads for check and hunt trials (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Table,
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum QuantityKind {
    /// Entropy of the target set.
    #[value(name = "H")]
    H,
    /// Conditional entropy of the target given `--given`.
    #[value(name = "Hcond")]
    Hcond,
    /// Mutual information between `--target` and `--with`.
    #[value(name = "MI")]
    Mi,
    /// Conditional mutual information between `--target` and `--with`
    /// given `--given`.
    #[value(name = "CMI")]
    Cmi,
    /// Causal entropy of the target under `--intervene`/`--protocol`.
    #[value(name = "Hc")]
    Hc,
    /// Causal information gain.
    #[value(name = "Ic")]
    Ic,
    /// Conditional causal entropy given `--given`.
    #[value(name = "HcCond")]
    HcCond,
    /// Conditional causal information gain given `--given`.
    #[value(name = "IcCond")]
    IcCond,
    /// Post-intervention mutual information between target and `--given`.
    #[value(name = "MIc")]
    MIc,
}

impl QuantityKind {
    fn name(self) -> &'static str {
        match self {
            QuantityKind::H => "H",
            QuantityKind::Hcond => "Hcond",
            QuantityKind::Mi => "MI",
            QuantityKind::Cmi => "CMI",
            QuantityKind::Hc => "Hc",
            QuantityKind::Ic => "Ic",
            QuantityKind::HcCond => "HcCond",
            QuantityKind::IcCond => "IcCond",
            QuantityKind::MIc => "MIc",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum HuntKindArg {
    #[value(name = "negative-gain")]
    NegativeGain,
    #[value(name = "dpi")]
    Dpi,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate a model file.
    Validate { path: PathBuf },
    /// Print an entailed or post-intervention marginal as exact rationals.
    Dist {
        path: PathBuf,
        /// Variables of the marginal, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        vars: Vec<String>,
        /// Intervention: `X=label` (atomic) or `X~{l1: m1, ...}` (stochastic).
        #[arg(long = "do")]
        intervention: Option<String>,
        /// Condition on `Z=label` after the intervention; repeatable.
        #[arg(long)]
        given: Vec<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Compute one information quantity, printed with 12 decimal digits.
    Quantity {
        path: PathBuf,
        #[arg(long, value_enum)]
        quantity: QuantityKind,
        /// Target variable set, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        target: Vec<String>,
        /// Intervened variable (causal quantities).
        #[arg(long)]
        intervene: Option<String>,
        /// Protocol masses as a pmf literal over the intervened range.
        #[arg(long)]
        protocol: Option<String>,
        /// Second variable set for MI and CMI.
        #[arg(long = "with", value_delimiter = ',')]
        with: Vec<String>,
        /// Conditioning set, comma separated.
        #[arg(long, value_delimiter = ',')]
        given: Vec<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Run the invariant suite; one JSON record per check on stdout.
    Check {
        path: PathBuf,
        /// Protocol masses as a pmf literal.
        #[arg(long)]
        protocol: String,
        /// Intervened variable; inferred from the protocol labels when
        /// they match exactly one variable.
        #[arg(long)]
        intervene: Option<String>,
        /// Seed for query sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Scan seeded random models for counterexamples and write witnesses.
    Hunt {
        #[arg(long, value_enum)]
        kind: HuntKindArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trials to scan before giving up.
        #[arg(long, default_value_t = 10_000)]
        budget: u64,
        /// Stop after this many witnesses.
        #[arg(long, default_value_t = 1)]
        limit: usize,
        /// Directory for witness files.
        #[arg(long, default_value = "witnesses")]
        out: PathBuf,
    },
}

enum CliError {
    /// Domain failure: invalid model, bad query, failing checks.
    Domain(String),
    /// I/O or usage failure.
    Io(String),
    /// Hunt found nothing within its budget.
    HuntEmpty,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = configure_thread_pool(jobs) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::HuntEmpty) => {
            eprintln!("no witness found within the budget");
            ExitCode::from(3)
        }
    }
}

fn run(cmd: Cmd) -> CliResult {
    match cmd {
        Cmd::Validate { path } => cmd_validate(&path),
        Cmd::Dist {
            path,
            vars,
            intervention,
            given,
            format,
        } => cmd_dist(&path, &vars, intervention.as_deref(), &given, format),
        Cmd::Quantity {
            path,
            quantity,
            target,
            intervene,
            protocol,
            with,
            given,
            format,
        } => cmd_quantity(
            &path,
            quantity,
            &target,
            intervene.as_deref(),
            protocol.as_deref(),
            &with,
            &given,
            format,
        ),
        Cmd::Check {
            path,
            protocol,
            intervene,
            seed,
        } => cmd_check(&path, &protocol, intervene.as_deref(), seed),
        Cmd::Hunt {
            kind,
            seed,
            budget,
            limit,
            out,
        } => cmd_hunt(kind, seed, budget, limit, &out),
    }
}

fn read_model(path: &Path) -> Result<Scm, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_scm(&text).map_err(|e| CliError::Domain(format!("{}:{}", path.display(), e.render())))
}

fn model_hash(model: &Scm) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serialize_scm(model).as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Serialize)]
struct Metadata {
    model_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    version: &'static str,
}

impl Metadata {
    fn new(model: &Scm, seed: Option<u64>) -> Self {
        Metadata {
            model_hash: model_hash(model),
            seed,
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

fn cmd_validate(path: &Path) -> CliResult {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    match parse_scm(&text) {
        Ok(model) => {
            println!(
                "{}: valid ({} variables)",
                path.display(),
                model.mechanisms().len()
            );
            Ok(())
        }
        Err(e) => Err(CliError::Domain(format!(
            "{}:{}",
            path.display(),
            e.render()
        ))),
    }
}

/// `X=label` or `X~{l: m, ...}`.
fn parse_do_spec(model: &Scm, spec: &str) -> Result<Intervention, CliError> {
    if let Some((var, pmf)) = spec.split_once('~') {
        let var = var.trim();
        let pairs = parse_pmf_text(pmf.trim())
            .map_err(|e| CliError::Domain(format!("--do: {}", e.render())))?;
        let protocol = Protocol::from_label_masses(model, var, &pairs)?;
        Ok(Intervention::Stochastic(protocol))
    } else if let Some((var, label)) = spec.split_once('=') {
        let var = var.trim();
        let label = label.trim();
        let range = &model
            .variable(var)
            .ok_or_else(|| CliError::Domain(format!("unknown variable `{var}`")))?
            .range;
        let value = range
            .index_of(label)
            .ok_or_else(|| CliError::Domain(format!("`{label}` is not a value of `{var}`")))?;
        Ok(Intervention::Atomic {
            target: VarId::new(var),
            value,
        })
    } else {
        Err(CliError::Io(format!(
            "--do `{spec}`: expected `X=label` or `X~{{label: mass, ...}}`"
        )))
    }
}

#[derive(Serialize)]
struct DistEntry {
    values: Vec<String>,
    p: String,
}

#[derive(Serialize)]
struct DistRecord {
    query: DistQueryEcho,
    vars: Vec<String>,
    entries: Vec<DistEntry>,
    metadata: Metadata,
}

#[derive(Serialize)]
struct DistQueryEcho {
    vars: Vec<String>,
    #[serde(rename = "do", skip_serializing_if = "Option::is_none")]
    intervention: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    given: Vec<String>,
}

fn dist_rows(p: &Pmf) -> (Vec<String>, Vec<DistEntry>) {
    let vars: Vec<String> = p.scope().iter().map(|(id, _)| id.to_string()).collect();
    let entries = (0..p.size())
        .map(|i| {
            let tuple = p.tuple_of(i);
            DistEntry {
                values: p
                    .scope()
                    .iter()
                    .zip(&tuple)
                    .map(|((_, r), &t)| r.label(t).to_owned())
                    .collect(),
                p: format_rational(&p.masses()[i]),
            }
        })
        .collect();
    (vars, entries)
}

fn cmd_dist(
    path: &Path,
    vars: &[String],
    do_spec: Option<&str>,
    given: &[String],
    format: Format,
) -> CliResult {
    let model = read_model(path)?;
    let queried = match do_spec {
        Some(spec) => apply(&model, &parse_do_spec(&model, spec)?)?,
        None => model.clone(),
    };
    let mut events: Vec<(String, String)> = Vec::new();
    for g in given {
        let (var, label) = g
            .split_once('=')
            .ok_or_else(|| CliError::Io(format!("--given `{g}`: expected `Z=label`")))?;
        events.push((var.trim().to_owned(), label.trim().to_owned()));
    }
    let mut wide: Vec<String> = vars.to_vec();
    for (v, _) in &events {
        if !wide.contains(v) {
            wide.push(v.clone());
        }
    }
    let joint = queried.entailed(&wide)?;
    let result = if events.is_empty() {
        joint.marginalize(vars)?
    } else {
        let ev: Vec<(&str, &str)> = events
            .iter()
            .map(|(v, l)| (v.as_str(), l.as_str()))
            .collect();
        joint.condition_labels(&ev)?.marginalize(vars)?
    };

    let (out_vars, entries) = dist_rows(&result);
    match format {
        Format::Table => {
            let mut header: Vec<&str> = out_vars.iter().map(|s| s.as_str()).collect();
            header.push("p");
            let rows: Vec<Vec<String>> = entries
                .iter()
                .map(|e| {
                    let mut row = e.values.clone();
                    row.push(e.p.clone());
                    row
                })
                .collect();
            print_table(&header, &rows);
        }
        Format::Csv => {
            let mut header = out_vars.clone();
            header.push("p".to_owned());
            println!("{}", header.join(","));
            for e in &entries {
                let mut row = e.values.clone();
                row.push(e.p.clone());
                println!("{}", row.join(","));
            }
        }
        Format::Json => {
            let record = DistRecord {
                query: DistQueryEcho {
                    vars: vars.to_vec(),
                    intervention: do_spec.map(|s| s.to_owned()),
                    given: given.to_vec(),
                },
                vars: out_vars,
                entries,
                metadata: Metadata::new(&model, None),
            };
            println!("{}", serde_json::to_string(&record).expect("serializable"));
        }
    }
    Ok(())
}

fn print_table(header: &[&str], rows: &[Vec<String>]) {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for c in 0..cols {
            widths[c] = widths[c].max(row[c].len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut out = String::new();
        for c in 0..cols {
            if c > 0 {
                out.push_str("  ");
            }
            out.push_str(&format!("{:<w$}", cells[c], w = widths[c]));
        }
        println!("{}", out.trim_end());
    };
    line(header.to_vec());
    for row in rows {
        line(row.iter().map(|s| s.as_str()).collect());
    }
}

fn bits12(v: f64) -> String {
    format!("{v:.12}")
}

#[derive(Serialize)]
struct MethodBreakdown {
    definition: String,
    plug_in: String,
    covariate_specific: String,
    max_pairwise_slack: f64,
}

#[derive(Serialize)]
struct QuantityRecord {
    query: QuantityQueryEcho,
    quantity: &'static str,
    value: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    methods: Option<MethodBreakdown>,
    metadata: Metadata,
}

#[derive(Serialize)]
struct QuantityQueryEcho {
    target: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    with: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    given: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    intervene: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    protocol: Option<String>,
}

fn causal_query<'a>(
    model: &'a Scm,
    target: &[String],
    intervene: Option<&str>,
    protocol: Option<&str>,
    quantity: &str,
) -> Result<CausalQuery<'a>, CliError> {
    let intervene =
        intervene.ok_or_else(|| CliError::Io(format!("--quantity {quantity} needs --intervene")))?;
    let protocol_text =
        protocol.ok_or_else(|| CliError::Io(format!("--quantity {quantity} needs --protocol")))?;
    let pairs = parse_pmf_text(protocol_text)
        .map_err(|e| CliError::Domain(format!("--protocol: {}", e.render())))?;
    let protocol = Protocol::from_label_masses(model, intervene, &pairs)?;
    Ok(CausalQuery::new(model, target, intervene, protocol)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_quantity(
    path: &Path,
    quantity: QuantityKind,
    target: &[String],
    intervene: Option<&str>,
    protocol: Option<&str>,
    with: &[String],
    given: &[String],
    format: Format,
) -> CliResult {
    let model = read_model(path)?;
    let need_with = |q: &str| -> Result<(), CliError> {
        if with.is_empty() {
            Err(CliError::Io(format!("--quantity {q} needs --with")))
        } else {
            Ok(())
        }
    };

    let mut methods = None;
    let value = match quantity {
        QuantityKind::H => entropy(&model.entailed(target)?).0,
        QuantityKind::Hcond => {
            let mut wide = target.to_vec();
            wide.extend(given.iter().cloned());
            cond_entropy(&model.entailed(&wide)?, given)?.0
        }
        QuantityKind::Mi => {
            need_with("MI")?;
            let mut wide = target.to_vec();
            wide.extend(with.iter().cloned());
            mutual_information(&model.entailed(&wide)?, with, target)?.0
        }
        QuantityKind::Cmi => {
            need_with("CMI")?;
            let mut wide = target.to_vec();
            wide.extend(with.iter().cloned());
            wide.extend(given.iter().cloned());
            cond_mutual_information(&model.entailed(&wide)?, with, target, given)?.0
        }
        QuantityKind::Hc => {
            let q = causal_query(&model, target, intervene, protocol, "Hc")?;
            let all = causal_entropy_methods(&q)?;
            methods = Some(MethodBreakdown {
                definition: bits12(all.definition),
                plug_in: bits12(all.plug_in),
                covariate_specific: bits12(all.covariate_specific),
                max_pairwise_slack: all.max_pairwise_slack(),
            });
            all.definition
        }
        QuantityKind::Ic => {
            let q = causal_query(&model, target, intervene, protocol, "Ic")?;
            causal_information_gain(&q)?.0
        }
        QuantityKind::HcCond => {
            let q =
                causal_query(&model, target, intervene, protocol, "HcCond")?.with_given(given)?;
            conditional_causal_entropy(&q, CondHcMethod::Definition)?.0
        }
        QuantityKind::IcCond => {
            let q =
                causal_query(&model, target, intervene, protocol, "IcCond")?.with_given(given)?;
            conditional_causal_information_gain(&q)?.0
        }
        QuantityKind::MIc => {
            let q = causal_query(&model, target, intervene, protocol, "MIc")?.with_given(given)?;
            post_intervention_mutual_information(&q)?.0
        }
    };

    match format {
        Format::Table => {
            println!("{} = {}", quantity.name(), bits12(value));
            if let Some(m) = &methods {
                println!("  definition          {}", m.definition);
                println!("  plug-in             {}", m.plug_in);
                println!("  covariate-specific  {}", m.covariate_specific);
                println!("  max pairwise slack  {:e}", m.max_pairwise_slack);
            }
        }
        Format::Csv => {
            println!("quantity,value");
            println!("{},{}", quantity.name(), bits12(value));
        }
        Format::Json => {
            let record = QuantityRecord {
                query: QuantityQueryEcho {
                    target: target.to_vec(),
                    with: with.to_vec(),
                    given: given.to_vec(),
                    intervene: intervene.map(|s| s.to_owned()),
                    protocol: protocol.map(|s| s.to_owned()),
                },
                quantity: quantity.name(),
                value: bits12(value),
                methods,
                metadata: Metadata::new(&model, None),
            };
            println!("{}", serde_json::to_string(&record).expect("serializable"));
        }
    }
    Ok(())
}

/// The variable a protocol refers to: `--intervene` when given, otherwise
/// the unique variable whose range the protocol labels cover exactly,
/// falling back to the unique variable whose range contains them all.
fn resolve_intervened(
    model: &Scm,
    labels: &[String],
    explicit: Option<&str>,
) -> Result<String, CliError> {
    if let Some(v) = explicit {
        return Ok(v.to_owned());
    }
    let subset: Vec<&causal_info::Variable> = model
        .endogenous()
        .filter(|v| labels.iter().all(|l| v.range.index_of(l).is_some()))
        .collect();
    let exact: Vec<&causal_info::Variable> = subset
        .iter()
        .copied()
        .filter(|v| v.range.len() == labels.len())
        .collect();
    let pick = if exact.len() == 1 { &exact } else { &subset };
    match pick.len() {
        1 => Ok(pick[0].id.to_string()),
        0 => Err(CliError::Domain(
            "protocol labels match no variable's range".into(),
        )),
        _ => Err(CliError::Io(format!(
            "protocol labels match several variables ({}); pass --intervene",
            pick.iter()
                .map(|v| v.id.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

#[derive(Serialize)]
struct InfoRecord<'a> {
    prop: &'a str,
    status: &'a str,
    lhs: f64,
    rhs: f64,
    slack: f64,
    detail: &'a str,
}

/// Prints one line of (possibly piped) record output; a closed pipe ends
/// the stream quietly instead of panicking.
fn emit_line(line: &str) -> bool {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{line}").is_ok()
}

fn cmd_check(path: &Path, protocol_text: &str, intervene: Option<&str>, seed: u64) -> CliResult {
    let model = read_model(path)?;
    let pairs = parse_pmf_text(protocol_text)
        .map_err(|e| CliError::Domain(format!("--protocol: {}", e.render())))?;
    let labels: Vec<String> = pairs.iter().map(|(l, _)| l.clone()).collect();
    let target = resolve_intervened(&model, &labels, intervene)?;
    let protocol = Protocol::from_label_masses(&model, &target, &pairs)?;

    let reports = check_all(&model, &protocol, seed)?;
    let mut all_pass = true;
    let mut open = true;
    for report in &reports {
        all_pass &= report.passed();
        if open {
            open = emit_line(&serde_json::to_string(report).expect("serializable"));
        }
    }
    for obs in observations(&model, &protocol)? {
        let record = InfoRecord {
            prop: &obs.note,
            status: "info",
            lhs: obs.lhs,
            rhs: obs.rhs,
            slack: (obs.lhs - obs.rhs).abs(),
            detail: &obs.detail,
        };
        if open {
            open = emit_line(&serde_json::to_string(&record).expect("serializable"));
        }
    }
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Domain("some checks failed".into()))
    }
}

fn cmd_hunt(kind: HuntKindArg, seed: u64, budget: u64, limit: usize, out: &Path) -> CliResult {
    let kind = match kind {
        HuntKindArg::NegativeGain => HuntKind::NegativeGain,
        HuntKindArg::Dpi => HuntKind::DpiViolation,
    };
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let cfg = GenConfig::new(seed);
    let witnesses: Vec<Witness> = hunt(kind, &cfg, budget, limit);
    for (i, w) in witnesses.iter().enumerate() {
        let stem = format!("{}_{i:03}", kind.as_str());
        let scm_path = out.join(format!("{stem}.scm"));
        let json_path = out.join(format!("{stem}.json"));
        std::fs::write(&scm_path, &w.scm)
            .map_err(|e| CliError::Io(format!("{}: {e}", scm_path.display())))?;
        let sidecar = serde_json::to_string_pretty(w).expect("serializable");
        std::fs::write(&json_path, sidecar + "\n")
            .map_err(|e| CliError::Io(format!("{}: {e}", json_path.display())))?;
        let trial = w
            .trial
            .map(|t| t.to_string())
            .unwrap_or_else(|| "seeded".to_owned());
        println!(
            "witness {i}: trial {trial}, {} -> {}",
            w.inequality,
            scm_path.display()
        );
    }
    if witnesses.is_empty() {
        Err(CliError::HuntEmpty)
    } else {
        Ok(())
    }
}
