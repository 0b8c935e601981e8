//! Command-line driver. Every command writes its whole report to a buffer,
//! so output depends only on flags and input files.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::machine::library::{identity_name, FiniteGraph};
use crate::machine::{encode_machine, eval_stream, parse_machine, run, Name, Program};
use crate::operators::{
    combine, countdown_program, diamond, format_trace, omega, pass_through_program, power_n, seeded_loop, show, star,
    validate_run, Chain, LoopData, ProblemLoop, Realizer,
};
use crate::problems::{parse_instance_text, problem_by_name, LimN, Problem, Verdict, PROBLEM_NAMES};
use crate::reductions::{limn_infty_via_lim, witness_library, LimNLoop, LimSimOutcome};
use crate::streams::{pair_stream, parse_stream_spec, Fuel, Nat, Stream, Word};
use crate::transform::{
    injection_i, injective_recursion, quine, recursion_t, scan_blocks, smn, IgnoreSelf, PairSelfOutput,
};

/// Per-index budget used when validating loop steps.
const VALIDATE_BUDGET: u64 = 200_000;

#[derive(Parser, Debug)]
#[command(
    name = "type2",
    version,
    about = "Type-2 machines, name transformations and loop operators"
)]
pub struct Cli {
    /// Output indices to determine. `check` defaults to the witness's own depth.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Interpreter step ceiling per query.
    #[arg(long, global = true, default_value_t = 1_000_000)]
    pub fuel: u64,
    /// First seed (of `check`) or seed of generated inputs.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Loop step ceiling.
    #[arg(long, global = true, default_value_t = 8)]
    pub steps: usize,
    /// Exit with 3 when something stayed undetermined.
    #[arg(long, global = true)]
    pub strict: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    /// Records only, without `note` lines.
    Records,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a machine file on an input stream.
    Eval {
        machine: PathBuf,
        /// Literal symbols, then `zeros` or `cycle w`.
        #[arg(required = true, num_args = 1..)]
        input: Vec<String>,
    },
    /// Print a transformed name and optionally check its defining equation.
    Transform {
        kind: TransformKind,
        /// Machine file: F for smn, the transformer for fix, s for inject.
        file: Option<PathBuf>,
        /// Parameter stream for smn and injrec.
        #[arg(long)]
        q: Option<String>,
        /// Input stream; seeded when absent.
        #[arg(long)]
        input: Option<String>,
        #[arg(long, value_enum, default_value_t = Functional::IgnoreSelf)]
        functional: Functional,
        #[arg(long)]
        verify: bool,
    },
    /// Run a loop operator on a start state read from an instance file.
    Loop {
        op: LoopOp,
        problem: String,
        instance: PathBuf,
        /// Rounds for `power` and `star`.
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        validate: bool,
    },
    /// Run a registered witness suite.
    Check {
        witness: String,
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// List the registered witnesses.
    Witnesses,
    /// Limit-machine simulation of a lim-n loop.
    Limsim {
        instance: PathBuf,
        #[arg(long, default_value_t = 64)]
        horizon: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformKind {
    Smn,
    Fix,
    Inject,
    Extract,
    Injrec,
    Quine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Functional {
    IgnoreSelf,
    PairSelfOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LoopOp {
    Power,
    Star,
    Omega,
    Diamond,
    Infty,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{0}")]
    Usage(String),
}

/// What a command found, worst first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Status {
    Consistent,
    Undetermined,
    Refuted,
}

impl Status {
    fn of(v: &Verdict) -> Self {
        match v {
            Verdict::Consistent => Status::Consistent,
            Verdict::Undetermined(_) => Status::Undetermined,
            Verdict::Refuted(_) => Status::Refuted,
        }
    }
}

struct Report {
    text: String,
    status: Status,
}

impl Report {
    fn new() -> Self {
        Report {
            text: String::new(),
            status: Status::Consistent,
        }
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.text += s.as_ref();
        self.text.push('\n');
    }

    fn saw(&mut self, s: Status) {
        self.status = self.status.max(s);
    }
}

struct Config {
    depth: usize,
    fuel: u64,
    seed: u64,
    steps: usize,
}

/// Parse `args` (program name first), run the command and write its output.
/// Returns the exit status.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match execute(&cli) {
        Ok(report) => {
            let text = match cli.format {
                Format::Text => report.text,
                Format::Records => report
                    .text
                    .lines()
                    .filter(|l| !l.starts_with("note "))
                    .map(|l| format!("{l}\n"))
                    .collect(),
            };
            let _ = out.write_all(text.as_bytes());
            match report.status {
                Status::Refuted => 1,
                Status::Undetermined if cli.strict => 3,
                _ => 0,
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn execute(cli: &Cli) -> Result<Report, CliError> {
    let cfg = Config {
        depth: cli.depth.unwrap_or(32),
        fuel: cli.fuel,
        seed: cli.seed,
        steps: cli.steps,
    };
    match &cli.command {
        Command::Eval { machine, input } => cmd_eval(machine, &input.join(" "), &cfg),
        Command::Transform {
            kind,
            file,
            q,
            input,
            functional,
            verify,
        } => cmd_transform(
            *kind,
            file.as_deref(),
            q.as_deref(),
            input.as_deref(),
            *functional,
            *verify,
            &cfg,
        ),
        Command::Loop {
            op,
            problem,
            instance,
            n,
            validate,
        } => cmd_loop(*op, problem, instance, *n, *validate, &cfg),
        Command::Check { witness, seeds } => cmd_check(witness, *seeds, cli.depth, &cfg),
        Command::Witnesses => {
            let mut r = Report::new();
            for name in witness_library().names() {
                let e = witness_library().get(name).expect("listed witness");
                r.line(format!("{name}: {}", e.summary));
            }
            Ok(r)
        }
        Command::Limsim { instance, horizon } => cmd_limsim(instance, *horizon, &cfg),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_machine(path: &Path) -> Result<Program, CliError> {
    let entries = parse_machine(&read(path)?).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        line: e.line,
        message: e.message,
    })?;
    Ok(Arc::new(FiniteGraph::new(entries)))
}

fn stream_arg(spec: &str, what: &str) -> Result<Stream, CliError> {
    parse_stream_spec(spec).map_err(|e| CliError::Usage(format!("{what}: {e}")))
}

/// The given stream, or eight seeded symbols below 10 followed by zeros.
fn stream_or_seeded(spec: Option<&str>, what: &str, seed: u64) -> Result<Stream, CliError> {
    match spec {
        Some(s) => stream_arg(s, what),
        None => {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<Nat> = (0..8).map(|_| r.gen_range(0..10)).collect();
            Ok(Stream::word_then_zeros(&w))
        }
    }
}

fn cmd_eval(machine: &Path, spec: &str, cfg: &Config) -> Result<Report, CliError> {
    let name = encode_machine(&load_machine(machine)?);
    let input = stream_arg(spec, "input")?;
    let output = eval_stream(&name, &input);
    let mut r = Report::new();
    let mut symbols = Vec::new();
    let mut used = 0;
    let mut stuck = None;
    for i in 0..cfg.depth {
        let mut fuel = Fuel::new(cfg.fuel);
        let got = output.get(i, &mut fuel);
        used += fuel.used();
        match got {
            Ok(x) => symbols.push(x),
            Err(_) => {
                stuck = Some(i);
                break;
            }
        }
    }
    r.line(format!("output {}", Word(symbols.clone())));
    r.line(format!("determined {} of {}", symbols.len(), cfg.depth));
    r.line(format!("fuel {used}"));
    if let Some(i) = stuck {
        r.line(format!("index {i} undetermined: fuel exhausted"));
        r.saw(Status::Undetermined);
    }
    Ok(r)
}

/// Compare two streams index by index on `depth` indices.
fn verify(r: &mut Report, lhs: &Stream, rhs: &Stream, cfg: &Config) {
    let (mut agree, mut disagree, mut open) = (0, 0, 0);
    for i in 0..cfg.depth {
        match (lhs.at(i, cfg.fuel), rhs.at(i, cfg.fuel)) {
            (Ok(a), Ok(b)) if a == b => {
                agree += 1;
                r.line(format!("index {i} agree {a}"));
            }
            (Ok(a), Ok(b)) => {
                disagree += 1;
                r.line(format!("index {i} disagree {a} {b}"));
            }
            _ => {
                open += 1;
                r.line(format!("index {i} undetermined"));
            }
        }
    }
    r.line(format!("verify agree {agree} disagree {disagree} undetermined {open}"));
    if disagree > 0 {
        r.saw(Status::Refuted);
    } else if open > 0 {
        r.saw(Status::Undetermined);
    }
}

fn prefix_line(r: &mut Report, label: &str, s: &Stream, cfg: &Config) {
    r.line(format!("{label} {}", s.determined_prefix(cfg.depth, cfg.fuel)));
}

fn cmd_transform(
    kind: TransformKind,
    file: Option<&Path>,
    q: Option<&str>,
    input: Option<&str>,
    functional: Functional,
    check: bool,
    cfg: &Config,
) -> Result<Report, CliError> {
    let need_file =
        || file.ok_or_else(|| CliError::Usage(format!("transform {kind:?} needs a machine file").to_lowercase()));
    let p = stream_or_seeded(input, "input", cfg.seed)?;
    let mut r = Report::new();
    match kind {
        TransformKind::Smn => {
            let f = load_machine(need_file()?)?;
            let q = stream_or_seeded(q, "q", cfg.seed ^ 1)?;
            let named = smn(f.clone()).apply(&Name::from(q.clone()));
            prefix_line(&mut r, "name", named.stream(), cfg);
            if check {
                verify(&mut r, &eval_stream(&named, &p), &run(&f, &pair_stream(&q, &p)), cfg);
            }
        }
        TransformKind::Fix => {
            let t = encode_machine(&load_machine(need_file()?)?);
            let fixed = recursion_t().apply(&t);
            prefix_line(&mut r, "name", fixed.stream(), cfg);
            if check {
                let image = Name::from(eval_stream(&t, fixed.stream()));
                verify(&mut r, &eval_stream(&fixed, &p), &eval_stream(&image, &p), cfg);
            }
        }
        TransformKind::Inject => {
            let s = match file {
                Some(path) => encode_machine(&load_machine(path)?),
                None => identity_name(),
            };
            let i = injection_i();
            let named = i.apply(&s);
            prefix_line(&mut r, "name", named.stream(), cfg);
            let y = eval_stream(&named, &p);
            prefix_line(&mut r, "output", &y, cfg);
            if check {
                verify(&mut r, &scan_blocks(&y), &p, cfg);
            }
        }
        TransformKind::Extract => {
            prefix_line(&mut r, "extracted", &scan_blocks(&p), cfg);
        }
        TransformKind::Injrec => {
            let f: Program = match functional {
                Functional::IgnoreSelf => Arc::new(IgnoreSelf),
                Functional::PairSelfOutput => Arc::new(PairSelfOutput),
            };
            let q = stream_or_seeded(q, "q", cfg.seed ^ 1)?;
            let rec = injective_recursion(f.clone());
            let named = rec.r.apply(&Name::from(q.clone()));
            prefix_line(&mut r, "name", named.stream(), cfg);
            if check {
                let rhs = run(&f, &pair_stream(rec.r_name.stream(), &pair_stream(&q, &p)));
                verify(&mut r, &eval_stream(&named, &p), &rhs, cfg);
                if let Some(back) = rec.r.extract(named.stream()) {
                    r.line("round trip");
                    verify(&mut r, &back, &q, cfg);
                }
            }
        }
        TransformKind::Quine => {
            let named = quine();
            prefix_line(&mut r, "name", named.stream(), cfg);
            if check {
                verify(&mut r, &eval_stream(&named, &p), &pair_stream(named.stream(), &p), cfg);
            }
        }
    }
    Ok(r)
}

fn problem_arg(name: &str) -> Result<Arc<dyn Problem>, CliError> {
    problem_by_name(name)
        .map(Arc::from)
        .ok_or_else(|| CliError::Usage(format!("unknown problem `{name}`; known: {}", PROBLEM_NAMES.join(", "))))
}

/// Start state from a `public:` description: `loop countdown N data <spec>`,
/// `loop seeded <seed>`, `loop pass <spec>` or a bare stream spec, which is
/// passed through.
fn start_state(desc: &str, problem: &Arc<dyn Problem>) -> Result<Stream, String> {
    let toks: Vec<&str> = desc.split_whitespace().collect();
    match toks.as_slice() {
        ["loop", "countdown", n, "data", rest @ ..] => {
            let n: usize = n.parse().map_err(|_| format!("bad countdown `{n}`"))?;
            Ok(pair_stream(&countdown_program(n), &parse_stream_spec(&rest.join(" "))?))
        }
        ["loop", "seeded", seed] => {
            let seed: u64 = seed.parse().map_err(|_| format!("bad seed `{seed}`"))?;
            let data: Arc<dyn LoopData> = Arc::new(ProblemLoop(problem.clone()));
            Ok(seeded_loop(&data, seed, None))
        }
        ["loop", "pass", rest @ ..] => Ok(pair_stream(
            &pass_through_program(),
            &parse_stream_spec(&rest.join(" "))?,
        )),
        ["loop", ..] => Err(format!("unknown loop description `{desc}`")),
        _ => Ok(pair_stream(&pass_through_program(), &parse_stream_spec(desc)?)),
    }
}

fn instance_file(path: &Path) -> Result<crate::problems::InstanceText, CliError> {
    parse_instance_text(&read(path)?).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        line: e.line,
        message: e.message,
    })
}

fn validate_lines(r: &mut Report, states: &[Stream], problem: &dyn Problem, cfg: &Config) -> Verdict {
    let verdicts = validate_run(states, problem, cfg.depth, VALIDATE_BUDGET);
    for (i, v) in verdicts.iter().enumerate() {
        match v.detail() {
            Some(d) => r.line(format!("validate step {i} {} {d}", v.keyword())),
            None => r.line(format!("validate step {i} {}", v.keyword())),
        }
    }
    let all = combine(verdicts);
    r.line(format!("valid {}", all.keyword()));
    r.saw(Status::of(&all));
    all
}

fn cmd_loop(op: LoopOp, problem: &str, path: &Path, n: usize, check: bool, cfg: &Config) -> Result<Report, CliError> {
    let base = problem_arg(problem)?;
    let text = instance_file(path)?;
    let q0 = start_state(&text.description, &base).map_err(|message| CliError::Parse {
        path: path.display().to_string(),
        line: text.description_line,
        message,
    })?;
    let f = Realizer::of_problem(base.clone());
    let mut r = Report::new();
    prefix_line(&mut r, "input", &q0, cfg);
    match op {
        LoopOp::Power => prefix_line(&mut r, "output", &power_n(&f, n, &q0), cfg),
        LoopOp::Star => prefix_line(&mut r, "output", &star(&f, &q0.prepend(&[n as Nat])), cfg),
        LoopOp::Omega => {
            let t = omega(&f, &q0);
            for i in 0..cfg.steps {
                let w = show(&crate::streams::project(&t, i), cfg.depth, cfg.fuel);
                r.line(format!("component {i} {w}"));
            }
        }
        LoopOp::Diamond => {
            let d = diamond(&f, &q0, cfg.steps, cfg.fuel);
            r.text += &format_trace(&d.run, cfg.depth, cfg.fuel);
            r.line(format!("class {}", d.class));
            match &d.value {
                Some(v) => prefix_line(&mut r, "output", v, cfg),
                None => r.saw(Status::Undetermined),
            }
            if check {
                validate_lines(&mut r, &d.run.states, base.as_ref(), cfg);
            }
        }
        LoopOp::Infty => {
            let run = Chain::new(&f, &q0).run(cfg.steps);
            r.text += &format_trace(&run, cfg.depth, cfg.fuel);
            for (i, q) in run.states.iter().enumerate() {
                prefix_line(&mut r, &format!("state {i}"), q, cfg);
            }
            if check {
                validate_lines(&mut r, &run.states, base.as_ref(), cfg);
            }
        }
    }
    r.line(format!("calls {}", f.calls()));
    Ok(r)
}

fn cmd_check(witness: &str, seeds: Option<u64>, depth: Option<usize>, cfg: &Config) -> Result<Report, CliError> {
    let lib = witness_library();
    let entry = lib.get(witness).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown witness `{witness}`; known: {}",
            lib.names().join(", ")
        ))
    })?;
    let n = seeds.unwrap_or(entry.default_seeds);
    let depth = depth.unwrap_or(entry.default_depth);
    let report = entry
        .check(cfg.seed..cfg.seed + n, depth)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut r = Report::new();
    r.text = report.to_text();
    if report.refuted() > 0 {
        r.saw(Status::Refuted);
    } else if report.undetermined() > 0 {
        r.saw(Status::Undetermined);
    }
    Ok(r)
}

/// `loop lim-n <seed> [changes s:p ...]`.
fn limn_description(desc: &str) -> Result<(u64, LimNLoop), String> {
    let toks: Vec<&str> = desc.split_whitespace().collect();
    let (seed, rest) = match toks.as_slice() {
        ["loop", "lim-n", seed, rest @ ..] => (seed.parse().map_err(|_| format!("bad seed `{seed}`"))?, rest),
        _ => return Err("expected `loop lim-n <seed> [changes step:pos ...]`".into()),
    };
    let data = match rest {
        [] => LimNLoop::seeded(),
        ["changes", plan @ ..] => {
            let mut changes = Vec::new();
            for c in plan {
                let (s, p) = c.split_once(':').ok_or_else(|| format!("bad change `{c}`"))?;
                let num = |t: &str| t.parse::<usize>().map_err(|_| format!("bad change `{c}`"));
                changes.push((num(s)?, num(p)?));
            }
            LimNLoop::with_changes(changes)
        }
        _ => return Err(format!("unexpected `{}`", rest.join(" "))),
    };
    Ok((seed, data))
}

fn cmd_limsim(path: &Path, horizon: usize, cfg: &Config) -> Result<Report, CliError> {
    let text = instance_file(path)?;
    let perr = |line, message| CliError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    if text.problem != "lim-n" {
        return Err(perr(
            1,
            format!("limsim needs a lim-n instance, not `{}`", text.problem),
        ));
    }
    let (seed, data) = limn_description(&text.description).map_err(|m| perr(text.description_line, m))?;
    let changes = data.changes(seed).len();
    let data: Arc<dyn LoopData> = Arc::new(data);
    let q0 = seeded_loop(&data, seed, None);
    let sim = limn_infty_via_lim(&q0, cfg.steps, horizon);
    let mut r = Report::new();
    r.text += &sim.to_text(cfg.depth);
    r.line(format!("changes {changes}"));
    match sim.outcome {
        LimSimOutcome::Undetermined(_) => r.saw(Status::Undetermined),
        LimSimOutcome::Stabilized { .. } => {
            if sim.restarts > changes {
                r.line(format!("refuted {} restarts for {changes} changes", sim.restarts));
                r.saw(Status::Refuted);
            }
            validate_lines(&mut r, &sim.states, &LimN, cfg);
        }
    }
    Ok(r)
}
