//! Reduction witnesses and their finite-depth verification.
//!
//! A check never proves a reduction. It runs the witness on seeded
//! instances and asks the problem's checker about the first `depth` symbols
//! of the result: a refutation shows the witness is wrong, while the absence
//! of one is evidence up to that depth only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::machine::library::{mix, Constant, SecondOfPair};
use crate::machine::{eval_stream, library, run, Machine, Name, Program};
use crate::operators::{
    combine, inverse_limit, lift_reduction_to_inverse_limit, seeded_loop, step_seed, validate_run, LoopData,
    LoopProblem, ProblemLoop, Realizer, WeakWitness,
};
use crate::problems::{
    cylinder_code, lim_n_instance, sierpinski_value, value_stream, CantorChoice, Cn, Commit, Instance, LimN, Problem,
    Public, SierpinskiValue, Verdict, Witness, C2, CHANGE_HORIZON, READ_BUDGET,
};
use crate::streams::{
    cantor_unpair, first, pair_stream, project, second, tuple_countable, tuple_of, Family, Nat, Stream,
};

pub const DISCLAIMER: &str = "no refutation at depth d is evidence up to depth d, not a proof of the reduction";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReductionError {
    #[error("no instance translation registered for the {0} side")]
    TranslationMissing(String),
    #[error("unknown witness `{0}`")]
    UnknownWitness(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckRecord {
    pub seed: u64,
    pub verdict: Verdict,
    /// Extra information on a record that has no verdict detail.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckReport {
    pub witness: String,
    pub depth: usize,
    pub records: Vec<CheckRecord>,
    /// Named totals such as realizer calls, sampled advices or restarts.
    pub counters: BTreeMap<String, u64>,
    pub disclaimers: Vec<String>,
}

impl CheckReport {
    pub fn new(witness: &str, depth: usize) -> Self {
        CheckReport {
            witness: witness.into(),
            depth,
            records: Vec::new(),
            counters: BTreeMap::new(),
            disclaimers: vec![DISCLAIMER.into()],
        }
    }

    fn push(&mut self, seed: u64, verdict: Verdict, note: Option<String>) {
        self.records.push(CheckRecord { seed, verdict, note });
    }

    fn count(&mut self, key: &str, n: u64) {
        *self.counters.entry(key.into()).or_insert(0) += n;
    }

    fn tally(&self, keyword: &str) -> usize {
        self.records.iter().filter(|r| r.verdict.keyword() == keyword).count()
    }

    pub fn consistent(&self) -> usize {
        self.tally("consistent")
    }

    pub fn refuted(&self) -> usize {
        self.tally("refuted")
    }

    pub fn undetermined(&self) -> usize {
        self.tally("undetermined")
    }

    /// Reports over disjoint seed sets of one witness combine into the report
    /// over their union.
    pub fn merge(mut self, other: CheckReport) -> CheckReport {
        self.records.extend(other.records);
        self.records.sort_by_key(|r| r.seed);
        for (k, v) in other.counters {
            self.count(&k, v);
        }
        for d in other.disclaimers {
            if !self.disclaimers.contains(&d) {
                self.disclaimers.push(d);
            }
        }
        self
    }

    /// One `check` line per seed in seed order, then the summary and the
    /// disclaimers.
    pub fn to_text(&self) -> String {
        let mut records = self.records.clone();
        records.sort_by_key(|r| r.seed);
        let mut out = String::new();
        for r in &records {
            let _ = write!(
                out,
                "check {} seed {} depth {} verdict {}",
                self.witness,
                r.seed,
                self.depth,
                r.verdict.keyword()
            );
            if let Some(d) = r.verdict.detail().or(r.note.as_deref()) {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
        }
        let _ = write!(
            out,
            "summary {} seeds {} consistent {} refuted {} undetermined {}",
            self.witness,
            records.len(),
            self.consistent(),
            self.refuted(),
            self.undetermined()
        );
        for (k, v) in &self.counters {
            let _ = write!(out, " {k} {v}");
        }
        out.push('\n');
        for d in &self.disclaimers {
            let _ = writeln!(out, "note {d}");
        }
        out
    }
}

/// A machine given by a closure on streams.
struct FnMachine {
    label: &'static str,
    f: Box<dyn Fn(&Stream) -> Stream + Send + Sync>,
}

fn machine(label: &'static str, f: impl Fn(&Stream) -> Stream + Send + Sync + 'static) -> Program {
    Arc::new(FnMachine { label, f: Box::new(f) })
}

impl Machine for FnMachine {
    fn label(&self) -> String {
        self.label.into()
    }

    fn apply(&self, input: &Stream) -> Option<Stream> {
        Some((self.f)(input))
    }
}

// ---------------------------------------------------------------------------
// Reductions

/// `K` and `H` of `f <=_W g`. The weak form computes `H<p, G(K p)>`, the
/// strong form `H(G(K p))`.
#[derive(Clone)]
pub struct ReductionWitness {
    pub k: Program,
    pub h: Program,
    pub strong: bool,
}

/// Turns an `f`-instance and `K` of its name into the `g`-instance an oracle
/// realizer of `g` is asked about.
pub type Translation = Arc<dyn Fn(&Instance, &Stream) -> Instance + Send + Sync>;

#[derive(Clone)]
pub enum GRealizer {
    /// Reads the hidden witness of the translated instance.
    Oracle {
        problem: Arc<dyn Problem>,
        translate: Option<Translation>,
    },
    /// Reads names only.
    Names(Realizer),
}

pub fn check_reduction(
    name: &str,
    f: &dyn Problem,
    g: &GRealizer,
    w: &ReductionWitness,
    seeds: impl IntoIterator<Item = u64>,
    depth: usize,
) -> Result<CheckReport, ReductionError> {
    if let GRealizer::Oracle {
        problem,
        translate: None,
    } = g
    {
        return Err(ReductionError::TranslationMissing(problem.name().into()));
    }
    let mut report = CheckReport::new(name, depth);
    let mut calls = 0;
    let calls_before = match g {
        GRealizer::Names(r) => r.calls(),
        _ => 0,
    };
    for seed in seeds {
        let inst = f.generate(seed);
        let x = &inst.public.stream;
        let y = run(&w.k, x);
        let answer = match g {
            GRealizer::Oracle {
                problem,
                translate: Some(t),
            } => {
                calls += 1;
                problem.solve(&t(&inst, &y))
            }
            GRealizer::Oracle { .. } => unreachable!(),
            GRealizer::Names(r) => r.call(&y),
        };
        let out = if w.strong {
            run(&w.h, &answer)
        } else {
            run(&w.h, &pair_stream(x, &answer))
        };
        report.push(seed, f.check(&inst.public, &out, depth), None);
    }
    if let GRealizer::Names(r) = g {
        calls = r.calls() - calls_before;
    }
    report.count("calls", calls);
    report.records.sort_by_key(|r| r.seed);
    Ok(report)
}

/// The same instance with the name replaced.
pub fn same_instance() -> Translation {
    Arc::new(|inst: &Instance, y: &Stream| {
        let mut t = inst.clone();
        t.public.stream = y.clone();
        t
    })
}

/// Exclusion `n` stays exclusion `n` for `n < 2`, and every `k >= 2` is
/// excluded in between: `K(p)(2m) = p(m)`, `K(p)(2m+1)` excludes `m + 2`.
pub fn c2_into_cn() -> Program {
    machine("c2 into cn", |p| {
        let p = p.clone();
        Stream::from_point_fn(move |n, fuel| {
            if n % 2 == 0 {
                p.get(n / 2, fuel)
            } else {
                Ok((n / 2) as Nat + 3)
            }
        })
    })
}

/// A sequence of naturals as the sequence of points `p(n) 0 0 ...`.
pub fn lim_n_into_lim() -> Program {
    machine("lim-n into lim", |p| {
        let p = p.clone();
        tuple_countable(Family::new(move |n| {
            let p = p.clone();
            Stream::from_point_fn(move |k, fuel| if k == 0 { p.get(n, fuel) } else { Ok(0) })
        }))
    })
}

/// `y -> y(0) 0 0 ...`.
pub fn first_symbol() -> Program {
    machine("first symbol", |y| {
        let y = y.clone();
        Stream::from_point_fn(move |k, fuel| if k == 0 { y.get(0, fuel) } else { Ok(0) })
    })
}

// ---------------------------------------------------------------------------
// Parallelization of C_2 into choice on Cantor space

/// Components beyond this are left empty by the generator.
pub const PARALLEL_WIDTH: usize = 8;

/// Countably many independent instances of `base`.
pub struct ParallelProblem {
    pub name: &'static str,
    pub base: Arc<dyn Problem>,
}

impl Problem for ParallelProblem {
    fn name(&self) -> &'static str {
        self.name
    }

    fn generate(&self, seed: u64) -> Instance {
        let parts: Vec<Instance> = (0..PARALLEL_WIDTH)
            .map(|i| self.base.generate(step_seed(seed, i, 0)))
            .collect();
        let values = parts
            .iter()
            .map(|p| match p.witness {
                Witness::Value(v) => v,
                _ => 0,
            })
            .collect();
        Instance {
            problem: self.name.into(),
            seed,
            public: Public {
                stream: tuple_of(parts.iter().map(|p| p.public.stream.clone()).collect()),
                description: format!("parallel {} seed {seed}", self.base.name()),
                commits: Vec::new(),
            },
            witness: Witness::Word(values),
        }
    }

    /// Components below `min(depth, PARALLEL_WIDTH)`, each to `depth`.
    fn check(&self, public: &Public, output: &Stream, depth: usize) -> Verdict {
        combine((0..depth.min(PARALLEL_WIDTH)).map(|i| {
            let part = Public::of_stream(project(&public.stream, i));
            match self.base.check(&part, &project(output, i), depth) {
                Verdict::Consistent => Verdict::Consistent,
                Verdict::Refuted(d) => Verdict::Refuted(format!("component {i}: {d}")),
                Verdict::Undetermined(d) => Verdict::Undetermined(format!("component {i}: {d}")),
            }
        }))
    }

    fn solve(&self, instance: &Instance) -> Stream {
        match &instance.witness {
            Witness::Word(w) => tuple_of(w.iter().map(|&v| value_stream(v)).collect()),
            _ => self.solve_public(&instance.public.stream),
        }
    }

    fn solve_public(&self, public: &Stream) -> Stream {
        let (base, x) = (self.base.clone(), public.clone());
        tuple_countable(Family::new(move |i| base.solve_public(&project(&x, i))))
    }
}

/// Exclusion of `b` in component `i` becomes the exclusion of every
/// cylinder `w b` with `|w| = i`. Position `<<i,m>,u>` handles symbol `m` of
/// component `i` and the word `w` with binary value `u`.
pub fn parallel_c2_into_cantor() -> Program {
    machine("parallel c2 into cantor choice", |t| {
        let t = t.clone();
        Stream::from_point_fn(move |n, fuel| {
            let (c, u) = cantor_unpair(n as u64);
            let (i, m) = cantor_unpair(c);
            if i >= 40 || u >= 1 << i {
                return Ok(0);
            }
            let s = project(&t, i as usize).get(m as usize, fuel)?;
            if s == 0 || s > 2 {
                return Ok(0);
            }
            let mut w: Vec<Nat> = (0..i).rev().map(|j| (u >> j) & 1).collect();
            w.push(s - 1);
            Ok(cylinder_code(&w) + 1)
        })
    })
}

/// `x -> <x(0), x(1), ...>` as discrete answers.
pub fn path_bits() -> Program {
    machine("path bits", |x| {
        let x = x.clone();
        tuple_countable(Family::new(move |i| {
            let x = x.clone();
            Stream::from_point_fn(move |k, fuel| if k == 0 { x.get(i, fuel) } else { Ok(0) })
        }))
    })
}

// ---------------------------------------------------------------------------
// Nondeterministic computation with advice

type Sampler = dyn Fn(u64) -> Stream + Send + Sync;
type Membership = dyn Fn(&Stream, usize) -> bool + Send + Sync;

/// A space of advices: seeded samples and a membership test on prefixes.
#[derive(Clone)]
pub struct AdviceSpace {
    pub label: String,
    sample: Arc<Sampler>,
    member: Arc<Membership>,
}

impl AdviceSpace {
    /// Binary sequences.
    pub fn cantor() -> Self {
        AdviceSpace {
            label: "2^N".into(),
            sample: Arc::new(|seed| Stream::from_fn(move |n| mix(mix(seed) ^ n as u64) & 1)),
            member: Arc::new(|r, depth| {
                r.determined_prefix(depth, READ_BUDGET).0.iter().all(|&b| b <= 1)
                    && r.determined_prefix(depth, READ_BUDGET).len() == depth
            }),
        }
    }

    /// Countable tuples of advices, sampled component-wise.
    pub fn product(&self) -> Self {
        let (base_sample, base_member) = (self.sample.clone(), self.member.clone());
        AdviceSpace {
            label: format!("({})^N", self.label),
            sample: Arc::new(move |seed| {
                let s = base_sample.clone();
                tuple_countable(Family::new(move |i| s(mix(seed ^ mix(i as u64 + 1)))))
            }),
            member: Arc::new(move |r, depth| (0..depth).all(|i| base_member(&project(r, i), depth))),
        }
    }

    pub fn sample(&self, seed: u64) -> Stream {
        (self.sample)(seed)
    }

    /// Membership as far as the first `depth` symbols tell.
    pub fn contains(&self, r: &Stream, depth: usize) -> bool {
        (self.member)(r, depth)
    }
}

pub type HelpfulAdvice = dyn Fn(&Instance) -> Stream + Send + Sync;

/// `F_1<p,r>` solves the instance when `F_2<p,r>` is all zeros; a nonzero
/// symbol of `F_2` marks `r` as unhelpful.
#[derive(Clone)]
pub struct NonDetWitness {
    pub f1: Program,
    pub f2: Program,
    pub advice: AdviceSpace,
    /// Advice derived from the generator's hidden data.
    pub helpful: Arc<HelpfulAdvice>,
    /// Helpful advice is unique.
    pub unique: bool,
}

/// `C_2` with advice: the first advice symbol is the answer. It is flagged
/// once the input excludes it; the unique variant also flags any nonzero
/// symbol after the first.
pub fn c2_nondet(unique: bool) -> NonDetWitness {
    let f1 = machine("advice choice", |x| {
        let r = second(x);
        Stream::deferred(move |fuel| Ok(value_stream(r.get(0, fuel)?)))
    });
    let f2 = Arc::new(FnMachine {
        label: if unique {
            "excluded or extra advice"
        } else {
            "excluded advice"
        },
        f: Box::new(move |x| {
            let (p, r) = (first(x), second(x));
            Stream::from_prefix_fn(move |n, fuel| {
                let b = r.get(0, fuel)?;
                let mut flagged = b > 1;
                let mut out = Vec::with_capacity(n + 1);
                for m in 0..=n {
                    flagged = flagged || p.get(m, fuel)? == b + 1 || (unique && m > 0 && r.get(m, fuel)? != 0);
                    out.push(Nat::from(flagged));
                }
                Ok(out.into())
            })
        }),
    });
    NonDetWitness {
        f1,
        f2,
        advice: AdviceSpace::cantor(),
        helpful: Arc::new(|inst| match inst.witness {
            Witness::Value(v) => value_stream(v),
            _ => Stream::zeros(),
        }),
        unique,
    }
}

/// The states `<q_i, p_i>` of a loop driven by `F_1` under advice
/// `r = <r_0, r_1, ...>`. Component `r_i` is read once, when state `i + 1`
/// is built.
struct AdvisedRun {
    f1: Program,
    advice: Stream,
    states: Mutex<Vec<Stream>>,
}

impl AdvisedRun {
    fn new(f1: &Program, x: &Stream) -> Arc<Self> {
        let (start, advice) = (first(x), second(x));
        Arc::new(AdvisedRun {
            f1: f1.clone(),
            advice,
            states: Mutex::new(vec![start]),
        })
    }

    fn state(&self, i: usize) -> Stream {
        let mut states = self.states.lock().unwrap();
        while states.len() <= i {
            let k = states.len() - 1;
            let (q, p) = (first(&states[k]), second(&states[k]));
            let a = run(&self.f1, &pair_stream(&p, &project(&self.advice, k)));
            states.push(eval_stream(&Name::from(q), &a));
        }
        states[i].clone()
    }
}

/// Per-read budget of the combined flag at position `n`.
fn flag_budget(n: usize) -> u64 {
    20_000 * (n as u64 + 1)
}

/// `F_1` and `F_2` for the inverse limit with advice space `A^N`.
/// `G_1<<q_0,p_0>, r>` is the advised run; `G_2` is 1 at position `n` once
/// some `F_2<p_i, r_i>` with `i <= n` shows a nonzero symbol at an index
/// `<= n` within the read budget for `n`. Reads that run out of budget
/// count as "nothing seen yet" and are retried with more budget later.
pub fn nondet_lift_inverse_limit(w: &NonDetWitness, data: Arc<dyn LoopData>) -> NonDetWitness {
    let base_f1 = w.f1.clone();
    let g1 = machine("advised run", move |x| {
        let run = AdvisedRun::new(&base_f1, x);
        tuple_countable(Family::new(move |i| run.state(i)))
    });
    let (base_f1, base_f2) = (w.f1.clone(), w.f2.clone());
    let g2 = machine("first failed advice", move |x| {
        let advised = AdvisedRun::new(&base_f1, x);
        let advice = second(x);
        let f2 = base_f2.clone();
        let flags = Family::new(move |i| run(&f2, &pair_stream(&second(&advised.state(i)), &project(&advice, i))));
        Stream::from_prefix_fn(move |n, fuel| {
            fuel.tick()?;
            let mut flagged = false;
            let mut out = Vec::with_capacity(n + 1);
            for m in 0..=n {
                flagged = flagged
                    || (0..=m).any(|i| {
                        let f = flags.get(i);
                        (0..=m).any(|j| matches!(f.at(j, flag_budget(m)), Ok(s) if s != 0))
                    });
                out.push(Nat::from(flagged));
            }
            Ok(out.into())
        })
    });
    let base = w.clone();
    let helpful: Arc<HelpfulAdvice> = Arc::new(move |inst: &Instance| {
        let memo = Arc::new(Mutex::new(Vec::<(Stream, Nat)>::new()));
        let (base, data, seed) = (base.clone(), data.clone(), inst.seed);
        tuple_countable(Family::new(move |i| {
            let mut memo = memo.lock().unwrap();
            while memo.len() <= i {
                let prev = memo.last().map_or(0, |m| m.1);
                let step = data.instance(seed, memo.len(), prev);
                let r = (base.helpful)(&step);
                let a = run(&base.f1, &pair_stream(&step.public.stream, &r));
                let head = a.at(0, READ_BUDGET).unwrap_or(0);
                memo.push((r, head));
            }
            memo[i].0.clone()
        }))
    });
    NonDetWitness {
        f1: g1,
        f2: g2,
        advice: w.advice.product(),
        helpful,
        unique: w.unique,
    }
}

fn flag_of(w: &NonDetWitness, p: &Stream, r: &Stream, depth: usize) -> SierpinskiValue {
    sierpinski_value(&run(&w.f2, &pair_stream(p, r)), depth)
}

/// Even samples come from the advice space; odd samples are the helpful
/// advice with one symbol below `depth` taken from such a sample instead.
fn sample_near(w: &NonDetWitness, helpful: &Stream, seed: u64, k: usize, depth: usize) -> Stream {
    let key = mix(seed.wrapping_mul(31) ^ mix(k as u64));
    let r = w.advice.sample(key);
    if k.is_multiple_of(2) || depth == 0 {
        return r;
    }
    let j = (mix(key ^ 0xA11CE) % depth as u64) as usize;
    let h = helpful.clone();
    Stream::from_point_fn(move |n, fuel| if n == j { r.get(n, fuel) } else { h.get(n, fuel) })
}

/// Helpful advice must show no flag and give a solution the checker does not
/// refute. Sampled advice that shows no flag must also give an unrefuted
/// solution; flagged samples are only counted. With `unique`, an unflagged
/// sample that differs from the helpful advice leaves the record
/// undetermined, since its flag may still come later. `F_2` must
/// determine every index below `depth` on the inputs tried.
pub fn check_nondet(
    name: &str,
    w: &NonDetWitness,
    f: &dyn Problem,
    seeds: impl IntoIterator<Item = u64>,
    depth: usize,
    samples: usize,
) -> CheckReport {
    let mut report = CheckReport::new(name, depth);
    report
        .disclaimers
        .push("helpful advice is checked only for the advice derived from the generator".into());
    report.disclaimers.push(format!(
        "unflagged advice is checked only up to depth {depth} and on sampled advice"
    ));
    for seed in seeds {
        let inst = f.generate(seed);
        let p = &inst.public.stream;
        let helpful = (w.helpful)(&inst);
        let solved = |r: &Stream| f.check(&inst.public, &run(&w.f1, &pair_stream(p, r)), depth);
        let mut verdict = if !w.advice.contains(&helpful, depth) {
            Verdict::Refuted("helpful advice is outside the advice space".into())
        } else {
            match flag_of(w, p, &helpful, depth) {
                SierpinskiValue::NonzeroAt(k) => Verdict::Refuted(format!("helpful advice flagged at {k}")),
                SierpinskiValue::UndeterminedAt(i) => {
                    Verdict::Refuted(format!("flag not determined at {i} on helpful advice"))
                }
                SierpinskiValue::ZeroSoFar => match solved(&helpful) {
                    Verdict::Refuted(d) => Verdict::Refuted(format!("helpful advice: {d}")),
                    v => v,
                },
            }
        };
        let mut flagged = 0;
        for k in 0..samples {
            let r = sample_near(w, &helpful, seed, k, depth);
            let v = match flag_of(w, p, &r, depth) {
                SierpinskiValue::NonzeroAt(_) => {
                    flagged += 1;
                    Verdict::Consistent
                }
                SierpinskiValue::UndeterminedAt(i) => {
                    Verdict::Refuted(format!("flag not determined at {i} on sample {k}"))
                }
                SierpinskiValue::ZeroSoFar => {
                    let differs =
                        r.determined_prefix(depth, READ_BUDGET) != helpful.determined_prefix(depth, READ_BUDGET);
                    match solved(&r) {
                        Verdict::Refuted(d) => Verdict::Refuted(format!("unflagged sample {k}: {d}")),
                        _ if w.unique && differs => Verdict::Undetermined(format!(
                            "sample {k} differs from the unique advice but is unflagged through {depth}"
                        )),
                        _ => Verdict::Consistent,
                    }
                }
            };
            verdict = verdict.and(v);
        }
        report.count("samples", samples as u64);
        report.count("flagged", flagged);
        report.push(seed, verdict, Some(format!("flagged {flagged} of {samples} samples")));
    }
    report
}

// ---------------------------------------------------------------------------
// Inverse limit of lim_N on a limit machine

/// Levels simulated by the registered suite; seeded plans put their changes
/// below this step.
pub const LIMSIM_LEVELS: usize = 5;

/// A revision is final once this many time steps pass without another.
pub const LIMSIM_QUIET: usize = CHANGE_HORIZON;

/// Loop data whose steps pose `lim_N` instances. The change positions of
/// step `i` depend only on the seed and `i`; the values also depend on the
/// previous answer. Seeded plans make at most 3 changes in all.
#[derive(Clone)]
pub struct LimNLoop {
    /// `(step, position)` of every change, or `None` for a seeded plan.
    pub plan: Option<Vec<(usize, usize)>>,
}

impl LimNLoop {
    pub fn seeded() -> Self {
        LimNLoop { plan: None }
    }

    pub fn with_changes(plan: Vec<(usize, usize)>) -> Self {
        LimNLoop { plan: Some(plan) }
    }

    pub fn changes(&self, seed: u64) -> Vec<(usize, usize)> {
        let mut plan = match &self.plan {
            Some(p) => p.clone(),
            None => {
                let mut r = ChaCha8Rng::seed_from_u64(mix(seed ^ 0x11A5_5EED));
                (0..r.gen_range(0..=3))
                    .map(|_| (r.gen_range(0..LIMSIM_LEVELS), r.gen_range(1..CHANGE_HORIZON)))
                    .collect()
            }
        };
        plan.sort_unstable();
        plan.dedup();
        plan
    }
}

impl LoopData for LimNLoop {
    fn label(&self) -> String {
        "lim-n".into()
    }

    fn instance(&self, seed: u64, step: usize, prev: Nat) -> Instance {
        let pos: Vec<usize> = self
            .changes(seed)
            .into_iter()
            .filter(|c| c.0 == step)
            .map(|c| c.1)
            .collect();
        let s = step_seed(seed, step, prev);
        let mut r = ChaCha8Rng::seed_from_u64(s);
        let mut vals = vec![r.gen_range(0..10)];
        for _ in &pos {
            let last = *vals.last().unwrap();
            vals.push((last + r.gen_range(1..10)) % 10);
        }
        lim_n_instance(s, &pos, &vals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Revision {
    pub time: usize,
    pub level: usize,
    pub old: Nat,
    pub new: Nat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LimSimOutcome {
    /// No revision in the last [`LIMSIM_QUIET`] time steps.
    Stabilized {
        last_revision: Option<usize>,
    },
    Undetermined(String),
}

pub struct LimSim {
    /// `<q_0,p_0>, ..., <q_levels, p_levels>` under the final guesses.
    pub states: Vec<Stream>,
    pub guesses: Vec<Nat>,
    pub trace: Vec<Revision>,
    pub restarts: usize,
    pub outcome: LimSimOutcome,
}

impl LimSim {
    pub fn to_text(&self, window: usize) -> String {
        let mut out = String::new();
        for r in &self.trace {
            let _ = writeln!(
                out,
                "revise time {} level {} from {} to {}",
                r.time, r.level, r.old, r.new
            );
        }
        let _ = writeln!(out, "restarts {}", self.restarts);
        for (i, g) in self.guesses.iter().enumerate() {
            let _ = writeln!(out, "guess level {i} value {g}");
        }
        for (i, q) in self.states.iter().enumerate() {
            let w = q.determined_prefix(window, READ_BUDGET);
            let _ = writeln!(out, "state {i} {w}");
        }
        match &self.outcome {
            LimSimOutcome::Stabilized { last_revision } => {
                let last = last_revision.map_or("none".to_string(), |t| t.to_string());
                let _ = writeln!(out, "stabilized last-revision {last}");
            }
            LimSimOutcome::Undetermined(d) => {
                let _ = writeln!(out, "undetermined {d}");
            }
        }
        out
    }
}

/// Limit-machine computation of the first `levels` transitions of the
/// `lim_N` inverse limit from `q0`. At time `t` every level `i` is assumed
/// to be constant at the latest value seen, `p_i(t)`, and the next state is
/// computed from that guess. When some `p_i(t)` differs from its guess, the
/// lowest such level is revised and everything above it is recomputed with
/// guesses read at time `t`.
pub fn limn_infty_via_lim(q0: &Stream, levels: usize, horizon: usize) -> LimSim {
    let mut sim = LimSim {
        states: vec![q0.clone()],
        guesses: Vec::new(),
        trace: Vec::new(),
        restarts: 0,
        outcome: LimSimOutcome::Stabilized { last_revision: None },
    };
    let undetermined = |i: usize, t: usize| LimSimOutcome::Undetermined(format!("level {i} time {t} not determined"));
    // rebuild levels `from..levels` with guesses read at time `t`
    let rebuild = |sim: &mut LimSim, from: usize, t: usize| -> Result<(), LimSimOutcome> {
        sim.states.truncate(from + 1);
        sim.guesses.truncate(from);
        for i in from..levels {
            let (q, p) = (first(&sim.states[i]), second(&sim.states[i]));
            let g = p.at(t, READ_BUDGET).map_err(|_| undetermined(i, t))?;
            sim.guesses.push(g);
            sim.states.push(eval_stream(&Name::from(q), &value_stream(g)));
        }
        Ok(())
    };
    if let Err(o) = rebuild(&mut sim, 0, 0) {
        sim.outcome = o;
        return sim;
    }
    let mut last = None;
    for t in 1..horizon {
        for i in 0..levels {
            let v = match second(&sim.states[i]).at(t, READ_BUDGET) {
                Ok(v) => v,
                Err(_) => {
                    sim.outcome = undetermined(i, t);
                    return sim;
                }
            };
            if v != sim.guesses[i] {
                sim.trace.push(Revision {
                    time: t,
                    level: i,
                    old: sim.guesses[i],
                    new: v,
                });
                sim.restarts += 1;
                last = Some(t);
                // p_i(t) is the new guess, so rebuilding from level i revises it
                if let Err(o) = rebuild(&mut sim, i, t) {
                    sim.outcome = o;
                    return sim;
                }
                break;
            }
        }
    }
    sim.outcome = match last {
        Some(t) if t + LIMSIM_QUIET > horizon => LimSimOutcome::Undetermined(format!(
            "revision at time {t} within the last {LIMSIM_QUIET} of {horizon} time steps"
        )),
        _ if horizon < LIMSIM_QUIET => {
            LimSimOutcome::Undetermined(format!("horizon {horizon} is shorter than {LIMSIM_QUIET}"))
        }
        last => LimSimOutcome::Stabilized { last_revision: last },
    };
    sim
}

/// Stabilization, restarts within the number of changes, and step-wise
/// validity of the final run.
pub fn check_limsim(
    name: &str,
    data: &LimNLoop,
    seeds: impl IntoIterator<Item = u64>,
    depth: usize,
    horizon: usize,
) -> CheckReport {
    let mut report = CheckReport::new(name, depth);
    let data_arc: Arc<dyn LoopData> = Arc::new(data.clone());
    for seed in seeds {
        let q0 = seeded_loop(&data_arc, seed, None);
        let sim = limn_infty_via_lim(&q0, LIMSIM_LEVELS, horizon);
        let changes = data.changes(seed).len();
        report.count("restarts", sim.restarts as u64);
        report.count("changes", changes as u64);
        let verdict = match &sim.outcome {
            LimSimOutcome::Undetermined(d) => Verdict::Undetermined(d.clone()),
            LimSimOutcome::Stabilized { .. } if sim.restarts > changes => {
                Verdict::Refuted(format!("{} restarts for {changes} changes", sim.restarts))
            }
            LimSimOutcome::Stabilized { .. } => combine(validate_run(&sim.states, &LimN, depth, 200_000)),
        };
        let note = format!("restarts {} changes {changes}", sim.restarts);
        report.push(seed, verdict, Some(note));
    }
    report
}

// ---------------------------------------------------------------------------
// Registry

pub enum Suite {
    Reduction {
        f: Arc<dyn Problem>,
        g: GRealizer,
        w: ReductionWitness,
    },
    NonDet {
        f: Arc<dyn Problem>,
        w: NonDetWitness,
        samples: usize,
    },
    LimSim {
        data: LimNLoop,
        horizon: usize,
    },
}

pub struct RegistryEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub suite: Suite,
    pub default_seeds: u64,
    pub default_depth: usize,
}

impl RegistryEntry {
    pub fn check(&self, seeds: impl IntoIterator<Item = u64>, depth: usize) -> Result<CheckReport, ReductionError> {
        match &self.suite {
            Suite::Reduction { f, g, w } => check_reduction(self.name, f.as_ref(), g, w, seeds, depth),
            Suite::NonDet { f, w, samples } => Ok(check_nondet(self.name, w, f.as_ref(), seeds, depth, *samples)),
            Suite::LimSim { data, horizon } => Ok(check_limsim(self.name, data, seeds, depth, *horizon)),
        }
    }
}

pub struct Registry {
    entries: Vec<Arc<RegistryEntry>>,
}

impl Registry {
    pub fn get(&self, name: &str) -> Option<Arc<RegistryEntry>> {
        self.entries.iter().find(|e| e.name == name).cloned()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    pub fn check(
        &self,
        name: &str,
        seeds: impl IntoIterator<Item = u64>,
        depth: usize,
    ) -> Result<CheckReport, ReductionError> {
        let e = self
            .get(name)
            .ok_or_else(|| ReductionError::UnknownWitness(name.into()))?;
        e.check(seeds, depth)
    }
}

/// Steps of the loop problems in the registered suites.
pub const LOOP_STEPS: usize = 5;

fn c2() -> Arc<dyn Problem> {
    Arc::new(C2 { always_exclude: false })
}

fn c2_unique() -> Arc<dyn Problem> {
    Arc::new(C2 { always_exclude: true })
}

fn oracle(problem: Arc<dyn Problem>, translate: Translation) -> GRealizer {
    GRealizer::Oracle {
        problem,
        translate: Some(translate),
    }
}

fn constant_answer(v: Nat) -> Program {
    Arc::new(Constant(value_stream(v)))
}

fn c2_cn_witness() -> ReductionWitness {
    ReductionWitness {
        k: c2_into_cn(),
        h: library::identity(),
        strong: true,
    }
}

fn to_cn() -> Translation {
    Arc::new(|inst: &Instance, y: &Stream| Instance {
        problem: "cn".into(),
        seed: inst.seed,
        public: Public::of_stream(y.clone()),
        witness: inst.witness.clone(),
    })
}

fn to_lim() -> Translation {
    Arc::new(|inst: &Instance, y: &Stream| {
        let limit = match inst.witness {
            Witness::Value(v) => v,
            _ => 0,
        };
        let stage = inst.public.commits.first().map_or(0, |c| c.stage);
        Instance {
            problem: "lim".into(),
            seed: inst.seed,
            public: Public {
                stream: y.clone(),
                description: String::new(),
                commits: vec![Commit {
                    coord: 0,
                    value: limit,
                    stage,
                }],
            },
            witness: Witness::Word(vec![limit]),
        }
    })
}

fn to_cantor() -> Translation {
    Arc::new(|inst: &Instance, y: &Stream| Instance {
        problem: "c2n".into(),
        seed: inst.seed,
        public: Public::of_stream(y.clone()),
        witness: inst.witness.clone(),
    })
}

fn loop_over(name: &'static str, base: Arc<dyn Problem>) -> Arc<dyn Problem> {
    Arc::new(LoopProblem::over(name, base, LOOP_STEPS))
}

fn build_registry() -> Registry {
    let cn_loop_realizer = {
        let cn = Realizer::of_problem(Arc::new(Cn));
        Realizer::new("cn inverse limit", move |x| inverse_limit(&cn, x))
    };
    let lifted_c2_cn = lift_reduction_to_inverse_limit(&WeakWitness {
        k: c2_into_cn(),
        h: Arc::new(SecondOfPair),
    });
    let entries = vec![
        RegistryEntry {
            name: "llpo-id",
            summary: "LLPO reduces to itself: K = id, H<p,a> = a",
            suite: Suite::Reduction {
                f: c2(),
                g: oracle(c2(), same_instance()),
                w: ReductionWitness {
                    k: library::identity(),
                    h: Arc::new(SecondOfPair),
                    strong: false,
                },
            },
            default_seeds: 500,
            default_depth: 32,
        },
        RegistryEntry {
            name: "c2-cn",
            summary: "C_2 reduces strongly to C_N by excluding every k >= 2",
            suite: Suite::Reduction {
                f: c2(),
                g: oracle(Arc::new(Cn), to_cn()),
                w: c2_cn_witness(),
            },
            default_seeds: 200,
            default_depth: 32,
        },
        RegistryEntry {
            name: "limn-lim",
            summary: "lim_N reduces strongly to lim by embedding naturals as points",
            suite: Suite::Reduction {
                f: Arc::new(LimN),
                g: oracle(Arc::new(crate::problems::Lim), to_lim()),
                w: ReductionWitness {
                    k: lim_n_into_lim(),
                    h: first_symbol(),
                    strong: true,
                },
            },
            default_seeds: 200,
            default_depth: 32,
        },
        RegistryEntry {
            name: "llpo-parallel-c2n",
            summary: "parallel LLPO reduces strongly to choice on Cantor space",
            suite: Suite::Reduction {
                f: Arc::new(ParallelProblem {
                    name: "c2-parallel",
                    base: c2(),
                }),
                g: oracle(Arc::new(CantorChoice), to_cantor()),
                w: ReductionWitness {
                    k: parallel_c2_into_cantor(),
                    h: path_bits(),
                    strong: true,
                },
            },
            default_seeds: 100,
            default_depth: 32,
        },
        RegistryEntry {
            name: "c2-cn-infty",
            summary: "the C_2 <= C_N witness lifted to inverse limits of C_2 loops",
            suite: Suite::Reduction {
                f: loop_over("c2-loop", c2()),
                g: GRealizer::Names(cn_loop_realizer),
                w: ReductionWitness {
                    k: lifted_c2_cn.k.clone(),
                    h: lifted_c2_cn.h.clone(),
                    strong: true,
                },
            },
            default_seeds: 50,
            default_depth: 5,
        },
        RegistryEntry {
            name: "c2-loop-lift",
            summary: "C_2 loops solved with advice in (2^N)^N, lifted from C_2 with advice in 2^N",
            suite: Suite::NonDet {
                f: loop_over("c2-loop", c2()),
                w: nondet_lift_inverse_limit(&c2_nondet(false), Arc::new(ProblemLoop(c2()))),
                samples: 4,
            },
            default_seeds: 200,
            default_depth: 32,
        },
        RegistryEntry {
            name: "c2-loop-lift-unique",
            summary: "the unique-advice variant on loops of C_2 instances with one exclusion",
            suite: Suite::NonDet {
                f: loop_over("c2-unique-loop", c2_unique()),
                w: nondet_lift_inverse_limit(&c2_nondet(true), Arc::new(ProblemLoop(c2_unique()))),
                samples: 4,
            },
            default_seeds: 200,
            default_depth: 32,
        },
        RegistryEntry {
            name: "limn-loop-lim",
            summary: "the lim_N inverse limit computed on a limit machine",
            suite: Suite::LimSim {
                data: LimNLoop::seeded(),
                horizon: 64,
            },
            default_seeds: 100,
            default_depth: 32,
        },
        RegistryEntry {
            name: "broken-lpo",
            summary: "negative control: LPO answered by the constant 1",
            suite: Suite::Reduction {
                f: Arc::new(crate::problems::Lpo),
                g: oracle(Arc::new(crate::problems::Lpo), same_instance()),
                w: ReductionWitness {
                    k: library::identity(),
                    h: constant_answer(1),
                    strong: true,
                },
            },
            default_seeds: 100,
            default_depth: 32,
        },
        RegistryEntry {
            name: "broken-c2",
            summary: "negative control: C_2 answered by the constant 0",
            suite: Suite::Reduction {
                f: c2(),
                g: oracle(c2(), same_instance()),
                w: ReductionWitness {
                    k: library::identity(),
                    h: constant_answer(0),
                    strong: true,
                },
            },
            default_seeds: 100,
            default_depth: 32,
        },
    ];
    Registry {
        entries: entries.into_iter().map(Arc::new).collect(),
    }
}

/// The shipped witnesses, built once.
pub fn witness_library() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(build_registry)
}
