//! Loop operators on realizers.
//!
//! A loop state is a pair `<program, data>`. One step asks the realizer of
//! `f` for an answer on the data and feeds it to the program through the
//! universal machine, which must produce the next state. The first symbol of
//! a state is its head; a head of 0 ends a successful run.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, Weak};

use crate::machine::library::mix;
use crate::machine::{encode_machine, eval_stream, run, Machine, Name, Program};
use crate::problems::{value_stream, Instance, Problem, Public, Verdict};
use crate::streams::{
    cantor_pair, cantor_unpair, first, pair_stream, project, second, tuple_countable, unpair_stream, Family, Fuel, Nat,
    OutOfFuel, Stream, Word,
};
use crate::transform::{block_extractor, injective_recursion, smn, InjectionInstance, InjectiveRecursion};

/// A solver together with a count of the calls made to it.
#[derive(Clone)]
pub struct Realizer {
    label: Arc<str>,
    solve: Arc<dyn Fn(&Stream) -> Stream + Send + Sync>,
    calls: Arc<AtomicU64>,
}

impl Realizer {
    pub fn new(label: &str, solve: impl Fn(&Stream) -> Stream + Send + Sync + 'static) -> Self {
        Realizer {
            label: label.into(),
            solve: Arc::new(solve),
            calls: Arc::new(AtomicU64::new(0)),
        }
    }

    /// The horizon-bounded realizer of a problem.
    pub fn of_problem(p: Arc<dyn Problem>) -> Self {
        let label = p.name();
        Realizer::new(label, move |x| p.solve_public(x))
    }

    /// A single-valued solver given by a machine.
    pub fn of_program(m: Program) -> Self {
        let label = m.label();
        Realizer::new(&label, move |x| run(&m, x))
    }

    pub fn identity() -> Self {
        Realizer::new("id", |x| x.clone())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The call is counted now; the answer is computed when first read.
    pub fn call(&self, x: &Stream) -> Stream {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let (solve, x) = (self.solve.clone(), x.clone());
        Stream::lazy(move || solve(&x))
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

/// `U<q,p> = U_q(p)`.
pub fn universal_step(x: &Stream) -> Stream {
    let x = x.clone();
    Stream::lazy(move || {
        let (q, p) = unpair_stream(&x);
        eval_stream(&Name::from(q), &p)
    })
}

/// `<id x f><q,p> = <q, f(p)>`.
pub fn apply_to_data(f: &Realizer, x: &Stream) -> Stream {
    let (f, x) = (f.clone(), x.clone());
    Stream::lazy(move || {
        let (q, p) = unpair_stream(&x);
        pair_stream(&q, &f.call(&p))
    })
}

/// One loop step: the realizer's answer and the next state.
pub fn loop_step(f: &Realizer, q: &Stream) -> (Stream, Stream) {
    let (prog, data) = unpair_stream(q);
    let a = f.call(&data);
    let next = eval_stream(&Name::from(prog), &a);
    (a, next)
}

/// `f * g = <id x f> . U . <id x g>`.
pub fn comp_product(f: &Realizer, g: &Realizer, x: &Stream) -> Stream {
    apply_to_data(f, &universal_step(&apply_to_data(g, x)))
}

/// `f^[0] = id`, `f^[1] = <id x f>`, `f^[n+1] = <id x f> . U . f^[n]`.
pub fn power_n(f: &Realizer, n: usize, x: &Stream) -> Stream {
    match n {
        0 => x.clone(),
        1 => apply_to_data(f, x),
        _ => apply_to_data(f, &universal_step(&power_n(f, n - 1, x))),
    }
}

/// `f^[*]`: the first symbol is the number of rounds, the rest the payload.
pub fn star(f: &Realizer, x: &Stream) -> Stream {
    let (f, x) = (f.clone(), x.clone());
    Stream::deferred(move |fuel| {
        let n = x.get(0, fuel)?;
        Ok(power_n(&f, n as usize, &x.shift(1)))
    })
}

/// `f^omega(p) = <f^[0](p), f^[1](p), ...>`.
pub fn omega(f: &Realizer, x: &Stream) -> Stream {
    let (f, x) = (f.clone(), x.clone());
    tuple_countable(Family::new(move |n| power_n(&f, n, &x)))
}

/// Countable parallelization: component `i` of the output answers
/// component `i` of the input.
pub fn parallelize(f: &Realizer, x: &Stream) -> Stream {
    let (f, x) = (f.clone(), x.clone());
    tuple_countable(Family::new(move |i| f.call(&project(&x, i))))
}

/// States `q_0, q_1, ...` of the loop started at `q0`, produced lazily.
#[derive(Clone)]
pub struct Chain {
    f: Realizer,
    states: Arc<Mutex<Vec<Stream>>>,
    answers: Arc<Mutex<Vec<Stream>>>,
}

impl Chain {
    pub fn new(f: &Realizer, q0: &Stream) -> Self {
        Chain {
            f: f.clone(),
            states: Arc::new(Mutex::new(vec![q0.clone()])),
            answers: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn state(&self, i: usize) -> Stream {
        let mut states = self.states.lock().unwrap();
        let mut answers = self.answers.lock().unwrap();
        while states.len() <= i {
            let (a, next) = loop_step(&self.f, states.last().unwrap());
            answers.push(a);
            states.push(next);
        }
        states[i].clone()
    }

    /// The first `steps + 1` states and the answers between them.
    pub fn run(&self, steps: usize) -> Run {
        self.state(steps);
        Run {
            states: self.states.lock().unwrap()[..=steps].to_vec(),
            answers: self.answers.lock().unwrap()[..steps].to_vec(),
            provenance: vec![self.f.label().to_string(); steps],
        }
    }
}

/// `f^infinity(q0) = <q_0, q_1, ...>` with `q_{i+1}` one answer of the step
/// on `q_i`.
pub fn inverse_limit(f: &Realizer, q0: &Stream) -> Stream {
    let chain = Chain::new(f, q0);
    tuple_countable(Family::new(move |i| chain.state(i)))
}

/// A finite stretch of a loop. `answers[i]` is what the realizer returned on
/// the data of `states[i]`; there may be one more answer than transitions
/// when the last step produced nothing usable.
#[derive(Clone, Default)]
pub struct Run {
    pub states: Vec<Stream>,
    pub answers: Vec<Stream>,
    pub provenance: Vec<String>,
}

impl Run {
    pub fn from_states(states: Vec<Stream>) -> Self {
        Run {
            states,
            ..Run::default()
        }
    }

    pub fn heads(&self, budget: u64) -> Vec<Option<Nat>> {
        self.states.iter().map(|q| q.at(0, budget).ok()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunClass {
    Successful(usize),
    Stalled(usize),
    /// No success among the first `no_success_through` states, and nothing
    /// more could be decided.
    Undetermined {
        no_success_through: usize,
    },
}

impl std::fmt::Display for RunClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunClass::Successful(k) => write!(f, "successful({k})"),
            RunClass::Stalled(k) => write!(f, "stalled({k})"),
            RunClass::Undetermined { no_success_through } => {
                write!(f, "undetermined(no success through {no_success_through})")
            }
        }
    }
}

/// True when the program is an explicit finite graph none of whose
/// entries gives output on `answer`, so the step can never produce a symbol.
pub fn provably_stalled(prog: &Stream, answer: &Stream, budget: u64) -> bool {
    let Some(entries) = prog.program().and_then(|p| p.graph()) else {
        return false;
    };
    let need = entries.iter().map(|e| e.input.len()).max().unwrap_or(0);
    let a = answer.determined_prefix(need, budget);
    if a.len() < need {
        return false;
    }
    entries.iter().all(|e| e.output.is_empty() || !e.input.is_prefix_of(&a))
}

fn stalled_after(run: &Run, k: usize, budget: u64) -> bool {
    let Some(a) = run.answers.get(k) else {
        return false;
    };
    let prog = first(&run.states[k]);
    let next = match run.states.get(k + 1) {
        Some(q) => q.clone(),
        None => eval_stream(&Name::from(prog.clone()), a),
    };
    next.at(0, budget).is_err() && provably_stalled(&prog, a, budget)
}

/// Success, stall or undetermined, read off the heads under `budget`.
pub fn classify_run(run: &Run, budget: u64) -> RunClass {
    for (k, q) in run.states.iter().enumerate() {
        match q.at(0, budget) {
            Ok(0) => return RunClass::Successful(k),
            Ok(_) => {
                if stalled_after(run, k, budget) {
                    return RunClass::Stalled(k);
                }
            }
            Err(_) => return RunClass::Undetermined { no_success_through: k },
        }
    }
    RunClass::Undetermined {
        no_success_through: run.states.len(),
    }
}

/// The outcome of `f^diamond` on one input.
pub struct Diamond {
    pub value: Option<Stream>,
    pub run: Run,
    pub class: RunClass,
}

/// Step until the head is 0, at most `ceiling` steps.
pub fn diamond(f: &Realizer, q0: &Stream, ceiling: usize, budget: u64) -> Diamond {
    let mut run = Run::from_states(vec![q0.clone()]);
    loop {
        let k = run.states.len() - 1;
        let q = run.states[k].clone();
        match q.at(0, budget) {
            Ok(0) => {
                return Diamond {
                    value: Some(q),
                    class: RunClass::Successful(k),
                    run,
                }
            }
            Ok(_) if k < ceiling => {
                let (a, next) = loop_step(f, &q);
                run.answers.push(a);
                run.provenance.push(f.label().to_string());
                if stalled_after(&run, k, budget) {
                    return Diamond {
                        value: None,
                        class: RunClass::Stalled(k),
                        run,
                    };
                }
                run.states.push(next);
            }
            _ => {
                let class = classify_run(&run, budget);
                return Diamond {
                    value: None,
                    class,
                    run,
                };
            }
        }
    }
}

/// `step i head h determined d calls c`, one line per state. `determined`
/// counts known symbols among the first `window`.
pub fn format_trace(run: &Run, window: usize, budget: u64) -> String {
    let mut out = String::new();
    for (i, q) in run.states.iter().enumerate() {
        let head = q.at(0, budget).map_or("?".to_string(), |h| h.to_string());
        let d = q.values(window, budget).iter().filter(|v| v.is_some()).count();
        out += &format!("step {i} head {head} determined {d} calls {i}\n");
    }
    out
}

/// Verdict for each transition of `states`: is there an answer of `problem`
/// on the data of `q_i` that the checker accepts and whose step output
/// agrees with `q_{i+1}` on every index below `depth` determined in both?
pub fn validate_run(states: &[Stream], problem: &dyn Problem, depth: usize, budget: u64) -> Vec<Verdict> {
    states
        .windows(2)
        .enumerate()
        .map(|(i, pair)| validate_step(i, &pair[0], &pair[1], problem, depth, budget))
        .collect()
}

fn validate_step(i: usize, q: &Stream, next: &Stream, problem: &dyn Problem, depth: usize, budget: u64) -> Verdict {
    let (prog, data) = unpair_stream(q);
    let public = Public::of_stream(data.clone());
    let mut pending = None;
    for a in problem.candidates(&data, depth) {
        if problem.check(&public, &a, depth).is_refuted() {
            continue;
        }
        let expected = eval_stream(&Name::from(prog.clone()), &a);
        match agree(&expected, next, depth, budget) {
            Agreement::Equal => return Verdict::Consistent,
            Agreement::Differ(_) => {}
            Agreement::Unknown(j) => pending = Some(j),
        }
    }
    match pending {
        Some(j) => Verdict::Undetermined(format!("step {i}: data index {j} not determined")),
        None => Verdict::Refuted(format!("step {i}: no admissible answer gives the next state")),
    }
}

enum Agreement {
    Equal,
    Differ(usize),
    Unknown(usize),
}

/// Indices of both streams below `depth`. The data part (odd indices) and
/// the head must be determined; other program symbols are compared when both
/// are.
fn agree(a: &Stream, b: &Stream, depth: usize, budget: u64) -> Agreement {
    for n in 0..depth {
        match (a.at(n, budget), b.at(n, budget)) {
            (Ok(x), Ok(y)) if x != y => return Agreement::Differ(n),
            (Ok(_), Ok(_)) => {}
            _ if n == 0 || n % 2 == 1 => return Agreement::Unknown(n),
            _ => {}
        }
    }
    Agreement::Equal
}

pub fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    verdicts.into_iter().fold(Verdict::Consistent, Verdict::and)
}

// ---------------------------------------------------------------------------
// Loop programs

/// `<head :: name of m, data>`.
pub fn loop_state(head: Nat, m: Program, data: &Stream) -> Stream {
    pair_stream(&loop_program(head, m), data)
}

pub fn loop_program(head: Nat, m: Program) -> Stream {
    encode_machine(&m).stream().prepend_dummies(&[head])
}

/// Passes each answer on as the next data; head 1 while `left > 0`, then 0.
pub struct Countdown {
    pub left: usize,
}

pub fn countdown_program(left: usize) -> Stream {
    loop_program(Nat::from(left > 0), Arc::new(Countdown { left }))
}

impl Machine for Countdown {
    fn label(&self) -> String {
        format!("countdown {}", self.left)
    }

    fn apply(&self, a: &Stream) -> Option<Stream> {
        Some(pair_stream(&countdown_program(self.left.saturating_sub(1)), a))
    }
}

/// `a -> <this program, a>` with head 1.
pub struct PassThrough;

pub fn pass_through_program() -> Stream {
    loop_program(1, Arc::new(PassThrough))
}

impl Machine for PassThrough {
    fn label(&self) -> String {
        "pass through".into()
    }

    fn apply(&self, a: &Stream) -> Option<Stream> {
        Some(pair_stream(&pass_through_program(), a))
    }
}

/// Data for seeded loops: the instance posed at `step`, which may depend on
/// the previous answer's first symbol.
pub trait LoopData: Send + Sync {
    fn label(&self) -> String;
    fn instance(&self, seed: u64, step: usize, prev: Nat) -> Instance;
}

/// Each step poses a fresh generated instance of `problem`.
pub struct ProblemLoop(pub Arc<dyn Problem>);

pub fn step_seed(seed: u64, step: usize, prev: Nat) -> u64 {
    mix(mix(seed ^ 0x5151) ^ mix(step as u64 + 1) ^ prev.wrapping_mul(0x2545_F491))
}

impl LoopData for ProblemLoop {
    fn label(&self) -> String {
        self.0.name().into()
    }

    fn instance(&self, seed: u64, step: usize, prev: Nat) -> Instance {
        self.0.generate(step_seed(seed, step, prev))
    }
}

/// The loop program of seeded loops. Heads are 1, or 0 from step `stop` on.
pub struct SeededLoop {
    pub data: Arc<dyn LoopData>,
    pub seed: u64,
    pub step: usize,
    pub stop: Option<usize>,
}

impl SeededLoop {
    fn program(data: &Arc<dyn LoopData>, seed: u64, step: usize, stop: Option<usize>) -> Stream {
        let head = Nat::from(stop.is_none_or(|s| step < s));
        loop_program(
            head,
            Arc::new(SeededLoop {
                data: data.clone(),
                seed,
                step,
                stop,
            }),
        )
    }
}

/// Data posed at `step` once the previous answer's head is known.
pub fn loop_data(data: &Arc<dyn LoopData>, seed: u64, step: usize, prev: &Stream) -> Stream {
    let (data, prev) = (data.clone(), prev.clone());
    Stream::deferred(move |fuel| {
        let b = prev.get(0, fuel)?;
        Ok(data.instance(seed, step, b).public.stream)
    })
}

impl Machine for SeededLoop {
    fn label(&self) -> String {
        format!("seeded {} loop {} step {}", self.data.label(), self.seed, self.step)
    }

    fn apply(&self, a: &Stream) -> Option<Stream> {
        let next = self.step + 1;
        Some(pair_stream(
            &SeededLoop::program(&self.data, self.seed, next, self.stop),
            &loop_data(&self.data, self.seed, next, a),
        ))
    }
}

/// Start state of the seeded loop.
pub fn seeded_loop(data: &Arc<dyn LoopData>, seed: u64, stop: Option<usize>) -> Stream {
    pair_stream(
        &SeededLoop::program(data, seed, 0, stop),
        &data.instance(seed, 0, 0).public.stream,
    )
}

/// The inverse limit of a base problem on seeded loops. The answer is the
/// tuple of states; the checker validates component 0 and the first `steps`
/// transitions.
pub struct LoopProblem {
    pub name: &'static str,
    pub base: Arc<dyn Problem>,
    pub data: Arc<dyn LoopData>,
    pub steps: usize,
    /// Per-index budget when comparing states.
    pub budget: u64,
}

impl LoopProblem {
    pub fn over(name: &'static str, base: Arc<dyn Problem>, steps: usize) -> Self {
        LoopProblem {
            name,
            data: Arc::new(ProblemLoop(base.clone())),
            base,
            steps,
            budget: 200_000,
        }
    }

    pub fn realizer(&self) -> Realizer {
        Realizer::of_problem(self.base.clone())
    }

    /// Check an explicit list of states.
    pub fn check_states(&self, q0: &Stream, states: &[Stream], depth: usize) -> Verdict {
        let start = match agree(q0, &states[0], depth, self.budget) {
            Agreement::Equal => Verdict::Consistent,
            Agreement::Differ(n) => return Verdict::Refuted(format!("component 0 differs from the input at {n}")),
            Agreement::Unknown(n) => Verdict::Undetermined(format!("component 0 index {n} not determined")),
        };
        combine(std::iter::once(start).chain(validate_run(states, self.base.as_ref(), depth, self.budget)))
    }
}

impl Problem for LoopProblem {
    fn name(&self) -> &'static str {
        self.name
    }

    fn generate(&self, seed: u64) -> Instance {
        Instance {
            problem: self.name.into(),
            seed,
            public: Public {
                stream: seeded_loop(&self.data, seed, None),
                description: format!("loop {} seed {seed}", self.data.label()),
                commits: Vec::new(),
            },
            witness: crate::problems::Witness::None,
        }
    }

    fn check(&self, public: &Public, output: &Stream, depth: usize) -> Verdict {
        let states: Vec<Stream> = (0..=self.steps).map(|i| project(output, i)).collect();
        self.check_states(&public.stream, &states, depth)
    }

    fn solve(&self, instance: &Instance) -> Stream {
        self.solve_public(&instance.public.stream)
    }

    fn solve_public(&self, public: &Stream) -> Stream {
        inverse_limit(&self.realizer(), public)
    }
}

// ---------------------------------------------------------------------------
// Lifting reductions to inverse limits

/// Machines witnessing `f <=_W g`: `H<p, g(K(p))>` solves `f(p)`.
#[derive(Clone)]
pub struct WeakWitness {
    pub k: Program,
    pub h: Program,
}

/// `<R, <<q,p>,r>> -> <R(x), K(second x)>` with `x = U_q(H<p,r>)`.
struct LiftFunctional {
    base: WeakWitness,
}

impl Machine for LiftFunctional {
    fn label(&self) -> String {
        "lifted step".into()
    }

    fn apply(&self, input: &Stream) -> Option<Stream> {
        let (r_name, rest) = unpair_stream(input);
        let (qp, r) = unpair_stream(&rest);
        let (q, p) = unpair_stream(&qp);
        let x = eval_stream(&Name::from(q), &run(&self.base.h, &pair_stream(&p, &r)));
        Some(pair_stream(
            &eval_stream(&Name::from(r_name), &x),
            &run(&self.base.k, &second(&x)),
        ))
    }
}

/// `<q,p> -> <K_1<q,p>, K(p)>`.
struct LiftedStart {
    r: InjectiveRecursion,
    k: Program,
}

impl Machine for LiftedStart {
    fn label(&self) -> String {
        "lifted start".into()
    }

    fn apply(&self, x: &Stream) -> Option<Stream> {
        let k1 = self.r.r.apply(&Name::from(x.clone())).into_stream();
        Some(pair_stream(&k1, &run(&self.k, &second(x))))
    }
}

/// `<<Q_0,P_0>, <Q_1,P_1>, ...> -> <H_1(Q_0), H_1(Q_1), ...>`.
pub struct ComponentExtract;

impl Machine for ComponentExtract {
    fn label(&self) -> String {
        "component-wise extraction".into()
    }

    fn apply(&self, t: &Stream) -> Option<Stream> {
        let t = t.clone();
        let l = block_extractor();
        Some(tuple_countable(Family::new(move |i| run(&l, &first(&project(&t, i))))))
    }
}

/// A strong witness for `f^infinity <=_sW g^infinity`.
pub struct LiftedWitness {
    pub k: Program,
    pub h: Program,
    pub recursion: Arc<InjectiveRecursion>,
}

impl LiftedWitness {
    /// `K_1`, whose block extractor is `H_1`.
    pub fn k1(&self, x: &Stream) -> Stream {
        self.recursion.r.apply(&Name::from(x.clone())).into_stream()
    }
}

pub fn lift_reduction_to_inverse_limit(base: &WeakWitness) -> LiftedWitness {
    let ir = injective_recursion(Arc::new(LiftFunctional { base: base.clone() }));
    let start = LiftedStart {
        r: InjectiveRecursion {
            r: ir.r.clone(),
            r_name: ir.r_name.clone(),
            t: ir.t.clone(),
        },
        k: base.k.clone(),
    };
    LiftedWitness {
        k: Arc::new(start),
        h: Arc::new(ComponentExtract),
        recursion: Arc::new(ir),
    }
}

// ---------------------------------------------------------------------------
// Single-valued problems: inverse limit and omega

/// `F^infinity(p)` recovered from `F^omega(p)` as `<id x U x U x ...>`.
pub fn sv_infty_via_omega(f: &Realizer, q0: &Stream) -> Stream {
    let om = omega(f, q0);
    tuple_countable(Family::new(move |i| {
        let c = project(&om, i);
        if i == 0 {
            c
        } else {
            universal_step(&c)
        }
    }))
}

/// `<R, <<st, q>, r>> -> <R(<<q,r>, q'>), p'>` where `<q',p'> = U_q(r)`.
struct OmegaFunctional;

impl Machine for OmegaFunctional {
    fn label(&self) -> String {
        "omega step".into()
    }

    fn apply(&self, input: &Stream) -> Option<Stream> {
        let (r_name, rest) = unpair_stream(input);
        let (stq, r) = unpair_stream(&rest);
        let q = second(&stq);
        let y = eval_stream(&Name::from(q.clone()), &r);
        let (q2, p2) = unpair_stream(&y);
        let key = pair_stream(&pair_stream(&q, &r), &q2);
        Some(pair_stream(&eval_stream(&Name::from(r_name), &key), &p2))
    }
}

/// Witness for `F^omega <=_sW F^infinity`: `K_0` maps the input to the start
/// of a loop whose `n`-th program part embeds `F^[n]` of the input.
pub struct OmegaWitness {
    pub recursion: InjectiveRecursion,
}

pub fn sv_omega_to_infty() -> OmegaWitness {
    OmegaWitness {
        recursion: injective_recursion(Arc::new(OmegaFunctional)),
    }
}

impl OmegaWitness {
    /// `K_{<s,t>}(q)`.
    pub fn k(&self, st: &Stream, q: &Stream) -> Stream {
        self.recursion.r.apply(&Name::from(pair_stream(st, q))).into_stream()
    }

    /// `K_0<q,p> = <K_{<0,0>}(q), p>`.
    pub fn k0(&self, x: &Stream) -> Stream {
        let zero = pair_stream(&Stream::zeros(), &Stream::zeros());
        pair_stream(&self.k(&zero, &first(x)), &second(x))
    }

    /// `H<<P_0,Q_0>, <P_1,Q_1>, ...> = <<L_0(P_0), Q_0>, L(P_1), L(P_2), ...>`.
    pub fn h(&self, t: &Stream) -> Stream {
        let t = t.clone();
        let l = block_extractor();
        tuple_countable(Family::new(move |i| {
            let (p, q) = unpair_stream(&project(&t, i));
            let key = run(&l, &p);
            if i == 0 {
                pair_stream(&second(&key), &q)
            } else {
                first(&key)
            }
        }))
    }
}

// ---------------------------------------------------------------------------
// Schedulers realized by one inverse limit

/// A loop program whose raw symbols embed a record: the name of `x` under
/// `step` is the injection image of `smn(step)` at `x`, so the block
/// extractor recovers `x` and the program computes `step<x, answer>`. Its
/// first symbol opens a block, so the head is 1.
fn record_program(step: &Program, x: &Stream) -> Stream {
    let inst: Program = Arc::new(InjectionInstance {
        s: smn(step.clone()).name(),
    });
    run(&inst, x)
}

fn read_record(state: &Stream) -> Stream {
    run(&block_extractor(), &first(state))
}

/// Runs loop `i` of a countable family one step at big step `<i,n>`.
struct Scheduler {
    this: Weak<Scheduler>,
}

impl Scheduler {
    fn program(&self) -> Program {
        self.this.upgrade().expect("scheduler dropped")
    }

    /// Record `<k, <q^0, q^1, ...>>` and the state with its data part.
    fn state(&self, k: usize, loops: &Stream) -> Stream {
        let record = pair_stream(&value_stream(k as Nat), loops);
        let (i, _) = cantor_unpair(k as u64);
        let data = second(&project(loops, i as usize));
        pair_stream(&record_program(&self.program(), &record), &data)
    }
}

impl Machine for Scheduler {
    fn label(&self) -> String {
        "parallel scheduler".into()
    }

    fn apply(&self, input: &Stream) -> Option<Stream> {
        let (record, answer) = unpair_stream(input);
        let this = self.this.clone();
        Some(Stream::deferred(move |fuel| {
            let me = this.upgrade().expect("scheduler dropped");
            let (k_stream, loops) = unpair_stream(&record);
            let k = k_stream.get(0, fuel)? as usize;
            let i = cantor_unpair(k as u64).0 as usize;
            let advanced = {
                let (loops, answer) = (loops.clone(), answer.clone());
                Family::new(move |j| {
                    let q = project(&loops, j);
                    if j == i {
                        eval_stream(&Name::from(first(&q)), &answer)
                    } else {
                        q
                    }
                })
            };
            Ok(me.state(k + 1, &tuple_countable(advanced)))
        }))
    }
}

/// `f-hat^infinity <=_sW f^infinity`: `K` starts the scheduler on a tuple of
/// loop starts, `H` reads `q^i_n` from the record at big step `<i,n>`.
pub struct ParallelWitness {
    scheduler: Arc<Scheduler>,
}

pub fn parallel_infty() -> ParallelWitness {
    ParallelWitness {
        scheduler: Arc::new_cyclic(|w| Scheduler { this: w.clone() }),
    }
}

impl ParallelWitness {
    pub fn k(&self, starts: &Stream) -> Stream {
        self.scheduler.state(0, starts)
    }

    pub fn h(&self, big_run: &Stream) -> Stream {
        let run = big_run.clone();
        tuple_countable(Family::new(move |i| {
            let run = run.clone();
            tuple_countable(Family::new(move |n| {
                let k = cantor_pair(i as u64, n as u64) as usize;
                project(&second(&read_record(&project(&run, k))), i)
            }))
        }))
    }
}

/// `f^infinity <=_sW f-hat^infinity` the easy way: repeat the start, keep
/// component 0.
pub fn infty_into_parallel(q0: &Stream) -> Stream {
    let q0 = q0.clone();
    tuple_countable(Family::new(move |_| q0.clone()))
}

/// Follows one loop until its head is 0, then pads with the designated
/// point. The record is `<flag, q>`: flag 0 while running on `q`, 1 once
/// `q` is the successful state.
struct DiamondScheduler {
    this: Weak<DiamondScheduler>,
    point: Stream,
}

impl DiamondScheduler {
    fn state(&self, done: bool, q: &Stream, budget_fuel: &mut Fuel) -> Result<Stream, OutOfFuel> {
        let done = done || q.get(0, budget_fuel)? == 0;
        let record = pair_stream(&value_stream(Nat::from(done)), q);
        let me: Program = self.this.upgrade().expect("scheduler dropped");
        let data = if done { self.point.clone() } else { second(q) };
        Ok(pair_stream(&record_program(&me, &record), &data))
    }
}

impl Machine for DiamondScheduler {
    fn label(&self) -> String {
        "diamond scheduler".into()
    }

    fn apply(&self, input: &Stream) -> Option<Stream> {
        let (record, answer) = unpair_stream(input);
        let this = self.this.clone();
        Some(Stream::deferred(move |fuel| {
            let me = this.upgrade().expect("scheduler dropped");
            let (flag, q) = unpair_stream(&record);
            if flag.get(0, fuel)? == 1 {
                return me.state(true, &q, fuel);
            }
            let next = eval_stream(&Name::from(first(&q)), &answer);
            me.state(false, &next, fuel)
        }))
    }
}

/// `f^diamond <=_sW f^infinity` for `f` pointed by `point`.
pub struct DiamondWitness {
    scheduler: Arc<DiamondScheduler>,
}

pub fn diamond_to_infty(point: Option<Stream>) -> Result<DiamondWitness, String> {
    let point = point.ok_or("diamond through the inverse limit needs a designated point")?;
    Ok(DiamondWitness {
        scheduler: Arc::new_cyclic(|w| DiamondScheduler { this: w.clone(), point }),
    })
}

impl DiamondWitness {
    pub fn k(&self, q0: &Stream) -> Stream {
        let sched = self.scheduler.clone();
        let q0 = q0.clone();
        Stream::deferred(move |fuel| sched.state(false, &q0, fuel))
    }

    /// The successful state from the first record whose flag is set; reads
    /// at most `ceiling` components.
    pub fn h(&self, big_run: &Stream, ceiling: usize) -> Stream {
        let run = big_run.clone();
        Stream::deferred(move |fuel| {
            for k in 0..=ceiling {
                let (flag, q) = unpair_stream(&read_record(&project(&run, k)));
                if flag.get(0, fuel)? == 1 {
                    return Ok(q);
                }
            }
            fuel.exhaust();
            Err(OutOfFuel)
        })
    }
}

/// Prefix of `s` under `budget`, for traces and tests.
pub fn show(s: &Stream, k: usize, budget: u64) -> Word {
    s.determined_prefix(k, budget)
}
