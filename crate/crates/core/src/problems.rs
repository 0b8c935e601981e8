//! Represented spaces and standard problems as generator/checker pairs.
//!
//! An [`Instance`] has a public part, which is all a realizer or checker may
//! read, and a hidden witness known to the generator. Oracle realizers read
//! the witness; this is how non-computable problems get executable
//! realizers. Checkers only read the public part.
//!
//! Discrete answers are written as a stream whose first symbol is the value
//! and whose remaining symbols are 0. Negative information is a stream where
//! 0 is padding and `n + 1` means "the point (or cylinder) with code `n` is
//! excluded".

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::machine::library::mix;
use crate::streams::{parse_stream_spec, project, tuple_countable, Family, Nat, Stream, Word};

/// Positions before which generated negative information places all of its
/// exclusions. Realizers for computed data scan this far.
pub const EXCLUSION_HORIZON: usize = 16;

/// Generated `lim_N` sequences make all their changes before this position.
pub const CHANGE_HORIZON: usize = 20;

/// How far horizon-bounded realizers read.
pub const SCAN_HORIZON: usize = 64;

/// Per-index budget used by checkers and scanners.
pub const READ_BUDGET: u64 = 4_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Consistent,
    Refuted(String),
    Undetermined(String),
}

impl Verdict {
    pub fn is_refuted(&self) -> bool {
        matches!(self, Verdict::Refuted(_))
    }

    pub fn keyword(&self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Refuted(_) => "refuted",
            Verdict::Undetermined(_) => "undetermined",
        }
    }

    pub fn detail(&self) -> Option<&str> {
        match self {
            Verdict::Consistent => None,
            Verdict::Refuted(d) | Verdict::Undetermined(d) => Some(d),
        }
    }

    /// Combine verdicts on parts of one answer: any refutation wins, then
    /// any undetermined part.
    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (r @ Verdict::Refuted(_), _) | (_, r @ Verdict::Refuted(_)) => r,
            (u @ Verdict::Undetermined(_), _) | (_, u @ Verdict::Undetermined(_)) => u,
            _ => Verdict::Consistent,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.detail() {
            Some(d) => write!(f, "{} {}", self.keyword(), d),
            None => write!(f, "{}", self.keyword()),
        }
    }
}

/// `commit k v s`: coordinate `k` holds `v` from stage `s` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Commit {
    pub coord: usize,
    pub value: Nat,
    pub stage: usize,
}

/// What a realizer and a checker may see.
#[derive(Clone, Debug)]
pub struct Public {
    pub stream: Stream,
    /// Finite description used by instance files.
    pub description: String,
    pub commits: Vec<Commit>,
}

impl Public {
    pub fn of_stream(stream: Stream) -> Self {
        Public {
            stream,
            description: String::new(),
            commits: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Witness {
    None,
    /// A valid discrete answer.
    Value(Nat),
    AllZero,
    FirstNonzero(usize),
    /// A valid answer given as a finite word followed by zeros.
    Word(Vec<Nat>),
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::None => write!(f, "none"),
            Witness::Value(v) => write!(f, "value {v}"),
            Witness::AllZero => write!(f, "zero"),
            Witness::FirstNonzero(k) => write!(f, "nonzero {k}"),
            Witness::Word(w) => write!(f, "word {}", Word(w.clone())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub problem: String,
    pub seed: u64,
    pub public: Public,
    pub witness: Witness,
}

pub trait Problem: Send + Sync {
    fn name(&self) -> &'static str;

    fn generate(&self, seed: u64) -> Instance;

    /// Judge the first `depth` symbols of `output` against the public part.
    fn check(&self, public: &Public, output: &Stream, depth: usize) -> Verdict;

    /// Oracle realizer: may read the hidden witness.
    fn solve(&self, instance: &Instance) -> Stream;

    /// Realizer for data computed on the fly, such as the inputs of later
    /// loop steps. Reads the input up to [`SCAN_HORIZON`], which is enough
    /// for every instance produced by this crate's generators.
    fn solve_public(&self, public: &Stream) -> Stream;

    /// Answers worth trying when a run must be matched against some valid
    /// step.
    fn candidates(&self, public: &Stream, _depth: usize) -> Vec<Stream> {
        vec![self.solve_public(public)]
    }
}

pub fn value_stream(v: Nat) -> Stream {
    Stream::word_then_zeros(&[v])
}

fn rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed ^ salt.wrapping_mul(0x9E37_79B9)))
}

fn read(s: &Stream, depth: usize) -> Result<Word, usize> {
    let w = s.determined_prefix(depth, READ_BUDGET);
    if w.len() < depth {
        Err(w.len())
    } else {
        Ok(w)
    }
}

fn undetermined_at(i: usize) -> Verdict {
    Verdict::Undetermined(format!("index {i} not determined"))
}

/// Value of a discrete answer, or a verdict explaining why there is none.
fn answer_value(output: &Stream) -> Result<Nat, Verdict> {
    output.at(0, READ_BUDGET).map_err(|_| undetermined_at(0))
}

/// Exclusion symbols seen in the first `depth` symbols; reading stops at the
/// first undetermined index.
fn exclusions(public: &Stream, depth: usize) -> (Vec<Nat>, bool) {
    let w = public.determined_prefix(depth, READ_BUDGET);
    let complete = w.len() == depth;
    (w.0.into_iter().filter(|&s| s > 0).map(|s| s - 1).collect(), complete)
}

fn describe(w: &[Nat]) -> String {
    let mut parts: Vec<String> = w.iter().map(|s| s.to_string()).collect();
    parts.push("zeros".into());
    parts.join(" ")
}

/// Negative information placing each excluded code at its own position.
fn negative_info(placed: &[(usize, Nat)]) -> Vec<Nat> {
    let len = placed.iter().map(|&(i, _)| i + 1).max().unwrap_or(0);
    let mut w = vec![0; len];
    for &(i, code) in placed {
        w[i] = code + 1;
    }
    w
}

fn from_word(problem: &str, seed: u64, w: Vec<Nat>, witness: Witness) -> Instance {
    Instance {
        problem: problem.into(),
        seed,
        public: Public {
            stream: Stream::word_then_zeros(&w),
            description: describe(&w),
            commits: Vec::new(),
        },
        witness,
    }
}

/// The identity on Baire space.
pub struct IdProblem;

impl Problem for IdProblem {
    fn name(&self) -> &'static str {
        "id"
    }

    fn generate(&self, seed: u64) -> Instance {
        let mut r = rng(seed, 1);
        let w: Vec<Nat> = (0..24).map(|_| r.gen_range(0..10)).collect();
        from_word("id", seed, w, Witness::None)
    }

    fn check(&self, public: &Public, output: &Stream, depth: usize) -> Verdict {
        for i in 0..depth {
            let (a, b) = (public.stream.at(i, READ_BUDGET), output.at(i, READ_BUDGET));
            match (a, b) {
                (Ok(a), Ok(b)) if a != b => return Verdict::Refuted(format!("index {i}: expected {a}, got {b}")),
                (Ok(_), Ok(_)) => {}
                _ => return undetermined_at(i),
            }
        }
        Verdict::Consistent
    }

    fn solve(&self, instance: &Instance) -> Stream {
        instance.public.stream.clone()
    }

    fn solve_public(&self, public: &Stream) -> Stream {
        public.clone()
    }
}

/// The characteristic function of the zero sequence.
pub struct Lpo;

impl Problem for Lpo {
    fn name(&self) -> &'static str {
        "lpo"
    }

    fn generate(&self, seed: u64) -> Instance {
        let mut r = rng(seed, 2);
        if r.gen_ratio(1, 5) {
            return from_word("lpo", seed, vec![], Witness::AllZero);
        }
        let k = r.gen_range(0..24);
        let mut w = vec![0; k];
        w.push(r.gen_range(1..10));
        w.extend((0..4).map(|_| r.gen_range(0..10)));
        from_word("lpo", seed, w, Witness::FirstNonzero(k))
    }

    fn check(&self, public: &Public, output: &Stream, depth: usize) -> Verdict {
        let v = match answer_value(output) {
            Ok(v) => v,
            Err(e) => return e,
        };
        if v > 1 {
            return Verdict::Refuted(format!("value {v} is not 0 or 1"));
        }
        match sierpinski_value(&public.stream, depth) {
            SierpinskiValue::NonzeroAt(k) if v == 1 => Verdict::Refuted(format!("value 1 but input nonzero at {k}")),
            SierpinskiValue::NonzeroAt(_) => Verdict::Consistent,
            SierpinskiValue::ZeroSoFar if v == 1 => Verdict::Consistent,
            SierpinskiValue::ZeroSoFar => Verdict::Undetermined(format!("value 0 but input zero through {depth}")),
            SierpinskiValue::UndeterminedAt(i) => undetermined_at(i),
        }
    }

    fn solve(&self, instance: &Instance) -> Stream {
        match instance.witness {
            Witness::AllZero => value_stream(1),
            _ => value_stream(0),
        }
    }

    fn solve_public(&self, public: &Stream) -> Stream {
        match sierpinski_value(public, SCAN_HORIZON) {
            SierpinskiValue::NonzeroAt(_) => value_stream(0),
            _ => value_stream(1),
        }
    }

    fn candidates(&self, _: &Stream, _: usize) -> Vec<Stream> {
        vec![value_stream(0), value_stream(1)]
    }
}

/// Choice on {0, 1}, also known as LLPO. With `always_exclude` the generator
/// excludes one point in every instance, so the valid answer is unique.
pub struct C2 {
    pub always_exclude: bool,
}

impl Problem for C2 {
    fn name(&self) -> &'static str {
        if self.always_exclude {
            "c2-unique"
        } else {
            "c2"
        }
    }

    fn generate(&self, seed: u64) -> Instance {
        let mut r = rng(seed, 3);
        let choice = r.gen_range(0..2);
        if !self.always_exclude && r.gen_ratio(1, 3) {
            return from_word(self.name(), seed, vec![], Witness::Value(choice));
        }
        let pos = r.gen_range(0..EXCLUSION_HORIZON);
        let w = negative_info(&[(pos, 1 - choice)]);
        from_word(self.name(), seed, w, Witness::Value(choice))
    }

    fn check(&self, public: &Public, output: &Stream, depth: usize) -> Verdict {
        let v = match answer_value(output) {
            Ok(v) => v,
            Err(e) => return e,
        };
        if v > 1 {
            return Verdict::Refuted(format!("value {v} is not 0 or 1"));
        }
        let (ex, complete) = exclusions(&public.stream, depth);
        if ex.contains(&v) {
            Verdict::Refuted(format!("point {v} is excluded"))
        } else if ex.contains(&0) && ex.contains(&1) {
            Verdict::Undetermined("both points excluded: not an instance".into())
        } else if complete {
            Verdict::Consistent
        } else {
            undetermined_at(depth.min(public.stream.determined_prefix(depth, READ_BUDGET).len()))
        }
    }

    fn solve(&self, instance: &Instance) -> Stream {
        match instance.witness {
            Witness::Value(v) => value_stream(v),
            _ => self.solve_public(&instance.public.stream),
        }
    }

    fn solve_public(&self, public: &Stream) -> Stream {
        let (ex, _) = exclusions(public, SCAN_HORIZON);
        value_stream(if ex.contains(&0) { 1 } else { 0 })
    }

    fn candidates(&self, _: &Stream, _: usize) -> Vec<Stream> {
        vec![value_stream(0), value_stream(1)]
    }
}

/// Choice on the naturals.
pub struct Cn;

impl Problem for Cn {
    fn name(&self) -> &'static str {
        "cn"
    }

    fn generate(&self, seed: u64) -> Instance {
        let mut r = rng(seed, 4);
        let choice = r.gen_range(0..8);
        let mut placed = Vec::new();
        let mut used = Vec::new();
        for _ in 0..r.gen_range(0..6) {
            let code = r.gen_range(0..10);
            let pos = r.gen_range(0..EXCLUSION_HORIZON + 8);
            if code != choice && !used.contains(&pos) {
                used.push(pos);
                placed.push((pos, code));
            }
        }
        from_word("cn", seed, negative_info(&placed), Witness::Value(choice))
    }

    fn check(&self, public: &Public, output: &Stream, depth: usize) -> Verdict {
        let v = match answer_value(output) {
            Ok(v) => v,
            Err(e) => return e,
        };
        let (ex, complete) = exclusions(&public.stream, depth);
        if ex.contains(&v) {
            Verdict::Refuted(format!("{v} is excluded"))
        } else if complete {
            Verdict::Consistent
        } else {
            Verdict::Undetermined("input not determined to depth".into())
        }
    }

    fn solve(&self, instance: &Instance) -> Stream {
        match instance.witness {
            Witness::Value(v) => value_stream(v),
            _ => self.solve_public(&instance.public.stream),
        }
    }

    fn solve_public(&self, public: &Stream) -> Stream {
        let (ex, _) = exclusions(public, SCAN_HORIZON);
        value_stream((0..).find(|n| !ex.contains(n)).unwrap())
    }

    fn candidates(&self, public: &Stream, depth: usize) -> Vec<Stream> {
        let (ex, _) = exclusions(public, depth);
        let top = ex.iter().max().map_or(1, |m| m + 2);
        (0..top).map(value_stream).collect()
    }
}

/// Limit of a sequence of naturals with finitely many changes. The checker
/// uses the committed value when the instance carries one, and otherwise the
/// class contract that every change happens before [`CHANGE_HORIZON`].
pub struct LimN;

/// Seeded change schedule: at most `max_changes` changes, all before
/// [`CHANGE_HORIZON`]. Returns `(positions, values)`, with `values[0]` the
/// starting value.
pub fn change_schedule(r: &mut ChaCha8Rng, max_changes: usize) -> (Vec<usize>, Vec<Nat>) {
    let changes = r.gen_range(0..=max_changes);
    let mut pos: Vec<usize> = (0..changes).map(|_| r.gen_range(1..CHANGE_HORIZON)).collect();
    pos.sort_unstable();
    pos.dedup();
    let mut vals = vec![r.gen_range(0..10)];
    for _ in &pos {
        let prev = *vals.last().unwrap();
        vals.push((prev + r.gen_range(1..10)) % 10);
    }
    (pos, vals)
}

/// The sequence that starts at `vals[0]` and switches to `vals[j + 1]` at
/// `pos[j]`.
pub fn step_sequence(pos: &[usize], vals: &[Nat]) -> Vec<Nat> {
    let end = pos.last().map_or(1, |&p| p + 1);
    (0..end)
        .map(|n| vals[pos.iter().filter(|&&p| p <= n).count()])
        .collect()
}

/// The `lim_N` instance given by a change schedule, with its limit
/// committed from the last change on.
pub fn lim_n_instance(seed: u64, pos: &[usize], vals: &[Nat]) -> Instance {
    let w = step_sequence(pos, vals);
    let limit = *vals.last().unwrap();
    let mut inst = from_word("lim-n", seed, vec![], Witness::Value(limit));
    inst.public.stream = Stream::word_then_cycle(&w, &[limit]);
    let mut desc: Vec<String> = w.iter().map(|s| s.to_string()).collect();
    desc.push(format!("cycle {limit}"));
    inst.public.description = desc.join(" ");
    inst.public.commits.push(Commit {
        coord: 0,
        value: limit,
        stage: pos.last().copied().unwrap_or(0),
    });
    inst
}

impl Problem for LimN {
    fn name(&self) -> &'static str {
        "lim-n"
    }

    fn generate(&self, seed: u64) -> Instance {
        let mut r = rng(seed, 5);
        let (pos, vals) = change_schedule(&mut r, 3);
        lim_n_instance(seed, &pos, &vals)
    }

    fn check(&self, public: &Public, output: &Stream, depth: usize) -> Verdict {
        let v = match answer_value(output) {
            Ok(v) => v,
            Err(e) => return e,
        };
        let committed = match public.commits.iter().find(|c| c.coord == 0) {
            Some(c) => Some(c.value),
            None if depth > CHANGE_HORIZON => public.stream.at(CHANGE_HORIZON, READ_BUDGET).ok(),
            None => None,
        };
        match committed {
            Some(c) if c != v => Verdict::Refuted(format!("limit is {c}, got {v}")),
            Some(_) => Verdict::Consistent,
            None => Verdict::Undetermined("no committed value within depth".into()),
        }
    }

    fn solve(&self, instance: &Instance) -> Stream {
        match instance.witness {
            Witness::Value(v) => value_stream(v),
            _ => self.solve_public(&instance.public.stream),
        }
    }

    fn solve_public(&self, public: &Stream) -> Stream {
        let v = public.at(SCAN_HORIZON, READ_BUDGET).unwrap_or(0);
        value_stream(v)
    }

    fn candidates(&self, public: &Stream, depth: usize) -> Vec<Stream> {
        let mut vals: Vec<Nat> = public.determined_prefix(depth.max(CHANGE_HORIZON + 1), READ_BUDGET).0;
        vals.sort_unstable();
        vals.dedup();
        vals.into_iter().map(value_stream).collect()
    }
}

/// Limit on Baire space. Instance `n`-th point: coordinate `k` is noise
/// before its commit stage and the committed value after; coordinates
/// without a commit are 0.
pub struct Lim;

pub const LIM_DIMS: usize = 4;

pub fn lim_sequence(noise: u64, commits: &[Commit]) -> Stream {
    let commits = commits.to_vec();
    tuple_countable(Family::new(move |n| {
        let commits = commits.clone();
        Stream::from_fn(move |k| match commits.iter().find(|c| c.coord == k) {
            Some(c) if n >= c.stage => c.value,
            Some(_) => mix(noise ^ mix((n as u64) << 20 | k as u64)) % 10,
            None => 0,
        })
    }))
}

impl Problem for Lim {
    fn name(&self) -> &'static str {
        "lim"
    }

    fn generate(&self, seed: u64) -> Instance {
        let mut r = rng(seed, 6);
        let commits: Vec<Commit> = (0..LIM_DIMS)
            .map(|k| Commit {
                coord: k,
                value: r.gen_range(0..10),
                stage: r.gen_range(0..12),
            })
            .collect();
        let limit: Vec<Nat> = commits.iter().map(|c| c.value).collect();
        Instance {
            problem: "lim".into(),
            seed,
            public: Public {
                stream: lim_sequence(seed, &commits),
                description: format!("lim noise {seed}"),
                commits,
            },
            witness: Witness::Word(limit),
        }
    }

    fn check(&self, public: &Public, output: &Stream, depth: usize) -> Verdict {
        let mut verdict = Verdict::Consistent;
        for c in public.commits.iter().filter(|c| c.coord < depth) {
            match output.at(c.coord, READ_BUDGET) {
                Ok(v) if v != c.value => {
                    return Verdict::Refuted(format!("coordinate {} committed to {}, got {v}", c.coord, c.value))
                }
                Ok(_) => {}
                Err(_) => verdict = undetermined_at(c.coord),
            }
        }
        if public.commits.is_empty() {
            return Verdict::Undetermined("no committed coordinates".into());
        }
        verdict
    }

    fn solve(&self, instance: &Instance) -> Stream {
        match &instance.witness {
            Witness::Word(w) => Stream::word_then_zeros(w),
            _ => self.solve_public(&instance.public.stream),
        }
    }

    fn solve_public(&self, public: &Stream) -> Stream {
        project(public, SCAN_HORIZON)
    }
}

/// Binary word with code `c`: the binary numeral of `c + 1` without its
/// leading 1.
pub fn cylinder_word(code: Nat) -> Vec<Nat> {
    let x = code + 1;
    let bits = 64 - x.leading_zeros() as usize;
    (0..bits - 1).rev().map(|i| (x >> i) & 1).collect()
}

pub fn cylinder_code(w: &[Nat]) -> Nat {
    w.iter().fold(1, |acc, &b| acc * 2 + b) - 1
}

/// Choice on Cantor space: negative information excluding cylinders.
pub struct CantorChoice;

impl Problem for CantorChoice {
    fn name(&self) -> &'static str {
        "c2n"
    }

    fn generate(&self, seed: u64) -> Instance {
        let mut r = rng(seed, 7);
        let path: Vec<Nat> = (0..10).map(|_| r.gen_range(0..2)).collect();
        let mut placed = Vec::new();
        for _ in 0..r.gen_range(0..7) {
            let len = r.gen_range(1..7);
            let mut w: Vec<Nat> = (0..len).map(|_| r.gen_range(0..2)).collect();
            if w[..] == path[..len] {
                w[len - 1] = 1 - w[len - 1];
            }
            let pos = r.gen_range(0..EXCLUSION_HORIZON + 8);
            if placed.iter().all(|&(p, _)| p != pos) {
                placed.push((pos, cylinder_code(&w)));
            }
        }
        from_word("c2n", seed, negative_info(&placed), Witness::Word(path))
    }

    fn check(&self, public: &Public, output: &Stream, depth: usize) -> Verdict {
        let out = match read(output, depth) {
            Ok(w) => w,
            Err(i) => return undetermined_at(i),
        };
        if let Some(i) = out.0.iter().position(|&b| b > 1) {
            return Verdict::Refuted(format!("index {i} is not a bit"));
        }
        let (ex, complete) = exclusions(&public.stream, depth);
        if ex.contains(&0) {
            return Verdict::Undetermined("the empty cylinder is excluded: not an instance".into());
        }
        for code in ex {
            let w = cylinder_word(code);
            if w.len() <= depth && out.0[..w.len()] == w[..] {
                return Verdict::Refuted(format!("path enters excluded cylinder {}", Word(w)));
            }
        }
        if complete {
            Verdict::Consistent
        } else {
            Verdict::Undetermined("input not determined to depth".into())
        }
    }

    fn solve(&self, instance: &Instance) -> Stream {
        match &instance.witness {
            Witness::Word(w) => Stream::word_then_zeros(w),
            _ => self.solve_public(&instance.public.stream),
        }
    }

    fn solve_public(&self, public: &Stream) -> Stream {
        let (ex, _) = exclusions(public, SCAN_HORIZON);
        let words: Vec<Vec<Nat>> = ex.into_iter().map(cylinder_word).collect();
        let depth = words.iter().map(|w| w.len()).max().unwrap_or(0);
        let blocked = |p: &[Nat]| words.iter().any(|w| w.len() <= p.len() && p[..w.len()] == w[..]);
        // leftmost path of length `depth` avoiding every excluded cylinder
        fn dfs(p: &mut Vec<Nat>, depth: usize, blocked: &dyn Fn(&[Nat]) -> bool) -> bool {
            if blocked(p) {
                return false;
            }
            if p.len() == depth {
                return true;
            }
            for b in 0..2 {
                p.push(b);
                if dfs(p, depth, blocked) {
                    return true;
                }
                p.pop();
            }
            false
        }
        let mut p = Vec::new();
        if !dfs(&mut p, depth, &blocked) {
            p.clear();
        }
        Stream::word_then_zeros(&p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SierpinskiValue {
    ZeroSoFar,
    NonzeroAt(usize),
    UndeterminedAt(usize),
}

/// Scan `p` up to `depth` for its first nonzero symbol.
pub fn sierpinski_value(p: &Stream, depth: usize) -> SierpinskiValue {
    for i in 0..depth {
        match p.at(i, READ_BUDGET) {
            Ok(0) => {}
            Ok(_) => return SierpinskiValue::NonzeroAt(i),
            Err(_) => return SierpinskiValue::UndeterminedAt(i),
        }
    }
    SierpinskiValue::ZeroSoFar
}

/// Look a problem up by name.
pub fn problem_by_name(name: &str) -> Option<Box<dyn Problem>> {
    Some(match name {
        "id" => Box::new(IdProblem),
        "lpo" => Box::new(Lpo),
        "c2" | "llpo" => Box::new(C2 { always_exclude: false }),
        "c2-unique" => Box::new(C2 { always_exclude: true }),
        "cn" => Box::new(Cn),
        "lim-n" => Box::new(LimN),
        "lim" => Box::new(Lim),
        "c2n" | "wkl" => Box::new(CantorChoice),
        _ => return None,
    })
}

pub const PROBLEM_NAMES: &[&str] = &["id", "lpo", "c2", "c2-unique", "cn", "lim-n", "lim", "c2n"];

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct InstanceParseError {
    pub line: usize,
    pub message: String,
}

fn perr(line: usize, message: impl Into<String>) -> InstanceParseError {
    InstanceParseError {
        line,
        message: message.into(),
    }
}

/// Instance text: `problem <name> seed <n>`, `public: <description>`, any
/// number of `commit k v s` lines and `witness: <witness>`.
pub fn format_instance(inst: &Instance) -> String {
    let mut out = format!("problem {} seed {}\n", inst.problem, inst.seed);
    out += &format!("public: {}\n", inst.public.description);
    for c in &inst.public.commits {
        out += &format!("commit {} {} {}\n", c.coord, c.value, c.stage);
    }
    out += &format!("witness: {}\n", inst.witness);
    out
}

fn parse_witness(text: &str, line: usize) -> Result<Witness, InstanceParseError> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let num = |t: &str| {
        t.parse::<Nat>()
            .map_err(|_| perr(line, format!("`{t}` is not a natural number")))
    };
    match toks.as_slice() {
        ["none"] | [] => Ok(Witness::None),
        ["zero"] => Ok(Witness::AllZero),
        ["nonzero", k] => Ok(Witness::FirstNonzero(num(k)? as usize)),
        ["value", v] => Ok(Witness::Value(num(v)?)),
        ["word", "eps"] => Ok(Witness::Word(vec![])),
        ["word", rest @ ..] => Ok(Witness::Word(rest.iter().map(|t| num(t)).collect::<Result<_, _>>()?)),
        _ => Err(perr(line, format!("unknown witness `{text}`"))),
    }
}

/// The lines of an instance file before the public description is
/// interpreted.
#[derive(Debug, Clone)]
pub struct InstanceText {
    pub problem: String,
    pub seed: u64,
    pub description: String,
    /// Line of the `public:` entry, for error messages.
    pub description_line: usize,
    pub commits: Vec<Commit>,
    pub witness: Witness,
}

pub fn parse_instance_text(text: &str) -> Result<InstanceText, InstanceParseError> {
    let mut header: Option<(String, u64)> = None;
    let mut public: Option<(String, usize)> = None;
    let mut commits = Vec::new();
    let mut witness = Witness::None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        if let Some(rest) = body.strip_prefix("public:") {
            public = Some((rest.trim().to_string(), line));
        } else if let Some(rest) = body.strip_prefix("witness:") {
            witness = parse_witness(rest, line)?;
        } else {
            let toks: Vec<&str> = body.split_whitespace().collect();
            match toks.as_slice() {
                ["problem", name, "seed", seed] => {
                    let seed = seed.parse().map_err(|_| perr(line, "seed must be a natural number"))?;
                    header = Some((name.to_string(), seed));
                }
                ["commit", k, v, s] => {
                    let n = |t: &str| {
                        t.parse::<u64>()
                            .map_err(|_| perr(line, format!("`{t}` is not a natural number")))
                    };
                    commits.push(Commit {
                        coord: n(k)? as usize,
                        value: n(v)?,
                        stage: n(s)? as usize,
                    });
                }
                _ => return Err(perr(line, format!("unrecognized line `{body}`"))),
            }
        }
    }
    let (problem, seed) = header.ok_or_else(|| perr(1, "missing `problem <name> seed <n>` header"))?;
    let (description, description_line) = public.ok_or_else(|| perr(1, "missing `public:` line"))?;
    Ok(InstanceText {
        problem,
        seed,
        description,
        description_line,
        commits,
        witness,
    })
}

pub fn parse_instance(text: &str) -> Result<Instance, InstanceParseError> {
    let t = parse_instance_text(text)?;
    if problem_by_name(&t.problem).is_none() {
        return Err(perr(1, format!("unknown problem `{}`", t.problem)));
    }
    let pline = t.description_line;
    let stream = if let Some(rest) = t.description.strip_prefix("lim noise") {
        let noise = rest
            .trim()
            .parse()
            .map_err(|_| perr(pline, "expected `lim noise <n>`"))?;
        lim_sequence(noise, &t.commits)
    } else {
        parse_stream_spec(&t.description).map_err(|e| perr(pline, e))?
    };
    Ok(Instance {
        problem: t.problem,
        seed: t.seed,
        public: Public {
            stream,
            description: t.description,
            commits: t.commits,
        },
        witness: t.witness,
    })
}
