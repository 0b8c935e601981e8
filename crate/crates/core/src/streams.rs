//! Finite words and lazy, memoized infinite sequences over the naturals.
//!
//! A [`Stream`] answers index queries under a [`Fuel`] budget. Running out of
//! fuel is the "not yet" signal: it is never cached, so the same index can be
//! asked again later with a larger budget and will then produce the same
//! symbol any other successful query produced.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock, Weak};

use thiserror::Error;

use crate::machine::Program;

/// A symbol of Baire space.
pub type Nat = u64;

/// The budget ran out before the requested symbol was determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("insufficient fuel")]
pub struct OutOfFuel;

/// A query-level symbol could not be determined within its budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("insufficient fuel at index {index}")]
pub struct Undetermined {
    pub index: usize,
}

const DEFAULT_MAX_NESTING: u32 = 1500;

/// Step budget shared by every nested stream read of one query.
#[derive(Debug, Clone)]
pub struct Fuel {
    remaining: u64,
    granted: u64,
    depth: u32,
    max_depth: u32,
    nesting_hit: bool,
}

impl Fuel {
    pub fn new(steps: u64) -> Self {
        Fuel {
            remaining: steps,
            granted: steps,
            depth: 0,
            max_depth: DEFAULT_MAX_NESTING,
            nesting_hit: false,
        }
    }

    /// A separate budget for a sub-computation that still counts towards
    /// this budget's nesting depth.
    pub fn child(&self, steps: u64) -> Fuel {
        Fuel {
            remaining: steps,
            granted: steps,
            depth: self.depth,
            max_depth: self.max_depth,
            nesting_hit: false,
        }
    }

    /// Whether some read failed because streams were nested too deeply
    /// rather than because steps ran out.
    pub fn hit_nesting_cap(&self) -> bool {
        self.nesting_hit
    }

    /// Carry a child's nesting failure over to this budget.
    pub fn absorb(&mut self, child: &Fuel) {
        self.nesting_hit |= child.nesting_hit;
    }

    /// Give up: spend everything that is left.
    pub fn exhaust(&mut self) {
        self.remaining = 0;
    }

    pub fn with_max_nesting(mut self, depth: u32) -> Self {
        self.max_depth = depth;
        self
    }

    pub fn remaining(&self) -> u64 {
        self.remaining
    }

    pub fn used(&self) -> u64 {
        self.granted - self.remaining
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining == 0
    }

    pub fn tick(&mut self) -> Result<(), OutOfFuel> {
        self.spend(1)
    }

    pub fn spend(&mut self, steps: u64) -> Result<(), OutOfFuel> {
        if self.remaining < steps {
            self.remaining = 0;
            Err(OutOfFuel)
        } else {
            self.remaining -= steps;
            Ok(())
        }
    }

    fn enter(&mut self) -> Result<(), OutOfFuel> {
        if self.depth >= self.max_depth {
            self.nesting_hit = true;
            return Err(OutOfFuel);
        }
        self.tick()?;
        self.depth += 1;
        Ok(())
    }

    fn exit(&mut self) {
        self.depth -= 1;
    }
}

/// A finite word over the naturals.
#[derive(Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Word(pub Vec<Nat>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Nat] {
        &self.0
    }

    pub fn is_prefix_of(&self, other: &Word) -> bool {
        is_prefix(&self.0, &other.0)
    }

    pub fn comparable(&self, other: &Word) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }

    pub fn prefix(&self, k: usize) -> Word {
        Word(self.0[..k.min(self.len())].to_vec())
    }

    /// q(0)p(0)q(1)p(1)... truncated where either side runs out.
    pub fn interleave(even: &[Nat], odd: &[Nat]) -> Word {
        let mut out = Vec::with_capacity(even.len() + odd.len());
        for i in 0.. {
            match even.get(i) {
                Some(&a) => out.push(a),
                None => break,
            }
            match odd.get(i) {
                Some(&b) => out.push(b),
                None => break,
            }
        }
        Word(out)
    }

    pub fn evens(&self) -> Word {
        Word(self.0.iter().step_by(2).copied().collect())
    }

    pub fn odds(&self) -> Word {
        Word(self.0.iter().skip(1).step_by(2).copied().collect())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "eps");
        }
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

impl From<Vec<Nat>> for Word {
    fn from(v: Vec<Nat>) -> Self {
        Word(v)
    }
}

impl From<&[Nat]> for Word {
    fn from(v: &[Nat]) -> Self {
        Word(v.to_vec())
    }
}

pub fn is_prefix(a: &[Nat], b: &[Nat]) -> bool {
    a.len() <= b.len() && a == &b[..a.len()]
}

/// Supremum of two words in the prefix order, `None` if they are incompatible.
pub fn word_sup(a: &Word, b: &Word) -> Option<Word> {
    if a.is_prefix_of(b) {
        Some(b.clone())
    } else if b.is_prefix_of(a) {
        Some(a.clone())
    } else {
        None
    }
}

/// Cantor pairing `(i+n)(i+n+1)/2 + n`.
pub fn cantor_pair(i: u64, n: u64) -> u64 {
    let s = i.checked_add(n).expect("cantor_pair overflow");
    let tri = s.checked_mul(s + 1).map(|x| x / 2).expect("cantor_pair overflow");
    tri.checked_add(n).expect("cantor_pair overflow")
}

pub fn cantor_unpair(k: u64) -> (u64, u64) {
    // largest s with s(s+1)/2 <= k
    let mut s = (((8.0 * k as f64 + 1.0).sqrt() - 1.0) / 2.0) as u64;
    while s * (s + 1) / 2 > k {
        s -= 1;
    }
    while (s + 1) * (s + 2) / 2 <= k {
        s += 1;
    }
    let n = k - s * (s + 1) / 2;
    (s - n, n)
}

type PointFn = dyn Fn(usize, &mut Fuel) -> Result<Nat, OutOfFuel> + Send + Sync;
pub type DeferFn = dyn Fn(&mut Fuel) -> Result<Stream, OutOfFuel> + Send + Sync;
pub type PrefixFn = dyn Fn(usize, &mut Fuel) -> Result<Word, OutOfFuel> + Send + Sync;
pub type TailFn = dyn Fn(usize, usize, &mut Fuel) -> Result<Vec<Nat>, OutOfFuel> + Send + Sync;

enum Source {
    Const(Nat),
    /// Produces the symbol at one index.
    Point(Box<PointFn>),
    /// Given the number of cached symbols and the requested index, produces
    /// the symbols from the cached length on, past the requested index.
    Tail(Box<TailFn>),
    /// Built on first use.
    Lazy(Mutex<Option<Box<LazyFn>>>, OnceLock<Stream>),
    /// Built on first use from symbols that may not be available yet.
    Deferred(Box<DeferFn>, OnceLock<Stream>),
}

type LazyFn = dyn FnOnce() -> Stream + Send;

enum Shape {
    Plain,
    Pair(Stream, Stream),
    Tuple(Family),
    Embeds(Stream),
}

struct Inner {
    source: Source,
    shape: Shape,
    program: Option<Program>,
    cache: Mutex<Vec<Option<Nat>>>,
}

/// Lazy, memoized element of Baire space.
#[derive(Clone)]
pub struct Stream(Arc<Inner>);

/// Weak self-reference handed to self-referential stream constructors.
#[derive(Clone)]
pub struct WeakStream(Weak<Inner>);

impl WeakStream {
    pub fn upgrade(&self) -> Stream {
        Stream(self.0.upgrade().expect("self-referential stream dropped"))
    }
}

/// Memoized countable family of streams, `i -> p_i`.
#[derive(Clone)]
pub struct Family {
    make: Arc<dyn Fn(usize) -> Stream + Send + Sync>,
    made: Arc<Mutex<HashMap<usize, Stream>>>,
}

impl Family {
    pub fn new(make: impl Fn(usize) -> Stream + Send + Sync + 'static) -> Self {
        Family {
            make: Arc::new(make),
            made: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    pub fn get(&self, i: usize) -> Stream {
        if let Some(s) = self.made.lock().unwrap().get(&i) {
            return s.clone();
        }
        let s = (self.make)(i);
        self.made.lock().unwrap().entry(i).or_insert(s).clone()
    }
}

impl Stream {
    fn build(source: Source, shape: Shape, program: Option<Program>) -> Self {
        Stream(Arc::new(Inner {
            source,
            shape,
            program,
            cache: Mutex::new(Vec::new()),
        }))
    }

    pub fn constant(c: Nat) -> Self {
        Stream::build(Source::Const(c), Shape::Plain, None)
    }

    pub fn zeros() -> Self {
        Stream::constant(0)
    }

    /// Total, cost-free rule.
    pub fn from_fn(f: impl Fn(usize) -> Nat + Send + Sync + 'static) -> Self {
        Stream::from_point_fn(move |n, _| Ok(f(n)))
    }

    pub fn from_point_fn(f: impl Fn(usize, &mut Fuel) -> Result<Nat, OutOfFuel> + Send + Sync + 'static) -> Self {
        Stream::build(Source::Point(Box::new(f)), Shape::Plain, None)
    }

    /// `f(n, fuel)` must return a prefix of the stream longer than `n`.
    pub fn from_prefix_fn(f: impl Fn(usize, &mut Fuel) -> Result<Word, OutOfFuel> + Send + Sync + 'static) -> Self {
        Stream::from_tail_fn(move |from, n, fuel| {
            let w = f(n, fuel)?;
            assert!(w.len() > n, "prefix producer returned too short a word");
            Ok(w.0[from.min(w.len())..].to_vec())
        })
    }

    /// `f(from, n, fuel)` must return the symbols at `from, from+1, ...`
    /// through at least index `n`.
    pub fn from_tail_fn(
        f: impl Fn(usize, usize, &mut Fuel) -> Result<Vec<Nat>, OutOfFuel> + Send + Sync + 'static,
    ) -> Self {
        Stream::build(Source::Tail(Box::new(f)), Shape::Plain, None)
    }

    /// A stream that is only constructed when first read or asked for its
    /// program.
    pub fn lazy(make: impl FnOnce() -> Stream + Send + 'static) -> Self {
        Stream::build(
            Source::Lazy(Mutex::new(Some(Box::new(make))), OnceLock::new()),
            Shape::Plain,
            None,
        )
    }

    /// The stream behind any chain of lazy wrappers.
    fn resolved(&self) -> &Stream {
        match &self.0.source {
            Source::Lazy(make, cell) => cell
                .get_or_init(|| {
                    let f = make.lock().unwrap().take().expect("lazy stream forced reentrantly");
                    f()
                })
                .resolved(),
            Source::Deferred(_, cell) => match cell.get() {
                Some(s) => s.resolved(),
                None => self,
            },
            _ => self,
        }
    }

    /// Like [`Stream::lazy`], but the construction may need to read symbols
    /// and so may run out of fuel; it is retried on the next read. Pairs and
    /// tuples built this way still unpair into their components.
    pub fn deferred(make: impl Fn(&mut Fuel) -> Result<Stream, OutOfFuel> + Send + Sync + 'static) -> Self {
        Stream::build(Source::Deferred(Box::new(make), OnceLock::new()), Shape::Plain, None)
    }

    /// True for a deferred stream whose construction has not succeeded yet.
    pub fn is_pending(&self) -> bool {
        matches!(self.resolved().0.source, Source::Deferred(..))
    }

    /// The stream this one stands for, constructing deferred parts.
    pub fn force(&self, fuel: &mut Fuel) -> Result<Stream, OutOfFuel> {
        let r = self.resolved();
        match &r.0.source {
            Source::Deferred(make, cell) => {
                let made = match cell.get() {
                    Some(s) => s.clone(),
                    None => {
                        let s = make(fuel)?;
                        cell.get_or_init(|| s).clone()
                    }
                };
                made.force(fuel)
            }
            _ => Ok(r.clone()),
        }
    }

    /// Literal prefix followed by zeros.
    pub fn word_then_zeros(w: &[Nat]) -> Self {
        let w = w.to_vec();
        Stream::from_fn(move |n| w.get(n).copied().unwrap_or(0))
    }

    /// Literal prefix followed by the word `cycle` repeated forever.
    pub fn word_then_cycle(w: &[Nat], cycle: &[Nat]) -> Self {
        assert!(!cycle.is_empty(), "cycle must be nonempty");
        let w = w.to_vec();
        let c = cycle.to_vec();
        Stream::from_fn(move |n| if n < w.len() { w[n] } else { c[(n - w.len()) % c.len()] })
    }

    /// Known up to `w.len()`, "not yet" beyond. Used to read off monotone
    /// approximations of lazy machines.
    pub fn partial(w: &[Nat]) -> Self {
        let w = w.to_vec();
        Stream::from_point_fn(move |n, _| w.get(n).copied().ok_or(OutOfFuel))
    }

    /// Attach a compiled program: a machine whose graph this stream encodes.
    pub fn with_program(self, program: Program) -> Self {
        match Arc::try_unwrap(self.0) {
            Ok(inner) => Stream(Arc::new(Inner {
                program: Some(program),
                ..inner
            })),
            Err(shared) => {
                let alias = Stream(shared);
                let src = alias.clone();
                Stream::build(
                    Source::Point(Box::new(move |n, fuel| src.get(n, fuel))),
                    Shape::Plain,
                    Some(program),
                )
            }
        }
    }

    /// Record that the symbols of this stream code `inner` so that an
    /// extractor can recover it; [`Stream::embedded`] hands `inner` back.
    pub fn embedding(self, inner: &Stream) -> Self {
        match Arc::try_unwrap(self.0) {
            Ok(me) => Stream(Arc::new(Inner {
                shape: Shape::Embeds(inner.clone()),
                ..me
            })),
            Err(shared) => {
                let alias = Stream(shared);
                let program = alias.0.program.clone();
                let src = alias.clone();
                Stream::build(
                    Source::Point(Box::new(move |n, fuel| src.get(n, fuel))),
                    Shape::Embeds(inner.clone()),
                    program,
                )
            }
        }
    }

    pub fn embedded(&self) -> Option<Stream> {
        match &self.resolved().0.shape {
            Shape::Embeds(inner) => Some(inner.clone()),
            _ => None,
        }
    }

    /// Build a stream whose producer and program may refer to the stream itself.
    pub fn cyclic(make: impl FnOnce(WeakStream) -> (Box<PrefixFn>, Option<Program>)) -> Self {
        Stream(Arc::new_cyclic(|weak| {
            let (f, program) = make(WeakStream(weak.clone()));
            Inner {
                source: Source::Tail(Box::new(move |from, n, fuel| {
                    let w = f(n, fuel)?;
                    assert!(w.len() > n, "prefix producer returned too short a word");
                    Ok(w.0[from.min(w.len())..].to_vec())
                })),
                shape: Shape::Plain,
                program,
                cache: Mutex::new(Vec::new()),
            }
        }))
    }

    pub fn program(&self) -> Option<&Program> {
        match (&self.0.program, &self.0.source) {
            (Some(p), _) => Some(p),
            (None, Source::Lazy(..)) => self.resolved().program(),
            (None, Source::Deferred(_, cell)) => cell.get().and_then(|s| s.program()),
            (None, _) => None,
        }
    }

    pub fn ptr_eq(&self, other: &Stream) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn get(&self, n: usize, fuel: &mut Fuel) -> Result<Nat, OutOfFuel> {
        if let Source::Const(c) = self.0.source {
            return Ok(c);
        }
        if let Some(Some(s)) = self.0.cache.lock().unwrap().get(n) {
            return Ok(*s);
        }
        fuel.enter()?;
        let result = match &self.0.source {
            Source::Const(_) => unreachable!(),
            Source::Lazy(..) => {
                let target = self.resolved().clone();
                target.get(n, fuel)
            }
            Source::Deferred(..) => self.force(fuel).and_then(|t| t.get(n, fuel)),
            Source::Point(f) => f(n, fuel).inspect(|&s| {
                let mut cache = self.0.cache.lock().unwrap();
                if cache.len() <= n {
                    cache.resize(n + 1, None);
                }
                cache[n] = Some(s);
            }),
            Source::Tail(f) => {
                // tail streams fill their cache contiguously from 0
                let from = self.0.cache.lock().unwrap().len();
                f(from, n, fuel).map(|tail| {
                    assert!(
                        from + tail.len() > n,
                        "tail producer stopped short of the requested index"
                    );
                    let mut cache = self.0.cache.lock().unwrap();
                    if cache.len() < from + tail.len() {
                        cache.resize(from + tail.len(), None);
                    }
                    for (i, &s) in tail.iter().enumerate() {
                        debug_assert!(cache[from + i].is_none_or(|c| c == s), "stream not deterministic");
                        cache[from + i] = Some(s);
                    }
                    tail[n - from]
                })
            }
        };
        fuel.exit();
        result
    }

    /// Symbol at `n` under a fresh budget.
    pub fn at(&self, n: usize, budget: u64) -> Result<Nat, Undetermined> {
        self.get(n, &mut Fuel::new(budget))
            .map_err(|_| Undetermined { index: n })
    }

    /// The first `k` symbols, all under one shared budget.
    pub fn prefix(&self, k: usize, fuel: &mut Fuel) -> Result<Word, OutOfFuel> {
        (0..k)
            .map(|i| self.get(i, fuel))
            .collect::<Result<Vec<_>, _>>()
            .map(Word)
    }

    /// Longest prefix of length at most `k` with every index determined
    /// under its own fresh budget.
    pub fn determined_prefix(&self, k: usize, budget: u64) -> Word {
        let mut out = Vec::new();
        for i in 0..k {
            match self.at(i, budget) {
                Ok(s) => out.push(s),
                Err(_) => break,
            }
        }
        Word(out)
    }

    /// Each of the first `k` indices under its own budget.
    pub fn values(&self, k: usize, budget: u64) -> Vec<Option<Nat>> {
        (0..k).map(|i| self.at(i, budget).ok()).collect()
    }

    /// Drop the first `k` symbols.
    pub fn shift(&self, k: usize) -> Stream {
        let src = self.clone();
        Stream::from_point_fn(move |n, fuel| src.get(n + k, fuel))
    }

    /// Symbol-wise map. The result carries no program.
    pub fn map(&self, f: impl Fn(Nat) -> Nat + Send + Sync + 'static) -> Stream {
        let src = self.clone();
        Stream::from_point_fn(move |n, fuel| src.get(n, fuel).map(&f))
    }

    /// `w` followed by this stream.
    pub fn prepend(&self, w: &[Nat]) -> Stream {
        let w = w.to_vec();
        let src = self.clone();
        Stream::from_point_fn(move |n, fuel| {
            if n < w.len() {
                Ok(w[n])
            } else {
                src.get(n - w.len(), fuel)
            }
        })
    }

    /// Dummy symbols followed by this stream. Dummies do not change what a
    /// name means, so the program is carried over.
    pub fn prepend_dummies(&self, w: &[Nat]) -> Stream {
        assert!(w.iter().all(|&s| s <= 2), "only 0, 1, 2 are dummy symbols");
        let s = self.prepend(w);
        match self.program() {
            Some(p) => s.with_program(p.clone()),
            None => s,
        }
    }
}

impl fmt::Debug for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cache = self.0.cache.lock().unwrap();
        let known: Vec<String> = cache
            .iter()
            .take(16)
            .map(|s| s.map_or("?".to_string(), |s| s.to_string()))
            .collect();
        write!(f, "Stream[{} ..]", known.join(" "))
    }
}

/// ⟨q,p⟩ = q(0)p(0)q(1)p(1)...
pub fn pair_stream(q: &Stream, p: &Stream) -> Stream {
    let (a, b) = (q.clone(), p.clone());
    Stream::build(
        Source::Point(Box::new(move |n, fuel| {
            if n % 2 == 0 {
                a.get(n / 2, fuel)
            } else {
                b.get(n / 2, fuel)
            }
        })),
        Shape::Pair(q.clone(), p.clone()),
        None,
    )
}

/// Even and odd components. A stream built by [`pair_stream`] hands back
/// its original components, programs included.
pub fn unpair_stream(r: &Stream) -> (Stream, Stream) {
    if let Shape::Pair(q, p) = &r.resolved().0.shape {
        return (q.clone(), p.clone());
    }
    if r.is_pending() {
        let (a, b) = (r.clone(), r.clone());
        return (
            Stream::deferred(move |fuel| Ok(first(&a.force(fuel)?))),
            Stream::deferred(move |fuel| Ok(second(&b.force(fuel)?))),
        );
    }
    let (a, b) = (r.clone(), r.clone());
    (
        Stream::from_point_fn(move |n, fuel| a.get(2 * n, fuel)),
        Stream::from_point_fn(move |n, fuel| b.get(2 * n + 1, fuel)),
    )
}

pub fn first(r: &Stream) -> Stream {
    unpair_stream(r).0
}

pub fn second(r: &Stream) -> Stream {
    unpair_stream(r).1
}

/// ⟨p_0,p_1,...⟩ with `result(pair(i,n)) = p_i(n)`.
pub fn tuple_countable(components: Family) -> Stream {
    let fam = components.clone();
    Stream::build(
        Source::Point(Box::new(move |k, fuel| {
            let (i, n) = cantor_unpair(k as u64);
            fam.get(i as usize).get(n as usize, fuel)
        })),
        Shape::Tuple(components),
        None,
    )
}

pub fn tuple_of(components: Vec<Stream>) -> Stream {
    let fallback = Stream::zeros();
    tuple_countable(Family::new(move |i| {
        components.get(i).cloned().unwrap_or_else(|| fallback.clone())
    }))
}

/// Component `i` of a countable tuple.
pub fn project(t: &Stream, i: usize) -> Stream {
    if let Shape::Tuple(fam) = &t.resolved().0.shape {
        return fam.get(i);
    }
    if t.is_pending() {
        let t = t.clone();
        return Stream::deferred(move |fuel| Ok(project(&t.force(fuel)?, i)));
    }
    let src = t.clone();
    Stream::from_point_fn(move |n, fuel| src.get(cantor_pair(i as u64, n as u64) as usize, fuel))
}

/// Parse `1 2 3 zeros` or `1 2 cycle 4 5` (a bare literal means zeros after it).
pub fn parse_stream_spec(spec: &str) -> Result<Stream, String> {
    let mut literal = Vec::new();
    let mut toks = spec.split_whitespace();
    while let Some(tok) = toks.next() {
        match tok {
            "zeros" => {
                if toks.next().is_some() {
                    return Err("nothing may follow `zeros`".into());
                }
                return Ok(Stream::word_then_zeros(&literal));
            }
            "cycle" => {
                let cycle: Vec<Nat> = toks
                    .map(|t| t.parse::<Nat>().map_err(|_| format!("bad symbol `{t}`")))
                    .collect::<Result<_, _>>()?;
                if cycle.is_empty() {
                    return Err("`cycle` needs at least one symbol".into());
                }
                return Ok(Stream::word_then_cycle(&literal, &cycle));
            }
            t => literal.push(t.parse::<Nat>().map_err(|_| format!("bad symbol `{t}`"))?),
        }
    }
    Ok(Stream::word_then_zeros(&literal))
}
