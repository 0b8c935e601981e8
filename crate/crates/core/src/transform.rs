//! Program transformations on names: parametrization (smn), the fixed point
//! transformer, the injection with its extractor, injective recursion and a
//! self-reproducing name.
//!
//! Every transformer is itself a [`Machine`] on streams, so it has a name of
//! its own and can be fed to the others. Names produced here carry compiled
//! programs; the codec route over their symbols agrees with the program on
//! every index either route determines.

use std::sync::{Arc, Mutex};

use crate::machine::{
    compose_names, encode_machine, eval_stream, library, run, universal_machine, Machine, Name, Program,
};
use crate::streams::{first, pair_stream, second, unpair_stream, Fuel, Nat, OutOfFuel, Stream, Word};

/// A total function from names to names, optionally with an extractor that
/// inverts it (or, for the injection, inverts every function it names).
#[derive(Clone)]
pub struct NameTransformer {
    machine: Program,
    extractor: Option<Program>,
    total: bool,
}

impl NameTransformer {
    pub fn new(machine: Program) -> Self {
        NameTransformer {
            machine,
            extractor: None,
            total: true,
        }
    }

    pub fn with_extractor(mut self, extractor: Program) -> Self {
        self.extractor = Some(extractor);
        self
    }

    pub fn label(&self) -> String {
        self.machine.label()
    }

    pub fn is_total(&self) -> bool {
        self.total
    }

    pub fn apply(&self, x: &Name) -> Name {
        Name::from(run(&self.machine, x.stream()))
    }

    pub fn machine(&self) -> &Program {
        &self.machine
    }

    pub fn extractor(&self) -> Option<&Program> {
        self.extractor.as_ref()
    }

    pub fn extract(&self, y: &Stream) -> Option<Stream> {
        self.extractor.as_ref().map(|l| run(l, y))
    }

    /// A name of this transformer, as a function on Baire space.
    pub fn name(&self) -> Name {
        encode_machine(&self.machine)
    }
}

/// `p -> F<q,p>` for a fixed `q`.
pub struct SmnInstance {
    pub f: Program,
    pub q: Stream,
}

impl Machine for SmnInstance {
    fn label(&self) -> String {
        format!("smn instance of {}", self.f.label())
    }

    fn apply(&self, p: &Stream) -> Option<Stream> {
        Some(run(&self.f, &pair_stream(&self.q, p)))
    }
}

/// `q -> S(q)` with `U_{S(q)}(p) = F<q,p>`.
pub struct SmnTransformer {
    pub f: Program,
}

impl Machine for SmnTransformer {
    fn label(&self) -> String {
        format!("smn of {}", self.f.label())
    }

    fn apply(&self, q: &Stream) -> Option<Stream> {
        let inst: Program = Arc::new(SmnInstance {
            f: self.f.clone(),
            q: q.clone(),
        });
        Some(encode_machine(&inst).into_stream())
    }
}

pub fn smn(f: Program) -> NameTransformer {
    NameTransformer::new(Arc::new(SmnTransformer { f }))
}

/// `<u,z> -> U<U_u(u), z>`.
struct SelfApplication;

impl Machine for SelfApplication {
    fn label(&self) -> String {
        "self application".into()
    }

    fn apply(&self, x: &Stream) -> Option<Stream> {
        let (u, z) = unpair_stream(x);
        let uu = eval_stream(&Name::from(u.clone()), &u);
        Some(run(&universal_machine(), &pair_stream(&uu, &z)))
    }
}

/// `<p,u> -> U_p(D(u))`.
struct ApplyAfterDiagonal {
    diagonal: Program,
}

impl Machine for ApplyAfterDiagonal {
    fn label(&self) -> String {
        "apply after diagonal".into()
    }

    fn apply(&self, x: &Stream) -> Option<Stream> {
        let (p, u) = unpair_stream(x);
        let du = run(&self.diagonal, &u);
        Some(eval_stream(&Name::from(p), &du))
    }
}

/// `p -> D(V(p))`.
struct FixedPoint {
    diagonal: Program,
    v: Program,
}

impl Machine for FixedPoint {
    fn label(&self) -> String {
        "fixed point".into()
    }

    fn apply(&self, p: &Stream) -> Option<Stream> {
        Some(run(&self.diagonal, &run(&self.v, p)))
    }
}

/// The transformer `T` with `U_{T(p)} = U_{U_p(T(p))}` whenever `U_p` is total.
pub fn recursion_t() -> NameTransformer {
    let diagonal: Program = Arc::new(SmnTransformer {
        f: Arc::new(SelfApplication),
    });
    let v: Program = Arc::new(SmnTransformer {
        f: Arc::new(ApplyAfterDiagonal {
            diagonal: diagonal.clone(),
        }),
    });
    NameTransformer::new(Arc::new(FixedPoint { diagonal, v }))
}

/// Budget of the inner evaluation at injection stage `i`.
pub fn injection_stage_budget(i: usize) -> u64 {
    const FLOOR: u64 = 20_000;
    const UNIT: u64 = 200;
    FLOOR + UNIT * (i as u64) * (i as u64)
}

#[derive(Default)]
struct InjectionState {
    input: Vec<Nat>,
    inner_emitted: usize,
    out: Vec<Nat>,
}

impl InjectionState {
    /// Stage `i` once `input` holds `p(0..=i)`: the block `1 0^{p(i)} 1`, then
    /// up to `i + 1` further symbols of `U_s(p)` with 0 and 1 turned into 2.
    fn stage(&mut self, s: &Name, fuel: &mut Fuel) -> Result<(), OutOfFuel> {
        let i = self.input.len() - 1;
        let inner = eval_stream(s, &Stream::partial(&self.input));
        let mut budget = fuel.child(injection_stage_budget(i));
        let mut fresh = Vec::new();
        while fresh.len() <= i {
            match inner.get(self.inner_emitted + fresh.len(), &mut budget) {
                Ok(x) => fresh.push(if x <= 1 { 2 } else { x }),
                Err(_) => break,
            }
        }
        if budget.hit_nesting_cap() {
            fuel.absorb(&budget);
            return Err(OutOfFuel);
        }
        self.out.push(1);
        self.out.extend(std::iter::repeat_n(0, self.input[i] as usize));
        self.out.push(1);
        self.inner_emitted += fresh.len();
        self.out.extend(fresh);
        Ok(())
    }
}

/// `p -> F(s,p)`: blocks coding `p` interleaved with a dummy-rewritten copy
/// of `U_s(p)`.
pub struct InjectionInstance {
    pub s: Name,
}

impl Machine for InjectionInstance {
    fn label(&self) -> String {
        "injection instance".into()
    }

    fn approximate(&self, w: &[Nat], fuel: &mut Fuel) -> Word {
        let mut st = InjectionState::default();
        for &x in w {
            st.input.push(x);
            if st.stage(&self.s, fuel).is_err() {
                st.input.pop();
                break;
            }
        }
        Word(st.out)
    }

    fn apply(&self, p: &Stream) -> Option<Stream> {
        let s = self.s.clone();
        let original = p.clone();
        let p = p.clone();
        let program = eval_stream(&s, &p).program().cloned();
        let state = Mutex::new(InjectionState::default());
        let out = Stream::from_tail_fn(move |from, n, fuel| {
            let mut st = state.lock().unwrap();
            while st.out.len() <= n {
                fuel.tick()?;
                let i = st.input.len();
                let x = p.get(i, fuel)?;
                st.input.push(x);
                if let Err(e) = st.stage(&s, fuel) {
                    st.input.pop();
                    fuel.exhaust();
                    return Err(e);
                }
            }
            Ok(st.out[from..].to_vec())
        });
        // the blocks and rewritten symbols are all dummies, so the output
        // means what U_s(p) means
        let out = match program {
            Some(prog) => out.with_program(prog),
            None => out,
        };
        Some(out.embedding(&original))
    }
}

/// `s -> I(s)`.
pub struct InjectionTransformer;

impl Machine for InjectionTransformer {
    fn label(&self) -> String {
        "injection".into()
    }

    fn apply(&self, s: &Stream) -> Option<Stream> {
        let inst: Program = Arc::new(InjectionInstance {
            s: Name::from(s.clone()),
        });
        Some(encode_machine(&inst).into_stream())
    }
}

/// Reads the lengths of the `1 0^k 1` blocks, skipping every symbol >= 2.
pub struct BlockExtractor;

#[derive(Default)]
struct BlockScan {
    open: bool,
    zeros: Nat,
    out: Vec<Nat>,
}

impl BlockScan {
    fn feed(&mut self, x: Nat) {
        match (x, self.open) {
            (0, true) => self.zeros += 1,
            (1, true) => {
                self.out.push(self.zeros);
                self.open = false;
            }
            (1, false) => {
                self.open = true;
                self.zeros = 0;
            }
            _ => {}
        }
    }
}

impl Machine for BlockExtractor {
    fn label(&self) -> String {
        "block extractor".into()
    }

    fn approximate(&self, w: &[Nat], _: &mut Fuel) -> Word {
        let mut scan = BlockScan::default();
        for &x in w {
            scan.feed(x);
        }
        Word(scan.out)
    }

    fn apply(&self, input: &Stream) -> Option<Stream> {
        if input.is_pending() {
            let input = input.clone();
            return Some(Stream::deferred(move |fuel| {
                let made = input.force(fuel)?;
                Ok(match made.embedded() {
                    Some(p) => p,
                    None => scan_blocks(&made),
                })
            }));
        }
        if let Some(p) = input.embedded() {
            return Some(p);
        }
        Some(scan_blocks(input))
    }
}

/// The block lengths of `input`, read symbol by symbol.
pub fn scan_blocks(input: &Stream) -> Stream {
    let input = input.clone();
    let state = Mutex::new((0usize, BlockScan::default()));
    Stream::from_tail_fn(move |from, n, fuel| {
        let mut guard = state.lock().unwrap();
        let (read, scan) = &mut *guard;
        while scan.out.len() <= n {
            fuel.tick()?;
            let x = input.get(*read, fuel)?;
            *read += 1;
            scan.feed(x);
        }
        Ok(scan.out[from..].to_vec())
    })
}

pub fn block_extractor() -> Program {
    Arc::new(BlockExtractor)
}

/// The injection `I` with `L(U_{I(s)}(p)) = p`; the extractor is `L`.
pub fn injection_i() -> NameTransformer {
    NameTransformer::new(Arc::new(InjectionTransformer)).with_extractor(block_extractor())
}

/// `<<s,q>,p> -> f<I(s), <q,p>>`.
struct InjectedFunctional {
    f: Program,
}

impl Machine for InjectedFunctional {
    fn label(&self) -> String {
        format!("injected {}", self.f.label())
    }

    fn apply(&self, x: &Stream) -> Option<Stream> {
        let (sq, p) = unpair_stream(x);
        let (s, q) = unpair_stream(&sq);
        let r = run(&(Arc::new(InjectionTransformer) as Program), &s);
        Some(run(&self.f, &pair_stream(&r, &pair_stream(&q, &p))))
    }
}

/// The outcome of injective recursion for a functional `f`.
pub struct InjectiveRecursion {
    /// `q -> R(q)`, with the block extractor inverting it.
    pub r: NameTransformer,
    /// The name of `R` handed to `f`: `I(T(t))`.
    pub r_name: Name,
    /// A name of the parametrized transformer `S`.
    pub t: Name,
}

/// `R` with `U_{R(q)}(p) = f(R, <q,p>)`. `f` receives the pair
/// `<name of R, <q,p>>`.
pub fn injective_recursion(f: Program) -> InjectiveRecursion {
    let s1: Program = Arc::new(SmnTransformer {
        f: Arc::new(InjectedFunctional { f }),
    });
    let s = smn(s1);
    let t = s.name();
    let fixed = recursion_t().apply(&t);
    let r_name = injection_i().apply(&fixed);
    let machine: Program = Arc::new(InjectionInstance { s: fixed });
    InjectiveRecursion {
        r: NameTransformer::new(machine).with_extractor(block_extractor()),
        r_name,
        t,
    }
}

/// A name `q` with `U_q(p) = <q,p>`.
pub fn quine() -> Name {
    let j = smn(library::identity());
    recursion_t().apply(&j.name())
}

/// `x -> c`.
pub struct ConstantName(pub Name);

impl Machine for ConstantName {
    fn label(&self) -> String {
        "constant name".into()
    }

    fn apply(&self, _: &Stream) -> Option<Stream> {
        Some(self.0.stream().clone())
    }
}

pub fn constant_transformer(c: Name) -> NameTransformer {
    NameTransformer::new(Arc::new(ConstantName(c)))
}

/// `x -> name of U_outer ∘ U_x`.
pub struct PostCompose(pub Name);

impl Machine for PostCompose {
    fn label(&self) -> String {
        "post compose".into()
    }

    fn apply(&self, x: &Stream) -> Option<Stream> {
        Some(compose_names(&self.0, &Name::from(x.clone())).into_stream())
    }
}

pub fn post_compose_transformer(outer: Name) -> NameTransformer {
    NameTransformer::new(Arc::new(PostCompose(outer)))
}

/// `<R, <q,p>> -> p`.
pub struct IgnoreSelf;

impl Machine for IgnoreSelf {
    fn label(&self) -> String {
        "ignore self".into()
    }

    fn approximate(&self, w: &[Nat], _: &mut Fuel) -> Word {
        Word(w.to_vec()).odds().odds()
    }

    fn apply(&self, x: &Stream) -> Option<Stream> {
        Some(second(&second(x)))
    }
}

/// `<R, <q,p>> -> <U_R(q), p>`.
pub struct PairSelfOutput;

impl Machine for PairSelfOutput {
    fn label(&self) -> String {
        "pair self output".into()
    }

    fn apply(&self, x: &Stream) -> Option<Stream> {
        let (r, qp) = unpair_stream(x);
        let (q, p) = unpair_stream(&qp);
        Some(pair_stream(&eval_stream(&Name::from(r), &q), &p))
    }
}

/// The even positions of a stream.
pub fn even_part(s: &Stream) -> Stream {
    first(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::library::{Delay, Seeded};
    use crate::machine::{eval_by_codec, eval_name};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const B: u64 = 2_000_000;

    fn seeded_stream(seed: u64, len: usize) -> Stream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<Nat> = (0..len).map(|_| rng.gen_range(0..5)).collect();
        Stream::word_then_zeros(&w)
    }

    #[test]
    fn smn_second_projection() {
        let s = smn(Arc::new(library::SecondOfPair));
        for seed in 0..10 {
            let q = seeded_stream(seed, 40);
            let p = seeded_stream(seed + 100, 40);
            let out = eval_stream(&s.apply(&Name::from(q)), &p);
            assert_eq!(out.determined_prefix(32, B), p.determined_prefix(32, B));
        }
    }

    #[test]
    fn smn_name_decodes_to_the_same_function() {
        let s = smn(Arc::new(library::Identity));
        let q = seeded_stream(3, 10);
        let name = s.apply(&Name::from(q.clone()));
        let sym = name.stream().prefix(4_000, &mut Fuel::new(u64::MAX)).unwrap();
        let p = [2, 0, 1];
        let expect = Word::interleave(&q.determined_prefix(4, B).0, &p);
        let got = eval_name(&sym.0, &p);
        assert!(got.len() >= 6, "{got}");
        assert!(got.is_prefix_of(&expect), "{got} vs {expect}");
    }

    #[test]
    fn constant_transformer_fixed_point() {
        let c = encode_machine(&(Arc::new(Seeded::new(9)) as Program));
        let t = recursion_t();
        let fixed = t.apply(&constant_transformer(c.clone()).name());
        let z = seeded_stream(4, 40);
        assert_eq!(
            eval_stream(&fixed, &z).determined_prefix(16, B),
            eval_stream(&c, &z).determined_prefix(16, B)
        );
    }

    #[test]
    fn post_compose_fixed_point_is_iterated_delay() {
        let delay = Delay {
            head: 3,
            seed: 11,
            modulus: 7,
        };
        let expect: Vec<Nat> = std::iter::successors(Some(3), |&x| Some(delay.map(x)))
            .take(12)
            .collect();
        let outer = encode_machine(&(Arc::new(delay) as Program));
        let fixed = recursion_t().apply(&post_compose_transformer(outer).name());
        let out = eval_stream(&fixed, &Stream::zeros());
        assert_eq!(out.determined_prefix(12, B).0, expect);
    }

    #[test]
    fn injection_blocks_and_extraction() {
        let i = injection_i();
        let s = library::identity_name();
        let p = Stream::word_then_zeros(&[4, 0, 2]);
        let out = eval_stream(&i.apply(&s), &p);
        let blocks: Vec<Nat> = out
            .determined_prefix(60, B)
            .0
            .into_iter()
            .filter(|&x| x <= 1)
            .take(12)
            .collect();
        assert_eq!(blocks, vec![1, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 1]);
        let back = i.extract(&out).unwrap();
        assert_eq!(back.determined_prefix(3, B).0, vec![4, 0, 2]);
        assert_eq!(scan_blocks(&out).determined_prefix(3, B).0, vec![4, 0, 2]);
    }

    #[test]
    fn injection_output_keeps_its_meaning() {
        let i = injection_i();
        let s = encode_machine(&(Arc::new(ConstantName(library::identity_name())) as Program));
        let p = seeded_stream(1, 20);
        let named = Name::from(eval_stream(&i.apply(&s), &p));
        let z = seeded_stream(2, 40);
        assert_eq!(
            eval_stream(&named, &z).determined_prefix(32, B),
            z.determined_prefix(32, B)
        );
        // the rewritten symbols decode to the same graph
        let raw = named.stream().prefix(300, &mut Fuel::new(u64::MAX)).unwrap();
        let zw = z.determined_prefix(2, B);
        assert_eq!(eval_name(&raw.0, &zw.0), zw);
    }

    #[test]
    fn injection_approximation_agrees_with_stream() {
        let inst = InjectionInstance {
            s: library::identity_name(),
        };
        let p = [2, 1, 0, 3];
        let word = inst.approximate(&p, &mut Fuel::new(B));
        let full = inst.apply(&Stream::word_then_zeros(&p)).unwrap();
        assert_eq!(full.determined_prefix(word.len(), B), word);
    }

    #[test]
    fn injective_recursion_ignoring_self() {
        let ir = injective_recursion(Arc::new(IgnoreSelf));
        let q = Name::from(seeded_stream(5, 30));
        let p = seeded_stream(6, 30);
        let rq = ir.r.apply(&q);
        assert_eq!(
            eval_stream(&rq, &p).determined_prefix(16, B),
            p.determined_prefix(16, B)
        );
        let back = ir.r.extract(rq.stream()).unwrap();
        assert_eq!(back.determined_prefix(16, B), q.stream().determined_prefix(16, B));
        let scanned = scan_blocks(rq.stream());
        assert_eq!(scanned.determined_prefix(16, B), q.stream().determined_prefix(16, B));
    }

    #[test]
    fn quine_pairs_itself() {
        let q = quine();
        let p = seeded_stream(8, 64);
        let out = eval_stream(&q, &p);
        let expect = pair_stream(q.stream(), &p).determined_prefix(64, B);
        assert_eq!(expect.len(), 64);
        assert_eq!(out.determined_prefix(64, B), expect);
    }

    #[test]
    fn codec_route_agrees_on_fixed_point() {
        let c = encode_machine(&(Arc::new(library::Prepend(7)) as Program));
        let fixed = recursion_t().apply(&constant_transformer(c).name());
        let z = Stream::word_then_zeros(&[1, 2]);
        let by_codec = eval_by_codec(&fixed, &z).determined_prefix(1, 5_000_000);
        assert_eq!(by_codec.0, vec![7]);
    }

    #[test]
    fn even_part_of_pair() {
        let q = seeded_stream(1, 10);
        let e = even_part(&pair_stream(&q, &Stream::zeros()));
        assert_eq!(e.determined_prefix(10, 100), q.determined_prefix(10, 100));
    }
}
