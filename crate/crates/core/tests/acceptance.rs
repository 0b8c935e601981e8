//! The acceptance suite: twelve criteria, each run at its stated scale and
//! time bound. One line per criterion goes straight to stderr so it shows
//! even when output is captured.

use std::io::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use type2::machine::library::{identity_name, Delay, SecondOfPair, Seeded, SwapPair};
use type2::machine::{decode_entries, encode_machine, eval_name, eval_stream, run, Decoder, Machine, Name, Program};
use type2::operators::{diamond, loop_program, omega, pass_through_program, power_n, Realizer, RunClass};
use type2::problems::{Lpo, Problem, Witness, C2};
use type2::reductions::witness_library;
use type2::streams::{first, pair_stream, project, second, Fuel, Nat, Stream, Word};
use type2::transform::{
    constant_transformer, injection_i, injective_recursion, post_compose_transformer, quine, recursion_t, scan_blocks,
    smn, ConstantName, IgnoreSelf, PairSelfOutput,
};

const B: u64 = 2_000_000;

struct Outcome {
    failures: usize,
    detail: String,
}

fn criterion(n: usize, name: &str, bound: Duration, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = body();
    let t = start.elapsed();
    let pass = o.failures == 0 && t < bound;
    let _ = writeln!(
        std::io::stderr().lock(),
        "criterion {n:>2} {name}: {} failures {} time {:.2}s bound {}s {}",
        if pass { "PASS" } else { "FAIL" },
        o.failures,
        t.as_secs_f64(),
        bound.as_secs(),
        o.detail
    );
    pass
}

fn word(seed: u64, len: usize, alphabet: Nat) -> Vec<Nat> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| r.gen_range(0..alphabet)).collect()
}

fn all_words(max_len: usize, alphabet: Nat) -> Vec<Vec<Nat>> {
    let mut out = vec![vec![]];
    let mut layer: Vec<Vec<Nat>> = vec![vec![]];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|w| (0..alphabet).map(move |s| [w.as_slice(), &[s]].concat()))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

fn seeded(seed: u64) -> Program {
    Arc::new(Seeded::new(seed))
}

fn delay(seed: u64) -> Delay {
    Delay {
        head: seed % 5,
        seed,
        modulus: 9,
    }
}

/// Compare `got` with `want` on the indices where both are known; also
/// count indices of `want` that `got` leaves open.
fn compare(got: &[Option<Nat>], want: &[Option<Nat>]) -> (usize, usize, usize) {
    let (mut agree, mut differ, mut open) = (0, 0, 0);
    for (g, w) in got.iter().zip(want) {
        match (g, w) {
            (Some(a), Some(b)) if a == b => agree += 1,
            (Some(_), Some(_)) => differ += 1,
            (None, Some(_)) => open += 1,
            _ => {}
        }
    }
    (agree, differ, open)
}

fn known(w: &[Nat], len: usize) -> Vec<Option<Nat>> {
    (0..len).map(|i| w.get(i).copied()).collect()
}

fn codec_soundness() -> Outcome {
    let words = all_words(4, 3);
    let mut failures = 0;
    let mut names = Vec::new();
    for seed in 0..100 {
        let m = seeded(seed);
        // stage 4 of the enumeration covers every word of length <= 4 over
        // {0, 1, 2}; its last word is 6 6 6 6
        let name = encode_machine(&m).into_stream();
        let mut decoder = Decoder::new();
        let mut fuel = Fuel::new(u64::MAX);
        for i in 0.. {
            if decoder.feed(name.get(i, &mut fuel).unwrap()).is_some()
                && decoder.entries().entries().last().map(|e| e.input.0.as_slice()) == Some(&[6, 6, 6, 6])
            {
                break;
            }
        }
        let set = decoder.entries();
        failures += words
            .iter()
            .filter(|w| set.eval(w) != m.approximate(w, &mut Fuel::new(1_000)))
            .count();
        if seed < 10 {
            names.push(name.prefix(3_000, &mut fuel).unwrap().0);
        }
    }
    let mut r = ChaCha8Rng::seed_from_u64(77);
    for i in 0..1000 {
        let name = &names[i % names.len()];
        let mut noisy = name.clone();
        for _ in 0..r.gen_range(1..=5) {
            let at = r.gen_range(0..=noisy.len());
            noisy.insert(at, r.gen_range(0..=2));
        }
        let w = word(i as u64, r.gen_range(0..5), 4);
        if decode_entries(&noisy) != decode_entries(name) || eval_name(&noisy, &w) != eval_name(name, &w) {
            failures += 1;
        }
    }
    Outcome {
        failures,
        detail: format!("100 machines x {} words, 1000 insertions", words.len()),
    }
}

fn evaluation_monotonicity() -> Outcome {
    let mut failures = 0;
    let mut pairs = 0;
    for seed in 0..500u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
        let name: Vec<Nat> = if seed % 2 == 0 {
            let len = r.gen_range(50..2_000);
            encode_machine(&seeded(seed))
                .stream()
                .prefix(len, &mut Fuel::new(u64::MAX))
                .unwrap()
                .0
        } else {
            (0..r.gen_range(0..300))
                .map(|_| match r.gen_range(0..10) {
                    0 => r.gen_range(0..3),
                    1 | 2 => 3,
                    3 | 4 => 4,
                    5 | 6 => 5,
                    _ => 6 + r.gen_range(0..3),
                })
                .collect()
        };
        let input = word(seed, 64, 3);
        let outs: Vec<Word> = (0..=64).map(|i| eval_name(&name, &input[..i])).collect();
        for i in 0..=64 {
            for j in i..=64 {
                pairs += 1;
                if !outs[i].is_prefix_of(&outs[j]) {
                    failures += 1;
                }
            }
        }
        let cuts: Vec<usize> = (0..=8).map(|k| name.len() * k / 8).collect();
        let by_name: Vec<Word> = cuts.iter().map(|&c| eval_name(&name[..c], &input)).collect();
        for w in by_name.windows(2) {
            pairs += 1;
            if !w[0].is_prefix_of(&w[1]) {
                failures += 1;
            }
        }
    }
    Outcome {
        failures,
        detail: format!("{pairs} extension pairs"),
    }
}

fn smn_equation() -> Outcome {
    let (mut failures, mut compared) = (0, 0);
    for seed in 0..200u64 {
        let q = word(seed, 40, 6);
        let p = word(seed + 1_000, 40, 6);
        let qp = Word::interleave(&q, &p).0;
        let (f, oracle): (Program, Vec<Nat>) = match seed % 4 {
            0 => (seeded(seed), Seeded::new(seed).approximate(&qp, &mut Fuel::new(B)).0),
            1 => (Arc::new(delay(seed)), delay(seed).approximate(&qp, &mut Fuel::new(B)).0),
            2 => (Arc::new(SecondOfPair), p.clone()),
            _ => (Arc::new(SwapPair), Word::interleave(&p, &q).0),
        };
        let named = smn(f).apply(&Name::from(Stream::word_then_zeros(&q)));
        let got = eval_stream(&named, &Stream::word_then_zeros(&p)).values(32, B);
        let (a, d, open) = compare(&got, &known(&oracle, 32));
        compared += a + d;
        failures += d + open;
    }
    if compared == 0 {
        failures += 1;
    }
    Outcome {
        failures,
        detail: format!("{compared} indices compared"),
    }
}

fn recursion_fixed_point() -> Outcome {
    let (mut failures, mut compared) = (0, 0);
    let z = word(5, 40, 6);
    let zs = Stream::word_then_zeros(&z);
    for k in 0..20u64 {
        let (t, oracle) = if k < 10 {
            let c = encode_machine(&seeded(k));
            (
                constant_transformer(c),
                Seeded::new(k).approximate(&z, &mut Fuel::new(B)).0,
            )
        } else {
            let d = Delay {
                head: k % 4,
                seed: k,
                modulus: 7,
            };
            let iterated: Vec<Nat> = std::iter::successors(Some(d.head), |&x| Some(d.map(x)))
                .take(16)
                .collect();
            (
                post_compose_transformer(encode_machine(&(Arc::new(d) as Program))),
                iterated,
            )
        };
        let p = t.name();
        let fixed = recursion_t().apply(&p);
        let image = Name::from(eval_stream(&p, fixed.stream()));
        let lhs = eval_stream(&fixed, &zs).values(16, B);
        let rhs = eval_stream(&image, &zs).values(16, B);
        let (a, d, open) = compare(&lhs, &rhs);
        let (_, d2, open2) = compare(&lhs, &known(&oracle, 16));
        compared += a + d;
        failures += d + open + d2 + open2;
    }
    Outcome {
        failures,
        detail: format!("20 transformers, {compared} indices compared"),
    }
}

fn injection_lemma() -> Outcome {
    let i = injection_i();
    let mut failures = 0;
    for seed in 0..50u64 {
        let s = match seed % 3 {
            0 => identity_name(),
            1 => encode_machine(&seeded(seed)),
            _ => encode_machine(&(Arc::new(delay(seed)) as Program)),
        };
        let p = word(seed + 7, 80, 5);
        let y = eval_stream(&i.apply(&s), &Stream::word_then_zeros(&p));
        let want = known(&p, 64);
        let by_blocks = scan_blocks(&y).values(64, B);
        let by_extractor = i.extract(&y).unwrap().values(64, B);
        failures += usize::from(by_blocks != want) + usize::from(by_extractor != want);
    }
    let z = word(9, 40, 4);
    let zs = Stream::word_then_zeros(&z);
    for k in 0..20u64 {
        let (s, p) = if k < 10 {
            let c = encode_machine(&seeded(k));
            let s = encode_machine(&(Arc::new(ConstantName(c)) as Program));
            (s, Stream::word_then_zeros(&word(k, 20, 5)))
        } else {
            (identity_name(), encode_machine(&seeded(k)).into_stream())
        };
        let y = Name::from(eval_stream(&i.apply(&s), &p));
        let direct = Name::from(eval_stream(&s, &p));
        let oracle = known(&Seeded::new(k).approximate(&z, &mut Fuel::new(B)).0, 16);
        let lhs = eval_stream(&y, &zs).values(16, B);
        let rhs = eval_stream(&direct, &zs).values(16, B);
        let (_, d, open) = compare(&lhs, &rhs);
        let (_, d2, open2) = compare(&lhs, &oracle);
        failures += d + open + d2 + open2;
    }
    Outcome {
        failures,
        detail: "50 round trips x 64 indices, 20 meaning checks x 16 indices".into(),
    }
}

fn injective_recursion_equation() -> Outcome {
    let mut failures = 0;
    for (label, f) in [
        ("ignore-self", Arc::new(IgnoreSelf) as Program),
        ("pair-self-output", Arc::new(PairSelfOutput)),
    ] {
        let ir = injective_recursion(f.clone());
        for seed in 0..5u64 {
            let q = Stream::word_then_zeros(&word(seed, 30, 6));
            let p = word(seed + 50, 30, 6);
            let ps = Stream::word_then_zeros(&p);
            let rq = ir.r.apply(&Name::from(q.clone()));
            let lhs = eval_stream(&rq, &ps).values(16, B);
            let rhs = run(&f, &pair_stream(ir.r_name.stream(), &pair_stream(&q, &ps))).values(16, B);
            let oracle = if label == "ignore-self" {
                known(&p, 16)
            } else {
                let own = eval_stream(&ir.r_name, &q).determined_prefix(8, B);
                known(&Word::interleave(&own.0, &p[..8]).0, 16)
            };
            let (_, d, open) = compare(&lhs, &rhs);
            let (_, d2, open2) = compare(&lhs, &oracle);
            failures += d + open + d2 + open2;
            if rq.stream().determined_prefix(8, B) != eval_stream(&ir.r_name, &q).determined_prefix(8, B) {
                failures += 1;
            }
            let want = q.values(16, B);
            failures += usize::from(ir.r.extract(rq.stream()).unwrap().values(16, B) != want);
            failures += usize::from(scan_blocks(rq.stream()).values(16, B) != want);
        }
    }
    Outcome {
        failures,
        detail: "2 functionals x 5 seeds, depth 16, round trips".into(),
    }
}

fn quine_pairs_itself() -> Outcome {
    let q = quine();
    let own = q.stream().determined_prefix(64, B);
    let mut failures = usize::from(own.len() < 64);
    for seed in 0..10u64 {
        let p = word(seed, 64, 8);
        let got = eval_stream(&q, &Stream::word_then_zeros(&p)).values(128, B);
        failures += usize::from(got != known(&Word::interleave(&own.0, &p).0, 128));
    }
    Outcome {
        failures,
        detail: "10 inputs x 128 symbols".into(),
    }
}

/// Loop program whose heads follow `seq`, then stay 1.
struct Heads {
    seq: Arc<Vec<Nat>>,
    at: usize,
}

impl Heads {
    fn program(seq: &Arc<Vec<Nat>>, at: usize) -> Stream {
        let head = seq.get(at).copied().unwrap_or(1);
        loop_program(head, Arc::new(Heads { seq: seq.clone(), at }))
    }
}

impl Machine for Heads {
    fn label(&self) -> String {
        format!("heads at {}", self.at)
    }

    fn apply(&self, a: &Stream) -> Option<Stream> {
        Some(pair_stream(&Heads::program(&self.seq, self.at + 1), a))
    }
}

fn operator_coherence() -> Outcome {
    let mut failures = 0;
    for seed in 0..50u64 {
        let d = delay(seed);
        let f = Realizer::of_program(Arc::new(delay(seed)));
        let data = word(seed, 40, 9);
        let x = pair_stream(&pass_through_program(), &Stream::word_then_zeros(&data));
        let t = omega(&f, &x);
        let mut iterate = data.clone();
        for n in 0..8 {
            let comp = project(&t, n).values(16, B);
            let pw = power_n(&f, n, &x).values(16, B);
            failures += usize::from(comp != pw || comp.iter().any(Option::is_none));
            let odd: Vec<Option<Nat>> = comp.iter().skip(1).step_by(2).copied().collect();
            failures += usize::from(odd != known(&iterate, 8));
            iterate = d.approximate(&iterate, &mut Fuel::new(B)).0;
        }
        // f^[0] = id, f^[1] = <id x f>
        failures += usize::from(power_n(&f, 0, &x).values(16, B) != x.values(16, B));
        let head = first(&x).determined_prefix(8, B);
        let applied = d.approximate(&second(&x).determined_prefix(8, B).0, &mut Fuel::new(B));
        let want = known(&Word::interleave(&head.0, &applied.0[..8]).0, 16);
        failures += usize::from(power_n(&f, 1, &x).values(16, B) != want);
    }
    let ceiling = 10;
    let id = Realizer::identity();
    let mut crafted = 0;
    for seed in 0..200u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let seq: Vec<Nat> = (0..r.gen_range(1..14))
            .map(|_| if r.gen_ratio(1, 5) { 0 } else { r.gen_range(1..3) })
            .collect();
        let zero = seq.iter().position(|&h| h == 0);
        let seq = Arc::new(seq);
        let q0 = pair_stream(&Heads::program(&seq, 0), &Stream::word_then_zeros(&[seed]));
        let before = id.calls();
        let out = diamond(&id, &q0, ceiling, B);
        let calls = (id.calls() - before) as usize;
        let ok = match zero {
            Some(k) if k <= ceiling => {
                out.class == RunClass::Successful(k)
                    && calls == k
                    && out.value.as_ref().map(|v| v.values(2, B)) == Some(vec![Some(0), Some(seed)])
            }
            _ => !matches!(out.class, RunClass::Successful(_)) && out.value.is_none(),
        };
        crafted += 1;
        failures += usize::from(!ok);
    }
    Outcome {
        failures,
        detail: format!("50 seeds x 8 components x 16 indices, {crafted} head sequences"),
    }
}

fn registry(name: &str, seeds: std::ops::Range<u64>, depth: usize, undetermined_fails: bool) -> Outcome {
    let r = witness_library().check(name, seeds, depth).unwrap();
    let failures = r.refuted() + if undetermined_fails { r.undetermined() } else { 0 };
    let counters: Vec<String> = r.counters.iter().map(|(k, v)| format!("{k} {v}")).collect();
    Outcome {
        failures,
        detail: format!(
            "{name}: consistent {} refuted {} undetermined {} {}",
            r.consistent(),
            r.refuted(),
            r.undetermined(),
            counters.join(" ")
        ),
    }
}

/// Refuted share among the seeds where the constant answer is wrong.
fn negative_controls() -> Outcome {
    let mut failures = 0;
    let mut detail = Vec::new();
    type Wrong = Box<dyn Fn(u64) -> bool>;
    let controls: [(&str, Wrong); 2] = [
        // constant 1 is wrong exactly when a nonzero symbol occurs
        (
            "broken-lpo",
            Box::new(|s| matches!(Lpo.generate(s).witness, Witness::FirstNonzero(_))),
        ),
        // constant 0 is wrong exactly when 0 is excluded
        (
            "broken-c2",
            Box::new(|s| {
                let inst = C2 { always_exclude: false }.generate(s);
                let excluded = inst.public.stream.values(64, B).iter().any(|v| *v != Some(0));
                excluded && inst.witness == Witness::Value(1)
            }),
        ),
    ];
    for (name, wrong) in controls {
        let r = witness_library().check(name, 0..100, 32).unwrap();
        let applicable: Vec<u64> = (0..100).filter(|&s| wrong(s)).collect();
        let refuted = r
            .records
            .iter()
            .filter(|rec| applicable.contains(&rec.seed) && rec.verdict.is_refuted())
            .count();
        if applicable.is_empty() || refuted * 10 < applicable.len() * 9 {
            failures += 1;
        }
        detail.push(format!("{name} refuted {refuted} of {} applicable", applicable.len()));
    }
    Outcome {
        failures,
        detail: detail.join(", "),
    }
}

#[test]
fn acceptance() {
    let s = Duration::from_secs;
    let results = [
        criterion(1, "codec soundness", s(10), codec_soundness),
        criterion(2, "evaluation monotonicity", s(10), evaluation_monotonicity),
        criterion(3, "smn equation", s(30), smn_equation),
        criterion(4, "recursion fixed point", s(60), recursion_fixed_point),
        criterion(5, "injection lemma", s(60), injection_lemma),
        criterion(6, "injective recursion", s(120), injective_recursion_equation),
        criterion(7, "quine", s(5), quine_pairs_itself),
        criterion(8, "operator coherence", s(30), operator_coherence),
        criterion(9, "countable independent choice", s(120), || {
            registry("c2-loop-lift", 0..200, 32, false)
        }),
        criterion(10, "limit machine simulation", s(120), || {
            registry("limn-loop-lim", 0..100, 32, true)
        }),
        criterion(11, "monotonicity lifting", s(180), || {
            registry("c2-cn-infty", 0..50, 5, false)
        }),
        criterion(12, "negative controls", s(10), negative_controls),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, p)| !**p)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
