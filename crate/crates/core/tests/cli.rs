use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;
use type2::machine::{encode_entry, format_machine, GraphEntry};
use type2::streams::Word;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn type2(args: &[&str]) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_type2")).args(args).output().unwrap();
    Out {
        code: o.status.code().unwrap(),
        stdout: String::from_utf8(o.stdout).unwrap(),
        stderr: String::from_utf8(o.stderr).unwrap(),
    }
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `w -> w` for every word of length <= 5 over {0, 1, 2, 3}.
fn identity_file(dir: &TempDir) -> PathBuf {
    let mut words = vec![vec![]];
    let mut layer = vec![vec![]];
    for _ in 0..5 {
        layer = layer
            .iter()
            .flat_map(|w: &Vec<u64>| (0..4).map(move |x| [w.clone(), vec![x]].concat()))
            .collect();
        words.extend(layer.clone());
    }
    let entries: Vec<GraphEntry> = words.into_iter().map(|w| GraphEntry::new(w.clone(), w)).collect();
    write(dir, "id.txt", &format_machine(&entries))
}

fn line<'a>(out: &'a str, prefix: &str) -> &'a str {
    out.lines()
        .find(|l| l.starts_with(prefix))
        .unwrap_or_else(|| panic!("no `{prefix}` line in\n{out}"))
}

#[test]
fn eval_identity_machine_echoes_the_input() {
    let dir = TempDir::new().unwrap();
    let id = identity_file(&dir);
    let o = type2(&["eval", s(&id), "1", "2", "3", "zeros", "--depth", "5"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(line(&o.stdout, "output"), "output 1 2 3 0 0");
    assert_eq!(line(&o.stdout, "determined"), "determined 5 of 5");
}

#[test]
fn eval_empty_machine_determines_nothing() {
    let dir = TempDir::new().unwrap();
    let empty = write(&dir, "empty.txt", "# nothing\n");
    let o = type2(&["eval", s(&empty), "1 2 zeros", "--depth", "3", "--fuel", "10000"]);
    assert_eq!(o.code, 0);
    assert_eq!(line(&o.stdout, "output"), "output eps");
    assert_eq!(line(&o.stdout, "index"), "index 0 undetermined: fuel exhausted");
    let strict = type2(&[
        "eval",
        s(&empty),
        "1 2 zeros",
        "--depth",
        "3",
        "--fuel",
        "10000",
        "--strict",
    ]);
    assert_eq!(strict.code, 3);
}

#[test]
fn malformed_machine_line_is_named() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.txt", "0 -> 0\n\n1 2 -> x\n");
    let o = type2(&["eval", s(&bad), "1 zeros"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("line 3"), "{}", o.stderr);
    assert!(o.stdout.is_empty());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(type2(&["frobnicate"]).code, 2);
    assert_eq!(type2(&["eval"]).code, 2);
    let o = type2(&["check", "no-such-witness"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("unknown witness"));
}

#[test]
fn quine_verifies_to_depth_128() {
    let o = type2(&[
        "transform",
        "quine",
        "--verify",
        "--depth",
        "128",
        "--input",
        "5 6 7 cycle 1 2",
    ]);
    assert_eq!(o.code, 0);
    assert_eq!(line(&o.stdout, "verify"), "verify agree 128 disagree 0 undetermined 0");
}

#[test]
fn inject_then_extract_recovers_the_input() {
    let o = type2(&["transform", "inject", "--input", "4 0 2 zeros", "--depth", "40"]);
    assert_eq!(o.code, 0);
    let y = line(&o.stdout, "output ").strip_prefix("output ").unwrap().to_string();
    let back = type2(&["transform", "extract", "--input", &y, "--depth", "3"]);
    assert_eq!(back.stdout, "extracted 4 0 2\n");
}

#[test]
fn inject_round_trip_verifies() {
    let o = type2(&[
        "transform",
        "inject",
        "--input",
        "4 0 2 cycle 3",
        "--verify",
        "--depth",
        "24",
    ]);
    assert_eq!(o.code, 0);
    assert_eq!(line(&o.stdout, "verify"), "verify agree 24 disagree 0 undetermined 0");
}

#[test]
fn fix_with_a_constant_transformer_verifies() {
    // U_p maps everything to the name of the graph {eps -> 7}
    let dir = TempDir::new().unwrap();
    let c = encode_entry(&GraphEntry::new(Word::empty(), vec![7]));
    let t = write(&dir, "const.txt", &format!("eps -> {c}\n"));
    let o = type2(&["transform", "fix", s(&t), "--verify", "--depth", "3", "--fuel", "20000"]);
    assert_eq!(o.code, 0, "{}", o.stdout);
    assert_eq!(line(&o.stdout, "index 0"), "index 0 agree 7");
    assert!(line(&o.stdout, "verify").contains("disagree 0"));
}

#[test]
fn smn_verifies_on_the_identity_machine() {
    let dir = TempDir::new().unwrap();
    let id = identity_file(&dir);
    let o = type2(&[
        "transform",
        "smn",
        s(&id),
        "--q",
        "1 2 zeros",
        "--input",
        "3 0 zeros",
        "--verify",
        "--depth",
        "8",
        "--fuel",
        "20000",
    ]);
    assert_eq!(o.code, 0, "{}", o.stdout);
    // <q,p> = 1 3 2 0 0 0 ...; the finite identity graph covers five symbols
    for (i, x) in [1, 3, 2, 0, 0].iter().enumerate() {
        assert_eq!(line(&o.stdout, &format!("index {i} ")), format!("index {i} agree {x}"));
    }
}

#[test]
fn injective_recursion_verifies_both_functionals() {
    for f in ["ignore-self", "pair-self-output"] {
        let o = type2(&[
            "transform",
            "injrec",
            "--functional",
            f,
            "--q",
            "1 2 zeros",
            "--input",
            "3 4 zeros",
            "--verify",
            "--depth",
            "16",
        ]);
        assert_eq!(o.code, 0, "{f}: {}", o.stdout);
        let verifies: Vec<&str> = o.stdout.lines().filter(|l| l.starts_with("verify")).collect();
        assert_eq!(verifies, vec!["verify agree 16 disagree 0 undetermined 0"; 2], "{f}");
    }
}

#[test]
fn diamond_on_a_countdown_succeeds_at_3() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        &dir,
        "cd.txt",
        "problem id seed 0\npublic: loop countdown 3 data 2 zeros\n",
    );
    let o = type2(&["loop", "diamond", "id", s(&inst), "--validate", "--depth", "8"]);
    assert_eq!(o.code, 0);
    assert_eq!(line(&o.stdout, "class"), "class successful(3)");
    assert_eq!(line(&o.stdout, "valid "), "valid consistent");
    assert_eq!(line(&o.stdout, "calls"), "calls 3");
}

#[test]
fn diamond_past_the_ceiling_is_undetermined() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        &dir,
        "cd.txt",
        "problem id seed 0\npublic: loop countdown 5 data 2 zeros\n",
    );
    let o = type2(&["loop", "diamond", "id", s(&inst), "--steps", "2", "--strict"]);
    assert_eq!(o.code, 3);
    assert!(line(&o.stdout, "class").starts_with("class undetermined"));
}

#[test]
fn infty_on_an_llpo_loop_validates() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "llpo.txt", "problem llpo seed 0\npublic: loop seeded 3\n");
    let o = type2(&[
        "loop",
        "infty",
        "llpo",
        s(&inst),
        "--steps",
        "5",
        "--validate",
        "--depth",
        "16",
    ]);
    assert_eq!(o.code, 0);
    let steps: Vec<&str> = o.stdout.lines().filter(|l| l.starts_with("validate step")).collect();
    assert_eq!(steps.len(), 5);
    assert!(steps.iter().all(|l| l.ends_with("consistent")), "{}", o.stdout);
}

#[test]
fn power_zero_echoes_the_input() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "x.txt", "problem c2 seed 0\npublic: 1 0 0 1 zeros\n");
    let o = type2(&["loop", "power", "c2", s(&inst), "--n", "0", "--depth", "12"]);
    let input = line(&o.stdout, "input").strip_prefix("input").unwrap();
    let output = line(&o.stdout, "output").strip_prefix("output").unwrap();
    assert_eq!(input, output);
    assert_eq!(line(&o.stdout, "calls"), "calls 0");
}

#[test]
fn bad_loop_description_names_its_line() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "x.txt", "problem id seed 0\n# start\npublic: loop sideways\n");
    let o = type2(&["loop", "power", "id", s(&inst)]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("line 3"), "{}", o.stderr);
}

#[test]
fn check_exit_status_follows_refutations() {
    let ok = type2(&["check", "llpo-id"]);
    assert_eq!(ok.code, 0);
    assert!(ok.stdout.contains("summary llpo-id seeds 500 consistent 500 refuted 0"));
    let broken = type2(&["check", "broken-lpo", "--seeds", "50"]);
    assert_eq!(broken.code, 1);
    let lift = type2(&["check", "c2-loop-lift", "--seeds", "20"]);
    assert_eq!(lift.code, 0, "{}", lift.stdout);
}

#[test]
fn records_format_drops_notes() {
    let text = type2(&["check", "c2-cn", "--seeds", "5"]);
    let records = type2(&["check", "c2-cn", "--seeds", "5", "--format", "records"]);
    assert!(text.stdout.lines().any(|l| l.starts_with("note ")));
    let kept: String = text
        .stdout
        .lines()
        .filter(|l| !l.starts_with("note "))
        .map(|l| format!("{l}\n"))
        .collect();
    assert_eq!(records.stdout, kept);
}

#[test]
fn check_records_are_sorted_by_seed() {
    let o = type2(&["check", "c2-cn", "--seeds", "12", "--seed", "30"]);
    let seeds: Vec<u64> = o
        .stdout
        .lines()
        .filter(|l| l.starts_with("check "))
        .map(|l| l.split_whitespace().nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(seeds, (30..42).collect::<Vec<_>>());
}

#[test]
fn limsim_without_changes_stabilizes_without_restarts() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "lim.txt", "problem lim-n seed 4\npublic: loop lim-n 4 changes\n");
    let o = type2(&["limsim", s(&inst), "--steps", "5", "--depth", "8"]);
    assert_eq!(o.code, 0, "{}", o.stdout);
    assert_eq!(line(&o.stdout, "restarts"), "restarts 0");
    assert_eq!(line(&o.stdout, "stabilized"), "stabilized last-revision none");
    assert_eq!(line(&o.stdout, "valid "), "valid consistent");
}

#[test]
fn limsim_with_one_change_restarts_once() {
    let dir = TempDir::new().unwrap();
    let inst = write(
        &dir,
        "lim.txt",
        "problem lim-n seed 4\npublic: loop lim-n 4 changes 1:7\n",
    );
    let o = type2(&["limsim", s(&inst), "--steps", "5", "--depth", "8"]);
    assert_eq!(o.code, 0, "{}", o.stdout);
    assert_eq!(line(&o.stdout, "restarts"), "restarts 1");
    assert!(line(&o.stdout, "revise").starts_with("revise time 7 level 1 "));
    let short = type2(&["limsim", s(&inst), "--steps", "5", "--horizon", "10", "--strict"]);
    assert_eq!(short.code, 3);
    assert!(short.stdout.contains("undetermined"));
}

#[test]
fn limsim_needs_a_lim_n_instance() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "x.txt", "problem id seed 0\npublic: 1 zeros\n");
    assert_eq!(type2(&["limsim", s(&inst)]).code, 2);
}

#[test]
fn output_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let inst = write(&dir, "llpo.txt", "problem llpo seed 0\npublic: loop seeded 11\n");
    let runs: Vec<Vec<&str>> = vec![
        vec!["check", "c2-cn", "--seeds", "30"],
        vec!["check", "c2-loop-lift-unique", "--seeds", "5"],
        vec!["loop", "infty", "llpo", s(&inst), "--steps", "4", "--validate"],
        vec!["loop", "omega", "llpo", s(&inst), "--steps", "3"],
        vec!["transform", "injrec", "--seed", "9", "--verify", "--depth", "12"],
    ];
    for args in runs {
        let a = type2(&args);
        let b = type2(&args);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
        assert_eq!(a.code, b.code);
    }
}
