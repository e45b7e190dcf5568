use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dknng(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dknng")).args(args).output().expect("spawn dknng")
}

fn ok(args: &[&str]) -> String {
    let out = dknng(args);
    assert!(
        out.status.success(),
        "dknng {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn files(&self) -> Vec<String> {
        let mut v: Vec<String> = fs::read_dir(self.dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    }

    fn gen(&self, name: &str, n: usize, dims: usize, distribution: &str, seed: u64) -> PathBuf {
        let out = self.path(name);
        ok(&[
            "gen", "--output", p(&out), "--n", &n.to_string(), "--dims", &dims.to_string(),
            "--distribution", distribution, "--seed", &seed.to_string(),
        ]);
        out
    }
}

fn recall(input: &Path, reference: &Path, k: usize) -> f64 {
    let stdout = ok(&["eval", "--input", p(input), "--reference", p(reference), "--k", &k.to_string()]);
    let (_, v) = stdout.trim().split_once('=').unwrap();
    v.parse().unwrap()
}

#[test]
fn build_defaults_write_graph_and_report() {
    let w = Work::new();
    let data = w.gen("d.fvecs", 600, 8, "uniform", 1);
    let (graph, report) = (w.path("g.knng"), w.path("r.txt"));
    ok(&["build", "--input", p(&data), "--output", p(&graph), "--k", "10", "--report", p(&report)]);
    // header + ids + dists
    assert_eq!(fs::metadata(&graph).unwrap().len(), 22 + 600 * 10 * 8);
    let text = fs::read_to_string(&report).unwrap();
    for key in ["iterations=", "updates_per_iteration=", "build_secs="] {
        assert!(text.contains(key), "{text}");
    }
}

#[test]
fn build_with_k_at_least_n_fails_cleanly() {
    let w = Work::new();
    let data = w.gen("d.fvecs", 20, 4, "uniform", 1);
    let graph = w.path("g.knng");
    let out = dknng(&["build", "--input", p(&data), "--output", p(&graph), "--k", "20", "--report", p(&w.path("r"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("k=20"));
    assert_eq!(w.files(), vec!["d.fvecs".to_owned()]);
}

#[test]
fn fixed_seed_builds_are_identical() {
    let w = Work::new();
    let data = w.gen("d.fvecs", 800, 8, "gaussian", 3);
    for name in ["a.knng", "b.knng"] {
        ok(&["build", "--input", p(&data), "--output", p(&w.path(name)), "--k", "12", "--seed", "9", "--workers", "1"]);
    }
    assert_eq!(fs::read(w.path("a.knng")).unwrap(), fs::read(w.path("b.knng")).unwrap());
    let (d1, d2) = (w.gen("x.fvecs", 50, 3, "clustered:3", 4), w.gen("y.fvecs", 50, 3, "clustered:3", 4));
    assert_eq!(fs::read(d1).unwrap(), fs::read(d2).unwrap());
}

#[test]
fn distributed_build_matches_single_rank_recall() {
    let w = Work::new();
    let data = w.gen("d.fvecs", 4000, 8, "clustered:8", 5);
    let truth = w.path("truth.knng");
    ok(&["build", "--input", p(&data), "--output", p(&truth), "--k", "16", "--brute-force"]);
    let mut recalls = Vec::new();
    for ranks in ["1", "4"] {
        let g = w.path(&format!("p{ranks}.knng"));
        let groups = if ranks == "1" { "1" } else { "2" };
        ok(&[
            "build-dist", "--input", p(&data), "--output", p(&g), "--k", "16", "--ks", "16", "--ranks", ranks,
            "--groups", groups, "--seed", "2",
        ]);
        recalls.push(recall(&g, &truth, 10));
    }
    assert!(recalls[0] > 0.9, "{recalls:?}");
    assert!((recalls[0] - recalls[1]).abs() <= 0.02, "{recalls:?}");
}

#[test]
fn build_dist_report_has_exactly_the_phase_keys() {
    let w = Work::new();
    let data = w.gen("d.fvecs", 1000, 8, "uniform", 6);
    let report = w.path("r.txt");
    ok(&[
        "build-dist", "--input", p(&data), "--output", p(&w.path("g.knng")), "--k", "8", "--ranks", "4",
        "--groups", "2", "--report", p(&report), "--double-buffer",
    ]);
    let text = fs::read_to_string(&report).unwrap();
    let keys: Vec<&str> = text.lines().map(|l| l.split_once('=').unwrap().0).collect();
    assert_eq!(keys, ["phase_local", "phase_tree", "phase_merge", "phase_flat", "phase_etc"]);
}

#[test]
fn build_dist_rejects_non_power_of_two_ranks() {
    let w = Work::new();
    let data = w.gen("d.fvecs", 300, 4, "uniform", 6);
    let out = dknng(&["build-dist", "--input", p(&data), "--output", p(&w.path("g")), "--k", "8", "--ranks", "3"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("power of two"));
    assert_eq!(w.files(), vec!["d.fvecs".to_owned()]);
}

#[test]
fn search_writes_ivecs_rows() {
    let w = Work::new();
    let data = w.gen("d.fvecs", 1500, 8, "uniform", 7);
    let queries = w.gen("q.fvecs", 40, 8, "uniform", 8);
    let (graph, sg, res) = (w.path("g.knng"), w.path("g.sg"), w.path("r.ivecs"));
    ok(&[
        "build", "--input", p(&data), "--output", p(&graph), "--k", "16", "--out-degree", "12", "--search-graph", p(&sg),
    ]);
    for g in [&graph, &sg] {
        ok(&["search", "--input", p(&data), "--graph", p(g), "--queries", p(&queries), "--output", p(&res), "--ks", "5"]);
        let bytes = fs::read(&res).unwrap();
        assert_eq!(bytes.len(), 40 * (4 + 5 * 4));
        assert_eq!(i32::from_le_bytes(bytes[..4].try_into().unwrap()), 5);
    }
    // Querying with the data points themselves finds each point first.
    ok(&["search", "--input", p(&data), "--graph", p(&sg), "--queries", p(&data), "--output", p(&res), "--ks", "1"]);
    let bytes = fs::read(&res).unwrap();
    let hits = bytes
        .chunks_exact(8)
        .enumerate()
        .filter(|(i, row)| i32::from_le_bytes(row[4..].try_into().unwrap()) == *i as i32)
        .count();
    assert!(hits as f64 >= 0.99 * 1500.0, "{hits}");
}

#[test]
fn eval_modes() {
    let w = Work::new();
    let data = w.gen("d.fvecs", 700, 6, "uniform", 9);
    let (truth, approx) = (w.path("t.knng"), w.path("a.knng"));
    ok(&["build", "--input", p(&data), "--output", p(&truth), "--k", "10", "--brute-force"]);
    ok(&["build", "--input", p(&data), "--output", p(&approx), "--k", "10", "--max-iters", "1"]);
    assert_eq!(recall(&truth, &truth, 10), 1.0);
    let r = recall(&approx, &truth, 10);
    assert!(r < 1.0);
    let stdout = ok(&["eval", "--input", p(&approx), "--reference", p(&truth), "--eval-mode", "threshold"]);
    let thr: f64 = stdout.trim().split_once('=').unwrap().1.parse().unwrap();
    assert!(thr >= r, "threshold recall {thr} below recall {r}");
}

#[test]
fn gen_shifted_copies() {
    let w = Work::new();
    let base = w.gen("b.fvecs", 30, 2, "uniform", 1);
    let out = w.path("s.fvecs");
    ok(&["gen", "--input", p(&base), "--output", p(&out), "--copies", "2", "--epsilon", "0.25"]);
    assert_eq!(fs::metadata(&out).unwrap().len(), 2 * fs::metadata(&base).unwrap().len());
    assert!(!dknng(&["gen", "--output", p(&w.path("x.fvecs")), "--copies", "2"]).status.success());
    assert!(!dknng(&["gen", "--output", p(&w.path("x.bvecs"))]).status.success());
    assert!(!w.path("x.bvecs").exists());
}

#[test]
fn predict_table_and_rows() {
    let w = Work::new();
    let rows = w.path("rows.csv");
    let stdout = ok(&[
        "predict", "--n", "1e6", "--search-cost", "1e-6", "--alpha", "1e-5", "--beta", "1e-8", "--max-ranks", "8",
        "--output", p(&rows),
    ]);
    assert!(stdout.lines().next().unwrap().contains("total"));
    let text = fs::read_to_string(&rows).unwrap();
    // P in {2,4,8} with M in 1..=P: 2 + 3 + 4 rows plus header.
    assert_eq!(text.lines().count(), 10);
    assert!(text.lines().nth(1).unwrap().starts_with("2,1,"));
}

#[test]
fn malformed_input_is_rejected() {
    let w = Work::new();
    let bad = w.path("bad.fvecs");
    fs::write(&bad, [3u8, 0, 0, 0, 0, 0, 128, 63]).unwrap();
    let out = dknng(&["build", "--input", p(&bad), "--output", p(&w.path("g.knng")), "--k", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncated"));
    assert_eq!(w.files(), vec!["bad.fvecs".to_owned()]);
}
