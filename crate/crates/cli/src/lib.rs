//! Argument parsing and subcommand drivers for the `dknng` binary.
//!
//! Every subcommand stages its outputs next to their destinations and
//! renames them into place only after all of them were produced, so a
//! failing run leaves no partial files behind.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dknng::evalio::{
    brute_force_knng, distance_threshold_recall, gen_random_dataset, read_vecs, recall_at_k,
    synth_shifted_copies, write_vecs, Distribution, Report,
};
use dknng::nndescent::nn_descent_with_stats;
use dknng::refine::{predicted_runtime, CostModel, SearchCostMode};
use dknng::wire::{
    decode_knng, decode_search_graph, encode_knng, encode_search_graph, RegionHeader, RegionKind,
};
use dknng::{
    ann_search, build_distributed, optimize_graph, with_workers, Dataset, Element, IdSpace, KnnGraph,
    Metric, NnDescentParams, RefineConfig, SearchGraph, SearchParams,
};

#[derive(Parser, Clone, Debug, PartialEq)]
#[command(name = "dknng", version, about = "Approximate kNN graph construction, refinement and search")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq)]
pub enum Command {
    /// Single-partition NN-Descent build (or exact brute force).
    Build(BuildArgs),
    /// Distributed build over simulated ranks.
    BuildDist(BuildDistArgs),
    /// Greedy search of a graph with a query file; writes ids as ivecs.
    Search(SearchCmdArgs),
    /// Recall of one graph file against a reference graph file.
    Eval(EvalArgs),
    /// Synthetic dataset generation.
    Gen(GenArgs),
    /// Predicted refinement runtime over a range of rank and group counts.
    Predict(PredictArgs),
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct CommonArgs {
    #[arg(long, default_value_t = Metric::L2)]
    pub metric: Metric,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Write a key=value metrics report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct NnArgs {
    #[arg(long, default_value_t = 32)]
    pub k: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Candidate buffer slots per point; 0 means 2k.
    #[arg(long, default_value_t = 0)]
    pub candidate_capacity: usize,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct SearchArgs {
    /// Results per query.
    #[arg(long, default_value_t = 10)]
    pub ks: usize,
    /// Beam width; 0 means max(64, ks).
    #[arg(long, default_value_t = 0)]
    pub beam: usize,
    #[arg(long, default_value_t = 64)]
    pub entry_points: usize,
    /// Expansion limit per query; 0 means 4 * beam.
    #[arg(long, default_value_t = 0)]
    pub max_hops: usize,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct BuildArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub nn: NnArgs,
    /// Also write an optimized search graph with this out-degree.
    #[arg(long, requires = "search_graph")]
    pub out_degree: Option<usize>,
    #[arg(long)]
    pub search_graph: Option<PathBuf>,
    /// Exact brute-force graph instead of NN-Descent.
    #[arg(long)]
    pub brute_force: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct BuildDistArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub nn: NnArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 4)]
    pub ranks: usize,
    #[arg(long, default_value_t = 2)]
    pub groups: usize,
    /// Search-graph out-degree; 0 means k.
    #[arg(long, default_value_t = 0)]
    pub out_degree: usize,
    #[arg(long)]
    pub skip_tree: bool,
    #[arg(long)]
    pub double_buffer: bool,
    /// Skip the tree phase when a merged group would exceed this many bytes.
    #[arg(long)]
    pub memory_budget: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct SearchCmdArgs {
    /// Dataset the graph was built over.
    #[arg(long)]
    pub input: PathBuf,
    /// kNN graph or search graph file.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Out-degree used when `--graph` holds a kNN graph; 0 means k.
    #[arg(long, default_value_t = 0)]
    pub out_degree: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Recall,
    Threshold,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Number of leading neighbors compared.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = EvalMode::Recall)]
    pub eval_mode: EvalMode,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct GenArgs {
    #[arg(long)]
    pub output: PathBuf,
    /// Shift-copy this dataset instead of sampling a new one.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 16)]
    pub dims: usize,
    #[arg(long, default_value_t = Distribution::Uniform)]
    pub distribution: Distribution,
    #[arg(long, default_value_t = 1)]
    pub copies: usize,
    #[arg(long, required_if_eq_any([("copies", "2"), ("copies", "3")]))]
    pub epsilon: Option<f32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Clone, Debug, PartialEq)]
pub struct PredictArgs {
    /// Total number of points.
    #[arg(long)]
    pub n: f64,
    /// Seconds per query.
    #[arg(long)]
    pub search_cost: f64,
    #[arg(long)]
    pub alpha: f64,
    /// Seconds per transferred point.
    #[arg(long)]
    pub beta: f64,
    #[arg(long, default_value_t = 2)]
    pub min_ranks: usize,
    #[arg(long, default_value_t = 1024)]
    pub max_ranks: usize,
    /// Scale the per-query cost with log2 of the per-rank point count.
    #[arg(long)]
    pub log_search: bool,
    /// Machine-readable rows (`ranks,groups,tree,merge,flat,total`).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn flag(out: &mut Vec<String>, name: &str, value: impl ToString) {
    out.push(format!("--{name}"));
    out.push(value.to_string());
}

fn path_flag(out: &mut Vec<String>, name: &str, value: &Path) {
    flag(out, name, value.display());
}

fn switch(out: &mut Vec<String>, name: &str, on: bool) {
    if on {
        out.push(format!("--{name}"));
    }
}

impl CommonArgs {
    fn push_args(&self, out: &mut Vec<String>) {
        flag(out, "metric", self.metric);
        flag(out, "seed", self.seed);
        flag(out, "workers", self.workers);
        if let Some(p) = &self.report {
            path_flag(out, "report", p);
        }
    }
}

impl NnArgs {
    fn push_args(&self, out: &mut Vec<String>) {
        flag(out, "k", self.k);
        flag(out, "delta", self.delta);
        flag(out, "rho", self.rho);
        flag(out, "max-iters", self.max_iters);
        flag(out, "candidate-capacity", self.candidate_capacity);
    }

    fn params(&self, seed: u64, workers: usize) -> NnDescentParams {
        let mut p = NnDescentParams::new(self.k);
        p.delta = self.delta;
        p.rho = self.rho;
        p.max_iters = self.max_iters;
        if self.candidate_capacity > 0 {
            p.candidate_capacity = self.candidate_capacity;
        }
        p.seed = seed;
        p.workers = workers;
        p
    }
}

impl SearchArgs {
    fn push_args(&self, out: &mut Vec<String>) {
        flag(out, "ks", self.ks);
        flag(out, "beam", self.beam);
        flag(out, "entry-points", self.entry_points);
        flag(out, "max-hops", self.max_hops);
    }

    fn params(&self, seed: u64) -> SearchParams {
        let mut p = SearchParams::new(self.ks);
        if self.beam > 0 {
            p = p.with_beam(self.beam);
        }
        if self.max_hops > 0 {
            p.max_hops = self.max_hops;
        }
        p.num_entry_points = self.entry_points;
        p.seed = seed;
        p
    }
}

impl RunConfig {
    /// Textual form: arguments that parse back into an equal config.
    pub fn to_args(&self) -> Vec<String> {
        let mut out = vec!["dknng".to_owned()];
        match &self.command {
            Command::Build(a) => {
                out.push("build".into());
                path_flag(&mut out, "input", &a.input);
                path_flag(&mut out, "output", &a.output);
                a.nn.push_args(&mut out);
                if let Some(d) = a.out_degree {
                    flag(&mut out, "out-degree", d);
                }
                if let Some(p) = &a.search_graph {
                    path_flag(&mut out, "search-graph", p);
                }
                switch(&mut out, "brute-force", a.brute_force);
                a.common.push_args(&mut out);
            }
            Command::BuildDist(a) => {
                out.push("build-dist".into());
                path_flag(&mut out, "input", &a.input);
                path_flag(&mut out, "output", &a.output);
                a.nn.push_args(&mut out);
                a.search.push_args(&mut out);
                flag(&mut out, "ranks", a.ranks);
                flag(&mut out, "groups", a.groups);
                flag(&mut out, "out-degree", a.out_degree);
                switch(&mut out, "skip-tree", a.skip_tree);
                switch(&mut out, "double-buffer", a.double_buffer);
                if let Some(b) = a.memory_budget {
                    flag(&mut out, "memory-budget", b);
                }
                a.common.push_args(&mut out);
            }
            Command::Search(a) => {
                out.push("search".into());
                path_flag(&mut out, "input", &a.input);
                path_flag(&mut out, "graph", &a.graph);
                path_flag(&mut out, "queries", &a.queries);
                path_flag(&mut out, "output", &a.output);
                a.search.push_args(&mut out);
                flag(&mut out, "out-degree", a.out_degree);
                a.common.push_args(&mut out);
            }
            Command::Eval(a) => {
                out.push("eval".into());
                path_flag(&mut out, "input", &a.input);
                path_flag(&mut out, "reference", &a.reference);
                flag(&mut out, "k", a.k);
                let mode = a.eval_mode.to_possible_value().expect("no skipped variants");
                flag(&mut out, "eval-mode", mode.get_name());
                if let Some(p) = &a.report {
                    path_flag(&mut out, "report", p);
                }
            }
            Command::Gen(a) => {
                out.push("gen".into());
                path_flag(&mut out, "output", &a.output);
                if let Some(p) = &a.input {
                    path_flag(&mut out, "input", p);
                }
                flag(&mut out, "n", a.n);
                flag(&mut out, "dims", a.dims);
                flag(&mut out, "distribution", a.distribution);
                flag(&mut out, "copies", a.copies);
                if let Some(e) = a.epsilon {
                    flag(&mut out, "epsilon", e);
                }
                flag(&mut out, "seed", a.seed);
            }
            Command::Predict(a) => {
                out.push("predict".into());
                flag(&mut out, "n", a.n);
                flag(&mut out, "search-cost", a.search_cost);
                flag(&mut out, "alpha", a.alpha);
                flag(&mut out, "beta", a.beta);
                flag(&mut out, "min-ranks", a.min_ranks);
                flag(&mut out, "max-ranks", a.max_ranks);
                switch(&mut out, "log-search", a.log_search);
                if let Some(p) = &a.output {
                    path_flag(&mut out, "output", p);
                }
            }
        }
        out
    }
}

/// Output files written to `.<name>.partial` siblings first; [`Outputs::commit`]
/// renames them all into place. Dropping uncommitted outputs removes them.
#[derive(Default)]
struct Outputs {
    staged: Vec<(PathBuf, PathBuf)>,
}

impl Outputs {
    fn stage(&mut self, dest: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let name = dest
            .file_name()
            .with_context(|| format!("{}: not a file path", dest.display()))?;
        let mut tmp_name = OsString::from(".");
        tmp_name.push(name);
        tmp_name.push(".partial");
        let tmp = dest.with_file_name(tmp_name);
        self.staged.push((tmp.clone(), dest.to_owned()));
        write(&tmp).with_context(|| format!("writing {}", dest.display()))
    }

    fn stage_bytes(&mut self, dest: &Path, bytes: &[u8]) -> Result<()> {
        self.stage(dest, |tmp| Ok(fs::write(tmp, bytes)?))
    }

    fn commit(mut self) -> Result<()> {
        for (tmp, dest) in std::mem::take(&mut self.staged) {
            fs::rename(&tmp, &dest).with_context(|| format!("moving output into {}", dest.display()))?;
        }
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        for (tmp, _) in &self.staged {
            let _ = fs::remove_file(tmp);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FileElem {
    F32,
    U8,
}

fn file_elem(path: &Path) -> Result<FileElem> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("fvecs") => Ok(FileElem::F32),
        Some("bvecs") => Ok(FileElem::U8),
        _ => bail!("{}: expected a .fvecs or .bvecs file", path.display()),
    }
}

/// Calls `$body` with `$T` bound to the element type of the vecs file `$path`.
macro_rules! with_elem {
    ($path:expr, |$T:ident| $body:expr) => {
        match file_elem($path)? {
            FileElem::F32 => {
                type $T = f32;
                $body
            }
            FileElem::U8 => {
                type $T = u8;
                $body
            }
        }
    };
}

fn load<T: Element>(path: &Path, metric: Metric) -> Result<Dataset<T>> {
    let ds = read_vecs::<T>(path, metric).with_context(|| format!("reading {}", path.display()))?;
    if ds.is_empty() {
        bail!("{}: no vectors", path.display());
    }
    Ok(ds)
}

fn load_knng(path: &Path) -> Result<KnnGraph> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_knng(&bytes, IdSpace::Global).with_context(|| format!("decoding {}", path.display()))
}

fn write_report(outputs: &mut Outputs, path: Option<&Path>, report: &Report) -> Result<()> {
    match path {
        Some(p) => outputs.stage_bytes(p, report.render().as_bytes()),
        None => Ok(()),
    }
}

/// Parses `args` and runs the selected subcommand.
pub fn run_from<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cfg = RunConfig::try_parse_from(args)?;
    run(&cfg)
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    match &cfg.command {
        Command::Build(a) => with_workers(a.common.workers, || with_elem!(&a.input, |T| cmd_build::<T>(a)))?,
        Command::BuildDist(a) => {
            with_workers(a.common.workers, || with_elem!(&a.input, |T| cmd_build_dist::<T>(a)))?
        }
        Command::Search(a) => with_workers(a.common.workers, || with_elem!(&a.input, |T| cmd_search::<T>(a)))?,
        Command::Eval(a) => cmd_eval(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Predict(a) => cmd_predict(a),
    }
}

fn cmd_build<T: Element>(a: &BuildArgs) -> Result<()> {
    let ds = load::<T>(&a.input, a.common.metric)?;
    if a.nn.k >= ds.len() {
        bail!("k={} must be smaller than the number of points ({})", a.nn.k, ds.len());
    }
    let mut report = Report::new();
    let start = Instant::now();
    let graph = if a.brute_force {
        brute_force_knng(&ds, a.nn.k)?.graph
    } else {
        let out = nn_descent_with_stats(&ds, &a.nn.params(a.common.seed, a.common.workers))?;
        report.push("iterations", out.iterations);
        let updates: Vec<String> = out.updates.iter().map(u64::to_string).collect();
        report.push("updates_per_iteration", updates.join(","));
        report.push("converged", out.converged);
        out.graph
    };
    report.push("build_secs", start.elapsed().as_secs_f64());
    let graph = graph.with_id_space(IdSpace::Global);

    let mut outputs = Outputs::default();
    if let (Some(degree), Some(path)) = (a.out_degree, &a.search_graph) {
        let t = Instant::now();
        let sg = optimize_graph(&graph, ds.view(), degree)?;
        report.push("optimize_secs", t.elapsed().as_secs_f64());
        outputs.stage_bytes(path, &encode_search_graph(&sg))?;
    }
    outputs.stage_bytes(&a.output, &encode_knng(&graph))?;
    write_report(&mut outputs, a.common.report.as_deref(), &report)?;
    outputs.commit()
}

fn cmd_build_dist<T: Element>(a: &BuildDistArgs) -> Result<()> {
    let ds = load::<T>(&a.input, a.common.metric)?;
    let mut cfg = RefineConfig::new(a.ranks, a.groups, a.nn.k);
    cfg.nn = a.nn.params(a.common.seed, a.common.workers);
    cfg.search = a.search.params(a.common.seed);
    cfg.k_s = a.search.ks;
    cfg.out_degree = if a.out_degree == 0 { a.nn.k } else { a.out_degree };
    cfg.skip_tree_phase = a.skip_tree;
    cfg.double_buffer = a.double_buffer;
    cfg.memory_budget = a.memory_budget;
    cfg.seed = a.common.seed;
    let built = build_distributed(&ds, &cfg)?;

    let mut report = Report::new();
    for (name, secs) in built.times.as_pairs() {
        report.push(&format!("phase_{name}"), secs);
    }
    let mut outputs = Outputs::default();
    outputs.stage_bytes(&a.output, &encode_knng(&built.graph))?;
    write_report(&mut outputs, a.common.report.as_deref(), &report)?;
    outputs.commit()
}

fn cmd_search<T: Element>(a: &SearchCmdArgs) -> Result<()> {
    let ds = load::<T>(&a.input, a.common.metric)?;
    let queries = load::<T>(&a.queries, a.common.metric)?;
    let bytes = fs::read(&a.graph).with_context(|| format!("reading {}", a.graph.display()))?;
    let header = RegionHeader::parse(&bytes).with_context(|| format!("decoding {}", a.graph.display()))?;
    let sg: SearchGraph = match header.kind {
        RegionKind::SearchGraph => decode_search_graph(&bytes, IdSpace::Local)?,
        RegionKind::Knng => {
            let g = decode_knng(&bytes, IdSpace::Local)?;
            let degree = if a.out_degree == 0 { g.k() } else { a.out_degree };
            if g.num_sources() != ds.len() {
                bail!("graph has {} rows but the dataset has {} points", g.num_sources(), ds.len());
            }
            optimize_graph(&g, ds.view(), degree)?
        }
        other => bail!("{}: expected a graph, found a {other:?} region", a.graph.display()),
    };
    let params = a.search.params(a.common.seed);
    let start = Instant::now();
    let res = ann_search(queries.view(), &sg, ds.view(), &params)?;
    let secs = start.elapsed().as_secs_f64();

    let ids: Vec<i32> = res.ids.iter().map(|&i| i as i32).collect();
    let table = Dataset::new(ids, res.k_s, Metric::L2)?;
    let mut report = Report::new();
    report.push("queries", res.num_queries);
    report.push("search_secs", secs);
    report.push("queries_per_sec", res.num_queries as f64 / secs.max(f64::MIN_POSITIVE));
    let mut outputs = Outputs::default();
    outputs.stage(&a.output, |tmp| Ok(write_vecs(&table, tmp)?))?;
    write_report(&mut outputs, a.common.report.as_deref(), &report)?;
    outputs.commit()
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let test = load_knng(&a.input)?;
    let reference = load_knng(&a.reference)?;
    let (key, value) = match a.eval_mode {
        EvalMode::Recall => (format!("recall_at_{}", a.k), recall_at_k(&test, &reference, a.k)?),
        EvalMode::Threshold => {
            (format!("threshold_recall_at_{}", a.k), distance_threshold_recall(&test, &reference, a.k)?)
        }
    };
    println!("{key}={value}");
    let mut report = Report::new();
    report.push(&key, value);
    let mut outputs = Outputs::default();
    write_report(&mut outputs, a.report.as_deref(), &report)?;
    outputs.commit()
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    if file_elem(&a.output)? != FileElem::F32 {
        bail!("{}: generated data is f32; use a .fvecs output", a.output.display());
    }
    let base: Dataset<f32> = match &a.input {
        Some(p) => load(p, Metric::L2)?,
        None => gen_random_dataset(a.n, a.dims, a.distribution, a.seed)?,
    };
    let ds = match (a.copies, a.epsilon) {
        (1, _) => base,
        (c, Some(eps)) => synth_shifted_copies(&base, c, eps)?,
        (_, None) => bail!("--epsilon is required when --copies is above 1"),
    };
    let mut outputs = Outputs::default();
    outputs.stage(&a.output, |tmp| Ok(write_vecs(&ds, tmp)?))?;
    outputs.commit()
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let mut cm = CostModel::new(a.search_cost, a.alpha, a.beta)?;
    if a.log_search {
        cm = cm.with_mode(SearchCostMode::Logarithmic);
    }
    if !a.min_ranks.is_power_of_two() || !a.max_ranks.is_power_of_two() || a.min_ranks > a.max_ranks {
        bail!("--min-ranks and --max-ranks must be powers of two with min <= max");
    }
    let mut text = format!("{:>6} {:>6} {:>14} {:>14} {:>14} {:>14}\n", "P", "M", "tree", "merge", "flat", "total");
    let mut rows = String::from("ranks,groups,tree,merge,flat,total\n");
    let mut p = a.min_ranks;
    while p <= a.max_ranks {
        let mut m = 1;
        while m <= p {
            let r = predicted_runtime(&cm, a.n, p, m)?;
            text += &format!("{p:>6} {m:>6} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}\n", r.tree, r.merge, r.flat, r.total);
            rows += &format!("{p},{m},{:e},{:e},{:e},{:e}\n", r.tree, r.merge, r.flat, r.total);
            m *= 2;
        }
        p *= 2;
    }
    print!("{text}");
    let mut outputs = Outputs::default();
    if let Some(path) = &a.output {
        outputs.stage_bytes(path, rows.as_bytes())?;
    }
    outputs.commit()
}
