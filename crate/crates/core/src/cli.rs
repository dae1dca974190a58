//! Command-line front end: `prepare`, `synth`, `train`, `eval`, `recommend`.
//!
//! Exit codes: 0 success, 1 internal error, 2 bad input or usage.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::{ItemKnn, Pop, SPop, TailNetProportion};
use crate::error::{Error, Result};
use crate::eval::{evaluate, topk, MetricsReport, Recommender, DEFAULT_KS};
use crate::ingest::{
    gen_synthetic, load_dataset, parse_events, preprocess, save_dataset, write_events, Dataset, PreprocessConfig,
    SynthConfig, SECONDS_PER_DAY,
};
use crate::model::{predict, TailNet};
use crate::train::{load_checkpoint, save_checkpoint, train_with, Checkpoint, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Cut-offs for every metric.
    pub ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { ks: DEFAULT_KS.to_vec() }
    }
}

/// Every setting of every subcommand. Resolved as built-in defaults, then
/// the `--config` file, then command-line flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl RunConfig {
    /// Reads a JSON object (possibly partial) or `key = value` lines.
    ///
    /// Keys may be qualified (`train.seed`) or bare when only one section
    /// has a field of that name (`lr` is not an alias; use `learning_rate`).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut base = serde_json::to_value(RunConfig::default()).expect("config serializes");
        let overlay = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config JSON: {e}")))?
        } else {
            key_values_to_json(text, &base)?
        };
        merge(&mut base, overlay);
        serde_json::from_value(base).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn key_values_to_json(text: &str, defaults: &Value) -> Result<Value> {
    let sections = defaults.as_object().expect("config is an object");
    let mut out = serde_json::Map::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let (section, field) = match key.split_once('.') {
            Some((s, f)) => (Some(s.to_string()), f.to_string()),
            None if sections.contains_key(key) && !sections[key].is_object() => (None, key.to_string()),
            None => {
                let owners: Vec<&String> = sections
                    .iter()
                    .filter(|(_, v)| v.get(key).is_some())
                    .map(|(k, _)| k)
                    .collect();
                match owners.as_slice() {
                    [one] => (Some((*one).clone()), key.to_string()),
                    [] => return Err(Error::Config(format!("config line {}: unknown key {key:?}", lineno + 1))),
                    many => {
                        let names: Vec<String> = many.iter().map(|s| format!("{s}.{key}")).collect();
                        return Err(Error::Config(format!(
                            "config line {}: {key:?} is ambiguous; use one of {}",
                            lineno + 1,
                            names.join(", ")
                        )));
                    }
                }
            }
        };
        let template = match &section {
            Some(s) => sections.get(s).and_then(|v| v.get(&field)),
            None => sections.get(&field),
        };
        let parsed = parse_value(value, template);
        match section {
            Some(s) => {
                let entry = out.entry(s).or_insert_with(|| Value::Object(Default::default()));
                match entry {
                    Value::Object(m) => {
                        m.insert(field, parsed);
                    }
                    _ => return Err(Error::Config(format!("config line {}: {key:?} is not a section", lineno + 1))),
                }
            }
            None => {
                out.insert(field, parsed);
            }
        }
    }
    Ok(Value::Object(out))
}

fn parse_value(raw: &str, template: Option<&Value>) -> Value {
    if let Some(Value::Array(_)) = template {
        if !raw.starts_with('[') {
            return Value::Array(raw.split(',').map(|p| parse_value(p.trim(), None)).collect());
        }
    }
    if let Some(Value::String(_)) = template {
        return Value::String(raw.to_string());
    }
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

#[derive(Parser, Debug)]
#[command(
    name = "tailnet",
    version,
    about = "Long-tail aware session-based recommendation",
    args_override_self = true
)]
pub struct Cli {
    /// JSON or key = value file with settings; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Preprocess a click log into a dataset file.
    Prepare(PrepareArgs),
    /// Write a synthetic Zipf click log.
    Synth(SynthArgs),
    /// Train a model and write the selected checkpoint.
    Train(TrainArgs),
    /// Evaluate a model or baseline on the test split.
    Eval(EvalArgs),
    /// Recommend items for one session.
    Recommend(RecommendArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub min_item_support: Option<u64>,
    #[arg(long)]
    pub min_session_len: Option<usize>,
    #[arg(long)]
    pub max_session_len: Option<usize>,
    #[arg(long)]
    pub head_fraction: Option<f64>,
    /// Length of the test window, in days.
    #[arg(long)]
    pub test_days: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub sessions: Option<usize>,
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub zipf: Option<f64>,
    #[arg(long)]
    pub mean_len: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Train without the preference mechanism.
    #[arg(long)]
    pub no_pm: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Tailnet,
    TailnetProportion,
    Pop,
    Spop,
    Itemknn,
}

impl Method {
    fn label(self) -> &'static str {
        match self {
            Method::Tailnet => "tailnet",
            Method::TailnetProportion => "tailnet-proportion",
            Method::Pop => "pop",
            Method::Spop => "spop",
            Method::Itemknn => "itemknn",
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint; required by the tailnet methods.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tailnet")]
    pub method: Method,
    /// Comma-separated cut-offs.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Where to write the CSV report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RecommendArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated item ids, oldest first.
    #[arg(long)]
    pub session: String,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, stdout: &mut (dyn Write + Send), stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = if e.use_stderr() { e.render().to_string() } else { e.to_string() };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { &mut *stdout };
            let _ = write!(sink, "{text}");
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_user_error() {
                2
            } else {
                1
            }
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    match &cli.command {
        Command::Prepare(a) => {
            let p = &mut cfg.preprocess;
            set(&mut p.min_item_support, a.min_item_support);
            set(&mut p.min_session_len, a.min_session_len);
            set(&mut p.max_session_len, a.max_session_len);
            set(&mut p.head_fraction, a.head_fraction);
            if let Some(days) = a.test_days {
                if !(days.is_finite() && days > 0.0) {
                    return Err(Error::Config(format!("--test-days must be positive, got {days}")));
                }
                p.test_window_seconds = (days * SECONDS_PER_DAY as f64).round() as i64;
            }
        }
        Command::Synth(a) => {
            let s = &mut cfg.synth;
            set(&mut s.num_sessions, a.sessions);
            set(&mut s.num_items, a.items);
            set(&mut s.zipf_exponent, a.zipf);
            set(&mut s.mean_len, a.mean_len);
            set(&mut s.seed, a.seed);
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            set(&mut t.d, a.d);
            set(&mut t.learning_rate, a.lr);
            set(&mut t.batch_size, a.batch);
            set(&mut t.epochs, a.epochs);
            set(&mut t.l2, a.l2);
            set(&mut t.seed, a.seed);
            set(&mut t.early_stop_patience, a.patience);
            if a.no_pm {
                t.use_pm = false;
            }
        }
        Command::Eval(a) => {
            if let Some(ks) = &a.k {
                cfg.eval.ks = ks.clone();
            }
        }
        Command::Recommend(_) => {}
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn execute(cli: Cli, out: &mut (dyn Write + Send)) -> Result<()> {
    let cfg = resolve(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Prepare(a) => cmd_prepare(a, &cfg, out),
        Command::Synth(a) => cmd_synth(a, &cfg, out),
        Command::Train(a) => cmd_train(a, &cfg, out),
        Command::Eval(a) => cmd_eval(a, &cfg, out),
        Command::Recommend(a) => cmd_recommend(a, out),
    })
}

fn cmd_prepare(a: &PrepareArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let file = File::open(&a.input)?;
    let parsed = parse_events(file)?;
    if parsed.events.is_empty() {
        return Err(Error::Data(format!("no events parsed from {}", a.input.display())));
    }
    let (ds, stats) = preprocess(&parsed.events, &cfg.preprocess)?;
    save_dataset(&ds, &a.out)?;
    let cat = &ds.catalog;
    writeln!(out, "events: {} ({} malformed rows skipped)", stats.raw_events, parsed.malformed)?;
    writeln!(out, "sessions: {} raw, {} kept", stats.raw_sessions, stats.kept_sessions)?;
    writeln!(out, "items: {}", cat.len())?;
    writeln!(out, "head items: {}", cat.num_head())?;
    writeln!(out, "tail items: {}", cat.num_tail())?;
    writeln!(out, "train: {} sessions, {} pairs", stats.train_sessions, ds.train.len())?;
    writeln!(
        out,
        "valid: {} sessions, {} pairs ({} dropped)",
        stats.valid_sessions,
        ds.valid.len(),
        stats.dropped_valid_pairs
    )?;
    writeln!(
        out,
        "test: {} sessions, {} pairs ({} dropped)",
        stats.test_sessions,
        ds.test.len(),
        stats.dropped_test_pairs
    )?;
    writeln!(out, "# config={}", cfg.to_json())?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let events = gen_synthetic(&cfg.synth)?;
    let mut body = Vec::new();
    writeln!(body, "# config={}", cfg.to_json())?;
    write_events(&mut body, &events)?;
    write_atomic(&a.out, &body)?;
    writeln!(out, "wrote {} events to {}", events.len(), a.out.display())?;
    Ok(())
}

fn cmd_train(a: &TrainArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    writeln!(out, "# config={}", cfg.to_json())?;
    writeln!(out, "epoch,train_loss,valid_mrr20")?;
    let mut io_err = None;
    let outcome = train_with(&ds, &cfg.train, |s| {
        if let Err(e) = writeln!(out, "{},{},{}", s.epoch, s.train_loss, s.valid_mrr) {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let cp = &outcome.checkpoint;
    save_checkpoint(cp, &a.out)?;
    writeln!(out, "# selected epoch {} (valid MRR@20 {})", cp.epoch, cp.best_valid_mrr)?;
    Ok(())
}

fn load_model_for(ds: &Dataset, path: Option<&Path>) -> Result<Checkpoint> {
    let path = path.ok_or_else(|| Error::Usage("--model is required for this method".into()))?;
    let cp = load_checkpoint(path)?;
    if cp.catalog != ds.catalog {
        return Err(Error::Data(format!(
            "checkpoint {} was trained on a different item catalog",
            path.display()
        )));
    }
    Ok(cp)
}

fn cmd_eval(a: &EvalArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let ks = &cfg.eval.ks;
    let label = a.method.label();
    let run = |r: &dyn RecommenderDyn| -> Result<MetricsReport> { r.evaluate(label, &ds, ks) };
    let report = match a.method {
        Method::Tailnet => {
            let cp = load_model_for(&ds, a.model.as_deref())?;
            run(&TailNet {
                params: &cp.params,
                catalog: &cp.catalog,
                use_pm: cp.config.use_pm,
            })?
        }
        Method::TailnetProportion => {
            let cp = load_model_for(&ds, a.model.as_deref())?;
            run(&TailNetProportion {
                params: &cp.params,
                catalog: &cp.catalog,
            })?
        }
        Method::Pop => run(&Pop::new(&ds.catalog))?,
        Method::Spop => run(&SPop::new(&ds.catalog))?,
        Method::Itemknn => {
            let sessions = ds.train_sessions();
            run(&ItemKnn::build(ds.catalog.len(), sessions.iter().map(|s| s.as_slice()))?)?
        }
    };
    if let Some(path) = &a.out {
        let csv = format!("# config={}\n{}", cfg.to_json(), report.to_csv());
        write_atomic(path, csv.as_bytes())?;
    }
    write!(out, "{}", report.to_table())?;
    Ok(())
}

/// Object-safe bridge so `cmd_eval` can treat every method alike.
trait RecommenderDyn {
    fn evaluate(&self, label: &str, ds: &Dataset, ks: &[usize]) -> Result<MetricsReport>;
}

impl<R: Recommender> RecommenderDyn for R {
    fn evaluate(&self, label: &str, ds: &Dataset, ks: &[usize]) -> Result<MetricsReport> {
        evaluate(label, self, &ds.test, &ds.catalog, ks)
    }
}

fn cmd_recommend(a: &RecommendArgs, out: &mut dyn Write) -> Result<()> {
    let cp = load_checkpoint(&a.model)?;
    let session = a
        .session
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|id| {
            cp.catalog
                .index_of(id)
                .ok_or_else(|| Error::Usage(format!("unknown item id {id:?}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    if session.is_empty() {
        return Err(Error::Usage("--session must name at least one item".into()));
    }
    if a.k == 0 {
        return Err(Error::Usage("--k must be positive".into()));
    }
    let pred = predict(&cp.params, &cp.catalog, &session, cp.config.use_pm)?;
    for (rank, &i) in topk(&pred.adjusted, a.k, &[]).iter().enumerate() {
        let class = if cp.catalog.is_tail(i) { "TAIL" } else { "HEAD" };
        writeln!(out, "{}\t{}\t{:.6e}\t{class}", rank + 1, cp.catalog.id_of(i), pred.probs[i])?;
    }
    writeln!(out, "r_head={} r_tail={}", pred.factors.r_head, pred.factors.r_tail)?;
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(bytes)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Entry point used by the binary.
pub fn main_from_env() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let mut stdout = io::stdout();
    let mut stderr = io::stderr();
    run(std::env::args_os(), &mut stdout, &mut stderr)
}
