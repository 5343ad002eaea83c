use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use expert_mas::center::Mixing;
use expert_mas::config::ScenarioConfig;
use expert_mas::corpus::{generate, Corpus, CorpusSpec, Manifest, Mix};
use expert_mas::feature::{ClassId, FeatureId, Region};
use expert_mas::protocol::ConsultMode;
use expert_mas::scenario::{compare_baseline, run_scenario, trace_to_jsonl, RunOptions};
use expert_mas::tags::{preprocess, RawObject};
use expert_mas::{snapshot, Error, Result};

#[derive(Parser)]
#[command(
    name = "expert-mas",
    version,
    about = "Multi expert-agent tag classifier and simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and its manifest.
    GenCorpus(GenCorpus),
    /// Stream a corpus through the system and emit metrics.
    Run(Run),
    /// Classify one object against a snapshot without learning.
    Classify(Classify),
    /// Print an agent's K, M and D regions from a snapshot.
    Inspect(Inspect),
    /// Compare selective dispatch with the broadcast baseline.
    CompareBaseline(Compare),
}

#[derive(Args)]
struct GenCorpus {
    /// TOML file with corpus spec fields; flags override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    base: Option<usize>,
    #[arg(long)]
    learnable: Option<usize>,
    /// Learnable features shared within each pair of classes.
    #[arg(long)]
    shared: Option<usize>,
    #[arg(long)]
    noise_pool: Option<usize>,
    #[arg(long)]
    tags: Option<usize>,
    /// Draw mix as `base,learnable,noise`.
    #[arg(long, value_parser = parse_mix)]
    mix: Option<Mix>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// TOML scenario config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    tau_k: Option<f64>,
    #[arg(long)]
    tau_m: Option<f64>,
    #[arg(long)]
    alpha_r: Option<f64>,
    #[arg(long)]
    alpha_d: Option<f64>,
    #[arg(long)]
    alpha_fall: Option<f64>,
    #[arg(long)]
    theta: Option<u32>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    epoch: Option<usize>,
    #[arg(long, conflicts_with_all = ["min_conf", "broadcast_dispatch"])]
    top_k: Option<usize>,
    #[arg(long, conflicts_with = "broadcast_dispatch")]
    min_conf: Option<f64>,
    #[arg(long)]
    broadcast_dispatch: bool,
    #[arg(long)]
    consult: Option<ConsultMode>,
    #[arg(long)]
    round_cap: Option<u32>,
    #[arg(long)]
    eps_fb: Option<f64>,
    #[arg(long)]
    mixing: Option<Mixing>,
    #[arg(long)]
    no_promotions: bool,
    #[arg(long)]
    pipeline: Option<usize>,
    #[arg(long)]
    d_capacity: Option<usize>,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Run {
    #[command(flatten)]
    inputs: Inputs,
    /// Metrics stream; stdout when omitted.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Where to write the final snapshot.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Skip the consistency check at drained points.
    #[arg(long)]
    no_check: bool,
}

#[derive(Args)]
struct Classify {
    #[arg(long)]
    snapshot: PathBuf,
    /// Free text, tokenized into tags.
    #[arg(long, conflicts_with = "tags", required_unless_present = "tags")]
    text: Option<String>,
    /// Comma-separated tags.
    #[arg(long)]
    tags: Option<String>,
}

#[derive(Args)]
struct Inspect {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long)]
    class: String,
}

#[derive(Args)]
struct Compare {
    #[command(flatten)]
    inputs: Inputs,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn parse_mix(s: &str) -> std::result::Result<Mix, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [base, learnable, noise] => Ok(Mix {
            base,
            learnable,
            noise,
        }),
        _ => Err("expected three comma-separated weights".into()),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

impl Overrides {
    fn apply(self, cfg: &mut ScenarioConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        set!(
            tau_k, tau_m, alpha_r, alpha_d, alpha_fall, theta, window, round_cap, eps_fb, pipeline,
            seed
        );
        set!(consult, mixing);
        if self.epoch.is_some() {
            cfg.epoch = self.epoch;
        }
        if self.d_capacity.is_some() {
            cfg.d_capacity = self.d_capacity;
        }
        if self.num_classes.is_some() {
            cfg.num_classes = self.num_classes;
        }
        if self.top_k.is_some() || self.min_conf.is_some() || self.broadcast_dispatch {
            cfg.top_k = self.top_k;
            cfg.min_conf = self.min_conf;
            cfg.broadcast_dispatch = self.broadcast_dispatch;
        }
        if self.no_promotions {
            cfg.promotions = false;
        }
    }
}

impl Inputs {
    fn load(self) -> Result<(Corpus, Manifest, ScenarioConfig)> {
        let corpus = Corpus::parse(&read(&self.corpus)?)?;
        let manifest = Manifest::parse(&read(&self.manifest)?)?;
        let mut config = match &self.config {
            Some(p) => ScenarioConfig::from_toml(&read(p)?)?,
            None => ScenarioConfig::default(),
        };
        self.overrides.apply(&mut config);
        Ok((corpus, manifest, config))
    }
}

fn gen_corpus(args: GenCorpus) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => toml::from_str(&read(p)?).map_err(|e| Error::CorpusSpec(e.to_string()))?,
        None => CorpusSpec::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = args.$flag {
                spec.$field = v;
            }
        )*};
    }
    set!(classes => num_classes, base => base_per_class, learnable => learnable_per_class,
         shared => shared_learnable, noise_pool => noise_pool, tags => tags_per_object,
         mix => mix, length => length, seed => seed);
    let (corpus, manifest) = generate(&spec)?;
    write(&args.out, &corpus.to_text())?;
    write(&args.manifest, &manifest.to_json())?;
    eprintln!(
        "wrote {} objects over {} classes to {}",
        corpus.len(),
        manifest.num_classes(),
        args.out.display()
    );
    Ok(())
}

fn run(args: Run) -> Result<()> {
    let (corpus, manifest, config) = args.inputs.load()?;
    let options = RunOptions {
        record_trace: args.trace.is_some(),
        check_invariants: !args.no_check,
    };
    let out = run_scenario(&corpus, &manifest, &config, options)?;
    let metrics = out.metrics.to_jsonl();
    match &args.metrics {
        Some(p) => write(p, &metrics)?,
        None => print!("{metrics}"),
    }
    if let Some(p) = &args.trace {
        write(p, &trace_to_jsonl(&out.trace))?;
    }
    if let Some(p) = &args.snapshot {
        write(p, &snapshot::write(&out.system)?)?;
    }
    eprint!("{}", out.metrics.summary_table());
    if let Some((step, v)) = out.violations.first() {
        return Err(Error::Invariant(format!(
            "{} violation(s); first at step {step}: {v}",
            out.violations.len()
        )));
    }
    Ok(())
}

fn classify(args: Classify) -> Result<()> {
    let system = snapshot::read(&read(&args.snapshot)?)?;
    let tags = match (&args.text, &args.tags) {
        (Some(text), _) => preprocess(RawObject::Text(text))?,
        (None, Some(list)) => {
            let parsed = list
                .split(',')
                .map(|t| FeatureId::parse(t.trim()))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            preprocess(RawObject::Tags(&parsed))?
        }
        (None, None) => unreachable!("clap requires one of --text and --tags"),
    };
    let result = system.classify(&tags)?;
    println!(
        "{}",
        serde_json::json!({
            "tags": tags,
            "vector": result.vector,
            "fallback": result.fallback,
            "subconcepts": result.subconcepts,
        })
    );
    Ok(())
}

fn inspect(args: Inspect) -> Result<()> {
    let system = snapshot::read(&read(&args.snapshot)?)?;
    let class = ClassId::parse(&args.class).map_err(|_| Error::UnknownClass(args.class.clone()))?;
    let agent = system
        .agent(&class)
        .ok_or_else(|| Error::UnknownClass(args.class.clone()))?;
    let c = agent.collection();
    let th = c.thresholds();
    println!("class {class}  tau_k={} tau_m={}", th.tau_k(), th.tau_m());
    for region in [Region::K, Region::M, Region::D] {
        let entries: Vec<_> = c.in_region(region).collect();
        println!("{region:?} ({})", entries.len());
        for (f, p) in entries {
            println!("  {p}  {f}");
        }
    }
    for s in agent.subconcepts() {
        let members: Vec<&str> = s.members.iter().map(FeatureId::as_str).collect();
        println!("subconcept {}: {}", s.name, members.join(","));
    }
    println!(
        "memory {}/{} slots, {} dispatches",
        agent.memory().len(),
        agent.memory().window(),
        agent.dispatches()
    );
    Ok(())
}

fn compare(args: Compare) -> Result<()> {
    let (corpus, manifest, config) = args.inputs.load()?;
    let report = compare_baseline(&corpus, &manifest, &config)?;
    print!("{}", report.table());
    if let Some(p) = &args.json {
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        write(p, &json)?;
    }
    if !(report.selective.recount_matches && report.broadcast.recount_matches) {
        return Err(Error::Invariant(
            "trace recount disagrees with live counters".into(),
        ));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Run(a) => run(a),
        Command::Classify(a) => classify(a),
        Command::Inspect(a) => inspect(a),
        Command::CompareBaseline(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
