use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use s2l_core::baselines::{
    facility_location_select, high_learnability_select, least_confidence_select, middle_perplexity_select,
    random_select, CosineSimilarity,
};
use s2l_core::manifest::{config_digest, MANIFEST_VERSION};
use s2l_core::report::{cluster_report, selection_report};
use s2l_core::select::{DEFAULT_K, DEFAULT_KMEANS_ITERS};
use s2l_core::synth::{generate, load_templates};
use s2l_core::traj::load_features;
use s2l_core::{
    derive_scalar, kmeans_fit, load_trajectories, s2l_pipeline, write_trajectories, ClusterModel, Error, ManifestEntry,
    ManifestHeader, Normalize, Round, SelectionConfig, SelectionManifest, Stat, TrajFormat, TrajectoryStore,
};

use crate::{
    BaselineArgs, Cli, ClusterArgs, Command, ConvertArgs, FormatArg, Method, NormalizeArg, ReportArgs, SelectArgs,
    SynthArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg} (see --help)"),
            CliError::Data(err) => write!(f, "{err}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        CliError::Data(err)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Data(Error::Io(err))
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        pool = pool.num_threads(workers);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Data(Error::Io(std::io::Error::other(e))))?;
    let seed = cli.seed;
    pool.install(|| match cli.command {
        Command::Synth(args) => synth(args, seed.unwrap_or(0)),
        Command::Cluster(args) => cluster(args, seed.unwrap_or(0)),
        Command::Select(args) => select(args, seed),
        Command::Baseline(args) => baseline(args, seed.unwrap_or(0)),
        Command::Report(args) => report(args),
        Command::Convert(args) => convert(args),
    })
}

fn to_format(arg: FormatArg) -> TrajFormat {
    match arg {
        FormatArg::Jsonl => TrajFormat::Jsonl,
        FormatArg::Binary => TrajFormat::Binary,
    }
}

fn to_normalize(arg: NormalizeArg) -> Normalize {
    match arg {
        NormalizeArg::None => Normalize::None,
        NormalizeArg::Zscore => Normalize::Zscore,
    }
}

fn resolve_format(path: &Path, explicit: Option<FormatArg>) -> CliResult<TrajFormat> {
    explicit
        .map(to_format)
        .or_else(|| TrajFormat::from_path(path))
        .ok_or_else(|| {
            usage(format!(
                "cannot infer the format of `{}`; use a .jsonl/.bin extension or --format",
                path.display()
            ))
        })
}

fn load_store(path: &Path, format: Option<FormatArg>) -> CliResult<TrajectoryStore> {
    let format = resolve_format(path, format)?;
    Ok(load_trajectories(path, format)?)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn synth(args: SynthArgs, seed: u64) -> CliResult<()> {
    let format = resolve_format(&args.out, args.format)?;
    let templates = load_templates(&args.templates)?;
    let (store, labels) = generate(&templates, args.checkpoints, seed)?;
    write_trajectories(&store, &args.out, format)?;
    if let Some(path) = &args.labels_out {
        write_json(&labels, path)?;
    }
    let digest = config_digest(
        &serde_json::json!({ "templates": templates, "checkpoints": args.checkpoints, "seed": seed }),
        &store.digest(),
    );
    println!(
        "synth: {} examples x {} checkpoints from {} templates -> {} config_digest={digest}",
        store.len(),
        store.width(),
        templates.len(),
        args.out.display()
    );
    Ok(())
}

fn cluster(args: ClusterArgs, seed: u64) -> CliResult<()> {
    let store = load_store(&args.input.traj, args.input.format)?;
    let normalize = to_normalize(args.normalize);
    let model = kmeans_fit(&store, args.k, args.iters, seed, normalize)?;
    model.save(&args.out)?;
    let digest = config_digest(
        &serde_json::json!({ "k": args.k, "iters": args.iters, "seed": seed, "normalize": normalize }),
        &store.digest(),
    );
    println!(
        "cluster: k={} over {} examples, {} iterations, objective {:.6} -> {} config_digest={digest}",
        model.k,
        store.len(),
        model.iters_run,
        model.objective,
        args.out.display()
    );
    Ok(())
}

/// Selection settings as they may appear in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    budget: Option<usize>,
    k: Option<usize>,
    kmeans_iters: Option<usize>,
    seed: Option<u64>,
    per_source: Option<bool>,
    normalize: Option<Normalize>,
    topup: Option<bool>,
}

fn select(args: SelectArgs, seed_flag: Option<u64>) -> CliResult<()> {
    let file = match &args.config {
        Some(path) => {
            let reader = BufReader::new(File::open(path)?);
            serde_json::from_reader(reader).map_err(|e| Error::Format(format!("config `{}`: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    let budget = args
        .budget
        .or(file.budget)
        .ok_or_else(|| usage("--budget is required"))?;
    if budget == 0 {
        return Err(usage("--budget must be at least 1"));
    }
    let seed = seed_flag.or(file.seed).unwrap_or(0);
    let config = SelectionConfig {
        budget,
        k: args.k.or(file.k).unwrap_or(DEFAULT_K),
        kmeans_iters: args.iters.or(file.kmeans_iters).unwrap_or(DEFAULT_KMEANS_ITERS),
        seed,
        per_source: args.per_source || file.per_source.unwrap_or(false),
        normalize: args.normalize.map(to_normalize).or(file.normalize).unwrap_or_default(),
        topup: !args.no_topup && file.topup.unwrap_or(true),
    };
    config.validate().map_err(|e| usage(e.to_string()))?;

    let store = load_store(&args.input.traj, args.input.format)?;
    let manifest = s2l_pipeline(&store, &config)?;
    manifest.save(&args.out)?;
    println!(
        "select: {} of {} examples (k={}, iters={}, seed={}, per_source={}) -> {} config_digest={}",
        manifest.len(),
        store.len(),
        config.k,
        config.kmeans_iters,
        config.seed,
        config.per_source,
        args.out.display(),
        manifest.header.config_digest
    );
    Ok(())
}

fn method_name(method: Method) -> String {
    method
        .to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_string()
}

fn baseline(args: BaselineArgs, seed: u64) -> CliResult<()> {
    if args.budget == 0 {
        return Err(usage("--budget must be at least 1"));
    }
    let name = method_name(args.method);
    let is_fl = args.method == Method::FacilityLocation;
    if is_fl && args.features.is_none() {
        return Err(usage("--features is required for facility-location"));
    }
    if !is_fl && args.features.is_some() {
        return Err(usage(format!("--features does not apply to {name}")));
    }
    if !is_fl && args.traj.is_none() {
        return Err(usage(format!("--traj is required for {name}")));
    }
    let store = match &args.traj {
        Some(path) => Some(load_store(path, args.format)?),
        None => None,
    };

    let (ids, rows, input_digest, late) = if is_fl {
        let features = load_features(args.features.as_ref().expect("checked above"))?;
        let sim = CosineSimilarity::new(&features);
        let fl = facility_location_select(&sim, args.budget);
        (features.ids().to_vec(), fl.order, features.digest(), None)
    } else {
        let store = store.as_ref().expect("checked above");
        let late = args.late_index.unwrap_or(store.width() - 1);
        let early = args.early_index;
        let rows = match args.method {
            Method::Random => random_select(store.len(), args.budget, seed),
            Method::LeastConfidence => {
                least_confidence_select(&derive_scalar(store, Stat::Confidence, early, late)?, args.budget)?
            }
            Method::MiddlePerplexity => {
                middle_perplexity_select(&derive_scalar(store, Stat::Perplexity, early, late)?, args.budget)?
            }
            Method::HighLearnability => {
                if early >= late {
                    return Err(usage("--early-index must be below --late-index for high-learnability"));
                }
                high_learnability_select(&derive_scalar(store, Stat::Learnability, early, late)?, args.budget)?
            }
            Method::FacilityLocation => unreachable!(),
        };
        (store.ids().to_vec(), rows, store.digest(), Some(late))
    };

    let source_of: std::collections::HashMap<&str, &str> = store
        .as_ref()
        .map(|s| {
            s.ids()
                .iter()
                .map(String::as_str)
                .zip(s.sources().iter().map(String::as_str))
                .collect()
        })
        .unwrap_or_default();
    let mut entries = Vec::with_capacity(rows.len());
    for r in rows {
        let id = &ids[r];
        let source = match &store {
            Some(_) => source_of
                .get(id.as_str())
                .ok_or_else(|| Error::Integrity(format!("feature id `{id}` not in trajectory file")))?
                .to_string(),
            None => String::new(),
        };
        entries.push(ManifestEntry {
            id: id.clone(),
            source,
            cluster: None,
            round: Round::Main,
        });
    }

    let digest = config_digest(
        &serde_json::json!({
            "method": name,
            "budget": args.budget,
            "seed": seed,
            "early_index": args.early_index,
            "late_index": late,
        }),
        &input_digest,
    );
    let manifest = SelectionManifest {
        header: ManifestHeader {
            tool: name.clone(),
            version: MANIFEST_VERSION,
            seed,
            budget: args.budget,
            k: None,
            config_digest: digest,
        },
        entries,
    };
    manifest.save(&args.out)?;
    println!(
        "baseline {name}: {} of {} examples -> {} config_digest={}",
        manifest.len(),
        ids.len(),
        args.out.display(),
        manifest.header.config_digest
    );
    Ok(())
}

fn report(args: ReportArgs) -> CliResult<()> {
    let model = ClusterModel::load(&args.model)?;
    let (json, text, digest) = match &args.manifest {
        Some(manifest_path) => {
            let traj = args.traj.as_ref().ok_or_else(|| usage("--manifest needs --traj"))?;
            let store = load_store(traj, args.format)?;
            let manifest = SelectionManifest::load(manifest_path)?;
            let report = selection_report(&manifest, &store, &model)?;
            let json = serde_json::to_value(&report).map_err(Error::from)?;
            (json, report.render_text(), manifest.header.config_digest.clone())
        }
        None => {
            let report = cluster_report(&model);
            let json = serde_json::to_value(&report).map_err(Error::from)?;
            let digest = config_digest(&json, "");
            (json, report.render_text(), digest)
        }
    };

    if let Some(out) = &args.out {
        write_json(&json, out)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&json).map_err(Error::from)?);
        eprintln!("report: config_digest={digest}");
    } else {
        print!("{text}");
        println!("report: config_digest={digest}");
    }
    Ok(())
}

fn convert(args: ConvertArgs) -> CliResult<()> {
    let store = load_store(&args.input.traj, args.input.format)?;
    let to = resolve_format(&args.out, args.to)?;
    write_trajectories(&store, &args.out, to)?;
    println!(
        "convert: {} examples x {} checkpoints -> {} ({to}) config_digest={}",
        store.len(),
        store.width(),
        args.out.display(),
        store.digest()
    );
    Ok(())
}
