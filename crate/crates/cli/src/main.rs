use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pitt::container::DatasetContainer;
use pitt::eqtok::{detokenize, tokenize_equation, tokenize_text, EquationSpec, Family};
use pitt::evalkit::{emit_report, load_metrics, mae_table, probe_attention, ProbeRecord, Report};
use pitt::pipeline::{self, ExperimentManifest};
use pitt::train::{Checkpoint, TrainConfig};

#[derive(Parser)]
#[command(name = "pitt", version, about = "Equation-token transformer and FNO workbench for PDE surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset container.
    Generate {
        /// heat, burgers, kdv, ns or poisson.
        family: String,
        /// paper, paper-ff (ns only), desk or smoke.
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Tokenize an equation spec (JSON file) or raw token text.
    Tokenize {
        #[arg(long, conflicts_with = "text")]
        spec: Option<PathBuf>,
        #[arg(long)]
        text: Option<String>,
        /// Padded length; defaults to the family's length.
        #[arg(long)]
        pad: Option<usize>,
    },
    /// Train one model per seed.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Flat key-value manifest; training keys override the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        seeds: SeedArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Test-partition MAE of trained checkpoints.
    Evaluate(EvalArgs),
    /// Autoregressive rollouts of test trajectories.
    Rollout {
        #[command(flatten)]
        eval: EvalArgs,
        /// Test trajectories per checkpoint.
        #[arg(long, default_value_t = 1)]
        samples: usize,
    },
    /// Attention-weight change between a base spec and an edited copy.
    Probe {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Base spec as JSON; alternatively take it from a dataset sample.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long, requires = "sample")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        sample: Option<usize>,
        /// Edits such as nu=1e-5, amp=0.002, time=10, alpha=, beta=, gamma=.
        #[arg(long = "set", required = true)]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Recheck a container's invariants.
    Verify { container: PathBuf },
    /// Merge metrics documents into one report.
    Report {
        metrics: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
}

#[derive(Args)]
struct SeedArgs {
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

impl SeedArgs {
    fn list(&self) -> Option<Vec<u64>> {
        self.seed.map(|s| vec![s]).or_else(|| self.seeds.clone())
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    checkpoints: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    overwrite: bool,
}

fn family(name: &str) -> Result<Family> {
    Family::parse(name).ok_or_else(|| anyhow!("unknown family {name:?}; expected heat, burgers, kdv, ns or poisson"))
}

fn out_dir(out: Option<PathBuf>, default: &str, overwrite: bool) -> Result<PathBuf> {
    let dir = out.unwrap_or_else(|| pipeline::output_root().join(default));
    if dir.join("metrics.json").exists() && !overwrite {
        bail!("{} already holds a report (pass --overwrite to replace it)", dir.display());
    }
    Ok(dir)
}

fn load_checkpoints(paths: &[PathBuf]) -> Result<Vec<Checkpoint<f32>>> {
    paths.iter().map(|p| Checkpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display()))).collect()
}

fn load_dataset(path: &Path) -> Result<DatasetContainer> {
    DatasetContainer::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn apply_edit(spec: &EquationSpec, edit: &str) -> Result<EquationSpec> {
    let (key, value) = edit.split_once('=').ok_or_else(|| anyhow!("edit {edit:?} is not key=value"))?;
    let v: f64 = value.parse().with_context(|| format!("edit {edit:?}"))?;
    let mut out = spec.clone();
    match (&mut out, key) {
        (_, "time") => return Ok(spec.with_target_time(v)),
        (EquationSpec::NavierStokes(s), "nu") => s.nu = v,
        (EquationSpec::NavierStokes(s), "amp") => s.amp = v,
        (EquationSpec::OneD(s), "alpha") => s.alpha = v,
        (EquationSpec::OneD(s), "beta") => s.beta = v,
        (EquationSpec::OneD(s), "gamma") => s.gamma = v,
        _ => bail!("cannot edit {key:?} on a {} spec", spec.family().name()),
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { family: name, preset, seed, out, overwrite } => {
            let fam = family(&name)?;
            let path = out.unwrap_or_else(|| pipeline::output_root().join("data").join(format!("{}-{preset}-seed{seed}.pittds", fam.name())));
            if path.exists() && !overwrite {
                bail!("{} already exists (pass --overwrite to replace it)", path.display());
            }
            let data = pipeline::generate(fam, &preset, seed)?;
            data.save(&path, overwrite)?;
            println!("wrote {} samples to {}", data.len(), path.display());
            println!("content hash {}", data.content_hash());
        }
        Command::Tokenize { spec, text, pad } => {
            let seq = match (spec, text) {
                (Some(path), _) => {
                    let spec: EquationSpec = serde_json::from_str(&std::fs::read_to_string(&path)?).with_context(|| format!("parsing {}", path.display()))?;
                    spec.validate()?;
                    tokenize_equation(&spec, pad.unwrap_or(spec.family().pad_len()))?
                }
                (None, Some(text)) => tokenize_text(&text, pad.unwrap_or(pitt::eqtok::PAD_1D))?,
                (None, None) => bail!("pass --spec or --text"),
            };
            println!("length {} (padded to {})", seq.true_length, seq.len());
            println!("ids {:?}", &seq.ids[..seq.true_length]);
            println!("text {}", detokenize(&seq)?);
        }
        Command::Train { dataset, preset, config, seeds, out, overwrite } => {
            if preset.is_none() && config.is_none() {
                bail!("pass --preset and/or --config");
            }
            let mut table = match &config {
                Some(path) => std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?
                    .parse::<toml::Table>()
                    .with_context(|| format!("parsing {}", path.display()))?,
                None => toml::Table::new(),
            };
            if let Some(p) = preset {
                table.insert("preset".into(), p.into());
            }
            if let Some(d) = &dataset {
                table.insert("dataset".into(), d.display().to_string().into());
            }
            let text = toml::to_string(&table)?;
            let mut manifest = ExperimentManifest::from_toml(&text)?;
            if let Some(s) = seeds.list() {
                manifest = ExperimentManifest::new(manifest.dataset, manifest.config, s, manifest.out)?;
            }
            if let Some(o) = out {
                manifest.out = o;
            }
            let paths = pipeline::run_manifest(&manifest, overwrite)?;
            let data = load_dataset(&manifest.dataset)?;
            let cks = load_checkpoints(&paths)?;
            println!("| seed | best epoch | best val loss | test MAE | checkpoint |\n|---|---|---|---|---|");
            for (ck, path) in cks.iter().zip(&paths) {
                let mae = pipeline::evaluate_checkpoints(std::slice::from_ref(ck), &data)?[0].mae_mean;
                println!("| {} | {} | {:.4e} | {:.4e} | {} |", ck.config.seed, ck.best_epoch, ck.best_val, mae, path.display());
            }
            let cfg_path = manifest.out.join(format!("{}.toml", manifest.config.name));
            std::fs::write(&cfg_path, TrainConfig::to_toml(&manifest.config))?;
        }
        Command::Evaluate(args) => {
            let data = load_dataset(&args.dataset)?;
            let cks = load_checkpoints(&args.checkpoints)?;
            let dir = out_dir(args.out, "evaluate", args.overwrite)?;
            let mae = pipeline::evaluate_checkpoints(&cks, &data)?;
            print!("{}", mae_table(&mae));
            emit_report(&Report { mae, ..Default::default() }, &dir)?;
            println!("report written to {}", dir.display());
        }
        Command::Rollout { eval: args, samples } => {
            let data = load_dataset(&args.dataset)?;
            let cks = load_checkpoints(&args.checkpoints)?;
            let dir = out_dir(args.out, "rollout", args.overwrite)?;
            let rollouts = pipeline::rollout_checkpoints(&cks, &data, samples)?;
            for r in &rollouts {
                println!(
                    "{} seed {} sample {}: final step MAE {:.4e}, accumulated {:.4e}{}",
                    r.result.model,
                    r.seed,
                    r.result.sample,
                    r.result.per_step.last().copied().unwrap_or(f64::NAN),
                    r.result.accumulated(),
                    r.result.blow_up.map_or(String::new(), |s| format!(" (blew up at step {s})"))
                );
            }
            emit_report(&Report { rollouts, ..Default::default() }, &dir)?;
            println!("report written to {}", dir.display());
        }
        Command::Probe { checkpoint, base, dataset, sample, set, out, overwrite } => {
            let ck: Checkpoint<f32> = Checkpoint::load(&checkpoint)?;
            let base: EquationSpec = match (base, dataset, sample) {
                (Some(path), _, _) => serde_json::from_str(&std::fs::read_to_string(&path)?)?,
                (None, Some(d), Some(i)) => load_dataset(&d)?.samples.get(i).ok_or_else(|| anyhow!("dataset has no sample {i}"))?.spec.clone(),
                _ => bail!("pass --base or --dataset with --sample"),
            };
            let modified = set.iter().try_fold(base.clone(), |s, e| apply_edit(&s, e))?;
            let map = probe_attention(&ck, &base, &modified)?;
            let dir = out_dir(out, "probe", overwrite)?;
            println!("max |dW| {:.4e} over {} heads", map.max(), map.heads.len());
            emit_report(&Report { probes: vec![ProbeRecord { label: set.join(","), map }], ..Default::default() }, &dir)?;
            println!("report written to {}", dir.display());
        }
        Command::Verify { container } => {
            let data = load_dataset(&container)?;
            println!("{}: {} {} samples, tokens padded to {}, OK", container.display(), data.len(), data.family().name(), data.header.pad_len);
            println!("content hash {}", data.content_hash());
        }
        Command::Report { metrics, out, overwrite } => {
            if metrics.is_empty() {
                bail!("pass at least one metrics document");
            }
            let mut report = Report::default();
            for path in &metrics {
                let doc = load_metrics(path)?;
                report.mae.extend(doc.mae);
                report.rollouts.extend(doc.rollouts);
                report.flags.extend(doc.flags);
            }
            let dir = out_dir(out, "report", overwrite)?;
            if !report.mae.is_empty() {
                print!("{}", mae_table(&report.mae));
            }
            emit_report(&report, &dir)?;
            println!("report written to {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
