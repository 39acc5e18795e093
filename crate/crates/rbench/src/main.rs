use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rbench::manifest_io::{self, load_manifest, write_manifest, write_sidecar};
use rbench::plot::{write_svg, Scatter};
use rbench::profile::DatasetProfile;
use rbench::records::{append_records, load_accuracy_records, AccuracyRecord, RecordTable, Role, Split};
use rbench::report::{build_report, render_table, FitParams, Report, TableStyle};
use rbench::{load_split, score, synth};
use rbench_core::blob::Blob;
use rbench_core::classifiers::{
    train_baselinepp, train_logistic_regression, train_mean_centroid, ClassifierKind, Preprocessing,
    TrainConfig,
};
use rbench_core::curate::{curate, verify_subset, Scheme, SubsetSpec};
use rbench_core::ensemble::{
    greedy_soup, interpolate, sample_soup_config, uniform_soup, SoupCandidate, SoupConfigRanges,
    DEFAULT_ALPHA, DEFAULT_SOUP_POOL,
};
use rbench_core::metrics::{fit_beta_with, LogitForm, Regime, SignificanceConfig};

#[derive(Parser)]
#[command(name = "rbench", version, about = "Low-shot robustness evaluation harness")]
struct Cli {
    /// Seed for every seeded operation.
    #[arg(long, global = true, env = "RB_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the baseline curve to the standard models' accuracies.
    Fit(FitArgs),
    /// Effective and relative robustness of every intervention.
    Robustness(AnalysisArgs),
    /// Robustness plus per-regime significance and the cross-regime highlight.
    Significance(SignificanceArgs),
    /// Full report as versioned JSON (and a text table on stdout).
    Report(ReportArgs),
    /// Scatter plot with the baseline curves as SVG.
    Plot(PlotArgs),
    /// Draw a class-balanced subset from a manifest.
    Curate(CurateArgs),
    /// Check a subset against its manifest and sidecar spec.
    VerifySubset(VerifyArgs),
    /// Train a classifier head on embeddings.
    Train(TrainArgs),
    /// Score a head on the ID split and every OOD shift, appending records.
    Evaluate(EvaluateArgs),
    /// Average candidate heads into a soup.
    Soup(SoupArgs),
    /// Interpolate two heads' weights.
    WiseFt(WiseFtArgs),
    /// Sample soup hyperparameter configurations as JSON lines.
    SoupConfigs(SoupConfigsArgs),
    /// Generate the synthetic embedding dataset.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    LogOdds,
    NegLogComplement,
}

impl From<FormArg> for LogitForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::LogOdds => LogitForm::LogOdds,
            FormArg::NegLogComplement => LogitForm::NegLogComplement,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    records: PathBuf,
    /// Built-in profile name or path to a profile JSON.
    #[arg(long)]
    profile: String,
    #[arg(long, value_enum, default_value = "log-odds")]
    logit_form: FormArg,
    /// Write the fit here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalysisArgs {
    /// Fit parameters JSON from `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    profile: String,
    /// Model whose records carry the reference role.
    #[arg(long)]
    reference: String,
    /// Also write the report JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SigArgs {
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Required margin over the reference, percentage points.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
}

#[derive(Args)]
struct SignificanceArgs {
    #[command(flatten)]
    analysis: AnalysisArgs,
    #[command(flatten)]
    sig: SigArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    profile: String,
    #[arg(long)]
    reference: String,
    #[command(flatten)]
    sig: SigArgs,
    /// Report JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Plain-text table output; stdout if omitted.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    profile: String,
    #[arg(long)]
    reference: String,
    /// Regime whose interventions and reference are drawn.
    #[arg(long, default_value = "full")]
    regime: Regime,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CurateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Take k items per class.
    #[arg(long, group = "scheme")]
    k: Option<usize>,
    /// Take round(ratio * n) items per class.
    #[arg(long, group = "scheme")]
    ratio: Option<f64>,
    /// Take a fixed count per class.
    #[arg(long, group = "scheme")]
    count: Option<usize>,
    #[arg(long, default_value_t = 1)]
    min_per_class: usize,
    /// Subset output; the spec is written to `<out>.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    subset: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Logistic,
    Centroid,
    Baselinepp,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Manifest labelling the embedding rows in order.
    #[arg(long)]
    labels: PathBuf,
    /// Restrict training to these items.
    #[arg(long)]
    subset: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    cosine_scale: Option<f64>,
    #[arg(long)]
    layer_norm: bool,
    #[arg(long)]
    l2_normalize: bool,
    /// Model blob output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory holding `{split}.emb` / `{split}.tsv`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    profile: String,
    #[arg(long, default_value = "val")]
    id_split: String,
    /// Model name written to the records.
    #[arg(long)]
    name: String,
    #[arg(long)]
    regime: Regime,
    #[arg(long, value_enum)]
    role: RoleArg,
    /// Records file to append to.
    #[arg(long)]
    records: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Standard,
    Reference,
    Intervention,
}

#[derive(Clone, Copy, ValueEnum)]
enum SoupMethod {
    Greedy,
    Uniform,
}

#[derive(Args)]
struct SoupArgs {
    /// Candidate head blobs.
    #[arg(long, num_args = 1.., required = true)]
    candidates: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "greedy")]
    method: SoupMethod,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    profile: String,
    /// Held-out split used to rank candidates and accept members.
    #[arg(long, default_value = "val")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WiseFtArgs {
    /// Weights at alpha = 0.
    #[arg(long)]
    theta0: PathBuf,
    /// Weights at alpha = 1.
    #[arg(long)]
    theta1: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SoupConfigsArgs {
    #[arg(long, default_value_t = DEFAULT_SOUP_POOL)]
    count: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
}

fn read_fit(path: &Path) -> Result<FitParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing fit parameters {}", path.display()))
}

fn read_blob(path: &Path) -> Result<Blob> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Blob::from_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn json_line<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_table(records: &Path) -> Result<RecordTable> {
    let recs = load_accuracy_records(records).with_context(|| format!("loading {}", records.display()))?;
    Ok(RecordTable::new(&recs))
}

fn analysis_report(a: &AnalysisArgs, cfg: &SignificanceConfig) -> Result<Report> {
    let fit = read_fit(&a.fit)?;
    let profile = DatasetProfile::resolve(&a.profile)?;
    let table = load_table(&a.records)?;
    Ok(build_report(&fit, &table, &profile, &a.reference, cfg)?)
}

fn emit_analysis(a: &AnalysisArgs, cfg: &SignificanceConfig, style: TableStyle) -> Result<()> {
    let report = analysis_report(a, cfg)?;
    if let Some(path) = &a.json {
        write_bytes(path, report.to_json().as_bytes())?;
    }
    print!("{}", render_table(&report, style));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Fit(a) => {
            let profile = DatasetProfile::resolve(&a.profile)?;
            let table = load_table(&a.records)?;
            let points: Vec<_> = table
                .points_with_role(Role::Standard, &profile)?
                .into_iter()
                .filter(|p| profile.regimes.contains(&p.regime))
                .map(|p| p.point)
                .collect();
            info!("fitting {} standard points", points.len());
            let (fit, stats) = fit_beta_with(&points, a.logit_form.into())?;
            let params = FitParams::from_fit(&profile.name, &fit, &stats);
            let mut text = serde_json::to_string_pretty(&params)?;
            text.push('\n');
            match a.out {
                Some(p) => write_bytes(&p, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
        Command::Robustness(a) => emit_analysis(&a, &SignificanceConfig::default(), TableStyle::Robustness)?,
        Command::Significance(a) => {
            let cfg = SignificanceConfig::new(a.sig.lambda, a.sig.gamma)?;
            emit_analysis(&a.analysis, &cfg, TableStyle::Significance)?;
        }
        Command::Report(a) => {
            let cfg = SignificanceConfig::new(a.sig.lambda, a.sig.gamma)?;
            let report = analysis_report(
                &AnalysisArgs {
                    fit: a.fit,
                    records: a.records,
                    profile: a.profile,
                    reference: a.reference,
                    json: None,
                },
                &cfg,
            )?;
            write_bytes(&a.out, report.to_json().as_bytes())?;
            let table = render_table(&report, TableStyle::Significance);
            match a.table {
                Some(p) => write_bytes(&p, table.as_bytes())?,
                None => print!("{table}"),
            }
        }
        Command::Plot(a) => {
            let fit = read_fit(&a.fit)?;
            let profile = DatasetProfile::resolve(&a.profile)?;
            let table = load_table(&a.records)?;
            let standard = table
                .points_with_role(Role::Standard, &profile)?
                .into_iter()
                .map(|p| p.point)
                .collect();
            let interventions = table
                .points_with_role(Role::Intervention, &profile)?
                .into_iter()
                .filter(|p| p.regime == a.regime)
                .map(|p| (p.model, p.point))
                .collect();
            let reference_ood = Some(table.reference_ood(&a.reference, a.regime, &profile)?);
            let scatter = Scatter {
                title: format!("{} ({})", profile.name, a.regime),
                fit: fit.curve(),
                d: fit.d,
                lambda: a.lambda,
                standard,
                interventions,
                reference_ood,
            };
            write_svg(&a.out, &scatter).with_context(|| format!("writing {}", a.out.display()))?;
        }
        Command::Curate(a) => {
            let scheme = match (a.k, a.ratio, a.count) {
                (Some(k), None, None) => Scheme::KPerClass { k },
                (None, Some(ratio), None) => Scheme::Ratio { ratio },
                (None, None, Some(count)) => Scheme::FixedPerClass { count },
                _ => bail!("pass exactly one of --k, --ratio, --count"),
            };
            let spec = SubsetSpec {
                min_per_class: a.min_per_class,
                ..SubsetSpec::new(scheme, seed)
            };
            let manifest = load_manifest(&a.manifest, None)?;
            let subset = curate(&manifest, &spec)?;
            write_manifest(&a.out, &subset)?;
            write_sidecar(&a.out, &spec, &subset)?;
            info!("{} of {} items selected", subset.len(), manifest.len());
        }
        Command::VerifySubset(a) => {
            let sidecar = manifest_io::read_sidecar(&a.subset)?;
            let manifest = load_manifest(&a.manifest, None)?;
            let subset = load_manifest(&a.subset, Some(manifest.num_classes()))?;
            let report = verify_subset(&manifest, &subset, &sidecar.spec);
            println!("{}", serde_json::to_string_pretty(&report)?);
            ensure!(report.passed, "subset failed verification");
        }
        Command::Train(a) => {
            let x = rbench::embedding::load_embedding_file(&a.embeddings)
                .with_context(|| format!("loading {}", a.embeddings.display()))?;
            let manifest = load_manifest(&a.labels, None)?;
            let mut y = manifest_io::labels_for(&manifest, &x)?;
            let mut x = x;
            if let Some(path) = &a.subset {
                let subset = load_manifest(path, Some(manifest.num_classes()))?;
                let rows = manifest_io::subset_rows(&manifest, &subset)?;
                x = x.select(&rows)?;
                y = y.select(&rows);
            }
            let (kind, mut cfg) = match a.kind {
                KindArg::Logistic => (ClassifierKind::Logistic, TrainConfig::logistic()),
                KindArg::Centroid => (ClassifierKind::Centroid, TrainConfig::logistic()),
                KindArg::Baselinepp => (ClassifierKind::BaselinePp, TrainConfig::baselinepp()),
            };
            cfg.seed = seed;
            cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
            cfg.learning_rate = a.lr.unwrap_or(cfg.learning_rate);
            cfg.batch_size = a.batch_size.unwrap_or(cfg.batch_size);
            cfg.weight_decay = a.weight_decay.unwrap_or(cfg.weight_decay);
            cfg.momentum = a.momentum.unwrap_or(cfg.momentum);
            cfg.cosine_scale = a.cosine_scale.unwrap_or(cfg.cosine_scale);
            cfg.preprocessing = Preprocessing {
                layer_norm: a.layer_norm,
                l2_normalize: a.l2_normalize,
            };
            let (model, final_loss) = match kind {
                ClassifierKind::Logistic => {
                    let t = train_logistic_regression(&x, &y, &cfg)?;
                    (t.model, t.epoch_loss.last().copied())
                }
                ClassifierKind::BaselinePp => {
                    let t = train_baselinepp(&x, &y, &cfg)?;
                    (t.model, t.epoch_loss.last().copied())
                }
                ClassifierKind::Centroid => {
                    let mut m = train_mean_centroid(&cfg.preprocessing.apply(&x), &y)?;
                    m.preprocessing = cfg.preprocessing;
                    (m, None)
                }
            };
            let train_acc = score(&model, &x, &y, rbench_core::classifiers::AccuracyMode::Top1)?;
            write_bytes(&a.out, &Blob::from(&model).to_bytes())?;
            json_line(&serde_json::json!({
                "kind": kind,
                "rows": x.rows(),
                "train_accuracy_pct": 100.0 * train_acc,
                "final_loss": final_loss,
            }))?;
        }
        Command::Evaluate(a) => {
            let profile = DatasetProfile::resolve(&a.profile)?;
            let model = read_blob(&a.model)?.to_classifier()?;
            let mode = profile.metric_mode.into();
            let role = match a.role {
                RoleArg::Standard => Role::Standard,
                RoleArg::Reference => Role::Reference,
                RoleArg::Intervention => Role::Intervention,
            };
            let splits = std::iter::once((Split::Id, a.id_split.clone()))
                .chain(profile.ood_shifts.iter().map(|s| (Split::Ood, s.clone())));
            let mut out = Vec::new();
            for (split, shift) in splits {
                let (x, y) = load_split(&a.data, &shift)?;
                out.push(AccuracyRecord {
                    model: a.name.clone(),
                    regime: a.regime,
                    role,
                    split,
                    shift,
                    accuracy_pct: 100.0 * score(&model, &x, &y, mode)?,
                });
            }
            append_records(&a.records, &out)?;
        }
        Command::Soup(a) => {
            let profile = DatasetProfile::resolve(&a.profile)?;
            let mode = profile.metric_mode.into();
            let (x, y) = load_split(&a.data, &a.split)?;
            let blobs = a.candidates.iter().map(|p| read_blob(p)).collect::<Result<Vec<_>>>()?;
            let header = blobs[0].header;
            for (blob, path) in blobs.iter().zip(&a.candidates) {
                ensure!(
                    blob.header == header,
                    "{} has a different head layout from {}",
                    path.display(),
                    a.candidates[0].display()
                );
            }
            let eval = |params: &rbench_core::ensemble::ParamSet| -> Result<f64> {
                let model = Blob { header, params: params.clone() }.to_classifier()?;
                score(&model, &x, &y, mode)
            };
            let (params, members, held_out) = match a.method {
                SoupMethod::Uniform => {
                    let params = uniform_soup(blobs.iter().map(|b| &b.params))?;
                    let s = eval(&params)?;
                    let names = a.candidates.iter().map(|p| p.display().to_string()).collect();
                    (params, names, s)
                }
                SoupMethod::Greedy => {
                    let candidates = blobs
                        .iter()
                        .zip(&a.candidates)
                        .map(|(b, p)| {
                            Ok(SoupCandidate {
                                params: b.params.clone(),
                                held_out_id_acc: eval(&b.params)?,
                                tag: p.display().to_string(),
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let mut failure = None;
                    let soup = greedy_soup(&candidates, |p| {
                        eval(p).unwrap_or_else(|e| {
                            failure.get_or_insert(e);
                            f64::NEG_INFINITY
                        })
                    })?;
                    if let Some(e) = failure {
                        return Err(e);
                    }
                    (soup.params, soup.members, soup.score)
                }
            };
            write_bytes(&a.out, &Blob { header, params }.to_bytes())?;
            json_line(&serde_json::json!({
                "members": members,
                "held_out_accuracy_pct": 100.0 * held_out,
            }))?;
        }
        Command::WiseFt(a) => {
            let (b0, b1) = (read_blob(&a.theta0)?, read_blob(&a.theta1)?);
            ensure!(
                b0.header == b1.header,
                "{} and {} have different head layouts",
                a.theta0.display(),
                a.theta1.display()
            );
            let params = interpolate(&b0.params, &b1.params, a.alpha)?;
            write_bytes(&a.out, &Blob { header: b0.header, params }.to_bytes())?;
        }
        Command::SoupConfigs(a) => {
            let ranges = SoupConfigRanges::default();
            for i in 0..a.count as u64 {
                json_line(&sample_soup_config(&ranges, seed.wrapping_add(i)))?;
            }
        }
        Command::Synth(a) => {
            let cfg = synth::SynthConfig {
                seed,
                ..Default::default()
            };
            synth::generate(&a.out, &cfg)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
