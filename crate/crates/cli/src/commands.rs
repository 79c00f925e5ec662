use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nscr_core::alternating::{history_tsv, social_targets, TrainConfig};
use nscr_core::baselines::{mf_train, sfm_train, sr_train, BaselineConfig, EpochRecord, ItemPop, SR_BETA};
use nscr_core::eval::{evaluate_holdout, evaluate_targets, Holdout};
use nscr_core::io::{
    load_bundle, load_checkpoint, save_bundle, save_checkpoint, write_manifest, Checkpoint,
    LoadOptions, ModelState, CHECKPOINT_FORMAT_VERSION,
};
use nscr_core::{fit, generate as synth_generate, paired_ttest, Dataset, EvalReport, Solver, SyntheticSpec};

use crate::config::Resolver;
use crate::{
    Axis, CliError, DataArgs, EvaluateArgs, GenerateArgs, HyperArgs, ModelKind, Preset,
    RecommendArgs, SweepArgs, Target, TrainArgs,
};

type CliResult<T> = Result<T, CliError>;

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| data_err(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

/// `path` with `suffix` appended to its file name.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn preset_spec(preset: Preset) -> SyntheticSpec {
    match preset {
        Preset::Default => SyntheticSpec::default(),
        Preset::Small => SyntheticSpec {
            num_info_users: 40,
            num_items: 30,
            num_social_users: 60,
            num_bridge_users: 10,
            num_attribute_groups: 4,
            friends_per_user: 4,
            ..SyntheticSpec::default()
        },
    }
}

pub fn generate(args: &GenerateArgs) -> CliResult<()> {
    let mut r = Resolver::new(args.config.as_deref())?;
    let base = preset_spec(args.preset);
    r.note("preset", format!("{:?}", args.preset).to_lowercase());
    let spec = SyntheticSpec {
        num_info_users: r.get("info_users", args.info_users, base.num_info_users)?,
        num_items: r.get("items", args.items, base.num_items)?,
        num_social_users: r.get("social_users", args.social_users, base.num_social_users)?,
        num_bridge_users: r.get("bridge_users", args.bridge_users, base.num_bridge_users)?,
        num_attribute_groups: r.get("groups", args.groups, base.num_attribute_groups)?,
        interactions_per_user: r.get(
            "interactions_per_user",
            args.interactions_per_user,
            base.interactions_per_user,
        )?,
        friends_per_user: r.get("friends_per_user", args.friends_per_user, base.friends_per_user)?,
        preference_noise: r.get("noise", args.noise, base.preference_noise)?,
        homophily: r.get("homophily", args.homophily, base.homophily)?,
        seed: r.get("seed", args.seed, base.seed)?,
    };
    let data = synth_generate(&spec)?;
    save_bundle(&data, &args.out)?;
    write_manifest(&args.out.join("manifest.txt"), &r.manifest("generate"))?;
    println!(
        "wrote {} interactions, {} social edges, {} bridge users to {}",
        data.interactions.len(),
        data.social.num_edges(),
        data.social.bridge_pairs().len(),
        args.out.display()
    );
    Ok(())
}

fn load_data(args: &DataArgs, r: &mut Resolver) -> CliResult<Dataset> {
    let min_degree = r.get("min_degree", args.min_degree, 2usize)?;
    r.note("data", args.data.display());
    let options = LoadOptions {
        min_degree: (min_degree > 0).then_some(min_degree),
    };
    Ok(load_bundle(&args.data, &options)?)
}

/// Everything `train` and `sweep` need beyond the data.
#[derive(Debug, Clone)]
struct Settings {
    train: TrainConfig,
    beta: f64,
    split_seed: u64,
}

fn settings(h: &HyperArgs, r: &mut Resolver) -> CliResult<Settings> {
    let d = TrainConfig::default();
    let mut t = d.clone();
    t.hp.embedding_size = r.get("k", h.k, d.hp.embedding_size)?;
    t.hp.num_hidden_layers = r.get("layers", h.layers, d.hp.num_hidden_layers)?;
    t.hp.dropout = r.get("dropout", h.dropout, d.hp.dropout)?;
    t.hp.tradeoff = r.get("mu", h.mu, d.hp.tradeoff)?;
    t.hp.learning_rate = r.get("lr", h.lr, d.hp.learning_rate)?;
    t.hp.batch_size = r.get("batch", h.batch, d.hp.batch_size)?;
    t.hp.init_std = r.get("init_std", h.init_std, d.hp.init_std)?;
    t.hp.seed = r.get("seed", h.seed, d.hp.seed)?;
    t.outer_iterations = r.get("iterations", h.iterations, d.outer_iterations)?;
    t.inner_epochs = r.get("inner_epochs", h.inner_epochs, d.inner_epochs)?;
    t.patience = r.get("patience", h.patience, d.patience)?;
    t.propagate = r.get("propagate", h.propagate, d.propagate)?;
    t.solver = match r.get("solver", h.solver.clone(), "fixed-point".to_string())?.as_str() {
        "direct" => Solver::Direct,
        "fixed-point" => Solver::FixedPoint,
        other => return Err(CliError::Usage(format!("unknown solver '{other}' (direct|fixed-point)"))),
    };
    t.tolerance = r.get("tolerance", h.tolerance, d.tolerance)?;
    t.recall_k = r.get("k_recall", h.k_recall, d.recall_k)?;
    let beta = r.get("beta", h.beta, SR_BETA)?;
    let split_seed = r.get("split_seed", h.split_seed, t.hp.seed)?;
    t.validate()?;
    Ok(Settings {
        train: t,
        beta,
        split_seed,
    })
}

fn baseline_history(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch\tloss\tval_auc\n");
    for h in history {
        let _ = writeln!(s, "{}\t{}\t{}", h.epoch, h.loss, h.val_auc);
    }
    s
}

/// Trains `kind` and packs it into a checkpoint. Also returns the history TSV.
fn train_checkpoint(
    kind: ModelKind,
    data: &Dataset,
    s: &Settings,
    config: BTreeMap<String, String>,
) -> CliResult<(Checkpoint, String)> {
    let split = data.split(s.split_seed)?;
    let t = &s.train;
    let bc = BaselineConfig {
        epochs: t.outer_iterations,
        patience: t.patience,
        hp: t.hp.clone(),
        recall_k: t.recall_k,
    };
    let ablated;
    let (used, state, history) = match kind {
        ModelKind::Nscr | ModelKind::NscrA => {
            let used = if kind == ModelKind::NscrA {
                ablated = data.without_attributes();
                &ablated
            } else {
                data
            };
            let r = fit(used, &split, t)?;
            let h = history_tsv(&r.history);
            (
                used,
                ModelState::Nscr {
                    params: r.params,
                    social: r.social,
                },
                h,
            )
        }
        ModelKind::Mf => {
            let f = mf_train(data, &split, &bc)?;
            (data, ModelState::Factor { model: f.model }, baseline_history(&f.history))
        }
        ModelKind::Sr | ModelKind::SrA => {
            let f = sr_train(data, &split, &bc, s.beta, kind == ModelKind::Sr)?;
            (data, ModelState::Factor { model: f.model }, baseline_history(&f.history))
        }
        ModelKind::Sfm | ModelKind::SfmA => {
            let f = sfm_train(data, &split, &bc, kind == ModelKind::Sfm)?;
            (data, ModelState::Fm { ranker: f.model }, baseline_history(&f.history))
        }
        ModelKind::Itempop => {
            let model = ItemPop::fit(&split, data.num_items());
            (data, ModelState::ItemPop { model }, String::from("epoch\tloss\tval_auc\n"))
        }
    };
    let attribute_free = matches!(kind, ModelKind::SfmA | ModelKind::SrA | ModelKind::Mf);
    let catalog = if attribute_free {
        used.attributes.emptied()
    } else {
        used.attributes.clone()
    };
    let ck = Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        model: kind.name().to_string(),
        hyperparams: t.hp.clone(),
        config,
        split_seed: s.split_seed,
        vocab: data.vocab.clone(),
        bridge_pairs: data.social.bridge_pairs().to_vec(),
        catalog,
        state,
    };
    if !ck.is_finite() {
        return Err(CliError::Numeric("training produced non-finite parameters".into()));
    }
    Ok((ck, history))
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let mut r = Resolver::new(args.hyper.config.as_deref())?;
    r.note("model", args.model.name());
    let data = load_data(&args.data, &mut r)?;
    let s = settings(&args.hyper, &mut r)?;
    let (ck, history) = train_checkpoint(args.model, &data, &s, r.effective().clone())?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(data_err)?;
    }
    save_checkpoint(&args.out, &ck)?;
    write_file(&sibling(&args.out, ".history.tsv"), &history)?;
    write_manifest(&sibling(&args.out, ".manifest"), &r.manifest("train"))?;
    println!("wrote {} checkpoint to {}", args.model.name(), args.out.display());
    Ok(())
}

fn check_compatible(ck: &Checkpoint, data: &Dataset) -> CliResult<()> {
    if ck.vocab.users != data.vocab.users || ck.vocab.items != data.vocab.items {
        return Err(CliError::Data(
            "checkpoint vocabularies do not match the bundle's users and items".into(),
        ));
    }
    Ok(())
}

fn report_for(ck: &Checkpoint, data: &Dataset, target: Target, k: usize, seed: u64) -> CliResult<EvalReport> {
    check_compatible(ck, data)?;
    let report = match target {
        Target::Test | Target::Validation => {
            let split = data.split(ck.split_seed)?;
            let holdout = if target == Target::Test {
                Holdout::Test
            } else {
                Holdout::Validation
            };
            let mut report = evaluate_holdout(|u, i| ck.score(u, i), data, &split, k, holdout)?;
            report.seed = seed;
            report
        }
        Target::Social => {
            if data.truth.is_none() {
                return Err(CliError::Data("bundle has no social ground truth".into()));
            }
            evaluate_targets(
                &social_targets(data),
                data.num_items(),
                k,
                seed,
                |_, _| false,
                |s, i| ck.score_social(s, i),
            )?
        }
    };
    Ok(report)
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let mut r = Resolver::new(args.config.as_deref())?;
    let data = load_data(&args.data, &mut r)?;
    let k = r.get("k_recall", args.k_recall, 5usize)?;
    let seed = r.get("seed", args.seed, 0u64)?;
    let target = args.target.unwrap_or(Target::Test);
    r.note("target", format!("{target:?}").to_lowercase());
    if let Some(pair) = &args.compare {
        let a = load_checkpoint(&pair[0])?;
        let b = load_checkpoint(&pair[1])?;
        r.note("compare", format!("{} {}", pair[0].display(), pair[1].display()));
        if target != Target::Social && a.split_seed != b.split_seed {
            return Err(CliError::Usage(format!(
                "checkpoints use different split seeds ({} vs {})",
                a.split_seed, b.split_seed
            )));
        }
        let ra = report_for(&a, &data, target, k, seed)?;
        let rb = report_for(&b, &data, target, k, seed)?;
        let tt = paired_ttest(&ra.aucs(), &rb.aucs())?;
        let text = format!(
            "model_a\tmodel_b\tusers\tmean_auc_a\tmean_auc_b\tt\tp\tdf\n{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            a.model,
            b.model,
            ra.per_user.len(),
            ra.mean_auc,
            rb.mean_auc,
            tt.t,
            tt.p,
            tt.degrees_of_freedom
        );
        print!("{text}");
        if let Some(out) = &args.out {
            write_file(&out.join("compare.tsv"), &text)?;
            write_manifest(&out.join("manifest.txt"), &r.manifest("evaluate"))?;
        }
        return Ok(());
    }
    let path = args.checkpoint.as_ref().expect("clap requires --checkpoint or --compare");
    r.note("checkpoint", path.display());
    let ck = load_checkpoint(path)?;
    let report = report_for(&ck, &data, target, k, seed)?;
    if report.excluded_users > 0 {
        eprintln!("warning: {} users skipped with an empty holdout", report.excluded_users);
    }
    let table = report.to_table();
    print!("{table}");
    if let Some(out) = &args.out {
        write_file(&out.join("report.txt"), &table)?;
        write_file(&out.join("report.tsv"), &report.to_tsv())?;
        write_manifest(&out.join("manifest.txt"), &r.manifest("evaluate"))?;
    }
    Ok(())
}

/// Parses `a,b,c` or `start:step:end`.
pub fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(CliError::Usage("grid is empty".into()));
    }
    let bad = |s: &str| CliError::Usage(format!("bad grid value '{s}'"));
    if let [start, step, end] = text.split(':').collect::<Vec<_>>()[..] {
        let (a, h, b): (f64, f64, f64) = (
            start.trim().parse().map_err(|_| bad(start))?,
            step.trim().parse().map_err(|_| bad(step))?,
            end.trim().parse().map_err(|_| bad(end))?,
        );
        if !(h > 0.0) || b < a {
            return Err(CliError::Usage(format!("grid range '{text}' is empty")));
        }
        let n = ((b - a) / h + 1e-9).floor() as usize + 1;
        return Ok((0..n)
            .map(|k| {
                let v = a + k as f64 * h;
                format!("{v:.9}").parse().unwrap_or(v)
            })
            .collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad(s)))
        .collect()
}

fn parse_seeds(text: &str) -> CliResult<Vec<u64>> {
    let seeds: Vec<u64> = text
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| CliError::Usage(format!("bad seed '{s}'"))))
        .collect::<CliResult<_>>()?;
    if seeds.is_empty() {
        return Err(CliError::Usage("no seeds given".into()));
    }
    Ok(seeds)
}

fn apply_axis(s: &mut Settings, axis: Axis, value: f64) -> CliResult<()> {
    let whole = |v: f64| {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(CliError::Usage(format!("{axis:?} grid needs whole numbers, got {v}")))
        }
    };
    match axis {
        Axis::Embedding => s.train.hp.embedding_size = whole(value)?,
        Axis::Layers => s.train.hp.num_hidden_layers = whole(value)?,
        Axis::Dropout => s.train.hp.dropout = value,
        Axis::Mu => s.train.hp.tradeoff = value,
    }
    s.train.validate()?;
    Ok(())
}

struct SweepRow {
    value: f64,
    seed: u64,
    auc: f64,
    recall: f64,
    social_auc: Option<f64>,
}

pub fn sweep(args: &SweepArgs) -> CliResult<()> {
    let mut r = Resolver::new(args.hyper.config.as_deref())?;
    let grid = parse_grid(&args.grid)?;
    r.note("axis", format!("{:?}", args.axis).to_lowercase());
    r.note("grid", &args.grid);
    r.note("model", args.model.name());
    let data = load_data(&args.data, &mut r)?;
    let base = settings(&args.hyper, &mut r)?;
    let seeds = parse_seeds(&r.get("seeds", args.seeds.clone(), base.train.hp.seed.to_string())?)?;
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);

    let mut tasks = Vec::new();
    for &v in &grid {
        for &seed in &seeds {
            let mut s = base.clone();
            apply_axis(&mut s, args.axis, v)?;
            s.train.hp.seed = seed;
            s.split_seed = seed;
            tasks.push((v, seed, s));
        }
    }
    let k = base.train.recall_k;
    let with_social = data.truth.is_some() && matches!(args.model, ModelKind::Nscr | ModelKind::NscrA);
    let results: Vec<Mutex<Option<CliResult<SweepRow>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(tasks.len()) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some((v, seed, s)) = tasks.get(idx) else { break };
                let row = (|| {
                    let (ck, _) = train_checkpoint(args.model, &data, s, BTreeMap::new())?;
                    let test = report_for(&ck, &data, Target::Test, k, *seed)?;
                    let social_auc = if with_social {
                        Some(report_for(&ck, &data, Target::Social, k, *seed)?.mean_auc)
                    } else {
                        None
                    };
                    Ok(SweepRow {
                        value: *v,
                        seed: *seed,
                        auc: test.mean_auc,
                        recall: test.mean_recall,
                        social_auc,
                    })
                })();
                *results[idx].lock().unwrap() = Some(row);
            });
        }
    });
    let rows: Vec<SweepRow> = results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every task ran"))
        .collect::<CliResult<_>>()?;

    let axis = format!("{:?}", args.axis).to_lowercase();
    let social_col = if with_social { "\tsocial_auc" } else { "" };
    let mut text = format!("{axis}\tseed\tauc\trecall_at_{k}{social_col}\n");
    for row in &rows {
        let _ = write!(text, "{}\t{}\t{}\t{}", row.value, row.seed, row.auc, row.recall);
        if let Some(s) = row.social_auc {
            let _ = write!(text, "\t{s}");
        }
        text.push('\n');
    }
    let mut summary = format!("{axis}\tmean_auc\tmean_recall_at_{k}{social_col}\n");
    for chunk in rows.chunks(seeds.len()) {
        let n = chunk.len() as f64;
        let mean = |f: &dyn Fn(&SweepRow) -> f64| chunk.iter().map(f).sum::<f64>() / n;
        let _ = write!(summary, "{}\t{:.4}\t{:.4}", chunk[0].value, mean(&|r| r.auc), mean(&|r| r.recall));
        if with_social {
            let _ = write!(summary, "\t{:.4}", mean(&|r| r.social_auc.unwrap_or(f64::NAN)));
        }
        summary.push('\n');
    }
    write_file(&args.out, &text)?;
    write_file(&sibling(&args.out, ".summary.tsv"), &summary)?;
    write_manifest(&sibling(&args.out, ".manifest"), &r.manifest("sweep"))?;
    print!("{summary}");
    Ok(())
}

pub fn recommend(args: &RecommendArgs) -> CliResult<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let ids = &ck.vocab.social_users;
    let Some(user) = ids.iter().position(|id| *id == args.user) else {
        let hint = match (ids.first(), ids.last()) {
            (Some(a), Some(b)) => format!("known ids run from '{a}' to '{b}' ({} users)", ids.len()),
            _ => "the checkpoint has no social users".to_string(),
        };
        return Err(CliError::Usage(format!("unknown social user '{}'; {hint}", args.user)));
    };
    let mut scored: Vec<(usize, f64)> = (0..ck.num_items())
        .map(|i| ck.score_social(user, i).map(|s| (i, s)))
        .collect::<Result<_, _>>()?;
    nscr_core::eval::rank_items(&mut scored);
    let mut text = String::from("rank\titem_id\tscore\n");
    for (rank, (item, score)) in scored.iter().take(args.top).enumerate() {
        let _ = writeln!(text, "{}\t{}\t{}", rank + 1, ck.vocab.items[*item], score);
    }
    print!("{text}");
    if let Some(out) = &args.out {
        write_file(out, &text)?;
    }
    Ok(())
}
