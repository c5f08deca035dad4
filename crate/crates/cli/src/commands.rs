use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use kolsim::agents::{BehaviorPolicy, LlmConfig, LlmPolicy, RuleBasedPolicy, StochasticPolicy, Templates};
use kolsim::baselines::{rank_candidates, IcModel, Method};
use kolsim::dataset::{generate_synthetic, load_dataset, write_dataset, CampaignSpec, Dataset, SynthSpec};
use kolsim::graph::{CommentEdge, Snapshot};
use kolsim::metrics::{evaluate as eval_ranking, ndcg_at_k, EvalReport};
use kolsim::simulator::{
    fit_lifecycle, fit_models, fit_timeline, rank_influencers, run_all_candidates, run_campaign, score_campaign,
    CampaignRun, CampaignScore, FittedModels, InfluencerRanking, PeriodStats, PolicyKind, RawScore, SimulationConfig,
};
use kolsim::timeline::{fit_per_user, EmConfig};
use kolsim::UserId;

use crate::manifest::Recorder;
use crate::{Cli, Command, MethodArg, PolicyArg, SimFlags};

pub const TIMELINE_FILE: &str = "timeline.json";
pub const LIFECYCLE_FILE: &str = "lifecycle.json";
pub const SCORES_FILE: &str = "scores.json";
pub const RANKING_FILE: &str = "ranking.json";
pub const CONFIG_FILE: &str = "config.json";
pub const NDCG_CSV: &str = "ndcg_over_time.csv";

/// Settings that are not part of the simulation config proper.
#[derive(Debug, Default)]
struct Extras {
    llm_endpoint: Option<String>,
    jobs: Option<usize>,
}

/// Layers defaults, campaign file, `--config` and flags, in rising precedence.
fn resolve_config(flags: &SimFlags, campaign: Option<&CampaignSpec>) -> Result<(SimulationConfig, Extras)> {
    let mut v = serde_json::to_value(SimulationConfig::default())?;
    let obj = v.as_object_mut().expect("config serializes to an object");
    if let Some(c) = campaign {
        obj.insert("periods_T".into(), c.periods_t.into());
        obj.insert("period_minutes".into(), c.period_minutes.into());
    }
    let mut extras = Extras::default();
    if let Some(path) = &flags.config {
        let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let table: toml::Table = toml::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
        for (key, value) in table {
            let value = serde_json::to_value(value)?;
            match key.as_str() {
                "llm_endpoint" => extras.llm_endpoint = value.as_str().map(str::to_string),
                "jobs" => extras.jobs = value.as_u64().map(|j| j as usize),
                "periods_t" | "periods_T" => {
                    obj.insert("periods_T".into(), value);
                }
                k if obj.contains_key(k) => {
                    obj.insert(k.to_string(), value);
                }
                k => bail!("unknown key {k:?} in {}", path.display()),
            }
        }
    }
    let mut set = |k: &str, val: Option<Value>| {
        if let Some(val) = val {
            obj.insert(k.to_string(), val);
        }
    };
    set("seed", flags.seed.map(Value::from));
    set("periods_T", flags.periods.map(Value::from));
    set("period_minutes", flags.period_minutes.map(Value::from));
    set("alpha", flags.alpha.map(Value::from));
    set("theta", flags.theta.map(Value::from));
    set("k", flags.k.map(Value::from));
    set("survival_threshold", flags.survival_threshold.map(Value::from));
    set(
        "policy",
        flags.policy.map(|p| {
            Value::from(match p {
                PolicyArg::Rule => "rule",
                PolicyArg::Stochastic => "stochastic",
                PolicyArg::Llm => "llm",
            })
        }),
    );
    if flags.llm_endpoint.is_some() {
        extras.llm_endpoint = flags.llm_endpoint.clone();
    }
    if flags.jobs.is_some() {
        extras.jobs = flags.jobs;
    }
    let config: SimulationConfig = serde_json::from_value(v).context("invalid simulation settings")?;
    config.validate()?;
    Ok((config, extras))
}

fn make_policy(config: &SimulationConfig, extras: &Extras, templates: Option<&Path>) -> Result<Box<dyn BehaviorPolicy>> {
    Ok(match config.policy {
        PolicyKind::Rule => Box::new(RuleBasedPolicy::default()),
        PolicyKind::Stochastic => Box::new(StochasticPolicy),
        PolicyKind::Llm => {
            let endpoint = extras
                .llm_endpoint
                .clone()
                .ok_or_else(|| anyhow!("--policy llm requires --llm-endpoint"))?;
            let templates = match templates {
                Some(dir) => Templates::load(dir)?,
                None => Templates::default(),
            };
            Box::new(LlmPolicy::new(LlmConfig::new(endpoint), templates))
        }
    })
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build()?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
}

fn load(dir: &Path) -> Result<Dataset> {
    load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

/// File-system safe directory name for a user id.
pub fn influencer_dir(id: &UserId) -> String {
    id.as_str()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct PeriodsFile {
    snapshots: Vec<Snapshot>,
    stats: Vec<PeriodStats>,
}

#[derive(Serialize)]
struct CampaignStats<'a> {
    influencer_id: &'a UserId,
    vertices: usize,
    edges: usize,
    duplicates_dropped: usize,
    comments_per_commenter: f64,
    parse_failures: u64,
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { out, spec, users } => synth(&cli.flags, out, spec.as_deref(), *users),
        Command::FitTimeline {
            dataset,
            out,
            per_user_min_events,
        } => fit_timeline_cmd(&cli.flags, dataset, out, *per_user_min_events),
        Command::FitLifecycle { dataset, out } => fit_lifecycle_cmd(&cli.flags, dataset, out),
        Command::Simulate {
            dataset,
            out,
            influencer,
            all_candidates: _,
            models,
            templates,
        } => simulate(
            &cli.flags,
            dataset,
            out,
            influencer.as_deref(),
            models.as_deref(),
            templates.as_deref(),
        ),
        Command::Baseline {
            dataset,
            out,
            method,
            p,
            runs,
            top,
        } => baseline(&cli.flags, dataset, out, *method, *p, *runs, *top),
        Command::Rank { scores, out } => rank(&cli.flags, scores, out),
        Command::Evaluate { ranking, gold, out, ks } => evaluate(ranking, gold, out.as_deref(), ks),
        Command::Report {
            dataset,
            run,
            baselines,
            out,
            ks,
        } => report(&cli.flags, dataset, run, baselines, out, ks),
    }
}

fn synth(flags: &SimFlags, out: &Path, spec_path: Option<&Path>, users: Option<usize>) -> Result<()> {
    let (config, _) = resolve_config(flags, None)?;
    let mut rec = Recorder::new("synth", out)?;
    let mut spec: SynthSpec = match spec_path {
        Some(p) => {
            rec.input(p)?;
            read_json(p)?
        }
        None => SynthSpec::default(),
    };
    if let Some(n) = users {
        spec.n_users = n;
    }
    let data = generate_synthetic(&spec, config.seed)?;
    write_dataset(&data, out)?;
    for f in [
        kolsim::dataset::USERS_FILE,
        kolsim::dataset::FOLLOWS_FILE,
        kolsim::dataset::INTERACTIONS_FILE,
        kolsim::dataset::CAMPAIGN_FILE,
    ] {
        rec.artifact(f);
    }
    println!(
        "wrote {} users, {} follows, {} events to {}",
        data.users().len(),
        data.follows().len(),
        data.events().len(),
        out.display()
    );
    rec.finish(serde_json::to_value(&spec)?, Some(config.seed))?;
    Ok(())
}

fn fit_timeline_cmd(flags: &SimFlags, dataset: &Path, out: &Path, per_user: Option<usize>) -> Result<()> {
    let data = load(dataset)?;
    let (config, _) = resolve_config(flags, Some(data.campaign()))?;
    let mut rec = Recorder::new("fit-timeline", out)?;
    rec.input(dataset)?;
    let model = fit_timeline(&data, &config, config.seed)?;
    rec.write_json(TIMELINE_FILE, &model)?;
    if let Some(min_events) = per_user {
        let per: BTreeMap<UserId, _> = fit_per_user(&data, config.k, &EmConfig::default(), min_events, config.seed)
            .into_iter()
            .collect();
        rec.write_json("timeline_per_user.json", &per)?;
        println!("per-user models: {}", per.len());
    }
    for c in &model.components {
        println!(
            "component weight {:.4} mean {:.1} std {:.1}",
            c.weight,
            c.mean,
            c.variance.sqrt()
        );
    }
    rec.finish(serde_json::to_value(&config)?, Some(config.seed))?;
    Ok(())
}

fn fit_lifecycle_cmd(flags: &SimFlags, dataset: &Path, out: &Path) -> Result<()> {
    let data = load(dataset)?;
    let (config, _) = resolve_config(flags, Some(data.campaign()))?;
    let mut rec = Recorder::new("fit-lifecycle", out)?;
    rec.input(dataset)?;
    let model = fit_lifecycle(&data, &config)?;
    rec.write_json(LIFECYCLE_FILE, &model)?;
    for (name, b) in kolsim::lifecycle::COVARIATE_NAMES.iter().zip(&model.beta) {
        println!("{name:<24} beta {b:+.4}");
    }
    rec.finish(serde_json::to_value(&config)?, Some(config.seed))?;
    Ok(())
}

fn simulate(
    flags: &SimFlags,
    dataset: &Path,
    out: &Path,
    influencer: Option<&str>,
    models_dir: Option<&Path>,
    templates: Option<&Path>,
) -> Result<()> {
    let data = load(dataset)?;
    let (config, extras) = resolve_config(flags, Some(data.campaign()))?;
    let mut rec = Recorder::new("simulate", out)?;
    rec.input(dataset)?;
    let models = match models_dir {
        Some(dir) => {
            let (t, l) = (dir.join(TIMELINE_FILE), dir.join(LIFECYCLE_FILE));
            rec.input(&t)?;
            rec.input(&l)?;
            FittedModels {
                timeline: read_json(&t)?,
                lifecycle: read_json(&l)?,
            }
        }
        None => {
            let m = fit_models(&data, &config, config.seed)?;
            rec.write_json(Path::new("models").join(TIMELINE_FILE), &m.timeline)?;
            rec.write_json(Path::new("models").join(LIFECYCLE_FILE), &m.lifecycle)?;
            m
        }
    };
    let policy = make_policy(&config, &extras, templates)?;
    let runs: Vec<CampaignRun> = with_jobs(extras.jobs, || -> Result<Vec<CampaignRun>> {
        Ok(match influencer {
            Some(id) => vec![run_campaign(
                &data,
                &models,
                id,
                &data.campaign().ad_text,
                policy.as_ref(),
                &config,
            )?],
            None => run_all_candidates(&data, &models, policy.as_ref(), &config)?.runs,
        })
    })??;

    let mut stats = Vec::new();
    for run in &runs {
        let dir = PathBuf::from(influencer_dir(&run.influencer_id));
        rec.write(dir.join("edges.jsonl"), &run.graph.to_jsonl())?;
        rec.write(dir.join("edges.txt"), &run.graph.to_edge_list())?;
        rec.write_json(
            dir.join("periods.json"),
            &PeriodsFile {
                snapshots: run.graph.snapshots().to_vec(),
                stats: run.periods.clone(),
            },
        )?;
        stats.push(CampaignStats {
            influencer_id: &run.influencer_id,
            vertices: run.graph.vertices().len(),
            edges: run.graph.edges().len(),
            duplicates_dropped: run.graph.duplicates_dropped(),
            comments_per_commenter: run.comments_per_commenter(),
            parse_failures: run.parse_failures,
        });
    }
    let raw: Vec<RawScore> = runs.iter().map(|r| r.raw.clone()).collect();
    let scores = score_campaign(&raw, &config);
    let ranking = rank_influencers(&scores);
    rec.write_json(SCORES_FILE, &scores)?;
    rec.write_json(RANKING_FILE, &ranking)?;
    rec.write_json(CONFIG_FILE, &config)?;
    rec.write_json("stats.json", &stats)?;

    print_ranking(&ranking);
    let failures: u64 = runs.iter().map(|r| r.parse_failures).sum();
    if config.policy == PolicyKind::Llm {
        eprintln!("llm reply parse failures: {failures}");
    }
    rec.finish(serde_json::to_value(&config)?, Some(config.seed))?;
    Ok(())
}

fn print_ranking(ranking: &InfluencerRanking) {
    for e in &ranking.entries {
        match &e.detail {
            Some(d) => println!(
                "{:>3}  {:<20} S={:.4}  S_N={}  mean={:.3}  std={:.3}",
                e.rank, e.influencer_id, e.score, d.interaction_count, d.mean_inclination, d.std
            ),
            None => println!("{:>3}  {:<20} score={:.4}", e.rank, e.influencer_id, e.score),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn baseline(
    flags: &SimFlags,
    dataset: &Path,
    out: &Path,
    method: MethodArg,
    p: f64,
    runs: u32,
    top: Option<usize>,
) -> Result<()> {
    let data = load(dataset)?;
    let (config, extras) = resolve_config(flags, Some(data.campaign()))?;
    let mut rec = Recorder::new("baseline", out)?;
    rec.input(dataset)?;
    let model = IcModel {
        p,
        runs,
        seed: config.seed,
        ..Default::default()
    };
    let method = match method {
        MethodArg::Celf => Method::Celf,
        MethodArg::Celfpp => Method::Celfpp,
        MethodArg::Greedy => Method::Greedy,
    };
    let (ranking, selection) = with_jobs(extras.jobs, || rank_candidates(&data, method, top, &model))??;
    rec.write_json(RANKING_FILE, &ranking)?;
    rec.write_json("selection.json", &selection)?;
    print_ranking(&ranking);
    println!("spread evaluations: {}", selection.evaluations);
    rec.finish(serde_json::to_value(&model)?, Some(config.seed))?;
    Ok(())
}

fn rank(flags: &SimFlags, scores_path: &Path, out: &Path) -> Result<()> {
    let (config, _) = resolve_config(flags, None)?;
    let mut rec = Recorder::new("rank", out)?;
    rec.input(scores_path)?;
    let scores: Vec<CampaignScore> = read_json(scores_path)?;
    if scores.is_empty() {
        bail!("{} holds no scores", scores_path.display());
    }
    let raw: Vec<RawScore> = scores
        .iter()
        .map(|s| RawScore {
            influencer_id: s.influencer_id.clone(),
            interaction_count: s.interaction_count,
            mean_inclination: s.mean_inclination,
            std: s.std,
        })
        .collect();
    let ranking = rank_influencers(&score_campaign(&raw, &config));
    rec.write_json(RANKING_FILE, &ranking)?;
    print_ranking(&ranking);
    rec.finish(serde_json::to_value(&config)?, Some(config.seed))?;
    Ok(())
}

/// Gold ids from a campaign file, an object with `gold_promoter_ids`, or a
/// bare array.
fn read_gold(path: &Path) -> Result<Vec<UserId>> {
    let v: Value = read_json(path)?;
    let list = match &v {
        Value::Array(_) => v.clone(),
        Value::Object(o) => o
            .get("gold_promoter_ids")
            .cloned()
            .ok_or_else(|| anyhow!("{} has no gold_promoter_ids", path.display()))?,
        _ => bail!("{} is not a gold set", path.display()),
    };
    Ok(serde_json::from_value(list)?)
}

fn method_label(method: &str) -> String {
    method.to_uppercase()
}

fn evaluate(ranking_path: &Path, gold_path: &Path, out: Option<&Path>, ks: &[usize]) -> Result<()> {
    let ranking: InfluencerRanking = read_json(ranking_path)?;
    let gold = read_gold(gold_path)?;
    let report = eval_ranking(&ranking.ids(), &gold, ks)?;
    let label = method_label(&ranking.method);
    let table = EvalReport::table(&[(&label, &report)]);
    print!("{table}");
    if let Some(out) = out {
        let mut rec = Recorder::new("evaluate", out)?;
        rec.input(ranking_path)?;
        rec.input(gold_path)?;
        rec.write_json("report.json", &report)?;
        rec.write("report.txt", &table)?;
        rec.finish(serde_json::json!({ "ks": ks }), None)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MethodReport {
    method: String,
    report: EvalReport,
}

#[derive(Serialize)]
struct FullReport {
    methods: Vec<MethodReport>,
    ndcg_k: usize,
    ndcg_over_time: Vec<(u32, f64)>,
}

fn read_edges(path: &Path) -> Result<Vec<CommentEdge>> {
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).with_context(|| format!("parsing {}", path.display())))
        .collect()
}

fn report(flags: &SimFlags, dataset: &Path, run: &Path, baselines: &[PathBuf], out: &Path, ks: &[usize]) -> Result<()> {
    const NDCG_K: usize = 10;
    let data = load(dataset)?;
    let gold = data.campaign().gold_promoter_ids.clone();
    let mut rec = Recorder::new("report", out)?;
    rec.input(&dataset.join(kolsim::dataset::CAMPAIGN_FILE))?;

    let run_config = run.join(CONFIG_FILE);
    let config: SimulationConfig = if run_config.exists() {
        rec.input(&run_config)?;
        read_json(&run_config)?
    } else {
        resolve_config(flags, Some(data.campaign()))?.0
    };

    let mut methods = Vec::new();
    for path in std::iter::once(run.join(RANKING_FILE)).chain(baselines.iter().cloned()) {
        rec.input(&path)?;
        let ranking: InfluencerRanking = read_json(&path)?;
        methods.push(MethodReport {
            method: ranking.method.clone(),
            report: eval_ranking(&ranking.ids(), &gold, ks)?,
        });
    }

    let scores_path = run.join(SCORES_FILE);
    rec.input(&scores_path)?;
    let scores: Vec<CampaignScore> = read_json(&scores_path)?;
    let mut edges = Vec::new();
    for s in &scores {
        let path = run.join(influencer_dir(&s.influencer_id)).join("edges.jsonl");
        rec.input(&path)?;
        edges.push((s.influencer_id.clone(), read_edges(&path)?));
    }
    let last = edges
        .iter()
        .flat_map(|(_, e)| e.iter().map(|x| x.period))
        .max()
        .unwrap_or(0)
        .max(config.periods_t);
    let mut curve = Vec::new();
    for t in 1..=last {
        let raw: Vec<RawScore> = edges
            .iter()
            .map(|(id, e)| RawScore::from_edges(id, e.iter().filter(|x| x.period <= t)))
            .collect();
        let ranking = rank_influencers(&score_campaign(&raw, &config));
        curve.push((t, ndcg_at_k(&ranking.ids(), &gold, NDCG_K)?));
    }

    let labels: Vec<String> = methods.iter().map(|m| method_label(&m.method)).collect();
    let rows: Vec<(&str, &EvalReport)> = labels
        .iter()
        .zip(&methods)
        .map(|(l, m)| (l.as_str(), &m.report))
        .collect();
    let table = EvalReport::table(&rows);
    print!("{table}");
    let mut csv = format!("period,ndcg@{NDCG_K}\n");
    for (t, v) in &curve {
        csv.push_str(&format!("{t},{v}\n"));
    }
    rec.write("report.txt", &table)?;
    rec.write(NDCG_CSV, &csv)?;
    rec.write_json(
        "report.json",
        &FullReport {
            methods,
            ndcg_k: NDCG_K,
            ndcg_over_time: curve,
        },
    )?;
    rec.finish(serde_json::to_value(&config)?, Some(config.seed))?;
    Ok(())
}
