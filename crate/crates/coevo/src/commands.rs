//! Library entry points behind the CLI subcommands: rollout collection,
//! training-batch export, reporting, and the simulation front-end. The CLI
//! binary stays thin; everything here is callable programmatically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::{ConfigError, RunConfig};
use crate::credit::assign_advantages;
use crate::policy::{
    GatewayError, HttpGateway, PolicyGateway, Role, ScriptedGateway, ScriptedResponse,
};
use crate::reward::{load_tasks, RewardBreakdown, RewardScorer, Task, TaskFileError};
use crate::rollout::{build_plan, collect, CollectContext, PlanError, RolloutTree, TrajectoryRecord};
use crate::runtime::{RuntimeEnv, Sandbox};
use crate::schedule::{stage_mask, SchedulePolicy};
use crate::simlab::{
    compare_schedules, executor_bottleneck_env, simulate_run, ScheduleSummary, SimError,
    SyntheticEnv,
};
use crate::store::{ExportOutcome, StoreError, TrajectoryStore};
use crate::workflow::{
    classify_structure, parse_design_output, StructureClass, ToolRegistry,
};

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tasks(#[from] TaskFileError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("gateway setup failed: {0}")]
    Gateway(String),
    #[error("rollout for query '{query_id}' aborted before any record was written: {reason}")]
    RolloutAborted { query_id: String, reason: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o failure at {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CommandError {
    /// Stable code for the machine-readable CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            CommandError::Config(_) => "config",
            CommandError::Tasks(_) => "tasks",
            CommandError::Store(_) => "store",
            CommandError::Plan(_) => "plan",
            CommandError::Gateway(_) => "gateway",
            CommandError::RolloutAborted { .. } => "rollout_aborted",
            CommandError::Sim(_) => "sim",
            CommandError::Io { .. } => "io",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io { path: path.display().to_string(), source }
}

/// Build the configured policy backend.
pub fn build_gateway(config: &RunConfig) -> Result<Box<dyn PolicyGateway>, CommandError> {
    match config.policy.backend.as_str() {
        "scripted" => {
            let mut gateway = match &config.scripted.fixtures {
                Some(path) => ScriptedGateway::from_file(Path::new(path))
                    .map_err(|e| CommandError::Gateway(e.to_string()))?,
                None => ScriptedGateway::new(),
            };
            if let Some(text) = &config.scripted.designer_fallback {
                gateway = gateway.with_role_fallback(Role::Designer, ScriptedResponse::text(text));
            }
            if let Some(text) = &config.scripted.executor_fallback {
                gateway = gateway.with_role_fallback(Role::Executor, ScriptedResponse::text(text));
            }
            if config.scripted.delay_ms > 0 {
                gateway =
                    gateway.with_delay(std::time::Duration::from_millis(config.scripted.delay_ms));
            }
            Ok(Box::new(gateway))
        }
        "http" => {
            let http = config.policy.http.clone().ok_or_else(|| {
                CommandError::Gateway("http backend requires [policy.http]".into())
            })?;
            let gateway =
                HttpGateway::new(http).map_err(|e: GatewayError| CommandError::Gateway(e.to_string()))?;
            Ok(Box::new(gateway))
        }
        other => Err(CommandError::Gateway(format!("unknown backend '{other}'"))),
    }
}

/// Deterministic default run id: a digest of the run-shaping config fields
/// and the task ids.
fn derive_run_id(config: &RunConfig, tasks: &[Task]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!(
        "m={};n={};k={};kind={};lambda={};mode={};ids={}",
        config.rollout.m,
        config.rollout.n,
        config.schedule.k,
        config.schedule.kind,
        config.reward.lambda,
        config.policy.mode,
        tasks.iter().map(|t| t.id.as_str()).collect::<Vec<_>>().join(",")
    ));
    format!("run-{}", &hex::encode(hasher.finalize())[..12])
}

/// Rows stored per tree: designer records first, then executor records with
/// their execution's reward breakdown, in slot order.
fn store_rows(tree: &RolloutTree) -> Vec<(TrajectoryRecord, Option<RewardBreakdown>)> {
    let mut rows = Vec::new();
    for design in &tree.designs {
        rows.push((design.designer_trajectory.clone(), None));
    }
    for design in &tree.designs {
        for execution in &design.executions {
            for record in &execution.trajectories {
                rows.push((record.clone(), Some(execution.reward.clone())));
            }
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSummary {
    pub run_id: String,
    pub trees: usize,
    pub records_written: u64,
    pub schedule_step: u64,
    /// Mean combined reward over all executions (placeholders included).
    pub mean_execution_reward: f64,
}

/// Collect, score, credit, and persist one batch of queries.
///
/// Trees are written incrementally (one tree's records append atomically
/// line by line); a tree whose designer sampling fails entirely aborts the
/// command before that tree writes anything.
pub fn cmd_rollout(
    config: &RunConfig,
    run_id_override: Option<&str>,
) -> Result<RolloutSummary, CommandError> {
    config.validate()?;
    let tasks = load_tasks(&config.data.tasks)?;
    let store = TrajectoryStore::open(&config.store.dir)?;
    let schedule_step = store.step_t();
    let run_id = run_id_override
        .map(str::to_string)
        .unwrap_or_else(|| derive_run_id(config, &tasks));

    if tasks.is_empty() {
        return Ok(RolloutSummary {
            run_id,
            trees: 0,
            records_written: 0,
            schedule_step,
            mean_execution_reward: 0.0,
        });
    }

    let gateway = build_gateway(config)?;
    let binding = config.binding()?;
    let sandbox = Sandbox::new(config.sandbox.clone());
    let scorer = RewardScorer::new(config.reward.lambda, sandbox.clone());
    let registry = ToolRegistry::global();
    let env = RuntimeEnv::new(registry, sandbox).with_sampling(config.executor_sampling());

    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut records_written = 0u64;
    let mut reward_sum = 0.0;
    let mut executions = 0usize;

    for task in &tasks {
        let ordinal = seen.entry(task.id.clone()).or_insert(0);
        let query_id = if *ordinal == 0 {
            task.id.clone()
        } else {
            format!("{}#{}", task.id, *ordinal)
        };
        *ordinal += 1;

        let plan = build_plan(query_id.clone(), task.question.clone(), config.rollout.m, config.rollout.n)?;
        let mut ctx = CollectContext::new(gateway.as_ref(), &binding, &scorer, &env, task);
        ctx.designer_sampling = config.designer_sampling();

        let mut tree = collect(&plan, &ctx);
        if let Some(reason) = tree.aborted.clone() {
            return Err(CommandError::RolloutAborted { query_id, reason });
        }
        assign_advantages(&mut tree, config.credit.epsilon_norm);
        for row in tree.reward_matrix().iter().flatten() {
            reward_sum += row;
            executions += 1;
        }
        records_written +=
            store.append(&run_id, schedule_step, task.dataset.as_deref(), store_rows(&tree))?;
    }

    Ok(RolloutSummary {
        run_id,
        trees: tasks.len(),
        records_written,
        schedule_step,
        mean_execution_reward: if executions == 0 { 0.0 } else { reward_sum / executions as f64 },
    })
}

/// Export pending records under the current stage mask and advance `t`.
pub fn cmd_export(config: &RunConfig, since_step: u64) -> Result<ExportOutcome, CommandError> {
    config.validate()?;
    let store = TrajectoryStore::open(&config.store.dir)?;
    let policy = config.schedule_policy()?;
    Ok(store.export(policy, since_step)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardByStepRow {
    pub step: u64,
    pub records: usize,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageStatsRow {
    pub stage_index: u64,
    pub active_role: String,
    pub records: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureShareRow {
    pub dataset: String,
    pub designs: usize,
    pub single_pct: f64,
    pub reflection_pct: f64,
    pub ensemble_pct: f64,
    pub other_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub reward_by_step: Vec<RewardByStepRow>,
    pub stage_stats: Vec<StageStatsRow>,
    pub structure_share: Vec<StructureShareRow>,
    /// Files written under `<store>/reports/`.
    pub files: Vec<PathBuf>,
}

/// Summarize the store: reward statistics per step and per stage, and the
/// structure share of parsed designs per dataset tag. Writes CSV files and,
/// when requested, an SVG reward curve. Never mutates the store.
pub fn cmd_report(config: &RunConfig, plot: bool) -> Result<ReportSummary, CommandError> {
    config.validate()?;
    let store = TrajectoryStore::open(&config.store.dir)?;
    let rows = store.read_all()?;
    if rows.is_empty() {
        return Err(CommandError::Store(StoreError::Empty));
    }
    let policy = config.schedule_policy()?;

    // Reward series over executor records (each carries its execution's
    // combined reward).
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.record.role == Role::Executor) {
        by_step.entry(row.schedule_step).or_default().push(row.record.reward);
    }
    let reward_by_step: Vec<RewardByStepRow> = by_step
        .iter()
        .map(|(&step, rewards)| RewardByStepRow {
            step,
            records: rewards.len(),
            mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
        })
        .collect();

    // Stage grouping: stagewise stages are K-step phases; constant policies
    // are a single phase.
    let stage_of = |step: u64| match policy {
        SchedulePolicy::Stagewise { k } => step / k.max(1),
        _ => 0,
    };
    let mut by_stage: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.record.role == Role::Executor) {
        by_stage.entry(stage_of(row.schedule_step)).or_default().push(row.record.reward);
    }
    let stage_stats: Vec<StageStatsRow> = by_stage
        .iter()
        .map(|(&stage_index, rewards)| {
            let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
            let variance =
                rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rewards.len() as f64;
            let step_in_stage = match policy {
                SchedulePolicy::Stagewise { k } => stage_index * k,
                _ => 0,
            };
            let mask = stage_mask(step_in_stage, policy);
            StageStatsRow {
                stage_index,
                active_role: mask
                    .active_role()
                    .map(|r| r.as_str().to_string())
                    .unwrap_or_else(|| "both".into()),
                records: rewards.len(),
                mean_reward: mean,
                std_reward: variance.sqrt(),
            }
        })
        .collect();

    // Structure share over parsed stored designs, per dataset tag.
    let mut share: BTreeMap<String, BTreeMap<StructureClass, usize>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.record.role == Role::Designer) {
        let Ok(spec) = parse_design_output(&row.record.output_text) else {
            continue;
        };
        let dataset = row.dataset.clone().unwrap_or_else(|| "(untagged)".into());
        *share.entry(dataset).or_default().entry(classify_structure(&spec)).or_insert(0) += 1;
    }
    let structure_share: Vec<StructureShareRow> = share
        .iter()
        .map(|(dataset, counts)| {
            let designs: usize = counts.values().sum();
            let pct = |class: StructureClass| {
                100.0 * counts.get(&class).copied().unwrap_or(0) as f64 / designs as f64
            };
            StructureShareRow {
                dataset: dataset.clone(),
                designs,
                single_pct: pct(StructureClass::Single),
                reflection_pct: pct(StructureClass::Reflection),
                ensemble_pct: pct(StructureClass::Ensemble),
                other_pct: pct(StructureClass::Other),
            }
        })
        .collect();

    // Emit CSVs (and the optional plot) under <store>/reports/.
    let report_dir = config.store.dir.join("reports");
    std::fs::create_dir_all(&report_dir).map_err(io_err(&report_dir))?;
    let mut files = Vec::new();

    let path = report_dir.join("reward_by_step.csv");
    let mut csv = String::from("step,records,mean_reward\n");
    for row in &reward_by_step {
        csv.push_str(&format!("{},{},{}\n", row.step, row.records, row.mean_reward));
    }
    std::fs::write(&path, csv).map_err(io_err(&path))?;
    files.push(path);

    let path = report_dir.join("stage_stats.csv");
    let mut csv = String::from("stage_index,active_role,records,mean_reward,std_reward\n");
    for row in &stage_stats {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.stage_index, row.active_role, row.records, row.mean_reward, row.std_reward
        ));
    }
    std::fs::write(&path, csv).map_err(io_err(&path))?;
    files.push(path);

    let path = report_dir.join("structure_share.csv");
    let mut csv = String::from("dataset,designs,single_pct,reflection_pct,ensemble_pct,other_pct\n");
    for row in &structure_share {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(&row.dataset),
            row.designs,
            row.single_pct,
            row.reflection_pct,
            row.ensemble_pct,
            row.other_pct
        ));
    }
    std::fs::write(&path, csv).map_err(io_err(&path))?;
    files.push(path);

    if plot {
        let path = report_dir.join("reward_curve.svg");
        let series: Vec<(f64, f64)> = reward_by_step
            .iter()
            .map(|r| (r.step as f64, r.mean_reward))
            .collect();
        std::fs::write(&path, svg_line_plot(&series, "mean reward vs training step"))
            .map_err(io_err(&path))?;
        files.push(path);
    }

    Ok(ReportSummary { reward_by_step, stage_stats, structure_share, files })
}

fn csv_field(raw: &str) -> String {
    if raw.contains([',', '"', '\n']) {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

/// Minimal static line plot; enough for eyeballing reward curves.
fn svg_line_plot(series: &[(f64, f64)], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 320.0;
    const PAD: f64 = 40.0;
    let x_max = series.iter().map(|&(x, _)| x).fold(1.0, f64::max);
    let y_max = series.iter().map(|&(_, y)| y).fold(1.0, f64::max);
    let map_x = |x: f64| PAD + (x / x_max) * (W - 2.0 * PAD);
    let map_y = |y: f64| H - PAD - (y / y_max) * (H - 2.0 * PAD);
    let points: Vec<String> =
        series.iter().map(|&(x, y)| format!("{:.2},{:.2}", map_x(x), map_y(y))).collect();
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\">",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>",
            "<text x=\"{tx}\" y=\"20\" font-size=\"13\" text-anchor=\"middle\">{title}</text>",
            "<line x1=\"{pad}\" y1=\"{ybase}\" x2=\"{xend}\" y2=\"{ybase}\" stroke=\"black\"/>",
            "<line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{ybase}\" stroke=\"black\"/>",
            "<text x=\"{pad}\" y=\"{ylabel}\" font-size=\"10\">0</text>",
            "<text x=\"10\" y=\"{pad}\" font-size=\"10\">{ymax:.2}</text>",
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{points}\"/>",
            "</svg>"
        ),
        w = W,
        h = H,
        tx = W / 2.0,
        title = title,
        pad = PAD,
        ybase = H - PAD,
        xend = W - PAD,
        ylabel = H - PAD + 14.0,
        ymax = y_max,
        points = points.join(" "),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub rows: Vec<ScheduleSummary>,
    pub curves_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Run the configured schedule comparison in the synthetic environment and
/// emit line-delimited curves plus a CSV summary under `<store>/sim/`.
pub fn cmd_simulate(config: &RunConfig) -> Result<SimulateSummary, CommandError> {
    config.validate()?;
    let env = match &config.sim.env {
        Some(path) => SyntheticEnv::load(path)?,
        None => executor_bottleneck_env(),
    };
    let policies = config.sim_policies()?;
    let m = config.sim.m.unwrap_or(config.rollout.m);
    let n = config.sim.n.unwrap_or(config.rollout.n);
    let steps = config.sim.steps;
    let seeds = &config.sim.seeds;

    let rows = compare_schedules(&env, &policies, steps, m, n, seeds)?;

    let sim_dir = config.store.dir.join("sim");
    std::fs::create_dir_all(&sim_dir).map_err(io_err(&sim_dir))?;

    // Line-delimited curve records: one line per (policy, seed, step).
    let curves_path = sim_dir.join("curves.jsonl");
    let mut lines = String::new();
    for (policy, row) in policies.iter().zip(&rows) {
        for &seed in seeds {
            let curve = simulate_run(&env, *policy, steps, m, n, seed)?;
            for (step, (reward, role)) in
                curve.mean_rewards.iter().zip(&curve.active_roles).enumerate()
            {
                lines.push_str(
                    &serde_json::json!({
                        "policy": row.policy,
                        "seed": seed,
                        "step": step,
                        "mean_reward": reward,
                        "active_role": role,
                    })
                    .to_string(),
                );
                lines.push('\n');
            }
        }
    }
    std::fs::write(&curves_path, lines).map_err(io_err(&curves_path))?;

    let summary_path = sim_dir.join("summary.csv");
    let mut csv = String::from("policy,seeds,final_window_mean,variance\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            csv_field(&row.policy),
            row.per_seed.len(),
            row.final_window_mean,
            row.variance
        ));
    }
    std::fs::write(&summary_path, csv).map_err(io_err(&summary_path))?;

    Ok(SimulateSummary { rows, curves_path, summary_path })
}

/// Load and validate a config file, returning the normalized config.
pub fn cmd_validate_config(path: &Path) -> Result<RunConfig, CommandError> {
    Ok(RunConfig::load(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::{instantiate_template, serialize_design, TemplateId};

    fn write_math_task(dir: &Path, id: &str, gt: &str) {
        std::fs::write(
            dir.join(format!("{id}.toml")),
            format!(
                "id = \"{id}\"\nkind = \"math\"\nquestion = \"solve {id}\"\nground_truth = \"{gt}\"\ndataset = \"demo\"\n"
            ),
        )
        .unwrap();
    }

    fn scripted_config(tasks: &Path, store: &Path) -> RunConfig {
        let mut config = RunConfig::default();
        config.rollout.m = 2;
        config.rollout.n = 2;
        config.data.tasks = tasks.to_path_buf();
        config.store.dir = store.to_path_buf();
        let design = serialize_design(&instantiate_template(TemplateId::Single, "solve t1", None));
        config.scripted.designer_fallback = Some(design);
        config.scripted.executor_fallback = Some("the answer is \\boxed{7}".into());
        config
    }

    #[test]
    fn rollout_then_export_then_report_pipeline() {
        let tasks = tempfile::tempdir().unwrap();
        let store = tempfile::tempdir().unwrap();
        write_math_task(tasks.path(), "t1", "7");
        let config = scripted_config(tasks.path(), store.path());

        let summary = cmd_rollout(&config, Some("run-x")).unwrap();
        assert_eq!(summary.trees, 1);
        // 2 designer records + 2×2 executions × 1 turn.
        assert_eq!(summary.records_written, 6);
        assert!((summary.mean_execution_reward - 1.4).abs() < 1e-12);

        let outcome = cmd_export(&config, 0).unwrap();
        let ExportOutcome::Written { lines, step, .. } = outcome else { panic!("expected batch") };
        assert_eq!(step, 0);
        assert_eq!(lines, 4, "t=0 is an executor stage");

        let report = cmd_report(&config, true).unwrap();
        assert_eq!(report.reward_by_step.len(), 1);
        assert_eq!(report.reward_by_step[0].records, 4);
        assert_eq!(report.structure_share.len(), 1);
        let row = &report.structure_share[0];
        assert_eq!(row.dataset, "demo");
        assert_eq!(row.designs, 2);
        assert_eq!(row.single_pct, 100.0);
        assert!(report.files.iter().all(|f| f.exists()));
    }

    #[test]
    fn report_does_not_mutate_the_store() {
        let tasks = tempfile::tempdir().unwrap();
        let store_dir = tempfile::tempdir().unwrap();
        write_math_task(tasks.path(), "t1", "7");
        let config = scripted_config(tasks.path(), store_dir.path());
        cmd_rollout(&config, Some("run-x")).unwrap();

        let store = TrajectoryStore::open(store_dir.path()).unwrap();
        let before = store.digest().unwrap();
        cmd_report(&config, false).unwrap();
        cmd_report(&config, true).unwrap();
        assert_eq!(store.digest().unwrap(), before);
    }

    #[test]
    fn empty_task_batch_is_a_no_op_success() {
        let tasks = tempfile::tempdir().unwrap();
        let store = tempfile::tempdir().unwrap();
        let config = scripted_config(tasks.path(), store.path());
        let summary = cmd_rollout(&config, None).unwrap();
        assert_eq!(summary.trees, 0);
        assert_eq!(summary.records_written, 0);
    }

    #[test]
    fn total_designer_failure_fails_before_writing() {
        let tasks = tempfile::tempdir().unwrap();
        let store_dir = tempfile::tempdir().unwrap();
        write_math_task(tasks.path(), "t1", "7");
        let mut config = scripted_config(tasks.path(), store_dir.path());
        config.scripted.designer_fallback = None; // every designer call misses

        let err = cmd_rollout(&config, None).unwrap_err();
        assert!(matches!(err, CommandError::RolloutAborted { .. }));
        let store = TrajectoryStore::open(store_dir.path()).unwrap();
        assert!(store.read_all().unwrap().is_empty());
    }

    #[test]
    fn report_on_empty_store_is_an_error() {
        let tasks = tempfile::tempdir().unwrap();
        let store = tempfile::tempdir().unwrap();
        let config = scripted_config(tasks.path(), store.path());
        let err = cmd_report(&config, false).unwrap_err();
        assert!(matches!(err, CommandError::Store(StoreError::Empty)));
        assert_eq!(err.code(), "store");
    }

    #[test]
    fn simulate_writes_curves_and_summary() {
        let tasks = tempfile::tempdir().unwrap();
        let store = tempfile::tempdir().unwrap();
        let mut config = scripted_config(tasks.path(), store.path());
        config.sim.steps = 40;
        config.sim.seeds = vec![1, 2, 3];
        config.sim.policies = vec!["stagewise".into(), "executor_only".into()];
        config.sim.k_values = vec![10];

        let summary = cmd_simulate(&config).unwrap();
        assert_eq!(summary.rows.len(), 2);
        assert_eq!(summary.rows[0].policy, "stagewise(k=10)");
        let curves = std::fs::read_to_string(&summary.curves_path).unwrap();
        // 2 policies × 3 seeds × 40 steps.
        assert_eq!(curves.lines().count(), 2 * 3 * 40);
        for line in curves.lines().take(5) {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.get("policy").is_some() && v.get("mean_reward").is_some());
        }
        assert!(std::fs::read_to_string(&summary.summary_path).unwrap().starts_with("policy,"));
    }

    #[test]
    fn simulate_with_missing_env_file_is_a_config_style_error() {
        let tasks = tempfile::tempdir().unwrap();
        let store = tempfile::tempdir().unwrap();
        let mut config = scripted_config(tasks.path(), store.path());
        config.sim.env = Some(PathBuf::from("/nonexistent/env.toml"));
        let err = cmd_simulate(&config).unwrap_err();
        assert!(matches!(err, CommandError::Sim(SimError::File { .. })));
    }

    #[test]
    fn seed_list_length_drives_curve_count() {
        let tasks = tempfile::tempdir().unwrap();
        let store = tempfile::tempdir().unwrap();
        let mut config = scripted_config(tasks.path(), store.path());
        config.sim.steps = 10;
        config.sim.seeds = vec![7, 8, 9];
        config.sim.policies = vec!["executor_only".into()];
        let summary = cmd_simulate(&config).unwrap();
        assert_eq!(summary.rows[0].per_seed.len(), 3);
        let curves = std::fs::read_to_string(&summary.curves_path).unwrap();
        assert_eq!(curves.lines().count(), 3 * 10);
    }

    #[test]
    fn export_reaches_nothing_after_consuming_the_store() {
        let tasks = tempfile::tempdir().unwrap();
        let store = tempfile::tempdir().unwrap();
        write_math_task(tasks.path(), "t1", "7");
        let config = scripted_config(tasks.path(), store.path());
        cmd_rollout(&config, None).unwrap();
        assert!(matches!(cmd_export(&config, 0).unwrap(), ExportOutcome::Written { .. }));
        assert!(matches!(cmd_export(&config, 0).unwrap(), ExportOutcome::NothingToExport));
    }

    #[test]
    fn duplicate_task_ids_get_unique_query_ids() {
        let tasks = tempfile::tempdir().unwrap();
        let store_dir = tempfile::tempdir().unwrap();
        write_math_task(tasks.path(), "t1", "7");
        // Same task id in a second file.
        std::fs::write(
            tasks.path().join("zz_dup.toml"),
            "id = \"t1\"\nkind = \"math\"\nquestion = \"solve t1\"\nground_truth = \"7\"\n",
        )
        .unwrap();
        let config = scripted_config(tasks.path(), store_dir.path());
        cmd_rollout(&config, None).unwrap();
        let store = TrajectoryStore::open(store_dir.path()).unwrap();
        let rows = store.read_all().unwrap();
        let mut ids: Vec<String> = rows.iter().map(|r| r.record.id.clone()).collect();
        let total = ids.len();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), total, "record ids must stay unique across duplicate task ids");
    }
}
