//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its number. Tolerances are pinned in the assertions.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use coevo::config::RunConfig;
use coevo::commands::{cmd_export, cmd_rollout};
use coevo::credit::{
    design_mean_rewards, designer_advantages, executor_advantages, grpo_objective, LossInputs,
    LossItem,
};
use coevo::policy::{Message, PolicyBinding, Role, ScriptedGateway, ScriptedResponse};
use coevo::reward::{score_code, score_math, total_reward, RewardBreakdown, TestCase};
use coevo::rollout::{DesignNode, ExecutionNode, RolloutConfig, RolloutTree, TrajectoryRecord};
use coevo::runtime::{run_workflow, RuntimeEnv, Sandbox, SandboxConfig, Termination};
use coevo::schedule::{stage_mask, SchedulePolicy};
use coevo::simlab::{executor_bottleneck_env, simulate_run};
use coevo::store::{ExportOutcome, TrajectoryStore};
use coevo::workflow::{
    instantiate_template, serialize_design, validate_workflow, NodeSpec, TemplateId, ToolRegistry,
};

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Independent naive statistics used as the credit oracle.
mod oracle {
    pub fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    pub fn pop_std(xs: &[f64]) -> f64 {
        let mu = mean(xs);
        (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / xs.len() as f64).sqrt()
    }

    /// Eq.-style normalization applied literally, element by element.
    pub fn normalize(xs: &[f64], eps: f64) -> Vec<f64> {
        let mu = mean(xs);
        let sigma = pop_std(xs);
        xs.iter().map(|x| (x - mu) / (sigma + eps)).collect()
    }

    /// Clipped-surrogate per-item value written out longhand.
    pub fn surrogate(rho: f64, advantage: f64, eps: f64) -> f64 {
        let clipped = if rho < 1.0 - eps {
            1.0 - eps
        } else if rho > 1.0 + eps {
            1.0 + eps
        } else {
            rho
        };
        let a = rho * advantage;
        let b = clipped * advantage;
        if a < b {
            a
        } else {
            b
        }
    }
}

fn record(query: &str, i: usize, j: usize, t: usize, reward: f64) -> TrajectoryRecord {
    TrajectoryRecord {
        id: format!("{query}:d{i}:e{j}:t{t}"),
        query_id: query.into(),
        role: Role::Executor,
        design_index: i,
        execution_index: Some(j),
        policy_id: "P".into(),
        context_messages: vec![],
        output_text: String::new(),
        token_logprobs: None,
        reward,
        advantage: None,
        stage_weight: None,
    }
}

/// Random tree with M ≤ 5, N ≤ 5, rewards from {0, 0.4, 1, 1.4}, and
/// execution trajectory multiplicities in 0..=3.
fn random_tree(rng: &mut StdRng) -> RolloutTree {
    const REWARDS: [f64; 4] = [0.0, 0.4, 1.0, 1.4];
    let m = rng.gen_range(1..=5);
    let n = rng.gen_range(1..=5);
    let designs = (0..m)
        .map(|i| {
            let executions = (0..n)
                .map(|j| {
                    let reward = REWARDS[rng.gen_range(0..REWARDS.len())];
                    let multiplicity = rng.gen_range(0..=3);
                    ExecutionNode {
                        index: j,
                        transcript: None,
                        reward: RewardBreakdown {
                            r_correct: 0,
                            r_format: 0.0,
                            lambda: 0.4,
                            total: reward,
                        },
                        trajectories: (0..multiplicity)
                            .map(|t| record("q", i, j, t, reward))
                            .collect(),
                        fault: None,
                    }
                })
                .collect();
            DesignNode {
                index: i,
                designer_trajectory: TrajectoryRecord {
                    id: format!("q:d{i}:designer"),
                    query_id: "q".into(),
                    role: Role::Designer,
                    design_index: i,
                    execution_index: None,
                    policy_id: "P".into(),
                    context_messages: vec![],
                    output_text: String::new(),
                    token_logprobs: None,
                    reward: 0.0,
                    advantage: None,
                    stage_weight: None,
                },
                spec: None,
                parse_failure: None,
                executions,
            }
        })
        .collect();
    RolloutTree {
        query_id: "q".into(),
        query: "q?".into(),
        config: RolloutConfig { m, n },
        designs,
        aborted: None,
    }
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_credit_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(0xC0E501);
    let eps = 1e-6;

    for _ in 0..1000 {
        let tree = random_tree(&mut rng);

        // Designer route vs oracle.
        let means = design_mean_rewards(&tree);
        let naive_means: Vec<f64> = tree
            .designs
            .iter()
            .map(|d| oracle::mean(&d.executions.iter().map(|e| e.reward.total).collect::<Vec<_>>()))
            .collect();
        for (a, b) in means.iter().zip(&naive_means) {
            assert!((a - b).abs() < 1e-9, "design means disagree: {a} vs {b}");
        }
        let advantages = designer_advantages(&means, eps);
        let naive = oracle::normalize(&naive_means, eps);
        for (a, b) in advantages.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-9, "designer advantages disagree: {a} vs {b}");
        }

        // Executor route vs oracle over the trajectory multiset.
        let executor = executor_advantages(&tree, eps);
        let multiset: Vec<f64> = tree
            .designs
            .iter()
            .flat_map(|d| &d.executions)
            .flat_map(|e| e.trajectories.iter().map(|t| t.reward))
            .collect();
        if multiset.is_empty() {
            assert!(executor.is_empty());
            continue;
        }
        let naive = oracle::normalize(&multiset, eps);
        assert_eq!(executor.len(), naive.len());
        for (a, b) in executor.iter().zip(&naive) {
            assert!((a.advantage - b).abs() < 1e-9, "executor advantages disagree");
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(5), "oracle sweep took {elapsed:?}");
    println!("ACCEPTANCE 1 PASS: 1000 random trees match the naive credit oracle within 1e-9 ({elapsed:?})");
}

#[test]
fn acceptance_02_advantage_normalization() {
    let mut rng = StdRng::seed_from_u64(0xC0E502);
    let eps = 1e-6;
    let mut unit_scale_checked = 0usize;

    for _ in 0..1000 {
        let tree = random_tree(&mut rng);
        let means = design_mean_rewards(&tree);
        let designer = designer_advantages(&means, eps);
        let sum: f64 = designer.iter().sum();
        assert!(sum.abs() < 1e-9, "designer advantages must sum to 0, got {sum}");

        let sigma_d = {
            let mu = means.iter().sum::<f64>() / means.len() as f64;
            (means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / means.len() as f64).sqrt()
        };
        if sigma_d >= 1000.0 * eps {
            let mu = designer.iter().sum::<f64>() / designer.len() as f64;
            let std =
                (designer.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / designer.len() as f64).sqrt();
            assert!((std - 1.0).abs() < 1e-3, "designer advantage std {std} not ≈ 1");
            unit_scale_checked += 1;
        }

        let executor = executor_advantages(&tree, eps);
        if !executor.is_empty() {
            let sum: f64 = executor.iter().map(|a| a.advantage).sum();
            assert!(sum.abs() < 1e-9, "executor advantages must sum to 0, got {sum}");
            let rewards: Vec<f64> = tree
                .designs
                .iter()
                .flat_map(|d| &d.executions)
                .flat_map(|e| e.trajectories.iter().map(|t| t.reward))
                .collect();
            let mu = rewards.iter().sum::<f64>() / rewards.len() as f64;
            let sigma =
                (rewards.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / rewards.len() as f64).sqrt();
            if sigma >= 1000.0 * eps {
                let advs: Vec<f64> = executor.iter().map(|a| a.advantage).collect();
                let amu = advs.iter().sum::<f64>() / advs.len() as f64;
                let astd =
                    (advs.iter().map(|a| (a - amu).powi(2)).sum::<f64>() / advs.len() as f64).sqrt();
                assert!((astd - 1.0).abs() < 1e-3, "executor advantage std {astd} not ≈ 1");
                unit_scale_checked += 1;
            }
        }
    }

    assert!(unit_scale_checked > 500, "unit-scale branch barely exercised");
    println!("ACCEPTANCE 2 PASS: zero-mean within 1e-9 and unit scale within 1e-3 on {unit_scale_checked} groups");
}

#[test]
fn acceptance_03_schedule_conformance() {
    let started = Instant::now();

    for k in [1u64, 10, 30] {
        let policy = SchedulePolicy::stagewise(k).unwrap();
        for t in 0..(10 * k) {
            let mask = stage_mask(t, policy);
            let expected = if (t / k) % 2 == 0 { (0u8, 1u8) } else { (1, 0) };
            assert_eq!((mask.alpha_designer, mask.alpha_executor), expected, "t={t} K={k}");
        }
    }
    // The four documented variants, exhaustively over a step range.
    for t in 0..300u64 {
        assert_eq!(
            {
                let m = stage_mask(t, SchedulePolicy::Coupled);
                (m.alpha_designer, m.alpha_executor)
            },
            (1, 1)
        );
        assert_eq!(
            {
                let m = stage_mask(t, SchedulePolicy::ExecutorOnly);
                (m.alpha_designer, m.alpha_executor)
            },
            (0, 1)
        );
        assert_eq!(
            {
                let m = stage_mask(t, SchedulePolicy::DesignerOnly);
                (m.alpha_designer, m.alpha_executor)
            },
            (1, 0)
        );
        let stagewise = stage_mask(t, SchedulePolicy::stagewise(30).unwrap());
        assert_eq!(stagewise.alpha_designer + stagewise.alpha_executor, 1);
    }

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(1), "conformance sweep took {elapsed:?}");
    println!("ACCEPTANCE 3 PASS: stage masks match the alternation rule for K ∈ {{1,10,30}}, t ∈ [0,10K) ({elapsed:?})");
}

#[test]
fn acceptance_04_objective_exactness() {
    let rhos: [f64; 5] = [0.5, 0.8, 1.0, 1.2, 1.5];
    let advantages: [f64; 3] = [-1.0, 0.0, 1.0];
    let epsilons: [f64; 2] = [0.1, 0.2];
    let mut checked = 0usize;

    for &rho in &rhos {
        for &advantage in &advantages {
            for &eps in &epsilons {
                let inputs = LossInputs::new(
                    vec![LossItem {
                        old_logprob_sum: -2.0,
                        new_logprob_sum: -2.0 + rho.ln(),
                        advantage,
                    }],
                    eps,
                );
                let out = grpo_objective(&inputs).unwrap();
                let expected = oracle::surrogate(rho, advantage, eps);
                assert!(
                    (out.per_item[0] - expected).abs() < 1e-12,
                    "per-item ρ={rho} Â={advantage} ε={eps}: {} vs {expected}",
                    out.per_item[0]
                );
                assert!((out.loss + expected).abs() < 1e-12, "loss mismatch");
                checked += 1;
            }
        }
    }

    assert_eq!(checked, 30);
    println!("ACCEPTANCE 4 PASS: clipped objective matches closed form within 1e-12 on the 30-point grid");
}

#[test]
fn acceptance_05_reward_law() {
    // All 8 corners of (r_correct, r_format, lambda) ∈ {0,1}×{0,1}×{0,0.4}.
    for r_correct in [0u8, 1] {
        for r_format in [0.0f64, 1.0] {
            for lambda in [0.0f64, 0.4] {
                let total = total_reward(r_correct, r_format, lambda).unwrap();
                assert_eq!(total, f64::from(r_correct) + lambda * r_format);
            }
        }
    }

    // Bounds under fuzzing at λ = 0.4.
    let mut rng = StdRng::seed_from_u64(0xC0E505);
    for _ in 0..10_000 {
        let r_correct = rng.gen_range(0..=1u8);
        let r_format: f64 = rng.gen();
        let total = total_reward(r_correct, r_format, 0.4).unwrap();
        assert!((0.0..=1.4).contains(&total), "reward {total} out of bounds");
    }
    println!("ACCEPTANCE 5 PASS: R = R_correct + 0.4·R_format on all corners; 0 ≤ R ≤ 1.4 under fuzzing");
}

#[test]
fn acceptance_06_verifier_fixtures() {
    assert_eq!(score_math("116", "116"), 1);
    assert_eq!(score_math("192/5", "38.4"), 1);
    assert_eq!(score_math("90", "45"), 0);

    let sandbox = Sandbox::new(SandboxConfig::default());
    let cases = vec![
        TestCase { stdin: "2 3\n".into(), expected_stdout: "5\n".into() },
        TestCase { stdin: "7 9\n".into(), expected_stdout: "16\n".into() },
    ];
    let good = "a, b = map(int, input().split())\nprint(a + b)";
    assert_eq!(score_code(good, &cases, 10.0, &sandbox).unwrap(), 1);
    // One passing case is not enough: the second case fails, so the score is 0.
    let half = "a, b = map(int, input().split())\nprint(5)";
    assert_eq!(score_code(half, &cases, 10.0, &sandbox).unwrap(), 0);

    // The 30-second sandbox timeout, exercised with a deliberate infinite
    // loop that must come back as score 0 within 35 s.
    let started = Instant::now();
    let loop_case = vec![TestCase { stdin: String::new(), expected_stdout: "1\n".into() }];
    let score = score_code("while True:\n    pass", &loop_case, 30.0, &sandbox).unwrap();
    let elapsed = started.elapsed();
    assert_eq!(score, 0);
    assert!(elapsed >= Duration::from_secs(29), "timeout returned too early: {elapsed:?}");
    assert!(elapsed < Duration::from_secs(35), "timeout enforcement too slow: {elapsed:?}");
    println!("ACCEPTANCE 6 PASS: verifier triples hold; infinite loop scored 0 in {elapsed:?}");
}

fn scripted_demo_config(tasks_dir: &Path, store_dir: &Path) -> RunConfig {
    let mut config = RunConfig::default();
    config.rollout.m = 2;
    config.rollout.n = 2;
    config.data.tasks = tasks_dir.to_path_buf();
    config.store.dir = store_dir.to_path_buf();
    let design = serialize_design(&instantiate_template(
        TemplateId::SolverCriticReflection,
        "{{question}}",
        None,
    ));
    config.scripted.designer_fallback = Some(design);
    config.scripted.executor_fallback =
        Some("<delivery>draft: 116</delivery> The answer is \\boxed{116}".into());
    config
}

fn write_fixture_tasks(dir: &Path) {
    std::fs::write(
        dir.join("a.toml"),
        "id = \"t-lottery\"\nkind = \"math\"\nquestion = \"lottery odds\"\nground_truth = \"116\"\ndataset = \"demo\"\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("b.toml"),
        "id = \"t-grid\"\nkind = \"math\"\nquestion = \"grid digits\"\nground_truth = \"45\"\ndataset = \"demo\"\n",
    )
    .unwrap();
}

#[test]
fn acceptance_07_end_to_end_determinism() {
    let started = Instant::now();
    let tasks = tempfile::tempdir().unwrap();
    write_fixture_tasks(tasks.path());

    let store_a = tempfile::tempdir().unwrap();
    let store_b = tempfile::tempdir().unwrap();
    let config_a = scripted_demo_config(tasks.path(), store_a.path());
    let config_b = scripted_demo_config(tasks.path(), store_b.path());

    let summary_a = cmd_rollout(&config_a, None).unwrap();
    let summary_b = cmd_rollout(&config_b, None).unwrap();
    assert_eq!(summary_a.run_id, summary_b.run_id, "derived run ids must agree");
    assert!(summary_a.records_written > 0);

    let digest_a = TrajectoryStore::open(store_a.path()).unwrap().digest().unwrap();
    let digest_b = TrajectoryStore::open(store_b.path()).unwrap().digest().unwrap();
    assert_eq!(digest_a, digest_b, "stores must be identical modulo timestamps");

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(30), "determinism check took {elapsed:?}");
    println!("ACCEPTANCE 7 PASS: two scripted rollouts hash identically modulo timestamps ({elapsed:?})");
}

/// Stub backend numbering each completion, so every turn's text outside its
/// delivery tags carries a unique marker.
struct NumberedStub {
    counter: std::sync::atomic::AtomicUsize,
}

impl NumberedStub {
    fn new() -> Self {
        NumberedStub { counter: std::sync::atomic::AtomicUsize::new(0) }
    }
}

impl coevo::policy::PolicyGateway for NumberedStub {
    fn complete(
        &self,
        request: &coevo::policy::PolicyRequest,
    ) -> Result<coevo::policy::PolicyResponse, coevo::policy::GatewayError> {
        request.validate()?;
        let n = self.counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        Ok(coevo::policy::PolicyResponse {
            text: format!("OUTSIDE_{n} <delivery>clean {n} \\boxed{{9}}</delivery>"),
            token_logprobs: None,
            finish: coevo::policy::FinishReason::Stop,
        })
    }
}

#[test]
fn acceptance_08_workflow_conformance() {
    let registry = ToolRegistry::standard();
    let env = RuntimeEnv::new(&registry, Sandbox::new(SandboxConfig::default()));
    let binding = PolicyBinding::shared("P");

    for id in TemplateId::ALL {
        let spec = instantiate_template(id, "conformance question", None);
        let report = validate_workflow(&spec, &registry);
        assert!(report.is_ok(), "{id:?} must validate: {report}");
    }

    // Reflection with num_iterations = 2: exactly 5 policy calls.
    let reflection = instantiate_template(TemplateId::SolverCriticReflection, "q", None);
    let gateway = NumberedStub::new();
    let transcript = run_workflow(&reflection, "q", &gateway, &binding, &env);
    assert_eq!(transcript.policy_calls(), 5, "reflection must make exactly 5 policy calls");
    assert_eq!(transcript.termination, Termination::Normal);

    // Ensemble: one call per member plus exactly one judge call.
    let ensemble = instantiate_template(TemplateId::EnsembleJudge, "q", None);
    let members = match &ensemble.nodes[0] {
        NodeSpec::Ensemble(e) => e.members.len(),
        _ => unreachable!(),
    };
    let transcript_e = run_workflow(&ensemble, "q", &NumberedStub::new(), &binding, &env);
    assert_eq!(transcript_e.policy_calls(), members + 1);
    let judge_calls = transcript_e.turns.iter().filter(|t| t.agent_name == "MathJudge").count();
    assert_eq!(judge_calls, 1, "exactly one judge call");

    // Delivery isolation on every conformance transcript: when a forwarding
    // turn has a delivery span, its text outside the tags (its unique
    // OUTSIDE_n marker) never appears in another agent's request messages.
    // An agent's own later turns legitimately carry its own history.
    for transcript in [&transcript, &transcript_e] {
        for (at, turn) in transcript.turns.iter().enumerate() {
            if !(turn.forwards_output && turn.delivery.is_some()) {
                continue;
            }
            let marker = turn
                .response_text
                .split_whitespace()
                .next()
                .expect("stub responses start with their marker");
            assert!(marker.starts_with("OUTSIDE_"));
            for later in &transcript.turns[at + 1..] {
                if later.agent_name == turn.agent_name {
                    continue;
                }
                for message in &later.request_messages {
                    assert!(
                        !message.content.contains(marker),
                        "non-delivery text {marker} from {} leaked into a request of {}",
                        turn.agent_name,
                        later.agent_name
                    );
                }
            }
        }
    }
    println!("ACCEPTANCE 8 PASS: templates validate; reflection=5 calls; ensemble=members+1; delivery isolation holds");
}

#[test]
fn acceptance_09_sim_lab_regimes() {
    let started = Instant::now();
    let env = executor_bottleneck_env();
    let seeds: Vec<u64> = (0..10).collect();
    let stagewise = SchedulePolicy::stagewise(30).unwrap();

    let mut stagewise_wins_executor = 0usize;
    let mut stagewise_wins_designer = 0usize;
    for &seed in &seeds {
        let sw = simulate_run(&env, stagewise, 240, 4, 4, seed).unwrap().final_window_mean();
        let eo = simulate_run(&env, SchedulePolicy::ExecutorOnly, 240, 4, 4, seed)
            .unwrap()
            .final_window_mean();
        let doo = simulate_run(&env, SchedulePolicy::DesignerOnly, 240, 4, 4, seed)
            .unwrap()
            .final_window_mean();
        if sw >= eo {
            stagewise_wins_executor += 1;
        }
        if sw >= doo {
            stagewise_wins_designer += 1;
        }
    }
    assert!(
        stagewise_wins_executor >= 8,
        "stagewise ≥ executor-only in only {stagewise_wins_executor}/10 seeds"
    );
    assert!(
        stagewise_wins_designer >= 9,
        "stagewise ≥ designer-only in only {stagewise_wins_designer}/10 seeds"
    );

    // Designer-only with zero executor skill stays at exactly 0.
    let mut frozen = env.clone();
    frozen.executor_skill = vec![0.0; frozen.structures.len()];
    for seed in 0..3 {
        let curve = simulate_run(&frozen, SchedulePolicy::DesignerOnly, 120, 4, 4, seed).unwrap();
        assert!(curve.mean_rewards.iter().all(|&r| r == 0.0), "frozen executor must stay at 0");
    }

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "sim sweep took {elapsed:?}");
    println!(
        "ACCEPTANCE 9 PASS: stagewise ≥ executor-only {stagewise_wins_executor}/10, ≥ designer-only {stagewise_wins_designer}/10, frozen designer-only flat at 0 ({elapsed:?})"
    );
}

#[test]
fn acceptance_10_store_robustness() {
    // Kill-during-rollout: run the CLI with per-call latency, kill it
    // mid-batch, and require every stored line to parse.
    let dir = tempfile::tempdir().unwrap();
    let tasks_dir = dir.path().join("tasks");
    std::fs::create_dir_all(&tasks_dir).unwrap();
    for i in 0..12 {
        std::fs::write(
            tasks_dir.join(format!("t{i:02}.toml")),
            format!("id = \"t{i}\"\nkind = \"math\"\nquestion = \"q{i}\"\nground_truth = \"1\"\n"),
        )
        .unwrap();
    }
    let store_dir = dir.path().join("store");
    let design = serialize_design(&instantiate_template(TemplateId::Single, "{{question}}", None));
    let mut config = RunConfig::default();
    config.rollout.m = 2;
    config.rollout.n = 2;
    config.data.tasks = tasks_dir.clone();
    config.store.dir = store_dir.clone();
    config.scripted.designer_fallback = Some(design);
    config.scripted.executor_fallback = Some("\\boxed{1}".into());
    config.scripted.delay_ms = 40;
    let config_path = dir.path().join("config.toml");
    std::fs::write(&config_path, toml::to_string(&config).unwrap()).unwrap();

    let mut child = std::process::Command::new(env!("CARGO_BIN_EXE_coevo"))
        .args(["rollout", "--config"])
        .arg(&config_path)
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .expect("spawn coevo rollout");
    std::thread::sleep(Duration::from_millis(600));
    child.kill().expect("kill rollout");
    let _ = child.wait();

    let store = TrajectoryStore::open(&store_dir).expect("store reopens after kill");
    let rows = store.read_all().expect("every surviving line parses");
    assert!(!rows.is_empty(), "kill landed before the first tree committed; slow the gateway down");
    println!("    kill test: {} whole records survived", rows.len());

    // Export idempotence across 3 repeated exports.
    let outcome = store.export(SchedulePolicy::stagewise(30).unwrap(), 0).unwrap();
    assert!(matches!(outcome, ExportOutcome::Written { .. }));
    for _ in 0..2 {
        let again = store.export(SchedulePolicy::stagewise(30).unwrap(), 0).unwrap();
        assert_eq!(again, ExportOutcome::NothingToExport);
    }
    let batches: Vec<_> = std::fs::read_dir(store_dir.join("batches"))
        .unwrap()
        .filter_map(|e| e.ok())
        .collect();
    assert_eq!(batches.len(), 1, "exactly one batch after 3 exports");
    assert_eq!(store.step_t(), 1);

    // The library surface agrees with the CLI-level outcome.
    assert!(matches!(cmd_export(&config, 0).unwrap(), ExportOutcome::NothingToExport));
    println!("ACCEPTANCE 10 PASS: killed rollout left only whole records; export idempotent across 3 attempts");
}
