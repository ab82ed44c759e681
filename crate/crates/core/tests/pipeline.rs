//! Plan execution end to end with synthetic and mock-LLM agents.

use std::fs;
use std::path::Path;

use banditprobe::agents::Choice;
use banditprobe::orchestrator::{self, logs::read_run_logs, plan::ExperimentPlan, RunOptions};

fn write_plan(dir: &Path, text: &str) -> ExperimentPlan {
    let path = dir.join("plan.toml");
    fs::write(&path, text).unwrap();
    ExperimentPlan::from_file(&path).unwrap()
}

const MOCK_PLAN: &str = "n_runs = 4\nn_trials = 12\nwarmup = 2\nmaster_seed = 21\n\
reward_structures = [\"symmetric\", \"asymmetric\"]\n\
decoding_configs = [\"strict\", \"moderate\", \"default-like\", \"exploratory\"]\n\
[[agents]]\nkind = \"llm\"\nlabel = \"mock\"\nmock_script = \"script.txt\"\n";

#[test]
fn mock_llm_grid_writes_one_log_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("script.txt"), "X\nX\nY\n?\n").unwrap();
    let plan = write_plan(dir.path(), MOCK_PLAN);
    let out = orchestrator::run(&plan, &dir.path().join("out"), &RunOptions::default()).unwrap();
    assert_eq!(out.conditions.len(), 8);
    let files: Vec<_> = fs::read_dir(dir.path().join("out/runs")).unwrap().collect();
    assert_eq!(files.len(), 8);

    for c in &out.conditions {
        let cond = &read_run_logs(&c.log_path).unwrap()[0];
        assert_eq!(cond.runs.len(), 4);
        assert!(cond.meta.temperature.is_some() && cond.meta.top_p.is_some());
        for run in &cond.runs {
            for t in &run.trials {
                // trial k answers with script[(k - 1) % 4]; every fourth is "?"
                if t.trial % 4 == 0 {
                    assert_eq!(t.choice, Choice::Invalid);
                    assert_eq!(t.reward, 0);
                    assert_eq!(t.raw_token.as_deref(), Some("?"));
                } else {
                    assert!(t.choice.is_valid());
                }
            }
        }
        assert_eq!(c.summary.invalid_rate, 0.25);
    }
    let rates = fs::read_to_string(dir.path().join("out/invalid_rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 9);
    assert!(rates.lines().skip(1).all(|l| l.ends_with(",48,12,0.25")), "{rates}");
    let ids: Vec<_> = out.conditions.iter().map(|c| c.condition_id.as_str()).collect();
    assert!(ids.contains(&"mock__asymmetric__default-like"), "{ids:?}");
}

#[test]
fn request_budget_turns_the_rest_invalid() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("script.txt"), "X\n").unwrap();
    let plan = write_plan(
        dir.path(),
        "n_runs = 2\nn_trials = 10\nwarmup = 2\nreward_structures = [\"symmetric\"]\ndecoding_configs = [\"strict\"]\n\
         [[agents]]\nkind = \"llm\"\nlabel = \"mock\"\nmock_script = \"script.txt\"\n",
    );
    let out = orchestrator::run(&plan, &dir.path().join("out"), &RunOptions { max_requests: Some(5) }).unwrap();
    let c = &out.conditions[0];
    assert_eq!(c.summary.n_invalid_total, 15);
}

const SYNTHETIC: &str = "n_runs = 25\nn_trials = 60\nmaster_seed = 99\n\
reward_structures = [\"symmetric\", \"asymmetric\", { p_x = 0.6, p_y = 0.4 }]\n\
[[agents]]\nkind = \"epsilon_greedy\"\nepsilon = 0.2\n\
[[agents]]\nkind = \"wsls\"\n\
[[agents]]\nkind = \"rw\"\na = 0.2\ntau = 4.0\nprime_x = true\n";

#[test]
fn synthetic_plan_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), SYNTHETIC);
    let a = orchestrator::run(&plan, &dir.path().join("a"), &RunOptions::default()).unwrap();
    let b = orchestrator::run(&plan, &dir.path().join("b"), &RunOptions::default()).unwrap();
    assert_eq!(a.conditions.len(), 9);
    for (x, y) in a.conditions.iter().zip(&b.conditions) {
        assert_eq!(fs::read(&x.log_path).unwrap(), fs::read(&y.log_path).unwrap(), "{}", x.condition_id);
    }
    for f in ["summary.csv", "plot_data.csv", "invalid_rates.csv"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }

    let reseeded = ExperimentPlan { master_seed: 100, ..plan };
    let c = orchestrator::run(&reseeded, &dir.path().join("c"), &RunOptions::default()).unwrap();
    let differ = a
        .conditions
        .iter()
        .zip(&c.conditions)
        .filter(|(x, y)| fs::read(&x.log_path).unwrap() != fs::read(&y.log_path).unwrap())
        .count();
    assert!(differ >= 8, "a new seed should change stochastic conditions");
}

#[test]
fn one_condition_does_not_depend_on_the_others() {
    let dir = tempfile::tempdir().unwrap();
    let full = write_plan(dir.path(), SYNTHETIC);
    let only_wsls = ExperimentPlan { agents: vec![full.agents[1].clone()], ..full.clone() };
    let a = orchestrator::run(&full, &dir.path().join("a"), &RunOptions::default()).unwrap();
    let b = orchestrator::run(&only_wsls, &dir.path().join("b"), &RunOptions::default()).unwrap();
    for c in &b.conditions {
        let same = a.get(&c.condition_id).unwrap();
        assert_eq!(fs::read(&c.log_path).unwrap(), fs::read(&same.log_path).unwrap());
    }
}

#[test]
fn report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), SYNTHETIC);
    let out = orchestrator::run(&plan, &dir.path().join("out"), &RunOptions::default()).unwrap();
    let rep = orchestrator::report(&[out.summary_path.clone()], &dir.path().join("rep")).unwrap();
    assert_eq!(rep.posterior_rows, 0);
    let text = fs::read_to_string(dir.path().join("rep/report_conditions.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "condition_id,metric,mean,ci_low,ci_high,n");
    // metric-major: all nine conditions' total reward first
    assert!(lines.take(9).all(|l| l.split(',').nth(1) == Some("total_reward")));
    let wide = fs::read_to_string(dir.path().join("rep/report_conditions_wide.csv")).unwrap();
    assert_eq!(wide.lines().count(), 10);
    assert!(wide.lines().next().unwrap().starts_with("condition_id,total_reward_mean,"));

    let logs = fs::read_to_string(&out.conditions[0].log_path).unwrap();
    assert_eq!(
        logs.lines().next().unwrap(),
        "condition_id,agent,reward_structure,temperature,top_p,run_id,trial,choice,reward,raw_token,valid"
    );
}
