//! Curriculum training: lessons in order, periodic evaluation on held-out
//! episodes, best-by-evaluation checkpoints and warm starts between lessons.

use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::config::{LessonSpec, RunConfig};
use super::evaluate::{return_alarm, run_specs, summarize, Summary};
use crate::env::{Env, EpisodeConfig, EpisodeSpec};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, ActorCritic, Adam};
use crate::ppo::{self, collect_rollouts, UpdateStats, Worker};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const CONFIG_FILE: &str = "config.toml";

/// Append-only JSON-lines log of a run.
pub struct Manifest {
    path: PathBuf,
}

impl Manifest {
    pub fn create(path: PathBuf) -> Result<Self> {
        File::create(&path)?;
        Ok(Self { path })
    }

    pub fn append(&self, record: &serde_json::Value) -> Result<()> {
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        writeln!(f, "{}", serde_json::to_string(record)?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Vec<serde_json::Value>> {
        fs::read_to_string(path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(serde_json::from_str(l)?))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
struct MetricsRow {
    iteration: usize,
    lesson: u32,
    steps: u64,
    lesson_steps: u64,
    episodes: usize,
    mean_return: Option<f64>,
    mean_normalized_return: Option<f64>,
    policy_objective: f64,
    value_loss: f64,
    entropy: f64,
    clip_fraction: f64,
    approx_kl: f64,
    mean_ratio: f64,
    explained_variance: f64,
    grad_norm: f64,
    learning_rate: f64,
    update_skipped: bool,
}

#[derive(Debug, Clone, Serialize)]
struct EvalRow {
    /// Scheduled evaluation point, a multiple of the interval.
    step: u64,
    /// Steps actually taken when the evaluation ran.
    actual_steps: u64,
    lesson: u32,
    episodes: usize,
    success_rate: f64,
    mean_normalized_return: f64,
    std_normalized_return: f64,
    mean_return: f64,
    target: usize,
    timeout: usize,
    rollover: usize,
    chassis_contact: usize,
    overshoot: usize,
    unstable: usize,
    alarms: usize,
}

impl EvalRow {
    fn new(step: u64, actual_steps: u64, lesson: u32, s: &Summary) -> Self {
        let t = |k: &str| s.terminations.get(k).copied().unwrap_or(0);
        Self {
            step,
            actual_steps,
            lesson,
            episodes: s.episodes,
            success_rate: s.success_rate,
            mean_normalized_return: s.mean_normalized_return,
            std_normalized_return: s.std_normalized_return,
            mean_return: s.mean_return,
            target: t("target"),
            timeout: t("timeout"),
            rollover: t("rollover"),
            chassis_contact: t("chassis-contact"),
            overshoot: t("overshoot"),
            unstable: t("unstable"),
            alarms: s.alarms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LessonOutcome {
    pub lesson: u32,
    pub steps: u64,
    pub iterations: usize,
    /// Best evaluation score of the lesson, if it was evaluated.
    pub best_eval: Option<f64>,
    pub advanced_early: bool,
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub total_steps: u64,
    pub lessons: Vec<LessonOutcome>,
    pub metrics: PathBuf,
    pub eval: PathBuf,
    pub manifest: PathBuf,
    /// Evaluation scores in order, as `(scheduled step, mean normalized return)`.
    pub evals: Vec<(u64, f64)>,
}

/// Held-out evaluation episodes, fixed for the whole lesson.
fn eval_specs(config: &EpisodeConfig, run: &RunConfig) -> Result<Vec<EpisodeSpec>> {
    let mut env = Env::new(config.clone(), run.env.clone(), run.eval.seed, 0)?;
    (0..run.eval.episodes)
        .map(|_| {
            env.reset()?;
            Ok(env.spec()?.clone())
        })
        .collect()
}

type Best = Option<(f64, Vec<f32>)>;

struct Evaluator<'a> {
    run: &'a RunConfig,
    csv: csv::Writer<File>,
    /// Next scheduled evaluation step.
    next: u64,
    lesson: u32,
    config: Option<EpisodeConfig>,
    specs: Vec<EpisodeSpec>,
    scores: Vec<(u64, f64)>,
}

impl Evaluator<'_> {
    fn begin_lesson(&mut self, lesson: u32, config: EpisodeConfig, specs: Vec<EpisodeSpec>) {
        self.lesson = lesson;
        self.config = Some(config);
        self.specs = specs;
    }

    fn due(&self, total_steps: u64) -> bool {
        self.next <= total_steps
    }

    /// Evaluates at the next scheduled point, keeping `best` up to date.
    fn run(&mut self, net: &ActorCritic<f32>, best: &mut Best, total_steps: u64) -> Result<f64> {
        let config = self.config.as_ref().expect("lesson started");
        let results = run_specs(net, config, &self.run.env, &self.specs, None)?;
        let s = summarize(&results);
        self.csv.serialize(EvalRow::new(self.next, total_steps, self.lesson, &s))?;
        self.csv.flush()?;
        self.scores.push((self.next, s.mean_normalized_return));
        log::info!(
            "eval at {} (actual {total_steps}): normalized return {:.3} ± {:.3}, success {:.2}",
            self.next,
            s.mean_normalized_return,
            s.std_normalized_return,
            s.success_rate
        );
        if best.as_ref().is_none_or(|(b, _)| s.mean_normalized_return > *b) {
            *best = Some((s.mean_normalized_return, net.params().to_vec()));
        }
        self.next += self.run.eval.interval;
        Ok(s.mean_normalized_return)
    }
}

fn lesson_seed(run: &RunConfig, lesson: &LessonSpec) -> u64 {
    run.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(u64::from(lesson.lesson))
}

/// Trains according to `run`, writing everything into `out`.
pub fn train(run: &RunConfig, out: &Path) -> Result<TrainSummary> {
    run.validate()?;
    fs::create_dir_all(out.join("checkpoints"))?;
    let manifest_path = out.join(MANIFEST_FILE);
    let metrics_path = out.join(METRICS_FILE);
    let eval_path = out.join(EVAL_FILE);
    fs::write(out.join(CONFIG_FILE), run.to_toml()?)?;

    let mut net = ActorCritic::<f32>::new(run.architecture, run.seed)?;
    log::info!("actor-critic with {} parameters", net.param_count());

    let manifest = Manifest::create(manifest_path.clone())?;
    manifest.append(&json!({
        "record": "run",
        "seed": run.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "parameters": net.param_count(),
        "config": run,
        "config_file": CONFIG_FILE,
        "metrics": METRICS_FILE,
        "eval": EVAL_FILE,
    }))?;
    let mut metrics = csv::Writer::from_path(&metrics_path)?;
    let mut evaluator = Evaluator {
        run,
        csv: csv::Writer::from_path(&eval_path)?,
        next: 0,
        lesson: 0,
        config: None,
        specs: Vec::new(),
        scores: Vec::new(),
    };

    let mut total_steps: u64 = 0;
    let mut iteration = 0;
    let mut outcomes: Vec<LessonOutcome> = Vec::new();

    for lesson in &run.lessons {
        let config = lesson.episode_config(&run.dem_paths)?;
        let eval_config = lesson.eval_config(&run.dem_paths)?;
        let specs = eval_specs(&eval_config, run)?;
        let seed = lesson_seed(run, lesson);
        let mut workers = (0..run.workers as u64)
            .map(|i| Ok(Worker::new(Env::new(config.clone(), run.env.clone(), seed, i)?, seed ^ 0x5a5a, i)))
            .collect::<Result<Vec<_>>>()?;
        let mut opt = Adam::new(net.param_count(), lesson.learning_rate, run.ppo.adam);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
        let mut ppo_cfg = run.ppo.clone();
        ppo_cfg.learning_rate = lesson.learning_rate;
        manifest.append(&json!({
            "record": "lesson_start",
            "lesson": lesson.lesson,
            "steps": total_steps,
            "learning_rate": lesson.learning_rate,
            "step_budget": lesson.step_budget,
            "warm_start": outcomes.last().map(|o| &o.best_checkpoint),
        }))?;
        log::info!("lesson {} starts at step {total_steps}", lesson.lesson);

        let mut best: Best = None;
        let mut lesson_steps: u64 = 0;
        let mut lesson_iters = 0;
        let mut advanced_early = false;
        evaluator.begin_lesson(lesson.lesson, eval_config, specs);
        if total_steps == 0 {
            evaluator.run(&net, &mut best, total_steps)?;
        }
        while lesson_steps < lesson.step_budget {
            let buf = collect_rollouts(&mut workers, &net, ppo_cfg.horizon, ppo_cfg.gamma, ppo_cfg.gae_lambda)?;
            let (stats, skipped) = match ppo::update(&mut net, &mut opt, &buf, &ppo_cfg, &mut rng) {
                Ok(s) => (s, false),
                Err(Error::NonFiniteLoss(m)) => {
                    log::warn!("iteration {iteration}: update skipped, {m}");
                    (UpdateStats::default(), true)
                }
                Err(e) => return Err(e),
            };
            let n = buf.len() as u64;
            total_steps += n;
            lesson_steps += n;
            let eps = &buf.episodes;
            let mean = |f: fn(&ppo::EpisodeStats) -> f64| {
                (!eps.is_empty()).then(|| eps.iter().map(f).sum::<f64>() / eps.len() as f64)
            };
            eps.iter().for_each(|e| {
                return_alarm(e.normalized_return);
            });
            metrics.serialize(MetricsRow {
                iteration,
                lesson: lesson.lesson,
                steps: total_steps,
                lesson_steps,
                episodes: eps.len(),
                mean_return: mean(|e| e.total_reward),
                mean_normalized_return: mean(|e| e.normalized_return),
                policy_objective: stats.policy_objective,
                value_loss: stats.value_loss,
                entropy: stats.entropy,
                clip_fraction: stats.clip_fraction,
                approx_kl: stats.approx_kl,
                mean_ratio: stats.mean_ratio,
                explained_variance: stats.explained_variance,
                grad_norm: stats.grad_norm,
                learning_rate: lesson.learning_rate,
                update_skipped: skipped,
            })?;
            metrics.flush()?;
            iteration += 1;
            lesson_iters += 1;

            let mut reached = false;
            while evaluator.due(total_steps) {
                let score = evaluator.run(&net, &mut best, total_steps)?;
                reached |= lesson.advance_threshold.is_some_and(|t| score >= t);
            }
            if reached {
                advanced_early = true;
                log::info!("lesson {} reached its advancement threshold", lesson.lesson);
                break;
            }
        }

        let dir = out.join("checkpoints");
        let final_checkpoint = dir.join(format!("lesson{}_final.ckpt", lesson.lesson));
        checkpoint::save(&net, &final_checkpoint)?;
        let best_eval = best.as_ref().map(|(s, _)| *s);
        if let Some((_, params)) = best {
            net.set_params(&params)?;
        }
        let best_checkpoint = dir.join(format!("lesson{}_best.ckpt", lesson.lesson));
        checkpoint::save(&net, &best_checkpoint)?;
        let rel = |p: &Path| p.strip_prefix(out).unwrap_or(p).to_path_buf();
        let outcome = LessonOutcome {
            lesson: lesson.lesson,
            steps: lesson_steps,
            iterations: lesson_iters,
            best_eval,
            advanced_early,
            best_checkpoint: rel(&best_checkpoint),
            final_checkpoint: rel(&final_checkpoint),
        };
        let mut record = serde_json::to_value(&outcome)?;
        record["record"] = json!("lesson_end");
        manifest.append(&record)?;
        outcomes.push(outcome);
    }
    manifest.append(&json!({ "record": "finished", "steps": total_steps }))?;
    Ok(TrainSummary {
        total_steps,
        lessons: outcomes,
        metrics: metrics_path,
        eval: eval_path,
        manifest: manifest_path,
        evals: evaluator.scores,
    })
}
