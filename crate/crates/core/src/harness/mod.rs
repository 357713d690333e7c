//! Running agents through episodes.

mod endpoint;
mod prompt;
mod scripted;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Domain;
use crate::env::{partial_credit, score, tool_catalog, CallRecord, Episode, ToolCall, ToolSpec};
use crate::generator::{AnswerKey, Instance};
use crate::seed::derive_seed;

pub use endpoint::{parse_completion, EndpointAgent, EndpointClient, EndpointConfig, ParsedCompletion};
pub use prompt::{prompt_hash, render_system_prompt, PROMPT_VERSION};
pub use scripted::{OracleAgent, RandomValidAgent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLimits {
    pub max_steps: usize,
    pub max_output_tokens: u32,
    /// Truncated replies tolerated; one more fails the run.
    pub max_token_overflows: u32,
    pub parallelism: usize,
}

impl Default for RunLimits {
    fn default() -> Self {
        Self {
            max_steps: 600,
            max_output_tokens: 16_384,
            max_token_overflows: 3,
            parallelism: 64,
        }
    }
}

impl RunLimits {
    pub fn check(&self) -> Result<(), String> {
        if self.max_steps == 0 || self.max_output_tokens == 0 || self.parallelism == 0 {
            return Err("step limit, output token limit and parallelism must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("endpoint error: {0}")]
    Endpoint(String),
}

/// What an agent sees each turn.
pub struct AgentView<'a> {
    pub instance: &'a Instance,
    pub system_prompt: &'a str,
    pub tools: &'a [ToolSpec],
    /// Every executed call so far, with its result.
    pub transcript: &'a [CallRecord],
}

/// One agent reply: zero or more calls to execute in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentTurn {
    pub calls: Vec<ToolCall>,
    pub completion_tokens: u64,
    /// The reply was cut at the output cap; its calls are dropped.
    pub truncated: bool,
}

impl AgentTurn {
    pub fn single(call: ToolCall) -> Self {
        Self {
            calls: vec![call],
            ..Self::default()
        }
    }
}

/// A turn-based policy. A turn without calls that is not truncated ends
/// the episode.
pub trait Agent {
    fn turn(&mut self, view: &AgentView<'_>) -> Result<AgentTurn, AgentError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    None,
    StepLimit,
    TokenOverflow,
    EndpointError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub domain: Domain,
    pub h: usize,
    pub b: usize,
    pub seed: u64,
    pub episode_seed: u64,
    pub instance_path: String,
    pub agent: String,
    pub fail_rate: f64,
    pub reward: u8,
    pub partial_credit: f64,
    pub steps: usize,
    pub injected_failures: usize,
    pub completion_tokens: u64,
    pub token_overflows: u32,
    pub wall_time_s: f64,
    pub endpoint_time_s: f64,
    pub env_time_s: f64,
    pub failure_reason: FailureReason,
    pub error: Option<String>,
    pub transcript_path: Option<String>,
    pub prompt_hash: String,
}

/// Transcript document written per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptDoc {
    pub instance_path: String,
    pub seed: u64,
    pub p: f64,
    pub calls: Vec<CallRecord>,
    pub reward: u8,
    pub steps: usize,
    pub failure_reason: FailureReason,
}

pub struct EpisodeOutcome {
    pub record: EvalRecord,
    pub transcript: Vec<CallRecord>,
}

/// Runs one episode. `agent_name` and `instance_path` only label the record.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    agent: &mut dyn Agent,
    agent_name: &str,
    instance: &Instance,
    key: &AnswerKey,
    instance_path: &str,
    limits: &RunLimits,
    fail_rate: f64,
    episode_seed: u64,
) -> EpisodeOutcome {
    let started = Instant::now();
    let prompt = render_system_prompt(instance);
    let tools = tool_catalog(instance.domain);
    let mut ep = Episode::new(instance, fail_rate, derive_seed(episode_seed, "env"));
    let mut endpoint_time = Duration::ZERO;
    let mut env_time = Duration::ZERO;
    let mut tokens = 0u64;
    let mut overflows = 0u32;
    let mut failure = FailureReason::None;
    let mut error = None;

    'episode: while !ep.is_done() && ep.steps() < limits.max_steps {
        let view = AgentView {
            instance,
            system_prompt: &prompt,
            tools: &tools,
            transcript: ep.transcript(),
        };
        let t = Instant::now();
        let turn = agent.turn(&view);
        endpoint_time += t.elapsed();
        let turn = match turn {
            Ok(turn) => turn,
            Err(e) => {
                failure = FailureReason::EndpointError;
                error = Some(e.to_string());
                break;
            }
        };
        tokens += turn.completion_tokens;
        if turn.truncated {
            overflows += 1;
            if overflows > limits.max_token_overflows {
                failure = FailureReason::TokenOverflow;
                break;
            }
            continue;
        }
        if turn.calls.is_empty() {
            break;
        }
        for call in &turn.calls {
            if ep.is_done() || ep.steps() >= limits.max_steps {
                break 'episode;
            }
            let t = Instant::now();
            ep.dispatch(call);
            env_time += t.elapsed();
        }
    }
    if failure == FailureReason::None && !ep.is_done() && ep.steps() >= limits.max_steps {
        failure = FailureReason::StepLimit;
    }
    let (reward, partial) = match failure {
        FailureReason::TokenOverflow | FailureReason::EndpointError => (0, partial_credit(ep.grid(), key)),
        _ => (score(ep.grid(), key), partial_credit(ep.grid(), key)),
    };
    let record = EvalRecord {
        domain: instance.domain,
        h: instance.h,
        b: instance.b,
        seed: instance.seed,
        episode_seed,
        instance_path: instance_path.to_string(),
        agent: agent_name.to_string(),
        fail_rate,
        reward,
        partial_credit: partial,
        steps: ep.steps(),
        injected_failures: ep.injected_failures(),
        completion_tokens: tokens,
        token_overflows: overflows,
        wall_time_s: started.elapsed().as_secs_f64(),
        endpoint_time_s: endpoint_time.as_secs_f64(),
        env_time_s: env_time.as_secs_f64(),
        failure_reason: failure,
        error,
        transcript_path: None,
        prompt_hash: prompt_hash(),
    };
    EpisodeOutcome {
        record,
        transcript: ep.transcript().to_vec(),
    }
}

/// Which agent drives a suite.
#[derive(Debug, Clone)]
pub enum AgentSpec {
    Oracle,
    Random,
    Endpoint(EndpointClient),
}

impl AgentSpec {
    pub fn name(&self) -> String {
        match self {
            AgentSpec::Oracle => "oracle".into(),
            AgentSpec::Random => "random".into(),
            AgentSpec::Endpoint(c) => format!("endpoint:{}", c.config().model),
        }
    }

    pub fn build(&self, instance: &Instance, episode_seed: u64) -> Box<dyn Agent> {
        match self {
            AgentSpec::Oracle => Box::new(OracleAgent::new(instance)),
            AgentSpec::Random => Box::new(RandomValidAgent::new(instance, derive_seed(episode_seed, "agent"))),
            AgentSpec::Endpoint(c) => Box::new(EndpointAgent::new(c.clone())),
        }
    }
}

/// A loaded suite member.
pub struct SuiteEntry {
    pub path: String,
    pub instance: Instance,
    pub key: AnswerKey,
}

pub struct SuiteOptions<'a> {
    pub limits: RunLimits,
    pub fail_rate: f64,
    pub seed: u64,
    /// Write one transcript per episode here when set.
    pub transcript_dir: Option<&'a Path>,
}

/// Per-episode seed: depends only on the suite seed and the instance path.
pub fn episode_seed(suite_seed: u64, instance_path: &str) -> u64 {
    derive_seed(suite_seed, instance_path)
}

/// Runs every entry on a pool of `parallelism` workers. Records come back
/// in input order.
pub fn run_suite(entries: &[SuiteEntry], agent: &AgentSpec, opts: &SuiteOptions<'_>) -> Vec<EvalRecord> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.limits.parallelism)
        .build()
        .expect("thread pool");
    let name = agent.name();
    pool.install(|| {
        entries
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let seed = episode_seed(opts.seed, &e.path);
                let mut a = agent.build(&e.instance, seed);
                let out = run_episode(
                    a.as_mut(),
                    &name,
                    &e.instance,
                    &e.key,
                    &e.path,
                    &opts.limits,
                    opts.fail_rate,
                    seed,
                );
                let mut record = out.record;
                if let Some(dir) = opts.transcript_dir {
                    record.transcript_path = write_transcript(dir, i, &record, out.transcript);
                }
                record
            })
            .collect()
    })
}

fn write_transcript(dir: &Path, index: usize, record: &EvalRecord, calls: Vec<CallRecord>) -> Option<String> {
    let doc = TranscriptDoc {
        instance_path: record.instance_path.clone(),
        seed: record.episode_seed,
        p: record.fail_rate,
        calls,
        reward: record.reward,
        steps: record.steps,
        failure_reason: record.failure_reason,
    };
    let stem = Path::new(&record.instance_path)
        .file_stem()
        .map_or_else(|| "episode".to_string(), |s| s.to_string_lossy().into_owned());
    let path: PathBuf = dir.join(format!("{index:04}_{stem}.transcript.json"));
    fs::create_dir_all(dir).ok()?;
    let text = serde_json::to_string_pretty(&doc).ok()?;
    fs::write(&path, text).ok()?;
    Some(path.to_string_lossy().into_owned())
}

/// Writes records as JSON lines.
pub fn write_records(path: &Path, records: &[EvalRecord]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialise"));
        out.push('\n');
    }
    fs::write(path, out)
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::sample_pool;
    use crate::env::ToolCall;
    use crate::generator::{generate, GenConfig};
    use crate::seed::rng_from_seed;
    use serde_json::json;

    fn fixture(h: usize, b: usize) -> (Instance, AnswerKey) {
        let pool = sample_pool(Domain::Shopping, 1200, &mut rng_from_seed(6)).unwrap();
        generate(&GenConfig::new(Domain::Shopping, h, b, 21), &pool).unwrap()
    }

    struct Looper;
    impl Agent for Looper {
        fn turn(&mut self, _: &AgentView<'_>) -> Result<AgentTurn, AgentError> {
            Ok(AgentTurn::single(ToolCall::new("get_current_grid_state", json!({}))))
        }
    }

    struct Truncator(u32);
    impl Agent for Truncator {
        fn turn(&mut self, _: &AgentView<'_>) -> Result<AgentTurn, AgentError> {
            self.0 += 1;
            Ok(AgentTurn {
                calls: vec![ToolCall::new("done", json!({}))],
                completion_tokens: 16_384,
                truncated: true,
            })
        }
    }

    #[test]
    fn looping_agent_stops_at_step_limit() {
        let (inst, key) = fixture(3, 0);
        let out = run_episode(&mut Looper, "loop", &inst, &key, "x", &RunLimits::default(), 0.0, 1);
        assert_eq!(out.record.steps, 600);
        assert_eq!(out.record.reward, 0);
        assert_eq!(out.record.failure_reason, FailureReason::StepLimit);
    }

    #[test]
    fn fourth_truncation_fails_the_run() {
        let (inst, key) = fixture(3, 0);
        let mut agent = Truncator(0);
        let out = run_episode(&mut agent, "t", &inst, &key, "x", &RunLimits::default(), 0.0, 1);
        assert_eq!(agent.0, 4);
        assert_eq!(out.record.failure_reason, FailureReason::TokenOverflow);
        assert_eq!(out.record.steps, 0);
        assert_eq!(out.record.reward, 0);
    }

    #[test]
    fn oracle_solves_zero_budget_in_affine_steps() {
        for h in [1, 4, 9] {
            let (inst, key) = fixture(h, 0);
            let mut agent = OracleAgent::new(&inst);
            let out = run_episode(&mut agent, "oracle", &inst, &key, "x", &RunLimits::default(), 0.0, 1);
            assert_eq!(out.record.reward, 1);
            assert_eq!(out.record.steps, 3 * h + 2);
            assert_eq!(out.record.failure_reason, FailureReason::None);
        }
    }

    #[test]
    fn oracle_solves_with_decoys() {
        let (inst, key) = fixture(5, 8);
        let mut agent = OracleAgent::new(&inst);
        let out = run_episode(&mut agent, "oracle", &inst, &key, "x", &RunLimits::default(), 0.0, 1);
        assert_eq!(out.record.reward, 1, "{:?}", out.record);
        assert!(out.transcript.iter().all(|c| c.name != "get_shopping_item_info"));
    }

    #[test]
    fn random_agent_is_reproducible() {
        let (inst, key) = fixture(5, 8);
        let run = |seed| {
            let mut a = RandomValidAgent::new(&inst, seed);
            run_episode(&mut a, "random", &inst, &key, "x", &RunLimits::default(), 0.0, seed).record
        };
        let (a, b) = (run(3), run(3));
        assert_eq!((a.reward, a.steps), (b.reward, b.steps));
        assert_eq!(a.steps, 3 * 5 + 1);
    }

    #[test]
    fn records_round_trip_as_json_lines() {
        let (inst, key) = fixture(2, 0);
        let mut agent = OracleAgent::new(&inst);
        let rec = run_episode(
            &mut agent,
            "oracle",
            &inst,
            &key,
            "a.json",
            &RunLimits::default(),
            0.0,
            1,
        )
        .record;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        write_records(&path, &[rec.clone(), rec.clone()]).unwrap();
        assert_eq!(read_records(&path).unwrap(), vec![rec.clone(), rec]);
    }
}
