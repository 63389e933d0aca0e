//! Trial runner for the two protocols and their adversary experiments:
//! in-process or over TCP, honest or attacking, with a JSON report per run
//! and optional JSONL transcripts per trial.

pub mod net;

use poq_core::adversary::attacks::{
    LinearMemoryP1Attack, SubsetClawgenAttack, UnboundedP1Attack,
};
use poq_core::adversary::raz::{
    raz_experiment, GaussianElim, OverBudget, RazStrategy, StoreFirstJ, ZeroMemory,
};
use poq_core::adversary::AdversaryError;
use poq_core::clawgen::{clawgen_parties, CgVerifier, Mode, StreamParams};
use poq_core::ih::{optimal_adversary_value, IhParams};
use poq_core::poq1::{honest_parties, row_rank, P1Params, P1Verifier};
use poq_core::poq2::{p2_parties, P2Params, P2Verifier};
use poq_core::qsim::chsh_prob;
use poq_core::rng::{substream, Role};
use poq_core::session::{drive_tracked, MemoryAudited, Metered, Party, ProtocolError};
use poq_core::transcript::{Direction, Transcript, TranscriptHeader};
use poq_core::wire::{fnv1a64, protocol_id, Frame, Hello};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::PathBuf;
use std::time::{Duration, Instant};
use thiserror::Error;

const COS2_PI_8: f64 = 0.8535533905932737;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("memory bound: {0}")]
    MemoryBound(String),
}

impl RunnerError {
    /// Process exit code: 2 config, 3 transport, 4 protocol violation,
    /// 5 memory-bound violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) => 2,
            RunnerError::Transport(_) => 3,
            RunnerError::Protocol(ProtocolError::MemoryViolation { .. }) => 5,
            RunnerError::Protocol(_) => 4,
            RunnerError::MemoryBound(_) => 5,
        }
    }
}

impl From<AdversaryError> for RunnerError {
    fn from(e: AdversaryError) -> Self {
        RunnerError::MemoryBound(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    Inproc,
    Tcp,
}

impl Transport {
    fn name(self) -> &'static str {
        match self {
            Transport::Inproc => "inproc",
            Transport::Tcp => "tcp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P1Adversary {
    #[default]
    Honest,
    LinearMemory,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgAdversary {
    #[default]
    Honest,
    Subset {
        window: usize,
        capacity: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RazStrategyKind {
    GaussianElim,
    StoreFirstJ,
    ZeroMemory,
    OverBudget,
}

impl RazStrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            RazStrategyKind::GaussianElim => "gaussian_elim",
            RazStrategyKind::StoreFirstJ => "store_first_j",
            RazStrategyKind::ZeroMemory => "zero_memory",
            RazStrategyKind::OverBudget => "over_budget",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum Job {
    Poq1 {
        n: usize,
        #[serde(default)]
        adversary: P1Adversary,
    },
    Clawgen {
        lambda: usize,
        k: usize,
        m_bits: usize,
        mode: Mode,
        #[serde(default)]
        adversary: CgAdversary,
    },
    Poq2 {
        lambda: usize,
        k: usize,
        m_bits: usize,
        mode: Mode,
    },
    Raz {
        n: usize,
        rounds: u64,
        capacity: Option<usize>,
        strategy: RazStrategyKind,
    },
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Poq1 { .. } => "poq1",
            Job::Clawgen { .. } => "clawgen",
            Job::Poq2 { .. } => "poq2",
            Job::Raz { .. } => "raz",
        }
    }

    pub fn adversary_name(&self) -> String {
        match self {
            Job::Poq1 { adversary, .. } => match adversary {
                P1Adversary::Honest => "honest".into(),
                P1Adversary::LinearMemory => "linear_memory".into(),
                P1Adversary::Unbounded => "unbounded".into(),
            },
            Job::Clawgen { adversary, .. } => match adversary {
                CgAdversary::Honest => "honest".into(),
                CgAdversary::Subset { window, .. } => format!("subset(window={window})"),
            },
            Job::Poq2 { .. } => "honest".into(),
            Job::Raz { strategy, .. } => strategy.name().into(),
        }
    }

    fn protocol_byte(&self) -> u8 {
        match self {
            Job::Poq1 { .. } => protocol_id::POQ1,
            Job::Clawgen { .. } => protocol_id::CLAWGEN,
            Job::Poq2 { .. } => protocol_id::POQ2,
            Job::Raz { .. } => protocol_id::RAZ,
        }
    }

    /// Parameters both endpoints must agree on; adversary choices are local
    /// to one side and deliberately excluded.
    pub fn params_value(&self) -> serde_json::Value {
        match self {
            Job::Poq1 { n, .. } => json!({ "n": n }),
            Job::Clawgen {
                lambda,
                k,
                m_bits,
                mode,
                ..
            }
            | Job::Poq2 {
                lambda,
                k,
                m_bits,
                mode,
            } => json!({ "lambda": lambda, "k": k, "m_bits": m_bits, "mode": mode }),
            Job::Raz {
                n,
                rounds,
                capacity,
                strategy,
            } => json!({
                "n": n,
                "rounds": rounds,
                "capacity": capacity,
                "strategy": strategy.name(),
            }),
        }
    }

    pub fn hello(&self, trials: u64) -> Hello {
        let mut digest = vec![self.protocol_byte()];
        digest.extend_from_slice(self.params_value().to_string().as_bytes());
        digest.extend_from_slice(&trials.to_be_bytes());
        Hello {
            protocol: self.protocol_byte(),
            params_hash: fnv1a64(&digest),
            trials: trials as u32,
        }
    }

    fn stream_params(&self) -> Option<(StreamParams, Mode)> {
        match self {
            Job::Clawgen {
                lambda,
                k,
                m_bits,
                mode,
                ..
            }
            | Job::Poq2 {
                lambda,
                k,
                m_bits,
                mode,
            } => StreamParams::new(*lambda, *k, *m_bits).ok().map(|p| (p, *mode)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub job: Job,
    pub trials: u64,
    pub seed: u64,
    pub transport: Transport,
    pub transcripts: Option<PathBuf>,
    /// Constant for the soundness-regime parameter check; setting it makes
    /// the check a hard precondition instead of a report field.
    pub strict_c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStats {
    pub count: u64,
    pub denominator: u64,
    pub rate: f64,
    pub wilson95_lo: f64,
    pub wilson95_hi: f64,
}

/// Wilson score interval at 95% for a binomial proportion.
pub fn wilson95(count: u64, denominator: u64) -> RateStats {
    let n = denominator as f64;
    let p = if denominator == 0 {
        0.0
    } else {
        count as f64 / n
    };
    if denominator == 0 {
        return RateStats {
            count,
            denominator,
            rate: 0.0,
            wilson95_lo: 0.0,
            wilson95_hi: 1.0,
        };
    }
    let z = 1.959963984540054f64;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = (z / (1.0 + z2 / n)) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    RateStats {
        count,
        denominator,
        rate: p,
        wilson95_lo: (center - half).max(0.0),
        wilson95_hi: (center + half).min(1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

fn summarize(values: impl Iterator<Item = f64>) -> Option<Summary> {
    let mut n = 0u64;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        n += 1;
        sum += v;
        min = min.min(v);
        max = max.max(v);
    }
    (n > 0).then(|| Summary {
        min,
        mean: sum / n as f64,
        max,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub protocol: String,
    pub adversary: String,
    pub params: serde_json::Value,
    pub seed: u64,
    pub transport: String,
    pub trials: u64,
    pub completed: u64,
    /// Trials lost to transport failures; never counted as rejections.
    pub aborted: u64,
    /// Trials stopped by the memory auditor, reported apart from failures.
    pub memory_violations: u64,
    pub wall_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accept: Option<RateStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditional_accept: Option<Summary>,
    /// Largest deviation of the per-trial conditional acceptance from
    /// cos^2(pi/8), taken over full-rank trials for the parity protocol and
    /// over all trials for the claw protocol.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditional_max_dev: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate_trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_match: Option<RateStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attempts: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub streamed_bits_total: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_ones: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_qubits_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verifier_peak_bits_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adversary_peak_bits_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict_param_check: Option<bool>,
}

#[derive(Debug, Clone, Default)]
struct TrialOut {
    aborted: bool,
    violation: bool,
    accept: Option<bool>,
    conditional: Option<f64>,
    exactness_dev: Option<f64>,
    degenerate: Option<bool>,
    support_match: Option<bool>,
    attempts: Option<u64>,
    streamed_bits: Option<u64>,
    alpha: Option<bool>,
    peak_qubits: Option<usize>,
    verifier_bits: Option<usize>,
    adversary_bits: Option<usize>,
    records: Option<Vec<(Direction, Frame)>>,
}

fn run_pair<V, P>(
    transport: Transport,
    hello: &Hello,
    verifier: &mut V,
    prover: P,
) -> Result<(Vec<(Direction, Frame)>, usize, P), RunnerError>
where
    V: Party + Metered,
    P: Party + Send + 'static,
{
    match transport {
        Transport::Inproc => {
            let mut prover = prover;
            let (records, bits) = drive_tracked(verifier, &mut prover)?;
            Ok((records, bits, prover))
        }
        Transport::Tcp => net::loopback_trial(verifier, prover, hello),
    }
}

fn validate(config: &RunConfig) -> Result<(), RunnerError> {
    if config.trials == 0 {
        return Err(RunnerError::Config("at least one trial required".into()));
    }
    if config.trials > u32::MAX as u64 {
        return Err(RunnerError::Config("trial count exceeds the wire limit".into()));
    }
    match &config.job {
        Job::Poq1 { n, .. } => {
            if *n == 0 {
                return Err(RunnerError::Config("n must be at least 1".into()));
            }
        }
        Job::Clawgen {
            lambda,
            k,
            m_bits,
            mode,
            adversary,
        } => {
            StreamParams::new(*lambda, *k, *m_bits)
                .map_err(|e| RunnerError::Config(e.to_string()))?;
            if let CgAdversary::Subset { window, .. } = adversary {
                if *window > *k {
                    return Err(RunnerError::Config(
                        "subset window cannot exceed the stream length".into(),
                    ));
                }
                if *mode == Mode::Accelerated {
                    return Err(RunnerError::Config(
                        "adversarial runs must use rejection mode".into(),
                    ));
                }
            }
        }
        Job::Poq2 {
            lambda, k, m_bits, ..
        } => {
            StreamParams::new(*lambda, *k, *m_bits)
                .map_err(|e| RunnerError::Config(e.to_string()))?;
        }
        Job::Raz {
            n,
            rounds,
            capacity,
            strategy,
        } => {
            if *n == 0 || *rounds == 0 {
                return Err(RunnerError::Config("n and rounds must be positive".into()));
            }
            if config.transport == Transport::Tcp {
                return Err(RunnerError::Config(
                    "the streaming-learning experiment has no wire form; use inproc".into(),
                ));
            }
            if config.transcripts.is_some() {
                return Err(RunnerError::Config(
                    "the streaming-learning experiment produces no transcripts".into(),
                ));
            }
            match strategy {
                RazStrategyKind::StoreFirstJ | RazStrategyKind::OverBudget
                    if capacity.is_none() =>
                {
                    return Err(RunnerError::Config(format!(
                        "strategy {} needs a memory capacity",
                        strategy.name()
                    )));
                }
                _ => {}
            }
        }
    }
    if let (Some(c), Some((sp, _))) = (config.strict_c, config.job.stream_params()) {
        if !sp.satisfies_strict(c) {
            return Err(RunnerError::Config(format!(
                "parameters fail the soundness-regime check at c = {c}"
            )));
        }
    }
    Ok(())
}

fn trial_poq1(
    n: usize,
    adversary: P1Adversary,
    config: &RunConfig,
    trial: u64,
    want_records: bool,
) -> Result<TrialOut, RunnerError> {
    let params = P1Params::new(n);
    let hello = config.job.hello(config.trials);
    let mut out = TrialOut::default();
    match adversary {
        P1Adversary::Honest => {
            let (mut verifier, prover) = honest_parties(params, config.seed, trial);
            let (records, vbits, prover) =
                run_pair(config.transport, &hello, &mut verifier, prover)?;
            let degenerate = row_rank(params, &records) < params.n;
            let conditional = chsh_prob(
                prover.qubit().expect("prover committed"),
                verifier.theta().expect("verifier challenged"),
                verifier.expected_b().expect("verifier challenged"),
            );
            out.accept = verifier.verdict();
            out.conditional = Some(conditional);
            if !degenerate {
                out.exactness_dev = Some((conditional - COS2_PI_8).abs());
            }
            out.degenerate = Some(degenerate);
            out.peak_qubits = Some(prover.peak_qubits());
            out.verifier_bits = Some(vbits);
            out.records = want_records.then_some(records);
        }
        P1Adversary::LinearMemory | P1Adversary::Unbounded => {
            let mut verifier = P1Verifier::new(
                params,
                substream(config.seed, protocol_id::POQ1, trial, Role::Verifier),
            );
            let rng = substream(config.seed, protocol_id::POQ1, trial, Role::Prover);
            let (records, vbits, peak) = if adversary == P1Adversary::LinearMemory {
                let audited = MemoryAudited::new(LinearMemoryP1Attack::new(params, rng), None);
                let (records, vbits, audited) =
                    run_pair(config.transport, &hello, &mut verifier, audited)?;
                (records, vbits, audited.peak_bits())
            } else {
                let audited = MemoryAudited::new(UnboundedP1Attack::new(params, rng), None);
                let (records, vbits, audited) =
                    run_pair(config.transport, &hello, &mut verifier, audited)?;
                (records, vbits, audited.peak_bits())
            };
            out.accept = verifier.verdict();
            out.degenerate = Some(row_rank(params, &records) < params.n);
            out.verifier_bits = Some(vbits);
            out.adversary_bits = Some(peak);
            out.records = want_records.then_some(records);
        }
    }
    Ok(out)
}

fn trial_clawgen(
    sp: StreamParams,
    mode: Mode,
    adversary: CgAdversary,
    config: &RunConfig,
    trial: u64,
    want_records: bool,
) -> Result<TrialOut, RunnerError> {
    let hello = config.job.hello(config.trials);
    let mut out = TrialOut::default();
    match adversary {
        CgAdversary::Honest => {
            let (mut verifier, prover) = clawgen_parties(sp, mode, config.seed, trial);
            let (records, vbits, prover) =
                run_pair(config.transport, &hello, &mut verifier, prover)?;
            let stitched = verifier.result().expect("run completed");
            let support = prover.result_support().expect("prover stitched");
            out.support_match =
                Some(support.0 == stitched.claw.x0 && support.1 == stitched.claw.x1);
            out.attempts = Some(verifier.attempts());
            out.streamed_bits = Some(verifier.streamed_bits());
            out.peak_qubits = Some(prover.peak_qubits());
            out.verifier_bits = Some(vbits);
            out.records = want_records.then_some(records);
        }
        CgAdversary::Subset { window, capacity } => {
            let mut verifier = CgVerifier::new(
                sp,
                Mode::Rejection,
                substream(config.seed, protocol_id::CLAWGEN, trial, Role::Verifier),
            );
            let attack = SubsetClawgenAttack::new(
                sp,
                window,
                substream(config.seed, protocol_id::CLAWGEN, trial, Role::Prover),
            );
            let audited = MemoryAudited::new(attack, capacity);
            let (records, vbits, audited) =
                run_pair(config.transport, &hello, &mut verifier, audited)?;
            let stitched = verifier.result().expect("run completed");
            let guess = audited.inner().guess().expect("attack stitched");
            out.accept =
                Some(guess.0 == stitched.claw.x0 && guess.1 == stitched.claw.x1);
            out.attempts = Some(verifier.attempts());
            out.streamed_bits = Some(verifier.streamed_bits());
            out.verifier_bits = Some(vbits);
            out.adversary_bits = Some(audited.peak_bits());
            out.records = want_records.then_some(records);
        }
    }
    Ok(out)
}

fn trial_poq2(
    sp: StreamParams,
    mode: Mode,
    config: &RunConfig,
    trial: u64,
    want_records: bool,
) -> Result<TrialOut, RunnerError> {
    let params = P2Params::new(sp, mode);
    let hello = config.job.hello(config.trials);
    let (mut verifier, prover) = p2_parties(params, config.seed, trial);
    let (records, vbits, prover) = run_pair(config.transport, &hello, &mut verifier, prover)?;
    let conditional = chsh_prob(
        prover.qubit().expect("prover committed"),
        verifier.theta().expect("verifier challenged"),
        verifier.expected_b().expect("verifier challenged"),
    );
    let vclaw = &verifier.claw().expect("claw is set").claw;
    let pclaw = prover.claw_view().expect("prover stitched");
    Ok(TrialOut {
        accept: verifier.verdict(),
        conditional: Some(conditional),
        exactness_dev: Some((conditional - COS2_PI_8).abs()),
        support_match: Some(
            pclaw.x0 == vclaw.x0 && pclaw.x1 == vclaw.x1 && pclaw.g == vclaw.g,
        ),
        attempts: Some(verifier.attempts()),
        streamed_bits: Some(verifier.streamed_bits()),
        alpha: verifier.alpha(),
        peak_qubits: Some(prover.peak_qubits()),
        verifier_bits: Some(vbits),
        records: want_records.then_some(records),
        ..TrialOut::default()
    })
}

fn trial_raz(
    n: usize,
    rounds: u64,
    capacity: Option<usize>,
    strategy: RazStrategyKind,
    config: &RunConfig,
    trial: u64,
) -> Result<TrialOut, RunnerError> {
    let boxed: Box<dyn RazStrategy> = match strategy {
        RazStrategyKind::GaussianElim => Box::new(GaussianElim),
        RazStrategyKind::StoreFirstJ => Box::new(StoreFirstJ {
            m: capacity.expect("validated"),
        }),
        RazStrategyKind::ZeroMemory => Box::new(ZeroMemory),
        RazStrategyKind::OverBudget => Box::new(OverBudget {
            claim_bits: capacity.expect("validated") + 1,
        }),
    };
    let mut rng = substream(config.seed, protocol_id::RAZ, trial, Role::Harness);
    match raz_experiment(n, rounds, capacity, boxed.as_ref(), &mut rng) {
        Ok(report) => Ok(TrialOut {
            accept: Some(report.success),
            adversary_bits: Some(report.peak_bits),
            ..TrialOut::default()
        }),
        Err(AdversaryError::MemoryViolation { .. }) => Ok(TrialOut {
            violation: true,
            ..TrialOut::default()
        }),
    }
}

fn run_trial(config: &RunConfig, trial: u64, want_records: bool) -> Result<TrialOut, RunnerError> {
    match &config.job {
        Job::Poq1 { n, adversary } => trial_poq1(*n, *adversary, config, trial, want_records),
        Job::Clawgen {
            mode, adversary, ..
        } => {
            let (sp, _) = config.job.stream_params().expect("validated");
            trial_clawgen(sp, *mode, *adversary, config, trial, want_records)
        }
        Job::Poq2 { mode, .. } => {
            let (sp, _) = config.job.stream_params().expect("validated");
            trial_poq2(sp, *mode, config, trial, want_records)
        }
        Job::Raz {
            n,
            rounds,
            capacity,
            strategy,
        } => trial_raz(*n, *rounds, *capacity, *strategy, config, trial),
    }
}

fn aggregate(config: &RunConfig, outs: &[TrialOut], wall: Duration) -> Report {
    let count_true = |f: fn(&TrialOut) -> Option<bool>| {
        let hits = outs.iter().filter(|t| f(t) == Some(true)).count() as u64;
        let denom = outs.iter().filter(|t| f(t).is_some()).count() as u64;
        (denom > 0).then(|| wilson95(hits, denom))
    };
    let aborted = outs.iter().filter(|t| t.aborted).count() as u64;
    let violations = outs.iter().filter(|t| t.violation).count() as u64;
    let strict = config
        .job
        .stream_params()
        .map(|(sp, _)| sp.satisfies_strict(config.strict_c.unwrap_or(1.0)));
    Report {
        protocol: config.job.name().into(),
        adversary: config.job.adversary_name(),
        params: config.job.params_value(),
        seed: config.seed,
        transport: config.transport.name().into(),
        trials: config.trials,
        completed: outs.len() as u64 - aborted - violations,
        aborted,
        memory_violations: violations,
        wall_ms: wall.as_millis() as u64,
        accept: count_true(|t| t.accept),
        conditional_accept: summarize(outs.iter().filter_map(|t| t.conditional)),
        conditional_max_dev: outs
            .iter()
            .filter_map(|t| t.exactness_dev)
            .fold(None, |acc, d| Some(acc.map_or(d, |a: f64| a.max(d)))),
        degenerate_trials: outs
            .iter()
            .any(|t| t.degenerate.is_some())
            .then(|| outs.iter().filter(|t| t.degenerate == Some(true)).count() as u64),
        support_match: count_true(|t| t.support_match),
        attempts: summarize(outs.iter().filter_map(|t| t.attempts.map(|a| a as f64))),
        streamed_bits_total: outs
            .iter()
            .any(|t| t.streamed_bits.is_some())
            .then(|| outs.iter().filter_map(|t| t.streamed_bits).sum()),
        alpha_ones: outs
            .iter()
            .any(|t| t.alpha.is_some())
            .then(|| outs.iter().filter(|t| t.alpha == Some(true)).count() as u64),
        peak_qubits_max: outs.iter().filter_map(|t| t.peak_qubits).max(),
        verifier_peak_bits_max: outs.iter().filter_map(|t| t.verifier_bits).max(),
        adversary_peak_bits_max: outs.iter().filter_map(|t| t.adversary_bits).max(),
        strict_param_check: strict,
    }
}

/// Builds the per-trial transcripts; headers and records derive from content
/// alone, so the same seeds give byte-identical output on every transport.
fn transcripts_jsonl(config: &RunConfig, outs: &[TrialOut]) -> Result<String, RunnerError> {
    let mut text = String::new();
    for (trial, out) in outs.iter().enumerate() {
        let records = out.records.clone().ok_or_else(|| {
            RunnerError::Config("transcripts requested but trial kept no records".into())
        })?;
        let transcript = Transcript {
            header: TranscriptHeader {
                protocol: config.job.name().into(),
                params: config.job.params_value(),
                seed: config.seed,
                trial: trial as u64,
                flags: Vec::new(),
            },
            records,
        };
        text.push_str(&transcript.to_jsonl());
    }
    Ok(text)
}

pub fn run(config: &RunConfig) -> Result<Report, RunnerError> {
    validate(config)?;
    let want_records = config.transcripts.is_some();
    let start = Instant::now();
    let outs: Vec<TrialOut> = match config.transport {
        Transport::Inproc => (0..config.trials)
            .into_par_iter()
            .map(|trial| run_trial(config, trial, want_records))
            .collect::<Result<_, _>>()?,
        Transport::Tcp => {
            let mut outs = Vec::with_capacity(config.trials as usize);
            for trial in 0..config.trials {
                outs.push(run_trial(config, trial, want_records)?);
            }
            outs
        }
    };
    let report = aggregate(config, &outs, start.elapsed());
    if let Some(path) = &config.transcripts {
        let text = transcripts_jsonl(config, &outs)?;
        std::fs::write(path, text).map_err(|e| RunnerError::Transport(e.to_string()))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServeRole {
    Verifier,
    Prover,
}

/// One endpoint of a cross-process run. The verifier listens and serves one
/// trial per inbound connection; the prover dials once per trial, in trial
/// order. Lost connections abort the trial and the loop moves on.
pub fn serve(role: ServeRole, endpoint: &str, config: &RunConfig) -> Result<Report, RunnerError> {
    validate(config)?;
    if matches!(config.job, Job::Raz { .. }) {
        return Err(RunnerError::Config(
            "the streaming-learning experiment runs in one process".into(),
        ));
    }
    let hello = config.job.hello(config.trials);
    let start = Instant::now();
    let mut outs = Vec::with_capacity(config.trials as usize);
    match role {
        ServeRole::Verifier => {
            let listener = std::net::TcpListener::bind(endpoint)
                .map_err(|e| RunnerError::Transport(e.to_string()))?;
            for trial in 0..config.trials {
                let result = serve_verifier_trial(&listener, &hello, config, trial);
                match result {
                    Ok(out) => outs.push(out),
                    Err(RunnerError::Transport(_)) => outs.push(TrialOut {
                        aborted: true,
                        ..TrialOut::default()
                    }),
                    Err(e) => return Err(e),
                }
            }
        }
        ServeRole::Prover => {
            for trial in 0..config.trials {
                let result = serve_prover_trial(endpoint, &hello, config, trial);
                match result {
                    Ok(out) => outs.push(out),
                    Err(RunnerError::Transport(_)) => outs.push(TrialOut {
                        aborted: true,
                        ..TrialOut::default()
                    }),
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(aggregate(config, &outs, start.elapsed()))
}

fn serve_verifier_trial(
    listener: &std::net::TcpListener,
    hello: &Hello,
    config: &RunConfig,
    trial: u64,
) -> Result<TrialOut, RunnerError> {
    let (stream, _) = listener
        .accept()
        .map_err(|e| RunnerError::Transport(e.to_string()))?;
    let mut io = net::FrameStream::new(stream)?;
    net::server_hello(&mut io, hello)?;
    let mut out = TrialOut::default();
    match &config.job {
        Job::Poq1 { n, .. } => {
            let params = P1Params::new(*n);
            let mut verifier = P1Verifier::new(
                params,
                substream(config.seed, protocol_id::POQ1, trial, Role::Verifier),
            );
            let (records, vbits) = net::pump_initiator(&mut verifier, &mut io)?;
            out.accept = verifier.verdict();
            out.degenerate = Some(row_rank(params, &records) < params.n);
            out.verifier_bits = Some(vbits);
        }
        Job::Clawgen { mode, .. } => {
            let (sp, _) = config.job.stream_params().expect("validated");
            let mut verifier = CgVerifier::new(
                sp,
                *mode,
                substream(config.seed, protocol_id::CLAWGEN, trial, Role::Verifier),
            );
            let (_records, vbits) = net::pump_initiator(&mut verifier, &mut io)?;
            out.attempts = Some(verifier.attempts());
            out.streamed_bits = Some(verifier.streamed_bits());
            out.verifier_bits = Some(vbits);
        }
        Job::Poq2 { mode, .. } => {
            let (sp, _) = config.job.stream_params().expect("validated");
            let mut verifier = P2Verifier::new(
                P2Params::new(sp, *mode),
                substream(config.seed, protocol_id::POQ2, trial, Role::Verifier),
            );
            let (_records, vbits) = net::pump_initiator(&mut verifier, &mut io)?;
            out.accept = verifier.verdict();
            out.alpha = verifier.alpha();
            out.attempts = Some(verifier.attempts());
            out.streamed_bits = Some(verifier.streamed_bits());
            out.verifier_bits = Some(vbits);
        }
        Job::Raz { .. } => unreachable!("rejected by serve"),
    }
    Ok(out)
}

fn serve_prover_trial(
    endpoint: &str,
    hello: &Hello,
    config: &RunConfig,
    trial: u64,
) -> Result<TrialOut, RunnerError> {
    let stream = net::connect_with_retry(endpoint, Duration::from_secs(5))?;
    let mut io = net::FrameStream::new(stream)?;
    net::client_hello(&mut io, hello)?;
    let mut out = TrialOut::default();
    match &config.job {
        Job::Poq1 { n, adversary } => {
            let params = P1Params::new(*n);
            let rng = substream(config.seed, protocol_id::POQ1, trial, Role::Prover);
            match adversary {
                P1Adversary::Honest => {
                    let mut prover = poq_core::poq1::P1Prover::new(params, rng);
                    net::pump_responder(&mut prover, &mut io)?;
                    out.accept = prover.verdict();
                    out.peak_qubits = Some(prover.peak_qubits());
                }
                P1Adversary::LinearMemory => {
                    let mut audited =
                        MemoryAudited::new(LinearMemoryP1Attack::new(params, rng), None);
                    net::pump_responder(&mut audited, &mut io)?;
                    out.accept = audited.inner().verdict();
                    out.adversary_bits = Some(audited.peak_bits());
                }
                P1Adversary::Unbounded => {
                    let mut audited =
                        MemoryAudited::new(UnboundedP1Attack::new(params, rng), None);
                    net::pump_responder(&mut audited, &mut io)?;
                    out.accept = audited.inner().verdict();
                    out.adversary_bits = Some(audited.peak_bits());
                }
            }
        }
        Job::Clawgen { adversary, .. } => {
            let (sp, _) = config.job.stream_params().expect("validated");
            let rng = substream(config.seed, protocol_id::CLAWGEN, trial, Role::Prover);
            match adversary {
                CgAdversary::Honest => {
                    let mut prover = poq_core::clawgen::CgProver::new(sp, rng);
                    net::pump_responder(&mut prover, &mut io)?;
                    out.peak_qubits = Some(prover.peak_qubits());
                }
                CgAdversary::Subset { window, capacity } => {
                    let attack = SubsetClawgenAttack::new(sp, *window, rng);
                    let mut audited = MemoryAudited::new(attack, *capacity);
                    net::pump_responder(&mut audited, &mut io)?;
                    out.adversary_bits = Some(audited.peak_bits());
                }
            }
        }
        Job::Poq2 { mode, .. } => {
            let (sp, _) = config.job.stream_params().expect("validated");
            let mut prover = poq_core::poq2::P2Prover::new(
                P2Params::new(sp, *mode),
                substream(config.seed, protocol_id::POQ2, trial, Role::Prover),
            );
            net::pump_responder(&mut prover, &mut io)?;
            out.accept = prover.verdict();
            out.peak_qubits = Some(prover.peak_qubits());
        }
        Job::Raz { .. } => unreachable!("rejected by serve"),
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IhDiagReport {
    pub protocol: String,
    pub k: usize,
    pub rounds: usize,
    pub b_set: Vec<usize>,
    /// Exact optimal probability that an adaptive responder lands the final
    /// pair inside the target set.
    pub optimal_value: f64,
}

pub fn ih_diag(k: usize, b_set: &[usize]) -> Result<IhDiagReport, RunnerError> {
    let params = IhParams::new(k).map_err(|e| RunnerError::Config(e.to_string()))?;
    let mut set = b_set.to_vec();
    set.sort_unstable();
    set.dedup();
    if set.is_empty() {
        return Err(RunnerError::Config("target set must be nonempty".into()));
    }
    if set.iter().any(|&v| v < 1 || v > k) {
        return Err(RunnerError::Config(format!(
            "target set entries must lie in 1..={k}"
        )));
    }
    Ok(IhDiagReport {
        protocol: "ih-diag".into(),
        k,
        rounds: params.rounds(),
        b_set: set.clone(),
        optimal_value: optimal_adversary_value(params, &set),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poq1_config(n: usize, trials: u64, transport: Transport) -> RunConfig {
        RunConfig {
            job: Job::Poq1 {
                n,
                adversary: P1Adversary::Honest,
            },
            trials,
            seed: 7,
            transport,
            transcripts: None,
            strict_c: None,
        }
    }

    #[test]
    fn wilson_interval_brackets_the_rate() {
        let stats = wilson95(850, 1000);
        assert!(stats.wilson95_lo < 0.85 && 0.85 < stats.wilson95_hi);
        assert!(stats.wilson95_hi - stats.wilson95_lo < 0.05);
        let empty = wilson95(0, 0);
        assert_eq!(empty.rate, 0.0);
    }

    #[test]
    fn poq1_inproc_report_has_the_honest_shape() {
        let report = run(&poq1_config(6, 300, Transport::Inproc)).unwrap();
        assert_eq!(report.protocol, "poq1");
        assert_eq!(report.completed, 300);
        let accept = report.accept.unwrap();
        assert!((accept.rate - COS2_PI_8).abs() < 0.08);
        assert!(report.conditional_max_dev.unwrap() < 1e-12);
        assert_eq!(report.peak_qubits_max, Some(8));
    }

    #[test]
    fn tcp_and_inproc_agree_trial_by_trial() {
        let inproc = run(&poq1_config(4, 20, Transport::Inproc)).unwrap();
        let tcp = run(&poq1_config(4, 20, Transport::Tcp)).unwrap();
        assert_eq!(inproc.accept.unwrap().count, tcp.accept.unwrap().count);
        assert_eq!(inproc.degenerate_trials, tcp.degenerate_trials);
    }

    #[test]
    fn transcripts_are_transport_invariant() {
        let mut a = poq1_config(4, 10, Transport::Inproc);
        let mut b = poq1_config(4, 10, Transport::Tcp);
        a.transcripts = Some(std::env::temp_dir().join("poq1_inproc.jsonl"));
        b.transcripts = Some(std::env::temp_dir().join("poq1_tcp.jsonl"));
        run(&a).unwrap();
        run(&b).unwrap();
        let ta = std::fs::read(a.transcripts.unwrap()).unwrap();
        let tb = std::fs::read(b.transcripts.unwrap()).unwrap();
        assert!(!ta.is_empty());
        assert_eq!(ta, tb);
    }

    #[test]
    fn hello_hash_separates_jobs() {
        let a = Job::Poq1 {
            n: 16,
            adversary: P1Adversary::Honest,
        };
        let b = Job::Poq1 {
            n: 17,
            adversary: P1Adversary::Honest,
        };
        assert_ne!(a.hello(10).params_hash, b.hello(10).params_hash);
        assert_ne!(a.hello(10), a.hello(11));
        // Adversary choice is endpoint-local and must not change the hash.
        let c = Job::Poq1 {
            n: 16,
            adversary: P1Adversary::LinearMemory,
        };
        assert_eq!(a.hello(10), c.hello(10));
    }

    #[test]
    fn raz_over_budget_reports_violations_not_failures() {
        let config = RunConfig {
            job: Job::Raz {
                n: 8,
                rounds: 16,
                capacity: Some(20),
                strategy: RazStrategyKind::OverBudget,
            },
            trials: 25,
            seed: 3,
            transport: Transport::Inproc,
            transcripts: None,
            strict_c: None,
        };
        let report = run(&config).unwrap();
        assert_eq!(report.memory_violations, 25);
        assert_eq!(report.completed, 0);
        assert!(report.accept.is_none());
    }

    #[test]
    fn config_errors_are_code_two() {
        let mut config = poq1_config(0, 10, Transport::Inproc);
        let err = run(&config).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        config = poq1_config(4, 0, Transport::Inproc);
        assert_eq!(run(&config).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn ih_diag_matches_closed_forms() {
        let full: Vec<usize> = (1..=16).collect();
        assert!((ih_diag(16, &full).unwrap().optimal_value - 1.0).abs() < 1e-12);
        let single = ih_diag(16, &[3]).unwrap();
        assert!(single.optimal_value.abs() < 1e-12);
        assert!(ih_diag(16, &[0]).is_err());
        assert!(ih_diag(16, &[]).is_err());
    }
}
