//! Cross-endpoint runs: two serve() calls on localhost must reproduce the
//! in-process run verdict for verdict, trial by trial.

use poq_core::clawgen::Mode;
use poq_runner::{run, serve, CgAdversary, Job, P1Adversary, RunConfig, ServeRole, Transport};

fn config(job: Job, trials: u64, seed: u64) -> RunConfig {
    RunConfig {
        job,
        trials,
        seed,
        transport: Transport::Tcp,
        transcripts: None,
        strict_c: None,
    }
}

fn serve_both(endpoint: &'static str, config: &RunConfig) -> (poq_runner::Report, poq_runner::Report) {
    let vconfig = config.clone();
    let handle = std::thread::spawn(move || serve(ServeRole::Verifier, endpoint, &vconfig));
    let prover = serve(ServeRole::Prover, endpoint, config).unwrap();
    let verifier = handle.join().unwrap().unwrap();
    (verifier, prover)
}

#[test]
fn poq1_serve_matches_inproc() {
    let job = Job::Poq1 {
        n: 8,
        adversary: P1Adversary::Honest,
    };
    let cfg = config(job.clone(), 100, 7);
    let (verifier, prover) = serve_both("127.0.0.1:43917", &cfg);
    let mut inproc = cfg.clone();
    inproc.transport = Transport::Inproc;
    let local = run(&inproc).unwrap();
    assert_eq!(verifier.aborted, 0);
    assert_eq!(
        verifier.accept.unwrap().count,
        local.accept.unwrap().count,
        "verifier endpoint disagrees with the in-process run"
    );
    assert_eq!(
        prover.accept.unwrap().count,
        local.accept.unwrap().count,
        "prover endpoint disagrees with the in-process run"
    );
    assert_eq!(verifier.degenerate_trials, local.degenerate_trials);
}

#[test]
fn poq2_serve_matches_inproc() {
    let job = Job::Poq2 {
        lambda: 4,
        k: 16,
        m_bits: 0,
        mode: Mode::Accelerated,
    };
    let cfg = config(job.clone(), 60, 11);
    let (verifier, prover) = serve_both("127.0.0.1:43918", &cfg);
    let mut inproc = cfg.clone();
    inproc.transport = Transport::Inproc;
    let local = run(&inproc).unwrap();
    assert_eq!(verifier.accept.unwrap().count, local.accept.unwrap().count);
    assert_eq!(prover.accept.unwrap().count, local.accept.unwrap().count);
    assert_eq!(verifier.alpha_ones, local.alpha_ones);
    assert_eq!(
        verifier.streamed_bits_total.unwrap(),
        local.streamed_bits_total.unwrap()
    );
}

#[test]
fn clawgen_serve_runs_the_subset_adversary() {
    let job = Job::Clawgen {
        lambda: 2,
        k: 8,
        m_bits: 0,
        mode: Mode::Rejection,
        adversary: CgAdversary::Subset {
            window: 8,
            capacity: None,
        },
    };
    let cfg = config(job.clone(), 40, 13);
    let (verifier, prover) = serve_both("127.0.0.1:43919", &cfg);
    assert_eq!(verifier.aborted, 0);
    assert_eq!(verifier.completed, 40);
    // A full-stream window banks every round, so the attack always holds a
    // claw; the verifier side only sees well-formed honest-shaped traffic.
    assert!(prover.adversary_peak_bits_max.unwrap() > 0);
    let mut inproc = cfg.clone();
    inproc.transport = Transport::Inproc;
    let local = run(&inproc).unwrap();
    assert_eq!(local.accept.unwrap().count, 40);
    assert_eq!(
        verifier.attempts.unwrap().mean,
        local.attempts.unwrap().mean,
        "attempt counts must match across process split"
    );
}
