//! Deterministic synthetic log corpora, generated from a small template
//! grammar of cluster-computing messages with injected fault logs. Used for
//! desk-scale end-to-end runs, the injection sweeps, and the tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Label, LogRecord, LogSequence};

/// Hostname-style slot values; these survive token normalization, so each
/// (template, host) pair embeds to its own point and templates form real
/// clusters.
const HOSTS: [&str; 20] = [
    "ares", "boreas", "castor", "delphi", "eos", "fornax", "gemini", "helios", "iris", "janus",
    "kronos", "lyra", "midas", "naxos", "orion", "pella", "rhea", "sparta", "thebe", "vesta",
];

const USERS: [&str; 8] = [
    "svc_etl", "svc_index", "svc_ml", "svc_report", "svc_sync", "svc_web", "svc_batch", "svc_adhoc",
];

#[derive(Debug, Clone, Copy)]
pub struct SynthOpts {
    pub sessions: usize,
    /// Fraction of sessions that receive fault messages.
    pub anomaly_session_frac: f64,
    pub seed: u64,
    /// 1 for the base grammar, 2 for the paraphrased "next release" grammar.
    pub version: u32,
}

impl Default for SynthOpts {
    fn default() -> Self {
        SynthOpts {
            sessions: 560,
            anomaly_session_frac: 0.15,
            seed: 4242,
            version: 1,
        }
    }
}

struct Ctx<'a> {
    rng: &'a mut ChaCha8Rng,
    version: u32,
}

impl Ctx<'_> {
    fn host(&mut self) -> &'static str {
        HOSTS[self.rng.gen_range(0..HOSTS.len())]
    }
    fn user(&mut self) -> &'static str {
        USERS[self.rng.gen_range(0..USERS.len())]
    }
    fn num(&mut self, hi: u64) -> u64 {
        self.rng.gen_range(0..hi)
    }
    fn id(&mut self) -> String {
        format!("blk_{:08x}", self.rng.gen::<u32>())
    }
}

// The normal grammar shares a heavy scaffold vocabulary (scheduler, node,
// executor, task, stage, status, ok, ...) so normal messages embed into a
// tight region; fault messages are short with a disjoint vocabulary and land
// far outside it. A rare "maintenance" message (still normal, present in
// training) anchors the upper tail of the normal score distribution.

fn startup(c: &mut Ctx) -> Vec<String> {
    vec![
        format!(
            "scheduler accepted job {} of user {} for executor on node {} status ok",
            c.id(),
            c.user(),
            c.host()
        ),
        format!(
            "scheduler allocated {} containers of job for executor on node {} status ok",
            c.num(64) + 1,
            c.host()
        ),
        format!(
            "scheduler loaded configuration of job of user {} for executor on node {} status ok",
            c.user(),
            c.host()
        ),
    ]
}

fn work_message(c: &mut Ctx) -> String {
    let v2 = c.version == 2;
    if c.rng.gen_range(0..700u32) == 0 {
        return "maintenance compacted metadata catalog".to_string();
    }
    match c.rng.gen_range(0..9u8) {
        0 => {
            let verb = if v2 { "pulled" } else { "stored" };
            format!(
                "broadcast piece {} of stage {} {} by executor on node {} status ok",
                c.num(100),
                c.num(40),
                verb,
                c.host()
            )
        }
        1 => format!(
            "scheduler assigned task {} of stage {} to executor on node {} status ok",
            c.num(500),
            c.num(40),
            c.host()
        ),
        2 => format!(
            "executor processed partition {} of stage {} on node {} in {} ms status ok",
            c.num(200),
            c.num(40),
            c.host(),
            c.num(900) + 10
        ),
        3 => {
            let verb = if v2 { "sent" } else { "served" };
            format!(
                "shuffle block {} of task {} {} by executor on node {} status ok",
                c.id(),
                c.num(500),
                verb,
                c.host()
            )
        }
        4 => format!(
            "executor finished task {} of stage {} on node {} status ok",
            c.num(500),
            c.num(40),
            c.host()
        ),
        5 => format!(
            "heartbeat of executor of stage {} on node {} received by scheduler status ok",
            c.num(40),
            c.host()
        ),
        6 => format!(
            "executor cached partition {} of stage {} in memory store on node {} status ok",
            c.num(200),
            c.num(40),
            c.host()
        ),
        7 => format!(
            "speculative check of stage {} completed by scheduler on node {} status ok",
            c.num(40),
            c.host()
        ),
        _ => format!(
            "executor wrote output of task {} to block {} on node {} status ok",
            c.num(500),
            c.id(),
            c.host()
        ),
    }
}

fn shutdown(c: &mut Ctx) -> Vec<String> {
    vec![
        format!(
            "task set of stage {} finished by executor on node {} status ok",
            c.num(40),
            c.host()
        ),
        format!(
            "job of stage {} completed by scheduler on node {} status ok",
            c.num(40),
            c.host()
        ),
        format!(
            "scheduler released {} containers of job from executor on node {} status ok",
            c.num(64) + 1,
            c.host()
        ),
    ]
}

fn fault_message(c: &mut Ctx) -> String {
    match c.rng.gen_range(0..5u8) {
        0 => "fatal crash connection refused".to_string(),
        1 => "fatal crash oom killed".to_string(),
        2 => "fatal crash checksum mismatch".to_string(),
        3 => "fatal crash pipeline stalled".to_string(),
        _ => "fatal crash kernel panic".to_string(),
    }
}

/// Generate a corpus of `opts.sessions` sessions (roughly 36 logs each).
/// Every record carries a gold label; anomalous sessions hold 1-3 fault
/// messages at interior positions.
pub fn generate_corpus(opts: &SynthOpts) -> Vec<LogSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n_anomalous = (opts.sessions as f64 * opts.anomaly_session_frac).round() as usize;
    let mut out = Vec::with_capacity(opts.sessions);
    for s in 0..opts.sessions {
        let session_id = format!("job-{:05}", s);
        let mut c = Ctx {
            rng: &mut rng,
            version: opts.version,
        };
        let mut bodies: Vec<(String, Label)> = Vec::new();
        for b in startup(&mut c) {
            bodies.push((b, Label::Normal));
        }
        let work = c.rng.gen_range(25..36usize);
        for _ in 0..work {
            let m = work_message(&mut c);
            bodies.push((m, Label::Normal));
        }
        for b in shutdown(&mut c) {
            bodies.push((b, Label::Normal));
        }
        if s < n_anomalous {
            let faults = c.rng.gen_range(2..=4usize);
            for _ in 0..faults {
                let pos = c.rng.gen_range(3..bodies.len() - 3);
                let m = fault_message(&mut c);
                bodies.insert(pos, (m, Label::Anomalous));
            }
        }
        let records = bodies
            .into_iter()
            .enumerate()
            .map(|(i, (body, label))| LogRecord {
                session_id: session_id.clone(),
                index: i,
                body,
                label: Some(label),
            })
            .collect();
        out.push(LogSequence {
            session_id,
            records,
        });
    }
    out
}
