//! The exploration engine: drives herds along every feasible path,
//! widening at loop boundaries until paths close under subsumption, and
//! deflecting every potential failure onto a provably-failing strictly
//! smaller trace. In classic mode no shrunk traces exist, so a potential
//! failure immediately yields an unknown verdict — the baseline can
//! under-report safety but never certifies a buggy program.
//!
//! Exploration is a fork-join recursion over split children. Each branch
//! owns a clone of the herds seen so far, and sibling subtrees always
//! diverge at one path symbol, so widening neighborhoods are local to a
//! branch and the explored tree (and thus every counter) is the same for
//! any worker count, as long as no time or state budget interrupts a run.

use crate::herd::{DomainOpts, Geometry, Herd, PathSym, StepEvent, TracePc};
use crate::instrument::instrument_checks;
use crate::ir::{Instr, InstrId, LoopId, ProgramIR};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct VerifyOpts {
    pub domain: DomainOpts,
    /// Escalation attempts after an unknown verdict (unroll and prefix
    /// both grow by one per retry).
    pub max_retries: u32,
    /// Wall-clock budget across all attempts.
    pub timeout: Option<Duration>,
    /// Worker threads; 1 forces the sequential path, 0 lets the runtime
    /// pick.
    pub workers: usize,
    /// Herd-count safety valve.
    pub herd_budget: u64,
    /// Split-recursion depth safety valve.
    pub max_depth: u32,
}

impl Default for VerifyOpts {
    fn default() -> Self {
        VerifyOpts {
            domain: DomainOpts::default(),
            max_retries: 2,
            timeout: None,
            workers: 0,
            herd_budget: 500_000,
            max_depth: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Safe,
    Unknown,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyStats {
    pub herds: u64,
    pub splits: u64,
    pub widenings: u64,
    pub shrunk_added: u64,
    pub locks: u64,
    pub blocked: u64,
    pub blames: u64,
    pub strictness_violations: u64,
    pub subsumed: u64,
    /// Distinct event classes observed, in lexicographic order.
    pub milestones: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutcome {
    pub verdict: Verdict,
    /// Populated for unknown verdicts.
    pub reason: Option<String>,
    pub stats: VerifyStats,
    pub attempts: u32,
    pub elapsed_ms: u64,
}

#[derive(Default)]
struct EngineStats {
    herds: AtomicU64,
    splits: AtomicU64,
    widenings: AtomicU64,
    shrunk_added: AtomicU64,
    locks: AtomicU64,
    blocked: AtomicU64,
    blames: AtomicU64,
    strictness_violations: AtomicU64,
    subsumed: AtomicU64,
    milestones: Mutex<BTreeSet<&'static str>>,
}

impl EngineStats {
    fn milestone(&self, m: &'static str) {
        self.milestones.lock().unwrap().insert(m);
    }

    fn snapshot(&self) -> VerifyStats {
        VerifyStats {
            herds: self.herds.load(Ordering::Relaxed),
            splits: self.splits.load(Ordering::Relaxed),
            widenings: self.widenings.load(Ordering::Relaxed),
            shrunk_added: self.shrunk_added.load(Ordering::Relaxed),
            locks: self.locks.load(Ordering::Relaxed),
            blocked: self.blocked.load(Ordering::Relaxed),
            blames: self.blames.load(Ordering::Relaxed),
            strictness_violations: self.strictness_violations.load(Ordering::Relaxed),
            subsumed: self.subsumed.load(Ordering::Relaxed),
            milestones: self.milestones.lock().unwrap().iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct UnknownInfo {
    at: Option<InstrId>,
    line: u32,
    why: String,
}

impl UnknownInfo {
    fn render(&self) -> String {
        match self.at {
            Some(id) if self.line > 0 => {
                format!("line {}: {} (instruction {})", self.line, self.why, id)
            }
            Some(id) => format!("{} (instruction {})", self.why, id),
            None => self.why.clone(),
        }
    }
}

struct Ctx<'a> {
    ir: &'a ProgramIR,
    geo: &'a Geometry,
    opts: &'a DomainOpts,
    deadline: Option<Instant>,
    stats: &'a EngineStats,
    parallel: bool,
    herd_budget: u64,
    max_depth: u32,
}

type SeenMap = BTreeMap<Vec<PathSym>, Vec<Herd>>;

enum Boundary {
    Subsumed,
    Continue,
}

/// Instrument (idempotent), then explore every path of `ir`.
pub fn verify(ir: &ProgramIR, opts: &VerifyOpts) -> VerifyOutcome {
    let start = Instant::now();
    let ir = instrument_checks(ir, opts.domain.overflow_checks);
    let geo = Geometry::new(&ir, opts.domain.prefix);
    let stats = EngineStats::default();
    let parallel = cfg!(feature = "parallel") && opts.workers != 1;
    let ctx = Ctx {
        ir: &ir,
        geo: &geo,
        opts: &opts.domain,
        deadline: opts.timeout.map(|t| start + t),
        stats: &stats,
        parallel,
        herd_budget: opts.herd_budget,
        max_depth: opts.max_depth,
    };
    stats.milestone("herd-start");
    stats.herds.fetch_add(1, Ordering::Relaxed);
    let herd = Herd::initial(&ir, &geo);
    let unknown = run_in_pool(opts, || explore(&ctx, herd, SeenMap::new(), 0));
    if unknown.is_none() {
        stats.milestone("safe-verdict");
    }
    VerifyOutcome {
        verdict: if unknown.is_none() { Verdict::Safe } else { Verdict::Unknown },
        reason: unknown.map(|u| u.render()),
        stats: stats.snapshot(),
        attempts: 1,
        elapsed_ms: start.elapsed().as_millis() as u64,
    }
}

/// Retry with a deeper unroll and a longer exact prefix after an unknown
/// verdict, keeping one wall-clock budget across attempts.
pub fn verify_with_retry(ir: &ProgramIR, opts: &VerifyOpts) -> VerifyOutcome {
    let start = Instant::now();
    let overall: Option<Instant> = opts.timeout.map(|t| start + t);
    let mut attempt_opts = opts.clone();
    let mut attempt = 0;
    loop {
        attempt += 1;
        if let Some(d) = overall {
            let now = Instant::now();
            if now >= d {
                // Out of time before this attempt could start.
                attempt_opts.timeout = Some(Duration::from_millis(0));
            } else {
                attempt_opts.timeout = Some(d - now);
            }
        }
        let mut out = verify(ir, &attempt_opts);
        out.attempts = attempt;
        out.elapsed_ms = start.elapsed().as_millis() as u64;
        let out_of_time = overall.is_some_and(|d| Instant::now() >= d);
        if out.verdict == Verdict::Safe || attempt > opts.max_retries || out_of_time {
            return out;
        }
        attempt_opts.domain.unroll += 1;
        attempt_opts.domain.prefix += 1;
    }
}

fn run_in_pool<F>(opts: &VerifyOpts, f: F) -> Option<UnknownInfo>
where
    F: FnOnce() -> Option<UnknownInfo> + Send,
{
    #[cfg(feature = "parallel")]
    {
        if opts.workers != 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(opts.workers)
                .build()
                .expect("worker pool");
            return pool.install(f);
        }
    }
    let _ = &opts;
    f()
}

fn explore(ctx: &Ctx, mut herd: Herd, mut seen: SeenMap, depth: u32) -> Option<UnknownInfo> {
    if depth > ctx.max_depth {
        return Some(UnknownInfo { at: None, line: 0, why: "split depth budget exhausted".into() });
    }
    let mut pending: Option<LoopId> = None;
    loop {
        if let Some(d) = ctx.deadline {
            if Instant::now() >= d {
                return Some(UnknownInfo { at: None, line: 0, why: "time budget exhausted".into() });
            }
        }
        if ctx.stats.herds.load(Ordering::Relaxed) > ctx.herd_budget {
            return Some(UnknownInfo { at: None, line: 0, why: "state budget exhausted".into() });
        }
        match herd.primary_pc() {
            TracePc::Failed(id) => {
                return match herd.blame(ctx.opts) {
                    Some((_cand, strict)) => {
                        ctx.stats.blames.fetch_add(1, Ordering::Relaxed);
                        if !strict {
                            ctx.stats.strictness_violations.fetch_add(1, Ordering::Relaxed);
                        }
                        ctx.stats.milestone("blamed");
                        None
                    }
                    None => {
                        let line = ctx.ir.lines.get(id as usize).copied().unwrap_or(0);
                        let why = if ctx.opts.classic {
                            "possible failure (classic mode tracks no smaller traces)"
                        } else {
                            "possible failure with no strictly smaller trace failing alongside it"
                        };
                        Some(UnknownInfo { at: Some(id), line, why: why.into() })
                    }
                };
            }
            TracePc::Halted | TracePc::Ignored => return None,
            TracePc::Active(_) => {}
        }
        if herd.needs_split(ctx.ir) {
            // Loop bookkeeping runs at the next decision point, where the
            // primary sits at the loop head and shrunk traces can lock
            // one lap behind.
            if let Some(l) = pending.take() {
                match boundary(ctx, &mut herd, &mut seen, l) {
                    Boundary::Subsumed => return None,
                    Boundary::Continue => continue,
                }
            }
            let TracePc::Active(pc) = herd.primary_pc() else { unreachable!() };
            let kind = match ctx.ir.instrs[pc as usize] {
                Instr::Check { .. } => "check-split",
                _ => "branch-split",
            };
            let children = herd.split(ctx.ir, ctx.geo, ctx.opts);
            ctx.stats.splits.fetch_add(1, Ordering::Relaxed);
            ctx.stats.milestone(kind);
            ctx.stats.herds.fetch_add(children.len() as u64, Ordering::Relaxed);
            return explore_children(ctx, children, seen, depth);
        }
        match herd.step(ctx.ir, ctx.geo, ctx.opts) {
            StepEvent::LoopIterDone(l) => {
                if let Some(prev) = pending.replace(l) {
                    // Two boundaries with no decision point in between:
                    // close out the earlier one here.
                    match boundary(ctx, &mut herd, &mut seen, prev) {
                        Boundary::Subsumed => return None,
                        Boundary::Continue => {}
                    }
                }
            }
            StepEvent::Stepped | StepEvent::Terminal => {}
            StepEvent::NeedsSplit => unreachable!("split handled before stepping"),
        }
    }
}

/// Everything that happens once per completed loop iteration: seed new
/// shrunk traces, let unlocked ones hunt for a correspondence, widen when
/// the unroll budget is spent, and prune by subsumption.
fn boundary(ctx: &Ctx, herd: &mut Herd, seen: &mut SeenMap, l: LoopId) -> Boundary {
    let added = herd.maybe_add_shrunk(ctx.ir, ctx.geo, ctx.opts);
    if !added.is_empty() {
        ctx.stats.shrunk_added.fetch_add(added.len() as u64, Ordering::Relaxed);
        ctx.stats.milestone("shrunk-added");
    }
    let locked = herd.run_seek(ctx.ir, ctx.geo, ctx.opts, l);
    if !locked.is_empty() {
        ctx.stats.locks.fetch_add(locked.len() as u64, Ordering::Relaxed);
        ctx.stats.milestone("shrunk-locked");
    }
    if herd.has_blocked_shrunk() {
        ctx.stats.blocked.fetch_add(1, Ordering::Relaxed);
        ctx.stats.milestone("shrunk-blocked");
    }
    if herd.should_widen(ctx.opts, l) {
        let path = herd.truncate_path(ctx.ir, l);
        let neighbors: Vec<&Herd> = seen.get(&path).map(|v| v.iter().collect()).unwrap_or_default();
        let weakening = neighbors.iter().any(|n| herd.same_shape(n));
        herd.widen(ctx.geo, &neighbors);
        ctx.stats.widenings.fetch_add(1, Ordering::Relaxed);
        ctx.stats.milestone("widened");
        if weakening {
            ctx.stats.milestone("weakened");
        }
    }
    let key = herd.path.clone();
    if let Some(entry) = seen.get(&key) {
        for b in entry {
            if herd.more_precise(b) {
                ctx.stats.subsumed.fetch_add(1, Ordering::Relaxed);
                ctx.stats.milestone("subsumed");
                return Boundary::Subsumed;
            }
        }
    }
    let mut stripped = herd.clone();
    stripped.strip();
    seen.entry(key).or_default().push(stripped);
    Boundary::Continue
}

fn explore_children(ctx: &Ctx, children: Vec<Herd>, seen: SeenMap, depth: u32) -> Option<UnknownInfo> {
    if children.is_empty() {
        return None;
    }
    if children.len() == 1 {
        return explore(ctx, children.into_iter().next().unwrap(), seen, depth + 1);
    }
    let results = map_children(ctx, children, &seen, depth);
    results.into_iter().flatten().next()
}

#[cfg(feature = "parallel")]
fn map_children(ctx: &Ctx, children: Vec<Herd>, seen: &SeenMap, depth: u32) -> Vec<Option<UnknownInfo>> {
    use rayon::prelude::*;
    if ctx.parallel {
        children
            .into_par_iter()
            .map(|c| explore(ctx, c, seen.clone(), depth + 1))
            .collect()
    } else {
        children.into_iter().map(|c| explore(ctx, c, seen.clone(), depth + 1)).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn map_children(ctx: &Ctx, children: Vec<Herd>, seen: &SeenMap, depth: u32) -> Vec<Option<UnknownInfo>> {
    children.into_iter().map(|c| explore(ctx, c, seen.clone(), depth + 1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::front::compile;

    fn check(src: &str, opts: &VerifyOpts) -> VerifyOutcome {
        let ir = compile(src, "t").expect("compiles");
        verify_with_retry(&ir, opts)
    }

    fn descent() -> VerifyOpts {
        VerifyOpts { timeout: Some(Duration::from_secs(60)), ..VerifyOpts::default() }
    }

    fn classic() -> VerifyOpts {
        let mut o = descent();
        o.domain.classic = true;
        o
    }

    const FILL_VERIFY: &str = "\
void test(int *s, int n) {
    int i;
    for (i = 0; i < n; i++) { s[i] = 0; }
    for (i = 0; i < n; i++) { assert(s[i] == 0); }
}";

    #[test]
    fn straight_line_store_is_safe() {
        let out = check("void test(int *s, int n) { if (n > 0) { s[0] = 1; } }", &descent());
        assert_eq!(out.verdict, Verdict::Safe, "reason: {:?}", out.reason);
    }

    #[test]
    fn unguarded_store_is_unknown() {
        let out = check("void test(int *s, int n) { s[0] = 1; }", &descent());
        assert_eq!(out.verdict, Verdict::Unknown);
        assert!(out.reason.is_some());
    }

    #[test]
    fn fill_loop_is_safe() {
        let out = check("void test(int *s, int n) { int i; for (i = 0; i < n; i++) { s[i] = 0; } }", &descent());
        assert_eq!(out.verdict, Verdict::Safe, "reason: {:?}", out.reason);
        assert!(out.stats.widenings > 0, "loop must widen");
    }

    #[test]
    fn off_by_one_fill_is_unknown() {
        let out = check("void test(int *s, int n) { int i; for (i = 0; i <= n; i++) { s[i] = 0; } }", &descent());
        assert_eq!(out.verdict, Verdict::Unknown);
    }

    #[test]
    fn fill_then_verify_is_safe_and_blames() {
        let out = check(FILL_VERIFY, &descent());
        assert_eq!(out.verdict, Verdict::Safe, "reason: {:?}", out.reason);
        assert!(out.stats.blames > 0, "the verify loop needs a deflection");
        assert_eq!(out.stats.strictness_violations, 0);
    }

    #[test]
    fn classic_mode_cannot_prove_fill_then_verify() {
        let out = check(FILL_VERIFY, &classic());
        assert_eq!(out.verdict, Verdict::Unknown);
        assert_eq!(out.stats.blames, 0);
        assert_eq!(out.stats.shrunk_added, 0);
    }

    #[test]
    fn classic_mode_rejects_buggy_program() {
        let out = check("void test(int *s, int n) { int i; for (i = 0; i <= n; i++) { s[i] = 0; } }", &classic());
        assert_eq!(out.verdict, Verdict::Unknown);
    }

    #[test]
    fn list_walk_is_safe() {
        let out = check(
            "struct node { int val; struct node *next; };\n\
             void test(struct node *l) { int n; n = 0; while (l != 0) { n = n + 1; l = l->next; } assert(n >= 0); }",
            &descent(),
        );
        assert_eq!(out.verdict, Verdict::Safe, "reason: {:?}", out.reason);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut seq = descent();
        seq.workers = 1;
        let mut par = descent();
        par.workers = 4;
        let a = check(FILL_VERIFY, &seq);
        let b = check(FILL_VERIFY, &par);
        assert_eq!(a.verdict, b.verdict);
        assert_eq!(a.stats.herds, b.stats.herds);
        assert_eq!(a.stats.splits, b.stats.splits);
        assert_eq!(a.stats.widenings, b.stats.widenings);
        assert_eq!(a.stats.blames, b.stats.blames);
        assert_eq!(a.stats.milestones, b.stats.milestones);
    }
}
