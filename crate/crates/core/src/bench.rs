//! Latency measurements against the interactive budgets.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cases::{gen_cases, CaseConstraints, CaseError};
use crate::explain::{annotate, diff_views, most_important, render_text, Anatomy, ExplainConfig};
use crate::planner::{
    default_familiar_views, default_target_pose, GreedyPlanner, PlanError, PlannerConfig, PlanningContext,
    SubgoalPlanner,
};
use crate::pose::{MovementType, ProbePose};
use crate::slicer::{slice, SliceGeometry};
use crate::volume::LabeledVolume;

/// Wall time the original pipeline needs for one start-to-target plan.
pub const REFERENCE_PLAN_SECONDS: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub slice_ms: f64,
    pub frame_p99_ms: f64,
    pub plan_s: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            slice_ms: 10.0,
            frame_p99_ms: 16.0,
            plan_s: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub slice_iters: usize,
    pub frame_iters: usize,
    pub plan_runs: usize,
    pub seed: u64,
    pub budgets: Budgets,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            slice_iters: 300,
            frame_iters: 300,
            plan_runs: 3,
            seed: 1,
            budgets: Budgets::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencyStats {
    pub fn from_ms(mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        LatencyStats {
            n,
            mean_ms: samples.iter().sum::<f64>() / n.max(1) as f64,
            p50_ms: percentile(&samples, 50.0),
            p95_ms: percentile(&samples, 95.0),
            p99_ms: percentile(&samples, 99.0),
            max_ms: samples.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub volume_dims: [usize; 3],
    pub threads: usize,
    pub slice: LatencyStats,
    pub frame: LatencyStats,
    /// Single-threaded greedy planning wall time per run.
    pub plan_seconds: Vec<f64>,
    pub plan_converged: Vec<bool>,
    pub budgets: Budgets,
    pub reference_plan_seconds: f64,
    pub violations: Vec<String>,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn plan_max_s(&self) -> f64 {
        self.plan_seconds.iter().copied().fold(0.0, f64::max)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "volume {:?}\nslice  p50 {:.2} ms  p99 {:.2} ms  max {:.2} ms  (budget {} ms)\n\
             frame  p50 {:.2} ms  p99 {:.2} ms  max {:.2} ms  (budget p99 {} ms)\n\
             plan   max {:.3} s over {} runs  (budget {} s; original pipeline ~{} s, {:.0}x faster)\n",
            self.volume_dims,
            self.slice.p50_ms,
            self.slice.p99_ms,
            self.slice.max_ms,
            self.budgets.slice_ms,
            self.frame.p50_ms,
            self.frame.p99_ms,
            self.frame.max_ms,
            self.budgets.frame_p99_ms,
            self.plan_max_s(),
            self.plan_seconds.len(),
            self.budgets.plan_s,
            self.reference_plan_seconds,
            self.reference_plan_seconds / self.plan_max_s().max(1e-9),
        );
        if self.passed() {
            s.push_str("all budgets met\n");
        } else {
            for v in &self.violations {
                s.push_str(&format!("BUDGET EXCEEDED: {v}\n"));
            }
        }
        s
    }
}

fn random_poses(rng: &mut ChaCha8Rng, target: &ProbePose, n: usize) -> Vec<ProbePose> {
    (0..n)
        .map(|_| {
            let mut p = *target;
            for m in MovementType::ALL {
                let r = if m.is_rotation() { 0.5 } else { 0.1 };
                p = p.apply(m, rng.gen_range(-r..r));
            }
            p
        })
        .collect()
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Measures slicing, the per-frame explanation loop and planning on `vol`,
/// using the default target pose and familiar views.
pub fn run_bench(vol: &LabeledVolume, geom: &SliceGeometry, cfg: &BenchConfig) -> Result<BenchReport, CaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let target = default_target_pose();
    let target_view = slice(vol, &target, geom);
    let anatomy = Anatomy::from_volume(vol);
    let explain = ExplainConfig::default();

    let poses = random_poses(&mut rng, &target, cfg.slice_iters.max(cfg.frame_iters));
    // Warm caches once before timing.
    let _ = slice(vol, &poses[0], geom);
    let slice_ms: Vec<f64> = poses[..cfg.slice_iters]
        .iter()
        .map(|p| {
            let t = Instant::now();
            std::hint::black_box(slice(vol, p, geom));
            ms(t)
        })
        .collect();

    let frame_ms: Vec<f64> = poses[..cfg.frame_iters]
        .iter()
        .map(|p| {
            let t = Instant::now();
            let view = slice(vol, p, geom);
            if let Ok(diff) = diff_views(&view, &target_view, &explain) {
                let important = most_important(&diff, &view, &target_view).ok();
                std::hint::black_box(render_text(&diff, important, &anatomy, &view, &target_view, &explain));
                std::hint::black_box(annotate(&view, &target_view, &diff));
            }
            ms(t)
        })
        .collect();

    let familiar = default_familiar_views(vol, geom);
    let ctx = PlanningContext::new(vol, *geom, &familiar);
    let planner = GreedyPlanner::new(PlannerConfig {
        parallel: false,
        ..PlannerConfig::default()
    });
    let mut plan_seconds = Vec::new();
    let mut plan_converged = Vec::new();
    if cfg.plan_runs > 0 {
        let cases = gen_cases(&ctx, &planner, &target, cfg.plan_runs, cfg.seed, &CaseConstraints::default())?;
        for c in &cases {
            let t = Instant::now();
            let r = planner.plan(&ctx, &c.start_pose, &target);
            plan_seconds.push(t.elapsed().as_secs_f64());
            plan_converged.push(match r {
                Ok(p) => p.converged,
                Err(PlanError::NonConvergence { .. }) => false,
                Err(e) => return Err(e.into()),
            });
        }
    }

    let slice = LatencyStats::from_ms(slice_ms);
    let frame = LatencyStats::from_ms(frame_ms);
    let b = cfg.budgets;
    let mut violations = Vec::new();
    if slice.max_ms > b.slice_ms {
        violations.push(format!("slice max {:.2} ms > {} ms", slice.max_ms, b.slice_ms));
    }
    if frame.p99_ms > b.frame_p99_ms {
        violations.push(format!("frame p99 {:.2} ms > {} ms", frame.p99_ms, b.frame_p99_ms));
    }
    let mut report = BenchReport {
        volume_dims: vol.dims(),
        threads: rayon::current_num_threads(),
        slice,
        frame,
        plan_seconds,
        plan_converged,
        budgets: b,
        reference_plan_seconds: REFERENCE_PLAN_SECONDS,
        violations,
    };
    let plan_max = report.plan_max_s();
    if plan_max > b.plan_s {
        report.violations.push(format!("plan {:.3} s > {} s", plan_max, b.plan_s));
    }
    Ok(report)
}
