use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nas::controller::{Controller, ControllerConfig};
use crate::nas::oracle::{arch_seed, RewardOracle};
use crate::nas::reinforce::{reinforce_update, Baseline};
use crate::nas::space::{enumerate_space, CandidateArch, SearchSpace};
use crate::nas::trace::{TraceRecord, TraceWriter};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub seed: u64,
    /// Controller samples per policy update.
    pub update_interval: usize,
    /// Enumerate the whole space when it fits in the budget.
    pub exhaustive_fallback: bool,
    pub controller: ControllerConfig,
    /// Share of a phase's candidates kept when none reaches the threshold.
    pub top_fraction: f64,
    /// Stop sampling after this many consecutive updates that found nothing new.
    pub max_idle_updates: usize,
    /// Evaluate candidates one after another instead of on the thread pool.
    pub sequential: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            seed: 0,
            update_interval: 50,
            exhaustive_fallback: false,
            controller: ControllerConfig::default(),
            top_fraction: 0.1,
            max_idle_updates: 20,
            sequential: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProgressiveConfig {
    pub k_start: usize,
    pub k_max: usize,
    /// Reward threshold per phase; the last entry applies to any later phase.
    pub thresholds: Vec<f64>,
    pub budget_per_phase: usize,
}

impl Default for ProgressiveConfig {
    fn default() -> Self {
        ProgressiveConfig {
            k_start: 3,
            k_max: 10,
            thresholds: vec![0.8, 0.7, 0.78],
            budget_per_phase: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub arch: CandidateArch,
    pub reward: f64,
    pub phase: usize,
    pub seed: u64,
    /// The oracle failed and the reward was recorded as 0.
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: usize,
    pub k: usize,
    pub evaluated: usize,
    pub exhaustive: bool,
    pub best_reward: f64,
    pub threshold: f64,
    pub kept: Vec<CandidateArch>,
    /// Nothing reached the threshold and the top share was kept instead.
    pub relaxed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub k_cur: usize,
    pub kept_prefixes: Vec<CandidateArch>,
    /// Every distinct candidate in first-evaluation order.
    pub reward_log: Vec<EvalRecord>,
    pub baseline: Option<f64>,
    pub phases: Vec<PhaseSummary>,
    /// Oracle calls made by this run.
    pub trained: usize,
    /// Rewards taken from a resumed trace instead of the oracle.
    pub resumed: usize,
}

impl SearchState {
    /// Highest reward, earliest evaluation on ties.
    pub fn best(&self) -> Option<&EvalRecord> {
        self.reward_log
            .iter()
            .fold(None, |best: Option<&EvalRecord>, r| match best {
                Some(b) if b.reward >= r.reward => Some(b),
                _ => Some(r),
            })
    }

    /// For every hop position, the share of kept candidates choosing each width.
    pub fn kept_histogram(&self) -> Vec<BTreeMap<usize, f64>> {
        let kept: Vec<&CandidateArch> = self.phases.iter().flat_map(|p| &p.kept).collect();
        let depth = kept.iter().map(|a| a.k()).max().unwrap_or(0);
        (0..depth)
            .map(|hop| {
                let mut counts = BTreeMap::new();
                let mut total = 0usize;
                for a in kept.iter().filter(|a| a.k() > hop) {
                    *counts.entry(a.dims[hop]).or_insert(0usize) += 1;
                    total += 1;
                }
                counts
                    .into_iter()
                    .map(|(w, c)| (w, c as f64 / total as f64))
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub best: CandidateArch,
    pub best_reward: f64,
    pub state: SearchState,
}

/// Search driver holding the reward cache, controller and optional trace.
pub struct Searcher<'a, O: RewardOracle + ?Sized> {
    space: &'a SearchSpace,
    oracle: &'a O,
    config: SearchConfig,
    cache: HashMap<CandidateArch, f64>,
    resume: HashMap<CandidateArch, TraceRecord>,
    trace: Option<TraceWriter>,
    state: SearchState,
    rng: ChaCha8Rng,
}

impl<'a, O: RewardOracle + ?Sized> Searcher<'a, O> {
    pub fn new(space: &'a SearchSpace, oracle: &'a O, config: SearchConfig) -> Result<Self> {
        if config.update_interval == 0 {
            return Err(Error::input("update interval must be at least 1"));
        }
        if !(config.top_fraction > 0.0 && config.top_fraction <= 1.0) {
            return Err(Error::input("top fraction must lie in (0, 1]"));
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Searcher {
            space,
            oracle,
            config,
            cache: HashMap::new(),
            resume: HashMap::new(),
            trace: None,
            state: SearchState::default(),
            rng,
        })
    }

    /// Logs every new evaluation to `trace`.
    pub fn with_trace(mut self, trace: TraceWriter) -> Self {
        self.trace = Some(trace);
        self
    }

    /// Serves rewards for previously traced candidates instead of retraining them.
    pub fn with_resume(mut self, records: Vec<TraceRecord>) -> Self {
        for r in records {
            self.resume.entry(r.arch.clone()).or_insert(r);
        }
        self
    }

    fn controller(&self, steps: usize) -> Result<Controller> {
        Controller::new(self.space.len(), steps, self.config.controller, self.config.seed)
    }

    /// Rewards for `archs` (in order), consulting the cache, then the resumed
    /// trace, then the oracle for whatever is left.
    fn evaluate(&mut self, archs: &[CandidateArch], phase: usize) -> Result<Vec<f64>> {
        let mut fresh = Vec::new();
        let mut queued = HashSet::new();
        for a in archs {
            if self.cache.contains_key(a) || !queued.insert(a.clone()) {
                continue;
            }
            if let Some(r) = self.resume.get(a) {
                self.cache.insert(a.clone(), r.reward);
                self.state.resumed += 1;
                self.state.reward_log.push(EvalRecord {
                    arch: a.clone(),
                    reward: r.reward,
                    phase,
                    seed: r.seed,
                    failed: false,
                });
            } else {
                fresh.push(a.clone());
            }
        }

        let run_seed = self.config.seed;
        let oracle = self.oracle;
        let eval = |a: &CandidateArch| {
            let seed = arch_seed(run_seed, a);
            let start = Instant::now();
            let outcome = oracle.reward(a, seed);
            (seed, outcome, start.elapsed().as_millis() as u64)
        };
        let results: Vec<_> = if self.config.sequential {
            fresh.iter().map(eval).collect()
        } else {
            fresh.par_iter().map(eval).collect()
        };

        for (arch, (seed, outcome, wall_ms)) in fresh.into_iter().zip(results) {
            let (reward, failed) = match outcome {
                Ok(r) if r.is_finite() && (0.0..=1.0).contains(&r) => (r, false),
                Ok(r) => {
                    log::warn!("candidate {arch} returned reward {r} outside [0, 1]; recorded as 0");
                    (0.0, true)
                }
                Err(e) => {
                    log::warn!("candidate {arch} failed: {e}; recorded as 0");
                    (0.0, true)
                }
            };
            self.state.trained += 1;
            if let Some(t) = &mut self.trace {
                t.write(&TraceRecord {
                    arch: arch.clone(),
                    reward,
                    phase,
                    wall_ms,
                    seed,
                })?;
            }
            self.cache.insert(arch.clone(), reward);
            self.state.reward_log.push(EvalRecord {
                arch,
                reward,
                phase,
                seed,
                failed,
            });
        }
        Ok(archs.iter().map(|a| self.cache[a]).collect())
    }

    /// Evaluates every candidate in `archs`.
    fn exhaustive_phase(&mut self, archs: Vec<CandidateArch>, phase: usize) -> Result<Vec<(CandidateArch, f64)>> {
        let rewards = self.evaluate(&archs, phase)?;
        Ok(archs.into_iter().zip(rewards).collect())
    }

    /// Controller-driven sampling of `k`-hop candidates until `budget` distinct
    /// candidates have rewards. With `prefixes`, each sample extends a
    /// uniformly chosen prefix by the remaining hops.
    fn sampled_phase(
        &mut self,
        controller: &mut Controller,
        baseline: &mut Baseline,
        k: usize,
        budget: usize,
        prefixes: Option<&[CandidateArch]>,
        space_size: Option<u64>,
        phase: usize,
    ) -> Result<Vec<(CandidateArch, f64)>> {
        let prefix_actions: Vec<Vec<usize>> = match prefixes {
            Some(p) => p
                .iter()
                .map(|a| self.space.actions_of(a).ok_or_else(|| Error::input(format!("{a} is outside the space"))))
                .collect::<Result<_>>()?,
            None => vec![Vec::new()],
        };
        let limit = space_size.map_or(budget, |s| budget.min(s.min(usize::MAX as u64) as usize));
        let mut seen: Vec<CandidateArch> = Vec::new();
        let mut seen_set = HashSet::new();
        let mut idle = 0;
        while seen.len() < limit && idle < self.config.max_idle_updates {
            let mut samples = Vec::with_capacity(self.config.update_interval);
            let mut archs = Vec::with_capacity(self.config.update_interval);
            let mut found_new = false;
            for _ in 0..self.config.update_interval {
                let prefix = &prefix_actions[self.rng.random_range(0..prefix_actions.len())];
                let sample = controller.sample(k, prefix, &mut self.rng)?;
                let arch = self.space.arch_from_actions(&sample.actions);
                if !seen_set.contains(&arch) {
                    if seen.len() == limit {
                        continue;
                    }
                    seen_set.insert(arch.clone());
                    seen.push(arch.clone());
                    found_new = true;
                }
                samples.push(sample);
                archs.push(arch);
            }
            idle = if found_new { 0 } else { idle + 1 };
            let rewards = self.evaluate(&archs, phase)?;
            let batch: Vec<_> = samples.into_iter().zip(rewards).collect();
            if !batch.is_empty() {
                reinforce_update(controller, &batch, baseline)?;
            }
        }
        if idle >= self.config.max_idle_updates {
            log::info!("controller stopped proposing new candidates after {} distinct", seen.len());
        }
        let rewards = self.evaluate(&seen, phase)?;
        Ok(seen.into_iter().zip(rewards).collect())
    }

    /// REINFORCE search over `k`-hop candidates with at most `budget` distinct evaluations.
    pub fn basic(mut self, k: usize, budget: usize) -> Result<SearchOutcome> {
        if budget == 0 {
            return Err(Error::input("budget must be at least 1"));
        }
        let (count, iter) = enumerate_space(self.space, k)?;
        let mut baseline = Baseline::new(self.config.controller.baseline_decay);
        let fits = count.is_some_and(|c| c <= budget as u64);
        let candidates = if self.config.exhaustive_fallback && fits {
            self.exhaustive_phase(iter.collect(), 1)?
        } else {
            let mut controller = self.controller(k)?;
            self.sampled_phase(&mut controller, &mut baseline, k, budget, None, count, 1)?
        };
        let best = best_of(&candidates).expect("at least one candidate").1;
        self.state.k_cur = k;
        self.state.baseline = baseline.value;
        self.state.phases.push(PhaseSummary {
            phase: 1,
            k,
            evaluated: candidates.len(),
            exhaustive: self.config.exhaustive_fallback && fits,
            best_reward: best,
            threshold: 0.0,
            kept: Vec::new(),
            relaxed: false,
        });
        self.finish()
    }

    /// Phase-wise search: `k_start` hops first, then each phase extends the
    /// prefixes that reached the phase threshold by one more hop.
    pub fn progressive(mut self, cfg: &ProgressiveConfig) -> Result<SearchOutcome> {
        if cfg.k_start == 0 || cfg.k_start > cfg.k_max {
            return Err(Error::input(format!("need 1 <= K_start <= K_max, got {} and {}", cfg.k_start, cfg.k_max)));
        }
        if cfg.thresholds.is_empty() || cfg.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::input("thresholds must be a non-empty list of values in [0, 1]"));
        }
        if cfg.budget_per_phase == 0 {
            return Err(Error::input("budget per phase must be at least 1"));
        }
        let budget = cfg.budget_per_phase;
        let mut controller = self.controller(cfg.k_max)?;
        let mut baseline = Baseline::new(self.config.controller.baseline_decay);

        let mut k = cfg.k_start;
        let mut phase = 1;
        let mut prefixes: Option<Vec<CandidateArch>> = None;
        let mut previous_best: Option<f64> = None;
        loop {
            let (candidates, exhaustive) = match &prefixes {
                None => {
                    let (count, iter) = enumerate_space(self.space, k)?;
                    if count.is_some_and(|c| c <= budget as u64) {
                        (self.exhaustive_phase(iter.collect(), phase)?, true)
                    } else {
                        let c = self.sampled_phase(&mut controller, &mut baseline, k, budget, None, count, phase)?;
                        (c, false)
                    }
                }
                Some(kept) => {
                    let count = (kept.len() as u64).checked_mul(self.space.len() as u64);
                    if count.is_some_and(|c| c <= budget as u64) {
                        let all = kept
                            .iter()
                            .flat_map(|p| self.space.values().iter().map(move |&w| p.extended(w)))
                            .collect();
                        (self.exhaustive_phase(all, phase)?, true)
                    } else {
                        let c = self.sampled_phase(&mut controller, &mut baseline, k, budget, Some(kept), count, phase)?;
                        (c, false)
                    }
                }
            };

            let threshold = cfg.thresholds[(phase - 1).min(cfg.thresholds.len() - 1)];
            let (kept, relaxed) = self.filter(&candidates, threshold);
            let best = best_of(&candidates).expect("at least one candidate").1;
            self.state.k_cur = k;
            self.state.kept_prefixes = kept.clone();
            self.state.phases.push(PhaseSummary {
                phase,
                k,
                evaluated: candidates.len(),
                exhaustive,
                best_reward: best,
                threshold,
                kept: kept.clone(),
                relaxed,
            });
            if previous_best.is_some_and(|p| best <= p) {
                log::info!("phase {phase} ({k} hops) did not improve on {previous_best:?}; stopping");
                break;
            }
            previous_best = Some(best);
            if k == cfg.k_max {
                break;
            }
            k += 1;
            phase += 1;
            prefixes = Some(kept);
        }
        self.state.baseline = baseline.value;
        self.finish()
    }

    /// Candidates at or above `threshold`, or the top share (at least one) if none are.
    fn filter(&self, candidates: &[(CandidateArch, f64)], threshold: f64) -> (Vec<CandidateArch>, bool) {
        let kept: Vec<CandidateArch> = candidates
            .iter()
            .filter(|(_, r)| *r >= threshold)
            .map(|(a, _)| a.clone())
            .collect();
        if !kept.is_empty() {
            return (kept, false);
        }
        let take = ((candidates.len() as f64 * self.config.top_fraction).ceil() as usize).max(1);
        log::warn!(
            "no candidate reached threshold {threshold}; keeping the top {take} of {}",
            candidates.len()
        );
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| candidates[b].1.total_cmp(&candidates[a].1).then(a.cmp(&b)));
        (order[..take].iter().map(|&i| candidates[i].0.clone()).collect(), true)
    }

    fn finish(self) -> Result<SearchOutcome> {
        let best = self
            .state
            .best()
            .ok_or_else(|| Error::input("search evaluated no candidates"))?
            .clone();
        Ok(SearchOutcome {
            best: best.arch,
            best_reward: best.reward,
            state: self.state,
        })
    }
}

fn best_of(candidates: &[(CandidateArch, f64)]) -> Option<(&CandidateArch, f64)> {
    candidates
        .iter()
        .fold(None, |best: Option<(&CandidateArch, f64)>, (a, r)| match best {
            Some((_, b)) if b >= *r => best,
            _ => Some((a, *r)),
        })
}

/// REINFORCE search over one hop count.
pub fn basic_search<O: RewardOracle + ?Sized>(
    space: &SearchSpace,
    k: usize,
    oracle: &O,
    budget: usize,
    config: SearchConfig,
) -> Result<SearchOutcome> {
    Searcher::new(space, oracle, config)?.basic(k, budget)
}

/// Conditionally progressive search from `k_start` up to `k_max` hops.
pub fn progressive_search<O: RewardOracle + ?Sized>(
    space: &SearchSpace,
    oracle: &O,
    progressive: &ProgressiveConfig,
    config: SearchConfig,
) -> Result<SearchOutcome> {
    Searcher::new(space, oracle, config)?.progressive(progressive)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted(target: Vec<usize>) -> impl Fn(&CandidateArch, u64) -> Result<f64> + Sync {
        move |a: &CandidateArch, _| Ok(f64::from(u8::from(a.dims == target)))
    }

    fn small_controller() -> SearchConfig {
        SearchConfig {
            controller: ControllerConfig { hidden: 16, embedding: 16, learning_rate: 0.02, ..Default::default() },
            sequential: true,
            ..Default::default()
        }
    }

    #[test]
    fn budget_of_one_returns_the_single_candidate() {
        let space = SearchSpace::new(2, 4).unwrap();
        let out = basic_search(&space, 2, &planted(vec![4, 4]), 1, SearchConfig::default()).unwrap();
        assert_eq!(out.state.reward_log.len(), 1);
        assert_eq!(out.best, out.state.reward_log[0].arch);
    }

    #[test]
    fn exhaustive_fallback_finds_the_optimum() {
        let space = SearchSpace::new(2, 4).unwrap();
        let oracle = |a: &CandidateArch, _| Ok(a.dims.iter().sum::<usize>() as f64 / 12.0);
        let cfg = SearchConfig { exhaustive_fallback: true, ..Default::default() };
        let out = basic_search(&space, 2, &oracle, 9, cfg).unwrap();
        assert_eq!(out.best.dims, vec![4, 4]);
        assert_eq!(out.state.trained, 9);
    }

    #[test]
    fn planted_target_is_found_by_sampling() {
        let space = SearchSpace::new(1, 3).unwrap();
        let out = basic_search(&space, 3, &planted(vec![3, 1, 2]), 200, small_controller()).unwrap();
        assert_eq!(out.best.dims, vec![3, 1, 2]);
        assert_eq!(out.best_reward, 1.0);
    }

    #[test]
    fn no_candidate_is_trained_twice() {
        let space = SearchSpace::new(1, 2).unwrap();
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let oracle = |_: &CandidateArch, _| {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(0.5)
        };
        let out = basic_search(&space, 2, &oracle, 100, small_controller()).unwrap();
        assert_eq!(calls.into_inner(), out.state.reward_log.len());
        assert!(out.state.reward_log.len() <= 4);
    }

    #[test]
    fn failures_score_zero() {
        let space = SearchSpace::new(1, 2).unwrap();
        let oracle = |a: &CandidateArch, _| {
            if a.dims[0] == 1 {
                Err(Error::Numeric("diverged".into()))
            } else {
                Ok(0.3)
            }
        };
        let cfg = SearchConfig { exhaustive_fallback: true, ..Default::default() };
        let out = basic_search(&space, 1, &oracle, 10, cfg).unwrap();
        let failed = &out.state.reward_log[0];
        assert!(failed.failed && failed.reward == 0.0);
        assert_eq!(out.best.dims, vec![2]);
    }

    #[test]
    fn strict_threshold_falls_back_to_top_share() {
        let space = SearchSpace::new(1, 3).unwrap();
        let oracle = |a: &CandidateArch, _| Ok(a.dims.iter().sum::<usize>() as f64 / 100.0);
        let cfg = ProgressiveConfig { k_start: 2, k_max: 3, thresholds: vec![1.0], budget_per_phase: 100 };
        let out = progressive_search(&space, &oracle, &cfg, SearchConfig::default()).unwrap();
        let first = &out.state.phases[0];
        assert!(first.relaxed);
        assert_eq!(first.kept, vec![CandidateArch::new(vec![3, 3])]);
        assert_eq!(out.state.phases.len(), 2);
        assert_eq!(out.best.dims, vec![3, 3, 3]);
    }

    #[test]
    fn stops_when_a_phase_does_not_improve() {
        let space = SearchSpace::new(1, 2).unwrap();
        // Longer candidates never beat two-hop ones.
        let oracle = |a: &CandidateArch, _| Ok(if a.k() == 2 { 0.9 } else { 0.5 });
        let cfg = ProgressiveConfig { k_start: 2, k_max: 5, thresholds: vec![0.8], budget_per_phase: 50 };
        let out = progressive_search(&space, &oracle, &cfg, SearchConfig::default()).unwrap();
        assert_eq!(out.state.phases.len(), 2);
        assert_eq!(out.best.k(), 2);
    }

    #[test]
    fn histogram_shares_sum_to_one() {
        let space = SearchSpace::new(1, 3).unwrap();
        let oracle = |a: &CandidateArch, _| Ok(a.dims[0] as f64 / 3.0);
        let cfg = ProgressiveConfig { k_start: 1, k_max: 2, thresholds: vec![0.5], budget_per_phase: 50 };
        let out = progressive_search(&space, &oracle, &cfg, SearchConfig::default()).unwrap();
        for hop in out.state.kept_histogram() {
            assert!((hop.values().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
