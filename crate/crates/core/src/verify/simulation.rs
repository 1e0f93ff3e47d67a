//! Seeded Monte Carlo simulation of finite-memory strategies and phase
//! schedules.
//!
//! Strategies are compiled into a floating-point Markov chain over play
//! locations. Runs of self-loops are skipped in one geometric draw, so a
//! strategy that lingers in a location costs one step per sojourn rather
//! than per time step. The running average is recovered from integer visit
//! counts at each checkpoint.

use crate::model::{to_f64, ActionId, Mdp, RewardModel, StateId};
use crate::satisfaction::PhaseSchedule;
use crate::strategy::{product_chain, MemorylessStrategy, StochasticUpdateStrategy};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Walker's alias table over `0..n`.
#[derive(Debug, Clone)]
pub(crate) struct AliasTable {
    threshold: Vec<u32>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub(crate) fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut threshold = vec![u32::MAX; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            threshold[s] = (scaled[s] * 4_294_967_296.0).min(u32::MAX as f64) as u32;
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        AliasTable { threshold, alias }
    }

    #[inline]
    pub(crate) fn sample(&self, bits: u64) -> usize {
        let n = self.threshold.len() as u64;
        let column = (((bits >> 32) * n) >> 32) as usize;
        if (bits as u32) < self.threshold[column] {
            column
        } else {
            self.alias[column] as usize
        }
    }
}

/// Floating-point transition structure over locations.
#[derive(Debug, Clone)]
pub(crate) struct CompiledChain {
    /// Probability of staying in the same location.
    stay: Vec<f64>,
    ln_stay: Vec<f64>,
    /// Successor distribution conditioned on leaving.
    leave: Vec<(AliasTable, Vec<u32>)>,
    /// Full successor distribution, used where self-loops are too rare to skip.
    full: Vec<Option<(AliasTable, Vec<u32>)>>,
    initial: (AliasTable, Vec<u32>),
}

fn table(entries: &[(usize, f64)]) -> (AliasTable, Vec<u32>) {
    let weights: Vec<f64> = entries.iter().map(|(_, w)| *w).collect();
    let targets = entries.iter().map(|(t, _)| *t as u32).collect();
    (AliasTable::new(&weights), targets)
}

impl CompiledChain {
    fn new(transitions: &[Vec<(usize, f64)>], initial: &[(usize, f64)]) -> Self {
        let mut stay = Vec::with_capacity(transitions.len());
        let mut leave = Vec::with_capacity(transitions.len());
        let mut full = Vec::with_capacity(transitions.len());
        for (l, row) in transitions.iter().enumerate() {
            let own: f64 = row.iter().filter(|(t, _)| *t == l).map(|(_, p)| p).sum();
            let others: Vec<(usize, f64)> = row.iter().filter(|(t, p)| *t != l && *p > 0.0).copied().collect();
            let p = if others.is_empty() { 1.0 } else { own };
            stay.push(p);
            leave.push(table(&others));
            // A geometric draw costs a logarithm; below 1/2 one alias draw is cheaper.
            full.push((p < 0.5).then(|| {
                let entries: Vec<(usize, f64)> = row.iter().filter(|(_, p)| *p > 0.0).copied().collect();
                table(&entries)
            }));
        }
        let ln_stay = stay.iter().map(|p| p.ln()).collect();
        CompiledChain {
            stay,
            ln_stay,
            leave,
            full,
            initial: table(initial),
        }
    }

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> usize {
        self.initial.1[self.initial.0.sample(rng.next_u64())] as usize
    }

    fn sample_leave(&self, l: usize, rng: &mut ChaCha8Rng) -> usize {
        let (alias, targets) = &self.leave[l];
        targets[alias.sample(rng.next_u64())] as usize
    }

    fn sample_full(&self, l: usize, rng: &mut ChaCha8Rng) -> Option<usize> {
        let (alias, targets) = self.full[l].as_ref()?;
        Some(targets[alias.sample(rng.next_u64())] as usize)
    }

    /// Number of further self-loops before leaving, or `None` if at least `room`.
    #[inline]
    fn stays(&self, l: usize, room: u64, rng: &mut ChaCha8Rng) -> Option<u64> {
        let p = self.stay[l];
        if p <= 0.0 {
            return Some(0);
        }
        if p >= 1.0 {
            return None;
        }
        let u = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let k = (u.ln() / self.ln_stay[l]).floor();
        if k >= room as f64 {
            None
        } else {
            Some(k as u64)
        }
    }
}

/// A compiled strategy: one chain per regime, switching at fixed step counts.
pub(crate) struct Program {
    chains: Vec<CompiledChain>,
    /// `switch_at[i]`: step count after which regime `i + 1` chooses actions.
    switch_at: Vec<u64>,
    /// Reward vector of every location.
    rewards: Vec<Vec<f64>>,
    /// Action played at every location.
    pub(crate) actions: Vec<ActionId>,
}

pub(crate) trait Observer {
    /// Location `l` occupies steps `first .. first + count`.
    fn visit(&mut self, _l: usize, _first: u64, _count: u64) {}
    fn stop(&mut self, _n: u64, _counts: &[u64]) {}
}

impl Program {
    pub(crate) fn num_locations(&self) -> usize {
        self.rewards.len()
    }

    fn finite_memory(mdp: &Mdp, rewards: &RewardModel, strategy: &StochasticUpdateStrategy, s0: StateId) -> Self {
        let play = product_chain(mdp, strategy, s0);
        let transitions: Vec<Vec<(usize, f64)>> = play
            .chain
            .transitions
            .iter()
            .map(|row| row.iter().map(|(t, p)| (*t, to_f64(p))).collect())
            .collect();
        let initial: Vec<(usize, f64)> = play.chain.initial.iter().map(|(l, p)| (*l, to_f64(p))).collect();
        let actions: Vec<ActionId> = play.labels.iter().map(|l| l.action).collect();
        Program {
            chains: vec![CompiledChain::new(&transitions, &initial)],
            switch_at: Vec::new(),
            rewards: actions.iter().map(|&a| reward_vector(rewards, a)).collect(),
            actions,
        }
    }

    /// Memoryless strategies compiled over locations = actions.
    pub(crate) fn memoryless(
        mdp: &Mdp,
        rewards: &RewardModel,
        regimes: &[&MemorylessStrategy],
        switch_at: Vec<u64>,
        s0: StateId,
    ) -> Self {
        let chains = regimes
            .iter()
            .map(|xi| {
                let transitions: Vec<Vec<(usize, f64)>> = (0..mdp.num_actions())
                    .map(|a| {
                        let mut row = Vec::new();
                        for (t, p) in mdp.successors(a) {
                            let p = to_f64(p);
                            for (b, q) in &xi.choices[*t] {
                                row.push((*b, p * to_f64(q)));
                            }
                        }
                        row
                    })
                    .collect();
                let initial: Vec<(usize, f64)> = xi.choices[s0].iter().map(|(a, p)| (*a, to_f64(p))).collect();
                CompiledChain::new(&transitions, &initial)
            })
            .collect();
        Program {
            chains,
            switch_at,
            rewards: (0..mdp.num_actions()).map(|a| reward_vector(rewards, a)).collect(),
            actions: (0..mdp.num_actions()).collect(),
        }
    }

    /// Simulates one run up to `horizon`, reporting to `observer`; `stops`
    /// must be sorted and lie in `1..=horizon`.
    pub(crate) fn walk<O: Observer>(&self, rng: &mut ChaCha8Rng, horizon: u64, stops: &[u64], observer: &mut O) {
        let mut counts = vec![0u64; self.num_locations()];
        let mut regime = 0;
        let mut l = self.chains[0].sample_initial(rng);
        let mut n = 1u64;
        counts[l] += 1;
        observer.visit(l, 1, 1);
        let mut next_stop = 0;
        loop {
            while next_stop < stops.len() && stops[next_stop] <= n {
                observer.stop(n, &counts);
                next_stop += 1;
            }
            if n >= horizon {
                break;
            }
            while regime < self.switch_at.len() && n >= self.switch_at[regime] {
                regime += 1;
            }
            let mut limit = horizon;
            if let Some(&s) = stops.get(next_stop) {
                limit = limit.min(s);
            }
            if let Some(&b) = self.switch_at.get(regime) {
                limit = limit.min(b);
            }
            let chain = &self.chains[regime];
            if let Some(next) = chain.sample_full(l, rng) {
                l = next;
                n += 1;
                counts[l] += 1;
                observer.visit(l, n, 1);
                continue;
            }
            let room = limit - n;
            match chain.stays(l, room, rng) {
                None => {
                    counts[l] += room;
                    observer.visit(l, n + 1, room);
                    n = limit;
                    continue;
                }
                Some(0) => {}
                Some(k) => {
                    counts[l] += k;
                    observer.visit(l, n + 1, k);
                    n += k;
                }
            }
            l = chain.sample_leave(l, rng);
            n += 1;
            counts[l] += 1;
            observer.visit(l, n, 1);
        }
    }

    pub(crate) fn average(&self, counts: &[u64], n: u64) -> Vec<f64> {
        let k = self.rewards.first().map_or(0, Vec::len);
        (0..k)
            .map(|i| {
                // Kahan summation over locations.
                let (mut sum, mut carry) = (0.0f64, 0.0f64);
                for (l, &c) in counts.iter().enumerate() {
                    if c == 0 {
                        continue;
                    }
                    let term = c as f64 * self.rewards[l][i] - carry;
                    let next = sum + term;
                    carry = (next - sum) - term;
                    sum = next;
                }
                sum / n as f64
            })
            .collect()
    }
}

fn reward_vector(rewards: &RewardModel, a: ActionId) -> Vec<f64> {
    rewards.vector(a).iter().map(to_f64).collect()
}

/// Per-run generator: one ChaCha stream per run index.
pub(crate) fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// Strategies the simulator accepts.
#[derive(Debug, Clone, Copy)]
pub enum SimulatedStrategy<'a> {
    FiniteMemory(&'a StochasticUpdateStrategy),
    Phases(&'a PhaseSchedule),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationConfig {
    pub horizon: u64,
    pub runs: usize,
    pub seed: u64,
    /// Steps at which prefix averages are recorded; the horizon is always added.
    pub checkpoints: Vec<u64>,
}

impl SimulationConfig {
    pub fn new(horizon: u64, runs: usize, seed: u64) -> Self {
        SimulationConfig {
            horizon,
            runs,
            seed,
            checkpoints: Vec::new(),
        }
    }

    fn stops(&self) -> Vec<u64> {
        let mut stops: Vec<u64> = self
            .checkpoints
            .iter()
            .copied()
            .filter(|&c| c >= 1 && c <= self.horizon)
            .chain(std::iter::once(self.horizon))
            .collect();
        stops.sort_unstable();
        stops.dedup();
        stops
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationStats {
    pub checkpoints: Vec<u64>,
    /// `averages[run][checkpoint][dimension]`: prefix average rewards.
    pub averages: Vec<Vec<Vec<f64>>>,
}

impl SimulationStats {
    /// Mean over runs of the prefix average at the last checkpoint.
    pub fn empirical_mean(&self) -> Vec<f64> {
        let runs = self.averages.len();
        let k = self.averages.first().and_then(|r| r.last()).map_or(0, Vec::len);
        let mut mean = vec![0.0; k];
        for run in &self.averages {
            let last = run.last().expect("at least one checkpoint");
            for (m, x) in mean.iter_mut().zip(last) {
                *m += x;
            }
        }
        mean.iter().map(|m| m / runs as f64).collect()
    }

    /// Fraction of runs whose final prefix average dominates `v`.
    pub fn threshold_frequency(&self, v: &[f64]) -> f64 {
        let hits = self
            .averages
            .iter()
            .filter(|run| {
                run.last()
                    .expect("at least one checkpoint")
                    .iter()
                    .zip(v)
                    .all(|(x, t)| x >= t)
            })
            .count();
        hits as f64 / self.averages.len() as f64
    }

    /// Rows `run,step,<dimension averages>`.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = format!("run,step,{}\n", names.join(","));
        for (run, rows) in self.averages.iter().enumerate() {
            for (step, values) in self.checkpoints.iter().zip(rows) {
                let cells: Vec<String> = values.iter().map(|x| format!("{x:.9}")).collect();
                out.push_str(&format!("{run},{step},{}\n", cells.join(",")));
            }
        }
        out
    }
}

struct Recorder<'a> {
    program: &'a Program,
    rows: Vec<Vec<f64>>,
}

impl Observer for Recorder<'_> {
    fn stop(&mut self, n: u64, counts: &[u64]) {
        self.rows.push(self.program.average(counts, n));
    }
}

/// Simulates `runs` independent runs from `s0`; deterministic for a fixed seed.
pub fn simulate(
    mdp: &Mdp,
    rewards: &RewardModel,
    strategy: SimulatedStrategy<'_>,
    s0: StateId,
    config: &SimulationConfig,
) -> SimulationStats {
    let program = match strategy {
        SimulatedStrategy::FiniteMemory(sigma) => Program::finite_memory(mdp, rewards, sigma, s0),
        SimulatedStrategy::Phases(schedule) => schedule.program(mdp, rewards, s0),
    };
    let stops = config.stops();
    let averages = (0..config.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = run_rng(config.seed, run as u64);
            let mut recorder = Recorder {
                program: &program,
                rows: Vec::with_capacity(stops.len()),
            };
            program.walk(&mut rng, config.horizon, &stops, &mut recorder);
            recorder.rows
        })
        .collect();
    SimulationStats {
        checkpoints: stops,
        averages,
    }
}

/// Tracks the last step at which some action frequency fell below its band.
pub(crate) struct BandTracker<'a> {
    lower: &'a [f64],
    actions: &'a [ActionId],
    counts: Vec<u64>,
    pub(crate) last_exit: u64,
}

impl<'a> BandTracker<'a> {
    pub(crate) fn new(lower: &'a [f64], actions: &'a [ActionId]) -> Self {
        BandTracker {
            lower,
            actions,
            counts: vec![0; lower.len()],
            last_exit: 0,
        }
    }

    fn below(&self, a: usize, count: u64, n: u64) -> bool {
        (count as f64) < self.lower[a] * n as f64
    }
}

impl Observer for BandTracker<'_> {
    fn visit(&mut self, l: usize, first: u64, count: u64) {
        let a = self.actions[l];
        let before = self.counts[a];
        self.counts[a] += count;
        let end = first + count - 1;
        if (0..self.counts.len()).any(|b| self.below(b, self.counts[b], end)) {
            self.last_exit = end;
            return;
        }
        // Inside the run of `a` only its own frequency rises; all others fall
        // and are fine at the end, hence throughout.
        if count > 1 && self.below(a, before + 1, first) {
            let (mut lo, mut hi) = (0u64, count - 1);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if self.below(a, before + mid + 1, first + mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            self.last_exit = self.last_exit.max(first + lo);
        }
    }
}
