//! Randomized hill climbing over codebooks with restarts.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, Provenance};
use crate::error::{Error, Result};
use crate::optics::LedModel;
use crate::registry::Registry;
use crate::rng_stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub n: usize,
    pub m: usize,
    pub d: f64,
    /// Registered constraint kind: `strict`, `relaxed` or `nonlinear`.
    #[serde(default = "default_kind")]
    pub kind: String,
    /// Stop a restart once this minimum distance is reached.
    #[serde(default)]
    pub target_min_distance: Option<usize>,
    #[serde(default = "default_iterations")]
    pub max_iterations: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    /// LED used by the `nonlinear` kind.
    #[serde(default)]
    pub led: LedModel,
    /// Allowed |average power - d| for the `nonlinear` kind.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_kind() -> String {
    "strict".into()
}
fn default_iterations() -> u64 {
    200_000
}
fn default_restarts() -> usize {
    20
}
fn default_tolerance() -> f64 {
    0.05
}

impl SearchConfig {
    pub fn new(n: usize, m: usize, d: f64, kind: &str) -> Self {
        Self {
            n,
            m,
            d,
            kind: kind.into(),
            target_min_distance: None,
            max_iterations: default_iterations(),
            restarts: default_restarts(),
            seed: 0,
            led: LedModel::Linear,
            tolerance: default_tolerance(),
        }
    }

    fn check_common(&self) -> Result<()> {
        if self.n == 0 || self.n > 64 {
            return Err(Error::domain(format!("search supports 1 <= N <= 64, got {}", self.n)));
        }
        if self.m < 2 {
            return Err(Error::domain("search needs M >= 2"));
        }
        if self.restarts == 0 {
            return Err(Error::domain("search needs at least one restart"));
        }
        if !self.d.is_finite() {
            return Err(Error::domain("dimming target must be finite"));
        }
        Ok(())
    }
}

/// A constraint kind: how codebooks start, how they move, and how far they
/// are from feasibility.
pub trait SearchStrategy: Send + Sync + Debug {
    fn name(&self) -> &'static str;
    fn check(&self, config: &SearchConfig) -> Result<()>;
    fn initial(&self, config: &SearchConfig, rng: &mut dyn RngCore) -> Vec<u64>;
    /// Mutates `words` into a neighbouring codebook.
    fn propose(&self, config: &SearchConfig, words: &mut [u64], rng: &mut dyn RngCore);
    /// Zero iff the codebook satisfies the constraint.
    fn violation(&self, config: &SearchConfig, words: &[u64]) -> f64;
}

fn random_word(n: usize, weight: usize, rng: &mut dyn RngCore) -> u64 {
    sample(rng, n, weight).iter().fold(0u64, |w, i| w | (1 << i))
}

fn ones(word: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| word >> i & 1 == 1).collect()
}

fn zeros(word: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| word >> i & 1 == 0).collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Every codeword has weight exactly `d`.
#[derive(Clone, Copy, Debug, Default)]
pub struct StrictSearch;

impl SearchStrategy for StrictSearch {
    fn name(&self) -> &'static str {
        "strict"
    }

    fn check(&self, c: &SearchConfig) -> Result<()> {
        c.check_common()?;
        if c.d.fract() != 0.0 || c.d < 0.0 || c.d > c.n as f64 {
            return Err(Error::domain(format!("strict constraint needs an integer 0 <= d <= N, got {}", c.d)));
        }
        if binomial(c.n, c.d as usize) < c.m as f64 {
            return Err(Error::domain(format!(
                "only C({}, {}) words of weight {} exist, fewer than M = {}",
                c.n, c.d, c.d, c.m
            )));
        }
        Ok(())
    }

    fn initial(&self, c: &SearchConfig, rng: &mut dyn RngCore) -> Vec<u64> {
        (0..c.m).map(|_| random_word(c.n, c.d as usize, rng)).collect()
    }

    fn propose(&self, c: &SearchConfig, words: &mut [u64], rng: &mut dyn RngCore) {
        let b = rng.random_range(0..words.len());
        let w = c.d as usize;
        if rng.random::<bool>() && w > 0 && w < c.n {
            let on = ones(words[b], c.n);
            let off = zeros(words[b], c.n);
            let i = on[rng.random_range(0..on.len())];
            let j = off[rng.random_range(0..off.len())];
            words[b] ^= (1 << i) | (1 << j);
        } else {
            words[b] = random_word(c.n, w, rng);
        }
    }

    fn violation(&self, c: &SearchConfig, words: &[u64]) -> f64 {
        words.iter().filter(|w| w.count_ones() as f64 != c.d).count() as f64
    }
}

/// Average weight over the codebook equals `d` (to within `1/(2M)`).
#[derive(Clone, Copy, Debug, Default)]
pub struct RelaxedSearch;

impl RelaxedSearch {
    fn total_ones(c: &SearchConfig) -> usize {
        (c.d * c.m as f64).round() as usize
    }
}

impl SearchStrategy for RelaxedSearch {
    fn name(&self) -> &'static str {
        "relaxed"
    }

    fn check(&self, c: &SearchConfig) -> Result<()> {
        c.check_common()?;
        if !(c.d >= 0.0 && c.d <= c.n as f64) {
            return Err(Error::domain(format!("relaxed constraint needs 0 <= d <= N, got {}", c.d)));
        }
        Ok(())
    }

    fn initial(&self, c: &SearchConfig, rng: &mut dyn RngCore) -> Vec<u64> {
        let mut words = vec![0u64; c.m];
        for pos in sample(rng, c.m * c.n, Self::total_ones(c)).iter() {
            words[pos / c.n] |= 1 << (pos % c.n);
        }
        words
    }

    fn propose(&self, c: &SearchConfig, words: &mut [u64], rng: &mut dyn RngCore) {
        let total: usize = words.iter().map(|w| w.count_ones() as usize).sum();
        if rng.random::<bool>() && total > 0 && total < c.m * c.n {
            // move one "on" slot: 1 -> 0 in one word, 0 -> 1 in another
            let from: Vec<usize> = (0..words.len()).filter(|&b| words[b] != 0).collect();
            let full = if c.n == 64 { u64::MAX } else { (1u64 << c.n) - 1 };
            let to: Vec<usize> = (0..words.len()).filter(|&b| words[b] != full).collect();
            let a = from[rng.random_range(0..from.len())];
            let on = ones(words[a], c.n);
            let i = on[rng.random_range(0..on.len())];
            words[a] ^= 1 << i;
            let b = to[rng.random_range(0..to.len())];
            let off = zeros(words[b], c.n);
            let j = off[rng.random_range(0..off.len())];
            words[b] ^= 1 << j;
        } else {
            let b = rng.random_range(0..words.len());
            words[b] = random_word(c.n, words[b].count_ones() as usize, rng);
        }
    }

    fn violation(&self, c: &SearchConfig, words: &[u64]) -> f64 {
        let total: u32 = words.iter().map(|w| w.count_ones()).sum();
        let avg = f64::from(total) / c.m as f64;
        ((avg - c.d).abs() - 0.5 / c.m as f64).max(0.0)
    }
}

/// Average optical power through the LED model within `tolerance` of `d`.
#[derive(Clone, Copy, Debug, Default)]
pub struct NonlinearSearch;

impl NonlinearSearch {
    fn average_power(c: &SearchConfig, words: &[u64]) -> f64 {
        words
            .iter()
            .map(|&w| {
                let z: Vec<f64> = (0..c.n).map(|i| (w >> i & 1) as f64).collect();
                c.led.total_power(&z)
            })
            .sum::<f64>()
            / words.len() as f64
    }
}

impl SearchStrategy for NonlinearSearch {
    fn name(&self) -> &'static str {
        "nonlinear"
    }

    fn check(&self, c: &SearchConfig) -> Result<()> {
        c.check_common()?;
        let max = c.led.total_power(&vec![1.0; c.n]);
        if !(c.d > 0.0 && c.d < max) {
            return Err(Error::domain(format!("nonlinear target {} outside (0, {max})", c.d)));
        }
        if !(c.tolerance > 0.0) {
            return Err(Error::domain("nonlinear search needs a positive tolerance"));
        }
        Ok(())
    }

    fn initial(&self, c: &SearchConfig, rng: &mut dyn RngCore) -> Vec<u64> {
        let p = (c.d / (c.n as f64 * c.led.on_power())).clamp(0.0, 1.0);
        (0..c.m)
            .map(|_| (0..c.n).fold(0u64, |w, i| if rng.random::<f64>() < p { w | 1 << i } else { w }))
            .collect()
    }

    fn propose(&self, c: &SearchConfig, words: &mut [u64], rng: &mut dyn RngCore) {
        match rng.random_range(0..3) {
            0 => {
                let b = rng.random_range(0..words.len());
                words[b] ^= 1 << rng.random_range(0..c.n);
            }
            1 => RelaxedSearch.propose(c, words, rng),
            _ => {
                let b = rng.random_range(0..words.len());
                words[b] = random_word(c.n, words[b].count_ones() as usize, rng);
            }
        }
    }

    fn violation(&self, c: &SearchConfig, words: &[u64]) -> f64 {
        ((Self::average_power(c, words) - c.d).abs() - c.tolerance).max(0.0)
    }
}

pub fn search_strategies() -> Registry<Arc<dyn SearchStrategy>> {
    let mut r: Registry<Arc<dyn SearchStrategy>> = Registry::new("search constraint");
    r.register("strict", Arc::new(StrictSearch));
    r.register("relaxed", Arc::new(RelaxedSearch));
    r.register("nonlinear", Arc::new(NonlinearSearch));
    r
}

pub fn strategy(name: &str) -> Result<Arc<dyn SearchStrategy>> {
    search_strategies().get(name).cloned()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTraceRow {
    pub restart: usize,
    pub iteration: u64,
    pub min_distance: usize,
    pub pairs_at_min: usize,
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub iterations: u64,
    pub min_distance: usize,
    pub second_distance: usize,
    pub pairs_at_min: usize,
    pub violation: f64,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub codebook: Codebook,
    pub min_distance: usize,
    pub feasible: bool,
    pub restarts: Vec<RestartSummary>,
    pub trace: Vec<SearchTraceRow>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Score {
    min: usize,
    pairs_at_min: usize,
    second: usize,
}

fn score(words: &[u64], n: usize) -> Score {
    let mut spectrum = BTreeMap::new();
    for i in 0..words.len() {
        for j in (i + 1)..words.len() {
            *spectrum.entry((words[i] ^ words[j]).count_ones() as usize).or_insert(0usize) += 1;
        }
    }
    let mut it = spectrum.iter();
    let (&min, &pairs_at_min) = it.next().unwrap_or((&n, &0));
    let second = it.next().map(|(&d, _)| d).unwrap_or(n + 1);
    Score {
        min,
        pairs_at_min,
        second,
    }
}

/// `(min distance, -pairs at min)`: larger is better.
fn key(s: &Score) -> (usize, std::cmp::Reverse<usize>) {
    (s.min, std::cmp::Reverse(s.pairs_at_min))
}

struct RestartOutcome {
    words: Vec<u64>,
    summary: RestartSummary,
    trace: Vec<SearchTraceRow>,
}

fn climb(strategy: &dyn SearchStrategy, c: &SearchConfig, restart: usize, steps: u64) -> RestartOutcome {
    let mut rng = rng_stream(c.seed, restart as u64);
    let mut words = strategy.initial(c, &mut rng);
    let mut violation = strategy.violation(c, &words);
    let mut current = score(&words, c.n);
    let mut trace = vec![SearchTraceRow {
        restart,
        iteration: 0,
        min_distance: current.min,
        pairs_at_min: current.pairs_at_min,
        violation,
    }];
    let target = c.target_min_distance.unwrap_or(usize::MAX);
    let mut used = 0;
    let mut candidate = words.clone();
    for it in 1..=steps {
        if violation == 0.0 && current.min >= target {
            break;
        }
        used = it;
        candidate.copy_from_slice(&words);
        strategy.propose(c, &mut candidate, &mut rng);
        let v = strategy.violation(c, &candidate);
        let s = score(&candidate, c.n);
        let accept = if violation > 0.0 {
            v < violation || (v == violation && key(&s) >= key(&current))
        } else {
            v == 0.0 && key(&s) >= key(&current)
        };
        if accept {
            let improved = v < violation || key(&s) > key(&current);
            std::mem::swap(&mut words, &mut candidate);
            violation = v;
            current = s;
            if improved {
                trace.push(SearchTraceRow {
                    restart,
                    iteration: it,
                    min_distance: current.min,
                    pairs_at_min: current.pairs_at_min,
                    violation,
                });
            }
        }
    }
    RestartOutcome {
        summary: RestartSummary {
            restart,
            iterations: used,
            min_distance: current.min,
            second_distance: current.second,
            pairs_at_min: current.pairs_at_min,
            violation,
        },
        words,
        trace,
    }
}

/// Hill climbing with `restarts` independent restarts of
/// `max_iterations / restarts` proposals each. The best restart is the
/// feasible one with the largest minimum distance, then the largest second
/// distance, then the fewest pairs at the minimum; ties go to the lower
/// restart index.
pub fn search_codebook(config: &SearchConfig) -> Result<SearchResult> {
    let strategy = strategy(&config.kind)?;
    strategy.check(config)?;
    let steps = (config.max_iterations / config.restarts as u64).max(1);
    let outcomes: Vec<RestartOutcome> = (0..config.restarts)
        .into_par_iter()
        .map(|r| climb(strategy.as_ref(), config, r, steps))
        .collect();
    let rank = |o: &RestartOutcome| {
        let s = &o.summary;
        (
            std::cmp::Reverse(s.violation > 0.0),
            s.min_distance,
            s.second_distance,
            std::cmp::Reverse(s.pairs_at_min),
        )
    };
    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if rank(o) > rank(&outcomes[best]) {
            best = i;
        }
    }
    let chosen = &outcomes[best];
    let words = chosen
        .words
        .iter()
        .map(|&w| (0..config.n).map(|i| (w >> i & 1) as u8).collect())
        .collect();
    let codebook = Codebook::new(config.n, config.d, words, Provenance::Searched)?;
    Ok(SearchResult {
        min_distance: chosen.summary.min_distance,
        feasible: chosen.summary.violation == 0.0,
        codebook,
        restarts: outcomes.iter().map(|o| o.summary.clone()).collect(),
        trace: outcomes.into_iter().flat_map(|o| o.trace).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, m: usize, d: f64, kind: &str, iters: u64) -> SearchConfig {
        SearchConfig {
            max_iterations: iters,
            seed: 3,
            ..SearchConfig::new(n, m, d, kind)
        }
    }

    /// Largest minimum distance over all M-subsets of weight-w words.
    fn brute_force_strict(n: usize, m: usize, w: usize) -> usize {
        let pool: Vec<u64> = (0u64..1 << n).filter(|x| x.count_ones() as usize == w).collect();
        fn rec(pool: &[u64], start: usize, chosen: &mut Vec<u64>, m: usize, best: &mut usize) {
            if chosen.len() == m {
                let mut dmin = usize::MAX;
                for i in 0..m {
                    for j in (i + 1)..m {
                        dmin = dmin.min((chosen[i] ^ chosen[j]).count_ones() as usize);
                    }
                }
                *best = (*best).max(dmin);
                return;
            }
            for k in start..pool.len() {
                chosen.push(pool[k]);
                rec(pool, k + 1, chosen, m, best);
                chosen.pop();
            }
        }
        let mut best = 0;
        rec(&pool, 0, &mut Vec::new(), m, &mut best);
        best
    }

    #[test]
    fn strict_small_cases_reach_brute_force_optimum() {
        for n in 3..=6 {
            for m in 2..=4 {
                for w in 1..n {
                    if binomial(n, w) < m as f64 {
                        continue;
                    }
                    let best = brute_force_strict(n, m, w);
                    let r = search_codebook(&cfg(n, m, w as f64, "strict", 20_000)).unwrap();
                    assert_eq!(r.min_distance, best, "N={n} M={m} w={w}");
                    assert!(r.codebook.codewords.iter().all(|c| c.weight() == w));
                }
            }
        }
    }

    #[test]
    fn strict_reference_cases() {
        let r = search_codebook(&cfg(4, 2, 2.0, "strict", 2_000)).unwrap();
        assert_eq!(r.min_distance, 4);
        let r = search_codebook(&cfg(8, 4, 4.0, "strict", 40_000)).unwrap();
        assert_eq!(r.min_distance, 4);
        let r = search_codebook(&cfg(8, 16, 2.0, "strict", 200_000)).unwrap();
        assert_eq!(r.min_distance, 2);
        assert!(r.codebook.codewords.iter().all(|c| c.weight() == 2));
    }

    #[test]
    fn strict_rejects_fractional_targets() {
        assert!(matches!(search_codebook(&cfg(8, 4, 2.5, "strict", 10)), Err(Error::Domain(_))));
        assert!(search_codebook(&cfg(4, 8, 1.0, "strict", 10)).is_err());
    }

    #[test]
    fn relaxed_search_keeps_average_weight() {
        for d in [2.0, 2.5, 3.5] {
            let r = search_codebook(&cfg(8, 8, d, "relaxed", 40_000)).unwrap();
            assert!(r.feasible);
            assert!((r.codebook.average_weight() - d).abs() <= 1.0 / 16.0 + 1e-12);
            assert!(r.min_distance >= 2, "d={d}: {}", r.min_distance);
        }
    }

    #[test]
    fn nonlinear_search_meets_power_target() {
        let c = SearchConfig {
            led: LedModel::kingbright(),
            tolerance: 0.5,
            ..cfg(8, 8, 40.0, "nonlinear", 40_000)
        };
        let r = search_codebook(&c).unwrap();
        assert!(r.feasible);
        assert!((r.codebook.average_power(&c.led) - 40.0).abs() <= 0.5);
    }

    #[test]
    fn search_is_reproducible_and_thread_independent() {
        let c = cfg(8, 8, 3.0, "strict", 20_000);
        let a = search_codebook(&c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| search_codebook(&c).unwrap());
        assert_eq!(a.codebook, b.codebook);
        assert_eq!(a.restarts, b.restarts);
    }

    #[test]
    fn target_distance_stops_early() {
        let c = SearchConfig {
            target_min_distance: Some(2),
            ..cfg(8, 4, 4.0, "strict", 100_000)
        };
        let r = search_codebook(&c).unwrap();
        assert!(r.min_distance >= 2);
        assert!(r.restarts.iter().all(|s| s.iterations < 5_000));
    }
}
