//! Global envelope tests ordered by extreme rank length (ERL).
//!
//! For curves `T_0` (data) and `T_1..T_s` on a common grid, each curve gets
//! a pointwise two-sided rank `min(1 + #{below}, 1 + #{above})`. A curve's
//! ranks sorted ascending form its rank vector; a lexicographically smaller
//! vector is more extreme. The measure of curve `i` is
//! `e_i = (1 + #{curves strictly more extreme}) / (s + 1)`, so ties share the
//! most extreme position, and the p-value is `#{i : e_i <= e_0} / (s + 1)`.
//!
//! The envelope at level `alpha` is the pointwise range of the curves with
//! `e_i > c`, where `c` is the largest observed measure with
//! `#{e_i <= c} <= floor(alpha (s + 1))`. The data curve takes part in both
//! the ranking and the envelope, which makes `p <= alpha` equivalent to the
//! data leaving the envelope somewhere.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::AbcPosterior;
use crate::error::{Error, Result};
use crate::geometry::PointPattern;
use crate::samplers::Simulator;
use crate::seeding::{stream, task_rng};
use crate::summaries::Curve;

pub const REDRAWS: usize = 10;

/// Data curve plus simulated curves on one grid, with the shared mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub r: Vec<f64>,
    /// Row 0 is the data curve.
    pub curves: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
}

impl CurveSet {
    pub fn from_curves(data: &Curve, sims: &[Curve]) -> Result<Self> {
        if sims.is_empty() {
            return Err(Error::InsufficientData("envelope needs at least one simulated curve".into()));
        }
        let mut mask = data.defined.clone();
        let mut curves = vec![data.values.clone()];
        for c in sims {
            if c.r != data.r {
                return Err(Error::Mismatch("curves use different r grids".into()));
            }
            for (m, d) in mask.iter_mut().zip(&c.defined) {
                *m &= *d;
            }
            curves.push(c.values.clone());
        }
        Ok(Self { r: data.r.clone(), curves, mask })
    }

    /// All positions defined.
    pub fn from_values(r: Vec<f64>, curves: Vec<Vec<f64>>) -> Result<Self> {
        if curves.len() < 2 || curves.iter().any(|c| c.len() != r.len()) {
            return Err(Error::Mismatch("need data plus >= 1 simulation, all of grid length".into()));
        }
        let mask = vec![true; r.len()];
        Ok(Self { r, curves, mask })
    }

    /// Number of simulated curves.
    pub fn s(&self) -> usize {
        self.curves.len() - 1
    }

    fn positions(&self) -> Vec<usize> {
        (0..self.r.len()).filter(|&k| self.mask[k]).collect()
    }
}

/// Two-sided pointwise ranks at the unmasked positions, one row per curve,
/// each row sorted ascending.
fn sorted_rank_vectors(set: &CurveSet) -> Vec<Vec<u32>> {
    let n = set.curves.len();
    let pos = set.positions();
    let mut ranks = vec![Vec::with_capacity(pos.len()); n];
    let mut order: Vec<usize> = (0..n).collect();
    for &k in &pos {
        order.sort_by(|&a, &b| set.curves[a][k].total_cmp(&set.curves[b][k]));
        // Walk tie groups: below = start of group, above = n - end of group.
        let mut start = 0;
        while start < n {
            let v = set.curves[order[start]][k];
            let mut end = start + 1;
            while end < n && set.curves[order[end]][k] == v {
                end += 1;
            }
            let rank = (1 + start).min(1 + n - end) as u32;
            for &i in &order[start..end] {
                ranks[i].push(rank);
            }
            start = end;
        }
    }
    for r in &mut ranks {
        r.sort_unstable();
    }
    ranks
}

/// Measure `(1 + #{strictly smaller key}) / count` for keys ordered by `cmp`.
fn normalized_position<K, F: Fn(&K, &K) -> Ordering>(keys: &[K], cmp: F) -> Vec<f64> {
    let n = keys.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| cmp(&keys[a], &keys[b]));
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && cmp(&keys[idx[start]], &keys[idx[end]]) == Ordering::Equal {
            end += 1;
        }
        for &i in &idx[start..end] {
            out[i] = (1 + start) as f64 / n as f64;
        }
        start = end;
    }
    out
}

/// ERL measure of every curve, data first.
pub fn erl_measure(set: &CurveSet) -> Vec<f64> {
    let ranks = sorted_rank_vectors(set);
    normalized_position(&ranks, |a, b| a.cmp(b))
}

fn p_value(measures: &[f64]) -> f64 {
    at_most(measures, measures[0]) as f64 / measures.len() as f64
}

fn at_most(measures: &[f64], e: f64) -> usize {
    measures.iter().filter(|&&x| x <= e).count()
}

/// `floor(alpha * count)`, robust to `1 - level` rounding.
fn allowed_count(measures: &[f64], alpha: f64) -> usize {
    (alpha * measures.len() as f64 + 1e-9).floor() as usize
}

/// `p <= alpha`, evaluated on counts.
fn rejects(measures: &[f64], alpha: f64) -> bool {
    at_most(measures, measures[0]) <= allowed_count(measures, alpha)
}

/// Largest observed measure `c` with `#{e <= c} <= floor(alpha * count)`.
fn critical_measure(measures: &[f64], alpha: f64) -> f64 {
    let allowed = allowed_count(measures, alpha);
    let mut c = f64::NEG_INFINITY;
    for &e in measures {
        if e > c && measures.iter().filter(|&&x| x <= e).count() <= allowed {
            c = e;
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub r: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub data: Vec<f64>,
    /// Pointwise mean of the simulated curves.
    pub central: Vec<f64>,
    pub mask: Vec<bool>,
    pub measures: Vec<f64>,
    pub p_value: f64,
    pub level: f64,
    pub rejected: bool,
}

impl EnvelopeResult {
    /// Unmasked positions where the data curve leaves the envelope.
    pub fn outside(&self) -> Vec<usize> {
        (0..self.r.len())
            .filter(|&k| self.mask[k] && (self.data[k] < self.lo[k] || self.data[k] > self.hi[k]))
            .collect()
    }

    /// CSV with header `r,lo,hi,data,mean,defined`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "r,lo,hi,data,mean,defined")?;
        for k in 0..self.r.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.r[k], self.lo[k], self.hi[k], self.data[k], self.central[k], self.mask[k] as u8
            )?;
        }
        Ok(())
    }
}

fn envelope_from(set: &CurveSet, keep: &[bool], measures: Vec<f64>, p: f64, level: f64) -> EnvelopeResult {
    let len = set.r.len();
    let (mut lo, mut hi) = (vec![f64::NAN; len], vec![f64::NAN; len]);
    let mut central = vec![f64::NAN; len];
    for k in 0..len {
        if !set.mask[k] {
            continue;
        }
        let (mut a, mut b) = (f64::INFINITY, f64::NEG_INFINITY);
        for (i, c) in set.curves.iter().enumerate() {
            if keep[i] {
                a = a.min(c[k]);
                b = b.max(c[k]);
            }
        }
        lo[k] = a;
        hi[k] = b;
        central[k] = set.curves[1..].iter().map(|c| c[k]).sum::<f64>() / set.s() as f64;
    }
    EnvelopeResult {
        r: set.r.clone(),
        lo,
        hi,
        data: set.curves[0].clone(),
        central,
        mask: set.mask.clone(),
        rejected: rejects(&measures, 1.0 - level),
        measures,
        p_value: p,
        level,
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("envelope level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

pub fn global_envelope(set: &CurveSet, level: f64) -> Result<EnvelopeResult> {
    check_level(level)?;
    let measures = erl_measure(set);
    let p = p_value(&measures);
    let c = critical_measure(&measures, 1.0 - level);
    let keep: Vec<bool> = measures.iter().map(|&e| e > c).collect();
    Ok(envelope_from(set, &keep, measures, p, level))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedEnvelope {
    pub sets: Vec<EnvelopeResult>,
    pub measures: Vec<f64>,
    pub p_value: f64,
    pub level: f64,
    pub rejected: bool,
}

/// Two-step combination: per-set ERL measures, then the extreme-rank
/// construction on each curve's vector of measures with one-sided ranks
/// (a small measure is extreme, a large one is not).
pub fn combined_envelope(sets: &[CurveSet], level: f64) -> Result<CombinedEnvelope> {
    check_level(level)?;
    if sets.is_empty() {
        return Err(Error::InsufficientData("no curve sets".into()));
    }
    let n = sets[0].curves.len();
    if sets.iter().any(|s| s.curves.len() != n) {
        return Err(Error::Mismatch("curve sets have different numbers of simulations".into()));
    }
    let per_set: Vec<Vec<f64>> = sets.iter().map(erl_measure).collect();
    let mut vectors: Vec<Vec<u32>> = vec![Vec::with_capacity(sets.len()); n];
    for m in &per_set {
        for i in 0..n {
            let below = m.iter().filter(|&&x| x < m[i]).count();
            vectors[i].push(1 + below as u32);
        }
    }
    for v in &mut vectors {
        v.sort_unstable();
    }
    let measures = normalized_position(&vectors, |a, b| a.cmp(b));
    let p = p_value(&measures);
    let c = critical_measure(&measures, 1.0 - level);
    let keep: Vec<bool> = measures.iter().map(|&e| e > c).collect();
    let rejected = rejects(&measures, 1.0 - level);
    let results = sets
        .iter()
        .zip(per_set)
        .map(|(s, m)| {
            let mut r = envelope_from(s, &keep, m, p, level);
            r.rejected = rejected;
            r
        })
        .collect();
    Ok(CombinedEnvelope { sets: results, measures, p_value: p, level, rejected })
}

/// Curve-valued statistic of a pattern.
pub type Statistic<'a> = &'a (dyn Fn(&PointPattern) -> Result<Curve> + Sync);

/// One simulation per posterior draw, evaluated by every statistic.
/// Patterns where some statistic has no defined entry are redrawn from
/// the same parameters up to `REDRAWS` times, then dropped.
/// Returns per-statistic curves and the number of dropped draws.
pub fn posterior_predictive_curves<S: Simulator>(
    posterior: &AbcPosterior,
    sim: &S,
    statistics: &[Statistic<'_>],
    seed: u64,
) -> Result<(Vec<Vec<Curve>>, usize)> {
    if posterior.is_empty() {
        return Err(Error::InsufficientData("empty posterior".into()));
    }
    let per_draw: Vec<Result<Option<Vec<Curve>>>> = posterior
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            for attempt in 0..REDRAWS {
                let mut rng = task_rng(seed, &[stream::PREDICTIVE, i as u64, attempt as u64]);
                let x = sim.simulate(theta, &mut rng)?;
                let curves = statistics.iter().map(|f| f(&x)).collect::<Result<Vec<_>>>()?;
                if curves.iter().all(|c| c.defined.iter().any(|&d| d)) {
                    return Ok(Some(curves));
                }
            }
            Ok(None)
        })
        .collect();
    let mut out = vec![Vec::with_capacity(posterior.len()); statistics.len()];
    let mut dropped = 0;
    for r in per_draw {
        match r? {
            Some(curves) => {
                for (slot, c) in out.iter_mut().zip(curves) {
                    slot.push(c);
                }
            }
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("posterior predictive: dropped {dropped} draws with undefined statistics");
    }
    Ok((out, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    /// Textbook evaluation straight from the definitions.
    fn brute_measures(curves: &[Vec<f64>]) -> Vec<f64> {
        let n = curves.len();
        let len = curves[0].len();
        let vecs: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut r: Vec<usize> = (0..len)
                    .map(|k| {
                        let below = (0..n).filter(|&j| curves[j][k] < curves[i][k]).count();
                        let above = (0..n).filter(|&j| curves[j][k] > curves[i][k]).count();
                        (1 + below).min(1 + above)
                    })
                    .collect();
                r.sort();
                r
            })
            .collect();
        (0..n)
            .map(|i| {
                let more = (0..n).filter(|&j| vecs[j] < vecs[i]).count();
                (1 + more) as f64 / n as f64
            })
            .collect()
    }

    fn random_set(rng: &mut impl Rng, s: usize, len: usize, levels: i32) -> CurveSet {
        let curves = (0..=s).map(|_| (0..len).map(|_| rng.random_range(0..levels) as f64).collect()).collect();
        CurveSet::from_values((0..len).map(|k| k as f64 + 1.0).collect(), curves).unwrap()
    }

    #[test]
    fn identical_curves_share_measure() {
        let set = CurveSet::from_values(vec![1.0, 2.0], vec![vec![1.0, 2.0]; 5]).unwrap();
        let m = erl_measure(&set);
        assert!(m.iter().all(|&e| e == m[0]));
        assert_eq!(global_envelope(&set, 0.95).unwrap().p_value, 1.0);
    }

    #[test]
    fn strictly_highest_curve_is_most_extreme() {
        let mut curves: Vec<Vec<f64>> =
            (0..20).map(|i| vec![i as f64 * 0.1, (19 - i) as f64 * 0.1, ((7 * i) % 20) as f64]).collect();
        curves[0] = vec![100.0, 100.0, 100.0];
        let set = CurveSet::from_values(vec![1.0, 2.0, 3.0], curves).unwrap();
        let m = erl_measure(&set);
        assert!(m[1..].iter().all(|&e| e > m[0]));
        let env = global_envelope(&set, 0.95).unwrap();
        assert_eq!(env.p_value, 1.0 / 20.0);
        assert!(env.rejected);
    }

    #[test]
    fn hand_enumerated_step_curves() {
        // s = 3, grid of 3 points.
        let curves = vec![vec![0.0, 0.0, 1.0], vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 1.0], vec![1.0, 2.0, 2.0]];
        // Position 0: values 0,1,0,1 -> ranks 1,1,1,1 (two-way ties).
        // Position 1: values 0,1,1,2 -> ranks 1,2,2,1.
        // Position 2: values 1,1,1,2 -> ranks 1,1,1,1.
        // Sorted vectors: [1,1,1], [1,1,2], [1,1,2], [1,1,1].
        let set = CurveSet::from_values(vec![1.0, 2.0, 3.0], curves.clone()).unwrap();
        assert_eq!(erl_measure(&set), vec![0.25, 0.75, 0.75, 0.25]);
        assert_eq!(brute_measures(&curves), vec![0.25, 0.75, 0.75, 0.25]);
    }

    fn continuous_set(rng: &mut impl Rng, s: usize, len: usize) -> CurveSet {
        let curves = (0..=s).map(|_| (0..len).map(|_| rng.random::<f64>()).collect()).collect();
        CurveSet::from_values((0..len).map(|k| k as f64 + 1.0).collect(), curves).unwrap()
    }

    #[test]
    fn erl_matches_brute_force_and_envelope_is_coherent() {
        let mut rng = rng_from_seed(5);
        for trial in 0..100 {
            let s = rng.random_range(1..40);
            let len = rng.random_range(1..8);
            let tied = random_set(&mut rng, s, len, 4);
            let free = continuous_set(&mut rng, s, len);
            assert_eq!(erl_measure(&tied), brute_measures(&tied.curves));
            assert_eq!(erl_measure(&free), brute_measures(&free.curves));
            for level in [0.5, 0.8, 0.95] {
                let env = global_envelope(&free, level).unwrap();
                assert_eq!(env.rejected, !env.outside().is_empty(), "trial {trial} level {level}");
                // With exact ties the data can touch the envelope and still be
                // rejected; leaving it always implies rejection.
                let env = global_envelope(&tied, level).unwrap();
                assert!(env.rejected || env.outside().is_empty());
            }
        }
    }

    #[test]
    fn duplicated_data_curve_is_not_most_extreme_alone() {
        let mut rng = rng_from_seed(6);
        let mut set = random_set(&mut rng, 19, 5, 1000);
        set.curves[0] = set.curves[7].clone();
        assert!(global_envelope(&set, 0.95).unwrap().p_value >= 2.0 / 20.0);
    }

    #[test]
    fn masked_positions_are_ignored() {
        let mut rng = rng_from_seed(7);
        let mut set = random_set(&mut rng, 30, 6, 50);
        set.mask[2] = false;
        for c in &mut set.curves {
            c[2] = rng.random::<f64>();
        }
        let mut reference = set.clone();
        for c in &mut reference.curves {
            c.remove(2);
        }
        reference.r.remove(2);
        reference.mask.remove(2);
        assert_eq!(erl_measure(&set), erl_measure(&reference));
    }

    #[test]
    fn identical_sets_combine_to_single_set() {
        let mut rng = rng_from_seed(8);
        for _ in 0..30 {
            let set = random_set(&mut rng, 49, 6, 30);
            let single = global_envelope(&set, 0.95).unwrap();
            let both = combined_envelope(&[set.clone(), set.clone()], 0.95).unwrap();
            assert_eq!(both.p_value, single.p_value);
            assert_eq!(both.measures, single.measures);
            let any_out = both.sets.iter().any(|r| !r.outside().is_empty());
            assert_eq!(both.rejected, any_out);
        }
    }

    #[test]
    fn combined_is_coherent() {
        let mut rng = rng_from_seed(9);
        for _ in 0..100 {
            let s = rng.random_range(5..60);
            let a = continuous_set(&mut rng, s, 4);
            let b = continuous_set(&mut rng, s, 7);
            let c = combined_envelope(&[a, b], 0.9).unwrap();
            let any_out = c.sets.iter().any(|r| !r.outside().is_empty());
            assert_eq!(c.rejected, any_out);
        }
        let a = random_set(&mut rng, 9, 4, 20);
        let b = random_set(&mut rng, 10, 4, 20);
        assert!(combined_envelope(&[a, b], 0.9).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn monotone_transform_and_permutation_invariance(seed in 0u64..10_000, s in 1usize..30, len in 1usize..10) {
            let mut rng = rng_from_seed(seed);
            let set = random_set(&mut rng, s, len, 25);
            let env = global_envelope(&set, 0.9).unwrap();

            let mut t = set.clone();
            for c in &mut t.curves { for v in c.iter_mut() { *v = (*v * 0.3).exp() - 7.0; } }
            let env_t = global_envelope(&t, 0.9).unwrap();
            prop_assert_eq!(env.p_value, env_t.p_value);
            prop_assert_eq!(&env.measures, &env_t.measures);

            let mut p = set.clone();
            p.curves[1..].reverse();
            let env_p = global_envelope(&p, 0.9).unwrap();
            prop_assert_eq!(env.p_value, env_p.p_value);
            prop_assert_eq!(&env.lo, &env_p.lo);
            prop_assert_eq!(&env.hi, &env_p.hi);

            let k = (env.p_value * (s + 1) as f64).round();
            prop_assert!((env.p_value * (s + 1) as f64 - k).abs() < 1e-9 && k >= 1.0);

            let narrow = global_envelope(&set, 0.5).unwrap();
            for i in 0..len {
                prop_assert!(narrow.lo[i] >= env.lo[i] && narrow.hi[i] <= env.hi[i]);
                prop_assert!(env.lo[i] <= env.hi[i]);
            }
        }
    }
}
