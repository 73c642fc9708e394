//! Seeded random models and protocols.
//!
//! The pseudorandom stream is SplitMix64 (Steele, Lea & Flood's 64-bit
//! finalizer over a Weyl sequence with increment 0x9E3779B97F4A7C15) and
//! every draw below reduces `next_u64()` by modulo. Both choices are part
//! of the format: a witness seed printed by this crate can be replayed by
//! any implementation of the same scheme.

use std::collections::BTreeMap;

use crate::dist::{FiniteRange, Pmf, VarId};
use crate::expr::{Expr, TableExpr};
use crate::intervene::Protocol;
use crate::rational::{rat, Rational};
use crate::scm::{Assignment, Mechanism, Scm, Variable};

const WEYL: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(WEYL);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform-ish draw in `0..n` by modulo reduction; `n` must be > 0.
    /// The bias is irrelevant at the tiny ranges used here and keeping the
    /// reduction trivial keeps seeds portable.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    /// True with probability `num/den`.
    pub fn chance(&mut self, num: u64, den: u64) -> bool {
        self.below(den) < num
    }
}

/// The `i`-th output of the SplitMix64 stream seeded at `base`; used to
/// derive independent per-trial seeds.
pub fn stream_seed(base: u64, i: u64) -> u64 {
    SplitMix64 {
        state: base.wrapping_add(i.wrapping_mul(WEYL)),
    }
    .next_u64()
}

/// Knobs for the random model generator.
#[derive(Clone, Debug)]
pub struct GenConfig {
    pub seed: u64,
    /// Number of endogenous variables is drawn from `1..=max_endogenous`.
    pub max_endogenous: usize,
    /// Endogenous range sizes are drawn from `1..=max_range`.
    pub max_range: usize,
    /// Noise range sizes are drawn from `1..=max_noise_range`.
    pub max_noise_range: usize,
    /// Probability of each forward edge.
    pub edge_probability: Rational,
    /// Noise and protocol masses come from integer weights in
    /// `0..=pmf_grain`, normalized exactly; all-zero draws are retried.
    pub pmf_grain: u64,
}

impl GenConfig {
    pub fn new(seed: u64) -> Self {
        GenConfig {
            seed,
            max_endogenous: 4,
            max_range: 3,
            max_noise_range: 3,
            edge_probability: rat(1, 2),
            pmf_grain: 6,
        }
    }
}

fn edge_chance(rng: &mut SplitMix64, p: &Rational) -> bool {
    let num = p.numer().try_into().unwrap_or(0u64);
    let den = p.denom().try_into().unwrap_or(1u64).max(1);
    if num == 0 {
        return false;
    }
    rng.chance(num, den)
}

/// Integer weights in `0..=grain`, redrawn until some weight is positive,
/// normalized exactly. Zero-mass entries are intentionally common: they
/// exercise the skip-zero paths of every expectation.
pub fn gen_masses(rng: &mut SplitMix64, len: usize, grain: u64) -> Vec<Rational> {
    loop {
        let weights: Vec<u64> = (0..len).map(|_| rng.below(grain + 1)).collect();
        let total: u64 = weights.iter().sum();
        if total == 0 {
            continue;
        }
        return weights
            .iter()
            .map(|&w| rat(w as i64, total as i64))
            .collect();
    }
}

fn table_body(
    rng: &mut SplitMix64,
    parents: &[(VarId, FiniteRange)],
    noise: &(VarId, FiniteRange),
    target: &FiniteRange,
) -> Expr {
    let mut keys: Vec<VarId> = parents.iter().map(|(id, _)| id.clone()).collect();
    keys.push(noise.0.clone());
    let mut key_ranges: Vec<&FiniteRange> = parents.iter().map(|(_, r)| r).collect();
    key_ranges.push(&noise.1);
    let dims: Vec<usize> = key_ranges.iter().map(|r| r.len()).collect();
    let cells: usize = dims.iter().product();
    let mut rows = BTreeMap::new();
    for flat in 0..cells {
        let mut rest = flat;
        let mut idx = vec![0; dims.len()];
        for k in (0..dims.len()).rev() {
            idx[k] = rest % dims[k];
            rest /= dims[k];
        }
        let key: Vec<String> = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| key_ranges[k].label(i).to_owned())
            .collect();
        let value = target.label(rng.below(target.len() as u64) as usize).to_owned();
        rows.insert(key, value);
    }
    Expr::Table(TableExpr { keys, rows })
}

fn mechanism(
    rng: &mut SplitMix64,
    cfg: &GenConfig,
    id: &str,
    noise_id: &str,
    range: FiniteRange,
    parents: Vec<(VarId, FiniteRange)>,
) -> Mechanism {
    let noise_range = FiniteRange::of_size(1 + rng.below(cfg.max_noise_range as u64) as usize);
    let noise_masses = gen_masses(rng, noise_range.len(), cfg.pmf_grain);
    let noise_dist = Pmf::single(noise_id, noise_range.clone(), noise_masses)
        .expect("weights normalize exactly");
    let noise = (VarId::new(noise_id), noise_range.clone());
    let body = table_body(rng, &parents, &noise, &range);
    Mechanism {
        variable: Variable::new(id, range),
        assignment: Assignment {
            target: VarId::new(id),
            parents: parents.into_iter().map(|(p, _)| p).collect(),
            noise: VarId::new(noise_id),
            body,
        },
        noise: Variable::new(noise_id, noise_range),
        noise_dist,
    }
}

/// Deterministic random model: a DAG by construction (edges only go from
/// lower to higher declaration index) with random total lookup tables.
pub fn gen_scm(cfg: &GenConfig) -> Scm {
    let mut rng = SplitMix64::new(cfg.seed);
    let n = 1 + rng.below(cfg.max_endogenous as u64) as usize;
    let ranges: Vec<FiniteRange> = (0..n)
        .map(|_| FiniteRange::of_size(1 + rng.below(cfg.max_range as u64) as usize))
        .collect();
    let mut mechanisms = Vec::with_capacity(n);
    for j in 0..n {
        let parents: Vec<(VarId, FiniteRange)> = (0..j)
            .filter(|_| edge_chance(&mut rng, &cfg.edge_probability))
            .map(|i| (VarId::new(format!("V{i}")), ranges[i].clone()))
            .collect();
        mechanisms.push(mechanism(
            &mut rng,
            cfg,
            &format!("V{j}"),
            &format!("N_V{j}"),
            ranges[j].clone(),
            parents,
        ));
    }
    Scm::new(format!("g{}", cfg.seed), mechanisms)
}

/// Deterministic random chain `X -> Y -> Z` with ranges of at least two
/// values and random total tables; the shape the chain hunter searches.
pub fn gen_chain_scm(cfg: &GenConfig) -> Scm {
    let mut rng = SplitMix64::new(cfg.seed);
    let size = |rng: &mut SplitMix64| 2 + rng.below(cfg.max_range.max(2) as u64 - 1) as usize;
    let rx = FiniteRange::of_size(size(&mut rng));
    let ry = FiniteRange::of_size(size(&mut rng));
    let rz = FiniteRange::of_size(size(&mut rng));
    let x = mechanism(&mut rng, cfg, "X", "N_X", rx.clone(), vec![]);
    let y = mechanism(
        &mut rng,
        cfg,
        "Y",
        "N_Y",
        ry.clone(),
        vec![(VarId::new("X"), rx)],
    );
    let z = mechanism(
        &mut rng,
        cfg,
        "Z",
        "N_Z",
        rz,
        vec![(VarId::new("Y"), ry)],
    );
    Scm::new(format!("chain{}", cfg.seed), vec![x, y, z])
}

/// Random protocol over one variable of the model.
pub fn gen_protocol(rng: &mut SplitMix64, cfg: &GenConfig, model: &Scm, target: &str) -> Protocol {
    let range = &model.variable(target).expect("target exists").range;
    let masses = gen_masses(rng, range.len(), cfg.pmf_grain);
    Protocol::new(model, target, masses).expect("generated masses are a pmf")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_stream() {
        // First outputs for seed 0 from the reference implementation.
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn same_seed_same_model() {
        let cfg = GenConfig::new(42);
        assert_eq!(gen_scm(&cfg), gen_scm(&cfg));
        assert_eq!(gen_chain_scm(&cfg), gen_chain_scm(&cfg));
        assert_ne!(gen_scm(&cfg), gen_scm(&GenConfig::new(43)));
    }

    #[test]
    fn generated_models_validate() {
        for seed in 0..100 {
            let model = gen_scm(&GenConfig::new(seed));
            let report = model.validate();
            assert!(report.is_valid(), "seed {seed}: {report}");
        }
    }

    #[test]
    fn single_variable_config() {
        let cfg = GenConfig {
            max_endogenous: 1,
            ..GenConfig::new(7)
        };
        let model = gen_scm(&cfg);
        assert_eq!(model.mechanisms().len(), 1);
        assert!(model.is_valid());
    }

    #[test]
    fn chains_are_chains() {
        for seed in 0..20 {
            let model = gen_chain_scm(&GenConfig::new(seed));
            assert!(model.is_valid());
            assert!(model.has_directed_path("X", "Y").unwrap());
            assert!(model.has_directed_path("Y", "Z").unwrap());
            assert!(!model.has_directed_path("Z", "X").unwrap());
            assert_eq!(model.mechanism("Z").unwrap().assignment.parents.len(), 1);
        }
    }
}
