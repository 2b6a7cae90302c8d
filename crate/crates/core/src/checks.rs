//! Executable versions of the model's order-preservation, monotonicity and
//! submodularity claims, checked exhaustively on small instances.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{cohort_gain, simulate, single_term, SimulationConfig, SimulationTrace};
use crate::error::{DecayError, Result};
use crate::graph::{DecayingNetwork, NodeId};

/// Floating-point slack for the inequalities.
pub const TOLERANCE: f64 = 1e-12;

/// Largest neighbourhood the exhaustive checks enumerate.
pub const MAX_CHECK_DEGREE: usize = 7;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Claim {
    /// Sums over nested probability sets preserve order.
    SumOrder,
    /// Products over nested probability sets reverse order.
    ProductOrder,
    /// The additive single-leaver gain has equal marginals.
    AdditiveModular,
    /// Leave probabilities never decrease before a member leaves.
    Monotone,
    /// The multi-leaver gain has diminishing marginals.
    Submodular,
}

impl Claim {
    pub const ALL: [Claim; 5] = [
        Claim::SumOrder,
        Claim::ProductOrder,
        Claim::AdditiveModular,
        Claim::Monotone,
        Claim::Submodular,
    ];
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Claim::SumOrder => "sum-order",
            Claim::ProductOrder => "product-order",
            Claim::AdditiveModular => "additive-modular",
            Claim::Monotone => "monotone",
            Claim::Submodular => "submodular",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Claim {
    type Err = DecayError;

    fn from_str(s: &str) -> Result<Self> {
        Claim::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| DecayError::domain(format!("unknown claim '{s}'")))
    }
}

pub const MAX_RECORDED_VIOLATIONS: usize = 100;

/// A reproducible counterexample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub node: Option<NodeId>,
    pub step: Option<usize>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub claim: Claim,
    pub instances_checked: usize,
    /// Total number of violations found.
    pub violation_count: usize,
    /// The first [`MAX_RECORDED_VIOLATIONS`] of them.
    pub violations: Vec<Violation>,
    /// Strict-inequality configurations that came out as equalities
    /// (saturated products); tolerated, not violations.
    pub ties: usize,
    pub passed: bool,
}

impl CheckReport {
    fn new(claim: Claim) -> Self {
        CheckReport {
            claim,
            instances_checked: 0,
            violation_count: 0,
            violations: Vec::new(),
            ties: 0,
            passed: true,
        }
    }

    fn violate(&mut self, node: Option<NodeId>, step: Option<usize>, detail: String) {
        self.violation_count += 1;
        if self.violations.len() < MAX_RECORDED_VIOLATIONS {
            self.violations.push(Violation { node, step, detail });
        }
        self.passed = false;
    }

    /// Folds `other` (same claim) into `self`.
    pub fn merge(&mut self, other: CheckReport) {
        debug_assert_eq!(self.claim, other.claim);
        self.instances_checked += other.instances_checked;
        self.ties += other.ties;
        self.passed &= other.passed;
        self.violation_count += other.violation_count;
        let room = MAX_RECORDED_VIOLATIONS - self.violations.len();
        self.violations
            .extend(other.violations.into_iter().take(room));
    }
}

/// A probability set and the elements that extend it to a superset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedPair {
    pub base: Vec<f64>,
    pub extra: Vec<f64>,
}

fn validate_pairs(pairs: &[NestedPair]) -> Result<()> {
    for (i, p) in pairs.iter().enumerate() {
        if let Some(x) = p
            .base
            .iter()
            .chain(&p.extra)
            .find(|x| !(**x > 0.0 && **x <= 1.0))
        {
            return Err(DecayError::domain(format!(
                "pair {i}: element {x} is outside (0, 1]"
            )));
        }
    }
    Ok(())
}

/// `Σ base <= Σ (base ∪ extra)` for every pair.
pub fn check_sum_order(pairs: &[NestedPair]) -> Result<CheckReport> {
    validate_pairs(pairs)?;
    let mut report = CheckReport::new(Claim::SumOrder);
    for (i, p) in pairs.iter().enumerate() {
        let small: f64 = p.base.iter().sum();
        let large: f64 = small + p.extra.iter().sum::<f64>();
        report.instances_checked += 1;
        if small > large + TOLERANCE {
            report.violate(
                None,
                None,
                format!("pair {i}: sum {small} > superset sum {large}"),
            );
        }
    }
    Ok(report)
}

/// `∏ base >= ∏ (base ∪ extra)` for every pair.
pub fn check_product_order(pairs: &[NestedPair]) -> Result<CheckReport> {
    validate_pairs(pairs)?;
    let mut report = CheckReport::new(Claim::ProductOrder);
    for (i, p) in pairs.iter().enumerate() {
        let small: f64 = p.base.iter().product();
        let large: f64 = small * p.extra.iter().product::<f64>();
        report.instances_checked += 1;
        if small + TOLERANCE < large {
            report.violate(
                None,
                None,
                format!("pair {i}: product {small} < superset product {large}"),
            );
        }
    }
    Ok(report)
}

/// Random nested pairs with total size at most `max_size`.
pub fn random_nested_pairs(count: usize, max_size: usize, seed: u64) -> Vec<NestedPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let total = rng.gen_range(0..=max_size);
            let base_len = rng.gen_range(0..=total);
            let mut draw = |n| (0..n).map(|_| 1.0 - rng.gen::<f64>()).collect::<Vec<f64>>();
            let base = draw(base_len);
            let extra = draw(total - base_len);
            NestedPair { base, extra }
        })
        .collect()
}

/// Gain formula under test. `Faulty` is a deliberately supermodular
/// stand-in used to prove the checks can fail.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum GainModel {
    #[default]
    Cohort,
    Faulty,
}

impl GainModel {
    fn eval(self, degree: usize, cohort: &[(f64, f64)]) -> f64 {
        match self {
            GainModel::Cohort => cohort_gain(degree, cohort.iter().copied()).0,
            GainModel::Faulty => {
                let xi = cohort.len() as f64 / degree as f64;
                xi * xi
            }
        }
    }

    fn additive(self, cohort: &[(f64, f64)]) -> f64 {
        match self {
            GainModel::Cohort => cohort.iter().map(|&(p, d)| single_term(p, d)).sum(),
            GainModel::Faulty => {
                let s: f64 = cohort.iter().map(|&(p, d)| single_term(p, d)).sum();
                s * s
            }
        }
    }
}

/// `(π_u, δ_uw)` for the alive neighbours of `w`, refusing large neighbourhoods.
fn neighbourhood(net: &DecayingNetwork, w: NodeId) -> Result<Vec<(NodeId, f64, f64)>> {
    net.require_alive(w)?;
    let step = net.time() + 1;
    let list: Vec<_> = net
        .alive_neighbors(w)
        .map(|(u, _)| {
            (
                u,
                net.leave_prob(u),
                net.tie_strength(u, w, step).expect("edge exists"),
            )
        })
        .collect();
    if list.len() > MAX_CHECK_DEGREE {
        return Err(DecayError::EnumerationCap {
            required: 1u128 << list.len(),
            cap: 1u128 << MAX_CHECK_DEGREE,
        });
    }
    Ok(list)
}

/// Visits every `(S, T, v)` with `S ⊆ T ⊊ Γ_w` and `v ∈ Γ_w \ T` as bitmasks.
fn for_each_triple(d: usize, mut f: impl FnMut(u32, u32, usize)) {
    let full: u32 = (1u32 << d) - 1;
    for t in 0..full {
        let mut s = t;
        loop {
            for v in 0..d {
                if t & (1 << v) == 0 {
                    f(s, t, v);
                }
            }
            if s == 0 {
                break;
            }
            s = (s - 1) & t;
        }
    }
}

fn describe(nbrs: &[(NodeId, f64, f64)], mask: u32) -> String {
    let ids: Vec<String> = nbrs
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, (u, _, _))| u.to_string())
        .collect();
    format!("{{{}}}", ids.join(","))
}

fn cohort_of(nbrs: &[(NodeId, f64, f64)], mask: u32) -> Vec<(f64, f64)> {
    nbrs.iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, &(_, p, d))| (p, d))
        .collect()
}

/// Equal marginals of the additive gain over subsets of `Γ_w`.
pub fn check_additive_modular(net: &DecayingNetwork, w: NodeId) -> Result<CheckReport> {
    check_additive_modular_with(net, w, GainModel::Cohort)
}

pub fn check_additive_modular_with(
    net: &DecayingNetwork,
    w: NodeId,
    model: GainModel,
) -> Result<CheckReport> {
    let nbrs = neighbourhood(net, w)?;
    let mut report = CheckReport::new(Claim::AdditiveModular);
    let f = |mask: u32| model.additive(&cohort_of(&nbrs, mask));
    for_each_triple(nbrs.len(), |s, t, v| {
        let bit = 1u32 << v;
        let lhs = f(s | bit) - f(s);
        let rhs = f(t | bit) - f(t);
        report.instances_checked += 1;
        if (lhs - rhs).abs() > TOLERANCE {
            report.violate(
                Some(w),
                None,
                format!(
                    "S={} T={} v={}: marginals {lhs} vs {rhs}",
                    describe(&nbrs, s),
                    describe(&nbrs, t),
                    nbrs[v].0
                ),
            );
        }
    });
    Ok(report)
}

/// Diminishing marginals of the multi-leaver gain over subsets of `Γ_w`,
/// with `ξ = |H| / deg(w)` for each candidate left set `H`.
pub fn check_submodular(net: &DecayingNetwork, w: NodeId) -> Result<CheckReport> {
    check_submodular_with(net, w, GainModel::Cohort)
}

pub fn check_submodular_with(
    net: &DecayingNetwork,
    w: NodeId,
    model: GainModel,
) -> Result<CheckReport> {
    let nbrs = neighbourhood(net, w)?;
    let d = nbrs.len();
    let mut report = CheckReport::new(Claim::Submodular);
    let f = |mask: u32| model.eval(d, &cohort_of(&nbrs, mask));
    for_each_triple(d, |s, t, v| {
        let bit = 1u32 << v;
        let diff = (f(s | bit) + f(t)) - (f(s) + f(t | bit));
        report.instances_checked += 1;
        if diff < -TOLERANCE {
            report.violate(
                Some(w),
                None,
                format!(
                    "S={} T={} v={}: marginal gap {diff}",
                    describe(&nbrs, s),
                    describe(&nbrs, t),
                    nbrs[v].0
                ),
            );
        } else if s != t && diff <= TOLERANCE {
            report.ties += 1;
        }
    });
    Ok(report)
}

/// Leave probabilities recorded in `trace` never decrease while a member is alive.
pub fn check_monotone(trace: &SimulationTrace) -> CheckReport {
    let mut report = CheckReport::new(Claim::Monotone);
    let net = &trace.final_network;
    let first = trace.steps.first().map_or(1, |r| r.step);
    let mut last: Vec<Option<f64>> = net
        .nodes()
        .map(|(id, s)| {
            if first <= 1 {
                Some(s.initial_prob)
            } else {
                net.history()
                    .get(first - 2)
                    .and_then(|r| r.prob_snapshot.get(&id).copied())
            }
        })
        .collect();
    for rec in &trace.steps {
        for (&w, &p) in &rec.prob_snapshot {
            report.instances_checked += 1;
            if let Some(prev) = last[w.index()] {
                if p < prev {
                    report.violate(
                        Some(w),
                        Some(rec.step),
                        format!("probability fell from {prev} to {p}"),
                    );
                }
            }
            last[w.index()] = Some(p);
        }
    }
    report
}

/// Settings of the full claim suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub nested_pairs: usize,
    pub max_set_size: usize,
    pub simulations: usize,
    pub max_nodes: usize,
    pub edge_probability: f64,
    pub max_steps: usize,
}

impl SuiteConfig {
    pub fn new(seed: u64) -> Self {
        SuiteConfig {
            seed,
            nested_pairs: 10_000,
            max_set_size: 20,
            simulations: 1_000,
            max_nodes: 50,
            edge_probability: 0.2,
            max_steps: 200,
        }
    }
}

/// Seeded random network for simulation run `i` of the suite.
pub fn suite_network(cfg: &SuiteConfig, i: usize) -> Result<DecayingNetwork> {
    let s = cfg
        .seed
        .wrapping_mul(6_364_136_223_846_793_005)
        .wrapping_add(i as u64);
    let n = 2 + (ChaCha8Rng::seed_from_u64(s).gen_range(0..cfg.max_nodes - 1));
    crate::corpus::random_network(n, cfg.edge_probability, s)
}

/// Runs one claim of the suite.
pub fn run_claim(claim: Claim, cfg: &SuiteConfig, model: GainModel) -> Result<CheckReport> {
    match claim {
        Claim::SumOrder => check_sum_order(&random_nested_pairs(
            cfg.nested_pairs,
            cfg.max_set_size,
            cfg.seed,
        )),
        Claim::ProductOrder => check_product_order(&random_nested_pairs(
            cfg.nested_pairs,
            cfg.max_set_size,
            cfg.seed.wrapping_add(1),
        )),
        Claim::AdditiveModular | Claim::Submodular => {
            let mut report = CheckReport::new(claim);
            for net in crate::corpus::check_corpus(cfg.seed)? {
                for w in net.alive_nodes().collect::<Vec<_>>() {
                    if net.alive_degree(w) > MAX_CHECK_DEGREE {
                        continue;
                    }
                    let r = if claim == Claim::AdditiveModular {
                        check_additive_modular_with(&net, w, model)?
                    } else {
                        check_submodular_with(&net, w, model)?
                    };
                    report.merge(r);
                }
            }
            Ok(report)
        }
        Claim::Monotone => {
            let mut report = CheckReport::new(Claim::Monotone);
            for i in 0..cfg.simulations {
                let net = suite_network(cfg, i)?;
                let sim = SimulationConfig::new(cfg.seed.wrapping_add(i as u64), cfg.max_steps);
                report.merge(check_monotone(&simulate(&net, &sim)?));
            }
            Ok(report)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, SimulationConfig};
    use crate::graph::{build_network, InitialProbability};

    fn pair(base: &[f64], extra: &[f64]) -> NestedPair {
        NestedPair {
            base: base.to_vec(),
            extra: extra.to_vec(),
        }
    }

    fn net(edges: &[(u32, u32, f64)], init: InitialProbability) -> DecayingNetwork {
        build_network(
            edges.iter().map(|&(u, v, d)| (NodeId(u), NodeId(v), d)),
            &init,
        )
        .unwrap()
    }

    #[test]
    fn nested_pair_examples() {
        let r = check_sum_order(&[pair(&[0.2, 0.4], &[]), pair(&[0.2], &[0.3])]).unwrap();
        assert!(r.passed);
        assert_eq!(r.instances_checked, 2);
        let r = check_product_order(&[pair(&[0.2, 0.4], &[]), pair(&[0.5], &[1.0])]).unwrap();
        assert!(r.passed);
        assert!(check_sum_order(&[pair(&[0.0], &[])]).is_err());
        assert!(check_product_order(&[pair(&[0.5], &[1.2])]).is_err());
    }

    #[test]
    fn triple_count() {
        let mut all = 0;
        let mut nontrivial = 0;
        for_each_triple(2, |s, t, _| {
            all += 1;
            if s != t {
                nontrivial += 1;
            }
        });
        assert_eq!(all, 6);
        assert_eq!(nontrivial, 2);
        let mut seven = 0;
        for_each_triple(7, |_, _, _| seven += 1);
        // Σ_j C(7,j) 2^j (7-j) = 7·3^6
        assert_eq!(seven, 7 * 729);
    }

    #[test]
    fn gain_checks_on_a_star_center() {
        let n = net(
            &[(0, 1, 0.3), (0, 2, 0.8), (0, 3, 0.55), (0, 4, 0.1)],
            InitialProbability::Explicit(vec![0.2, 0.15, 0.7, 0.4, 0.9]),
        );
        let r3 = check_submodular(&n, NodeId(0)).unwrap();
        assert!(r3.passed, "{:?}", r3.violations);
        assert_eq!(r3.instances_checked, 4 * 27);
        let r1 = check_additive_modular(&n, NodeId(0)).unwrap();
        assert!(r1.passed);
    }

    #[test]
    fn saturated_tie_is_tolerated() {
        // delta = 1 on every edge: every cohort product is 0
        for delta in [0.9, 0.99, 1.0] {
            let n = net(
                &[(0, 1, delta), (0, 2, delta), (0, 3, delta)],
                InitialProbability::Constant(0.5),
            );
            let r = check_submodular(&n, NodeId(0)).unwrap();
            assert!(r.passed);
            if delta == 1.0 {
                assert!(r.ties > 0);
            }
        }
    }

    #[test]
    fn faulty_model_is_caught() {
        let n = net(
            &[(0, 1, 0.3), (0, 2, 0.8), (0, 3, 0.55)],
            InitialProbability::Constant(0.4),
        );
        let r = check_submodular_with(&n, NodeId(0), GainModel::Faulty).unwrap();
        assert!(!r.passed);
        assert!(r.violations[0].node == Some(NodeId(0)));
        assert!(
            !check_additive_modular_with(&n, NodeId(0), GainModel::Faulty)
                .unwrap()
                .passed
        );
    }

    #[test]
    fn degree_cap_refuses() {
        let edges: Vec<_> = (1..=8u32).map(|i| (0, i, 0.5)).collect();
        let n = net(&edges, InitialProbability::Constant(0.3));
        assert!(matches!(
            check_submodular(&n, NodeId(0)),
            Err(DecayError::EnumerationCap { .. })
        ));
    }

    #[test]
    fn monotone_check_catches_corruption() {
        let ring: Vec<_> = (0..6u32).map(|i| (i, (i + 1) % 6, 0.1)).collect();
        let n = net(&ring, InitialProbability::Constant(0.05));
        let cfg = SimulationConfig {
            stop_when_empty: false,
            ..SimulationConfig::new(3, 6)
        }
        .force(1, [NodeId(0)]);
        let mut trace = simulate(&n, &cfg).unwrap();
        assert!(check_monotone(&trace).passed);
        let rec = trace
            .steps
            .iter_mut()
            .find(|r| !r.prob_snapshot.is_empty() && r.step > 1)
            .unwrap();
        let step = rec.step;
        let (&w, p) = rec.prob_snapshot.iter_mut().next().unwrap();
        *p = 0.0;
        let r = check_monotone(&trace);
        assert!(!r.passed);
        assert_eq!(r.violations[0].node, Some(w));
        assert_eq!(r.violations[0].step, Some(step));
    }

    #[test]
    fn quiet_network_is_constant() {
        let n = net(
            &[(0, 1, 0.5), (1, 2, 0.5)],
            InitialProbability::Constant(1e-12),
        );
        let trace = simulate(&n, &SimulationConfig::new(2, 5)).unwrap();
        let r = check_monotone(&trace);
        assert!(r.passed);
        assert_eq!(r.instances_checked, 15);
    }

    #[test]
    fn claim_names_round_trip() {
        for c in Claim::ALL {
            assert_eq!(c.to_string().parse::<Claim>().unwrap(), c);
        }
        assert!("thm3".parse::<Claim>().is_err());
    }
}
