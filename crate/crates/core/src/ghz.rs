//! Three-party GHZ protocol: exact outcome distribution, perfect correlations
//! in sampled worlds, and the local-hidden-variable impossibility.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{involutory_pvm, tensor_all, MeasurementOperatorSet, Operator, StateVector};
use crate::prob::{Event, FiniteProbabilitySpace, Symbol};
use crate::worlds::{condition_seq, sample_world_with, SamplingOptions, WorldPrefix};

pub const MIN_TRIALS: usize = 8000;

const SIGNS: [i8; 2] = [1, -1];

/// `cos(pi k / 2)` for `k = c1 + c2 + c3`, by lookup so that zeros are exact.
pub fn cos_half_pi(k: u8) -> i8 {
    match k % 4 {
        0 => 1,
        2 => -1,
        _ => 0,
    }
}

/// One trial record `(c1, c2, c3, m1, m2, m3)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GhzOutcome {
    pub coins: [u8; 3],
    pub results: [i8; 3],
}

impl GhzOutcome {
    /// All 64 outcomes, lexicographic with `+1` before `-1`.
    pub fn all() -> Vec<GhzOutcome> {
        let mut out = Vec::with_capacity(64);
        for coins in coin_triples() {
            for m1 in SIGNS {
                for m2 in SIGNS {
                    for m3 in SIGNS {
                        out.push(GhzOutcome { coins, results: [m1, m2, m3] });
                    }
                }
            }
        }
        out
    }

    pub fn to_symbol(self) -> Symbol {
        let [c1, c2, c3] = self.coins.map(i64::from);
        let [m1, m2, m3] = self.results.map(i64::from);
        Symbol::ints(&[c1, c2, c3, m1, m2, m3])
    }

    pub fn from_symbol(sym: &Symbol) -> Option<Self> {
        match sym.as_int_tuple()?.as_slice() {
            &[c1 @ 0..=1, c2 @ 0..=1, c3 @ 0..=1, m1 @ (-1 | 1), m2 @ (-1 | 1), m3 @ (-1 | 1)] => Some(GhzOutcome {
                coins: [c1 as u8, c2 as u8, c3 as u8],
                results: [m1 as i8, m2 as i8, m3 as i8],
            }),
            _ => None,
        }
    }

    pub fn coin_sum(self) -> u8 {
        self.coins.iter().sum()
    }

    pub fn result_product(self) -> i8 {
        self.results.iter().product()
    }
}

/// The eight coin triples in lexicographic order.
pub fn coin_triples() -> Vec<[u8; 3]> {
    (0..8u8).map(|i| [i >> 2 & 1, i >> 1 & 1, i & 1]).collect()
}

pub fn triple_name(coins: [u8; 3]) -> String {
    coins.iter().map(|c| char::from(b'0' + c)).collect()
}

/// The product `m1 m2 m3` forced on a coin triple, if any.
pub fn forced_product(coins: [u8; 3]) -> Option<i8> {
    match cos_half_pi(coins.iter().sum()) {
        0 => None,
        // P = (1 - m cos)/64 vanishes unless m = -cos.
        cos => Some(-cos),
    }
}

/// `(|000> - |111>)/sqrt 2` prepared behind three `|+>` coins.
pub fn initial_state() -> StateVector {
    tensor_all(&[StateVector::plus(), StateVector::plus(), StateVector::plus(), StateVector::ghz()]).unwrap()
}

/// `A^i_0 = X`, `A^i_1 = Y`.
pub fn observables() -> [Operator; 2] {
    [Operator::pauli_x(), Operator::pauli_y()]
}

pub fn build_ghz_operators() -> Result<MeasurementOperatorSet> {
    let obs = observables();
    let pvms = [involutory_pvm(&obs[0])?, involutory_pvm(&obs[1])?];
    let coin = |c: u8| Operator::projector(&StateVector::basis(2, c as usize));
    let elements = GhzOutcome::all()
        .into_iter()
        .map(|o| {
            let mut factors: Vec<Operator> = o.coins.iter().map(|&c| coin(c)).collect();
            for (&c, &m) in o.coins.iter().zip(&o.results) {
                factors.push(pvms[c as usize].get(&Symbol::Int(m as i64)).unwrap().clone());
            }
            Ok((o.to_symbol(), tensor_all(&factors)?))
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementOperatorSet::new(elements)
}

pub use crate::chsh::Method;

/// `P(c, m) = [1 - m1 m2 m3 cos(pi (c1 + c2 + c3) / 2)] / 64`, or the same from operators.
pub fn ghz_distribution(method: Method) -> Result<FiniteProbabilitySpace> {
    match method {
        Method::Analytic => FiniteProbabilitySpace::from_pairs(GhzOutcome::all().into_iter().map(|o| {
            let numerator = 1 - (o.result_product() * cos_half_pi(o.coin_sum())) as i32;
            (o.to_symbol(), numerator as f64 / 64.0)
        })),
        Method::LinearAlgebra => build_ghz_operators()?.outcome_distribution(&initial_state()),
    }
}

/// `H(c1, c2, c3)`.
pub fn coin_event(coins: [u8; 3]) -> Event {
    Event::new(
        GhzOutcome::all()
            .into_iter()
            .filter(|o| o.coins == coins)
            .map(GhzOutcome::to_symbol),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstrainedTriple {
    pub required_product: i8,
    pub trials: u64,
    pub violations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FreeTriple {
    pub trials: u64,
    pub mean_product: f64,
    pub standard_error: f64,
}

/// Per-triple tallies of a sampled world, keyed by triple name (`"011"` etc).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub perfect_correlation: BTreeMap<String, ConstrainedTriple>,
    pub free_triples: BTreeMap<String, FreeTriple>,
    pub total_violations: u64,
}

/// Conditions `world` on every coin triple and tallies `m1 m2 m3`.
pub fn tally_ghz(world: &WorldPrefix) -> Result<CorrelationReport> {
    let mut perfect_correlation = BTreeMap::new();
    let mut free_triples = BTreeMap::new();
    for coins in coin_triples() {
        let cell = condition_seq(world, &coin_event(coins))?;
        let products: Vec<i8> = cell
            .iter()
            .map(|s| GhzOutcome::from_symbol(s).map(GhzOutcome::result_product))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::InvalidArgument("world is not over GHZ outcomes".into()))?;
        let trials = products.len() as u64;
        let name = triple_name(coins);
        match forced_product(coins) {
            Some(required) => {
                let violations = products.iter().filter(|&&p| p != required).count() as u64;
                perfect_correlation.insert(name, ConstrainedTriple { required_product: required, trials, violations });
            }
            None => {
                if trials == 0 {
                    return Err(Error::EmptyCell(name));
                }
                let sum: i64 = products.iter().map(|&p| p as i64).sum();
                free_triples.insert(
                    name,
                    FreeTriple {
                        trials,
                        mean_product: sum as f64 / trials as f64,
                        // Products are +-1 with mean 0, so the variance is 1.
                        standard_error: 1.0 / (trials as f64).sqrt(),
                    },
                );
            }
        }
    }
    let total_violations = perfect_correlation.values().map(|t| t.violations).sum();
    Ok(CorrelationReport { perfect_correlation, free_triples, total_violations })
}

#[derive(Clone, Debug)]
pub struct GhzRun {
    pub distribution: FiniteProbabilitySpace,
    pub world: WorldPrefix,
    pub report: CorrelationReport,
}

/// Samples a world and checks the perfect correlations. Any violation is an error.
pub fn run_ghz(trials: usize, seed: u64) -> Result<GhzRun> {
    let run = sample_ghz(trials, seed, SamplingOptions::default())?;
    if let Some((name, t)) = run.report.perfect_correlation.iter().find(|(_, t)| t.violations > 0) {
        return Err(Error::PerfectCorrelationViolated { triple: name.clone(), violations: t.violations as usize });
    }
    Ok(run)
}

/// Samples and tallies without failing on violations.
pub fn sample_ghz(trials: usize, seed: u64, sampling: SamplingOptions) -> Result<GhzRun> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("GHZ runs need at least {MIN_TRIALS} trials, got {trials}")));
    }
    let distribution = ghz_distribution(Method::Analytic)?;
    let world = sample_world_with(&distribution, trials, seed, sampling)?;
    let report = tally_ghz(&world)?;
    Ok(GhzRun { distribution, world, report })
}

/// Pre-existing values `(m1_0, m1_1, m2_0, m2_1, m3_0, m3_1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct LhvAssignment(pub [i8; 6]);

impl LhvAssignment {
    /// All 64 assignments, lexicographic with `+1` first.
    pub fn all() -> Vec<LhvAssignment> {
        (0..64u8)
            .map(|code| LhvAssignment(std::array::from_fn(|i| if code >> (5 - i) & 1 == 0 { 1 } else { -1 })))
            .collect()
    }

    /// Value of observable `A^party_setting` (party 0-based).
    pub fn value(self, party: usize, setting: u8) -> i8 {
        self.0[2 * party + setting as usize]
    }

    pub fn to_symbol(self) -> Symbol {
        Symbol::Tuple(self.0.iter().map(|&v| Symbol::Int(v as i64)).collect())
    }

    pub fn from_symbol(sym: &Symbol) -> Option<Self> {
        let values = sym.as_int_tuple()?;
        if values.len() != 6 || values.iter().any(|v| v.abs() != 1) {
            return None;
        }
        Some(LhvAssignment(std::array::from_fn(|i| values[i] as i8)))
    }

    pub fn satisfies(self, constraint: &Constraint) -> bool {
        let product: i8 = (0..3).map(|p| self.value(p, constraint.coins[p])).product();
        product == constraint.required_product
    }
}

/// A perfect correlation that a hidden-variable model would have to reproduce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Constraint {
    pub coins: [u8; 3],
    pub required_product: i8,
}

impl Constraint {
    pub fn name(&self) -> String {
        triple_name(self.coins)
    }
}

/// The four constraints, in witness-table order: `011, 101, 110` (`+1`), then `000` (`-1`).
pub fn constraints() -> [Constraint; 4] {
    [
        Constraint { coins: [0, 1, 1], required_product: 1 },
        Constraint { coins: [1, 0, 1], required_product: 1 },
        Constraint { coins: [1, 1, 0], required_product: 1 },
        Constraint { coins: [0, 0, 0], required_product: -1 },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub assignment: [i8; 6],
    /// First failed constraint in [`constraints`] order; `None` if all hold.
    pub failed: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnumerationReport {
    pub assignments: usize,
    pub satisfying_count: usize,
    pub plus_constraints_only_count: usize,
    pub per_constraint_counts: BTreeMap<String, usize>,
    pub witnesses: Vec<Witness>,
}

/// Checks all 64 assignments against the four constraints.
pub fn lhv_ghz_enumerate() -> EnumerationReport {
    let cs = constraints();
    let all = LhvAssignment::all();
    let mut per_constraint_counts = BTreeMap::new();
    for c in &cs {
        per_constraint_counts.insert(c.name(), all.iter().filter(|a| a.satisfies(c)).count());
    }
    let witnesses: Vec<Witness> = all
        .iter()
        .map(|a| Witness { assignment: a.0, failed: cs.iter().find(|c| !a.satisfies(c)).map(Constraint::name) })
        .collect();
    EnumerationReport {
        assignments: all.len(),
        satisfying_count: witnesses.iter().filter(|w| w.failed.is_none()).count(),
        plus_constraints_only_count: all.iter().filter(|a| cs[..3].iter().all(|c| a.satisfies(c))).count(),
        per_constraint_counts,
        witnesses,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintMass {
    pub satisfying_mass: f64,
    pub violation_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub per_constraint: BTreeMap<String, ConstraintMass>,
    /// Mass on assignments that satisfy all four constraints.
    pub all_constraints_mass: f64,
    /// Mass on assignments violating at least one constraint.
    pub any_violation_mass: f64,
    /// Whether some probability space could give zero violation mass everywhere.
    pub feasible: bool,
}

/// Violation mass of each constraint under `p` on `{+1,-1}^6`.
///
/// Zero violation mass for all four constraints would put all weight on
/// assignments satisfying all of them; there are none, so only the zero
/// vector qualifies and no probability space does.
pub fn lhv_ghz_feasibility(p: &FiniteProbabilitySpace) -> Result<FeasibilityReport> {
    let weighted = p
        .iter()
        .map(|(sym, w)| {
            LhvAssignment::from_symbol(sym)
                .map(|a| (a, w))
                .ok_or_else(|| Error::InvalidSpace(format!("symbol {sym} is not a 6-tuple of +1/-1")))
        })
        .collect::<Result<Vec<_>>>()?;
    let cs = constraints();
    let mut per_constraint = BTreeMap::new();
    for c in &cs {
        let satisfying_mass: f64 = weighted.iter().filter(|(a, _)| a.satisfies(c)).map(|(_, w)| w).sum();
        let violation_mass: f64 = weighted.iter().filter(|(a, _)| !a.satisfies(c)).map(|(_, w)| w).sum();
        per_constraint.insert(c.name(), ConstraintMass { satisfying_mass, violation_mass });
    }
    let all_constraints_mass: f64 = weighted
        .iter()
        .filter(|(a, _)| cs.iter().all(|c| a.satisfies(c)))
        .map(|(_, w)| w)
        .sum();
    let any_violation_mass: f64 = weighted
        .iter()
        .filter(|(a, _)| cs.iter().any(|c| !a.satisfies(c)))
        .map(|(_, w)| w)
        .sum();
    Ok(FeasibilityReport {
        per_constraint,
        all_constraints_mass,
        any_violation_mass,
        feasible: lhv_ghz_enumerate().satisfying_count > 0,
    })
}

/// Uniform space on `{+1,-1}^6`.
pub fn uniform_assignments() -> FiniteProbabilitySpace {
    FiniteProbabilitySpace::uniform(LhvAssignment::all().into_iter().map(LhvAssignment::to_symbol).collect()).unwrap()
}

/// `<GHZ| A^1_{c1} (x) A^2_{c2} (x) A^3_{c3} |GHZ>`, exactly `-cos(pi (c1+c2+c3)/2)`.
pub fn triple_correlation(coins: [u8; 3]) -> Result<f64> {
    let obs = observables();
    let op = tensor_all(&coins.map(|c| obs[c as usize].clone()))?;
    crate::linalg::expectation(&StateVector::ghz(), &op)
}
