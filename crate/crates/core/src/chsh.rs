//! CHSH protocol: two coin-selected measurements on the singlet, the exact
//! outcome distribution, sampled worlds, and local-hidden-variable contrasts.
//!
//! Alice measures `R = X` on coin 0 and `Q = Z` on coin 1; Bob measures
//! `S = -(X + Z)/sqrt 2` on coin 0 and `T = (Z - X)/sqrt 2` on coin 1. Note
//! that `R` and `Q` are the reverse of the textbook (Nielsen & Chuang 2.227,
//! 2.228) assignment; with this choice the three positive correlations are
//! `<RS>`, `<QS>`, `<RT>` and the negative one is `<QT>`.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::battery::{run_admissible, BatteryConfig, BatteryReport};
use crate::error::{Error, Result};
use crate::linalg::{involutory_pvm, tensor_all, MeasurementOperatorSet, Operator, StateVector};
use crate::prob::{condition, product, Event, FiniteProbabilitySpace, Symbol};
use crate::worlds::{condition_seq, sample_world_with, SamplingOptions, WorldPrefix};

/// Smallest accepted number of trials for a sampled run.
pub const MIN_TRIALS: usize = 4000;

/// Default width of statistical tolerances, in standard errors.
pub const DEFAULT_SIGMAS: f64 = 4.0;

/// `2 sqrt 2`.
pub const QUANTUM_S_VALUE: f64 = 2.0 * SQRT_2;

/// Largest `S` reachable by a local-hidden-variable model.
pub const CLASSICAL_BOUND: f64 = 2.0;

/// Quantum conditional averages `<RS>, <QS>, <RT>, <QT>`.
pub const QUANTUM_AVERAGES: Averages<f64> =
    Averages { rs: FRAC_1_SQRT_2, qs: FRAC_1_SQRT_2, rt: FRAC_1_SQRT_2, qt: -FRAC_1_SQRT_2 };

/// One trial record `(c, d, m, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChshOutcome {
    pub c: u8,
    pub d: u8,
    pub m: i8,
    pub n: i8,
}

const SIGNS: [i8; 2] = [1, -1];

impl ChshOutcome {
    /// All 16 outcomes, lexicographic in `(c, d, m, n)` with `+1` before `-1`.
    pub fn all() -> Vec<ChshOutcome> {
        let mut out = Vec::with_capacity(16);
        for c in 0..2 {
            for d in 0..2 {
                for m in SIGNS {
                    for n in SIGNS {
                        out.push(ChshOutcome { c, d, m, n });
                    }
                }
            }
        }
        out
    }

    pub fn to_symbol(self) -> Symbol {
        Symbol::ints(&[self.c as i64, self.d as i64, self.m as i64, self.n as i64])
    }

    pub fn from_symbol(sym: &Symbol) -> Option<Self> {
        match sym.as_int_tuple()?.as_slice() {
            &[c @ 0..=1, d @ 0..=1, m @ (-1 | 1), n @ (-1 | 1)] => {
                Some(ChshOutcome { c: c as u8, d: d as u8, m: m as i8, n: n as i8 })
            }
            _ => None,
        }
    }

    /// `(-1)^{cd}` by integer parity.
    pub fn coin_sign(self) -> i8 {
        if self.c & self.d == 1 {
            -1
        } else {
            1
        }
    }
}

/// The four coin cells, in the order `RS, QS, RT, QT`.
pub const CELLS: [(u8, u8); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

pub fn cell_name(c: u8, d: u8) -> &'static str {
    match (c, d) {
        (0, 0) => "rs",
        (1, 0) => "qs",
        (0, 1) => "rt",
        _ => "qt",
    }
}

/// A value per conditional average.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Averages<T> {
    pub rs: T,
    pub qs: T,
    pub rt: T,
    pub qt: T,
}

impl<T: Copy> Averages<T> {
    pub fn from_cells(values: [T; 4]) -> Self {
        let [rs, qs, rt, qt] = values;
        Self { rs, qs, rt, qt }
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.rs, self.qs, self.rt, self.qt]
    }
}

impl Averages<f64> {
    /// `<RS> + <QS> + <RT> - <QT>`.
    pub fn s_value(&self) -> f64 {
        self.rs + self.qs + self.rt - self.qt
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub sigmas: f64,
    pub averages: Averages<f64>,
    pub s_value: f64,
    /// True when `--tolerance` replaced the sigma-derived values.
    pub overridden: bool,
}

/// Conditional averages plus sampling metadata when they are empirical.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionalAverageReport {
    pub averages: Averages<f64>,
    pub s_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<Averages<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<Averages<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_standard_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

impl ConditionalAverageReport {
    pub fn exact(averages: Averages<f64>) -> Self {
        Self {
            s_value: averages.s_value(),
            averages,
            counts: None,
            standard_errors: None,
            s_standard_error: None,
            tolerances: None,
        }
    }

    /// Empirical report whose standard errors come from the per-cell variance
    /// `1 - E[mn]^2` of the reference model.
    fn empirical(averages: Averages<f64>, counts: Averages<u64>, reference: Averages<f64>) -> Self {
        let se: [f64; 4] = std::array::from_fn(|i| {
            let e = reference.to_array()[i];
            ((1.0 - e * e).max(0.0) / counts.to_array()[i] as f64).sqrt()
        });
        let s_se = se.iter().map(|s| s * s).sum::<f64>().sqrt();
        Self {
            s_value: averages.s_value(),
            averages,
            counts: Some(counts),
            standard_errors: Some(Averages::from_cells(se)),
            s_standard_error: Some(s_se),
            tolerances: Some(Tolerances {
                sigmas: DEFAULT_SIGMAS,
                averages: Averages::from_cells(se.map(|s| DEFAULT_SIGMAS * s)),
                s_value: DEFAULT_SIGMAS * s_se,
                overridden: false,
            }),
        }
    }

    /// Replaces the tolerances with `k` standard errors.
    pub fn with_sigmas(mut self, k: f64) -> Self {
        if let (Some(se), Some(s_se)) = (self.standard_errors, self.s_standard_error) {
            self.tolerances = Some(Tolerances {
                sigmas: k,
                averages: Averages::from_cells(se.to_array().map(|s| k * s)),
                s_value: k * s_se,
                overridden: false,
            });
        }
        self
    }

    /// Replaces the tolerances by an absolute value for every average and for `S`.
    pub fn with_absolute_tolerance(mut self, tol: f64) -> Self {
        let sigmas = self.tolerances.as_ref().map(|t| t.sigmas).unwrap_or(DEFAULT_SIGMAS);
        self.tolerances = Some(Tolerances {
            sigmas,
            averages: Averages::from_cells([tol; 4]),
            s_value: tol,
            overridden: true,
        });
        self
    }
}

fn coin_projector(c: u8) -> Operator {
    Operator::projector(&StateVector::basis(2, c as usize))
}

/// `R, Q` for Alice and `S, T` for Bob, indexed by coin value.
pub fn observables() -> ([Operator; 2], [Operator; 2]) {
    let x = Operator::pauli_x();
    let z = Operator::pauli_z();
    let s = (&x + &z).scale_real(-FRAC_1_SQRT_2);
    let t = (&z - &x).scale_real(FRAC_1_SQRT_2);
    ([x, z], [s, t])
}

/// `|+> (x) |+> (x) |beta_11>` on coin A, coin B, qubit A, qubit B.
pub fn initial_state() -> StateVector {
    tensor_all(&[StateVector::plus(), StateVector::plus(), StateVector::bell_singlet()]).unwrap()
}

/// The 16 operators `E_c (x) E_d (x) E^A_{c,m} (x) E^B_{d,n}`, labeled by outcome.
pub fn build_chsh_operators() -> Result<MeasurementOperatorSet> {
    let (alice, bob) = observables();
    let alice_pvms = [involutory_pvm(&alice[0])?, involutory_pvm(&alice[1])?];
    let bob_pvms = [involutory_pvm(&bob[0])?, involutory_pvm(&bob[1])?];
    let elements = ChshOutcome::all()
        .into_iter()
        .map(|o| {
            let ea = alice_pvms[o.c as usize].get(&Symbol::Int(o.m as i64)).unwrap().clone();
            let eb = bob_pvms[o.d as usize].get(&Symbol::Int(o.n as i64)).unwrap().clone();
            let op = tensor_all(&[coin_projector(o.c), coin_projector(o.d), ea, eb])?;
            Ok((o.to_symbol(), op))
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementOperatorSet::new(elements)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// `P(c,d,m,n) = [1 + (-1)^{cd} m n / sqrt 2] / 16`.
    Analytic,
    /// `<Psi_init| M^dag M |Psi_init>` from the operator set.
    LinearAlgebra,
}

pub fn chsh_distribution(method: Method) -> Result<FiniteProbabilitySpace> {
    match method {
        Method::Analytic => FiniteProbabilitySpace::from_pairs(ChshOutcome::all().into_iter().map(|o| {
            let sign = (o.coin_sign() * o.m * o.n) as f64;
            (o.to_symbol(), (1.0 + sign * FRAC_1_SQRT_2) / 16.0)
        })),
        Method::LinearAlgebra => build_chsh_operators()?.outcome_distribution(&initial_state()),
    }
}

/// `H(c, d)`: all outcomes with coins `(c, d)`.
pub fn coin_event(c: u8, d: u8) -> Event {
    Event::new(
        ChshOutcome::all()
            .into_iter()
            .filter(|o| o.c == c && o.d == d)
            .map(ChshOutcome::to_symbol),
    )
}

/// Result of a sampled quantum run.
#[derive(Clone, Debug)]
pub struct ChshRun {
    pub distribution: FiniteProbabilitySpace,
    pub world: WorldPrefix,
    pub report: ConditionalAverageReport,
    /// Battery of each conditioned cell against its conditional space, in `CELLS` order.
    pub battery: Vec<CellBattery>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellBattery {
    pub cell: String,
    pub length: usize,
    pub report: BatteryReport,
    /// Block lengths skipped because the cell was too short.
    pub skipped_block_lens: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub sampling: SamplingOptions,
    pub battery: BatteryConfig,
}


/// Samples `trials` records, conditions on each coin cell, and averages `m n`.
pub fn run_chsh(trials: usize, seed: u64) -> Result<ChshRun> {
    run_chsh_with(trials, seed, &RunOptions::default())
}

pub fn run_chsh_with(trials: usize, seed: u64, options: &RunOptions) -> Result<ChshRun> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("CHSH runs need at least {MIN_TRIALS} trials, got {trials}")));
    }
    let distribution = chsh_distribution(Method::Analytic)?;
    let world = sample_world_with(&distribution, trials, seed, options.sampling)?;
    let mut sums = [0i64; 4];
    let mut counts = [0u64; 4];
    let mut battery = Vec::with_capacity(4);
    for (i, &(c, d)) in CELLS.iter().enumerate() {
        let event = coin_event(c, d);
        let cell = condition_seq(&world, &event)?;
        if cell.is_empty() {
            return Err(Error::EmptyCell(cell_name(c, d).into()));
        }
        for sym in cell.iter() {
            let o = ChshOutcome::from_symbol(sym).expect("CHSH alphabet");
            sums[i] += (o.m * o.n) as i64;
        }
        counts[i] = cell.len() as u64;
        let conditional = condition(&distribution, &event)?;
        let (report, skipped) = run_admissible(&cell, &conditional, &options.battery)?;
        battery.push(CellBattery {
            cell: cell_name(c, d).into(),
            length: cell.len(),
            report,
            skipped_block_lens: skipped,
        });
    }
    let averages = Averages::from_cells(std::array::from_fn(|i| sums[i] as f64 / counts[i] as f64));
    let report = ConditionalAverageReport::empirical(averages, Averages::from_cells(counts), QUANTUM_AVERAGES);
    Ok(ChshRun { distribution, world, report, battery })
}

/// A local-hidden-variable assignment `(r, q, s, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HiddenValues {
    pub r: i8,
    pub q: i8,
    pub s: i8,
    pub t: i8,
}

impl HiddenValues {
    /// All 16 assignments, lexicographic with `+1` first.
    pub fn all() -> Vec<HiddenValues> {
        let mut out = Vec::with_capacity(16);
        for r in SIGNS {
            for q in SIGNS {
                for s in SIGNS {
                    for t in SIGNS {
                        out.push(HiddenValues { r, q, s, t });
                    }
                }
            }
        }
        out
    }

    pub fn to_symbol(self) -> Symbol {
        Symbol::ints(&[self.r as i64, self.q as i64, self.s as i64, self.t as i64])
    }

    pub fn from_symbol(sym: &Symbol) -> Option<Self> {
        match sym.as_int_tuple()?.as_slice() {
            &[r, q, s, t] if [r, q, s, t].iter().all(|v| v.abs() == 1) => {
                Some(HiddenValues { r: r as i8, q: q as i8, s: s as i8, t: t as i8 })
            }
            _ => None,
        }
    }

    /// The product revealed in coin cell `(c, d)`.
    pub fn product(self, c: u8, d: u8) -> i8 {
        let alice = if c == 0 { self.r } else { self.q };
        let bob = if d == 0 { self.s } else { self.t };
        alice * bob
    }

    /// `rs + qs + rt - qt`, always `+2` or `-2`.
    pub fn s_value(self) -> i8 {
        self.r * self.s + self.q * self.s + self.r * self.t - self.q * self.t
    }
}

fn parse_hidden(h: &FiniteProbabilitySpace) -> Result<Vec<(HiddenValues, f64)>> {
    h.iter()
        .map(|(sym, w)| {
            HiddenValues::from_symbol(sym)
                .map(|v| (v, w))
                .ok_or_else(|| Error::InvalidSpace(format!("symbol {sym} is not an (r,q,s,t) tuple of +1/-1")))
        })
        .collect()
}

/// `<RS> = sum H(r,q,s,t) r s` and likewise for the other three averages.
pub fn lhv_chsh_averages(h: &FiniteProbabilitySpace) -> Result<ConditionalAverageReport> {
    let values = parse_hidden(h)?;
    let averages = Averages::from_cells(std::array::from_fn(|i| {
        let (c, d) = CELLS[i];
        values.iter().map(|(v, w)| w * v.product(c, d) as f64).sum()
    }));
    Ok(ConditionalAverageReport::exact(averages))
}

#[derive(Clone, Debug)]
pub struct LhvChshSimulation {
    pub exact: ConditionalAverageReport,
    pub empirical: ConditionalAverageReport,
    pub world: WorldPrefix,
}

/// `G(c, d)` in the space `H x U x U` with symbols `((r,q,s,t), c, d)`.
pub fn hidden_coin_event(joint: &FiniteProbabilitySpace, c: u8, d: u8) -> Event {
    let (c, d) = (Symbol::Int(c as i64), Symbol::Int(d as i64));
    Event::from_predicate(joint, |s| {
        let t = s.as_tuple().expect("product symbol");
        t[1] == c && t[2] == d
    })
}

/// Samples `H x U x U`, conditions on each `G(c, d)`, and averages the revealed products.
pub fn lhv_chsh_simulate(
    h: &FiniteProbabilitySpace,
    trials: usize,
    seed: u64,
    sampling: SamplingOptions,
) -> Result<LhvChshSimulation> {
    let exact = lhv_chsh_averages(h)?;
    let coin = FiniteProbabilitySpace::fair_coin();
    let joint = product(&[h.clone(), coin.clone(), coin])?;
    let world = sample_world_with(&joint, trials, seed, sampling)?;
    let mut sums = [0i64; 4];
    let mut counts = [0u64; 4];
    for (i, &(c, d)) in CELLS.iter().enumerate() {
        let cell = condition_seq(&world, &hidden_coin_event(&joint, c, d))?;
        if cell.is_empty() {
            return Err(Error::EmptyCell(cell_name(c, d).into()));
        }
        for sym in cell.iter() {
            let hidden = HiddenValues::from_symbol(&sym.as_tuple().expect("product symbol")[0]).unwrap();
            sums[i] += hidden.product(c, d) as i64;
        }
        counts[i] = cell.len() as u64;
    }
    let averages = Averages::from_cells(std::array::from_fn(|i| sums[i] as f64 / counts[i] as f64));
    let empirical = ConditionalAverageReport::empirical(averages, Averages::from_cells(counts), exact.averages);
    Ok(LhvChshSimulation { exact, empirical, world })
}

/// Point mass on one hidden-value assignment.
pub fn vertex_space(v: HiddenValues) -> FiniteProbabilitySpace {
    FiniteProbabilitySpace::from_pairs(HiddenValues::all().into_iter().map(|u| (u.to_symbol(), if u == v { 1.0 } else { 0.0 })))
        .unwrap()
}

/// `H` drawn uniformly from the simplex over `{+1,-1}^4` (normalized exponentials).
pub fn random_hidden_space(rng: &mut ChaCha8Rng) -> FiniteProbabilitySpace {
    let raw: Vec<f64> = (0..16).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    FiniteProbabilitySpace::new(
        HiddenValues::all().into_iter().map(HiddenValues::to_symbol).collect(),
        raw.into_iter().map(|x| x / total).collect(),
    )
    .expect("normalized exponential draws")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub seed: u64,
    pub random_spaces: usize,
    pub sampler: &'static str,
    pub max_s_random: f64,
    pub min_s_random: f64,
    pub vertex_max: f64,
    pub vertex_min: f64,
    pub max_s_value: f64,
    pub bound: f64,
    pub within_bound: bool,
}

/// Evaluates `S` for `count` random hidden-variable spaces and all 16 vertices.
pub fn lhv_chsh_sweep(count: usize, seed: u64) -> Result<SweepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_r = f64::NEG_INFINITY;
    let mut min_r = f64::INFINITY;
    for _ in 0..count {
        let s = lhv_chsh_averages(&random_hidden_space(&mut rng))?.s_value;
        max_r = max_r.max(s);
        min_r = min_r.min(s);
    }
    let mut vmax = f64::NEG_INFINITY;
    let mut vmin = f64::INFINITY;
    for v in HiddenValues::all() {
        let s = lhv_chsh_averages(&vertex_space(v))?.s_value;
        vmax = vmax.max(s);
        vmin = vmin.min(s);
    }
    let max_s = max_r.max(vmax);
    let min_s = min_r.min(vmin);
    Ok(SweepReport {
        seed,
        random_spaces: count,
        sampler: "normalized-exponential",
        max_s_random: if count == 0 { vmax } else { max_r },
        min_s_random: if count == 0 { vmin } else { min_r },
        vertex_max: vmax,
        vertex_min: vmin,
        max_s_value: max_s,
        bound: CLASSICAL_BOUND,
        within_bound: max_s <= CLASSICAL_BOUND + 1e-12 && min_s >= -CLASSICAL_BOUND - 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{check_completeness, TOLERANCE};
    use crate::prob::{event_prob, project, Side};
    use proptest::prelude::*;

    #[test]
    fn operator_set_shape() {
        let set = build_chsh_operators().unwrap();
        assert_eq!(set.len(), 16);
        assert_eq!(set.dim(), 16);
        assert!(check_completeness(&set) <= TOLERANCE);
        for (label, op) in set.elements() {
            assert!(op.idempotency_deviation() <= TOLERANCE, "{label}");
            assert!(op.is_hermitian(TOLERANCE));
        }
    }

    #[test]
    fn analytic_values() {
        let p = chsh_distribution(Method::Analytic).unwrap();
        let w = |o: [i64; 4]| p.weight(&Symbol::ints(&o)).unwrap();
        assert!((w([0, 0, 1, 1]) - (1.0 + FRAC_1_SQRT_2) / 16.0).abs() < 1e-16);
        assert!((w([0, 0, 1, 1]) - 0.106_694_174).abs() < 1e-9);
        assert!((w([1, 1, 1, 1]) - (1.0 - FRAC_1_SQRT_2) / 16.0).abs() < 1e-16);
        for (c, d) in CELLS {
            assert!((event_prob(&p, &coin_event(c, d)).unwrap() - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn methods_agree() {
        let a = chsh_distribution(Method::Analytic).unwrap();
        let l = chsh_distribution(Method::LinearAlgebra).unwrap();
        assert!(a.max_abs_diff(&l).unwrap() <= 1e-12);
    }

    #[test]
    fn coin_marginal_is_uniform() {
        let p = chsh_distribution(Method::Analytic).unwrap();
        // Rekey (c,d,m,n) as ((c,d),(m,n)) and take the left marginal.
        let keyed = FiniteProbabilitySpace::from_pairs(p.iter().map(|(s, w)| {
            let t = s.as_tuple().unwrap();
            (Symbol::tuple([Symbol::tuple(t[..2].to_vec()), Symbol::tuple(t[2..].to_vec())]), w)
        }))
        .unwrap();
        let left = crate::prob::marginal(&keyed, Side::Left).unwrap();
        assert_eq!(left.len(), 4);
        assert!(left.weights().iter().all(|w| (w - 0.25).abs() <= 1e-12));
        let c_only = project(&p, 0).unwrap();
        assert!(c_only.weights().iter().all(|w| (w - 0.5).abs() <= 1e-12));
    }

    #[test]
    fn conditional_space_matches_closed_form() {
        let p = chsh_distribution(Method::Analytic).unwrap();
        for (c, d) in CELLS {
            let cond = condition(&p, &coin_event(c, d)).unwrap();
            for (sym, w) in cond.iter() {
                let o = ChshOutcome::from_symbol(sym).unwrap();
                let expected = 0.25 * (1.0 + (o.coin_sign() * o.m * o.n) as f64 * FRAC_1_SQRT_2);
                assert!((w - expected).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn run_rejects_small_trials() {
        assert!(matches!(run_chsh(10, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn quantum_run_near_two_root_two() {
        let run = run_chsh(200_000, 42).unwrap();
        let r = &run.report;
        assert!((r.s_value - QUANTUM_S_VALUE).abs() <= 0.025, "S = {}", r.s_value);
        assert_eq!(r.s_value, r.averages.rs + r.averages.qs + r.averages.rt - r.averages.qt);
        let counts = r.counts.unwrap();
        assert_eq!(counts.to_array().iter().sum::<u64>(), 200_000);
        // sigma of each average is sqrt(0.5 / N).
        let se = r.standard_errors.unwrap();
        assert!((se.rs - (0.5 / counts.rs as f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn vertex_and_uniform_spaces() {
        let all_plus = HiddenValues { r: 1, q: 1, s: 1, t: 1 };
        let r = lhv_chsh_averages(&vertex_space(all_plus)).unwrap();
        assert_eq!(r.averages.to_array(), [1.0; 4]);
        assert_eq!(r.s_value, 2.0);
        let uniform = FiniteProbabilitySpace::uniform(HiddenValues::all().into_iter().map(HiddenValues::to_symbol).collect()).unwrap();
        let r = lhv_chsh_averages(&uniform).unwrap();
        assert_eq!(r.averages.to_array(), [0.0; 4]);
        assert_eq!(r.s_value, 0.0);
    }

    #[test]
    fn every_vertex_gives_plus_or_minus_two() {
        for v in HiddenValues::all() {
            assert_eq!(v.s_value().abs(), 2);
            assert_eq!(lhv_chsh_averages(&vertex_space(v)).unwrap().s_value, v.s_value() as f64);
        }
    }

    #[test]
    fn malformed_hidden_space_rejected() {
        let bad = FiniteProbabilitySpace::from_pairs([(Symbol::ints(&[1, 1, 1]), 1.0)]).unwrap();
        assert!(matches!(lhv_chsh_averages(&bad), Err(Error::InvalidSpace(_))));
        let bad = FiniteProbabilitySpace::from_pairs([(Symbol::ints(&[1, 1, 1, 2]), 1.0)]).unwrap();
        assert!(lhv_chsh_averages(&bad).is_err());
    }

    #[test]
    fn point_mass_simulation_is_exact() {
        let v = HiddenValues { r: 1, q: -1, s: 1, t: -1 };
        let sim = lhv_chsh_simulate(&vertex_space(v), 4000, 5, SamplingOptions::default()).unwrap();
        assert_eq!(sim.empirical.averages, sim.exact.averages);
    }

    #[test]
    fn uniform_simulation_near_zero() {
        let uniform = FiniteProbabilitySpace::uniform(HiddenValues::all().into_iter().map(HiddenValues::to_symbol).collect()).unwrap();
        let sim = lhv_chsh_simulate(&uniform, 100_000, 99, SamplingOptions::default()).unwrap();
        assert!(sim.empirical.s_value.abs() <= 0.05, "{}", sim.empirical.s_value);
    }

    #[test]
    fn sweep_stays_below_bound() {
        let report = lhv_chsh_sweep(1000, 3).unwrap();
        assert!(report.max_s_value <= 2.0 + 1e-12);
        assert!((report.vertex_max - 2.0).abs() <= 1e-12);
        assert!(report.within_bound);
    }

    proptest! {
        #[test]
        fn lhv_s_value_is_bounded(raw in prop::collection::vec(0.0f64..1.0, 16)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-9);
            let h = FiniteProbabilitySpace::new(
                HiddenValues::all().into_iter().map(HiddenValues::to_symbol).collect(),
                raw.iter().map(|w| w / total).collect(),
            ).unwrap();
            let s = lhv_chsh_averages(&h).unwrap().s_value;
            prop_assert!((-2.0 - 1e-12..=2.0 + 1e-12).contains(&s));
        }
    }
}
