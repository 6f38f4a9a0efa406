//! Finite probability spaces and the Bernoulli measure of finite strings.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total weight of a probability space.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Default cap on the size of a product alphabet.
pub const DEFAULT_PRODUCT_CAP: usize = 1_000_000;

/// An alphabet element. Tuples nest, so product alphabets are themselves symbols.
///
/// JSON form: integers, strings, and arrays for tuples.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Symbol {
    Int(i64),
    Text(String),
    Tuple(Vec<Symbol>),
}

impl Symbol {
    pub fn tuple<I: IntoIterator<Item = Symbol>>(items: I) -> Self {
        Symbol::Tuple(items.into_iter().collect())
    }

    pub fn ints(values: &[i64]) -> Self {
        Symbol::Tuple(values.iter().copied().map(Symbol::Int).collect())
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Symbol::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_tuple(&self) -> Option<&[Symbol]> {
        match self {
            Symbol::Tuple(items) => Some(items),
            _ => None,
        }
    }

    /// Flat integer tuple, if this is a tuple of integers.
    pub fn as_int_tuple(&self) -> Option<Vec<i64>> {
        self.as_tuple()?.iter().map(Symbol::as_int).collect()
    }
}

impl From<i64> for Symbol {
    fn from(v: i64) -> Self {
        Symbol::Int(v)
    }
}

impl From<&str> for Symbol {
    fn from(v: &str) -> Self {
        Symbol::Text(v.to_owned())
    }
}

/// Compact token: integers in decimal, text verbatim, tuples as `(a;b;c)`.
impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Int(v) => write!(f, "{v}"),
            Symbol::Text(s) => f.write_str(s),
            Symbol::Tuple(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl std::str::FromStr for Symbol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parser = TokenParser { src: s.as_bytes(), pos: 0 };
        let sym = parser.symbol()?;
        if parser.pos != s.len() {
            return Err(Error::Parse(format!("trailing input in token {s:?}")));
        }
        Ok(sym)
    }
}

struct TokenParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl TokenParser<'_> {
    fn symbol(&mut self) -> Result<Symbol> {
        if self.src.get(self.pos) == Some(&b'(') {
            self.pos += 1;
            let mut items = Vec::new();
            if self.src.get(self.pos) == Some(&b')') {
                self.pos += 1;
                return Ok(Symbol::Tuple(items));
            }
            loop {
                items.push(self.symbol()?);
                match self.src.get(self.pos) {
                    Some(b';') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        return Ok(Symbol::Tuple(items));
                    }
                    _ => return Err(Error::Parse("unterminated tuple token".into())),
                }
            }
        }
        let start = self.pos;
        while let Some(&b) = self.src.get(self.pos) {
            if matches!(b, b';' | b')' | b'(' | b',') || b.is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).map_err(|e| Error::Parse(e.to_string()))?;
        if text.is_empty() {
            return Err(Error::Parse("empty token".into()));
        }
        Ok(match text.parse::<i64>() {
            Ok(v) => Symbol::Int(v),
            Err(_) => Symbol::Text(text.to_owned()),
        })
    }
}

/// A normalized, non-negative weight function on an ordered alphabet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct FiniteProbabilitySpace {
    alphabet: Vec<Symbol>,
    weights: Vec<f64>,
    #[serde(skip)]
    index: HashMap<Symbol, usize>,
}

#[derive(Serialize, Deserialize)]
struct RawSpace {
    alphabet: Vec<Symbol>,
    weights: Vec<f64>,
}

impl TryFrom<RawSpace> for FiniteProbabilitySpace {
    type Error = Error;
    fn try_from(raw: RawSpace) -> Result<Self> {
        Self::new(raw.alphabet, raw.weights)
    }
}

impl From<FiniteProbabilitySpace> for RawSpace {
    fn from(fps: FiniteProbabilitySpace) -> Self {
        RawSpace { alphabet: fps.alphabet, weights: fps.weights }
    }
}

impl FiniteProbabilitySpace {
    pub fn new(alphabet: Vec<Symbol>, weights: Vec<f64>) -> Result<Self> {
        if alphabet.is_empty() {
            return Err(Error::InvalidSpace("alphabet is empty".into()));
        }
        if alphabet.len() != weights.len() {
            return Err(Error::InvalidSpace(format!(
                "{} symbols but {} weights",
                alphabet.len(),
                weights.len()
            )));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidSpace(format!("weight {w} of symbol {} is not a probability", alphabet[i])));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidSpace(format!("weights sum to {total}, not 1")));
        }
        let mut index = HashMap::with_capacity(alphabet.len());
        for (i, sym) in alphabet.iter().enumerate() {
            if index.insert(sym.clone(), i).is_some() {
                return Err(Error::InvalidSpace(format!("duplicate symbol {sym}")));
            }
        }
        Ok(Self { alphabet, weights, index })
    }

    pub fn from_pairs<I: IntoIterator<Item = (Symbol, f64)>>(pairs: I) -> Result<Self> {
        let (alphabet, weights) = pairs.into_iter().unzip();
        Self::new(alphabet, weights)
    }

    pub fn uniform(alphabet: Vec<Symbol>) -> Result<Self> {
        let n = alphabet.len().max(1);
        Self::new(alphabet, vec![1.0 / n as f64; n])
    }

    /// The fair coin `U` on `{0, 1}`.
    pub fn fair_coin() -> Self {
        Self::uniform(vec![Symbol::Int(0), Symbol::Int(1)]).unwrap()
    }

    pub fn alphabet(&self) -> &[Symbol] {
        &self.alphabet
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphabet.is_empty()
    }

    pub fn index_of(&self, sym: &Symbol) -> Option<usize> {
        self.index.get(sym).copied()
    }

    pub fn weight(&self, sym: &Symbol) -> Result<f64> {
        self.index_of(sym)
            .map(|i| self.weights[i])
            .ok_or_else(|| Error::ForeignSymbol(sym.clone()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, f64)> {
        self.alphabet.iter().zip(self.weights.iter().copied())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.alphabet != other.alphabet {
            return Err(Error::InvalidArgument("probability spaces have different alphabets".into()));
        }
        Ok(self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A subset of an alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    members: Vec<Symbol>,
}

impl Event {
    pub fn new<I: IntoIterator<Item = Symbol>>(members: I) -> Self {
        let mut members: Vec<Symbol> = members.into_iter().collect();
        members.sort();
        members.dedup();
        Self { members }
    }

    pub fn empty() -> Self {
        Self { members: Vec::new() }
    }

    /// The members of `fps`'s alphabet selected by `pred`.
    pub fn from_predicate(fps: &FiniteProbabilitySpace, pred: impl Fn(&Symbol) -> bool) -> Self {
        Self::new(fps.alphabet().iter().filter(|s| pred(s)).cloned())
    }

    pub fn members(&self) -> &[Symbol] {
        &self.members
    }

    pub fn contains(&self, sym: &Symbol) -> bool {
        self.members.binary_search(sym).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Errors on the first member outside `alphabet`.
    pub fn validate(&self, fps: &FiniteProbabilitySpace) -> Result<()> {
        match self.members.iter().find(|s| fps.index_of(s).is_none()) {
            Some(s) => Err(Error::ForeignSymbol(s.clone())),
            None => Ok(()),
        }
    }
}

/// `P(A) = sum_{a in A} P(a)`.
pub fn event_prob(fps: &FiniteProbabilitySpace, event: &Event) -> Result<f64> {
    event.members().iter().map(|s| fps.weight(s)).sum()
}

/// Product space on `K`-tuples, alphabet in lexicographic order of the factor orderings.
pub fn product(spaces: &[FiniteProbabilitySpace]) -> Result<FiniteProbabilitySpace> {
    product_with_cap(spaces, DEFAULT_PRODUCT_CAP)
}

pub fn product_with_cap(spaces: &[FiniteProbabilitySpace], cap: usize) -> Result<FiniteProbabilitySpace> {
    if spaces.is_empty() {
        return Err(Error::InvalidArgument("product of zero spaces".into()));
    }
    let size = spaces
        .iter()
        .try_fold(1usize, |acc, s| acc.checked_mul(s.len()))
        .unwrap_or(usize::MAX);
    if size > cap {
        return Err(Error::ProductTooLarge { size, cap });
    }
    let mut alphabet = Vec::with_capacity(size);
    let mut weights = Vec::with_capacity(size);
    let mut digits = vec![0usize; spaces.len()];
    for _ in 0..size {
        alphabet.push(Symbol::Tuple(
            spaces.iter().zip(&digits).map(|(s, &d)| s.alphabet[d].clone()).collect(),
        ));
        weights.push(spaces.iter().zip(&digits).map(|(s, &d)| s.weights[d]).product());
        // Odometer increment, last factor fastest.
        for (digit, space) in digits.iter_mut().zip(spaces).rev() {
            *digit += 1;
            if *digit < space.len() {
                break;
            }
            *digit = 0;
        }
    }
    // Products of normalized factors can drift by a few ulps per factor.
    FiniteProbabilitySpace::new(alphabet, weights)
}

/// `P_B(a) = P(a)/P(B)` on the members of `B`, in the parent's alphabet order.
pub fn condition(fps: &FiniteProbabilitySpace, event: &Event) -> Result<FiniteProbabilitySpace> {
    event.validate(fps)?;
    let mass = event_prob(fps, event)?;
    if mass <= 0.0 {
        return Err(Error::ZeroProbabilityEvent);
    }
    let (alphabet, weights) = fps
        .iter()
        .filter(|(s, _)| event.contains(s))
        .map(|(s, w)| (s.clone(), w / mass))
        .unzip();
    FiniteProbabilitySpace::new(alphabet, weights)
}

/// Which coordinate of a pair alphabet a marginal keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Marginal of a space on pairs `(m, l)`.
pub fn marginal(fps: &FiniteProbabilitySpace, side: Side) -> Result<FiniteProbabilitySpace> {
    if let Some(bad) = fps.alphabet().iter().find(|s| s.as_tuple().map(<[Symbol]>::len) != Some(2)) {
        return Err(Error::NotTuple(bad.clone(), 1));
    }
    project(
        fps,
        match side {
            Side::Left => 0,
            Side::Right => 1,
        },
    )
}

/// Marginal onto coordinate `index` of a tuple alphabet. The result keeps
/// first-appearance order of the projected values.
pub fn project(fps: &FiniteProbabilitySpace, index: usize) -> Result<FiniteProbabilitySpace> {
    let mut alphabet: Vec<Symbol> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut seen: HashMap<&Symbol, usize> = HashMap::new();
    for (sym, w) in fps.iter() {
        let coord = sym
            .as_tuple()
            .and_then(|t| t.get(index))
            .ok_or_else(|| Error::NotTuple(sym.clone(), index))?;
        match seen.get(coord) {
            Some(&i) => weights[i] += w,
            None => {
                seen.insert(coord, alphabet.len());
                alphabet.push(coord.clone());
                weights.push(w);
            }
        }
    }
    FiniteProbabilitySpace::new(alphabet, weights)
}

/// `P(s_1) P(s_2) ... P(s_n)`; the empty string has probability 1.
pub fn string_prob(fps: &FiniteProbabilitySpace, string: &[Symbol]) -> Result<f64> {
    string.iter().map(|s| fps.weight(s)).product()
}

/// Measure of the union of cylinders over a prefix-free set of strings.
pub fn prefix_free_measure(fps: &FiniteProbabilitySpace, strings: &[Vec<Symbol>]) -> Result<f64> {
    check_prefix_free(strings)?;
    strings.iter().map(|s| string_prob(fps, s)).sum()
}

fn check_prefix_free(strings: &[Vec<Symbol>]) -> Result<()> {
    let mut sorted: Vec<&Vec<Symbol>> = strings.iter().collect();
    sorted.sort();
    // In lexicographic order a string's extensions follow it immediately.
    for pair in sorted.windows(2) {
        if pair[1].starts_with(pair[0]) {
            return Err(Error::NotPrefixFree(pair[0].clone(), pair[1].clone()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym(v: i64) -> Symbol {
        Symbol::Int(v)
    }

    fn text(s: &str) -> Vec<Symbol> {
        s.chars().map(|c| Symbol::Text(c.to_string())).collect()
    }

    fn bits(s: &str) -> Vec<Symbol> {
        s.chars().map(|c| sym(c.to_digit(2).unwrap() as i64)).collect()
    }

    #[test]
    fn validation() {
        assert!(FiniteProbabilitySpace::new(vec![], vec![]).is_err());
        assert!(FiniteProbabilitySpace::new(vec![sym(0), sym(0)], vec![0.5, 0.5]).is_err());
        assert!(FiniteProbabilitySpace::new(vec![sym(0), sym(1)], vec![0.5, 0.6]).is_err());
        assert!(FiniteProbabilitySpace::new(vec![sym(0), sym(1)], vec![-0.5, 1.5]).is_err());
        assert!(FiniteProbabilitySpace::new(vec![sym(0), sym(1)], vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn empty_event_has_probability_zero() {
        assert_eq!(event_prob(&FiniteProbabilitySpace::fair_coin(), &Event::empty()).unwrap(), 0.0);
    }

    #[test]
    fn foreign_symbols_rejected() {
        let coin = FiniteProbabilitySpace::fair_coin();
        assert!(matches!(event_prob(&coin, &Event::new([sym(2)])), Err(Error::ForeignSymbol(_))));
        assert!(matches!(string_prob(&coin, &[sym(0), sym(5)]), Err(Error::ForeignSymbol(_))));
    }

    #[test]
    fn product_of_fair_coins() {
        let coin = FiniteProbabilitySpace::fair_coin();
        let uu = product(&[coin.clone(), coin]).unwrap();
        assert_eq!(
            uu.alphabet(),
            &[Symbol::ints(&[0, 0]), Symbol::ints(&[0, 1]), Symbol::ints(&[1, 0]), Symbol::ints(&[1, 1])]
        );
        assert!(uu.weights().iter().all(|&w| w == 0.25));
    }

    #[test]
    fn product_cap() {
        let coin = FiniteProbabilitySpace::fair_coin();
        let err = product_with_cap(&vec![coin; 4], 8).unwrap_err();
        assert!(matches!(err, Error::ProductTooLarge { size: 16, cap: 8 }));
    }

    #[test]
    fn uniform_conditioned_on_half() {
        let fps = FiniteProbabilitySpace::uniform((0..4).map(sym).collect()).unwrap();
        let cond = condition(&fps, &Event::new([sym(1), sym(3)])).unwrap();
        assert_eq!(cond.alphabet(), &[sym(1), sym(3)]);
        assert_eq!(cond.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn conditioning_on_null_event_fails() {
        let fps = FiniteProbabilitySpace::new(vec![sym(0), sym(1)], vec![1.0, 0.0]).unwrap();
        assert!(matches!(condition(&fps, &Event::new([sym(1)])), Err(Error::ZeroProbabilityEvent)));
    }

    #[test]
    fn hand_built_joint_marginal() {
        let joint = FiniteProbabilitySpace::from_pairs([
            (Symbol::ints(&[0, 0]), 0.1),
            (Symbol::ints(&[0, 1]), 0.2),
            (Symbol::ints(&[1, 0]), 0.3),
            (Symbol::ints(&[1, 1]), 0.4),
        ])
        .unwrap();
        let left = marginal(&joint, Side::Left).unwrap();
        assert_eq!(left.alphabet(), &[sym(0), sym(1)]);
        assert!((left.weights()[0] - 0.3).abs() < 1e-15);
        assert!((left.weights()[1] - 0.7).abs() < 1e-15);
        let right = marginal(&joint, Side::Right).unwrap();
        assert!((right.weights()[0] - 0.4).abs() < 1e-15);
        assert!((right.weights()[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn marginal_rejects_non_pairs() {
        let coin = FiniteProbabilitySpace::fair_coin();
        assert!(matches!(marginal(&coin, Side::Left), Err(Error::NotTuple(..))));
        let triple = product(&[coin.clone(), coin.clone(), coin]).unwrap();
        assert!(marginal(&triple, Side::Left).is_err());
        assert!(project(&triple, 2).is_ok());
    }

    #[test]
    fn string_probabilities() {
        let coin = FiniteProbabilitySpace::fair_coin();
        assert_eq!(string_prob(&coin, &[]).unwrap(), 1.0);
        assert_eq!(string_prob(&coin, &bits("01")).unwrap(), 0.25);
        let p = FiniteProbabilitySpace::new(vec!["a".into(), "b".into()], vec![0.2, 0.8]).unwrap();
        assert!((string_prob(&p, &text("aab")).unwrap() - 0.032).abs() < 1e-15);
    }

    #[test]
    fn prefix_free_measures() {
        let coin = FiniteProbabilitySpace::fair_coin();
        assert_eq!(prefix_free_measure(&coin, &[bits("0"), bits("1")]).unwrap(), 1.0);
        assert_eq!(prefix_free_measure(&coin, &[bits("0"), bits("10"), bits("11")]).unwrap(), 1.0);
        let p = FiniteProbabilitySpace::new(vec![sym(0), sym(1)], vec![0.3, 0.7]).unwrap();
        let m = prefix_free_measure(&p, &[bits("00"), bits("01")]).unwrap();
        assert!((m - 0.3).abs() < 1e-15);
    }

    #[test]
    fn prefix_violation_detected() {
        let coin = FiniteProbabilitySpace::fair_coin();
        let err = prefix_free_measure(&coin, &[bits("10"), bits("1"), bits("0")]).unwrap_err();
        assert!(matches!(err, Error::NotPrefixFree(a, b) if a == bits("1") && b == bits("10")));
        // Duplicates are prefixes of each other too.
        assert!(prefix_free_measure(&coin, &[bits("0"), bits("0")]).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let h = FiniteProbabilitySpace::from_pairs([(Symbol::ints(&[1, -1]), 0.25), ("x".into(), 0.75)]).unwrap();
        let json = h.to_json().unwrap();
        assert_eq!(json, r#"{"alphabet":[[1,-1],"x"],"weights":[0.25,0.75]}"#);
        assert_eq!(FiniteProbabilitySpace::from_json(&json).unwrap(), h);
        assert!(FiniteProbabilitySpace::from_json(r#"{"alphabet":[0,1],"weights":[0.5,0.4]}"#).is_err());
    }

    #[test]
    fn token_round_trip() {
        let s = Symbol::tuple([Symbol::ints(&[1, -1, 1, 1]), sym(0), "ab".into()]);
        assert_eq!(s.to_string(), "((1;-1;1;1);0;ab)");
        assert_eq!(s.to_string().parse::<Symbol>().unwrap(), s);
        assert!("(1;2".parse::<Symbol>().is_err());
    }

    fn arb_space(max_len: usize) -> impl Strategy<Value = FiniteProbabilitySpace> {
        prop::collection::vec(0.0f64..1.0, 1..=max_len).prop_filter_map("positive mass", |raw| {
            let total: f64 = raw.iter().sum();
            (total > 1e-6).then(|| {
                let alphabet = (0..raw.len() as i64).map(Symbol::Int).collect();
                FiniteProbabilitySpace::new(alphabet, raw.iter().map(|w| w / total).collect()).ok()
            })?
        })
    }

    proptest! {
        #[test]
        fn conditioning_normalizes(fps in arb_space(8), mask in prop::collection::vec(any::<bool>(), 8)) {
            let event = Event::from_predicate(&fps, |s| mask[s.as_int().unwrap() as usize]);
            match condition(&fps, &event) {
                Ok(c) => prop_assert!((c.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12),
                Err(Error::ZeroProbabilityEvent) => prop_assert!(event_prob(&fps, &event).unwrap() == 0.0),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }

        #[test]
        fn marginal_of_product_is_factor(p1 in arb_space(6), p2 in arb_space(6)) {
            let joint = product(&[p1.clone(), p2.clone()]).unwrap();
            prop_assert!(marginal(&joint, Side::Left).unwrap().max_abs_diff(&p1).unwrap() <= 1e-12);
            prop_assert!(marginal(&joint, Side::Right).unwrap().max_abs_diff(&p2).unwrap() <= 1e-12);
        }

        #[test]
        fn event_prob_is_additive(fps in arb_space(8), labels in prop::collection::vec(0u8..3, 8)) {
            let a = Event::from_predicate(&fps, |s| labels[s.as_int().unwrap() as usize] == 0);
            let b = Event::from_predicate(&fps, |s| labels[s.as_int().unwrap() as usize] == 1);
            let union = Event::new(a.members().iter().chain(b.members()).cloned());
            let lhs = event_prob(&fps, &union).unwrap();
            let rhs = event_prob(&fps, &a).unwrap() + event_prob(&fps, &b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn full_depth_cover_has_measure_one(fps in arb_space(4), depth in 1usize..5) {
            let n = fps.len();
            let strings: Vec<Vec<Symbol>> = (0..n.pow(depth as u32))
                .map(|mut code| {
                    let mut s = vec![Symbol::Int(0); depth];
                    for slot in s.iter_mut().rev() {
                        *slot = fps.alphabet()[code % n].clone();
                        code /= n;
                    }
                    s
                })
                .collect();
            prop_assert!((prefix_free_measure(&fps, &strings).unwrap() - 1.0).abs() <= 1e-12);
        }
    }
}
