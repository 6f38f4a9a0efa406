//! Finite prefixes of worlds: seeded sampling from a Bernoulli measure and the
//! sequence operators (conditioning, coordinate projection, zipping).
//!
//! Sampling is counter-based. Draw `i` of a world is a pure function of
//! `(seed, i)`: the ChaCha8 keystream seeded from `seed`, read at word
//! position `2 i`. Blocks can therefore be generated on any number of threads
//! and concatenated without changing a single symbol.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{product_with_cap, Event, FiniteProbabilitySpace, Symbol, DEFAULT_PRODUCT_CAP};

/// Identifier recorded in the provenance of sampled worlds.
pub const GENERATOR_ID: &str = "chacha8-counter-v1";

/// Draws per parallel block.
pub const BLOCK_LEN: usize = 1 << 16;

const SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Sampled { generator: String, seed: u64, length: usize },
    Imported { length: usize },
    Conditioned { length: usize, parent: Box<Provenance> },
    Projected { length: usize, index: usize, parent: Box<Provenance> },
    Zipped { length: usize, parents: Vec<Provenance> },
    Prefix { length: usize, parent: Box<Provenance> },
}

impl Provenance {
    pub fn length(&self) -> usize {
        match self {
            Provenance::Sampled { length, .. }
            | Provenance::Imported { length }
            | Provenance::Conditioned { length, .. }
            | Provenance::Projected { length, .. }
            | Provenance::Zipped { length, .. }
            | Provenance::Prefix { length, .. } => *length,
        }
    }
}

/// A finite prefix of a world over an explicit alphabet.
#[derive(Clone, Debug)]
pub struct WorldPrefix {
    alphabet: Arc<[Symbol]>,
    symbols: Vec<u32>,
    provenance: Provenance,
}

impl PartialEq for WorldPrefix {
    /// Provenance is metadata and does not take part in equality.
    fn eq(&self, other: &Self) -> bool {
        self.alphabet == other.alphabet && self.symbols == other.symbols
    }
}

#[derive(Serialize, Deserialize)]
struct WorldFile {
    schema: u32,
    alphabet: Vec<Symbol>,
    symbols: Vec<u32>,
    provenance: Provenance,
}

impl WorldPrefix {
    /// Builds a world from explicit symbols; every symbol must be in `alphabet`.
    pub fn from_symbols(alphabet: Vec<Symbol>, symbols: &[Symbol]) -> Result<Self> {
        let index: HashMap<&Symbol, u32> = alphabet.iter().enumerate().map(|(i, s)| (s, i as u32)).collect();
        if index.len() != alphabet.len() {
            return Err(Error::InvalidArgument("world alphabet has duplicate symbols".into()));
        }
        let symbols = symbols
            .iter()
            .map(|s| index.get(s).copied().ok_or_else(|| Error::ForeignSymbol(s.clone())))
            .collect::<Result<Vec<_>>>()?;
        let provenance = Provenance::Imported { length: symbols.len() };
        Ok(Self { alphabet: alphabet.into(), symbols, provenance })
    }

    pub fn alphabet(&self) -> &[Symbol] {
        &self.alphabet
    }

    /// Alphabet indices of the symbols, in order.
    pub fn indices(&self) -> &[u32] {
        &self.symbols
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn get(&self, n: usize) -> Option<&Symbol> {
        self.symbols.get(n).map(|&i| &self.alphabet[i as usize])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Symbol> + '_ {
        self.symbols.iter().map(|&i| &self.alphabet[i as usize])
    }

    pub fn to_symbols(&self) -> Vec<Symbol> {
        self.iter().cloned().collect()
    }

    /// The first `n` symbols (all of them if `n` exceeds the length).
    pub fn prefix(&self, n: usize) -> Self {
        let symbols = self.symbols[..n.min(self.len())].to_vec();
        Self {
            alphabet: self.alphabet.clone(),
            provenance: Provenance::Prefix { length: symbols.len(), parent: Box::new(self.provenance.clone()) },
            symbols,
        }
    }

    /// Maps each world alphabet index to the index of the same symbol in `fps`.
    pub fn alphabet_map(&self, fps: &FiniteProbabilitySpace) -> Result<Vec<usize>> {
        self.alphabet
            .iter()
            .map(|s| fps.index_of(s).ok_or_else(|| Error::ForeignSymbol(s.clone())))
            .collect()
    }

    /// One token per symbol, comma-separated, no newline.
    pub fn to_compact(&self) -> String {
        let tokens: Vec<String> = self.alphabet.iter().map(Symbol::to_string).collect();
        let mut out = String::with_capacity(self.len() * 4);
        for (n, &i) in self.symbols.iter().enumerate() {
            if n > 0 {
                out.push(',');
            }
            out.push_str(&tokens[i as usize]);
        }
        out
    }

    /// Parses [`WorldPrefix::to_compact`] output against a known alphabet.
    pub fn from_compact(text: &str, alphabet: Vec<Symbol>) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Self::from_symbols(alphabet, &[]);
        }
        let symbols = split_top_level(text)
            .into_iter()
            .map(|tok| tok.trim().parse::<Symbol>())
            .collect::<Result<Vec<_>>>()?;
        Self::from_symbols(alphabet, &symbols)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&WorldFile {
            schema: SCHEMA,
            alphabet: self.alphabet.to_vec(),
            symbols: self.symbols.clone(),
            provenance: self.provenance.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WorldFile = serde_json::from_str(text)?;
        if file.schema != SCHEMA {
            return Err(Error::Parse(format!("unsupported world schema {}", file.schema)));
        }
        let n = file.alphabet.len() as u32;
        if let Some(bad) = file.symbols.iter().find(|&&i| i >= n) {
            return Err(Error::Parse(format!("symbol index {bad} outside alphabet of {n}")));
        }
        if file.provenance.length() != file.symbols.len() {
            return Err(Error::Parse(format!(
                "provenance declares length {} but {} symbols are present",
                file.provenance.length(),
                file.symbols.len()
            )));
        }
        Ok(Self { alphabet: file.alphabet.into(), symbols: file.symbols, provenance: file.provenance })
    }
}

fn split_top_level(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, b) in text.bytes().enumerate() {
        match b {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b',' if depth == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts
}

/// Inverse-CDF sampler over a space's explicit alphabet order.
///
/// Cumulative boundaries are half-open: a uniform draw `u` selects the first
/// symbol whose cumulative weight exceeds `u`, so a draw landing exactly on a
/// boundary goes to the later symbol and zero-weight symbols are unreachable.
#[derive(Clone, Debug)]
struct InverseCdf {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl InverseCdf {
    fn new(fps: &FiniteProbabilitySpace) -> Self {
        let mut acc = 0.0;
        let cumulative = fps
            .weights()
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let last_positive = fps.weights().iter().rposition(|&w| w > 0.0).expect("normalized space has mass");
        Self { cumulative, last_positive }
    }

    fn pick(&self, u: f64) -> usize {
        let k = self.cumulative.partition_point(|&c| c <= u);
        // u can exceed a cumulative total that rounded below 1.
        if k >= self.cumulative.len() {
            self.last_positive
        } else {
            k
        }
    }
}

fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn fill_block(seed: u64, start: usize, cdf: &InverseCdf, out: &mut [u32]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(2 * start as u128);
    for slot in out {
        *slot = cdf.pick(unit_interval(rng.next_u64())) as u32;
    }
}

/// Sampling options. Output never depends on `threads`.
#[derive(Clone, Copy, Debug)]
pub struct SamplingOptions {
    pub threads: usize,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self { threads: 1 }
    }
}

/// i.i.d. draws from `fps`, deterministic in `(fps, length, seed)`.
pub fn sample_world(fps: &FiniteProbabilitySpace, length: usize, seed: u64) -> Result<WorldPrefix> {
    sample_world_with(fps, length, seed, SamplingOptions::default())
}

pub fn sample_world_with(
    fps: &FiniteProbabilitySpace,
    length: usize,
    seed: u64,
    options: SamplingOptions,
) -> Result<WorldPrefix> {
    if length == 0 {
        return Err(Error::InvalidArgument("world length must be at least 1".into()));
    }
    let cdf = InverseCdf::new(fps);
    let mut symbols = vec![0u32; length];
    let threads = options.threads.max(1);
    if threads == 1 {
        for (b, chunk) in symbols.chunks_mut(BLOCK_LEN).enumerate() {
            fill_block(seed, b * BLOCK_LEN, &cdf, chunk);
        }
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {threads} threads: {e}")))?;
        pool.install(|| {
            symbols
                .par_chunks_mut(BLOCK_LEN)
                .enumerate()
                .for_each(|(b, chunk)| fill_block(seed, b * BLOCK_LEN, &cdf, chunk));
        });
    }
    Ok(WorldPrefix {
        alphabet: fps.alphabet().to_vec().into(),
        symbols,
        provenance: Provenance::Sampled { generator: GENERATOR_ID.into(), seed, length },
    })
}

/// Deletes every symbol outside `event`, keeping order. The result's alphabet
/// is the event's members in the parent's alphabet order.
pub fn condition_seq(world: &WorldPrefix, event: &Event) -> Result<WorldPrefix> {
    let known: HashMap<&Symbol, usize> = world.alphabet.iter().enumerate().map(|(i, s)| (s, i)).collect();
    if let Some(bad) = event.members().iter().find(|s| !known.contains_key(s)) {
        return Err(Error::ForeignSymbol(bad.clone()));
    }
    let mut remap = vec![u32::MAX; world.alphabet.len()];
    let mut alphabet = Vec::with_capacity(event.len());
    for (i, sym) in world.alphabet.iter().enumerate() {
        if event.contains(sym) {
            remap[i] = alphabet.len() as u32;
            alphabet.push(sym.clone());
        }
    }
    let symbols: Vec<u32> = world
        .symbols
        .iter()
        .map(|&i| remap[i as usize])
        .filter(|&i| i != u32::MAX)
        .collect();
    Ok(WorldPrefix {
        alphabet: alphabet.into(),
        provenance: Provenance::Conditioned { length: symbols.len(), parent: Box::new(world.provenance.clone()) },
        symbols,
    })
}

/// Replaces each tuple symbol by its coordinate `index`. The result's alphabet
/// lists projected values in first-appearance order over the parent alphabet.
pub fn project_seq(world: &WorldPrefix, index: usize) -> Result<WorldPrefix> {
    let mut alphabet: Vec<Symbol> = Vec::new();
    let mut seen: HashMap<&Symbol, u32> = HashMap::new();
    let mut remap = Vec::with_capacity(world.alphabet.len());
    for sym in world.alphabet.iter() {
        let coord = sym
            .as_tuple()
            .and_then(|t| t.get(index))
            .ok_or_else(|| Error::NotTuple(sym.clone(), index))?;
        let id = *seen.entry(coord).or_insert_with(|| {
            alphabet.push(coord.clone());
            alphabet.len() as u32 - 1
        });
        remap.push(id);
    }
    let symbols: Vec<u32> = world.symbols.iter().map(|&i| remap[i as usize]).collect();
    Ok(WorldPrefix {
        alphabet: alphabet.into(),
        provenance: Provenance::Projected {
            length: symbols.len(),
            index,
            parent: Box::new(world.provenance.clone()),
        },
        symbols,
    })
}

/// Elementwise tuples. The alphabet is the Cartesian product of the input
/// alphabets in lexicographic order, matching [`crate::prob::product`].
pub fn zip_seqs(worlds: &[WorldPrefix]) -> Result<WorldPrefix> {
    let first = worlds
        .first()
        .ok_or_else(|| Error::InvalidArgument("zip of zero sequences".into()))?;
    if let Some(w) = worlds.iter().find(|w| w.len() != first.len()) {
        return Err(Error::LengthMismatch(first.len(), w.len()));
    }
    // Uniform weights stand in for the factor spaces to reuse the product ordering.
    let factors = worlds
        .iter()
        .map(|w| FiniteProbabilitySpace::uniform(w.alphabet.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let alphabet = product_with_cap(&factors, DEFAULT_PRODUCT_CAP)?.alphabet().to_vec();
    let radices: Vec<u32> = worlds.iter().map(|w| w.alphabet.len() as u32).collect();
    let symbols = (0..first.len())
        .map(|n| {
            worlds
                .iter()
                .zip(&radices)
                .fold(0u32, |acc, (w, &r)| acc * r + w.symbols[n])
        })
        .collect();
    Ok(WorldPrefix {
        alphabet: alphabet.into(),
        symbols,
        provenance: Provenance::Zipped {
            length: first.len(),
            parents: worlds.iter().map(|w| w.provenance.clone()).collect(),
        },
    })
}

/// Occurrence counts `N_a` for every alphabet symbol.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalStats {
    pub alphabet: Vec<Symbol>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl EmpiricalStats {
    pub fn count(&self, sym: &Symbol) -> u64 {
        self.alphabet
            .iter()
            .position(|s| s == sym)
            .map(|i| self.counts[i])
            .unwrap_or(0)
    }

    pub fn frequency(&self, sym: &Symbol) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(sym) as f64 / self.total as f64
        }
    }
}

pub fn empirical(world: &WorldPrefix) -> EmpiricalStats {
    let mut counts = vec![0u64; world.alphabet.len()];
    for &i in &world.symbols {
        counts[i as usize] += 1;
    }
    EmpiricalStats { alphabet: world.alphabet.to_vec(), counts, total: world.len() as u64 }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LlnRow {
    pub symbol: Symbol,
    pub count: u64,
    pub empirical: f64,
    pub expected: f64,
    /// `(N - L p) / sqrt(L p (1 - p))`; infinite when a variance-free cell is missed.
    #[serde(serialize_with = "serialize_z")]
    pub z: f64,
    pub flagged: bool,
}

fn serialize_z<S: serde::Serializer>(z: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if z.is_finite() {
        s.serialize_f64(*z)
    } else if *z > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Per-symbol law-of-large-numbers check at a finite length.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LlnReport {
    pub length: u64,
    pub z_threshold: f64,
    pub rows: Vec<LlnRow>,
    pub flagged: usize,
}

/// Compares empirical frequencies with `fps` using binomial z-scores.
///
/// A symbol with expected frequency 0 (or 1) has no variance: its z-score is 0
/// when the count matches exactly and infinite otherwise.
pub fn lln_report(world: &WorldPrefix, fps: &FiniteProbabilitySpace, z_threshold: f64) -> Result<LlnReport> {
    let map = world.alphabet_map(fps)?;
    let stats = empirical(world);
    let mut counts = vec![0u64; fps.len()];
    for (wi, &c) in stats.counts.iter().enumerate() {
        counts[map[wi]] += c;
    }
    let length = stats.total;
    let l = length as f64;
    let rows: Vec<LlnRow> = fps
        .iter()
        .zip(counts)
        .map(|((sym, p), count)| {
            let mean = l * p;
            let var = l * p * (1.0 - p);
            let dev = count as f64 - mean;
            let z = if var > 0.0 {
                dev / var.sqrt()
            } else if count as f64 == mean {
                0.0
            } else {
                dev.signum() * f64::INFINITY
            };
            LlnRow {
                symbol: sym.clone(),
                count,
                empirical: if length == 0 { 0.0 } else { count as f64 / l },
                expected: p,
                z,
                flagged: z.abs() > z_threshold,
            }
        })
        .collect();
    let flagged = rows.iter().filter(|r| r.flagged).count();
    Ok(LlnReport { length, z_threshold, rows, flagged })
}
