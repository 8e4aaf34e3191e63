//! Symbol words, cylinder enumeration and the projection from codes to
//! points of the limit set.

use std::fmt;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::IFSystem;

/// Largest number of words [`cylinders_at_depth`] will materialize.
pub const ENUMERATION_CAP: u64 = 100_000_000;

/// A finite alphabet `{0, …, size-1}` with at least two symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    size: usize,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidAlphabet(size));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Builds a word after checking every symbol against the alphabet.
    pub fn word(&self, symbols: &[u32]) -> Result<Word> {
        let w = Word::from(symbols.to_vec());
        self.check(&w)?;
        Ok(w)
    }

    pub fn check(&self, word: &Word) -> Result<()> {
        match word.symbols.iter().find(|&&s| s as usize >= self.size) {
            Some(&symbol) => Err(Error::InvalidWord {
                symbol,
                alphabet_size: self.size,
            }),
            None => Ok(()),
        }
    }

    /// Number of words of length `n`, refusing anything above the cap.
    pub fn count_at_depth(&self, n: usize) -> Result<usize> {
        let requested = (self.size as f64).powi(n as i32);
        if requested > ENUMERATION_CAP as f64 {
            return Err(Error::Capacity {
                requested,
                cap: ENUMERATION_CAP,
            });
        }
        Ok(self.size.pow(n as u32))
    }

    /// The `index`-th word of length `n` in lexicographic order.
    pub fn word_at(&self, n: usize, mut index: usize) -> Word {
        let mut symbols = vec![0u32; n];
        for slot in symbols.iter_mut().rev() {
            *slot = (index % self.size) as u32;
            index /= self.size;
        }
        Word { symbols }
    }

    /// Lexicographic rank of `word` among the words of its length.
    pub fn index_of(&self, word: &Word) -> usize {
        word.symbols
            .iter()
            .fold(0usize, |acc, &s| acc * self.size + s as usize)
    }

    /// Uniformly random word of length `n`.
    pub fn random_word<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Word {
        Word {
            symbols: (0..n).map(|_| rng.random_range(0..self.size as u32)).collect(),
        }
    }
}

/// A finite word `i = (i_1, …, i_n)`; the empty word acts as the identity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word {
    symbols: Vec<u32>,
}

impl Word {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    /// First `n` symbols (`i|_n`).
    pub fn prefix(&self, n: usize) -> Word {
        Word {
            symbols: self.symbols[..n.min(self.len())].to_vec(),
        }
    }

    pub fn starts_with(&self, prefix: &Word) -> bool {
        self.symbols.starts_with(&prefix.symbols)
    }

    /// Juxtaposition `i,j` without alphabet checks.
    pub fn join(&self, other: &Word) -> Word {
        let mut symbols = Vec::with_capacity(self.len() + other.len());
        symbols.extend_from_slice(&self.symbols);
        symbols.extend_from_slice(&other.symbols);
        Word { symbols }
    }

    /// Extends the word to length `n` by appending zeros, i.e. reads `n`
    /// symbols of the eventually-constant code `i,0,0,…`.
    pub fn padded(&self, n: usize) -> Word {
        let mut symbols = self.symbols.clone();
        symbols.resize(n.max(self.len()), 0);
        Word { symbols }
    }

    /// Dot-separated rendering used in CSV exports.
    pub fn dotted(&self) -> String {
        self.symbols
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(".")
    }
}

impl From<Vec<u32>> for Word {
    fn from(symbols: Vec<u32>) -> Self {
        Word { symbols }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            write!(f, "ε")
        } else {
            write!(f, "({})", self.dotted().replace('.', ","))
        }
    }
}

/// Concatenates two words over `alphabet`.
pub fn concat(alphabet: &Alphabet, i: &Word, j: &Word) -> Result<Word> {
    alphabet.check(i)?;
    alphabet.check(j)?;
    Ok(i.join(j))
}

/// All `size^n` words of length `n` in lexicographic order.
pub fn cylinders_at_depth(alphabet: &Alphabet, n: usize) -> Result<Vec<Word>> {
    let count = alphabet.count_at_depth(n)?;
    Ok((0..count).map(|k| alphabet.word_at(n, k)).collect())
}

/// A point of the cylinder `X_word = φ_word(X)` together with a radius that
/// bounds the distance to every point of the cylinder.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedPoint {
    pub word: Word,
    pub point: DVector<f64>,
    pub radius_bound: f64,
}

/// Image of the seed-set anchor under `φ_word`, with radius `D·‖φ_word′‖`.
pub fn project(system: &IFSystem, word: &Word) -> Result<CodedPoint> {
    if word.is_empty() {
        return Err(Error::Precondition("project needs a nonempty word".into()));
    }
    system.alphabet().check(word)?;
    let point = system.word_value_at_anchor(word)?;
    Ok(CodedPoint {
        word: word.clone(),
        point,
        radius_bound: system.diameter_constant() * system.sup_norm(word)?,
    })
}

/// The point `π(word,0,0,…)` of the limit set: `φ_word` applied to the fixed
/// point of `φ_0`.
pub fn limit_point(system: &IFSystem, word: &Word) -> Result<DVector<f64>> {
    system.alphabet().check(word)?;
    system.eval_word(word, system.fixed_point())
}
