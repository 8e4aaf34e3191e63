//! Closed-form word compositions for similarity systems and the parallel
//! depth-first enumeration used by every table builder.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::maps::Similarity;
use crate::symbolic::Word;

/// `φ_w = x ↦ scale · orth · x + shift` for a word of similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct WordSimilarity {
    pub scale: f64,
    pub orth: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl WordSimilarity {
    pub fn identity(d: usize) -> Self {
        Self {
            scale: 1.0,
            orth: DMatrix::identity(d, d),
            shift: DVector::zeros(d),
        }
    }

    /// `φ_w ∘ φ_j`, i.e. the map of the word `w·j`.
    pub fn then(&self, map: &Similarity) -> Self {
        Self {
            scale: self.scale * map.scale(),
            orth: &self.orth * map.orthogonal(),
            shift: (&self.orth * map.translation()) * self.scale + &self.shift,
        }
    }

    pub fn of_word(sims: &[Similarity], word: &Word) -> Self {
        let d = sims[0].dim();
        word.symbols()
            .iter()
            .fold(Self::identity(d), |acc, &s| acc.then(&sims[s as usize]))
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.orth * x) * self.scale + &self.shift
    }

    pub fn linear(&self) -> DMatrix<f64> {
        &self.orth * self.scale
    }
}

/// Visits every word of length `n` in lexicographic order and collects
/// `f(word, φ_word)`. Top-level subtrees run in parallel; results are
/// concatenated in order so the output does not depend on scheduling.
pub fn map_word_similarities<T, F>(sims: &[Similarity], n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&Word, &WordSimilarity) -> T + Sync,
{
    let root = WordSimilarity::identity(sims[0].dim());
    map_subtree_similarities(sims, &Word::empty(), &root, n, f)
}

/// As [`map_word_similarities`], over the words `prefix·j` with `|j| = n`;
/// `root` must be the map of `prefix`.
pub fn map_subtree_similarities<T, F>(
    sims: &[Similarity],
    prefix: &Word,
    root: &WordSimilarity,
    n: usize,
    f: F,
) -> Vec<T>
where
    T: Send,
    F: Fn(&Word, &WordSimilarity) -> T + Sync,
{
    let target = prefix.len() + n;
    if n == 0 {
        return vec![f(prefix, root)];
    }
    // Split at a level with enough subtrees to feed the pool.
    let split = split_depth(sims.len(), n);
    let mut prefixes: Vec<(Vec<u32>, WordSimilarity)> = vec![(prefix.symbols().to_vec(), root.clone())];
    for _ in 0..split {
        prefixes = prefixes
            .into_iter()
            .flat_map(|(syms, ws)| {
                (0..sims.len() as u32)
                    .map(|s| {
                        let mut next = syms.clone();
                        next.push(s);
                        let m = ws.then(&sims[s as usize]);
                        (next, m)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    prefixes
        .par_iter()
        .map(|(syms, ws)| {
            let mut out = Vec::new();
            let mut buf = syms.clone();
            descend(sims, target, &mut buf, ws, &f, &mut out);
            out
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn split_depth(size: usize, n: usize) -> usize {
    let mut depth = 0;
    let mut count = 1usize;
    while depth < n && count < 64 {
        count *= size;
        depth += 1;
    }
    depth
}

fn descend<T, F>(
    sims: &[Similarity],
    n: usize,
    buf: &mut Vec<u32>,
    ws: &WordSimilarity,
    f: &F,
    out: &mut Vec<T>,
) where
    F: Fn(&Word, &WordSimilarity) -> T,
{
    if buf.len() == n {
        out.push(f(&Word::from(buf.clone()), ws));
        return;
    }
    for (s, map) in sims.iter().enumerate() {
        buf.push(s as u32);
        descend(sims, n, buf, &ws.then(map), f, out);
        buf.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::Alphabet;

    fn cantor() -> Vec<Similarity> {
        vec![
            Similarity::scaling(1.0 / 3.0, &[0.0]).unwrap(),
            Similarity::scaling(1.0 / 3.0, &[2.0 / 3.0]).unwrap(),
        ]
    }

    #[test]
    fn composition_order() {
        let sims = cantor();
        let w = WordSimilarity::of_word(&sims, &Word::from(vec![0, 1]));
        let v = w.apply(&DVector::from_vec(vec![0.0]));
        assert!((v[0] - 2.0 / 9.0).abs() < 1e-15);
        assert!((w.scale - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn enumeration_is_lexicographic_and_complete() {
        let sims = vec![
            Similarity::scaling(0.3, &[0.0]).unwrap(),
            Similarity::scaling(0.3, &[0.35]).unwrap(),
            Similarity::scaling(0.3, &[0.7]).unwrap(),
        ];
        let a = Alphabet::new(3).unwrap();
        let words = map_word_similarities(&sims, 5, |w, _| w.clone());
        assert_eq!(words.len(), 243);
        for (k, w) in words.iter().enumerate() {
            assert_eq!(a.index_of(w), k);
        }
        let direct = map_word_similarities(&sims, 5, |w, ws| {
            (ws.apply(&DVector::from_vec(vec![0.5]))
                - WordSimilarity::of_word(&sims, w).apply(&DVector::from_vec(vec![0.5])))
            .norm()
        });
        assert!(direct.iter().all(|e| *e < 1e-15));
    }
}
