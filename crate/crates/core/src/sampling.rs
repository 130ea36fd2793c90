//! O(1) sampling of observed entries with probability `w_e` (Vose's alias
//! method).

use rand::Rng;

use crate::error::{Error, Result};
use crate::wlra::{EntrySample, SparseWeightedMatrix};

/// Alias tables over the positively weighted entries of a
/// [`SparseWeightedMatrix`].
#[derive(Debug, Clone)]
pub struct SamplingTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
    /// Slot -> entry position in the data.
    entries: Vec<usize>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl SamplingTable {
    pub fn new(data: &SparseWeightedMatrix) -> Result<Self> {
        let mut entries = Vec::new();
        let mut weights = Vec::new();
        for (pos, e) in data.entries().iter().enumerate() {
            if e.weight > 0.0 {
                entries.push(pos);
                weights.push(e.weight);
            }
        }
        if entries.is_empty() {
            return Err(Error::Config(
                "sampling table has no positively weighted entries".into(),
            ));
        }
        let (prob, alias) = build_alias(&weights);
        let rows = entries.iter().map(|&p| data.entries()[p].row).collect();
        let cols = entries.iter().map(|&p| data.entries()[p].col).collect();
        Ok(Self {
            prob,
            alias,
            entries,
            rows,
            cols,
        })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.prob
    }

    pub fn aliases(&self) -> &[usize] {
        &self.alias
    }

    /// Probability that each slot is drawn, reconstructed from the tables.
    pub fn induced_probabilities(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut out: Vec<f64> = self.prob.iter().map(|p| p / n).collect();
        for (slot, &a) in self.alias.iter().enumerate() {
            out[a] += (1.0 - self.prob[slot]) / n;
        }
        out
    }

    /// Entry position in the data for each slot, aligned with
    /// [`Self::induced_probabilities`].
    pub fn entry_positions(&self) -> &[usize] {
        &self.entries
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> EntrySample {
        let slot = rng.random_range(0..self.len());
        let coin: f64 = rng.random();
        let pick = if coin < self.prob[slot] { slot } else { self.alias[slot] };
        EntrySample {
            entry: self.entries[pick],
            row: self.rows[pick],
            col: self.cols[pick],
        }
    }
}

/// Draws one entry according to the weights of the table.
pub fn sample_entry<R: Rng + ?Sized>(table: &SamplingTable, rng: &mut R) -> Result<EntrySample> {
    if table.is_empty() {
        return Err(Error::Config("empty sampling table".into()));
    }
    Ok(table.sample(rng))
}

fn build_alias(weights: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
    let mut prob = vec![1.0; n];
    let mut alias: Vec<usize> = (0..n).collect();
    let mut small = Vec::new();
    let mut large = Vec::new();
    for (i, &s) in scaled.iter().enumerate() {
        if s < 1.0 {
            small.push(i);
        } else {
            large.push(i);
        }
    }
    while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
        small.pop();
        prob[s] = scaled[s];
        alias[s] = l;
        // Subtract in the order that keeps the donor's residual exact.
        scaled[l] = (scaled[l] + scaled[s]) - 1.0;
        if scaled[l] < 1.0 {
            large.pop();
            small.push(l);
        }
    }
    // Leftovers differ from 1 only by round-off.
    for i in large.into_iter().chain(small) {
        prob[i] = 1.0;
        alias[i] = i;
    }
    (prob, alias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wlra::Entry;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data_with_weights(weights: &[f64]) -> SparseWeightedMatrix {
        let total: f64 = weights.iter().sum();
        let entries = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| Entry {
                row: i,
                col: 0,
                value: i as f64,
                weight: w / total,
            })
            .collect();
        SparseWeightedMatrix::new(weights.len(), 1, entries).unwrap()
    }

    #[test]
    fn point_mass_always_sampled() {
        let entries = vec![
            Entry {
                row: 0,
                col: 0,
                value: 1.0,
                weight: 0.0,
            },
            Entry {
                row: 1,
                col: 0,
                value: 2.0,
                weight: 1.0,
            },
            Entry {
                row: 2,
                col: 0,
                value: 3.0,
                weight: 0.0,
            },
        ];
        let data = SparseWeightedMatrix::new(3, 1, entries).unwrap();
        let table = SamplingTable::new(&data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let s = sample_entry(&table, &mut rng).unwrap();
            assert_eq!((s.row, s.col, s.entry), (1, 0, 1));
        }
    }

    #[test]
    fn uniform_frequencies_within_four_sigma() {
        let data = data_with_weights(&[1.0, 1.0, 1.0, 1.0]);
        let table = SamplingTable::new(&data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[table.sample(&mut rng).row] += 1;
        }
        let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - 25_000.0).abs() <= 4.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let data = data_with_weights(&[0.1, 0.5, 0.2, 0.2]);
        let table = SamplingTable::new(&data).unwrap();
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..500).map(|_| table.sample(&mut rng)).collect()
        };
        let b: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..500).map(|_| table.sample(&mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn all_zero_weights_rejected() {
        let entries = vec![Entry {
            row: 0,
            col: 0,
            value: 1.0,
            weight: 0.0,
        }];
        assert!(SparseWeightedMatrix::new(1, 1, entries).is_err());
    }

    proptest! {
        #[test]
        fn alias_tables_reproduce_weights(raw in proptest::collection::vec(0.0f64..10.0, 1..64)) {
            prop_assume!(raw.iter().any(|&w| w > 0.0));
            let data = data_with_weights(&raw);
            let table = SamplingTable::new(&data).unwrap();
            let induced = table.induced_probabilities();
            for (slot, &pos) in table.entry_positions().iter().enumerate() {
                let w = data.entries()[pos].weight;
                prop_assert!((induced[slot] - w).abs() <= 1e-15, "slot {slot}: {} vs {w}", induced[slot]);
            }
        }
    }
}
