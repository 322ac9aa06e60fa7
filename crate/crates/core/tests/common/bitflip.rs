//! Gallager hard-decision bit-flipping decoder, used as a reference point for
//! the belief-propagation decoder.

pub struct BitFlip {
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
}

impl BitFlip {
    pub fn new(n: usize, rows: Vec<Vec<usize>>) -> Self {
        let mut cols = vec![Vec::new(); n];
        for (c, r) in rows.iter().enumerate() {
            for &v in r {
                cols[v].push(c);
            }
        }
        Self { rows, cols }
    }

    pub fn syndrome(&self, word: &[u8]) -> Vec<bool> {
        self.rows
            .iter()
            .map(|r| r.iter().fold(0u8, |a, &v| a ^ word[v]) == 1)
            .collect()
    }

    /// Returns the corrected word when every check is satisfied within
    /// `max_iter` rounds.
    pub fn decode(&self, received: &[u8], max_iter: usize) -> Option<Vec<u8>> {
        let mut word = received.to_vec();
        for _ in 0..max_iter {
            let syn = self.syndrome(&word);
            if syn.iter().all(|s| !s) {
                return Some(word);
            }
            let unsat: Vec<usize> = self
                .cols
                .iter()
                .map(|cs| cs.iter().filter(|&&c| syn[c]).count())
                .collect();
            // flip every bit sitting on the largest number of failing checks
            let worst = *unsat.iter().max().unwrap_or(&0);
            for (b, &u) in word.iter_mut().zip(&unsat) {
                if u == worst {
                    *b ^= 1;
                }
            }
        }
        self.syndrome(&word).iter().all(|s| !s).then_some(word)
    }
}
