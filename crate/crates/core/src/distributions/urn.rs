use rand::Rng;

use crate::error::{Error, Result};

/// Blackwell–MacQueen urn: sequential draws from a Dirichlet process partition.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyaUrnState {
    alpha: f64,
    counts: Vec<u64>,
    total: u64,
}

impl PolyaUrnState {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("urn concentration must be positive, got {alpha}")));
        }
        Ok(Self { alpha, counts: Vec::new(), total: 0 })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    /// Predictive probabilities of the existing classes followed by a fresh class.
    pub fn probabilities(&self) -> Vec<f64> {
        let denom = self.total as f64 + self.alpha;
        self.counts
            .iter()
            .map(|&c| c as f64 / denom)
            .chain(std::iter::once(self.alpha / denom))
            .collect()
    }

    /// Seats one item at `class`, which must be an existing class or the next fresh id.
    pub fn record(&mut self, class: usize) -> Result<()> {
        match class.cmp(&self.counts.len()) {
            std::cmp::Ordering::Less => self.counts[class] += 1,
            std::cmp::Ordering::Equal => self.counts.push(1),
            std::cmp::Ordering::Greater => {
                return Err(Error::Domain(format!(
                    "urn class {class} skips ids; {} classes exist",
                    self.counts.len()
                )))
            }
        }
        self.total += 1;
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * (self.total as f64 + self.alpha);
        let mut acc = 0.0;
        let mut class = self.counts.len();
        for (k, &c) in self.counts.iter().enumerate() {
            acc += c as f64;
            if u < acc {
                class = k;
                break;
            }
        }
        self.record(class).expect("class id is in range");
        class
    }
}
