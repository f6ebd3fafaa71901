use rand::Rng;

use crate::error::{Error, Result};

/// An anchor plus one exemplar per class, as indices into the training set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSample {
    pub anchor: usize,
    pub anchor_label: usize,
    /// `exemplars[i]` has class `i`.
    pub exemplars: Vec<usize>,
}

/// Draws anchors uniformly over the training set and exemplars uniformly
/// within each class, never reusing the anchor as its own class's exemplar.
#[derive(Debug, Clone)]
pub struct Sampler {
    labels: Vec<usize>,
    by_class: Vec<Vec<usize>>,
}

impl Sampler {
    pub fn new(labels: &[usize], class_count: usize) -> Result<Self> {
        let mut by_class = vec![Vec::new(); class_count];
        for (i, &l) in labels.iter().enumerate() {
            if l >= class_count {
                return Err(Error::Label { label: l, classes: class_count });
            }
            by_class[l].push(i);
        }
        if let Some(c) = by_class.iter().position(|v| v.is_empty()) {
            return Err(Error::Sample(format!("class {c} has no training cases")));
        }
        Ok(Sampler { labels: labels.to_vec(), by_class })
    }

    pub fn class_count(&self) -> usize {
        self.by_class.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BatchSample> {
        let anchor = rng.gen_range(0..self.labels.len());
        let anchor_label = self.labels[anchor];
        let mut exemplars = Vec::with_capacity(self.by_class.len());
        for (class, members) in self.by_class.iter().enumerate() {
            let pick = if class == anchor_label {
                if members.len() < 2 {
                    return Err(Error::Sample(format!(
                        "class {class} has a single case, no exemplar besides the anchor"
                    )));
                }
                // Draw from the class with the anchor's slot removed.
                let j = rng.gen_range(0..members.len() - 1);
                let pos = members.binary_search(&anchor).expect("anchor in its class");
                members[if j >= pos { j + 1 } else { j }]
            } else {
                members[rng.gen_range(0..members.len())]
            };
            exemplars.push(pick);
        }
        Ok(BatchSample { anchor, anchor_label, exemplars })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn singleton_anchor_class_is_an_error() {
        let s = Sampler::new(&[0, 1, 1], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut saw_error = false;
        for _ in 0..50 {
            match s.sample(&mut rng) {
                Ok(b) => assert_eq!(b.anchor_label, 1),
                Err(Error::Sample(_)) => saw_error = true,
                Err(e) => panic!("{e}"),
            }
        }
        assert!(saw_error);
        assert!(Sampler::new(&[0, 0], 2).is_err());
        assert!(Sampler::new(&[0, 2], 2).is_err());
    }

    #[test]
    fn exemplar_slots_and_anchor_exclusion() {
        let labels = [0, 1, 2, 0, 1, 2, 0, 2];
        let s = Sampler::new(&labels, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let b = s.sample(&mut rng).unwrap();
            assert_eq!(b.exemplars.len(), 3);
            for (slot, &e) in b.exemplars.iter().enumerate() {
                assert_eq!(labels[e], slot);
            }
            assert_ne!(b.exemplars[b.anchor_label], b.anchor);
        }
    }

    #[test]
    fn anchor_class_frequencies_match_proportions() {
        // 30% / 70% split over 10,000 draws; each tally within 3 sigma.
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 30)).collect();
        let s = Sampler::new(&labels, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut counts = [0usize; 2];
        for _ in 0..n {
            counts[s.sample(&mut rng).unwrap().anchor_label] += 1;
        }
        for (c, p) in [(counts[0], 0.3), (counts[1], 0.7)] {
            let mean = n as f64 * p;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "{c} vs {mean}");
        }
    }
}
