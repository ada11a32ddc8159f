use serde::{Deserialize, Serialize};

/// Per-class counts for one task.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl Confusion {
    pub fn new(n_classes: usize) -> Self {
        Confusion {
            tp: vec![0; n_classes],
            fp: vec![0; n_classes],
            fn_: vec![0; n_classes],
        }
    }

    /// Record one prediction. A prediction outside the class set counts
    /// as a miss for the true class only.
    pub fn add(&mut self, truth: usize, pred: usize) {
        if truth == pred {
            self.tp[truth] += 1;
        } else {
            self.fn_[truth] += 1;
            if let Some(fp) = self.fp.get_mut(pred) {
                *fp += 1;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.tp.iter().sum::<u64>() + self.fn_.iter().sum::<u64>()
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            self.tp.iter().sum::<u64>() as f64 / n as f64
        }
    }

    /// Per-class F1 with zero-denominator precision, recall and F1 set to 0.
    pub fn f1_per_class(&self) -> Vec<f64> {
        (0..self.tp.len())
            .map(|c| {
                let tp = self.tp[c] as f64;
                let ratio = |den: u64| if den == 0 { 0.0 } else { tp / den as f64 };
                let p = ratio(self.tp[c] + self.fp[c]);
                let r = ratio(self.tp[c] + self.fn_[c]);
                if p + r == 0.0 {
                    0.0
                } else {
                    2.0 * p * r / (p + r)
                }
            })
            .collect()
    }

    pub fn macro_f1(&self) -> f64 {
        let f = self.f1_per_class();
        f.iter().sum::<f64>() / f.len() as f64
    }
}

/// Index of the largest value; the first one on ties.
pub fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
