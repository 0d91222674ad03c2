use serde::{Deserialize, Serialize};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-feature affine normalization `(x - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Pass-through standardizer of the given width.
    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    /// Fits mean and population standard deviation (floored) over rows.
    pub fn fit<'a, I>(width: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut acc = StandardizerAccumulator::new(width);
        for row in rows {
            acc.push(row);
        }
        acc.finish()
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn invert(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }
}

/// Streaming mean/variance (Welford) used to fit a [`Standardizer`] without
/// materializing every row.
#[derive(Clone, Debug)]
pub struct StandardizerAccumulator {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl StandardizerAccumulator {
    pub fn new(width: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; width],
            m2: vec![0.0; width],
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.mean.len(), "feature width mismatch");
        self.count += 1;
        let n = self.count as f64;
        for ((m, m2), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(row) {
            let delta = x - *m;
            *m += delta / n;
            *m2 += delta * (x - *m);
        }
    }

    pub fn finish(self) -> Standardizer {
        let width = self.mean.len();
        if self.count == 0 {
            return Standardizer::identity(width);
        }
        let n = self.count as f64;
        let std = self.m2.iter().map(|m2| (m2 / n).sqrt().max(STD_FLOOR)).collect();
        Standardizer { mean: self.mean, std }
    }
}
