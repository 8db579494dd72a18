use rand::Rng;

use crate::error::{Error, Result};

/// Learned per-category vectors with one extra UNK row for every category
/// not in `known`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryTable {
    pub known: Vec<usize>,
    pub dim: usize,
    /// Row-major `(known.len() + 1) x dim`; the last row is UNK.
    pub values: Vec<f64>,
}

impl CategoryTable {
    /// Rows drawn uniformly from `[-1/sqrt(dim), 1/sqrt(dim)]`.
    pub fn random<R: Rng + ?Sized>(known: Vec<usize>, dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let values = (0..(known.len() + 1) * dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self { known, dim, values }
    }

    pub fn from_parts(known: Vec<usize>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != (known.len() + 1) * dim {
            return Err(Error::Shape(format!(
                "category table with {} known rows of width {dim} needs {} values, got {}",
                known.len(),
                (known.len() + 1) * dim,
                values.len()
            )));
        }
        Ok(Self { known, dim, values })
    }

    pub fn rows(&self) -> usize {
        self.known.len() + 1
    }

    /// Row of `category`, or the UNK row.
    pub fn row_index(&self, category: usize) -> usize {
        self.known
            .iter()
            .position(|&c| c == category)
            .unwrap_or(self.known.len())
    }

    pub fn row(&self, category: usize) -> &[f64] {
        let r = self.row_index(category);
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn unk(&self) -> &[f64] {
        let r = self.known.len();
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    /// Adds `grad` into the gradient slot of `category`'s row.
    pub fn accumulate(&self, category: usize, grad: &[f64], out: &mut [f64]) {
        let r = self.row_index(category);
        for (o, g) in out[r * self.dim..(r + 1) * self.dim].iter_mut().zip(grad) {
            *o += g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn unseen_categories_share_the_unk_row() {
        let t = CategoryTable::random(vec![3, 7], 4, &mut substream(0, "emb"));
        assert_eq!(t.rows(), 3);
        assert_eq!(t.row(11), t.unk());
        assert_eq!(t.row(12), t.row(11));
        assert_ne!(t.row(3), t.row(7));
    }

    #[test]
    fn accumulate_targets_one_row() {
        let t = CategoryTable::from_parts(vec![5], 2, vec![0.0; 4]).unwrap();
        let mut g = vec![0.0; 4];
        t.accumulate(5, &[1.0, 2.0], &mut g);
        t.accumulate(9, &[3.0, 4.0], &mut g);
        assert_eq!(g, vec![1.0, 2.0, 3.0, 4.0]);
    }
}
