//! Exact count-based autoregressive reverse model.
//!
//! Context at position i is the aligned source token plus a truncated
//! window of previous target tokens (and the condition token, if any);
//! tables never approximate beyond that truncation, so on small chains
//! the fitted conditionals can be checked against full enumeration.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::vq::TokenGrid;

type ContextKey = (u32, u32, u64);

/// Laplace-smoothed conditional count tables, keyed per position.
pub struct TabularAR {
    pub k: usize,
    pub n: usize,
    /// Number of previous target tokens in the context.
    pub window: usize,
    /// Laplace smoothing constant added to every count.
    pub smoothing: f64,
    counts: HashMap<ContextKey, Vec<f64>>,
}

impl TabularAR {
    fn key(&self, position: usize, source: &TokenGrid, cond: Option<usize>, prefix: &[usize]) -> ContextKey {
        // Pack the window into base K+1 digits; K marks "before start".
        let base = (self.k + 1) as u64;
        let mut ctx = source.tokens()[position] as u64;
        for off in (1..=self.window).rev() {
            let digit =
                if position >= off { prefix[position - off] as u64 } else { self.k as u64 };
            ctx = ctx * base + digit;
        }
        let cond_digit = cond.map(|c| c as u32 + 1).unwrap_or(0);
        (position as u32, cond_digit, ctx)
    }

    /// Fit exact empirical conditionals from (source, target, condition)
    /// triples. Deterministic: counting consumes no randomness.
    pub fn fit(
        k: usize,
        n: usize,
        window: usize,
        smoothing: f64,
        pairs: &[(TokenGrid, TokenGrid, Option<usize>)],
    ) -> Result<TabularAR> {
        let mut model = TabularAR { k, n, window, smoothing, counts: HashMap::new() };
        for (source, target, cond) in pairs {
            if source.len() != n || target.len() != n {
                return Err(Error::dim(format!(
                    "tabular_fit: grids of {} and {} tokens, expected N={}",
                    source.len(),
                    target.len(),
                    n
                )));
            }
            if source.tokens().iter().chain(target.tokens()).any(|&t| t >= k) {
                return Err(Error::Index(format!("tabular_fit: token >= K={}", k)));
            }
            for i in 0..n {
                let key = model.key(i, source, *cond, target.tokens());
                let slot = model.counts.entry(key).or_insert_with(|| vec![0.0; k]);
                slot[target.tokens()[i]] += 1.0;
            }
        }
        Ok(model)
    }

    /// p(x_{t-1}^i | context) for i = prefix.len().
    pub fn step_probs(
        &self,
        source: &TokenGrid,
        cond: Option<usize>,
        prefix: &[usize],
    ) -> Result<Vec<f64>> {
        let i = prefix.len();
        if i >= self.n || source.len() != self.n {
            return Err(Error::dim(format!(
                "step_probs: position {} / source {} vs N={}",
                i,
                source.len(),
                self.n
            )));
        }
        let key = self.key(i, source, cond, prefix);
        let uniform = 1.0 / self.k as f64;
        match self.counts.get(&key) {
            None => Ok(vec![uniform; self.k]),
            Some(c) => {
                let total: f64 = c.iter().sum::<f64>() + self.smoothing * self.k as f64;
                if total <= 0.0 {
                    return Ok(vec![uniform; self.k]);
                }
                Ok(c.iter().map(|&v| (v + self.smoothing) / total).collect())
            }
        }
    }

    /// Teacher-forced log-probabilities over the whole target, N×K.
    pub fn log_probs(
        &self,
        source: &TokenGrid,
        cond: Option<usize>,
        target: &[usize],
    ) -> Result<Tensor> {
        if target.len() != self.n {
            return Err(Error::dim(format!("log_probs: {} targets vs N={}", target.len(), self.n)));
        }
        let mut out = Vec::with_capacity(self.n * self.k);
        for i in 0..self.n {
            let probs = self.step_probs(source, cond, &target[..i])?;
            out.extend(probs.iter().map(|&p| p.max(f64::MIN_POSITIVE).ln()));
        }
        Tensor::new(vec![self.n, self.k], out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(tokens: Vec<usize>) -> TokenGrid {
        let n = tokens.len();
        TokenGrid::from_tokens_unchecked(1, n, tokens)
    }

    #[test]
    fn single_pair_with_tiny_smoothing_is_near_deterministic() {
        let source = grid(vec![0, 1, 2]);
        let target = grid(vec![2, 0, 1]);
        let m =
            TabularAR::fit(3, 3, 2, 1e-12, &[(source.clone(), target.clone(), None)]).unwrap();
        for i in 0..3 {
            let p = m.step_probs(&source, None, &target.tokens()[..i]).unwrap();
            assert!(p[target.tokens()[i]] > 1.0 - 1e-9);
        }
    }

    #[test]
    fn unseen_context_is_uniform() {
        let m = TabularAR::fit(4, 2, 1, 1.0, &[]).unwrap();
        let p = m.step_probs(&grid(vec![0, 0]), None, &[]).unwrap();
        for &v in &p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_pairs_converge_to_uniform_conditionals() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let k = 3;
        let n = 2;
        let mut pairs = Vec::new();
        for _ in 0..40_000 {
            let s = grid((0..n).map(|_| rng.random_range(0..k)).collect());
            let t = grid((0..n).map(|_| rng.random_range(0..k)).collect());
            pairs.push((s, t, None));
        }
        let m = TabularAR::fit(k, n, 1, 1.0, &pairs).unwrap();
        // Context (position 0, source token 0): about 40000/3 visits.
        let p = m.step_probs(&grid(vec![0, 0]), None, &[]).unwrap();
        let visits = 40_000.0 / 3.0;
        let sigma = ((1.0 / 3.0) * (2.0 / 3.0) / visits as f64).sqrt();
        for &v in &p {
            assert!((v - 1.0 / 3.0).abs() < 3.0 * sigma, "p = {:?}", p);
        }
    }

    #[test]
    fn condition_token_separates_tables() {
        let source = grid(vec![0]);
        let pairs = vec![
            (source.clone(), grid(vec![0]), Some(0)),
            (source.clone(), grid(vec![1]), Some(1)),
        ];
        let m = TabularAR::fit(2, 1, 1, 1e-9, &pairs).unwrap();
        let p0 = m.step_probs(&source, Some(0), &[]).unwrap();
        let p1 = m.step_probs(&source, Some(1), &[]).unwrap();
        assert!(p0[0] > 0.99 && p1[1] > 0.99);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let pairs = vec![(grid(vec![0, 1]), grid(vec![0]), None)];
        assert!(matches!(TabularAR::fit(2, 2, 1, 1.0, &pairs), Err(Error::Dim(_))));
    }
}
