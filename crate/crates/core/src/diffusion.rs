//! Fixed multinomial forward process over token grids and every analytic
//! quantity derived from it.
//!
//! Indexing convention: x₁ is the token grid from the quantizer, diffusion
//! steps run t = 2..T. One step resamples each position to uniform with
//! probability βₜ, so the per-position kernel puts (1−βₜ)+βₜ/K on the
//! current token and βₜ/K elsewhere. The cumulative retention rate is
//! ᾱₜ = ∏_{l=2..t} (1−β_l) with ᾱ₁ = 1 (the quantizer is deterministic),
//! giving the closed-form t-step marginal ᾱₜ·δ(x₁) + (1−ᾱₜ)/K.

use rand::Rng;

use crate::error::{Error, Result};
use crate::vq::TokenGrid;

/// Replacement rates βₜ for t = 2..T plus cumulative retention ᾱₜ.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    betas: Vec<f64>,      // betas[i] = β_{i+2}
    alpha_bars: Vec<f64>, // alpha_bars[i] = ᾱ_{i+1}, so alpha_bars[0] = 1
}

impl Schedule {
    /// Chain length T (number of levels x₁..x_T).
    pub fn t_len(&self) -> usize {
        self.alpha_bars.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// βₜ for t in [2, T].
    pub fn beta(&self, t: usize) -> Result<f64> {
        if t < 2 || t > self.t_len() {
            return Err(Error::Contract(format!("beta: t={} outside [2, {}]", t, self.t_len())));
        }
        Ok(self.betas[t - 2])
    }

    /// ᾱₜ for t in [1, T].
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t < 1 || t > self.t_len() {
            return Err(Error::Contract(format!(
                "alpha_bar: t={} outside [1, {}]",
                t,
                self.t_len()
            )));
        }
        Ok(self.alpha_bars[t - 1])
    }
}

/// Build a schedule from per-step replacement rates (one per t = 2..T).
pub fn make_schedule(betas: &[f64]) -> Result<Schedule> {
    if betas.is_empty() {
        return Err(Error::config("schedule needs T >= 2, i.e. at least one beta"));
    }
    for (i, &b) in betas.iter().enumerate() {
        if !(0.0..=1.0).contains(&b) || !b.is_finite() {
            return Err(Error::config(format!("beta_{} = {} outside [0,1]", i + 2, b)));
        }
    }
    let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
    alpha_bars.push(1.0);
    let mut prod = 1.0;
    for &b in betas {
        prod *= 1.0 - b;
        alpha_bars.push(prod);
    }
    Ok(Schedule { betas: betas.to_vec(), alpha_bars })
}

/// Per-position categorical distributions over {0..K-1}, stored N×K.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionCategorical {
    pub k: usize,
    probs: Vec<f64>, // N*K, row per position
}

impl PositionCategorical {
    pub fn new(k: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() % k != 0 {
            return Err(Error::dim(format!("{} probs not divisible by K={}", probs.len(), k)));
        }
        Ok(PositionCategorical { k, probs })
    }

    pub fn positions(&self) -> usize {
        self.probs.len() / self.k
    }

    pub fn at(&self, position: usize) -> &[f64] {
        &self.probs[position * self.k..(position + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(self.k)
    }
}

/// One-step kernel probabilities q_t(·|x_{t-1}) per position (Eq. of the
/// step kernel: (1−βₜ)·δ(current) + βₜ·1/K).
pub fn forward_step_probs(
    x_prev: &TokenGrid,
    t: usize,
    schedule: &Schedule,
    k: usize,
) -> Result<PositionCategorical> {
    let beta = schedule.beta(t)?;
    let off = beta / k as f64;
    let keep = 1.0 - beta + off;
    let mut probs = vec![off; x_prev.len() * k];
    for (i, &tok) in x_prev.tokens().iter().enumerate() {
        if tok >= k {
            return Err(Error::Index(format!("token {} >= K={}", tok, k)));
        }
        probs[i * k + tok] = keep;
    }
    PositionCategorical::new(k, probs)
}

/// Draw an index from a probability vector.
pub fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let mut r: f64 = rng.random::<f64>();
    for (i, &p) in probs.iter().enumerate() {
        if r < p {
            return i;
        }
        r -= p;
    }
    probs.len() - 1
}

/// Sample one forward step: independently per position.
pub fn sample_forward(
    x_prev: &TokenGrid,
    t: usize,
    schedule: &Schedule,
    k: usize,
    rng: &mut impl Rng,
) -> Result<TokenGrid> {
    let beta = schedule.beta(t)?;
    let mut tokens = Vec::with_capacity(x_prev.len());
    for &tok in x_prev.tokens() {
        if tok >= k {
            return Err(Error::Index(format!("token {} >= K={}", tok, k)));
        }
        // Resample to uniform with probability beta, else keep.
        let next = if rng.random::<f64>() < beta { rng.random_range(0..k) } else { tok };
        tokens.push(next);
    }
    Ok(TokenGrid::from_tokens_unchecked(x_prev.h, x_prev.w, tokens))
}

/// Closed-form marginal q_t(·|x₁) per position: ᾱₜ·δ(x₁) + (1−ᾱₜ)/K.
pub fn marginal_probs(
    x1: &TokenGrid,
    t: usize,
    schedule: &Schedule,
    k: usize,
) -> Result<PositionCategorical> {
    if t < 2 {
        return Err(Error::Contract(format!("marginal_probs: t={} < 2", t)));
    }
    let ab = schedule.alpha_bar(t)?;
    let off = (1.0 - ab) / k as f64;
    let keep = ab + off;
    let mut probs = vec![off; x1.len() * k];
    for (i, &tok) in x1.tokens().iter().enumerate() {
        if tok >= k {
            return Err(Error::Index(format!("token {} >= K={}", tok, k)));
        }
        probs[i * k + tok] = keep;
    }
    PositionCategorical::new(k, probs)
}

/// Sample x_t ~ q_t(·|x₁) directly from the closed-form marginal.
pub fn sample_marginal(
    x1: &TokenGrid,
    t: usize,
    schedule: &Schedule,
    k: usize,
    rng: &mut impl Rng,
) -> Result<TokenGrid> {
    if t < 2 {
        return Err(Error::Contract(format!("sample_marginal: t={} < 2", t)));
    }
    let ab = schedule.alpha_bar(t)?;
    let mut tokens = Vec::with_capacity(x1.len());
    for &tok in x1.tokens() {
        if tok >= k {
            return Err(Error::Index(format!("token {} >= K={}", tok, k)));
        }
        let next = if rng.random::<f64>() < 1.0 - ab { rng.random_range(0..k) } else { tok };
        tokens.push(next);
    }
    Ok(TokenGrid::from_tokens_unchecked(x1.h, x1.w, tokens))
}

/// Exact posterior q(x_{t-1}|x_t, x₁) per position, for t in [3, T].
///
/// Per position the two factors q_t(x_t|x_{t-1}=v) and q_{t-1}(v|x₁) are
/// multiplied over v in {0..K-1} and normalized. For t = 2 the posterior is
/// degenerate at x₁ (the quantizer is deterministic), so t < 3 is rejected.
pub fn posterior_probs(
    x_t: &TokenGrid,
    x1: &TokenGrid,
    t: usize,
    schedule: &Schedule,
    k: usize,
) -> Result<PositionCategorical> {
    if t < 3 {
        return Err(Error::Contract(format!(
            "posterior_probs: t={} < 3 (posterior is degenerate at t=2)",
            t
        )));
    }
    if x_t.len() != x1.len() {
        return Err(Error::dim("posterior_probs: grid sizes differ"));
    }
    let beta = schedule.beta(t)?;
    let ab_prev = schedule.alpha_bar(t - 1)?;
    let step_off = beta / k as f64;
    let step_keep = 1.0 - beta + step_off;
    let marg_off = (1.0 - ab_prev) / k as f64;
    let marg_keep = ab_prev + marg_off;

    let mut probs = vec![0.0; x_t.len() * k];
    for i in 0..x_t.len() {
        let xt = x_t.tokens()[i];
        let x1i = x1.tokens()[i];
        if xt >= k || x1i >= k {
            return Err(Error::Index(format!("token >= K={}", k)));
        }
        let mut total = 0.0;
        for v in 0..k {
            let step = if v == xt { step_keep } else { step_off };
            let marg = if v == x1i { marg_keep } else { marg_off };
            probs[i * k + v] = step * marg;
            total += step * marg;
        }
        if total <= 0.0 {
            return Err(Error::Numeric(format!(
                "posterior normalizer is zero at position {} (beta_t = {}, alpha_bar = {})",
                i, beta, ab_prev
            )));
        }
        for v in 0..k {
            probs[i * k + v] /= total;
        }
    }
    PositionCategorical::new(k, probs)
}

/// KL(p‖q) in nats with the 0·log 0 = 0 convention.
pub fn categorical_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim(format!("categorical_kl: {} vs {} entries", p.len(), q.len())));
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::Numeric(format!(
                "categorical_kl: q = {} on the support of p (p = {})",
                qi, pi
            )));
        }
        kl += pi * (pi / qi).ln();
    }
    Ok(kl)
}

/// Gap (nats per grid) between the level-T marginal of x₁ and the uniform
/// prior that reverse sampling actually starts from.
pub fn prior_kl(x1: &TokenGrid, schedule: &Schedule, k: usize) -> Result<f64> {
    let t = schedule.t_len();
    if t < 2 {
        return Err(Error::config("prior_kl needs a chain of length >= 2"));
    }
    let marg = marginal_probs(x1, t, schedule, k)?;
    let uniform = vec![1.0 / k as f64; k];
    let mut total = 0.0;
    for row in marg.rows() {
        total += categorical_kl(row, &uniform)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(tokens: Vec<usize>) -> TokenGrid {
        let n = tokens.len();
        TokenGrid::from_tokens_unchecked(1, n, tokens)
    }

    #[test]
    fn schedule_cumulative_products() {
        let s = make_schedule(&[0.3, 0.5]).unwrap();
        assert_eq!(s.t_len(), 3);
        assert!((s.alpha_bar(1).unwrap() - 1.0).abs() < 1e-15);
        assert!((s.alpha_bar(2).unwrap() - 0.7).abs() < 1e-15);
        assert!((s.alpha_bar(3).unwrap() - 0.35).abs() < 1e-15);
    }

    #[test]
    fn schedule_all_zero_betas_keep_alpha_one() {
        let s = make_schedule(&[0.0, 0.0, 0.0]).unwrap();
        for t in 1..=4 {
            assert_eq!(s.alpha_bar(t).unwrap(), 1.0);
        }
    }

    #[test]
    fn schedule_beta_one_zeroes_later_alphas() {
        let s = make_schedule(&[0.2, 1.0, 0.4]).unwrap();
        assert!(s.alpha_bar(2).unwrap() > 0.0);
        assert_eq!(s.alpha_bar(3).unwrap(), 0.0);
        assert_eq!(s.alpha_bar(4).unwrap(), 0.0);
    }

    #[test]
    fn schedule_rejects_out_of_range_beta() {
        assert!(matches!(make_schedule(&[1.5]), Err(Error::Config(_))));
        assert!(matches!(make_schedule(&[-0.1]), Err(Error::Config(_))));
    }

    #[test]
    fn step_probs_match_hand_substitution() {
        let s = make_schedule(&[0.3]).unwrap();
        let p = forward_step_probs(&grid(vec![1]), 2, &s, 3).unwrap();
        let row = p.at(0);
        assert!((row[0] - 0.1).abs() < 1e-15);
        assert!((row[1] - 0.8).abs() < 1e-15);
        assert!((row[2] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn step_beta_zero_is_delta_and_beta_one_uniform() {
        let s0 = make_schedule(&[0.0]).unwrap();
        let p = forward_step_probs(&grid(vec![2]), 2, &s0, 4).unwrap();
        assert_eq!(p.at(0), &[0.0, 0.0, 1.0, 0.0]);
        let s1 = make_schedule(&[1.0]).unwrap();
        let p = forward_step_probs(&grid(vec![2]), 2, &s1, 4).unwrap();
        for &v in p.at(0) {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn sample_forward_identity_at_beta_zero() {
        let s = make_schedule(&[0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = grid(vec![0, 1, 2, 3, 2, 1]);
        let y = sample_forward(&x, 2, &s, 4, &mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn marginal_matches_hand_substitution() {
        // alpha_bar = 0.35 at t=3 with K=3 and x1 = 2.
        let s = make_schedule(&[0.3, 0.5]).unwrap();
        let p = marginal_probs(&grid(vec![2]), 3, &s, 3).unwrap();
        let row = p.at(0);
        assert!((row[0] - 0.21666666666666667).abs() < 1e-12);
        assert!((row[1] - 0.21666666666666667).abs() < 1e-12);
        assert!((row[2] - 0.5666666666666667).abs() < 1e-12);
    }

    #[test]
    fn marginal_at_t2_equals_step_kernel() {
        let s = make_schedule(&[0.3]).unwrap();
        let x = grid(vec![0, 1, 2]);
        let m = marginal_probs(&x, 2, &s, 3).unwrap();
        let f = forward_step_probs(&x, 2, &s, 3).unwrap();
        for i in 0..3 {
            for v in 0..3 {
                assert!((m.at(i)[v] - f.at(i)[v]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn posterior_matches_hand_example() {
        // K=3, beta_3=0.5, alpha_bar_2=0.7, x3 = 0, x1 = 2.
        let s = make_schedule(&[0.3, 0.5]).unwrap();
        let p = posterior_probs(&grid(vec![0]), &grid(vec![2]), 3, &s, 3).unwrap();
        let row = p.at(0);
        assert!((row[0] - 0.30769230769230771).abs() < 1e-5, "got {}", row[0]);
        assert!((row[1] - 0.07692307692307693).abs() < 1e-5, "got {}", row[1]);
        assert!((row[2] - 0.61538461538461542).abs() < 1e-5, "got {}", row[2]);
    }

    #[test]
    fn posterior_delta_when_beta_zero_and_consistent() {
        let s = make_schedule(&[0.4, 0.0]).unwrap();
        let p = posterior_probs(&grid(vec![1]), &grid(vec![1]), 3, &s, 3).unwrap();
        assert!((p.at(0)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_mode_at_agreeing_token() {
        let s = make_schedule(&[0.35, 0.45]).unwrap();
        for k in 2..=5 {
            for tok in 0..k {
                let p = posterior_probs(&grid(vec![tok]), &grid(vec![tok]), 3, &s, k).unwrap();
                let row = p.at(0);
                let argmax =
                    (0..k).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
                assert_eq!(argmax, tok);
            }
        }
    }

    #[test]
    fn posterior_rejects_t2() {
        let s = make_schedule(&[0.3, 0.5]).unwrap();
        assert!(posterior_probs(&grid(vec![0]), &grid(vec![0]), 2, &s, 3).is_err());
    }

    #[test]
    fn kl_identities() {
        let p = [0.2, 0.5, 0.3];
        assert!(categorical_kl(&p, &p).unwrap().abs() < 1e-15);
        let delta = [1.0, 0.0, 0.0];
        let uniform = [1.0 / 3.0; 3];
        let kl = categorical_kl(&delta, &uniform).unwrap();
        assert!((kl - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn kl_support_violation_is_numeric_error() {
        let p = [0.5, 0.5];
        let q = [1.0, 0.0];
        assert!(matches!(categorical_kl(&p, &q), Err(Error::Numeric(_))));
    }

    #[test]
    fn kl_nonnegative_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let mut p: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 1e-9).collect();
            let mut q: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 1e-9).collect();
            let ps: f64 = p.iter().sum();
            let qs: f64 = q.iter().sum();
            p.iter_mut().for_each(|v| *v /= ps);
            q.iter_mut().for_each(|v| *v /= qs);
            assert!(categorical_kl(&p, &q).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn prior_kl_zero_when_fully_mixed_and_lnk_when_not() {
        let s = make_schedule(&[1.0]).unwrap();
        let x = grid(vec![1]);
        assert!(prior_kl(&x, &s, 3).unwrap().abs() < 1e-15);
        let s = make_schedule(&[0.0]).unwrap();
        let kl = prior_kl(&x, &s, 3).unwrap();
        assert!((kl - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn prior_kl_matches_direct_summation() {
        // K=8, alpha_bar_T = 0.05, N=64.
        let s = make_schedule(&[0.95]).unwrap();
        let x = TokenGrid::from_tokens_unchecked(8, 8, (0..64).map(|i| i % 8).collect());
        let got = prior_kl(&x, &s, 8).unwrap();
        // Independent summation of the closed form.
        let k = 8.0;
        let ab: f64 = 0.05;
        let keep = ab + (1.0 - ab) / k;
        let off = (1.0 - ab) / k;
        let per_pos = keep * (keep * k).ln() + (k - 1.0) * off * (off * k).ln();
        assert!((got - 64.0 * per_pos).abs() < 1e-9, "{} vs {}", got, 64.0 * per_pos);
    }

    /// Chapman-Kolmogorov: pushing the (t-1)-marginal through the step
    /// kernel reproduces the t-marginal exactly.
    #[test]
    fn chapman_kolmogorov_identity() {
        let s = make_schedule(&[0.25, 0.4, 0.7]).unwrap();
        let k = 5;
        let x1 = grid(vec![0, 2, 4, 1]);
        for t in 3..=4 {
            let prev = marginal_probs(&x1, t - 1, &s, k).unwrap();
            let now = marginal_probs(&x1, t, &s, k).unwrap();
            let beta = s.beta(t).unwrap();
            for i in 0..x1.len() {
                for v in 0..k {
                    // sum_u prev(u) * step(v|u)
                    let mut pushed = 0.0;
                    for u in 0..k {
                        let step = if u == v { 1.0 - beta + beta / k as f64 } else { beta / k as f64 };
                        pushed += prev.at(i)[u] * step;
                    }
                    assert!(
                        (pushed - now.at(i)[v]).abs() < 1e-12,
                        "t={} i={} v={}: {} vs {}",
                        t,
                        i,
                        v,
                        pushed,
                        now.at(i)[v]
                    );
                }
            }
        }
    }

    /// Forward-sampling statistics: beta=1 draws are uniform, and the
    /// retention rate matches 1-beta+beta/K within 3 sigma.
    #[test]
    fn sample_forward_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let k = 3;
        let s = make_schedule(&[0.3]).unwrap();
        let x = grid(vec![1; 4096]);
        let n_draws = 25;
        let mut kept = 0usize;
        let total = 4096 * n_draws;
        for _ in 0..n_draws {
            let y = sample_forward(&x, 2, &s, k, &mut rng).unwrap();
            kept += y.tokens().iter().filter(|&&t| t == 1).count();
        }
        let p = 0.7 + 0.3 / 3.0;
        let sigma = (p * (1.0 - p) / total as f64).sqrt();
        let rate = kept as f64 / total as f64;
        assert!(
            (rate - p).abs() < 3.0 * sigma,
            "retention {} vs {} (sigma {})",
            rate,
            p,
            sigma
        );
    }
}
