//! First hierarchy level: deterministic patch quantization.
//!
//! An image is cut into `f`×`f` patches, each mapped to the index of the
//! nearest codebook entry (squared Euclidean distance, ties to the lowest
//! index). Decoding pastes entries back. The codebook itself comes from
//! k-means over the patch corpus; unused entries can be shrunk away before
//! generative training.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::image::Image;

/// Grid of codebook indices; the chain state x_t. Row-major, so the
/// unrolled sequence runs top-left to bottom-right with length `h·w`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenGrid {
    pub h: usize,
    pub w: usize,
    tokens: Vec<usize>,
}

impl TokenGrid {
    pub fn new(h: usize, w: usize, tokens: Vec<usize>, k: usize) -> Result<Self> {
        if tokens.len() != h * w {
            return Err(Error::dim(format!("grid {}x{} needs {} tokens", h, w, h * w)));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= k) {
            return Err(Error::Index(format!("token {} >= K={}", bad, k)));
        }
        Ok(TokenGrid { h, w, tokens })
    }

    pub fn filled(h: usize, w: usize, token: usize) -> Self {
        TokenGrid { h, w, tokens: vec![token; h * w] }
    }

    pub fn from_tokens_unchecked(h: usize, w: usize, tokens: Vec<usize>) -> Self {
        debug_assert_eq!(tokens.len(), h * w);
        TokenGrid { h, w, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn tokens_mut(&mut self) -> &mut [usize] {
        &mut self.tokens
    }

    pub fn at(&self, row: usize, col: usize) -> usize {
        self.tokens[row * self.w + col]
    }

    /// Uniformly random grid over {0..k-1}.
    pub fn uniform(h: usize, w: usize, k: usize, rng: &mut impl Rng) -> Self {
        let tokens = (0..h * w).map(|_| rng.random_range(0..k)).collect();
        TokenGrid { h, w, tokens }
    }
}

/// Learned patch codebook: `K` entries of length `f²·channels` each.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub patch_size: usize,
    pub channels: usize,
    entries: Vec<Vec<f64>>,
}

const CODEBOOK_MAGIC: &[u8; 8] = b"GRIDCB01";

impl Codebook {
    pub fn new(patch_size: usize, channels: usize, entries: Vec<Vec<f64>>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::config(format!("codebook needs K >= 2, got {}", entries.len())));
        }
        let dim = patch_size * patch_size * channels;
        for (i, e) in entries.iter().enumerate() {
            if e.len() != dim {
                return Err(Error::dim(format!(
                    "codebook entry {} has {} values, expected {}",
                    i,
                    e.len(),
                    dim
                )));
            }
        }
        Ok(Codebook { patch_size, channels, entries })
    }

    /// Construction path for shrink output, which may leave a single entry.
    fn new_unchecked(patch_size: usize, channels: usize, entries: Vec<Vec<f64>>) -> Self {
        Codebook { patch_size, channels, entries }
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &[f64] {
        &self.entries[i]
    }

    /// Index of the nearest entry to `patch`; ties break to the lowest index.
    pub fn nearest(&self, patch: &[f64]) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, e) in self.entries.iter().enumerate() {
            let d: f64 = e.iter().zip(patch).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CODEBOOK_MAGIC);
        buf.extend_from_slice(&(self.k() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.patch_size as u32).to_le_bytes());
        buf.extend_from_slice(&(self.channels as u32).to_le_bytes());
        for e in &self.entries {
            for &v in e {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Codebook> {
        let bytes = fs::read(path)?;
        let fail = |msg: &str| Error::format(path.display().to_string(), msg);
        if bytes.len() < 20 || &bytes[..8] != CODEBOOK_MAGIC {
            return Err(fail("bad codebook magic"));
        }
        let u32_at = |off: usize| {
            u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize
        };
        let k = u32_at(8);
        let f = u32_at(12);
        let channels = u32_at(16);
        let dim = f * f * channels;
        let need = 20 + k * dim * 8;
        if bytes.len() != need {
            return Err(fail(&format!("expected {} bytes, got {}", need, bytes.len())));
        }
        let mut entries = Vec::with_capacity(k);
        let mut off = 20;
        for _ in 0..k {
            let mut e = Vec::with_capacity(dim);
            for _ in 0..dim {
                e.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
                off += 8;
            }
            entries.push(e);
        }
        Ok(Codebook::new_unchecked(f, channels, entries))
    }
}

/// All `f`×`f` patches of an image, row-major, each flattened with
/// channels interleaved.
pub fn extract_patches(image: &Image, f: usize) -> Result<Vec<Vec<f64>>> {
    if image.height % f != 0 || image.width % f != 0 {
        return Err(Error::dim(format!(
            "image {}x{} not divisible by patch size {}",
            image.height, image.width, f
        )));
    }
    let (h, w) = (image.height / f, image.width / f);
    let c = image.channels;
    let mut patches = Vec::with_capacity(h * w);
    for pi in 0..h {
        for pj in 0..w {
            let mut patch = Vec::with_capacity(f * f * c);
            for r in 0..f {
                for col in 0..f {
                    for ch in 0..c {
                        patch.push(image.pixel(pi * f + r, pj * f + col, ch));
                    }
                }
            }
            patches.push(patch);
        }
    }
    Ok(patches)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// K-means over all patches of the corpus: k-means++ seeding, Lloyd
/// iterations until an assignment fixpoint or `iterations` rounds. Empty
/// clusters are reseeded to the patch farthest from its centroid.
pub fn fit_codebook(
    images: &[Image],
    k: usize,
    f: usize,
    iterations: usize,
    seed: u64,
) -> Result<Codebook> {
    if images.is_empty() {
        return Err(Error::config("fit_codebook: empty corpus"));
    }
    let channels = images[0].channels;
    let mut patches = Vec::new();
    for img in images {
        if img.channels != channels {
            return Err(Error::dim("fit_codebook: mixed channel counts"));
        }
        patches.extend(extract_patches(img, f)?);
    }
    let mut distinct = patches.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if k > distinct.len() {
        return Err(Error::config(format!(
            "K={} exceeds {} distinct patches in corpus",
            k,
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding over the distinct patches (duplicates would skew
    // the seeding toward repeated constants without adding information).
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(distinct[rng.random_range(0..distinct.len())].clone());
    let mut d2: Vec<f64> = distinct.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut chosen = d2.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.random_range(0..distinct.len())
        };
        centroids.push(distinct[pick].clone());
        let last = centroids.last().unwrap();
        for (i, p) in distinct.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, last));
        }
    }

    // Lloyd iterations over the full (duplicated) patch set.
    let dim = f * f * channels;
    let mut assign = vec![usize::MAX; patches.len()];
    for _ in 0..iterations {
        let mut changed = false;
        for (i, p) in patches.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cent) in centroids.iter().enumerate() {
                let d = sq_dist(p, cent);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in patches.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in &mut sums[c] {
                    *s /= counts[c] as f64;
                }
                centroids[c] = sums[c].clone();
            } else {
                // Reseed to the patch farthest from its assigned centroid.
                let far = (0..patches.len())
                    .max_by(|&a, &b| {
                        let da = sq_dist(&patches[a], &centroids[assign[a]]);
                        let db = sq_dist(&patches[b], &centroids[assign[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids[c] = patches[far].clone();
            }
        }
    }

    Codebook::new(f, channels, centroids)
}

/// Deterministic encoding: each patch to its nearest codebook entry.
pub fn encode(image: &Image, codebook: &Codebook) -> Result<TokenGrid> {
    if image.channels != codebook.channels {
        return Err(Error::dim(format!(
            "encode: image has {} channels, codebook {}",
            image.channels, codebook.channels
        )));
    }
    let f = codebook.patch_size;
    let patches = extract_patches(image, f)?;
    let (h, w) = (image.height / f, image.width / f);
    let tokens = patches.iter().map(|p| codebook.nearest(p)).collect();
    Ok(TokenGrid::from_tokens_unchecked(h, w, tokens))
}

/// Paste each token's codebook patch at its pixel location; clamps to [0,1].
pub fn decode(grid: &TokenGrid, codebook: &Codebook) -> Result<Image> {
    let f = codebook.patch_size;
    let c = codebook.channels;
    let mut img = Image::zeros(grid.h * f, grid.w * f, c)?;
    for pi in 0..grid.h {
        for pj in 0..grid.w {
            let tok = grid.at(pi, pj);
            if tok >= codebook.k() {
                return Err(Error::Index(format!("decode: token {} >= K={}", tok, codebook.k())));
            }
            let entry = codebook.entry(tok);
            let mut idx = 0;
            for r in 0..f {
                for col in 0..f {
                    for ch in 0..c {
                        img.set_pixel(pi * f + r, pj * f + col, ch, entry[idx].clamp(0.0, 1.0));
                        idx += 1;
                    }
                }
            }
        }
    }
    Ok(img)
}

/// Drop entries never produced by `encode` over the corpus.
///
/// Returns the shrunk codebook and an old→new remap covering *all* old
/// indices; unused old indices map to a seed-chosen retained entry.
pub fn shrink_codebook(
    codebook: &Codebook,
    corpus: &[Image],
    seed: u64,
) -> Result<(Codebook, Vec<usize>)> {
    if corpus.is_empty() {
        return Err(Error::config("shrink_codebook: empty corpus"));
    }
    let mut used = vec![false; codebook.k()];
    for img in corpus {
        for &t in encode(img, codebook)?.tokens() {
            used[t] = true;
        }
    }
    let mut new_index = vec![usize::MAX; codebook.k()];
    let mut entries = Vec::new();
    for (old, &u) in used.iter().enumerate() {
        if u {
            new_index[old] = entries.len();
            entries.push(codebook.entry(old).to_vec());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fallback = rng.random_range(0..entries.len());
    for (old, &u) in used.iter().enumerate() {
        if !u {
            new_index[old] = fallback;
        }
    }
    Ok((Codebook::new_unchecked(codebook.patch_size, codebook.channels, entries), new_index))
}

/// Per-image reconstruction MSE plus the corpus mean, in pixel units.
pub fn reconstruction_report(images: &[Image], codebook: &Codebook) -> Result<(Vec<f64>, f64)> {
    let mut per_image = Vec::with_capacity(images.len());
    for img in images {
        let rec = decode(&encode(img, codebook)?, codebook)?;
        per_image.push(img.mse(&rec)?);
    }
    let mean = if per_image.is_empty() {
        0.0
    } else {
        per_image.iter().sum::<f64>() / per_image.len() as f64
    };
    Ok((per_image, mean))
}
