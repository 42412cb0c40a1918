//! Brute-force references for the image operations.

/// Pixel coordinates of every block, found by bucketing each pixel by
/// `(row / k, col / k)`. Blocks are listed band by band, left to right.
pub fn tile(width: usize, height: usize, k: usize) -> Vec<Vec<(usize, usize)>> {
    let bands = height.div_ceil(k);
    let per_band = width.div_ceil(k);
    let mut blocks = vec![Vec::new(); bands * per_band];
    for r in 0..height {
        for c in 0..width {
            blocks[(r / k) * per_band + c / k].push((r, c));
        }
    }
    blocks
}

pub fn lower_median(values: &[u8]) -> u8 {
    let mut v = values.to_vec();
    v.sort();
    v[(v.len() - 1) / 2]
}

/// The unique contiguous partition of `medians` in which every neighbour pair
/// inside a group differs by less than `tau` and every pair across a cut by
/// `tau` or more, found by trying all `2^(n-1)` cut sets.
pub fn chained_groups(medians: &[u8], tau: u8) -> Vec<Vec<usize>> {
    let n = medians.len();
    assert!((1..=16).contains(&n));
    let mut found = None;
    for cuts in 0u32..1 << (n - 1) {
        let ok = (0..n - 1).all(|i| {
            let cut = cuts >> i & 1 == 1;
            let close = medians[i].abs_diff(medians[i + 1]) < tau;
            cut != close
        });
        if ok {
            assert!(found.is_none(), "chaining rule admits two partitions");
            found = Some(cuts);
        }
    }
    let cuts = found.expect("chaining rule admits no partition");
    let mut groups = vec![vec![0]];
    for i in 1..n {
        if cuts >> (i - 1) & 1 == 1 {
            groups.push(Vec::new());
        }
        groups.last_mut().unwrap().push(i);
    }
    groups
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tau {
    /// Minimum of `beta * (1 - alpha)`, clamped into `0..=255`.
    MinValue,
    /// The `alpha` minimizing `beta * (1 - alpha)`, smallest on ties.
    Argmin,
}

pub fn tau(medians: &[u8], rule: Tau) -> u8 {
    let mut freq = std::collections::BTreeMap::<i64, i64>::new();
    for w in medians.windows(2) {
        *freq.entry((w[0] as i64 - w[1] as i64).abs()).or_default() += 1;
    }
    let Some(best) = freq.iter().map(|(&a, &b)| (b * (1 - a), a)).min() else {
        return 0;
    };
    match rule {
        Tau::MinValue => best.0.clamp(0, 255) as u8,
        Tau::Argmin => best.1 as u8,
    }
}

/// Reference merge filter on a row-major image.
pub fn merge_filter(width: usize, height: usize, pixels: &[u8], k: usize, rule: Tau) -> Vec<u8> {
    let mut out = pixels.to_vec();
    let per_band = width.div_ceil(k);
    let blocks = tile(width, height, k);
    for band in blocks.chunks(per_band) {
        let values: Vec<Vec<u8>> = band
            .iter()
            .map(|b| b.iter().map(|&(r, c)| pixels[r * width + c]).collect())
            .collect();
        let medians: Vec<u8> = values.iter().map(|v| lower_median(v)).collect();
        let t = tau(&medians, rule);
        let mut start = 0;
        for i in 1..=medians.len() {
            if i == medians.len() || medians[i - 1].abs_diff(medians[i]) >= t {
                let union: Vec<u8> = values[start..i].concat();
                let m = lower_median(&union);
                for b in &band[start..i] {
                    for &(r, c) in b {
                        out[r * width + c] = m;
                    }
                }
                start = i;
            }
        }
    }
    out
}

/// Sliding median with clamped borders, by sorting every window.
pub fn median_filter(width: usize, height: usize, pixels: &[u8], window: usize) -> Vec<u8> {
    let half = (window / 2) as i64;
    let at = |r: i64, c: i64| {
        let r = r.clamp(0, height as i64 - 1) as usize;
        let c = c.clamp(0, width as i64 - 1) as usize;
        pixels[r * width + c]
    };
    let mut out = Vec::with_capacity(pixels.len());
    for r in 0..height as i64 {
        for c in 0..width as i64 {
            let mut win = Vec::new();
            for dr in -half..=half {
                for dc in -half..=half {
                    win.push(at(r + dr, c + dc));
                }
            }
            win.sort();
            out.push(win[win.len() / 2]);
        }
    }
    out
}

/// Gaussian blur as one dense 2-D convolution with clamped borders.
pub fn gaussian_dense(width: usize, height: usize, pixels: &[u8], sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut weights = Vec::new();
    let mut total = 0.0;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let w = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            weights.push((dy, dx, w));
            total += w;
        }
    }
    let mut out = Vec::with_capacity(pixels.len());
    for r in 0..height as i64 {
        for c in 0..width as i64 {
            let mut acc = 0.0;
            for &(dy, dx, w) in &weights {
                let rr = (r + dy).clamp(0, height as i64 - 1) as usize;
                let cc = (c + dx).clamp(0, width as i64 - 1) as usize;
                acc += w * pixels[rr * width + cc] as f64;
            }
            out.push(acc / total);
        }
    }
    out
}

/// Explicit Perona-Malik on a single row, border neighbours mirrored onto themselves.
pub fn diffusion_1d(row: &[f64], iterations: usize, kappa: f64, lambda: f64) -> Vec<f64> {
    let mut cur = row.to_vec();
    let n = cur.len();
    for _ in 0..iterations {
        let mut next = cur.clone();
        for i in 0..n {
            let mut flux = 0.0;
            for j in [i.saturating_sub(1), (i + 1).min(n - 1)] {
                let d = cur[j] - cur[i];
                flux += (-(d / kappa).powi(2)).exp() * d;
            }
            next[i] = cur[i] + lambda * flux;
        }
        cur = next;
    }
    cur
}
