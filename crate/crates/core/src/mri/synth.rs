use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::phantom::shepp_logan;
use crate::blockspace::{Block, Field, C64};
use crate::error::{Error, Result};
use crate::linops::{LinOp, PmriOperator};

const MASK_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Realized ratios must land this close to the request.
pub const RATIO_TOLERANCE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaskKind {
    Poisson(f64),
    Radial(f64),
}

impl MaskKind {
    pub fn ratio(&self) -> f64 {
        match *self {
            MaskKind::Poisson(r) | MaskKind::Radial(r) => r,
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskKind::Poisson(r) => write!(f, "poisson:{r}"),
            MaskKind::Radial(r) => write!(f, "radial:{r}"),
        }
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, ratio) = s
            .split_once(':')
            .ok_or_else(|| Error::param(format!("mask `{s}` is not of the form kind:ratio")))?;
        let r: f64 = ratio
            .parse()
            .map_err(|_| Error::param(format!("mask ratio `{ratio}` is not a number")))?;
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::param(format!("mask ratio must lie in (0, 1], got {r}")));
        }
        match kind {
            "poisson" => Ok(MaskKind::Poisson(r)),
            "radial" => Ok(MaskKind::Radial(r)),
            _ => Err(Error::param(format!("unknown mask kind `{kind}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    pub coils: usize,
    pub mask: MaskKind,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Ground truth, acquisition model and noisy measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct MriDataset {
    pub rows: usize,
    pub cols: usize,
    pub ground_truth: Vec<f64>,
    pub sensitivities: Vec<Vec<C64>>,
    pub mask: Vec<u8>,
    /// Stacked `[coils, rows, cols]` k-space, zero off the mask.
    pub kspace: Block,
    pub noise_sigma: f64,
    pub seed: u64,
    pub mask_kind: Option<MaskKind>,
}

impl MriDataset {
    pub fn coils(&self) -> usize {
        self.sensitivities.len()
    }

    pub fn ratio(&self) -> f64 {
        self.mask.iter().filter(|&&b| b == 1).count() as f64 / self.mask.len() as f64
    }

    pub fn operator(&self) -> Result<PmriOperator> {
        PmriOperator::new(self.rows, self.cols, self.sensitivities.clone(), self.mask.clone())
    }

    /// Magnitude of `Aᵀû`.
    pub fn zero_filled_magnitude(&self) -> Result<Vec<f64>> {
        Ok(self.operator()?.zero_filled(&self.kspace)?.magnitude())
    }
}

/// Signed frequency of index `i` along an axis of length `n` (unshifted layout).
fn signed_freq(i: usize, n: usize) -> f64 {
    if i < n.div_ceil(2) {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Smooth complex Gaussians centred on equispaced points of the image
/// boundary, normalized so `Σ|S_i|² = 1` at every pixel.
pub fn coil_sensitivities(m: usize, n: usize, coils: usize) -> Result<Vec<Vec<C64>>> {
    if coils == 0 {
        return Err(Error::param("at least one coil is required"));
    }
    if coils == 1 {
        return Ok(vec![vec![C64::new(1.0, 0.0); m * n]]);
    }
    let width = 0.8;
    let mut sens: Vec<Vec<C64>> = (0..coils)
        .map(|c| {
            let t = 2.0 * PI * c as f64 / coils as f64;
            let (s, co) = t.sin_cos();
            let r = s.abs().max(co.abs());
            let (cx, cy) = (co / r, s / r);
            let phase = C64::from_polar(1.0, t);
            let mut v = Vec::with_capacity(m * n);
            for i in 0..m {
                let y = 1.0 - (2 * i + 1) as f64 / m as f64;
                for j in 0..n {
                    let x = (2 * j + 1) as f64 / n as f64 - 1.0;
                    let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                    v.push(phase * (-d2 / (2.0 * width * width)).exp());
                }
            }
            v
        })
        .collect();
    for p in 0..m * n {
        let norm = sens.iter().map(|s| s[p].norm_sqr()).sum::<f64>().sqrt();
        for s in &mut sens {
            s[p] /= norm;
        }
    }
    Ok(sens)
}

fn target_count(ratio: f64, total: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::param(format!("mask ratio must lie in (0, 1], got {ratio}")));
    }
    let t = (ratio * total as f64).round() as usize;
    if t == 0 {
        return Err(Error::param(format!("ratio {ratio} selects no samples")));
    }
    Ok(t.min(total))
}

/// Variable-density random mask with a fully sampled centre and exactly
/// `round(ratio·MN)` samples, drawn by weighted sampling without replacement.
pub fn poisson_mask(m: usize, n: usize, ratio: f64, rng: &mut impl Rng) -> Result<Vec<u8>> {
    let total = m * n;
    let target = target_count(ratio, total)?;
    let mut mask = vec![0u8; total];
    if target == total {
        mask.fill(1);
        return Ok(mask);
    }
    let half = ((target as f64 * 0.15).sqrt() / 2.0).floor().max(0.0);
    let mut centre = 0;
    for i in 0..m {
        for j in 0..n {
            if signed_freq(i, m).abs() <= half && signed_freq(j, n).abs() <= half {
                mask[i * n + j] = 1;
                centre += 1;
            }
        }
    }
    let mut keys: Vec<(f64, usize)> = Vec::with_capacity(total);
    for i in 0..m {
        let fy = signed_freq(i, m) / (m as f64 / 2.0);
        for j in 0..n {
            let fx = signed_freq(j, n) / (n as f64 / 2.0);
            let r = ((fx * fx + fy * fy) / 2.0).sqrt().min(1.0);
            let weight = (1.0 - r).powi(2) + 1e-3;
            let u: f64 = rng.random();
            if mask[i * n + j] == 0 {
                keys.push((u.powf(1.0 / weight), i * n + j));
            }
        }
    }
    keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, p) in keys.iter().take(target.saturating_sub(centre)) {
        mask[p] = 1;
    }
    Ok(mask)
}

fn radial_with_spokes(m: usize, n: usize, spokes: usize) -> Vec<u8> {
    let mut mask = vec![0u8; m * n];
    let reach = (m.max(n) as f64) * 0.75;
    let (hm, hn) = (m as f64 / 2.0, n as f64 / 2.0);
    for s in 0..spokes {
        let (sin, cos) = (PI * s as f64 / spokes as f64).sin_cos();
        let steps = (4.0 * reach) as i64;
        for t in -steps..=steps {
            let r = t as f64 * 0.25;
            let fy = (r * sin).round();
            let fx = (r * cos).round();
            if fy < -hm || fy >= hm || fx < -hn || fx >= hn {
                continue;
            }
            let i = fy.rem_euclid(m as f64) as usize;
            let j = fx.rem_euclid(n as f64) as usize;
            mask[i * n + j] = 1;
        }
    }
    mask
}

/// Straight spokes through the k-space centre; the spoke count is chosen so
/// the realized ratio is closest to the request.
pub fn radial_mask(m: usize, n: usize, ratio: f64) -> Result<Vec<u8>> {
    target_count(ratio, m * n)?;
    let count = |mask: &[u8]| mask.iter().filter(|&&b| b == 1).count() as f64 / (m * n) as f64;
    let mut best: Option<(f64, Vec<u8>)> = None;
    for spokes in 1..=4 * m.max(n) {
        let mask = radial_with_spokes(m, n, spokes);
        let r = count(&mask);
        let gap = (r - ratio).abs();
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((gap, mask));
        }
        if r > ratio + RATIO_TOLERANCE {
            break;
        }
    }
    match best {
        Some((gap, mask)) if gap <= RATIO_TOLERANCE => Ok(mask),
        Some((_, mask)) => Err(Error::param(format!(
            "radial mask cannot reach ratio {ratio} within ±{RATIO_TOLERANCE} (closest {:.3})",
            count(&mask)
        ))),
        None => Err(Error::param("radial mask search failed")),
    }
}

/// Phantom, coil maps, mask and noisy k-space, deterministic in the seed.
pub fn synthesize_dataset(cfg: &SynthConfig) -> Result<MriDataset> {
    let (m, n) = (cfg.rows, cfg.cols);
    for d in [m, n] {
        if d < 2 || !d.is_power_of_two() {
            return Err(Error::param(format!("image size {d} is not a power of two ≥ 2")));
        }
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(Error::param(format!("noise σ must be non-negative, got {}", cfg.noise_sigma)));
    }
    let ground_truth = shepp_logan(m, n);
    let sensitivities = coil_sensitivities(m, n, cfg.coils)?;
    let mask = match cfg.mask {
        MaskKind::Poisson(r) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(MASK_STREAM);
            poisson_mask(m, n, r, &mut rng)?
        }
        MaskKind::Radial(r) => radial_mask(m, n, r)?,
    };
    let op = PmriOperator::new(m, n, sensitivities.clone(), mask.clone())?;
    let u0 = Block::from_real(&[m, n], &ground_truth)?.with_field(Field::Complex);
    let mut kspace = op.forward(&u0)?;
    if cfg.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(NOISE_STREAM);
        let normal = Normal::new(0.0, cfg.noise_sigma / 2f64.sqrt())
            .map_err(|e| Error::param(e.to_string()))?;
        for chan in kspace.data_mut().chunks_mut(m * n) {
            for (z, &p) in chan.iter_mut().zip(&mask) {
                if p == 1 {
                    *z += C64::new(normal.sample(&mut rng), normal.sample(&mut rng));
                }
            }
        }
    }
    Ok(MriDataset {
        rows: m,
        cols: n,
        ground_truth,
        sensitivities,
        mask,
        kspace,
        noise_sigma: cfg.noise_sigma,
        seed: cfg.seed,
        mask_kind: Some(cfg.mask),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::ifft2_unitary;

    fn cfg(mask: MaskKind) -> SynthConfig {
        SynthConfig { rows: 64, cols: 64, coils: 4, mask, noise_sigma: 0.01, seed: 7 }
    }

    #[test]
    fn full_ratio_gives_full_mask() {
        let d = synthesize_dataset(&cfg(MaskKind::Poisson(1.0))).unwrap();
        assert!(d.mask.iter().all(|&b| b == 1));
    }

    #[test]
    fn poisson_ratio_and_centre() {
        let d = synthesize_dataset(&cfg(MaskKind::Poisson(0.3))).unwrap();
        assert!((d.ratio() - 0.3).abs() <= RATIO_TOLERANCE);
        assert_eq!(d.mask[0], 1);
        assert_eq!(d.mask[1], 1);
        assert_eq!(d.mask[63], 1);
    }

    #[test]
    fn radial_ratio() {
        let d = synthesize_dataset(&cfg(MaskKind::Radial(0.34))).unwrap();
        assert!((d.ratio() - 0.34).abs() <= RATIO_TOLERANCE, "{}", d.ratio());
    }

    #[test]
    fn deterministic_in_seed() {
        let a = synthesize_dataset(&cfg(MaskKind::Poisson(0.3))).unwrap();
        let b = synthesize_dataset(&cfg(MaskKind::Poisson(0.3))).unwrap();
        assert_eq!(a, b);
        let c = synthesize_dataset(&SynthConfig { seed: 8, ..cfg(MaskKind::Poisson(0.3)) }).unwrap();
        assert_ne!(a.mask, c.mask);
    }

    #[test]
    fn noise_only_inside_mask() {
        let d = synthesize_dataset(&cfg(MaskKind::Poisson(0.3))).unwrap();
        for chan in d.kspace.data().chunks(64 * 64) {
            for (z, &p) in chan.iter().zip(&d.mask) {
                if p == 0 {
                    assert_eq!(*z, C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn sensitivities_are_normalized() {
        let s = coil_sensitivities(16, 16, 4).unwrap();
        for p in 0..256 {
            let e: f64 = s.iter().map(|c| c[p].norm_sqr()).sum();
            assert!((e - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_inversion_single_coil() {
        let d = synthesize_dataset(&SynthConfig {
            rows: 16,
            cols: 16,
            coils: 1,
            mask: MaskKind::Poisson(1.0),
            noise_sigma: 0.0,
            seed: 1,
        })
        .unwrap();
        let k = d.kspace.clone().reshaped(&[16, 16]).unwrap();
        let u = ifft2_unitary(&k).unwrap();
        for (a, b) in u.data().iter().zip(&d.ground_truth) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn size_and_ratio_validation() {
        let bad = SynthConfig { rows: 63, ..cfg(MaskKind::Poisson(0.3)) };
        assert!(matches!(synthesize_dataset(&bad), Err(Error::Parameter(_))));
        assert!("poisson:0".parse::<MaskKind>().is_err());
        assert!("poisson:1.5".parse::<MaskKind>().is_err());
        assert!("spiral:0.3".parse::<MaskKind>().is_err());
        assert_eq!("radial:0.34".parse::<MaskKind>().unwrap(), MaskKind::Radial(0.34));
    }
}
