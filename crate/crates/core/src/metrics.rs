//! Image and trace metrics.
//!
//! Entropy uses one histogram bin per representable pixel value and the
//! standard Shannon sign convention, so it lies in `[0, bit_depth]` bits.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::frame::FrameBuffer;
use crate::scene::TargetTrace;

/// Pixel rectangle `[x, x + width) x [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub bits: f64,
    pub histogram_bins: usize,
    pub pixel_count: usize,
    pub region: Option<Region>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    pub michelson: f64,
    pub rms: f64,
    pub i5: f64,
    pub i50: f64,
    pub i90: f64,
}

/// Shannon entropy of the pixel-value histogram, optionally restricted to `region`.
pub fn entropy(frame: &FrameBuffer, region: Option<Region>) -> Result<EntropyReport> {
    let bins = 1usize << frame.bit_depth();
    let mut histogram = vec![0u64; bins];
    let pixel_count = match region {
        None => {
            for &p in frame.pixels() {
                histogram[p as usize] += 1;
            }
            frame.pixels().len()
        }
        Some(r) => {
            if r.width == 0 || r.height == 0 {
                return Err(Error::Empty("entropy region"));
            }
            let fits = u64::from(r.x) + u64::from(r.width) <= u64::from(frame.width())
                && u64::from(r.y) + u64::from(r.height) <= u64::from(frame.height());
            if !fits {
                return Err(invalid(format!(
                    "region {r:?} exceeds frame {}x{}",
                    frame.width(),
                    frame.height()
                )));
            }
            for row in frame.rows().skip(r.y as usize).take(r.height as usize) {
                for &p in &row[r.x as usize..(r.x + r.width) as usize] {
                    histogram[p as usize] += 1;
                }
            }
            (r.width as usize) * (r.height as usize)
        }
    };
    Ok(EntropyReport { bits: entropy_of_counts(&histogram, pixel_count as u64), histogram_bins: bins, pixel_count, region })
}

/// Mean of per-channel entropies.
pub fn entropy_multichannel(channels: &[FrameBuffer], region: Option<Region>) -> Result<f64> {
    if channels.is_empty() {
        return Err(Error::Empty("channel list"));
    }
    let total: f64 = channels.iter().map(|c| entropy(c, region).map(|r| r.bits)).sum::<Result<f64>>()?;
    Ok(total / channels.len() as f64)
}

fn entropy_of_counts(histogram: &[u64], total: u64) -> f64 {
    let n = total as f64;
    let h: f64 = histogram
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    // a single populated bin gives -1 * log2(1) = -0.0
    h.max(0.0)
}

/// `(i90 - i5) / (i90 + i5)`.
pub fn michelson_contrast(i90: f64, i5: f64) -> Result<f64> {
    let sum = i90 + i5;
    if sum == 0.0 {
        return Err(Error::UndefinedContrast);
    }
    Ok((i90 - i5) / sum)
}

/// `sqrt((i90 - i50)^2 / 2 + (i5 - i50)^2 / 2)`.
pub fn rms_contrast(i5: f64, i50: f64, i90: f64) -> f64 {
    (0.5 * (i90 - i50).powi(2) + 0.5 * (i5 - i50).powi(2)).sqrt()
}

/// Largest binned mean and its bin centre; ties go to the nearer bin.
pub fn peak_intensity(trace: &TargetTrace) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for bin in &trace.binned {
        let better = match best {
            None => true,
            Some((value, depth)) => {
                bin.mean_intensity > value || (bin.mean_intensity == value && bin.center_m < depth)
            }
        };
        if better {
            best = Some((bin.mean_intensity, bin.center_m));
        }
    }
    best.ok_or(Error::Empty("trace"))
}

/// Closed depth interval used to average traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthWindow {
    pub start_m: f64,
    pub end_m: f64,
}

impl Default for DepthWindow {
    fn default() -> Self {
        Self { start_m: 5.0, end_m: 10.0 }
    }
}

impl DepthWindow {
    pub fn contains(&self, d: f64) -> bool {
        d >= self.start_m && d <= self.end_m
    }
}

/// Mean of a trace's binned means whose centres lie in `window`.
pub fn window_mean(trace: &TargetTrace, window: DepthWindow) -> Result<f64> {
    let values: Vec<f64> =
        trace.binned.iter().filter(|b| window.contains(b.center_m)).map(|b| b.mean_intensity).collect();
    if values.is_empty() {
        return Err(Error::Insufficient(format!(
            "no bins of the rho={} trace fall within {}-{} m",
            trace.rho, window.start_m, window.end_m
        )));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Averages the 5 %, 50 % and 90 % traces over `window` and computes both contrasts.
pub fn contrast_window(traces: &[TargetTrace], window: DepthWindow) -> Result<ContrastReport> {
    let find = |rho: f64| {
        traces
            .iter()
            .find(|t| (t.rho - rho).abs() < 1e-9)
            .ok_or_else(|| Error::Insufficient(format!("missing trace for rho={rho}")))
    };
    let i5 = window_mean(find(0.05)?, window)?;
    let i50 = window_mean(find(0.50)?, window)?;
    let i90 = window_mean(find(0.90)?, window)?;
    Ok(ContrastReport { michelson: michelson_contrast(i90, i5)?, rms: rms_contrast(i5, i50, i90), i5, i50, i90 })
}

/// Reduces frames of different sensors to a common resolution and bit depth
/// (the smallest of each) so their entropies are comparable.
pub fn normalize_for_comparison(frames: &[FrameBuffer]) -> Result<Vec<FrameBuffer>> {
    let width = frames.iter().map(FrameBuffer::width).min().ok_or(Error::Empty("frame list"))?;
    let height = frames.iter().map(FrameBuffer::height).min().unwrap_or(0);
    let bits = frames.iter().map(FrameBuffer::bit_depth).min().unwrap_or(0);
    frames.iter().map(|f| f.box_downsample(width, height)?.reduce_bit_depth(bits)).collect()
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("value series"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::DepthBin;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn trace(rho: f64, bins: &[(f64, f64)]) -> TargetTrace {
        TargetTrace::from_bins(
            rho,
            bins.iter().map(|&(c, m)| DepthBin { center_m: c, mean_intensity: m, std: 0.0, count: 1 }).collect(),
        )
    }

    #[test]
    fn entropy_examples() {
        let constant = FrameBuffer::from_pixels(8, 8, 12, vec![1234; 64]).unwrap();
        assert_eq!(entropy(&constant, None).unwrap().bits, 0.0);

        let halves = FrameBuffer::from_pixels(4, 2, 12, vec![0, 0, 0, 0, 9, 9, 9, 9]).unwrap();
        assert_relative_eq!(entropy(&halves, None).unwrap().bits, 1.0);

        let all: Vec<u16> = (0..4096).collect();
        let full = FrameBuffer::from_pixels(64, 64, 12, all).unwrap();
        let report = entropy(&full, None).unwrap();
        assert_relative_eq!(report.bits, 12.0, max_relative = 1e-12);
        assert_eq!(report.histogram_bins, 4096);
        assert_eq!(report.pixel_count, 4096);
    }

    #[test]
    fn entropy_region() {
        let frame = FrameBuffer::from_pixels(4, 2, 8, vec![0, 1, 7, 7, 2, 3, 7, 7]).unwrap();
        let r = Region { x: 2, y: 0, width: 2, height: 2 };
        assert_eq!(entropy(&frame, Some(r)).unwrap().bits, 0.0);
        let r = Region { x: 0, y: 0, width: 2, height: 2 };
        assert_relative_eq!(entropy(&frame, Some(r)).unwrap().bits, 2.0);
        assert!(matches!(entropy(&frame, Some(Region { x: 0, y: 0, width: 0, height: 1 })), Err(Error::Empty(_))));
        assert!(entropy(&frame, Some(Region { x: 3, y: 0, width: 2, height: 1 })).is_err());
    }

    #[test]
    fn multichannel_averages() {
        let a = FrameBuffer::from_pixels(2, 1, 8, vec![0, 1]).unwrap();
        let b = FrameBuffer::from_pixels(2, 1, 8, vec![5, 5]).unwrap();
        assert_relative_eq!(entropy_multichannel(&[a, b], None).unwrap(), 0.5);
        assert!(entropy_multichannel(&[], None).is_err());
    }

    #[test]
    fn michelson_examples() {
        assert_eq!(michelson_contrast(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(michelson_contrast(0.3, 0.0).unwrap(), 1.0);
        assert_relative_eq!(michelson_contrast(0.4, 0.1).unwrap(), 0.6, max_relative = 1e-15);
        assert_eq!(michelson_contrast(0.0, 0.0), Err(Error::UndefinedContrast));
    }

    #[test]
    fn rms_examples() {
        assert_eq!(rms_contrast(0.2, 0.2, 0.2), 0.0);
        assert_relative_eq!(rms_contrast(0.1, 0.25, 0.4), 0.15, max_relative = 1e-14);
        assert_relative_eq!(rms_contrast(0.3, 0.75, 1.2), 3.0 * rms_contrast(0.1, 0.25, 0.4), max_relative = 1e-14);
    }

    #[test]
    fn peak_examples() {
        assert_eq!(peak_intensity(&trace(0.5, &[(4.5, 0.3)])).unwrap(), (0.3, 4.5));
        assert_eq!(peak_intensity(&trace(0.5, &[(1.5, 0.5), (2.5, 0.4), (3.5, 0.2)])).unwrap(), (0.5, 1.5));
        assert_eq!(peak_intensity(&trace(0.5, &[(1.5, 0.1), (2.5, 0.4), (3.5, 0.4)])).unwrap(), (0.4, 2.5));
        assert!(peak_intensity(&trace(0.5, &[])).is_err());
    }

    #[test]
    fn peak_of_shifted_model_sits_at_onset() {
        use crate::atmosphere::AdaptedModel;
        // i0 dominates I_inf, so the clamped plateau up to d0 is the maximum
        let model = AdaptedModel { i0: 0.4, i_inf: 0.1, d0_m: 5.0, beta_per_m: 0.06, beta_a_per_m: 0.03 };
        let bins: Vec<(f64, f64)> = (0..25).map(|k| (k as f64 + 0.5, model.eval(k as f64 + 0.5))).collect();
        let (value, depth) = peak_intensity(&trace(0.9, &bins)).unwrap();
        assert_eq!(value, 0.4);
        // ties resolve toward the nearest bin of the plateau
        assert_eq!(depth, 0.5);
        let past_onset: Vec<(f64, f64)> = bins.into_iter().filter(|&(c, _)| c >= 4.5).collect();
        let (_, depth) = peak_intensity(&trace(0.9, &past_onset)).unwrap();
        assert_eq!(depth, 4.5);
    }

    #[test]
    fn contrast_window_examples() {
        let same: Vec<_> = [0.05, 0.5, 0.9].iter().map(|&r| trace(r, &[(5.5, 0.3), (6.5, 0.3)])).collect();
        let report = contrast_window(&same, DepthWindow::default()).unwrap();
        assert_eq!((report.michelson, report.rms), (0.0, 0.0));

        for k in [0.1, 0.37, 1.0] {
            let prop: Vec<_> = [0.05, 0.5, 0.9].iter().map(|&r| trace(r, &[(7.5, k * r), (8.5, k * r)])).collect();
            let report = contrast_window(&prop, DepthWindow::default()).unwrap();
            assert_relative_eq!(report.michelson, 0.85 / 0.95, max_relative = 1e-12);
        }

        let missing = vec![trace(0.05, &[(6.0, 0.1)]), trace(0.9, &[(6.0, 0.2)])];
        assert!(contrast_window(&missing, DepthWindow::default()).is_err());
        let outside: Vec<_> = [0.05, 0.5, 0.9].iter().map(|&r| trace(r, &[(20.5, r)])).collect();
        assert!(contrast_window(&outside, DepthWindow::default()).is_err());
    }

    #[test]
    fn comparison_normalization() {
        let a = FrameBuffer::from_pixels(4, 4, 12, vec![4095; 16]).unwrap();
        let b = FrameBuffer::from_pixels(2, 2, 10, vec![3; 4]).unwrap();
        let out = normalize_for_comparison(&[a, b]).unwrap();
        assert!(out.iter().all(|f| f.width() == 2 && f.height() == 2 && f.bit_depth() == 10));
        assert_eq!(out[0].pixels(), &[1023; 4]);
    }

    #[test]
    fn mean_std_of_series() {
        assert_eq!(mean_std(&[0.0, 0.0, 0.0]).unwrap(), (0.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert_relative_eq!(s, 2f64.sqrt());
        assert!(mean_std(&[]).is_err());
    }

    proptest! {
        #[test]
        fn entropy_permutation_invariant_and_bounded(mut pixels in proptest::collection::vec(0u16..1024, 64), seed in any::<u64>()) {
            let a = FrameBuffer::from_pixels(8, 8, 10, pixels.clone()).unwrap();
            // deterministic shuffle
            let mut s = seed;
            for i in (1..pixels.len()).rev() {
                s = crate::scene::derive_seed(s, i as u64);
                pixels.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let b = FrameBuffer::from_pixels(8, 8, 10, pixels).unwrap();
            let ha = entropy(&a, None).unwrap().bits;
            prop_assert!((ha - entropy(&b, None).unwrap().bits).abs() < 1e-12);
            prop_assert!((0.0..=10.0).contains(&ha));
        }

        #[test]
        fn michelson_scale_invariant(i90 in 0.001f64..1.0, i5 in 0.001f64..1.0, k in 0.01f64..100.0) {
            let a = michelson_contrast(i90, i5).unwrap();
            prop_assert!((a - michelson_contrast(k * i90, k * i5).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
            if i90 >= i5 { prop_assert!(a >= 0.0); }
        }

        #[test]
        fn rms_translation_invariant_and_homogeneous(i5 in -1.0f64..1.0, i50 in -1.0f64..1.0, i90 in -1.0f64..1.0, c in -1.0f64..1.0, k in -10.0f64..10.0) {
            let base = rms_contrast(i5, i50, i90);
            prop_assert!(base >= 0.0);
            prop_assert!((rms_contrast(i5 + c, i50 + c, i90 + c) - base).abs() < 1e-12);
            prop_assert!((rms_contrast(k * i5, k * i50, k * i90) - k.abs() * base).abs() < 1e-12 * (1.0 + k.abs()));
        }
    }
}
