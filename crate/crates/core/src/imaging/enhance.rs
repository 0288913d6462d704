use super::{quantize, ColorSpace, Image, LEVELS};
use crate::error::{Error, Result};

/// Default detail-enhancement constant.
pub const DEFAULT_DETAIL_K: f64 = 0.005;

fn require_non_empty(img: &Image, op: &str) -> Result<()> {
    if img.is_empty() {
        return Err(Error::Dimension(format!("{op}: empty image")));
    }
    Ok(())
}

/// Keeps pixels whose luminance is strictly above the mean luminance and
/// zeroes every channel elsewhere.
pub fn roi_select(img: &Image) -> Result<Image> {
    require_non_empty(img, "roi_select")?;
    let lum = img.luminance();
    let threshold = lum.iter().sum::<f64>() / lum.len() as f64;
    let ch = img.channels();
    let mut out = img.clone();
    for (px, &l) in out.data_mut().chunks_exact_mut(ch).zip(&lum) {
        if l <= threshold {
            px.fill(0);
        }
    }
    Ok(out)
}

/// Output of [`hist_equalize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equalized {
    pub image: Image,
    /// Set when every pixel shares one level; the image is returned unchanged.
    pub degenerate: bool,
}

/// Builds the level mapping `round((cdf - cdf_min) / (n - cdf_min) * (L - 1))`.
/// Returns `None` when `n == cdf_min`.
fn equalization_map(levels: impl Iterator<Item = u8>) -> Option<[u8; LEVELS]> {
    let mut hist = [0u64; LEVELS];
    let mut n = 0u64;
    for v in levels {
        hist[v as usize] += 1;
        n += 1;
    }
    let mut cdf = [0u64; LEVELS];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0)?;
    if n == cdf_min {
        return None;
    }
    let denom = (n - cdf_min) as f64;
    let mut map = [0u8; LEVELS];
    for (m, &c) in map.iter_mut().zip(&cdf) {
        let num = c.saturating_sub(cdf_min) as f64;
        *m = quantize(num / denom * (LEVELS - 1) as f64);
    }
    Some(map)
}

/// Global histogram equalization. RGB images are equalized on luminance and
/// each pixel's channels are rescaled by the same factor, keeping chroma ratios.
pub fn hist_equalize(img: &Image) -> Result<Equalized> {
    require_non_empty(img, "hist_equalize")?;
    match img.colorspace() {
        ColorSpace::Gray => {
            let Some(map) = equalization_map(img.data().iter().copied()) else {
                return Ok(Equalized { image: img.clone(), degenerate: true });
            };
            let mut out = img.clone();
            for v in out.data_mut() {
                *v = map[*v as usize];
            }
            Ok(Equalized { image: out, degenerate: false })
        }
        ColorSpace::Rgb => {
            let lum = img.luminance();
            let Some(map) = equalization_map(lum.iter().map(|&l| quantize(l))) else {
                return Ok(Equalized { image: img.clone(), degenerate: true });
            };
            let mut out = img.clone();
            for (px, &l) in out.data_mut().chunks_exact_mut(3).zip(&lum) {
                let target = map[quantize(l) as usize] as f64;
                if l > 0.0 {
                    let scale = target / l;
                    for c in px.iter_mut() {
                        *c = quantize(*c as f64 * scale);
                    }
                } else {
                    px.fill(quantize(target));
                }
            }
            Ok(Equalized { image: out, degenerate: false })
        }
    }
}

/// Multiplicative contrast boost about mid-gray: `(1 + k (f - 128)) f`,
/// rounded and clamped per channel.
pub fn detail_enhance(img: &Image, k: f64) -> Result<Image> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::Parameter(format!("detail_enhance: k must be finite and >= 0, got {k}")));
    }
    let mut lut = [0u8; LEVELS];
    for (f, slot) in lut.iter_mut().enumerate() {
        let f = f as f64;
        *slot = quantize((1.0 + k * (f - 128.0)) * f);
    }
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = lut[*v as usize];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(h: usize, w: usize, d: &[u8]) -> Image {
        Image::gray(h, w, d.to_vec()).unwrap()
    }

    #[test]
    fn roi_worked_example() {
        let out = roi_select(&gray(2, 2, &[10, 20, 30, 200])).unwrap();
        assert_eq!(out.data(), &[0, 0, 0, 200]);
    }

    #[test]
    fn roi_degenerate_inputs() {
        assert_eq!(roi_select(&gray(2, 2, &[0; 4])).unwrap().data(), &[0; 4]);
        assert_eq!(roi_select(&gray(2, 2, &[100; 4])).unwrap().data(), &[0; 4]);
        assert!(matches!(roi_select(&gray(0, 0, &[])), Err(Error::Dimension(_))));
    }

    #[test]
    fn roi_masks_all_channels_by_luminance() {
        // luminance: (255,0,0) -> 76.2, (0,0,0) -> 0, (0,255,0) -> 149.7, (10,10,10) -> 10; mean 58.98
        let img = Image::rgb(1, 4, vec![255, 0, 0, 0, 0, 0, 0, 255, 0, 10, 10, 10]).unwrap();
        let out = roi_select(&img).unwrap();
        assert_eq!(out.data(), &[255, 0, 0, 0, 0, 0, 0, 255, 0, 0, 0, 0]);
    }

    #[test]
    fn he_worked_examples() {
        let e = hist_equalize(&gray(2, 2, &[0, 0, 255, 255])).unwrap();
        assert_eq!(e.image.data(), &[0, 0, 255, 255]);
        assert!(!e.degenerate);
        let e = hist_equalize(&gray(1, 4, &[0, 85, 170, 255])).unwrap();
        assert_eq!(e.image.data(), &[0, 85, 170, 255]);
    }

    #[test]
    fn he_constant_image_is_flagged() {
        let img = gray(2, 2, &[42; 4]);
        let e = hist_equalize(&img).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.image, img);
    }

    #[test]
    fn he_rgb_preserves_chroma_ratio() {
        let img = Image::rgb(1, 2, vec![40, 20, 10, 200, 100, 50]).unwrap();
        let e = hist_equalize(&img).unwrap();
        // dark pixel maps to 0, bright pixel to 255 luminance
        assert_eq!(&e.image.data()[..3], &[0, 0, 0]);
        let p = &e.image.data()[3..];
        assert!(p[0] >= p[1] && p[1] >= p[2]);
        assert_eq!(p[0], 255);
    }

    #[test]
    fn de_fixed_points_and_clamp() {
        let img = gray(1, 3, &[128, 0, 200]);
        let out = detail_enhance(&img, 0.01).unwrap();
        assert_eq!(out.data(), &[128, 0, 255]);
        assert!(matches!(detail_enhance(&img, -0.1), Err(Error::Parameter(_))));
    }

    proptest! {
        #[test]
        fn roi_matches_threshold_scan(data in prop::collection::vec(any::<u8>(), 1..64)) {
            let img = gray(1, data.len(), &data);
            let out = roi_select(&img).unwrap();
            let mean = data.iter().map(|&v| v as f64).sum::<f64>() / data.len() as f64;
            for (i, (&o, &v)) in out.data().iter().zip(&data).enumerate() {
                let keep = (v as f64) > mean;
                prop_assert_eq!(o, if keep { v } else { 0 }, "index {}", i);
            }
        }

        #[test]
        fn he_is_monotone(data in prop::collection::vec(any::<u8>(), 2..128)) {
            let img = gray(1, data.len(), &data);
            let e = hist_equalize(&img).unwrap();
            let out = e.image.data();
            for i in 0..data.len() {
                for j in 0..data.len() {
                    if data[i] <= data[j] {
                        prop_assert!(out[i] <= out[j]);
                    }
                }
            }
            if !e.degenerate {
                let max_in = *data.iter().max().unwrap();
                let idx = data.iter().position(|&v| v == max_in).unwrap();
                prop_assert_eq!(out[idx], 255);
            }
        }

        #[test]
        fn de_stays_in_range_and_k0_is_identity(data in prop::collection::vec(any::<u8>(), 1..64), k in 0.0f64..0.05) {
            let img = gray(1, data.len(), &data);
            prop_assert_eq!(detail_enhance(&img, 0.0).unwrap(), img.clone());
            let out = detail_enhance(&img, k).unwrap();
            prop_assert_eq!(out.data().len(), data.len());
        }
    }
}
