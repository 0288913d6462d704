use super::{quantize, Image};
use crate::error::{Error, Result};

/// Source coordinate for output index `i` with half-pixel centers.
#[inline]
pub(crate) fn source_coord(i: usize, out_len: usize, in_len: usize) -> f64 {
    let s = (i as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5;
    s.clamp(0.0, (in_len - 1) as f64)
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize(img: &Image, height: usize, width: usize) -> Result<Image> {
    if height == 0 || width == 0 {
        return Err(Error::Dimension(format!("resize: target {height}x{width} must be at least 1x1")));
    }
    if img.is_empty() {
        return Err(Error::Dimension("resize: empty image".into()));
    }
    if height == img.height() && width == img.width() {
        return Ok(img.clone());
    }
    let ch = img.channels();
    let mut data = Vec::with_capacity(height * width * ch);
    for y in 0..height {
        let sy = source_coord(y, height, img.height());
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(img.height() - 1);
        let fy = sy - y0 as f64;
        for x in 0..width {
            let sx = source_coord(x, width, img.width());
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(img.width() - 1);
            let fx = sx - x0 as f64;
            for c in 0..ch {
                let top = img.get(y0, x0, c) as f64 * (1.0 - fx) + img.get(y0, x1, c) as f64 * fx;
                let bottom = img.get(y1, x0, c) as f64 * (1.0 - fx) + img.get(y1, x1, c) as f64 * fx;
                data.push(quantize(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    Image::new(height, width, img.colorspace(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_constant() {
        let img = Image::rgb(3, 2, (0..18).collect()).unwrap();
        assert_eq!(resize(&img, 3, 2).unwrap(), img);
        let c = Image::gray(2, 2, vec![100; 4]).unwrap();
        let big = resize(&c, 7, 5).unwrap();
        assert!(big.data().iter().all(|&v| v == 100));
    }

    #[test]
    fn midpoint_interpolation() {
        let img = Image::gray(1, 2, vec![0, 255]).unwrap();
        assert_eq!(resize(&img, 1, 3).unwrap().data(), &[0, 128, 255]);
    }

    #[test]
    fn zero_target_is_error() {
        let img = Image::gray(1, 2, vec![0, 255]).unwrap();
        assert!(resize(&img, 0, 3).is_err());
    }
}
