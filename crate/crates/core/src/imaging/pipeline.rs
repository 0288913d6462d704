use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{detail_enhance, hist_equalize, roi_select, Image, DEFAULT_DETAIL_K};
use crate::error::{Error, Result};

/// Named pre-processing variants. Stages always run in the order ROI, HE, DE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Plain,
    Roin,
    Roihen,
    Roiheden,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Plain, Variant::Roin, Variant::Roihen, Variant::Roiheden];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Roin => "roin",
            Variant::Roihen => "roihen",
            Variant::Roiheden => "roiheden",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown pipeline variant '{s}' (plain|roin|roihen|roiheden)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub variant: Variant,
    pub detail_k: f64,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self { variant: Variant::Plain, detail_k: DEFAULT_DETAIL_K }
    }
}

impl Pipeline {
    pub fn new(variant: Variant, detail_k: f64) -> Result<Self> {
        if !(detail_k >= 0.0) || !detail_k.is_finite() {
            return Err(Error::Parameter(format!("detail_k must be finite and >= 0, got {detail_k}")));
        }
        Ok(Self { variant, detail_k })
    }

    pub fn of(variant: Variant) -> Self {
        Self { variant, detail_k: DEFAULT_DETAIL_K }
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        match self.variant {
            Variant::Plain => Ok(img.clone()),
            Variant::Roin => roi_select(img),
            Variant::Roihen => Ok(hist_equalize(&roi_select(img)?)?.image),
            Variant::Roiheden => {
                let eq = hist_equalize(&roi_select(img)?)?;
                detail_enhance(&eq.image, self.detail_k)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Image {
        Image::gray(2, 2, vec![10, 20, 30, 200]).unwrap()
    }

    #[test]
    fn plain_is_identity() {
        let img = Image::rgb(2, 2, (0..12).map(|v| v * 20).collect()).unwrap();
        assert_eq!(Pipeline::of(Variant::Plain).apply(&img).unwrap(), img);
    }

    #[test]
    fn roin_equals_roi() {
        assert_eq!(Pipeline::of(Variant::Roin).apply(&fixture()).unwrap().data(), &[0, 0, 0, 200]);
    }

    #[test]
    fn roiheden_on_constant_is_zero() {
        let img = Image::gray(3, 3, vec![77; 9]).unwrap();
        let out = Pipeline::of(Variant::Roiheden).apply(&img).unwrap();
        assert!(out.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn roihen_stretches_retained_pixels() {
        // ROI leaves [0,0,0,200]; HE maps 0 -> 0 and 200 -> 255
        let out = Pipeline::of(Variant::Roihen).apply(&fixture()).unwrap();
        assert_eq!(out.data(), &[0, 0, 0, 255]);
    }

    #[test]
    fn parse_names() {
        assert_eq!("ROIHEDEN".parse::<Variant>().unwrap(), Variant::Roiheden);
        assert!("fancy".parse::<Variant>().is_err());
        assert!(Pipeline::new(Variant::Roin, -1.0).is_err());
    }
}
