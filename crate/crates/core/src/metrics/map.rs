use crate::error::{ensure_dim, Error, Result};

/// Single-channel real image with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

/// Ground truth binarization threshold.
pub const GT_THRESHOLD: f64 = 0.5;

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract("SaliencyMap::new", "empty map"));
        }
        ensure_dim(
            "SaliencyMap::new",
            "pixel count",
            width * height,
            values.len(),
        )?;
        if let Some(index) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain {
                op: "SaliencyMap::new",
                index,
                value: values[index],
                domain: "[0, 1]",
            });
        }
        Ok(SaliencyMap {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let values = (0..height)
            .flat_map(|y| (0..width).map(move |x| (y, x)))
            .map(|(y, x)| f(y, x))
            .collect();
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `1 − v` for every pixel.
    pub fn inverted(&self) -> SaliencyMap {
        SaliencyMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// `v ≥ 0.5`, i.e. `≥ 128` for 8-bit sources.
    pub fn binarize(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| v >= GT_THRESHOLD).collect(),
        }
    }

    /// `round(255·v)` per pixel.
    pub fn quantize(&self) -> Vec<u8> {
        self.values
            .iter()
            .map(|&v| (v * 255.0).round() as u8)
            .collect()
    }
}

/// Binary image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, values: Vec<bool>) -> Result<Self> {
        ensure_dim(
            "BinaryMask::new",
            "pixel count",
            width * height,
            values.len(),
        )?;
        Ok(BinaryMask {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }

    pub fn to_map(&self) -> SaliencyMap {
        SaliencyMap {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

pub(crate) fn check_dims(op: &'static str, p: &SaliencyMap, g_w: usize, g_h: usize) -> Result<()> {
    ensure_dim(op, "width", g_w, p.width())?;
    ensure_dim(op, "height", g_h, p.height())
}
