//! Binary feature maps: `"FMAP"`, u32 version, u32 locations, u32 channels,
//! then `locations × channels` little-endian `f32` values.

use std::path::Path;

use super::{DataError, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"FMAP";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Spatial grid of precomputed image features, `locations × channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub locations: usize,
    pub channels: usize,
    pub values: Vec<f32>,
}

impl FeatureMap {
    pub fn new(locations: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if locations == 0 || channels == 0 || values.len() != locations * channels {
            return Err(DataError::Invalid(format!(
                "feature map {locations}x{channels} with {} values",
                values.len()
            )));
        }
        Ok(FeatureMap {
            locations,
            channels,
            values,
        })
    }

    pub fn zeros(locations: usize, channels: usize) -> Self {
        FeatureMap {
            locations,
            channels,
            values: vec![0.0; locations * channels],
        }
    }

    /// `[L×C]` tensor in double precision.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            &[self.locations, self.channels],
            self.values.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("feature map dimensions are validated on construction")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.locations as u32).to_le_bytes());
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let format = |message: String| DataError::Format {
            path: origin.to_path_buf(),
            message,
        };
        if bytes.len() < HEADER_LEN {
            return Err(DataError::Truncated {
                path: origin.to_path_buf(),
                expected: HEADER_LEN,
                actual: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(format(format!("bad magic {:?}", &bytes[..4])));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != VERSION {
            return Err(format(format!("unsupported version {version}")));
        }
        let (locations, channels) = (word(8) as usize, word(12) as usize);
        let expected = HEADER_LEN + 4 * locations * channels;
        if bytes.len() != expected {
            return Err(DataError::Truncated {
                path: origin.to_path_buf(),
                expected,
                actual: bytes.len(),
            });
        }
        let values = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        FeatureMap::new(locations, channels, values).map_err(|e| format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes, path)
    }
}
