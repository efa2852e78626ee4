use crate::error::{Error, Result};

/// Per-pixel metric depth (camera-frame z, meters), rows stored top-down.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    values: Vec<f32>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Builds a map from row-major values. Non-positive and non-finite
    /// values mark the pixel invalid.
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(Error::MalformedHeader(format!(
                "depth map {width}x{height} needs {expected} values, got {}",
                values.len()
            )));
        }
        let valid = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        Ok(Self { width, height, values, valid })
    }

    pub fn filled(width: u32, height: u32, depth: f32) -> Self {
        Self::new(width, height, vec![depth; width as usize * height as usize]).expect("sized")
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, x: u32, y: u32) -> bool {
        self.valid[self.index(x, y)]
    }

    /// Raw stored value, valid or not.
    pub fn value(&self, x: u32, y: u32) -> f32 {
        self.values[self.index(x, y)]
    }

    /// Depth at a valid pixel.
    pub fn depth(&self, x: u32, y: u32) -> Option<f64> {
        let i = self.index(x, y);
        self.valid[i].then(|| self.values[i] as f64)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_values_are_masked() {
        let map = DepthMap::new(2, 2, vec![1.0, -1.0, f32::NAN, 0.0]).unwrap();
        assert_eq!(map.valid_mask(), &[true, false, false, false]);
        assert_eq!(map.depth(0, 0), Some(1.0));
        assert_eq!(map.depth(1, 0), None);
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(DepthMap::new(2, 2, vec![1.0; 3]).is_err());
    }
}
