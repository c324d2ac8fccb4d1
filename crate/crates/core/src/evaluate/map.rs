//! Affine projection of per-item expected responses onto two value dimensions.
//!
//! Loadings are user-supplied TOML:
//!
//! ```toml
//! offsets = [0.0, 0.0]
//!
//! [loadings]
//! Q164 = [-0.2, 0.0]
//! Q57 = [0.0, -0.4]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MapProjection {
    pub loadings: BTreeMap<String, (f64, f64)>,
    #[serde(default)]
    pub offsets: (f64, f64),
}

impl MapProjection {
    /// Illustrative loadings shipped with the crate (not fitted factor loadings).
    pub fn demo() -> Self {
        Self::from_toml(include_str!("../../data/demo_map.toml")).expect("bundled demo map")
    }

    pub fn from_toml(text: &str) -> Result<Self, EvalError> {
        toml::from_str(text).map_err(|e| EvalError::MapParse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::MapParse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| EvalError::MapParse(format!("{}: {e}", path.display())))
    }
}

/// `dim = offset + Σ weight_i · response_i` for both dimensions.
pub fn project_map(profile: &BTreeMap<String, f64>, proj: &MapProjection) -> Result<(f64, f64), EvalError> {
    let (mut x, mut y) = proj.offsets;
    for (item, &response) in profile {
        let &(wx, wy) = proj
            .loadings
            .get(item)
            .ok_or_else(|| EvalError::MissingLoading(item.clone()))?;
        x += wx * response;
        y += wy * response;
    }
    Ok((x, y))
}
