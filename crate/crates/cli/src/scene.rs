//! Synthetic scene files (TOML). Explicit light directions are in the
//! engine frame: x right, y down, z toward the camera.
//!
//! ```toml
//! width = 64
//! height = 64
//! seed = 1
//!
//! [shape]
//! kind = "hemisphere-on-plane"
//! radius = 0.55
//!
//! [material]
//! albedo = [0.6]
//! lobes = [{ weight = 0.4, rx = 50.0, ry = 50.0 }]
//!
//! [lights]
//! mode = "default"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use photostereo_core::synthetic::{default_lights, ring_lights, AnalyticScene, Material, Shape};
use photostereo_core::vec3::Vec3;

use crate::error::{read_to_string, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LightSpec {
    /// 12 lights on a 40° ring plus 4 seeded random ones.
    Default,
    Ring {
        count: usize,
        elevation_deg: f64,
        #[serde(default)]
        azimuth_offset_deg: f64,
        #[serde(default = "one")]
        intensity: f64,
    },
    Explicit {
        directions: Vec<Vec3>,
        intensities: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub seed: u64,
    pub shape: Shape,
    pub material: Material,
    pub lights: LightSpec,
}

impl SceneFile {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?).map_err(|msg| Error::format(path, msg))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    pub fn scene(&self) -> AnalyticScene {
        let (lights, intensities) = match &self.lights {
            LightSpec::Default => default_lights(self.seed),
            LightSpec::Ring {
                count,
                elevation_deg,
                azimuth_offset_deg,
                intensity,
            } => (
                ring_lights(*count, *elevation_deg, *azimuth_offset_deg),
                vec![*intensity; *count],
            ),
            LightSpec::Explicit {
                directions,
                intensities,
            } => (directions.clone(), intensities.clone()),
        };
        AnalyticScene {
            width: self.width,
            height: self.height,
            shape: self.shape.clone(),
            material: self.material.clone(),
            lights,
            intensities,
        }
    }

    /// The reference desk scene: hemisphere on a floor, Lambertian plus one
    /// isotropic lobe.
    pub fn reference() -> Self {
        Self {
            width: 64,
            height: 64,
            seed: 1,
            shape: Shape::HemisphereOnPlane {
                radius: photostereo_core::synthetic::DEFAULT_RADIUS,
            },
            material: Material::isotropic(vec![0.6], 0.4, 50.0),
            lights: LightSpec::Default,
        }
    }
}
