//! Synthetic scene world standing in for natural images.
//!
//! A perceptual vector is `prototype(category) + attribute offsets + scene
//! context shift + noise`; spatial features come from the bounding box.

mod io;
mod scene;
mod spatial;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_scenes, write_scenes};
pub use scene::{build_splits, generate_scene, generate_scene_with, ScenePools, Splits};
pub use spatial::{spatial_features, Region};
pub use vocab::{
    generate_world, name_table, AttributeOffsets, Category, CategoryVocabulary, Domain,
    Supercategory,
};

macro_rules! attribute_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $word:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn index(self) -> usize {
                Self::ALL.iter().position(|&v| v == self).expect("listed variant")
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }

            pub fn word(self) -> &'static str {
                match self {
                    $($name::$variant => $word),+
                }
            }
        }
    };
}

attribute_enum!(Color {
    Red => "red",
    Green => "green",
    Blue => "blue",
    Yellow => "yellow",
    White => "white",
    Black => "black",
});

attribute_enum!(SizeClass {
    Small => "small",
    Medium => "medium",
    Large => "large",
});

attribute_enum!(Texture {
    Smooth => "smooth",
    Striped => "striped",
    Spotted => "spotted",
    Furry => "furry",
});

attribute_enum!(Shape {
    Round => "round",
    Square => "square",
    Long => "long",
    Flat => "flat",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attributes {
    pub color: Color,
    pub size: SizeClass,
    pub texture: Texture,
    pub shape: Shape,
}

/// Axis-aligned box in pixels: `(x_min, y_min, width, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", from = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.width, b.height]
    }
}

impl From<[f64; 4]> for BBox {
    fn from(a: [f64; 4]) -> Self {
        BBox {
            x: a[0],
            y: a[1],
            width: a[2],
            height: a[3],
        }
    }
}

impl BBox {
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.width / 2.0, self.y + self.height / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameObject {
    pub id: usize,
    pub category: usize,
    pub supercategory: usize,
    pub attributes: Attributes,
    pub bbox: BBox,
    /// Perceptual embedding.
    pub v: Vec<f64>,
    /// Spatial features of `bbox`.
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub width: f64,
    pub height: f64,
    pub target: usize,
    pub objects: Vec<GameObject>,
}

impl Scene {
    pub fn target_object(&self) -> &GameObject {
        &self.objects[self.target]
    }

    pub fn distinct_categories(&self) -> usize {
        let mut cats: Vec<usize> = self.objects.iter().map(|o| o.category).collect();
        cats.sort_unstable();
        cats.dedup();
        cats.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.len() < 2 {
            return Err(Error::Validation(format!(
                "scene {} has fewer than 2 objects",
                self.scene_id
            )));
        }
        if self.target >= self.objects.len() {
            return Err(Error::Validation(format!(
                "scene {} target {} out of range",
                self.scene_id, self.target
            )));
        }
        Ok(())
    }
}

/// World and split generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub num_supercategories: usize,
    pub num_categories: usize,
    pub perceptual_dim: usize,
    pub nd_fraction: f64,
    pub od_fraction: f64,
    /// Per-coordinate std of supercategory centroids.
    pub prototype_scale: f64,
    /// Per-coordinate std of a category's offset from its supercategory centroid.
    pub category_spread: f64,
    pub min_prototype_distance: f64,
    /// Per-coordinate RMS of each attribute-value offset.
    pub attribute_scale: f64,
    pub sigma_noise: f64,
    pub sigma_ctx: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub image_width: f64,
    pub image_height: f64,
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub test_scenes: usize,
    pub nd_scenes: usize,
    pub od_scenes: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            num_supercategories: 6,
            num_categories: 30,
            perceptual_dim: 32,
            nd_fraction: 0.2,
            od_fraction: 0.1,
            prototype_scale: 1.0,
            category_spread: 0.45,
            min_prototype_distance: 1.0,
            attribute_scale: 0.25,
            sigma_noise: 0.15,
            sigma_ctx: 0.3,
            min_objects: 3,
            max_objects: 10,
            image_width: 640.0,
            image_height: 480.0,
            train_scenes: 2000,
            val_scenes: 300,
            test_scenes: 500,
            nd_scenes: 300,
            od_scenes: 300,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_supercategories == 0 || self.num_categories == 0 || self.perceptual_dim == 0 {
            return bad("world counts must be positive");
        }
        if self.num_categories < self.num_supercategories {
            return bad("fewer categories than supercategories");
        }
        if !(0.0..1.0).contains(&self.nd_fraction)
            || !(0.0..1.0).contains(&self.od_fraction)
            || self.nd_fraction + self.od_fraction >= 1.0
        {
            return bad("heldout fractions must be in [0,1) and sum below 1");
        }
        if self.min_objects < 2 || self.max_objects < self.min_objects {
            return bad("objects per scene must satisfy 2 <= min <= max");
        }
        for (name, v) in [
            ("prototype_scale", self.prototype_scale),
            ("category_spread", self.category_spread),
            ("attribute_scale", self.attribute_scale),
            ("sigma_noise", self.sigma_noise),
            ("sigma_ctx", self.sigma_ctx),
            ("min_prototype_distance", self.min_prototype_distance),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if self.prototype_scale == 0.0 || self.category_spread == 0.0 {
            return bad("prototype_scale and category_spread must be positive");
        }
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return bad("image dimensions must be positive");
        }
        Ok(())
    }
}
