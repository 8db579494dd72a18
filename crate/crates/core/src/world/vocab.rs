//! Category vocabulary: supercategories, categories with perceptual
//! prototypes, per-attribute-value offsets and the zero-shot partition.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Attributes, WorldConfig};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Supercategory names, animacy and the category names available under each.
const NAME_TABLE: &[(&str, bool, &[&str])] = &[
    ("person", true, &["man", "woman", "child", "skier", "surfer", "rider", "player", "chef"]),
    ("animal", true, &["dog", "cat", "horse", "sheep", "cow", "zebra", "giraffe", "bird"]),
    ("vehicle", false, &["car", "bus", "truck", "bicycle", "motorcycle", "train", "boat", "airplane"]),
    ("food", false, &["pizza", "banana", "apple", "sandwich", "donut", "cake", "carrot", "broccoli"]),
    ("furniture", false, &["chair", "couch", "bed", "bench", "desk", "shelf", "cabinet", "stool"]),
    ("utensil", false, &["fork", "knife", "spoon", "cup", "bowl", "bottle", "plate", "mug"]),
];

/// Every supercategory name with its animacy and candidate category names,
/// independent of which ones a particular world draws.
pub fn name_table() -> impl Iterator<Item = (&'static str, bool, &'static [&'static str])> {
    NAME_TABLE.iter().copied()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Supercategory {
    pub id: usize,
    pub name: String,
    pub animate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: usize,
    pub name: String,
    pub supercategory: usize,
    pub animate: bool,
    pub prototype: Vec<f64>,
}

/// Fixed offset vectors added to `v` for each attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeOffsets {
    pub color: Vec<Vec<f64>>,
    pub size: Vec<Vec<f64>>,
    pub texture: Vec<Vec<f64>>,
    pub shape: Vec<Vec<f64>>,
}

impl AttributeOffsets {
    pub fn zeros(dim: usize) -> Self {
        let z = |n: usize| vec![vec![0.0; dim]; n];
        Self {
            color: z(super::Color::ALL.len()),
            size: z(super::SizeClass::ALL.len()),
            texture: z(super::Texture::ALL.len()),
            shape: z(super::Shape::ALL.len()),
        }
    }

    /// Sum of the offsets selected by `attrs`.
    pub fn offset(&self, attrs: &Attributes) -> Vec<f64> {
        let parts = [
            &self.color[attrs.color.index()],
            &self.size[attrs.size.index()],
            &self.texture[attrs.texture.index()],
            &self.shape[attrs.shape.index()],
        ];
        let mut out = vec![0.0; parts[0].len()];
        for p in parts {
            for (o, x) in out.iter_mut().zip(p) {
                *o += x;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    InDomain,
    NearDomain,
    OutDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryVocabulary {
    pub perceptual_dim: usize,
    pub supercategories: Vec<Supercategory>,
    pub categories: Vec<Category>,
    pub in_domain: Vec<usize>,
    pub near_domain_heldout: Vec<usize>,
    pub out_domain_heldout: Vec<usize>,
    pub attribute_offsets: AttributeOffsets,
}

impl CategoryVocabulary {
    pub fn domain_of(&self, category: usize) -> Domain {
        if self.near_domain_heldout.contains(&category) {
            Domain::NearDomain
        } else if self.out_domain_heldout.contains(&category) {
            Domain::OutDomain
        } else {
            Domain::InDomain
        }
    }

    /// Position of a category within `in_domain`, the label space of every
    /// category-aware model.
    pub fn in_domain_index(&self, category: usize) -> Option<usize> {
        self.in_domain.iter().position(|&c| c == category)
    }

    /// Supercategories that own at least one in-domain category.
    pub fn seen_supercategories(&self) -> Vec<usize> {
        let mut seen: Vec<usize> = self
            .in_domain
            .iter()
            .map(|&c| self.categories[c].supercategory)
            .collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    }

    pub fn category_by_name(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Encoding(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn category_name(supercat: usize, slot: usize) -> String {
    NAME_TABLE
        .get(supercat)
        .and_then(|(_, _, names)| names.get(slot))
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("thing{supercat}x{slot}"))
}

/// Random directions, Gram-Schmidt orthogonalised while the count allows,
/// each with per-coordinate RMS `scale`.
fn orthogonalish_offsets<R: Rng + ?Sized>(
    count: usize,
    dim: usize,
    scale: f64,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        if basis.len() < dim {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= dot * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        basis.push(v);
    }
    let target_norm = scale * (dim as f64).sqrt();
    basis
        .into_iter()
        .map(|v| v.into_iter().map(|x| x * target_norm).collect())
        .collect()
}

/// Builds the category vocabulary for a world.
///
/// The last supercategory is reserved for the out-of-domain split (when the
/// configured fraction is non-zero) and owns exactly the out-of-domain
/// categories; near-domain categories are drawn from the remaining
/// supercategories so that each keeps at least one in-domain sibling.
pub fn generate_world(config: &WorldConfig, seed: u64) -> Result<CategoryVocabulary> {
    config.validate()?;
    let n_super = config.num_supercategories;
    let n_cat = config.num_categories;
    let n_od = (config.od_fraction * n_cat as f64).round() as usize;
    let n_nd = (config.nd_fraction * n_cat as f64).round() as usize;

    let in_supers = if n_od > 0 { n_super - 1 } else { n_super };
    if n_od > 0 && n_super < 2 {
        return Err(Error::Config(
            "an out-of-domain split needs a supercategory of its own; at least 2 supercategories required".into(),
        ));
    }
    let n_rest = n_cat - n_od;
    if n_rest < in_supers {
        return Err(Error::Config(format!(
            "{n_rest} non-out-of-domain categories cannot populate {in_supers} supercategories"
        )));
    }
    if n_nd > n_rest - in_supers {
        return Err(Error::Config(format!(
            "{n_nd} near-domain categories would leave a supercategory without in-domain members"
        )));
    }

    let mut rng = substream(seed, "world.vocab");
    let dim = config.perceptual_dim;

    let supercategories: Vec<Supercategory> = (0..n_super)
        .map(|id| {
            let (name, animate) = NAME_TABLE
                .get(id)
                .map(|(n, a, _)| (n.to_string(), *a))
                .unwrap_or_else(|| (format!("group{id}"), false));
            Supercategory { id, name, animate }
        })
        .collect();

    // Category -> supercategory assignment.
    let mut owner = Vec::with_capacity(n_cat);
    for k in 0..n_rest {
        owner.push(k % in_supers);
    }
    owner.sort_unstable();
    owner.extend(std::iter::repeat_n(n_super - 1, n_od));

    let proto_normal = Normal::new(0.0, config.prototype_scale).expect("prototype scale");
    let spread_normal = Normal::new(0.0, config.category_spread).expect("category spread");
    let centroids: Vec<Vec<f64>> = (0..n_super)
        .map(|_| (0..dim).map(|_| proto_normal.sample(&mut rng)).collect())
        .collect();

    let mut categories: Vec<Category> = Vec::with_capacity(n_cat);
    let mut slot = vec![0usize; n_super];
    for (id, &sc) in owner.iter().enumerate() {
        let mut attempts = 0;
        let prototype = loop {
            let p: Vec<f64> = centroids[sc]
                .iter()
                .map(|c| c + spread_normal.sample(&mut rng))
                .collect();
            if categories
                .iter()
                .all(|c| distance(&c.prototype, &p) > config.min_prototype_distance)
            {
                break p;
            }
            attempts += 1;
            if attempts > 1000 {
                return Err(Error::Config(
                    "cannot place prototypes above the minimum pairwise distance".into(),
                ));
            }
        };
        categories.push(Category {
            id,
            name: category_name(sc, slot[sc]),
            supercategory: sc,
            animate: supercategories[sc].animate,
            prototype,
        });
        slot[sc] += 1;
    }

    let out_domain_heldout: Vec<usize> = (n_rest..n_cat).collect();

    // Near-domain: round-robin over in-domain supercategories, drawing a random
    // member while that supercategory still keeps one in-domain sibling.
    let mut pools: Vec<Vec<usize>> = (0..in_supers)
        .map(|sc| (0..n_rest).filter(|&c| owner[c] == sc).collect())
        .collect();
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }
    let mut near_domain_heldout = Vec::with_capacity(n_nd);
    let mut sc = 0;
    while near_domain_heldout.len() < n_nd {
        if pools[sc].len() > 1 {
            near_domain_heldout.push(pools[sc].pop().expect("non-empty pool"));
        }
        sc = (sc + 1) % in_supers;
    }
    near_domain_heldout.sort_unstable();
    let in_domain: Vec<usize> = (0..n_rest)
        .filter(|c| !near_domain_heldout.contains(c))
        .collect();

    let mut offsets = orthogonalish_offsets(
        super::Color::ALL.len()
            + super::SizeClass::ALL.len()
            + super::Texture::ALL.len()
            + super::Shape::ALL.len(),
        dim,
        config.attribute_scale,
        &mut rng,
    )
    .into_iter();
    let mut take = |n: usize| -> Vec<Vec<f64>> { offsets.by_ref().take(n).collect() };
    let attribute_offsets = AttributeOffsets {
        color: take(super::Color::ALL.len()),
        size: take(super::SizeClass::ALL.len()),
        texture: take(super::Texture::ALL.len()),
        shape: take(super::Shape::ALL.len()),
    };

    Ok(CategoryVocabulary {
        perceptual_dim: dim,
        supercategories,
        categories,
        in_domain,
        near_domain_heldout,
        out_domain_heldout,
        attribute_offsets,
    })
}
