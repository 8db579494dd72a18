use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    spatial_features, Attributes, BBox, CategoryVocabulary, Color, GameObject, Scene, Shape,
    SizeClass, Texture, WorldConfig,
};
use crate::error::Result;
use crate::rng::{substream, Rng as WorldRng};

/// Category pools a scene draws from.
#[derive(Debug, Clone)]
pub struct ScenePools<'a> {
    /// Categories for every non-target object, and the target too when
    /// `target` is `None`.
    pub objects: &'a [usize],
    /// If set, the target's category is drawn from here.
    pub target: Option<&'a [usize]>,
}

/// Fraction of the image side covered by each size class.
fn side_fraction(size: SizeClass) -> (f64, f64) {
    match size {
        SizeClass::Small => (0.08, 0.18),
        SizeClass::Medium => (0.18, 0.32),
        SizeClass::Large => (0.32, 0.5),
    }
}

fn random_attributes<R: Rng + ?Sized>(rng: &mut R) -> Attributes {
    Attributes {
        color: *Color::ALL.choose(rng).expect("colors"),
        size: *SizeClass::ALL.choose(rng).expect("sizes"),
        texture: *Texture::ALL.choose(rng).expect("textures"),
        shape: *Shape::ALL.choose(rng).expect("shapes"),
    }
}

fn random_bbox<R: Rng + ?Sized>(size: SizeClass, config: &WorldConfig, rng: &mut R) -> BBox {
    let (lo, hi) = side_fraction(size);
    let w = rng.random_range(lo..hi) * config.image_width;
    let h = rng.random_range(lo..hi) * config.image_height;
    let x = rng.random_range(0.0..(config.image_width - w));
    let y = rng.random_range(0.0..(config.image_height - h));
    BBox {
        x,
        y,
        width: w,
        height: h,
    }
}

/// In-domain scene with a uniformly chosen target.
pub fn generate_scene<R: Rng + ?Sized>(
    vocab: &CategoryVocabulary,
    config: &WorldConfig,
    rng: &mut R,
) -> Result<Scene> {
    let pools = ScenePools {
        objects: &vocab.in_domain,
        target: None,
    };
    generate_scene_with(vocab, config, &pools, "scene".to_string(), rng)
}

/// Scene whose objects are drawn from `pools`; resampled until at least two
/// distinct categories are present.
pub fn generate_scene_with<R: Rng + ?Sized>(
    vocab: &CategoryVocabulary,
    config: &WorldConfig,
    pools: &ScenePools<'_>,
    scene_id: String,
    rng: &mut R,
) -> Result<Scene> {
    let dim = vocab.perceptual_dim;
    let ctx_normal = Normal::new(0.0, config.sigma_ctx).expect("sigma_ctx");
    let noise_normal = Normal::new(0.0, config.sigma_noise).expect("sigma_noise");
    loop {
        let n = rng.random_range(config.min_objects..=config.max_objects);
        let target = rng.random_range(0..n);
        let context: Vec<f64> = (0..dim).map(|_| ctx_normal.sample(rng)).collect();
        let mut objects = Vec::with_capacity(n);
        for id in 0..n {
            let pool = match pools.target {
                Some(tp) if id == target => tp,
                _ => pools.objects,
            };
            let category = *pool.choose(rng).expect("non-empty category pool");
            let attributes = random_attributes(rng);
            let bbox = random_bbox(attributes.size, config, rng);
            let offset = vocab.attribute_offsets.offset(&attributes);
            let v: Vec<f64> = vocab.categories[category]
                .prototype
                .iter()
                .zip(&offset)
                .zip(&context)
                .map(|((p, a), c)| p + a + c + noise_normal.sample(rng))
                .collect();
            let s = spatial_features(&bbox, config.image_width, config.image_height)?.to_vec();
            objects.push(GameObject {
                id,
                category,
                supercategory: vocab.categories[category].supercategory,
                attributes,
                bbox,
                v,
                s,
            });
        }
        let scene = Scene {
            scene_id: scene_id.clone(),
            width: config.image_width,
            height: config.image_height,
            target,
            objects,
        };
        if scene.distinct_categories() >= 2 {
            return Ok(scene);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
    pub test: Vec<Scene>,
    pub nd_test: Vec<Scene>,
    pub od_test: Vec<Scene>,
}

impl Splits {
    pub const NAMES: [&'static str; 5] = ["train", "val", "test", "nd_test", "od_test"];

    pub fn by_name(&self, name: &str) -> Option<&[Scene]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            "nd_test" => Some(&self.nd_test),
            "od_test" => Some(&self.od_test),
            _ => None,
        }
    }
}

fn split<R: Rng>(
    vocab: &CategoryVocabulary,
    config: &WorldConfig,
    pools: &ScenePools<'_>,
    name: &str,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Scene>> {
    (0..count)
        .map(|i| generate_scene_with(vocab, config, pools, format!("{name}-{i:05}"), rng))
        .collect()
}

/// Generates all five splits; each split uses its own named random stream.
pub fn build_splits(vocab: &CategoryVocabulary, config: &WorldConfig, seed: u64) -> Result<Splits> {
    let in_domain = ScenePools {
        objects: &vocab.in_domain,
        target: None,
    };
    let nd = ScenePools {
        objects: &vocab.in_domain,
        target: Some(&vocab.near_domain_heldout),
    };
    let od = ScenePools {
        objects: &vocab.in_domain,
        target: Some(&vocab.out_domain_heldout),
    };
    let stream = |name: &str| -> WorldRng { substream(seed, &format!("world.split.{name}")) };
    let nd_test = if vocab.near_domain_heldout.is_empty() {
        Vec::new()
    } else {
        split(vocab, config, &nd, "nd_test", config.nd_scenes, &mut stream("nd_test"))?
    };
    let od_test = if vocab.out_domain_heldout.is_empty() {
        Vec::new()
    } else {
        split(vocab, config, &od, "od_test", config.od_scenes, &mut stream("od_test"))?
    };
    Ok(Splits {
        train: split(vocab, config, &in_domain, "train", config.train_scenes, &mut stream("train"))?,
        val: split(vocab, config, &in_domain, "val", config.val_scenes, &mut stream("val"))?,
        test: split(vocab, config, &in_domain, "test", config.test_scenes, &mut stream("test"))?,
        nd_test,
        od_test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::generate_world;

    fn small_config() -> WorldConfig {
        WorldConfig {
            train_scenes: 40,
            val_scenes: 10,
            test_scenes: 10,
            nd_scenes: 10,
            od_scenes: 10,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn degenerate_noise_gives_prototypes() {
        let cfg = WorldConfig {
            sigma_noise: 0.0,
            sigma_ctx: 0.0,
            attribute_scale: 0.0,
            ..WorldConfig::default()
        };
        let vocab = generate_world(&cfg, 2).unwrap();
        let mut rng = substream(2, "t");
        let scene = generate_scene(&vocab, &cfg, &mut rng).unwrap();
        for o in &scene.objects {
            assert_eq!(o.v, vocab.categories[o.category].prototype);
        }
    }

    #[test]
    fn same_scene_same_category_differ_only_by_noise() {
        // With noise and attribute offsets switched off, what remains is
        // prototype + the shared context shift, so same-category objects in a
        // scene coincide exactly.
        let cfg = WorldConfig {
            sigma_noise: 0.0,
            attribute_scale: 0.0,
            ..WorldConfig::default()
        };
        let vocab = generate_world(&cfg, 5).unwrap();
        let mut rng = substream(5, "t");
        let mut checked = 0;
        for _ in 0..200 {
            let scene = generate_scene(&vocab, &cfg, &mut rng).unwrap();
            for a in &scene.objects {
                for b in &scene.objects {
                    if a.id < b.id && a.category == b.category {
                        assert_eq!(a.v, b.v);
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn nearest_prototype_recovers_category() {
        let cfg = WorldConfig::default();
        let vocab = generate_world(&cfg, 0).unwrap();
        let mut rng = substream(0, "nearest");
        let (mut correct, mut total) = (0, 0);
        while total < 1000 {
            let scene = generate_scene(&vocab, &cfg, &mut rng).unwrap();
            for o in &scene.objects {
                if total == 1000 {
                    break;
                }
                let best = vocab
                    .in_domain
                    .iter()
                    .map(|&c| {
                        let d: f64 = vocab.categories[c]
                            .prototype
                            .iter()
                            .zip(&o.v)
                            .map(|(p, x)| (p - x) * (p - x))
                            .sum();
                        (c, d)
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap()
                    .0;
                correct += usize::from(best == o.category);
                total += 1;
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc > 0.95, "nearest-prototype accuracy {acc}");
    }

    #[test]
    fn splits_respect_zero_shot_hygiene_and_sizes() {
        let cfg = small_config();
        let vocab = generate_world(&cfg, 9).unwrap();
        let splits = build_splits(&vocab, &cfg, 9).unwrap();
        assert_eq!(splits.train.len(), 40);
        assert_eq!(splits.val.len(), 10);
        assert_eq!(splits.test.len(), 10);
        assert_eq!(splits.nd_test.len(), 10);
        assert_eq!(splits.od_test.len(), 10);
        for scene in splits.train.iter().chain(&splits.val).chain(&splits.test) {
            assert!(scene.distinct_categories() >= 2);
            for o in &scene.objects {
                assert!(vocab.in_domain.contains(&o.category));
            }
        }
        let seen = vocab.seen_supercategories();
        for scene in &splits.nd_test {
            let t = scene.target_object();
            assert!(vocab.near_domain_heldout.contains(&t.category));
            assert!(seen.contains(&t.supercategory));
        }
        for scene in &splits.od_test {
            assert!(vocab.out_domain_heldout.contains(&scene.target_object().category));
        }
        assert_eq!(splits, build_splits(&vocab, &cfg, 9).unwrap());
    }

    #[test]
    fn generated_objects_satisfy_geometry_invariants() {
        let cfg = small_config();
        let vocab = generate_world(&cfg, 1).unwrap();
        let splits = build_splits(&vocab, &cfg, 1).unwrap();
        for scene in &splits.train {
            scene.validate().unwrap();
            for o in &scene.objects {
                assert!(o.bbox.x >= 0.0 && o.bbox.x + o.bbox.width <= scene.width);
                assert!(o.bbox.y >= 0.0 && o.bbox.y + o.bbox.height <= scene.height);
                assert!(o.s.iter().all(|x| (-1.0..=1.0).contains(x)));
                assert!(o.v.iter().all(|x| x.is_finite()));
            }
        }
    }

    #[test]
    fn context_shift_correlates_objects_within_a_scene() {
        let cfg = WorldConfig::default();
        let vocab = generate_world(&cfg, 4).unwrap();
        let mut rng = substream(4, "ctx");
        let scenes: Vec<Scene> = (0..150)
            .map(|_| generate_scene(&vocab, &cfg, &mut rng).unwrap())
            .collect();
        let residual = |o: &GameObject| -> Vec<f64> {
            let off = vocab.attribute_offsets.offset(&o.attributes);
            o.v.iter()
                .zip(&vocab.categories[o.category].prototype)
                .zip(&off)
                .map(|((v, p), a)| v - p - a)
                .collect()
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let (mut within, mut nw) = (0.0, 0usize);
        for s in &scenes {
            for a in &s.objects {
                for b in &s.objects {
                    if a.id < b.id {
                        within += dot(&residual(a), &residual(b));
                        nw += 1;
                    }
                }
            }
        }
        let (mut across, mut na) = (0.0, 0usize);
        for (i, s) in scenes.iter().enumerate() {
            for t in &scenes[i + 1..] {
                for a in &s.objects {
                    for b in t.objects.iter().filter(|b| b.category == a.category) {
                        across += dot(&residual(a), &residual(b));
                        na += 1;
                    }
                }
            }
        }
        let within = within / nw as f64;
        let across = across / na as f64;
        assert!(within > across, "within {within} across {across}");
        // Expected within-scene covariance trace: d * sigma_ctx^2.
        let expected = cfg.perceptual_dim as f64 * cfg.sigma_ctx * cfg.sigma_ctx;
        assert!((within - expected).abs() < 0.5 * expected);
    }
}
