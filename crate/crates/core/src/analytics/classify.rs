use std::collections::BTreeMap;

use crate::oracle::{Animacy, QType, Question};
use crate::world::{name_table, Color, Shape, SizeClass, Texture};

/// Version tag of the keyword lexicon.
pub const LEXICON_VERSION: &str = "lexicon-v1";

const LOCATION_WORDS: &[&str] = &[
    "left", "right", "top", "bottom", "middle", "center", "centre", "side", "corner", "front", "back",
];
const EXTRA_SIZE_WORDS: &[&str] = &["big", "tiny", "little", "huge", "biggest", "smallest"];

/// Keyword lexicon for classifying raw question text.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    /// Attribute keyword sets in priority order.
    attributes: Vec<(QType, Vec<String>)>,
    categories: BTreeMap<String, Animacy>,
    supercategories: Vec<String>,
}

impl Default for Lexicon {
    /// Every name the world generator can draw, plus attribute and location keywords.
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect::<Vec<_>>();
        let mut size = words(&SizeClass::ALL.iter().map(|s| s.word()).collect::<Vec<_>>());
        size.extend(words(EXTRA_SIZE_WORDS));
        let attributes = vec![
            (QType::Color, words(&Color::ALL.iter().map(|c| c.word()).collect::<Vec<_>>())),
            (QType::Size, size),
            (QType::Texture, words(&Texture::ALL.iter().map(|t| t.word()).collect::<Vec<_>>())),
            (QType::Shape, words(&Shape::ALL.iter().map(|s| s.word()).collect::<Vec<_>>())),
            (QType::Location, words(LOCATION_WORDS)),
        ];
        let mut categories = BTreeMap::new();
        let mut supercategories = Vec::new();
        for (sup, animate, cats) in name_table() {
            supercategories.push(sup.to_string());
            let a = if animate { Animacy::Animate } else { Animacy::Inanimate };
            for c in cats {
                categories.insert(c.to_string(), a);
            }
        }
        Self {
            attributes,
            categories,
            supercategories,
        }
    }
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

impl Lexicon {
    /// Keyword rules with priority attribute/location > category > supercategory.
    /// No match gives an object question of unknown animacy.
    pub fn classify_text(&self, text: &str) -> (QType, Option<Animacy>) {
        let tokens = tokenize(text);
        for (qtype, words) in &self.attributes {
            if tokens.iter().any(|t| words.contains(t)) {
                return (*qtype, None);
            }
        }
        if let Some(a) = tokens.iter().find_map(|t| self.categories.get(t)) {
            return (QType::Object, Some(*a));
        }
        if tokens.iter().any(|t| self.supercategories.contains(t)) {
            return (QType::Supercategory, None);
        }
        (QType::Object, Some(Animacy::Unknown))
    }

    /// Structured questions keep their stored type.
    pub fn classify(&self, q: &Question) -> (QType, Option<Animacy>) {
        (q.qtype, q.animacy)
    }
}

/// Row label of a question class, splitting object questions by animacy.
pub fn class_label(qtype: QType, animacy: Option<Animacy>) -> &'static str {
    match (qtype, animacy) {
        (QType::Object, Some(Animacy::Animate)) => "animate object",
        (QType::Object, Some(Animacy::Inanimate)) => "inanimate object",
        (QType::Object, _) => "object",
        (QType::Supercategory, _) => "super category",
        (QType::Color, _) => "color",
        (QType::Size, _) => "size",
        (QType::Texture, _) => "texture",
        (QType::Shape, _) => "shape",
        (QType::Location, _) => "location",
    }
}
