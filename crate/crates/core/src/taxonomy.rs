use std::collections::HashSet;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Canonical peripheral blood cell classes, in the index order used by every
/// matrix and file.
pub const PBC_CLASSES: [&str; 8] = [
    "basophil",
    "eosinophil",
    "erythroblast",
    "ig",
    "lymphocyte",
    "monocyte",
    "neutrophil",
    "platelet",
];

/// Image counts per class in the public PBC dataset, in [`PBC_CLASSES`] order.
pub const PBC_CLASS_COUNTS: [usize; 8] = [1218, 3117, 1551, 2895, 1214, 1420, 3329, 2348];

/// Ordered, duplicate-free list of class labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassTaxonomy {
    classes: Vec<String>,
}

impl ClassTaxonomy {
    pub fn new<I, S>(classes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        if classes.len() < 2 {
            return Err(Error::Taxonomy(format!(
                "need at least 2 classes, got {}",
                classes.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &classes {
            if name.is_empty() {
                return Err(Error::Taxonomy("class names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Taxonomy(format!("duplicate class `{name}`")));
            }
        }
        Ok(ClassTaxonomy { classes })
    }

    /// The eight PBC classes.
    pub fn canonical() -> Self {
        ClassTaxonomy {
            classes: PBC_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.classes
    }

    pub fn name(&self, index: usize) -> &str {
        &self.classes[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Column header for a table: `ig` becomes `IG`, other names are capitalized.
    pub fn display_name(&self, index: usize) -> String {
        let name = self.name(index);
        if name == "ig" {
            return "IG".to_string();
        }
        let mut chars = name.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    }

    /// Score column names of a prediction file: `s_<class>`.
    pub fn score_columns(&self) -> Vec<String> {
        self.classes.iter().map(|c| format!("s_{c}")).collect()
    }
}

impl Default for ClassTaxonomy {
    fn default() -> Self {
        ClassTaxonomy::canonical()
    }
}

impl Serialize for ClassTaxonomy {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.classes.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ClassTaxonomy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let classes = Vec::<String>::deserialize(deserializer)?;
        ClassTaxonomy::new(classes).map_err(serde::de::Error::custom)
    }
}
