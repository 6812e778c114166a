//! Character catalog: target skeletons with joint maps from the canonical
//! gesture skeleton. Layout on disk is `<id>/{skeleton.bvh, jointmap.txt, meta.json}`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{parse_bvh, rest_height, JointMap, Skeleton};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("character {id}: {message}")]
    Invalid { id: String, message: String },
    #[error("character directory: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Meta {
    id: String,
    #[serde(rename = "displayName")]
    display_name: String,
    #[serde(default)]
    description: String,
}

/// Catalog entry as shown to clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterInfo {
    pub id: String,
    #[serde(rename = "displayName")]
    pub display_name: String,
    pub description: String,
    #[serde(rename = "heightMeters")]
    pub height_meters: f64,
}

#[derive(Clone, Debug)]
pub struct Character {
    pub info: CharacterInfo,
    pub skeleton: Skeleton,
    pub joint_map: JointMap,
}

impl Character {
    pub fn from_parts(id: &str, bvh: &str, joint_map: &str, meta: &str) -> Result<Self, CatalogError> {
        let invalid = |message: String| CatalogError::Invalid { id: id.to_string(), message };
        let meta: Meta = serde_json::from_str(meta).map_err(|e| invalid(format!("meta.json: {e}")))?;
        if meta.id != id {
            return Err(invalid(format!("meta.json id {:?} does not match directory", meta.id)));
        }
        let skeleton = parse_bvh(bvh).map_err(|e| invalid(format!("skeleton.bvh: {e}")))?.skeleton;
        let joint_map = JointMap::parse(joint_map).map_err(|e| invalid(format!("jointmap.txt: {e}")))?;
        for (_, target) in joint_map.iter() {
            if skeleton.index_of(target).is_none() {
                return Err(invalid(format!("jointmap.txt names unknown joint {target:?}")));
            }
        }
        let height_meters = rest_height(&skeleton) / 100.0;
        if height_meters <= 0.0 {
            return Err(invalid("skeleton has zero height".into()));
        }
        Ok(Self {
            info: CharacterInfo { id: meta.id, display_name: meta.display_name, description: meta.description, height_meters },
            skeleton,
            joint_map,
        })
    }

    pub fn id(&self) -> &str {
        &self.info.id
    }
}

macro_rules! bundled {
    ($id:literal) => {
        (
            $id,
            include_str!(concat!("../characters/", $id, "/skeleton.bvh")),
            include_str!(concat!("../characters/", $id, "/jointmap.txt")),
            include_str!(concat!("../characters/", $id, "/meta.json")),
        )
    };
}

const BUNDLED: [(&str, &str, &str, &str); 2] = [bundled!("capsule-kid"), bundled!("capsule-adult")];

/// The characters compiled into the library.
pub fn builtin_characters() -> Vec<Character> {
    BUNDLED
        .iter()
        .map(|(id, bvh, map, meta)| Character::from_parts(id, bvh, map, meta).expect("bundled character is valid"))
        .collect()
}

/// Loads every character subdirectory of `dir`, sorted by id.
pub fn load_dir(dir: &Path) -> Result<Vec<Character>, CatalogError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_dir() {
            continue;
        }
        let id = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let read = |f: &str| std::fs::read_to_string(path.join(f));
        out.push(Character::from_parts(&id, &read("skeleton.bvh")?, &read("jointmap.txt")?, &read("meta.json")?)?);
    }
    out.sort_by(|a, b| a.info.id.cmp(&b.info.id));
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Catalog {
    characters: Vec<Character>,
}

impl Default for Catalog {
    fn default() -> Self {
        Self { characters: builtin_characters() }
    }
}

impl Catalog {
    pub fn new(characters: Vec<Character>) -> Self {
        Self { characters }
    }

    pub fn get(&self, id: &str) -> Option<&Character> {
        self.characters.iter().find(|c| c.info.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.characters.iter().map(Character::id)
    }

    pub fn infos(&self) -> Vec<CharacterInfo> {
        self.characters.iter().map(|c| c.info.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.characters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.characters.is_empty()
    }
}
