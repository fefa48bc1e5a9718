//! Linking image object annotations to knowledge-graph entities.
//!
//! Visual Genome style objects carry WordNet synset names
//! (`traffic_light.n.01`), converted to synset ids (`06887235-n`) through a
//! bundled offset index. Google Landmarks style images carry a Wikimedia
//! Commons URL whose last path segment names the landmark.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};
use url::Url;

use crate::kg::{validate_synset_id, EntityId, KgStore};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ImageSource {
    #[serde(rename = "VG")]
    VisualGenome,
    #[serde(rename = "GLDv2")]
    Landmarks,
}

impl ImageSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageSource::VisualGenome => "VG",
            ImageSource::Landmarks => "GLDv2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub image_id: String,
    pub object_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synset_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wikimedia_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[i64; 4]>,
}

/// A scene-graph relationship whose subject is an annotated object, e.g.
/// (car) "parked next to" "sidewalk".
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SceneRelation {
    pub image_id: String,
    pub subject_object_id: String,
    pub predicate: String,
    pub object_label: String,
}

/// `lemma.pos.sense` to `offset-pos` lookup.
#[derive(Debug, Clone, Default)]
pub struct WordNetIndex {
    entries: HashMap<String, String>,
}

fn parse_synset_name(name: &str) -> Result<(&str, char, u32)> {
    let malformed = || Error::Input(format!("malformed synset name {name:?}"));
    let mut parts = name.rsplitn(3, '.');
    let sense = parts.next().ok_or_else(malformed)?;
    let pos = parts.next().ok_or_else(malformed)?;
    let lemma = parts.next().ok_or_else(malformed)?;
    let sense: u32 = sense.parse().map_err(|_| malformed())?;
    let mut pos_chars = pos.chars();
    let pos = match (pos_chars.next(), pos_chars.next()) {
        (Some(c @ ('n' | 'v' | 'a' | 'r' | 's')), None) => c,
        _ => return Err(malformed()),
    };
    if lemma.is_empty() || sense == 0 {
        return Err(malformed());
    }
    Ok((lemma, pos, sense))
}

fn index_key(lemma: &str, pos: char, sense: u32) -> String {
    format!("{}.{pos}.{sense:02}", lemma.to_lowercase())
}

impl WordNetIndex {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                message,
            };
            let (name, id) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected `lemma.pos.sense<TAB>offset-pos`".into()))?;
            let (lemma, pos, sense) = parse_synset_name(name.trim()).map_err(|e| bad(e.to_string()))?;
            let id = id.trim();
            validate_synset_id(id).map_err(|e| bad(e.to_string()))?;
            entries.insert(index_key(lemma, pos, sense), id.to_string());
        }
        Ok(Self { entries })
    }

    /// `traffic_light.n.01` to `06887235-n`.
    pub fn synset_name_to_id(&self, synset_name: &str) -> Result<String> {
        let (lemma, pos, sense) = parse_synset_name(synset_name)?;
        self.entries
            .get(&index_key(lemma, pos, sense))
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("synset {synset_name} not in WordNet index")))
    }
}

/// Landmark name from a Commons category or page URL:
/// `.../Category:Maria_Magdalena_kyrka,_Stockholm` gives
/// `Maria Magdalena kyrka, Stockholm`.
pub fn landmark_name_from_url(url: &str) -> Result<String> {
    let parsed = Url::parse(url).map_err(|e| Error::Input(format!("unparsable URL {url:?}: {e}")))?;
    let segment = parsed
        .path_segments()
        .and_then(|mut s| s.rfind(|seg| !seg.is_empty()))
        .ok_or_else(|| Error::Input(format!("URL {url:?} has no path segment")))?;
    let decoded = percent_decode_str(segment)
        .decode_utf8()
        .map_err(|e| Error::Input(format!("URL {url:?} is not UTF-8: {e}")))?;
    let name = decoded.strip_prefix("Category:").unwrap_or(&decoded);
    let name = name.replace('_', " ").trim().to_string();
    if name.is_empty() {
        return Err(Error::Input(format!("URL {url:?} names nothing")));
    }
    Ok(name)
}

/// Resolves an annotation to an entity: the synset path first, the URL
/// path as fallback.
pub fn link_object(ann: &ObjectAnnotation, kg: &KgStore, wordnet: &WordNetIndex) -> Result<Option<EntityId>> {
    if ann.synset_name.is_none() && ann.wikimedia_url.is_none() {
        return Err(Error::Input(format!(
            "object {}/{} has neither a synset name nor a Wikimedia URL",
            ann.image_id, ann.object_id
        )));
    }
    let by_synset = match &ann.synset_name {
        Some(name) => match wordnet.synset_name_to_id(name) {
            Ok(id) => kg.entity_by_synset_id(&id)?,
            Err(Error::NotFound(msg)) => {
                log::debug!("{}/{}: {msg}", ann.image_id, ann.object_id);
                None
            }
            Err(e) => return Err(e),
        },
        None => None,
    };
    let by_url = match &ann.wikimedia_url {
        Some(url) => kg.entity_by_commons_name(&landmark_name_from_url(url)?)?,
        None => None,
    };
    if let (Some(a), Some(b)) = (&by_synset, &by_url) {
        if a != b {
            log::warn!(
                "{}/{}: synset links {a} but URL links {b}; keeping {a}",
                ann.image_id,
                ann.object_id
            );
        }
    }
    Ok(by_synset.or(by_url))
}

/// All objects of one image, in annotation order.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub image_id: String,
    pub source: ImageSource,
    pub objects: Vec<ObjectAnnotation>,
    pub relations: Vec<SceneRelation>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn parse_error(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        message: message.to_string(),
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_error(path, idx + 1, e))?);
    }
    Ok(out)
}

/// Visual Genome style objects: one [`ObjectAnnotation`] per JSON line.
pub fn read_vg_objects(path: &Path) -> Result<Vec<ObjectAnnotation>> {
    let objects: Vec<ObjectAnnotation> = read_jsonl(path)?;
    for (idx, o) in objects.iter().enumerate() {
        if o.synset_name.is_none() && o.wikimedia_url.is_none() {
            return Err(parse_error(path, idx + 1, "object has neither synset_name nor wikimedia_url"));
        }
    }
    Ok(objects)
}

pub fn read_scene_relations(path: &Path) -> Result<Vec<SceneRelation>> {
    let relations: Vec<SceneRelation> = read_jsonl(path)?;
    for (idx, r) in relations.iter().enumerate() {
        if r.predicate.trim().is_empty() || r.object_label.trim().is_empty() {
            return Err(parse_error(path, idx + 1, "relation needs a predicate and an object label"));
        }
    }
    Ok(relations)
}

#[derive(Deserialize)]
struct LandmarkRow {
    image_id: String,
    wikimedia_url: String,
}

/// Google Landmarks style CSV with columns `image_id,wikimedia_url`. Each
/// row becomes a single `landmark` object.
pub fn read_landmark_csv(path: &Path) -> Result<Vec<ObjectAnnotation>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for (idx, row) in reader.deserialize::<LandmarkRow>().enumerate() {
        let row = row.map_err(|e| parse_error(path, idx + 2, e))?;
        out.push(ObjectAnnotation {
            object_id: format!("{}_landmark", row.image_id),
            image_id: row.image_id,
            synset_name: None,
            wikimedia_url: Some(row.wikimedia_url),
            bbox: None,
        });
    }
    Ok(out)
}

/// Groups annotations into images, keeping first-seen image and object
/// order. Relations attach to the image named in them.
pub fn group_images(
    objects: Vec<ObjectAnnotation>,
    source: ImageSource,
    relations: &[SceneRelation],
) -> Vec<AnnotatedImage> {
    let mut order: Vec<String> = Vec::new();
    let mut by_image: HashMap<String, Vec<ObjectAnnotation>> = HashMap::new();
    for o in objects {
        if !by_image.contains_key(&o.image_id) {
            order.push(o.image_id.clone());
        }
        by_image.entry(o.image_id.clone()).or_default().push(o);
    }
    order
        .into_iter()
        .map(|image_id| {
            let objects = by_image.remove(&image_id).unwrap_or_default();
            let mut rels: Vec<SceneRelation> =
                relations.iter().filter(|r| r.image_id == image_id).cloned().collect();
            rels.sort();
            AnnotatedImage {
                image_id,
                source,
                objects,
                relations: rels,
            }
        })
        .collect()
}
