use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::crop::{extract_instance, CropBox, CropConfig, InstanceSample};
use crate::data::image::{load_mask, save_mask, RgbImage};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    /// Image path relative to the dataset root.
    pub image: String,
    pub mask: String,
    pub class_id: u32,
    pub split: Split,
    /// Inclusive pixel box `[min_x, min_y, max_x, max_y]`; derived from the
    /// mask when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[usize; 4]>,
}

/// Contents of `index.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetIndex {
    pub samples: Vec<SampleEntry>,
    /// Class name to id.
    pub classes: BTreeMap<String, u32>,
}

impl DatasetIndex {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn class_names(&self) -> BTreeMap<u32, String> {
        self.classes.iter().map(|(n, &id)| (id, n.clone())).collect()
    }
}

/// Class set used when none is configured.
pub fn default_classes() -> BTreeMap<String, u32> {
    [
        "car",
        "traffic sign",
        "bicycle",
        "person",
        "rider",
        "motorcycle",
        "traffic light",
        "truck",
        "bus",
    ]
    .iter()
    .enumerate()
    .map(|(i, n)| (n.to_string(), i as u32))
    .collect()
}

/// A validated index together with the directory it was read from.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    index: DatasetIndex,
}

/// Reads and validates `root/index.json`. Every referenced file must exist
/// and every class id must be declared.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let path = root.join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Dataset {
        sample: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let index: DatasetIndex = serde_json::from_str(&text).map_err(|e| Error::Dataset {
        sample: path.display().to_string(),
        detail: format!("schema violation: {e}"),
    })?;
    if index.samples.is_empty() {
        return Err(Error::Dataset {
            sample: path.display().to_string(),
            detail: "no samples".into(),
        });
    }
    let known: std::collections::BTreeSet<u32> = index.classes.values().copied().collect();
    for (i, s) in index.samples.iter().enumerate() {
        let name = format!("sample {i} ({})", s.image);
        if !known.contains(&s.class_id) {
            return Err(Error::Dataset {
                sample: name,
                detail: format!("unknown class id {}", s.class_id),
            });
        }
        for rel in [&s.image, &s.mask] {
            let p = root.join(rel);
            if !p.is_file() {
                return Err(Error::Dataset {
                    sample: name,
                    detail: format!("missing file {}", p.display()),
                });
            }
        }
        if let Some([x0, y0, x1, y1]) = s.bbox {
            if x1 < x0 || y1 < y0 {
                return Err(Error::Dataset {
                    sample: name,
                    detail: format!("inverted bbox {:?}", s.bbox),
                });
            }
        }
    }
    Ok(Dataset {
        root: root.to_path_buf(),
        index,
    })
}

impl Dataset {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index(&self) -> &DatasetIndex {
        &self.index
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = (usize, &SampleEntry)> {
        self.index.samples.iter().enumerate().filter(move |(_, s)| s.split == split)
    }

    /// Loads and crops every sample of `split`, in index order.
    pub fn load_split(&self, split: Split, config: &CropConfig) -> Result<Vec<InstanceSample>> {
        self.entries(split).map(|(i, e)| self.load_sample(i, e, config)).collect()
    }

    fn load_sample(&self, i: usize, e: &SampleEntry, config: &CropConfig) -> Result<InstanceSample> {
        let wrap = |err: Error| Error::Dataset {
            sample: format!("sample {i} ({})", e.image),
            detail: err.to_string(),
        };
        let image = RgbImage::load(&self.root.join(&e.image)).map_err(wrap)?;
        let mask = load_mask(&self.root.join(&e.mask)).map_err(wrap)?;
        let bbox = e.bbox.map(|[x0, y0, x1, y1]| CropBox::from_pixels(x0, y0, x1, y1));
        extract_instance(&image, &mask, e.class_id, bbox, config).map_err(wrap)
    }
}

/// A full image with one annotated object.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: RgbImage,
    pub mask: BinaryMask,
    pub class_id: u32,
}

/// Writes scenes as PNG pairs plus an index. `split_of(i)` picks each
/// scene's split.
pub fn write_dataset(
    root: &Path,
    scenes: &[Scene],
    classes: BTreeMap<String, u32>,
    split_of: impl Fn(usize) -> Split,
) -> Result<DatasetIndex> {
    fs::create_dir_all(root.join("images"))?;
    fs::create_dir_all(root.join("masks"))?;
    let mut samples = Vec::with_capacity(scenes.len());
    for (i, scene) in scenes.iter().enumerate() {
        let image = format!("images/{i:04}.png");
        let mask = format!("masks/{i:04}.png");
        scene.image.save(&root.join(&image))?;
        save_mask(&scene.mask, &root.join(&mask))?;
        samples.push(SampleEntry {
            image,
            mask,
            class_id: scene.class_id,
            split: split_of(i),
            bbox: None,
        });
    }
    let index = DatasetIndex { samples, classes };
    fs::write(root.join(INDEX_FILE), index.to_json()?)?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(k: usize) -> Scene {
        Scene {
            image: RgbImage::from_fn(20, 16, |x, _| [x as f32 / 20.0, 0.2, 0.8]),
            mask: BinaryMask::from_fn(20, 16, |x, y| (3 + k..12 + k).contains(&x) && (4..11).contains(&y)),
            class_id: k as u32,
        }
    }

    fn classes() -> BTreeMap<String, u32> {
        BTreeMap::from([("a".to_string(), 0), ("b".to_string(), 1)])
    }

    #[test]
    fn two_sample_fixture() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[scene(0), scene(1)], classes(), |i| {
            if i == 0 {
                Split::Train
            } else {
                Split::Val
            }
        })
        .unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.index().samples.len(), 2);
        let cfg = CropConfig { size: 16, ..CropConfig::default() };
        let train = ds.load_split(Split::Train, &cfg).unwrap();
        let val = ds.load_split(Split::Val, &cfg).unwrap();
        assert_eq!((train.len(), val.len()), (1, 1));
        assert_eq!(val[0].class_id, 1);

        let again = load_dataset(dir.path()).unwrap();
        assert_eq!(again.index().to_json().unwrap(), ds.index().to_json().unwrap());
    }

    #[test]
    fn missing_png_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[scene(0), scene(1)], classes(), |_| Split::Train).unwrap();
        fs::remove_file(dir.path().join("masks/0001.png")).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("masks/0001.png"), "{err}");
        assert!(err.contains("sample 1"), "{err}");
    }

    #[test]
    fn schema_and_class_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[scene(0)], classes(), |_| Split::Train).unwrap();
        let idx = dir.path().join(INDEX_FILE);
        let text = fs::read_to_string(&idx).unwrap();

        fs::write(&idx, text.replace("\"class_id\": 0", "\"class_id\": 7")).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("unknown class id 7") && err.contains("sample 0"), "{err}");

        fs::write(&idx, text.replace("\"split\": \"train\"", "\"split\": \"test\"")).unwrap();
        assert!(load_dataset(dir.path()).unwrap_err().to_string().contains("schema"));

        fs::write(&idx, r#"{"samples": [], "classes": {}}"#).unwrap();
        assert!(load_dataset(dir.path()).is_err());
        assert!(load_dataset(&dir.path().join("nope")).is_err());
    }

    #[test]
    fn precomputed_bbox_is_used() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &[scene(0)], classes(), |_| Split::Train).unwrap();
        let idx = dir.path().join(INDEX_FILE);
        let mut index: DatasetIndex = serde_json::from_str(&fs::read_to_string(&idx).unwrap()).unwrap();
        index.samples[0].bbox = Some([0, 0, 19, 15]);
        fs::write(&idx, index.to_json().unwrap()).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        let s = &ds.load_split(Split::Train, &CropConfig { margin: 0.0, ..CropConfig::default() }).unwrap()[0];
        assert_eq!((s.bbox.x0, s.bbox.y0, s.bbox.x1, s.bbox.y1), (0.0, 0.0, 20.0, 16.0));
    }

    #[test]
    fn default_class_set_has_nine() {
        let c = default_classes();
        assert_eq!(c.len(), 9);
        assert_eq!(c["car"], 0);
        assert_eq!(c["bus"], 8);
    }
}
