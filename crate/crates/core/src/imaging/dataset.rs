use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imaging::{degrade, load_image, modcrop, save_image, synthetic_scene, Image, SrPair};

/// PNG files directly inside `dir`, sorted by file name.
pub fn hr_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Where the bicubic LR counterpart of `file_name` is cached:
/// `<dir>/LR_bicubic/X<scale>/<file_name>`.
pub fn lr_cache_path(dir: &Path, file_name: &str, scale: usize) -> PathBuf {
    dir.join("LR_bicubic").join(format!("X{scale}")).join(file_name)
}

/// Named, degraded image pairs in a fixed order.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub scale: usize,
    pub items: Vec<(String, SrPair)>,
}

impl Dataset {
    /// Loads every HR PNG in `dir`. LR images are read from the cache when
    /// present and generated otherwise; `write_cache` stores generated ones.
    pub fn load(dir: &Path, scale: usize, write_cache: bool) -> Result<Self> {
        let files = hr_files(dir)?;
        if files.is_empty() {
            return Err(Error::Dataset(format!("no PNG images in {}", dir.display())));
        }
        let mut items = Vec::with_capacity(files.len());
        for path in files {
            let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let hr = load_image(&path)?;
            let cached = lr_cache_path(dir, &file_name, scale);
            let pair = if cached.is_file() {
                let hr = modcrop(&hr, scale)?;
                SrPair::new(hr, load_image(&cached)?, scale)
                    .map_err(|e| Error::Dataset(format!("stale LR cache {}: {e}", cached.display())))?
            } else {
                let pair = degrade(&hr, scale)?;
                if write_cache {
                    let parent = cached.parent().expect("cache path has a parent");
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                    save_image(&pair.lr, &cached)?;
                }
                pair
            };
            let stem = path.file_stem().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            items.push((stem, pair));
        }
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("dataset").to_string();
        Ok(Dataset { name, scale, items })
    }

    /// Degrades in-memory HR images.
    pub fn from_images(name: &str, images: Vec<(String, Image)>, scale: usize) -> Result<Self> {
        let items = images
            .into_iter()
            .map(|(n, im)| Ok((n, degrade(&im, scale)?)))
            .collect::<Result<Vec<_>>>()?;
        if items.is_empty() {
            return Err(Error::Dataset(format!("dataset `{name}` is empty")));
        }
        Ok(Dataset { name: name.to_string(), scale, items })
    }

    /// `count` procedural RGB scenes of `size × size` HR pixels.
    pub fn synthetic(name: &str, count: usize, size: usize, scale: usize, seed: u64) -> Result<Self> {
        let images = (0..count)
            .map(|i| (format!("{name}_{i:03}"), synthetic_scene(size, size, seed.wrapping_add(i as u64))))
            .collect();
        Dataset::from_images(name, images, scale)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &SrPair> {
        self.items.iter().map(|(_, p)| p)
    }
}
