//! On-disk dataset layout:
//!
//! ```text
//! DIR/input/NAME.png    original photo
//! DIR/target/NAME.png   stylized photo
//! DIR/mask/NAME.png     optional region mask (white = foreground)
//! DIR/train.txt         newline-separated NAMEs
//! DIR/test.txt
//! ```

use std::path::{Path, PathBuf};

use super::StylePair;
use crate::color::{srgb_to_lab, RgbImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub root: PathBuf,
}

impl DatasetPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn input(&self, name: &str) -> PathBuf {
        self.root.join("input").join(format!("{name}.png"))
    }

    pub fn target(&self, name: &str) -> PathBuf {
        self.root.join("target").join(format!("{name}.png"))
    }

    pub fn mask(&self, name: &str) -> PathBuf {
        self.root.join("mask").join(format!("{name}.png"))
    }

    pub fn split(&self, split: &str) -> PathBuf {
        self.root.join(format!("{split}.txt"))
    }
}

pub fn read_split_names(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

pub fn write_split_names(path: &Path, names: &[String]) -> Result<()> {
    let mut text = names.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads every pair listed in `DIR/<split>.txt`.
pub fn load_split(root: &Path, split: &str) -> Result<Vec<StylePair>> {
    let paths = DatasetPaths::new(root);
    read_split_names(&paths.split(split))?
        .into_iter()
        .map(|name| {
            let input = srgb_to_lab(&RgbImage::read_png(paths.input(&name))?);
            let target = srgb_to_lab(&RgbImage::read_png(paths.target(&name))?);
            StylePair::new(input, target, Some(name))
        })
        .collect()
}
