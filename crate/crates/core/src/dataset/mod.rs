//! Datasets: the 36-class label map, directory-per-class loading with
//! deterministic stratified splits, PGM/PPM codecs, and synthetic glyph
//! generation for self-contained experiments.

mod font;
mod pnm;
mod synth;

pub use font::{GlyphFont, GLYPH_COLS, GLYPH_ROWS};
pub use pnm::{decode_image, encode_image, load_image, save_image, PnmFormat};
pub use synth::{render_glyph, synth_glyphs, synth_scene, GlyphJitter, Polarity};

use std::path::Path;

use crate::error::{Error, Result};
use crate::imgproc::ImageU8;
use crate::rng::{derive_seed, Rng};

/// '0'..'9' then 'a'..'z'; uppercase input folds onto the lowercase class.
pub const NUM_CLASSES: usize = 36;

/// Class id of an alphanumeric character (case-insensitive).
pub fn label_map(c: char) -> Result<usize> {
    match c {
        '0'..='9' => Ok(c as usize - '0' as usize),
        'a'..='z' => Ok(10 + c as usize - 'a' as usize),
        'A'..='Z' => Ok(10 + c as usize - 'A' as usize),
        other => Err(Error::Label(format!("no class for character {other:?}"))),
    }
}

/// Canonical character of a class id: digits and lowercase letters.
pub fn id_to_char(id: usize) -> char {
    assert!(id < NUM_CLASSES, "class id {id} out of range");
    if id < 10 {
        (b'0' + id as u8) as char
    } else {
        (b'a' + (id - 10) as u8) as char
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub image: ImageU8,
    pub label: usize,
    /// Source path for loaded data, synthetic identifier otherwise.
    pub name: String,
}

/// Immutable labeled image collection with a per-sample split assignment.
#[derive(Debug, Clone)]
pub struct Dataset {
    samples: Vec<Sample>,
    splits: Vec<Split>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, splits: Vec<Split>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset("no samples".into()));
        }
        if samples.len() != splits.len() {
            return Err(Error::Precondition(format!(
                "{} samples but {} split assignments",
                samples.len(),
                splits.len()
            )));
        }
        if let Some(s) = samples.iter().find(|s| s.label >= NUM_CLASSES) {
            return Err(Error::Label(format!("label {} out of range in {}", s.label, s.name)));
        }
        Ok(Self { samples, splits })
    }

    /// Stratified 80/10/10 assignment: within each class, floor(n/10)
    /// samples go to val and to test, the rest to train.
    pub fn with_stratified_split(samples: Vec<Sample>, seed: u64) -> Result<Self> {
        let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
        let splits = stratified_split(&labels, seed);
        Self::new(samples, splits)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, idx: usize) -> &Sample {
        &self.samples[idx]
    }

    pub fn split_of(&self, idx: usize) -> Split {
        self.splits[idx]
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// CSV manifest `path,label,split`, one row per sample, sample order.
    pub fn manifest_csv(&self) -> String {
        let mut out = String::from("path,label,split\n");
        for (s, split) in self.samples.iter().zip(&self.splits) {
            out.push_str(&format!("{},{},{}\n", s.name, id_to_char(s.label), split.name()));
        }
        out
    }
}

fn stratified_split(labels: &[usize], seed: u64) -> Vec<Split> {
    let mut splits = vec![Split::Train; labels.len()];
    for class in 0..NUM_CLASSES {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        let mut order: Vec<usize> = (0..members.len()).collect();
        Rng::new(derive_seed(seed, class as u64)).shuffle(&mut order);
        let n_val = members.len() / 10;
        let n_test = members.len() / 10;
        for (rank, &slot) in order.iter().enumerate() {
            splits[members[slot]] = if rank < n_val {
                Split::Val
            } else if rank < n_val + n_test {
                Split::Test
            } else {
                Split::Train
            };
        }
    }
    splits
}

/// Loads `<root>/<class-char>/*.pgm|ppm` into a dataset with a seeded
/// stratified split. Directory names that are not a single alphanumeric
/// character are skipped with a warning, as are undecodable files. The
/// sample order is the sorted path order, so (seed, file set) fully
/// determines the split.
pub fn load_class_dirs(root: &Path, seed: u64) -> Result<Dataset> {
    let mut entries: Vec<(String, usize, std::path::PathBuf)> = Vec::new();
    for dir in std::fs::read_dir(root)? {
        let dir = dir?;
        if !dir.file_type()?.is_dir() {
            continue;
        }
        let dir_name = dir.file_name().to_string_lossy().into_owned();
        let mut chars = dir_name.chars();
        let label = match (chars.next(), chars.next()) {
            (Some(c), None) => match label_map(c) {
                Ok(l) => l,
                Err(_) => {
                    eprintln!("warning: skipping unknown class directory {dir_name:?}");
                    continue;
                }
            },
            _ => {
                eprintln!("warning: skipping unknown class directory {dir_name:?}");
                continue;
            }
        };
        for file in std::fs::read_dir(dir.path())? {
            let path = file?.path();
            let ext = path
                .extension()
                .map(|e| e.to_string_lossy().to_ascii_lowercase())
                .unwrap_or_default();
            if ext == "pgm" || ext == "ppm" {
                entries.push((path.to_string_lossy().into_owned(), label, path));
            }
        }
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let mut samples = Vec::with_capacity(entries.len());
    for (name, label, path) in entries {
        match load_image(&path) {
            Ok(image) => samples.push(Sample { image, label, name }),
            Err(e) => eprintln!("warning: skipping {name}: {e}"),
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset(format!("no decodable samples under {}", root.display())));
    }
    Dataset::with_stratified_split(samples, seed)
}

/// Writes a dataset out as a `<root>/<class-char>/NNNN.pgm` tree, the
/// layout `load_class_dirs` reads back.
pub fn save_class_dirs(dataset: &Dataset, root: &Path) -> Result<()> {
    let mut per_class_counter = vec![0usize; NUM_CLASSES];
    for idx in 0..dataset.len() {
        let s = dataset.sample(idx);
        let dir = root.join(id_to_char(s.label).to_string());
        std::fs::create_dir_all(&dir)?;
        let n = per_class_counter[s.label];
        per_class_counter[s.label] += 1;
        let ext = if s.image.channels() == 1 { "pgm" } else { "ppm" };
        save_image(&s.image, &dir.join(format!("{n:04}.{ext}")))?;
    }
    Ok(())
}
