//! Dataset ingestion: IDX files, PGM/PPM rasters, resizing, scaling,
//! class filtering and seeded batching.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{InnError, Result};
use crate::rng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw 8-bit images as stored in an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImages {
    pub height: usize,
    pub width: usize,
    /// `count × height × width` bytes, row-major per image.
    pub pixels: Vec<u8>,
}

impl RawImages {
    pub fn len(&self) -> usize {
        self.pixels.len() / (self.height * self.width).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let s = self.height * self.width;
        &self.pixels[i * s..(i + 1) * s]
    }
}

/// Images plus one label byte per image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxDataset {
    pub images: RawImages,
    pub labels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let b = bytes.get(at..at + 4).ok_or(InnError::TruncatedFile {
        needed: at + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(InnError::BadMagic { expected, found });
    }
    Ok(())
}

fn take_body(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    let needed = header + len;
    if bytes.len() < needed {
        return Err(InnError::TruncatedFile {
            needed,
            found: bytes.len(),
        });
    }
    Ok(&bytes[header..needed])
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<RawImages> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let height = be_u32(bytes, 8)? as usize;
    let width = be_u32(bytes, 12)? as usize;
    let body = take_body(bytes, 16, count * height * width)?;
    Ok(RawImages {
        height,
        width,
        pixels: body.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    Ok(take_body(bytes, 8, count)?.to_vec())
}

pub fn encode_idx_images(images: &RawImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IDX_IMAGES_MAGIC,
        images.len() as u32,
        images.height as u32,
        images.width as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Reads an image file and its label file, checking that the counts agree.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<IdxDataset> {
    let images = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(InnError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok(IdxDataset { images, labels })
}

pub fn write_idx(dataset: &IdxDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    fs::write(images_path, encode_idx_images(&dataset.images))?;
    fs::write(labels_path, encode_idx_labels(&dataset.labels))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Loads `train-*` or `t10k-*` from a directory in the standard MNIST layout.
pub fn load_idx_dir(dir: &Path, split: Split) -> Result<IdxDataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    load_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// A single-channel real image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(InnError::InvalidDimension("image dimensions must be positive".into()));
        }
        if data.len() != height * width {
            return Err(InnError::DimensionMismatch {
                expected: height * width,
                found: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, bytes.iter().map(|&b| b as f64).collect())
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Source coordinate for output index `i` with corner-aligned sampling.
fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out == 1 {
        (n_in - 1) as f64 / 2.0
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

/// Bilinear resize. Output corners sample input corners; a length-1 output
/// axis samples the input center.
pub fn resize_bilinear(img: &Image, height: usize, width: usize) -> Result<Image> {
    if height == 0 || width == 0 {
        return Err(InnError::InvalidDimension("resize target must be positive".into()));
    }
    if height == img.height && width == img.width {
        return Ok(img.clone());
    }
    let mut data = Vec::with_capacity(height * width);
    for i in 0..height {
        let sy = source_coord(i, img.height, height);
        let y0 = (sy.floor() as usize).min(img.height - 1);
        let y1 = (y0 + 1).min(img.height - 1);
        let fy = sy - y0 as f64;
        for j in 0..width {
            let sx = source_coord(j, img.width, width);
            let x0 = (sx.floor() as usize).min(img.width - 1);
            let x1 = (x0 + 1).min(img.width - 1);
            let fx = sx - x0 as f64;
            let top = img.at(y0, x0) * (1.0 - fx) + img.at(y0, x1) * fx;
            let bottom = img.at(y1, x0) * (1.0 - fx) + img.at(y1, x1) * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Image::new(height, width, data)
}

/// Central `height × width` window (rounded toward the top-left).
pub fn center_crop(img: &Image, height: usize, width: usize) -> Result<Image> {
    if height == 0 || width == 0 || height > img.height || width > img.width {
        return Err(InnError::InvalidDimension(format!(
            "cannot crop {}x{} to {height}x{width}",
            img.height, img.width
        )));
    }
    let top = (img.height - height) / 2;
    let left = (img.width - width) / 2;
    let data = (top..top + height)
        .flat_map(|y| (left..left + width).map(move |x| (y, x)))
        .map(|(y, x)| img.at(y, x))
        .collect();
    Image::new(height, width, data)
}

/// `v / 127.5 - 1`, mapping `[0, 255]` onto `[-1, 1]`.
pub fn scale_pixel(v: f64) -> f64 {
    v / 127.5 - 1.0
}

pub fn scale_pixels(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&v| scale_pixel(v)).collect()
}

/// How raw images become network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preprocess {
    pub height: usize,
    pub width: usize,
    /// Center-crop to the target size instead of resizing.
    pub crop: bool,
}

impl Preprocess {
    pub fn resize(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            crop: false,
        }
    }

    pub fn apply(&self, img: &Image) -> Result<Vec<f64>> {
        let out = if self.crop {
            center_crop(img, self.height, self.width)?
        } else {
            resize_bilinear(img, self.height, self.width)?
        };
        Ok(out.data.iter().map(|&v| scale_pixel(v).clamp(-1.0, 1.0)).collect())
    }
}

/// Preprocessed images with values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    pub height: usize,
    pub width: usize,
    pub images: Vec<Vec<f64>>,
    /// `None` for unlabeled sets (image directories).
    pub labels: Option<Vec<usize>>,
}

impl LabeledImageSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels.as_ref().map(|l| l[i])
    }

    /// Keeps the first `n` items.
    pub fn truncate(&mut self, n: usize) {
        self.images.truncate(n);
        if let Some(l) = self.labels.as_mut() {
            l.truncate(n);
        }
    }

    /// Sub-set at the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            height: self.height,
            width: self.width,
            images: idx.iter().map(|&i| self.images[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

pub fn preprocess_idx(ds: &IdxDataset, pre: &Preprocess) -> Result<LabeledImageSet> {
    let raw = &ds.images;
    let images = (0..raw.len())
        .into_par_iter()
        .map(|i| pre.apply(&Image::from_bytes(raw.height, raw.width, raw.image(i))?))
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledImageSet {
        height: pre.height,
        width: pre.width,
        images,
        labels: Some(ds.labels.iter().map(|&l| l as usize).collect()),
    })
}

/// Keeps only `classes` and relabels them `0..C'` in the given order.
pub fn filter_classes(set: &LabeledImageSet, classes: &[usize]) -> Result<LabeledImageSet> {
    let labels = set
        .labels
        .as_ref()
        .ok_or_else(|| InnError::EmptyDataset("cannot filter an unlabeled set".into()))?;
    let mut counts = vec![0usize; classes.len()];
    let mut images = Vec::new();
    let mut relabeled = Vec::new();
    for (img, &l) in set.images.iter().zip(labels) {
        if let Some(k) = classes.iter().position(|&c| c == l) {
            counts[k] += 1;
            images.push(img.clone());
            relabeled.push(k);
        }
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(InnError::ClassAbsent(classes[k]));
    }
    Ok(LabeledImageSet {
        height: set.height,
        width: set.width,
        images,
        labels: Some(relabeled),
    })
}

/// Shuffled index batches for one epoch. The permutation depends only on
/// `(seed, epoch)`; the final short batch is kept.
pub fn batch_iter(len: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order: Vec<usize> = (0..len).collect();
    let mut r = rng::stream(seed, &format!("shuffle.{epoch}"));
    order.shuffle(&mut r);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// A decoded PGM or PPM raster with 8-bit samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    /// 1 for PGM, 3 for PPM.
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Pnm {
    /// Luminance `0.299 R + 0.587 G + 0.114 B` (gray images pass through).
    pub fn luminance(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.iter().map(|&v| v as f64).collect();
        }
        self.data
            .chunks_exact(3)
            .map(|c| 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64)
            .collect()
    }
}

fn bad_image(path: &str, reason: impl Into<String>) -> InnError {
    InnError::BadImage {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Parses binary P5/P6 with `maxval ≤ 255`. Samples are rescaled to
/// `0..=255` when `maxval < 255`.
pub fn parse_pnm(bytes: &[u8], name: &str) -> Result<Pnm> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(bad_image(name, "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let channels = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad_image(name, format!("unsupported format {other:?}"))),
    };
    let num = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| bad_image(name, format!("bad header field {s:?}")))
    };
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if width == 0 || height == 0 {
        return Err(bad_image(name, "zero dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(bad_image(name, format!("unsupported maxval {maxval}")));
    }
    let len = width * height * channels;
    let raster = bytes
        .get(pos..pos + len)
        .ok_or_else(|| bad_image(name, "truncated raster"))?;
    let data = if maxval == 255 {
        raster.to_vec()
    } else {
        raster
            .iter()
            .map(|&v| ((v.min(maxval as u8) as f64) * 255.0 / maxval as f64).round() as u8)
            .collect()
    };
    Ok(Pnm {
        width,
        height,
        channels,
        data,
    })
}

pub fn read_pnm(path: &Path) -> Result<Pnm> {
    parse_pnm(&fs::read(path)?, &path.display().to_string())
}

pub fn encode_pnm(img: &Pnm) -> Vec<u8> {
    let tag = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{tag}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn write_pgm(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    write_pnm(
        path,
        &Pnm {
            width,
            height,
            channels: 1,
            data: data.to_vec(),
        },
    )
}

pub fn write_pnm(path: &Path, img: &Pnm) -> Result<()> {
    if img.data.len() != img.width * img.height * img.channels {
        return Err(InnError::DimensionMismatch {
            expected: img.width * img.height * img.channels,
            found: img.data.len(),
        });
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pnm(img))?;
    Ok(())
}

/// Loads every readable PGM/PPM in `dir` (lexicographic by file name),
/// converts to luminance, resizes and scales to `[-1, 1]`. Unreadable files
/// are skipped with a warning.
pub fn load_image_dir(dir: &Path, height: usize, width: usize) -> Result<LabeledImageSet> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let pre = Preprocess::resize(height, width);
    let mut images = Vec::new();
    for p in &paths {
        let decoded = read_pnm(p).and_then(|img| {
            let gray = Image::new(img.height, img.width, img.luminance())?;
            pre.apply(&gray)
        });
        match decoded {
            Ok(v) => images.push(v),
            Err(e) => warn!("skipping {}: {e}", p.display()),
        }
    }
    if images.is_empty() {
        return Err(InnError::EmptyDataset(format!(
            "no readable PGM/PPM images in {}",
            dir.display()
        )));
    }
    Ok(LabeledImageSet {
        height,
        width,
        images,
        labels: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_idx() -> IdxDataset {
        IdxDataset {
            images: RawImages {
                height: 2,
                width: 3,
                pixels: (0..12).map(|v| v * 20).collect(),
            },
            labels: vec![7, 2],
        }
    }

    #[test]
    fn idx_header_and_roundtrip() {
        let ds = tiny_idx();
        let bytes = encode_idx_images(&ds.images);
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(&bytes[4..8], &[0, 0, 0, 2]);
        assert_eq!(parse_idx_images(&bytes).unwrap(), ds.images);
        assert_eq!(parse_idx_labels(&encode_idx_labels(&ds.labels)).unwrap(), ds.labels);
    }

    #[test]
    fn idx_errors() {
        let mut bytes = encode_idx_images(&tiny_idx().images);
        assert!(matches!(
            parse_idx_labels(&bytes),
            Err(InnError::BadMagic { found: 0x803, .. })
        ));
        bytes.pop();
        assert!(matches!(parse_idx_images(&bytes), Err(InnError::TruncatedFile { .. })));

        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&ip, encode_idx_images(&tiny_idx().images)).unwrap();
        fs::write(&lp, encode_idx_labels(&[1, 2, 3])).unwrap();
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(InnError::CountMismatch { images: 2, labels: 3 })
        ));
    }

    #[test]
    fn resize_examples() {
        let img = Image::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(resize_bilinear(&img, 2, 3).unwrap(), img);
        let flat = Image::new(4, 4, vec![0.3; 16]).unwrap();
        for (h, w) in [(1, 1), (3, 7), (9, 2)] {
            let r = resize_bilinear(&flat, h, w).unwrap();
            assert!(r.data.iter().all(|&v| (v - 0.3).abs() < 1e-15));
        }
        let checker = Image::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(resize_bilinear(&checker, 1, 1).unwrap().data, vec![0.5]);
        // corners are preserved on upsampling
        let up = resize_bilinear(&img, 5, 5).unwrap();
        assert_eq!(
            (up.at(0, 0), up.at(0, 4), up.at(4, 0), up.at(4, 4)),
            (1.0, 3.0, 4.0, 6.0)
        );
    }

    #[test]
    fn crop_takes_center() {
        let img = Image::new(4, 4, (0..16).map(f64::from).collect()).unwrap();
        assert_eq!(center_crop(&img, 2, 2).unwrap().data, vec![5.0, 6.0, 9.0, 10.0]);
        assert!(center_crop(&img, 5, 2).is_err());
    }

    #[test]
    fn scaling_endpoints() {
        assert_eq!(scale_pixel(0.0), -1.0);
        assert_eq!(scale_pixel(255.0), 1.0);
        assert_eq!(scale_pixel(127.5), 0.0);
    }

    #[test]
    fn filter_relabels_in_given_order() {
        let set = LabeledImageSet {
            height: 1,
            width: 1,
            images: (0..6).map(|i| vec![i as f64]).collect(),
            labels: Some(vec![3, 5, 1, 5, 3, 3]),
        };
        let a = filter_classes(&set, &[3, 5]).unwrap();
        assert_eq!(a.labels.as_deref(), Some(&[0, 1, 1, 0, 0][..]));
        let b = filter_classes(&set, &[5, 3]).unwrap();
        assert_eq!(b.labels.as_deref(), Some(&[1, 0, 0, 1, 1][..]));
        assert_eq!(b.images[0], vec![0.0]);
        assert!(matches!(filter_classes(&set, &[3, 9]), Err(InnError::ClassAbsent(9))));
    }

    #[test]
    fn batches_cover_the_set_once() {
        let b = batch_iter(10, 4, 1, 0);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(batch_iter(10, 4, 1, 0), b);
        assert_ne!(batch_iter(10, 4, 1, 1), b);
        assert_eq!(batch_iter(5, 99, 3, 2).len(), 1);
    }

    #[test]
    fn pnm_roundtrip_and_luminance() {
        let gray = Pnm {
            width: 3,
            height: 2,
            channels: 1,
            data: vec![0, 10, 20, 30, 40, 255],
        };
        assert_eq!(parse_pnm(&encode_pnm(&gray), "g").unwrap(), gray);
        assert_eq!(gray.luminance()[5], 255.0);
        let color = Pnm {
            width: 1,
            height: 1,
            channels: 3,
            data: vec![255, 255, 255],
        };
        let back = parse_pnm(&encode_pnm(&color), "c").unwrap();
        assert!((back.luminance()[0] - 255.0).abs() < 1e-9);
        let commented = b"P5\n# made by hand\n2 1\n255\n\x01\x02";
        assert_eq!(parse_pnm(commented, "h").unwrap().data, vec![1, 2]);
        assert!(parse_pnm(b"P2\n1 1\n255\n0", "x").is_err());
    }

    #[test]
    fn image_dir_order_and_skips() {
        let dir = tempfile::tempdir().unwrap();
        let white = Pnm {
            width: 2,
            height: 2,
            channels: 3,
            data: vec![255; 12],
        };
        write_pnm(&dir.path().join("b.ppm"), &white).unwrap();
        write_pgm(&dir.path().join("a.pgm"), 2, 2, &[0, 0, 0, 0]).unwrap();
        fs::write(dir.path().join("c.txt"), "not an image").unwrap();
        let set = load_image_dir(dir.path(), 2, 2).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.images[0].iter().all(|&v| v == -1.0));
        assert!(set.images[1].iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(set.labels.is_none());

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_image_dir(empty.path(), 2, 2),
            Err(InnError::EmptyDataset(_))
        ));
    }
}
