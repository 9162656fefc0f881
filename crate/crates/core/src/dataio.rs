//! MNIST/Fashion-MNIST IDX ingestion, binarization, noise injection, and
//! PGM/CSV emission.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Grayscale image with row-major pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Numeric(format!("pixel {p} outside [0,1]")));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![0.0; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Bit grid (values exactly 0 or 1), row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<u8>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "{}x{} image needs {} bits, got {}",
                width,
                height,
                width * height,
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Format("binary image entries must be 0 or 1".into()));
        }
        Ok(Self { width, height, bits })
    }

    /// View the bits as `0.0`/`1.0` grayscale, e.g. to feed a decoder.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.bits.iter().map(|&b| f64::from(b)).collect(),
        }
    }
}

/// Images paired with class labels in `0..=9`.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Vec<GrayImage>,
    pub labels: Vec<u8>,
    pub name: String,
}

impl LabeledDataset {
    pub fn new(images: Vec<GrayImage>, labels: Vec<u8>, name: impl Into<String>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} images vs {} labels",
                images.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 9) {
            return Err(Error::Format("labels must be in 0..=9".into()));
        }
        Ok(Self { images, labels, name: name.into() })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// First `n` items (the whole set when `n` exceeds it).
    pub fn take(&self, n: usize) -> LabeledDataset {
        let n = n.min(self.len());
        LabeledDataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            name: self.name.clone(),
        }
    }

    /// Items whose label equals `class`.
    pub fn filter_class(&self, class: u8) -> LabeledDataset {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (img, &l) in self.images.iter().zip(&self.labels) {
            if l == class {
                images.push(img.clone());
                labels.push(l);
            }
        }
        LabeledDataset { images, labels, name: format!("{}-class{}", self.name, class) }
    }
}

fn read_u32_be(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_be_bytes(buf))
}

/// Parse an IDX image file (magic `0x00000803`), scaling bytes to `[0, 1]`
/// by division by 255.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<GrayImage>> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let magic = read_u32_be(&mut r)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "bad IDX image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(&mut r)? as usize;
    let height = read_u32_be(&mut r)? as usize;
    let width = read_u32_be(&mut r)? as usize;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected = count
        .checked_mul(height * width)
        .ok_or_else(|| Error::Format("IDX dims overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "IDX payload length {} does not match header {}x{}x{} = {}",
            payload.len(),
            count,
            height,
            width,
            expected
        )));
    }
    Ok(payload
        .chunks_exact(height * width)
        .map(|chunk| GrayImage {
            width,
            height,
            pixels: chunk.iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
        .collect())
}

/// Parse an IDX label file (magic `0x00000801`); every label must be `0..=9`.
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let magic = read_u32_be(&mut r)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::Format(format!(
            "bad IDX label magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(&mut r)? as usize;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != count {
        return Err(Error::Format(format!(
            "IDX payload length {} does not match header count {}",
            payload.len(),
            count
        )));
    }
    if let Some(&bad) = payload.iter().find(|&&b| b > 9) {
        return Err(Error::Format(format!("label byte {bad} out of range 0..=9")));
    }
    Ok(payload)
}

/// Write images back out in IDX form (quantizing to bytes via `round(p*255)`).
pub fn write_idx_images(images: &[GrayImage], path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = images.first().map_or((0, 0), |i| (i.width, i.height));
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    out.write_all(&IDX_IMAGE_MAGIC.to_be_bytes())?;
    out.write_all(&(images.len() as u32).to_be_bytes())?;
    out.write_all(&(h as u32).to_be_bytes())?;
    out.write_all(&(w as u32).to_be_bytes())?;
    for img in images {
        let bytes: Vec<u8> = img.pixels.iter().map(|&p| quantize(p)).collect();
        out.write_all(&bytes)?;
    }
    Ok(())
}

pub fn write_idx_labels(labels: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    out.write_all(&IDX_LABEL_MAGIC.to_be_bytes())?;
    out.write_all(&(labels.len() as u32).to_be_bytes())?;
    out.write_all(labels)?;
    Ok(())
}

/// Load an IDX image/label pair into a dataset.
pub fn load_dataset(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    name: impl Into<String>,
) -> Result<LabeledDataset> {
    let images = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    LabeledDataset::new(images, labels, name)
}

/// Threshold to bits: `1` iff pixel is strictly greater than `threshold`.
pub fn binarize(img: &GrayImage, threshold: f64) -> BinaryImage {
    BinaryImage {
        width: img.width,
        height: img.height,
        bits: img.pixels.iter().map(|&p| u8::from(p > threshold)).collect(),
    }
}

/// Add seeded Gaussian noise, clamping the result back into `[0, 1]`.
pub fn add_gaussian_noise(img: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    if sigma == 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma >= 0");
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: img
            .pixels
            .iter()
            .map(|&p| (p + normal.sample(&mut rng)).clamp(0.0, 1.0))
            .collect(),
    }
}

fn quantize(p: f64) -> u8 {
    (p * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Write a binary PGM (P5, maxval 255); pixels quantize via `round(p*255)`.
pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    write!(out, "P5\n{} {}\n255\n", img.width, img.height)?;
    let bytes: Vec<u8> = img.pixels.iter().map(|&p| quantize(p)).collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Read back a P5 PGM written by [`write_pgm`].
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path.as_ref())?).read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut next_token = || -> Result<String> {
        // skip whitespace and '#' comment lines
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if next_token()? != "P5" {
        return Err(Error::Format("not a P5 PGM".into()));
    }
    let width: usize = next_token()?.parse().map_err(|_| Error::Format("bad PGM width".into()))?;
    let height: usize =
        next_token()?.parse().map_err(|_| Error::Format("bad PGM height".into()))?;
    let maxval: u32 = next_token()?.parse().map_err(|_| Error::Format("bad PGM maxval".into()))?;
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    pos += 1; // single whitespace byte after maxval
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::Format("truncated PGM payload".into()));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: bytes[pos..pos + need].iter().map(|&b| f64::from(b) / 255.0).collect(),
    })
}

/// One row of the experiment-results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub exp_id: u8,
    pub variant: String,
    pub sampler: String,
    pub code_size: usize,
    pub accuracy: f64,
    pub seed: u64,
    pub epochs: usize,
}

pub const RESULTS_CSV_HEADER: &str = "exp_id,variant,sampler,code_size,accuracy,seed,epochs";

/// Serialize records to CSV. Fields never contain commas, so no quoting.
pub fn results_csv_string(records: &[ResultRecord]) -> String {
    let mut s = String::from(RESULTS_CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.exp_id, r.variant, r.sampler, r.code_size, r.accuracy, r.seed, r.epochs
        ));
    }
    s
}

/// Write the results CSV (UTF-8, LF line endings, header always present).
pub fn write_results_csv(records: &[ResultRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    out.write_all(results_csv_string(records).as_bytes())?;
    Ok(())
}

/// Parse a file produced by [`write_results_csv`].
pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let mut text = String::new();
    BufReader::new(File::open(path.as_ref())?).read_to_string(&mut text)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RESULTS_CSV_HEADER => {}
        other => return Err(Error::Format(format!("bad results CSV header: {other:?}"))),
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Format(format!("line {}: expected 7 fields", lineno + 2)));
        }
        let parse_err = |what: &str| Error::Format(format!("line {}: bad {what}", lineno + 2));
        records.push(ResultRecord {
            exp_id: fields[0].parse().map_err(|_| parse_err("exp_id"))?,
            variant: fields[1].to_string(),
            sampler: fields[2].to_string(),
            code_size: fields[3].parse().map_err(|_| parse_err("code_size"))?,
            accuracy: fields[4].parse().map_err(|_| parse_err("accuracy"))?,
            seed: fields[5].parse().map_err(|_| parse_err("seed"))?,
            epochs: fields[6].parse().map_err(|_| parse_err("epochs"))?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn mid_gray(n: usize) -> GrayImage {
        GrayImage { width: n, height: 1, pixels: vec![0.5; n] }
    }

    #[test]
    fn idx_round_trip_small() {
        let dir = tempdir().unwrap();
        let images = vec![
            GrayImage::new(2, 2, vec![0.0, 1.0, 100.0 / 255.0, 37.0 / 255.0]).unwrap(),
            GrayImage::zeros(2, 2),
            GrayImage::new(2, 2, vec![1.0; 4]).unwrap(),
        ];
        let labels = vec![3u8, 0, 9];
        let ip = dir.path().join("imgs");
        let lp = dir.path().join("lbls");
        write_idx_images(&images, &ip).unwrap();
        write_idx_labels(&labels, &lp).unwrap();
        let ds = load_dataset(&ip, &lp, "synthetic").unwrap();
        assert_eq!(ds.images, images);
        assert_eq!(ds.labels, labels);
    }

    #[test]
    fn label_magic_rejected_as_image_file() {
        let dir = tempdir().unwrap();
        let lp = dir.path().join("lbls");
        write_idx_labels(&[1, 2, 3], &lp).unwrap();
        match load_idx_images(&lp) {
            Err(Error::Format(msg)) => assert!(msg.contains("magic"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_image_payload_is_length_error() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("trunc");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[0u8; 5]); // needs 8
        std::fs::write(&p, bytes).unwrap();
        match load_idx_images(&p) {
            Err(Error::Format(msg)) => assert!(msg.contains("length"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_label_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.push(11);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(load_idx_labels(&p), Err(Error::Format(_))));
    }

    #[test]
    fn empty_label_file_is_ok() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("empty");
        write_idx_labels(&[], &p).unwrap();
        assert!(load_idx_labels(&p).unwrap().is_empty());
    }

    #[test]
    fn binarize_thresholds_strictly() {
        let img = GrayImage::new(3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        let bits = binarize(&img, 0.5);
        // pixel exactly at the threshold maps to 0
        assert_eq!(bits.bits, vec![0, 0, 1]);
        assert_eq!(binarize(&GrayImage::zeros(4, 4), 0.5).bits, vec![0; 16]);
        let ones = GrayImage::new(2, 2, vec![1.0; 4]).unwrap();
        assert_eq!(binarize(&ones, 0.5).bits, vec![1; 4]);
    }

    #[test]
    fn binarize_idempotent_on_binary_content() {
        let img = GrayImage::new(4, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let once = binarize(&img, 0.5);
        let twice = binarize(&once.to_gray(), 0.5);
        assert_eq!(once, twice);
    }

    #[test]
    fn noise_zero_sigma_is_identity() {
        let img = mid_gray(64);
        assert_eq!(add_gaussian_noise(&img, 0.0, 42), img);
    }

    #[test]
    fn noise_is_deterministic_under_seed() {
        let img = mid_gray(256);
        let a = add_gaussian_noise(&img, 0.3, 7);
        let b = add_gaussian_noise(&img, 0.3, 7);
        assert_eq!(a, b);
        let c = add_gaussian_noise(&img, 0.3, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_std_matches_clipped_normal() {
        // std of clamp(0.5 + N(0, 0.3^2), 0, 1), computed by quadrature:
        // sqrt(0.0754497710894761) = 0.2746812172127466
        const EXPECTED_STD: f64 = 0.274_681_217_212_746_6;
        let img = mid_gray(1_000_000);
        let noisy = add_gaussian_noise(&img, 0.3, 12345);
        let mean = noisy.pixels.iter().sum::<f64>() / noisy.pixels.len() as f64;
        let var = noisy.pixels.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>()
            / noisy.pixels.len() as f64;
        let std = var.sqrt();
        assert!(
            (std - EXPECTED_STD).abs() / EXPECTED_STD < 0.05,
            "std {std} vs expected {EXPECTED_STD}"
        );
    }

    #[test]
    fn pgm_all_zero_layout() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("z.pgm");
        write_pgm(&GrayImage::zeros(28, 28), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"P5\n28 28\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 784);
        assert!(bytes[header.len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn pgm_round_trip_quantization_bound() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("rt.pgm");
        let pixels: Vec<f64> = (0..784).map(|i| (i as f64 / 783.0).clamp(0.0, 1.0)).collect();
        let img = GrayImage::new(28, 28, pixels).unwrap();
        write_pgm(&img, &p).unwrap();
        let back = read_pgm(&p).unwrap();
        let max_err = img
            .pixels
            .iter()
            .zip(&back.pixels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 1.0 / 255.0 + 1e-12, "max err {max_err}");
        // full-scale value maps to byte 255 exactly
        assert_eq!(quantize(1.0), 255);
    }

    #[test]
    fn results_csv_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_results_csv(&[], &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            format!("{RESULTS_CSV_HEADER}\n")
        );
        let records = vec![ResultRecord {
            exp_id: 1,
            variant: "baseline".into(),
            sampler: "none".into(),
            code_size: 0,
            accuracy: 0.99,
            seed: 7,
            epochs: 5,
        }];
        write_results_csv(&records, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("1,baseline,none,0,0.99,7,5"));
        assert_eq!(read_results_csv(&p).unwrap(), records);
    }
}
