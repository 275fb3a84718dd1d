//! Synthetic two-domain lesion data: generation, weak/strong augmentation,
//! and the on-disk dataset layout (`images.bin` + `labels.csv` + `meta.txt`).
//!
//! Images are 64x64 single-channel. Lesions are Gaussian blobs; a lesion's
//! ground-truth box is its 2-sigma bounding square clipped to the image.
//! The target domain differs from the source in background level, noise,
//! lesion intensity/size, contrast, and blur.

use std::fs;
use std::io::{BufWriter, Write as IoWrite};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{rng::Rng, tensor::Tensor};
use crate::scalar::Scalar;

pub const IMAGE_SIZE: usize = 64;
const LAST: f64 = (IMAGE_SIZE - 1) as f64; // last pixel coordinate
const PIXELS: usize = IMAGE_SIZE * IMAGE_SIZE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }

    pub fn parse(s: &str) -> Result<Domain> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(Error::Dataset(format!("unknown domain '{other}'"))),
        }
    }

    /// Label used by the domain discriminators: source = 0, target = 1.
    pub fn adversarial_label(self) -> f64 {
        match self {
            Domain::Source => 0.0,
            Domain::Target => 1.0,
        }
    }
}

/// Ground-truth lesion box in pixel units (all lesions are one class).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxLabel {
    pub cx: f32,
    pub cy: f32,
    pub w: f32,
    pub h: f32,
}

/// Generation knobs for one domain.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub background_mean: f64,
    pub background_noise_sd: f64,
    /// Peak added intensity of a lesion blob, drawn uniformly from [lo, hi].
    pub lesion_intensity: [f64; 2],
    /// Blob sigma in pixels, drawn uniformly from [lo, hi].
    pub lesion_radius: [f64; 2],
    /// Probabilities of an image containing 0, 1, or 2 lesions.
    pub lesion_counts: [f64; 3],
    /// Mean-preserving contrast multiplier applied at generation time.
    pub global_contrast: f64,
    /// Blur applied at generation time; also the sigma used by strong augmentation.
    pub blur_sigma: f64,
}

impl DomainSpec {
    pub fn source_default() -> DomainSpec {
        DomainSpec {
            background_mean: 0.35,
            background_noise_sd: 0.05,
            lesion_intensity: [0.5, 0.8],
            lesion_radius: [3.0, 6.0],
            lesion_counts: [0.4, 0.5, 0.1],
            global_contrast: 1.0,
            blur_sigma: 0.0,
        }
    }

    pub fn target_default() -> DomainSpec {
        DomainSpec {
            background_mean: 0.55,
            background_noise_sd: 0.10,
            lesion_intensity: [0.35, 0.6],
            lesion_radius: [2.0, 5.0],
            lesion_counts: [0.4, 0.5, 0.1],
            global_contrast: 0.8,
            blur_sigma: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0] <= r[1] && r[0].is_finite() && r[1].is_finite();
        if !ordered(self.lesion_intensity) || !ordered(self.lesion_radius) {
            return Err(Error::InvalidArgument {
                ctx: "domain spec",
                msg: "range bounds must satisfy lo <= hi".into(),
            });
        }
        if self.lesion_radius[0] <= 0.0 {
            return Err(Error::InvalidArgument {
                ctx: "domain spec",
                msg: "lesion radius must be positive".into(),
            });
        }
        let psum: f64 = self.lesion_counts.iter().sum();
        if self.lesion_counts.iter().any(|&p| !(0.0..=1.0).contains(&p))
            || (psum - 1.0).abs() > 1e-6
        {
            return Err(Error::InvalidArgument {
                ctx: "domain spec",
                msg: format!("lesion count probabilities must sum to 1, got {psum}"),
            });
        }
        if self.background_noise_sd < 0.0 || self.blur_sigma < 0.0 || self.global_contrast <= 0.0 {
            return Err(Error::InvalidArgument {
                ctx: "domain spec",
                msg: "noise sd / blur sigma must be >= 0 and contrast > 0".into(),
            });
        }
        Ok(())
    }

    /// key=value pairs for `meta.txt`.
    pub fn meta_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("background_mean".into(), self.background_mean.to_string()),
            (
                "background_noise_sd".into(),
                self.background_noise_sd.to_string(),
            ),
            (
                "lesion_intensity".into(),
                format!("{},{}", self.lesion_intensity[0], self.lesion_intensity[1]),
            ),
            (
                "lesion_radius".into(),
                format!("{},{}", self.lesion_radius[0], self.lesion_radius[1]),
            ),
            (
                "lesion_counts".into(),
                format!(
                    "{},{},{}",
                    self.lesion_counts[0], self.lesion_counts[1], self.lesion_counts[2]
                ),
            ),
            ("global_contrast".into(), self.global_contrast.to_string()),
            ("blur_sigma".into(), self.blur_sigma.to_string()),
        ]
    }
}

/// One image with its labels.
#[derive(Clone, Debug)]
pub struct Sample {
    /// Shape [1, 64, 64], values in [0, 1].
    pub image: Tensor<f32>,
    pub domain: Domain,
    pub boxes: Vec<BoxLabel>,
}

/// What an augmentation actually did, so views of the same sample can be
/// geometrically reconciled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentationRecord {
    pub flipped: bool,
    pub contrast_factor: f64,
    pub noise_seed: u64,
    pub blur_applied: bool,
    pub downscale_applied: bool,
}

impl AugmentationRecord {
    fn identity() -> AugmentationRecord {
        AugmentationRecord {
            flipped: false,
            contrast_factor: 1.0,
            noise_seed: 0,
            blur_applied: false,
            downscale_applied: false,
        }
    }
}

fn sample_lesion_count(spec: &DomainSpec, rng: &mut Rng) -> usize {
    let u = rng.uniform();
    if u < spec.lesion_counts[0] {
        0
    } else if u < spec.lesion_counts[0] + spec.lesion_counts[1] {
        1
    } else {
        2
    }
}

/// Draws one sample. Pure function of (spec, rng state); draw order is fixed:
/// 4096 background normals, one count uniform, then per lesion
/// intensity/radius/cx/cy.
pub fn generate_sample(spec: &DomainSpec, domain: Domain, rng: &mut Rng) -> Sample {
    let mut img = Tensor::<f64>::zeros(vec![1, IMAGE_SIZE, IMAGE_SIZE]);
    for v in img.data_mut() {
        *v = (spec.background_mean + rng.normal() * spec.background_noise_sd).clamp(0.0, 1.0);
    }

    let count = sample_lesion_count(spec, rng);
    let mut boxes = Vec::with_capacity(count);
    for _ in 0..count {
        let peak = rng.uniform_in(spec.lesion_intensity[0], spec.lesion_intensity[1]);
        let sigma = rng.uniform_in(spec.lesion_radius[0], spec.lesion_radius[1]);
        let cx = rng.uniform_in(sigma, LAST - sigma);
        let cy = rng.uniform_in(sigma, LAST - sigma);
        let inv = 1.0 / (2.0 * sigma * sigma);
        let data = img.data_mut();
        for y in 0..IMAGE_SIZE {
            let dy = y as f64 - cy;
            for x in 0..IMAGE_SIZE {
                let dx = x as f64 - cx;
                data[y * IMAGE_SIZE + x] += peak * (-(dx * dx + dy * dy) * inv).exp();
            }
        }
        // 2-sigma bounding square, clipped to the image.
        let x_lo = (cx - 2.0 * sigma).max(0.0);
        let x_hi = (cx + 2.0 * sigma).min(LAST);
        let y_lo = (cy - 2.0 * sigma).max(0.0);
        let y_hi = (cy + 2.0 * sigma).min(LAST);
        boxes.push(BoxLabel {
            cx: ((x_lo + x_hi) / 2.0) as f32,
            cy: ((y_lo + y_hi) / 2.0) as f32,
            w: (x_hi - x_lo) as f32,
            h: (y_hi - y_lo) as f32,
        });
    }

    if spec.blur_sigma > 0.0 {
        img = gaussian_blur(&img, spec.blur_sigma);
    }
    if (spec.global_contrast - 1.0).abs() > 0.0 {
        img = contrast_scale(&img, spec.global_contrast);
    }
    for v in img.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }

    Sample {
        image: img.convert::<f32>(),
        domain,
        boxes,
    }
}

/// Generates `n` samples from a base seed; each sample uses a split-off child
/// stream so per-sample work could be farmed out without changing results.
pub fn generate_dataset(spec: &DomainSpec, domain: Domain, n: usize, seed: u64) -> Vec<Sample> {
    let mut base = Rng::from_seed(seed);
    (0..n)
        .map(|_| {
            let mut child = base.split();
            generate_sample(spec, domain, &mut child)
        })
        .collect()
}

/// Mirrors image columns and box centers (cx -> 63 - cx).
pub fn horizontal_flip(s: &Sample) -> Sample {
    let mut image = s.image.clone();
    {
        let d = image.data_mut();
        for y in 0..IMAGE_SIZE {
            d[y * IMAGE_SIZE..(y + 1) * IMAGE_SIZE].reverse();
        }
    }
    let boxes = s
        .boxes
        .iter()
        .map(|b| BoxLabel {
            cx: LAST as f32 - b.cx,
            ..*b
        })
        .collect();
    Sample {
        image,
        domain: s.domain,
        boxes,
    }
}

/// Weak view: horizontal flip with probability 1/2, nothing else.
pub fn weak_augment(s: &Sample, rng: &mut Rng) -> (Sample, AugmentationRecord) {
    let flipped = rng.uniform() < 0.5;
    let out = if flipped {
        horizontal_flip(s)
    } else {
        s.clone()
    };
    (
        out,
        AugmentationRecord {
            flipped,
            ..AugmentationRecord::identity()
        },
    )
}

/// Strong view of the same underlying sample: reuses the weak view's flip so
/// boxes stay aligned across views, then blur (sigma from the domain spec),
/// mean-preserving contrast jitter, and a 2x resolution drop.
pub fn strong_augment(
    s: &Sample,
    record: &AugmentationRecord,
    spec: &DomainSpec,
    rng: &mut Rng,
) -> Sample {
    let mut out = if record.flipped {
        horizontal_flip(s)
    } else {
        s.clone()
    };
    if spec.blur_sigma > 0.0 {
        out.image = gaussian_blur(&out.image, spec.blur_sigma);
    }
    let f = rng.uniform_in(0.7, 1.3);
    out.image = contrast_scale(&out.image, f);
    out.image = downscale_upscale(&out.image);
    out
}

/// Separable Gaussian blur with clamp-to-edge padding. `sigma <= 0` is the
/// identity.
pub fn gaussian_blur<S: Scalar>(img: &Tensor<S>, sigma: f64) -> Tensor<S> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    let mut norm = 0.0;
    for i in -radius..=radius {
        let v = (-(i * i) as f64 / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        norm += v;
    }
    let kernel: Vec<S> = kernel.iter().map(|&v| S::from_f64(v / norm)).collect();

    let src = img.data();
    let mut mid = vec![S::zero(); src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = S::zero();
            for (ki, &kv) in kernel.iter().enumerate() {
                let xi = (x as isize + ki as isize - radius).clamp(0, w as isize - 1) as usize;
                acc += kv * src[y * w + xi];
            }
            mid[y * w + x] = acc;
        }
    }
    let mut out = img.clone();
    let dst = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let mut acc = S::zero();
            for (ki, &kv) in kernel.iter().enumerate() {
                let yi = (y as isize + ki as isize - radius).clamp(0, h as isize - 1) as usize;
                acc += kv * mid[yi * w + x];
            }
            dst[y * w + x] = acc;
        }
    }
    out
}

/// x <- clamp(mean + f * (x - mean), 0, 1); constant images are fixed points.
pub fn contrast_scale<S: Scalar>(img: &Tensor<S>, f: f64) -> Tensor<S> {
    let n = S::from_f64(img.len() as f64);
    let mean = img.sum() / n;
    let f = S::from_f64(f);
    img.map(|v| {
        let scaled = mean + f * (v - mean);
        scaled.max(S::zero()).min(S::one())
    })
}

/// Nearest-neighbor downscale by 2 then upscale by 2 (top-left convention):
/// every 2x2 block becomes four copies of its top-left pixel.
pub fn downscale_upscale<S: Scalar>(img: &Tensor<S>) -> Tensor<S> {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let src = img.data();
    let mut out = img.clone();
    let dst = out.data_mut();
    for y in 0..h {
        let sy = (y / 2) * 2;
        for x in 0..w {
            dst[y * w + x] = src[sy * w + (x / 2) * 2];
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Dataset layout: images.bin (raw LE f32, N x 1 x 64 x 64), labels.csv
// (image_id,cx,cy,w,h), meta.txt (key=value).
// ---------------------------------------------------------------------------

pub fn write_dataset(dir: &Path, samples: &[Sample], meta: &[(String, String)]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Dataset("refusing to write empty dataset".into()));
    }
    let domain = samples[0].domain;
    if samples.iter().any(|s| s.domain != domain) {
        return Err(Error::Dataset("mixed domains in one dataset".into()));
    }
    fs::create_dir_all(dir)?;

    let mut bin = BufWriter::new(fs::File::create(dir.join("images.bin"))?);
    for s in samples {
        s.image.check_shape(&[1, IMAGE_SIZE, IMAGE_SIZE], "dataset image")?;
        for &v in s.image.data() {
            bin.write_all(&v.to_le_bytes())?;
        }
    }
    bin.flush()?;

    let mut labels = String::from("image_id,cx,cy,w,h\n");
    for (i, s) in samples.iter().enumerate() {
        for b in &s.boxes {
            labels.push_str(&format!("{i},{},{},{},{}\n", b.cx, b.cy, b.w, b.h));
        }
    }
    fs::write(dir.join("labels.csv"), labels)?;

    let mut text = format!("n={}\ndomain={}\n", samples.len(), domain.as_str());
    for (k, v) in meta {
        text.push_str(&format!("{k}={v}\n"));
    }
    fs::write(dir.join("meta.txt"), text)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Vec<Sample>> {
    let meta_path = dir.join("meta.txt");
    let meta_text = fs::read_to_string(&meta_path)?;
    let mut domain = None;
    for line in meta_text.lines() {
        if let Some(v) = line.strip_prefix("domain=") {
            domain = Some(Domain::parse(v.trim())?);
        }
    }
    let domain = domain.ok_or_else(|| Error::Dataset("meta.txt missing domain=".into()))?;

    let bytes = fs::read(dir.join("images.bin"))?;
    if bytes.is_empty() || bytes.len() % (PIXELS * 4) != 0 {
        return Err(Error::Dataset(format!(
            "images.bin length {} is not a multiple of {}",
            bytes.len(),
            PIXELS * 4
        )));
    }
    let n = bytes.len() / (PIXELS * 4);
    let mut samples: Vec<Sample> = (0..n)
        .map(|i| {
            let mut data = Vec::with_capacity(PIXELS);
            for p in 0..PIXELS {
                let o = (i * PIXELS + p) * 4;
                data.push(f32::from_le_bytes([
                    bytes[o],
                    bytes[o + 1],
                    bytes[o + 2],
                    bytes[o + 3],
                ]));
            }
            Ok(Sample {
                image: Tensor::new(vec![1, IMAGE_SIZE, IMAGE_SIZE], data)?,
                domain,
                boxes: Vec::new(),
            })
        })
        .collect::<Result<_>>()?;

    let labels_path = dir.join("labels.csv");
    let text = fs::read_to_string(&labels_path)?;
    let path_str = labels_path.display().to_string();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != "image_id,cx,cy,w,h" {
                return Err(Error::Parse {
                    path: path_str,
                    line: 1,
                    msg: "bad header".into(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: &str| Error::Parse {
            path: path_str.clone(),
            line: lineno + 1,
            msg: msg.into(),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err("expected 5 fields"));
        }
        let id: usize = fields[0].parse().map_err(|_| parse_err("bad image_id"))?;
        if id >= n {
            return Err(parse_err("image_id out of range"));
        }
        let mut vals = [0f32; 4];
        for (slot, field) in vals.iter_mut().zip(&fields[1..]) {
            *slot = field.parse().map_err(|_| parse_err("bad number"))?;
        }
        samples[id].boxes.push(BoxLabel {
            cx: vals[0],
            cy: vals[1],
            w: vals[2],
            h: vals[3],
        });
    }
    Ok(samples)
}
