//! Loading recordings: frame manifests, image decoding, luminance planes.
//!
//! A recording on disk is a `manifest.json` next to its frames:
//!
//! ```json
//! {
//!   "source_id": "demo",
//!   "fps": 10.0,
//!   "width": 144,
//!   "height": 256,
//!   "frames": ["frames/000000.pgm", "frames/000001.pgm"]
//! }
//! ```
//!
//! Frame paths are relative to the manifest's directory and may be PNG or
//! binary PGM (P5). All downstream stages work on 8-bit luminance planes;
//! colour frames are converted with BT.601 weights and grayscale frames are
//! taken as already-luma.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while loading or validating recordings.
#[derive(Debug, Error)]
pub enum IngestError {
    /// A referenced file does not exist.
    #[error("missing file: {path}")]
    MissingFile { path: PathBuf },

    /// Reading or writing a file failed.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The manifest document is syntactically or semantically invalid.
    #[error("malformed manifest: {reason}")]
    MalformedManifest { reason: String },

    /// An image file could not be decoded.
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    /// Declared and actual dimensions disagree.
    #[error("dimension mismatch for {what}: declared {expected:?}, got {got:?}")]
    DimensionMismatch {
        what: String,
        expected: (u32, u32),
        got: (u32, u32),
    },

    /// A frame with zero pixels.
    #[error("empty frame: zero width or height")]
    EmptyFrame,
}

/// A validated recording manifest: identity, frame rate, dimensions, and the
/// resolved (absolute) frame paths in playback order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameManifest {
    pub source_id: String,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub frame_paths: Vec<PathBuf>,
}

impl FrameManifest {
    /// Number of frames in the recording.
    pub fn frame_count(&self) -> usize {
        self.frame_paths.len()
    }

    /// Check the field-level invariants (positive fps and dimensions,
    /// at least one frame). File-level checks live in [`load_manifest`].
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(IngestError::MalformedManifest {
                reason: format!("fps must be positive and finite, got {}", self.fps),
            });
        }
        if self.width == 0 || self.height == 0 {
            return Err(IngestError::MalformedManifest {
                reason: format!("dimensions must be positive, got {}x{}", self.width, self.height),
            });
        }
        if self.frame_paths.is_empty() {
            return Err(IngestError::MalformedManifest {
                reason: "frame list is empty".into(),
            });
        }
        Ok(())
    }
}

/// Wire form of `manifest.json`.
#[derive(Debug, Serialize, Deserialize)]
struct ManifestDoc {
    source_id: String,
    fps: f64,
    width: u32,
    height: u32,
    frames: Vec<String>,
}

/// An 8-bit luminance plane: `samples` holds `width * height` bytes in
/// row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LumaPlane {
    width: u32,
    height: u32,
    samples: Vec<u8>,
}

impl LumaPlane {
    /// Build a plane, checking that the sample count matches the dimensions
    /// and that the frame is non-empty.
    pub fn new(width: u32, height: u32, samples: Vec<u8>) -> Result<Self, IngestError> {
        if width == 0 || height == 0 {
            return Err(IngestError::EmptyFrame);
        }
        let expected = width as usize * height as usize;
        if samples.len() != expected {
            return Err(IngestError::DimensionMismatch {
                what: "luma plane sample count".into(),
                expected: (width, height),
                got: (samples.len() as u32, 1),
            });
        }
        Ok(LumaPlane { width, height, samples })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major samples, `width * height` of them.
    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    /// Number of pixels.
    pub fn pixel_count(&self) -> usize {
        self.samples.len()
    }
}

/// Convert an RGB image to luminance with BT.601 weights:
/// `Y = round(0.299 R + 0.587 G + 0.114 B)`.
///
/// Gray inputs pass through exactly: for a pixel `(g, g, g)` the output is
/// `g` for every `g` in `0..=255`.
pub fn to_luma(img: &image::RgbImage) -> Result<LumaPlane, IngestError> {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return Err(IngestError::EmptyFrame);
    }
    let mut samples = Vec::with_capacity(w as usize * h as usize);
    for px in img.pixels() {
        let [r, g, b] = px.0;
        let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
        samples.push(y.round().min(255.0) as u8);
    }
    LumaPlane::new(w, h, samples)
}

/// Convert any decoded image to a luminance plane. Grayscale inputs are
/// copied sample-for-sample; everything else goes through RGB and
/// [`to_luma`] (alpha, if present, is ignored).
pub fn luma_of_image(img: &image::DynamicImage) -> Result<LumaPlane, IngestError> {
    match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            LumaPlane::new(w, h, g.as_raw().clone())
        }
        other => to_luma(&other.to_rgb8()),
    }
}

/// A recording in memory: the manifest plus one luminance plane per frame.
///
/// Planes are reference-counted so later stages (screen records, clustering)
/// can hold on to individual frames cheaply.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub manifest: FrameManifest,
    planes: Vec<Arc<LumaPlane>>,
}

impl FrameSequence {
    /// Assemble a sequence from already-decoded planes, checking that the
    /// count and dimensions match the manifest.
    pub fn from_planes(
        manifest: FrameManifest,
        planes: Vec<Arc<LumaPlane>>,
    ) -> Result<Self, IngestError> {
        manifest.validate()?;
        if planes.len() != manifest.frame_count() {
            return Err(IngestError::MalformedManifest {
                reason: format!(
                    "manifest lists {} frames but {} planes were supplied",
                    manifest.frame_count(),
                    planes.len()
                ),
            });
        }
        for (i, p) in planes.iter().enumerate() {
            if (p.width(), p.height()) != (manifest.width, manifest.height) {
                return Err(IngestError::DimensionMismatch {
                    what: format!("frame {i}"),
                    expected: (manifest.width, manifest.height),
                    got: (p.width(), p.height()),
                });
            }
        }
        Ok(FrameSequence { manifest, planes })
    }

    /// Load a recording from a manifest path, decoding every frame.
    pub fn load(manifest_path: &Path) -> Result<Self, IngestError> {
        let manifest = read_manifest_doc(manifest_path)?;
        let mut planes = Vec::with_capacity(manifest.frame_count());
        for (i, p) in manifest.frame_paths.iter().enumerate() {
            let img = decode_frame(p)?;
            check_frame_dims(&manifest, i, &img)?;
            planes.push(Arc::new(luma_of_image(&img)?));
        }
        Ok(FrameSequence { manifest, planes })
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    /// The plane for frame `index`, panicking on out-of-range (callers
    /// bounds-check against the manifest).
    pub fn plane(&self, index: usize) -> &Arc<LumaPlane> {
        &self.planes[index]
    }

    pub fn planes(&self) -> &[Arc<LumaPlane>] {
        &self.planes
    }
}

/// Parse and validate a manifest, including decoding every referenced frame
/// to confirm it matches the declared dimensions. Returns the manifest with
/// frame paths resolved relative to the manifest's directory.
///
/// This is the full validation pass; use [`FrameSequence::load`] when you
/// also want the decoded planes (it decodes each frame once).
pub fn load_manifest(path: &Path) -> Result<FrameManifest, IngestError> {
    let manifest = read_manifest_doc(path)?;
    for (i, p) in manifest.frame_paths.iter().enumerate() {
        let img = decode_frame(p)?;
        check_frame_dims(&manifest, i, &img)?;
    }
    Ok(manifest)
}

/// Parse the manifest document and resolve frame paths, checking field-level
/// invariants and that every referenced file exists (but not decoding).
pub fn read_manifest_doc(path: &Path) -> Result<FrameManifest, IngestError> {
    if !path.is_file() {
        return Err(IngestError::MissingFile { path: path.to_path_buf() });
    }
    let raw = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc: ManifestDoc = serde_json::from_str(&raw).map_err(|e| IngestError::MalformedManifest {
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let manifest = FrameManifest {
        source_id: doc.source_id,
        fps: doc.fps,
        width: doc.width,
        height: doc.height,
        frame_paths: doc.frames.iter().map(|f| base.join(f)).collect(),
    };
    manifest.validate()?;
    for p in &manifest.frame_paths {
        if !p.is_file() {
            return Err(IngestError::MissingFile { path: p.clone() });
        }
    }
    Ok(manifest)
}

fn decode_frame(path: &Path) -> Result<image::DynamicImage, IngestError> {
    image::open(path).map_err(|e| IngestError::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn check_frame_dims(
    manifest: &FrameManifest,
    index: usize,
    img: &image::DynamicImage,
) -> Result<(), IngestError> {
    let got = (img.width(), img.height());
    let expected = (manifest.width, manifest.height);
    if got != expected {
        return Err(IngestError::DimensionMismatch {
            what: format!("frame {index}"),
            expected,
            got,
        });
    }
    Ok(())
}

/// Serialize a manifest back to its wire form, with frame paths written
/// relative to `base` (the directory the manifest will live in).
pub fn manifest_to_json(manifest: &FrameManifest, base: &Path) -> Result<String, IngestError> {
    let frames = manifest
        .frame_paths
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(base).unwrap_or(p);
            // Manifest paths use forward slashes regardless of platform.
            rel.to_string_lossy().replace('\\', "/")
        })
        .collect();
    let doc = ManifestDoc {
        source_id: manifest.source_id.clone(),
        fps: manifest.fps,
        width: manifest.width,
        height: manifest.height,
        frames,
    };
    let mut out = serde_json::to_string_pretty(&doc).map_err(|e| IngestError::MalformedManifest {
        reason: e.to_string(),
    })?;
    out.push('\n');
    Ok(out)
}

/// Write a luminance plane as a binary PGM (P5, maxval 255).
///
/// The byte layout is fully determined by the plane, so re-rendering a
/// recording reproduces identical files.
pub fn write_pgm(path: &Path, plane: &LumaPlane) -> Result<(), IngestError> {
    let mut buf = Vec::with_capacity(plane.pixel_count() + 32);
    write!(buf, "P5\n{} {}\n255\n", plane.width(), plane.height()).expect("write to vec");
    buf.extend_from_slice(plane.samples());
    fs::write(path, buf).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_plane(w: u32, h: u32, v: u8) -> LumaPlane {
        LumaPlane::new(w, h, vec![v; (w * h) as usize]).unwrap()
    }

    #[test]
    fn luma_weights_match_bt601() {
        let mut img = image::RgbImage::new(1, 1);
        img.put_pixel(0, 0, image::Rgb([255, 0, 0]));
        assert_eq!(to_luma(&img).unwrap().samples(), &[76]); // round(0.299 * 255)

        img.put_pixel(0, 0, image::Rgb([0, 255, 0]));
        assert_eq!(to_luma(&img).unwrap().samples(), &[150]); // round(0.587 * 255)

        img.put_pixel(0, 0, image::Rgb([0, 0, 255]));
        assert_eq!(to_luma(&img).unwrap().samples(), &[29]); // round(0.114 * 255)

        img.put_pixel(0, 0, image::Rgb([255, 255, 255]));
        assert_eq!(to_luma(&img).unwrap().samples(), &[255]);

        img.put_pixel(0, 0, image::Rgb([0, 0, 0]));
        assert_eq!(to_luma(&img).unwrap().samples(), &[0]);
    }

    #[test]
    fn luma_is_exact_on_gray_inputs() {
        let mut img = image::RgbImage::new(16, 16);
        for g in 0..=255u8 {
            let (x, y) = (u32::from(g) % 16, u32::from(g) / 16);
            img.put_pixel(x, y, image::Rgb([g, g, g]));
        }
        let plane = to_luma(&img).unwrap();
        for g in 0..=255u8 {
            assert_eq!(plane.samples()[g as usize], g, "gray {g} must pass through");
        }
    }

    #[test]
    fn empty_frame_is_rejected() {
        let img = image::RgbImage::new(0, 4);
        assert!(matches!(to_luma(&img), Err(IngestError::EmptyFrame)));
        assert!(matches!(LumaPlane::new(0, 0, vec![]), Err(IngestError::EmptyFrame)));
    }

    #[test]
    fn plane_sample_count_is_checked() {
        assert!(matches!(
            LumaPlane::new(2, 2, vec![0; 3]),
            Err(IngestError::DimensionMismatch { .. })
        ));
    }

    fn write_manifest(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("manifest.json");
        fs::write(&path, body).unwrap();
        path
    }

    fn write_frames(dir: &Path, dims: &[(u32, u32)]) -> Vec<String> {
        let frames_dir = dir.join("frames");
        fs::create_dir_all(&frames_dir).unwrap();
        let mut names = Vec::new();
        for (i, &(w, h)) in dims.iter().enumerate() {
            let plane = flat_plane(w, h, (i * 40) as u8);
            let name = format!("frames/{i:06}.pgm");
            write_pgm(&dir.join(&name), &plane).unwrap();
            names.push(name);
        }
        names
    }

    fn manifest_body(fps: f64, w: u32, h: u32, frames: &[String]) -> String {
        serde_json::json!({
            "source_id": "t",
            "fps": fps,
            "width": w,
            "height": h,
            "frames": frames,
        })
        .to_string()
    }

    #[test]
    fn load_manifest_happy_path() {
        let dir = tempfile::tempdir().unwrap();
        let frames = write_frames(dir.path(), &[(4, 4), (4, 4), (4, 4)]);
        let path = write_manifest(dir.path(), &manifest_body(2.0, 4, 4, &frames));
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.fps, 2.0);
        assert_eq!(m.frame_count(), 3);
        assert!(m.frame_paths[0].is_absolute() || m.frame_paths[0].starts_with(dir.path()));
    }

    #[test]
    fn zero_fps_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let frames = write_frames(dir.path(), &[(4, 4)]);
        let path = write_manifest(dir.path(), &manifest_body(0.0, 4, 4, &frames));
        assert!(matches!(
            load_manifest(&path),
            Err(IngestError::MalformedManifest { .. })
        ));
    }

    #[test]
    fn missing_field_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), r#"{"source_id": "t", "fps": 2.0}"#);
        assert!(matches!(
            load_manifest(&path),
            Err(IngestError::MalformedManifest { .. })
        ));
    }

    #[test]
    fn missing_frame_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut frames = write_frames(dir.path(), &[(4, 4)]);
        frames.push("frames/nope.pgm".into());
        let path = write_manifest(dir.path(), &manifest_body(2.0, 4, 4, &frames));
        assert!(matches!(load_manifest(&path), Err(IngestError::MissingFile { .. })));
    }

    #[test]
    fn declared_vs_decoded_dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let frames = write_frames(dir.path(), &[(4, 4), (4, 5)]);
        let path = write_manifest(dir.path(), &manifest_body(2.0, 4, 4, &frames));
        match load_manifest(&path) {
            Err(IngestError::DimensionMismatch { what, expected, got }) => {
                assert_eq!(what, "frame 1");
                assert_eq!(expected, (4, 4));
                assert_eq!(got, (4, 5));
            }
            other => panic!("expected DimensionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn png_frames_decode_too() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = image::RgbImage::new(4, 4);
        for p in img.pixels_mut() {
            *p = image::Rgb([255, 0, 0]);
        }
        fs::create_dir_all(dir.path().join("frames")).unwrap();
        img.save(dir.path().join("frames/red.png")).unwrap();
        let path = write_manifest(
            dir.path(),
            &manifest_body(1.0, 4, 4, &["frames/red.png".to_string()]),
        );
        let seq = FrameSequence::load(&path).unwrap();
        assert_eq!(seq.len(), 1);
        assert!(seq.plane(0).samples().iter().all(|&s| s == 76));
    }

    #[test]
    fn pgm_round_trips_through_image_decoder() {
        let dir = tempfile::tempdir().unwrap();
        let plane = LumaPlane::new(3, 2, vec![0, 60, 120, 180, 240, 255]).unwrap();
        let path = dir.path().join("f.pgm");
        write_pgm(&path, &plane).unwrap();
        let back = luma_of_image(&decode_frame(&path).unwrap()).unwrap();
        assert_eq!(back, plane);
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let frames = write_frames(dir.path(), &[(4, 4), (4, 4)]);
        let path = write_manifest(dir.path(), &manifest_body(2.5, 4, 4, &frames));
        let m = load_manifest(&path).unwrap();
        let json = manifest_to_json(&m, dir.path()).unwrap();
        let path2 = write_manifest(dir.path(), &json);
        let m2 = load_manifest(&path2).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn from_planes_checks_count_and_dims() {
        let manifest = FrameManifest {
            source_id: "t".into(),
            fps: 1.0,
            width: 2,
            height: 2,
            frame_paths: vec![PathBuf::from("a.pgm"), PathBuf::from("b.pgm")],
        };
        let ok = FrameSequence::from_planes(
            manifest.clone(),
            vec![Arc::new(flat_plane(2, 2, 0)), Arc::new(flat_plane(2, 2, 9))],
        );
        assert!(ok.is_ok());

        let short = FrameSequence::from_planes(manifest.clone(), vec![Arc::new(flat_plane(2, 2, 0))]);
        assert!(matches!(short, Err(IngestError::MalformedManifest { .. })));

        let wrong = FrameSequence::from_planes(
            manifest,
            vec![Arc::new(flat_plane(2, 2, 0)), Arc::new(flat_plane(2, 3, 0))],
        );
        assert!(matches!(wrong, Err(IngestError::DimensionMismatch { .. })));
    }
}
