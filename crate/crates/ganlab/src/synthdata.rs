//! Synthetic 2D datasets, the standard-normal latent sampler, and IDX image
//! ingestion.
//!
//! All samplers are pure functions of `(n, rng state)` and draw in a fixed
//! per-point order, so a seeded RNG reproduces a dataset bit for bit.

use crate::diffgraph::Tensor;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::io::Read;
use std::path::Path;

/// Per-mode noise scale of the 8-Gaussians mixture.
pub const EIGHT_GAUSSIANS_STD: f64 = 0.02;
/// Ring radius of the 8-Gaussians mixture.
pub const EIGHT_GAUSSIANS_RADIUS: f64 = 2.0;
/// Coordinate noise added to the swissroll curve.
pub const SWISSROLL_NOISE_STD: f64 = 0.02;
/// Parameter range of the swissroll: t ~ U[1.5π, 4.5π].
pub const SWISSROLL_T_MIN: f64 = 1.5 * std::f64::consts::PI;
pub const SWISSROLL_T_MAX: f64 = 4.5 * std::f64::consts::PI;

/// A 2D point cloud, with mode bookkeeping when the source has modes.
#[derive(Clone, Debug)]
pub struct Dataset2D {
    /// n × 2 points.
    pub points: Tensor,
    /// k × 2 mode centers for mixture data; `None` for curve data.
    pub mode_centers: Option<Tensor>,
    /// Per-mode standard deviation when centers are present.
    pub mode_std: Option<f64>,
}

/// The 8 mixture centers, radius 2, angles 2πi/8.
pub fn eight_gaussian_centers() -> Tensor {
    Tensor::from_fn(8, 2, |i, j| {
        let angle = 2.0 * std::f64::consts::PI * i as f64 / 8.0;
        if j == 0 {
            EIGHT_GAUSSIANS_RADIUS * angle.cos()
        } else {
            EIGHT_GAUSSIANS_RADIUS * angle.sin()
        }
    })
}

/// Mixture of 8 Gaussians on a ring: uniform center choice then isotropic
/// noise with std [`EIGHT_GAUSSIANS_STD`]. Draw order per point: center
/// index, x-noise, y-noise.
pub fn sample_8gaussians(n: usize, rng: &mut impl Rng) -> Dataset2D {
    let centers = eight_gaussian_centers();
    let noise = Normal::new(0.0, EIGHT_GAUSSIANS_STD).expect("positive std");
    let mut data = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let c = rng.random_range(0..8usize);
        data.push(centers.get(c, 0) + noise.sample(rng));
        data.push(centers.get(c, 1) + noise.sample(rng));
    }
    Dataset2D {
        points: Tensor::new(n, 2, data),
        mode_centers: Some(centers),
        mode_std: Some(EIGHT_GAUSSIANS_STD),
    }
}

/// 2D swissroll scaled into the [−2, 2] box: t ~ U[1.5π, 4.5π],
/// point = (t·cos t, t·sin t)/(4.5π)·2 plus isotropic noise. Draw order per
/// point: t, x-noise, y-noise. Curve data; no mode centers.
pub fn sample_swissroll(n: usize, rng: &mut impl Rng) -> Dataset2D {
    let noise = Normal::new(0.0, SWISSROLL_NOISE_STD).expect("positive std");
    let scale = 2.0 / SWISSROLL_T_MAX;
    let mut data = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let t = rng.random_range(SWISSROLL_T_MIN..=SWISSROLL_T_MAX);
        data.push(t * t.cos() * scale + noise.sample(rng));
        data.push(t * t.sin() * scale + noise.sample(rng));
    }
    Dataset2D {
        points: Tensor::new(n, 2, data),
        mode_centers: None,
        mode_std: None,
    }
}

/// n × dim matrix of i.i.d. standard normal entries, drawn row-major.
pub fn sample_noise(n: usize, dim: usize, rng: &mut impl Rng) -> Tensor {
    assert!(n >= 1 && dim >= 1, "noise sampler needs n, dim >= 1");
    let normal = Normal::new(0.0, 1.0).expect("unit std");
    Tensor::from_fn(n, dim, |_, _| normal.sample(rng))
}

// ---- IDX ingestion ------------------------------------------------------------

/// Flattened image rows rescaled to [−1, 1], with source geometry.
#[derive(Clone, Debug)]
pub struct ImageDataset {
    /// n × (rows·cols) matrix, values in [−1, 1].
    pub images: Tensor,
    pub labels: Option<Vec<u8>>,
    pub rows: usize,
    pub cols: usize,
}

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Rescale one pixel byte into [−1, 1].
pub fn byte_to_unit(b: u8) -> f64 {
    b as f64 / 127.5 - 1.0
}

/// Inverse of [`byte_to_unit`]; exact round-trip for all 256 byte values.
pub fn unit_to_byte(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

fn read_u32_be(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Parse(format!("unexpected EOF reading {what}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Parse an IDX image tensor file (big-endian magic 0x00000803, three
/// dimension sizes, u8 payload), rescaling pixels to [−1, 1].
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<ImageDataset> {
    let mut f = std::fs::File::open(path.as_ref())?;
    let ds = read_idx_images_from(&mut f)?;
    Ok(ds)
}

/// Reader-based version of [`read_idx_images`] for in-memory fixtures.
pub fn read_idx_images_from(r: &mut impl Read) -> Result<ImageDataset> {
    let magic = read_u32_be(r, "IDX magic")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Parse(format!(
            "not an IDX file: expected image magic 0x{IDX_IMAGE_MAGIC:08x}, got 0x{magic:08x}"
        )));
    }
    let n = read_u32_be(r, "IDX item count")? as usize;
    let rows = read_u32_be(r, "IDX row count")? as usize;
    let cols = read_u32_be(r, "IDX column count")? as usize;
    let mut bytes = vec![0u8; n * rows * cols];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Parse("unexpected EOF reading IDX pixel payload".into()))?;
    let images = Tensor::new(
        n,
        rows * cols,
        bytes.iter().map(|&b| byte_to_unit(b)).collect(),
    );
    Ok(ImageDataset {
        images,
        labels: None,
        rows,
        cols,
    })
}

/// Parse an IDX label vector file (big-endian magic 0x00000801).
pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let mut f = std::fs::File::open(path.as_ref())?;
    read_idx_labels_from(&mut f)
}

/// Reader-based version of [`read_idx_labels`].
pub fn read_idx_labels_from(r: &mut impl Read) -> Result<Vec<u8>> {
    let magic = read_u32_be(r, "IDX magic")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::Parse(format!(
            "not an IDX file: expected label magic 0x{IDX_LABEL_MAGIC:08x}, got 0x{magic:08x}"
        )));
    }
    let n = read_u32_be(r, "IDX item count")? as usize;
    let mut bytes = vec![0u8; n];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Parse("unexpected EOF reading IDX label payload".into()))?;
    Ok(bytes)
}

/// Write a point cloud as CSV with `x,y` header and 17-significant-digit
/// coordinates.
pub fn export_points_csv(points: &Tensor, mut w: impl std::io::Write) -> Result<()> {
    if points.cols() != 2 {
        return Err(Error::Shape(format!(
            "point CSV export expects n x 2, got {} x {}",
            points.rows(),
            points.cols()
        )));
    }
    writeln!(w, "x,y")?;
    for i in 0..points.rows() {
        writeln!(w, "{:.16e},{:.16e}", points.get(i, 0), points.get(i, 1))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_mixture_still_reports_its_centers() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ds = sample_8gaussians(0, &mut rng);
        assert_eq!(ds.points.shape(), (0, 2));
        let centers = ds.mode_centers.expect("centers recorded");
        assert_eq!(centers.shape(), (8, 2));
        assert_eq!(ds.mode_std, Some(0.02));
        // First center sits at (2, 0); the third at (0, 2).
        assert!((centers.get(0, 0) - 2.0).abs() < 1e-15);
        assert!(centers.get(0, 1).abs() < 1e-15);
        assert!(centers.get(2, 0).abs() < 1e-15);
        assert!((centers.get(2, 1) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mixture_mean_is_near_the_origin_by_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ds = sample_8gaussians(100_000, &mut rng);
        let n = ds.points.rows() as f64;
        let mean_x: f64 = (0..ds.points.rows()).map(|i| ds.points.get(i, 0)).sum::<f64>() / n;
        let mean_y: f64 = (0..ds.points.rows()).map(|i| ds.points.get(i, 1)).sum::<f64>() / n;
        assert!(mean_x.abs() < 0.05, "mean_x {mean_x}");
        assert!(mean_y.abs() < 0.05, "mean_y {mean_y}");
    }

    #[test]
    fn nearly_all_mixture_points_hug_their_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = sample_8gaussians(20_000, &mut rng);
        let centers = ds.mode_centers.as_ref().unwrap();
        let mut close = 0usize;
        for i in 0..ds.points.rows() {
            let (x, y) = (ds.points.get(i, 0), ds.points.get(i, 1));
            let nearest = (0..8)
                .map(|c| {
                    let (dx, dy) = (x - centers.get(c, 0), y - centers.get(c, 1));
                    (dx * dx + dy * dy).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            if nearest <= 4.0 * EIGHT_GAUSSIANS_STD {
                close += 1;
            }
        }
        let frac = close as f64 / ds.points.rows() as f64;
        assert!(frac >= 0.99, "only {frac} within 4 std");
    }

    #[test]
    fn swissroll_stays_inside_radius_2_2_and_has_no_centers() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ds = sample_swissroll(50_000, &mut rng);
        assert!(ds.mode_centers.is_none());
        for i in 0..ds.points.rows() {
            let r = (ds.points.get(i, 0).powi(2) + ds.points.get(i, 1).powi(2)).sqrt();
            assert!(r <= 2.2, "point {i} at radius {r}");
        }
    }

    #[test]
    fn swissroll_covers_the_whole_parameter_range() {
        // Invert the (noisy) radius to recover t, then demand every 10-degree
        // parameter bin is hit: 3π of range -> 54 bins.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let ds = sample_swissroll(100_000, &mut rng);
        let mut bins = [0usize; 54];
        for i in 0..ds.points.rows() {
            let r = (ds.points.get(i, 0).powi(2) + ds.points.get(i, 1).powi(2)).sqrt();
            let t = (r * SWISSROLL_T_MAX / 2.0).clamp(SWISSROLL_T_MIN, SWISSROLL_T_MAX);
            let frac = (t - SWISSROLL_T_MIN) / (SWISSROLL_T_MAX - SWISSROLL_T_MIN);
            let b = ((frac * 54.0) as usize).min(53);
            bins[b] += 1;
        }
        for (b, count) in bins.iter().enumerate() {
            assert!(*count > 0, "parameter bin {b} is empty");
        }
    }

    #[test]
    fn samplers_are_reproducible_per_seed() {
        let a = sample_swissroll(7, &mut ChaCha8Rng::seed_from_u64(42));
        let b = sample_swissroll(7, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a.points.data(), b.points.data());
        let c = sample_8gaussians(7, &mut ChaCha8Rng::seed_from_u64(42));
        let d = sample_8gaussians(7, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(c.points.data(), d.points.data());
        let e = sample_noise(3, 4, &mut ChaCha8Rng::seed_from_u64(42));
        let f = sample_noise(3, 4, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(e.data(), f.data());
    }

    #[test]
    fn latent_noise_matches_standard_normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = sample_noise(1000, 1000, &mut rng);
        let n = (z.rows() * z.cols()) as f64;
        let mean: f64 = z.data().iter().sum::<f64>() / n;
        let var: f64 = z.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn idx_image_fixture_parses_and_rescales() {
        // Hand-built 1 image of 2x2 pixels {0, 255, 0, 255}.
        let mut bytes: Vec<u8> = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes.extend_from_slice(&1u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[0, 255, 0, 255]);
        let ds = read_idx_images_from(&mut bytes.as_slice()).unwrap();
        assert_eq!((ds.rows, ds.cols), (2, 2));
        assert_eq!(ds.images.shape(), (1, 4));
        assert_eq!(ds.images.data(), &[-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn idx_reader_rejects_wrong_magic_and_truncation() {
        // A label file handed to the image reader.
        let mut label_bytes: Vec<u8> = Vec::new();
        label_bytes.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        label_bytes.extend_from_slice(&2u32.to_be_bytes());
        label_bytes.extend_from_slice(&[7, 3]);
        let err = read_idx_images_from(&mut label_bytes.as_slice()).unwrap_err();
        assert!(
            err.to_string().contains("not an IDX file"),
            "got: {err}"
        );
        // Same bytes parse fine as labels.
        assert_eq!(
            read_idx_labels_from(&mut label_bytes.as_slice()).unwrap(),
            vec![7, 3]
        );

        // Truncated pixel payload.
        let mut truncated: Vec<u8> = Vec::new();
        truncated.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        truncated.extend_from_slice(&1u32.to_be_bytes());
        truncated.extend_from_slice(&2u32.to_be_bytes());
        truncated.extend_from_slice(&2u32.to_be_bytes());
        truncated.extend_from_slice(&[0, 255]); // two of four pixels
        let err = read_idx_images_from(&mut truncated.as_slice()).unwrap_err();
        assert!(err.to_string().contains("unexpected EOF"), "got: {err}");
    }

    #[test]
    fn pixel_rescaling_round_trips_every_byte() {
        for b in 0..=255u8 {
            let v = byte_to_unit(b);
            assert!((-1.0..=1.0).contains(&v));
            assert_eq!(unit_to_byte(v), b, "byte {b} failed the round trip");
        }
    }

    #[test]
    fn point_csv_has_header_and_full_precision() {
        let points = Tensor::new(2, 2, vec![0.1, -2.0, 1.0 / 3.0, 5e-300]);
        let mut out = Vec::new();
        export_points_csv(&points, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("1.0000000000000001e-1,"), "line: {first}");
        // Parsing back recovers the exact doubles.
        let last = lines.next().unwrap();
        let cols: Vec<f64> = last.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(cols, vec![1.0 / 3.0, 5e-300]);
    }
}
