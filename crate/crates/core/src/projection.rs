//! Spherical range-image projection and 2D augmentations.
//!
//! A range image has five channels (range, remission, normal-x/y/z) plus a
//! validity mask and a bidirectional pixel<->point index map. The projection
//! convention: azimuth `atan2(y, x)` maps linearly onto columns with azimuth
//! 0 at column W/2, and each point lands on the beam row whose elevation is
//! nearest to `asin(z / r)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::io::{PointCloud, SensorSpec};

pub const CHANNELS: usize = 5;
pub const CH_RANGE: usize = 0;
pub const CH_REMISSION: usize = 1;
pub const CH_NORMAL_X: usize = 2;

/// Sentinel written into the range channel of empty pixels.
pub const INVALID_RANGE: f64 = -1.0;

/// Marker for points that did not land in the image.
pub const UNPROJECTED: usize = usize::MAX;

/// Slack on the field-of-view bounds (radians) absorbing round-trip error in
/// `asin(z / r)` for returns generated exactly on the edge beams.
pub const FOV_EPS: f64 = 1e-9;

/// Dense H x W x 5 projection of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    pub height: usize,
    pub width: usize,
    /// Channel-major values: `data[c * H * W + h * W + w]`.
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
    /// Representative (minimum-range) point per pixel, [`UNPROJECTED`] if empty.
    pub rep_point: Vec<usize>,
    /// Coordinates of the representative point, used for normal estimation.
    pub coords: Vec<[f64; 3]>,
}

impl RangeImage {
    fn empty(height: usize, width: usize) -> Self {
        let px = height * width;
        let mut data = vec![0.0; CHANNELS * px];
        data[..px].fill(INVALID_RANGE);
        Self {
            height,
            width,
            data,
            valid: vec![false; px],
            rep_point: vec![UNPROJECTED; px],
            coords: vec![[0.0; 3]; px],
        }
    }

    #[inline]
    pub fn pixel(&self, h: usize, w: usize) -> usize {
        h * self.width + w
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[c * self.height * self.width + h * self.width + w]
    }

    #[inline]
    pub fn set(&mut self, c: usize, h: usize, w: usize, v: f64) {
        self.data[c * self.height * self.width + h * self.width + w] = v;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Bidirectional pixel<->point correspondence for one projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelIndexMap {
    pub height: usize,
    pub width: usize,
    /// (row, col) per point, or `None` for unprojected points.
    pub point_to_pixel: Vec<Option<(usize, usize)>>,
    /// Point indices per pixel, in ascending point order.
    pub pixel_to_points: Vec<Vec<usize>>,
}

impl PixelIndexMap {
    pub fn unprojected_count(&self) -> usize {
        self.point_to_pixel.iter().filter(|p| p.is_none()).count()
    }
}

/// Column for an azimuth under the fixed convention; result is in `[0, w)`.
pub fn azimuth_column(azimuth: f64, w: usize) -> usize {
    let col = ((0.5 - azimuth / std::f64::consts::TAU) * w as f64).floor() as i64;
    col.rem_euclid(w as i64) as usize
}

/// Project a cloud into a `sensor.beams() x w` range image.
///
/// Per pixel the nearest return wins (ties: lowest point index); points whose
/// elevation falls outside `[fov_down, fov_up]` are recorded as unprojected.
pub fn project(cloud: &PointCloud, sensor: &SensorSpec, w: usize) -> Result<(RangeImage, PixelIndexMap)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if w == 0 {
        return Err(Error::ShapeError("projection width must be >= 1".into()));
    }
    let h = sensor.beams();
    let mut img = RangeImage::empty(h, w);
    let mut map = PixelIndexMap {
        height: h,
        width: w,
        point_to_pixel: vec![None; cloud.len()],
        pixel_to_points: vec![Vec::new(); h * w],
    };

    for (i, p) in cloud.points.iter().enumerate() {
        let r = p.range();
        if r < 1e-9 {
            continue; // a return at the origin has no direction
        }
        let elevation = (p.z / r).asin();
        // tolerance keeps points generated exactly on the edge beams in-FOV
        if elevation < sensor.fov_down - FOV_EPS || elevation > sensor.fov_up + FOV_EPS {
            continue;
        }
        let row = sensor.nearest_beam(elevation);
        let col = azimuth_column(p.y.atan2(p.x), w);
        map.point_to_pixel[i] = Some((row, col));
        map.pixel_to_points[row * w + col].push(i);
    }

    for px in 0..h * w {
        let pts = &map.pixel_to_points[px];
        if pts.is_empty() {
            continue;
        }
        let mut rep = pts[0];
        let mut best = cloud.points[rep].range();
        for &i in &pts[1..] {
            let r = cloud.points[i].range();
            if r < best {
                best = r;
                rep = i;
            }
        }
        let p = cloud.points[rep];
        img.data[px] = best; // range channel starts at offset 0
        img.data[img.height * img.width + px] = p.remission;
        img.valid[px] = true;
        img.rep_point[px] = rep;
        img.coords[px] = [p.x, p.y, p.z];
    }
    Ok((img, map))
}

/// Fill the normal channels by central differences over the representative
/// 3D positions, with horizontal wraparound. The sign faces the sensor.
/// Pixels lacking a complete 4-neighbor stencil keep a zero normal.
pub fn compute_normals(img: &mut RangeImage) {
    let (h, w) = (img.height, img.width);
    let px_count = h * w;
    let mut normals = vec![[0.0f64; 3]; px_count];
    for row in 0..h {
        for col in 0..w {
            let px = row * w + col;
            if !img.valid[px] || row == 0 || row + 1 == h {
                continue;
            }
            let left = row * w + (col + w - 1) % w;
            let right = row * w + (col + 1) % w;
            let up = (row - 1) * w + col;
            let down = (row + 1) * w + col;
            if !(img.valid[left] && img.valid[right] && img.valid[up] && img.valid[down]) {
                continue;
            }
            let a = sub(img.coords[right], img.coords[left]);
            let b = sub(img.coords[down], img.coords[up]);
            let mut n = cross(a, b);
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if norm < 1e-12 {
                continue;
            }
            for v in &mut n {
                *v /= norm;
            }
            let p = img.coords[px];
            if n[0] * p[0] + n[1] * p[1] + n[2] * p[2] > 0.0 {
                for v in &mut n {
                    *v = -*v;
                }
            }
            normals[px] = n;
        }
    }
    for px in 0..px_count {
        for k in 0..3 {
            img.data[(CH_NORMAL_X + k) * px_count + px] = normals[px][k];
        }
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Per-channel normalization statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl ChannelStats {
    pub fn identity() -> Self {
        Self { mean: [0.0; CHANNELS], std: [1.0; CHANNELS] }
    }
}

/// Mean/std over the valid pixels of a set of images.
pub fn compute_channel_stats(images: &[&RangeImage]) -> Result<ChannelStats> {
    let mut sum = [0.0f64; CHANNELS];
    let mut sumsq = [0.0f64; CHANNELS];
    let mut n = 0usize;
    for img in images {
        let px_count = img.height * img.width;
        for px in 0..px_count {
            if !img.valid[px] {
                continue;
            }
            n += 1;
            for c in 0..CHANNELS {
                let v = img.data[c * px_count + px];
                sum[c] += v;
                sumsq[c] += v * v;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut mean = [0.0; CHANNELS];
    let mut std = [0.0; CHANNELS];
    for c in 0..CHANNELS {
        mean[c] = sum[c] / n as f64;
        std[c] = (sumsq[c] / n as f64 - mean[c] * mean[c]).max(0.0).sqrt();
    }
    Ok(ChannelStats { mean, std })
}

/// Standardize valid pixels channel-wise; invalid pixels are untouched.
pub fn normalize_channels(img: &RangeImage, stats: &ChannelStats) -> Result<RangeImage> {
    for (c, &s) in stats.std.iter().enumerate() {
        if s <= 0.0 {
            return Err(Error::DegenerateStats { channel: c });
        }
    }
    let mut out = img.clone();
    let px_count = img.height * img.width;
    for px in 0..px_count {
        if !img.valid[px] {
            continue;
        }
        for c in 0..CHANNELS {
            out.data[c * px_count + px] = (img.data[c * px_count + px] - stats.mean[c]) / stats.std[c];
        }
    }
    Ok(out)
}

/// Take a `width`-column cutout starting at a random column, wrapping
/// horizontally. Index maps are re-based; points left outside become
/// unprojected.
pub fn cutout<R: Rng>(
    img: &RangeImage,
    map: &PixelIndexMap,
    width: usize,
    rng: &mut R,
) -> Result<(RangeImage, PixelIndexMap)> {
    if width == 0 || width > img.width {
        return Err(Error::InvalidCutout { width, image_width: img.width });
    }
    let c0 = rng.gen_range(0..img.width);
    cutout_at(img, map, width, c0)
}

/// Deterministic variant used by [`cutout`] and by tests.
pub fn cutout_at(
    img: &RangeImage,
    map: &PixelIndexMap,
    width: usize,
    c0: usize,
) -> Result<(RangeImage, PixelIndexMap)> {
    if width == 0 || width > img.width {
        return Err(Error::InvalidCutout { width, image_width: img.width });
    }
    let (h, w_in) = (img.height, img.width);
    let mut out = RangeImage::empty(h, width);
    let mut out_map = PixelIndexMap {
        height: h,
        width,
        point_to_pixel: vec![None; map.point_to_pixel.len()],
        pixel_to_points: vec![Vec::new(); h * width],
    };
    let px_in = h * w_in;
    let px_out = h * width;
    for row in 0..h {
        for j in 0..width {
            let src_col = (c0 + j) % w_in;
            let src = row * w_in + src_col;
            let dst = row * width + j;
            for c in 0..CHANNELS {
                out.data[c * px_out + dst] = img.data[c * px_in + src];
            }
            out.valid[dst] = img.valid[src];
            out.rep_point[dst] = img.rep_point[src];
            out.coords[dst] = img.coords[src];
            out_map.pixel_to_points[dst] = map.pixel_to_points[src].clone();
        }
    }
    for (i, pp) in map.point_to_pixel.iter().enumerate() {
        if let Some((row, col)) = pp {
            let rel = (col + w_in - c0) % w_in;
            if rel < width {
                out_map.point_to_pixel[i] = Some((*row, rel));
            }
        }
    }
    Ok((out, out_map))
}

/// Rectangular dropout configuration for [`augment2d`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DropoutSpec {
    pub patches: usize,
    pub max_height: usize,
    pub max_width: usize,
}

impl DropoutSpec {
    pub fn none() -> Self {
        Self { patches: 0, max_height: 0, max_width: 0 }
    }
}

/// Random horizontal flip plus rectangular dropout.
///
/// A flip reverses column order and updates both index maps; dropout
/// invalidates patches (range sentinel, zeroed channels) while leaving the
/// index maps intact so losses can mask the affected pixels.
pub fn augment2d<R: Rng>(
    img: &RangeImage,
    map: &PixelIndexMap,
    rng: &mut R,
    p_flip: f64,
    dropout: &DropoutSpec,
) -> (RangeImage, PixelIndexMap) {
    let mut out = img.clone();
    let mut out_map = map.clone();
    let (h, w) = (img.height, img.width);
    let px_count = h * w;

    if rng.gen_range(0.0..1.0) < p_flip {
        for row in 0..h {
            for col in 0..w {
                let src = row * w + col;
                let dst = row * w + (w - 1 - col);
                for c in 0..CHANNELS {
                    out.data[c * px_count + dst] = img.data[c * px_count + src];
                }
                out.valid[dst] = img.valid[src];
                out.rep_point[dst] = img.rep_point[src];
                out.coords[dst] = img.coords[src];
                out_map.pixel_to_points[dst] = map.pixel_to_points[src].clone();
            }
        }
        for pp in out_map.point_to_pixel.iter_mut() {
            if let Some((_, col)) = pp {
                *col = w - 1 - *col;
            }
        }
    }

    for _ in 0..dropout.patches {
        if dropout.max_height == 0 || dropout.max_width == 0 {
            continue;
        }
        let ph = rng.gen_range(1..=dropout.max_height.min(h));
        let pw = rng.gen_range(1..=dropout.max_width.min(w));
        let h0 = rng.gen_range(0..=h - ph);
        let w0 = rng.gen_range(0..=w - pw);
        for row in h0..h0 + ph {
            for col in w0..w0 + pw {
                let px = row * w + col;
                out.valid[px] = false;
                out.data[px] = INVALID_RANGE;
                for c in 1..CHANNELS {
                    out.data[c * px_count + px] = 0.0;
                }
            }
        }
    }
    (out, out_map)
}

/// Gather per-pixel features back to points: point `i` receives the vector of
/// its pixel, unprojected points receive zeros. `features` is `H x W x F`
/// row-major (feature index fastest).
pub fn lift_features(
    features: &[f64],
    height: usize,
    width: usize,
    feat_dim: usize,
    map: &PixelIndexMap,
) -> Result<Vec<f64>> {
    if features.len() != height * width * feat_dim || height != map.height || width != map.width {
        return Err(Error::ShapeError(format!(
            "feature map {}x{}x{feat_dim} does not match index map {}x{}",
            height, width, map.height, map.width
        )));
    }
    let n = map.point_to_pixel.len();
    let mut out = vec![0.0; n * feat_dim];
    for (i, pp) in map.point_to_pixel.iter().enumerate() {
        if let Some((row, col)) = pp {
            let src = (row * width + col) * feat_dim;
            out[i * feat_dim..(i + 1) * feat_dim].copy_from_slice(&features[src..src + feat_dim]);
        }
    }
    Ok(out)
}

// ── tensor file (CLI dump format) ──────────────────────────────────────────

pub const TENSOR_MAGIC: &[u8; 4] = b"RIMG";

/// Serialize: 16-byte header (magic, H, W, C as LE u32) + channel-major f64 LE.
pub fn write_tensor_file(img: &RangeImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + img.data.len() * 8);
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(img.height as u32).to_le_bytes());
    out.extend_from_slice(&(img.width as u32).to_le_bytes());
    out.extend_from_slice(&(CHANNELS as u32).to_le_bytes());
    for v in &img.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Deserialize a tensor file. Validity is reconstructed from the range
/// sentinel; representative indices and coordinates are not stored.
pub fn read_tensor_file(bytes: &[u8]) -> Result<RangeImage> {
    if bytes.len() < 16 || &bytes[0..4] != TENSOR_MAGIC {
        return Err(Error::Io("bad tensor file header".into()));
    }
    let rd = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize;
    let (h, w, c) = (rd(4), rd(8), rd(12));
    if c != CHANNELS || bytes.len() != 16 + h * w * c * 8 {
        return Err(Error::Io("tensor file size mismatch".into()));
    }
    let mut img = RangeImage::empty(h, w);
    for (i, chunk) in bytes[16..].chunks_exact(8).enumerate() {
        img.data[i] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    for px in 0..h * w {
        img.valid[px] = img.data[px] != INVALID_RANGE;
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synth::{simulate_scan, synth_scene, SceneParams};
    use crate::io::Point;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sym_sensor(beams: usize, w: usize) -> SensorSpec {
        SensorSpec::linear(beams, 15.0, -15.0, w, 80.0)
    }

    fn cloud(points: Vec<Point>) -> PointCloud {
        PointCloud::new(points, 0)
    }

    #[test]
    fn single_point_on_axis_lands_at_center_column_and_middle_beam() {
        // Hand evaluation: azimuth 0 -> column W/2; elevation 0 -> nearest beam.
        let sensor = sym_sensor(5, 8); // elevations 15, 7.5, 0, -7.5, -15 deg
        let c = cloud(vec![Point { x: 1.0, y: 0.0, z: 0.0, remission: 0.3 }]);
        let (img, map) = project(&c, &sensor, 8).unwrap();
        assert_eq!(map.point_to_pixel[0], Some((2, 4)));
        assert_eq!(img.get(CH_RANGE, 2, 4), 1.0);
        assert_eq!(img.get(CH_REMISSION, 2, 4), 0.3);
    }

    #[test]
    fn min_range_point_wins_the_pixel() {
        let sensor = sym_sensor(5, 8);
        let c = cloud(vec![
            Point { x: 5.0, y: 0.0, z: 0.0, remission: 0.9 },
            Point { x: 2.0, y: 0.0, z: 0.0, remission: 0.1 },
        ]);
        let (img, map) = project(&c, &sensor, 8).unwrap();
        assert_eq!(img.get(CH_RANGE, 2, 4), 2.0);
        assert_eq!(img.get(CH_REMISSION, 2, 4), 0.1);
        assert_eq!(img.rep_point[img.pixel(2, 4)], 1);
        assert_eq!(map.pixel_to_points[img.pixel(2, 4)], vec![0, 1]);
    }

    #[test]
    fn empty_pixels_carry_sentinel() {
        let sensor = sym_sensor(5, 8);
        let c = cloud(vec![Point { x: 1.0, y: 0.0, z: 0.0, remission: 0.3 }]);
        let (img, _) = project(&c, &sensor, 8).unwrap();
        for row in 0..5 {
            for col in 0..8 {
                if (row, col) != (2, 4) {
                    assert_eq!(img.get(CH_RANGE, row, col), INVALID_RANGE);
                    assert!(!img.valid[img.pixel(row, col)]);
                }
            }
        }
    }

    #[test]
    fn empty_cloud_is_rejected() {
        let sensor = sym_sensor(5, 8);
        assert!(matches!(project(&cloud(vec![]), &sensor, 8), Err(Error::EmptyCloud)));
    }

    #[test]
    fn out_of_fov_points_are_recorded_unprojected() {
        let sensor = sym_sensor(5, 8);
        let c = cloud(vec![
            Point { x: 1.0, y: 0.0, z: 5.0, remission: 0.5 }, // far above fov_up
            Point { x: 1.0, y: 0.0, z: 0.0, remission: 0.5 },
        ]);
        let (_, map) = project(&c, &sensor, 8).unwrap();
        assert_eq!(map.point_to_pixel[0], None);
        assert!(map.point_to_pixel[1].is_some());
        assert_eq!(map.unprojected_count(), 1);
    }

    #[test]
    fn ground_plane_normals_point_up() {
        let params = SceneParams { cars: 0, buildings: 0, poles: 0, trunks: 0, pedestrians: 0, ..Default::default() };
        let scene = synth_scene(1, &params).unwrap();
        let sensor = SensorSpec::linear(32, -2.0, -25.0, 256, 80.0);
        let (c, _) = simulate_scan(&scene, &sensor, 5);
        let (mut img, _) = project(&c, &sensor, 256).unwrap();
        compute_normals(&mut img);
        let px_count = img.height * img.width;
        let mut checked = 0;
        for px in 0..px_count {
            let n = [
                img.data[2 * px_count + px],
                img.data[3 * px_count + px],
                img.data[4 * px_count + px],
            ];
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if norm == 0.0 {
                continue;
            }
            assert!((norm - 1.0).abs() < 1e-6, "normal not unit: {norm}");
            assert!((n[2] - 1.0).abs() < 1e-3, "plane normal off: {n:?}");
            checked += 1;
        }
        assert!(checked > 100, "too few interior normals ({checked})");
    }

    #[test]
    fn isolated_pixel_gets_zero_normal() {
        let sensor = sym_sensor(5, 8);
        let c = cloud(vec![Point { x: 1.0, y: 0.0, z: 0.0, remission: 0.3 }]);
        let (mut img, _) = project(&c, &sensor, 8).unwrap();
        compute_normals(&mut img);
        let px_count = img.height * img.width;
        assert!(img.data[2 * px_count..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_identity_and_constant_channel() {
        let sensor = sym_sensor(5, 8);
        let c = cloud(vec![Point { x: 2.0, y: 0.0, z: 0.0, remission: 0.5 }]);
        let (img, _) = project(&c, &sensor, 8).unwrap();
        let id = normalize_channels(&img, &ChannelStats::identity()).unwrap();
        assert_eq!(id, img);

        let mut stats = ChannelStats::identity();
        stats.mean[CH_RANGE] = 2.0;
        let z = normalize_channels(&img, &stats).unwrap();
        assert_eq!(z.get(CH_RANGE, 2, 4), 0.0);
        // invalid pixels untouched
        assert_eq!(z.get(CH_RANGE, 0, 0), INVALID_RANGE);

        stats.std[3] = 0.0;
        assert!(matches!(
            normalize_channels(&img, &stats),
            Err(Error::DegenerateStats { channel: 3 })
        ));
    }

    #[test]
    fn cutout_full_width_is_identity_modulo_rotation() {
        let scene = synth_scene(2, &SceneParams::default()).unwrap();
        let sensor = sym_sensor(8, 32);
        let (c, _) = simulate_scan(&scene, &sensor, 3);
        let (img, map) = project(&c, &sensor, 32).unwrap();
        let (cut, cut_map) = cutout_at(&img, &map, 32, 0).unwrap();
        assert_eq!(cut, img);
        assert_eq!(cut_map, map);
    }

    #[test]
    fn cutout_wraps_around() {
        let scene = synth_scene(2, &SceneParams::default()).unwrap();
        let sensor = sym_sensor(8, 32);
        let (c, _) = simulate_scan(&scene, &sensor, 3);
        let (img, map) = project(&c, &sensor, 32).unwrap();
        let (cut, _) = cutout_at(&img, &map, 2, 31).unwrap();
        for row in 0..8 {
            assert_eq!(cut.get(CH_RANGE, row, 0), img.get(CH_RANGE, row, 31));
            assert_eq!(cut.get(CH_RANGE, row, 1), img.get(CH_RANGE, row, 0));
        }
    }

    #[test]
    fn cutout_is_seed_reproducible_and_validates_width() {
        let scene = synth_scene(2, &SceneParams::default()).unwrap();
        let sensor = sym_sensor(8, 32);
        let (c, _) = simulate_scan(&scene, &sensor, 3);
        let (img, map) = project(&c, &sensor, 32).unwrap();
        let a = cutout(&img, &map, 16, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = cutout(&img, &map, 16, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(cutout_at(&img, &map, 33, 0), Err(Error::InvalidCutout { .. })));
    }

    #[test]
    fn flip_twice_restores_image() {
        let scene = synth_scene(4, &SceneParams::default()).unwrap();
        let sensor = sym_sensor(8, 32);
        let (c, _) = simulate_scan(&scene, &sensor, 3);
        let (img, map) = project(&c, &sensor, 32).unwrap();
        // p_flip = 1.0 forces the flip both times
        let (f1, m1) = augment2d(&img, &map, &mut ChaCha8Rng::seed_from_u64(0), 1.0, &DropoutSpec::none());
        let (f2, m2) = augment2d(&f1, &m1, &mut ChaCha8Rng::seed_from_u64(0), 1.0, &DropoutSpec::none());
        assert_eq!(f2, img);
        assert_eq!(m2, map);
        assert_ne!(f1, img);
    }

    #[test]
    fn zero_patch_dropout_is_identity() {
        let scene = synth_scene(4, &SceneParams::default()).unwrap();
        let sensor = sym_sensor(8, 32);
        let (c, _) = simulate_scan(&scene, &sensor, 3);
        let (img, map) = project(&c, &sensor, 32).unwrap();
        let (out, out_map) = augment2d(&img, &map, &mut ChaCha8Rng::seed_from_u64(0), 0.0, &DropoutSpec::none());
        assert_eq!(out, img);
        assert_eq!(out_map, map);
    }

    #[test]
    fn flip_matches_reprojection_of_mirrored_cloud() {
        // Oracle: project the y-mirrored cloud; where the flipped column
        // formula is exact (non-integer grid positions) both must agree.
        let scene = synth_scene(6, &SceneParams::default()).unwrap();
        let sensor = sym_sensor(8, 32);
        let (c, _) = simulate_scan(&scene, &sensor, 3);
        let (img, map) = project(&c, &sensor, 32).unwrap();
        let (_, flipped_map) = augment2d(&img, &map, &mut ChaCha8Rng::seed_from_u64(0), 1.0, &DropoutSpec::none());

        let mirrored = cloud(
            c.points.iter().map(|p| Point { x: p.x, y: -p.y, z: p.z, remission: p.remission }).collect(),
        );
        let (_, oracle_map) = project(&mirrored, &sensor, 32).unwrap();
        let mut compared = 0;
        for i in 0..c.len() {
            let az = c.points[i].y.atan2(c.points[i].x);
            let grid = (0.5 - az / std::f64::consts::TAU) * 32.0;
            if (grid - grid.round()).abs() < 1e-9 {
                continue; // exactly on a column boundary: mirror maps to W-c, not W-1-c
            }
            assert_eq!(flipped_map.point_to_pixel[i], oracle_map.point_to_pixel[i]);
            compared += 1;
        }
        assert!(compared > 50);
    }

    #[test]
    fn lift_features_constant_field_and_shared_pixels() {
        let sensor = sym_sensor(5, 8);
        let c = cloud(vec![
            Point { x: 5.0, y: 0.0, z: 0.0, remission: 0.9 },
            Point { x: 2.0, y: 0.0, z: 0.0, remission: 0.1 },
            Point { x: 0.0, y: 0.0, z: 9.0, remission: 0.1 }, // out of fov
        ]);
        let (_, map) = project(&c, &sensor, 8).unwrap();
        let features = vec![7.5; 5 * 8 * 3];
        let lifted = lift_features(&features, 5, 8, 3, &map).unwrap();
        assert_eq!(&lifted[0..3], &[7.5, 7.5, 7.5]);
        assert_eq!(&lifted[0..3], &lifted[3..6]); // same pixel, same features
        assert_eq!(&lifted[6..9], &[0.0, 0.0, 0.0]); // unprojected -> zeros
    }

    #[test]
    fn lift_features_shape_mismatch() {
        let sensor = sym_sensor(5, 8);
        let c = cloud(vec![Point { x: 1.0, y: 0.0, z: 0.0, remission: 0.3 }]);
        let (_, map) = project(&c, &sensor, 8).unwrap();
        assert!(matches!(
            lift_features(&[0.0; 10], 5, 8, 3, &map),
            Err(Error::ShapeError(_))
        ));
    }

    #[test]
    fn tensor_file_round_trip() {
        let scene = synth_scene(4, &SceneParams::default()).unwrap();
        let sensor = sym_sensor(8, 32);
        let (c, _) = simulate_scan(&scene, &sensor, 3);
        let (mut img, _) = project(&c, &sensor, 32).unwrap();
        compute_normals(&mut img);
        let bytes = write_tensor_file(&img);
        assert_eq!(&bytes[0..4], TENSOR_MAGIC);
        let back = read_tensor_file(&bytes).unwrap();
        assert_eq!(back.data, img.data);
        assert_eq!(back.valid, img.valid);
        assert_eq!(write_tensor_file(&back), bytes);
    }
}
