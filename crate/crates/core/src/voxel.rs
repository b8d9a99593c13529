//! Voxel quantization (one representative point per cell) and 3D augmentation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::io::{Point, PointCloud};

pub const DEFAULT_VOXEL_SIZE: f64 = 0.05;

/// Result of quantizing a cloud: voxel keys in canonical (lexicographic)
/// order, one representative point per key, and the total point -> voxel map.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSet {
    pub keys: Vec<[i64; 3]>,
    /// Lowest point index inside each voxel.
    pub representative: Vec<usize>,
    /// Voxel row of every point.
    pub point_to_voxel: Vec<usize>,
    pub voxel_size: f64,
}

impl VoxelSet {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Row index of an occupied key.
    pub fn row_of(&self, key: &[i64; 3]) -> Option<usize> {
        self.keys.binary_search(key).ok()
    }

    /// Occupied 6-neighborhood (axis-adjacent cells) of each voxel.
    pub fn neighbor_rows(&self) -> Vec<Vec<usize>> {
        const DIRS: [[i64; 3]; 6] = [
            [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
        ];
        self.keys
            .iter()
            .map(|k| {
                DIRS.iter()
                    .filter_map(|d| self.row_of(&[k[0] + d[0], k[1] + d[1], k[2] + d[2]]))
                    .collect()
            })
            .collect()
    }
}

pub fn voxel_key(p: &Point, voxel_size: f64) -> [i64; 3] {
    [
        (p.x / voxel_size).floor() as i64,
        (p.y / voxel_size).floor() as i64,
        (p.z / voxel_size).floor() as i64,
    ]
}

/// Quantize a cloud onto a cubic grid. The representative of each cell is its
/// lowest point index; rows are sorted by key so the set is canonical.
pub fn voxelize(cloud: &PointCloud, voxel_size: f64) -> Result<VoxelSet> {
    if voxel_size <= 0.0 || !voxel_size.is_finite() {
        return Err(Error::InvalidVoxelSize(voxel_size));
    }
    let mut keyed: Vec<([i64; 3], usize)> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (voxel_key(p, voxel_size), i))
        .collect();
    // sort by (key, point index): the first entry of each key group is the
    // lowest-index point in that cell
    keyed.sort_unstable();

    let mut keys = Vec::new();
    let mut representative = Vec::new();
    let mut point_to_voxel = vec![0usize; cloud.len()];
    for (key, idx) in keyed {
        if keys.last() != Some(&key) {
            keys.push(key);
            representative.push(idx);
        }
        point_to_voxel[idx] = keys.len() - 1;
    }
    Ok(VoxelSet { keys, representative, point_to_voxel, voxel_size })
}

/// 3D augmentation ranges: rotation about the vertical axis, translation, and
/// per-axis flips.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Augment3dSpec {
    /// Rotation drawn from [-max_rotation, max_rotation] radians.
    pub max_rotation: f64,
    /// Translation per axis drawn from [-max_translation, max_translation].
    pub max_translation: f64,
    pub flip_x_prob: f64,
    pub flip_y_prob: f64,
}

impl Augment3dSpec {
    pub fn none() -> Self {
        Self { max_rotation: 0.0, max_translation: 0.0, flip_x_prob: 0.0, flip_y_prob: 0.0 }
    }
}

/// Rigid augmentation: flip, then rotate about z, then translate. Remission
/// (and any paired labels) are untouched.
pub fn augment3d<R: Rng>(cloud: &PointCloud, rng: &mut R, spec: &Augment3dSpec) -> PointCloud {
    let flip_x = rng.gen_range(0.0..1.0) < spec.flip_x_prob;
    let flip_y = rng.gen_range(0.0..1.0) < spec.flip_y_prob;
    let angle = if spec.max_rotation > 0.0 {
        rng.gen_range(-spec.max_rotation..spec.max_rotation)
    } else {
        0.0
    };
    let t: [f64; 3] = if spec.max_translation > 0.0 {
        [
            rng.gen_range(-spec.max_translation..spec.max_translation),
            rng.gen_range(-spec.max_translation..spec.max_translation),
            rng.gen_range(-spec.max_translation..spec.max_translation),
        ]
    } else {
        [0.0; 3]
    };
    let (s, c) = angle.sin_cos();
    let points = cloud
        .points
        .iter()
        .map(|p| {
            let x = if flip_x { -p.x } else { p.x };
            let y = if flip_y { -p.y } else { p.y };
            Point {
                x: c * x - s * y + t[0],
                y: s * x + c * y + t[1],
                z: p.z + t[2],
                remission: p.remission,
            }
        })
        .collect();
    PointCloud::new(points, cloud.frame_id)
}
