//! Target-like scan generation: beam resampling plus dimension alignment, so
//! labelled source sweeps mimic the target sensor's resolution.

use crate::error::{Error, Result};
use crate::io::{LabelArray, PointCloud, SensorSpec};
use crate::projection::{RangeImage, CHANNELS};

/// A resampled source scan carrying its original labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetLikeScan {
    pub cloud: PointCloud,
    pub labels: LabelArray,
    /// Frame id of the source scan this was derived from.
    pub provenance: u64,
    /// Source beam rows that survived resampling, ascending.
    pub retained_rows: Vec<usize>,
}

/// Source beam rows that survive: a row is retained iff it is the nearest
/// source elevation to at least one target beam elevation.
pub fn retained_rows(source: &SensorSpec, target: &SensorSpec) -> Vec<usize> {
    let mut rows: Vec<usize> = target
        .beam_elevations
        .iter()
        .map(|&e| source.nearest_beam(e))
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows
}

/// Drop every point whose nearest source beam row was not selected by the
/// target beam layout. Labels ride along unchanged.
pub fn resample_beams(
    cloud: &PointCloud,
    labels: &LabelArray,
    source: &SensorSpec,
    target: &SensorSpec,
) -> Result<TargetLikeScan> {
    if target.beams() > source.beams() {
        return Err(Error::UnsupportedUpsampling { source: source.beams(), target: target.beams() });
    }
    let keep = retained_rows(source, target);
    let mut points = Vec::new();
    let mut kept_labels = Vec::new();
    for (p, &l) in cloud.points.iter().zip(&labels.labels) {
        let r = p.range();
        if r < 1e-9 {
            continue;
        }
        let elevation = (p.z / r).asin();
        if elevation < source.fov_down - crate::projection::FOV_EPS
            || elevation > source.fov_up + crate::projection::FOV_EPS
        {
            continue;
        }
        let row = source.nearest_beam(elevation);
        if keep.binary_search(&row).is_ok() {
            points.push(*p);
            kept_labels.push(l);
        }
    }
    Ok(TargetLikeScan {
        cloud: PointCloud::new(points, cloud.frame_id),
        labels: LabelArray { labels: kept_labels, num_classes: labels.num_classes },
        provenance: cloud.frame_id,
        retained_rows: keep,
    })
}

/// Resample an image's width by nearest-column selection (output column `j`
/// takes source column `floor(j * W / target_w)`). Height must already match
/// the target beam count.
pub fn align_dims(img: &RangeImage, target_h: usize, target_w: usize) -> Result<RangeImage> {
    if img.height != target_h {
        return Err(Error::HeightMismatch { expected: target_h, got: img.height });
    }
    if target_w == img.width {
        return Ok(img.clone());
    }
    let (h, w_in) = (img.height, img.width);
    let px_in = h * w_in;
    let px_out = h * target_w;
    let mut out = RangeImage {
        height: h,
        width: target_w,
        data: vec![0.0; CHANNELS * px_out],
        valid: vec![false; px_out],
        rep_point: vec![crate::projection::UNPROJECTED; px_out],
        coords: vec![[0.0; 3]; px_out],
    };
    for row in 0..h {
        for j in 0..target_w {
            let src_col = j * w_in / target_w;
            let src = row * w_in + src_col;
            let dst = row * target_w + j;
            for c in 0..CHANNELS {
                out.data[c * px_out + dst] = img.data[c * px_in + src];
            }
            out.valid[dst] = img.valid[src];
            out.rep_point[dst] = img.rep_point[src];
            out.coords[dst] = img.coords[src];
        }
    }
    Ok(out)
}
