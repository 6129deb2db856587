//! Two-level adaptive spatial hash over the union of all camera fragments.
//!
//! A uniform coarse lattice is laid over the padded bounding box. Coarse cells
//! holding at least `dense_threshold` points are split into
//! `(coarse_cell / fine_cell)³` fine cells; sparse cells stay whole. Every point
//! lands in exactly one leaf cell, and each leaf keeps its three most
//! confident points as representatives.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::ParamError;
use crate::geometry::{Pixel, Vec3};
use crate::pointgen::PointFragment;
use crate::scalar::Real;

/// Bits per axis in a packed cell key.
pub const KEY_AXIS_BITS: u32 = 21;
const AXIS_MASK: u64 = (1 << KEY_AXIS_BITS) - 1;
const LEVEL_BIT: u64 = 1 << 63;
/// Coarse lattices up to this many cells use a flat slot table.
const DENSE_LATTICE_LIMIT: u64 = 1 << 22;
/// Largest sub-cell count per coarse cell split by counting rather than sorting.
const SUBCELL_TABLE_LIMIT: u64 = 4096;

/// Representatives kept per cell.
pub const REPS_PER_CELL: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("scene is empty: no points survived generation")]
    EmptyScene,
    #[error("scene extent {extent_mm} mm needs {cells} fine cells along {axis}, above the 2^21 key limit")]
    TooLarge {
        axis: char,
        extent_mm: f64,
        cells: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn extent(&self) -> Vec3<T> {
        self.max - self.min
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        p.x >= self.min.x
            && p.y >= self.min.y
            && p.z >= self.min.z
            && p.x <= self.max.x
            && p.y <= self.max.y
            && p.z <= self.max.z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct GridParams<T> {
    /// Coarse cell side, mm.
    pub coarse_cell: T,
    /// Fine cell side, mm; must divide `coarse_cell`.
    pub fine_cell: T,
    /// Coarse cells with at least this many points are refined.
    pub dense_threshold: usize,
}

impl<T: Real> Default for GridParams<T> {
    fn default() -> Self {
        GridParams {
            coarse_cell: T::lit(100.0),
            fine_cell: T::lit(25.0),
            dense_threshold: 64,
        }
    }
}

impl<T: Real> GridParams<T> {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.fine_cell > T::zero() && self.fine_cell.is_finite()) {
            return Err(ParamError::Invalid {
                field: "fine_cell",
                reason: format!("must be > 0, got {}", self.fine_cell),
            });
        }
        if !(self.coarse_cell > self.fine_cell && self.coarse_cell.is_finite()) {
            return Err(ParamError::Invalid {
                field: "coarse_cell",
                reason: format!(
                    "must exceed fine_cell {}, got {}",
                    self.fine_cell, self.coarse_cell
                ),
            });
        }
        let ratio = self.coarse_cell / self.fine_cell;
        if (ratio - ratio.round()).abs() > T::lit(1e-6) * ratio {
            return Err(ParamError::Invalid {
                field: "coarse_cell",
                reason: format!("must be an integer multiple of fine_cell, ratio is {ratio}"),
            });
        }
        if self.dense_threshold == 0 {
            return Err(ParamError::Invalid {
                field: "dense_threshold",
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }

    /// Fine cells per coarse cell along one axis.
    pub fn ratio(&self) -> u64 {
        (self.coarse_cell / self.fine_cell)
            .round()
            .to_u64()
            .unwrap_or(1)
    }
}

/// One point of the frame-global table built from all fragments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TablePoint<T> {
    pub position: Vec3<T>,
    pub confidence: T,
    pub camera_id: u32,
    pub pixel: Pixel,
}

/// Concatenation of every fragment's points, in fragment order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointTable<T> {
    pub points: Vec<TablePoint<T>>,
}

impl<T: Real> PointTable<T> {
    pub fn from_fragments(fragments: &[PointFragment<T>]) -> Self {
        let mut points = Vec::with_capacity(fragments.iter().map(PointFragment::len).sum());
        for f in fragments {
            points.extend(f.points.iter().map(|p| TablePoint {
                position: p.position,
                confidence: p.confidence,
                camera_id: f.camera_id,
                pixel: p.pixel,
            }));
        }
        PointTable { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec3<T>> + '_ {
        self.points.iter().map(|p| p.position)
    }
}

/// Tight bounding box of `points`, grown by `padding` on every side.
pub fn compute_bounds<T: Real>(
    points: impl IntoIterator<Item = Vec3<T>>,
    padding: T,
) -> Result<Aabb<T>, GridError> {
    let mut it = points.into_iter();
    let first = it.next().ok_or(GridError::EmptyScene)?;
    let (lo, hi) = it.fold((first, first), |(lo, hi), p| (lo.min(p), hi.max(p)));
    let pad = Vec3::new(padding, padding, padding);
    Ok(Aabb {
        min: lo - pad,
        max: hi + pad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellLevel {
    Coarse,
    Fine,
}

/// Packed lattice coordinates: level in bit 63, then 21 bits each of x, y, z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey(pub u64);

impl CellKey {
    pub fn pack(level: CellLevel, x: u64, y: u64, z: u64) -> Self {
        debug_assert!(x <= AXIS_MASK && y <= AXIS_MASK && z <= AXIS_MASK);
        let lvl = if level == CellLevel::Fine {
            LEVEL_BIT
        } else {
            0
        };
        CellKey(lvl | (x << (2 * KEY_AXIS_BITS)) | (y << KEY_AXIS_BITS) | z)
    }

    pub fn level(self) -> CellLevel {
        if self.0 & LEVEL_BIT != 0 {
            CellLevel::Fine
        } else {
            CellLevel::Coarse
        }
    }

    pub fn coords(self) -> [u64; 3] {
        [
            (self.0 >> (2 * KEY_AXIS_BITS)) & AXIS_MASK,
            (self.0 >> KEY_AXIS_BITS) & AXIS_MASK,
            self.0 & AXIS_MASK,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub key: CellKey,
    /// Indices into the point table, ascending.
    pub points: Vec<u32>,
}

impl GridCell {
    pub fn level(&self) -> CellLevel {
        self.key.level()
    }
}

/// Leaf cells sorted by key.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveGrid<T> {
    pub bounds: Aabb<T>,
    pub params: GridParams<T>,
    pub cells: Vec<GridCell>,
    /// Coarse cells that were refined.
    pub refined_coarse_cells: usize,
}

impl<T: Real> AdaptiveGrid<T> {
    pub fn get(&self, key: CellKey) -> Option<&GridCell> {
        self.cells
            .binary_search_by_key(&key, |c| c.key)
            .ok()
            .map(|i| &self.cells[i])
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn point_count(&self) -> usize {
        self.cells.iter().map(|c| c.points.len()).sum()
    }
}

#[inline]
fn lattice<T: Real>(offset: T, cell: T) -> u64 {
    (offset / cell).floor().max(T::zero()).to_u64().unwrap_or(0)
}

struct Lattice<T> {
    min: Vec3<T>,
    coarse: T,
    fine: T,
    ratio: u64,
}

impl<T: Real> Lattice<T> {
    #[inline]
    fn coarse_coords(&self, p: Vec3<T>) -> [u64; 3] {
        let o = p - self.min;
        [
            lattice(o.x, self.coarse),
            lattice(o.y, self.coarse),
            lattice(o.z, self.coarse),
        ]
    }

    /// Fine coordinates nested inside the point's coarse cell, so rounding
    /// at a coarse boundary cannot push a point into a neighbor's sub-cells.
    #[inline]
    fn fine_coords(&self, p: Vec3<T>, coarse: [u64; 3]) -> [u64; 3] {
        let o = p - self.min;
        let mut out = [0u64; 3];
        for axis in 0..3 {
            let base = T::from_u64(coarse[axis]).expect("u64 fits scalar") * self.coarse;
            let sub = lattice(o[axis] - base, self.fine).min(self.ratio - 1);
            out[axis] = coarse[axis] * self.ratio + sub;
        }
        out
    }
}

/// Builds the adaptive grid: a linear bucketing pass over coarse cells, then
/// per-bucket subdivision.
pub fn build_grid<T: Real>(
    table: &PointTable<T>,
    params: &GridParams<T>,
) -> Result<AdaptiveGrid<T>, GridError> {
    let bounds = compute_bounds(table.positions(), params.fine_cell)?;
    build_grid_in(table, params, bounds)
}

/// Builds the grid over caller-supplied bounds, which must contain every point.
pub fn build_grid_in<T: Real>(
    table: &PointTable<T>,
    params: &GridParams<T>,
    bounds: Aabb<T>,
) -> Result<AdaptiveGrid<T>, GridError> {
    if table.is_empty() {
        return Err(GridError::EmptyScene);
    }
    let ratio = params.ratio().max(1);
    let extent = bounds.extent();
    for (axis, e) in ['x', 'y', 'z']
        .into_iter()
        .zip([extent.x, extent.y, extent.z])
    {
        let cells = lattice(e, params.fine_cell) + 1;
        if cells > AXIS_MASK {
            return Err(GridError::TooLarge {
                axis,
                extent_mm: e.to_f64_lossy(),
                cells,
            });
        }
    }
    let lat = Lattice {
        min: bounds.min,
        coarse: params.coarse_cell,
        fine: params.fine_cell,
        ratio,
    };

    let buckets = ratio.checked_pow(3).filter(|b| *b <= SUBCELL_TABLE_LIMIT);

    // Pass 1: coarse cell of every point, plus its sub-cell when dense buckets
    // can use the counting split; occupied coarse cells become buckets
    // numbered in first-seen order.
    let pass1: Vec<([u64; 3], u32)> = table
        .points
        .par_iter()
        .map(|p| {
            let c = lat.coarse_coords(p.position);
            let sub = if buckets.is_some() {
                let f = lat.fine_coords(p.position, c);
                let [x, y, z] = [0, 1, 2].map(|a| f[a] - c[a] * ratio);
                ((z * ratio + y) * ratio + x) as u32
            } else {
                0
            };
            (c, sub)
        })
        .collect();
    let coarse: Vec<[u64; 3]> = pass1.iter().map(|e| e.0).collect();
    let dims = [0, 1, 2].map(|a| lattice(extent[a], params.coarse_cell) + 1);
    let mut bucket_of = Vec::with_capacity(coarse.len());
    let mut bucket_coords: Vec<[u64; 3]> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut assign = |slot: &mut u32, c: [u64; 3]| {
        if *slot == u32::MAX {
            *slot = bucket_coords.len() as u32;
            bucket_coords.push(c);
            counts.push(0);
        }
        counts[*slot as usize] += 1;
        *slot
    };
    let lattice_size = dims.iter().try_fold(1u64, |acc, d| acc.checked_mul(*d));
    match lattice_size {
        // Small lattices index a flat slot table directly.
        Some(size) if size <= DENSE_LATTICE_LIMIT.max(2 * coarse.len() as u64) => {
            let mut slots = vec![u32::MAX; size as usize];
            for c in &coarse {
                let lin = c[0] + dims[0] * (c[1] + dims[1] * c[2]);
                bucket_of.push(assign(&mut slots[lin as usize], *c));
            }
        }
        _ => {
            let mut slots: HashMap<[u64; 3], u32> = HashMap::new();
            for c in &coarse {
                bucket_of.push(assign(slots.entry(*c).or_insert(u32::MAX), *c));
            }
        }
    }
    let refined_coarse_cells = counts
        .iter()
        .filter(|n| **n >= params.dense_threshold)
        .count();

    // Stable counting sort of point indices by bucket.
    let mut offsets = Vec::with_capacity(counts.len() + 1);
    offsets.push(0usize);
    for n in &counts {
        offsets.push(offsets.last().copied().unwrap_or(0) + n);
    }
    let mut cursor = offsets.clone();
    // Sub-cells travel with the indices so pass 2 reads contiguous memory.
    let mut order = vec![(0u32, 0u32); coarse.len()];
    for (i, b) in bucket_of.iter().enumerate() {
        order[cursor[*b as usize]] = (i as u32, pass1[i].1);
        cursor[*b as usize] += 1;
    }
    drop(pass1);

    // Pass 2: dense buckets split into fine leaves; sparse ones stay whole.
    let mut cells: Vec<GridCell> = (0..counts.len())
        .into_par_iter()
        .flat_map_iter(|b| {
            let members = &order[offsets[b]..offsets[b + 1]];
            let c = bucket_coords[b];
            if members.len() < params.dense_threshold {
                return vec![GridCell {
                    key: CellKey::pack(CellLevel::Coarse, c[0], c[1], c[2]),
                    points: members.iter().map(|m| m.0).collect(),
                }];
            }
            let sub = |i: u32| {
                let [x, y, z] = lat.fine_coords(table.points[i as usize].position, c);
                [x - c[0] * ratio, y - c[1] * ratio, z - c[2] * ratio]
            };
            let mut out: Vec<GridCell> = Vec::new();
            if let Some(buckets) = buckets {
                // Counting pass over the sub-cells; the final sort restores key order.
                let mut slots: Vec<Vec<u32>> = vec![Vec::new(); buckets as usize];
                for &(i, s) in members {
                    slots[s as usize].push(i);
                }
                for (lin, points) in slots.into_iter().enumerate() {
                    if points.is_empty() {
                        continue;
                    }
                    let lin = lin as u64;
                    let (x, y, z) = (lin % ratio, (lin / ratio) % ratio, lin / (ratio * ratio));
                    let key = CellKey::pack(
                        CellLevel::Fine,
                        c[0] * ratio + x,
                        c[1] * ratio + y,
                        c[2] * ratio + z,
                    );
                    out.push(GridCell { key, points });
                }
                return out;
            }
            let mut keyed: Vec<(CellKey, u32)> = members
                .iter()
                .map(|&(i, _)| {
                    let [x, y, z] = sub(i);
                    (
                        CellKey::pack(
                            CellLevel::Fine,
                            c[0] * ratio + x,
                            c[1] * ratio + y,
                            c[2] * ratio + z,
                        ),
                        i,
                    )
                })
                .collect();
            keyed.sort_unstable();
            for (key, idx) in keyed {
                match out.last_mut() {
                    Some(cell) if cell.key == key => cell.points.push(idx),
                    _ => out.push(GridCell {
                        key,
                        points: vec![idx],
                    }),
                }
            }
            out
        })
        .collect();
    cells.par_sort_unstable_by_key(|c| c.key);
    Ok(AdaptiveGrid {
        bounds,
        params: *params,
        cells,
        refined_coarse_cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Representative<T> {
    pub index: u32,
    pub confidence: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRepresentatives<T> {
    pub key: CellKey,
    /// Descending confidence, at most [`REPS_PER_CELL`] entries.
    pub reps: Vec<Representative<T>>,
}

/// Ranking used for representatives: higher confidence first, then lower
/// camera id, then earlier row-major pixel.
pub fn rank_points<T: Real>(a: &TablePoint<T>, b: &TablePoint<T>) -> Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(Ordering::Equal)
        .then(a.camera_id.cmp(&b.camera_id))
        .then(a.pixel.row_major_key().cmp(&b.pixel.row_major_key()))
}

/// Top points of one cell under [`rank_points`], without sorting the cell.
pub fn top_points<T: Real>(
    indices: &[u32],
    table: &PointTable<T>,
    k: usize,
) -> Vec<Representative<T>> {
    let mut best: Vec<u32> = Vec::with_capacity(k + 1);
    for &i in indices {
        let p = &table.points[i as usize];
        let pos = best
            .iter()
            .position(|&j| {
                rank_points(p, &table.points[j as usize]).then(i.cmp(&j)) == Ordering::Less
            })
            .unwrap_or(best.len());
        if pos < k {
            best.insert(pos, i);
            best.truncate(k);
        }
    }
    best.into_iter()
        .map(|i| Representative {
            index: i,
            confidence: table.points[i as usize].confidence,
        })
        .collect()
}

/// Same selection as [`top_points`] for a table already in (camera id,
/// row-major pixel) order, where the index alone breaks confidence ties.
/// Reads only the compact confidence array.
fn top_points_ordered<T: Real>(indices: &[u32], conf: &[T], k: usize) -> Vec<Representative<T>> {
    let mut best: Vec<(T, u32)> = Vec::with_capacity(k + 1);
    for &i in indices {
        let c = conf[i as usize];
        if best.len() == k && !(c > best[k - 1].0 || (c == best[k - 1].0 && i < best[k - 1].1)) {
            continue;
        }
        let pos = best
            .iter()
            .position(|&(bc, bi)| c > bc || (c == bc && i < bi))
            .unwrap_or(best.len());
        best.insert(pos, (c, i));
        best.truncate(k);
    }
    best.into_iter()
        .map(|(confidence, index)| Representative { index, confidence })
        .collect()
}

/// Up to three representatives per occupied leaf cell, in cell-key order.
pub fn select_representatives<T: Real>(
    grid: &AdaptiveGrid<T>,
    table: &PointTable<T>,
) -> Vec<CellRepresentatives<T>> {
    let ordered = table.points.windows(2).all(|w| {
        (w[0].camera_id, w[0].pixel.row_major_key()) < (w[1].camera_id, w[1].pixel.row_major_key())
    });
    let finite = table.points.iter().all(|p| p.confidence.is_finite());
    if ordered && finite {
        let conf: Vec<T> = table.points.iter().map(|p| p.confidence).collect();
        grid.cells
            .par_iter()
            .map(|cell| CellRepresentatives {
                key: cell.key,
                reps: top_points_ordered(&cell.points, &conf, REPS_PER_CELL),
            })
            .collect()
    } else {
        grid.cells
            .par_iter()
            .map(|cell| CellRepresentatives {
                key: cell.key,
                reps: top_points(&cell.points, table, REPS_PER_CELL),
            })
            .collect()
    }
}
