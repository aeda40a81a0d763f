use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::raster::{self, distance_transform, BinaryMask, Connectivity, DistanceField, Region};

/// Queue entry: `(distance², nearness to seed, row parity preference, arrival, label, y, x)`.
type Entry = (u64, Reverse<i64>, bool, Reverse<u64>, u32, usize, usize);

/// Partitions the foreground of `mask` among `seeds` by priority-flood
/// watershed on the negated distance transform.
///
/// Pixels are flooded from the highest distance down; at equal distance the
/// pixel nearer to its seed goes first. Foreground components no seed can
/// reach become regions of their own, so every foreground pixel lands in exactly one
/// region. With no seeds this degenerates to connected components.
pub fn watershed(mask: &BinaryMask, seeds: &[(usize, usize)]) -> Result<Vec<Region>> {
    let dist = distance_transform(mask);
    watershed_with_distance(mask, &dist, seeds)
}

pub(crate) fn watershed_with_distance(
    mask: &BinaryMask,
    dist: &DistanceField,
    seeds: &[(usize, usize)],
) -> Result<Vec<Region>> {
    let (w, h) = (mask.width(), mask.height());
    if w == 0 || h == 0 {
        return Ok(Vec::new());
    }
    if seeds.is_empty() {
        return raster::connected_components(mask, Connectivity::Eight);
    }
    for &(x, y) in seeds {
        if x >= w || y >= h || !mask.get(x, y) {
            return Err(Error::Domain(format!(
                "watershed seed ({x}, {y}) is not on the foreground"
            )));
        }
    }

    let mut labels = vec![0u32; w * h];
    // Highest distance first. Among equals the nearer seed wins; exact ties
    // alternate between labels row by row so a shared ridge splits evenly;
    // anything left is first in, first out.
    let mut heap: BinaryHeap<Entry> = BinaryHeap::new();
    let mut pushed = 0u64;
    let key = |label: u32, x: usize, y: usize| {
        let (sx, sy) = seeds[label as usize - 1];
        let d2 = (sx as i64 - x as i64).pow(2) + (sy as i64 - y as i64).pow(2);
        (Reverse(d2), (y + label as usize).is_multiple_of(2))
    };
    for (i, &(x, y)) in seeds.iter().enumerate() {
        let label = i as u32 + 1;
        let (near, alt) = key(label, x, y);
        heap.push((dist.squared(x, y), near, alt, Reverse(pushed), label, y, x));
        pushed += 1;
    }
    while let Some((_, _, _, _, label, y, x)) = heap.pop() {
        let idx = y * w + x;
        if labels[idx] != 0 {
            continue;
        }
        labels[idx] = label;
        for &(dx, dy) in Connectivity::Eight.offsets() {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            let j = ny * w + nx;
            if labels[j] == 0 && mask.bits()[j] {
                let (near, alt) = key(label, nx, ny);
                heap.push((dist.squared(nx, ny), near, alt, Reverse(pushed), label, ny, nx));
                pushed += 1;
            }
        }
    }

    let mut next = seeds.len() as u32;
    let leftover = BinaryMask::from_vec(
        w,
        h,
        mask.bits().iter().zip(&labels).map(|(&b, &l)| b && l == 0).collect(),
    )?;
    if leftover.count() > 0 {
        let (extra, _) = raster::label_components(&leftover, true, Connectivity::Eight);
        for (l, e) in labels.iter_mut().zip(extra) {
            if e > 0 {
                *l = next + e;
            }
        }
        next = labels.iter().copied().max().unwrap_or(next);
    }

    let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); next as usize];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            groups[l as usize - 1].push((i % w, i / w));
        }
    }
    groups
        .into_iter()
        .enumerate()
        .filter(|(_, px)| !px.is_empty())
        .map(|(i, px)| Region::from_pixels(i as u32 + 1, px))
        .collect()
}
