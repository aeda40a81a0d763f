use std::collections::VecDeque;

use super::{BinaryMask, Region};
use crate::error::Result;

/// Pixel adjacency used when grouping pixels into components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub(crate) fn offsets(self) -> &'static [(i64, i64)] {
        const FOUR: [(i64, i64); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

/// Labels pixels equal to `value` into components numbered from 1 in raster
/// order of their first pixel. Returns the label raster (0 elsewhere) and the
/// number of components.
pub fn label_components(mask: &BinaryMask, value: bool, conn: Connectivity) -> (Vec<u32>, u32) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if mask.bits()[start] != value || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for &(dx, dy) in conn.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.bits()[j] == value && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    (labels, next)
}

/// Maximal connected foreground regions, ordered by their first pixel in
/// raster order, with all geometry populated.
pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> Result<Vec<Region>> {
    mask.check_nonempty()?;
    let (labels, n) = label_components(mask, true, conn);
    let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n as usize];
    let w = mask.width();
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            groups[l as usize - 1].push((i % w, i / w));
        }
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(i, px)| Region::from_pixels(i as u32 + 1, px))
        .collect()
}

/// Sets every background pixel that cannot reach the raster border
/// (4-connected background) to foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let (labels, n) = label_components(mask, false, Connectivity::Four);
    let mut touches = vec![false; n as usize + 1];
    for x in 0..w {
        touches[labels[x] as usize] = true;
        touches[labels[(h - 1) * w + x] as usize] = true;
    }
    for y in 0..h {
        touches[labels[y * w] as usize] = true;
        touches[labels[y * w + w - 1] as usize] = true;
    }
    let bits = mask
        .bits()
        .iter()
        .zip(&labels)
        .map(|(&b, &l)| b || !touches[l as usize])
        .collect();
    BinaryMask::from_vec(w, h, bits).expect("same dimensions")
}
