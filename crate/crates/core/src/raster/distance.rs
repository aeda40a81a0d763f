use super::{BinaryMask, GrayImage, ScalarField};

/// Exact Euclidean distance from each foreground pixel to the nearest
/// background pixel. Pixels outside the raster count as background.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    /// Squared distances; integers, exactly representable.
    sq: Vec<u64>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn squared(&self, x: usize, y: usize) -> u64 {
        self.sq[y * self.width + x]
    }

    pub fn squared_values(&self) -> &[u64] {
        &self.sq
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize) -> f64 {
        (self.squared(x, y) as f64).sqrt()
    }

    pub fn max(&self) -> f64 {
        (self.sq.iter().copied().max().unwrap_or(0) as f64).sqrt()
    }

    /// Unnormalized distances in pixels.
    pub fn field(&self) -> ScalarField {
        ScalarField::new(
            self.width,
            self.height,
            self.sq.iter().map(|&s| (s as f64).sqrt()).collect(),
        )
    }

    /// Distances divided by their maximum (all zeros when there is no foreground).
    pub fn normalized(&self) -> GrayImage {
        let max = self.max();
        let data = self
            .sq
            .iter()
            .map(|&s| {
                if max > 0.0 {
                    ((s as f64).sqrt() / max) as f32
                } else {
                    0.0
                }
            })
            .collect();
        GrayImage::from_vec(self.width, self.height, data).expect("values in [0, 1]")
    }
}

/// Separable exact squared Euclidean distance transform (lower envelope of
/// parabolas, one pass per axis) on the mask padded with a background frame.
pub fn distance_transform(mask: &BinaryMask) -> DistanceField {
    let (w, h) = (mask.width(), mask.height());
    if w == 0 || h == 0 {
        return DistanceField {
            width: w,
            height: h,
            sq: Vec::new(),
        };
    }
    let (pw, ph) = (w + 2, h + 2);
    let inf = ((pw * pw + ph * ph) as f64) * 4.0;
    let mut grid = vec![0.0f64; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                grid[(y + 1) * pw + x + 1] = inf;
            }
        }
    }
    let mut f = vec![0.0; pw.max(ph)];
    let mut out = vec![0.0; pw.max(ph)];
    let mut v = vec![0usize; pw.max(ph)];
    let mut z = vec![0.0; pw.max(ph) + 1];
    for x in 0..pw {
        for y in 0..ph {
            f[y] = grid[y * pw + x];
        }
        envelope_1d(&f[..ph], &mut out[..ph], &mut v, &mut z);
        for y in 0..ph {
            grid[y * pw + x] = out[y];
        }
    }
    for y in 0..ph {
        let row = &mut grid[y * pw..(y + 1) * pw];
        f[..pw].copy_from_slice(row);
        envelope_1d(&f[..pw], &mut out[..pw], &mut v, &mut z);
        row.copy_from_slice(&out[..pw]);
    }
    let mut sq = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            sq.push(grid[(y + 1) * pw + x + 1].round() as u64);
        }
    }
    DistanceField {
        width: w,
        height: h,
        sq,
    }
}

fn envelope_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        let intersect = |p: usize| (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
        let mut s = intersect(v[k]);
        // z[0] is -inf, so k never underflows
        while s <= z[k] {
            k -= 1;
            s = intersect(v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, dq) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dx = q as f64 - p as f64;
        *dq = dx * dx + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Nearest background pixel by exhaustive search over the padded raster.
    fn brute_force(mask: &BinaryMask) -> Vec<u64> {
        let (w, h) = (mask.width() as i64, mask.height() as i64);
        let mut bg = Vec::new();
        for y in -1..=h {
            for x in -1..=w {
                if !mask.get_signed(x, y) {
                    bg.push((x, y));
                }
            }
        }
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !mask.get_signed(x, y) {
                    out.push(0);
                    continue;
                }
                let best = bg
                    .iter()
                    .map(|&(bx, by)| ((bx - x).pow(2) + (by - y).pow(2)) as u64)
                    .min()
                    .unwrap();
                out.push(best);
            }
        }
        out
    }

    #[test]
    fn all_false_is_zero() {
        let d = distance_transform(&BinaryMask::new(7, 5));
        assert!(d.squared_values().iter().all(|&v| v == 0));
        assert!(d.normalized().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_is_one() {
        let d = distance_transform(&BinaryMask::from_pixels(5, 5, &[(2, 2)]));
        assert_eq!(d.value(2, 2), 1.0);
        assert_eq!(d.value(0, 0), 0.0);
    }

    #[test]
    fn full_raster_uses_border_as_background() {
        let d = distance_transform(&BinaryMask::from_fn(5, 5, |_, _| true));
        assert_eq!(d.value(0, 0), 1.0);
        assert_eq!(d.value(2, 2), 3.0);
    }

    #[test]
    fn centered_disc_peak_matches_radius_and_brute_force() {
        let r = 20.0;
        let m = BinaryMask::from_fn(64, 64, |x, y| {
            (x as f64 - 32.0).powi(2) + (y as f64 - 32.0).powi(2) <= r * r
        });
        let d = distance_transform(&m);
        assert_eq!(d.squared_values(), brute_force(&m).as_slice());
        assert!((d.max() - r).abs() <= 1.0, "{}", d.max());
        assert_eq!(d.max(), d.value(32, 32));
    }

    #[test]
    fn normalized_peaks_at_one() {
        let m = BinaryMask::from_fn(20, 10, |x, _| x > 3 && x < 15);
        let n = distance_transform(&m).normalized();
        let max = n.data().iter().cloned().fold(0.0f32, f32::max);
        assert_eq!(max, 1.0);
    }
}
