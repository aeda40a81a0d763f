use std::collections::VecDeque;

/// Unbounded row-major scalar field (distances, accumulators, intensities).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "field data length");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }
}

/// Sliding-window maximum with window `[i - radius, i + radius]` clipped to the slice.
fn max_filter_1d(src: &[f64], dst: &mut [f64], radius: usize) {
    let n = src.len();
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0usize;
    for (i, out) in dst.iter_mut().enumerate().take(n) {
        let hi = (i + radius).min(n - 1);
        while next <= hi {
            while dq.back().is_some_and(|&j| src[j] <= src[next]) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        let lo = i.saturating_sub(radius);
        while dq.front().is_some_and(|&j| j < lo) {
            dq.pop_front();
        }
        *out = src[*dq.front().expect("window non-empty")];
    }
}

fn max_filter(field: &ScalarField, radius: usize) -> Vec<f64> {
    let (w, h) = (field.width, field.height);
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        max_filter_1d(&field.data[y * w..(y + 1) * w], &mut tmp[y * w..(y + 1) * w], radius);
    }
    let mut col = vec![0.0; h];
    let mut out_col = vec![0.0; h];
    let mut out = vec![0.0; w * h];
    for x in 0..w {
        for y in 0..h {
            col[y] = tmp[y * w + x];
        }
        max_filter_1d(&col, &mut out_col, radius);
        for y in 0..h {
            out[y * w + x] = out_col[y];
        }
    }
    out
}

/// Local maxima of `field`.
///
/// A returned point is `>=` every value in its `(2·min_distance+1)²`
/// neighbourhood, has value `>= min_value`, and lies at Chebyshev distance
/// `>= min_distance` from every other returned point. Candidates are accepted
/// greedily by descending value, ties by `(y, x)`. A constant field has no
/// maxima. Output is sorted by `(y, x)`.
pub fn local_maxima(field: &ScalarField, min_distance: usize, min_value: f64) -> Vec<(usize, usize)> {
    let (w, h) = (field.width, field.height);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let min_distance = min_distance.max(1);
    let (lo, hi) = field
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo == hi {
        return Vec::new();
    }
    let dilated = max_filter(field, min_distance);
    let mut cands: Vec<(usize, usize)> = (0..w * h)
        .filter(|&i| field.data[i] >= min_value && field.data[i] == dilated[i])
        .map(|i| (i % w, i / w))
        .collect();
    cands.sort_by(|a, b| {
        field
            .get(b.0, b.1)
            .total_cmp(&field.get(a.0, a.1))
            .then((a.1, a.0).cmp(&(b.1, b.0)))
    });

    // bucket accepted points so each check only scans neighbouring cells
    let cell = min_distance;
    let (gw, gh) = (w.div_ceil(cell), h.div_ceil(cell));
    let mut grid: Vec<Vec<(usize, usize)>> = vec![Vec::new(); gw * gh];
    let mut kept = Vec::new();
    for (x, y) in cands {
        let (gx, gy) = (x / cell, y / cell);
        let clash = (gy.saturating_sub(1)..=(gy + 1).min(gh - 1)).any(|cy| {
            (gx.saturating_sub(1)..=(gx + 1).min(gw - 1)).any(|cx| {
                grid[cy * gw + cx]
                    .iter()
                    .any(|&(px, py)| px.abs_diff(x).max(py.abs_diff(y)) < min_distance)
            })
        });
        if !clash {
            grid[gy * gw + gx].push((x, y));
            kept.push((x, y));
        }
    }
    kept.sort_by_key(|&(x, y)| (y, x));
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bumps(w: usize, h: usize, centers: &[(f64, f64)], sigma: f64) -> ScalarField {
        ScalarField::from_fn(w, h, |x, y| {
            centers
                .iter()
                .map(|&(cx, cy)| {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    (-d2 / (2.0 * sigma * sigma)).exp()
                })
                .sum()
        })
    }

    /// Points that dominate their full window, found by exhaustive scan.
    fn window_maxima(f: &ScalarField, d: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..f.height() {
            for x in 0..f.width() {
                let v = f.get(x, y);
                let mut ok = true;
                for yy in y.saturating_sub(d)..=(y + d).min(f.height() - 1) {
                    for xx in x.saturating_sub(d)..=(x + d).min(f.width() - 1) {
                        if f.get(xx, yy) > v {
                            ok = false;
                        }
                    }
                }
                if ok {
                    out.push((x, y));
                }
            }
        }
        out
    }

    #[test]
    fn constant_zero_field_is_empty() {
        let f = ScalarField::from_fn(10, 10, |_, _| 0.0);
        assert!(local_maxima(&f, 3, 0.0).is_empty());
    }

    #[test]
    fn two_gaussian_bumps() {
        let f = bumps(80, 40, &[(20.0, 20.0), (50.0, 20.0)], 5.0);
        let oracle = window_maxima(&f, 10);
        let m = local_maxima(&f, 10, 0.0);
        assert_eq!(m, oracle);
        assert_eq!(m, vec![(20, 20), (50, 20)]);
    }

    #[test]
    fn huge_min_distance_gives_single_peak() {
        let f = bumps(30, 20, &[(11.0, 7.0)], 4.0);
        assert_eq!(local_maxima(&f, 500, 0.0), vec![(11, 7)]);
    }

    #[test]
    fn plateau_keeps_first_in_raster_order() {
        let f = ScalarField::from_fn(10, 10, |x, y| {
            if (3..6).contains(&x) && (4..6).contains(&y) {
                1.0
            } else {
                0.0
            }
        });
        assert_eq!(local_maxima(&f, 3, 0.5), vec![(3, 4)]);
    }

    #[test]
    fn min_value_filters() {
        let f = bumps(40, 40, &[(20.0, 20.0)], 4.0);
        assert!(local_maxima(&f, 2, 1.5).is_empty());
    }

    #[test]
    fn max_filter_matches_naive() {
        let src = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let mut dst = [0.0; 8];
        max_filter_1d(&src, &mut dst, 2);
        let naive: Vec<f64> = (0..8)
            .map(|i: usize| {
                src[i.saturating_sub(2)..=(i + 2).min(7)]
                    .iter()
                    .cloned()
                    .fold(f64::MIN, f64::max)
            })
            .collect();
        assert_eq!(dst.to_vec(), naive);
    }
}
