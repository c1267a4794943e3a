//! Exact nearest-neighbour queries.
//!
//! Both structures return the lexicographically smallest `(squared distance,
//! index)` pair, so results are identical to a brute-force scan in index
//! order that keeps the first minimum. Squared distances are computed as
//! `sum_i (q_i - p_i)^2` in axis order.

/// Tool placements in path order, grouped into fixed runs with bounding boxes.
///
/// Consecutive placements of a sweep are spatially coherent, so run bounds
/// prune most of the scan.
#[derive(Clone, Debug)]
pub struct SampleIndex {
    xs: Vec<f64>,
    ys: Vec<f64>,
    runs: Vec<Run>,
}

#[derive(Clone, Copy, Debug)]
struct Run {
    lo: [f64; 2],
    hi: [f64; 2],
    start: usize,
    end: usize,
}

const RUN: usize = 8;

impl SampleIndex {
    pub fn new(points: &[[f64; 2]]) -> Self {
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        let runs = (0..points.len())
            .step_by(RUN)
            .map(|start| {
                let end = (start + RUN).min(points.len());
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for p in &points[start..end] {
                    for a in 0..2 {
                        lo[a] = lo[a].min(p[a]);
                        hi[a] = hi[a].max(p[a]);
                    }
                }
                Run { lo, hi, start, end }
            })
            .collect();
        Self { xs, ys, runs }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn point(&self, j: usize) -> [f64; 2] {
        [self.xs[j], self.ys[j]]
    }

    /// Squared distance to the nearest placement and its index.
    ///
    /// Returns `(INFINITY, usize::MAX)` for an empty index.
    pub fn nearest(&self, q: [f64; 2]) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        if self.runs.is_empty() {
            return best;
        }
        if self.runs.len() == 1 {
            self.scan(self.runs[0], q, &mut best);
            return best;
        }
        // Start from the run with the smallest bound, then visit the rest in
        // order. A run whose bound exceeds the incumbent cannot contain a
        // closer point, and bound == incumbent may still hold a lower index.
        let mut first = 0;
        let mut first_bound = f64::INFINITY;
        for (i, r) in self.runs.iter().enumerate() {
            let b = run_bound(r, q);
            if b < first_bound {
                first_bound = b;
                first = i;
            }
        }
        self.scan(self.runs[first], q, &mut best);
        for (i, r) in self.runs.iter().enumerate() {
            if i == first || run_bound(r, q) > best.0 {
                continue;
            }
            self.scan(*r, q, &mut best);
        }
        best
    }

    #[inline]
    fn scan(&self, r: Run, q: [f64; 2], best: &mut (f64, usize)) {
        for j in r.start..r.end {
            let dx = q[0] - self.xs[j];
            let dy = q[1] - self.ys[j];
            let d2 = dx * dx + dy * dy;
            if d2 < best.0 || (d2 == best.0 && j < best.1) {
                *best = (d2, j);
            }
        }
    }
}

/// Lower bound on the squared distance from `q` to any point of the run.
///
/// Each axis gap is a difference of the same operands that the exact distance
/// would use after rounding, and rounding is monotone, so the bound never
/// exceeds a computed distance.
#[inline]
fn run_bound(r: &Run, q: [f64; 2]) -> f64 {
    let mut s = 0.0;
    for a in 0..2 {
        let g = if q[a] < r.lo[a] {
            r.lo[a] - q[a]
        } else if q[a] > r.hi[a] {
            q[a] - r.hi[a]
        } else {
            0.0
        };
        s += g * g;
    }
    s
}

/// Uniform bucket grid over a fixed point set in `D` dimensions.
///
/// The grid covers the points and any extra `cover` locations given at
/// construction. Queries inside that region stop as soon as no unvisited cell
/// can beat the incumbent; queries outside it fall back to visiting every
/// ring, which stays exact.
#[derive(Clone, Debug)]
pub struct PointGrid<const D: usize> {
    points: Vec<[f64; D]>,
    origin: [f64; D],
    upper: [f64; D],
    cell: f64,
    dims: [usize; D],
    cell_start: Vec<u32>,
    order: Vec<u32>,
}

const MAX_CELLS_PER_AXIS: usize = 1024;

impl<const D: usize> PointGrid<D> {
    pub fn new(points: &[[f64; D]], cover: &[[f64; D]]) -> Self {
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for p in points.iter().chain(cover) {
            for a in 0..D {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if points.is_empty() && cover.is_empty() {
            lo = [0.0; D];
            hi = [0.0; D];
        }
        let span: Vec<f64> = (0..D).map(|a| hi[a] - lo[a]).collect();
        let widest = span.iter().cloned().fold(0.0, f64::max);
        let floor = if widest > 0.0 { widest * 1e-6 } else { 1.0 };
        let volume: f64 = span.iter().map(|s| s.max(floor)).product();
        let n = points.len().max(1) as f64;
        let mut cell = (volume / n).powf(1.0 / D as f64).max(floor);
        if !(cell.is_finite() && cell > 0.0) {
            cell = 1.0;
        }
        let mut dims = [1usize; D];
        let mut total = 1usize;
        for a in 0..D {
            let c = ((span[a] / cell).floor() as usize + 1).min(MAX_CELLS_PER_AXIS);
            dims[a] = c;
            total = total.saturating_mul(c);
        }
        // cell size may need to grow when an axis hit the cap
        for a in 0..D {
            if dims[a] == MAX_CELLS_PER_AXIS {
                cell = cell.max(span[a] / (MAX_CELLS_PER_AXIS - 1) as f64);
            }
        }
        let mut grid = Self {
            points: points.to_vec(),
            origin: lo,
            upper: hi,
            cell,
            dims,
            cell_start: Vec::new(),
            order: Vec::new(),
        };
        let mut counts = vec![0u32; total + 1];
        let keys: Vec<usize> = points.iter().map(|p| grid.key(grid.cell_of(*p))).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..total {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        grid.cell_start = counts;
        grid.order = order;
        grid
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; D] {
        self.points[i]
    }

    fn cell_of(&self, p: [f64; D]) -> [usize; D] {
        let mut c = [0usize; D];
        for a in 0..D {
            let f = ((p[a] - self.origin[a]) / self.cell).floor();
            c[a] = if f.is_nan() || f < 0.0 {
                0
            } else {
                (f as usize).min(self.dims[a] - 1)
            };
        }
        c
    }

    fn key(&self, c: [usize; D]) -> usize {
        let mut k = 0;
        for a in (0..D).rev() {
            k = k * self.dims[a] + c[a];
        }
        k
    }

    /// Squared distance to the nearest stored point and its index.
    ///
    /// Returns `(INFINITY, usize::MAX)` for an empty grid.
    pub fn nearest(&self, q: [f64; D]) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        if self.points.is_empty() {
            return best;
        }
        let inside = (0..D).all(|a| q[a] >= self.origin[a] && q[a] <= self.upper[a]);
        let c = self.cell_of(q);
        let max_ring = (0..D)
            .map(|a| c[a].max(self.dims[a] - 1 - c[a]))
            .max()
            .unwrap_or(0);
        for ring in 0..=max_ring {
            self.visit_ring(c, ring, q, &mut best);
            if inside && best.1 != usize::MAX {
                // unvisited cells are at least `ring` whole cells away on some axis
                let gap = ring as f64 * self.cell;
                if best.0 < gap * gap * (1.0 - 1e-9) {
                    break;
                }
            }
        }
        best
    }

    fn visit_ring(&self, c: [usize; D], ring: usize, q: [f64; D], best: &mut (f64, usize)) {
        let r = ring as isize;
        let mut lo = [0isize; D];
        let mut hi = [0isize; D];
        for a in 0..D {
            lo[a] = (c[a] as isize - r).max(0);
            hi[a] = (c[a] as isize + r).min(self.dims[a] as isize - 1);
        }
        let mut cur = lo;
        loop {
            let on_shell = (0..D).any(|a| (cur[a] - c[a] as isize).abs() == r);
            if on_shell {
                let mut cell = [0usize; D];
                for a in 0..D {
                    cell[a] = cur[a] as usize;
                }
                let k = self.key(cell);
                let (s, e) = (self.cell_start[k] as usize, self.cell_start[k + 1] as usize);
                for &i in &self.order[s..e] {
                    let i = i as usize;
                    let p = &self.points[i];
                    let mut d2 = 0.0;
                    for a in 0..D {
                        let d = q[a] - p[a];
                        d2 += d * d;
                    }
                    if d2 < best.0 || (d2 == best.0 && i < best.1) {
                        *best = (d2, i);
                    }
                }
            }
            // odometer increment
            let mut a = 0;
            loop {
                if a == D {
                    return;
                }
                if cur[a] < hi[a] {
                    cur[a] += 1;
                    break;
                }
                cur[a] = lo[a];
                a += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute<const D: usize>(pts: &[[f64; D]], q: [f64; D]) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, p) in pts.iter().enumerate() {
            let mut d2 = 0.0;
            for a in 0..D {
                let d = q[a] - p[a];
                d2 += d * d;
            }
            if d2 < best.0 {
                best = (d2, i);
            }
        }
        best
    }

    #[test]
    fn empty_structures() {
        assert_eq!(SampleIndex::new(&[]).nearest([0.0, 0.0]).1, usize::MAX);
        assert_eq!(PointGrid::<3>::new(&[], &[]).nearest([0.0; 3]).1, usize::MAX);
    }

    #[test]
    fn duplicate_points_resolve_to_lowest_index() {
        let pts = vec![[0.5, 0.5]; 30];
        assert_eq!(SampleIndex::new(&pts).nearest([0.0, 0.0]).1, 0);
        assert_eq!(PointGrid::new(&pts, &[]).nearest([0.0, 0.0]).1, 0);
    }

    #[test]
    fn query_outside_cover_is_still_exact() {
        let pts: Vec<[f64; 2]> = (0..50).map(|i| [i as f64 * 0.01, (i % 7) as f64 * 0.02]).collect();
        let g = PointGrid::new(&pts, &[]);
        for q in [[5.0, 5.0], [-3.0, 0.1], [0.2, -9.0]] {
            assert_eq!(g.nearest(q), brute(&pts, q));
        }
    }

    proptest! {
        #[test]
        fn sample_index_matches_brute_force(
            pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..120),
            qs in prop::collection::vec((-1.5..1.5f64, -1.5..1.5f64), 1..20),
        ) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
            let idx = SampleIndex::new(&pts);
            for (x, y) in qs {
                prop_assert_eq!(idx.nearest([x, y]), brute(&pts, [x, y]));
            }
        }

        #[test]
        fn point_grid_matches_brute_force_3d(
            pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -0.01..0.01f64), 1..200),
            qs in prop::collection::vec((-1.5..1.5f64, -1.5..1.5f64, -1.0..1.0f64), 1..20),
        ) {
            let pts: Vec<[f64; 3]> = pts.into_iter().map(|(x, y, z)| [x, y, z]).collect();
            let qs: Vec<[f64; 3]> = qs.into_iter().map(|(x, y, z)| [x, y, z]).collect();
            let g = PointGrid::new(&pts, &qs);
            for q in qs {
                prop_assert_eq!(g.nearest(q), brute(&pts, q));
            }
        }

        #[test]
        fn point_grid_matches_brute_force_on_lattice(
            n in 1usize..12, qs in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..20),
        ) {
            // lattice points produce many exact ties
            let pts: Vec<[f64; 2]> = (0..n * n)
                .map(|i| [(i % n) as f64 / n as f64, (i / n) as f64 / n as f64])
                .collect();
            let qs: Vec<[f64; 2]> = qs.into_iter().map(|(x, y)| [x, y]).collect();
            let g = PointGrid::new(&pts, &qs);
            for q in qs.iter().chain(pts.iter()) {
                prop_assert_eq!(g.nearest(*q), brute(&pts, *q));
            }
        }
    }
}
