//! Nearest-point queries against a target point cloud or triangle mesh on a
//! uniform grid. Equal distances resolve to the lower target index.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::Mesh;

/// A registration target for one frame.
#[derive(Debug, Clone)]
pub enum Target {
    Mesh(Mesh),
    Points(Vec<Vec3>),
}

impl Target {
    pub fn points(&self) -> &[Vec3] {
        match self {
            Target::Mesh(m) => m.vertices(),
            Target::Points(p) => p,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Target::Mesh(m) => m.triangle_count() == 0,
            Target::Points(p) => p.is_empty(),
        }
    }
}

/// Closest point on triangle `abc` to `p`.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Uniform grid over item bounding boxes.
#[derive(Debug, Clone)]
struct Grid {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl Grid {
    fn build(boxes: &[(Vec3, Vec3)]) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for (a, b) in boxes {
            lo = lo.inf(a);
            hi = hi.sup(b);
        }
        let extent = (hi - lo).map(|e| e.max(0.0));
        let diag = extent.norm().max(1e-9);
        let n = boxes.len().max(1) as f64;
        // Items usually lie on a surface, so size cells from the items
        // themselves, then coarsen until the cell count stays near 8n.
        let mean_size = boxes.iter().map(|(a, b)| (b - a).max()).sum::<f64>() / n;
        let mut cell = if mean_size > 0.0 { 2.0 * mean_size } else { diag / n.sqrt() }.max(diag * 1e-3);
        let cells_for = |cell: f64| (0..3).map(|k| (extent[k] / cell).floor() + 1.0).product::<f64>();
        while cells_for(cell) > 8.0 * n + 64.0 {
            cell *= 1.25;
        }
        let dims = [0, 1, 2].map(|k| (extent[k] / cell).floor() as usize + 1);
        let mut grid = Self {
            origin: lo,
            cell,
            dims,
            cells: vec![Vec::new(); dims[0] * dims[1] * dims[2]],
        };
        for (i, (a, b)) in boxes.iter().enumerate() {
            let ca = grid.coord(a);
            let cb = grid.coord(b);
            for z in ca[2]..=cb[2] {
                for y in ca[1]..=cb[1] {
                    for x in ca[0]..=cb[0] {
                        let idx = grid.index([x, y, z]);
                        grid.cells[idx].push(i as u32);
                    }
                }
            }
        }
        grid
    }

    fn coord(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            let c = ((p[k] - self.origin[k]) / self.cell).floor();
            (c.max(0.0) as usize).min(self.dims[k] - 1)
        })
    }

    fn index(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Lower bound on the distance from `p` to anything outside the block
    /// of cells within Chebyshev radius `k` of `p`'s cell.
    fn shell_bound(&self, p: &Vec3, c: [usize; 3], k: usize) -> f64 {
        let mut bound = f64::INFINITY;
        for axis in 0..3 {
            let lo_cell = c[axis] as f64 - k as f64;
            let hi_cell = c[axis] as f64 + k as f64 + 1.0;
            if lo_cell > 0.0 {
                bound = bound.min(p[axis] - (self.origin[axis] + lo_cell * self.cell));
            }
            if (hi_cell as usize) < self.dims[axis] {
                bound = bound.min(self.origin[axis] + hi_cell * self.cell - p[axis]);
            }
        }
        bound.max(0.0)
    }

    /// Visits items in cells at Chebyshev distance exactly `k`; returns
    /// false when the shell lies entirely outside the grid.
    fn visit_shell(&self, c: [usize; 3], k: usize, mut f: impl FnMut(u32)) -> bool {
        let k = k as isize;
        let mut any = false;
        let range = |axis: usize| {
            let lo = (c[axis] as isize - k).max(0);
            let hi = (c[axis] as isize + k).min(self.dims[axis] as isize - 1);
            lo..=hi
        };
        for z in range(2) {
            for y in range(1) {
                for x in range(0) {
                    let d = (x - c[0] as isize)
                        .abs()
                        .max((y - c[1] as isize).abs())
                        .max((z - c[2] as isize).abs());
                    if d != k {
                        continue;
                    }
                    any = true;
                    for &i in &self.cells[self.index([x as usize, y as usize, z as usize])] {
                        f(i);
                    }
                }
            }
        }
        any
    }
}

/// Nearest-point structure over a [`Target`].
#[derive(Debug, Clone)]
pub struct NearestIndex {
    target: Target,
    grid: Grid,
    boxes: Vec<(Vec3, Vec3)>,
}

/// Result of a query: the closest point, the target item it lies on (point
/// or triangle index) and the distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub point: Vec3,
    pub item: usize,
    pub distance: f64,
}

impl NearestIndex {
    pub fn new(target: Target) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::DegenerateInput("empty registration target".into()));
        }
        let boxes: Vec<(Vec3, Vec3)> = match &target {
            Target::Points(p) => p.iter().map(|q| (*q, *q)).collect(),
            Target::Mesh(m) => (0..m.triangle_count())
                .map(|t| {
                    let [a, b, c] = m.triangle_points(t);
                    (a.inf(&b).inf(&c), a.sup(&b).sup(&c))
                })
                .collect(),
        };
        let grid = Grid::build(&boxes);
        Ok(Self { target, grid, boxes })
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    fn candidate(&self, p: &Vec3, i: usize) -> Vec3 {
        match &self.target {
            Target::Points(pts) => pts[i],
            Target::Mesh(m) => {
                let [a, b, c] = m.triangle_points(i);
                closest_point_on_triangle(p, &a, &b, &c)
            }
        }
    }

    pub fn nearest(&self, p: &Vec3) -> Hit {
        let c = self.grid.coord(p);
        let mut best = Hit {
            point: Vec3::zeros(),
            item: usize::MAX,
            distance: f64::INFINITY,
        };
        let mut k = 0;
        loop {
            let any = self.grid.visit_shell(c, k, |i| {
                let i = i as usize;
                let (lo, hi) = &self.boxes[i];
                let gap = (lo - p).sup(&(p - hi)).sup(&Vec3::zeros());
                if gap.norm() > best.distance {
                    return;
                }
                let q = self.candidate(p, i);
                let d = (q - p).norm();
                if d < best.distance || (d == best.distance && i < best.item) {
                    best = Hit {
                        point: q,
                        item: i,
                        distance: d,
                    };
                }
            });
            // Items in later shells are at least this far away; equality
            // still needs a look for the index tie rule.
            if best.distance < self.grid.shell_bound(p, c, k) || !any && k > self.grid.dims.iter().max().copied().unwrap_or(0) {
                break;
            }
            k += 1;
        }
        best
    }
}
