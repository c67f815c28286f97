//! Uniform-grid point index for exact nearest-neighbour queries in 2-D.

pub struct PointIndex<'a> {
    points: &'a [[f64; 2]],
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    /// bucket start offsets into `items`, length nx*ny + 1
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> PointIndex<'a> {
    pub fn new(points: &'a [[f64; 2]]) -> Self {
        let n = points.len().max(1);
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 2];
            hi = [1.0; 2];
        }
        let span = [(hi[0] - lo[0]).max(1e-9), (hi[1] - lo[1]).max(1e-9)];
        // about two points per cell
        let cell = ((span[0] * span[1]) / n as f64 * 2.0).sqrt().max(span[0].max(span[1]) / 2048.0).max(1e-9);
        let nx = ((span[0] / cell).floor() as usize + 1).max(1);
        let ny = ((span[1] / cell).floor() as usize + 1).max(1);
        let mut counts = vec![0usize; nx * ny + 1];
        let key = |p: &[f64; 2]| -> usize {
            let cx = (((p[0] - lo[0]) / cell).floor() as usize).min(nx - 1);
            let cy = (((p[1] - lo[1]) / cell).floor() as usize).min(ny - 1);
            cy * nx + cx
        };
        for p in points {
            counts[key(p) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut items = vec![0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let k = key(p);
            items[fill[k]] = i;
            fill[k] += 1;
        }
        Self { points, origin: lo, cell, nx, ny, starts, items }
    }

    fn cell_of(&self, p: [f64; 2]) -> (isize, isize) {
        (
            ((p[0] - self.origin[0]) / self.cell).floor() as isize,
            ((p[1] - self.origin[1]) / self.cell).floor() as isize,
        )
    }

    fn bucket(&self, cx: isize, cy: isize) -> &[usize] {
        if cx < 0 || cy < 0 || cx >= self.nx as isize || cy >= self.ny as isize {
            return &[];
        }
        let k = cy as usize * self.nx + cx as usize;
        &self.items[self.starts[k]..self.starts[k + 1]]
    }

    /// The `k` nearest points to `query` (excluding index `skip`), sorted by
    /// `(distance, index)`. Exact: rings of cells are searched until no
    /// unvisited cell can hold a closer point.
    pub fn nearest(&self, query: [f64; 2], k: usize, skip: Option<usize>) -> Vec<(f64, usize)> {
        let available = self.points.len() - usize::from(skip.is_some_and(|s| s < self.points.len()));
        let k = k.min(available);
        if k == 0 {
            return Vec::new();
        }
        let (qx, qy) = self.cell_of(query);
        // clamp query cell into grid range for ring distance bookkeeping
        let max_ring = (self.nx.max(self.ny) as isize) + qx.abs().max(qy.abs()) + 1;
        let mut found: Vec<(f64, usize)> = Vec::new();
        let mut ring = 0isize;
        loop {
            if ring == 0 {
                self.scan(qx, qy, query, skip, &mut found);
            } else {
                for dx in -ring..=ring {
                    self.scan(qx + dx, qy - ring, query, skip, &mut found);
                    self.scan(qx + dx, qy + ring, query, skip, &mut found);
                }
                for dy in (-ring + 1)..ring {
                    self.scan(qx - ring, qy + dy, query, skip, &mut found);
                    self.scan(qx + ring, qy + dy, query, skip, &mut found);
                }
            }
            if found.len() >= k {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                found.truncate(k);
                // any point outside the scanned block is at least ring*cell away
                if found[k - 1].0 <= ring as f64 * self.cell {
                    return found;
                }
            }
            ring += 1;
            if ring > max_ring {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                found.truncate(k);
                return found;
            }
        }
    }

    fn scan(&self, cx: isize, cy: isize, q: [f64; 2], skip: Option<usize>, out: &mut Vec<(f64, usize)>) {
        for &i in self.bucket(cx, cy) {
            if Some(i) == skip {
                continue;
            }
            let p = self.points[i];
            out.push((((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt(), i));
        }
    }

    /// All points within `radius` of `query` (inclusive), unsorted.
    pub fn within(&self, query: [f64; 2], radius: f64) -> Vec<usize> {
        let (qx, qy) = self.cell_of(query);
        let r = (radius / self.cell).ceil() as isize;
        let mut out = Vec::new();
        for cy in qy - r..=qy + r {
            for cx in qx - r..=qx + r {
                for &i in self.bucket(cx, cy) {
                    let p = self.points[i];
                    if (p[0] - query[0]).powi(2) + (p[1] - query[1]).powi(2) <= radius * radius {
                        out.push(i);
                    }
                }
            }
        }
        out
    }
}
