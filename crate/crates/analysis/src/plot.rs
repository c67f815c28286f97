//! Minimal deterministic raster plots, encoded as PNG bytes.

use crate::neighbors::Histogram;

const PALETTE: [[u8; 3]; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
];
const ANOMALY: [u8; 3] = [214, 39, 40];
const EDGE: [u8; 3] = [200, 200, 200];
const AXIS: [u8; 3] = [40, 40, 40];

pub fn color(label: usize) -> [u8; 3] {
    PALETTE[label % PALETTE.len()]
}

pub struct Canvas {
    pub width: usize,
    pub height: usize,
    rgb: Vec<u8>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, background: [u8; 3]) -> Self {
        let rgb = background.iter().cycle().take(width * height * 3).cloned().collect();
        Self { width, height, rgb }
    }

    pub fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = (y as usize * self.width + x as usize) * 3;
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    pub fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: [u8; 3]) {
        for y in y0.min(y1)..=y0.max(y1) {
            for x in x0.min(x1)..=x0.max(x1) {
                self.set(x, y, c);
            }
        }
    }

    pub fn disc(&mut self, cx: f64, cy: f64, r: f64, c: [u8; 3]) {
        let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
        let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                    self.set(x, y, c);
                }
            }
        }
    }

    pub fn line(&mut self, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.set(x0, y0, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().expect("in-memory PNG header");
            w.write_image_data(&self.rgb).expect("in-memory PNG data");
        }
        out
    }
}

const W: usize = 480;
const H: usize = 320;
const PAD: i64 = 30;

fn frame(c: &mut Canvas) {
    let (w, h) = (c.width as i64, c.height as i64);
    c.line((PAD, h - PAD), (w - PAD / 2, h - PAD), AXIS);
    c.line((PAD, h - PAD), (PAD, PAD / 2), AXIS);
}

/// Bar chart of a histogram.
pub fn histogram_png(hist: &Histogram) -> Vec<u8> {
    let mut c = Canvas::new(W, H, [255; 3]);
    let n = hist.counts.len().max(1) as i64;
    let top = hist.counts.iter().cloned().max().unwrap_or(0).max(1) as f64;
    let plot_w = W as i64 - PAD - PAD / 2;
    let plot_h = (H as i64 - PAD - PAD / 2) as f64;
    for (i, &count) in hist.counts.iter().enumerate() {
        let x0 = PAD + 1 + i as i64 * plot_w / n;
        let x1 = (PAD + (i as i64 + 1) * plot_w / n - 1).max(x0);
        let bar = (count as f64 / top * plot_h).round() as i64;
        if bar > 0 {
            c.fill_rect(x0, H as i64 - PAD - bar, x1, H as i64 - PAD - 1, PALETTE[0]);
        }
    }
    frame(&mut c);
    c.to_png()
}

/// Histogram of `values` with bars stacked by class label.
pub fn class_histogram_png(values: &[f64], labels: &[usize], bins: usize) -> Vec<u8> {
    let mut c = Canvas::new(W, H, [255; 3]);
    let bins = bins.max(1);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    let mut counts = vec![vec![0usize; classes]; bins];
    for (v, &l) in values.iter().zip(labels) {
        let b = (((v - lo) / span * bins as f64) as usize).min(bins - 1);
        counts[b][l] += 1;
    }
    let top = counts.iter().map(|b| b.iter().sum::<usize>()).max().unwrap_or(0).max(1) as f64;
    let plot_w = W as i64 - PAD - PAD / 2;
    let plot_h = (H as i64 - PAD - PAD / 2) as f64;
    for (i, b) in counts.iter().enumerate() {
        let x0 = PAD + 1 + i as i64 * plot_w / bins as i64;
        let x1 = (PAD + (i as i64 + 1) * plot_w / bins as i64 - 1).max(x0);
        let mut base = 0usize;
        for (l, &n) in b.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let y0 = (base as f64 / top * plot_h).round() as i64;
            let y1 = ((base + n) as f64 / top * plot_h).round() as i64;
            if y1 > y0 {
                c.fill_rect(x0, H as i64 - PAD - y1, x1, H as i64 - PAD - y0 - 1, color(l));
            }
            base += n;
        }
    }
    frame(&mut c);
    c.to_png()
}

/// Atom positions on an image-sized canvas (scaled to at most 512 px), coloured by
/// label; anomalous atoms are red and unlabelled (edge) atoms grey.
pub fn atom_map_png(width: usize, height: usize, positions: &[[f64; 2]], labels: &[Option<usize>], anomalies: &[bool]) -> Vec<u8> {
    let scale = (512.0 / width.max(height).max(1) as f64).min(1.0);
    let (cw, ch) = (((width as f64 * scale).ceil() as usize).max(1), ((height as f64 * scale).ceil() as usize).max(1));
    let mut c = Canvas::new(cw, ch, [255; 3]);
    let r = (1.5f64).max(2.0 * scale);
    for (i, p) in positions.iter().enumerate() {
        let col = if anomalies.get(i).copied().unwrap_or(false) {
            ANOMALY
        } else {
            labels.get(i).copied().flatten().map_or(EDGE, color)
        };
        c.disc(p[0] * scale, p[1] * scale, r, col);
    }
    c.to_png()
}

/// Label grid drawn as coloured blocks of `cell` pixels.
pub fn label_map_png(gx: usize, gy: usize, labels: &[usize], cell: usize) -> Vec<u8> {
    let cell = cell.max(1) as i64;
    let mut c = Canvas::new(gx * cell as usize, gy * cell as usize, [255; 3]);
    for y in 0..gy {
        for x in 0..gx {
            let (x0, y0) = (x as i64 * cell, y as i64 * cell);
            c.fill_rect(x0, y0, x0 + cell - 1, y0 + cell - 1, color(labels[y * gx + x]));
        }
    }
    c.to_png()
}

/// Grey-scale rendering of a scalar field, min-max scaled.
pub fn heatmap_png(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut c = Canvas::new(width, height, [0; 3]);
    for y in 0..height {
        for x in 0..width {
            let g = (((values[y * width + x] - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8;
            c.set(x as i64, y as i64, [g; 3]);
        }
    }
    c.to_png()
}

/// Overlaid line plots sharing axes.
pub fn line_plot_png(series: &[(&[f64], &[f64])]) -> Vec<u8> {
    let mut c = Canvas::new(W, H, [255; 3]);
    let all_x = series.iter().flat_map(|s| s.0.iter().cloned());
    let all_y = series.iter().flat_map(|s| s.1.iter().cloned());
    let (xl, xh) = all_x.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (yl, yh) = all_y.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let sx = if xh > xl { xh - xl } else { 1.0 };
    let sy = if yh > yl { yh - yl } else { 1.0 };
    let plot_w = (W as i64 - PAD - PAD / 2) as f64;
    let plot_h = (H as i64 - PAD - PAD / 2) as f64;
    let map = |x: f64, y: f64| -> (i64, i64) {
        (PAD + ((x - xl) / sx * plot_w).round() as i64, H as i64 - PAD - ((y - yl) / sy * plot_h).round() as i64)
    };
    for (k, (xs, ys)) in series.iter().enumerate() {
        let pts: Vec<(i64, i64)> = xs.iter().zip(ys.iter()).map(|(x, y)| map(*x, *y)).collect();
        for pair in pts.windows(2) {
            c.line(pair[0], pair[1], color(k));
        }
    }
    frame(&mut c);
    c.to_png()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decode(bytes: &[u8]) -> (u32, u32) {
        let d = png::Decoder::new(std::io::Cursor::new(bytes));
        let r = d.read_info().unwrap();
        (r.info().width, r.info().height)
    }

    #[test]
    fn plots_are_valid_and_deterministic() {
        let h = Histogram { start: 0.0, bin_width: 1.0, counts: vec![1, 5, 3] };
        let a = histogram_png(&h);
        assert_eq!(a, histogram_png(&h));
        assert_eq!(decode(&a), (W as u32, H as u32));
        assert_eq!(decode(&label_map_png(3, 2, &[0, 1, 0, 1, 1, 0], 8)), (24, 16));
        assert_eq!(decode(&heatmap_png(4, 4, &[0.5; 16])), (4, 4));
        let x = [0.0, 1.0, 2.0];
        assert_eq!(decode(&line_plot_png(&[(&x, &[1.0, 3.0, 2.0])])), (W as u32, H as u32));
        let m = atom_map_png(1024, 1024, &[[10.0, 10.0]], &[Some(0)], &[true]);
        assert_eq!(decode(&m), (512, 512));
        assert_eq!(decode(&class_histogram_png(&[0.1, 0.9, 0.5], &[0, 1, 1], 10)), (W as u32, H as u32));
    }
}
