/// Normalized 1-D Gaussian kernel truncated at 4 sigma.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n - 2;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Separable Gaussian blur with mirror boundary handling.
pub fn gaussian_blur(values: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        let out = &mut tmp[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (t, w) in k.iter().enumerate() {
                acc += w * row[reflect(x as isize + t as isize - r, width)];
            }
            out[x] = acc;
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for (t, w) in k.iter().enumerate() {
            let src = reflect(y as isize + t as isize - r, height);
            let src_row = &tmp[src * width..(src + 1) * width];
            let dst = &mut out[y * width..(y + 1) * width];
            for x in 0..width {
                dst[x] += w * src_row[x];
            }
        }
    }
    out
}
