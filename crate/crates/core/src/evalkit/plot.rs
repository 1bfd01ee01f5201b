use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_hollow_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;

pub const PALETTE: [[u8; 3]; 6] = [[31, 119, 180], [214, 39, 40], [44, 160, 44], [255, 127, 14], [148, 103, 189], [127, 127, 127]];

const MARGIN: u32 = 24;

/// Line chart of `(x, y)` series on shared axes; `log_y` plots `log10(y)`.
pub fn line_plot(series: &[(Vec<f64>, Vec<f64>, [u8; 3])], log_y: bool, width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let ty = |y: f64| if log_y { y.max(1e-300).log10() } else { y };
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (xs, ys, _) in series {
        for (&x, &y) in xs.iter().zip(ys) {
            let y = ty(y);
            if x.is_finite() && y.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
    }
    let frame = Rect::at(MARGIN as i32, MARGIN as i32).of_size(width - 2 * MARGIN, height - 2 * MARGIN);
    draw_hollow_rect_mut(&mut img, frame, Rgb([0, 0, 0]));
    if !x0.is_finite() {
        return img;
    }
    if x1 - x0 < 1e-300 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-300 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pw = (width - 2 * MARGIN - 4) as f64;
    let ph = (height - 2 * MARGIN - 4) as f64;
    let px = |x: f64| MARGIN as f32 + 2.0 + ((x - x0) / (x1 - x0) * pw) as f32;
    let py = |y: f64| (height - MARGIN) as f32 - 2.0 - ((ty(y) - y0) / (y1 - y0) * ph) as f32;
    if !log_y && y0 < 0.0 && y1 > 0.0 {
        draw_line_segment_mut(&mut img, (MARGIN as f32, py(0.0)), ((width - MARGIN) as f32, py(0.0)), Rgb([200, 200, 200]));
    }
    for (xs, ys, color) in series {
        let pts: Vec<(f32, f32)> = xs.iter().zip(ys).filter(|(x, y)| x.is_finite() && ty(**y).is_finite()).map(|(&x, &y)| (px(x), py(y))).collect();
        for w in pts.windows(2) {
            draw_line_segment_mut(&mut img, w[0], w[1], Rgb(*color));
            draw_line_segment_mut(&mut img, (w[0].0, w[0].1 + 1.0), (w[1].0, w[1].1 + 1.0), Rgb(*color));
        }
    }
    img
}

fn colormap(t: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 5] = [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 } * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let c = |k: usize| (STOPS[i][k] * (1.0 - f) + STOPS[i + 1][k] * f).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// Row-major `[rows, cols]` field as a colour image, `scale` pixels per cell.
/// `range` fixes the colour limits; by default the data extrema are used.
pub fn heatmap(values: &[f64], rows: usize, cols: usize, scale: u32, range: Option<(f64, f64)>) -> RgbImage {
    let (lo, hi) = range.unwrap_or_else(|| {
        values.iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    });
    let span = if hi - lo > 1e-300 { hi - lo } else { 1.0 };
    let scale = scale.max(1);
    RgbImage::from_fn(cols as u32 * scale, rows as u32 * scale, |x, y| {
        let (i, j) = ((y / scale) as usize, (x / scale) as usize);
        colormap((values[i * cols + j] - lo) / span)
    })
}

/// Places images side by side with a white gap.
pub fn hstack(images: &[RgbImage]) -> RgbImage {
    let gap = 8;
    let width = images.iter().map(|i| i.width()).sum::<u32>() + gap * images.len().saturating_sub(1) as u32;
    let height = images.iter().map(|i| i.height()).max().unwrap_or(1);
    let mut out = RgbImage::from_pixel(width.max(1), height, Rgb([255, 255, 255]));
    let mut x0 = 0;
    for img in images {
        image::imageops::replace(&mut out, img, x0 as i64, 0);
        x0 += img.width() + gap;
    }
    out
}

/// Pixels per cell so the longer side is roughly `target` pixels.
pub fn cell_scale(rows: usize, cols: usize, target: u32) -> u32 {
    (target / rows.max(cols).max(1) as u32).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_have_requested_size() {
        let img = line_plot(&[(vec![0.0, 1.0, 2.0], vec![1.0, 0.1, 0.01], PALETTE[0])], true, 320, 200);
        assert_eq!(img.dimensions(), (320, 200));
        assert!(img.pixels().any(|p| p.0 == PALETTE[0]));
        let h = heatmap(&[0.0, 1.0, 2.0, 3.0], 2, 2, 5, None);
        assert_eq!(h.dimensions(), (10, 10));
        assert_eq!(*h.get_pixel(0, 0), colormap(0.0));
        assert_eq!(*h.get_pixel(9, 9), colormap(1.0));
        assert_eq!(hstack(&[h.clone(), h]).dimensions(), (28, 10));
    }

    #[test]
    fn degenerate_inputs_do_not_panic() {
        line_plot(&[], false, 100, 80);
        line_plot(&[(vec![1.0], vec![f64::NAN], PALETTE[1])], false, 100, 80);
        heatmap(&[1.0; 4], 2, 2, 1, None);
    }
}
