use super::Image;
use crate::bbox::BBox;
use crate::error::{validation_err, Result};

/// Square crop of side `context_factor · max(w, h)` centred on the box,
/// bilinearly resampled to `out_size`². Area outside the frame reads as the
/// frame's mean intensity.
pub fn crop_patch(frame: &Image, bx: &BBox, context_factor: f32, out_size: usize) -> Result<Image> {
    if !(bx.w > 0.0 && bx.h > 0.0) {
        return validation_err(format!("degenerate box {}x{}", bx.w, bx.h));
    }
    if !(context_factor >= 1.0) {
        return validation_err(format!("context_factor {context_factor} must be >= 1"));
    }
    if out_size == 0 {
        return validation_err("out_size must be positive");
    }
    if !bx.intersects_frame(frame.width() as f32, frame.height() as f32) {
        return validation_err("box does not intersect the frame");
    }
    let pad = frame.mean();
    let (cx, cy) = bx.center();
    let side = context_factor * bx.w.max(bx.h);
    let step = side / out_size as f32;
    let x_origin = cx - side / 2.0;
    let y_origin = cy - side / 2.0;
    let (w, h) = (frame.width() as isize, frame.height() as isize);
    let read = |x: isize, y: isize| -> f32 {
        if x < 0 || y < 0 || x >= w || y >= h {
            pad
        } else {
            frame.get(x as usize, y as usize)
        }
    };

    let mut data = Vec::with_capacity(out_size * out_size);
    for j in 0..out_size {
        let sy = y_origin + (j as f32 + 0.5) * step - 0.5;
        let y0 = sy.floor();
        let fy = sy - y0;
        let y0 = y0 as isize;
        for i in 0..out_size {
            let sx = x_origin + (i as f32 + 0.5) * step - 0.5;
            let x0 = sx.floor();
            let fx = sx - x0;
            let x0 = x0 as isize;
            let top = if fx > 0.0 { (1.0 - fx) * read(x0, y0) + fx * read(x0 + 1, y0) } else { read(x0, y0) };
            let value = if fy > 0.0 {
                let bottom =
                    if fx > 0.0 { (1.0 - fx) * read(x0, y0 + 1) + fx * read(x0 + 1, y0 + 1) } else { read(x0, y0 + 1) };
                (1.0 - fy) * top + fy * bottom
            } else {
                top
            };
            data.push(value);
        }
    }
    Ok(Image::from_parts(out_size, out_size, data))
}
