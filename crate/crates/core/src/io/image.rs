//! 8-bit PNG frames. Pixels map `u8/255` into `[0,1]`, then affinely to `[−1,1]`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::Tensor;

pub fn decode_png(bytes: &[u8], origin: &Path) -> Result<Tensor> {
    let bad = |reason: String| Error::malformed(origin, reason);
    let mut reader = png::Decoder::new(std::io::Cursor::new(bytes))
        .read_info()
        .map_err(|e| bad(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| bad("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(bad(format!("expected 8-bit samples, got {:?}", info.bit_depth)));
    }
    let stride = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(bad(format!("expected RGB or RGBA, got {other:?}"))),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = vec![0.0; 3 * h * w];
    for y in 0..h {
        let row = &buf[y * info.line_size..];
        for x in 0..w {
            for c in 0..3 {
                data[(c * h + y) * w + x] = row[x * stride + c] as f64 / 255.0 * 2.0 - 1.0;
            }
        }
    }
    Tensor::new(vec![3, h, w], data)
}

pub fn encode_png(image: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = image.dims3()?;
    if c != 3 {
        return Err(Error::invalid(format!("PNG frames need 3 channels, got {c}")));
    }
    let src = image.data();
    let mut pixels = vec![0u8; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                let v = src[(ch * h + y) * w + x].clamp(-1.0, 1.0);
                pixels[(y * w + x) * 3 + ch] = ((v + 1.0) / 2.0 * 255.0).round() as u8;
            }
        }
    }
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, w as u32, h as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(|e| Error::invalid(e.to_string()))?;
        writer.write_image_data(&pixels).map_err(|e| Error::invalid(e.to_string()))?;
    }
    Ok(out)
}

pub fn read_png(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes, path)
}

pub fn write_png(path: &Path, image: &Tensor) -> Result<()> {
    write_atomic(path, &encode_png(image)?)
}

/// `*.png` files of a directory in lexicographic order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("png")) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!("no PNG frames in {}", dir.display())));
    }
    Ok(paths)
}

pub fn read_frames(dir: &Path) -> Result<Vec<Tensor>> {
    list_frames(dir)?.iter().map(|p| read_png(p)).collect()
}

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:04}.png")
}

pub fn write_frames(dir: &Path, frames: &[Tensor]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in frames.iter().enumerate() {
        write_png(&dir.join(frame_name(i)), frame)?;
    }
    Ok(())
}
