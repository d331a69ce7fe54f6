//! 8-bit PNG rendering of normal maps (RGB = n·0.5 + 0.5, black outside the
//! mask).

use std::path::Path;

use crate::estimation::NormalMap;
use crate::{Error, Result};

pub fn encode_normal_png(map: &NormalMap) -> Result<Vec<u8>> {
    let (w, h) = map.shape();
    let to_u8 = |v: f64| ((v * 0.5 + 0.5).clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut pixels = Vec::with_capacity(w * h * 3);
    for (n, &m) in map.normals.iter().zip(map.mask.iter()) {
        if m {
            pixels.extend([to_u8(n.x), to_u8(n.y), to_u8(n.z)]);
        } else {
            pixels.extend([0, 0, 0]);
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer.write_image_data(&pixels).map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

pub fn write_normal_png(map: &NormalMap, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_normal_png(map)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::NormalSpace;
    use crate::grid::Grid;
    use nalgebra::Vector3;

    #[test]
    fn decodes_to_expected_colors() {
        let map = NormalMap {
            normals: Grid::from_vec(2, 1, vec![Vector3::z(), Vector3::x()]).unwrap(),
            mask: Grid::from_vec(2, 1, vec![true, false]).unwrap(),
            space: NormalSpace::Camera,
        };
        let bytes = encode_normal_png(&map).unwrap();
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (2, 1));
        assert_eq!(&buf[..6], &[128, 128, 255, 0, 0, 0]);
    }
}
