//! Lossless raster formats: 8-bit grayscale images and segmentation maps,
//! 16-bit instance-ID maps.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma};

use crate::raster::{Grid, InstanceMap, RasterImage, SegmentationMap};

use super::IoError;

fn image_err(path: &Path, source: image::ImageError) -> IoError {
    IoError::Image {
        path: path.display().to_string(),
        source,
    }
}

/// Save an intensity image as 8-bit grayscale PNG (values quantized from
/// [0, 1] to 0..=255).
pub fn save_gray8(img: &RasterImage, path: &Path) -> Result<(), IoError> {
    let buf = GrayImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let v = img.get(x as usize, y as usize).clamp(0.0, 1.0);
        Luma([(v * 255.0).round() as u8])
    });
    buf.save(path).map_err(|e| image_err(path, e))
}

pub fn load_gray8(path: &Path) -> Result<RasterImage, IoError> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Ok(Grid::from_vec(w, h, data))
}

/// Save an instance map as 16-bit grayscale PNG; pixel value is the instance
/// ID, 0 for background.
pub fn save_instance16(map: &InstanceMap, path: &Path) -> Result<(), IoError> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(map.width() as u32, map.height() as u32, |x, y| {
            Luma([map.get(x as usize, y as usize)])
        });
    buf.save(path).map_err(|e| image_err(path, e))
}

pub fn load_instance16(path: &Path) -> Result<InstanceMap, IoError> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Grid::from_vec(w, h, img.into_raw()))
}

/// Segmentation maps share the 8-bit grayscale encoding: probability 0..1
/// maps to 0..=255. Binary maps round-trip exactly.
pub fn save_segmap(map: &SegmentationMap, path: &Path) -> Result<(), IoError> {
    save_gray8(map, path)
}

pub fn load_segmap(path: &Path) -> Result<SegmentationMap, IoError> {
    load_gray8(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_map_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.png");
        let mut map: InstanceMap = Grid::new(20, 10, 0);
        map.set(3, 4, 1);
        map.set(5, 5, 40000);
        save_instance16(&map, &path).unwrap();
        assert_eq!(load_instance16(&path).unwrap(), map);
    }

    #[test]
    fn binary_segmap_roundtrip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.png");
        let mut map: SegmentationMap = Grid::new(8, 8, 0.0);
        map.set(1, 1, 1.0);
        map.set(7, 0, 1.0);
        save_segmap(&map, &path).unwrap();
        assert_eq!(load_segmap(&path).unwrap(), map);
    }

    #[test]
    fn gray8_quantization_bound() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut img: RasterImage = Grid::new(4, 1, 0.0);
        img.set(0, 0, 0.123);
        img.set(1, 0, 0.9);
        save_gray8(&img, &path).unwrap();
        let back = load_gray8(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
}
