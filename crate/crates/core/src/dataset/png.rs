use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Luma};

use crate::error::{Error, Result};
use crate::frame::{DepthFrame, ImageFrame};

fn open(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Decode an 8-bit gray or RGB PNG into `[0, 1]` intensities.
pub fn decode_rgb(path: &Path, timestamp: f64) -> Result<ImageFrame> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        other => {
            return Err(Error::Image {
                path: path.to_path_buf(),
                msg: format!("unsupported colour type {:?}", other.color()),
            })
        }
    };
    let pixels = raw.into_iter().map(|b| f64::from(b) / 255.0).collect();
    ImageFrame::new(timestamp, w, h, channels, pixels)
}

/// Decode a 16-bit single-channel PNG; `raw / scale` metres, raw 0 is invalid.
pub fn decode_depth(path: &Path, scale: f64, timestamp: f64) -> Result<DepthFrame> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!("depth scale {scale}")));
    }
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = match img {
        DynamicImage::ImageLuma16(buf) => buf.into_raw(),
        other => {
            return Err(Error::Image {
                path: path.to_path_buf(),
                msg: format!("depth must be 16-bit gray, got {:?}", other.color()),
            })
        }
    };
    let depth = raw.into_iter().map(|r| f64::from(r) / scale).collect();
    DepthFrame::new(timestamp, w, h, depth)
}

/// Quantize to bytes (`round(v * 255)`) and write an 8-bit PNG.
pub fn encode_rgb(frame: &ImageFrame, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = frame
        .pixels()
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let img = if frame.channels() == 1 {
        DynamicImage::ImageLuma8(ImageBuffer::from_raw(w, h, bytes).expect("sized buffer"))
    } else {
        DynamicImage::ImageRgb8(ImageBuffer::from_raw(w, h, bytes).expect("sized buffer"))
    };
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
}

/// Write `round(depth * scale)` as a 16-bit PNG. Values beyond the u16 range saturate.
pub fn encode_depth(frame: &DepthFrame, scale: f64, path: &Path) -> Result<()> {
    let raw: Vec<u16> = frame
        .depth()
        .iter()
        .map(|d| (d * scale).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(frame.width() as u32, frame.height() as u32, raw)
            .expect("sized buffer");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
}
