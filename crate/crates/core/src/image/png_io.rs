use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::{ImageF, MaskF};
use crate::error::{Error, Result};

/// Loads an 8-bit grayscale or RGB PNG; every byte `v` becomes `v / 255`.
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageF> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "{}: unsupported bit depth {depth:?}",
            path.display()
        )));
    }
    let channels = match color {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported color type {other:?}",
                path.display()
            )))
        }
    };
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let line = frame.line_size;
    let mut data = Vec::with_capacity(w * h * channels);
    for row in buf[..frame.buffer_size()].chunks(line).take(h) {
        data.extend(row[..w * channels].iter().map(|&b| f64::from(b) / 255.0));
    }
    ImageF::new(h, w, channels, data)
}

/// Encodes one sample: clamp to `[0,1]`, scale by 255, round half up.
#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn save_png(image: &ImageF, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let color = match image.channels() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => {
            return Err(Error::Contract(format!(
                "PNG output needs 1 or 3 channels, got {c}"
            )))
        }
    };
    let bytes: Vec<u8> = image.data().iter().map(|&v| quantize(v)).collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        image.width() as u32,
        image.height() as u32,
    );
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    writer
        .finish()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Loads a mask PNG and binarizes it: bytes `>= 128` are set. RGB input is
/// reduced to its channel mean first.
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<MaskF> {
    let img = load_png(path)?;
    let c = img.channels();
    let values: Vec<f64> = img
        .data()
        .chunks(c)
        .map(|px| px.iter().sum::<f64>() / c as f64)
        .collect();
    MaskF::threshold(img.height(), img.width(), &values, 0.5)
}

pub fn save_mask_png(mask: &MaskF, path: impl AsRef<Path>) -> Result<()> {
    save_png(&mask.to_image(), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_rounds_half_up_and_clamps() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(1.2), 255);
        assert_eq!(quantize(-0.1), 0);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        for b in 0..=255u8 {
            assert_eq!(quantize(f64::from(b) / 255.0), b);
        }
    }

    #[test]
    fn rgb_pixel_loads_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("px.png");
        let img = ImageF::new(1, 1, 3, vec![1.0, 0.0, 128.0 / 255.0]).unwrap();
        save_png(&img, &p).unwrap();
        let back = load_png(&p).unwrap();
        assert_eq!(back.data(), &[1.0, 0.0, 128.0 / 255.0]);
    }

    #[test]
    fn black_png_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("black.png");
        save_png(&ImageF::zeros(3, 4, 1), &p).unwrap();
        let back = load_png(&p).unwrap();
        assert_eq!(back.dims(), (3, 4));
        assert!(back.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_png("/nonexistent/nope.png"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn sixteen_bit_and_palette_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p16 = dir.path().join("d16.png");
        {
            let f = File::create(&p16).unwrap();
            let mut enc = png::Encoder::new(BufWriter::new(f), 1, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0, 1]).unwrap();
        }
        assert!(matches!(load_png(&p16), Err(Error::Format(_))));

        let pal = dir.path().join("pal.png");
        {
            let f = File::create(&pal).unwrap();
            let mut enc = png::Encoder::new(BufWriter::new(f), 1, 1);
            enc.set_color(png::ColorType::Indexed);
            enc.set_depth(png::BitDepth::Eight);
            enc.set_palette(vec![255u8, 0, 0]);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0]).unwrap();
        }
        assert!(matches!(load_png(&pal), Err(Error::Format(_))));
    }

    #[test]
    fn mask_threshold_at_128() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let img = ImageF::new(1, 2, 1, vec![127.0 / 255.0, 128.0 / 255.0]).unwrap();
        save_png(&img, &p).unwrap();
        let m = load_mask_png(&p).unwrap();
        assert_eq!(m.data(), &[0.0, 1.0]);
        assert!(m.is_binary());
    }
}
