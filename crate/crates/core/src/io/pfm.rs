//! Portable float map: 32-bit float rasters for depth.
//!
//! Rows are stored bottom to top; a negative scale marks little-endian data.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

pub fn write_pfm<W: Write>(img: &Image, mut w: W) -> Result<()> {
    let magic = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::validation(format!("PFM holds 1 or 3 channels, got {c}"))),
    };
    write!(w, "{magic}\n{} {}\n-1.0\n", img.width, img.height)?;
    let row = img.width * img.channels;
    for y in (0..img.height).rev() {
        for v in &img.data[y * row..(y + 1) * row] {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn header_token<R: BufRead>(r: &mut R, path: &Path) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::load(path, "truncated PFM header"));
        }
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
    }
    String::from_utf8(tok).map_err(|_| Error::load(path, "non-ASCII PFM header"))
}

pub fn read_pfm<R: BufRead>(mut r: R, path: &Path) -> Result<Image> {
    let channels = match header_token(&mut r, path)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        m => return Err(Error::load(path, format!("not a PFM file (magic `{m}`)"))),
    };
    let mut num = |what: &str| -> Result<String> {
        header_token(&mut r, path).map_err(|_| Error::load(path, format!("missing PFM {what}")))
    };
    let width: usize = num("width")?.parse().map_err(|_| Error::load(path, "bad PFM width"))?;
    let height: usize = num("height")?.parse().map_err(|_| Error::load(path, "bad PFM height"))?;
    let scale: f64 = num("scale")?.parse().map_err(|_| Error::load(path, "bad PFM scale"))?;
    let little = scale < 0.0;
    let row = width * channels;
    let mut data = vec![0.0; row * height];
    let mut buf = [0u8; 4];
    for y in (0..height).rev() {
        for v in &mut data[y * row..(y + 1) * row] {
            r.read_exact(&mut buf)
                .map_err(|e| Error::load(path, format!("truncated PFM data: {e}")))?;
            *v = if little { f32::from_le_bytes(buf) } else { f32::from_be_bytes(buf) } as f64;
        }
    }
    Image::from_data(width, height, channels, data)
}

pub fn save_pfm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    write_pfm(img, BufWriter::new(File::create(path.as_ref())?))
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::load(path, e.to_string()))?;
    read_pfm(BufReader::new(f), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_f32_values() {
        let data: Vec<f64> = (0..12).map(|i| (i as f32 * 0.37 - 1.0) as f64).collect();
        let img = Image::from_data(4, 3, 1, data).unwrap();
        let mut buf = Vec::new();
        write_pfm(&img, &mut buf).unwrap();
        assert_eq!(read_pfm(buf.as_slice(), Path::new("m")).unwrap(), img);
    }

    #[test]
    fn rows_are_bottom_up() {
        let img = Image::from_data(1, 2, 1, vec![1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_pfm(&img, &mut buf).unwrap();
        let body = &buf[buf.len() - 8..];
        assert_eq!(f32::from_le_bytes(body[..4].try_into().unwrap()), 2.0);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_pfm(&b"P6\n1 1\n255\n"[..], Path::new("m")).is_err());
        assert!(read_pfm(&b"Pf\n2 2\n-1.0\n\0\0\0\0"[..], Path::new("m")).is_err());
    }
}
