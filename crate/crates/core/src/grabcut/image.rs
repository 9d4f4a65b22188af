//! RGB rasters, binary masks and their netpbm encodings.

use super::GrabcutError;

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self, GrabcutError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(GrabcutError::Dimensions(format!(
                "{width}x{height} image with {} pixels",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self, GrabcutError> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, c: Rgb) {
        self.pixels[y * self.width + x] = c;
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

/// Foreground/background labeling of an image; `true` is foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self, GrabcutError> {
        if data.len() != width * height {
            return Err(GrabcutError::Dimensions(format!(
                "{width}x{height} mask with {} entries",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Intersection over union of the foreground sets; 1 when both are empty.
    pub fn iou(&self, other: &Mask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += usize::from(a && b);
            union += usize::from(a || b);
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Binary PGM (P5) with 0 for background and 255 for foreground.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| if v { 255u8 } else { 0 }));
        out
    }

    /// Reads a P5 mask; any non-zero sample counts as foreground.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, GrabcutError> {
        let (header, body) = parse_netpbm_header(bytes, b"P5")?;
        if header.maxval > 255 {
            return Err(GrabcutError::Decode("only 8-bit PGM is supported".into()));
        }
        let need = header.width * header.height;
        if body.len() < need {
            return Err(GrabcutError::Decode(format!(
                "PGM payload has {} bytes, expected {need}",
                body.len()
            )));
        }
        Mask::new(
            header.width,
            header.height,
            body[..need].iter().map(|&v| v != 0).collect(),
        )
    }
}

struct NetpbmHeader {
    width: usize,
    height: usize,
    maxval: usize,
}

fn parse_netpbm_header<'a>(
    bytes: &'a [u8],
    magic: &[u8],
) -> Result<(NetpbmHeader, &'a [u8]), GrabcutError> {
    if !bytes.starts_with(magic) {
        return Err(GrabcutError::Decode(format!(
            "missing {} magic",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = magic.len();
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(GrabcutError::Decode(format!("malformed header at byte {pos}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| GrabcutError::Decode(format!("bad header number at byte {start}")))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(GrabcutError::Decode("header not terminated".into()));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 {
        return Err(GrabcutError::Decode(format!(
            "degenerate header {width}x{height} maxval {maxval}"
        )));
    }
    Ok((
        NetpbmHeader {
            width,
            height,
            maxval,
        },
        &bytes[pos + 1..],
    ))
}

/// Decodes an 8-bit binary PPM (P6).
pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, GrabcutError> {
    let (header, body) = parse_netpbm_header(bytes, b"P6")?;
    if header.maxval > 255 {
        return Err(GrabcutError::Decode("only 8-bit PPM is supported".into()));
    }
    let need = header.width * header.height * 3;
    if body.len() < need {
        return Err(GrabcutError::Decode(format!(
            "PPM payload has {} bytes, expected {need}",
            body.len()
        )));
    }
    let scale = |v: u8| -> u8 {
        if header.maxval == 255 {
            v
        } else {
            ((v as usize * 255 + header.maxval / 2) / header.maxval).min(255) as u8
        }
    };
    let pixels = body[..need]
        .chunks_exact(3)
        .map(|c| [scale(c[0]), scale(c[1]), scale(c[2])])
        .collect();
    RgbImage::new(header.width, header.height, pixels)
}

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> Result<RgbImage, GrabcutError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| GrabcutError::Decode(format!("PNG: {e}")))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let pixels = img.pixels().map(|p| p.0).collect();
    RgbImage::new(w as usize, h as usize, pixels)
}

#[cfg(not(feature = "png"))]
fn decode_png(_bytes: &[u8]) -> Result<RgbImage, GrabcutError> {
    Err(GrabcutError::Decode("PNG support not compiled in".into()))
}

/// Decodes PPM (P6) or PNG by sniffing the leading bytes.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage, GrabcutError> {
    if bytes.is_empty() {
        return Err(GrabcutError::Decode("empty image payload".into()));
    }
    if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else {
        Err(GrabcutError::Decode("unrecognized image format".into()))
    }
}

pub fn load_image(path: &std::path::Path) -> Result<RgbImage, GrabcutError> {
    let bytes = std::fs::read(path)
        .map_err(|e| GrabcutError::Io(format!("{}: {e}", path.display())))?;
    decode_image(&bytes)
}

/// Replaces background pixels with `fill`; foreground pixels are untouched.
pub fn apply_mask(image: &RgbImage, mask: &Mask, fill: Rgb) -> Result<RgbImage, GrabcutError> {
    if image.width != mask.width || image.height != mask.height {
        return Err(GrabcutError::Dimensions(format!(
            "image is {}x{}, mask {}x{}",
            image.width, image.height, mask.width, mask.height
        )));
    }
    let pixels = image
        .pixels
        .iter()
        .zip(&mask.data)
        .map(|(&p, &fg)| if fg { p } else { fill })
        .collect();
    RgbImage::new(image.width, image.height, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize) -> RgbImage {
        let pixels = (0..w * h)
            .map(|i| [(i % 256) as u8, (i * 7 % 256) as u8, (i * 13 % 256) as u8])
            .collect();
        RgbImage::new(w, h, pixels).unwrap()
    }

    #[test]
    fn ppm_round_trip_with_comment() {
        let img = gradient(5, 4);
        assert_eq!(decode_image(&img.to_ppm()).unwrap(), img);
        let mut commented = b"P6\n# made by hand\n5 4\n255\n".to_vec();
        commented.extend_from_slice(&img.to_ppm()[11..]);
        assert_eq!(decode_ppm(&commented).unwrap(), img);
    }

    #[test]
    fn truncated_and_foreign_payloads_fail() {
        let img = gradient(5, 4);
        let bytes = img.to_ppm();
        assert!(decode_image(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_image(b"").is_err());
        assert!(decode_image(b"GIF89a").is_err());
    }

    #[cfg(feature = "png")]
    #[test]
    fn png_decodes_to_same_pixels() {
        let img = gradient(6, 3);
        let mut buf = image::RgbImage::new(6, 3);
        for (i, p) in buf.pixels_mut().enumerate() {
            p.0 = img.pixels()[i];
        }
        let mut bytes = Vec::new();
        buf.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
            .unwrap();
        assert_eq!(decode_image(&bytes).unwrap(), img);
    }

    #[test]
    fn pgm_round_trip() {
        let m = Mask::new(3, 2, vec![true, false, true, false, false, true]).unwrap();
        let bytes = m.to_pgm();
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[255, 0, 255, 0, 0, 255]);
        assert_eq!(Mask::from_pgm(&bytes).unwrap(), m);
    }

    #[test]
    fn apply_mask_cases() {
        let img = gradient(4, 4);
        let all_fg = Mask::filled(4, 4, true);
        assert_eq!(apply_mask(&img, &all_fg, [0, 0, 0]).unwrap(), img);

        let all_bg = Mask::filled(4, 4, false);
        let black = apply_mask(&img, &all_bg, [0, 0, 0]).unwrap();
        assert!(black.pixels().iter().all(|&p| p == [0, 0, 0]));

        let checker =
            Mask::new(4, 4, (0..16).map(|i| (i % 4 + i / 4) % 2 == 0).collect()).unwrap();
        let out = apply_mask(&img, &checker, [1, 2, 3]).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                if checker.get(x, y) {
                    assert_eq!(out.get(x, y), img.get(x, y));
                } else {
                    assert_eq!(out.get(x, y), [1, 2, 3]);
                }
            }
        }

        assert!(apply_mask(&img, &Mask::filled(3, 4, true), [0, 0, 0]).is_err());
    }

    #[test]
    fn iou_counts() {
        let a = Mask::new(2, 2, vec![true, true, false, false]).unwrap();
        let b = Mask::new(2, 2, vec![true, false, true, false]).unwrap();
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.iou(&a), 1.0);
    }
}
