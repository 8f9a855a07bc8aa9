use crate::error::{Error, Result};
use crate::imaging::{GrayImage, Grid, Mask, Raster};

struct Header {
    magic: [u8; 2],
    cols: usize,
    rows: usize,
    maxval: usize,
    payload_offset: usize,
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

fn skip_whitespace_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() {
        match bytes[pos] {
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            b if b.is_ascii_whitespace() => pos += 1,
            _ => break,
        }
    }
    pos
}

fn read_number(bytes: &[u8], pos: usize, what: &str) -> Result<(usize, usize)> {
    let start = skip_whitespace_and_comments(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(parse_err(start, format!("expected {what}")));
    }
    let text = std::str::from_utf8(&bytes[start..end]).expect("ascii digits");
    let value = text
        .parse::<usize>()
        .map_err(|_| parse_err(start, format!("{what} out of range")))?;
    Ok((value, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(parse_err(0, "truncated magic number"));
    }
    let magic = [bytes[0], bytes[1]];
    if magic != *b"P5" && magic != *b"P6" {
        return Err(parse_err(0, "unsupported magic"));
    }
    let (cols, pos) = read_number(bytes, 2, "width")?;
    let (rows, pos) = read_number(bytes, pos, "height")?;
    let (maxval, pos) = read_number(bytes, pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(parse_err(pos, format!("maxval {maxval} not in 1..=255")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(parse_err(pos, "missing whitespace after maxval")),
    }
    Ok(Header {
        magic,
        cols,
        rows,
        maxval,
        payload_offset: pos + 1,
    })
}

/// Decodes a binary P5 (graymap) or P6 (pixmap) file.
///
/// Samples are rescaled to 0..=255 when `maxval < 255`.
pub fn parse_netpbm(bytes: &[u8]) -> Result<Raster> {
    let h = parse_header(bytes)?;
    let channels = if h.magic == *b"P5" { 1 } else { 3 };
    let expected = h
        .rows
        .checked_mul(h.cols)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| parse_err(2, "image dimensions overflow"))?;
    let payload = &bytes[h.payload_offset..];
    if payload.len() < expected {
        return Err(parse_err(
            bytes.len(),
            format!("truncated payload: {} of {expected} bytes", payload.len()),
        ));
    }
    let mut data = payload[..expected].to_vec();
    if h.maxval < 255 {
        for (i, v) in data.iter_mut().enumerate() {
            if usize::from(*v) > h.maxval {
                return Err(parse_err(
                    h.payload_offset + i,
                    format!("sample {v} exceeds maxval {}", h.maxval),
                ));
            }
            *v = ((usize::from(*v) * 255 + h.maxval / 2) / h.maxval) as u8;
        }
    }
    Ok(Raster {
        rows: h.rows,
        cols: h.cols,
        channels,
        data,
    })
}

/// Decodes a P5 mask; any nonzero sample is foreground.
pub fn parse_mask(bytes: &[u8]) -> Result<Mask> {
    let raster = parse_netpbm(bytes)?;
    if raster.channels != 1 {
        return Err(parse_err(0, "masks must be P5 graymaps"));
    }
    Grid::from_vec(
        raster.rows,
        raster.cols,
        raster.data.into_iter().map(|v| v > 0).collect(),
    )
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.cols(), img.rows()).into_bytes();
    out.extend_from_slice(img.as_slice());
    out
}

pub fn encode_ppm(img: &Raster) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.cols, img.rows).into_bytes();
    out.extend_from_slice(&img.data);
    out
}
