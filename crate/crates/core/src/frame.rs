//! Single-channel integer frames and binary 16-bit PGM export.

use std::io::{self, BufRead, Write};

use crate::error::{invalid, Result};

/// A grayscale image with values in `[0, 2^bit_depth - 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    width: u32,
    height: u32,
    bit_depth: u8,
    pixels: Vec<u16>,
}

impl FrameBuffer {
    /// An all-black frame.
    pub fn new(width: u32, height: u32, bit_depth: u8) -> Result<Self> {
        check_dims(width, height, bit_depth)?;
        Ok(Self { width, height, bit_depth, pixels: vec![0; (width as usize) * (height as usize)] })
    }

    pub fn from_pixels(width: u32, height: u32, bit_depth: u8, pixels: Vec<u16>) -> Result<Self> {
        check_dims(width, height, bit_depth)?;
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(invalid(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        let max = max_value(bit_depth);
        if let Some(p) = pixels.iter().find(|&&p| p > max) {
            return Err(invalid(format!("pixel value {p} exceeds {bit_depth}-bit range")));
        }
        Ok(Self { width, height, bit_depth, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn max_value(&self) -> u16 {
        max_value(self.bit_depth)
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.pixels[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u16) {
        assert!(value <= self.max_value(), "pixel value {value} exceeds bit depth");
        let w = self.width as usize;
        self.pixels[(y as usize) * w + x as usize] = value;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        self.pixels.chunks_exact(self.width as usize)
    }

    /// Area-averaging downsample to `width x height` (rounded to nearest).
    pub fn box_downsample(&self, width: u32, height: u32) -> Result<FrameBuffer> {
        if width == 0 || height == 0 || width > self.width || height > self.height {
            return Err(invalid(format!(
                "cannot box-downsample {}x{} to {width}x{height}",
                self.width, self.height
            )));
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let (sw, sh) = (self.width as u64, self.height as u64);
        let (tw, th) = (width as u64, height as u64);
        let mut out = Vec::with_capacity((tw * th) as usize);
        for ty in 0..th {
            let y0 = ty * sh / th;
            let y1 = ((ty + 1) * sh / th).max(y0 + 1);
            for tx in 0..tw {
                let x0 = tx * sw / tw;
                let x1 = ((tx + 1) * sw / tw).max(x0 + 1);
                let mut sum = 0u64;
                for y in y0..y1 {
                    let row = &self.pixels[(y * sw) as usize..((y + 1) * sw) as usize];
                    sum += row[x0 as usize..x1 as usize].iter().map(|&p| u64::from(p)).sum::<u64>();
                }
                let n = (y1 - y0) * (x1 - x0);
                out.push(((sum + n / 2) / n) as u16);
            }
        }
        FrameBuffer::from_pixels(width, height, self.bit_depth, out)
    }

    /// Drops least significant bits down to `bit_depth`.
    pub fn reduce_bit_depth(&self, bit_depth: u8) -> Result<FrameBuffer> {
        if bit_depth > self.bit_depth || bit_depth == 0 {
            return Err(invalid(format!("cannot reduce {}-bit frame to {bit_depth} bits", self.bit_depth)));
        }
        let shift = self.bit_depth - bit_depth;
        let pixels = self.pixels.iter().map(|&p| p >> shift).collect();
        Ok(FrameBuffer { width: self.width, height: self.height, bit_depth, pixels })
    }

    /// Writes a binary `P5` graymap with 16-bit big-endian samples.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n65535\n", self.width, self.height)?;
        let mut bytes = Vec::with_capacity(self.pixels.len() * 2);
        for &p in &self.pixels {
            bytes.extend_from_slice(&p.to_be_bytes());
        }
        w.write_all(&bytes)
    }

    /// Reads a binary 16-bit graymap. The header's maxval is ignored in favour
    /// of `bit_depth`, which the caller must know.
    pub fn read_pgm<R: BufRead>(mut r: R, bit_depth: u8) -> io::Result<FrameBuffer> {
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated PGM header"));
            }
            let line = line.split('#').next().unwrap_or("");
            tokens.extend(line.split_whitespace().map(str::to_owned));
        }
        let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_owned());
        if tokens[0] != "P5" {
            return Err(bad("not a binary PGM"));
        }
        let width: u32 = tokens[1].parse().map_err(|_| bad("bad width"))?;
        let height: u32 = tokens[2].parse().map_err(|_| bad("bad height"))?;
        let maxval: u32 = tokens[3].parse().map_err(|_| bad("bad maxval"))?;
        if maxval < 256 {
            return Err(bad("only 16-bit graymaps are supported"));
        }
        let mut bytes = vec![0u8; (width as usize) * (height as usize) * 2];
        r.read_exact(&mut bytes)?;
        let pixels = bytes.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
        FrameBuffer::from_pixels(width, height, bit_depth, pixels).map_err(|e| bad(&e.to_string()))
    }
}

fn max_value(bit_depth: u8) -> u16 {
    ((1u32 << bit_depth) - 1) as u16
}

fn check_dims(width: u32, height: u32, bit_depth: u8) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(invalid(format!("frame dimensions must be positive, got {width}x{height}")));
    }
    if !(1..=16).contains(&bit_depth) {
        return Err(invalid(format!("bit depth must lie in 1..=16, got {bit_depth}")));
    }
    Ok(())
}
