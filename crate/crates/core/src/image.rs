//! Program images: ELF64, flat binaries and textual listings.
//!
//! Listing format, one word per line:
//!
//! ```text
//! # comment
//! 80000000: 00000013
//! 80000004: 00b50533   # trailing comments are fine
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{self, DecodeError, Instruction};

pub const EM_RISCV: u16 = 243;
pub const DEFAULT_BASE: u64 = 0x8000_0000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Elf64,
    Flat,
    Listing,
}

impl FromStr for ImageFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "elf" | "elf64" => Ok(ImageFormat::Elf64),
            "flat" | "bin" => Ok(ImageFormat::Flat),
            "listing" | "lst" => Ok(ImageFormat::Listing),
            other => Err(format!("unknown image format `{other}`")),
        }
    }
}

impl fmt::Display for ImageFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImageFormat::Elf64 => "elf64",
            ImageFormat::Flat => "flat",
            ImageFormat::Listing => "listing",
        })
    }
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed ELF: {0}")]
    MalformedElf(&'static str),
    #[error("not a RISC-V ELF (machine type {0})")]
    NotRiscv(u16),
    #[error("flat image length {0} is not a multiple of 4")]
    UnalignedFlat(usize),
    #[error("listing line {line}: {message}")]
    Listing { line: usize, message: String },
    #[error("entry point {entry:#x} is outside the executable code")]
    EntryOutOfRange { entry: u64 },
    #[error("image contains no executable code")]
    Empty,
}

/// A contiguous loaded region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub vaddr: u64,
    pub bytes: Vec<u8>,
    /// Zero-filled bytes following `bytes` (ELF `.bss`).
    pub zero_fill: u64,
    pub executable: bool,
}

impl Segment {
    pub fn end(&self) -> u64 {
        self.vaddr + self.bytes.len() as u64
    }
}

/// A loaded program. Executable segments are decoded; all segments are
/// mapped into simulator memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramImage {
    pub format: ImageFormat,
    pub entry: u64,
    pub segments: Vec<Segment>,
}

/// Placement options for formats that carry no addresses.
#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    pub format: Option<ImageFormat>,
    pub base: Option<u64>,
    pub entry: Option<u64>,
}

impl ProgramImage {
    /// Lowest executable address.
    pub fn base_address(&self) -> u64 {
        self.code_segments().map(|s| s.vaddr).min().unwrap_or(0)
    }

    pub fn code_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.executable)
    }

    /// Builds a flat image from words placed at `base`.
    pub fn from_words(base: u64, words: &[u32]) -> ProgramImage {
        let bytes = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        ProgramImage {
            format: ImageFormat::Flat,
            entry: base,
            segments: vec![Segment {
                vaddr: base,
                bytes,
                zero_fill: 0,
                executable: true,
            }],
        }
    }

    /// Decodes every word of every executable segment, in address order.
    pub fn decode_all(&self) -> Result<Vec<Instruction>, DecodeError> {
        let mut segs: Vec<&Segment> = self.code_segments().collect();
        segs.sort_by_key(|s| s.vaddr);
        let mut out = Vec::new();
        for seg in segs {
            for (k, chunk) in seg.bytes.chunks(4).enumerate() {
                let address = seg.vaddr + 4 * k as u64;
                if chunk.len() < 4 {
                    let mut w = [0u8; 4];
                    w[..chunk.len()].copy_from_slice(chunk);
                    return Err(DecodeError::Compressed {
                        word: u32::from_le_bytes(w),
                        address,
                    });
                }
                let word = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                out.push(isa::decode(word, address)?);
            }
        }
        Ok(out)
    }

    fn check_entry(&self) -> Result<(), ImageError> {
        if self.code_segments().next().is_none() {
            return Err(ImageError::Empty);
        }
        let inside = self
            .code_segments()
            .any(|s| self.entry >= s.vaddr && self.entry < s.end());
        if inside {
            Ok(())
        } else {
            Err(ImageError::EntryOutOfRange { entry: self.entry })
        }
    }
}

/// Loads an image from disk, sniffing the format when not given.
pub fn load_image(path: &Path, opts: LoadOptions) -> Result<ProgramImage, ImageError> {
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let format = opts.format.unwrap_or_else(|| sniff(path, &bytes));
    let mut image = match format {
        ImageFormat::Elf64 => parse_elf(&bytes)?,
        ImageFormat::Flat => parse_flat(&bytes, opts.base.unwrap_or(DEFAULT_BASE))?,
        ImageFormat::Listing => {
            let text = String::from_utf8(bytes).map_err(|_| ImageError::Listing {
                line: 0,
                message: "not UTF-8".into(),
            })?;
            parse_listing(&text)?
        }
    };
    if let Some(entry) = opts.entry {
        image.entry = entry;
    }
    image.check_entry()?;
    Ok(image)
}

fn sniff(path: &Path, bytes: &[u8]) -> ImageFormat {
    if bytes.starts_with(b"\x7fELF") {
        return ImageFormat::Elf64;
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("lst" | "txt" | "listing") => ImageFormat::Listing,
        _ => ImageFormat::Flat,
    }
}

pub fn parse_flat(bytes: &[u8], base: u64) -> Result<ProgramImage, ImageError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(ImageError::UnalignedFlat(bytes.len()));
    }
    let image = ProgramImage {
        format: ImageFormat::Flat,
        entry: base,
        segments: vec![Segment {
            vaddr: base,
            bytes: bytes.to_vec(),
            zero_fill: 0,
            executable: true,
        }],
    };
    Ok(image)
}

/// Parses `HEXADDR: HEXWORD` lines. Consecutive addresses form one segment.
pub fn parse_listing(text: &str) -> Result<ProgramImage, ImageError> {
    let mut segments: Vec<Segment> = Vec::new();
    let mut last: Option<u64> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| ImageError::Listing { line, message };
        let (addr, word) = content
            .split_once(':')
            .ok_or_else(|| err("expected `ADDRESS: WORD`".into()))?;
        let addr = addr.trim().trim_start_matches("0x");
        let word = word
            .split_whitespace()
            .next()
            .ok_or_else(|| err("missing instruction word".into()))?
            .trim_start_matches("0x");
        let addr =
            u64::from_str_radix(addr, 16).map_err(|e| err(format!("bad address: {e}")))?;
        if word.len() != 8 {
            return Err(err(format!("instruction word `{word}` must have 8 hex digits")));
        }
        let word = u32::from_str_radix(word, 16).map_err(|e| err(format!("bad word: {e}")))?;
        if addr % 4 != 0 {
            return Err(err(format!("address {addr:#x} is not word aligned")));
        }
        if let Some(prev) = last {
            if addr <= prev {
                return Err(err(format!("address {addr:#x} is not ascending")));
            }
        }
        match segments.last_mut() {
            Some(seg) if seg.end() == addr => seg.bytes.extend_from_slice(&word.to_le_bytes()),
            _ => segments.push(Segment {
                vaddr: addr,
                bytes: word.to_le_bytes().to_vec(),
                zero_fill: 0,
                executable: true,
            }),
        }
        last = Some(addr);
    }
    let entry = segments.first().map(|s| s.vaddr).unwrap_or(0);
    Ok(ProgramImage {
        format: ImageFormat::Listing,
        entry,
        segments,
    })
}

fn rd_u16(b: &[u8], off: usize) -> Result<u16, ImageError> {
    b.get(off..off + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or(ImageError::MalformedElf("truncated header"))
}

fn rd_u32(b: &[u8], off: usize) -> Result<u32, ImageError> {
    b.get(off..off + 4)
        .map(|s| u32::from_le_bytes(s.try_into().unwrap()))
        .ok_or(ImageError::MalformedElf("truncated header"))
}

fn rd_u64(b: &[u8], off: usize) -> Result<u64, ImageError> {
    b.get(off..off + 8)
        .map(|s| u64::from_le_bytes(s.try_into().unwrap()))
        .ok_or(ImageError::MalformedElf("truncated header"))
}

const PT_LOAD: u32 = 1;
const PF_X: u32 = 1;

/// Parses an ELF64 little-endian executable; every `PT_LOAD` segment is kept.
pub fn parse_elf(b: &[u8]) -> Result<ProgramImage, ImageError> {
    if b.len() < 64 || &b[..4] != b"\x7fELF" {
        return Err(ImageError::MalformedElf("bad magic"));
    }
    if b[4] != 2 {
        return Err(ImageError::MalformedElf("not ELFCLASS64"));
    }
    if b[5] != 1 {
        return Err(ImageError::MalformedElf("not little-endian"));
    }
    let machine = rd_u16(b, 18)?;
    if machine != EM_RISCV {
        return Err(ImageError::NotRiscv(machine));
    }
    let entry = rd_u64(b, 24)?;
    let phoff = rd_u64(b, 32)? as usize;
    let phentsize = rd_u16(b, 54)? as usize;
    let phnum = rd_u16(b, 56)? as usize;
    if phnum > 0 && phentsize < 56 {
        return Err(ImageError::MalformedElf("program header entry too small"));
    }
    let mut segments = Vec::new();
    for k in 0..phnum {
        let ph = phoff
            .checked_add(k * phentsize)
            .ok_or(ImageError::MalformedElf("program header offset overflow"))?;
        if rd_u32(b, ph)? != PT_LOAD {
            continue;
        }
        let flags = rd_u32(b, ph + 4)?;
        let offset = rd_u64(b, ph + 8)? as usize;
        let vaddr = rd_u64(b, ph + 16)?;
        let filesz = rd_u64(b, ph + 32)? as usize;
        let memsz = rd_u64(b, ph + 40)?;
        let bytes = offset
            .checked_add(filesz)
            .and_then(|end| b.get(offset..end))
            .ok_or(ImageError::MalformedElf("segment exceeds file"))?;
        if memsz < filesz as u64 {
            return Err(ImageError::MalformedElf("segment memsz < filesz"));
        }
        segments.push(Segment {
            vaddr,
            bytes: bytes.to_vec(),
            zero_fill: memsz - filesz as u64,
            executable: flags & PF_X != 0,
        });
    }
    Ok(ProgramImage {
        format: ImageFormat::Elf64,
        entry,
        segments,
    })
}

/// Writes a minimal ELF64 executable with one `PT_LOAD` per segment.
pub fn write_elf(image: &ProgramImage, machine: u16) -> Vec<u8> {
    let phnum = image.segments.len();
    let header_len = 64 + 56 * phnum;
    let mut out = vec![0u8; header_len];
    out[..4].copy_from_slice(b"\x7fELF");
    out[4] = 2;
    out[5] = 1;
    out[6] = 1;
    out[16..18].copy_from_slice(&2u16.to_le_bytes());
    out[18..20].copy_from_slice(&machine.to_le_bytes());
    out[20..24].copy_from_slice(&1u32.to_le_bytes());
    out[24..32].copy_from_slice(&image.entry.to_le_bytes());
    out[32..40].copy_from_slice(&64u64.to_le_bytes());
    out[52..54].copy_from_slice(&64u16.to_le_bytes());
    out[54..56].copy_from_slice(&56u16.to_le_bytes());
    out[56..58].copy_from_slice(&(phnum as u16).to_le_bytes());
    for (k, seg) in image.segments.iter().enumerate() {
        let offset = out.len() as u64;
        let ph = 64 + 56 * k;
        let flags = if seg.executable { 0b101 } else { 0b110 };
        let filesz = seg.bytes.len() as u64;
        out[ph..ph + 4].copy_from_slice(&PT_LOAD.to_le_bytes());
        out[ph + 4..ph + 8].copy_from_slice(&(flags as u32).to_le_bytes());
        out[ph + 8..ph + 16].copy_from_slice(&offset.to_le_bytes());
        out[ph + 16..ph + 24].copy_from_slice(&seg.vaddr.to_le_bytes());
        out[ph + 24..ph + 32].copy_from_slice(&seg.vaddr.to_le_bytes());
        out[ph + 32..ph + 40].copy_from_slice(&filesz.to_le_bytes());
        out[ph + 40..ph + 48].copy_from_slice(&(filesz + seg.zero_fill).to_le_bytes());
        out[ph + 48..ph + 56].copy_from_slice(&4u64.to_le_bytes());
        out.extend_from_slice(&seg.bytes);
    }
    out
}

/// Renders an image's code as a listing (the inverse of [`parse_listing`]).
pub fn to_listing(instructions: &[Instruction]) -> String {
    let mut s = String::new();
    for i in instructions {
        s.push_str(&format!("{:08x}: {:08x}  # {}\n", i.address, i.raw, i));
    }
    s
}
